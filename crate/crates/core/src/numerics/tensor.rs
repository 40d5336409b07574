use std::fmt;
use std::ops::{Index, IndexMut};

use super::NumericsError;

/// Dense row-major tensor of `f64` values.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, NumericsError> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || n != data.len() {
            return Err(NumericsError::Dimension(format!(
                "shape {:?} does not hold {} values",
                shape,
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Builds a `rows × cols` matrix from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(NumericsError::Dimension("ragged or empty rows".into()));
        }
        Ok(Self {
            shape: vec![rows.len(), cols],
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Size of the trailing axis.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    fn same_shape(&self, other: &Tensor, op: &str) -> Result<(), NumericsError> {
        if self.shape != other.shape {
            return Err(NumericsError::Dimension(format!(
                "{op}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Matrix product. A rank-1 right operand is treated as a column vector.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor, NumericsError> {
        if self.shape.len() != 2 {
            return Err(NumericsError::Dimension(format!(
                "matmul: left operand must be rank 2, got {:?}",
                self.shape
            )));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n, vector_rhs) = match rhs.shape.as_slice() {
            [k2] => (*k2, 1, true),
            [k2, n] => (*k2, *n, false),
            s => {
                return Err(NumericsError::Dimension(format!(
                    "matmul: right operand rank {}",
                    s.len()
                )))
            }
        };
        if k != k2 {
            return Err(NumericsError::Dimension(format!(
                "matmul: inner dims {k} and {k2}"
            )));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(&self.data, &rhs.data, &mut out, m, k, n);
        let shape = if vector_rhs { vec![m] } else { vec![m, n] };
        Ok(Tensor { shape, data: out })
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor, NumericsError> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor, NumericsError> {
        self.zip_with(rhs, "mul", |a, b| a * b)
    }

    pub fn maximum(&self, rhs: &Tensor) -> Result<Tensor, NumericsError> {
        self.zip_with(rhs, "maximum", f64::max)
    }

    fn zip_with(
        &self,
        rhs: &Tensor,
        op: &str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, NumericsError> {
        self.same_shape(rhs, op)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add_assign(&mut self, rhs: &Tensor) -> Result<(), NumericsError> {
        self.same_shape(rhs, "add_assign")?;
        add_into(&mut self.data, &rhs.data);
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Concatenates tensors along `axis`; all other axes must agree.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor, NumericsError> {
        let first = parts
            .first()
            .ok_or_else(|| NumericsError::Dimension("concat of nothing".into()))?;
        let rank = first.shape.len();
        if axis >= rank {
            return Err(NumericsError::Dimension(format!(
                "concat axis {axis} out of range for rank {rank}"
            )));
        }
        for p in parts {
            let ok = p.shape.len() == rank
                && p.shape
                    .iter()
                    .zip(&first.shape)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(NumericsError::Dimension(format!(
                    "concat: {:?} vs {:?} on axis {axis}",
                    p.shape, first.shape
                )));
            }
        }
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let mut shape = first.shape.clone();
        shape[axis] = parts.iter().map(|p| p.shape[axis]).sum();
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for p in parts {
                let block = p.shape[axis] * inner;
                data.extend_from_slice(&p.data[o * block..(o + 1) * block]);
            }
        }
        Ok(Tensor { shape, data })
    }
}

impl Index<usize> for Tensor {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for Tensor {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// `out[m×n] = a[m×k] · b[k×n]`, overwriting `out`.
pub fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[k×n] += aᵀ · g` where `a` is `m×k` and `g` is `m×n`.
pub fn matmul_at_b_acc(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

/// `out[m×k] = g · bᵀ` where `g` is `m×n` and `b` is `k×n`.
pub fn matmul_a_bt(g: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            out[i * k + p] = dot(grow, &b[p * n..(p + 1) * n]);
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
