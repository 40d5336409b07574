use std::collections::HashMap;
use std::ops::{Index, IndexMut};

use super::{NumericsError, Tensor};

/// Handle into a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Ordered collection of uniquely named parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
    by_name: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, value: Tensor) -> Result<ParamId, NumericsError> {
        if self.by_name.contains_key(name) {
            return Err(NumericsError::Config(format!(
                "duplicate parameter name `{name}`"
            )));
        }
        let id = self.params.len();
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter {
            name: name.to_string(),
            value,
            grad,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn param(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    /// Total number of scalar values.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// A zeroed gradient buffer laid out like this set.
    pub fn grad_buf(&self) -> GradBuf {
        GradBuf {
            grads: self
                .params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect(),
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Overwrites every parameter's `grad` with the buffer contents.
    pub fn set_grads(&mut self, buf: GradBuf) {
        assert_eq!(buf.grads.len(), self.params.len(), "gradient layout mismatch");
        for (p, g) in self.params.iter_mut().zip(buf.grads) {
            p.grad = g;
        }
    }
}

impl Index<ParamId> for ParamSet {
    type Output = Tensor;
    fn index(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }
}

impl IndexMut<ParamId> for ParamSet {
    fn index_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }
}

/// Gradient accumulator with the same layout as a [`ParamSet`].
///
/// Workers accumulate into private buffers which are then summed in a fixed
/// order, so the result never depends on thread scheduling.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuf {
    grads: Vec<Tensor>,
}

impl GradBuf {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        self.grads[id.0].data_mut()
    }

    pub fn merge(&mut self, other: &GradBuf) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            super::tensor::add_into(a.data_mut(), b.data());
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.grads.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut ps = ParamSet::new();
        ps.register("w", Tensor::zeros(&[2])).unwrap();
        assert!(ps.register("w", Tensor::zeros(&[3])).is_err());
        assert_eq!(ps.id("w"), Some(ParamId(0)));
        assert_eq!(ps.id("x"), None);
    }

    #[test]
    fn grads_follow_value_shape() {
        let mut ps = ParamSet::new();
        let id = ps.register("w", Tensor::zeros(&[2, 3])).unwrap();
        assert_eq!(ps.param(id).grad.shape(), &[2, 3]);
        let mut buf = ps.grad_buf();
        buf.get_mut(id)[4] = 1.5;
        let mut other = ps.grad_buf();
        other.get_mut(id)[4] = 0.5;
        buf.merge(&other);
        ps.set_grads(buf);
        assert_eq!(ps.param(id).grad[4], 2.0);
    }
}
