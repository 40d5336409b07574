//! Post-norm transformer block (bidirectional multi-head self-attention and a
//! GELU feed-forward sublayer) over a `tokens × d` row-major buffer.

use crate::numerics::ops::{
    apply_mask, dropout_mask, gelu, gelu_grad, layer_norm, layer_norm_backward, softmax_in_place,
    LayerNormCache,
};
use crate::numerics::tensor::{add_into, matmul_a_bt, matmul_at_b_acc, matmul_into};
use crate::numerics::{GradBuf, ParamSet, Rng};

use super::layout::{BlockIds, LinearIds};
use super::{EncoderError, ModelConfig};

pub(crate) fn linear(x: &[f64], rows: usize, p: &ParamSet, ids: LinearIds) -> Vec<f64> {
    let w = &p[ids.weight];
    let (fan_in, fan_out) = (w.shape()[0], w.shape()[1]);
    let mut out = vec![0.0; rows * fan_out];
    matmul_into(x, w.data(), &mut out, rows, fan_in, fan_out);
    if let Some(b) = ids.bias {
        let b = p[b].data();
        for r in 0..rows {
            add_into(&mut out[r * fan_out..(r + 1) * fan_out], b);
        }
    }
    out
}

/// Accumulates weight/bias gradients; returns `dx` when `need_dx`.
pub(crate) fn linear_backward(
    x: &[f64],
    rows: usize,
    p: &ParamSet,
    ids: LinearIds,
    dy: &[f64],
    grads: &mut GradBuf,
    need_dx: bool,
) -> Option<Vec<f64>> {
    let w = &p[ids.weight];
    let (fan_in, fan_out) = (w.shape()[0], w.shape()[1]);
    matmul_at_b_acc(x, dy, grads.get_mut(ids.weight), rows, fan_in, fan_out);
    if let Some(b) = ids.bias {
        let gb = grads.get_mut(b);
        for r in 0..rows {
            add_into(gb, &dy[r * fan_out..(r + 1) * fan_out]);
        }
    }
    need_dx.then(|| {
        let mut dx = vec![0.0; rows * fan_in];
        matmul_a_bt(dy, w.data(), &mut dx, rows, fan_in, fan_out);
        dx
    })
}

#[derive(Debug, Clone)]
pub(crate) struct BlockCache {
    input: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `heads × T × T` attention weights.
    probs: Vec<f64>,
    context: Vec<f64>,
    attn_drop: Option<Vec<f64>>,
    attn_norm: LayerNormCache,
    hidden: Vec<f64>,
    ff_pre: Vec<f64>,
    ff_act: Vec<f64>,
    ff_drop: Option<Vec<f64>>,
    ff_norm: LayerNormCache,
}

pub(crate) fn block_forward(
    cfg: &ModelConfig,
    p: &ParamSet,
    ids: &BlockIds,
    x: Vec<f64>,
    t: usize,
    mut rng: Option<&mut Rng>,
) -> Result<(Vec<f64>, BlockCache), EncoderError> {
    let d = cfg.d;
    let heads = cfg.n_heads;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    let q = linear(&x, t, p, ids.query);
    let k = linear(&x, t, p, ids.key);
    let v = linear(&x, t, p, ids.value);

    let mut probs = vec![0.0; heads * t * t];
    let mut context = vec![0.0; t * d];
    for h in 0..heads {
        let off = h * dh;
        let ph = &mut probs[h * t * t..(h + 1) * t * t];
        for i in 0..t {
            let qi = &q[i * d + off..i * d + off + dh];
            let row = &mut ph[i * t..(i + 1) * t];
            for (j, s) in row.iter_mut().enumerate() {
                let kj = &k[j * d + off..j * d + off + dh];
                *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            softmax_in_place(row);
            let ci = &mut context[i * d + off..i * d + off + dh];
            for (j, &pij) in row.iter().enumerate() {
                let vj = &v[j * d + off..j * d + off + dh];
                for (c, &vv) in ci.iter_mut().zip(vj) {
                    *c += pij * vv;
                }
            }
        }
    }

    let mut attn = linear(&context, t, p, ids.attn_out);
    let attn_drop = dropout_mask(attn.len(), cfg.hidden_dropout, rng.as_deref_mut())?;
    if let Some(m) = &attn_drop {
        apply_mask(&mut attn, m);
    }
    add_into(&mut attn, &x);
    let (hidden, attn_norm) = layer_norm(
        &attn,
        d,
        p[ids.attn_norm.gain].data(),
        p[ids.attn_norm.bias].data(),
        cfg.ln_eps,
    );

    let ff_pre = linear(&hidden, t, p, ids.ff_in);
    let ff_act: Vec<f64> = ff_pre.iter().map(|&z| gelu(z)).collect();
    let mut ff = linear(&ff_act, t, p, ids.ff_out);
    let ff_drop = dropout_mask(ff.len(), cfg.hidden_dropout, rng)?;
    if let Some(m) = &ff_drop {
        apply_mask(&mut ff, m);
    }
    add_into(&mut ff, &hidden);
    let (out, ff_norm) = layer_norm(
        &ff,
        d,
        p[ids.ff_norm.gain].data(),
        p[ids.ff_norm.bias].data(),
        cfg.ln_eps,
    );

    Ok((
        out,
        BlockCache {
            input: x,
            q,
            k,
            v,
            probs,
            context,
            attn_drop,
            attn_norm,
            hidden,
            ff_pre,
            ff_act,
            ff_drop,
            ff_norm,
        },
    ))
}

/// Backward through one block. Returns the gradient with respect to its input.
pub(crate) fn block_backward(
    cfg: &ModelConfig,
    p: &ParamSet,
    ids: &BlockIds,
    cache: &BlockCache,
    t: usize,
    d_out: &[f64],
    grads: &mut GradBuf,
) -> Vec<f64> {
    let d = cfg.d;
    let heads = cfg.n_heads;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    // Feed-forward sublayer.
    let d_res2 = {
        let (g, b) = (ids.ff_norm.gain, ids.ff_norm.bias);
        let gain = p[g].data();
        let mut dgain = vec![0.0; d];
        let mut dbias = vec![0.0; d];
        let dx = layer_norm_backward(d_out, d, gain, &cache.ff_norm, &mut dgain, &mut dbias);
        add_into(grads.get_mut(g), &dgain);
        add_into(grads.get_mut(b), &dbias);
        dx
    };
    let mut d_hidden = d_res2.clone();
    let mut d_ff = d_res2;
    if let Some(m) = &cache.ff_drop {
        apply_mask(&mut d_ff, m);
    }
    let mut d_act = linear_backward(&cache.ff_act, t, p, ids.ff_out, &d_ff, grads, true)
        .expect("dx requested");
    for (g, &z) in d_act.iter_mut().zip(&cache.ff_pre) {
        *g *= gelu_grad(z);
    }
    let d_from_ff = linear_backward(&cache.hidden, t, p, ids.ff_in, &d_act, grads, true)
        .expect("dx requested");
    add_into(&mut d_hidden, &d_from_ff);

    // Attention sublayer.
    let d_res1 = {
        let (g, b) = (ids.attn_norm.gain, ids.attn_norm.bias);
        let gain = p[g].data();
        let mut dgain = vec![0.0; d];
        let mut dbias = vec![0.0; d];
        let dx = layer_norm_backward(&d_hidden, d, gain, &cache.attn_norm, &mut dgain, &mut dbias);
        add_into(grads.get_mut(g), &dgain);
        add_into(grads.get_mut(b), &dbias);
        dx
    };
    let mut d_input = d_res1.clone();
    let mut d_attn = d_res1;
    if let Some(m) = &cache.attn_drop {
        apply_mask(&mut d_attn, m);
    }
    let d_context = linear_backward(&cache.context, t, p, ids.attn_out, &d_attn, grads, true)
        .expect("dx requested");

    let mut dq = vec![0.0; t * d];
    let mut dk = vec![0.0; t * d];
    let mut dv = vec![0.0; t * d];
    let mut dp = vec![0.0; t];
    for h in 0..heads {
        let off = h * dh;
        let ph = &cache.probs[h * t * t..(h + 1) * t * t];
        for i in 0..t {
            let dci = &d_context[i * d + off..i * d + off + dh];
            let row = &ph[i * t..(i + 1) * t];
            for j in 0..t {
                let vj = &cache.v[j * d + off..j * d + off + dh];
                dp[j] = dci.iter().zip(vj).map(|(a, b)| a * b).sum();
                let dvj = &mut dv[j * d + off..j * d + off + dh];
                for (g, &c) in dvj.iter_mut().zip(dci) {
                    *g += row[j] * c;
                }
            }
            let weighted: f64 = row.iter().zip(&dp).map(|(a, b)| a * b).sum();
            for j in 0..t {
                let ds = row[j] * (dp[j] - weighted) * scale;
                if ds == 0.0 {
                    continue;
                }
                for c in 0..dh {
                    dq[i * d + off + c] += ds * cache.k[j * d + off + c];
                    dk[j * d + off + c] += ds * cache.q[i * d + off + c];
                }
            }
        }
    }
    for (ids, grad) in [(ids.query, &dq), (ids.key, &dk), (ids.value, &dv)] {
        let dx = linear_backward(&cache.input, t, p, ids, grad, grads, true).expect("dx requested");
        add_into(&mut d_input, &dx);
    }
    d_input
}
