use crate::autodiff::{AutodiffError, Tape, Tensor, Var};

use super::SummarizerError;

pub fn positional_encoding(d: usize, l: usize, dim: usize) -> f64 {
    let angle = d as f64 / 10000f64.powf(l as f64 / dim as f64);
    if l.is_multiple_of(2) {
        angle.sin()
    } else {
        angle.cos()
    }
}

/// `len × dim` matrix of [`positional_encoding`] values.
pub fn positional_matrix(len: usize, dim: usize) -> Tensor {
    let mut t = Tensor::zeros(len, dim);
    for d in 0..len {
        for l in 0..dim {
            t.set(d, l, positional_encoding(d, l, dim));
        }
    }
    t
}

/// Additive attention mask: `-inf` where query `i` may not look at key `j`.
/// Keys flagged in `key_pad` are hidden from every query; with `causal`,
/// keys after the query position are hidden too.
pub fn attention_mask(queries: usize, key_pad: &[bool], causal: bool) -> Tensor {
    let mut m = Tensor::zeros(queries, key_pad.len());
    for i in 0..queries {
        for (j, &pad) in key_pad.iter().enumerate() {
            if pad || (causal && j > i) {
                m.set(i, j, f64::NEG_INFINITY);
            }
        }
    }
    m
}

/// Projection matrices of one attention block, bound to a tape.
#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
}

pub struct Attention {
    pub output: Var,
    /// Per-head attention weights, `queries × keys`.
    pub weights: Vec<Var>,
}

/// Scaled dot-product attention split over `heads` heads, followed by the
/// output projection.
pub fn multi_head_attention(
    tape: &mut Tape,
    p: &AttentionVars,
    x_q: Var,
    x_kv: Var,
    mask: Option<&Tensor>,
    heads: usize,
) -> Result<Attention, SummarizerError> {
    let [nq, dim] = tape.value(x_q).shape();
    let [nk, dim_kv] = tape.value(x_kv).shape();
    if dim != dim_kv || dim % heads != 0 {
        return Err(AutodiffError::Shape {
            op: "multi_head_attention",
            left: [nq, dim],
            right: [nk, dim_kv],
        }
        .into());
    }
    if let Some(m) = mask {
        if m.shape() != [nq, nk] {
            return Err(AutodiffError::Shape {
                op: "attention mask",
                left: [nq, nk],
                right: m.shape(),
            }
            .into());
        }
        if let Some(row) = (0..nq).find(|&r| m.row(r).iter().all(|x| *x == f64::NEG_INFINITY)) {
            return Err(SummarizerError::Mask { row });
        }
    }
    let dh = dim / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = tape.matmul(x_q, p.wq)?;
    let k = tape.matmul(x_kv, p.wk)?;
    let v = tape.matmul(x_kv, p.wv)?;
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let kt = tape.transpose(kh)?;
        let s = tape.matmul(qh, kt)?;
        let mut s = tape.scale(s, scale)?;
        if let Some(m) = mask {
            s = tape.add_const(s, m)?;
        }
        let a = tape.softmax_rows(s)?;
        outs.push(tape.matmul(a, vh)?);
        weights.push(a);
    }
    let cat = if heads == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    let output = tape.matmul(cat, p.wo)?;
    Ok(Attention { output, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positional_values() {
        assert_eq!(positional_encoding(0, 4, 8), 0.0);
        assert_eq!(positional_encoding(0, 5, 8), 1.0);
        assert!((positional_encoding(3, 0, 64) - 3f64.sin()).abs() < 1e-15);
        assert!((positional_encoding(3, 0, 64) - 0.141120).abs() < 1e-6);
        let expect = (1.0 / 10000f64.powf(1.0 / 64.0)).cos();
        assert_eq!(positional_encoding(1, 1, 64), expect);
    }

    #[test]
    fn masks() {
        let m = attention_mask(3, &[false, false, true], true);
        let inf = f64::NEG_INFINITY;
        assert_eq!(m.row(0), &[0.0, inf, inf]);
        assert_eq!(m.row(1), &[0.0, 0.0, inf]);
        assert_eq!(m.row(2), &[0.0, 0.0, inf]);
    }

    fn identity_vars(tape: &mut Tape, dim: usize) -> AttentionVars {
        let i = tape.constant(Tensor::identity(dim));
        AttentionVars {
            wq: i,
            wk: i,
            wv: i,
            wo: i,
        }
    }

    #[test]
    fn two_by_two_single_head() {
        // Q = K = V = X with identity projections
        let mut tape = Tape::new();
        let p = identity_vars(&mut tape, 2);
        let x = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]));
        let att = multi_head_attention(&mut tape, &p, x, x, None, 1).unwrap();
        let s = 1.0 / 2f64.sqrt();
        // scores row 0: [1, 0] * s, row 1: [0, 4] * s
        let a0 = [1.0 / (1.0 + (-s).exp()), 0.0];
        let a0 = [a0[0], 1.0 - a0[0]];
        let e = (4.0 * s).exp();
        let a1 = [1.0 / (1.0 + e), e / (1.0 + e)];
        let w = tape.value(att.weights[0]);
        assert!((w.get(0, 0) - a0[0]).abs() < 1e-15 && (w.get(1, 1) - a1[1]).abs() < 1e-15);
        let out = tape.value(att.output);
        assert!((out.get(0, 0) - a0[0]).abs() < 1e-15);
        assert!((out.get(0, 1) - 2.0 * a0[1]).abs() < 1e-15);
        assert!((out.get(1, 0) - a1[0]).abs() < 1e-15);
        assert!((out.get(1, 1) - 2.0 * a1[1]).abs() < 1e-15);
    }

    #[test]
    fn single_position_passes_values_through() {
        let mut tape = Tape::new();
        let p = identity_vars(&mut tape, 4);
        let x = tape.constant(Tensor::row_vector(vec![0.3, -1.0, 2.0, 0.5]));
        let att = multi_head_attention(&mut tape, &p, x, x, None, 2).unwrap();
        assert_eq!(tape.value(att.output), tape.value(x));
    }

    #[test]
    fn fully_masked_row_is_an_error() {
        let mut tape = Tape::new();
        let p = identity_vars(&mut tape, 2);
        let x = tape.constant(Tensor::zeros(2, 2));
        let m = attention_mask(2, &[true, true], false);
        assert!(matches!(
            multi_head_attention(&mut tape, &p, x, x, Some(&m), 1),
            Err(SummarizerError::Mask { row: 0 })
        ));
    }
}
