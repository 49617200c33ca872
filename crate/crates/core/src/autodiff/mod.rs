//! Minimal reverse-mode automatic differentiation over dense `f64` matrices.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_params, rel_error, GradCheckReport, REL_ERROR_FLOOR};
pub use params::{Adam, ParamId, ParamStore, Parameter};
pub use tape::{sigmoid, softmax_rows, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("graph error: {0}")]
    Graph(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row_vector(vec![0.0, 0.0]));
        let y = t.softmax_rows(x).unwrap();
        assert_eq!(t.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_survives_large_logits() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row_vector(vec![1000.0, 1000.0, f64::NEG_INFINITY]));
        let y = t.softmax_rows(x).unwrap();
        assert_eq!(t.value(y).data(), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn identity_matmul() {
        let mut t = Tape::new();
        let i = t.constant(Tensor::identity(2));
        let x = t.constant(Tensor::from_rows(&[vec![3.0, -1.0], vec![0.5, 2.0]]));
        let y = t.matmul(i, x).unwrap();
        assert_eq!(t.value(y), t.value(x));
    }

    #[test]
    fn sigmoid_value() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::scalar(0.5));
        let y = t.sigmoid(x).unwrap();
        assert!(close(t.value(y).item(), 0.6224593312018546));
    }

    #[test]
    fn gradient_of_sum() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row_vector(vec![1.0, 2.0, 3.0]));
        let s = t.sum_all(x).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn gradient_of_sum_of_squares() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row_vector(vec![1.0, 2.0]));
        let sq = t.mul(x, x).unwrap();
        let s = t.sum_all(sq).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(2, 3));
        let b = t.constant(Tensor::zeros(2, 3));
        assert_eq!(
            t.matmul(a, b),
            Err(AutodiffError::Shape {
                op: "matmul",
                left: [2, 3],
                right: [2, 3]
            })
        );
    }

    #[test]
    fn second_backward_and_foreign_vars_are_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(1.0));
        let y = t.scale(x, 2.0).unwrap();
        t.backward(y).unwrap();
        assert!(matches!(t.backward(y), Err(AutodiffError::Graph(_))));
        let mut other = Tape::new();
        assert!(other.sigmoid(x).is_err());
    }

    #[test]
    fn mlp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w1 = Tensor::uniform(4, 5, 0.8, &mut rng);
        let w2 = Tensor::uniform(5, 3, 0.8, &mut rng);
        let b = Tensor::uniform(1, 5, 0.5, &mut rng);
        let x = Tensor::uniform(3, 4, 1.0, &mut rng);
        let report = grad_check(
            |t, x| {
                let w1 = t.constant(w1.clone());
                let w2 = t.constant(w2.clone());
                let b = t.constant(b.clone());
                let h = t.matmul(x, w1)?;
                let h = t.add_row(h, b)?;
                let h = t.tanh(h)?;
                let o = t.matmul(h, w2)?;
                t.cross_entropy(o, &[Some(0), None, Some(2)])
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::uniform(3, 4, 1.0, &mut rng);
        let other = Tensor::uniform(3, 4, 1.0, &mut rng);
        let gamma = Tensor::uniform(1, 4, 1.0, &mut rng);
        let mask = Tensor::uniform(3, 4, 1.0, &mut rng);
        let weights = Tensor::uniform(3, 4, 1.0, &mut rng);
        let report = grad_check(
            |t, x| {
                let o = t.constant(other.clone());
                let g = t.constant(gamma.clone());
                let w = t.constant(weights.clone());
                let a = t.add(x, o)?;
                let a = t.sub(a, x)?;
                let a = t.mul(a, x)?;
                let a = t.add_const(a, &mask)?;
                let s = t.sigmoid(x)?;
                let s = t.log(s)?;
                let r = t.relu(x)?;
                let c = t.clamp(x, -0.5, 0.5)?;
                let sm = t.softmax_rows(x)?;
                let cat = t.concat_cols(&[a, s])?;
                let left = t.slice_cols(cat, 2, 4)?;
                let rows = t.concat_rows(&[r, c])?;
                let picked = t.gather_rows(rows, &[0, 4, 2])?;
                let tr = t.transpose(sm)?;
                let tr = t.transpose(tr)?;
                let ln = t.layer_norm(x, g, g, 1e-6)?;
                let mixed = t.add(left, picked)?;
                let mixed = t.add(mixed, tr)?;
                let mixed = t.add(mixed, ln)?;
                let mixed = t.mul(mixed, w)?;
                let col = t.sum(mixed, 0)?;
                let row = t.sum(mixed, 1)?;
                let c1 = t.mean_all(col)?;
                let c2 = t.sum_all(row)?;
                let tot = t.add(c1, c2)?;
                t.add_scalar(tot, 1.0)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn params_are_shared_within_a_tape() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::row_vector(vec![1.0, -2.0]));
        let mut t = Tape::new();
        let a = t.param(&store, id);
        let b = t.param(&store, id);
        assert_eq!(a, b);
        let p = t.mul(a, b).unwrap();
        let s = t.sum_all(p).unwrap();
        t.backward(s).unwrap();
        t.accumulate_param_grads(&mut store);
        assert_eq!(store.get(id).grad.data(), &[2.0, -4.0]);
    }

    #[test]
    fn frozen_params_get_no_gradient_and_no_update() {
        let mut store = ParamStore::new();
        let id = store.add("enc.w", Tensor::scalar(3.0));
        store.set_frozen("enc.", true);
        let mut t = Tape::new();
        let w = t.param(&store, id);
        let s = t.mul(w, w).unwrap();
        t.backward(s).unwrap();
        t.accumulate_param_grads(&mut store);
        let mut adam = Adam::new(0.1);
        adam.step(&mut store);
        assert_eq!(store.get(id).value.item(), 3.0);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::row_vector(vec![5.0, -3.0]));
        let mut adam = Adam::new(0.1);
        for _ in 0..500 {
            store.zero_grads();
            let mut t = Tape::new();
            let x = t.param(&store, id);
            let sq = t.mul(x, x).unwrap();
            let l = t.sum_all(sq).unwrap();
            t.backward(l).unwrap();
            t.accumulate_param_grads(&mut store);
            adam.step(&mut store);
        }
        assert!(store.get(id).value.norm_sq() < 1e-4);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::scalar(1.0));
        store.get_mut(id).grad = Tensor::scalar(0.3);
        let mut adam = Adam::new(0.01);
        adam.step(&mut store);
        assert!((store.get(id).value.item() - 0.99).abs() < 1e-9);
    }
}
