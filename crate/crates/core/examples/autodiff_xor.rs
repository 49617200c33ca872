//! Trains a two-layer network on XOR with the tape and Adam, then checks
//! its gradients against finite differences.
//!
//! cargo run --example autodiff_xor

use basts::autodiff::{grad_check_params, Adam, AutodiffError, ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn loss(tape: &mut Tape, store: &ParamStore, x: &Tensor, y: &Tensor) -> Result<Var, AutodiffError> {
    let w1 = tape.param_by_name(store, "w1");
    let b1 = tape.param_by_name(store, "b1");
    let w2 = tape.param_by_name(store, "w2");
    let b2 = tape.param_by_name(store, "b2");
    let x = tape.constant(x.clone());
    let h = tape.matmul(x, w1)?;
    let h = tape.add_row(h, b1)?;
    let h = tape.tanh(h)?;
    let o = tape.matmul(h, w2)?;
    let o = tape.add_row(o, b2)?;
    let p = tape.sigmoid(o)?;
    let d = tape.add_const(p, &y.map(|v| -v))?;
    let sq = tape.mul(d, d)?;
    tape.mean_all(sq)
}

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    store.add("w1", Tensor::xavier(2, 8, &mut rng));
    store.add("b1", Tensor::zeros(1, 8));
    store.add("w2", Tensor::xavier(8, 1, &mut rng));
    store.add("b2", Tensor::zeros(1, 1));
    let x = Tensor::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
    let y = Tensor::from_rows(&[vec![0.0], vec![1.0], vec![1.0], vec![0.0]]);

    let check = grad_check_params(&mut store, None, |t, s| loss(t, s, &x, &y), 1e-5)?;
    println!("gradient check: max relative error {:.2e} over {} entries", check.max_rel_error, check.checked);

    let mut adam = Adam::new(0.05);
    for step in 0..=500 {
        let mut tape = Tape::new();
        let l = loss(&mut tape, &store, &x, &y)?;
        if step % 100 == 0 {
            println!("step {step:>3}: loss {:.6}", tape.value(l).item());
        }
        tape.backward(l)?;
        store.zero_grads();
        tape.accumulate_param_grads(&mut store);
        adam.step(&mut store);
    }
    Ok(())
}
