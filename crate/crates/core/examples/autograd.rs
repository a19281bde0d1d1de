//! Fits a logistic regression with the tape and a parameter store.

use pemvc::{ParamStore, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> pemvc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 64;
    let xs: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels: Vec<f64> = xs.chunks(2).map(|p| f64::from(u8::from(2.0 * p[0] - p[1] > 0.0))).collect();
    let x = Tensor::<f64>::from_f64(vec![n, 2], &xs)?;

    let mut store = ParamStore::<f64>::new();
    store.add_zeros("w", vec![2, 1]);
    store.add_zeros("b", vec![1]);

    for step in 0..=200 {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let input = tape.constant(x.clone());
        let z = tape.affine(input, bound.vars()[0], bound.vars()[1])?;
        let z = tape.reshape(z, &[n])?;
        let loss = tape.bce_with_logits(z, &labels)?;
        if step % 50 == 0 {
            println!("step {step:>3}: loss {:.4}", tape.value(loss).data()[0]);
        }
        tape.backward(loss)?;
        store.zero_grads();
        store.absorb_grads(&tape, &bound)?;
        store.sgd_step(1.0)?;
    }
    let w = store.by_name("w").expect("registered above").data();
    let b = store.by_name("b").expect("registered above").data()[0];
    let correct = xs
        .chunks(2)
        .zip(&labels)
        .filter(|(p, &y)| f64::from(u8::from(w[0] * p[0] + w[1] * p[1] + b > 0.0)) == y)
        .count();
    println!("w = [{:.2}, {:.2}], b = {b:.2}, train accuracy {correct}/{n}", w[0], w[1]);
    Ok(())
}
