//! Fuses a batch of random image and tabular features and prints the
//! per-token match degrees alongside the fused logits.

use pemvc::cmaf::{Cmaf, CmafConfig};
use pemvc::{Mode, ParamStore, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> pemvc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (batch, image_dim, emr_dim) = (3, 64, 64);
    let mut randn = |shape: Vec<usize>| Tensor::<f64>::from_fn(shape, |_| StandardNormal.sample(&mut rng));
    let img = randn(vec![batch, image_dim]);
    let emr = randn(vec![batch, emr_dim]);

    let mut store = ParamStore::<f64>::new();
    let mut init = ChaCha8Rng::seed_from_u64(6);
    let cmaf = Cmaf::new(&mut store, CmafConfig::default(), image_dim, emr_dim, &mut init)?;

    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let (x, y) = (tape.constant(img), tape.constant(emr));
    let out = cmaf.forward(&mut tape, &bound, x, y, Mode::Eval, &mut init)?;

    let d = out.degrees;
    println!("S {:?}  T {:?}  beta {:?}  rho {:?}", tape.shape(d.s), tape.shape(d.t), tape.shape(d.beta), tape.shape(d.rho));
    // each row of beta is a distribution over the other modality's tokens
    let beta = tape.value(d.beta);
    let tokens = tape.shape(d.beta)[2];
    for b in 0..batch {
        let rows = &beta.data()[b * tokens * tokens..(b + 1) * tokens * tokens];
        let picks: Vec<usize> = rows
            .chunks(tokens)
            .map(|r| (0..tokens).fold(0, |best, j| if r[j] > r[best] { j } else { best }))
            .collect();
        println!("sample {b}: strongest match per token {picks:?}, logit {:.4}", tape.value(out.logit).data()[b]);
    }
    Ok(())
}
