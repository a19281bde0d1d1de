//! Runs one multi-view attention block on a random volume and shows that a
//! block with zeroed value maps is the identity.

use pemvc::mvcs::{make_views, MvcsBlock, MvcsConfig};
use pemvc::{ParamStore, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> pemvc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let shape = vec![1, 4, 6, 8, 10];
    let x = Tensor::<f64>::from_fn(shape.clone(), |_| StandardNormal.sample(&mut rng));

    let views = make_views(&x)?;
    for t in 0..3 {
        println!("view {t}: {:?}", views.views[t].shape());
    }

    let mut store = ParamStore::<f64>::new();
    let block = MvcsBlock::new(&mut store, "demo", MvcsConfig::new(4), &mut rng)?;
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let input = tape.constant(x.clone());
    let out = block.forward(&mut tape, &bound, input)?;
    println!("block output {:?}, max |out - x| = {:.3}", tape.value(out).shape(), tape.value(out).max_abs_diff(&x));

    let cfg = MvcsConfig {
        zero_value_init: true,
        ..MvcsConfig::new(4)
    };
    let mut store = ParamStore::<f64>::new();
    let block = MvcsBlock::new(&mut store, "identity", cfg, &mut rng)?;
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let input = tape.constant(x.clone());
    let out = block.forward(&mut tape, &bound, input)?;
    println!("zero-value block: max |out - x| = {:e}", tape.value(out).max_abs_diff(&x));
    Ok(())
}
