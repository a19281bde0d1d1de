mod common;

use common::criteria;
use common::*;
use pemvc::mvcs::{channel_attention, dimensional_attention, qkv_project, spatial_attention, view_on_tape, MvcsBlock, MvcsConfig};
use pemvc::{ParamStore, Tape, Tensor};

#[test]
fn block_matches_straight_line_sum() {
    criteria::mvcs_equivalence().unwrap();
}

#[test]
fn block_matches_oracle_on_uneven_extents() {
    // distinct D, H, W catch any mixed-up fold axis
    let (gap, rows) = criteria::mvcs_oracle_gap([2, 3, 2, 3, 4], 5);
    assert!(gap < 1e-8, "{gap}");
    assert!(rows < 1e-12);
}

#[test]
fn each_path_matches_its_oracle() {
    let dims = [1, 2, 3, 2, 4];
    let mut r = rng(9);
    let mut store = ParamStore::<f64>::new();
    let cfg = MvcsConfig {
        residual: false,
        ..MvcsConfig::new(2)
    };
    let block = MvcsBlock::new(&mut store, "blk", cfg, &mut r).unwrap();
    criteria::randomize(&mut store, &mut r, 0.5);
    let x = randn(dims.iter().product(), &mut r);
    let (total, _) = mvcs_oracle(&Vol { dims, data: &x }, &store, "blk");

    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let xv = tape.constant(Tensor::new(dims.to_vec(), x.clone()).unwrap());
    let mut sum = vec![0.0; x.len()];
    for t in 0..3 {
        let view = view_on_tape(&mut tape, xv, t).unwrap();
        let triple = qkv_project(&mut tape, view, &block.qkv_weights(&bound, t)).unwrap();
        let s = spatial_attention(&mut tape, &triple, false).unwrap();
        let c = channel_attention(&mut tape, &triple, false).unwrap();
        for v in [s, c] {
            let back = pemvc::mvcs::unview_on_tape(&mut tape, v, t, dims).unwrap();
            sum.iter_mut().zip(tape.value(back).data()).for_each(|(a, b)| *a += b);
        }
        let d = dimensional_attention(&mut tape, xv, &block.depth_weights(&bound, t), t, false).unwrap();
        sum.iter_mut().zip(tape.value(d).data()).for_each(|(a, b)| *a += b);
    }
    assert!(max_abs_diff(&sum, &total) < 1e-10);
}

#[test]
fn cross_attention_matches_double_loops() {
    criteria::cross_equivalence().unwrap();
}

#[test]
fn metrics_match_pair_counting() {
    criteria::metrics_oracle().unwrap();
}
