mod common;

use pemvc::emr::{zscore_normalize, TabularFrame};
use pemvc::metrics::roc_auc;
use pemvc::mvcs::make_views;
use pemvc::synth::{split_patients, GenConfig, Split};
use pemvc::tensor::inverse_permutation;
use pemvc::{Tape, Tensor};
use proptest::prelude::*;

fn shape5() -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(1usize..4, 5)
}

fn axes5() -> impl Strategy<Value = Vec<usize>> {
    Just((0..5).collect::<Vec<usize>>()).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_stochastic(rows in 1usize..5, cols in 1usize..7, seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let x = Tensor::new(vec![rows, cols], common::randn(rows * cols, &mut r).iter().map(|v| v * 30.0).collect()).unwrap();
        let mut tape = Tape::<f64>::new();
        let v = tape.constant(x);
        let s = tape.softmax_rows(v).unwrap();
        for row in tape.value(s).data().chunks(cols) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn permute_then_inverse_is_identity(shape in shape5(), axes in axes5()) {
        let n: usize = shape.iter().product();
        let x = Tensor::<f64>::from_fn(shape, |i| i as f64);
        let back = x.permute(&axes).unwrap().permute(&inverse_permutation(&axes)).unwrap();
        prop_assert_eq!(back, x.clone());
        prop_assert_eq!(x.data().len(), n);
    }

    #[test]
    fn views_unfold_to_input(shape in shape5()) {
        let x = Tensor::<f64>::from_fn(shape.clone(), |i| (i as f64).sin());
        let vs = make_views(&x).unwrap();
        for t in 0..3 {
            prop_assert_eq!(vs.views[t].numel(), x.numel());
            prop_assert_eq!(vs.unfold(t, &vs.views[t]).unwrap(), x.clone());
        }
    }

    #[test]
    fn auroc_ignores_monotone_rescaling(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let (scores, labels) = common::criteria::random_instance(&mut r);
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        let a = roc_auc(&scores, &labels).unwrap();
        let b = roc_auc(&warped, &labels).unwrap();
        prop_assert_eq!(a, b);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        if let (Some(a), Some(c)) = (a, roc_auc(&flipped, &labels).unwrap()) {
            prop_assert!((a + c - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zscore_fit_rows_are_standardized(n in 3usize..30, cols in 1usize..5, seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let values: Vec<f64> = common::randn(n * cols, &mut r).iter().map(|v| 4.0 * v + 2.0).collect();
        let frame = TabularFrame::new(
            (0..cols).map(|c| format!("c{c}")).collect(),
            (0..n).map(|i| format!("p{i}")).collect(),
            values,
        ).unwrap();
        let fit: Vec<usize> = (0..n).filter(|i| i % 3 != 0).collect();
        let (z, _) = zscore_normalize(&frame, &fit).unwrap();
        let m = fit.len() as f64;
        for c in 0..cols {
            let mean = fit.iter().map(|&i| z.get(i, c)).sum::<f64>() / m;
            let var = fit.iter().map(|&i| (z.get(i, c) - mean).powi(2)).sum::<f64>() / m;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn splits_partition_patients(n in 3usize..200, seed in any::<u64>()) {
        let mut ds = pemvc::synth::generate_dataset(&GenConfig {
            n_patients: n,
            dims: [1, 1, 1, 1],
            seed,
            ..GenConfig::default()
        }).unwrap();
        split_patients(&mut ds, (0.8, 0.1, 0.1), seed).unwrap();
        let counts = Split::ALL.map(|s| ds.indices(s).len());
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        prop_assert_eq!(counts[1], n / 10);
        prop_assert_eq!(counts[2], n / 10);
    }
}
