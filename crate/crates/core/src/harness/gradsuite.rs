//! 64-bit finite-difference checks over every differentiable unit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autograd::{Fault, Mode, Tape, Var};
use crate::backbone::{Backbone, BackboneConfig};
use crate::cmaf::{Cmaf, CmafConfig};
use crate::emr::{EmrConfig, EmrNet};
use crate::error::{Error, Result};
use crate::gradcheck::{weighted_mean, weighted_sum, GradCheck, GradReport};
use crate::mvcs::{MvcsBlock, MvcsConfig};
use crate::params::{Bound, ParamStore};
use crate::tensor::Tensor;

pub const TOLERANCE: f64 = 1e-4;

pub const UNITS: [&str; 20] = [
    "matmul",
    "add",
    "mul",
    "add_bias",
    "scale",
    "relu",
    "dropout",
    "softmax",
    "permute",
    "transpose",
    "reshape",
    "conv3d",
    "sum",
    "mean_trailing",
    "concat",
    "bce",
    "mvcs",
    "cmaf",
    "image_head",
    "emr_head",
];

#[derive(Clone, Debug, PartialEq)]
pub struct UnitResult {
    pub name: &'static str,
    pub report: GradReport,
    pub passed: bool,
}

fn randn(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| StandardNormal.sample(&mut rng))
}

fn labels(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i % 2) as f64).collect()
}

/// Inputs are `data` followed by every tensor of `store`; `f` gets the data
/// handles and a [`Bound`] over the rest.
fn check_module<F>(check: &GradCheck, data: Vec<Tensor<f64>>, store: &ParamStore<f64>, f: F) -> Result<GradReport>
where
    F: Fn(&mut Tape<f64>, &[Var], &Bound) -> Result<Var>,
{
    let n = data.len();
    let mut inputs = data;
    inputs.extend(store.iter().map(|(_, t)| t.clone()));
    check.run(&inputs, |tape, vars| {
        let bound = Bound::from_vars(vars[n..].to_vec());
        f(tape, &vars[..n], &bound)
    })
}

fn run_unit(name: &str, check: &GradCheck) -> Result<GradReport> {
    let ws = weighted_sum;
    match name {
        "matmul" => check.run(
            &[randn(vec![2, 3, 4], 1), randn(vec![4, 2], 2), randn(vec![2, 4, 3], 3)],
            |t, v| {
                let broadcast = t.matmul(v[0], v[1])?;
                let batched = t.matmul(v[0], v[2])?;
                let a = ws(t, broadcast, 1)?;
                let b = ws(t, batched, 2)?;
                t.add(a, b)
            },
        ),
        "add" => check.run(&[randn(vec![3, 4], 4), randn(vec![3, 4], 5)], |t, v| {
            let y = t.add(v[0], v[1])?;
            ws(t, y, 3)
        }),
        "mul" => check.run(&[randn(vec![3, 4], 6), randn(vec![3, 4], 7)], |t, v| {
            let y = t.mul(v[0], v[1])?;
            ws(t, y, 4)
        }),
        "add_bias" => check.run(&[randn(vec![2, 3, 4], 8), randn(vec![4], 9)], |t, v| {
            let y = t.add_bias(v[0], v[1])?;
            ws(t, y, 5)
        }),
        "scale" => check.run(&[randn(vec![5], 10)], |t, v| {
            let y = t.scale(v[0], 1.7)?;
            ws(t, y, 6)
        }),
        "relu" => check.run(&[randn(vec![4, 5], 11)], |t, v| {
            let y = t.relu(v[0])?;
            ws(t, y, 7)
        }),
        "dropout" => check.run(&[randn(vec![20], 12)], |t, v| {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let y = t.dropout(v[0], 0.3, Mode::Train, &mut rng)?;
            ws(t, y, 8)
        }),
        "softmax" => check.run(&[randn(vec![3, 5], 13)], |t, v| {
            let y = t.softmax_rows(v[0])?;
            ws(t, y, 9)
        }),
        "permute" => check.run(&[randn(vec![2, 3, 4], 14)], |t, v| {
            let y = t.permute(v[0], &[2, 0, 1])?;
            ws(t, y, 10)
        }),
        "transpose" => check.run(&[randn(vec![2, 3, 4], 15)], |t, v| {
            let y = t.transpose(v[0])?;
            ws(t, y, 11)
        }),
        "reshape" => check.run(&[randn(vec![2, 6], 16)], |t, v| {
            let y = t.reshape(v[0], &[3, 4])?;
            ws(t, y, 12)
        }),
        "conv3d" => check.run(
            &[randn(vec![2, 2, 4, 5, 3], 17), randn(vec![3, 2, 3, 3, 3], 18), randn(vec![3], 19)],
            |t, v| {
                let a = t.conv3d(v[0], v[1], Some(v[2]), 1, [1, 0, 1])?;
                let b = t.conv3d(v[0], v[1], None, 2, [1, 1, 1])?;
                let a = ws(t, a, 13)?;
                let b = ws(t, b, 14)?;
                t.add(a, b)
            },
        ),
        "sum" => check.run(&[randn(vec![3, 2], 20)], |t, v| t.sum(v[0])),
        "mean_trailing" => check.run(&[randn(vec![2, 3, 4], 21)], |t, v| {
            let y = t.mean_trailing(v[0], 1)?;
            ws(t, y, 15)
        }),
        "concat" => check.run(&[randn(vec![2, 3], 22), randn(vec![2, 2], 23)], |t, v| {
            let y = t.concat_last(&[v[0], v[1]])?;
            ws(t, y, 16)
        }),
        "bce" => check.run(&[randn(vec![6], 24)], |t, v| t.bce_with_logits(v[0], &labels(6))),
        "mvcs" => {
            let mut store = ParamStore::<f64>::new();
            let block = MvcsBlock::new(&mut store, "m", MvcsConfig::new(2), &mut ChaCha8Rng::seed_from_u64(25))?;
            // Key biases have an exactly zero gradient (softmax shift
            // invariance); a small objective keeps the difference's roundoff
            // under the 1e-8 denominator floor.
            let x = randn(vec![1, 2, 4, 4, 4], 26);
            check_module(check, vec![scaled(x, 0.2)], &store, |t, v, b| {
                let y = block.forward(t, b, v[0])?;
                weighted_mean(t, y, 17)
            })
        }
        "cmaf" => {
            let mut store = ParamStore::<f64>::new();
            let cfg = CmafConfig {
                common_dim: 6,
                tokens: 3,
                token_dim: 2,
                hidden: 5,
                ..CmafConfig::default()
            };
            let cmaf = Cmaf::new(&mut store, cfg, 4, 5, &mut ChaCha8Rng::seed_from_u64(27))?;
            let data = vec![randn(vec![2, 4], 28), randn(vec![2, 5], 29)];
            check_module(check, data, &store, |t, v, b| {
                let mut rng = ChaCha8Rng::seed_from_u64(30);
                let out = cmaf.forward(t, b, v[0], v[1], Mode::Train, &mut rng)?;
                t.bce_with_logits(out.logit, &labels(2))
            })
        }
        "image_head" => {
            let mut store = ParamStore::<f64>::new();
            let cfg = BackboneConfig {
                stem_channels: 2,
                stage_channels: vec![2, 3],
                stage_strides: vec![1, 2],
                mvcs_after_stage: vec![true, false],
                feature_dim: 3,
                mvcs_zero_value_init: false,
                ..BackboneConfig::default()
            };
            let net = Backbone::new(&mut store, cfg, &mut ChaCha8Rng::seed_from_u64(31))?;
            check_module(check, vec![randn(vec![2, 1, 4, 4, 4], 32)], &store, |t, v, b| {
                let out = net.forward(t, b, v[0])?;
                t.bce_with_logits(out.logit, &labels(2))
            })
        }
        "emr_head" => {
            let mut store = ParamStore::<f64>::new();
            let cfg = EmrConfig {
                k: 3,
                embed_dim: 4,
                hidden: 4,
                feature_dim: 3,
                ..EmrConfig::default()
            };
            let net = EmrNet::new(&mut store, cfg, &mut ChaCha8Rng::seed_from_u64(33))?;
            check_module(check, vec![randn(vec![3, 3], 34)], &store, |t, v, b| {
                let mut rng = ChaCha8Rng::seed_from_u64(35);
                let out = net.forward(t, b, v[0], Mode::Train, &mut rng)?;
                t.bce_with_logits(out.logit, &labels(3))
            })
        }
        other => Err(Error::Usage(format!("unknown gradcheck unit `{other}`; known: all, {}", UNITS.join(", ")))),
    }
}

fn scaled(mut t: Tensor<f64>, c: f64) -> Tensor<f64> {
    t.data_mut().iter_mut().for_each(|v| *v *= c);
    t
}

/// Runs one unit or (`"all"`) every unit. Failing units are reported, not
/// raised; see [`all_passed`].
pub fn run_gradcheck(scope: &str, fault: Option<Fault>) -> Result<Vec<UnitResult>> {
    let check = GradCheck {
        fault,
        ..GradCheck::default()
    };
    let names: Vec<&'static str> = if scope == "all" {
        UNITS.to_vec()
    } else {
        match UNITS.iter().find(|&&u| u == scope) {
            Some(&u) => vec![u],
            None => return Err(Error::Usage(format!("unknown gradcheck unit `{scope}`; known: all, {}", UNITS.join(", ")))),
        }
    };
    names
        .into_iter()
        .map(|name| {
            let report = run_unit(name, &check)?;
            let passed = report.passes(TOLERANCE);
            Ok(UnitResult { name, report, passed })
        })
        .collect()
}

pub fn all_passed(results: &[UnitResult]) -> bool {
    results.iter().all(|r| r.passed)
}

pub fn format_table(results: &[UnitResult]) -> String {
    let mut s = format!("{:<14} {:>12} {:>7} {:>7}  result\n", "unit", "max rel err", "probed", "skipped");
    for r in results {
        s.push_str(&format!(
            "{:<14} {:>12.3e} {:>7} {:>7}  {}\n",
            r.name,
            r.report.max_rel_error,
            r.report.probed,
            r.report.skipped,
            if r.passed { "pass" } else { "FAIL" }
        ));
    }
    s
}
