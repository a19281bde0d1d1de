use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::config::RunConfig;
use super::train::{evaluate, train};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::{Arm, ModelConfig};
use crate::synth::{Dataset, Split};

pub const THREADS_ENV: &str = "PEMVC_THREADS";
pub const ABLATION_FILE: &str = "ablation.jsonl";

#[derive(Clone, Debug, PartialEq)]
pub struct AblationResult {
    /// One test-split report per (arm, seed), sorted by arm then seed.
    pub runs: Vec<MetricsReport>,
    /// One mean row per arm, in [`Arm::ALL`] order.
    pub means: Vec<MetricsReport>,
}

impl AblationResult {
    pub fn lines(&self) -> Vec<String> {
        self.runs.iter().chain(&self.means).map(MetricsReport::to_json_line).collect()
    }

    pub fn mean(&self, arm: Arm) -> Option<&MetricsReport> {
        self.means.iter().find(|r| r.arm == arm.as_str())
    }

    pub fn mean_auroc(&self, arm: Arm) -> Option<f64> {
        self.mean(arm).and_then(|r| r.auroc)
    }

    pub fn summary_table(&self) -> String {
        let f = |v: Option<f64>| v.map_or("   -  ".to_string(), |v| format!("{v:.4}"));
        let mut s = String::from("arm      AUROC   ACC     F1      Spec    Sens    PPV     NPV\n");
        for r in &self.means {
            writeln!(
                s,
                "{:<8} {}  {}  {}  {}  {}  {}  {}",
                r.arm,
                f(r.auroc),
                f(r.acc),
                f(r.f1),
                f(r.specificity),
                f(r.sensitivity),
                f(r.ppv),
                f(r.npv)
            )
            .unwrap();
        }
        s
    }
}

/// Worker count from `PEMVC_THREADS`, else the machine's parallelism.
pub fn worker_threads() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Usage(format!("{THREADS_ENV}={v} is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Trains and tests every arm for every seed. Runs are independent and
/// may execute in parallel; the result does not depend on the worker count.
pub fn ablate(ds: &Dataset, seeds: &[u64], base: &RunConfig, model: &ModelConfig, threads: usize) -> Result<AblationResult> {
    if seeds.is_empty() {
        return Err(Error::Usage("ablation needs at least one seed".into()));
    }
    let jobs: Vec<(Arm, u64)> = Arm::ALL.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    let mut runs: Vec<(Arm, u64, MetricsReport)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(arm, seed)| {
                let cfg = RunConfig {
                    arm,
                    seed,
                    ..base.clone()
                };
                let out = train(ds, &cfg, model)?;
                Ok((arm, seed, evaluate(&out.checkpoint, ds, Split::Test)?))
            })
            .collect::<Result<_>>()
    })?;
    runs.sort_by_key(|r| (r.0, r.1));
    let means = Arm::ALL
        .iter()
        .map(|&a| {
            let rs: Vec<MetricsReport> = runs.iter().filter(|r| r.0 == a).map(|r| r.2.clone()).collect();
            MetricsReport::mean(a.as_str(), Split::Test.as_str(), &rs)
        })
        .collect::<Result<_>>()?;
    Ok(AblationResult {
        runs: runs.into_iter().map(|r| r.2).collect(),
        means,
    })
}

/// Loads `base.data`, runs [`ablate`] with the default model, and writes
/// `ablation.jsonl` into `base.out`.
pub fn run_ablation(seeds: &[u64], base: &RunConfig) -> Result<AblationResult> {
    let ds = Dataset::load(&base.data)?;
    let result = ablate(&ds, seeds, base, &ModelConfig::default(), worker_threads()?)?;
    write_lines(&base.out, ABLATION_FILE, &result.lines())?;
    Ok(result)
}

pub(crate) fn write_lines(dir: &Path, file: &str, lines: &[String]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(file);
    let mut text = lines.join("\n");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
