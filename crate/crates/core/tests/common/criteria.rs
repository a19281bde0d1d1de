//! One check per acceptance criterion. Each returns a one-line detail on
//! success and the reason on failure.

#![allow(dead_code)]

use std::path::Path;
use std::time::Instant;

use pemvc::cmaf::{Cmaf, CmafConfig};
use pemvc::emr::{drop_zero_variance, zscore_normalize, EmrConfig, EmrPipeline};
use pemvc::harness::{self, Checkpoint, RunConfig};
use pemvc::metrics::{roc_auc, Confusion, MetricsReport};
use pemvc::model::{Arm, ModelConfig};
use pemvc::mvcs::{MvcsBlock, MvcsConfig};
use pemvc::synth::{self, ColumnRole, Dataset, GenConfig, Split};
use pemvc::{Error, ParamStore, Tape, Tensor};
use rand::Rng;

use super::*;

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s(e: Error) -> String {
    e.to_string()
}

pub fn readme_text() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md");
    std::fs::read_to_string(&path).unwrap_or_default()
}

/// Published reference figures are quoted and marked as not reproducible.
pub fn disclosure() -> Check {
    let text = readme_text();
    ensure(!text.is_empty(), || "README.md missing".into())?;
    for figure in ["0.941", "0.902", "0.906"] {
        ensure(text.contains(figure), || format!("README does not quote {figure}"))?;
    }
    let lower = text.to_lowercase();
    ensure(lower.contains("not reproducible"), || "README does not state the figures are not reproducible".into())?;
    Ok("reference figures quoted as context only".into())
}

/// Fills every parameter (biases included) with standard normals.
pub fn randomize(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng, scale: f64) {
    for (_, t) in store.iter_mut() {
        t.data_mut().iter_mut().for_each(|v| {
            let z: f64 = StandardNormal.sample(rng);
            *v = scale * z;
        });
    }
}

/// Largest deviation between the block and the straight-line oracle over
/// `trials` random inputs of shape `dims`.
pub fn mvcs_oracle_gap(dims: [usize; 5], trials: u64) -> (f64, f64) {
    let mut worst = 0.0f64;
    let mut worst_row = 0.0f64;
    for trial in 0..trials {
        let mut r = rng(1000 + trial);
        let mut store = ParamStore::<f64>::new();
        let cfg = MvcsConfig {
            residual: false,
            ..MvcsConfig::new(dims[1])
        };
        let block = MvcsBlock::new(&mut store, "blk", cfg, &mut r).unwrap();
        randomize(&mut store, &mut r, 0.5);
        let n: usize = dims.iter().product();
        let x = randn(n, &mut r);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let xv = tape.constant(Tensor::new(dims.to_vec(), x.clone()).unwrap());
        let y = block.forward(&mut tape, &bound, xv).unwrap();
        let (expect, maps) = mvcs_oracle(&Vol { dims, data: &x }, &store, "blk");
        worst = worst.max(max_abs_diff(tape.value(y).data(), &expect));
        for m in maps.spatial.iter().chain(&maps.channel).chain(&maps.dimensional).flatten() {
            for row in m {
                worst_row = worst_row.max((row.iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    (worst, worst_row)
}

pub fn mvcs_equivalence() -> Check {
    let t = Instant::now();
    let (gap, rows) = mvcs_oracle_gap([1, 2, 3, 3, 3], 100);
    let secs = t.elapsed().as_secs_f64();
    ensure(gap < 1e-8, || format!("max abs diff {gap:.3e} ≥ 1e-8"))?;
    ensure(rows < 1e-6, || format!("attention row sum off by {rows:.3e}"))?;
    ensure(secs < 10.0, || format!("took {secs:.1} s (limit 10 s)"))?;
    Ok(format!("100 trials, max abs diff {gap:.2e}, {secs:.2} s"))
}

fn param_pair(store: &ParamStore<f64>, name: &str) -> (Vec<f64>, Vec<f64>) {
    (
        store.by_name(&format!("cmaf.{name}.w")).unwrap().data().to_vec(),
        store.by_name(&format!("cmaf.{name}.b")).unwrap().data().to_vec(),
    )
}

/// `(max abs diff, max row-sum error)` of the cross-attention stack against
/// the double-loop oracle over `trials` random `[2, 3, 2]` token grids.
pub fn cross_oracle_gap(trials: u64) -> (f64, f64) {
    let (s_len, d, b) = (3, 2, 2);
    let cfg = CmafConfig {
        common_dim: s_len * d,
        tokens: s_len,
        token_dim: d,
        hidden: 4,
        ..CmafConfig::default()
    };
    let mut worst = 0.0f64;
    let mut worst_row = 0.0f64;
    for trial in 0..trials {
        let mut r = rng(5000 + trial);
        let mut store = ParamStore::<f64>::new();
        let cmaf = Cmaf::new(&mut store, cfg.clone(), 4, 4, &mut r).unwrap();
        randomize(&mut store, &mut r, 1.0);
        let xs = randn(b * s_len * d, &mut r);
        let ys = randn(b * s_len * d, &mut r);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(Tensor::new(vec![b, s_len, d], xs.clone()).unwrap());
        let y = tape.constant(Tensor::new(vec![b, s_len, d], ys.clone()).unwrap());
        let m = cmaf.match_degrees(&mut tape, &bound, x, y).unwrap();
        let (c1, c2) = Cmaf::cross_attention_apply(&mut tape, &m, x, y).unwrap();
        let maps = ["q1", "k1", "q2", "k2"].map(|n| param_pair(&store, n));
        let pair = |i: usize| (maps[i].0.as_slice(), maps[i].1.as_slice());
        for bi in 0..b {
            let tok = |v: &[f64]| -> Vec<Vec<f64>> {
                (0..s_len).map(|i| v[(bi * s_len + i) * d..][..d].to_vec()).collect()
            };
            let o = cross_oracle(&tok(&xs), &tok(&ys), pair(0), pair(1), pair(2), pair(3));
            let sl = |v: pemvc::Var, w: usize| tape.value(v).data()[bi * s_len * w..][..s_len * w].to_vec();
            let flat = |m: &Vec<Vec<f64>>| m.iter().flatten().copied().collect::<Vec<f64>>();
            for (got, want) in [
                (sl(m.s, s_len), flat(&o.s)),
                (sl(m.t, s_len), flat(&o.t)),
                (sl(m.beta, s_len), flat(&o.beta)),
                (sl(m.rho, s_len), flat(&o.rho)),
                (sl(c1, d), flat(&o.ctx_t2i)),
                (sl(c2, d), flat(&o.ctx_i2t)),
            ] {
                worst = worst.max(max_abs_diff(&got, &want));
            }
            for v in [m.beta, m.rho] {
                for row in sl(v, s_len).chunks(s_len) {
                    worst_row = worst_row.max((row.iter().sum::<f64>() - 1.0).abs());
                }
            }
        }
    }
    (worst, worst_row)
}

pub fn cross_equivalence() -> Check {
    let (gap, rows) = cross_oracle_gap(100);
    ensure(gap < 1e-10, || format!("max abs diff {gap:.3e} ≥ 1e-10"))?;
    ensure(rows < 1e-6, || format!("β/ρ row sum off by {rows:.3e}"))?;
    Ok(format!("100 trials, max abs diff {gap:.2e}, row sums within {rows:.1e}"))
}

pub fn gradients() -> Check {
    let t = Instant::now();
    let results = harness::run_gradcheck("all", None).map_err(e2s)?;
    let secs = t.elapsed().as_secs_f64();
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    ensure(failed.is_empty(), || format!("failing units: {}", failed.join(", ")))?;
    ensure(secs < 120.0, || format!("took {secs:.1} s (limit 120 s)"))?;
    let worst = results.iter().map(|r| r.report.max_rel_error).fold(0.0, f64::max);
    Ok(format!("{} units, worst relative error {worst:.2e}, {secs:.1} s", results.len()))
}

pub struct AblationCheck {
    pub means: [(Arm, f64); 4],
    pub seconds: f64,
    pub threads: usize,
}

pub fn run_default_ablation() -> Result<AblationCheck, String> {
    let ds = synth::generate_split(&GenConfig::default()).map_err(e2s)?;
    let threads = harness::worker_threads().map_err(e2s)?;
    let t = Instant::now();
    let res = harness::ablate(&ds, &[1, 2, 3], &RunConfig::default(), &ModelConfig::default(), threads).map_err(e2s)?;
    let seconds = t.elapsed().as_secs_f64();
    println!("{}", res.summary_table());
    let mean = |a: Arm| res.mean_auroc(a).unwrap_or(f64::NAN);
    Ok(AblationCheck {
        means: [Arm::Image, Arm::Emr, Arm::NoCmaf, Arm::Full].map(|a| (a, mean(a))),
        seconds,
        threads,
    })
}

pub fn ablation_ordering(a: &AblationCheck) -> Check {
    let [(_, image), (_, emr), (_, nocmaf), (_, full)] = a.means;
    let detail = format!(
        "full {full:.4}, nocmaf {nocmaf:.4}, emr {emr:.4}, image {image:.4}; {:.0} s on {} thread(s)",
        a.seconds, a.threads
    );
    let mut broken = vec![];
    if !(full >= 0.85) {
        broken.push("full ≥ 0.85");
    }
    if !(full - image >= 0.02) {
        broken.push("full − image ≥ 0.02");
    }
    if !(full - emr >= 0.02) {
        broken.push("full − emr ≥ 0.02");
    }
    if !(full >= nocmaf) {
        broken.push("full ≥ nocmaf");
    }
    if !(emr > image) {
        broken.push("emr > image");
    }
    if a.seconds >= 900.0 {
        broken.push("runtime < 15 min");
    }
    if broken.is_empty() {
        Ok(detail)
    } else {
        Err(format!("violated: {} ({detail})", broken.join(", ")))
    }
}

/// Random scores on a coarse grid so ties are common.
pub fn random_instance(r: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u8>) {
    let n = r.random_range(1..=50);
    let levels = r.random_range(2..=20) as f64;
    let scores = (0..n).map(|_| (r.random::<f64>() * levels).floor() / levels).collect();
    let labels = (0..n).map(|_| u8::from(r.random::<f64>() < 0.5)).collect();
    (scores, labels)
}

pub fn metrics_oracle() -> Check {
    let mut r = rng(77);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (scores, labels) = random_instance(&mut r);
        let got = roc_auc(&scores, &labels).map_err(e2s)?;
        let want = auc_pairs(&scores, &labels);
        match (got, want) {
            (Some(g), Some(w)) => worst = worst.max((g - w).abs()),
            (None, None) => {}
            other => return Err(format!("class-presence disagreement {other:?}")),
        }
        let threshold = r.random::<f64>();
        let c = Confusion::count(&scores, &labels, threshold).map_err(e2s)?;
        let (tp, fp, tn, fn_) = recount(&scores, &labels, threshold);
        ensure((c.tp, c.fp, c.tn, c.fn_) == (tp, fp, tn, fn_), || {
            format!("confusion {c:?} vs recount {:?}", (tp, fp, tn, fn_))
        })?;
        let m = pemvc::metrics::confusion_metrics(&scores, &labels, threshold).map_err(e2s)?;
        let n = scores.len() as f64;
        ensure(m.acc == Some((tp + tn) as f64 / n), || format!("accuracy {:?}", m.acc))?;
        let ratio = |a: u64, b: u64| (a + b > 0).then(|| a as f64 / (a + b) as f64);
        ensure(m.sensitivity == ratio(tp, fn_), || "sensitivity".into())?;
        ensure(m.specificity == ratio(tn, fp), || "specificity".into())?;
        ensure(m.ppv == ratio(tp, fp), || "ppv".into())?;
        ensure(m.npv == ratio(tn, fn_), || "npv".into())?;
    }
    ensure(worst <= 1e-12, || format!("AUROC differs from pair counting by {worst:.3e}"))?;
    let ex = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).map_err(e2s)?;
    ensure(ex == Some(0.75), || format!("worked example gave {ex:?}"))?;
    Ok(format!("1000 instances, max AUROC gap {worst:.1e}, confusion counts exact"))
}

/// Outcome of fitting the EMR pipeline on one generator seed.
pub struct PipelineFit {
    pub roles: Vec<ColumnRole>,
    pub pipeline: EmrPipeline,
    pub dataset: Dataset,
}

pub fn fit_pipeline(seed: u64) -> Result<PipelineFit, String> {
    let cfg = GenConfig {
        seed,
        ..GenConfig::default()
    };
    let dataset = synth::generate_split(&cfg).map_err(e2s)?;
    let frame = dataset.emr_frame().map_err(e2s)?;
    let train = dataset.indices(Split::Train);
    let pipeline = EmrPipeline::fit(&frame, &dataset.labels(), &train, &EmrConfig::default(), seed).map_err(e2s)?;
    Ok(PipelineFit {
        roles: cfg.column_roles(),
        pipeline,
        dataset,
    })
}

/// Checks the train-only, normalization and decoy rules for one fit and
/// reports whether every informative column made the top-k.
pub fn pipeline_rules(fit: &PipelineFit) -> Result<bool, String> {
    let ds = &fit.dataset;
    let frame = ds.emr_frame().map_err(e2s)?;
    let train = ds.indices(Split::Train);

    // statistics must not move when every held-out row is replaced
    let mut shifted = ds.clone();
    for r in ds.indices(Split::Val).into_iter().chain(ds.indices(Split::Test)) {
        shifted.records[r].tabular.iter_mut().for_each(|v| *v = *v * 13.0 + 1e3);
    }
    let refit = EmrPipeline::fit(&shifted.emr_frame().map_err(e2s)?, &ds.labels(), &train, &EmrConfig::default(), 0)
        .map_err(e2s)?;
    let refit0 = EmrPipeline::fit(&frame, &ds.labels(), &train, &EmrConfig::default(), 0).map_err(e2s)?;
    ensure(refit == refit0, || "held-out rows influenced the fitted statistics".into())?;

    let (kept, _) = drop_zero_variance(&frame, &train, EmrConfig::default().variance_threshold).map_err(e2s)?;
    let (z, _) = zscore_normalize(&kept, &train).map_err(e2s)?;
    let n = train.len() as f64;
    for c in 0..z.n_cols() {
        let mean = train.iter().map(|&r| z.get(r, c)).sum::<f64>() / n;
        let std = (train.iter().map(|&r| (z.get(r, c) - mean).powi(2)).sum::<f64>() / n).sqrt();
        ensure(mean.abs() < 1e-9 && (std - 1.0).abs() < 1e-9, || {
            format!("column {} has train mean {mean:.3e}, std {std:.12}", z.columns()[c])
        })?;
    }
    for (stats, role) in fit.pipeline.columns.iter().zip(&fit.roles) {
        if *role == ColumnRole::Decoy {
            ensure(!stats.keep, || format!("decoy {} survived the variance filter", stats.name))?;
        }
    }
    let selected = fit.pipeline.selected_columns();
    Ok(fit
        .roles
        .iter()
        .enumerate()
        .filter(|(_, r)| **r == ColumnRole::Informative)
        .all(|(i, _)| selected.contains(&i)))
}

pub fn pipeline_protocol() -> Check {
    let mut hits = 0;
    for seed in 1..=10 {
        if pipeline_rules(&fit_pipeline(seed)?)? {
            hits += 1;
        }
    }
    ensure(hits >= 8, || format!("informative columns all in top-k for only {hits}/10 seeds"))?;
    Ok(format!("train-only statistics, unit z-scores, decoys dropped; informative top-k in {hits}/10 seeds"))
}

/// Small dataset that trains in seconds.
pub fn tiny_dataset(seed: u64) -> Dataset {
    let cfg = GenConfig {
        n_patients: 48,
        dims: [1, 8, 8, 8],
        seed,
        ..GenConfig::default()
    };
    synth::generate_split(&cfg).unwrap()
}

pub fn tiny_run(arm: Arm) -> RunConfig {
    RunConfig {
        arm,
        epochs: 2,
        batch: 8,
        ..RunConfig::default()
    }
}

fn train_and_test(ds: &Dataset, cfg: &RunConfig) -> Result<(Vec<u8>, String), String> {
    let out = harness::train(ds, cfg, &ModelConfig::default()).map_err(e2s)?;
    let report: MetricsReport = harness::evaluate(&out.checkpoint, ds, Split::Test).map_err(e2s)?;
    Ok((out.checkpoint.to_bytes(), report.to_json_line()))
}

fn expect_format(r: pemvc::Result<impl std::fmt::Debug>, what: &str) -> Result<(), String> {
    match r {
        Err(Error::Format { .. }) => Ok(()),
        other => Err(format!("{what}: expected a format error, got {other:?}")),
    }
}

pub fn determinism_and_formats() -> Check {
    let ds = tiny_dataset(3);
    for arm in [Arm::Full, Arm::Emr] {
        let cfg = tiny_run(arm);
        let a = train_and_test(&ds, &cfg)?;
        let b = train_and_test(&ds, &cfg)?;
        ensure(a.0 == b.0, || format!("{arm} checkpoints differ between identical runs"))?;
        ensure(a.1 == b.1, || format!("{arm} metrics differ between identical runs"))?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d1 = dir.path().join("a");
    let d2 = dir.path().join("b");
    ds.save(&d1).map_err(e2s)?;
    let back = Dataset::load(&d1).map_err(e2s)?;
    ensure(back == ds, || "dataset changed across save/load".into())?;
    back.save(&d2).map_err(e2s)?;
    for f in [synth::VOLUME_FILE, synth::EMR_FILE, synth::MANIFEST_FILE] {
        let same = std::fs::read(d1.join(f)).ok() == std::fs::read(d2.join(f)).ok();
        ensure(same, || format!("{f} differs after a load/save round trip"))?;
    }

    let ckpt = harness::train(&ds, &tiny_run(Arm::Full), &ModelConfig::default()).map_err(e2s)?.checkpoint;
    let cpath = dir.path().join("ckpt.bin");
    ckpt.save(&cpath).map_err(e2s)?;
    let loaded = Checkpoint::load(&cpath).map_err(e2s)?;
    ensure(loaded.to_bytes() == ckpt.to_bytes(), || "checkpoint changed across save/load".into())?;

    let vol = std::fs::read(d1.join(synth::VOLUME_FILE)).map_err(|e| e.to_string())?;
    let mut bad = vol.clone();
    bad[0] ^= 0xff;
    expect_format(synth::parse_volumes(&bad), "flipped volume magic")?;
    expect_format(synth::parse_volumes(&vol[..vol.len() - 3]), "truncated volume file")?;
    let bytes = ckpt.to_bytes();
    let mut bad = bytes.clone();
    bad[1] ^= 0xff;
    expect_format(Checkpoint::from_bytes(&bad), "flipped checkpoint magic")?;
    expect_format(Checkpoint::from_bytes(&bytes[..bytes.len() - 5]), "truncated checkpoint")?;
    Ok("repeat runs bitwise equal; round trips exact; corrupt files rejected as format errors".into())
}
