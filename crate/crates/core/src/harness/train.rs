use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, Settings};
use super::config::{Precision, RunConfig};
use crate::autograd::{sigmoid, Mode, Tape};
use crate::emr::EmrPipeline;
use crate::error::{Error, Result};
use crate::metrics::{metrics_report, roc_auc, MetricsReport};
use crate::model::{Arm, Batch, Model, ModelConfig};
use crate::synth::{Dataset, Split};
use crate::tensor::{Scalar, Tensor};

const SHUFFLE_SALT: u64 = 0x5348_5546;
const DROPOUT_SALT: u64 = 0x4452_4f50;
const EVAL_BATCH: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auroc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
}

/// Selected, normalized EMR features for every record, row-major `n × k`.
struct Features {
    values: Vec<f64>,
    k: usize,
}

fn batch<T: Scalar>(ds: &Dataset, arm: Arm, feats: Option<&Features>, rows: &[usize]) -> Result<Batch<T>> {
    let volumes = if arm.uses_image() {
        let [c, d, h, w] = ds.dims;
        let data = rows
            .iter()
            .flat_map(|&r| ds.records[r].volume.iter().map(|&v| T::lit(v as f64)))
            .collect();
        Some(Tensor::new(vec![rows.len(), c, d, h, w], data)?)
    } else {
        None
    };
    let emr = match feats {
        Some(f) => {
            let data = rows
                .iter()
                .flat_map(|&r| f.values[r * f.k..(r + 1) * f.k].iter().map(|&v| T::lit(v)))
                .collect();
            Some(Tensor::new(vec![rows.len(), f.k], data)?)
        }
        None => None,
    };
    Ok(Batch { volumes, emr })
}

/// Positive-class probabilities in eval mode.
fn predict_with<T: Scalar>(model: &Model<T>, ds: &Dataset, feats: Option<&Features>, rows: &[usize]) -> Result<Vec<f64>> {
    // eval mode never draws from it
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut out = Vec::with_capacity(rows.len());
    for chunk in rows.chunks(EVAL_BATCH) {
        let b = batch::<T>(ds, model.arm, feats, chunk)?;
        let mut tape = Tape::new();
        let bound = model.store.bind(&mut tape);
        let z = model.forward(&mut tape, &bound, &b, Mode::Eval, &mut rng)?;
        out.extend(tape.value(z).data().iter().map(|&z| sigmoid(z).as_f64()));
    }
    Ok(out)
}

fn fit_features(ds: &Dataset, cfg: &RunConfig, model: &mut ModelConfig) -> Result<(Option<EmrPipeline>, Option<Features>)> {
    if !cfg.arm.uses_emr() {
        return Ok((None, None));
    }
    let frame = ds.emr_frame()?;
    let p = EmrPipeline::fit(&frame, &ds.labels(), &ds.indices(Split::Train), &model.emr, cfg.seed)?;
    model.emr.k = p.k;
    let values = p.transform(&frame)?;
    Ok((Some(p.clone()), Some(Features { values, k: p.k })))
}

fn labels_of(ds: &Dataset, rows: &[usize]) -> Vec<u8> {
    rows.iter().map(|&r| ds.records[r].label).collect()
}

fn train_impl<T: Scalar>(ds: &Dataset, cfg: &RunConfig, model_cfg: &ModelConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_rows = ds.indices(Split::Train);
    let val_rows = ds.indices(Split::Val);
    if train_rows.is_empty() || val_rows.is_empty() {
        return Err(Error::Data(format!(
            "training needs non-empty train and val splits ({} / {})",
            train_rows.len(),
            val_rows.len()
        )));
    }
    let mut mc = model_cfg.clone();
    mc.backbone.in_channels = ds.dims[0];
    let (pipeline, feats) = fit_features(ds, cfg, &mut mc)?;
    let mut model = Model::<T>::new(cfg.arm, mc.clone(), cfg.seed)?;
    let val_labels = labels_of(ds, &val_rows);

    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SALT);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DROPOUT_SALT);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(Option<f64>, usize, crate::params::ParamStore<f32>)> = None;
    for epoch in 1..=cfg.epochs {
        let mut order = train_rows.clone();
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for (bi, rows) in order.chunks(cfg.batch).enumerate() {
            let b = batch::<T>(ds, cfg.arm, feats.as_ref(), rows)?;
            let y: Vec<T> = rows.iter().map(|&r| T::lit(f64::from(ds.records[r].label))).collect();
            let mut tape = Tape::new();
            let bound = model.store.bind(&mut tape);
            let z = model.forward(&mut tape, &bound, &b, Mode::Train, &mut drop_rng)?;
            let loss = tape.bce_with_logits(z, &y)?;
            let lv = tape.value(loss).data()[0].as_f64();
            if !lv.is_finite() {
                return Err(Error::Internal(format!(
                    "{} arm: loss became {lv} at epoch {epoch}, batch {bi} (lr {}, batch size {}); \
                     last epoch loss {:?}",
                    cfg.arm,
                    cfg.lr,
                    cfg.batch,
                    history.last().map(|h: &EpochRecord| h.train_loss)
                )));
            }
            tape.backward(loss)?;
            model.store.absorb_grads(&tape, &bound)?;
            // clipping a plain SGD step is the same as shrinking its rate
            let shrink = match cfg.clip_norm {
                Some(c) => (c / model.store.grad_norm()).min(1.0),
                None => 1.0,
            };
            model.store.sgd_step(cfg.lr * shrink)?;
            total += lv * rows.len() as f64;
        }
        let probs = predict_with(&model, ds, feats.as_ref(), &val_rows)?;
        let val_auroc = roc_auc(&probs, &val_labels)?;
        history.push(EpochRecord {
            epoch,
            train_loss: total / train_rows.len() as f64,
            val_auroc,
        });
        let improved = match &best {
            None => true,
            Some((prev, _, _)) => val_auroc.unwrap_or(f64::NEG_INFINITY) > prev.unwrap_or(f64::NEG_INFINITY),
        };
        if improved {
            best = Some((val_auroc, epoch, model.store.cast()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    let run = RunConfig {
        data: Default::default(),
        out: Default::default(),
        ..cfg.clone()
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            settings: Settings {
                run,
                model: mc,
                best_epoch,
            },
            pipeline,
            params,
        },
        history,
    })
}

/// Trains `cfg.arm` on the train split, keeping the epoch with the best
/// validation AUROC.
pub fn train(ds: &Dataset, cfg: &RunConfig, model: &ModelConfig) -> Result<TrainOutcome> {
    match cfg.precision {
        Precision::F32 => train_impl::<f32>(ds, cfg, model),
        Precision::F64 => train_impl::<f64>(ds, cfg, model),
    }
}

/// Loads the dataset at `cfg.data` and trains with the default model.
pub fn run_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let ds = Dataset::load(&cfg.data)?;
    train(&ds, cfg, &ModelConfig::default())
}

fn restore<T: Scalar>(ckpt: &Checkpoint) -> Result<Model<T>> {
    let s = &ckpt.settings;
    let mut model = Model::<T>::new(s.run.arm, s.model.clone(), s.run.seed)?;
    model.store.load_values(&ckpt.params.cast())?;
    Ok(model)
}

fn predict_impl<T: Scalar>(ckpt: &Checkpoint, ds: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
    let arm = ckpt.settings.run.arm;
    if arm.uses_image() && ckpt.settings.model.backbone.in_channels != ds.dims[0] {
        return Err(Error::Consistency(format!(
            "checkpoint expects {}-channel volumes, dataset has {}",
            ckpt.settings.model.backbone.in_channels, ds.dims[0]
        )));
    }
    let feats = match (&ckpt.pipeline, arm.uses_emr()) {
        (Some(p), true) => Some(Features {
            values: p.transform(&ds.emr_frame()?)?,
            k: p.k,
        }),
        (None, false) => None,
        _ => {
            return Err(Error::Consistency(format!(
                "checkpoint for the {arm} arm {} EMR statistics",
                if arm.uses_emr() { "lacks" } else { "unexpectedly carries" }
            )))
        }
    };
    let model = restore::<T>(ckpt)?;
    predict_with(&model, ds, feats.as_ref(), rows)
}

/// Probabilities for `rows`, computed in the checkpoint's precision.
pub fn predict(ckpt: &Checkpoint, ds: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
    match ckpt.settings.run.precision {
        Precision::F32 => predict_impl::<f32>(ckpt, ds, rows),
        Precision::F64 => predict_impl::<f64>(ckpt, ds, rows),
    }
}

pub fn evaluate(ckpt: &Checkpoint, ds: &Dataset, split: Split) -> Result<MetricsReport> {
    let rows = ds.indices(split);
    if rows.is_empty() {
        return Err(Error::Data(format!("the {} split is empty", split.as_str())));
    }
    let probs = predict(ckpt, ds, &rows)?;
    let run = &ckpt.settings.run;
    Ok(metrics_report(&probs, &labels_of(ds, &rows))?.tagged(run.arm.as_str(), split.as_str(), Some(run.seed)))
}

/// Like [`evaluate`], refusing a checkpoint trained for a different arm.
pub fn evaluate_as(ckpt: &Checkpoint, ds: &Dataset, split: Split, arm: Arm) -> Result<MetricsReport> {
    if ckpt.settings.run.arm != arm {
        return Err(Error::Consistency(format!(
            "checkpoint was trained for the {} arm, not {arm}",
            ckpt.settings.run.arm
        )));
    }
    evaluate(ckpt, ds, split)
}

pub fn run_evaluate(checkpoint: &std::path::Path, data: &std::path::Path, split: Split) -> Result<MetricsReport> {
    let ckpt = Checkpoint::load(checkpoint)?;
    evaluate(&ckpt, &Dataset::load(data)?, split)
}
