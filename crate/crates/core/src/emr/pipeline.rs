//! Fit-on-train preprocessing: zero-variance filter, z-scoring with mean
//! imputation, and margin-based feature ranking.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::frame::TabularFrame;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            epochs: 200,
            lr: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmrConfig {
    pub variance_threshold: f64,
    pub k: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub dropout: f64,
    /// Keeps the embedding map fixed at its seeded initial value.
    pub frozen_embed: bool,
    pub selector: SelectorConfig,
}

impl Default for EmrConfig {
    fn default() -> Self {
        Self {
            variance_threshold: 1e-12,
            k: 16,
            embed_dim: 32,
            hidden: 64,
            feature_dim: 64,
            dropout: 0.2,
            frozen_embed: true,
            selector: SelectorConfig::default(),
        }
    }
}

fn fit_column(frame: &TabularFrame, col: usize, rows: &[usize]) -> (f64, f64) {
    let vals: Vec<f64> = rows.iter().map(|&r| frame.get(r, col)).filter(|v| !v.is_nan()).collect();
    if vals.is_empty() {
        return (0.0, 0.0);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Keep flags: population variance over `fit_rows` at or above `threshold`.
pub fn variance_keep_flags(frame: &TabularFrame, fit_rows: &[usize], threshold: f64) -> Result<Vec<bool>> {
    if fit_rows.is_empty() {
        return Err(Error::Data("no rows to fit the variance filter on".into()));
    }
    let keep: Vec<bool> = (0..frame.n_cols())
        .map(|c| fit_column(frame, c, fit_rows).1 >= threshold)
        .collect();
    if !keep.contains(&true) {
        return Err(Error::Data("no informative features: every column has zero variance".into()));
    }
    Ok(keep)
}

/// Removes columns that are constant on the fitting rows; the same columns
/// are removed from every row.
pub fn drop_zero_variance(frame: &TabularFrame, fit_rows: &[usize], threshold: f64) -> Result<(TabularFrame, Vec<bool>)> {
    let keep = variance_keep_flags(frame, fit_rows, threshold)?;
    let cols: Vec<usize> = (0..keep.len()).filter(|&c| keep[c]).collect();
    Ok((frame.select_columns(&cols)?, keep))
}

/// Per-column population mean and std from the fitting rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ZScore {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ZScore {
    pub fn fit(frame: &TabularFrame, fit_rows: &[usize]) -> Result<Self> {
        let mut means = Vec::with_capacity(frame.n_cols());
        let mut stds = Vec::with_capacity(frame.n_cols());
        for c in 0..frame.n_cols() {
            let (m, v) = fit_column(frame, c, fit_rows);
            let s = v.sqrt();
            if s < 1e-12 {
                return Err(Error::Internal(format!(
                    "column {} has std {s} after the variance filter",
                    frame.columns()[c]
                )));
            }
            means.push(m);
            stds.push(s);
        }
        Ok(Self { means, stds })
    }

    /// `(x − mean)/std`; missing cells become 0 (the imputed mean).
    pub fn transform(&self, frame: &TabularFrame) -> Result<TabularFrame> {
        if frame.n_cols() != self.means.len() {
            return Err(Error::dim(format!(
                "z-score fitted on {} columns applied to {}",
                self.means.len(),
                frame.n_cols()
            )));
        }
        let n = frame.n_cols();
        let values = frame
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = i % n;
                if v.is_nan() {
                    0.0
                } else {
                    (v - self.means[c]) / self.stds[c]
                }
            })
            .collect();
        TabularFrame::new(frame.columns().to_vec(), frame.ids().to_vec(), values)
    }
}

pub fn zscore_normalize(frame: &TabularFrame, fit_rows: &[usize]) -> Result<(TabularFrame, ZScore)> {
    let z = ZScore::fit(frame, fit_rows)?;
    Ok((z.transform(frame)?, z))
}

/// Linear max-margin classifier used only to rank columns by `|weight|`.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectorModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Column indices sorted by descending `|weight|`.
    pub ranking: Vec<usize>,
    pub k: usize,
}

impl SelectorModel {
    pub fn selected(&self) -> &[usize] {
        &self.ranking[..self.k]
    }
}

/// Trains `λ/2·‖w‖² + mean hinge(1 − y(w·x + b))` by per-sample SGD over the
/// fitting rows (seeded visiting order) and ranks columns by `|w|` of the
/// iterate averaged over the second half of the epochs. A constant step
/// leaves the last iterate too noisy to rank weak columns reliably.
/// `k` is clamped to the column count.
pub fn select_features(
    frame: &TabularFrame,
    labels: &[u8],
    fit_rows: &[usize],
    k: usize,
    cfg: &SelectorConfig,
    seed: u64,
) -> Result<SelectorModel> {
    if k == 0 {
        return Err(Error::Config("feature selection needs k >= 1".into()));
    }
    if labels.len() != frame.n_rows() {
        return Err(Error::dim(format!("{} labels for {} rows", labels.len(), frame.n_rows())));
    }
    let fit_labels: Vec<u8> = fit_rows.iter().map(|&r| labels[r]).collect();
    if let Some(bad) = fit_labels.iter().find(|&&y| y > 1) {
        return Err(Error::Data(format!("non-binary label {bad}")));
    }
    if !fit_labels.contains(&0) || !fit_labels.contains(&1) {
        return Err(Error::Data("feature selection needs both classes in the fitting rows".into()));
    }
    let d = frame.n_cols();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut order = fit_rows.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tail_from = cfg.epochs / 2;
    let (mut w_avg, mut b_avg, mut steps) = (vec![0.0; d], 0.0, 0usize);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &r in &order {
            let x = frame.row(r);
            let y = if labels[r] == 1 { 1.0 } else { -1.0 };
            let margin = y * (x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b);
            for (wi, &xi) in w.iter_mut().zip(x) {
                let g = cfg.lambda * *wi - if margin < 1.0 { y * xi } else { 0.0 };
                *wi -= cfg.lr * g;
            }
            if margin < 1.0 {
                b += cfg.lr * y;
            }
            if epoch >= tail_from {
                w_avg.iter_mut().zip(&w).for_each(|(a, &v)| *a += v);
                b_avg += b;
                steps += 1;
            }
        }
    }
    let inv = 1.0 / steps.max(1) as f64;
    let w: Vec<f64> = w_avg.iter().map(|v| v * inv).collect();
    let b = b_avg * inv;
    let mut ranking: Vec<usize> = (0..d).collect();
    ranking.sort_by(|&i, &j| w[j].abs().total_cmp(&w[i].abs()).then(i.cmp(&j)));
    Ok(SelectorModel {
        weights: w,
        bias: b,
        ranking,
        k: k.min(d),
    })
}

/// Per raw column: fitted statistics and selection outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub keep: bool,
    /// Selector weight, for columns that survived the variance filter.
    pub weight: Option<f64>,
    /// Position in the selected set, for the top-k columns.
    pub rank: Option<usize>,
}

/// A fitted preprocessing pipeline, applicable to any frame with the same
/// raw columns.
#[derive(Clone, Debug, PartialEq)]
pub struct EmrPipeline {
    pub columns: Vec<ColumnStats>,
    pub selector_bias: f64,
    pub k: usize,
}

const STATS_MAGIC: &str = "pemvc-emr-stats";
const STATS_VERSION: u32 = 1;

impl EmrPipeline {
    /// Fits filter, normalization and selector using `fit_rows` only.
    pub fn fit(frame: &TabularFrame, labels: &[u8], fit_rows: &[usize], cfg: &EmrConfig, seed: u64) -> Result<Self> {
        let (kept, keep) = drop_zero_variance(frame, fit_rows, cfg.variance_threshold)?;
        let (normalized, z) = zscore_normalize(&kept, fit_rows)?;
        let sel = select_features(&normalized, labels, fit_rows, cfg.k, &cfg.selector, seed)?;
        let mut columns = Vec::with_capacity(frame.n_cols());
        let mut kept_idx = 0;
        for (c, name) in frame.columns().iter().enumerate() {
            if keep[c] {
                let rank = sel.selected().iter().position(|&s| s == kept_idx);
                columns.push(ColumnStats {
                    name: name.clone(),
                    mean: z.means[kept_idx],
                    std: z.stds[kept_idx],
                    keep: true,
                    weight: Some(sel.weights[kept_idx]),
                    rank,
                });
                kept_idx += 1;
            } else {
                let (mean, var) = fit_column(frame, c, fit_rows);
                columns.push(ColumnStats {
                    name: name.clone(),
                    mean,
                    std: var.sqrt(),
                    keep: false,
                    weight: None,
                    rank: None,
                });
            }
        }
        Ok(Self {
            columns,
            selector_bias: sel.bias,
            k: sel.k,
        })
    }

    /// Raw column indices of the selected features, in rank order.
    pub fn selected_columns(&self) -> Vec<usize> {
        let mut sel: Vec<(usize, usize)> = self
            .columns
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.rank.map(|r| (r, i)))
            .collect();
        sel.sort();
        sel.into_iter().map(|(_, i)| i).collect()
    }

    pub fn selected_names(&self) -> Vec<&str> {
        self.selected_columns().into_iter().map(|i| self.columns[i].name.as_str()).collect()
    }

    /// Z-scored, imputed values of the selected columns: row-major `n × k`.
    pub fn transform(&self, frame: &TabularFrame) -> Result<Vec<f64>> {
        let mut idx = Vec::with_capacity(self.k);
        for i in self.selected_columns() {
            let name = &self.columns[i].name;
            idx.push((
                i,
                frame
                    .column_index(name)
                    .ok_or_else(|| Error::Consistency(format!("EMR table lacks fitted column {name}")))?,
            ));
        }
        let mut out = Vec::with_capacity(frame.n_rows() * idx.len());
        for r in 0..frame.n_rows() {
            for &(i, c) in &idx {
                let v = frame.get(r, c);
                let s = &self.columns[i];
                out.push(if v.is_nan() { 0.0 } else { (v - s.mean) / s.std });
            }
        }
        Ok(out)
    }

    /// Plain-text stats file, one line per raw column.
    pub fn to_stats_string(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{STATS_MAGIC} v{STATS_VERSION}").unwrap();
        writeln!(s, "k\t{}", self.k).unwrap();
        writeln!(s, "selector_bias\t{:?}", self.selector_bias).unwrap();
        writeln!(s, "column\tmean\tstd\tkeep\tweight\trank").unwrap();
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        for c in &self.columns {
            writeln!(
                s,
                "{}\t{:?}\t{:?}\t{}\t{}\t{}",
                c.name,
                c.mean,
                c.std,
                u8::from(c.keep),
                opt(c.weight.map(|w| format!("{w:?}"))),
                opt(c.rank.map(|r| r.to_string()))
            )
            .unwrap();
        }
        s
    }

    pub fn from_stats_str(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Data(format!("stats file line {}: {msg}", line + 1));
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| lines.next().ok_or_else(|| Error::Data(format!("stats file ends before {what}")));
        let (i, head) = next("header")?;
        if head != format!("{STATS_MAGIC} v{STATS_VERSION}") {
            return Err(bad(i, "unrecognized header or version"));
        }
        let mut kv = |key: &str| -> Result<String> {
            let (i, l) = next(key)?;
            l.strip_prefix(&format!("{key}\t"))
                .map(str::to_string)
                .ok_or_else(|| bad(i, &format!("expected `{key}`")))
        };
        let k: usize = kv("k")?.parse().map_err(|_| Error::Data("stats file: bad k".into()))?;
        let selector_bias: f64 = kv("selector_bias")?
            .parse()
            .map_err(|_| Error::Data("stats file: bad selector_bias".into()))?;
        let (i, cols) = next("column header")?;
        if cols != "column\tmean\tstd\tkeep\tweight\trank" {
            return Err(bad(i, "unexpected column header"));
        }
        let mut columns = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(bad(i, "expected 6 tab-separated fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i, "bad number"));
            let opt_num = |s: &str| if s == "-" { Ok(None) } else { num(s).map(Some) };
            columns.push(ColumnStats {
                name: f[0].to_string(),
                mean: num(f[1])?,
                std: num(f[2])?,
                keep: match f[3] {
                    "1" => true,
                    "0" => false,
                    _ => return Err(bad(i, "keep flag must be 0 or 1")),
                },
                weight: opt_num(f[4])?,
                rank: if f[5] == "-" {
                    None
                } else {
                    Some(f[5].parse().map_err(|_| bad(i, "bad rank"))?)
                },
            });
        }
        let p = Self {
            columns,
            selector_bias,
            k,
        };
        if p.selected_columns().len() != k {
            return Err(Error::Consistency(format!(
                "stats file declares k = {k} but ranks {} columns",
                p.selected_columns().len()
            )));
        }
        Ok(p)
    }
}
