//! Brute-force reference implementations shared by the integration suites.
//! Everything here is plain loops over `f64` slices and never touches the tape.

#![allow(dead_code)]

pub mod criteria;

use pemvc::ParamStore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Row-softmax of a square `n×n` matrix stored as nested rows.
fn softmax_matrix(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    m.iter().map(|r| softmax(r)).collect()
}

fn param(store: &ParamStore<f64>, name: &str) -> Vec<f64> {
    store
        .by_name(name)
        .unwrap_or_else(|| panic!("no parameter {name}"))
        .data()
        .to_vec()
}

/// Canonical `[B, C, D, H, W]` volume.
pub struct Vol<'a> {
    pub dims: [usize; 5],
    pub data: &'a [f64],
}

impl Vol<'_> {
    pub fn at(&self, b: usize, c: usize, d: usize, h: usize, w: usize) -> f64 {
        let [_, cc, dd, hh, ww] = self.dims;
        self.data[(((b * cc + c) * dd + d) * hh + h) * ww + w]
    }
}

/// Canonical `(d, h, w)` of fold index `f` and in-plane position `(p, q)` in
/// view `t`. View 0 folds D with plane (H, W); view 1 folds H with plane
/// (W, D); view 2 folds W with plane (H, D).
pub fn view_coord(t: usize, f: usize, p: usize, q: usize) -> (usize, usize, usize) {
    match t {
        0 => (f, p, q),
        1 => (q, f, p),
        2 => (q, p, f),
        _ => unreachable!(),
    }
}

/// `(fold extent, P, Q)` of view `t` for spatial extents `[D, H, W]`.
pub fn view_extents(t: usize, [d, h, w]: [usize; 3]) -> (usize, usize, usize) {
    match t {
        0 => (d, h, w),
        1 => (h, w, d),
        2 => (w, h, d),
        _ => unreachable!(),
    }
}

/// Every similarity matrix of one block, per view and per folded slice.
pub struct Maps {
    /// `[view][b·L + f]` → `S×S`
    pub spatial: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[view][b·L + f]` → `C×C`
    pub channel: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[view][b]` → `L×L`
    pub dimensional: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Straight-line evaluation of the block sum
/// `Σ_t unview(softmax(M_S)·V + V·softmax(M_C)ᵀ + softmax(M_D)·V_D)`,
/// reading weights by name from `store` under `prefix`. Residual and
/// similarity scaling are not applied.
pub fn mvcs_oracle(x: &Vol, store: &ParamStore<f64>, prefix: &str) -> (Vec<f64>, Maps) {
    let [bn, c, d, h, w] = x.dims;
    let mut out = vec![0.0; x.data.len()];
    let idx = |b: usize, ch: usize, (dd, hh, ww): (usize, usize, usize)| (((b * c + ch) * d + dd) * h + hh) * w + ww;
    let mut maps = Maps {
        spatial: vec![],
        channel: vec![],
        dimensional: vec![],
    };
    for t in 0..3 {
        let pw = |role: &str| {
            (
                param(store, &format!("{prefix}.view{t}.{role}.w")),
                param(store, &format!("{prefix}.view{t}.{role}.b")),
            )
        };
        let (wq, bq) = pw("query");
        let (wk, bk) = pw("key");
        let (wv, bv) = pw("value");
        let (l, pp, qq) = view_extents(t, [d, h, w]);
        let s_len = pp * qq;
        let mut spatial_maps = vec![];
        let mut channel_maps = vec![];
        for b in 0..bn {
            for f in 0..l {
                // q[s][j] = Σ_i x[s][i]·W[i][j] + bias[j]
                let project = |wm: &[f64], bias: &[f64]| -> Vec<Vec<f64>> {
                    (0..s_len)
                        .map(|s| {
                            let (dd, hh, ww) = view_coord(t, f, s / qq, s % qq);
                            (0..c)
                                .map(|j| bias[j] + (0..c).map(|i| x.at(b, i, dd, hh, ww) * wm[i * c + j]).sum::<f64>())
                                .collect()
                        })
                        .collect()
                };
                let q = project(&wq, &bq);
                let k = project(&wk, &bk);
                let v = project(&wv, &bv);
                let ms: Vec<Vec<f64>> = (0..s_len)
                    .map(|s| (0..s_len).map(|s2| (0..c).map(|j| q[s][j] * k[s2][j]).sum()).collect())
                    .collect();
                let a_s = softmax_matrix(&ms);
                let mc: Vec<Vec<f64>> = (0..c)
                    .map(|i| (0..c).map(|j| (0..s_len).map(|s| k[s][i] * q[s][j]).sum()).collect())
                    .collect();
                let a_c = softmax_matrix(&mc);
                for s in 0..s_len {
                    let pos = view_coord(t, f, s / qq, s % qq);
                    for j in 0..c {
                        let sp: f64 = (0..s_len).map(|s2| a_s[s][s2] * v[s2][j]).sum();
                        let ch: f64 = (0..c).map(|j2| v[s][j2] * a_c[j][j2]).sum();
                        out[idx(b, j, pos)] += sp + ch;
                    }
                }
                spatial_maps.push(a_s);
                channel_maps.push(a_c);
            }
        }
        maps.spatial.push(spatial_maps);
        maps.channel.push(channel_maps);

        // three-tap convolutions along the fold axis, zero padded
        let dw = |role: &str| {
            (
                param(store, &format!("{prefix}.view{t}.depth_{role}.w")),
                param(store, &format!("{prefix}.view{t}.depth_{role}.b")),
            )
        };
        let (dq, dbq) = dw("query");
        let (dk, dbk) = dw("key");
        let (dv, dbv) = dw("value");
        let mut dim_maps = vec![];
        for b in 0..bn {
            // conv[f][(co, s)]
            let conv = |wm: &[f64], bias: &[f64]| -> Vec<Vec<f64>> {
                (0..l)
                    .map(|f| {
                        let mut row = Vec::with_capacity(c * s_len);
                        for co in 0..c {
                            for s in 0..s_len {
                                let mut acc = bias[co];
                                for ci in 0..c {
                                    for tap in 0..3 {
                                        let src = f as i64 + tap as i64 - 1;
                                        if src < 0 || src >= l as i64 {
                                            continue;
                                        }
                                        let (dd, hh, ww) = view_coord(t, src as usize, s / qq, s % qq);
                                        acc += wm[(co * c + ci) * 3 + tap] * x.at(b, ci, dd, hh, ww);
                                    }
                                }
                                row.push(acc);
                            }
                        }
                        row
                    })
                    .collect()
            };
            let q = conv(&dq, &dbq);
            let k = conv(&dk, &dbk);
            let v = conv(&dv, &dbv);
            let md: Vec<Vec<f64>> = (0..l)
                .map(|f| (0..l).map(|f2| q[f].iter().zip(&k[f2]).map(|(a, b)| a * b).sum()).collect())
                .collect();
            let a_d = softmax_matrix(&md);
            for f in 0..l {
                for co in 0..c {
                    for s in 0..s_len {
                        let r: f64 = (0..l).map(|f2| a_d[f][f2] * v[f2][co * s_len + s]).sum();
                        out[idx(b, co, view_coord(t, f, s / qq, s % qq))] += r;
                    }
                }
            }
            dim_maps.push(a_d);
        }
        maps.dimensional.push(dim_maps);
    }
    (out, maps)
}

/// Match degrees and contexts of one batch item, by double loops.
pub struct CrossOracle {
    pub s: Vec<Vec<f64>>,
    pub t: Vec<Vec<f64>>,
    /// `beta[j][i]`: text token `j` over image tokens `i`.
    pub beta: Vec<Vec<f64>>,
    pub rho: Vec<Vec<f64>>,
    pub ctx_t2i: Vec<Vec<f64>>,
    pub ctx_i2t: Vec<Vec<f64>>,
}

/// Token map `u·W + b` with `W` stored `[d_in, d_out]`.
pub fn token_linear(u: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let d = b.len();
    (0..d).map(|j| b[j] + u.iter().enumerate().map(|(i, v)| v * w[i * d + j]).sum::<f64>()).collect()
}

/// `x`, `y`: `S` tokens of width `d`; maps are `(weight, bias)` pairs.
pub fn cross_oracle(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    q1: (&[f64], &[f64]),
    k1: (&[f64], &[f64]),
    q2: (&[f64], &[f64]),
    k2: (&[f64], &[f64]),
) -> CrossOracle {
    let n = x.len();
    let mut s = vec![vec![0.0; n]; n];
    let mut t = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let a = token_linear(&x[i], q1.0, q1.1);
            let b = token_linear(&y[j], k2.0, k2.1);
            s[i][j] = a.iter().zip(&b).map(|(p, q)| p * q).sum();
            let a = token_linear(&y[i], q2.0, q2.1);
            let b = token_linear(&x[j], k1.0, k1.1);
            t[i][j] = a.iter().zip(&b).map(|(p, q)| p * q).sum();
        }
    }
    let mut beta = vec![vec![0.0; n]; n];
    let mut rho = vec![vec![0.0; n]; n];
    for j in 0..n {
        let zs: f64 = (0..n).map(|i| s[i][j].exp()).sum();
        let zt: f64 = (0..n).map(|i| t[i][j].exp()).sum();
        for i in 0..n {
            beta[j][i] = s[i][j].exp() / zs;
            rho[j][i] = t[i][j].exp() / zt;
        }
    }
    let d = x[0].len();
    let mut ctx_t2i = vec![vec![0.0; d]; n];
    let mut ctx_i2t = vec![vec![0.0; d]; n];
    for j in 0..n {
        for i in 0..n {
            for e in 0..d {
                ctx_t2i[j][e] += beta[j][i] * x[i][e];
                ctx_i2t[j][e] += rho[j][i] * y[i][e];
            }
        }
    }
    CrossOracle {
        s,
        t,
        beta,
        rho,
        ctx_t2i,
        ctx_i2t,
    }
}

/// AUROC as the fraction of (positive, negative) pairs ranked correctly,
/// ties counting one half. `None` when a class is absent.
pub fn auc_pairs(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            den += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

/// `(tp, fp, tn, fn)` with `score ≥ threshold` predicting positive.
pub fn recount(scores: &[f64], labels: &[u8], threshold: f64) -> (u64, u64, u64, u64) {
    let mut c = (0, 0, 0, 0);
    for (s, l) in scores.iter().zip(labels) {
        match (*s >= threshold, *l == 1) {
            (true, true) => c.0 += 1,
            (true, false) => c.1 += 1,
            (false, false) => c.2 += 1,
            (false, true) => c.3 += 1,
        }
    }
    c
}
