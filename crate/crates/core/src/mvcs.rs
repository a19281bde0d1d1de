//! Multi-view coupled self-attention.
//!
//! A feature volume `[B, C, D, H, W]` is seen through three views, each one
//! folding a different spatial axis into the batch with channels last:
//!
//! | view | layout            | fold axis |
//! |------|-------------------|-----------|
//! | 0    | `[B·D, H, W, C]`  | D         |
//! | 1    | `[B·H, W, D, C]`  | H         |
//! | 2    | `[B·W, H, D, C]`  | W         |
//!
//! Per view, a pointwise key/query/value projection feeds a spatial map
//! (`S×S` over in-plane positions) and a channel map (`C×C`), and a second set
//! of three-tap convolutions along the fold axis feeds a dimensional map
//! (`L×L` over fold-axis slices). Each row-softmaxed map is applied to its own
//! axis of the value tensor, the nine results are brought back to canonical
//! layout and summed, and the input is added back when `residual` is set.

use rand::Rng;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::{inverse_permutation, Scalar, Tensor};

/// Axis orders taking `[B, C, D, H, W]` to the un-folded view layouts.
pub const VIEW_AXES: [[usize; 5]; 3] = [[0, 2, 3, 4, 1], [0, 3, 4, 2, 1], [0, 4, 3, 2, 1]];

/// Axis orders moving view `t`'s fold axis into the depth slot of `[B, C, ·, ·, ·]`.
pub const FOLD_AXES: [[usize; 5]; 3] = [[0, 1, 2, 3, 4], [0, 1, 3, 4, 2], [0, 1, 4, 3, 2]];

#[derive(Clone, Debug, PartialEq)]
pub struct ViewSet<T: Scalar> {
    pub views: [Tensor<T>; 3],
    /// `(B, C, D, H, W)`
    pub origin: [usize; 5],
    pub inverse: [[usize; 5]; 3],
}

fn check_5d(shape: &[usize]) -> Result<[usize; 5]> {
    shape
        .try_into()
        .map_err(|_| Error::dim(format!("expected a 5-d [B, C, D, H, W] tensor, got {shape:?}")))
}

fn view_shape(origin: [usize; 5], t: usize) -> [usize; 4] {
    let p: Vec<usize> = VIEW_AXES[t].iter().map(|&a| origin[a]).collect();
    [p[0] * p[1], p[2], p[3], p[4]]
}

pub fn make_views<T: Scalar>(x: &Tensor<T>) -> Result<ViewSet<T>> {
    let origin = check_5d(x.shape())?;
    let mk = |t: usize| -> Result<Tensor<T>> { x.permute(&VIEW_AXES[t])?.reshape(view_shape(origin, t).to_vec()) };
    let inv = |t: usize| -> [usize; 5] { inverse_permutation(&VIEW_AXES[t]).try_into().unwrap() };
    Ok(ViewSet {
        views: [mk(0)?, mk(1)?, mk(2)?],
        origin,
        inverse: [inv(0), inv(1), inv(2)],
    })
}

impl<T: Scalar> ViewSet<T> {
    /// Returns view `t` (or any tensor in its layout) to `[B, C, D, H, W]`.
    pub fn unfold(&self, t: usize, view: &Tensor<T>) -> Result<Tensor<T>> {
        let o = self.origin;
        let unfolded: Vec<usize> = VIEW_AXES[t].iter().map(|&a| o[a]).collect();
        view.reshape(unfolded)?.permute(&self.inverse[t])
    }
}

/// Folds `x: [B, C, D, H, W]` into view `t` on the tape.
pub fn view_on_tape<T: Scalar>(tape: &mut Tape<T>, x: Var, t: usize) -> Result<Var> {
    let origin = check_5d(tape.shape(x))?;
    let p = tape.permute(x, &VIEW_AXES[t])?;
    tape.reshape(p, &view_shape(origin, t))
}

/// Inverse of [`view_on_tape`]; `origin` is the canonical `[B, C', D, H, W]`.
pub fn unview_on_tape<T: Scalar>(tape: &mut Tape<T>, v: Var, t: usize, origin: [usize; 5]) -> Result<Var> {
    let unfolded: Vec<usize> = VIEW_AXES[t].iter().map(|&a| origin[a]).collect();
    let r = tape.reshape(v, &unfolded)?;
    tape.permute(r, &inverse_permutation(&VIEW_AXES[t]))
}

/// Tape handles of a pointwise projection `C → C'`.
#[derive(Clone, Copy, Debug)]
pub struct Pointwise {
    pub w: Var,
    pub b: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct QkvWeights {
    pub query: Pointwise,
    pub key: Pointwise,
    pub value: Pointwise,
}

/// Key, query and value of one view, all shaped `[N, P, Q, C']`.
#[derive(Clone, Copy, Debug)]
pub struct QkvTriple {
    pub key: Var,
    pub query: Var,
    pub value: Var,
    pub channels: usize,
}

fn pointwise<T: Scalar>(tape: &mut Tape<T>, view: Var, p: Pointwise) -> Result<Var> {
    let s = tape.shape(view).to_vec();
    let c = *s.last().unwrap();
    let rows: usize = s[..s.len() - 1].iter().product();
    let flat = tape.reshape(view, &[rows, c])?;
    let y = tape.affine(flat, p.w, p.b)?;
    let c_out = tape.shape(y)[1];
    let mut out_shape = s;
    *out_shape.last_mut().unwrap() = c_out;
    tape.reshape(y, &out_shape)
}

/// 1×1×1 convolutions of a channels-last view into key, query and value.
pub fn qkv_project<T: Scalar>(tape: &mut Tape<T>, view: Var, w: &QkvWeights) -> Result<QkvTriple> {
    let s = tape.shape(view).to_vec();
    if s.len() != 4 {
        return Err(Error::dim(format!("view must be [N, P, Q, C], got {s:?}")));
    }
    let key = pointwise(tape, view, w.key)?;
    let query = pointwise(tape, view, w.query)?;
    let value = pointwise(tape, view, w.value)?;
    let kc = tape.shape(key)[3];
    if tape.shape(query)[3] != kc || tape.shape(value)[3] != kc {
        return Err(Error::dim("key, query and value projections disagree on C'"));
    }
    Ok(QkvTriple {
        key,
        query,
        value,
        channels: kc,
    })
}

fn flatten_positions<T: Scalar>(tape: &mut Tape<T>, v: Var) -> Result<Var> {
    let s = tape.shape(v).to_vec();
    tape.reshape(v, &[s[0], s[1] * s[2], s[3]])
}

fn maybe_scale<T: Scalar>(tape: &mut Tape<T>, m: Var, inner: usize, scale: bool) -> Result<Var> {
    if scale {
        tape.scale(m, T::lit(1.0 / (inner as f64).sqrt()))
    } else {
        Ok(m)
    }
}

/// `softmax(q·kᵀ)·v` over the `S = P·Q` in-plane positions of every folded slice.
pub fn spatial_attention<T: Scalar>(tape: &mut Tape<T>, t: &QkvTriple, scale: bool) -> Result<Var> {
    let shape = tape.shape(t.value).to_vec();
    let q = flatten_positions(tape, t.query)?;
    let k = flatten_positions(tape, t.key)?;
    let v = flatten_positions(tape, t.value)?;
    let kt = tape.transpose(k)?;
    let m = tape.matmul(q, kt)?;
    let m = maybe_scale(tape, m, t.channels, scale)?;
    let a = tape.softmax_rows(m)?;
    let out = tape.matmul(a, v)?;
    tape.reshape(out, &shape)
}

/// `v·softmax(kᵀ·q)ᵀ`: every output channel is a convex mix of value channels.
pub fn channel_attention<T: Scalar>(tape: &mut Tape<T>, t: &QkvTriple, scale: bool) -> Result<Var> {
    let shape = tape.shape(t.value).to_vec();
    let q = flatten_positions(tape, t.query)?;
    let k = flatten_positions(tape, t.key)?;
    let v = flatten_positions(tape, t.value)?;
    let kt = tape.transpose(k)?;
    let m = tape.matmul(kt, q)?;
    let m = maybe_scale(tape, m, shape[1] * shape[2], scale)?;
    let a = tape.softmax_rows(m)?;
    let at = tape.transpose(a)?;
    let out = tape.matmul(v, at)?;
    tape.reshape(out, &shape)
}

/// Three-tap convolutions along the fold axis, `[C, C, 3, 1, 1]` in the
/// fold-first frame.
#[derive(Clone, Copy, Debug)]
pub struct DepthWeights {
    pub query: (Var, Var),
    pub key: (Var, Var),
    pub value: (Var, Var),
}

/// Attention across the slices of view `t`'s fold axis. Input and output are
/// canonical `[B, C, D, H, W]`.
pub fn dimensional_attention<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    w: &DepthWeights,
    t: usize,
    scale: bool,
) -> Result<Var> {
    check_5d(tape.shape(x))?;
    let xf = tape.permute(x, &FOLD_AXES[t])?;
    let conv = |tape: &mut Tape<T>, (wt, b): (Var, Var)| tape.conv3d(xf, wt, Some(b), 1, [1, 0, 0]);
    let q = conv(tape, w.query)?;
    let k = conv(tape, w.key)?;
    let v = conv(tape, w.value)?;
    let fs = tape.shape(v).to_vec(); // [B, C, L, P, Q]
    let (b, c, l, p, qq) = (fs[0], fs[1], fs[2], fs[3], fs[4]);
    let rest = c * p * qq;
    let slices = |tape: &mut Tape<T>, u: Var| -> Result<Var> {
        let s = tape.permute(u, &[0, 2, 1, 3, 4])?;
        tape.reshape(s, &[b, l, rest])
    };
    let q = slices(tape, q)?;
    let k = slices(tape, k)?;
    let v = slices(tape, v)?;
    let kt = tape.transpose(k)?;
    let m = tape.matmul(q, kt)?;
    let m = maybe_scale(tape, m, rest, scale)?;
    let a = tape.softmax_rows(m)?;
    let out = tape.matmul(a, v)?;
    let out = tape.reshape(out, &[b, l, c, p, qq])?;
    let out = tape.permute(out, &[0, 2, 1, 3, 4])?;
    tape.permute(out, &inverse_permutation(&FOLD_AXES[t]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MvcsConfig {
    pub channels: usize,
    /// Adds the block input to the attention sum.
    pub residual: bool,
    /// Divides similarities by the square root of their inner extent.
    pub scale_similarity: bool,
    /// Starts both value maps at zero, so a residual block begins as the
    /// identity. Nine summed paths otherwise grow activations about tenfold
    /// per block at He scale.
    pub zero_value_init: bool,
}

impl MvcsConfig {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            residual: true,
            scale_similarity: false,
            zero_value_init: false,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct ViewParams {
    qkv: [(ParamId, ParamId); 3],
    depth: [(ParamId, ParamId); 3],
}

/// Parameters of one block: per view, a pointwise query/key/value triple and
/// a three-tap query/key/value triple along the fold axis.
#[derive(Clone, Debug)]
pub struct MvcsBlock {
    pub config: MvcsConfig,
    prefix: String,
    views: [ViewParams; 3],
}

const ROLES: [&str; 3] = ["query", "key", "value"];

impl MvcsBlock {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        config: MvcsConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let c = config.channels;
        if c == 0 {
            return Err(Error::Config("MVCS block needs at least one channel".into()));
        }
        let mut views = Vec::with_capacity(3);
        for t in 0..3 {
            let mut pair = |name: String, shape: Vec<usize>, fan_in: usize| {
                let w = store.add_he(format!("{name}.w"), shape, fan_in, rng);
                let b = store.add_zeros(format!("{name}.b"), vec![c]);
                (w, b)
            };
            let qkv: Vec<_> = ROLES
                .iter()
                .map(|role| pair(format!("{prefix}.view{t}.{role}"), vec![c, c], c))
                .collect();
            let depth: Vec<_> = ROLES
                .iter()
                .map(|role| pair(format!("{prefix}.view{t}.depth_{role}"), vec![c, c, 3, 1, 1], 3 * c))
                .collect();
            if config.zero_value_init {
                // drawn first so the generator stream does not depend on the flag
                for (w, _) in [qkv[2], depth[2]] {
                    store.get_mut(w).data_mut().fill(T::zero());
                }
            }
            let (qkv, depth) = (qkv.try_into().unwrap(), depth.try_into().unwrap());
            views.push(ViewParams { qkv, depth });
        }
        Ok(Self {
            config,
            prefix: prefix.to_string(),
            views: views.try_into().unwrap(),
        })
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn qkv_weights(&self, bound: &Bound, t: usize) -> QkvWeights {
        let pw = |r: usize| {
            let (w, b) = self.views[t].qkv[r];
            Pointwise { w: bound[w], b: bound[b] }
        };
        QkvWeights {
            query: pw(0),
            key: pw(1),
            value: pw(2),
        }
    }

    pub fn depth_weights(&self, bound: &Bound, t: usize) -> DepthWeights {
        let dw = |r: usize| {
            let (w, b) = self.views[t].depth[r];
            (bound[w], bound[b])
        };
        DepthWeights {
            query: dw(0),
            key: dw(1),
            value: dw(2),
        }
    }

    /// Sets every projection to the identity map and every bias to zero.
    pub fn set_identity<T: Scalar>(&self, store: &mut ParamStore<T>) {
        let c = self.config.channels;
        for vp in &self.views {
            for &(w, b) in &vp.qkv {
                let t = store.get_mut(w);
                t.data_mut().iter_mut().for_each(|v| *v = T::zero());
                for i in 0..c {
                    t.data_mut()[i * c + i] = T::one();
                }
                store.get_mut(b).data_mut().iter_mut().for_each(|v| *v = T::zero());
            }
            for &(w, b) in &vp.depth {
                let t = store.get_mut(w);
                t.data_mut().iter_mut().for_each(|v| *v = T::zero());
                for i in 0..c {
                    // centre tap of the [i, i] kernel
                    t.data_mut()[(i * c + i) * 3 + 1] = T::one();
                }
                store.get_mut(b).data_mut().iter_mut().for_each(|v| *v = T::zero());
            }
        }
    }

    /// Sum over views of spatial + channel + dimensional attention, plus the
    /// input when `residual` is set.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        let origin = check_5d(tape.shape(x))?;
        if origin[1] != self.config.channels {
            return Err(Error::dim(format!(
                "MVCS block built for {} channels received {:?}",
                self.config.channels, origin
            )));
        }
        let scale = self.config.scale_similarity;
        let mut terms = Vec::with_capacity(7);
        for t in 0..3 {
            let view = view_on_tape(tape, x, t)?;
            let triple = qkv_project(tape, view, &self.qkv_weights(bound, t))?;
            let s = spatial_attention(tape, &triple, scale)?;
            let c = channel_attention(tape, &triple, scale)?;
            let sc = tape.add(s, c)?;
            terms.push(unview_on_tape(tape, sc, t, origin)?);
            terms.push(dimensional_attention(tape, x, &self.depth_weights(bound, t), t, scale)?);
        }
        if self.config.residual {
            terms.push(x);
        }
        tape.add_all(&terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn view_shapes_follow_fold_axes() {
        let x = random(vec![1, 1, 2, 2, 2], 0);
        let vs = make_views(&x).unwrap();
        for v in &vs.views {
            assert_eq!(v.shape(), &[2, 2, 2, 1]);
        }
        let x = random(vec![2, 3, 4, 5, 6], 1);
        let vs = make_views(&x).unwrap();
        assert_eq!(vs.views[0].shape(), &[8, 5, 6, 3]);
        assert_eq!(vs.views[1].shape(), &[10, 6, 4, 3]);
        assert_eq!(vs.views[2].shape(), &[12, 5, 4, 3]);
        for t in 0..3 {
            assert_eq!(vs.unfold(t, &vs.views[t]).unwrap(), x);
        }
    }

    #[test]
    fn view_one_element_position() {
        let x = Tensor::<f64>::from_fn(vec![1, 1, 2, 2, 2], |i| i as f64);
        let vs = make_views(&x).unwrap();
        // (b,c,d,h,w) = (0,0,1,0,1) sits at (b·H + h, w, d, c) in view 1
        assert_eq!(vs.views[1].at(&[0, 1, 1, 0]), x.at(&[0, 0, 1, 0, 1]));
    }

    #[test]
    fn wrong_rank_is_rejected() {
        let x = Tensor::<f64>::zeros(vec![2, 2, 2]);
        assert!(matches!(make_views(&x), Err(Error::Dimension(_))));
    }

    fn block(c: usize, seed: u64) -> (ParamStore<f64>, MvcsBlock) {
        let mut store = ParamStore::new();
        let mut cfg = MvcsConfig::new(c);
        cfg.residual = false;
        let b = MvcsBlock::new(&mut store, "mvcs", cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        (store, b)
    }

    #[test]
    fn unit_volume_with_identity_projections_is_nine_x() {
        let (mut store, b) = block(1, 0);
        b.set_identity(&mut store);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.leaf(Tensor::from_f64(vec![1, 1, 1, 1, 1], &[0.7]).unwrap());
        let y = b.forward(&mut tape, &bound, x).unwrap();
        assert!((tape.value(y).data()[0] - 6.3).abs() < 1e-12);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let (store, b) = block(2, 4);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.leaf(Tensor::zeros(vec![1, 2, 3, 3, 3]));
        let y = b.forward(&mut tape, &bound, x).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_keeps_canonical_shape() {
        let mut store = ParamStore::<f64>::new();
        let b = MvcsBlock::new(&mut store, "m", MvcsConfig::new(3), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.leaf(random(vec![2, 3, 2, 4, 3], 9));
        let y = b.forward(&mut tape, &bound, x).unwrap();
        assert_eq!(tape.shape(y), &[2, 3, 2, 4, 3]);
        assert!(tape.value(y).is_finite());
    }

    #[test]
    fn channel_mismatch_is_dimension_error() {
        let (store, b) = block(2, 0);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.leaf(Tensor::zeros(vec![1, 3, 2, 2, 2]));
        assert!(matches!(b.forward(&mut tape, &bound, x), Err(Error::Dimension(_))));
    }
}
