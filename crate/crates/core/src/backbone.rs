//! Desk-scale 3D residual network with MVCS blocks after its stages.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::mvcs::{MvcsBlock, MvcsConfig};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub in_channels: usize,
    pub stem_channels: usize,
    pub stem_stride: usize,
    pub stage_channels: Vec<usize>,
    pub stage_strides: Vec<usize>,
    pub mvcs_after_stage: Vec<bool>,
    pub feature_dim: usize,
    pub mvcs_residual: bool,
    pub scale_similarity: bool,
    /// See [`MvcsConfig::zero_value_init`].
    pub mvcs_zero_value_init: bool,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            stem_channels: 8,
            stem_stride: 2,
            stage_channels: vec![8, 16],
            stage_strides: vec![2, 2],
            mvcs_after_stage: vec![true, true],
            feature_dim: 64,
            mvcs_residual: true,
            scale_similarity: false,
            mvcs_zero_value_init: true,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.stage_channels.len();
        if n == 0 {
            return Err(Error::Config("backbone needs at least one stage".into()));
        }
        if self.stage_strides.len() != n || self.mvcs_after_stage.len() != n {
            return Err(Error::Config(format!(
                "stage lists disagree: {n} channel counts, {} strides, {} MVCS flags",
                self.stage_strides.len(),
                self.mvcs_after_stage.len()
            )));
        }
        let counts = [self.in_channels, self.stem_channels, self.feature_dim];
        if counts.contains(&0) || self.stage_channels.contains(&0) {
            return Err(Error::Config("channel counts and feature size must be positive".into()));
        }
        if self.stem_stride == 0 || self.stage_strides.contains(&0) {
            return Err(Error::Config("strides must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Conv {
    w: ParamId,
    b: ParamId,
}

impl Conv {
    fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add_he(format!("{name}.w"), vec![c_out, c_in, k, k, k], c_in * k * k * k, rng);
        let b = store.add_zeros(format!("{name}.b"), vec![c_out]);
        Self { w, b }
    }

    fn apply<T: Scalar>(&self, tape: &mut Tape<T>, bound: &Bound, x: Var, stride: usize, pad: usize) -> Result<Var> {
        tape.conv3d(x, bound[self.w], Some(bound[self.b]), stride, [pad; 3])
    }
}

/// Two 3×3×3 convolutions around a shortcut; the shortcut is a strided
/// 1×1×1 projection when the stride or channel count changes.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    conv1: Conv,
    conv2: Conv,
    shortcut: Option<Conv>,
    stride: usize,
}

impl ResidualBlock {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let conv1 = Conv::new(store, &format!("{name}.conv1"), c_in, c_out, 3, rng);
        let conv2 = Conv::new(store, &format!("{name}.conv2"), c_out, c_out, 3, rng);
        let shortcut = (stride != 1 || c_in != c_out).then(|| Conv::new(store, &format!("{name}.shortcut"), c_in, c_out, 1, rng));
        Self {
            conv1,
            conv2,
            shortcut,
            stride,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        let h = self.conv1.apply(tape, bound, x, self.stride, 1)?;
        let h = tape.relu(h)?;
        let h = self.conv2.apply(tape, bound, h, 1, 1)?;
        let skip = match &self.shortcut {
            Some(p) => p.apply(tape, bound, x, self.stride, 0)?,
            None => x,
        };
        tape.add(h, skip)
    }

    /// Names of the two branch convolutions' tensors (weights then biases).
    pub fn branch_params(&self) -> [ParamId; 4] {
        [self.conv1.w, self.conv1.b, self.conv2.w, self.conv2.b]
    }
}

/// Output of the image branch: pooled feature `[B, F_img]` and logit `[B]`.
#[derive(Clone, Copy, Debug)]
pub struct ImageOutput {
    pub feature: Var,
    pub logit: Var,
}

#[derive(Clone, Debug)]
pub struct Backbone {
    pub config: BackboneConfig,
    stem: Conv,
    stages: Vec<(ResidualBlock, Option<MvcsBlock>)>,
    feature: (ParamId, ParamId),
    head: (ParamId, ParamId),
}

impl Backbone {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        config: BackboneConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let stem = Conv::new(store, "image.stem", config.in_channels, config.stem_channels, 3, rng);
        let mut c_in = config.stem_channels;
        let mut stages = Vec::new();
        for (i, (&c, &s)) in config.stage_channels.iter().zip(&config.stage_strides).enumerate() {
            let block = ResidualBlock::new(store, &format!("image.stage{i}"), c_in, c, s, rng);
            let mvcs = if config.mvcs_after_stage[i] {
                let cfg = MvcsConfig {
                    channels: c,
                    residual: config.mvcs_residual,
                    scale_similarity: config.scale_similarity,
                    zero_value_init: config.mvcs_zero_value_init,
                };
                Some(MvcsBlock::new(store, &format!("image.mvcs{i}"), cfg, rng)?)
            } else {
                None
            };
            stages.push((block, mvcs));
            c_in = c;
        }
        let f = config.feature_dim;
        let feature = (
            store.add_he("image.feature.w", vec![c_in, f], c_in, rng),
            store.add_zeros("image.feature.b", vec![f]),
        );
        let head = (store.add_he("image.head.w", vec![f, 1], f, rng), store.add_zeros("image.head.b", vec![1]));
        Ok(Self {
            config,
            stem,
            stages,
            feature,
            head,
        })
    }

    pub fn mvcs_blocks(&self) -> impl Iterator<Item = &MvcsBlock> {
        self.stages.iter().filter_map(|(_, m)| m.as_ref())
    }

    /// stem → residual stages (+ MVCS) → global average pool → feature affine → logit affine
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, bound: &Bound, volume: Var) -> Result<ImageOutput> {
        let s = tape.shape(volume);
        if s.len() != 5 || s[1] != self.config.in_channels {
            return Err(Error::dim(format!(
                "backbone expects [B, {}, D, H, W] volumes, got {s:?}",
                self.config.in_channels
            )));
        }
        let h = self.stem.apply(tape, bound, volume, self.config.stem_stride, 1)?;
        let mut h = tape.relu(h)?;
        for (block, mvcs) in &self.stages {
            h = block.forward(tape, bound, h)?;
            if let Some(m) = mvcs {
                h = m.forward(tape, bound, h)?;
            }
        }
        let pooled = tape.mean_trailing(h, 2)?;
        let feature = tape.affine(pooled, bound[self.feature.0], bound[self.feature.1])?;
        let logit = tape.affine(feature, bound[self.head.0], bound[self.head.1])?;
        let b = tape.shape(logit)[0];
        let logit = tape.reshape(logit, &[b])?;
        Ok(ImageOutput { feature, logit })
    }
}
