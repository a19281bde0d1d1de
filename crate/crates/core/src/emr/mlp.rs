//! Embedding of the selected attributes and the EMR classifier.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::pipeline::EmrConfig;
use crate::autograd::{Mode, Tape, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};

/// Output of the EMR branch: embedding tokens `[B, E]`, feature `[B, F]`, logit `[B]`.
#[derive(Clone, Copy, Debug)]
pub struct EmrOutput {
    pub embedding: Var,
    pub feature: Var,
    pub logit: Var,
}

#[derive(Clone, Debug)]
pub struct EmrNet {
    pub config: EmrConfig,
    embed: (ParamId, ParamId),
    hidden: (ParamId, ParamId),
    feature: (ParamId, ParamId),
    head: (ParamId, ParamId),
}

fn he<T: Scalar, R: Rng + ?Sized>(shape: Vec<usize>, fan_in: usize, rng: &mut R) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| {
        let z: f64 = StandardNormal.sample(rng);
        T::lit(z * std)
    })
}

impl EmrNet {
    /// Registers `emr.embed`, `emr.hidden`, `emr.feature` and `emr.head`.
    pub fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, config: EmrConfig, rng: &mut R) -> Result<Self> {
        let (k, e, h, f) = (config.k, config.embed_dim, config.hidden, config.feature_dim);
        if [k, e, h, f].contains(&0) {
            return Err(Error::Config("EMR sizes k, embed_dim, hidden, feature_dim must be positive".into()));
        }
        let embed = if config.frozen_embed {
            (
                store.add_frozen("emr.embed.w", he(vec![k, e], k, rng)),
                store.add_frozen("emr.embed.b", Tensor::zeros(vec![e])),
            )
        } else {
            (store.add_he("emr.embed.w", vec![k, e], k, rng), store.add_zeros("emr.embed.b", vec![e]))
        };
        let hidden = (store.add_he("emr.hidden.w", vec![e, h], e, rng), store.add_zeros("emr.hidden.b", vec![h]));
        let feature = (store.add_he("emr.feature.w", vec![h, f], h, rng), store.add_zeros("emr.feature.b", vec![f]));
        let head = (store.add_he("emr.head.w", vec![f, 1], f, rng), store.add_zeros("emr.head.b", vec![1]));
        Ok(Self {
            config,
            embed,
            hidden,
            feature,
            head,
        })
    }

    /// `x` is `[B, k]` of normalized selected attributes.
    pub fn forward<T: Scalar, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        x: Var,
        mode: Mode,
        rng: &mut R,
    ) -> Result<EmrOutput> {
        let s = tape.shape(x);
        if s.len() != 2 || s[1] != self.config.k {
            return Err(Error::dim(format!("EMR net expects [B, {}], got {s:?}", self.config.k)));
        }
        let b = s[0];
        let embedding = tape.affine(x, bound[self.embed.0], bound[self.embed.1])?;
        let embedding = tape.relu(embedding)?;
        let h = tape.affine(embedding, bound[self.hidden.0], bound[self.hidden.1])?;
        let h = tape.relu(h)?;
        let h = tape.dropout(h, self.config.dropout, mode, rng)?;
        let feature = tape.affine(h, bound[self.feature.0], bound[self.feature.1])?;
        let feature = tape.relu(feature)?;
        let logit = tape.affine(feature, bound[self.head.0], bound[self.head.1])?;
        let logit = tape.reshape(logit, &[b])?;
        Ok(EmrOutput {
            embedding,
            feature,
            logit,
        })
    }
}
