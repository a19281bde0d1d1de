//! Cross-modal attention fusion: both modality features go to a common
//! space, are split into tokens, and attend to each other in both directions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Mode, Tape, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::Scalar;

/// How the image feature joins the two context maps before the head.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    #[default]
    Concat,
    /// Elementwise sum; needs the image feature width to equal `common_dim`.
    Add,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmafConfig {
    pub common_dim: usize,
    pub tokens: usize,
    pub token_dim: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub combine: Combine,
}

impl Default for CmafConfig {
    fn default() -> Self {
        Self {
            common_dim: 64,
            tokens: 8,
            token_dim: 8,
            hidden: 64,
            dropout: 0.2,
            combine: Combine::Concat,
        }
    }
}

impl CmafConfig {
    pub fn validate(&self, image_dim: usize) -> Result<()> {
        if self.tokens * self.token_dim != self.common_dim {
            return Err(Error::Config(format!(
                "{} tokens of width {} do not tile a common space of {}",
                self.tokens, self.token_dim, self.common_dim
            )));
        }
        if self.common_dim == 0 || self.hidden == 0 {
            return Err(Error::Config("CMAF sizes must be positive".into()));
        }
        if self.combine == Combine::Add && image_dim != self.common_dim {
            return Err(Error::Config(format!(
                "additive combine needs image feature width {image_dim} == common_dim {}",
                self.common_dim
            )));
        }
        Ok(())
    }

    /// Input width of the fusion head.
    pub fn fused_width(&self, image_dim: usize) -> usize {
        match self.combine {
            Combine::Concat => image_dim + 2 * self.common_dim,
            Combine::Add => self.common_dim,
        }
    }
}

type Linear = (ParamId, ParamId);

/// Raw scores and normalized match degrees, each `[B, S, S]`.
///
/// `s[i][j]` pairs image token `i` with text token `j`; `beta[j][i]` is the
/// softmax of `s[·][j]` over image tokens. `t` and `rho` swap the roles.
#[derive(Clone, Copy, Debug)]
pub struct MatchDegrees {
    pub s: Var,
    pub t: Var,
    pub beta: Var,
    pub rho: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct CmafOutput {
    pub logit: Var,
    pub degrees: MatchDegrees,
}

#[derive(Clone, Debug)]
pub struct Cmaf {
    pub config: CmafConfig,
    image_dim: usize,
    emr_dim: usize,
    image_fc: Linear,
    emr_fc: Linear,
    q1: Linear,
    k1: Linear,
    q2: Linear,
    k2: Linear,
    hidden: Linear,
    out: Linear,
}

impl Cmaf {
    /// Registers `cmaf.{image_fc,emr_fc,q1,k1,q2,k2,hidden,out}.{w,b}`.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        config: CmafConfig,
        image_dim: usize,
        emr_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate(image_dim)?;
        let mut lin = |name: &str, i: usize, o: usize| -> Linear {
            (
                store.add_he(format!("cmaf.{name}.w"), vec![i, o], i, rng),
                store.add_zeros(format!("cmaf.{name}.b"), vec![o]),
            )
        };
        let (df, d) = (config.common_dim, config.token_dim);
        let image_fc = lin("image_fc", image_dim, df);
        let emr_fc = lin("emr_fc", emr_dim, df);
        let q1 = lin("q1", d, d);
        let k1 = lin("k1", d, d);
        let q2 = lin("q2", d, d);
        let k2 = lin("k2", d, d);
        let hidden = lin("hidden", config.fused_width(image_dim), config.hidden);
        let out = lin("out", config.hidden, 1);
        Ok(Self {
            config,
            image_dim,
            emr_dim,
            image_fc,
            emr_fc,
            q1,
            k1,
            q2,
            k2,
            hidden,
            out,
        })
    }

    fn check(&self, tape: &Tape<impl Scalar>, v: Var, width: usize, what: &str) -> Result<usize> {
        match tape.shape(v) {
            &[b, w] if w == width => Ok(b),
            s => Err(Error::dim(format!("{what} must be [B, {width}], got {s:?}"))),
        }
    }

    /// Affine map of each modality to the common space, then a row-major
    /// split into `S` tokens of width `d`: both outputs are `[B, S, d]`.
    pub fn project_common<T: Scalar>(&self, tape: &mut Tape<T>, bound: &Bound, x_img: Var, y_emr: Var) -> Result<(Var, Var)> {
        let b = self.check(tape, x_img, self.image_dim, "image feature")?;
        let b2 = self.check(tape, y_emr, self.emr_dim, "EMR feature")?;
        if b != b2 {
            return Err(Error::dim(format!("batch sizes differ: {b} images, {b2} records")));
        }
        let tok = [b, self.config.tokens, self.config.token_dim];
        let x = tape.affine(x_img, bound[self.image_fc.0], bound[self.image_fc.1])?;
        let y = tape.affine(y_emr, bound[self.emr_fc.0], bound[self.emr_fc.1])?;
        Ok((tape.reshape(x, &tok)?, tape.reshape(y, &tok)?))
    }

    fn token_map<T: Scalar>(tape: &mut Tape<T>, bound: &Bound, map: Linear, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, bound[map.0])?;
        tape.add_bias(xw, bound[map.1])
    }

    pub fn match_degrees<T: Scalar>(&self, tape: &mut Tape<T>, bound: &Bound, x: Var, y: Var) -> Result<MatchDegrees> {
        let (sx, sy) = (tape.shape(x), tape.shape(y));
        let want = [self.config.tokens, self.config.token_dim];
        if sx.len() != 3 || sx[1..] != want || sx != sy {
            return Err(Error::dim(format!("token grids must be [B, {}, {}], got {sx:?} and {sy:?}", want[0], want[1])));
        }
        let q1 = Self::token_map(tape, bound, self.q1, x)?;
        let k2 = Self::token_map(tape, bound, self.k2, y)?;
        let k2t = tape.transpose(k2)?;
        let s = tape.matmul(q1, k2t)?;
        let st = tape.transpose(s)?;
        let beta = tape.softmax_rows(st)?;

        let q2 = Self::token_map(tape, bound, self.q2, y)?;
        let k1 = Self::token_map(tape, bound, self.k1, x)?;
        let k1t = tape.transpose(k1)?;
        let t = tape.matmul(q2, k1t)?;
        let tt = tape.transpose(t)?;
        let rho = tape.softmax_rows(tt)?;
        Ok(MatchDegrees { s, t, beta, rho })
    }

    /// `ctx_t2i[j] = Σ_i β[j,i]·x_i` and `ctx_i2t[j] = Σ_i ρ[j,i]·y_i`.
    pub fn cross_attention_apply<T: Scalar>(tape: &mut Tape<T>, m: &MatchDegrees, x: Var, y: Var) -> Result<(Var, Var)> {
        Ok((tape.matmul(m.beta, x)?, tape.matmul(m.rho, y)?))
    }

    pub fn fuse_classify<T: Scalar, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        image_feature: Var,
        ctx_t2i: Var,
        ctx_i2t: Var,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let b = self.check(tape, image_feature, self.image_dim, "image feature")?;
        let flat = [b, self.config.common_dim];
        let a = tape.reshape(ctx_t2i, &flat)?;
        let c = tape.reshape(ctx_i2t, &flat)?;
        let fused = match self.config.combine {
            Combine::Concat => tape.concat_last(&[image_feature, a, c])?,
            Combine::Add => tape.add_all(&[image_feature, a, c])?,
        };
        let h = tape.affine(fused, bound[self.hidden.0], bound[self.hidden.1])?;
        let h = tape.relu(h)?;
        let h = tape.dropout(h, self.config.dropout, mode, rng)?;
        let z = tape.affine(h, bound[self.out.0], bound[self.out.1])?;
        tape.reshape(z, &[b])
    }

    pub fn forward<T: Scalar, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        image_feature: Var,
        emr_feature: Var,
        mode: Mode,
        rng: &mut R,
    ) -> Result<CmafOutput> {
        let (x, y) = self.project_common(tape, bound, image_feature, emr_feature)?;
        let degrees = self.match_degrees(tape, bound, x, y)?;
        let (a, c) = Self::cross_attention_apply(tape, &degrees, x, y)?;
        let logit = self.fuse_classify(tape, bound, image_feature, a, c, mode, rng)?;
        Ok(CmafOutput { logit, degrees })
    }

    /// Final layer, for tests that pin the logit to its bias.
    pub fn output_layer(&self) -> (ParamId, ParamId) {
        self.out
    }
}
