//! The four model arms compared in the ablation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Mode, Tape, Var};
use crate::backbone::{Backbone, BackboneConfig};
use crate::cmaf::{Cmaf, CmafConfig};
use crate::emr::{EmrConfig, EmrNet};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Image,
    Emr,
    /// Both modalities, features concatenated straight into an FC head.
    NoCmaf,
    Full,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Image, Arm::Emr, Arm::NoCmaf, Arm::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Image => "image",
            Arm::Emr => "emr",
            Arm::NoCmaf => "nocmaf",
            Arm::Full => "full",
        }
    }

    pub fn uses_image(self) -> bool {
        self != Arm::Emr
    }

    pub fn uses_emr(self) -> bool {
        self != Arm::Image
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown arm `{s}` (full, image, emr, nocmaf)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub emr: EmrConfig,
    pub cmaf: CmafConfig,
    /// Hidden width of the concatenation head used by the `nocmaf` arm.
    pub concat_hidden: usize,
    pub concat_dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig::default(),
            emr: EmrConfig::default(),
            cmaf: CmafConfig::default(),
            concat_hidden: 64,
            concat_dropout: 0.2,
        }
    }
}

/// One mini-batch: volumes `[B, C, D, H, W]` and selected EMR features `[B, k]`.
#[derive(Clone, Debug)]
pub struct Batch<T: Scalar> {
    pub volumes: Option<Tensor<T>>,
    pub emr: Option<Tensor<T>>,
}

#[derive(Clone, Debug)]
struct ConcatHead {
    hidden: (ParamId, ParamId),
    out: (ParamId, ParamId),
    dropout: f64,
}

#[derive(Clone, Debug)]
pub struct Model<T: Scalar> {
    pub arm: Arm,
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    backbone: Option<Backbone>,
    emr: Option<EmrNet>,
    cmaf: Option<Cmaf>,
    concat: Option<ConcatHead>,
}

impl<T: Scalar> Model<T> {
    /// Parameters are drawn from a generator seeded with `seed`, in the order
    /// backbone, EMR net, fusion.
    pub fn new(arm: Arm, config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let backbone = if arm.uses_image() {
            Some(Backbone::new(&mut store, config.backbone.clone(), &mut rng)?)
        } else {
            None
        };
        let emr = if arm.uses_emr() {
            Some(EmrNet::new(&mut store, config.emr.clone(), &mut rng)?)
        } else {
            None
        };
        let (f_img, f_emr) = (config.backbone.feature_dim, config.emr.feature_dim);
        let cmaf = if arm == Arm::Full {
            Some(Cmaf::new(&mut store, config.cmaf.clone(), f_img, f_emr, &mut rng)?)
        } else {
            None
        };
        let concat = if arm == Arm::NoCmaf {
            let h = config.concat_hidden;
            if h == 0 {
                return Err(Error::Config("concat_hidden must be positive".into()));
            }
            let w = f_img + f_emr;
            Some(ConcatHead {
                hidden: (store.add_he("concat.hidden.w", vec![w, h], w, &mut rng), store.add_zeros("concat.hidden.b", vec![h])),
                out: (store.add_he("concat.out.w", vec![h, 1], h, &mut rng), store.add_zeros("concat.out.b", vec![1])),
                dropout: config.concat_dropout,
            })
        } else {
            None
        };
        Ok(Self {
            arm,
            config,
            store,
            backbone,
            emr,
            cmaf,
            concat,
        })
    }

    pub fn backbone(&self) -> Option<&Backbone> {
        self.backbone.as_ref()
    }

    pub fn cmaf(&self) -> Option<&Cmaf> {
        self.cmaf.as_ref()
    }

    /// Logits `[B]`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        batch: &Batch<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let missing = |what: &str| Error::Usage(format!("the {} arm needs {what} in every batch", self.arm));
        let image = match &self.backbone {
            Some(net) => {
                let v = batch.volumes.clone().ok_or_else(|| missing("volumes"))?;
                let v = tape.constant(v);
                Some(net.forward(tape, bound, v)?)
            }
            None => None,
        };
        let emr = match &self.emr {
            Some(net) => {
                let x = batch.emr.clone().ok_or_else(|| missing("EMR features"))?;
                let x = tape.constant(x);
                Some(net.forward(tape, bound, x, mode, rng)?)
            }
            None => None,
        };
        match (self.arm, image, emr) {
            (Arm::Image, Some(i), _) => Ok(i.logit),
            (Arm::Emr, _, Some(e)) => Ok(e.logit),
            (Arm::NoCmaf, Some(i), Some(e)) => {
                let head = self.concat.as_ref().expect("nocmaf head");
                let b = tape.shape(i.feature)[0];
                let x = tape.concat_last(&[i.feature, e.feature])?;
                let h = tape.affine(x, bound[head.hidden.0], bound[head.hidden.1])?;
                let h = tape.relu(h)?;
                let h = tape.dropout(h, head.dropout, mode, rng)?;
                let z = tape.affine(h, bound[head.out.0], bound[head.out.1])?;
                tape.reshape(z, &[b])
            }
            (Arm::Full, Some(i), Some(e)) => {
                let cmaf = self.cmaf.as_ref().expect("cmaf head");
                Ok(cmaf.forward(tape, bound, i.feature, e.feature, mode, rng)?.logit)
            }
            _ => Err(Error::Internal(format!("{} arm built without its branches", self.arm))),
        }
    }
}
