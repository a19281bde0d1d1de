pub mod autograd;
pub mod backbone;
pub mod cmaf;
pub mod emr;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod mvcs;
mod kernels;
pub mod optim;
pub mod params;
pub mod synth;
pub mod tensor;

pub use autograd::{Mode, Tape, Var};
pub use error::{Error, Result};
pub use params::{Bound, ParamId, ParamStore};
pub use tensor::{Scalar, Tensor};
