pub mod autodiff;
pub mod blocks;
pub mod error;
pub mod harness;
pub mod layers;
pub mod model;
pub mod nn;
pub mod params;
pub mod spectral;
pub mod tensor;
pub mod verify;
pub mod volume;

pub use autodiff::{Tape, Var};
pub use error::{FeError, Result};
pub use params::{Builder, Ctx, ParamStore};
pub use tensor::{ComplexTensor, Tensor};
