pub mod checkpoint;
pub mod config;
pub mod denoiser;
pub mod discriminator;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod imaging;
pub mod losses;
pub mod nn;
mod nn_util;
pub mod noise;
pub mod optim;
pub mod real;
pub mod rng;
pub mod tensor;
pub mod toy;
pub mod training;

pub use error::{Error, Result};
pub use real::{Precision, Real};
pub use tensor::{FeatureTensor, ImageTensor, Tensor};
