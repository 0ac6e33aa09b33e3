//! Frequency-level perturbation GAN for deepfake detection.
//!
//! A generator `G = F⁻¹ ∘ H ∘ F` produces additive perturbation maps in the
//! frequency domain, a discriminator pushes perturbed images toward the real
//! distribution, and a binary classifier is trained on `x + G(x)`. The three
//! networks are updated alternately on every mini-batch.

pub mod checkpoint;
pub mod classifier;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod frepgan;
pub mod nn;
pub mod objective;
pub mod parallel;
pub mod reduce;
pub mod spectral;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{ImageTensor, PerturbationMap, Shape, Tensor3};
