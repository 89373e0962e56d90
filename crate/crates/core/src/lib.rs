//! scalestack: a multi-scale convolutional classifier toolkit.
//!
//! The pipeline decomposes images into a Gaussian scale-space pyramid,
//! trains one fully-convolutional classifier per pyramid level, and
//! averages the per-scale softmax posteriors into an ensemble prediction.
//! Evaluation covers mean class accuracy, mean recall and F-score over
//! every scale subset, cross-scale correlation of per-class accuracies,
//! scale-variation rankings, and guided-backprop saliency maps.

pub mod error;
pub mod gradcheck;
pub mod image;
pub mod pyramid;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use image::Image;
pub use pyramid::{ImagePyramid, PyramidKind};
pub use tensor::{ConvSpec, Tensor};
