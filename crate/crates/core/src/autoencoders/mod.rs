//! Encode/decode maps: truncated POD bases, neural coders, and the
//! variable-separated stack combining them.

mod neural;
mod pod;
mod stack;

pub use neural::NeuralCoder;
pub use pod::{pod_fit, pod_fit_with, recon_error_curve, PodBasis};
pub use stack::{AutoencoderStack, Coder, CoderGroup, StackVars};
