//! Special functions: gamma, Mittag-Leffler and the exact moments of the
//! Mittag-Leffler convolution kernels.

pub mod gamma;
pub mod kernel;
pub mod mittag_leffler;

pub use gamma::{gamma, rgamma};
pub use kernel::{kernel_segment_integral, MlTable};
pub use mittag_leffler::{ml2, ml3, MlBranch, MlParams};
