//! Shared numerical utilities: quadrature rules, compensated sums,
//! power-law fits, smooth cutoffs with a cached Fourier transform, and
//! uniform-grid containers with cubic interpolation.

pub mod bump;
pub mod fit;
pub mod grid;
pub mod interp;
pub mod quad;

pub use bump::{bump, bump_hat, cutoff_profile, smooth_step};
pub use fit::{fit_line, loglog_slope, PowerLaw};
pub use grid::{Grid3, UniformGrid1};
pub use quad::{gauss_legendre, gauss_legendre_on, midpoint_nodes, NeumaierSum, NeumaierSumC};
