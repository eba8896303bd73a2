//! Numerical kernel for a semiclassical calculus on `G = PGL2(R)`.
//!
//! The crate is organized around one chain of structures:
//!
//! * [`lie`]: the split real form `sl2` with a fixed basis, the chart
//!   `exp`/`log` between the algebra and the group, normalized Haar data,
//!   and the coadjoint action on the imaginary dual.
//! * [`orbits`]: quadrature on the one-sheeted coadjoint orbits
//!   `O(lambda) = {Lambda = lambda}`, `lambda < 0`, with the symplectic
//!   normalization tied to the Haar choices in [`lie`].
//! * [`repr`]: tempered irreducible representations in the weight basis
//!   `l2(Q)`, truncated to a finite index window.
//! * [`quantize`]: the compactly supported operator assignment
//!   `a -> opp(a)` built from a cutoff chart integral, its star product,
//!   and trace comparisons against orbit integrals.
//! * [`microloc`]: band-matrix bookkeeping used to compare positive
//!   operators against distinguished-vector functionals.
//! * [`mainterm`]: the orbit disintegration of a group integral and the
//!   main-term evaluation it yields.
//! * [`rescale`]: polar coordinates on a matrix neighborhood of the
//!   scalars and the unitary rescaling family.
//! * [`padic`]: exact unramified local factors for PGL2 over Q_p.
//!
//! Everything downstream of a random seed or a thread count is kept
//! bit-reproducible: reductions happen in a fixed index order and the
//! only parallelism is over precomputed node lists.

pub mod error;
pub mod num;

pub mod lie;
pub mod linalg;
pub mod orbits;
pub mod repr;

pub mod quantize;

pub mod mainterm;
pub mod microloc;
pub mod rescale;

pub mod padic;

pub mod report;

pub use error::CoreError;
pub use lie::{DualVec, GroupElt, LieVec};
