//! Maximum-entropy distributions under subset-marginal constraints, the
//! covering rate regions built from them, and a random-coding laboratory that
//! checks those regions by simulation.
//!
//! The crate is organised bottom-up:
//!
//! - [`pmf`]: dense joint PMFs, marginals, entropies and constraint systems.
//! - [`lp`]: a small dense two-phase simplex used for feasibility and as the
//!   linear oracle of the Frank-Wolfe solver.
//! - [`maxent`]: iterative proportional fitting for the maximum-entropy joint,
//!   its conditional variant and LP feasibility certificates.
//! - [`regions`]: inequality systems for the fixed-joint region, its union over
//!   consistent joints, and the improved max-entropy region.
//! - [`covering`]: codebooks, subset typicality, covering search and exponent
//!   probes.
//! - [`gray_wyner`]: the three-user lossless Gray-Wyner inequalities.
//! - [`instance`] and [`cli`]: JSON instance files and the `subtyp` command.

pub mod cli;
pub mod covering;
pub mod error;
pub mod gray_wyner;
pub mod instance;
pub mod lp;
pub mod maxent;
pub mod pmf;
pub mod regions;
pub mod rng;

pub use error::{Error, Result};
pub use pmf::{Alphabet, ConstraintSystem, JointPmf, SubsetConstraint};
