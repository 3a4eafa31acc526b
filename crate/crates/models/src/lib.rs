//! Models for discrete particle variational inference.
//!
//! Every model implements [`dpvi_core::DiscreteModel`]; the sequential ones
//! (binary HMM, infinite HMM, DP mixture, Ising in raster order) also
//! implement [`dpvi_core::SequentialModel`].

pub mod binary_hmm;
pub mod conjugate;
pub mod crp;
pub mod dpmm;
pub mod ihmm;
pub mod irm;
pub mod ising;

pub use binary_hmm::{BinaryHmm, BinaryHmmParams};
pub use conjugate::{Conjugate, Nig, Niw};
pub use dpmm::{Dpmm, DpmmStats};
pub use ihmm::{Ihmm, IhmmHyper, IhmmStats};
pub use irm::{Cell, Irm, IrmStats, Relation};
pub use ising::IsingLattice;
