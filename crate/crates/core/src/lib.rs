//! Coupled multilocus Wright-Fisher models.
//!
//! A haploid population evolves at `L` loci, each with its own allele count,
//! under parent-independent (house-of-cards) mutation and selection that is
//! limited to single-locus fields plus pairwise inter-locus couplings. The
//! crate provides:
//!
//! - [`model`]: model parameterization, validation, the symmetric coupling
//!   matrix, and the locus interaction graph (with DOT export);
//! - [`fitness`]: haplotype and mean fitnesses, the fitness potential `V`,
//!   its gradient, and the drift field of the limiting diffusion;
//! - [`chain`]: the exact finite-`N` discrete-generation Markov chain
//!   (locus-wise multinomial resampling with selection and mutation);
//! - [`diffusion`]: the genetic-drift matrix, its inverse and factorization,
//!   and Euler-Maruyama simulation of the limiting SDE;
//! - [`stationary`]: the explicit stationary density `pi(x) e^{2V(x)} / Z`,
//!   three routes to the normalizer `Z`, and an analytic zero-flow check;
//! - [`harness`]: exact conditional-moment verification of the diffusion
//!   scaling limits and stationarity tests of simulated trajectories.
//!
//! Monte Carlo ensembles and the sampling-based normalizer run data-parallel
//! via rayon when the `parallel` feature (default) is enabled; every such
//! entry point has a `*_seq` twin and identical results either way.

pub mod chain;
pub mod diffusion;
mod error;
mod exec;
pub mod fitness;
pub mod harness;
pub mod model;
pub mod seeds;
pub mod stationary;
pub mod trajectory;

pub use error::{Error, Result, Violation};
