//! Self-exciting point process models for online reshare cascades.
//!
//! The crate is `no_std` (it needs `alloc`) and contains the numerical core:
//! cascade types, Hawkes / HawkesN kernels and likelihoods, a bounded
//! quasi-Newton fitter, thinning simulation, diffusion measures, the SEISMIC
//! predictor and per-user feature vectors. File formats and the command-line
//! tool live in the `reshare` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cascade;
pub mod error;
pub mod features;
pub mod fitting;
pub mod kernels;
pub mod likelihood;
mod math;
pub mod measures;
pub mod optim;
pub mod rng;
pub mod seismic;
pub mod simulation;

pub use cascade::{group_by_initiator, Cascade, CascadeGroup, MarkedEvent};
pub use error::Error;
pub use fitting::{fit_series, refit_with_bounds, Bounds, FitConfig, FittedModel};
pub use kernels::{KernelParams, ModelType};
pub use likelihood::LikelihoodResult;
pub use measures::{DiffusionMeasures, ViralScore};
pub use seismic::SeismicConfig;
pub use simulation::{Horizon, MarkSource, SimConfig, Simulation};

pub type Result<T, E = Error> = core::result::Result<T, E>;
