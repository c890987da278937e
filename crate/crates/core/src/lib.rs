//! Simulation and analysis of slow-fast hybrid predator-prey models.
//!
//! The prey concentration `x` follows an ODE accelerated by `1 / eps`, while
//! the predator count `n` is a birth-death process whose rates depend on `x`.
//! The crate provides:
//!
//! * [`model`]: the `(g, b, d)` model interface, the chemostat instance with
//!   Monod consumption, and numerical checks of the structural assumptions;
//! * [`equilibrium`]: quasi-equilibria `x*_n` and the relaxation bounds;
//! * [`hybrid`]: exact simulation of the coupled process by cumulative-hazard
//!   inversion, the large-population limit and the volume-rescaled process;
//! * [`averaged`]: the averaged birth-death chain and its exact simulation;
//! * [`absorption`]: absorption probability and mean absorption time, with a
//!   linear-system cross-check;
//! * [`montecarlo`]: reproducible, parallel replication experiments.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the double-precision types used by the experiments and the CLI.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod absorption;
pub mod averaged;
pub mod equilibrium;
pub mod error;
pub mod hybrid;
pub mod model;
pub mod montecarlo;
pub mod ode;
pub mod rng;
pub mod scalar;
pub mod trajectory;
pub mod tridiag;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ModelParams = model::ModelParams<f64>;
pub type PredatorPrey = model::PredatorPrey<f64>;
pub type AssumptionReport = model::AssumptionReport<f64>;
pub type EquilibriumTable = equilibrium::EquilibriumTable<f64, model::PredatorPrey<f64>>;
pub type AveragedChain = averaged::AveragedChain<f64, model::PredatorPrey<f64>>;
pub type HybridTrajectory = trajectory::HybridTrajectory<f64>;
pub type AbsorptionResult = absorption::AbsorptionResult<f64>;
pub type OdeOptions = ode::OdeOptions<f64>;
pub type SimOptions = hybrid::SimOptions<f64>;
pub type EpsilonTag = trajectory::EpsilonTag<f64>;

pub type ModelParams32 = model::ModelParams<f32>;
pub type PredatorPrey32 = model::PredatorPrey<f32>;
pub type AveragedChain32 = averaged::AveragedChain<f32, model::PredatorPrey<f32>>;

pub use montecarlo::{ExperimentConfig, Observable, ReplicationSummary};
