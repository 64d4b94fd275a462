//! Mean-field time-averaged gradient descent-ascent for pairwise zero-sum
//! games played with densities on flat tori.
//!
//! Densities are stored as cell masses on a uniform periodic grid. The core
//! is generic over the floating-point type; the aliases at the bottom of this
//! module fix it to `f64` or `f32`.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod game;
pub mod grid;
pub mod metrics;
pub mod particles;
pub mod scalar;

pub use dynamics::{
    annealed_bound, averaging_step, certified_annealing, fokker_planck_step, rate_constants, run, stability_bound,
    stable_dt, validate_annealing, AnnealingCondition, AnnealingSchedule, AnnealingViolation, DynamicsState,
    FluxScheme, IntegratorConfig, RateConstants, RunOutput, Schedule,
};
pub use equilibrium::{best_response, epsilon_for_tau, solve_fixed_point, FixedPointReport, SolverOptions};
pub use error::{Error, Result};
pub use game::{builtin_game, Builtin, Game, GameConstants, PairwiseKernel};
pub use grid::{free_energy, gibbs_from_potential, normalize, uniform_density, Density, PotentialField, TorusGrid};
pub use metrics::{
    energy, fisher_information, lyapunov, ni_regularized, ni_regularized_definitional, ni_unregularized,
    relative_entropy, tv_distance, w1_circle, MetricsRecord,
};
pub use particles::{init_particles, langevin_step, run_particles, ParticleEnsemble};
pub use scalar::Real;

pub type Density64 = Density<f64>;
pub type Density32 = Density<f32>;
pub type PotentialField64 = PotentialField<f64>;
pub type PotentialField32 = PotentialField<f32>;
pub type Game64 = Game<f64>;
pub type Game32 = Game<f32>;
pub type GameConstants64 = GameConstants<f64>;
pub type DynamicsState64 = DynamicsState<f64>;
pub type Schedule64 = Schedule<f64>;
pub type IntegratorConfig64 = IntegratorConfig<f64>;
pub type MetricsRecord64 = MetricsRecord<f64>;
pub type ParticleEnsemble64 = ParticleEnsemble<f64>;
