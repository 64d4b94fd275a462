//! Time-averaged mean-field dynamics on the torus.
//!
//! Each player's density follows a drift-diffusion equation driven by the
//! potential generated by the opponents' *averaged* densities, while the
//! averaged density relaxes toward the current one at rate `alpha`:
//!
//! ```text
//! d/dt nu^i     = div(nu^i grad(U_i * nu_hat^{-i})) + tau Lap nu^i
//! d/dt nu_hat^i = alpha (nu^i - nu_hat^i)
//! ```
//!
//! Space is discretized with Scharfetter-Gummel fluxes, which make the
//! discrete Gibbs measure of a frozen potential exactly stationary; time with
//! explicit Euler. The averaging equation is integrated exactly for a frozen
//! `nu`. Temperatures and rates are either fixed or follow a logarithmic
//! annealing schedule.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::game::{Game, GameConstants};
use crate::grid::{Density, PotentialField};
use crate::metrics::{lyapunov, MetricsRecord};
use crate::scalar::{bernoulli, Real};

/// Full state of the coupled flow: current and averaged densities per player.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsState<T> {
    pub t: T,
    pub nu: Vec<Density<T>>,
    pub nu_hat: Vec<Density<T>>,
}

impl<T: Real> DynamicsState<T> {
    pub fn new(t: T, nu: Vec<Density<T>>, nu_hat: Vec<Density<T>>) -> Result<Self> {
        if nu.len() != nu_hat.len() {
            return Err(Error::GridMismatch(format!(
                "{} current vs {} averaged densities",
                nu.len(),
                nu_hat.len()
            )));
        }
        for (a, b) in nu.iter().zip(&nu_hat) {
            a.grid().ensure_same(b.grid())?;
        }
        Ok(Self { t, nu, nu_hat })
    }

    /// `nu = nu_hat = profile` at time zero.
    pub fn at_profile(profile: Vec<Density<T>>) -> Self {
        Self {
            t: T::zero(),
            nu_hat: profile.clone(),
            nu: profile,
        }
    }

    pub fn players(&self) -> usize {
        self.nu.len()
    }
}

/// Rate constants of the fixed-temperature convergence estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants<T> {
    /// Log-Sobolev constant `exp(M0 / tau) / (8 pi^2)`.
    pub kappa: T,
    /// Guaranteed decay rate `min(tau / (2 kappa), alpha / 4)`.
    pub lambda: T,
    /// Largest admissible averaging rate `tau / (53 kappa max(1, (kappa M2 / tau)^2))`.
    pub alpha_bar0: T,
}

pub fn rate_constants<T: Real>(constants: &GameConstants<T>, tau: T, alpha: T) -> RateConstants<T> {
    let eight_pi2 = T::lit(8.0 * PI * PI);
    let kappa = (constants.m0 / tau).exp() / eight_pi2;
    let lambda = (tau / (T::lit(2.0) * kappa)).min(alpha / T::lit(4.0));
    let stiff = kappa * constants.m2 / tau;
    let alpha_bar0 = tau / (T::lit(53.0) * kappa * T::one().max(stiff * stiff));
    RateConstants {
        kappa,
        lambda,
        alpha_bar0,
    }
}

/// Logarithmic cooling `tau_t = 1 / (delta ln(c0 + t))` with averaging rate
/// `alpha_t = beta / sqrt(c0 + t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealingSchedule<T> {
    pub delta: T,
    pub beta: T,
    pub c0: T,
    /// Whether the parameters passed [`validate_annealing`].
    pub certified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule<T> {
    Fixed { tau: T, alpha: T },
    Annealed(AnnealingSchedule<T>),
}

impl<T: Real> Schedule<T> {
    pub fn fixed(tau: T, alpha: T) -> Result<Self> {
        if !(tau > T::zero()) {
            return Err(Error::InvalidTemperature(tau.to_f64_lossy()));
        }
        if !(alpha > T::zero()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Schedule::Fixed { tau, alpha })
    }

    /// Annealing with user-chosen parameters, not checked against the
    /// admissibility conditions; reports mark it as not certified.
    pub fn pragmatic(delta: T, beta: T, c0: T) -> Result<Self> {
        if !(delta > T::zero() && beta > T::zero() && c0 > T::one()) {
            return Err(Error::InvalidParameter(format!(
                "annealing needs delta > 0, beta > 0, c0 > 1; got ({delta}, {beta}, {c0})"
            )));
        }
        Ok(Schedule::Annealed(AnnealingSchedule {
            delta,
            beta,
            c0,
            certified: false,
        }))
    }

    pub fn tau_at(&self, t: T) -> T {
        match self {
            Schedule::Fixed { tau, .. } => *tau,
            Schedule::Annealed(a) => T::one() / (a.delta * (a.c0 + t).ln()),
        }
    }

    pub fn alpha_at(&self, t: T) -> T {
        match self {
            Schedule::Fixed { alpha, .. } => *alpha,
            Schedule::Annealed(a) => a.beta / (a.c0 + t).sqrt(),
        }
    }

    pub fn is_certified(&self) -> bool {
        match self {
            Schedule::Fixed { .. } => true,
            Schedule::Annealed(a) => a.certified,
        }
    }
}

/// The individual admissibility conditions of the annealing schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnnealingCondition {
    /// `0 < delta <= 1 / (12 M0)`
    DeltaBound,
    /// `0 < beta <= 3 / (delta^3 M2)`
    BetaBound,
    /// `c0 > 1`
    OffsetAboveOne,
    /// `c0 >= 144 / beta^2`
    OffsetFromBeta,
    /// `delta M2 c0^(delta M0) ln c0 >= 8 pi^2`
    OffsetStiffness,
}

impl AnnealingCondition {
    /// Which inequality group the condition belongs to: the rate bounds on
    /// `(delta, beta)` or the offset bounds on `c0`.
    pub fn group(&self) -> &'static str {
        match self {
            AnnealingCondition::DeltaBound | AnnealingCondition::BetaBound => "rate condition",
            _ => "offset condition",
        }
    }

    pub fn statement(&self) -> &'static str {
        match self {
            AnnealingCondition::DeltaBound => "0 < delta <= 1/(12 M0)",
            AnnealingCondition::BetaBound => "0 < beta <= 3/(delta^3 M2)",
            AnnealingCondition::OffsetAboveOne => "c0 > 1",
            AnnealingCondition::OffsetFromBeta => "c0 >= 144/beta^2",
            AnnealingCondition::OffsetStiffness => "delta M2 c0^(delta M0) ln c0 >= 8 pi^2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealingViolation {
    pub condition: AnnealingCondition,
    /// Left- and right-hand sides as evaluated.
    pub lhs: f64,
    pub rhs: f64,
}

impl fmt::Display for AnnealingViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} `{}` violated (lhs = {:.6e}, rhs = {:.6e})",
            self.condition.group(),
            self.condition.statement(),
            self.lhs,
            self.rhs
        )
    }
}

fn offset_stiffness<T: Real>(c: &GameConstants<T>, delta: T, c0: T) -> T {
    delta * c.m2 * c0.powf(delta * c.m0) * c0.ln()
}

/// Accepts `(delta, beta, c0)` iff every admissibility condition holds;
/// otherwise lists all violated conditions.
pub fn validate_annealing<T: Real>(constants: &GameConstants<T>, delta: T, beta: T, c0: T) -> Result<Schedule<T>> {
    if !(constants.m0 > T::zero() && constants.m2 > T::zero()) {
        return Err(Error::InvalidParameter(
            "annealing conditions need M0 > 0 and M2 > 0".into(),
        ));
    }
    let f = |x: T| x.to_f64_lossy();
    let mut v = Vec::new();
    let delta_max = T::one() / (T::lit(12.0) * constants.m0);
    if !(delta > T::zero() && delta <= delta_max) {
        v.push(AnnealingViolation {
            condition: AnnealingCondition::DeltaBound,
            lhs: f(delta),
            rhs: f(delta_max),
        });
    }
    let beta_max = T::lit(3.0) / (delta.powi(3) * constants.m2);
    if !(beta > T::zero() && beta <= beta_max) {
        v.push(AnnealingViolation {
            condition: AnnealingCondition::BetaBound,
            lhs: f(beta),
            rhs: f(beta_max),
        });
    }
    if !(c0 > T::one()) {
        v.push(AnnealingViolation {
            condition: AnnealingCondition::OffsetAboveOne,
            lhs: f(c0),
            rhs: 1.0,
        });
    }
    let c0_min = T::lit(144.0) / (beta * beta);
    if !(c0 >= c0_min) {
        v.push(AnnealingViolation {
            condition: AnnealingCondition::OffsetFromBeta,
            lhs: f(c0),
            rhs: f(c0_min),
        });
    }
    let stiff = offset_stiffness(constants, delta, c0);
    let target = T::lit(8.0 * PI * PI);
    if !(stiff >= target) {
        v.push(AnnealingViolation {
            condition: AnnealingCondition::OffsetStiffness,
            lhs: f(stiff),
            rhs: f(target),
        });
    }
    if v.is_empty() {
        Ok(Schedule::Annealed(AnnealingSchedule {
            delta,
            beta,
            c0,
            certified: true,
        }))
    } else {
        Err(Error::Annealing(v))
    }
}

/// Smallest `c0 > 1` with `delta M2 c0^(delta M0) ln c0 >= 8 pi^2`, by bisection.
pub fn min_offset_for_stiffness<T: Real>(constants: &GameConstants<T>, delta: T) -> T {
    let target = T::lit(8.0 * PI * PI);
    let g = |c: T| offset_stiffness(constants, delta, c);
    let mut lo = T::one();
    let mut hi = T::lit(2.0);
    while g(hi) < target {
        lo = hi;
        hi *= T::lit(2.0);
        if !hi.is_finite() {
            return T::infinity();
        }
    }
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Largest admissible `delta` and `beta`, with the smallest admissible `c0`.
pub fn certified_annealing<T: Real>(constants: &GameConstants<T>) -> Result<Schedule<T>> {
    if !(constants.m0 > T::zero() && constants.m2 > T::zero()) {
        return Err(Error::InvalidParameter(
            "annealing conditions need M0 > 0 and M2 > 0".into(),
        ));
    }
    let delta = T::one() / (T::lit(12.0) * constants.m0);
    let beta = T::lit(3.0) / (delta.powi(3) * constants.m2);
    let mut c0 = (T::lit(144.0) / (beta * beta)).max(min_offset_for_stiffness(constants, delta));
    if !(c0 > T::one()) {
        c0 = T::one() + T::lit(1e-9);
    }
    validate_annealing(constants, delta, beta, c0)
}

/// `32 delta M1 / (beta sqrt(c0 + t)) + exp(-(beta/2)(sqrt(c0 + t) - sqrt(c0))) s0`.
pub fn annealed_bound<T: Real>(constants: &GameConstants<T>, schedule: &AnnealingSchedule<T>, s0: T, t: T) -> T {
    let root = (schedule.c0 + t).sqrt();
    T::lit(32.0) * schedule.delta * constants.m1 / (schedule.beta * root)
        + (-(schedule.beta / T::lit(2.0)) * (root - schedule.c0.sqrt())).exp() * s0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FluxScheme {
    /// Exponential fitting, `F = (tau/h) [B(dA/tau) p_k - B(-dA/tau) p_{k+1}]`.
    #[default]
    ScharfetterGummel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig<T> {
    pub dt: T,
    pub t_end: T,
    /// Time between emitted records; rounded to a whole number of steps.
    pub record_every: T,
    pub scheme: FluxScheme,
    /// Drive each player with the opponents' current densities (plain
    /// mean-field descent-ascent) instead of their averages.
    pub baseline_gda: bool,
    /// Split a step into halves, recursively, when it exceeds the stability
    /// bound instead of stopping the run.
    pub auto_substep: bool,
}

impl<T: Real> IntegratorConfig<T> {
    pub fn new(dt: T, t_end: T, record_every: T) -> Self {
        Self {
            dt,
            t_end,
            record_every,
            scheme: FluxScheme::ScharfetterGummel,
            baseline_gda: false,
            auto_substep: false,
        }
    }

    /// Number of steps and the step actually taken: `dt` is shrunk, if
    /// needed, so that a whole number of steps lands on `t_end`.
    pub fn step_plan(&self) -> (usize, T) {
        let ratio = self.t_end / self.dt;
        let steps = (ratio * (T::one() - T::lit(1e-12))).ceil().to_usize().unwrap_or(0);
        if steps == 0 {
            (0, self.dt)
        } else {
            (steps, self.t_end / T::from_usize_lossy(steps))
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !(self.t_end >= T::zero()) || !(self.record_every > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "need dt > 0, t_end >= 0, record_every > 0; got ({}, {}, {})",
                self.dt, self.t_end, self.record_every
            )));
        }
        Ok(())
    }
}

fn max_edge_drift<T: Real>(field: &PotentialField<T>) -> T {
    let g = field.grid();
    let a = field.values();
    let mut m = T::zero();
    for axis in 0..g.dim() {
        for k in 0..g.cell_count() {
            m = m.max((a[g.neighbor(k, axis, true)] - a[k]).abs());
        }
    }
    m
}

/// Largest stable explicit step `h^2 / (2 d tau max B)` for the given potential.
pub fn stability_bound<T: Real>(field: &PotentialField<T>, tau: T) -> T {
    let g = field.grid();
    let h = g.spacing::<T>();
    let max_b = bernoulli(-max_edge_drift(field) / tau);
    h * h / (T::from_usize_lossy(2 * g.dim()) * tau * max_b)
}

/// A priori step bound valid for every potential the game can generate and
/// every temperature up to `tau_max`, scaled by `safety`.
pub fn stable_dt<T: Real>(game: &Game<T>, tau_max: T, safety: T) -> T {
    let mut dt = T::infinity();
    for i in 0..game.players() {
        let g = game.grid(i);
        let h = g.spacing::<T>();
        let jump = game.potential_jump_bound(i);
        let bound = h * h / (T::from_usize_lossy(2 * g.dim()) * tau_max * bernoulli(-jump / tau_max));
        dt = dt.min(bound);
    }
    dt * safety
}

/// One explicit finite-volume step of `d/dt nu = div(nu grad A) + tau Lap nu`
/// with `A` frozen.
pub fn fokker_planck_step<T: Real>(nu: &Density<T>, field: &PotentialField<T>, tau: T, dt: T) -> Result<Density<T>> {
    nu.grid().ensure_same(field.grid())?;
    if !(tau > T::zero()) {
        return Err(Error::InvalidTemperature(tau.to_f64_lossy()));
    }
    let bound = stability_bound(field, tau);
    if dt > bound * (T::one() + T::lit(1e-12)) {
        return Err(Error::StepSize {
            dt: dt.to_f64_lossy(),
            bound: bound.to_f64_lossy(),
            t: f64::NAN,
        });
    }
    let g = *nu.grid();
    let h = g.spacing::<T>();
    let coef = dt * tau / (h * h);
    let p = nu.mass();
    let a = field.values();
    let mut out = p.to_vec();
    for axis in 0..g.dim() {
        for k in 0..g.cell_count() {
            let next = g.neighbor(k, axis, true);
            let z = (a[next] - a[k]) / tau;
            let flux = coef * (bernoulli(z) * p[k] - bernoulli(-z) * p[next]);
            out[k] -= flux;
            out[next] += flux;
        }
    }
    for v in out.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    Ok(Density::from_raw_parts(g, out))
}

/// Exact solution of `d/dt nu_hat = alpha (nu - nu_hat)` over `dt` with `nu` frozen.
pub fn averaging_step<T: Real>(nu_hat: &Density<T>, nu: &Density<T>, alpha: T, dt: T) -> Result<Density<T>> {
    if !(alpha >= T::zero()) || !(dt > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "averaging needs alpha >= 0 and dt > 0, got ({alpha}, {dt})"
        )));
    }
    let w = -(-alpha * dt).exp_m1();
    nu_hat.mix(nu, w)
}

/// Records emitted by a run, the state reached, and the failure that stopped it, if any.
#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub records: Vec<MetricsRecord<T>>,
    pub state: DynamicsState<T>,
    pub failure: Option<Error>,
}

fn step_player<T: Real>(nu: &Density<T>, field: &PotentialField<T>, tau: T, dt: T, auto: bool, depth: u32) -> Result<Density<T>> {
    match fokker_planck_step(nu, field, tau, dt) {
        Err(Error::StepSize { .. }) if auto && depth < 30 => {
            let half = dt * T::lit(0.5);
            let mid = step_player(nu, field, tau, half, auto, depth + 1)?;
            step_player(&mid, field, tau, half, auto, depth + 1)
        }
        other => other,
    }
}

/// Integrates the averaged dynamics from `init`.
///
/// Per step: read `tau`, `alpha` at the current time; build each player's
/// potential from the opponents' averaged densities; transport every `nu^i`;
/// then relax every `nu_hat^i` toward the new `nu^i`. Records are evaluated at
/// the temperature of the recording time. `reference`, when given, is the
/// regularized equilibrium used for the TV and entropy-to-equilibrium columns.
pub fn run<T: Real>(
    game: &Game<T>,
    schedule: &Schedule<T>,
    config: &IntegratorConfig<T>,
    init: DynamicsState<T>,
    reference: Option<&[Density<T>]>,
) -> Result<RunOutput<T>> {
    config.validate()?;
    if init.players() != game.players() {
        return Err(Error::GridMismatch(format!(
            "state has {} players, game has {}",
            init.players(),
            game.players()
        )));
    }
    for (i, g) in game.grids().iter().enumerate() {
        g.ensure_same(init.nu[i].grid())?;
        if !init.nu[i].is_strictly_positive() || !init.nu_hat[i].is_strictly_positive() {
            return Err(Error::SupportViolation(format!(
                "initial densities of player {} must be strictly positive",
                i + 1
            )));
        }
    }

    let (steps, dt) = config.step_plan();
    let stride = (config.record_every / dt).round().to_usize().unwrap_or(1).max(1);
    let t0 = init.t;
    let mut state = init;
    let mut records = Vec::with_capacity(steps / stride + 2);
    let record = |state: &DynamicsState<T>| {
        lyapunov(game, schedule.tau_at(state.t), schedule.alpha_at(state.t), state, reference)
    };
    records.push(record(&state)?);

    let mut failure = None;
    for step in 1..=steps {
        let tau = schedule.tau_at(state.t);
        let alpha = schedule.alpha_at(state.t);
        let driver = if config.baseline_gda { &state.nu } else { &state.nu_hat };
        let fields = (0..game.players())
            .map(|i| game.effective_potential(i, driver))
            .collect::<Result<Vec<_>>>()?;
        let mut next = Vec::with_capacity(game.players());
        for (i, field) in fields.iter().enumerate() {
            match step_player(&state.nu[i], field, tau, dt, config.auto_substep, 0) {
                Ok(d) => next.push(d),
                Err(Error::StepSize { dt, bound, .. }) => {
                    failure = Some(Error::StepSize {
                        dt,
                        bound,
                        t: state.t.to_f64_lossy(),
                    });
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if failure.is_some() {
            break;
        }
        if config.baseline_gda {
            state.nu_hat = next.clone();
        } else {
            state.nu_hat = state
                .nu_hat
                .iter()
                .zip(&next)
                .map(|(h, n)| averaging_step(h, n, alpha, dt))
                .collect::<Result<_>>()?;
        }
        state.nu = next;
        state.t = t0 + T::from_usize_lossy(step) * dt;
        if step % stride == 0 || step == steps {
            match record(&state) {
                Ok(r) => records.push(r),
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
    }
    Ok(RunOutput {
        records,
        state,
        failure,
    })
}
