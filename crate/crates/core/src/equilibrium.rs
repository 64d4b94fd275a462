//! Entropy-regularized mixed Nash equilibria via damped best-response iteration.

use crate::error::{Error, Result};
use crate::game::{Game, GameConstants};
use crate::grid::{gibbs_from_potential, Density};
use crate::metrics::tv_distance;
use crate::scalar::Real;

/// Gibbs best response of player `i` to the rest of `profile` (entry `i` ignored).
pub fn best_response<T: Real>(game: &Game<T>, tau: T, i: usize, profile: &[Density<T>]) -> Result<Density<T>> {
    gibbs_from_potential(&game.effective_potential(i, profile)?, tau)
}

/// Outcome of [`solve_fixed_point`].
#[derive(Debug, Clone)]
pub struct FixedPointReport<T> {
    pub densities: Vec<Density<T>>,
    pub iterations: usize,
    /// `max_i tv(nu^i, best_response_i(nu))` at the returned iterate.
    pub final_residual: T,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions<T> {
    /// Initial damping `gamma` in `(0, 1]`.
    pub damping: T,
    pub tol: T,
    pub max_iter: usize,
    /// Floor for the damping when it is reduced after a residual increase.
    pub min_damping: T,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            damping: T::lit(0.5),
            tol: T::lit(1e-12),
            max_iter: 100_000,
            min_damping: T::lit(1e-3),
        }
    }
}

fn responses<T: Real>(game: &Game<T>, tau: T, profile: &[Density<T>]) -> Result<(Vec<Density<T>>, T)> {
    let mut out = Vec::with_capacity(profile.len());
    let mut residual = T::zero();
    for i in 0..game.players() {
        let br = best_response(game, tau, i, profile)?;
        residual = residual.max(tv_distance(&profile[i], &br)?);
        out.push(br);
    }
    Ok((out, residual))
}

/// Solves `nu^i = gibbs(U_i * nu^{-i}, tau)` for all players with the Jacobi
/// iteration `nu^i <- (1 - gamma) nu^i + gamma BR_i(nu)`.
///
/// Every player responds to the same frozen iterate. When the residual grows
/// the damping is halved (down to `min_damping`); near-antisymmetric responses
/// otherwise rotate instead of contracting at low temperature.
pub fn solve_fixed_point<T: Real>(
    game: &Game<T>,
    tau: T,
    opts: SolverOptions<T>,
    init: &[Density<T>],
) -> Result<FixedPointReport<T>> {
    if !(opts.damping > T::zero() && opts.damping <= T::one()) {
        return Err(Error::InvalidParameter(format!(
            "damping must lie in (0, 1], got {}",
            opts.damping
        )));
    }
    if !(opts.tol > T::zero()) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if !(tau > T::zero()) {
        return Err(Error::InvalidTemperature(tau.to_f64_lossy()));
    }
    if init.len() != game.players() {
        return Err(Error::GridMismatch(format!(
            "{} initial densities for {} players",
            init.len(),
            game.players()
        )));
    }
    for (g, d) in game.grids().iter().zip(init) {
        g.ensure_same(d.grid())?;
    }

    let mut gamma = opts.damping;
    let mut current = init.to_vec();
    let (mut br, mut residual) = responses(game, tau, &current)?;
    let mut iterations = 0;
    while residual > opts.tol && iterations < opts.max_iter {
        let next: Vec<Density<T>> = current
            .iter()
            .zip(&br)
            .map(|(c, b)| c.mix(b, gamma))
            .collect::<Result<_>>()?;
        let (next_br, next_res) = responses(game, tau, &next)?;
        iterations += 1;
        if next_res > residual && gamma > opts.min_damping {
            gamma = (gamma * T::lit(0.5)).max(opts.min_damping);
        }
        current = next;
        br = next_br;
        residual = next_res;
    }
    Ok(FixedPointReport {
        densities: current,
        iterations,
        final_residual: residual,
        converged: residual <= opts.tol,
    })
}

/// Certified NI level `beta * tau * ln(1 / tau)` of the regularized equilibrium
/// at small temperature, valid for `beta >= max_i d_i + 1`.
pub fn epsilon_for_tau<T: Real>(_constants: &GameConstants<T>, dims: &[usize], tau: T, beta: T) -> Result<T> {
    if !(tau > T::zero()) {
        return Err(Error::InvalidTemperature(tau.to_f64_lossy()));
    }
    if tau >= T::one() {
        return Err(Error::InvalidParameter(format!(
            "temperature rule needs tau < 1, got {tau}"
        )));
    }
    let dmax = dims.iter().copied().max().unwrap_or(1);
    if beta < T::from_usize_lossy(dmax + 1) {
        return Err(Error::InvalidParameter(format!(
            "beta = {beta} is below max dimension + 1 = {}",
            dmax + 1
        )));
    }
    Ok(beta * tau * (T::one() / tau).ln())
}
