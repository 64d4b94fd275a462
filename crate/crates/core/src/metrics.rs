//! Scalar functionals over densities and strategy profiles: relative entropy,
//! Fisher information, total variation, circular W1, energies, Nikaido-Isoda
//! errors and the Lyapunov function of the averaged dynamics.

use crate::dynamics::DynamicsState;
use crate::error::{Error, Result};
use crate::game::Game;
use crate::grid::{free_energy, gibbs_from_potential, Density, PotentialField};
use crate::scalar::{compensated_sum, Real};

/// `sum_k p_k ln(p_k / q_k)` with `0 ln 0 = 0`; `+inf` if `mu` charges a cell where `rho` vanishes.
pub fn relative_entropy<T: Real>(mu: &Density<T>, rho: &Density<T>) -> Result<T> {
    mu.grid().ensure_same(rho.grid())?;
    let mut terms = Vec::with_capacity(mu.mass().len());
    for (p, q) in mu.mass().iter().zip(rho.mass()) {
        if *p == T::zero() {
            continue;
        }
        if *q <= T::zero() {
            return Ok(T::infinity());
        }
        terms.push(*p * (*p / *q).ln());
    }
    // clamp round-off below zero
    Ok(compensated_sum(terms).max(T::zero()))
}

/// Discrete `int |grad ln(dmu/drho)|^2 dmu` over torus edges, with edge mass
/// the mean of the two adjacent cell masses.
pub fn fisher_information<T: Real>(mu: &Density<T>, rho: &Density<T>) -> Result<T> {
    mu.grid().ensure_same(rho.grid())?;
    if !mu.is_strictly_positive() || !rho.is_strictly_positive() {
        return Err(Error::SupportViolation(
            "Fisher information needs strictly positive densities".into(),
        ));
    }
    let grid = *mu.grid();
    let h = grid.spacing::<T>();
    let half = T::lit(0.5);
    let log_ratio: Vec<T> = mu
        .mass()
        .iter()
        .zip(rho.mass())
        .map(|(p, q)| (*p / *q).ln())
        .collect();
    let mut terms = Vec::with_capacity(grid.cell_count() * grid.dim());
    for axis in 0..grid.dim() {
        for k in 0..grid.cell_count() {
            let next = grid.neighbor(k, axis, true);
            let g = (log_ratio[next] - log_ratio[k]) / h;
            terms.push(g * g * half * (mu.mass()[k] + mu.mass()[next]));
        }
    }
    Ok(compensated_sum(terms))
}

/// Total variation in the full L1 convention, `sum_k |p_k - q_k|`, range `[0, 2]`.
pub fn tv_distance<T: Real>(mu: &Density<T>, rho: &Density<T>) -> Result<T> {
    mu.grid().ensure_same(rho.grid())?;
    Ok(compensated_sum(
        mu.mass().iter().zip(rho.mass()).map(|(p, q)| (*p - *q).abs()),
    ))
}

/// Exact W1 on the unit circle: `min_c sum_k |F_mu(k) - F_rho(k) - c| h`.
pub fn w1_circle<T: Real>(mu: &Density<T>, rho: &Density<T>) -> Result<T> {
    mu.grid().ensure_same(rho.grid())?;
    let grid = mu.grid();
    if grid.dim() != 1 {
        return Err(Error::UnsupportedDimension {
            supported: 1,
            got: grid.dim(),
        });
    }
    let mut acc = T::zero();
    let mut diff: Vec<T> = mu
        .mass()
        .iter()
        .zip(rho.mass())
        .map(|(p, q)| {
            acc += *p - *q;
            acc
        })
        .collect();
    let mut sorted = diff.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite masses"));
    let median = sorted[sorted.len() / 2];
    let h = grid.spacing::<T>();
    for d in diff.iter_mut() {
        *d = (*d - median).abs() * h;
    }
    Ok(compensated_sum(diff))
}

/// `eps_i(nu) = <U_i * nu^{-i}, nu^i>`, plus `tau * entropy(nu^i)` when `regularization = Some(tau)`.
pub fn energy<T: Real>(game: &Game<T>, i: usize, profile: &[Density<T>], regularization: Option<T>) -> Result<T> {
    let a = game.effective_potential(i, profile)?;
    let e = profile[i].integrate(&a)?;
    Ok(match regularization {
        Some(tau) => e + tau * profile[i].entropy(),
        None => e,
    })
}

fn check_tau<T: Real>(tau: T) -> Result<()> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(Error::InvalidTemperature(tau.to_f64_lossy()));
    }
    Ok(())
}

fn potentials<T: Real>(game: &Game<T>, profile: &[Density<T>]) -> Result<Vec<PotentialField<T>>> {
    (0..game.players()).map(|i| game.effective_potential(i, profile)).collect()
}

/// Regularized Nikaido-Isoda error via `tau * sum_i KL(nu^i | gibbs(U_i * nu^{-i}, tau))`.
pub fn ni_regularized<T: Real>(game: &Game<T>, tau: T, profile: &[Density<T>]) -> Result<T> {
    check_tau(tau)?;
    let mut total = T::zero();
    for (i, a) in potentials(game, profile)?.iter().enumerate() {
        let rho = gibbs_from_potential(a, tau)?;
        total += relative_entropy(&profile[i], &rho)?;
    }
    Ok(tau * total)
}

/// Regularized Nikaido-Isoda error from its definition,
/// `sum_i [eps_{i,tau}(nu) - inf_mu eps_{i,tau}(mu, nu^{-i})]`, with the infimum
/// given by the log-partition `-tau ln sum vol e^{-A/tau}`.
pub fn ni_regularized_definitional<T: Real>(game: &Game<T>, tau: T, profile: &[Density<T>]) -> Result<T> {
    check_tau(tau)?;
    let mut total = T::zero();
    for (i, a) in potentials(game, profile)?.iter().enumerate() {
        let e = profile[i].integrate(a)? + tau * profile[i].entropy();
        total += e - free_energy(a, tau)?;
    }
    Ok(total)
}

/// Unregularized Nikaido-Isoda error `sum_i [<A_i, nu^i> - min_k A_i(k)]`.
pub fn ni_unregularized<T: Real>(game: &Game<T>, profile: &[Density<T>]) -> Result<T> {
    let mut total = T::zero();
    for (i, a) in potentials(game, profile)?.iter().enumerate() {
        total += (profile[i].integrate(a)? - a.min()).max(T::zero());
    }
    Ok(total)
}

/// One time sample of a run.
///
/// Reference-dependent fields (`tv_to_star`, `h_hat_star`) are NaN when no
/// equilibrium reference was supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord<T> {
    pub t: T,
    pub tau: T,
    pub alpha: T,
    /// `sum_i KL(nu^i | rho^i) + KL(nu_hat^i | rho^i)`
    pub s_t: T,
    /// `tau * KL(nu_hat | rho)`, the regularized NI error of the averaged profile.
    pub ni_tau: T,
    /// Unregularized NI error of the current profile `nu`.
    pub ni: T,
    pub tv_to_star: Vec<T>,
    pub h_nu_rho: Vec<T>,
    pub h_hat_rho: Vec<T>,
    pub h_hat_star: Vec<T>,
}

/// Leading columns; each player then contributes
/// `tv_star_i, h_nu_rho_i, h_hat_rho_i, h_hat_star_i` (1-based `i`).
pub const CSV_LEADING_COLUMNS: [&str; 6] = ["t", "tau", "alpha", "s_t", "ni_tau", "ni"];
pub const CSV_PLAYER_COLUMNS: [&str; 4] = ["tv_star", "h_nu_rho", "h_hat_rho", "h_hat_star"];

impl<T: Real> MetricsRecord<T> {
    pub fn players(&self) -> usize {
        self.h_nu_rho.len()
    }

    pub fn csv_header(players: usize) -> String {
        let mut cols: Vec<String> = CSV_LEADING_COLUMNS.iter().map(|c| c.to_string()).collect();
        for i in 1..=players {
            for c in CSV_PLAYER_COLUMNS {
                cols.push(format!("{c}_{i}"));
            }
        }
        cols.join(",")
    }

    /// One CSV row; values use the shortest round-trip decimal form.
    pub fn csv_row(&self) -> String {
        let mut vals = vec![self.t, self.tau, self.alpha, self.s_t, self.ni_tau, self.ni];
        for i in 0..self.players() {
            vals.extend([
                self.tv_to_star[i],
                self.h_nu_rho[i],
                self.h_hat_rho[i],
                self.h_hat_star[i],
            ]);
        }
        vals.iter()
            .map(|v| format!("{}", v.to_f64_lossy()))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn sum_tv_squared(&self) -> T {
        self.tv_to_star.iter().map(|v| *v * *v).sum()
    }

    pub fn sum_h_hat_star(&self) -> T {
        self.h_hat_star.iter().copied().sum()
    }
}

/// Evaluates the Lyapunov function and companion metrics at `state`.
///
/// The proximal-Gibbs measures `rho^i ∝ exp(-U_i * nu_hat^{-i} / tau)` are built
/// from the averaged densities. `reference` is the regularized equilibrium used
/// for the TV and entropy-to-equilibrium columns.
pub fn lyapunov<T: Real>(
    game: &Game<T>,
    tau: T,
    alpha: T,
    state: &DynamicsState<T>,
    reference: Option<&[Density<T>]>,
) -> Result<MetricsRecord<T>> {
    check_tau(tau)?;
    let k = game.players();
    let mut h_nu_rho = Vec::with_capacity(k);
    let mut h_hat_rho = Vec::with_capacity(k);
    let mut tv_to_star = Vec::with_capacity(k);
    let mut h_hat_star = Vec::with_capacity(k);
    for i in 0..k {
        let a = game.effective_potential(i, &state.nu_hat)?;
        let rho = gibbs_from_potential(&a, tau)?;
        let hn = relative_entropy(&state.nu[i], &rho)?;
        let hh = relative_entropy(&state.nu_hat[i], &rho)?;
        if !hn.is_finite() || !hh.is_finite() {
            return Err(Error::SupportViolation(format!(
                "player {} has infinite relative entropy to its proximal Gibbs measure",
                i + 1
            )));
        }
        h_nu_rho.push(hn);
        h_hat_rho.push(hh);
        match reference {
            Some(r) => {
                tv_to_star.push(tv_distance(&state.nu[i], &r[i])?);
                h_hat_star.push(relative_entropy(&state.nu_hat[i], &r[i])?);
            }
            None => {
                tv_to_star.push(T::nan());
                h_hat_star.push(T::nan());
            }
        }
    }
    let s_t = h_nu_rho.iter().copied().sum::<T>() + h_hat_rho.iter().copied().sum::<T>();
    let ni_tau = tau * h_hat_rho.iter().copied().sum::<T>();
    Ok(MetricsRecord {
        t: state.t,
        tau,
        alpha,
        s_t,
        ni_tau,
        ni: ni_unregularized(game, &state.nu)?,
        tv_to_star,
        h_nu_rho,
        h_hat_rho,
        h_hat_star,
    })
}
