//! Interacting Langevin particles approximating the averaged mean-field flow.
//!
//! Each player's empirical measure is tracked as a grid histogram. The
//! averaged measure is an exponentially discounted histogram, and particles
//! drift along the interpolated gradient of the potential generated by the
//! opponents' discounted histograms.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{averaging_step, DynamicsState, IntegratorConfig, Schedule};
use crate::error::{Error, Result};
use crate::game::Game;
use crate::grid::{Density, PotentialField, TorusGrid, MAX_DIM};
use crate::metrics::{lyapunov, MetricsRecord};
use crate::scalar::Real;

/// Additive mass per cell applied to histograms before evaluating entropies.
pub const HISTOGRAM_SMOOTHING: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ParticleEnsemble<T> {
    grids: Vec<TorusGrid>,
    n: usize,
    /// Per player, `n * dim` coordinates in `[0, 1)`, particle-major.
    positions: Vec<Vec<T>>,
    hat_hist: Vec<Density<T>>,
    rngs: Vec<ChaCha8Rng>,
    seed: u64,
}

fn sample_cell<R: Rng>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|c| *c <= u).min(cdf.len() - 1)
}

/// Samples `n` particles per player i.i.d. from `init`, placed at cell centers.
///
/// Each player draws from its own ChaCha stream (stream id = player index) so
/// results do not depend on the order players are processed in.
pub fn init_particles<T: Real>(grids: &[TorusGrid], n: usize, init: &[Density<T>], seed: u64) -> Result<ParticleEnsemble<T>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one particle per player".into()));
    }
    if init.len() != grids.len() {
        return Err(Error::GridMismatch(format!(
            "{} initial densities for {} players",
            init.len(),
            grids.len()
        )));
    }
    let mut positions = Vec::with_capacity(grids.len());
    let mut rngs = Vec::with_capacity(grids.len());
    for (p, (g, d)) in grids.iter().zip(init).enumerate() {
        g.ensure_same(d.grid())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(p as u64);
        let mut acc = 0.0;
        let cdf: Vec<f64> = d
            .mass()
            .iter()
            .map(|m| {
                acc += m.to_f64_lossy();
                acc
            })
            .collect();
        let mut pos = Vec::with_capacity(n * g.dim());
        for _ in 0..n {
            let c = g.cell_center::<T>(sample_cell(&cdf, &mut rng));
            pos.extend_from_slice(&c[..g.dim()]);
        }
        positions.push(pos);
        rngs.push(rng);
    }
    let mut ens = ParticleEnsemble {
        grids: grids.to_vec(),
        n,
        positions,
        hat_hist: Vec::new(),
        rngs,
        seed,
    };
    ens.hat_hist = (0..grids.len()).map(|p| ens.histogram(p)).collect();
    Ok(ens)
}

impl<T: Real> ParticleEnsemble<T> {
    pub fn players(&self) -> usize {
        self.grids.len()
    }

    pub fn particles_per_player(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn positions(&self, player: usize) -> &[T] {
        &self.positions[player]
    }

    pub fn hat_histograms(&self) -> &[Density<T>] {
        &self.hat_hist
    }

    /// Empirical cell frequencies of player `p`.
    pub fn histogram(&self, p: usize) -> Density<T> {
        let g = self.grids[p];
        let d = g.dim();
        let mut counts = vec![0usize; g.cell_count()];
        let mut coords = [0.0f64; MAX_DIM];
        for x in self.positions[p].chunks(d) {
            for (c, v) in coords.iter_mut().zip(x) {
                *c = v.to_f64_lossy();
            }
            counts[g.locate(&coords[..d])] += 1;
        }
        let inv = T::one() / T::from_usize_lossy(self.n);
        Density::from_raw_parts(g, counts.into_iter().map(|c| T::from_usize_lossy(c) * inv).collect())
    }

    pub fn histograms(&self) -> Vec<Density<T>> {
        (0..self.players()).map(|p| self.histogram(p)).collect()
    }

    /// Writes `player: u32, n: u64, dim: u32, coords: [f64; n * dim]` per
    /// player, little-endian.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        for (p, pos) in self.positions.iter().enumerate() {
            w.write_all(&(p as u32).to_le_bytes())?;
            w.write_all(&(self.n as u64).to_le_bytes())?;
            w.write_all(&(self.grids[p].dim() as u32).to_le_bytes())?;
            for v in pos {
                w.write_all(&v.to_f64_lossy().to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// One block of a position snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotBlock {
    pub player: u32,
    pub dim: u32,
    pub coords: Vec<f64>,
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<Vec<SnapshotBlock>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut blocks = Vec::new();
    let mut at = 0usize;
    let take = |at: &mut usize, k: usize| -> Result<&[u8]> {
        let s = bytes
            .get(*at..*at + k)
            .ok_or_else(|| Error::Io("truncated particle snapshot".into()))?;
        *at += k;
        Ok(s)
    };
    while at < bytes.len() {
        let player = u32::from_le_bytes(take(&mut at, 4)?.try_into().expect("4 bytes"));
        let n = u64::from_le_bytes(take(&mut at, 8)?.try_into().expect("8 bytes")) as usize;
        let dim = u32::from_le_bytes(take(&mut at, 4)?.try_into().expect("4 bytes"));
        let mut coords = Vec::with_capacity(n * dim as usize);
        for _ in 0..n * dim as usize {
            coords.push(f64::from_le_bytes(take(&mut at, 8)?.try_into().expect("8 bytes")));
        }
        blocks.push(SnapshotBlock { player, dim, coords });
    }
    Ok(blocks)
}

/// Central-difference gradient of a potential at cell centers, one vector per axis.
fn gradient_table<T: Real>(field: &PotentialField<T>) -> Vec<Vec<T>> {
    let g = field.grid();
    let a = field.values();
    let two_h = g.spacing::<T>() * T::lit(2.0);
    (0..g.dim())
        .map(|axis| {
            (0..g.cell_count())
                .map(|k| (a[g.neighbor(k, axis, true)] - a[g.neighbor(k, axis, false)]) / two_h)
                .collect()
        })
        .collect()
}

/// (Bi)linear periodic interpolation of a cell-centered table at `x`.
fn interpolate<T: Real>(g: &TorusGrid, table: &[T], x: &[T]) -> T {
    let n = g.points_per_dim();
    let nt = T::from_usize_lossy(n);
    let mut lo = [0usize; MAX_DIM];
    let mut frac = [T::zero(); MAX_DIM];
    for axis in 0..g.dim() {
        let u = x[axis] * nt - T::lit(0.5);
        let f = u.floor();
        frac[axis] = u - f;
        let i = f.to_i64().unwrap_or(0);
        lo[axis] = i.rem_euclid(n as i64) as usize;
    }
    match g.dim() {
        1 => {
            let hi = (lo[0] + 1) % n;
            table[lo[0]] * (T::one() - frac[0]) + table[hi] * frac[0]
        }
        _ => {
            let hi = [(lo[0] + 1) % n, (lo[1] + 1) % n];
            let at = |a: usize, b: usize| table[g.flat_index([a, b])];
            let (fx, fy) = (frac[0], frac[1]);
            at(lo[0], lo[1]) * (T::one() - fx) * (T::one() - fy)
                + at(hi[0], lo[1]) * fx * (T::one() - fy)
                + at(lo[0], hi[1]) * (T::one() - fx) * fy
                + at(hi[0], hi[1]) * fx * fy
        }
    }
}

fn wrap<T: Real>(x: T) -> T {
    let mut y = x - x.floor();
    if y >= T::one() {
        y -= T::one();
    }
    if y < T::zero() {
        y = T::zero();
    }
    y
}

/// Moves one player's particles and returns their new histogram.
fn advance_player<T: Real>(g: &TorusGrid, grad: &[Vec<T>], pos: &mut [T], rng: &mut ChaCha8Rng, tau: T, dt: T) -> Density<T> {
    let d = g.dim();
    let noise = (T::lit(2.0) * tau * dt).sqrt();
    let mut counts = vec![0usize; g.cell_count()];
    let mut coords = [0.0f64; MAX_DIM];
    for x in pos.chunks_mut(d) {
        let mut drift = [T::zero(); MAX_DIM];
        for axis in 0..d {
            drift[axis] = interpolate(g, &grad[axis], x);
        }
        for axis in 0..d {
            let mut y = x[axis] - drift[axis] * dt;
            if tau > T::zero() {
                let z: f64 = rng.sample(StandardNormal);
                y += noise * T::lit(z);
            }
            x[axis] = wrap(y);
            coords[axis] = x[axis].to_f64_lossy();
        }
        counts[g.locate(&coords[..d])] += 1;
    }
    let inv = T::one() / T::from_usize_lossy(pos.len() / d);
    Density::from_raw_parts(*g, counts.into_iter().map(|c| T::from_usize_lossy(c) * inv).collect())
}

/// One Euler-Maruyama step for every particle against frozen discounted
/// histograms, followed by the exact discount update of the histograms.
///
/// With `baseline_gda` the current histograms drive the drift and replace the
/// discounted ones.
pub fn langevin_step<T: Real>(
    ens: &mut ParticleEnsemble<T>,
    game: &Game<T>,
    tau: T,
    alpha: T,
    dt: T,
    baseline_gda: bool,
) -> Result<()> {
    if !(dt > T::zero()) || !(tau >= T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "need dt > 0 and tau >= 0, got dt = {dt}, tau = {tau}"
        )));
    }
    let driver = if baseline_gda { ens.histograms() } else { ens.hat_hist.clone() };
    let fields = (0..ens.players())
        .map(|i| game.effective_potential(i, &driver))
        .collect::<Result<Vec<_>>>()?;
    let grads: Vec<Vec<Vec<T>>> = fields.iter().map(gradient_table).collect();
    let ParticleEnsemble {
        grids, positions, rngs, ..
    } = ens;
    // players own disjoint particles and RNG streams, so they advance in parallel
    let hist: Vec<Density<T>> = std::thread::scope(|s| {
        let workers: Vec<_> = positions
            .iter_mut()
            .zip(rngs.iter_mut())
            .zip(grids.iter().zip(&grads))
            .map(|((pos, rng), (g, grad))| s.spawn(move || advance_player(g, grad, pos, rng, tau, dt)))
            .collect();
        workers
            .into_iter()
            .map(|w| w.join().expect("particle worker panicked"))
            .collect()
    });
    ens.hat_hist = if baseline_gda {
        hist
    } else {
        ens.hat_hist
            .iter()
            .zip(&hist)
            .map(|(h, c)| averaging_step(h, c, alpha, dt))
            .collect::<Result<_>>()?
    };
    Ok(())
}

fn smoothed<T: Real>(d: &Density<T>) -> Result<Density<T>> {
    let eps = T::lit(HISTOGRAM_SMOOTHING);
    Density::normalize(d.mass().iter().map(|p| *p + eps).collect(), *d.grid())
}

/// Smoothed `(nu, nu_hat)` state seen by the metrics.
pub fn smoothed_state<T: Real>(ens: &ParticleEnsemble<T>, t: T) -> Result<DynamicsState<T>> {
    let nu = ens.histograms().iter().map(smoothed).collect::<Result<Vec<_>>>()?;
    let hat = ens.hat_hist.iter().map(smoothed).collect::<Result<Vec<_>>>()?;
    DynamicsState::new(t, nu, hat)
}

#[derive(Debug, Clone)]
pub struct ParticleRunOutput<T> {
    pub records: Vec<MetricsRecord<T>>,
    pub ensemble: ParticleEnsemble<T>,
    pub t: T,
}

/// Runs the particle system under `schedule`, emitting records computed from
/// smoothed histograms at the cadence of `config`.
pub fn run_particles<T: Real>(
    game: &Game<T>,
    schedule: &Schedule<T>,
    config: &IntegratorConfig<T>,
    mut ens: ParticleEnsemble<T>,
    reference: Option<&[Density<T>]>,
) -> Result<ParticleRunOutput<T>> {
    if !(config.dt > T::zero()) || !(config.record_every > T::zero()) {
        return Err(Error::InvalidParameter("need dt > 0 and record_every > 0".into()));
    }
    if ens.players() != game.players() {
        return Err(Error::GridMismatch("ensemble and game disagree on player count".into()));
    }
    for (a, b) in ens.grids.iter().zip(game.grids()) {
        a.ensure_same(b)?;
    }
    let (steps, dt) = config.step_plan();
    let stride = (config.record_every / dt).round().to_usize().unwrap_or(1).max(1);
    let record = |ens: &ParticleEnsemble<T>, t: T| -> Result<MetricsRecord<T>> {
        let st = smoothed_state(ens, t)?;
        lyapunov(game, schedule.tau_at(t), schedule.alpha_at(t), &st, reference)
    };
    let mut t = T::zero();
    let mut records = vec![record(&ens, t)?];
    for step in 1..=steps {
        let tau = schedule.tau_at(t);
        let alpha = schedule.alpha_at(t);
        langevin_step(&mut ens, game, tau, alpha, dt, config.baseline_gda)?;
        t = T::from_usize_lossy(step) * dt;
        if step % stride == 0 || step == steps {
            records.push(record(&ens, t)?);
        }
    }
    Ok(ParticleRunOutput {
        records,
        ensemble: ens,
        t,
    })
}
