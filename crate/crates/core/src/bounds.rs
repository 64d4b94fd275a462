//! Pointwise checks of recorded trajectories against the convergence estimates.

use crate::dynamics::{annealed_bound, AnnealingSchedule};
use crate::game::GameConstants;
use crate::metrics::MetricsRecord;
use crate::scalar::Real;

/// Result of comparing a measured quantity to its bound at every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Largest `measured / bound` over the checked samples.
    pub worst_ratio: f64,
    pub samples: usize,
    pub first_violation_t: Option<f64>,
}

fn check<T: Real>(
    name: &'static str,
    records: &[MetricsRecord<T>],
    active: impl Fn(&MetricsRecord<T>) -> bool,
    measured: impl Fn(&MetricsRecord<T>) -> f64,
    bound: impl Fn(&MetricsRecord<T>) -> f64,
) -> BoundCheck {
    let mut worst = 0.0f64;
    let mut samples = 0;
    let mut first = None;
    for r in records.iter().filter(|r| active(r)) {
        samples += 1;
        let (m, b) = (measured(r), bound(r));
        let ratio = if b > 0.0 {
            m / b
        } else if m <= 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if ratio.is_nan() || ratio > 1.0 {
            first.get_or_insert(r.t.to_f64_lossy());
        }
        worst = worst.max(if ratio.is_nan() { f64::INFINITY } else { ratio });
    }
    BoundCheck {
        name,
        passed: first.is_none(),
        worst_ratio: worst,
        samples,
        first_violation_t: first,
    }
}

fn elapsed<T: Real>(records: &[MetricsRecord<T>], r: &MetricsRecord<T>) -> f64 {
    (r.t - records[0].t).to_f64_lossy()
}

/// `s_t <= slack * exp(-lambda t) s_0` at every sample with `s_t >= floor`.
pub fn exponential_decay<T: Real>(records: &[MetricsRecord<T>], lambda: f64, slack: f64, floor: f64) -> BoundCheck {
    let Some(first) = records.first() else {
        return check("exponential_decay", records, |_| false, |_| 0.0, |_| 0.0);
    };
    let s0 = first.s_t.to_f64_lossy();
    check(
        "exponential_decay",
        records,
        |r| r.s_t.to_f64_lossy() >= floor,
        |r| r.s_t.to_f64_lossy(),
        |r| slack * (-lambda * elapsed(records, r)).exp() * s0,
    )
}

/// `sum_i ||nu_t^i - nu_*^i||_TV^2 <= slack * 12 exp(-lambda t) s_0`.
pub fn tv_bound<T: Real>(records: &[MetricsRecord<T>], lambda: f64, slack: f64) -> BoundCheck {
    let s0 = records.first().map(|r| r.s_t.to_f64_lossy()).unwrap_or(0.0);
    check(
        "tv_bound",
        records,
        |_| true,
        |r| r.sum_tv_squared().to_f64_lossy(),
        |r| slack * 12.0 * (-lambda * elapsed(records, r)).exp() * s0,
    )
}

/// `sum_i KL(nu_hat_t^i | nu_*^i) <= slack * exp(-lambda t) s_0`.
pub fn entropy_to_equilibrium<T: Real>(records: &[MetricsRecord<T>], lambda: f64, slack: f64) -> BoundCheck {
    let s0 = records.first().map(|r| r.s_t.to_f64_lossy()).unwrap_or(0.0);
    check(
        "entropy_to_equilibrium",
        records,
        |_| true,
        |r| r.sum_h_hat_star().to_f64_lossy(),
        |r| slack * (-lambda * elapsed(records, r)).exp() * s0,
    )
}

/// `s_{t, tau_t} <= 32 delta M1 / (beta sqrt(c0 + t)) + exp(-(beta/2)(sqrt(c0+t) - sqrt(c0))) s_0`.
pub fn annealed<T: Real>(
    records: &[MetricsRecord<T>],
    constants: &GameConstants<T>,
    schedule: &AnnealingSchedule<T>,
) -> BoundCheck {
    let s0 = records.first().map(|r| r.s_t).unwrap_or(T::zero());
    check(
        "annealed_bound",
        records,
        |_| true,
        |r| r.s_t.to_f64_lossy(),
        |r| annealed_bound(constants, schedule, s0, r.t).to_f64_lossy(),
    )
}

/// Least-squares decay rate of `ln s_t` over samples with `s_t > floor`.
pub fn fitted_decay_rate<T: Real>(records: &[MetricsRecord<T>], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.s_t.to_f64_lossy() > floor)
        .map(|r| (r.t.to_f64_lossy(), r.s_t.to_f64_lossy().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(-sxy / sxx)
}
