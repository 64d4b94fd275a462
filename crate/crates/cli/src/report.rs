//! Output artifacts: metrics CSV, JSON summary and SVG curves.
//!
//! The summary schema is described in the repository README; field names are
//! stable.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use mfnash::bounds::BoundCheck;
use mfnash::{Density64, GameConstants, MetricsRecord64, RateConstants, Schedule64};
use plotters::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Constants {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub l: f64,
}

impl From<GameConstants<f64>> for Constants {
    fn from(c: GameConstants<f64>) -> Self {
        Self {
            m0: c.m0,
            m1: c.m1,
            m2: c.m2,
            l: c.l,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Rates {
    pub kappa: f64,
    pub lambda: f64,
    pub alpha_bar0: f64,
}

impl From<RateConstants<f64>> for Rates {
    fn from(r: RateConstants<f64>) -> Self {
        Self {
            kappa: r.kappa,
            lambda: r.lambda,
            alpha_bar0: r.alpha_bar0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSummary {
    Fixed { tau: f64, alpha: f64 },
    Annealed { delta: f64, beta: f64, c0: f64, certified: bool },
}

impl From<&Schedule64> for ScheduleSummary {
    fn from(s: &Schedule64) -> Self {
        match s {
            Schedule64::Fixed { tau, alpha } => ScheduleSummary::Fixed { tau: *tau, alpha: *alpha },
            Schedule64::Annealed(a) => ScheduleSummary::Annealed {
                delta: a.delta,
                beta: a.beta,
                c0: a.c0,
                certified: a.certified,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub dim: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GameSummary {
    pub label: String,
    pub players: usize,
    pub grids: Vec<GridSummary>,
    pub constants: Constants,
    /// Closed-form constants of builtin games, if known.
    pub analytic_constants: Option<Constants>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub name: String,
    pub applicable: bool,
    /// `None` when not applicable.
    pub passed: Option<bool>,
    pub worst_ratio: Option<f64>,
    pub samples: usize,
    pub first_violation_t: Option<f64>,
    pub note: Option<String>,
}

impl CheckSummary {
    pub fn from_check(c: BoundCheck) -> Self {
        Self {
            name: c.name.to_string(),
            applicable: true,
            passed: Some(c.passed),
            worst_ratio: Some(c.worst_ratio),
            samples: c.samples,
            first_violation_t: c.first_violation_t,
            note: None,
        }
    }

    pub fn skipped(name: &str, note: &str) -> Self {
        Self {
            name: name.to_string(),
            applicable: false,
            passed: None,
            worst_ratio: None,
            samples: 0,
            first_violation_t: None,
            note: Some(note.to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FinalState {
    pub t: f64,
    pub tau: f64,
    pub s_t: f64,
    pub ni_tau: f64,
    pub ni: f64,
}

impl From<&MetricsRecord64> for FinalState {
    fn from(r: &MetricsRecord64) -> Self {
        Self {
            t: r.t,
            tau: r.tau,
            s_t: r.s_t,
            ni_tau: r.ni_tau,
            ni: r.ni,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegratorSummary {
    pub dt: f64,
    pub t_end: f64,
    pub record_every: f64,
    pub baseline_gda: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub mode: String,
    pub crate_version: String,
    pub game: GameSummary,
    pub schedule: ScheduleSummary,
    /// At the initial temperature and averaging rate.
    pub rate_constants: Rates,
    pub integrator: IntegratorSummary,
    pub particles: Option<usize>,
    pub records: usize,
    pub final_state: Option<FinalState>,
    /// Least-squares decay rate of `ln s_t` (samples above 1e-12).
    pub fitted_rate: Option<f64>,
    pub checks: Vec<CheckSummary>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub name: String,
    pub game: GameSummary,
    pub tau: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub ni_tau: f64,
    pub ni: f64,
    /// `beta tau ln(1/tau)` with `beta = max dim + 1`, when `tau < 1`.
    pub epsilon: Option<f64>,
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

pub fn write_metrics_csv(path: &Path, players: usize, records: &[MetricsRecord64]) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    writeln!(w, "{}", MetricsRecord64::csv_header(players))?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

/// `player,cell,x1,x2,mass`; `x2` is empty for one-dimensional players.
pub fn write_equilibrium_csv(path: &Path, densities: &[Density64]) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    writeln!(w, "player,cell,x1,x2,mass")?;
    for (p, d) in densities.iter().enumerate() {
        let g = d.grid();
        for (k, m) in d.mass().iter().enumerate() {
            let c = g.cell_center::<f64>(k);
            let x2 = if g.dim() > 1 { c[1].to_string() } else { String::new() };
            writeln!(w, "{},{k},{},{x2},{m}", p + 1, c[0])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Log-scale curves of `s_t`, `NI_tau` and `NI` against time. Non-positive
/// values are left out.
pub fn write_curves_svg(path: &Path, title: &str, records: &[MetricsRecord64]) -> Result<()> {
    let series: [(&str, RGBColor, Vec<(f64, f64)>); 3] = [
        ("s_t", BLUE, records.iter().map(|r| (r.t, r.s_t)).collect()),
        ("NI_tau", RED, records.iter().map(|r| (r.t, r.ni_tau)).collect()),
        ("NI", GREEN, records.iter().map(|r| (r.t, r.ni)).collect()),
    ];
    let positive = |v: &f64| v.is_finite() && *v > 0.0;
    let ys: Vec<f64> = series
        .iter()
        .flat_map(|s| s.2.iter().map(|p| p.1))
        .filter(positive)
        .collect();
    let (t0, t1) = records
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.t), b.max(r.t)));
    if ys.is_empty() || !(t1 > t0) {
        return Ok(());
    }
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min) / 2.0;
    let hi = ys.iter().copied().fold(0.0, f64::max) * 2.0;

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(60)
        .build_cartesian_2d(t0..t1, (lo..hi).log_scale())
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc("t")
        .draw()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    for (label, color, pts) in series {
        let pts: Vec<(f64, f64)> = pts.into_iter().filter(|p| positive(&p.1)).collect();
        chart
            .draw_series(LineSeries::new(pts, color))
            .map_err(|e| anyhow::anyhow!("{e}"))?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    root.present().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(())
}
