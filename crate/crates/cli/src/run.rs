//! Experiment orchestration: schedule resolution, runs, bound checks and
//! output files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mfnash::bounds::{self, BoundCheck};
use mfnash::{
    certified_annealing, epsilon_for_tau, init_particles, ni_regularized, ni_unregularized, rate_constants, run,
    run_particles, solve_fixed_point, stable_dt, validate_annealing, DynamicsState, Error, IntegratorConfig64,
    MetricsRecord64, Schedule64, SolverOptions,
};

use crate::config::{Experiment, Mode, ScheduleSection};
use crate::report::{self, CheckSummary, GameSummary, GridSummary, IntegratorSummary, RunSummary, SolveSummary};

pub const OUTPUT_ROOT_ENV: &str = "MFNASH_OUTPUT_ROOT";

/// Exit status for a run whose bounds were checked and at least one failed.
pub const EXIT_BOUND_FAILURE: i32 = 2;

/// Allowed excess over the fixed-temperature bounds due to space and time discretization.
pub const DISCRETIZATION_SLACK: f64 = 1.05;

/// Relative tolerance for comparing a configured averaging rate with its certified maximum.
const ALPHA_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ResolvedSchedule {
    pub schedule: Schedule64,
    /// Violations that a pragmatic schedule was allowed to keep.
    pub warnings: Vec<String>,
}

/// Turns the schedule block into a concrete schedule, refusing inadmissible
/// annealing unless it is flagged pragmatic.
pub fn resolve_schedule(exp: &Experiment) -> Result<ResolvedSchedule> {
    let c = exp.game.constants();
    let mut warnings = Vec::new();
    let schedule = match exp.raw.schedule {
        ScheduleSection::Fixed { tau, alpha } => {
            let alpha = alpha.unwrap_or_else(|| rate_constants(&c, tau, 1.0).alpha_bar0);
            Schedule64::fixed(tau, alpha)?
        }
        ScheduleSection::Annealed {
            delta,
            beta,
            c0,
            pragmatic,
        } => match validate_annealing(&c, delta, beta, c0) {
            Ok(s) => s,
            Err(Error::Annealing(v)) if pragmatic => {
                warnings.extend(v.iter().map(|x| x.to_string()));
                Schedule64::pragmatic(delta, beta, c0)?
            }
            Err(e) => return Err(e).context("annealing schedule refused"),
        },
        ScheduleSection::AnnealedAuto => certified_annealing(&c).context("cannot derive an annealing schedule")?,
    };
    Ok(ResolvedSchedule { schedule, warnings })
}

pub fn output_dir(exp: &Experiment) -> PathBuf {
    let root = std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    match &exp.raw.output.dir {
        Some(d) if d.is_absolute() => d.clone(),
        Some(d) => root.join(d),
        None => root.join("runs").join(&exp.name),
    }
}

fn game_summary(exp: &Experiment) -> GameSummary {
    let g = &exp.game;
    GameSummary {
        label: g.label().to_string(),
        players: g.players(),
        grids: g
            .grids()
            .iter()
            .map(|x| GridSummary {
                dim: x.dim(),
                n: x.points_per_dim(),
            })
            .collect(),
        constants: g.constants().into(),
        analytic_constants: g.analytic_constants().map(Into::into),
    }
}

fn solver_options(exp: &Experiment) -> SolverOptions<f64> {
    let s = &exp.raw.solver;
    SolverOptions {
        damping: s.damping,
        tol: s.tol,
        max_iter: s.max_iter,
        ..SolverOptions::default()
    }
}

fn bound_checks(
    exp: &Experiment,
    schedule: &Schedule64,
    records: &[MetricsRecord64],
    mode: Mode,
) -> Vec<CheckSummary> {
    let c = exp.game.constants();
    let names = ["exponential_decay", "tv_bound", "entropy_to_equilibrium", "annealed_bound"];
    let skip_all = |note: &str| names.iter().map(|n| CheckSummary::skipped(n, note)).collect();
    if exp.raw.integrator.baseline_gda {
        return skip_all("plain descent-ascent has no guarantee");
    }
    if mode == Mode::Particles {
        return skip_all("bounds are checked on the PDE only");
    }
    let mut out = Vec::new();
    match schedule {
        Schedule64::Fixed { tau, alpha } => {
            let rc = rate_constants(&c, *tau, *alpha);
            if *alpha <= rc.alpha_bar0 * (1.0 + ALPHA_TOL) {
                let l = rc.lambda;
                let checks: [BoundCheck; 3] = [
                    bounds::exponential_decay(records, l, DISCRETIZATION_SLACK, 1e-9),
                    bounds::tv_bound(records, l, DISCRETIZATION_SLACK),
                    bounds::entropy_to_equilibrium(records, l, DISCRETIZATION_SLACK),
                ];
                out.extend(checks.into_iter().map(CheckSummary::from_check));
            } else {
                for n in &names[..3] {
                    out.push(CheckSummary::skipped(n, "alpha exceeds alpha_bar0"));
                }
            }
            out.push(CheckSummary::skipped("annealed_bound", "fixed temperature"));
        }
        Schedule64::Annealed(a) => {
            for n in &names[..3] {
                out.push(CheckSummary::skipped(n, "annealed schedule"));
            }
            if a.certified {
                out.push(CheckSummary::from_check(bounds::annealed(records, &c, a)));
            } else {
                out.push(CheckSummary::skipped("annealed_bound", "schedule is not certified"));
            }
        }
    }
    out
}

/// Result of a run: the written summary and the process exit code.
#[derive(Debug)]
pub struct Outcome {
    pub summary_path: PathBuf,
    pub exit_code: i32,
    pub message: String,
}

/// Executes one experiment and writes its outputs. Errors are runtime errors
/// (exit code 1); a completed run reports 0 or [`EXIT_BOUND_FAILURE`].
pub fn run_experiment(exp: &Experiment) -> Result<Outcome> {
    if exp.raw.mode == Mode::FixedPoint {
        return solve_mne(exp);
    }
    let resolved = resolve_schedule(exp)?;
    let schedule = resolved.schedule;
    for w in &resolved.warnings {
        eprintln!("{}: NOT certified: {w}", exp.name);
    }
    let it = &exp.raw.integrator;
    let tau0 = schedule.tau_at(0.0);
    let dt = it.dt.unwrap_or_else(|| stable_dt(&exp.game, tau0, 0.5));
    if !(dt.is_finite() && dt > 0.0) {
        bail!("could not derive a step size (got {dt}); set integrator.dt");
    }
    let record_every = it.record_every.unwrap_or(it.t_end / 100.0);
    let mut cfg = IntegratorConfig64::new(dt, it.t_end, record_every);
    cfg.baseline_gda = it.baseline_gda;
    cfg.auto_substep = it.auto_substep;

    let reference = match schedule {
        Schedule64::Fixed { tau, .. } => {
            let rep = solve_fixed_point(&exp.game, tau, solver_options(exp), &exp.initial_profile()?)?;
            if !rep.converged {
                eprintln!(
                    "{}: equilibrium reference did not converge (residual {:.3e}); reference columns are approximate",
                    exp.name, rep.final_residual
                );
            }
            Some(rep.densities)
        }
        Schedule64::Annealed(_) => None,
    };

    let dir = output_dir(exp);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let init = exp.initial_profile()?;
    let (records, failure, particles) = match exp.raw.mode {
        Mode::Pde => {
            let out = run(
                &exp.game,
                &schedule,
                &cfg,
                DynamicsState::at_profile(init),
                reference.as_deref(),
            )?;
            (out.records, out.failure.map(|e| e.to_string()), None)
        }
        Mode::Particles => {
            let p = &exp.raw.particles;
            let ens = init_particles(exp.game.grids(), p.n, &init, p.seed)?;
            let out = run_particles(&exp.game, &schedule, &cfg, ens, reference.as_deref())?;
            if p.snapshot {
                let path = dir.join("particles.bin");
                let f = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                out.ensemble.write_snapshot(std::io::BufWriter::new(f))?;
            }
            (out.records, None, Some(p.n))
        }
        Mode::FixedPoint => unreachable!("handled above"),
    };

    report::write_metrics_csv(&dir.join("metrics.csv"), exp.game.players(), &records)?;
    if exp.raw.output.plots {
        report::write_curves_svg(&dir.join("curves.svg"), &exp.name, &records)?;
    }
    let checks = bound_checks(exp, &schedule, &records, exp.raw.mode);
    let any_failed = checks.iter().any(|c| c.passed == Some(false));
    let dt = cfg.step_plan().1;
    let summary = RunSummary {
        name: exp.name.clone(),
        mode: exp.raw.mode.name().to_string(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        game: game_summary(exp),
        schedule: (&schedule).into(),
        rate_constants: rate_constants(&exp.game.constants(), tau0, schedule.alpha_at(0.0)).into(),
        integrator: IntegratorSummary {
            dt,
            t_end: it.t_end,
            record_every,
            baseline_gda: it.baseline_gda,
        },
        particles,
        records: records.len(),
        final_state: records.last().map(Into::into),
        fitted_rate: bounds::fitted_decay_rate(&records, 1e-12),
        checks,
        failure: failure.clone(),
    };
    let summary_path = dir.join("summary.json");
    report::write_json(&summary_path, &summary)?;

    let (exit_code, message) = if let Some(f) = failure {
        (1, format!("stopped: {f}"))
    } else if any_failed {
        (EXIT_BOUND_FAILURE, "a bound check failed".to_string())
    } else {
        (0, "ok".to_string())
    };
    Ok(Outcome {
        summary_path,
        exit_code,
        message,
    })
}

/// Temperature used by `solve-mne`.
fn solve_tau(exp: &Experiment) -> Result<f64> {
    if let Some(t) = exp.raw.solver.tau {
        return Ok(t);
    }
    match exp.raw.schedule {
        ScheduleSection::Fixed { tau, .. } => Ok(tau),
        _ => bail!("annealed configs need solver.tau for fixed-point solves"),
    }
}

pub fn solve_mne(exp: &Experiment) -> Result<Outcome> {
    let tau = solve_tau(exp)?;
    let rep = solve_fixed_point(&exp.game, tau, solver_options(exp), &exp.initial_profile()?)?;
    let dir = output_dir(exp);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    report::write_equilibrium_csv(&dir.join("equilibrium.csv"), &rep.densities)?;
    let dims: Vec<usize> = exp.game.grids().iter().map(|g| g.dim()).collect();
    let beta = (dims.iter().copied().max().unwrap_or(1) + 1) as f64;
    let summary = SolveSummary {
        name: exp.name.clone(),
        game: game_summary(exp),
        tau,
        iterations: rep.iterations,
        final_residual: rep.final_residual,
        converged: rep.converged,
        ni_tau: ni_regularized(&exp.game, tau, &rep.densities)?,
        ni: ni_unregularized(&exp.game, &rep.densities)?,
        epsilon: epsilon_for_tau(&exp.game.constants(), &dims, tau, beta).ok(),
    };
    let summary_path = dir.join("summary.json");
    report::write_json(&summary_path, &summary)?;
    let (exit_code, message) = if rep.converged {
        (0, format!("converged in {} iterations", rep.iterations))
    } else {
        (
            EXIT_BOUND_FAILURE,
            format!("not converged after {} iterations (residual {:.3e})", rep.iterations, rep.final_residual),
        )
    };
    Ok(Outcome {
        summary_path,
        exit_code,
        message,
    })
}

/// Human-readable schedule report; `Err` when the schedule is refused.
pub fn describe_schedule(exp: &Experiment) -> Result<String> {
    let c = exp.game.constants();
    let resolved = resolve_schedule(exp)?;
    let mut out = format!(
        "game {}: M0 = {:.6}, M1 = {:.6}, M2 = {:.6}, L = {:.6}\n",
        exp.game.label(),
        c.m0,
        c.m1,
        c.m2,
        c.l
    );
    match resolved.schedule {
        Schedule64::Fixed { tau, alpha } => {
            let rc = rate_constants(&c, tau, alpha);
            out += &format!(
                "fixed: tau = {tau}, alpha = {alpha:.6e}; kappa = {:.6e}, lambda = {:.6e}, alpha_bar0 = {:.6e}\n",
                rc.kappa, rc.lambda, rc.alpha_bar0
            );
            if alpha > rc.alpha_bar0 * (1.0 + ALPHA_TOL) {
                out += "alpha exceeds alpha_bar0: decay bounds are not guaranteed\n";
            }
        }
        Schedule64::Annealed(a) => {
            out += &format!(
                "annealed: delta = {:.9e}, beta = {:.9e}, c0 = {:.9e} ({})\n",
                a.delta,
                a.beta,
                a.c0,
                if a.certified { "certified" } else { "NOT certified" }
            );
            out += &format!(
                "tau(0) = {:.6e}, alpha(0) = {:.6e}\n",
                resolved.schedule.tau_at(0.0),
                resolved.schedule.alpha_at(0.0)
            );
            for w in &resolved.warnings {
                out += &format!("violated: {w}\n");
            }
        }
    }
    Ok(out)
}

/// Config files of a batch directory, sorted by name.
pub fn batch_configs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    Ok(files)
}
