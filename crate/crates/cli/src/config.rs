//! Experiment configuration files (TOML). See `configs/experiment.toml` for
//! a commented template with every key and its default.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mfnash::{builtin_game, Density64, Game64, TorusGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Pde,
    Particles,
    FixedPoint,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Pde => "pde",
            Mode::Particles => "particles",
            Mode::FixedPoint => "fixed_point",
        }
    }
}

/// A scalar shared by all players or one value per player.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PerPlayer<T> {
    Shared(T),
    Each(Vec<T>),
}

impl<T: Copy> PerPlayer<T> {
    fn expand(&self, players: usize, what: &str) -> Result<Vec<T>> {
        match self {
            PerPlayer::Shared(v) => Ok(vec![*v; players]),
            PerPlayer::Each(v) if v.len() == players => Ok(v.clone()),
            PerPlayer::Each(v) => bail!("grids.{what} lists {} values for {players} players", v.len()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    /// Builtin game name; exclusive with `kernel_file`.
    pub name: Option<String>,
    #[serde(default)]
    pub params: Vec<f64>,
    /// Custom kernel file, relative to the config file.
    pub kernel_file: Option<PathBuf>,
    /// Multiplies every kernel.
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub players: Option<usize>,
    #[serde(default = "dim_one")]
    pub dim: PerPlayer<usize>,
    pub n: PerPlayer<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSection {
    /// `alpha` defaults to the largest certified rate for `tau`.
    Fixed { tau: f64, alpha: Option<f64> },
    Annealed {
        delta: f64,
        beta: f64,
        c0: f64,
        /// Run even if the parameters are not admissible; reports are marked not certified.
        #[serde(default)]
        pragmatic: bool,
    },
    /// Derive admissible parameters from the game constants.
    AnnealedAuto,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    /// Defaults to half the a-priori stability bound at the initial temperature.
    pub dt: Option<f64>,
    #[serde(default)]
    pub t_end: f64,
    /// Defaults to `t_end / 100`.
    pub record_every: Option<f64>,
    #[serde(default)]
    pub baseline_gda: bool,
    #[serde(default)]
    pub auto_substep: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSection {
    #[serde(default = "default_particles")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    /// Write final particle positions as a binary snapshot.
    #[serde(default)]
    pub snapshot: bool,
}

impl Default for ParticleSection {
    fn default() -> Self {
        Self {
            n: default_particles(),
            seed: 0,
            snapshot: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "half")]
    pub damping: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Temperature for `solve-mne` with annealed schedules.
    pub tau: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            damping: half(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            tau: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSection {
    Uniform,
    /// One center per player (a list of coordinates per player).
    VonMises { centers: Vec<Vec<f64>>, concentration: f64 },
    Random {
        #[serde(default)]
        seed: u64,
        #[serde(default = "one")]
        spread: f64,
    },
}

impl Default for InitSection {
    fn default() -> Self {
        InitSection::Random { seed: 0, spread: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory, relative to the output root unless absolute.
    pub dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub plots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: None, plots: true }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub name: Option<String>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    pub game: GameSection,
    pub grids: Option<GridSection>,
    pub schedule: ScheduleSection,
    #[serde(default = "default_integrator")]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub particles: ParticleSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn dim_one() -> PerPlayer<usize> {
    PerPlayer::Shared(1)
}
fn default_particles() -> usize {
    10_000
}
fn default_tol() -> f64 {
    1e-12
}
fn default_max_iter() -> usize {
    100_000
}
fn default_mode() -> Mode {
    Mode::Pde
}
fn default_integrator() -> IntegratorSection {
    IntegratorSection {
        dt: None,
        t_end: 0.0,
        record_every: None,
        baseline_gda: false,
        auto_substep: false,
    }
}

/// A loaded config together with the game it describes.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub raw: RawConfig,
    pub game: Game64,
}

impl Experiment {
    pub fn grids(&self) -> &[TorusGrid] {
        self.game.grids()
    }

    pub fn initial_profile(&self) -> Result<Vec<Density64>> {
        let grids = self.grids();
        Ok(match &self.raw.init {
            InitSection::Uniform => grids.iter().map(|g| Density64::uniform(*g)).collect(),
            InitSection::VonMises { centers, concentration } => {
                if centers.len() != grids.len() {
                    bail!("init.centers lists {} centers for {} players", centers.len(), grids.len());
                }
                grids
                    .iter()
                    .zip(centers)
                    .map(|(g, c)| {
                        if c.len() != g.dim() {
                            bail!("init center {c:?} does not match dimension {}", g.dim());
                        }
                        Ok(Density64::von_mises(*g, c, *concentration)?)
                    })
                    .collect::<Result<_>>()?
            }
            InitSection::Random { seed, spread } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                grids.iter().map(|g| Density64::random_positive(*g, &mut rng, *spread)).collect()
            }
        })
    }
}

fn build_game(raw: &RawConfig, base: &Path) -> Result<Game64> {
    let game = match (&raw.game.name, &raw.game.kernel_file) {
        (Some(_), Some(_)) => bail!("game: give either `name` or `kernel_file`, not both"),
        (None, None) => bail!("game: one of `name` or `kernel_file` is required"),
        (Some(name), None) => {
            let Some(grid) = &raw.grids else {
                bail!("builtin games need a [grids] section");
            };
            let players = grid.players.unwrap_or(match (&grid.n, &grid.dim) {
                (PerPlayer::Each(v), _) | (_, PerPlayer::Each(v)) => v.len(),
                _ => 2,
            });
            let dims = grid.dim.expand(players, "dim")?;
            let ns = grid.n.expand(players, "n")?;
            let grids = dims
                .iter()
                .zip(&ns)
                .map(|(d, n)| TorusGrid::new(*d, *n))
                .collect::<mfnash::Result<Vec<_>>>()?;
            builtin_game(name, &raw.game.params, grids)?
        }
        (None, Some(file)) => {
            let path = base.join(file);
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading kernel file {}", path.display()))?;
            let game = Game64::from_text(&text).with_context(|| format!("parsing kernel file {}", path.display()))?;
            if raw.grids.is_some() {
                bail!("[grids] must be omitted for custom kernel files; the file header defines the grids");
            }
            game
        }
    };
    if !(raw.game.scale.is_finite() && raw.game.scale > 0.0) {
        bail!("game.scale must be positive and finite, got {}", raw.game.scale);
    }
    Ok(if raw.game.scale == 1.0 {
        game
    } else {
        game.scaled(raw.game.scale)
    })
}

fn validate(raw: &RawConfig, game: &Game64) -> Result<()> {
    let it = &raw.integrator;
    if raw.mode != Mode::FixedPoint {
        if !(it.t_end > 0.0 && it.t_end.is_finite()) {
            bail!("integrator.t_end must be positive, got {}", it.t_end);
        }
        if let Some(dt) = it.dt {
            if !(dt > 0.0) {
                bail!("integrator.dt must be positive, got {dt}");
            }
        }
        if let Some(r) = it.record_every {
            if !(r > 0.0) {
                bail!("integrator.record_every must be positive, got {r}");
            }
        }
    }
    if raw.mode == Mode::Particles && raw.particles.n == 0 {
        bail!("particles.n must be positive");
    }
    if let ScheduleSection::Fixed { tau, alpha } = raw.schedule {
        if !(tau > 0.0) {
            bail!("schedule.tau must be positive, got {tau}");
        }
        if let Some(a) = alpha {
            if !(a > 0.0) {
                bail!("schedule.alpha must be positive, got {a}");
            }
        }
    }
    if game.players() < 2 {
        bail!("a game needs at least two players");
    }
    Ok(())
}

/// Reads, parses and validates an experiment file. Schedule admissibility is
/// checked separately by [`crate::run::resolve_schedule`].
pub fn load(path: &Path) -> Result<Experiment> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let raw: RawConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let game = build_game(&raw, base).with_context(|| format!("in {}", path.display()))?;
    validate(&raw, &game).with_context(|| format!("in {}", path.display()))?;
    let name = raw.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "experiment".into())
    });
    Ok(Experiment {
        name,
        raw,
        game,
    })
}
