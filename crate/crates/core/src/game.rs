//! Pairwise zero-sum games on products of tori.
//!
//! Player `i` suffers `U_i(x) = sum_{j != i} W_ij(x_i, x_j)` with
//! `W_ji(y, x) = -W_ij(x, y)`. Only the `i < j` tables are stored; the other
//! orientation is read as a negated transpose, so antisymmetry holds exactly.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Density, PotentialField, TorusGrid, MAX_DIM};
use crate::scalar::{compensated_sum, Real};

/// Tabulated `W_ij` over `grid_i x grid_j`, row-major (rows are cells of player `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseKernel<T> {
    pub player_i: usize,
    pub player_j: usize,
    table: Vec<T>,
}

impl<T: Real> PairwiseKernel<T> {
    pub fn table(&self) -> &[T] {
        &self.table
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Builtin {
    Zero,
    /// `W_12(x, y) = a cos(2 pi (x - y))`
    ShiftCosine { a: f64 },
    /// `W_12(x, y) = a cos(2 pi x) sin(2 pi y)`
    SeparableTrig { a: f64 },
    /// Seeded Fourier series with frequencies `<= 3`, sup norm at most `a` per pair.
    RandomSmooth { a: f64, seed: u64 },
}

impl Builtin {
    pub const NAMES: [&'static str; 4] = ["zero", "shift_cosine", "separable_trig", "random_smooth"];

    pub fn parse(name: &str, params: &[f64]) -> Result<Self> {
        let expect = |n: usize| -> Result<()> {
            if params.len() != n {
                return Err(Error::ParameterCount {
                    name: name.to_string(),
                    expected: n,
                    got: params.len(),
                });
            }
            Ok(())
        };
        match name {
            "zero" => {
                expect(0)?;
                Ok(Builtin::Zero)
            }
            "shift_cosine" => {
                expect(1)?;
                Ok(Builtin::ShiftCosine { a: params[0] })
            }
            "separable_trig" => {
                expect(1)?;
                Ok(Builtin::SeparableTrig { a: params[0] })
            }
            "random_smooth" => {
                expect(2)?;
                let seed = params[1];
                if seed < 0.0 || seed.fract() != 0.0 || seed > u64::MAX as f64 {
                    return Err(Error::InvalidParameter(format!(
                        "random_smooth seed must be a nonnegative integer, got {seed}"
                    )));
                }
                Ok(Builtin::RandomSmooth {
                    a: params[0],
                    seed: seed as u64,
                })
            }
            other => Err(Error::UnknownGame(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Builtin::Zero => "zero",
            Builtin::ShiftCosine { .. } => "shift_cosine",
            Builtin::SeparableTrig { .. } => "separable_trig",
            Builtin::RandomSmooth { .. } => "random_smooth",
        }
    }
}

/// Constants bounding the losses and their derivatives.
///
/// `m0` uses the pairwise upper bound `max_i sum_{j != i} sup|W_ij|` evaluated on
/// grid nodes, `m1 = sum_i sum_{j != i} sup|W_ij|`, `m2` the largest mixed second
/// difference and `l` the largest gradient norm (central differences), both
/// summed over opponents and maximized over players.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GameConstants<T> {
    pub m0: T,
    pub m1: T,
    pub m2: T,
    pub l: T,
}

impl<T: Real> GameConstants<T> {
    pub fn scaled(&self, c: T) -> Self {
        Self {
            m0: self.m0 * c,
            m1: self.m1 * c,
            m2: self.m2 * c,
            l: self.l * c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Game<T> {
    grids: Vec<TorusGrid>,
    kernels: Vec<PairwiseKernel<T>>,
    label: String,
    builtin: Option<Builtin>,
}

fn pair_slot(k: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < k);
    i * k - i * (i + 1) / 2 + (j - i - 1)
}

impl<T: Real> Game<T> {
    /// Builds a game from the `i < j` tables, ordered `(0,1), (0,2), ..., (1,2), ...`.
    pub fn from_tables(grids: Vec<TorusGrid>, tables: Vec<Vec<T>>, label: &str) -> Result<Self> {
        let k = grids.len();
        if k < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 players, got {k}")));
        }
        if tables.len() != k * (k - 1) / 2 {
            return Err(Error::InvalidParameter(format!(
                "{} tables for {} players",
                tables.len(),
                k
            )));
        }
        let mut kernels = Vec::with_capacity(tables.len());
        let mut it = tables.into_iter();
        for i in 0..k {
            for j in (i + 1)..k {
                let table = it.next().expect("counted above");
                let want = grids[i].cell_count() * grids[j].cell_count();
                if table.len() != want {
                    return Err(Error::GridMismatch(format!(
                        "table ({i},{j}) has {} entries, grids need {want}",
                        table.len()
                    )));
                }
                if table.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "table ({i},{j}) has non-finite entries"
                    )));
                }
                kernels.push(PairwiseKernel {
                    player_i: i,
                    player_j: j,
                    table,
                });
            }
        }
        Ok(Self {
            grids,
            kernels,
            label: label.to_string(),
            builtin: None,
        })
    }

    /// Builds a game by sampling `f(i, j, x_i, x_j)` at cell centers for every `i < j`.
    pub fn from_fn(
        grids: Vec<TorusGrid>,
        label: &str,
        f: impl Fn(usize, usize, [f64; MAX_DIM], [f64; MAX_DIM]) -> f64,
    ) -> Result<Self> {
        let k = grids.len();
        let mut tables = Vec::new();
        for i in 0..k {
            for j in (i + 1)..k {
                let (gi, gj) = (grids[i], grids[j]);
                let mut t = Vec::with_capacity(gi.cell_count() * gj.cell_count());
                for a in 0..gi.cell_count() {
                    let x = gi.cell_center::<f64>(a);
                    for b in 0..gj.cell_count() {
                        t.push(T::lit(f(i, j, x, gj.cell_center::<f64>(b))));
                    }
                }
                tables.push(t);
            }
        }
        Self::from_tables(grids, tables, label)
    }

    pub fn builtin(builtin: Builtin, grids: Vec<TorusGrid>) -> Result<Self> {
        let two_player_1d = |name: &str| -> Result<()> {
            if grids.len() != 2 || grids.iter().any(|g| g.dim() != 1) {
                return Err(Error::InvalidParameter(format!(
                    "{name} needs exactly 2 players on 1-d grids"
                )));
            }
            Ok(())
        };
        let tau_pi = 2.0 * PI;
        let mut game = match builtin {
            Builtin::Zero => Self::from_fn(grids, "zero", |_, _, _, _| 0.0)?,
            Builtin::ShiftCosine { a } => {
                two_player_1d("shift_cosine")?;
                Self::from_fn(grids, "shift_cosine", |_, _, x, y| {
                    a * (tau_pi * (x[0] - y[0])).cos()
                })?
            }
            Builtin::SeparableTrig { a } => {
                two_player_1d("separable_trig")?;
                Self::from_fn(grids, "separable_trig", |_, _, x, y| {
                    a * (tau_pi * x[0]).cos() * (tau_pi * y[0]).sin()
                })?
            }
            Builtin::RandomSmooth { a, seed } => {
                let series = random_series(&grids, a, seed);
                let k = grids.len();
                Self::from_fn(grids, "random_smooth", |i, j, x, y| series[pair_slot(k, i, j)].eval(x, y))?
            }
        };
        game.builtin = Some(builtin);
        Ok(game)
    }

    pub fn players(&self) -> usize {
        self.grids.len()
    }

    pub fn grids(&self) -> &[TorusGrid] {
        &self.grids
    }

    pub fn grid(&self, i: usize) -> &TorusGrid {
        &self.grids[i]
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn builtin_kind(&self) -> Option<Builtin> {
        self.builtin
    }

    pub fn kernels(&self) -> &[PairwiseKernel<T>] {
        &self.kernels
    }

    fn kernel(&self, i: usize, j: usize) -> &PairwiseKernel<T> {
        &self.kernels[pair_slot(self.players(), i, j)]
    }

    /// `W_ij(x_a, y_b)` for cells `a` of player `i` and `b` of player `j`.
    #[inline]
    pub fn w(&self, i: usize, j: usize, a: usize, b: usize) -> T {
        if i < j {
            self.kernel(i, j).table[a * self.grids[j].cell_count() + b]
        } else {
            -self.kernel(j, i).table[b * self.grids[i].cell_count() + a]
        }
    }

    fn check_profile(&self, profile: &[Density<T>], skip: Option<usize>) -> Result<()> {
        if profile.len() != self.players() {
            return Err(Error::GridMismatch(format!(
                "profile has {} densities for {} players",
                profile.len(),
                self.players()
            )));
        }
        for (j, d) in profile.iter().enumerate() {
            if Some(j) != skip {
                self.grids[j].ensure_same(d.grid())?;
            }
        }
        Ok(())
    }

    /// `U_i * nu^{-i}` on the grid of player `i`.
    ///
    /// `profile` holds one density per player; entry `i` is ignored.
    pub fn effective_potential(&self, i: usize, profile: &[Density<T>]) -> Result<PotentialField<T>> {
        self.check_profile(profile, Some(i))?;
        let ni = self.grids[i].cell_count();
        let mut value = vec![T::zero(); ni];
        for (j, other) in profile.iter().enumerate() {
            if j == i {
                continue;
            }
            let nj = self.grids[j].cell_count();
            let p = other.mass();
            if i < j {
                let table = &self.kernel(i, j).table;
                for (a, v) in value.iter_mut().enumerate() {
                    let row = &table[a * nj..(a + 1) * nj];
                    *v += row.iter().zip(p).map(|(w, q)| *w * *q).sum::<T>();
                }
            } else {
                let table = &self.kernel(j, i).table;
                for (b, q) in p.iter().enumerate() {
                    if *q == T::zero() {
                        continue;
                    }
                    let row = &table[b * ni..(b + 1) * ni];
                    for (v, w) in value.iter_mut().zip(row) {
                        *v -= *w * *q;
                    }
                }
            }
        }
        Ok(PotentialField::from_raw_parts(self.grids[i], value))
    }

    /// `sum_i <U_i * nu^{-i}, nu^i>`, identically zero for pairwise zero-sum games.
    pub fn check_pairwise_zero_sum(&self, profile: &[Density<T>]) -> Result<T> {
        self.check_profile(profile, None)?;
        let mut terms = Vec::with_capacity(self.players());
        for i in 0..self.players() {
            let a = self.effective_potential(i, profile)?;
            terms.push(profile[i].integrate(&a)?);
        }
        Ok(compensated_sum(terms))
    }

    fn pair_sup(&self, i: usize, j: usize) -> T {
        self.kernel(i.min(j), i.max(j))
            .table
            .iter()
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Largest mixed second difference of the `(i, j)` table over all coordinate pairs.
    fn pair_mixed_second(&self, i: usize, j: usize) -> T {
        let (gi, gj) = (self.grids[i], self.grids[j]);
        let hh = gi.spacing::<T>() * gj.spacing::<T>();
        let mut best = T::zero();
        for ax in 0..gi.dim() {
            for ay in 0..gj.dim() {
                for a in 0..gi.cell_count() {
                    let ap = gi.neighbor(a, ax, true);
                    for b in 0..gj.cell_count() {
                        let bp = gj.neighbor(b, ay, true);
                        let d = self.w(i, j, ap, bp) - self.w(i, j, ap, b) - self.w(i, j, a, bp)
                            + self.w(i, j, a, b);
                        best = best.max(d.abs());
                    }
                }
            }
        }
        best / hh
    }

    /// Largest Euclidean norm of the central-difference gradient of the `(i, j)` table.
    fn pair_gradient(&self, i: usize, j: usize) -> T {
        let (gi, gj) = (self.grids[i], self.grids[j]);
        let two_hi = gi.spacing::<T>() * T::lit(2.0);
        let two_hj = gj.spacing::<T>() * T::lit(2.0);
        let mut best = T::zero();
        for a in 0..gi.cell_count() {
            for b in 0..gj.cell_count() {
                let mut sq = T::zero();
                for ax in 0..gi.dim() {
                    let d = (self.w(i, j, gi.neighbor(a, ax, true), b)
                        - self.w(i, j, gi.neighbor(a, ax, false), b))
                        / two_hi;
                    sq += d * d;
                }
                for ay in 0..gj.dim() {
                    let d = (self.w(i, j, a, gj.neighbor(b, ay, true))
                        - self.w(i, j, a, gj.neighbor(b, ay, false)))
                        / two_hj;
                    sq += d * d;
                }
                best = best.max(sq.sqrt());
            }
        }
        best
    }

    pub fn constants(&self) -> GameConstants<T> {
        let k = self.players();
        let mut sup = vec![vec![T::zero(); k]; k];
        let mut mixed = vec![vec![T::zero(); k]; k];
        let mut grad = vec![vec![T::zero(); k]; k];
        for i in 0..k {
            for j in (i + 1)..k {
                let s = self.pair_sup(i, j);
                let m = self.pair_mixed_second(i, j);
                let g = self.pair_gradient(i, j);
                sup[i][j] = s;
                sup[j][i] = s;
                mixed[i][j] = m;
                mixed[j][i] = m;
                grad[i][j] = g;
                grad[j][i] = g;
            }
        }
        let row = |m: &Vec<Vec<T>>, i: usize| -> T { m[i].iter().copied().sum() };
        let per_player: Vec<T> = (0..k).map(|i| row(&sup, i)).collect();
        let max_of = |m: &Vec<Vec<T>>| (0..k).map(|i| row(m, i)).fold(T::zero(), T::max);
        GameConstants {
            m0: per_player.iter().copied().fold(T::zero(), T::max),
            m1: per_player.iter().copied().sum(),
            m2: max_of(&mixed),
            l: max_of(&grad),
        }
    }

    /// Continuum values of the constants for builtin games with closed forms.
    pub fn analytic_constants(&self) -> Option<GameConstants<f64>> {
        let two_pi = 2.0 * PI;
        match self.builtin? {
            Builtin::Zero => Some(GameConstants::default()),
            Builtin::ShiftCosine { a } => Some(GameConstants {
                m0: a.abs(),
                m1: 2.0 * a.abs(),
                m2: two_pi * two_pi * a.abs(),
                l: std::f64::consts::SQRT_2 * two_pi * a.abs(),
            }),
            Builtin::SeparableTrig { a } => Some(GameConstants {
                m0: a.abs(),
                m1: 2.0 * a.abs(),
                m2: two_pi * two_pi * a.abs(),
                l: two_pi * a.abs(),
            }),
            Builtin::RandomSmooth { .. } => None,
        }
    }

    /// Upper bound on `|A(x_{k+1}) - A(x_k)|` over adjacent cells for any
    /// effective potential `A` of player `i`.
    pub fn potential_jump_bound(&self, i: usize) -> T {
        let gi = self.grids[i];
        let mut best = T::zero();
        for ax in 0..gi.dim() {
            let mut total = T::zero();
            for j in 0..self.players() {
                if j == i {
                    continue;
                }
                let mut m = T::zero();
                for a in 0..gi.cell_count() {
                    let ap = gi.neighbor(a, ax, true);
                    for b in 0..self.grids[j].cell_count() {
                        m = m.max((self.w(i, j, ap, b) - self.w(i, j, a, b)).abs());
                    }
                }
                total += m;
            }
            best = best.max(total);
        }
        best
    }

    pub fn scaled(&self, c: T) -> Self {
        let mut g = self.clone();
        for k in g.kernels.iter_mut() {
            for v in k.table.iter_mut() {
                *v *= c;
            }
        }
        g.builtin = None;
        g
    }

    /// Relabels players: new player `p` is old player `perm[p]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let k = self.players();
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidParameter(format!("{perm:?} is not a permutation of 0..{k}")));
        }
        let grids: Vec<TorusGrid> = perm.iter().map(|&p| self.grids[p]).collect();
        let mut tables = Vec::new();
        for p in 0..k {
            for q in (p + 1)..k {
                let (op, oq) = (perm[p], perm[q]);
                let (np, nq) = (grids[p].cell_count(), grids[q].cell_count());
                let mut t = Vec::with_capacity(np * nq);
                for a in 0..np {
                    for b in 0..nq {
                        t.push(self.w(op, oq, a, b));
                    }
                }
                tables.push(t);
            }
        }
        Self::from_tables(grids, tables, &self.label)
    }

    /// Reads the plain-text kernel format.
    ///
    /// ```text
    /// # comments run to end of line
    /// K d_1 n_1 ... d_K n_K
    /// <table (0,1): n_0^d_0 rows of n_1^d_1 values>
    /// <table (0,2)> ... <table (K-2,K-1)>
    /// ```
    /// Whitespace and line breaks between numbers are not significant; tables
    /// follow `i < j` in lexicographic order and are row-major over
    /// `cells(i) x cells(j)` with cells flattened as in [`TorusGrid`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.lines().enumerate().flat_map(|(ln, line)| {
            let content = line.split('#').next().unwrap_or("");
            content.split_whitespace().map(move |t| (ln + 1, t))
        });
        let mut last_line = 1;
        let mut next_token = |what: &str| -> Result<(usize, String)> {
            match tokens.next() {
                Some((ln, t)) => {
                    last_line = ln;
                    Ok((ln, t.to_string()))
                }
                None => Err(Error::Parse {
                    line: last_line,
                    msg: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let parse_usize = |(ln, t): (usize, String), what: &str| -> Result<usize> {
            t.parse::<usize>().map_err(|_| Error::Parse {
                line: ln,
                msg: format!("expected {what}, found `{t}`"),
            })
        };
        let k = parse_usize(next_token("player count")?, "player count")?;
        let mut grids = Vec::with_capacity(k);
        for p in 0..k {
            let tok = next_token("dimension")?;
            let ln = tok.0;
            let d = parse_usize(tok, "dimension")?;
            let n = parse_usize(next_token("points per dimension")?, "points per dimension")?;
            grids.push(TorusGrid::new(d, n).map_err(|e| Error::Parse {
                line: ln,
                msg: format!("player {}: {e}", p + 1),
            })?);
        }
        let mut tables = Vec::new();
        for i in 0..k {
            for j in (i + 1)..k {
                let len = grids[i].cell_count() * grids[j].cell_count();
                let mut t = Vec::with_capacity(len);
                for _ in 0..len {
                    let (ln, tok) = next_token(&format!("entry of table ({i},{j})"))?;
                    let v: f64 = tok.parse().map_err(|_| Error::Parse {
                        line: ln,
                        msg: format!("expected number, found `{tok}`"),
                    })?;
                    t.push(T::lit(v));
                }
                tables.push(t);
            }
        }
        if let Ok((ln, tok)) = next_token("") {
            return Err(Error::Parse {
                line: ln,
                msg: format!("trailing data `{tok}`"),
            });
        }
        Self::from_tables(grids, tables, "custom")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{}", self.players());
        for g in &self.grids {
            let _ = write!(out, " {} {}", g.dim(), g.points_per_dim());
        }
        out.push('\n');
        for kern in &self.kernels {
            let _ = writeln!(out, "# W_{}{}", kern.player_i + 1, kern.player_j + 1);
            let nj = self.grids[kern.player_j].cell_count();
            for row in kern.table.chunks(nj) {
                let line: Vec<String> = row.iter().map(|v| format!("{:e}", v.to_f64_lossy())).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }
}

pub fn builtin_game<T: Real>(name: &str, params: &[f64], grids: Vec<TorusGrid>) -> Result<Game<T>> {
    Game::builtin(Builtin::parse(name, params)?, grids)
}

/// Separable Fourier expansion `sum_{p,q} c_pq phi_p(x) psi_q(y)` of one pair kernel.
struct Series {
    coeffs: Vec<(usize, usize, f64)>,
}

/// Basis functions on a `d`-torus: constant, then `cos`/`sin` of frequencies 1..=3 per axis.
fn basis_len(dim: usize) -> usize {
    1 + 6 * dim
}

fn basis(idx: usize, x: [f64; MAX_DIM]) -> f64 {
    if idx == 0 {
        return 1.0;
    }
    let r = idx - 1;
    let axis = r / 6;
    let freq = (r % 6) / 2 + 1;
    let arg = 2.0 * PI * freq as f64 * x[axis];
    if r % 2 == 0 {
        arg.cos()
    } else {
        arg.sin()
    }
}

impl Series {
    fn eval(&self, x: [f64; MAX_DIM], y: [f64; MAX_DIM]) -> f64 {
        self.coeffs.iter().map(|&(p, q, c)| c * basis(p, x) * basis(q, y)).sum()
    }
}

fn random_series(grids: &[TorusGrid], a: f64, seed: u64) -> Vec<Series> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = grids.len();
    let mut out = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            let mut coeffs = Vec::new();
            for p in 0..basis_len(grids[i].dim()) {
                for q in 0..basis_len(grids[j].dim()) {
                    if p == 0 && q == 0 {
                        continue;
                    }
                    coeffs.push((p, q, rng.gen_range(-1.0f64..1.0)));
                }
            }
            let l1: f64 = coeffs.iter().map(|c| c.2.abs()).sum();
            for c in coeffs.iter_mut() {
                c.2 *= a / l1;
            }
            out.push(Series { coeffs });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn line(n: usize) -> TorusGrid {
        TorusGrid::new(1, n).unwrap()
    }

    fn random_profile(game: &Game<f64>, rng: &mut ChaCha8Rng) -> Vec<Density<f64>> {
        game.grids()
            .iter()
            .map(|g| Density::random_positive(*g, rng, 1.0))
            .collect()
    }

    #[test]
    fn zero_game() {
        let g: Game<f64> = builtin_game("zero", &[], vec![line(8); 3]).unwrap();
        assert!(g.kernels().iter().all(|k| k.table().iter().all(|v| *v == 0.0)));
        let prof = vec![Density::uniform(line(8)); 3];
        assert!(g.effective_potential(1, &prof).unwrap().values().iter().all(|v| *v == 0.0));
        assert_eq!(g.constants(), GameConstants::default());
    }

    #[test]
    fn antisymmetric_view() {
        let g: Game<f64> = builtin_game("random_smooth", &[1.0, 7.0], vec![line(5), line(4), line(3)]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                for a in 0..g.grid(i).cell_count() {
                    for b in 0..g.grid(j).cell_count() {
                        assert_eq!(g.w(j, i, b, a), -g.w(i, j, a, b));
                    }
                }
            }
        }
    }

    #[test]
    fn shift_cosine_table() {
        let g: Game<f64> = builtin_game("shift_cosine", &[1.0], vec![line(64); 2]).unwrap();
        let sup = g.kernels()[0].table().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((sup - 1.0).abs() < 1e-15);
        let h = 1.0 / 64.0;
        let x = 3.5 * h;
        let y = 10.5 * h;
        assert!((g.w(0, 1, 3, 10) - (2.0 * PI * (x - y)).cos()).abs() < 1e-15);
    }

    #[test]
    fn shift_cosine_uniform_potential_vanishes() {
        let g: Game<f64> = builtin_game("shift_cosine", &[1.0], vec![line(64); 2]).unwrap();
        let prof = vec![Density::uniform(line(64)); 2];
        let a = g.effective_potential(0, &prof).unwrap();
        assert!(a.sup_norm() < 1e-15);
    }

    #[test]
    fn separable_trig_point_mass_matches_double_loop() {
        let n = 32;
        let g: Game<f64> = builtin_game("separable_trig", &[0.8], vec![line(n); 2]).unwrap();
        let cell = line(n).locate(&[0.25]);
        let prof = vec![Density::uniform(line(n)), Density::point_mass(line(n), cell)];
        let a = g.effective_potential(0, &prof).unwrap();
        let yc = (cell as f64 + 0.5) / n as f64;
        for k in 0..n {
            let x = (k as f64 + 0.5) / n as f64;
            let mut oracle = 0.0;
            for l in 0..n {
                let y = (l as f64 + 0.5) / n as f64;
                oracle += 0.8 * (2.0 * PI * x).cos() * (2.0 * PI * y).sin() * prof[1].mass()[l];
            }
            assert!((a.values()[k] - oracle).abs() < 1e-14);
            assert!((a.values()[k] - 0.8 * (2.0 * PI * x).cos() * (2.0 * PI * yc).sin()).abs() < 1e-14);
        }
        // and from the other side, against the negated transpose
        let b = g.effective_potential(1, &[Density::point_mass(line(n), 0), Density::uniform(line(n))]).unwrap();
        let x0 = 0.5 / n as f64;
        for l in 0..n {
            let y = (l as f64 + 0.5) / n as f64;
            assert!((b.values()[l] + 0.8 * (2.0 * PI * x0).cos() * (2.0 * PI * y).sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn effective_potential_grid_mismatch() {
        let g: Game<f64> = builtin_game("shift_cosine", &[1.0], vec![line(8); 2]).unwrap();
        let prof = vec![Density::uniform(line(8)), Density::uniform(line(9))];
        assert!(matches!(g.effective_potential(0, &prof), Err(Error::GridMismatch(_))));
        assert!(g.effective_potential(0, &prof[..1]).is_err());
    }

    #[test]
    fn effective_potential_bounded_by_m0() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grids = vec![line(12), TorusGrid::new(2, 5).unwrap(), line(9)];
        let g: Game<f64> = builtin_game("random_smooth", &[2.0, 11.0], grids).unwrap();
        let c = g.constants();
        for _ in 0..20 {
            let prof = random_profile(&g, &mut rng);
            for i in 0..3 {
                assert!(g.effective_potential(i, &prof).unwrap().sup_norm() <= c.m0 + 1e-12);
            }
        }
    }

    #[test]
    fn shift_cosine_constants() {
        let g: Game<f64> = builtin_game("shift_cosine", &[1.0], vec![line(64); 2]).unwrap();
        let c = g.constants();
        assert!((c.m0 - 1.0).abs() < 1e-15);
        assert!((c.m1 - 2.0).abs() < 1e-15);
        let m2 = 4.0 * PI * PI;
        assert!((c.m2 - m2).abs() / m2 < 0.02, "m2 = {}", c.m2);
        let an = g.analytic_constants().unwrap();
        assert!((c.l - an.l).abs() / an.l < 0.02);
    }

    /// Brute-force scan of the finite-difference formulas on explicit coordinates.
    fn brute_constants(g: &Game<f64>, f: &dyn Fn(usize, usize, f64, f64) -> f64) -> (f64, f64, f64) {
        // 1-d players only
        let k = g.players();
        let mut m0 = 0.0f64;
        let mut m2 = 0.0f64;
        let mut l = 0.0f64;
        for i in 0..k {
            let (mut s0, mut s2, mut sl) = (0.0, 0.0, 0.0);
            for j in 0..k {
                if i == j {
                    continue;
                }
                let (ni, nj) = (g.grid(i).points_per_dim(), g.grid(j).points_per_dim());
                let (hi, hj) = (1.0 / ni as f64, 1.0 / nj as f64);
                let (mut p0, mut p2, mut pl) = (0.0f64, 0.0f64, 0.0f64);
                for a in 0..ni {
                    for b in 0..nj {
                        let x = (a as f64 + 0.5) * hi;
                        let y = (b as f64 + 0.5) * hj;
                        let w = |x: f64, y: f64| f(i, j, x, y);
                        p0 = p0.max(w(x, y).abs());
                        let mixed = w(x + hi, y + hj) - w(x + hi, y) - w(x, y + hj) + w(x, y);
                        p2 = p2.max(mixed.abs() / (hi * hj));
                        let gx = (w(x + hi, y) - w(x - hi, y)) / (2.0 * hi);
                        let gy = (w(x, y + hj) - w(x, y - hj)) / (2.0 * hj);
                        pl = pl.max((gx * gx + gy * gy).sqrt());
                    }
                }
                s0 += p0;
                s2 += p2;
                sl += pl;
            }
            m0 = m0.max(s0);
            m2 = m2.max(s2);
            l = l.max(sl);
        }
        (m0, m2, l)
    }

    #[test]
    fn constants_match_brute_force_scan() {
        let grids = vec![line(10), line(7), line(12)];
        let coeffs = [0.7, -0.4, 1.3];
        let f = move |i: usize, j: usize, x: f64, y: f64| {
            let s = if i < j { 1.0 } else { -1.0 };
            let (x, y, i, j) = if i < j { (x, y, i, j) } else { (y, x, j, i) };
            let c = coeffs[i + j - 1];
            s * c * ((2.0 * PI * x).sin() * (4.0 * PI * y).cos() + 0.3 * (2.0 * PI * (x + 2.0 * y)).cos())
        };
        let g: Game<f64> = Game::from_fn(grids, "custom", |i, j, x, y| f(i, j, x[0], y[0])).unwrap();
        let c = g.constants();
        let (m0, m2, l) = brute_constants(&g, &f);
        assert!((c.m0 - m0).abs() < 1e-12);
        assert!((c.m2 - m2).abs() < 1e-9 * m2);
        assert!((c.l - l).abs() < 1e-9 * l);
        assert!(c.m0 <= c.m1 && c.m1 <= 3.0 * c.m0);
    }

    #[test]
    fn constants_scale_linearly() {
        let g: Game<f64> = builtin_game("random_smooth", &[1.0, 5.0], vec![line(9), line(11), line(6)]).unwrap();
        let c = g.constants();
        for s in [2.0, 0.25] {
            assert_eq!(g.scaled(s).constants(), c.scaled(s));
        }
        let c3 = g.scaled(3.0).constants();
        let want = c.scaled(3.0);
        for (x, y) in [(c3.m0, want.m0), (c3.m1, want.m1), (c3.m2, want.m2), (c3.l, want.l)] {
            assert!((x - y).abs() <= 1e-13 * y);
        }
    }

    #[test]
    fn zero_sum_cancellation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g: Game<f64> = builtin_game("shift_cosine", &[1.0], vec![line(64); 2]).unwrap();
        for _ in 0..10 {
            let prof = random_profile(&g, &mut rng);
            assert!(g.check_pairwise_zero_sum(&prof).unwrap().abs() < 1e-12);
        }
        let g4: Game<f64> = builtin_game("random_smooth", &[1.0, 2.0], vec![line(16); 4]).unwrap();
        for _ in 0..10 {
            let prof = random_profile(&g4, &mut rng);
            assert!(g4.check_pairwise_zero_sum(&prof).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn random_smooth_deterministic() {
        let a: Game<f64> = builtin_game("random_smooth", &[1.0, 42.0], vec![line(8); 3]).unwrap();
        let b: Game<f64> = builtin_game("random_smooth", &[1.0, 42.0], vec![line(8); 3]).unwrap();
        let c: Game<f64> = builtin_game("random_smooth", &[1.0, 43.0], vec![line(8); 3]).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.kernels()[0].table(), c.kernels()[0].table());
        assert!(a.constants().m0 <= 2.0 + 1e-12);
    }

    #[test]
    fn builtin_errors() {
        assert!(matches!(
            builtin_game::<f64>("nope", &[], vec![line(4); 2]),
            Err(Error::UnknownGame(_))
        ));
        assert!(matches!(
            builtin_game::<f64>("shift_cosine", &[], vec![line(4); 2]),
            Err(Error::ParameterCount { expected: 1, got: 0, .. })
        ));
        assert!(builtin_game::<f64>("shift_cosine", &[1.0], vec![line(4); 3]).is_err());
        assert!(builtin_game::<f64>("random_smooth", &[1.0, -2.0], vec![line(4); 3]).is_err());
        assert!(builtin_game::<f64>("zero", &[], vec![line(4)]).is_err());
    }

    #[test]
    fn permutation_relabels() {
        let g: Game<f64> = builtin_game("random_smooth", &[1.0, 9.0], vec![line(5), line(6), line(7)]).unwrap();
        let perm = [2, 0, 1];
        let p = g.permuted(&perm).unwrap();
        for a in 0..7 {
            for b in 0..5 {
                assert_eq!(p.w(0, 1, a, b), g.w(2, 0, a, b));
            }
        }
        assert!(g.permuted(&[0, 0, 1]).is_err());
    }

    #[test]
    fn text_format_roundtrip() {
        let g: Game<f64> = builtin_game("random_smooth", &[1.0, 4.0], vec![line(3), TorusGrid::new(2, 2).unwrap()]).unwrap();
        let text = g.to_text();
        let back: Game<f64> = Game::from_text(&text).unwrap();
        assert_eq!(back.grids(), g.grids());
        for (x, y) in back.kernels()[0].table().iter().zip(g.kernels()[0].table()) {
            assert!((x - y).abs() < 1e-15 * y.abs().max(1.0));
        }
        let err = Game::<f64>::from_text("2 1 2 1 2\n0 1\n1 x\n").unwrap_err();
        assert_eq!(err, Error::Parse { line: 3, msg: "expected number, found `x`".into() });
        assert!(matches!(Game::<f64>::from_text("2 1 2 1 2\n0 1 2"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(Game::<f64>::from_text("2 3 2 1 2"), Err(Error::Parse { line: 1, .. })));
    }
}
