//! Uniform grids on the unit torus and probability vectors over their cells.
//!
//! A [`Density`] stores cell *masses* (probabilities), not density values, so
//! that `sum(mass) == 1` is the normalization and entropies against Lebesgue
//! measure read `sum p_k ln(p_k / vol_k)`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Real};

/// Largest supported torus dimension per player.
pub const MAX_DIM: usize = 2;

/// Uniform cell grid on the unit torus `[0,1)^dim`.
///
/// Cells are indexed row-major: for `dim = 2` the cell `(a, b)` has index `a * n + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, points_per_dim: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if points_per_dim < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points per dimension, got {points_per_dim}"
            )));
        }
        Ok(Self {
            dim,
            n: points_per_dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_dim(&self) -> usize {
        self.n
    }

    pub fn cell_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn spacing<T: Real>(&self) -> T {
        T::one() / T::from_usize_lossy(self.n)
    }

    pub fn cell_volume<T: Real>(&self) -> T {
        T::one() / T::from_usize_lossy(self.cell_count())
    }

    /// Per-axis integer coordinates of cell `k`; unused axes are zero.
    pub fn multi_index(&self, k: usize) -> [usize; MAX_DIM] {
        match self.dim {
            1 => [k, 0],
            _ => [k / self.n, k % self.n],
        }
    }

    pub fn flat_index(&self, idx: [usize; MAX_DIM]) -> usize {
        match self.dim {
            1 => idx[0],
            _ => idx[0] * self.n + idx[1],
        }
    }

    /// Center of cell `k`, `(idx + 1/2) h` per axis; unused axes are zero.
    pub fn cell_center<T: Real>(&self, k: usize) -> [T; MAX_DIM] {
        let idx = self.multi_index(k);
        let h = self.spacing::<T>();
        let mut c = [T::zero(); MAX_DIM];
        for (axis, ci) in c.iter_mut().enumerate().take(self.dim) {
            *ci = (T::from_usize_lossy(idx[axis]) + T::lit(0.5)) * h;
        }
        c
    }

    /// Neighbor of cell `k` one step along `axis`, wrapping around the torus.
    #[inline]
    pub fn neighbor(&self, k: usize, axis: usize, forward: bool) -> usize {
        let mut idx = self.multi_index(k);
        idx[axis] = if forward {
            (idx[axis] + 1) % self.n
        } else {
            (idx[axis] + self.n - 1) % self.n
        };
        self.flat_index(idx)
    }

    /// Cell containing the point `x` (coordinates taken modulo 1).
    pub fn locate(&self, x: &[f64]) -> usize {
        let mut idx = [0usize; MAX_DIM];
        for axis in 0..self.dim {
            let u = x[axis].rem_euclid(1.0);
            idx[axis] = ((u * self.n as f64).floor() as usize).min(self.n - 1);
        }
        self.flat_index(idx)
    }

    pub fn ensure_same(&self, other: &TorusGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Tolerance on `|sum(mass) - 1|` for a valid density.
pub fn mass_tolerance<T: Real>(cells: usize) -> T {
    T::lit(1e-12).max(T::epsilon() * T::from_usize_lossy(4 * cells.max(1)))
}

/// Probability vector over the cells of a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Density<T> {
    grid: TorusGrid,
    mass: Vec<T>,
}

impl<T: Real> Density<T> {
    /// Wraps cell masses, checking nonnegativity and unit total mass.
    pub fn new(grid: TorusGrid, mass: Vec<T>) -> Result<Self> {
        if mass.len() != grid.cell_count() {
            return Err(Error::GridMismatch(format!(
                "{} masses for {} cells",
                mass.len(),
                grid.cell_count()
            )));
        }
        if mass.iter().any(|p| p.is_nan() || *p < T::zero()) {
            return Err(Error::DegenerateDensity("negative or NaN mass".into()));
        }
        let total = compensated_sum(mass.iter().copied());
        if (total - T::one()).abs() > mass_tolerance::<T>(mass.len()) {
            return Err(Error::DegenerateDensity(format!("total mass {total} != 1")));
        }
        Ok(Self { grid, mass })
    }

    pub fn uniform(grid: TorusGrid) -> Self {
        Self {
            grid,
            mass: vec![grid.cell_volume::<T>(); grid.cell_count()],
        }
    }

    pub fn point_mass(grid: TorusGrid, cell: usize) -> Self {
        let mut mass = vec![T::zero(); grid.cell_count()];
        mass[cell] = T::one();
        Self { grid, mass }
    }

    /// Normalizes a nonnegative vector. Negative entries above `-1e-13` are
    /// treated as round-off and clamped to zero.
    pub fn normalize(raw: Vec<T>, grid: TorusGrid) -> Result<Self> {
        if raw.len() != grid.cell_count() {
            return Err(Error::GridMismatch(format!(
                "{} entries for {} cells",
                raw.len(),
                grid.cell_count()
            )));
        }
        let clamp = T::lit(1e-13);
        let mut raw = raw;
        for v in raw.iter_mut() {
            if v.is_nan() || v.is_infinite() {
                return Err(Error::DegenerateDensity("non-finite entry".into()));
            }
            if *v < T::zero() {
                if *v >= -clamp {
                    *v = T::zero();
                } else {
                    return Err(Error::DegenerateDensity(format!("negative entry {v}")));
                }
            }
        }
        let total = compensated_sum(raw.iter().copied());
        if total <= T::zero() {
            return Err(Error::DegenerateDensity("all-zero input".into()));
        }
        for v in raw.iter_mut() {
            *v /= total;
        }
        Ok(Self { grid, mass: raw })
    }

    /// Density proportional to `exp(concentration * sum_axes cos(2 pi (x - center)))`.
    pub fn von_mises(grid: TorusGrid, center: &[f64], concentration: f64) -> Result<Self> {
        let raw = (0..grid.cell_count())
            .map(|k| {
                let c = grid.cell_center::<f64>(k);
                let s: f64 = (0..grid.dim())
                    .map(|a| (2.0 * std::f64::consts::PI * (c[a] - center[a])).cos())
                    .sum();
                T::lit((concentration * (s - grid.dim() as f64)).exp())
            })
            .collect();
        Self::normalize(raw, grid)
    }

    /// Strictly positive random density with log-masses `spread * N(0,1)`.
    pub fn random_positive<R: Rng + ?Sized>(grid: TorusGrid, rng: &mut R, spread: f64) -> Self {
        let raw = (0..grid.cell_count())
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                T::lit((spread * z).exp())
            })
            .collect();
        Self::normalize(raw, grid).expect("positive weights")
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn mass(&self) -> &[T] {
        &self.mass
    }

    pub fn total_mass(&self) -> T {
        compensated_sum(self.mass.iter().copied())
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.mass.iter().all(|p| *p > T::zero())
    }

    /// `sum_k A_k p_k`.
    pub fn integrate(&self, field: &PotentialField<T>) -> Result<T> {
        self.grid.ensure_same(field.grid())?;
        Ok(compensated_sum(
            self.mass.iter().zip(field.values()).map(|(p, a)| *p * *a),
        ))
    }

    /// Entropy relative to Lebesgue measure on the unit torus, `sum p ln(p / vol)`.
    pub fn entropy(&self) -> T {
        let vol = self.grid.cell_volume::<T>();
        compensated_sum(
            self.mass
                .iter()
                .filter(|p| **p > T::zero())
                .map(|p| *p * (*p / vol).ln()),
        )
    }

    /// Convex combination `(1 - w) self + w other`.
    pub fn mix(&self, other: &Density<T>, w: T) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        let keep = T::one() - w;
        let mass = self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| keep * *a + w * *b)
            .collect();
        Ok(Self {
            grid: self.grid,
            mass,
        })
    }

    /// Replaces the masses; used by integrators that maintain the invariants themselves.
    pub(crate) fn from_raw_parts(grid: TorusGrid, mass: Vec<T>) -> Self {
        debug_assert_eq!(mass.len(), grid.cell_count());
        Self { grid, mass }
    }

    pub fn cast<U: Real>(&self) -> Density<U> {
        Density {
            grid: self.grid,
            mass: self.mass.iter().map(|p| U::lit(p.to_f64_lossy())).collect(),
        }
    }
}

/// Real-valued field over the cells of a grid, e.g. an effective potential.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField<T> {
    grid: TorusGrid,
    value: Vec<T>,
}

impl<T: Real> PotentialField<T> {
    pub fn new(grid: TorusGrid, value: Vec<T>) -> Result<Self> {
        if value.len() != grid.cell_count() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} cells",
                value.len(),
                grid.cell_count()
            )));
        }
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("potential has non-finite entries".into()));
        }
        Ok(Self { grid, value })
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            grid,
            value: vec![T::zero(); grid.cell_count()],
        }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn([T; MAX_DIM]) -> T) -> Self {
        let value = (0..grid.cell_count())
            .map(|k| f(grid.cell_center(k)))
            .collect();
        Self { grid, value }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.value
    }

    pub fn min(&self) -> T {
        self.value.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.value.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn sup_norm(&self) -> T {
        self.value.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn shifted(&self, c: T) -> Self {
        Self {
            grid: self.grid,
            value: self.value.iter().map(|v| *v + c).collect(),
        }
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            grid: self.grid,
            value: self.value.iter().map(|v| *v * c).collect(),
        }
    }

    pub(crate) fn from_raw_parts(grid: TorusGrid, value: Vec<T>) -> Self {
        Self { grid, value }
    }
}

pub fn uniform_density<T: Real>(grid: TorusGrid) -> Density<T> {
    Density::uniform(grid)
}

pub fn normalize<T: Real>(raw: Vec<T>, grid: TorusGrid) -> Result<Density<T>> {
    Density::normalize(raw, grid)
}

/// Gibbs measure `p_k ∝ vol_k exp(-A_k / tau)`.
///
/// The minimum of `A` is subtracted before exponentiating, so the result is
/// invariant under constant shifts of `A` and does not overflow as `tau -> 0`.
pub fn gibbs_from_potential<T: Real>(field: &PotentialField<T>, tau: T) -> Result<Density<T>> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(Error::InvalidTemperature(tau.to_f64_lossy()));
    }
    let min = field.min();
    let weights: Vec<T> = field
        .values()
        .iter()
        .map(|a| (-(*a - min) / tau).exp())
        .collect();
    Density::normalize(weights, field.grid)
}

/// `-tau ln sum_k vol_k exp(-A_k / tau)`: the minimum over densities of
/// `<A, mu> + tau * entropy(mu)`.
pub fn free_energy<T: Real>(field: &PotentialField<T>, tau: T) -> Result<T> {
    if !(tau > T::zero()) {
        return Err(Error::InvalidTemperature(tau.to_f64_lossy()));
    }
    let min = field.min();
    let vol = field.grid.cell_volume::<T>();
    let z = compensated_sum(field.values().iter().map(|a| vol * (-(*a - min) / tau).exp()));
    Ok(min - tau * z.ln())
}
