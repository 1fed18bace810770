//! Randomly shifted rank-1 lattice rules mapped to Gaussian samples.
//!
//! The generating vector comes from a component-by-component search that
//! minimises the shift-averaged worst-case error in the weighted unanchored
//! Sobolev space over `ℝ^{d'}` with standard normal density, boundary weight
//! `ν ≡ 1` and product-and-order-dependent (POD) weights
//! `γ_u = Γ_{|u|} Π_{j∈u} c_j`.

mod cbc;
mod normal;

pub use cbc::{cbc_construct, shift_averaged_kernel, worst_case_error};
pub use normal::{clamp_unit, erfc, inverse_normal_cdf, normal_cdf, normal_pdf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::io::fmt17;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("point count must be at least 2, got {0}")]
    InvalidPointCount(u64),
    #[error("lattice dimension must be at least 1")]
    InvalidDimension,
    #[error("weight {index} must be positive and finite, got {value}")]
    InvalidWeight { index: usize, value: f64 },
    #[error("weight schedule covers {available} dimensions, {needed} required")]
    WeightsTooShort { needed: usize, available: usize },
    #[error("generating vector component {component} = {z} is not a unit modulo {n}")]
    NotAUnit { component: usize, z: u64, n: u64 },
    #[error("shift component {component} = {value} outside [0, 1)")]
    ShiftOutOfRange { component: usize, value: f64 },
    #[error("shift has {got} components, generating vector has {expected}")]
    ShiftLength { expected: usize, got: usize },
    #[error("probability {value} outside (0, 1)")]
    Domain { value: f64 },
    #[error("sample {index} has a non-finite coordinate")]
    NonFinite { index: usize },
}

/// Order-dependent part `Γ_ℓ` of POD weights.
#[derive(Debug, Clone, PartialEq)]
pub enum OrderWeights {
    /// `Γ_ℓ = (ℓ!)²`.
    FactorialSquared,
    /// `Γ_ℓ = 1` (pure product weights).
    Unit,
    /// Explicit `Γ_1, Γ_2, …`; `Γ_0 = 1` implicitly.
    Table(Vec<f64>),
}

/// POD weight schedule `γ_u = Γ_{|u|} Π_{j∈u} c_j`, `γ_∅ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSchedule<T> {
    order: OrderWeights,
    factors: Vec<T>,
}

impl<T: Real> WeightSchedule<T> {
    pub fn new(order: OrderWeights, factors: Vec<T>) -> Result<Self, LatticeError> {
        for (index, &c) in factors.iter().enumerate() {
            if !(c > T::zero() && c.is_finite()) {
                return Err(LatticeError::InvalidWeight {
                    index,
                    value: c.to_f64_lossy(),
                });
            }
        }
        if let OrderWeights::Table(g) = &order {
            for (index, &v) in g.iter().enumerate() {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(LatticeError::InvalidWeight { index, value: v });
                }
            }
        }
        Ok(Self { order, factors })
    }

    /// `Γ_ℓ = (ℓ!)²`, `c_j = 0.01 / j³` for `j = 1..=dprime`.
    pub fn pod_default(dprime: usize) -> Self {
        let factors = (1..=dprime)
            .map(|j| T::lit(0.01) / T::from_usize_lossy(j * j * j))
            .collect();
        Self {
            order: OrderWeights::FactorialSquared,
            factors,
        }
    }

    pub fn order(&self) -> &OrderWeights {
        &self.order
    }

    pub fn factors(&self) -> &[T] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Ratio `Γ_ℓ / Γ_{ℓ-1}` for `ℓ ≥ 1`; working with ratios keeps the
    /// recursion finite where `(ℓ!)²` itself overflows.
    pub fn order_ratio(&self, l: usize) -> T {
        debug_assert!(l >= 1);
        match &self.order {
            OrderWeights::FactorialSquared => T::from_usize_lossy(l * l),
            OrderWeights::Unit => T::one(),
            OrderWeights::Table(g) => {
                let cur = g.get(l - 1).copied().unwrap_or(f64::INFINITY);
                let prev = if l == 1 { 1.0 } else { g[l - 2] };
                T::lit(cur / prev)
            }
        }
    }

    /// Weight of a subset of 0-based coordinate indices.
    pub fn gamma(&self, subset: &[usize]) -> T {
        let mut g = T::one();
        for (l, &j) in subset.iter().enumerate() {
            g = g * self.order_ratio(l + 1) * self.factors[j];
        }
        g
    }

    fn check_covers(&self, dprime: usize) -> Result<(), LatticeError> {
        if self.factors.len() < dprime {
            return Err(LatticeError::WeightsTooShort {
                needed: dprime,
                available: self.factors.len(),
            });
        }
        if let OrderWeights::Table(g) = &self.order {
            if g.len() < dprime {
                return Err(LatticeError::WeightsTooShort {
                    needed: dprime,
                    available: g.len(),
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Row-major set of points in `d` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet<T> {
    n_points: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> PointSet<T> {
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == dim), "ragged point set");
        Self {
            n_points: rows.len(),
            dim,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.data.chunks(self.dim.max(1)).take(self.n_points)
    }

    /// One point per line, comma separated, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| fmt17(v.to_f64_lossy())).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// A randomly shifted rank-1 lattice rule.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeRule<T> {
    z: Vec<u64>,
    n: u64,
    shift: Vec<T>,
    seed: Option<u64>,
}

impl<T: Real> LatticeRule<T> {
    pub fn new(z: Vec<u64>, n: u64, shift: Vec<T>) -> Result<Self, LatticeError> {
        if n < 2 {
            return Err(LatticeError::InvalidPointCount(n));
        }
        if z.is_empty() {
            return Err(LatticeError::InvalidDimension);
        }
        if shift.len() != z.len() {
            return Err(LatticeError::ShiftLength {
                expected: z.len(),
                got: shift.len(),
            });
        }
        for (component, &zj) in z.iter().enumerate() {
            if zj == 0 || zj >= n || gcd(zj, n) != 1 {
                return Err(LatticeError::NotAUnit { component, z: zj, n });
            }
        }
        for (component, &d) in shift.iter().enumerate() {
            if !(d >= T::zero() && d < T::one()) {
                return Err(LatticeError::ShiftOutOfRange {
                    component,
                    value: d.to_f64_lossy(),
                });
            }
        }
        Ok(Self { z, n, shift, seed: None })
    }

    /// Draws the shift `Δ ~ U[0,1)^{d'}` from ChaCha20 seeded with `seed`.
    pub fn with_seeded_shift(z: Vec<u64>, n: u64, seed: u64) -> Result<Self, LatticeError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let shift = (0..z.len()).map(|_| T::lit(rng.gen::<f64>())).collect();
        let mut rule = Self::new(z, n, shift)?;
        rule.seed = Some(seed);
        Ok(rule)
    }

    pub fn generating_vector(&self) -> &[u64] {
        &self.z
    }

    pub fn n_points(&self) -> u64 {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn shift(&self) -> &[T] {
        &self.shift
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Point `i` (1-based, `i = 1..=N`): `frac(i·z/N + Δ)`.
    pub fn point(&self, i: u64, out: &mut [T]) {
        let nf = T::lit(self.n as f64);
        for ((o, &zj), &dj) in out.iter_mut().zip(&self.z).zip(&self.shift) {
            let m = ((i as u128 * zj as u128) % self.n as u128) as u64;
            let mut v = T::lit(m as f64) / nf + dj;
            if v >= T::one() {
                v = v - T::one();
            }
            // rounding can land exactly on 1 after a shift close to 1
            if v >= T::one() {
                v = T::zero();
            }
            *o = v;
        }
    }

    /// All `N` shifted lattice points in `[0,1)^{d'}`.
    pub fn shifted_points(&self) -> PointSet<T> {
        let dim = self.dim();
        let n = self.n as usize;
        let mut data = vec![T::zero(); n * dim];
        for (i, row) in data.chunks_mut(dim).enumerate() {
            self.point(i as u64 + 1, row);
        }
        PointSet { n_points: n, dim, data }
    }
}

/// Componentwise `Φ⁻¹` of a unit-cube point set.
pub fn gaussian_map<T: Real>(points: &PointSet<T>) -> Result<PointSet<T>, LatticeError> {
    let data = points
        .data
        .iter()
        .map(|&u| inverse_normal_cdf(u))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PointSet {
        n_points: points.n_points,
        dim: points.dim,
        data,
    })
}

/// Gaussian sample points `y_i ∈ ℝ^{d'}` with equal weights `1/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSampleSet<T> {
    points: PointSet<T>,
    source: Option<LatticeRule<T>>,
}

impl<T: Real> GaussianSampleSet<T> {
    pub fn from_rule(rule: &LatticeRule<T>) -> Result<Self, LatticeError> {
        let points = gaussian_map(&rule.shifted_points())?;
        Ok(Self {
            points,
            source: Some(rule.clone()),
        })
    }

    /// Wraps explicit sample points (no lattice provenance).
    pub fn from_points(points: PointSet<T>) -> Result<Self, LatticeError> {
        for (index, row) in points.rows().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(LatticeError::NonFinite { index });
            }
        }
        Ok(Self { points, source: None })
    }

    pub fn points(&self) -> &PointSet<T> {
        &self.points
    }

    pub fn source(&self) -> Option<&LatticeRule<T>> {
        self.source.as_ref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn sample(&self, i: usize) -> &[T] {
        self.points.row(i)
    }
}
