//! Shift-averaged worst-case error and fast component-by-component search.
//!
//! With Gaussian density `ρ` and boundary weight `ν ≡ 1`, the shift-invariant
//! kernel of the unanchored space reduces to the one-dimensional function
//! `θ(x) = 1/√π − 2 ρ(Φ⁻¹(x))` on `[0,1)` (with `θ(0) = 1/√π`), and
//!
//! ```text
//! e²(z) = Σ_{∅≠u} γ_u (1/N) Σ_{k=0}^{N-1} Π_{j∈u} θ(frac(k z_j / N)).
//! ```
//!
//! POD weights collapse the subset sum to a recursion over the order `ℓ`.

use rayon::prelude::*;

use super::{gcd, inverse_normal_cdf, normal_pdf, LatticeError, WeightSchedule};
use crate::scalar::{pairwise_sum, Real};

/// Relative tolerance under which two CBC candidates count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// `θ(x) = 1/√π − 2 ρ(Φ⁻¹(x))` for `x ∈ [0, 1)`, with `θ(0) = 1/√π`.
pub fn shift_averaged_kernel<T: Real>(x: T) -> Result<T, LatticeError> {
    let base = T::one() / T::PI().sqrt();
    if x == T::zero() {
        return Ok(base);
    }
    if !(x > T::zero() && x < T::one()) {
        return Err(LatticeError::Domain {
            value: x.to_f64_lossy(),
        });
    }
    let t = inverse_normal_cdf(x)?;
    Ok(base - T::lit(2.0) * normal_pdf(t))
}

fn kernel_table<T: Real>(n: u64) -> Result<Vec<T>, LatticeError> {
    let nf = T::lit(n as f64);
    (0..n)
        .map(|m| shift_averaged_kernel(T::lit(m as f64) / nf))
        .collect()
}

fn validate(n: u64, dprime: usize, weights: &WeightSchedule<impl Real>) -> Result<(), LatticeError> {
    if n < 2 {
        return Err(LatticeError::InvalidPointCount(n));
    }
    if dprime == 0 {
        return Err(LatticeError::InvalidDimension);
    }
    weights.check_covers(dprime)
}

#[inline]
fn mulmod(k: u64, z: u64, n: u64) -> usize {
    ((k as u128 * z as u128) % n as u128) as usize
}

/// Scaled order sums `P̂_ℓ(k)`, `ℓ = 0..=s`, stored `ℓ`-major.
struct OrderSums<T> {
    n: usize,
    levels: Vec<Vec<T>>,
}

impl<T: Real> OrderSums<T> {
    fn new(n: usize) -> Self {
        Self {
            n,
            levels: vec![vec![T::one(); n]],
        }
    }

    /// Appends coordinate `s` (0-based) with multiplier `z`.
    fn push(&mut self, theta: &[T], z: u64, c: T, weights: &WeightSchedule<T>) {
        let s = self.levels.len() - 1;
        let n = self.n as u64;
        self.levels.push(vec![T::zero(); self.n]);
        for l in (1..=s + 1).rev() {
            let ratio = weights.order_ratio(l) * c;
            let (lo, hi) = self.levels.split_at_mut(l);
            let prev = &lo[l - 1];
            for (k, cur) in hi[0].iter_mut().enumerate() {
                *cur = *cur + ratio * theta[mulmod(k as u64, z, n)] * prev[k];
            }
        }
    }

    fn error_squared(&self) -> T {
        let per_k: Vec<T> = (0..self.n)
            .map(|k| self.levels[1..].iter().fold(T::zero(), |acc, lv| acc + lv[k]))
            .collect();
        pairwise_sum(&per_k) / T::from_usize_lossy(self.n)
    }

    /// `q(k) = Σ_{ℓ≥1} (Γ_ℓ/Γ_{ℓ-1}) P̂_{ℓ-1}(k)` for the next coordinate.
    fn next_coefficients(&self, weights: &WeightSchedule<T>) -> Vec<T> {
        let mut q = vec![T::zero(); self.n];
        for (l, level) in self.levels.iter().enumerate() {
            let ratio = weights.order_ratio(l + 1);
            for (qk, &p) in q.iter_mut().zip(level) {
                *qk = *qk + ratio * p;
            }
        }
        q
    }
}

/// Shift-averaged worst-case error `e(z)` of the rank-1 lattice rule with
/// generating vector `z` and `n` points.
pub fn worst_case_error<T: Real>(
    z: &[u64],
    n: u64,
    weights: &WeightSchedule<T>,
) -> Result<T, LatticeError> {
    validate(n, z.len(), weights)?;
    for (component, &zj) in z.iter().enumerate() {
        if zj == 0 || zj >= n || gcd(zj, n) != 1 {
            return Err(LatticeError::NotAUnit { component, z: zj, n });
        }
    }
    let theta = kernel_table::<T>(n)?;
    let mut sums = OrderSums::new(n as usize);
    for (s, &zj) in z.iter().enumerate() {
        sums.push(&theta, zj, weights.factors()[s], weights);
    }
    Ok(sums.error_squared().max(T::zero()).sqrt())
}

/// Fast component-by-component construction of a generating vector.
///
/// At each step every unit `1 ≤ z ≤ N/2` is scored in parallel; `z` and
/// `N − z` score identically because `θ` is symmetric. The smallest candidate
/// within a relative tolerance of the minimum wins, so the result does not
/// depend on thread scheduling or last-bit rounding.
pub fn cbc_construct<T: Real>(
    n: u64,
    dprime: usize,
    weights: &WeightSchedule<T>,
) -> Result<Vec<u64>, LatticeError> {
    validate(n, dprime, weights)?;
    let theta = kernel_table::<T>(n)?;
    let candidates: Vec<u64> = (1..=n / 2).filter(|&c| gcd(c, n) == 1).collect();
    let theta_max = theta
        .iter()
        .fold(T::zero(), |acc, t| acc.max(t.abs()));
    let mut sums = OrderSums::new(n as usize);
    let mut z = Vec::with_capacity(dprime);
    for s in 0..dprime {
        let q = sums.next_coefficients(weights);
        let scores: Vec<T> = candidates
            .par_iter()
            .map(|&c| {
                let mut acc = T::zero();
                for (k, &qk) in q.iter().enumerate() {
                    acc = acc + theta[mulmod(k as u64, c, n)] * qk;
                }
                acc
            })
            .collect();
        let best = scores
            .iter()
            .copied()
            .fold(T::infinity(), |a, b| a.min(b));
        let scale = q.iter().fold(T::zero(), |acc, v| acc + v.abs()) * theta_max;
        let tol = T::lit(TIE_TOLERANCE) * scale;
        let pick = candidates
            .iter()
            .zip(&scores)
            .find(|(_, &sc)| sc <= best + tol)
            .map(|(&c, _)| c)
            .unwrap_or(1);
        sums.push(&theta, pick, weights.factors()[s], weights);
        z.push(pick);
    }
    Ok(z)
}
