//! Discrete Karhunen-Loève eigenpairs, stochastic coefficients and
//! truncated synthesis.
//!
//! The generalized problem `(1/N) G Gᵀ c = λ M c` is solved in factored
//! form: with `M = L Lᵀ` and `B = L⁻¹ G / √N`, the nonzero eigenvalues are the
//! squared singular values of `B`. The smaller of `BᵀB` (`N × N`) and `BBᵀ`
//! (`Q × Q`) is decomposed, and `c = L⁻ᵀ u` for each left singular vector `u`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::covariance_op::{field_load_vector, SampleMatrix};
use crate::fem1d::{FeSpace, FemError};
use crate::field_models::{FieldError, FieldModel};
use crate::linalg::{sym_eigen, LinalgError};
use crate::scalar::{dot, Real};

/// Eigenvalues below this fraction of `λ₁` count as zero.
pub const RANK_THRESHOLD: f64 = 1e-12;

/// Guard on `|log κ|` before exponentiation.
pub const LOG_KAPPA_GUARD: f64 = 50.0;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("truncation M = {requested} must lie in 1..={max}")]
    InvalidTruncation { requested: usize, max: usize },
    #[error("truncation M = {requested} exceeds the numerical rank; usable rank is {usable}")]
    TruncationRank { requested: usize, usable: usize },
    #[error("mode {mode} is not available in an expansion with {available} modes")]
    ModeOutOfRange { mode: usize, available: usize },
    #[error("sample matrix has {got} rows, space has {expected} dofs")]
    RowMismatch { expected: usize, got: usize },
    #[error("coefficient vector has length {got}, expected {expected}")]
    PsiLength { expected: usize, got: usize },
}

/// Leading discrete KL eigenpairs together with the full discrete spectrum.
#[derive(Debug, Clone)]
pub struct DiscreteKl<T> {
    values: Vec<T>,
    vectors: Vec<Vec<T>>,
    spectrum: Vec<T>,
    rank: usize,
    space: FeSpace<T>,
    model: FieldModel,
    n_samples: usize,
    construction_seed: Option<u64>,
}

impl<T: Real> DiscreteKl<T> {
    /// Number of retained modes `M`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.values
    }

    /// Mass-orthonormal coefficient vector of mode `n` (0-based).
    pub fn eigenvector(&self, n: usize) -> &[T] {
        &self.vectors[n]
    }

    /// All `min(Q, N)` discrete eigenvalues, nonincreasing, negatives
    /// rounded to zero.
    pub fn spectrum(&self) -> &[T] {
        &self.spectrum
    }

    /// Number of eigenvalues above `RANK_THRESHOLD · λ₁`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn space(&self) -> &FeSpace<T> {
        &self.space
    }

    pub fn model(&self) -> &FieldModel {
        &self.model
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn construction_seed(&self) -> Option<u64> {
        self.construction_seed
    }

    pub fn with_construction_seed(mut self, seed: Option<u64>) -> Self {
        self.construction_seed = seed;
        self
    }

    /// `ψ̃_n(y) = λ_n^{-1/2} ∫ log κ(y, x) φ_n(x) dx` for mode `n` (0-based).
    pub fn psi_tilde(&self, n: usize, y: &[T]) -> Result<T, SpectralError> {
        if n >= self.len() {
            return Err(SpectralError::ModeOutOfRange {
                mode: n,
                available: self.len(),
            });
        }
        let b = field_load_vector(&self.space, &self.model, y)?;
        Ok(dot(&self.vectors[n], &b) / self.values[n].sqrt())
    }

    /// `ψ̃_n(y)` for all retained modes from a single load vector.
    pub fn psi_tilde_all(&self, y: &[T]) -> Result<Vec<T>, SpectralError> {
        let b = field_load_vector(&self.space, &self.model, y)?;
        Ok(self
            .vectors
            .iter()
            .zip(&self.values)
            .map(|(c, &l)| dot(c, &b) / l.sqrt())
            .collect())
    }
}

/// Solves for the `m` dominant eigenpairs of `(1/N) G Gᵀ c = λ M c`.
pub fn solve_kl_eigen<T: Real>(
    space: &FeSpace<T>,
    model: &FieldModel,
    g: &SampleMatrix<T>,
    m: usize,
) -> Result<DiscreteKl<T>, SpectralError> {
    solve_inner(space, model, g, m, false)
}

/// Like [`solve_kl_eigen`] but keeps `min(m, rank)` modes instead of failing
/// when `m` exceeds the numerical rank.
pub fn solve_kl_eigen_up_to<T: Real>(
    space: &FeSpace<T>,
    model: &FieldModel,
    g: &SampleMatrix<T>,
    m: usize,
) -> Result<DiscreteKl<T>, SpectralError> {
    solve_inner(space, model, g, m, true)
}

fn solve_inner<T: Real>(
    space: &FeSpace<T>,
    model: &FieldModel,
    g: &SampleMatrix<T>,
    m: usize,
    clamp: bool,
) -> Result<DiscreteKl<T>, SpectralError> {
    let q = space.ndofs();
    if g.rows() != q {
        return Err(SpectralError::RowMismatch {
            expected: q,
            got: g.rows(),
        });
    }
    let n = g.cols();
    let max = q.min(n);
    if m == 0 || m > max {
        return Err(SpectralError::InvalidTruncation { requested: m, max });
    }
    let mass = space.mass_matrix();
    let chol = mass.cholesky().map_err(FemError::from)?;
    let scale = T::from_usize_lossy(n).sqrt().recip();
    let b_cols: Vec<Vec<T>> = g
        .columns()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|col| {
            let mut v: Vec<T> = col.iter().map(|&x| x * scale).collect();
            chol.forward(&mut v);
            v
        })
        .collect();

    let (raw_values, left_vectors) = if n <= q {
        let gram = symmetric_gram(&b_cols);
        let eig = sym_eigen(&gram, n, true)?;
        let lambda1 = eig.values[0].max(T::zero());
        let mut us = Vec::new();
        for j in 0..m {
            let sigma2 = eig.values[j];
            if !(sigma2 > T::lit(RANK_THRESHOLD) * lambda1) {
                break;
            }
            let v = eig.vector(j);
            let sigma = sigma2.sqrt();
            let mut u = vec![T::zero(); q];
            for (col, &vn) in b_cols.iter().zip(v) {
                for (ui, &bi) in u.iter_mut().zip(col) {
                    *ui = *ui + bi * vn;
                }
            }
            u.iter_mut().for_each(|x| *x = *x / sigma);
            us.push(u);
        }
        (eig.values, us)
    } else {
        let rows = transpose(&b_cols, q);
        let gram = symmetric_gram(&rows);
        let eig = sym_eigen(&gram, q, true)?;
        let us = (0..m).map(|j| eig.vector(j).to_vec()).collect();
        (eig.values, us)
    };

    let spectrum: Vec<T> = raw_values.iter().map(|&v| v.max(T::zero())).collect();
    let lambda1 = spectrum[0];
    let rank = spectrum
        .iter()
        .take_while(|&&v| v > T::lit(RANK_THRESHOLD) * lambda1 && v > T::zero())
        .count();
    if m > rank && (!clamp || rank == 0) {
        return Err(SpectralError::TruncationRank { requested: m, usable: rank });
    }
    let m = m.min(rank);

    let mut vectors = Vec::with_capacity(m);
    for mut u in left_vectors.into_iter().take(m) {
        chol.backward(&mut u);
        let norm = dot(&u, &mass.matvec(&u)).sqrt();
        u.iter_mut().for_each(|x| *x = *x / norm);
        apply_sign_convention(&mut u);
        vectors.push(u);
    }
    Ok(DiscreteKl {
        values: spectrum[..m].to_vec(),
        vectors,
        spectrum,
        rank,
        space: space.clone(),
        model: model.clone(),
        n_samples: n,
        construction_seed: None,
    })
}

/// Row-major `W Wᵀ` for the rows `w_i`.
fn symmetric_gram<T: Real>(rows: &[Vec<T>]) -> Vec<T> {
    let n = rows.len();
    let lower: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| (0..=i).map(|j| dot(&rows[i], &rows[j])).collect())
        .collect();
    let mut a = vec![T::zero(); n * n];
    for (i, row) in lower.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    a
}

fn transpose<T: Real>(cols: &[Vec<T>], rows: usize) -> Vec<Vec<T>> {
    (0..rows)
        .map(|i| cols.iter().map(|c| c[i]).collect())
        .collect()
}

/// How the stochastic coefficients of a realization are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PsiMode {
    /// `ψ̃_n(y)`, the projection of the sampled field onto mode `n`.
    #[default]
    Projected,
    /// i.i.d. standard normals, independent of `y`.
    Iid { seed: u64 },
}

impl<'a, T: Real> KlRealization<'a, T> {
    /// Realization for evaluation sample `index` at `y` under `mode`.
    pub fn with_mode(kl: &'a DiscreteKl<T>, y: &[T], index: usize, mode: PsiMode) -> Result<Self, SpectralError> {
        match mode {
            PsiMode::Projected => Self::projected(kl, y),
            PsiMode::Iid { seed } => Ok(Self::iid_stream(kl, seed, index as u64)),
        }
    }
}

/// Flips `v` so its entry of largest magnitude is positive; the lowest index
/// wins ties.
pub fn apply_sign_convention<T: Real>(v: &mut [T]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < T::zero()) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Stochastic coefficients attached to an expansion.
#[derive(Debug, Clone)]
pub struct KlRealization<'a, T> {
    kl: &'a DiscreteKl<T>,
    psi: Vec<T>,
    /// `Σ_n √λ_n ψ_n c_n`, the FE coefficients of the synthesized field.
    combined: Vec<T>,
}

impl<'a, T: Real> KlRealization<'a, T> {
    /// Uses the given coefficients; `psi.len()` may not exceed `M`, shorter
    /// vectors truncate the expansion.
    pub fn new(kl: &'a DiscreteKl<T>, psi: Vec<T>) -> Result<Self, SpectralError> {
        if psi.len() > kl.len() {
            return Err(SpectralError::PsiLength {
                expected: kl.len(),
                got: psi.len(),
            });
        }
        let mut combined = vec![T::zero(); kl.space.ndofs()];
        for ((c, &l), &p) in kl.vectors.iter().zip(&kl.values).zip(&psi) {
            let a = l.sqrt() * p;
            for (w, &ci) in combined.iter_mut().zip(c) {
                *w = *w + a * ci;
            }
        }
        Ok(Self { kl, psi, combined })
    }

    /// i.i.d. standard normal coefficients.
    pub fn iid<R: Rng>(kl: &'a DiscreteKl<T>, rng: &mut R) -> Self {
        let psi = (0..kl.len())
            .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Self::new(kl, psi).expect("length matches")
    }

    /// i.i.d. coefficients from ChaCha20 seeded with `seed`.
    pub fn iid_seeded(kl: &'a DiscreteKl<T>, seed: u64) -> Self {
        Self::iid(kl, &mut ChaCha20Rng::seed_from_u64(seed))
    }

    /// i.i.d. coefficients for evaluation sample `index`: ChaCha20 seeded
    /// with `seed`, stream `index`, so samples are independent of scheduling.
    pub fn iid_stream(kl: &'a DiscreteKl<T>, seed: u64, index: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(index);
        Self::iid(kl, &mut rng)
    }

    /// Projected coefficients `ψ̃_n(y)`.
    pub fn projected(kl: &'a DiscreteKl<T>, y: &[T]) -> Result<Self, SpectralError> {
        let psi = kl.psi_tilde_all(y)?;
        Self::new(kl, psi)
    }

    /// Keeps the first `m` modes.
    pub fn truncate(&self, m: usize) -> Self {
        let m = m.min(self.psi.len());
        Self::new(self.kl, self.psi[..m].to_vec()).expect("shorter than M")
    }

    pub fn expansion(&self) -> &DiscreteKl<T> {
        self.kl
    }

    pub fn psi_values(&self) -> &[T] {
        &self.psi
    }

    pub fn coefficients(&self) -> &[T] {
        &self.combined
    }

    /// `Σ_{n≤M} √λ_n φ_n(x) ψ_n`.
    pub fn synthesize_log_field(&self, x: T) -> Result<T, SpectralError> {
        Ok(self.kl.space.eval_fe(&self.combined, x)?)
    }

    /// `exp` of the synthesized log-field with `|log κ| ≤ 50`.
    pub fn realize_kappa(&self, xs: &[T]) -> Result<Vec<T>, SpectralError> {
        xs.iter()
            .map(|&x| Ok(guarded_exp(self.synthesize_log_field(x)?)))
            .collect()
    }
}

/// `exp(clamp(v, −50, 50))`.
#[inline]
pub fn guarded_exp<T: Real>(v: T) -> T {
    let g = T::lit(LOG_KAPPA_GUARD);
    v.max(-g).min(g).exp()
}

/// Gap between two consecutive clusters of equal eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct GapEntry<T> {
    /// 1-based index of the last eigenvalue of the upper cluster.
    pub upper: usize,
    /// 1-based index of the first eigenvalue of the lower cluster.
    pub lower: usize,
    pub gap: T,
    /// Size of the upper cluster.
    pub multiplicity: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport<T> {
    pub threshold: T,
    pub entries: Vec<GapEntry<T>>,
}

impl<T: Real> GapReport<T> {
    pub fn flagged(&self) -> impl Iterator<Item = &GapEntry<T>> {
        self.entries.iter().filter(|e| e.flagged)
    }
}

/// Consecutive gaps between distinct eigenvalues. An entry is flagged when
/// the gap is below `10/N` or its upper cluster is a repeated eigenvalue.
/// Eigenvalues within `RANK_THRESHOLD · λ₁` of each other count as equal.
pub fn diagnose_spectral_gap<T: Real>(spectrum: &[T], n_samples: usize) -> GapReport<T> {
    let threshold = T::lit(10.0) / T::from_usize_lossy(n_samples.max(1));
    let tol = T::lit(RANK_THRESHOLD) * spectrum.first().map_or(T::zero(), |v| v.abs());
    let mut entries = Vec::new();
    let mut start = 0;
    for i in 1..=spectrum.len() {
        let boundary = i == spectrum.len() || spectrum[i - 1] - spectrum[i] > tol;
        if !boundary {
            continue;
        }
        if i < spectrum.len() {
            let gap = spectrum[i - 1] - spectrum[i];
            let multiplicity = i - start;
            entries.push(GapEntry {
                upper: i,
                lower: i + 1,
                gap,
                multiplicity,
                flagged: gap < threshold || multiplicity > 1,
            });
        }
        start = i;
    }
    GapReport { threshold, entries }
}
