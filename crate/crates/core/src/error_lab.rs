//! Truncation-error estimators, eigenvalue-decay fits and the parameter
//! balancer.

use rayon::prelude::*;
use thiserror::Error;

use crate::fem1d::{combine, FemError};
use crate::field_models::FieldError;
use crate::lattice_qmc::GaussianSampleSet;
use crate::quadrature::QuadRule;
use crate::scalar::{pairwise_sum, Real};
use crate::spectral::{DiscreteKl, KlRealization, PsiMode, SpectralError};

/// The error integral over `D` uses this many times the space's points per
/// element.
pub const FINE_QUADRATURE_FACTOR: usize = 4;

/// Guards `⌈·⌉` against values that land a few ulp above an integer.
const CEIL_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ErrorLabError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("truncation M = {requested} exceeds the {available} computed modes")]
    TruncationTooLarge { requested: usize, available: usize },
    #[error("grid resolution {resolution} is below 10·Q = {min}")]
    GridTooCoarse { resolution: usize, min: usize },
    #[error("eigenvalue {index} is not positive")]
    NonPositiveEigenvalue { index: usize },
    #[error("index range {first}..={last} is invalid for {len} eigenvalues")]
    InvalidRange { first: usize, last: usize, len: usize },
    #[error("accuracy must lie in (0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("smoothness must be positive, got {0}")]
    InvalidSmoothness(f64),
    #[error("physical dimension must be at least 1")]
    InvalidDimension,
}

/// Error estimates of one expansion against one evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub rmse_l2: f64,
    pub sup_norm_rms: f64,
    pub m: usize,
    pub n: usize,
    pub h: f64,
    pub k: usize,
    pub eval_seed: Option<u64>,
    pub eval_samples: usize,
    pub warnings: Vec<String>,
}

/// Root-mean-square `L²(Ω×D)` error of the projected expansion for every
/// truncation in `ms`; the stochastic coefficients are computed once per
/// evaluation point.
pub fn rmse_profile<T: Real>(
    kl: &DiscreteKl<T>,
    eval_set: &GaussianSampleSet<T>,
    ms: &[usize],
) -> Result<Vec<T>, ErrorLabError> {
    rmse_profile_with(kl, eval_set, ms, PsiMode::Projected)
}

/// [`rmse_profile`] with a choice of stochastic coefficients.
pub fn rmse_profile_with<T: Real>(
    kl: &DiscreteKl<T>,
    eval_set: &GaussianSampleSet<T>,
    ms: &[usize],
    mode: PsiMode,
) -> Result<Vec<T>, ErrorLabError> {
    if eval_set.is_empty() {
        return Err(ErrorLabError::EmptyEvalSet);
    }
    if let Some(&m) = ms.iter().find(|&&m| m > kl.len()) {
        return Err(ErrorLabError::TruncationTooLarge {
            requested: m,
            available: kl.len(),
        });
    }
    let space = kl.space();
    let model = kl.model();
    let fine = space.tabulate(QuadRule::gauss_legendre(space.quad().len() * FINE_QUADRATURE_FACTOR));
    let per_sample = (0..eval_set.len())
        .into_par_iter()
        .map(|i| {
            let y = eval_set.sample(i);
            model.eval_log_field(y, T::zero())?;
            let full = KlRealization::with_mode(kl, y, i, mode)?;
            let kinks = model.kinks(y);
            let errs = ms
                .iter()
                .map(|&m| {
                    let r = full.truncate(m);
                    let coeffs = r.coefficients();
                    let per_element: Vec<T> = (0..space.n_elements())
                        .map(|e| {
                            let local = space.element_coeffs(coeffs, e);
                            let mut acc = T::zero();
                            space.visit_element(e, &kinks, Some(&fine), |x, w, phi, _| {
                                let d = model.log_field_unchecked(y, x) - combine(local, phi);
                                acc = acc + w * d * d;
                            });
                            acc
                        })
                        .collect();
                    pairwise_sum(&per_element)
                })
                .collect::<Vec<T>>();
            Ok(errs)
        })
        .collect::<Result<Vec<Vec<T>>, ErrorLabError>>()?;
    let nf = T::from_usize_lossy(eval_set.len());
    Ok((0..ms.len())
        .map(|j| {
            let col: Vec<T> = per_sample.iter().map(|row| row[j]).collect();
            (pairwise_sum(&col) / nf).sqrt()
        })
        .collect())
}

/// `‖log κ − log κ_M‖_{L²(Ω×D)}` with all `M` modes of `kl`.
pub fn rmse_l2<T: Real>(kl: &DiscreteKl<T>, eval_set: &GaussianSampleSet<T>) -> Result<T, ErrorLabError> {
    Ok(rmse_profile(kl, eval_set, &[kl.len()])?[0])
}

/// Same as [`rmse_l2`] keeping only the first `m ≤ M` modes; `m = 0` gives
/// the norm of the field itself.
pub fn rmse_l2_truncated<T: Real>(
    kl: &DiscreteKl<T>,
    eval_set: &GaussianSampleSet<T>,
    m: usize,
) -> Result<T, ErrorLabError> {
    Ok(rmse_profile(kl, eval_set, &[m])?[0])
}

/// Root mean square over the evaluation set of `max_x |log κ − log κ_M|` on
/// the uniform grid `{i / grid_resolution}`.
pub fn sup_error_rms<T: Real>(
    kl: &DiscreteKl<T>,
    eval_set: &GaussianSampleSet<T>,
    grid_resolution: usize,
) -> Result<T, ErrorLabError> {
    sup_error_rms_truncated(kl, eval_set, grid_resolution, kl.len())
}

pub fn sup_error_rms_truncated<T: Real>(
    kl: &DiscreteKl<T>,
    eval_set: &GaussianSampleSet<T>,
    grid_resolution: usize,
    m: usize,
) -> Result<T, ErrorLabError> {
    if eval_set.is_empty() {
        return Err(ErrorLabError::EmptyEvalSet);
    }
    let min = 10 * kl.space().ndofs();
    if grid_resolution < min {
        return Err(ErrorLabError::GridTooCoarse {
            resolution: grid_resolution,
            min,
        });
    }
    if m > kl.len() {
        return Err(ErrorLabError::TruncationTooLarge {
            requested: m,
            available: kl.len(),
        });
    }
    let space = kl.space();
    let model = kl.model();
    let g = T::from_usize_lossy(grid_resolution);
    let per_sample = (0..eval_set.len())
        .into_par_iter()
        .map(|i| {
            let y = eval_set.sample(i);
            let r = KlRealization::projected(kl, y)?.truncate(m);
            let coeffs = r.coefficients();
            let mut worst = T::zero();
            for j in 0..=grid_resolution {
                let x = T::from_usize_lossy(j) / g;
                let d = model.eval_log_field(y, x)? - space.eval_fe(coeffs, x)?;
                worst = worst.max(d.abs());
            }
            Ok(worst * worst)
        })
        .collect::<Result<Vec<T>, ErrorLabError>>()?;
    Ok((pairwise_sum(&per_sample) / T::from_usize_lossy(eval_set.len())).sqrt())
}

/// Builds an [`ErrorReport`] for the first `m` modes of `kl`.
pub fn error_report<T: Real>(
    kl: &DiscreteKl<T>,
    eval_set: &GaussianSampleSet<T>,
    m: usize,
    grid_resolution: usize,
) -> Result<ErrorReport, ErrorLabError> {
    let rmse = rmse_l2_truncated(kl, eval_set, m)?;
    let sup = sup_error_rms_truncated(kl, eval_set, grid_resolution, m)?;
    let eval_seed = eval_set.source().and_then(|r| r.seed());
    let mut warnings = Vec::new();
    if eval_seed.is_some() && eval_seed == kl.construction_seed() {
        warnings.push("evaluation set shares the construction shift seed".to_string());
    }
    Ok(ErrorReport {
        rmse_l2: rmse.to_f64_lossy(),
        sup_norm_rms: sup.to_f64_lossy(),
        m,
        n: kl.n_samples(),
        h: kl.space().h().to_f64_lossy(),
        k: kl.space().degree(),
        eval_seed,
        eval_samples: eval_set.len(),
        warnings,
    })
}

/// Least-squares line through `(log n, log λ_n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Fits `log λ_n ≈ intercept + slope · log n` for the 1-based indices
/// `first..=last`.
pub fn decay_fit<T: Real>(eigenvalues: &[T], first: usize, last: usize) -> Result<DecayFit, ErrorLabError> {
    if first == 0 || last <= first || last > eigenvalues.len() {
        return Err(ErrorLabError::InvalidRange {
            first,
            last,
            len: eigenvalues.len(),
        });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for n in first..=last {
        let v = eigenvalues[n - 1].to_f64_lossy();
        if !(v > 0.0) {
            return Err(ErrorLabError::NonPositiveEigenvalue { index: n });
        }
        xs.push((n as f64).ln());
        ys.push(v.ln());
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(DecayFit {
        slope,
        intercept: my - slope * mx,
    })
}

/// Sample count, truncation and mesh width balancing the three error
/// contributions at accuracy `ε`, with unit constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Balance {
    pub n: u64,
    pub m: u64,
    pub h: f64,
    /// `⌈1/h⌉`, so the usable mesh width is `1 / h_denominator`.
    pub h_denominator: u64,
}

fn ceil_guarded(v: f64) -> u64 {
    (v * (1.0 - CEIL_SLACK)).ceil().max(1.0) as u64
}

/// `N = ⌈ε^{−2−d/s}⌉`, `M = ⌈ε^{−d/s}⌉`, `h = ε^{2/s + 3d/(2s²)}`.
pub fn balance_parameters(epsilon: f64, s: f64, d: usize) -> Result<Balance, ErrorLabError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(ErrorLabError::InvalidEpsilon(epsilon));
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(ErrorLabError::InvalidSmoothness(s));
    }
    if d == 0 {
        return Err(ErrorLabError::InvalidDimension);
    }
    let d = d as f64;
    let n = ceil_guarded(epsilon.powf(-2.0 - d / s));
    let m = ceil_guarded(epsilon.powf(-d / s));
    let h = epsilon.powf(2.0 / s + 3.0 * d / (2.0 * s * s));
    Ok(Balance {
        n,
        m,
        h,
        h_denominator: ceil_guarded(1.0 / h),
    })
}

/// Outcome of checking `M ≤ N^{1/(2s/d+1)}` and `h < N^{−1/s} / 10`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintReport {
    pub m_bound: f64,
    pub m_pass: bool,
    /// `m_bound − M`; negative on failure.
    pub m_margin: f64,
    pub h_bound: f64,
    pub h_pass: bool,
    /// `h_bound − h`; negative on failure.
    pub h_margin: f64,
}

impl ConstraintReport {
    pub fn all_pass(&self) -> bool {
        self.m_pass && self.h_pass
    }
}

pub fn constraint_check(m: usize, n: usize, h: f64, s: f64, d: usize) -> ConstraintReport {
    let nf = n as f64;
    let d = d.max(1) as f64;
    let m_bound = nf.powf(1.0 / (2.0 * s / d + 1.0));
    let h_bound = nf.powf(-1.0 / s) / 10.0;
    ConstraintReport {
        m_bound,
        m_pass: m as f64 <= m_bound,
        m_margin: m_bound - m as f64,
        h_bound,
        h_pass: h < h_bound,
        h_margin: h_bound - h,
    }
}
