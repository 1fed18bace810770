//! The elliptic model problem `−(κ(y,·) u′)′ = f` on `(0, 1)`, `u(0) = u(1) = 0`,
//! with either the exact lognormal coefficient or its truncated expansion.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::fem1d::{combine, FeSpace, FemError, MAX_DEGREE};
use crate::field_models::{FieldError, FieldModel};
use crate::lattice_qmc::GaussianSampleSet;
use crate::linalg::{BandedSym, LinalgError};
use crate::quadrature::QuadRule;
use crate::scalar::{pairwise_sum, Real};
use crate::spectral::{guarded_exp, DiscreteKl, KlRealization, SpectralError};

/// Relative slack of the per-solve energy inequalities.
const ENERGY_SLACK: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("coefficient is not positive at x = {x} (value {value})")]
    DegenerateCoefficient { x: f64, value: f64 },
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("M = {m:?}, sample {sample}: {source}")]
    Tagged {
        m: Option<usize>,
        sample: usize,
        #[source]
        source: Box<PdeError>,
    },
    #[error("truncation M = {requested} exceeds the {available} computed modes")]
    TruncationTooLarge { requested: usize, available: usize },
    #[error("moment order p = {0} must be positive")]
    InvalidMoment(f64),
    #[error("evaluation set is empty")]
    EmptyEvalSet,
}

pub type Forcing<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Where the diffusion coefficient comes from.
#[derive(Clone)]
pub enum CoefficientSource<T> {
    /// `κ(y, x) = exp(log κ(y, x))` from the model.
    Exact(FieldModel),
    /// `exp` of the first `m` modes of the expansion with projected
    /// coefficients `ψ̃(y)`.
    Expansion { kl: Arc<DiscreteKl<T>>, m: usize },
}

#[derive(Clone)]
pub struct PdeProblem<T> {
    pub space: FeSpace<T>,
    pub forcing: Forcing<T>,
    pub coefficient: CoefficientSource<T>,
}

/// Quadrature-level quantities of one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyCheck<T> {
    /// `|u|²_{H¹}`.
    pub seminorm_sq: T,
    /// `∫ f u`, equal to `∫ κ |u′|²` for the Galerkin solution.
    pub work: T,
    pub f_norm: T,
    pub u_norm: T,
    /// `κ_min |u|²_{H¹} ≤ ∫ f u ≤ ‖f‖ ‖u‖` up to rounding.
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution<T> {
    /// Coefficients on the full space, zero at both boundary dofs.
    pub coeffs: Vec<T>,
    pub kappa_min: T,
    pub kappa_max: T,
    pub energy: EnergyCheck<T>,
}

/// Galerkin solve in the zero-trace subspace of `space` with coefficient
/// `kappa`, splitting element rules at `breaks`.
pub fn solve_with_coefficient<T, K, F>(
    space: &FeSpace<T>,
    kappa: K,
    forcing: F,
    breaks: &[T],
) -> Result<PdeSolution<T>, PdeError>
where
    T: Real,
    K: Fn(T) -> T + Sync,
    F: Fn(T) -> T + Sync,
{
    let q = space.ndofs();
    let nb = space.degree() + 1;
    struct Local<T> {
        a: Vec<T>,
        b: Vec<T>,
        kmin: T,
        kmax: T,
        bad: Option<(f64, f64)>,
    }
    let locals: Vec<Local<T>> = (0..space.n_elements())
        .into_par_iter()
        .map(|e| {
            let mut loc = Local {
                a: vec![T::zero(); nb * nb],
                b: vec![T::zero(); nb],
                kmin: T::infinity(),
                kmax: T::neg_infinity(),
                bad: None,
            };
            space.visit_element(e, breaks, None, |x, w, phi, dphi| {
                let k = kappa(x);
                if !(k > T::zero() && k.is_finite()) {
                    loc.bad.get_or_insert((x.to_f64_lossy(), k.to_f64_lossy()));
                    return;
                }
                loc.kmin = loc.kmin.min(k);
                loc.kmax = loc.kmax.max(k);
                let fw = forcing(x) * w;
                for i in 0..nb {
                    loc.b[i] = loc.b[i] + fw * phi[i];
                    for j in 0..=i {
                        loc.a[i * nb + j] = loc.a[i * nb + j] + w * k * dphi[i] * dphi[j];
                    }
                }
            });
            loc
        })
        .collect();
    let mut kappa_min = T::infinity();
    let mut kappa_max = T::neg_infinity();
    for loc in &locals {
        if let Some((x, value)) = loc.bad {
            return Err(PdeError::DegenerateCoefficient { x, value });
        }
        kappa_min = kappa_min.min(loc.kmin);
        kappa_max = kappa_max.max(loc.kmax);
    }
    let n_int = q.saturating_sub(2);
    let mut coeffs = vec![T::zero(); q];
    if n_int > 0 {
        let mut a = BandedSym::zeros(n_int, space.degree().min(n_int - 1));
        let mut rhs = vec![T::zero(); n_int];
        for (e, loc) in locals.iter().enumerate() {
            for i in 0..nb {
                let gi = space.global_dof(e, i);
                if gi == 0 || gi == q - 1 {
                    continue;
                }
                rhs[gi - 1] = rhs[gi - 1] + loc.b[i];
                for j in 0..=i {
                    let gj = space.global_dof(e, j);
                    if gj == 0 || gj == q - 1 {
                        continue;
                    }
                    a.add(gi - 1, gj - 1, loc.a[i * nb + j]);
                }
            }
        }
        a.cholesky()?.solve(&mut rhs);
        coeffs[1..q - 1].copy_from_slice(&rhs);
    }
    let energy = energy_check(space, &coeffs, &forcing, kappa_min, breaks);
    Ok(PdeSolution {
        coeffs,
        kappa_min,
        kappa_max,
        energy,
    })
}

fn energy_check<T: Real, F: Fn(T) -> T>(
    space: &FeSpace<T>,
    u: &[T],
    forcing: &F,
    kappa_min: T,
    breaks: &[T],
) -> EnergyCheck<T> {
    let mut semi = Vec::with_capacity(space.n_elements());
    let mut work = Vec::with_capacity(space.n_elements());
    let mut ff = Vec::with_capacity(space.n_elements());
    let mut uu = Vec::with_capacity(space.n_elements());
    for e in 0..space.n_elements() {
        let local = space.element_coeffs(u, e);
        let (mut s, mut wk, mut f2, mut u2) = (T::zero(), T::zero(), T::zero(), T::zero());
        space.visit_element(e, breaks, None, |x, w, phi, dphi| {
            let uv = combine(local, phi);
            let du = combine(local, dphi);
            let fv = forcing(x);
            s = s + w * du * du;
            wk = wk + w * fv * uv;
            f2 = f2 + w * fv * fv;
            u2 = u2 + w * uv * uv;
        });
        semi.push(s);
        work.push(wk);
        ff.push(f2);
        uu.push(u2);
    }
    let seminorm_sq = pairwise_sum(&semi);
    let work = pairwise_sum(&work);
    let f_norm = pairwise_sum(&ff).sqrt();
    let u_norm = pairwise_sum(&uu).sqrt();
    let slack = T::lit(ENERGY_SLACK);
    let tiny = T::min_positive_value().sqrt();
    let holds = kappa_min * seminorm_sq <= work + slack * work.abs() + tiny
        && work <= f_norm * u_norm * (T::one() + slack) + tiny;
    EnergyCheck {
        seminorm_sq,
        work,
        f_norm,
        u_norm,
        holds,
    }
}

fn element_boundaries<T: Real>(space: &FeSpace<T>) -> Vec<T> {
    (1..space.n_elements())
        .map(|e| space.to_global(e, T::zero()))
        .collect()
}

/// Solves the problem for the stochastic point `y`.
pub fn solve_elliptic<T: Real>(problem: &PdeProblem<T>, y: &[T]) -> Result<PdeSolution<T>, PdeError> {
    let space = &problem.space;
    let f = |x: T| (problem.forcing)(x);
    match &problem.coefficient {
        CoefficientSource::Exact(model) => {
            model.eval_log_field(y, T::zero())?;
            let kinks = model.kinks(y);
            solve_with_coefficient(space, |x| model.log_field_unchecked(y, x).exp(), f, &kinks)
        }
        CoefficientSource::Expansion { kl, m } => {
            if *m > kl.len() {
                return Err(PdeError::TruncationTooLarge {
                    requested: *m,
                    available: kl.len(),
                });
            }
            let r = KlRealization::projected(kl, y)?.truncate(*m);
            solve_with_realization(space, &r, f)
        }
    }
}

/// Solves with `κ = exp(log κ_M)` for a given realization.
pub fn solve_with_realization<T: Real, F: Fn(T) -> T + Sync>(
    space: &FeSpace<T>,
    realization: &KlRealization<'_, T>,
    forcing: F,
) -> Result<PdeSolution<T>, PdeError> {
    let kl_space = realization.expansion().space();
    let coeffs = realization.coefficients();
    let breaks = if space.n_elements().is_multiple_of(kl_space.n_elements()) {
        Vec::new()
    } else {
        element_boundaries(kl_space)
    };
    solve_with_coefficient(
        space,
        |x| guarded_exp(kl_space.eval_fe(coeffs, x).unwrap_or(T::nan())),
        forcing,
        &breaks,
    )
}

/// The comparison side of [`h1_error`].
pub enum H1Target<'a, T> {
    Coeffs(&'a FeSpace<T>, &'a [T]),
    Function {
        value: &'a (dyn Fn(T) -> T + Sync),
        derivative: &'a (dyn Fn(T) -> T + Sync),
    },
}

/// `‖u − v‖_{H¹} = (‖u − v‖² + ‖u′ − v′‖²)^{1/2}` by a Gauss rule with twice
/// the space's points, split at the other mesh's element boundaries.
pub fn h1_error<T: Real>(space: &FeSpace<T>, u: &[T], target: H1Target<'_, T>) -> Result<T, PdeError> {
    if u.len() != space.ndofs() {
        return Err(FemError::CoefficientLength {
            expected: space.ndofs(),
            got: u.len(),
        }
        .into());
    }
    if let H1Target::Coeffs(other, v) = &target {
        if *other == space && v.len() == u.len() {
            let diff: Vec<T> = u.iter().zip(v.iter()).map(|(&a, &b)| a - b).collect();
            return Ok(h1_norm(space, &diff));
        }
    }
    let fine = space.tabulate(QuadRule::gauss_legendre(2 * space.quad().len()));
    let breaks = match &target {
        H1Target::Coeffs(other, v) => {
            if v.len() != other.ndofs() {
                return Err(FemError::CoefficientLength {
                    expected: other.ndofs(),
                    got: v.len(),
                }
                .into());
            }
            element_boundaries(other)
        }
        H1Target::Function { .. } => Vec::new(),
    };
    let mut failure = None;
    let per_element: Vec<T> = (0..space.n_elements())
        .map(|e| {
            let local = space.element_coeffs(u, e);
            let mut acc = T::zero();
            space.visit_element(e, &breaks, Some(&fine), |x, w, phi, dphi| {
                let (v, dv) = match &target {
                    H1Target::Coeffs(other, c) => {
                        match (other.eval_fe(c, x), other.eval_fe_derivative(c, x)) {
                            (Ok(a), Ok(b)) => (a, b),
                            (Err(err), _) | (_, Err(err)) => {
                                failure.get_or_insert(err);
                                (T::zero(), T::zero())
                            }
                        }
                    }
                    H1Target::Function { value, derivative } => (value(x), derivative(x)),
                };
                let d0 = combine(local, phi) - v;
                let d1 = combine(local, dphi) - dv;
                acc = acc + w * (d0 * d0 + d1 * d1);
            });
            acc
        })
        .collect();
    if let Some(err) = failure {
        return Err(err.into());
    }
    Ok(pairwise_sum(&per_element).sqrt())
}

/// Full `H¹` norm of a finite-element function.
pub fn h1_norm<T: Real>(space: &FeSpace<T>, u: &[T]) -> T {
    let per_element: Vec<T> = (0..space.n_elements())
        .map(|e| {
            let local = space.element_coeffs(u, e);
            let mut acc = T::zero();
            space.visit_element(e, &[], None, |_, w, phi, dphi| {
                let a = combine(local, phi);
                let b = combine(local, dphi);
                acc = acc + w * (a * a + b * b);
            });
            acc
        })
        .collect();
    pairwise_sum(&per_element).sqrt()
}

fn h1_seminorm<T: Real>(space: &FeSpace<T>, u: &[T]) -> T {
    let per_element: Vec<T> = (0..space.n_elements())
        .map(|e| {
            let local = space.element_coeffs(u, e);
            let mut acc = T::zero();
            space.visit_element(e, &[], None, |_, w, _, dphi| {
                let b = combine(local, dphi);
                acc = acc + w * b * b;
            });
            acc
        })
        .collect();
    pairwise_sum(&per_element).sqrt()
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    /// Reference mesh has this many times the expansion's elements.
    pub refine: usize,
    /// Reference degree is the expansion's degree plus this, capped at 10.
    pub degree_increase: usize,
    /// Moment orders, each in `(0, 2)` for the theory to apply.
    pub moments: Vec<f64>,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            refine: 4,
            degree_increase: 1,
            moments: vec![1.0],
        }
    }
}

/// One `(M, p)` line of a perturbation study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub m: usize,
    pub p: f64,
    /// `(mean ‖u − u_M‖^p_{H¹})^{1/p}`.
    pub error_estimate: f64,
    pub kappa_min_mean: f64,
    pub kappa_max_mean: f64,
    /// `(mean |u − u_M|^p_{H¹})^{1/p}` (seminorm).
    pub lhs: f64,
    /// `(mean (κ_min⁻¹ ‖κ_M − κ‖_{C(D)} |u_M|_{H¹})^p)^{1/p}`.
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    /// Largest over median per-sample `‖u‖_{H¹}`, across all solves.
    pub norm_ratio: f64,
    pub energy_violations: usize,
    /// `(p, mean κ_min^{-p}, mean κ_max^p)` for `p ∈ {1, 2, 4}`.
    pub kappa_moments: Vec<(f64, f64, f64)>,
    pub n_samples: usize,
    pub reference_elements: usize,
    pub reference_degree: usize,
}

struct SampleOutcome {
    kappa_min: f64,
    kappa_max: f64,
    /// Per `M`: (H¹ error, seminorm error, bound right side).
    per_m: Vec<(f64, f64, f64)>,
    norms: Vec<f64>,
    violations: usize,
}

/// Solves with the exact and the truncated coefficient for every evaluation
/// point and truncation in `ms`, both on the reference space.
pub fn perturbation_study<T: Real>(
    kl: &DiscreteKl<T>,
    ms: &[usize],
    forcing: Forcing<T>,
    eval_set: &GaussianSampleSet<T>,
    options: &StudyOptions,
) -> Result<StudyReport, PdeError> {
    if eval_set.is_empty() {
        return Err(PdeError::EmptyEvalSet);
    }
    if let Some(&m) = ms.iter().find(|&&m| m > kl.len()) {
        return Err(PdeError::TruncationTooLarge {
            requested: m,
            available: kl.len(),
        });
    }
    if let Some(&p) = options.moments.iter().find(|&&p| !(p > 0.0)) {
        return Err(PdeError::InvalidMoment(p));
    }
    let model = kl.model();
    let kl_space = kl.space();
    let ref_degree = (kl_space.degree() + options.degree_increase).min(MAX_DEGREE);
    let ref_space = FeSpace::<T>::new(kl_space.n_elements() * options.refine.max(1), ref_degree)?;
    let f = |x: T| forcing(x);

    let outcomes = (0..eval_set.len())
        .into_par_iter()
        .map(|i| {
            let y = eval_set.sample(i);
            let tag = |m: Option<usize>| move |e: PdeError| PdeError::Tagged { m, sample: i, source: Box::new(e) };
            model.eval_log_field(y, T::zero()).map_err(|e| tag(None)(e.into()))?;
            let kinks = model.kinks(y);
            let exact_kappa = |x: T| model.log_field_unchecked(y, x).exp();
            let exact = solve_with_coefficient(&ref_space, exact_kappa, f, &kinks).map_err(tag(None))?;
            let full = KlRealization::projected(kl, y).map_err(|e| tag(None)(e.into()))?;
            let mut per_m = Vec::with_capacity(ms.len());
            let mut norms = vec![h1_norm(&ref_space, &exact.coeffs).to_f64_lossy()];
            let mut violations = usize::from(!exact.energy.holds);
            for &m in ms {
                let r = full.truncate(m);
                let sol = solve_with_realization(&ref_space, &r, f).map_err(tag(Some(m)))?;
                violations += usize::from(!sol.energy.holds);
                let diff: Vec<T> = exact.coeffs.iter().zip(&sol.coeffs).map(|(&a, &b)| a - b).collect();
                let err = h1_norm(&ref_space, &diff).to_f64_lossy();
                let semi = h1_seminorm(&ref_space, &diff).to_f64_lossy();
                let coeffs = r.coefficients();
                let mut sup = T::zero();
                for e in 0..ref_space.n_elements() {
                    ref_space.visit_element(e, &kinks, None, |x, _, _, _| {
                        let km = guarded_exp(kl_space.eval_fe(coeffs, x).unwrap_or(T::zero()));
                        sup = sup.max((km - exact_kappa(x)).abs());
                    });
                }
                let um_semi = sol.energy.seminorm_sq.sqrt();
                let rhs = (sup / exact.kappa_min * um_semi).to_f64_lossy();
                norms.push(h1_norm(&ref_space, &sol.coeffs).to_f64_lossy());
                per_m.push((err, semi, rhs));
            }
            Ok(SampleOutcome {
                kappa_min: exact.kappa_min.to_f64_lossy(),
                kappa_max: exact.kappa_max.to_f64_lossy(),
                per_m,
                norms,
                violations,
            })
        })
        .collect::<Result<Vec<SampleOutcome>, PdeError>>()?;

    let n = outcomes.len() as f64;
    let mean = |v: Vec<f64>| pairwise_sum(&v) / n;
    let moment = |v: Vec<f64>, p: f64| mean(v.into_iter().map(|x| x.powf(p)).collect()).powf(1.0 / p);
    let kappa_min_mean = mean(outcomes.iter().map(|o| o.kappa_min).collect());
    let kappa_max_mean = mean(outcomes.iter().map(|o| o.kappa_max).collect());
    let mut rows = Vec::new();
    for (j, &m) in ms.iter().enumerate() {
        for &p in &options.moments {
            let err = moment(outcomes.iter().map(|o| o.per_m[j].0).collect(), p);
            let lhs = moment(outcomes.iter().map(|o| o.per_m[j].1).collect(), p);
            let rhs = moment(outcomes.iter().map(|o| o.per_m[j].2).collect(), p);
            rows.push(StudyRow {
                m,
                p,
                error_estimate: err,
                kappa_min_mean,
                kappa_max_mean,
                lhs,
                rhs,
                ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
            });
        }
    }
    let mut norms: Vec<f64> = outcomes.iter().flat_map(|o| o.norms.iter().copied()).collect();
    norms.sort_by(f64::total_cmp);
    let median = norms[norms.len() / 2];
    let norm_ratio = norms.last().copied().unwrap_or(0.0) / median;
    let kappa_moments = [1.0, 2.0, 4.0]
        .iter()
        .map(|&p| {
            (
                p,
                mean(outcomes.iter().map(|o| o.kappa_min.powf(-p)).collect()),
                mean(outcomes.iter().map(|o| o.kappa_max.powf(p)).collect()),
            )
        })
        .collect();
    Ok(StudyReport {
        rows,
        norm_ratio,
        energy_violations: outcomes.iter().map(|o| o.violations).sum(),
        kappa_moments,
        n_samples: outcomes.len(),
        reference_elements: ref_space.n_elements(),
        reference_degree: ref_degree,
    })
}
