//! Conforming Lagrange finite elements of degree `k` on a uniform mesh of
//! `D = [0, 1]`.
//!
//! Global dof `e·k + i` is local node `i` of element `e`; neighbouring
//! elements share their end dofs, so `Q = k·n_elements + 1`. The full space
//! (no boundary conditions) carries the eigenproblem; the zero-trace
//! subspace used by the elliptic solver is obtained by dropping dofs `0` and
//! `Q − 1`.

use std::ops::Range;

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{BandedSym, LinalgError};
use crate::quadrature::{gauss_lobatto_nodes, QuadRule};
use crate::scalar::{pairwise_sum, Real};

/// Largest supported polynomial degree.
pub const MAX_DEGREE: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("mesh needs at least one element")]
    NoElements,
    #[error("polynomial degree {0} outside 1..=10")]
    InvalidDegree(usize),
    #[error("quadrature with {q} points is below the minimum {min} for degree {degree}")]
    QuadratureTooLow { q: usize, min: usize, degree: usize },
    #[error("point {x} lies outside [0, 1]")]
    OutOfDomain { x: f64 },
    #[error("coefficient vector has length {got}, space has {expected} dofs")]
    CoefficientLength { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeSpace<T> {
    n_elements: usize,
    degree: usize,
    ref_nodes: Vec<T>,
    /// `1 / Π_{j≠i} (t_i − t_j)` for each local node.
    denominators: Vec<T>,
    own: Tabulated<T>,
}

/// A quadrature rule together with the local basis (and its derivative
/// with respect to the local coordinate) at the rule's nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated<T> {
    rule: QuadRule<T>,
    /// `len × (k+1)` row-major.
    basis: Vec<T>,
    dbasis: Vec<T>,
}

impl<T> Tabulated<T> {
    pub fn rule(&self) -> &QuadRule<T> {
        &self.rule
    }
}

/// Uniform mesh with `n_elements` elements of degree `k` and the default
/// quadrature of `k + 2` Gauss-Legendre points per element.
pub fn build_space<T: Real>(n_elements: usize, k: usize) -> Result<FeSpace<T>, FemError> {
    FeSpace::new(n_elements, k)
}

impl<T: Real> FeSpace<T> {
    pub fn new(n_elements: usize, k: usize) -> Result<Self, FemError> {
        Self::with_quadrature(n_elements, k, k + 2)
    }

    /// Same as [`FeSpace::new`] with `q ≥ k + 2` quadrature points.
    pub fn with_quadrature(n_elements: usize, k: usize, q: usize) -> Result<Self, FemError> {
        if n_elements == 0 {
            return Err(FemError::NoElements);
        }
        if k == 0 || k > MAX_DEGREE {
            return Err(FemError::InvalidDegree(k));
        }
        if q < k + 2 {
            return Err(FemError::QuadratureTooLow { q, min: k + 2, degree: k });
        }
        let ref_nodes: Vec<T> = if k <= 3 {
            (0..=k)
                .map(|i| T::from_usize_lossy(i) / T::from_usize_lossy(k))
                .collect()
        } else {
            gauss_lobatto_nodes(k)
        };
        let denominators = (0..=k)
            .map(|i| {
                let mut p = T::one();
                for j in 0..=k {
                    if j != i {
                        p = p * (ref_nodes[i] - ref_nodes[j]);
                    }
                }
                p.recip()
            })
            .collect();
        let mut space = Self {
            n_elements,
            degree: k,
            ref_nodes,
            denominators,
            own: Tabulated {
                rule: QuadRule::gauss_legendre(1),
                basis: Vec::new(),
                dbasis: Vec::new(),
            },
        };
        space.own = space.tabulate(QuadRule::gauss_legendre(q));
        Ok(space)
    }

    /// Precomputes the local basis at the nodes of `rule`.
    pub fn tabulate(&self, rule: QuadRule<T>) -> Tabulated<T> {
        let nb = self.degree + 1;
        let mut basis = vec![T::zero(); rule.len() * nb];
        let mut dbasis = vec![T::zero(); rule.len() * nb];
        for (p, &t) in rule.nodes.iter().enumerate() {
            self.local_basis(t, &mut basis[p * nb..(p + 1) * nb]);
            self.local_basis_derivative(t, &mut dbasis[p * nb..(p + 1) * nb]);
        }
        Tabulated { rule, basis, dbasis }
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Mesh width `h = 1 / n_elements`.
    pub fn h(&self) -> T {
        T::from_usize_lossy(self.n_elements).recip()
    }

    /// Global dof count `Q`.
    pub fn ndofs(&self) -> usize {
        self.degree * self.n_elements + 1
    }

    pub fn quad(&self) -> &QuadRule<T> {
        &self.own.rule
    }

    /// The space's own rule with its basis tables.
    pub fn tabulated(&self) -> &Tabulated<T> {
        &self.own
    }

    pub fn reference_nodes(&self) -> &[T] {
        &self.ref_nodes
    }

    /// Dofs of the zero-trace subspace.
    pub fn interior_dofs(&self) -> Range<usize> {
        1..self.ndofs() - 1
    }

    /// Coordinate of global dof `i`.
    pub fn dof_coordinate(&self, i: usize) -> T {
        let (e, loc) = if i == self.ndofs() - 1 {
            (self.n_elements - 1, self.degree)
        } else {
            (i / self.degree, i % self.degree)
        };
        self.to_global(e, self.ref_nodes[loc])
    }

    #[inline]
    pub fn to_global(&self, e: usize, t: T) -> T {
        (T::from_usize_lossy(e) + t) / T::from_usize_lossy(self.n_elements)
    }

    /// Element containing `x` and the local coordinate; `x = 1` belongs to
    /// the last element.
    pub fn locate(&self, x: T) -> Result<(usize, T), FemError> {
        if !(x >= T::zero() && x <= T::one()) {
            return Err(FemError::OutOfDomain { x: x.to_f64_lossy() });
        }
        let s = x * T::from_usize_lossy(self.n_elements);
        let e = s.floor().to_usize().unwrap_or(0).min(self.n_elements - 1);
        Ok((e, s - T::from_usize_lossy(e)))
    }

    /// Lagrange basis values at local coordinate `t`.
    pub fn local_basis(&self, t: T, out: &mut [T]) {
        let k = self.degree;
        for i in 0..=k {
            let mut p = self.denominators[i];
            for j in 0..=k {
                if j != i {
                    p = p * (t - self.ref_nodes[j]);
                }
            }
            out[i] = p;
        }
    }

    /// Derivatives of the Lagrange basis with respect to `t`.
    pub fn local_basis_derivative(&self, t: T, out: &mut [T]) {
        let k = self.degree;
        for i in 0..=k {
            let mut sum = T::zero();
            for m in 0..=k {
                if m == i {
                    continue;
                }
                let mut p = T::one();
                for j in 0..=k {
                    if j != i && j != m {
                        p = p * (t - self.ref_nodes[j]);
                    }
                }
                sum = sum + p;
            }
            out[i] = sum * self.denominators[i];
        }
    }

    /// Visits the quadrature points of element `e`.
    ///
    /// The element is split at every point of `breaks` strictly inside it;
    /// unsplit elements read the precomputed tables. `table = None` selects
    /// the space's own rule. The callback receives `(x, weight·dx, φ, dφ/dx)`
    /// for the `k + 1` local basis functions.
    pub fn visit_element<F>(&self, e: usize, breaks: &[T], table: Option<&Tabulated<T>>, mut f: F)
    where
        F: FnMut(T, T, &[T], &[T]),
    {
        let table = table.unwrap_or(&self.own);
        let rule = &table.rule;
        let nb = self.degree + 1;
        let nel = T::from_usize_lossy(self.n_elements);
        let h = nel.recip();
        let x0 = self.to_global(e, T::zero());
        let x1 = self.to_global(e, T::one());
        let inside = breaks.iter().any(|&b| b > x0 && b < x1);
        if !inside {
            let mut buf = [T::zero(); MAX_DEGREE + 1];
            let dphi = &mut buf[..nb];
            for (p, (&t, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
                for (d, &v) in dphi.iter_mut().zip(&table.dbasis[p * nb..(p + 1) * nb]) {
                    *d = v * nel;
                }
                f(self.to_global(e, t), w * h, &table.basis[p * nb..(p + 1) * nb], dphi);
            }
            return;
        }
        let mut cuts = vec![T::zero()];
        for &b in breaks {
            if b > x0 && b < x1 {
                cuts.push(b * nel - T::from_usize_lossy(e));
            }
        }
        cuts.push(T::one());
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let mut phi_buf = [T::zero(); MAX_DEGREE + 1];
        let mut dphi_buf = [T::zero(); MAX_DEGREE + 1];
        let phi = &mut phi_buf[..nb];
        let dphi = &mut dphi_buf[..nb];
        for seg in cuts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let len = b - a;
            if len <= T::zero() {
                continue;
            }
            for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
                let t = a + len * s;
                self.local_basis(t, phi);
                self.local_basis_derivative(t, dphi);
                for d in dphi.iter_mut() {
                    *d = *d * nel;
                }
                f(self.to_global(e, t), w * len * h, phi, dphi);
            }
        }
    }

    /// Global dof of local node `i` on element `e`.
    #[inline]
    pub fn global_dof(&self, e: usize, i: usize) -> usize {
        e * self.degree + i
    }

    /// `M_ij = ∫ φ_i φ_j dx`, bandwidth `k`.
    pub fn mass_matrix(&self) -> BandedSym<T> {
        let nb = self.degree + 1;
        let locals: Vec<Vec<T>> = (0..self.n_elements)
            .into_par_iter()
            .map(|e| {
                let mut local = vec![T::zero(); nb * nb];
                self.visit_element(e, &[], None, |_, w, phi, _| {
                    for i in 0..nb {
                        for j in 0..=i {
                            local[i * nb + j] = local[i * nb + j] + w * phi[i] * phi[j];
                        }
                    }
                });
                local
            })
            .collect();
        let mut m = BandedSym::zeros(self.ndofs(), self.degree);
        for (e, local) in locals.iter().enumerate() {
            for i in 0..nb {
                for j in 0..=i {
                    m.add(self.global_dof(e, i), self.global_dof(e, j), local[i * nb + j]);
                }
            }
        }
        m
    }

    /// `b_i = ∫ f φ_i dx` with the element rule split at `breaks`.
    pub fn load_vector<F: Fn(T) -> T>(&self, f: F, breaks: &[T]) -> Vec<T> {
        let nb = self.degree + 1;
        let mut b = vec![T::zero(); self.ndofs()];
        let mut local = vec![T::zero(); nb];
        for e in 0..self.n_elements {
            local.iter_mut().for_each(|v| *v = T::zero());
            self.visit_element(e, breaks, None, |x, w, phi, _| {
                let fw = f(x) * w;
                for (l, &p) in local.iter_mut().zip(phi) {
                    *l = *l + fw * p;
                }
            });
            for (i, &l) in local.iter().enumerate() {
                let g = self.global_dof(e, i);
                b[g] = b[g] + l;
            }
        }
        b
    }

    /// L²-projection onto the space: solves `M c = b`.
    pub fn l2_project<F: Fn(T) -> T>(&self, f: F) -> Result<Vec<T>, FemError> {
        self.l2_project_with_breaks(f, &[])
    }

    pub fn l2_project_with_breaks<F: Fn(T) -> T>(&self, f: F, breaks: &[T]) -> Result<Vec<T>, FemError> {
        let chol = self.mass_matrix().cholesky()?;
        let mut c = self.load_vector(f, breaks);
        chol.solve(&mut c);
        Ok(c)
    }

    /// `∫_D g dx` by the composite element rule.
    pub fn integrate<F: Fn(T) -> T>(&self, g: F) -> T {
        self.integrate_with(g, &[], None)
    }

    /// Composite integral split at `breaks`, with an optional replacement rule.
    pub fn integrate_with<F: Fn(T) -> T>(&self, g: F, breaks: &[T], table: Option<&Tabulated<T>>) -> T {
        let per_element: Vec<T> = (0..self.n_elements)
            .map(|e| {
                let mut acc = T::zero();
                self.visit_element(e, breaks, table, |x, w, _, _| acc = acc + w * g(x));
                acc
            })
            .collect();
        pairwise_sum(&per_element)
    }

    fn check_len(&self, coeffs: &[T]) -> Result<(), FemError> {
        if coeffs.len() != self.ndofs() {
            return Err(FemError::CoefficientLength {
                expected: self.ndofs(),
                got: coeffs.len(),
            });
        }
        Ok(())
    }

    /// `Σ_i c_i φ_i(x)`.
    pub fn eval_fe(&self, coeffs: &[T], x: T) -> Result<T, FemError> {
        self.check_len(coeffs)?;
        let (e, t) = self.locate(x)?;
        let mut phi = vec![T::zero(); self.degree + 1];
        self.local_basis(t, &mut phi);
        Ok(phi
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, &p)| acc + coeffs[self.global_dof(e, i)] * p))
    }

    /// `Σ_i c_i φ_i′(x)`, taken from the element returned by [`FeSpace::locate`].
    pub fn eval_fe_derivative(&self, coeffs: &[T], x: T) -> Result<T, FemError> {
        self.check_len(coeffs)?;
        let (e, t) = self.locate(x)?;
        let mut dphi = vec![T::zero(); self.degree + 1];
        self.local_basis_derivative(t, &mut dphi);
        let nel = T::from_usize_lossy(self.n_elements);
        Ok(dphi
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, &p)| acc + coeffs[self.global_dof(e, i)] * p)
            * nel)
    }

    /// Element coefficients of `coeffs` on element `e`.
    #[inline]
    pub fn element_coeffs<'a>(&self, coeffs: &'a [T], e: usize) -> &'a [T] {
        let start = self.global_dof(e, 0);
        &coeffs[start..start + self.degree + 1]
    }

    /// Extends interior values by zero boundary values.
    pub fn embed_interior(&self, interior: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.ndofs()];
        out[1..self.ndofs() - 1].copy_from_slice(interior);
        out
    }
}

/// Dot product of local coefficients with basis values.
#[inline]
pub fn combine<T: Real>(coeffs: &[T], basis: &[T]) -> T {
    coeffs
        .iter()
        .zip(basis)
        .fold(T::zero(), |acc, (&c, &p)| acc + c * p)
}
