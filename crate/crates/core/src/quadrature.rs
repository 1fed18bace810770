//! Gauss-Legendre rules and Gauss-Lobatto node sets on the unit interval.

use crate::scalar::Real;

const NEWTON_MAX: usize = 100;

/// Evaluates `(P_n(x), P_{n-1}(x))` by the three-term recurrence.
fn legendre_pair<T: Real>(n: usize, x: T) -> (T, T) {
    let mut p_prev = T::one();
    if n == 0 {
        return (p_prev, T::zero());
    }
    let mut p = x;
    for j in 2..=n {
        let jf = T::from_usize_lossy(j);
        let next = ((jf + jf - T::one()) * x * p - (jf - T::one()) * p_prev) / jf;
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}

/// A quadrature rule on `[0, 1]` with positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> QuadRule<T> {
    /// `n`-point Gauss-Legendre rule, exact for polynomials of degree `2n - 1`.
    pub fn gauss_legendre(n: usize) -> Self {
        assert!(n >= 1, "need at least one quadrature point");
        let nf = T::from_usize_lossy(n);
        let half = T::lit(0.5);
        let mut nodes = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        for i in 0..n.div_ceil(2) {
            let guess = T::PI() * (T::from_usize_lossy(i) + T::lit(0.75)) / (nf + half);
            let mut x = guess.cos();
            let mut dp = T::one();
            for _ in 0..NEWTON_MAX {
                let (p, pm1) = legendre_pair(n, x);
                dp = nf * (x * p - pm1) / (x * x - T::one());
                let dx = p / dp;
                x = x - dx;
                if dx.abs() <= T::epsilon() * T::lit(4.0) {
                    let (p, pm1) = legendre_pair(n, x);
                    dp = nf * (x * p - pm1) / (x * x - T::one());
                    break;
                }
            }
            let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
            // map [-1, 1] -> [0, 1]; x is the positive root of the pair
            nodes[i] = half * (T::one() - x);
            nodes[n - 1 - i] = half * (T::one() + x);
            weights[i] = half * w;
            weights[n - 1 - i] = half * w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = half;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(T) -> T>(&self, a: T, b: T, mut f: F) -> T {
        let len = b - a;
        let mut acc = T::zero();
        for (&t, &w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + w * f(a + len * t);
        }
        acc * len
    }
}

/// Gauss-Lobatto-Legendre points of degree `k` (so `k + 1` points), mapped to
/// `[0, 1]` in increasing order. The end points are exactly 0 and 1.
pub fn gauss_lobatto_nodes<T: Real>(k: usize) -> Vec<T> {
    assert!(k >= 1);
    let kf = T::from_usize_lossy(k);
    let half = T::lit(0.5);
    let mut out = vec![T::zero(); k + 1];
    out[k] = T::one();
    for i in 1..k {
        // Chebyshev-Gauss-Lobatto starting guess, increasing in i.
        let mut x = -(T::PI() * T::from_usize_lossy(i) / kf).cos();
        for _ in 0..NEWTON_MAX {
            let (p, pm1) = legendre_pair(k, x);
            let one_m = T::one() - x * x;
            let dp = kf * (pm1 - x * p) / one_m;
            let ddp = (T::lit(2.0) * x * dp - kf * (kf + T::one()) * p) / one_m;
            let dx = dp / ddp;
            x = x - dx;
            if dx.abs() <= T::epsilon() * T::lit(4.0) {
                break;
            }
        }
        out[i] = half * (T::one() + x);
    }
    out
}
