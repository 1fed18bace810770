//! Reference computations used as test oracles. Everything here is written
//! from first principles and shares no code with the library.
#![allow(dead_code)]

use std::f64::consts::PI;

/// `(P_n(x), P_n'(x))` from the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = if (1.0 - x * x).abs() < 1e-300 {
        0.5 * n * (n + 1.0) * x.powi(n as i32 + 1)
    } else {
        n * (p0 - x * p1) / (1.0 - x * x)
    };
    (p1, dp)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration from
/// Chebyshev guesses.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = -(PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        xs.push(x);
        ws.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (xs, ws)
}

/// Composite Gauss-Legendre integration of `f` over `[a, b]` with `panels`
/// equal panels of `order` points each.
pub fn composite<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (xs, ws) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mut acc = 0.0;
        for (x, w) in xs.iter().zip(&ws) {
            acc += w * f(lo + 0.5 * h * (x + 1.0));
        }
        total += 0.5 * h * acc;
    }
    total
}

pub fn normal_density(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

/// `Φ(t)` for `t ≤ 0` as `∫_0^∞ ρ(t − v) dv`; the integrand is positive so
/// the result keeps full relative accuracy deep in the tail.
pub fn normal_cdf_lower(t: f64) -> f64 {
    assert!(t <= 0.0);
    composite(|v| normal_density(t - v), 0.0, 40.0, 160, 12)
}

/// `Φ⁻¹(u)` for `u ∈ (0, 1/2]` by bisection on [`normal_cdf_lower`].
pub fn inverse_normal_lower(u: f64) -> f64 {
    assert!(u > 0.0 && u <= 0.5);
    let (mut lo, mut hi) = (-40.0, 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if normal_cdf_lower(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `Φ⁻¹(u)` on `(0, 1)` through the symmetry `Φ⁻¹(u) = −Φ⁻¹(1−u)`.
pub fn inverse_normal(u: f64) -> f64 {
    if u <= 0.5 {
        inverse_normal_lower(u)
    } else {
        -inverse_normal_lower(1.0 - u)
    }
}

/// The shift-averaged kernel `θ(x) = 1/√π − 2ρ(Φ⁻¹(x))`, `θ(0) = 1/√π`.
pub fn theta(x: f64) -> f64 {
    let base = 1.0 / PI.sqrt();
    if x == 0.0 {
        base
    } else {
        base - 2.0 * normal_density(inverse_normal(x))
    }
}

/// Squared worst-case error by explicit enumeration of all nonempty subsets.
pub fn wce_squared_bruteforce(z: &[u64], n: u64, factors: &[f64]) -> f64 {
    let d = z.len();
    let th: Vec<f64> = (0..n).map(|m| theta(m as f64 / n as f64)).collect();
    let mut total = 0.0;
    for mask in 1u32..(1 << d) {
        let members: Vec<usize> = (0..d).filter(|j| mask & (1 << j) != 0).collect();
        let order = members.len();
        let fact: f64 = (1..=order).map(|v| v as f64).product();
        let gamma = fact * fact * members.iter().map(|&j| factors[j]).product::<f64>();
        let mut s = 0.0;
        for k in 0..n {
            let mut prod = 1.0;
            for &j in &members {
                prod *= th[((k as u128 * z[j] as u128) % n as u128) as usize];
            }
            s += prod;
        }
        total += gamma * s / n as f64;
    }
    total
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Greedy search scoring every unit `1 ≤ z < N` by brute force; the smallest
/// candidate within `1e-11` relative of the best wins.
pub fn cbc_exhaustive(n: u64, d: usize, factors: &[f64]) -> Vec<u64> {
    let mut z: Vec<u64> = Vec::new();
    for _ in 0..d {
        let scores: Vec<(u64, f64)> = (1..n)
            .filter(|&c| gcd(c, n) == 1)
            .map(|c| {
                let mut trial = z.clone();
                trial.push(c);
                (c, wce_squared_bruteforce(&trial, n, factors))
            })
            .collect();
        let best = scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let tol = 1e-11 * best.abs().max(1e-300);
        let pick = scores.iter().find(|s| s.1 <= best + tol).unwrap().0;
        z.push(pick);
    }
    z
}

/// Dense lower Cholesky factor of a row-major SPD matrix.
pub fn cholesky(a: &[f64], n: usize) -> Vec<f64> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        assert!(d > 0.0, "matrix is not positive definite");
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    l
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted in
/// decreasing order.
pub fn jacobi_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _sweep in 0..100 {
        let mut off = 0.0;
        let mut diag = 0.0;
        for i in 0..n {
            diag += m[i * n + i] * m[i * n + i];
            for j in 0..n {
                if i != j {
                    off += m[i * n + j] * m[i * n + j];
                }
            }
        }
        if off <= 1e-34 * diag {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev
}

/// Eigenvalues of `A c = λ M c` through `L⁻¹ A L⁻ᵀ` with `M = L Lᵀ`.
pub fn generalized_eigenvalues(a: &[f64], mass: &[f64], n: usize) -> Vec<f64> {
    let l = cholesky(mass, n);
    // X = L⁻¹ A
    let mut x = a.to_vec();
    for col in 0..n {
        for i in 0..n {
            let mut s = x[i * n + col];
            for k in 0..i {
                s -= l[i * n + k] * x[k * n + col];
            }
            x[i * n + col] = s / l[i * n + i];
        }
    }
    // C = X L⁻ᵀ, i.e. solve L Cᵀ = Xᵀ row by row
    let mut c = vec![0.0; n * n];
    for row in 0..n {
        for i in 0..n {
            let mut s = x[row * n + i];
            for k in 0..i {
                s -= l[i * n + k] * c[row * n + k];
            }
            c[row * n + i] = s / l[i * n + i];
        }
    }
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (c[i * n + j] + c[j * n + i]);
            c[i * n + j] = v;
            c[j * n + i] = v;
        }
    }
    jacobi_eigenvalues(&c, n)
}
