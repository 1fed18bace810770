use crate::linalg::LinalgError;
use crate::scalar::Real;

/// Symmetric band matrix storing the lower triangle of the band.
///
/// Row `i` keeps the `bandwidth + 1` entries of columns `i - bandwidth ..= i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym<T> {
    n: usize,
    bandwidth: usize,
    data: Vec<T>,
}

impl<T: Real> BandedSym<T> {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bandwidth,
            data: vec![T::zero(); n * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bandwidth || r >= self.n {
            None
        } else {
            Some(r * (self.bandwidth + 1) + (c + self.bandwidth - r))
        }
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> T {
        self.slot(i, j).map_or(T::zero(), |s| self.data[s])
    }

    /// Adds `v` to the symmetric pair `(i, j)`/`(j, i)`.
    ///
    /// Panics if the position lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] = self.data[s] + v;
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            for j in lo..=i {
                let a = self.get(i, j);
                y[i] = y[i] + a * x[j];
                if j != i {
                    y[j] = y[j] + a * x[i];
                }
            }
        }
        y
    }

    /// Dense row-major copy, used by small-size checks.
    pub fn to_dense(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.n * self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                d[i * self.n + j] = self.get(i, j);
            }
        }
        d
    }

    /// Principal submatrix on the index range `[from, to)`.
    pub fn principal(&self, from: usize, to: usize) -> Self {
        let m = to - from;
        let mut out = Self::zeros(m, self.bandwidth);
        for i in 0..m {
            let lo = i.saturating_sub(self.bandwidth);
            for j in lo..=i {
                let s = out.slot(i, j).expect("in band");
                out.data[s] = self.get(i + from, j + from);
            }
        }
        out
    }

    pub fn cholesky(&self) -> Result<BandedCholesky<T>, LinalgError> {
        BandedCholesky::factor(self)
    }
}

/// Lower-triangular band Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct BandedCholesky<T> {
    l: BandedSym<T>,
}

impl<T: Real> BandedCholesky<T> {
    fn factor(a: &BandedSym<T>) -> Result<Self, LinalgError> {
        let n = a.n;
        let bw = a.bandwidth;
        let mut l = a.clone();
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let mut s = l.get(i, j);
                for k in lo..j {
                    s = s - l.get(i, k) * l.get(j, k);
                }
                let slot = l.slot(i, j).expect("in band");
                if i == j {
                    if !(s > T::zero()) {
                        return Err(LinalgError::NotPositiveDefinite { pivot: i });
                    }
                    l.data[slot] = s.sqrt();
                } else {
                    l.data[slot] = s / l.get(j, j);
                }
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.n
    }

    /// `L[i][j]` for `i >= j`.
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> T {
        debug_assert!(i >= j);
        self.l.get(i, j)
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [T]) {
        let bw = self.l.bandwidth;
        for i in 0..b.len() {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s = s - self.l.get(i, k) * b[k];
            }
            b[i] = s / self.l.get(i, i);
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward(&self, y: &mut [T]) {
        let n = y.len();
        let bw = self.l.bandwidth;
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n.min(i + bw + 1) {
                s = s - self.l.get(k, i) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [T]) {
        self.forward(b);
        self.backward(b);
    }
}
