//! The sampled covariance kernel `R_N(x, x′) = (1/N) Σ_n log κ(y_n, x) log κ(y_n, x′)`
//! in factored Galerkin form `(1/N) G Gᵀ`, `G_{i,n} = ∫ log κ(y_n, x) φ_i(x) dx`.

use std::cell::Cell;
use std::io::{Read, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::fem1d::FeSpace;
use crate::field_models::{FieldError, FieldModel};
use crate::lattice_qmc::GaussianSampleSet;
use crate::scalar::{pairwise_sum, Real};

/// File magic of the binary `G` dump.
pub const DUMP_MAGIC: &[u8; 4] = b"KLG1";

#[derive(Debug, Error)]
pub enum CovarianceError {
    #[error("sample {sample}: {source}")]
    Field {
        sample: usize,
        #[source]
        source: FieldError,
    },
    #[error("sample set is empty")]
    NoSamples,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a sample-matrix dump (bad magic)")]
    BadMagic,
    #[error("dump header declares {rows}×{cols} but payload is truncated")]
    Truncated { rows: u64, cols: u64 },
}

/// Dense `Q × N` sample matrix, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> SampleMatrix<T> {
    pub fn from_columns(rows: usize, columns: Vec<Vec<T>>) -> Self {
        assert!(columns.iter().all(|c| c.len() == rows));
        Self {
            rows,
            cols: columns.len(),
            data: columns.into_iter().flatten().collect(),
        }
    }

    /// Row count `Q`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Column count `N`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, n: usize) -> T {
        self.data[n * self.rows + i]
    }

    pub fn column(&self, n: usize) -> &[T] {
        &self.data[n * self.rows..(n + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.data.chunks(self.rows)
    }

    /// `vᵀ (1/N) G Gᵀ v = ‖Gᵀv‖² / N`.
    pub fn quadratic_form(&self, v: &[T]) -> T {
        let terms: Vec<T> = self
            .columns()
            .map(|c| {
                let s = crate::scalar::dot(c, v);
                s * s
            })
            .collect();
        pairwise_sum(&terms) / T::from_usize_lossy(self.cols)
    }

    /// Dense `(1/N) G Gᵀ`, row-major. Intended for small test instances.
    pub fn dense_galerkin(&self) -> Vec<T> {
        let q = self.rows;
        let nf = T::from_usize_lossy(self.cols);
        let mut a = vec![T::zero(); q * q];
        for i in 0..q {
            for j in 0..=i {
                let terms: Vec<T> = self.columns().map(|c| c[i] * c[j]).collect();
                let v = pairwise_sum(&terms) / nf;
                a[i * q + j] = v;
                a[j * q + i] = v;
            }
        }
        a
    }

    /// Writes magic, `Q`, `N` (little-endian `u64`) and the entries row by
    /// row as little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), CovarianceError> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.cols * 8);
        for i in 0..self.rows {
            buf.clear();
            for n in 0..self.cols {
                buf.extend_from_slice(&self.get(i, n).to_f64_lossy().to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, CovarianceError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(CovarianceError::BadMagic);
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let rows = u64::from_le_bytes(word);
        r.read_exact(&mut word)?;
        let cols = u64::from_le_bytes(word);
        let (q, n) = (rows as usize, cols as usize);
        let mut data = vec![T::zero(); q * n];
        for i in 0..q {
            for j in 0..n {
                r.read_exact(&mut word)
                    .map_err(|_| CovarianceError::Truncated { rows, cols })?;
                data[j * q + i] = T::lit(f64::from_le_bytes(word));
            }
        }
        Ok(Self { rows: q, cols: n, data })
    }
}

/// Column `n` of `G` is the load vector of `log κ(y_n, ·)`; element rules
/// are split at the kinks of the field.
pub fn assemble_sample_matrix<T: Real>(
    space: &FeSpace<T>,
    model: &FieldModel,
    samples: &GaussianSampleSet<T>,
) -> Result<SampleMatrix<T>, CovarianceError> {
    if samples.is_empty() {
        return Err(CovarianceError::NoSamples);
    }
    let columns = (0..samples.len())
        .into_par_iter()
        .map(|n| field_load_vector(space, model, samples.sample(n)).map_err(|source| CovarianceError::Field { sample: n, source }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SampleMatrix::from_columns(space.ndofs(), columns))
}

/// `b_i = ∫ log κ(y, x) φ_i(x) dx`.
pub fn field_load_vector<T: Real>(
    space: &FeSpace<T>,
    model: &FieldModel,
    y: &[T],
) -> Result<Vec<T>, FieldError> {
    model.eval_log_field(y, T::lit(0.5))?;
    let kinks = model.kinks(y);
    let bad = Cell::new(None);
    let b = space.load_vector(
        |x| {
            let v = model.log_field_unchecked(y, x);
            if !v.is_finite() && bad.get().is_none() {
                bad.set(Some(x.to_f64_lossy()));
            }
            v
        },
        &kinks,
    );
    match bad.get() {
        Some(x) => Err(FieldError::NonFinite { x }),
        None => Ok(b),
    }
}

/// `R_N(x, x′)` evaluated pointwise.
pub fn eval_rn<T: Real>(
    model: &FieldModel,
    samples: &GaussianSampleSet<T>,
    x: T,
    xp: T,
) -> Result<T, CovarianceError> {
    if samples.is_empty() {
        return Err(CovarianceError::NoSamples);
    }
    let terms = (0..samples.len())
        .map(|n| {
            let y = samples.sample(n);
            let field = |s| model.eval_log_field(y, s).map_err(|source| CovarianceError::Field { sample: n, source });
            Ok(field(x)? * field(xp)?)
        })
        .collect::<Result<Vec<T>, CovarianceError>>()?;
    Ok(pairwise_sum(&terms) / T::from_usize_lossy(samples.len()))
}

/// `∫_D R_N(x, x) dx`, integrated per sample with kink-split element rules.
pub fn kernel_trace_estimate<T: Real>(
    model: &FieldModel,
    samples: &GaussianSampleSet<T>,
    space: &FeSpace<T>,
) -> Result<T, CovarianceError> {
    if samples.is_empty() {
        return Err(CovarianceError::NoSamples);
    }
    let terms = (0..samples.len())
        .into_par_iter()
        .map(|n| {
            let y = samples.sample(n);
            model
                .eval_log_field(y, T::zero())
                .map_err(|source| CovarianceError::Field { sample: n, source })?;
            let kinks = model.kinks(y);
            Ok(space.integrate_with(
                |x| {
                    let v = model.log_field_unchecked(y, x);
                    v * v
                },
                &kinks,
                None,
            ))
        })
        .collect::<Result<Vec<T>, CovarianceError>>()?;
    Ok(pairwise_sum(&terms) / T::from_usize_lossy(samples.len()))
}
