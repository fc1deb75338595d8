//! Dense Cholesky factorization with a fixed diagonal-jitter ladder.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Jitter levels tried in order until factorization succeeds. Fixed rather
/// than configurable so simulation output is reproducible across runs.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Lower-triangular Cholesky factor of a symmetric matrix plus any diagonal
/// regularization that was needed to make the factorization succeed.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
    jitter_used: f64,
}

impl CholeskyFactor {
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// out = L * g, exploiting the triangular structure.
    pub fn mul_into(&self, g: &[f64], out: &mut [f64]) {
        let d = self.dim();
        debug_assert_eq!(g.len(), d);
        debug_assert_eq!(out.len(), d);
        for (i, out_i) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, g_j) in g.iter().enumerate().take(i + 1) {
                acc += self.lower[(i, j)] * g_j;
            }
            *out_i = acc;
        }
    }
}

/// Factor `m + jitter * I = L L^T`, escalating `jitter` through
/// [`JITTER_LADDER`] (levels above `max_jitter` are skipped; level 0 is
/// always tried).
pub fn cholesky_with_jitter(m: &DMatrix<f64>, max_jitter: f64) -> Result<CholeskyFactor> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut last_failure = (0usize, f64::NAN, 0.0f64);
    for &jitter in JITTER_LADDER.iter() {
        if jitter > max_jitter && jitter > 0.0 {
            break;
        }
        match try_cholesky(m, jitter) {
            Ok(lower) => {
                return Ok(CholeskyFactor {
                    lower,
                    jitter_used: jitter,
                })
            }
            Err((column, pivot)) => last_failure = (column, pivot, jitter),
        }
    }
    Err(Error::NotPositiveDefinite {
        column: last_failure.0,
        pivot: last_failure.1,
        jitter: last_failure.2,
    })
}

/// Plain left-looking Cholesky; fails on the first non-positive pivot.
fn try_cholesky(m: &DMatrix<f64>, jitter: f64) -> std::result::Result<DMatrix<f64>, (usize, f64)> {
    let d = m.nrows();
    let mut l = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let mut pivot = m[(j, j)] + jitter;
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err((j, pivot));
        }
        let root = pivot.sqrt();
        l[(j, j)] = root;
        for i in (j + 1)..d {
            let mut acc = m[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = acc / root;
        }
    }
    Ok(l)
}
