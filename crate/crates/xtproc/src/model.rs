//! Domain types shared by every other module: tail index, correlation
//! specifications, site sets, and the settings block for spectral
//! simulation. All types are immutable after construction and safe to share
//! across workers.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::cholesky_with_jitter;

const SYMMETRY_TOL: f64 = 1e-12;
const DIAGONAL_TOL: f64 = 1e-12;
/// PSD acceptance threshold on the smallest eigenvalue, realized as the cap
/// on the factorization jitter ladder. Loose enough to admit matrices typed
/// with limited decimal precision.
const PSD_JITTER_CAP: f64 = 1e-10;

/// Tail index of the max-stable limit; identical to the general degrees of
/// freedom of the extremal t dependence structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailIndex(f64);

impl TailIndex {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Domain(format!(
                "tail index must be a finite positive real, got {alpha}"
            )));
        }
        Ok(TailIndex(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Parametric isotropic correlation function on R^p.
///
/// All three families are strictly positive definite with |rho(h)| < 1 for
/// h > 0, so distinct sites always yield admissible correlation matrices.
/// No nugget is offered: a nugget would break the unit-variance standard
/// field the spectral construction requires.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationModel {
    /// rho(h) = exp(-h / range)
    Exponential { range: f64 },
    /// rho(h) = exp(-(h / range)^2)
    Gaussian { range: f64 },
    /// rho(h) = exp(-(h / range)^power), power in (0, 2]
    PoweredExponential { range: f64, power: f64 },
}

impl CorrelationModel {
    pub fn exponential(range: f64) -> Result<Self> {
        check_range(range)?;
        Ok(CorrelationModel::Exponential { range })
    }

    pub fn gaussian(range: f64) -> Result<Self> {
        check_range(range)?;
        Ok(CorrelationModel::Gaussian { range })
    }

    pub fn powered_exponential(range: f64, power: f64) -> Result<Self> {
        check_range(range)?;
        if !(power > 0.0 && power <= 2.0) {
            return Err(Error::Domain(format!(
                "powered exponential needs power in (0, 2], got {power}"
            )));
        }
        Ok(CorrelationModel::PoweredExponential { range, power })
    }

    /// Correlation at lag distance `h >= 0`.
    pub fn correlation(&self, h: f64) -> f64 {
        match *self {
            CorrelationModel::Exponential { range } => (-h / range).exp(),
            CorrelationModel::Gaussian { range } => {
                let s = h / range;
                (-s * s).exp()
            }
            CorrelationModel::PoweredExponential { range, power } => (-(h / range).powf(power)).exp(),
        }
    }
}

fn check_range(range: f64) -> Result<()> {
    if !(range > 0.0) || !range.is_finite() {
        return Err(Error::Domain(format!(
            "correlation range must be a finite positive real, got {range}"
        )));
    }
    Ok(())
}

/// Correlation structure: either a parametric model evaluated at pairwise
/// site distances, or an explicit d x d matrix.
#[derive(Debug, Clone)]
pub enum CorrelationSpec {
    Model(CorrelationModel),
    Matrix(DMatrix<f64>),
}

/// Ordered list of coordinates in R^p where a field is evaluated.
///
/// Exact duplicates are rejected at construction: coincident sites force a
/// correlation of one between distinct components, outside the admissible
/// range.
#[derive(Debug, Clone)]
pub struct SiteSet {
    sites: Vec<Vec<f64>>,
    dim: usize,
}

impl SiteSet {
    pub fn new(sites: Vec<Vec<f64>>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Domain("site set must contain at least one site".into()));
        }
        let dim = sites[0].len();
        if dim == 0 {
            return Err(Error::Domain("site coordinates must have dimension >= 1".into()));
        }
        for (i, s) in sites.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "site {i} has {} coordinates, expected {dim}",
                    s.len()
                )));
            }
            if s.iter().any(|c| !c.is_finite()) {
                return Err(Error::Domain(format!("site {i} has a non-finite coordinate")));
            }
        }
        for i in 0..sites.len() {
            for j in (i + 1)..sites.len() {
                if sites[i] == sites[j] {
                    return Err(Error::DegenerateCorrelation(format!(
                        "sites {i} and {j} are identical"
                    )));
                }
            }
        }
        Ok(SiteSet { sites, dim })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Coordinate dimension p.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sites(&self) -> &[Vec<f64>] {
        &self.sites
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.sites[i]
            .iter()
            .zip(&self.sites[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Extremal t model: tail index plus correlation structure. Together these
/// fully determine the dependence structure.
#[derive(Debug, Clone)]
pub struct ExtremalTModel {
    pub alpha: TailIndex,
    pub correlation: CorrelationSpec,
}

impl ExtremalTModel {
    pub fn new(alpha: TailIndex, correlation: CorrelationSpec) -> Self {
        ExtremalTModel { alpha, correlation }
    }
}

/// Settings for one spectral-simulation batch.
#[derive(Debug, Clone, Copy)]
pub struct SpectralSettings {
    /// Effective bound on the spectral function used by the stopping rule.
    pub truncation_c: f64,
    /// Hard cap on Poisson points per replicate.
    pub max_points: usize,
    /// Number of replicates in a batch run.
    pub replicates: usize,
    /// Base seed; replicate k draws from stream id k.
    pub seed: u64,
}

/// Default truncation bound for a Gaussian spectral process.
pub const DEFAULT_TRUNCATION_GAUSSIAN: f64 = 6.0;
/// Default truncation bound for heavier-tailed t spectral vectors.
pub const DEFAULT_TRUNCATION_T: f64 = 25.0;
pub const DEFAULT_MAX_POINTS: usize = 100_000;

impl SpectralSettings {
    pub fn gaussian_spectral(seed: u64) -> Self {
        SpectralSettings {
            truncation_c: DEFAULT_TRUNCATION_GAUSSIAN,
            max_points: DEFAULT_MAX_POINTS,
            replicates: 1,
            seed,
        }
    }

    pub fn t_spectral(seed: u64) -> Self {
        SpectralSettings {
            truncation_c: DEFAULT_TRUNCATION_T,
            max_points: DEFAULT_MAX_POINTS,
            replicates: 1,
            seed,
        }
    }

    pub fn with_replicates(mut self, replicates: usize) -> Self {
        self.replicates = replicates;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.truncation_c > 0.0) || !self.truncation_c.is_finite() {
            return Err(Error::Domain(format!(
                "truncation_c must be a finite positive real, got {}",
                self.truncation_c
            )));
        }
        if self.max_points == 0 {
            return Err(Error::Domain("max_points must be >= 1".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Domain("replicates must be >= 1".into()));
        }
        Ok(())
    }
}

/// Build the correlation matrix of `sites` under `spec`.
///
/// Parametric specs evaluate rho at pairwise Euclidean distances; explicit
/// matrices are checked for dimension agreement. The result always passes
/// [`validate_correlation_matrix`].
pub fn build_correlation_matrix(spec: &CorrelationSpec, sites: &SiteSet) -> Result<DMatrix<f64>> {
    let d = sites.len();
    let m = match spec {
        CorrelationSpec::Model(model) => {
            let mut m = DMatrix::<f64>::identity(d, d);
            for i in 0..d {
                for j in (i + 1)..d {
                    let rho = model.correlation(sites.distance(i, j));
                    if rho.abs() >= 1.0 {
                        return Err(Error::DegenerateCorrelation(format!(
                            "correlation between sites {i} and {j} is {rho}; distinct sites \
                             must have |rho| < 1"
                        )));
                    }
                    m[(i, j)] = rho;
                    m[(j, i)] = rho;
                }
            }
            m
        }
        CorrelationSpec::Matrix(m) => {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch(format!(
                    "explicit correlation matrix is {}x{}, but there are {d} sites",
                    m.nrows(),
                    m.ncols()
                )));
            }
            m.clone()
        }
    };
    validate_correlation_matrix(&m)?;
    Ok(m)
}

/// Check that `m` is a valid correlation matrix: symmetric and unit-diagonal
/// within 1e-12, off-diagonals strictly inside (-1, 1), and positive
/// semi-definite up to a -1e-10 eigenvalue tolerance (established by
/// attempted factorization rather than an eigendecomposition).
pub fn validate_correlation_matrix(m: &DMatrix<f64>) -> Result<()> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "correlation matrix must be square, got {}x{}",
            d,
            m.ncols()
        )));
    }
    let mut worst = (0usize, 0usize, 0.0f64);
    for i in 0..d {
        for j in (i + 1)..d {
            let asym = (m[(i, j)] - m[(j, i)]).abs();
            if asym > worst.2 {
                worst = (i, j, asym);
            }
        }
    }
    if worst.2 > SYMMETRY_TOL {
        return Err(Error::NotSymmetric {
            row: worst.0,
            col: worst.1,
            max_asymmetry: worst.2,
        });
    }
    for i in 0..d {
        let v = m[(i, i)];
        if !v.is_finite() || (v - 1.0).abs() > DIAGONAL_TOL {
            return Err(Error::NonUnitDiagonal { index: i, value: v });
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let v = m[(i, j)];
            if !v.is_finite() || v.abs() >= 1.0 {
                return Err(Error::DegenerateCorrelation(format!(
                    "off-diagonal entry ({i}, {j}) = {v} must lie strictly inside (-1, 1)"
                )));
            }
        }
    }
    let sym = 0.5 * (m + m.transpose());
    cholesky_with_jitter(&sym, PSD_JITTER_CAP).map_err(|_| Error::NotPositiveSemiDefinite {
        max_jitter: PSD_JITTER_CAP,
    })?;
    Ok(())
}
