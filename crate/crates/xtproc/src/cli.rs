//! Command-line front end: flag parsing, config-file merging, validation,
//! and dispatch into the library.
//!
//! Every numeric field is validated against its owning module's
//! preconditions before any computation starts; validation failures are
//! usage errors (exit 2). A metadata sidecar echoes the fully resolved
//! configuration, and feeding that echo back through `--config` reproduces
//! the identical run. Flags override config-file values; `XTPROC_*`
//! environment variables override built-in defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dependence::{
    exponent_function, extremal_coefficient, extremal_t_cdf, QmcSettings,
};
use crate::error::{Error, Result};
use crate::io::{
    read_correlation_matrix_csv, read_sites_csv, write_json_pretty, write_mda_report_csv,
    write_replicates_csv,
};
use crate::mda::{default_grid, run_mda_check};
use crate::model::{
    build_correlation_matrix, validate_correlation_matrix, CorrelationModel, CorrelationSpec,
    SpectralSettings, TailIndex, DEFAULT_MAX_POINTS, DEFAULT_TRUNCATION_GAUSSIAN,
    DEFAULT_TRUNCATION_T,
};
use crate::samplers::{RandomStream, GENERATOR_NAME};
use crate::spectral::{
    estimate_spectral_moment_mc, SpectralMoment, SpectralMomentMethod, SpectralSimulator,
    DEFAULT_MOMENT_DRAWS,
};

/// Stream id reserved for the spectral-moment estimation draw; replicates
/// use ids 0..replicates. u64::MAX keeps the namespaces disjoint.
const MOMENT_STREAM_ID: u64 = u64::MAX;

/// A configuration or flag problem; maps to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "xtproc",
    version,
    about = "Extremal t max-stable processes: spectral simulation, dependence \
             functions, extremal coefficients, and domain-of-attraction checks"
)]
pub struct Cli {
    /// Worker threads for replicate-level parallelism (default: all cores).
    #[arg(long, global = true, env = "XTPROC_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Subcommand, Debug)]
pub enum CliCommand {
    /// Simulate extremal t field replicates (Gaussian spectral construction)
    Simulate(SimulateArgs),
    /// Simulate extremal t vectors with elliptical t spectral vectors
    SimulateMv(SimulateMvArgs),
    /// Evaluate the dependence function M(z)
    Exponent(ExponentArgs),
    /// Evaluate the extremal coefficient M(1,...,1)
    ExtremalCoeff(ExtremalCoeffArgs),
    /// Evaluate the extremal t CDF P(Z <= z)
    Cdf(CdfArgs),
    /// Estimate the spectral moment E[(max(T,0))^alpha] by Monte Carlo
    MAlpha(MAlphaArgs),
    /// Check convergence of normalized block maxima to the extremal t law
    MdaCheck(MdaCheckArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct CorrelationArgs {
    /// Parametric family: exponential | gaussian | powered-exponential
    #[arg(long, value_name = "FAMILY", env = "XTPROC_CORR")]
    pub corr: Option<String>,
    /// Range parameter of the parametric family
    #[arg(long, env = "XTPROC_RANGE")]
    pub range: Option<f64>,
    /// Power parameter, only for powered-exponential (in (0, 2])
    #[arg(long, env = "XTPROC_POWER")]
    pub power: Option<f64>,
    /// Sites CSV with header id,x1,...,xp
    #[arg(long, env = "XTPROC_SITES")]
    pub sites: Option<PathBuf>,
    /// Explicit correlation matrix CSV (headerless, d rows x d columns)
    #[arg(long, env = "XTPROC_CORR_MATRIX")]
    pub corr_matrix: Option<PathBuf>,
    /// Bivariate shortcut: 2x2 correlation with this off-diagonal
    #[arg(long, env = "XTPROC_RHO", allow_hyphen_values = true)]
    pub rho: Option<f64>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct QmcArgs {
    /// Lattice size of the first QMC refinement level
    #[arg(long, env = "XTPROC_QMC_LATTICE")]
    pub qmc_lattice: Option<usize>,
    /// Number of independent QMC randomizations
    #[arg(long, env = "XTPROC_QMC_RANDOMIZATIONS")]
    pub qmc_randomizations: Option<usize>,
    /// Target error for the multivariate t CDF
    #[arg(long, env = "XTPROC_QMC_TARGET_ERROR")]
    pub qmc_target_error: Option<f64>,
    /// Total QMC evaluation budget
    #[arg(long, env = "XTPROC_QMC_MAX_POINTS")]
    pub qmc_max_points: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct SimulateArgs {
    /// Resolved-config JSON to start from; explicit flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Tail index alpha (> 0)
    #[arg(long, env = "XTPROC_ALPHA")]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub correlation: CorrelationArgs,
    /// Truncation bound of the stopping rule
    #[arg(long, env = "XTPROC_TRUNCATION_C")]
    pub truncation_c: Option<f64>,
    /// Hard cap on Poisson points per replicate
    #[arg(long, env = "XTPROC_MAX_POINTS")]
    pub max_points: Option<usize>,
    /// Number of replicates
    #[arg(long, env = "XTPROC_REPLICATES")]
    pub replicates: Option<usize>,
    /// Base seed (required: simulation runs must be reproducible)
    #[arg(long, env = "XTPROC_SEED")]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, env = "XTPROC_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct SimulateMvArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Tail index alpha (> 0, strictly below --spectral-nu)
    #[arg(long, env = "XTPROC_ALPHA")]
    pub alpha: Option<f64>,
    /// Degrees of freedom of the elliptical t spectral vectors
    #[arg(long, env = "XTPROC_SPECTRAL_NU")]
    pub spectral_nu: Option<f64>,
    #[command(flatten)]
    pub correlation: CorrelationArgs,
    /// Monte Carlo draws for the spectral-moment estimate
    #[arg(long, env = "XTPROC_M_ALPHA_DRAWS")]
    pub m_alpha_draws: Option<usize>,
    #[arg(long, env = "XTPROC_TRUNCATION_C")]
    pub truncation_c: Option<f64>,
    #[arg(long, env = "XTPROC_MAX_POINTS")]
    pub max_points: Option<usize>,
    #[arg(long, env = "XTPROC_REPLICATES")]
    pub replicates: Option<usize>,
    #[arg(long, env = "XTPROC_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "XTPROC_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct ExponentArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "XTPROC_ALPHA")]
    pub alpha: Option<f64>,
    /// Evaluation point, comma separated (e.g. --z 1,1)
    #[arg(long, value_delimiter = ',', env = "XTPROC_Z")]
    pub z: Vec<f64>,
    #[command(flatten)]
    pub correlation: CorrelationArgs,
    #[command(flatten)]
    pub qmc: QmcArgs,
    /// Evaluation seed for the QMC randomization (deterministic default 0)
    #[arg(long, env = "XTPROC_SEED")]
    pub seed: Option<u64>,
    /// Optional output directory for result.json and metadata
    #[arg(long, env = "XTPROC_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct ExtremalCoeffArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "XTPROC_ALPHA")]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub correlation: CorrelationArgs,
    #[command(flatten)]
    pub qmc: QmcArgs,
    #[arg(long, env = "XTPROC_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "XTPROC_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct CdfArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "XTPROC_ALPHA")]
    pub alpha: Option<f64>,
    /// Evaluation point, strictly positive, comma separated
    #[arg(long, value_delimiter = ',', env = "XTPROC_Z")]
    pub z: Vec<f64>,
    #[command(flatten)]
    pub correlation: CorrelationArgs,
    #[command(flatten)]
    pub qmc: QmcArgs,
    #[arg(long, env = "XTPROC_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "XTPROC_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct MAlphaArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "XTPROC_ALPHA")]
    pub alpha: Option<f64>,
    #[arg(long, env = "XTPROC_SPECTRAL_NU")]
    pub spectral_nu: Option<f64>,
    /// Monte Carlo draw count (>= 10000)
    #[arg(long, env = "XTPROC_DRAWS")]
    pub draws: Option<usize>,
    #[arg(long, env = "XTPROC_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "XTPROC_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct MdaCheckArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Degrees of freedom of the t process (equals the limit tail index)
    #[arg(long, env = "XTPROC_NU")]
    pub nu: Option<f64>,
    #[command(flatten)]
    pub correlation: CorrelationArgs,
    /// Block size n
    #[arg(long, env = "XTPROC_BLOCK_SIZE")]
    pub block_size: Option<usize>,
    #[arg(long, env = "XTPROC_REPLICATES")]
    pub replicates: Option<usize>,
    /// Evaluation grid: points separated by ';', coordinates by ','
    /// (e.g. --grid "0.5,0.5;1,1;2,2"); default is the tensor grid
    /// {0.5,1,2}^d for d <= 3
    #[arg(long, env = "XTPROC_GRID")]
    pub grid: Option<String>,
    #[command(flatten)]
    pub qmc: QmcArgs,
    #[arg(long, env = "XTPROC_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "XTPROC_OUT")]
    pub out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Resolved configuration
// ---------------------------------------------------------------------------

/// Correlation structure of a resolved run.
#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CorrelationConfig {
    Parametric {
        family: String,
        range: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        power: Option<f64>,
        sites: PathBuf,
    },
    MatrixFile {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sites: Option<PathBuf>,
    },
    Rho { rho: f64 },
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug)]
pub struct QmcConfig {
    pub lattice_size: usize,
    pub randomizations: usize,
    pub target_error: f64,
    pub max_points: usize,
}

impl Default for QmcConfig {
    fn default() -> Self {
        let q = QmcSettings::default();
        QmcConfig {
            lattice_size: q.lattice_size,
            randomizations: q.randomizations,
            target_error: q.target_error,
            max_points: q.max_points,
        }
    }
}

impl QmcConfig {
    fn settings(&self, seed: u64) -> QmcSettings {
        QmcSettings {
            lattice_size: self.lattice_size,
            randomizations: self.randomizations,
            target_error: self.target_error,
            max_points: self.max_points,
            seed,
        }
    }
}

/// Fully resolved, validated run configuration. Serialized into the
/// metadata sidecar; loading it back reproduces the identical run.
#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Simulate {
        alpha: f64,
        correlation: CorrelationConfig,
        truncation_c: f64,
        max_points: usize,
        replicates: usize,
        seed: u64,
        out: PathBuf,
    },
    SimulateMv {
        alpha: f64,
        spectral_nu: f64,
        correlation: CorrelationConfig,
        m_alpha_draws: usize,
        truncation_c: f64,
        max_points: usize,
        replicates: usize,
        seed: u64,
        out: PathBuf,
    },
    Exponent {
        alpha: f64,
        z: Vec<f64>,
        correlation: CorrelationConfig,
        qmc: QmcConfig,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        out: Option<PathBuf>,
    },
    ExtremalCoeff {
        alpha: f64,
        correlation: CorrelationConfig,
        qmc: QmcConfig,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        out: Option<PathBuf>,
    },
    Cdf {
        alpha: f64,
        z: Vec<f64>,
        correlation: CorrelationConfig,
        qmc: QmcConfig,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        out: Option<PathBuf>,
    },
    MAlpha {
        alpha: f64,
        spectral_nu: f64,
        draws: usize,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        out: Option<PathBuf>,
    },
    MdaCheck {
        nu: f64,
        correlation: CorrelationConfig,
        block_size: usize,
        replicates: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<Vec<Vec<f64>>>,
        qmc: QmcConfig,
        seed: u64,
        out: PathBuf,
    },
}

impl RunConfig {
    pub fn command_name(&self) -> &'static str {
        match self {
            RunConfig::Simulate { .. } => "simulate",
            RunConfig::SimulateMv { .. } => "simulate-mv",
            RunConfig::Exponent { .. } => "exponent",
            RunConfig::ExtremalCoeff { .. } => "extremal-coeff",
            RunConfig::Cdf { .. } => "cdf",
            RunConfig::MAlpha { .. } => "m-alpha",
            RunConfig::MdaCheck { .. } => "mda-check",
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing and merging
// ---------------------------------------------------------------------------

type UResult<T> = std::result::Result<T, UsageError>;

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

fn require<T>(flag: Option<T>, file: Option<T>, name: &str) -> UResult<T> {
    flag.or(file)
        .ok_or_else(|| usage(format!("missing required value for `{name}`")))
}

fn defaulted<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Load a RunConfig from a JSON file; a metadata sidecar (with the config
/// under a `config` key) is accepted directly.
fn load_config_file(path: &Path) -> UResult<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    if let Ok(cfg) = serde_json::from_str::<RunConfig>(&text) {
        return Ok(cfg);
    }
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    if let Some(inner) = value.get("config") {
        return serde_json::from_value(inner.clone())
            .map_err(|e| usage(format!("config {}: bad `config` object: {e}", path.display())));
    }
    Err(usage(format!(
        "config {} does not contain a recognizable run configuration",
        path.display()
    )))
}

struct FileCorrelation {
    family: Option<String>,
    range: Option<f64>,
    power: Option<f64>,
    sites: Option<PathBuf>,
    matrix: Option<PathBuf>,
    rho: Option<f64>,
}

impl FileCorrelation {
    fn none() -> Self {
        FileCorrelation {
            family: None,
            range: None,
            power: None,
            sites: None,
            matrix: None,
            rho: None,
        }
    }

    fn from_config(c: &CorrelationConfig) -> Self {
        match c {
            CorrelationConfig::Parametric {
                family,
                range,
                power,
                sites,
            } => FileCorrelation {
                family: Some(family.clone()),
                range: Some(*range),
                power: *power,
                sites: Some(sites.clone()),
                matrix: None,
                rho: None,
            },
            CorrelationConfig::MatrixFile { path, sites } => FileCorrelation {
                family: None,
                range: None,
                power: None,
                sites: sites.clone(),
                matrix: Some(path.clone()),
                rho: None,
            },
            CorrelationConfig::Rho { rho } => FileCorrelation {
                family: None,
                range: None,
                power: None,
                sites: None,
                matrix: None,
                rho: Some(*rho),
            },
        }
    }
}

fn merge_correlation(args: &CorrelationArgs, file: FileCorrelation) -> UResult<CorrelationConfig> {
    // An explicit flag choosing one form silences the config file's choice.
    let flag_form_given = args.corr.is_some() || args.corr_matrix.is_some() || args.rho.is_some();
    let (family, range, power, sites, matrix, rho) = if flag_form_given {
        (
            args.corr.clone(),
            args.range,
            args.power,
            args.sites.clone().or(file.sites.clone()),
            args.corr_matrix.clone(),
            args.rho,
        )
    } else {
        (
            file.family,
            args.range.or(file.range),
            args.power.or(file.power),
            args.sites.clone().or(file.sites),
            file.matrix,
            file.rho,
        )
    };
    let forms = [family.is_some(), matrix.is_some(), rho.is_some()];
    match forms.iter().filter(|&&b| b).count() {
        0 => Err(usage(
            "a correlation structure is required: one of `--corr`, `--corr-matrix`, `--rho`",
        )),
        1 => {
            if let Some(family) = family {
                let range =
                    range.ok_or_else(|| usage("`--range` is required with `--corr`"))?;
                if !(range > 0.0) || !range.is_finite() {
                    return Err(usage(format!("`--range` must be positive, got {range}")));
                }
                match family.as_str() {
                    "exponential" | "gaussian" => {
                        if power.is_some() {
                            return Err(usage(format!(
                                "`--power` only applies to powered-exponential, not {family}"
                            )));
                        }
                    }
                    "powered-exponential" => {
                        let p = power
                            .ok_or_else(|| usage("`--power` is required with powered-exponential"))?;
                        if !(p > 0.0 && p <= 2.0) {
                            return Err(usage(format!("`--power` must be in (0, 2], got {p}")));
                        }
                    }
                    other => {
                        return Err(usage(format!(
                            "unknown correlation family `{other}`; expected exponential, \
                             gaussian, or powered-exponential"
                        )))
                    }
                }
                let sites = sites.ok_or_else(|| {
                    usage("`--sites` is required with a parametric correlation family")
                })?;
                Ok(CorrelationConfig::Parametric {
                    family,
                    range,
                    power,
                    sites,
                })
            } else if let Some(path) = matrix {
                Ok(CorrelationConfig::MatrixFile { path, sites })
            } else {
                let rho = rho.expect("third form");
                if !(rho > -1.0 && rho < 1.0) {
                    return Err(usage(format!("`--rho` must lie in (-1, 1), got {rho}")));
                }
                Ok(CorrelationConfig::Rho { rho })
            }
        }
        _ => Err(usage(
            "give exactly one of `--corr`, `--corr-matrix`, `--rho`",
        )),
    }
}

fn check_alpha(alpha: f64) -> UResult<f64> {
    TailIndex::new(alpha)
        .map(|t| t.value())
        .map_err(|e| usage(format!("`--alpha`: {e}")))
}

fn check_positive(name: &str, v: f64) -> UResult<f64> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(usage(format!("`{name}` must be a finite positive real, got {v}")));
    }
    Ok(v)
}

fn check_count(name: &str, v: usize) -> UResult<usize> {
    if v == 0 {
        return Err(usage(format!("`{name}` must be >= 1")));
    }
    Ok(v)
}

fn merge_qmc(args: &QmcArgs, file: Option<QmcConfig>) -> UResult<QmcConfig> {
    let base = file.unwrap_or_default();
    let cfg = QmcConfig {
        lattice_size: args.qmc_lattice.unwrap_or(base.lattice_size),
        randomizations: args.qmc_randomizations.unwrap_or(base.randomizations),
        target_error: args.qmc_target_error.unwrap_or(base.target_error),
        max_points: args.qmc_max_points.unwrap_or(base.max_points),
    };
    cfg.settings(0)
        .validate()
        .map_err(|e| usage(format!("qmc settings: {e}")))?;
    Ok(cfg)
}

fn parse_grid(text: &str) -> UResult<Vec<Vec<f64>>> {
    let mut grid = Vec::new();
    for (i, group) in text.split(';').enumerate() {
        let mut point = Vec::new();
        for field in group.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                usage(format!("`--grid`: point {i} has non-numeric coordinate {field:?}"))
            })?;
            point.push(v);
        }
        if point.is_empty() {
            return Err(usage(format!("`--grid`: point {i} is empty")));
        }
        grid.push(point);
    }
    Ok(grid)
}

/// Resolve command-line arguments (plus an optional config file) into a
/// validated [`RunConfig`].
pub fn parse_config(command: CliCommand) -> UResult<RunConfig> {
    match command {
        CliCommand::Simulate(a) => {
            let file = match &a.config {
                Some(p) => match load_config_file(p)? {
                    RunConfig::Simulate {
                        alpha,
                        correlation,
                        truncation_c,
                        max_points,
                        replicates,
                        seed,
                        out,
                    } => Some((alpha, correlation, truncation_c, max_points, replicates, seed, out)),
                    other => {
                        return Err(usage(format!(
                            "config file is for `{}`, not `simulate`",
                            other.command_name()
                        )))
                    }
                },
                None => None,
            };
            let (f_alpha, f_corr, f_trunc, f_maxp, f_reps, f_seed, f_out) = match file {
                Some((a1, c, t, m, r, s, o)) => {
                    (Some(a1), Some(c), Some(t), Some(m), Some(r), Some(s), Some(o))
                }
                None => (None, None, None, None, None, None, None),
            };
            let alpha = check_alpha(require(a.alpha, f_alpha, "--alpha")?)?;
            let correlation = merge_correlation(
                &a.correlation,
                f_corr.map(|c| FileCorrelation::from_config(&c))
                    .unwrap_or_else(FileCorrelation::none),
            )?;
            let truncation_c = check_positive(
                "--truncation-c",
                defaulted(a.truncation_c, f_trunc, DEFAULT_TRUNCATION_GAUSSIAN),
            )?;
            let max_points =
                check_count("--max-points", defaulted(a.max_points, f_maxp, DEFAULT_MAX_POINTS))?;
            let replicates = check_count("--replicates", defaulted(a.replicates, f_reps, 1))?;
            let seed = require(a.seed, f_seed, "--seed (simulation runs must be seeded)")?;
            let out = require(a.out, f_out, "--out")?;
            Ok(RunConfig::Simulate {
                alpha,
                correlation,
                truncation_c,
                max_points,
                replicates,
                seed,
                out,
            })
        }
        CliCommand::SimulateMv(a) => {
            let file = match &a.config {
                Some(p) => match load_config_file(p)? {
                    RunConfig::SimulateMv {
                        alpha,
                        spectral_nu,
                        correlation,
                        m_alpha_draws,
                        truncation_c,
                        max_points,
                        replicates,
                        seed,
                        out,
                    } => Some((
                        alpha,
                        spectral_nu,
                        correlation,
                        m_alpha_draws,
                        truncation_c,
                        max_points,
                        replicates,
                        seed,
                        out,
                    )),
                    other => {
                        return Err(usage(format!(
                            "config file is for `{}`, not `simulate-mv`",
                            other.command_name()
                        )))
                    }
                },
                None => None,
            };
            let (f_alpha, f_nu, f_corr, f_draws, f_trunc, f_maxp, f_reps, f_seed, f_out) =
                match file {
                    Some((a1, n, c, dd, t, m, r, s, o)) => (
                        Some(a1),
                        Some(n),
                        Some(c),
                        Some(dd),
                        Some(t),
                        Some(m),
                        Some(r),
                        Some(s),
                        Some(o),
                    ),
                    None => (None, None, None, None, None, None, None, None, None),
                };
            let alpha = check_alpha(require(a.alpha, f_alpha, "--alpha")?)?;
            let spectral_nu =
                check_positive("--spectral-nu", require(a.spectral_nu, f_nu, "--spectral-nu")?)?;
            if alpha >= spectral_nu {
                return Err(usage(format!(
                    "`--alpha` ({alpha}) must be strictly below `--spectral-nu` \
                     ({spectral_nu}): the spectral moment E[(X+)^alpha] is infinite otherwise"
                )));
            }
            let correlation = merge_correlation(
                &a.correlation,
                f_corr.map(|c| FileCorrelation::from_config(&c))
                    .unwrap_or_else(FileCorrelation::none),
            )?;
            let m_alpha_draws = defaulted(a.m_alpha_draws, f_draws, DEFAULT_MOMENT_DRAWS);
            if m_alpha_draws < 10_000 {
                return Err(usage(format!(
                    "`--m-alpha-draws` must be >= 10000, got {m_alpha_draws}"
                )));
            }
            let truncation_c = check_positive(
                "--truncation-c",
                defaulted(a.truncation_c, f_trunc, DEFAULT_TRUNCATION_T),
            )?;
            let max_points =
                check_count("--max-points", defaulted(a.max_points, f_maxp, DEFAULT_MAX_POINTS))?;
            let replicates = check_count("--replicates", defaulted(a.replicates, f_reps, 1))?;
            let seed = require(a.seed, f_seed, "--seed (simulation runs must be seeded)")?;
            let out = require(a.out, f_out, "--out")?;
            Ok(RunConfig::SimulateMv {
                alpha,
                spectral_nu,
                correlation,
                m_alpha_draws,
                truncation_c,
                max_points,
                replicates,
                seed,
                out,
            })
        }
        CliCommand::Exponent(a) => {
            let file = match &a.config {
                Some(p) => match load_config_file(p)? {
                    RunConfig::Exponent {
                        alpha,
                        z,
                        correlation,
                        qmc,
                        seed,
                        out,
                    } => Some((alpha, z, correlation, qmc, seed, out)),
                    other => {
                        return Err(usage(format!(
                            "config file is for `{}`, not `exponent`",
                            other.command_name()
                        )))
                    }
                },
                None => None,
            };
            let (f_alpha, f_z, f_corr, f_qmc, f_seed, f_out) = match file {
                Some((a1, z, c, q, s, o)) => (Some(a1), Some(z), Some(c), Some(q), Some(s), o),
                None => (None, None, None, None, None, None),
            };
            let alpha = check_alpha(require(a.alpha, f_alpha, "--alpha")?)?;
            let z = if a.z.is_empty() {
                f_z.ok_or_else(|| usage("missing required value for `--z`"))?
            } else {
                a.z
            };
            for (i, &v) in z.iter().enumerate() {
                if v.is_nan() || v < 0.0 {
                    return Err(usage(format!("`--z` must be >= 0 componentwise, z[{i}] = {v}")));
                }
            }
            if z.iter().all(|&v| v == 0.0) {
                return Err(usage("`--z` must not be identically zero"));
            }
            let correlation = merge_correlation(
                &a.correlation,
                f_corr.map(|c| FileCorrelation::from_config(&c))
                    .unwrap_or_else(FileCorrelation::none),
            )?;
            let qmc = merge_qmc(&a.qmc, f_qmc)?;
            let seed = defaulted(a.seed, f_seed, 0);
            Ok(RunConfig::Exponent {
                alpha,
                z,
                correlation,
                qmc,
                seed,
                out: a.out.or(f_out),
            })
        }
        CliCommand::ExtremalCoeff(a) => {
            let file = match &a.config {
                Some(p) => match load_config_file(p)? {
                    RunConfig::ExtremalCoeff {
                        alpha,
                        correlation,
                        qmc,
                        seed,
                        out,
                    } => Some((alpha, correlation, qmc, seed, out)),
                    other => {
                        return Err(usage(format!(
                            "config file is for `{}`, not `extremal-coeff`",
                            other.command_name()
                        )))
                    }
                },
                None => None,
            };
            let (f_alpha, f_corr, f_qmc, f_seed, f_out) = match file {
                Some((a1, c, q, s, o)) => (Some(a1), Some(c), Some(q), Some(s), o),
                None => (None, None, None, None, None),
            };
            let alpha = check_alpha(require(a.alpha, f_alpha, "--alpha")?)?;
            let correlation = merge_correlation(
                &a.correlation,
                f_corr.map(|c| FileCorrelation::from_config(&c))
                    .unwrap_or_else(FileCorrelation::none),
            )?;
            let qmc = merge_qmc(&a.qmc, f_qmc)?;
            let seed = defaulted(a.seed, f_seed, 0);
            Ok(RunConfig::ExtremalCoeff {
                alpha,
                correlation,
                qmc,
                seed,
                out: a.out.or(f_out),
            })
        }
        CliCommand::Cdf(a) => {
            let file = match &a.config {
                Some(p) => match load_config_file(p)? {
                    RunConfig::Cdf {
                        alpha,
                        z,
                        correlation,
                        qmc,
                        seed,
                        out,
                    } => Some((alpha, z, correlation, qmc, seed, out)),
                    other => {
                        return Err(usage(format!(
                            "config file is for `{}`, not `cdf`",
                            other.command_name()
                        )))
                    }
                },
                None => None,
            };
            let (f_alpha, f_z, f_corr, f_qmc, f_seed, f_out) = match file {
                Some((a1, z, c, q, s, o)) => (Some(a1), Some(z), Some(c), Some(q), Some(s), o),
                None => (None, None, None, None, None, None),
            };
            let alpha = check_alpha(require(a.alpha, f_alpha, "--alpha")?)?;
            let z = if a.z.is_empty() {
                f_z.ok_or_else(|| usage("missing required value for `--z`"))?
            } else {
                a.z
            };
            for (i, &v) in z.iter().enumerate() {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(usage(format!(
                        "`--z` must be strictly positive componentwise for cdf, z[{i}] = {v}"
                    )));
                }
            }
            let correlation = merge_correlation(
                &a.correlation,
                f_corr.map(|c| FileCorrelation::from_config(&c))
                    .unwrap_or_else(FileCorrelation::none),
            )?;
            let qmc = merge_qmc(&a.qmc, f_qmc)?;
            let seed = defaulted(a.seed, f_seed, 0);
            Ok(RunConfig::Cdf {
                alpha,
                z,
                correlation,
                qmc,
                seed,
                out: a.out.or(f_out),
            })
        }
        CliCommand::MAlpha(a) => {
            let file = match &a.config {
                Some(p) => match load_config_file(p)? {
                    RunConfig::MAlpha {
                        alpha,
                        spectral_nu,
                        draws,
                        seed,
                        out,
                    } => Some((alpha, spectral_nu, draws, seed, out)),
                    other => {
                        return Err(usage(format!(
                            "config file is for `{}`, not `m-alpha`",
                            other.command_name()
                        )))
                    }
                },
                None => None,
            };
            let (f_alpha, f_nu, f_draws, f_seed, f_out) = match file {
                Some((a1, n, d, s, o)) => (Some(a1), Some(n), Some(d), Some(s), o),
                None => (None, None, None, None, None),
            };
            let alpha = check_alpha(require(a.alpha, f_alpha, "--alpha")?)?;
            let spectral_nu =
                check_positive("--spectral-nu", require(a.spectral_nu, f_nu, "--spectral-nu")?)?;
            if alpha >= spectral_nu {
                return Err(usage(format!(
                    "`--alpha` ({alpha}) must be strictly below `--spectral-nu` ({spectral_nu})"
                )));
            }
            let draws = defaulted(a.draws, f_draws, DEFAULT_MOMENT_DRAWS);
            if draws < 10_000 {
                return Err(usage(format!("`--draws` must be >= 10000, got {draws}")));
            }
            let seed = require(a.seed, f_seed, "--seed (simulation runs must be seeded)")?;
            Ok(RunConfig::MAlpha {
                alpha,
                spectral_nu,
                draws,
                seed,
                out: a.out.or(f_out),
            })
        }
        CliCommand::MdaCheck(a) => {
            let file = match &a.config {
                Some(p) => match load_config_file(p)? {
                    RunConfig::MdaCheck {
                        nu,
                        correlation,
                        block_size,
                        replicates,
                        grid,
                        qmc,
                        seed,
                        out,
                    } => Some((nu, correlation, block_size, replicates, grid, qmc, seed, out)),
                    other => {
                        return Err(usage(format!(
                            "config file is for `{}`, not `mda-check`",
                            other.command_name()
                        )))
                    }
                },
                None => None,
            };
            let (f_nu, f_corr, f_block, f_reps, f_grid, f_qmc, f_seed, f_out) = match file {
                Some((n, c, b, r, g, q, s, o)) => {
                    (Some(n), Some(c), Some(b), Some(r), g, Some(q), Some(s), Some(o))
                }
                None => (None, None, None, None, None, None, None, None),
            };
            let nu = check_positive("--nu", require(a.nu, f_nu, "--nu")?)?;
            let correlation = merge_correlation(
                &a.correlation,
                f_corr.map(|c| FileCorrelation::from_config(&c))
                    .unwrap_or_else(FileCorrelation::none),
            )?;
            let block_size =
                check_count("--block-size", require(a.block_size, f_block, "--block-size")?)?;
            let replicates =
                check_count("--replicates", require(a.replicates, f_reps, "--replicates")?)?;
            let grid = match &a.grid {
                Some(text) => Some(parse_grid(text)?),
                None => f_grid,
            };
            if let Some(g) = &grid {
                for (i, point) in g.iter().enumerate() {
                    if point.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                        return Err(usage(format!(
                            "`--grid`: point {i} must be strictly positive"
                        )));
                    }
                }
            }
            let qmc = merge_qmc(&a.qmc, f_qmc)?;
            let seed = require(a.seed, f_seed, "--seed (simulation runs must be seeded)")?;
            let out = require(a.out, f_out, "--out")?;
            Ok(RunConfig::MdaCheck {
                nu,
                correlation,
                block_size,
                replicates,
                grid,
                qmc,
                seed,
                out,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct MomentEcho {
    value: f64,
    std_error: f64,
    method: &'static str,
}

impl From<SpectralMoment> for MomentEcho {
    fn from(m: SpectralMoment) -> Self {
        MomentEcho {
            value: m.value,
            std_error: m.std_error,
            method: match m.method {
                SpectralMomentMethod::Analytic => "analytic",
                SpectralMomentMethod::MonteCarlo => "monte_carlo",
            },
        }
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    generator: &'static str,
    seed: u64,
    wall_time_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectral_moment: Option<MomentEcho>,
    outputs: Vec<String>,
    config: &'a RunConfig,
}

fn write_metadata(
    dir: &Path,
    config: &RunConfig,
    seed: u64,
    started: Instant,
    moment: Option<SpectralMoment>,
    outputs: &[&str],
) -> Result<()> {
    let meta = Metadata {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: config.command_name(),
        generator: GENERATOR_NAME,
        seed,
        wall_time_secs: started.elapsed().as_secs_f64(),
        spectral_moment: moment.map(MomentEcho::from),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
        config,
    };
    write_json_pretty(&dir.join("metadata.json"), &meta)
}

/// Build the correlation matrix described by a resolved config.
fn resolve_correlation(c: &CorrelationConfig) -> Result<DMatrix<f64>> {
    match c {
        CorrelationConfig::Parametric {
            family,
            range,
            power,
            sites,
        } => {
            let sites = read_sites_csv(sites)?;
            let model = match family.as_str() {
                "exponential" => CorrelationModel::exponential(*range)?,
                "gaussian" => CorrelationModel::gaussian(*range)?,
                "powered-exponential" => CorrelationModel::powered_exponential(
                    *range,
                    power.ok_or_else(|| {
                        Error::Domain("powered-exponential needs a power".into())
                    })?,
                )?,
                other => {
                    return Err(Error::Domain(format!(
                        "unknown correlation family `{other}`"
                    )))
                }
            };
            build_correlation_matrix(&CorrelationSpec::Model(model), &sites)
        }
        CorrelationConfig::MatrixFile { path, sites } => {
            let m = read_correlation_matrix_csv(path)?;
            if let Some(sites_path) = sites {
                let sites = read_sites_csv(sites_path)?;
                return build_correlation_matrix(&CorrelationSpec::Matrix(m), &sites);
            }
            validate_correlation_matrix(&m)?;
            Ok(m)
        }
        CorrelationConfig::Rho { rho } => {
            let m = DMatrix::from_row_slice(2, 2, &[1.0, *rho, *rho, 1.0]);
            validate_correlation_matrix(&m)?;
            Ok(m)
        }
    }
}

#[derive(Serialize)]
struct ScalarResult<'a> {
    command: &'static str,
    value: f64,
    error_estimate: f64,
    points_used: usize,
    inputs: &'a RunConfig,
}

fn emit_scalar(
    config: &RunConfig,
    value: f64,
    error_estimate: f64,
    points_used: usize,
    out: &Option<PathBuf>,
    seed: u64,
    started: Instant,
) -> Result<()> {
    let result = ScalarResult {
        command: config.command_name(),
        value,
        error_estimate,
        points_used,
        inputs: config,
    };
    println!("{}", serde_json::to_string_pretty(&result)?);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json_pretty(&dir.join("result.json"), &result)?;
        write_metadata(dir, config, seed, started, None, &["result.json"])?;
    }
    Ok(())
}

/// Execute a resolved configuration. Returns the process exit code:
/// 0 for success, 1 when an mda-check band fails.
pub fn run(config: &RunConfig) -> Result<i32> {
    let started = Instant::now();
    match config {
        RunConfig::Simulate {
            alpha,
            correlation,
            truncation_c,
            max_points,
            replicates,
            seed,
            out,
        } => {
            let corr = resolve_correlation(correlation)?;
            let sim = SpectralSimulator::gaussian_from_matrix(TailIndex::new(*alpha)?, &corr)?;
            let settings = SpectralSettings {
                truncation_c: *truncation_c,
                max_points: *max_points,
                replicates: *replicates,
                seed: *seed,
            };
            let reps = sim.simulate_batch(&settings)?;
            fs::create_dir_all(out)?;
            write_replicates_csv(&out.join("replicates.csv"), &reps)?;
            write_metadata(
                out,
                config,
                *seed,
                started,
                Some(sim.spectral_moment()),
                &["replicates.csv"],
            )?;
            let truncated = reps.iter().filter(|r| r.truncation_triggered).count();
            eprintln!(
                "simulate: {} replicates, {} truncated, wrote {}",
                reps.len(),
                truncated,
                out.join("replicates.csv").display()
            );
            Ok(0)
        }
        RunConfig::SimulateMv {
            alpha,
            spectral_nu,
            correlation,
            m_alpha_draws,
            truncation_c,
            max_points,
            replicates,
            seed,
            out,
        } => {
            let corr = resolve_correlation(correlation)?;
            let tail = TailIndex::new(*alpha)?;
            let mut moment_stream = RandomStream::new(*seed, MOMENT_STREAM_ID);
            let moment =
                estimate_spectral_moment_mc(tail, *spectral_nu, *m_alpha_draws, &mut moment_stream)?;
            let sim = SpectralSimulator::elliptical_t(tail, *spectral_nu, &corr, moment)?;
            let settings = SpectralSettings {
                truncation_c: *truncation_c,
                max_points: *max_points,
                replicates: *replicates,
                seed: *seed,
            };
            let reps = sim.simulate_batch(&settings)?;
            fs::create_dir_all(out)?;
            write_replicates_csv(&out.join("replicates.csv"), &reps)?;
            write_metadata(out, config, *seed, started, Some(moment), &["replicates.csv"])?;
            let truncated = reps.iter().filter(|r| r.truncation_triggered).count();
            eprintln!(
                "simulate-mv: {} replicates, {} truncated, spectral moment {:.6} +- {:.2e}",
                reps.len(),
                truncated,
                moment.value,
                moment.std_error
            );
            Ok(0)
        }
        RunConfig::Exponent {
            alpha,
            z,
            correlation,
            qmc,
            seed,
            out,
        } => {
            let corr = resolve_correlation(correlation)?;
            let value = exponent_function(
                z,
                TailIndex::new(*alpha)?,
                &corr,
                &qmc.settings(*seed),
            )?;
            emit_scalar(
                config,
                value.value,
                value.error_estimate,
                value.points_used,
                out,
                *seed,
                started,
            )?;
            Ok(0)
        }
        RunConfig::ExtremalCoeff {
            alpha,
            correlation,
            qmc,
            seed,
            out,
        } => {
            let corr = resolve_correlation(correlation)?;
            let value =
                extremal_coefficient(TailIndex::new(*alpha)?, &corr, &qmc.settings(*seed))?;
            emit_scalar(
                config,
                value.value,
                value.error_estimate,
                value.points_used,
                out,
                *seed,
                started,
            )?;
            Ok(0)
        }
        RunConfig::Cdf {
            alpha,
            z,
            correlation,
            qmc,
            seed,
            out,
        } => {
            let corr = resolve_correlation(correlation)?;
            let value = extremal_t_cdf(z, TailIndex::new(*alpha)?, &corr, &qmc.settings(*seed))?;
            emit_scalar(
                config,
                value.value,
                value.error_estimate,
                value.points_used,
                out,
                *seed,
                started,
            )?;
            Ok(0)
        }
        RunConfig::MAlpha {
            alpha,
            spectral_nu,
            draws,
            seed,
            out,
        } => {
            let mut stream = RandomStream::new(*seed, 0);
            let moment =
                estimate_spectral_moment_mc(TailIndex::new(*alpha)?, *spectral_nu, *draws, &mut stream)?;
            emit_scalar(config, moment.value, moment.std_error, *draws, out, *seed, started)?;
            Ok(0)
        }
        RunConfig::MdaCheck {
            nu,
            correlation,
            block_size,
            replicates,
            grid,
            qmc,
            seed,
            out,
        } => {
            let corr = resolve_correlation(correlation)?;
            let grid = match grid {
                Some(g) => g.clone(),
                None => default_grid(corr.nrows())?,
            };
            let report = run_mda_check(
                *nu,
                &corr,
                *block_size,
                *replicates,
                &grid,
                &qmc.settings(*seed),
                *seed,
            )?;
            fs::create_dir_all(out)?;
            write_json_pretty(&out.join("report.json"), &report)?;
            write_mda_report_csv(&out.join("report.csv"), &report)?;
            write_metadata(out, config, *seed, started, None, &["report.json", "report.csv"])?;
            eprintln!(
                "mda-check: {} grid points, max |gap| = {:.4}, {}",
                report.grid.len(),
                report.max_abs_gap,
                if report.all_pass { "all within bands" } else { "BAND FAILURE" }
            );
            Ok(if report.all_pass { 0 } else { 1 })
        }
    }
}
