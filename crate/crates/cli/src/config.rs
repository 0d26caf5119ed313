//! Command-line flags, the TOML configuration file and their resolution.
//!
//! Precedence is flag, then configuration file, then built-in default. The
//! resolved settings are rendered back into the file schema for echoing.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fasm::estimator::{log_grid, AlphaMode, FasmConfig};
use fasm::sim::{Preset, ScenarioKind, ScenarioSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "fasm",
    version,
    about = "Factor-augmented smoothing of functional data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a data matrix and write coefficients, loadings, factors and curves.
    Fit(FitArgs),
    /// Run Monte-Carlo replications of a scenario or preset grid.
    Simulate(SimulateArgs),
    /// Compare model-based and sample covariance estimates.
    Covariance(CovarianceArgs),
    /// Eigenvalue scree of the smoothing residuals with a suggested factor count.
    Scree(ScreeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory receiving the output files (created if missing).
    #[arg(long = "output-dir")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV matrix with grid points as rows and subjects as columns.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// CSV with one column of grid points (default: equispaced on [0, 1]).
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// The input has subjects as rows and grid points as columns.
    #[arg(long)]
    pub transpose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKindArg {
    Fourier,
    Bspline,
    SmoothingSpline,
}

impl BasisKindArg {
    pub fn name(self) -> &'static str {
        match self {
            BasisKindArg::Fourier => "fourier",
            BasisKindArg::Bspline => "bspline",
            BasisKindArg::SmoothingSpline => "smoothing-spline",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BasisArgs {
    #[arg(long, value_enum)]
    pub basis: Option<BasisKindArg>,
    /// Number of basis functions (fourier: odd; bspline: at least the order).
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// B-spline order (4 = cubic).
    #[arg(long)]
    pub order: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimatorArgs {
    /// Number of latent factors.
    #[arg(long)]
    pub r: Option<usize>,
    /// Fixed tuning value instead of an mGCV search.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Log-spaced mGCV search grid as `min:max:count`.
    #[arg(long = "alpha-grid")]
    pub alpha_grid: Option<String>,
    /// Convergence tolerance on the coefficient change.
    #[arg(long = "delta-tol")]
    pub delta_tol: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// Subtract the mean curve before fitting.
    #[arg(long)]
    pub center: bool,
    /// Choose α once on the unprojected problem instead of every iteration.
    #[arg(long = "fixed-alpha-per-run")]
    pub fixed_alpha_per_run: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Synthetic scenario used when no input file is given.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Loading scale σ (factor scenarios) or jump size δ (step-jump).
    #[arg(long)]
    pub param: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "noise-sd")]
    pub noise_sd: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Named scenario grid: table1, table2, table3, table4 or misspec.
    #[arg(long)]
    pub preset: Option<String>,
    /// Replications per cell; replication t uses seed + t.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Also write every generated data set under `data/`.
    #[arg(long = "emit-data")]
    pub emit_data: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CovarianceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ScreeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Largest factor count considered.
    #[arg(long = "r-max")]
    pub r_max: Option<usize>,
}

/// On-disk configuration; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub basis: BasisSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub scree: ScreeSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transpose: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<BasisKindArg>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<bool>,
    /// `"reselect"` (default) or `"fixed"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_mode: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emit_data: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreeSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<usize>,
}

pub fn load_file(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
}

pub const DEFAULT_OUTPUT_DIR: &str = "fasm-out";
pub const DEFAULT_ORDER: usize = 4;
pub const DEFAULT_SEED: u64 = 1000;
pub const DEFAULT_REPS: usize = 100;
pub const DEFAULT_R_MAX: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct BasisChoice {
    pub kind: BasisKindArg,
    pub k: Option<usize>,
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataChoice {
    pub input: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub transpose: bool,
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub output_dir: PathBuf,
    pub data: DataChoice,
    pub basis: BasisChoice,
    pub fasm: FasmConfig,
    /// `None` means the command picks its own default factor count.
    pub r: Option<usize>,
    pub alpha_fixed: Option<f64>,
    pub alpha_grid_text: String,
    pub scenario: ScenarioSpec,
    pub preset: Option<Preset>,
    pub reps: usize,
    pub emit_data: bool,
    pub r_max: Option<usize>,
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

fn flag_bool(flag: bool, file: Option<bool>) -> bool {
    flag || file.unwrap_or(false)
}

/// Parse `min:max:count` into a log-spaced grid.
pub fn parse_alpha_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || {
        CliError::Config(format!(
            "alpha grid {text:?} must look like min:max:count with 0 < min <= max"
        ))
    };
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) || count == 0 {
        return Err(bad());
    }
    if count > 1 && hi == lo {
        return Err(bad());
    }
    Ok(log_grid(lo.log10(), hi.log10(), count))
}

pub fn parse_scenario_kind(name: &str) -> Result<ScenarioKind> {
    ScenarioKind::from_name(name).ok_or_else(|| {
        CliError::Config(format!(
            "unknown scenario {name:?} (expected bspline-factor, fourier-factor, misspec-fourier or step-jump)"
        ))
    })
}

pub fn parse_preset(name: &str) -> Result<Preset> {
    Preset::from_name(name).ok_or_else(|| {
        CliError::Config(format!(
            "unknown preset {name:?} (expected table1, table2, table3, table4 or misspec)"
        ))
    })
}

pub struct FlagSet<'a> {
    pub common: &'a CommonArgs,
    pub data: Option<&'a DataArgs>,
    pub basis: Option<&'a BasisArgs>,
    pub estimator: &'a EstimatorArgs,
    pub scenario: Option<&'a ScenarioArgs>,
    pub preset: Option<&'a str>,
    pub reps: Option<usize>,
    pub emit_data: bool,
    pub r_max: Option<usize>,
}

pub fn resolve(flags: &FlagSet<'_>, file: &FileConfig) -> Result<Resolved> {
    let output_dir = pick(flags.common.output_dir.clone(), file.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));

    let (input, grid, transpose) = match flags.data {
        Some(d) => (d.input.clone(), d.grid.clone(), d.transpose),
        None => (None, None, false),
    };
    let data = DataChoice {
        input: pick(input, file.data.input.clone()),
        grid: pick(grid, file.data.grid.clone()),
        transpose: flag_bool(transpose, file.data.transpose),
    };

    let (bk, bn, bo) = match flags.basis {
        Some(b) => (b.basis, b.k, b.order),
        None => (None, None, None),
    };
    let basis = BasisChoice {
        kind: pick(bk, file.basis.kind).unwrap_or(BasisKindArg::SmoothingSpline),
        k: pick(bn, file.basis.k),
        order: pick(bo, file.basis.order).unwrap_or(DEFAULT_ORDER),
    };

    let est = flags.estimator;
    let fe = &file.estimator;
    // A fixed α and a search grid at the same level conflict; a flag of
    // either kind overrides both file keys.
    if est.alpha.is_some() && est.alpha_grid.is_some() {
        return Err(CliError::Config(
            "give either --alpha or --alpha-grid, not both".into(),
        ));
    }
    let (alpha_fixed, grid_text) = if est.alpha.is_some() || est.alpha_grid.is_some() {
        (est.alpha, est.alpha_grid.clone())
    } else {
        if fe.alpha.is_some() && fe.alpha_grid.is_some() {
            return Err(CliError::Config(
                "configuration sets both estimator.alpha and estimator.alpha_grid".into(),
            ));
        }
        (fe.alpha, fe.alpha_grid.clone())
    };
    let defaults = FasmConfig::default();
    let alpha_grid_text = grid_text.unwrap_or_else(|| "1e-6:1e4:41".to_string());
    let alpha_grid = match alpha_fixed {
        Some(a) => {
            if !(a.is_finite() && a > 0.0) {
                return Err(CliError::Config(format!("alpha must be positive, got {a}")));
            }
            vec![a]
        }
        None => parse_alpha_grid(&alpha_grid_text)?,
    };
    let alpha_mode = if est.fixed_alpha_per_run {
        AlphaMode::FixedPerRun
    } else {
        match fe.alpha_mode.as_deref() {
            None | Some("reselect") => AlphaMode::ReselectEachIteration,
            Some("fixed") => AlphaMode::FixedPerRun,
            Some(other) => {
                return Err(CliError::Config(format!(
                    "estimator.alpha_mode must be \"reselect\" or \"fixed\", got {other:?}"
                )))
            }
        }
    };
    let r = pick(est.r, fe.r);
    let fasm = FasmConfig {
        r: r.unwrap_or(0),
        alpha_grid,
        delta: pick(est.delta_tol, fe.delta_tol).unwrap_or(defaults.delta),
        max_iter: pick(est.max_iter, fe.max_iter).unwrap_or(defaults.max_iter),
        center: flag_bool(est.center, fe.center),
        alpha_mode,
    };
    fasm.validate()?;

    let fs = &file.scenario;
    let (sk, sn, sp, sparam, sseed, snoise) = match flags.scenario {
        Some(s) => (s.scenario.clone(), s.n, s.p, s.param, s.seed, s.noise_sd),
        None => (None, None, None, None, None, None),
    };
    let kind = parse_scenario_kind(
        &pick(sk, fs.kind.clone()).unwrap_or_else(|| "bspline-factor".to_string()),
    )?;
    let mut scenario = ScenarioSpec::new(
        kind,
        pick(sn, fs.n).unwrap_or(20),
        pick(sp, fs.p).unwrap_or(51),
        pick(sparam, fs.param).unwrap_or(1.0),
        pick(sseed, fs.seed).unwrap_or(DEFAULT_SEED),
    );
    if let Some(sd) = pick(snoise, fs.noise_sd) {
        scenario = scenario.with_noise_sd(sd);
    }

    let preset = match pick(
        flags.preset.map(str::to_string),
        file.simulate.preset.clone(),
    ) {
        Some(name) => Some(parse_preset(&name)?),
        None => None,
    };
    let reps = pick(flags.reps, file.simulate.reps).unwrap_or(DEFAULT_REPS);
    if reps == 0 {
        return Err(CliError::Config("reps must be at least 1".into()));
    }

    Ok(Resolved {
        output_dir,
        data,
        basis,
        fasm,
        r,
        alpha_fixed,
        alpha_grid_text,
        scenario,
        preset,
        reps,
        emit_data: flag_bool(flags.emit_data, file.simulate.emit_data),
        r_max: pick(flags.r_max, file.scree.r_max),
    })
}

impl Resolved {
    /// The resolved settings in configuration-file form.
    pub fn to_file_config(&self) -> FileConfig {
        let (alpha, alpha_grid) = match self.alpha_fixed {
            Some(a) => (Some(a), None),
            None => (None, Some(self.alpha_grid_text.clone())),
        };
        FileConfig {
            output_dir: Some(self.output_dir.clone()),
            data: DataSection {
                input: self.data.input.clone(),
                grid: self.data.grid.clone(),
                transpose: Some(self.data.transpose),
            },
            basis: BasisSection {
                kind: Some(self.basis.kind),
                k: self.basis.k,
                order: Some(self.basis.order),
            },
            estimator: EstimatorSection {
                r: self.r,
                alpha,
                alpha_grid,
                delta_tol: Some(self.fasm.delta),
                max_iter: Some(self.fasm.max_iter),
                center: Some(self.fasm.center),
                alpha_mode: Some(
                    match self.fasm.alpha_mode {
                        AlphaMode::FixedPerRun => "fixed",
                        AlphaMode::ReselectEachIteration => "reselect",
                    }
                    .to_string(),
                ),
            },
            scenario: ScenarioSection {
                kind: Some(self.scenario.kind.name().to_string()),
                n: Some(self.scenario.n),
                p: Some(self.scenario.p),
                param: Some(self.scenario.param),
                seed: Some(self.scenario.seed),
                noise_sd: Some(self.scenario.noise_sd),
            },
            simulate: SimulateSection {
                preset: self.preset.map(|p| p.name().to_string()),
                reps: Some(self.reps),
                emit_data: Some(self.emit_data),
            },
            scree: ScreeSection { r_max: self.r_max },
        }
    }

    pub fn echo(&self) -> String {
        toml::to_string(&self.to_file_config()).unwrap_or_default()
    }
}
