//! Synthetic functional data and the Monte-Carlo harness.
//!
//! Every generator is driven by a ChaCha20 stream cipher keyed by the
//! scenario seed, with one stream per random array, so a `(kind, n, p,
//! parameter, seed)` tuple always yields the same bits on every platform.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::basis::{
    equispaced_grid, equispaced_knots, make_bspline_basis, make_fourier_basis,
    make_smoothing_spline_basis, BasisSystem, FourierScale, Interval, PenaltyMatrix,
};
use crate::covariance::{
    entrywise_mse, fasm_covariance, sample_covariance, CovarianceEstimate, PopulationTruth,
};
use crate::error::{FasmError, Result};
use crate::estimator::{fit_fasm_with_design, FasmConfig, FasmFit};

const STREAM_COEF: u64 = 1;
const STREAM_LOADING: u64 = 2;
const STREAM_FACTOR: u64 = 3;
const STREAM_NOISE: u64 = 4;

/// Standard deviation of the generator's smoothing coefficients.
const COEF_SD: f64 = 1.5;
const MISSPEC_COEF_SD: f64 = 0.5;
/// Standard deviation of the factor values `F_kj`.
const FACTOR_SD: f64 = 0.5;
const N_FACTORS: usize = 4;
/// Amplitude of the sine and cosine terms in the Fourier factor scenario.
pub const FOURIER_FACTOR_AMPLITUDE: f64 = 0.5;

/// Number of B-splines carrying the step-jump mean curve.
pub const STEP_MEAN_BASIS: usize = 25;
/// Width over which the mean curve rises from 10% to 90% of the jump.
pub const STEP_WIDTH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    /// Order-4 B-spline curves (`K = 13`) plus four latent factors.
    BSplineFactor,
    /// Fourier curves (`K = 9`) plus four latent factors, fitted with a
    /// smoothing spline.
    FourierFactor,
    /// Fourier curves whose frequencies double on `(0.5, 1]`, fitted with
    /// the single-frequency basis.
    MisspecFourier,
    /// Smooth curves on top of a common mean that jumps near `u = 0.5`.
    StepJump,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::BSplineFactor => "bspline-factor",
            ScenarioKind::FourierFactor => "fourier-factor",
            ScenarioKind::MisspecFourier => "misspec-fourier",
            ScenarioKind::StepJump => "step-jump",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            ScenarioKind::BSplineFactor,
            ScenarioKind::FourierFactor,
            ScenarioKind::MisspecFourier,
            ScenarioKind::StepJump,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }

    /// Factor count handed to the estimator by default.
    pub fn default_factors(self) -> usize {
        match self {
            ScenarioKind::BSplineFactor | ScenarioKind::FourierFactor => N_FACTORS,
            ScenarioKind::MisspecFourier => 6,
            // One for the level shift, one more for the largest residual
            // direction.
            ScenarioKind::StepJump => 2,
        }
    }

    fn min_points(self) -> usize {
        match self {
            ScenarioKind::BSplineFactor => 13,
            ScenarioKind::FourierFactor => 9,
            ScenarioKind::MisspecFourier | ScenarioKind::StepJump => 7,
        }
    }
}

/// Everything needed to regenerate one synthetic data set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    pub p: usize,
    /// Loading scale `σ` for the factor scenarios, jump size `δ` for the
    /// step-jump scenario, ignored for the misspecified one.
    pub param: f64,
    pub seed: u64,
    /// Standard deviation of the idiosyncratic noise.
    pub noise_sd: f64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, n: usize, p: usize, param: f64, seed: u64) -> Self {
        Self {
            kind,
            n,
            p,
            param,
            seed,
            noise_sd: 0.5,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn with_noise_sd(&self, noise_sd: f64) -> Self {
        Self {
            noise_sd,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(FasmError::InvalidConfig("scenario needs n >= 1".into()));
        }
        let min_p = self.kind.min_points();
        if self.p < min_p {
            return Err(FasmError::InvalidConfig(format!(
                "{} scenario needs p >= {min_p}, got {}",
                self.kind.name(),
                self.p
            )));
        }
        if !(self.param.is_finite() && self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(FasmError::InvalidConfig(
                "scenario parameters must be finite, noise sd nonnegative".into(),
            ));
        }
        if self.param < 0.0 && self.kind != ScenarioKind::StepJump {
            return Err(FasmError::InvalidConfig(format!(
                "loading scale must be nonnegative, got {}",
                self.param
            )));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Scenario> {
        self.validate()?;
        match self.kind {
            ScenarioKind::BSplineFactor => {
                let basis = bspline_factor_basis()?;
                factor_scenario(self, basis.clone(), basis)
            }
            ScenarioKind::FourierFactor => {
                let basis = fourier_factor_basis()?;
                let grid = equispaced_grid(self.p, Interval::unit());
                factor_scenario(self, basis, make_smoothing_spline_basis(&grid, 4)?)
            }
            ScenarioKind::MisspecFourier => misspec_scenario(self),
            ScenarioKind::StepJump => stepjump_scenario(self),
        }
    }
}

/// A generated data set together with its ground truth.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub grid: Vec<f64>,
    /// `p × n` observations.
    pub y: DMatrix<f64>,
    /// `p × n` true smooth curves (including any common mean) on the grid.
    pub x_true: DMatrix<f64>,
    /// The generating basis evaluated on the grid.
    pub design: DMatrix<f64>,
    /// The basis handed to the estimator.
    pub fit_basis: BasisSystem,
    /// Closed-form covariance parameters, when the generator has them.
    pub truth: Option<PopulationTruth>,
    /// Common mean curve on the grid (step-jump only).
    pub mean_curve: Option<DVector<f64>>,
}

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize, sd: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        sd * z
    })
}

fn draw_noise(spec: &ScenarioSpec) -> DMatrix<f64> {
    normal_matrix(
        &mut stream(spec.seed, STREAM_NOISE),
        spec.p,
        spec.n,
        spec.noise_sd,
    )
}

/// Order-4 B-splines on `[0, 1]` with 9 equispaced interior knots.
pub fn bspline_factor_basis() -> Result<BasisSystem> {
    make_bspline_basis(4, &equispaced_knots(9, Interval::unit()), Interval::unit())
}

/// The 9-term generating basis of the Fourier factor scenario: a unit
/// constant and sines and cosines of amplitude `FOURIER_FACTOR_AMPLITUDE`.
pub fn fourier_factor_basis() -> Result<BasisSystem> {
    make_fourier_basis(
        9,
        Interval::unit(),
        1.0,
        FourierScale::Amplitude(FOURIER_FACTOR_AMPLITUDE),
    )
}

/// The 7-term Fourier basis used to fit the misspecified scenario.
pub fn misspec_wrong_basis() -> Result<BasisSystem> {
    make_fourier_basis(7, Interval::unit(), 1.0, FourierScale::default())
}

/// Order-4 B-splines carrying the smooth part of the step-jump curves.
pub fn stepjump_curve_basis() -> Result<BasisSystem> {
    make_bspline_basis(4, &equispaced_knots(3, Interval::unit()), Interval::unit())
}

fn factor_scenario(
    spec: &ScenarioSpec,
    true_basis: BasisSystem,
    fit_basis: BasisSystem,
) -> Result<Scenario> {
    let (n, p) = (spec.n, spec.p);
    let grid = equispaced_grid(p, Interval::unit());
    let phi = true_basis.eval(&grid)?;
    let k = phi.ncols();

    let c = normal_matrix(&mut stream(spec.seed, STREAM_COEF), k, n, COEF_SD);
    let lambda = normal_matrix(
        &mut stream(spec.seed, STREAM_LOADING),
        N_FACTORS,
        n,
        spec.param,
    );
    let f = normal_matrix(
        &mut stream(spec.seed, STREAM_FACTOR),
        N_FACTORS,
        p,
        FACTOR_SD,
    );
    let x_true = &phi * c;
    let loadings = f.transpose();
    let eta = &loadings * lambda;
    let y = &x_true + eta + draw_noise(spec);

    let truth = PopulationTruth {
        phi: phi.clone(),
        sigma_c: DMatrix::identity(k, k) * (COEF_SD * COEF_SD),
        loadings,
        sigma_f: DMatrix::identity(N_FACTORS, N_FACTORS) * (spec.param * spec.param),
        noise_var: spec.noise_sd * spec.noise_sd,
    };
    Ok(Scenario {
        spec: spec.clone(),
        grid,
        y,
        x_true,
        design: phi,
        fit_basis,
        truth: Some(truth),
        mean_curve: None,
    })
}

/// Generate the B-spline factor scenario.
pub fn gen_bspline_factor(n: usize, p: usize, sigma: f64, seed: u64) -> Result<Scenario> {
    ScenarioSpec::new(ScenarioKind::BSplineFactor, n, p, sigma, seed).generate()
}

/// Generate the Fourier factor scenario.
pub fn gen_fourier_factor(n: usize, p: usize, sigma: f64, seed: u64) -> Result<Scenario> {
    ScenarioSpec::new(ScenarioKind::FourierFactor, n, p, sigma, seed).generate()
}

/// Generate the misspecified-basis scenario.
pub fn gen_misspec_fourier(n: usize, p: usize, seed: u64) -> Result<Scenario> {
    ScenarioSpec::new(ScenarioKind::MisspecFourier, n, p, 0.0, seed).generate()
}

/// Generate the step-jump scenario with jump size `delta`.
pub fn gen_stepjump(n: usize, p: usize, delta: f64, seed: u64) -> Result<Scenario> {
    ScenarioSpec::new(ScenarioKind::StepJump, n, p, delta, seed).generate()
}

/// The generating basis of the misspecified scenario at one point: the
/// usual amplitude-2 Fourier terms on `[0, 0.5]`, doubled frequencies after.
pub fn misspec_true_row(u: f64) -> [f64; 7] {
    use std::f64::consts::PI;
    let w = if u <= 0.5 { PI } else { 2.0 * PI };
    let mut row = [1.0; 7];
    for (k, slot) in row.iter_mut().enumerate().skip(1) {
        let idx = k + 1;
        *slot = if idx % 2 == 0 {
            2.0 * (idx as f64 * w * u).sin()
        } else {
            2.0 * ((idx - 1) as f64 * w * u).cos()
        };
    }
    row
}

fn misspec_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    let grid = equispaced_grid(spec.p, Interval::unit());
    let design = DMatrix::from_fn(spec.p, 7, |j, k| misspec_true_row(grid[j])[k]);
    let c = normal_matrix(
        &mut stream(spec.seed, STREAM_COEF),
        7,
        spec.n,
        MISSPEC_COEF_SD,
    );
    let x_true = &design * c;
    let y = &x_true + draw_noise(spec);
    Ok(Scenario {
        spec: spec.clone(),
        grid,
        y,
        x_true,
        design,
        fit_basis: misspec_wrong_basis()?,
        truth: None,
        mean_curve: None,
    })
}

/// Interior knots of the step-jump mean basis: eleven knots 0.01 apart
/// across `[0.45, 0.55]` and five evenly spread on each side, so the basis
/// can resolve a rise of width `STEP_WIDTH`.
pub fn stepjump_mean_knots() -> Vec<f64> {
    let side = (STEP_MEAN_BASIS - 4 - 11) / 2;
    let left = (1..=side).map(|i| 0.45 * i as f64 / (side + 1) as f64);
    let centre = (0..11).map(|i| 0.45 + 0.01 * i as f64);
    let right = (1..=side).map(|i| 0.55 + 0.45 * i as f64 / (side + 1) as f64);
    left.chain(centre).chain(right).collect()
}

/// Mean curve of the step-jump scenario: a B-spline combination whose
/// coefficients follow a logistic ramp through `u = 0.5`, rescaled so that
/// `μ(0) = 0` and `μ(1) = delta`.
pub fn stepjump_mean(delta: f64, points: &[f64]) -> Result<DVector<f64>> {
    let interior = stepjump_mean_knots();
    let basis = make_bspline_basis(4, &interior, Interval::unit())?;
    let coef = stepjump_mean_coefficients(delta, &interior);
    Ok(basis.eval(points)? * coef)
}

fn stepjump_mean_coefficients(delta: f64, interior: &[f64]) -> DVector<f64> {
    // Logistic scale giving a 10%-90% rise over STEP_WIDTH.
    let scale = STEP_WIDTH / (2.0 * 9f64.ln());
    let logistic = |u: f64| 1.0 / (1.0 + (-(u - 0.5) / scale).exp());
    let (lo, hi) = (logistic(0.0), logistic(1.0));
    let mut knots = vec![0.0; 4];
    knots.extend_from_slice(interior);
    knots.extend_from_slice(&[1.0; 4]);
    DVector::from_fn(STEP_MEAN_BASIS, |k, _| {
        let greville = (knots[k + 1] + knots[k + 2] + knots[k + 3]) / 3.0;
        delta * (logistic(greville) - lo) / (hi - lo)
    })
}

fn stepjump_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    let grid = equispaced_grid(spec.p, Interval::unit());
    let design = stepjump_curve_basis()?.eval(&grid)?;
    let c = normal_matrix(&mut stream(spec.seed, STREAM_COEF), 7, spec.n, COEF_SD);
    let mu = stepjump_mean(spec.param, &grid)?;
    let mut x_true = &design * c;
    for mut col in x_true.column_iter_mut() {
        col += &mu;
    }
    let y = &x_true + draw_noise(spec);
    Ok(Scenario {
        spec: spec.clone(),
        fit_basis: make_smoothing_spline_basis(&grid, 4)?,
        grid,
        y,
        x_true,
        design,
        truth: None,
        mean_curve: Some(mu),
    })
}

fn same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(FasmError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}

/// `(1/np) Σ (X - X̂)²`.
pub fn amse(x_true: &DMatrix<f64>, x_hat: &DMatrix<f64>) -> Result<f64> {
    same_shape(x_true, x_hat)?;
    if x_true.is_empty() {
        return Ok(0.0);
    }
    Ok((x_true - x_hat).norm_squared() / x_true.len() as f64)
}

/// `sqrt((1/np) Σ (Y - Ŷ)²)`.
pub fn rmse_fit(y: &DMatrix<f64>, y_hat: &DMatrix<f64>) -> Result<f64> {
    Ok(amse(y, y_hat)?.sqrt())
}

/// Estimation method compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Fasm,
    Smoothing,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Fasm => "fasm",
            Method::Smoothing => "smoothing",
        }
    }
}

/// Metrics from one replication of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub rep: usize,
    pub seed: u64,
    pub method: Method,
    pub outcome: std::result::Result<RepMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepMetrics {
    pub amse: f64,
    pub rmse: f64,
    pub df: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Model-based covariance error (per-entry), when truth exists.
    pub cov_mse: Option<f64>,
    /// Sample covariance error (per-entry), when truth exists.
    pub cov_mse_sample: Option<f64>,
}

/// Mean and standard error over the successful replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    /// `None` for an empty sample; the standard error of a single value is 0.
    pub fn of(values: &[f64]) -> Option<Self> {
        let k = values.len();
        if k == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / k as f64;
        let se = if k > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, se })
    }
}

/// Aggregated results for one method on one scenario template.
#[derive(Debug, Clone, PartialEq)]
pub struct McCell {
    pub method: Method,
    pub amse: Option<MeanSe>,
    pub rmse: Option<MeanSe>,
    pub df: Option<MeanSe>,
    pub cov_mse: Option<MeanSe>,
    pub cov_mse_sample: Option<MeanSe>,
    pub reps_ok: usize,
    pub reps_failed: usize,
    pub reps_unconverged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub template: ScenarioSpec,
    pub reps: usize,
    pub seed0: u64,
    pub cells: Vec<McCell>,
    pub records: Vec<RepRecord>,
}

impl McSummary {
    pub fn cell(&self, method: Method) -> Option<&McCell> {
        self.cells.iter().find(|c| c.method == method)
    }
}

/// Estimator settings for a Monte-Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct McOptions {
    pub methods: Vec<Method>,
    /// Used for the FASM method; the smoothing method shares its α grid.
    pub fasm: FasmConfig,
}

impl McOptions {
    pub fn for_kind(kind: ScenarioKind) -> Self {
        Self {
            methods: vec![Method::Fasm, Method::Smoothing],
            fasm: FasmConfig::with_factors(kind.default_factors()),
        }
    }
}

/// Fit one generated scenario with `method` and score it.
pub fn evaluate_method(
    scenario: &Scenario,
    phi: &DMatrix<f64>,
    penalty: &PenaltyMatrix,
    method: Method,
    fasm: &FasmConfig,
    population: Option<&CovarianceEstimate>,
) -> Result<(FasmFit, RepMetrics)> {
    let config = match method {
        Method::Fasm => fasm.clone(),
        Method::Smoothing => FasmConfig {
            r: 0,
            ..fasm.clone()
        },
    };
    let fit = fit_fasm_with_design(&scenario.y, phi, penalty, &config)?;
    let mut x_hat = phi * &fit.c_hat;
    if let Some(mean_coef) = &fit.mean_coef {
        let mean = phi * mean_coef;
        for mut col in x_hat.column_iter_mut() {
            col += &mean;
        }
    }
    let (cov_mse, cov_mse_sample) = match population {
        Some(truth) if scenario.spec.n >= 2 => {
            let model = fasm_covariance(&fit, phi)?;
            let sample = sample_covariance(&scenario.y)?;
            (
                Some(entrywise_mse(&model, truth)?),
                Some(entrywise_mse(&sample, truth)?),
            )
        }
        _ => (None, None),
    };
    let metrics = RepMetrics {
        amse: amse(&scenario.x_true, &x_hat)?,
        rmse: rmse_fit(&scenario.y, &fit.fitted_values(phi))?,
        df: fit.df,
        alpha: fit.alpha,
        iterations: fit.iterations,
        converged: fit.converged,
        cov_mse,
        cov_mse_sample,
    };
    Ok((fit, metrics))
}

/// Run `reps` replications of `template`, replication `t` using seed
/// `seed0 + t`.
pub fn run_monte_carlo(
    template: &ScenarioSpec,
    reps: usize,
    options: &McOptions,
    seed0: u64,
) -> Result<McSummary> {
    if reps == 0 {
        return Err(FasmError::InvalidConfig("reps must be at least 1".into()));
    }
    options.fasm.validate()?;
    template.validate()?;

    let mut records = Vec::with_capacity(reps * options.methods.len());
    let mut design: Option<(DMatrix<f64>, PenaltyMatrix)> = None;
    for t in 0..reps {
        let seed = seed0.wrapping_add(t as u64);
        let scenario = template.with_seed(seed).generate()?;
        // The fitting basis and grid depend only on (kind, p).
        let (phi, penalty) = design.get_or_insert_with(|| {
            let phi = scenario
                .fit_basis
                .eval(&scenario.grid)
                .expect("grid lies in the unit domain");
            (phi, scenario.fit_basis.penalty_matrix())
        });
        let population = match &scenario.truth {
            Some(truth) => Some(truth.covariance()?),
            None => None,
        };
        for &method in &options.methods {
            let outcome = evaluate_method(
                &scenario,
                phi,
                penalty,
                method,
                &options.fasm,
                population.as_ref(),
            )
            .map(|(_, m)| m)
            .map_err(|e| e.to_string());
            records.push(RepRecord {
                rep: t,
                seed,
                method,
                outcome,
            });
        }
    }

    let cells = options
        .methods
        .iter()
        .map(|&method| summarize(method, &records))
        .collect();
    Ok(McSummary {
        template: template.clone(),
        reps,
        seed0,
        cells,
        records,
    })
}

fn summarize(method: Method, records: &[RepRecord]) -> McCell {
    let ok: Vec<&RepMetrics> = records
        .iter()
        .filter(|r| r.method == method)
        .filter_map(|r| r.outcome.as_ref().ok())
        .collect();
    let failed = records
        .iter()
        .filter(|r| r.method == method && r.outcome.is_err())
        .count();
    let collect = |f: &dyn Fn(&RepMetrics) -> Option<f64>| {
        let v: Vec<f64> = ok.iter().filter_map(|m| f(m)).collect();
        MeanSe::of(&v)
    };
    McCell {
        method,
        amse: collect(&|m| Some(m.amse)),
        rmse: collect(&|m| Some(m.rmse)),
        df: collect(&|m| Some(m.df)),
        cov_mse: collect(&|m| m.cov_mse),
        cov_mse_sample: collect(&|m| m.cov_mse_sample),
        reps_ok: ok.len(),
        reps_failed: failed,
        reps_unconverged: ok.iter().filter(|m| !m.converged).count(),
    }
}

/// `(n, p)` blocks of the factor-scenario tables.
pub const TABLE_DIMENSIONS: [(usize, usize); 4] = [(20, 51), (20, 101), (50, 51), (100, 101)];
/// Loading scales of the factor-scenario tables.
pub const TABLE_SIGMAS: [f64; 3] = [0.5, 0.75, 1.0];
/// Jump sizes of the step-jump table.
pub const STEP_DELTAS: [f64; 3] = [1.0, 2.0, 3.0];
/// `(n, p)` of the step-jump runs.
pub const STEP_SIZE: (usize, usize) = (50, 101);
/// `(n, p)` of the misspecified-basis runs.
pub const MISSPEC_SIZE: (usize, usize) = (200, 51);

/// Named experiment grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Function-estimation error on the B-spline factor scenario.
    Table1,
    /// Covariance error on the same grid as `Table1`.
    Table2,
    /// Smoothing-spline fits of the Fourier factor scenario.
    Table3,
    /// Fit and flexibility on the step-jump scenario.
    Table4,
    Misspec,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Table1,
        Preset::Table2,
        Preset::Table3,
        Preset::Table4,
        Preset::Misspec,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Table1 => "table1",
            Preset::Table2 => "table2",
            Preset::Table3 => "table3",
            Preset::Table4 => "table4",
            Preset::Misspec => "misspec",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// Scenario templates of the grid, seeds left at 0.
    pub fn cells(self) -> Vec<ScenarioSpec> {
        let factor_grid = |kind| {
            TABLE_DIMENSIONS
                .iter()
                .flat_map(|&(n, p)| {
                    TABLE_SIGMAS
                        .iter()
                        .map(move |&sigma| ScenarioSpec::new(kind, n, p, sigma, 0))
                })
                .collect()
        };
        match self {
            Preset::Table1 | Preset::Table2 => factor_grid(ScenarioKind::BSplineFactor),
            Preset::Table3 => factor_grid(ScenarioKind::FourierFactor),
            Preset::Table4 => STEP_DELTAS
                .iter()
                .map(|&d| ScenarioSpec::new(ScenarioKind::StepJump, STEP_SIZE.0, STEP_SIZE.1, d, 0))
                .collect(),
            Preset::Misspec => vec![ScenarioSpec::new(
                ScenarioKind::MisspecFourier,
                MISSPEC_SIZE.0,
                MISSPEC_SIZE.1,
                0.0,
                0,
            )],
        }
    }
}

/// Mean square of `residual` over grid points in `(0.5, 1]` divided by the
/// mean square over `[0, 0.5]`.
pub fn half_ratio(residual: &DMatrix<f64>, grid: &[f64]) -> Result<f64> {
    if grid.len() != residual.nrows() {
        return Err(FasmError::DimensionMismatch(format!(
            "grid has {} points, residual has {} rows",
            grid.len(),
            residual.nrows()
        )));
    }
    let (mut lo, mut n_lo, mut hi, mut n_hi) = (0.0, 0usize, 0.0, 0usize);
    for (j, &u) in grid.iter().enumerate() {
        let ss = residual.row(j).norm_squared();
        if u <= 0.5 {
            lo += ss;
            n_lo += residual.ncols();
        } else {
            hi += ss;
            n_hi += residual.ncols();
        }
    }
    if n_lo == 0 || n_hi == 0 {
        return Err(FasmError::InvalidConfig(
            "grid must have points on both sides of 0.5".into(),
        ));
    }
    Ok((hi / n_hi as f64) / (lo / n_lo as f64))
}
