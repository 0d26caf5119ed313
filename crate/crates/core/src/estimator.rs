//! The alternating ridge / principal-component estimator.
//!
//! Given `Y = ΦC + AF' + E` with known basis matrix `Φ`, the coefficients are
//! estimated from the projected problem `M_A Y = M_A Φ C + M_A E`, where
//! `M_A = I - AA'/p` annihilates the factor term, and the loadings are the
//! leading eigenvectors of `(1/np) (Y - ΦC)(Y - ΦC)'`. The two steps are
//! alternated from `A = 0` until the coefficients stop moving.

use nalgebra::{DMatrix, DVector};

use crate::basis::{BasisSystem, PenaltyMatrix};
use crate::error::{FasmError, Result};
use crate::numerics::{check_finite, normalize_sign, solve_spd, sym_eig_desc};

/// How the tuning parameter is chosen during the alternation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaMode {
    /// Chosen once by mGCV on the initial (unprojected) problem, then held.
    FixedPerRun,
    /// Re-chosen by mGCV before every ridge step.
    ReselectEachIteration,
}

/// Estimation hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FasmConfig {
    /// Number of latent factors.
    pub r: usize,
    /// Candidate tuning values, strictly positive and ascending.
    pub alpha_grid: Vec<f64>,
    /// Convergence tolerance on the largest coefficient-column change.
    pub delta: f64,
    pub max_iter: usize,
    /// Remove per-grid-point means across subjects before fitting.
    pub center: bool,
    pub alpha_mode: AlphaMode,
}

impl Default for FasmConfig {
    fn default() -> Self {
        Self {
            r: 0,
            alpha_grid: log_grid(-6.0, 4.0, 41),
            delta: 1e-6,
            max_iter: 100,
            center: false,
            alpha_mode: AlphaMode::ReselectEachIteration,
        }
    }
}

impl FasmConfig {
    pub fn with_factors(r: usize) -> Self {
        Self {
            r,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_alpha_grid(&self.alpha_grid)?;
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(FasmError::InvalidConfig(format!(
                "convergence tolerance must be positive, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// `count` points spaced evenly in log10 between `10^lo_exp` and `10^hi_exp`.
pub fn log_grid(lo_exp: f64, hi_exp: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo_exp)],
        _ => (0..count)
            .map(|i| {
                let t = i as f64 / (count - 1) as f64;
                10f64.powf(lo_exp + t * (hi_exp - lo_exp))
            })
            .collect(),
    }
}

fn validate_alpha_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(FasmError::InvalidConfig("alpha grid is empty".into()));
    }
    if grid.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(FasmError::InvalidConfig(
            "alpha grid values must be finite and positive".into(),
        ));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(FasmError::InvalidConfig(
            "alpha grid must be strictly ascending".into(),
        ));
    }
    Ok(())
}

/// `M = I_p - AA'/p`, the projection onto the orthogonal complement of
/// `span(A)` when `A'A/p = I_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionComplement(DMatrix<f64>);

impl ProjectionComplement {
    pub fn identity(p: usize) -> Self {
        Self(DMatrix::identity(p, p))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Largest entry of `|A'A/p - I|`.
pub fn loading_constraint_error(a: &DMatrix<f64>) -> f64 {
    let p = a.nrows() as f64;
    let r = a.ncols();
    if r == 0 {
        return 0.0;
    }
    (a.transpose() * a / p - DMatrix::identity(r, r)).amax()
}

/// Build `M = I - AA'/p`. `A` may have zero columns.
pub fn projection_complement(a: &DMatrix<f64>) -> Result<ProjectionComplement> {
    let p = a.nrows();
    let err = loading_constraint_error(a);
    if err > 1e-6 {
        return Err(FasmError::LoadingConstraint(err));
    }
    let mut m = DMatrix::identity(p, p);
    if a.ncols() > 0 {
        m -= a * a.transpose() / p as f64;
        symmetrize(&mut m);
    }
    Ok(ProjectionComplement(m))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn check_design(y: &DMatrix<f64>, phi: &DMatrix<f64>, pen: &PenaltyMatrix) -> Result<()> {
    if phi.nrows() != y.nrows() {
        return Err(FasmError::DimensionMismatch(format!(
            "basis matrix has {} rows but data has {} grid points",
            phi.nrows(),
            y.nrows()
        )));
    }
    if pen.dim() != phi.ncols() {
        return Err(FasmError::DimensionMismatch(format!(
            "penalty is {0}x{0} but basis has {1} functions",
            pen.dim(),
            phi.ncols()
        )));
    }
    Ok(())
}

/// `Φ'MΦ` and `Φ'MY`, both computed through `Φ'M`.
fn projected_normal_parts(
    y: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    m: &ProjectionComplement,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let phi_t_m = phi.transpose() * m.as_matrix();
    let mut gram = &phi_t_m * phi;
    symmetrize(&mut gram);
    let rhs = &phi_t_m * y;
    (gram, rhs)
}

/// Ridge coefficients `(Φ'MΦ + αR)^{-1} Φ'MY` for every subject at once.
pub fn ridge_step(
    y: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    penalty: &PenaltyMatrix,
    alpha: f64,
    m: &ProjectionComplement,
) -> Result<DMatrix<f64>> {
    check_design(y, phi, penalty)?;
    let (gram, rhs) = projected_normal_parts(y, phi, m);
    let system = gram + penalty.as_matrix() * alpha;
    solve_spd(&system, &rhs).map_err(|e| match e {
        FasmError::NotPositiveDefinite(_) => FasmError::NotPositiveDefinite(format!(
            "Φ'MΦ + αR is singular at α = {alpha:e} (K = {}, p = {}); \
             increase α or reduce the basis",
            phi.ncols(),
            phi.nrows()
        )),
        other => other,
    })
}

/// Diagnostics attached to a principal-component step.
#[derive(Debug, Clone, PartialEq)]
pub enum PcaWarning {
    /// Eigenvalue `index` (0-based) is negligible relative to the largest.
    NearZeroEigenvalue { index: usize, ratio: f64 },
    /// `λ_r / λ_{r+1}` is within `1e-8` of one; the last retained loading is
    /// only identified up to rotation within the tied block.
    TiedEigenvalues { ratio: f64 },
}

#[derive(Debug, Clone)]
pub struct PcaStep {
    /// `p × r`, with `A'A/p = I_r`.
    pub loadings: DMatrix<f64>,
    /// Leading `r` eigenvalues of `(1/np) ZZ'`, descending.
    pub eigenvalues: DVector<f64>,
    pub warnings: Vec<PcaWarning>,
}

impl PcaStep {
    pub fn has_tie(&self) -> bool {
        self.warnings
            .iter()
            .any(|w| matches!(w, PcaWarning::TiedEigenvalues { .. }))
    }
}

/// Loadings from the leading eigenvectors of `(1/np) ZZ'`, `Z = Y - ΦĈ`.
pub fn pca_step(
    y: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    c_hat: &DMatrix<f64>,
    r: usize,
) -> Result<PcaStep> {
    let z = y - phi * c_hat;
    pca_of_residual(&z, r)
}

fn pca_of_residual(z: &DMatrix<f64>, r: usize) -> Result<PcaStep> {
    let (p, n) = z.shape();
    if r > n.min(p) {
        return Err(FasmError::InvalidConfig(format!(
            "cannot extract {r} factors from a {p}x{n} residual matrix"
        )));
    }
    let scale = 1.0 / (n as f64 * p as f64);
    let sqrt_p = (p as f64).sqrt();

    // The nonzero spectrum of ZZ' equals that of Z'Z; use the smaller Gram
    // matrix and map eigenvectors back through Z when that is well-posed.
    let mut from_dual = None;
    if n < p && r > 0 {
        let eig = sym_eig_desc(&(z.transpose() * z * scale))?;
        let lead = eig.values[0];
        let healthy = lead > 0.0 && (0..r).all(|k| eig.values[k] > lead * 1e-12);
        if healthy {
            let mut a = DMatrix::zeros(p, r);
            for k in 0..r {
                let col = z * eig.vectors.column(k);
                let norm = col.norm();
                a.set_column(k, &(col * (sqrt_p / norm)));
            }
            from_dual = Some((a, eig.values));
        }
    }
    let (mut loadings, spectrum) = match from_dual {
        Some(found) => found,
        None => {
            let eig = sym_eig_desc(&(z * z.transpose() * scale))?;
            let a = eig.vectors.columns(0, r) * sqrt_p;
            (a, eig.values)
        }
    };
    reorthonormalize(&mut loadings);

    let eigenvalues = DVector::from_iterator(r, spectrum.iter().take(r).copied());
    let mut warnings = Vec::new();
    let lead = spectrum.get(0).copied().unwrap_or(0.0);
    for k in 0..r {
        let ratio = if lead > 0.0 { spectrum[k] / lead } else { 0.0 };
        if ratio < 1e-12 {
            warnings.push(PcaWarning::NearZeroEigenvalue { index: k, ratio });
        }
    }
    if r > 0 && r < spectrum.len() && spectrum[r - 1] > 0.0 {
        let ratio = spectrum[r - 1] / spectrum[r].max(0.0);
        if ratio < 1.0 + 1e-8 {
            warnings.push(PcaWarning::TiedEigenvalues { ratio });
        }
    }
    Ok(PcaStep {
        loadings,
        eigenvalues,
        warnings,
    })
}

/// Modified Gram–Schmidt to `A'A/p = I`, followed by the sign convention.
fn reorthonormalize(a: &mut DMatrix<f64>) {
    let (p, r) = a.shape();
    let sqrt_p = (p as f64).sqrt();
    for k in 0..r {
        for j in 0..k {
            let proj = a.column(j).dot(&a.column(k)) / p as f64;
            let prev = a.column(j).clone_owned();
            a.column_mut(k).axpy(-proj, &prev, 1.0);
        }
        let norm = a.column(k).norm();
        if norm > 0.0 {
            a.column_mut(k).scale_mut(sqrt_p / norm);
        }
        normalize_sign(a.column_mut(k));
    }
}

/// Factor scores `F̂' = Â'(Y - ΦĈ)/p`, returned as `n × r`.
pub fn extract_factors(
    y: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    c_hat: &DMatrix<f64>,
    a_hat: &DMatrix<f64>,
) -> DMatrix<f64> {
    let z = y - phi * c_hat;
    z.transpose() * a_hat / a_hat.nrows() as f64
}

/// Result of a mean generalised cross-validation evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MgcvScore {
    pub score: f64,
    /// `trace[Φ(Φ'MΦ + αR)^{-1}Φ'M]`.
    pub df: f64,
    /// Per-subject `‖M(Y_i - Φĉ_i)‖²`.
    pub sse: Vec<f64>,
}

fn gcv_score(p: usize, df: f64, sse_total: f64, n: usize) -> f64 {
    let dof = p as f64 - df;
    if !(dof > 0.0) {
        return f64::INFINITY;
    }
    p as f64 * sse_total / (n as f64 * dof * dof)
}

/// mGCV score at one `α`, computed directly from the ridge fit.
pub fn mgcv(
    y: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    penalty: &PenaltyMatrix,
    alpha: f64,
    m: &ProjectionComplement,
) -> Result<MgcvScore> {
    check_design(y, phi, penalty)?;
    let (gram, rhs) = projected_normal_parts(y, phi, m);
    let system = &gram + penalty.as_matrix() * alpha;
    let c = solve_spd(&system, &rhs)?;
    let df = solve_spd(&system, &gram)?.trace();
    let resid = m.as_matrix() * (y - phi * &c);
    let sse: Vec<f64> = resid.column_iter().map(|col| col.norm_squared()).collect();
    let total: f64 = sse.iter().sum();
    Ok(MgcvScore {
        score: gcv_score(y.nrows(), df, total, y.ncols()),
        df,
        sse,
    })
}

/// Simultaneous diagonalisation of `(Φ'MΦ, R)`, which makes the mGCV score
/// an `O(Kn)` evaluation for each candidate `α`.
///
/// With `G = Φ'MΦ + sR = LL'` and `L^{-1}Φ'MΦL^{-T} = UΛU'`, one has
/// `Φ'MΦ + αR = LU(Λ + (α/s)(I - Λ))U'L'`.
struct AlphaPath {
    lambda: Vec<f64>,
    scale: f64,
    /// `U'L^{-1}Φ'MY`, squared entrywise.
    rotated_sq: DMatrix<f64>,
    ymy: Vec<f64>,
    p: usize,
}

impl AlphaPath {
    fn new(
        y: &DMatrix<f64>,
        phi: &DMatrix<f64>,
        penalty: &PenaltyMatrix,
        m: &ProjectionComplement,
    ) -> Result<Self> {
        check_design(y, phi, penalty)?;
        let (gram, rhs) = projected_normal_parts(y, phi, m);
        let pen = penalty.as_matrix();
        let pen_trace = pen.trace();
        let scale = if pen_trace > 0.0 {
            gram.trace().max(f64::MIN_POSITIVE) / pen_trace
        } else {
            1.0
        };
        let g = &gram + pen * scale;
        let chol = g.cholesky().ok_or_else(|| {
            FasmError::NotPositiveDefinite(
                "Φ'MΦ and R share a null direction; no α makes the system solvable".into(),
            )
        })?;
        let l = chol.l();
        let linv_gram = l
            .solve_lower_triangular(&gram)
            .expect("Cholesky factor is nonsingular");
        let s = l
            .solve_lower_triangular(&linv_gram.transpose())
            .expect("Cholesky factor is nonsingular");
        let eig = sym_eig_desc(&s)?;
        let linv_rhs = l
            .solve_lower_triangular(&rhs)
            .expect("Cholesky factor is nonsingular");
        let rotated = eig.vectors.transpose() * linv_rhs;
        let my = m.as_matrix() * y;
        let ymy = (0..y.ncols())
            .map(|i| y.column(i).dot(&my.column(i)))
            .collect();
        Ok(Self {
            lambda: eig.values.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            scale,
            rotated_sq: rotated.map(|v| v * v),
            ymy,
            p: y.nrows(),
        })
    }

    /// `(score, df)` at `alpha`.
    fn evaluate(&self, alpha: f64) -> (f64, f64) {
        let a = alpha / self.scale;
        let d: Vec<f64> = self
            .lambda
            .iter()
            .map(|&l| 1.0 / (l + a * (1.0 - l)))
            .collect();
        let df: f64 = self.lambda.iter().zip(&d).map(|(l, d)| l * d).sum();
        let weights: Vec<f64> = self
            .lambda
            .iter()
            .zip(&d)
            .map(|(l, d)| d * (2.0 - l * d))
            .collect();
        let mut total = 0.0;
        for (i, ymy) in self.ymy.iter().enumerate() {
            let explained: f64 = self
                .rotated_sq
                .column(i)
                .iter()
                .zip(&weights)
                .map(|(w2, wt)| w2 * wt)
                .sum();
            total += (ymy - explained).max(0.0);
        }
        (gcv_score(self.p, df, total, self.ymy.len()), df)
    }

    fn select(&self, grid: &[f64]) -> Result<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        for &alpha in grid {
            let (score, _) = self.evaluate(alpha);
            if !score.is_finite() {
                continue;
            }
            // Ascending grid with `<=`: ties go to the larger α.
            if best.is_none_or(|(_, s)| score <= s) {
                best = Some((alpha, score));
            }
        }
        best.ok_or(FasmError::NoFiniteScore)
    }
}

/// The `α` on `grid` minimising the mGCV score; ties go to the larger `α`.
pub fn select_alpha(
    y: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    penalty: &PenaltyMatrix,
    m: &ProjectionComplement,
    grid: &[f64],
) -> Result<(f64, f64)> {
    validate_alpha_grid(grid)?;
    AlphaPath::new(y, phi, penalty, m)?.select(grid)
}

/// One row of the convergence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 0 is the initial ridge fit with `Â = 0`.
    pub iteration: usize,
    /// `max_i ‖ĉ_i^(t) - ĉ_i^(t-1)‖`; `None` for the initial fit.
    pub drift: Option<f64>,
    /// Projected penalised objective `Σ_i ‖M(Y_i - Φĉ_i)‖² + α ĉ_i'Rĉ_i`.
    pub objective: f64,
    pub alpha: f64,
    pub mgcv: f64,
    /// Smoother trace at this step (without the `+ r`).
    pub df: f64,
    /// `Σ_i ‖M(Y_i - Φĉ_i)‖²`, the residual that drives α selection.
    pub sse_projected: f64,
    /// `Σ_i ‖Y_i - Φĉ_i‖²`.
    pub sse_raw: f64,
    /// The PCA step feeding this iteration reported tied eigenvalues.
    pub tied_factors: bool,
}

/// Fitted model.
#[derive(Debug, Clone)]
pub struct FasmFit {
    /// `K × n` smoothing coefficients.
    pub c_hat: DMatrix<f64>,
    /// `p × r` loadings with `Â'Â/p = I_r`.
    pub a_hat: DMatrix<f64>,
    /// `n × r` factor scores.
    pub f_hat: DMatrix<f64>,
    /// `p × n` remainder `Y - ΦĈ - ÂF̂'` (of the centred data when centring).
    pub e_hat: DMatrix<f64>,
    pub alpha: f64,
    /// Smoother trace plus `r`.
    pub df: f64,
    /// Number of (PCA, ridge) rounds after the initial ridge fit.
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
    /// Leading eigenvalues from the last PCA step.
    pub factor_eigenvalues: DVector<f64>,
    /// Per-grid-point means removed before fitting.
    pub row_means: Option<DVector<f64>>,
    /// Basis coefficients of the smoothed mean curve (centring only).
    pub mean_coef: Option<DVector<f64>>,
}

impl FasmFit {
    pub fn n_factors(&self) -> usize {
        self.a_hat.ncols()
    }

    pub fn is_smoothing_only(&self) -> bool {
        self.a_hat.ncols() == 0
    }

    /// `ΦĈ + ÂF̂'` plus the removed means, i.e. the full fitted values.
    pub fn fitted_values(&self, phi: &DMatrix<f64>) -> DMatrix<f64> {
        let mut fitted = phi * &self.c_hat + &self.a_hat * self.f_hat.transpose();
        if let Some(means) = &self.row_means {
            for mut col in fitted.column_iter_mut() {
                col += means;
            }
        }
        fitted
    }
}

fn objective(
    y: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    penalty: &PenaltyMatrix,
    c: &DMatrix<f64>,
    alpha: f64,
    m: &ProjectionComplement,
) -> (f64, f64, f64) {
    let resid = y - phi * c;
    let sse_raw = resid.norm_squared();
    let sse_proj = (m.as_matrix() * &resid).norm_squared();
    let rough: f64 = c
        .column_iter()
        .map(|col| col.dot(&(penalty.as_matrix() * col)))
        .sum();
    (sse_proj + alpha * rough, sse_proj, sse_raw)
}

fn max_column_drift(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).column_iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Fit with the basis matrix and penalty already evaluated.
pub fn fit_fasm_with_design(
    y: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    penalty: &PenaltyMatrix,
    config: &FasmConfig,
) -> Result<FasmFit> {
    config.validate()?;
    check_finite(y)?;
    check_design(y, phi, penalty)?;
    let (p, n) = y.shape();
    let r = config.r;
    if n == 0 || p == 0 {
        return Err(FasmError::DimensionMismatch("data matrix is empty".into()));
    }
    if r >= n.min(p) {
        return Err(FasmError::InvalidConfig(format!(
            "number of factors r = {r} must be below min(n, p) = {}",
            n.min(p)
        )));
    }

    let (y_work, row_means) = if config.center {
        let means = y.column_mean();
        let mut centred = y.clone();
        for mut col in centred.column_iter_mut() {
            col -= &means;
        }
        (centred, Some(means))
    } else {
        (y.clone(), None)
    };
    let y = &y_work;

    let mut m = ProjectionComplement::identity(p);
    let path = AlphaPath::new(y, phi, penalty, &m)?;
    let (mut alpha, mut score) = path.select(&config.alpha_grid)?;
    let mut df_trace = path.evaluate(alpha).1;
    let mut c = ridge_step(y, phi, penalty, alpha, &m)?;
    let mut a = DMatrix::zeros(p, 0);
    let mut eigenvalues = DVector::zeros(0);

    let mut trace = Vec::new();
    let (obj, sse_proj, sse_raw) = objective(y, phi, penalty, &c, alpha, &m);
    trace.push(IterationRecord {
        iteration: 0,
        drift: None,
        objective: obj,
        alpha,
        mgcv: score,
        df: df_trace,
        sse_projected: sse_proj,
        sse_raw,
        tied_factors: false,
    });

    let mut converged = r == 0;
    let mut iterations = 0;
    if r > 0 {
        for t in 1..=config.max_iter {
            let pca = pca_step(y, phi, &c, r)?;
            let tied = pca.has_tie();
            a = pca.loadings;
            eigenvalues = pca.eigenvalues;
            m = projection_complement(&a)?;

            let path = AlphaPath::new(y, phi, penalty, &m)?;
            if config.alpha_mode == AlphaMode::ReselectEachIteration {
                alpha = path.select(&config.alpha_grid)?.0;
            }
            (score, df_trace) = path.evaluate(alpha);
            let c_next = ridge_step(y, phi, penalty, alpha, &m)?;
            let drift = max_column_drift(&c_next, &c);
            c = c_next;
            iterations = t;

            let (obj, sse_proj, sse_raw) = objective(y, phi, penalty, &c, alpha, &m);
            trace.push(IterationRecord {
                iteration: t,
                drift: Some(drift),
                objective: obj,
                alpha,
                mgcv: score,
                df: df_trace,
                sse_projected: sse_proj,
                sse_raw,
                tied_factors: tied,
            });
            if drift < config.delta {
                converged = true;
                break;
            }
        }
    }

    let f = extract_factors(y, phi, &c, &a);
    let e = y - phi * &c - &a * f.transpose();
    let mean_coef = match &row_means {
        Some(means) => {
            let mean_mat = DMatrix::from_column_slice(p, 1, means.as_slice());
            Some(
                ridge_step(&mean_mat, phi, penalty, alpha, &m)?
                    .column(0)
                    .into_owned(),
            )
        }
        None => None,
    };
    Ok(FasmFit {
        c_hat: c,
        a_hat: a,
        f_hat: f,
        e_hat: e,
        alpha,
        df: df_trace + r as f64,
        iterations,
        converged,
        trace,
        factor_eigenvalues: eigenvalues,
        row_means,
        mean_coef,
    })
}

/// Fit the factor-augmented smoothing model to `Y` (`p × n`) observed on
/// `grid`.
pub fn fit_fasm(
    y: &DMatrix<f64>,
    basis: &BasisSystem,
    grid: &[f64],
    config: &FasmConfig,
) -> Result<FasmFit> {
    if grid.len() != y.nrows() {
        return Err(FasmError::DimensionMismatch(format!(
            "grid has {} points but data has {} rows",
            grid.len(),
            y.nrows()
        )));
    }
    let phi = basis.eval(grid)?;
    let penalty = basis.penalty_matrix();
    fit_fasm_with_design(y, &phi, &penalty, config)
}

/// Plain penalised smoothing (no factor term), α by mGCV.
pub fn fit_smoothing_only(
    y: &DMatrix<f64>,
    basis: &BasisSystem,
    grid: &[f64],
    alpha_grid: &[f64],
) -> Result<FasmFit> {
    let config = FasmConfig {
        r: 0,
        alpha_grid: alpha_grid.to_vec(),
        ..FasmConfig::default()
    };
    fit_fasm(y, basis, grid, &config)
}

/// Evaluate the smooth curves `X̂_i(u) = ĉ_i'Φ(u)` at `points` (`m × n`).
pub fn reconstruct(fit: &FasmFit, basis: &BasisSystem, points: &[f64]) -> Result<DMatrix<f64>> {
    let phi = basis.eval(points)?;
    if phi.ncols() != fit.c_hat.nrows() {
        return Err(FasmError::DimensionMismatch(format!(
            "fit has {} coefficients per curve, basis has {}",
            fit.c_hat.nrows(),
            phi.ncols()
        )));
    }
    let mut curves = &phi * &fit.c_hat;
    if let Some(mean_coef) = &fit.mean_coef {
        let mean_curve = &phi * mean_coef;
        for mut col in curves.column_iter_mut() {
            col += &mean_curve;
        }
    }
    Ok(curves)
}

/// Eigenvalue-ratio choice of the number of factors.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorCount {
    pub r: usize,
    /// Full descending spectrum of `(1/np) ZZ'`.
    pub eigenvalues: Vec<f64>,
    /// `λ_k / λ_{k+1}` for `k = 1..=r_max` (`+∞` where `λ_{k+1}` vanishes).
    pub ratios: Vec<f64>,
}

/// Pick `r = argmax_{1≤k≤r_max} λ_k / λ_{k+1}` over the residual spectrum.
///
/// Returns `r = 0` when the residual is identically zero.
pub fn select_num_factors(z: &DMatrix<f64>, r_max: usize) -> Result<FactorCount> {
    let (p, n) = z.shape();
    if r_max == 0 || r_max >= n.min(p) {
        return Err(FasmError::InvalidConfig(format!(
            "r_max = {r_max} must be in 1..min(n, p) = 1..{}",
            n.min(p)
        )));
    }
    let eig = sym_eig_desc(&(z * z.transpose() / (n as f64 * p as f64)))?;
    let eigenvalues: Vec<f64> = eig.values.iter().copied().collect();
    let lead = eigenvalues[0];
    let negligible = |v: f64| v <= lead * f64::EPSILON;
    let ratios: Vec<f64> = (0..r_max)
        .map(|k| {
            let (num, den) = (eigenvalues[k], eigenvalues[k + 1]);
            if lead <= 0.0 || negligible(num) {
                0.0
            } else if negligible(den) {
                f64::INFINITY
            } else {
                num / den
            }
        })
        .collect();
    let r = if lead <= 0.0 {
        0
    } else {
        let mut best = 0;
        for k in 1..ratios.len() {
            if ratios[k] > ratios[best] {
                best = k;
            }
        }
        best + 1
    };
    Ok(FactorCount {
        r,
        eigenvalues,
        ratios,
    })
}
