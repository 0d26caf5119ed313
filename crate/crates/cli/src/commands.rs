use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fasm::basis::{
    equispaced_grid, equispaced_knots, make_bspline_basis, make_fourier_basis,
    make_smoothing_spline_basis, BasisSystem, FourierScale, Interval,
};
use fasm::covariance::{
    entrywise_mse, fasm_covariance, frobenius_mse, population_covariance, sample_covariance,
};
use fasm::estimator::{fit_fasm, reconstruct, select_num_factors, FasmConfig, FasmFit};
use fasm::sim::{run_monte_carlo, McOptions, McSummary, RepRecord, Scenario, ScenarioSpec};
use nalgebra::DMatrix;

use crate::config::{
    load_file, resolve, BasisChoice, BasisKindArg, Cli, Command, FlagSet, Resolved, DEFAULT_R_MAX,
};
use crate::error::{CliError, Result};
use crate::io::{
    csv_text, ensure_dir, fmt_f64, fmt_opt, matrix_csv, read_matrix, read_vector, write_atomic,
};

/// Execute one command; returns the text echoed to standard output.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Fit(a) => {
            let file = load_file(a.common.config.as_deref())?;
            let flags = FlagSet {
                common: &a.common,
                data: Some(&a.data),
                basis: Some(&a.basis),
                estimator: &a.estimator,
                scenario: None,
                preset: None,
                reps: None,
                emit_data: false,
                r_max: None,
            };
            cmd_fit(resolve(&flags, &file)?)
        }
        Command::Simulate(a) => {
            let file = load_file(a.common.config.as_deref())?;
            let flags = FlagSet {
                common: &a.common,
                data: None,
                basis: None,
                estimator: &a.estimator,
                scenario: Some(&a.scenario),
                preset: a.preset.as_deref(),
                reps: a.reps,
                emit_data: a.emit_data,
                r_max: None,
            };
            cmd_simulate(resolve(&flags, &file)?)
        }
        Command::Covariance(a) => {
            let file = load_file(a.common.config.as_deref())?;
            let flags = FlagSet {
                common: &a.common,
                data: Some(&a.data),
                basis: Some(&a.basis),
                estimator: &a.estimator,
                scenario: Some(&a.scenario),
                preset: None,
                reps: None,
                emit_data: false,
                r_max: None,
            };
            cmd_covariance(resolve(&flags, &file)?)
        }
        Command::Scree(a) => {
            let file = load_file(a.common.config.as_deref())?;
            let flags = FlagSet {
                common: &a.common,
                data: Some(&a.data),
                basis: Some(&a.basis),
                estimator: &a.estimator,
                scenario: Some(&a.scenario),
                preset: None,
                reps: None,
                emit_data: false,
                r_max: a.r_max,
            };
            cmd_scree(resolve(&flags, &file)?)
        }
    }
}

/// Data matrix (`p × n`), its grid and the basis to fit it with.
struct Dataset {
    y: DMatrix<f64>,
    grid: Vec<f64>,
    basis: BasisSystem,
    scenario: Option<Scenario>,
}

fn load_input(cfg: &Resolved, path: &Path) -> Result<Dataset> {
    let mut y = read_matrix(path)?;
    if cfg.data.transpose {
        y = y.transpose();
    }
    let p = y.nrows();
    let grid = match &cfg.data.grid {
        Some(g) => {
            let grid = read_vector(g)?;
            if grid.len() != p {
                return Err(CliError::Input(format!(
                    "{}: grid has {} points but the data have {p} rows",
                    g.display(),
                    grid.len()
                )));
            }
            if grid.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(CliError::Input(format!(
                    "{}: grid points must be strictly increasing",
                    g.display()
                )));
            }
            grid
        }
        None => equispaced_grid(p, Interval::unit()),
    };
    let basis = build_basis(&cfg.basis, &grid)?;
    Ok(Dataset {
        y,
        grid,
        basis,
        scenario: None,
    })
}

fn load_dataset(cfg: &Resolved) -> Result<Dataset> {
    match &cfg.data.input {
        Some(path) => load_input(cfg, path),
        None => {
            let scenario = cfg.scenario.generate()?;
            Ok(Dataset {
                y: scenario.y.clone(),
                grid: scenario.grid.clone(),
                basis: scenario.fit_basis.clone(),
                scenario: Some(scenario),
            })
        }
    }
}

pub fn build_basis(choice: &BasisChoice, grid: &[f64]) -> Result<BasisSystem> {
    if grid.len() < 2 {
        return Err(CliError::Input("need at least two grid points".into()));
    }
    let domain = Interval::new(grid[0], grid[grid.len() - 1])?;
    let need_k = || {
        choice
            .k
            .ok_or_else(|| CliError::Config(format!("basis {} needs --K", choice.kind.name())))
    };
    let basis = match choice.kind {
        BasisKindArg::SmoothingSpline => make_smoothing_spline_basis(grid, choice.order)?,
        BasisKindArg::Bspline => {
            let k = need_k()?;
            if k < choice.order {
                return Err(CliError::Config(format!(
                    "a B-spline basis of order {} needs K >= {}, got {k}",
                    choice.order, choice.order
                )));
            }
            make_bspline_basis(
                choice.order,
                &equispaced_knots(k - choice.order, domain),
                domain,
            )?
        }
        BasisKindArg::Fourier => {
            make_fourier_basis(need_k()?, domain, domain.len(), FourierScale::default())?
        }
    };
    Ok(basis)
}

fn fit_with(data: &Dataset, config: &FasmConfig) -> Result<FasmFit> {
    Ok(fit_fasm(&data.y, &data.basis, &data.grid, config)?)
}

fn out_path(cfg: &Resolved, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn echo_header(cfg: &Resolved) -> String {
    format!("# resolved configuration\n{}", cfg.echo())
}

fn cmd_fit(mut cfg: Resolved) -> Result<String> {
    let Some(path) = cfg.data.input.clone() else {
        return Err(CliError::Config("fit needs --input".into()));
    };
    cfg.r = Some(cfg.fasm.r);
    let data = load_input(&cfg, &path)?;
    let fit = fit_with(&data, &cfg.fasm)?;
    let curves = reconstruct(&fit, &data.basis, &data.grid)?;

    ensure_dir(&cfg.output_dir)?;
    write_atomic(
        &out_path(&cfg, "coefficients.csv"),
        &matrix_csv(&fit.c_hat, "subject")?,
    )?;
    write_atomic(
        &out_path(&cfg, "loadings.csv"),
        &matrix_csv(&fit.a_hat, "factor")?,
    )?;
    write_atomic(
        &out_path(&cfg, "factors.csv"),
        &matrix_csv(&fit.f_hat, "factor")?,
    )?;
    write_atomic(
        &out_path(&cfg, "residuals.csv"),
        &matrix_csv(&fit.e_hat, "subject")?,
    )?;
    write_atomic(
        &out_path(&cfg, "fitted_curves.csv"),
        &matrix_csv(&curves, "subject")?,
    )?;
    let report = fit_report(&cfg, &data, &fit);
    write_atomic(&out_path(&cfg, "report.txt"), report.as_bytes())?;

    let mut out = echo_header(&cfg);
    let _ = writeln!(
        out,
        "model = {}, alpha = {}, df = {}, iterations = {}, converged = {}",
        model_name(&fit),
        fmt_f64(fit.alpha),
        fmt_f64(fit.df),
        fit.iterations,
        fit.converged
    );
    Ok(out)
}

fn model_name(fit: &FasmFit) -> &'static str {
    if fit.is_smoothing_only() {
        "smoothing-only"
    } else {
        "fasm"
    }
}

fn fit_report(cfg: &Resolved, data: &Dataset, fit: &FasmFit) -> String {
    let (p, n) = data.y.shape();
    let mut s = String::new();
    let _ = writeln!(s, "model: {}", model_name(fit));
    let _ = writeln!(s, "basis: {}", data.basis.describe());
    let _ = writeln!(s, "p: {p}");
    let _ = writeln!(s, "n: {n}");
    let _ = writeln!(s, "r: {}", fit.n_factors());
    let _ = writeln!(s, "alpha: {}", fmt_f64(fit.alpha));
    let _ = writeln!(s, "df: {}", fmt_f64(fit.df));
    let _ = writeln!(s, "iterations: {}", fit.iterations);
    let _ = writeln!(s, "converged: {}", fit.converged);
    if let Some(last) = fit.trace.last() {
        let _ = writeln!(s, "final_drift: {}", fmt_opt(last.drift));
        let _ = writeln!(s, "mgcv: {}", fmt_f64(last.mgcv));
    }
    let tied = fit.trace.iter().filter(|t| t.tied_factors).count();
    if tied > 0 {
        let _ = writeln!(s, "warning: tied factor eigenvalues in {tied} iterations");
    }
    if !fit.converged {
        let _ = writeln!(
            s,
            "warning: coefficient change stayed above {} after {} iterations",
            fmt_f64(cfg.fasm.delta),
            fit.iterations
        );
    }
    let _ = writeln!(s, "\n# trace");
    let _ = writeln!(
        s,
        "iteration,drift,alpha,mgcv,df,objective,sse_projected,sse_raw"
    );
    for t in &fit.trace {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            t.iteration,
            fmt_opt(t.drift),
            fmt_f64(t.alpha),
            fmt_f64(t.mgcv),
            fmt_f64(t.df),
            fmt_f64(t.objective),
            fmt_f64(t.sse_projected),
            fmt_f64(t.sse_raw)
        );
    }
    let _ = write!(s, "\n{}", echo_header(cfg));
    s
}

fn cmd_simulate(mut cfg: Resolved) -> Result<String> {
    let templates: Vec<ScenarioSpec> = match cfg.preset {
        Some(preset) => preset
            .cells()
            .into_iter()
            .map(|t| ScenarioSpec {
                noise_sd: cfg.scenario.noise_sd,
                ..t
            })
            .collect(),
        None => vec![cfg.scenario.clone()],
    };
    if cfg.preset.is_none() {
        cfg.r = Some(cfg.r.unwrap_or(cfg.scenario.kind.default_factors()));
    }
    let seed0 = cfg.scenario.seed;

    let mut summaries = Vec::with_capacity(templates.len());
    for template in &templates {
        let mut options = McOptions::for_kind(template.kind);
        options.fasm = FasmConfig {
            r: cfg.r.unwrap_or(template.kind.default_factors()),
            ..cfg.fasm.clone()
        };
        summaries.push(run_monte_carlo(template, cfg.reps, &options, seed0)?);
    }

    ensure_dir(&cfg.output_dir)?;
    write_atomic(&out_path(&cfg, "summary.csv"), &summary_csv(&summaries)?)?;
    write_atomic(&out_path(&cfg, "per_rep.csv"), &per_rep_csv(&summaries)?)?;
    if cfg.emit_data {
        let dir = cfg.output_dir.join("data");
        ensure_dir(&dir)?;
        for summary in &summaries {
            for t in 0..summary.reps {
                let spec = summary.template.with_seed(seed0.wrapping_add(t as u64));
                let scenario = spec.generate()?;
                let stem = data_stem(&spec);
                write_atomic(
                    &dir.join(format!("{stem}_y.csv")),
                    &matrix_csv(&scenario.y, "subject")?,
                )?;
                write_atomic(
                    &dir.join(format!("{stem}_x.csv")),
                    &matrix_csv(&scenario.x_true, "subject")?,
                )?;
            }
        }
    }

    let mut out = echo_header(&cfg);
    for s in &summaries {
        for cell in &s.cells {
            let _ = writeln!(
                out,
                "{} n={} p={} param={} {}: mean_amse={} ok={} failed={}",
                s.template.kind.name(),
                s.template.n,
                s.template.p,
                fmt_f64(s.template.param),
                cell.method.name(),
                fmt_opt(cell.amse.map(|m| m.mean)),
                cell.reps_ok,
                cell.reps_failed
            );
        }
    }
    Ok(out)
}

/// File stem of an emitted data set.
pub fn data_stem(spec: &ScenarioSpec) -> String {
    format!(
        "{}_n{}_p{}_param{}_seed{}",
        spec.kind.name(),
        spec.n,
        spec.p,
        fmt_f64(spec.param),
        spec.seed
    )
}

pub const SUMMARY_COLUMNS: [&str; 14] = [
    "scenario",
    "n",
    "p",
    "sigma_or_delta",
    "method",
    "mean_amse",
    "se_amse",
    "mean_cov_mse",
    "mean_rmse",
    "mean_df",
    "reps_ok",
    "reps_failed",
    "mean_cov_mse_sample",
    "reps_unconverged",
];

fn summary_csv(summaries: &[McSummary]) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for s in summaries {
        for c in &s.cells {
            rows.push(vec![
                s.template.kind.name().to_string(),
                s.template.n.to_string(),
                s.template.p.to_string(),
                fmt_f64(s.template.param),
                c.method.name().to_string(),
                fmt_opt(c.amse.map(|m| m.mean)),
                fmt_opt(c.amse.map(|m| m.se)),
                fmt_opt(c.cov_mse.map(|m| m.mean)),
                fmt_opt(c.rmse.map(|m| m.mean)),
                fmt_opt(c.df.map(|m| m.mean)),
                c.reps_ok.to_string(),
                c.reps_failed.to_string(),
                fmt_opt(c.cov_mse_sample.map(|m| m.mean)),
                c.reps_unconverged.to_string(),
            ]);
        }
    }
    let header: Vec<String> = SUMMARY_COLUMNS.iter().map(|s| s.to_string()).collect();
    csv_text(&header, &rows)
}

fn per_rep_csv(summaries: &[McSummary]) -> Result<Vec<u8>> {
    let header: Vec<String> = [
        "scenario",
        "n",
        "p",
        "sigma_or_delta",
        "rep",
        "seed",
        "method",
        "status",
        "amse",
        "rmse",
        "df",
        "alpha",
        "iterations",
        "converged",
        "cov_mse",
        "cov_mse_sample",
        "error",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut rows = Vec::new();
    for s in summaries {
        for RepRecord {
            rep,
            seed,
            method,
            outcome,
        } in &s.records
        {
            let mut row = vec![
                s.template.kind.name().to_string(),
                s.template.n.to_string(),
                s.template.p.to_string(),
                fmt_f64(s.template.param),
                rep.to_string(),
                seed.to_string(),
                method.name().to_string(),
            ];
            match outcome {
                Ok(m) => row.extend([
                    "ok".to_string(),
                    fmt_f64(m.amse),
                    fmt_f64(m.rmse),
                    fmt_f64(m.df),
                    fmt_f64(m.alpha),
                    m.iterations.to_string(),
                    m.converged.to_string(),
                    fmt_opt(m.cov_mse),
                    fmt_opt(m.cov_mse_sample),
                    String::new(),
                ]),
                Err(e) => {
                    row.push("failed".to_string());
                    row.extend(std::iter::repeat_n(String::new(), 8));
                    row.push(e.clone());
                }
            }
            rows.push(row);
        }
    }
    csv_text(&header, &rows)
}

fn cmd_covariance(mut cfg: Resolved) -> Result<String> {
    let data = load_dataset(&cfg)?;
    let r = match (&data.scenario, cfg.r) {
        (_, Some(r)) => r,
        (Some(s), None) => s.spec.kind.default_factors(),
        (None, None) => 0,
    };
    cfg.r = Some(r);
    let config = FasmConfig {
        r,
        ..cfg.fasm.clone()
    };
    let sample = sample_covariance(&data.y)?;
    let fit = fit_with(&data, &config)?;
    let phi = data.basis.eval(&data.grid)?;
    let model = fasm_covariance(&fit, &phi)?;

    let mut report = String::new();
    let (p, n) = data.y.shape();
    match &data.scenario {
        Some(s) => {
            let _ = writeln!(
                report,
                "source: scenario {} (n = {n}, p = {p}, param = {}, seed = {})",
                s.spec.kind.name(),
                fmt_f64(s.spec.param),
                s.spec.seed
            );
        }
        None => {
            let _ = writeln!(report, "source: input (n = {n}, p = {p})");
        }
    }
    let _ = writeln!(report, "r: {r}");
    let _ = writeln!(report, "alpha: {}", fmt_f64(fit.alpha));
    let truth = match &data.scenario {
        Some(s) => match population_covariance(s) {
            Ok(t) => Some(t),
            Err(e) => {
                let _ = writeln!(report, "population covariance: unavailable ({e})");
                None
            }
        },
        None => {
            let _ = writeln!(report, "population covariance: unavailable (input data)");
            None
        }
    };
    if let Some(truth) = &truth {
        let fe = entrywise_mse(&model, truth)?;
        let se = entrywise_mse(&sample, truth)?;
        let _ = writeln!(report, "mse_fasm: {}", fmt_f64(fe));
        let _ = writeln!(report, "mse_sample: {}", fmt_f64(se));
        let _ = writeln!(report, "ratio_fasm_over_sample: {}", fmt_f64(fe / se));
        let _ = writeln!(
            report,
            "frobenius_per_row_fasm: {}",
            fmt_f64(frobenius_mse(&model, truth)?)
        );
        let _ = writeln!(
            report,
            "frobenius_per_row_sample: {}",
            fmt_f64(frobenius_mse(&sample, truth)?)
        );
    }
    let _ = write!(report, "\n{}", echo_header(&cfg));

    ensure_dir(&cfg.output_dir)?;
    write_atomic(
        &out_path(&cfg, "cov_fasm.csv"),
        &matrix_csv(model.sigma(), "v")?,
    )?;
    write_atomic(
        &out_path(&cfg, "cov_sample.csv"),
        &matrix_csv(sample.sigma(), "v")?,
    )?;
    write_atomic(&out_path(&cfg, "mse_report.txt"), report.as_bytes())?;
    Ok(echo_header(&cfg)
        + &report
            .lines()
            .take_while(|l| !l.is_empty())
            .fold(String::new(), |a, l| a + l + "\n"))
}

fn cmd_scree(mut cfg: Resolved) -> Result<String> {
    let data = load_dataset(&cfg)?;
    let (p, n) = data.y.shape();
    let limit = n.min(p).saturating_sub(1);
    let r_max = cfg.r_max.unwrap_or(DEFAULT_R_MAX.min(limit));
    cfg.r_max = Some(r_max);
    cfg.r = Some(0);
    let config = FasmConfig {
        r: 0,
        ..cfg.fasm.clone()
    };
    let fit = fit_with(&data, &config)?;
    let count = select_num_factors(&fit.e_hat, r_max)?;

    let header: Vec<String> = ["k", "eigenvalue", "ratio", "suggested"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = count
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            vec![
                (k + 1).to_string(),
                fmt_f64(v),
                fmt_opt(count.ratios.get(k).copied()),
                u8::from(k + 1 == count.r).to_string(),
            ]
        })
        .collect();
    ensure_dir(&cfg.output_dir)?;
    write_atomic(
        &out_path(&cfg, "eigenvalues.csv"),
        &csv_text(&header, &rows)?,
    )?;

    let mut out = echo_header(&cfg);
    let _ = writeln!(out, "suggested r: {}", count.r);
    if count.r == 0 {
        let _ = writeln!(
            out,
            "note: the smoothing residual is identically zero, no factor count is defined"
        );
    }
    Ok(out)
}
