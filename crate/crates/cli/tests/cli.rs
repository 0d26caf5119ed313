use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fasm::basis::{equispaced_grid, equispaced_knots, make_bspline_basis, Interval};
use fasm::estimator::{fit_fasm, FasmConfig};
use fasm::sim::amse;
use fasm_cli::io::{fmt_f64, read_matrix};
use nalgebra::DMatrix;
use tempfile::TempDir;

fn fasm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fasm"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn write_csv(path: &Path, m: &DMatrix<f64>, header: bool) {
    let mut s = String::new();
    if header {
        let names: Vec<String> = (1..=m.ncols()).map(|i| format!("s{i}")).collect();
        s.push_str(&names.join(","));
        s.push('\n');
    }
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

fn read_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

fn noisy_data(p: usize, n: usize) -> DMatrix<f64> {
    let grid = equispaced_grid(p, Interval::unit());
    DMatrix::from_fn(p, n, |j, i| {
        let u = grid[j];
        let wiggle = ((j * 7 + i * 13) % 11) as f64 / 11.0 - 0.5;
        (2.0 * std::f64::consts::PI * u * (1.0 + i as f64 / n as f64)).sin() + 0.3 * wiggle
    })
}

#[test]
fn emitted_data_refits_to_the_simulated_error() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&fasm(
        &[
            "simulate",
            "--scenario",
            "bspline-factor",
            "--n",
            "20",
            "--p",
            "51",
            "--param",
            "1",
            "--reps",
            "1",
            "--seed",
            "7",
            "--emit-data",
            "--output-dir",
            "sim",
        ],
        d,
    ));
    let stem = "sim/data/bspline-factor_n20_p51_param1.0_seed7";
    ok(&fasm(
        &[
            "fit",
            "--input",
            &format!("{stem}_y.csv"),
            "--basis",
            "bspline",
            "--K",
            "13",
            "--order",
            "4",
            "--r",
            "4",
            "--output-dir",
            "fit",
        ],
        d,
    ));
    let x = read_matrix(&d.join(format!("{stem}_x.csv"))).unwrap();
    let curves = read_matrix(&d.join("fit/fitted_curves.csv")).unwrap();
    let refit = amse(&x, &curves).unwrap();

    let per_rep = read_lines(&d.join("sim/per_rep.csv"));
    let fasm_row = per_rep.iter().find(|l| l.contains(",fasm,")).unwrap();
    let reported: f64 = fasm_row.split(',').nth(8).unwrap().parse().unwrap();
    assert!((refit - reported).abs() < 1e-12, "{refit} vs {reported}");
}

#[test]
fn emitted_csv_round_trips_exactly() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let y = noisy_data(30, 8);
    write_csv(&d.join("y.csv"), &y, true);
    ok(&fasm(
        &[
            "fit",
            "--input",
            "y.csv",
            "--basis",
            "bspline",
            "--K",
            "10",
            "--r",
            "1",
            "--max-iter",
            "5",
            "--output-dir",
            "out",
        ],
        d,
    ));
    let basis =
        make_bspline_basis(4, &equispaced_knots(6, Interval::unit()), Interval::unit()).unwrap();
    let grid = equispaced_grid(30, Interval::unit());
    let cfg = FasmConfig {
        max_iter: 5,
        ..FasmConfig::with_factors(1)
    };
    let fit = fit_fasm(&y, &basis, &grid, &cfg).unwrap();
    assert_eq!(
        read_matrix(&d.join("out/coefficients.csv")).unwrap(),
        fit.c_hat
    );
    assert_eq!(read_matrix(&d.join("out/loadings.csv")).unwrap(), fit.a_hat);
    assert_eq!(read_matrix(&d.join("out/factors.csv")).unwrap(), fit.f_hat);
    assert_eq!(
        read_matrix(&d.join("out/residuals.csv")).unwrap(),
        fit.e_hat
    );
}

#[test]
fn zero_factors_are_reported_as_smoothing_only() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_csv(&d.join("y.csv"), &noisy_data(25, 6), false);
    ok(&fasm(
        &["fit", "--input", "y.csv", "--r", "0", "--output-dir", "out"],
        d,
    ));
    let report = std::fs::read_to_string(d.join("out/report.txt")).unwrap();
    assert!(report.contains("model: smoothing-only"));
    assert_eq!(std::fs::read(d.join("out/loadings.csv")).unwrap().len(), 0);
}

#[test]
fn malformed_cell_is_located() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    std::fs::write(d.join("y.csv"), "a,b,c\n1,2,3\n4,5,6\n7,abc,9\n1,1,1\n").unwrap();
    let out = fasm(&["fit", "--input", "y.csv"], d);
    assert_eq!(out.status.code(), Some(4));
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: input:"));
    assert!(err.contains("row 3, column 2"), "{err}");
}

#[test]
fn non_finite_cell_is_rejected_with_coordinates() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    std::fs::write(d.join("y.csv"), "1,2\n3,NaN\n5,6\n").unwrap();
    let out = fasm(&["fit", "--input", "y.csv"], d);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("row 2, column 2"));
}

#[test]
fn header_and_orientation_are_handled() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let y = noisy_data(21, 5);
    write_csv(&d.join("plain.csv"), &y, false);
    write_csv(&d.join("header.csv"), &y, true);
    write_csv(&d.join("wide.csv"), &y.transpose(), false);
    assert_eq!(read_matrix(&d.join("plain.csv")).unwrap(), y);
    assert_eq!(read_matrix(&d.join("header.csv")).unwrap(), y);
    for (name, extra) in [
        ("plain.csv", None),
        ("header.csv", None),
        ("wide.csv", Some("--transpose")),
    ] {
        let out = format!("out-{name}");
        let mut args = vec!["fit", "--input", name, "--output-dir", &out];
        args.extend(extra);
        ok(&fasm(&args, d));
    }
    let a = std::fs::read(d.join("out-plain.csv/fitted_curves.csv")).unwrap();
    assert_eq!(
        a,
        std::fs::read(d.join("out-header.csv/fitted_curves.csv")).unwrap()
    );
    assert_eq!(
        a,
        std::fs::read(d.join("out-wide.csv/fitted_curves.csv")).unwrap()
    );
}

#[test]
fn table1_preset_emits_every_cell() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&fasm(
        &[
            "simulate",
            "--preset",
            "table1",
            "--reps",
            "1",
            "--max-iter",
            "5",
            "--output-dir",
            "t1",
        ],
        d,
    ));
    let lines = read_lines(&d.join("t1/summary.csv"));
    assert_eq!(
        lines[0],
        "scenario,n,p,sigma_or_delta,method,mean_amse,se_amse,mean_cov_mse,mean_rmse,mean_df,\
         reps_ok,reps_failed,mean_cov_mse_sample,reps_unconverged"
    );
    assert_eq!(lines.len(), 1 + 24);
}

#[test]
fn repeated_invocations_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    for out in ["a", "b"] {
        ok(&fasm(
            &[
                "simulate",
                "--scenario",
                "step-jump",
                "--n",
                "10",
                "--p",
                "31",
                "--param",
                "2",
                "--reps",
                "2",
                "--emit-data",
                "--output-dir",
                out,
            ],
            d,
        ));
    }
    for f in ["summary.csv", "per_rep.csv"] {
        assert_eq!(
            std::fs::read(d.join("a").join(f)).unwrap(),
            std::fs::read(d.join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn covariance_needs_two_subjects() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    std::fs::write(d.join("y.csv"), "1\n2\n3\n4\n").unwrap();
    let out = fasm(&["covariance", "--input", "y.csv"], d);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("at least 2 subjects"));
}

#[test]
fn covariance_outputs_are_symmetric_and_scored() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&fasm(
        &[
            "covariance",
            "--scenario",
            "bspline-factor",
            "--n",
            "30",
            "--p",
            "31",
            "--param",
            "0.75",
            "--max-iter",
            "10",
            "--output-dir",
            "cov",
        ],
        d,
    ));
    for f in ["cov_fasm.csv", "cov_sample.csv"] {
        let s = read_matrix(&d.join("cov").join(f)).unwrap();
        assert_eq!(s.shape(), (31, 31));
        assert_eq!(s, s.transpose());
    }
    let report = std::fs::read_to_string(d.join("cov/mse_report.txt")).unwrap();
    assert!(report.contains("mse_fasm: "));
    assert!(report.contains("mse_sample: "));
}

#[test]
fn scree_flags_an_injected_rank_one_residual() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let (p, n) = (40, 30);
    let grid = equispaced_grid(p, Interval::unit());
    // Straight lines pass through any cubic smoother untouched.
    let y = DMatrix::from_fn(p, n, |j, i| {
        let line = 1.0 + i as f64 * 0.1 - 0.5 * grid[j];
        let spike = if j % 2 == 0 { 1.0 } else { -1.0 };
        line + spike * ((i % 7) as f64 - 3.0)
    });
    write_csv(&d.join("y.csv"), &y, false);
    let out = ok(&fasm(
        &[
            "scree",
            "--input",
            "y.csv",
            "--basis",
            "bspline",
            "--K",
            "8",
            "--alpha",
            "10",
            "--output-dir",
            "s",
        ],
        d,
    ));
    assert!(out.contains("suggested r: 1"));
    let lines = read_lines(&d.join("s/eigenvalues.csv"));
    assert_eq!(lines[0], "k,eigenvalue,ratio,suggested");
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(first[3], "1");
    let ratios: Vec<f64> = lines[1..]
        .iter()
        .filter_map(|l| {
            l.split(',')
                .nth(2)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().unwrap())
        })
        .collect();
    assert!(ratios.iter().all(|&r| r <= ratios[0]));
}

#[test]
fn scree_of_zero_residual_reports_zero() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_csv(&d.join("y.csv"), &DMatrix::zeros(12, 6), false);
    let out = ok(&fasm(
        &["scree", "--input", "y.csv", "--output-dir", "s"],
        d,
    ));
    assert!(out.contains("suggested r: 0"));
    assert!(out.contains("note:"));
    let lines = read_lines(&d.join("s/eigenvalues.csv"));
    assert!(lines[1..]
        .iter()
        .all(|l| l.split(',').nth(1) == Some("0.0")));
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_csv(&d.join("y.csv"), &noisy_data(25, 6), false);
    std::fs::write(
        d.join("run.toml"),
        "output_dir = \"from-file\"\n[data]\ninput = \"y.csv\"\n[estimator]\nr = 2\nmax_iter = 3\n",
    )
    .unwrap();
    let out = ok(&fasm(&["fit", "--config", "run.toml", "--r", "1"], d));
    assert!(out.contains("r = 1"), "{out}");
    assert!(out.contains("max_iter = 3"));
    let report = std::fs::read_to_string(d.join("from-file/report.txt")).unwrap();
    assert!(report.contains("\nr: 1\n"));
    assert!(report.contains("# resolved configuration"));
}

#[test]
fn bad_configuration_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_csv(&d.join("y.csv"), &noisy_data(25, 6), false);
    std::fs::write(d.join("bad.toml"), "[estimator]\nwobble = 1\n").unwrap();
    for args in [
        vec!["fit", "--input", "y.csv", "--config", "bad.toml"],
        vec!["fit", "--input", "y.csv", "--alpha-grid", "1:0.1:5"],
        vec![
            "fit",
            "--input",
            "y.csv",
            "--alpha",
            "1",
            "--alpha-grid",
            "1e-3:1:5",
        ],
        vec!["fit", "--input", "y.csv", "--basis", "bspline"],
        vec!["simulate", "--preset", "table9"],
    ] {
        let out = fasm(&args, d);
        assert_eq!(out.status.code(), Some(3), "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).starts_with("error: config:"));
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = fasm(&["fit", "--wobble"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr(&out).lines().count(), 1);
}

#[test]
fn outputs_land_in_requested_directory_only() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_csv(&d.join("y.csv"), &noisy_data(25, 6), false);
    ok(&fasm(
        &["fit", "--input", "y.csv", "--output-dir", "nested/out"],
        d,
    ));
    let mut names: Vec<PathBuf> = std::fs::read_dir(d.join("nested/out"))
        .unwrap()
        .map(|e| PathBuf::from(e.unwrap().file_name()))
        .collect();
    names.sort();
    let expected: Vec<PathBuf> = [
        "coefficients.csv",
        "factors.csv",
        "fitted_curves.csv",
        "loadings.csv",
        "report.txt",
        "residuals.csv",
    ]
    .iter()
    .map(PathBuf::from)
    .collect();
    assert_eq!(names, expected);
}
