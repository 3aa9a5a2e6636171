//! End-to-end pipeline checks: file round-trips, CLI subcommands, and
//! deterministic report output.

use fabernet::cli::{report_sweep, ExperimentConfig};
use fabernet::constructors::compile;
use fabernet::corpus::poly_tent;
use fabernet::relunet::{read_network, write_network};
use fabernet::sampling::{ApproxConfig, Lp};
use fabernet::Function;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fabernet"))
}

#[test]
fn compiled_network_round_trips_bit_exactly() {
    let f = poly_tent(2).unwrap();
    let cfg = ApproxConfig::new(2, 2.0, 3.0, Lp::P(2.0), Some(0.2)).unwrap();
    let out = compile(&f, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.txt");
    write_network(&out.net, std::fs::File::create(&path).unwrap()).unwrap();
    let back = read_network(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..2).map(|_| rng.gen()).collect();
        assert_eq!(out.net.value(&x).to_bits(), back.value(&x).to_bits());
    }
}

#[test]
fn grid_subcommand_emits_indices_and_points() {
    let out = bin()
        .args(["grid", "--dim", "1", "--beta", "2.0", "--m", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "0\n1\n");

    let out = bin()
        .args(["grid", "--dim", "1", "--beta", "2.0", "--m", "1", "--points"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let points: Vec<&str> = text.lines().collect();
    assert_eq!(points, vec!["0/1", "1/4", "1/2", "3/4", "1/1"]);
}

#[test]
fn sample_subcommand_reports_terms_and_writes_expansion() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("expansion.txt");
    let out = bin()
        .args([
            "sample",
            "--func",
            "poly_tent",
            "--alpha",
            "1.5",
            "--beta",
            "2.0",
            "--p",
            "2",
            "--m",
            "3",
            "--dim",
            "2",
            "--out",
        ])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("terms=33 grid="), "stdout: {text}");
    let expansion =
        fabernet::faber::read_expansion(std::io::BufReader::new(std::fs::File::open(&path).unwrap()))
            .unwrap();
    assert_eq!(expansion.num_terms(), 33);
}

#[test]
fn compile_and_measure_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.txt");
    let out = bin()
        .args([
            "compile",
            "--func",
            "poly_tent",
            "--alpha",
            "2.0",
            "--beta",
            "3.0",
            "--p",
            "2",
            "--eps",
            "0.2",
            "--dim",
            "2",
            "--out",
        ])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("m=5 delta="), "stdout: {text}");
    assert!(text.contains("eps0=2.5"), "stdout: {text}");

    let out = bin()
        .args([
            "measure",
            "--lhs",
            "func:poly_tent",
            "--rhs",
            &format!("net:{}", path.display()),
            "--p",
            "2",
            "--scheme",
            "tensor",
            "--n",
            "128",
            "--dim",
            "2",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let fields: Vec<&str> = text.trim().split(',').collect();
    assert_eq!(fields.len(), 7, "row: {text}");
    let value: f64 = fields[4].parse().unwrap();
    assert!(value > 0.0 && value <= 0.2, "measured error {value}");
}

#[test]
fn parameter_errors_exit_with_code_two() {
    // beta = alpha violates the strict inequality.
    let out = bin()
        .args([
            "compile",
            "--func",
            "poly_tent",
            "--alpha",
            "2.0",
            "--beta",
            "2.0",
            "--p",
            "2",
            "--eps",
            "0.1",
            "--dim",
            "2",
            "--out",
            "/tmp/unused-net.txt",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .args(["grid", "--dim", "0", "--m", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oversized_epsilon_is_skipped_with_threshold() {
    // eps >= eps0 = 0.25 at this configuration: reported, not failed.
    let rows = fabernet::cli::criterion7_end_to_end(&[0.3]).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].status, fabernet::cli::Status::Skip);
    assert_eq!(rows[0].bound, 0.25);
}

#[test]
fn sweep_reports_are_byte_identical_across_runs() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let make = |dir: &std::path::Path| ExperimentConfig {
        dims: vec![2],
        alphas: vec![2.0],
        betas: vec![3.0],
        ps: vec![Lp::P(2.0)],
        epsilons: vec![0.2, 0.3],
        funcs: vec!["poly_tent".into()],
        out_dir: dir.to_path_buf(),
        seed: 42,
    };
    report_sweep(&make(dir_a.path())).unwrap();
    report_sweep(&make(dir_b.path())).unwrap();
    for name in ["sweep.csv", "fits.csv"] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let text = std::fs::read_to_string(dir_a.path().join("sweep.csv")).unwrap();
    // eps = 0.3 is above eps0 = 0.25 and must appear as a SKIP row.
    assert!(text.contains("SKIP"), "sweep.csv: {text}");
    // The closed-form bound column dominates the measured f-vs-R error column.
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields[6] == "SKIP" {
            continue;
        }
        let err: f64 = fields[12].parse().unwrap();
        let bound: f64 = fields[13].parse().unwrap();
        assert!(err <= bound * 1.01, "bound violated in sweep row: {line}");
    }
}

#[test]
fn corpus_list_prints_catalog() {
    let out = bin().args(["corpus", "list"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for id in ["poly_tent", "bspline_bump", "truncated_series"] {
        assert!(text.contains(id), "missing {id} in: {text}");
    }
}
