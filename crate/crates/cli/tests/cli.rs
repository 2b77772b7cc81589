use std::fs;
use std::path::Path;
use std::process::Command;

use spectral_cli::{exit, REPORT_FILE, TRAJECTORY_FILE};
use spectral_core::report::RunReport;
use spectral_core::{build_adjacency, spectral_moments, Metric, RobotConfiguration};

fn spectral(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["spectral"];
    argv.extend_from_slice(args);
    let code = spectral_cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

struct Trajectory {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Trajectory {
    fn read(path: &Path) -> Self {
        let mut reader = csv::Reader::from_path(path).unwrap();
        let header = reader.headers().unwrap().iter().map(String::from).collect();
        let rows = reader
            .records()
            .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
            .collect();
        Self { header, rows }
    }

    fn column(&self, name: &str) -> Vec<f64> {
        let idx = self.header.iter().position(|h| h == name).unwrap();
        self.rows.iter().map(|r| r[idx]).collect()
    }
}

fn nonincreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= w[0])
}

#[test]
fn run_preset_writes_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let (code, stdout, _) = spectral(&["run", "--preset", "hexagon7", "-o", out_dir.to_str().unwrap()]);
    assert_eq!(code, exit::SUCCESS, "{stdout}");
    assert!(stdout.contains("converged"));

    let traj = Trajectory::read(&out_dir.join(TRAJECTORY_FILE));
    assert_eq!(traj.header.len(), 1 + 7 + 2 + 7 * 2);
    let potential: Vec<f64> = traj
        .column("cost")
        .iter()
        .zip(traj.column("barrier"))
        .map(|(c, b)| c + b)
        .collect();
    assert!(nonincreasing(&potential));

    let report: RunReport =
        serde_json::from_str(&fs::read_to_string(out_dir.join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(report.name, "hexagon7");

    // final positions from the CSV reproduce the reported moments
    let last = traj.rows.last().unwrap();
    let positions: Vec<Vec<f64>> = last[10..].chunks(2).map(<[f64]>::to_vec).collect();
    assert_eq!(positions, report.final_positions);
    let config = RobotConfiguration::from_rows(&positions).unwrap();
    let moments = spectral_moments(&build_adjacency(&config, 1.0, Metric::L1).unwrap(), 7).unwrap();
    for (a, b) in moments.values().iter().zip(&report.final_moments) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
    }
}

#[test]
fn cost_column_is_monotone_without_barrier() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("plain");
    let (code, stdout, stderr) = spectral(&[
        "run",
        "--preset",
        "rgg10",
        "--set",
        "barrier_enabled=false",
        "--set",
        "record_every=1",
        "-o",
        out_dir.to_str().unwrap(),
    ]);
    assert!(code == exit::SUCCESS || code == exit::STALLED, "{stdout}{stderr}");
    let traj = Trajectory::read(&out_dir.join(TRAJECTORY_FILE));
    assert!(nonincreasing(&traj.column("cost")));
    assert!(traj.column("barrier").iter().all(|b| *b == 0.0));
}

#[test]
fn truncated_hexagon_run() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = spectral(&[
        "run",
        "--preset",
        "hexagon7",
        "--set",
        "s=4",
        "--json",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, exit::SUCCESS);
    let report: RunReport = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report.moments.len(), 4);
    assert!(report.worst_relative_error() <= 0.05);
    assert!((report.final_eigenvalues[0] - 1.70).abs() <= 0.03 * 1.70);
}

#[test]
fn missing_file_is_an_io_error() {
    let (code, _, stderr) = spectral(&["run", "definitely-missing.json"]);
    assert_eq!(code, exit::IO);
    assert!(stderr.contains("definitely-missing.json"));
}

#[test]
fn malformed_and_invalid_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let (code, _, _) = spectral(&["run", bad.to_str().unwrap()]);
    assert_eq!(code, exit::INVALID);

    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"{"name":"x","n":3,"d":1,"seed":1,"s":2,"targets":{"moments":[0,0.1]},"extra":1}"#).unwrap();
    let (code, _, _) = spectral(&["run", unknown.to_str().unwrap()]);
    assert_eq!(code, exit::INVALID);

    let (code, _, stderr) = spectral(&["run", "--preset", "hexagon7", "--set", "s=9"]);
    assert_eq!(code, exit::INVALID);
    assert!(stderr.contains("invalid scenario"));

    let (code, _, _) = spectral(&["run", "--preset", "nope"]);
    assert_eq!(code, exit::INVALID);

    let (code, _, _) = spectral(&["run"]);
    assert_eq!(code, exit::INVALID);
}

#[test]
fn unrealizable_targets_have_their_own_status() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = spectral(&[
        "run",
        "--preset",
        "hexagon7",
        "--set",
        "targets.moments.1=6.5",
        "--set",
        "reference_eigenvalues=null",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, exit::UNREALIZABLE, "{stderr}");
}

#[test]
fn stall_has_its_own_status() {
    let dir = tempfile::tempdir().unwrap();
    // a step size floor above the initial step stalls on the first rejection
    let file = dir.path().join("stall.json");
    fs::write(
        &file,
        r#"{"name":"stall","n":4,"d":2,"seed":2,"s":3,"dt":1.0,"min_step":0.6,
            "targets":{"moments":[0,0.5,0.3]}}"#,
    )
    .unwrap();
    let (code, stdout, stderr) = spectral(&["run", file.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(code, exit::STALLED, "{stdout}{stderr}");
    assert!(stdout.contains("stalled"));
}

#[test]
fn horizon_is_not_success() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = spectral(&[
        "run",
        "--preset",
        "hexagon7",
        "--set",
        "max_time=1",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, exit::NOT_CONVERGED);
    assert!(stdout.contains("horizon"));
}

#[test]
fn batch_trials_are_keyed_by_index() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = spectral(&[
        "run",
        "--preset",
        "rgg10",
        "--trials",
        "3",
        "--seed",
        "40",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, exit::SUCCESS, "{stdout}");
    for i in 0..3 {
        let report: RunReport = serde_json::from_str(
            &fs::read_to_string(dir.path().join(format!("trial-{i}")).join(REPORT_FILE)).unwrap(),
        )
        .unwrap();
        assert_eq!(report.name, format!("rgg10-trial-{i}"));
    }

    // the same trial run alone gives the same report
    let single = dir.path().join("single");
    spectral(&["run", "--preset", "rgg10", "--seed", "41", "-o", single.to_str().unwrap()]);
    let alone: RunReport =
        serde_json::from_str(&fs::read_to_string(single.join(REPORT_FILE)).unwrap()).unwrap();
    let batched: RunReport = serde_json::from_str(
        &fs::read_to_string(dir.path().join("trial-1").join(REPORT_FILE)).unwrap(),
    )
    .unwrap();
    assert_eq!(alone.final_positions, batched.final_positions);
}

#[test]
fn verify_default_passes() {
    let (code, stdout, _) = spectral(&["verify", "--trials", "4"]);
    assert_eq!(code, exit::SUCCESS, "{stdout}");
    assert!(stdout.contains("all checks passed"));
}

#[test]
fn verify_without_trials_warns() {
    let (code, stdout, _) = spectral(&["verify", "--trials", "0"]);
    assert_eq!(code, exit::SUCCESS);
    assert!(stdout.contains("warning"));
}

#[test]
fn verify_reports_the_faulty_check() {
    let (code, stdout, stderr) = spectral(&["verify", "--trials", "2", "--fault", "control-law"]);
    assert_eq!(code, exit::NOT_CONVERGED);
    assert!(stdout.contains("control_law       FAIL"));
    assert!(stderr.contains("control_law"));
}

#[test]
fn spectrum_of_coincident_positions() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("k3.json");
    fs::write(&file, "[[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]]").unwrap();
    let (code, stdout, _) = spectral(&["spectrum", file.to_str().unwrap(), "--json"]);
    assert_eq!(code, exit::SUCCESS);
    let out: spectral_cli::SpectrumOutput = serde_json::from_str(&stdout).unwrap();
    let expected = [2.0, -1.0, -1.0];
    for (a, b) in out.eigenvalues.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(out.moments.len(), 3);
}

#[test]
fn spectrum_of_hexagon_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let hex = spectral_core::scenarios::hexagon_formation(0.5, 2).unwrap();
    let file = dir.path().join("hex.json");
    fs::write(
        &file,
        serde_json::json!({"positions": hex.to_rows(), "c": 2.0, "z": 2}).to_string(),
    )
    .unwrap();
    let (code, stdout, _) = spectral(&["spectrum", file.to_str().unwrap(), "--json"]);
    assert_eq!(code, exit::SUCCESS);
    let out: spectral_cli::SpectrumOutput = serde_json::from_str(&stdout).unwrap();
    let again = spectral_core::network::moments_from_eigenvalues(&out.eigenvalues, 7).unwrap();
    for (a, b) in again.values().iter().zip(&out.moments) {
        assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
    }
}

#[test]
fn spectrum_echoes_preset_targets() {
    let (code, stdout, _) = spectral(&["spectrum", "--preset", "rgg10"]);
    assert_eq!(code, exit::SUCCESS);
    assert!(stdout.contains("target moments: 0 3.11 13.45 71.6"));

    let (code, stdout, _) = spectral(&["spectrum", "--preset", "rgg10", "--set", "s=6"]);
    assert_eq!(code, exit::SUCCESS);
    assert!(stdout.contains("target moments: 0 3.11 13.45 71.6 368.36 1905"));
}

#[test]
fn binary_exit_status() {
    let status = Command::new(env!("CARGO_BIN_EXE_spectral"))
        .args(["run", "no-such-file.json"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(exit::IO));
    let status = Command::new(env!("CARGO_BIN_EXE_spectral"))
        .arg("--help")
        .output()
        .unwrap();
    assert!(status.status.success());
}
