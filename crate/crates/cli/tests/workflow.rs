use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use nalgebra::DMatrix;
use tempfile::TempDir;

use rsi_cli::commands::ellipse_points;
use rsi_cli::config::{read_config, save_config};
use rsi_cli::files::{read_json, write_json, ResultFile, SummaryFile};
use rsi_cli::{cmd_simulate, cmd_synthesize, cmd_verify, parse_config, threads_from_env, CliError, Exit};

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn rsi(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_rsi")).args(args).env("RSI_THREADS", "2").output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Low-noise variant shrunk to a handful of short trials.
fn small_variant(dir: &Path) -> PathBuf {
    let mut cfg = read_config(&shipped("truck_trailer_low_noise.json")).unwrap();
    cfg.sim.trials = 4;
    cfg.sim.horizon = 40;
    let path = dir.join("variant.json");
    save_config(&path, &cfg).unwrap();
    path
}

fn synthesized(dir: &Path) -> (PathBuf, PathBuf) {
    let cfg = small_variant(dir);
    let out = dir.join("result.json");
    assert_eq!(cmd_synthesize(&cfg, &out, &mut Vec::new()).unwrap(), Exit::Success);
    (cfg, out)
}

#[test]
fn shipped_config_parses_to_case_study_data() {
    let (raw, p) = parse_config(&shipped("truck_trailer.json")).unwrap();
    assert_eq!(p.sys.a()[(0, 0)], 0.7247);
    assert_eq!(p.sys.a()[(1, 0)], -0.7361);
    assert_eq!(p.sys.b()[(1, 0)], 0.1636);
    assert_eq!(p.u_max.u_max(), 4.0);
    assert!((p.gamma - 5e-4).abs() < 1e-18);
    assert_eq!(p.safety.rows().len(), 4);
    assert_eq!(p.noise.delta(), 0.05);
    assert_eq!((p.channel.drop_prob, p.channel.quant_step), (0.3, 0.05));
    assert_eq!((p.channel.bandwidth_period, p.channel.delay_steps), (2, 2));
    assert_eq!((p.sim.horizon, p.sim.trials), (200, 100));

    let dir = TempDir::new().unwrap();
    let copy = dir.path().join("copy.json");
    save_config(&copy, &raw).unwrap();
    assert_eq!(read_config(&copy).unwrap(), raw);
}

#[test]
fn validation_errors_name_the_field() {
    let dir = TempDir::new().unwrap();
    let base = read_config(&shipped("truck_trailer.json")).unwrap();
    let cases: Vec<(&str, Box<dyn Fn(&mut rsi_cli::ProblemConfig)>)> = vec![
        ("u_max", Box::new(|c| c.u_max = -1.0)),
        ("noise.delta", Box::new(|c| c.noise.delta = 1.5)),
        ("sim.horizon", Box::new(|c| c.sim.horizon = 0)),
        ("channel.drop_prob", Box::new(|c| c.channel.drop_prob = 2.0)),
        ("safety_box", Box::new(|c| c.safety_box.lo = vec![0.5, -2.0])),
    ];
    for (field, edit) in cases {
        let mut cfg = base.clone();
        edit(&mut cfg);
        let path = dir.path().join("bad.json");
        save_config(&path, &cfg).unwrap();
        match parse_config(&path) {
            Err(e @ CliError::Invalid { .. }) => {
                assert!(e.to_string().contains(field), "{field}: {e}");
                assert_eq!(e.exit(), Exit::Usage);
            }
            other => panic!("{field}: expected a validation error, got {other:?}"),
        }
        let (code, _, err) = rsi(&["verify", "--result", "nowhere.json", "--config", path.to_str().unwrap()]);
        assert_eq!(code, 1, "{err}");
    }
}

#[test]
fn malformed_json_reports_path_and_exit_two() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    let text = fs::read_to_string(shipped("trivial.json")).unwrap().replace("\"u_max\": 1.0", "\"u_max\": \"one\"");
    fs::write(&path, text).unwrap();
    let e = parse_config(&path).unwrap_err();
    assert_eq!(e.exit(), Exit::Io);
    assert!(e.to_string().contains("u_max"), "{e}");
    let e = parse_config(&dir.path().join("missing.json")).unwrap_err();
    assert_eq!(e.exit(), Exit::Io);
}

#[test]
fn infeasible_search_writes_trace_and_exits_three() {
    let dir = TempDir::new().unwrap();
    let mut cfg = read_config(&shipped("trivial.json")).unwrap();
    // Unstable and uncontrollable: no ellipsoid can contract.
    cfg.system.a = vec![vec![1.5, 0.0], vec![0.0, 0.5]];
    cfg.search.delta_kappa = 0.05;
    cfg.search.delta_rho = 0.5;
    let path = dir.path().join("unstable.json");
    save_config(&path, &cfg).unwrap();
    let out = dir.path().join("result.json");
    let (code, stdout, _) = rsi(&["synthesize", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(stdout.contains("no feasible controller"));
    let file: ResultFile = read_json(&out).unwrap();
    assert_eq!(file.status, "no-feasible-controller");
    assert!(file.result.is_none());
    assert!(!file.trace.is_empty() && file.optimal_entries() == 0);

    let (code, stdout, _) = rsi(&["verify", "--result", out.to_str().unwrap(), "--config", path.to_str().unwrap()]);
    assert_eq!(code, 4);
    assert!(stdout.contains("no controller"));
}

#[test]
fn synthesize_is_deterministic_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let cfg = small_variant(dir.path());
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert_eq!(cmd_synthesize(&cfg, &a, &mut Vec::new()).unwrap(), Exit::Success);
    let (code, _, _) = rsi(&["synthesize", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn result_file_round_trips_exactly() {
    let dir = TempDir::new().unwrap();
    let (_, out) = synthesized(dir.path());
    let file: ResultFile = read_json(&out).unwrap();
    let r = file.result.as_ref().unwrap().to_result().unwrap();
    let again = dir.path().join("again.json");
    write_json(&again, &file).unwrap();
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
    assert_eq!(r.kappa, 0.9525);
    assert_eq!(file.status, "feasible");
    assert_eq!(file.optimal_entries(), 1);
}

#[test]
fn verify_passes_and_detects_a_bad_gain() {
    let dir = TempDir::new().unwrap();
    let (cfg, out) = synthesized(dir.path());
    let mut text = Vec::new();
    assert_eq!(cmd_verify(&out, &cfg, 2000, &mut text).unwrap(), Exit::Success);
    let text = String::from_utf8(text).unwrap();
    assert!(text.lines().any(|l| l.starts_with("PASS gain")));
    assert!(text.contains("invariance-oracle") && text.contains("verification passed"));

    let mut text = Vec::new();
    assert_eq!(cmd_verify(&out, &cfg, 0, &mut text).unwrap(), Exit::Success);
    assert!(String::from_utf8(text).unwrap().contains("oracle skipped"));

    let mut file: ResultFile = read_json(&out).unwrap();
    let rec = file.result.as_mut().unwrap();
    for row in &mut rec.k {
        for v in row.iter_mut() {
            *v *= 10.0;
        }
    }
    let bad = dir.path().join("bad.json");
    write_json(&bad, &file).unwrap();
    let (code, stdout, _) = rsi(&["verify", "--result", bad.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_ne!(code, 0);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL gain")), "{stdout}");
}

#[test]
fn simulate_writes_traces_and_summary() {
    let dir = TempDir::new().unwrap();
    let (cfg, out) = synthesized(dir.path());
    let prefix = dir.path().join("runs/sim");
    assert_eq!(cmd_simulate(&out, &cfg, &prefix, &mut Vec::new()).unwrap(), Exit::Success);
    let summary: SummaryFile = read_json(&dir.path().join("runs/sim_summary.json")).unwrap();
    assert_eq!((summary.trials, summary.horizon, summary.violations), (4, 40, 0));
    assert!(summary.max_err_sq <= summary.eps && summary.max_input <= summary.u_max);
    assert_eq!(summary.trial_files.len(), 4);

    let trace = fs::read_to_string(dir.path().join("runs").join(&summary.trial_files[0])).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next().unwrap(), "k,x1,x2,xhat1,xhat2,u1,received,err_sq,lyap");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 41);
    assert!(rows[40].starts_with("40,") && rows[40].contains(",,"));
    assert!(!trace.contains('\r'));

    // Same seed, same bytes.
    let again = dir.path().join("again/sim");
    cmd_simulate(&out, &cfg, &again, &mut Vec::new()).unwrap();
    for name in summary.trial_files.iter().map(String::as_str).chain(["sim_summary.json"]) {
        assert_eq!(fs::read(dir.path().join("runs").join(name)).unwrap(), fs::read(dir.path().join("again").join(name)).unwrap());
    }
}

#[test]
fn simulate_rejects_zero_horizon() {
    let dir = TempDir::new().unwrap();
    let (cfg, out) = synthesized(dir.path());
    let mut raw = read_config(&cfg).unwrap();
    raw.sim.horizon = 0;
    save_config(&cfg, &raw).unwrap();
    let prefix = dir.path().join("sim");
    let e = cmd_simulate(&out, &cfg, &prefix, &mut Vec::new()).unwrap_err();
    assert!(e.to_string().contains("sim.horizon"));
    assert_eq!(e.exit(), Exit::Usage);
}

#[test]
fn report_emits_plot_tables() {
    let dir = TempDir::new().unwrap();
    let (cfg, out) = synthesized(dir.path());
    let prefix = dir.path().join("sim");
    cmd_simulate(&out, &cfg, &prefix, &mut Vec::new()).unwrap();
    let summary = dir.path().join("sim_summary.json");
    let (code, _, err) = rsi(&["report", "--summary", summary.to_str().unwrap(), "--result", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");

    let file: ResultFile = read_json(&out).unwrap();
    let m = file.result.unwrap().to_result().unwrap().m;
    let ell = fs::read_to_string(dir.path().join("report_ellipse.csv")).unwrap();
    let pts: Vec<Vec<f64>> = ell.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(pts.len(), 100);
    for p in &pts {
        let q = m[(0, 0)] * p[0] * p[0] + 2.0 * m[(0, 1)] * p[0] * p[1] + m[(1, 1)] * p[1] * p[1];
        assert!((q - 1.0).abs() < 1e-9, "{q}");
    }
    let states = fs::read_to_string(dir.path().join("report_states.csv")).unwrap();
    assert_eq!(states.lines().next().unwrap(), "trial,k,x1,x2");
    assert_eq!(states.lines().count(), 1 + 4 * 41);
    let inputs = fs::read_to_string(dir.path().join("report_inputs.csv")).unwrap();
    assert_eq!(inputs.lines().next().unwrap(), "trial,k,u1,u_max");
    assert_eq!(inputs.lines().count(), 1 + 4 * 40);

    let (code, _, _) = rsi(&["report", "--summary", "/nonexistent/summary.json", "--result", out.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn ellipse_points_lie_on_the_boundary() {
    let l = DMatrix::identity(2, 2) * 4.0;
    for [a, b] in ellipse_points(&l, 100) {
        assert!((0.25 * (a * a + b * b) - 1.0).abs() < 1e-9);
    }
    let l = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let m = l.clone().try_inverse().unwrap();
    for [a, b] in ellipse_points(&l, 37) {
        let q = m[(0, 0)] * a * a + 2.0 * m[(0, 1)] * a * b + m[(1, 1)] * b * b;
        assert!((q - 1.0).abs() < 1e-9);
    }
}

#[test]
fn trivial_config_end_to_end() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r.json");
    let cfg = shipped("trivial.json");
    let (code, stdout, _) = rsi(&["synthesize", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("kappa = 1"));
    let (code, _, _) = rsi(&["verify", "--result", out.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0);
    let prefix = dir.path().join("t");
    let (code, _, _) = rsi(&["simulate", "--result", out.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out-prefix", prefix.to_str().unwrap()]);
    assert_eq!(code, 0);
}

#[test]
fn usage_and_thread_settings() {
    assert_eq!(rsi(&["synthesize"]).0, 1);
    assert_eq!(rsi(&["frobnicate"]).0, 1);
    assert_eq!(rsi(&["--help"]).0, 0);
    assert_eq!(threads_from_env(None).unwrap(), None);
    assert_eq!(threads_from_env(Some("0")).unwrap(), None);
    assert_eq!(threads_from_env(Some("3")).unwrap(), Some(3));
    assert!(threads_from_env(Some("-2")).is_err());
}
