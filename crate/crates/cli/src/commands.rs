use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use rsi_core::codesign::{codesign_search, CodesignError, Execution};
use rsi_core::linalg::psd_sqrt;
use rsi_core::sim::{run_campaign_records, TrajectoryRecord};
use rsi_core::synthesis::{invariance_oracle, verify_conditions, SynthesisResult};

use crate::config::parse_config;
use crate::error::{CliError, Exit};
use crate::files::{read_json, write_json, ResultFile, SummaryFile};

fn say(out: &mut dyn Write, line: impl AsRef<str>) {
    // Console output is best effort; files carry the results.
    let _ = writeln!(out, "{}", line.as_ref());
}

fn fmt_row(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let r: Vec<String> = m.row(i).iter().map(|v| format!("{v:.6}")).collect();
            format!("[{}]", r.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn load_result(path: &Path) -> Result<Option<SynthesisResult<f64>>, CliError> {
    let file: ResultFile = read_json(path)?;
    file.result.as_ref().map(|r| r.to_result()).transpose()
}

pub fn cmd_synthesize(config: &Path, out_path: &Path, out: &mut dyn Write) -> Result<Exit, CliError> {
    let (_, p) = parse_config(config)?;
    let outcome = codesign_search(
        &p.sys,
        &p.safety,
        &p.u_max,
        p.gamma,
        &p.noise,
        &p.search,
        &p.solve,
        Execution::Parallel,
    );
    match outcome {
        Ok(o) => {
            write_json(out_path, &ResultFile::new(Some(&o.result), &o.trace))?;
            let r = &o.result;
            say(out, format!("feasible after {} candidate(s)", o.trace.len()));
            say(out, format!("kappa = {}  rho = {}", r.kappa, r.rho));
            say(out, format!("eps_up = {:.6e}  eps = {:.6e}  alpha = {:.6e}", r.eps_up, r.eps, r.alpha));
            say(out, format!("K = {}", fmt_row(&r.k)));
            say(out, format!("M = {}", fmt_row(&r.m)));
            Ok(Exit::Success)
        }
        Err(CodesignError::NoFeasibleController { trace }) => {
            write_json(out_path, &ResultFile::new(None, &trace))?;
            say(out, format!("no feasible controller: {} candidate(s) examined", trace.len()));
            Ok(Exit::Infeasible)
        }
        Err(CodesignError::Input(e)) => Err(e.into()),
    }
}

pub fn cmd_verify(result_path: &Path, config: &Path, oracle_samples: usize, out: &mut dyn Write) -> Result<Exit, CliError> {
    let (_, p) = parse_config(config)?;
    let Some(result) = load_result(result_path)? else {
        say(out, "result file holds no controller; nothing to verify");
        return Ok(Exit::VerificationFailed);
    };
    let report = verify_conditions(&result, &p.sys, &p.safety, &p.u_max, p.gamma)?;
    for c in &report.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        say(out, format!("{tag} {:<24} value = {:.9e}  limit = {:.9e}", c.name, c.value, c.limit));
    }
    if report.alpha_above_one {
        say(out, format!("note: alpha = {} > 1, so the alpha^2 error-chain bound is looser than L >= alpha I", result.alpha));
    }
    let mut ok = report.passed();
    if oracle_samples == 0 {
        say(out, "oracle skipped (--oracle-samples 0): verification-only mode");
    } else {
        let frac = invariance_oracle(&result, &p.sys, p.gamma, result.eps, oracle_samples, p.sim.master_seed)?;
        let tag = if frac == 1.0 { "PASS" } else { "FAIL" };
        say(out, format!("{tag} invariance-oracle        fraction = {frac} over {oracle_samples} samples"));
        ok &= frac == 1.0;
    }
    say(out, if ok { "verification passed" } else { "verification FAILED" });
    Ok(if ok { Exit::Success } else { Exit::VerificationFailed })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    let f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(f))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}

fn write_trial_csv(path: &Path, rec: &TrajectoryRecord<f64>) -> Result<(), CliError> {
    let n = rec.x[0].len();
    let m = rec.u.first().map_or(0, |u| u.len());
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("xhat{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    header.extend(["received", "err_sq", "lyap"].map(String::from));
    let mut w = csv_writer(path)?;
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for k in 0..rec.x.len() {
        let mut row = vec![k.to_string()];
        row.extend(rec.x[k].iter().map(|v| v.to_string()));
        row.extend(rec.x_hat[k].iter().map(|v| v.to_string()));
        match rec.u.get(k) {
            Some(u) => row.extend(u.iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), m)),
        }
        row.push(u8::from(rec.received[k]).to_string());
        row.push(rec.err_sq[k].to_string());
        row.push(rec.lyap[k].to_string());
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn cmd_simulate(result_path: &Path, config: &Path, out_prefix: &Path, out: &mut dyn Write) -> Result<Exit, CliError> {
    let (_, p) = parse_config(config)?;
    let Some(result) = load_result(result_path)? else {
        return Err(CliError::Usage(format!("{} holds no controller to simulate", result_path.display())));
    };
    let (summary, records) = run_campaign_records(&p.sys, &result, &p.channel, &p.sim)?;
    if let Some(dir) = out_prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut names = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let path = prefixed(out_prefix, &format!("_trial{i}.csv"));
        write_trial_csv(&path, rec)?;
        names.push(path.file_name().unwrap().to_string_lossy().into_owned());
    }
    let file = SummaryFile::new(&summary, &result, p.u_max.u_max(), names);
    write_json(&prefixed(out_prefix, "_summary.json"), &file)?;
    say(out, format!("{} trial(s) x {} step(s)", summary.trials, summary.horizon));
    say(out, format!("violations = {}", summary.violations));
    say(out, format!("max_err_sq = {:.6e} (designed eps = {:.6e})", summary.max_err_sq, result.eps));
    say(out, format!("max |u| = {:.6} (u_max = {})", summary.max_input, p.u_max.u_max()));
    say(out, format!("delivered fraction = {:.4}", summary.delivered_fraction));
    Ok(if summary.violations == 0 { Exit::Success } else { Exit::SafetyViolation })
}

/// Boundary points of the projection of {xᵀMx ≤ 1} onto the first two coordinates.
pub fn ellipse_points(l: &DMatrix<f64>, count: usize) -> Vec<[f64; 2]> {
    let n = l.nrows().min(2);
    let root = psd_sqrt(&l.view((0, 0), (n, n)).into_owned());
    (0..count)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / count as f64;
            if n == 1 {
                [root[(0, 0)] * t.cos(), 0.0]
            } else {
                let (c, s) = (t.cos(), t.sin());
                [root[(0, 0)] * c + root[(0, 1)] * s, root[(1, 0)] * c + root[(1, 1)] * s]
            }
        })
        .collect()
}

pub fn cmd_report(summary_path: &Path, result_path: &Path, out: &mut dyn Write) -> Result<Exit, CliError> {
    let summary: SummaryFile = read_json(summary_path)?;
    let Some(result) = load_result(result_path)? else {
        return Err(CliError::Usage(format!("{} holds no controller", result_path.display())));
    };
    let dir = summary_path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));

    let ell_path = dir.join("report_ellipse.csv");
    let mut w = csv_writer(&ell_path)?;
    w.write_record(["x1", "x2"]).map_err(|e| csv_err(&ell_path, e))?;
    for [a, b] in ellipse_points(&result.l, 100) {
        w.write_record([a.to_string(), b.to_string()]).map_err(|e| csv_err(&ell_path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&ell_path, e))?;

    let states_path = dir.join("report_states.csv");
    let inputs_path = dir.join("report_inputs.csv");
    let mut ws = csv_writer(&states_path)?;
    let mut wi = csv_writer(&inputs_path)?;
    let mut headers_done = false;
    let mut max_u: f64 = 0.0;
    for (trial, name) in summary.trial_files.iter().enumerate() {
        let path = dir.join(name);
        let mut rd = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
        let header = rd.headers().map_err(|e| csv_err(&path, e))?.clone();
        let xs: Vec<usize> = header.iter().enumerate().filter(|(_, h)| is_indexed(h, "x")).map(|(i, _)| i).collect();
        let us: Vec<usize> = header.iter().enumerate().filter(|(_, h)| is_indexed(h, "u")).map(|(i, _)| i).collect();
        if !headers_done {
            let mut h = vec!["trial".to_string(), "k".into()];
            h.extend(xs.iter().map(|&i| header[i].to_string()));
            ws.write_record(&h).map_err(|e| csv_err(&states_path, e))?;
            let mut h = vec!["trial".to_string(), "k".into()];
            h.extend(us.iter().map(|&i| header[i].to_string()));
            h.push("u_max".into());
            wi.write_record(&h).map_err(|e| csv_err(&inputs_path, e))?;
            headers_done = true;
        }
        for row in rd.records() {
            let row = row.map_err(|e| csv_err(&path, e))?;
            let k = row.get(0).unwrap_or_default().to_string();
            let mut srow = vec![trial.to_string(), k.clone()];
            srow.extend(xs.iter().map(|&i| row[i].to_string()));
            ws.write_record(&srow).map_err(|e| csv_err(&states_path, e))?;
            if us.iter().all(|&i| !row[i].is_empty()) && !us.is_empty() {
                let mut irow = vec![trial.to_string(), k];
                for &i in &us {
                    let v: f64 = row[i].parse().map_err(|_| CliError::Parse {
                        path: path.display().to_string(),
                        field: header[i].to_string(),
                        msg: format!("not a number: {:?}", &row[i]),
                    })?;
                    max_u = max_u.max(v.abs());
                    irow.push(row[i].to_string());
                }
                irow.push(summary.u_max.to_string());
                wi.write_record(&irow).map_err(|e| csv_err(&inputs_path, e))?;
            }
        }
    }
    ws.flush().map_err(|e| CliError::io(&states_path, e))?;
    wi.flush().map_err(|e| CliError::io(&inputs_path, e))?;
    say(out, format!("wrote {}, {}, {}", ell_path.display(), states_path.display(), inputs_path.display()));
    say(out, format!("max |u| over {} trial(s) = {:.6} (u_max = {})", summary.trial_files.len(), max_u, summary.u_max));
    Ok(Exit::Success)
}

/// `x3` but not `xhat3`.
fn is_indexed(h: &str, stem: &str) -> bool {
    h.strip_prefix(stem).is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}
