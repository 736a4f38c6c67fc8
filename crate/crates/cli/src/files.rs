//! On-disk formats for synthesis results and simulation summaries.
//!
//! Floats are written in the shortest form that parses back to the same
//! value, so a load after a save reproduces every field exactly.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use rsi_core::codesign::TraceEntry;
use rsi_core::sim::SimSummary;
use rsi_core::synthesis::{SolveStatus, SynthesisResult};

use crate::config::Rows;
use crate::error::CliError;

pub fn rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(field: &str, r: &Rows) -> Result<DMatrix<f64>, CliError> {
    let nr = r.len();
    let nc = r.first().map_or(0, |x| x.len());
    if r.iter().any(|x| x.len() != nc) {
        return Err(CliError::Invalid {
            field: field.into(),
            msg: "ragged matrix".into(),
        });
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| r[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    #[serde(rename = "K")]
    pub k: Rows,
    #[serde(rename = "M")]
    pub m: Rows,
    #[serde(rename = "L")]
    pub l: Rows,
    #[serde(rename = "F")]
    pub f: Rows,
    #[serde(rename = "U")]
    pub u: Rows,
    pub tau: Vec<f64>,
    pub beta: f64,
    pub kappa: f64,
    pub rho: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub eps: f64,
    pub eps_up: f64,
    pub g_bar: f64,
    pub objective: f64,
}

impl From<&SynthesisResult<f64>> for ResultRecord {
    fn from(r: &SynthesisResult<f64>) -> Self {
        Self {
            k: rows(&r.k),
            m: rows(&r.m),
            l: rows(&r.l),
            f: rows(&r.f),
            u: rows(&r.u),
            tau: r.tau.iter().copied().collect(),
            beta: r.beta,
            kappa: r.kappa,
            rho: r.rho,
            alpha: r.alpha,
            gamma: r.gamma,
            eps: r.eps,
            eps_up: r.eps_up,
            g_bar: r.g_bar,
            objective: r.objective,
        }
    }
}

impl ResultRecord {
    pub fn to_result(&self) -> Result<SynthesisResult<f64>, CliError> {
        let r = SynthesisResult {
            k: from_rows("result.K", &self.k)?,
            m: from_rows("result.M", &self.m)?,
            l: from_rows("result.L", &self.l)?,
            f: from_rows("result.F", &self.f)?,
            u: from_rows("result.U", &self.u)?,
            tau: DVector::from_column_slice(&self.tau),
            beta: self.beta,
            kappa: self.kappa,
            rho: self.rho,
            alpha: self.alpha,
            gamma: self.gamma,
            eps: self.eps,
            eps_up: self.eps_up,
            g_bar: self.g_bar,
            objective: self.objective,
        };
        let n = r.l.nrows();
        let square = |m: &DMatrix<f64>| m.shape() == (n, n);
        if n == 0 || !square(&r.l) || !square(&r.m) || !square(&r.u) || r.k.ncols() != n || r.f.shape() != r.k.shape()
        {
            return Err(CliError::Invalid {
                field: "result".into(),
                msg: "inconsistent matrix dimensions".into(),
            });
        }
        if r.tau.len() != r.k.nrows() {
            return Err(CliError::Invalid {
                field: "result.tau".into(),
                msg: format!("expected {} entries, found {}", r.k.nrows(), r.tau.len()),
            });
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub kappa: f64,
    pub rho: f64,
    pub eps_up: f64,
    pub eps: f64,
    pub alpha: f64,
    pub status: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub message: String,
}

impl From<&TraceEntry<f64>> for TraceRecord {
    fn from(t: &TraceEntry<f64>) -> Self {
        Self {
            kappa: t.kappa,
            rho: t.rho,
            eps_up: t.eps_up,
            eps: t.eps,
            alpha: t.alpha,
            status: t.status.as_str().into(),
            message: t.message.clone(),
        }
    }
}

pub const STATUS_FEASIBLE: &str = "feasible";
pub const STATUS_NONE: &str = "no-feasible-controller";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub status: String,
    pub result: Option<ResultRecord>,
    pub trace: Vec<TraceRecord>,
}

impl ResultFile {
    pub fn new(result: Option<&SynthesisResult<f64>>, trace: &[TraceEntry<f64>]) -> Self {
        Self {
            status: if result.is_some() { STATUS_FEASIBLE } else { STATUS_NONE }.into(),
            result: result.map(ResultRecord::from),
            trace: trace.iter().map(TraceRecord::from).collect(),
        }
    }

    pub fn optimal_entries(&self) -> usize {
        self.trace.iter().filter(|t| t.status == SolveStatus::Optimal.as_str()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryFile {
    pub trials: usize,
    pub horizon: usize,
    pub violations: usize,
    pub max_err_sq: f64,
    pub max_input: f64,
    pub max_lyap: f64,
    pub max_eup_sq: f64,
    pub delivered_fraction: f64,
    pub trial_violated: Vec<bool>,
    /// Designed bounds, for comparison.
    pub eps: f64,
    pub eps_up: f64,
    pub u_max: f64,
    /// Trace file names, relative to the summary's directory.
    pub trial_files: Vec<String>,
}

impl SummaryFile {
    pub fn new(s: &SimSummary<f64>, result: &SynthesisResult<f64>, u_max: f64, trial_files: Vec<String>) -> Self {
        Self {
            trials: s.trials,
            horizon: s.horizon,
            violations: s.violations,
            max_err_sq: s.max_err_sq,
            max_input: s.max_input,
            max_lyap: s.max_lyap,
            max_eup_sq: s.max_eup_sq,
            delivered_fraction: s.delivered_fraction,
            trial_violated: s.trial_violated.clone(),
            eps: result.eps,
            eps_up: result.eps_up,
            u_max,
            trial_files,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        field: e.path().to_string(),
        msg: e.inner().to_string(),
    })
}
