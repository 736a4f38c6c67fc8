//! Problem configuration files: JSON schema and validation into core types.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use rsi_core::codesign::SearchConfig;
use rsi_core::kalman::NoiseSpec;
use rsi_core::lmi::BarrierSettings;
use rsi_core::model::{box_to_halfspaces, enclosing_ball, BoxSet, InputLimit, LtiSystem, PolytopeSafety};
use rsi_core::sim::{ChannelConfig, DisturbanceMode, InitialStateMode, SimConfig};
use rsi_core::synthesis::{LogDetEncoding, SolveOptions};

use crate::error::CliError;

/// Row-major nested arrays.
pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(rename = "P0")]
    pub p0: Rows,
    #[serde(rename = "Q")]
    pub q: Rows,
    /// Defaults to 1e-4·I.
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Rows>,
    /// Defaults to I (full-state measurement).
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Rows>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub delta_kappa: f64,
    pub delta_rho: f64,
    pub kappa_min: f64,
    pub strict_edge_tol: f64,
}

impl Default for SearchSection {
    fn default() -> Self {
        let d = SearchConfig::<f64>::default();
        Self {
            delta_kappa: d.delta_kappa,
            delta_rho: d.delta_rho,
            kappa_min: d.kappa_min,
            strict_edge_tol: d.strict_edge_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub drop_prob: f64,
    pub quant_step: f64,
    pub bandwidth_period: usize,
    pub delay_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceModeName {
    #[default]
    UniformBox,
    Sphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub horizon: usize,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "is_default_mode")]
    pub disturbance_mode: DisturbanceModeName,
    /// Fixed initial states; sampled uniformly from the invariant set when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_states: Option<Rows>,
}

fn is_default_mode(m: &DisturbanceModeName) -> bool {
    *m == DisturbanceModeName::UniformBox
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingName {
    #[default]
    Native,
    DeterminantRoot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub encoding: EncodingName,
    pub gap_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            encoding: EncodingName::Native,
            gap_tol: BarrierSettings::<f64>::default().gap_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub system: SystemConfig,
    pub safety_box: BoxConfig,
    pub u_max: f64,
    pub disturbance_box: BoxConfig,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub search: SearchSection,
    pub channel: ChannelSection,
    pub sim: SimSection,
    #[serde(default)]
    pub solver: SolverSection,
}

/// A configuration validated into core types.
#[derive(Debug, Clone)]
pub struct Problem {
    pub sys: LtiSystem<f64>,
    pub safety_box: BoxSet<f64>,
    pub safety: PolytopeSafety<f64>,
    pub u_max: InputLimit<f64>,
    pub disturbance_box: BoxSet<f64>,
    /// Squared radius of the ball enclosing the disturbance box.
    pub gamma: f64,
    pub noise: NoiseSpec<f64>,
    pub search: SearchConfig<f64>,
    pub channel: ChannelConfig<f64>,
    pub sim: SimConfig<f64>,
    pub solve: SolveOptions<f64>,
}

fn bad(field: &str, msg: impl ToString) -> CliError {
    CliError::Invalid {
        field: field.to_string(),
        msg: msg.to_string(),
    }
}

fn matrix(field: &str, rows: &Rows) -> Result<DMatrix<f64>, CliError> {
    let r = rows.len();
    if r == 0 {
        return Err(bad(field, "matrix has no rows"));
    }
    let c = rows[0].len();
    if c == 0 {
        return Err(bad(field, "matrix has no columns"));
    }
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(bad(&format!("{field}[{i}]"), format!("expected {c} entries, found {}", rows[i].len())));
    }
    for (i, row) in rows.iter().enumerate() {
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(bad(&format!("{field}[{i}][{j}]"), "entry is not finite"));
        }
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn vector(field: &str, v: &[f64]) -> Result<DVector<f64>, CliError> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(bad(&format!("{field}[{i}]"), "entry is not finite"));
    }
    Ok(DVector::from_column_slice(v))
}

fn boxset(field: &str, b: &BoxConfig) -> Result<BoxSet<f64>, CliError> {
    let lo = vector(&format!("{field}.lo"), &b.lo)?;
    let hi = vector(&format!("{field}.hi"), &b.hi)?;
    BoxSet::new(lo, hi).map_err(|e| bad(field, e))
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<Problem, CliError> {
        let a = matrix("system.A", &self.system.a)?;
        let b = matrix("system.B", &self.system.b)?;
        let sys = LtiSystem::new(a, b).map_err(|e| bad("system", e))?;
        let n = sys.n();

        let safety_box = boxset("safety_box", &self.safety_box)?;
        if safety_box.dim() != n {
            return Err(bad("safety_box", format!("dimension {} does not match state dimension {n}", safety_box.dim())));
        }
        let safety = box_to_halfspaces(&safety_box).map_err(|e| bad("safety_box", e))?;
        let u_max = InputLimit::new(self.u_max).map_err(|e| bad("u_max", e))?;

        let disturbance_box = boxset("disturbance_box", &self.disturbance_box)?;
        if disturbance_box.dim() != n {
            return Err(bad(
                "disturbance_box",
                format!("dimension {} does not match state dimension {n}", disturbance_box.dim()),
            ));
        }
        let gamma = enclosing_ball(&disturbance_box).radius_sq();

        let nz = &self.noise;
        let p0 = matrix("noise.P0", &nz.p0)?;
        let q = matrix("noise.Q", &nz.q)?;
        for (name, m) in [("noise.P0", &p0), ("noise.Q", &q)] {
            if m.shape() != (n, n) {
                return Err(bad(name, format!("expected {n}x{n}, found {}x{}", m.nrows(), m.ncols())));
            }
        }
        let h = match &nz.h {
            Some(h) => matrix("noise.H", h)?,
            None => DMatrix::identity(n, n),
        };
        let r = match &nz.r {
            Some(r) => matrix("noise.R", r)?,
            None => DMatrix::identity(h.nrows(), h.nrows()) * 1e-4,
        };
        if !(nz.delta > 0.0 && nz.delta < 1.0) {
            return Err(bad("noise.delta", format!("must lie in (0, 1), got {}", nz.delta)));
        }
        let noise = NoiseSpec::new(p0, q, r, h, nz.delta).map_err(|e| bad("noise", e))?;

        let search = SearchConfig {
            delta_kappa: self.search.delta_kappa,
            delta_rho: self.search.delta_rho,
            kappa_min: self.search.kappa_min,
            strict_edge_tol: self.search.strict_edge_tol,
        };
        search.validate().map_err(|e| bad("search", e))?;

        let ch = &self.channel;
        let channel = ChannelConfig {
            drop_prob: ch.drop_prob,
            quant_step: ch.quant_step,
            bandwidth_period: ch.bandwidth_period,
            delay_steps: ch.delay_steps,
        };
        if !(ch.drop_prob >= 0.0 && ch.drop_prob <= 1.0) {
            return Err(bad("channel.drop_prob", format!("must lie in [0, 1], got {}", ch.drop_prob)));
        }
        if !(ch.quant_step >= 0.0) || !ch.quant_step.is_finite() {
            return Err(bad("channel.quant_step", format!("must be finite and non-negative, got {}", ch.quant_step)));
        }
        if ch.bandwidth_period == 0 {
            return Err(bad("channel.bandwidth_period", "must be at least 1"));
        }

        let s = &self.sim;
        if s.horizon == 0 {
            return Err(bad("sim.horizon", "must be at least 1"));
        }
        if s.trials == 0 {
            return Err(bad("sim.trials", "must be at least 1"));
        }
        let initial_state_mode = match &s.initial_states {
            None => InitialStateMode::UniformInEllipsoid,
            Some(rows) => {
                if rows.is_empty() {
                    return Err(bad("sim.initial_states", "list is empty"));
                }
                let mut xs = Vec::with_capacity(rows.len());
                for (i, row) in rows.iter().enumerate() {
                    let field = format!("sim.initial_states[{i}]");
                    if row.len() != n {
                        return Err(bad(&field, format!("expected {n} entries, found {}", row.len())));
                    }
                    xs.push(vector(&field, row)?);
                }
                InitialStateMode::FixedList(xs)
            }
        };
        let sim = SimConfig {
            horizon: s.horizon,
            trials: s.trials,
            master_seed: s.master_seed,
            disturbance_box: disturbance_box.clone(),
            disturbance_mode: match s.disturbance_mode {
                DisturbanceModeName::UniformBox => DisturbanceMode::UniformBox,
                DisturbanceModeName::Sphere => DisturbanceMode::Sphere,
            },
            noise: noise.clone(),
            initial_state_mode,
        };

        if !(self.solver.gap_tol > 0.0) || !self.solver.gap_tol.is_finite() {
            return Err(bad("solver.gap_tol", format!("must be positive, got {}", self.solver.gap_tol)));
        }
        let mut solve = SolveOptions::<f64> {
            encoding: match self.solver.encoding {
                EncodingName::Native => LogDetEncoding::Native,
                EncodingName::DeterminantRoot => LogDetEncoding::DeterminantRoot,
            },
            ..Default::default()
        };
        solve.barrier.gap_tol = self.solver.gap_tol;

        Ok(Problem {
            sys,
            safety_box,
            safety,
            u_max,
            disturbance_box,
            gamma,
            noise,
            search,
            channel,
            sim,
            solve,
        })
    }
}

/// Reads and parses a configuration file without validating it.
pub fn read_config(path: &Path) -> Result<ProblemConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        field: e.path().to_string(),
        msg: e.inner().to_string(),
    })
}

/// Reads, parses and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<(ProblemConfig, Problem), CliError> {
    let cfg = read_config(path)?;
    let problem = cfg.validate()?;
    Ok((cfg, problem))
}

pub fn save_config(path: &Path, cfg: &ProblemConfig) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(cfg).expect("config serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
