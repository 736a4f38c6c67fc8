//! Grid search over (κ, ρ) coupling the communication error bounds with
//! controller feasibility.
//!
//! κ descends from 1 in steps of Δκ; for each κ, ρ ascends from 1 to 1/κ in
//! steps of Δρ. The first feasible pair in that order wins. Candidates may be
//! solved concurrently, but selection is by position, never by completion.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::kalman::NoiseSpec;
use crate::model::{InputLimit, LtiSystem, PolytopeSafety};
use crate::scalar::{from_usize, lit, Real};
use crate::synthesis::{build_op, extract_controller, solve_op, SolveOptions, SolveStatus, SynthesisResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig<T: Real> {
    pub delta_kappa: T,
    pub delta_rho: T,
    pub kappa_min: T,
    /// With nonzero noise, pairs with κρ ≥ 1 − tol are skipped.
    pub strict_edge_tol: T,
}

impl<T: Real> Default for SearchConfig<T> {
    fn default() -> Self {
        Self {
            delta_kappa: lit(0.0025),
            delta_rho: lit(0.05),
            kappa_min: lit(0.05),
            strict_edge_tol: lit(1e-9),
        }
    }
}

impl<T: Real> SearchConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_kappa > T::zero() && self.delta_kappa < T::one()) {
            return Err(invalid(format!("delta_kappa must lie in (0, 1), got {}", self.delta_kappa)));
        }
        if !(self.delta_rho > T::zero()) || !self.delta_rho.is_finite() {
            return Err(invalid(format!("delta_rho must be positive, got {}", self.delta_rho)));
        }
        if !(self.kappa_min > T::zero() && self.kappa_min < T::one()) {
            return Err(invalid(format!("kappa_min must lie in (0, 1), got {}", self.kappa_min)));
        }
        if !(self.strict_edge_tol >= T::zero()) {
            return Err(invalid("strict_edge_tol must be non-negative"));
        }
        Ok(())
    }
}

/// How candidate instances are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Batches solved on the current rayon pool.
    #[default]
    Parallel,
}

/// Candidate pairs in search order, with the edge rules applied.
pub fn search_order<T: Real>(cfg: &SearchConfig<T>, gamma: T, noise: &NoiseSpec<T>) -> Result<Vec<(T, T)>> {
    cfg.validate()?;
    let noisy = !noise.is_noise_free();
    let quiet = gamma <= T::zero() && !noisy;
    let slack = lit::<T>(1e-12);
    let mut out = Vec::new();
    let mut i = 0usize;
    loop {
        let kappa = T::one() - from_usize::<T>(i) * cfg.delta_kappa;
        if kappa < cfg.kappa_min - slack || kappa <= T::zero() {
            break;
        }
        i += 1;
        if kappa >= T::one() && !quiet {
            continue;
        }
        let mut j = 0usize;
        loop {
            let rho = T::one() + from_usize::<T>(j) * cfg.delta_rho;
            let g2 = kappa * rho;
            if g2 > T::one() + slack {
                break;
            }
            j += 1;
            if noisy && g2 >= T::one() - cfg.strict_edge_tol {
                continue;
            }
            out.push((kappa, rho));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry<T: Real> {
    pub kappa: T,
    pub rho: T,
    pub eps_up: T,
    pub eps: T,
    pub alpha: T,
    pub status: SolveStatus,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodesignOutcome<T: Real> {
    pub result: SynthesisResult<T>,
    pub trace: Vec<TraceEntry<T>>,
}

#[derive(Debug, thiserror::Error)]
pub enum CodesignError<T: Real> {
    #[error(transparent)]
    Input(#[from] Error),
    #[error("no feasible controller after {} candidate(s)", trace.len())]
    NoFeasibleController { trace: Vec<TraceEntry<T>> },
}

#[allow(clippy::too_many_arguments)]
fn evaluate<T: Real>(
    sys: &LtiSystem<T>,
    safety: &PolytopeSafety<T>,
    u_max: &InputLimit<T>,
    gamma: T,
    noise: &NoiseSpec<T>,
    opts: &SolveOptions<T>,
    (kappa, rho): (T, T),
) -> Result<(TraceEntry<T>, Option<SynthesisResult<T>>)> {
    let inst = build_op(sys, safety, u_max, gamma, kappa, rho, noise)?;
    let sol = solve_op(&inst, opts);
    let result = match sol.status {
        SolveStatus::Optimal => Some(extract_controller(&sol, &inst)?),
        _ => None,
    };
    let entry = TraceEntry {
        kappa,
        rho,
        eps_up: inst.eps_up,
        eps: inst.eps,
        alpha: inst.alpha,
        status: sol.status,
        message: sol.message,
    };
    Ok((entry, result))
}

/// Returns the first feasible controller in search order together with the trace up to it.
#[allow(clippy::too_many_arguments)]
pub fn codesign_search<T: Real>(
    sys: &LtiSystem<T>,
    safety: &PolytopeSafety<T>,
    u_max: &InputLimit<T>,
    gamma: T,
    noise: &NoiseSpec<T>,
    cfg: &SearchConfig<T>,
    opts: &SolveOptions<T>,
    exec: Execution,
) -> std::result::Result<CodesignOutcome<T>, CodesignError<T>> {
    let order = search_order(cfg, gamma, noise)?;
    let batch = match exec {
        Execution::Sequential => 1,
        Execution::Parallel => (rayon::current_num_threads() * 2).max(1),
    };
    let mut trace = Vec::new();
    for chunk in order.chunks(batch) {
        let results: Vec<_> = match exec {
            Execution::Sequential => chunk
                .iter()
                .map(|&c| evaluate(sys, safety, u_max, gamma, noise, opts, c))
                .collect(),
            Execution::Parallel => chunk
                .par_iter()
                .map(|&c| evaluate(sys, safety, u_max, gamma, noise, opts, c))
                .collect(),
        };
        for r in results {
            let (entry, result) = r?;
            trace.push(entry);
            if let Some(result) = result {
                return Ok(CodesignOutcome { result, trace });
            }
        }
    }
    Err(CodesignError::NoFeasibleController { trace })
}
