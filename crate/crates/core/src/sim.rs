//! Monte-Carlo closed-loop simulation over an impaired uplink.
//!
//! Each trial owns a ChaCha8 generator seeded with the campaign's master seed;
//! the plant (initial state, disturbance, process and measurement noise) reads
//! stream `2·trial` and the channel (packet loss) reads stream `2·trial + 1`.
//! Trials are therefore independent of execution order.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, mismatch, Result};
use crate::kalman::{kalman_correct, kalman_predict, KalmanState, NoiseSpec};
use crate::linalg::{pd_inv_sqrt, psd_sqrt, quad_form};
use crate::model::{enclosing_ball, BoxSet, Ellipsoid, LtiSystem};
use crate::scalar::{lit, Real};
use crate::synthesis::SynthesisResult;

/// Tolerance on xᵀMx ≤ 1 before a step counts as a violation.
pub const VIOLATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig<T: Real> {
    pub drop_prob: T,
    /// 0 disables quantization.
    pub quant_step: T,
    /// Transmit only when k mod period = 0.
    pub bandwidth_period: usize,
    pub delay_steps: usize,
}

impl<T: Real> ChannelConfig<T> {
    pub fn ideal() -> Self {
        Self {
            drop_prob: T::zero(),
            quant_step: T::zero(),
            bandwidth_period: 1,
            delay_steps: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.drop_prob >= T::zero() && self.drop_prob <= T::one()) {
            return Err(invalid(format!("drop_prob must lie in [0, 1], got {}", self.drop_prob)));
        }
        if !(self.quant_step >= T::zero()) || !self.quant_step.is_finite() {
            return Err(invalid(format!("quant_step must be finite and non-negative, got {}", self.quant_step)));
        }
        if self.bandwidth_period == 0 {
            return Err(invalid("bandwidth_period must be at least 1"));
        }
        Ok(())
    }
}

/// Delay buffer carried across steps of one trial.
#[derive(Debug, Clone, Default)]
pub struct ChannelState<T: Real> {
    buffer: VecDeque<DVector<T>>,
}

impl<T: Real> ChannelState<T> {
    pub fn new() -> Self {
        Self { buffer: VecDeque::new() }
    }
}

/// Mid-tread uniform quantizer; ties round away from zero.
pub fn quantize<T: Real>(y: &DVector<T>, step: T) -> DVector<T> {
    if step <= T::zero() {
        return y.clone();
    }
    y.map(|v| (v / step).round() * step)
}

/// Delay → bandwidth gate → loss → quantization.
pub fn channel_step<T: Real, R: Rng>(
    k: usize,
    y_sent: &DVector<T>,
    chan: &ChannelConfig<T>,
    state: &mut ChannelState<T>,
    rng: &mut R,
) -> Option<DVector<T>> {
    state.buffer.push_back(y_sent.clone());
    let y = if state.buffer.len() > chan.delay_steps {
        state.buffer.pop_front()?
    } else {
        return None;
    };
    if k % chan.bandwidth_period != 0 {
        return None;
    }
    let p = chan.drop_prob.to_f64_lossy();
    if p > 0.0 && (p >= 1.0 || rng.random_bool(p)) {
        return None;
    }
    Some(quantize(&y, chan.quant_step))
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialStateMode<T: Real> {
    UniformInEllipsoid,
    /// Trial i starts from entry i mod len.
    FixedList(Vec<DVector<T>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DisturbanceMode {
    #[default]
    UniformBox,
    /// Uniform on the sphere dᵀd = γ of the box's enclosing ball.
    Sphere,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T: Real> {
    pub horizon: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub disturbance_box: BoxSet<T>,
    pub disturbance_mode: DisturbanceMode,
    pub noise: NoiseSpec<T>,
    pub initial_state_mode: InitialStateMode<T>,
}

impl<T: Real> SimConfig<T> {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.horizon == 0 {
            return Err(invalid("horizon must be at least 1"));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.disturbance_box.dim() != n {
            return Err(mismatch("disturbance box", n, self.disturbance_box.dim()));
        }
        if self.noise.n() != n {
            return Err(mismatch("noise dimension", n, self.noise.n()));
        }
        if let InitialStateMode::FixedList(xs) = &self.initial_state_mode {
            if xs.is_empty() {
                return Err(invalid("fixed initial-state list is empty"));
            }
            if let Some(x) = xs.iter().find(|x| x.len() != n) {
                return Err(mismatch("initial state", n, x.len()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord<T: Real> {
    /// H+1 entries.
    pub x: Vec<DVector<T>>,
    pub x_hat: Vec<DVector<T>>,
    pub received: Vec<bool>,
    /// e(k) = BK(x̂(k) − x(k)).
    pub e: Vec<DVector<T>>,
    pub err_sq: Vec<T>,
    /// (x̂ − x)ᵀ(x̂ − x).
    pub eup_sq: Vec<T>,
    /// x(k)ᵀMx(k).
    pub lyap: Vec<T>,
    /// H entries.
    pub u: Vec<DVector<T>>,
    pub d: Vec<DVector<T>>,
    pub w: Vec<DVector<T>>,
}

impl<T: Real> TrajectoryRecord<T> {
    pub fn horizon(&self) -> usize {
        self.u.len()
    }

    pub fn violations(&self) -> usize {
        let bound = T::one() + lit(VIOLATION_TOL);
        self.lyap.iter().filter(|v| **v > bound).count()
    }

    pub fn max_err_sq(&self) -> T {
        self.err_sq.iter().fold(T::zero(), |a, v| a.max(*v))
    }

    pub fn max_input(&self) -> T {
        self.u.iter().flat_map(|u| u.iter()).fold(T::zero(), |a, v| a.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary<T: Real> {
    pub trials: usize,
    pub horizon: usize,
    /// Steps across all trials with xᵀMx > 1 + tol.
    pub violations: usize,
    pub max_err_sq: T,
    pub max_input: T,
    pub max_lyap: T,
    pub max_eup_sq: T,
    pub delivered_fraction: f64,
    /// Per-trial flag: the trial left the invariant set at least once.
    pub trial_violated: Vec<bool>,
}

fn normal_vec<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> DVector<T> {
    DVector::from_fn(n, |_, _| lit::<T>(rng.sample::<f64, _>(StandardNormal)))
}

/// Uniform sample from {x : xᵀMx ≤ 1}.
pub fn sample_initial_state<T: Real>(ell: &Ellipsoid<T>, rng: &mut ChaCha8Rng) -> Result<DVector<T>> {
    let n = ell.dim();
    let t = pd_inv_sqrt(ell.shape())?;
    Ok(sample_with_root(&t, n, rng))
}

fn sample_with_root<T: Real>(root: &DMatrix<T>, n: usize, rng: &mut ChaCha8Rng) -> DVector<T> {
    let dir = loop {
        let v = normal_vec::<T>(rng, n);
        let norm = v.norm();
        if norm > T::zero() {
            break v / norm;
        }
    };
    let r = lit::<T>(rng.random::<f64>().powf(1.0 / n as f64));
    root * dir * r
}

fn sample_disturbance<T: Real>(
    bx: &BoxSet<T>,
    mode: DisturbanceMode,
    radius: T,
    rng: &mut ChaCha8Rng,
) -> DVector<T> {
    match mode {
        DisturbanceMode::UniformBox => DVector::from_fn(bx.dim(), |i, _| {
            let (lo, hi) = (bx.lo()[i], bx.hi()[i]);
            lo + (hi - lo) * lit::<T>(rng.random::<f64>())
        }),
        DisturbanceMode::Sphere => loop {
            let v = normal_vec::<T>(rng, bx.dim());
            let norm = v.norm();
            if norm > T::zero() {
                break v * (radius / norm);
            }
        },
    }
}

fn trial_rngs(master_seed: u64, trial: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut plant = ChaCha8Rng::seed_from_u64(master_seed);
    plant.set_stream(2 * trial as u64);
    let mut chan = ChaCha8Rng::seed_from_u64(master_seed);
    chan.set_stream(2 * trial as u64 + 1);
    (plant, chan)
}

/// One closed-loop run of `sim.horizon` steps.
pub fn simulate_trial<T: Real>(
    sys: &LtiSystem<T>,
    result: &SynthesisResult<T>,
    chan: &ChannelConfig<T>,
    sim: &SimConfig<T>,
    trial_index: usize,
) -> Result<TrajectoryRecord<T>> {
    let n = sys.n();
    chan.validate()?;
    sim.validate(n)?;
    let g = sys.closed_loop(&result.k)?;
    let bk = sys.b() * &result.k;
    let noise = &sim.noise;
    let (h, r, q, p0) = (noise.h(), noise.r(), noise.q(), noise.p0());
    let (p0_root, q_root, r_root) = (psd_sqrt(p0), psd_sqrt(q), psd_sqrt(r));
    let radius = enclosing_ball(&sim.disturbance_box).radius_sq().sqrt();
    let (mut rng, mut chan_rng) = trial_rngs(sim.master_seed, trial_index);

    let x0 = match &sim.initial_state_mode {
        InitialStateMode::UniformInEllipsoid => sample_with_root(&pd_inv_sqrt(&result.m)?, n, &mut rng),
        InitialStateMode::FixedList(xs) => xs[trial_index % xs.len()].clone(),
    };
    let xh0 = &x0 + &p0_root * normal_vec::<T>(&mut rng, n);
    let mut est = KalmanState::new(xh0, p0.clone())?;
    let mut x = x0;
    let mut chan_state = ChannelState::new();

    let horizon = sim.horizon;
    let mut rec = TrajectoryRecord {
        x: Vec::with_capacity(horizon + 1),
        x_hat: Vec::with_capacity(horizon + 1),
        received: Vec::with_capacity(horizon + 1),
        e: Vec::with_capacity(horizon + 1),
        err_sq: Vec::with_capacity(horizon + 1),
        eup_sq: Vec::with_capacity(horizon + 1),
        lyap: Vec::with_capacity(horizon + 1),
        u: Vec::with_capacity(horizon),
        d: Vec::with_capacity(horizon),
        w: Vec::with_capacity(horizon),
    };
    for k in 0..=horizon {
        if k > 0 {
            est = kalman_predict(&est, &g, q)?;
        }
        let y = h * &x + &r_root * normal_vec::<T>(&mut rng, h.nrows());
        let delivered = channel_step(k, &y, chan, &mut chan_state, &mut chan_rng);
        if let Some(y) = &delivered {
            est = kalman_correct(&est, y, h, r)?;
        }
        let eup = &est.x_hat - &x;
        let e = &bk * &eup;
        rec.err_sq.push(e.norm_squared());
        rec.eup_sq.push(eup.norm_squared());
        rec.lyap.push(quad_form(&result.m, &x));
        rec.e.push(e);
        rec.received.push(delivered.is_some());
        rec.x.push(x.clone());
        rec.x_hat.push(est.x_hat.clone());
        if k < horizon {
            let u = &result.k * &est.x_hat;
            let d = sample_disturbance(&sim.disturbance_box, sim.disturbance_mode, radius, &mut rng);
            let w = &q_root * normal_vec::<T>(&mut rng, n);
            x = sys.a() * &x + sys.b() * &u + &d + &w;
            rec.u.push(u);
            rec.d.push(d);
            rec.w.push(w);
        }
    }
    Ok(rec)
}

fn summarize<T: Real>(records: &[TrajectoryRecord<T>], horizon: usize) -> SimSummary<T> {
    let fold = |f: &dyn Fn(&TrajectoryRecord<T>) -> T| records.iter().map(f).fold(T::zero(), |a, v| a.max(v));
    let delivered: usize = records.iter().map(|r| r.received.iter().filter(|b| **b).count()).sum();
    let steps: usize = records.iter().map(|r| r.received.len()).sum();
    SimSummary {
        trials: records.len(),
        horizon,
        violations: records.iter().map(|r| r.violations()).sum(),
        max_err_sq: fold(&|r| r.max_err_sq()),
        max_input: fold(&|r| r.max_input()),
        max_lyap: fold(&|r| r.lyap.iter().fold(T::zero(), |a, v| a.max(*v))),
        max_eup_sq: fold(&|r| r.eup_sq.iter().fold(T::zero(), |a, v| a.max(*v))),
        delivered_fraction: if steps == 0 { 0.0 } else { delivered as f64 / steps as f64 },
        trial_violated: records.iter().map(|r| r.violations() > 0).collect(),
    }
}

/// Runs every trial and returns the aggregate together with the records.
pub fn run_campaign_records<T: Real>(
    sys: &LtiSystem<T>,
    result: &SynthesisResult<T>,
    chan: &ChannelConfig<T>,
    sim: &SimConfig<T>,
) -> Result<(SimSummary<T>, Vec<TrajectoryRecord<T>>)> {
    chan.validate()?;
    sim.validate(sys.n())?;
    let records = (0..sim.trials)
        .into_par_iter()
        .map(|i| simulate_trial(sys, result, chan, sim, i))
        .collect::<Result<Vec<_>>>()?;
    Ok((summarize(&records, sim.horizon), records))
}

pub fn run_campaign<T: Real>(
    sys: &LtiSystem<T>,
    result: &SynthesisResult<T>,
    chan: &ChannelConfig<T>,
    sim: &SimConfig<T>,
) -> Result<SimSummary<T>> {
    run_campaign_records(sys, result, chan, sim).map(|(s, _)| s)
}
