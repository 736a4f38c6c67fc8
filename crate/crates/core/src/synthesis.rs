//! Controller synthesis for a fixed contraction pair (κ, ρ).
//!
//! The decision variables are L (the shape of the invariant ellipsoid
//! {x : xᵀL⁻¹x ≤ 1}), F = KL, an auxiliary matrix U, one scalar τᵢ per input
//! channel and a conditioning scalar β. The constraint families are
//!
//! | tag | block                                           |
//! |-----|-------------------------------------------------|
//! | C1  | [[κL, (AL+BF)ᵀ], [AL+BF, L]] ⪰ 0                 |
//! | C2  | L ⪰ αI                                          |
//! | C3  | c_j L c_jᵀ ≤ 1                                  |
//! | C4  | ε_up·U ⪯ α²I                                    |
//! | C5  | [[½u_max² − τᵢ, Fᵢ], [Fᵢᵀ, L]] ⪰ 0               |
//! | C6  | [[τᵢ, Fᵢ], [Fᵢᵀ, U]] ⪰ 0                         |
//! | C7  | βI ⪯ L ⪯ ρβI                                    |
//!
//! and the objective maximises log det L.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, mismatch, Error, Result};
use crate::kalman::{ErrorBounds, NoiseSpec};
use crate::linalg::{lambda_max, lambda_min, psd_sqrt, spd_solve, spectral_norm, symmetrize};
use crate::lmi::{self, AffineExpr, BarrierSettings, LmiProblem, LmiStatus};
use crate::model::{InputLimit, LtiSystem, PolytopeSafety};
use crate::scalar::{lit, Real};

/// Slack allowed on κρ ≤ 1 so grid points computed in floating point are not rejected.
const EDGE_SLACK: f64 = 1e-12;

/// Verification tolerance for PSD blocks.
pub const PSD_TOL: f64 = 1e-7;
/// Verification tolerance for the scalar containment rows.
pub const CONTAINMENT_TOL: f64 = 1e-9;

/// α = ((√γ + √ε)/(1 − √κ))², or 0 at κ = 1.
pub fn compute_alpha<T: Real>(gamma: T, eps: T, kappa: T) -> T {
    if kappa >= T::one() {
        return T::zero();
    }
    let num = gamma.max(T::zero()).sqrt() + eps.max(T::zero()).sqrt();
    let r = num / (T::one() - kappa.sqrt());
    r * r
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpInstance<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub kappa: T,
    pub rho: T,
    pub alpha: T,
    pub gamma: T,
    pub eps: T,
    pub eps_up: T,
    pub g_bar: T,
    pub safety_rows: Vec<DVector<T>>,
    pub u_max: T,
}

impl<T: Real> OpInstance<T> {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Whether C7 collapses to L = βI.
    pub fn isotropic(&self) -> bool {
        self.rho <= T::one()
    }
}

/// Validates the parameter pair and computes every derived constant.
#[allow(clippy::too_many_arguments)]
pub fn build_op<T: Real>(
    sys: &LtiSystem<T>,
    safety: &PolytopeSafety<T>,
    u_max: &InputLimit<T>,
    gamma: T,
    kappa: T,
    rho: T,
    noise: &NoiseSpec<T>,
) -> Result<OpInstance<T>> {
    let n = sys.n();
    if safety.dim() != n {
        return Err(mismatch("safety rows", n, safety.dim()));
    }
    if noise.n() != n {
        return Err(mismatch("noise dimension", n, noise.n()));
    }
    if !(gamma >= T::zero()) || !gamma.is_finite() {
        return Err(invalid(format!("gamma must be finite and non-negative, got {gamma}")));
    }
    if !(kappa > T::zero() && kappa <= T::one()) {
        return Err(invalid(format!("kappa must lie in (0, 1], got {kappa}")));
    }
    let g_bar_sq = kappa * rho;
    if !(rho >= T::one()) || g_bar_sq > T::one() + lit(EDGE_SLACK) {
        return Err(invalid(format!("rho must lie in [1, 1/kappa], got {rho} with kappa {kappa}")));
    }
    let g_bar_sq = g_bar_sq.min(T::one());
    let noisy = !noise.is_noise_free();
    if g_bar_sq >= T::one() && noisy {
        return Err(Error::DivergentBound {
            g_bar_sq: g_bar_sq.to_f64_lossy(),
        });
    }
    if kappa >= T::one() && (gamma > T::zero() || noisy) {
        return Err(invalid("kappa = 1 is only admitted without disturbance and noise"));
    }
    let norm_a = spectral_norm(sys.a());
    let bounds = ErrorBounds::for_design(noise, g_bar_sq, norm_a)?;
    Ok(OpInstance {
        a: sys.a().clone(),
        b: sys.b().clone(),
        kappa,
        rho,
        alpha: compute_alpha(gamma, bounds.eps, kappa),
        gamma,
        eps: bounds.eps,
        eps_up: bounds.eps_up,
        g_bar: bounds.g_bar,
        safety_rows: safety.rows().to_vec(),
        u_max: u_max.u_max(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalFailure => "numerical-failure",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogDetEncoding {
    /// Barrier on log det L directly.
    #[default]
    Native,
    /// Lower-triangular Z with [[L, Z], [Zᵀ, diag Z]] ⪰ 0, maximising Σ log Zᵢᵢ.
    DeterminantRoot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions<T: Real> {
    pub encoding: LogDetEncoding,
    pub barrier: BarrierSettings<T>,
    /// Every block is imposed as G ⪰ −slack·I; keeps boundary-feasible instances solvable.
    pub feasibility_slack: T,
}

impl<T: Real> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            encoding: LogDetEncoding::Native,
            barrier: BarrierSettings::default(),
            feasibility_slack: lit::<T>(1e-10).max(T::EPS * lit(1e3)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution<T: Real> {
    pub l: DMatrix<T>,
    pub f: DMatrix<T>,
    pub u: DMatrix<T>,
    pub tau: DVector<T>,
    pub beta: T,
    pub status: SolveStatus,
    /// log det L.
    pub objective: T,
    pub message: String,
}

impl<T: Real> SdpSolution<T> {
    fn failed(n: usize, m: usize, status: SolveStatus, message: String) -> Self {
        Self {
            l: DMatrix::zeros(n, n),
            f: DMatrix::zeros(m, n),
            u: DMatrix::zeros(n, n),
            tau: DVector::zeros(m),
            beta: T::zero(),
            status,
            objective: T::zero(),
            message,
        }
    }
}

/// Allocates decision-variable indices and builds matrix-valued variables.
struct VarAlloc {
    next: usize,
}

impl VarAlloc {
    fn scalar(&mut self) -> usize {
        self.next += 1;
        self.next - 1
    }

    fn symmetric<T: Real>(&mut self, n: usize) -> (AffineExpr<T>, Vec<(usize, usize, usize)>) {
        let mut e = AffineExpr::zeros(n, n);
        let mut idx = Vec::new();
        for i in 0..n {
            for j in 0..=i {
                let k = self.scalar();
                let mut c = DMatrix::zeros(n, n);
                c[(i, j)] = T::one();
                c[(j, i)] = T::one();
                e = e.add_term(k, c);
                idx.push((i, j, k));
            }
        }
        (e, idx)
    }

    fn dense<T: Real>(&mut self, r: usize, c: usize) -> (AffineExpr<T>, Vec<(usize, usize, usize)>) {
        let mut e = AffineExpr::zeros(r, c);
        let mut idx = Vec::new();
        for i in 0..r {
            for j in 0..c {
                let k = self.scalar();
                let mut m = DMatrix::zeros(r, c);
                m[(i, j)] = T::one();
                e = e.add_term(k, m);
                idx.push((i, j, k));
            }
        }
        (e, idx)
    }

    fn lower_triangular<T: Real>(&mut self, n: usize) -> (AffineExpr<T>, Vec<(usize, usize, usize)>) {
        let mut e = AffineExpr::zeros(n, n);
        let mut idx = Vec::new();
        for i in 0..n {
            for j in 0..=i {
                let k = self.scalar();
                let mut m = DMatrix::zeros(n, n);
                m[(i, j)] = T::one();
                e = e.add_term(k, m);
                idx.push((i, j, k));
            }
        }
        (e, idx)
    }
}

struct Assembled<T: Real> {
    problem: LmiProblem<T>,
    l: AffineExpr<T>,
    f: AffineExpr<T>,
    u: AffineExpr<T>,
    tau: Vec<usize>,
    beta: usize,
}

fn identity_expr<T: Real>(n: usize, v: T) -> AffineExpr<T> {
    AffineExpr::constant(DMatrix::identity(n, n) * v)
}

fn assemble<T: Real>(inst: &OpInstance<T>, opts: &SolveOptions<T>) -> Assembled<T> {
    let n = inst.n();
    let m = inst.m();
    let mut alloc = VarAlloc { next: 0 };
    let beta = alloc.scalar();
    let l = if inst.isotropic() {
        AffineExpr::zeros(n, n).add_term(beta, DMatrix::identity(n, n))
    } else {
        alloc.symmetric(n).0
    };
    let f = alloc.dense(m, n).0;
    let u = alloc.symmetric(n).0;
    let tau: Vec<usize> = (0..m).map(|_| alloc.scalar()).collect();
    let z = match opts.encoding {
        LogDetEncoding::DeterminantRoot => Some(alloc.lower_triangular::<T>(n)),
        LogDetEncoding::Native => None,
    };

    let mut p = LmiProblem::new(alloc.next);
    let slack = opts.feasibility_slack;
    let add = |p: &mut LmiProblem<T>, name: String, e: AffineExpr<T>| {
        let k = e.nrows();
        p.add_constraint(name, e.add(&identity_expr(k, slack)));
    };

    // C1
    let alf = l.lmul(&inst.a).add(&f.lmul(&inst.b));
    let c1 = AffineExpr::block(&[vec![&l.scale(inst.kappa), &alf.transpose()], vec![&alf, &l]]);
    add(&mut p, "C1".into(), c1);
    // C2
    add(&mut p, "C2".into(), l.sub(&identity_expr(n, inst.alpha)));
    // C3
    for (j, c) in inst.safety_rows.iter().enumerate() {
        let col = DMatrix::from_column_slice(n, 1, c.as_slice());
        let clc = l.lmul(&col.transpose()).rmul(&col);
        add(&mut p, format!("C3[{j}]"), AffineExpr::scalar_constant(T::one()).sub(&clc));
    }
    // C4
    let c4 = identity_expr(n, inst.alpha * inst.alpha).sub(&u.scale(inst.eps_up));
    add(&mut p, "C4".into(), c4);
    // C5, C6
    let half_u2 = lit::<T>(0.5) * inst.u_max * inst.u_max;
    for (i, &ti) in tau.iter().enumerate() {
        let fi = f.row(i);
        let t = AffineExpr::var(ti);
        let top = AffineExpr::scalar_constant(half_u2).sub(&t);
        add(&mut p, format!("C5[{i}]"), AffineExpr::block(&[vec![&top, &fi], vec![&fi.transpose(), &l]]));
        add(&mut p, format!("C6[{i}]"), AffineExpr::block(&[vec![&t, &fi], vec![&fi.transpose(), &u]]));
    }
    // C7
    let beta_i = AffineExpr::zeros(n, n).add_term(beta, DMatrix::identity(n, n));
    if !inst.isotropic() {
        add(&mut p, "C7-lower".into(), l.sub(&beta_i));
        add(&mut p, "C7-upper".into(), beta_i.scale(inst.rho).sub(&l));
    } else {
        add(&mut p, "C7".into(), AffineExpr::var(beta));
    }

    match z {
        None => p.add_log_det(l.clone()),
        Some((z, idx)) => {
            let mut diag = AffineExpr::zeros(n, n);
            for &(i, j, k) in &idx {
                if i == j {
                    let mut c = DMatrix::zeros(n, n);
                    c[(i, i)] = T::one();
                    diag = diag.add_term(k, c);
                    p.add_log_det(AffineExpr::var(k));
                }
            }
            let blk = AffineExpr::block(&[vec![&l, &z], vec![&z.transpose(), &diag]]);
            p.add_constraint("log-det-root", blk);
        }
    }

    Assembled {
        problem: p,
        l,
        f,
        u,
        tau,
        beta,
    }
}

/// Cheap necessary condition: C2 and C3 force α‖c_j‖² ≤ 1.
fn alpha_precheck<T: Real>(inst: &OpInstance<T>, slack: T) -> Option<String> {
    for (j, c) in inst.safety_rows.iter().enumerate() {
        let v = inst.alpha * c.norm_squared();
        if v > T::one() + slack * (T::one() + c.norm_squared()) {
            return Some(format!("alpha {} exceeds the inscribed radius allowed by safety row {j}", inst.alpha));
        }
    }
    None
}

/// Maximises log det L over the feasible set of the instance.
pub fn solve_op<T: Real>(inst: &OpInstance<T>, opts: &SolveOptions<T>) -> SdpSolution<T> {
    let (n, m) = (inst.n(), inst.m());
    if let Some(msg) = alpha_precheck(inst, opts.feasibility_slack) {
        return SdpSolution::failed(n, m, SolveStatus::Infeasible, msg);
    }
    let asm = assemble(inst, opts);
    let sol = lmi::solve(&asm.problem, &opts.barrier);
    let status = match sol.status {
        LmiStatus::Optimal => SolveStatus::Optimal,
        LmiStatus::Infeasible => SolveStatus::Infeasible,
        LmiStatus::NumericalFailure => SolveStatus::NumericalFailure,
    };
    if status != SolveStatus::Optimal {
        return SdpSolution::failed(n, m, status, sol.message);
    }
    let l = symmetrize(&asm.l.eval(&sol.x));
    let objective = match crate::linalg::cholesky(&l) {
        Ok(c) => c.l_dirty().diagonal().iter().fold(T::zero(), |a, d| a + d.ln()) * lit(2.0),
        Err(_) => {
            return SdpSolution::failed(n, m, SolveStatus::NumericalFailure, "returned L is not positive definite".into())
        }
    };
    SdpSolution {
        f: asm.f.eval(&sol.x),
        u: symmetrize(&asm.u.eval(&sol.x)),
        tau: DVector::from_iterator(m, asm.tau.iter().map(|&k| sol.x[k])),
        beta: sol.x[asm.beta],
        l,
        status,
        objective,
        message: sol.message,
    }
}

/// Minimum eigenvalue of every constraint block at a solution, without slack.
pub fn constraint_residuals<T: Real>(inst: &OpInstance<T>, sol: &SdpSolution<T>) -> Vec<(String, T)> {
    let n = inst.n();
    let mut out = Vec::new();
    let l = &sol.l;
    let alf = &inst.a * l + &inst.b * &sol.f;
    let mut c1 = DMatrix::zeros(2 * n, 2 * n);
    c1.view_mut((0, 0), (n, n)).copy_from(&(l * inst.kappa));
    c1.view_mut((0, n), (n, n)).copy_from(&alf.transpose());
    c1.view_mut((n, 0), (n, n)).copy_from(&alf);
    c1.view_mut((n, n), (n, n)).copy_from(l);
    out.push(("C1".to_string(), lambda_min(&c1)));
    out.push(("C2".into(), lambda_min(&(l - DMatrix::identity(n, n) * inst.alpha))));
    for (j, c) in inst.safety_rows.iter().enumerate() {
        out.push((format!("C3[{j}]"), T::one() - (c.transpose() * l * c)[(0, 0)]));
    }
    let c4 = DMatrix::identity(n, n) * (inst.alpha * inst.alpha) - &sol.u * inst.eps_up;
    out.push(("C4".into(), lambda_min(&c4)));
    let half_u2 = lit::<T>(0.5) * inst.u_max * inst.u_max;
    for i in 0..inst.m() {
        let fi = sol.f.row(i).into_owned();
        let mut b5 = DMatrix::zeros(n + 1, n + 1);
        b5[(0, 0)] = half_u2 - sol.tau[i];
        b5.view_mut((0, 1), (1, n)).copy_from(&fi);
        b5.view_mut((1, 0), (n, 1)).copy_from(&fi.transpose());
        b5.view_mut((1, 1), (n, n)).copy_from(l);
        out.push((format!("C5[{i}]"), lambda_min(&b5)));
        let mut b6 = b5.clone();
        b6[(0, 0)] = sol.tau[i];
        b6.view_mut((1, 1), (n, n)).copy_from(&sol.u);
        out.push((format!("C6[{i}]"), lambda_min(&b6)));
    }
    let eye = DMatrix::<T>::identity(n, n);
    out.push(("C7-lower".into(), lambda_min(&(l - &eye * sol.beta))));
    out.push(("C7-upper".into(), lambda_min(&(&eye * (inst.rho * sol.beta) - l))));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult<T: Real> {
    pub k: DMatrix<T>,
    pub m: DMatrix<T>,
    pub l: DMatrix<T>,
    pub f: DMatrix<T>,
    pub u: DMatrix<T>,
    pub tau: DVector<T>,
    pub beta: T,
    pub kappa: T,
    pub rho: T,
    pub alpha: T,
    pub gamma: T,
    pub eps: T,
    pub eps_up: T,
    pub g_bar: T,
    pub objective: T,
}

/// K = F L⁻¹ and M = L⁻¹, both through a Cholesky solve.
pub fn extract_controller<T: Real>(sol: &SdpSolution<T>, inst: &OpInstance<T>) -> Result<SynthesisResult<T>> {
    if sol.status != SolveStatus::Optimal {
        return Err(invalid(format!("cannot extract a controller from a {} solution", sol.status)));
    }
    let n = sol.l.nrows();
    // L symmetric ⇒ K = F L⁻¹ = (L⁻¹ Fᵀ)ᵀ
    let k = spd_solve(&sol.l, &sol.f.transpose())?.transpose();
    let m = symmetrize(&spd_solve(&sol.l, &DMatrix::identity(n, n))?);
    Ok(SynthesisResult {
        k,
        m,
        l: sol.l.clone(),
        f: sol.f.clone(),
        u: sol.u.clone(),
        tau: sol.tau.clone(),
        beta: sol.beta,
        kappa: inst.kappa,
        rho: inst.rho,
        alpha: inst.alpha,
        gamma: inst.gamma,
        eps: inst.eps,
        eps_up: inst.eps_up,
        g_bar: inst.g_bar,
        objective: sol.objective,
    })
}

/// One verification entry: `value` must not exceed `limit`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn le<T: Real>(name: impl Into<String>, value: T, limit: T) -> Self {
        let (value, limit) = (value.to_f64_lossy(), limit.to_f64_lossy());
        Self {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    /// α > 1: C4 uses α² and is then looser than what C2 implies.
    pub alpha_above_one: bool,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, prefix: &str) -> impl Iterator<Item = &Check> + '_ {
        let prefix = prefix.to_string();
        self.checks.iter().filter(move |c| c.name.starts_with(&prefix))
    }
}

/// Analytic checks of the invariance conditions for a synthesized controller.
pub fn verify_conditions<T: Real>(
    result: &SynthesisResult<T>,
    sys: &LtiSystem<T>,
    safety: &PolytopeSafety<T>,
    u_max: &InputLimit<T>,
    gamma: T,
) -> Result<VerificationReport> {
    let n = sys.n();
    let tol = lit::<T>(PSD_TOL);
    if result.l.shape() != (n, n) {
        return Err(mismatch("L", format!("{n}x{n}"), format!("{:?}", result.l.shape())));
    }
    let g = sys.closed_loop(&result.k)?;
    let mut checks = Vec::new();

    // (a) contraction in the M-norm
    let lh = psd_sqrt(&result.l);
    let inner = &lh * g.transpose() * spd_solve(&result.l, &(&g * &lh))?;
    checks.push(Check::le("contraction", lambda_max(&inner), result.kappa + tol));

    // (b) margin between the contracted and the nominal ellipsoid
    let lmin = lambda_min(&result.l).max(T::zero());
    let margin = lmin.sqrt() - (result.kappa * lmin).sqrt();
    let need = gamma.max(T::zero()).sqrt() + result.eps.max(T::zero()).sqrt();
    checks.push(Check::le("margin", need, margin + tol));

    // (c) containment in the safety polytope
    for (j, c) in safety.rows().iter().enumerate() {
        let v = (c.transpose() * &result.l * c)[(0, 0)];
        checks.push(Check::le(format!("containment[{j}]"), v, T::one() + lit(CONTAINMENT_TOL)));
    }

    // (d) input constraints
    let half_u2 = lit::<T>(0.5) * u_max.u_max() * u_max.u_max();
    for i in 0..result.f.nrows() {
        let fi = result.f.row(i).transpose();
        let q = (fi.transpose() * spd_solve(&result.l, &DMatrix::from_column_slice(n, 1, fi.as_slice()))?)[(0, 0)];
        checks.push(Check::le(format!("input[{i}]"), q, half_u2 - result.tau[i] + tol));
        let mut b6 = DMatrix::zeros(n + 1, n + 1);
        b6[(0, 0)] = result.tau[i];
        b6.view_mut((0, 1), (1, n)).copy_from(&fi.transpose());
        b6.view_mut((1, 0), (n, 1)).copy_from(&fi);
        b6.view_mut((1, 1), (n, n)).copy_from(&result.u);
        checks.push(Check::le(format!("input-aux[{i}]"), -lambda_min(&b6), tol));
        // Worst case over the ellipsoid plus the estimation error ball.
        let ki = result.k.row(i).transpose();
        let worst = (ki.transpose() * &result.l * &ki)[(0, 0)].max(T::zero()).sqrt()
            + ki.norm() * result.eps_up.max(T::zero()).sqrt();
        checks.push(Check::le(format!("input-worst-case[{i}]"), worst, u_max.u_max() + tol));
    }
    let c4 = &result.u * result.eps_up - DMatrix::identity(n, n) * (result.alpha * result.alpha);
    checks.push(Check::le("input-error-chain", lambda_max(&c4), tol));

    // (e) closed-loop gain
    checks.push(Check::le("gain", spectral_norm(&g), (result.kappa * result.rho).sqrt() + tol));

    Ok(VerificationReport {
        checks,
        alpha_above_one: result.alpha > T::one(),
    })
}

fn unit_direction<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> DVector<T> {
    loop {
        let v = DVector::from_fn(n, |_, _| lit::<T>(rng.sample::<f64, _>(StandardNormal)));
        let norm = v.norm();
        if norm > lit(1e-12) {
            return v / norm;
        }
    }
}

/// Point in the Euclidean ball of squared radius `r2`, on the sphere with probability ½.
fn ball_sample<T: Real>(rng: &mut ChaCha8Rng, n: usize, r2: T) -> DVector<T> {
    let dir = unit_direction::<T>(rng, n);
    let scale = if rng.random_bool(0.5) {
        T::one()
    } else {
        lit::<T>(rng.random::<f64>().powf(1.0 / n as f64))
    };
    dir * (r2.max(T::zero()).sqrt() * scale)
}

/// Fraction of sampled successors (A+BK)x + d + e that remain in {xᵀMx ≤ 1}.
pub fn invariance_oracle<T: Real>(
    result: &SynthesisResult<T>,
    sys: &LtiSystem<T>,
    gamma: T,
    eps: T,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(invalid("n_samples must be at least 1"));
    }
    let n = sys.n();
    let g = sys.closed_loop(&result.k)?;
    let lh = psd_sqrt(&result.l);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = T::one() + lit(CONTAINMENT_TOL);
    let mut inside = 0usize;
    for s in 0..n_samples {
        let r = lit::<T>(rng.random_range(0.99_f64..=1.0).sqrt());
        let x = &lh * unit_direction::<T>(&mut rng, n) * r;
        let y = &g * &x;
        let (d, e) = if s % 4 == 0 {
            // Push both perturbations along the gradient of the level function.
            let my = &result.m * &y;
            let dir = if my.norm() > T::zero() {
                my.normalize()
            } else {
                unit_direction(&mut rng, n)
            };
            (&dir * gamma.max(T::zero()).sqrt(), &dir * eps.max(T::zero()).sqrt())
        } else {
            (ball_sample(&mut rng, n, gamma), ball_sample(&mut rng, n, eps))
        };
        let xp = y + d + e;
        if (xp.transpose() * &result.m * &xp)[(0, 0)] <= bound {
            inside += 1;
        }
    }
    Ok(inside as f64 / n_samples as f64)
}

/// build → solve → extract in one call.
#[allow(clippy::too_many_arguments)]
pub fn synthesize<T: Real>(
    sys: &LtiSystem<T>,
    safety: &PolytopeSafety<T>,
    u_max: &InputLimit<T>,
    gamma: T,
    kappa: T,
    rho: T,
    noise: &NoiseSpec<T>,
    opts: &SolveOptions<T>,
) -> Result<(OpInstance<T>, SdpSolution<T>)> {
    let inst = build_op(sys, safety, u_max, gamma, kappa, rho, noise)?;
    let sol = solve_op(&inst, opts);
    Ok((inst, sol))
}
