//! Kalman filter over the closed loop and the communication error bounds
//! derived from its covariance.
//!
//! The covariance bound `p̄ₖ = p̄₀ḡ^{2k} + q̄ Σ_{i<k} ḡ^{2i}` holds for every
//! step. Its limit form `p̄₀ḡ² + q̄/(1−ḡ²)`, used for the uplink bound, is only
//! a bound for `k ≥ 1`: at `k = 0` it can undershoot `p̄₀` when `ḡ² < 1` and
//! `q̄` is small relative to `p̄₀`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, mismatch, Error, Result};
use crate::linalg::{self, lambda_max, lambda_min, symmetrize};
use crate::scalar::{lit, Real};

pub use crate::chi2::{chi2_cdf, chi2_quantile};

const PSD_TOL: f64 = 1e-12;

/// Noise model and design parameter of the estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec<T: Real> {
    p0: DMatrix<T>,
    q: DMatrix<T>,
    r: DMatrix<T>,
    h: DMatrix<T>,
    delta: T,
}

fn check_psd<T: Real>(m: &DMatrix<T>, n: usize, name: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(invalid(format!("{name} must be {n}x{n}, got {}x{}", m.nrows(), m.ncols())));
    }
    if !linalg::all_finite(m) || !linalg::is_symmetric(m, lit(PSD_TOL)) {
        return Err(invalid(format!("{name} must be finite and symmetric")));
    }
    let scale = m.iter().fold(T::one(), |a, v| a.max(v.abs()));
    if lambda_min(m) < -lit::<T>(PSD_TOL) * scale {
        return Err(invalid(format!("{name} must be positive semidefinite")));
    }
    Ok(())
}

impl<T: Real> NoiseSpec<T> {
    pub fn new(p0: DMatrix<T>, q: DMatrix<T>, r: DMatrix<T>, h: DMatrix<T>, delta: T) -> Result<Self> {
        let n = p0.nrows();
        if n == 0 {
            return Err(invalid("P0 must be nonempty"));
        }
        check_psd(&p0, n, "P0")?;
        check_psd(&q, n, "Q")?;
        let p = h.nrows();
        if p == 0 || p > n || h.ncols() != n {
            return Err(invalid(format!("H must be p x {n} with 1 <= p <= {n}, got {}x{}", h.nrows(), h.ncols())));
        }
        if !linalg::all_finite(&h) {
            return Err(invalid("H must be finite"));
        }
        check_psd(&r, p, "R")?;
        if !(lambda_min(&r) > T::zero()) {
            return Err(invalid("R must be positive definite"));
        }
        if !(delta > T::zero() && delta < T::one()) {
            return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self {
            p0: symmetrize(&p0),
            q: symmetrize(&q),
            r: symmetrize(&r),
            h,
            delta,
        })
    }

    pub fn p0(&self) -> &DMatrix<T> {
        &self.p0
    }
    pub fn q(&self) -> &DMatrix<T> {
        &self.q
    }
    pub fn r(&self) -> &DMatrix<T> {
        &self.r
    }
    pub fn h(&self) -> &DMatrix<T> {
        &self.h
    }
    pub fn delta(&self) -> T {
        self.delta
    }
    pub fn n(&self) -> usize {
        self.p0.nrows()
    }

    /// `λ_max(P0)`.
    pub fn p_bar_0(&self) -> T {
        lambda_max(&self.p0).max(T::zero())
    }

    /// `λ_max(Q)`.
    pub fn q_bar(&self) -> T {
        lambda_max(&self.q).max(T::zero())
    }

    /// True when both the initial covariance and the process noise vanish.
    pub fn is_noise_free(&self) -> bool {
        self.p_bar_0() == T::zero() && self.q_bar() == T::zero()
    }
}

/// Estimate and error covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState<T: Real> {
    pub x_hat: DVector<T>,
    pub p: DMatrix<T>,
}

impl<T: Real> KalmanState<T> {
    pub fn new(x_hat: DVector<T>, p: DMatrix<T>) -> Result<Self> {
        check_psd(&p, x_hat.len(), "P")?;
        Ok(Self { x_hat, p: symmetrize(&p) })
    }
}

/// Prediction `x̂ ← G x̂`, `P ← G P Gᵀ + Q`.
pub fn kalman_predict<T: Real>(state: &KalmanState<T>, g: &DMatrix<T>, q: &DMatrix<T>) -> Result<KalmanState<T>> {
    let n = state.x_hat.len();
    if g.nrows() != n || g.ncols() != n {
        return Err(mismatch("kalman_predict G", format!("{n}x{n}"), format!("{}x{}", g.nrows(), g.ncols())));
    }
    if q.nrows() != n || q.ncols() != n {
        return Err(mismatch("kalman_predict Q", format!("{n}x{n}"), format!("{}x{}", q.nrows(), q.ncols())));
    }
    Ok(KalmanState {
        x_hat: g * &state.x_hat,
        p: symmetrize(&(g * &state.p * g.transpose() + q)),
    })
}

/// Measurement update with gain `T = P Hᵀ (H P Hᵀ + R)⁻¹`.
pub fn kalman_correct<T: Real>(
    state: &KalmanState<T>,
    y: &DVector<T>,
    h: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<KalmanState<T>> {
    let n = state.x_hat.len();
    let p = h.nrows();
    if h.ncols() != n {
        return Err(mismatch("kalman_correct H columns", n, h.ncols()));
    }
    if y.len() != p {
        return Err(mismatch("kalman_correct y", p, y.len()));
    }
    if r.nrows() != p || r.ncols() != p {
        return Err(mismatch("kalman_correct R", format!("{p}x{p}"), format!("{}x{}", r.nrows(), r.ncols())));
    }
    let ph_t = &state.p * h.transpose();
    let innovation_cov = symmetrize(&(h * &ph_t + r));
    let chol = linalg::cholesky(&innovation_cov)
        .map_err(|_| Error::Numerical("innovation covariance is singular".into()))?;
    // T = P Hᵀ S⁻¹  ⇔  S Tᵀ = H P
    let gain = chol.solve(&ph_t.transpose()).transpose();
    let innovation = y - h * &state.x_hat;
    let x_hat = &state.x_hat + &gain * innovation;
    let ident = DMatrix::<T>::identity(n, n);
    let p_new = symmetrize(&((ident - &gain * h) * &state.p));
    Ok(KalmanState { x_hat, p: p_new })
}

/// Scalars of the covariance bound recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovBoundParams<T: Real> {
    pub p_bar_0: T,
    pub q_bar: T,
    pub g_bar_sq: T,
}

impl<T: Real> CovBoundParams<T> {
    pub fn new(p_bar_0: T, q_bar: T, g_bar_sq: T) -> Result<Self> {
        for (name, v) in [("p_bar_0", p_bar_0), ("q_bar", q_bar), ("g_bar_sq", g_bar_sq)] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(invalid(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(Self { p_bar_0, q_bar, g_bar_sq })
    }

    /// Tightest scalars for given matrices: `λ_max(P0)`, `λ_max(Q)`, `‖G‖₂²`.
    pub fn from_matrices(p0: &DMatrix<T>, q: &DMatrix<T>, g: &DMatrix<T>) -> Result<Self> {
        let gn = linalg::spectral_norm(g);
        Self::new(lambda_max(p0).max(T::zero()), lambda_max(q).max(T::zero()), gn * gn)
    }

    /// Scalars of a noise spec paired with a design value of ḡ².
    pub fn from_noise(noise: &NoiseSpec<T>, g_bar_sq: T) -> Result<Self> {
        Self::new(noise.p_bar_0(), noise.q_bar(), g_bar_sq)
    }
}

/// `p̄ₖ = p̄₀ḡ^{2k} + q̄ Σ_{i=0}^{k−1} ḡ^{2i}`, evaluated as the finite sum.
pub fn cov_upper_bound<T: Real>(params: &CovBoundParams<T>, k: usize) -> T {
    let g2 = params.g_bar_sq;
    let mut power = T::one();
    let mut partial = T::zero();
    for _ in 0..k {
        partial += power;
        power *= g2;
    }
    params.p_bar_0 * power + params.q_bar * partial
}

/// Steady bound `p̄₀ḡ² + q̄/(1−ḡ²)`, which dominates every `p̄ₖ` with `k ≥ 1`;
/// requires `ḡ² < 1`. It exceeds the k → ∞ limit `q̄/(1−ḡ²)` by `p̄₀ḡ²`.
pub fn steady_cov_bound<T: Real>(params: &CovBoundParams<T>) -> Result<T> {
    let g2 = params.g_bar_sq;
    if !(g2 < T::one()) {
        return Err(Error::DivergentBound { g_bar_sq: g2.to_f64_lossy() });
    }
    Ok(params.p_bar_0 * g2 + params.q_bar / (T::one() - g2))
}

/// `ε_up = (p̄₀ḡ² + q̄/(1−ḡ²)) · χ²_{n,1−δ}`.
pub fn uplink_error_bound<T: Real>(params: &CovBoundParams<T>, n: usize, delta: T) -> Result<T> {
    if !(delta > T::zero() && delta < T::one()) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let steady = steady_cov_bound(params)?;
    Ok(steady * chi2_quantile(n, T::one() - delta)?)
}

/// `ε = (ḡ + ‖A‖₂)² ε_up`.
pub fn system_error_bound<T: Real>(g_bar: T, norm_a: T, eps_up: T) -> T {
    let s = g_bar + norm_a;
    s * s * eps_up
}

/// Error bounds attached to one (κ, ρ) design point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBounds<T: Real> {
    pub eps_up: T,
    pub eps: T,
    pub g_bar: T,
    pub chi2: T,
}

impl<T: Real> ErrorBounds<T> {
    /// Bounds for the design value `ḡ = √(g_bar_sq)`.
    ///
    /// A noise-free spec (`P0 = Q = 0`) keeps the covariance at zero for any
    /// ḡ, so `ε_up = 0` is returned even when `ḡ² ≥ 1`.
    pub fn for_design(noise: &NoiseSpec<T>, g_bar_sq: T, norm_a: T) -> Result<Self> {
        let n = noise.n();
        let chi2 = chi2_quantile(n, T::one() - noise.delta())?;
        let g_bar = g_bar_sq.max(T::zero()).sqrt();
        let eps_up = if noise.is_noise_free() {
            T::zero()
        } else {
            uplink_error_bound(&CovBoundParams::from_noise(noise, g_bar_sq)?, n, noise.delta())?
        };
        Ok(Self {
            eps_up,
            eps: system_error_bound(g_bar, norm_a, eps_up),
            g_bar,
            chi2,
        })
    }
}
