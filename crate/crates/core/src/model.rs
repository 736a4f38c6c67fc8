//! Plant, constraint sets and ellipsoid geometry.
//!
//! All types validate their invariants on construction and are immutable
//! afterwards, so they can be shared freely between worker threads.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, mismatch, Result};
use crate::linalg::{self, all_finite};
use crate::scalar::{lit, Real};

pub use crate::linalg::spectral_norm;

/// Relative tolerance used by [`Ellipsoid::new`] for the symmetry check.
pub const DEFAULT_SYMMETRY_TOL: f64 = 1e-12;

/// Discrete-time plant `x(k+1) = A x(k) + B u(k) + d(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem<T: Real> {
    a: DMatrix<T>,
    b: DMatrix<T>,
}

impl<T: Real> LtiSystem<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>) -> Result<Self> {
        linalg::require_square(&a, "A")?;
        if a.nrows() == 0 {
            return Err(invalid("state dimension must be at least 1"));
        }
        if b.nrows() != a.nrows() {
            return Err(mismatch("LtiSystem B rows", a.nrows(), b.nrows()));
        }
        if b.ncols() == 0 {
            return Err(invalid("input dimension must be at least 1"));
        }
        if !all_finite(&a) || !all_finite(&b) {
            return Err(invalid("system matrices must be finite"));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Closed-loop matrix `A + B K`.
    pub fn closed_loop(&self, k: &DMatrix<T>) -> Result<DMatrix<T>> {
        if k.nrows() != self.m() || k.ncols() != self.n() {
            return Err(mismatch(
                "closed_loop gain",
                format!("{}x{}", self.m(), self.n()),
                format!("{}x{}", k.nrows(), k.ncols()),
            ));
        }
        Ok(&self.a + &self.b * k)
    }
}

/// Axis-aligned interval box `lo ≤ x ≤ hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet<T: Real> {
    lo: DVector<T>,
    hi: DVector<T>,
}

impl<T: Real> BoxSet<T> {
    pub fn new(lo: DVector<T>, hi: DVector<T>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(mismatch("BoxSet bounds", lo.len(), hi.len()));
        }
        if lo.is_empty() {
            return Err(invalid("box must have at least one dimension"));
        }
        for i in 0..lo.len() {
            if !lo[i].is_finite() || !hi[i].is_finite() {
                return Err(invalid(format!("box bound {i} is not finite")));
            }
            if lo[i] > hi[i] {
                return Err(invalid(format!("box bound {i}: lo {} > hi {}", lo[i], hi[i])));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Box symmetric about the origin with half-widths `half`.
    pub fn symmetric(half: DVector<T>) -> Result<Self> {
        Self::new(-half.clone(), half)
    }

    pub fn lo(&self) -> &DVector<T> {
        &self.lo
    }

    pub fn hi(&self) -> &DVector<T> {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &DVector<T>) -> bool {
        x.len() == self.dim() && (0..self.dim()).all(|i| self.lo[i] <= x[i] && x[i] <= self.hi[i])
    }
}

/// Origin-centred ball `{d | dᵀd ≤ radius_sq}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallBound<T: Real> {
    radius_sq: T,
}

impl<T: Real> BallBound<T> {
    pub fn new(radius_sq: T) -> Result<Self> {
        if !(radius_sq >= T::zero()) || !radius_sq.is_finite() {
            return Err(invalid(format!("ball radius_sq must be finite and nonnegative, got {radius_sq}")));
        }
        Ok(Self { radius_sq })
    }

    pub fn radius_sq(&self) -> T {
        self.radius_sq
    }

    pub fn contains(&self, d: &DVector<T>) -> bool {
        d.norm_squared() <= self.radius_sq
    }
}

/// Polytope `{x | c_j x ≤ 1 ∀j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopeSafety<T: Real> {
    rows: Vec<DVector<T>>,
}

impl<T: Real> PolytopeSafety<T> {
    pub fn new(rows: Vec<DVector<T>>) -> Result<Self> {
        let first = rows.first().ok_or_else(|| invalid("safety polytope needs at least one row"))?;
        let n = first.len();
        if n == 0 {
            return Err(invalid("safety rows must be nonempty vectors"));
        }
        for (j, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(mismatch("PolytopeSafety row", n, r.len()));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("safety row {j} is not finite")));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[DVector<T>] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn contains(&self, x: &DVector<T>) -> bool {
        x.len() == self.dim() && self.rows.iter().all(|c| c.dot(x) <= T::one())
    }
}

/// Per-channel amplitude bound `max_i |u_i| ≤ u_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputLimit<T: Real> {
    u_max: T,
}

impl<T: Real> InputLimit<T> {
    pub fn new(u_max: T) -> Result<Self> {
        if !(u_max > T::zero()) || !u_max.is_finite() {
            return Err(invalid(format!("u_max must be positive, got {u_max}")));
        }
        Ok(Self { u_max })
    }

    pub fn u_max(&self) -> T {
        self.u_max
    }
}

/// Ellipsoid `{x | xᵀ M x ≤ 1}` with `M` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid<T: Real> {
    m: DMatrix<T>,
}

impl<T: Real> Ellipsoid<T> {
    pub fn new(m: DMatrix<T>) -> Result<Self> {
        Self::with_tolerance(m, lit(DEFAULT_SYMMETRY_TOL))
    }

    /// Like [`Ellipsoid::new`] with an explicit relative symmetry tolerance.
    /// The stored matrix is the symmetric part of `m`.
    pub fn with_tolerance(m: DMatrix<T>, rel_tol: T) -> Result<Self> {
        linalg::require_square(&m, "ellipsoid shape")?;
        if m.nrows() == 0 || !all_finite(&m) {
            return Err(invalid("ellipsoid shape must be a finite nonempty matrix"));
        }
        if !linalg::is_symmetric(&m, rel_tol) {
            return Err(invalid("ellipsoid shape is not symmetric"));
        }
        let m = linalg::symmetrize(&m);
        let lmin = linalg::lambda_min(&m);
        if !(lmin > T::zero()) {
            return Err(invalid(format!("ellipsoid shape is not positive definite (min eigenvalue {lmin})")));
        }
        Ok(Self { m })
    }

    pub fn shape(&self) -> &DMatrix<T> {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// `xᵀ M x`.
    pub fn level(&self, x: &DVector<T>) -> Result<T> {
        if x.len() != self.dim() {
            return Err(mismatch("ellipsoid level", self.dim(), x.len()));
        }
        Ok(linalg::quad_form(&self.m, x))
    }
}

/// Converts a box strictly containing the origin into `c_j x ≤ 1` rows.
///
/// Row order: for each coordinate, the upper bound row `eᵢ/hiᵢ` then the
/// lower bound row `−eᵢ/(−loᵢ)`.
pub fn box_to_halfspaces<T: Real>(bx: &BoxSet<T>) -> Result<PolytopeSafety<T>> {
    let n = bx.dim();
    let mut rows = Vec::with_capacity(2 * n);
    for i in 0..n {
        let (lo, hi) = (bx.lo()[i], bx.hi()[i]);
        if !(lo < T::zero() && T::zero() < hi) {
            return Err(invalid(format!(
                "box coordinate {i} = [{lo}, {hi}] does not strictly contain the origin"
            )));
        }
        let mut up = DVector::zeros(n);
        up[i] = T::one() / hi;
        let mut down = DVector::zeros(n);
        down[i] = -T::one() / (-lo);
        rows.push(up);
        rows.push(down);
    }
    PolytopeSafety::new(rows)
}

/// Tightest origin-centred ball containing the box: `Σᵢ max(loᵢ², hiᵢ²)`.
pub fn enclosing_ball<T: Real>(bx: &BoxSet<T>) -> BallBound<T> {
    let r = (0..bx.dim()).fold(T::zero(), |acc, i| {
        let (lo, hi) = (bx.lo()[i], bx.hi()[i]);
        acc + (lo * lo).max(hi * hi)
    });
    BallBound { radius_sq: r }
}

/// `xᵀ M x ≤ 1 + tol`.
pub fn ellipsoid_contains<T: Real>(e: &Ellipsoid<T>, x: &DVector<T>, tol: T) -> Result<bool> {
    if tol < T::zero() {
        return Err(invalid("containment tolerance must be nonnegative"));
    }
    Ok(e.level(x)? <= T::one() + tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn bx(lo: &[f64], hi: &[f64]) -> BoxSet<f64> {
        BoxSet::new(DVector::from_column_slice(lo), DVector::from_column_slice(hi)).unwrap()
    }

    #[test]
    fn halfspaces_of_symmetric_square() {
        let p = box_to_halfspaces(&bx(&[-2.0, -2.0], &[2.0, 2.0])).unwrap();
        let rows: Vec<Vec<f64>> = p.rows().iter().map(|r| r.iter().copied().collect()).collect();
        assert_eq!(rows, vec![vec![0.5, 0.0], vec![-0.5, 0.0], vec![0.0, 0.5], vec![0.0, -0.5]]);
    }

    #[test]
    fn halfspaces_one_dimensional() {
        let p = box_to_halfspaces(&bx(&[-1.0], &[1.0])).unwrap();
        assert_eq!(p.rows()[0][0], 1.0);
        assert_eq!(p.rows()[1][0], -1.0);
        let p = box_to_halfspaces(&bx(&[-1.0], &[3.0])).unwrap();
        assert_eq!(p.rows()[0][0], 1.0 / 3.0);
        assert_eq!(p.rows()[1][0], -1.0);
    }

    #[test]
    fn halfspaces_reject_box_without_origin() {
        assert!(box_to_halfspaces(&bx(&[0.0, -1.0], &[1.0, 1.0])).is_err());
        assert!(box_to_halfspaces(&bx(&[0.5], &[1.0])).is_err());
    }

    #[test]
    fn enclosing_ball_examples() {
        let r = enclosing_ball(&bx(&[-0.02, -0.01], &[0.02, 0.01])).radius_sq();
        assert!((r - 5.0e-4).abs() < 1e-18);
        assert_eq!(enclosing_ball(&bx(&[0.0, 0.0], &[0.0, 0.0])).radius_sq(), 0.0);
        assert_eq!(enclosing_ball(&bx(&[-1.0], &[1.0])).radius_sq(), 1.0);
    }

    #[test]
    fn ellipsoid_containment() {
        let e = Ellipsoid::new(DMatrix::identity(2, 2) * 0.25).unwrap();
        assert!(ellipsoid_contains(&e, &dvector![2.0, 0.0], 0.0).unwrap());
        assert!(!ellipsoid_contains(&e, &dvector![2.0, 2.0], 0.0).unwrap());
        assert!(ellipsoid_contains(&e, &dvector![0.0, 0.0], 0.0).unwrap());
        assert!(ellipsoid_contains(&e, &dvector![0.0, 0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn ellipsoid_rejects_indefinite_and_asymmetric() {
        assert!(Ellipsoid::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).is_err());
        assert!(Ellipsoid::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(Ellipsoid::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0])).is_err());
        assert!(Ellipsoid::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 1.0])).is_ok());
    }

    #[test]
    fn spectral_norm_trivial() {
        assert!((spectral_norm(&DMatrix::<f64>::identity(3, 3)) - 1.0).abs() < 1e-14);
        assert_eq!(spectral_norm(&DMatrix::<f64>::zeros(2, 2)), 0.0);
    }

    #[test]
    fn system_validation() {
        let a = DMatrix::<f64>::identity(2, 2);
        assert!(LtiSystem::new(a.clone(), DMatrix::zeros(3, 1)).is_err());
        assert!(LtiSystem::<f64>::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1)).is_err());
        assert!(LtiSystem::new(a.clone(), DMatrix::zeros(2, 0)).is_err());
        let mut bad = a.clone();
        bad[(0, 1)] = f64::NAN;
        assert!(LtiSystem::new(bad, DMatrix::zeros(2, 1)).is_err());
        let s = LtiSystem::new(a, DMatrix::zeros(2, 1)).unwrap();
        assert_eq!((s.n(), s.m()), (2, 1));
    }

    #[test]
    fn works_in_single_precision() {
        let b = BoxSet::<f32>::symmetric(DVector::from_vec(vec![2.0, 1.0])).unwrap();
        assert_eq!(enclosing_ball(&b).radius_sq(), 5.0);
        assert_eq!(box_to_halfspaces(&b).unwrap().rows().len(), 4);
    }
}
