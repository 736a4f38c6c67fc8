//! Small dense log-barrier solver for linear matrix inequality problems.
//!
//! Problems have the form
//!
//! ```text
//! minimize    cᵀx − Σ_k log det O_k(x)
//! subject to  G_i(x) ⪰ 0,   i = 1..N
//! ```
//!
//! where every `O_k` and `G_i` is an affine symmetric matrix function of the
//! decision vector. A phase-one problem finds a strictly feasible point, and
//! the path-following phase then drives the duality-gap bound `ν/t` below the
//! requested tolerance. Iterates stay strictly inside every cone, so returned
//! points satisfy every constraint with a positive margin.
//!
//! The solver targets the handful-of-variables instances produced by the
//! synthesis module; it uses dense Newton steps and makes no attempt at
//! exploiting sparsity.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::linalg::{lambda_min, symmetrize};
use crate::scalar::{from_usize, lit, Real};

/// Affine matrix expression `C + Σ_j x_j A_j` over the solver's decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr<T: Real> {
    constant: DMatrix<T>,
    coeffs: BTreeMap<usize, DMatrix<T>>,
}

impl<T: Real> AffineExpr<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn constant(m: DMatrix<T>) -> Self {
        Self {
            constant: m,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn scalar_constant(v: T) -> Self {
        Self::constant(DMatrix::from_element(1, 1, v))
    }

    /// Single decision variable as a 1×1 expression.
    pub fn var(index: usize) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(index, DMatrix::from_element(1, 1, T::one()));
        Self {
            constant: DMatrix::zeros(1, 1),
            coeffs,
        }
    }

    pub fn nrows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn constant_part(&self) -> &DMatrix<T> {
        &self.constant
    }

    pub fn coefficients(&self) -> impl Iterator<Item = (usize, &DMatrix<T>)> {
        self.coeffs.iter().map(|(k, v)| (*k, v))
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.values().all(|m| m.iter().all(|v| *v == T::zero()))
    }

    /// Adds `coef · x_index` to the expression.
    pub fn add_term(mut self, index: usize, coef: DMatrix<T>) -> Self {
        assert_eq!(coef.shape(), self.constant.shape(), "coefficient shape mismatch");
        match self.coeffs.get_mut(&index) {
            Some(c) => *c += coef,
            None => {
                self.coeffs.insert(index, coef);
            }
        }
        self
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.constant.shape(), other.constant.shape(), "affine add shape mismatch");
        let mut out = self.clone();
        out.constant += &other.constant;
        for (k, v) in &other.coeffs {
            out = out.add_term(*k, v.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-T::one()))
    }

    pub fn scale(&self, c: T) -> Self {
        Self {
            constant: &self.constant * c,
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, v * c)).collect(),
        }
    }

    /// `M · self`.
    pub fn lmul(&self, m: &DMatrix<T>) -> Self {
        Self {
            constant: m * &self.constant,
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, m * v)).collect(),
        }
    }

    /// `self · M`.
    pub fn rmul(&self, m: &DMatrix<T>) -> Self {
        Self {
            constant: &self.constant * m,
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, v * m)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            constant: self.constant.transpose(),
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, v.transpose())).collect(),
        }
    }

    /// Row `i` as a 1×cols expression.
    pub fn row(&self, i: usize) -> Self {
        Self {
            constant: self.constant.rows(i, 1).into_owned(),
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, v.rows(i, 1).into_owned())).collect(),
        }
    }

    /// Assembles a block matrix from a grid of expressions.
    pub fn block(grid: &[Vec<&AffineExpr<T>>]) -> Self {
        let row_heights: Vec<usize> = grid.iter().map(|r| r[0].nrows()).collect();
        let col_widths: Vec<usize> = grid[0].iter().map(|e| e.ncols()).collect();
        let rows: usize = row_heights.iter().sum();
        let cols: usize = col_widths.iter().sum();
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for (bi, brow) in grid.iter().enumerate() {
            assert_eq!(brow.len(), col_widths.len(), "ragged block grid");
            let mut c0 = 0;
            for (bj, e) in brow.iter().enumerate() {
                assert_eq!(e.nrows(), row_heights[bi], "block height mismatch");
                assert_eq!(e.ncols(), col_widths[bj], "block width mismatch");
                out.constant.view_mut((r0, c0), e.shape()).copy_from(&e.constant);
                for (k, v) in &e.coeffs {
                    let mut full = DMatrix::zeros(rows, cols);
                    full.view_mut((r0, c0), e.shape()).copy_from(v);
                    out = out.add_term(*k, full);
                }
                c0 += col_widths[bj];
            }
            r0 += row_heights[bi];
        }
        out
    }

    fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn eval(&self, x: &DVector<T>) -> DMatrix<T> {
        let mut m = self.constant.clone();
        for (k, v) in &self.coeffs {
            m += v * x[*k];
        }
        m
    }

    fn max_index(&self) -> Option<usize> {
        self.coeffs.keys().next_back().copied()
    }
}

/// A named constraint `expr ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiConstraint<T: Real> {
    pub name: String,
    pub expr: AffineExpr<T>,
}

/// Objective `cᵀx − Σ log det O_k(x)` with LMI constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem<T: Real> {
    pub n_vars: usize,
    pub linear: DVector<T>,
    pub log_det_terms: Vec<AffineExpr<T>>,
    pub constraints: Vec<LmiConstraint<T>>,
}

impl<T: Real> LmiProblem<T> {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            linear: DVector::zeros(n_vars),
            log_det_terms: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn add_constraint(&mut self, name: impl Into<String>, expr: AffineExpr<T>) {
        assert_eq!(expr.nrows(), expr.ncols(), "LMI constraint must be square");
        if let Some(k) = expr.max_index() {
            assert!(k < self.n_vars, "constraint references unknown variable {k}");
        }
        self.constraints.push(LmiConstraint {
            name: name.into(),
            expr,
        });
    }

    pub fn add_log_det(&mut self, expr: AffineExpr<T>) {
        assert_eq!(expr.nrows(), expr.ncols(), "log-det term must be square");
        self.log_det_terms.push(expr);
    }

    /// Objective value; `None` outside the domain of the log-det terms.
    pub fn objective(&self, x: &DVector<T>) -> Option<T> {
        let mut v = self.linear.dot(x);
        for o in &self.log_det_terms {
            let chol = Cholesky::new(symmetrize(&o.eval(x)))?;
            v -= log_det_chol(&chol);
        }
        Some(v)
    }

    /// Smallest eigenvalue of every constraint at `x`.
    pub fn residuals(&self, x: &DVector<T>) -> Vec<(String, T)> {
        self.constraints
            .iter()
            .map(|c| (c.name.clone(), lambda_min(&c.expr.eval(x))))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSettings<T: Real> {
    /// Stop when the duality-gap bound `ν/t` falls below this.
    pub gap_tol: T,
    /// Barrier parameter growth factor.
    pub mu: T,
    pub t0: T,
    /// Newton-decrement threshold `λ²/2` for a centering step.
    pub newton_tol: T,
    pub max_newton: usize,
    pub max_outer: usize,
    /// Radius of the Euclidean ball added to keep every iterate bounded.
    pub radius: T,
}

impl<T: Real> Default for BarrierSettings<T> {
    fn default() -> Self {
        Self {
            gap_tol: lit(1e-9),
            mu: lit(20.0),
            t0: T::one(),
            newton_tol: lit(1e-11),
            max_newton: 200,
            max_outer: 80,
            radius: lit(1e6),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmiStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiSolution<T: Real> {
    pub status: LmiStatus,
    pub x: DVector<T>,
    pub objective: T,
    /// Final bound on the distance to the optimal value.
    pub gap_bound: T,
    pub newton_steps: usize,
    pub message: String,
}

fn log_det_chol<T: Real>(chol: &Cholesky<T, Dyn>) -> T {
    chol.l_dirty()
        .diagonal()
        .iter()
        .fold(T::zero(), |acc, d| acc + d.ln())
        * lit(2.0)
}

/// Internal representation shared by both phases: `t·(cᵀx − Σ log det O) − Σ log det G − log(R² − ‖x‖²)`.
struct Barrier<'a, T: Real> {
    n: usize,
    linear: &'a DVector<T>,
    objective_terms: Vec<&'a AffineExpr<T>>,
    constraints: Vec<&'a AffineExpr<T>>,
    radius_sq: T,
    /// Only the first `bounded_vars` coordinates enter the radius term.
    bounded_vars: usize,
}

struct Eval<T: Real> {
    value: T,
    grad: DVector<T>,
    hess: DMatrix<T>,
}

impl<'a, T: Real> Barrier<'a, T> {
    fn nu(&self) -> T {
        from_usize::<T>(self.constraints.iter().map(|c| c.nrows()).sum::<usize>() + 2)
    }

    fn value(&self, x: &DVector<T>, t: T) -> Option<T> {
        let mut v = t * self.linear.dot(x);
        for o in &self.objective_terms {
            v -= t * log_det_chol(&Cholesky::new(symmetrize(&o.eval(x)))?);
        }
        for g in &self.constraints {
            v -= log_det_chol(&Cholesky::new(symmetrize(&g.eval(x)))?);
        }
        let slack = self.radius_sq - x.rows(0, self.bounded_vars).norm_squared();
        if !(slack > T::zero()) {
            return None;
        }
        v -= slack.ln();
        v.is_finite().then_some(v)
    }

    fn accumulate(&self, expr: &AffineExpr<T>, x: &DVector<T>, weight: T, out: &mut Eval<T>) -> Option<()> {
        let chol = Cholesky::new(symmetrize(&expr.eval(x)))?;
        out.value -= weight * log_det_chol(&chol);
        let l = chol.l();
        let ws: Vec<(usize, DMatrix<T>)> = expr
            .coefficients()
            .map(|(k, a)| {
                let y = l.solve_lower_triangular(a).expect("triangular solve");
                let w = l.solve_lower_triangular(&y.transpose()).expect("triangular solve");
                (k, symmetrize(&w))
            })
            .collect();
        for (i, (ki, wi)) in ws.iter().enumerate() {
            out.grad[*ki] -= weight * wi.trace();
            for (kj, wj) in ws.iter().skip(i) {
                let h = weight * wi.dot(wj);
                out.hess[(*ki, *kj)] += h;
                if ki != kj {
                    out.hess[(*kj, *ki)] += h;
                }
            }
        }
        Some(())
    }

    fn eval(&self, x: &DVector<T>, t: T) -> Option<Eval<T>> {
        let mut out = Eval {
            value: t * self.linear.dot(x),
            grad: self.linear * t,
            hess: DMatrix::zeros(self.n, self.n),
        };
        for o in &self.objective_terms {
            self.accumulate(o, x, t, &mut out)?;
        }
        for g in &self.constraints {
            self.accumulate(g, x, T::one(), &mut out)?;
        }
        let b = self.bounded_vars;
        let xb = x.rows(0, b);
        let slack = self.radius_sq - xb.norm_squared();
        if !(slack > T::zero()) {
            return None;
        }
        out.value -= slack.ln();
        let two = lit::<T>(2.0);
        for i in 0..b {
            out.grad[i] += two * x[i] / slack;
            out.hess[(i, i)] += two / slack;
            for j in 0..b {
                out.hess[(i, j)] += lit::<T>(4.0) * x[i] * x[j] / (slack * slack);
            }
        }
        out.value.is_finite().then_some(out)
    }

    /// Damped Newton centering at barrier weight `t`. Returns steps taken.
    fn center(
        &self,
        x: &mut DVector<T>,
        t: T,
        settings: &BarrierSettings<T>,
        mut stop: impl FnMut(&DVector<T>) -> bool,
    ) -> Result<usize, String> {
        for step in 0..settings.max_newton {
            let ev = self.eval(x, t).ok_or("iterate left the barrier domain")?;
            let dx = newton_direction(&ev.hess, &ev.grad).ok_or("singular Newton system")?;
            let decrement = -ev.grad.dot(&dx);
            if !decrement.is_finite() {
                return Err("non-finite Newton decrement".into());
            }
            if decrement * lit(0.5) <= settings.newton_tol {
                return Ok(step);
            }
            let mut s = T::one();
            let mut accepted = false;
            for _ in 0..80 {
                let trial = &*x + &dx * s;
                if let Some(v) = self.value(&trial, t) {
                    if v <= ev.value - lit::<T>(0.25) * s * decrement {
                        *x = trial;
                        accepted = true;
                        break;
                    }
                }
                s *= lit(0.5);
            }
            if !accepted {
                // No further progress is representable; treat as centred.
                return Ok(step);
            }
            if stop(x) {
                return Ok(step + 1);
            }
        }
        Ok(settings.max_newton)
    }
}

fn newton_direction<T: Real>(h: &DMatrix<T>, g: &DVector<T>) -> Option<DVector<T>> {
    let h = symmetrize(h);
    let scale = h.diagonal().iter().fold(T::zero(), |a, v| a.max(v.abs())).max(T::EPS);
    let mut reg = T::zero();
    for _ in 0..12 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += reg;
        }
        if let Some(chol) = Cholesky::new(hr) {
            let d = chol.solve(&(-g));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        reg = if reg == T::zero() { scale * T::EPS * lit(10.0) } else { reg * lit(100.0) };
    }
    None
}

/// Finds a strictly feasible point; `Ok(None)` means infeasible.
fn phase_one<T: Real>(
    problem: &LmiProblem<T>,
    active: &[&AffineExpr<T>],
    settings: &BarrierSettings<T>,
    steps: &mut usize,
) -> Result<Option<DVector<T>>, String> {
    let n = problem.n_vars;
    let s_idx = n;
    let x0 = DVector::<T>::zeros(n);

    // Every constraint and log-det argument gets a uniform shift s·I.
    let mut shifted: Vec<AffineExpr<T>> = Vec::new();
    let mut worst = T::zero();
    for e in active.iter().copied().chain(problem.log_det_terms.iter()) {
        let dim = e.nrows();
        worst = worst.max(-lambda_min(&e.eval(&x0)));
        shifted.push(e.clone().add_term(s_idx, DMatrix::identity(dim, dim)));
    }
    let floor = AffineExpr::var(s_idx).add(&AffineExpr::scalar_constant(T::one()));
    shifted.push(floor);

    let mut linear = DVector::zeros(n + 1);
    linear[s_idx] = T::one();
    let barrier = Barrier {
        n: n + 1,
        linear: &linear,
        objective_terms: Vec::new(),
        constraints: shifted.iter().collect(),
        radius_sq: settings.radius * settings.radius,
        bounded_vars: n,
    };
    let nu = barrier.nu();
    let mut z = DVector::zeros(n + 1);
    z[s_idx] = worst + T::one();

    let feasible = |z: &DVector<T>| z[s_idx] < T::zero();
    if feasible(&z) {
        return Ok(Some(z.rows(0, n).into_owned()));
    }
    let mut t = settings.t0;
    for _ in 0..settings.max_outer {
        *steps += barrier.center(&mut z, t, settings, feasible)?;
        let s = z[s_idx];
        if s < T::zero() {
            return Ok(Some(z.rows(0, n).into_owned()));
        }
        if s - nu / t > T::zero() {
            return Ok(None);
        }
        if nu / t < settings.gap_tol {
            // Optimal shift is zero within tolerance: no interior point.
            return Ok(None);
        }
        t *= settings.mu;
    }
    Err("phase one did not terminate".into())
}

/// Solves the problem, returning the status and the final iterate.
pub fn solve<T: Real>(problem: &LmiProblem<T>, settings: &BarrierSettings<T>) -> LmiSolution<T> {
    let n = problem.n_vars;
    let fail = |status: LmiStatus, message: String, steps: usize| LmiSolution {
        status,
        x: DVector::zeros(n),
        objective: T::zero(),
        gap_bound: T::zero(),
        newton_steps: steps,
        message,
    };

    // Constant constraints are checked once and dropped.
    let tol = lit::<T>(1e-12);
    let mut active: Vec<&AffineExpr<T>> = Vec::new();
    for c in &problem.constraints {
        if c.expr.is_constant() {
            let lmin = lambda_min(c.expr.constant_part());
            if lmin < -tol {
                return fail(
                    LmiStatus::Infeasible,
                    format!("constant constraint {} is violated (min eigenvalue {lmin})", c.name),
                    0,
                );
            }
        } else {
            active.push(&c.expr);
        }
    }

    let mut steps = 0;
    let x0 = match phase_one(problem, &active, settings, &mut steps) {
        Ok(Some(x)) => x,
        Ok(None) => return fail(LmiStatus::Infeasible, "no strictly feasible point".into(), steps),
        Err(e) => return fail(LmiStatus::NumericalFailure, format!("phase one: {e}"), steps),
    };

    let barrier = Barrier {
        n,
        linear: &problem.linear,
        objective_terms: problem.log_det_terms.iter().collect(),
        constraints: active,
        radius_sq: settings.radius * settings.radius,
        bounded_vars: n,
    };
    let nu = barrier.nu();
    let mut x = x0;
    let mut t = settings.t0;
    for _ in 0..settings.max_outer {
        match barrier.center(&mut x, t, settings, |_| false) {
            Ok(k) => steps += k,
            Err(e) => return fail(LmiStatus::NumericalFailure, format!("phase two: {e}"), steps),
        }
        if nu / t <= settings.gap_tol {
            break;
        }
        t *= settings.mu;
    }
    let gap = nu / t;
    match problem.objective(&x) {
        Some(obj) if gap <= settings.gap_tol => LmiSolution {
            status: LmiStatus::Optimal,
            x,
            objective: obj,
            gap_bound: gap,
            newton_steps: steps,
            message: String::new(),
        },
        Some(obj) => LmiSolution {
            status: LmiStatus::NumericalFailure,
            x,
            objective: obj,
            gap_bound: gap,
            newton_steps: steps,
            message: format!("outer iteration limit reached with gap bound {gap}"),
        },
        None => fail(LmiStatus::NumericalFailure, "final iterate outside objective domain".into(), steps),
    }
}
