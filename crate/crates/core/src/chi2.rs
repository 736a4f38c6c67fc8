//! Chi-squared distribution function and quantile.
//!
//! The CDF is the regularized lower incomplete gamma function `P(n/2, x/2)`,
//! evaluated by its power series below `a + 1` and by a Lentz continued
//! fraction for the upper tail above it. The quantile inverts the CDF by
//! bisection, which is slow but monotone and unconditionally convergent.

use crate::error::{invalid, Result};
use crate::scalar::{from_usize, lit, Real};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos approximation, reflected below 1/2).
pub fn ln_gamma<T: Real>(x: T) -> T {
    let half = lit::<T>(0.5);
    if x < half {
        let pi = T::pi();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = lit::<T>(LANCZOS[0]);
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += lit::<T>(*c) / (x + from_usize(i));
    }
    let t = x + lit::<T>(LANCZOS_G) + half;
    half * (T::two_pi()).ln() + (x + half) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn regularized_lower_gamma<T: Real>(a: T, x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if !x.is_finite() {
        return T::one();
    }
    let prefactor = (-x + a * x.ln() - ln_gamma(a)).exp();
    if x < a + T::one() {
        prefactor * lower_series(a, x)
    } else {
        T::one() - prefactor * upper_continued_fraction(a, x)
    }
}

fn lower_series<T: Real>(a: T, x: T) -> T {
    let mut term = T::one() / a;
    let mut sum = term;
    let mut denom = a;
    for _ in 0..10_000 {
        denom += T::one();
        term *= x / denom;
        sum += term;
        if term.abs() <= sum.abs() * T::EPS {
            break;
        }
    }
    sum
}

fn upper_continued_fraction<T: Real>(a: T, x: T) -> T {
    let tiny = T::EPS * T::EPS * T::EPS;
    let mut b = x + T::one() - a;
    let mut c = T::one() / tiny;
    let mut d = T::one() / b;
    let mut h = d;
    for i in 1..10_000usize {
        let fi = from_usize::<T>(i);
        let an = -fi * (fi - a);
        b += lit::<T>(2.0);
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = T::one() / d;
        let delta = d * c;
        h *= delta;
        if (delta - T::one()).abs() <= T::EPS {
            break;
        }
    }
    h
}

/// CDF of the chi-squared distribution with `dof` degrees of freedom.
pub fn chi2_cdf<T: Real>(dof: usize, x: T) -> T {
    regularized_lower_gamma(from_usize::<T>(dof) * lit(0.5), x * lit(0.5))
}

/// Quantile `χ²_{dof}(p)`, i.e. the `x` with `chi2_cdf(dof, x) = p`.
pub fn chi2_quantile<T: Real>(dof: usize, p: T) -> Result<T> {
    if dof == 0 {
        return Err(invalid("chi-squared degrees of freedom must be at least 1"));
    }
    if !(p > T::zero() && p < T::one()) {
        return Err(invalid(format!("chi-squared probability must lie in (0, 1), got {p}")));
    }
    let mut lo = T::zero();
    let mut hi = from_usize::<T>(dof).max(T::one());
    while chi2_cdf(dof, hi) < p {
        lo = hi;
        hi *= lit(2.0);
        if !hi.is_finite() {
            return Err(invalid("chi-squared quantile bracket overflowed"));
        }
    }
    for _ in 0..400 {
        let mid = (lo + hi) * lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if chi2_cdf(dof, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * lit(0.5))
}
