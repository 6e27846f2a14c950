//! Exponential integrals and the upper incomplete gamma function at
//! non-positive integer order.
//!
//! `Γ(a, x)` for integer `a <= 0` is evaluated through the bridge
//! `Γ(1 - n, x) = x^(1-n) E_n(x)`; `E_n` itself comes from a Lentz continued
//! fraction for `x >= 1` and from the forward recurrence seeded by the `E₁`
//! power series below that. Differences of tails, which the outage terms
//! consume everywhere, get their own entry points that switch to direct
//! quadrature when subtraction would cancel.

use thiserror::Error;

use crate::quadrature::{self, QuadError, Tolerance};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MAX_ITER: usize = 5000;
const TINY: f64 = 1e-300;

/// Beyond this width the `e^{-s}` weight is below every representable scale.
const TAIL_WIDTH: f64 = 750.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecfunError {
    #[error("{function}: argument out of domain ({detail})")]
    Domain {
        function: &'static str,
        detail: String,
    },
    #[error("{function}: continued fraction did not converge at x = {x}")]
    NoConvergence { function: &'static str, x: f64 },
    #[error("{function}: quadrature fallback failed: {source}")]
    Quadrature {
        function: &'static str,
        #[source]
        source: QuadError,
    },
}

fn domain(function: &'static str, detail: String) -> SpecfunError {
    SpecfunError::Domain { function, detail }
}

fn check_positive(function: &'static str, x: f64) -> Result<(), SpecfunError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(domain(function, format!("x = {x}, need finite x > 0")))
    }
}

/// `E₁(x) - ln x`-free power series, valid (and used) for `0 < x < 1`.
fn e1_series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut power_over_fact = 1.0;
    for k in 1..MAX_ITER {
        let kf = k as f64;
        power_over_fact *= x / kf;
        let term = power_over_fact / kf;
        if k % 2 == 1 {
            sum += term;
        } else {
            sum -= term;
        }
        if term < f64::EPSILON * sum.abs() * 0.25 {
            break;
        }
    }
    -EULER_GAMMA - x.ln() + sum
}

/// `e^x E_n(x)` by the modified Lentz continued fraction; converges for any
/// `x > 0` but only quickly for `x >= 1`.
fn en_continued_fraction_scaled(
    function: &'static str,
    n: u32,
    x: f64,
) -> Result<f64, SpecfunError> {
    let nm1 = f64::from(n - 1);
    let mut b = x + f64::from(n);
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        let a = -fi * (nm1 + fi);
        b += 2.0;
        d = a * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        h *= delta;
        if (delta - 1.0).abs() <= f64::EPSILON {
            return Ok(h);
        }
    }
    Err(SpecfunError::NoConvergence { function, x })
}

/// `E_n(x)` for `0 < x < 1` by forward recurrence from the series `E₁`.
/// The recurrence is stable here because `x < n` for every step.
fn en_small_x(n: u32, x: f64) -> f64 {
    let emx = (-x).exp();
    let mut en = e1_series(x);
    for k in 1..n {
        en = (emx - x * en) / f64::from(k);
    }
    en
}

/// Exponential integral `E₁(x) = ∫ₓ^∞ e^{-t}/t dt`.
pub fn exp_integral_e1(x: f64) -> Result<f64, SpecfunError> {
    check_positive("exp_integral_e1", x)?;
    if x < 1.0 {
        Ok(e1_series(x))
    } else {
        Ok((-x).exp() * en_continued_fraction_scaled("exp_integral_e1", 1, x)?)
    }
}

/// Generalized exponential integral `E_n(x) = ∫₁^∞ e^{-xt}/tⁿ dt`, `n >= 1`.
pub fn exp_integral_en(n: u32, x: f64) -> Result<f64, SpecfunError> {
    if n < 1 {
        return Err(domain("exp_integral_en", format!("n = {n}, need n >= 1")));
    }
    check_positive("exp_integral_en", x)?;
    if x >= 1.0 {
        Ok((-x).exp() * en_continued_fraction_scaled("exp_integral_en", n, x)?)
    } else {
        Ok(en_small_x(n, x))
    }
}

/// Exponentially scaled `e^x E_n(x)`; stays finite where `E_n` underflows.
pub fn exp_integral_en_scaled(n: u32, x: f64) -> Result<f64, SpecfunError> {
    if n < 1 {
        return Err(domain(
            "exp_integral_en_scaled",
            format!("n = {n}, need n >= 1"),
        ));
    }
    check_positive("exp_integral_en_scaled", x)?;
    if x >= 1.0 {
        en_continued_fraction_scaled("exp_integral_en_scaled", n, x)
    } else {
        Ok(x.exp() * en_small_x(n, x))
    }
}

fn order_to_en_index(function: &'static str, a: i32) -> Result<u32, SpecfunError> {
    if a > 0 {
        return Err(domain(function, format!("order a = {a}, need a <= 0")));
    }
    Ok((1 - i64::from(a)) as u32)
}

/// Upper incomplete gamma `Γ(a, x) = ∫ₓ^∞ t^{a-1} e^{-t} dt` for integer `a <= 0`.
pub fn upper_gamma_nonpos(a: i32, x: f64) -> Result<f64, SpecfunError> {
    let n = order_to_en_index("upper_gamma_nonpos", a)?;
    check_positive("upper_gamma_nonpos", x)?;
    Ok(x.powi(a) * exp_integral_en(n, x)?)
}

/// `e^x Γ(a, x)` for integer `a <= 0`.
pub fn upper_gamma_nonpos_scaled(a: i32, x: f64) -> Result<f64, SpecfunError> {
    let n = order_to_en_index("upper_gamma_nonpos_scaled", a)?;
    check_positive("upper_gamma_nonpos_scaled", x)?;
    Ok(x.powi(a) * exp_integral_en_scaled(n, x)?)
}

fn check_interval(function: &'static str, lo: f64, hi: f64) -> Result<(), SpecfunError> {
    if !(lo.is_finite() && lo > 0.0) || hi.is_nan() || hi < lo {
        return Err(domain(
            function,
            format!("need 0 < lo <= hi, got lo = {lo}, hi = {hi}"),
        ));
    }
    Ok(())
}

/// `∫₀^{min(hi-lo, TAIL_WIDTH)} (lo+s)^{a-1} e^{-s} ds`, i.e. `e^{lo}(Γ(a,lo) - Γ(a,hi))`
/// integrated directly.
fn shifted_tail_quadrature(
    function: &'static str,
    a: i32,
    lo: f64,
    hi: f64,
) -> Result<f64, SpecfunError> {
    let width = (hi - lo).min(TAIL_WIDTH);
    let tol = Tolerance {
        rel: 1e-14,
        abs: 0.0,
        max_subdivisions: 2000,
    };
    quadrature::integrate(|s| (lo + s).powi(a - 1) * (-s).exp(), 0.0, width, tol)
        .map(|r| r.value)
        .map_err(|source| SpecfunError::Quadrature { function, source })
}

/// Subtraction keeps fewer than ~13 digits when the difference is this small
/// relative to the larger term.
const CANCELLATION_RATIO: f64 = 1e-3;

/// `E₁(lo) - E₁(hi)` for `0 < lo <= hi` (`hi` may be `+∞`).
///
/// Large `lo` (where `e^{-lo} < 1e-10`) and nearly equal endpoints
/// (`(hi - lo)/lo < 1e-6`) are integrated directly instead of subtracted.
pub fn e1_difference(lo: f64, hi: f64) -> Result<f64, SpecfunError> {
    upper_gamma_nonpos_difference(0, lo, hi)
}

/// `Γ(a, lo) - Γ(a, hi)` for integer `a <= 0`, with the same cancellation
/// handling as [`e1_difference`].
pub fn upper_gamma_nonpos_difference(a: i32, lo: f64, hi: f64) -> Result<f64, SpecfunError> {
    const F: &str = "upper_gamma_nonpos_difference";
    order_to_en_index(F, a)?;
    check_interval(F, lo, hi)?;
    if lo == hi {
        return Ok(0.0);
    }
    if (-lo).exp() < 1e-10 || (hi - lo) / lo < 1e-6 {
        return Ok((-lo).exp() * shifted_tail_quadrature(F, a, lo, hi)?);
    }
    let upper = upper_gamma_nonpos(a, lo)?;
    let lower = if hi.is_infinite() {
        0.0
    } else {
        upper_gamma_nonpos(a, hi)?
    };
    let diff = upper - lower;
    if diff < CANCELLATION_RATIO * upper {
        return Ok((-lo).exp() * shifted_tail_quadrature(F, a, lo, hi)?);
    }
    Ok(diff)
}

/// `e^{lo} (Γ(a, lo) - Γ(a, hi))` without ever forming `e^{lo}` on its own.
pub fn upper_gamma_nonpos_difference_scaled(
    a: i32,
    lo: f64,
    hi: f64,
) -> Result<f64, SpecfunError> {
    const F: &str = "upper_gamma_nonpos_difference_scaled";
    order_to_en_index(F, a)?;
    check_interval(F, lo, hi)?;
    if lo == hi {
        return Ok(0.0);
    }
    if (hi - lo) / lo < 1e-6 {
        return shifted_tail_quadrature(F, a, lo, hi);
    }
    let upper = upper_gamma_nonpos_scaled(a, lo)?;
    let lower = if hi - lo >= TAIL_WIDTH {
        0.0
    } else {
        (lo - hi).exp() * upper_gamma_nonpos_scaled(a, hi)?
    };
    let diff = upper - lower;
    if diff < CANCELLATION_RATIO * upper {
        return shifted_tail_quadrature(F, a, lo, hi);
    }
    Ok(diff)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn e1_reference_points() {
        // mpmath, 40 digits
        assert!(rel(exp_integral_e1(1.0).unwrap(), 0.219_383_934_395_520_27) < 1e-14);
        assert!(rel(exp_integral_e1(0.5).unwrap(), 0.559_773_594_776_160_81) < 1e-14);
        assert!(rel(exp_integral_e1(2.0).unwrap(), 0.048_900_510_708_061_12) < 1e-14);
        assert!(rel(exp_integral_e1(1e-8).unwrap(), 17.843_465_089_050_833) < 1e-14);
        assert!(rel(exp_integral_e1(700.0).unwrap(), 1.406_518_766_234_033e-307) < 1e-12);
    }

    #[test]
    fn e1_underflows_to_zero() {
        assert_eq!(exp_integral_e1(1e4).unwrap(), 0.0);
    }

    #[test]
    fn e1_domain_errors() {
        for x in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                exp_integral_e1(x),
                Err(SpecfunError::Domain { .. })
            ));
        }
    }

    #[test]
    fn en_order_zero_rejected() {
        assert!(exp_integral_en(0, 1.0).is_err());
        assert!(exp_integral_en(2, -0.5).is_err());
    }

    #[test]
    fn en_matches_e1_at_order_one() {
        for x in [0.1, 0.9, 1.0, 3.5, 40.0] {
            assert_eq!(exp_integral_en(1, x).unwrap(), exp_integral_e1(x).unwrap());
        }
    }

    #[test]
    fn gamma_positive_order_rejected() {
        assert!(upper_gamma_nonpos(1, 1.0).is_err());
        assert!(upper_gamma_nonpos(-1, 0.0).is_err());
    }

    #[test]
    fn gamma_reference_points() {
        let cases = [
            (-1, 0.01, 94.967_053_798_378_689),
            (-3, 0.01, 328_382.356_035_773_78),
            (-6, 0.01, 164_679_111_318.620_09),
            (-6, 1.0, 0.051_399_066_738_249_656),
            (-6, 10.0, 2.732_441_420_431_479e-12),
            (-2, 2.0, 0.007_533_344_949_453_973_3),
        ];
        for (a, x, want) in cases {
            let got = upper_gamma_nonpos(a, x).unwrap();
            assert!(rel(got, want) < 1e-12, "Γ({a},{x}) = {got}, want {want}");
        }
    }

    #[test]
    fn difference_edge_cases() {
        assert_eq!(e1_difference(3.0, 3.0).unwrap(), 0.0);
        assert!(e1_difference(0.0, 1.0).is_err());
        assert!(e1_difference(2.0, 1.0).is_err());
        let all = e1_difference(0.7, f64::INFINITY).unwrap();
        assert!(rel(all, exp_integral_e1(0.7).unwrap()) < 1e-14);
    }

    #[test]
    fn scaled_difference_matches_unscaled() {
        for (a, lo, hi) in [(0, 0.3, 0.9), (-2, 1.5, 4.0), (-1, 20.0, 20.5), (0, 5.0, 5.000_001)] {
            let plain = upper_gamma_nonpos_difference(a, lo, hi).unwrap();
            let scaled = upper_gamma_nonpos_difference_scaled(a, lo, hi).unwrap();
            assert!(rel(scaled * (-lo).exp(), plain) < 1e-12);
        }
    }

    #[test]
    fn scaled_difference_survives_huge_arguments() {
        // e^{lo}(E₁(lo) - E₁(hi)) ≈ (1 - e^{-(hi-lo)})/lo for lo ≫ 1
        let v = upper_gamma_nonpos_difference_scaled(0, 2000.0, 2001.0).unwrap();
        assert!(v.is_finite() && v > 0.0);
        assert!(rel(v, (1.0 - (-1.0f64).exp()) / 2000.0) < 1e-3);
    }
}
