//! Globally adaptive Gauss–Kronrod (G10/K21) integration on finite intervals.
//!
//! Panels are bisected in order of largest estimated error until the summed
//! error estimate meets `max(abs_tol, rel_tol * |integral|)`. Error estimates
//! use the QUADPACK rescaling of `|K21 - G10|`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("integration limits must be finite with lo <= hi, got [{lo}, {hi}]")]
    BadInterval { lo: f64, hi: f64 },
    #[error("integrand returned a non-finite value at t = {at}")]
    NonFinite { at: f64 },
    #[error(
        "no convergence after {subdivisions} subdivisions: estimate {value:e}, error {abs_error:e}"
    )]
    NoConvergence {
        value: f64,
        abs_error: f64,
        subdivisions: usize,
    },
}

/// Tolerances for one adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_subdivisions: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel: 1e-12,
            abs: 0.0,
            max_subdivisions: 2000,
        }
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
    pub subdivisions: usize,
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const ROUNDOFF_REL: f64 = 100.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    // Ties broken by position so the subdivision order is fully deterministic.
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.lo.total_cmp(&self.lo))
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

fn kronrod21<F>(f: &mut F, lo: f64, hi: f64) -> Result<Panel, QuadError>
where
    F: FnMut(f64) -> f64,
{
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut eval = |t: f64| {
        let v = f(t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadError::NonFinite { at: t })
        }
    };

    let f_center = eval(center)?;
    let mut res_gauss = 0.0;
    let mut res_kronrod = f_center * WGK[10];
    let mut res_abs = res_kronrod.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];

    for j in 0..5 {
        let k = 2 * j + 1;
        let dx = half * XGK[k];
        let (a, b) = (eval(center - dx)?, eval(center + dx)?);
        fv1[k] = a;
        fv2[k] = b;
        res_gauss += WG[j] * (a + b);
        res_kronrod += WGK[k] * (a + b);
        res_abs += WGK[k] * (a.abs() + b.abs());
    }
    for j in 0..5 {
        let k = 2 * j;
        let dx = half * XGK[k];
        let (a, b) = (eval(center - dx)?, eval(center + dx)?);
        fv1[k] = a;
        fv2[k] = b;
        res_kronrod += WGK[k] * (a + b);
        res_abs += WGK[k] * (a.abs() + b.abs());
    }

    let mean = 0.5 * res_kronrod;
    let mut res_asc = WGK[10] * (f_center - mean).abs();
    for k in 0..10 {
        res_asc += WGK[k] * ((fv1[k] - mean).abs() + (fv2[k] - mean).abs());
    }

    let err = (res_kronrod - res_gauss) * half;
    let scale = half.abs();
    Ok(Panel {
        lo,
        hi,
        value: res_kronrod * half,
        error: rescale_error(err, res_abs * scale, res_asc * scale),
    })
}

/// Integrate `f` over `[lo, hi]` to the requested tolerance.
///
/// Fails rather than truncating when the subdivision budget runs out, and
/// when the integrand produces NaN or an infinity anywhere it is sampled.
/// Relative tolerances below `100 ε` are raised to `100 ε`.
pub fn integrate<F>(mut f: F, lo: f64, hi: f64, tol: Tolerance) -> Result<Integral, QuadError>
where
    F: FnMut(f64) -> f64,
{
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(QuadError::BadInterval { lo, hi });
    }
    if lo == hi {
        return Ok(Integral {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
            subdivisions: 0,
        });
    }

    // Per-panel error estimates never drop below 50 eps of the panel's
    // |f| mass, so tighter relative requests could not terminate.
    let rel = tol.rel.max(ROUNDOFF_REL);
    let first = kronrod21(&mut f, lo, hi)?;
    let mut evaluations = 21;
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut subdivisions = 0;

    while error > tol.abs.max(rel * value.abs()) {
        if subdivisions >= tol.max_subdivisions {
            return Err(QuadError::NoConvergence {
                value,
                abs_error: error,
                subdivisions,
            });
        }
        let worst = heap.pop().expect("at least one panel");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // Panel can no longer be split in floating point; keep its estimate.
            heap.push(Panel {
                error: 0.0,
                ..worst
            });
            error -= worst.error;
            if heap.iter().all(|p| p.error == 0.0) {
                break;
            }
            continue;
        }
        let left = kronrod21(&mut f, worst.lo, mid)?;
        let right = kronrod21(&mut f, mid, worst.hi)?;
        evaluations += 42;
        subdivisions += 1;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);

        // Re-sum periodically so the running totals do not drift.
        if subdivisions % 64 == 0 {
            value = heap.iter().map(|p| p.value).sum();
            error = heap.iter().map(|p| p.error).sum();
        }
    }

    let mut panels: Vec<Panel> = heap.into_vec();
    panels.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    Ok(Integral {
        value: panels.iter().map(|p| p.value).sum(),
        abs_error: panels.iter().map(|p| p.error).sum(),
        evaluations,
        subdivisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|t| t.powi(5) - 2.0 * t, 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((r.value - (64.0 / 6.0 - 4.0)).abs() < 1e-13);
    }

    #[test]
    fn peaked_integrand_converges() {
        // ∫₀¹ 1/(1e-4 + t²) dt = 100·atan(100)
        let r = integrate(|t| 1.0 / (1e-4 + t * t), 0.0, 1.0, Tolerance::default()).unwrap();
        let exact = 100.0 * 100.0f64.atan();
        assert!(((r.value - exact) / exact).abs() < 1e-11);
        assert!(r.subdivisions > 0);
    }

    #[test]
    fn empty_interval_is_zero() {
        let r = integrate(|t| t, 3.0, 3.0, Tolerance::default()).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn reversed_interval_rejected() {
        assert!(matches!(
            integrate(|t| t, 1.0, 0.0, Tolerance::default()),
            Err(QuadError::BadInterval { .. })
        ));
    }

    #[test]
    fn nan_integrand_reported() {
        let r = integrate(|t| if t > 0.5 { f64::NAN } else { t }, 0.0, 1.0, Tolerance::default());
        assert!(matches!(r, Err(QuadError::NonFinite { .. })));
    }

    #[test]
    fn exhausted_budget_is_an_error() {
        let tol = Tolerance {
            rel: 1e-15,
            abs: 0.0,
            max_subdivisions: 2,
        };
        let r = integrate(|t| (1.0 / (t + 1e-9)).sin(), 0.0, 1.0, tol);
        assert!(matches!(r, Err(QuadError::NoConvergence { .. })));
    }
}
