//! Secondary outage by nested adaptive quadrature of the conditional outage
//! probability.
//!
//! Given the primary-to-destination interference gain `y`, the direct branch
//! and every relay branch are independent, so
//!
//! ```text
//! Pr(γ_tot < θ | y) = ∫₀^θ F_SD(θ - z | y) f_Z(z | y) dz
//! ```
//!
//! with `F_Z(z | y) = (1 - q(z, y))^N` and `q` the probability that both hops
//! of one relay clear `z`. The outer expectation over `y ~ Exp(Ω_PT-SD)` is
//! integrated on `[0, y_max]` with the neglected tail bounded analytically.
//!
//! Nothing here goes through the special-function kernels or the closed-form
//! reductions; this module exists to check them.

use std::cell::RefCell;

use thiserror::Error;

use crate::quadrature::{self, QuadError, Tolerance};
use crate::scenario::{PowerBudget, ScenarioParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("inner integral at y = {y}: {source}")]
    Inner {
        y: f64,
        #[source]
        source: QuadError,
    },
    #[error("outer integral: {0}")]
    Outer(#[source] QuadError),
    #[error("interference gain must be finite and >= 0, got {0}")]
    BadGain(f64),
}

/// Which receiver combining the oracle integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuadMode {
    MrcWithDirect,
    RelayOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    /// Upper limit for the interference gain; `None` puts it where the
    /// exponential weight has fallen to 1e-16 of its peak.
    pub y_truncation: Option<f64>,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_subdivisions: 2000,
            y_truncation: None,
        }
    }
}

impl QuadConfig {
    fn y_max(&self, omega_pt_sd: f64) -> f64 {
        self.y_truncation
            .unwrap_or_else(|| omega_pt_sd * 1e16f64.ln())
    }

    fn inner(&self) -> Tolerance {
        Tolerance {
            rel: self.rel_tol * 1e-2,
            abs: self.abs_tol * 1e-2,
            max_subdivisions: self.max_subdivisions,
        }
    }

    fn outer(&self) -> Tolerance {
        Tolerance {
            rel: self.rel_tol,
            abs: self.abs_tol,
            max_subdivisions: self.max_subdivisions,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadEstimate {
    pub value: f64,
    /// Quadrature error estimate plus the truncated-tail bound.
    pub abs_error: f64,
    pub tail_bound: f64,
    pub evaluations: usize,
}

/// Per-`y` link statistics shared by the conditional CDF and density.
struct Conditional {
    theta_s: f64,
    relays: i32,
    /// Exponential rate of `γ_SD` given `y`.
    direct_rate: f64,
    /// `z`-rate of the combined noise and interference exponent of one relay.
    relay_rate: f64,
    /// Interference coefficient on the first hop: `Ω_PT-SR P_PT / (Ω_ST-SR P_ST)`.
    first_hop_interference: f64,
}

impl Conditional {
    fn new(params: &ScenarioParams, budget: &PowerBudget, y: f64) -> Self {
        let interference = params.p_pt * y + params.n0;
        Self {
            theta_s: params.thresholds().theta_s,
            relays: params.n_relays as i32,
            direct_rate: interference / (params.omega_st_sd * budget.p_st),
            relay_rate: params.n0 / (params.omega_st_sr * budget.p_st)
                + interference / (params.omega_sr_sd * budget.p_sr),
            first_hop_interference: params.omega_pt_sr * params.p_pt
                / (params.omega_st_sr * budget.p_st),
        }
    }

    /// `q(z)`: both hops of one relay exceed `z`.
    fn both_hops_clear(&self, z: f64) -> f64 {
        (-z * self.relay_rate).exp() / (1.0 + z * self.first_hop_interference)
    }

    /// `1 - q(z)`, formed without cancellation for small `z`.
    fn one_relay_fails(&self, z: f64) -> f64 {
        let b = self.first_hop_interference;
        (b * z - (-z * self.relay_rate).exp_m1()) / (1.0 + b * z)
    }

    fn cdf_z(&self, z: f64) -> f64 {
        self.one_relay_fails(z).powi(self.relays)
    }

    fn pdf_z(&self, z: f64) -> f64 {
        let b = self.first_hop_interference;
        let hazard = self.relay_rate + b / (1.0 + b * z);
        f64::from(self.relays)
            * self.one_relay_fails(z).powi(self.relays - 1)
            * self.both_hops_clear(z)
            * hazard
    }

    fn cdf_direct(&self, x: f64) -> f64 {
        -(-x * self.direct_rate).exp_m1()
    }

    /// Split points for `[0, θ]`: the relay density lives within a few
    /// `1/hazard` of zero and the direct CDF turns over within a few
    /// `1/rate` of `θ`. Under strong interference both widths are tiny
    /// compared to `θ` and a single panel would step over them.
    fn breakpoints(&self) -> Vec<f64> {
        let theta = self.theta_s;
        let hazard = self.relay_rate + self.first_hop_interference;
        let mut cuts = vec![0.0, theta];
        for k in [1.0, 4.0, 16.0, 64.0] {
            cuts.push(k / hazard);
            cuts.push(theta - k / self.direct_rate);
        }
        cuts.retain(|z| (0.0..=theta).contains(z));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts
    }
}

fn conditional_with_error(
    params: &ScenarioParams,
    budget: &PowerBudget,
    y: f64,
    mode: QuadMode,
    cfg: &QuadConfig,
) -> Result<(f64, f64, usize), OracleError> {
    if !(y.is_finite() && y >= 0.0) {
        return Err(OracleError::BadGain(y));
    }
    if !budget.transmits() {
        return Ok((1.0, 0.0, 0));
    }
    let c = Conditional::new(params, budget, y);
    if c.theta_s <= 0.0 {
        return Ok((0.0, 0.0, 0));
    }
    match mode {
        QuadMode::RelayOnly => Ok((c.cdf_z(c.theta_s), 0.0, 1)),
        QuadMode::MrcWithDirect => {
            let mut total = (0.0, 0.0, 0);
            let cuts = c.breakpoints();
            for pair in cuts.windows(2) {
                let piece = quadrature::integrate(
                    |z| c.cdf_direct(c.theta_s - z) * c.pdf_z(z),
                    pair[0],
                    pair[1],
                    cfg.inner(),
                )
                .map_err(|source| OracleError::Inner { y, source })?;
                total.0 += piece.value;
                total.1 += piece.abs_error;
                total.2 += piece.evaluations;
            }
            Ok(total)
        }
    }
}

/// `Pr(γ_tot < θ_S | |h_PT-SD|² = y)` for MRC of the direct link and the best
/// relay under the max-min relay SINR.
pub fn conditional_outage_given_y(
    params: &ScenarioParams,
    budget: &PowerBudget,
    y: f64,
    cfg: &QuadConfig,
) -> Result<f64, OracleError> {
    conditional_with_error(params, budget, y, QuadMode::MrcWithDirect, cfg).map(|r| r.0)
}

/// Outage averaged over the interference gain, with an explicit power budget.
pub fn outage_with_budget(
    params: &ScenarioParams,
    budget: &PowerBudget,
    mode: QuadMode,
    cfg: &QuadConfig,
) -> Result<QuadEstimate, OracleError> {
    if !budget.transmits() {
        return Ok(QuadEstimate {
            value: 1.0,
            abs_error: 0.0,
            tail_bound: 0.0,
            evaluations: 0,
        });
    }
    let omega = params.omega_pt_sd;
    let y_max = cfg.y_max(omega);
    let tail_bound = (-y_max / omega).exp();

    let inner_failure: RefCell<Option<OracleError>> = RefCell::new(None);
    let mut inner_error = 0.0f64;
    let mut evaluations = 0usize;
    let outer = quadrature::integrate(
        |y| match conditional_with_error(params, budget, y, mode, cfg) {
            Ok((v, e, n)) => {
                inner_error = inner_error.max(e);
                evaluations += n;
                v * (-y / omega).exp() / omega
            }
            Err(err) => {
                inner_failure.borrow_mut().get_or_insert(err);
                f64::NAN
            }
        },
        0.0,
        y_max,
        cfg.outer(),
    );
    if let Some(err) = inner_failure.into_inner() {
        return Err(err);
    }
    let outer = outer.map_err(OracleError::Outer)?;
    Ok(QuadEstimate {
        value: outer.value,
        abs_error: outer.abs_error + inner_error + tail_bound,
        tail_bound,
        evaluations: evaluations + outer.evaluations,
    })
}

/// Secondary outage by quadrature, with the power budget resolved from the
/// scenario.
pub fn outage_by_quadrature(
    params: &ScenarioParams,
    mode: QuadMode,
    cfg: &QuadConfig,
) -> Result<QuadEstimate, OracleError> {
    let budget = crate::scenario::power_budget(params);
    outage_with_budget(params, &budget, mode, cfg)
}
