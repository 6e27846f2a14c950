//! Three-engine agreement check on one scenario.
//!
//! The verdict is computed by [`assess`] from already-evaluated engine
//! outputs, so a test can feed it deliberately wrong numbers.

use std::fmt;

use crate::closed_form;
use crate::mc_sim::{self, Combine, McConfig, OutageEstimate, SinrModel};
use crate::quad_oracle::{self, QuadConfig, QuadMode};
use crate::scenario::{power_budget, Binding, PowerBudget, ScenarioParams};
use crate::sweep::EngineError;

pub const QUAD_REL_TOL: f64 = 1e-6;
pub const SE_BAND: f64 = 3.0;

/// Primary-outage Monte Carlo at one secondary transmitter's power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimaryProbe {
    pub node: &'static str,
    pub binding: Binding,
    pub power: f64,
    pub estimate: OutageEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationInputs {
    pub lambda_p: f64,
    pub budget: PowerBudget,
    pub closed_mrc: f64,
    pub quad_mrc: f64,
    pub mc_mrc: OutageEstimate,
    pub primary: Vec<PrimaryProbe>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// `None` when the check does not apply.
    pub passed: Option<bool>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed != Some(false))
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.passed == Some(false))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = match c.passed {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "SKIP",
            };
            writeln!(f, "{tag} {}: {}", c.name, c.detail)?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

pub fn assess(inputs: &ValidationInputs) -> ValidationReport {
    let mut checks = Vec::new();

    let rel = ((inputs.closed_mrc - inputs.quad_mrc) / inputs.quad_mrc).abs();
    checks.push(Check {
        name: "closed_form_vs_quadrature".to_string(),
        passed: Some(rel <= QUAD_REL_TOL),
        detail: format!(
            "closed {:.10e}, quadrature {:.10e}, relative gap {rel:.3e} (limit {QUAD_REL_TOL:e})",
            inputs.closed_mrc, inputs.quad_mrc
        ),
    });

    let se = inputs.mc_mrc.standard_error_at(inputs.closed_mrc);
    let gap = (inputs.mc_mrc.p_hat - inputs.closed_mrc).abs();
    checks.push(Check {
        name: "closed_form_vs_monte_carlo".to_string(),
        passed: Some(gap <= SE_BAND * se),
        detail: format!(
            "MC {:.6e} (95% CI [{:.6e}, {:.6e}], {} samples), closed {:.6e}, gap {:.2} SE",
            inputs.mc_mrc.p_hat,
            inputs.mc_mrc.ci_low,
            inputs.mc_mrc.ci_high,
            inputs.mc_mrc.samples,
            inputs.closed_mrc,
            if se > 0.0 { gap / se } else if gap == 0.0 { 0.0 } else { f64::INFINITY },
        ),
    });

    for probe in &inputs.primary {
        let lambda = inputs.lambda_p;
        let se = probe.estimate.standard_error_at(lambda);
        let p = probe.estimate.p_hat;
        let (passed, rule) = match probe.binding {
            Binding::PrimaryOutage => ((p - lambda).abs() <= SE_BAND * se, "|p - lambda| <= 3 SE"),
            Binding::Peak => (p <= lambda + SE_BAND * se, "p <= lambda + 3 SE"),
            Binding::Zero => {
                checks.push(Check {
                    name: format!("primary_outage_{}", probe.node),
                    passed: None,
                    detail: "node is silent".to_string(),
                });
                continue;
            }
        };
        checks.push(Check {
            name: format!("primary_outage_{}", probe.node),
            passed: Some(passed),
            detail: format!(
                "{} binding at P = {:.6e}: MC primary outage {p:.6e}, lambda {lambda}, SE {se:.3e} ({rule})",
                probe.binding.as_str(),
                probe.power
            ),
        });
    }

    ValidationReport { checks }
}

/// Run all engines. Secondary MC uses `seed`; the ST and SR primary probes
/// use `seed + 1` and `seed + 2`.
pub fn gather(params: &ScenarioParams, seed: u64, samples: u64) -> Result<ValidationInputs, EngineError> {
    let budget = power_budget(params);
    let closed = closed_form::secondary_outage_mrc(params)?;
    let quad = quad_oracle::outage_with_budget(params, &budget, QuadMode::MrcWithDirect, &QuadConfig::default())?;
    let mc = McConfig::new(samples, seed, SinrModel::MaxMinBound, Combine::MrcWithDirect);
    let mc_mrc = mc_sim::estimate_secondary_outage_with_budget(params, &budget, &mc)?;

    let nodes = [
        ("st", budget.st_binding, budget.p_st, params.omega_st_pd, 1),
        ("sr", budget.sr_binding, budget.p_sr, params.omega_sr_pd, 2),
    ];
    let mut primary = Vec::new();
    for (node, binding, power, omega, offset) in nodes {
        let mc = McConfig { seed: seed.wrapping_add(offset), ..mc };
        primary.push(PrimaryProbe {
            node,
            binding,
            power,
            estimate: mc_sim::estimate_primary_outage(params, power, omega, &mc)?,
        });
    }

    Ok(ValidationInputs {
        lambda_p: params.lambda_p,
        budget,
        closed_mrc: closed.outage_mrc,
        quad_mrc: quad.value,
        mc_mrc,
        primary,
    })
}

pub fn validate_scenario(params: &ScenarioParams, seed: u64, samples: u64) -> Result<ValidationReport, EngineError> {
    Ok(assess(&gather(params, seed, samples)?))
}
