//! Closed-form secondary outage `P_o = I₁ - I₂ - I₃` for MRC of the direct link
//! with the best amplify-and-forward relay (max-min relay SINR).
//!
//! `I₁` is the relay-only outage. `I₂` and `I₃` remove the probability mass
//! rescued by the direct branch; both reduce, per binomial index `n`, to the
//! finite integrals
//!
//! ```text
//! J(k, j) = ∫₀^θ e^{-S z} / ((z + π₁)^k (z + τ)^j) dz,   j ∈ {1, 2}
//! ```
//!
//! which partial fractions turn into incomplete-gamma and `E₁` differences.

use thiserror::Error;

use crate::quad_oracle::{self, OracleError, QuadConfig, QuadMode};
use crate::scenario::{power_budget, PowerBudget, ScenarioParams, Thresholds};
use crate::specfun::{self, SpecfunError};

/// Relay counts beyond this overflow exact `u64` binomials and lose every
/// digit to the alternating sums long before.
pub const MAX_RELAYS: u32 = 60;

/// Relative size below which `S`, `μ` or `χ` counts as zero.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Largest tolerated `max|term| / |sum|` in any alternating sum.
pub const CANCELLATION_LIMIT: f64 = 1e8;

/// Largest tolerated ratio of the propagated absolute term mass to the final
/// outage. Observed error is below `1e-15` times this ratio, so the limit
/// keeps the assembled result to roughly 1e-7 relative.
pub const CONDITION_LIMIT: f64 = 1e8;

/// Above this exponent the `e^{Sπ₁}`, `e^{Sτ}` prefactors are folded into
/// scaled kernels.
const FUSE_EXPONENT: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClosedFormError {
    #[error(
        "outside the closed-form validity region at n = {n}: S = {s_n:e}, mu = {mu_n:e} (both must be > 0)"
    )]
    OutsideValidityRegion { n: u32, s_n: f64, mu_n: f64 },
    #[error("degenerate constant {which} at n = {n} (removable singularity)")]
    Degenerate { n: u32, which: &'static str },
    #[error("alternating sum in {what} cancels by a factor {ratio:e}")]
    Cancellation { what: &'static str, ratio: f64 },
    #[error("closed form supports at most {MAX_RELAYS} relays, got {0}")]
    TooManyRelays(u32),
    #[error(transparent)]
    Kernel(#[from] SpecfunError),
    #[error("quadrature fallback failed: {0}")]
    Fallback(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Validity {
    Valid,
    OutsideValidityRegion,
    DegenerateFallback,
}

impl Validity {
    pub fn as_str(self) -> &'static str {
        match self {
            Validity::Valid => "valid",
            Validity::OutsideValidityRegion => "outside_validity_region",
            Validity::DegenerateFallback => "degenerate_fallback",
        }
    }
}

/// Constants shared by the `J` integrals for binomial index `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxConstants {
    pub n: u32,
    /// Exponential rate `S` of the `z`-integrand.
    pub s_n: f64,
    pub mu_n: f64,
    pub tau_n: f64,
    pub pi_1: f64,
    /// `τ - π₁`.
    pub chi_n: f64,
    /// Set when one of `S`, `μ`, `χ` is zero to within [`DEGENERACY_TOL`] of
    /// its summands.
    pub degenerate: Option<&'static str>,
}

pub fn aux_constants(
    params: &ScenarioParams,
    budget: &PowerBudget,
    n: u32,
) -> AuxConstants {
    let theta_s = params.thresholds().theta_s;
    let nf = f64::from(n);
    let st_sr = params.omega_st_sr * budget.p_st;
    let sr_sd = params.omega_sr_sd * budget.p_sr;
    let st_sd = params.omega_st_sd * budget.p_st;
    let interference = params.omega_pt_sd * params.p_pt;

    let s_terms = [
        nf * params.n0 / st_sr,
        nf * params.n0 / sr_sd,
        params.n0 / st_sd,
    ];
    let s_n = s_terms[0] + s_terms[1] - s_terms[2];

    let mu_terms = [interference * nf / sr_sd, interference / st_sd];
    let mu_n = mu_terms[0] - mu_terms[1];

    let tau_n = (interference * theta_s / st_sd + 1.0) / mu_n;
    let pi_1 = st_sr / (params.omega_pt_sr * params.p_pt);
    let chi_n = tau_n - pi_1;

    let near_zero = |value: f64, terms: &[f64]| {
        let scale = terms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        value.abs() <= DEGENERACY_TOL * scale
    };
    let degenerate = if near_zero(s_n, &s_terms) {
        Some("S")
    } else if near_zero(mu_n, &mu_terms) {
        Some("mu")
    } else if near_zero(chi_n, &[tau_n, pi_1]) {
        Some("chi")
    } else {
        None
    };

    AuxConstants {
        n,
        s_n,
        mu_n,
        tau_n,
        pi_1,
        chi_n,
        degenerate,
    }
}

/// Sign test on the constants themselves: the reduction needs `S > 0` and
/// `μ > 0` for every `n`.
pub fn validity_check(params: &ScenarioParams, budget: &PowerBudget) -> Validity {
    let all_positive = (1..=params.n_relays).all(|n| {
        let aux = aux_constants(params, budget, n);
        aux.s_n > 0.0 && aux.mu_n > 0.0
    });
    if all_positive {
        Validity::Valid
    } else {
        Validity::OutsideValidityRegion
    }
}

/// Exact binomial coefficient for `n <= MAX_RELAYS + 1`.
pub fn binomial(n: u32, k: u32) -> u64 {
    assert!(n <= MAX_RELAYS + 1, "binomial({n}, {k}) beyond supported range");
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc as u64
}

fn alternating(n: u32) -> f64 {
    if n % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// A computed sum together with `mass`, the sum of absolute values of every
/// leaf term that reached it through the nested sums. `mass / |value|`
/// bounds how much relative rounding in the leaves is amplified.
#[derive(Debug, Clone, Copy)]
struct Tracked {
    value: f64,
    mass: f64,
}

impl Tracked {
    fn scaled(self, factor: f64) -> Self {
        Self {
            value: factor * self.value,
            mass: factor.abs() * self.mass,
        }
    }
}

/// Running sum that remembers its largest summand and propagated mass.
#[derive(Debug, Default, Clone, Copy)]
struct TermSum {
    total: f64,
    largest: f64,
    mass: f64,
}

impl TermSum {
    fn push(&mut self, term: f64) {
        self.total += term;
        self.largest = self.largest.max(term.abs());
        self.mass += term.abs();
    }

    fn push_tracked(&mut self, term: Tracked) {
        self.total += term.value;
        self.largest = self.largest.max(term.value.abs());
        self.mass += term.mass;
    }

    fn checked(self, what: &'static str) -> Result<Tracked, ClosedFormError> {
        let tracked = Tracked {
            value: self.total,
            mass: self.mass,
        };
        if self.largest == 0.0 {
            return Ok(tracked);
        }
        let ratio = self.largest / self.total.abs();
        if !(ratio <= CANCELLATION_LIMIT) {
            return Err(ClosedFormError::Cancellation { what, ratio });
        }
        Ok(tracked)
    }
}

/// `e^{lo} (Γ(order, lo) - Γ(order, hi))`, fused into one scaled kernel when
/// the prefactor would be large.
fn prefactored_tail(order: i32, lo: f64, hi: f64, fused: bool) -> Result<f64, SpecfunError> {
    if fused {
        return specfun::upper_gamma_nonpos_difference_scaled(order, lo, hi);
    }
    let diff = if order == 0 {
        specfun::e1_difference(lo, hi)?
    } else {
        specfun::upper_gamma_nonpos_difference(order, lo, hi)?
    };
    Ok(lo.exp() * diff)
}

struct Endpoints {
    /// `[Sπ₁, S(π₁+θ)]`
    near: (f64, f64),
    /// `[Sτ, S(τ+θ)]`
    far: (f64, f64),
    fused: bool,
}

impl Endpoints {
    fn new(aux: &AuxConstants, theta_s: f64) -> Self {
        let s = aux.s_n;
        let near = (s * aux.pi_1, s * (aux.pi_1 + theta_s));
        let far = (s * aux.tau_n, s * (aux.tau_n + theta_s));
        Self {
            near,
            far,
            fused: near.0.max(far.0) > FUSE_EXPONENT,
        }
    }

    fn near_tail(&self, order: i32) -> Result<f64, SpecfunError> {
        prefactored_tail(order, self.near.0, self.near.1, self.fused)
    }

    fn far_tail(&self, order: i32) -> Result<f64, SpecfunError> {
        prefactored_tail(order, self.far.0, self.far.1, self.fused)
    }
}

fn require_usable(aux: &AuxConstants) -> Result<(), ClosedFormError> {
    if let Some(which) = aux.degenerate {
        return Err(ClosedFormError::Degenerate { n: aux.n, which });
    }
    if !(aux.s_n > 0.0 && aux.mu_n > 0.0) {
        return Err(ClosedFormError::OutsideValidityRegion {
            n: aux.n,
            s_n: aux.s_n,
            mu_n: aux.mu_n,
        });
    }
    Ok(())
}

/// `∫₀^θ e^{-Sz} / ((z+π₁)^k (z+τ)) dz` via
/// `1/(r^k (r+χ)) = Σ_{m<k} (-1)^m / (χ^{m+1} r^{k-m}) + 1/((-χ)^k (r+χ))`.
fn j_single(order: u32, aux: &AuxConstants, theta_s: f64) -> Result<Tracked, ClosedFormError> {
    require_usable(aux)?;
    let ends = Endpoints::new(aux, theta_s);
    let (s, chi) = (aux.s_n, aux.chi_n);
    let k = order as i32;
    let mut sum = TermSum::default();
    for m in 0..k - 1 {
        let coeff = alternating(m as u32) / chi.powi(m + 1) * s.powi(k - m - 1);
        sum.push(coeff * ends.near_tail(m - k + 1)?);
    }
    sum.push(alternating(order - 1) / chi.powi(k) * ends.near_tail(0)?);
    sum.push(alternating(order) / chi.powi(k) * ends.far_tail(0)?);
    sum.checked("J single-pole integral")
}

/// `J₂,₁,ₙ = ∫₀^θ e^{-Sz} / ((z+π₁)ⁿ (z+τ)) dz`.
pub fn j21(n: u32, aux: &AuxConstants, theta_s: f64) -> Result<f64, ClosedFormError> {
    j_single(n, aux, theta_s).map(|t| t.value)
}

/// `J₂,₂,ₙ`: [`j21`] with the `(z+π₁)` power raised to `n + 1`.
pub fn j22(n: u32, aux: &AuxConstants, theta_s: f64) -> Result<f64, ClosedFormError> {
    j_single(n + 1, aux, theta_s).map(|t| t.value)
}

/// `J₃,ₙ = ∫₀^θ e^{-Sz} / ((z+π₁)ⁿ (z+τ)²) dz` via
/// `1/(r^n (r+χ)²) = Σ_{m<n} (-1)^m (m+1) / (χ^{m+2} r^{n-m})
///                  + 1/((-χ)^n (r+χ)²) - n/((-χ)^{n+1} (r+χ))`.
pub fn j3(n: u32, aux: &AuxConstants, theta_s: f64) -> Result<f64, ClosedFormError> {
    j_double(n, aux, theta_s).map(|t| t.value)
}

fn j_double(n: u32, aux: &AuxConstants, theta_s: f64) -> Result<Tracked, ClosedFormError> {
    require_usable(aux)?;
    let ends = Endpoints::new(aux, theta_s);
    let (s, chi) = (aux.s_n, aux.chi_n);
    let k = n as i32;
    let nf = f64::from(n);
    let mut sum = TermSum::default();
    for m in 0..k - 1 {
        let coeff =
            alternating(m as u32) * f64::from(m + 1) / chi.powi(m + 2) * s.powi(k - m - 1);
        sum.push(coeff * ends.near_tail(m - k + 1)?);
    }
    sum.push(alternating(n - 1) * nf / chi.powi(k + 1) * ends.near_tail(0)?);
    sum.push(alternating(n) / chi.powi(k) * s * ends.far_tail(-1)?);
    sum.push(alternating(n) * nf / chi.powi(k + 1) * ends.far_tail(0)?);
    sum.checked("J double-pole integral")
}

/// `(n, J₂,₁,ₙ, J₂,₂,ₙ, J₃,ₙ)` for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JTerms {
    pub n: u32,
    pub j21: f64,
    pub j22: f64,
    pub j3: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormResult {
    pub budget: PowerBudget,
    pub thresholds: Thresholds,
    pub i1: f64,
    /// NaN when the MRC value came from the quadrature fallback.
    pub i2: f64,
    pub i3: f64,
    pub outage_mrc: f64,
    pub outage_relay_only: f64,
    pub per_n_terms: Vec<JTerms>,
    pub validity: Validity,
    /// Absolute term mass over `|I₁ - I₂ - I₃|`; NaN when not assembled.
    pub condition: f64,
    /// Why the fallback was taken, when it was.
    pub fallback_reason: Option<String>,
}

fn check_relay_count(params: &ScenarioParams) -> Result<(), ClosedFormError> {
    if params.n_relays > MAX_RELAYS {
        return Err(ClosedFormError::TooManyRelays(params.n_relays));
    }
    Ok(())
}

/// Relay-only outage `I₁ = E_Y[F_Z(θ_S | Y)]`.
pub fn term_i1(params: &ScenarioParams, budget: &PowerBudget) -> Result<f64, ClosedFormError> {
    check_relay_count(params)?;
    if !budget.transmits() {
        return Ok(1.0);
    }
    tracked_i1(params, budget).map(|t| t.value)
}

fn tracked_i1(params: &ScenarioParams, budget: &PowerBudget) -> Result<Tracked, ClosedFormError> {
    let theta = params.thresholds().theta_s;
    let relays = params.n_relays;
    let noise_rate = params.n0 / (params.omega_st_sr * budget.p_st)
        + params.n0 / (params.omega_sr_sd * budget.p_sr);
    let first_hop = 1.0
        + theta * params.omega_pt_sr * params.p_pt / (params.omega_st_sr * budget.p_st);
    let second_hop = theta * params.omega_pt_sd * params.p_pt / (params.omega_sr_sd * budget.p_sr);

    let mut sum = TermSum::default();
    for n in 0..=relays {
        let nf = f64::from(n);
        let term = binomial(relays, n) as f64 * alternating(n) * (-nf * theta * noise_rate).exp()
            / (first_hop.powi(n as i32) * (1.0 + nf * second_hop));
        sum.push(term);
    }
    sum.checked("I1")
}

struct DirectLinkTerms {
    i2: Tracked,
    i3: Tracked,
    per_n: Vec<JTerms>,
}

fn direct_link_terms(
    params: &ScenarioParams,
    budget: &PowerBudget,
) -> Result<DirectLinkTerms, ClosedFormError> {
    let theta = params.thresholds().theta_s;
    let relays = params.n_relays;
    let noise_rate = params.n0 / (params.omega_st_sr * budget.p_st)
        + params.n0 / (params.omega_sr_sd * budget.p_sr);
    let direct_decay = (-theta * params.n0 / (params.omega_st_sd * budget.p_st)).exp();
    let i3_scale = params.omega_pt_sd * params.p_pt / (params.omega_sr_sd * budget.p_sr);

    let auxes: Vec<AuxConstants> = (1..=relays)
        .map(|n| aux_constants(params, budget, n))
        .collect();
    for aux in &auxes {
        require_usable(aux)?;
    }

    let mut i2 = TermSum::default();
    let mut i3 = TermSum::default();
    let mut per_n = Vec::with_capacity(relays as usize);
    for aux in &auxes {
        let n = aux.n;
        let weight = f64::from(n) * binomial(relays, n) as f64 * alternating(n + 1);
        let (a21, a22, a3) = (
            j_single(n, aux, theta)?,
            j_single(n + 1, aux, theta)?,
            j_double(n, aux, theta)?,
        );
        let pi_pow = aux.pi_1.powi(n as i32);
        let i2_weight = weight * pi_pow / aux.mu_n;
        i2.push_tracked(a21.scaled(i2_weight * noise_rate));
        i2.push_tracked(a22.scaled(i2_weight));
        i3.push_tracked(a3.scaled(weight * pi_pow / (aux.mu_n * aux.mu_n)));
        per_n.push(JTerms {
            n,
            j21: a21.value,
            j22: a22.value,
            j3: a3.value,
        });
    }
    Ok(DirectLinkTerms {
        i2: i2.checked("I2")?.scaled(direct_decay),
        i3: i3.checked("I3")?.scaled(direct_decay * i3_scale),
        per_n,
    })
}

/// `I₂`: direct-link correction carried by the noise and first-hop
/// interference part of the relay density.
pub fn term_i2(params: &ScenarioParams, budget: &PowerBudget) -> Result<f64, ClosedFormError> {
    check_relay_count(params)?;
    if !budget.transmits() {
        return Ok(0.0);
    }
    Ok(direct_link_terms(params, budget)?.i2.value)
}

/// `I₃`: direct-link correction carried by the second-hop interference part.
pub fn term_i3(params: &ScenarioParams, budget: &PowerBudget) -> Result<f64, ClosedFormError> {
    check_relay_count(params)?;
    if !budget.transmits() {
        return Ok(0.0);
    }
    Ok(direct_link_terms(params, budget)?.i3.value)
}

fn is_fallback_trigger(err: &ClosedFormError) -> bool {
    matches!(
        err,
        ClosedFormError::Degenerate { .. } | ClosedFormError::Cancellation { .. }
    )
}

/// Evaluate the closed form for a scenario.
///
/// A silent secondary (`P_ST = 0`) is in outage with probability one.
/// Removable singularities and runaway cancellation, either inside one sum or
/// compounded across `I₁ - I₂ - I₃` beyond [`CONDITION_LIMIT`], fall back to
/// the quadrature oracle and are labeled [`Validity::DegenerateFallback`].
pub fn secondary_outage_mrc(params: &ScenarioParams) -> Result<ClosedFormResult, ClosedFormError> {
    check_relay_count(params)?;
    let budget = power_budget(params);
    let thresholds = params.thresholds();
    let mut result = ClosedFormResult {
        budget,
        thresholds,
        i1: 1.0,
        i2: 0.0,
        i3: 0.0,
        outage_mrc: 1.0,
        outage_relay_only: 1.0,
        per_n_terms: Vec::new(),
        validity: Validity::Valid,
        condition: f64::NAN,
        fallback_reason: None,
    };
    if !budget.transmits() {
        return Ok(result);
    }

    let quad = |mode| {
        quad_oracle::outage_with_budget(params, &budget, mode, &QuadConfig::default())
            .map(|q| q.value)
    };
    let fallback = |mut r: ClosedFormResult, reason: &ClosedFormError| -> Result<ClosedFormResult, ClosedFormError> {
        r.i2 = f64::NAN;
        r.i3 = f64::NAN;
        r.outage_mrc = quad(QuadMode::MrcWithDirect)?;
        r.per_n_terms.clear();
        r.validity = Validity::DegenerateFallback;
        r.fallback_reason = Some(reason.to_string());
        Ok(r)
    };

    let i1 = match tracked_i1(params, &budget) {
        Ok(t) => t,
        Err(err) if is_fallback_trigger(&err) => {
            let relay_only = quad(QuadMode::RelayOnly)?;
            result.i1 = relay_only;
            result.outage_relay_only = relay_only;
            return fallback(result, &err);
        }
        Err(err) => return Err(err),
    };
    result.i1 = i1.value;
    result.outage_relay_only = i1.value;

    let terms = match direct_link_terms(params, &budget) {
        Ok(terms) => terms,
        Err(err) if is_fallback_trigger(&err) => return fallback(result, &err),
        Err(err) => return Err(err),
    };
    let outage = i1.value - terms.i2.value - terms.i3.value;
    let condition = (i1.mass + terms.i2.mass + terms.i3.mass) / outage.abs();
    result.i2 = terms.i2.value;
    result.i3 = terms.i3.value;
    result.outage_mrc = outage;
    result.condition = condition;
    result.per_n_terms = terms.per_n;
    if !(condition <= CONDITION_LIMIT) {
        let err = ClosedFormError::Cancellation {
            what: "I1 - I2 - I3",
            ratio: condition,
        };
        return fallback(result, &err);
    }
    Ok(result)
}
