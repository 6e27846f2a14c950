//! Monte Carlo simulation of the secondary and primary links under Rayleigh
//! block fading.
//!
//! Sample `i` of a run seeded with `s` draws from ChaCha8 keyed by
//! `seed_from_u64(s)` on stream `i`, starting at word 0. Draw order within a
//! sample is `PT-PD, ST-PD, ST-SD, PT-SD`, then per relay
//! `ST-SR_i, PT-SR_i, SR_i-SD, SR_i-PD`. Because every sample owns its stream,
//! estimates do not depend on how samples are split across threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::scenario::{power_budget, PowerBudget, ScenarioParams};

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

const CHUNK: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("combine mode {0:?} needs at least one relay")]
    NoRelays(Combine),
    #[error("transmit power must be finite and >= 0, got {0}")]
    BadPower(f64),
    #[error("pinned interference gain must be finite and >= 0, got {0}")]
    BadGain(f64),
}

/// End-to-end SINR of one relayed path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SinrModel {
    /// `γ₁γ₂ / (1 + γ₁ + γ₂)`.
    ExactHarmonic,
    /// `min(γ₁, γ₂)`.
    MaxMinBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Combine {
    MrcWithDirect,
    RelayOnly,
    DirectOnly,
}

/// Which score picks the relay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelectionRule {
    ByExact,
    ByBound,
}

impl SinrModel {
    /// The rule that maximizes this model's own score.
    pub fn native_rule(self) -> SelectionRule {
        match self {
            SinrModel::ExactHarmonic => SelectionRule::ByExact,
            SinrModel::MaxMinBound => SelectionRule::ByBound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct McConfig {
    pub samples: u64,
    pub seed: u64,
    pub sinr_model: SinrModel,
    pub combine: Combine,
    pub selection_rule: SelectionRule,
}

impl McConfig {
    /// Selection follows the model's own maximizer.
    pub fn new(samples: u64, seed: u64, sinr_model: SinrModel, combine: Combine) -> Self {
        Self {
            samples,
            seed,
            sinr_model,
            combine,
            selection_rule: sinr_model.native_rule(),
        }
    }

    pub fn with_selection(mut self, rule: SelectionRule) -> Self {
        self.selection_rule = rule;
        self
    }
}

/// Gains of the links touching relay `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayGains {
    pub st_sr: f64,
    pub pt_sr: f64,
    pub sr_sd: f64,
    pub sr_pd: f64,
}

/// One block-fading realization. The single `pt_sd` gain enters both the
/// direct link and every second hop.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    pub pt_pd: f64,
    pub st_pd: f64,
    pub st_sd: f64,
    pub pt_sd: f64,
    pub relays: Vec<RelayGains>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageEstimate {
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: u64,
    pub seed: u64,
    pub outages: u64,
}

impl OutageEstimate {
    fn from_count(outages: u64, samples: u64, seed: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(outages, samples, Z_95);
        Self {
            p_hat: outages as f64 / samples as f64,
            ci_low,
            ci_high,
            samples,
            seed,
            outages,
        }
    }

    /// Binomial standard error at probability `p`.
    pub fn standard_error_at(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.samples as f64).sqrt()
    }

    pub fn standard_error(&self) -> f64 {
        self.standard_error_at(self.p_hat)
    }
}

/// Wilson score interval for `k` successes in `n` trials, widened if needed
/// to contain `k / n`.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    // Rounding can leave the endpoints a hair inside p at k = 0 or k = n.
    (
        (center - half).max(0.0).min(p),
        (center + half).min(1.0).max(p),
    )
}

fn exponential<R: RngCore + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    let u = 1.0 - rng.random::<f64>();
    -mean * u.ln()
}

/// Draw every gain of one sample, each `-Ω ln U` with `U` on `(0, 1]`.
pub fn draw_channels<R: RngCore + ?Sized>(params: &ScenarioParams, rng: &mut R) -> ChannelDraw {
    let pt_pd = exponential(rng, params.omega_pt_pd);
    let st_pd = exponential(rng, params.omega_st_pd);
    let st_sd = exponential(rng, params.omega_st_sd);
    let pt_sd = exponential(rng, params.omega_pt_sd);
    let relays = (0..params.n_relays)
        .map(|_| RelayGains {
            st_sr: exponential(rng, params.omega_st_sr),
            pt_sr: exponential(rng, params.omega_pt_sr),
            sr_sd: exponential(rng, params.omega_sr_sd),
            sr_pd: exponential(rng, params.omega_sr_pd),
        })
        .collect();
    ChannelDraw {
        pt_pd,
        st_pd,
        st_sd,
        pt_sd,
        relays,
    }
}

/// Per-link SINRs of one draw.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSinrs {
    pub direct: f64,
    /// `(γ_SR_i, γ_R_iD)` per relay.
    pub hops: Vec<(f64, f64)>,
}

pub fn link_sinrs(draw: &ChannelDraw, params: &ScenarioParams, budget: &PowerBudget) -> LinkSinrs {
    let destination_noise = params.p_pt * draw.pt_sd + params.n0;
    LinkSinrs {
        direct: budget.p_st * draw.st_sd / destination_noise,
        hops: draw
            .relays
            .iter()
            .map(|r| {
                (
                    budget.p_st * r.st_sr / (params.p_pt * r.pt_sr + params.n0),
                    budget.p_sr * r.sr_sd / destination_noise,
                )
            })
            .collect(),
    }
}

/// `(harmonic, bound)` for one relayed path.
pub fn relay_path_sinr(first: f64, second: f64) -> (f64, f64) {
    let harmonic = if first == 0.0 || second == 0.0 {
        0.0
    } else {
        first * second / (1.0 + first + second)
    };
    let bound = first.min(second);
    debug_assert!(
        harmonic <= bound,
        "harmonic {harmonic} above bound {bound} for hops ({first}, {second})"
    );
    (harmonic, bound)
}

/// Combined SINR at the secondary destination.
pub fn end_to_end_sinr(
    draw: &ChannelDraw,
    params: &ScenarioParams,
    budget: &PowerBudget,
    model: SinrModel,
    combine: Combine,
    rule: SelectionRule,
) -> f64 {
    let links = link_sinrs(draw, params, budget);
    if combine == Combine::DirectOnly {
        return links.direct;
    }
    let mut best_key = f64::NEG_INFINITY;
    let mut best_score = 0.0;
    for &(first, second) in &links.hops {
        let (harmonic, bound) = relay_path_sinr(first, second);
        let key = match rule {
            SelectionRule::ByExact => harmonic,
            SelectionRule::ByBound => bound,
        };
        if key > best_key {
            best_key = key;
            best_score = match model {
                SinrModel::ExactHarmonic => harmonic,
                SinrModel::MaxMinBound => bound,
            };
        }
    }
    match combine {
        Combine::MrcWithDirect => links.direct + best_score,
        Combine::RelayOnly => best_score,
        Combine::DirectOnly => unreachable!(),
    }
}

fn sample_rng(base: &ChaCha8Rng, index: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(index);
    rng.set_word_pos(0);
    rng
}

/// Count indices in `0..samples` for which `outage(rng)` holds, one stream
/// per index, reduced in parallel over fixed chunks.
fn count_outages<F>(samples: u64, seed: u64, outage: F) -> u64
where
    F: Fn(&mut ChaCha8Rng) -> bool + Sync,
{
    let base = ChaCha8Rng::seed_from_u64(seed);
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let end = ((c + 1) * CHUNK).min(samples);
            (c * CHUNK..end)
                .filter(|&i| outage(&mut sample_rng(&base, i)))
                .count() as u64
        })
        .sum()
}

fn check_config(params: &ScenarioParams, mc: &McConfig) -> Result<(), McError> {
    if mc.samples == 0 {
        return Err(McError::NoSamples);
    }
    if params.n_relays == 0 && mc.combine != Combine::DirectOnly {
        return Err(McError::NoRelays(mc.combine));
    }
    Ok(())
}

fn secondary_estimate(
    params: &ScenarioParams,
    budget: &PowerBudget,
    mc: &McConfig,
    pinned_pt_sd: Option<f64>,
) -> Result<OutageEstimate, McError> {
    check_config(params, mc)?;
    let theta_s = params.thresholds().theta_s;
    let outages = count_outages(mc.samples, mc.seed, |rng| {
        let mut draw = draw_channels(params, rng);
        if let Some(y) = pinned_pt_sd {
            draw.pt_sd = y;
        }
        end_to_end_sinr(&draw, params, budget, mc.sinr_model, mc.combine, mc.selection_rule)
            < theta_s
    });
    Ok(OutageEstimate::from_count(outages, mc.samples, mc.seed))
}

/// Fraction of samples whose combined SINR falls below `θ_S`, at the
/// scenario's own power budget.
pub fn estimate_secondary_outage(
    params: &ScenarioParams,
    mc: &McConfig,
) -> Result<OutageEstimate, McError> {
    secondary_estimate(params, &power_budget(params), mc, None)
}

/// [`estimate_secondary_outage`] with an explicit power budget.
pub fn estimate_secondary_outage_with_budget(
    params: &ScenarioParams,
    budget: &PowerBudget,
    mc: &McConfig,
) -> Result<OutageEstimate, McError> {
    secondary_estimate(params, budget, mc, None)
}

/// Secondary outage with `|h_PT-SD|²` held at `y` in every sample.
pub fn estimate_conditional_outage(
    params: &ScenarioParams,
    y: f64,
    mc: &McConfig,
) -> Result<OutageEstimate, McError> {
    if !(y.is_finite() && y >= 0.0) {
        return Err(McError::BadGain(y));
    }
    secondary_estimate(params, &power_budget(params), mc, Some(y))
}

/// Primary outage when a secondary node with mean interference gain
/// `omega_interferer_pd` transmits at `p_secondary`.
///
/// Uses the same per-sample streams as the secondary estimator: the first
/// draw is `|h_PT-PD|²`, the second the interferer's gain to PD.
pub fn estimate_primary_outage(
    params: &ScenarioParams,
    p_secondary: f64,
    omega_interferer_pd: f64,
    mc: &McConfig,
) -> Result<OutageEstimate, McError> {
    if mc.samples == 0 {
        return Err(McError::NoSamples);
    }
    if !(p_secondary.is_finite() && p_secondary >= 0.0) {
        return Err(McError::BadPower(p_secondary));
    }
    let theta_p = params.thresholds().theta_p;
    let outages = count_outages(mc.samples, mc.seed, |rng| {
        let signal = params.p_pt * exponential(rng, params.omega_pt_pd);
        let interference = p_secondary * exponential(rng, omega_interferer_pd);
        signal / (interference + params.n0) < theta_p
    });
    Ok(OutageEstimate::from_count(outages, mc.samples, mc.seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Binding;

    fn reference() -> ScenarioParams {
        ScenarioParams::reference(20.0, 15.0, 0.1, 2)
    }

    fn unit_budget() -> PowerBudget {
        PowerBudget {
            p_st: 1.0,
            p_sr: 1.0,
            p_u_st: 1.0,
            p_u_sr: 1.0,
            st_binding: Binding::Peak,
            sr_binding: Binding::Peak,
        }
    }

    /// Replays a fixed list of `u64` words.
    struct Rigged {
        words: Vec<u64>,
        next: usize,
    }

    impl RngCore for Rigged {
        fn next_u32(&mut self) -> u32 {
            self.next_u64() as u32
        }
        fn next_u64(&mut self) -> u64 {
            let w = self.words[self.next % self.words.len()];
            self.next += 1;
            w
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            for b in dst {
                *b = self.next_u64() as u8;
            }
        }
    }

    #[test]
    fn rigged_draw_shares_destination_interference() {
        let mut p = reference();
        p.n_relays = 1;
        // Word i maps to U = 1 - (i/2^11); the fourth draw is PT-SD.
        let words: Vec<u64> = (1..=8u64).map(|i| i << 61).collect();
        let draw = draw_channels(&p, &mut Rigged { words, next: 0 });
        let u4 = 1.0 - 4.0 / 8.0;
        assert!((draw.pt_sd - (-p.omega_pt_sd * f64::ln(u4))).abs() < 1e-15);

        let b = unit_budget();
        let links = link_sinrs(&draw, &p, &b);
        let noise = p.p_pt * draw.pt_sd + p.n0;
        assert_eq!(links.direct, draw.st_sd / noise);
        assert_eq!(links.hops[0].1, draw.relays[0].sr_sd / noise);
    }

    #[test]
    fn hand_built_relay_terms() {
        let (harmonic, bound) = relay_path_sinr(3.0, 6.0);
        assert!((harmonic - 1.8).abs() < 1e-15);
        assert_eq!(bound, 3.0);
    }

    #[test]
    fn no_interference_direct_sinr() {
        let mut p = reference();
        p.p_pt = 0.0;
        let draw = draw_channels(&p, &mut ChaCha8Rng::seed_from_u64(5));
        let b = power_budget(&ScenarioParams::reference(20.0, 15.0, 0.1, 2));
        let links = link_sinrs(&draw, &p, &b);
        assert_eq!(links.direct, b.p_st * draw.st_sd / p.n0);
    }

    #[test]
    fn selection_rules_differ_only_in_choice() {
        let p = reference();
        let b = unit_budget();
        let draw = ChannelDraw {
            pt_pd: 1.0,
            st_pd: 1.0,
            st_sd: 0.0,
            pt_sd: 0.0,
            relays: vec![
                RelayGains { st_sr: 3.0, pt_sr: 0.0, sr_sd: 3.0, sr_pd: 1.0 },
                RelayGains { st_sr: 3.2, pt_sr: 0.0, sr_sd: 1e6, sr_pd: 1.0 },
            ],
        };
        let mut q = p;
        q.p_pt = 0.0;
        let sinr = |model, rule| end_to_end_sinr(&draw, &q, &b, model, Combine::RelayOnly, rule);
        assert_eq!(sinr(SinrModel::MaxMinBound, SelectionRule::ByBound), 3.2);
        assert_eq!(sinr(SinrModel::MaxMinBound, SelectionRule::ByExact), 3.2);
        assert!((sinr(SinrModel::ExactHarmonic, SelectionRule::ByBound) - 3.2 * 1e6 / (1.0 + 3.2 + 1e6)).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_draws() {
        let p = reference();
        let base = ChaCha8Rng::seed_from_u64(9);
        let a = draw_channels(&p, &mut sample_rng(&base, 17));
        let b = draw_channels(&p, &mut sample_rng(&base, 17));
        let c = draw_channels(&p, &mut sample_rng(&base, 18));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_threshold_never_outage() {
        let mut p = reference();
        p.r_s = 0.0;
        let mc = McConfig::new(10_000, 1, SinrModel::ExactHarmonic, Combine::MrcWithDirect);
        assert_eq!(estimate_secondary_outage(&p, &mc).unwrap().p_hat, 0.0);
    }

    #[test]
    fn config_errors() {
        let p = reference();
        let mc = McConfig::new(0, 1, SinrModel::MaxMinBound, Combine::RelayOnly);
        assert_eq!(estimate_secondary_outage(&p, &mc), Err(McError::NoSamples));
        let mut lone = p;
        lone.n_relays = 0;
        let mc = McConfig::new(10, 1, SinrModel::MaxMinBound, Combine::RelayOnly);
        assert!(matches!(estimate_secondary_outage(&lone, &mc), Err(McError::NoRelays(_))));
        let mc = McConfig { combine: Combine::DirectOnly, ..mc };
        assert!(estimate_secondary_outage(&lone, &mc).is_ok());
    }

    #[test]
    fn wilson_interval_brackets_estimate() {
        for (k, n) in [(0, 10), (10, 10), (3, 1000), (500, 1000)] {
            let (lo, hi) = wilson_interval(k, n, Z_95);
            let p = k as f64 / n as f64;
            assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0, "{k}/{n}: [{lo}, {hi}]");
        }
        let (lo, hi) = wilson_interval(0, 100, Z_95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.03 && hi < 0.04);
    }

    #[test]
    fn silent_primary_interferer() {
        let p = reference();
        let mc = McConfig::new(200_000, 3, SinrModel::MaxMinBound, Combine::MrcWithDirect);
        let est = estimate_primary_outage(&p, 0.0, p.omega_st_pd, &mc).unwrap();
        let theta_p = p.thresholds().theta_p;
        let exact = -(-theta_p * p.n0 / (p.omega_pt_pd * p.p_pt)).exp_m1();
        assert!((est.p_hat - exact).abs() <= 4.0 * est.standard_error_at(exact));
    }
}
