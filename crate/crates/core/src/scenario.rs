//! Scenario parameters, rate thresholds and the secondary power budget.
//!
//! Powers are normalized to the noise power: a value in dB is
//! `10·log10(P / N₀)` with `N₀` as the 0 dB reference.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: key `{key}` given more than once")]
    DuplicateKey { key: String, line: usize },
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("exactly one of `{0}_db` / `{0}_linear` must be given")]
    PowerForm(String),
    #[error("key `{key}`: cannot parse `{value}`")]
    Parse { key: String, value: String },
    #[error("key `{key}`: value {value} out of range ({reason})")]
    OutOfRange {
        key: String,
        value: String,
        reason: &'static str,
    },
}

/// Flat `key = value` document with `#` comments. Keys keep their line numbers
/// so later validation can point at the offending line.
#[derive(Debug, Clone, Default)]
pub struct KeyValueDoc {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValueDoc {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: content.to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    text: content.to_string(),
                });
            }
            if entries
                .insert(key.to_string(), (line, value.to_string()))
                .is_some()
            {
                return Err(ConfigError::DuplicateKey {
                    key: key.to_string(),
                    line,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Reject every key not in `allowed`.
    pub fn deny_unknown(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for (key, (line, _)) in &self.entries {
            if !allowed.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey {
                    key: key.clone(),
                    line: *line,
                });
            }
        }
        Ok(())
    }

    /// Insert or replace `key`. Set keys report line 0 in errors.
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries
            .insert(key.to_string(), (0, value.to_string()));
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    pub fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key)
            .ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| ConfigError::Parse {
            key: key.to_string(),
            value: raw.to_string(),
        })
    }
}

pub const SCENARIO_KEYS: &[&str] = &[
    "omega_pt_pd",
    "omega_st_pd",
    "omega_sr_pd",
    "omega_st_sd",
    "omega_pt_sd",
    "omega_st_sr",
    "omega_pt_sr",
    "omega_sr_sd",
    "p_pt_db",
    "p_pt_linear",
    "p_pk_db",
    "p_pk_linear",
    "n0",
    "r_p",
    "r_s",
    "lambda_p",
    "n_relays",
];

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// One cognitive relay scenario. Every relay shares the same mean gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioParams {
    pub omega_pt_pd: f64,
    pub omega_st_pd: f64,
    pub omega_sr_pd: f64,
    pub omega_st_sd: f64,
    pub omega_pt_sd: f64,
    pub omega_st_sr: f64,
    pub omega_pt_sr: f64,
    pub omega_sr_sd: f64,
    /// Primary transmit power (linear, noise-normalized).
    pub p_pt: f64,
    /// Peak power for the secondary transmitter and relays (linear).
    pub p_pk: f64,
    pub n0: f64,
    /// Primary target rate, bits/s/Hz.
    pub r_p: f64,
    /// Secondary target rate, bits/s/Hz.
    pub r_s: f64,
    pub lambda_p: f64,
    pub n_relays: u32,
}

impl ScenarioParams {
    /// Mean gains and rates used throughout the evaluation figures, with the
    /// given primary power, peak power, outage threshold and relay count.
    pub fn reference(p_pt_db: f64, p_pk_db: f64, lambda_p: f64, n_relays: u32) -> Self {
        Self {
            omega_pt_pd: 1.0,
            omega_st_pd: 0.5,
            omega_sr_pd: 0.5,
            omega_st_sd: 1.5,
            omega_pt_sd: 0.5,
            omega_st_sr: 1.0,
            omega_pt_sr: 0.5,
            omega_sr_sd: 1.0,
            p_pt: db_to_linear(p_pt_db),
            p_pk: db_to_linear(p_pk_db),
            n0: 1.0,
            r_p: 0.4,
            r_s: 0.1,
            lambda_p,
            n_relays,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("omega_pt_pd", self.omega_pt_pd),
            ("omega_st_pd", self.omega_st_pd),
            ("omega_sr_pd", self.omega_sr_pd),
            ("omega_st_sd", self.omega_st_sd),
            ("omega_pt_sd", self.omega_pt_sd),
            ("omega_st_sr", self.omega_st_sr),
            ("omega_pt_sr", self.omega_pt_sr),
            ("omega_sr_sd", self.omega_sr_sd),
            ("p_pt", self.p_pt),
            ("p_pk", self.p_pk),
            ("n0", self.n0),
            ("r_p", self.r_p),
            ("r_s", self.r_s),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::OutOfRange {
                    key: key.to_string(),
                    value: value.to_string(),
                    reason: "must be finite and > 0",
                });
            }
        }
        if !(self.lambda_p > 0.0 && self.lambda_p < 1.0) {
            return Err(ConfigError::OutOfRange {
                key: "lambda_p".to_string(),
                value: self.lambda_p.to_string(),
                reason: "must lie in (0, 1)",
            });
        }
        if self.n_relays < 1 {
            return Err(ConfigError::OutOfRange {
                key: "n_relays".to_string(),
                value: self.n_relays.to_string(),
                reason: "must be >= 1",
            });
        }
        Ok(())
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            theta_p: self.r_p.exp2() - 1.0,
            theta_s: (2.0 * self.r_s).exp2() - 1.0,
        }
    }

    /// Build from a parsed document, reading only scenario keys. Unknown-key
    /// policy is left to the caller.
    pub fn from_doc(doc: &KeyValueDoc) -> Result<Self, ConfigError> {
        let power = |stem: &str| -> Result<f64, ConfigError> {
            let db_key = format!("{stem}_db");
            let lin_key = format!("{stem}_linear");
            match (doc.contains(&db_key), doc.contains(&lin_key)) {
                (true, false) => Ok(db_to_linear(doc.parse_value::<f64>(&db_key)?)),
                (false, true) => doc.parse_value::<f64>(&lin_key),
                _ => Err(ConfigError::PowerForm(stem.to_string())),
            }
        };
        let params = Self {
            omega_pt_pd: doc.parse_value("omega_pt_pd")?,
            omega_st_pd: doc.parse_value("omega_st_pd")?,
            omega_sr_pd: doc.parse_value("omega_sr_pd")?,
            omega_st_sd: doc.parse_value("omega_st_sd")?,
            omega_pt_sd: doc.parse_value("omega_pt_sd")?,
            omega_st_sr: doc.parse_value("omega_st_sr")?,
            omega_pt_sr: doc.parse_value("omega_pt_sr")?,
            omega_sr_sd: doc.parse_value("omega_sr_sd")?,
            p_pt: power("p_pt")?,
            p_pk: power("p_pk")?,
            n0: doc.parse_value("n0")?,
            r_p: doc.parse_value("r_p")?,
            r_s: doc.parse_value("r_s")?,
            lambda_p: doc.parse_value("lambda_p")?,
            n_relays: doc.parse_value("n_relays")?,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Parse a scenario file. Unknown keys are rejected.
pub fn parse_scenario(text: &str) -> Result<ScenarioParams, ConfigError> {
    let doc = KeyValueDoc::parse(text)?;
    doc.deny_unknown(SCENARIO_KEYS)?;
    ScenarioParams::from_doc(&doc)
}

/// Render a scenario in the file format. Powers are written in linear form
/// with shortest round-trip formatting, so `parse_scenario(&format_scenario(p))`
/// reproduces `p` exactly.
pub fn format_scenario(p: &ScenarioParams) -> String {
    let mut out = String::new();
    let rows: [(&str, f64); 14] = [
        ("omega_pt_pd", p.omega_pt_pd),
        ("omega_st_pd", p.omega_st_pd),
        ("omega_sr_pd", p.omega_sr_pd),
        ("omega_st_sd", p.omega_st_sd),
        ("omega_pt_sd", p.omega_pt_sd),
        ("omega_st_sr", p.omega_st_sr),
        ("omega_pt_sr", p.omega_pt_sr),
        ("omega_sr_sd", p.omega_sr_sd),
        ("p_pt_linear", p.p_pt),
        ("p_pk_linear", p.p_pk),
        ("n0", p.n0),
        ("r_p", p.r_p),
        ("r_s", p.r_s),
        ("lambda_p", p.lambda_p),
    ];
    for (key, value) in rows {
        let _ = writeln!(out, "{key} = {value:?}");
    }
    let _ = writeln!(out, "n_relays = {}", p.n_relays);
    out
}

/// `θ_p = 2^{R_p} - 1` and `θ_S = 2^{2 R_S} - 1` (two slots per secondary frame).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub theta_p: f64,
    pub theta_s: f64,
}

/// Which cap set a secondary transmit power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Binding {
    Peak,
    PrimaryOutage,
    /// The primary link misses its target even without interference, so the
    /// secondary node may not transmit at all.
    Zero,
}

impl Binding {
    pub fn as_str(self) -> &'static str {
        match self {
            Binding::Peak => "peak",
            Binding::PrimaryOutage => "primary_outage",
            Binding::Zero => "zero",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBudget {
    pub p_st: f64,
    pub p_sr: f64,
    /// Power allowed by the primary-outage constraint alone.
    pub p_u_st: f64,
    pub p_u_sr: f64,
    pub st_binding: Binding,
    pub sr_binding: Binding,
}

impl PowerBudget {
    pub fn transmits(&self) -> bool {
        self.p_st > 0.0 && self.p_sr > 0.0
    }
}

/// Largest power a node with mean interference gain `omega_interferer_pd`
/// towards the primary receiver may use while keeping the primary outage at
/// `lambda_p`, clamped at zero.
pub fn primary_limited_power(params: &ScenarioParams, omega_interferer_pd: f64) -> f64 {
    let theta_p = params.thresholds().theta_p;
    let snr_scale = params.omega_pt_pd * params.p_pt;
    let headroom = (-theta_p * params.n0 / snr_scale).exp() / (1.0 - params.lambda_p) - 1.0;
    snr_scale / (theta_p * omega_interferer_pd) * headroom.max(0.0)
}

fn combine_with_peak(p_pk: f64, p_u: f64) -> (f64, Binding) {
    if p_u <= 0.0 {
        (0.0, Binding::Zero)
    } else if p_u < p_pk {
        (p_u, Binding::PrimaryOutage)
    } else {
        (p_pk, Binding::Peak)
    }
}

pub fn max_power_st(params: &ScenarioParams) -> (f64, Binding) {
    combine_with_peak(
        params.p_pk,
        primary_limited_power(params, params.omega_st_pd),
    )
}

pub fn max_power_sr(params: &ScenarioParams) -> (f64, Binding) {
    combine_with_peak(
        params.p_pk,
        primary_limited_power(params, params.omega_sr_pd),
    )
}

pub fn power_budget(params: &ScenarioParams) -> PowerBudget {
    let p_u_st = primary_limited_power(params, params.omega_st_pd);
    let p_u_sr = primary_limited_power(params, params.omega_sr_pd);
    let (p_st, st_binding) = combine_with_peak(params.p_pk, p_u_st);
    let (p_sr, sr_binding) = combine_with_peak(params.p_pk, p_u_sr);
    PowerBudget {
        p_st,
        p_sr,
        p_u_st,
        p_u_sr,
        st_binding,
        sr_binding,
    }
}

/// Primary outage averaged over Rayleigh fading on both the primary link and
/// the interfering link, for a secondary node transmitting at `p_secondary`.
pub fn primary_outage_given_power(
    params: &ScenarioParams,
    p_secondary: f64,
    omega_interferer_pd: f64,
) -> f64 {
    let theta_p = params.thresholds().theta_p;
    let snr_scale = params.omega_pt_pd * params.p_pt;
    let no_interference = (-theta_p * params.n0 / snr_scale).exp();
    1.0 - no_interference / (1.0 + theta_p * p_secondary * omega_interferer_pd / snr_scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE_FILE: &str = "\
# reference scenario
omega_st_sd = 1.5
omega_pt_pd = 1
omega_st_sr = 1
omega_sr_sd = 1
omega_pt_sr = 0.5
omega_pt_sd = 0.5
omega_st_pd = 0.5
omega_sr_pd = 0.5
n0 = 1
r_p = 0.4
r_s = 0.1
p_pt_db = 20
p_pk_db = 15   # peak
lambda_p = 0.1
n_relays = 2
";

    #[test]
    fn parses_reference_file() {
        let p = parse_scenario(REFERENCE_FILE).unwrap();
        assert_eq!(p, ScenarioParams::reference(20.0, 15.0, 0.1, 2));
        assert!((p.p_pt - 100.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_lambda() {
        let text = REFERENCE_FILE.replace("lambda_p = 0.1", "lambda_p = 1.5");
        let err = parse_scenario(&text).unwrap_err();
        assert!(matches!(&err, ConfigError::OutOfRange { key, .. } if key == "lambda_p"));
        assert!(err.to_string().contains("lambda_p"));
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let text = format!("{REFERENCE_FILE}omega_st_rs = 1\n");
        assert!(matches!(
            parse_scenario(&text),
            Err(ConfigError::UnknownKey { key, .. }) if key == "omega_st_rs"
        ));
        let text = format!("{REFERENCE_FILE}n0 = 1\n");
        assert!(matches!(
            parse_scenario(&text),
            Err(ConfigError::DuplicateKey { .. })
        ));
    }

    #[test]
    fn rejects_missing_and_doubled_power_forms() {
        let text = REFERENCE_FILE.replace("n0 = 1\n", "");
        assert_eq!(
            parse_scenario(&text),
            Err(ConfigError::MissingKey("n0".into()))
        );
        let text = format!("{REFERENCE_FILE}p_pt_linear = 100\n");
        assert_eq!(
            parse_scenario(&text),
            Err(ConfigError::PowerForm("p_pt".into()))
        );
        let text = REFERENCE_FILE.replace("p_pk_db = 15   # peak\n", "");
        assert_eq!(
            parse_scenario(&text),
            Err(ConfigError::PowerForm("p_pk".into()))
        );
    }

    #[test]
    fn rejects_non_positive_and_garbage() {
        let text = REFERENCE_FILE.replace("omega_pt_sr = 0.5", "omega_pt_sr = 0");
        assert!(matches!(
            parse_scenario(&text),
            Err(ConfigError::OutOfRange { key, .. }) if key == "omega_pt_sr"
        ));
        let text = REFERENCE_FILE.replace("n_relays = 2", "n_relays = two");
        assert!(matches!(parse_scenario(&text), Err(ConfigError::Parse { .. })));
        let text = REFERENCE_FILE.replace("n_relays = 2", "n_relays = 0");
        assert!(matches!(parse_scenario(&text), Err(ConfigError::OutOfRange { .. })));
        assert!(matches!(
            parse_scenario("just words\n"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn thresholds_use_two_slots_for_secondary() {
        let mut p = ScenarioParams::reference(20.0, 15.0, 0.1, 2);
        let t = p.thresholds();
        assert!((t.theta_p - 0.319_507_910_772_894).abs() < 1e-12);
        assert!((t.theta_s - 0.148_698_354_997_035).abs() < 1e-12);
        p.r_p = 1.0;
        p.r_s = 0.5;
        let t = p.thresholds();
        assert_eq!(t.theta_p, 1.0);
        assert_eq!(t.theta_s, 1.0);
    }

    #[test]
    fn reference_budget_is_peak_limited() {
        let p = ScenarioParams::reference(20.0, 15.0, 0.1, 2);
        let b = power_budget(&p);
        // P_u solved independently by bisection on the primary outage, see
        // tests/scenario_budget.rs.
        assert!((b.p_u_st - 67.332_723_201_682_19).abs() < 1e-9);
        assert_eq!(b.st_binding, Binding::Peak);
        assert_eq!(b.p_st, p.p_pk);
        assert_eq!(b.p_sr, b.p_st);
        assert_eq!(b.sr_binding, Binding::Peak);
    }

    #[test]
    fn infeasible_primary_clamps_to_zero() {
        // Without interference the primary already misses a 5% target at 5 dB.
        let p = ScenarioParams::reference(5.0, 15.0, 0.05, 1);
        let theta_p = p.thresholds().theta_p;
        assert!((-theta_p * p.n0 / (p.omega_pt_pd * p.p_pt)).exp() <= 1.0 - p.lambda_p);
        assert_eq!(max_power_st(&p), (0.0, Binding::Zero));
        assert_eq!(max_power_sr(&p), (0.0, Binding::Zero));
        assert!(!power_budget(&p).transmits());
    }

    #[test]
    fn lambda_near_one_leaves_peak() {
        let p = ScenarioParams::reference(20.0, 15.0, 1.0 - 1e-12, 1);
        let b = power_budget(&p);
        assert!(b.p_u_st > 1e10);
        assert_eq!((b.p_st, b.st_binding), (p.p_pk, Binding::Peak));
    }

    #[test]
    fn relay_power_scales_inversely_with_its_gain() {
        let mut p = ScenarioParams::reference(20.0, 40.0, 0.1, 1);
        let base = power_budget(&p).p_u_sr;
        p.omega_sr_pd *= 2.0;
        let halved = power_budget(&p).p_u_sr;
        assert!((halved - base / 2.0).abs() < 1e-12 * base);
    }

    #[test]
    fn zero_interference_primary_outage() {
        let p = ScenarioParams::reference(20.0, 15.0, 0.1, 1);
        let theta_p = p.thresholds().theta_p;
        let want = 1.0 - (-theta_p / 100.0f64).exp();
        assert!((primary_outage_given_power(&p, 0.0, p.omega_st_pd) - want).abs() < 1e-15);
    }

    #[test]
    fn db_helpers() {
        assert!((db_to_linear(20.0) - 100.0).abs() < 1e-12);
        assert!((linear_to_db(1000.0) - 30.0).abs() < 1e-12);
    }
}
