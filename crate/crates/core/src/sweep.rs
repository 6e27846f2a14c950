//! Parameter sweeps over one scenario axis, emitted as CSV.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::closed_form::{self, ClosedFormError, Validity};
use crate::mc_sim::{self, Combine, McConfig, McError, SinrModel};
use crate::quad_oracle::{self, OracleError, QuadConfig, QuadMode};
use crate::scenario::{power_budget, ConfigError, KeyValueDoc, PowerBudget, ScenarioParams, SCENARIO_KEYS};

pub const SWEEP_KEYS: &[&str] = &[
    "sweep_axis",
    "sweep_values",
    "engines",
    "curves",
    "mc_samples",
    "mc_seed",
    "mc_model",
];

pub const CSV_HEADER: [&str; 12] = [
    "axis_name",
    "axis_value",
    "curve",
    "engine",
    "outage",
    "ci_low",
    "ci_high",
    "p_st",
    "p_sr",
    "st_binding",
    "sr_binding",
    "validity",
];

pub const DEFAULT_MC_SAMPLES: u64 = 100_000;
pub const DEFAULT_MC_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    PPtDb,
    LambdaP,
    PPkDb,
    NRelays,
    RS,
}

impl Axis {
    pub fn key(self) -> &'static str {
        match self {
            Axis::PPtDb => "p_pt_db",
            Axis::LambdaP => "lambda_p",
            Axis::PPkDb => "p_pk_db",
            Axis::NRelays => "n_relays",
            Axis::RS => "r_s",
        }
    }

    /// Keys this axis overrides in the base scenario.
    fn displaced_keys(self) -> &'static [&'static str] {
        match self {
            Axis::PPtDb => &["p_pt_db", "p_pt_linear"],
            Axis::PPkDb => &["p_pk_db", "p_pk_linear"],
            Axis::LambdaP => &["lambda_p"],
            Axis::NRelays => &["n_relays"],
            Axis::RS => &["r_s"],
        }
    }
}

impl FromStr for Axis {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        [Axis::PPtDb, Axis::LambdaP, Axis::PPkDb, Axis::NRelays, Axis::RS]
            .into_iter()
            .find(|a| a.key() == s)
            .ok_or(())
    }
}

/// Engines in output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Engine {
    ClosedForm,
    MonteCarlo,
    Quadrature,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::ClosedForm => "closed_form",
            Engine::MonteCarlo => "monte_carlo",
            Engine::Quadrature => "quadrature",
        }
    }
}

impl FromStr for Engine {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        [Engine::ClosedForm, Engine::MonteCarlo, Engine::Quadrature]
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or(())
    }
}

/// Curves in output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Curve {
    MrcWithDirect,
    RelayOnly,
}

impl Curve {
    pub fn as_str(self) -> &'static str {
        match self {
            Curve::MrcWithDirect => "mrc_with_direct",
            Curve::RelayOnly => "relay_only",
        }
    }

    fn quad_mode(self) -> QuadMode {
        match self {
            Curve::MrcWithDirect => QuadMode::MrcWithDirect,
            Curve::RelayOnly => QuadMode::RelayOnly,
        }
    }

    fn combine(self) -> Combine {
        match self {
            Curve::MrcWithDirect => Combine::MrcWithDirect,
            Curve::RelayOnly => Combine::RelayOnly,
        }
    }
}

impl FromStr for Curve {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        [Curve::MrcWithDirect, Curve::RelayOnly]
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or(())
    }
}

pub fn parse_sinr_model(s: &str) -> Option<SinrModel> {
    match s {
        "max_min_bound" => Some(SinrModel::MaxMinBound),
        "exact_harmonic" => Some(SinrModel::ExactHarmonic),
        _ => None,
    }
}

/// Failure of one engine on one scenario.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("closed form: {0}")]
    ClosedForm(#[from] ClosedFormError),
    #[error("quadrature: {0}")]
    Quadrature(#[from] OracleError),
    #[error("monte carlo: {0}")]
    MonteCarlo(#[from] McError),
}

impl EngineError {
    pub fn is_outside_validity(&self) -> bool {
        matches!(
            self,
            EngineError::ClosedForm(ClosedFormError::OutsideValidityRegion { .. })
        )
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("sweep point {axis} = {value}: {source}")]
    Point {
        axis: &'static str,
        value: f64,
        #[source]
        source: EngineError,
    },
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: Axis,
    pub grid: Vec<f64>,
    /// Base document; every grid point overrides the axis key.
    base: KeyValueDoc,
    pub engines: Vec<Engine>,
    pub curves: Vec<Curve>,
    pub mc_samples: u64,
    pub mc_seed: u64,
    pub mc_model: SinrModel,
}

fn bad_value(key: &str, value: &str) -> ConfigError {
    ConfigError::Parse {
        key: key.to_string(),
        value: value.to_string(),
    }
}

fn parse_list<T: FromStr + Ord + Copy>(doc: &KeyValueDoc, key: &str, default: &[T]) -> Result<Vec<T>, ConfigError> {
    let Some(raw) = doc.get(key) else {
        return Ok(default.to_vec());
    };
    let mut items = raw
        .split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| bad_value(key, s.trim())))
        .collect::<Result<Vec<_>, _>>()?;
    items.sort();
    items.dedup();
    if items.is_empty() {
        return Err(bad_value(key, raw));
    }
    Ok(items)
}

/// Accepts `100000` as well as `1e5`.
fn parse_count(doc: &KeyValueDoc, key: &str, default: u64) -> Result<u64, ConfigError> {
    let Some(raw) = doc.get(key) else {
        return Ok(default);
    };
    if let Ok(n) = raw.parse::<u64>() {
        return Ok(n);
    }
    match raw.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(64) => Ok(x as u64),
        _ => Err(bad_value(key, raw)),
    }
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let doc = KeyValueDoc::parse(text)?;
        let allowed: Vec<&str> = SCENARIO_KEYS.iter().chain(SWEEP_KEYS).copied().collect();
        doc.deny_unknown(&allowed)?;

        let axis_raw = doc.require("sweep_axis")?;
        let axis: Axis = axis_raw.parse().map_err(|_| bad_value("sweep_axis", axis_raw))?;

        let values_raw = doc.require("sweep_values")?;
        let grid = values_raw
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad_value("sweep_values", s.trim())))
            .collect::<Result<Vec<_>, _>>()?;
        if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::OutOfRange {
                key: "sweep_values".to_string(),
                value: values_raw.to_string(),
                reason: "must be finite and strictly increasing",
            });
        }
        if axis == Axis::NRelays && grid.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
            return Err(ConfigError::OutOfRange {
                key: "sweep_values".to_string(),
                value: values_raw.to_string(),
                reason: "relay counts must be positive integers",
            });
        }

        let mc_model = match doc.get("mc_model") {
            None => SinrModel::MaxMinBound,
            Some(raw) => parse_sinr_model(raw).ok_or_else(|| bad_value("mc_model", raw))?,
        };
        let mc_samples = parse_count(&doc, "mc_samples", DEFAULT_MC_SAMPLES)?;
        if mc_samples == 0 {
            return Err(ConfigError::OutOfRange {
                key: "mc_samples".to_string(),
                value: "0".to_string(),
                reason: "must be >= 1",
            });
        }

        let spec = Self {
            axis,
            grid,
            engines: parse_list(&doc, "engines", &[Engine::ClosedForm])?,
            curves: parse_list(&doc, "curves", &[Curve::MrcWithDirect, Curve::RelayOnly])?,
            mc_samples,
            mc_seed: parse_count(&doc, "mc_seed", DEFAULT_MC_SEED)?,
            mc_model,
            base: doc,
        };
        for &value in &spec.grid {
            spec.scenario_at(value)?;
        }
        Ok(spec)
    }

    /// Base scenario with the axis set to `value`.
    pub fn scenario_at(&self, value: f64) -> Result<ScenarioParams, ConfigError> {
        let mut doc = self.base.clone();
        for key in self.axis.displaced_keys() {
            doc.remove(key);
        }
        let rendered = if self.axis == Axis::NRelays {
            format!("{}", value as u32)
        } else {
            format!("{value:?}")
        };
        doc.set(self.axis.key(), &rendered);
        ScenarioParams::from_doc(&doc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: Axis,
    pub axis_value: f64,
    pub curve: Curve,
    pub engine: Engine,
    pub outage: f64,
    pub ci: Option<(f64, f64)>,
    pub budget: PowerBudget,
    pub validity: Option<Validity>,
}

fn point_rows(spec: &SweepSpec, value: f64) -> Result<Vec<SweepRow>, EngineError> {
    // Grid points were validated when the spec was parsed.
    let params = spec.scenario_at(value).expect("validated grid point");
    let budget = power_budget(&params);

    let closed = if spec.engines.contains(&Engine::ClosedForm) {
        if spec.curves.contains(&Curve::MrcWithDirect) {
            Some(closed_form::secondary_outage_mrc(&params)?)
        } else {
            None
        }
    } else {
        None
    };

    let mut rows = Vec::new();
    for &curve in &spec.curves {
        for &engine in &spec.engines {
            let row = |outage, ci, validity| SweepRow {
                axis: spec.axis,
                axis_value: value,
                curve,
                engine,
                outage,
                ci,
                budget,
                validity,
            };
            rows.push(match engine {
                Engine::ClosedForm => match (&closed, curve) {
                    (Some(r), Curve::MrcWithDirect) => row(r.outage_mrc, None, Some(r.validity)),
                    (Some(r), Curve::RelayOnly) => row(r.outage_relay_only, None, Some(r.validity)),
                    (None, _) => row(
                        closed_form::term_i1(&params, &budget)?,
                        None,
                        Some(Validity::Valid),
                    ),
                },
                Engine::Quadrature => {
                    let q = quad_oracle::outage_with_budget(
                        &params,
                        &budget,
                        curve.quad_mode(),
                        &QuadConfig::default(),
                    )?;
                    row(q.value, None, None)
                }
                Engine::MonteCarlo => {
                    let mc = McConfig::new(spec.mc_samples, spec.mc_seed, spec.mc_model, curve.combine());
                    let est = mc_sim::estimate_secondary_outage_with_budget(&params, &budget, &mc)?;
                    row(est.p_hat, Some((est.ci_low, est.ci_high)), None)
                }
            });
        }
    }
    Ok(rows)
}

/// Evaluate every grid point, in parallel, returning rows in grid order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, SweepError> {
    let per_point: Vec<Vec<SweepRow>> = spec
        .grid
        .par_iter()
        .map(|&value| {
            point_rows(spec, value).map_err(|source| SweepError::Point {
                axis: spec.axis.key(),
                value,
                source,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

/// Fixed-width scientific notation with 17 significant digits.
pub struct Sci(pub f64);

impl fmt::Display for Sci {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.16e}", self.0)
    }
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let (ci_low, ci_high) = match r.ci {
            Some((lo, hi)) => (Sci(lo).to_string(), Sci(hi).to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.axis.key().to_string(),
            Sci(r.axis_value).to_string(),
            r.curve.as_str().to_string(),
            r.engine.as_str().to_string(),
            Sci(r.outage).to_string(),
            ci_low,
            ci_high,
            Sci(r.budget.p_st).to_string(),
            Sci(r.budget.p_sr).to_string(),
            r.budget.st_binding.as_str().to_string(),
            r.budget.sr_binding.as_str().to_string(),
            r.validity.map(|v| v.as_str()).unwrap_or("").to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
omega_pt_pd = 1
omega_st_pd = 0.5
omega_sr_pd = 0.5
omega_st_sd = 1.5
omega_pt_sd = 0.5
omega_st_sr = 1
omega_pt_sr = 0.5
omega_sr_sd = 1
p_pk_db = 15
n0 = 1
r_p = 0.4
r_s = 0.1
lambda_p = 0.1
n_relays = 2
";

    fn spec(extra: &str) -> Result<SweepSpec, ConfigError> {
        SweepSpec::parse(&format!("{BASE}{extra}"))
    }

    #[test]
    fn axis_key_may_be_omitted() {
        let s = spec("sweep_axis = p_pt_db\nsweep_values = 10, 20\n").unwrap();
        assert_eq!(s.grid, vec![10.0, 20.0]);
        assert_eq!(s.engines, vec![Engine::ClosedForm]);
        let p = s.scenario_at(20.0).unwrap();
        assert!((p.p_pt - 100.0).abs() < 1e-12);
    }

    #[test]
    fn linear_base_power_is_displaced() {
        let s = spec("p_pt_linear = 3\nsweep_axis = p_pt_db\nsweep_values = 10\n").unwrap();
        assert!((s.scenario_at(10.0).unwrap().p_pt - 10.0).abs() < 1e-12);
    }

    #[test]
    fn bad_grids_rejected() {
        assert!(spec("p_pt_db = 20\nsweep_axis = lambda_p\nsweep_values = 0.2, 0.1\n").is_err());
        assert!(spec("p_pt_db = 20\nsweep_axis = lambda_p\nsweep_values = 0.1, 1.5\n").is_err());
        assert!(spec("p_pt_db = 20\nsweep_axis = n_relays\nsweep_values = 1, 2.5\n").is_err());
        assert!(spec("p_pt_db = 20\nsweep_axis = colour\nsweep_values = 1\n").is_err());
        assert!(spec("p_pt_db = 20\nsweep_axis = r_s\nsweep_values = 0.1\nengines = magic\n").is_err());
    }

    #[test]
    fn sample_counts_accept_scientific_notation() {
        let s = spec("p_pt_db = 20\nsweep_axis = r_s\nsweep_values = 0.1\nmc_samples = 1e6\n").unwrap();
        assert_eq!(s.mc_samples, 1_000_000);
    }

    #[test]
    fn single_point_row_count_and_order() {
        let s = spec(
            "p_pt_db = 20\nsweep_axis = lambda_p\nsweep_values = 0.1\n\
             engines = quadrature, closed_form, monte_carlo\nmc_samples = 2000\n",
        )
        .unwrap();
        let rows = run_sweep(&s).unwrap();
        let order: Vec<_> = rows.iter().map(|r| (r.curve, r.engine)).collect();
        assert_eq!(
            order,
            vec![
                (Curve::MrcWithDirect, Engine::ClosedForm),
                (Curve::MrcWithDirect, Engine::MonteCarlo),
                (Curve::MrcWithDirect, Engine::Quadrature),
                (Curve::RelayOnly, Engine::ClosedForm),
                (Curve::RelayOnly, Engine::MonteCarlo),
                (Curve::RelayOnly, Engine::Quadrature),
            ]
        );
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("axis_name,axis_value,curve,engine,outage,"));
        let mc_line = text.lines().nth(2).unwrap();
        assert!(mc_line.contains("monte_carlo") && !mc_line.contains(",,"));
        let quad_line = text.lines().nth(3).unwrap();
        assert!(quad_line.ends_with(",peak,peak,"));
    }

    #[test]
    fn outside_validity_names_the_point() {
        let text = BASE.replace("omega_st_sd = 1.5", "omega_st_sd = 0.4");
        let s = SweepSpec::parse(&format!("{text}p_pt_db = 20\nsweep_axis = lambda_p\nsweep_values = 0.1, 0.2\n")).unwrap();
        let err = run_sweep(&s).unwrap_err();
        assert!(err.to_string().contains("lambda_p = 0.1"), "{err}");
    }

    #[test]
    fn sci_format_has_seventeen_digits() {
        assert_eq!(Sci(0.5).to_string(), "5.0000000000000000e-1");
    }
}
