//! Command-line front end.
//!
//! Exit codes: 0 success or PASS, 1 engine failure, 2 configuration or I/O
//! error, 3 outside the closed-form validity region, 4 validation FAIL.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::closed_form::{self, ClosedFormError};
use crate::mc_sim::{self, Combine, McConfig, SinrModel};
use crate::quad_oracle::{self, QuadConfig, QuadMode};
use crate::scenario::{self, linear_to_db, power_budget, ScenarioParams};
use crate::sweep::{self, EngineError, SweepError, SweepSpec};
use crate::validate;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ENGINE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_VALIDITY: u8 = 3;
pub const EXIT_FAIL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "cogrelay", version, about = "Outage analysis for underlay cognitive AF relaying")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum EngineArg {
    ClosedForm,
    MonteCarlo,
    Quadrature,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one scenario file.
    Eval {
        file: PathBuf,
        /// Engines to run (repeatable).
        #[arg(long = "engine", value_enum, default_values_t = [EngineArg::ClosedForm])]
        engines: Vec<EngineArg>,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Print a JSON record instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Run a sweep file and write CSV.
    Sweep {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Cross-check closed form, quadrature and Monte Carlo.
    Validate {
        file: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<EngineError> for Failure {
    fn from(err: EngineError) -> Self {
        let code = if err.is_outside_validity() { EXIT_VALIDITY } else { EXIT_ENGINE };
        Self { code, message: err.to_string() }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn load_scenario(path: &Path) -> Result<ScenarioParams, Failure> {
    scenario::parse_scenario(&read_text(path)?)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

/// Parse arguments from the process and run.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = io::stdout().lock();
    ExitCode::from(run(cli, &mut stdout))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> u8 {
    let result = match cli.command {
        Command::Eval { file, mut engines, samples, seed, json } => {
            engines.sort();
            engines.dedup();
            cmd_eval(&file, &engines, samples, seed, json, out)
        }
        Command::Sweep { file, out: csv_path, threads } => cmd_sweep(&file, &csv_path, threads),
        Command::Validate { file, seed, samples } => cmd_validate(&file, seed, samples, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn io_failure(e: io::Error) -> Failure {
    Failure::config(format!("writing output: {e}"))
}

fn cmd_eval(
    file: &Path,
    engines: &[EngineArg],
    samples: u64,
    seed: u64,
    as_json: bool,
    out: &mut dyn Write,
) -> Result<u8, Failure> {
    let params = load_scenario(file)?;
    let budget = power_budget(&params);
    let th = params.thresholds();

    let mut record = json!({
        "scenario": file.display().to_string(),
        "theta_p": th.theta_p,
        "theta_s": th.theta_s,
        "budget": {
            "p_st": budget.p_st,
            "p_sr": budget.p_sr,
            "p_u_st": budget.p_u_st,
            "p_u_sr": budget.p_u_sr,
            "st_binding": budget.st_binding.as_str(),
            "sr_binding": budget.sr_binding.as_str(),
        },
    });
    let mut text = String::new();
    text += &format!("theta_p = {:.10e}\ntheta_s = {:.10e}\n", th.theta_p, th.theta_s);
    text += &format!(
        "P_ST = {:.10e} ({:.4} dB, {})\nP_SR = {:.10e} ({:.4} dB, {})\n",
        budget.p_st,
        linear_to_db(budget.p_st),
        budget.st_binding.as_str(),
        budget.p_sr,
        linear_to_db(budget.p_sr),
        budget.sr_binding.as_str()
    );
    text += &format!(
        "P_u,ST = {:.10e}\nP_u,SR = {:.10e}\n",
        budget.p_u_st, budget.p_u_sr
    );

    let mut outside = false;
    for &engine in engines {
        match engine {
            EngineArg::ClosedForm => match closed_form::secondary_outage_mrc(&params) {
                Ok(r) => {
                    text += &format!(
                        "[closed_form] validity = {}\n[closed_form] I1 = {:.16e}\n[closed_form] I2 = {:.16e}\n[closed_form] I3 = {:.16e}\n[closed_form] outage_mrc = {:.16e}\n[closed_form] outage_relay_only = {:.16e}\n",
                        r.validity.as_str(), r.i1, r.i2, r.i3, r.outage_mrc, r.outage_relay_only
                    );
                    if let Some(reason) = &r.fallback_reason {
                        text += &format!("[closed_form] outage_mrc substituted by quadrature: {reason}\n");
                    }
                    record["closed_form"] = json!({
                        "validity": r.validity.as_str(),
                        "i1": r.i1,
                        "i2": finite_or_null(r.i2),
                        "i3": finite_or_null(r.i3),
                        "outage_mrc": r.outage_mrc,
                        "outage_relay_only": r.outage_relay_only,
                        "fallback_reason": r.fallback_reason,
                    });
                }
                Err(err @ ClosedFormError::OutsideValidityRegion { .. }) => {
                    outside = true;
                    text += &format!("[closed_form] validity = outside_validity_region ({err})\n");
                    record["closed_form"] = json!({
                        "validity": "outside_validity_region",
                        "error": err.to_string(),
                    });
                }
                Err(err) => return Err(EngineError::from(err).into()),
            },
            EngineArg::Quadrature => {
                let cfg = QuadConfig::default();
                let mrc = quad_oracle::outage_with_budget(&params, &budget, QuadMode::MrcWithDirect, &cfg)
                    .map_err(EngineError::from)?;
                let relay = quad_oracle::outage_with_budget(&params, &budget, QuadMode::RelayOnly, &cfg)
                    .map_err(EngineError::from)?;
                text += &format!(
                    "[quadrature] outage_mrc = {:.16e} (+/- {:.1e})\n[quadrature] outage_relay_only = {:.16e} (+/- {:.1e})\n",
                    mrc.value, mrc.abs_error, relay.value, relay.abs_error
                );
                record["quadrature"] = json!({
                    "outage_mrc": mrc.value,
                    "outage_mrc_error": mrc.abs_error,
                    "outage_relay_only": relay.value,
                    "outage_relay_only_error": relay.abs_error,
                });
            }
            EngineArg::MonteCarlo => {
                let mut entry = serde_json::Map::new();
                for (name, combine) in [("mrc", Combine::MrcWithDirect), ("relay_only", Combine::RelayOnly)] {
                    let mc = McConfig::new(samples, seed, SinrModel::MaxMinBound, combine);
                    let est = mc_sim::estimate_secondary_outage_with_budget(&params, &budget, &mc)
                        .map_err(EngineError::from)?;
                    text += &format!(
                        "[monte_carlo] outage_{name} = {:.16e} (95% CI [{:.6e}, {:.6e}], {} samples, seed {})\n",
                        est.p_hat, est.ci_low, est.ci_high, est.samples, est.seed
                    );
                    entry.insert(
                        format!("outage_{name}"),
                        json!({ "p_hat": est.p_hat, "ci_low": est.ci_low, "ci_high": est.ci_high }),
                    );
                }
                entry.insert("samples".into(), json!(samples));
                entry.insert("seed".into(), json!(seed));
                record["monte_carlo"] = Value::Object(entry);
            }
        }
    }

    if as_json {
        writeln!(out, "{record}").map_err(io_failure)?;
    } else {
        out.write_all(text.as_bytes()).map_err(io_failure)?;
    }
    if outside && engines == [EngineArg::ClosedForm] {
        return Ok(EXIT_VALIDITY);
    }
    Ok(EXIT_OK)
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn sweep_failure(err: SweepError) -> Failure {
    match err {
        SweepError::Config(e) => Failure::config(e.to_string()),
        SweepError::Csv(e) => Failure::config(e.to_string()),
        SweepError::Point { ref source, .. } => Failure {
            code: if source.is_outside_validity() { EXIT_VALIDITY } else { EXIT_ENGINE },
            message: err.to_string(),
        },
    }
}

fn cmd_sweep(file: &Path, csv_path: &Path, threads: Option<usize>) -> Result<u8, Failure> {
    let spec = SweepSpec::parse(&read_text(file)?)
        .map_err(|e| Failure::config(format!("{}: {e}", file.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::config(format!("thread pool: {e}")))?;
    let rows = pool.install(|| sweep::run_sweep(&spec)).map_err(sweep_failure)?;
    let mut buf = Vec::new();
    sweep::write_csv(&rows, &mut buf).map_err(|e| sweep_failure(e.into()))?;
    fs::write(csv_path, buf).map_err(|e| Failure::config(format!("{}: {e}", csv_path.display())))?;
    Ok(EXIT_OK)
}

fn cmd_validate(file: &Path, seed: u64, samples: u64, out: &mut dyn Write) -> Result<u8, Failure> {
    if samples == 0 {
        return Err(Failure::config("--samples must be >= 1"));
    }
    let params = load_scenario(file)?;
    let report = validate::validate_scenario(&params, seed, samples)?;
    writeln!(out, "{report}").map_err(io_failure)?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_FAIL })
}
