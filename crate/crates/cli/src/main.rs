//! `fcsv`: pricing, figure data and validation studies for the two-factor
//! forward curve model with stochastic volatility.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure.

mod manifest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fcsv_core::calibration::{fit, FitOptions, VolQuote};
use fcsv_core::drift::k_table;
use fcsv_core::fourier::{self, atm_term_structure, smile_slice, CharFnGrid, VolPoint};
use fcsv_core::mc::{drift_error_study, price_payoff, DriftStudy, McConfig, PayoffSpec};
use fcsv_core::{presets, validate_params, MarketCurves, ModelParams, OptionKind, OptionSpec, QuadratureConfig};

use manifest::{digest, RunManifest};

const DEFAULT_SEED: u64 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "fcsv",
    version,
    about = "Forward curve stochastic volatility pricing and validation"
)]
struct Cli {
    /// Monte Carlo seed.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Result file; a `<out>.manifest.json` is written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Built-in parameter set, used when --params is absent.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Preset {
    Fig1,
    Sec5,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Style {
    Vanilla,
    Early,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Call,
    Put,
}

impl From<Kind> for OptionKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Call => OptionKind::Call,
            Kind::Put => OptionKind::Put,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Exact,
    Approximate,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ModelInputs {
    /// Model parameters JSON (overrides --preset).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Market curves JSON: {"forwards": [[T, F], ...], "discounts": [[T, D], ...]}.
    /// Defaults to F = 1, no discounting.
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Price one vanilla or early-exercise option by Fourier inversion.
    Price {
        #[arg(value_enum)]
        style: Style,
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long, default_value_t = 1.0)]
        expiry: f64,
        /// Settlement of the underlying forward (early style only).
        #[arg(long)]
        settlement: Option<f64>,
        /// Strike (default: at the money).
        #[arg(long)]
        strike: Option<f64>,
        #[arg(long, value_enum, default_value_t = Kind::Call)]
        kind: Kind,
    },
    /// ATM implied volatility against expiry (vanilla options).
    TermStructure {
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,0.75,1,1.5,2,3,4,5")]
        expiries: Vec<f64>,
    },
    /// Implied volatility against strike at a fixed expiry and settlement.
    Smile {
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long, default_value_t = 1.0)]
        expiry: f64,
        /// Defaults to the expiry.
        #[arg(long)]
        settlement: Option<f64>,
        /// Strikes as multiples of the forward.
        #[arg(long, value_delimiter = ',')]
        moneyness: Option<Vec<f64>>,
    },
    /// Monte Carlo price with standard error.
    McPrice {
        #[command(flatten)]
        inputs: ModelInputs,
        /// Payoff JSON; overrides the option flags below.
        #[arg(long)]
        payoff: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Style::Vanilla)]
        style: Style,
        #[arg(long, default_value_t = 1.0)]
        expiry: f64,
        #[arg(long)]
        settlement: Option<f64>,
        #[arg(long)]
        strike: Option<f64>,
        #[arg(long, value_enum, default_value_t = Kind::Call)]
        kind: Kind,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
        #[arg(long, default_value_t = presets::SEC5_PATHS)]
        paths: usize,
        #[arg(long, default_value_t = presets::SEC5_STEPS)]
        steps: usize,
        #[arg(long)]
        antithetic: bool,
    },
    /// Exact versus approximated drift, per vol of vol.
    DriftStudy {
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,1.5,2,2.5,3")]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = presets::SEC5_PATHS)]
        paths: usize,
        #[arg(long, default_value_t = presets::SEC5_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = presets::SEC5_EXPIRY)]
        expiry: f64,
        #[arg(long, default_value_t = presets::SEC5_SETTLEMENT)]
        settlement: f64,
        /// OTM strike as a multiple of the forward.
        #[arg(long, default_value_t = presets::SEC5_OTM_MONEYNESS)]
        otm: f64,
        #[arg(long)]
        antithetic: bool,
    },
    /// Drift factor k^2(t, T) on a time grid.
    KTable {
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long, default_value_t = presets::SEC5_SETTLEMENT)]
        settlement: f64,
        /// Observation times; default is a uniform grid on [0, T].
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Fit model parameters to implied volatility quotes.
    Calibrate {
        /// Quotes JSON: [{"t_e":..,"T":..,"K":..,"vol":..,"weight":..}].
        #[arg(long)]
        quotes: PathBuf,
        /// Starting parameters JSON (default: the preset).
        #[arg(long)]
        initial: Option<PathBuf>,
        #[arg(long)]
        curves: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        budget: usize,
    },
}

/// Error raised for invalid user input (exit code 2).
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<fcsv_core::Error>() {
            return if e.is_numerical() { 3 } else { 2 };
        }
    }
    2
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| InputError(format!("cannot read {what} file {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| anyhow!(InputError(format!("malformed {what} file {}: {e}", path.display()))))
}

/// Resolved inputs plus the files they came from.
struct Resolved {
    params: ModelParams,
    curves: MarketCurves,
    input_files: Vec<PathBuf>,
}

fn preset_params(preset: Preset) -> ModelParams {
    match preset {
        Preset::Fig1 => presets::fig1(),
        Preset::Sec5 => presets::sec5(),
    }
}

fn resolve(inputs: &ModelInputs, preset: Option<Preset>, default: Preset) -> Result<Resolved> {
    let mut input_files = Vec::new();
    let params = match &inputs.params {
        Some(path) => {
            input_files.push(path.clone());
            let p: ModelParams = read_json(path, "parameters")?;
            validate_params(p)?
        }
        None => preset_params(preset.unwrap_or(default)),
    };
    let curves = match &inputs.curves {
        Some(path) => {
            input_files.push(path.clone());
            read_json(path, "curves")?
        }
        None => MarketCurves::flat(1.0, 1.0)?,
    };
    Ok(Resolved {
        params,
        curves,
        input_files,
    })
}

fn vol_csv(points: &[VolPoint]) -> String {
    let mut s = String::from("t_e,T,K,price,implied_vol\n");
    for v in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            v.expiry, v.settlement, v.strike, v.price, v.implied_vol
        );
    }
    s
}

/// What a command produced: text for stdout or the --out file, and the
/// configuration to record.
struct Output {
    text: String,
    config: serde_json::Value,
    input_files: Vec<PathBuf>,
}

fn run(cli: &Cli) -> Result<Output> {
    let q = QuadratureConfig::default();
    match &cli.command {
        Command::Price {
            style,
            inputs,
            expiry,
            settlement,
            strike,
            kind,
        } => {
            let ctx = resolve(inputs, cli.preset, Preset::Fig1)?;
            let settle = match style {
                Style::Vanilla => {
                    if settlement.is_some_and(|s| s != *expiry) {
                        bail!(InputError(
                            "a vanilla option settles at its expiry; use `early` for T > t_e".into()
                        ));
                    }
                    *expiry
                }
                Style::Early => settlement.ok_or_else(|| InputError("early style needs --settlement".into()))?,
            };
            let forward = ctx.curves.forward(settle);
            let discount = ctx.curves.discount(settle);
            let strike = strike.unwrap_or(forward);
            let spec = OptionSpec::early_exercise(*expiry, settle, strike, (*kind).into());
            let priced = fourier::price(&spec, &ctx.curves, &ctx.params, &q)?;
            let grid = CharFnGrid::build(*expiry, settle, &ctx.params, &q)?;
            let (_, vol) = grid.implied_vol(forward, strike, discount, &q)?;
            #[derive(Serialize)]
            struct PriceReport {
                spec: OptionSpec,
                forward: f64,
                discount: f64,
                price: f64,
                implied_vol: f64,
                theta_reached: f64,
                nodes_used: usize,
                last_panel: f64,
                ode_steps: usize,
            }
            let report = PriceReport {
                spec,
                forward,
                discount,
                price: priced.price,
                implied_vol: vol,
                theta_reached: priced.theta_reached,
                nodes_used: priced.nodes_used,
                last_panel: priced.last_panel,
                ode_steps: priced.ode_steps,
            };
            let text = serde_json::to_string_pretty(&report)? + "\n";
            Ok(Output {
                text,
                config: serde_json::json!({ "params": ctx.params, "spec": spec, "quadrature": q }),
                input_files: ctx.input_files,
            })
        }
        Command::TermStructure { inputs, expiries } => {
            let ctx = resolve(inputs, cli.preset, Preset::Fig1)?;
            let points = atm_term_structure(expiries, &ctx.curves, &ctx.params, &q)?;
            Ok(Output {
                text: vol_csv(&points),
                config: serde_json::json!({ "params": ctx.params, "expiries": expiries, "quadrature": q }),
                input_files: ctx.input_files,
            })
        }
        Command::Smile {
            inputs,
            expiry,
            settlement,
            moneyness,
        } => {
            let ctx = resolve(inputs, cli.preset, Preset::Fig1)?;
            let settle = settlement.unwrap_or(*expiry);
            let moneyness = moneyness
                .clone()
                .unwrap_or_else(|| (50..=200).step_by(5).map(|p| p as f64 / 100.0).collect());
            let forward = ctx.curves.forward(settle);
            let strikes: Vec<f64> = moneyness.iter().map(|m| m * forward).collect();
            let points = smile_slice(&strikes, *expiry, settle, &ctx.curves, &ctx.params, &q)?;
            Ok(Output {
                text: vol_csv(&points),
                config: serde_json::json!({
                    "params": ctx.params, "expiry": expiry, "settlement": settle,
                    "moneyness": moneyness, "quadrature": q,
                }),
                input_files: ctx.input_files,
            })
        }
        Command::McPrice {
            inputs,
            payoff,
            style,
            expiry,
            settlement,
            strike,
            kind,
            mode,
            paths,
            steps,
            antithetic,
        } => {
            let mut ctx = resolve(inputs, cli.preset, Preset::Fig1)?;
            let payoff = match payoff {
                Some(path) => {
                    ctx.input_files.push(path.clone());
                    read_json::<PayoffSpec>(path, "payoff")?
                }
                None => {
                    let settle = match style {
                        Style::Vanilla => *expiry,
                        Style::Early => {
                            settlement.ok_or_else(|| InputError("early style needs --settlement".into()))?
                        }
                    };
                    let strike = strike.unwrap_or_else(|| ctx.curves.forward(settle));
                    match style {
                        Style::Vanilla => PayoffSpec::Vanilla {
                            expiry: *expiry,
                            strike,
                            option: (*kind).into(),
                        },
                        Style::Early => PayoffSpec::EarlyExercise {
                            expiry: *expiry,
                            settlement: settle,
                            strike,
                            option: (*kind).into(),
                        },
                    }
                }
            };
            let fixings = payoff.fixings();
            let horizon = fixings.iter().map(|f| f.time).fold(0.0, f64::max);
            let mut cfg = McConfig::new(*paths, *steps, horizon, cli.seed).with_antithetic(*antithetic);
            if let Mode::Exact = mode {
                let mut settles: Vec<f64> = fixings.iter().map(|f| f.settlement).collect();
                settles.sort_by(f64::total_cmp);
                settles.dedup();
                cfg = cfg.exact(settles);
            }
            let est = price_payoff(&payoff, &cfg, &ctx.curves, &ctx.params)?;
            Ok(Output {
                text: format!(
                    "value,std_error,n_paths\n{},{},{}\n",
                    est.value, est.std_error, est.n_paths
                ),
                config: serde_json::json!({ "params": ctx.params, "payoff": payoff, "mc": cfg }),
                input_files: ctx.input_files,
            })
        }
        Command::DriftStudy {
            inputs,
            alphas,
            paths,
            steps,
            expiry,
            settlement,
            otm,
            antithetic,
        } => {
            let ctx = resolve(inputs, cli.preset, Preset::Sec5)?;
            let study = DriftStudy {
                expiry: *expiry,
                settlement: *settlement,
                otm_moneyness: *otm,
                n_paths: *paths,
                n_steps: *steps,
                seed: cli.seed,
                antithetic: *antithetic,
            };
            let rows = drift_error_study(alphas, &study, &ctx.curves, &ctx.params)?;
            let mut text =
                String::from("alpha,fwd_err_bp,fwd_stderr_bp,atm_vol_err_pct,atm_vol_stderr_pct,otm_vol_err_pct,otm_vol_stderr_pct\n");
            for r in &rows {
                let _ = writeln!(
                    text,
                    "{},{},{},{},{},{},{}",
                    r.alpha,
                    r.fwd_err_bp,
                    r.fwd_stderr_bp,
                    r.atm_vol_err_pct,
                    r.atm_vol_stderr_pct,
                    r.otm_vol_err_pct,
                    r.otm_vol_stderr_pct
                );
            }
            Ok(Output {
                text,
                config: serde_json::json!({ "params": ctx.params, "alphas": alphas, "study": study }),
                input_files: ctx.input_files,
            })
        }
        Command::KTable {
            inputs,
            settlement,
            times,
            points,
        } => {
            let ctx = resolve(inputs, cli.preset, Preset::Sec5)?;
            let times = match times {
                Some(t) => t.clone(),
                None => {
                    if *points == 0 {
                        bail!(InputError("--points must be at least 1".into()));
                    }
                    (0..=*points).map(|i| settlement * i as f64 / *points as f64).collect()
                }
            };
            let table = k_table(&times, *settlement, &ctx.params)?;
            let mut text = String::from("t,T,k_sq,method\n");
            for r in &table {
                let _ = writeln!(text, "{},{},{},{}", r.t, r.settlement, r.k_sq, r.method.as_str());
            }
            Ok(Output {
                text,
                config: serde_json::json!({ "params": ctx.params, "settlement": settlement, "times": times }),
                input_files: ctx.input_files,
            })
        }
        Command::Calibrate {
            quotes,
            initial,
            curves,
            budget,
        } => {
            let inputs = ModelInputs {
                params: initial.clone(),
                curves: curves.clone(),
            };
            let mut ctx = resolve(&inputs, cli.preset, Preset::Fig1)?;
            ctx.input_files.push(quotes.clone());
            let quotes: Vec<VolQuote> = read_json(quotes, "quotes")?;
            let opts = FitOptions {
                budget: *budget,
                ..FitOptions::default()
            };
            let result = fit(&quotes, &ctx.params, &ctx.curves, &opts)?;
            eprintln!(
                "objective {:.6e} after {} evaluations ({:?})",
                result.objective, result.n_evals, result.stop_reason
            );
            Ok(Output {
                text: serde_json::to_string_pretty(&result.params)? + "\n",
                config: serde_json::json!({ "initial": ctx.params, "options": opts, "result": result }),
                input_files: ctx.input_files,
            })
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Price { .. } => "price",
        Command::TermStructure { .. } => "term-structure",
        Command::Smile { .. } => "smile",
        Command::McPrice { .. } => "mc-price",
        Command::DriftStudy { .. } => "drift-study",
        Command::KTable { .. } => "k-table",
        Command::Calibrate { .. } => "calibrate",
    }
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let output = run(cli)?;
    match &cli.out {
        None => print!("{}", output.text),
        Some(path) => {
            fs::write(path, &output.text).map_err(|e| InputError(format!("cannot write {}: {e}", path.display())))?;
            let manifest = RunManifest {
                command: command_name(&cli.command).to_string(),
                args: std::env::args().collect(),
                inputs: output.input_files.iter().map(|p| digest(p)).collect::<Result<_>>()?,
                config: output.config,
                seed: cli.seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                outputs: vec![digest(path)?],
            };
            let written = manifest.write(path)?;
            eprintln!("wrote {} and {}", path.display(), written.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
