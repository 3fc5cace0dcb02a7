//! Command-line front end: configuration parsing and subcommand dispatch.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use structens_core::experiment::{fmt_real, gen_data, gen_test_data, run_experiment_with_overrides, Scheme};
use structens_core::optimizer::{sequence_model_risk, sweep_rho, SweepTarget};
use structens_core::spectral::{decomposition_report, BasisKind, DecompositionSetup, Testbed};
use structens_core::weights::validate_admissible;
use structens_core::{make_weights, AdmissibilityConstraints, Interval, Orientation, SequenceModel, WeightLawSpec};

pub use config::{parse_config, parse_config_str, parse_grid, ConfigError, FileConfig};

#[derive(Debug, Parser)]
#[command(name = "structens", version, about = "Structured ensemble weighting experiments")]
pub struct Cli {
    /// Overrides the configured base seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for all outputs.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Print progress to stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the simulation protocol described by a config file.
    Run(RunArgs),
    /// Monte Carlo approximation / variance decomposition.
    Decompose(DecomposeArgs),
    /// Risk of geometric weights over a grid of rates.
    SweepRho(SweepArgs),
    /// Build a weight law and check it against admissibility constraints.
    ValidateWeights(ValidateArgs),
    /// Print one replicate's simulated dataset.
    GenData(GenDataArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `key=value` overrides; dotted keys address sections.
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Use the synthetic sequence model (`seq`).
    #[arg(long, value_parser = ["seq"])]
    pub model: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long = "M", default_value_t = 32)]
    pub m: usize,
    /// Modes of the target; defaults to 2M.
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
}

impl ModelArgs {
    fn model(&self) -> anyhow::Result<SequenceModel> {
        Ok(SequenceModel::new(self.alpha, self.c, self.m, self.k.unwrap_or(2 * self.m), self.tau)?)
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, conflicts_with = "model")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// `a:b:n` grid of rates.
    #[arg(long)]
    pub grid: Option<String>,
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long, conflicts_with = "model")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Noise standard deviation of the sequence-model testbed.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Fixed weighting law (text form).
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long = "R")]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub basis: Option<String>,
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub law: String,
    #[arg(long = "M")]
    pub m: usize,
    #[arg(long, default_value = "none")]
    pub orientation: String,
    #[arg(long = "l2-bound")]
    pub l2_bound: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub replicate: usize,
    #[arg(long, value_parser = ["train", "test"], default_value = "train")]
    pub split: String,
    pub overrides: Vec<String>,
}

/// Process exit status for an error: 1 for configuration problems, 2 for
/// numeric or runtime failures.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<ConfigError>().is_some() || err.downcast_ref::<clap::Error>().is_some() {
        return 1;
    }
    match err.downcast_ref::<structens_core::Error>() {
        Some(
            structens_core::Error::InvalidParameter(_)
            | structens_core::Error::Range(_)
            | structens_core::Error::UnknownKey { .. }
            | structens_core::Error::Parse { .. }
            | structens_core::Error::Infeasible(_),
        ) => 1,
        _ => 2,
    }
}

/// Parses `args` and runs the command, writing normal output to `out`.
pub fn run<W: std::io::Write>(cli: Cli, out: &mut W) -> anyhow::Result<()> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build()?;
    let mut buf = Vec::new();
    let outcome = pool.install(|| dispatch(&cli, &mut buf));
    out.write_all(&buf)?;
    outcome
}

fn load(cli: &Cli, path: &Path, overrides: &[String]) -> anyhow::Result<FileConfig> {
    let mut all = overrides.to_vec();
    if let Some(seed) = cli.seed {
        all.push(format!("base_seed={seed}"));
    }
    if let Some(dir) = &cli.output_dir {
        all.push(format!("output_dir={}", toml_string(&dir.to_string_lossy())));
    }
    Ok(parse_config(path, &all)?)
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn log(cli: &Cli, level: u8, msg: impl AsRef<str>) {
    if cli.verbose >= level {
        eprintln!("{}", msg.as_ref());
    }
}

fn write_extra(cli: &Cli, name: &str, body: &str, provenance: &serde_json::Value) -> anyhow::Result<()> {
    let Some(dir) = &cli.output_dir else {
        return Ok(());
    };
    fs::create_dir_all(dir)?;
    let stem = name.trim_end_matches(".csv");
    let mut prov = serde_json::to_string_pretty(provenance)?;
    prov.push('\n');
    fs::write(dir.join(format!("{stem}_provenance.json")), prov)?;
    fs::write(dir.join(name), body)?;
    log(cli, 1, format!("wrote {}", dir.join(name).display()));
    Ok(())
}

fn provenance(command: &str, args: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "artifact": "structens",
        "version": structens_core::VERSION,
        "command": command,
        "arguments": args,
    })
}

fn dispatch<W: std::io::Write>(cli: &Cli, out: &mut W) -> anyhow::Result<()> {
    match &cli.command {
        Command::Run(args) => {
            let fc = load(cli, &args.config, &args.overrides)?;
            log(cli, 1, format!("running {} with R = {}", fc.experiment.config_id, fc.experiment.replicates));
            let result = run_experiment_with_overrides(&fc.experiment, &fc.overrides)?;
            for f in &result.files {
                log(cli, 1, format!("wrote {}", f.display()));
            }
            let aggregate = fc.experiment.output_dir.join(format!("{}_aggregate.csv", fc.experiment.config_id));
            out.write_all(fs::read_to_string(aggregate)?.as_bytes())?;
        }
        Command::SweepRho(args) => {
            let (target, grid, label) = match &args.config {
                Some(path) => {
                    let fc = load(cli, path, &args.overrides)?;
                    let grid = match &args.grid {
                        Some(g) => parse_grid(g).map_err(|e| ConfigError::Range { key: "grid".into(), message: e })?,
                        None => fc.sweep.grid.clone(),
                    };
                    let id = fc.experiment.config_id.clone();
                    (SweepTarget::Protocol(Box::new(fc.experiment)), grid, id)
                }
                None => {
                    let g = args.grid.as_deref().unwrap_or("1.05:4.0:60");
                    let grid = parse_grid(g).map_err(|e| ConfigError::Range { key: "grid".into(), message: e })?;
                    (SweepTarget::Model(args.model.model()?), grid, "seq".to_string())
                }
            };
            let table = sweep_rho(&target, &grid)?;
            let mut body = table.to_csv();
            let _ = writeln!(body, "# argmin rho={} risk_total={}", fmt_real(table.argmin_rho()), fmt_real(table.min_risk()));
            if let SweepTarget::Model(model) = &target {
                let uniform = sequence_model_risk(model, make_weights(WeightLawSpec::Uniform, model.m)?.values())?;
                let _ = writeln!(
                    body,
                    "# uniform risk_total={} margin={}",
                    fmt_real(uniform.total),
                    fmt_real(uniform.total - table.min_risk())
                );
            }
            out.write_all(body.as_bytes())?;
            let args_json = serde_json::json!({ "target": label, "grid": grid });
            write_extra(cli, &format!("{label}_sweep_rho.csv"), &body, &provenance("sweep-rho", args_json))?;
        }
        Command::Decompose(args) => {
            let basis: Option<BasisKind> = args.basis.as_deref().map(str::parse).transpose()?;
            let (setup, weights, replicates, label) = match &args.config {
                Some(path) => {
                    let fc = load(cli, path, &args.overrides)?;
                    let scheme: Scheme = match &args.weights {
                        Some(w) => w.parse()?,
                        None => fc.decompose.scheme,
                    };
                    let Scheme::Law(spec) = scheme else {
                        return Err(ConfigError::Range {
                            key: "weights".into(),
                            message: "decompose needs a fixed weighting law".into(),
                        }
                        .into());
                    };
                    let m = fc.experiment.dictionary.m;
                    let r = args.replicates.or(fc.decompose.replicates).unwrap_or(fc.experiment.replicates);
                    let id = fc.experiment.config_id.clone();
                    let setup = DecompositionSetup::Protocol {
                        config: Box::new(fc.experiment),
                        basis: basis.unwrap_or(fc.decompose.basis),
                        modes: fc.decompose.modes,
                    };
                    (setup, make_weights(spec, m)?, r, id)
                }
                None => {
                    let model = args.model.model()?;
                    let spec: WeightLawSpec = args.weights.as_deref().unwrap_or("uniform").parse()?;
                    let tb = Testbed {
                        model,
                        noise_sd: args.sigma,
                        basis: basis.unwrap_or(BasisKind::Legendre),
                        domain: Interval::unit(),
                        seed: cli.seed.unwrap_or(structens_core::experiment::DEFAULT_SEED),
                    };
                    (DecompositionSetup::Testbed(tb), make_weights(spec, model.m)?, args.replicates.unwrap_or(200), "seq".into())
                }
            };
            let report = decomposition_report(&setup, weights.values(), replicates)?;
            let body = report.to_csv();
            out.write_all(body.as_bytes())?;
            let args_json = serde_json::json!({ "target": label, "weights": weights.values(), "R": replicates });
            write_extra(cli, &format!("{label}_decomposition.csv"), &body, &provenance("decompose", args_json))?;
        }
        Command::ValidateWeights(args) => {
            let spec: WeightLawSpec = args.law.parse()?;
            let orientation: Orientation = args.orientation.parse()?;
            let mut constraints = AdmissibilityConstraints::monotone(orientation);
            if let Some(c) = args.l2_bound {
                constraints = constraints.with_l2_bound(c)?;
            }
            let w = make_weights(spec, args.m)?;
            let report = validate_admissible(w.values(), &constraints);
            let mut body = String::from("check,passed,slack\n");
            for (name, check) in report.rows() {
                let _ = writeln!(body, "{name},{},{}", check.passed, fmt_real(check.slack));
            }
            let _ = writeln!(body, "# l2_norm_sq={}", fmt_real(report.l2_norm_sq));
            let _ = writeln!(body, "# result={}", if report.passed() { "pass" } else { "fail" });
            out.write_all(body.as_bytes())?;
        }
        Command::GenData(args) => {
            let fc = load(cli, &args.config, &args.overrides)?;
            let data = if args.split == "train" {
                gen_data(&fc.experiment, args.replicate)?
            } else {
                gen_test_data(&fc.experiment, args.replicate)?
            };
            let mut body = String::from("x,y\n");
            for (x, y) in data.x().iter().zip(data.y()) {
                let _ = writeln!(body, "{},{}", fmt_real(*x), fmt_real(*y));
            }
            out.write_all(body.as_bytes())?;
            let name = format!("{}_{}_r{}.csv", fc.experiment.config_id, args.split, args.replicate);
            let args_json = serde_json::json!({ "config": fc.experiment, "overrides": fc.overrides, "split": args.split, "replicate": args.replicate });
            write_extra(cli, &name, &body, &provenance("gen-data", args_json))?;
        }
    }
    Ok(())
}
