use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mimopt::{NetworkConfig, Scheme};
use mimopt_cli::experiments::{
    run_coherent, run_experiment, run_maxmin, run_powermin, run_validate_se,
};
use mimopt_cli::{Experiment, ExperimentSpec};

#[derive(Parser)]
#[command(name = "mimopt", version, about = "Multicell massive MIMO power allocation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize total transmit power under per-user QoS targets.
    Powermin(PowerArgs),
    /// Maximize the worst-user rate by bisection over feasibility problems.
    Maxmin(MaxminArgs),
    /// Power minimization with coherent joint transmission from all BSs.
    Coherent(PowerArgs),
    /// Compare closed-form gain statistics and rates against Monte Carlo.
    ValidateSe(ValidateArgs),
    /// Run a named multi-point study and write its summary CSV.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Mrt,
    Zf,
}

#[derive(Args)]
struct CommonArgs {
    /// Network configuration TOML; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base RNG seed; drop d uses seed + d.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for CSV files (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Precoding scheme; both are run when omitted.
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
}

#[derive(Args)]
struct PowerArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Independent network drops.
    #[arg(long, default_value_t = 200)]
    drops: usize,
    /// Per-user rate target, bit per symbol.
    #[arg(long, default_value_t = 1.0)]
    qos: f64,
}

#[derive(Args)]
struct MaxminArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Independent network drops.
    #[arg(long, default_value_t = 200)]
    drops: usize,
    /// Bisection tolerance on the rate, bit per symbol.
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Monte Carlo channel samples.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// Study to run: power_vs_antennas, power_vs_qos, bad_service_prob,
    /// maxmin_cdf, maxmin_vs_antennas, joint_tx_prob, association_map,
    /// or validate_se.
    #[arg(value_parser = parse_experiment)]
    experiment: Experiment,
    #[command(flatten)]
    common: CommonArgs,
    /// Independent network drops per sweep point.
    #[arg(long, default_value_t = 200)]
    drops: usize,
    /// Per-user rate target for single-target studies, bit per symbol.
    #[arg(long, default_value_t = 1.0)]
    qos: f64,
    /// Rate targets for QoS sweeps, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5,2,2.5")]
    qos_list: Vec<f64>,
    /// Antenna counts for antenna sweeps, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "50,100,150,200,250,300")]
    antennas: Vec<usize>,
    /// Bisection tolerance for max-min studies, bit per symbol.
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// Monte Carlo samples for validate_se.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Cells per side of the association map.
    #[arg(long, default_value_t = 50)]
    grid: usize,
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    Experiment::parse(s).map_err(|e| e.to_string())
}

fn schemes_from(arg: Option<SchemeArg>) -> Vec<Scheme> {
    match arg {
        Some(SchemeArg::Mrt) => vec![Scheme::Mrt],
        Some(SchemeArg::Zf) => vec![Scheme::Zf],
        None => vec![Scheme::Mrt, Scheme::Zf],
    }
}

fn base_spec(experiment: Experiment, common: &CommonArgs) -> anyhow::Result<ExperimentSpec> {
    let config = match &common.config {
        Some(path) => NetworkConfig::from_file(path)?,
        None => NetworkConfig::default(),
    };
    let mut spec = ExperimentSpec::new(experiment, config);
    spec.seed = common.seed;
    spec.out_dir = common.out.clone();
    spec.schemes = schemes_from(common.scheme);
    Ok(spec)
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let written = match cli.command {
        Command::Powermin(args) => {
            let mut spec = base_spec(Experiment::PowerVsQos, &args.common)?;
            spec.num_drops = args.drops;
            spec.qos = args.qos;
            spec.validate()?;
            vec![run_powermin(&spec)?]
        }
        Command::Maxmin(args) => {
            let mut spec = base_spec(Experiment::MaxminCdf, &args.common)?;
            spec.num_drops = args.drops;
            spec.delta = args.delta;
            spec.validate()?;
            vec![run_maxmin(&spec)?]
        }
        Command::Coherent(args) => {
            let mut spec = base_spec(Experiment::PowerVsQos, &args.common)?;
            spec.num_drops = args.drops;
            spec.qos = args.qos;
            spec.validate()?;
            vec![run_coherent(&spec)?]
        }
        Command::ValidateSe(args) => {
            let mut spec = base_spec(Experiment::ValidateSe, &args.common)?;
            spec.mc_samples = args.samples;
            spec.validate()?;
            vec![run_validate_se(&spec)?]
        }
        Command::Sweep(args) => {
            let mut spec = base_spec(args.experiment, &args.common)?;
            spec.num_drops = args.drops;
            spec.qos = args.qos;
            spec.qos_sweep = args.qos_list;
            spec.antenna_sweep = args.antennas;
            spec.delta = args.delta;
            spec.mc_samples = args.samples;
            spec.grid = args.grid;
            run_experiment(&spec)?
        }
    };
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
