//! Engine behind the `mimopt` binary: batch drop studies over random user
//! placements, reduced to CSV files.
//!
//! Everything here is deterministic given the spec's seed: drop d uses
//! realization seed `seed + d`, drops are dispatched to a worker pool, and
//! results are reduced in drop-index order regardless of scheduling.
//!
//! CSV conventions: UTF-8, comma-delimited, dot decimal. The first line is a
//! versioned comment `# mimopt v<version> experiment=<name>`, the second the
//! column header. Missing values (e.g. total power of an infeasible drop)
//! are empty cells; flags are 0/1.

pub mod experiments;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context};
use nalgebra::DMatrix;
use mimopt::model::NetworkRealization;
use mimopt::powermin::solve_powermin_restricted;
use mimopt::sebounds::{PowerAllocation, SinrTargets};
use mimopt::{NetworkConfig, Scheme};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Named batch studies runnable via `mimopt sweep <name>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Mean total power vs antenna count at a fixed QoS target.
    PowerVsAntennas,
    /// Mean total power vs QoS target at a fixed antenna count.
    PowerVsQos,
    /// Fraction of drops whose power minimization is infeasible, per QoS.
    BadServiceProb,
    /// Per-drop max-min QoS levels (CDF raw data).
    MaxminCdf,
    /// Mean max-min QoS vs antenna count.
    MaxminVsAntennas,
    /// Probability that a user is served by more than one BS, per QoS.
    JointTxProb,
    /// Grid map of the probability that the first BS serves a probe user.
    AssociationMap,
    /// Closed-form vs Monte Carlo SE statistics with standard errors.
    ValidateSe,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::PowerVsAntennas,
        Experiment::PowerVsQos,
        Experiment::BadServiceProb,
        Experiment::MaxminCdf,
        Experiment::MaxminVsAntennas,
        Experiment::JointTxProb,
        Experiment::AssociationMap,
        Experiment::ValidateSe,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::PowerVsAntennas => "power_vs_antennas",
            Experiment::PowerVsQos => "power_vs_qos",
            Experiment::BadServiceProb => "bad_service_prob",
            Experiment::MaxminCdf => "maxmin_cdf",
            Experiment::MaxminVsAntennas => "maxmin_vs_antennas",
            Experiment::JointTxProb => "joint_tx_prob",
            Experiment::AssociationMap => "association_map",
            Experiment::ValidateSe => "validate_se",
        }
    }

    /// Accepts snake_case or kebab-case names.
    pub fn parse(s: &str) -> anyhow::Result<Experiment> {
        let canon = s.trim().to_ascii_lowercase().replace('-', "_");
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == canon)
            .with_context(|| {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
                format!("unknown experiment '{s}'; expected one of {}", names.join(", "))
            })
    }
}

/// Full description of one batch run.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub config: NetworkConfig,
    /// Antenna counts for the *_vs_antennas sweeps.
    pub antenna_sweep: Vec<usize>,
    /// QoS targets (bit/symbol) for the QoS sweeps.
    pub qos_sweep: Vec<f64>,
    /// Fixed QoS target for single-point experiments.
    pub qos: f64,
    pub num_drops: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Schemes to run; experiments emit one row group per scheme.
    pub schemes: Vec<Scheme>,
    /// Bisection bracket width for max-min runs, bit/symbol.
    pub delta: f64,
    /// Monte Carlo sample count for validate_se.
    pub mc_samples: usize,
    /// Grid resolution per axis for association_map.
    pub grid: usize,
}

impl ExperimentSpec {
    pub fn new(experiment: Experiment, config: NetworkConfig) -> Self {
        ExperimentSpec {
            experiment,
            config,
            antenna_sweep: vec![50, 100, 150, 200, 250, 300],
            qos_sweep: vec![0.5, 1.0, 1.5, 2.0, 2.5],
            qos: 1.0,
            num_drops: 200,
            seed: 1,
            out_dir: PathBuf::from("out"),
            schemes: vec![Scheme::Mrt, Scheme::Zf],
            delta: 0.01,
            mc_samples: 100_000,
            grid: 50,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.num_drops == 0 {
            bail!("num_drops must be >= 1");
        }
        if self.antenna_sweep.is_empty() || self.qos_sweep.is_empty() {
            bail!("sweep lists must be nonempty");
        }
        if self.schemes.is_empty() {
            bail!("need at least one scheme");
        }
        if self.antenna_sweep.contains(&0) {
            bail!("antenna counts must be >= 1");
        }
        if self.qos_sweep.iter().chain([&self.qos]).any(|&q| !q.is_finite() || q < 0.0) {
            bail!("QoS targets must be finite and >= 0");
        }
        if !self.delta.is_finite() || self.delta <= 0.0 {
            bail!("delta must be > 0");
        }
        if self.mc_samples == 0 {
            bail!("mc_samples must be >= 1");
        }
        if self.grid == 0 {
            bail!("grid must be >= 1");
        }
        Ok(())
    }
}

/// Realization seed of drop `d`.
pub fn drop_seed(base: u64, drop: usize) -> u64 {
    base.wrapping_add(drop as u64)
}

/// Lowercase scheme tag used in CSV cells and flags.
pub fn scheme_tag(scheme: Scheme) -> &'static str {
    match scheme {
        Scheme::Mrt => "mrt",
        Scheme::Zf => "zf",
    }
}

/// Same realization with the antenna count replaced. Large-scale fading and
/// estimation quality do not depend on M, so only the config field moves.
pub fn with_antennas(realization: &NetworkRealization, antennas: usize) -> NetworkRealization {
    let mut patched = realization.clone();
    patched.config.antennas_per_bs = antennas;
    patched
}

/// Strongest-BS index per user: argmax_i beta[i][k].
pub fn max_snr_allowed(beta: &DMatrix<f64>) -> Vec<usize> {
    (0..beta.ncols())
        .map(|k| {
            (0..beta.nrows())
                .max_by(|&a, &b| beta[(a, k)].total_cmp(&beta[(b, k)]))
                .expect("at least one BS")
        })
        .collect()
}

/// Power minimization restricted to single-BS service at the strongest BS
/// (on average) per user. Returns None when that restriction is infeasible.
pub fn max_snr_baseline(
    realization: &NetworkRealization,
    targets: &SinrTargets,
    scheme: Scheme,
) -> anyhow::Result<Option<PowerAllocation>> {
    let instance = mimopt::powermin::PowerMinInstance::new(realization, targets, scheme)?;
    let allowed = max_snr_allowed(&realization.beta);
    Ok(solve_powermin_restricted(&instance, &allowed)?)
}

/// Uniform targets xi_k = qos for every user, converted with the config's
/// frame parameters.
pub fn uniform_targets(config: &NetworkConfig, qos: f64) -> anyhow::Result<SinrTargets> {
    Ok(SinrTargets::from_rates(
        &vec![qos; config.num_users],
        config.dl_fraction,
        config.pilot_length,
        config.coherence_length,
    )?)
}

/// Runs `f(0..n)` on a worker pool and returns the results in index order.
pub fn ordered_parallel<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if n == 0 {
        return Vec::new();
    }
    let workers = std::thread::available_parallelism()
        .map(|p| p.get())
        .unwrap_or(1)
        .min(n);
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let value = f(i);
                *slots[i].lock().expect("slot lock") = Some(value);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("worker filled slot"))
        .collect()
}

/// One CSV output file with the versioned header comment.
pub struct CsvFile {
    out: BufWriter<File>,
    pub path: PathBuf,
}

impl CsvFile {
    pub fn create<S: AsRef<str>>(
        dir: &Path,
        file_name: &str,
        experiment: &str,
        columns: &[S],
    ) -> anyhow::Result<CsvFile> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        let path = dir.join(file_name);
        let mut out = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        writeln!(out, "# mimopt v{TOOLKIT_VERSION} experiment={experiment}")?;
        let header: Vec<&str> = columns.iter().map(|c| c.as_ref()).collect();
        writeln!(out, "{}", header.join(","))?;
        Ok(CsvFile { out, path })
    }

    pub fn row(&mut self, fields: &[String]) -> anyhow::Result<()> {
        writeln!(self.out, "{}", fields.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> anyhow::Result<PathBuf> {
        self.out.flush()?;
        Ok(self.path)
    }
}

/// Formats a value for a CSV cell; non-finite values become empty cells.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

pub fn flag(b: bool) -> String {
    if b { "1".into() } else { "0".into() }
}

/// Sample mean and standard error of the mean (NaN when undefined).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
