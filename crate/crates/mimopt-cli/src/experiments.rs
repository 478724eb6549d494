//! The batch studies: per-drop solver runs, aggregation, CSV emission.
//!
//! Every study follows the same shape: a `*_drops` (or `*_study`) function
//! produces plain result records on the worker pool, deterministically keyed
//! by drop index, and a `run_*` wrapper reduces them into one CSV file.
//! Per-drop solver failures never abort a batch: they are logged to stderr
//! and carried as error strings in the records.

use std::path::PathBuf;

use anyhow::{bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use mimopt::coherent::solve_coherent_powermin;
use mimopt::maxmin::maxmin_bisection;
use mimopt::mc::{empirical_gain_statistics_for, sample_pilot_pipeline, GainStatisticsEstimate};
use mimopt::model::{estimation_quality, path_loss_db, NetworkRealization};
use mimopt::powermin::{
    solve_powermin, PowerMinInstance, ASSOCIATION_THRESHOLD_W,
};
use mimopt::sebounds::{closed_form_sinr, GainStatistics, PowerAllocation};
use mimopt::{NetworkConfig, Scheme};

use crate::{
    drop_seed, flag, max_snr_allowed, mean_se, num, ordered_parallel, scheme_tag, uniform_targets,
    with_antennas, CsvFile, Experiment, ExperimentSpec,
};

/// Power totals and association shape of one allocation.
#[derive(Debug, Clone)]
pub struct AllocationStats {
    pub total: f64,
    pub per_bs: Vec<f64>,
    pub single_users: usize,
    pub multi_users: usize,
}

impl AllocationStats {
    fn from_allocation(alloc: &PowerAllocation) -> AllocationStats {
        let sets = alloc.serving_sets(ASSOCIATION_THRESHOLD_W);
        AllocationStats {
            total: alloc.total(),
            per_bs: alloc.per_bs_power(),
            single_users: sets.iter().filter(|s| s.len() == 1).count(),
            multi_users: sets.iter().filter(|s| s.len() > 1).count(),
        }
    }
}

/// One drop of the power-minimization study: the jointly optimal association
/// and the max-SNR single-BS baseline.
#[derive(Debug, Clone)]
pub struct DropPower {
    pub seed: u64,
    /// None: the LP is infeasible at these targets.
    pub opt: Option<AllocationStats>,
    pub baseline: Option<AllocationStats>,
    /// Solver failure (not infeasibility); opt/baseline are None then.
    pub error: Option<String>,
}

/// Solves `num_drops` random drops at a uniform QoS target.
pub fn power_drops(
    config: &NetworkConfig,
    base_seed: u64,
    num_drops: usize,
    scheme: Scheme,
    qos: f64,
    antennas: Option<usize>,
) -> Vec<DropPower> {
    ordered_parallel(num_drops, |d| {
        let seed = drop_seed(base_seed, d);
        let work = || -> anyhow::Result<(Option<AllocationStats>, Option<AllocationStats>)> {
            let mut realization = NetworkRealization::generate(config, seed)?;
            if let Some(m) = antennas {
                realization = with_antennas(&realization, m);
            }
            let targets = uniform_targets(&realization.config, qos)?;
            let instance = PowerMinInstance::new(&realization, &targets, scheme)?;
            let opt = solve_powermin(&instance)?
                .feasible()
                .map(|s| AllocationStats::from_allocation(&s.allocation));
            let allowed = max_snr_allowed(&realization.beta);
            let baseline = mimopt::powermin::solve_powermin_restricted(&instance, &allowed)?
                .map(|alloc| AllocationStats::from_allocation(&alloc));
            Ok((opt, baseline))
        };
        match work() {
            Ok((opt, baseline)) => DropPower { seed, opt, baseline, error: None },
            Err(e) => DropPower { seed, opt: None, baseline: None, error: Some(e.to_string()) },
        }
    })
}

/// One max-min drop; xi fields are NaN on solver failure.
#[derive(Debug, Clone)]
pub struct DropMaxmin {
    pub seed: u64,
    pub xi_lower: f64,
    pub xi_upper: f64,
    pub iterations: usize,
    pub total: f64,
    pub error: Option<String>,
}

pub fn maxmin_drops(
    config: &NetworkConfig,
    base_seed: u64,
    num_drops: usize,
    scheme: Scheme,
    delta: f64,
    antennas: Option<usize>,
) -> Vec<DropMaxmin> {
    ordered_parallel(num_drops, |d| {
        let seed = drop_seed(base_seed, d);
        let work = || -> anyhow::Result<DropMaxmin> {
            let mut realization = NetworkRealization::generate(config, seed)?;
            if let Some(m) = antennas {
                realization = with_antennas(&realization, m);
            }
            let weights = vec![1.0; realization.num_users()];
            let result = maxmin_bisection(&realization, scheme, &weights, delta)?;
            Ok(DropMaxmin {
                seed,
                xi_lower: result.xi_lower,
                xi_upper: result.xi_upper,
                iterations: result.iterations,
                total: result.allocation.total(),
                error: None,
            })
        };
        work().unwrap_or_else(|e| DropMaxmin {
            seed,
            xi_lower: f64::NAN,
            xi_upper: f64::NAN,
            iterations: 0,
            total: f64::NAN,
            error: Some(e.to_string()),
        })
    })
}

/// One coherent joint-transmission drop.
#[derive(Debug, Clone)]
pub struct DropCoherent {
    pub seed: u64,
    pub stats: Option<AllocationStats>,
    pub stationarity: f64,
    pub comp_slackness: f64,
    pub error: Option<String>,
}

pub fn coherent_drops(
    config: &NetworkConfig,
    base_seed: u64,
    num_drops: usize,
    scheme: Scheme,
    qos: f64,
) -> Vec<DropCoherent> {
    ordered_parallel(num_drops, |d| {
        let seed = drop_seed(base_seed, d);
        let work = || -> anyhow::Result<DropCoherent> {
            let realization = NetworkRealization::generate(config, seed)?;
            let targets = uniform_targets(&realization.config, qos)?;
            let outcome = solve_coherent_powermin(&realization, &targets, scheme)?;
            Ok(match outcome.feasible() {
                Some(s) => DropCoherent {
                    seed,
                    stats: Some(AllocationStats::from_allocation(&s.allocation)),
                    stationarity: s.certificate.stationarity,
                    comp_slackness: s.certificate.comp_slackness,
                    error: None,
                },
                None => DropCoherent {
                    seed,
                    stats: None,
                    stationarity: f64::NAN,
                    comp_slackness: f64::NAN,
                    error: None,
                },
            })
        };
        work().unwrap_or_else(|e| DropCoherent {
            seed,
            stats: None,
            stationarity: f64::NAN,
            comp_slackness: f64::NAN,
            error: Some(e.to_string()),
        })
    })
}

/// Closed-form statistics next to their Monte Carlo estimates for one
/// realization, evaluated at the uniform allocation P_max / K per link.
pub struct SeValidation {
    pub scheme: Scheme,
    pub closed: GainStatistics,
    pub estimate: GainStatisticsEstimate,
    pub closed_sinr: Vec<f64>,
    pub empirical_sinr: Vec<f64>,
    pub sinr_se: Vec<f64>,
}

pub fn validate_se_study(
    config: &NetworkConfig,
    seed: u64,
    samples: usize,
    schemes: &[Scheme],
) -> anyhow::Result<Vec<SeValidation>> {
    let realization = NetworkRealization::generate(config, seed)?;
    let (l, k) = (realization.num_bs(), realization.num_users());
    let rho = PowerAllocation::from_matrix(nalgebra::DMatrix::from_fn(l, k, |i, _| {
        config.max_power[i] / k as f64
    }))?;
    let batch = sample_pilot_pipeline(&realization, samples, seed)?;
    let estimates = empirical_gain_statistics_for(&batch, schemes)?;
    schemes
        .iter()
        .zip(estimates)
        .map(|(&scheme, estimate)| {
            let closed = GainStatistics::closed_form(&realization, scheme)?;
            let closed_sinr = closed_form_sinr(&realization, &rho, scheme, config.dl_noise)?;
            let (empirical_sinr, sinr_se) = estimate.sinr_with_se(&rho, config.dl_noise);
            Ok(SeValidation {
                scheme,
                closed,
                estimate,
                closed_sinr,
                empirical_sinr,
                sinr_se,
            })
        })
        .collect()
}

/// Serve counts for one probe cell of the association map.
#[derive(Debug, Clone, Copy)]
pub struct CellStat {
    /// Probe position, km.
    pub x: f64,
    pub y: f64,
    /// Feasible drops in which the first BS serves the probe user.
    pub served: usize,
    pub feasible: usize,
    pub failed: usize,
}

/// Empirical probability that the first BS serves a probe user placed at
/// each cell center of a `grid x grid` partition of the square, with the
/// other K-1 users and all shadowing redrawn per drop. The probe position is
/// deliberately exempt from the minimum-distance rule so the map covers the
/// entire area.
pub fn association_map_study(
    config: &NetworkConfig,
    base_seed: u64,
    num_drops: usize,
    grid: usize,
    scheme: Scheme,
    qos: f64,
) -> anyhow::Result<Vec<CellStat>> {
    if config.num_users < 1 {
        bail!("association map needs at least one user");
    }
    let backgrounds: Vec<NetworkRealization> = (0..num_drops)
        .map(|d| NetworkRealization::generate(config, drop_seed(base_seed, d)))
        .collect::<Result<_, _>>()?;
    let targets = uniform_targets(config, qos)?;
    let shadow = if config.shadow_std_db > 0.0 {
        Some(
            Normal::new(0.0, config.shadow_std_db)
                .context("shadow fading distribution")?,
        )
    } else {
        None
    };
    let step = config.square_side / grid as f64;

    let cells = ordered_parallel(grid * grid, |cell| {
        let (cx, cy) = (cell % grid, cell / grid);
        let x = (cx as f64 + 0.5) * step;
        let y = (cy as f64 + 0.5) * step;
        let mut stat = CellStat { x, y, served: 0, feasible: 0, failed: 0 };
        for (d, background) in backgrounds.iter().enumerate() {
            let mut rng = ChaCha12Rng::seed_from_u64(base_seed ^ 0x8f1d_3a2b_9c40_57e6);
            rng.set_stream(((d as u64) << 32) | cell as u64);
            let mut work = || -> anyhow::Result<Option<bool>> {
                let mut r = background.clone();
                r.user_positions[0] = (x, y);
                for l in 0..r.num_bs() {
                    let (bx, by) = r.bs_positions[l];
                    let dist = ((bx - x).powi(2) + (by - y).powi(2)).sqrt().max(1e-9);
                    let loss_db = path_loss_db(config, dist)?;
                    let z = shadow.as_ref().map_or(0.0, |s| s.sample(&mut rng));
                    r.beta[(l, 0)] = 10f64.powf((-loss_db + z) / 10.0);
                }
                r.theta = estimation_quality(
                    &r.beta,
                    &config.pilot_power,
                    &r.pilot_sets,
                    config.pilot_length,
                    config.ul_noise,
                );
                let instance = PowerMinInstance::new(&r, &targets, scheme)?;
                Ok(solve_powermin(&instance)?
                    .feasible()
                    .map(|s| s.allocation.rho[(0, 0)] > ASSOCIATION_THRESHOLD_W))
            };
            match work() {
                Ok(Some(served)) => {
                    stat.feasible += 1;
                    if served {
                        stat.served += 1;
                    }
                }
                Ok(None) => {}
                Err(_) => stat.failed += 1,
            }
        }
        stat
    });
    Ok(cells)
}

fn warn_errors<'a>(label: &str, errors: impl Iterator<Item = (usize, &'a String)>) {
    for (d, e) in errors {
        eprintln!("warning: {label} drop {d}: {e}");
    }
}

fn per_bs_columns(l: usize) -> Vec<String> {
    (0..l).map(|i| format!("power_bs{i}_w")).collect()
}

fn power_row_cells(stats: Option<&AllocationStats>, l: usize) -> Vec<String> {
    match stats {
        Some(s) => {
            let mut cells = vec![flag(true), num(s.total)];
            cells.extend(s.per_bs.iter().map(|&p| num(p)));
            cells.push(s.single_users.to_string());
            cells.push(s.multi_users.to_string());
            cells
        }
        None => {
            let mut cells = vec![flag(false), String::new()];
            cells.extend(std::iter::repeat_n(String::new(), l + 2));
            cells
        }
    }
}

/// Per-drop power minimization at one QoS target; one row per
/// (drop, scheme, association).
pub fn run_powermin(spec: &ExperimentSpec) -> anyhow::Result<PathBuf> {
    let l = spec.config.num_bs;
    let mut columns = vec![
        "drop".into(),
        "seed".into(),
        "scheme".into(),
        "association".into(),
        "antennas".into(),
        "users".into(),
        "qos_bit_per_symbol".into(),
        "feasible".into(),
        "total_power_w".into(),
    ];
    columns.extend(per_bs_columns(l));
    columns.push("users_single_bs".into());
    columns.push("users_multi_bs".into());
    let mut csv = CsvFile::create(&spec.out_dir, "powermin.csv", "powermin", &columns)?;

    for &scheme in &spec.schemes {
        let drops =
            power_drops(&spec.config, spec.seed, spec.num_drops, scheme, spec.qos, None);
        warn_errors(
            &format!("powermin {}", scheme_tag(scheme)),
            drops.iter().enumerate().filter_map(|(d, r)| r.error.as_ref().map(|e| (d, e))),
        );
        for (d, record) in drops.iter().enumerate() {
            for (assoc, stats) in
                [("optimal", record.opt.as_ref()), ("max-snr", record.baseline.as_ref())]
            {
                let mut cells = vec![
                    d.to_string(),
                    record.seed.to_string(),
                    scheme_tag(scheme).into(),
                    assoc.into(),
                    spec.config.antennas_per_bs.to_string(),
                    spec.config.num_users.to_string(),
                    num(spec.qos),
                ];
                cells.extend(power_row_cells(stats, l));
                csv.row(&cells)?;
            }
        }
    }
    csv.finish()
}

/// Per-drop max-min QoS; one row per (drop, scheme).
pub fn run_maxmin(spec: &ExperimentSpec) -> anyhow::Result<PathBuf> {
    let columns = [
        "drop",
        "seed",
        "scheme",
        "antennas",
        "users",
        "delta_bit_per_symbol",
        "xi_lower_bit_per_symbol",
        "xi_upper_bit_per_symbol",
        "iterations",
        "total_power_w",
    ];
    let mut csv = CsvFile::create(&spec.out_dir, "maxmin.csv", "maxmin", &columns)?;
    for &scheme in &spec.schemes {
        let drops =
            maxmin_drops(&spec.config, spec.seed, spec.num_drops, scheme, spec.delta, None);
        warn_errors(
            &format!("maxmin {}", scheme_tag(scheme)),
            drops.iter().enumerate().filter_map(|(d, r)| r.error.as_ref().map(|e| (d, e))),
        );
        for (d, r) in drops.iter().enumerate() {
            csv.row(&[
                d.to_string(),
                r.seed.to_string(),
                scheme_tag(scheme).into(),
                spec.config.antennas_per_bs.to_string(),
                spec.config.num_users.to_string(),
                num(spec.delta),
                num(r.xi_lower),
                num(r.xi_upper),
                r.iterations.to_string(),
                num(r.total),
            ])?;
        }
    }
    csv.finish()
}

/// Per-drop coherent joint-transmission power minimization; rows are tagged
/// `coherent-mrt` / `coherent-zf`.
pub fn run_coherent(spec: &ExperimentSpec) -> anyhow::Result<PathBuf> {
    let l = spec.config.num_bs;
    let mut columns = vec![
        "drop".into(),
        "seed".into(),
        "scheme".into(),
        "antennas".into(),
        "users".into(),
        "qos_bit_per_symbol".into(),
        "feasible".into(),
        "total_power_w".into(),
    ];
    columns.extend(per_bs_columns(l));
    columns.push("users_single_bs".into());
    columns.push("users_multi_bs".into());
    columns.push("kkt_stationarity".into());
    columns.push("kkt_comp_slackness".into());
    let mut csv = CsvFile::create(&spec.out_dir, "coherent.csv", "coherent", &columns)?;

    for &scheme in &spec.schemes {
        let drops = coherent_drops(&spec.config, spec.seed, spec.num_drops, scheme, spec.qos);
        warn_errors(
            &format!("coherent {}", scheme_tag(scheme)),
            drops.iter().enumerate().filter_map(|(d, r)| r.error.as_ref().map(|e| (d, e))),
        );
        for (d, r) in drops.iter().enumerate() {
            let mut cells = vec![
                d.to_string(),
                r.seed.to_string(),
                format!("coherent-{}", scheme_tag(scheme)),
                spec.config.antennas_per_bs.to_string(),
                spec.config.num_users.to_string(),
                num(spec.qos),
            ];
            cells.extend(power_row_cells(r.stats.as_ref(), l));
            cells.push(num(r.stationarity));
            cells.push(num(r.comp_slackness));
            csv.row(&cells)?;
        }
    }
    csv.finish()
}

/// Closed-form vs Monte Carlo table: `quantity` is `mean_gain` or
/// `second_moment` per (scheme, bs, user), or `sinr` per (scheme, user).
pub fn run_validate_se(spec: &ExperimentSpec) -> anyhow::Result<PathBuf> {
    let columns = ["scheme", "quantity", "bs", "user", "closed", "empirical", "std_err"];
    let mut csv = CsvFile::create(&spec.out_dir, "validate_se.csv", "validate_se", &columns)?;
    let studies =
        validate_se_study(&spec.config, spec.seed, spec.mc_samples, &spec.schemes)?;
    for study in &studies {
        let tag = scheme_tag(study.scheme);
        let (l, k) = (study.closed.num_bs(), study.closed.num_users());
        for i in 0..l {
            for t in 0..k {
                csv.row(&[
                    tag.into(),
                    "mean_gain".into(),
                    i.to_string(),
                    t.to_string(),
                    num(study.closed.mean_gain[(i, t)].re),
                    num(study.estimate.stats.mean_gain[(i, t)].re),
                    num(study.estimate.mean_gain_se[(i, t)]),
                ])?;
                csv.row(&[
                    tag.into(),
                    "second_moment".into(),
                    i.to_string(),
                    t.to_string(),
                    num(study.closed.second_moment[i][(t, t)]),
                    num(study.estimate.stats.second_moment[i][(t, t)]),
                    num(study.estimate.second_moment_se[i][(t, t)]),
                ])?;
            }
        }
        for t in 0..k {
            csv.row(&[
                tag.into(),
                "sinr".into(),
                String::new(),
                t.to_string(),
                num(study.closed_sinr[t]),
                num(study.empirical_sinr[t]),
                num(study.sinr_se[t]),
            ])?;
        }
    }
    csv.finish()
}

/// Aggregates of one (sweep point, scheme) power study.
pub struct PowerAggregate {
    pub mean_opt: f64,
    pub se_opt: f64,
    pub mean_base: f64,
    pub se_base: f64,
    /// Drops where both associations are feasible (the averaging set).
    pub cofeasible: usize,
    pub infeasible_opt: usize,
    pub infeasible_base: usize,
    pub failed: usize,
    /// Association shape over feasible optimal drops.
    pub single_users: usize,
    pub multi_users: usize,
    pub feasible_opt: usize,
}

/// Means are taken over drops where both associations are feasible, matching
/// the convention of comparing like with like; infeasible and failed drops
/// are counted separately.
pub fn aggregate_power(drops: &[DropPower]) -> PowerAggregate {
    let mut opt_totals = Vec::new();
    let mut base_totals = Vec::new();
    let (mut infeasible_opt, mut infeasible_base, mut failed) = (0, 0, 0);
    let (mut single_users, mut multi_users, mut feasible_opt) = (0, 0, 0);
    for d in drops {
        if d.error.is_some() {
            failed += 1;
            continue;
        }
        match (&d.opt, &d.baseline) {
            (Some(o), Some(b)) => {
                opt_totals.push(o.total);
                base_totals.push(b.total);
            }
            _ => {
                if d.opt.is_none() {
                    infeasible_opt += 1;
                }
                if d.baseline.is_none() {
                    infeasible_base += 1;
                }
            }
        }
        if let Some(o) = &d.opt {
            feasible_opt += 1;
            single_users += o.single_users;
            multi_users += o.multi_users;
        }
    }
    let (mean_opt, se_opt) = mean_se(&opt_totals);
    let (mean_base, se_base) = mean_se(&base_totals);
    PowerAggregate {
        mean_opt,
        se_opt,
        mean_base,
        se_base,
        cofeasible: opt_totals.len(),
        infeasible_opt,
        infeasible_base,
        failed,
        single_users,
        multi_users,
        feasible_opt,
    }
}

fn aggregate_columns() -> [&'static str; 7] {
    [
        "association",
        "mean_total_power_w",
        "se_total_power_w",
        "cofeasible_drops",
        "infeasible_optimal",
        "infeasible_baseline",
        "failed_drops",
    ]
}

fn aggregate_rows(agg: &PowerAggregate) -> [Vec<String>; 2] {
    let shared = |mean: f64, se: f64| {
        vec![
            num(mean),
            num(se),
            agg.cofeasible.to_string(),
            agg.infeasible_opt.to_string(),
            agg.infeasible_base.to_string(),
            agg.failed.to_string(),
        ]
    };
    let mut opt = vec!["optimal".to_string()];
    opt.extend(shared(agg.mean_opt, agg.se_opt));
    let mut base = vec!["max-snr".to_string()];
    base.extend(shared(agg.mean_base, agg.se_base));
    [opt, base]
}

fn check_zf_headroom(spec: &ExperimentSpec, antennas: &[usize]) -> anyhow::Result<()> {
    if spec.schemes.contains(&Scheme::Zf) {
        if let Some(&m) = antennas.iter().find(|&&m| m <= spec.config.num_users) {
            bail!(
                "zero-forcing needs antennas > users; sweep point M = {m} with K = {}",
                spec.config.num_users
            );
        }
    }
    Ok(())
}

fn run_power_vs_qos(spec: &ExperimentSpec) -> anyhow::Result<PathBuf> {
    let mut columns = vec!["qos_bit_per_symbol".to_string(), "scheme".into()];
    columns.extend(aggregate_columns().map(String::from));
    columns.push("num_drops".into());
    let mut csv =
        CsvFile::create(&spec.out_dir, "power_vs_qos.csv", "power_vs_qos", &columns)?;
    for &qos in &spec.qos_sweep {
        for &scheme in &spec.schemes {
            let drops =
                power_drops(&spec.config, spec.seed, spec.num_drops, scheme, qos, None);
            warn_errors(
                &format!("power_vs_qos {} qos={qos}", scheme_tag(scheme)),
                drops.iter().enumerate().filter_map(|(d, r)| r.error.as_ref().map(|e| (d, e))),
            );
            let agg = aggregate_power(&drops);
            for row in aggregate_rows(&agg) {
                let mut cells = vec![num(qos), scheme_tag(scheme).into()];
                cells.extend(row);
                cells.push(spec.num_drops.to_string());
                csv.row(&cells)?;
            }
        }
    }
    csv.finish()
}

fn run_power_vs_antennas(spec: &ExperimentSpec) -> anyhow::Result<PathBuf> {
    check_zf_headroom(spec, &spec.antenna_sweep)?;
    let mut columns = vec!["antennas".to_string(), "scheme".into()];
    columns.extend(aggregate_columns().map(String::from));
    columns.push("num_drops".into());
    let mut csv = CsvFile::create(
        &spec.out_dir,
        "power_vs_antennas.csv",
        "power_vs_antennas",
        &columns,
    )?;
    for &m in &spec.antenna_sweep {
        for &scheme in &spec.schemes {
            let drops =
                power_drops(&spec.config, spec.seed, spec.num_drops, scheme, spec.qos, Some(m));
            warn_errors(
                &format!("power_vs_antennas {} M={m}", scheme_tag(scheme)),
                drops.iter().enumerate().filter_map(|(d, r)| r.error.as_ref().map(|e| (d, e))),
            );
            let agg = aggregate_power(&drops);
            for row in aggregate_rows(&agg) {
                let mut cells = vec![m.to_string(), scheme_tag(scheme).into()];
                cells.extend(row);
                cells.push(spec.num_drops.to_string());
                csv.row(&cells)?;
            }
        }
    }
    csv.finish()
}

fn run_bad_service_prob(spec: &ExperimentSpec) -> anyhow::Result<PathBuf> {
    let columns = [
        "qos_bit_per_symbol",
        "scheme",
        "association",
        "infeasible_fraction",
        "infeasible_drops",
        "failed_drops",
        "num_drops",
    ];
    let mut csv =
        CsvFile::create(&spec.out_dir, "bad_service_prob.csv", "bad_service_prob", &columns)?;
    for &qos in &spec.qos_sweep {
        for &scheme in &spec.schemes {
            let drops =
                power_drops(&spec.config, spec.seed, spec.num_drops, scheme, qos, None);
            warn_errors(
                &format!("bad_service_prob {} qos={qos}", scheme_tag(scheme)),
                drops.iter().enumerate().filter_map(|(d, r)| r.error.as_ref().map(|e| (d, e))),
            );
            let solved = drops.iter().filter(|d| d.error.is_none()).count();
            let failed = drops.len() - solved;
            for (assoc, infeasible) in [
                ("optimal", drops.iter().filter(|d| d.error.is_none() && d.opt.is_none()).count()),
                (
                    "max-snr",
                    drops
                        .iter()
                        .filter(|d| d.error.is_none() && d.baseline.is_none())
                        .count(),
                ),
            ] {
                csv.row(&[
                    num(qos),
                    scheme_tag(scheme).into(),
                    assoc.into(),
                    num(if solved > 0 { infeasible as f64 / solved as f64 } else { f64::NAN }),
                    infeasible.to_string(),
                    failed.to_string(),
                    spec.num_drops.to_string(),
                ])?;
            }
        }
    }
    csv.finish()
}

fn run_maxmin_cdf(spec: &ExperimentSpec) -> anyhow::Result<PathBuf> {
    let columns = [
        "drop",
        "seed",
        "scheme",
        "xi_lower_bit_per_symbol",
        "xi_upper_bit_per_symbol",
        "iterations",
        "total_power_w",
    ];
    let mut csv = CsvFile::create(&spec.out_dir, "maxmin_cdf.csv", "maxmin_cdf", &columns)?;
    for &scheme in &spec.schemes {
        let drops =
            maxmin_drops(&spec.config, spec.seed, spec.num_drops, scheme, spec.delta, None);
        warn_errors(
            &format!("maxmin_cdf {}", scheme_tag(scheme)),
            drops.iter().enumerate().filter_map(|(d, r)| r.error.as_ref().map(|e| (d, e))),
        );
        for (d, r) in drops.iter().enumerate() {
            csv.row(&[
                d.to_string(),
                r.seed.to_string(),
                scheme_tag(scheme).into(),
                num(r.xi_lower),
                num(r.xi_upper),
                r.iterations.to_string(),
                num(r.total),
            ])?;
        }
    }
    csv.finish()
}

fn run_maxmin_vs_antennas(spec: &ExperimentSpec) -> anyhow::Result<PathBuf> {
    check_zf_headroom(spec, &spec.antenna_sweep)?;
    let columns = [
        "antennas",
        "scheme",
        "mean_xi_lower",
        "se_xi_lower",
        "solved_drops",
        "failed_drops",
        "num_drops",
    ];
    let mut csv = CsvFile::create(
        &spec.out_dir,
        "maxmin_vs_antennas.csv",
        "maxmin_vs_antennas",
        &columns,
    )?;
    for &m in &spec.antenna_sweep {
        for &scheme in &spec.schemes {
            let drops =
                maxmin_drops(&spec.config, spec.seed, spec.num_drops, scheme, spec.delta, Some(m));
            warn_errors(
                &format!("maxmin_vs_antennas {} M={m}", scheme_tag(scheme)),
                drops.iter().enumerate().filter_map(|(d, r)| r.error.as_ref().map(|e| (d, e))),
            );
            let values: Vec<f64> =
                drops.iter().filter(|r| r.error.is_none()).map(|r| r.xi_lower).collect();
            let (mean, se) = mean_se(&values);
            csv.row(&[
                m.to_string(),
                scheme_tag(scheme).into(),
                num(mean),
                num(se),
                values.len().to_string(),
                (drops.len() - values.len()).to_string(),
                spec.num_drops.to_string(),
            ])?;
        }
    }
    csv.finish()
}

fn run_joint_tx_prob(spec: &ExperimentSpec) -> anyhow::Result<PathBuf> {
    let columns = [
        "qos_bit_per_symbol",
        "scheme",
        "single_bs_fraction",
        "multi_bs_fraction",
        "feasible_drops",
        "failed_drops",
        "num_drops",
    ];
    let mut csv =
        CsvFile::create(&spec.out_dir, "joint_tx_prob.csv", "joint_tx_prob", &columns)?;
    for &qos in &spec.qos_sweep {
        for &scheme in &spec.schemes {
            let drops =
                power_drops(&spec.config, spec.seed, spec.num_drops, scheme, qos, None);
            warn_errors(
                &format!("joint_tx_prob {} qos={qos}", scheme_tag(scheme)),
                drops.iter().enumerate().filter_map(|(d, r)| r.error.as_ref().map(|e| (d, e))),
            );
            let agg = aggregate_power(&drops);
            let users = agg.single_users + agg.multi_users;
            let (single, multi) = if users > 0 {
                (agg.single_users as f64 / users as f64, agg.multi_users as f64 / users as f64)
            } else {
                (f64::NAN, f64::NAN)
            };
            csv.row(&[
                num(qos),
                scheme_tag(scheme).into(),
                num(single),
                num(multi),
                agg.feasible_opt.to_string(),
                agg.failed.to_string(),
                spec.num_drops.to_string(),
            ])?;
        }
    }
    csv.finish()
}

fn run_association_map(spec: &ExperimentSpec) -> anyhow::Result<PathBuf> {
    let columns = [
        "x_km",
        "y_km",
        "scheme",
        "serve_prob_bs1",
        "served_drops",
        "feasible_drops",
        "failed_drops",
        "num_drops",
    ];
    let mut csv =
        CsvFile::create(&spec.out_dir, "association_map.csv", "association_map", &columns)?;
    for &scheme in &spec.schemes {
        let cells = association_map_study(
            &spec.config,
            spec.seed,
            spec.num_drops,
            spec.grid,
            scheme,
            spec.qos,
        )?;
        for c in &cells {
            csv.row(&[
                num(c.x),
                num(c.y),
                scheme_tag(scheme).into(),
                num(if c.feasible > 0 {
                    c.served as f64 / c.feasible as f64
                } else {
                    f64::NAN
                }),
                c.served.to_string(),
                c.feasible.to_string(),
                c.failed.to_string(),
                spec.num_drops.to_string(),
            ])?;
        }
    }
    csv.finish()
}

/// Runs the named experiment, returning the written files.
pub fn run_experiment(spec: &ExperimentSpec) -> anyhow::Result<Vec<PathBuf>> {
    spec.validate()?;
    let path = match spec.experiment {
        Experiment::PowerVsAntennas => run_power_vs_antennas(spec)?,
        Experiment::PowerVsQos => run_power_vs_qos(spec)?,
        Experiment::BadServiceProb => run_bad_service_prob(spec)?,
        Experiment::MaxminCdf => run_maxmin_cdf(spec)?,
        Experiment::MaxminVsAntennas => run_maxmin_vs_antennas(spec)?,
        Experiment::JointTxProb => run_joint_tx_prob(spec)?,
        Experiment::AssociationMap => run_association_map(spec)?,
        Experiment::ValidateSe => run_validate_se(spec)?,
    };
    Ok(vec![path])
}
