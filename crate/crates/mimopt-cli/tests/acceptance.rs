//! Release gate: seven end-to-end checks covering the closed forms, the
//! solvers, and the reproduction studies. Each check prints a single
//! `criterion N (...): PASS` or `... FAIL` line so a log scrape shows the
//! overall state at a glance.

use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use mimopt::coherent::{coherent_maxmin, solve_coherent_powermin};
use mimopt::lp::{brute_force_reference, solve_lp, LinearProgram};
use mimopt::maxmin::{expected_iterations, maxmin_bisection};
use mimopt::model::NetworkRealization;
use mimopt::powermin::{
    association_rule_check, solve_powermin, verify_targets, PowerMinInstance,
};
use mimopt::sebounds::{
    rate_from_sinr, sinr_general, sinr_per_bs, GainStatistics, PowerAllocation, SinrTargets,
};
use mimopt::{NetworkConfig, Scheme};
use mimopt_cli::experiments::{power_drops, validate_se_study, DropPower};
use mimopt_cli::uniform_targets;

fn gate(criterion: usize, name: &str, checks: impl FnOnce() -> anyhow::Result<()>) {
    match checks() {
        Ok(()) => println!("criterion {criterion} ({name}): PASS"),
        Err(e) => {
            println!("criterion {criterion} ({name}): FAIL - {e:#}");
            panic!("criterion {criterion} ({name}) failed: {e:#}");
        }
    }
}

fn config(toml: &str) -> NetworkConfig {
    NetworkConfig::from_toml_str(toml).expect("test config parses")
}

#[test]
fn acceptance_1_closed_form_sinr_matches_monte_carlo() {
    gate(1, "closed-form validation", || {
        let start = Instant::now();
        let cfg = config(
            "num_bs = 4\nnum_users = 10\nantennas_per_bs = 100\npilot_length = 10",
        );
        let studies = validate_se_study(&cfg, 11, 100_000, &[Scheme::Mrt, Scheme::Zf])?;
        for study in &studies {
            let mut worst_rel = 0.0f64;
            let mut worst_sigma = 0.0f64;
            for k in 0..cfg.num_users {
                let closed = study.closed_sinr[k];
                let emp = study.empirical_sinr[k];
                let se = study.sinr_se[k];
                let dev = (closed - emp).abs();
                ensure!(
                    dev <= 3.0 * se,
                    "{:?} user {k}: |{closed:.6} - {emp:.6}| = {dev:.2e} > 3 se = {:.2e}",
                    study.scheme,
                    3.0 * se
                );
                ensure!(
                    dev <= 0.01 * closed,
                    "{:?} user {k}: relative deviation {:.4}% > 1%",
                    study.scheme,
                    100.0 * dev / closed
                );
                worst_rel = worst_rel.max(dev / closed);
                worst_sigma = worst_sigma.max(dev / se);
            }
            println!(
                "  {:?}: worst deviation {:.3}% of closed form, {:.2} standard errors",
                study.scheme,
                100.0 * worst_rel,
                worst_sigma
            );
        }
        let elapsed = start.elapsed();
        println!("  validated 2 schemes x 10 users at 1e5 samples in {elapsed:.1?}");
        ensure!(
            elapsed < Duration::from_secs(120),
            "validation took {elapsed:?}, budget is 2 min"
        );
        Ok(())
    })
}

/// Random statistics whose only structure is the variance identity
/// second_moment >= |mean|^2 on the diagonal.
fn random_stats(
    rng: &mut ChaCha12Rng,
) -> anyhow::Result<(GainStatistics, PowerAllocation, f64)> {
    let l = rng.random_range(1..=4);
    let k = rng.random_range(1..=6);
    let mean_gain = DMatrix::from_fn(l, k, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let second_moment = (0..l)
        .map(|i| {
            DMatrix::from_fn(k, k, |t, u| {
                if t == u {
                    mean_gain[(i, t)].norm_sqr() + rng.random_range(0.01..1.0)
                } else {
                    rng.random_range(0.0..1.0)
                }
            })
        })
        .collect();
    let stats = GainStatistics { mean_gain, second_moment };
    stats.validate()?;
    let rho = PowerAllocation::from_matrix(DMatrix::from_fn(l, k, |_, _| {
        rng.random_range(0.0..2.0)
    }))?;
    Ok((stats, rho, rng.random_range(0.1..2.0)))
}

fn permuted(stats: &GainStatistics, rho: &PowerAllocation, perm: &[usize]) -> (GainStatistics, PowerAllocation) {
    let (l, k) = (stats.num_bs(), stats.num_users());
    let mean_gain = DMatrix::from_fn(l, k, |i, t| stats.mean_gain[(perm[i], t)]);
    let second_moment = perm.iter().map(|&i| stats.second_moment[i].clone()).collect();
    let rho2 = PowerAllocation::from_matrix(DMatrix::from_fn(l, k, |i, t| {
        rho.rho[(perm[i], t)]
    }))
    .expect("permuted powers stay valid");
    (GainStatistics { mean_gain, second_moment }, rho2)
}

#[test]
fn acceptance_2_per_bs_rates_sum_to_the_joint_rate() {
    gate(2, "rate decomposition", || {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let (tau_p, tau_c) = (10, 200);
        for case in 0..1000 {
            let (stats, rho, noise) = random_stats(&mut rng)?;
            let (l, k_users) = (stats.num_bs(), stats.num_users());
            let joint = sinr_general(&stats, &rho, noise);
            for (k, &joint_sinr) in joint.iter().enumerate().take(k_users) {
                let total = rate_from_sinr(joint_sinr, 1.0, tau_p, tau_c)?;
                let sum: f64 = (0..l)
                    .map(|i| {
                        rate_from_sinr(sinr_per_bs(&stats, &rho, noise, k, i), 1.0, tau_p, tau_c)
                    })
                    .sum::<mimopt::Result<f64>>()?;
                ensure!(
                    (sum - total).abs() <= 1e-10 * total.abs() + 1e-14,
                    "case {case} user {k}: per-BS sum {sum:.15} != joint rate {total:.15}"
                );

                // The decomposition must not depend on the decoding order.
                let mut perm: Vec<usize> = (0..l).collect();
                perm.reverse();
                if l > 2 {
                    perm.swap(0, 1);
                }
                let (pstats, prho) = permuted(&stats, &rho, &perm);
                let psum: f64 = (0..l)
                    .map(|i| {
                        rate_from_sinr(
                            sinr_per_bs(&pstats, &prho, noise, k, i),
                            1.0,
                            tau_p,
                            tau_c,
                        )
                    })
                    .sum::<mimopt::Result<f64>>()?;
                ensure!(
                    (psum - total).abs() <= 1e-10 * total.abs() + 1e-14,
                    "case {case} user {k}: permuted sum {psum:.15} != joint rate {total:.15}"
                );
            }
        }
        Ok(())
    })
}

fn random_bounded_lp(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> LinearProgram {
    let a = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
    let x0 = DVector::from_fn(cols, |_, _| rng.random_range(0.0..1.0));
    let mut b = &a * &x0;
    for i in (0..rows).step_by(2) {
        b[i] += rng.random_range(0.0..1.0);
    }
    let c = DVector::from_fn(cols, |_, _| rng.random_range(0.1..1.0));
    LinearProgram::new(c, a, b).expect("dimensions agree")
}

#[test]
fn acceptance_3_lp_solutions_are_certified_optimal() {
    gate(3, "LP optimality", || {
        // Single BS, single user: the optimum has a closed form because the
        // one QoS constraint must be tight.
        let cfg = config(
            "num_bs = 1\nnum_users = 1\nantennas_per_bs = 50\npilot_length = 1\nsquare_side = 0.3",
        );
        let targets = uniform_targets(&cfg, 1.0)?;
        let xi_hat = targets.xi_hat[0];
        let mut matched = 0;
        for seed in 0..20 {
            let r = NetworkRealization::generate(&cfg, seed)?;
            let (beta, theta) = (r.beta[(0, 0)], r.theta[(0, 0)]);
            let m = cfg.antennas_per_bs as f64;
            let denom = m * theta - xi_hat * beta;
            let instance = PowerMinInstance::new(&r, &targets, Scheme::Mrt)?;
            let outcome = solve_powermin(&instance)?;
            if denom <= 0.0 || xi_hat * cfg.dl_noise / denom > cfg.max_power[0] {
                ensure!(outcome.feasible().is_none(), "seed {seed}: should be infeasible");
                continue;
            }
            let sol = outcome.feasible().context("analytic optimum is within budget")?;
            let analytic = xi_hat * cfg.dl_noise / denom;
            let got = sol.allocation.rho[(0, 0)];
            ensure!(
                (got - analytic).abs() <= 1e-9 * analytic,
                "seed {seed}: solver {got:.12e} vs analytic {analytic:.12e}"
            );
            let cert = &sol.lp_certificate;
            ensure!(
                cert.duality_gap <= 1e-8 && cert.comp_slackness <= 1e-8,
                "seed {seed}: loose certificate {cert:?}"
            );
            matched += 1;
        }
        ensure!(matched >= 15, "only {matched}/20 drops exercised the analytic optimum");

        // Random bounded-feasible LPs against exhaustive vertex enumeration.
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for (rows, cols, count) in [(10, 20, 2), (6, 12, 6)] {
            for case in 0..count {
                let lp = random_bounded_lp(&mut rng, rows, cols);
                let sol = solve_lp(&lp)?;
                ensure!(sol.is_optimal(), "{rows}x{cols} case {case}: not optimal");
                let cert = &sol.certificate;
                ensure!(
                    cert.primal_residual <= 1e-8
                        && cert.dual_residual <= 1e-8
                        && cert.comp_slackness <= 1e-8
                        && cert.duality_gap <= 1e-8,
                    "{rows}x{cols} case {case}: loose certificate {cert:?}"
                );
                let (reference, _) = brute_force_reference(&lp, 1e-9)
                    .context("vertex enumeration should find the optimum")?;
                ensure!(
                    (sol.objective_value - reference).abs() <= 1e-8 * reference.abs().max(1.0),
                    "{rows}x{cols} case {case}: simplex {:.12e} vs enumeration {reference:.12e}",
                    sol.objective_value
                );
            }
        }
        Ok(())
    })
}

#[test]
fn acceptance_4_serving_sets_satisfy_the_selection_rule() {
    gate(4, "association rule", || {
        let configs = [
            (
                "orthogonal pilots",
                config(
                    "num_bs = 4\nnum_users = 8\nantennas_per_bs = 100\npilot_length = 8\nsquare_side = 0.5",
                ),
            ),
            (
                "pilot reuse",
                config(
                    "num_bs = 4\nnum_users = 8\nantennas_per_bs = 100\npilot_length = 4\nsquare_side = 0.5",
                ),
            ),
        ];
        for (label, cfg) in &configs {
            let targets = uniform_targets(cfg, 0.8)?;
            let mut feasible = 0;
            let mut attempts = 0;
            while feasible < 250 {
                ensure!(
                    attempts < 2500,
                    "{label}: only {feasible} feasible drops in {attempts} attempts"
                );
                let seed = 4000 + attempts;
                attempts += 1;
                let scheme = if attempts % 2 == 0 { Scheme::Mrt } else { Scheme::Zf };
                let r = NetworkRealization::generate(cfg, seed)?;
                let instance = PowerMinInstance::new(&r, &targets, scheme)?;
                let Some(sol) = solve_powermin(&instance)?.feasible().cloned() else {
                    continue;
                };
                feasible += 1;
                ensure!(
                    sol.lp_certificate.duality_gap <= 1e-8
                        && sol.lp_certificate.comp_slackness <= 1e-8,
                    "{label} seed {seed}: loose LP certificate"
                );
                let report =
                    association_rule_check(&instance, &sol.association, &sol.allocation, 1e-6);
                ensure!(
                    report.passed(),
                    "{label} seed {seed} ({scheme:?}): active BSs off the minimum score: {:?}",
                    report.violations
                );
            }
            println!("  {label}: {feasible} feasible drops checked ({attempts} attempts)");
        }
        Ok(())
    })
}

#[test]
fn acceptance_5_bisection_is_tight_and_certified() {
    gate(5, "max-min bisection", || {
        let cfg = config(
            "num_bs = 2\nnum_users = 3\nantennas_per_bs = 30\npilot_length = 3\nsquare_side = 0.4",
        );
        let delta = 0.01;
        let weights = vec![1.0; cfg.num_users];
        for seed in 300..330 {
            let r = NetworkRealization::generate(&cfg, seed)?;
            for scheme in [Scheme::Mrt, Scheme::Zf] {
                let res = maxmin_bisection(&r, scheme, &weights, delta)?;
                ensure!(
                    res.iterations == expected_iterations(res.xi0_upper, delta),
                    "seed {seed} {scheme:?}: {} iterations, expected {}",
                    res.iterations,
                    expected_iterations(res.xi0_upper, delta)
                );
                ensure!(res.widened == 0, "analytic ceiling should never widen");
                ensure!(
                    res.xi_upper - res.xi_lower <= delta + 1e-12,
                    "seed {seed} {scheme:?}: bracket wider than delta"
                );

                // The search ceiling must be an unreachable rate.
                let t0 = SinrTargets::from_weighted_rate(
                    &weights,
                    res.xi0_upper,
                    cfg.dl_fraction,
                    cfg.pilot_length,
                    cfg.coherence_length,
                )?;
                let i0 = PowerMinInstance::new(&r, &t0, scheme)?;
                ensure!(
                    solve_powermin(&i0)?.feasible().is_none(),
                    "seed {seed} {scheme:?}: ceiling rate {:.4} is feasible",
                    res.xi0_upper
                );

                // The returned allocation actually delivers xi_lower.
                if res.xi_lower > 0.0 {
                    let tl = SinrTargets::from_weighted_rate(
                        &weights,
                        res.xi_lower,
                        cfg.dl_fraction,
                        cfg.pilot_length,
                        cfg.coherence_length,
                    )?;
                    let il = PowerMinInstance::new(&r, &tl, scheme)?;
                    verify_targets(&il, &res.allocation).with_context(|| {
                        format!("seed {seed} {scheme:?}: allocation misses xi_lower")
                    })?;
                }
            }
        }

        // Single BS, single user: the rate saturates at full power, and the
        // bisection must land within delta of that analytic limit.
        let cfg1 = config(
            "num_bs = 1\nnum_users = 1\nantennas_per_bs = 64\npilot_length = 1\nsquare_side = 0.3",
        );
        for seed in 0..10 {
            let r = NetworkRealization::generate(&cfg1, seed)?;
            let res = maxmin_bisection(&r, Scheme::Mrt, &[1.0], delta)?;
            let p = cfg1.max_power[0];
            let m = cfg1.antennas_per_bs as f64;
            let saturation =
                p * m * r.theta[(0, 0)] / (p * r.beta[(0, 0)] + cfg1.dl_noise);
            let analytic =
                rate_from_sinr(saturation, cfg1.dl_fraction, 1, cfg1.coherence_length)?;
            let gap = analytic - res.xi_lower;
            ensure!(
                (-1e-9..=delta + 1e-9).contains(&gap),
                "seed {seed}: bisection {:.6} vs saturation rate {analytic:.6}",
                res.xi_lower
            );
        }
        Ok(())
    })
}

fn joint_feasible_means(mrt: &[DropPower], zf: &[DropPower]) -> anyhow::Result<(f64, f64, usize)> {
    let mut totals = (0.0, 0.0);
    let mut n = 0;
    for (a, b) in mrt.iter().zip(zf) {
        if let (Some(x), Some(y)) = (&a.opt, &b.opt) {
            totals.0 += x.total;
            totals.1 += y.total;
            n += 1;
        }
    }
    ensure!(n > 0, "no drop feasible under both schemes");
    Ok((totals.0 / n as f64, totals.1 / n as f64, n))
}

fn no_failures(drops: &[DropPower]) -> anyhow::Result<()> {
    if let Some((d, e)) = drops
        .iter()
        .enumerate()
        .find_map(|(d, r)| r.error.as_ref().map(|e| (d, e)))
    {
        bail!("drop {d} failed: {e}");
    }
    Ok(())
}

#[test]
fn acceptance_6_power_trends_match_the_reference_study() {
    gate(6, "power trends", || {
        let start = Instant::now();
        let cfg = NetworkConfig::default();
        let (seed, drops) = (600, 200);

        // QoS sweep at the default 200 antennas.
        let qos_list = [0.5, 1.0, 1.5, 2.0, 2.5];
        let mut by_qos = Vec::new();
        for &qos in &qos_list {
            let mrt = power_drops(&cfg, seed, drops, Scheme::Mrt, qos, None);
            let zf = power_drops(&cfg, seed, drops, Scheme::Zf, qos, None);
            no_failures(&mrt)?;
            no_failures(&zf)?;
            by_qos.push((qos, mrt, zf));
        }

        // (a) absolute level and scheme ordering.
        let (_, mrt1, zf1) = by_qos.iter().find(|(q, ..)| *q == 1.0).unwrap();
        let (mean_mrt, mean_zf, n) = joint_feasible_means(mrt1, zf1)?;
        println!(
            "  qos 1.0: mean total {mean_mrt:.2} W (mrt) / {mean_zf:.2} W (zf) over {n} drops"
        );
        ensure!(
            (4.0..=20.0).contains(&mean_mrt) && (4.0..=20.0).contains(&mean_zf),
            "mean power out of the expected 4..20 W window: mrt {mean_mrt:.2}, zf {mean_zf:.2}"
        );
        for &(qos, ref mrt, ref zf) in &by_qos {
            let (a, b, _) = joint_feasible_means(mrt, zf)?;
            if qos <= 1.0 {
                ensure!(a <= b, "qos {qos}: mrt mean {a:.3} W above zf mean {b:.3} W");
            }
            if qos >= 2.5 {
                ensure!(b < a, "qos {qos}: zf mean {b:.3} W not below mrt mean {a:.3} W");
            }
        }

        // (c) the optimal association is almost always a single BS.
        for (tag, drops1) in [("mrt", mrt1), ("zf", zf1)] {
            let (single, multi) = drops1
                .iter()
                .filter_map(|d| d.opt.as_ref())
                .fold((0usize, 0usize), |acc, s| {
                    (acc.0 + s.single_users, acc.1 + s.multi_users)
                });
            let frac = single as f64 / (single + multi) as f64;
            println!("  qos 1.0 {tag}: single-BS fraction {frac:.3}");
            ensure!(frac >= 0.85, "{tag}: single-BS fraction {frac:.3} < 0.85");
        }

        // (d) restricting the serving set never helps feasibility.
        for (qos, mrt, zf) in &by_qos {
            for (tag, set) in [("mrt", mrt), ("zf", zf)] {
                let inf_opt = set.iter().filter(|d| d.opt.is_none()).count();
                let inf_base = set.iter().filter(|d| d.baseline.is_none()).count();
                ensure!(
                    inf_opt <= inf_base,
                    "qos {qos} {tag}: optimal infeasible on {inf_opt} drops, max-SNR on {inf_base}"
                );
            }
        }

        // (b) more antennas always cost less power, per scheme, compared on
        // the drops feasible at every sweep point.
        let antennas = [50usize, 100, 150, 200, 250, 300];
        for scheme in [Scheme::Mrt, Scheme::Zf] {
            let sweep: Vec<Vec<DropPower>> = antennas
                .iter()
                .map(|&m| power_drops(&cfg, seed, drops, scheme, 1.0, Some(m)))
                .collect();
            for set in &sweep {
                no_failures(set)?;
            }
            let everywhere: Vec<usize> = (0..drops)
                .filter(|&d| sweep.iter().all(|set| set[d].opt.is_some()))
                .collect();
            ensure!(
                everywhere.len() >= 50,
                "{scheme:?}: only {} drops feasible at every antenna count",
                everywhere.len()
            );
            let means: Vec<f64> = sweep
                .iter()
                .map(|set| {
                    everywhere
                        .iter()
                        .map(|&d| set[d].opt.as_ref().unwrap().total)
                        .sum::<f64>()
                        / everywhere.len() as f64
                })
                .collect();
            println!(
                "  {scheme:?} mean W by antennas {antennas:?}: {:?} ({} common drops)",
                means.iter().map(|m| (m * 100.0).round() / 100.0).collect::<Vec<_>>(),
                everywhere.len()
            );
            for w in means.windows(2) {
                ensure!(
                    w[1] < w[0],
                    "{scheme:?}: mean power did not strictly decrease: {means:?}"
                );
            }
        }

        let elapsed = start.elapsed();
        println!("  trend study finished in {elapsed:.1?}");
        ensure!(
            elapsed < Duration::from_secs(900),
            "trend study took {elapsed:?}, budget is 15 min"
        );
        Ok(())
    })
}

#[test]
fn acceptance_7_coherent_transmission_dominates() {
    gate(7, "coherent dominance", || {
        let cfg = config(
            "num_bs = 2\nnum_users = 4\nantennas_per_bs = 40\npilot_length = 4\nsquare_side = 0.4",
        );
        let delta = 0.01;
        let weights = vec![1.0; cfg.num_users];
        let mut gains = Vec::new();
        for seed in 700..710 {
            let r = NetworkRealization::generate(&cfg, seed)?;
            for scheme in [Scheme::Mrt, Scheme::Zf] {
                let nc = maxmin_bisection(&r, scheme, &weights, delta)?;
                let c = coherent_maxmin(&r, scheme, &weights, delta)?;
                ensure!(
                    c.xi_lower >= nc.xi_lower - delta - 1e-9,
                    "seed {seed} {scheme:?}: coherent {:.4} below non-coherent {:.4}",
                    c.xi_lower,
                    nc.xi_lower
                );
                ensure!(nc.xi_lower > 0.1, "seed {seed} {scheme:?}: degenerate drop");
                gains.push((c.xi_lower - nc.xi_lower) / nc.xi_lower);

                // Re-solve at the achieved rate and inspect the certificate.
                let targets = SinrTargets::from_weighted_rate(
                    &weights,
                    c.xi_lower,
                    cfg.dl_fraction,
                    cfg.pilot_length,
                    cfg.coherence_length,
                )?;
                let sol = solve_coherent_powermin(&r, &targets, scheme)?;
                let sol = sol
                    .feasible()
                    .context("rate certified by bisection must re-solve")?
                    .clone();
                let cert = &sol.certificate;
                ensure!(
                    cert.stationarity <= 1e-6 && cert.comp_slackness <= 1e-6,
                    "seed {seed} {scheme:?}: loose certificate {cert:?}"
                );
                ensure!(
                    cert.min_cone_margin >= -1e-6 && cert.min_power_margin >= -1e-6,
                    "seed {seed} {scheme:?}: constraint violated {cert:?}"
                );
            }
        }
        let mean_gain = gains.iter().sum::<f64>() / gains.len() as f64;
        println!(
            "  mean coherent gain {:.2}% over {} drop/scheme pairs",
            100.0 * mean_gain,
            gains.len()
        );
        ensure!(
            mean_gain <= 0.10,
            "mean coherent gain {:.2}% exceeds the 10% plausibility bound",
            100.0 * mean_gain
        );

        // With a single BS the cone program degenerates to the LP.
        let cfg1 = config(
            "num_bs = 1\nnum_users = 3\nantennas_per_bs = 30\npilot_length = 3\nsquare_side = 0.3",
        );
        let targets = uniform_targets(&cfg1, 0.8)?;
        let mut compared = 0;
        for seed in 0..6 {
            let r = NetworkRealization::generate(&cfg1, seed)?;
            for scheme in [Scheme::Mrt, Scheme::Zf] {
                let lp = solve_powermin(&PowerMinInstance::new(&r, &targets, scheme)?)?;
                let co = solve_coherent_powermin(&r, &targets, scheme)?;
                match (lp.feasible(), co.feasible()) {
                    (Some(l), Some(c)) => {
                        ensure!(
                            (l.objective - c.objective).abs() <= 1e-6 * l.objective.max(1e-12),
                            "seed {seed} {scheme:?}: LP {:.9e} vs cone {:.9e}",
                            l.objective,
                            c.objective
                        );
                        compared += 1;
                    }
                    (None, None) => {}
                    (lp_state, _) => bail!(
                        "seed {seed} {scheme:?}: feasibility disagrees (LP feasible: {})",
                        lp_state.is_some()
                    ),
                }
            }
        }
        ensure!(compared >= 8, "only {compared} single-BS comparisons were feasible");
        Ok(())
    })
}
