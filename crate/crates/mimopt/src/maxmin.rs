//! Weighted max-min QoS via bisection over power-minimization feasibility.
//!
//! The common rate target `xi` enters the constraints only through the
//! monotone map xi -> xi_hat, so feasibility is monotone in xi: if targets
//! w_k * xi2 are servable then so are w_k * xi1 for any xi1 < xi2. Bisection
//! on [0, xi0] therefore converges to the max-min optimum, needing exactly
//! ceil(log2(xi0 / delta)) feasibility solves to reach bracket width delta.
//!
//! The search ceiling comes from [`upper_bound_xi0`]: no power allocation can
//! push any user's SINR above the array gain (MRT) or above the estimation
//! SNR ceiling (ZF), so the corresponding rates are infeasible by
//! construction. If numerical slack ever made the ceiling feasible, the
//! options-level `certify_upper` probe doubles it until infeasible and
//! reports how often it did (`widened`), instead of silently returning a
//! non-bracketing interval.

use crate::model::NetworkRealization;
use crate::powermin::{solve_powermin, PowerMinInstance};
use crate::sebounds::{PowerAllocation, Scheme, SinrTargets};
use crate::{Error, Result};

/// Knobs for the bisection driver.
#[derive(Debug, Clone, Copy)]
pub struct MaxMinOptions {
    /// Final bracket width in bit/symbol.
    pub delta: f64,
    /// Probe the ceiling first and double it while it is feasible.
    pub certify_upper: bool,
}

impl Default for MaxMinOptions {
    fn default() -> Self {
        MaxMinOptions { delta: 0.01, certify_upper: false }
    }
}

#[derive(Debug, Clone)]
pub struct MaxMinResult {
    /// Largest rate certified feasible (bit/symbol).
    pub xi_lower: f64,
    /// Smallest rate certified (or assumed, at the ceiling) infeasible.
    pub xi_upper: f64,
    /// Allocation feasible at targets w_k * xi_lower; zero if xi_lower = 0.
    pub allocation: PowerAllocation,
    /// Feasibility solves performed during bisection (probes excluded).
    pub iterations: usize,
    /// Search ceiling actually used.
    pub xi0_upper: f64,
    /// How often the ceiling had to be doubled (0 unless certify_upper).
    pub widened: u32,
}

fn validate_weights(weights: &[f64], num_users: usize) -> Result<()> {
    if weights.len() != num_users {
        return Err(Error::Domain(format!(
            "{} weights for {num_users} users",
            weights.len()
        )));
    }
    if weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
        return Err(Error::Domain("weights must be finite and > 0".into()));
    }
    Ok(())
}

/// Rate ceiling xi0 such that targets w_k * xi0 are infeasible for every
/// power allocation: MRT SINR never exceeds M, ZF SINR never exceeds
/// (M - K) * tau_p * p_k / sigma_ul^2 * sum_i beta[i][k].
pub fn upper_bound_xi0(
    realization: &NetworkRealization,
    scheme: Scheme,
    weights: &[f64],
) -> Result<f64> {
    let cfg = &realization.config;
    let k_users = realization.num_users();
    validate_weights(weights, k_users)?;
    let prefactor = cfg.rate_prefactor();
    let m = cfg.antennas_per_bs as f64;
    let bound = match scheme {
        Scheme::Mrt => {
            let cap = (1.0 + m).log2();
            weights.iter().map(|w| cap / w).fold(f64::INFINITY, f64::min)
        }
        Scheme::Zf => {
            let f = scheme.array_factor(cfg.antennas_per_bs, k_users)?;
            (0..k_users)
                .map(|k| {
                    let snr = cfg.pilot_power[k] * cfg.pilot_length as f64 / cfg.ul_noise;
                    let beta_sum: f64 =
                        (0..realization.num_bs()).map(|i| realization.beta[(i, k)]).sum();
                    (1.0 + f * snr * beta_sum).log2() / weights[k]
                })
                .fold(f64::INFINITY, f64::min)
        }
    };
    Ok(prefactor * bound)
}

/// Generic bisection driver over a feasibility oracle. The oracle returns an
/// allocation meeting targets w_k * xi, or None when no allocation exists.
pub fn bisect_feasibility<F>(
    xi0: f64,
    options: MaxMinOptions,
    mut feasible_at: F,
) -> Result<MaxMinResult>
where
    F: FnMut(f64) -> Result<Option<PowerAllocation>>,
{
    if options.delta.is_nan() || options.delta <= 0.0 || !xi0.is_finite() || xi0 < 0.0 {
        return Err(Error::Domain(format!(
            "bisection needs delta > 0 and a finite ceiling (delta = {}, xi0 = {xi0})",
            options.delta
        )));
    }
    let mut lower = 0.0;
    let mut upper = xi0;
    let mut best: Option<PowerAllocation> = None;
    let mut widened = 0;
    if options.certify_upper {
        while let Some(alloc) = feasible_at(upper)? {
            best = Some(alloc);
            lower = upper;
            upper *= 2.0;
            widened += 1;
            if widened > 30 {
                return Err(Error::Certificate(
                    "search ceiling still feasible after 30 doublings".into(),
                ));
            }
        }
    }
    let mut iterations = 0;
    while upper - lower > options.delta {
        let candidate = 0.5 * (lower + upper);
        match feasible_at(candidate)? {
            Some(alloc) => {
                best = Some(alloc);
                lower = candidate;
            }
            None => upper = candidate,
        }
        iterations += 1;
    }
    Ok(MaxMinResult {
        xi_lower: lower,
        xi_upper: upper,
        allocation: best.unwrap_or(PowerAllocation::zeros(0, 0)),
        iterations,
        xi0_upper: upper.max(xi0),
        widened,
    })
}

fn noncoherent_oracle<'a>(
    realization: &'a NetworkRealization,
    scheme: Scheme,
    weights: &'a [f64],
) -> impl FnMut(f64) -> Result<Option<PowerAllocation>> + 'a {
    let cfg = &realization.config;
    move |xi: f64| {
        let targets = SinrTargets::from_weighted_rate(
            weights,
            xi,
            cfg.dl_fraction,
            cfg.pilot_length,
            cfg.coherence_length,
        )?;
        let instance = PowerMinInstance::new(realization, &targets, scheme)?;
        Ok(solve_powermin(&instance)?.feasible().map(|s| s.allocation.clone()))
    }
}

pub fn maxmin_bisection(
    realization: &NetworkRealization,
    scheme: Scheme,
    weights: &[f64],
    delta: f64,
) -> Result<MaxMinResult> {
    maxmin_bisection_with_options(
        realization,
        scheme,
        weights,
        MaxMinOptions { delta, ..MaxMinOptions::default() },
    )
}

pub fn maxmin_bisection_with_options(
    realization: &NetworkRealization,
    scheme: Scheme,
    weights: &[f64],
    options: MaxMinOptions,
) -> Result<MaxMinResult> {
    validate_weights(weights, realization.num_users())?;
    let xi0 = upper_bound_xi0(realization, scheme, weights)?;
    let mut result =
        bisect_feasibility(xi0, options, noncoherent_oracle(realization, scheme, weights))?;
    if result.allocation.num_users() == 0 {
        result.allocation =
            PowerAllocation::zeros(realization.num_bs(), realization.num_users());
    }
    Ok(result)
}

/// ceil(log2(xi0 / delta)), the exact bisection solve count for a width-xi0
/// bracket (0 when xi0 <= delta).
pub fn expected_iterations(xi0: f64, delta: f64) -> usize {
    if xi0 <= delta {
        0
    } else {
        (xi0 / delta).log2().ceil() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::NetworkConfig;
    use crate::sebounds::{closed_form_sinr, rate_from_sinr};
    use approx::assert_relative_eq;

    fn config(num_bs: usize, m: usize, k: usize) -> NetworkConfig {
        NetworkConfig::from_toml_str(&format!(
            "num_bs = {num_bs}\nnum_users = {k}\nantennas_per_bs = {m}\npilot_length = {k}"
        ))
        .unwrap()
    }

    #[test]
    fn mrt_ceiling_matches_hand_value() {
        let cfg = config(4, 200, 20);
        let r = NetworkRealization::generate(&cfg, 7).unwrap();
        let xi0 = upper_bound_xi0(&r, Scheme::Mrt, &[1.0; 20]).unwrap();
        assert_relative_eq!(xi0, 0.9 * 201.0_f64.log2(), max_relative = 1e-12);
        assert!((xi0 - 6.886).abs() < 1e-3);
    }

    #[test]
    fn heavier_weight_weakly_lowers_ceiling() {
        let cfg = config(4, 100, 8);
        let r = NetworkRealization::generate(&cfg, 3).unwrap();
        for scheme in [Scheme::Mrt, Scheme::Zf] {
            let base = upper_bound_xi0(&r, scheme, &[1.0; 8]).unwrap();
            let mut w = vec![1.0; 8];
            w[2] = 2.0;
            let heavier = upper_bound_xi0(&r, scheme, &w).unwrap();
            assert!(heavier <= base + 1e-15, "{scheme}: {heavier} > {base}");
        }
    }

    #[test]
    fn ceiling_is_infeasible_by_direct_solve() {
        for seed in [1u64, 5, 9] {
            let cfg = config(4, 64, 6);
            let r = NetworkRealization::generate(&cfg, seed).unwrap();
            for scheme in [Scheme::Mrt, Scheme::Zf] {
                let w = vec![1.0; 6];
                let xi0 = upper_bound_xi0(&r, scheme, &w).unwrap();
                let targets = SinrTargets::from_weighted_rate(
                    &w,
                    xi0,
                    cfg.dl_fraction,
                    cfg.pilot_length,
                    cfg.coherence_length,
                )
                .unwrap();
                let inst = PowerMinInstance::new(&r, &targets, scheme).unwrap();
                assert!(solve_powermin(&inst).unwrap().feasible().is_none());
            }
        }
    }

    #[test]
    fn iteration_count_is_exact_and_halving_delta_adds_one() {
        let cfg = config(4, 64, 6);
        let r = NetworkRealization::generate(&cfg, 11).unwrap();
        let w = vec![1.0; 6];
        let xi0 = upper_bound_xi0(&r, Scheme::Mrt, &w).unwrap();
        let coarse = maxmin_bisection(&r, Scheme::Mrt, &w, 0.02).unwrap();
        let fine = maxmin_bisection(&r, Scheme::Mrt, &w, 0.01).unwrap();
        assert_eq!(coarse.iterations, expected_iterations(xi0, 0.02));
        assert_eq!(fine.iterations, expected_iterations(xi0, 0.01));
        assert_eq!(fine.iterations, coarse.iterations + 1);
        assert!(coarse.xi_upper - coarse.xi_lower <= 0.02);
        assert!(fine.xi_upper - fine.xi_lower <= 0.01);
    }

    #[test]
    fn single_link_saturates_at_full_power() {
        let cfg = config(1, 100, 1);
        let r = NetworkRealization::generate(&cfg, 2).unwrap();
        let delta = 0.001;
        let res = maxmin_bisection(&r, Scheme::Mrt, &[1.0], delta).unwrap();
        let p = cfg.max_power[0];
        let sat = 100.0 * r.theta[(0, 0)] * p / (p * r.beta[(0, 0)] + cfg.dl_noise);
        let analytic = rate_from_sinr(
            sat,
            cfg.dl_fraction,
            cfg.pilot_length,
            cfg.coherence_length,
        )
        .unwrap();
        assert!(analytic >= res.xi_lower - 1e-9, "{analytic} < {}", res.xi_lower);
        assert!(analytic - res.xi_lower <= delta, "{analytic} vs {}", res.xi_lower);
    }

    #[test]
    fn returned_allocation_meets_the_reported_rate() {
        let cfg = config(4, 64, 6);
        let r = NetworkRealization::generate(&cfg, 13).unwrap();
        let w: Vec<f64> = (0..6).map(|k| 1.0 + 0.1 * k as f64).collect();
        for scheme in [Scheme::Mrt, Scheme::Zf] {
            let res = maxmin_bisection(&r, scheme, &w, 0.01).unwrap();
            assert!(res.xi_lower > 0.0, "{scheme} made no progress");
            let sinr = closed_form_sinr(&r, &res.allocation, scheme, cfg.dl_noise).unwrap();
            let worst = sinr
                .iter()
                .zip(&w)
                .map(|(&s, &wk)| {
                    rate_from_sinr(s, cfg.dl_fraction, cfg.pilot_length, cfg.coherence_length)
                        .unwrap()
                        / wk
                })
                .fold(f64::INFINITY, f64::min);
            assert!(worst >= res.xi_lower - 1e-9, "{scheme}: {worst} < {}", res.xi_lower);
            // Replay feasibility at the certified rate through a fresh solve.
            let targets = SinrTargets::from_weighted_rate(
                &w,
                res.xi_lower,
                cfg.dl_fraction,
                cfg.pilot_length,
                cfg.coherence_length,
            )
            .unwrap();
            let inst = PowerMinInstance::new(&r, &targets, scheme).unwrap();
            assert!(solve_powermin(&inst).unwrap().feasible().is_some());
        }
    }

    #[test]
    fn monotone_feasibility_spot_check() {
        let cfg = config(4, 64, 6);
        let r = NetworkRealization::generate(&cfg, 17).unwrap();
        let w = vec![1.0; 6];
        let res = maxmin_bisection(&r, Scheme::Mrt, &w, 0.05).unwrap();
        let mut probe = noncoherent_oracle(&r, Scheme::Mrt, &w);
        // Anything below the certified optimum stays feasible, anything
        // above the certified infeasible point stays infeasible.
        for frac in [0.25, 0.5, 0.9] {
            assert!(probe(res.xi_lower * frac).unwrap().is_some());
        }
        assert!(probe(res.xi_upper * 1.2).unwrap().is_none());
    }

    #[test]
    fn certify_upper_widenes_until_infeasible() {
        // Synthetic oracle feasible below 3.0 with a deliberately low ceiling.
        let oracle = |xi: f64| -> Result<Option<PowerAllocation>> {
            Ok((xi < 3.0).then(|| PowerAllocation::zeros(1, 1)))
        };
        let opts = MaxMinOptions { delta: 0.01, certify_upper: true };
        let res = bisect_feasibility(1.0, opts, oracle).unwrap();
        assert_eq!(res.widened, 2, "1 -> 2 -> 4");
        assert!(res.xi_lower <= 3.0 && 3.0 <= res.xi_upper + 0.01);
        assert!(res.xi_upper - res.xi_lower <= 0.01);
        assert!((res.xi_lower - 3.0).abs() <= 0.01);
    }

    #[test]
    fn zero_ceiling_returns_zero_rate() {
        let oracle = |_: f64| -> Result<Option<PowerAllocation>> { unreachable!() };
        let res = bisect_feasibility(0.0, MaxMinOptions::default(), oracle).unwrap();
        assert_eq!(res.iterations, 0);
        assert_eq!(res.xi_lower, 0.0);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let cfg = config(4, 64, 6);
        let r = NetworkRealization::generate(&cfg, 1).unwrap();
        assert!(maxmin_bisection(&r, Scheme::Mrt, &[1.0; 5], 0.01).is_err());
        assert!(maxmin_bisection(&r, Scheme::Mrt, &[1.0; 6], 0.0).is_err());
        let mut w = vec![1.0; 6];
        w[0] = -1.0;
        assert!(maxmin_bisection(&r, Scheme::Mrt, &w, 0.01).is_err());
    }
}
