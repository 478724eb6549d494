//! Total-power minimization under per-user SINR targets, plus the dual-based
//! BS association analysis.
//!
//! For either precoding scheme the closed-form SINR constraints are linear in
//! the powers, so the problem
//!
//! ```text
//! min  sum_i delta_i sum_t rho[i][t]
//! s.t. SINR_k(rho) >= xi_hat_k        for every user k
//!      sum_t rho[i][t] <= P_max_i     for every BS i
//!      rho >= 0
//! ```
//!
//! becomes an LP with one QoS row per user (written with the per-user vectors
//! `g_k = f * theta[., k]` over the contaminating set, the floor weights
//! `c_k`, and the signal coefficients `b_k = g_k / xi_hat_k`) and one power
//! row per BS. Variables are ordered BS-major: column `i * K + t` is
//! `rho[i][t]`.
//!
//! The LP duals carry the association structure: with QoS multipliers
//! `lambda_k >= 0` and power multipliers `mu_i >= 0`, the reduced cost of
//! variable (i, t) vanishes at every served link, which is exactly the
//! statement that BS i attains the per-user minimum of the score
//!
//! ```text
//! score(i, t) = (delta_i + sum_k lambda_k g[i][k] 1[t in P_k\{k}]
//!                + sum_k lambda_k c[i][k] + mu_i) / b[i][t]
//! ```
//!
//! [`association_rule_check`] verifies that optimality condition on a solved
//! allocation; it holds at every optimum up to LP tolerances.
//!
//! Users with `xi_hat_k = 0` need no service: their QoS rows are dropped at
//! build time (the signal coefficient is undefined) and their multipliers
//! reported as zero.

use nalgebra::{DMatrix, DVector};

use crate::lp::{solve_lp, LinearProgram, LpCertificate, LpStatus};
use crate::model::NetworkRealization;
use crate::sebounds::{PowerAllocation, Scheme, SinrTargets};
use crate::{Error, Result};

/// Default cutoff deciding that a BS serves a user: LP vertices are exact
/// zeros in exact arithmetic, but recovered solutions carry LU roundoff.
pub const ASSOCIATION_THRESHOLD_W: f64 = 1e-9;

/// Relative slack allowed when re-checking solved allocations against their
/// SINR targets.
pub const TARGET_RECHECK_TOL: f64 = 1e-7;

/// Scheme-resolved data of one power-minimization problem.
#[derive(Debug, Clone)]
pub struct PowerMinInstance {
    pub scheme: Scheme,
    /// Pilot-aligned gains g[i][k] = f * theta[i][k] (f = M for MRT, M-K for ZF).
    pub gain: DMatrix<f64>,
    /// Interference floor c[i][k]: beta (MRT) or beta - theta (ZF).
    pub floor: DMatrix<f64>,
    pub delta: Vec<f64>,
    pub max_power: Vec<f64>,
    pub dl_noise: f64,
    pub pilot_sets: Vec<Vec<usize>>,
    pub targets: SinrTargets,
}

impl PowerMinInstance {
    /// Instance with amplifier weights, power budgets and noise taken from
    /// the realization's config.
    pub fn new(
        realization: &NetworkRealization,
        targets: &SinrTargets,
        scheme: Scheme,
    ) -> Result<Self> {
        Self::with_params(
            realization,
            targets,
            scheme,
            realization.config.amp_efficiency.clone(),
            realization.config.max_power.clone(),
            realization.config.dl_noise,
        )
    }

    pub fn with_params(
        realization: &NetworkRealization,
        targets: &SinrTargets,
        scheme: Scheme,
        delta: Vec<f64>,
        max_power: Vec<f64>,
        dl_noise: f64,
    ) -> Result<Self> {
        let (l, k) = (realization.num_bs(), realization.num_users());
        if targets.num_users() != k {
            return Err(Error::Domain(format!(
                "targets cover {} users, network has {k}",
                targets.num_users()
            )));
        }
        if delta.len() != l || max_power.len() != l {
            return Err(Error::Domain("delta / max_power must have one entry per BS".into()));
        }
        if targets.xi_hat.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::Domain("SINR targets must be finite and >= 0".into()));
        }
        let f = scheme.array_factor(realization.config.antennas_per_bs, k)?;
        let gain = &realization.theta * f;
        let floor = match scheme {
            Scheme::Mrt => realization.beta.clone(),
            Scheme::Zf => &realization.beta - &realization.theta,
        };
        Ok(PowerMinInstance {
            scheme,
            gain,
            floor,
            delta,
            max_power,
            dl_noise,
            pilot_sets: realization.pilot_sets.clone(),
            targets: targets.clone(),
        })
    }

    pub fn num_bs(&self) -> usize {
        self.gain.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.gain.ncols()
    }

    /// Signal coefficient b[i][k] = gain[i][k] / xi_hat[k]; only defined for
    /// users with a positive target.
    pub fn signal_coeff(&self, i: usize, k: usize) -> Option<f64> {
        let xi = self.targets.xi_hat[k];
        (xi > 0.0).then(|| self.gain[(i, k)] / xi)
    }

    pub(crate) fn contaminates(&self, t: usize, k: usize) -> bool {
        t != k && self.pilot_sets[k].contains(&t)
    }
}

/// The LP of an instance plus its row bookkeeping.
#[derive(Debug, Clone)]
pub struct PowerMinLp {
    pub lp: LinearProgram,
    /// QoS row index per user; None when the zero-target row was dropped.
    pub qos_row: Vec<Option<usize>>,
    /// Power row index per BS.
    pub power_row: Vec<usize>,
}

/// Builds the power-minimization LP over variables rho[i][t] at column i*K + t.
pub fn build_powermin_lp(instance: &PowerMinInstance) -> Result<PowerMinLp> {
    let (l, k_users) = (instance.num_bs(), instance.num_users());
    let nvars = l * k_users;
    let qos_users: Vec<usize> =
        (0..k_users).filter(|&k| instance.targets.xi_hat[k] > 0.0).collect();
    let nrows = qos_users.len() + l;

    let mut a = DMatrix::zeros(nrows, nvars);
    let mut b = DVector::zeros(nrows);
    let mut qos_row = vec![None; k_users];

    for (row, &k) in qos_users.iter().enumerate() {
        qos_row[k] = Some(row);
        for i in 0..l {
            for t in 0..k_users {
                let mut coeff = instance.floor[(i, k)];
                if instance.contaminates(t, k) {
                    coeff += instance.gain[(i, k)];
                }
                if t == k {
                    coeff -= instance.signal_coeff(i, k).expect("positive target");
                }
                a[(row, i * k_users + t)] = coeff;
            }
        }
        b[row] = -instance.dl_noise;
    }
    let mut power_row = Vec::with_capacity(l);
    for i in 0..l {
        let row = qos_users.len() + i;
        power_row.push(row);
        for t in 0..k_users {
            a[(row, i * k_users + t)] = 1.0;
        }
        b[row] = instance.max_power[i];
    }

    let c = DVector::from_fn(nvars, |j, _| instance.delta[j / k_users]);
    Ok(PowerMinLp { lp: LinearProgram::new(c, a, b)?, qos_row, power_row })
}

/// Serving sets, multipliers and rule scores extracted from an optimal solve.
#[derive(Debug, Clone)]
pub struct AssociationResult {
    /// S_t per user at the association threshold.
    pub serving_sets: Vec<Vec<usize>>,
    /// QoS multipliers, one per user (zero for dropped rows).
    pub lambda: Vec<f64>,
    /// Power multipliers, one per BS.
    pub mu: Vec<f64>,
    /// score(i, t); +inf for users without a positive target.
    pub rule_scores: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct PowerMinSolution {
    pub allocation: PowerAllocation,
    pub association: AssociationResult,
    /// sum_i delta_i * (BS i radiated power).
    pub objective: f64,
    pub lp_certificate: LpCertificate,
}

#[derive(Debug, Clone)]
pub enum PowerMinOutcome {
    Feasible(Box<PowerMinSolution>),
    Infeasible,
}

impl PowerMinOutcome {
    pub fn feasible(&self) -> Option<&PowerMinSolution> {
        match self {
            PowerMinOutcome::Feasible(s) => Some(s),
            PowerMinOutcome::Infeasible => None,
        }
    }
}

/// S_t = { i : rho[i][t] > threshold }.
pub fn extract_association(rho: &PowerAllocation, threshold: f64) -> Vec<Vec<usize>> {
    rho.serving_sets(threshold)
}

pub fn solve_powermin(instance: &PowerMinInstance) -> Result<PowerMinOutcome> {
    let built = build_powermin_lp(instance)?;
    let sol = solve_lp(&built.lp)?;
    match sol.status {
        LpStatus::Infeasible => return Ok(PowerMinOutcome::Infeasible),
        LpStatus::Unbounded => {
            return Err(Error::Certificate(
                "power LP reported unbounded; objective is bounded below by zero".into(),
            ))
        }
        LpStatus::Optimal => {}
    }

    let (l, k_users) = (instance.num_bs(), instance.num_users());
    let rho = DMatrix::from_fn(l, k_users, |i, t| sol.x[i * k_users + t]);
    let allocation = PowerAllocation::from_matrix(rho)?;

    let lambda: Vec<f64> = (0..k_users)
        .map(|k| built.qos_row[k].map_or(0.0, |r| -sol.duals[r]))
        .collect();
    let mu: Vec<f64> = built.power_row.iter().map(|&r| -sol.duals[r]).collect();
    let rule_scores = rule_scores(instance, &lambda, &mu);
    let association = AssociationResult {
        serving_sets: allocation.serving_sets(ASSOCIATION_THRESHOLD_W),
        lambda,
        mu,
        rule_scores,
    };

    verify_targets(instance, &allocation)?;
    Ok(PowerMinOutcome::Feasible(Box::new(PowerMinSolution {
        objective: sol.objective_value,
        allocation,
        association,
        lp_certificate: sol.certificate,
    })))
}

/// score(i, t) for every link; +inf where no positive target exists.
fn rule_scores(instance: &PowerMinInstance, lambda: &[f64], mu: &[f64]) -> DMatrix<f64> {
    let (l, k_users) = (instance.num_bs(), instance.num_users());
    DMatrix::from_fn(l, k_users, |i, t| {
        let Some(b) = instance.signal_coeff(i, t) else { return f64::INFINITY };
        let mut num = instance.delta[i] + mu[i];
        for (k, &lam) in lambda.iter().enumerate().take(k_users) {
            if lam == 0.0 {
                continue;
            }
            num += lam * instance.floor[(i, k)];
            if instance.contaminates(t, k) {
                num += lam * instance.gain[(i, k)];
            }
        }
        num / b
    })
}

/// One link failing the optimality rule.
#[derive(Debug, Clone, Copy)]
pub struct AssociationViolation {
    pub bs: usize,
    pub user: usize,
    pub score: f64,
    pub min_score: f64,
}

#[derive(Debug, Clone)]
pub struct AssociationCheckReport {
    pub violations: Vec<AssociationViolation>,
    /// Per-user minimum score (+inf where undefined).
    pub min_scores: Vec<f64>,
}

impl AssociationCheckReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verifies that every serving BS (rho > threshold) attains the per-user
/// minimum score within `tol` relative: the first-order optimality rule.
pub fn association_rule_check(
    instance: &PowerMinInstance,
    association: &AssociationResult,
    rho: &PowerAllocation,
    tol: f64,
) -> AssociationCheckReport {
    let (l, k_users) = (instance.num_bs(), instance.num_users());
    let scores = &association.rule_scores;
    let min_scores: Vec<f64> = (0..k_users)
        .map(|t| (0..l).map(|i| scores[(i, t)]).fold(f64::INFINITY, f64::min))
        .collect();
    let mut violations = Vec::new();
    for t in 0..k_users {
        if instance.targets.xi_hat[t] <= 0.0 {
            continue;
        }
        for i in 0..l {
            if rho.rho[(i, t)] > ASSOCIATION_THRESHOLD_W
                && scores[(i, t)] > min_scores[t] * (1.0 + tol) + f64::MIN_POSITIVE
            {
                violations.push(AssociationViolation {
                    bs: i,
                    user: t,
                    score: scores[(i, t)],
                    min_score: min_scores[t],
                });
            }
        }
    }
    AssociationCheckReport { violations, min_scores }
}

/// Solves the instance with each user pinned to a single allowed BS (all
/// other links fixed at zero). Returns the expanded allocation when
/// feasible. The max-SNR baseline passes `allowed[t] = argmax_i beta[i][t]`.
pub fn solve_powermin_restricted(
    instance: &PowerMinInstance,
    allowed: &[usize],
) -> Result<Option<PowerAllocation>> {
    let (l, k_users) = (instance.num_bs(), instance.num_users());
    if allowed.len() != k_users {
        return Err(Error::Domain("one allowed BS per user required".into()));
    }
    if let Some(&bad) = allowed.iter().find(|&&i| i >= l) {
        return Err(Error::Domain(format!("allowed BS index {bad} out of range")));
    }

    let qos_users: Vec<usize> =
        (0..k_users).filter(|&k| instance.targets.xi_hat[k] > 0.0).collect();
    let nrows = qos_users.len() + l;
    let mut a = DMatrix::zeros(nrows, k_users);
    let mut b = DVector::zeros(nrows);
    for (row, &k) in qos_users.iter().enumerate() {
        for t in 0..k_users {
            let i = allowed[t];
            let mut coeff = instance.floor[(i, k)];
            if instance.contaminates(t, k) {
                coeff += instance.gain[(i, k)];
            }
            if t == k {
                coeff -= instance.signal_coeff(i, k).expect("positive target");
            }
            a[(row, t)] = coeff;
        }
        b[row] = -instance.dl_noise;
    }
    for i in 0..l {
        let row = qos_users.len() + i;
        for t in 0..k_users {
            if allowed[t] == i {
                a[(row, t)] = 1.0;
            }
        }
        b[row] = instance.max_power[i];
    }
    let c = DVector::from_fn(k_users, |t, _| instance.delta[allowed[t]]);

    let sol = solve_lp(&LinearProgram::new(c, a, b)?)?;
    match sol.status {
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(Error::Certificate(
            "restricted power LP reported unbounded; objective is bounded below".into(),
        )),
        LpStatus::Optimal => {
            let mut rho = DMatrix::zeros(l, k_users);
            for t in 0..k_users {
                rho[(allowed[t], t)] = sol.x[t];
            }
            let allocation = PowerAllocation::from_matrix(rho)?;
            verify_targets(instance, &allocation)?;
            Ok(Some(allocation))
        }
    }
}

/// Re-evaluates the closed-form SINR of a solved allocation against the
/// instance targets and the power budgets.
pub fn verify_targets(instance: &PowerMinInstance, rho: &PowerAllocation) -> Result<()> {
    let sinr = instance_sinr(instance, rho);
    for (k, (&got, &want)) in sinr.iter().zip(&instance.targets.xi_hat).enumerate() {
        if got < want * (1.0 - TARGET_RECHECK_TOL) {
            return Err(Error::Certificate(format!(
                "user {k} SINR {got:.6e} misses target {want:.6e}"
            )));
        }
    }
    for (i, (&used, &cap)) in
        rho.per_bs_power().iter().zip(&instance.max_power).enumerate()
    {
        if used > cap * (1.0 + 1e-9) + 1e-15 {
            return Err(Error::Certificate(format!(
                "BS {i} radiates {used:.6e} W over its {cap:.6e} W budget"
            )));
        }
    }
    Ok(())
}

/// Closed-form SINR evaluated directly from the instance's scheme-resolved
/// matrices (identical to the sebounds closed forms).
pub fn instance_sinr(instance: &PowerMinInstance, rho: &PowerAllocation) -> Vec<f64> {
    let (l, k_users) = (instance.num_bs(), instance.num_users());
    (0..k_users)
        .map(|k| {
            let mut signal = 0.0;
            let mut den = instance.dl_noise;
            for i in 0..l {
                signal += rho.rho[(i, k)] * instance.gain[(i, k)];
                for t in 0..k_users {
                    den += rho.rho[(i, t)] * instance.floor[(i, k)];
                    if instance.contaminates(t, k) {
                        den += rho.rho[(i, t)] * instance.gain[(i, k)];
                    }
                }
            }
            signal / den
        })
        .collect()
}
