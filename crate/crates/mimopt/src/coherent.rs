//! Coherent joint transmission: every BS serving a user sends the same data
//! symbol, so the received signal amplitudes add before squaring.
//!
//! With per-link amplitudes u[i][t] = sqrt(rho[i][t]) the achievable SINR is
//!
//! ```text
//!              (sum_i sqrt(rho[i][k] g[i][k]))^2
//! SINR_k = -----------------------------------------------------------
//!          sum_i sum_{t in P_k\{k}} rho[i][t] g[i][k]
//!            + sum_i sum_t rho[i][t] z[i][k] + sigma^2
//! ```
//!
//! with the same per-scheme constants as the non-coherent closed forms
//! (g = M theta / z = beta for MRT, g = (M-K) theta / z = beta - theta for
//! ZF). Power minimization under SINR targets becomes a second-order cone
//! program in u: per user, the cone row stacks sqrt(xi_hat (z[i][k] +
//! g[i][k] 1[t in P_k\{k}])) u[i][t] over all links plus the constant
//! sqrt(xi_hat) sigma, so its squared norm expands to exactly xi_hat times
//! the SINR denominator, while the affine side is sum_i sqrt(g[i][k]) u[i][k];
//! per BS, ||u_i|| <= sqrt(P_max_i).
//!
//! The solver is a log-barrier interior-point method. Each cone
//! t(u) >= ||x(u)|| carries the barrier -log(t^2 - ||x||^2) with parameter 2,
//! giving nu = 2 (active users + BSs) in total. Phase 1 minimizes a shared
//! slack added to the affine side of every QoS cone (the relaxation keeps
//! the rows second-order cones, unlike a slack on the squared form); a
//! negative optimum yields a strictly interior start, a provably positive
//! lower bound certifies infeasibility. Phase 2 follows the central path on
//! the power objective, periodically renormalizing the power scale so the
//! working objective stays near 1 (the remap u -> u/gamma, t -> t gamma^2 is
//! exact and preserves centering). Multipliers read off the central point
//! (lambda_c = 1/(t F_c)) give the KKT certificate; solutions failing the
//! 1e-6 residual thresholds are reported as errors, never returned silently.
//!
//! Infeasible targets and iteration exhaustion are kept distinct: the former
//! is a normal [`CoherentOutcome::Infeasible`], the latter an `Error::Socp`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::maxmin::{bisect_feasibility, MaxMinOptions, MaxMinResult};
use crate::model::NetworkRealization;
use crate::powermin::PowerMinInstance;
use crate::sebounds::{PowerAllocation, Scheme, SinrTargets};
use crate::{Error, Result};

/// Relative duality-gap target of phase 2.
const GAP_REL: f64 = 5e-9;
/// Objective floor for the relative gap test (scaled units).
const GAP_FLOOR: f64 = 1e-3;
/// Phase-1 gap at which the slack optimum is considered resolved.
const PHASE1_GAP: f64 = 1e-10;
/// Slack level accepted as a comfortable interior margin (normalized cones).
const EARLY_ACCEPT: f64 = 1e-4;
/// Slack lower bounds above this value certify infeasibility.
const INFEAS_MARGIN: f64 = 1e-9;
/// Barrier parameter growth per outer step.
const MU: f64 = 10.0;
/// Newton decrement targets for path steps and the final polish.
const CENTER_TOL: f64 = 1e-7;
const FINAL_CENTER_TOL: f64 = 1e-9;
/// Decrement below which pure (undamped) Newton steps are taken.
const DAMPED_THRESHOLD: f64 = 0.25;
/// Stagnated centering is accepted below this decrement (well inside the
/// quadratic basin); the KKT certificate still judges the point reached.
const STALL_ACCEPT: f64 = 1e-3;
/// Strict-feasibility floor relative to a cone's term magnitudes.
const F_FLOOR: f64 = 1e-15;
const ARMIJO: f64 = 0.01;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 90;
const MAX_OUTER: usize = 200;
const NEWTON_BUDGET: usize = 20_000;

/// KKT residuals of a reported optimum, all in the solver's scaled units.
#[derive(Debug, Clone, Copy)]
pub struct CoherentCertificate {
    /// ||grad f - sum lambda_c grad F_c||_inf / max(1, ||grad f||_inf).
    pub stationarity: f64,
    /// Duality gap nu/t over max(1, objective).
    pub comp_slackness: f64,
    /// Smallest normalized QoS cone margin (> 0: strictly feasible).
    pub min_cone_margin: f64,
    /// Smallest normalized power-cap margin (> 0).
    pub min_power_margin: f64,
}

#[derive(Debug, Clone)]
pub struct CoherentSolution {
    pub allocation: PowerAllocation,
    /// sum_i delta_i * (BS i radiated power), watts.
    pub objective: f64,
    pub certificate: CoherentCertificate,
    pub newton_steps: usize,
}

#[derive(Debug, Clone)]
pub enum CoherentOutcome {
    Feasible(Box<CoherentSolution>),
    Infeasible,
}

impl CoherentOutcome {
    pub fn feasible(&self) -> Option<&CoherentSolution> {
        match self {
            CoherentOutcome::Feasible(s) => Some(s),
            CoherentOutcome::Infeasible => None,
        }
    }
}

/// Coherent SINR per user for a given power allocation.
pub fn coherent_sinr(
    realization: &NetworkRealization,
    rho: &PowerAllocation,
    scheme: Scheme,
    dl_noise: f64,
) -> Result<Vec<f64>> {
    if rho.num_bs() != realization.num_bs() || rho.num_users() != realization.num_users() {
        return Err(Error::Domain("allocation shape does not match the network".into()));
    }
    let f = scheme.array_factor(realization.config.antennas_per_bs, realization.num_users())?;
    let gain = &realization.theta * f;
    let floor = match scheme {
        Scheme::Mrt => realization.beta.clone(),
        Scheme::Zf => &realization.beta - &realization.theta,
    };
    Ok(coherent_sinr_from(&gain, &floor, &realization.pilot_sets, rho, dl_noise))
}

/// Same, from scheme-resolved matrices.
pub fn coherent_sinr_from(
    gain: &DMatrix<f64>,
    floor: &DMatrix<f64>,
    pilot_sets: &[Vec<usize>],
    rho: &PowerAllocation,
    dl_noise: f64,
) -> Vec<f64> {
    let (l, k_users) = (gain.nrows(), gain.ncols());
    (0..k_users)
        .map(|k| {
            let amp: f64 =
                (0..l).map(|i| (rho.rho[(i, k)] * gain[(i, k)]).sqrt()).sum();
            let mut den = dl_noise;
            for i in 0..l {
                for t in 0..k_users {
                    den += rho.rho[(i, t)] * floor[(i, k)];
                    if t != k && pilot_sets[k].contains(&t) {
                        den += rho.rho[(i, t)] * gain[(i, k)];
                    }
                }
            }
            amp * amp / den
        })
        .collect()
}

/// One barrier constraint F(w) = (a^T w)^2 - sum_j q_j w_j^2 - s >= 0.
///
/// QoS cones have a != 0 and require a^T w > 0 (the correct cone branch);
/// power caps are the a = 0, s = -cap special case.
struct ConeRow {
    a: DVector<f64>,
    q: DVector<f64>,
    s: f64,
    needs_pos: bool,
}

impl ConeRow {
    /// (a^T w, sum q w^2, term magnitude) at w.
    fn parts(&self, w: &DVector<f64>) -> (f64, f64, f64) {
        let ua = self.a.dot(w);
        let quad: f64 = self.q.iter().zip(w.iter()).map(|(&q, &x)| q * x * x).sum();
        (ua, quad, ua * ua + quad + self.s.abs())
    }

    /// Constraint value when strictly feasible (beyond cancellation noise).
    fn strict_value(&self, w: &DVector<f64>) -> Option<f64> {
        let (ua, quad, terms) = self.parts(w);
        if self.needs_pos && ua <= 0.0 {
            return None;
        }
        let f = ua * ua - quad - self.s;
        (f > F_FLOOR * terms).then_some(f)
    }
}

/// Damped-Newton minimizer of t * f0(w) + sum_c -log F_c(w), with
/// f0(w) = lin^T w + sum_j quad_j w_j^2.
struct Barrier {
    lin: DVector<f64>,
    quad: DVector<f64>,
    cones: Vec<ConeRow>,
    w: DVector<f64>,
    t: f64,
    steps_left: usize,
}

impl Barrier {
    fn nu(&self) -> f64 {
        2.0 * self.cones.len() as f64
    }

    fn f0(&self) -> f64 {
        self.f0_at(&self.w)
    }

    fn f0_at(&self, w: &DVector<f64>) -> f64 {
        self.lin.dot(w) + self.quad.iter().zip(w.iter()).map(|(&d, &x)| d * x * x).sum::<f64>()
    }

    fn strictly_feasible(&self, w: &DVector<f64>) -> bool {
        self.cones.iter().all(|c| c.strict_value(w).is_some())
    }

    fn phi_at(&self, w: &DVector<f64>) -> Option<f64> {
        let mut phi = self.t * self.f0_at(w);
        for c in &self.cones {
            phi -= c.strict_value(w)?.ln();
        }
        Some(phi)
    }

    fn derivatives(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.w.len();
        let mut g = DVector::from_fn(n, |j, _| {
            self.t * (self.lin[j] + 2.0 * self.quad[j] * self.w[j])
        });
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            h[(j, j)] = 2.0 * self.t * self.quad[j];
        }
        for c in &self.cones {
            let (ua, quad, _) = c.parts(&self.w);
            let f = ua * ua - quad - c.s;
            let qw = DVector::from_fn(n, |j, _| c.q[j] * self.w[j]);
            let gf = &c.a * (2.0 * ua) - &qw * 2.0;
            g.axpy(-1.0 / f, &gf, 1.0);
            h.ger(1.0 / (f * f), &gf, &gf, 1.0);
            h.ger(-2.0 / f, &c.a, &c.a, 1.0);
            for j in 0..n {
                h[(j, j)] += 2.0 * c.q[j] / f;
            }
        }
        (g, h)
    }

    /// Newton iterations until the decrement drops below `dec_tol` or the
    /// floating-point floor. Centering may legitimately bottom out above an
    /// aggressive tolerance (gradient terms cancel to roundoff at heavily
    /// weighted barriers), so stagnation ends the loop instead of spinning;
    /// the KKT certificate computed afterwards judges the point reached.
    fn center(&mut self, dec_tol: f64) -> Result<()> {
        let mut best_dec2 = f64::INFINITY;
        let mut stagnant = 0usize;
        loop {
            if self.steps_left == 0 {
                return Err(Error::Socp("Newton iteration budget exhausted".into()));
            }
            self.steps_left -= 1;
            let (g, h) = self.derivatives();
            let delta = solve_spd(&h, &g)?;
            let dec2 = g.dot(&delta);
            if !dec2.is_finite() {
                return Err(Error::Socp("Newton decrement is not finite".into()));
            }
            if dec2 <= dec_tol * dec_tol {
                return Ok(());
            }
            if dec2 < 0.5 * best_dec2 {
                best_dec2 = dec2;
                stagnant = 0;
            } else {
                stagnant += 1;
                if stagnant >= 12 {
                    return if dec2 <= STALL_ACCEPT * STALL_ACCEPT {
                        Ok(())
                    } else {
                        Err(Error::Socp(format!(
                            "centering stalled at Newton decrement {:.3e}",
                            dec2.sqrt()
                        )))
                    };
                }
            }
            let dec = dec2.sqrt();
            let mut alpha = 1.0;
            let mut accepted = false;
            if dec <= DAMPED_THRESHOLD {
                // Quadratic-convergence region: step as far as the domain
                // allows without comparing barrier values (their magnitude
                // can dwarf the decrement in floating point).
                for _ in 0..MAX_BACKTRACKS {
                    let trial = &self.w - &delta * alpha;
                    if self.strictly_feasible(&trial) {
                        let moved = trial != self.w;
                        self.w = trial;
                        if !moved {
                            return Ok(());
                        }
                        accepted = true;
                        break;
                    }
                    alpha *= BACKTRACK;
                }
            } else {
                let phi0 = self
                    .phi_at(&self.w)
                    .ok_or_else(|| Error::Socp("iterate left the cone interior".into()))?;
                for _ in 0..MAX_BACKTRACKS {
                    let trial = &self.w - &delta * alpha;
                    if let Some(phi) = self.phi_at(&trial) {
                        if phi <= phi0 - ARMIJO * alpha * dec2 {
                            let moved = trial != self.w;
                            self.w = trial;
                            if !moved {
                                return Ok(());
                            }
                            accepted = true;
                            break;
                        }
                    }
                    alpha *= BACKTRACK;
                }
            }
            if !accepted {
                return Err(Error::Socp("line search failed to make progress".into()));
            }
        }
    }
}

fn solve_spd(h: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let n = h.nrows();
    let mean_diag = (0..n).map(|j| h[(j, j)].abs()).sum::<f64>() / n as f64;
    let mut ridge = 0.0;
    for _ in 0..5 {
        let mut m = h.clone();
        if ridge > 0.0 {
            for j in 0..n {
                m[(j, j)] += ridge;
            }
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(chol.solve(g));
        }
        ridge = if ridge == 0.0 { 1e-14 * mean_diag.max(1e-300) } else { ridge * 100.0 };
    }
    Err(Error::Socp("Newton system is numerically indefinite".into()))
}

/// Normalized cone rows for the instance at a given power scale. `slack`
/// appends one column and adds it to the affine side of every QoS cone.
fn build_cones(
    instance: &PowerMinInstance,
    active: &[usize],
    p_scale: f64,
    slack: bool,
) -> Vec<ConeRow> {
    let (l, k_users) = (instance.num_bs(), instance.num_users());
    let nv = l * k_users;
    let n = nv + slack as usize;
    let mut cones = Vec::with_capacity(active.len() + l);
    for &k in active {
        let xi = instance.targets.xi_hat[k];
        let mut a = DVector::zeros(n);
        let mut q = DVector::zeros(n);
        for i in 0..l {
            a[i * k_users + k] = (instance.gain[(i, k)] * p_scale).sqrt();
            for t in 0..k_users {
                let mut z = instance.floor[(i, k)];
                if instance.contaminates(t, k) {
                    z += instance.gain[(i, k)];
                }
                q[i * k_users + t] = xi * p_scale * z;
            }
        }
        let s = xi * instance.dl_noise;
        let scale = a
            .iter()
            .map(|v| v * v)
            .chain(q.iter().copied())
            .fold(s.abs(), f64::max)
            .max(f64::MIN_POSITIVE);
        a /= scale.sqrt();
        q /= scale;
        let s = s / scale;
        if slack {
            a[nv] = 1.0;
        }
        cones.push(ConeRow { a, q, s, needs_pos: true });
    }
    for i in 0..l {
        let mut q = DVector::zeros(n);
        for t in 0..k_users {
            q[i * k_users + t] = 1.0;
        }
        cones.push(ConeRow {
            a: DVector::zeros(n),
            q,
            s: -instance.max_power[i] / p_scale,
            needs_pos: false,
        });
    }
    cones
}

/// Start well inside every power cap: rho[i][t] = P_max_i / (4K).
fn generic_start(instance: &PowerMinInstance, p_scale: f64) -> DVector<f64> {
    let (l, k_users) = (instance.num_bs(), instance.num_users());
    DVector::from_fn(l * k_users, |j, _| {
        (0.25 * instance.max_power[j / k_users] / p_scale / k_users as f64).sqrt()
    })
}

/// Worst normalized QoS deficit at v: negative means strictly interior.
fn worst_deficit(cones: &[ConeRow], num_qos: usize, v: &DVector<f64>) -> f64 {
    cones[..num_qos]
        .iter()
        .map(|c| {
            let (ua, quad, _) = c.parts(v);
            (quad + c.s).max(0.0).sqrt() - ua
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Phase 1: minimize the shared cone slack. Ok(Some(v)) is strictly
/// interior, Ok(None) certifies that no interior point exists.
fn find_interior(
    instance: &PowerMinInstance,
    active: &[usize],
    p_scale: f64,
    steps: &mut usize,
) -> Result<Option<DVector<f64>>> {
    let v0 = generic_start(instance, p_scale);
    let cones_plain = build_cones(instance, active, p_scale, false);
    if worst_deficit(&cones_plain, active.len(), &v0) <= -EARLY_ACCEPT {
        return Ok(Some(v0));
    }

    let cones = build_cones(instance, active, p_scale, true);
    let nv = v0.len();
    let tau0 = worst_deficit(&cones_plain, active.len(), &v0) + 1.0;
    let mut w0 = DVector::zeros(nv + 1);
    w0.rows_mut(0, nv).copy_from(&v0);
    w0[nv] = tau0;

    let mut lin = DVector::zeros(nv + 1);
    lin[nv] = 1.0;
    let mut barrier = Barrier {
        lin,
        quad: DVector::zeros(nv + 1),
        cones,
        w: w0,
        t: 1.0,
        steps_left: *steps,
    };
    let nu = barrier.nu();
    let mut outcome = None;
    for _ in 0..MAX_OUTER {
        barrier.center(CENTER_TOL)?;
        let tau = barrier.w[nv];
        let gap = nu / barrier.t;
        if tau <= -EARLY_ACCEPT {
            outcome = Some(true);
            break;
        }
        if tau - gap > INFEAS_MARGIN {
            outcome = Some(false);
            break;
        }
        if gap <= PHASE1_GAP * tau.abs().max(1.0) {
            outcome = Some(tau < -INFEAS_MARGIN);
            break;
        }
        barrier.t *= MU;
    }
    *steps = barrier.steps_left;
    match outcome {
        Some(true) => Ok(Some(barrier.w.rows(0, nv).into_owned())),
        Some(false) => Ok(None),
        None => Err(Error::Socp("phase 1 exceeded its outer iteration limit".into())),
    }
}

/// Solves the coherent power minimization for the instance's targets.
pub fn solve_coherent_powermin_instance(instance: &PowerMinInstance) -> Result<CoherentOutcome> {
    let (l, k_users) = (instance.num_bs(), instance.num_users());
    if instance.delta.iter().any(|&d| d.is_nan() || d <= 0.0) {
        return Err(Error::Domain("amplifier weights must be > 0".into()));
    }
    let bad_power = instance.max_power.iter().any(|&p| p.is_nan() || p <= 0.0);
    if bad_power || instance.dl_noise.is_nan() || instance.dl_noise <= 0.0 {
        return Err(Error::Domain("power budgets and noise must be > 0".into()));
    }
    let active: Vec<usize> =
        (0..k_users).filter(|&k| instance.targets.xi_hat[k] > 0.0).collect();
    if active.is_empty() {
        return Ok(CoherentOutcome::Feasible(Box::new(CoherentSolution {
            allocation: PowerAllocation::zeros(l, k_users),
            objective: 0.0,
            certificate: CoherentCertificate {
                stationarity: 0.0,
                comp_slackness: 0.0,
                min_cone_margin: f64::INFINITY,
                min_power_margin: f64::INFINITY,
            },
            newton_steps: 0,
        })));
    }

    let mut steps = NEWTON_BUDGET;
    let mut p_scale = instance.max_power.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
    let Some(v) = find_interior(instance, &active, p_scale, &mut steps)? else {
        return Ok(CoherentOutcome::Infeasible);
    };

    let d = DVector::from_fn(l * k_users, |j, _| instance.delta[j / k_users]);
    let mut barrier = Barrier {
        lin: DVector::zeros(l * k_users),
        quad: d.clone(),
        cones: build_cones(instance, &active, p_scale, false),
        w: v,
        t: 1.0,
        steps_left: steps,
    };
    let nu = barrier.nu();
    barrier.t = nu / barrier.f0().max(GAP_FLOOR);

    let mut converged = false;
    for _ in 0..MAX_OUTER {
        barrier.center(CENTER_TOL)?;
        let f0 = barrier.f0();
        if !(0.05..=20.0).contains(&f0) && f0 > 0.0 && f0.is_finite() {
            // Renormalize so the working objective sits near 1; the remap
            // w -> w/gamma with t -> t gamma^2 is exact and stays centered.
            let gamma = f0.sqrt();
            p_scale *= f0;
            barrier.w /= gamma;
            barrier.t *= f0;
            barrier.cones = build_cones(instance, &active, p_scale, false);
            continue;
        }
        if nu / barrier.t <= GAP_REL * f0.max(GAP_FLOOR) {
            converged = true;
            break;
        }
        barrier.t *= MU;
    }
    if !converged {
        return Err(Error::Socp("phase 2 exceeded its outer iteration limit".into()));
    }
    barrier.center(FINAL_CENTER_TOL)?;

    let certificate = certify(&barrier, active.len())?;
    let rho = DMatrix::from_fn(l, k_users, |i, t| {
        let v = barrier.w[i * k_users + t];
        p_scale * v * v
    });
    let allocation = PowerAllocation::from_matrix(rho)?;

    // Re-verify the physical constraints on the returned powers.
    let sinr = coherent_sinr_from(
        &instance.gain,
        &instance.floor,
        &instance.pilot_sets,
        &allocation,
        instance.dl_noise,
    );
    for (k, (&got, &want)) in sinr.iter().zip(&instance.targets.xi_hat).enumerate() {
        if got < want * (1.0 - 1e-6) {
            return Err(Error::Socp(format!(
                "user {k} coherent SINR {got:.6e} misses target {want:.6e}"
            )));
        }
    }
    for (i, (&used, &cap)) in
        allocation.per_bs_power().iter().zip(&instance.max_power).enumerate()
    {
        if used > cap * (1.0 + 1e-6) {
            return Err(Error::Socp(format!(
                "BS {i} radiates {used:.6e} W over its {cap:.6e} W budget"
            )));
        }
    }

    let objective = allocation.weighted_total(&instance.delta);
    Ok(CoherentOutcome::Feasible(Box::new(CoherentSolution {
        allocation,
        objective,
        certificate,
        newton_steps: NEWTON_BUDGET - barrier.steps_left,
    })))
}

fn certify(barrier: &Barrier, num_qos: usize) -> Result<CoherentCertificate> {
    let n = barrier.w.len();
    let grad_f = DVector::from_fn(n, |j, _| 2.0 * barrier.quad[j] * barrier.w[j]);
    let mut min_cone = f64::INFINITY;
    let mut min_power = f64::INFINITY;
    let mut gfs = Vec::with_capacity(barrier.cones.len());
    let mut lambda0 = Vec::with_capacity(barrier.cones.len());
    let mut values = Vec::with_capacity(barrier.cones.len());
    for (c_idx, c) in barrier.cones.iter().enumerate() {
        let f = c
            .strict_value(&barrier.w)
            .ok_or_else(|| Error::Socp("final iterate is not strictly feasible".into()))?;
        if c_idx < num_qos {
            min_cone = min_cone.min(f);
        } else {
            min_power = min_power.min(f);
        }
        let (ua, _, _) = c.parts(&barrier.w);
        let qw = DVector::from_fn(n, |j, _| c.q[j] * barrier.w[j]);
        gfs.push(&c.a * (2.0 * ua) - &qw * 2.0);
        lambda0.push(1.0 / (barrier.t * f));
        values.push(f);
    }
    let inf_norm = |v: &DVector<f64>| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let grade = |lambda: &[f64]| {
        let mut residual = grad_f.clone();
        let mut comp = 0.0;
        for ((&l, gf), &f) in lambda.iter().zip(&gfs).zip(&values) {
            residual.axpy(-l, gf, 1.0);
            comp += l * f;
        }
        (
            inf_norm(&residual) / inf_norm(&grad_f).max(1.0),
            comp / barrier.f0().max(1.0),
        )
    };
    // The barrier multipliers 1/(t F) are a valid dual guess, but Newton can
    // bottom out in floating point with a stiff-direction gradient component
    // they cannot absorb. Refit the near-binding multipliers by least squares
    // and keep whichever candidate certifies better.
    let lambda = match refit_multipliers(&grad_f, &gfs, &lambda0) {
        Some(refit) => {
            let (s0, c0) = grade(&lambda0);
            let (s1, c1) = grade(&refit);
            if s1.max(c1) < s0.max(c0) {
                refit
            } else {
                lambda0
            }
        }
        None => lambda0,
    };
    let (stationarity, comp_slackness) = grade(&lambda);
    let certificate = CoherentCertificate {
        stationarity,
        comp_slackness,
        min_cone_margin: min_cone,
        min_power_margin: min_power,
    };
    if certificate.stationarity > 1e-6
        || certificate.comp_slackness > 1e-6
        || certificate.min_cone_margin < 0.0
        || certificate.min_power_margin < 0.0
    {
        return Err(Error::Socp(format!(
            "optimum failed certification: stationarity {:.3e}, gap {:.3e}",
            certificate.stationarity, certificate.comp_slackness
        )));
    }
    Ok(certificate)
}

/// Least-squares fit of the near-binding multipliers to the objective
/// gradient, clipped to stay dual-feasible. Slack constraints keep their
/// (negligible) barrier values so complementarity stays measured honestly.
fn refit_multipliers(
    grad_f: &DVector<f64>,
    gfs: &[DVector<f64>],
    lambda0: &[f64],
) -> Option<Vec<f64>> {
    let lambda_max = lambda0.iter().fold(0.0f64, |m, &l| m.max(l));
    if lambda_max <= 0.0 {
        return None;
    }
    let active: Vec<usize> = (0..lambda0.len())
        .filter(|&c| lambda0[c] > 1e-8 * lambda_max)
        .collect();
    if active.is_empty() {
        return None;
    }
    let a = active.len();
    let mut gram = DMatrix::zeros(a, a);
    let mut rhs = DVector::zeros(a);
    for (i, &ci) in active.iter().enumerate() {
        rhs[i] = gfs[ci].dot(grad_f);
        for (j, &cj) in active.iter().enumerate().skip(i) {
            let v = gfs[ci].dot(&gfs[cj]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let fit = solve_spd(&gram, &rhs).ok()?;
    let mut lambda = lambda0.to_vec();
    for (i, &c) in active.iter().enumerate() {
        lambda[c] = fit[i].max(0.0);
    }
    Some(lambda)
}

pub fn solve_coherent_powermin(
    realization: &NetworkRealization,
    targets: &SinrTargets,
    scheme: Scheme,
) -> Result<CoherentOutcome> {
    let instance = PowerMinInstance::new(realization, targets, scheme)?;
    solve_coherent_powermin_instance(&instance)
}

/// Search ceiling for coherent max-min: coherent combining can outgrow the
/// non-coherent SINR caps by at most the BS count (Cauchy-Schwarz on the
/// amplitude sum), so each per-user cap gains a factor L.
pub fn coherent_upper_bound_xi0(
    realization: &NetworkRealization,
    scheme: Scheme,
    weights: &[f64],
) -> Result<f64> {
    let cfg = &realization.config;
    let k_users = realization.num_users();
    if weights.len() != k_users || weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
        return Err(Error::Domain("need one positive weight per user".into()));
    }
    let l = realization.num_bs() as f64;
    let m = cfg.antennas_per_bs as f64;
    let bound = match scheme {
        Scheme::Mrt => {
            let cap = (1.0 + l * m).log2();
            weights.iter().map(|w| cap / w).fold(f64::INFINITY, f64::min)
        }
        Scheme::Zf => {
            let f = scheme.array_factor(cfg.antennas_per_bs, k_users)?;
            (0..k_users)
                .map(|k| {
                    let snr = cfg.pilot_power[k] * cfg.pilot_length as f64 / cfg.ul_noise;
                    let beta_sum: f64 =
                        (0..realization.num_bs()).map(|i| realization.beta[(i, k)]).sum();
                    (1.0 + l * f * snr * beta_sum).log2() / weights[k]
                })
                .fold(f64::INFINITY, f64::min)
        }
    };
    Ok(cfg.rate_prefactor() * bound)
}

/// Max-min QoS with the coherent feasibility oracle.
pub fn coherent_maxmin(
    realization: &NetworkRealization,
    scheme: Scheme,
    weights: &[f64],
    delta: f64,
) -> Result<MaxMinResult> {
    let xi0 = coherent_upper_bound_xi0(realization, scheme, weights)?;
    let cfg = &realization.config;
    let mut result = bisect_feasibility(
        xi0,
        MaxMinOptions { delta, ..MaxMinOptions::default() },
        |xi| {
            let targets = SinrTargets::from_weighted_rate(
                weights,
                xi,
                cfg.dl_fraction,
                cfg.pilot_length,
                cfg.coherence_length,
            )?;
            let outcome = solve_coherent_powermin(realization, &targets, scheme)?;
            Ok(outcome.feasible().map(|s| s.allocation.clone()))
        },
    )?;
    if result.allocation.num_users() == 0 {
        result.allocation =
            PowerAllocation::zeros(realization.num_bs(), realization.num_users());
    }
    Ok(result)
}
