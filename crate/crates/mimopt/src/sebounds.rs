//! Ergodic spectral-efficiency lower bounds for the downlink.
//!
//! Everything here reduces to one hardening-style bound: with per-BS gain
//! statistics `E{h^H w}` (mean gain) and `E{|h^H w|^2}` (second moments), the
//! effective SINR of user k under non-coherent multi-BS transmission is
//!
//! ```text
//!            sum_i rho[i][k] |mean[i][k]|^2
//! SINR_k = ---------------------------------------------------------------
//!            sum_i sum_t rho[i][t] second[i][k][t]
//!              - sum_i rho[i][k] |mean[i][k]|^2  +  dl_noise
//! ```
//!
//! and the rate is `dl_fraction * (1 - tau_p/tau_c) * log2(1 + SINR_k)`.
//! [`sinr_per_bs`] exposes the per-BS decomposition of the same bound under
//! successive decoding; the per-BS rates sum exactly to the total (the
//! denominators telescope), and the total is invariant to the decoding order.
//!
//! For MRT and ZF precoding built on MMSE channel estimates the statistics
//! collapse to closed forms in (beta, theta) alone (see
//! [`GainStatistics::closed_form`]), giving [`sinr_mrt`] and [`sinr_zf`]:
//! an array gain `M` (MRT) or `M - K` (ZF) on the estimate quality theta, an
//! interference floor weighted by beta (MRT) or beta - theta (ZF), and an
//! `M`-scaled pilot-contamination term over the pilot set `P_k \ {k}`. As
//! `M -> inf` both converge to the contamination-limited ratio exposed by
//! [`sinr_asymptotic`].

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::model::NetworkRealization;
use crate::{Error, Result};

/// Linear precoding scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Mrt,
    Zf,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Mrt => "MRT",
            Scheme::Zf => "ZF",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mrt" => Ok(Scheme::Mrt),
            "zf" => Ok(Scheme::Zf),
            other => Err(Error::Domain(format!("unknown scheme '{other}' (expected mrt|zf)"))),
        }
    }

    /// Array gain applied to theta: M for MRT, M - K for ZF.
    pub fn array_factor(&self, m: usize, k: usize) -> Result<f64> {
        match self {
            Scheme::Mrt => Ok(m as f64),
            Scheme::Zf => {
                if m < k + 1 {
                    Err(Error::ZfAntennaShortfall { m, k })
                } else {
                    Ok((m - k) as f64)
                }
            }
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// L x K matrix of downlink transmit powers in watts, rho[(i, t)] being the
/// power BS i spends on user t's stream.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub rho: DMatrix<f64>,
}

impl PowerAllocation {
    pub fn zeros(num_bs: usize, num_users: usize) -> Self {
        PowerAllocation { rho: DMatrix::zeros(num_bs, num_users) }
    }

    pub fn from_matrix(rho: DMatrix<f64>) -> Result<Self> {
        if rho.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::Domain("power allocation entries must be finite and >= 0".into()));
        }
        Ok(PowerAllocation { rho })
    }

    pub fn num_bs(&self) -> usize {
        self.rho.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.rho.ncols()
    }

    /// Radiated power per BS.
    pub fn per_bs_power(&self) -> Vec<f64> {
        (0..self.rho.nrows()).map(|i| self.rho.row(i).sum()).collect()
    }

    /// Total consumed power sum_i delta_i * sum_t rho[i][t].
    pub fn weighted_total(&self, delta: &[f64]) -> f64 {
        self.per_bs_power().iter().zip(delta).map(|(p, d)| p * d).sum()
    }

    pub fn total(&self) -> f64 {
        self.rho.sum()
    }

    /// S_t = { i : rho[i][t] > threshold } per user.
    pub fn serving_sets(&self, threshold: f64) -> Vec<Vec<usize>> {
        (0..self.num_users())
            .map(|t| (0..self.num_bs()).filter(|&i| self.rho[(i, t)] > threshold).collect())
            .collect()
    }
}

/// Per-user QoS targets: `xi` in bit/symbol and the equivalent linear SINR
/// targets `xi_hat = 2^(xi * tau_c / (dl_fraction * (tau_c - tau_p))) - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrTargets {
    pub xi: Vec<f64>,
    pub xi_hat: Vec<f64>,
}

impl SinrTargets {
    pub fn from_rates(
        xi: &[f64],
        dl_fraction: f64,
        pilot_length: usize,
        coherence_length: usize,
    ) -> Result<Self> {
        let xi_hat = xi
            .iter()
            .map(|&r| sinr_from_rate(r, dl_fraction, pilot_length, coherence_length))
            .collect::<Result<Vec<_>>>()?;
        Ok(SinrTargets { xi: xi.to_vec(), xi_hat })
    }

    /// Uniform rate target scaled by per-user weights: xi_k = w_k * rate.
    pub fn from_weighted_rate(
        weights: &[f64],
        rate: f64,
        dl_fraction: f64,
        pilot_length: usize,
        coherence_length: usize,
    ) -> Result<Self> {
        let xi: Vec<f64> = weights.iter().map(|w| w * rate).collect();
        Self::from_rates(&xi, dl_fraction, pilot_length, coherence_length)
    }

    pub fn num_users(&self) -> usize {
        self.xi.len()
    }
}

/// Effective gain statistics of the precoded channels: `mean_gain[(i, k)]` is
/// E{h_{i,k}^H w_{i,k}} and `second_moment[i][(k, t)]` is E{|h_{i,k}^H w_{i,t}|^2}.
#[derive(Debug, Clone)]
pub struct GainStatistics {
    pub mean_gain: DMatrix<Complex64>,
    pub second_moment: Vec<DMatrix<f64>>,
}

impl GainStatistics {
    pub fn num_bs(&self) -> usize {
        self.mean_gain.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.mean_gain.ncols()
    }

    /// Variance nonnegativity: E{|h^H w|^2} >= |E{h^H w}|^2 on the diagonal.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.num_bs() {
            for k in 0..self.num_users() {
                let var = self.second_moment[i][(k, k)] - self.mean_gain[(i, k)].norm_sqr();
                if var < -1e-12 * self.second_moment[i][(k, k)].abs() {
                    return Err(Error::Domain(format!(
                        "negative beamforming-gain variance at BS {i}, user {k}: {var}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Exact statistics for MRT/ZF on MMSE estimates.
    ///
    /// Mean gain is `sqrt(f * theta)` with `f` the scheme's array factor.
    /// Second moments: every interferer contributes the uncorrelated floor
    /// (`beta` for MRT, `beta - theta` for ZF); users in `P_k` additionally
    /// contribute the pilot-aligned component `f * theta[i][k]`.
    pub fn closed_form(realization: &NetworkRealization, scheme: Scheme) -> Result<Self> {
        let l = realization.num_bs();
        let k_users = realization.num_users();
        let m = realization.config.antennas_per_bs;
        let f = scheme.array_factor(m, k_users)?;
        let (beta, theta) = (&realization.beta, &realization.theta);

        let mean_gain = DMatrix::from_fn(l, k_users, |i, k| {
            Complex64::new((f * theta[(i, k)]).sqrt(), 0.0)
        });
        let second_moment = (0..l)
            .map(|i| {
                DMatrix::from_fn(k_users, k_users, |k, t| {
                    let floor = match scheme {
                        Scheme::Mrt => beta[(i, k)],
                        Scheme::Zf => beta[(i, k)] - theta[(i, k)],
                    };
                    if realization.pilot_sets[k].contains(&t) {
                        floor + f * theta[(i, k)]
                    } else {
                        floor
                    }
                })
            })
            .collect();

        Ok(GainStatistics { mean_gain, second_moment })
    }
}

/// `dl_fraction * (1 - tau_p/tau_c) * log2(1 + sinr)`, bit/symbol.
pub fn rate_from_sinr(
    sinr: f64,
    dl_fraction: f64,
    pilot_length: usize,
    coherence_length: usize,
) -> Result<f64> {
    if sinr.is_nan() || sinr < 0.0 {
        return Err(Error::Domain(format!("SINR must be >= 0, got {sinr}")));
    }
    let prefactor = dl_fraction * (1.0 - pilot_length as f64 / coherence_length as f64);
    Ok(prefactor * (1.0 + sinr).log2())
}

/// Inverse of [`rate_from_sinr`]; exact round-trip.
pub fn sinr_from_rate(
    rate: f64,
    dl_fraction: f64,
    pilot_length: usize,
    coherence_length: usize,
) -> Result<f64> {
    if rate.is_nan() || rate < 0.0 {
        return Err(Error::Domain(format!("rate must be >= 0, got {rate}")));
    }
    let prefactor = dl_fraction * (1.0 - pilot_length as f64 / coherence_length as f64);
    if prefactor <= 0.0 {
        return Err(Error::Domain("payload fraction is zero (tau_p = tau_c)".into()));
    }
    Ok((rate / prefactor).exp2() - 1.0)
}

/// Per-user SINR of the general bound; see the module docs for the formula.
pub fn sinr_general(stats: &GainStatistics, rho: &PowerAllocation, dl_noise: f64) -> Vec<f64> {
    let (l, k_users) = (stats.num_bs(), stats.num_users());
    (0..k_users)
        .map(|k| {
            let mut signal = 0.0;
            let mut cross = 0.0;
            for i in 0..l {
                signal += rho.rho[(i, k)] * stats.mean_gain[(i, k)].norm_sqr();
                for t in 0..k_users {
                    cross += rho.rho[(i, t)] * stats.second_moment[i][(k, t)];
                }
            }
            signal / (cross - signal + dl_noise)
        })
        .collect()
}

/// SINR of the (bs, user) link under successive decoding in BS order
/// 0, 1, ..., L-1: the denominator keeps the full cross power minus the
/// already-decoded signal terms of BSs 0..=bs.
pub fn sinr_per_bs(
    stats: &GainStatistics,
    rho: &PowerAllocation,
    dl_noise: f64,
    user: usize,
    bs: usize,
) -> f64 {
    let (l, k_users) = (stats.num_bs(), stats.num_users());
    let mut cross = 0.0;
    for i in 0..l {
        for t in 0..k_users {
            cross += rho.rho[(i, t)] * stats.second_moment[i][(user, t)];
        }
    }
    let mut decoded = 0.0;
    for i in 0..=bs {
        decoded += rho.rho[(i, user)] * stats.mean_gain[(i, user)].norm_sqr();
    }
    let signal = rho.rho[(bs, user)] * stats.mean_gain[(bs, user)].norm_sqr();
    signal / (cross - decoded + dl_noise)
}

/// MRT closed form from (beta, theta) with array factor `m_factor`:
///
/// ```text
///          f * sum_i rho[i][k] theta[i][k]
/// ----------------------------------------------------------------------
///  f * sum_i sum_{t in P_k\{k}} rho[i][t] theta[i][k]
///    + sum_i sum_t rho[i][t] beta[i][k] + dl_noise
/// ```
pub fn sinr_mrt_from(
    m_factor: f64,
    theta: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    pilot_sets: &[Vec<usize>],
    rho: &PowerAllocation,
    dl_noise: f64,
) -> Vec<f64> {
    let (l, k_users) = (theta.nrows(), theta.ncols());
    (0..k_users)
        .map(|k| {
            let mut signal = 0.0;
            let mut contamination = 0.0;
            let mut floor = 0.0;
            for i in 0..l {
                signal += rho.rho[(i, k)] * theta[(i, k)];
                for &t in &pilot_sets[k] {
                    if t != k {
                        contamination += rho.rho[(i, t)] * theta[(i, k)];
                    }
                }
                for t in 0..k_users {
                    floor += rho.rho[(i, t)] * beta[(i, k)];
                }
            }
            m_factor * signal / (m_factor * contamination + floor + dl_noise)
        })
        .collect()
}

/// ZF closed form: like MRT but with array factor `M - K` and the
/// interference floor weighted by the estimation-error variance beta - theta.
pub fn sinr_zf_from(
    mk_factor: f64,
    theta: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    pilot_sets: &[Vec<usize>],
    rho: &PowerAllocation,
    dl_noise: f64,
) -> Vec<f64> {
    let (l, k_users) = (theta.nrows(), theta.ncols());
    (0..k_users)
        .map(|k| {
            let mut signal = 0.0;
            let mut contamination = 0.0;
            let mut floor = 0.0;
            for i in 0..l {
                signal += rho.rho[(i, k)] * theta[(i, k)];
                for &t in &pilot_sets[k] {
                    if t != k {
                        contamination += rho.rho[(i, t)] * theta[(i, k)];
                    }
                }
                for t in 0..k_users {
                    floor += rho.rho[(i, t)] * (beta[(i, k)] - theta[(i, k)]);
                }
            }
            mk_factor * signal / (mk_factor * contamination + floor + dl_noise)
        })
        .collect()
}

pub fn sinr_mrt(
    realization: &NetworkRealization,
    rho: &PowerAllocation,
    dl_noise: f64,
) -> Vec<f64> {
    sinr_mrt_from(
        realization.config.antennas_per_bs as f64,
        &realization.theta,
        &realization.beta,
        &realization.pilot_sets,
        rho,
        dl_noise,
    )
}

pub fn sinr_zf(
    realization: &NetworkRealization,
    rho: &PowerAllocation,
    dl_noise: f64,
) -> Result<Vec<f64>> {
    let f = Scheme::Zf.array_factor(realization.config.antennas_per_bs, realization.num_users())?;
    Ok(sinr_zf_from(
        f,
        &realization.theta,
        &realization.beta,
        &realization.pilot_sets,
        rho,
        dl_noise,
    ))
}

/// Closed-form SINR for either scheme.
pub fn closed_form_sinr(
    realization: &NetworkRealization,
    rho: &PowerAllocation,
    scheme: Scheme,
    dl_noise: f64,
) -> Result<Vec<f64>> {
    match scheme {
        Scheme::Mrt => Ok(sinr_mrt(realization, rho, dl_noise)),
        Scheme::Zf => sinr_zf(realization, rho, dl_noise),
    }
}

/// Large-array SINR limit per user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AsymptoticSinr {
    Finite(f64),
    /// No pilot-contaminating power: SINR grows without bound in M.
    Unbounded,
}

/// M -> infinity limit of both closed forms: the pilot-contamination ratio
/// `sum_i rho[i][k] theta[i][k] / sum_i sum_{t in P_k\{k}} rho[i][t] theta[i][k]`.
pub fn sinr_asymptotic(realization: &NetworkRealization, rho: &PowerAllocation) -> Vec<AsymptoticSinr> {
    let l = realization.num_bs();
    (0..realization.num_users())
        .map(|k| {
            let mut signal = 0.0;
            let mut contamination = 0.0;
            for i in 0..l {
                signal += rho.rho[(i, k)] * realization.theta[(i, k)];
                for &t in &realization.pilot_sets[k] {
                    if t != k {
                        contamination += rho.rho[(i, t)] * realization.theta[(i, k)];
                    }
                }
            }
            if signal == 0.0 {
                AsymptoticSinr::Finite(0.0)
            } else if contamination == 0.0 {
                AsymptoticSinr::Unbounded
            } else {
                AsymptoticSinr::Finite(signal / contamination)
            }
        })
        .collect()
}
