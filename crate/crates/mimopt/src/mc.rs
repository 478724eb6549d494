//! Monte Carlo pipeline for the precoded-channel statistics.
//!
//! Draws Rayleigh channels, pushes them through uplink pilot transmission,
//! MMSE estimation, and MRT/ZF precoding, and estimates the gain statistics
//! (mean precoded gain, interference second moments) that the closed forms in
//! [`crate::sebounds`] predict, with standard errors.
//!
//! Sampling is lazy: a [`ChannelBatch`] stores only the network realization,
//! the sample count, and the seed. Each sample is regenerated on demand from
//! a counter-mode generator with a fixed seed and the sample index as the
//! stream, so batches of any size use constant memory, every sample is
//! reproducible in isolation, and two precoding schemes evaluated against one
//! batch see the exact same channels.
//!
//! The zero-forcing precoder is built on the per-pilot observation basis:
//! with G distinct pilots in use, the pseudo-inverse nulls the G estimated
//! directions and the analytic normalizer is (M - G) times the observation
//! variance. When every user has a private pilot (G = K) this reproduces the
//! M - K array factor of the closed forms exactly; that all-orthogonal case
//! is the regime the closed-form validation runs in.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::NetworkRealization;
use crate::sebounds::{sinr_general, GainStatistics, PowerAllocation, Scheme};
use crate::{Error, Result};

/// Standard errors come from the spread of this many equal sample slices.
const DEFAULT_BATCHES: usize = 20;
/// Retry budget for the measure-zero event of a rank-deficient pilot basis.
const MAX_RESAMPLES: usize = 32;

fn complex_normal(rng: &mut ChaCha12Rng, variance: f64) -> Complex64 {
    let half = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * half, im * half)
}

/// Lazy sample source: realization, sample count, seed, and the pilot-group
/// structure precomputed from the realization's pilot sets.
#[derive(Debug, Clone)]
pub struct ChannelBatch<'a> {
    pub realization: &'a NetworkRealization,
    pub num_samples: usize,
    pub seed: u64,
    /// Distinct pilot groups (user lists), ordered by smallest member.
    groups: Vec<Vec<usize>>,
    /// User -> index into `groups`.
    group_of: Vec<usize>,
    /// Per-antenna variance of the pilot observation, BS x group.
    obs_var: DMatrix<f64>,
    /// MMSE scaling from observation to estimate, BS x user.
    mmse_scale: DMatrix<f64>,
}

/// One channel realization: true channels, estimates, and the pilot
/// observation basis they both derive from, all per BS.
#[derive(Debug, Clone)]
pub struct ChannelDraw {
    /// True channels, M x K per BS.
    pub h: Vec<DMatrix<Complex64>>,
    /// MMSE estimates, M x K per BS; each column is a scaled basis column.
    pub hhat: Vec<DMatrix<Complex64>>,
    /// Pilot observations, M x G per BS.
    pub basis: Vec<DMatrix<Complex64>>,
}

impl ChannelDraw {
    /// Estimation error `hhat - h` at one BS.
    pub fn error(&self, bs: usize) -> DMatrix<Complex64> {
        &self.hhat[bs] - &self.h[bs]
    }
}

/// Builds the lazy sample source. Deterministic: the batch itself holds no
/// random state, and sample `i` depends only on `(seed, i)`.
pub fn sample_pilot_pipeline<'a>(
    realization: &'a NetworkRealization,
    num_samples: usize,
    seed: u64,
) -> Result<ChannelBatch<'a>> {
    if num_samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let cfg = &realization.config;
    let (l_count, k_count) = (realization.num_bs(), realization.num_users());
    let tau_p = cfg.pilot_length as f64;

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let group_of: Vec<usize> = realization
        .pilot_sets
        .iter()
        .map(|set| match groups.iter().position(|g| g == set) {
            Some(idx) => idx,
            None => {
                groups.push(set.clone());
                groups.len() - 1
            }
        })
        .collect();

    let obs_var = DMatrix::from_fn(l_count, groups.len(), |l, phi| {
        let received: f64 = groups[phi]
            .iter()
            .map(|&u| cfg.pilot_power[u] * realization.beta[(l, u)])
            .sum();
        tau_p * tau_p * received + tau_p * cfg.ul_noise
    });
    let mmse_scale = DMatrix::from_fn(l_count, k_count, |l, k| {
        cfg.pilot_power[k].sqrt() * tau_p * realization.beta[(l, k)]
            / obs_var[(l, group_of[k])]
    });

    Ok(ChannelBatch {
        realization,
        num_samples,
        seed,
        groups,
        group_of,
        obs_var,
        mmse_scale,
    })
}

impl ChannelBatch<'_> {
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Regenerates sample `idx` from scratch. Indices at and above
    /// `num_samples` are reserved for deterministic resampling.
    pub fn draw(&self, idx: u64) -> ChannelDraw {
        let r = self.realization;
        let cfg = &r.config;
        let (l_count, k_count, m) = (r.num_bs(), r.num_users(), cfg.antennas_per_bs);
        let g_count = self.groups.len();
        let tau_p = cfg.pilot_length as f64;

        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(idx);

        let mut h = Vec::with_capacity(l_count);
        let mut hhat = Vec::with_capacity(l_count);
        let mut basis = Vec::with_capacity(l_count);
        for l in 0..l_count {
            let h_l = DMatrix::from_fn(m, k_count, |_, u| {
                complex_normal(&mut rng, r.beta[(l, u)])
            });
            let mut basis_l = DMatrix::zeros(m, g_count);
            for (phi, members) in self.groups.iter().enumerate() {
                let mut y = DVector::from_fn(m, |_, _| {
                    complex_normal(&mut rng, tau_p * cfg.ul_noise)
                });
                for &u in members {
                    let c = tau_p * cfg.pilot_power[u].sqrt();
                    let one = Complex64::new(1.0, 0.0);
                    y.axpy(Complex64::new(c, 0.0), &h_l.column(u).into_owned(), one);
                }
                basis_l.set_column(phi, &y);
            }
            let hhat_l = DMatrix::from_fn(m, k_count, |row, k| {
                basis_l[(row, self.group_of[k])] * self.mmse_scale[(l, k)]
            });
            h.push(h_l);
            hhat.push(hhat_l);
            basis.push(basis_l);
        }
        ChannelDraw { h, hhat, basis }
    }
}

/// Precoding matrices (M x K per BS) for one draw, normalized so that
/// `E{||w||^2} = 1` via the analytic denominators: `M theta` for MRT, and
/// `(M - G) var(observation)` for the ZF pseudo-inverse columns.
///
/// Errors on a rank-deficient pilot-basis sample (probability zero); callers
/// running batches resample deterministically on that event.
pub fn build_precoders(
    batch: &ChannelBatch<'_>,
    draw: &ChannelDraw,
    scheme: Scheme,
) -> Result<Vec<DMatrix<Complex64>>> {
    let r = batch.realization;
    let (l_count, k_count, m) = (r.num_bs(), r.num_users(), r.config.antennas_per_bs);
    let g_count = batch.groups.len();
    let mut out = Vec::with_capacity(l_count);
    match scheme {
        Scheme::Mrt => {
            for l in 0..l_count {
                let w = DMatrix::from_fn(m, k_count, |row, k| {
                    let norm = (m as f64 * r.theta[(l, k)]).sqrt();
                    draw.hhat[l][(row, k)] / norm
                });
                out.push(w);
            }
        }
        Scheme::Zf => {
            // The array-factor precondition (M >= K + 1) also guarantees the
            // basis normalizer M - G is positive.
            scheme.array_factor(m, k_count)?;
            for l in 0..l_count {
                let gram = draw.basis[l].ad_mul(&draw.basis[l]);
                let chol = Cholesky::new(gram).ok_or_else(|| {
                    Error::Domain("pilot basis sample is rank deficient".into())
                })?;
                let pinv_cols = &draw.basis[l] * chol.inverse();
                let w = DMatrix::from_fn(m, k_count, |row, k| {
                    let phi = batch.group_of[k];
                    let norm =
                        ((m - g_count) as f64 * batch.obs_var[(l, phi)]).sqrt();
                    pinv_cols[(row, phi)] * norm
                });
                out.push(w);
            }
        }
    }
    Ok(out)
}

/// Empirical gain statistics plus standard errors from batch means.
#[derive(Debug, Clone)]
pub struct GainStatisticsEstimate {
    /// Pooled sample means over all samples, in the plug-in shape.
    pub stats: GainStatistics,
    /// Per-slice means; the spread of these gives the standard errors.
    pub batch_stats: Vec<GainStatistics>,
    /// Standard error of `stats.mean_gain` (combined real/imaginary spread).
    pub mean_gain_se: DMatrix<f64>,
    /// Standard error of each `stats.second_moment` entry.
    pub second_moment_se: Vec<DMatrix<f64>>,
    pub num_samples: usize,
    /// Rank-deficient basis samples that were redrawn (expected: zero).
    pub resampled: usize,
}

impl GainStatisticsEstimate {
    /// Effective SINR of the pooled statistics plus a per-user standard
    /// error propagated through the batch means.
    pub fn sinr_with_se(
        &self,
        rho: &PowerAllocation,
        dl_noise: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let point = sinr_general(&self.stats, rho, dl_noise);
        let per_batch: Vec<Vec<f64>> = self
            .batch_stats
            .iter()
            .map(|s| sinr_general(s, rho, dl_noise))
            .collect();
        let se = (0..point.len())
            .map(|k| standard_error(per_batch.iter().map(|b| b[k])))
            .collect();
        (point, se)
    }
}

/// Standard error of the mean of an iterator of batch values.
fn standard_error(values: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.collect();
    let b = vals.len();
    if b < 2 {
        return f64::INFINITY;
    }
    let mean = vals.iter().sum::<f64>() / b as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

/// Estimates `E{h^H w}` and `E{|h^H w|^2}` for one scheme. Shares the draw
/// loop with [`empirical_gain_statistics_for`]; see there for details.
pub fn empirical_gain_statistics(
    batch: &ChannelBatch<'_>,
    scheme: Scheme,
) -> Result<GainStatisticsEstimate> {
    let mut v = empirical_gain_statistics_for(batch, &[scheme])?;
    Ok(v.pop().expect("one scheme in, one estimate out"))
}

/// Estimates the gain statistics for several schemes over the same channel
/// samples in one pass. Samples are split into up to [`DEFAULT_BATCHES`]
/// contiguous slices; pooled means fill `stats` and the slice means drive the
/// standard errors. A rank-deficient ZF basis sample (probability zero) is
/// redrawn from the reserved stream indices at and above `num_samples`, for
/// every scheme, so the schemes keep seeing identical channels.
pub fn empirical_gain_statistics_for(
    batch: &ChannelBatch<'_>,
    schemes: &[Scheme],
) -> Result<Vec<GainStatisticsEstimate>> {
    let r = batch.realization;
    let (l_count, k_count) = (r.num_bs(), r.num_users());
    let n = batch.num_samples;
    let b_count = DEFAULT_BATCHES.min(n);

    let zero_mean = || DMatrix::<Complex64>::zeros(l_count, k_count);
    let zero_second = || vec![DMatrix::<f64>::zeros(k_count, k_count); l_count];
    let mut acc_mean = vec![vec![zero_mean(); b_count]; schemes.len()];
    let mut acc_second = vec![vec![zero_second(); b_count]; schemes.len()];

    let mut resampled = 0usize;
    for idx in 0..n {
        let slice = idx * b_count / n;
        let mut draw = batch.draw(idx as u64);
        let precoders = loop {
            match schemes
                .iter()
                .map(|&s| build_precoders(batch, &draw, s))
                .collect::<Result<Vec<_>>>()
            {
                Ok(p) => break p,
                Err(_) if resampled < MAX_RESAMPLES => {
                    resampled += 1;
                    draw = batch.draw((n + resampled) as u64);
                }
                Err(e) => return Err(e),
            }
        };
        for (s_idx, w) in precoders.iter().enumerate() {
            for l in 0..l_count {
                let prod = draw.h[l].ad_mul(&w[l]);
                for k in 0..k_count {
                    acc_mean[s_idx][slice][(l, k)] += prod[(k, k)];
                    for t in 0..k_count {
                        acc_second[s_idx][slice][l][(k, t)] += prod[(k, t)].norm_sqr();
                    }
                }
            }
        }
    }

    let slice_len =
        |b: usize| (b + 1) * n / b_count - b * n / b_count;
    let estimates = schemes
        .iter()
        .enumerate()
        .map(|(s_idx, _)| {
            let batch_stats: Vec<GainStatistics> = (0..b_count)
                .map(|b| {
                    let len = slice_len(b).max(1) as f64;
                    GainStatistics {
                        mean_gain: acc_mean[s_idx][b].map(|v| v / len),
                        second_moment: acc_second[s_idx][b]
                            .iter()
                            .map(|m| m.map(|v| v / len))
                            .collect(),
                    }
                })
                .collect();
            let pooled_mean = DMatrix::from_fn(l_count, k_count, |l, k| {
                acc_mean[s_idx].iter().map(|m| m[(l, k)]).sum::<Complex64>() / n as f64
            });
            let pooled_second: Vec<DMatrix<f64>> = (0..l_count)
                .map(|l| {
                    DMatrix::from_fn(k_count, k_count, |k, t| {
                        acc_second[s_idx].iter().map(|m| m[l][(k, t)]).sum::<f64>()
                            / n as f64
                    })
                })
                .collect();
            let mean_gain_se = DMatrix::from_fn(l_count, k_count, |l, k| {
                let re = standard_error(batch_stats.iter().map(|s| s.mean_gain[(l, k)].re));
                let im = standard_error(batch_stats.iter().map(|s| s.mean_gain[(l, k)].im));
                (re * re + im * im).sqrt()
            });
            let second_moment_se: Vec<DMatrix<f64>> = (0..l_count)
                .map(|l| {
                    DMatrix::from_fn(k_count, k_count, |k, t| {
                        standard_error(batch_stats.iter().map(|s| s.second_moment[l][(k, t)]))
                    })
                })
                .collect();
            GainStatisticsEstimate {
                stats: GainStatistics {
                    mean_gain: pooled_mean,
                    second_moment: pooled_second,
                },
                batch_stats,
                mean_gain_se,
                second_moment_se,
                num_samples: n,
                resampled,
            }
        })
        .collect();
    Ok(estimates)
}
