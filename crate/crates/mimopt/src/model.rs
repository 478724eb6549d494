//! Network geometry and large-scale propagation model.
//!
//! A drop places K users uniformly in a square with L base stations spaced
//! evenly along its perimeter (the four corners when L = 4), draws log-normal
//! shadow fading per link, and derives two L-by-K matrices that the rest of
//! the library consumes:
//!
//! * `beta`: average channel gain per link, from a log-distance path loss
//!   `intercept + slope * log10(d_km)` dB plus shadowing;
//! * `theta`: MMSE channel-estimate variance per link, i.e. the share of
//!   `beta` recovered by pilot-based estimation. With pilot power q_t,
//!   pilot length tau_p and pilot set P_k (users sharing user k's pilot):
//!
//!   `theta[l][k] = q_k * tau_p * beta[l][k]^2
//!                  / (tau_p * sum_{t in P_k} q_t * beta[l][t] + ul_noise)`.
//!
//! The estimation error has variance `beta - theta`, so `0 < theta < beta`
//! always holds. Generation is deterministic in the seed: positions first
//! (rejection-sampled against the minimum BS distance), then shadowing in
//! link order.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::config::NetworkConfig;
use crate::{Error, Result};

/// Log-distance path loss in dB at `distance` km under the configured
/// intercept and slope.
pub fn path_loss_db(config: &NetworkConfig, distance: f64) -> Result<f64> {
    if distance.is_nan() || distance <= 0.0 {
        return Err(Error::Domain(format!(
            "path loss needs a positive distance, got {distance}"
        )));
    }
    Ok(config.pathloss_intercept_db + config.pathloss_slope * distance.log10())
}

/// Pilot assignment policies. `Orthogonal` gives every user a private pilot
/// and needs tau_p >= K; `RoundRobin` shares pilot (k mod tau_p) so users k
/// and t collide iff k = t (mod tau_p).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotPolicy {
    Orthogonal,
    RoundRobin,
}

/// Pilot sets for K users under the given policy.
pub fn assign_pilots(
    num_users: usize,
    pilot_length: usize,
    policy: PilotPolicy,
) -> Result<Vec<Vec<usize>>> {
    match policy {
        PilotPolicy::Orthogonal => {
            if pilot_length < num_users {
                return Err(Error::Config(format!(
                    "orthogonal pilots need tau_p >= K (got tau_p={pilot_length}, K={num_users})"
                )));
            }
            Ok(orthogonal_pilots(num_users))
        }
        PilotPolicy::RoundRobin => {
            let assignment: Vec<usize> = (0..num_users).map(|k| k % pilot_length).collect();
            Ok(pilot_sets_from_assignment(&assignment))
        }
    }
}

/// Base stations sit on the deployment square's boundary, evenly spaced by
/// perimeter arc length starting at the corner (s/2, s/2) and walking
/// counterclockwise. L = 4 lands exactly on the four corners.
pub fn bs_positions(num_bs: usize, square_side: f64) -> Vec<(f64, f64)> {
    let s = square_side;
    let perimeter = 4.0 * s;
    (0..num_bs)
        .map(|j| {
            let t = j as f64 * perimeter / num_bs as f64;
            match t / s {
                u if u < 1.0 => (s / 2.0 - t, s / 2.0),
                u if u < 2.0 => (-s / 2.0, s / 2.0 - (t - s)),
                u if u < 3.0 => (-s / 2.0 + (t - 2.0 * s), -s / 2.0),
                _ => (s / 2.0, -s / 2.0 + (t - 3.0 * s)),
            }
        })
        .collect()
}

/// Orthogonal pilot books: user k owns pilot k. Requires tau_p >= K.
pub fn orthogonal_pilots(num_users: usize) -> Vec<Vec<usize>> {
    (0..num_users).map(|k| vec![k]).collect()
}

/// Pilot sets from an explicit pilot index per user: P_k collects every user
/// transmitting the same pilot as k (including k itself), ascending.
pub fn pilot_sets_from_assignment(assignment: &[usize]) -> Vec<Vec<usize>> {
    assignment
        .iter()
        .map(|&pk| {
            assignment
                .iter()
                .enumerate()
                .filter(|&(_, &pt)| pt == pk)
                .map(|(t, _)| t)
                .collect()
        })
        .collect()
}

/// MMSE estimate variance per link; see the module docs for the formula.
pub fn estimation_quality(
    beta: &DMatrix<f64>,
    pilot_power: &[f64],
    pilot_sets: &[Vec<usize>],
    pilot_length: usize,
    ul_noise: f64,
) -> DMatrix<f64> {
    let tau_p = pilot_length as f64;
    DMatrix::from_fn(beta.nrows(), beta.ncols(), |l, k| {
        let received: f64 = pilot_sets[k]
            .iter()
            .map(|&t| pilot_power[t] * beta[(l, t)])
            .sum();
        pilot_power[k] * tau_p * beta[(l, k)] * beta[(l, k)] / (tau_p * received + ul_noise)
    })
}

/// One network drop: geometry, gains, estimation quality, pilot structure.
#[derive(Debug, Clone)]
pub struct NetworkRealization {
    pub config: NetworkConfig,
    pub bs_positions: Vec<(f64, f64)>,
    pub user_positions: Vec<(f64, f64)>,
    /// Average channel gain, L x K, linear scale.
    pub beta: DMatrix<f64>,
    /// MMSE estimate variance, L x K, linear scale.
    pub theta: DMatrix<f64>,
    /// P_k per user, each sorted and containing k.
    pub pilot_sets: Vec<Vec<usize>>,
}

impl NetworkRealization {
    /// Deterministic drop with the default pilot assignment: orthogonal when
    /// tau_p >= K, otherwise round-robin (user k sends pilot k mod tau_p).
    pub fn generate(config: &NetworkConfig, seed: u64) -> Result<Self> {
        let assignment: Vec<usize> =
            (0..config.num_users).map(|k| k % config.pilot_length).collect();
        Self::generate_with_assignment(config, seed, &assignment)
    }

    /// Deterministic drop with an explicit pilot index per user.
    pub fn generate_with_assignment(
        config: &NetworkConfig,
        seed: u64,
        pilot_assignment: &[usize],
    ) -> Result<Self> {
        config.validate()?;
        if pilot_assignment.len() != config.num_users {
            return Err(Error::Config(format!(
                "pilot assignment length {} != num_users {}",
                pilot_assignment.len(),
                config.num_users
            )));
        }
        if let Some(&bad) = pilot_assignment.iter().find(|&&p| p >= config.pilot_length) {
            return Err(Error::Config(format!(
                "pilot index {bad} out of range (tau_p = {})",
                config.pilot_length
            )));
        }

        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let bs = bs_positions(config.num_bs, config.square_side);
        let user_positions = drop_users(config, &bs, &mut rng)?;

        let shadow = Normal::new(0.0, config.shadow_std_db).map_err(|e| {
            Error::Config(format!("shadow fading distribution: {e}"))
        })?;
        let beta = DMatrix::from_fn(config.num_bs, config.num_users, |l, k| {
            let (bx, by) = bs[l];
            let (ux, uy) = user_positions[k];
            // Clamp so a user placed exactly on a BS (possible only with
            // min_bs_user_distance = 0) cannot produce an infinite gain.
            let d = ((bx - ux).powi(2) + (by - uy).powi(2)).sqrt().max(1e-9);
            let loss_db =
                config.pathloss_intercept_db + config.pathloss_slope * d.log10();
            let z = if config.shadow_std_db > 0.0 { shadow.sample(&mut rng) } else { 0.0 };
            10f64.powf((-loss_db + z) / 10.0)
        });

        let pilot_sets = pilot_sets_from_assignment(pilot_assignment);
        let theta = estimation_quality(
            &beta,
            &config.pilot_power,
            &pilot_sets,
            config.pilot_length,
            config.ul_noise,
        );

        Ok(NetworkRealization {
            config: config.clone(),
            bs_positions: bs,
            user_positions,
            beta,
            theta,
            pilot_sets,
        })
    }

    pub fn num_bs(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.beta.ncols()
    }

    /// True when every user has a private pilot.
    pub fn orthogonal_pilots(&self) -> bool {
        self.pilot_sets.iter().all(|s| s.len() == 1)
    }
}

fn drop_users(
    config: &NetworkConfig,
    bs: &[(f64, f64)],
    rng: &mut ChaCha12Rng,
) -> Result<Vec<(f64, f64)>> {
    let half = config.square_side / 2.0;
    let budget = 10 * config.num_users;
    (0..config.num_users)
        .map(|user| {
            for _ in 0..budget {
                let p = (rng.random_range(-half..half), rng.random_range(-half..half));
                let ok = bs
                    .iter()
                    .all(|&(bx, by)| (bx - p.0).hypot(by - p.1) >= config.min_bs_user_distance);
                if ok {
                    return Ok(p);
                }
            }
            Err(Error::Placement { user, attempts: budget })
        })
        .collect()
}
