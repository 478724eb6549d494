//! Downlink power allocation and user association for multi-cell massive MIMO.
//!
//! The library models a TDD multi-cell network (L base stations with M antennas
//! each, K single-antenna users, MMSE channel estimation from uplink pilots) and
//! provides ergodic spectral-efficiency lower bounds for maximum-ratio and
//! zero-forcing precoding, together with the optimization layer built on them:
//!
//! * total-power minimization under per-user SINR targets, solved as a linear
//!   program whose duals drive a base-station association rule ([`powermin`]),
//! * weighted max-min SINR via bisection over feasibility problems ([`maxmin`]),
//! * the coherent joint-transmission variants, solved as second-order cone
//!   programs ([`coherent`]),
//! * a Monte Carlo oracle that re-derives the closed-form bounds from raw
//!   channel samples ([`mc`]).
//!
//! All randomness flows through explicit seeds; every solver reports
//! certificates (feasibility residuals, duality gaps) alongside its solution.

pub mod config;
pub mod units;

pub mod model;

pub mod sebounds;

pub mod lp;

pub mod powermin;

pub mod maxmin;

pub mod coherent;

pub mod mc;

mod error;

pub use config::NetworkConfig;
pub use error::{Error, Result};
pub use model::NetworkRealization;
pub use sebounds::{GainStatistics, PowerAllocation, Scheme, SinrTargets};
