//! Multi-gait locomotion learning on a planar biped.
//!
//! Every gait shares one observation layout, one action space and one reward
//! formulation; gaits differ only through their [`GaitSpec`]. Periodic gaits
//! can additionally be regularised by an adversarial motion prior.
//!
//! The crate is organised bottom-up:
//!
//! - [`config`]: per-gait configuration and presets
//! - [`reference`]: phase clock, joint reference trajectories, stance masks
//! - [`observation`]: actor frame, history stack, privileged critic input, normaliser
//! - [`control`]: action scaling, PD law, smoothing and action delay
//! - [`rewards`]: reward terms, weighted sum, termination
//! - [`amp`]: discriminator, AMP reward and expert transitions
//! - [`sim`]: planar rigid-body biped with penalty contact
//! - [`randomize`]: domain randomisation and the action-lag curriculum
//! - [`nn`]: small dense networks with hand-written backprop and Adam
//! - [`ppo`]: policy, GAE, clipped PPO update, training loop, policy bundles
//! - [`env`], [`eval`], [`metrics`]: environment glue, evaluation and metrics

pub mod amp;
pub mod config;
pub mod control;
pub mod env;
pub mod eval;
pub mod joints;
pub mod metrics;
pub mod nn;
pub mod observation;
pub mod ppo;
pub mod randomize;
pub mod reference;
pub mod rewards;
pub mod sim;

pub use amp::{Discriminator, Transition, TransitionBuffer, TransitionSource};
pub use config::{Gait, GaitSpec, RunScale};
pub use observation::{CriticObservation, ObservationFrame, ObservationStack, RunningNormalizer};
pub use ppo::{PolicyBundle, PolicyNetwork, TrainRecord};
pub use randomize::{EnvParams, RandomizationRanges};
pub use reference::{JointReference, PhaseState};
pub use rewards::{RewardBreakdown, TerminationState};
pub use sim::RobotState;

/// Number of actuated joints (6 per leg).
pub const NUM_JOINTS: usize = 12;

/// Joint-space vector, indexed by [`joints`] constants.
pub type JointVector = [f64; NUM_JOINTS];
