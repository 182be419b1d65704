//! Scheduling platoons through unsignalized intersections with parallel
//! neural Monte Carlo tree search.
//!
//! Approaching platoons are projected onto a board of collision-area
//! occupancy intervals ([`board`]). A dual-head policy/value network
//! ([`policynet`]) guides a PUCT search ([`search`]) that delays platoons until
//! the board is conflict-free. [`training`] holds scenario generation, the
//! clear-to-busy curriculum and evaluation against a FIFO baseline, and
//! [`simulator`] runs schedules inside a small microscopic traffic world.

pub mod board;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod policynet;
pub mod scenario;
pub mod search;
pub mod simulator;
pub mod training;

pub use board::{Action, ActionMask, Board, EpisodeOutcome, RewardParams, RowKind, Status};
pub use error::{Error, Result};
pub use geometry::{IntersectionLayout, MovementId, Platoon};
pub use policynet::{NetConfig, NetParams, TrainConfig};
pub use scenario::Scenario;
pub use search::{Evaluator, SearchConfig, Trajectory};
