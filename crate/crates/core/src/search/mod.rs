//! PUCT tree search over boards.
//!
//! A search tree is private to one episode. Leaves are scored by an
//! [`Evaluator`] (the policy/value network, or uniform priors for testing),
//! optionally refined by a short greedy rollout.

mod episode;
mod parallel;
mod tree;

use serde::{Deserialize, Serialize};

use crate::board::{Action, ActionMask, Board, EpisodeOutcome, RewardParams, ACTION_DIM};
use crate::error::{Error, Result};
use crate::policynet::{NetParams, Sample};

pub use episode::play_episode;
pub use parallel::{board_seed, parallel_round};
pub use tree::{select, Edge, Node, Tree};

/// Priors and value for a board.
pub trait Evaluator: Sync {
    /// `priors` has [`ACTION_DIM`] entries and is zero outside `mask`.
    fn evaluate(&self, board: &Board, mask: &ActionMask) -> Result<(Vec<f64>, f64)>;
}

/// Uniform priors over legal actions and a constant value.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformEvaluator {
    pub value: f64,
}

impl Evaluator for UniformEvaluator {
    fn evaluate(&self, _board: &Board, mask: &ActionMask) -> Result<(Vec<f64>, f64)> {
        let n = mask.count();
        if n == 0 {
            return Err(Error::NoLegalAction);
        }
        let p = 1.0 / n as f64;
        let priors = mask.as_slice().iter().map(|&m| if m { p } else { 0.0 }).collect();
        Ok((priors, self.value))
    }
}

/// The policy/value network behind a read-only reference.
#[derive(Debug, Clone, Copy)]
pub struct NetEvaluator<'a> {
    net: &'a NetParams,
    reward: RewardParams,
}

impl<'a> NetEvaluator<'a> {
    pub fn new(net: &'a NetParams, reward: RewardParams) -> Self {
        Self { net, reward }
    }
}

impl Evaluator for NetEvaluator<'_> {
    fn evaluate(&self, board: &Board, mask: &ActionMask) -> Result<(Vec<f64>, f64)> {
        let features = board.encode(&self.reward);
        let p = self.net.forward(&features, mask.as_slice())?;
        Ok((p.policy, p.value))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Simulations per move.
    pub simulations: u32,
    pub c_puct: f64,
    /// Depth below the current root at which leaves are no longer expanded.
    pub max_depth: u32,
    /// Wall-clock budget per move in seconds. `None` means unlimited.
    pub move_time_budget: Option<f64>,
    /// Greedy policy steps taken from a freshly expanded leaf; 0 uses the
    /// value head directly.
    pub rollout_depth: u32,
    pub dirichlet_alpha: f64,
    /// Weight of root noise; 0 disables it.
    pub dirichlet_fraction: f64,
    /// Moves sampled in proportion to visits before play turns greedy.
    pub temperature_moves: u32,
    /// Caps the delay of every action at this many moves.
    pub restrict_moves: Option<u32>,
    pub reward: RewardParams,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self::training()
    }
}

impl SearchConfig {
    /// Self-play settings with exploration noise.
    pub fn training() -> Self {
        Self {
            simulations: 400,
            c_puct: 1.5,
            max_depth: 64,
            move_time_budget: None,
            rollout_depth: 5,
            dirichlet_alpha: 0.3,
            dirichlet_fraction: 0.25,
            temperature_moves: 4,
            restrict_moves: None,
            reward: RewardParams::default(),
        }
    }

    /// Fast deterministic inference: 100 simulations with short rollouts.
    pub fn short_path() -> Self {
        Self {
            simulations: 100,
            dirichlet_fraction: 0.0,
            temperature_moves: 0,
            ..Self::training()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.simulations == 0 {
            return Err(Error::Config("simulations must be at least 1".into()));
        }
        if !(self.c_puct >= 0.0) {
            return Err(Error::Config("c_puct must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.dirichlet_fraction) || !(self.dirichlet_alpha > 0.0) {
            return Err(Error::Config(
                "dirichlet fraction must be in [0,1] and alpha positive".into(),
            ));
        }
        if let Some(b) = self.move_time_budget {
            if !(b > 0.0) {
                return Err(Error::Config("move time budget must be positive".into()));
            }
        }
        self.reward.validate()
    }

    pub(crate) fn mask(&self, board: &Board) -> ActionMask {
        let mask = board.legal_actions(&self.reward);
        match self.restrict_moves {
            Some(m) => mask.restrict_moves(m),
            None => mask,
        }
    }
}

/// One decision of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub features: Vec<f64>,
    pub mask: Vec<bool>,
    /// Root visit distribution.
    pub policy: Vec<f64>,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial: Board,
    pub seed: u64,
    pub steps: Vec<TrajectoryStep>,
    pub outcome: EpisodeOutcome,
    /// Set when the episode could not run to completion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Trajectory {
    /// A failed slot for an episode that did not complete.
    pub fn failed(initial: Board, seed: u64, reward: &RewardParams, message: impl Into<String>) -> Self {
        let outcome = initial.dead_end_outcome(reward);
        Self {
            initial,
            seed,
            steps: Vec::new(),
            outcome,
            error: Some(message.into()),
        }
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.steps.iter().map(|s| s.action)
    }

    /// Replays the chosen actions from the initial board.
    pub fn final_board(&self) -> Result<Board> {
        self.actions().try_fold(self.initial.clone(), |b, a| b.apply(a))
    }

    /// The schedule to execute: the final board, left-shifted when solved,
    /// with its outcome rescored.
    pub fn schedule(&self, reward: &RewardParams) -> Result<(Board, EpisodeOutcome)> {
        let last = self.final_board()?;
        if !self.outcome.is_solved() {
            return Ok((last, self.outcome));
        }
        let shifted = last.left_shift();
        let t_cross = shifted.t_cross();
        let outcome = EpisodeOutcome {
            t_cross,
            reward: reward.reward(t_cross, self.outcome.steps),
            ..self.outcome
        };
        Ok((shifted, outcome))
    }

    /// Training samples with the terminal reward as every value target.
    pub fn samples(&self) -> Vec<Sample> {
        self.steps
            .iter()
            .map(|s| Sample {
                features: s.features.clone(),
                mask: s.mask.clone(),
                policy: s.policy.clone(),
                value: self.outcome.reward,
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trajectory serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("trajectory", e))
    }
}

pub(crate) fn visit_policy(tree: &Tree) -> Vec<f64> {
    let mut pi = vec![0.0; ACTION_DIM];
    let root = tree.root();
    let total: u32 = root.edges.iter().map(|e| e.visits).sum();
    if total > 0 {
        for e in &root.edges {
            pi[e.action.index()] = e.visits as f64 / total as f64;
        }
    }
    pi
}
