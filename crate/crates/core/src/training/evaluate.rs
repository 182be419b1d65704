use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::board::{Action, Board, RewardParams, Status};
use crate::error::{Error, Result};
use crate::policynet::NetParams;
use crate::search::{play_episode, NetEvaluator, SearchConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Take the policy's most probable action at every step, no search.
    NetOnly,
    /// Short-path tree search guided by the network.
    ShortPathMcts,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "net_only" | "net-only" => Ok(EvalMode::NetOnly),
            "short_path_mcts" | "short-path-mcts" | "mcts" => Ok(EvalMode::ShortPathMcts),
            other => Err(Error::Config(format!("unknown evaluation mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardReport {
    pub fingerprint: String,
    pub status: Status,
    pub t_cross: f64,
    pub steps: u32,
    pub reward: f64,
    pub wall_time_s: f64,
    pub actions: Vec<Action>,
}

impl BoardReport {
    pub fn solved(&self) -> bool {
        self.status == Status::Solved
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub boards: Vec<BoardReport>,
    pub success_rate: f64,
    pub mean_reward: f64,
    pub mean_solve_time_s: f64,
    pub median_solve_time_s: f64,
    /// Reward of solved boards; absent when nothing was solved.
    pub mean_quality: Option<f64>,
    pub median_quality: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

impl EvalReport {
    pub fn from_boards(mode: EvalMode, boards: Vec<BoardReport>) -> Self {
        let n = boards.len().max(1) as f64;
        let solved = boards.iter().filter(|b| b.solved()).count();
        let rewards: Vec<f64> = boards.iter().map(|b| b.reward).collect();
        let times: Vec<f64> = boards.iter().map(|b| b.wall_time_s).collect();
        let quality: Vec<f64> = boards.iter().filter(|b| b.solved()).map(|b| b.reward).collect();
        Self {
            mode,
            success_rate: solved as f64 / n,
            mean_reward: mean(&rewards).unwrap_or(0.0),
            mean_solve_time_s: mean(&times).unwrap_or(0.0),
            median_solve_time_s: median(&times).unwrap_or(0.0),
            mean_quality: mean(&quality),
            median_quality: median(&quality),
            boards,
        }
    }

    pub fn solved(&self) -> usize {
        self.boards.iter().filter(|b| b.solved()).count()
    }
}

/// Follows the policy's most probable legal action until the board ends.
pub fn greedy_rollout(net: &NetParams, board: &Board, reward: &RewardParams) -> Result<(Board, Vec<Action>)> {
    let mut b = board.clone();
    let mut actions = Vec::new();
    loop {
        if b.evaluate(reward).is_some() {
            return Ok((b, actions));
        }
        let mask = b.legal_actions(reward);
        if !mask.any() {
            return Ok((b, actions));
        }
        let p = net.forward(&b.encode(reward), mask.as_slice())?;
        let mut best = None::<(usize, f64)>;
        for i in mask.legal_indices() {
            if best.map_or(true, |(_, q)| p.policy[i] > q) {
                best = Some((i, p.policy[i]));
            }
        }
        let action = Action::from_index(best.expect("mask has a legal action").0);
        b = b.apply(action)?;
        actions.push(action);
    }
}

/// Plays every board once and summarizes the outcomes.
pub fn evaluate_policy(
    net: &NetParams,
    boards: &[Board],
    mode: EvalMode,
    search: &SearchConfig,
    seed: u64,
) -> Result<EvalReport> {
    let reward = &search.reward;
    let mut reports = Vec::with_capacity(boards.len());
    for (i, board) in boards.iter().enumerate() {
        let started = Instant::now();
        let (outcome, actions) = match mode {
            EvalMode::NetOnly => {
                let (last, actions) = greedy_rollout(net, board, reward)?;
                let outcome = last.evaluate(reward).unwrap_or_else(|| last.dead_end_outcome(reward));
                (outcome, actions)
            }
            EvalMode::ShortPathMcts => {
                let t = play_episode(
                    board,
                    &NetEvaluator::new(net, *reward),
                    search,
                    crate::search::board_seed(seed, i),
                )?;
                let (_, outcome) = t.schedule(reward)?;
                (outcome, t.actions().collect())
            }
        };
        reports.push(BoardReport {
            fingerprint: board.fingerprint(),
            status: outcome.status,
            t_cross: outcome.t_cross,
            steps: outcome.steps,
            reward: outcome.reward,
            wall_time_s: started.elapsed().as_secs_f64(),
            actions,
        });
    }
    Ok(EvalReport::from_boards(mode, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::board::{Cell, RowKind};
    use crate::policynet::NetConfig;

    fn report(status: Status, reward: f64, t: f64) -> BoardReport {
        BoardReport {
            fingerprint: String::new(),
            status,
            t_cross: 0.0,
            steps: 0,
            reward,
            wall_time_s: t,
            actions: Vec::new(),
        }
    }

    #[test]
    fn aggregates() {
        let r = EvalReport::from_boards(
            EvalMode::NetOnly,
            vec![
                report(Status::Solved, 0.8, 1.0),
                report(Status::FailTime, -1.0, 3.0),
                report(Status::Solved, 0.6, 2.0),
            ],
        );
        assert!((r.success_rate - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.mean_reward - (0.4 / 3.0)).abs() < 1e-12);
        assert_eq!(r.median_solve_time_s, 2.0);
        assert!((r.mean_quality.unwrap() - 0.7).abs() < 1e-12);
        assert!((r.median_quality.unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn greedy_rollout_ends_terminal_or_stuck() {
        let mut b = Board::empty(1);
        b.push_row(RowKind::New, 0, &[Cell::Interval { entry: 0.0, exit: 2.0 }])
            .unwrap();
        b.push_row(RowKind::New, 1, &[Cell::Interval { entry: 1.0, exit: 3.0 }])
            .unwrap();
        let net = NetParams::init(
            NetConfig {
                input_dim: 2 * 16 + 16,
                ..NetConfig::desk()
            },
            0,
        )
        .unwrap();
        let reward = RewardParams::default();
        let (last, actions) = greedy_rollout(&net, &b, &reward).unwrap();
        assert!(last.evaluate(&reward).is_some() || !last.legal_actions(&reward).any());
        assert_eq!(last.step_count() as usize, actions.len());
    }

    #[test]
    fn mode_names_parse() {
        assert_eq!("net_only".parse::<EvalMode>().unwrap(), EvalMode::NetOnly);
        assert_eq!("short_path_mcts".parse::<EvalMode>().unwrap(), EvalMode::ShortPathMcts);
        assert!("other".parse::<EvalMode>().is_err());
    }
}
