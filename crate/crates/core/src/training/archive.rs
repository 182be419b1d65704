use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::search::Trajectory;

/// Highest-reward solved trajectory found so far for each board.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BestSoFarArchive {
    entries: BTreeMap<String, Trajectory>,
}

impl BestSoFarArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, fingerprint: &str) -> Option<&Trajectory> {
        self.entries.get(fingerprint)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Trajectory)> {
        self.entries.iter()
    }

    /// Stores `trajectory` if it solved its board with a strictly higher
    /// reward than the stored one. Returns whether it was stored.
    pub fn offer(&mut self, trajectory: &Trajectory) -> bool {
        if !trajectory.outcome.is_solved() || trajectory.error.is_some() {
            return false;
        }
        let key = trajectory.initial.fingerprint();
        match self.entries.get(&key) {
            Some(best) if best.outcome.reward >= trajectory.outcome.reward => false,
            _ => {
                self.entries.insert(key, trajectory.clone());
                true
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::board::{Board, Cell, EpisodeOutcome, RowKind, Status};

    fn traj(reward: f64, status: Status) -> Trajectory {
        let mut b = Board::empty(1);
        b.push_row(RowKind::New, 0, &[Cell::Interval { entry: 0.0, exit: 1.0 }])
            .unwrap();
        Trajectory {
            initial: b,
            seed: 0,
            steps: Vec::new(),
            outcome: EpisodeOutcome {
                status,
                t_cross: 1.0,
                steps: 0,
                reward,
            },
            error: None,
        }
    }

    #[test]
    fn keeps_only_strict_improvements() {
        let mut a = BestSoFarArchive::new();
        assert!(a.offer(&traj(0.5, Status::Solved)));
        assert!(!a.offer(&traj(0.5, Status::Solved)));
        assert!(!a.offer(&traj(0.4, Status::Solved)));
        assert!(a.offer(&traj(0.7, Status::Solved)));
        assert_eq!(a.len(), 1);
        assert_eq!(a.iter().next().unwrap().1.outcome.reward, 0.7);
    }

    #[test]
    fn ignores_failures() {
        let mut a = BestSoFarArchive::new();
        assert!(!a.offer(&traj(-1.0, Status::FailTime)));
        assert!(a.is_empty());
    }
}
