use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Approach, MovementId, Turn};

/// One signal phase: the movements that get green, and for how long.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalPhase {
    pub movements: Vec<MovementId>,
    /// Seconds, lost time included.
    pub duration: f64,
}

/// A pre-set cyclic signal program.
///
/// Each phase opens with `lost_time` seconds of all-red before its
/// movements get green.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedTimePlan {
    pub cycle: f64,
    pub phases: Vec<SignalPhase>,
    pub lost_time: f64,
}

fn pair(a: Approach, b: Approach, turns: &[Turn]) -> Vec<MovementId> {
    turns
        .iter()
        .flat_map(|&t| [MovementId::new(a, t), MovementId::new(b, t)])
        .collect()
}

impl Default for FixedTimePlan {
    /// 60 s cycle: NS straight and right, NS left, EW straight and right,
    /// EW left, 15 s each with 3 s lost time.
    fn default() -> Self {
        use Approach::*;
        let phases = vec![
            pair(N, S, &[Turn::Straight, Turn::Right]),
            pair(N, S, &[Turn::Left]),
            pair(E, W, &[Turn::Straight, Turn::Right]),
            pair(E, W, &[Turn::Left]),
        ];
        Self {
            cycle: 60.0,
            phases: phases
                .into_iter()
                .map(|movements| SignalPhase {
                    movements,
                    duration: 15.0,
                })
                .collect(),
            lost_time: 3.0,
        }
    }
}

impl FixedTimePlan {
    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::Config("signal plan has no phases".into()));
        }
        let total: f64 = self.phases.iter().map(|p| p.duration).sum();
        if (total - self.cycle).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "phase durations sum to {total} s but the cycle is {} s",
                self.cycle
            )));
        }
        if self.lost_time < 0.0 || self.phases.iter().any(|p| p.duration <= self.lost_time) {
            return Err(Error::Config("every phase must outlast its lost time".into()));
        }
        Ok(())
    }

    /// Whether `movement` has green at time `t` for a controller whose
    /// cycle starts at `offset`.
    pub fn is_green(&self, movement: MovementId, t: f64, offset: f64) -> bool {
        let mut x = (t - offset).rem_euclid(self.cycle);
        for phase in &self.phases {
            if x < phase.duration {
                return x >= self.lost_time && phase.movements.contains(&movement);
            }
            x -= phase.duration;
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan_is_consistent() {
        let plan = FixedTimePlan::default();
        plan.validate().unwrap();
        let ns = MovementId::new(Approach::N, Turn::Straight);
        let el = MovementId::new(Approach::E, Turn::Left);
        assert!(!plan.is_green(ns, 1.0, 0.0));
        assert!(plan.is_green(ns, 3.0, 0.0));
        assert!(plan.is_green(ns, 14.9, 0.0));
        assert!(!plan.is_green(ns, 15.0, 0.0));
        assert!(plan.is_green(el, 50.0, 0.0));
        assert!(plan.is_green(el, 110.0, 0.0));
        assert!(!plan.is_green(el, 50.0, 30.0));
    }

    #[test]
    fn every_movement_gets_green_once() {
        let plan = FixedTimePlan::default();
        for a in Approach::ALL {
            for t in Turn::ALL {
                let n = plan
                    .phases
                    .iter()
                    .filter(|p| p.movements.contains(&MovementId::new(a, t)))
                    .count();
                assert_eq!(n, 1, "{a} {t}");
            }
        }
    }

    #[test]
    fn bad_plans_are_rejected() {
        let mut plan = FixedTimePlan::default();
        plan.cycle = 50.0;
        assert!(plan.validate().is_err());
        let mut plan = FixedTimePlan::default();
        plan.lost_time = 15.0;
        assert!(plan.validate().is_err());
    }
}
