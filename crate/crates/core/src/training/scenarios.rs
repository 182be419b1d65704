use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::board::{Board, RewardParams};
use crate::error::{Error, Result};
use crate::geometry::{IntersectionLayout, MovementId, Platoon, Turn};
use crate::scenario::{Scenario, ScenarioEntry};

/// Sampling ranges for random scenarios. Every range is inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub platoons: (usize, usize),
    /// m/s
    pub speed: (f64, f64),
    /// Distance of the platoon head to the stop line, m.
    pub distance: (f64, f64),
    pub vehicles: (u32, u32),
    pub seed: u64,
    /// Rejected draws allowed per requested scenario.
    pub attempts_per_scenario: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            platoons: (1, 8),
            speed: (4.0, 5.0),
            distance: (0.0, 15.0),
            vehicles: (1, 4),
            seed: 0,
            attempts_per_scenario: 200,
        }
    }
}

impl ScenarioConfig {
    /// At most four platoons per board.
    pub fn desk(seed: u64) -> Self {
        Self {
            platoons: (1, 4),
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.platoons;
        if lo == 0 || lo > hi || hi > crate::board::MAX_NEW_ROWS {
            return Err(Error::Config(format!("platoon range {lo}..={hi} must lie in 1..=8")));
        }
        if !(self.speed.0 > 0.0 && self.speed.0 <= self.speed.1) {
            return Err(Error::Config("speed range must be positive and ordered".into()));
        }
        if !(self.distance.0 >= 0.0 && self.distance.0 <= self.distance.1) {
            return Err(Error::Config("distance range must be nonnegative and ordered".into()));
        }
        if self.vehicles.0 == 0 || self.vehicles.0 > self.vehicles.1 || self.vehicles.1 > 4 {
            return Err(Error::Config("vehicles per platoon must lie in 1..=4".into()));
        }
        Ok(())
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Draws one scenario: distinct movements that cross at least one area.
pub fn sample_scenario<R: Rng>(cfg: &ScenarioConfig, layout: &IntersectionLayout, rng: &mut R) -> Scenario {
    let mut movements: Vec<MovementId> = layout
        .conflicting_movements()
        .map(|m| m.id)
        .filter(|id| id.turn != Turn::Right)
        .collect();
    movements.shuffle(rng);
    let n = rng.random_range(cfg.platoons.0..=cfg.platoons.1).min(movements.len());
    let platoons = movements[..n]
        .iter()
        .enumerate()
        .map(|(i, &movement)| {
            // Rounded to centimetres so that scenario files are short and exact.
            let speed = (uniform(rng, cfg.speed) * 100.0).round() / 100.0;
            let distance = (uniform(rng, cfg.distance) * 100.0).round() / 100.0;
            let vehicles = rng.random_range(cfg.vehicles.0..=cfg.vehicles.1);
            Platoon::new(i as u32 + 1, movement, speed, distance, vehicles)
        })
        .collect();
    Scenario::new(platoons)
}

/// `count` distinct scenarios whose initial board has a conflict and fits
/// under the crossing-time ceiling.
pub fn generate_scenarios(
    cfg: &ScenarioConfig,
    layout: &IntersectionLayout,
    reward: &RewardParams,
    count: usize,
) -> Result<Vec<ScenarioEntry>> {
    cfg.validate()?;
    if count == 0 {
        return Err(Error::Config("scenario count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let budget = count.saturating_mul(cfg.attempts_per_scenario.max(1));
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        if attempts >= budget {
            return Err(Error::RejectionBudget {
                attempts,
                accepted: out.len(),
            });
        }
        attempts += 1;
        let scenario = sample_scenario(cfg, layout, &mut rng);
        let board = scenario.board(layout)?;
        if !board.has_conflict() || board.t_cross() > reward.t_max {
            continue;
        }
        let fingerprint = board.fingerprint();
        if seen.insert(fingerprint.clone()) {
            out.push(ScenarioEntry { fingerprint, scenario });
        }
    }
    Ok(out)
}

/// The first `train` entries and the `test` entries after them.
pub fn split_scenarios(
    entries: &[ScenarioEntry],
    train: usize,
    test: usize,
) -> Result<(Vec<ScenarioEntry>, Vec<ScenarioEntry>)> {
    if train + test > entries.len() {
        return Err(Error::Config(format!(
            "split {train}:{test} needs {} scenarios, have {}",
            train + test,
            entries.len()
        )));
    }
    Ok((entries[..train].to_vec(), entries[train..train + test].to_vec()))
}

/// Busy boards: each fresh board overlaid on a resolved schedule that has
/// been running for a random fraction of its crossing time.
///
/// Residuals are drawn from `resolved` at random. Boards whose overlay has
/// no conflict, cannot be stacked, or has no first-come-first-served
/// solution within the reward limits are skipped.
pub fn busy_boards(resolved: &[Board], fresh: &[Board], elapsed_fraction: (f64, f64), seed: u64) -> Vec<Board> {
    if resolved.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for f in fresh {
        let base = &resolved[rng.random_range(0..resolved.len())];
        let frac = uniform(&mut rng, elapsed_fraction);
        let residual = base.advance_clock(frac * base.t_cross());
        if let Ok(b) = Board::overlay(&residual, f) {
            if b.has_conflict() && super::fifo_schedule(&b).outcome.is_solved() {
                out.push(b);
            }
        }
    }
    out
}
