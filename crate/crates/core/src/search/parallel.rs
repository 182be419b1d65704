use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;

use super::{play_episode, Evaluator, SearchConfig, Trajectory};
use crate::board::Board;
use crate::error::{Error, Result};

/// Seed of the episode for board `index` in a round seeded with `base`.
///
/// Seeds depend only on the board position, so results do not depend on
/// how boards are spread over workers.
pub fn board_seed(base: u64, index: usize) -> u64 {
    let mut z = base ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn run_slot<E: Evaluator + ?Sized>(board: &Board, eval: &E, cfg: &SearchConfig, seed: u64) -> Trajectory {
    match catch_unwind(AssertUnwindSafe(|| play_episode(board, eval, cfg, seed))) {
        Ok(Ok(t)) => t,
        Ok(Err(e)) => {
            log::warn!("episode with seed {seed} failed: {e}");
            Trajectory::failed(board.clone(), seed, &cfg.reward, e.to_string())
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "worker panicked".into());
            log::warn!("episode with seed {seed} panicked: {msg}");
            Trajectory::failed(board.clone(), seed, &cfg.reward, format!("panic: {msg}"))
        }
    }
}

/// Plays every board on its own tree across `workers` threads and returns
/// the trajectories in input order. A failing episode yields a failed
/// trajectory in its slot.
pub fn parallel_round<E: Evaluator + ?Sized>(
    boards: &[Board],
    eval: &E,
    cfg: &SearchConfig,
    workers: usize,
    base_seed: u64,
) -> Result<Vec<Trajectory>> {
    if workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    cfg.validate()?;
    if workers == 1 {
        return Ok(boards
            .iter()
            .enumerate()
            .map(|(i, b)| run_slot(b, eval, cfg, board_seed(base_seed, i)))
            .collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        boards
            .par_iter()
            .enumerate()
            .map(|(i, b)| run_slot(b, eval, cfg, board_seed(base_seed, i)))
            .collect()
    }))
}
