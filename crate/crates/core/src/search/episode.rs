use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{visit_policy, Evaluator, SearchConfig, Trajectory, TrajectoryStep, Tree};
use crate::board::{Action, Board};
use crate::error::Result;

/// Plays one board to a terminal state, searching afresh before every move
/// and carrying the chosen subtree forward.
pub fn play_episode<E: Evaluator + ?Sized>(
    initial: &Board,
    eval: &E,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<Trajectory> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = cfg.move_time_budget.map(Duration::from_secs_f64);
    let mut tree = Tree::new(initial.clone(), cfg);
    let mut steps = Vec::new();
    loop {
        if let Some(outcome) = tree.root().terminal {
            return Ok(Trajectory {
                initial: initial.clone(),
                seed,
                steps,
                outcome,
                error: None,
            });
        }
        let started = Instant::now();
        let mut done = 0;
        if !tree.root().expanded {
            tree.simulate_once(eval, cfg)?;
            done += 1;
        }
        tree.add_root_noise(&mut rng, cfg);
        while done < cfg.simulations {
            if budget.is_some_and(|b| started.elapsed() >= b) {
                break;
            }
            tree.simulate_once(eval, cfg)?;
            done += 1;
        }
        let policy = visit_policy(&tree);
        let action = if (steps.len() as u32) < cfg.temperature_moves {
            sample_by_visits(&tree, &mut rng)
        } else {
            tree.most_visited()
        }
        .expect("non-terminal root has legal actions");
        let root = tree.root();
        steps.push(TrajectoryStep {
            features: root.board.encode(&cfg.reward),
            mask: root.mask.as_slice().to_vec(),
            policy,
            action,
        });
        tree = tree.advance(action, cfg)?;
    }
}

fn sample_by_visits<R: Rng>(tree: &Tree, rng: &mut R) -> Option<Action> {
    let edges = &tree.root().edges;
    let total: u32 = edges.iter().map(|e| e.visits).sum();
    if total == 0 {
        return tree.most_visited();
    }
    let mut target = rng.random_range(0..total);
    for e in edges {
        if target < e.visits {
            return Some(e.action);
        }
        target -= e.visits;
    }
    unreachable!("target below total visits")
}
