use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::platoons::{form_platoons, QueuedVehicle};
use super::world::{movement_slot, Commit, NetworkWorld, QUEUE_SPACING_M};
use crate::board::{moves_to_seconds, Board, Cell, RowKind, MAX_NEW_ROWS, MAX_ROWS, TIME_EPS};
use crate::error::{Error, Result};
use crate::geometry::{Approach, MovementId, Turn, VEHICLE_LENGTH_M};
use crate::search::{board_seed, play_episode, Evaluator, SearchConfig};
use crate::training::fifo_schedule_with;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Seconds between scheduling decisions.
    pub decision_interval: f64,
    /// Also decide as soon as a vehicle enters the control range.
    pub decide_on_arrival: bool,
    /// Only vehicles this close to the stop line are scheduled, m.
    pub control_range: f64,
    pub max_platoon: u32,
    /// Largest time headway inside a platoon, s.
    pub headway: f64,
    pub search: SearchConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            decision_interval: 2.0,
            decide_on_arrival: true,
            control_range: 15.0,
            max_platoon: 4,
            headway: 2.0,
            search: SearchConfig::short_path(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.decision_interval > 0.0 && self.control_range >= 0.0 && self.headway >= 0.0) || self.max_platoon == 0
        {
            return Err(Error::Config(
                "agent intervals, range and platoon size must be positive".into(),
            ));
        }
        if self.search.move_time_budget.is_some() {
            return Err(Error::Config(
                "agent search must be bounded by simulations, not wall time".into(),
            ));
        }
        self.search.validate()
    }
}

/// A platoon with fixed stop-line times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommittedPlatoon {
    pub id: u64,
    pub movement: MovementId,
    pub vehicles: u32,
    /// Stop-line time of the head vehicle, s.
    pub head: f64,
    /// Stop-line time of the last vehicle, s.
    pub tail: f64,
    /// When the last vehicle leaves its last collision area, s.
    pub clear: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Nothing to schedule.
    Idle,
    /// The projected board had no conflict.
    Direct,
    Mcts,
    FifoFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Commitment {
    pub intersection: usize,
    pub time: f64,
    pub platoons: Vec<CommittedPlatoon>,
    pub solver: Solver,
}

struct Candidate {
    link: usize,
    lane: usize,
    movement: MovementId,
    vehicles: Vec<usize>,
    /// Earliest stop-line time of each vehicle, seconds from now.
    earliest: Vec<f64>,
}

fn cells_for(visits: &[(usize, f64, f64)], areas: usize, v: f64, head: f64, tail: f64) -> Vec<Cell> {
    let mut cells = vec![Cell::Absent; areas];
    for &(area, s, e) in visits {
        cells[area] = Cell::Interval {
            entry: head + s / v,
            exit: tail + (s + e + VEHICLE_LENGTH_M) / v,
        };
    }
    cells
}

/// Delays in moves for the first `fresh` rows of `board`, with the solver used.
///
/// Conflict-free boards need no delay. Otherwise the search runs, and any
/// unsolved result or search error falls back to first-come-first-served.
pub fn plan_delays<E: Evaluator + ?Sized>(
    board: &Board,
    fresh: usize,
    eval: &E,
    search: &SearchConfig,
    seed: u64,
) -> (Vec<u32>, Solver) {
    if !board.has_conflict() {
        return (vec![0; fresh], Solver::Direct);
    }
    match play_episode(board, eval, search, seed).and_then(|t| t.schedule(&search.reward)) {
        Ok((last, outcome)) if outcome.is_solved() => ((0..fresh).map(|r| last.row_delay(r)).collect(), Solver::Mcts),
        other => {
            match other {
                Err(e) => warn!("search failed, using FIFO: {e}"),
                _ => info!("search left the board unsolved, using FIFO"),
            }
            let fifo = fifo_schedule_with(board, &search.reward);
            (fifo.delays[..fresh].to_vec(), Solver::FifoFallback)
        }
    }
}

/// One scheduling decision at an agent-controlled intersection.
///
/// The leading uncommitted platoon of every conflicting lane within range is
/// projected onto a fresh board, stacked on the residual board of platoons
/// committed earlier and still inside the intersection, and solved. The
/// resulting stop-line times are binding for the vehicles involved.
pub fn agent_control_cycle<E: Evaluator + ?Sized>(
    world: &mut NetworkWorld,
    node: usize,
    eval: &E,
    search: &SearchConfig,
) -> Result<Commitment> {
    if node >= world.nodes.len() {
        return Err(Error::Config(format!("no intersection {node}")));
    }
    let now = world.clock();
    let v = world.cfg.speed;
    let cfg = world.cfg.agent;
    world.nodes[node].committed.retain(|p| p.clear > now + TIME_EPS);

    let mut residual = Board::empty(world.areas);
    for p in &world.nodes[node].committed {
        let cells = cells_for(
            &world.geom[movement_slot(p.movement)].visits,
            world.areas,
            v,
            p.head,
            p.tail,
        );
        residual.push_row(RowKind::Residual, p.id as u32, &cells)?;
    }
    let residual = residual.advance_clock(now);

    let mut candidates = Vec::new();
    for approach in Approach::ALL {
        for turn in [Turn::Left, Turn::Straight] {
            let movement = MovementId::new(approach, turn);
            if world.geom[movement_slot(movement)].visits.is_empty() {
                continue;
            }
            let link = world.link_index(node, approach);
            let lane = &world.links[link].lanes[turn.index()];
            let waiting: Vec<usize> = lane
                .queue
                .iter()
                .copied()
                .skip_while(|&id| world.vehicles[id].as_ref().is_some_and(|x| x.commit.is_some()))
                .take_while(|&id| {
                    world.vehicles[id]
                        .as_ref()
                        .is_some_and(|x| x.d <= cfg.control_range + 1e-9)
                })
                .collect();
            let queued: Vec<QueuedVehicle> = waiting
                .iter()
                .map(|&id| QueuedVehicle {
                    movement,
                    distance: world.vehicles[id].as_ref().expect("queued vehicle").d,
                    speed: v,
                })
                .collect();
            let Some(first) = form_platoons(&queued, cfg.max_platoon, cfg.headway).into_iter().next() else {
                continue;
            };
            let vehicles = waiting[..first.vehicle_count as usize].to_vec();
            let mut prev = lane.last_commit.map(|t| t - now + QUEUE_SPACING_M / v);
            let mut earliest = Vec::with_capacity(vehicles.len());
            for q in &queued[..vehicles.len()] {
                let e = prev.map_or(q.distance / v, |p| p.max(q.distance / v)).max(0.0);
                earliest.push(e);
                prev = Some(e + QUEUE_SPACING_M / v);
            }
            candidates.push(Candidate {
                link,
                lane: turn.index(),
                movement,
                vehicles,
                earliest,
            });
        }
    }
    candidates.sort_by(|a, b| a.earliest[0].total_cmp(&b.earliest[0]));
    candidates.truncate((MAX_ROWS - residual.occupied_rows()).min(MAX_NEW_ROWS));
    if candidates.is_empty() {
        return Ok(Commitment {
            intersection: node,
            time: now,
            platoons: Vec::new(),
            solver: Solver::Idle,
        });
    }

    let mut board = Board::empty(world.areas);
    for (i, c) in candidates.iter().enumerate() {
        let cells = cells_for(
            &world.geom[movement_slot(c.movement)].visits,
            world.areas,
            v,
            c.earliest[0],
            *c.earliest.last().expect("platoon has a vehicle"),
        );
        board.push_row(RowKind::New, i as u32 + 1, &cells)?;
    }
    for r in 0..residual.occupied_rows() {
        board.push_row(RowKind::Residual, residual.row_label(r), &residual.row_cells(r))?;
    }

    let seed = board_seed(world.cfg.seed, world.stats.decisions);
    world.stats.decisions += 1;
    let (delays, solver) = plan_delays(&board, candidates.len(), eval, search, seed);
    match solver {
        Solver::Mcts => world.stats.solver_calls += 1,
        Solver::FifoFallback => {
            world.stats.solver_calls += 1;
            world.stats.fallbacks += 1;
        }
        _ => {}
    }

    let mut platoons = Vec::with_capacity(candidates.len());
    for (c, moves) in candidates.iter().zip(delays) {
        let delay = moves_to_seconds(moves);
        let id = world.next_platoon;
        world.next_platoon += 1;
        let times: Vec<f64> = c.earliest.iter().map(|e| now + e + delay).collect();
        for (&vid, &t) in c.vehicles.iter().zip(&times) {
            world.vehicles[vid].as_mut().expect("queued vehicle").commit = Some(Commit { time: t, platoon: id });
        }
        let geom = &world.geom[movement_slot(c.movement)];
        let last_area = geom.visits.iter().map(|&(_, s, e)| s + e).fold(0.0, f64::max);
        let p = CommittedPlatoon {
            id,
            movement: c.movement,
            vehicles: c.vehicles.len() as u32,
            head: times[0],
            tail: *times.last().expect("platoon has a vehicle"),
            clear: times.last().expect("platoon has a vehicle") + (last_area + VEHICLE_LENGTH_M) / v,
        };
        world.links[c.link].lanes[c.lane].last_commit = Some(p.tail);
        world.nodes[node].committed.push(p);
        platoons.push(p);
    }
    Ok(Commitment {
        intersection: node,
        time: now,
        platoons,
        solver,
    })
}
