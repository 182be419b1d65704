use std::collections::VecDeque;
use std::sync::Arc;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::agent::{agent_control_cycle, AgentConfig, CommittedPlatoon};
use super::signal::FixedTimePlan;
use crate::board::TIME_EPS;
use crate::error::{Error, Result};
use crate::geometry::{Approach, IntersectionLayout, MovementId, Turn, VEHICLE_LENGTH_M};
use crate::policynet::NetParams;
use crate::search::NetEvaluator;

/// Simulation tick, equal to one board move.
pub const TICK: f64 = 0.1;
/// Front-to-front spacing of queued vehicles, m.
pub const QUEUE_SPACING_M: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    FixedTime,
    Fifo,
    PnmctsAgent,
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed_time" | "fixed-time" | "fixed" => Ok(ControllerKind::FixedTime),
            "fifo" => Ok(ControllerKind::Fifo),
            "pnmcts_agent" | "pnmcts" | "agent" => Ok(ControllerKind::PnmctsAgent),
            other => Err(Error::Config(format!("unknown controller {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub rows: usize,
    pub cols: usize,
    /// Length of every approach link, m.
    pub link_length: f64,
    /// Free-flow speed, m/s.
    pub speed: f64,
    /// Poisson arrival rate at each network entrance, vehicles per hour.
    pub demand: f64,
    /// One controller per intersection, row-major.
    pub controllers: Vec<ControllerKind>,
    #[serde(default)]
    pub plan: FixedTimePlan,
    /// Signal offset added per grid step away from the north-west corner, s.
    #[serde(default)]
    pub signal_offset: f64,
    #[serde(default)]
    pub agent: AgentConfig,
    pub seed: u64,
}

impl WorldConfig {
    /// A grid with every intersection under `controller`.
    pub fn grid(rows: usize, cols: usize, controller: ControllerKind, demand: f64, seed: u64) -> Self {
        Self {
            rows,
            cols,
            link_length: 50.0,
            speed: 5.0,
            demand,
            controllers: vec![controller; rows * cols],
            plan: FixedTimePlan::default(),
            signal_offset: 0.0,
            agent: AgentConfig::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("grid must have at least one intersection".into()));
        }
        if self.controllers.len() != self.rows * self.cols {
            return Err(Error::Config(format!(
                "{} controllers given for {} intersections",
                self.controllers.len(),
                self.rows * self.cols
            )));
        }
        if !(self.link_length > 0.0 && self.speed > 0.0 && self.demand >= 0.0) {
            return Err(Error::Config(
                "link length and speed must be positive, demand nonnegative".into(),
            ));
        }
        self.plan.validate()?;
        self.agent.validate()
    }
}

/// One intersection crossed by a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteLeg {
    pub intersection: usize,
    pub movement: MovementId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub id: usize,
    pub entry: f64,
    pub exit: Option<f64>,
    pub route: Vec<RouteLeg>,
}

#[derive(Debug, Clone)]
pub(crate) struct MoveGeom {
    pub path: f64,
    /// (area, arc, extent)
    pub visits: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Commit {
    /// Time the vehicle's front crosses the stop line.
    pub time: f64,
    pub platoon: u64,
}

#[derive(Debug, Clone)]
pub(crate) struct Vehicle {
    /// Distance from the front to the stop line.
    pub d: f64,
    pub link_entered: f64,
    pub commit: Option<Commit>,
}

#[derive(Debug, Clone)]
pub(crate) struct Crossing {
    pub vehicle: usize,
    pub movement: MovementId,
    pub t_enter: f64,
    pub platoon: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Lane {
    pub queue: VecDeque<usize>,
    /// Stop-line time of the last vehicle committed on this lane.
    pub last_commit: Option<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Link {
    pub node: usize,
    pub approach: Approach,
    pub lanes: [Lane; 3],
    pub next_arrival: Option<f64>,
    pub travel_sum: f64,
    pub travel_count: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub controller: ControllerKind,
    pub offset: f64,
    pub crossing: Vec<Crossing>,
    pub committed: Vec<CommittedPlatoon>,
    /// FIFO reservations: (area, entry, exit), absolute times.
    pub reservations: Vec<(usize, f64, f64)>,
    pub next_decision: f64,
    /// An uncommitted vehicle entered the control range since the last decision.
    pub arrival: bool,
}

/// Counters kept while the world runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldStats {
    pub injected: usize,
    pub exited: usize,
    /// Ticks at which two committed platoons shared a collision area at an
    /// agent intersection.
    pub violations: usize,
    /// Committed vehicles that reached the stop line after their slot.
    pub late_entries: usize,
    pub decisions: usize,
    pub solver_calls: usize,
    pub fallbacks: usize,
}

/// A grid of four-way intersections joined by single-direction approach
/// links, advanced in fixed 0.1 s ticks.
pub struct NetworkWorld {
    pub(crate) cfg: WorldConfig,
    pub(crate) geom: Vec<MoveGeom>,
    pub(crate) areas: usize,
    pub(crate) links: Vec<Link>,
    pub(crate) nodes: Vec<Node>,
    pub(crate) vehicles: Vec<Option<Vehicle>>,
    records: Vec<VehicleRecord>,
    pub(crate) rng: ChaCha8Rng,
    ticks: u64,
    pub(crate) stats: WorldStats,
    pub(crate) next_platoon: u64,
    net: Option<Arc<NetParams>>,
}

pub(crate) fn movement_slot(m: MovementId) -> usize {
    m.approach.index() * 3 + m.turn.index()
}

fn heading_after(approach: Approach, turn: Turn) -> Approach {
    use Approach::*;
    let dir = approach.opposite();
    match turn {
        Turn::Straight => dir,
        Turn::Left => match dir {
            S => E,
            N => W,
            E => N,
            W => S,
        },
        Turn::Right => match dir {
            S => W,
            N => E,
            E => S,
            W => N,
        },
    }
}

fn turn_of(i: usize) -> Turn {
    Turn::ALL[i]
}

impl NetworkWorld {
    /// `net` is required when any intersection is agent-controlled.
    pub fn new(cfg: WorldConfig, layout: &IntersectionLayout, net: Option<Arc<NetParams>>) -> Result<Self> {
        cfg.validate()?;
        if net.is_none() && cfg.controllers.contains(&ControllerKind::PnmctsAgent) {
            return Err(Error::Config("agent-controlled intersections need a network".into()));
        }
        let mut geom = Vec::with_capacity(12);
        for a in Approach::ALL {
            for t in Turn::ALL {
                let id = MovementId::new(a, t);
                let visits = layout
                    .movement(id)
                    .ok_or_else(|| Error::Config(format!("layout {} lacks movement {id}", layout.id)))?
                    .sequence
                    .iter()
                    .map(|v| (v.area, v.arc, layout.areas[v.area].extent))
                    .collect();
                geom.push(MoveGeom {
                    path: layout.path_length(id),
                    visits,
                });
            }
        }
        let n = cfg.rows * cfg.cols;
        let nodes = (0..n)
            .map(|i| Node {
                controller: cfg.controllers[i],
                offset: cfg.signal_offset * ((i / cfg.cols) + (i % cfg.cols)) as f64,
                crossing: Vec::new(),
                committed: Vec::new(),
                reservations: Vec::new(),
                next_decision: 0.0,
                arrival: false,
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut links = Vec::with_capacity(4 * n);
        for node in 0..n {
            for a in Approach::ALL {
                let mut link = Link {
                    node,
                    approach: a,
                    lanes: Default::default(),
                    next_arrival: None,
                    travel_sum: 0.0,
                    travel_count: 0,
                };
                if Self::is_entrance(&cfg, node, a) && cfg.demand > 0.0 {
                    link.next_arrival = Some(Self::interarrival(&cfg, &mut rng));
                }
                links.push(link);
            }
        }
        Ok(Self {
            areas: layout.num_areas(),
            cfg,
            geom,
            links,
            nodes,
            vehicles: Vec::new(),
            records: Vec::new(),
            rng,
            ticks: 0,
            stats: WorldStats::default(),
            next_platoon: 0,
            net,
        })
    }

    fn interarrival(cfg: &WorldConfig, rng: &mut ChaCha8Rng) -> f64 {
        Exp::new(cfg.demand / 3600.0).expect("demand is positive").sample(rng)
    }

    fn is_entrance(cfg: &WorldConfig, node: usize, a: Approach) -> bool {
        let (r, c) = (node / cfg.cols, node % cfg.cols);
        match a {
            Approach::N => r == 0,
            Approach::S => r + 1 == cfg.rows,
            Approach::W => c == 0,
            Approach::E => c + 1 == cfg.cols,
        }
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn clock(&self) -> f64 {
        self.ticks as f64 * TICK
    }

    pub fn stats(&self) -> WorldStats {
        self.stats
    }

    pub fn records(&self) -> &[VehicleRecord] {
        &self.records
    }

    pub fn in_network(&self) -> usize {
        self.vehicles.iter().filter(|v| v.is_some()).count()
            + self.nodes.iter().map(|n| n.crossing.len()).sum::<usize>()
    }

    pub(crate) fn link_index(&self, node: usize, a: Approach) -> usize {
        node * 4 + a.index()
    }

    /// `(node, approach, vehicles counted, mean link travel time)` per link.
    /// Link travel time runs from entering the link to crossing its stop line.
    pub fn link_times(&self) -> Vec<(usize, Approach, usize, Option<f64>)> {
        self.links
            .iter()
            .map(|l| {
                let mean = (l.travel_count > 0).then(|| l.travel_sum / l.travel_count as f64);
                (l.node, l.approach, l.travel_count, mean)
            })
            .collect()
    }

    /// Places a vehicle at the upstream end of an approach link now.
    pub fn inject(&mut self, node: usize, approach: Approach, turn: Turn) -> Result<usize> {
        if node >= self.nodes.len() {
            return Err(Error::Config(format!("no intersection {node}")));
        }
        let link = self.link_index(node, approach);
        let now = self.clock();
        Ok(self.spawn(link, turn, now, self.cfg.link_length))
    }

    fn spawn(&mut self, link: usize, turn: Turn, entry: f64, d: f64) -> usize {
        let id = self.records.len();
        self.records.push(VehicleRecord {
            id,
            entry,
            exit: None,
            route: Vec::new(),
        });
        self.vehicles.push(None);
        self.stats.injected += 1;
        self.place(id, link, turn, entry, d);
        id
    }

    fn place(&mut self, id: usize, link: usize, turn: Turn, entered: f64, d: f64) {
        let lane = &mut self.links[link].lanes[turn.index()];
        let d = match lane.queue.back() {
            Some(&last) => d.max(self.vehicles[last].as_ref().expect("queued vehicle").d + QUEUE_SPACING_M),
            None => d,
        };
        lane.queue.push_back(id);
        if d <= self.cfg.agent.control_range {
            let node = self.links[link].node;
            self.nodes[node].arrival = true;
        }
        self.vehicles[id] = Some(Vehicle {
            d,
            link_entered: entered,
            commit: None,
        });
    }

    /// Advances the world by one tick.
    pub fn step(&mut self) -> Result<()> {
        let now = self.clock();
        let next = (self.ticks + 1) as f64 * TICK;
        self.run_agents(now)?;
        self.arrivals(next);
        self.move_links(now, next);
        self.move_crossing(next);
        self.check_safety(next);
        self.ticks += 1;
        Ok(())
    }

    pub fn run_until(&mut self, t: f64) -> Result<()> {
        while self.clock() + 1e-9 < t {
            self.step()?;
        }
        Ok(())
    }

    fn run_agents(&mut self, now: f64) -> Result<()> {
        let Some(net) = self.net.clone() else {
            return Ok(());
        };
        let search = self.cfg.agent.search;
        let eval = NetEvaluator::new(&net, search.reward);
        for node in 0..self.nodes.len() {
            let n = &self.nodes[node];
            let due = now + 1e-9 >= n.next_decision || (self.cfg.agent.decide_on_arrival && n.arrival);
            if n.controller != ControllerKind::PnmctsAgent || !due {
                continue;
            }
            self.nodes[node].next_decision = now + self.cfg.agent.decision_interval;
            self.nodes[node].arrival = false;
            let c = agent_control_cycle(self, node, &eval, &search)?;
            if !c.platoons.is_empty() {
                debug!(
                    "t={now:.1} node {node}: {} platoons via {:?}",
                    c.platoons.len(),
                    c.solver
                );
            }
        }
        Ok(())
    }

    fn arrivals(&mut self, next: f64) {
        for link in 0..self.links.len() {
            while let Some(t) = self.links[link].next_arrival {
                if t > next + 1e-12 {
                    break;
                }
                let turn = turn_of(self.rng.random_range(0..3));
                let d = self.cfg.link_length - self.cfg.speed * (next - t);
                self.spawn(link, turn, t, d);
                let gap = Self::interarrival(&self.cfg, &mut self.rng);
                self.links[link].next_arrival = Some(t + gap);
            }
        }
    }

    /// Whether an uncommitted vehicle may cross the stop line at `t`.
    fn permitted(&mut self, node: usize, movement: MovementId, t: f64) -> bool {
        let v = self.cfg.speed;
        let n = &mut self.nodes[node];
        match n.controller {
            ControllerKind::FixedTime => self.cfg.plan.is_green(movement, t, n.offset),
            ControllerKind::PnmctsAgent => self.geom[movement_slot(movement)].visits.is_empty(),
            ControllerKind::Fifo => {
                let want: Vec<(usize, f64, f64)> = self.geom[movement_slot(movement)]
                    .visits
                    .iter()
                    .map(|&(a, s, e)| (a, t + s / v, t + (s + e + VEHICLE_LENGTH_M) / v))
                    .collect();
                n.reservations.retain(|r| r.2 > t);
                let clash = want.iter().any(|w| {
                    n.reservations
                        .iter()
                        .any(|r| r.0 == w.0 && w.2.min(r.2) - w.1.max(r.1) > TIME_EPS)
                });
                if !clash {
                    n.reservations.extend(want);
                }
                !clash
            }
        }
    }

    fn move_links(&mut self, now: f64, next: f64) {
        let v = self.cfg.speed;
        let dt = next - now;
        for link in 0..self.links.len() {
            let node = self.links[link].node;
            let approach = self.links[link].approach;
            for lane in 0..3 {
                let turn = turn_of(lane);
                let movement = MovementId::new(approach, turn);
                let mut leader: Option<f64> = None;
                let mut i = 0;
                while i < self.links[link].lanes[lane].queue.len() {
                    let id = self.links[link].lanes[lane].queue[i];
                    let veh = self.vehicles[id].as_ref().expect("queued vehicle");
                    let (d, commit) = (veh.d, veh.commit);
                    let mut enter_at = None;
                    let mut d_new = match commit {
                        Some(c) if c.time <= next + 1e-9 => {
                            let reach = now + d / v;
                            if leader.is_none() && reach <= next + 1e-9 {
                                let t = c.time.max(reach);
                                if t > c.time + 1e-6 {
                                    self.stats.late_entries += 1;
                                    warn!("vehicle {id} late by {:.3} s at node {node}", t - c.time);
                                }
                                enter_at = Some(t);
                            }
                            (d - v * dt).max(0.0)
                        }
                        Some(c) => d.min((d - v * dt).max(v * (c.time - next))),
                        None => {
                            let free = d - v * dt;
                            if free <= 1e-9 && leader.is_none() {
                                let t = now + d / v;
                                if self.permitted(node, movement, t) {
                                    enter_at = Some(t);
                                }
                            }
                            free.max(0.0)
                        }
                    };
                    if let Some(t) = enter_at {
                        self.links[link].lanes[lane].queue.pop_front();
                        let veh = self.vehicles[id].take().expect("queued vehicle");
                        let l = &mut self.links[link];
                        l.travel_sum += t - veh.link_entered;
                        l.travel_count += 1;
                        self.records[id].route.push(RouteLeg {
                            intersection: node,
                            movement,
                        });
                        self.nodes[node].crossing.push(Crossing {
                            vehicle: id,
                            movement,
                            t_enter: t,
                            platoon: commit.map(|c| c.platoon),
                        });
                        leader = None;
                        continue;
                    }
                    if let Some(ld) = leader {
                        d_new = d_new.max(ld + QUEUE_SPACING_M);
                    }
                    let range = self.cfg.agent.control_range;
                    if commit.is_none() && d > range && d_new <= range {
                        self.nodes[node].arrival = true;
                    }
                    self.vehicles[id].as_mut().expect("queued vehicle").d = d_new;
                    leader = Some(d_new);
                    i += 1;
                }
            }
        }
    }

    fn move_crossing(&mut self, next: f64) {
        let v = self.cfg.speed;
        let (rows, cols) = (self.cfg.rows, self.cfg.cols);
        for node in 0..self.nodes.len() {
            let crossing = std::mem::take(&mut self.nodes[node].crossing);
            let mut keep = Vec::with_capacity(crossing.len());
            for c in crossing {
                let path = self.geom[movement_slot(c.movement)].path;
                let p = v * (next - c.t_enter);
                if p + 1e-9 < path + VEHICLE_LENGTH_M {
                    keep.push(c);
                    continue;
                }
                let heading = heading_after(c.movement.approach, c.movement.turn);
                let (r, col) = ((node / cols) as isize, (node % cols) as isize);
                let (nr, nc) = match heading {
                    Approach::N => (r - 1, col),
                    Approach::S => (r + 1, col),
                    Approach::E => (r, col + 1),
                    Approach::W => (r, col - 1),
                };
                let t_out = c.t_enter + path / v;
                if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                    self.records[c.vehicle].exit = Some(t_out);
                    self.stats.exited += 1;
                } else {
                    let target = nr as usize * cols + nc as usize;
                    let link = self.link_index(target, heading.opposite());
                    let turn = turn_of(self.rng.random_range(0..3));
                    self.place(c.vehicle, link, turn, t_out, self.cfg.link_length - (p - path));
                }
            }
            self.nodes[node].crossing = keep;
        }
    }

    /// Counts ticks at which two platoons sit in one area of an agent node.
    fn check_safety(&mut self, t: f64) {
        let v = self.cfg.speed;
        let mut owner: Vec<Option<u64>> = vec![None; self.areas];
        for node in 0..self.nodes.len() {
            let n = &self.nodes[node];
            if n.controller != ControllerKind::PnmctsAgent {
                continue;
            }
            owner.iter_mut().for_each(|o| *o = None);
            let mut violated = false;
            for c in &n.crossing {
                let p = v * (t - c.t_enter);
                let key = c.platoon.unwrap_or(u64::MAX - c.vehicle as u64);
                for &(area, s, e) in &self.geom[movement_slot(c.movement)].visits {
                    if p > s + 1e-6 && p < s + e + VEHICLE_LENGTH_M - 1e-6 {
                        match owner[area] {
                            Some(k) if k != key => violated = true,
                            _ => owner[area] = Some(key),
                        }
                    }
                }
            }
            if violated {
                self.stats.violations += 1;
                warn!("collision-area overlap at node {node}, t={t:.1}");
            }
        }
    }
}
