//! A small deterministic traffic world for running schedules.
//!
//! Vehicles move at the free-flow speed along approach links, queue at stop
//! lines 7 m apart and cross intersections under fixed-time signals, a
//! first-come-first-served reservation controller, or the search agent.

mod agent;
mod platoons;
mod signal;
mod world;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use agent::{agent_control_cycle, plan_delays, AgentConfig, Commitment, CommittedPlatoon, Solver};
pub use platoons::{form_platoons, QueuedVehicle};
pub use signal::{FixedTimePlan, SignalPhase};
pub use world::{
    ControllerKind, NetworkWorld, RouteLeg, VehicleRecord, WorldConfig, WorldStats, QUEUE_SPACING_M, TICK,
};

use crate::error::{Error, Result};
use crate::geometry::{Approach, IntersectionLayout};
use crate::policynet::NetParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub world: WorldConfig,
    /// Simulated seconds.
    pub horizon: f64,
    /// Vehicles entering before this time are left out of the metrics.
    pub warmup: f64,
}

impl ExperimentSpec {
    pub fn new(world: WorldConfig) -> Self {
        Self {
            world,
            horizon: 600.0,
            warmup: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkStat {
    /// `r{row}c{col}{approach}`, the approach the link feeds.
    pub link: String,
    pub intersection: usize,
    pub approach: Approach,
    pub vehicles: usize,
    pub mean_travel_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    /// Mean travel time of measured vehicles, s; absent when none exited.
    pub att: Option<f64>,
    /// Measured vehicles that left the network.
    pub tt: usize,
    pub stats: WorldStats,
    pub in_network: usize,
    pub links: Vec<LinkStat>,
}

/// Runs one simulation to the horizon.
///
/// Vehicles that entered at or after the warmup and left before the horizon
/// are measured.
pub fn run_experiment(
    spec: &ExperimentSpec,
    layout: &IntersectionLayout,
    net: Option<Arc<NetParams>>,
) -> Result<ExperimentResult> {
    if !(spec.horizon > spec.warmup && spec.warmup >= 0.0) {
        return Err(Error::Config(format!(
            "horizon {} s must exceed warmup {} s",
            spec.horizon, spec.warmup
        )));
    }
    let cols = spec.world.cols;
    let mut world = NetworkWorld::new(spec.world.clone(), layout, net)?;
    world.run_until(spec.horizon)?;

    let times: Vec<f64> = world
        .records()
        .iter()
        .filter(|r| r.entry >= spec.warmup)
        .filter_map(|r| r.exit.map(|x| x - r.entry))
        .collect();
    let att = (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64);
    let links = world
        .link_times()
        .into_iter()
        .map(|(node, approach, vehicles, mean)| LinkStat {
            link: format!("r{}c{}{}", node / cols, node % cols, approach),
            intersection: node,
            approach,
            vehicles,
            mean_travel_time: mean,
        })
        .collect();
    Ok(ExperimentResult {
        att,
        tt: times.len(),
        stats: world.stats(),
        in_network: world.in_network(),
        links,
    })
}

/// Controller assignments for the six-step sweep, from all fixed-time to all
/// agents, adding agents from the centre outwards.
pub fn sweep_assignments(rows: usize, cols: usize) -> Vec<Vec<ControllerKind>> {
    let n = rows * cols;
    let (cr, cc) = ((rows - 1) as f64 / 2.0, (cols - 1) as f64 / 2.0);
    let mut order: Vec<usize> = (0..n).collect();
    // Closest to the centre first; ties go north-south before east-west.
    let key = |i: usize| {
        let (r, c) = ((i / cols) as f64, (i % cols) as f64);
        let d = (r - cr).abs() + (c - cc).abs();
        ((d * 2.0) as u64, ((c - cc).abs() * 2.0) as u64, i)
    };
    order.sort_by_key(|&i| key(i));
    let counts: Vec<usize> = if n == 9 {
        vec![0, 1, 3, 5, 7, 9]
    } else {
        let mut c: Vec<usize> = (0..6).map(|k| (n * k).div_ceil(5)).collect();
        c[1] = 1.min(n);
        c
    };
    counts
        .into_iter()
        .map(|k| {
            let mut a = vec![ControllerKind::FixedTime; n];
            for &i in &order[..k.min(n)] {
                a[i] = ControllerKind::PnmctsAgent;
            }
            a
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_demand_has_no_travel_time() {
        let spec = ExperimentSpec::new(WorldConfig::grid(1, 1, ControllerKind::FixedTime, 0.0, 0));
        let r = run_experiment(&spec, &IntersectionLayout::default_fourway(), None).unwrap();
        assert_eq!(r.tt, 0);
        assert_eq!(r.att, None);
        assert_eq!(r.links.len(), 4);
    }

    #[test]
    fn horizon_must_exceed_warmup() {
        let mut spec = ExperimentSpec::new(WorldConfig::grid(1, 1, ControllerKind::FixedTime, 0.0, 0));
        spec.warmup = 700.0;
        assert!(run_experiment(&spec, &IntersectionLayout::default_fourway(), None).is_err());
    }

    #[test]
    fn sweep_grows_from_the_centre() {
        let s = sweep_assignments(3, 3);
        assert_eq!(s.len(), 6);
        let agents: Vec<Vec<usize>> = s
            .iter()
            .map(|a| (0..9).filter(|&i| a[i] == ControllerKind::PnmctsAgent).collect())
            .collect();
        assert_eq!(agents[0], Vec::<usize>::new());
        assert_eq!(agents[1], vec![4]);
        assert_eq!(agents[2], vec![1, 4, 7]);
        assert_eq!(agents[3], vec![1, 3, 4, 5, 7]);
        assert_eq!(agents[5].len(), 9);
        for w in agents.windows(2) {
            assert!(w[0].iter().all(|i| w[1].contains(i)));
        }
    }

    #[test]
    fn fixed_time_results_are_reproducible() {
        let layout = IntersectionLayout::default_fourway();
        let mut spec = ExperimentSpec::new(WorldConfig::grid(2, 2, ControllerKind::FixedTime, 600.0, 3));
        spec.horizon = 300.0;
        let a = run_experiment(&spec, &layout, None).unwrap();
        assert_eq!(a, run_experiment(&spec, &layout, None).unwrap());
        assert!(a.tt > 0 && a.att.unwrap() > 0.0);
    }
}
