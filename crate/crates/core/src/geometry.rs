//! Intersection layouts and the projection of platoon kinematics onto
//! collision-area occupancy intervals.
//!
//! A layout is a set of collision areas plus, for every (approach, turn)
//! movement, the ordered list of areas the movement's path crosses together
//! with the arc distance of each area from the stop line. Layouts are data:
//! the bundled four-way three-lane layout lives in `layouts/fourway3lane.json`.
//! Its placement of areas A-H is a reconstruction, chosen so that the usual
//! left/straight conflicts exist and right turns cross nothing.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vehicle body length in meters.
pub const VEHICLE_LENGTH_M: f64 = 5.0;
/// Bumper-to-bumper gap between vehicles of one platoon, in meters.
pub const PLATOON_GAP_M: f64 = 2.0;

const DEFAULT_LAYOUT_JSON: &str = include_str!("../layouts/fourway3lane.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Approach {
    N,
    E,
    S,
    W,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::N, Approach::E, Approach::S, Approach::W];

    pub fn index(self) -> usize {
        match self {
            Approach::N => 0,
            Approach::E => 1,
            Approach::S => 2,
            Approach::W => 3,
        }
    }

    /// Direction of travel for a vehicle entering from this approach.
    pub fn opposite(self) -> Approach {
        match self {
            Approach::N => Approach::S,
            Approach::E => Approach::W,
            Approach::S => Approach::N,
            Approach::W => Approach::E,
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Approach::N => "N",
            Approach::E => "E",
            Approach::S => "S",
            Approach::W => "W",
        };
        f.write_str(s)
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" | "n" => Ok(Approach::N),
            "E" | "e" => Ok(Approach::E),
            "S" | "s" => Ok(Approach::S),
            "W" | "w" => Ok(Approach::W),
            other => Err(Error::parse("approach", format!("unknown approach {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Turn {
    Left,
    Straight,
    Right,
}

impl Turn {
    pub const ALL: [Turn; 3] = [Turn::Left, Turn::Straight, Turn::Right];

    pub fn index(self) -> usize {
        match self {
            Turn::Left => 0,
            Turn::Straight => 1,
            Turn::Right => 2,
        }
    }
}

impl fmt::Display for Turn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Turn::Left => "left",
            Turn::Straight => "straight",
            Turn::Right => "right",
        };
        f.write_str(s)
    }
}

impl FromStr for Turn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Turn::Left),
            "straight" => Ok(Turn::Straight),
            "right" => Ok(Turn::Right),
            other => Err(Error::parse("turn", format!("unknown turn {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MovementId {
    pub approach: Approach,
    pub turn: Turn,
}

impl MovementId {
    pub fn new(approach: Approach, turn: Turn) -> Self {
        Self { approach, turn }
    }
}

impl fmt::Display for MovementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.approach, self.turn)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionArea {
    pub id: String,
    /// Longitudinal size of the conflict zone along a path, meters.
    pub extent: f64,
}

/// One crossing of a movement's path with a collision area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaVisit {
    /// Column index of the area in the layout (and on the board).
    pub area: usize,
    /// Arc distance from the stop line to the area's near edge, meters.
    pub arc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Movement {
    pub id: MovementId,
    pub sequence: Vec<AreaVisit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionLayout {
    pub id: String,
    pub areas: Vec<CollisionArea>,
    pub movements: Vec<Movement>,
    pub max_areas_per_movement: usize,
}

// On-disk schema.

#[derive(Debug, Serialize, Deserialize)]
struct LayoutFile {
    #[serde(default = "default_layout_id")]
    id: String,
    areas: Vec<AreaFile>,
    movements: Vec<MovementFile>,
}

fn default_layout_id() -> String {
    "layout".to_string()
}

#[derive(Debug, Serialize, Deserialize)]
struct AreaFile {
    id: String,
    extent_m: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct MovementFile {
    approach: String,
    turn: String,
    #[serde(default)]
    sequence: Vec<VisitFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VisitFile {
    area: String,
    arc_m: f64,
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::InvalidLayout {
        field: field.into(),
        message: message.into(),
    }
}

impl IntersectionLayout {
    /// The bundled four-way, three-lane layout with areas A-H.
    pub fn default_fourway() -> Self {
        Self::from_json_str(DEFAULT_LAYOUT_JSON).expect("bundled layout is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: LayoutFile = serde_json::from_str(text).map_err(|e| Error::parse("layout json", e))?;
        Self::from_file(file)
    }

    fn from_file(file: LayoutFile) -> Result<Self> {
        let mut areas = Vec::with_capacity(file.areas.len());
        let mut seen = HashSet::new();
        for (i, a) in file.areas.iter().enumerate() {
            if !seen.insert(a.id.as_str()) {
                return Err(invalid(
                    format!("areas[{i}].id"),
                    format!("duplicate area id {:?}", a.id),
                ));
            }
            if !(a.extent_m > 0.0 && a.extent_m.is_finite()) {
                return Err(invalid(
                    format!("areas[{i}].extent_m"),
                    format!("extent of {:?} must be positive, got {}", a.id, a.extent_m),
                ));
            }
            areas.push(CollisionArea {
                id: a.id.clone(),
                extent: a.extent_m,
            });
        }

        let mut movements = Vec::with_capacity(file.movements.len());
        let mut seen_movements = HashSet::new();
        for (i, m) in file.movements.iter().enumerate() {
            let approach: Approach = m.approach.parse().map_err(|_| {
                invalid(
                    format!("movements[{i}].approach"),
                    format!("unknown approach {:?}", m.approach),
                )
            })?;
            let turn: Turn = m
                .turn
                .parse()
                .map_err(|_| invalid(format!("movements[{i}].turn"), format!("unknown turn {:?}", m.turn)))?;
            let id = MovementId::new(approach, turn);
            if !seen_movements.insert(id) {
                return Err(invalid(format!("movements[{i}]"), format!("duplicate movement {id}")));
            }
            let mut sequence = Vec::with_capacity(m.sequence.len());
            let mut used = HashSet::new();
            for (k, v) in m.sequence.iter().enumerate() {
                let field = format!("movements[{i}].sequence[{k}]");
                let area = areas
                    .iter()
                    .position(|a| a.id == v.area)
                    .ok_or_else(|| invalid(field.clone(), format!("unknown area {:?}", v.area)))?;
                if !used.insert(area) {
                    return Err(invalid(field, format!("area {:?} repeated in movement {id}", v.area)));
                }
                if !(v.arc_m >= 0.0 && v.arc_m.is_finite()) {
                    return Err(invalid(
                        field,
                        format!("arc distance must be nonnegative, got {}", v.arc_m),
                    ));
                }
                if let Some(prev) = sequence.last() {
                    let prev: &AreaVisit = prev;
                    if v.arc_m <= prev.arc {
                        return Err(invalid(
                            field,
                            format!(
                                "arc distances must be strictly increasing ({} after {})",
                                v.arc_m, prev.arc
                            ),
                        ));
                    }
                }
                sequence.push(AreaVisit { area, arc: v.arc_m });
            }
            movements.push(Movement { id, sequence });
        }

        let max_areas_per_movement = movements.iter().map(|m| m.sequence.len()).max().unwrap_or(0);
        Ok(Self {
            id: file.id,
            areas,
            movements,
            max_areas_per_movement,
        })
    }

    pub fn to_json_string(&self) -> String {
        let file = LayoutFile {
            id: self.id.clone(),
            areas: self
                .areas
                .iter()
                .map(|a| AreaFile {
                    id: a.id.clone(),
                    extent_m: a.extent,
                })
                .collect(),
            movements: self
                .movements
                .iter()
                .map(|m| MovementFile {
                    approach: m.id.approach.to_string(),
                    turn: m.id.turn.to_string(),
                    sequence: m
                        .sequence
                        .iter()
                        .map(|v| VisitFile {
                            area: self.areas[v.area].id.clone(),
                            arc_m: v.arc,
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("layout serializes")
    }

    pub fn num_areas(&self) -> usize {
        self.areas.len()
    }

    pub fn area_index(&self, id: &str) -> Option<usize> {
        self.areas.iter().position(|a| a.id == id)
    }

    pub fn movement(&self, id: MovementId) -> Option<&Movement> {
        self.movements.iter().find(|m| m.id == id)
    }

    /// Movements whose paths cross at least one collision area.
    pub fn conflicting_movements(&self) -> impl Iterator<Item = &Movement> {
        self.movements.iter().filter(|m| !m.sequence.is_empty())
    }

    /// Length of the path through the intersection box, used by the simulator.
    /// Taken as the far edge of the last area, or a nominal 10 m for paths
    /// that cross no area.
    pub fn path_length(&self, id: MovementId) -> f64 {
        self.movement(id)
            .and_then(|m| m.sequence.last().map(|v| v.arc + self.areas[v.area].extent))
            .unwrap_or(10.0)
    }
}

/// A group of up to four vehicles on one movement, scheduled as a unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Platoon {
    pub id: u32,
    pub movement: MovementId,
    /// m/s
    pub speed: f64,
    /// Distance from the head vehicle to the stop line, meters.
    pub distance: f64,
    pub vehicle_count: u32,
}

impl Platoon {
    pub fn new(id: u32, movement: MovementId, speed: f64, distance: f64, vehicle_count: u32) -> Self {
        Self {
            id,
            movement,
            speed,
            distance,
            vehicle_count,
        }
    }

    /// Head-to-tail length in meters.
    pub fn length(&self) -> f64 {
        platoon_length(self.vehicle_count)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "platoon {}: speed must be positive",
                self.id
            )));
        }
        if !(self.distance >= 0.0 && self.distance.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "platoon {}: distance must be nonnegative",
                self.id
            )));
        }
        if self.vehicle_count == 0 {
            return Err(Error::InvalidScenario(format!(
                "platoon {}: vehicle_count must be >= 1",
                self.id
            )));
        }
        Ok(())
    }
}

pub fn platoon_length(vehicle_count: u32) -> f64 {
    let n = vehicle_count as f64;
    VEHICLE_LENGTH_M * n + PLATOON_GAP_M * (n - 1.0).max(0.0)
}

/// Occupancy of one collision area by one platoon, seconds from now.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occupancy {
    pub area: usize,
    pub entry: f64,
    pub exit: f64,
}

/// Projects a platoon holding its speed onto the areas along its path.
///
/// The head reaches an area at `(distance + arc) / speed` and the tail
/// leaves it `(length + extent) / speed` later.
pub fn project_occupancy(platoon: &Platoon, layout: &IntersectionLayout) -> Result<Vec<Occupancy>> {
    platoon.validate()?;
    let movement = layout.movement(platoon.movement).ok_or_else(|| {
        Error::InvalidScenario(format!(
            "movement {} is not part of layout {}",
            platoon.movement, layout.id
        ))
    })?;
    let length = platoon.length();
    Ok(movement
        .sequence
        .iter()
        .map(|v| {
            let extent = layout.areas[v.area].extent;
            Occupancy {
                area: v.area,
                entry: (platoon.distance + v.arc) / platoon.speed,
                exit: (platoon.distance + v.arc + length + extent) / platoon.speed,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_area_layout(arcs: &[f64], extent: f64) -> IntersectionLayout {
        let areas: Vec<_> = (0..arcs.len())
            .map(|i| format!(r#"{{"id":"X{i}","extent_m":{extent}}}"#))
            .collect();
        let seq: Vec<_> = arcs
            .iter()
            .enumerate()
            .map(|(i, s)| format!(r#"{{"area":"X{i}","arc_m":{s}}}"#))
            .collect();
        let text = format!(
            r#"{{"id":"t","areas":[{}],"movements":[{{"approach":"N","turn":"straight","sequence":[{}]}},{{"approach":"N","turn":"right","sequence":[]}}]}}"#,
            areas.join(","),
            seq.join(",")
        );
        IntersectionLayout::from_json_str(&text).unwrap()
    }

    #[test]
    fn default_layout_shape() {
        let layout = IntersectionLayout::default_fourway();
        assert_eq!(layout.areas.len(), 8);
        assert_eq!(layout.movements.len(), 12);
        assert_eq!(layout.max_areas_per_movement, 3);
        let ids: Vec<_> = layout.areas.iter().map(|a| a.id.as_str()).collect();
        assert_eq!(ids, ["A", "B", "C", "D", "E", "F", "G", "H"]);
        for m in &layout.movements {
            match m.id.turn {
                Turn::Right => assert!(m.sequence.is_empty(), "{} should cross nothing", m.id),
                _ => assert!((2..=3).contains(&m.sequence.len())),
            }
            for w in m.sequence.windows(2) {
                assert!(w[0].arc < w[1].arc);
            }
        }
    }

    #[test]
    fn layout_round_trips_through_json() {
        let layout = IntersectionLayout::default_fourway();
        let again = IntersectionLayout::from_json_str(&layout.to_json_string()).unwrap();
        assert_eq!(layout, again);
    }

    #[test]
    fn unknown_area_is_named() {
        let text = r#"{"areas":[{"id":"A","extent_m":2}],
            "movements":[{"approach":"N","turn":"left","sequence":[{"area":"Z","arc_m":1}]}]}"#;
        let err = IntersectionLayout::from_json_str(text).unwrap_err();
        assert!(err.to_string().contains("\"Z\""), "{err}");
    }

    #[test]
    fn duplicate_area_rejected() {
        let text = r#"{"areas":[{"id":"A","extent_m":2},{"id":"A","extent_m":3}],"movements":[]}"#;
        let err = IntersectionLayout::from_json_str(text).unwrap_err();
        assert!(
            matches!(err, Error::InvalidLayout { ref field, .. } if field == "areas[1].id"),
            "{err}"
        );
    }

    #[test]
    fn nonpositive_extent_and_decreasing_arcs_rejected() {
        let text = r#"{"areas":[{"id":"A","extent_m":0}],"movements":[]}"#;
        assert!(IntersectionLayout::from_json_str(text).is_err());
        let text = r#"{"areas":[{"id":"A","extent_m":1},{"id":"B","extent_m":1}],
            "movements":[{"approach":"N","turn":"left","sequence":[{"area":"A","arc_m":5},{"area":"B","arc_m":2}]}]}"#;
        assert!(IntersectionLayout::from_json_str(text).is_err());
    }

    #[test]
    fn empty_movements_is_valid() {
        let text = r#"{"areas":[{"id":"A","extent_m":2}],"movements":[]}"#;
        let layout = IntersectionLayout::from_json_str(text).unwrap();
        assert!(layout.movements.is_empty());
        assert_eq!(layout.max_areas_per_movement, 0);
    }

    #[test]
    fn platoon_length_formula() {
        assert_eq!(platoon_length(1), 5.0);
        assert_eq!(platoon_length(4), 26.0);
    }

    #[test]
    fn single_vehicle_projection() {
        let layout = one_area_layout(&[5.0], 2.5);
        let p = Platoon::new(0, MovementId::new(Approach::N, Turn::Straight), 5.0, 10.0, 1);
        let occ = project_occupancy(&p, &layout).unwrap();
        assert_eq!(occ.len(), 1);
        assert_relative_eq!(occ[0].entry, 3.0);
        assert_relative_eq!(occ[0].exit, 4.5);
    }

    #[test]
    fn long_platoon_overlaps_consecutive_areas() {
        let layout = one_area_layout(&[2.0, 6.0], 2.0);
        let p = Platoon::new(0, MovementId::new(Approach::N, Turn::Straight), 4.0, 0.0, 4);
        let occ = project_occupancy(&p, &layout).unwrap();
        assert_relative_eq!(occ[0].entry, 0.5);
        assert_relative_eq!(occ[0].exit, 7.5);
        assert_relative_eq!(occ[1].entry, 1.5);
        assert_relative_eq!(occ[1].exit, 8.5);
        assert!(occ[1].entry < occ[0].exit);
    }

    #[test]
    fn right_turn_projects_nothing() {
        let layout = IntersectionLayout::default_fourway();
        let p = Platoon::new(0, MovementId::new(Approach::E, Turn::Right), 4.5, 3.0, 2);
        assert!(project_occupancy(&p, &layout).unwrap().is_empty());
    }

    #[test]
    fn movement_outside_layout_is_rejected() {
        let layout = one_area_layout(&[1.0], 1.0);
        let p = Platoon::new(0, MovementId::new(Approach::S, Turn::Left), 4.5, 3.0, 2);
        assert!(project_occupancy(&p, &layout).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn platoon_strategy() -> impl Strategy<Value = Platoon> {
            let layout = IntersectionLayout::default_fourway();
            let ids: Vec<MovementId> = layout.movements.iter().map(|m| m.id).collect();
            (prop::sample::select(ids), 4.0..5.0f64, 0.0..15.0f64, 1u32..=4)
                .prop_map(|(m, v, d, n)| Platoon::new(0, m, v, d, n))
        }

        proptest! {
            #[test]
            fn entries_increase_along_path(p in platoon_strategy()) {
                let layout = IntersectionLayout::default_fourway();
                let occ = project_occupancy(&p, &layout).unwrap();
                for w in occ.windows(2) {
                    prop_assert!(w[0].entry < w[1].entry);
                }
            }

            #[test]
            fn doubling_speed_halves_times(p in platoon_strategy()) {
                let layout = IntersectionLayout::default_fourway();
                let slow = project_occupancy(&p, &layout).unwrap();
                let fast = project_occupancy(&Platoon { speed: p.speed * 2.0, ..p }, &layout).unwrap();
                for (a, b) in slow.iter().zip(&fast) {
                    prop_assert!((a.entry - 2.0 * b.entry).abs() < 1e-12);
                    prop_assert!((a.exit - 2.0 * b.exit).abs() < 1e-12);
                }
            }

            #[test]
            fn duration_is_length_plus_extent_over_speed(p in platoon_strategy()) {
                let layout = IntersectionLayout::default_fourway();
                for o in project_occupancy(&p, &layout).unwrap() {
                    let want = (p.length() + layout.areas[o.area].extent) / p.speed;
                    prop_assert!((o.exit - o.entry - want).abs() < 1e-12);
                }
            }
        }
    }
}
