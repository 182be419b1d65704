//! Scenario files: platoons approaching one intersection, optionally on top
//! of a residual schedule that is still being executed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::board::Board;
use crate::error::{Error, Result};
use crate::geometry::{IntersectionLayout, Platoon};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub platoons: Vec<Platoon>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<Board>,
}

impl Scenario {
    pub fn new(platoons: Vec<Platoon>) -> Self {
        Self {
            platoons,
            residual: None,
        }
    }

    /// Four platoons with ids 1 to 4: platoon 4 meets platoon 1 in area A
    /// and platoon 3 in area D on the bundled layout.
    pub fn demo() -> Self {
        use crate::geometry::{Approach, MovementId, Turn};
        Self::new(vec![
            Platoon::new(1, MovementId::new(Approach::S, Turn::Left), 4.6, 13.6, 3),
            Platoon::new(2, MovementId::new(Approach::N, Turn::Straight), 5.0, 3.3, 1),
            Platoon::new(3, MovementId::new(Approach::S, Turn::Straight), 4.8, 9.7, 3),
            Platoon::new(4, MovementId::new(Approach::E, Turn::Straight), 4.2, 11.5, 2),
        ])
    }

    /// The initial board: fresh rows, overlaid on the residual if present.
    pub fn board(&self, layout: &IntersectionLayout) -> Result<Board> {
        let fresh = Board::from_scenario(&self.platoons, layout)?;
        match &self.residual {
            None => Ok(fresh),
            Some(residual) => Board::overlay(residual, &fresh),
        }
    }
}

/// A list of scenarios as written by `pnmcts generate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub layout: String,
    pub seed: u64,
    pub scenarios: Vec<ScenarioEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub fingerprint: String,
    #[serde(flatten)]
    pub scenario: Scenario,
}

impl ScenarioSet {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("scenario set serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn boards(&self, layout: &IntersectionLayout) -> Result<Vec<Board>> {
        self.scenarios.iter().map(|e| e.scenario.board(layout)).collect()
    }
}
