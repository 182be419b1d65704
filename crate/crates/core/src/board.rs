//! The scheduling board: a grid of per-(platoon, collision area) occupancy
//! intervals, the delay actions that act on it, and its terminal reward.
//!
//! Rows hold platoons. New rows come first, in scenario order, followed by
//! residual rows that belong to an already committed schedule and can no
//! longer be moved. Each new row carries its own delay in 0.1 s moves, so
//! shifting is exact integer bookkeeping and independent of action order.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{project_occupancy, IntersectionLayout, Platoon};

/// Board rows: up to 8 new plus 8 residual platoons.
pub const MAX_ROWS: usize = 16;
/// Platoons a single scenario may contribute.
pub const MAX_NEW_ROWS: usize = 8;
/// Largest delay, in moves, one action may impose.
pub const MAX_MOVES: u32 = 20;
/// Seconds per move.
pub const MOVE_SECONDS: f64 = 0.1;
/// Size of the flat action space (one logit per row and delay).
pub const ACTION_DIM: usize = MAX_ROWS * MAX_MOVES as usize;
/// Tolerance for comparing times; intervals closer than this count as touching.
pub const TIME_EPS: f64 = 1e-9;

#[inline]
pub fn moves_to_seconds(moves: u32) -> f64 {
    moves as f64 / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Absent,
    Interval { entry: f64, exit: f64 },
}

impl Cell {
    pub fn interval(self) -> Option<(f64, f64)> {
        match self {
            Cell::Absent => None,
            Cell::Interval { entry, exit } => Some((entry, exit)),
        }
    }

    fn shifted(self, dt: f64) -> Cell {
        match self {
            Cell::Absent => Cell::Absent,
            Cell::Interval { entry, exit } => Cell::Interval {
                entry: entry + dt,
                exit: exit + dt,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Empty,
    New,
    Residual,
}

impl RowKind {
    fn flag(self) -> f64 {
        match self {
            RowKind::Empty => 0.0,
            RowKind::New => 0.5,
            RowKind::Residual => 1.0,
        }
    }
}

/// Delay `moves` x 0.1 s applied to the platoon in `row`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub row: usize,
    pub moves: u32,
}

impl Action {
    pub fn new(row: usize, moves: u32) -> Self {
        Self { row, moves }
    }

    /// Position in the flat `ACTION_DIM` logit vector.
    pub fn index(self) -> usize {
        self.row * MAX_MOVES as usize + (self.moves as usize - 1)
    }

    pub fn from_index(index: usize) -> Self {
        Self {
            row: index / MAX_MOVES as usize,
            moves: (index % MAX_MOVES as usize) as u32 + 1,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row{}+{}", self.row, self.moves)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    /// Crossing-time ceiling, seconds.
    pub t_max: f64,
    /// Step ceiling.
    pub s_max: u32,
    pub alpha: f64,
    pub fail_step_value: f64,
    pub fail_time_value: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            t_max: 30.0,
            s_max: 20,
            alpha: 0.5,
            fail_step_value: -1e-3,
            fail_time_value: -1.0,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must be in [0,1], got {}", self.alpha)));
        }
        if !(self.t_max > 0.0) || self.s_max == 0 {
            return Err(Error::Config("t_max and s_max must be positive".into()));
        }
        Ok(())
    }

    /// Reward of a solved schedule.
    pub fn reward(&self, t_cross: f64, steps: u32) -> f64 {
        self.alpha * (1.0 - t_cross / self.t_max) + (1.0 - self.alpha) * (1.0 - steps as f64 / self.s_max as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Solved,
    FailSteps,
    FailTime,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Solved => "solved",
            Status::FailSteps => "fail_steps",
            Status::FailTime => "fail_time",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub status: Status,
    pub t_cross: f64,
    pub steps: u32,
    pub reward: f64,
}

impl EpisodeOutcome {
    pub fn is_solved(&self) -> bool {
        self.status == Status::Solved
    }
}

/// A pair of rows occupying one area with positive overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Conflict {
    pub area: usize,
    pub row_a: usize,
    pub row_b: usize,
}

/// Legal-action flags over the flat action space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionMask(Vec<bool>);

impl ActionMask {
    pub fn none() -> Self {
        ActionMask(vec![false; ACTION_DIM])
    }

    pub fn from_vec(flags: Vec<bool>) -> Result<Self> {
        if flags.len() != ACTION_DIM {
            return Err(Error::Dimension(format!(
                "mask length {} != {}",
                flags.len(),
                ACTION_DIM
            )));
        }
        Ok(ActionMask(flags))
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn is_legal(&self, action: Action) -> bool {
        action.row < MAX_ROWS && (1..=MAX_MOVES).contains(&action.moves) && self.0[action.index()]
    }

    pub fn any(&self) -> bool {
        self.0.iter().any(|&b| b)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn legal_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// Drops every action delaying by more than `max_moves`.
    pub fn restrict_moves(mut self, max_moves: u32) -> Self {
        for (i, flag) in self.0.iter_mut().enumerate() {
            if Action::from_index(i).moves > max_moves {
                *flag = false;
            }
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Board {
    areas: usize,
    kinds: [RowKind; MAX_ROWS],
    labels: [u32; MAX_ROWS],
    delays: [u32; MAX_ROWS],
    // Undelayed cells, row-major MAX_ROWS x areas.
    cells: Vec<Cell>,
    step_count: u32,
}

impl Board {
    pub fn empty(areas: usize) -> Self {
        Self {
            areas,
            kinds: [RowKind::Empty; MAX_ROWS],
            labels: [0; MAX_ROWS],
            delays: [0; MAX_ROWS],
            cells: vec![Cell::Absent; MAX_ROWS * areas],
            step_count: 0,
        }
    }

    /// One new row per platoon, in the given order.
    pub fn from_scenario(platoons: &[Platoon], layout: &IntersectionLayout) -> Result<Self> {
        if platoons.len() > MAX_NEW_ROWS {
            return Err(Error::Capacity {
                requested: platoons.len(),
                capacity: MAX_NEW_ROWS,
            });
        }
        let mut board = Board::empty(layout.num_areas());
        for p in platoons {
            let mut cells = vec![Cell::Absent; layout.num_areas()];
            for o in project_occupancy(p, layout)? {
                cells[o.area] = Cell::Interval {
                    entry: o.entry,
                    exit: o.exit,
                };
            }
            board.push_row(RowKind::New, p.id, &cells)?;
        }
        Ok(board)
    }

    /// Appends a row after the last occupied one.
    pub fn push_row(&mut self, kind: RowKind, label: u32, cells: &[Cell]) -> Result<usize> {
        if cells.len() != self.areas {
            return Err(Error::Dimension(format!(
                "row has {} cells, board has {} areas",
                cells.len(),
                self.areas
            )));
        }
        for c in cells {
            if let Some((entry, exit)) = c.interval() {
                if !(entry >= -TIME_EPS && entry < exit && exit.is_finite()) {
                    return Err(Error::InvalidScenario(format!("invalid interval ({entry}, {exit})")));
                }
            }
        }
        let row = self.occupied_rows();
        if row >= MAX_ROWS {
            return Err(Error::Capacity {
                requested: row + 1,
                capacity: MAX_ROWS,
            });
        }
        self.kinds[row] = kind;
        self.labels[row] = label;
        self.delays[row] = 0;
        self.cells[row * self.areas..(row + 1) * self.areas].copy_from_slice(cells);
        Ok(row)
    }

    /// Stacks fresh platoons on top of an already resolved schedule.
    ///
    /// Fresh rows keep their order and become `New`; every occupied row of
    /// `residual` follows as a frozen `Residual` row with its delays baked in.
    pub fn overlay(residual: &Board, fresh: &Board) -> Result<Self> {
        if residual.areas != fresh.areas {
            return Err(Error::Dimension(format!(
                "overlay of boards with {} and {} areas",
                residual.areas, fresh.areas
            )));
        }
        if residual.has_conflict() {
            return Err(Error::InvalidScenario("residual board is not conflict-free".into()));
        }
        let requested = residual.occupied_rows() + fresh.occupied_rows();
        if requested > MAX_ROWS {
            return Err(Error::Capacity {
                requested,
                capacity: MAX_ROWS,
            });
        }
        let mut out = Board::empty(fresh.areas);
        for r in 0..fresh.occupied_rows() {
            out.push_row(RowKind::New, fresh.labels[r], &fresh.row_cells(r))?;
        }
        for r in 0..residual.occupied_rows() {
            out.push_row(RowKind::Residual, residual.labels[r], &residual.row_cells(r))?;
        }
        Ok(out)
    }

    /// The schedule as seen `elapsed` seconds later, frozen.
    ///
    /// Every occupied row becomes residual with its times moved back by
    /// `elapsed`. Intervals already over are dropped, intervals in progress
    /// are truncated at the new origin, and rows left with no interval vanish.
    pub fn advance_clock(&self, elapsed: f64) -> Board {
        let mut out = Board::empty(self.areas);
        for r in 0..self.occupied_rows() {
            let cells: Vec<Cell> = self
                .row_cells(r)
                .into_iter()
                .map(|c| match c {
                    Cell::Interval { entry, exit } if exit - elapsed > TIME_EPS => Cell::Interval {
                        entry: (entry - elapsed).max(0.0),
                        exit: exit - elapsed,
                    },
                    _ => Cell::Absent,
                })
                .collect();
            if cells.iter().any(|c| c.interval().is_some()) {
                out.push_row(RowKind::Residual, self.labels[r], &cells)
                    .expect("row count cannot grow");
            }
        }
        out
    }

    pub fn num_areas(&self) -> usize {
        self.areas
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    pub fn set_step_count(&mut self, steps: u32) {
        self.step_count = steps;
    }

    pub fn row_kind(&self, row: usize) -> RowKind {
        self.kinds[row]
    }

    /// Platoon id carried by the row.
    pub fn row_label(&self, row: usize) -> u32 {
        self.labels[row]
    }

    /// Moves applied so far to the row.
    pub fn row_delay(&self, row: usize) -> u32 {
        self.delays[row]
    }

    pub fn occupied_rows(&self) -> usize {
        self.kinds.iter().take_while(|k| **k != RowKind::Empty).count()
    }

    pub fn new_rows(&self) -> usize {
        self.kinds.iter().filter(|k| **k == RowKind::New).count()
    }

    pub fn residual_rows(&self) -> usize {
        self.kinds.iter().filter(|k| **k == RowKind::Residual).count()
    }

    /// Effective (delayed) cell.
    #[inline]
    pub fn cell(&self, row: usize, area: usize) -> Cell {
        let base = self.cells[row * self.areas + area];
        if self.delays[row] == 0 {
            base
        } else {
            base.shifted(moves_to_seconds(self.delays[row]))
        }
    }

    /// Sets the total delay of a row without counting a step.
    pub(crate) fn set_row_delay(&mut self, row: usize, moves: u32) {
        self.delays[row] = moves;
    }

    pub fn row_cells(&self, row: usize) -> Vec<Cell> {
        (0..self.areas).map(|a| self.cell(row, a)).collect()
    }

    fn row_is_blank(&self, row: usize) -> bool {
        self.cells[row * self.areas..(row + 1) * self.areas]
            .iter()
            .all(|c| *c == Cell::Absent)
    }

    /// Latest exit of the row, if it occupies anything.
    pub fn row_max_exit(&self, row: usize) -> Option<f64> {
        (0..self.areas)
            .filter_map(|a| self.cell(row, a).interval().map(|(_, x)| x))
            .reduce(f64::max)
    }

    /// Earliest entry of the row, if it occupies anything.
    pub fn row_min_entry(&self, row: usize) -> Option<f64> {
        (0..self.areas)
            .filter_map(|a| self.cell(row, a).interval().map(|(e, _)| e))
            .reduce(f64::min)
    }

    /// Latest exit over every occupied row; zero for an empty board.
    pub fn t_cross(&self) -> f64 {
        (0..self.occupied_rows())
            .filter_map(|r| self.row_max_exit(r))
            .fold(0.0, f64::max)
    }

    #[inline]
    fn overlaps(a: (f64, f64), b: (f64, f64)) -> bool {
        a.0 < b.1 - TIME_EPS && b.0 < a.1 - TIME_EPS
    }

    /// Every pair of rows sharing an area with positive overlap, ordered by
    /// (area, row_a, row_b) with `row_a < row_b`.
    pub fn conflicts(&self) -> Vec<Conflict> {
        let rows = self.occupied_rows();
        let mut out = Vec::new();
        for area in 0..self.areas {
            for i in 0..rows {
                let Some(a) = self.cell(i, area).interval() else {
                    continue;
                };
                for j in i + 1..rows {
                    if let Some(b) = self.cell(j, area).interval() {
                        if Self::overlaps(a, b) {
                            out.push(Conflict {
                                area,
                                row_a: i,
                                row_b: j,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Whether rows `i` and `j` overlap with positive measure in some area.
    pub fn rows_conflict(&self, i: usize, j: usize) -> bool {
        (0..self.areas).any(
            |area| match (self.cell(i, area).interval(), self.cell(j, area).interval()) {
                (Some(a), Some(b)) => Self::overlaps(a, b),
                _ => false,
            },
        )
    }

    pub fn has_conflict(&self) -> bool {
        let rows = self.occupied_rows();
        (0..self.areas).any(|area| {
            (0..rows).any(|i| {
                self.cell(i, area).interval().is_some_and(|a| {
                    (i + 1..rows).any(|j| self.cell(j, area).interval().is_some_and(|b| Self::overlaps(a, b)))
                })
            })
        })
    }

    /// Moves every new row to its smallest conflict-free delay no larger than
    /// its current one, earliest row first, until nothing moves.
    ///
    /// Delays only shrink, so the crossing time never grows and a
    /// conflict-free board stays conflict-free. A row may jump back past
    /// other rows into an earlier gap. The step count is unchanged.
    pub fn left_shift(&self) -> Board {
        let mut board = self.clone();
        let rows = board.occupied_rows();
        let clear = |b: &Board, r: usize| (0..rows).all(|o| o == r || !b.rows_conflict(r, o));
        loop {
            let mut order: Vec<(f64, usize)> = (0..rows)
                .filter(|&r| board.kinds[r] == RowKind::New && board.delays[r] > 0)
                .filter_map(|r| board.row_min_entry(r).map(|e| (e, r)))
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut moved = false;
            for (_, r) in order {
                let current = board.delays[r];
                for d in 0..current {
                    board.delays[r] = d;
                    if clear(&board, r) {
                        moved = true;
                        break;
                    }
                    board.delays[r] = current;
                }
            }
            if !moved {
                return board;
            }
        }
    }

    /// Rows currently involved in at least one conflict.
    pub fn conflicting_rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.conflicts().iter().flat_map(|c| [c.row_a, c.row_b]).collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }

    pub fn legal_actions(&self, params: &RewardParams) -> ActionMask {
        let mut mask = ActionMask::none();
        for row in 0..self.occupied_rows() {
            if self.kinds[row] != RowKind::New {
                continue;
            }
            let Some(max_exit) = self.row_max_exit(row) else {
                continue;
            };
            for moves in 1..=MAX_MOVES {
                if max_exit + moves_to_seconds(moves) <= params.t_max + TIME_EPS {
                    mask.0[Action::new(row, moves).index()] = true;
                } else {
                    break;
                }
            }
        }
        mask
    }

    /// Delays the whole row by `moves` x 0.1 s and counts one step.
    pub fn apply(&self, action: Action) -> Result<Board> {
        let Action { row, moves } = action;
        if !(1..=MAX_MOVES).contains(&moves) {
            return Err(Error::IllegalAction {
                row,
                moves,
                reason: "moves out of range",
            });
        }
        if row >= MAX_ROWS {
            return Err(Error::IllegalAction {
                row,
                moves,
                reason: "row out of range",
            });
        }
        match self.kinds[row] {
            RowKind::New => {}
            RowKind::Residual => {
                return Err(Error::IllegalAction {
                    row,
                    moves,
                    reason: "residual rows cannot be rescheduled",
                })
            }
            RowKind::Empty => {
                return Err(Error::IllegalAction {
                    row,
                    moves,
                    reason: "empty row",
                })
            }
        }
        if self.row_is_blank(row) {
            return Err(Error::IllegalAction {
                row,
                moves,
                reason: "row occupies no area",
            });
        }
        let mut next = self.clone();
        next.delays[row] += moves;
        next.step_count += 1;
        Ok(next)
    }

    /// Terminal status, or `None` while the board is still in play.
    pub fn evaluate(&self, params: &RewardParams) -> Option<EpisodeOutcome> {
        let t_cross = self.t_cross();
        let steps = self.step_count;
        if t_cross > params.t_max + TIME_EPS {
            return Some(EpisodeOutcome {
                status: Status::FailTime,
                t_cross,
                steps,
                reward: params.fail_time_value,
            });
        }
        if steps > params.s_max {
            return Some(EpisodeOutcome {
                status: Status::FailSteps,
                t_cross,
                steps,
                reward: params.fail_step_value,
            });
        }
        if !self.has_conflict() {
            return Some(EpisodeOutcome {
                status: Status::Solved,
                t_cross,
                steps,
                reward: params.reward(t_cross, steps),
            });
        }
        None
    }

    /// Outcome of a conflicted board that has no legal action left: every
    /// remaining delay would push a row past the time ceiling.
    pub fn dead_end_outcome(&self, params: &RewardParams) -> EpisodeOutcome {
        EpisodeOutcome {
            status: Status::FailTime,
            t_cross: self.t_cross(),
            steps: self.step_count,
            reward: params.fail_time_value,
        }
    }

    pub fn feature_len(areas: usize) -> usize {
        2 * MAX_ROWS * areas + MAX_ROWS
    }

    pub fn encode(&self, params: &RewardParams) -> Vec<f64> {
        let mut out = vec![0.0; Self::feature_len(self.areas)];
        self.encode_into(params, &mut out);
        out
    }

    /// Cells as (entry, exit) / t_max with (-1, -1) for absent or empty,
    /// followed by one kind flag per row.
    pub fn encode_into(&self, params: &RewardParams, out: &mut [f64]) {
        assert_eq!(out.len(), Self::feature_len(self.areas));
        let inv = 1.0 / params.t_max;
        for row in 0..MAX_ROWS {
            for area in 0..self.areas {
                let k = 2 * (row * self.areas + area);
                let (e, x) = match (self.kinds[row], self.cell(row, area)) {
                    (RowKind::Empty, _) | (_, Cell::Absent) => (-1.0, -1.0),
                    (_, Cell::Interval { entry, exit }) => (entry * inv, exit * inv),
                };
                out[k] = e;
                out[k + 1] = x;
            }
        }
        let base = 2 * MAX_ROWS * self.areas;
        for row in 0..MAX_ROWS {
            out[base + row] = self.kinds[row].flag();
        }
    }

    /// Canonical identity of the board: kinds plus cells quantized to 0.1 s.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.areas as u32).to_le_bytes());
        for row in 0..self.occupied_rows() {
            h.update([self.kinds[row] as u8]);
            for area in 0..self.areas {
                match self.cell(row, area) {
                    Cell::Absent => h.update([0u8]),
                    Cell::Interval { entry, exit } => {
                        h.update([1u8]);
                        h.update(((entry * 10.0).round() as i64).to_le_bytes());
                        h.update(((exit * 10.0).round() as i64).to_le_bytes());
                    }
                }
            }
        }
        let digest = h.finalize();
        digest[..8].iter().fold(String::with_capacity(16), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Text grid for debugging, one line per occupied row.
    pub fn dump(&self, layout: Option<&IntersectionLayout>) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:>3} {:<8} {:>5} {:>5} |", "row", "kind", "id", "delay");
        for a in 0..self.areas {
            let name = layout.map_or_else(|| format!("#{a}"), |l| l.areas[a].id.clone());
            let _ = write!(s, " {name:^13} |");
        }
        s.push('\n');
        for row in 0..self.occupied_rows() {
            let kind = match self.kinds[row] {
                RowKind::Empty => "empty",
                RowKind::New => "new",
                RowKind::Residual => "residual",
            };
            let _ = write!(
                s,
                "{:>3} {:<8} {:>5} {:>5.1} |",
                row,
                kind,
                self.labels[row],
                moves_to_seconds(self.delays[row])
            );
            for a in 0..self.areas {
                match self.cell(row, a) {
                    Cell::Absent => {
                        let _ = write!(s, " {:^13} |", "-");
                    }
                    Cell::Interval { entry, exit } => {
                        let _ = write!(s, " {:>6.2}-{:<6.2} |", entry, exit);
                    }
                }
            }
            s.push('\n');
        }
        let _ = writeln!(s, "steps={} t_cross={:.2}", self.step_count, self.t_cross());
        s
    }
}

// Serialized form, used by scenario and trajectory files.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoardRowFile {
    pub kind: RowKind,
    pub label: u32,
    #[serde(default)]
    pub delay_moves: u32,
    /// `null` for absent cells, `[entry, exit]` (undelayed) otherwise.
    pub cells: Vec<Option<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoardFile {
    pub areas: usize,
    #[serde(default)]
    pub step_count: u32,
    pub rows: Vec<BoardRowFile>,
}

impl From<&Board> for BoardFile {
    fn from(b: &Board) -> Self {
        BoardFile {
            areas: b.areas,
            step_count: b.step_count,
            rows: (0..b.occupied_rows())
                .map(|r| BoardRowFile {
                    kind: b.kinds[r],
                    label: b.labels[r],
                    delay_moves: b.delays[r],
                    cells: b.cells[r * b.areas..(r + 1) * b.areas]
                        .iter()
                        .map(|c| c.interval().map(|(e, x)| [e, x]))
                        .collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<BoardFile> for Board {
    type Error = Error;

    fn try_from(f: BoardFile) -> Result<Board> {
        let mut b = Board::empty(f.areas);
        for row in &f.rows {
            if row.kind == RowKind::Empty {
                return Err(Error::InvalidScenario(
                    "empty rows are implicit and must not be listed".into(),
                ));
            }
            if row.kind == RowKind::Residual && row.delay_moves != 0 {
                return Err(Error::InvalidScenario("residual rows carry no delay".into()));
            }
            let cells: Vec<Cell> = row
                .cells
                .iter()
                .map(|c| match c {
                    None => Cell::Absent,
                    Some([entry, exit]) => Cell::Interval {
                        entry: *entry,
                        exit: *exit,
                    },
                })
                .collect();
            let r = b.push_row(row.kind, row.label, &cells)?;
            b.delays[r] = row.delay_moves;
        }
        b.step_count = f.step_count;
        Ok(b)
    }
}

impl Serialize for Board {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BoardFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Board {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = BoardFile::deserialize(d)?;
        Board::try_from(f).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Approach, MovementId, Turn};
    use approx::assert_relative_eq;

    fn iv(entry: f64, exit: f64) -> Cell {
        Cell::Interval { entry, exit }
    }

    fn board_from(rows: &[(RowKind, Vec<Cell>)]) -> Board {
        let areas = rows.first().map_or(1, |r| r.1.len());
        let mut b = Board::empty(areas);
        for (i, (k, cells)) in rows.iter().enumerate() {
            b.push_row(*k, i as u32, cells).unwrap();
        }
        b
    }

    #[test]
    fn left_shift_removes_slack() {
        let mut b = Board::empty(1);
        b.push_row(RowKind::New, 1, &[iv(0.0, 2.0)]).unwrap();
        b.push_row(RowKind::New, 2, &[iv(1.0, 3.0)]).unwrap();
        b.set_row_delay(1, 25);
        let s = b.left_shift();
        assert_eq!(s.row_delay(1), 10);
        assert_eq!(s.row_delay(0), 0);
        assert!(!s.has_conflict());
        assert!(s.t_cross() <= b.t_cross());
        assert_eq!(s.step_count(), b.step_count());
    }

    #[test]
    fn left_shift_jumps_into_an_earlier_gap() {
        // Row 2 sits after the residual block at [4, 8) but fits in [1, 4).
        let mut b = Board::empty(1);
        b.push_row(RowKind::New, 1, &[iv(0.0, 1.0)]).unwrap();
        b.push_row(RowKind::New, 2, &[iv(0.5, 2.5)]).unwrap();
        b.push_row(RowKind::Residual, 9, &[iv(4.0, 8.0)]).unwrap();
        b.set_row_delay(1, 80);
        assert!(!b.has_conflict());
        let s = b.left_shift();
        assert_eq!(s.row_delay(1), 5);
        assert!(!s.has_conflict());
        assert_relative_eq!(s.t_cross(), 8.0, epsilon = 1e-9);
    }

    #[test]
    fn overlap_rule() {
        let b = board_from(&[(RowKind::New, vec![iv(2.0, 5.0)]), (RowKind::New, vec![iv(4.0, 6.0)])]);
        assert_eq!(
            b.conflicts(),
            vec![Conflict {
                area: 0,
                row_a: 0,
                row_b: 1
            }]
        );
        let b = board_from(&[(RowKind::New, vec![iv(2.0, 5.0)]), (RowKind::New, vec![iv(5.0, 7.0)])]);
        assert!(b.conflicts().is_empty());
        assert!(!b.has_conflict());
    }

    #[test]
    fn empty_board_is_solved() {
        let layout = IntersectionLayout::default_fourway();
        let b = Board::from_scenario(&[], &layout).unwrap();
        let out = b.evaluate(&RewardParams::default()).unwrap();
        assert_eq!(out.status, Status::Solved);
        assert_eq!(out.steps, 0);
        assert!(!b.legal_actions(&RewardParams::default()).any());
    }

    #[test]
    fn single_platoon_never_conflicts() {
        let layout = IntersectionLayout::default_fourway();
        let p = Platoon::new(7, MovementId::new(Approach::S, Turn::Left), 4.0, 0.0, 4);
        let b = Board::from_scenario(&[p], &layout).unwrap();
        assert!(b.conflicts().is_empty());
        assert_eq!(b.row_label(0), 7);
    }

    #[test]
    fn too_many_platoons() {
        let layout = IntersectionLayout::default_fourway();
        let p = Platoon::new(0, MovementId::new(Approach::S, Turn::Left), 4.0, 0.0, 1);
        let err = Board::from_scenario(&[p; 9], &layout).unwrap_err();
        assert!(matches!(err, Error::Capacity { requested: 9, .. }));
    }

    #[test]
    fn mask_respects_t_max() {
        let b = board_from(&[(RowKind::New, vec![iv(20.0, 29.5)])]);
        let mask = b.legal_actions(&RewardParams::default());
        for a in 1..=MAX_MOVES {
            assert_eq!(mask.is_legal(Action::new(0, a)), a <= 5, "a={a}");
        }
        assert_eq!(mask.count(), 5);
    }

    #[test]
    fn residual_rows_are_masked_and_immutable() {
        let b = board_from(&[
            (RowKind::New, vec![iv(1.0, 2.0)]),
            (RowKind::Residual, vec![iv(1.5, 3.0)]),
        ]);
        let mask = b.legal_actions(&RewardParams::default());
        assert!((1..=MAX_MOVES).all(|a| !mask.is_legal(Action::new(1, a))));
        assert!(matches!(b.apply(Action::new(1, 1)), Err(Error::IllegalAction { .. })));
    }

    #[test]
    fn apply_shifts_whole_row() {
        let b = board_from(&[(RowKind::New, vec![iv(3.0, 5.5), Cell::Absent, iv(4.0, 6.0)])]);
        let next = b.apply(Action::new(0, 3)).unwrap();
        assert_eq!(next.step_count(), 1);
        let (e, x) = next.cell(0, 0).interval().unwrap();
        assert_relative_eq!(e, 3.3);
        assert_relative_eq!(x, 5.8);
        assert_eq!(next.cell(0, 1), Cell::Absent);
        let (e, _) = next.cell(0, 2).interval().unwrap();
        assert_relative_eq!(e, 4.3);

        let b = board_from(&[(RowKind::New, vec![iv(1.0, 2.0)])]);
        let (e, _) = b.apply(Action::new(0, 20)).unwrap().cell(0, 0).interval().unwrap();
        assert_relative_eq!(e, 3.0);
    }

    #[test]
    fn apply_rejects_out_of_range() {
        let b = board_from(&[(RowKind::New, vec![iv(1.0, 2.0)])]);
        assert!(b.apply(Action::new(0, 0)).is_err());
        assert!(b.apply(Action::new(0, 21)).is_err());
        assert!(b.apply(Action::new(3, 1)).is_err());
    }

    #[test]
    fn reward_examples() {
        let p = RewardParams::default();
        assert_relative_eq!(p.reward(15.0, 4), 0.65, epsilon = 1e-12);
        assert_relative_eq!(p.reward(30.0, 0), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn evaluate_fail_steps_and_fail_time() {
        let params = RewardParams::default();
        let mut b = board_from(&[(RowKind::New, vec![iv(2.0, 5.0)]), (RowKind::New, vec![iv(4.0, 6.0)])]);
        assert!(b.evaluate(&params).is_none());
        b.set_step_count(21);
        let out = b.evaluate(&params).unwrap();
        assert_eq!(out.status, Status::FailSteps);
        assert_eq!(out.reward, -1e-3);

        let b = board_from(&[
            (RowKind::New, vec![iv(2.0, 5.0)]),
            (RowKind::Residual, vec![iv(10.0, 31.0)]),
        ]);
        let out = b.evaluate(&params).unwrap();
        assert_eq!(out.status, Status::FailTime);
        assert_eq!(out.reward, -1.0);
    }

    #[test]
    fn evaluate_solved_uses_all_rows() {
        let params = RewardParams::default();
        let b = board_from(&[
            (RowKind::New, vec![iv(2.0, 5.0)]),
            (RowKind::Residual, vec![iv(5.0, 15.0)]),
        ]);
        let out = b.evaluate(&params).unwrap();
        assert_eq!(out.status, Status::Solved);
        assert_relative_eq!(out.t_cross, 15.0);
        assert_relative_eq!(out.reward, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn encode_layout() {
        let params = RewardParams::default();
        let layout = IntersectionLayout::default_fourway();
        let empty = Board::empty(layout.num_areas());
        let f = empty.encode(&params);
        assert_eq!(f.len(), 272);
        assert!(f[..256].iter().all(|&v| v == -1.0));
        assert!(f[256..].iter().all(|&v| v == 0.0));

        let mut cells = vec![Cell::Absent; 8];
        cells[0] = iv(3.0, 5.5);
        let mut b = Board::empty(8);
        b.push_row(RowKind::New, 0, &cells).unwrap();
        let f = b.encode(&params);
        assert_relative_eq!(f[0], 0.1);
        assert_relative_eq!(f[1], 5.5 / 30.0);
        assert_eq!(f[2], -1.0);
        assert_eq!(f[256], 0.5);
        assert_eq!(f[257], 0.0);
    }

    #[test]
    fn overlay_composition() {
        let residual = board_from(&[(RowKind::New, vec![iv(0.0, 3.0), Cell::Absent])]);
        let fresh = board_from(&[
            (RowKind::New, vec![iv(1.0, 2.0), Cell::Absent]),
            (RowKind::New, vec![Cell::Absent, iv(1.0, 2.0)]),
        ]);
        let b = Board::overlay(&residual, &fresh).unwrap();
        assert_eq!(b.new_rows(), 2);
        assert_eq!(b.residual_rows(), 1);
        assert_eq!(b.row_kind(2), RowKind::Residual);
        assert_eq!(
            b.conflicts(),
            vec![Conflict {
                area: 0,
                row_a: 0,
                row_b: 2
            }]
        );

        let none = Board::empty(2);
        let same = Board::overlay(&none, &fresh).unwrap();
        assert_eq!(same, fresh);
    }

    #[test]
    fn overlay_capacity() {
        let mut residual = Board::empty(1);
        for i in 0..9 {
            residual
                .push_row(RowKind::New, i, &[iv(i as f64, i as f64 + 1.0)])
                .unwrap();
        }
        let mut fresh = Board::empty(1);
        for i in 0..8 {
            fresh.push_row(RowKind::New, i, &[iv(1.0, 2.0)]).unwrap();
        }
        assert!(matches!(
            Board::overlay(&residual, &fresh),
            Err(Error::Capacity { requested: 17, .. })
        ));
    }

    #[test]
    fn advance_clock_clips() {
        let b = board_from(&[
            (RowKind::New, vec![iv(0.0, 2.0), iv(1.0, 4.0)]),
            (RowKind::New, vec![iv(0.5, 1.0), Cell::Absent]),
        ]);
        let later = b.advance_clock(1.5);
        assert_eq!(later.occupied_rows(), 1);
        assert_eq!(later.row_kind(0), RowKind::Residual);
        assert_eq!(later.cell(0, 0), iv(0.0, 0.5));
        assert_eq!(later.cell(0, 1), iv(0.0, 2.5));
    }

    #[test]
    fn serde_round_trip_keeps_delays() {
        let b = board_from(&[
            (RowKind::New, vec![iv(0.0, 2.0)]),
            (RowKind::Residual, vec![iv(3.0, 4.0)]),
        ])
        .apply(Action::new(0, 7))
        .unwrap();
        let text = serde_json::to_string(&b).unwrap();
        let back: Board = serde_json::from_str(&text).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn action_index_round_trip() {
        for i in 0..ACTION_DIM {
            assert_eq!(Action::from_index(i).index(), i);
        }
        assert_eq!(Action::new(1, 1).index(), 20);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        // Boards with 0.1 s-quantized intervals inside [0, 30].
        fn board_strategy() -> impl Strategy<Value = Board> {
            let cell = prop_oneof![
                1 => Just(None),
                3 => (0u32..280, 1u32..20).prop_map(|(e, d)| Some((e, e + d))),
            ];
            let row = (prop::collection::vec(cell, 3), prop::bool::weighted(0.25));
            prop::collection::vec(row, 0..6).prop_map(|rows| {
                let mut b = Board::empty(3);
                let mut news: Vec<_> = rows.iter().filter(|r| !r.1).collect();
                news.extend(rows.iter().filter(|r| r.1));
                for (i, (cells, residual)) in news.into_iter().enumerate() {
                    let cells: Vec<Cell> = cells
                        .iter()
                        .map(|c| c.map_or(Cell::Absent, |(e, x)| iv(e as f64 / 10.0, x as f64 / 10.0)))
                        .collect();
                    let kind = if *residual { RowKind::Residual } else { RowKind::New };
                    b.push_row(kind, i as u32, &cells).unwrap();
                }
                b
            })
        }

        proptest! {
            #[test]
            fn conflicts_symmetric_irreflexive(b in board_strategy()) {
                for c in b.conflicts() {
                    prop_assert!(c.row_a < c.row_b);
                    let x = b.cell(c.row_a, c.area).interval().unwrap();
                    let y = b.cell(c.row_b, c.area).interval().unwrap();
                    prop_assert!(Board::overlaps(x, y) && Board::overlaps(y, x));
                }
                prop_assert_eq!(b.has_conflict(), !b.conflicts().is_empty());
            }

            #[test]
            fn apply_leaves_other_rows_alone(b in board_strategy(), pick in 0usize..ACTION_DIM) {
                let mask = b.legal_actions(&RewardParams::default());
                let legal: Vec<_> = mask.legal_indices().collect();
                prop_assume!(!legal.is_empty());
                let act = Action::from_index(legal[pick % legal.len()]);
                let next = b.apply(act).unwrap();
                let untouched = |cs: Vec<Conflict>| -> Vec<Conflict> {
                    cs.into_iter().filter(|c| c.row_a != act.row && c.row_b != act.row).collect()
                };
                prop_assert_eq!(untouched(b.conflicts()), untouched(next.conflicts()));
                prop_assert!(next.t_cross() <= 30.0 + TIME_EPS);
            }

            #[test]
            fn shifts_commute(b in board_strategy(), p in 0usize..1000, q in 0usize..1000) {
                let mask = b.legal_actions(&RewardParams::default());
                let legal: Vec<_> = mask.legal_indices().collect();
                prop_assume!(legal.len() >= 2);
                let x = Action::from_index(legal[p % legal.len()]);
                let y = Action::from_index(legal[q % legal.len()]);
                prop_assume!(x.row != y.row);
                let xy = b.apply(x).unwrap().apply(y).unwrap();
                let yx = b.apply(y).unwrap().apply(x).unwrap();
                prop_assert_eq!(xy, yx);
            }

            #[test]
            fn legal_sequences_stay_within_t_max(b in board_strategy(), picks in prop::collection::vec(0usize..1000, 0..25)) {
                let params = RewardParams::default();
                prop_assume!(b.t_cross() <= params.t_max);
                let mut cur = b;
                for p in picks {
                    let legal: Vec<_> = cur.legal_actions(&params).legal_indices().collect();
                    if legal.is_empty() { break; }
                    cur = cur.apply(Action::from_index(legal[p % legal.len()])).unwrap();
                    prop_assert!(cur.t_cross() <= params.t_max + TIME_EPS);
                }
            }

            #[test]
            fn solved_reward_in_open_unit_interval(b in board_strategy(), steps in 0u32..=20) {
                let params = RewardParams::default();
                let mut b = b;
                b.set_step_count(steps);
                if let Some(out) = b.evaluate(&params) {
                    if out.is_solved() && out.t_cross < params.t_max && (out.t_cross > 0.0 || steps > 0) {
                        prop_assert!(out.reward > 0.0 && out.reward < 1.0);
                    }
                }
            }

            #[test]
            fn encode_is_injective(a in board_strategy(), b in board_strategy()) {
                let params = RewardParams::default();
                if a.fingerprint() != b.fingerprint() || a.occupied_rows() != b.occupied_rows() {
                    prop_assert_ne!(a.encode(&params), b.encode(&params));
                } else {
                    prop_assert_eq!(a.encode(&params), b.encode(&params));
                }
            }
        }
    }
}
