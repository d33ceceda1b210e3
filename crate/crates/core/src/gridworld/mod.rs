//! Synthetic occupancy-grid worlds.
//!
//! A [`GroundTruthGrid`] is the hidden scene; an [`OccupancyGrid`] is what the
//! agent has seen of it so far. [`observe`] reveals cells by ray casting,
//! [`detect_frontiers`] clusters the known-free cells bordering the unknown.

mod format;
mod frontier;
mod scene;
mod sensor;

pub use format::{parse_scene, write_scene, SCENE_HEADER};
pub use frontier::{detect_frontiers, detect_frontiers_in_field, Frontier, DEFAULT_MIN_CLUSTER};
pub use scene::{count_dead_ends, generate_scene, SceneConfig};
pub use sensor::{line_of_sight, observe, observe_in_place, sensor_footprint};

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

/// Smallest admissible grid side.
pub const MIN_GRID_SIDE: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid must be at least {MIN_GRID_SIDE}x{MIN_GRID_SIDE}, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
    #[error("cell buffer has {got} entries, expected {expected}")]
    CellCount { expected: usize, got: usize },
    #[error("goal region is empty")]
    EmptyGoal,
    #[error("cell ({row}, {col}) must be free")]
    NotFree { row: usize, col: usize },
    #[error("cell ({row}, {col}) is out of bounds")]
    OutOfBounds { row: usize, col: usize },
    #[error("goal region is not reachable from the start cell")]
    GoalUnreachable,
    #[error("start cell lies inside the goal region")]
    StartInGoal,
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("scene generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: usize, reason: String },
    #[error("scene format error on line {line}: {message}")]
    Format { line: usize, message: String },
}

/// A grid coordinate. Ordering is lexicographic on `(row, col)`.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Offset by `(dr, dc)`, `None` when the result leaves the grid.
    pub fn offset(self, dr: isize, dc: isize, width: usize, height: usize) -> Option<Cell> {
        let row = self.row.checked_add_signed(dr)?;
        let col = self.col.checked_add_signed(dc)?;
        (row < height && col < width).then_some(Cell { row, col })
    }

    pub fn chebyshev(self, other: Cell) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }

    /// True when the two cells are distinct and touch by edge or corner.
    pub fn is_8_adjacent(self, other: Cell) -> bool {
        self.chebyshev(other) == 1
    }

    /// Octile length of the straight segment between two 8-adjacent or equal cells
    /// (0, 1 or sqrt 2).
    pub fn step_cost(self, other: Cell) -> f64 {
        match (self.row.abs_diff(other.row), self.col.abs_diff(other.col)) {
            (0, 0) => 0.0,
            (1, 1) => std::f64::consts::SQRT_2,
            (dr, dc) => (dr + dc) as f64,
        }
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

pub(crate) const NEIGHBORS_4: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
pub(crate) const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Ground-truth terrain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Terrain {
    Free,
    Occupied,
}

/// What the agent believes about a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

impl From<Terrain> for CellState {
    fn from(t: Terrain) -> Self {
        match t {
            Terrain::Free => CellState::Free,
            Terrain::Occupied => CellState::Occupied,
        }
    }
}

/// The hidden scene: terrain, a designated start cell and the goal region whose
/// observation answers the episode's question.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthGrid {
    width: usize,
    height: usize,
    cells: Vec<Terrain>,
    goal: Vec<Cell>,
    start: Cell,
}

impl GroundTruthGrid {
    /// Validates every structural invariant: size, goal cells free and
    /// reachable from `start` under 4-connectivity.
    pub fn new(
        width: usize,
        height: usize,
        cells: Vec<Terrain>,
        mut goal: Vec<Cell>,
        start: Cell,
    ) -> Result<Self, GridError> {
        if width < MIN_GRID_SIDE || height < MIN_GRID_SIDE {
            return Err(GridError::TooSmall { width, height });
        }
        if cells.len() != width * height {
            return Err(GridError::CellCount { expected: width * height, got: cells.len() });
        }
        goal.sort_unstable();
        goal.dedup();
        if goal.is_empty() {
            return Err(GridError::EmptyGoal);
        }
        let grid = Self { width, height, cells, goal, start };
        for &c in grid.goal.iter().chain(std::iter::once(&start)) {
            if c.row >= height || c.col >= width {
                return Err(GridError::OutOfBounds { row: c.row, col: c.col });
            }
            if grid.terrain(c) != Terrain::Free {
                return Err(GridError::NotFree { row: c.row, col: c.col });
            }
        }
        if grid.is_goal(start) {
            return Err(GridError::StartInGoal);
        }
        let reach = grid.reachable_from_start();
        if grid.goal.iter().any(|&g| !reach[grid.index(g)]) {
            return Err(GridError::GoalUnreachable);
        }
        Ok(grid)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    /// Goal cells, sorted.
    pub fn goal(&self) -> &[Cell] {
        &self.goal
    }

    pub fn is_goal(&self, cell: Cell) -> bool {
        self.goal.binary_search(&cell).is_ok()
    }

    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    #[inline]
    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    pub fn terrain(&self, cell: Cell) -> Terrain {
        self.cells[self.index(cell)]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.terrain(cell) == Terrain::Free
    }

    pub fn terrain_slice(&self) -> &[Terrain] {
        &self.cells
    }

    /// Mask of free cells 4-connected to the start cell.
    pub fn reachable_from_start(&self) -> Vec<bool> {
        let mut seen = vec![false; self.cells.len()];
        let mut queue = VecDeque::from([self.start]);
        seen[self.index(self.start)] = true;
        while let Some(c) = queue.pop_front() {
            for (dr, dc) in NEIGHBORS_4 {
                if let Some(n) = c.offset(dr, dc, self.width, self.height) {
                    let i = self.index(n);
                    if !seen[i] && self.cells[i] == Terrain::Free {
                        seen[i] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        seen
    }

    /// Number of free cells reachable from start: the coverage denominator.
    pub fn reachable_free_count(&self) -> usize {
        self.reachable_from_start().iter().filter(|&&b| b).count()
    }

    /// Euclidean length of the grid diagonal.
    pub fn diameter(&self) -> f64 {
        ((self.width * self.width + self.height * self.height) as f64).sqrt()
    }
}

/// The agent's partial map. Cells start `Unknown` and are only ever revealed
/// with their true state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    cells: Vec<CellState>,
}

impl OccupancyGrid {
    pub fn unknown(width: usize, height: usize) -> Self {
        Self { width, height, cells: vec![CellState::Unknown; width * height] }
    }

    /// A belief with every cell revealed.
    pub fn fully_known(truth: &GroundTruthGrid) -> Self {
        Self {
            width: truth.width,
            height: truth.height,
            cells: truth.cells.iter().map(|&t| t.into()).collect(),
        }
    }

    pub fn from_cells(width: usize, height: usize, cells: Vec<CellState>) -> Result<Self, GridError> {
        if cells.len() != width * height {
            return Err(GridError::CellCount { expected: width * height, got: cells.len() });
        }
        Ok(Self { width, height, cells })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    #[inline]
    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    pub fn get(&self, cell: Cell) -> CellState {
        self.cells[self.index(cell)]
    }

    pub fn set(&mut self, cell: Cell, state: CellState) {
        let i = self.index(cell);
        self.cells[i] = state;
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.get(cell) == CellState::Free
    }

    pub fn states(&self) -> &[CellState] {
        &self.cells
    }

    pub fn known_count(&self) -> usize {
        self.cells.iter().filter(|&&s| s != CellState::Unknown).count()
    }

    pub fn known_free_count(&self) -> usize {
        self.cells.iter().filter(|&&s| s == CellState::Free).count()
    }

    /// True when every revealed cell agrees with `truth`.
    pub fn is_sound(&self, truth: &GroundTruthGrid) -> bool {
        self.width == truth.width
            && self.height == truth.height
            && self
                .cells
                .iter()
                .zip(&truth.cells)
                .all(|(&b, &t)| b == CellState::Unknown || b == CellState::from(t))
    }
}

/// Agent pose and the full cell-by-cell trajectory travelled so far.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Cell,
    pub step_index: usize,
    /// Every traversed cell, beginning with the start cell; the last entry is
    /// always `position`.
    pub path: Vec<Cell>,
}

impl AgentState {
    pub fn at(start: Cell) -> Self {
        Self { position: start, step_index: 0, path: vec![start] }
    }

    /// Direction of the most recent nonzero move as `(drow, dcol)`.
    pub fn heading(&self) -> Option<(isize, isize)> {
        let last = *self.path.last()?;
        self.path.iter().rev().find(|&&c| c != last).map(|prev| {
            (last.row as isize - prev.row as isize, last.col as isize - prev.col as isize)
        })
    }
}
