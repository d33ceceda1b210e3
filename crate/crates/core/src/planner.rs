//! Geodesic distances on the belief grid, closest-frontier selection over the
//! accepted set, and motion along the extracted shortest path.
//!
//! Moves are 8-connected with unit cardinal cost and `sqrt 2` diagonal cost. A
//! diagonal move is allowed only when both orthogonal cells it squeezes between
//! are traversable, so paths never cut wall corners.

use crate::gridworld::{AgentState, Cell, CellState, Frontier, GroundTruthGrid, OccupancyGrid, Terrain, NEIGHBORS_8};
use crate::pruning::PruneDecision;
use crate::scorer::ScoreVector;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

/// Default number of cells moved per decision step.
pub const DEFAULT_STRIDE: usize = 3;

const NO_PARENT: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("source cell {0} is not known-free")]
    SourceNotFree(Cell),
    #[error("no reachable frontier")]
    NoReachableFrontier,
    #[error("score vector covers {scores} frontiers but {frontiers} were detected")]
    LengthMismatch { scores: usize, frontiers: usize },
}

/// Single-source shortest-path tree over traversable cells.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    source: Cell,
    distances: Vec<f64>,
    parents: Vec<u32>,
}

impl DistanceField {
    pub fn source(&self) -> Cell {
        self.source
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Path cost from the nearest source, `None` if unreachable.
    pub fn distance(&self, cell: Cell) -> Option<f64> {
        let d = self.distances[cell.row * self.width + cell.col];
        d.is_finite().then_some(d)
    }

    pub fn parent(&self, cell: Cell) -> Option<Cell> {
        let p = self.parents[cell.row * self.width + cell.col];
        (p != NO_PARENT).then(|| Cell::new(p as usize / self.width, p as usize % self.width))
    }

    /// Cells from the source to `target`, both inclusive.
    pub fn path_to(&self, target: Cell) -> Option<Vec<Cell>> {
        self.distance(target)?;
        let mut path = vec![target];
        let mut cur = target;
        while let Some(p) = self.parent(cur) {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(path)
    }
}

#[derive(PartialEq)]
struct Entry(f64, u32);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then on cell index
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(width: usize, height: usize, passable: &[bool], sources: &[Cell]) -> (Vec<f64>, Vec<u32>) {
    let n = width * height;
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![NO_PARENT; n];
    let mut heap = BinaryHeap::new();
    for s in sources {
        let i = s.row * width + s.col;
        dist[i] = 0.0;
        heap.push(Entry(0.0, i as u32));
    }
    while let Some(Entry(d, i)) = heap.pop() {
        let i = i as usize;
        if d > dist[i] {
            continue;
        }
        let c = Cell::new(i / width, i % width);
        for &(dr, dc) in &NEIGHBORS_8 {
            let Some(nb) = c.offset(dr, dc, width, height) else { continue };
            let j = nb.row * width + nb.col;
            if !passable[j] {
                continue;
            }
            let diagonal = dr != 0 && dc != 0;
            if diagonal {
                let a = (c.row as isize + dr) as usize * width + c.col;
                let b = c.row * width + (c.col as isize + dc) as usize;
                if !passable[a] || !passable[b] {
                    continue;
                }
            }
            let nd = d + if diagonal { std::f64::consts::SQRT_2 } else { 1.0 };
            if nd < dist[j] {
                dist[j] = nd;
                parent[j] = i as u32;
                heap.push(Entry(nd, j as u32));
            }
        }
    }
    (dist, parent)
}

/// Shortest geodesic distances from `source` over known-free cells.
pub fn geodesic_field(belief: &OccupancyGrid, source: Cell) -> Result<DistanceField, PlanError> {
    if source.row >= belief.height() || source.col >= belief.width() || !belief.is_free(source) {
        return Err(PlanError::SourceNotFree(source));
    }
    let passable: Vec<bool> = belief.states().iter().map(|&s| s == CellState::Free).collect();
    let (distances, parents) = dijkstra(belief.width(), belief.height(), &passable, &[source]);
    Ok(DistanceField { width: belief.width(), height: belief.height(), source, distances, parents })
}

/// Multi-source distances over ground-truth free cells. Used by the oracle
/// scorer, the labeler and the metrics, never by the planner.
pub fn truth_field(truth: &GroundTruthGrid, sources: &[Cell]) -> DistanceField {
    let passable: Vec<bool> = truth.terrain_slice().iter().map(|&t| t == Terrain::Free).collect();
    let (distances, parents) = dijkstra(truth.width(), truth.height(), &passable, sources);
    DistanceField {
        width: truth.width(),
        height: truth.height(),
        source: sources.first().copied().unwrap_or(Cell::new(0, 0)),
        distances,
        parents,
    }
}

/// The frontier chosen for this step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Selection<'a> {
    pub frontier: &'a Frontier,
    /// True when the accepted set was empty or unreachable and the
    /// highest-confidence frontier was taken instead.
    pub fallback: bool,
}

/// The reachable frontier among `ids` whose representative is closest; ties go
/// to the lowest id.
pub fn closest_frontier<'a>(
    ids: impl IntoIterator<Item = usize>,
    frontiers: &'a [Frontier],
    field: &DistanceField,
) -> Option<&'a Frontier> {
    ids.into_iter()
        .filter_map(|id| frontiers.iter().find(|f| f.id == id))
        .filter_map(|f| field.distance(f.representative).map(|d| (d, f)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)))
        .map(|(_, f)| f)
}

/// Closest accepted frontier, falling back to the argmax-confidence frontier
/// when nothing accepted is reachable.
pub fn select_frontier<'a>(
    decision: &PruneDecision,
    frontiers: &'a [Frontier],
    field: &DistanceField,
    scores: &ScoreVector,
) -> Result<Selection<'a>, PlanError> {
    if scores.confidences.len() != frontiers.len() {
        return Err(PlanError::LengthMismatch { scores: scores.confidences.len(), frontiers: frontiers.len() });
    }
    if let Some(frontier) = closest_frontier(decision.accepted_ids.iter().copied(), frontiers, field) {
        return Ok(Selection { frontier, fallback: false });
    }
    let best = scores.argmax().ok_or(PlanError::NoReachableFrontier)?;
    match frontiers.iter().find(|f| f.id == best) {
        Some(f) if field.distance(f.representative).is_some() => Ok(Selection { frontier: f, fallback: true }),
        _ => Err(PlanError::NoReachableFrontier),
    }
}

/// Move up to `stride` cells along the shortest path to the target's
/// representative. The step counter always advances.
pub fn advance(agent: &AgentState, target: &Frontier, field: &DistanceField, stride: usize) -> AgentState {
    debug_assert_eq!(field.source(), agent.position, "field must be sourced at the agent");
    let mut next = agent.clone();
    next.step_index += 1;
    if let Some(path) = field.path_to(target.representative) {
        for &cell in path.iter().skip(1).take(stride) {
            next.path.push(cell);
            next.position = cell;
        }
    }
    next
}
