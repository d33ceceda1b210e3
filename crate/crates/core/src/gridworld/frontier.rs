use super::{AgentState, Cell, CellState, OccupancyGrid, NEIGHBORS_4, NEIGHBORS_8};
use crate::planner::{geodesic_field, DistanceField};
use serde::{Deserialize, Serialize};

/// Clusters smaller than this are treated as sensor noise.
pub const DEFAULT_MIN_CLUSTER: usize = 2;

/// A connected cluster of known-free cells bordering unknown space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    /// Index within the step's frontier list.
    pub id: usize,
    /// Member cells, sorted.
    pub cells: Vec<Cell>,
    /// The member closest to the agent; distances to the frontier are measured here.
    pub representative: Cell,
    /// Distinct unknown cells 4-adjacent to the cluster.
    pub unknown_mass: usize,
}

/// Only edge neighbours count. An unknown cell touching a free cell at a
/// corner only is either also edge-adjacent to some other known-free cell, or
/// hidden behind two walls, where it can never be observed nor entered
/// without cutting the corner.
fn borders_unknown(belief: &OccupancyGrid, cell: Cell) -> bool {
    NEIGHBORS_4.iter().any(|&(dr, dc)| {
        cell.offset(dr, dc, belief.width(), belief.height())
            .is_some_and(|n| belief.get(n) == CellState::Unknown)
    })
}

/// Detect frontiers around the agent. Returns an empty list when the agent's
/// cell is not known-free.
pub fn detect_frontiers(belief: &OccupancyGrid, agent: &AgentState, min_cluster: usize) -> Vec<Frontier> {
    match geodesic_field(belief, agent.position) {
        Ok(field) => detect_frontiers_in_field(belief, &field, min_cluster),
        Err(_) => Vec::new(),
    }
}

/// Frontier detection given a distance field sourced at the agent.
///
/// Clusters are 8-connected; those with fewer than `min_cluster` cells or with
/// no reachable cell are dropped. Output is sorted by representative cell.
pub fn detect_frontiers_in_field(belief: &OccupancyGrid, field: &DistanceField, min_cluster: usize) -> Vec<Frontier> {
    let (w, h) = (belief.width(), belief.height());
    let n = w * h;
    let is_frontier: Vec<bool> = (0..n)
        .map(|i| {
            let c = belief.cell_at(i);
            belief.get(c) == CellState::Free && borders_unknown(belief, c)
        })
        .collect();

    let mut visited = vec![false; n];
    let mut unknown_stamp = vec![usize::MAX; n];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..n {
        if !is_frontier[seed] || visited[seed] {
            continue;
        }
        visited[seed] = true;
        stack.push(seed);
        let mut cells = Vec::new();
        while let Some(i) = stack.pop() {
            let c = belief.cell_at(i);
            cells.push(c);
            for &(dr, dc) in &NEIGHBORS_8 {
                if let Some(nb) = c.offset(dr, dc, w, h) {
                    let j = belief.index(nb);
                    if is_frontier[j] && !visited[j] {
                        visited[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if cells.len() < min_cluster {
            continue;
        }
        let Some(representative) = cells
            .iter()
            .filter_map(|&c| field.distance(c).map(|d| (d, c)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, c)| c)
        else {
            continue;
        };
        let mut unknown_mass = 0;
        for &c in &cells {
            for &(dr, dc) in &NEIGHBORS_4 {
                if let Some(nb) = c.offset(dr, dc, w, h) {
                    let j = belief.index(nb);
                    if belief.get(nb) == CellState::Unknown && unknown_stamp[j] != seed {
                        unknown_stamp[j] = seed;
                        unknown_mass += 1;
                    }
                }
            }
        }
        cells.sort_unstable();
        out.push(Frontier { id: 0, cells, representative, unknown_mass });
    }
    out.sort_by_key(|f| f.representative);
    for (id, f) in out.iter_mut().enumerate() {
        f.id = id;
    }
    out
}
