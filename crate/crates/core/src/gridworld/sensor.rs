use super::{AgentState, Cell, GroundTruthGrid, OccupancyGrid, SceneConfig, Terrain};

/// Cells within Chebyshev distance `range` of `center`, clipped to the grid.
pub fn sensor_footprint(center: Cell, range: usize, width: usize, height: usize) -> impl Iterator<Item = Cell> {
    let r0 = center.row.saturating_sub(range);
    let r1 = (center.row + range).min(height - 1);
    let c0 = center.col.saturating_sub(range);
    let c1 = (center.col + range).min(width - 1);
    (r0..=r1).flat_map(move |r| (c0..=c1).map(move |c| Cell::new(r, c)))
}

/// Conservative ray test between cell centres: every cell the segment touches,
/// endpoints excluded, must not be occupied. A segment passing exactly through
/// a lattice corner touches both cells beside the corner.
pub fn line_of_sight(truth: &GroundTruthGrid, from: Cell, to: Cell) -> bool {
    let dr = to.row as isize - from.row as isize;
    let dc = to.col as isize - from.col as isize;
    let (ny, nx) = (dr.unsigned_abs() as i64, dc.unsigned_abs() as i64);
    let (sy, sx) = (dr.signum(), dc.signum());
    let (mut r, mut c) = (from.row as isize, from.col as isize);
    let (mut ix, mut iy) = (0i64, 0i64);
    let blocked = |r: isize, c: isize| {
        let cell = Cell::new(r as usize, c as usize);
        cell != to && truth.terrain(cell) == Terrain::Occupied
    };
    while ix < nx || iy < ny {
        // compare the parametric positions of the next vertical and horizontal grid line crossings
        let decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx;
        if decision == 0 {
            if blocked(r, c + sx) || blocked(r + sy, c) {
                return false;
            }
            r += sy;
            c += sx;
            ix += 1;
            iy += 1;
        } else if decision < 0 {
            c += sx;
            ix += 1;
        } else {
            r += sy;
            iy += 1;
        }
        if blocked(r, c) {
            return false;
        }
    }
    true
}

fn within_fov(agent: &AgentState, target: Cell, fov_deg: f64) -> bool {
    if fov_deg >= 360.0 || target == agent.position {
        return true;
    }
    let (hr, hc) = agent.heading().unwrap_or((0, 1));
    let tr = target.row as f64 - agent.position.row as f64;
    let tc = target.col as f64 - agent.position.col as f64;
    let (hr, hc) = (hr as f64, hc as f64);
    let cos = (tr * hr + tc * hc) / ((tr * tr + tc * tc).sqrt() * (hr * hr + hc * hc).sqrt());
    cos.clamp(-1.0, 1.0).acos().to_degrees() <= fov_deg / 2.0 + 1e-9
}

/// Reveal every cell in the sensor footprint that is inside the field of view
/// and has a clear line of sight from the agent.
pub fn observe_in_place(truth: &GroundTruthGrid, belief: &mut OccupancyGrid, agent: &AgentState, config: &SceneConfig) {
    let pos = agent.position;
    for cell in sensor_footprint(pos, config.sensor_range, truth.width(), truth.height()) {
        if within_fov(agent, cell, config.sensor_fov) && line_of_sight(truth, pos, cell) {
            belief.set(cell, truth.terrain(cell).into());
        }
    }
}

pub fn observe(truth: &GroundTruthGrid, belief: &OccupancyGrid, agent: &AgentState, config: &SceneConfig) -> OccupancyGrid {
    let mut next = belief.clone();
    observe_in_place(truth, &mut next, agent, config);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::CellState;

    fn room(w: usize, h: usize, walls: &[Cell]) -> GroundTruthGrid {
        let mut cells = vec![Terrain::Free; w * h];
        for r in 0..h {
            for c in 0..w {
                if r == 0 || c == 0 || r == h - 1 || c == w - 1 || walls.contains(&Cell::new(r, c)) {
                    cells[r * w + c] = Terrain::Occupied;
                }
            }
        }
        GroundTruthGrid::new(w, h, cells, vec![Cell::new(1, 1)], Cell::new(h / 2, w / 2)).unwrap()
    }

    /// Independent oracle: the closed cell square (doubled coordinates) intersects
    /// the centre-to-centre segment.
    fn touches(from: Cell, to: Cell, cell: Cell) -> bool {
        let (ax, ay) = (2 * from.col as i64 + 1, 2 * from.row as i64 + 1);
        let (bx, by) = (2 * to.col as i64 + 1, 2 * to.row as i64 + 1);
        let (x0, x1) = (2 * cell.col as i64, 2 * cell.col as i64 + 2);
        let (y0, y1) = (2 * cell.row as i64, 2 * cell.row as i64 + 2);
        if ax.max(bx) < x0 || ax.min(bx) > x1 || ay.max(by) < y0 || ay.min(by) > y1 {
            return false;
        }
        let side = |x: i64, y: i64| ((bx - ax) * (y - ay) - (by - ay) * (x - ax)).signum();
        let s = [side(x0, y0), side(x0, y1), side(x1, y0), side(x1, y1)];
        !(s.iter().all(|&v| v > 0) || s.iter().all(|&v| v < 0))
    }

    fn brute_visible(truth: &GroundTruthGrid, from: Cell, to: Cell) -> bool {
        (0..truth.height())
            .flat_map(|r| (0..truth.width()).map(move |c| Cell::new(r, c)))
            .filter(|&c| c != from && c != to && touches(from, to, c))
            .all(|c| truth.is_free(c))
    }

    #[test]
    fn ray_matches_brute_force_oracle() {
        let walls: Vec<Cell> = [(3, 5), (4, 5), (6, 2), (7, 7), (2, 8), (8, 4), (5, 9)]
            .iter()
            .map(|&(r, c)| Cell::new(r, c))
            .collect();
        let truth = room(12, 11, &walls);
        for fr in 0..11 {
            for fc in 0..12 {
                let from = Cell::new(fr, fc);
                for tr in 0..11 {
                    for tc in 0..12 {
                        let to = Cell::new(tr, tc);
                        assert_eq!(
                            line_of_sight(&truth, from, to),
                            brute_visible(&truth, from, to),
                            "{from} -> {to}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn open_room_reveals_full_square() {
        // 9x9 free interior surrounded by walls, agent in the centre
        let truth = room(11, 11, &[]);
        let agent = AgentState::at(Cell::new(5, 5));
        let cfg = SceneConfig { sensor_range: 4, sensor_fov: 360.0, ..SceneConfig::default() };
        let belief = observe(&truth, &OccupancyGrid::unknown(11, 11), &agent, &cfg);
        for r in 0..11 {
            for c in 0..11 {
                let cell = Cell::new(r, c);
                let expected = cell.chebyshev(agent.position) <= 4 && brute_visible(&truth, agent.position, cell);
                assert_eq!(belief.get(cell) != CellState::Unknown, expected, "{cell}");
            }
        }
        assert_eq!(belief.known_count(), 81);
    }

    #[test]
    fn wall_east_hides_cells_behind() {
        let walls: Vec<Cell> = (1..10).map(|r| Cell::new(r, 6)).collect();
        let truth = room(11, 11, &walls);
        let agent = AgentState::at(Cell::new(5, 5));
        let cfg = SceneConfig { sensor_range: 4, ..SceneConfig::default() };
        let belief = observe(&truth, &OccupancyGrid::unknown(11, 11), &agent, &cfg);
        assert_eq!(belief.get(Cell::new(5, 6)), CellState::Occupied);
        for r in 1..10 {
            for c in 7..10 {
                assert_eq!(belief.get(Cell::new(r, c)), CellState::Unknown, "({r}, {c})");
            }
        }
    }

    #[test]
    fn fully_known_is_fixed_point() {
        let truth = room(10, 10, &[Cell::new(4, 4)]);
        let full = OccupancyGrid::fully_known(&truth);
        let agent = AgentState::at(truth.start());
        assert_eq!(observe(&truth, &full, &agent, &SceneConfig::default()), full);
    }

    #[test]
    fn narrow_fov_sees_only_ahead() {
        let truth = room(15, 15, &[]);
        let mut agent = AgentState::at(Cell::new(7, 6));
        agent.path.push(Cell::new(7, 7));
        agent.position = Cell::new(7, 7);
        let cfg = SceneConfig { sensor_range: 5, sensor_fov: 90.0, ..SceneConfig::default() };
        let belief = observe(&truth, &OccupancyGrid::unknown(15, 15), &agent, &cfg);
        assert_eq!(belief.get(Cell::new(7, 11)), CellState::Free);
        assert_eq!(belief.get(Cell::new(7, 3)), CellState::Unknown);
        assert_eq!(belief.get(Cell::new(3, 7)), CellState::Unknown);
        assert_eq!(belief.get(Cell::new(5, 10)), CellState::Free);
    }
}
