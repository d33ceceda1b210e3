use super::{Cell, GridError, GroundTruthGrid, Terrain, MIN_GRID_SIDE, NEIGHBORS_4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const MAX_ATTEMPTS: usize = 64;
const ROOM_TRIES: usize = 200;
const SPUR_TRIES: usize = 200;

/// Parameters of a generated scene and of the agent's sensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub rng_seed: u64,
    pub room_count: usize,
    pub corridor_width: usize,
    pub dead_end_count: usize,
    /// `(width, height)` in cells.
    pub grid_size: (usize, usize),
    /// Chebyshev radius of the sensor footprint, in cells.
    pub sensor_range: usize,
    /// Field of view in degrees, centred on the agent's heading.
    pub sensor_fov: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            rng_seed: 0,
            room_count: 6,
            corridor_width: 2,
            dead_end_count: 4,
            grid_size: (48, 48),
            sensor_range: 8,
            sensor_fov: 360.0,
        }
    }
}

impl SceneConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let (w, h) = self.grid_size;
        if w < MIN_GRID_SIDE || h < MIN_GRID_SIDE {
            return Err(GridError::TooSmall { width: w, height: h });
        }
        if self.room_count < 2 {
            return Err(GridError::InvalidConfig(format!("room_count {} < 2", self.room_count)));
        }
        if self.sensor_range < 2 {
            return Err(GridError::InvalidConfig(format!("sensor_range {} < 2", self.sensor_range)));
        }
        if !(self.sensor_fov > 0.0 && self.sensor_fov <= 360.0) {
            return Err(GridError::InvalidConfig(format!("sensor_fov {} outside (0, 360]", self.sensor_fov)));
        }
        if self.corridor_width == 0 || self.corridor_width > w.min(h) - 2 {
            return Err(GridError::InvalidConfig(format!("corridor_width {}", self.corridor_width)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Room {
    top: usize,
    left: usize,
    height: usize,
    width: usize,
}

impl Room {
    fn center(&self) -> Cell {
        Cell::new(self.top + (self.height - 1) / 2, self.left + (self.width - 1) / 2)
    }

    /// Overlap test with a one-cell wall margin between rooms.
    fn collides(&self, other: &Room) -> bool {
        self.top <= other.top + other.height
            && other.top <= self.top + self.height
            && self.left <= other.left + other.width
            && other.left <= self.left + self.width
    }

    fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (self.top..self.top + self.height)
            .flat_map(move |r| (self.left..self.left + self.width).map(move |c| Cell::new(r, c)))
    }
}

struct Canvas {
    width: usize,
    height: usize,
    cells: Vec<Terrain>,
}

impl Canvas {
    fn get(&self, c: Cell) -> Terrain {
        self.cells[c.row * self.width + c.col]
    }

    fn carve(&mut self, c: Cell) {
        self.cells[c.row * self.width + c.col] = Terrain::Free;
    }

    fn is_interior(&self, r: isize, c: isize) -> bool {
        r >= 1 && c >= 1 && (r as usize) < self.height - 1 && (c as usize) < self.width - 1
    }

    /// Carve a `w x w` block anchored at `c`, shifted to stay inside the border.
    fn carve_block(&mut self, c: Cell, w: usize) {
        let top = c.row.min(self.height - 1 - w);
        let left = c.col.min(self.width - 1 - w);
        for r in top..top + w {
            for cc in left..left + w {
                self.carve(Cell::new(r, cc));
            }
        }
    }
}

/// Generate a rooms-and-corridors scene with planted dead-end spurs.
///
/// The start cell is the centre of one room; the goal region is a block at the
/// centre of another. Identical configs give identical grids.
pub fn generate_scene(config: &SceneConfig) -> Result<GroundTruthGrid, GridError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut last_reason = String::new();
    for _ in 0..MAX_ATTEMPTS {
        match try_generate(config, &mut rng) {
            Ok(grid) => return Ok(grid),
            Err(reason) => last_reason = reason,
        }
    }
    Err(GridError::GenerationFailed { attempts: MAX_ATTEMPTS, reason: last_reason })
}

fn room_side_range(min_dim: usize) -> (usize, usize) {
    if min_dim < 16 {
        (2, 3)
    } else {
        (4, (min_dim / 5).max(4))
    }
}

fn try_generate(config: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<GroundTruthGrid, String> {
    let (width, height) = config.grid_size;
    let mut canvas = Canvas { width, height, cells: vec![Terrain::Occupied; width * height] };
    let (lo, hi) = room_side_range(width.min(height));

    let mut rooms: Vec<Room> = Vec::with_capacity(config.room_count);
    for _ in 0..config.room_count {
        let mut placed = false;
        for _ in 0..ROOM_TRIES {
            let rh = rng.random_range(lo..=hi).min(height - 2);
            let rw = rng.random_range(lo..=hi).min(width - 2);
            let top = rng.random_range(1..=height - 1 - rh);
            let left = rng.random_range(1..=width - 1 - rw);
            let room = Room { top, left, height: rh, width: rw };
            if rooms.iter().all(|r| !r.collides(&room)) {
                rooms.push(room);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(format!("could not place {} rooms in {width}x{height}", config.room_count));
        }
    }
    for room in &rooms {
        for c in room.cells() {
            canvas.carve(c);
        }
    }

    // Prim's MST over room centres (Manhattan), then a few extra edges for loops.
    let n = rooms.len();
    let centers: Vec<Cell> = rooms.iter().map(Room::center).collect();
    let manhattan = |a: Cell, b: Cell| a.row.abs_diff(b.row) + a.col.abs_diff(b.col);
    let mut in_tree = vec![false; n];
    in_tree[0] = true;
    let mut edges = Vec::with_capacity(n);
    for _ in 1..n {
        let (a, b) = (0..n)
            .filter(|&i| in_tree[i])
            .flat_map(|i| (0..n).filter(|&j| !in_tree[j]).map(move |j| (i, j)))
            .min_by_key(|&(i, j)| (manhattan(centers[i], centers[j]), i, j))
            .expect("at least one edge crosses the cut");
        in_tree[b] = true;
        edges.push((a, b));
    }
    for _ in 0..n / 4 {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.push((a, b));
        }
    }
    for (a, b) in edges {
        carve_corridor(&mut canvas, centers[a], centers[b], config.corridor_width, rng.random_bool(0.5));
    }

    let spur_len = (3usize, (width.min(height) / 4).max(4));
    for k in 0..config.dead_end_count {
        if !plant_spur(&mut canvas, &rooms, config.corridor_width, spur_len, rng) {
            return Err(format!("could not plant dead end {} of {}", k + 1, config.dead_end_count));
        }
    }

    let start_room = rooms[0];
    let goal_room = rooms[rng.random_range(1..n)];
    let start = start_room.center();
    let goal = goal_block(&goal_room);

    let grid = GroundTruthGrid::new(width, height, canvas.cells, goal, start).map_err(|e| e.to_string())?;
    let dead_ends = count_dead_ends(&grid, config.corridor_width);
    if dead_ends < config.dead_end_count {
        return Err(format!("only {dead_ends} dead ends, wanted {}", config.dead_end_count));
    }
    Ok(grid)
}

fn goal_block(room: &Room) -> Vec<Cell> {
    let c = room.center();
    let rows = c.row..(c.row + 2).min(room.top + room.height);
    rows.flat_map(|r| (c.col..(c.col + 2).min(room.left + room.width)).map(move |cc| Cell::new(r, cc)))
        .collect()
}

fn carve_corridor(canvas: &mut Canvas, from: Cell, to: Cell, width: usize, horizontal_first: bool) {
    let corner = if horizontal_first { Cell::new(from.row, to.col) } else { Cell::new(to.row, from.col) };
    for (a, b) in [(from, corner), (corner, to)] {
        let (r0, r1) = (a.row.min(b.row), a.row.max(b.row));
        let (c0, c1) = (a.col.min(b.col), a.col.max(b.col));
        for r in r0..=r1 {
            for c in c0..=c1 {
                canvas.carve_block(Cell::new(r, c), width);
            }
        }
    }
}

/// Dig a corridor of `width` cells out of a room wall into solid rock.
fn plant_spur(
    canvas: &mut Canvas,
    rooms: &[Room],
    width: usize,
    (min_len, max_len): (usize, usize),
    rng: &mut ChaCha8Rng,
) -> bool {
    let w = width as isize;
    for _ in 0..SPUR_TRIES {
        let room = rooms[rng.random_range(0..rooms.len())];
        let (dr, dc) = NEIGHBORS_4[rng.random_range(0..4)];
        let span = if dr != 0 { room.width } else { room.height };
        if span < width {
            continue;
        }
        let mut along = |first: usize| rng.random_range(first..=first + span - width) as isize;
        let (root_r, root_c) = match (dr, dc) {
            (-1, 0) => (room.top as isize - 1, along(room.left)),
            (1, 0) => ((room.top + room.height) as isize, along(room.left)),
            (0, -1) => (along(room.top), room.left as isize - 1),
            _ => (along(room.top), (room.left + room.width) as isize),
        };
        let len = rng.random_range(min_len..=max_len) as isize;
        // lateral unit vector; the spur spans offsets 0..w along it
        let (lat_r, lat_c) = (dc.abs(), dr.abs());
        let clear = (0..=len).all(|i| {
            (-1..=w).all(|s| {
                let r = root_r + dr * i + lat_r * s;
                let c = root_c + dc * i + lat_c * s;
                let inside = if i < len {
                    canvas.is_interior(r, c)
                } else {
                    r >= 0 && c >= 0 && (r as usize) < canvas.height && (c as usize) < canvas.width
                };
                inside && canvas.get(Cell::new(r as usize, c as usize)) == Terrain::Occupied
            })
        });
        if !clear {
            continue;
        }
        for i in 0..len {
            for s in 0..w {
                canvas.carve(Cell::new((root_r + dr * i + lat_r * s) as usize, (root_c + dc * i + lat_c * s) as usize));
            }
        }
        return true;
    }
    false
}

/// Number of dead-end tips of corridors `width` cells wide: a row of `width`
/// free cells walled off ahead and at both sides, with free cells behind it.
pub fn count_dead_ends(grid: &GroundTruthGrid, width: usize) -> usize {
    let (w, h) = (grid.width() as isize, grid.height() as isize);
    let free = |r: isize, c: isize| r >= 0 && c >= 0 && r < h && c < w && grid.is_free(Cell::new(r as usize, c as usize));
    let n = width as isize;
    let mut count = 0;
    for r in 0..h {
        for c in 0..w {
            for &(dr, dc) in &NEIGHBORS_4 {
                let (lr, lc) = (dc.abs(), dr.abs());
                let row = |off_r: isize, off_c: isize| (0..n).map(move |s| (r + off_r + lr * s, c + off_c + lc * s));
                let tip = row(0, 0).all(|(a, b)| free(a, b))
                    && row(dr, dc).all(|(a, b)| !free(a, b))
                    && row(-dr, -dc).all(|(a, b)| free(a, b))
                    && !free(r - lr, c - lc)
                    && !free(r + lr * n, c + lc * n);
                if tip {
                    count += 1;
                }
            }
        }
    }
    count
}
