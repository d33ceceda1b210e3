//! Plain-text scene files.
//!
//! ```text
//! gridworld-v1 <width> <height>
//! <height rows of <width> characters: '#' occupied, '.' free, 'G' goal, 'S' start>
//! ```
//!
//! Every line, including the last row, ends with `\n`.

use super::{Cell, GridError, GroundTruthGrid, Terrain};

pub const SCENE_HEADER: &str = "gridworld-v1";

pub fn write_scene(grid: &GroundTruthGrid) -> String {
    let (w, h) = (grid.width(), grid.height());
    let mut out = String::with_capacity((w + 1) * (h + 1) + 24);
    out.push_str(&format!("{SCENE_HEADER} {w} {h}\n"));
    for r in 0..h {
        for c in 0..w {
            let cell = Cell::new(r, c);
            out.push(if cell == grid.start() {
                'S'
            } else if grid.is_goal(cell) {
                'G'
            } else if grid.is_free(cell) {
                '.'
            } else {
                '#'
            });
        }
        out.push('\n');
    }
    out
}

pub fn parse_scene(text: &str) -> Result<GroundTruthGrid, GridError> {
    let err = |line: usize, message: String| GridError::Format { line, message };
    let mut lines = text.split_terminator('\n');
    let header = lines.next().ok_or_else(|| err(1, "empty input".into()))?;
    let parts: Vec<&str> = header.split(' ').collect();
    let (w, h) = match parts.as_slice() {
        [tag, w, h] if *tag == SCENE_HEADER => (
            w.parse::<usize>().map_err(|e| err(1, format!("width: {e}")))?,
            h.parse::<usize>().map_err(|e| err(1, format!("height: {e}")))?,
        ),
        _ => return Err(err(1, format!("expected '{SCENE_HEADER} <width> <height>'"))),
    };
    if !text.ends_with('\n') {
        return Err(err(h + 1, "missing trailing newline".into()));
    }
    let mut cells = Vec::with_capacity(w * h);
    let mut goal = Vec::new();
    let mut start = None;
    for r in 0..h {
        let line_no = r + 2;
        let row = lines.next().ok_or_else(|| err(line_no, format!("expected {h} rows")))?;
        if row.len() != w {
            return Err(err(line_no, format!("row has {} characters, expected {w}", row.len())));
        }
        for (c, ch) in row.chars().enumerate() {
            let cell = Cell::new(r, c);
            cells.push(match ch {
                '#' => Terrain::Occupied,
                '.' => Terrain::Free,
                'G' => {
                    goal.push(cell);
                    Terrain::Free
                }
                'S' => {
                    if start.replace(cell).is_some() {
                        return Err(err(line_no, "more than one start cell".into()));
                    }
                    Terrain::Free
                }
                other => return Err(err(line_no, format!("unexpected character {other:?}"))),
            });
        }
    }
    if lines.next().is_some() {
        return Err(err(h + 2, "trailing content after the last row".into()));
    }
    let start = start.ok_or_else(|| err(0, "no start cell".into()))?;
    GroundTruthGrid::new(w, h, cells, goal, start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{generate_scene, SceneConfig};
    use proptest::prelude::*;

    const FIXTURE: &str = "gridworld-v1 8 8\n\
########\n\
#S..#..#\n\
#...#..#\n\
#......#\n\
#...#GG#\n\
#...#..#\n\
#...####\n\
########\n";

    #[test]
    fn fixture_round_trips() {
        let g = parse_scene(FIXTURE).unwrap();
        assert_eq!(g.start(), Cell::new(1, 1));
        assert_eq!(g.goal(), &[Cell::new(4, 5), Cell::new(4, 6)]);
        assert_eq!(write_scene(&g), FIXTURE);
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_scene("").is_err());
        assert!(parse_scene("gridworld-v2 8 8\n").is_err());
        assert!(parse_scene(&FIXTURE.replace("#S..", "#S.S")).is_err());
        assert!(parse_scene(&FIXTURE.replace("#S..", "#x..")).is_err());
        assert!(parse_scene(FIXTURE.trim_end()).is_err());
        assert!(parse_scene(&format!("{FIXTURE}########\n")).is_err());
        assert!(parse_scene(&FIXTURE.replace("GG", "##")).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn generated_scenes_round_trip(seed in 0u64..10_000) {
            let g = generate_scene(&SceneConfig { rng_seed: seed, ..SceneConfig::default() }).unwrap();
            let text = write_scene(&g);
            let back = parse_scene(&text).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(write_scene(&back), text);
        }
    }
}
