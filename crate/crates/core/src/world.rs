//! Grids, puzzles, tasks and task specifications.
//!
//! Text format, one character per cell:
//!
//! ```text
//! #  wall            .  free            ?  unknown
//! x  goal (HoCMaze)  1-9 marker count   ^ > v <  avatar on a plain free cell
//! A  avatar on a goal or marker cell, resolved by a trailing `@A <dir> <cell>` line
//! ```

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{Ast, BlockKind, Delta, Domain, DslError, Sketch};

pub const MARKER_CAP: u8 = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cell {
    Wall,
    /// A free cell with its marker count (always 0 in HoCMaze).
    Free(u8),
    Unknown,
}

impl Cell {
    pub fn is_free(self) -> bool {
        matches!(self, Cell::Free(_))
    }

    pub fn markers(self) -> u8 {
        match self {
            Cell::Free(k) => k,
            _ => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dir {
    N,
    E,
    S,
    W,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::N, Dir::E, Dir::S, Dir::W];

    pub fn left(self) -> Dir {
        match self {
            Dir::N => Dir::W,
            Dir::W => Dir::S,
            Dir::S => Dir::E,
            Dir::E => Dir::N,
        }
    }

    pub fn right(self) -> Dir {
        match self {
            Dir::N => Dir::E,
            Dir::E => Dir::S,
            Dir::S => Dir::W,
            Dir::W => Dir::N,
        }
    }

    /// `(drow, dcol)` of one step forward.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Dir::N => (-1, 0),
            Dir::E => (0, 1),
            Dir::S => (1, 0),
            Dir::W => (0, -1),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn to_char(self) -> char {
        match self {
            Dir::N => '^',
            Dir::E => '>',
            Dir::S => 'v',
            Dir::W => '<',
        }
    }

    pub fn from_char(c: char) -> Option<Dir> {
        match c {
            '^' => Some(Dir::N),
            '>' => Some(Dir::E),
            'v' => Some(Dir::S),
            '<' => Some(Dir::W),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pose {
    pub row: usize,
    pub col: usize,
    pub dir: Dir,
}

impl Pose {
    pub fn new(row: usize, col: usize, dir: Dir) -> Pose {
        Pose { row, col, dir }
    }

    pub fn cell(self) -> (usize, usize) {
        (self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("grid format error at {line}:{col}: {msg}")]
pub struct FormatError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("puzzle still contains unknown cells")]
    IncompletePuzzle,
    #[error("invalid: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dsl(#[from] DslError),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<Cell>,
    pub avatar: Option<Pose>,
    pub goal: Option<(usize, usize)>,
}

impl Grid {
    pub fn filled(rows: usize, cols: usize, cell: Cell) -> Grid {
        Grid {
            rows,
            cols,
            cells: alloc::vec![cell; rows * cols],
            avatar: None,
            goal: None,
        }
    }

    /// A fully uninitialized grid, the default puzzle of a task specification.
    pub fn unknown(rows: usize, cols: usize) -> Grid {
        Grid::filled(rows, cols, Cell::Unknown)
    }

    pub fn get(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, cell: Cell) {
        self.cells[row * self.cols + col] = cell;
    }

    /// Cell at a signed offset, `None` when out of bounds.
    pub fn neighbor(&self, row: usize, col: usize, dir: Dir) -> Option<(usize, usize)> {
        let (dr, dc) = dir.delta();
        let r = row as isize + dr;
        let c = col as isize + dc;
        (r >= 0 && c >= 0 && (r as usize) < self.rows && (c as usize) < self.cols)
            .then_some((r as usize, c as usize))
    }

    pub fn is_complete(&self) -> bool {
        !self.cells.contains(&Cell::Unknown)
    }

    pub fn total_markers(&self) -> u32 {
        self.cells.iter().map(|c| u32::from(c.markers())).sum()
    }

    pub fn same_walls(&self, other: &Grid) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .cells
                .iter()
                .zip(&other.cells)
                .all(|(a, b)| (*a == Cell::Wall) == (*b == Cell::Wall))
    }

    /// Cell-wise equality, ignoring avatar and goal.
    pub fn same_cells(&self, other: &Grid) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.cells == other.cells
    }

    /// Checks the structural invariants of a grid used in `domain`.
    pub fn validate(&self, domain: Domain) -> Result<(), WorldError> {
        if self.rows == 0 || self.cols == 0 || self.cells.len() != self.rows * self.cols {
            return Err(WorldError::Invalid("bad grid dimensions".into()));
        }
        if let Some(p) = self.avatar {
            if p.row >= self.rows || p.col >= self.cols || !self.get(p.row, p.col).is_free() {
                return Err(WorldError::Invalid(
                    "avatar must stand on a free cell".into(),
                ));
            }
        }
        if let Some((r, c)) = self.goal {
            if domain == Domain::Karel {
                return Err(WorldError::Invalid("Karel grids have no goal".into()));
            }
            if r >= self.rows || c >= self.cols || self.get(r, c) == Cell::Wall {
                return Err(WorldError::Invalid("goal must not be a wall".into()));
            }
        }
        if domain == Domain::HocMaze && self.cells.iter().any(|c| c.markers() > 0) {
            return Err(WorldError::Invalid("HoCMaze grids have no markers".into()));
        }
        if self.cells.iter().any(|c| c.markers() > MARKER_CAP) {
            return Err(WorldError::Invalid("marker count above cap".into()));
        }
        Ok(())
    }

    fn base_char(&self, row: usize, col: usize) -> char {
        if self.goal == Some((row, col)) {
            return 'x';
        }
        match self.get(row, col) {
            Cell::Wall => '#',
            Cell::Unknown => '?',
            Cell::Free(0) => '.',
            Cell::Free(k) => char::from(b'0' + k.min(9)),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.cols + 1) * self.rows + 8);
        let mut side = None;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let base = self.base_char(r, c);
                match self.avatar {
                    Some(p) if p.cell() == (r, c) => {
                        if base == '.' {
                            out.push(p.dir.to_char());
                        } else {
                            out.push('A');
                            side = Some((p.dir, base));
                        }
                    }
                    _ => out.push(base),
                }
            }
            out.push('\n');
        }
        if let Some((d, base)) = side {
            out.push_str(&format!("@A {} {}\n", d.to_char(), base));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Grid, FormatError> {
        let err = |line: usize, col: usize, msg: &str| FormatError {
            line,
            col,
            msg: msg.to_string(),
        };
        let mut rows: Vec<(usize, &str)> = Vec::new();
        let mut side: Option<(usize, &str)> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('@') {
                if side.is_some() {
                    return Err(err(i + 1, 1, "duplicate side-table entry"));
                }
                side = Some((i + 1, rest));
            } else {
                if side.is_some() {
                    return Err(err(i + 1, 1, "grid row after side table"));
                }
                rows.push((i + 1, line));
            }
        }
        if rows.is_empty() {
            return Err(err(1, 1, "empty grid"));
        }
        let cols = rows[0].1.chars().count();
        let mut g = Grid::filled(rows.len(), cols, Cell::Free(0));
        let mut placeholder = None;
        for (r, &(line_no, row)) in rows.iter().enumerate() {
            let n = row.chars().count();
            if n != cols {
                return Err(err(
                    line_no,
                    n.min(cols) + 1,
                    &format!("row has {n} cells, expected {cols}"),
                ));
            }
            for (c, ch) in row.chars().enumerate() {
                let cell = match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Free(0),
                    '?' => Cell::Unknown,
                    'x' => {
                        if g.goal.is_some() {
                            return Err(err(line_no, c + 1, "second goal"));
                        }
                        g.goal = Some((r, c));
                        Cell::Free(0)
                    }
                    '1'..='9' => Cell::Free(ch as u8 - b'0'),
                    'A' => {
                        if g.avatar.is_some() || placeholder.is_some() {
                            return Err(err(line_no, c + 1, "second avatar"));
                        }
                        placeholder = Some((r, c, line_no, c + 1));
                        Cell::Free(0)
                    }
                    _ => match Dir::from_char(ch) {
                        Some(d) => {
                            if g.avatar.is_some() || placeholder.is_some() {
                                return Err(err(line_no, c + 1, "second avatar"));
                            }
                            g.avatar = Some(Pose::new(r, c, d));
                            Cell::Free(0)
                        }
                        None => {
                            return Err(err(
                                line_no,
                                c + 1,
                                &format!("unexpected character `{ch}`"),
                            ))
                        }
                    },
                };
                g.set(r, c, cell);
            }
        }
        match (placeholder, side) {
            (None, None) => {}
            (Some((_, _, l, c)), None) => {
                return Err(err(l, c, "`A` needs an `@A <dir> <cell>` line"))
            }
            (None, Some((l, _))) => return Err(err(l, 1, "side table without `A` cell")),
            (Some((r, c, _, _)), Some((l, rest))) => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 || parts[0] != "A" {
                    return Err(err(l, 2, "expected `@A <dir> <cell>`"));
                }
                let mut dc = parts[1].chars();
                let dir = match (dc.next().and_then(Dir::from_char), dc.next()) {
                    (Some(d), None) => d,
                    _ => return Err(err(l, 4, "bad direction")),
                };
                let mut cc = parts[2].chars();
                match (cc.next(), cc.next()) {
                    (Some('x'), None) => {
                        if g.goal.is_some() {
                            return Err(err(l, 6, "second goal"));
                        }
                        g.goal = Some((r, c));
                    }
                    (Some(ch @ '1'..='9'), None) => g.set(r, c, Cell::Free(ch as u8 - b'0')),
                    _ => return Err(err(l, 6, "avatar cell must be `x` or a marker digit")),
                }
                g.avatar = Some(Pose::new(r, c, dir));
            }
        }
        Ok(g)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl Serialize for Grid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let text = self.to_text();
        let lines: Vec<&str> = text.lines().collect();
        lines.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let lines: Vec<String> = Vec::deserialize(d)?;
        Grid::parse(&lines.join("\n")).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Puzzle {
    Maze(Grid),
    Karel { pre: Grid, post: Grid },
}

impl Puzzle {
    pub fn domain(&self) -> Domain {
        match self {
            Puzzle::Maze(_) => Domain::HocMaze,
            Puzzle::Karel { .. } => Domain::Karel,
        }
    }

    /// The grid execution starts from.
    pub fn start(&self) -> &Grid {
        match self {
            Puzzle::Maze(g) => g,
            Puzzle::Karel { pre, .. } => pre,
        }
    }

    pub fn is_complete(&self) -> bool {
        match self {
            Puzzle::Maze(g) => g.is_complete(),
            Puzzle::Karel { pre, post } => pre.is_complete() && post.is_complete(),
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        match self {
            Puzzle::Maze(g) => {
                g.validate(Domain::HocMaze)?;
                if g.goal.is_none() || g.avatar.is_none() {
                    return Err(WorldError::Invalid("maze needs avatar and goal".into()));
                }
            }
            Puzzle::Karel { pre, post } => {
                pre.validate(Domain::Karel)?;
                post.validate(Domain::Karel)?;
                if !pre.same_walls(post) {
                    return Err(WorldError::Invalid(
                        "pregrid and postgrid differ in walls or size".into(),
                    ));
                }
                if pre.avatar.is_none() {
                    return Err(WorldError::Invalid("pregrid needs an avatar".into()));
                }
            }
        }
        if !self.is_complete() {
            return Err(WorldError::IncompletePuzzle);
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct PuzzleJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    maze: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pregrid: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    postgrid: Option<Grid>,
}

impl Serialize for Puzzle {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let j = match self {
            Puzzle::Maze(g) => PuzzleJson {
                maze: Some(g.clone()),
                pregrid: None,
                postgrid: None,
            },
            Puzzle::Karel { pre, post } => PuzzleJson {
                maze: None,
                pregrid: Some(pre.clone()),
                postgrid: Some(post.clone()),
            },
        };
        j.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Puzzle {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = PuzzleJson::deserialize(d)?;
        match j {
            PuzzleJson {
                maze: Some(g),
                pregrid: None,
                postgrid: None,
            } => Ok(Puzzle::Maze(g)),
            PuzzleJson {
                maze: None,
                pregrid: Some(pre),
                postgrid: Some(post),
            } => Ok(Puzzle::Karel { pre, post }),
            _ => Err(serde::de::Error::custom(
                "puzzle needs either `maze` or `pregrid` + `postgrid`",
            )),
        }
    }
}

/// A programming task: puzzle, available blocks and maximum code size.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Task {
    pub puzzle: Puzzle,
    pub store: BTreeSet<BlockKind>,
    pub size: u32,
}

impl Task {
    pub fn domain(&self) -> Domain {
        self.puzzle.domain()
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        self.puzzle.validate()?;
        if self.size == 0 {
            return Err(WorldError::Invalid("size must be positive".into()));
        }
        let allowed = self.domain().block_kinds();
        if let Some(k) = self.store.iter().find(|k| !allowed.contains(k)) {
            return Err(WorldError::Invalid(format!(
                "block {} not in {}",
                k.name(),
                self.domain()
            )));
        }
        Ok(())
    }
}

/// A task specification: partial puzzle, sketch, fill constraints and size bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskSpec {
    pub domain: Domain,
    /// The partial maze (HoCMaze) or partial pregrid (Karel).
    pub puzzle: Grid,
    pub sketch: Sketch,
    pub delta: Delta,
    pub size: u32,
}

impl TaskSpec {
    /// Specification over the default 16×16 uninitialized grid with unrestricted fills.
    pub fn new(sketch: Sketch, size: u32) -> TaskSpec {
        let domain = sketch.domain;
        TaskSpec {
            domain,
            puzzle: Grid::unknown(16, 16),
            delta: Delta::full(domain),
            sketch,
            size,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.sketch.domain != self.domain {
            return Err(WorldError::Invalid(
                "sketch domain differs from spec domain".into(),
            ));
        }
        if !self.delta.within(self.domain) {
            return Err(WorldError::Invalid(
                "delta tokens outside the domain".into(),
            ));
        }
        if self.size < self.sketch.min_nblock() {
            return Err(WorldError::Invalid(format!(
                "size {} below the smallest completion ({})",
                self.size,
                self.sketch.min_nblock()
            )));
        }
        self.puzzle.validate(self.domain)?;
        Ok(())
    }

    /// Block kinds a task produced from this spec may offer.
    pub fn store(&self) -> BTreeSet<BlockKind> {
        self.sketch.allowed_blocks(&self.delta)
    }
}

#[derive(Serialize, Deserialize)]
struct TaskSpecJson {
    domain: Domain,
    puzzle: Grid,
    sketch: String,
    delta: Delta,
    size: u32,
}

impl Serialize for TaskSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        TaskSpecJson {
            domain: self.domain,
            puzzle: self.puzzle.clone(),
            sketch: self.sketch.to_text(),
            delta: self.delta.clone(),
            size: self.size,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TaskSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = TaskSpecJson::deserialize(d)?;
        let sketch = Sketch::parse(&j.sketch, j.domain).map_err(serde::de::Error::custom)?;
        Ok(TaskSpec {
            domain: j.domain,
            puzzle: j.puzzle,
            sketch,
            delta: j.delta,
            size: j.size,
        })
    }
}

/// Packages a synthesized puzzle into a task: the store comes from the spec and the
/// size from the solution code, falling back to the spec bound when absent.
pub fn finalize_task(
    puzzle: Puzzle,
    spec: &TaskSpec,
    solution: Option<&Ast>,
) -> Result<Task, WorldError> {
    if !puzzle.is_complete() {
        return Err(WorldError::IncompletePuzzle);
    }
    let size = solution.map(Ast::nblock).unwrap_or(spec.size);
    Ok(Task {
        puzzle,
        store: spec.store(),
        size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_small() {
        let text = "..\n..\n";
        assert_eq!(Grid::parse(text).unwrap().to_text(), text);
        let g = Grid::parse(">.\n.x\n").unwrap();
        assert_eq!(g.avatar, Some(Pose::new(0, 0, Dir::E)));
        assert_eq!(g.goal, Some((1, 1)));
    }

    #[test]
    fn malformed_rows() {
        let e = Grid::parse("...\n..\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = Grid::parse("..\n.Z\n").unwrap_err();
        assert_eq!((e.line, e.col), (2, 2));
        assert!(Grid::parse("A.\n..\n").is_err());
    }

    #[test]
    fn avatar_escape() {
        let text = "#A\n3.\n@A v 4\n";
        let g = Grid::parse(text).unwrap();
        assert_eq!(g.get(0, 1), Cell::Free(4));
        assert_eq!(g.avatar, Some(Pose::new(0, 1, Dir::S)));
        assert_eq!(g.to_text(), text);
    }

    #[test]
    fn finalize_sizes_and_store() {
        let sketch = Sketch::parse(
            "def Run(){a; RepeatUntil(goal){a; If(b){a} Else{a}; a}}",
            Domain::HocMaze,
        )
        .unwrap();
        let spec = TaskSpec::new(sketch, 10);
        let maze = Puzzle::Maze(Grid::parse(">x\n").unwrap());
        let code = Ast::parse(
            "def Run(){RepeatUntil(goal){If(pathAhead){move} Else{turnLeft}}}",
            Domain::HocMaze,
        )
        .unwrap();
        let t = finalize_task(maze.clone(), &spec, Some(&code)).unwrap();
        assert_eq!(t.size, 5);
        let t = finalize_task(maze, &spec, None).unwrap();
        assert_eq!(t.size, 10);
        let names: Vec<&str> = t.store.iter().map(|k| k.name()).collect();
        assert_eq!(
            names,
            ["move", "turnLeft", "turnRight", "RepeatUntil", "IfElse"]
        );
        let partial = Puzzle::Maze(Grid::parse(">?\n").unwrap());
        assert_eq!(
            finalize_task(partial, &spec, None),
            Err(WorldError::IncompletePuzzle)
        );
    }

    #[test]
    fn json_shapes() {
        let t = Task {
            puzzle: Puzzle::Karel {
                pre: Grid::parse(">1\n").unwrap(),
                post: Grid::parse(">.\n").unwrap(),
            },
            store: [BlockKind::Move, BlockKind::PickMarker]
                .into_iter()
                .collect(),
            size: 3,
        };
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("pregrid") && s.contains("pickMarker"));
        assert_eq!(serde_json::from_str::<Task>(&s).unwrap(), t);
    }

    fn arb_grid() -> impl Strategy<Value = Grid> {
        (1usize..7, 1usize..7).prop_flat_map(|(r, c)| {
            let cell = prop_oneof![
                Just(Cell::Wall),
                Just(Cell::Unknown),
                (0u8..=9).prop_map(Cell::Free),
            ];
            (
                proptest::collection::vec(cell, r * c),
                proptest::option::of((0..r, 0..c, 0usize..4)),
                proptest::option::of((0..r, 0..c)),
            )
                .prop_map(move |(cells, av, goal)| {
                    let mut g = Grid {
                        rows: r,
                        cols: c,
                        cells,
                        avatar: None,
                        goal: None,
                    };
                    if let Some((gr, gc)) = goal {
                        g.set(gr, gc, Cell::Free(0));
                        g.goal = Some((gr, gc));
                    }
                    if let Some((ar, ac, d)) = av {
                        if !g.get(ar, ac).is_free() {
                            g.set(ar, ac, Cell::Free(0));
                        }
                        g.avatar = Some(Pose::new(ar, ac, Dir::ALL[d]));
                    }
                    g
                })
        })
    }

    proptest! {
        #[test]
        fn text_round_trip(g in arb_grid()) {
            let text = g.to_text();
            let back = Grid::parse(&text).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(back.to_text(), text);
        }
    }
}
