//! Puzzle generation by symbolic execution over a partial grid.
//!
//! Execution starts from a chosen start pose and runs the code on a grid whose
//! cells may still be unknown. Whenever the outcome depends on an unknown cell
//! (a path test, a marker test, or whether the current cell is the goal) the
//! episode pauses at a decision point; the decision fixes the cell for good and
//! execution resumes. Moves into unknown cells make them free, marker actions on
//! unknown counts fix the smallest consistent count. When the code finishes the
//! remaining unknown cells get neutral defaults and the puzzle is assembled.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::sample_masked;
use crate::dsl::{Action, Ast, Cond, Domain};
use crate::emulator::{
    execute, Env, Machine, Program, Query, Status, TraceEvent, DEFAULT_STEP_LIMIT,
};
use crate::scoring;
use crate::world::{finalize_task, Cell, Dir, Grid, Pose, Puzzle, Task, TaskSpec, MARKER_CAP};

/// 20 start poses (5 regions × 4 orientations), then `No`, `Yes`.
pub const NDECISIONS: usize = 22;
pub const NO: usize = 20;
pub const YES: usize = 21;

/// Start regions in decision order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    TopLeft,
    BottomLeft,
    Center,
    TopRight,
    BottomRight,
}

impl Region {
    pub const ALL: [Region; 5] = [
        Region::TopLeft,
        Region::BottomLeft,
        Region::Center,
        Region::TopRight,
        Region::BottomRight,
    ];
}

/// Decision index of a start pose.
pub fn init_decision(region: Region, dir: Dir) -> usize {
    Region::ALL.iter().position(|&r| r == region).unwrap() * 4 + dir.index()
}

/// Representative cell of each start region, over the bounding box of cells that
/// are not pre-initialized walls: the centre of each quadrant and of the box.
pub fn region_cells(grid: &Grid) -> [(usize, usize); 5] {
    let mut r0 = usize::MAX;
    let (mut r1, mut c0, mut c1) = (0, usize::MAX, 0);
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            if grid.get(r, c) != Cell::Wall {
                r0 = r0.min(r);
                r1 = r1.max(r);
                c0 = c0.min(c);
                c1 = c1.max(c);
            }
        }
    }
    if r0 == usize::MAX {
        (r0, r1, c0, c1) = (0, grid.rows - 1, 0, grid.cols - 1);
    }
    let (h, w) = (r1 - r0 + 1, c1 - c0 + 1);
    let top = (r0 + (r0 + h / 2).max(r0 + 1) - 1) / 2;
    let bottom = (r0 + h / 2 + r1) / 2;
    let left = (c0 + (c0 + w / 2).max(c0 + 1) - 1) / 2;
    let right = (c0 + w / 2 + c1) / 2;
    let (mr, mc) = ((r0 + r1) / 2, (c0 + c1) / 2);
    [
        (top, left),
        (bottom, left),
        (mr, mc),
        (top, right),
        (bottom, right),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionType {
    InitPose,
    CellIsPath,
    CellMarker,
    GoalNow,
}

impl DecisionType {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SymError {
    #[error("decision {0} is not legal in this state")]
    IllegalDecision(usize),
}

/// The partially known world seen by the symbolic run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymEnv {
    pub domain: Domain,
    /// Current cells; unknown cells stay `Unknown` until decided.
    pub grid: Grid,
    /// Initial cells (the pregrid under construction).
    pub init: Grid,
    /// Whether a free cell's initial marker count is fixed.
    pub marker_known: Vec<bool>,
    /// Cells fixed by the specification.
    pub preset: Vec<bool>,
    pub pose: Pose,
    pub start: Option<Pose>,
    pub goal: Option<(usize, usize)>,
    goal_preset: bool,
    pub not_goal: Vec<bool>,
    pub visits: Vec<u32>,
}

impl SymEnv {
    fn new(spec: &TaskSpec) -> SymEnv {
        let g = &spec.puzzle;
        let n = g.rows * g.cols;
        let marker_known = g.cells.iter().map(|c| *c != Cell::Unknown).collect();
        let preset = g.cells.iter().map(|c| *c != Cell::Unknown).collect();
        let mut grid = g.clone();
        grid.avatar = None;
        grid.goal = None;
        SymEnv {
            domain: spec.domain,
            init: grid.clone(),
            grid,
            marker_known,
            preset,
            pose: Pose::new(0, 0, Dir::N),
            start: None,
            goal: g.goal,
            goal_preset: g.goal.is_some(),
            not_goal: vec![false; n],
            visits: vec![0; n],
        }
    }

    fn idx(&self, r: usize, c: usize) -> usize {
        r * self.grid.cols + c
    }

    fn make_free(&mut self, r: usize, c: usize) {
        if self.grid.get(r, c) == Cell::Unknown {
            self.grid.set(r, c, Cell::Free(0));
            self.init.set(r, c, Cell::Free(0));
            let i = self.idx(r, c);
            self.marker_known[i] = self.domain == Domain::HocMaze;
        }
    }

    fn place(&mut self, pose: Pose) {
        self.make_free(pose.row, pose.col);
        self.pose = pose;
        self.start = Some(pose);
        let i = self.idx(pose.row, pose.col);
        self.visits[i] += 1;
    }

    fn path(&self, dir: Dir) -> Result<bool, Query> {
        match self.grid.neighbor(self.pose.row, self.pose.col, dir) {
            None => Ok(false),
            Some((r, c)) => match self.grid.get(r, c) {
                Cell::Unknown => Err(Query::CellIsPath(r, c)),
                cell => Ok(cell.is_free()),
            },
        }
    }

    fn set_initial_markers(&mut self, r: usize, c: usize, k: u8) {
        let i = self.idx(r, c);
        self.marker_known[i] = true;
        self.init.set(r, c, Cell::Free(k));
        self.grid.set(r, c, Cell::Free(k));
    }

    fn answer(&mut self, q: Query, yes: bool) {
        match q {
            Query::CellIsPath(r, c) => {
                let cell = if yes { Cell::Free(0) } else { Cell::Wall };
                self.grid.set(r, c, cell);
                self.init.set(r, c, cell);
                let i = self.idx(r, c);
                self.marker_known[i] = !yes || self.domain == Domain::HocMaze;
            }
            Query::CellMarker(r, c) => self.set_initial_markers(r, c, u8::from(yes)),
            Query::GoalNow(r, c) => {
                if yes {
                    self.goal = Some((r, c));
                } else {
                    let i = self.idx(r, c);
                    self.not_goal[i] = true;
                }
            }
        }
    }

    pub fn unknown_count(&self) -> usize {
        self.grid
            .cells
            .iter()
            .filter(|c| **c == Cell::Unknown)
            .count()
            + self
                .marker_known
                .iter()
                .zip(&self.grid.cells)
                .filter(|(k, c)| !**k && c.is_free())
                .count()
    }
}

impl Env for SymEnv {
    fn pose(&self) -> Pose {
        self.pose
    }

    fn act(&mut self, a: Action) -> Result<bool, Query> {
        let p = self.pose;
        let i = self.idx(p.row, p.col);
        Ok(match a {
            Action::Move => match self.grid.neighbor(p.row, p.col, p.dir) {
                Some((r, c)) if self.grid.get(r, c) != Cell::Wall => {
                    self.make_free(r, c);
                    self.pose = Pose::new(r, c, p.dir);
                    let j = self.idx(r, c);
                    self.visits[j] += 1;
                    true
                }
                _ => false,
            },
            Action::TurnLeft => {
                self.pose.dir = p.dir.left();
                true
            }
            Action::TurnRight => {
                self.pose.dir = p.dir.right();
                true
            }
            Action::PickMarker => {
                if !self.marker_known[i] {
                    self.set_initial_markers(p.row, p.col, 1);
                }
                match self.grid.get(p.row, p.col) {
                    Cell::Free(k) if k > 0 => {
                        self.grid.set(p.row, p.col, Cell::Free(k - 1));
                        true
                    }
                    _ => false,
                }
            }
            Action::PutMarker => {
                if !self.marker_known[i] {
                    self.set_initial_markers(p.row, p.col, 0);
                }
                match self.grid.get(p.row, p.col) {
                    Cell::Free(k) if k < MARKER_CAP => {
                        self.grid.set(p.row, p.col, Cell::Free(k + 1));
                        true
                    }
                    _ => false,
                }
            }
        })
    }

    fn test(&mut self, c: Cond) -> Result<bool, Query> {
        let p = self.pose;
        match c {
            Cond::PathAhead => self.path(p.dir),
            Cond::PathLeft => self.path(p.dir.left()),
            Cond::PathRight => self.path(p.dir.right()),
            Cond::NoPathAhead => self.path(p.dir).map(|v| !v),
            Cond::MarkerPresent | Cond::NoMarkerPresent => {
                if !self.marker_known[self.idx(p.row, p.col)] {
                    return Err(Query::CellMarker(p.row, p.col));
                }
                let present = self.grid.get(p.row, p.col).markers() > 0;
                Ok(present == (c == Cond::MarkerPresent))
            }
        }
    }

    fn at_goal(&mut self) -> Result<bool, Query> {
        let cell = self.pose.cell();
        match self.goal {
            Some(g) => Ok(g == cell),
            None if self.not_goal[self.idx(cell.0, cell.1)] => Ok(false),
            None => Err(Query::GoalNow(cell.0, cell.1)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pending {
    InitPose,
    Query(Query),
}

impl Pending {
    pub fn kind(self) -> DecisionType {
        match self {
            Pending::InitPose => DecisionType::InitPose,
            Pending::Query(Query::CellIsPath(..)) => DecisionType::CellIsPath,
            Pending::Query(Query::CellMarker(..)) => DecisionType::CellMarker,
            Pending::Query(Query::GoalNow(..)) => DecisionType::GoalNow,
        }
    }

    /// The cell the pending decision is about.
    pub fn cell(self) -> Option<(usize, usize)> {
        match self {
            Pending::InitPose => None,
            Pending::Query(
                Query::CellIsPath(r, c) | Query::CellMarker(r, c) | Query::GoalNow(r, c),
            ) => Some((r, c)),
        }
    }
}

/// One state of the puzzle-generation process.
#[derive(Clone, Debug)]
pub struct SymState {
    pub program: Program,
    pub code: Ast,
    pub machine: Machine,
    pub env: SymEnv,
    pub pending: Option<Pending>,
    regions: [(usize, usize); 5],
    /// Decisions taken so far, including automatic ones.
    pub history: Vec<usize>,
}

impl SymState {
    pub fn new(code: &Ast, spec: &TaskSpec) -> SymState {
        Self::with_limit(code, spec, DEFAULT_STEP_LIMIT)
    }

    pub fn with_limit(code: &Ast, spec: &TaskSpec, step_limit: u32) -> SymState {
        let program = Program::new(code);
        let machine = Machine::new(&program, step_limit);
        let env = SymEnv::new(spec);
        let regions = region_cells(&spec.puzzle);
        let mut s = SymState {
            program,
            code: code.clone(),
            machine,
            env,
            pending: None,
            regions,
            history: Vec::new(),
        };
        match spec.puzzle.avatar {
            Some(p) => {
                s.env.place(p);
                s.advance();
            }
            None => {
                s.pending = Some(Pending::InitPose);
                s.auto_apply();
            }
        }
        s
    }

    pub fn is_terminal(&self) -> bool {
        self.pending.is_none()
    }

    pub fn status(&self) -> Status {
        self.machine.status
    }

    pub fn regions(&self) -> &[(usize, usize); 5] {
        &self.regions
    }

    pub fn legal(&self) -> [bool; NDECISIONS] {
        let mut m = [false; NDECISIONS];
        match self.pending {
            None => {}
            Some(Pending::InitPose) => {
                for (ri, &(r, c)) in self.regions.iter().enumerate() {
                    if self.env.grid.get(r, c) != Cell::Wall {
                        for d in 0..4 {
                            m[ri * 4 + d] = true;
                        }
                    }
                }
            }
            Some(Pending::Query(_)) => {
                m[NO] = true;
                m[YES] = true;
            }
        }
        m
    }

    /// Applies a decision and runs to the next decision point.
    pub fn apply(&mut self, decision: usize) -> Result<(), SymError> {
        if decision >= NDECISIONS || !self.legal()[decision] {
            return Err(SymError::IllegalDecision(decision));
        }
        self.apply_unchecked(decision);
        self.auto_apply();
        Ok(())
    }

    fn apply_unchecked(&mut self, decision: usize) {
        self.history.push(decision);
        match self.pending.take() {
            Some(Pending::InitPose) => {
                let (r, c) = self.regions[decision / 4];
                self.env.place(Pose::new(r, c, Dir::ALL[decision % 4]));
            }
            Some(Pending::Query(q)) => self.env.answer(q, decision == YES),
            None => unreachable!(),
        }
        self.advance();
    }

    fn auto_apply(&mut self) {
        loop {
            let legal = self.legal();
            let mut it = (0..NDECISIONS).filter(|&d| legal[d]);
            match (it.next(), it.next()) {
                (Some(only), None) => self.apply_unchecked(only),
                _ => return,
            }
        }
    }

    fn advance(&mut self) {
        match self.machine.run(&self.program, &mut self.env) {
            Ok(()) => self.pending = None,
            Err(q) => self.pending = Some(Pending::Query(q)),
        }
    }

    /// The node the pending decision belongs to.
    pub fn pending_node(&self) -> Option<usize> {
        self.pending.and_then(|p| match p {
            Pending::InitPose => None,
            Pending::Query(_) => self.machine.next_node(&self.program),
        })
    }

    /// Whether resolving the pending decision executes a block for the first time.
    pub fn coverage_increase(&self) -> bool {
        self.pending_node()
            .is_some_and(|n| !self.machine.executed[n])
    }

    /// Final puzzle after a successful run; `None` while running or after a crash.
    pub fn puzzle(&self) -> Option<Puzzle> {
        if !self.is_terminal() || self.machine.status != Status::Done {
            return None;
        }
        let start = self.env.start?;
        let mut pre = self.env.init.clone();
        for (i, cell) in pre.cells.iter_mut().enumerate() {
            *cell = match *cell {
                Cell::Unknown => match self.env.domain {
                    Domain::HocMaze => Cell::Wall,
                    Domain::Karel => Cell::Free(0),
                },
                Cell::Free(_) if !self.env.marker_known[i] => Cell::Free(0),
                c => c,
            };
        }
        pre.avatar = Some(start);
        Some(match self.env.domain {
            Domain::HocMaze => {
                pre.goal = Some(self.env.goal.unwrap_or(self.env.pose.cell()));
                Puzzle::Maze(pre)
            }
            Domain::Karel => {
                let probe = Puzzle::Karel {
                    pre: pre.clone(),
                    post: pre.clone(),
                };
                let run = execute(&self.code, &probe, DEFAULT_STEP_LIMIT);
                let mut post = run.state.grid;
                post.avatar = Some(run.state.pose);
                Puzzle::Karel { pre, post }
            }
        })
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.machine.trace
    }
}

/// Deterministic transition: a copy of `state` with `decision` applied.
pub fn mdp_step(state: &SymState, decision: usize) -> Result<SymState, SymError> {
    let mut next = state.clone();
    next.apply(decision)?;
    Ok(next)
}

/// Guidance for puzzle generation: decision logits and a state value.
pub trait PuzzlePolicy {
    fn logits(&mut self, state: &SymState) -> [f64; NDECISIONS];
    fn value(&mut self, _state: &SymState) -> f64 {
        0.0
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct UniformPuzzle;

impl PuzzlePolicy for UniformPuzzle {
    fn logits(&mut self, _: &SymState) -> [f64; NDECISIONS] {
        [0.0; NDECISIONS]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub kind: DecisionType,
    pub decision: usize,
}

#[derive(Clone, Debug)]
pub struct Episode {
    pub puzzle: Option<Puzzle>,
    pub task: Option<Task>,
    pub steps: Vec<EpisodeStep>,
    pub status: Status,
    pub reward: f64,
}

/// Runs one generation episode under `policy`.
pub fn generate_puzzle<R: Rng + ?Sized>(
    code: &Ast,
    spec: &TaskSpec,
    policy: &mut dyn PuzzlePolicy,
    rng: &mut R,
) -> Episode {
    let mut state = SymState::new(code, spec);
    let mut steps = Vec::new();
    while let Some(p) = state.pending {
        let logits = policy.logits(&state);
        let d = sample_masked(&logits, &state.legal(), rng)
            .expect("pending states have legal decisions");
        steps.push(EpisodeStep {
            kind: p.kind(),
            decision: d,
        });
        state.apply(d).expect("sampled decisions are legal");
    }
    finish(code, spec, &state, steps)
}

/// Scores a terminal state.
pub fn finish(code: &Ast, spec: &TaskSpec, state: &SymState, steps: Vec<EpisodeStep>) -> Episode {
    let puzzle = state.puzzle();
    let task = puzzle
        .clone()
        .and_then(|p| finalize_task(p, spec, Some(code)).ok());
    let reward = task
        .as_ref()
        .map(|t| scoring::total(t, code))
        .unwrap_or(0.0);
    Episode {
        puzzle,
        task,
        steps,
        status: state.status(),
        reward,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::Sketch;
    use crate::emulator::execute;
    use crate::rng;

    fn spec_for(code: &Ast, size: u32) -> TaskSpec {
        let sketch = crate::dsl::sketch_of(code, &Default::default()).unwrap();
        let _ = Sketch::parse(&sketch.to_text(), code.domain).unwrap();
        TaskSpec::new(sketch, size)
    }

    #[test]
    fn region_representatives_16() {
        let g = Grid::unknown(16, 16);
        assert_eq!(
            region_cells(&g),
            [(3, 3), (11, 3), (7, 7), (3, 11), (11, 11)]
        );
    }

    #[test]
    fn single_move_episode() {
        let code = Ast::parse("def Run(){move}", Domain::HocMaze).unwrap();
        let spec = spec_for(&code, 5);
        let mut s = SymState::new(&code, &spec);
        assert_eq!(s.pending, Some(Pending::InitPose));
        assert_eq!(s.legal().iter().filter(|&&l| l).count(), 20);
        s.apply(init_decision(Region::Center, Dir::E)).unwrap();
        assert!(s.is_terminal());
        let ep = finish(&code, &spec, &s, Vec::new());
        let Some(Puzzle::Maze(g)) = ep.puzzle else {
            panic!()
        };
        assert_eq!(g.avatar, Some(Pose::new(7, 7, Dir::E)));
        assert_eq!(g.goal, Some((7, 8)));
        assert!(ep.reward > 0.0);
        assert!(matches!(s.apply(0), Err(SymError::IllegalDecision(0))));
    }

    #[test]
    fn path_query_semantics() {
        let code =
            Ast::parse("def Run(){If(pathRight){turnRight; move}}", Domain::HocMaze).unwrap();
        let spec = spec_for(&code, 5);
        let s = SymState::new(&code, &spec);
        let s = mdp_step(&s, init_decision(Region::TopLeft, Dir::N)).unwrap();
        assert_eq!(s.pending, Some(Pending::Query(Query::CellIsPath(3, 4))));
        let no = mdp_step(&s, NO).unwrap();
        assert_eq!(no.env.grid.get(3, 4), Cell::Wall);
        assert!(no.is_terminal());
        let yes = mdp_step(&s, YES).unwrap();
        assert_eq!(yes.env.pose, Pose::new(3, 4, Dir::E));
        let again = mdp_step(&s, YES).unwrap();
        assert_eq!(again.env, yes.env);
        assert_eq!(again.machine, yes.machine);
    }

    #[test]
    fn uniform_maze18_finds_positive_reward_and_is_sound() {
        let code = Ast::parse(
            "def Run(){RepeatUntil(goal){If(pathAhead){move} Else{turnLeft}}}",
            Domain::HocMaze,
        )
        .unwrap();
        let spec = spec_for(&code, 10);
        let mut r = rng::seeded(3);
        let mut best: f64 = 0.0;
        for _ in 0..300 {
            let mut state = SymState::new(&code, &spec);
            let mut unknown = state.env.unknown_count();
            while state.pending.is_some() {
                let d = sample_masked(&[0.0; NDECISIONS], &state.legal(), &mut r).unwrap();
                state.apply(d).unwrap();
                let u = state.env.unknown_count();
                assert!(u <= unknown);
                unknown = u;
            }
            let ep = finish(&code, &spec, &state, Vec::new());
            if let Some(p) = &ep.puzzle {
                let run = execute(&code, p, DEFAULT_STEP_LIMIT);
                assert!(run.solved);
                assert_eq!(run.state.trace, state.machine.trace);
            }
            best = best.max(ep.reward);
        }
        assert!(best > 0.0);
    }

    #[test]
    fn karel_markers_resolve() {
        let code = Ast::parse(
            "def Run(){While(no-pathAhead){If(markerPresent){pickMarker}; turnLeft; move; turnRight; move}}",
            Domain::Karel,
        )
        .unwrap();
        let spec = spec_for(&code, 10);
        let mut r = rng::seeded(11);
        let mut solved = 0;
        for _ in 0..200 {
            let ep = generate_puzzle(&code, &spec, &mut UniformPuzzle, &mut r);
            if let Some(p) = &ep.puzzle {
                let run = execute(&code, p, DEFAULT_STEP_LIMIT);
                assert!(run.solved);
                solved += 1;
            }
        }
        assert!(solved > 0);
    }
}
