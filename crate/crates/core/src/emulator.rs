//! Concrete execution of codes on grids.
//!
//! Codes are flattened into a [`Program`] whose node ids follow the preorder of
//! the AST (`Run` is node 0). A [`Machine`] walks the program with an explicit
//! stack so that it can be paused whenever the environment needs information it
//! does not have yet; the symbolic executor relies on this to resolve unknown
//! cells lazily. Concrete runs use [`GridEnv`], which never pauses.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{Action, Ast, Block, Cond, Domain};
use crate::world::{Cell, Grid, Pose, Puzzle, Task, MARKER_CAP};

pub const DEFAULT_STEP_LIMIT: u32 = 1000;
/// Shortest-path searches give up beyond this many states.
pub const NODE_CAP: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Root,
    Action(Action),
    Repeat(u8),
    RepeatUntil,
    While(Cond),
    If(Cond),
    IfElse(Cond),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    pub parent: Option<usize>,
    /// Child ids of the first and second body (the second is used by `IfElse` only).
    pub bodies: [Vec<usize>; 2],
}

/// A code flattened into preorder nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub domain: Domain,
    pub nodes: Vec<Node>,
}

impl Program {
    pub fn new(code: &Ast) -> Program {
        let mut nodes = vec![Node {
            kind: NodeKind::Root,
            parent: None,
            bodies: [Vec::new(), Vec::new()],
        }];
        let ids = flatten(&code.body, 0, &mut nodes);
        nodes[0].bodies[0] = ids;
        Program {
            domain: code.domain,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Whether node `id` sits (transitively) inside a loop body.
    pub fn in_loop(&self, id: usize) -> bool {
        self.ancestors(id).any(|a| {
            matches!(
                self.nodes[a].kind,
                NodeKind::Repeat(_) | NodeKind::RepeatUntil | NodeKind::While(_)
            )
        })
    }

    /// Whether node `id` sits (transitively) inside a conditional body.
    pub fn in_conditional(&self, id: usize) -> bool {
        self.ancestors(id)
            .any(|a| matches!(self.nodes[a].kind, NodeKind::If(_) | NodeKind::IfElse(_)))
    }

    fn ancestors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        core::iter::successors(self.nodes[id].parent, move |&p| self.nodes[p].parent)
    }
}

fn flatten(body: &[Block], parent: usize, nodes: &mut Vec<Node>) -> Vec<usize> {
    let mut ids = Vec::with_capacity(body.len());
    for b in body {
        let id = nodes.len();
        ids.push(id);
        let kind = match b {
            Block::Action(a) => NodeKind::Action(*a),
            Block::Repeat { times, .. } => NodeKind::Repeat(*times),
            Block::RepeatUntil { .. } => NodeKind::RepeatUntil,
            Block::While { cond, .. } => NodeKind::While(*cond),
            Block::If { cond, .. } => NodeKind::If(*cond),
            Block::IfElse { cond, .. } => NodeKind::IfElse(*cond),
        };
        nodes.push(Node {
            kind,
            parent: Some(parent),
            bodies: [Vec::new(), Vec::new()],
        });
        for (i, inner) in b.bodies().enumerate() {
            let child = flatten(inner, id, nodes);
            nodes[id].bodies[i] = child;
        }
    }
    ids
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Running,
    Crashed,
    Done,
    StepLimit,
}

/// What the environment needs to know before execution can continue.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Query {
    /// Is the cell free (not a wall)?
    CellIsPath(usize, usize),
    /// Does the cell hold at least one marker?
    CellMarker(usize, usize),
    /// Is the avatar's current cell the goal?
    GoalNow(usize, usize),
}

/// The world a [`Machine`] acts on.
pub trait Env {
    fn pose(&self) -> Pose;
    /// Performs an action; `Ok(false)` means the avatar crashed.
    fn act(&mut self, a: Action) -> Result<bool, Query>;
    fn test(&mut self, c: Cond) -> Result<bool, Query>;
    fn at_goal(&mut self) -> Result<bool, Query>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Op {
    Action { action: Action, ok: bool },
    Cond { cond: Cond, value: bool },
    Goal { value: bool },
}

/// One executed block: an action or a condition/goal test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub node: usize,
    pub op: Op,
    pub pose: Pose,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Frame {
    node: usize,
    branch: u8,
    pos: usize,
    remaining: u8,
}

/// Resumable interpreter state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Machine {
    stack: Vec<Frame>,
    pub status: Status,
    pub trace: Vec<TraceEvent>,
    pub executed: Vec<bool>,
    /// Entries into each node's bodies; a loop counts one entry per iteration.
    pub body_entries: Vec<[u32; 2]>,
    pub actions: u32,
    steps: u32,
    step_limit: u32,
}

impl Machine {
    pub fn new(program: &Program, step_limit: u32) -> Machine {
        let mut executed = vec![false; program.len()];
        executed[0] = true;
        let mut body_entries = vec![[0, 0]; program.len()];
        body_entries[0][0] = 1;
        Machine {
            stack: vec![Frame {
                node: 0,
                branch: 0,
                pos: 0,
                remaining: 0,
            }],
            status: Status::Running,
            trace: Vec::new(),
            executed,
            body_entries,
            actions: 0,
            steps: 0,
            step_limit,
        }
    }

    /// The node the machine will work on next (`None` once finished).
    pub fn next_node(&self, program: &Program) -> Option<usize> {
        let top = self.stack.last()?;
        let body = &program.nodes[top.node].bodies[top.branch as usize];
        Some(body.get(top.pos).copied().unwrap_or(top.node))
    }

    fn enter(&mut self, node: usize, branch: u8, remaining: u8) {
        self.body_entries[node][branch as usize] += 1;
        self.stack.push(Frame {
            node,
            branch,
            pos: 0,
            remaining,
        });
    }

    /// Advances by one instruction. On `Err` nothing changed; answer the query in
    /// the environment and call again.
    pub fn step(&mut self, program: &Program, env: &mut dyn Env) -> Result<(), Query> {
        if self.status != Status::Running {
            return Ok(());
        }
        // Loop heads that never run actions still need a bound.
        if self.steps > self.step_limit.saturating_mul(20).saturating_add(1000) {
            self.status = Status::StepLimit;
            return Ok(());
        }
        let Some(&top) = self.stack.last() else {
            self.status = Status::Done;
            return Ok(());
        };
        let body = &program.nodes[top.node].bodies[top.branch as usize];
        if top.pos < body.len() {
            let id = body[top.pos];
            match program.nodes[id].kind {
                NodeKind::Root => unreachable!("root is never a child"),
                NodeKind::Action(a) => {
                    if self.actions >= self.step_limit {
                        self.status = Status::StepLimit;
                        return Ok(());
                    }
                    let ok = env.act(a)?;
                    self.executed[id] = true;
                    self.actions += 1;
                    self.trace.push(TraceEvent {
                        node: id,
                        op: Op::Action { action: a, ok },
                        pose: env.pose(),
                    });
                    self.advance();
                    if !ok {
                        self.status = Status::Crashed;
                        return Ok(());
                    }
                }
                NodeKind::Repeat(n) => {
                    self.executed[id] = true;
                    self.advance();
                    self.enter(id, 0, n);
                }
                NodeKind::RepeatUntil => {
                    let goal = env.at_goal()?;
                    self.executed[id] = true;
                    self.trace.push(TraceEvent {
                        node: id,
                        op: Op::Goal { value: goal },
                        pose: env.pose(),
                    });
                    self.advance();
                    if !goal {
                        self.enter(id, 0, 0);
                    }
                }
                NodeKind::While(c) | NodeKind::If(c) | NodeKind::IfElse(c) => {
                    let value = env.test(c)?;
                    self.executed[id] = true;
                    self.trace.push(TraceEvent {
                        node: id,
                        op: Op::Cond { cond: c, value },
                        pose: env.pose(),
                    });
                    self.advance();
                    match (program.nodes[id].kind, value) {
                        (NodeKind::IfElse(_), false) => self.enter(id, 1, 0),
                        (_, true) => self.enter(id, 0, 0),
                        _ => {}
                    }
                }
            }
        } else {
            // End of a body: decide whether the owning loop iterates again.
            match program.nodes[top.node].kind {
                NodeKind::Root => {
                    self.stack.pop();
                    self.status = Status::Done;
                }
                NodeKind::Repeat(_) => {
                    let left = top.remaining.saturating_sub(1);
                    self.stack.pop();
                    if left > 0 {
                        self.enter(top.node, 0, left);
                    }
                }
                NodeKind::RepeatUntil => {
                    let goal = env.at_goal()?;
                    self.trace.push(TraceEvent {
                        node: top.node,
                        op: Op::Goal { value: goal },
                        pose: env.pose(),
                    });
                    self.stack.pop();
                    if !goal {
                        self.enter(top.node, 0, 0);
                    }
                }
                NodeKind::While(c) => {
                    let value = env.test(c)?;
                    self.trace.push(TraceEvent {
                        node: top.node,
                        op: Op::Cond { cond: c, value },
                        pose: env.pose(),
                    });
                    self.stack.pop();
                    if value {
                        self.enter(top.node, 0, 0);
                    }
                }
                NodeKind::If(_) | NodeKind::IfElse(_) | NodeKind::Action(_) => {
                    self.stack.pop();
                }
            }
        }
        self.steps += 1;
        Ok(())
    }

    fn advance(&mut self) {
        if let Some(top) = self.stack.last_mut() {
            top.pos += 1;
        }
    }

    /// Runs until finished or until the environment raises a query.
    pub fn run(&mut self, program: &Program, env: &mut dyn Env) -> Result<(), Query> {
        while self.status == Status::Running {
            self.step(program, env)?;
        }
        Ok(())
    }
}

/// A fully known grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridEnv {
    pub grid: Grid,
    pub pose: Pose,
    pub visits: Vec<u32>,
}

impl GridEnv {
    pub fn new(grid: Grid) -> GridEnv {
        let pose = grid.avatar.expect("grid needs an avatar");
        let mut visits = vec![0; grid.rows * grid.cols];
        visits[pose.row * grid.cols + pose.col] = 1;
        GridEnv { grid, pose, visits }
    }

    fn free(&self, cell: Option<(usize, usize)>) -> bool {
        cell.map(|(r, c)| self.grid.get(r, c).is_free())
            .unwrap_or(false)
    }
}

impl Env for GridEnv {
    fn pose(&self) -> Pose {
        self.pose
    }

    fn act(&mut self, a: Action) -> Result<bool, Query> {
        let p = self.pose;
        Ok(match a {
            Action::Move => match self.grid.neighbor(p.row, p.col, p.dir) {
                Some((r, c)) if self.grid.get(r, c).is_free() => {
                    self.pose = Pose::new(r, c, p.dir);
                    self.visits[r * self.grid.cols + c] += 1;
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
            Action::PickMarker => match self.grid.get(p.row, p.col) {
                Cell::Free(k) if k > 0 => {
                    self.grid.set(p.row, p.col, Cell::Free(k - 1));
                    true
                }
                _ => false,
            },
            Action::PutMarker => match self.grid.get(p.row, p.col) {
                Cell::Free(k) if k < MARKER_CAP => {
                    self.grid.set(p.row, p.col, Cell::Free(k + 1));
                    true
                }
                _ => false,
            },
        })
    }

    fn test(&mut self, c: Cond) -> Result<bool, Query> {
        let p = self.pose;
        Ok(match c {
            Cond::PathAhead => self.free(self.grid.neighbor(p.row, p.col, p.dir)),
            Cond::PathLeft => self.free(self.grid.neighbor(p.row, p.col, p.dir.left())),
            Cond::PathRight => self.free(self.grid.neighbor(p.row, p.col, p.dir.right())),
            Cond::NoPathAhead => !self.free(self.grid.neighbor(p.row, p.col, p.dir)),
            Cond::MarkerPresent => self.grid.get(p.row, p.col).markers() > 0,
            Cond::NoMarkerPresent => self.grid.get(p.row, p.col).markers() == 0,
        })
    }

    fn at_goal(&mut self) -> Result<bool, Query> {
        Ok(self.grid.goal == Some(self.pose.cell()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecConfig {
    pub step_limit: u32,
    /// Karel only: also require the final avatar pose to match the postgrid's.
    pub check_pose: bool,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            step_limit: DEFAULT_STEP_LIMIT,
            check_pose: false,
        }
    }
}

/// Final state of a concrete run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecState {
    pub grid: Grid,
    pub pose: Pose,
    pub status: Status,
    pub trace: Vec<TraceEvent>,
    /// Per-cell entry counts, row-major; the start cell counts once.
    pub visits: Vec<u32>,
    pub executed: Vec<bool>,
    pub body_entries: Vec<[u32; 2]>,
}

impl ExecState {
    /// Successfully executed actions in order.
    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.trace.iter().filter_map(|e| match e.op {
            Op::Action { action, ok: true } => Some(action),
            _ => None,
        })
    }

    pub fn executed_count(&self) -> usize {
        self.executed.iter().filter(|&&e| e).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunResult {
    pub solved: bool,
    pub state: ExecState,
}

pub fn execute(code: &Ast, puzzle: &Puzzle, step_limit: u32) -> RunResult {
    execute_with(
        code,
        puzzle,
        ExecConfig {
            step_limit,
            ..ExecConfig::default()
        },
    )
}

pub fn execute_with(code: &Ast, puzzle: &Puzzle, cfg: ExecConfig) -> RunResult {
    let program = Program::new(code);
    execute_program(&program, puzzle, cfg)
}

pub fn execute_program(program: &Program, puzzle: &Puzzle, cfg: ExecConfig) -> RunResult {
    let mut env = GridEnv::new(puzzle.start().clone());
    let mut m = Machine::new(program, cfg.step_limit);
    m.run(program, &mut env)
        .expect("concrete grids never raise queries");
    let solved = m.status == Status::Done
        && match puzzle {
            Puzzle::Maze(g) => g.goal == Some(env.pose.cell()),
            Puzzle::Karel { post, .. } => {
                env.grid.same_cells(post)
                    && (!cfg.check_pose || post.avatar.is_none_or(|p| p == env.pose))
            }
        };
    RunResult {
        solved,
        state: ExecState {
            grid: env.grid,
            pose: env.pose,
            status: m.status,
            trace: m.trace,
            visits: env.visits,
            executed: m.executed,
            body_entries: m.body_entries,
        },
    }
}

/// Whether `code` is a solution of `task`: it solves the puzzle, uses only store
/// blocks and stays within the size bound.
pub fn solves(code: &Ast, task: &Task) -> bool {
    if code.domain != task.domain() || code.nblock() > task.size {
        return false;
    }
    let attrs = code.attributes();
    attrs.blocks.is_subset(&task.store) && solves_puzzle(&Program::new(code), &task.puzzle)
}

/// Call stack, avatar row, column and heading, marker counts.
type MachineState = (Vec<Frame>, usize, usize, usize, Vec<u8>);

/// Same verdict as `execute(..).solved` with the default limit, but stops as
/// soon as a loop re-enters a state it has already been in, since such a run
/// can only end at the step limit.
fn solves_puzzle(program: &Program, puzzle: &Puzzle) -> bool {
    let mut env = GridEnv::new(puzzle.start().clone());
    let mut m = Machine::new(program, DEFAULT_STEP_LIMIT);
    let mut seen: BTreeSet<MachineState> = BTreeSet::new();
    while m.status == Status::Running {
        if let Some(top) = m.stack.last() {
            let node = &program.nodes[top.node];
            let looping = matches!(node.kind, NodeKind::RepeatUntil | NodeKind::While(_));
            if looping && top.pos == node.bodies[top.branch as usize].len() {
                let markers = match puzzle {
                    Puzzle::Maze(_) => Vec::new(),
                    Puzzle::Karel { .. } => env.grid.cells.iter().map(|c| c.markers()).collect(),
                };
                let p = env.pose;
                if !seen.insert((m.stack.clone(), p.row, p.col, p.dir.index(), markers)) {
                    return false;
                }
            }
        }
        m.step(program, &mut env)
            .expect("concrete grids never raise queries");
    }
    m.status == Status::Done
        && match puzzle {
            Puzzle::Maze(g) => g.goal == Some(env.pose.cell()),
            Puzzle::Karel { post, .. } => env.grid.same_cells(post),
        }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmuError {
    #[error("search exceeded {0} states")]
    BudgetExceeded(usize),
}

/// Minimal-length code made only of basic actions that solves the task's puzzle,
/// if one with at most `max_len` actions exists. Ties favour the action order
/// `move, turnLeft, turnRight, putMarker, pickMarker`.
pub fn shortest_basic_solution(task: &Task, max_len: usize) -> Result<Option<Ast>, EmuError> {
    shortest_basic_solution_with(task, max_len, ExecConfig::default())
}

pub fn shortest_basic_solution_with(
    task: &Task,
    max_len: usize,
    cfg: ExecConfig,
) -> Result<Option<Ast>, EmuError> {
    let domain = task.domain();
    let actions: Vec<Action> = domain
        .actions()
        .iter()
        .copied()
        .filter(|a| task.store.contains(&crate::dsl::BlockKind::from(*a)))
        .collect();
    let start = task.puzzle.start();
    let Some(start_pose) = start.avatar else {
        return Ok(None);
    };
    let (rows, cols) = (start.rows, start.cols);

    // Cells whose marker count must change, with the signed change.
    let (targets, target_pose): (Vec<(usize, i16)>, Option<Pose>) = match &task.puzzle {
        Puzzle::Maze(_) => (Vec::new(), None),
        Puzzle::Karel { pre, post } => {
            let t = (0..rows * cols)
                .filter_map(|i| {
                    let d = i16::from(post.cells[i].markers()) - i16::from(pre.cells[i].markers());
                    (d != 0).then_some((i, d))
                })
                .collect();
            (t, if cfg.check_pose { post.avatar } else { None })
        }
    };
    let need: Vec<u8> = targets
        .iter()
        .map(|&(_, d)| d.unsigned_abs() as u8)
        .collect();
    let cell_target: BTreeMap<usize, usize> = targets
        .iter()
        .enumerate()
        .map(|(ti, &(c, _))| (c, ti))
        .collect();
    let is_goal = |p: Pose, prog: &[u8]| match &task.puzzle {
        Puzzle::Maze(g) => g.goal == Some(p.cell()),
        Puzzle::Karel { .. } => prog == need.as_slice() && target_pose.is_none_or(|t| t == p),
    };
    let pose_code = |p: Pose| ((p.row * cols + p.col) * 4 + p.dir.index()) as u32;

    // Arena of reached states with back pointers; `seen` dedups by (pose, progress).
    struct Entry {
        pose: Pose,
        prog: Vec<u8>,
        parent: usize,
        via: u8,
        dist: usize,
    }
    let mut arena = vec![Entry {
        pose: start_pose,
        prog: vec![0; need.len()],
        parent: usize::MAX,
        via: 0,
        dist: 0,
    }];
    let mut seen: BTreeSet<(u32, Vec<u8>)> = BTreeSet::new();
    seen.insert((pose_code(start_pose), arena[0].prog.clone()));
    let mut queue = VecDeque::from([0usize]);
    let mut found = None;
    while let Some(s) = queue.pop_front() {
        let (p, dist) = (arena[s].pose, arena[s].dist);
        if is_goal(p, &arena[s].prog) {
            found = Some(s);
            break;
        }
        if dist >= max_len {
            continue;
        }
        for (ai, &a) in actions.iter().enumerate() {
            let next = match a {
                Action::Move => match start.neighbor(p.row, p.col, p.dir) {
                    Some((r, c)) if start.get(r, c).is_free() => {
                        Some((Pose::new(r, c, p.dir), None))
                    }
                    _ => None,
                },
                Action::TurnLeft => Some((Pose::new(p.row, p.col, p.dir.left()), None)),
                Action::TurnRight => Some((Pose::new(p.row, p.col, p.dir.right()), None)),
                Action::PutMarker | Action::PickMarker => {
                    cell_target.get(&(p.row * cols + p.col)).and_then(|&ti| {
                        let wants_put = targets[ti].1 > 0;
                        (wants_put == (a == Action::PutMarker) && arena[s].prog[ti] < need[ti])
                            .then_some((p, Some(ti)))
                    })
                }
            };
            let Some((np, bump)) = next else { continue };
            let mut prog = arena[s].prog.clone();
            if let Some(ti) = bump {
                prog[ti] += 1;
            }
            let key = (pose_code(np), prog);
            if seen.contains(&key) {
                continue;
            }
            if arena.len() >= NODE_CAP {
                return Err(EmuError::BudgetExceeded(NODE_CAP));
            }
            let prog = key.1.clone();
            seen.insert(key);
            arena.push(Entry {
                pose: np,
                prog,
                parent: s,
                via: ai as u8,
                dist: dist + 1,
            });
            queue.push_back(arena.len() - 1);
        }
    }
    Ok(found.map(|mut s| {
        let mut seq = Vec::new();
        while s != 0 {
            seq.push(Block::Action(actions[arena[s].via as usize]));
            s = arena[s].parent;
        }
        seq.reverse();
        Ast::new(domain, seq)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::BlockKind;

    fn maze(text: &str) -> Puzzle {
        Puzzle::Maze(Grid::parse(text).unwrap())
    }

    fn hoc(text: &str) -> Ast {
        Ast::parse(text, Domain::HocMaze).unwrap()
    }

    #[test]
    fn single_move_reaches_goal() {
        let r = execute(&hoc("def Run(){move}"), &maze(">x\n"), DEFAULT_STEP_LIMIT);
        assert!(r.solved);
        assert_eq!(r.state.trace.len(), 1);
        assert_eq!(r.state.status, Status::Done);
    }

    #[test]
    fn move_into_wall_crashes() {
        let r = execute(
            &hoc("def Run(){move}"),
            &maze(">#\nx.\n"),
            DEFAULT_STEP_LIMIT,
        );
        assert_eq!(r.state.status, Status::Crashed);
        assert!(!r.solved);
        let r = execute(&hoc("def Run(){move}"), &maze("x<\n"), DEFAULT_STEP_LIMIT);
        assert!(r.solved);
        let r = execute(&hoc("def Run(){move}"), &maze("<x\n"), DEFAULT_STEP_LIMIT);
        assert_eq!(r.state.status, Status::Crashed);
    }

    #[test]
    fn repeat_until_follows_corridor() {
        let code = hoc("def Run(){RepeatUntil(goal){If(pathAhead){move} Else{turnLeft}}}");
        let p = maze("x..\n##.\n..^\n");
        let r = execute(&code, &p, DEFAULT_STEP_LIMIT);
        assert!(r.solved);
        assert_eq!(r.state.pose.cell(), (0, 0));
        assert_eq!(r.state.executed_count(), 5);
        // turnLeft at the top corner, then straight
        assert_eq!(
            r.state.actions().filter(|a| *a == Action::TurnLeft).count(),
            1
        );
    }

    #[test]
    fn nonterminating_loops_hit_limit() {
        let r = execute(
            &hoc("def Run(){RepeatUntil(goal){turnLeft}}"),
            &maze(">.x\n"),
            50,
        );
        assert_eq!(r.state.status, Status::StepLimit);
        assert_eq!(r.state.actions().count(), 50);
        let k = Ast::parse("def Run(){While(pathAhead){}}", Domain::Karel).unwrap();
        let g = Grid::parse(">.\n").unwrap();
        let r = execute(
            &k,
            &Puzzle::Karel {
                pre: g.clone(),
                post: g,
            },
            50,
        );
        assert_eq!(r.state.status, Status::StepLimit);
    }

    #[test]
    fn karel_markers() {
        let pre = Grid::parse("A..\n@A > 1\n").unwrap();
        let post = Grid::parse("..1\n").unwrap();
        let p = Puzzle::Karel { pre, post };
        let code = Ast::parse(
            "def Run(){pickMarker; move; move; putMarker}",
            Domain::Karel,
        )
        .unwrap();
        assert!(execute(&code, &p, DEFAULT_STEP_LIMIT).solved);
        let bad = Ast::parse("def Run(){pickMarker; pickMarker}", Domain::Karel).unwrap();
        let r = execute(&bad, &p, DEFAULT_STEP_LIMIT);
        assert_eq!(r.state.status, Status::Crashed);
        // the failed pick leaves the grid as it was after the first one
        assert_eq!(r.state.grid.total_markers(), 0);
    }

    #[test]
    fn solves_checks_store_and_size() {
        let code = hoc("def Run(){move}");
        let mut t = Task {
            puzzle: maze(">x\n"),
            store: [BlockKind::Move].into_iter().collect(),
            size: 2,
        };
        assert!(solves(&code, &t));
        t.size = 1;
        assert!(!solves(&code, &t));
        t.size = 2;
        t.store = [BlockKind::TurnLeft].into_iter().collect();
        assert!(!solves(&code, &t));
    }

    #[test]
    fn shortest_paths() {
        let store = Domain::HocMaze.block_kinds();
        let t = Task {
            puzzle: maze(">..x\n"),
            store: store.clone(),
            size: 10,
        };
        let s = shortest_basic_solution(&t, 10).unwrap().unwrap();
        assert_eq!(s.to_compact(), "def Run(){move; move; move}");
        assert_eq!(shortest_basic_solution(&t, 2).unwrap(), None);
        let t = Task {
            puzzle: maze(">#.\n##.\n..x\n"),
            store,
            size: 10,
        };
        assert_eq!(shortest_basic_solution(&t, 50).unwrap(), None);
        let g = Grid::parse("^.\n..\n").unwrap();
        let t = Task {
            puzzle: Puzzle::Karel {
                pre: g.clone(),
                post: g,
            },
            store: Domain::Karel.block_kinds(),
            size: 5,
        };
        assert_eq!(shortest_basic_solution(&t, 5).unwrap().unwrap().nblock(), 1);
    }

    #[test]
    fn karel_shortest_uses_needed_cells_only() {
        let pre = Grid::parse(">.2\n").unwrap();
        let post = Grid::parse("..1\n").unwrap();
        let t = Task {
            puzzle: Puzzle::Karel { pre, post },
            store: Domain::Karel.block_kinds(),
            size: 9,
        };
        let s = shortest_basic_solution(&t, 9).unwrap().unwrap();
        assert_eq!(s.to_compact(), "def Run(){move; move; pickMarker}");
        assert!(solves(&s, &t));
    }

    #[test]
    fn program_context_flags() {
        let code = hoc("def Run(){move; RepeatUntil(goal){If(pathAhead){move} Else{turnLeft}}}");
        let p = Program::new(&code);
        assert_eq!(p.len(), 6);
        assert!(!p.in_loop(1));
        assert!(p.in_loop(3) && p.in_conditional(4));
        assert_eq!(p.nodes[3].bodies, [vec![4], vec![5]]);
    }
}
