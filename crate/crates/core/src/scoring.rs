//! Task quality scoring.
//!
//! A task/code pair scores zero unless the code covers all of its blocks,
//! solves the puzzle, never revisits a cell, admits no shorter basic-action
//! solution and has no redundant block. Past that gate the score blends
//! coverage with the visual quality of the avatar's path; Karel also rewards
//! the quality of the shortest basic-action path.

use serde::{Deserialize, Serialize};

use crate::dsl::{Action, Ast, Block, Domain};
use crate::emulator::{
    self, execute, shortest_basic_solution, ExecState, RunResult, DEFAULT_STEP_LIMIT,
};
use crate::world::Task;

/// Path-shape counters of an action sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QualCounters {
    pub moves: u32,
    pub turns: u32,
    /// Runs of more than 3 consecutive moves.
    pub segments: u32,
    /// Runs of more than 5 consecutive moves.
    pub long_segments: u32,
    /// Runs of more than 3 consecutive turns.
    pub turn_segments: u32,
    pub n: f64,
}

impl QualCounters {
    /// Counts over the executed actions; marker actions break runs.
    pub fn from_actions(actions: impl IntoIterator<Item = Action>, n: f64) -> QualCounters {
        let mut q = QualCounters {
            n,
            ..QualCounters::default()
        };
        let (mut move_run, mut turn_run) = (0u32, 0u32);
        let close = |q: &mut QualCounters, move_run: &mut u32, turn_run: &mut u32| {
            if *move_run > 3 {
                q.segments += 1;
            }
            if *move_run > 5 {
                q.long_segments += 1;
            }
            if *turn_run > 3 {
                q.turn_segments += 1;
            }
            *move_run = 0;
            *turn_run = 0;
        };
        for a in actions {
            match a {
                Action::Move => {
                    q.moves += 1;
                    if turn_run > 0 {
                        close(&mut q, &mut move_run, &mut turn_run);
                    }
                    move_run += 1;
                }
                Action::TurnLeft | Action::TurnRight => {
                    q.turns += 1;
                    if move_run > 0 {
                        close(&mut q, &mut move_run, &mut turn_run);
                    }
                    turn_run += 1;
                }
                Action::PutMarker | Action::PickMarker => {
                    close(&mut q, &mut move_run, &mut turn_run)
                }
            }
        }
        close(&mut q, &mut move_run, &mut turn_run);
        q
    }
}

/// Visual quality of a path, in `[0, 1]`.
pub fn qual(c: &QualCounters) -> f64 {
    let n = c.n;
    let clip = |x: f64| x.min(1.0);
    let shape = clip(c.moves as f64 / (2.0 * n))
        + clip(c.turns as f64 / n)
        + clip(c.segments as f64 / (n / 2.0))
        + clip(c.long_segments as f64 / (n / 3.0));
    0.75 * 0.25 * shape + 0.25 * (1.0 - clip(c.turn_segments as f64 / (n / 2.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScoreReport {
    pub cov: f64,
    pub sol: f64,
    pub nocross: f64,
    pub nocut: f64,
    pub notred: f64,
    pub qual: f64,
    pub cutqual: f64,
    pub counters: QualCounters,
    pub indicator_passed: bool,
    pub total: f64,
}

/// Normalizer of the path-shape counters: the longer grid side.
pub fn norm(task: &Task) -> f64 {
    let g = task.puzzle.start();
    g.rows.max(g.cols) as f64
}

pub fn coverage(state: &ExecState, code: &Ast) -> f64 {
    state.executed_count() as f64 / code.nblock() as f64
}

pub fn no_crossing(state: &ExecState) -> f64 {
    let visited = state.visits.iter().filter(|&&v| v > 0).count();
    if visited == 0 {
        return 0.0;
    }
    state.visits.iter().filter(|&&v| v == 1).count() as f64 / visited as f64
}

/// Adjacent blocks in one body that undo each other.
pub fn has_inverse_pair(code: &Ast) -> bool {
    fn walk(body: &[Block]) -> bool {
        body.windows(2).any(|w| match (&w[0], &w[1]) {
            (Block::Action(a), Block::Action(b)) => a.inverse() == Some(*b),
            _ => false,
        }) || body.iter().any(|b| b.bodies().any(|inner| walk(inner)))
    }
    walk(&code.body)
}

/// Whether some code made only of basic actions with strictly fewer blocks than
/// `code` solves the task.
pub fn has_shortcut(task: &Task, code: &Ast) -> bool {
    match (code.nblock() as usize).checked_sub(2) {
        Some(max_len) => !matches!(shortest_basic_solution(task, max_len), Ok(None)),
        None => false,
    }
}

/// Whether the code is free of redundancy: no inverse pair, and no single
/// deletion still solves the task.
pub fn not_redundant(task: &Task, code: &Ast) -> bool {
    !has_inverse_pair(code)
        && !code
            .single_deletion_mutants()
            .iter()
            .any(|m| emulator::solves(m, task))
}

/// Quality of the shortest basic-action path (0 when none exists).
pub fn cut_quality(task: &Task) -> f64 {
    match shortest_basic_solution(task, usize::MAX) {
        Ok(Some(path)) => {
            let actions = path.body.iter().filter_map(|b| match b {
                Block::Action(a) => Some(*a),
                _ => None,
            });
            qual(&QualCounters::from_actions(actions, norm(task)))
        }
        _ => 0.0,
    }
}

fn combine(domain: Domain, cov: f64, qual: f64, cutqual: f64) -> f64 {
    match domain {
        Domain::HocMaze => 0.5 * cov + 0.5 * qual,
        Domain::Karel => (cov + qual + cutqual) / 3.0,
    }
}

/// Full score report of `code` on `task`.
pub fn score(task: &Task, code: &Ast) -> ScoreReport {
    let run = execute(code, &task.puzzle, DEFAULT_STEP_LIMIT);
    score_run(task, code, &run)
}

pub fn score_run(task: &Task, code: &Ast, run: &RunResult) -> ScoreReport {
    let state = &run.state;
    let cov = coverage(state, code);
    let sol = if run.solved { 1.0 } else { 0.0 };
    let nocross = no_crossing(state);
    let nocut = if has_shortcut(task, code) { 0.0 } else { 1.0 };
    let notred = if not_redundant(task, code) { 1.0 } else { 0.0 };
    let counters = QualCounters::from_actions(state.actions(), norm(task));
    let q = qual(&counters);
    let cutqual = if task.domain() == Domain::Karel {
        cut_quality(task)
    } else {
        0.0
    };
    let indicator_passed =
        cov == 1.0 && sol == 1.0 && nocross == 1.0 && nocut == 1.0 && notred == 1.0;
    let total = if indicator_passed {
        combine(task.domain(), cov, q, cutqual)
    } else {
        0.0
    };
    ScoreReport {
        cov,
        sol,
        nocross,
        nocut,
        notred,
        qual: q,
        cutqual,
        counters,
        indicator_passed,
        total,
    }
}

/// The total score only, skipping the expensive checks once the gate has failed.
pub fn total(task: &Task, code: &Ast) -> f64 {
    let run = execute(code, &task.puzzle, DEFAULT_STEP_LIMIT);
    total_run(task, code, &run)
}

pub fn total_run(task: &Task, code: &Ast, run: &RunResult) -> f64 {
    let state = &run.state;
    if !run.solved
        || state.executed_count() != code.nblock() as usize
        || no_crossing(state) != 1.0
        || has_inverse_pair(code)
        || has_shortcut(task, code)
        || code
            .single_deletion_mutants()
            .iter()
            .any(|m| emulator::solves(m, task))
    {
        return 0.0;
    }
    let q = qual(&QualCounters::from_actions(state.actions(), norm(task)));
    let cutqual = if task.domain() == Domain::Karel {
        cut_quality(task)
    } else {
        0.0
    };
    combine(task.domain(), 1.0, q, cutqual)
}

/// Pluggable task scoring.
pub trait TaskScorer {
    fn score(&self, task: &Task, code: &Ast) -> ScoreReport;

    fn total(&self, task: &Task, code: &Ast) -> f64 {
        self.score(task, code).total
    }
}

/// The gated coverage/quality score implemented by this module.
#[derive(Clone, Copy, Debug, Default)]
pub struct StandardScore;

impl TaskScorer for StandardScore {
    fn score(&self, task: &Task, code: &Ast) -> ScoreReport {
        score(task, code)
    }

    fn total(&self, task: &Task, code: &Ast) -> f64 {
        total(task, code)
    }
}

/// Convenience for callers that already hold the executed actions.
pub fn qual_of(actions: &[Action], n: f64) -> f64 {
    qual(&QualCounters::from_actions(actions.iter().copied(), n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Grid, Puzzle};

    fn counters(
        moves: u32,
        turns: u32,
        segments: u32,
        long_segments: u32,
        turn_segments: u32,
        n: f64,
    ) -> QualCounters {
        QualCounters {
            moves,
            turns,
            segments,
            long_segments,
            turn_segments,
            n,
        }
    }

    #[test]
    fn qual_reference_points() {
        assert_eq!(qual(&counters(0, 0, 0, 0, 0, 16.0)), 0.25);
        assert!((qual(&counters(32, 16, 8, 6, 0, 16.0)) - 1.0).abs() < 1e-12);
        assert!((qual(&counters(16, 4, 2, 1, 0, 16.0)) - 0.47265625).abs() < 1e-12);
    }

    #[test]
    fn run_counting() {
        use Action::*;
        let seq = [
            Move, Move, Move, Move, TurnLeft, Move, Move, Move, Move, Move, Move, TurnLeft,
            TurnLeft, TurnLeft, TurnLeft,
        ];
        let c = QualCounters::from_actions(seq, 8.0);
        assert_eq!(
            (
                c.moves,
                c.turns,
                c.segments,
                c.long_segments,
                c.turn_segments
            ),
            (10, 5, 2, 1, 1)
        );
        let c = QualCounters::from_actions([Move, Move, PutMarker, Move, Move], 8.0);
        assert_eq!(c.segments, 0);
    }

    #[test]
    fn crash_scores_zero() {
        let t = Task {
            puzzle: Puzzle::Maze(Grid::parse(">#x\n").unwrap()),
            store: Domain::HocMaze.block_kinds(),
            size: 5,
        };
        let c = Ast::parse("def Run(){move; move}", Domain::HocMaze).unwrap();
        let r = score(&t, &c);
        assert_eq!(r.sol, 0.0);
        assert_eq!(r.total, 0.0);
        assert!(!r.indicator_passed);
    }

    #[test]
    fn inverse_turns_are_redundant() {
        let t = Task {
            puzzle: Puzzle::Maze(Grid::parse(">.x\n").unwrap()),
            store: Domain::HocMaze.block_kinds(),
            size: 5,
        };
        let c = Ast::parse(
            "def Run(){turnLeft; turnRight; move; move}",
            Domain::HocMaze,
        )
        .unwrap();
        let r = score(&t, &c);
        assert_eq!(r.notred, 0.0);
        assert_eq!(r.total, 0.0);
        let good = Ast::parse("def Run(){move; move}", Domain::HocMaze).unwrap();
        let r = score(&t, &good);
        assert!(r.indicator_passed, "{r:?}");
        assert_eq!(total(&t, &good), r.total);
    }
}
