//! Success metric, objective checks and rollout orchestration.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::{generate_code, CodePolicy, CodegenError, UniformCode};
use crate::dataset::task_oracle;
use crate::dsl::{Ast, BlockKind};
use crate::emulator::{execute, solves, DEFAULT_STEP_LIMIT};
use crate::policies::{CodeModel, PuzzleModel};
use crate::rng;
use crate::scoring::{self, ScoreReport};
use crate::search::{self, SearchBounds};
use crate::symexec::{generate_puzzle, PuzzlePolicy, UniformPuzzle};
use crate::world::{Cell, Task, TaskSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SuccessMetricConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub oracle_rollouts: usize,
    pub seed: u64,
}

impl Default for SuccessMetricConfig {
    fn default() -> Self {
        SuccessMetricConfig {
            lambda1: 0.0,
            lambda2: 0.9,
            oracle_rollouts: 10_000,
            seed: 0,
        }
    }
}

/// Whether a task honours a spec: preset cells and avatar kept, store within
/// the blocks the sketch allows, size within the bound.
pub fn validity(spec: &TaskSpec, task: &Task) -> bool {
    if task.domain() != spec.domain || task.size > spec.size {
        return false;
    }
    if !task
        .store
        .is_subset(&spec.sketch.allowed_blocks(&spec.delta))
    {
        return false;
    }
    let g = task.puzzle.start();
    let p = &spec.puzzle;
    if (g.rows, g.cols) != (p.rows, p.cols) {
        return false;
    }
    let cells_kept = (0..p.rows)
        .flat_map(|r| (0..p.cols).map(move |c| (r, c)))
        .all(|(r, c)| p.get(r, c) == Cell::Unknown || p.get(r, c) == g.get(r, c));
    cells_kept
        && p.avatar.is_none_or(|a| g.avatar == Some(a))
        && p.goal.is_none_or(|x| g.goal == Some(x))
}

/// Metric M against a known oracle score.
pub fn metric_m_given(
    spec: &TaskSpec,
    task: Option<&Task>,
    code: &Ast,
    oracle: f64,
    cfg: &SuccessMetricConfig,
) -> bool {
    let Some(task) = task else { return false };
    validity(spec, task)
        && oracle > cfg.lambda1
        && scoring::total(task, code) > cfg.lambda2 * oracle
}

/// The oracle score metric M compares against.
pub fn task_oracle_score(code: &Ast, spec: &TaskSpec, cfg: &SuccessMetricConfig) -> f64 {
    task_oracle(code, spec, cfg.oracle_rollouts, cfg.seed).score
}

/// Metric M: valid task, positive oracle score, and a task score within
/// `lambda2` of the oracle's.
pub fn metric_m(
    spec: &TaskSpec,
    task: Option<&Task>,
    code: &Ast,
    cfg: &SuccessMetricConfig,
) -> bool {
    metric_m_given(spec, task, code, task_oracle_score(code, spec, cfg), cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObjectiveConfig {
    pub n_trace: u32,
    pub n_min: u32,
    pub bounds: SearchBounds,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            n_trace: 2,
            n_min: 1,
            bounds: SearchBounds::default(),
        }
    }
}

/// Support for one objective value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Evidence {
    /// A solution showing the objective holds (O2, O3) or fails (O3–O5).
    pub witness: Option<Ast>,
    /// The searched universe was too large to enumerate, so a `true` value for
    /// a universally quantified objective means "not falsified".
    pub bound_exhausted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObjectiveReport {
    pub o1: bool,
    pub o2: bool,
    pub o3: bool,
    pub o4: bool,
    pub o5: bool,
    pub code_solves_task: bool,
    pub evidence: [Evidence; 5],
    pub solutions_found: usize,
    pub sketch_solutions_found: usize,
}

impl ObjectiveReport {
    /// `[o1, o2, o3, o4, o5, code solves task]` as 0/1.
    pub fn row(&self) -> [u8; 6] {
        [
            self.o1,
            self.o2,
            self.o3,
            self.o4,
            self.o5,
            self.code_solves_task,
        ]
        .map(u8::from)
    }
}

/// Whether every loop body and every conditional branch of `code` is entered
/// at least `n` times when it runs on `task`.
pub fn bodies_entered(code: &Ast, task: &Task, n: u32) -> bool {
    let run = execute(code, &task.puzzle, DEFAULT_STEP_LIMIT);
    let kinds = code.node_kinds();
    kinds.iter().enumerate().all(|(id, k)| {
        let e = run.state.body_entries[id];
        match k {
            Some(BlockKind::Repeat | BlockKind::RepeatUntil | BlockKind::While | BlockKind::If) => {
                e[0] >= n
            }
            Some(BlockKind::IfElse) => e[0] >= n && e[1] >= n,
            _ => true,
        }
    })
}

/// Checks the five task objectives for `task` against `spec`; `code` is the
/// output code, if any, used as a search seed and for the solve column.
pub fn check_objectives(
    spec: &TaskSpec,
    task: &Task,
    code: Option<&Ast>,
    cfg: &ObjectiveConfig,
) -> ObjectiveReport {
    let seeds: Vec<Ast> = code.into_iter().cloned().collect();
    let sk = search::sketch_solutions(spec, task, &seeds, &cfg.bounds);
    let mut all_seeds = seeds.clone();
    all_seeds.extend(sk.solutions.iter().cloned());
    let full = search::solutions(task, &all_seeds, &cfg.bounds);

    let o1 = validity(spec, task);
    let o2 = !full.solutions.is_empty();
    let e2 = Evidence {
        witness: full.solutions.first().cloned(),
        bound_exhausted: !full.exhaustive,
    };

    let o3a = sk.solutions.first().cloned();
    let (depth, nconst) = (spec.sketch.depth(), spec.sketch.nconst());
    let simpler = full.solutions.iter().find(|c| {
        let a = c.attributes();
        a.depth < depth || a.nconst < nconst
    });
    let o3 = o3a.is_some() && simpler.is_none();
    let e3 = Evidence {
        witness: simpler.cloned().or_else(|| o3a.clone()),
        bound_exhausted: !(full.exhaustive && sk.exhaustive),
    };

    let idle = sk
        .solutions
        .iter()
        .find(|c| !bodies_entered(c, task, cfg.n_trace));
    let o4 = o3a.is_some() && idle.is_none();
    let e4 = Evidence {
        witness: idle.cloned(),
        bound_exhausted: !sk.exhaustive,
    };

    let floor = task.size.saturating_sub(cfg.n_min);
    let small = sk.solutions.iter().find(|c| c.nblock() < floor);
    let o5 = o3a.is_some() && small.is_none();
    let e5 = Evidence {
        witness: small.cloned(),
        bound_exhausted: !sk.exhaustive,
    };

    ObjectiveReport {
        o1,
        o2,
        o3,
        o4,
        o5,
        code_solves_task: code.is_some_and(|c| solves(c, task)),
        evidence: [Evidence::default(), e2, e3, e4, e5],
        solutions_found: full.solutions.len(),
        sketch_solutions_found: sk.solutions.len(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    NeurTaskSyn,
    BaseTaskSyn,
    NeurCodeGen,
    BaseCodeGen,
    NeurPuzzleGen,
    BasePuzzleGen,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::NeurTaskSyn,
        Variant::BaseTaskSyn,
        Variant::NeurCodeGen,
        Variant::BaseCodeGen,
        Variant::NeurPuzzleGen,
        Variant::BasePuzzleGen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::NeurTaskSyn => "NeurTaskSyn",
            Variant::BaseTaskSyn => "BaseTaskSyn",
            Variant::NeurCodeGen => "NeurCodeGen",
            Variant::BaseCodeGen => "BaseCodeGen",
            Variant::NeurPuzzleGen => "NeurPuzzleGen",
            Variant::BasePuzzleGen => "BasePuzzleGen",
        }
    }

    pub fn from_name(s: &str) -> Option<Variant> {
        let s = s.to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.name().to_ascii_lowercase() == s)
            .or(match s.as_str() {
                "neur" => Some(Variant::NeurTaskSyn),
                "base" => Some(Variant::BaseTaskSyn),
                _ => None,
            })
    }

    fn neural_code(self) -> bool {
        matches!(self, Variant::NeurTaskSyn | Variant::NeurCodeGen)
    }

    fn neural_puzzle(self) -> bool {
        matches!(self, Variant::NeurTaskSyn | Variant::NeurPuzzleGen)
    }

    fn fixed_code(self) -> bool {
        matches!(self, Variant::NeurPuzzleGen | Variant::BasePuzzleGen)
    }

    fn oracle_puzzle(self) -> bool {
        matches!(self, Variant::NeurCodeGen | Variant::BaseCodeGen)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Models<'a> {
    pub code: Option<&'a CodeModel>,
    pub puzzle: Option<&'a PuzzleModel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SynthConfig {
    /// Code rollouts.
    pub c: usize,
    /// Puzzle rollouts per code.
    pub p: usize,
    /// Puzzle rollouts of the oracle used by the code-only variants.
    pub oracle_rollouts: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            c: 10,
            p: 100,
            oracle_rollouts: 10_000,
            temperature: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("variant {0} needs a trained {1} model")]
    MissingModel(&'static str, &'static str),
    #[error("variant {0} needs a fixed code")]
    MissingCode(&'static str),
    #[error("model domain does not match the spec")]
    DomainMismatch,
    #[error(transparent)]
    Codegen(#[from] CodegenError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Synthesis {
    pub task: Option<Task>,
    pub code: Ast,
    pub score: Option<ScoreReport>,
    pub total: f64,
    /// Number of scored candidates.
    pub candidates: usize,
    /// Every candidate scored zero; the output is a best effort.
    pub no_candidate: bool,
    pub code_rollout: usize,
    pub puzzle_rollout: usize,
}

fn rollout_code(
    spec: &TaskSpec,
    variant: Variant,
    models: &Models<'_>,
    i: usize,
    cfg: &SynthConfig,
) -> Result<Ast, SynthError> {
    let mut r = rng::stream(cfg.seed, 1, i as u64);
    let g = if variant.neural_code() {
        let m = models
            .code
            .ok_or(SynthError::MissingModel(variant.name(), "code"))?;
        let mut policy = m.policy();
        generate_code(spec, &mut policy as &mut dyn CodePolicy, &mut r)?
    } else {
        generate_code(spec, &mut UniformCode, &mut r)?
    };
    Ok(g.code)
}

/// Runs `c` code rollouts times `p` puzzle rollouts and returns the best
/// candidate; ties go to the earliest rollout.
pub fn synthesize(
    spec: &TaskSpec,
    variant: Variant,
    models: &Models<'_>,
    fixed: Option<&Ast>,
    cfg: &SynthConfig,
) -> Result<Synthesis, SynthError> {
    for m in [
        models.code.map(|m| m.domain),
        models.puzzle.map(|m| m.domain),
    ]
    .into_iter()
    .flatten()
    {
        if m != spec.domain {
            return Err(SynthError::DomainMismatch);
        }
    }
    if variant.neural_puzzle() && models.puzzle.is_none() {
        return Err(SynthError::MissingModel(variant.name(), "puzzle"));
    }
    let codes: Vec<Ast> = if variant.fixed_code() {
        alloc::vec![fixed
            .ok_or(SynthError::MissingCode(variant.name()))?
            .clone()]
    } else {
        (0..cfg.c.max(1))
            .map(|i| rollout_code(spec, variant, models, i, cfg))
            .collect::<Result<_, _>>()?
    };
    let mut best: Option<Synthesis> = None;
    let mut candidates = 0;
    for (i, code) in codes.iter().enumerate() {
        let mut consider = |task: Option<Task>, total: f64, j: usize| {
            let better = best
                .as_ref()
                .is_none_or(|b| total > b.total || (b.task.is_none() && task.is_some()));
            if better {
                best = Some(Synthesis {
                    task,
                    code: code.clone(),
                    score: None,
                    total,
                    candidates: 0,
                    no_candidate: false,
                    code_rollout: i,
                    puzzle_rollout: j,
                });
            }
        };
        if variant.oracle_puzzle() {
            let o = task_oracle(
                code,
                spec,
                cfg.oracle_rollouts,
                rng::mix(cfg.seed, i as u64),
            );
            candidates += 1;
            consider(o.task, o.score, 0);
            continue;
        }
        let neural = models.puzzle.filter(|_| variant.neural_puzzle());
        for j in 0..cfg.p.max(1) {
            let mut r = rng::stream(rng::mix(cfg.seed, i as u64), 2, j as u64);
            let ep = match neural {
                Some(m) => generate_puzzle(
                    code,
                    spec,
                    &mut m.policy(cfg.temperature) as &mut dyn PuzzlePolicy,
                    &mut r,
                ),
                None => generate_puzzle(code, spec, &mut UniformPuzzle, &mut r),
            };
            candidates += 1;
            consider(ep.task, ep.reward, j);
        }
    }
    let mut out = best.expect("at least one candidate");
    out.candidates = candidates;
    out.no_candidate = out.total <= 0.0;
    out.score = out.task.as_ref().map(|t| scoring::score(t, &out.code));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{Domain, Sketch};
    use crate::world::{Grid, Puzzle};

    fn spec(text: &str, size: u32) -> TaskSpec {
        TaskSpec::new(Sketch::parse(text, Domain::HocMaze).unwrap(), size)
    }

    #[test]
    fn candidate_counts() {
        let s = spec("def Run(){a; RepeatUntil(goal){a}}", 5);
        let cfg = SynthConfig {
            c: 5,
            p: 10,
            ..SynthConfig::default()
        };
        let out = synthesize(&s, Variant::BaseTaskSyn, &Models::default(), None, &cfg).unwrap();
        assert_eq!(out.candidates, 50);
        let code = Ast::parse("def Run(){RepeatUntil(goal){move}}", Domain::HocMaze).unwrap();
        let cfg1 = SynthConfig {
            p: 1,
            ..cfg.clone()
        };
        let one = synthesize(
            &s,
            Variant::BasePuzzleGen,
            &Models::default(),
            Some(&code),
            &cfg1,
        )
        .unwrap();
        assert_eq!(one.candidates, 1);
        let mut r = rng::stream(rng::mix(cfg.seed, 0), 2, 0);
        let ep = generate_puzzle(&code, &s, &mut UniformPuzzle, &mut r);
        assert_eq!(one.total, ep.reward);
        assert_eq!(one.task, ep.task);
    }

    #[test]
    fn missing_inputs_are_errors() {
        let s = spec("def Run(){a}", 4);
        let cfg = SynthConfig::default();
        assert!(matches!(
            synthesize(&s, Variant::NeurTaskSyn, &Models::default(), None, &cfg),
            Err(SynthError::MissingModel(..))
        ));
        assert!(matches!(
            synthesize(&s, Variant::BasePuzzleGen, &Models::default(), None, &cfg),
            Err(SynthError::MissingCode(_))
        ));
    }

    #[test]
    fn best_score_grows_with_rollouts() {
        let s = spec(
            "def Run(){a; RepeatUntil(goal){a; IfElse(b){a} Else{a}; a}}",
            8,
        );
        let mut last = -1.0;
        for p in [1, 5, 10, 40] {
            let cfg = SynthConfig {
                c: 3,
                p,
                ..SynthConfig::default()
            };
            let out = synthesize(&s, Variant::BaseTaskSyn, &Models::default(), None, &cfg).unwrap();
            assert!(out.total >= last);
            last = out.total;
        }
    }

    #[test]
    fn metric_thresholds() {
        let code = Ast::parse("def Run(){move; move}", Domain::HocMaze).unwrap();
        let task = Task {
            puzzle: Puzzle::Maze(Grid::parse("#####\n#>.x#\n#####\n").unwrap()),
            store: [BlockKind::Move].into_iter().collect(),
            size: 3,
        };
        let mut s = spec("def Run(){a}", 3);
        s.puzzle = Grid::unknown(3, 5);
        let total = scoring::total(&task, &code);
        let cfg = SuccessMetricConfig::default();
        assert!(total > 0.0);
        assert!(metric_m_given(&s, Some(&task), &code, total / 0.95, &cfg));
        assert!(!metric_m_given(&s, Some(&task), &code, total / 0.85, &cfg));
        assert!(!metric_m_given(&s, Some(&task), &code, 0.0, &cfg));
        assert!(!metric_m_given(&s, None, &code, total, &cfg));
        // a preset wall the task ignores breaks validity
        s.puzzle.set(1, 2, Cell::Wall);
        assert!(!validity(&s, &task));
    }

    #[test]
    fn corridor_objectives() {
        let task = Task {
            puzzle: Puzzle::Maze(Grid::parse("######\n#>...x\n######\n").unwrap()),
            store: [BlockKind::Move, BlockKind::RepeatUntil]
                .into_iter()
                .collect(),
            size: 3,
        };
        let mut s = spec("def Run(){RepeatUntil(goal){a}}", 3);
        s.puzzle = Grid::unknown(3, 6);
        let code = Ast::parse("def Run(){RepeatUntil(goal){move}}", Domain::HocMaze).unwrap();
        let rep = check_objectives(&s, &task, Some(&code), &ObjectiveConfig::default());
        assert_eq!(rep.row(), [1, 1, 1, 1, 1, 1]);
        assert!(!rep.evidence[1].bound_exhausted);
        // with a larger bound the straight-line code also fits and is simpler
        let big = Task {
            size: 6,
            store: [BlockKind::Move, BlockKind::RepeatUntil]
                .into_iter()
                .collect(),
            ..task
        };
        let mut s6 = s.clone();
        s6.size = 6;
        let rep = check_objectives(&s6, &big, Some(&code), &ObjectiveConfig::default());
        assert!(rep.o2 && !rep.o3 && !rep.o5);
        assert!(rep.o3 <= rep.o2);
    }
}
