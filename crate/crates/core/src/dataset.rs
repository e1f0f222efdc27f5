//! Oracle tasks and the synthetic specification dataset.
//!
//! The oracle runs many uniform puzzle rollouts for a code and keeps the best
//! scoring task. The dataset builder samples codes per `(depth, constructs)`
//! bucket, keeps the ones whose oracle task is of good quality and passes a
//! static redundancy screen, and turns each into a specification.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{
    sketch_of, Action, Ast, Block, ConstructKind, Delta, Domain, SketchConstruct, SketchItem, Slot,
    StructNode, Structure, ITER_MIN,
};
use crate::rng;
use crate::scoring;
use crate::symexec::{generate_puzzle, UniformPuzzle};
use crate::world::{Grid, Task, TaskSpec};

/// Largest size bound given to dataset specifications.
pub const MAX_SPEC_SIZE: u32 = 17;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OracleResult {
    /// Best task found; `None` when every rollout failed.
    pub task: Option<Task>,
    pub score: f64,
    pub rollouts_used: usize,
}

/// Best of `p` uniform puzzle rollouts for `code` under `spec`.
///
/// Rollout `j` draws from a stream keyed by the seed, the code text and `j`, so
/// the result for `p` rollouts is a prefix of the result for more.
pub fn task_oracle(code: &Ast, spec: &TaskSpec, p: usize, seed: u64) -> OracleResult {
    let key = rng::mix(seed, rng::hash_str(&code.to_compact()));
    let mut best = OracleResult {
        task: None,
        score: 0.0,
        rollouts_used: p,
    };
    for j in 0..p {
        let mut r = rng::stream(key, 0x0_4ac1e, j as u64);
        let ep = generate_puzzle(code, spec, &mut UniformPuzzle, &mut r);
        if ep.reward > best.score {
            best.score = ep.reward;
            best.task = ep.task;
        }
    }
    best
}

/// The oracle specification of a code: unconstrained grid and fills, tight size.
pub fn oracle_spec(code: &Ast) -> TaskSpec {
    let sketch = sketch_of(code, &BTreeSet::new()).expect("empty mask is always valid");
    TaskSpec::new(sketch, code.nblock())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("no candidate for bucket ({0}, {1}) survived filtering within budget")]
    StructureUnsatisfiable(u32, u32),
    #[error("bucket ({0}, {1}) has no structure in this domain")]
    EmptyBucket(u32, u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetConfig {
    pub oracle_rollouts: usize,
    /// Minimum `qual` of the oracle task.
    pub min_qual: f64,
    /// Candidate codes are generated with at most this many blocks.
    pub max_code_size: u32,
    /// Candidates tried per requested spec before giving up on a bucket.
    pub attempts_per_spec: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            oracle_rollouts: 10_000,
            min_qual: 0.3,
            max_code_size: 12,
            attempts_per_spec: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpecEntry {
    pub spec: TaskSpec,
    pub exemplar: Ast,
    pub oracle_score: f64,
    pub bucket: (u32, u32),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpecDataset {
    pub domain: Domain,
    pub seed: u64,
    pub specs: Vec<SpecEntry>,
    pub split: Split,
    pub buckets: Vec<((u32, u32), usize)>,
}

impl SpecDataset {
    pub fn part(&self, ids: &[usize]) -> Vec<&SpecEntry> {
        ids.iter().map(|&i| &self.specs[i]).collect()
    }
}

/// Bucket targets of the reference dataset.
pub fn reference_targets(domain: Domain) -> Vec<((u32, u32), usize)> {
    let keys = [(1, 0), (2, 1), (2, 2), (3, 2), (3, 3)];
    let counts: [usize; 5] = match domain {
        Domain::HocMaze => [183, 69, 47, 136, 581],
        Domain::Karel => [300, 155, 277, 295, 0],
    };
    keys.into_iter().zip(counts).collect()
}

/// Every structure of a domain with the given `(depth, nconst)`.
pub fn structures(domain: Domain, bucket: (u32, u32)) -> Vec<Structure> {
    let (depth, n) = bucket;
    let mut out: Vec<Structure> = forests(domain.constructs(), n as usize)
        .into_iter()
        .map(|body| Structure { body })
        .filter(|s| s.allowed_in(domain).is_ok() && s.depth() == depth)
        .collect();
    out.sort_by_key(|s| alloc::format!("{s}"));
    out.dedup();
    out
}

/// All ordered forests with exactly `n` construct nodes.
fn forests(kinds: &[ConstructKind], n: usize) -> Vec<Vec<StructNode>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    // first tree takes k nodes, the rest of the forest n - k
    for k in 1..=n {
        for first in trees(kinds, k) {
            for rest in forests(kinds, n - k) {
                let mut f = vec![first.clone()];
                f.extend(rest);
                out.push(f);
            }
        }
    }
    out
}

fn trees(kinds: &[ConstructKind], n: usize) -> Vec<StructNode> {
    let mut out = Vec::new();
    for &kind in kinds {
        if kind == ConstructKind::IfElse {
            for a in 0..n {
                for t in forests(kinds, a) {
                    for e in forests(kinds, n - 1 - a) {
                        out.push(StructNode {
                            kind,
                            body: t.clone(),
                            else_body: e,
                        });
                    }
                }
            }
        } else {
            for b in forests(kinds, n - 1) {
                out.push(StructNode {
                    kind,
                    body: b,
                    else_body: Vec::new(),
                });
            }
        }
    }
    out
}

/// Sketch of a structure with every slot and action run left open.
pub fn structure_sketch(domain: Domain, s: &Structure) -> crate::dsl::Sketch {
    fn conv(nodes: &[StructNode]) -> Vec<SketchItem> {
        let mut out = vec![SketchItem::Hole];
        for n in nodes {
            let c = match n.kind {
                ConstructKind::Repeat => SketchConstruct::Repeat {
                    times: Slot::Hole,
                    body: conv(&n.body),
                },
                ConstructKind::RepeatUntil => SketchConstruct::RepeatUntil {
                    body: conv(&n.body),
                },
                ConstructKind::While => SketchConstruct::While {
                    cond: Slot::Hole,
                    body: conv(&n.body),
                },
                ConstructKind::If => SketchConstruct::If {
                    cond: Slot::Hole,
                    then_body: conv(&n.body),
                },
                ConstructKind::IfElse => SketchConstruct::IfElse {
                    cond: Slot::Hole,
                    then_body: conv(&n.body),
                    else_body: conv(&n.else_body),
                },
            };
            out.push(SketchItem::Construct(c));
            if n.kind != ConstructKind::RepeatUntil {
                out.push(SketchItem::Hole);
            }
        }
        out
    }
    crate::dsl::Sketch {
        domain,
        body: conv(&s.body),
    }
}

/// Random hole filling of a structure: short action runs, nonempty construct
/// bodies, distinct conditional branches and no adjacent inverse actions.
pub fn sample_code<R: Rng + ?Sized>(
    domain: Domain,
    shape: &Structure,
    max_size: u32,
    r: &mut R,
) -> Option<Ast> {
    fn action<R: Rng + ?Sized>(domain: Domain, prev: Option<Action>, r: &mut R) -> Action {
        loop {
            let a = if r.gen_bool(0.45) {
                Action::Move
            } else {
                *domain.actions().choose(r).expect("actions")
            };
            if prev.and_then(Action::inverse) != Some(a) {
                return a;
            }
        }
    }
    fn run<R: Rng + ?Sized>(domain: Domain, min: usize, out: &mut Vec<Block>, r: &mut R) {
        let len = if min > 1 {
            r.gen_range(min..=min + 6)
        } else {
            min.max([0, 0, 1, 1, 1, 2, 2, 3][r.gen_range(0..8)])
        };
        for _ in 0..len {
            let prev = match out.last() {
                Some(Block::Action(a)) => Some(*a),
                _ => None,
            };
            out.push(Block::Action(action(domain, prev, r)));
        }
    }
    fn body<R: Rng + ?Sized>(
        domain: Domain,
        nodes: &[StructNode],
        top: bool,
        r: &mut R,
    ) -> Vec<Block> {
        let mut out = Vec::new();
        let min = match (nodes.is_empty(), top) {
            (true, true) => 3,
            (true, false) => 1,
            _ => 0,
        };
        run(domain, min, &mut out, r);
        for n in nodes {
            let cond = *domain.conds().choose(r).expect("conds");
            let b = match n.kind {
                ConstructKind::Repeat => Block::Repeat {
                    times: r.gen_range(ITER_MIN..=5),
                    body: body(domain, &n.body, false, r),
                },
                ConstructKind::RepeatUntil => Block::RepeatUntil {
                    body: body(domain, &n.body, false, r),
                },
                ConstructKind::While => Block::While {
                    cond,
                    body: body(domain, &n.body, false, r),
                },
                ConstructKind::If => Block::If {
                    cond,
                    then_body: body(domain, &n.body, false, r),
                },
                ConstructKind::IfElse => {
                    let then_body = body(domain, &n.body, false, r);
                    let mut else_body = body(domain, &n.else_body, false, r);
                    while else_body == then_body {
                        else_body = body(domain, &n.else_body, false, r);
                    }
                    Block::IfElse {
                        cond,
                        then_body,
                        else_body,
                    }
                }
            };
            let until = n.kind == ConstructKind::RepeatUntil;
            out.push(b);
            if !(top && until) {
                run(domain, 0, &mut out, r);
            }
        }
        out
    }
    for _ in 0..64 {
        let code = Ast::new(domain, body(domain, &shape.body, true, r));
        if code.nblock() <= max_size && code.validate().is_ok() && !statically_redundant(&code) {
            return Some(code);
        }
    }
    None
}

/// Static redundancy rules. Each flags codes whose score is zero on every
/// task (or that a reviewer would reject on sight):
/// empty construct bodies, identical conditional branches, inverse action
/// pairs, three identical turns in a row, a conditional outside every loop
/// (its unwrap solves too, or an IfElse branch is never covered), a loop whose
/// body only turns, and a trailing action that leaves the goal check unchanged.
pub fn statically_redundant(code: &Ast) -> bool {
    fn walk(body: &[Block], in_loop: bool) -> bool {
        let triple_turn = body.windows(3).any(|w| match (&w[0], &w[1], &w[2]) {
            (Block::Action(a), Block::Action(b), Block::Action(c)) => {
                a.is_turn() && a == b && b == c
            }
            _ => false,
        });
        triple_turn
            || body.iter().any(|b| match b {
                Block::Action(_) => false,
                Block::IfElse {
                    then_body,
                    else_body,
                    ..
                } => {
                    !in_loop
                        || then_body.is_empty()
                        || else_body.is_empty()
                        || then_body == else_body
                        || walk(then_body, true)
                        || walk(else_body, true)
                }
                Block::If { then_body, .. } => {
                    !in_loop || then_body.is_empty() || walk(then_body, true)
                }
                other => other
                    .bodies()
                    .any(|inner| inner.is_empty() || only_turns(inner) || walk(inner, true)),
            })
    }
    fn only_turns(body: &[Block]) -> bool {
        body.iter().all(|b| match b {
            Block::Action(a) => a.is_turn(),
            other => other.bodies().all(|inner| only_turns(inner)),
        })
    }
    let trailing = match code.body.last() {
        Some(Block::Action(a)) => match code.domain {
            Domain::HocMaze => *a != Action::Move,
            Domain::Karel => !matches!(a, Action::PutMarker | Action::PickMarker),
        },
        _ => false,
    };
    trailing || walk(&code.body, false) || scoring::has_inverse_pair(code)
}

/// Whether every conditional of a structure sits inside a loop; others cannot
/// yield a nonredundant code.
pub fn loop_guarded(s: &Structure) -> bool {
    fn walk(nodes: &[StructNode], in_loop: bool) -> bool {
        nodes.iter().all(|n| {
            let is_loop = n.kind.is_loop();
            (is_loop || in_loop)
                && walk(&n.body, in_loop || is_loop)
                && walk(&n.else_body, in_loop || is_loop)
        })
    }
    walk(&s.body, false)
}

/// Candidate number `k` of a bucket; deterministic in `(cfg.seed, bucket, k)`.
pub fn bucket_candidate(
    domain: Domain,
    bucket: (u32, u32),
    shapes: &[Structure],
    k: usize,
    cfg: &DatasetConfig,
) -> Option<SpecEntry> {
    let salt = rng::mix(
        u64::from(bucket.0) << 8 | u64::from(bucket.1),
        domain as u64,
    );
    let mut r = rng::stream(cfg.seed, salt, k as u64);
    let shape = shapes.choose(&mut r)?;
    let code = sample_code(domain, shape, cfg.max_code_size, &mut r)?;
    if code.structure().bucket() != bucket {
        return None;
    }
    let oracle = task_oracle(&code, &oracle_spec(&code), cfg.oracle_rollouts, cfg.seed);
    let task = oracle.task.as_ref()?;
    if oracle.score <= 0.0 || scoring::score(task, &code).qual < cfg.min_qual {
        return None;
    }
    let slots = code.slot_ids();
    let mask: BTreeSet<usize> = slots.into_iter().filter(|_| r.gen_bool(0.5)).collect();
    let sketch = sketch_of(&code, &mask).ok()?;
    let spec = TaskSpec {
        domain,
        puzzle: Grid::unknown(16, 16),
        sketch,
        delta: Delta::full(domain),
        size: r.gen_range(code.nblock().max(1)..=MAX_SPEC_SIZE.max(code.nblock())),
    };
    Some(SpecEntry {
        spec,
        exemplar: code,
        oracle_score: oracle.score,
        bucket,
    })
}

/// Evaluates candidates `range` of a bucket, possibly in parallel; results must
/// be in index order.
pub type BatchFn<'a> = dyn Fn(Range<usize>, &(dyn Fn(usize) -> Option<SpecEntry> + Sync)) -> Vec<Option<SpecEntry>>
    + 'a;

/// Sequential batch evaluation.
pub fn sequential(
    range: Range<usize>,
    f: &(dyn Fn(usize) -> Option<SpecEntry> + Sync),
) -> Vec<Option<SpecEntry>> {
    range.map(f).collect()
}

pub fn build_dataset(
    domain: Domain,
    targets: &[((u32, u32), usize)],
    cfg: &DatasetConfig,
) -> Result<SpecDataset, DatasetError> {
    build_dataset_with(domain, targets, cfg, &sequential)
}

/// Builds a dataset; `batch` decides how candidate batches are evaluated. The
/// output does not depend on it.
pub fn build_dataset_with(
    domain: Domain,
    targets: &[((u32, u32), usize)],
    cfg: &DatasetConfig,
    batch: &BatchFn<'_>,
) -> Result<SpecDataset, DatasetError> {
    let mut specs: Vec<SpecEntry> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut buckets = Vec::new();
    for &(bucket, target) in targets {
        buckets.push((bucket, target));
        if target == 0 {
            continue;
        }
        let shapes: Vec<Structure> = structures(domain, bucket)
            .into_iter()
            .filter(loop_guarded)
            .collect();
        if shapes.is_empty() {
            return Err(DatasetError::EmptyBucket(bucket.0, bucket.1));
        }
        let budget = target.saturating_mul(cfg.attempts_per_spec).max(1000);
        let mut got = 0;
        let mut next = 0;
        let chunk = 64;
        while got < target {
            if next >= budget {
                return Err(DatasetError::StructureUnsatisfiable(bucket.0, bucket.1));
            }
            let end = (next + chunk).min(budget);
            let f = |k: usize| bucket_candidate(domain, bucket, &shapes, k, cfg);
            for entry in batch(next..end, &f).into_iter().flatten() {
                if got < target && seen.insert(entry.exemplar.to_compact()) {
                    specs.push(entry);
                    got += 1;
                }
            }
            next = end;
        }
    }
    let split = split(specs.len(), cfg.seed);
    Ok(SpecDataset {
        domain,
        seed: cfg.seed,
        specs,
        split,
        buckets,
    })
}

/// Shuffled 80/10/10 split of `n` items.
pub fn split(n: usize, seed: u64) -> Split {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng::stream(seed, 0x5917, 0));
    // rounded, so every part is within one spec of its exact share
    let train = (8 * n + 5) / 10;
    let val = (n + 5) / 10;
    let mut s = Split {
        train: ids[..train].to_vec(),
        val: ids[train..train + val].to_vec(),
        test: ids[train + val..].to_vec(),
    };
    s.train.sort_unstable();
    s.val.sort_unstable();
    s.test.sort_unstable();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structure_buckets_are_exact() {
        for d in Domain::ALL {
            for ((depth, n), _) in reference_targets(d) {
                for s in structures(d, (depth, n)) {
                    assert_eq!(s.bucket(), (depth, n), "{s}");
                    assert!(s.allowed_in(d).is_ok());
                }
            }
        }
        assert_eq!(structures(Domain::HocMaze, (1, 0)).len(), 1);
        // Repeat, RepeatUntil, If, IfElse
        assert_eq!(structures(Domain::HocMaze, (2, 1)).len(), 4);
        assert!(structures(Domain::Karel, (3, 3)).len() > 10);
    }

    #[test]
    fn oracle_is_prefix_monotone() {
        let code = Ast::parse(
            "def Run(){RepeatUntil(goal){move; turnLeft}}",
            Domain::HocMaze,
        )
        .unwrap();
        let spec = oracle_spec(&code);
        let mut last = 0.0;
        for p in [1, 5, 20, 60] {
            let o = task_oracle(&code, &spec, p, 4);
            assert!(o.score >= last);
            last = o.score;
        }
        assert_eq!(
            task_oracle(&code, &spec, 60, 4),
            task_oracle(&code, &spec, 60, 4)
        );
    }

    #[test]
    fn identical_branches_score_zero() {
        let code = Ast::parse(
            "def Run(){move; IfElse(pathAhead){move} Else{move}}",
            Domain::HocMaze,
        )
        .unwrap();
        assert!(statically_redundant(&code));
        assert_eq!(task_oracle(&code, &oracle_spec(&code), 200, 1).score, 0.0);
        let simple = Ast::parse("def Run(){move}", Domain::HocMaze).unwrap();
        assert!(task_oracle(&simple, &oracle_spec(&simple), 100, 1).score > 0.0);
    }

    #[test]
    fn split_is_a_partition() {
        let s = split(1016, 3);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (813, 102, 101));
        let mut all: Vec<usize> = s
            .train
            .iter()
            .chain(&s.val)
            .chain(&s.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..1016).collect::<Vec<_>>());
    }

    #[test]
    fn smoke_dataset() {
        for d in Domain::ALL {
            let targets: Vec<_> = reference_targets(d)
                .into_iter()
                .map(|(b, n)| (b, n.min(2)))
                .collect();
            let cfg = DatasetConfig {
                oracle_rollouts: 60,
                ..DatasetConfig::default()
            };
            let ds = build_dataset(d, &targets, &cfg)
                .map_err(|e| alloc::format!("{d}: {e}"))
                .unwrap();
            let want: usize = targets.iter().map(|t| t.1).sum();
            assert_eq!(ds.specs.len(), want);
            for e in &ds.specs {
                assert!(e.oracle_score > 0.0);
                assert!(e.spec.sketch.respects(&e.exemplar, &e.spec.delta));
                assert_eq!(e.exemplar.attributes().structure.bucket(), e.bucket);
                assert!(e.spec.size >= e.exemplar.nblock() && e.spec.size <= MAX_SPEC_SIZE);
                assert!(e.spec.validate().is_ok());
            }
        }
    }
}
