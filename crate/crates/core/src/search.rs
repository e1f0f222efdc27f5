//! Bounded search for solution codes of a task.
//!
//! Two code universes matter when judging a task: every code over the task's
//! block store within its size bound, and the completions of a sketch. Each is
//! enumerated exhaustively when its size is at most `max_exhaustive`;
//! otherwise the search examines seed codes, their structural neighbours and
//! uniform random samples, and reports that it is not exhaustive.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codegen::{self, UniformCode};
use crate::dsl::{Action, Ast, Block, BlockKind, Cond, ConstructKind, Delta, Domain};
use crate::emulator::{self, shortest_basic_solution};
use crate::rng;
use crate::world::{Dir, Puzzle, Task, TaskSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SearchBounds {
    /// Largest universe enumerated in full.
    pub max_exhaustive: u64,
    /// Random samples drawn when a universe is too large.
    pub samples: usize,
    /// Rounds of neighbour expansion around found solutions.
    pub neighbour_rounds: usize,
    pub seed: u64,
}

impl Default for SearchBounds {
    fn default() -> Self {
        SearchBounds {
            max_exhaustive: 1_000_000,
            samples: 10_000,
            neighbour_rounds: 2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SearchResult {
    /// Distinct solutions found, in discovery order.
    pub solutions: Vec<Ast>,
    /// Whether the whole universe was examined.
    pub exhaustive: bool,
    pub examined: usize,
}

fn construct_of(kind: BlockKind) -> Option<ConstructKind> {
    match kind {
        BlockKind::Repeat => Some(ConstructKind::Repeat),
        BlockKind::RepeatUntil => Some(ConstructKind::RepeatUntil),
        BlockKind::While => Some(ConstructKind::While),
        BlockKind::If => Some(ConstructKind::If),
        BlockKind::IfElse => Some(ConstructKind::IfElse),
        _ => None,
    }
}

/// The grammar of irreducible codes over a block store.
///
/// A code is reducible when deleting or simplifying part of it yields a code
/// that solves every task it solves, with no more blocks and no larger depth or
/// construct count: an empty construct body, two adjacent inverse actions,
/// an `IfElse` with identical branches, or a turn at the very end of `Run`
/// (neither the goal test nor the Karel postgrid looks at the final heading).
/// Searching irreducible codes therefore finds a solution of every
/// `(depth, nconst)` class that has one.
#[derive(Clone, Debug)]
struct Grammar {
    domain: Domain,
    actions: Vec<Action>,
    conds: Vec<Cond>,
    constructs: Vec<ConstructKind>,
    /// Largest inner body size needed.
    max: usize,
    /// `bodies[n][l]`: inner bodies with `n` blocks whose last block is `l`
    /// (see [`Grammar::last`]).
    bodies: Vec<Vec<f64>>,
    /// `blocks[k]`: construct blocks of size `k`.
    blocks: Vec<f64>,
}

const ITERS: [u8; 9] = [2, 3, 4, 5, 6, 7, 8, 9, 10];

/// Last-block classes: empty body, construct, then one class per action.
const EMPTY: usize = 0;
const CONSTRUCT: usize = 1;

impl Grammar {
    fn new(domain: Domain, store: &BTreeSet<BlockKind>, size: u32) -> Grammar {
        let actions: Vec<Action> = domain
            .actions()
            .iter()
            .copied()
            .filter(|a| store.contains(&BlockKind::from(*a)))
            .collect();
        let constructs = store
            .iter()
            .filter_map(|&k| construct_of(k))
            .filter(|c| domain.constructs().contains(c))
            .collect();
        let max = size.saturating_sub(1) as usize;
        let classes = 2 + actions.len();
        let mut g = Grammar {
            domain,
            actions,
            conds: domain.conds().to_vec(),
            constructs,
            max,
            bodies: vec![vec![0.0; classes]; max + 1],
            blocks: vec![0.0; max + 1],
        };
        g.bodies[0][EMPTY] = 1.0;
        for n in 1..=max {
            g.blocks[n] = g.constructs.iter().map(|&c| g.construct_count(c, n)).sum();
            for (i, &a) in g.actions.iter().enumerate() {
                g.bodies[n][2 + i] = (0..classes)
                    .filter(|&l| g.may_follow(l, a))
                    .map(|l| g.bodies[n - 1][l])
                    .sum();
            }
            g.bodies[n][CONSTRUCT] = (1..=n).map(|k| g.blocks[k] * g.all(n - k)).sum();
        }
        g
    }

    fn last(&self, b: Option<&Block>) -> usize {
        match b {
            None => EMPTY,
            Some(Block::Action(a)) => {
                2 + self
                    .actions
                    .iter()
                    .position(|x| x == a)
                    .expect("action in store")
            }
            Some(_) => CONSTRUCT,
        }
    }

    fn may_follow(&self, l: usize, a: Action) -> bool {
        l < 2 || a.inverse() != Some(self.actions[l - 2])
    }

    fn all(&self, n: usize) -> f64 {
        self.bodies[n].iter().sum()
    }

    fn nonempty(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.all(n)
        }
    }

    /// Ordered `IfElse` branch pairs with `n` blocks in total, excluding two
    /// empty or two identical branches.
    fn branch_pairs(&self, n: usize) -> f64 {
        let mut t: f64 = (0..=n).map(|i| self.all(i) * self.all(n - i)).sum();
        if n.is_multiple_of(2) {
            t -= self.all(n / 2);
        }
        t
    }

    fn construct_count(&self, c: ConstructKind, k: usize) -> f64 {
        let ncond = self.conds.len() as f64;
        match c {
            ConstructKind::Repeat => ITERS.len() as f64 * self.nonempty(k - 1),
            ConstructKind::While | ConstructKind::If => ncond * self.nonempty(k - 1),
            ConstructKind::IfElse => ncond * self.branch_pairs(k - 1),
            ConstructKind::RepeatUntil => 0.0,
        }
    }

    fn has_until(&self) -> bool {
        self.constructs.contains(&ConstructKind::RepeatUntil)
    }

    /// Whether a top-level body may end with class `l`.
    fn top_end(&self, l: usize) -> bool {
        l == CONSTRUCT || (l >= 2 && !self.actions[l - 2].is_turn())
    }

    /// Top-level bodies with `n` blocks ending without `RepeatUntil`.
    fn plain(&self, n: usize) -> f64 {
        (0..self.bodies[n].len())
            .filter(|&l| self.top_end(l))
            .map(|l| self.bodies[n][l])
            .sum()
    }

    /// Top-level bodies with `n` blocks: plain ones, and a prefix of `n - 1 - m`
    /// blocks followed by `RepeatUntil` with an `m`-block body.
    fn top(&self, n: usize) -> f64 {
        let mut t = self.plain(n);
        if self.has_until() && n >= 2 {
            t += (1..n)
                .map(|m| self.all(n - 1 - m) * self.all(m))
                .sum::<f64>();
        }
        t
    }

    /// Number of codes with at most `max + 1` blocks (the root counts one).
    fn total(&self) -> f64 {
        (1..=self.max).map(|n| self.top(n)).sum::<f64>() + 0.0
    }

    fn pick<R: Rng + ?Sized>(weights: &[f64], r: &mut R) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = r.gen::<f64>() * total;
        for (i, &w) in weights.iter().enumerate() {
            if u < w {
                return i;
            }
            u -= w;
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }

    /// A uniform body with `n` blocks whose last class is drawn from `allowed`.
    fn sample_body<R: Rng + ?Sized>(
        &self,
        n: usize,
        allowed: &dyn Fn(usize) -> bool,
        r: &mut R,
    ) -> Vec<Block> {
        let mut rev = Vec::new();
        let mut left = n;
        let w: Vec<f64> = (0..self.bodies[n].len())
            .map(|l| if allowed(l) { self.bodies[n][l] } else { 0.0 })
            .collect();
        let mut l = Self::pick(&w, r);
        while left > 0 {
            if l == CONSTRUCT {
                let ks: Vec<f64> = (0..=left)
                    .map(|k| {
                        if k == 0 {
                            0.0
                        } else {
                            self.blocks[k] * self.all(left - k)
                        }
                    })
                    .collect();
                let k = Self::pick(&ks, r);
                rev.push(self.sample_block(k, r));
                left -= k;
                l = Self::pick(&self.bodies[left], r);
            } else {
                let a = self.actions[l - 2];
                rev.push(Block::Action(a));
                left -= 1;
                let w: Vec<f64> = (0..self.bodies[left].len())
                    .map(|p| {
                        if self.may_follow(p, a) {
                            self.bodies[left][p]
                        } else {
                            0.0
                        }
                    })
                    .collect();
                l = Self::pick(&w, r);
            }
        }
        rev.reverse();
        rev
    }

    fn any_body<R: Rng + ?Sized>(&self, n: usize, r: &mut R) -> Vec<Block> {
        self.sample_body(n, &|_| true, r)
    }

    fn sample_block<R: Rng + ?Sized>(&self, k: usize, r: &mut R) -> Block {
        let w: Vec<f64> = self
            .constructs
            .iter()
            .map(|&c| self.construct_count(c, k))
            .collect();
        let cond = self.conds[r.gen_range(0..self.conds.len())];
        match self.constructs[Self::pick(&w, r)] {
            ConstructKind::Repeat => Block::Repeat {
                times: ITERS[r.gen_range(0..ITERS.len())],
                body: self.any_body(k - 1, r),
            },
            ConstructKind::While => Block::While {
                cond,
                body: self.any_body(k - 1, r),
            },
            ConstructKind::If => Block::If {
                cond,
                then_body: self.any_body(k - 1, r),
            },
            ConstructKind::IfElse => {
                // uniform over ordered pairs, rejecting the excluded ones
                let splits: Vec<f64> = (0..k).map(|i| self.all(i) * self.all(k - 1 - i)).collect();
                loop {
                    let i = Self::pick(&splits, r);
                    let then_body = self.any_body(i, r);
                    let else_body = self.any_body(k - 1 - i, r);
                    if then_body != else_body {
                        return Block::IfElse {
                            cond,
                            then_body,
                            else_body,
                        };
                    }
                }
            }
            ConstructKind::RepeatUntil => unreachable!("RepeatUntil is only placed at top level"),
        }
    }

    /// A uniform random code.
    fn sample<R: Rng + ?Sized>(&self, r: &mut R) -> Option<Ast> {
        if self.total() <= 0.0 {
            return None;
        }
        let sizes: Vec<f64> = (0..=self.max)
            .map(|n| if n == 0 { 0.0 } else { self.top(n) })
            .collect();
        let n = Self::pick(&sizes, r);
        let body = if !self.has_until() || r.gen::<f64>() * self.top(n) < self.plain(n) {
            self.sample_body(n, &|l| self.top_end(l), r)
        } else {
            let ms: Vec<f64> = (0..n)
                .map(|m| {
                    if m == 0 {
                        0.0
                    } else {
                        self.all(n - 1 - m) * self.all(m)
                    }
                })
                .collect();
            let m = Self::pick(&ms, r);
            let mut b = self.any_body(n - 1 - m, r);
            b.push(Block::RepeatUntil {
                body: self.any_body(m, r),
            });
            b
        };
        Some(Ast::new(self.domain, body))
    }

    /// All inner bodies of each size up to `max_n`.
    fn all_bodies(&self, max_n: usize) -> Vec<Vec<Vec<Block>>> {
        let mut bodies: Vec<Vec<Vec<Block>>> = vec![vec![Vec::new()]];
        let mut blocks: Vec<Vec<Block>> = vec![Vec::new()];
        for n in 1..=max_n {
            let mut bl = Vec::new();
            for &c in &self.constructs {
                let inner = &bodies[n - 1];
                match c {
                    ConstructKind::Repeat => {
                        for &t in &ITERS {
                            bl.extend(inner.iter().filter(|b| !b.is_empty()).map(|b| {
                                Block::Repeat {
                                    times: t,
                                    body: b.clone(),
                                }
                            }));
                        }
                    }
                    ConstructKind::While => {
                        for &cond in &self.conds {
                            bl.extend(inner.iter().filter(|b| !b.is_empty()).map(|b| {
                                Block::While {
                                    cond,
                                    body: b.clone(),
                                }
                            }));
                        }
                    }
                    ConstructKind::If => {
                        for &cond in &self.conds {
                            bl.extend(inner.iter().filter(|b| !b.is_empty()).map(|b| Block::If {
                                cond,
                                then_body: b.clone(),
                            }));
                        }
                    }
                    ConstructKind::IfElse => {
                        for &cond in &self.conds {
                            for i in 0..n {
                                for t in &bodies[i] {
                                    for e in &bodies[n - 1 - i] {
                                        if t != e {
                                            bl.push(Block::IfElse {
                                                cond,
                                                then_body: t.clone(),
                                                else_body: e.clone(),
                                            });
                                        }
                                    }
                                }
                            }
                        }
                    }
                    ConstructKind::RepeatUntil => {}
                }
            }
            blocks.push(bl);
            let mut bs = Vec::new();
            for prev in &bodies[n - 1] {
                let l = self.last(prev.last());
                for &a in &self.actions {
                    if self.may_follow(l, a) {
                        let mut v = prev.clone();
                        v.push(Block::Action(a));
                        bs.push(v);
                    }
                }
            }
            for k in 1..=n {
                for rest in &bodies[n - k] {
                    for b in &blocks[k] {
                        let mut v = rest.clone();
                        v.push(b.clone());
                        bs.push(v);
                    }
                }
            }
            bodies.push(bs);
        }
        bodies
    }

    /// Visits every code; stops early when `visit` returns `false`.
    fn for_each(&self, visit: &mut dyn FnMut(Ast) -> bool) {
        let bodies = self.all_bodies(self.max);
        for n in 1..=self.max {
            for b in &bodies[n] {
                if self.top_end(self.last(b.last())) && !visit(Ast::new(self.domain, b.clone())) {
                    return;
                }
            }
            if self.has_until() {
                for m in 1..n {
                    for pre in &bodies[n - 1 - m] {
                        for inner in &bodies[m] {
                            let mut b = pre.clone();
                            b.push(Block::RepeatUntil {
                                body: inner.clone(),
                            });
                            if !visit(Ast::new(self.domain, b)) {
                                return;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Number of irreducible codes over `store` with at most `size` blocks.
pub fn count_codes(domain: Domain, store: &BTreeSet<BlockKind>, size: u32) -> f64 {
    Grammar::new(domain, store, size).total()
}

/// Upper bound on the number of completions of a spec's sketch.
pub fn count_completions(spec: &TaskSpec) -> f64 {
    let sketch = &spec.sketch;
    let budget = spec
        .size
        .saturating_sub(sketch.min_nblock() - u32::from(sketch.run_needs_action()))
        as usize;
    let mut holes = 0usize;
    let mut slots = 1.0f64;
    let ncond = spec.delta.conds.len() as f64;
    let niter = spec.delta.iters.len() as f64;
    fn walk(
        body: &[crate::dsl::SketchItem],
        holes: &mut usize,
        slots: &mut f64,
        ncond: f64,
        niter: f64,
    ) {
        use crate::dsl::{SketchConstruct as C, SketchItem as I, Slot};
        for item in body {
            match item {
                I::Hole => *holes += 1,
                I::Action(_) => {}
                I::Construct(c) => {
                    match c {
                        C::Repeat {
                            times: Slot::Hole, ..
                        } => *slots *= niter,
                        C::While {
                            cond: Slot::Hole, ..
                        }
                        | C::If {
                            cond: Slot::Hole, ..
                        }
                        | C::IfElse {
                            cond: Slot::Hole, ..
                        } => *slots *= ncond,
                        _ => {}
                    }
                    for b in c.bodies() {
                        walk(b, holes, slots, ncond, niter);
                    }
                }
            }
        }
    }
    walk(&sketch.body, &mut holes, &mut slots, ncond, niter);
    let a = spec.delta.actions.len() as f64;
    let mut fills = 0.0;
    for k in 0..=budget {
        // compositions of k actions into `holes` ordered holes
        fills += binomial(k + holes.max(1) - 1, holes.max(1) - 1) * libm::pow(a, k as f64);
    }
    slots * fills
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Structural neighbours of a code: single deletions and unwraps, condition and
/// iterator swaps, single action replacements and insertions.
pub fn neighbours(code: &Ast, actions: &[Action], conds: &[Cond]) -> Vec<Ast> {
    let mut out = code.single_deletion_mutants();
    let total = code.node_count();
    for target in 1..total {
        let mut bodies = Vec::new();
        edit_at(&code.body, target, &mut 0, actions, conds, &mut bodies);
        out.extend(bodies.into_iter().map(|b| Ast::new(code.domain, b)));
    }
    // insertions at the front of every body
    let mut ins = Vec::new();
    insert_everywhere(&code.body, actions, &mut ins);
    out.extend(ins.into_iter().map(|b| Ast::new(code.domain, b)));
    out
}

fn edit_at(
    body: &[Block],
    target: usize,
    id: &mut usize,
    actions: &[Action],
    conds: &[Cond],
    out: &mut Vec<Vec<Block>>,
) {
    for (i, b) in body.iter().enumerate() {
        *id += 1;
        if *id == target {
            let mut replacements: Vec<Block> = Vec::new();
            match b {
                Block::Action(a) => replacements.extend(
                    actions
                        .iter()
                        .filter(|x| *x != a)
                        .map(|&x| Block::Action(x)),
                ),
                Block::Repeat { times, body } => {
                    replacements.extend(ITERS.iter().filter(|t| *t != times).map(|&t| {
                        Block::Repeat {
                            times: t,
                            body: body.clone(),
                        }
                    }))
                }
                Block::While { cond, body } => {
                    replacements.extend(conds.iter().filter(|c| *c != cond).map(|&c| {
                        Block::While {
                            cond: c,
                            body: body.clone(),
                        }
                    }))
                }
                Block::If { cond, then_body } => {
                    replacements.extend(conds.iter().filter(|c| *c != cond).map(|&c| Block::If {
                        cond: c,
                        then_body: then_body.clone(),
                    }))
                }
                Block::IfElse {
                    cond,
                    then_body,
                    else_body,
                } => {
                    replacements.extend(conds.iter().filter(|c| *c != cond).map(|&c| {
                        Block::IfElse {
                            cond: c,
                            then_body: then_body.clone(),
                            else_body: else_body.clone(),
                        }
                    }));
                    replacements.push(Block::If {
                        cond: *cond,
                        then_body: then_body.clone(),
                    });
                }
                Block::RepeatUntil { .. } => {}
            }
            for r in replacements {
                let mut v = body.to_vec();
                v[i] = r;
                out.push(v);
            }
            return;
        }
        let before = *id;
        let mut inner_out = Vec::new();
        match b {
            Block::IfElse {
                cond,
                then_body,
                else_body,
            } => {
                edit_at(then_body, target, id, actions, conds, &mut inner_out);
                for nb in inner_out.drain(..) {
                    let mut v = body.to_vec();
                    v[i] = Block::IfElse {
                        cond: *cond,
                        then_body: nb,
                        else_body: else_body.clone(),
                    };
                    out.push(v);
                }
                edit_at(else_body, target, id, actions, conds, &mut inner_out);
                for nb in inner_out.drain(..) {
                    let mut v = body.to_vec();
                    v[i] = Block::IfElse {
                        cond: *cond,
                        then_body: then_body.clone(),
                        else_body: nb,
                    };
                    out.push(v);
                }
            }
            _ => {
                if let Some(inner) = b.bodies().next() {
                    edit_at(inner, target, id, actions, conds, &mut inner_out);
                    for nb in inner_out.drain(..) {
                        let mut v = body.to_vec();
                        v[i] = with_body(b, nb);
                        out.push(v);
                    }
                }
            }
        }
        if *id >= target && before < target {
            return;
        }
    }
}

fn with_body(b: &Block, body: Vec<Block>) -> Block {
    match b {
        Block::Repeat { times, .. } => Block::Repeat {
            times: *times,
            body,
        },
        Block::RepeatUntil { .. } => Block::RepeatUntil { body },
        Block::While { cond, .. } => Block::While { cond: *cond, body },
        Block::If { cond, .. } => Block::If {
            cond: *cond,
            then_body: body,
        },
        other => other.clone(),
    }
}

fn insert_everywhere(body: &[Block], actions: &[Action], out: &mut Vec<Vec<Block>>) {
    for pos in 0..=body.len() {
        for &a in actions {
            let mut v = body.to_vec();
            v.insert(pos, Block::Action(a));
            out.push(v);
        }
    }
    for (i, b) in body.iter().enumerate() {
        let mut inner_out = Vec::new();
        match b {
            Block::IfElse {
                cond,
                then_body,
                else_body,
            } => {
                insert_everywhere(then_body, actions, &mut inner_out);
                for nb in inner_out.drain(..) {
                    let mut v = body.to_vec();
                    v[i] = Block::IfElse {
                        cond: *cond,
                        then_body: nb,
                        else_body: else_body.clone(),
                    };
                    out.push(v);
                }
                insert_everywhere(else_body, actions, &mut inner_out);
                for nb in inner_out.drain(..) {
                    let mut v = body.to_vec();
                    v[i] = Block::IfElse {
                        cond: *cond,
                        then_body: then_body.clone(),
                        else_body: nb,
                    };
                    out.push(v);
                }
            }
            _ => {
                if let Some(inner) = b.bodies().next() {
                    insert_everywhere(inner, actions, &mut inner_out);
                    for nb in inner_out.drain(..) {
                        let mut v = body.to_vec();
                        v[i] = with_body(b, nb);
                        out.push(v);
                    }
                }
            }
        }
    }
}

/// Collects distinct solutions while tracking how many candidates were examined.
struct Collector<'a> {
    task: &'a Task,
    accept: &'a dyn Fn(&Ast) -> bool,
    seen: BTreeSet<alloc::string::String>,
    solutions: Vec<Ast>,
    examined: usize,
}

impl Collector<'_> {
    fn offer(&mut self, code: Ast) -> bool {
        if code.validate().is_err() || !(self.accept)(&code) {
            return false;
        }
        let key = code.to_compact();
        if !self.seen.insert(key) {
            return false;
        }
        self.examined += 1;
        if emulator::solves(&code, self.task) {
            self.solutions.push(code);
            return true;
        }
        false
    }

    /// Expands neighbours of found solutions for a few rounds.
    fn expand(&mut self, rounds: usize, actions: &[Action], conds: &[Cond]) {
        let mut frontier: Vec<Ast> = self.solutions.clone();
        for _ in 0..rounds {
            let mut next = Vec::new();
            for s in &frontier {
                for n in neighbours(s, actions, conds) {
                    if self.offer(n.clone()) {
                        next.push(n);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
    }
}

fn seeds_for(task: &Task, seeds: &[Ast]) -> Vec<Ast> {
    let mut out: Vec<Ast> = seeds.to_vec();
    if task.size >= 2 {
        if let Ok(Some(basic)) = shortest_basic_solution(task, task.size as usize - 1) {
            out.push(basic);
        }
    }
    out
}

/// Whether no code at all can solve `task`: the goal (or a cell whose Karel
/// postgrid differs from the pregrid) lies outside the avatar's wall-free
/// component. Every action only ever touches the avatar's cell.
pub fn provably_unsolvable(task: &Task) -> bool {
    let start = task.puzzle.start();
    let Some(avatar) = start.avatar else {
        return true;
    };
    let mut seen = vec![false; start.rows * start.cols];
    let mut queue = vec![avatar.cell()];
    seen[avatar.row * start.cols + avatar.col] = true;
    while let Some((r, c)) = queue.pop() {
        for d in Dir::ALL {
            if let Some((nr, nc)) = start.neighbor(r, c, d) {
                let i = nr * start.cols + nc;
                if !seen[i] && start.get(nr, nc).is_free() {
                    seen[i] = true;
                    queue.push((nr, nc));
                }
            }
        }
    }
    match &task.puzzle {
        Puzzle::Maze(g) => g.goal.is_none_or(|(r, c)| !seen[r * g.cols + c]),
        Puzzle::Karel { pre, post } => {
            !pre.same_walls(post)
                || pre
                    .cells
                    .iter()
                    .zip(&post.cells)
                    .zip(&seen)
                    .any(|((a, b), &s)| a != b && !s)
        }
    }
}

/// Solutions of `task` over its whole block store.
pub fn solutions(task: &Task, seeds: &[Ast], bounds: &SearchBounds) -> SearchResult {
    if provably_unsolvable(task) {
        return SearchResult {
            solutions: Vec::new(),
            exhaustive: true,
            examined: 0,
        };
    }
    let domain = task.domain();
    let g = Grammar::new(domain, &task.store, task.size);
    let accept = |c: &Ast| c.nblock() <= task.size && c.attributes().blocks.is_subset(&task.store);
    let mut col = Collector {
        task,
        accept: &accept,
        seen: BTreeSet::new(),
        solutions: Vec::new(),
        examined: 0,
    };
    let total = g.total();
    if total <= bounds.max_exhaustive as f64 {
        g.for_each(&mut |c| {
            col.offer(c);
            true
        });
        return SearchResult {
            solutions: col.solutions,
            exhaustive: true,
            examined: col.examined,
        };
    }
    for s in seeds_for(task, seeds) {
        col.offer(s);
    }
    let mut r = rng::stream(bounds.seed, 0x5ea, 1);
    for _ in 0..bounds.samples {
        if let Some(c) = g.sample(&mut r) {
            col.offer(c);
        }
    }
    col.expand(bounds.neighbour_rounds, &g.actions, &g.conds);
    SearchResult {
        solutions: col.solutions,
        exhaustive: false,
        examined: col.examined,
    }
}

fn sketch_constructs(nodes: &[crate::dsl::StructNode]) -> BTreeSet<BlockKind> {
    let mut out = BTreeSet::new();
    for n in nodes {
        out.insert(BlockKind::from(n.kind));
        out.extend(sketch_constructs(&n.body));
        out.extend(sketch_constructs(&n.else_body));
    }
    out
}

/// The spec restricted to fills that a solution of `task` may use.
fn restricted(spec: &TaskSpec, task: &Task) -> TaskSpec {
    let mut s = spec.clone();
    s.size = task.size;
    s.delta = Delta {
        actions: spec
            .delta
            .actions
            .iter()
            .copied()
            .filter(|a| task.store.contains(&BlockKind::from(*a)))
            .collect(),
        conds: spec.delta.conds.clone(),
        iters: spec.delta.iters.clone(),
    };
    s
}

/// Solutions of `task` that complete the spec's sketch under its delta.
pub fn sketch_solutions(
    spec: &TaskSpec,
    task: &Task,
    seeds: &[Ast],
    bounds: &SearchBounds,
) -> SearchResult {
    let s = restricted(spec, task);
    let accept = |c: &Ast| {
        c.nblock() <= task.size
            && c.attributes().blocks.is_subset(&task.store)
            && s.sketch.respects(c, &s.delta)
    };
    let mut col = Collector {
        task,
        accept: &accept,
        seen: BTreeSet::new(),
        solutions: Vec::new(),
        examined: 0,
    };
    if provably_unsolvable(task)
        || !sketch_constructs(&s.sketch.structure().body).is_subset(&task.store)
    {
        // no code solves the task, or a required construct is missing from the store
        return SearchResult {
            solutions: Vec::new(),
            exhaustive: true,
            examined: 0,
        };
    }
    if s.size < s.sketch.min_nblock() {
        return SearchResult {
            solutions: Vec::new(),
            exhaustive: true,
            examined: 0,
        };
    }
    if count_completions(&s) <= bounds.max_exhaustive as f64 {
        let res = codegen::for_each_code(&s, codegen::ENUM_NODE_CAP, &mut |c| {
            col.offer(c);
            true
        });
        if res.is_ok() {
            return SearchResult {
                solutions: col.solutions,
                exhaustive: true,
                examined: col.examined,
            };
        }
    }
    for c in seeds {
        col.offer(c.clone());
    }
    let mut r = rng::stream(bounds.seed, 0x5ea, 2);
    for _ in 0..bounds.samples {
        if let Ok(g) = codegen::generate_code(&s, &mut UniformCode, &mut r) {
            col.offer(g.code);
        }
    }
    let actions: Vec<Action> = s.delta.actions.iter().copied().collect();
    let conds: Vec<Cond> = s.delta.conds.iter().copied().collect();
    col.expand(bounds.neighbour_rounds, &actions, &conds);
    SearchResult {
        solutions: col.solutions,
        exhaustive: false,
        examined: col.examined,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::Sketch;
    use crate::world::Grid;

    fn maze(text: &str, store: &[BlockKind], size: u32) -> Task {
        Task {
            puzzle: Puzzle::Maze(Grid::parse(text).unwrap()),
            store: store.iter().copied().collect(),
            size,
        }
    }

    #[test]
    fn counts_match_enumeration() {
        use BlockKind::*;
        for (store, size) in [
            (vec![Move, TurnLeft, TurnRight], 4u32),
            (vec![Move, TurnLeft, RepeatUntil, IfElse], 5),
            (vec![Move, TurnRight, Repeat, If], 4),
        ] {
            let store: BTreeSet<BlockKind> = store.into_iter().collect();
            let g = Grammar::new(Domain::HocMaze, &store, size);
            let mut n = 0usize;
            let mut keys = BTreeSet::new();
            g.for_each(&mut |c| {
                assert!(c.validate().is_ok(), "{}", c.to_compact());
                assert!(c.nblock() <= size);
                keys.insert(c.to_compact());
                n += 1;
                true
            });
            assert_eq!(n, keys.len());
            assert_eq!(n as f64, g.total());
        }
    }

    #[test]
    fn basic_counts() {
        use BlockKind::*;
        let store: BTreeSet<BlockKind> = [Move, TurnLeft, TurnRight].into_iter().collect();
        // action sequences without adjacent inverse turns that end with a move
        let mut want = 0.0;
        let mut seqs = vec![vec![]];
        for _ in 0..3 {
            let mut next = Vec::new();
            for s in &seqs {
                for a in [Action::Move, Action::TurnLeft, Action::TurnRight] {
                    let mut v: Vec<Action> = s.clone();
                    if v.last().and_then(|l: &Action| l.inverse()) == Some(a) {
                        continue;
                    }
                    v.push(a);
                    if a == Action::Move {
                        want += 1.0;
                    }
                    next.push(v);
                }
            }
            seqs = next;
        }
        assert_eq!(count_codes(Domain::HocMaze, &store, 4), want);
    }

    #[test]
    fn samples_are_valid() {
        use BlockKind::*;
        let store: BTreeSet<BlockKind> = [Move, TurnLeft, RepeatUntil, IfElse, Repeat]
            .into_iter()
            .collect();
        let g = Grammar::new(Domain::HocMaze, &store, 7);
        let mut r = rng::seeded(3);
        for _ in 0..500 {
            let c = g.sample(&mut r).unwrap();
            assert!(c.validate().is_ok());
            assert!(c.nblock() <= 7);
        }
    }

    #[test]
    fn finds_corridor_solutions() {
        use BlockKind::*;
        let t = maze(">...x\n", &[Move, TurnLeft, TurnRight, RepeatUntil], 5);
        let res = solutions(&t, &[], &SearchBounds::default());
        assert!(res.exhaustive);
        let texts: Vec<_> = res.solutions.iter().map(|c| c.to_compact()).collect();
        assert!(texts.contains(&"def Run(){move; move; move; move}".into()));
        assert!(texts.contains(&"def Run(){RepeatUntil(goal){move}}".into()));
        let spec = TaskSpec::new(
            Sketch::parse("def Run(){a; RepeatUntil(goal){a}}", Domain::HocMaze).unwrap(),
            5,
        );
        let res = sketch_solutions(&spec, &t, &[], &SearchBounds::default());
        assert!(res.exhaustive);
        assert!(res
            .solutions
            .iter()
            .all(|c| spec.sketch.respects(c, &spec.delta)));
        assert!(res
            .solutions
            .iter()
            .any(|c| c.to_compact() == "def Run(){RepeatUntil(goal){move}}"));
    }

    #[test]
    fn completion_count_bounds_enumeration() {
        let spec = TaskSpec::new(
            Sketch::parse(
                "def Run(){a; RepeatUntil(goal){a; If(b){a} Else{a}; a}}",
                Domain::HocMaze,
            )
            .unwrap(),
            7,
        );
        let n = codegen::enumerate_codes(&spec, usize::MAX).unwrap().len() as f64;
        assert!(n <= count_completions(&spec));
    }

    #[test]
    fn walled_off_goal_is_certified_unsolvable() {
        use BlockKind::*;
        let t = maze(">.#x\n", &[Move, TurnLeft, RepeatUntil], 5);
        assert!(provably_unsolvable(&t));
        let res = solutions(&t, &[], &SearchBounds::default());
        assert!(res.exhaustive && res.solutions.is_empty());
        assert!(!provably_unsolvable(&maze(">..x\n", &[Move], 5)));
    }

    #[test]
    fn neighbours_include_unwraps_and_swaps() {
        let c = Ast::parse(
            "def Run(){While(pathAhead){If(markerPresent){pickMarker}; move}}",
            Domain::Karel,
        )
        .unwrap();
        let ns: Vec<_> = neighbours(&c, &Action::ALL, &Cond::ALL)
            .iter()
            .map(|a| a.to_compact())
            .collect();
        assert!(ns.contains(&"def Run(){While(pathAhead){pickMarker; move}}".into()));
        assert!(ns.contains(
            &"def Run(){While(no-pathAhead){If(markerPresent){pickMarker}; move}}".into()
        ));
        assert!(ns.contains(
            &"def Run(){While(pathAhead){If(markerPresent){pickMarker}; turnLeft}}".into()
        ));
        assert!(ns.contains(
            &"def Run(){While(pathAhead){If(markerPresent){pickMarker}; move}; move}".into()
        ));
    }
}
