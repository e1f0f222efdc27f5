//! Sketch completion by sequential token decisions.
//!
//! The sketch is walked depth-first; a construct's open condition/iterator slot
//! is decided before its bodies, and every action-sequence hole is filled one
//! token at a time until `End` is chosen. Illegal tokens are masked: tokens
//! outside the allowed fill sets, and actions that would leave no room for the
//! smallest completion within the size bound. Masking alone keeps every
//! generation feasible, so nothing ever backtracks.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{Action, Ast, Block, Cond, Sketch, SketchConstruct, SketchItem, Slot, ITER_MIN};
use crate::math;
use crate::world::TaskSpec;

/// Shared token dictionary: 5 actions, `End`, 6 conditions, iterators 2..=10.
pub const NTOKENS: usize = 21;
pub const END: usize = 5;
const COND0: usize = 6;
const ITER0: usize = 12;

pub fn action_token(a: Action) -> usize {
    Action::ALL.iter().position(|&x| x == a).unwrap()
}

pub fn cond_token(c: Cond) -> usize {
    COND0 + Cond::ALL.iter().position(|&x| x == c).unwrap()
}

pub fn iter_token(n: u8) -> usize {
    ITER0 + (n - ITER_MIN) as usize
}

pub fn token_action(t: usize) -> Option<Action> {
    Action::ALL.get(t).copied()
}

pub fn token_cond(t: usize) -> Option<Cond> {
    t.checked_sub(COND0).and_then(|i| {
        if t < ITER0 {
            Cond::ALL.get(i).copied()
        } else {
            None
        }
    })
}

pub fn token_iter(t: usize) -> Option<u8> {
    (ITER0..NTOKENS)
        .contains(&t)
        .then(|| (t - ITER0) as u8 + ITER_MIN)
}

pub fn token_name(t: usize) -> alloc::string::String {
    use alloc::string::ToString;
    if let Some(a) = token_action(t) {
        a.name().to_string()
    } else if t == END {
        "End".to_string()
    } else if let Some(c) = token_cond(t) {
        c.name().to_string()
    } else {
        alloc::format!("{}", token_iter(t).unwrap_or(0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecisionKind {
    /// Next action of a hole, or `End`.
    NextToken,
    BoolChoice,
    IterChoice,
}

/// Where in the sketch a decision happens.
pub const NCONTEXTS: usize = 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Context {
    RunBody,
    RepeatBody,
    RepeatUntilBody,
    WhileBody,
    IfBody,
    IfElseThen,
    IfElseElse,
    RepeatIter,
    WhileCond,
    IfCond,
    IfElseCond,
}

impl Context {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub kind: DecisionKind,
    pub context: Context,
    /// Blocks still available beyond the smallest completion.
    pub budget: u32,
    /// Actions already placed in the current hole.
    pub hole_len: u32,
}

pub type Mask = [bool; NTOKENS];

/// Guidance for sketch completion.
pub trait CodePolicy {
    /// Called once before each generation.
    fn reset(&mut self);
    /// Unnormalized scores over the token dictionary.
    fn logits(&mut self, point: &DecisionPoint) -> [f64; NTOKENS];
    /// Informs the policy of the accepted token.
    fn observe(&mut self, point: &DecisionPoint, token: usize);
}

/// Equal preference for every legal token.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformCode;

impl CodePolicy for UniformCode {
    fn reset(&mut self) {}

    fn logits(&mut self, _: &DecisionPoint) -> [f64; NTOKENS] {
        [0.0; NTOKENS]
    }

    fn observe(&mut self, _: &DecisionPoint, _: usize) {}
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodegenError {
    #[error("no legal token at a decision point")]
    DeadEnd,
    #[error("enumeration exceeded {0} states")]
    BudgetExceeded(usize),
    #[error("exemplar code does not complete the sketch")]
    ExemplarMismatch,
    #[error("invalid spec: {0}")]
    InvalidSpec(alloc::string::String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Step {
    Hole {
        context: Context,
        top_level: bool,
        last_top: bool,
        after_until: bool,
    },
    Slot {
        context: Context,
        iter: bool,
    },
}

/// Decision layout of a spec's sketch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plan {
    steps: Vec<Step>,
    fixed_blocks: u32,
    needs_run_action: bool,
    size: u32,
    actions: Vec<Action>,
    conds: Vec<Cond>,
    iters: Vec<u8>,
    sketch: Sketch,
}

impl Plan {
    pub fn new(spec: &TaskSpec) -> Plan {
        let sketch = &spec.sketch;
        let mut steps = Vec::new();
        fn walk(body: &[SketchItem], ctx: Context, top: bool, steps: &mut Vec<Step>) {
            let mut seen_until = false;
            let last = body.len().saturating_sub(1);
            for (i, item) in body.iter().enumerate() {
                match item {
                    SketchItem::Hole => steps.push(Step::Hole {
                        context: ctx,
                        top_level: top,
                        last_top: top && i == last,
                        after_until: top && seen_until,
                    }),
                    SketchItem::Action(_) => {}
                    SketchItem::Construct(c) => match c {
                        SketchConstruct::Repeat { times, body } => {
                            if *times == Slot::Hole {
                                steps.push(Step::Slot {
                                    context: Context::RepeatIter,
                                    iter: true,
                                });
                            }
                            walk(body, Context::RepeatBody, false, steps);
                        }
                        SketchConstruct::RepeatUntil { body } => {
                            walk(body, Context::RepeatUntilBody, false, steps);
                            seen_until = true;
                        }
                        SketchConstruct::While { cond, body } => {
                            if *cond == Slot::Hole {
                                steps.push(Step::Slot {
                                    context: Context::WhileCond,
                                    iter: false,
                                });
                            }
                            walk(body, Context::WhileBody, false, steps);
                        }
                        SketchConstruct::If { cond, then_body } => {
                            if *cond == Slot::Hole {
                                steps.push(Step::Slot {
                                    context: Context::IfCond,
                                    iter: false,
                                });
                            }
                            walk(then_body, Context::IfBody, false, steps);
                        }
                        SketchConstruct::IfElse {
                            cond,
                            then_body,
                            else_body,
                        } => {
                            if *cond == Slot::Hole {
                                steps.push(Step::Slot {
                                    context: Context::IfElseCond,
                                    iter: false,
                                });
                            }
                            walk(then_body, Context::IfElseThen, false, steps);
                            walk(else_body, Context::IfElseElse, false, steps);
                        }
                    },
                }
            }
        }
        walk(&sketch.body, Context::RunBody, true, &mut steps);
        let needs_run_action = sketch.run_needs_action();
        let domain = spec.domain;
        Plan {
            steps,
            fixed_blocks: sketch.min_nblock() - u32::from(needs_run_action),
            needs_run_action,
            size: spec.size,
            actions: domain
                .actions()
                .iter()
                .copied()
                .filter(|a| spec.delta.actions.contains(a))
                .collect(),
            conds: domain
                .conds()
                .iter()
                .copied()
                .filter(|c| spec.delta.conds.contains(c))
                .collect(),
            iters: spec
                .delta
                .iters
                .iter()
                .copied()
                .filter(|i| (2..=10).contains(i))
                .collect(),
            sketch: sketch.clone(),
        }
    }

    pub fn sketch(&self) -> &Sketch {
        &self.sketch
    }
}

/// A partially completed sketch; clone it to branch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodegenState {
    step: usize,
    used: u32,
    run_filled: bool,
    current: Vec<Action>,
    holes: Vec<Vec<Action>>,
    slots: Vec<usize>,
}

impl CodegenState {
    pub fn new() -> CodegenState {
        CodegenState {
            step: 0,
            used: 0,
            run_filled: false,
            current: Vec::new(),
            holes: Vec::new(),
            slots: Vec::new(),
        }
    }

    pub fn is_done(&self, plan: &Plan) -> bool {
        self.step >= plan.steps.len()
    }

    fn reserve(&self, plan: &Plan) -> u32 {
        u32::from(plan.needs_run_action && !self.run_filled)
    }

    /// The pending decision and its legal tokens, or `None` when complete.
    pub fn point(&self, plan: &Plan) -> Option<(DecisionPoint, Mask)> {
        let step = *plan.steps.get(self.step)?;
        let base = plan.fixed_blocks + self.used;
        let reserve = self.reserve(plan);
        let budget = plan.size.saturating_sub(base + reserve);
        let mut mask = [false; NTOKENS];
        let point = match step {
            Step::Hole {
                context,
                top_level,
                last_top,
                after_until,
            } => {
                if !after_until {
                    let reserve_after = if top_level { 0 } else { reserve };
                    if base + 1 + reserve_after <= plan.size {
                        for &a in &plan.actions {
                            mask[action_token(a)] = true;
                        }
                    }
                }
                mask[END] = !(last_top && reserve > 0);
                DecisionPoint {
                    kind: DecisionKind::NextToken,
                    context,
                    budget,
                    hole_len: self.current.len() as u32,
                }
            }
            Step::Slot { context, iter } => {
                if iter {
                    for &n in &plan.iters {
                        mask[iter_token(n)] = true;
                    }
                } else {
                    for &c in &plan.conds {
                        mask[cond_token(c)] = true;
                    }
                }
                let kind = if iter {
                    DecisionKind::IterChoice
                } else {
                    DecisionKind::BoolChoice
                };
                DecisionPoint {
                    kind,
                    context,
                    budget,
                    hole_len: 0,
                }
            }
        };
        Some((point, mask))
    }

    /// Applies a token; the caller guarantees it is legal.
    pub fn apply(&mut self, plan: &Plan, token: usize) {
        match plan.steps[self.step] {
            Step::Hole { top_level, .. } => {
                if token == END {
                    self.holes.push(core::mem::take(&mut self.current));
                    self.step += 1;
                } else {
                    self.current
                        .push(token_action(token).expect("action token"));
                    self.used += 1;
                    if top_level {
                        self.run_filled = true;
                    }
                }
            }
            Step::Slot { .. } => {
                self.slots.push(token);
                self.step += 1;
            }
        }
    }

    /// Assembles the completed code.
    pub fn build(&self, plan: &Plan) -> Ast {
        let mut holes = self.holes.iter();
        let mut slots = self.slots.iter();
        fn conv<'a>(
            body: &[SketchItem],
            holes: &mut impl Iterator<Item = &'a Vec<Action>>,
            slots: &mut impl Iterator<Item = &'a usize>,
        ) -> Vec<Block> {
            let mut out = Vec::new();
            for item in body {
                match item {
                    SketchItem::Hole => {
                        out.extend(holes.next().unwrap().iter().map(|&a| Block::Action(a)))
                    }
                    SketchItem::Action(a) => out.push(Block::Action(*a)),
                    SketchItem::Construct(c) => {
                        let mut cond = |s: &Slot<Cond>| match s {
                            Slot::Fixed(c) => *c,
                            Slot::Hole => token_cond(*slots.next().unwrap()).unwrap(),
                        };
                        out.push(match c {
                            SketchConstruct::Repeat { times, body } => {
                                let times = match times {
                                    Slot::Fixed(t) => *t,
                                    Slot::Hole => token_iter(*slots.next().unwrap()).unwrap(),
                                };
                                Block::Repeat {
                                    times,
                                    body: conv(body, holes, slots),
                                }
                            }
                            SketchConstruct::RepeatUntil { body } => Block::RepeatUntil {
                                body: conv(body, holes, slots),
                            },
                            SketchConstruct::While { cond: s, body } => {
                                let cond = cond(s);
                                Block::While {
                                    cond,
                                    body: conv(body, holes, slots),
                                }
                            }
                            SketchConstruct::If { cond: s, then_body } => {
                                let cond = cond(s);
                                Block::If {
                                    cond,
                                    then_body: conv(then_body, holes, slots),
                                }
                            }
                            SketchConstruct::IfElse {
                                cond: s,
                                then_body,
                                else_body,
                            } => {
                                let cond = cond(s);
                                let then_body = conv(then_body, holes, slots);
                                let else_body = conv(else_body, holes, slots);
                                Block::IfElse {
                                    cond,
                                    then_body,
                                    else_body,
                                }
                            }
                        });
                    }
                }
            }
            out
        }
        Ast::new(
            plan.sketch.domain,
            conv(&plan.sketch.body, &mut holes, &mut slots),
        )
    }
}

impl Default for CodegenState {
    fn default() -> Self {
        Self::new()
    }
}

/// One recorded decision of a generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeDecision {
    pub point: DecisionPoint,
    #[serde(with = "mask_serde")]
    pub mask: Mask,
    pub token: usize,
}

mod mask_serde {
    use super::{Mask, NTOKENS};
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mask, s: S) -> Result<S::Ok, S::Error> {
        m.iter()
            .map(|&b| u8::from(b))
            .collect::<Vec<u8>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mask, D::Error> {
        let v: Vec<u8> = Vec::deserialize(d)?;
        let mut m = [false; NTOKENS];
        for (i, b) in v.into_iter().take(NTOKENS).enumerate() {
            m[i] = b != 0;
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    pub code: Ast,
    pub decisions: Vec<CodeDecision>,
}

fn check_spec(spec: &TaskSpec) -> Result<(), CodegenError> {
    spec.validate()
        .map_err(|e| CodegenError::InvalidSpec(alloc::format!("{e}")))
}

/// Samples one completion of the spec's sketch.
pub fn generate_code<R: Rng + ?Sized>(
    spec: &TaskSpec,
    policy: &mut dyn CodePolicy,
    rng: &mut R,
) -> Result<Generation, CodegenError> {
    check_spec(spec)?;
    let plan = Plan::new(spec);
    generate_with_plan(&plan, policy, rng)
}

pub fn generate_with_plan<R: Rng + ?Sized>(
    plan: &Plan,
    policy: &mut dyn CodePolicy,
    rng: &mut R,
) -> Result<Generation, CodegenError> {
    policy.reset();
    let mut state = CodegenState::new();
    let mut decisions = Vec::new();
    while let Some((point, mask)) = state.point(plan) {
        let logits = policy.logits(&point);
        let token = sample_masked(&logits, &mask, rng).ok_or(CodegenError::DeadEnd)?;
        policy.observe(&point, token);
        state.apply(plan, token);
        decisions.push(CodeDecision { point, mask, token });
    }
    Ok(Generation {
        code: state.build(plan),
        decisions,
    })
}

/// Samples from the masked softmax of `logits`; `None` if nothing is legal.
pub fn sample_masked<R: Rng + ?Sized>(logits: &[f64], mask: &[bool], rng: &mut R) -> Option<usize> {
    let probs = math::masked_softmax(logits, mask);
    if !mask.iter().any(|&m| m) {
        return None;
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    for (i, (&p, &m)) in probs.iter().zip(mask).enumerate() {
        if !m {
            continue;
        }
        acc += p;
        last = Some(i);
        if u < acc {
            return Some(i);
        }
    }
    last
}

/// The decision sequence that generates `exemplar`, for teacher forcing.
pub fn decisions_for(spec: &TaskSpec, exemplar: &Ast) -> Result<Vec<CodeDecision>, CodegenError> {
    let plan = Plan::new(spec);
    let tokens = fill_tokens(&spec.sketch, exemplar).ok_or(CodegenError::ExemplarMismatch)?;
    let mut state = CodegenState::new();
    let mut out = Vec::with_capacity(tokens.len());
    for token in tokens {
        let (point, mask) = state.point(&plan).ok_or(CodegenError::ExemplarMismatch)?;
        if !mask[token] {
            return Err(CodegenError::ExemplarMismatch);
        }
        state.apply(&plan, token);
        out.push(CodeDecision { point, mask, token });
    }
    if !state.is_done(&plan) || state.build(&plan) != *exemplar {
        return Err(CodegenError::ExemplarMismatch);
    }
    Ok(out)
}

/// Token sequence (in decision order) turning `sketch` into `code`.
fn fill_tokens(sketch: &Sketch, code: &Ast) -> Option<Vec<usize>> {
    if sketch.domain != code.domain {
        return None;
    }
    fn body(items: &[SketchItem], blocks: &[Block], out: &mut Vec<usize>) -> bool {
        match items.split_first() {
            None => blocks.is_empty(),
            Some((SketchItem::Hole, rest)) => {
                let mut k = 0;
                loop {
                    let mark = out.len();
                    out.extend(blocks[..k].iter().map(|b| match b {
                        Block::Action(a) => action_token(*a),
                        _ => unreachable!(),
                    }));
                    out.push(END);
                    if body(rest, &blocks[k..], out) {
                        return true;
                    }
                    out.truncate(mark);
                    match blocks.get(k) {
                        Some(Block::Action(_)) => k += 1,
                        _ => return false,
                    }
                }
            }
            Some((SketchItem::Action(a), rest)) => {
                matches!(blocks.first(), Some(Block::Action(b)) if a == b)
                    && body(rest, &blocks[1..], out)
            }
            Some((SketchItem::Construct(c), rest)) => {
                let Some(first) = blocks.first() else {
                    return false;
                };
                let mark = out.len();
                let cond_ok = |s: &Slot<Cond>, c: &Cond, out: &mut Vec<usize>| match s {
                    Slot::Fixed(f) => f == c,
                    Slot::Hole => {
                        out.push(cond_token(*c));
                        true
                    }
                };
                let ok = match (c, first) {
                    (
                        SketchConstruct::Repeat { times, body: sb },
                        Block::Repeat { times: t, body: b },
                    ) => {
                        (match times {
                            Slot::Fixed(f) => f == t,
                            Slot::Hole => {
                                out.push(iter_token(*t));
                                true
                            }
                        }) && body(sb, b, out)
                    }
                    (SketchConstruct::RepeatUntil { body: sb }, Block::RepeatUntil { body: b }) => {
                        body(sb, b, out)
                    }
                    (
                        SketchConstruct::While { cond, body: sb },
                        Block::While { cond: c2, body: b },
                    ) => cond_ok(cond, c2, out) && body(sb, b, out),
                    (
                        SketchConstruct::If { cond, then_body },
                        Block::If {
                            cond: c2,
                            then_body: b,
                        },
                    ) => cond_ok(cond, c2, out) && body(then_body, b, out),
                    (
                        SketchConstruct::IfElse {
                            cond,
                            then_body,
                            else_body,
                        },
                        Block::IfElse {
                            cond: c2,
                            then_body: b1,
                            else_body: b2,
                        },
                    ) => {
                        cond_ok(cond, c2, out)
                            && body(then_body, b1, out)
                            && body(else_body, b2, out)
                    }
                    _ => false,
                };
                if ok && body(rest, &blocks[1..], out) {
                    return true;
                }
                out.truncate(mark);
                false
            }
        }
    }
    let mut out = Vec::new();
    body(&sketch.body, &code.body, &mut out).then_some(out)
}

/// Internal state cap of [`enumerate_codes`].
pub const ENUM_NODE_CAP: usize = 10_000_000;

/// All completions in deterministic (token-index, depth-first) order, truncated
/// at `max_count`.
pub fn enumerate_codes(spec: &TaskSpec, max_count: usize) -> Result<Vec<Ast>, CodegenError> {
    let mut out = Vec::new();
    if max_count == 0 {
        return Ok(out);
    }
    check_spec(spec)?;
    let plan = Plan::new(spec);
    let mut visited = 0usize;
    let mut stack = vec![CodegenState::new()];
    while let Some(state) = stack.pop() {
        visited += 1;
        if visited > ENUM_NODE_CAP {
            return Err(CodegenError::BudgetExceeded(ENUM_NODE_CAP));
        }
        match state.point(&plan) {
            None => {
                out.push(state.build(&plan));
                if out.len() >= max_count {
                    break;
                }
            }
            Some((_, mask)) => {
                for t in (0..NTOKENS).rev().filter(|&t| mask[t]) {
                    let mut next = state.clone();
                    next.apply(&plan, t);
                    stack.push(next);
                }
            }
        }
    }
    Ok(out)
}

/// Visits every completion without materializing the list; stops early when
/// `visit` returns `false`. Returns the number of codes visited.
pub fn for_each_code(
    spec: &TaskSpec,
    node_cap: usize,
    visit: &mut dyn FnMut(Ast) -> bool,
) -> Result<usize, CodegenError> {
    check_spec(spec)?;
    let plan = Plan::new(spec);
    let mut visited = 0usize;
    let mut count = 0usize;
    let mut stack = vec![CodegenState::new()];
    while let Some(state) = stack.pop() {
        visited += 1;
        if visited > node_cap {
            return Err(CodegenError::BudgetExceeded(node_cap));
        }
        match state.point(&plan) {
            None => {
                count += 1;
                if !visit(state.build(&plan)) {
                    break;
                }
            }
            Some((_, mask)) => {
                for t in (0..NTOKENS).rev().filter(|&t| mask[t]) {
                    let mut next = state.clone();
                    next.apply(&plan, t);
                    stack.push(next);
                }
            }
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{sketch_of, Domain};
    use crate::rng;
    use alloc::collections::BTreeSet;
    use alloc::string::String;

    fn spec(text: &str, domain: Domain, size: u32) -> TaskSpec {
        TaskSpec::new(Sketch::parse(text, domain).unwrap(), size)
    }

    #[test]
    fn token_dictionary() {
        assert_eq!(token_name(0), "move");
        assert_eq!(token_name(END), "End");
        assert_eq!(
            token_name(cond_token(Cond::NoMarkerPresent)),
            "no-markerPresent"
        );
        assert_eq!(iter_token(10), NTOKENS - 1);
        for t in 0..NTOKENS {
            let kinds = usize::from(token_action(t).is_some())
                + usize::from(t == END)
                + usize::from(token_cond(t).is_some())
                + usize::from(token_iter(t).is_some());
            assert_eq!(kinds, 1, "token {t}");
        }
    }

    #[test]
    fn single_hole_enumeration() {
        let s = spec("def Run(){a}", Domain::HocMaze, 2);
        let codes: Vec<String> = enumerate_codes(&s, 100)
            .unwrap()
            .iter()
            .map(|c| c.to_compact())
            .collect();
        assert_eq!(
            codes,
            [
                "def Run(){move}",
                "def Run(){turnLeft}",
                "def Run(){turnRight}"
            ]
        );
        assert!(enumerate_codes(&s, 0).unwrap().is_empty());
    }

    #[test]
    fn zero_hole_sketch_is_its_own_completion() {
        let s = spec("def Run(){move; Repeat(3){turnLeft}}", Domain::HocMaze, 5);
        let g = generate_code(&s, &mut UniformCode, &mut rng::seeded(1)).unwrap();
        assert!(g.decisions.is_empty());
        assert_eq!(g.code.to_compact(), "def Run(){move; Repeat(3){turnLeft}}");
    }

    #[test]
    fn budget_exhausted_leaves_end_only() {
        let s = spec(
            "def Run(){a; RepeatUntil(goal){a; If(b){a} Else{a}; a}}",
            Domain::HocMaze,
            7,
        );
        let plan = Plan::new(&s);
        let mut st = CodegenState::new();
        // Fill until the budget runs out: 3 fixed blocks + 4 actions.
        for _ in 0..4 {
            st.apply(&plan, action_token(Action::Move));
        }
        let (p, mask) = st.point(&plan).unwrap();
        assert_eq!(p.budget, 0);
        assert_eq!(mask.iter().filter(|&&m| m).count(), 1);
        assert!(mask[END]);
    }

    #[test]
    fn else_body_with_budget_two() {
        let s = spec(
            "def Run(){a; RepeatUntil(goal){a; If(b){a} Else{a}; a}}",
            Domain::HocMaze,
            7,
        );
        let plan = Plan::new(&s);
        let mut st = CodegenState::new();
        for t in [
            END,
            END,
            cond_token(Cond::PathAhead),
            action_token(Action::Move),
            action_token(Action::Move),
            END,
        ] {
            st.apply(&plan, t);
        }
        let (p, mask) = st.point(&plan).unwrap();
        assert_eq!((p.context, p.budget), (Context::IfElseElse, 2));
        let legal: Vec<usize> = (0..NTOKENS).filter(|&t| mask[t]).collect();
        assert_eq!(legal, [0, 1, 2, END]);
    }

    #[test]
    fn run_body_needs_an_action() {
        let s = spec("def Run(){a}", Domain::Karel, 3);
        let plan = Plan::new(&s);
        let (_, mask) = CodegenState::new().point(&plan).unwrap();
        assert!(!mask[END]);
    }

    #[test]
    fn uniform_generation_is_valid() {
        let s = spec("def Run(){a; RepeatUntil(goal){a}}", Domain::HocMaze, 10);
        let mut r = rng::seeded(7);
        for _ in 0..1000 {
            let g = generate_code(&s, &mut UniformCode, &mut r).unwrap();
            assert!(g.code.validate().is_ok());
            assert!(g.code.nblock() <= 10);
            assert!(s.sketch.respects(&g.code, &s.delta));
            assert_eq!(g.code.structure(), s.sketch.structure());
        }
    }

    #[test]
    fn teacher_forcing_round_trip() {
        let code = Ast::parse(
            "def Run(){While(no-pathAhead){If(markerPresent){pickMarker}; turnLeft; move; turnRight; move}}",
            Domain::Karel,
        )
        .unwrap();
        let mask: BTreeSet<usize> = code.slot_ids().into_iter().collect();
        let sk = sketch_of(&code, &mask).unwrap();
        let s = TaskSpec::new(sk, 10);
        let ds = decisions_for(&s, &code).unwrap();
        let plan = Plan::new(&s);
        let mut st = CodegenState::new();
        for d in &ds {
            st.apply(&plan, d.token);
        }
        assert_eq!(st.build(&plan), code);
        let other = Ast::parse("def Run(){move}", Domain::Karel).unwrap();
        assert_eq!(
            decisions_for(&s, &other),
            Err(CodegenError::ExemplarMismatch)
        );
    }
}
