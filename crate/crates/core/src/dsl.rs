//! The two domain languages: tokens, ASTs, code attributes and sketches.
//!
//! Both languages share one block vocabulary. HoCMaze codes use
//! `move/turnLeft/turnRight`, `Repeat`, `If`, `IfElse` and at most one trailing
//! top-level `RepeatUntil(goal)`; Karel codes add the marker actions, `While` and
//! the negated/marker conditions, and have no `RepeatUntil`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "HoCMaze", alias = "hoc", alias = "hocmaze")]
    HocMaze,
    #[serde(rename = "Karel", alias = "karel")]
    Karel,
}

impl Domain {
    pub const ALL: [Domain; 2] = [Domain::HocMaze, Domain::Karel];

    pub fn name(self) -> &'static str {
        match self {
            Domain::HocMaze => "HoCMaze",
            Domain::Karel => "Karel",
        }
    }

    pub fn from_name(s: &str) -> Option<Domain> {
        match s {
            "HoCMaze" | "hoc" | "hocmaze" | "HoC" => Some(Domain::HocMaze),
            "Karel" | "karel" => Some(Domain::Karel),
            _ => None,
        }
    }

    pub fn actions(self) -> &'static [Action] {
        match self {
            Domain::HocMaze => &[Action::Move, Action::TurnLeft, Action::TurnRight],
            Domain::Karel => &Action::ALL,
        }
    }

    pub fn conds(self) -> &'static [Cond] {
        match self {
            Domain::HocMaze => &[Cond::PathAhead, Cond::PathLeft, Cond::PathRight],
            Domain::Karel => &Cond::ALL,
        }
    }

    pub fn constructs(self) -> &'static [ConstructKind] {
        match self {
            Domain::HocMaze => &[
                ConstructKind::Repeat,
                ConstructKind::RepeatUntil,
                ConstructKind::If,
                ConstructKind::IfElse,
            ],
            Domain::Karel => &[
                ConstructKind::Repeat,
                ConstructKind::While,
                ConstructKind::If,
                ConstructKind::IfElse,
            ],
        }
    }

    /// Every block kind a code of this domain may contain.
    pub fn block_kinds(self) -> BTreeSet<BlockKind> {
        let mut set: BTreeSet<BlockKind> =
            self.actions().iter().map(|&a| BlockKind::from(a)).collect();
        set.extend(self.constructs().iter().map(|&c| BlockKind::from(c)));
        set
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const ITER_MIN: u8 = 2;
pub const ITER_MAX: u8 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    #[serde(rename = "move")]
    Move,
    #[serde(rename = "turnLeft")]
    TurnLeft,
    #[serde(rename = "turnRight")]
    TurnRight,
    #[serde(rename = "putMarker")]
    PutMarker,
    #[serde(rename = "pickMarker")]
    PickMarker,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Move,
        Action::TurnLeft,
        Action::TurnRight,
        Action::PutMarker,
        Action::PickMarker,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Action::Move => "move",
            Action::TurnLeft => "turnLeft",
            Action::TurnRight => "turnRight",
            Action::PutMarker => "putMarker",
            Action::PickMarker => "pickMarker",
        }
    }

    pub fn from_name(s: &str) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn is_turn(self) -> bool {
        matches!(self, Action::TurnLeft | Action::TurnRight)
    }

    /// The action that undoes `self` when executed right after it.
    pub fn inverse(self) -> Option<Action> {
        match self {
            Action::TurnLeft => Some(Action::TurnRight),
            Action::TurnRight => Some(Action::TurnLeft),
            Action::PutMarker => Some(Action::PickMarker),
            Action::PickMarker => Some(Action::PutMarker),
            Action::Move => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cond {
    #[serde(rename = "pathAhead")]
    PathAhead,
    #[serde(rename = "pathLeft")]
    PathLeft,
    #[serde(rename = "pathRight")]
    PathRight,
    #[serde(rename = "no-pathAhead")]
    NoPathAhead,
    #[serde(rename = "markerPresent")]
    MarkerPresent,
    #[serde(rename = "no-markerPresent")]
    NoMarkerPresent,
}

impl Cond {
    pub const ALL: [Cond; 6] = [
        Cond::PathAhead,
        Cond::PathLeft,
        Cond::PathRight,
        Cond::NoPathAhead,
        Cond::MarkerPresent,
        Cond::NoMarkerPresent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Cond::PathAhead => "pathAhead",
            Cond::PathLeft => "pathLeft",
            Cond::PathRight => "pathRight",
            Cond::NoPathAhead => "no-pathAhead",
            Cond::MarkerPresent => "markerPresent",
            Cond::NoMarkerPresent => "no-markerPresent",
        }
    }

    pub fn from_name(s: &str) -> Option<Cond> {
        Cond::ALL.into_iter().find(|c| c.name() == s)
    }

    pub fn is_negated(self) -> bool {
        matches!(self, Cond::NoPathAhead | Cond::NoMarkerPresent)
    }

    pub fn is_marker(self) -> bool {
        matches!(self, Cond::MarkerPresent | Cond::NoMarkerPresent)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstructKind {
    Repeat,
    RepeatUntil,
    While,
    If,
    IfElse,
}

impl ConstructKind {
    pub fn name(self) -> &'static str {
        match self {
            ConstructKind::Repeat => "Repeat",
            ConstructKind::RepeatUntil => "RepeatUntil",
            ConstructKind::While => "While",
            ConstructKind::If => "If",
            ConstructKind::IfElse => "IfElse",
        }
    }

    pub fn is_loop(self) -> bool {
        matches!(
            self,
            ConstructKind::Repeat | ConstructKind::RepeatUntil | ConstructKind::While
        )
    }
}

/// A block type as it appears in a task's block store and in `C_blocks`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    #[serde(rename = "move")]
    Move,
    #[serde(rename = "turnLeft")]
    TurnLeft,
    #[serde(rename = "turnRight")]
    TurnRight,
    #[serde(rename = "putMarker")]
    PutMarker,
    #[serde(rename = "pickMarker")]
    PickMarker,
    Repeat,
    RepeatUntil,
    While,
    If,
    IfElse,
}

impl BlockKind {
    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Move => "move",
            BlockKind::TurnLeft => "turnLeft",
            BlockKind::TurnRight => "turnRight",
            BlockKind::PutMarker => "putMarker",
            BlockKind::PickMarker => "pickMarker",
            BlockKind::Repeat => "Repeat",
            BlockKind::RepeatUntil => "RepeatUntil",
            BlockKind::While => "While",
            BlockKind::If => "If",
            BlockKind::IfElse => "IfElse",
        }
    }
}

impl From<Action> for BlockKind {
    fn from(a: Action) -> Self {
        match a {
            Action::Move => BlockKind::Move,
            Action::TurnLeft => BlockKind::TurnLeft,
            Action::TurnRight => BlockKind::TurnRight,
            Action::PutMarker => BlockKind::PutMarker,
            Action::PickMarker => BlockKind::PickMarker,
        }
    }
}

impl From<ConstructKind> for BlockKind {
    fn from(c: ConstructKind) -> Self {
        match c {
            ConstructKind::Repeat => BlockKind::Repeat,
            ConstructKind::RepeatUntil => BlockKind::RepeatUntil,
            ConstructKind::While => BlockKind::While,
            ConstructKind::If => BlockKind::If,
            ConstructKind::IfElse => BlockKind::IfElse,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    Action(Action),
    Repeat {
        times: u8,
        body: Vec<Block>,
    },
    RepeatUntil {
        body: Vec<Block>,
    },
    While {
        cond: Cond,
        body: Vec<Block>,
    },
    If {
        cond: Cond,
        then_body: Vec<Block>,
    },
    IfElse {
        cond: Cond,
        then_body: Vec<Block>,
        else_body: Vec<Block>,
    },
}

impl Block {
    pub fn kind(&self) -> BlockKind {
        match self {
            Block::Action(a) => BlockKind::from(*a),
            Block::Repeat { .. } => BlockKind::Repeat,
            Block::RepeatUntil { .. } => BlockKind::RepeatUntil,
            Block::While { .. } => BlockKind::While,
            Block::If { .. } => BlockKind::If,
            Block::IfElse { .. } => BlockKind::IfElse,
        }
    }

    pub fn construct(&self) -> Option<ConstructKind> {
        match self {
            Block::Action(_) => None,
            Block::Repeat { .. } => Some(ConstructKind::Repeat),
            Block::RepeatUntil { .. } => Some(ConstructKind::RepeatUntil),
            Block::While { .. } => Some(ConstructKind::While),
            Block::If { .. } => Some(ConstructKind::If),
            Block::IfElse { .. } => Some(ConstructKind::IfElse),
        }
    }

    /// Number of blocks in this subtree, counting this block.
    pub fn size(&self) -> usize {
        1 + self
            .bodies()
            .map(|b| b.iter().map(Block::size).sum::<usize>())
            .sum::<usize>()
    }

    /// Child bodies in preorder order (then before else).
    pub fn bodies(&self) -> impl Iterator<Item = &Vec<Block>> {
        let (a, b): (Option<&Vec<Block>>, Option<&Vec<Block>>) = match self {
            Block::Action(_) => (None, None),
            Block::Repeat { body, .. }
            | Block::RepeatUntil { body }
            | Block::While { body, .. } => (Some(body), None),
            Block::If { then_body, .. } => (Some(then_body), None),
            Block::IfElse {
                then_body,
                else_body,
                ..
            } => (Some(then_body), Some(else_body)),
        };
        a.into_iter().chain(b)
    }

    fn bodies_mut(&mut self) -> Vec<&mut Vec<Block>> {
        match self {
            Block::Action(_) => vec![],
            Block::Repeat { body, .. }
            | Block::RepeatUntil { body }
            | Block::While { body, .. } => {
                vec![body]
            }
            Block::If { then_body, .. } => vec![then_body],
            Block::IfElse {
                then_body,
                else_body,
                ..
            } => vec![then_body, else_body],
        }
    }
}

/// A complete code: the implicit `Run` root and its body.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ast {
    pub domain: Domain,
    pub body: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("syntax error at {line}:{col}: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("`{token}` is not part of the {domain} language")]
    Domain { token: String, domain: Domain },
    #[error("invalid code: {0}")]
    Grammar(String),
    #[error("node {0} has no condition or iterator slot")]
    UnknownSlot(usize),
    #[error("sketch still has holes")]
    HasHoles,
}

/// Attributes of a code: block set, block count, construct skeleton, depth, construct count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeAttributes {
    pub blocks: BTreeSet<BlockKind>,
    pub nblock: u32,
    pub structure: Structure,
    pub depth: u32,
    pub nconst: u32,
}

/// Nesting skeleton of constructs under the `Run` root.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Structure {
    pub body: Vec<StructNode>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StructNode {
    pub kind: ConstructKind,
    pub body: Vec<StructNode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub else_body: Vec<StructNode>,
}

impl Structure {
    pub fn depth(&self) -> u32 {
        fn d(nodes: &[StructNode]) -> u32 {
            nodes
                .iter()
                .map(|n| 1 + d(&n.body).max(d(&n.else_body)))
                .max()
                .unwrap_or(0)
        }
        1 + d(&self.body)
    }

    pub fn nconst(&self) -> u32 {
        fn c(nodes: &[StructNode]) -> u32 {
            nodes.iter().map(|n| 1 + c(&n.body) + c(&n.else_body)).sum()
        }
        c(&self.body)
    }

    /// `(depth, nconst)` bucket key.
    pub fn bucket(&self) -> (u32, u32) {
        (self.depth(), self.nconst())
    }

    /// Parses `{Run{RepeatUntil{IfElse}}}`-style notation (outer braces optional).
    pub fn parse(text: &str) -> Result<Structure, DslError> {
        let toks = lex(text)?;
        let mut p = Parser {
            toks: &toks,
            pos: 0,
        };
        let outer = p.eat(&Tok::LBrace);
        p.expect_ident("Run")?;
        let body = if p.peek_is(&Tok::LBrace) {
            p.struct_group()?
        } else {
            Vec::new()
        };
        if outer {
            p.expect(&Tok::RBrace, "`}`")?;
        }
        p.expect_end()?;
        Ok(Structure { body })
    }

    pub fn allowed_in(&self, domain: Domain) -> Result<(), DslError> {
        fn walk(nodes: &[StructNode], domain: Domain, top: bool) -> Result<(), DslError> {
            for (i, n) in nodes.iter().enumerate() {
                if !domain.constructs().contains(&n.kind) {
                    return Err(DslError::Domain {
                        token: n.kind.name().to_string(),
                        domain,
                    });
                }
                if n.kind == ConstructKind::RepeatUntil && !(top && i + 1 == nodes.len()) {
                    return Err(DslError::Grammar(
                        "RepeatUntil must be the last top-level block".into(),
                    ));
                }
                if n.kind != ConstructKind::IfElse && !n.else_body.is_empty() {
                    return Err(DslError::Grammar(format!(
                        "{} has no else body",
                        n.kind.name()
                    )));
                }
                walk(&n.body, domain, false)?;
                walk(&n.else_body, domain, false)?;
            }
            Ok(())
        }
        walk(&self.body, domain, true)
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, nodes: &[StructNode]) -> fmt::Result {
            for (i, n) in nodes.iter().enumerate() {
                if i > 0 {
                    f.write_str("; ")?;
                }
                f.write_str(n.kind.name())?;
                if !n.body.is_empty() || !n.else_body.is_empty() {
                    f.write_str("{")?;
                    list(f, &n.body)?;
                    f.write_str("}")?;
                }
                if !n.else_body.is_empty() {
                    f.write_str("{")?;
                    list(f, &n.else_body)?;
                    f.write_str("}")?;
                }
            }
            Ok(())
        }
        f.write_str("{Run")?;
        if !self.body.is_empty() {
            f.write_str("{")?;
            list(f, &self.body)?;
            f.write_str("}")?;
        }
        f.write_str("}")
    }
}

impl Ast {
    pub fn new(domain: Domain, body: Vec<Block>) -> Ast {
        Ast { domain, body }
    }

    pub fn parse(text: &str, domain: Domain) -> Result<Ast, DslError> {
        Sketch::parse(text, domain)?.into_ast()
    }

    /// Total number of nodes including `Run`; node ids are `0..node_count()` in preorder.
    pub fn node_count(&self) -> usize {
        1 + self.body.iter().map(Block::size).sum::<usize>()
    }

    pub fn nblock(&self) -> u32 {
        self.node_count() as u32
    }

    pub fn structure(&self) -> Structure {
        fn conv(body: &[Block]) -> Vec<StructNode> {
            body.iter()
                .filter_map(|b| {
                    let kind = b.construct()?;
                    let mut bodies = b.bodies();
                    let first = bodies.next().map(|v| conv(v)).unwrap_or_default();
                    let second = bodies.next().map(|v| conv(v)).unwrap_or_default();
                    Some(StructNode {
                        kind,
                        body: first,
                        else_body: second,
                    })
                })
                .collect()
        }
        Structure {
            body: conv(&self.body),
        }
    }

    pub fn attributes(&self) -> CodeAttributes {
        let mut blocks = BTreeSet::new();
        visit(&self.body, &mut |b| {
            blocks.insert(b.kind());
        });
        let structure = self.structure();
        CodeAttributes {
            blocks,
            nblock: self.nblock(),
            depth: structure.depth(),
            nconst: structure.nconst(),
            structure,
        }
    }

    /// Checks the domain grammar: token sets, iterator range, `RepeatUntil` placement.
    pub fn validate(&self) -> Result<(), DslError> {
        let domain = self.domain;
        fn walk(body: &[Block], domain: Domain, top: bool) -> Result<(), DslError> {
            for (i, b) in body.iter().enumerate() {
                match b {
                    Block::Action(a) => {
                        if !domain.actions().contains(a) {
                            return Err(DslError::Domain {
                                token: a.name().into(),
                                domain,
                            });
                        }
                    }
                    _ => {
                        let kind = b.construct().unwrap();
                        if !domain.constructs().contains(&kind) {
                            return Err(DslError::Domain {
                                token: kind.name().into(),
                                domain,
                            });
                        }
                    }
                }
                match b {
                    Block::Repeat { times, .. } if !(ITER_MIN..=ITER_MAX).contains(times) => {
                        return Err(DslError::Grammar(format!("iterator {times} outside 2..10")));
                    }
                    Block::RepeatUntil { .. } if !(top && i + 1 == body.len()) => {
                        return Err(DslError::Grammar(
                            "RepeatUntil must be the last top-level block".into(),
                        ));
                    }
                    Block::While { cond, .. }
                    | Block::If { cond, .. }
                    | Block::IfElse { cond, .. }
                        if !domain.conds().contains(cond) =>
                    {
                        return Err(DslError::Domain {
                            token: cond.name().into(),
                            domain,
                        });
                    }
                    _ => {}
                }
                for inner in b.bodies() {
                    walk(inner, domain, false)?;
                }
            }
            Ok(())
        }
        walk(&self.body, domain, true)
    }

    /// Preorder ids of the constructs that carry a condition or iterator slot.
    pub fn slot_ids(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut id = 0usize;
        fn walk(body: &[Block], id: &mut usize, out: &mut Vec<usize>) {
            for b in body {
                *id += 1;
                if matches!(
                    b,
                    Block::Repeat { .. }
                        | Block::While { .. }
                        | Block::If { .. }
                        | Block::IfElse { .. }
                ) {
                    out.push(*id);
                }
                for inner in b.bodies() {
                    walk(inner, id, out);
                }
            }
        }
        walk(&self.body, &mut id, &mut out);
        out
    }

    /// Preorder id → block kind (`None` for the root).
    pub fn node_kinds(&self) -> Vec<Option<BlockKind>> {
        let mut out = vec![None];
        visit(&self.body, &mut |b| out.push(Some(b.kind())));
        out
    }

    /// Canonical printed form, one block per line.
    pub fn to_text(&self) -> String {
        let mut out = String::from("def Run(){\n");
        print_blocks(&mut out, &self.body, 1);
        out.push_str("}\n");
        out
    }

    /// Single-line form, handy for logs and identifiers.
    pub fn to_compact(&self) -> String {
        let mut out = String::from("def Run(){");
        compact_blocks(&mut out, &self.body);
        out.push('}');
        out
    }

    /// Every code obtained by deleting one action, or by replacing one construct
    /// with its body (each branch separately for `IfElse`).
    pub fn single_deletion_mutants(&self) -> Vec<Ast> {
        let mut out = Vec::new();
        let total = self.node_count();
        for target in 1..total {
            let mut variants: Vec<Vec<Block>> = Vec::new();
            mutate_at(&self.body, target, &mut 0, &mut variants);
            for body in variants {
                out.push(Ast {
                    domain: self.domain,
                    body,
                });
            }
        }
        out
    }
}

fn visit(body: &[Block], f: &mut dyn FnMut(&Block)) {
    for b in body {
        f(b);
        for inner in b.bodies() {
            visit(inner, f);
        }
    }
}

/// Produces the mutants of `body` obtained by deleting node `target` (preorder id).
fn mutate_at(body: &[Block], target: usize, id: &mut usize, out: &mut Vec<Vec<Block>>) {
    for (i, b) in body.iter().enumerate() {
        *id += 1;
        if *id == target {
            let mut replacements: Vec<Vec<Block>> = Vec::new();
            match b {
                Block::Action(_) => replacements.push(Vec::new()),
                Block::IfElse {
                    then_body,
                    else_body,
                    ..
                } => {
                    replacements.push(then_body.clone());
                    replacements.push(else_body.clone());
                }
                _ => replacements.push(b.bodies().next().cloned().unwrap_or_default()),
            }
            for r in replacements {
                let mut v: Vec<Block> = body[..i].to_vec();
                v.extend(r);
                v.extend_from_slice(&body[i + 1..]);
                out.push(v);
            }
            *id += b.size() - 1;
            return;
        }
        let start = *id;
        let mut inner_out = Vec::new();
        let bodies: Vec<&Vec<Block>> = b.bodies().collect();
        for (bi, inner) in bodies.iter().enumerate() {
            let mut found = Vec::new();
            mutate_at(inner, target, id, &mut found);
            for nb in found {
                let mut nblock = b.clone();
                *nblock.bodies_mut()[bi] = nb;
                inner_out.push(nblock);
            }
        }
        if !inner_out.is_empty() {
            for nb in inner_out {
                let mut v = body.to_vec();
                v[i] = nb;
                out.push(v);
            }
            *id = start + b.size() - 1;
            return;
        }
    }
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn print_blocks(out: &mut String, body: &[Block], level: usize) {
    for b in body {
        indent(out, level);
        match b {
            Block::Action(a) => {
                out.push_str(a.name());
                out.push('\n');
            }
            Block::Repeat { times, body } => {
                out.push_str(&format!("Repeat({times}){{\n"));
                print_blocks(out, body, level + 1);
                indent(out, level);
                out.push_str("}\n");
            }
            Block::RepeatUntil { body } => {
                out.push_str("RepeatUntil(goal){\n");
                print_blocks(out, body, level + 1);
                indent(out, level);
                out.push_str("}\n");
            }
            Block::While { cond, body } => {
                out.push_str(&format!("While({}){{\n", cond.name()));
                print_blocks(out, body, level + 1);
                indent(out, level);
                out.push_str("}\n");
            }
            Block::If { cond, then_body } => {
                out.push_str(&format!("If({}){{\n", cond.name()));
                print_blocks(out, then_body, level + 1);
                indent(out, level);
                out.push_str("}\n");
            }
            Block::IfElse {
                cond,
                then_body,
                else_body,
            } => {
                out.push_str(&format!("If({}){{\n", cond.name()));
                print_blocks(out, then_body, level + 1);
                indent(out, level);
                out.push_str("}\n");
                indent(out, level);
                out.push_str("Else{\n");
                print_blocks(out, else_body, level + 1);
                indent(out, level);
                out.push_str("}\n");
            }
        }
    }
}

fn compact_blocks(out: &mut String, body: &[Block]) {
    for (i, b) in body.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        match b {
            Block::Action(a) => out.push_str(a.name()),
            Block::Repeat { times, body } => {
                out.push_str(&format!("Repeat({times}){{"));
                compact_blocks(out, body);
                out.push('}');
            }
            Block::RepeatUntil { body } => {
                out.push_str("RepeatUntil(goal){");
                compact_blocks(out, body);
                out.push('}');
            }
            Block::While { cond, body } => {
                out.push_str(&format!("While({}){{", cond.name()));
                compact_blocks(out, body);
                out.push('}');
            }
            Block::If { cond, then_body } => {
                out.push_str(&format!("If({}){{", cond.name()));
                compact_blocks(out, then_body);
                out.push('}');
            }
            Block::IfElse {
                cond,
                then_body,
                else_body,
            } => {
                out.push_str(&format!("If({}){{", cond.name()));
                compact_blocks(out, then_body);
                out.push_str("} Else{");
                compact_blocks(out, else_body);
                out.push('}');
            }
        }
    }
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_compact())
    }
}

// ---------------------------------------------------------------------------
// Sketches

/// A condition or iterator slot that is either fixed or left open.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot<T> {
    Fixed(T),
    Hole,
}

impl<T: Copy> Slot<T> {
    pub fn fixed(self) -> Option<T> {
        match self {
            Slot::Fixed(v) => Some(v),
            Slot::Hole => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SketchItem {
    /// An action-sequence hole (`a` blocks): zero or more basic actions.
    Hole,
    Action(Action),
    Construct(SketchConstruct),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SketchConstruct {
    Repeat {
        times: Slot<u8>,
        body: Vec<SketchItem>,
    },
    RepeatUntil {
        body: Vec<SketchItem>,
    },
    While {
        cond: Slot<Cond>,
        body: Vec<SketchItem>,
    },
    If {
        cond: Slot<Cond>,
        then_body: Vec<SketchItem>,
    },
    IfElse {
        cond: Slot<Cond>,
        then_body: Vec<SketchItem>,
        else_body: Vec<SketchItem>,
    },
}

impl SketchConstruct {
    pub fn kind(&self) -> ConstructKind {
        match self {
            SketchConstruct::Repeat { .. } => ConstructKind::Repeat,
            SketchConstruct::RepeatUntil { .. } => ConstructKind::RepeatUntil,
            SketchConstruct::While { .. } => ConstructKind::While,
            SketchConstruct::If { .. } => ConstructKind::If,
            SketchConstruct::IfElse { .. } => ConstructKind::IfElse,
        }
    }

    pub fn bodies(&self) -> Vec<&Vec<SketchItem>> {
        match self {
            SketchConstruct::Repeat { body, .. }
            | SketchConstruct::RepeatUntil { body }
            | SketchConstruct::While { body, .. } => vec![body],
            SketchConstruct::If { then_body, .. } => vec![then_body],
            SketchConstruct::IfElse {
                then_body,
                else_body,
                ..
            } => vec![then_body, else_body],
        }
    }
}

/// Allowed fill tokens for sketch holes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delta {
    pub actions: BTreeSet<Action>,
    pub conds: BTreeSet<Cond>,
    pub iters: BTreeSet<u8>,
}

impl Delta {
    /// Basic actions, booleans and iterators of the domain.
    pub fn full(domain: Domain) -> Delta {
        Delta {
            actions: domain.actions().iter().copied().collect(),
            conds: domain.conds().iter().copied().collect(),
            iters: (ITER_MIN..=ITER_MAX).collect(),
        }
    }

    pub fn within(&self, domain: Domain) -> bool {
        self.actions.iter().all(|a| domain.actions().contains(a))
            && self.conds.iter().all(|c| domain.conds().contains(c))
            && self.iters.iter().all(|i| (ITER_MIN..=ITER_MAX).contains(i))
    }
}

/// A partial code: the construct skeleton with typed holes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sketch {
    pub domain: Domain,
    pub body: Vec<SketchItem>,
}

impl Sketch {
    /// Parses code syntax extended with `a` (action-sequence hole), `b`
    /// (condition hole) and `x` (iterator hole).
    pub fn parse(text: &str, domain: Domain) -> Result<Sketch, DslError> {
        let toks = lex(text)?;
        let mut p = Parser {
            toks: &toks,
            pos: 0,
        };
        p.expect_ident("def")?;
        p.expect_ident("Run")?;
        p.expect(&Tok::LParen, "`(`")?;
        p.expect(&Tok::RParen, "`)`")?;
        let body = p.block(domain)?;
        p.expect_end()?;
        let sketch = Sketch { domain, body };
        sketch.check_grammar()?;
        Ok(sketch)
    }

    fn check_grammar(&self) -> Result<(), DslError> {
        fn walk(body: &[SketchItem], top: bool) -> Result<(), DslError> {
            for (i, item) in body.iter().enumerate() {
                if let SketchItem::Construct(c) = item {
                    if c.kind() == ConstructKind::RepeatUntil {
                        let rest_is_holes =
                            body[i + 1..].iter().all(|x| matches!(x, SketchItem::Hole));
                        if !top
                            || !rest_is_holes
                            || body[..i].iter().any(|x| {
                                matches!(
                                    x,
                                    SketchItem::Construct(SketchConstruct::RepeatUntil { .. })
                                )
                            })
                        {
                            return Err(DslError::Grammar(
                                "RepeatUntil must be the last top-level block".into(),
                            ));
                        }
                    }
                    if let SketchConstruct::Repeat {
                        times: Slot::Fixed(t),
                        ..
                    } = c
                    {
                        if !(ITER_MIN..=ITER_MAX).contains(t) {
                            return Err(DslError::Grammar(format!("iterator {t} outside 2..10")));
                        }
                    }
                    for b in c.bodies() {
                        walk(b, false)?;
                    }
                }
            }
            Ok(())
        }
        walk(&self.body, true)
    }

    pub fn has_holes(&self) -> bool {
        fn walk(body: &[SketchItem]) -> bool {
            body.iter().any(|item| match item {
                SketchItem::Hole => true,
                SketchItem::Action(_) => false,
                SketchItem::Construct(c) => {
                    let slot_hole = match c {
                        SketchConstruct::Repeat { times, .. } => *times == Slot::Hole,
                        SketchConstruct::RepeatUntil { .. } => false,
                        SketchConstruct::While { cond, .. }
                        | SketchConstruct::If { cond, .. }
                        | SketchConstruct::IfElse { cond, .. } => *cond == Slot::Hole,
                    };
                    slot_hole || c.bodies().into_iter().any(|b| walk(b))
                }
            })
        }
        walk(&self.body)
    }

    /// Converts a hole-free sketch into a code.
    pub fn into_ast(self) -> Result<Ast, DslError> {
        fn conv(body: Vec<SketchItem>) -> Result<Vec<Block>, DslError> {
            body.into_iter()
                .map(|item| match item {
                    SketchItem::Hole => Err(DslError::HasHoles),
                    SketchItem::Action(a) => Ok(Block::Action(a)),
                    SketchItem::Construct(c) => Ok(match c {
                        SketchConstruct::Repeat { times, body } => Block::Repeat {
                            times: times.fixed().ok_or(DslError::HasHoles)?,
                            body: conv(body)?,
                        },
                        SketchConstruct::RepeatUntil { body } => {
                            Block::RepeatUntil { body: conv(body)? }
                        }
                        SketchConstruct::While { cond, body } => Block::While {
                            cond: cond.fixed().ok_or(DslError::HasHoles)?,
                            body: conv(body)?,
                        },
                        SketchConstruct::If { cond, then_body } => Block::If {
                            cond: cond.fixed().ok_or(DslError::HasHoles)?,
                            then_body: conv(then_body)?,
                        },
                        SketchConstruct::IfElse {
                            cond,
                            then_body,
                            else_body,
                        } => Block::IfElse {
                            cond: cond.fixed().ok_or(DslError::HasHoles)?,
                            then_body: conv(then_body)?,
                            else_body: conv(else_body)?,
                        },
                    }),
                })
                .collect()
        }
        let ast = Ast {
            domain: self.domain,
            body: conv(self.body)?,
        };
        ast.validate()?;
        Ok(ast)
    }

    pub fn structure(&self) -> Structure {
        fn conv(body: &[SketchItem]) -> Vec<StructNode> {
            body.iter()
                .filter_map(|item| match item {
                    SketchItem::Construct(c) => {
                        let bodies = c.bodies();
                        Some(StructNode {
                            kind: c.kind(),
                            body: conv(bodies[0]),
                            else_body: bodies.get(1).map(|b| conv(b)).unwrap_or_default(),
                        })
                    }
                    _ => None,
                })
                .collect()
        }
        Structure {
            body: conv(&self.body),
        }
    }

    /// Depth required of solution codes.
    pub fn depth(&self) -> u32 {
        self.structure().depth()
    }

    pub fn nconst(&self) -> u32 {
        self.structure().nconst()
    }

    /// Whether the `Run` body can only become non-empty by filling a hole.
    pub fn run_needs_action(&self) -> bool {
        !self.body.is_empty() && self.body.iter().all(|i| matches!(i, SketchItem::Hole))
    }

    /// Block count of the smallest grammar-valid completion.
    pub fn min_nblock(&self) -> u32 {
        fn count(body: &[SketchItem]) -> u32 {
            body.iter()
                .map(|i| match i {
                    SketchItem::Hole => 0,
                    SketchItem::Action(_) => 1,
                    SketchItem::Construct(c) => {
                        1 + c.bodies().into_iter().map(|b| count(b)).sum::<u32>()
                    }
                })
                .sum()
        }
        1 + count(&self.body) + u32::from(self.run_needs_action())
    }

    /// Block kinds a completion may contain given `delta`.
    pub fn allowed_blocks(&self, delta: &Delta) -> BTreeSet<BlockKind> {
        let mut set: BTreeSet<BlockKind> = BTreeSet::new();
        fn walk(body: &[SketchItem], set: &mut BTreeSet<BlockKind>, any_hole: &mut bool) {
            for item in body {
                match item {
                    SketchItem::Hole => *any_hole = true,
                    SketchItem::Action(a) => {
                        set.insert(BlockKind::from(*a));
                    }
                    SketchItem::Construct(c) => {
                        set.insert(BlockKind::from(c.kind()));
                        for b in c.bodies() {
                            walk(b, set, any_hole);
                        }
                    }
                }
            }
        }
        let mut any_hole = false;
        walk(&self.body, &mut set, &mut any_hole);
        if any_hole {
            set.extend(delta.actions.iter().map(|&a| BlockKind::from(a)));
        }
        set
    }

    /// Whether `code` is a completion of this sketch with fills drawn from `delta`.
    pub fn respects(&self, code: &Ast, delta: &Delta) -> bool {
        code.domain == self.domain && match_body(&self.body, &code.body, delta)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("def Run(){");
        sketch_compact(&mut out, &self.body);
        out.push('}');
        out
    }
}

fn match_body(items: &[SketchItem], blocks: &[Block], delta: &Delta) -> bool {
    match items.split_first() {
        None => blocks.is_empty(),
        Some((SketchItem::Hole, rest)) => {
            // The hole absorbs a (possibly empty) run of allowed actions.
            let mut k = 0;
            loop {
                if match_body(rest, &blocks[k..], delta) {
                    return true;
                }
                match blocks.get(k) {
                    Some(Block::Action(a)) if delta.actions.contains(a) => k += 1,
                    _ => return false,
                }
            }
        }
        Some((SketchItem::Action(a), rest)) => {
            matches!(blocks.first(), Some(Block::Action(b)) if a == b)
                && match_body(rest, &blocks[1..], delta)
        }
        Some((SketchItem::Construct(c), rest)) => {
            let Some(first) = blocks.first() else {
                return false;
            };
            let cond_ok = |slot: &Slot<Cond>, cond: &Cond| match slot {
                Slot::Fixed(s) => s == cond,
                Slot::Hole => delta.conds.contains(cond),
            };
            let ok = match (c, first) {
                (SketchConstruct::Repeat { times, body }, Block::Repeat { times: t, body: b }) => {
                    (match times {
                        Slot::Fixed(s) => s == t,
                        Slot::Hole => delta.iters.contains(t),
                    }) && match_body(body, b, delta)
                }
                (SketchConstruct::RepeatUntil { body }, Block::RepeatUntil { body: b }) => {
                    match_body(body, b, delta)
                }
                (SketchConstruct::While { cond, body }, Block::While { cond: c2, body: b }) => {
                    cond_ok(cond, c2) && match_body(body, b, delta)
                }
                (
                    SketchConstruct::If { cond, then_body },
                    Block::If {
                        cond: c2,
                        then_body: b,
                    },
                ) => cond_ok(cond, c2) && match_body(then_body, b, delta),
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
                    cond_ok(cond, c2)
                        && match_body(then_body, b1, delta)
                        && match_body(else_body, b2, delta)
                }
                _ => false,
            };
            ok && match_body(rest, &blocks[1..], delta)
        }
    }
}

fn sketch_compact(out: &mut String, body: &[SketchItem]) {
    let slot_cond = |s: &Slot<Cond>| match s {
        Slot::Fixed(c) => c.name().to_string(),
        Slot::Hole => "b".to_string(),
    };
    for (i, item) in body.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        match item {
            SketchItem::Hole => out.push('a'),
            SketchItem::Action(a) => out.push_str(a.name()),
            SketchItem::Construct(c) => match c {
                SketchConstruct::Repeat { times, body } => {
                    match times {
                        Slot::Fixed(t) => out.push_str(&format!("Repeat({t}){{")),
                        Slot::Hole => out.push_str("Repeat(x){"),
                    }
                    sketch_compact(out, body);
                    out.push('}');
                }
                SketchConstruct::RepeatUntil { body } => {
                    out.push_str("RepeatUntil(goal){");
                    sketch_compact(out, body);
                    out.push('}');
                }
                SketchConstruct::While { cond, body } => {
                    out.push_str(&format!("While({}){{", slot_cond(cond)));
                    sketch_compact(out, body);
                    out.push('}');
                }
                SketchConstruct::If { cond, then_body } => {
                    out.push_str(&format!("If({}){{", slot_cond(cond)));
                    sketch_compact(out, then_body);
                    out.push('}');
                }
                SketchConstruct::IfElse {
                    cond,
                    then_body,
                    else_body,
                } => {
                    out.push_str(&format!("If({}){{", slot_cond(cond)));
                    sketch_compact(out, then_body);
                    out.push_str("} Else{");
                    sketch_compact(out, else_body);
                    out.push('}');
                }
            },
        }
    }
}

impl fmt::Display for Sketch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Builds the sketch of `code`: all constructs kept, every action run replaced by
/// a hole (one hole before, between and after constructs in every body), and the
/// slots of the constructs whose preorder ids are in `mask` opened up.
pub fn sketch_of(code: &Ast, mask: &BTreeSet<usize>) -> Result<Sketch, DslError> {
    let slots: BTreeSet<usize> = code.slot_ids().into_iter().collect();
    if let Some(&bad) = mask.iter().find(|id| !slots.contains(id)) {
        return Err(DslError::UnknownSlot(bad));
    }
    fn conv(body: &[Block], id: &mut usize, mask: &BTreeSet<usize>, top: bool) -> Vec<SketchItem> {
        let mut out = vec![SketchItem::Hole];
        for b in body {
            *id += 1;
            let my_id = *id;
            let masked = mask.contains(&my_id);
            let cond_slot = |c: &Cond| if masked { Slot::Hole } else { Slot::Fixed(*c) };
            let construct = match b {
                Block::Action(_) => continue,
                Block::Repeat { times, body } => SketchConstruct::Repeat {
                    times: if masked {
                        Slot::Hole
                    } else {
                        Slot::Fixed(*times)
                    },
                    body: conv(body, id, mask, false),
                },
                Block::RepeatUntil { body } => SketchConstruct::RepeatUntil {
                    body: conv(body, id, mask, false),
                },
                Block::While { cond, body } => {
                    let cond = cond_slot(cond);
                    SketchConstruct::While {
                        cond,
                        body: conv(body, id, mask, false),
                    }
                }
                Block::If { cond, then_body } => {
                    let cond = cond_slot(cond);
                    SketchConstruct::If {
                        cond,
                        then_body: conv(then_body, id, mask, false),
                    }
                }
                Block::IfElse {
                    cond,
                    then_body,
                    else_body,
                } => {
                    let cond = cond_slot(cond);
                    let then_body = conv(then_body, id, mask, false);
                    let else_body = conv(else_body, id, mask, false);
                    SketchConstruct::IfElse {
                        cond,
                        then_body,
                        else_body,
                    }
                }
            };
            out.push(SketchItem::Construct(construct));
            out.push(SketchItem::Hole);
        }
        // Actions were skipped above without touching the hole layout; ids of
        // skipped actions are still consumed by the `*id += 1` at loop head.
        if top {
            if let Some(SketchItem::Construct(SketchConstruct::RepeatUntil { .. })) =
                out.iter().rev().nth(1)
            {
                out.pop();
            }
        }
        out
    }
    let mut id = 0;
    let body = conv(&code.body, &mut id, mask, true);
    Ok(Sketch {
        domain: code.domain,
        body,
    })
}

// ---------------------------------------------------------------------------
// Lexer / parser

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(u32),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Semi,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn describe(t: Option<&Spanned>) -> String {
    match t.map(|s| &s.tok) {
        None => "end of input".into(),
        Some(Tok::Ident(s)) => format!("`{s}`"),
        Some(Tok::Num(n)) => format!("`{n}`"),
        Some(Tok::LParen) => "`(`".into(),
        Some(Tok::RParen) => "`)`".into(),
        Some(Tok::LBrace) => "`{`".into(),
        Some(Tok::RBrace) => "`}`".into(),
        Some(Tok::Semi) => "`;`".into(),
    }
}

fn lex(text: &str) -> Result<Vec<Spanned>, DslError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let start = (line, col);
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            ';' | ',' => Some(Tok::Semi),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Spanned {
                tok,
                line: start.0,
                col: start.1,
            });
            i += 1;
            col += 1;
        } else if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
        } else if c.is_whitespace() {
            i += 1;
            col += 1;
        } else if c.is_ascii_digit() {
            let mut n: u32 = 0;
            while i < chars.len() && chars[i].is_ascii_digit() {
                n = n
                    .saturating_mul(10)
                    .saturating_add(chars[i] as u32 - '0' as u32);
                i += 1;
                col += 1;
            }
            out.push(Spanned {
                tok: Tok::Num(n),
                line: start.0,
                col: start.1,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len()
                && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '-')
            {
                s.push(chars[i]);
                i += 1;
                col += 1;
            }
            out.push(Spanned {
                tok: Tok::Ident(s),
                line: start.0,
                col: start.1,
            });
        } else {
            return Err(DslError::Syntax {
                line,
                col,
                expected: "a block, `{`, `}`, `(`, `)` or `;`".into(),
                found: format!("`{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [Spanned],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Spanned> {
        self.toks.get(self.pos)
    }

    fn peek_is(&self, t: &Tok) -> bool {
        self.peek().map(|s| &s.tok == t).unwrap_or(false)
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek_is(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err(&self, expected: &str) -> DslError {
        let (line, col) = match self.peek() {
            Some(s) => (s.line, s.col),
            None => self
                .toks
                .last()
                .map(|s| (s.line, s.col + 1))
                .unwrap_or((1, 1)),
        };
        DslError::Syntax {
            line,
            col,
            expected: expected.into(),
            found: describe(self.peek()),
        }
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<(), DslError> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.err(what))
        }
    }

    fn expect_ident(&mut self, name: &str) -> Result<(), DslError> {
        match self.peek() {
            Some(Spanned {
                tok: Tok::Ident(s), ..
            }) if s == name => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(&format!("`{name}`"))),
        }
    }

    fn expect_end(&self) -> Result<(), DslError> {
        if self.pos == self.toks.len() {
            Ok(())
        } else {
            Err(self.err("end of input"))
        }
    }

    fn block(&mut self, domain: Domain) -> Result<Vec<SketchItem>, DslError> {
        self.expect(&Tok::LBrace, "`{`")?;
        let mut items = Vec::new();
        loop {
            while self.eat(&Tok::Semi) {}
            if self.eat(&Tok::RBrace) {
                return Ok(items);
            }
            items.push(self.stmt(domain)?);
        }
    }

    fn cond_slot(&mut self, domain: Domain) -> Result<Slot<Cond>, DslError> {
        self.expect(&Tok::LParen, "`(`")?;
        let slot = match self.peek() {
            Some(Spanned {
                tok: Tok::Ident(s), ..
            }) => {
                let slot = if s == "b" {
                    Slot::Hole
                } else if let Some(c) = Cond::from_name(s) {
                    if !domain.conds().contains(&c) {
                        return Err(DslError::Domain {
                            token: s.clone(),
                            domain,
                        });
                    }
                    Slot::Fixed(c)
                } else {
                    return Err(self.err("a condition"));
                };
                self.pos += 1;
                slot
            }
            _ => return Err(self.err("a condition")),
        };
        self.expect(&Tok::RParen, "`)`")?;
        Ok(slot)
    }

    fn stmt(&mut self, domain: Domain) -> Result<SketchItem, DslError> {
        let Some(Spanned {
            tok: Tok::Ident(name),
            ..
        }) = self.peek()
        else {
            return Err(self.err("a block"));
        };
        let name = name.clone();
        if name == "a" {
            self.pos += 1;
            return Ok(SketchItem::Hole);
        }
        if let Some(a) = Action::from_name(&name) {
            if !domain.actions().contains(&a) {
                return Err(DslError::Domain {
                    token: name,
                    domain,
                });
            }
            self.pos += 1;
            return Ok(SketchItem::Action(a));
        }
        let construct = match name.as_str() {
            "Repeat" => {
                self.pos += 1;
                self.expect(&Tok::LParen, "`(`")?;
                let times = match self.peek().map(|s| &s.tok) {
                    Some(Tok::Num(n)) => {
                        let n = *n;
                        if !(ITER_MIN as u32..=ITER_MAX as u32).contains(&n) {
                            return Err(DslError::Grammar(format!("iterator {n} outside 2..10")));
                        }
                        self.pos += 1;
                        Slot::Fixed(n as u8)
                    }
                    Some(Tok::Ident(s)) if s == "x" => {
                        self.pos += 1;
                        Slot::Hole
                    }
                    _ => return Err(self.err("an iterator")),
                };
                self.expect(&Tok::RParen, "`)`")?;
                SketchConstruct::Repeat {
                    times,
                    body: self.block(domain)?,
                }
            }
            "RepeatUntil" => {
                if domain != Domain::HocMaze {
                    return Err(DslError::Domain {
                        token: name,
                        domain,
                    });
                }
                self.pos += 1;
                self.expect(&Tok::LParen, "`(`")?;
                self.expect_ident("goal")?;
                self.expect(&Tok::RParen, "`)`")?;
                SketchConstruct::RepeatUntil {
                    body: self.block(domain)?,
                }
            }
            "While" => {
                if domain != Domain::Karel {
                    return Err(DslError::Domain {
                        token: name,
                        domain,
                    });
                }
                self.pos += 1;
                let cond = self.cond_slot(domain)?;
                SketchConstruct::While {
                    cond,
                    body: self.block(domain)?,
                }
            }
            "If" | "IfElse" => {
                self.pos += 1;
                let cond = self.cond_slot(domain)?;
                let then_body = self.block(domain)?;
                while self.eat(&Tok::Semi) {}
                let has_else =
                    matches!(self.peek(), Some(Spanned { tok: Tok::Ident(s), .. }) if s == "Else");
                if has_else {
                    self.pos += 1;
                    let else_body = self.block(domain)?;
                    SketchConstruct::IfElse {
                        cond,
                        then_body,
                        else_body,
                    }
                } else {
                    SketchConstruct::If { cond, then_body }
                }
            }
            _ => {
                if Action::from_name(&name).is_some()
                    || matches!(name.as_str(), "While" | "RepeatUntil")
                {
                    return Err(DslError::Domain {
                        token: name,
                        domain,
                    });
                }
                return Err(self.err("a block"));
            }
        };
        Ok(SketchItem::Construct(construct))
    }

    fn struct_group(&mut self) -> Result<Vec<StructNode>, DslError> {
        self.expect(&Tok::LBrace, "`{`")?;
        let mut out = Vec::new();
        loop {
            while self.eat(&Tok::Semi) {}
            if self.eat(&Tok::RBrace) {
                return Ok(out);
            }
            let kind = match self.peek() {
                Some(Spanned {
                    tok: Tok::Ident(s), ..
                }) => match s.as_str() {
                    "Repeat" => ConstructKind::Repeat,
                    "RepeatUntil" => ConstructKind::RepeatUntil,
                    "While" => ConstructKind::While,
                    "If" => ConstructKind::If,
                    "IfElse" => ConstructKind::IfElse,
                    _ => return Err(self.err("a construct")),
                },
                _ => return Err(self.err("a construct")),
            };
            self.pos += 1;
            let body = if self.peek_is(&Tok::LBrace) {
                self.struct_group()?
            } else {
                Vec::new()
            };
            let else_body = if kind == ConstructKind::IfElse && self.peek_is(&Tok::LBrace) {
                self.struct_group()?
            } else {
                Vec::new()
            };
            out.push(StructNode {
                kind,
                body,
                else_body,
            });
        }
    }
}

// ---------------------------------------------------------------------------
// JSON node form: {type, cond?, iter?, body[], elseBody?}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JsonNode {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cond: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iter: Option<u8>,
    #[serde(default)]
    pub body: Vec<JsonNode>,
    #[serde(rename = "elseBody", default, skip_serializing_if = "Option::is_none")]
    pub else_body: Option<Vec<JsonNode>>,
}

impl JsonNode {
    fn leaf(kind: &str) -> JsonNode {
        JsonNode {
            kind: kind.into(),
            domain: None,
            cond: None,
            iter: None,
            body: Vec::new(),
            else_body: None,
        }
    }
}

impl From<&Ast> for JsonNode {
    fn from(ast: &Ast) -> Self {
        fn conv(b: &Block) -> JsonNode {
            let body = |v: &Vec<Block>| v.iter().map(conv).collect::<Vec<_>>();
            match b {
                Block::Action(a) => JsonNode::leaf(a.name()),
                Block::Repeat { times, body: bd } => JsonNode {
                    iter: Some(*times),
                    body: body(bd),
                    ..JsonNode::leaf("Repeat")
                },
                Block::RepeatUntil { body: bd } => JsonNode {
                    cond: Some("goal".into()),
                    body: body(bd),
                    ..JsonNode::leaf("RepeatUntil")
                },
                Block::While { cond, body: bd } => JsonNode {
                    cond: Some(cond.name().into()),
                    body: body(bd),
                    ..JsonNode::leaf("While")
                },
                Block::If { cond, then_body } => JsonNode {
                    cond: Some(cond.name().into()),
                    body: body(then_body),
                    ..JsonNode::leaf("If")
                },
                Block::IfElse {
                    cond,
                    then_body,
                    else_body,
                } => JsonNode {
                    cond: Some(cond.name().into()),
                    body: body(then_body),
                    else_body: Some(body(else_body)),
                    ..JsonNode::leaf("IfElse")
                },
            }
        }
        JsonNode {
            domain: Some(ast.domain),
            body: ast.body.iter().map(conv).collect(),
            ..JsonNode::leaf("Run")
        }
    }
}

impl JsonNode {
    pub fn to_ast(&self, default_domain: Option<Domain>) -> Result<Ast, DslError> {
        if self.kind != "Run" {
            return Err(DslError::Grammar(format!(
                "root must be Run, found {}",
                self.kind
            )));
        }
        let domain = self
            .domain
            .or(default_domain)
            .ok_or_else(|| DslError::Grammar("missing domain".into()))?;
        fn cond_of(n: &JsonNode, domain: Domain) -> Result<Cond, DslError> {
            let name = n
                .cond
                .as_deref()
                .ok_or_else(|| DslError::Grammar(format!("{} needs cond", n.kind)))?;
            Cond::from_name(name).ok_or_else(|| DslError::Domain {
                token: name.into(),
                domain,
            })
        }
        fn conv(n: &JsonNode, domain: Domain) -> Result<Block, DslError> {
            let body = |v: &[JsonNode]| {
                v.iter()
                    .map(|c| conv(c, domain))
                    .collect::<Result<Vec<_>, _>>()
            };
            if let Some(a) = Action::from_name(&n.kind) {
                return Ok(Block::Action(a));
            }
            Ok(match n.kind.as_str() {
                "Repeat" => Block::Repeat {
                    times: n
                        .iter
                        .ok_or_else(|| DslError::Grammar("Repeat needs iter".into()))?,
                    body: body(&n.body)?,
                },
                "RepeatUntil" => Block::RepeatUntil {
                    body: body(&n.body)?,
                },
                "While" => Block::While {
                    cond: cond_of(n, domain)?,
                    body: body(&n.body)?,
                },
                "If" | "IfElse" => match &n.else_body {
                    Some(e) => Block::IfElse {
                        cond: cond_of(n, domain)?,
                        then_body: body(&n.body)?,
                        else_body: body(e)?,
                    },
                    None => Block::If {
                        cond: cond_of(n, domain)?,
                        then_body: body(&n.body)?,
                    },
                },
                other => return Err(DslError::Grammar(format!("unknown node type {other}"))),
            })
        }
        let ast = Ast {
            domain,
            body: self
                .body
                .iter()
                .map(|c| conv(c, domain))
                .collect::<Result<Vec<_>, _>>()?,
        };
        ast.validate()?;
        Ok(ast)
    }
}

impl Serialize for Ast {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        JsonNode::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Ast {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let node = JsonNode::deserialize(d)?;
        node.to_ast(None).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAZE18: &str = "def Run(){ RepeatUntil(goal){ If(pathAhead){move} Else {turnLeft} } }";
    const STAIRWAY: &str = "def Run(){ While(no-pathAhead){ If(markerPresent){ pickMarker } turnLeft; move; turnRight; move } }";

    #[test]
    fn maze18_attributes() {
        let c = Ast::parse(MAZE18, Domain::HocMaze).unwrap();
        let a = c.attributes();
        assert_eq!(a.nblock, 5);
        assert_eq!(a.depth, 3);
        assert_eq!(a.nconst, 2);
        let expected: BTreeSet<BlockKind> = [
            BlockKind::Move,
            BlockKind::TurnLeft,
            BlockKind::RepeatUntil,
            BlockKind::IfElse,
        ]
        .into_iter()
        .collect();
        assert_eq!(a.blocks, expected);
        assert_eq!(a.structure.to_string(), "{Run{RepeatUntil{IfElse}}}");
    }

    #[test]
    fn stairway_attributes() {
        let c = Ast::parse(STAIRWAY, Domain::Karel).unwrap();
        let a = c.attributes();
        assert_eq!((a.nblock, a.depth, a.nconst), (8, 3, 2));
        assert_eq!(a.structure.to_string(), "{Run{While{If}}}");
    }

    #[test]
    fn empty_and_flat_codes() {
        let c = Ast::parse("def Run(){}", Domain::HocMaze).unwrap();
        let a = c.attributes();
        assert_eq!((a.nblock, a.depth, a.nconst), (1, 1, 0));
        // Sequencing is depth-neutral: an action-only code sits in the (1, 0) bucket.
        let c = Ast::parse("def Run(){move; move}", Domain::HocMaze).unwrap();
        let a = c.attributes();
        assert_eq!((a.nblock, a.depth, a.nconst), (3, 1, 0));
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            Ast::parse("def Run(){ putMarker }", Domain::HocMaze),
            Err(DslError::Domain { .. })
        ));
        assert!(matches!(
            Ast::parse("def Run(){ While(pathAhead){move} }", Domain::HocMaze),
            Err(DslError::Domain { .. })
        ));
        assert!(matches!(
            Ast::parse("def Run(){ RepeatUntil(goal){move} }", Domain::Karel),
            Err(DslError::Domain { .. })
        ));
        assert!(matches!(
            Ast::parse("def Run(){ If(no-pathAhead){move} }", Domain::HocMaze),
            Err(DslError::Domain { .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match Ast::parse("def Run(){\n  move\n  Repeat(3){ move \n", Domain::HocMaze) {
            Err(DslError::Syntax { line, expected, .. }) => {
                assert_eq!(line, 3);
                assert!(expected.contains('}') || expected.contains("block"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Ast::parse("def Run(){ Repeat(11){move} }", Domain::HocMaze),
            Err(DslError::Grammar(_))
        ));
        assert!(matches!(
            Ast::parse("def Run(){ RepeatUntil(goal){move} move }", Domain::HocMaze),
            Err(DslError::Grammar(_))
        ));
    }

    #[test]
    fn print_parse_round_trip() {
        for (t, d) in [(MAZE18, Domain::HocMaze), (STAIRWAY, Domain::Karel)] {
            let c = Ast::parse(t, d).unwrap();
            assert_eq!(Ast::parse(&c.to_text(), d).unwrap(), c);
            assert_eq!(Ast::parse(&c.to_compact(), d).unwrap(), c);
        }
    }

    #[test]
    fn sketch_of_maze18_masks_condition() {
        let c = Ast::parse(MAZE18, Domain::HocMaze).unwrap();
        // ids: Run 0, RepeatUntil 1, IfElse 2, move 3, turnLeft 4
        assert_eq!(c.slot_ids(), vec![2]);
        let s = sketch_of(&c, &[2].into_iter().collect()).unwrap();
        assert_eq!(
            s.to_text(),
            "def Run(){a; RepeatUntil(goal){a; If(b){a} Else{a}; a}}"
        );
        let s0 = sketch_of(&c, &BTreeSet::new()).unwrap();
        assert_eq!(
            s0.to_text(),
            "def Run(){a; RepeatUntil(goal){a; If(pathAhead){a} Else{a}; a}}"
        );
        assert!(matches!(
            sketch_of(&c, &[1].into_iter().collect()),
            Err(DslError::UnknownSlot(1))
        ));
        assert!(s.respects(&c, &Delta::full(Domain::HocMaze)));
    }

    #[test]
    fn sketch_of_stairway_layout() {
        let c = Ast::parse(STAIRWAY, Domain::Karel).unwrap();
        let mask: BTreeSet<usize> = c.slot_ids().into_iter().collect();
        let s = sketch_of(&c, &mask).unwrap();
        assert_eq!(s.to_text(), "def Run(){a; While(b){a; If(b){a}; a}; a}");
        assert_eq!(s.structure(), c.structure());
        assert_eq!(s.min_nblock(), 3);
    }

    #[test]
    fn mutants() {
        let c = Ast::parse(
            "def Run(){ turnLeft; RepeatUntil(goal){ If(pathRight){move} Else {move} } }",
            Domain::HocMaze,
        )
        .unwrap();
        let ms: Vec<String> = c
            .single_deletion_mutants()
            .iter()
            .map(|m| m.to_compact())
            .collect();
        assert!(ms
            .contains(&"def Run(){RepeatUntil(goal){If(pathRight){move} Else{move}}}".to_string()));
        assert!(ms.contains(&"def Run(){turnLeft; RepeatUntil(goal){move}}".to_string()));
        assert!(ms.contains(&"def Run(){turnLeft; If(pathRight){move} Else{move}}".to_string()));
        assert!(ms.contains(
            &"def Run(){turnLeft; RepeatUntil(goal){If(pathRight){} Else{move}}}".to_string()
        ));
        // one per action (3), two for IfElse, one for RepeatUntil
        assert_eq!(ms.len(), 6);
    }

    #[test]
    fn structure_notation() {
        let s = Structure::parse("{Run{RepeatUntil{If; If}}}").unwrap();
        assert_eq!(s.bucket(), (3, 3));
        assert_eq!(s.to_string(), "{Run{RepeatUntil{If; If}}}");
        assert_eq!(Structure::parse("{Run}").unwrap().bucket(), (1, 0));
        assert!(Structure::parse("{Run{RepeatUntil; Repeat}}")
            .unwrap()
            .allowed_in(Domain::HocMaze)
            .is_err());
    }

    #[test]
    fn json_node_form() {
        let c = Ast::parse(MAZE18, Domain::HocMaze).unwrap();
        let js = serde_json::to_string(&c).unwrap();
        assert!(js.contains("\"elseBody\""));
        let back: Ast = serde_json::from_str(&js).unwrap();
        assert_eq!(back, c);
    }
}
