//! Learned guidance for both generation stages.
//!
//! The code model is a two-layer GRU over the decision sequence of sketch
//! completion, trained by teacher forcing on exemplar codes. The puzzle model
//! is a small convolutional actor-critic over an encoding of the partially
//! known grid plus a handful of code-execution features, trained with a
//! Monte-Carlo actor loss and a smooth-L1 critic.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::{
    self, CodeDecision, CodePolicy, CodegenError, DecisionPoint, NCONTEXTS, NTOKENS,
};
use crate::dsl::{sketch_of, Ast, Domain};
use crate::emulator::Query;
use crate::math;
use crate::nn::{glorot, orthogonal, Adam, Params, Tape, Var};
use crate::rng;
use crate::symexec::{self, DecisionType, Pending, PuzzlePolicy, SymState, NDECISIONS};
use crate::world::{Cell, TaskSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrainError {
    #[error("empty training set")]
    EmptyDataset,
    #[error("no code with a positive oracle score")]
    NoValidCodes,
    #[error("exemplar {index} does not complete its sketch")]
    ExemplarMismatch { index: usize },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Curriculum factor at the start and end of training.
    pub lambda_start: f64,
    pub lambda_end: f64,
    /// Softmax temperature for puzzle-policy sampling during training.
    pub temperature: f64,
    pub seed: u64,
    /// Teacher-force on every way of opening the exemplar's construct slots.
    pub augment: bool,
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 16,
            epochs: 20,
            lambda_start: 0.8,
            lambda_end: 0.9,
            temperature: 1.0,
            seed: 0,
            augment: false,
            grad_clip: Some(5.0),
        }
    }
}

impl TrainConfig {
    /// Curriculum factor after `progress ∈ [0, 1]` of training.
    pub fn lambda(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        self.lambda_start + (self.lambda_end - self.lambda_start) * p
    }
}

/// One row of a training curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    /// Next-token accuracy (code model) or mean terminal reward (puzzle model).
    pub metric: f64,
}

// ---------------------------------------------------------------- code model

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeModelConfig {
    pub embed: usize,
    pub hidden: usize,
}

impl Default for CodeModelConfig {
    fn default() -> Self {
        CodeModelConfig {
            embed: 16,
            hidden: 48,
        }
    }
}

const BOS: usize = NTOKENS;
const MAX_BUDGET: usize = 17;
const MAX_HOLE: usize = 7;

/// GRU decoder over sketch-completion decisions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeModel {
    pub domain: Domain,
    pub config: CodeModelConfig,
    pub params: Params,
}

struct GruIdx {
    wz: usize,
    uz: usize,
    bz: usize,
    wr: usize,
    ur: usize,
    br: usize,
    wh: usize,
    uh: usize,
    bh: usize,
}

// tensor layout: tok, ctx, budget, hole, gru0 (9), gru1 (9), out_w, out_b
const CODE_GRU: [usize; 2] = [4, 13];
const CODE_OUT: usize = 22;

impl CodeModel {
    pub fn new(domain: Domain, config: CodeModelConfig, seed: u64) -> CodeModel {
        let mut r = rng::stream(seed, 1, 0);
        let (e, h) = (config.embed, config.hidden);
        let mut p = Params::default();
        let emb = |p: &mut Params, name: &str, rows: usize, r: &mut rng::Rng| {
            let data = (0..rows * e).map(|_| crate::nn::normal(r) * 0.3).collect();
            p.add(name, &[rows, e], data);
        };
        emb(&mut p, "code.tok", NTOKENS + 1, &mut r);
        emb(&mut p, "code.ctx", NCONTEXTS, &mut r);
        emb(&mut p, "code.budget", MAX_BUDGET + 1, &mut r);
        emb(&mut p, "code.hole", MAX_HOLE + 1, &mut r);
        for (layer, input) in [(0, 4 * e), (1, h)] {
            for gate in ["z", "r", "h"] {
                p.add(
                    &alloc::format!("code.gru{layer}.w{gate}"),
                    &[h, input],
                    glorot(&mut r, h, input),
                );
                p.add(
                    &alloc::format!("code.gru{layer}.u{gate}"),
                    &[h, h],
                    orthogonal(&mut r, h, h),
                );
                p.add(
                    &alloc::format!("code.gru{layer}.b{gate}"),
                    &[h],
                    vec![0.0; h],
                );
            }
        }
        p.add("code.out.w", &[NTOKENS, h], glorot(&mut r, NTOKENS, h));
        p.add("code.out.b", &[NTOKENS], vec![0.0; NTOKENS]);
        CodeModel {
            domain,
            config,
            params: p,
        }
    }

    fn gru_idx(layer: usize) -> GruIdx {
        let b = CODE_GRU[layer];
        GruIdx {
            wz: b,
            uz: b + 1,
            bz: b + 2,
            wr: b + 3,
            ur: b + 4,
            br: b + 5,
            wh: b + 6,
            uh: b + 7,
            bh: b + 8,
        }
    }

    fn gru(&self, t: &mut Tape, layer: usize, x: Var, h: Var) -> Var {
        let g = Self::gru_idx(layer);
        let p = &self.params;
        let gate = |t: &mut Tape, w: usize, u: usize, b: usize, hin: Var| {
            let (w, u, b) = (t.param(p, w), t.param(p, u), t.param(p, b));
            let a = t.matvec(w, x);
            let c = t.matvec(u, hin);
            let s = t.add(a, c);
            t.add(s, b)
        };
        let zs = gate(t, g.wz, g.uz, g.bz, h);
        let z = t.sigmoid(zs);
        let rs = gate(t, g.wr, g.ur, g.br, h);
        let r = t.sigmoid(rs);
        let rh = t.mul(r, h);
        let ns = gate(t, g.wh, g.uh, g.bh, rh);
        let n = t.tanh(ns);
        let keep = t.mul(z, h);
        let omz = t.one_minus(z);
        let fresh = t.mul(omz, n);
        t.add(keep, fresh)
    }

    /// Initial recurrent state.
    fn zero_state(&self, t: &mut Tape) -> [Var; 2] {
        let h = self.config.hidden;
        [t.input(vec![0.0; h]), t.input(vec![0.0; h])]
    }

    /// One decoder step; returns the token logits.
    fn step(&self, t: &mut Tape, state: &mut [Var; 2], prev: usize, point: &DecisionPoint) -> Var {
        let e = self.config.embed;
        let p = &self.params;
        let tables = [t.param(p, 0), t.param(p, 1), t.param(p, 2), t.param(p, 3)];
        let rows = [
            prev,
            point.context.index(),
            (point.budget as usize).min(MAX_BUDGET),
            (point.hole_len as usize).min(MAX_HOLE),
        ];
        let parts: Vec<Var> = tables
            .iter()
            .zip(rows)
            .map(|(&tb, r)| t.row(tb, r, e))
            .collect();
        let x = t.concat(&parts);
        state[0] = self.gru(t, 0, x, state[0]);
        state[1] = self.gru(t, 1, state[0], state[1]);
        let w = t.param(p, CODE_OUT);
        let b = t.param(p, CODE_OUT + 1);
        t.linear(w, b, state[1])
    }

    /// Teacher-forced negative log-likelihood of a decision sequence, and the
    /// number of positions where the model's argmax equals the target.
    pub fn sequence_loss(&self, t: &mut Tape, decisions: &[CodeDecision]) -> (Var, usize) {
        let mut state = self.zero_state(t);
        let mut prev = BOS;
        let mut terms = Vec::with_capacity(decisions.len());
        let mut correct = 0;
        for d in decisions {
            let logits = self.step(t, &mut state, prev, &d.point);
            let vals = t.value(logits);
            let best = (0..NTOKENS)
                .filter(|&i| d.mask[i])
                .fold(None, |acc: Option<usize>, i| match acc {
                    Some(b) if vals[b] >= vals[i] => Some(b),
                    _ => Some(i),
                });
            correct += usize::from(best == Some(d.token));
            let lp = t.log_prob(logits, &d.mask, d.token);
            terms.push(t.scale(lp, -1.0));
            prev = d.token;
        }
        let loss = if terms.is_empty() {
            t.input(vec![0.0])
        } else {
            t.sum(&terms)
        };
        (loss, correct)
    }

    /// A sampling policy backed by this model.
    pub fn policy(&self) -> CodeModelPolicy<'_> {
        CodeModelPolicy {
            model: self,
            tape: Tape::new(),
            state: None,
            prev: BOS,
        }
    }
}

/// Incremental inference over a [`CodeModel`].
pub struct CodeModelPolicy<'a> {
    model: &'a CodeModel,
    tape: Tape,
    state: Option<[Var; 2]>,
    prev: usize,
}

impl CodePolicy for CodeModelPolicy<'_> {
    fn reset(&mut self) {
        self.tape = Tape::new();
        self.state = None;
        self.prev = BOS;
    }

    fn logits(&mut self, point: &DecisionPoint) -> [f64; NTOKENS] {
        let mut state = match self.state {
            Some(s) => s,
            None => self.model.zero_state(&mut self.tape),
        };
        let l = self
            .model
            .step(&mut self.tape, &mut state, self.prev, point);
        self.state = Some(state);
        let mut out = [0.0; NTOKENS];
        out.copy_from_slice(self.tape.value(l));
        out
    }

    fn observe(&mut self, _: &DecisionPoint, token: usize) {
        self.prev = token;
    }
}

/// Every spec obtained by opening a different subset of the exemplar's
/// construct slots, keeping the grid, delta and size of `spec`.
pub fn augmented_specs(spec: &TaskSpec, exemplar: &Ast) -> Vec<TaskSpec> {
    let slots = exemplar.slot_ids();
    let n = slots.len().min(6);
    let mut out = Vec::new();
    for bits in 0u32..(1 << n) {
        let mask: BTreeSet<usize> = (0..n)
            .filter(|i| bits >> i & 1 == 1)
            .map(|i| slots[i])
            .collect();
        if let Ok(sketch) = sketch_of(exemplar, &mask) {
            let mut s = spec.clone();
            s.sketch = sketch;
            if s != *spec {
                out.push(s);
            }
        }
    }
    out
}

/// Imitation learning of the code model from `(spec, exemplar)` pairs.
pub fn train_code_policy(
    data: &[(TaskSpec, Ast)],
    model_config: CodeModelConfig,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochStats, &CodeModel),
) -> Result<CodeModel, TrainError> {
    let first = data.first().ok_or(TrainError::EmptyDataset)?;
    let mut sequences = Vec::new();
    for (i, (spec, code)) in data.iter().enumerate() {
        spec.validate()
            .map_err(|e| TrainError::InvalidSpec(alloc::format!("{e}")))?;
        let d = codegen::decisions_for(spec, code)
            .map_err(|_| TrainError::ExemplarMismatch { index: i })?;
        sequences.push(d);
        if cfg.augment {
            for s in augmented_specs(spec, code) {
                if let Ok(d) = codegen::decisions_for(&s, code) {
                    sequences.push(d);
                }
            }
        }
    }
    sequences.retain(|s| !s.is_empty());
    let mut model = CodeModel::new(first.0.domain, model_config, cfg.seed);
    if sequences.is_empty() {
        return Ok(model);
    }
    let mut opt = Adam::new(&model.params, cfg.lr);
    let mut r = rng::stream(cfg.seed, 2, 0);
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut r);
        let (mut total_loss, mut correct, mut count) = (0.0, 0usize, 0usize);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let mut grads = model.params.zeros_like();
            let mut n = 0usize;
            for &i in batch {
                let mut t = Tape::new();
                let (loss, c) = model.sequence_loss(&mut t, &sequences[i]);
                total_loss += t.scalar(loss);
                correct += c;
                n += sequences[i].len();
                t.backward(loss);
                t.accumulate(&mut grads);
            }
            count += n;
            let k = 1.0 / n.max(1) as f64;
            grads.iter_mut().flatten().for_each(|g| *g *= k);
            opt.step(&mut model.params, &grads, cfg.grad_clip);
        }
        on_epoch(
            &EpochStats {
                epoch,
                loss: total_loss / count.max(1) as f64,
                metric: correct as f64 / count.max(1) as f64,
            },
            &model,
        );
    }
    Ok(model)
}

/// Fraction of teacher-forced positions where the model's argmax is the target.
pub fn code_accuracy(model: &CodeModel, data: &[(TaskSpec, Ast)]) -> Result<f64, CodegenError> {
    let (mut correct, mut total) = (0, 0);
    for (spec, code) in data {
        let d = codegen::decisions_for(spec, code)?;
        let mut t = Tape::new();
        let (_, c) = model.sequence_loss(&mut t, &d);
        correct += c;
        total += d.len();
    }
    Ok(if total == 0 {
        1.0
    } else {
        correct as f64 / total as f64
    })
}

fn shuffle<T, R: Rng + ?Sized>(v: &mut [T], r: &mut R) {
    for i in (1..v.len()).rev() {
        let j = r.gen_range(0..=i);
        v.swap(i, j);
    }
}

// -------------------------------------------------------------- puzzle model

/// Number of grid channels for a domain.
pub fn grid_channels(domain: Domain) -> usize {
    match domain {
        Domain::HocMaze => 12,
        Domain::Karel => 14,
    }
}

/// Number of code-execution features for a domain.
pub fn feature_count(domain: Domain) -> usize {
    match domain {
        Domain::HocMaze => 9,
        Domain::Karel => 12,
    }
}

/// Names of the grid channels, in encoding order.
pub fn channel_map(domain: Domain) -> &'static [&'static str] {
    match domain {
        Domain::HocMaze => &[
            "wall",
            "free",
            "unknown",
            "goal",
            "avatarN",
            "avatarE",
            "avatarS",
            "avatarW",
            "visited",
            "queryCell",
            "preset",
            "inBounds",
        ],
        Domain::Karel => &[
            "wall",
            "free",
            "unknown",
            "marker",
            "postMarker",
            "avatarN",
            "avatarE",
            "avatarS",
            "avatarW",
            "visited",
            "queryCell",
            "preset",
            "inBounds",
            "markerUnknown",
        ],
    }
}

/// Names of the code-execution features, in encoding order.
pub fn feature_map(domain: Domain) -> &'static [&'static str] {
    match domain {
        Domain::HocMaze => &[
            "initPose",
            "cellIsPath",
            "goalNow",
            "coverageIncrease",
            "inLoop",
            "inConditional",
            "steps<10",
            "steps<30",
            "steps>=30",
        ],
        Domain::Karel => &[
            "initPose",
            "cellIsPath",
            "cellMarker",
            "coverageIncrease",
            "inLoop",
            "inConditional",
            "steps<10",
            "steps<30",
            "steps>=30",
            "queryMarkerKnown",
            "queryHasMarker",
            "avatarCellChanged",
        ],
    }
}

/// Encodes the grid of a generation state as `D × side × side` planes.
pub fn encode_grid(state: &SymState, side: usize) -> Vec<f64> {
    let env = &state.env;
    let domain = env.domain;
    let d = grid_channels(domain);
    let g = &env.grid;
    let mut out = vec![0.0; d * side * side];
    let mut set = |ch: usize, r: usize, c: usize, v: f64| {
        if r < side && c < side {
            out[ch * side * side + r * side + c] = v;
        }
    };
    let query = state.pending.and_then(Pending::cell);
    let avatar = env.start.map(|_| env.pose);
    let orient = match domain {
        Domain::HocMaze => 4,
        Domain::Karel => 5,
    };
    for r in 0..g.rows {
        for c in 0..g.cols {
            let i = r * g.cols + c;
            let cell = g.get(r, c);
            match cell {
                Cell::Wall => set(0, r, c, 1.0),
                Cell::Free(_) => set(1, r, c, 1.0),
                Cell::Unknown => set(2, r, c, 1.0),
            }
            match domain {
                Domain::HocMaze => {
                    if env.goal == Some((r, c)) {
                        set(3, r, c, 1.0);
                    }
                }
                Domain::Karel => {
                    if env.marker_known[i] {
                        set(3, r, c, f64::from(env.init.get(r, c).markers()));
                    } else if cell.is_free() {
                        set(13, r, c, 1.0);
                    }
                    set(4, r, c, f64::from(cell.markers()));
                }
            }
            if env.visits[i] > 0 {
                set(orient + 4, r, c, 1.0);
            }
            if env.preset[i] {
                set(orient + 6, r, c, 1.0);
            }
            set(orient + 7, r, c, 1.0);
        }
    }
    if let Some(p) = avatar {
        set(orient + p.dir.index(), p.row, p.col, 1.0);
    }
    if let Some((r, c)) = query {
        set(orient + 5, r, c, 1.0);
    }
    out
}

/// Encodes the code-execution features of a generation state.
pub fn encode_features(state: &SymState) -> Vec<f64> {
    let domain = state.env.domain;
    let mut f = vec![0.0; feature_count(domain)];
    let kind = state.pending.map(Pending::kind);
    let type_slot = match (domain, kind) {
        (_, Some(DecisionType::InitPose)) => Some(0),
        (_, Some(DecisionType::CellIsPath)) => Some(1),
        (Domain::HocMaze, Some(DecisionType::GoalNow)) => Some(2),
        (Domain::Karel, Some(DecisionType::CellMarker)) => Some(2),
        _ => None,
    };
    if let Some(s) = type_slot {
        f[s] = 1.0;
    }
    f[3] = f64::from(u8::from(state.coverage_increase()));
    if let Some(n) = state.pending_node() {
        f[4] = f64::from(u8::from(state.program.in_loop(n)));
        f[5] = f64::from(u8::from(state.program.in_conditional(n)));
    }
    let steps = state.machine.actions;
    f[6 + usize::from(steps >= 10) + usize::from(steps >= 30)] = 1.0;
    if domain == Domain::Karel {
        let env = &state.env;
        if let Some(Pending::Query(Query::CellMarker(r, c))) = state.pending {
            let i = r * env.grid.cols + c;
            f[9] = f64::from(u8::from(env.marker_known[i]));
            f[10] = f64::from(u8::from(env.grid.get(r, c).markers() > 0));
        }
        if env.start.is_some() {
            let (r, c) = env.pose.cell();
            f[11] = f64::from(u8::from(env.grid.get(r, c) != env.init.get(r, c)));
        }
    }
    f
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuzzleModelConfig {
    /// Grid side seen by the encoder; must be a multiple of 8.
    pub side: usize,
    pub conv: [usize; 3],
    pub dense: [usize; 5],
    pub shared: usize,
}

impl Default for PuzzleModelConfig {
    fn default() -> Self {
        PuzzleModelConfig {
            side: 16,
            conv: [8, 16, 16],
            dense: [64, 64, 64, 64, 32],
            shared: 64,
        }
    }
}

/// Convolutional actor-critic over generation states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PuzzleModel {
    pub domain: Domain,
    pub config: PuzzleModelConfig,
    pub params: Params,
}

/// Encoded observation of one decision.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub grid: Vec<f64>,
    pub features: Vec<f64>,
    pub mask: [bool; NDECISIONS],
}

/// A finished episode, ready for the loss.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub observations: Vec<Observation>,
    pub actions: Vec<usize>,
    pub ret: f64,
}

impl PuzzleModel {
    pub fn new(domain: Domain, config: PuzzleModelConfig, seed: u64) -> PuzzleModel {
        assert!(
            config.side.is_multiple_of(8) && config.side > 0,
            "side must be a positive multiple of 8"
        );
        let mut r = rng::stream(seed, 3, 0);
        let mut p = Params::default();
        let mut cin = grid_channels(domain);
        for (i, &cout) in config.conv.iter().enumerate() {
            p.add(
                &alloc::format!("puzzle.conv{i}.w"),
                &[cout, cin, 3, 3],
                glorot(&mut r, cout, cin * 9),
            );
            p.add(
                &alloc::format!("puzzle.conv{i}.b"),
                &[cout],
                vec![0.0; cout],
            );
            cin = cout;
        }
        let pooled = config.side / 8;
        let mut din = cin * pooled * pooled;
        for (i, &dout) in config.dense.iter().enumerate() {
            p.add(
                &alloc::format!("puzzle.dense{i}.w"),
                &[dout, din],
                glorot(&mut r, dout, din),
            );
            p.add(
                &alloc::format!("puzzle.dense{i}.b"),
                &[dout],
                vec![0.0; dout],
            );
            din = dout;
        }
        let sin = din + feature_count(domain);
        p.add(
            "puzzle.shared.w",
            &[config.shared, sin],
            glorot(&mut r, config.shared, sin),
        );
        p.add(
            "puzzle.shared.b",
            &[config.shared],
            vec![0.0; config.shared],
        );
        let mut head = glorot(&mut r, NDECISIONS, config.shared);
        head.iter_mut().for_each(|w| *w *= 0.1);
        p.add("puzzle.actor.w", &[NDECISIONS, config.shared], head);
        p.add("puzzle.actor.b", &[NDECISIONS], vec![0.0; NDECISIONS]);
        p.add(
            "puzzle.critic.w",
            &[1, config.shared],
            glorot(&mut r, 1, config.shared),
        );
        p.add("puzzle.critic.b", &[1], vec![0.0]);
        PuzzleModel {
            domain,
            config,
            params: p,
        }
    }

    pub fn observe(&self, state: &SymState) -> Observation {
        Observation {
            grid: encode_grid(state, self.config.side),
            features: encode_features(state),
            mask: state.legal(),
        }
    }

    /// Actor logits and critic value for one observation.
    pub fn forward(&self, t: &mut Tape, obs: &Observation) -> (Var, Var) {
        let p = &self.params;
        let cfg = &self.config;
        let mut x = t.input(obs.grid.clone());
        let mut cin = grid_channels(self.domain);
        let mut side = cfg.side;
        let mut k = 0;
        for &cout in &cfg.conv {
            let (w, b) = (t.param(p, k), t.param(p, k + 1));
            k += 2;
            let c = t.conv3(w, b, x, cin, side, side);
            let a = t.relu(c);
            x = t.maxpool2(a, cout, side, side);
            side /= 2;
            cin = cout;
        }
        for _ in 0..cfg.dense.len() {
            let (w, b) = (t.param(p, k), t.param(p, k + 1));
            k += 2;
            let h = t.linear(w, b, x);
            x = t.relu(h);
        }
        let f = t.input(obs.features.clone());
        let joined = t.concat(&[x, f]);
        let (w, b) = (t.param(p, k), t.param(p, k + 1));
        let h = t.linear(w, b, joined);
        let shared = t.relu(h);
        let (aw, ab) = (t.param(p, k + 2), t.param(p, k + 3));
        let logits = t.linear(aw, ab, shared);
        let (cw, cb) = (t.param(p, k + 4), t.param(p, k + 5));
        let value = t.linear(cw, cb, shared);
        (logits, value)
    }

    /// Actor and critic losses summed over `episodes`. The advantage of each
    /// step is treated as a constant: either the one computed from the current
    /// critic, or `fixed_advantages` when given.
    pub fn losses(
        &self,
        t: &mut Tape,
        episodes: &[EpisodeRecord],
        temperature: f64,
        fixed_advantages: Option<&[Vec<f64>]>,
    ) -> (Var, Var, Vec<Vec<f64>>) {
        let mut actor = Vec::new();
        let mut critic = Vec::new();
        let mut advantages = Vec::with_capacity(episodes.len());
        for (ei, ep) in episodes.iter().enumerate() {
            let mut advs = Vec::with_capacity(ep.actions.len());
            for (si, (obs, &a)) in ep.observations.iter().zip(&ep.actions).enumerate() {
                let (logits, value) = self.forward(t, obs);
                let scaled = t.scale(logits, 1.0 / temperature);
                let lp = t.log_prob(scaled, &obs.mask, a);
                let adv = match fixed_advantages {
                    Some(f) => f[ei][si],
                    None => ep.ret - t.scalar(value),
                };
                advs.push(adv);
                actor.push(t.scale(lp, -adv));
                critic.push(t.smooth_l1(value, ep.ret));
            }
            advantages.push(advs);
        }
        let zero = t.input(vec![0.0]);
        let a = if actor.is_empty() {
            zero
        } else {
            t.sum(&actor)
        };
        let c = if critic.is_empty() {
            zero
        } else {
            t.sum(&critic)
        };
        (a, c, advantages)
    }

    /// A sampling policy backed by this model.
    pub fn policy(&self, temperature: f64) -> PuzzleModelPolicy<'_> {
        PuzzleModelPolicy {
            model: self,
            temperature,
        }
    }
}

pub struct PuzzleModelPolicy<'a> {
    model: &'a PuzzleModel,
    temperature: f64,
}

impl PuzzlePolicy for PuzzleModelPolicy<'_> {
    fn logits(&mut self, state: &SymState) -> [f64; NDECISIONS] {
        let mut t = Tape::new();
        let (l, _) = self.model.forward(&mut t, &self.model.observe(state));
        let mut out = [0.0; NDECISIONS];
        for (o, v) in out.iter_mut().zip(t.value(l)) {
            *o = v / self.temperature;
        }
        out
    }

    fn value(&mut self, state: &SymState) -> f64 {
        let mut t = Tape::new();
        let (_, v) = self.model.forward(&mut t, &self.model.observe(state));
        t.scalar(v)
    }
}

/// A code to practise on, with its spec and its oracle score.
#[derive(Clone, Debug, PartialEq)]
pub struct PuzzleTrainItem {
    pub code: Ast,
    pub spec: TaskSpec,
    pub oracle_score: f64,
}

/// Plays one episode under `model`, recording observations and the raw reward.
pub fn play_episode<R: Rng + ?Sized>(
    model: &PuzzleModel,
    item: &PuzzleTrainItem,
    temperature: f64,
    r: &mut R,
) -> (EpisodeRecord, f64) {
    let mut state = SymState::new(&item.code, &item.spec);
    let mut observations = Vec::new();
    let mut actions = Vec::new();
    let mut steps = Vec::new();
    while let Some(p) = state.pending {
        let obs = model.observe(&state);
        let mut t = Tape::new();
        let (l, _) = model.forward(&mut t, &obs);
        let logits: Vec<f64> = t.value(l).iter().map(|v| v / temperature).collect();
        let a = codegen::sample_masked(&logits, &obs.mask, r)
            .expect("pending states have legal decisions");
        observations.push(obs);
        actions.push(a);
        steps.push(symexec::EpisodeStep {
            kind: p.kind(),
            decision: a,
        });
        state.apply(a).expect("sampled decisions are legal");
    }
    let ep = symexec::finish(&item.code, &item.spec, &state, steps);
    (
        EpisodeRecord {
            observations,
            actions,
            ret: 0.0,
        },
        ep.reward,
    )
}

/// Curriculum reward: the raw reward when it clears `lambda` times the oracle
/// score, else zero.
pub fn curriculum_reward(raw: f64, oracle: f64, lambda: f64) -> f64 {
    if raw > lambda * oracle {
        raw
    } else {
        0.0
    }
}

/// Actor-critic training of the puzzle model on a fixed set of codes.
///
/// Each epoch plays one episode per item; parameters change only once a
/// buffer of `batch_size` episodes is full.
pub fn train_puzzle_policy(
    items: &[PuzzleTrainItem],
    model_config: PuzzleModelConfig,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochStats, &PuzzleModel),
) -> Result<PuzzleModel, TrainError> {
    let items: Vec<&PuzzleTrainItem> = items.iter().filter(|i| i.oracle_score > 0.0).collect();
    let first = items.first().ok_or(TrainError::NoValidCodes)?;
    let mut model = PuzzleModel::new(first.code.domain, model_config, cfg.seed);
    let mut opt = Adam::new(&model.params, cfg.lr);
    let mut r = rng::stream(cfg.seed, 4, 0);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let total_episodes = (cfg.epochs * items.len()).max(1);
    let mut played = 0usize;
    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut r);
        let (mut sum_loss, mut sum_reward) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let lambda = cfg.lambda(played as f64 / total_episodes as f64);
            let mut buffer = Vec::with_capacity(batch.len());
            for &i in batch {
                let item = items[i];
                let (mut rec, raw) = play_episode(&model, item, cfg.temperature, &mut r);
                rec.ret = curriculum_reward(raw, item.oracle_score, lambda);
                sum_reward += raw;
                buffer.push(rec);
            }
            played += batch.len();
            let mut t = Tape::new();
            let (a, c, _) = model.losses(&mut t, &buffer, cfg.temperature, None);
            let loss = t.sum(&[a, c]);
            sum_loss += t.scalar(loss);
            t.backward(loss);
            let mut grads = model.params.zeros_like();
            t.accumulate(&mut grads);
            let k = 1.0 / buffer.len() as f64;
            grads.iter_mut().flatten().for_each(|g| *g *= k);
            opt.step(&mut model.params, &grads, cfg.grad_clip);
        }
        on_epoch(
            &EpochStats {
                epoch,
                loss: sum_loss / items.len() as f64,
                metric: sum_reward / items.len() as f64,
            },
            &model,
        );
    }
    Ok(model)
}

// ------------------------------------------------------------ gradient check

/// Outcome of one finite-difference comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub imitation: f64,
    pub actor: f64,
    pub critic: f64,
}

impl GradCheck {
    pub fn max(&self) -> f64 {
        self.imitation.max(self.actor).max(self.critic)
    }
}

/// Tiny code model for gradient checks.
pub fn mini_code_config() -> CodeModelConfig {
    CodeModelConfig {
        embed: 3,
        hidden: 4,
    }
}

/// Tiny puzzle model for gradient checks: an 8×8 encoder with narrow layers.
pub fn mini_puzzle_config() -> PuzzleModelConfig {
    PuzzleModelConfig {
        side: 8,
        conv: [2, 2, 2],
        dense: [4, 4, 4, 4, 3],
        shared: 4,
    }
}

fn analytic(params: &Params, t: &mut Tape, loss: Var) -> Vec<f64> {
    t.backward(loss);
    let mut acc = params.zeros_like();
    t.accumulate(&mut acc);
    acc.into_iter().flatten().collect()
}

/// Moves every parameter by a small normal offset. Fresh models have zero
/// biases, which puts ReLU inputs exactly on the kink for constant patches.
fn jitter(params: &mut Params, seed: u64) {
    let mut r = rng::stream(seed, 9, 0);
    let flat: Vec<f64> = params
        .flat()
        .into_iter()
        .map(|w| w + 0.1 * crate::nn::normal(&mut r))
        .collect();
    params.set_flat(&flat);
}

/// Compares analytic and central-difference gradients of the imitation loss
/// and of the actor and critic losses at a random parameter point.
pub fn gradient_check(
    code_data: &[CodeDecision],
    episodes: &[EpisodeRecord],
    domain: Domain,
    seed: u64,
    eps: f64,
) -> GradCheck {
    let mut code = CodeModel::new(domain, mini_code_config(), seed);
    jitter(&mut code.params, seed);
    let mut t = Tape::new();
    let (loss, _) = code.sequence_loss(&mut t, code_data);
    let a = analytic(&code.params, &mut t, loss);
    let model = code.clone();
    let n = crate::nn::numeric_grad(&mut code.params, eps, &mut |p| {
        let m = CodeModel {
            params: p.clone(),
            ..model.clone()
        };
        let mut t = Tape::new();
        let (l, _) = m.sequence_loss(&mut t, code_data);
        t.scalar(l)
    });
    let imitation = crate::nn::relative_error(&a, &n);

    let mut puzzle = PuzzleModel::new(domain, mini_puzzle_config(), seed);
    jitter(&mut puzzle.params, seed ^ 1);
    let mut t = Tape::new();
    let (al, _, advs) = puzzle.losses(&mut t, episodes, 1.0, None);
    let ga = analytic(&puzzle.params, &mut t, al);
    let mut t = Tape::new();
    let (_, cl, _) = puzzle.losses(&mut t, episodes, 1.0, None);
    let gc = analytic(&puzzle.params, &mut t, cl);
    let base = puzzle.clone();
    let na = crate::nn::numeric_grad(&mut puzzle.params, eps, &mut |p| {
        let m = PuzzleModel {
            params: p.clone(),
            ..base.clone()
        };
        let mut t = Tape::new();
        let (a, _, _) = m.losses(&mut t, episodes, 1.0, Some(&advs));
        t.scalar(a)
    });
    let nc = crate::nn::numeric_grad(&mut puzzle.params, eps, &mut |p| {
        let m = PuzzleModel {
            params: p.clone(),
            ..base.clone()
        };
        let mut t = Tape::new();
        let (_, c, _) = m.losses(&mut t, episodes, 1.0, Some(&advs));
        t.scalar(c)
    });
    GradCheck {
        imitation,
        actor: crate::nn::relative_error(&ga, &na),
        critic: crate::nn::relative_error(&gc, &nc),
    }
}

/// Random episodes for gradient checks, played by a uniform policy on the
/// 8×8 encoder of a mini model. Returns are drawn in `[0, 2]` so both branches
/// of the smooth-L1 critic are exercised.
pub fn random_episodes(code: &Ast, spec: &TaskSpec, count: usize, seed: u64) -> Vec<EpisodeRecord> {
    let model = PuzzleModel::new(code.domain, mini_puzzle_config(), seed);
    let mut r = rng::stream(seed, 5, 0);
    (0..count)
        .map(|_| {
            let mut state = SymState::new(code, spec);
            let mut observations = Vec::new();
            let mut actions = Vec::new();
            while state.pending.is_some() {
                let obs = model.observe(&state);
                let a = codegen::sample_masked(&[0.0; NDECISIONS], &obs.mask, &mut r)
                    .expect("legal decision");
                observations.push(obs);
                actions.push(a);
                state.apply(a).expect("legal decision");
            }
            EpisodeRecord {
                observations,
                actions,
                ret: r.gen_range(0.0..2.0),
            }
        })
        .collect()
}

/// Mean softmax mass over legal decisions; 1 up to rounding for any state.
pub fn legal_mass(logits: &[f64], mask: &[bool]) -> f64 {
    math::masked_softmax(logits, mask).iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::Sketch;

    fn spec(text: &str, domain: Domain, size: u32) -> TaskSpec {
        TaskSpec::new(Sketch::parse(text, domain).unwrap(), size)
    }

    #[test]
    fn dimensions_match_maps() {
        for d in [Domain::HocMaze, Domain::Karel] {
            assert_eq!(channel_map(d).len(), grid_channels(d));
            assert_eq!(feature_map(d).len(), feature_count(d));
        }
        let code = Ast::parse("def Run(){RepeatUntil(goal){move}}", Domain::HocMaze).unwrap();
        let s = spec("def Run(){a; RepeatUntil(goal){a}; a}", Domain::HocMaze, 5);
        let st = SymState::new(&code, &s);
        let m = PuzzleModel::new(Domain::HocMaze, PuzzleModelConfig::default(), 0);
        let o = m.observe(&st);
        assert_eq!(o.grid.len(), 12 * 16 * 16);
        assert_eq!(o.features.len(), 9);
        let mut t = Tape::new();
        let (l, v) = m.forward(&mut t, &o);
        assert_eq!(t.value(l).len(), NDECISIONS);
        assert!(t.scalar(v).is_finite());
        assert!((legal_mass(t.value(l), &o.mask) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn code_gradients_and_puzzle_gradients_agree() {
        let code = Ast::parse(
            "def Run(){move; RepeatUntil(goal){If(pathLeft){turnLeft}; move}}",
            Domain::HocMaze,
        )
        .unwrap();
        let s = spec(
            "def Run(){a; RepeatUntil(goal){a; If(b){a}; a}; a}",
            Domain::HocMaze,
            8,
        );
        let d = codegen::decisions_for(&s, &code).unwrap();
        let mut small = TaskSpec::new(s.sketch.clone(), 8);
        small.puzzle = crate::world::Grid::unknown(8, 8);
        let eps = random_episodes(&code, &small, 2, 3);
        let g = gradient_check(&d, &eps, Domain::HocMaze, 11, 1e-6);
        assert!(g.max() < 1e-4, "{g:?}");
    }

    #[test]
    fn overfits_a_single_exemplar() {
        let code = Ast::parse(
            "def Run(){move; RepeatUntil(goal){If(pathLeft){turnLeft}; move}}",
            Domain::HocMaze,
        )
        .unwrap();
        let s = spec(
            "def Run(){a; RepeatUntil(goal){a; If(b){a}; a}; a}",
            Domain::HocMaze,
            8,
        );
        let cfg = TrainConfig {
            epochs: 150,
            batch_size: 1,
            lr: 5e-3,
            ..TrainConfig::default()
        };
        let m = train_code_policy(
            &[(s.clone(), code.clone())],
            CodeModelConfig::default(),
            &cfg,
            &mut |_, _| {},
        )
        .unwrap();
        assert!(code_accuracy(&m, &[(s.clone(), code.clone())]).unwrap() > 0.99);
        let mut pol = m.policy();
        let mut r = rng::seeded(0);
        let g = codegen::generate_code(&s, &mut pol, &mut r).unwrap();
        assert_eq!(g.code, code);
    }

    #[test]
    fn empty_training_sets_are_rejected() {
        let cfg = TrainConfig::default();
        assert_eq!(
            train_code_policy(&[], CodeModelConfig::default(), &cfg, &mut |_, _| {}).unwrap_err(),
            TrainError::EmptyDataset
        );
        assert_eq!(
            train_puzzle_policy(&[], PuzzleModelConfig::default(), &cfg, &mut |_, _| {})
                .unwrap_err(),
            TrainError::NoValidCodes
        );
    }

    #[test]
    fn curriculum_is_monotone() {
        let cfg = TrainConfig::default();
        let mut last = 0.0;
        for i in 0..=10 {
            let l = cfg.lambda(i as f64 / 10.0);
            assert!((0.8..=0.9).contains(&l) && l >= last);
            last = l;
        }
        assert_eq!(curriculum_reward(0.7, 0.8, 0.9), 0.0);
        assert_eq!(curriculum_reward(0.75, 0.8, 0.9), 0.75);
    }
}
