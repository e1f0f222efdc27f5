//! A small reverse-mode autodiff tape over `f64` vectors, with the layers the
//! two policy models use and an Adam optimizer.
//!
//! Tensors are flat `Vec<f64>`; shapes live with the caller. Convolutions use
//! channel-major (`C×H×W`) layout, 3×3 kernels and zero padding 1.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;

/// A named trainable tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub tensors: Vec<Tensor>,
}

impl Params {
    pub fn add(&mut self, name: &str, shape: &[usize], data: Vec<f64>) -> usize {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(Tensor {
            name: name.into(),
            shape: shape.to_vec(),
            data,
        });
        self.tensors.len() - 1
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| vec![0.0; t.len()]).collect()
    }

    /// Flat view of every parameter, in tensor order.
    pub fn flat(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut i = 0;
        for t in &mut self.tensors {
            let n = t.data.len();
            t.data.copy_from_slice(&flat[i..i + n]);
            i += n;
        }
    }
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    math::sqrt(-2.0 * math::ln(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

/// Uniform Glorot initialization for a `fan_out × fan_in` matrix.
pub fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_out: usize, fan_in: usize) -> Vec<f64> {
    let a = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    (0..fan_out * fan_in)
        .map(|_| rng.gen_range(-a..a))
        .collect()
}

/// A `n × m` matrix with orthonormal rows (or columns, when `n > m`).
pub fn orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Vec<f64> {
    let (rows, cols) = if n <= m { (n, m) } else { (m, n) };
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(rows);
    while q.len() < rows {
        let mut v: Vec<f64> = (0..cols).map(|_| normal(rng)).collect();
        for u in &q {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= d * ui;
            }
        }
        let norm = math::sqrt(v.iter().map(|x| x * x).sum());
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            q.push(v);
        }
    }
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[i * m + j] = if n <= m { q[i][j] } else { q[j][i] };
        }
    }
    out
}

pub type Var = usize;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param,
    MatVec {
        w: Var,
        x: Var,
        rows: usize,
        cols: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Row {
        table: Var,
        row: usize,
    },
    Conv {
        w: Var,
        b: Var,
        x: Var,
        cin: usize,
        cout: usize,
        h: usize,
        wd: usize,
    },
    MaxPool {
        x: Var,
        arg: Vec<usize>,
    },
    LogProb {
        logits: Var,
        probs: Vec<f64>,
        target: usize,
    },
    SmoothL1 {
        x: Var,
        target: f64,
    },
    Sum(Vec<Var>),
    Index(Var, usize),
}

/// Records a computation for one backward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    vals: Vec<Vec<f64>>,
    ops: Vec<Op>,
    grads: Vec<Vec<f64>>,
    params: Vec<Option<Var>>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    fn push(&mut self, v: Vec<f64>, op: Op) -> Var {
        self.vals.push(v);
        self.ops.push(op);
        self.vals.len() - 1
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.vals[v]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.vals[v][0]
    }

    pub fn input(&mut self, v: Vec<f64>) -> Var {
        self.push(v, Op::Leaf)
    }

    /// Parameter tensor `i`, loaded once per tape.
    pub fn param(&mut self, params: &Params, i: usize) -> Var {
        if self.params.len() <= i {
            self.params.resize(params.tensors.len().max(i + 1), None);
        }
        if let Some(v) = self.params[i] {
            return v;
        }
        let v = self.push(params.tensors[i].data.clone(), Op::Param);
        self.params[i] = Some(v);
        v
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        let cols = self.vals[x].len();
        let rows = self.vals[w].len() / cols;
        debug_assert_eq!(rows * cols, self.vals[w].len());
        let (wv, xv) = (&self.vals[w], &self.vals[x]);
        let out = (0..rows)
            .map(|r| {
                wv[r * cols..(r + 1) * cols]
                    .iter()
                    .zip(xv)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        self.push(out, Op::MatVec { w, x, rows, cols })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.vals[a]
            .iter()
            .zip(&self.vals[b])
            .map(|(x, y)| x + y)
            .collect();
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.vals[a]
            .iter()
            .zip(&self.vals[b])
            .map(|(x, y)| x - y)
            .collect();
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.vals[a]
            .iter()
            .zip(&self.vals[b])
            .map(|(x, y)| x * y)
            .collect();
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.vals[a].iter().map(|x| x * k).collect();
        self.push(out, Op::Scale(a, k))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.vals[a].iter().map(|x| 1.0 - x).collect();
        self.push(out, Op::OneMinus(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.vals[a].iter().map(|&x| math::tanh(x)).collect();
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.vals[a].iter().map(|&x| math::sigmoid(x)).collect();
        self.push(out, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.vals[a].iter().map(|&x| x.max(0.0)).collect();
        self.push(out, Op::Relu(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let out = parts
            .iter()
            .flat_map(|&p| self.vals[p].iter().copied())
            .collect();
        self.push(out, Op::Concat(parts.to_vec()))
    }

    /// Row `row` of a `rows × width` table.
    pub fn row(&mut self, table: Var, row: usize, width: usize) -> Var {
        let out = self.vals[table][row * width..(row + 1) * width].to_vec();
        self.push(out, Op::Row { table, row })
    }

    pub fn index(&mut self, a: Var, i: usize) -> Var {
        let out = vec![self.vals[a][i]];
        self.push(out, Op::Index(a, i))
    }

    pub fn linear(&mut self, w: Var, b: Var, x: Var) -> Var {
        let m = self.matvec(w, x);
        self.add(m, b)
    }

    /// 3×3 convolution, stride 1, zero padding 1.
    pub fn conv3(&mut self, w: Var, b: Var, x: Var, cin: usize, h: usize, wd: usize) -> Var {
        let cout = self.vals[b].len();
        let (wv, bv, xv) = (&self.vals[w], &self.vals[b], &self.vals[x]);
        let mut out = vec![0.0; cout * h * wd];
        for o in 0..cout {
            let plane = &mut out[o * h * wd..(o + 1) * h * wd];
            plane.iter_mut().for_each(|v| *v = bv[o]);
            for i in 0..cin {
                let xin = &xv[i * h * wd..(i + 1) * h * wd];
                let k = &wv[(o * cin + i) * 9..(o * cin + i + 1) * 9];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let kw = k[ky * 3 + kx];
                        if kw == 0.0 {
                            continue;
                        }
                        for y in 0..h {
                            let sy = y as isize + ky as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let srow = &xin[sy as usize * wd..(sy as usize + 1) * wd];
                            let orow = &mut plane[y * wd..(y + 1) * wd];
                            let (lo, hi) = (usize::from(kx == 0), wd - usize::from(kx == 2));
                            for xx in lo..hi {
                                orow[xx] += kw * srow[xx + kx - 1];
                            }
                        }
                    }
                }
            }
        }
        self.push(
            out,
            Op::Conv {
                w,
                b,
                x,
                cin,
                cout,
                h,
                wd,
            },
        )
    }

    /// 2×2 max pooling with stride 2 over a `c×h×w` input.
    pub fn maxpool2(&mut self, x: Var, c: usize, h: usize, wd: usize) -> Var {
        let (oh, ow) = (h / 2, wd / 2);
        let xv = &self.vals[x];
        let mut out = vec![0.0; c * oh * ow];
        let mut arg = vec![0usize; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut bi = 0;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let i = ch * h * wd + (2 * y + dy) * wd + 2 * xx + dx;
                        if xv[i] > best {
                            best = xv[i];
                            bi = i;
                        }
                    }
                    let o = ch * oh * ow + y * ow + xx;
                    out[o] = best;
                    arg[o] = bi;
                }
            }
        }
        self.push(out, Op::MaxPool { x, arg })
    }

    /// `log p(target)` under the softmax of `logits` restricted to `mask`.
    pub fn log_prob(&mut self, logits: Var, mask: &[bool], target: usize) -> Var {
        let probs = math::masked_softmax(&self.vals[logits], mask);
        let lse = math::masked_logsumexp(&self.vals[logits], mask);
        let out = vec![self.vals[logits][target] - lse];
        self.push(
            out,
            Op::LogProb {
                logits,
                probs,
                target,
            },
        )
    }

    pub fn smooth_l1(&mut self, x: Var, target: f64) -> Var {
        let d = self.vals[x][0] - target;
        let v = if d.abs() < 1.0 {
            0.5 * d * d
        } else {
            d.abs() - 0.5
        };
        self.push(vec![v], Op::SmoothL1 { x, target })
    }

    pub fn sum(&mut self, parts: &[Var]) -> Var {
        let n = parts.first().map(|&p| self.vals[p].len()).unwrap_or(1);
        let mut out = vec![0.0; n];
        for &p in parts {
            for (o, v) in out.iter_mut().zip(&self.vals[p]) {
                *o += v;
            }
        }
        self.push(out, Op::Sum(parts.to_vec()))
    }

    /// Back-propagates from scalar `loss`.
    // index loops mirror the forward formulas
    #[allow(clippy::needless_range_loop)]
    pub fn backward(&mut self, loss: Var) {
        self.grads = self.vals.iter().map(|v| vec![0.0; v.len()]).collect();
        self.grads[loss][0] = 1.0;
        for n in (0..=loss).rev() {
            if self.grads[n].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = core::mem::take(&mut self.grads[n]);
            match &self.ops[n] {
                Op::Leaf | Op::Param => {}
                Op::MatVec { w, x, rows, cols } => {
                    let (w, x, rows, cols) = (*w, *x, *rows, *cols);
                    for r in 0..rows {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        for c in 0..cols {
                            self.grads[w][r * cols + c] += gr * self.vals[x][c];
                            self.grads[x][c] += gr * self.vals[w][r * cols + c];
                        }
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    add_into(&mut self.grads[a], &g);
                    add_into(&mut self.grads[b], &g);
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    add_into(&mut self.grads[a], &g);
                    for (o, v) in self.grads[b].iter_mut().zip(&g) {
                        *o -= v;
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    for i in 0..g.len() {
                        let (va, vb) = (self.vals[a][i], self.vals[b][i]);
                        self.grads[a][i] += g[i] * vb;
                        self.grads[b][i] += g[i] * va;
                    }
                }
                Op::Scale(a, k) => {
                    let (a, k) = (*a, *k);
                    for (o, v) in self.grads[a].iter_mut().zip(&g) {
                        *o += k * v;
                    }
                }
                Op::OneMinus(a) => {
                    let a = *a;
                    for (o, v) in self.grads[a].iter_mut().zip(&g) {
                        *o -= v;
                    }
                }
                Op::Tanh(a) => {
                    let a = *a;
                    for i in 0..g.len() {
                        let y = self.vals[n][i];
                        self.grads[a][i] += g[i] * (1.0 - y * y);
                    }
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    for i in 0..g.len() {
                        let y = self.vals[n][i];
                        self.grads[a][i] += g[i] * y * (1.0 - y);
                    }
                }
                Op::Relu(a) => {
                    let a = *a;
                    for i in 0..g.len() {
                        if self.vals[a][i] > 0.0 {
                            self.grads[a][i] += g[i];
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts.clone().iter() {
                        let len = self.vals[p].len();
                        add_into(&mut self.grads[p], &g[off..off + len]);
                        off += len;
                    }
                }
                Op::Row { table, row } => {
                    let (t, r) = (*table, *row);
                    let w = g.len();
                    add_into(&mut self.grads[t][r * w..(r + 1) * w], &g);
                }
                Op::Index(a, i) => {
                    let (a, i) = (*a, *i);
                    self.grads[a][i] += g[0];
                }
                Op::Conv {
                    w,
                    b,
                    x,
                    cin,
                    cout,
                    h,
                    wd,
                } => {
                    let (w, b, x, cin, cout, h, wd) = (*w, *b, *x, *cin, *cout, *h, *wd);
                    for o in 0..cout {
                        let go = &g[o * h * wd..(o + 1) * h * wd];
                        self.grads[b][o] += go.iter().sum::<f64>();
                        for i in 0..cin {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let wi = (o * cin + i) * 9 + ky * 3 + kx;
                                    let kw = self.vals[w][wi];
                                    let mut gw = 0.0;
                                    for y in 0..h {
                                        let sy = y as isize + ky as isize - 1;
                                        if sy < 0 || sy >= h as isize {
                                            continue;
                                        }
                                        let sy = sy as usize;
                                        let (lo, hi) =
                                            (usize::from(kx == 0), wd - usize::from(kx == 2));
                                        for xx in lo..hi {
                                            let si = i * h * wd + sy * wd + xx + kx - 1;
                                            let gv = go[y * wd + xx];
                                            gw += gv * self.vals[x][si];
                                            self.grads[x][si] += gv * kw;
                                        }
                                    }
                                    self.grads[w][wi] += gw;
                                }
                            }
                        }
                    }
                }
                Op::MaxPool { x, arg } => {
                    let x = *x;
                    for (o, &i) in arg.clone().iter().enumerate() {
                        self.grads[x][i] += g[o];
                    }
                }
                Op::LogProb {
                    logits,
                    probs,
                    target,
                } => {
                    let (l, t) = (*logits, *target);
                    for (i, p) in probs.clone().iter().enumerate() {
                        self.grads[l][i] += g[0] * (f64::from(u8::from(i == t)) - p);
                    }
                    // masked-out entries have p = 0 and i != t, so they get nothing
                }
                Op::SmoothL1 { x, target } => {
                    let (x, t) = (*x, *target);
                    let d = self.vals[x][0] - t;
                    self.grads[x][0] += g[0] * if d.abs() < 1.0 { d } else { d.signum() };
                }
                Op::Sum(parts) => {
                    for &p in parts.clone().iter() {
                        add_into(&mut self.grads[p], &g);
                    }
                }
            }
            self.grads[n] = g;
        }
    }

    /// Adds parameter gradients into `acc` (shaped like the parameter list).
    pub fn accumulate(&self, acc: &mut [Vec<f64>]) {
        for (i, v) in self.params.iter().enumerate() {
            if let Some(v) = v {
                if let Some(g) = self.grads.get(*v) {
                    add_into(&mut acc[i], g);
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Adam with the usual defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &Params, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &[Vec<f64>], clip: Option<f64>) {
        let scale = match clip {
            Some(c) => {
                let norm = math::sqrt(grads.iter().flatten().map(|g| g * g).sum());
                if norm > c {
                    c / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for (ti, t) in params.tensors.iter_mut().enumerate() {
            for (j, p) in t.data.iter_mut().enumerate() {
                let g = grads[ti][j] * scale;
                let m = &mut self.m[ti][j];
                let v = &mut self.v[ti][j];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= self.lr * (*m / bc1) / (math::sqrt(*v / bc2) + self.eps);
            }
        }
    }
}

/// Relative error between two gradient vectors: `‖a − b‖ / max(‖a‖, ‖b‖)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum());
    let na = math::sqrt(a.iter().map(|x| x * x).sum());
    let nb = math::sqrt(b.iter().map(|x| x * x).sum());
    let denom = na.max(nb);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

/// Central finite-difference gradient of `f` at the parameters' current values.
pub fn numeric_grad(params: &mut Params, eps: f64, f: &mut dyn FnMut(&Params) -> f64) -> Vec<f64> {
    let base = params.flat();
    let mut out = vec![0.0; base.len()];
    let mut work = base.clone();
    for i in 0..base.len() {
        work[i] = base[i] + eps;
        params.set_flat(&work);
        let up = f(params);
        work[i] = base[i] - eps;
        params.set_flat(&work);
        let down = f(params);
        work[i] = base[i];
        out[i] = (up - down) / (2.0 * eps);
    }
    params.set_flat(&base);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn check(params: &mut Params, f: &dyn Fn(&Params, &mut Tape) -> Var) {
        let mut tape = Tape::new();
        let loss = f(params, &mut tape);
        tape.backward(loss);
        let mut acc = params.zeros_like();
        tape.accumulate(&mut acc);
        let analytic: Vec<f64> = acc.into_iter().flatten().collect();
        let numeric = numeric_grad(params, 1e-6, &mut |p| {
            let mut t = Tape::new();
            let l = f(p, &mut t);
            t.scalar(l)
        });
        let err = relative_error(&analytic, &numeric);
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn dense_ops_gradients() {
        let mut r = rng::seeded(5);
        let mut p = Params::default();
        p.add("w", &[3, 4], glorot(&mut r, 3, 4));
        p.add("b", &[3], (0..3).map(|_| normal(&mut r)).collect());
        p.add("e", &[2, 4], (0..8).map(|_| normal(&mut r)).collect());
        check(&mut p, &|p, t| {
            let w = t.param(p, 0);
            let b = t.param(p, 1);
            let e = t.param(p, 2);
            let x = t.row(e, 1, 4);
            let h = t.linear(w, b, x);
            let s = t.sigmoid(h);
            let th = t.tanh(h);
            let m = t.mul(s, th);
            let om = t.one_minus(s);
            let z = t.sub(m, om);
            let c = t.concat(&[z, s]);
            let i = t.index(c, 4);
            let lp = t.log_prob(c, &[true, false, true, true, true, true], 2);
            let l1 = t.smooth_l1(i, 0.3);
            let sc = t.scale(lp, -1.0);
            t.sum(&[sc, l1])
        });
    }

    #[test]
    fn conv_pool_gradients() {
        let mut r = rng::seeded(9);
        let mut p = Params::default();
        p.add(
            "k",
            &[2, 2, 3, 3],
            (0..36).map(|_| normal(&mut r) * 0.5).collect(),
        );
        p.add("kb", &[2], vec![0.1, -0.2]);
        p.add("x", &[2, 4, 4], (0..32).map(|_| normal(&mut r)).collect());
        p.add("w", &[1, 8], (0..8).map(|_| normal(&mut r)).collect());
        check(&mut p, &|p, t| {
            let k = t.param(p, 0);
            let kb = t.param(p, 1);
            let x = t.param(p, 2);
            let w = t.param(p, 3);
            let c = t.conv3(k, kb, x, 2, 4, 4);
            let a = t.tanh(c);
            let m = t.maxpool2(a, 2, 4, 4);
            let o = t.matvec(w, m);
            t.smooth_l1(o, 0.5)
        });
    }

    #[test]
    fn orthogonal_rows() {
        let mut r = rng::seeded(1);
        let q = orthogonal(&mut r, 4, 4);
        for i in 0..4 {
            for j in 0..4 {
                let d: f64 = (0..4).map(|k| q[i * 4 + k] * q[j * 4 + k]).sum();
                assert!((d - f64::from(u8::from(i == j))).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn adam_descends() {
        let mut p = Params::default();
        p.add("x", &[1], vec![3.0]);
        let mut opt = Adam::new(&p, 0.1);
        for _ in 0..300 {
            let x = p.tensors[0].data[0];
            opt.step(&mut p, &[vec![2.0 * x]], None);
        }
        assert!(p.tensors[0].data[0].abs() < 0.05);
    }
}
