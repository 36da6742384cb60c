//! Multilayer perceptron `Q(s, ·)` with tanh hidden layers and a sigmoid
//! output per action, plus exact input derivatives.
//!
//! Parameters live in one flat vector θ. For each layer in order, the weight
//! matrix is stored row-major as `[fan_out][fan_in]`, followed by its
//! `fan_out` biases.
//!
//! Raw inputs `[h, features]` are mapped to `z = (input - center) ⊙ scale`
//! before the first layer, where `scale` comes from declared ranges. Every
//! derivative reported here is with respect to the raw input.
//!
//! Input derivatives are propagated as second-order jets: for a direction `v`
//! the tape carries `(x, ẋ, ẍ)` with `ẋ = ∂x·v` and `ẍ = vᵀ∂²x v` at every layer.
//! A reverse sweep over the tape differentiates any linear combination of the
//! jet outputs with respect to θ and the input, which gives gradients,
//! Hessian-vector products and the parameter gradient of the PDE residual
//! from a single routine.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::StreamRng;

pub const CHECKPOINT_FORMAT: &str = "pirl-qnet";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum QnetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_dim: usize,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_layers: 3,
            hidden_width: 32,
            output_dim,
        }
    }

    pub fn validate(&self) -> Result<(), QnetError> {
        if self.input_dim == 0 || self.output_dim == 0 || (self.hidden_layers > 0 && self.hidden_width == 0) {
            return Err(QnetError::Spec(format!("all dimensions must be >= 1: {self:?}")));
        }
        Ok(())
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(std::iter::repeat(self.hidden_width).take(self.hidden_layers));
        w.push(self.output_dim);
        w
    }

    pub fn num_params(&self) -> usize {
        self.widths().windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }
}

/// Affine input map `z = (input - center) ⊙ scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputScaling {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScaling {
    pub fn identity(dim: usize) -> Self {
        Self {
            center: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// `h ↦ h / τ_max` and each feature range `[lo, hi]` onto `[-1, 1]`.
    /// Degenerate ranges are only centered.
    pub fn from_ranges(tau_max: f64, ranges: &[(f64, f64)]) -> Self {
        let mut center = vec![0.0];
        let mut scale = vec![if tau_max > 0.0 { 1.0 / tau_max } else { 1.0 }];
        for &(lo, hi) in ranges {
            center.push(0.5 * (lo + hi));
            let half = 0.5 * (hi - lo);
            scale.push(if half > 0.0 { 1.0 / half } else { 1.0 });
        }
        Self { center, scale }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub spec: NetworkSpec,
    pub scaling: InputScaling,
    /// Names of the raw inputs, `h` first; checked against environments.
    pub input_names: Vec<String>,
    pub params: Vec<f64>,
}

fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// `(g, g', g'', g''')` of the activation at `a`.
#[inline]
fn activation(a: f64, output: bool) -> [f64; 4] {
    if output {
        let s = sigmoid(a);
        let d1 = s * (1.0 - s);
        [s, d1, d1 * (1.0 - 2.0 * s), d1 * (1.0 - 6.0 * s + 6.0 * s * s)]
    } else {
        let t = a.tanh();
        let d1 = 1.0 - t * t;
        [t, d1, -2.0 * t * d1, -2.0 * d1 * (1.0 - 3.0 * t * t)]
    }
}

/// Forward jets recorded for a reverse sweep.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    widths: Vec<usize>,
    ndirs: usize,
    /// Post-activations per layer (`x[0]` is the scaled input).
    x: Vec<Vec<f64>>,
    /// First-order jets, `[dir][unit]` flattened per layer.
    xd: Vec<Vec<f64>>,
    xdd: Vec<Vec<f64>>,
    /// Pre-activation jets and activation derivatives per layer (index 0 unused).
    ad: Vec<Vec<f64>>,
    add: Vec<Vec<f64>>,
    g1: Vec<Vec<f64>>,
    g2: Vec<Vec<f64>>,
    g3: Vec<Vec<f64>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn output(&self) -> &[f64] {
        self.x.last().expect("tape is empty")
    }

    pub fn num_dirs(&self) -> usize {
        self.ndirs
    }

    /// `∂Q_a · v_d`.
    pub fn first(&self, action: usize, dir: usize) -> f64 {
        let out = *self.widths.last().unwrap();
        self.xd.last().unwrap()[dir * out + action]
    }

    /// `v_dᵀ ∂²Q_a v_d`.
    pub fn second(&self, action: usize, dir: usize) -> f64 {
        let out = *self.widths.last().unwrap();
        self.xdd.last().unwrap()[dir * out + action]
    }

    fn reset(&mut self, widths: &[usize], ndirs: usize) {
        if self.widths != widths || self.ndirs != ndirs {
            self.widths = widths.to_vec();
            self.ndirs = ndirs;
            let n = widths.len();
            let mk = |f: &dyn Fn(usize) -> usize| (0..n).map(|l| vec![0.0; f(widths[l])]).collect::<Vec<_>>();
            self.x = mk(&|w| w);
            self.xd = mk(&|w| w * ndirs);
            self.xdd = mk(&|w| w * ndirs);
            self.ad = mk(&|w| w * ndirs);
            self.add = mk(&|w| w * ndirs);
            self.g1 = mk(&|w| w);
            self.g2 = mk(&|w| w);
            self.g3 = mk(&|w| w);
        }
    }
}

/// Reusable buffers for the reverse sweep.
#[derive(Debug, Clone, Default)]
pub struct Adjoint {
    xb: Vec<f64>,
    xdb: Vec<f64>,
    xddb: Vec<f64>,
    ab: Vec<f64>,
    adb: Vec<f64>,
    addb: Vec<f64>,
}

/// Linear functional of the jet outputs for one action:
/// `J = c0·Q_a + Σ_d (c1[d]·∂Q_a v_d + c2[d]·v_dᵀ∂²Q_a v_d)`.
#[derive(Debug, Clone, Copy)]
pub struct Seed<'a> {
    pub action: usize,
    pub c0: f64,
    pub c1: &'a [f64],
    pub c2: &'a [f64],
}

impl QNetwork {
    /// Glorot-uniform weights and zero biases drawn from `rng`.
    pub fn new(spec: NetworkSpec, scaling: InputScaling, input_names: Vec<String>, rng: &mut StreamRng) -> Result<Self, QnetError> {
        spec.validate()?;
        if scaling.center.len() != spec.input_dim || scaling.scale.len() != spec.input_dim {
            return Err(QnetError::Dimension {
                expected: spec.input_dim,
                got: scaling.center.len().min(scaling.scale.len()),
            });
        }
        if !input_names.is_empty() && input_names.len() != spec.input_dim {
            return Err(QnetError::Dimension {
                expected: spec.input_dim,
                got: input_names.len(),
            });
        }
        let mut params = Vec::with_capacity(spec.num_params());
        for p in spec.widths().windows(2) {
            let (fan_in, fan_out) = (p[0], p[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let u: f64 = rng.random();
                params.push(limit * (2.0 * u - 1.0));
            }
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Ok(Self {
            spec,
            scaling,
            input_names,
            params,
        })
    }

    pub fn from_params(spec: NetworkSpec, scaling: InputScaling, input_names: Vec<String>, params: Vec<f64>) -> Result<Self, QnetError> {
        spec.validate()?;
        if params.len() != spec.num_params() {
            return Err(QnetError::Dimension {
                expected: spec.num_params(),
                got: params.len(),
            });
        }
        if scaling.center.len() != spec.input_dim || scaling.scale.len() != spec.input_dim {
            return Err(QnetError::Dimension {
                expected: spec.input_dim,
                got: scaling.center.len(),
            });
        }
        Ok(Self {
            spec,
            scaling,
            input_names,
            params,
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn num_actions(&self) -> usize {
        self.spec.output_dim
    }

    /// Offsets of `(weights, biases)` of each layer in θ.
    pub fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.spec
            .widths()
            .windows(2)
            .map(|p| {
                let w = off;
                off += p[0] * p[1];
                let b = off;
                off += p[1];
                (w, b)
            })
            .collect()
    }

    /// Zeroes the output layer, making every output exactly 0.5.
    pub fn zero_output_layer(&mut self) {
        let (w, _) = *self.layer_offsets().last().unwrap();
        for p in &mut self.params[w..] {
            *p = 0.0;
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<(), QnetError> {
        if input.len() != self.spec.input_dim {
            return Err(QnetError::Dimension {
                expected: self.spec.input_dim,
                got: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, QnetError> {
        self.check_input(input)?;
        let mut tape = Tape::new();
        self.record(&mut tape, input, &[]);
        Ok(tape.output().to_vec())
    }

    /// Records the forward pass and the jets along `dirs` (raw-input units).
    pub fn record(&self, tape: &mut Tape, input: &[f64], dirs: &[&[f64]]) {
        let widths = self.spec.widths();
        let nd = dirs.len();
        tape.reset(&widths, nd);
        let n0 = widths[0];
        for i in 0..n0 {
            tape.x[0][i] = (input[i] - self.scaling.center[i]) * self.scaling.scale[i];
        }
        for (d, v) in dirs.iter().enumerate() {
            for i in 0..n0 {
                tape.xd[0][d * n0 + i] = v[i] * self.scaling.scale[i];
                tape.xdd[0][d * n0 + i] = 0.0;
            }
        }
        let offsets = self.layer_offsets();
        let last = widths.len() - 1;
        for l in 1..=last {
            let (n_in, n_out) = (widths[l - 1], widths[l]);
            let (wo, bo) = offsets[l - 1];
            let w = &self.params[wo..wo + n_in * n_out];
            let b = &self.params[bo..bo + n_out];
            let (prev, cur) = tape.x.split_at_mut(l);
            let (xprev, x) = (&prev[l - 1], &mut cur[0]);
            for j in 0..n_out {
                let row = &w[j * n_in..(j + 1) * n_in];
                let a = b[j] + dot(row, xprev);
                let g = activation(a, l == last);
                x[j] = g[0];
                tape.g1[l][j] = g[1];
                tape.g2[l][j] = g[2];
                tape.g3[l][j] = g[3];
            }
            for d in 0..nd {
                let (prevd, curd) = tape.xd.split_at_mut(l);
                let (prevdd, curdd) = tape.xdd.split_at_mut(l);
                let xdp = &prevd[l - 1][d * n_in..(d + 1) * n_in];
                let xddp = &prevdd[l - 1][d * n_in..(d + 1) * n_in];
                for j in 0..n_out {
                    let row = &w[j * n_in..(j + 1) * n_in];
                    let ad = dot(row, xdp);
                    let add = dot(row, xddp);
                    tape.ad[l][d * n_out + j] = ad;
                    tape.add[l][d * n_out + j] = add;
                    curd[0][d * n_out + j] = tape.g1[l][j] * ad;
                    curdd[0][d * n_out + j] = tape.g2[l][j] * ad * ad + tape.g1[l][j] * add;
                }
            }
        }
    }

    /// Reverse sweep of `seed` over `tape`, accumulating `∂J/∂θ` into
    /// `grad_params` and `∂J/∂input` into `grad_input` when given.
    pub fn backward(
        &self,
        tape: &Tape,
        seed: Seed<'_>,
        adj: &mut Adjoint,
        mut grad_params: Option<&mut [f64]>,
        grad_input: Option<&mut [f64]>,
    ) {
        let widths = &tape.widths;
        let nd = tape.ndirs;
        let last = widths.len() - 1;
        let offsets = self.layer_offsets();
        let n_last = widths[last];
        adj.xb.clear();
        adj.xb.resize(n_last, 0.0);
        adj.xdb.clear();
        adj.xdb.resize(n_last * nd, 0.0);
        adj.xddb.clear();
        adj.xddb.resize(n_last * nd, 0.0);
        adj.xb[seed.action] = seed.c0;
        for d in 0..nd {
            adj.xdb[d * n_last + seed.action] = seed.c1.get(d).copied().unwrap_or(0.0);
            adj.xddb[d * n_last + seed.action] = seed.c2.get(d).copied().unwrap_or(0.0);
        }
        for l in (1..=last).rev() {
            let (n_in, n_out) = (widths[l - 1], widths[l]);
            let (g1, g2, g3) = (&tape.g1[l], &tape.g2[l], &tape.g3[l]);
            adj.ab.clear();
            adj.ab.resize(n_out, 0.0);
            adj.adb.clear();
            adj.adb.resize(n_out * nd, 0.0);
            adj.addb.clear();
            adj.addb.resize(n_out * nd, 0.0);
            for j in 0..n_out {
                adj.ab[j] = adj.xb[j] * g1[j];
            }
            for d in 0..nd {
                for j in 0..n_out {
                    let k = d * n_out + j;
                    let (ad, add) = (tape.ad[l][k], tape.add[l][k]);
                    let (xdb, xddb) = (adj.xdb[k], adj.xddb[k]);
                    adj.ab[j] += xdb * g2[j] * ad + xddb * (g3[j] * ad * ad + g2[j] * add);
                    adj.adb[k] = xdb * g1[j] + xddb * 2.0 * g2[j] * ad;
                    adj.addb[k] = xddb * g1[j];
                }
            }
            let (wo, bo) = offsets[l - 1];
            if let Some(gp) = grad_params.as_deref_mut() {
                let xprev = &tape.x[l - 1];
                for j in 0..n_out {
                    let grow = &mut gp[wo + j * n_in..wo + (j + 1) * n_in];
                    axpy(adj.ab[j], xprev, grow);
                    for d in 0..nd {
                        let k = d * n_out + j;
                        axpy(adj.adb[k], &tape.xd[l - 1][d * n_in..(d + 1) * n_in], grow);
                        axpy(adj.addb[k], &tape.xdd[l - 1][d * n_in..(d + 1) * n_in], grow);
                    }
                    gp[bo + j] += adj.ab[j];
                }
            }
            let w = &self.params[wo..wo + n_in * n_out];
            adj.xb.clear();
            adj.xb.resize(n_in, 0.0);
            adj.xdb.clear();
            adj.xdb.resize(n_in * nd, 0.0);
            adj.xddb.clear();
            adj.xddb.resize(n_in * nd, 0.0);
            for j in 0..n_out {
                let row = &w[j * n_in..(j + 1) * n_in];
                axpy(adj.ab[j], row, &mut adj.xb);
                for d in 0..nd {
                    let k = d * n_out + j;
                    axpy(adj.adb[k], row, &mut adj.xdb[d * n_in..(d + 1) * n_in]);
                    axpy(adj.addb[k], row, &mut adj.xddb[d * n_in..(d + 1) * n_in]);
                }
            }
        }
        if let Some(gi) = grad_input {
            for i in 0..widths[0] {
                gi[i] += adj.xb[i] * self.scaling.scale[i];
            }
        }
    }

    /// `upstream · ∂Q_a/∂θ`.
    pub fn grad_params(&self, input: &[f64], action: usize, upstream: f64) -> Result<Vec<f64>, QnetError> {
        self.check_action(input, action)?;
        let mut tape = Tape::new();
        self.record(&mut tape, input, &[]);
        let mut g = vec![0.0; self.num_params()];
        let seed = Seed {
            action,
            c0: upstream,
            c1: &[],
            c2: &[],
        };
        self.backward(&tape, seed, &mut Adjoint::default(), Some(&mut g), None);
        Ok(g)
    }

    /// `∂Q_a/∂input`.
    pub fn grad_input(&self, input: &[f64], action: usize) -> Result<Vec<f64>, QnetError> {
        self.check_action(input, action)?;
        let mut tape = Tape::new();
        self.record(&mut tape, input, &[]);
        let mut g = vec![0.0; self.spec.input_dim];
        let seed = Seed {
            action,
            c0: 1.0,
            c1: &[],
            c2: &[],
        };
        self.backward(&tape, seed, &mut Adjoint::default(), None, Some(&mut g));
        Ok(g)
    }

    /// `(∂²Q_a/∂input²) v`, as the input gradient of the directional
    /// derivative `∂Q_a · v`.
    pub fn hessian_vector_product(&self, input: &[f64], action: usize, v: &[f64]) -> Result<Vec<f64>, QnetError> {
        self.check_action(input, action)?;
        if v.len() != input.len() {
            return Err(QnetError::Dimension {
                expected: input.len(),
                got: v.len(),
            });
        }
        let mut tape = Tape::new();
        self.record(&mut tape, input, &[v]);
        let mut g = vec![0.0; self.spec.input_dim];
        let seed = Seed {
            action,
            c0: 0.0,
            c1: &[1.0],
            c2: &[0.0],
        };
        self.backward(&tape, seed, &mut Adjoint::default(), None, Some(&mut g));
        Ok(g)
    }

    /// `∂Q_a·f̃ + ½ Σ_k σ̃_kᵀ ∂²Q_a σ̃_k` at `input`.
    pub fn pde_operator(&self, input: &[f64], action: usize, drift: &[f64], noise: &[Vec<f64>]) -> Result<f64, QnetError> {
        self.check_action(input, action)?;
        let mut dirs: Vec<&[f64]> = vec![drift];
        dirs.extend(noise.iter().map(|c| c.as_slice()));
        if let Some(bad) = dirs.iter().find(|d| d.len() != input.len()) {
            return Err(QnetError::Dimension {
                expected: input.len(),
                got: bad.len(),
            });
        }
        let mut tape = Tape::new();
        self.record(&mut tape, input, &dirs);
        Ok(pde_residual_from_tape(&tape, action))
    }

    fn check_action(&self, input: &[f64], action: usize) -> Result<(), QnetError> {
        self.check_input(input)?;
        if action >= self.spec.output_dim {
            return Err(QnetError::Dimension {
                expected: self.spec.output_dim,
                got: action + 1,
            });
        }
        Ok(())
    }

    /// θ̂ ← η θ + (1 − η) θ̂, applied to `self` as the target.
    pub fn soft_update_from(&mut self, online: &QNetwork, eta: f64) {
        if eta >= 1.0 {
            self.params.copy_from_slice(&online.params);
            return;
        }
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            *t = eta * o + (1.0 - eta) * *t;
        }
    }

    /// Greedy action for `input`, ties broken by the lowest index.
    pub fn greedy(&self, input: &[f64]) -> Result<usize, QnetError> {
        Ok(argmax(&self.forward(input)?))
    }
}

/// `W_P` from a tape recorded with the drift direction first and the noise
/// columns after it.
pub fn pde_residual_from_tape(tape: &Tape, action: usize) -> f64 {
    let mut w = tape.first(action, 0);
    for k in 1..tape.num_dirs() {
        w += 0.5 * tape.second(action, k);
    }
    w
}

/// Index of the largest value; the first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    if alpha == 0.0 {
        return;
    }
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    Sgd,
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, num_params: usize) -> Self {
        let n = if matches!(kind, OptimizerKind::Adam { .. }) { num_params } else { 0 };
        Self {
            kind,
            learning_rate,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => axpy(-self.learning_rate, grad, params),
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let c1 = 1.0 - beta1.powi(self.t.min(i32::MAX as u64) as i32);
                let c2 = 1.0 - beta2.powi(self.t.min(i32::MAX as u64) as i32);
                for i in 0..params.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    params[i] -= self.learning_rate * mh / (vh.sqrt() + epsilon);
                }
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    format: String,
    version: u32,
    spec: NetworkSpec,
    scaling: InputScaling,
    input_names: Vec<String>,
    endianness: String,
    num_params: usize,
    sha256: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Checkpoint bytes: one line of JSON header, then θ as little-endian f64.
pub fn checkpoint_bytes(net: &QNetwork) -> Vec<u8> {
    let payload: Vec<u8> = net.params.iter().flat_map(|p| p.to_le_bytes()).collect();
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        spec: net.spec.clone(),
        scaling: net.scaling.clone(),
        input_names: net.input_names.clone(),
        endianness: "little".into(),
        num_params: net.params.len(),
        sha256: hex(&Sha256::digest(&payload)),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.extend_from_slice(&payload);
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<QNetwork, QnetError> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| QnetError::Corrupt("missing header terminator".into()))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| QnetError::Corrupt(format!("bad header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(QnetError::Corrupt(format!("unknown format {:?}", header.format)));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(QnetError::Version {
            found: header.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if header.endianness != "little" {
        return Err(QnetError::Corrupt(format!("unsupported endianness {:?}", header.endianness)));
    }
    let payload = &bytes[nl + 1..];
    if payload.len() != header.num_params * 8 {
        return Err(QnetError::Corrupt(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            header.num_params * 8
        )));
    }
    if hex(&Sha256::digest(payload)) != header.sha256 {
        return Err(QnetError::Corrupt("payload checksum mismatch".into()));
    }
    let params = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    QNetwork::from_params(header.spec, header.scaling, header.input_names, params)
}

pub fn checkpoint_save(net: &QNetwork, path: &Path) -> Result<(), QnetError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&checkpoint_bytes(net))?;
    f.sync_all()?;
    Ok(())
}

pub fn checkpoint_load(path: &Path) -> Result<QNetwork, QnetError> {
    checkpoint_from_bytes(&fs::read(path)?)
}
