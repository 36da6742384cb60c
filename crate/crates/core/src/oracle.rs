//! Ground truth for safety probabilities: a finite-difference HJB solver for
//! systems of dimension one or two, the closed-form survival series of
//! Brownian motion in an interval, and batched Monte-Carlo policy evaluation.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{network_input, Environment};
use crate::qnet::QNetwork;
use crate::rng::SeedTree;
use crate::sde::{mc_safety_probability, AugmentedState, McEstimate, Policy, SafeSet, SdeError, SdeSystem};

pub const FIELD_FORMAT: &str = "pirl-safety-field";
pub const FIELD_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("finite-difference solver supports 1 or 2 state dimensions, got {0}")]
    Dimension(usize),
    #[error("CFL condition violated: dtau = {dtau} exceeds the stable limit {limit}; try dtau = {suggested}")]
    Cfl { dtau: f64, limit: f64, suggested: f64 },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("diffusion is not diagonal at {state:?} (action {action})")]
    NonDiagonalDiffusion { state: Vec<f64>, action: usize },
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
    #[error("corrupt safety field: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, points: usize) -> Self {
        Self { min, max, points }
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.max
        } else {
            self.min + i as f64 * self.step()
        }
    }

    /// Cell index and weight of the upper node for linear interpolation;
    /// positions outside the axis are clamped to it.
    fn locate(&self, x: f64) -> (usize, f64) {
        let t = ((x - self.min) / self.step()).clamp(0.0, (self.points - 1) as f64);
        let i = (t.floor() as usize).min(self.points - 2);
        (i, t - i as f64)
    }
}

/// Spatial grid of the finite-difference solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub axes: Vec<Axis>,
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(OracleError::Dimension(self.axes.len()));
        }
        for a in &self.axes {
            if a.points < 3 || !(a.max > a.min) || !a.min.is_finite() || !a.max.is_finite() {
                return Err(OracleError::Grid(format!("axis {a:?} needs min < max and at least 3 points")));
            }
        }
        Ok(())
    }

    /// Row-major multi-index of a flat node index (last axis fastest).
    fn unravel(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            idx[d] = k % self.axes[d].points;
            k /= self.axes[d].points;
        }
        idx
    }

    fn stride(&self, d: usize) -> usize {
        self.axes[d + 1..].iter().map(|a| a.points).product()
    }

    pub fn node(&self, k: usize) -> Vec<f64> {
        self.unravel(k).iter().zip(&self.axes).map(|(&i, a)| a.node(i)).collect()
    }
}

/// Which control the solver applies at every node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FdControl {
    /// Pointwise maximum over the action set (the maximal safety probability).
    Optimal,
    /// A fixed action everywhere.
    Constant { action: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdConfig {
    pub grid: Grid,
    pub tau_max: f64,
    /// Spacing of the stored horizon slices.
    pub output_dt: f64,
    /// Time step; chosen from the stability limit when absent.
    pub dtau: Option<f64>,
    /// Mollifier width; two cells of the finest axis when absent.
    pub epsilon: Option<f64>,
    /// Fraction of the stability limit used when `dtau` is picked automatically.
    pub cfl_safety: f64,
    pub control: FdControl,
}

impl FdConfig {
    pub fn new(grid: Grid, tau_max: f64, output_dt: f64) -> Self {
        Self {
            grid,
            tau_max,
            output_dt,
            dtau: None,
            epsilon: None,
            cfl_safety: 0.9,
            control: FdControl::Optimal,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
            .unwrap_or_else(|| 2.0 * self.grid.axes.iter().map(Axis::step).fold(f64::INFINITY, f64::min))
    }
}

/// Gridded `Ψ(τ, x)`; values are row-major `[τ][x_0][x_1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyField {
    pub axes: Vec<Axis>,
    pub taus: Vec<f64>,
    pub epsilon: f64,
    pub system: String,
    pub policy: String,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldHeader {
    format: String,
    version: u32,
    layout: String,
    axes: Vec<Axis>,
    taus: Vec<f64>,
    epsilon: f64,
    system: String,
    policy: String,
    num_values: usize,
}

impl SafetyField {
    pub fn grid(&self) -> Grid {
        Grid { axes: self.axes.clone() }
    }

    fn slice_len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn slice(&self, tau_index: usize) -> &[f64] {
        let n = self.slice_len();
        &self.values[tau_index * n..(tau_index + 1) * n]
    }

    /// Node value at horizon slice `t` and multi-index `idx`.
    pub fn at(&self, t: usize, idx: &[usize]) -> f64 {
        let grid = self.grid();
        let k: usize = idx.iter().enumerate().map(|(d, &i)| i * grid.stride(d)).sum();
        self.slice(t)[k]
    }

    fn spatial(&self, t: usize, x: &[f64]) -> f64 {
        let cells: Vec<(usize, f64)> = self.axes.iter().zip(x).map(|(a, &xi)| a.locate(xi)).collect();
        let mut total = 0.0;
        for corner in 0..(1usize << cells.len()) {
            let mut w = 1.0;
            let mut idx = Vec::with_capacity(cells.len());
            for (d, &(i, frac)) in cells.iter().enumerate() {
                if corner >> d & 1 == 1 {
                    w *= frac;
                    idx.push(i + 1);
                } else {
                    w *= 1.0 - frac;
                    idx.push(i);
                }
            }
            if w != 0.0 {
                total += w * self.at(t, &idx);
            }
        }
        total
    }

    /// Multilinear interpolation in `(τ, x)`, clamped to the grid.
    pub fn value_at(&self, tau: f64, x: &[f64]) -> f64 {
        let n = self.taus.len();
        if n == 1 || tau <= self.taus[0] {
            return self.spatial(0, x);
        }
        if tau >= self.taus[n - 1] {
            return self.spatial(n - 1, x);
        }
        let j = self.taus.partition_point(|&t| t <= tau) - 1;
        let w = (tau - self.taus[j]) / (self.taus[j + 1] - self.taus[j]);
        (1.0 - w) * self.spatial(j, x) + w * self.spatial(j + 1, x)
    }

    /// Index of the stored slice closest to `tau`.
    pub fn tau_index(&self, tau: f64) -> usize {
        let mut best = 0;
        for (i, t) in self.taus.iter().enumerate() {
            if (t - tau).abs() < (self.taus[best] - tau).abs() {
                best = i;
            }
        }
        best
    }

    /// One JSON header line followed by one JSON array of values.
    pub fn write_json<W: Write>(&self, mut w: W) -> Result<(), OracleError> {
        let header = FieldHeader {
            format: FIELD_FORMAT.into(),
            version: FIELD_VERSION,
            layout: "row-major [tau][x0][x1]".into(),
            axes: self.axes.clone(),
            taus: self.taus.clone(),
            epsilon: self.epsilon,
            system: self.system.clone(),
            policy: self.policy.clone(),
            num_values: self.values.len(),
        };
        serde_json::to_writer(&mut w, &header).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
        serde_json::to_writer(&mut w, &self.values).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json(text: &str) -> Result<Self, OracleError> {
        let mut lines = text.splitn(2, '\n');
        let header: FieldHeader = serde_json::from_str(lines.next().unwrap_or(""))
            .map_err(|e| OracleError::Corrupt(format!("bad header: {e}")))?;
        if header.format != FIELD_FORMAT || header.version != FIELD_VERSION {
            return Err(OracleError::Corrupt(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        let values: Vec<f64> = serde_json::from_str(lines.next().unwrap_or("").trim())
            .map_err(|e| OracleError::Corrupt(format!("bad payload: {e}")))?;
        let expected = header.taus.len() * header.axes.iter().map(|a| a.points).product::<usize>();
        if values.len() != header.num_values || values.len() != expected {
            return Err(OracleError::Corrupt(format!("{} values, expected {expected}", values.len())));
        }
        Ok(Self {
            axes: header.axes,
            taus: header.taus,
            epsilon: header.epsilon,
            system: header.system,
            policy: header.policy,
            values,
        })
    }
}

/// Explicit monotone scheme for `∂_τ Ψ = max_u [f·∇Ψ + ½ Σ_j a_jj ∂²_j Ψ]`
/// inside `C` with `a = σσᵀ`, `Ψ(0, ·) = l_ε` and `Ψ = 0` outside `C`.
///
/// Convection is upwinded, diffusion uses central differences. Grid edges
/// that lie inside `C` get a zero-gradient condition. Only diagonal diffusion
/// is supported.
pub fn solve_hjb_fd(system: &dyn SdeSystem, safe_set: &dyn SafeSet, config: &FdConfig, name: &str) -> Result<SafetyField, OracleError> {
    let grid = &config.grid;
    grid.validate()?;
    let dim = grid.dim();
    if system.state_dim() != dim {
        return Err(OracleError::Dimension(system.state_dim()));
    }
    if !(config.tau_max >= 0.0) || !(config.output_dt > 0.0) {
        return Err(OracleError::Grid("need tau_max >= 0 and output_dt > 0".into()));
    }
    let slices = (config.tau_max / config.output_dt).round() as usize;
    if ((slices as f64) * config.output_dt - config.tau_max).abs() > 1e-9 * config.tau_max.max(1.0) {
        return Err(OracleError::Grid(format!(
            "output_dt {} does not divide tau_max {}",
            config.output_dt, config.tau_max
        )));
    }
    let actions: Vec<usize> = match config.control {
        FdControl::Optimal => (0..system.num_actions()).collect(),
        FdControl::Constant { action } => {
            if action >= system.num_actions() {
                return Err(OracleError::Mismatch(format!("action {action} out of range")));
            }
            vec![action]
        }
    };
    let n = grid.num_nodes();
    let w = system.noise_dim();
    let h: Vec<f64> = grid.axes.iter().map(Axis::step).collect();
    let na = actions.len();

    // Per node and action: drift and diagonal diffusion per axis.
    let mut coef_f = vec![0.0; n * na * dim];
    let mut coef_a = vec![0.0; n * na * dim];
    let mut inside = vec![false; n];
    let mut max_rate: f64 = 0.0;
    let mut f = vec![0.0; dim];
    let mut sig = vec![0.0; dim * w];
    for k in 0..n {
        let x = grid.node(k);
        inside[k] = safe_set.contains(&x);
        if !inside[k] {
            continue;
        }
        for (ai, &a) in actions.iter().enumerate() {
            system.drift(&x, a, &mut f);
            system.diffusion(&x, a, &mut sig);
            let mut rate = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    let aij: f64 = (0..w).map(|c| sig[i * w + c] * sig[j * w + c]).sum();
                    if i == j {
                        coef_a[(k * na + ai) * dim + i] = aij;
                    } else if aij.abs() > 1e-12 {
                        return Err(OracleError::NonDiagonalDiffusion { state: x, action: a });
                    }
                }
                coef_f[(k * na + ai) * dim + i] = f[i];
                rate += f[i].abs() / h[i] + coef_a[(k * na + ai) * dim + i] / (h[i] * h[i]);
            }
            max_rate = max_rate.max(rate);
        }
    }
    let limit = if max_rate > 0.0 { 1.0 / max_rate } else { f64::INFINITY };
    let dtau_max = match config.dtau {
        Some(d) if d > limit => {
            return Err(OracleError::Cfl {
                dtau: d,
                limit,
                suggested: config.cfl_safety * limit,
            })
        }
        Some(d) if d > 0.0 => d,
        Some(d) => return Err(OracleError::Grid(format!("dtau must be positive, got {d}"))),
        None => (config.cfl_safety * limit).min(config.output_dt),
    };
    let sub = ((config.output_dt / dtau_max).ceil() as usize).max(1);
    let dtau = config.output_dt / sub as f64;

    let eps = config.epsilon();
    let mut psi: Vec<f64> = (0..n).map(|k| if inside[k] { safe_set.mollifier(&grid.node(k), eps) } else { 0.0 }).collect();
    let mut values = psi.clone();
    let mut next = psi.clone();
    let strides: Vec<usize> = (0..dim).map(|d| grid.stride(d)).collect();
    let multi: Vec<Vec<usize>> = (0..n).map(|k| grid.unravel(k)).collect();

    for _ in 0..slices {
        for _ in 0..sub {
            for k in 0..n {
                if !inside[k] {
                    next[k] = 0.0;
                    continue;
                }
                let p = psi[k];
                // Neighbour values, with zero gradient across grid edges.
                let mut lo = [0.0; 2];
                let mut hi = [0.0; 2];
                for d in 0..dim {
                    let i = multi[k][d];
                    lo[d] = if i > 0 { psi[k - strides[d]] } else { p };
                    hi[d] = if i + 1 < grid.axes[d].points { psi[k + strides[d]] } else { p };
                }
                let mut best = f64::NEG_INFINITY;
                for ai in 0..na {
                    let base = (k * na + ai) * dim;
                    let mut l = 0.0;
                    for d in 0..dim {
                        let fd = coef_f[base + d];
                        l += if fd > 0.0 { fd * (hi[d] - p) / h[d] } else { fd * (p - lo[d]) / h[d] };
                        l += 0.5 * coef_a[base + d] * (hi[d] - 2.0 * p + lo[d]) / (h[d] * h[d]);
                    }
                    best = best.max(l);
                }
                next[k] = (p + dtau * best).clamp(0.0, 1.0);
            }
            std::mem::swap(&mut psi, &mut next);
        }
        values.extend_from_slice(&psi);
    }
    Ok(SafetyField {
        axes: grid.axes.clone(),
        taus: (0..=slices).map(|j| j as f64 * config.output_dt).collect(),
        epsilon: eps,
        system: name.into(),
        policy: match config.control {
            FdControl::Optimal => "optimal".into(),
            FdControl::Constant { action } => format!("constant:{action}"),
        },
        values,
    })
}

/// Survival probability of `x + σ W` in `(-b, b)` up to time `t`, started
/// from the mollified indicator `l_ε` (plain indicator for `ε = 0`):
///
/// `u(t, x) = Σ_k c_k cos(λ_k x) exp(-σ² λ_k² t / 2)`, `λ_k = (2k+1)π / (2b)`,
/// `c_k = 2 (-1)^k sin(λ_k ε) / (b ε λ_k²)` → `4 (-1)^k / ((2k+1)π)` as `ε → 0`.
pub fn brownian_survival_series(half_width: f64, sigma: f64, t: f64, x: f64, epsilon: f64) -> f64 {
    if x.abs() >= half_width {
        return 0.0;
    }
    let b = half_width;
    let mut total = 0.0;
    for k in 0..100_000 {
        let lam = (2 * k + 1) as f64 * std::f64::consts::PI / (2.0 * b);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let c = if epsilon > 0.0 {
            2.0 * sign * (lam * epsilon).sin() / (b * epsilon * lam * lam)
        } else {
            4.0 * sign / ((2 * k + 1) as f64 * std::f64::consts::PI)
        };
        let decay = (-0.5 * sigma * sigma * lam * lam * t).exp();
        let term = c * (lam * x).cos() * decay;
        total += term;
        if decay * c.abs() < 1e-17 {
            break;
        }
    }
    total.clamp(0.0, 1.0)
}

/// Monte-Carlo safety probability at each state.
///
/// With `common_random_numbers`, every state (and every call with the same
/// seeds) reuses the rollout streams `0..n_rollouts`, which pairs comparisons
/// between policies; otherwise state `j` uses streams `j·n .. (j+1)·n`.
pub fn evaluate_policy_mc(
    env: &dyn Environment,
    policy: &dyn Policy,
    states: &[AugmentedState],
    n_rollouts: usize,
    seeds: &SeedTree,
    common_random_numbers: bool,
) -> Result<Vec<McEstimate>, OracleError> {
    let integ = env.integrator();
    states
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let offset = if common_random_numbers { 0 } else { (j * n_rollouts) as u64 };
            Ok(mc_safety_probability(
                env.system(),
                env.safe_set(),
                policy,
                s,
                &integ,
                n_rollouts,
                seeds,
                offset,
            )?)
        })
        .collect()
}

/// `Ψ(τ, x)` from a learned network: `max_a Q([τ, features(x)], a)`.
pub struct NetValue<'a> {
    net: &'a QNetwork,
    env: &'a dyn Environment,
}

impl<'a> NetValue<'a> {
    pub fn new(net: &'a QNetwork, env: &'a dyn Environment) -> Result<Self, OracleError> {
        if net.spec.input_dim != 1 + env.feature_dim() || net.spec.output_dim != env.num_actions() {
            return Err(OracleError::Mismatch(format!(
                "network maps {} inputs to {} actions, environment {} has {} features and {} actions",
                net.spec.input_dim,
                net.spec.output_dim,
                env.name(),
                env.feature_dim(),
                env.num_actions()
            )));
        }
        Ok(Self { net, env })
    }

    pub fn value(&self, tau: f64, x: &[f64]) -> f64 {
        let mut input = Vec::new();
        network_input(self.env, &AugmentedState::new(tau, x.to_vec()), &mut input);
        self.net.forward(&input).expect("dimensions checked").into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub n: usize,
    pub mae: f64,
    pub max_abs: f64,
}

impl ErrorStats {
    fn from_errors(errors: &[f64]) -> Self {
        let n = errors.len();
        Self {
            n,
            mae: if n == 0 { 0.0 } else { errors.iter().sum::<f64>() / n as f64 },
            max_abs: errors.iter().cloned().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldComparison {
    pub overall: ErrorStats,
    /// Probes within `boundary_band` of `∂C`.
    pub near_boundary: ErrorStats,
    pub interior: ErrorStats,
    /// `(τ, x, learned, field)` per probe.
    pub probes: Vec<(f64, Vec<f64>, f64, f64)>,
}

/// Compares `value(τ, x)` with the field at each probe.
pub fn compare_field(
    value: &dyn Fn(f64, &[f64]) -> f64,
    field: &SafetyField,
    probes: &[(f64, Vec<f64>)],
    safe_set: &dyn SafeSet,
    boundary_band: f64,
) -> Result<FieldComparison, OracleError> {
    let mut all = Vec::new();
    let mut near = Vec::new();
    let mut inner = Vec::new();
    let mut rows = Vec::new();
    for (tau, x) in probes {
        if x.len() != field.axes.len() {
            return Err(OracleError::Mismatch(format!(
                "probe has {} coordinates, field has {}",
                x.len(),
                field.axes.len()
            )));
        }
        let learned = value(*tau, x);
        let truth = field.value_at(*tau, x);
        let err = (learned - truth).abs();
        all.push(err);
        if safe_set.signed_distance(x) < boundary_band {
            near.push(err);
        } else {
            inner.push(err);
        }
        rows.push((*tau, x.clone(), learned, truth));
    }
    Ok(FieldComparison {
        overall: ErrorStats::from_errors(&all),
        near_boundary: ErrorStats::from_errors(&near),
        interior: ErrorStats::from_errors(&inner),
        probes: rows,
    })
}

/// Heatmap table: header `row_name\col_name,c_0,c_1,…`, then one row per
/// `row_values[i]` holding `values[i][j]`.
pub fn write_heatmap_csv<W: Write>(
    mut w: W,
    row_name: &str,
    row_values: &[f64],
    col_name: &str,
    col_values: &[f64],
    values: &[Vec<f64>],
) -> io::Result<()> {
    write!(w, "{row_name}\\{col_name}")?;
    for c in col_values {
        write!(w, ",{c}")?;
    }
    writeln!(w)?;
    for (r, row) in row_values.iter().zip(values) {
        write!(w, "{r}")?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Evenly spaced values from `lo` to `hi` inclusive (`lo` alone when `n = 1`).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{make_brownian_benchmark, BrownianConfig};
    use crate::sde::BandSafeSet;

    fn bench(u_max: f64, sigma: f64) -> crate::benchmark::BrownianBenchmark {
        make_brownian_benchmark(BrownianConfig {
            u_max,
            sigma,
            ..Default::default()
        })
        .unwrap()
    }

    fn cfg1d(points: usize) -> FdConfig {
        FdConfig::new(
            Grid {
                axes: vec![Axis::new(-1.0, 1.0, points)],
            },
            1.0,
            0.1,
        )
    }

    #[test]
    fn stationary_without_drift_or_noise() {
        let env = bench(0.0, 0.0);
        let field = solve_hjb_fd(env.system(), env.safe_set(), &cfg1d(41), "b").unwrap();
        for t in 0..field.taus.len() {
            assert_eq!(field.slice(t), field.slice(0));
        }
        let eps = field.epsilon;
        for x in linspace(-1.0, 1.0, 41) {
            assert!((field.value_at(1.0, &[x]) - env.safe_set().mollifier(&[x], eps)).abs() < 1e-12);
        }
    }

    #[test]
    fn series_limits() {
        // At t = 0 the series reproduces the initial data.
        assert!((brownian_survival_series(1.0, 0.5, 0.0, 0.3, 0.1) - 1.0).abs() < 1e-6);
        assert!((brownian_survival_series(1.0, 0.5, 0.0, 0.95, 0.1) - 0.5).abs() < 1e-6);
        assert_eq!(brownian_survival_series(1.0, 0.5, 1.0, 1.0, 0.0), 0.0);
        // Long times decay like the first mode.
        let t = 20.0;
        let lam = std::f64::consts::PI / 2.0;
        let first = 4.0 / std::f64::consts::PI * (-0.125 * lam * lam * t).exp();
        assert!((brownian_survival_series(1.0, 0.5, t, 0.0, 0.0) - first).abs() < 1e-12);
    }

    #[test]
    fn cfl_violation_suggests_a_step() {
        let env = bench(0.5, 0.5);
        let mut cfg = cfg1d(201);
        cfg.dtau = Some(0.01);
        match solve_hjb_fd(env.system(), env.safe_set(), &cfg, "b") {
            Err(OracleError::Cfl { suggested, limit, .. }) => assert!(suggested < limit && limit < 0.01),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_high_dimensions() {
        let grid = Grid {
            axes: vec![Axis::new(0.0, 1.0, 3); 3],
        };
        assert!(matches!(grid.validate(), Err(OracleError::Dimension(3))));
    }

    #[test]
    fn field_json_round_trip_is_exact() {
        let env = bench(0.5, 0.5);
        let field = solve_hjb_fd(env.system(), env.safe_set(), &cfg1d(21), "brownian").unwrap();
        let mut a = Vec::new();
        field.write_json(&mut a).unwrap();
        let back = SafetyField::read_json(std::str::from_utf8(&a).unwrap()).unwrap();
        assert_eq!(back, field);
        let mut b = Vec::new();
        back.write_json(&mut b).unwrap();
        assert_eq!(a, b);
        assert!(SafetyField::read_json("{}").is_err());
    }

    #[test]
    fn tabular_field_compares_to_itself_exactly() {
        let env = bench(0.5, 0.5);
        let field = solve_hjb_fd(env.system(), env.safe_set(), &cfg1d(41), "b").unwrap();
        let probes: Vec<(f64, Vec<f64>)> = linspace(-0.9, 0.9, 19).into_iter().map(|x| (1.0, vec![x])).collect();
        let rep = compare_field(&|t, x| field.value_at(t, x), &field, &probes, env.safe_set(), 0.2).unwrap();
        assert_eq!(rep.overall.mae, 0.0);
        assert_eq!(rep.overall.n, 19);
        assert_eq!(rep.near_boundary.n + rep.interior.n, 19);

        let mean_abs: f64 = probes.iter().map(|(t, x)| (field.value_at(*t, x) - 0.5).abs()).sum::<f64>() / 19.0;
        let rep = compare_field(&|_, _| 0.5, &field, &probes, env.safe_set(), 0.2).unwrap();
        assert!((rep.overall.mae - mean_abs).abs() < 1e-15);

        let bad = vec![(1.0, vec![0.0, 0.0])];
        assert!(compare_field(&|_, _| 0.5, &field, &bad, env.safe_set(), 0.2).is_err());
    }

    #[test]
    fn heatmap_layout() {
        let mut buf = Vec::new();
        write_heatmap_csv(&mut buf, "e", &[0.0], "psi", &[0.5], &[vec![0.25]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "e\\psi,0.5\n0,0.25\n");
    }

    #[test]
    fn interpolation_is_exact_on_linear_data() {
        let field = SafetyField {
            axes: vec![Axis::new(0.0, 2.0, 3), Axis::new(-1.0, 1.0, 5)],
            taus: vec![0.0, 1.0],
            epsilon: 0.0,
            system: "t".into(),
            policy: "t".into(),
            values: {
                let mut v = Vec::new();
                for t in [0.0, 1.0] {
                    for i in 0..3 {
                        for j in 0..5 {
                            v.push(0.1 * t + 0.2 * i as f64 + 0.05 * (-1.0 + 0.5 * j as f64));
                        }
                    }
                }
                v
            },
        };
        let exact = |t: f64, x: f64, y: f64| 0.1 * t + 0.2 * x + 0.05 * y;
        for (t, x, y) in [(0.3, 0.7, 0.1), (0.9, 1.9, -0.8), (0.0, 0.0, 1.0)] {
            assert!((field.value_at(t, &[x, y]) - exact(t, x, y)).abs() < 1e-14);
        }
        let band = BandSafeSet {
            axis: 0,
            half_width: 1.0,
            closed: false,
        };
        assert!(band.contains(&[0.0]));
    }
}
