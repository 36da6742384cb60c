//! Subcommand implementations. Each returns a summary for callers that embed
//! the CLI; `main` only maps errors to exit codes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use pirl_core::env::{rollout, Environment, Rollout};
use pirl_core::oracle::{linspace, solve_hjb_fd, write_heatmap_csv, Axis, FdConfig, Grid, NetValue, OracleError};
use pirl_core::qnet::{checkpoint_load, checkpoint_save, QNetwork, QnetError};
use pirl_core::rng::{domain, SeedTree};
use pirl_core::sde::{AugmentedState, ConstantPolicy, McEstimate, Policy};
use pirl_core::training::{init_network, train, FileSink, GreedyPolicy, TrainError};
use pirl_core::vehicle::{corner_sideslip, write_trajectory_csv, SideslipStats};
use serde::{Deserialize, Serialize};

use crate::config::{oracle_bounds, BuiltEnv, ExperimentConfig};
use crate::CliError;

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::Config(m),
            TrainError::NonFinite { .. } | TrainError::Sde(_) => CliError::Numeric(e.to_string()),
            TrainError::Qnet(q) => q.into(),
            TrainError::Io(io) => io.into(),
        }
    }
}

impl From<QnetError> for CliError {
    fn from(e: QnetError) -> Self {
        match e {
            QnetError::Io(io) => io.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Io(io) => io.into(),
            OracleError::Sde(_) => CliError::Numeric(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub env: String,
    pub seed: u64,
    pub episodes: usize,
    pub transitions: usize,
    pub learn_steps: usize,
    pub final_moving_avg: f64,
    pub wall_time_s: f64,
}

/// Trains into `output_dir`: `config.toml`, `metrics.csv`, `checkpoints/`,
/// `final.ckpt`, `target.ckpt` and `summary.json`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainSummary, CliError> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    write_file(&dir.join("config.toml"), &cfg.to_toml()?)?;
    let built = cfg.env.build()?;
    let env = built.as_dyn();
    let seeds = SeedTree::new(cfg.seed);
    let net = init_network(env, cfg.network.hidden_layers, cfg.network.hidden_width, &seeds)?;
    let mut sink = FileSink::create(dir, cfg.train.checkpoint_every)?;
    let start = Instant::now();
    let outcome = match train(env, net, &cfg.train, &seeds, &mut sink) {
        Ok(o) => o,
        Err(TrainError::NonFinite { episode, report }) => {
            sink.finish()?;
            #[derive(Serialize)]
            struct Diagnostics {
                episode: usize,
                losses: pirl_core::training::LossReport,
            }
            write_json(&dir.join("diagnostics.json"), &Diagnostics { episode, losses: report })?;
            return Err(CliError::Numeric(format!(
                "non-finite loss at episode {episode}; see {}",
                dir.join("diagnostics.json").display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    sink.finish()?;
    checkpoint_save(&outcome.net, &dir.join("final.ckpt"))?;
    checkpoint_save(&outcome.target, &dir.join("target.ckpt"))?;
    let summary = TrainSummary {
        env: cfg.env.kind().into(),
        seed: cfg.seed,
        episodes: outcome.episodes,
        transitions: outcome.transitions,
        learn_steps: outcome.learn_steps,
        final_moving_avg: outcome.final_moving_avg,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Which policy drives evaluation rollouts.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    /// Greedy with respect to a checkpoint.
    Greedy(PathBuf),
    /// Greedy with respect to the network training would start from.
    Untrained,
    Constant(usize),
}

impl PolicySpec {
    pub fn label(&self) -> String {
        match self {
            PolicySpec::Greedy(p) => format!("greedy:{}", p.display()),
            PolicySpec::Untrained => "untrained".into(),
            PolicySpec::Constant(a) => format!("constant:{a}"),
        }
    }
}

/// Where rollouts start.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    /// Drawn from the episode start distribution.
    Sampled,
    Fixed(AugmentedState),
}

/// Parses `h,x_1,...,x_n`.
pub fn parse_state(text: &str, env: &dyn Environment) -> Result<AugmentedState, CliError> {
    let vals: Result<Vec<f64>, _> = text.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|_| CliError::Config(format!("cannot parse state {text:?}")))?;
    let dim = env.system().state_dim();
    if vals.len() != dim + 1 {
        return Err(CliError::Config(format!(
            "state needs h followed by {dim} values ({}), got {} numbers",
            env.state_names().join(", "),
            vals.len()
        )));
    }
    Ok(AugmentedState::new(vals[0], vals[1..].to_vec()))
}

fn load_net(path: &Path, env: &dyn Environment) -> Result<QNetwork, CliError> {
    let net = checkpoint_load(path)?;
    NetValue::new(&net, env)?;
    let mut names = vec!["h".to_string()];
    names.extend(env.feature_names());
    if !net.input_names.is_empty() && net.input_names != names {
        return Err(CliError::Config(format!(
            "checkpoint inputs {:?} do not match environment features {:?}",
            net.input_names, names
        )));
    }
    Ok(net)
}

struct PolicyBox {
    net: Option<QNetwork>,
    constant: Option<usize>,
}

impl PolicyBox {
    fn new(spec: &PolicySpec, cfg: &ExperimentConfig, env: &dyn Environment) -> Result<Self, CliError> {
        Ok(match spec {
            PolicySpec::Greedy(p) => Self {
                net: Some(load_net(p, env)?),
                constant: None,
            },
            PolicySpec::Untrained => Self {
                net: Some(init_network(env, cfg.network.hidden_layers, cfg.network.hidden_width, &SeedTree::new(cfg.seed))?),
                constant: None,
            },
            PolicySpec::Constant(a) => {
                if *a >= env.num_actions() {
                    return Err(CliError::Config(format!("action {a} out of range (0..{})", env.num_actions())));
                }
                Self {
                    net: None,
                    constant: Some(*a),
                }
            }
        })
    }

    fn run(&self, env: &dyn Environment, s0: AugmentedState, rng: &mut pirl_core::rng::StreamRng) -> Result<Rollout, CliError> {
        let r = match (&self.net, self.constant) {
            (Some(net), _) => rollout(env, &GreedyPolicy { net, env } as &dyn Policy, &s0, rng),
            (None, Some(a)) => rollout(env, &ConstantPolicy(a), &s0, rng),
            _ => unreachable!(),
        };
        r.map_err(|e| CliError::Numeric(e.to_string()))
    }
}

/// Rollout `index`: start and noise both come from stream `(EVALUATION, index)`,
/// so two policies evaluated with the same seed share random numbers.
fn run_indexed(
    cfg: &ExperimentConfig,
    env: &dyn Environment,
    policy: &PolicyBox,
    initial: &InitialSpec,
    index: usize,
) -> Result<Rollout, CliError> {
    let mut rng = SeedTree::new(cfg.seed).stream(domain::EVALUATION, index as u64);
    let s0 = match initial {
        InitialSpec::Sampled => {
            let mut s = env.sample_initial(&mut rng);
            if let Some(h) = cfg.eval.horizon {
                s.horizon = h;
            }
            s
        }
        InitialSpec::Fixed(s) => s.clone(),
    };
    policy.run(env, s0, &mut rng)
}

/// Generic trajectory layout: `t, h, <state>, action, reward`.
fn write_generic_trajectory<W: Write>(env: &dyn Environment, r: &Rollout, dt: f64, mut w: W) -> std::io::Result<()> {
    let mut cols = vec!["t".to_string(), "h".to_string()];
    cols.extend(env.state_names());
    cols.push("action".into());
    cols.push("reward".into());
    writeln!(w, "{}", cols.join(","))?;
    for (k, s) in r.states.iter().enumerate() {
        let mut row = vec![(k as f64 * dt).to_string(), s.horizon.to_string()];
        row.extend(s.state.iter().map(|v| v.to_string()));
        match (r.actions.get(k), r.rewards.get(k)) {
            (Some(a), Some(rew)) => {
                row.push(a.to_string());
                row.push(rew.to_string());
            }
            _ => {
                row.push(String::new());
                row.push(String::new());
            }
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

fn write_trajectory(built: &BuiltEnv, r: &Rollout, path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    match built {
        BuiltEnv::Vehicle(v) => write_trajectory_csv(v, r, &mut w)?,
        BuiltEnv::Brownian(b) => write_generic_trajectory(b, r, b.integrator().dt, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub env: String,
    pub policy: String,
    pub seed: u64,
    pub rollouts: usize,
    pub safe: usize,
    /// Empirical safety probability.
    pub estimate: f64,
    pub half_width_95: f64,
    pub mean_steps: f64,
    /// Vehicle environments only: sideslip with `|β| ≥ 10°` in the arc.
    pub sideslip: Option<SideslipStats>,
}

pub const DRIFT_BETA_MIN_DEG: f64 = 10.0;

/// Runs `n` rollouts and writes `eval_summary.json` (and trajectories) to `out_dir`.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    policy: &PolicySpec,
    initial: &InitialSpec,
    n: usize,
    out_dir: &Path,
) -> Result<EvalSummary, CliError> {
    if n == 0 {
        return Err(CliError::Config("n_rollouts must be >= 1".into()));
    }
    let built = cfg.env.build()?;
    let env = built.as_dyn();
    let pol = PolicyBox::new(policy, cfg, env)?;
    fs::create_dir_all(out_dir)?;
    let mut rollouts = Vec::with_capacity(n);
    let mut safe = 0;
    for i in 0..n {
        let r = run_indexed(cfg, env, &pol, initial, i)?;
        if r.total_reward() > 0.5 {
            safe += 1;
        }
        if cfg.eval.trajectories {
            write_trajectory(&built, &r, &out_dir.join("rollouts").join(format!("rollout_{i:04}.csv")))?;
        }
        rollouts.push(r);
    }
    let est = McEstimate::from_successes(safe as f64, n);
    let sideslip = match &built {
        BuiltEnv::Vehicle(v) => Some(corner_sideslip(v, &rollouts, DRIFT_BETA_MIN_DEG.to_radians())),
        BuiltEnv::Brownian(_) => None,
    };
    let summary = EvalSummary {
        env: cfg.env.kind().into(),
        policy: policy.label(),
        seed: cfg.seed,
        rollouts: n,
        safe,
        estimate: est.estimate,
        half_width_95: est.half_width_95,
        mean_steps: rollouts.iter().map(|r| r.actions.len() as f64).sum::<f64>() / n as f64,
        sideslip,
    };
    write_json(&out_dir.join("eval_summary.json"), &summary)?;
    Ok(summary)
}

/// Runs one rollout and writes its trajectory CSV to `out`.
pub fn cmd_rollout(cfg: &ExperimentConfig, policy: &PolicySpec, initial: &InitialSpec, index: usize, out: &Path) -> Result<Rollout, CliError> {
    let built = cfg.env.build()?;
    let pol = PolicyBox::new(policy, cfg, built.as_dyn())?;
    let r = run_indexed(cfg, built.as_dyn(), &pol, initial, index)?;
    write_trajectory(&built, &r, out)?;
    Ok(r)
}

/// Solves the finite-difference oracle and writes the safety field JSON.
pub fn cmd_oracle(cfg: &ExperimentConfig, out: &Path) -> Result<pirl_core::oracle::SafetyField, CliError> {
    let built = cfg.env.build()?;
    let env = built.as_dyn();
    let dim = env.system().state_dim();
    if dim > 2 {
        return Err(CliError::Config(format!(
            "the finite-difference oracle handles at most 2 state dimensions; env {} has {dim}",
            cfg.env.kind()
        )));
    }
    let oc = &cfg.oracle;
    if oc.points.len() != dim {
        return Err(CliError::Config(format!("oracle.points needs {dim} entries, got {}", oc.points.len())));
    }
    let (lo, hi) = oracle_bounds(oc, env)?;
    if lo.len() != dim || hi.len() != dim {
        return Err(CliError::Config(format!("oracle bounds need {dim} entries")));
    }
    let grid = Grid {
        axes: (0..dim).map(|k| Axis::new(lo[k], hi[k], oc.points[k])).collect(),
    };
    let mut fd = FdConfig::new(grid, oc.tau_max.unwrap_or(env.tau_max()), oc.output_dt);
    fd.dtau = oc.dtau;
    fd.epsilon = oc.epsilon;
    fd.cfl_safety = oc.cfl_safety;
    let field = solve_hjb_fd(env.system(), env.safe_set(), &fd, cfg.env.kind())?;
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(out)?);
    field.write_json(&mut w)?;
    w.flush()?;
    Ok(field)
}

/// `name:min:max:points`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl std::str::FromStr for AxisSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Config(format!("axis spec {s:?} must look like name:min:max:points"));
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 4 {
            return Err(bad());
        }
        let spec = AxisSpec {
            name: parts[0].trim().to_string(),
            min: parts[1].trim().parse().map_err(|_| bad())?,
            max: parts[2].trim().parse().map_err(|_| bad())?,
            points: parts[3].trim().parse().map_err(|_| bad())?,
        };
        if spec.points == 0 || !(spec.min <= spec.max) {
            return Err(bad());
        }
        Ok(spec)
    }
}

/// `name=value`.
pub fn parse_fix(s: &str) -> Result<(String, f64), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("fixed value {s:?} must look like name=value")))?;
    let v = v
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("cannot parse value in {s:?}")))?;
    Ok((k.trim().to_string(), v))
}

/// Learned safety probability over a 2D slice of the state space.
///
/// Unnamed state coordinates sit at the centre of the episode start region
/// unless fixed explicitly. Values are `max_a Q(τ, x, a)`.
pub fn cmd_export_map(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    rows: &AxisSpec,
    cols: &AxisSpec,
    fixed: &[(String, f64)],
    tau: Option<f64>,
    out: &Path,
) -> Result<Vec<Vec<f64>>, CliError> {
    let built = cfg.env.build()?;
    let env = built.as_dyn();
    let net = load_net(checkpoint, env)?;
    let names = env.state_names();
    let index_of = |n: &str| {
        names
            .iter()
            .position(|m| m == n)
            .ok_or_else(|| CliError::Config(format!("unknown state coordinate {n:?}; known: {}", names.join(", "))))
    };
    let (ri, ci) = (index_of(&rows.name)?, index_of(&cols.name)?);
    if ri == ci {
        return Err(CliError::Config("row and column axes must differ".into()));
    }
    let mut base = env.domains().initial.centroid();
    for (k, v) in fixed {
        base[index_of(k)?] = *v;
    }
    let tau = tau.unwrap_or(env.tau_max());
    let value = NetValue::new(&net, env)?;
    let (rv, cv) = (linspace(rows.min, rows.max, rows.points), linspace(cols.min, cols.max, cols.points));
    let values: Vec<Vec<f64>> = rv
        .iter()
        .map(|&r| {
            cv.iter()
                .map(|&c| {
                    let mut x = base.clone();
                    x[ri] = r;
                    x[ci] = c;
                    value.value(tau, &x)
                })
                .collect()
        })
        .collect();
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(out)?);
    write_heatmap_csv(&mut w, &rows.name, &rv, &cols.name, &cv, &values)?;
    w.flush()?;
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_and_fix_parsing() {
        let a: AxisSpec = "e:-1:1:21".parse().unwrap();
        assert_eq!((a.name.as_str(), a.min, a.max, a.points), ("e", -1.0, 1.0, 21));
        assert!("e:-1:1".parse::<AxisSpec>().is_err());
        assert!("e:1:-1:3".parse::<AxisSpec>().is_err());
        assert_eq!(parse_fix("v_x=10").unwrap(), ("v_x".to_string(), 10.0));
        assert!(parse_fix("v_x").is_err());
    }

    #[test]
    fn state_parsing_checks_dimension() {
        let cfg = ExperimentConfig::default();
        let built = cfg.env.build().unwrap();
        let s = parse_state("1.0, 0.25", built.as_dyn()).unwrap();
        assert_eq!((s.horizon, s.state.clone()), (1.0, vec![0.25]));
        assert!(parse_state("1.0", built.as_dyn()).is_err());
        assert!(parse_state("1.0,x", built.as_dyn()).is_err());
    }
}
