use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pirl_cli::commands::{
    cmd_eval, cmd_export_map, cmd_oracle, cmd_rollout, cmd_train, parse_fix, parse_state, AxisSpec, InitialSpec, PolicySpec,
};
use pirl_cli::config::ExperimentConfig;
use pirl_cli::CliError;

/// Physics-informed safety probability learning.
///
/// Exit codes: 0 success, 2 config or usage error, 3 numeric abort, 4 I/O error.
/// PIRL_OUTPUT_DIR and PIRL_SEED override the config's output_dir and seed.
#[derive(Parser)]
#[command(name = "pirl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct PolicyArgs {
    /// Checkpoint whose greedy policy is used.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// `untrained` or `constant:<action>` instead of a checkpoint.
    #[arg(long)]
    policy: Option<String>,
    /// Start state as `h,x1,...,xn`; sampled from the start distribution if omitted.
    #[arg(long, allow_hyphen_values = true)]
    state: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network; writes metrics.csv, checkpoints and summary.json.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run rollouts and report the empirical safety probability.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Defaults to eval.rollouts from the config.
        #[arg(long)]
        rollouts: Option<usize>,
        /// Defaults to <output_dir>/eval.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the finite-difference oracle (state dimension <= 2).
    Oracle {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to <output_dir>/safety_field.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the learned safety probability over a 2D state slice as CSV.
    ExportMap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Row axis as name:min:max:points.
        #[arg(long, allow_hyphen_values = true)]
        rows: String,
        /// Column axis as name:min:max:points.
        #[arg(long, allow_hyphen_values = true)]
        cols: String,
        /// Fixed coordinate as name=value (repeatable).
        #[arg(long = "fix", allow_hyphen_values = true)]
        fixed: Vec<String>,
        /// Remaining horizon; defaults to tau_max.
        #[arg(long)]
        tau: Option<f64>,
        /// Defaults to <output_dir>/map_<rows>_<cols>.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a single trajectory CSV.
    Rollout {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Rollout index; selects the random stream.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Defaults to <output_dir>/rollout_<index>.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn policy_spec(args: &PolicyArgs) -> Result<PolicySpec, CliError> {
    match (&args.checkpoint, args.policy.as_deref()) {
        (Some(_), Some(_)) => Err(CliError::Config("give either --checkpoint or --policy, not both".into())),
        (Some(p), None) => Ok(PolicySpec::Greedy(p.clone())),
        (None, Some("untrained")) => Ok(PolicySpec::Untrained),
        (None, Some(p)) => match p.strip_prefix("constant:").map(str::parse) {
            Some(Ok(a)) => Ok(PolicySpec::Constant(a)),
            _ => Err(CliError::Config(format!("unknown policy {p:?}"))),
        },
        (None, None) => Err(CliError::Config("a policy is required: --checkpoint or --policy".into())),
    }
}

fn initial_spec(cfg: &ExperimentConfig, args: &PolicyArgs) -> Result<InitialSpec, CliError> {
    match &args.state {
        None => Ok(InitialSpec::Sampled),
        Some(s) => {
            let built = cfg.env.build()?;
            Ok(InitialSpec::Fixed(parse_state(s, built.as_dyn())?))
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let s = cmd_train(&cfg)?;
            println!(
                "trained {} episodes in {:.1}s; final moving-average reward {:.4}; outputs in {}",
                s.episodes,
                s.wall_time_s,
                s.final_moving_avg,
                cfg.output_dir.display()
            );
        }
        Command::Eval {
            config,
            policy,
            rollouts,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let spec = policy_spec(&policy)?;
            let initial = initial_spec(&cfg, &policy)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join("eval"));
            let s = cmd_eval(&cfg, &spec, &initial, rollouts.unwrap_or(cfg.eval.rollouts), &out)?;
            println!(
                "safety {:.4} ± {:.4} over {} rollouts; summary in {}",
                s.estimate,
                s.half_width_95,
                s.rollouts,
                out.join("eval_summary.json").display()
            );
        }
        Command::Oracle { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join("safety_field.json"));
            cmd_oracle(&cfg, &out)?;
            println!("safety field written to {}", out.display());
        }
        Command::ExportMap {
            config,
            checkpoint,
            rows,
            cols,
            fixed,
            tau,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows: AxisSpec = rows.parse()?;
            let cols: AxisSpec = cols.parse()?;
            let fixed = fixed.iter().map(|f| parse_fix(f)).collect::<Result<Vec<_>, _>>()?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join(format!("map_{}_{}.csv", rows.name, cols.name)));
            cmd_export_map(&cfg, &checkpoint, &rows, &cols, &fixed, tau, &out)?;
            println!("map written to {}", out.display());
        }
        Command::Rollout {
            config,
            policy,
            index,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let spec = policy_spec(&policy)?;
            let initial = initial_spec(&cfg, &policy)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join(format!("rollout_{index}.csv")));
            let r = cmd_rollout(&cfg, &spec, &initial, index, &out)?;
            println!("{} steps, return {}; trajectory in {}", r.actions.len(), r.total_reward(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pirl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
