//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Training-based criteria use the shipped configs under `configs/`, so this
//! takes tens of minutes on one core. The process exits nonzero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pirl_cli::commands::{cmd_eval, cmd_export_map, cmd_oracle, cmd_train, AxisSpec, EvalSummary, InitialSpec, PolicySpec};
use pirl_cli::config::ExperimentConfig;
use pirl_core::benchmark::{make_brownian_benchmark, BrownianConfig};
use pirl_core::env::{network_input, Environment};
use pirl_core::oracle::{brownian_survival_series, evaluate_policy_mc, linspace, solve_hjb_fd, Axis, FdConfig, Grid, NetValue, SafetyField};
use pirl_core::qnet::{checkpoint_load, InputScaling, NetworkSpec, QNetwork};
use pirl_core::rng::{domain, SeedTree};
use pirl_core::sde::{episode_return, mc_safety_probability, step_euler_maruyama, AugmentedState, ConstantPolicy, Policy};
use pirl_core::training::{init_network, GreedyPolicy};
use pirl_core::vehicle::state::idx;
use pirl_core::vehicle::tire::fiala_lateral_force;
use pirl_core::vehicle::{make_cornering_env, ActionGrid, TireParams, VehicleEnvConfig};
use rand::Rng;

const SEEDS: [u64; 4] = [0, 1, 2, 3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load_config(name: &str, seed: u64, out: &Path) -> ExperimentConfig {
    let text = fs::read_to_string(configs_dir().join(name)).unwrap();
    let mut cfg = ExperimentConfig::parse(&text).unwrap();
    cfg.seed = seed;
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn probe_errors(net: &QNetwork, env: &dyn Environment, field: &SafetyField) -> (f64, f64) {
    let value = NetValue::new(net, env).unwrap();
    let errs: Vec<f64> = linspace(-0.9, 0.9, 19)
        .into_iter()
        .map(|x| (value.value(1.0, &[x]) - field.value_at(1.0, &[x])).abs())
        .collect();
    (errs.iter().sum::<f64>() / errs.len() as f64, errs.iter().cloned().fold(0.0, f64::max))
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn oracle_cross_validation() -> Outcome {
    let start = Instant::now();
    let env = make_brownian_benchmark(BrownianConfig {
        u_max: 0.0,
        ..Default::default()
    })
    .unwrap();
    let cfg = FdConfig::new(
        Grid {
            axes: vec![Axis::new(-1.0, 1.0, 201)],
        },
        1.0,
        0.02,
    );
    let field = solve_hjb_fd(env.system(), env.safe_set(), &cfg, "brownian").unwrap();
    let series = brownian_survival_series(1.0, 0.5, 1.0, 0.0, 0.0);
    let fd = field.value_at(1.0, &[0.0]);
    let mc = evaluate_policy_mc(&env, &ConstantPolicy(1), &[AugmentedState::new(1.0, vec![0.0])], 100_000, &SeedTree::new(1), true).unwrap()[0];
    let secs = start.elapsed().as_secs_f64();
    let fd_ok = (fd - series).abs() <= 1e-3;
    let mc_ok = (mc.estimate - series).abs() <= mc.half_width_95 + 5e-3;
    outcome(
        fd_ok && mc_ok && secs <= 60.0,
        format!(
            "series {series:.5}; FD {fd:.5} (|d| {:.1e} <= 1e-3: {fd_ok}); MC {:.5} ± {:.5} (|d| {:.4} <= CI + 5e-3: {mc_ok}); {secs:.1}s <= 60s",
            (fd - series).abs(),
            mc.estimate,
            mc.half_width_95,
            (mc.estimate - series).abs()
        ),
    )
}

struct BenchRun {
    mae: f64,
    max_abs: f64,
    final_moving_avg: f64,
}

fn bench_run(root: &Path, label: &str, seed: u64, physics: bool) -> BenchRun {
    let mut cfg = load_config("bench1d.toml", seed, &root.join(format!("{label}_{seed}")));
    if !physics {
        cfg.train.lambda = 0.0;
        cfg.train.mu = 0.0;
    }
    let summary = cmd_train(&cfg).unwrap();
    let built = cfg.env.build().unwrap();
    let env = built.as_dyn();
    let field = cmd_oracle(&cfg, &cfg.output_dir.join("field.json")).unwrap();
    let net = checkpoint_load(&cfg.output_dir.join("final.ckpt")).unwrap();
    let (mae, max_abs) = probe_errors(&net, env, &field);
    BenchRun {
        mae,
        max_abs,
        final_moving_avg: summary.final_moving_avg,
    }
}

fn learner_vs_oracle(runs: &[BenchRun], secs: f64) -> Outcome {
    let passing = runs.iter().filter(|r| r.mae <= 0.05 && r.max_abs <= 0.12).count();
    let rows: Vec<String> = runs.iter().map(|r| format!("{:.4}/{:.4}", r.mae, r.max_abs)).collect();
    outcome(
        passing >= 3 && secs <= 1800.0,
        format!("MAE/max per seed [{}]; {passing}/4 within 0.05/0.12 (need 3); {secs:.0}s <= 1800s", rows.join(", ")),
    )
}

fn training_example(runs: &[BenchRun]) -> Outcome {
    let cfg = load_config("bench1d.toml", 0, Path::new("unused"));
    let dir = tempfile::tempdir().unwrap();
    let field = cmd_oracle(&cfg, &dir.path().join("field.json")).unwrap();
    // Ω_D is x ~ U[-0.9, 0.9] at τ = 1.
    let xs = linspace(-0.9, 0.9, 1801);
    let optimum = xs.iter().map(|&x| field.value_at(1.0, &[x])).sum::<f64>() / xs.len() as f64;
    let gaps: Vec<f64> = runs.iter().map(|r| r.final_moving_avg - optimum).collect();
    let ok = gaps.iter().all(|g| g.abs() <= 0.05);
    let rows: Vec<String> = runs.iter().map(|r| format!("{:.3}", r.final_moving_avg)).collect();
    outcome(
        ok,
        format!("final moving-average reward [{}] vs FD optimum over start states {optimum:.3}; all within 0.05: {ok}", rows.join(", ")),
    )
}

fn derivative_exactness() -> Outcome {
    let (mut g_param, mut g_input, mut hvp, mut pde): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let rel = |a: &[f64], b: &[f64]| {
        let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        diff / a.iter().chain(b).map(|v| v.abs()).fold(1e-6, f64::max)
    };
    let shift = |x: &[f64], v: &[f64], h: f64| -> Vec<f64> { x.iter().zip(v).map(|(a, b)| a + h * b).collect() };
    for i in 0..100 {
        let mut rng = SeedTree::new(77).stream(50, i);
        let input_dim = rng.random_range(1..=4);
        let spec = NetworkSpec {
            input_dim,
            hidden_layers: rng.random_range(1..=3),
            hidden_width: rng.random_range(2..=6),
            output_dim: rng.random_range(1..=4),
        };
        let net = QNetwork::new(spec, InputScaling::identity(input_dim), vec![], &mut rng).unwrap();
        let x: Vec<f64> = (0..input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = rng.random_range(0..net.num_actions());
        let q = |n: &QNetwork, x: &[f64]| n.forward(x).unwrap()[a];
        let h = 1e-5;

        let g = net.grad_params(&x, a, 1.0).unwrap();
        let fd: Vec<f64> = (0..g.len())
            .map(|k| {
                let mut p = net.clone();
                p.params[k] += h;
                let up = q(&p, &x);
                p.params[k] -= 2.0 * h;
                (up - q(&p, &x)) / (2.0 * h)
            })
            .collect();
        g_param = g_param.max(rel(&g, &fd));

        let unit = |k: usize| -> Vec<f64> { (0..input_dim).map(|j| (j == k) as u8 as f64).collect() };
        let gi = net.grad_input(&x, a).unwrap();
        let fd: Vec<f64> = (0..input_dim)
            .map(|k| (q(&net, &shift(&x, &unit(k), h)) - q(&net, &shift(&x, &unit(k), -h))) / (2.0 * h))
            .collect();
        g_input = g_input.max(rel(&gi, &fd));

        let v: Vec<f64> = (0..input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hv = net.hessian_vector_product(&x, a, &v).unwrap();
        let (gp, gm) = (net.grad_input(&shift(&x, &v, h), a).unwrap(), net.grad_input(&shift(&x, &v, -h), a).unwrap());
        let fd: Vec<f64> = gp.iter().zip(&gm).map(|(p, m)| (p - m) / (2.0 * h)).collect();
        hvp = hvp.max(rel(&hv, &fd));

        let mut drift = v.clone();
        drift[0] = -1.0;
        let noise: Vec<Vec<f64>> = (0..rng.random_range(0..=2))
            .map(|_| {
                let mut c: Vec<f64> = (0..input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                c[0] = 0.0;
                c
            })
            .collect();
        let exact = net.pde_operator(&x, a, &drift, &noise).unwrap();
        let h2 = 1e-4;
        let q0 = q(&net, &x);
        let mut approx = (q(&net, &shift(&x, &drift, h)) - q(&net, &shift(&x, &drift, -h))) / (2.0 * h);
        for c in &noise {
            approx += 0.5 * (q(&net, &shift(&x, c, h2)) - 2.0 * q0 + q(&net, &shift(&x, c, -h2))) / (h2 * h2);
        }
        pde = pde.max((exact - approx).abs() / exact.abs().max(approx.abs()).max(1e-6));
    }
    outcome(
        g_param <= 1e-5 && g_input <= 1e-5 && hvp <= 1e-5 && pde <= 1e-3,
        format!("100 nets; worst rel err grad_params {g_param:.1e}, grad_input {g_input:.1e}, HVP {hvp:.1e} (<= 1e-5), PDE operator {pde:.1e} (<= 1e-3)"),
    )
}

fn return_equals_safety_probability() -> Outcome {
    let env = make_brownian_benchmark(BrownianConfig::default()).unwrap();
    let integ = env.integrator();
    let n = 4000;
    let mut rng = SeedTree::new(404).stream(60, 0);
    let (mut within, mut paired_identical, mut worst_z): (usize, usize, f64) = (0, 0, 0.0);
    for j in 0..20u64 {
        let s0 = AugmentedState::new(rng.random_range(0.0..1.0), vec![rng.random_range(-0.95..0.95)]);
        let net = init_network(&env, 2, 16, &SeedTree::new(1000 + j)).unwrap();
        let greedy = GreedyPolicy { net: &net, env: &env };
        let toward_centre = |s: &AugmentedState| if s.state[0] > 0.0 { 0 } else { 2 };
        let constant = ConstantPolicy((j % 3) as usize);
        let policy: &dyn Policy = match j % 3 {
            0 => &greedy,
            1 => &toward_centre,
            _ => &constant,
        };
        let returns = |seeds: &SeedTree| -> f64 {
            (0..n)
                .map(|i| {
                    let mut r = seeds.stream(domain::ROLLOUT, i as u64);
                    episode_return(env.system(), env.safe_set(), policy, &s0, &integ, env.reward_kind(), &mut r).unwrap()
                })
                .sum::<f64>()
                / n as f64
        };
        let mean_return = returns(&SeedTree::new(5000 + j));
        let mc = mc_safety_probability(env.system(), env.safe_set(), policy, &s0, &integ, n, &SeedTree::new(9000 + j), 0).unwrap();
        // Independent estimates: the difference has variance 2p(1-p)/n.
        let p = 0.5 * (mean_return + mc.estimate);
        let sd = (2.0 * p * (1.0 - p) / n as f64).sqrt();
        let diff = (mean_return - mc.estimate).abs();
        if diff <= 3.0 * sd || diff == 0.0 {
            within += 1;
        }
        if sd > 0.0 {
            worst_z = worst_z.max(diff / sd);
        }
        if returns(&SeedTree::new(9000 + j)) == mc.estimate {
            paired_identical += 1;
        }
    }
    outcome(
        within == 20,
        format!("{within}/20 (state, policy) pairs within 3 sigma (worst {worst_z:.2}); same-stream estimates identical for {paired_identical}/20"),
    )
}

fn ablation(pirl: &[BenchRun], plain: &[BenchRun]) -> Outcome {
    let a: Vec<f64> = pirl.iter().map(|r| r.mae).collect();
    let b: Vec<f64> = plain.iter().map(|r| r.mae).collect();
    let (ma, mb) = (median(&a), median(&b));
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    outcome(
        ma <= mb,
        format!("median final MAE with physics {ma:.4} [{}] vs without {mb:.4} [{}]", fmt(&a), fmt(&b)),
    )
}

fn cornering_map(root: &Path) -> Outcome {
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut passing = 0;
    for seed in SEEDS {
        let cfg = load_config("cornering.toml", seed, &root.join(format!("corner_{seed}")));
        cmd_train(&cfg).unwrap();
        let e: AxisSpec = "e:-0.9:0.9:3".parse().unwrap();
        let psi: AxisSpec = "psi:0:0:1".parse().unwrap();
        let map = cmd_export_map(
            &cfg,
            &cfg.output_dir.join("final.ckpt"),
            &e,
            &psi,
            &[("v_x".into(), 10.0)],
            Some(5.0),
            &cfg.output_dir.join("map_e_psi.csv"),
        )
        .unwrap();
        let (left, centre, right) = (map[0][0], map[1][0], map[2][0]);
        if centre >= 0.8 && centre > left && centre > right {
            passing += 1;
        }
        rows.push(format!("q(-0.9,0) {left:.4} q(0,0) {centre:.4} q(0.9,0) {right:.4}"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        passing >= 3 && secs <= 7200.0,
        format!("[{}]; {passing}/4 seeds pass (need 3); {secs:.0}s <= 7200s", rows.join("; ")),
    )
}

fn drift_property(root: &Path) -> Outcome {
    let cfg = load_config("drift.toml", 0, &root.join("drift"));
    cmd_train(&cfg).unwrap();
    let n = 100;
    let eval = |p: PolicySpec, name: &str| -> EvalSummary { cmd_eval(&cfg, &p, &InitialSpec::Sampled, n, &cfg.output_dir.join(name)).unwrap() };
    let base = eval(PolicySpec::Untrained, "eval_untrained");
    let trained = eval(PolicySpec::Greedy(cfg.output_dir.join("final.ckpt")), "eval_trained");
    let gain = trained.estimate - base.estimate;
    let slip = trained.sideslip.unwrap();
    outcome(
        gain >= 0.3 && slip.completed > 0 && slip.fraction >= 0.5,
        format!(
            "safety trained {:.2} vs untrained {:.2} over {n} paired rollouts (gain {gain:.2} >= 0.3); {} completed corners, |beta| >= 10 deg on {:.0}% of {} arc steps (>= 50%)",
            trained.estimate,
            base.estimate,
            slip.completed,
            100.0 * slip.fraction,
            slip.arc_steps
        ),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            let mut bytes = fs::read(&path).unwrap();
            if rel == "summary.json" {
                // Wall-clock time is the one field that cannot repeat.
                let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                v.as_object_mut().unwrap().remove("wall_time_s");
                bytes = serde_json::to_vec(&v).unwrap();
            }
            out.insert(rel, bytes);
        }
    }
    out
}

fn determinism(root: &Path) -> Outcome {
    let text = fs::read_to_string(configs_dir().join("bench1d.toml"))
        .unwrap()
        .replace("episodes = 6000", "episodes = 300")
        .replace("checkpoint_every = 1000", "checkpoint_every = 100");
    let mut cfg = ExperimentConfig::parse(&text).unwrap();
    cfg.seed = 17;
    cfg.output_dir = root.join("determinism_run");
    let mut snaps = Vec::new();
    for _ in 0..2 {
        let _ = fs::remove_dir_all(&cfg.output_dir);
        cmd_train(&cfg).unwrap();
        snaps.push(snapshot(&cfg.output_dir));
    }
    let files: Vec<&String> = snaps[0].keys().collect();
    let identical = snaps[0] == snaps[1];
    outcome(
        identical && files.iter().any(|f| f.as_str() == "metrics.csv") && files.iter().any(|f| f.as_str() == "final.ckpt"),
        format!("two training runs, seed 17: {} files byte-identical: {identical}", files.len()),
    )
}

fn mechanics_invariants() -> Outcome {
    let mut failures = Vec::new();

    let mut cfg = VehicleEnvConfig::cornering();
    cfg.noise = [0.0; idx::DIM];
    cfg.corner.entry_length = 500.0;
    let env = make_cornering_env(cfg).unwrap();
    let straight = ActionGrid.index_of(0.0, 0.8).unwrap();
    let mut x = vec![10.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let mut rng = SeedTree::new(0).stream(0, 0);
    let mut worst_e: f64 = 0.0;
    for _ in 0..200 {
        x = step_euler_maruyama(env.system(), &x, straight, &env.integrator(), &mut rng).unwrap();
        worst_e = worst_e.max(x[idx::E].abs());
    }
    if worst_e > 1e-9 {
        failures.push(format!("straight line |e| {worst_e:e}"));
    }

    let tire = TireParams {
        cornering_stiffness: 80_000.0,
        friction: 1.0,
    };
    let fz = 6_000.0;
    let sat = tire.saturation_angle(fz);
    for alpha in linspace(-1.5, 1.5, 3001) {
        let f = fiala_lateral_force(&tire, alpha, fz);
        if fiala_lateral_force(&tire, -alpha, fz) != -f || f.abs() > fz * (1.0 + 1e-12) {
            failures.push(format!("tire at alpha {alpha}"));
            break;
        }
        if alpha.abs() > sat && (f.abs() - fz).abs() > 1e-9 {
            failures.push(format!("tire not saturated at alpha {alpha}"));
            break;
        }
    }

    let bench = load_config("bench1d.toml", 0, Path::new("unused"));
    let dir = tempfile::tempdir().unwrap();
    let field = cmd_oracle(&bench, &dir.path().join("field.json")).unwrap();
    let nodes = field.slice(0).len();
    let monotone = (1..field.taus.len()).all(|t| (0..nodes).all(|k| field.slice(t)[k] <= field.slice(t - 1)[k] + 1e-15));
    if !monotone {
        failures.push("FD field increases with tau".into());
    }

    let built = bench.env.build().unwrap();
    let benv = built.as_dyn();
    let mut input = Vec::new();
    let mut qrng = SeedTree::new(3).stream(61, 0);
    for seed in 0..20 {
        let net = init_network(benv, 3, 32, &SeedTree::new(seed)).unwrap();
        for _ in 0..500 {
            let s = AugmentedState::new(qrng.random_range(0.0..1.0), vec![qrng.random_range(-1.0..1.0)]);
            network_input(benv, &s, &mut input);
            if net.forward(&input).unwrap().iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
                failures.push("Q output outside (0, 1)".into());
                break;
            }
        }
    }

    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("straight line max |e| {worst_e:.1e}; tire odd and saturated; FD monotone in tau over {} slices; Q in (0, 1)", field.taus.len())
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let root = root.path();
    let mut lines: Vec<(String, Outcome)> = Vec::new();
    let mut report = |name: &str, o: Outcome| {
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        lines.push((name.to_string(), o));
    };

    report("1 oracle cross-validation", oracle_cross_validation());

    let start = Instant::now();
    let pirl: Vec<BenchRun> = SEEDS.iter().map(|&s| bench_run(root, "pirl", s, true)).collect();
    let pirl_secs = start.elapsed().as_secs_f64();
    report("2 learner vs oracle", learner_vs_oracle(&pirl, pirl_secs));
    report("3 derivative exactness", derivative_exactness());
    report("4 return equals safety probability", return_equals_safety_probability());
    let plain: Vec<BenchRun> = SEEDS.iter().map(|&s| bench_run(root, "plain", s, false)).collect();
    report("5 physics loss ablation", ablation(&pirl, &plain));
    report("6 cornering safety map", cornering_map(root));
    report("7 drift env", drift_property(root));
    report("8 determinism", determinism(root));
    report("9 mechanics invariants", mechanics_invariants());
    report("training example", training_example(&pirl));

    let failed: Vec<&str> = lines.iter().filter(|(_, o)| !o.pass).map(|(n, _)| n.as_str()).collect();
    println!("{} of {} checks passed", lines.len() - failed.len(), lines.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
