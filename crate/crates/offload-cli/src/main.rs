//! Command-line harness for the offloading simulator: train agents,
//! evaluate policies against the fixed strategies, run the exhaustive
//! per-slot search, validate the dedup volume model byte-for-byte, and
//! sweep scenario parameters.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use offload_core::config::{parse_config, ExperimentConfig};
use offload_core::cost::{reward, Objective, SlotCostBreakdown};
use offload_core::dedup::{validate_planted, CdcParams};
use offload_core::drl::checkpoint::{load_agent, save_agent};
use offload_core::drl::{evaluate, train, Algo, BaselineKind, EvalPolicy, EvalSummary, Topology};
use offload_core::oracle::{grid_search_slot, oracle_episode, sample_snapshots, GridSpec};
use offload_core::sim::{mix_seed, streams, EpisodeState};

type CliError = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(name = "offload", about = "Cooperative data offloading simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write its checkpoint plus the training curve.
    Train(TrainArgs),
    /// Evaluate a checkpointed agent or a fixed strategy.
    Eval(EvalArgs),
    /// Evaluate all three fixed strategies side by side.
    Baseline(BaselineArgs),
    /// Exhaustive per-slot grid search, per episode or on slot snapshots.
    Oracle(OracleArgs),
    /// Check the analytic dedup volume against byte-level deduplication.
    DedupValidate(DedupArgs),
    /// Evaluate the fixed strategies across a scenario parameter grid.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file overlaying the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; every random stream is derived from it.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Directory for result files (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_algo, help = "dqn, ddpg or sac")]
    algo: Algo,
    #[arg(long, value_parser = parse_topology, help = "centralized or decentralized")]
    topology: Topology,
    #[arg(long, value_parser = parse_objective, help = "time or energy")]
    objective: Objective,
    /// Episode count override (default: the config's training length).
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint file produced by `train`.
    #[arg(long, conflicts_with = "policy")]
    checkpoint: Option<PathBuf>,
    /// Fixed strategy: all-base, all-leader or balanced.
    #[arg(long, value_parser = parse_baseline)]
    policy: Option<BaselineKind>,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_objective, default_value = "time")]
    objective: Objective,
    /// `episode` plays whole episodes grid-optimally; `slot` scores
    /// independent mid-episode snapshots.
    #[arg(long, default_value = "episode", value_parser = ["episode", "slot"])]
    mode: String,
    #[arg(long, default_value_t = 100)]
    count: usize,
}

#[derive(Args)]
struct DedupArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 50)]
    seeds: u64,
    /// Chunk size in KiB.
    #[arg(long, default_value_t = 1024)]
    chunk_kib: usize,
    #[arg(long, default_value_t = 0.1)]
    beta_min: f64,
    #[arg(long, default_value_t = 0.9)]
    beta_max: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// `redundancy` sweeps the duplicate fraction, `vehicles` the fleet size.
    #[arg(long, default_value = "redundancy", value_parser = ["redundancy", "vehicles"])]
    param: String,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
}

fn parse_algo(s: &str) -> Result<Algo, String> {
    Algo::from_name(s).ok_or_else(|| format!("expected dqn, ddpg or sac, got `{s}`"))
}

fn parse_topology(s: &str) -> Result<Topology, String> {
    Topology::from_name(s).ok_or_else(|| format!("expected centralized or decentralized, got `{s}`"))
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    Objective::from_name(s).ok_or_else(|| format!("expected time or energy, got `{s}`"))
}

fn parse_baseline(s: &str) -> Result<BaselineKind, String> {
    BaselineKind::from_name(s)
        .ok_or_else(|| format!("expected all-base, all-leader or balanced, got `{s}`"))
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::DedupValidate(a) => cmd_dedup(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => Ok(parse_config(&fs::read_to_string(p)?)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    invocation: serde_json::Value,
    config: &'a ExperimentConfig,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    seed: u64,
    invocation: serde_json::Value,
    config: &ExperimentConfig,
) -> Result<(), CliError> {
    let m = Manifest { command, seed, invocation, config };
    write_file(dir, "manifest.json", &serde_json::to_string_pretty(&m)?)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n.max(1.0);
    (mean, var.sqrt())
}

fn print_summary(s: &EvalSummary) {
    println!(
        "{:<28} time {:>8.3} ± {:.3} s   energy {:>8.3} ± {:.3} J   violations/ep {:.2}",
        s.label,
        s.mean_time_s,
        s.ci95_time(),
        s.mean_energy_j,
        s.ci95_energy(),
        s.mean_violations
    );
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.common.config)?;
    let episodes = a.episodes.unwrap_or(cfg.agent.episodes);
    eprintln!(
        "training {}-{}-{} for {} episodes (seed {})",
        a.algo.name(),
        a.topology.name(),
        a.objective.name(),
        episodes,
        a.common.seed
    );
    let result = train(&cfg, a.algo, a.topology, a.objective, a.common.seed, a.episodes);

    let window = 100.min(result.episodes.len());
    let head: Vec<f64> = result.episodes[..window].iter().map(|e| e.objective_total).collect();
    let tail: Vec<f64> =
        result.episodes[result.episodes.len() - window..].iter().map(|e| e.objective_total).collect();
    let (head_mean, _) = mean_std(&head);
    let (tail_mean, _) = mean_std(&tail);
    println!(
        "{}: first {} episodes mean cost {:.3}, last {} mean cost {:.3}",
        result.agent.label(),
        window,
        head_mean,
        window,
        tail_mean
    );

    if let Some(dir) = &a.common.out {
        write_manifest(
            dir,
            "train",
            a.common.seed,
            serde_json::json!({
                "algo": a.algo.name(),
                "topology": a.topology.name(),
                "objective": a.objective.name(),
                "episodes": episodes,
            }),
            &cfg,
        )?;
        let mut csv = String::from("episode,objective_total,violations,epsilon_or_alpha,wallclock_ms\n");
        for e in &result.episodes {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                e.episode, e.objective_total, e.violations, e.epsilon_or_alpha, e.wallclock_ms
            ));
        }
        write_file(dir, "train.csv", &csv)?;
        fs::create_dir_all(dir)?;
        let ckpt = dir.join("checkpoint.bin");
        save_agent(&ckpt, &result.agent, &cfg.agent)?;
        println!("wrote {}", ckpt.display());
    }
    Ok(())
}

/// Replay the first evaluation episode greedily and dump one row per slot.
fn slots_csv(cfg: &ExperimentConfig, policy: &EvalPolicy, seed: u64) -> String {
    let mut ep = EpisodeState::init(&cfg.sim, mix_seed(seed, streams::EVAL_ENV, 0));
    let mut csv = SlotCostBreakdown::csv_header(cfg.sim.n_followers());
    csv.push('\n');
    let mut prev_reward = None;
    while !ep.done() {
        let actions = match policy {
            EvalPolicy::Baseline(kind) => {
                vec![kind.action(cfg.sim.p_max_w); cfg.sim.n_followers()]
            }
            EvalPolicy::Trained(agent) => agent.greedy_actions(&ep, prev_reward),
        };
        let slot = ep.slot;
        let b = ep.advance_slot(&actions);
        if let EvalPolicy::Trained(agent) = policy {
            prev_reward = Some(reward(&cfg.sim, agent.objective, &b));
        }
        csv.push_str(&b.csv_row(slot));
        csv.push('\n');
    }
    csv
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.common.config)?;
    let loaded = match &a.checkpoint {
        Some(path) => Some(load_agent(path)?),
        None => None,
    };
    let policy = match (&loaded, a.policy) {
        (Some((agent, _)), _) => EvalPolicy::Trained(agent),
        (None, Some(kind)) => EvalPolicy::Baseline(kind),
        (None, None) => return Err("pass --checkpoint FILE or --policy NAME".into()),
    };
    let summary = evaluate(&cfg.sim, policy, a.episodes, a.common.seed);
    print_summary(&summary);
    if let Some(dir) = &a.common.out {
        write_manifest(
            dir,
            "eval",
            a.common.seed,
            serde_json::json!({ "policy": summary.label, "episodes": a.episodes }),
            &cfg,
        )?;
        write_file(dir, "eval.json", &serde_json::to_string_pretty(&summary)?)?;
        write_file(dir, "slots.csv", &slots_csv(&cfg, &policy, a.common.seed))?;
    }
    Ok(())
}

fn cmd_baseline(a: BaselineArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.common.config)?;
    let mut summaries = Vec::new();
    for kind in BaselineKind::ALL {
        let s = evaluate(&cfg.sim, EvalPolicy::Baseline(kind), a.episodes, a.common.seed);
        print_summary(&s);
        summaries.push(s);
    }
    if let Some(dir) = &a.common.out {
        write_manifest(
            dir,
            "baseline",
            a.common.seed,
            serde_json::json!({ "episodes": a.episodes }),
            &cfg,
        )?;
        write_file(dir, "baselines.json", &serde_json::to_string_pretty(&summaries)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleReport {
    objective: Objective,
    mode: String,
    count: usize,
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
    values: Vec<f64>,
}

fn cmd_oracle(a: OracleArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.common.config)?;
    let spec = GridSpec::new(a.objective);
    let values: Vec<f64> = match a.mode.as_str() {
        "episode" => (0..a.count)
            .map(|k| {
                let seed = mix_seed(a.common.seed, streams::EVAL_ENV, k as u64);
                oracle_episode(&cfg.sim, seed, &spec).map(|(_, total)| total)
            })
            .collect::<Result<_, _>>()?,
        "slot" => sample_snapshots(&cfg.sim, a.common.seed, a.count)
            .iter()
            .map(|ep| grid_search_slot(ep, &spec, &[]).map(|sol| sol.score))
            .collect::<Result<_, _>>()?,
        _ => unreachable!("clap restricts mode"),
    };
    let (mean, std) = mean_std(&values);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "grid search ({}, {} {}s): mean {:.4} std {:.4} min {:.4} max {:.4}",
        a.objective.name(),
        a.count,
        a.mode,
        mean,
        std,
        min,
        max
    );
    if let Some(dir) = &a.common.out {
        write_manifest(
            dir,
            "oracle",
            a.common.seed,
            serde_json::json!({ "objective": a.objective.name(), "mode": a.mode, "count": a.count }),
            &cfg,
        )?;
        let report = OracleReport {
            objective: a.objective,
            mode: a.mode.clone(),
            count: a.count,
            mean,
            std,
            min,
            max,
            values,
        };
        write_file(dir, "oracle.json", &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct DedupRow {
    seed: u64,
    planted: f64,
    measured: f64,
}

#[derive(Serialize)]
struct DedupReport {
    chunk_bytes: usize,
    rows: Vec<DedupRow>,
    worst_abs_error: f64,
    analytic_unique_bits: f64,
    measured_unique_bits: f64,
    aggregate_deviation: f64,
}

fn cmd_dedup(a: DedupArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.common.config)?;
    let cdc = CdcParams::from_config(&cfg.sim);
    let chunk_bytes = a.chunk_kib * 1024;
    let mut rows = Vec::new();
    let mut analytic_total = 0.0;
    let mut measured_total = 0.0;
    let mut worst = 0.0f64;
    for k in 0..a.seeds {
        let f = if a.seeds > 1 { k as f64 / (a.seeds - 1) as f64 } else { 0.5 };
        let planted = a.beta_min + (a.beta_max - a.beta_min) * f;
        let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(a.common.seed, streams::PAYLOAD, k));
        let (ms, analytic, measured) = validate_planted(&[planted], chunk_bytes, &cdc, &mut rng)?;
        worst = worst.max((ms[0].measured - planted).abs());
        analytic_total += analytic;
        measured_total += measured;
        rows.push(DedupRow { seed: k, planted, measured: ms[0].measured });
    }
    let deviation = (measured_total - analytic_total).abs() / analytic_total;
    println!(
        "{} runs at {} KiB: worst |measured - planted| {:.4}, unique-volume deviation {:.2}%",
        a.seeds,
        a.chunk_kib,
        worst,
        100.0 * deviation
    );
    if let Some(dir) = &a.common.out {
        write_manifest(
            dir,
            "dedup-validate",
            a.common.seed,
            serde_json::json!({
                "seeds": a.seeds,
                "chunk_kib": a.chunk_kib,
                "beta_min": a.beta_min,
                "beta_max": a.beta_max,
            }),
            &cfg,
        )?;
        let report = DedupReport {
            chunk_bytes,
            rows,
            worst_abs_error: worst,
            analytic_unique_bits: analytic_total,
            measured_unique_bits: measured_total,
            aggregate_deviation: deviation,
        };
        write_file(dir, "dedup.json", &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    param: String,
    value: f64,
    policy: String,
    mean_time_s: f64,
    ci95_time_s: f64,
    mean_energy_j: f64,
    ci95_energy_j: f64,
    mean_violations: f64,
}

fn cmd_sweep(a: SweepArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.common.config)?;
    let values: Vec<f64> = match a.param.as_str() {
        "redundancy" => vec![0.3, 0.4, 0.5, 0.6, 0.7],
        "vehicles" => vec![3.0, 4.0, 5.0, 6.0, 7.0],
        _ => unreachable!("clap restricts param"),
    };
    let mut rows = Vec::new();
    for &v in &values {
        let mut sim = cfg.sim.clone();
        match a.param.as_str() {
            "redundancy" => sim.redundancy = v,
            _ => sim.n_vehicles = v as usize,
        }
        println!("{} = {v}", a.param);
        for kind in BaselineKind::ALL {
            let s = evaluate(&sim, EvalPolicy::Baseline(kind), a.episodes, a.common.seed);
            print_summary(&s);
            rows.push(SweepRow {
                param: a.param.clone(),
                value: v,
                policy: kind.name().to_string(),
                mean_time_s: s.mean_time_s,
                ci95_time_s: s.ci95_time(),
                mean_energy_j: s.mean_energy_j,
                ci95_energy_j: s.ci95_energy(),
                mean_violations: s.mean_violations,
            });
        }
    }
    if let Some(dir) = &a.common.out {
        write_manifest(
            dir,
            "sweep",
            a.common.seed,
            serde_json::json!({ "param": a.param, "episodes": a.episodes }),
            &cfg,
        )?;
        write_file(dir, "sweep.json", &serde_json::to_string_pretty(&rows)?)?;
    }
    Ok(())
}
