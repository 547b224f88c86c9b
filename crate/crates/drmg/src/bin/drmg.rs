//! Command-line harness: instance generation, online runs, exact policy
//! evaluation, support-function oracles, and seed sweeps.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use drmg::dual::{brute_force_support, solve_query, Divergence, SupportQuery};
use drmg::equilibria::EqKind;
use drmg::game::{
    build_coordination_game, build_corrupted_bandit, build_initial_shock, build_random_game,
    validate_spec, GameSpec, JointPolicy,
};
use drmg::harness::{run_bandit_baseline, run_experiment, ExperimentConfig};
use drmg::planning::{exact_robust_vi, per_agent_gaps, regret_gap};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "drmg", about = "Distributionally robust Markov game harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a game spec JSON file.
    Gen(GenArgs),
    /// Run the online learner and write a regret trace.
    Run(RunArgs),
    /// Evaluate a policy (or the exact VI policy) on a game.
    Eval(EvalArgs),
    /// Solve one support-function query, optionally cross-checked against
    /// the brute-force oracle.
    Oracle(OracleArgs),
    /// Run one config across several seeds.
    Sweep(SweepArgs),
    /// Run the UCB1 bandit baseline on a one-step game.
    Bandit(BanditArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    InitialShock,
    CorruptedBandit,
    Random,
    Coordination,
}

#[derive(Clone, Copy, ValueEnum)]
enum DivArg {
    Tv,
    Kl,
}

impl From<DivArg> for Divergence {
    fn from(d: DivArg) -> Divergence {
        match d {
            DivArg::Tv => Divergence::Tv,
            DivArg::Kl => Divergence::Kl,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Nash,
    Cce,
    Ce,
}

impl From<KindArg> for EqKind {
    fn from(k: KindArg) -> EqKind {
        match k {
            KindArg::Nash => EqKind::Nash,
            KindArg::Cce => EqKind::Cce,
            KindArg::Ce => EqKind::Ce,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    #[arg(long, default_value_t = 2)]
    agents: usize,
    /// Per-agent action counts, comma separated; a single number repeats
    /// for every agent.
    #[arg(long, default_value = "2")]
    actions: String,
    #[arg(long, default_value_t = 4)]
    states: usize,
    #[arg(long, default_value_t = 3)]
    horizon: usize,
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    /// Per-agent radii for random games, comma separated.
    #[arg(long)]
    radii: Option<String>,
    #[arg(long, value_enum, default_value_t = DivArg::Tv)]
    divergence: DivArg,
    /// Secret joint action, comma separated per agent (0-based).
    #[arg(long)]
    secret: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Append an absorbing fail state to the trap instance.
    #[arg(long)]
    with_fail_state: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Trace CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Summary JSON output path.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::Cce)]
    kind: KindArg,
    /// Joint policy JSON; omitted means evaluate the exact robust VI
    /// policy for this kind.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Initial state to score from; defaults to the spec's pinned initial
    /// state or 0.
    #[arg(long)]
    s1: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    /// Support query JSON (values, center, radius, divergence, horizon).
    #[arg(long)]
    query: PathBuf,
    /// Also run the brute-force primal oracle at this resolution.
    #[arg(long)]
    brute_force: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BanditArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cumulative pseudo-regret CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list(s: &str, len: usize, what: &str) -> Result<Vec<usize>> {
    let vals: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("parsing {what} list {s:?}"))?;
    if vals.len() == 1 && len > 1 {
        return Ok(vec![vals[0]; len]);
    }
    if vals.len() != len {
        bail!("{what} list {s:?} has {} entries, expected {len}", vals.len());
    }
    Ok(vals)
}

fn load_spec(path: &Path) -> Result<GameSpec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading spec {}", path.display()))?;
    let spec: GameSpec = serde_json::from_str(&text).context("parsing spec JSON")?;
    let report = validate_spec(&spec);
    if !report.is_ok() {
        bail!("invalid spec:\n  {}", report.violations.join("\n  "));
    }
    Ok(spec)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let spec = match args.kind {
        GenKind::InitialShock => {
            let actions = parse_list(&args.actions, args.agents, "actions")?;
            if actions.iter().any(|&a| a != actions[0]) {
                bail!("the trap instance uses a common action count");
            }
            let secret = match &args.secret {
                Some(s) => parse_list(s, args.agents, "secret")?,
                None => vec![actions[0] - 1; args.agents],
            };
            build_initial_shock(
                args.agents,
                actions[0],
                args.horizon,
                args.sigma,
                &secret,
                args.with_fail_state,
            )?
        }
        GenKind::CorruptedBandit => {
            let actions = parse_list(&args.actions, args.agents, "actions")?;
            let secret = match &args.secret {
                Some(s) => parse_list(s, args.agents, "secret")?,
                None => actions.iter().map(|&a| a - 1).collect(),
            };
            build_corrupted_bandit(&actions, args.eps, args.sigma, &secret)?
        }
        GenKind::Random => {
            let actions = parse_list(&args.actions, args.agents, "actions")?;
            let radii: Vec<f64> = match &args.radii {
                Some(r) => {
                    let parts: Vec<f64> = r
                        .split(',')
                        .map(|t| t.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .context("parsing radii")?;
                    if parts.len() == 1 {
                        vec![parts[0]; args.agents]
                    } else if parts.len() == args.agents {
                        parts
                    } else {
                        bail!("radii list has wrong length");
                    }
                }
                None => vec![args.sigma; args.agents],
            };
            build_random_game(
                args.agents,
                args.states,
                &actions,
                args.horizon,
                &radii,
                args.divergence.into(),
                args.seed,
            )
        }
        GenKind::Coordination => build_coordination_game(args.divergence.into()),
    };
    let report = validate_spec(&spec);
    if !report.is_ok() {
        bail!("generated spec failed validation: {:?}", report.violations);
    }
    write_json(&spec, &args.out)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let spec = load_spec(&args.spec)?;
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).context("parsing config JSON")?;
    let (trace, summary) = run_experiment(&spec, &cfg)?;
    trace.write_csv(&args.out)?;
    eprintln!("wrote {}", args.out.display());
    if let Some(path) = &args.summary {
        write_json(&summary, path)?;
        eprintln!("wrote {}", path.display());
    }
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let spec = load_spec(&args.spec)?;
    let kind: EqKind = args.kind.into();
    let s1 = args.s1.or(spec.initial_state).unwrap_or(0);
    let policy: JointPolicy = match &args.policy {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text).context("parsing policy JSON")?
        }
        None => exact_robust_vi(&spec, kind, 1e-8)?.policy,
    };
    let report = policy.validate(&spec);
    if !report.is_ok() {
        bail!("invalid policy:\n  {}", report.violations.join("\n  "));
    }
    let gaps = per_agent_gaps(&spec, &policy, kind, s1)?;
    let gap = regret_gap(&spec, &policy, kind, s1)?;
    #[derive(Serialize)]
    struct EvalOut {
        kind: EqKind,
        s1: usize,
        per_agent_gaps: Vec<f64>,
        gap: f64,
    }
    println!(
        "{}",
        serde_json::to_string(&EvalOut {
            kind,
            s1,
            per_agent_gaps: gaps,
            gap
        })?
    );
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.query)
        .with_context(|| format!("reading query {}", args.query.display()))?;
    let query: SupportQuery = serde_json::from_str(&text).context("parsing query JSON")?;
    let result = solve_query(&query)?;
    #[derive(Serialize)]
    struct OracleOut {
        value: f64,
        eta: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        brute_force: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        abs_error: Option<f64>,
    }
    let brute = match args.brute_force {
        Some(res) => Some(brute_force_support(&query, res)?),
        None => None,
    };
    println!(
        "{}",
        serde_json::to_string(&OracleOut {
            value: result.value,
            eta: result.eta,
            brute_force: brute,
            abs_error: brute.map(|b| (b - result.value).abs()),
        })?
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let spec = load_spec(&args.spec)?;
    let text = std::fs::read_to_string(&args.config)?;
    let base: ExperimentConfig = serde_json::from_str(&text).context("parsing config JSON")?;
    std::fs::create_dir_all(&args.out_dir)?;
    let mut finals = Vec::new();
    for offset in 0..args.seeds {
        let mut cfg = base.clone();
        cfg.seed = base.seed.wrapping_add(offset);
        let (trace, summary) = run_experiment(&spec, &cfg)?;
        trace.write_csv(&args.out_dir.join(format!("trace_{}.csv", cfg.seed)))?;
        write_json(&summary, &args.out_dir.join(format!("summary_{}.json", cfg.seed)))?;
        finals.push(summary.final_avg_gap);
        eprintln!("seed {}: final_avg_gap {:.6e}", cfg.seed, summary.final_avg_gap);
    }
    let mean = finals.iter().sum::<f64>() / finals.len().max(1) as f64;
    println!("{}", serde_json::to_string(&serde_json::json!({"seeds": args.seeds, "mean_final_avg_gap": mean}))?);
    Ok(())
}

fn cmd_bandit(args: BanditArgs) -> Result<()> {
    let spec = load_spec(&args.spec)?;
    let regret = run_bandit_baseline(&spec, args.episodes, args.seed)?;
    if let Some(path) = &args.out {
        let mut csv = String::from("k,cum_pseudo_regret\n");
        for (k, r) in regret.iter().enumerate() {
            csv.push_str(&format!("{k},{r:.12e}\n"));
        }
        std::fs::write(path, csv)?;
        eprintln!("wrote {}", path.display());
    }
    println!(
        "{}",
        serde_json::to_string(&serde_json::json!({
            "episodes": args.episodes,
            "final_cum_pseudo_regret": regret.last().copied().unwrap_or(0.0)
        }))?
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(args) => cmd_gen(args),
        Command::Run(args) => cmd_run(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Bandit(args) => cmd_bandit(args),
    }
}
