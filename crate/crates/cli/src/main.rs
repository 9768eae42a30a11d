//! `moesim` command line.
//!
//! Exit status: 0 on success, 1 for invalid or infeasible input, 2 for I/O
//! failures. Diagnostics go to stderr; primary output goes to `--out` or
//! stdout.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use moesim::balance::{
    generate_trace, simulate_placement, step_loads, trace_statistics, PlacementSimConfig,
    ReplanPolicy, RoutingTrace, TraceSpec, TrainingPhase,
};
use moesim::io::{self, IoError};
use moesim::plan::{micro_batch_count, validate_plan};
use moesim::search::{score_both, score_config, search_space, RankWeights, ScoreMode, ScoreOptions, SearchError};

#[derive(Parser)]
#[command(name = "moesim", version, about = "MoE training step-time, memory and load-balance simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score one (model, plan) pair and print its cost report.
    Simulate(SimulateArgs),
    /// Rank a design space; writes CSV (and JSON next to it with --out).
    Search(SearchArgs),
    /// Replay expert placement over a routing trace.
    Balance(BalanceArgs),
    /// Co-activation and per-task specialization of a routing trace.
    TraceStats(TraceArgs),
    /// Check a plan against a model and cluster.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Training,
    Inference,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    cluster: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    /// Only the chosen mode is evaluated; without it both throughputs are
    /// reported.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    space: PathBuf,
    /// One plan object or an array of plans.
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    cluster: PathBuf,
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long)]
    workers: Option<usize>,
    /// Rank on one throughput only instead of the equal-weight blend.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// CSV path; the JSON result is written alongside with a .json extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    /// A line-delimited trace, or a trace spec (JSON) to generate one from.
    #[arg(long)]
    trace: PathBuf,
    /// Overrides the seed of a trace spec.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BalanceArgs {
    #[command(flatten)]
    input: TraceArgs,
    #[arg(long, default_value_t = 8)]
    devices: usize,
    /// Sliding-window length, in steps.
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Replan every this many steps.
    #[arg(long, default_value_t = 1)]
    interval: usize,
    /// Switch to CV-triggered replanning with this absolute threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// With --threshold: plan once and never again.
    #[arg(long)]
    sft: bool,
    /// Parameters per expert, for migration bytes.
    #[arg(long, default_value_t = 0)]
    expert_params: u64,
    /// Also write the (possibly generated) trace here.
    #[arg(long)]
    save_trace: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    cluster: PathBuf,
    #[arg(long)]
    plan: PathBuf,
}

enum Failure {
    Invalid(String),
    Io(String),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Invalid(e.to_string())
        }
    }
}

impl From<SearchError> for Failure {
    fn from(e: SearchError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Invalid(e.to_string())
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => Ok(io::write_text(p, text)?),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let cfg = io::load_model(&a.model)?;
    let hw = io::load_cluster(&a.cluster)?;
    let plan = io::load_plan(&a.plan)?;
    let opts = ScoreOptions::default();
    let report = match a.mode {
        None => score_both(&cfg, &plan, &hw, &opts)?,
        Some(Mode::Training) => score_config(&cfg, &plan, &hw, ScoreMode::Training, &opts)?,
        Some(Mode::Inference) => score_config(&cfg, &plan, &hw, ScoreMode::Inference, &opts)?,
    };
    emit(a.out.as_deref(), &io::to_json(&report))
}

fn search(a: SearchArgs) -> Result<(), Failure> {
    let space = io::load_space(&a.space)?;
    let plans = io::load_plans(&a.plan)?;
    let hw = io::load_cluster(&a.cluster)?;
    let weights = match a.mode {
        None => RankWeights::default(),
        Some(Mode::Training) => RankWeights {
            training: 1.0,
            inference: 0.0,
        },
        Some(Mode::Inference) => RankWeights {
            training: 0.0,
            inference: 1.0,
        },
    };
    let opts = ScoreOptions {
        weights,
        workers: a.workers,
        ..ScoreOptions::default()
    };
    let result = search_space(&space, &plans, &hw, a.top, &opts)?;
    for e in &result.excluded {
        eprintln!("excluded {}: {}", e.model_id, e.reason);
    }
    let mut csv = Vec::new();
    io::write_search_csv(&result.ranked, &mut csv).map_err(|e| Failure::Io(e.to_string()))?;
    let csv = String::from_utf8(csv).expect("csv output is UTF-8");
    match &a.out {
        Some(p) => {
            io::write_text(p, &csv)?;
            io::write_json(&p.with_extension("json"), &result)?;
            Ok(())
        }
        None => emit(None, &csv),
    }
}

/// Generates a trace when the file is a trace spec, otherwise reads it as a
/// line-delimited trace.
fn load_or_generate(a: &TraceArgs) -> Result<RoutingTrace, Failure> {
    let text = std::fs::read_to_string(&a.trace)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", a.trace.display())))?;
    let origin = a.trace.display().to_string();
    match io::parse_json::<TraceSpec>(&text, &origin) {
        Ok(mut spec) => {
            if let Some(s) = a.seed {
                spec.seed = s;
            }
            generate_trace(&spec).map_err(invalid)
        }
        // a single-line document is a (broken) spec; report that error
        Err(e) if text.trim().lines().count() <= 1 => Err(invalid(e)),
        Err(_) => {
            if a.seed.is_some() {
                return Err(invalid("--seed only applies to trace specs"));
            }
            Ok(io::read_trace(text.as_bytes(), &origin)?)
        }
    }
}

fn balance(a: BalanceArgs) -> Result<(), Failure> {
    let trace = load_or_generate(&a.input)?;
    if let Some(p) = &a.save_trace {
        io::save_trace(p, &trace)?;
    }
    let policy = match a.threshold {
        Some(threshold) => ReplanPolicy::Triggered {
            threshold,
            phase: if a.sft { TrainingPhase::Sft } else { TrainingPhase::Pretrain },
        },
        None if a.sft => return Err(invalid("--sft needs --threshold")),
        None => ReplanPolicy::Periodic { interval: a.interval },
    };
    let cfg = PlacementSimConfig {
        num_devices: a.devices,
        window: a.window,
        policy,
        expert_param_count: a.expert_params,
    };
    let timeline = simulate_placement(&step_loads(&trace), &cfg).map_err(invalid)?;
    emit(a.input.out.as_deref(), &io::to_json(&timeline))
}

fn trace_stats(a: TraceArgs) -> Result<(), Failure> {
    let trace = load_or_generate(&a)?;
    let stats = trace_statistics(&trace).map_err(invalid)?;
    emit(a.out.as_deref(), &io::to_json(&stats))
}

fn validate(a: ValidateArgs) -> Result<(), Failure> {
    let cfg = io::load_model(&a.model)?;
    let hw = io::load_cluster(&a.cluster)?;
    let plan = io::load_plan(&a.plan)?;
    let p = &plan;
    let mut out = format!(
        "tp={} pp={} vpp={} ep={} dp={} cp={} world={}\n",
        p.tp,
        p.pp,
        p.vpp,
        p.ep,
        p.dp,
        p.cp,
        hw.world_size()
    );
    match validate_plan(p, &cfg, &hw) {
        Ok(()) => {
            let m = micro_batch_count(p).map_err(invalid)?;
            writeln!(out, "micro_batches={m}").ok();
            out.push_str("ok\n");
            emit(None, &out)
        }
        Err(v) => {
            for x in &v {
                writeln!(out, "violation: {x}").ok();
            }
            emit(None, &out)?;
            Err(Failure::Invalid(format!("{} constraint(s) violated", v.len())))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    let r = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Search(a) => search(a),
        Command::Balance(a) => balance(a),
        Command::TraceStats(a) => trace_stats(a),
        Command::Validate(a) => validate(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
