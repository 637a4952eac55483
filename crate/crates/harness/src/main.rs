use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use polyrr::{
    read_trace, ActorStrategy, Config, Error, EventType, ParsedTrace, PerturbationPlan,
    TraceSink, TraceSource,
};
use polyrr_harness::{execute, Benchmark, ParamsError};

const EXIT_FAILURE: u8 = 1;
const EXIT_FORMAT: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(name = "polyrr", version, about = "Record, replay and inspect polyrr traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in benchmark and print its digest.
    Run(RunArgs),
    /// Print every event of a trace, per activity.
    Dump { trace: PathBuf },
    /// Print per-activity and per-type event counts and size accounting.
    Stats { trace: PathBuf },
    /// List the built-in benchmarks and their parameters.
    List,
}

#[derive(clap::Args)]
struct RunArgs {
    benchmark: String,
    #[arg(long, value_enum, default_value_t = Mode::Passive)]
    mode: Mode,
    #[arg(long, value_enum, default_value_t = Strategy::Sender)]
    strategy: Strategy,
    /// Trace file written by record (file sink) or read by replay.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Where recorded events go; defaults to `file` when --trace is given.
    #[arg(long, value_enum)]
    sink: Option<Sink>,
    /// Seed for scheduling perturbation at instrumentation points.
    #[arg(long)]
    seed: Option<u64>,
    /// Upper bound in microseconds of one injected delay.
    #[arg(long, default_value_t = 200)]
    max_delay_us: u64,
    /// Benchmark parameter overrides, `key=value`.
    #[arg(long = "params", value_delimiter = ',')]
    params: Vec<String>,
    /// Worker threads for actors (default: available cores).
    #[arg(long)]
    pool: Option<usize>,
    /// Seconds without replay progress before reporting a deadlock.
    #[arg(long, default_value_t = 30)]
    watchdog: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Passive,
    Record,
    Replay,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Sender,
    Receiver,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sink {
    File,
    Memory,
    Discard,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Runtime(#[from] Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(e) if e.is_divergence() => EXIT_DIVERGENCE,
            CliError::Runtime(e) if e.is_format() => EXIT_FORMAT,
            _ => EXIT_FAILURE,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(args) => run(args),
        Command::Dump { trace } => read_trace(&trace).map(|t| dump(&t)).map_err(CliError::from),
        Command::Stats { trace } => read_trace(&trace).map(|t| stats(&t)).map_err(CliError::from),
        Command::List => {
            list();
            Ok(())
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let bench: Benchmark = args.benchmark.parse()?;
    let mut params = bench.default_params();
    params.apply(bench, &args.params)?;
    let strategy = match args.strategy {
        Strategy::Sender => ActorStrategy::SenderSide,
        Strategy::Receiver => ActorStrategy::ReceiverSide,
    };
    let mut config = match args.mode {
        Mode::Passive => Config::passive(),
        Mode::Record => {
            let sink = match (args.sink, &args.trace) {
                (Some(Sink::File) | None, Some(p)) => TraceSink::File(p.clone()),
                (Some(Sink::File), None) => return Err(CliError::Usage("--sink file needs --trace".into())),
                (Some(Sink::Memory), _) => TraceSink::Memory,
                (Some(Sink::Discard) | None, None) | (Some(Sink::Discard), Some(_)) => TraceSink::Discard,
            };
            Config::record(sink)
        }
        Mode::Replay => {
            let path = args
                .trace
                .clone()
                .ok_or_else(|| CliError::Usage("replay needs --trace".into()))?;
            Config::replay(TraceSource::File(path))
        }
    };
    config = config
        .with_strategy(strategy)
        .with_watchdog(Duration::from_secs(args.watchdog));
    if let Some(n) = args.pool {
        config = config.with_pool_size(n);
    }
    if let Some(seed) = args.seed {
        config = config.with_perturbation(
            PerturbationPlan::new(seed).with_max_delay(Duration::from_micros(args.max_delay_us)),
        );
    }
    let start = Instant::now();
    let exec = execute(bench, &params, config)?;
    let elapsed = start.elapsed();
    let r = &exec.report;
    println!("benchmark {bench}");
    println!("mode {}", r.mode.name());
    println!("strategy {}", r.strategy.name());
    for (k, v) in params.iter() {
        println!("param {k} {v}");
    }
    println!("activities {}", r.stats.activities);
    println!("events_recorded {}", r.stats.events_recorded);
    println!("events_consumed {}", r.stats.events_consumed);
    println!("commits {}", r.stats.commits);
    println!("commit_retries {}", r.stats.commit_retries);
    println!("handler_errors {}", r.handler_errors.len());
    println!("elapsed_ms {:.3}", elapsed.as_secs_f64() * 1e3);
    println!("digest {}", exec.digest);
    Ok(())
}

fn dump(t: &ParsedTrace) {
    println!("strategy {}", t.header.strategy.name());
    for (id, events) in &t.activities {
        println!("activity {id} events {}", events.len());
        for (i, e) in events.iter().enumerate() {
            println!("  {i} {} {}", e.kind.name(), e.data);
        }
    }
}

fn stats(t: &ParsedTrace) {
    println!("strategy {}", t.header.strategy.name());
    println!("activities {}", t.activities.len());
    println!("chunks {}", t.chunks.len());
    println!("events {}", t.total_events());
    println!("octets {}", t.total_octets());
    for kind in EventType::ALL {
        println!("type {} {}", kind.name(), t.count(kind));
    }
    for (id, events) in &t.activities {
        let mut by_type: BTreeMap<&str, usize> = BTreeMap::new();
        for e in events {
            *by_type.entry(e.kind.name()).or_default() += 1;
        }
        let chunks = t.chunks.iter().filter(|c| c.activity == *id).count();
        let detail: Vec<String> = by_type.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("activity {id} events {} chunks {chunks} {}", events.len(), detail.join(" "));
    }
}

fn list() {
    for b in Benchmark::ALL {
        let params: Vec<String> = b.default_params().iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{b} [{}] {}", b.paradigms(), params.join(","));
    }
}
