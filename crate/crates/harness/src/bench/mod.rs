//! Built-in benchmark programs.
//!
//! A benchmark writes everything it wants checked into named [`Observed`]
//! streams; the streams plus the run's per-activity event log make up the
//! digest that record and replay runs must agree on.

mod philosophers;
mod sales;
mod savina;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use polyrr::{Config, Result, RunReport, Runtime};

use crate::digest::digest;

/// Named output streams filled while a benchmark runs.
#[derive(Debug, Default)]
pub struct Observed {
    streams: parking_lot::Mutex<BTreeMap<String, Vec<String>>>,
}

impl Observed {
    pub fn push(&self, stream: &str, line: impl Into<String>) {
        self.streams
            .lock()
            .entry(stream.to_string())
            .or_default()
            .push(line.into());
    }

    pub fn snapshot(&self) -> Outcome {
        Outcome(self.streams.lock().clone())
    }
}

/// Final contents of every observed stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outcome(pub BTreeMap<String, Vec<String>>);

impl Outcome {
    pub fn stream(&self, name: &str) -> &[String] {
        self.0.get(name).map_or(&[], Vec::as_slice)
    }

    /// Streams holding per-actor handler invocations.
    pub fn handler_streams(&self) -> BTreeMap<&str, &[String]> {
        self.0
            .iter()
            .filter(|(k, _)| k.starts_with("handler:"))
            .map(|(k, v)| (k.as_str(), v.as_slice()))
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ParamsError {
    #[error("parameter `{0}` is not of the form key=value")]
    Syntax(String),
    #[error("parameter `{key}` must be a non-negative integer, got `{value}`")]
    Value { key: String, value: String },
    #[error("unknown parameter `{key}` for {bench} (known: {known})")]
    Unknown { bench: Benchmark, key: String, known: String },
    #[error("unknown benchmark `{0}`")]
    Benchmark(String),
}

/// Integer parameters with per-benchmark defaults.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Params {
    values: BTreeMap<&'static str, u64>,
}

impl Params {
    pub fn get(&self, key: &str) -> u64 {
        self.values[key]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, u64)> + '_ {
        self.values.iter().map(|(k, v)| (*k, *v))
    }

    /// Overrides a default. Only keys the benchmark knows are accepted.
    pub fn set(&mut self, bench: Benchmark, key: &str, value: u64) -> Result<(), ParamsError> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(ParamsError::Unknown {
                bench,
                key: key.to_string(),
                known: self.values.keys().copied().collect::<Vec<_>>().join(", "),
            }),
        }
    }

    /// Applies `key=value` overrides.
    pub fn apply<S: AsRef<str>>(&mut self, bench: Benchmark, overrides: &[S]) -> Result<(), ParamsError> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| ParamsError::Syntax(o.to_string()))?;
            let v: u64 = v.trim().parse().map_err(|_| ParamsError::Value {
                key: k.to_string(),
                value: v.to_string(),
            })?;
            self.set(bench, k.trim(), v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Benchmark {
    PhilosophersLocks,
    PhilosophersStm,
    PhilosophersCsp,
    PingpongActors,
    CountingActors,
    FjCreationActors,
    SalesPipeline,
}

impl Benchmark {
    pub const ALL: [Benchmark; 7] = [
        Benchmark::PhilosophersLocks,
        Benchmark::PhilosophersStm,
        Benchmark::PhilosophersCsp,
        Benchmark::PingpongActors,
        Benchmark::CountingActors,
        Benchmark::FjCreationActors,
        Benchmark::SalesPipeline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::PhilosophersLocks => "philosophers-locks",
            Benchmark::PhilosophersStm => "philosophers-stm",
            Benchmark::PhilosophersCsp => "philosophers-csp",
            Benchmark::PingpongActors => "pingpong-actors",
            Benchmark::CountingActors => "counting-actors",
            Benchmark::FjCreationActors => "fj-creation-actors",
            Benchmark::SalesPipeline => "sales-pipeline",
        }
    }

    pub fn paradigms(self) -> &'static str {
        match self {
            Benchmark::PhilosophersLocks => "threads, locks, conditions",
            Benchmark::PhilosophersStm => "threads, stm",
            Benchmark::PhilosophersCsp => "csp processes, channels",
            Benchmark::PingpongActors | Benchmark::CountingActors | Benchmark::FjCreationActors => "actors",
            Benchmark::SalesPipeline => "actors, promises, csp, stm, threads, locks",
        }
    }

    pub fn default_params(self) -> Params {
        let values: &[(&'static str, u64)] = match self {
            Benchmark::PhilosophersLocks | Benchmark::PhilosophersCsp => &[("philosophers", 5), ("rounds", 200)],
            Benchmark::PhilosophersStm => &[("philosophers", 5), ("rounds", 100)],
            Benchmark::PingpongActors => &[("rounds", 2000)],
            Benchmark::CountingActors => &[("messages", 10_000)],
            Benchmark::FjCreationActors => &[("actors", 200)],
            Benchmark::SalesPipeline => &[("events", 60), ("forecast_every", 20), ("workers", 2), ("seed", 42)],
        };
        Params {
            values: values.iter().copied().collect(),
        }
    }

    /// Runs the benchmark body as the main activity.
    pub fn program(self, params: &Params, out: &Arc<Observed>) -> Result<()> {
        match self {
            Benchmark::PhilosophersLocks => philosophers::with_locks(params, out),
            Benchmark::PhilosophersStm => philosophers::with_stm(params, out),
            Benchmark::PhilosophersCsp => philosophers::with_csp(params, out),
            Benchmark::PingpongActors => savina::pingpong(params, out),
            Benchmark::CountingActors => savina::counting(params, out),
            Benchmark::FjCreationActors => savina::fj_creation(params, out),
            Benchmark::SalesPipeline => sales::pipeline(params, out),
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = ParamsError;

    fn from_str(s: &str) -> Result<Self, ParamsError> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| ParamsError::Benchmark(s.to_string()))
    }
}

pub struct Execution {
    pub report: RunReport<()>,
    pub outcome: Outcome,
    pub digest: String,
}

/// Runs `bench` under `config`, forcing the per-activity event log on so the
/// digest covers event order.
pub fn execute(bench: Benchmark, params: &Params, config: Config) -> Result<Execution> {
    let out = Arc::new(Observed::default());
    let config = config.with_event_log(true);
    let report = Runtime::run(config, || bench.program(params, &out))?;
    let outcome = out.snapshot();
    let digest = digest(&outcome, &report.event_log);
    Ok(Execution {
        report,
        outcome,
        digest,
    })
}
