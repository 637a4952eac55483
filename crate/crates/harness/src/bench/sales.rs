//! Sales processing pipeline combining every model in one program.
//!
//! simulator (actor) -> parser (actor wrapping a tokenizer and an extractor
//! process) -> storage (actor updating STM totals) -> forecast (actor
//! fanning out to threads that share a lock). Storage resolves a promise
//! once the input is exhausted; the promise forwards a final message to
//! the forecast actor.

use std::sync::Arc;

use parking_lot::Mutex;
use polyrr::{
    atomic, spawn_actor, spawn_process, spawn_thread, Actor, ActorRef, Channel, Context, Promise, RRLock,
    Result, TxRef,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Observed, Params};
use crate::json::{extract_sale, tokenize, Sale, Token};

const REGIONS: [&str; 4] = ["north", "south", "east", "west"];
const PRODUCTS: [&str; 3] = ["tea", "coffee", "cocoa"];

/// Seeded input: mostly well-formed records, some broken ones.
fn simulated_input(seed: u64, n: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|id| {
            let region = REGIONS[rng.gen_range(0..REGIONS.len())];
            let product = PRODUCTS[rng.gen_range(0..PRODUCTS.len())];
            let amount: i64 = rng.gen_range(100..10_000);
            match rng.gen_range(0..12) {
                0 => format!(r#"{{"id":{id},"region":"{region}","amount":{amount}}}"#),
                1 => format!(r#"{{"id":{id},"region":"{region}","product":"{product}","amount":{amount}.5}}"#),
                _ => format!(
                    r#"{{"product":"{product}","id":{id},"channel":"web","region":"{region}","amount":{amount}}}"#
                ),
            }
        })
        .collect()
}

enum SimMsg {
    Start,
}

struct Simulator {
    input: Vec<String>,
    parser: ActorRef<ParserMsg>,
    out: Arc<Observed>,
}

impl Actor for Simulator {
    type Msg = SimMsg;

    fn receive(&mut self, _ctx: &Context<SimMsg>, SimMsg::Start: SimMsg) -> Result<()> {
        self.out.push("handler:simulator", format!("start {}", self.input.len()));
        for line in self.input.drain(..) {
            self.parser.send(ParserMsg::Raw(line))?;
        }
        self.parser.send(ParserMsg::Done)
    }
}

enum ParserMsg {
    Raw(String),
    Done,
}

type Parsed = std::result::Result<Sale, String>;

struct Parser {
    to_tokenizer: Channel<Option<String>>,
    from_extractor: Channel<Option<Parsed>>,
    storage: ActorRef<StorageMsg>,
    out: Arc<Observed>,
}

impl Actor for Parser {
    type Msg = ParserMsg;

    fn receive(&mut self, _ctx: &Context<ParserMsg>, msg: ParserMsg) -> Result<()> {
        match msg {
            ParserMsg::Raw(line) => {
                self.to_tokenizer.write(Some(line))?;
                match self.from_extractor.read()? {
                    Some(Ok(sale)) => {
                        self.out.push("handler:parser", format!("sale {sale}"));
                        self.storage.send(StorageMsg::Store(sale))
                    }
                    Some(Err(e)) => {
                        self.out.push("handler:parser", format!("rejected {e}"));
                        Ok(())
                    }
                    None => Err(polyrr::Error::Handler("extractor stopped early".into())),
                }
            }
            ParserMsg::Done => {
                self.out.push("handler:parser", "done");
                self.to_tokenizer.write(None)?;
                self.from_extractor.read()?;
                self.storage.send(StorageMsg::Flush)
            }
        }
    }
}

fn spawn_parsing_stage(
    raw: Channel<Option<String>>,
    parsed: Channel<Option<Parsed>>,
) -> Result<()> {
    let tokens: Channel<Option<std::result::Result<Vec<Token>, String>>> = Channel::new();
    let tok_out = tokens.clone();
    spawn_process(move || {
        while let Some(line) = raw.read()? {
            tok_out.write(Some(tokenize(&line).map_err(|e| e.to_string())))?;
        }
        tok_out.write(None)
    })?;
    spawn_process(move || {
        while let Some(toks) = tokens.read()? {
            let sale = toks.and_then(|t| extract_sale(&t).map_err(|e| e.to_string()));
            parsed.write(Some(sale))?;
        }
        parsed.write(None)
    })?;
    Ok(())
}

enum StorageMsg {
    Store(Sale),
    Flush,
}

struct Storage {
    totals: Arc<Vec<TxRef<i64>>>,
    stored: TxRef<u64>,
    forecast_every: u64,
    forecast: ActorRef<ForecastMsg>,
    done: Promise<u64>,
    out: Arc<Observed>,
}

impl Actor for Storage {
    type Msg = StorageMsg;

    fn receive(&mut self, _ctx: &Context<StorageMsg>, msg: StorageMsg) -> Result<()> {
        match msg {
            StorageMsg::Store(sale) => {
                let region = REGIONS.iter().position(|r| *r == sale.region);
                let Some(region) = region else {
                    self.out.push("handler:storage", format!("unknown region {}", sale.region));
                    return Ok(());
                };
                let cell = &self.totals[region];
                let n = atomic(|tx| {
                    tx.modify(cell, |t| t + sale.amount)?;
                    let n = tx.read(&self.stored)? + 1;
                    tx.write(&self.stored, n);
                    Ok(n)
                })?;
                self.out.push("handler:storage", format!("stored {} as {n}", sale.id));
                if self.forecast_every > 0 && n % self.forecast_every == 0 {
                    self.forecast.send(ForecastMsg::Forecast(n))?;
                }
                Ok(())
            }
            StorageMsg::Flush => {
                let n = self.stored.get();
                self.out.push("handler:storage", format!("flush {n}"));
                self.done.resolve(n)
            }
        }
    }
}

enum ForecastMsg {
    Forecast(u64),
    Final(u64),
}

struct Forecast {
    totals: Arc<Vec<TxRef<i64>>>,
    workers: usize,
    lock: RRLock,
    out: Arc<Observed>,
}

impl Forecast {
    /// Splits the regions over worker threads; each reads its share in one
    /// transaction and merges its partial sum under the lock.
    fn estimate(&self) -> Result<Vec<(usize, i64)>> {
        let partials = Arc::new(Mutex::new(Vec::new()));
        let mut hs = Vec::new();
        for w in 0..self.workers {
            let (totals, lock, partials) = (self.totals.clone(), self.lock.clone(), partials.clone());
            let workers = self.workers;
            hs.push(spawn_thread(move || {
                let sum = atomic(|tx| {
                    let mut sum = 0;
                    for cell in totals.iter().skip(w).step_by(workers) {
                        sum += tx.read(cell)?;
                    }
                    Ok(sum)
                })?;
                lock.with(|| {
                    partials.lock().push((w, sum));
                    Ok(())
                })
            })?);
        }
        for h in hs {
            h.join()?;
        }
        let v = partials.lock().clone();
        Ok(v)
    }
}

impl Actor for Forecast {
    type Msg = ForecastMsg;

    fn receive(&mut self, _ctx: &Context<ForecastMsg>, msg: ForecastMsg) -> Result<()> {
        match msg {
            ForecastMsg::Forecast(n) => {
                let parts = self.estimate()?;
                let total: i64 = parts.iter().map(|p| p.1).sum();
                self.out
                    .push("handler:forecast", format!("forecast after {n}: {total} from {parts:?}"));
            }
            ForecastMsg::Final(n) => {
                let totals = atomic(|tx| self.totals.iter().map(|c| tx.read(c)).collect::<Result<Vec<_>>>())?;
                self.out.push("handler:forecast", format!("final {n}: {totals:?}"));
                self.out.push("result", format!("stored {n}"));
                for (r, t) in REGIONS.iter().zip(totals) {
                    self.out.push("result", format!("{r} {t}"));
                }
            }
        }
        Ok(())
    }
}

pub(super) fn pipeline(params: &Params, out: &Arc<Observed>) -> Result<()> {
    let totals: Arc<Vec<TxRef<i64>>> = Arc::new(REGIONS.iter().map(|_| TxRef::new(0)).collect());
    let done: Promise<u64> = Promise::new();
    let forecast = spawn_actor(Forecast {
        totals: totals.clone(),
        workers: params.get("workers").max(1) as usize,
        lock: RRLock::new(),
        out: out.clone(),
    })?;
    let storage = spawn_actor(Storage {
        totals,
        stored: TxRef::new(0),
        forecast_every: params.get("forecast_every"),
        forecast: forecast.clone(),
        done: done.clone(),
        out: out.clone(),
    })?;
    let (raw, parsed) = (Channel::new(), Channel::new());
    spawn_parsing_stage(raw.clone(), parsed.clone())?;
    let parser = spawn_actor(Parser {
        to_tokenizer: raw,
        from_extractor: parsed,
        storage,
        out: out.clone(),
    })?;
    let simulator = spawn_actor(Simulator {
        input: simulated_input(params.get("seed"), params.get("events")),
        parser,
        out: out.clone(),
    })?;
    done.send_when_resolved(&forecast, |n| ForecastMsg::Final(*n))?;
    simulator.send(SimMsg::Start)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_is_seeded() {
        assert_eq!(simulated_input(1, 20), simulated_input(1, 20));
        assert_ne!(simulated_input(1, 20), simulated_input(2, 20));
        let parsed = simulated_input(42, 200)
            .iter()
            .filter(|l| tokenize(l).ok().and_then(|t| extract_sale(&t).ok()).is_some())
            .count();
        assert!(parsed > 150 && parsed < 200, "{parsed}");
    }
}
