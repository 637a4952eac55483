//! Actor micro-benchmarks after the Savina suite.

use std::sync::Arc;

use polyrr::{spawn_actor, Actor, ActorRef, Context, Result};

use super::{Observed, Params};

enum PingMsg {
    Start,
    Pong(u64),
}

enum PongMsg {
    Ping(u64, ActorRef<PingMsg>),
}

struct Ping {
    rounds: u64,
    pong: ActorRef<PongMsg>,
    out: Arc<Observed>,
}

impl Actor for Ping {
    type Msg = PingMsg;

    fn receive(&mut self, ctx: &Context<PingMsg>, msg: PingMsg) -> Result<()> {
        let next = match msg {
            PingMsg::Start => {
                self.out.push("handler:ping", "start");
                0
            }
            PingMsg::Pong(n) => {
                self.out.push("handler:ping", format!("pong {n}"));
                n + 1
            }
        };
        if next < self.rounds {
            self.pong.send(PongMsg::Ping(next, ctx.myself()))?;
        } else {
            self.out.push("result", format!("rounds {next}"));
        }
        Ok(())
    }
}

struct Pong {
    out: Arc<Observed>,
}

impl Actor for Pong {
    type Msg = PongMsg;

    fn receive(&mut self, _ctx: &Context<PongMsg>, msg: PongMsg) -> Result<()> {
        let PongMsg::Ping(n, reply) = msg;
        self.out.push("handler:pong", format!("ping {n}"));
        reply.send(PingMsg::Pong(n))
    }
}

pub(super) fn pingpong(params: &Params, out: &Arc<Observed>) -> Result<()> {
    let pong = spawn_actor(Pong { out: out.clone() })?;
    let ping = spawn_actor(Ping {
        rounds: params.get("rounds"),
        pong,
        out: out.clone(),
    })?;
    ping.send(PingMsg::Start)
}

enum CounterMsg {
    Increment,
    Retrieve(ActorRef<ProducerMsg>),
}

enum ProducerMsg {
    Start,
    Total(u64),
}

struct Counter {
    count: u64,
    out: Arc<Observed>,
}

impl Actor for Counter {
    type Msg = CounterMsg;

    fn receive(&mut self, _ctx: &Context<CounterMsg>, msg: CounterMsg) -> Result<()> {
        match msg {
            CounterMsg::Increment => {
                self.count += 1;
                self.out.push("handler:counter", "inc");
                Ok(())
            }
            CounterMsg::Retrieve(to) => {
                self.out.push("handler:counter", format!("retrieve {}", self.count));
                to.send(ProducerMsg::Total(self.count))
            }
        }
    }
}

struct Producer {
    messages: u64,
    counter: ActorRef<CounterMsg>,
    out: Arc<Observed>,
}

impl Actor for Producer {
    type Msg = ProducerMsg;

    fn receive(&mut self, ctx: &Context<ProducerMsg>, msg: ProducerMsg) -> Result<()> {
        match msg {
            ProducerMsg::Start => {
                self.out.push("handler:producer", "start");
                for _ in 0..self.messages {
                    self.counter.send(CounterMsg::Increment)?;
                }
                self.counter.send(CounterMsg::Retrieve(ctx.myself()))
            }
            ProducerMsg::Total(n) => {
                self.out.push("handler:producer", format!("total {n}"));
                self.out.push("result", format!("count {n}"));
                Ok(())
            }
        }
    }
}

pub(super) fn counting(params: &Params, out: &Arc<Observed>) -> Result<()> {
    let counter = spawn_actor(Counter {
        count: 0,
        out: out.clone(),
    })?;
    let producer = spawn_actor(Producer {
        messages: params.get("messages"),
        counter,
        out: out.clone(),
    })?;
    producer.send(ProducerMsg::Start)
}

struct Worker {
    index: u64,
    collector: ActorRef<u64>,
}

impl Actor for Worker {
    type Msg = ();

    fn receive(&mut self, _ctx: &Context<()>, _: ()) -> Result<()> {
        // a little work so completions interleave
        let mut x = self.index;
        for _ in 0..200 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        }
        std::hint::black_box(x);
        self.collector.send(self.index)
    }
}

struct Collector {
    out: Arc<Observed>,
}

impl Actor for Collector {
    type Msg = u64;

    fn receive(&mut self, _ctx: &Context<u64>, index: u64) -> Result<()> {
        self.out.push("handler:collector", index.to_string());
        Ok(())
    }
}

/// Creates many short-lived actors that each handle one message and
/// report to a collector.
pub(super) fn fj_creation(params: &Params, out: &Arc<Observed>) -> Result<()> {
    let collector = spawn_actor(Collector { out: out.clone() })?;
    for index in 0..params.get("actors") {
        let w = spawn_actor(Worker {
            index,
            collector: collector.clone(),
        })?;
        w.send(())?;
    }
    Ok(())
}
