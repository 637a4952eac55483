//! Dining philosophers in three models.

use std::sync::Arc;

use parking_lot::Mutex;
use polyrr::{atomic, spawn_process, spawn_thread, Channel, RRLock, Result, TxRef};

use super::{Observed, Params};

/// A butler lock guards the fork table; philosophers wait on a condition
/// until both forks are free. Meals are logged under the butler lock.
pub(super) fn with_locks(params: &Params, out: &Arc<Observed>) -> Result<()> {
    let n = params.get("philosophers").max(2) as usize;
    let rounds = params.get("rounds");
    let butler = RRLock::new();
    let freed = butler.new_condition();
    let forks = Arc::new(Mutex::new(vec![false; n]));
    let mut hs = Vec::new();
    for p in 0..n {
        let (butler, freed, forks, out) = (butler.clone(), freed.clone(), forks.clone(), out.clone());
        hs.push(spawn_thread(move || {
            let (left, right) = (p, (p + 1) % n);
            let mut waits = 0u64;
            for r in 0..rounds {
                {
                    let _g = butler.lock()?;
                    while forks.lock()[left] || forks.lock()[right] {
                        freed.wait()?;
                        waits += 1;
                    }
                    let mut f = forks.lock();
                    f[left] = true;
                    f[right] = true;
                    out.push("meals", format!("{p}:{r}"));
                }
                std::thread::yield_now();
                let _g = butler.lock()?;
                let mut f = forks.lock();
                f[left] = false;
                f[right] = false;
                drop(f);
                freed.signal_all()?;
            }
            out.push(&format!("waits:{p}"), waits.to_string());
            Ok(())
        })?);
    }
    for h in hs {
        h.join()?;
    }
    Ok(())
}

/// Each meal is one transaction over both forks and the shared meal log,
/// so neighbors conflict and retry.
pub(super) fn with_stm(params: &Params, out: &Arc<Observed>) -> Result<()> {
    let n = params.get("philosophers").max(2) as usize;
    let rounds = params.get("rounds");
    let forks: Vec<TxRef<u64>> = (0..n).map(|_| TxRef::new(0)).collect();
    let log = TxRef::new(Vec::<u32>::new());
    let mut hs = Vec::new();
    for p in 0..n {
        let (forks, log) = (forks.clone(), log.clone());
        hs.push(spawn_thread(move || {
            let (left, right) = (&forks[p], &forks[(p + 1) % n]);
            for _ in 0..rounds {
                atomic(|tx| {
                    tx.modify(left, |uses| uses + 1)?;
                    tx.modify(right, |uses| uses + 1)?;
                    tx.modify(&log, |mut l| {
                        l.push(p as u32);
                        l
                    })
                })?;
                std::thread::yield_now();
            }
            Ok(())
        })?);
    }
    for h in hs {
        h.join()?;
    }
    for (i, f) in forks.iter().enumerate() {
        out.push("fork-uses", format!("{i}:{}", f.get()));
    }
    for p in log.get() {
        out.push("meals", p.to_string());
    }
    Ok(())
}

/// Forks are processes serving a pick-up channel and a put-down channel;
/// every philosopher reports meals to one logger process.
pub(super) fn with_csp(params: &Params, out: &Arc<Observed>) -> Result<()> {
    let n = params.get("philosophers").max(2) as usize;
    let rounds = params.get("rounds");
    let forks: Vec<(Channel<usize>, Channel<usize>)> = (0..n).map(|_| (Channel::new(), Channel::new())).collect();
    let logger: Channel<(usize, u64)> = Channel::new();
    let mut hs = Vec::new();
    for (i, (up, down)) in forks.iter().enumerate() {
        let (up, down, out) = (up.clone(), down.clone(), out.clone());
        hs.push(spawn_process(move || {
            // two neighbors, one meal each per round
            for _ in 0..2 * rounds {
                let holder = up.read()?;
                out.push(&format!("fork:{i}"), holder.to_string());
                down.read()?;
            }
            Ok(())
        })?);
    }
    {
        let (logger, out) = (logger.clone(), out.clone());
        let total = n as u64 * rounds;
        hs.push(spawn_process(move || {
            for _ in 0..total {
                let (p, r) = logger.read()?;
                out.push("meals", format!("{p}:{r}"));
            }
            Ok(())
        })?);
    }
    for p in 0..n {
        let (left, right) = (forks[p].clone(), forks[(p + 1) % n].clone());
        // the last philosopher is left-handed, which rules out deadlock
        let (first, second) = if p == n - 1 { (right, left) } else { (left, right) };
        let logger = logger.clone();
        hs.push(spawn_process(move || {
            for r in 0..rounds {
                first.0.write(p)?;
                second.0.write(p)?;
                logger.write((p, r))?;
                second.1.write(p)?;
                first.1.write(p)?;
            }
            Ok(())
        })?);
    }
    for h in hs {
        h.join()?;
    }
    Ok(())
}
