use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Barrier, Condvar, Mutex};
use std::thread;

use ori_core::{CommitRequest, Topology};

use super::{agent_name, fresh_trial, marker, permutation, shard_key, Tally, ABANDONED};
use crate::backend::Backend;
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::report::ExperimentReport;

const SHARED: &str = "shared";

/// Commits in a fixed order: the holder of position `p` proceeds once `p`
/// earlier commits are done.
struct Turnstile {
    turn: Mutex<usize>,
    cv: Condvar,
}

impl Turnstile {
    fn wait_for(&self, position: usize) {
        let mut turn = self.turn.lock().unwrap();
        while *turn != position {
            turn = self.cv.wait(turn).unwrap();
        }
    }

    fn advance(&self) {
        *self.turn.lock().unwrap() += 1;
        self.cv.notify_all();
    }

    fn reset(&self) {
        *self.turn.lock().unwrap() = 0;
    }
}

#[derive(Debug, Default)]
struct WorkerLog {
    attempts: u64,
    ok: u64,
    /// (epoch, attempts used or [`ABANDONED`], landed)
    contributions: Vec<(usize, u32, bool)>,
}

/// One thread per agent. Each epoch every agent owes one commit; in each round
/// the agents still owing read their key, wait at a barrier, then commit one
/// at a time in a seeded order. Rejected agents retry next round.
pub fn run_contention_sweep(backend: &dyn Backend, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut tally = Tally::default();
    let mut preserved = 0u64;
    let mut intended = 0u64;
    for trial in 0..cfg.trials {
        fresh_trial(backend, cfg.mode)?;
        let keys: Vec<String> = match cfg.topology {
            Topology::Shared => vec![SHARED.to_owned()],
            Topology::Dedicated => (0..cfg.n_agents).map(shard_key).collect(),
        };
        for k in &keys {
            backend.create_shard(k, "")?;
        }
        let logs = run_workers(backend, cfg, trial)?;

        let mut finals = Vec::with_capacity(keys.len());
        for k in &keys {
            finals.push(backend.read(k, "auditor")?.content);
        }
        for (i, log) in logs.iter().enumerate() {
            tally.attempts += log.attempts;
            tally.ok += log.ok;
            tally.rejected += log.attempts - log.ok;
            let content = &finals[target_index(cfg, i)];
            for &(epoch, used, landed) in &log.contributions {
                tally.attempts_per_contribution.push(used);
                if landed {
                    intended += 1;
                    preserved += u64::from(content.contains(&marker(i, epoch)));
                }
            }
        }
        tally.close_trial(backend)?;
    }
    let mut report = tally.into_report(cfg)?;
    report.contributions_preserved = preserved;
    report.contributions_intended = intended;
    Ok(report)
}

/// One report per agent count, other settings taken from `base`.
pub fn run_sweep(
    backend: &dyn Backend,
    base: &ExperimentConfig,
    agent_counts: &[usize],
) -> Result<Vec<ExperimentReport>> {
    agent_counts
        .iter()
        .map(|&n| {
            let cfg = ExperimentConfig {
                n_agents: n,
                ..base.clone()
            };
            run_contention_sweep(backend, &cfg)
        })
        .collect()
}

fn target_index(cfg: &ExperimentConfig, agent: usize) -> usize {
    match cfg.topology {
        Topology::Shared => 0,
        Topology::Dedicated => agent,
    }
}

fn target_key(cfg: &ExperimentConfig, agent: usize) -> String {
    match cfg.topology {
        Topology::Shared => SHARED.to_owned(),
        Topology::Dedicated => shard_key(agent),
    }
}

fn run_workers(backend: &dyn Backend, cfg: &ExperimentConfig, trial: usize) -> Result<Vec<WorkerLog>> {
    let n = cfg.n_agents;
    let barrier = Barrier::new(n);
    let turnstile = Turnstile {
        turn: Mutex::new(0),
        cv: Condvar::new(),
    };
    // epoch + 1 once the agent is done with that epoch
    let settled: Vec<AtomicU64> = (0..n).map(|_| AtomicU64::new(0)).collect();
    let failure: Mutex<Option<HarnessError>> = Mutex::new(None);
    // set only between the last barrier of a round and the first of the next
    let stop = AtomicBool::new(false);

    let logs = thread::scope(|s| {
        let handles: Vec<_> = (0..n)
            .map(|me| {
                let (barrier, turnstile, settled, failure, stop) = (&barrier, &turnstile, &settled, &failure, &stop);
                s.spawn(move || {
                    let name = agent_name(me);
                    let key = target_key(cfg, me);
                    let mut log = WorkerLog::default();
                    'epochs: for epoch in 0..cfg.steps {
                        let tag = epoch as u64 + 1;
                        let mut used = 0u32;
                        for round in 0.. {
                            barrier.wait();
                            if stop.load(Ordering::SeqCst) {
                                break 'epochs;
                            }
                            let owing: Vec<usize> =
                                (0..n).filter(|&i| settled[i].load(Ordering::SeqCst) != tag).collect();
                            if owing.is_empty() {
                                break;
                            }
                            let read = if owing.contains(&me) {
                                match backend.read(&key, &name) {
                                    Ok(r) => Some(r),
                                    Err(e) => {
                                        failure.lock().unwrap().get_or_insert(e);
                                        None
                                    }
                                }
                            } else {
                                None
                            };
                            barrier.wait();
                            let order = permutation(cfg.seed, &[trial as u64, tag, round], owing.len());
                            if let Some(pos) = owing.iter().position(|&i| i == me) {
                                let position = order.iter().position(|&o| o == pos).expect("permutation");
                                turnstile.wait_for(position);
                                let mut done = read.is_none();
                                if let Some(r) = read {
                                    let delta = format!("{}{}", r.content, marker(me, epoch));
                                    match backend.commit(&CommitRequest::new(
                                        key.clone(),
                                        r.version,
                                        delta,
                                        name.clone(),
                                    )) {
                                        Ok(v) => {
                                            used += 1;
                                            log.attempts += 1;
                                            if v.is_ok() {
                                                log.ok += 1;
                                                log.contributions.push((epoch, used, true));
                                                done = true;
                                            } else if cfg.retry_budget > 0 && used >= cfg.retry_budget {
                                                log.contributions.push((epoch, ABANDONED, false));
                                                done = true;
                                            }
                                        }
                                        Err(e) => {
                                            failure.lock().unwrap().get_or_insert(e);
                                            done = true;
                                        }
                                    }
                                }
                                if done {
                                    settled[me].store(tag, Ordering::SeqCst);
                                }
                                turnstile.advance();
                            }
                            if barrier.wait().is_leader() {
                                turnstile.reset();
                                if failure.lock().unwrap().is_some() {
                                    stop.store(true, Ordering::SeqCst);
                                }
                            }
                        }
                    }
                    log
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect::<Vec<_>>()
    });
    match failure.into_inner().unwrap() {
        Some(e) => Err(e),
        None => Ok(logs),
    }
}
