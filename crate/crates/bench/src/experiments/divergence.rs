use ori_core::{CommitRequest, Mode};

use super::{agent_name, fresh_trial, permutation, shard_key, Tally, ABANDONED};
use crate::backend::Backend;
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::ExperimentReport;

/// Each agent owns a shard and reads all of them every step. Per step the `k`
/// delayed agents read first; the rest then read and commit one by one, so
/// by the time the delayed agents commit some sibling has moved. Under
/// validation a rejected agent re-reads everything and commits again.
pub fn run_divergence_counters(backend: &dyn Backend, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let n = cfg.n_agents;
    let k = cfg.stale_agents_k;
    let mut tally = Tally::default();
    for trial in 0..cfg.trials {
        fresh_trial(backend, cfg.mode)?;
        for s in 0..n {
            backend.create_shard(&shard_key(s), "")?;
        }
        for step in 0..cfg.steps {
            let order = permutation(cfg.seed, &[trial as u64, step as u64], n);
            let (delayed, prompt) = order.split_at(k);
            let mut own_versions = vec![0; n];
            for &a in delayed {
                own_versions[a] = read_all(backend, a, n)?;
            }
            for &a in prompt {
                let v = read_all(backend, a, n)?;
                commit_until_done(backend, cfg, &mut tally, a, v, step)?;
            }
            for &a in delayed {
                commit_until_done(backend, cfg, &mut tally, a, own_versions[a], step)?;
            }
        }
        tally.close_trial(backend)?;
    }
    let mut report = tally.into_report(cfg)?;
    report.engineered_stale = (k * cfg.steps * cfg.trials) as u64;
    Ok(report)
}

/// Reads every shard as agent `a`; returns the version of its own.
fn read_all(backend: &dyn Backend, a: usize, n: usize) -> Result<u64> {
    let name = agent_name(a);
    let mut own = 0;
    for s in 0..n {
        let r = backend.read(&shard_key(s), &name)?;
        if s == a {
            own = r.version;
        }
    }
    Ok(own)
}

fn commit_until_done(
    backend: &dyn Backend,
    cfg: &ExperimentConfig,
    tally: &mut Tally,
    a: usize,
    mut version: u64,
    step: usize,
) -> Result<()> {
    let name = agent_name(a);
    let mut used = 0u32;
    loop {
        let req = CommitRequest::new(shard_key(a), version, format!("{name}.{step}"), name.clone());
        let v = backend.commit(&req)?;
        tally.record(&v);
        used += 1;
        if v.is_ok() {
            tally.attempts_per_contribution.push(used);
            return Ok(());
        }
        if cfg.mode == Mode::OriOff || (cfg.retry_budget > 0 && used >= cfg.retry_budget) {
            tally.attempts_per_contribution.push(ABANDONED);
            return Ok(());
        }
        version = read_all(backend, a, cfg.n_agents)?;
    }
}
