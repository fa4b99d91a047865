use std::collections::BTreeSet;

use ori_core::{CommitRequest, Mode};

use super::{agent_name, fresh_trial, marker, permutation, Tally, ABANDONED};
use crate::backend::Backend;
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::ExperimentReport;

const SHARED: &str = "shared";

/// Marker-appending agents on one key. Per step every agent reads, then they
/// commit in a seeded order. Under validation a rejected agent re-reads,
/// re-appends its marker and tries again; without it, each commit is final.
pub fn run_ori_isolation(backend: &dyn Backend, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let n = cfg.n_agents;
    let mut tally = Tally::default();
    let mut preserved = 0u64;
    let mut outcomes = BTreeSet::new();
    for trial in 0..cfg.trials {
        fresh_trial(backend, cfg.mode)?;
        backend.create_shard(SHARED, "")?;
        for step in 0..cfg.steps {
            let tag = [trial as u64, step as u64];
            let mut reads = vec![None; n];
            for a in permutation(cfg.seed, &[tag[0], tag[1], 0], n) {
                reads[a] = Some(backend.read(SHARED, &agent_name(a))?);
            }
            for a in permutation(cfg.seed, &[tag[0], tag[1], 1], n) {
                let name = agent_name(a);
                let mut read = reads[a].take().expect("read this step");
                let mut used = 0u32;
                loop {
                    let delta = format!("{}{}", read.content, marker(a, step));
                    let v = backend.commit(&CommitRequest::new(SHARED, read.version, delta, name.clone()))?;
                    tally.record(&v);
                    used += 1;
                    if v.is_ok() {
                        tally.attempts_per_contribution.push(used);
                        break;
                    }
                    if cfg.mode == Mode::OriOff || (cfg.retry_budget > 0 && used >= cfg.retry_budget) {
                        tally.attempts_per_contribution.push(ABANDONED);
                        break;
                    }
                    read = backend.read(SHARED, &name)?;
                }
            }
        }
        let content = backend.read(SHARED, "auditor")?.content;
        let found = (0..n)
            .flat_map(|a| (0..cfg.steps).map(move |s| (a, s)))
            .filter(|&(a, s)| content.contains(&marker(a, s)))
            .count() as u64;
        preserved += found;
        outcomes.insert(found);
        tally.close_trial(backend)?;
    }
    let mut report = tally.into_report(cfg)?;
    report.contributions_preserved = preserved;
    report.contributions_intended = (n * cfg.steps * cfg.trials) as u64;
    report.distinct_trial_outcomes = outcomes.len() as u64;
    Ok(report)
}
