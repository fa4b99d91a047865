use ori_core::CommitRequest;

use super::{agent_name, fresh_trial, permutation, shard_key, Tally};
use crate::backend::Backend;
use crate::config::{ExperimentConfig, FREEZE_AFTER_STEP};
use crate::error::Result;
use crate::report::ExperimentReport;

/// Dedicated shards, one per agent. `k` seeded agents stop re-reading their
/// siblings after step [`FREEZE_AFTER_STEP`] and keep committing against the
/// frozen versions. Fresh agents go first in each step, reading everything
/// and committing at once; no attempt is retried.
pub fn run_dose_response(backend: &dyn Backend, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let n = cfg.n_agents;
    let mut tally = Tally::default();
    for trial in 0..cfg.trials {
        fresh_trial(backend, cfg.mode)?;
        for s in 0..n {
            backend.create_shard(&shard_key(s), "")?;
        }
        let chosen = permutation(cfg.seed, &[trial as u64, u64::MAX], n);
        let stale = &chosen[..cfg.stale_agents_k];
        for step in 1..=cfg.steps {
            let order = permutation(cfg.seed, &[trial as u64, step as u64], n);
            let (fresh, frozen): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|a| !stale.contains(a));
            for a in fresh.into_iter().chain(frozen) {
                let name = agent_name(a);
                let own = shard_key(a);
                let rereads = step <= FREEZE_AFTER_STEP || !stale.contains(&a);
                let mut own_version = 0;
                for s in 0..n {
                    if s == a || rereads {
                        let r = backend.read(&shard_key(s), &name)?;
                        if s == a {
                            own_version = r.version;
                        }
                    }
                }
                let v = backend.commit(&CommitRequest::new(own, own_version, format!("{name}.{step}"), name))?;
                tally.record(&v);
            }
        }
        tally.close_trial(backend)?;
    }
    let mut report = tally.into_report(cfg)?;
    report.predicted_rate = Some(cfg.predicted_commit_rate());
    report.engineered_stale = (cfg.stale_agents_k * cfg.steps.saturating_sub(FREEZE_AFTER_STEP) * cfg.trials) as u64;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::InProcess;

    #[test]
    fn rejected_count_equals_frozen_commits() {
        let backend = InProcess::new();
        for k in 0..=4 {
            let r = run_dose_response(&backend, &ExperimentConfig::dose_response(k)).unwrap();
            if k < 4 {
                assert_eq!(r.rejects_409, r.engineered_stale, "k={k}");
            }
            assert_eq!(r.commit_attempts, 80);
            assert_eq!(r.type1_corruptions, 0);
        }
    }
}
