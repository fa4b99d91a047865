use ori_core::{CommitRequest, Mode};
use ori_server::ErrorCode;

use super::{fresh_trial, Tally};
use crate::backend::{Backend, Verdict};
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::report::ExperimentReport;
use crate::stats::rule_of_three;

const REF: &str = "ref";
const TARGET: &str = "target";

/// Alternates engineered-stale and fresh commits to `target`. A stale attempt
/// reads `ref` and `target`, then a second agent advances `ref` before the
/// commit goes in.
pub fn run_stale_injection(backend: &dyn Backend, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut tally = Tally::default();
    for _ in 0..cfg.trials {
        fresh_trial(backend, cfg.mode)?;
        backend.create_shard(REF, "")?;
        backend.create_shard(TARGET, "")?;
        for i in 0..cfg.stale_attempts.max(cfg.fresh_attempts) {
            if i < cfg.stale_attempts {
                let v = stale_attempt(backend, i)?;
                let expected = match cfg.mode {
                    Mode::OriOn => {
                        matches!(&v, Verdict::Rejected { code: ErrorCode::CrossShardStale, detail } if detail.as_deref() == Some(REF))
                    }
                    Mode::OriOff => v.is_ok(),
                };
                tally.unexpected += u64::from(!expected);
                tally.record(&v);
            }
            if i < cfg.fresh_attempts {
                let v = fresh_attempt(backend, i)?;
                tally.unexpected += u64::from(!v.is_ok());
                tally.record(&v);
            }
        }
        tally.close_trial(backend)?;
    }
    let mut report = tally.into_report(cfg)?;
    let injected = cfg.stale_attempts * cfg.trials as u64;
    report.engineered_stale = injected;
    report.rule_of_three_ub = match (report.type1_corruptions, injected) {
        (0, n) if n > 0 => Some(rule_of_three(n)?),
        _ => None,
    };
    Ok(report)
}

fn stale_attempt(backend: &dyn Backend, i: u64) -> Result<Verdict> {
    let agent = format!("stale{i}");
    let advancer = format!("adv{i}");
    backend.read(REF, &agent)?;
    let target = backend.read(TARGET, &agent)?;
    let r = backend.read(REF, &advancer)?;
    let advanced = backend.commit(&CommitRequest::new(REF, r.version, format!("{i}"), advancer))?;
    if !advanced.is_ok() {
        return Err(HarnessError::Abort(format!("advancing {REF} failed: {advanced:?}")));
    }
    backend.commit(&CommitRequest::new(TARGET, target.version, format!("stale {i}"), agent))
}

fn fresh_attempt(backend: &dyn Backend, i: u64) -> Result<Verdict> {
    let agent = format!("fresh{i}");
    backend.read(REF, &agent)?;
    let target = backend.read(TARGET, &agent)?;
    backend.commit(&CommitRequest::new(TARGET, target.version, format!("fresh {i}"), agent))
}
