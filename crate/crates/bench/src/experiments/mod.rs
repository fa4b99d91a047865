//! Scripted agent workloads. Each `run_*` resets the backend, drives it, and
//! audits the resulting trace.

mod contention;
mod divergence;
mod dose;
mod isolation;
mod stale;

pub use contention::{run_contention_sweep, run_sweep};
pub use divergence::run_divergence_counters;
pub use dose::run_dose_response;
pub use isolation::run_ori_isolation;
pub use stale::run_stale_injection;

use ori_core::history::corrupted_commits;
use ori_core::{required_retry_budget, Counters, Mode};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backend::{Backend, Verdict};
use crate::config::{Experiment, ExperimentConfig};
use crate::error::Result;
use crate::report::ExperimentReport;
use crate::stats::{percentile, rule_of_three, wilson_ci};

pub fn run(backend: &dyn Backend, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.experiment {
        Experiment::StaleInjection => run_stale_injection(backend, cfg),
        Experiment::ContentionSweep => run_contention_sweep(backend, cfg),
        Experiment::OriIsolation => run_ori_isolation(backend, cfg),
        Experiment::DoseResponse => run_dose_response(backend, cfg),
        Experiment::DivergenceCounters => run_divergence_counters(backend, cfg),
    }
}

/// Deterministic permutation of `0..n` for one (seed, tag) pair.
pub(crate) fn permutation(seed: u64, tag: &[u64], n: usize) -> Vec<usize> {
    let mut mixed = seed;
    for t in tag {
        mixed = mixed.rotate_left(17) ^ t.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(&mut rng);
    v
}

/// Attempt count recorded for a contribution that never landed.
pub(crate) const ABANDONED: u32 = u32::MAX;

pub(crate) fn marker(agent: usize, step: usize) -> String {
    format!("[a{agent}.{step}]")
}

pub(crate) fn agent_name(i: usize) -> String {
    format!("a{i}")
}

pub(crate) fn shard_key(i: usize) -> String {
    format!("s{i}")
}

pub(crate) fn fresh_trial(backend: &dyn Backend, mode: Mode) -> Result<()> {
    backend.reset()?;
    backend.set_mode(mode)
}

/// Running totals for one experiment.
#[derive(Debug, Default)]
pub(crate) struct Tally {
    pub attempts: u64,
    pub ok: u64,
    pub rejected: u64,
    pub unexpected: u64,
    pub type1: u64,
    pub counters: Counters,
    /// Attempts needed per contribution, [`ABANDONED`] if it never landed.
    pub attempts_per_contribution: Vec<u32>,
}

impl Tally {
    pub fn record(&mut self, v: &Verdict) {
        self.attempts += 1;
        if v.is_ok() {
            self.ok += 1;
        } else {
            self.rejected += 1;
        }
    }

    /// Audits the backend's trace and folds its counters in. Call once per
    /// trial, before the next reset.
    pub fn close_trial(&mut self, backend: &dyn Backend) -> Result<()> {
        self.type1 += corrupted_commits(&backend.history()?)?.len() as u64;
        let c = backend.counters()?;
        self.counters.view_checked_commits += c.view_checked_commits;
        self.counters.view_divergent_commits += c.view_divergent_commits;
        self.counters.view_divergent_accepted += c.view_divergent_accepted;
        Ok(())
    }

    pub fn into_report(self, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
        let mut r = ExperimentReport::empty(cfg);
        r.commit_attempts = self.attempts;
        r.commits_ok = self.ok;
        r.rejects_409 = self.rejected;
        r.unexpected_outcomes = self.unexpected;
        r.type1_corruptions = self.type1;
        r.counter_divergent_accepted = self.counters.view_divergent_accepted;
        r.view_checked = self.counters.view_checked_commits;
        r.view_divergent = self.counters.view_divergent_commits;
        if self.attempts > 0 {
            r.scr = self.rejected as f64 / self.attempts as f64;
            r.commit_rate = self.ok as f64 / self.attempts as f64;
            r.wilson_ci_95 = Some(wilson_ci(self.attempts - self.type1.min(self.attempts), self.attempts)?);
            if self.type1 == 0 {
                r.rule_of_three_ub = Some(rule_of_three(self.attempts)?);
            }
        }
        r.k95_empirical = percentile(&self.attempts_per_contribution, 0.95).filter(|&k| k != ABANDONED);
        if !self.attempts_per_contribution.is_empty() && r.scr < 1.0 {
            let k = required_retry_budget(r.scr, 0.95)?;
            let within = self.attempts_per_contribution.iter().filter(|&&a| a <= k).count();
            r.liveness_within_k = Some(within as f64 / self.attempts_per_contribution.len() as f64);
        }
        Ok(r)
    }
}
