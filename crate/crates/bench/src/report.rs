use std::fmt::Write as _;

use ori_core::{Mode, Topology};
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, ExperimentConfig};

/// Least fraction of contributions that must land within the analytic retry
/// budget in a contention run.
pub const LIVENESS_FLOOR: f64 = 0.935;
pub const DOSE_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub mode: Mode,
    pub topology: Topology,
    pub n_agents: usize,
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
    pub stale_agents_k: usize,

    pub commit_attempts: u64,
    pub commits_ok: u64,
    pub rejects_409: u64,
    /// Rejected share of attempts.
    pub scr: f64,
    pub commit_rate: f64,
    pub predicted_rate: Option<f64>,
    /// 95th percentile of attempts per contribution.
    pub k95_empirical: Option<u32>,
    /// Share of contributions that landed within `required_retry_budget(scr, 0.95)`.
    pub liveness_within_k: Option<f64>,

    /// Accepted commits flagged by the history audit.
    pub type1_corruptions: u64,
    /// Server-side count of divergent commits that were applied.
    pub counter_divergent_accepted: u64,
    pub contributions_preserved: u64,
    pub contributions_intended: u64,
    /// Number of distinct per-trial `contributions_preserved` values.
    pub distinct_trial_outcomes: u64,
    pub view_checked: u64,
    pub view_divergent: u64,
    pub engineered_stale: u64,
    /// Attempts whose verdict the script did not allow for.
    pub unexpected_outcomes: u64,

    /// Wilson interval on the uncorrupted share of attempts.
    pub wilson_ci_95: Option<(f64, f64)>,
    /// Upper bound on the corruption rate, only when none was observed.
    pub rule_of_three_ub: Option<f64>,
}

impl ExperimentReport {
    pub fn empty(cfg: &ExperimentConfig) -> Self {
        Self {
            experiment: cfg.experiment,
            mode: cfg.mode,
            topology: cfg.topology,
            n_agents: cfg.n_agents,
            steps: cfg.steps,
            trials: cfg.trials,
            seed: cfg.seed,
            stale_agents_k: cfg.stale_agents_k,
            commit_attempts: 0,
            commits_ok: 0,
            rejects_409: 0,
            scr: 0.0,
            commit_rate: 0.0,
            predicted_rate: None,
            k95_empirical: None,
            liveness_within_k: None,
            type1_corruptions: 0,
            counter_divergent_accepted: 0,
            contributions_preserved: 0,
            contributions_intended: 0,
            distinct_trial_outcomes: 0,
            view_checked: 0,
            view_divergent: 0,
            engineered_stale: 0,
            unexpected_outcomes: 0,
            wilson_ci_95: None,
            rule_of_three_ub: None,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }

    /// Invariants this report must satisfy; empty when all hold.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                out.push(format!("{}: {msg}", self.experiment.name()));
            }
        };
        check(
            self.commits_ok + self.rejects_409 == self.commit_attempts,
            format!(
                "{} ok + {} rejected != {} attempts",
                self.commits_ok, self.rejects_409, self.commit_attempts
            ),
        );
        check(
            self.unexpected_outcomes == 0,
            format!("{} unexpected verdicts", self.unexpected_outcomes),
        );
        let on = self.mode == Mode::OriOn;
        if on {
            check(
                self.type1_corruptions == 0,
                format!("{} corruptions under validation", self.type1_corruptions),
            );
            check(
                self.counter_divergent_accepted == 0,
                format!("server applied {} divergent commits", self.counter_divergent_accepted),
            );
        }
        match self.experiment {
            Experiment::StaleInjection => {}
            Experiment::ContentionSweep => {
                if on {
                    check(
                        self.contributions_preserved == self.contributions_intended,
                        format!(
                            "{} of {} acknowledged contributions survive",
                            self.contributions_preserved, self.contributions_intended
                        ),
                    );
                    if let Some(l) = self.liveness_within_k {
                        check(l >= LIVENESS_FLOOR, format!("liveness {l:.4} below {LIVENESS_FLOOR}"));
                    }
                }
                if self.topology == Topology::Dedicated {
                    check(self.scr == 0.0, format!("dedicated scr {}", self.scr));
                }
            }
            Experiment::OriIsolation => {
                let want = if on {
                    self.contributions_intended
                } else {
                    (self.steps * self.trials) as u64
                };
                check(
                    self.contributions_preserved == want,
                    format!("{} contributions preserved, want {want}", self.contributions_preserved),
                );
                check(
                    self.distinct_trial_outcomes == 1,
                    format!("{} distinct trial outcomes", self.distinct_trial_outcomes),
                );
            }
            Experiment::DoseResponse => {
                let predicted = self.predicted_rate.unwrap_or(f64::NAN);
                check(
                    (self.commit_rate - predicted).abs() < DOSE_TOLERANCE,
                    format!("rate {:.4} vs predicted {predicted:.4}", self.commit_rate),
                );
            }
            Experiment::DivergenceCounters => {
                if !on {
                    check(
                        self.view_divergent == self.engineered_stale,
                        format!(
                            "{} divergent, engineered {}",
                            self.view_divergent, self.engineered_stale
                        ),
                    );
                }
            }
        }
        out
    }
}

/// SCR must not drop as the agent count grows across a shared-key sweep.
pub fn sweep_failures(reports: &[ExperimentReport]) -> Vec<String> {
    let mut sorted: Vec<&ExperimentReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.n_agents);
    sorted
        .windows(2)
        .filter(|w| w[0].mode == w[1].mode && w[0].topology == Topology::Shared && w[1].scr < w[0].scr)
        .map(|w| {
            format!(
                "contention-sweep: scr fell from {:.4} at N={} to {:.4} at N={}",
                w[0].scr, w[0].n_agents, w[1].scr, w[1].n_agents
            )
        })
        .collect()
}

fn mode_name(mode: Mode) -> &'static str {
    if mode.ori_enabled() {
        "on"
    } else {
        "off"
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| v.to_string())
}

pub fn table(reports: &[ExperimentReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<20} {:>3} {:>3} {:>8} {:>8} {:>8} {:>7} {:>6} {:>5} {:>9} {:>11} {:>9} {:>10}",
        "experiment",
        "ori",
        "N",
        "attempts",
        "ok",
        "409",
        "scr",
        "rate",
        "k95",
        "type-I",
        "preserved",
        "divergent",
        "r3-ub"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:<20} {:>3} {:>3} {:>8} {:>8} {:>8} {:>7.4} {:>5.1}% {:>5} {:>9} {:>11} {:>9} {:>10}",
            r.experiment.name(),
            mode_name(r.mode),
            r.n_agents,
            r.commit_attempts,
            r.commits_ok,
            r.rejects_409,
            r.scr,
            r.commit_rate * 100.0,
            opt(r.k95_empirical),
            r.type1_corruptions,
            format!("{}/{}", r.contributions_preserved, r.contributions_intended),
            format!("{}/{}", r.view_divergent, r.view_checked),
            opt(r.rule_of_three_ub.map(|u| format!("{u:.3e}"))),
        );
    }
    s
}
