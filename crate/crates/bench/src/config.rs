use ori_core::{Mode, Topology};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Experiment {
    StaleInjection,
    ContentionSweep,
    OriIsolation,
    DoseResponse,
    DivergenceCounters,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::StaleInjection => "stale-injection",
            Experiment::ContentionSweep => "contention-sweep",
            Experiment::OriIsolation => "ori-isolation",
            Experiment::DoseResponse => "dose-response",
            Experiment::DivergenceCounters => "divergence-counters",
        }
    }
}

/// Step after which dose-response stale agents stop re-reading siblings.
pub const FREEZE_AFTER_STEP: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n_agents: usize,
    /// Script steps per agent. The contention sweep runs this many epochs, one
    /// commit per agent each.
    pub steps: usize,
    pub topology: Topology,
    pub mode: Mode,
    /// Attempts per contribution before giving up; 0 is unbounded.
    pub retry_budget: u32,
    pub stale_agents_k: usize,
    pub seed: u64,
    pub trials: usize,
    /// Stale-injection only.
    pub stale_attempts: u64,
    pub fresh_attempts: u64,
}

impl ExperimentConfig {
    fn base(experiment: Experiment) -> Self {
        Self {
            experiment,
            n_agents: 4,
            steps: 10,
            topology: Topology::Shared,
            mode: Mode::OriOn,
            retry_budget: 0,
            stale_agents_k: 0,
            seed: 0x5eed,
            trials: 1,
            stale_attempts: 0,
            fresh_attempts: 0,
        }
    }

    pub fn stale_injection(stale: u64, fresh: u64) -> Self {
        Self {
            n_agents: 1,
            steps: 0,
            topology: Topology::Dedicated,
            stale_attempts: stale,
            fresh_attempts: fresh,
            ..Self::base(Experiment::StaleInjection)
        }
    }

    pub fn contention(n_agents: usize, epochs: usize, mode: Mode) -> Self {
        Self {
            n_agents,
            steps: epochs,
            mode,
            ..Self::base(Experiment::ContentionSweep)
        }
    }

    pub fn ori_isolation(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::base(Experiment::OriIsolation)
        }
    }

    pub fn dose_response(stale_agents_k: usize) -> Self {
        Self {
            steps: 20,
            topology: Topology::Dedicated,
            stale_agents_k,
            ..Self::base(Experiment::DoseResponse)
        }
    }

    pub fn divergence(mode: Mode) -> Self {
        Self {
            steps: 4,
            topology: Topology::Dedicated,
            mode,
            stale_agents_k: 2,
            ..Self::base(Experiment::DivergenceCounters)
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Domain(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        match self.experiment {
            Experiment::StaleInjection => {
                if self.stale_attempts + self.fresh_attempts == 0 {
                    return bad("stale-injection needs at least one attempt".into());
                }
            }
            _ if self.n_agents == 0 || self.steps == 0 => {
                return bad("n_agents and steps must be at least 1".into());
            }
            Experiment::DoseResponse if self.stale_agents_k > self.n_agents => {
                return bad(format!(
                    "stale_agents_k {} exceeds n_agents {}",
                    self.stale_agents_k, self.n_agents
                ));
            }
            // every stale commit needs at least one fresh agent to have moved a sibling
            Experiment::DivergenceCounters if self.stale_agents_k >= self.n_agents && self.stale_agents_k > 0 => {
                return bad(format!(
                    "stale_agents_k {} must be below n_agents {}",
                    self.stale_agents_k, self.n_agents
                ));
            }
            _ => {}
        }
        Ok(())
    }

    /// Expected dose-response commit rate, 1 - (k/n)(frozen steps / steps).
    pub fn predicted_commit_rate(&self) -> f64 {
        let frozen = self.steps.saturating_sub(FREEZE_AFTER_STEP) as f64;
        1.0 - (self.stale_agents_k as f64 / self.n_agents as f64) * (frozen / self.steps as f64)
    }
}
