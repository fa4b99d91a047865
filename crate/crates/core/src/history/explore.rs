//! Exhaustive schedule enumeration over the real registry.
//!
//! Each agent runs a fixed script: per step, read every shard in order, then
//! commit its target shard with the version it just read. Every interleaving of
//! the agents' operations is executed against a fresh [`Registry`] and the
//! resulting history is checked. Operations are atomic because the registry
//! holds its guard across each one, so whole-operation interleavings are the
//! only reachable ones.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{is_ori_legal, src_witnesses, Violation, ViolationKind};
use crate::acp::{CommitRequest, Mode};
use crate::error::{Error, Result};
use crate::registry::{Registry, RegistryConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Topology {
    /// Agent `i` commits to shard `i % shards`.
    Dedicated,
    /// Every agent commits to shard 0.
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub agents: usize,
    pub shards: usize,
    pub steps: usize,
    pub mode: Mode,
    pub topology: Topology,
    /// Largest number of complete schedules the caller is willing to run.
    pub cap: u128,
}

impl ExploreConfig {
    pub const MAX_AGENTS: usize = 3;
    pub const MAX_SHARDS: usize = 3;
    pub const MAX_STEPS: usize = 3;
    pub const DEFAULT_CAP: u128 = 2_000_000;

    pub fn new(agents: usize, shards: usize, steps: usize, mode: Mode, topology: Topology) -> Self {
        Self {
            agents,
            shards,
            steps,
            mode,
            topology,
            cap: Self::DEFAULT_CAP,
        }
    }

    fn ops_per_agent(&self) -> usize {
        self.steps * (self.shards + 1)
    }

    /// Number of distinct interleavings: (n*L)! / (L!)^n.
    pub fn schedule_count(&self) -> u128 {
        let per = self.ops_per_agent() as u128;
        let mut total = 1u128;
        let mut placed = 0u128;
        for _ in 0..self.agents {
            for i in 1..=per {
                placed += 1;
                // running multinomial: multiply by placed, divide by i
                total = total * placed / i;
            }
        }
        total
    }

    fn target(&self, agent: usize) -> usize {
        match self.topology {
            Topology::Dedicated => agent % self.shards,
            Topology::Shared => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationExample {
    /// Agent index chosen at each position of the schedule.
    pub schedule: Vec<usize>,
    pub violation: Violation,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreReport {
    pub schedules: u64,
    /// Nodes of the schedule prefix tree, root included.
    pub states: u64,
    pub violating_schedules: u64,
    pub violations: BTreeMap<ViolationKind, u64>,
    /// Structural races whose second attempt was rejected.
    pub src_rejected: u64,
    /// A logged read that disagreed with the returned version, or that ran
    /// ahead of the committed version.
    pub invariant_failures: u64,
    pub examples: Vec<ViolationExample>,
}

impl ExploreReport {
    pub fn total_violations(&self) -> u64 {
        self.violations.values().sum()
    }

    pub fn count(&self, kind: ViolationKind) -> u64 {
        self.violations.get(&kind).copied().unwrap_or(0)
    }
}

const MAX_EXAMPLES: usize = 8;

fn shard_key(i: usize) -> String {
    format!("s{i}")
}

fn agent_name(i: usize) -> String {
    format!("a{i}")
}

pub fn enumerate_schedules(cfg: &ExploreConfig) -> Result<ExploreReport> {
    if cfg.agents == 0 || cfg.agents > ExploreConfig::MAX_AGENTS {
        return Err(Error::Domain(format!(
            "agents must be in 1..={}",
            ExploreConfig::MAX_AGENTS
        )));
    }
    if cfg.shards == 0 || cfg.shards > ExploreConfig::MAX_SHARDS {
        return Err(Error::Domain(format!(
            "shards must be in 1..={}",
            ExploreConfig::MAX_SHARDS
        )));
    }
    if cfg.steps == 0 || cfg.steps > ExploreConfig::MAX_STEPS {
        return Err(Error::Domain(format!(
            "steps must be in 1..={}",
            ExploreConfig::MAX_STEPS
        )));
    }
    let needed = cfg.schedule_count();
    if needed > cfg.cap {
        return Err(Error::BudgetExceeded { needed, cap: cfg.cap });
    }

    let mut report = ExploreReport::default();
    let mut remaining = vec![cfg.ops_per_agent(); cfg.agents];
    let mut schedule = Vec::with_capacity(cfg.agents * cfg.ops_per_agent());
    dfs(cfg, &mut remaining, &mut schedule, &mut report)?;
    Ok(report)
}

fn dfs(
    cfg: &ExploreConfig,
    remaining: &mut [usize],
    schedule: &mut Vec<usize>,
    report: &mut ExploreReport,
) -> Result<()> {
    report.states += 1;
    if remaining.iter().all(|&r| r == 0) {
        return run_schedule(cfg, schedule, report);
    }
    for a in 0..remaining.len() {
        if remaining[a] == 0 {
            continue;
        }
        remaining[a] -= 1;
        schedule.push(a);
        dfs(cfg, remaining, schedule, report)?;
        schedule.pop();
        remaining[a] += 1;
    }
    Ok(())
}

#[derive(Default, Clone)]
struct AgentState {
    pc: usize,
    /// (version, content) of the target shard as read in the current step.
    target_read: Option<(u64, String)>,
}

fn run_schedule(cfg: &ExploreConfig, schedule: &[usize], report: &mut ExploreReport) -> Result<()> {
    report.schedules += 1;
    let reg = Registry::new(RegistryConfig {
        record_history: true,
        ..Default::default()
    });
    for s in 0..cfg.shards {
        reg.create_shard(&shard_key(s), "")?;
    }
    let mut agents = vec![AgentState::default(); cfg.agents];
    let per_step = cfg.shards + 1;
    let mut invariant_ok = true;

    for &a in schedule {
        let st = &mut agents[a];
        let step = st.pc / per_step;
        let op = st.pc % per_step;
        st.pc += 1;
        let name = agent_name(a);
        let target = cfg.target(a);
        if op < cfg.shards {
            let key = shard_key(op);
            let got = reg.read_shard(&key, &name, 0)?;
            let logged = reg
                .session(&name)
                .and_then(|s| s.entries.last().cloned())
                .map(|e| (e.key, e.version));
            if logged != Some((key, got.version)) {
                invariant_ok = false;
            }
            if op == target {
                st.target_read = Some((got.version, got.content));
            }
        } else {
            let (version, content) = st.target_read.take().expect("target read earlier this step");
            let req = CommitRequest::new(shard_key(target), version, format!("{content}[{name}.{step}]"), name);
            reg.submit(&req, 0, cfg.mode)?;
        }
        if reg.check_read_set_soundness().is_err() {
            invariant_ok = false;
        }
    }
    if !invariant_ok {
        report.invariant_failures += 1;
    }

    let history = reg.history();
    let mut found: Vec<Violation> = is_ori_legal(&history)?.violations;
    for s in 0..cfg.shards {
        for w in src_witnesses(&history, &shard_key(s))? {
            if w.second_committed {
                found.push(w.to_violation());
            } else {
                report.src_rejected += 1;
            }
        }
    }
    if !found.is_empty() {
        report.violating_schedules += 1;
    }
    for v in found {
        *report.violations.entry(v.kind).or_default() += 1;
        if report.examples.len() < MAX_EXAMPLES {
            report.examples.push(ViolationExample {
                schedule: schedule.to_vec(),
                violation: v,
            });
        }
    }
    Ok(())
}
