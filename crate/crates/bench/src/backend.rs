//! What an experiment talks to: the registry in this process, or a live server.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use ori_core::history::format::parse_lines;
use ori_core::{
    Clock, CommitOutcome, CommitRequest, Counters, HistoryEvent, Mode, MonotonicClock, Registry, RegistryConfig,
    Session, ShardRead,
};
use ori_server::api::{CommitBody, CommitOk, ReadEntry, ShardBody, StatsBody};
use ori_server::{ApiError, ErrorCode};

use crate::error::{HarnessError, Result};

/// Result of one commit attempt as seen by an agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Committed(u64),
    Rejected { code: ErrorCode, detail: Option<String> },
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, Verdict::Committed(_))
    }

    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            Verdict::Committed(_) => None,
            Verdict::Rejected { code, .. } => Some(*code),
        }
    }
}

impl From<CommitOutcome> for Verdict {
    fn from(o: CommitOutcome) -> Self {
        let (code, detail) = match o {
            CommitOutcome::Committed { new_version } => return Verdict::Committed(new_version),
            CommitOutcome::CrossShardStale { key, .. } => (ErrorCode::CrossShardStale, Some(key)),
            CommitOutcome::VersionMismatch { .. } => (ErrorCode::VersionMismatch, None),
            CommitOutcome::SessionExpired => (ErrorCode::SessionExpired, None),
            CommitOutcome::OwnershipViolation { owner } => (ErrorCode::OwnershipViolation, Some(owner)),
        };
        Verdict::Rejected { code, detail }
    }
}

pub trait Backend: Send + Sync {
    /// Empty registry, zeroed counters, cleared logs and trace.
    fn reset(&self) -> Result<()>;
    fn create_shard(&self, key: &str, content: &str) -> Result<()>;
    fn read(&self, key: &str, agent: &str) -> Result<ShardRead>;
    fn commit(&self, req: &CommitRequest) -> Result<Verdict>;
    fn set_mode(&self, mode: Mode) -> Result<()>;
    fn counters(&self) -> Result<Counters>;
    fn history(&self) -> Result<Vec<HistoryEvent>>;
    fn sessions(&self) -> Result<Vec<Session>>;
}

pub struct InProcess {
    registry: Registry,
    clock: MonotonicClock,
    ori_enabled: AtomicBool,
}

impl InProcess {
    /// Registry with history recording on, which every audit needs.
    pub fn new() -> Self {
        Self {
            registry: Registry::new(RegistryConfig {
                record_history: true,
                ..Default::default()
            }),
            clock: MonotonicClock::new(),
            ori_enabled: AtomicBool::new(true),
        }
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    fn mode(&self) -> Mode {
        if self.ori_enabled.load(Ordering::SeqCst) {
            Mode::OriOn
        } else {
            Mode::OriOff
        }
    }
}

impl Default for InProcess {
    fn default() -> Self {
        Self::new()
    }
}

impl Backend for InProcess {
    fn reset(&self) -> Result<()> {
        Ok(self.registry.reset()?)
    }

    fn create_shard(&self, key: &str, content: &str) -> Result<()> {
        self.registry.create_shard(key, content)?;
        Ok(())
    }

    fn read(&self, key: &str, agent: &str) -> Result<ShardRead> {
        Ok(self.registry.read_shard(key, agent, self.clock.now())?)
    }

    fn commit(&self, req: &CommitRequest) -> Result<Verdict> {
        Ok(self.registry.submit(req, self.clock.now(), self.mode())?.into())
    }

    fn set_mode(&self, mode: Mode) -> Result<()> {
        self.ori_enabled.store(mode.ori_enabled(), Ordering::SeqCst);
        Ok(())
    }

    fn counters(&self) -> Result<Counters> {
        Ok(self.registry.counters())
    }

    fn history(&self) -> Result<Vec<HistoryEvent>> {
        Ok(self.registry.history())
    }

    fn sessions(&self) -> Result<Vec<Session>> {
        Ok(self.registry.session_logs())
    }
}

/// Client for a server started with history recording enabled.
pub struct Http {
    base: String,
    agent: ureq::Agent,
}

impl Http {
    pub fn new(base: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self {
            base: base.into().trim_end_matches('/').to_owned(),
            agent,
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn fail(mut resp: ureq::http::Response<ureq::Body>) -> HarnessError {
        let status = resp.status();
        let body = resp.body_mut().read_to_string().unwrap_or_default();
        HarnessError::Http(format!("{status}: {body}"))
    }

    fn stats(&self, logs: bool) -> Result<StatsBody> {
        let path = if logs { "/stats?logs=1" } else { "/stats" };
        let mut resp = self.agent.get(self.url(path)).call()?;
        if resp.status() != 200 {
            return Err(Self::fail(resp));
        }
        Ok(resp.body_mut().read_json()?)
    }
}

impl Backend for Http {
    fn reset(&self) -> Result<()> {
        let resp = self.agent.post(self.url("/admin/reset")).send_empty()?;
        if resp.status() != 204 {
            return Err(Self::fail(resp));
        }
        Ok(())
    }

    fn create_shard(&self, key: &str, content: &str) -> Result<()> {
        let resp = self
            .agent
            .post(self.url("/admin/shard"))
            .send_json(serde_json::json!({ "key": key, "content": content }))?;
        if resp.status() != 201 {
            return Err(Self::fail(resp));
        }
        Ok(())
    }

    fn read(&self, key: &str, agent: &str) -> Result<ShardRead> {
        let mut resp = self
            .agent
            .get(self.url(&format!("/shard/{key}")))
            .query("agent_id", agent)
            .call()?;
        if resp.status() != 200 {
            return Err(Self::fail(resp));
        }
        let body: ShardBody = resp.body_mut().read_json()?;
        Ok(ShardRead {
            key: body.key,
            version: body.version,
            content: body.content,
        })
    }

    fn commit(&self, req: &CommitRequest) -> Result<Verdict> {
        let body = CommitBody {
            key: req.key.clone(),
            expected_version: req.expected_version,
            delta: req.delta.clone(),
            agent_id: req.agent.clone(),
            read_set: req.explicit_read_set.as_ref().map(|rs| {
                rs.iter()
                    .map(|(k, v)| ReadEntry {
                        key: k.clone(),
                        version: *v,
                    })
                    .collect()
            }),
        };
        let mut resp = self.agent.post(self.url("/commit/v2")).send_json(&body)?;
        match resp.status().as_u16() {
            200 => {
                let ok: CommitOk = resp.body_mut().read_json()?;
                Ok(Verdict::Committed(ok.new_version))
            }
            409 | 410 => {
                let err: ApiError = resp.body_mut().read_json()?;
                Ok(Verdict::Rejected {
                    code: err.code,
                    detail: err.detail,
                })
            }
            _ => Err(Self::fail(resp)),
        }
    }

    fn set_mode(&self, mode: Mode) -> Result<()> {
        let resp = self
            .agent
            .post(self.url("/admin/mode"))
            .send_json(serde_json::json!({ "ori_enabled": mode.ori_enabled() }))?;
        if resp.status() != 200 {
            return Err(Self::fail(resp));
        }
        Ok(())
    }

    fn counters(&self) -> Result<Counters> {
        Ok(self.stats(false)?.counters)
    }

    fn history(&self) -> Result<Vec<HistoryEvent>> {
        let mut resp = self.agent.get(self.url("/admin/history")).call()?;
        if resp.status() != 200 {
            return Err(Self::fail(resp));
        }
        let text = resp.body_mut().with_config().limit(u64::MAX).read_to_string()?;
        Ok(parse_lines(&text)?)
    }

    fn sessions(&self) -> Result<Vec<Session>> {
        Ok(self.stats(true)?.sessions.unwrap_or_default())
    }
}
