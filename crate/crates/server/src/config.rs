use std::fs;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;

use clap::{ArgAction, Args};
use ori_core::acp::wal::read_wal;
use ori_core::{replay_wal, Registry, RegistryConfig, Wal, WalOptions};

/// Server settings; every flag can also come from the environment.
#[derive(Debug, Clone, Args)]
pub struct ServerConfig {
    #[arg(long, env = "ORI_HOST", default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub host: IpAddr,

    #[arg(long, env = "ORI_PORT", default_value_t = 7000)]
    pub port: u16,

    /// Validate commits (cross-shard staleness and expected version). When
    /// false, commits are last-writer-wins.
    #[arg(long, env = "ORI_ENABLED", default_value_t = true, action = ArgAction::Set)]
    pub ori_enabled: bool,

    /// Reject commits to a shard from anyone but its first committer.
    #[arg(long, env = "ORI_OWNERSHIP_ENFORCED", default_value_t = false, action = ArgAction::Set)]
    pub ownership_enforced: bool,

    /// Session time-to-live in milliseconds; 0 never expires.
    #[arg(long, env = "ORI_SESSION_TTL_MS", default_value_t = 0)]
    pub session_ttl_ms: u64,

    /// Append-only commit log. Without one, commits are memory-only.
    #[arg(long, env = "ORI_WAL_PATH")]
    pub wal_path: Option<PathBuf>,

    /// Store full content in the log (enables restart recovery).
    #[arg(long, env = "ORI_WAL_FULL_CONTENT", default_value_t = false, action = ArgAction::Set)]
    pub wal_full_content: bool,

    /// fdatasync after every log record.
    #[arg(long, env = "ORI_WAL_FSYNC", default_value_t = false, action = ArgAction::Set)]
    pub wal_fsync: bool,

    /// Keep the full event trace, served at /admin/history.
    #[arg(long, env = "ORI_RECORD_HISTORY", default_value_t = false, action = ArgAction::Set)]
    pub record_history: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 7000,
            ori_enabled: true,
            ownership_enforced: false,
            session_ttl_ms: 0,
            wal_path: None,
            wal_full_content: false,
            wal_fsync: false,
            record_history: false,
        }
    }
}

impl ServerConfig {
    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.host, self.port)
    }

    pub fn registry_config(&self) -> RegistryConfig {
        RegistryConfig {
            ownership_enforced: self.ownership_enforced,
            session_ttl: (self.session_ttl_ms > 0).then_some(self.session_ttl_ms),
            record_history: self.record_history,
        }
    }

    fn wal_options(&self) -> WalOptions {
        WalOptions {
            full_content: self.wal_full_content,
            fsync: self.wal_fsync,
        }
    }

    /// Open the registry, recovering from an existing full-content log when
    /// there is one. A digest-only log cannot rebuild content, so it is moved
    /// aside to `<path>.prev` and a fresh segment is started.
    pub fn open_registry(&self) -> ori_core::Result<Registry> {
        let config = self.registry_config();
        let Some(path) = &self.wal_path else {
            return Ok(Registry::new(config));
        };
        let opts = self.wal_options();
        if path.exists() && fs::metadata(path)?.len() > 0 {
            let scan = read_wal(path)?;
            let recoverable =
                scan.tail_error.is_none() && opts.full_content && scan.records.iter().all(|r| r.content.is_some());
            if recoverable {
                let image = replay_wal(&scan.records)?;
                let wal = Wal::resume(path, image.last_sequence, opts)?;
                tracing::info!(records = scan.records.len(), "recovered registry from log");
                return Registry::restore(config, &image, wal);
            }
            let mut prev = path.clone().into_os_string();
            prev.push(".prev");
            fs::rename(path, &prev)?;
            tracing::warn!(moved_to = ?prev, "existing log not recoverable; starting fresh segment");
        }
        Ok(Registry::with_wal(config, Wal::create(path, opts)?))
    }
}
