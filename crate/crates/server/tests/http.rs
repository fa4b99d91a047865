use std::sync::Arc;

use ori_core::history::format::parse_lines;
use ori_core::{is_ori_legal, ManualClock, Registry, RegistryConfig};
use ori_server::api::{CommitBody, CommitOk, ReadEntry, ShardBody, StatsBody};
use ori_server::{ApiError, AppState, ErrorCode, ServerConfig, ServerHandle};
use serde::Serialize;
use ureq::http::Response;
use ureq::Body;

struct Client {
    base: String,
    agent: ureq::Agent,
}

impl Client {
    fn new(server: &ServerHandle) -> Self {
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Self {
            base: server.url(),
            agent,
        }
    }

    fn get(&self, path: &str) -> Response<Body> {
        self.agent.get(format!("{}{path}", self.base)).call().unwrap()
    }

    fn post<T: Serialize>(&self, path: &str, body: &T) -> Response<Body> {
        self.agent.post(format!("{}{path}", self.base)).send_json(body).unwrap()
    }

    fn post_raw(&self, path: &str, body: &str) -> Response<Body> {
        self.agent
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .send(body)
            .unwrap()
    }

    fn create(&self, key: &str, content: &str) {
        let r = self.post("/admin/shard", &serde_json::json!({"key": key, "content": content}));
        assert_eq!(r.status(), 201);
    }

    fn read(&self, key: &str, agent: &str) -> ShardBody {
        let mut r = self.get(&format!("/shard/{key}?agent_id={agent}"));
        assert_eq!(r.status(), 200);
        r.body_mut().read_json().unwrap()
    }

    fn commit(&self, key: &str, expected: u64, agent: &str) -> Response<Body> {
        self.post(
            "/commit/v2",
            &CommitBody {
                key: key.into(),
                expected_version: expected,
                delta: format!("{agent}@{expected}"),
                agent_id: agent.into(),
                read_set: None,
            },
        )
    }

    fn stats(&self) -> StatsBody {
        self.get("/stats").body_mut().read_json().unwrap()
    }
}

fn error_of(mut r: Response<Body>) -> (u16, ApiError) {
    let status = r.status().as_u16();
    (status, r.body_mut().read_json().unwrap())
}

fn start(config: ServerConfig) -> ServerHandle {
    ServerHandle::start(&ServerConfig { port: 0, ..config }).unwrap()
}

#[test]
fn read_returns_logged_version() {
    let server = start(ServerConfig::default());
    let c = Client::new(&server);
    c.create("db_schema", "PostgreSQL dialect");
    for v in 1..3 {
        assert_eq!(c.commit("db_schema", v, "a1").status(), 200);
    }
    let got = c.read("db_schema", "a2");
    assert_eq!(got.version, 3);
    let logs = server.state().registry.session("a2").unwrap();
    assert_eq!(logs.entries[0].version, 3);
}

#[test]
fn unknown_key_and_missing_agent() {
    let server = start(ServerConfig::default());
    let c = Client::new(&server);
    let (status, err) = error_of(c.get("/shard/missing?agent_id=a1"));
    assert_eq!((status, err.code), (404, ErrorCode::UnknownKey));

    c.create("k", "");
    let (status, err) = error_of(c.get("/shard/k"));
    assert_eq!((status, err.code), (422, ErrorCode::BadRequest));
    let (status, _) = error_of(c.get("/shard/k?agent_id="));
    assert_eq!(status, 422);
    // anonymous reads leave no trace
    assert_eq!(c.stats().counters.gets, 0);
}

#[test]
fn cross_shard_stale_over_the_wire() {
    let server = start(ServerConfig::default());
    let c = Client::new(&server);
    c.create("db_schema", "PostgreSQL");
    c.create("migration_script", "");
    c.read("db_schema", "a2");
    c.read("migration_script", "a2");
    c.read("db_schema", "a1");
    assert_eq!(c.commit("db_schema", 1, "a1").status(), 200);

    let (status, err) = error_of(c.commit("migration_script", 1, "a2"));
    assert_eq!(status, 409);
    assert_eq!(err, ApiError::new(ErrorCode::CrossShardStale, Some("db_schema".into())));

    c.read("db_schema", "a2");
    let mut ok = c.commit("migration_script", 1, "a2");
    assert_eq!(ok.status(), 200);
    let body: CommitOk = ok.body_mut().read_json().unwrap();
    assert_eq!(body.new_version, 2);
}

#[test]
fn replayed_commit_is_version_mismatch() {
    let server = start(ServerConfig::default());
    let c = Client::new(&server);
    c.create("k", "");
    assert_eq!(c.commit("k", 1, "a").status(), 200);
    let (status, err) = error_of(c.commit("k", 1, "a"));
    assert_eq!((status, err.code), (409, ErrorCode::VersionMismatch));
}

#[test]
fn malformed_bodies_are_422() {
    let server = start(ServerConfig::default());
    let c = Client::new(&server);
    c.create("k", "");
    for body in [
        "not json",
        "{}",
        r#"{"key":"k","expected_version":1,"delta":"x"}"#,
        r#"{"key":"k","expected_version":"one","delta":"x","agent_id":"a"}"#,
        r#"{"key":"k","expected_version":0,"delta":"x","agent_id":"a"}"#,
        r#"{"key":"k","expected_version":1,"delta":"x","agent_id":""}"#,
        r#"{"key":"k","expected_version":1,"delta":"x","agent_id":"a","read_set":{"k":1}}"#,
    ] {
        let (status, err) = error_of(c.post_raw("/commit/v2", body));
        assert_eq!((status, err.code), (422, ErrorCode::BadRequest), "{body}");
    }
    let (status, _) = error_of(c.post_raw("/admin/shard", r#"{"key":"z"}"#));
    assert_eq!(status, 422);
    let (status, err) = error_of(c.commit("nope", 1, "a"));
    assert_eq!((status, err.code), (404, ErrorCode::UnknownKey));
}

#[test]
fn admin_endpoints() {
    let server = start(ServerConfig::default());
    let c = Client::new(&server);
    assert_eq!(c.get("/health").status(), 200);
    let fresh = c.stats();
    assert_eq!(fresh.counters, Default::default());
    assert!(fresh.ori_enabled);

    c.create("k", "");
    let (status, err) = error_of(c.post("/admin/shard", &serde_json::json!({"key": "k", "content": ""})));
    assert_eq!((status, err.code), (409, ErrorCode::KeyExists));

    assert_eq!(c.commit("k", 1, "a").status(), 200);
    let s = c.stats();
    assert_eq!(s.counters.commits, 1);
    assert_eq!(s.entries["k"].version, 2);
    assert_eq!(s.token_owners["k"], "a");

    assert_eq!(c.post_raw("/admin/reset", "").status(), 204);
    let (status, _) = error_of(c.get("/shard/k?agent_id=a"));
    assert_eq!(status, 404);
    assert_eq!(c.stats().counters, Default::default());
}

#[test]
fn explicit_read_set_over_the_wire() {
    let server = start(ServerConfig::default());
    let c = Client::new(&server);
    c.create("a", "");
    c.create("b", "");
    assert_eq!(c.commit("b", 1, "w").status(), 200);
    let body = CommitBody {
        key: "a".into(),
        expected_version: 1,
        delta: "x".into(),
        agent_id: "u".into(),
        read_set: Some(vec![ReadEntry {
            key: "b".into(),
            version: 1,
        }]),
    };
    let (status, err) = error_of(c.post("/commit/v2", &body));
    assert_eq!(status, 409);
    assert_eq!(err.detail.as_deref(), Some("b"));
}

#[test]
fn ownership_enforcement_flag() {
    let server = start(ServerConfig {
        ownership_enforced: true,
        ..Default::default()
    });
    let c = Client::new(&server);
    c.create("k", "");
    assert_eq!(c.commit("k", 1, "alice").status(), 200);
    let (status, err) = error_of(c.commit("k", 2, "bob"));
    assert_eq!((status, err.code), (409, ErrorCode::OwnershipViolation));
    assert_eq!(err.detail.as_deref(), Some("alice"));
}

#[test]
fn expired_session_is_410_until_reread() {
    let clock = Arc::new(ManualClock::new(0));
    let registry = Registry::new(RegistryConfig {
        session_ttl: Some(1_000),
        ..Default::default()
    });
    let state = Arc::new(AppState::new(registry, clock.clone(), true));
    let server = ServerHandle::start_with("127.0.0.1:0".parse().unwrap(), state).unwrap();
    let c = Client::new(&server);
    c.create("k", "");
    c.read("k", "a");
    clock.set(5_000);
    let mut r = c.post_raw("/admin/expire", "");
    let expired: serde_json::Value = r.body_mut().read_json().unwrap();
    assert_eq!(expired["expired"], 1);
    let (status, err) = error_of(c.commit("k", 1, "a"));
    assert_eq!((status, err.code), (410, ErrorCode::SessionExpired));
    c.read("k", "a");
    assert_eq!(c.commit("k", 1, "a").status(), 200);
}

#[test]
fn lww_mode_toggle_only_skips_validation() {
    let server = start(ServerConfig {
        record_history: true,
        ..Default::default()
    });
    let c = Client::new(&server);
    let run = |c: &Client| {
        c.post_raw("/admin/reset", "");
        c.create("mine", "");
        c.create("theirs", "");
        c.read("theirs", "a");
        c.read("mine", "a");
        assert_eq!(c.commit("theirs", 1, "b").status(), 200);
        let status = c.commit("mine", 1, "a").status().as_u16();
        (status, c.stats().counters)
    };
    let (on_status, on) = run(&c);
    assert_eq!(on_status, 409);
    assert_eq!(
        c.post("/admin/mode", &serde_json::json!({"ori_enabled": false}))
            .status(),
        200
    );
    let (off_status, off) = run(&c);
    assert_eq!(off_status, 200);
    assert!(!c.stats().ori_enabled);

    assert_eq!(on.view_checked_commits, off.view_checked_commits);
    assert_eq!(on.view_divergent_commits, off.view_divergent_commits);
    assert_eq!(on.view_divergent_accepted, 0);
    assert_eq!(off.view_divergent_accepted, 1);

    let text = c.get("/admin/history").body_mut().read_to_string().unwrap();
    let history = parse_lines(&text).unwrap();
    assert_eq!(history.len(), 4);
    assert!(!is_ori_legal(&history).unwrap().legal);
}

#[test]
fn history_endpoint_disabled_by_default() {
    let server = start(ServerConfig::default());
    let c = Client::new(&server);
    assert_eq!(c.get("/admin/history").status(), 404);
}

#[test]
fn stats_can_export_session_logs() {
    let server = start(ServerConfig::default());
    let c = Client::new(&server);
    c.create("k", "");
    c.read("k", "x");
    assert!(c.stats().sessions.is_none());
    let s: StatsBody = c.get("/stats?logs=1").body_mut().read_json().unwrap();
    let sessions = s.sessions.unwrap();
    assert_eq!(sessions.len(), 1);
    assert_eq!(sessions[0].agent, "x");
}

#[test]
fn wal_recovery_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ori.wal");
    let config = ServerConfig {
        port: 0,
        wal_path: Some(path.clone()),
        wal_full_content: true,
        ..Default::default()
    };
    {
        let server = ServerHandle::start(&config).unwrap();
        let c = Client::new(&server);
        c.create("k", "seed");
        assert_eq!(c.commit("k", 1, "a").status(), 200);
    }
    let server = ServerHandle::start(&config).unwrap();
    let c = Client::new(&server);
    let got = c.read("k", "b");
    assert_eq!((got.version, got.content.as_str()), (2, "a@1"));
    assert_eq!(c.commit("k", 2, "b").status(), 200);

    // a digest-only log cannot be recovered and is moved aside
    let digest_only = ServerConfig {
        wal_full_content: false,
        ..config
    };
    let server = ServerHandle::start(&digest_only).unwrap();
    let c = Client::new(&server);
    assert_eq!(c.get("/shard/k?agent_id=b").status(), 404);
    assert!(dir.path().join("ori.wal.prev").exists());
}
