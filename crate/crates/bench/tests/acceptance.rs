//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use ori_bench::{
    rule_of_three, run_contention_sweep, run_divergence_counters, run_dose_response, run_ori_isolation,
    run_stale_injection, run_sweep, sweep_failures, wilson_ci, Backend, ExperimentConfig, Http, InProcess, Verdict,
};
use ori_core::acp::wal::read_wal;
use ori_core::{
    enumerate_schedules, replay_wal, required_retry_budget, CommitRequest, ExploreConfig, Mode, Topology, ViolationKind,
};
use ori_server::{ServerConfig, ServerHandle};

type Checks = Vec<(String, bool)>;
type Criterion = (u32, &'static str, fn() -> Checks);

fn check(checks: &mut Checks, ok: bool, what: impl Into<String>) {
    checks.push((what.into(), ok));
}

fn within(checks: &mut Checks, started: Instant, limit: Duration) {
    let took = started.elapsed();
    check(checks, took < limit, format!("ran in {took:.1?} (limit {limit:?})"));
}

fn http_server() -> ServerHandle {
    ServerHandle::start(&ServerConfig {
        port: 0,
        record_history: true,
        ..Default::default()
    })
    .expect("server starts")
}

fn c1_stale_injection() -> Checks {
    let mut c = Checks::new();
    let started = Instant::now();
    let r = run_stale_injection(&InProcess::new(), &ExperimentConfig::stale_injection(200, 200)).unwrap();
    within(&mut c, started, Duration::from_secs(10));
    check(
        &mut c,
        r.rejects_409 == 200,
        format!("in-process stale rejected {}/200", r.rejects_409),
    );
    check(
        &mut c,
        r.commits_ok == 200,
        format!("in-process fresh accepted {}/200", r.commits_ok),
    );
    check(
        &mut c,
        r.failures().is_empty(),
        format!("report invariants {:?}", r.failures()),
    );

    let server = http_server();
    let r = run_stale_injection(&Http::new(server.url()), &ExperimentConfig::stale_injection(200, 200)).unwrap();
    check(
        &mut c,
        (r.rejects_409, r.commits_ok, r.unexpected_outcomes) == (200, 200, 0),
        format!(
            "over HTTP {}x409 {}x200 {} unexpected",
            r.rejects_409, r.commits_ok, r.unexpected_outcomes
        ),
    );
    c
}

fn c2_injection_sweep() -> Checks {
    let mut c = Checks::new();
    let started = Instant::now();
    let r = run_stale_injection(&InProcess::new(), &ExperimentConfig::stale_injection(9_304, 0)).unwrap();
    within(&mut c, started, Duration::from_secs(120));
    check(
        &mut c,
        r.commit_attempts >= 9_304,
        format!("{} injected attempts", r.commit_attempts),
    );
    check(
        &mut c,
        r.type1_corruptions == 0,
        format!("{} corruptions in the audited trace", r.type1_corruptions),
    );
    check(&mut c, r.rejects_409 == 9_304, format!("{} rejected", r.rejects_409));
    let ub = r.rule_of_three_ub.unwrap_or(f64::NAN);
    println!("    rule_of_three(9304) = {:.3}%", ub * 100.0);
    check(
        &mut c,
        (ub * 100.0 - 0.032).abs() < 0.0005,
        format!("upper bound {:.4}%", ub * 100.0),
    );
    c
}

fn c3_contention_sweep() -> Checks {
    let mut c = Checks::new();
    let started = Instant::now();
    let backend = InProcess::new();
    let on = run_sweep(&backend, &ExperimentConfig::contention(1, 60, Mode::OriOn), &[4, 8, 16]).unwrap();
    let attempts: u64 = on.iter().map(|r| r.commit_attempts).sum();
    check(&mut c, attempts >= 10_000, format!("{attempts} validated attempts"));
    for r in &on {
        println!(
            "    N={:<2} scr={:.4} k95={:?} liveness={:?}",
            r.n_agents, r.scr, r.k95_empirical, r.liveness_within_k
        );
        check(
            &mut c,
            r.type1_corruptions == 0,
            format!("N={} corruptions {}", r.n_agents, r.type1_corruptions),
        );
        check(
            &mut c,
            r.failures().is_empty(),
            format!("N={} invariants {:?}", r.n_agents, r.failures()),
        );
    }
    let trend = sweep_failures(&on);
    check(&mut c, trend.is_empty(), format!("scr non-decreasing in N {trend:?}"));
    let off = run_contention_sweep(&backend, &ExperimentConfig::contention(4, 60, Mode::OriOff)).unwrap();
    check(
        &mut c,
        off.type1_corruptions > 0,
        format!(
            "unvalidated N=4: {} of {} corrupted",
            off.type1_corruptions, off.commit_attempts
        ),
    );
    within(&mut c, started, Duration::from_secs(300));
    c
}

fn c4_ori_isolation() -> Checks {
    let mut c = Checks::new();
    let backend = InProcess::new();
    for seed in [0x5eed, 1, 2] {
        let on = run_ori_isolation(
            &backend,
            &ExperimentConfig::ori_isolation(Mode::OriOn)
                .with_trials(100)
                .with_seed(seed),
        )
        .unwrap();
        let off = run_ori_isolation(
            &backend,
            &ExperimentConfig::ori_isolation(Mode::OriOff)
                .with_trials(100)
                .with_seed(seed),
        )
        .unwrap();
        check(
            &mut c,
            on.contributions_preserved == 40 * 100
                && on.contributions_intended == 40 * 100
                && on.distinct_trial_outcomes == 1,
            format!(
                "seed {seed}: validated {}/{} over 100 trials",
                on.contributions_preserved, on.contributions_intended
            ),
        );
        check(
            &mut c,
            off.contributions_preserved == 10 * 100 && off.distinct_trial_outcomes == 1,
            format!(
                "seed {seed}: lww {}/{} over 100 trials",
                off.contributions_preserved, off.contributions_intended
            ),
        );
    }
    c
}

fn c5_dose_response() -> Checks {
    let mut c = Checks::new();
    let started = Instant::now();
    let backend = InProcess::new();
    for (k, published) in [(0, 100.0), (1, 81.2), (2, 62.5), (3, 43.8)] {
        let r = run_dose_response(&backend, &ExperimentConfig::dose_response(k)).unwrap();
        let pct = r.commit_rate * 100.0;
        check(
            &mut c,
            (pct - published).abs() < 0.5,
            format!("k={k}: {pct:.2}% vs {published}%"),
        );
        check(
            &mut c,
            r.failures().is_empty(),
            format!("k={k}: invariants {:?}", r.failures()),
        );
    }
    within(&mut c, started, Duration::from_secs(60));
    c
}

fn c6_divergence() -> Checks {
    let mut c = Checks::new();
    let backend = InProcess::new();
    let on = run_divergence_counters(&backend, &ExperimentConfig::divergence(Mode::OriOn)).unwrap();
    let off = run_divergence_counters(&backend, &ExperimentConfig::divergence(Mode::OriOff)).unwrap();
    check(
        &mut c,
        on.counter_divergent_accepted == 0 && on.type1_corruptions == 0,
        format!("validated: {} divergent accepted", on.counter_divergent_accepted),
    );
    check(
        &mut c,
        off.view_divergent == off.engineered_stale && off.engineered_stale == 8,
        format!(
            "lww: {}/{} divergent, engineered {}",
            off.view_divergent, off.view_checked, off.engineered_stale
        ),
    );
    c
}

fn c7_exhaustive() -> Checks {
    let mut c = Checks::new();
    let started = Instant::now();
    for steps in 1..=3 {
        for topology in [Topology::Shared, Topology::Dedicated] {
            let r = enumerate_schedules(&ExploreConfig::new(2, 2, steps, Mode::OriOn, topology)).unwrap();
            check(
                &mut c,
                r.total_violations() == 0 && r.count(ViolationKind::SrcPresent) == 0 && r.invariant_failures == 0,
                format!(
                    "validated {topology:?} steps={steps}: {} schedules, {} violations",
                    r.schedules,
                    r.total_violations()
                ),
            );
        }
        let off = enumerate_schedules(&ExploreConfig::new(2, 2, steps, Mode::OriOff, Topology::Shared)).unwrap();
        check(
            &mut c,
            off.total_violations() >= 1,
            format!("lww shared steps={steps}: {} violations", off.total_violations()),
        );
    }
    within(&mut c, started, Duration::from_secs(300));
    c
}

fn c8_statistics() -> Checks {
    let mut c = Checks::new();
    let (lo, hi) = wilson_ci(30, 30).unwrap();
    check(
        &mut c,
        (lo - 0.886).abs() <= 0.001 && (hi - 1.0).abs() <= 0.001,
        format!("wilson_ci(30,30) = ({lo:.4}, {hi:.4})"),
    );
    let r3 = rule_of_three(200_880).unwrap();
    check(
        &mut c,
        (r3 - 1.49e-5).abs() <= 0.01e-5,
        format!("rule_of_three(200880) = {r3:.3e}"),
    );
    let k = required_retry_budget(0.856, 0.95).unwrap();
    check(
        &mut c,
        k == 19,
        format!("required_retry_budget(0.856, 0.95) = {k}, want 19"),
    );
    c
}

fn spawn_server(wal: &std::path::Path) -> (std::process::Child, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_ori-bench"))
        .args(["serve", "--port", "0", "--wal-path"])
        .arg(wal)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .expect("spawn server");
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .expect("listening line")
        .to_owned();
    (child, format!("http://{addr}"))
}

fn c9_durability() -> Checks {
    let mut c = Checks::new();
    let dir = tempfile::tempdir().unwrap();
    let wal = dir.path().join("registry.wal");
    let (mut child, url) = spawn_server(&wal);
    let http = Arc::new(Http::new(url));
    const WRITERS: usize = 4;
    for i in 0..WRITERS {
        http.create_shard(&format!("k{i}"), "").unwrap();
    }
    let acked: Arc<Vec<AtomicU64>> = Arc::new((0..WRITERS).map(|_| AtomicU64::new(1)).collect());
    let total = Arc::new(AtomicU64::new(0));
    let halt = Arc::new(AtomicBool::new(false));
    let writers: Vec<_> = (0..WRITERS)
        .map(|i| {
            let (http, acked, total, halt) = (http.clone(), acked.clone(), total.clone(), halt.clone());
            thread::spawn(move || {
                let (key, agent) = (format!("k{i}"), format!("w{i}"));
                while !halt.load(Ordering::SeqCst) {
                    let Ok(r) = http.read(&key, &agent) else { break };
                    match http.commit(&CommitRequest::new(
                        key.clone(),
                        r.version,
                        format!("{agent}@{}", r.version),
                        agent.clone(),
                    )) {
                        Ok(Verdict::Committed(v)) => {
                            acked[i].store(v, Ordering::SeqCst);
                            total.fetch_add(1, Ordering::SeqCst);
                        }
                        Ok(other) => panic!("dedicated writer rejected: {other:?}"),
                        Err(_) => break,
                    }
                }
            })
        })
        .collect();
    while total.load(Ordering::SeqCst) < 150 {
        thread::sleep(Duration::from_millis(2));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    halt.store(true, Ordering::SeqCst);
    for w in writers {
        w.join().unwrap();
    }
    let acknowledged = total.load(Ordering::SeqCst);
    check(
        &mut c,
        acknowledged >= 100,
        format!("{acknowledged} commits acknowledged before the kill"),
    );

    let scan = read_wal(&wal).unwrap();
    let image = replay_wal(&scan.records).unwrap();
    for i in 0..WRITERS {
        let key = format!("k{i}");
        let a = acked[i].load(Ordering::SeqCst);
        let replayed = image.shards.get(&key).map_or(0, |s| s.version);
        check(
            &mut c,
            replayed == a || replayed == a + 1,
            format!("{key}: replayed v{replayed}, last acknowledged v{a}"),
        );
    }
    c
}

fn c10_a1_over_wire() -> Checks {
    let mut c = Checks::new();
    let server = http_server();
    let http = Arc::new(Http::new(server.url()));
    const KEYS: usize = 4;
    const CLIENTS: usize = 25;
    const PAIRS: usize = 40;
    for k in 0..KEYS {
        http.create_shard(&format!("s{k}"), "").unwrap();
    }
    let clients: Vec<_> = (0..CLIENTS)
        .map(|i| {
            let http = http.clone();
            thread::spawn(move || {
                let agent = format!("c{i}");
                let mut seen = Vec::with_capacity(PAIRS);
                for p in 0..PAIRS {
                    let key = format!("s{}", (i + p) % KEYS);
                    let r = http.read(&key, &agent).unwrap();
                    seen.push((key.clone(), r.version));
                    http.commit(&CommitRequest::new(
                        key,
                        r.version,
                        format!("{agent}.{p}"),
                        agent.clone(),
                    ))
                    .unwrap();
                }
                (agent, seen)
            })
        })
        .collect();
    let observed: Vec<(String, Vec<(String, u64)>)> = clients.into_iter().map(|h| h.join().unwrap()).collect();
    let sessions = http.sessions().unwrap();
    let mut pairs = 0;
    let mut mismatches = 0;
    for (agent, seen) in &observed {
        let logged: Vec<(String, u64)> = sessions
            .iter()
            .find(|s| &s.agent == agent)
            .map(|s| s.entries.iter().map(|e| (e.key.clone(), e.version)).collect())
            .unwrap_or_default();
        pairs += seen.len();
        mismatches += seen.iter().zip(&logged).filter(|(a, b)| a != b).count() + seen.len().abs_diff(logged.len());
    }
    check(&mut c, pairs == 1_000, format!("{pairs} GET/commit pairs"));
    check(
        &mut c,
        mismatches == 0,
        format!("{mismatches} GET responses disagree with the session log"),
    );
    c
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "stale-injection parity", c1_stale_injection),
        (2, "injection sweep safety", c2_injection_sweep),
        (3, "contention sweep", c3_contention_sweep),
        (4, "isolation determinism", c4_ori_isolation),
        (5, "dose-response", c5_dose_response),
        (6, "divergence counters", c6_divergence),
        (7, "exhaustive oracle", c7_exhaustive),
        (8, "statistics", c8_statistics),
        (9, "durability", c9_durability),
        (10, "read logging over the wire", c10_a1_over_wire),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        let label = format!("criterion {id:>2} {name}");
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let checks = run();
        let ok = checks.iter().all(|(_, ok)| *ok);
        failed += usize::from(!ok);
        println!("{} {label}", if ok { "PASS" } else { "FAIL" });
        for (what, ok) in checks {
            println!("    [{}] {what}", if ok { "ok" } else { "x " });
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
