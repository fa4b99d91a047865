use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ori_bench::{run, sweep_failures, table, Backend, ExperimentConfig, ExperimentReport, Http, InProcess, Result};
use ori_core::{enumerate_schedules, required_retry_budget, ExploreConfig, Mode, Topology};
use ori_server::{ServerConfig, ServerHandle};

#[derive(Parser)]
#[command(name = "ori-bench", about = "Synthetic-agent experiments against the shard registry")]
struct Cli {
    /// Drive a live server instead of an in-process registry. The server must
    /// record history.
    #[arg(long, global = true, env = "ORI_BENCH_SERVER")]
    server: Option<String>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Jsonl,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    On,
    Off,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<Mode> {
        match self {
            ModeArg::On => vec![Mode::OriOn],
            ModeArg::Off => vec![Mode::OriOff],
            ModeArg::Both => vec![Mode::OriOn, Mode::OriOff],
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyArg {
    Shared,
    Dedicated,
}

impl From<TopologyArg> for Topology {
    fn from(t: TopologyArg) -> Self {
        match t {
            TopologyArg::Shared => Topology::Shared,
            TopologyArg::Dedicated => Topology::Dedicated,
        }
    }
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Attempts per contribution; 0 is unbounded.
    #[arg(long, default_value_t = 0)]
    retry_budget: u32,
}

impl Common {
    fn apply(&self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        cfg.seed = self.seed;
        cfg.trials = self.trials;
        cfg.retry_budget = self.retry_budget;
        cfg
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP server in the foreground.
    Serve(#[command(flatten)] ServerConfig),
    StaleInjection {
        #[arg(long, default_value_t = 200)]
        stale: u64,
        #[arg(long, default_value_t = 200)]
        fresh: u64,
        #[arg(long, value_enum, default_value_t = ModeArg::On)]
        mode: ModeArg,
        #[command(flatten)]
        common: Common,
    },
    ContentionSweep {
        #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 16])]
        agents: Vec<usize>,
        /// Commits owed by each agent.
        #[arg(long, default_value_t = 60)]
        epochs: usize,
        #[arg(long, value_enum, default_value_t = TopologyArg::Shared)]
        topology: TopologyArg,
        #[arg(long, value_enum, default_value_t = ModeArg::On)]
        mode: ModeArg,
        #[command(flatten)]
        common: Common,
    },
    OriIsolation {
        #[arg(long, default_value_t = 4)]
        agents: usize,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
        #[command(flatten)]
        common: Common,
    },
    DoseResponse {
        #[arg(long, value_delimiter = ',', default_values_t = [0, 1, 2, 3])]
        k: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        agents: usize,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[command(flatten)]
        common: Common,
    },
    DivergenceCounters {
        #[arg(long, default_value_t = 4)]
        agents: usize,
        #[arg(long, default_value_t = 4)]
        steps: usize,
        /// Agents per step whose commit lands after a sibling moved.
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
        #[command(flatten)]
        common: Common,
    },
    /// Run every interleaving of small agent scripts on the in-process registry.
    Enumerate {
        #[arg(long, default_value_t = 2)]
        agents: usize,
        #[arg(long, default_value_t = 2)]
        shards: usize,
        #[arg(long, default_value_t = 1)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = TopologyArg::Shared)]
        topology: TopologyArg,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
    },
    #[command(subcommand)]
    Stats(StatsCommand),
}

#[derive(Subcommand)]
enum StatsCommand {
    Wilson { successes: u64, n: u64 },
    RuleOfThree { n: u64 },
    RetryBudget { scr: f64, target: f64 },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in failures {
                eprintln!("FAIL {f}");
            }
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn backend(cli: &Cli) -> Box<dyn Backend> {
    match &cli.server {
        Some(url) => Box::new(Http::new(url.clone())),
        None => Box::new(InProcess::new()),
    }
}

fn emit(cli: &Cli, reports: &[ExperimentReport]) {
    match cli.format {
        Format::Table => print!("{}", table(reports)),
        Format::Jsonl => {
            for r in reports {
                println!("{}", r.to_json_line());
            }
        }
    }
}

fn run_all(cli: &Cli, configs: Vec<ExperimentConfig>) -> Result<Vec<String>> {
    let backend = backend(cli);
    let mut reports = Vec::with_capacity(configs.len());
    for cfg in &configs {
        reports.push(run(backend.as_ref(), cfg)?);
    }
    emit(cli, &reports);
    Ok(reports.iter().flat_map(ExperimentReport::failures).collect())
}

fn dispatch(cli: &Cli) -> Result<Vec<String>> {
    match &cli.command {
        Command::Serve(config) => {
            let handle = ServerHandle::start(config)?;
            println!("listening on {}", handle.addr());
            loop {
                std::thread::park();
            }
        }
        Command::StaleInjection {
            stale,
            fresh,
            mode,
            common,
        } => {
            let configs = mode
                .modes()
                .into_iter()
                .map(|m| common.apply(ExperimentConfig::stale_injection(*stale, *fresh).with_mode(m)))
                .collect();
            run_all(cli, configs)
        }
        Command::ContentionSweep {
            agents,
            epochs,
            topology,
            mode,
            common,
        } => {
            let backend = backend(cli);
            let mut reports = Vec::new();
            let mut failures = Vec::new();
            for m in mode.modes() {
                let mut base = common.apply(ExperimentConfig::contention(1, *epochs, m));
                base.topology = (*topology).into();
                let sweep = ori_bench::run_sweep(backend.as_ref(), &base, agents)?;
                failures.extend(sweep_failures(&sweep));
                reports.extend(sweep);
            }
            emit(cli, &reports);
            failures.extend(reports.iter().flat_map(ExperimentReport::failures));
            Ok(failures)
        }
        Command::OriIsolation {
            agents,
            steps,
            mode,
            common,
        } => {
            let configs = mode
                .modes()
                .into_iter()
                .map(|m| {
                    let mut cfg = common.apply(ExperimentConfig::ori_isolation(m));
                    cfg.n_agents = *agents;
                    cfg.steps = *steps;
                    cfg
                })
                .collect();
            run_all(cli, configs)
        }
        Command::DoseResponse {
            k,
            agents,
            steps,
            common,
        } => {
            let configs = k
                .iter()
                .map(|&k| {
                    let mut cfg = common.apply(ExperimentConfig::dose_response(k));
                    cfg.n_agents = *agents;
                    cfg.steps = *steps;
                    cfg
                })
                .collect();
            run_all(cli, configs)
        }
        Command::DivergenceCounters {
            agents,
            steps,
            k,
            mode,
            common,
        } => {
            let configs = mode
                .modes()
                .into_iter()
                .map(|m| {
                    let mut cfg = common.apply(ExperimentConfig::divergence(m));
                    cfg.n_agents = *agents;
                    cfg.steps = *steps;
                    cfg.stale_agents_k = *k;
                    cfg
                })
                .collect();
            run_all(cli, configs)
        }
        Command::Enumerate {
            agents,
            shards,
            steps,
            topology,
            mode,
        } => {
            let mut failures = Vec::new();
            for m in mode.modes() {
                let cfg = ExploreConfig::new(*agents, *shards, *steps, m, (*topology).into());
                let report = enumerate_schedules(&cfg)?;
                println!("{}", serde_json::json!({ "config": cfg, "report": report }));
                if report.invariant_failures > 0 {
                    failures.push(format!(
                        "enumerate: {} schedules broke a read invariant",
                        report.invariant_failures
                    ));
                }
                if m == Mode::OriOn && report.total_violations() > 0 {
                    failures.push(format!(
                        "enumerate: {} violations under validation",
                        report.total_violations()
                    ));
                }
            }
            Ok(failures)
        }
        Command::Stats(s) => {
            match s {
                StatsCommand::Wilson { successes, n } => {
                    let (lo, hi) = ori_bench::wilson_ci(*successes, *n)?;
                    println!("{lo:.6} {hi:.6}");
                }
                StatsCommand::RuleOfThree { n } => println!("{:.6e}", ori_bench::rule_of_three(*n)?),
                StatsCommand::RetryBudget { scr, target } => println!("{}", required_retry_budget(*scr, *target)?),
            }
            Ok(Vec::new())
        }
    }
}
