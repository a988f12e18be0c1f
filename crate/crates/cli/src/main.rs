//! `mobias`: run scripted scenarios headless, list and validate them, or
//! serve live sessions.
//!
//! Exit status: 0 on success, 1 for invalid input (bad flags, unknown
//! scenario or parameter, malformed script), 2 when a run or the server fails.

use std::fmt;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mobias_core::params::ParamKind;
use mobias_core::scenario::{self, CompiledScript, Format, ScenarioError};
use mobias_core::{metric_names, parameter_specs, ModelKind, ParamSet};
use mobias_session::{port_from_env, Server, ServerConfig};

#[derive(Debug, Parser)]
#[command(name = "mobias", version, about = "Agent-based simulators of cognitive biases in mobility choices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a built-in scenario or a scenario file and write its artifacts.
    Run(RunArgs),
    /// List the built-in scenarios, or one model's parameters or metrics.
    List {
        /// Show the parameter paths of this model instead.
        #[arg(long, value_name = "MODEL", conflicts_with = "metrics")]
        params: Option<ModelKind>,
        /// Show this model's metric names, in column order.
        #[arg(long, value_name = "MODEL")]
        metrics: Option<ModelKind>,
    },
    /// Check scenario files (or built-in names) without running them.
    Validate {
        #[arg(required = true, value_name = "SCENARIO")]
        scenarios: Vec<String>,
    },
    /// Start the live session service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Built-in scenario name or path to a scenario file.
    scenario: String,
    /// Base seed; replication k runs with seed + k.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    replications: Option<u32>,
    /// Tick cap, replacing the script's `stop.max_ticks`.
    #[arg(long)]
    max_ticks: Option<u64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Override file: TOML `path = value` pairs, nested tables flattened to dotted paths.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Parameter override, applied after `--config`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    sets: Vec<String>,
    /// Do not print the final-state table.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Defaults to $MOBIAS_PORT, else 8765. Use 0 for any free port.
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Directory of UI assets served at `/`.
    #[arg(long, value_name = "DIR")]
    static_dir: Option<PathBuf>,
    /// Directory for per-session command logs.
    #[arg(long, value_name = "DIR")]
    log_dir: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Invalid(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        if e.is_validation() {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(matches!(cli.command, Command::Serve(_)));
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::List { params, metrics } => {
            match (params, metrics) {
                (Some(model), _) => list_params(model),
                (None, Some(model)) => metric_names(model).iter().for_each(|m| println!("{m}")),
                (None, None) => list_scenarios(),
            }
            Ok(())
        }
        Command::Validate { scenarios } => validate(&scenarios),
        Command::Serve(args) => serve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn init_logging(serving: bool) {
    let default = if serving { "info" } else { "warn" };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

fn overrides(config: Option<&PathBuf>, sets: &[String]) -> Result<ParamSet, Failure> {
    let mut params = match config {
        Some(path) => ParamSet::load(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?,
        None => ParamSet::new(),
    };
    for assignment in sets {
        params.push_assignment(assignment).map_err(|e| Failure::Invalid(format!("--set {assignment}: {e}")))?;
    }
    Ok(params)
}

fn prepare(args: &RunArgs) -> Result<CompiledScript, Failure> {
    let extra = overrides(args.config.as_ref(), &args.sets)?;
    let mut script = scenario::resolve(&args.scenario)?.compile()?.with_overrides(&extra)?;
    if let Some(seed) = args.seed {
        script.base_seed = seed;
    }
    if let Some(n) = args.replications {
        script.replications = n;
    }
    if let Some(t) = args.max_ticks {
        script.max_ticks = t;
    }
    Ok(script)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let script = prepare(&args)?;
    let artifacts = scenario::run_scenario(&script)?;
    let files = scenario::export(&artifacts, &args.out, args.format).map_err(|e| Failure::Runtime(e.to_string()))?;
    if !args.quiet {
        let s = &artifacts.summary;
        println!(
            "{} ({}) replications={} base_seed={} final_ticks={:?}",
            s.scenario, s.model, s.replications, s.base_seed, s.final_ticks
        );
        let width = s.metric_names.iter().map(String::len).max().unwrap_or(0);
        println!("{:width$}  {:>12} {:>12} {:>12}", "metric", "mean", "min", "max");
        for name in &s.metric_names {
            let st = &s.final_state[name];
            println!("{name:width$}  {:>12.6} {:>12.6} {:>12.6}", st.mean, st.min, st.max);
        }
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn list_scenarios() {
    let mut names = scenario::builtin_names();
    names.sort_unstable();
    let width = names.iter().map(|n| n.len()).max().unwrap_or(0);
    for name in names {
        let script = scenario::builtin(name).expect("built-in scenarios parse");
        println!("{name:width$}  {:<9}  {}", script.model.name(), script.description);
    }
}

fn list_params(model: ModelKind) {
    let mut specs = parameter_specs(model);
    specs.sort_by(|a, b| a.path.cmp(&b.path));
    let rows: Vec<(String, String, &str, String)> = specs
        .into_iter()
        .map(|spec| {
            let kind = match spec.kind {
                ParamKind::Real { min, max } => format!("real [{min}, {max}]"),
                ParamKind::Integer { min, max } => format!("integer [{min}, {max}]"),
                ParamKind::Toggle => "toggle".to_string(),
                ParamKind::Action => "action".to_string(),
                ParamKind::Delta { min, max } => format!("delta [{min}, {max}]"),
            };
            (spec.path, kind, if spec.runtime { "runtime" } else { "init" }, spec.label)
        })
        .collect();
    let path_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let kind_w = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
    for (path, kind, when, label) in rows {
        println!("{path:path_w$}  {kind:kind_w$}  {when:<7}  {label}");
    }
}

fn validate(scenarios: &[String]) -> Result<(), Failure> {
    let mut failed = 0;
    for name in scenarios {
        match scenario::resolve(name).and_then(|s| s.compile()) {
            Ok(c) => println!(
                "ok  {name}: {} ({}), {} replications, {} timed commands, {} triggers, max_ticks {}",
                c.name,
                c.model,
                c.replications,
                c.timed.len(),
                c.triggers.len(),
                c.max_ticks
            ),
            Err(e) => {
                failed += 1;
                eprintln!("error: {name}: {e}");
            }
        }
    }
    match failed {
        0 => Ok(()),
        n => Err(Failure::Invalid(format!("{n} of {} scenarios invalid", scenarios.len()))),
    }
}

fn serve(args: ServeArgs) -> Result<(), Failure> {
    let port = match args.port {
        Some(p) => p,
        None => port_from_env().map_err(Failure::Invalid)?,
    };
    let config = ServerConfig { addr: SocketAddr::new(args.host, port), static_dir: args.static_dir, log_dir: args.log_dir };
    if let Some(dir) = &config.static_dir {
        if !dir.is_dir() {
            return Err(Failure::Invalid(format!("--static-dir {}: not a directory", dir.display())));
        }
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
    runtime.block_on(async move {
        let addr = config.addr;
        let server = Server::bind(config).await.map_err(|e| Failure::Runtime(format!("cannot listen on {addr}: {e}")))?;
        let local = server.local_addr().map_err(|e| Failure::Runtime(e.to_string()))?;
        println!("listening on http://{local}");
        tracing::info!("websocket endpoint ws://{local}/ws");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        server.run_until(shutdown).await.map_err(|e| Failure::Runtime(e.to_string()))
    })
}
