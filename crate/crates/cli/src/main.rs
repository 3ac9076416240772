//! `cirl`: validate and compile domains, solve, simulate, benchmark, play, serve.

mod play;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use cirl_core::archive::SolutionArchive;
use cirl_core::benchmark::{benchmark_models, run_benchmark, MonteCarloConfig};
use cirl_core::config::{grid_for, parse_domain, provenance_hash, LoadedDomain, Mode, RunConfig};
use cirl_core::error::CirlError;
use cirl_core::evaluator::{draw_objective, expected_value_exact, run_episode, Condition, HumanDriver, Solutions};
use cirl_core::game::{Actor, GameSpec};
use cirl_core::scenario::find_scenario;
use cirl_core::solver::{literal_robot_policy, solve_cirl, FullInfoSet, SolveReport, SolverSettings, WarmStart};
use cirl_core::RationalityModel;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

const OUT_DIR_ENV: &str = "CIRL_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "cirl-out";
const DEFAULT_BETA: f64 = 5.0;

#[derive(Debug, Parser)]
#[command(name = "cirl", version, about = "Pragmatic-pedagogic CIRL solver and benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a domain file and list any violations.
    Validate { domain: String },
    /// Compile a domain file to the flat game format.
    Compile {
        domain: String,
        /// Write here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Solve a domain and write `solution.bin` and `solve_report.json`.
    Solve(SolveArgs),
    /// Roll out episodes from a solution archive into `trace.jsonl`.
    Simulate(SimulateArgs),
    /// Compare CIRL and IRL across rationality models.
    Benchmark(BenchmarkArgs),
    /// Play the human's side in the terminal.
    Play(PlayArgs),
    /// Run the HTTP play service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
        /// Append-only session journal, replayed on startup.
        #[arg(long)]
        journal: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Boltzmann rationality coefficient.
    #[arg(long, conflicts_with = "rational")]
    beta: Option<f64>,
    /// Perfectly rational human.
    #[arg(long)]
    rational: bool,
}

impl ModelArgs {
    fn model(&self) -> Option<RationalityModel> {
        match (self.beta, self.rational) {
            (_, true) => Some(RationalityModel::rational()),
            (Some(beta), false) => Some(RationalityModel::boltzmann(beta)),
            (None, false) => None,
        }
    }
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    damping: Option<f64>,
    /// previous-turn, reward, uninformed, expert or best.
    #[arg(long)]
    warm_start: Option<String>,
}

impl SolverArgs {
    fn apply(&self, mut s: SolverSettings) -> Result<SolverSettings> {
        if let Some(tol) = self.tol {
            s.tol = tol;
        }
        if let Some(max_iter) = self.max_iter {
            s.max_iter = max_iter;
        }
        if let Some(damping) = self.damping {
            s.damping = damping;
        }
        if let Some(w) = &self.warm_start {
            s.warm_start = serde_json::from_value::<WarmStart>(serde_json::Value::String(w.clone()))
                .map_err(|_| CirlError::Usage(format!("unknown warm start {w:?}")))?;
        }
        Ok(s)
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Run config (JSON). Flags given alongside it override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Domain file, or the id of a built-in scenario.
    #[arg(long, required_unless_present = "config")]
    domain: Option<String>,
    #[arg(long)]
    mode: Option<Mode>,
    #[command(flatten)]
    model: ModelArgs,
    /// Belief grid resolution.
    #[arg(long)]
    grid: Option<u32>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    discount: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Solution archive written by `solve`.
    archive: PathBuf,
    /// Objective name; drawn from the prior when absent.
    #[arg(long)]
    true_recipe: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated human actions for the first turns.
    #[arg(long)]
    script: Option<String>,
    /// Episode `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 1)]
    episodes: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Domain file, or the id of a built-in scenario.
    #[arg(long, default_value = "chefworld-4")]
    domain: String,
    /// Boltzmann columns; repeatable. Defaults to 1, 2.5 and 5 plus the rational column.
    #[arg(long = "beta")]
    betas: Vec<f64>,
    /// Add the rational column.
    #[arg(long)]
    rational: bool,
    #[arg(long)]
    grid: Option<u32>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    discount: Option<f64>,
    /// Monte Carlo episodes per cell, alongside the exact values. 0 skips.
    #[arg(long, default_value_t = 0)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exit non-zero unless the CIRL-over-IRL ordering and margins hold.
    #[arg(long)]
    assert_paper_ordering: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct PlayArgs {
    /// Play against a solved archive instead of solving on the fly.
    #[arg(long, conflicts_with = "domain")]
    archive: Option<PathBuf>,
    /// Domain file, or the id of a built-in scenario.
    #[arg(long, default_value = "chefworld-2")]
    domain: String,
    #[arg(long, default_value = "cirl")]
    mode: Mode,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    grid: Option<u32>,
    /// Objective the human pursues; drawn from the prior when absent.
    #[arg(long)]
    true_recipe: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for input the user can fix, 1 for everything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<CirlError>() {
        Some(
            CirlError::Usage(_)
            | CirlError::InvalidGame(_)
            | CirlError::Build(_)
            | CirlError::Parse(_)
            | CirlError::Archive(_),
        ) => 2,
        Some(CirlError::Io(io)) if io.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Validate { domain } => validate(&domain),
        Command::Compile { domain, output } => compile(&domain, output),
        Command::Solve(args) => solve(args),
        Command::Simulate(args) => simulate(args),
        Command::Benchmark(args) => benchmark(args),
        Command::Play(args) => play::play(args),
        Command::Serve { addr, journal } => {
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("serving on http://{addr}");
            rt.block_on(cirl_service::serve(addr, journal)).map_err(|e| anyhow::anyhow!("{e}"))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Reads a domain file, or serializes a built-in scenario's domain when no
/// such file exists.
fn domain_bytes(domain: &str) -> Result<Vec<u8>, CirlError> {
    let path = Path::new(domain);
    if path.exists() {
        return Ok(std::fs::read(path)?);
    }
    match find_scenario(domain) {
        Some(s) => Ok(s.domain.to_json().into_bytes()),
        None => Err(CirlError::Usage(format!("{domain}: no such file or built-in scenario"))),
    }
}

fn load(domain: &str, horizon: Option<usize>, discount: Option<f64>) -> Result<(LoadedDomain, Vec<u8>), CirlError> {
    let bytes = domain_bytes(domain)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CirlError::Parse(format!("{domain}: {e}")))?;
    Ok((parse_domain(text, horizon, discount)?, bytes))
}

fn validate(domain: &str) -> Result<ExitCode> {
    match load(domain, None, None) {
        Ok((loaded, _)) => {
            let spec = loaded.spec();
            println!(
                "ok: {} states, {} human actions, {} robot actions, {} objectives, horizon {}",
                spec.num_states(),
                spec.num_human_actions(),
                spec.num_robot_actions(),
                spec.num_objectives(),
                spec.horizon
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(CirlError::InvalidGame(violations)) => {
            for v in &violations {
                println!("violation: {v}");
            }
            Err(CirlError::InvalidGame(violations).into())
        }
        Err(e) => Err(e.into()),
    }
}

fn compile(domain: &str, output: Option<PathBuf>) -> Result<ExitCode> {
    let (loaded, _) = load(domain, None, None)?;
    let json = serde_json::to_string_pretty(loaded.spec())? + "\n";
    match output {
        Some(path) => std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(json.as_bytes())?,
    }
    Ok(ExitCode::SUCCESS)
}

/// `CIRL_OUT_DIR`, then the flag, then the config, then `cirl-out`.
fn output_dir(flag: Option<PathBuf>, config: Option<&Path>) -> Result<PathBuf> {
    let dir = std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or(flag)
        .or_else(|| config.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_artifact(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn run_config(args: &SolveArgs) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CirlError::Usage(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig {
            domain: PathBuf::new(),
            mode: Mode::Cirl,
            model: RationalityModel::boltzmann(DEFAULT_BETA),
            grid_resolution: None,
            horizon: None,
            discount: None,
            seed: 0,
            output_dir: None,
            solver: SolverSettings::default(),
        },
    };
    if let Some(d) = &args.domain {
        config.domain = d.into();
    }
    if let Some(mode) = args.mode {
        config.mode = mode;
    }
    if let Some(model) = args.model.model() {
        config.model = model;
    }
    config.grid_resolution = args.grid.or(config.grid_resolution);
    config.horizon = args.horizon.or(config.horizon);
    config.discount = args.discount.or(config.discount);
    config.seed = args.seed.unwrap_or(config.seed);
    config.solver = args.solver.apply(config.solver)?;
    Ok(config)
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    config_hash: &'a str,
    config: serde_json::Value,
    scenario: &'a str,
    mode: Mode,
    model: RationalityModel,
    grid_resolution: u32,
    horizon: usize,
    discount: f64,
    /// Prior-weighted expected value of the solved condition, when the
    /// dynamics allow exact evaluation.
    expected_value: Option<f64>,
    per_objective: Option<Vec<f64>>,
    solver: Option<&'a SolveReport>,
}

fn solve(args: SolveArgs) -> Result<ExitCode> {
    let config = run_config(&args)?;
    let domain = config.domain.to_string_lossy().into_owned();
    let (loaded, bytes) = load(&domain, config.horizon, config.discount)?;
    let spec = loaded.into_spec();
    config.model.validate(spec.num_human_actions())?;
    config.solver.validate()?;
    let grid = grid_for(&spec, config.grid_resolution)?;
    let hash = config.hash(&bytes);
    let out = output_dir(args.out.clone(), config.output_dir.as_deref())?;

    let started = Instant::now();
    let (solutions, report) = match config.mode {
        Mode::Cirl => {
            let (q, report) = solve_cirl(&spec, &grid, config.model, config.solver)?;
            (Solutions { grid: grid.clone(), cirl: Some(q), literal: None }, Some(report))
        }
        Mode::Irl => {
            let full = FullInfoSet::solve(&spec, config.model)?;
            let literal = literal_robot_policy(&spec, &grid, &full, config.model)?;
            (Solutions { grid: grid.clone(), cirl: None, literal: Some(literal) }, None)
        }
    };
    eprintln!("solved in {:.2}s", started.elapsed().as_secs_f64());
    if let Some(r) = &report {
        if !r.converged() {
            eprintln!(
                "warning: {} cells did not converge (max residual {:.3e})",
                r.non_converged_total,
                r.max_residual()
            );
        }
    }

    let condition = condition_for(config.mode, config.model, &spec);
    let exact = match expected_value_exact(&condition, &solutions, &spec) {
        Ok(v) => Some(v),
        Err(CirlError::StochasticTransition) => None,
        Err(e) => return Err(e.into()),
    };
    let archive = SolutionArchive {
        config_hash: hash.clone(),
        config_json: config.to_json(),
        spec: spec.clone(),
        model: config.model,
        mode: config.mode,
        solutions,
        report: report.clone(),
    };
    let summary = SolveSummary {
        config_hash: &hash,
        config: serde_json::from_str(&config.to_json())?,
        scenario: &spec.name,
        mode: config.mode,
        model: config.model,
        grid_resolution: grid.resolution(),
        horizon: spec.horizon,
        discount: spec.discount,
        expected_value: exact.as_ref().map(|v| v.total),
        per_objective: exact.map(|v| v.per_objective),
        solver: report.as_ref(),
    };
    let archive_path = write_artifact(&out, "solution.bin", &archive.to_bytes()?)?;
    let report_path =
        write_artifact(&out, "solve_report.json", (serde_json::to_string_pretty(&summary)? + "\n").as_bytes())?;
    if let Some(v) = summary.expected_value {
        println!("{} {} {}: expected value {v:.4}", spec.name, mode_label(config.mode), config.model.label());
    }
    println!("wrote {} and {}", archive_path.display(), report_path.display());
    Ok(ExitCode::SUCCESS)
}

fn mode_label(mode: Mode) -> &'static str {
    match mode {
        Mode::Cirl => "cirl",
        Mode::Irl => "irl",
    }
}

fn condition_for(mode: Mode, model: RationalityModel, spec: &GameSpec) -> Condition {
    match mode {
        Mode::Cirl => Condition::cirl(model, &spec.name),
        Mode::Irl => Condition::irl(model, &spec.name),
    }
}

fn objective(spec: &GameSpec, name: Option<&str>, seed: u64) -> Result<usize, CirlError> {
    match name {
        Some(n) if !n.eq_ignore_ascii_case("random") => spec.objective_index(n).ok_or_else(|| {
            CirlError::Usage(format!("unknown objective {n:?}; expected one of {}", spec.objectives.join(", ")))
        }),
        _ => Ok(draw_objective(spec, seed)),
    }
}

fn parse_script(spec: &GameSpec, script: &str) -> Result<Vec<usize>, CirlError> {
    script
        .split(',')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(|a| {
            spec.action_index(Actor::Human, a).ok_or_else(|| CirlError::Usage(format!("unknown human action {a:?}")))
        })
        .collect()
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let archive = SolutionArchive::read(&args.archive)?;
    let spec = &archive.spec;
    let condition = condition_for(archive.mode, archive.model, spec);
    let driver = match &args.script {
        Some(s) => HumanDriver::Scripted(parse_script(spec, s)?),
        None => HumanDriver::Sampled,
    };
    if args.episodes == 0 {
        bail!(CirlError::Usage("--episodes must be at least 1".into()));
    }
    let out = output_dir(args.out, None)?;
    let mut jsonl = String::new();
    let mut successes = 0;
    for i in 0..args.episodes {
        let seed = args.seed.wrapping_add(i);
        let theta = objective(spec, args.true_recipe.as_deref(), seed)?;
        let trace = run_episode(&condition, &archive.solutions, spec, theta, seed, &driver)?;
        successes += usize::from(trace.success);
        if args.episodes == 1 {
            for r in &trace.turns {
                println!(
                    "t={} {} | robot: {} | human: {} | belief {}",
                    r.t,
                    spec.states[r.state],
                    spec.robot_actions[r.robot_action],
                    spec.human_actions[r.human_action],
                    play::format_belief(spec, &r.next_belief)
                );
            }
        }
        println!(
            "episode {i} seed {seed} true {}: {} (return {:.4})",
            spec.objectives[theta],
            if trace.success { "success" } else { "failure" },
            trace.total_reward
        );
        jsonl.push_str(&trace.to_jsonl(spec, &archive.config_hash));
    }
    let path = write_artifact(&out, "trace.jsonl", jsonl.as_bytes())?;
    println!("{successes}/{} succeeded; wrote {}", args.episodes, path.display());
    Ok(ExitCode::SUCCESS)
}

/// The benchmark's provenance echo.
#[derive(Serialize)]
struct BenchmarkConfig<'a> {
    domain: &'a str,
    models: &'a [RationalityModel],
    grid_resolution: Option<u32>,
    horizon: Option<usize>,
    discount: Option<f64>,
    episodes: usize,
    seed: u64,
    solver: SolverSettings,
}

fn benchmark(args: BenchmarkArgs) -> Result<ExitCode> {
    let mut models: Vec<RationalityModel> = args.betas.iter().map(|&b| RationalityModel::boltzmann(b)).collect();
    if args.rational {
        models.push(RationalityModel::rational());
    }
    if models.is_empty() {
        models = benchmark_models();
    }
    let settings = args.solver.apply(SolverSettings::default())?;
    settings.validate()?;
    let (loaded, bytes) = load(&args.domain, args.horizon, args.discount)?;
    let spec = loaded.into_spec();
    for m in &models {
        m.validate(spec.num_human_actions())?;
    }
    let grid = grid_for(&spec, args.grid)?;
    let echo = BenchmarkConfig {
        domain: &args.domain,
        models: &models,
        grid_resolution: args.grid,
        horizon: args.horizon,
        discount: args.discount,
        episodes: args.episodes,
        seed: args.seed,
        solver: settings,
    };
    let hash = provenance_hash(&serde_json::to_string(&echo)?, &bytes);
    let mc = (args.episodes > 0).then_some(MonteCarloConfig { episodes: args.episodes, seed: args.seed });
    let out = output_dir(args.out, None)?;

    let started = Instant::now();
    let report = run_benchmark(&spec, &grid, &models, settings, mc, &hash)?;
    for c in &report.columns {
        eprintln!("{}: solved in {:.2}s", c.label, c.solve_secs);
    }
    eprintln!("benchmark took {:.2}s", started.elapsed().as_secs_f64());

    let table = report.to_table();
    print!("{table}");
    write_artifact(&out, "benchmark.txt", table.as_bytes())?;
    write_artifact(&out, "benchmark.json", (report.to_json() + "\n").as_bytes())?;
    if args.assert_paper_ordering {
        let failures = report.ordering_failures();
        if !failures.is_empty() {
            for f in &failures {
                println!("ordering check failed: {f}");
            }
            return Ok(ExitCode::from(1));
        }
        println!("ordering check passed");
    }
    Ok(ExitCode::SUCCESS)
}

/// Shared by `play`: solves a domain for one condition in memory.
fn solve_in_memory(
    spec: &GameSpec,
    grid_resolution: Option<u32>,
    mode: Mode,
    model: RationalityModel,
) -> Result<Solutions> {
    let grid = grid_for(spec, grid_resolution)?;
    let started = Instant::now();
    let solutions = match mode {
        Mode::Cirl => {
            let (q, _) = solve_cirl(spec, &grid, model, SolverSettings::default())?;
            Solutions { grid, cirl: Some(q), literal: None }
        }
        Mode::Irl => {
            let full = FullInfoSet::solve(spec, model)?;
            let literal = literal_robot_policy(spec, &grid, &full, model)?;
            Solutions { grid, cirl: None, literal: Some(literal) }
        }
    };
    eprintln!("solved in {:.2}s", started.elapsed().as_secs_f64());
    Ok(solutions)
}
