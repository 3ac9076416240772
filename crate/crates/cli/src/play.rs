//! Terminal play: the user takes the human's side, one line per turn.

use std::io::{BufRead, Write};
use std::process::ExitCode;

use anyhow::Result;
use cirl_core::archive::SolutionArchive;
use cirl_core::config::{grid_for, provenance_hash, Mode};
use cirl_core::evaluator::{sample_initial_state, Episode, EpisodeTrace, Solutions};
use cirl_core::game::{Actor, GameSpec};
use cirl_core::scenario::find_scenario;
use cirl_core::{CirlError, RationalityModel};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{condition_for, load, objective, output_dir, solve_in_memory, write_artifact, PlayArgs, DEFAULT_BETA};

pub fn format_belief(spec: &GameSpec, belief: &[f64]) -> String {
    spec.objectives.iter().zip(belief).map(|(o, p)| format!("{o} {p:.3}")).collect::<Vec<_>>().join("  ")
}

#[derive(Serialize)]
struct PlayConfig<'a> {
    domain: &'a str,
    mode: Mode,
    model: RationalityModel,
    grid_resolution: Option<u32>,
}

pub fn play(args: PlayArgs) -> Result<ExitCode> {
    let (spec, solutions, mode, config_hash) = match &args.archive {
        Some(path) => {
            let archive = SolutionArchive::read(path)?;
            if args.mode != archive.mode {
                return Err(CirlError::Usage(format!(
                    "archive was solved for {:?}; pass --mode to match",
                    archive.mode
                ))
                .into());
            }
            (archive.spec, archive.solutions, archive.mode, archive.config_hash)
        }
        None => {
            let (loaded, bytes) = load(&args.domain, None, None)?;
            let spec = loaded.into_spec();
            let model = args.model.model().unwrap_or_else(|| {
                find_scenario(&args.domain).map_or(RationalityModel::boltzmann(DEFAULT_BETA), |s| s.default_model)
            });
            model.validate(spec.num_human_actions())?;
            grid_for(&spec, args.grid)?;
            let echo = PlayConfig { domain: &args.domain, mode: args.mode, model, grid_resolution: args.grid };
            let hash = provenance_hash(&serde_json::to_string(&echo)?, &bytes);
            let solutions = solve_in_memory(&spec, args.grid, args.mode, model)?;
            (spec, solutions, args.mode, hash)
        }
    };
    let model = solutions
        .cirl
        .as_ref()
        .map(|q| q.model)
        .or(solutions.literal.as_ref().map(|l| l.values.model))
        .ok_or_else(|| CirlError::MissingSolution("archive holds no robot policy".into()))?;
    let theta = objective(&spec, args.true_recipe.as_deref(), args.seed)?;
    let out = output_dir(args.out, None)?;

    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let trace = run_session(&spec, &solutions, mode, model, theta, args.seed, &mut stdin.lock(), &mut stdout.lock())?;
    let path = write_artifact(&out, "play_trace.jsonl", trace.to_jsonl(&spec, &config_hash).as_bytes())?;
    println!("trace saved to {}", path.display());
    Ok(ExitCode::SUCCESS)
}

/// Runs one game against `input`, stopping early at end of input. The
/// returned trace covers the turns actually played.
#[allow(clippy::too_many_arguments)]
fn run_session<R: BufRead, W: Write>(
    spec: &GameSpec,
    solutions: &Solutions,
    mode: Mode,
    model: RationalityModel,
    theta: usize,
    seed: u64,
    input: &mut R,
    out: &mut W,
) -> Result<EpisodeTrace> {
    let condition = condition_for(mode, model, spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s0 = sample_initial_state(spec, theta, &mut rng)?;
    let mut ep = Episode::from_prior(spec, solutions, condition.clone(), s0)?;
    let initial_belief = ep.belief.clone();
    let mut turns = Vec::new();
    writeln!(out, "{} | {} robot | you want: {}", spec.name, mode_name(mode), spec.objectives[theta])?;
    writeln!(out, "type an action name or its number; end of input quits")?;

    let mut line = String::new();
    'turns: while !ep.is_finished() {
        let a_r = ep.robot_action()?;
        let legal = spec.legal_actions(ep.state, Actor::Human);
        writeln!(out)?;
        writeln!(out, "turn {}/{} | state: {}", ep.t + 1, spec.horizon, spec.states[ep.state])?;
        writeln!(out, "robot belief: {}", format_belief(spec, &ep.belief))?;
        writeln!(out, "robot: {}", spec.robot_actions[a_r])?;
        let options: Vec<String> =
            legal.iter().enumerate().map(|(i, &a)| format!("{}) {}", i + 1, spec.human_actions[a])).collect();
        writeln!(out, "your options: {}", options.join("  "))?;
        let a_h = loop {
            write!(out, "> ")?;
            out.flush()?;
            line.clear();
            if input.read_line(&mut line)? == 0 {
                writeln!(out)?;
                writeln!(out, "input closed after {} turns", turns.len())?;
                break 'turns;
            }
            let choice = line.trim();
            let picked = match choice.parse::<usize>() {
                Ok(n) => n.checked_sub(1).and_then(|i| legal.get(i).copied()),
                Err(_) => spec.action_index(Actor::Human, choice).filter(|a| legal.contains(a)),
            };
            match picked {
                Some(a) => break a,
                None => writeln!(out, "not a legal action here: {choice:?}")?,
            }
        };
        let record = ep.advance(a_r, a_h, &mut rng)?;
        writeln!(
            out,
            "you: {} | robot belief now: {}",
            spec.human_actions[a_h],
            format_belief(spec, &record.next_belief)
        )?;
        turns.push(record);
    }
    let trace = EpisodeTrace::assemble(
        &condition,
        spec,
        theta,
        seed,
        (s0, initial_belief),
        turns,
        (ep.state, ep.belief.clone()),
    );
    let outcome = if trace.success {
        format!("success: {} served", spec.objectives[theta])
    } else if ep.is_finished() {
        "failure: the wrong dish or no dish".to_string()
    } else {
        "unfinished".to_string()
    };
    writeln!(out, "outcome: {outcome} | return {:.4}", trace.total_reward)?;
    Ok(trace)
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Cirl => "pragmatic (cirl)",
        Mode::Irl => "literal (irl)",
    }
}
