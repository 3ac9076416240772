//! Rolling out solved policies against simulated humans.
//!
//! The robot keeps an exact continuous belief and projects it onto the grid
//! only to look up its policy. Exact evaluation enumerates the human's action
//! tree (transitions must be deterministic); Monte Carlo handles the rest and
//! cross-checks it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{bayes_into, Belief, RationalityModel};
use crate::error::{CirlError, Result};
use crate::game::{Actor, GameSpec};
use crate::grid::BeliefGrid;
use crate::solver::{CellView, LiteralSolution, QFunction};

/// Branches whose probability falls below this are dropped from exact enumeration.
pub const PRUNE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobotKind {
    CirlPragmatic,
    IrlLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HumanKind {
    /// Samples from the equilibrium Q's Boltzmann policy; sees the robot's belief.
    Pedagogic,
    /// Samples from the full-information Q's Boltzmann policy.
    Expert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub robot: RobotKind,
    pub human: HumanKind,
    pub model: RationalityModel,
    pub scenario: String,
}

impl Condition {
    pub fn cirl(model: RationalityModel, scenario: &str) -> Self {
        Condition { robot: RobotKind::CirlPragmatic, human: HumanKind::Pedagogic, model, scenario: scenario.into() }
    }

    pub fn irl(model: RationalityModel, scenario: &str) -> Self {
        Condition { robot: RobotKind::IrlLiteral, human: HumanKind::Expert, model, scenario: scenario.into() }
    }

    /// The two pairings compared in the benchmark table.
    pub fn is_matched_pairing(&self) -> bool {
        matches!(
            (self.robot, self.human),
            (RobotKind::CirlPragmatic, HumanKind::Pedagogic) | (RobotKind::IrlLiteral, HumanKind::Expert)
        )
    }

    pub fn label(&self) -> String {
        let base = match (self.robot, self.human) {
            (RobotKind::CirlPragmatic, HumanKind::Pedagogic) => "cirl",
            (RobotKind::IrlLiteral, HumanKind::Expert) => "irl",
            (RobotKind::CirlPragmatic, HumanKind::Expert) => "pragmatic-robot/expert-human (unmatched)",
            (RobotKind::IrlLiteral, HumanKind::Pedagogic) => "literal-robot/pedagogic-human (unmatched)",
        };
        format!("{base} {}", self.model.label())
    }
}

/// Solved tables an episode may need.
#[derive(Debug, Clone)]
pub struct Solutions {
    pub grid: BeliefGrid,
    pub cirl: Option<QFunction>,
    pub literal: Option<LiteralSolution>,
}

impl Solutions {
    fn cirl(&self) -> Result<&QFunction> {
        self.cirl.as_ref().ok_or_else(|| CirlError::MissingSolution("pragmatic-pedagogic Q".into()))
    }

    fn literal(&self) -> Result<&LiteralSolution> {
        self.literal.as_ref().ok_or_else(|| CirlError::MissingSolution("literal robot / full-information Q".into()))
    }

    /// Fails unless every table the condition reads is present and matches.
    pub fn check(&self, condition: &Condition, spec: &GameSpec) -> Result<()> {
        if condition.robot == RobotKind::CirlPragmatic || condition.human == HumanKind::Pedagogic {
            let q = self.cirl()?;
            q.check_shape(spec, &self.grid)?;
            if q.model != condition.model {
                return Err(CirlError::MissingSolution(format!(
                    "no pragmatic solution for {}",
                    condition.model.label()
                )));
            }
        }
        if condition.robot == RobotKind::IrlLiteral || condition.human == HumanKind::Expert {
            let l = self.literal()?;
            l.values.check_shape(spec, &self.grid)?;
            if l.values.model != condition.model {
                return Err(CirlError::MissingSolution(format!("no literal solution for {}", condition.model.label())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpisodeStatus {
    Active,
    /// Absorbed or out of turns; success is judged against the true objective.
    Finished,
}

/// One turn of an episode. `belief` is the robot's belief when it chose `robot_action`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub t: usize,
    pub state: usize,
    pub belief: Vec<f64>,
    pub robot_action: usize,
    pub human_action: usize,
    pub rewards: Vec<f64>,
    pub next_state: usize,
    pub next_belief: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub condition: Condition,
    pub true_objective: usize,
    pub seed: u64,
    pub initial_state: usize,
    pub initial_belief: Vec<f64>,
    pub turns: Vec<TurnRecord>,
    pub final_state: usize,
    pub final_belief: Vec<f64>,
    pub success: bool,
    pub total_reward: f64,
}

/// One line of a trace file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum TraceLine {
    Header {
        config_hash: String,
        condition: Condition,
        true_objective: String,
        seed: u64,
        initial_state: String,
        initial_belief: Vec<f64>,
    },
    Turn {
        t: usize,
        state: String,
        belief: Vec<f64>,
        robot_action: String,
        human_action: String,
        rewards: Vec<f64>,
    },
    Summary {
        final_state: String,
        final_belief: Vec<f64>,
        success: bool,
        total_reward: f64,
    },
}

impl EpisodeTrace {
    /// Line-delimited JSON, one record per turn between a header and a summary.
    pub fn to_jsonl(&self, spec: &GameSpec, config_hash: &str) -> String {
        let mut lines = vec![TraceLine::Header {
            config_hash: config_hash.into(),
            condition: self.condition.clone(),
            true_objective: spec.objectives[self.true_objective].clone(),
            seed: self.seed,
            initial_state: spec.states[self.initial_state].clone(),
            initial_belief: self.initial_belief.clone(),
        }];
        lines.extend(self.turns.iter().map(|r| TraceLine::Turn {
            t: r.t,
            state: spec.states[r.state].clone(),
            belief: r.belief.clone(),
            robot_action: spec.robot_actions[r.robot_action].clone(),
            human_action: spec.human_actions[r.human_action].clone(),
            rewards: r.rewards.clone(),
        }));
        lines.push(TraceLine::Summary {
            final_state: spec.states[self.final_state].clone(),
            final_belief: self.final_belief.clone(),
            success: self.success,
            total_reward: self.total_reward,
        });
        lines.iter().map(|l| serde_json::to_string(l).expect("trace serializes") + "\n").collect()
    }
}

/// States from which no legal joint action moves or pays.
pub fn absorbing_states(spec: &GameSpec) -> Vec<bool> {
    (0..spec.num_states())
        .map(|s| {
            spec.legal_actions(s, Actor::Human).iter().all(|&a_h| {
                spec.legal_actions(s, Actor::Robot).iter().all(|&a_r| {
                    spec.successors(s, a_h, a_r).iter().all(|o| o.to == s || o.p == 0.0)
                        && spec.rewards(s, a_h, a_r).iter().all(|&r| r == 0.0)
                })
            })
        })
        .collect()
}

/// Turn-by-turn driver shared by simulation, enumeration and the play service.
///
/// Robot-side methods never take the true objective; only
/// [`Episode::human_distribution`] does.
#[derive(Debug, Clone)]
pub struct Episode<'a> {
    spec: &'a GameSpec,
    solutions: &'a Solutions,
    condition: Condition,
    absorbing: std::sync::Arc<Vec<bool>>,
    pub t: usize,
    pub state: usize,
    pub belief: Vec<f64>,
}

impl<'a> Episode<'a> {
    pub fn new(
        spec: &'a GameSpec,
        solutions: &'a Solutions,
        condition: Condition,
        state: usize,
        belief: Vec<f64>,
    ) -> Result<Self> {
        solutions.check(&condition, spec)?;
        if state >= spec.num_states() {
            return Err(CirlError::Usage(format!("state {state} out of range")));
        }
        Belief::new(belief.clone())?;
        Ok(Episode {
            spec,
            solutions,
            condition,
            absorbing: std::sync::Arc::new(absorbing_states(spec)),
            t: 0,
            state,
            belief,
        })
    }

    /// Starts from the prior's initial state with the robot's prior belief.
    pub fn from_prior(
        spec: &'a GameSpec,
        solutions: &'a Solutions,
        condition: Condition,
        state: usize,
    ) -> Result<Self> {
        let belief =
            spec.initial_belief(state).ok_or_else(|| CirlError::Usage(format!("prior gives state {state} no mass")))?;
        Self::new(spec, solutions, condition, state, belief)
    }

    pub fn condition(&self) -> &Condition {
        &self.condition
    }

    pub fn is_finished(&self) -> bool {
        self.t >= self.spec.horizon || self.absorbing[self.state]
    }

    pub fn status(&self) -> EpisodeStatus {
        if self.is_finished() {
            EpisodeStatus::Finished
        } else {
            EpisodeStatus::Active
        }
    }

    pub fn grid_index(&self) -> usize {
        self.solutions.grid.project(&self.belief)
    }

    fn legal(&self) -> (Vec<usize>, Vec<usize>) {
        (self.spec.legal_actions(self.state, Actor::Human), self.spec.legal_actions(self.state, Actor::Robot))
    }

    fn robot_view<'v>(&'v self, legal: &'v (Vec<usize>, Vec<usize>), g: usize) -> Result<CellView<'v>> {
        Ok(match self.condition.robot {
            RobotKind::CirlPragmatic => self.solutions.cirl()?.view(legal, self.t, self.state, g),
            RobotKind::IrlLiteral => self.solutions.literal()?.view(legal, self.t, self.state, g),
        })
    }

    fn human_view<'v>(&'v self, legal: &'v (Vec<usize>, Vec<usize>), g: usize) -> Result<CellView<'v>> {
        Ok(match self.condition.human {
            HumanKind::Pedagogic => self.solutions.cirl()?.view(legal, self.t, self.state, g),
            HumanKind::Expert => self.solutions.literal()?.view(legal, self.t, self.state, g),
        })
    }

    /// The robot's action this turn.
    pub fn robot_action(&self) -> Result<usize> {
        let legal = self.legal();
        let g = self.grid_index();
        crate::solver::robot_best_response(
            &self.robot_view(&legal, g)?,
            &self.solutions.grid.weights(g),
            &self.condition.model,
        )
    }

    /// The simulated human's choice distribution over her legal actions.
    pub fn human_distribution(&self, robot_action: usize, true_objective: usize) -> Result<Vec<(usize, f64)>> {
        let legal = self.legal();
        let view = self.human_view(&legal, self.grid_index())?;
        let p = view.human_policy(robot_action, true_objective, &self.condition.model)?;
        Ok(legal.0.iter().copied().zip(p).collect())
    }

    /// The robot's posterior after seeing `human_action` in reply to `robot_action`.
    pub fn posterior(&self, robot_action: usize, human_action: usize) -> Result<Vec<f64>> {
        let legal = self.legal();
        let j = legal
            .0
            .iter()
            .position(|&a| a == human_action)
            .ok_or_else(|| CirlError::Usage(format!("human action {human_action} is not legal")))?;
        let view = self.robot_view(&legal, self.grid_index())?;
        let nt = self.spec.num_objectives();
        let mut likelihood = vec![0.0; nt];
        for (theta, l) in likelihood.iter_mut().enumerate() {
            *l = view.human_policy(robot_action, theta, &self.condition.model)?[j];
        }
        let mut out = vec![0.0; nt];
        bayes_into(&self.belief, &likelihood, &mut out)?;
        Ok(out)
    }

    /// Applies one joint action and returns the turn record.
    pub fn advance<R: Rng + ?Sized>(
        &mut self,
        robot_action: usize,
        human_action: usize,
        rng: &mut R,
    ) -> Result<TurnRecord> {
        if self.is_finished() {
            return Err(CirlError::Usage("episode already finished".into()));
        }
        if !self.spec.is_legal(self.state, Actor::Robot, robot_action) {
            return Err(CirlError::Usage(format!("robot action {robot_action} is not legal")));
        }
        let next_belief = self.posterior(robot_action, human_action)?;
        let (next_state, rewards) = crate::game::step(self.spec, self.state, human_action, robot_action, rng)?;
        let record = TurnRecord {
            t: self.t,
            state: self.state,
            belief: self.belief.clone(),
            robot_action,
            human_action,
            rewards: rewards.to_vec(),
            next_state,
            next_belief: next_belief.clone(),
        };
        self.t += 1;
        self.state = next_state;
        self.belief = next_belief;
        Ok(record)
    }
}

/// Where the human's actions come from in a rollout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HumanDriver {
    Sampled,
    /// Fixed actions turn by turn; sampling resumes if the script runs out.
    Scripted(Vec<usize>),
}

fn sample_index<R: Rng + ?Sized>(dist: &[(usize, f64)], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(a, p) in dist {
        acc += p;
        if u < acc {
            return a;
        }
    }
    dist.iter().rev().find(|(_, p)| *p > 0.0).map_or(dist[0].0, |&(a, _)| a)
}

/// Samples an initial state from `P0(s | theta)`.
/// Draws the start state from the prior's column for `theta`.
pub fn sample_initial_state<R: Rng + ?Sized>(spec: &GameSpec, theta: usize, rng: &mut R) -> Result<usize> {
    let column: Vec<(usize, f64)> = spec.prior.iter().enumerate().map(|(s, row)| (s, row[theta])).collect();
    let z: f64 = column.iter().map(|(_, p)| p).sum();
    if !(z > 0.0) {
        return Err(CirlError::Usage(format!("prior gives objective {theta} no mass")));
    }
    let normalized: Vec<(usize, f64)> = column.into_iter().filter(|(_, p)| *p > 0.0).map(|(s, p)| (s, p / z)).collect();
    Ok(sample_index(&normalized, rng))
}

/// Mixed into the seed for the stream that draws a random true objective, so
/// it stays apart from the episode's own stream.
const OBJECTIVE_STREAM: u64 = 0x7265_6369_7065_0001;

/// Draws a true objective from the prior's marginal over objectives.
pub fn draw_objective(spec: &GameSpec, seed: u64) -> usize {
    let dist: Vec<(usize, f64)> =
        (0..spec.num_objectives()).map(|th| (th, spec.prior.iter().map(|r| r[th]).sum::<f64>())).collect();
    let z: f64 = dist.iter().map(|(_, p)| p).sum();
    let dist: Vec<(usize, f64)> = dist.into_iter().map(|(th, p)| (th, p / z)).collect();
    sample_index(&dist, &mut ChaCha8Rng::seed_from_u64(seed ^ OBJECTIVE_STREAM))
}

pub fn simulate_episode(
    condition: &Condition,
    solutions: &Solutions,
    spec: &GameSpec,
    true_objective: usize,
    seed: u64,
) -> Result<EpisodeTrace> {
    run_episode(condition, solutions, spec, true_objective, seed, &HumanDriver::Sampled)
}

/// Rolls out one episode. Reproducible from `seed`.
pub fn run_episode(
    condition: &Condition,
    solutions: &Solutions,
    spec: &GameSpec,
    true_objective: usize,
    seed: u64,
    driver: &HumanDriver,
) -> Result<EpisodeTrace> {
    if true_objective >= spec.num_objectives() {
        return Err(CirlError::Usage(format!("objective {true_objective} out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s0 = sample_initial_state(spec, true_objective, &mut rng)?;
    let mut ep = Episode::from_prior(spec, solutions, condition.clone(), s0)?;
    let initial_belief = ep.belief.clone();
    let mut turns = Vec::new();
    while !ep.is_finished() {
        let a_r = ep.robot_action()?;
        let a_h = match driver {
            HumanDriver::Scripted(script) if ep.t < script.len() => script[ep.t],
            _ => sample_index(&ep.human_distribution(a_r, true_objective)?, &mut rng),
        };
        turns.push(ep.advance(a_r, a_h, &mut rng)?);
    }
    Ok(EpisodeTrace::assemble(
        condition,
        spec,
        true_objective,
        seed,
        (s0, initial_belief),
        turns,
        (ep.state, ep.belief.clone()),
    ))
}

impl EpisodeTrace {
    /// Builds a trace from its turn records; success and return are derived
    /// from the rewards.
    pub fn assemble(
        condition: &Condition,
        spec: &GameSpec,
        true_objective: usize,
        seed: u64,
        (initial_state, initial_belief): (usize, Vec<f64>),
        turns: Vec<TurnRecord>,
        (final_state, final_belief): (usize, Vec<f64>),
    ) -> EpisodeTrace {
        let total_reward: f64 =
            turns.iter().enumerate().map(|(k, r)| spec.discount.powi(k as i32) * r.rewards[true_objective]).sum();
        let success = turns.iter().any(|r| r.rewards[true_objective] > 0.0);
        EpisodeTrace {
            condition: condition.clone(),
            true_objective,
            seed,
            initial_state,
            initial_belief,
            turns,
            final_state,
            final_belief,
            success,
            total_reward,
        }
    }
}

/// Exact expected value for one true objective from one start state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Enumeration {
    pub value: f64,
    pub leaf_mass: f64,
    pub pruned_mass: f64,
}

impl Enumeration {
    fn add(&mut self, other: Enumeration) {
        self.value += other.value;
        self.leaf_mass += other.leaf_mass;
        self.pruned_mass += other.pruned_mass;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactValue {
    pub per_objective: Vec<f64>,
    pub total: f64,
    pub leaf_mass: f64,
    pub pruned_mass: f64,
}

fn enumerate_from(ep: &Episode<'_>, theta: usize, prob: f64, discount: f64, parallel: bool) -> Result<Enumeration> {
    if ep.is_finished() {
        return Ok(Enumeration { leaf_mass: prob, ..Default::default() });
    }
    let a_r = ep.robot_action()?;
    let dist = ep.human_distribution(a_r, theta)?;
    let branch = |&(a_h, p): &(usize, f64)| -> Result<Enumeration> {
        let mass = prob * p;
        if mass < PRUNE_THRESHOLD {
            return Ok(Enumeration { pruned_mass: mass, ..Default::default() });
        }
        let mut child = ep.clone();
        let mut no_rng = rand::rngs::mock::StepRng::new(0, 0);
        let record = child.advance(a_r, a_h, &mut no_rng)?;
        let mut e = Enumeration { value: mass * discount * record.rewards[theta], ..Default::default() };
        e.add(enumerate_from(&child, theta, mass, discount * ep.spec.discount, false)?);
        Ok(e)
    };
    let parts: Vec<Enumeration> = if parallel {
        dist.par_iter().map(branch).collect::<Result<_>>()?
    } else {
        dist.iter().map(branch).collect::<Result<_>>()?
    };
    let mut total = Enumeration::default();
    for p in parts {
        total.add(p);
    }
    Ok(total)
}

/// Exact expected return by enumerating the human's action tree.
pub fn expected_value_exact(condition: &Condition, solutions: &Solutions, spec: &GameSpec) -> Result<ExactValue> {
    if !spec.is_deterministic() {
        return Err(CirlError::StochasticTransition);
    }
    solutions.check(condition, spec)?;
    let nt = spec.num_objectives();
    let starts: Vec<(usize, usize, f64)> = spec
        .prior
        .iter()
        .enumerate()
        .flat_map(|(s, row)| row.iter().enumerate().filter(|(_, p)| **p > 0.0).map(move |(theta, &p)| (s, theta, p)))
        .collect();
    let results: Vec<Enumeration> = starts
        .par_iter()
        .map(|&(s, theta, _)| {
            let ep = Episode::from_prior(spec, solutions, condition.clone(), s)?;
            enumerate_from(&ep, theta, 1.0, 1.0, true)
        })
        .collect::<Result<_>>()?;
    let mut per_objective = vec![0.0; nt];
    let mut objective_mass = vec![0.0; nt];
    let (mut total, mut leaf_mass, mut pruned_mass) = (0.0, 0.0, 0.0);
    for (&(_, theta, p), e) in starts.iter().zip(&results) {
        per_objective[theta] += p * e.value;
        objective_mass[theta] += p;
        total += p * e.value;
        leaf_mass += p * e.leaf_mass;
        pruned_mass += p * e.pruned_mass;
    }
    for (v, m) in per_objective.iter_mut().zip(&objective_mass) {
        if *m > 0.0 {
            *v /= m;
        }
    }
    Ok(ExactValue { per_objective, total, leaf_mass, pruned_mass })
}

/// Value of one true objective from the prior's start state(s).
pub fn expected_value_for(
    condition: &Condition,
    solutions: &Solutions,
    spec: &GameSpec,
    theta: usize,
) -> Result<Enumeration> {
    if !spec.is_deterministic() {
        return Err(CirlError::StochasticTransition);
    }
    let mut out = Enumeration::default();
    let column: f64 = spec.prior.iter().map(|r| r[theta]).sum();
    for (s, row) in spec.prior.iter().enumerate() {
        if row[theta] > 0.0 {
            let ep = Episode::from_prior(spec, solutions, condition.clone(), s)?;
            let e = enumerate_from(&ep, theta, row[theta] / column, 1.0, true)?;
            out.add(e);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub episodes: usize,
    pub mean: f64,
    pub std_error: f64,
    pub successes: usize,
}

fn episode_seed(seed: u64, i: u64) -> u64 {
    // splitmix64 of the pair
    let mut z = seed ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Monte Carlo estimate of the prior-weighted expected return.
pub fn expected_value_monte_carlo(
    condition: &Condition,
    solutions: &Solutions,
    spec: &GameSpec,
    episodes: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    solutions.check(condition, spec)?;
    let objective_marginal: Vec<(usize, f64)> =
        (0..spec.num_objectives()).map(|theta| (theta, spec.prior.iter().map(|r| r[theta]).sum::<f64>())).collect();
    let returns: Vec<(f64, bool)> = (0..episodes as u64)
        .into_par_iter()
        .map(|i| {
            let ep_seed = episode_seed(seed, i);
            let mut pick = ChaCha8Rng::seed_from_u64(ep_seed ^ 0xA5A5_A5A5_A5A5_A5A5);
            let theta = sample_index(&objective_marginal, &mut pick);
            let trace = simulate_episode(condition, solutions, spec, theta, ep_seed)?;
            Ok((trace.total_reward, trace.success))
        })
        .collect::<Result<_>>()?;
    let n = episodes as f64;
    let mean = pairwise_sum(&returns.iter().map(|r| r.0).collect::<Vec<_>>()) / n;
    let var = pairwise_sum(&returns.iter().map(|r| (r.0 - mean).powi(2)).collect::<Vec<_>>()) / (n - 1.0).max(1.0);
    Ok(MonteCarloEstimate {
        episodes,
        mean,
        std_error: (var / n).sqrt(),
        successes: returns.iter().filter(|r| r.1).count(),
    })
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}
