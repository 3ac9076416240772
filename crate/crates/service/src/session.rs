//! One human-vs-robot game, independent of HTTP.

use std::sync::Arc;

use cirl_core::chefworld::ChefWorld;
use cirl_core::config::Mode;
use cirl_core::evaluator::{
    draw_objective, sample_initial_state, Condition, Episode, EpisodeTrace, Solutions, TurnRecord,
};
use cirl_core::scenario::Scenario;
use cirl_core::{Actor, RationalityModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

pub const SCHEMA_VERSION: u32 = 1;

/// A scenario with solutions for one rationality model.
#[derive(Debug)]
pub struct SolvedScenario {
    pub scenario: Scenario,
    pub world: ChefWorld,
    pub model: RationalityModel,
    pub solutions: Solutions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub scenario: String,
    #[serde(default)]
    pub mode: Mode,
    /// The scenario's default model when absent.
    #[serde(default)]
    pub model: Option<RationalityModel>,
    /// A recipe name or "random".
    #[serde(default = "random_recipe")]
    pub true_recipe: String,
    #[serde(default)]
    pub seed: u64,
}

fn random_recipe() -> String {
    "random".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitAction {
    pub action: String,
    /// When given, the submission is rejected unless the session is at this
    /// turn. Lets concurrent clients detect that someone else moved first.
    #[serde(default)]
    pub expected_turn: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStatus {
    Active,
    Succeeded,
    /// Ran out of turns.
    FailedHorizon,
    /// A different recipe was served.
    FailedWrongRecipe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngredientLevel {
    pub ingredient: String,
    pub level: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub schema_version: u32,
    pub id: String,
    pub scenario: String,
    pub mode: Mode,
    pub model: RationalityModel,
    pub seed: u64,
    /// Shown to the human player; the robot's code path never reads it.
    pub true_recipe: String,
    pub turn: usize,
    pub horizon: usize,
    pub state: String,
    /// Per-ingredient levels; empty once the dish is served.
    pub kitchen: Vec<IngredientLevel>,
    pub objectives: Vec<String>,
    pub belief: Vec<f64>,
    /// The robot's action for the current turn, already committed.
    pub robot_action: Option<String>,
    pub legal_actions: Vec<String>,
    pub status: SessionStatus,
    pub total_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnView {
    pub t: usize,
    pub state: String,
    pub belief: Vec<f64>,
    pub robot_action: String,
    pub human_action: String,
    pub rewards: Vec<f64>,
    pub next_state: String,
    pub next_belief: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    #[serde(flatten)]
    pub summary: SessionSummary,
    pub trace: Vec<TurnView>,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub request: CreateSession,
    pub true_objective: usize,
    solved: Arc<SolvedScenario>,
    condition: Condition,
    rng: ChaCha8Rng,
    initial_state: usize,
    initial_belief: Vec<f64>,
    t: usize,
    state: usize,
    belief: Vec<f64>,
    turns: Vec<TurnRecord>,
    robot_action: Option<usize>,
}

impl Session {
    pub fn new(id: String, request: CreateSession, solved: Arc<SolvedScenario>) -> Result<Self, ApiError> {
        let spec = &solved.world.spec;
        let true_objective = if request.true_recipe.eq_ignore_ascii_case("random") {
            draw_objective(spec, request.seed)
        } else {
            spec.objective_index(&request.true_recipe)
                .ok_or_else(|| ApiError::UnknownRecipe(request.true_recipe.clone()))?
        };
        let condition = match request.mode {
            Mode::Cirl => Condition::cirl(solved.model, &solved.scenario.id),
            Mode::Irl => Condition::irl(solved.model, &solved.scenario.id),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
        let initial_state = sample_initial_state(spec, true_objective, &mut rng)?;
        let ep = Episode::from_prior(spec, &solved.solutions, condition.clone(), initial_state)?;
        let initial_belief = ep.belief.clone();
        let mut session = Session {
            id,
            request,
            true_objective,
            condition,
            rng,
            initial_state,
            belief: initial_belief.clone(),
            initial_belief,
            t: 0,
            state: initial_state,
            turns: Vec::new(),
            robot_action: None,
            solved,
        };
        session.robot_action = session.next_robot_action()?;
        Ok(session)
    }

    fn episode(&self) -> Result<Episode<'_>, ApiError> {
        let mut ep = Episode::new(
            &self.solved.world.spec,
            &self.solved.solutions,
            self.condition.clone(),
            self.state,
            self.belief.clone(),
        )?;
        ep.t = self.t;
        Ok(ep)
    }

    // Deliberately takes no objective: the robot only sees state and belief.
    fn next_robot_action(&self) -> Result<Option<usize>, ApiError> {
        let ep = self.episode()?;
        Ok(if ep.is_finished() { None } else { Some(ep.robot_action()?) })
    }

    pub fn status(&self) -> SessionStatus {
        if self.turns.iter().any(|r| r.rewards[self.true_objective] > 0.0) {
            SessionStatus::Succeeded
        } else if self.robot_action.is_some() {
            SessionStatus::Active
        } else if self.t >= self.solved.world.spec.horizon {
            SessionStatus::FailedHorizon
        } else {
            SessionStatus::FailedWrongRecipe
        }
    }

    pub fn turn(&self) -> usize {
        self.t
    }

    fn legal_names(&self) -> Vec<String> {
        let spec = &self.solved.world.spec;
        if self.robot_action.is_none() {
            return Vec::new();
        }
        spec.legal_actions(self.state, Actor::Human).into_iter().map(|a| spec.human_actions[a].clone()).collect()
    }

    /// Applies the human's action against the robot action already shown.
    pub fn submit(&mut self, req: &SubmitAction) -> Result<(), ApiError> {
        let Some(a_r) = self.robot_action else {
            return Err(ApiError::Finished(format!("{:?}", self.status())));
        };
        if let Some(expected) = req.expected_turn {
            if expected != self.t {
                return Err(ApiError::TurnMismatch { expected, actual: self.t });
            }
        }
        let spec = &self.solved.world.spec;
        let a_h = spec
            .action_index(Actor::Human, &req.action)
            .filter(|&a| spec.is_legal(self.state, Actor::Human, a))
            .ok_or_else(|| ApiError::IllegalAction {
                message: format!("{:?} is not a legal action in {}", req.action, spec.states[self.state]),
                legal_actions: self.legal_names(),
            })?;
        let solved = self.solved.clone();
        let mut ep = Episode::new(
            &solved.world.spec,
            &solved.solutions,
            self.condition.clone(),
            self.state,
            self.belief.clone(),
        )?;
        ep.t = self.t;
        let record = ep.advance(a_r, a_h, &mut self.rng)?;
        let (t, state, belief) = (ep.t, ep.state, ep.belief);
        self.t = t;
        self.state = state;
        self.belief = belief;
        self.turns.push(record);
        self.robot_action = self.next_robot_action()?;
        Ok(())
    }

    pub fn trace(&self) -> EpisodeTrace {
        EpisodeTrace::assemble(
            &self.condition,
            &self.solved.world.spec,
            self.true_objective,
            self.request.seed,
            (self.initial_state, self.initial_belief.clone()),
            self.turns.clone(),
            (self.state, self.belief.clone()),
        )
    }

    pub fn summary(&self) -> SessionSummary {
        let world = &self.solved.world;
        let spec = &world.spec;
        let k = world.decode(self.state);
        let kitchen = k
            .levels
            .iter()
            .zip(&world.domain.ingredients)
            .map(|(&l, ing)| IngredientLevel { ingredient: ing.name.clone(), level: ing.states[l].clone() })
            .collect();
        SessionSummary {
            schema_version: SCHEMA_VERSION,
            id: self.id.clone(),
            scenario: self.solved.scenario.id.clone(),
            mode: self.request.mode,
            model: self.solved.model,
            seed: self.request.seed,
            true_recipe: spec.objectives[self.true_objective].clone(),
            turn: self.t,
            horizon: spec.horizon,
            state: spec.states[self.state].clone(),
            kitchen,
            objectives: spec.objectives.clone(),
            belief: self.belief.clone(),
            robot_action: self.robot_action.map(|a| spec.robot_actions[a].clone()),
            legal_actions: self.legal_names(),
            status: self.status(),
            total_reward: self.trace().total_reward,
        }
    }

    pub fn view(&self) -> SessionView {
        let spec = &self.solved.world.spec;
        SessionView {
            summary: self.summary(),
            trace: self
                .turns
                .iter()
                .map(|r| TurnView {
                    t: r.t,
                    state: spec.states[r.state].clone(),
                    belief: r.belief.clone(),
                    robot_action: spec.robot_actions[r.robot_action].clone(),
                    human_action: spec.human_actions[r.human_action].clone(),
                    rewards: r.rewards.clone(),
                    next_state: spec.states[r.next_state].clone(),
                    next_belief: r.next_belief.clone(),
                })
                .collect(),
        }
    }
}
