//! HTTP play service: a live human takes the H role against a solved robot.
//!
//! Routes: `GET /scenarios`, `POST /sessions`, `GET /sessions/{id}`,
//! `POST /sessions/{id}/action`. Bodies are JSON; errors are
//! `{code, message, legal_actions?}`.

pub mod error;
pub mod session;

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use cirl_core::chefworld::ChefWorld;
use cirl_core::config::grid_for;
use cirl_core::evaluator::{EpisodeTrace, Solutions};
use cirl_core::scenario::{builtin_scenarios, Scenario};
use cirl_core::solver::{literal_robot_policy, solve_cirl, FullInfoSet, SolverSettings};
use cirl_core::RationalityModel;
use serde::{Deserialize, Serialize};

pub use error::{ApiError, ErrorBody};
pub use session::{CreateSession, Session, SessionStatus, SessionSummary, SessionView, SolvedScenario, SubmitAction};

/// One line of the append-only journal.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
enum JournalEntry {
    Create { id: String, request: CreateSession },
    Action { id: String, request: SubmitAction },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioInfo {
    pub id: String,
    pub title: String,
    pub objectives: Vec<String>,
    pub ingredients: Vec<IngredientInfo>,
    pub human_actions: Vec<String>,
    pub robot_actions: Vec<String>,
    pub horizon: usize,
    pub default_model: RationalityModel,
    pub script: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngredientInfo {
    pub name: String,
    pub states: Vec<String>,
}

type SolvedKey = (String, String);

pub struct AppState {
    scenarios: Vec<(Scenario, ChefWorld)>,
    settings: SolverSettings,
    solved: tokio::sync::Mutex<HashMap<SolvedKey, Arc<SolvedScenario>>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
    journal: Option<Mutex<std::fs::File>>,
}

impl AppState {
    pub fn new() -> Result<Self, ApiError> {
        Self::with_scenarios(builtin_scenarios())
    }

    pub fn with_scenarios(scenarios: Vec<Scenario>) -> Result<Self, ApiError> {
        let scenarios = scenarios
            .into_iter()
            .map(|s| ChefWorld::build(s.domain.clone()).map(|w| (s, w)))
            .collect::<Result<_, _>>()?;
        Ok(AppState {
            scenarios,
            settings: SolverSettings::default(),
            solved: Default::default(),
            sessions: Default::default(),
            next_id: AtomicU64::new(1),
            journal: None,
        })
    }

    /// Replays an existing journal, then appends every later event to it.
    pub async fn with_journal(mut self, path: &Path) -> Result<Self, ApiError> {
        if path.exists() {
            let file = std::fs::File::open(path).map_err(|e| ApiError::Internal(e.to_string()))?;
            for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| ApiError::Internal(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: JournalEntry = serde_json::from_str(&line)
                    .map_err(|e| ApiError::Internal(format!("journal line {}: {e}", n + 1)))?;
                match entry {
                    JournalEntry::Create { id, request } => {
                        let session = self.build_session(id.clone(), request).await?;
                        if let Some(num) = id.strip_prefix('s').and_then(|x| u64::from_str_radix(x, 16).ok()) {
                            self.next_id.fetch_max(num + 1, Ordering::SeqCst);
                        }
                        self.sessions.write().unwrap().insert(id, Arc::new(Mutex::new(session)));
                    }
                    JournalEntry::Action { id, request } => {
                        let session = self.session(&id)?;
                        let mut guard = session.lock().unwrap();
                        guard.submit(&request)?;
                    }
                }
            }
        }
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        self.journal = Some(Mutex::new(file));
        Ok(self)
    }

    fn record(&self, entry: &JournalEntry) -> Result<(), ApiError> {
        if let Some(journal) = &self.journal {
            let mut f = journal.lock().unwrap();
            let line = serde_json::to_string(entry).expect("journal entry serializes");
            writeln!(f, "{line}").and_then(|_| f.flush()).map_err(|e| ApiError::Internal(e.to_string()))?;
        }
        Ok(())
    }

    pub fn scenario_infos(&self) -> Vec<ScenarioInfo> {
        self.scenarios
            .iter()
            .map(|(s, w)| ScenarioInfo {
                id: s.id.clone(),
                title: s.title.clone(),
                objectives: w.spec.objectives.clone(),
                ingredients: w
                    .domain
                    .ingredients
                    .iter()
                    .map(|i| IngredientInfo { name: i.name.clone(), states: i.states.clone() })
                    .collect(),
                human_actions: w.spec.human_actions.clone(),
                robot_actions: w.spec.robot_actions.clone(),
                horizon: w.spec.horizon,
                default_model: s.default_model,
                script: s.script.clone(),
            })
            .collect()
    }

    /// Solutions for a scenario and model, solved on first use and shared.
    pub async fn solved(
        &self,
        scenario: &str,
        model: Option<RationalityModel>,
    ) -> Result<Arc<SolvedScenario>, ApiError> {
        let (s, w) = self
            .scenarios
            .iter()
            .find(|(s, _)| s.id == scenario)
            .ok_or_else(|| ApiError::UnknownScenario(scenario.into()))?;
        let model = model.unwrap_or(s.default_model);
        model.validate(w.spec.num_human_actions()).map_err(|e| ApiError::BadRequest(e.to_string()))?;
        let key = (s.id.clone(), serde_json::to_string(&model).expect("model serializes"));
        let mut cache = self.solved.lock().await;
        if let Some(hit) = cache.get(&key) {
            return Ok(hit.clone());
        }
        let (scenario, world, settings) = (s.clone(), w.clone(), self.settings);
        let solved = tokio::task::spawn_blocking(move || -> Result<SolvedScenario, ApiError> {
            let grid = grid_for(&world.spec, None)?;
            let (q, _) = solve_cirl(&world.spec, &grid, model, settings)?;
            let full = FullInfoSet::solve(&world.spec, model)?;
            let literal = literal_robot_policy(&world.spec, &grid, &full, model)?;
            Ok(SolvedScenario {
                scenario,
                world,
                model,
                solutions: Solutions { grid, cirl: Some(q), literal: Some(literal) },
            })
        })
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
        let solved = Arc::new(solved);
        cache.insert(key, solved.clone());
        Ok(solved)
    }

    async fn build_session(&self, id: String, request: CreateSession) -> Result<Session, ApiError> {
        let solved = self.solved(&request.scenario, request.model).await?;
        Session::new(id, request, solved)
    }

    pub async fn create_session(&self, request: CreateSession) -> Result<SessionSummary, ApiError> {
        let id = format!("s{:08x}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let session = self.build_session(id.clone(), request.clone()).await?;
        let summary = session.summary();
        self.record(&JournalEntry::Create { id: id.clone(), request })?;
        self.sessions.write().unwrap().insert(id, Arc::new(Mutex::new(session)));
        Ok(summary)
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions.read().unwrap().get(id).cloned().ok_or_else(|| ApiError::UnknownSession(id.into()))
    }

    pub fn get_session(&self, id: &str) -> Result<SessionView, ApiError> {
        Ok(self.session(id)?.lock().unwrap().view())
    }

    /// The session's full episode trace, in the evaluator's format.
    pub fn trace(&self, id: &str) -> Result<EpisodeTrace, ApiError> {
        Ok(self.session(id)?.lock().unwrap().trace())
    }

    /// Submissions to one session are serialized by its lock.
    pub fn submit(&self, id: &str, request: SubmitAction) -> Result<SessionSummary, ApiError> {
        let session = self.session(id)?;
        let mut guard = session.lock().unwrap();
        guard.submit(&request)?;
        self.record(&JournalEntry::Action { id: id.into(), request })?;
        Ok(guard.summary())
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::BadRequest(e.body_text()))
}

async fn list_scenarios(State(app): State<Arc<AppState>>) -> Json<Vec<ScenarioInfo>> {
    Json(app.scenario_infos())
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionSummary>), ApiError> {
    let summary = app.create_session(body(payload)?).await?;
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn get_session(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<SessionView>, ApiError> {
    Ok(Json(app.get_session(&id)?))
}

async fn submit_action(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<SubmitAction>, JsonRejection>,
) -> Result<Json<SessionSummary>, ApiError> {
    let request = body(payload)?;
    Ok(Json(app.submit(&id, request)?))
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/scenarios", get(list_scenarios))
        .route("/sessions", post(create_session))
        .route("/sessions/:id", get(get_session))
        .route("/sessions/:id/action", post(submit_action))
        .with_state(app)
}

/// Serves until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, journal: Option<PathBuf>) -> Result<(), ApiError> {
    let mut app = AppState::new()?;
    if let Some(path) = journal {
        app = app.with_journal(&path).await?;
    }
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| ApiError::Internal(e.to_string()))?;
    axum::serve(listener, router(Arc::new(app))).await.map_err(|e| ApiError::Internal(e.to_string()))
}
