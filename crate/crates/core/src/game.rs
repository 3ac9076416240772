//! The flat two-player CIRL game shared by every solver and domain.
//!
//! A [`GameSpec`] is the declarative tuple: states, the human's and robot's
//! action sets, a joint-action transition measure, a reward parameterized by
//! the hidden objective, a prior over (state, objective), a discount and an
//! episode horizon. Factored domains such as ChefWorld compile down to it.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{CirlError, Result};

/// Current version of the flat game file format.
pub const GAME_FORMAT_VERSION: u32 = 1;

const SUM_TOL: f64 = 1e-9;

/// Which player an action set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actor {
    Human,
    Robot,
}

/// Information order within a turn.
///
/// The robot commits first; the human sees its action before choosing hers.
/// Transitions consume the joint action, so the order only matters for who
/// conditions on what: the human policy is indexed by `a_R`, the robot policy
/// is not indexed by `a_H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TurnStructure {
    #[default]
    RobotRevealsFirst,
}

/// One successor of a transition row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub to: usize,
    pub p: f64,
}

/// The CIRL game tuple in flat, index-based form.
///
/// `transition[s][a_h][a_r]` is the sparse row of `T(. | s, a_h, a_r)`;
/// `reward[s][a_h][a_r][theta]` is `r(s, a_h, a_r; theta)`;
/// `prior[s][theta]` is `P0(s, theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSpec {
    pub format_version: u32,
    #[serde(default)]
    pub name: String,
    pub states: Vec<String>,
    pub human_actions: Vec<String>,
    pub robot_actions: Vec<String>,
    pub objectives: Vec<String>,
    pub transition: Vec<Vec<Vec<Vec<Outcome>>>>,
    pub reward: Vec<Vec<Vec<Vec<f64>>>>,
    pub prior: Vec<Vec<f64>>,
    pub discount: f64,
    pub horizon: usize,
    /// Per-state legal human actions. `None` means every action is legal everywhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legal_human: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legal_robot: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub turn_structure: TurnStructure,
}

/// A single invariant violation found by [`validate_game`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl GameSpec {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_human_actions(&self) -> usize {
        self.human_actions.len()
    }

    pub fn num_robot_actions(&self) -> usize {
        self.robot_actions.len()
    }

    pub fn num_objectives(&self) -> usize {
        self.objectives.len()
    }

    #[inline]
    pub fn successors(&self, s: usize, a_h: usize, a_r: usize) -> &[Outcome] {
        &self.transition[s][a_h][a_r]
    }

    /// Reward vector over objectives for one joint action.
    #[inline]
    pub fn rewards(&self, s: usize, a_h: usize, a_r: usize) -> &[f64] {
        &self.reward[s][a_h][a_r]
    }

    /// Actions whose preconditions hold in `s`, in index order.
    pub fn legal_actions(&self, s: usize, actor: Actor) -> Vec<usize> {
        self.legal_slice(s, actor).map(<[usize]>::to_vec).unwrap_or_else(|| match actor {
            Actor::Human => (0..self.num_human_actions()).collect(),
            Actor::Robot => (0..self.num_robot_actions()).collect(),
        })
    }

    fn legal_slice(&self, s: usize, actor: Actor) -> Option<&[usize]> {
        let table = match actor {
            Actor::Human => self.legal_human.as_ref(),
            Actor::Robot => self.legal_robot.as_ref(),
        };
        table.map(|t| t[s].as_slice())
    }

    pub fn is_legal(&self, s: usize, actor: Actor, a: usize) -> bool {
        match self.legal_slice(s, actor) {
            Some(list) => list.contains(&a),
            None => match actor {
                Actor::Human => a < self.num_human_actions(),
                Actor::Robot => a < self.num_robot_actions(),
            },
        }
    }

    /// True when every transition row puts all its mass on one successor.
    pub fn is_deterministic(&self) -> bool {
        self.transition.iter().flatten().flatten().all(|row| {
            let mass: f64 = row.iter().filter(|o| o.p > 0.0).map(|o| o.p).sum();
            row.iter().filter(|o| o.p > 0.0).count() == 1 && (mass - 1.0).abs() <= SUM_TOL
        })
    }

    /// Marginal of the prior over states.
    pub fn initial_state_distribution(&self) -> Vec<f64> {
        self.prior.iter().map(|row| row.iter().sum()).collect()
    }

    /// The robot's initial belief over objectives given the initial state,
    /// or `None` when the prior gives that state no mass.
    pub fn initial_belief(&self, s: usize) -> Option<Vec<f64>> {
        let row = &self.prior[s];
        let z: f64 = row.iter().sum();
        (z > 0.0).then(|| row.iter().map(|p| p / z).collect())
    }

    pub fn objective_index(&self, name: &str) -> Option<usize> {
        self.objectives.iter().position(|o| o.eq_ignore_ascii_case(name))
    }

    pub fn action_index(&self, actor: Actor, name: &str) -> Option<usize> {
        let names = match actor {
            Actor::Human => &self.human_actions,
            Actor::Robot => &self.robot_actions,
        };
        names.iter().position(|a| a.eq_ignore_ascii_case(name))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CirlError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("game spec serializes")
    }
}

/// Checks every structural invariant of a game. An empty list means valid.
pub fn validate_game(spec: &GameSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |location: String, message: String| out.push(Violation { location, message });

    if spec.format_version != GAME_FORMAT_VERSION {
        push(
            "format_version".into(),
            format!("unsupported version {} (expected {GAME_FORMAT_VERSION})", spec.format_version),
        );
    }
    let (ns, nh, nr, nt) =
        (spec.num_states(), spec.num_human_actions(), spec.num_robot_actions(), spec.num_objectives());
    for (field, n) in [("states", ns), ("human_actions", nh), ("robot_actions", nr), ("objectives", nt)] {
        if n == 0 {
            push(field.into(), "must be non-empty".into());
        }
    }
    if !(0.0..=1.0).contains(&spec.discount) {
        push("discount".into(), format!("{} is outside [0, 1]", spec.discount));
    }
    if spec.horizon == 0 {
        push("horizon".into(), "must be at least 1".into());
    }

    if spec.transition.len() != ns {
        push("transition".into(), format!("has {} state rows, expected {ns}", spec.transition.len()));
    }
    for (s, by_h) in spec.transition.iter().enumerate() {
        if by_h.len() != nh {
            push(format!("transition[{s}]"), format!("has {} human-action rows, expected {nh}", by_h.len()));
        }
        for (a_h, by_r) in by_h.iter().enumerate() {
            if by_r.len() != nr {
                push(format!("transition[{s}][{a_h}]"), format!("has {} robot-action rows, expected {nr}", by_r.len()));
            }
            for (a_r, row) in by_r.iter().enumerate() {
                let loc = format!("transition[{s}][{a_h}][{a_r}]");
                let mut sum = 0.0;
                for o in row {
                    if o.to >= ns {
                        push(loc.clone(), format!("successor {} out of range", o.to));
                    }
                    if !o.p.is_finite() || o.p < 0.0 {
                        push(loc.clone(), format!("invalid probability {}", o.p));
                    }
                    sum += o.p;
                }
                if (sum - 1.0).abs() > SUM_TOL {
                    push(loc, format!("row sums to {sum}, expected 1"));
                }
            }
        }
    }

    if spec.reward.len() != ns {
        push("reward".into(), format!("has {} state rows, expected {ns}", spec.reward.len()));
    }
    for (s, by_h) in spec.reward.iter().enumerate() {
        for (a_h, by_r) in by_h.iter().enumerate() {
            for (a_r, per_theta) in by_r.iter().enumerate() {
                let loc = format!("reward[{s}][{a_h}][{a_r}]");
                if per_theta.len() != nt {
                    push(loc.clone(), format!("has {} objective entries, expected {nt}", per_theta.len()));
                }
                if per_theta.iter().any(|r| !r.is_finite()) {
                    push(loc, "non-finite reward".into());
                }
            }
            if by_r.len() != nr {
                push(format!("reward[{s}][{a_h}]"), format!("has {} robot-action rows, expected {nr}", by_r.len()));
            }
        }
        if by_h.len() != nh {
            push(format!("reward[{s}]"), format!("has {} human-action rows, expected {nh}", by_h.len()));
        }
    }

    if spec.prior.len() != ns {
        push("prior".into(), format!("has {} state rows, expected {ns}", spec.prior.len()));
    }
    let mut total = 0.0;
    for (s, row) in spec.prior.iter().enumerate() {
        if row.len() != nt {
            push(format!("prior[{s}]"), format!("has {} entries, expected {nt}", row.len()));
        }
        for (theta, &p) in row.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                push(format!("prior[{s}][{theta}]"), format!("invalid probability {p}"));
            }
            total += p;
        }
    }
    if (total - 1.0).abs() > SUM_TOL {
        push("prior".into(), format!("sums to {total}, expected 1"));
    }

    for (actor, table, n) in [("legal_human", &spec.legal_human, nh), ("legal_robot", &spec.legal_robot, nr)] {
        let Some(table) = table else { continue };
        if table.len() != ns {
            push(actor.into(), format!("has {} state rows, expected {ns}", table.len()));
        }
        for (s, list) in table.iter().enumerate() {
            if list.is_empty() {
                push(format!("{actor}[{s}]"), "no legal action".into());
            }
            if list.iter().any(|&a| a >= n) {
                push(format!("{actor}[{s}]"), "action index out of range".into());
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                push(format!("{actor}[{s}]"), "indices must be strictly increasing".into());
            }
        }
    }
    out
}

/// Samples one transition. Returns the successor and the reward vector over
/// objectives, so callers that do and do not know the objective share it.
pub fn step<'a, R: Rng + ?Sized>(
    spec: &'a GameSpec,
    s: usize,
    a_h: usize,
    a_r: usize,
    rng: &mut R,
) -> Result<(usize, &'a [f64])> {
    if s >= spec.num_states() {
        return Err(CirlError::Usage(format!("state {s} out of range")));
    }
    if a_h >= spec.num_human_actions() {
        return Err(CirlError::Usage(format!("human action {a_h} out of range")));
    }
    if a_r >= spec.num_robot_actions() {
        return Err(CirlError::Usage(format!("robot action {a_r} out of range")));
    }
    let row = spec.successors(s, a_h, a_r);
    let next = sample_row(row, rng);
    Ok((next, spec.rewards(s, a_h, a_r)))
}

fn sample_row<R: Rng + ?Sized>(row: &[Outcome], rng: &mut R) -> usize {
    // Deterministic rows never touch the stream.
    if let [only] = row {
        return only.to;
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for o in row {
        acc += o.p;
        if u < acc {
            return o.to;
        }
    }
    row.iter().rev().find(|o| o.p > 0.0).map_or(row[0].to, |o| o.to)
}
