//! Value of the game when the objective is common knowledge.
//!
//! This is the expert model behind the IRL baseline: the human acts as if the
//! robot already knew what she wants. With no belief there is nothing for the
//! human's policy to feed back into, so every cell resolves in one pass.

use serde::{Deserialize, Serialize};

use super::CellView;
use crate::belief::RationalityModel;
use crate::error::{CirlError, Result};
use crate::game::{validate_game, Actor, GameSpec};

/// `Q_full(t, s, a_H, a_R; theta)` for one objective, laid out `[t][s][a_h][a_r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullInfoQ {
    pub objective: usize,
    pub horizon: usize,
    pub num_states: usize,
    pub num_human_actions: usize,
    pub num_robot_actions: usize,
    pub model: RationalityModel,
    pub tables: Vec<Vec<f64>>,
}

impl FullInfoQ {
    pub fn get(&self, t: usize, s: usize, a_h: usize, a_r: usize) -> f64 {
        self.tables[t][(s * self.num_human_actions + a_h) * self.num_robot_actions + a_r]
    }
}

/// Solves the common-knowledge game for objective `theta`.
pub fn solve_full_info(spec: &GameSpec, theta: usize, model: RationalityModel) -> Result<FullInfoQ> {
    let violations = validate_game(spec);
    if !violations.is_empty() {
        return Err(CirlError::InvalidGame(violations));
    }
    if theta >= spec.num_objectives() {
        return Err(CirlError::Usage(format!("objective {theta} out of range")));
    }
    model.validate(spec.num_human_actions())?;

    let (ns, nh, nr) = (spec.num_states(), spec.num_human_actions(), spec.num_robot_actions());
    let legal: Vec<(Vec<usize>, Vec<usize>)> = super::legal_table(spec);
    let mut tables = vec![Vec::new(); spec.horizon];
    let mut next_v: Option<Vec<f64>> = None;
    for t in (0..spec.horizon).rev() {
        let mut table = vec![0.0; ns * nh * nr];
        for s in 0..ns {
            for &a_h in &legal[s].0 {
                for &a_r in &legal[s].1 {
                    let cont: f64 = match &next_v {
                        None => 0.0,
                        Some(v) => spec.successors(s, a_h, a_r).iter().map(|o| o.p * v[o.to]).sum(),
                    };
                    table[(s * nh + a_h) * nr + a_r] = spec.rewards(s, a_h, a_r)[theta] + spec.discount * cont;
                }
            }
        }
        let mut v = vec![0.0; ns];
        for (s, vs) in v.iter_mut().enumerate() {
            let cell = &table[s * nh * nr..(s + 1) * nh * nr];
            let view = CellView {
                values: cell,
                policy: cell,
                num_robot_actions: nr,
                num_objectives: 1,
                legal_human: &legal[s].0,
                legal_robot: &legal[s].1,
            };
            *vs = view.continuation_value(&[1.0], &model)?.1[0];
        }
        tables[t] = table;
        next_v = Some(v);
    }
    Ok(FullInfoQ {
        objective: theta,
        horizon: spec.horizon,
        num_states: ns,
        num_human_actions: nh,
        num_robot_actions: nr,
        model,
        tables,
    })
}

/// Full-information solutions for every objective, interleaved so a
/// (turn, state) cell has the same `[a_h][a_r][theta]` layout as a
/// belief-state cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullInfoSet {
    pub per_objective: Vec<FullInfoQ>,
    cells: Vec<Vec<f64>>,
}

impl FullInfoSet {
    pub fn solve(spec: &GameSpec, model: RationalityModel) -> Result<Self> {
        let per_objective =
            (0..spec.num_objectives()).map(|theta| solve_full_info(spec, theta, model)).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_parts(per_objective))
    }

    pub fn from_parts(per_objective: Vec<FullInfoQ>) -> Self {
        let first = &per_objective[0];
        let (ns, nh, nr, nt) =
            (first.num_states, first.num_human_actions, first.num_robot_actions, per_objective.len());
        let cells = (0..first.horizon)
            .map(|t| {
                let mut table = vec![0.0; ns * nh * nr * nt];
                for (theta, q) in per_objective.iter().enumerate() {
                    for (i, &v) in q.tables[t].iter().enumerate() {
                        table[i * nt + theta] = v;
                    }
                }
                table
            })
            .collect();
        FullInfoSet { per_objective, cells }
    }

    pub fn model(&self) -> RationalityModel {
        self.per_objective[0].model
    }

    /// Every cell of turn `t`, `[s][a_h][a_r][theta]`.
    pub fn turn(&self, t: usize) -> &[f64] {
        &self.cells[t]
    }

    pub fn cell(&self, t: usize, s: usize) -> &[f64] {
        let q = &self.per_objective[0];
        let n = q.num_human_actions * q.num_robot_actions * self.per_objective.len();
        &self.cells[t][s * n..(s + 1) * n]
    }

    /// Expert human's choice probabilities over legal human actions.
    pub fn human_policy(&self, spec: &GameSpec, t: usize, s: usize, a_r: usize, theta: usize) -> Result<Vec<f64>> {
        let legal = (spec.legal_actions(s, Actor::Human), spec.legal_actions(s, Actor::Robot));
        let cell = self.cell(t, s);
        CellView {
            values: cell,
            policy: cell,
            num_robot_actions: spec.num_robot_actions(),
            num_objectives: self.per_objective.len(),
            legal_human: &legal.0,
            legal_robot: &legal.1,
        }
        .human_policy(a_r, theta, &self.model())
    }

    /// Start-state value for objective `theta` with the robot acting on full knowledge.
    pub fn value(&self, spec: &GameSpec, s: usize, theta: usize) -> Result<f64> {
        let q = &self.per_objective[theta];
        let (nh, nr) = (q.num_human_actions, q.num_robot_actions);
        let legal = (spec.legal_actions(s, Actor::Human), spec.legal_actions(s, Actor::Robot));
        let cell = &q.tables[0][s * nh * nr..(s + 1) * nh * nr];
        let view = CellView {
            values: cell,
            policy: cell,
            num_robot_actions: nr,
            num_objectives: 1,
            legal_human: &legal.0,
            legal_robot: &legal.1,
        };
        Ok(view.continuation_value(&[1.0], &q.model)?.1[0])
    }
}
