//! The literal (standard IRL) robot.
//!
//! It plans over its belief dynamics like the pragmatic robot, but interprets
//! the human as an expert acting as if the robot already knew the objective:
//! the likelihood of an action comes from the full-information Q, which does
//! not depend on the robot's belief. No fixed point is involved.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{turn_values, BackupContext, CellView, QFunction, Scratch, SolverSettings};
use crate::belief::RationalityModel;
use crate::error::{CirlError, Result};
use crate::game::{validate_game, Actor, GameSpec};
use crate::grid::BeliefGrid;
use crate::solver::full_info::FullInfoSet;

/// Belief-state values of the literal robot plus the expert model it assumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiteralSolution {
    pub values: QFunction,
    pub full: FullInfoSet,
}

impl LiteralSolution {
    pub fn view<'a>(&'a self, legal: &'a (Vec<usize>, Vec<usize>), t: usize, s: usize, g: usize) -> CellView<'a> {
        CellView {
            values: self.values.cell(t, s, g),
            policy: self.full.cell(t, s),
            num_robot_actions: self.values.num_robot_actions,
            num_objectives: self.values.num_objectives,
            legal_human: &legal.0,
            legal_robot: &legal.1,
        }
    }

    /// Greedy robot action at a grid point.
    pub fn robot_action(&self, spec: &GameSpec, grid: &BeliefGrid, t: usize, s: usize, g: usize) -> Result<usize> {
        let legal = (spec.legal_actions(s, Actor::Human), spec.legal_actions(s, Actor::Robot));
        super::robot_best_response(&self.view(&legal, t, s, g), &grid.weights(g), &self.values.model)
    }

    pub fn value_at(
        &self,
        spec: &GameSpec,
        grid: &BeliefGrid,
        t: usize,
        s: usize,
        g: usize,
    ) -> Result<(usize, Vec<f64>)> {
        let legal = (spec.legal_actions(s, Actor::Human), spec.legal_actions(s, Actor::Robot));
        self.view(&legal, t, s, g).continuation_value(&grid.weights(g), &self.values.model)
    }
}

/// Belief-state value iteration with the exogenous expert likelihood.
pub fn literal_robot_policy(
    spec: &GameSpec,
    grid: &BeliefGrid,
    full: &FullInfoSet,
    model: RationalityModel,
) -> Result<LiteralSolution> {
    let violations = validate_game(spec);
    if !violations.is_empty() {
        return Err(CirlError::InvalidGame(violations));
    }
    if full.per_objective.len() != spec.num_objectives() || full.model() != model {
        return Err(CirlError::Usage("full-information solutions do not match the game or model".into()));
    }
    if grid.dims() != spec.num_objectives() {
        return Err(CirlError::Usage("grid dimension differs from the objective count".into()));
    }
    model.validate(spec.num_human_actions())?;

    let mut values = QFunction::zeros(spec, grid, model);
    let g_len = grid.len();
    let cell_len = values.cell_len();
    let mut tables = vec![Vec::new(); spec.horizon];
    let mut next_values: Option<Vec<f64>> = None;
    for t in (0..spec.horizon).rev() {
        let ctx = BackupContext {
            spec,
            grid,
            model,
            settings: SolverSettings::default(),
            next_values: next_values.as_deref(),
            expert: None,
        };
        let cells: Vec<Vec<f64>> = (0..spec.num_states() * g_len)
            .into_par_iter()
            .map_init(
                || Scratch::new(spec.num_human_actions(), spec.num_objectives()),
                |scratch, idx| {
                    let (s, g) = (idx / g_len, idx % g_len);
                    let (legal_h, legal_r) = ctx.legal(s);
                    let mut out = vec![0.0; cell_len];
                    ctx.apply(s, &grid.weights(g), &legal_h, &legal_r, full.cell(t, s), scratch, &mut out)?;
                    Ok(out)
                },
            )
            .collect::<Result<_>>()?;
        tables[t] = cells.concat();
        if t > 0 {
            let cur = &tables[t];
            next_values = Some(turn_values(spec, grid, &model, |s, g| {
                let start = (s * g_len + g) * cell_len;
                (&cur[start..start + cell_len], full.cell(t, s))
            })?);
        }
    }
    values.tables = tables;
    Ok(LiteralSolution { values, full: full.clone() })
}
