//! Finite-horizon belief-state value iteration for the CIRL game.
//!
//! At every backup the human's Boltzmann policy depends on the cell's own
//! Q values, and the robot's belief transition depends on that policy, so each
//! cell is solved as a fixed point (see [`backup_cell`]). The full-information
//! expert model and the literal robot that reasons with it live in
//! [`full_info`] and [`literal`].

pub mod full_info;
pub mod literal;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{argmax_first, bayes_into, policy_into, RationalityModel};
use crate::error::{CirlError, Result};
use crate::game::{validate_game, Actor, GameSpec};
use crate::grid::BeliefGrid;

pub use full_info::{solve_full_info, FullInfoQ, FullInfoSet};
pub use literal::{literal_robot_policy, LiteralSolution};

/// How a cell's fixed-point iteration is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarmStart {
    /// The same (state, grid point) cell from the turn solved just before; the
    /// immediate reward on the last turn.
    PreviousTurn,
    /// Always the immediate reward.
    Reward,
    /// The backup with the belief held fixed, as if the human's action
    /// carried no information.
    Uninformed,
    /// The backup under the full-information expert's policy.
    Expert,
    /// Every other seed in turn; the converged fixed point with the highest
    /// belief-weighted value is kept.
    #[default]
    Best,
}

const SEEDS: [WarmStart; 4] = [WarmStart::PreviousTurn, WarmStart::Expert, WarmStart::Uninformed, WarmStart::Reward];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight on the new iterate: `q <- (1 - damping) q + damping F(q)`.
    pub damping: f64,
    #[serde(default)]
    pub warm_start: WarmStart,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol: 1e-8, max_iter: 200, damping: 0.5, warm_start: WarmStart::Best }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(CirlError::Usage(format!("bad solver settings {self:?}")));
        }
        Ok(())
    }
}

/// Tabular `Q(t, s, g, a_H, a_R; theta)`.
///
/// Entries for actions that are illegal in `s` are zero and never read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QFunction {
    pub horizon: usize,
    pub num_states: usize,
    pub grid_len: usize,
    pub grid_resolution: u32,
    pub num_human_actions: usize,
    pub num_robot_actions: usize,
    pub num_objectives: usize,
    pub model: RationalityModel,
    /// One flat table per turn, laid out `[s][g][a_h][a_r][theta]`.
    pub tables: Vec<Vec<f64>>,
}

impl QFunction {
    pub(crate) fn zeros(spec: &GameSpec, grid: &BeliefGrid, model: RationalityModel) -> Self {
        QFunction {
            horizon: spec.horizon,
            num_states: spec.num_states(),
            grid_len: grid.len(),
            grid_resolution: grid.resolution(),
            num_human_actions: spec.num_human_actions(),
            num_robot_actions: spec.num_robot_actions(),
            num_objectives: spec.num_objectives(),
            model,
            tables: Vec::new(),
        }
    }

    #[inline]
    pub fn cell_len(&self) -> usize {
        self.num_human_actions * self.num_robot_actions * self.num_objectives
    }

    #[inline]
    pub fn cell(&self, t: usize, s: usize, g: usize) -> &[f64] {
        let n = self.cell_len();
        let start = (s * self.grid_len + g) * n;
        &self.tables[t][start..start + n]
    }

    pub fn get(&self, t: usize, s: usize, g: usize, a_h: usize, a_r: usize, theta: usize) -> f64 {
        self.cell(t, s, g)[(a_h * self.num_robot_actions + a_r) * self.num_objectives + theta]
    }

    pub fn is_finite(&self) -> bool {
        self.tables.iter().flatten().all(|q| q.is_finite())
    }

    /// Checks that the table dimensions agree with a game and grid.
    pub fn check_shape(&self, spec: &GameSpec, grid: &BeliefGrid) -> Result<()> {
        let ok = self.horizon == spec.horizon
            && self.num_states == spec.num_states()
            && self.grid_len == grid.len()
            && self.num_human_actions == spec.num_human_actions()
            && self.num_robot_actions == spec.num_robot_actions()
            && self.num_objectives == spec.num_objectives()
            && self.tables.len() == spec.horizon;
        if ok {
            Ok(())
        } else {
            Err(CirlError::Usage("Q table does not match the game or grid".into()))
        }
    }
}

/// Values of one (turn, state, grid point) cell together with the table the
/// human's choice probabilities are read from.
///
/// For the pragmatic robot `policy` is `values` itself. For the literal robot
/// it is the full-information cell, which ignores the robot's belief.
#[derive(Debug, Clone, Copy)]
pub struct CellView<'a> {
    pub values: &'a [f64],
    pub policy: &'a [f64],
    pub num_robot_actions: usize,
    pub num_objectives: usize,
    pub legal_human: &'a [usize],
    pub legal_robot: &'a [usize],
}

impl<'a> CellView<'a> {
    #[inline]
    fn at(&self, table: &[f64], a_h: usize, a_r: usize, theta: usize) -> f64 {
        table[(a_h * self.num_robot_actions + a_r) * self.num_objectives + theta]
    }

    /// Human choice probabilities over `legal_human` given the revealed robot action.
    pub fn human_policy_into(
        &self,
        a_r: usize,
        theta: usize,
        model: &RationalityModel,
        row: &mut [f64],
        out: &mut [f64],
    ) -> Result<()> {
        for (slot, &a_h) in row.iter_mut().zip(self.legal_human) {
            *slot = self.at(self.policy, a_h, a_r, theta);
        }
        policy_into(row, model, out)
    }

    pub fn human_policy(&self, a_r: usize, theta: usize, model: &RationalityModel) -> Result<Vec<f64>> {
        let n = self.legal_human.len();
        let (mut row, mut out) = (vec![0.0; n], vec![0.0; n]);
        self.human_policy_into(a_r, theta, model, &mut row, &mut out)?;
        Ok(out)
    }

    /// Expected value per objective of robot action `a_r` with the human
    /// responding by her policy.
    fn action_values(
        &self,
        a_r: usize,
        model: &RationalityModel,
        scratch: &mut Scratch,
        out: &mut [f64],
    ) -> Result<()> {
        let n = self.legal_human.len();
        for (theta, v) in out.iter_mut().enumerate() {
            self.human_policy_into(a_r, theta, model, &mut scratch.row[..n], &mut scratch.pol[..n])?;
            *v = self
                .legal_human
                .iter()
                .zip(&scratch.pol[..n])
                .map(|(&a_h, p)| p * self.at(self.values, a_h, a_r, theta))
                .sum();
        }
        Ok(())
    }

    fn best_response_with(&self, b: &[f64], model: &RationalityModel, scratch: &mut Scratch) -> Result<usize> {
        let nt = self.num_objectives;
        let mut per_theta = std::mem::take(&mut scratch.per_theta);
        per_theta.resize(nt, 0.0);
        let mut scores = std::mem::take(&mut scratch.scores);
        scores.clear();
        for &a_r in self.legal_robot {
            self.action_values(a_r, model, scratch, &mut per_theta)?;
            scores.push(per_theta.iter().zip(b).map(|(v, w)| v * w).sum::<f64>());
        }
        let best = self.legal_robot[argmax_first(&scores)];
        scratch.per_theta = per_theta;
        scratch.scores = scores;
        Ok(best)
    }

    /// Robot action and the resulting per-objective continuation value.
    fn value_with(&self, b: &[f64], model: &RationalityModel, scratch: &mut Scratch, out: &mut [f64]) -> Result<usize> {
        let a_r = self.best_response_with(b, model, scratch)?;
        self.action_values(a_r, model, scratch, out)?;
        Ok(a_r)
    }

    pub fn continuation_value(&self, b: &[f64], model: &RationalityModel) -> Result<(usize, Vec<f64>)> {
        let mut scratch = Scratch::new(self.legal_human.len().max(1), self.num_objectives);
        let mut out = vec![0.0; self.num_objectives];
        let a_r = self.value_with(b, model, &mut scratch, &mut out)?;
        Ok((a_r, out))
    }
}

/// The robot's action: maximize belief-weighted expected Q with the human
/// answering by her policy; lowest action index among ties.
pub fn robot_best_response(cell: &CellView<'_>, b: &[f64], model: &RationalityModel) -> Result<usize> {
    let mut scratch = Scratch::new(cell.legal_human.len().max(1), cell.num_objectives);
    cell.best_response_with(b, model, &mut scratch)
}

#[derive(Debug, Default)]
struct Scratch {
    row: Vec<f64>,
    pol: Vec<f64>,
    per_theta: Vec<f64>,
    scores: Vec<f64>,
    lik: Vec<Vec<f64>>,
    obs_lik: Vec<f64>,
    post: Vec<f64>,
}

impl Scratch {
    fn new(max_actions: usize, nt: usize) -> Self {
        Scratch {
            row: vec![0.0; max_actions],
            pol: vec![0.0; max_actions],
            per_theta: vec![0.0; nt],
            scores: Vec::new(),
            lik: vec![vec![0.0; max_actions]; nt],
            obs_lik: vec![0.0; nt],
            post: vec![0.0; nt],
        }
    }
}

/// Everything a backup at one turn needs besides the cell coordinates.
pub struct BackupContext<'a> {
    pub spec: &'a GameSpec,
    pub grid: &'a BeliefGrid,
    pub model: RationalityModel,
    pub settings: SolverSettings,
    /// `V_{t+1}(s', g'; theta)` laid out `[s'][g'][theta]`; `None` past the horizon.
    pub next_values: Option<&'a [f64]>,
    /// Expert policy cells for this turn, `[s][a_h][a_r][theta]`; needed by
    /// the expert seed only.
    pub expert: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellBackup {
    pub q: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BackupContext<'_> {
    fn legal(&self, s: usize) -> (Vec<usize>, Vec<usize>) {
        (self.spec.legal_actions(s, Actor::Human), self.spec.legal_actions(s, Actor::Robot))
    }

    fn continuation(&self, s: usize, a_h: usize, a_r: usize, g_next: usize, theta: usize) -> f64 {
        let Some(next) = self.next_values else { return 0.0 };
        let nt = self.spec.num_objectives();
        let g_len = self.grid.len();
        self.spec.successors(s, a_h, a_r).iter().map(|o| o.p * next[(o.to * g_len + g_next) * nt + theta]).sum()
    }

    /// Immediate reward over legal joint actions, zero elsewhere.
    fn reward_cell(&self, s: usize, legal_h: &[usize], legal_r: &[usize]) -> Vec<f64> {
        let (nr, nt) = (self.spec.num_robot_actions(), self.spec.num_objectives());
        let mut q = vec![0.0; self.spec.num_human_actions() * nr * nt];
        for &a_h in legal_h {
            for &a_r in legal_r {
                let base = (a_h * nr + a_r) * nt;
                q[base..base + nt].copy_from_slice(self.spec.rewards(s, a_h, a_r));
            }
        }
        q
    }

    fn uninformed_cell(&self, s: usize, g: usize, legal_h: &[usize], legal_r: &[usize]) -> Vec<f64> {
        let (nr, nt) = (self.spec.num_robot_actions(), self.spec.num_objectives());
        let mut q = vec![0.0; self.spec.num_human_actions() * nr * nt];
        for &a_h in legal_h {
            for &a_r in legal_r {
                let r = self.spec.rewards(s, a_h, a_r);
                let base = (a_h * nr + a_r) * nt;
                for theta in 0..nt {
                    q[base + theta] = r[theta] + self.spec.discount * self.continuation(s, a_h, a_r, g, theta);
                }
            }
        }
        q
    }

    /// One application of the backup map at cell (s, g). The human's choice
    /// probabilities, and so the belief transition, are read from `policy`.
    #[allow(clippy::too_many_arguments)]
    fn apply(
        &self,
        s: usize,
        b: &[f64],
        legal_h: &[usize],
        legal_r: &[usize],
        policy: &[f64],
        scratch: &mut Scratch,
        out: &mut [f64],
    ) -> Result<()> {
        let (nr, nt) = (self.spec.num_robot_actions(), self.spec.num_objectives());
        let view = CellView {
            values: policy,
            policy,
            num_robot_actions: nr,
            num_objectives: nt,
            legal_human: legal_h,
            legal_robot: legal_r,
        };
        let n = legal_h.len();
        let gamma = self.spec.discount;
        for &a_r in legal_r {
            for theta in 0..nt {
                let mut lik = std::mem::take(&mut scratch.lik[theta]);
                view.human_policy_into(a_r, theta, &self.model, &mut scratch.row[..n], &mut lik[..n])?;
                scratch.lik[theta] = lik;
            }
            for (j, &a_h) in legal_h.iter().enumerate() {
                for theta in 0..nt {
                    scratch.obs_lik[theta] = scratch.lik[theta][j];
                }
                let g_next = match bayes_into(b, &scratch.obs_lik, &mut scratch.post) {
                    Ok(()) => self.grid.project(&scratch.post),
                    // off-equilibrium action: keep the prior belief
                    Err(CirlError::InconsistentObservation) => self.grid.project(b),
                    Err(e) => return Err(e),
                };
                let r = self.spec.rewards(s, a_h, a_r);
                let base = (a_h * nr + a_r) * nt;
                for theta in 0..nt {
                    out[base + theta] = r[theta] + gamma * self.continuation(s, a_h, a_r, g_next, theta);
                }
            }
        }
        Ok(())
    }
}

/// Solves the pragmatic-pedagogic fixed point of one cell by damped iteration
/// from the seed named by the settings; `init` is the same cell from the turn
/// solved before, if any.
pub fn backup_cell(ctx: &BackupContext<'_>, s: usize, g: usize, init: Option<&[f64]>) -> Result<CellBackup> {
    let (legal_h, legal_r) = ctx.legal(s);
    let mut scratch = Scratch::new(ctx.spec.num_human_actions(), ctx.spec.num_objectives());
    backup_cell_with(ctx, s, g, init, &legal_h, &legal_r, &mut scratch)
}

fn backup_cell_with(
    ctx: &BackupContext<'_>,
    s: usize,
    g: usize,
    prev: Option<&[f64]>,
    legal_h: &[usize],
    legal_r: &[usize],
    scratch: &mut Scratch,
) -> Result<CellBackup> {
    if ctx.settings.warm_start != WarmStart::Best {
        let q0 = ctx.seed(ctx.settings.warm_start, s, g, prev, legal_h, legal_r, scratch)?;
        return ctx.iterate(s, g, q0, legal_h, legal_r, scratch);
    }
    // The map acts on each robot action's block separately, so the choice
    // between seeds is made block by block.
    let b = ctx.grid.weights(g);
    let (nr, nt) = (ctx.spec.num_robot_actions(), ctx.spec.num_objectives());
    let mut result: Option<CellBackup> = None;
    let mut block_best: Vec<(bool, f64, f64)> = vec![(false, f64::NEG_INFINITY, f64::INFINITY); nr];
    let mut tried: Vec<Vec<f64>> = Vec::new();
    let mut image = Vec::new();
    let mut values = vec![0.0; nt];
    for seed in SEEDS {
        let q0 = ctx.seed(seed, s, g, prev, legal_h, legal_r, scratch)?;
        if tried.iter().any(|t| max_abs_diff(t, &q0) == 0.0) {
            continue;
        }
        let out = ctx.iterate(s, g, q0.clone(), legal_h, legal_r, scratch)?;
        tried.push(q0);
        image.resize(out.q.len(), 0.0);
        ctx.apply(s, &b, legal_h, legal_r, &out.q, scratch, &mut image)?;
        let view = CellView {
            values: &out.q,
            policy: &out.q,
            num_robot_actions: nr,
            num_objectives: nt,
            legal_human: legal_h,
            legal_robot: legal_r,
        };
        let total_iterations = result.as_ref().map_or(0, |r| r.iterations) + out.iterations;
        let merged = result.get_or_insert_with(|| out.clone());
        merged.iterations = total_iterations;
        for &a_r in legal_r {
            let mut residual: f64 = 0.0;
            for &a_h in legal_h {
                let base = (a_h * nr + a_r) * nt;
                for (f, q) in image[base..base + nt].iter().zip(&out.q[base..base + nt]) {
                    residual = residual.max(ctx.settings.damping * (f - q).abs());
                }
            }
            let converged = residual < ctx.settings.tol;
            view.action_values(a_r, &ctx.model, scratch, &mut values)?;
            let score: f64 = values.iter().zip(&b).map(|(v, w)| v * w).sum();
            let (conv, top, _) = block_best[a_r];
            let better = top == f64::NEG_INFINITY
                || (converged && !conv)
                || (converged == conv && score > top + ctx.settings.tol);
            if better {
                block_best[a_r] = (converged, score, residual);
                for &a_h in legal_h {
                    let base = (a_h * nr + a_r) * nt;
                    merged.q[base..base + nt].copy_from_slice(&out.q[base..base + nt]);
                }
            }
        }
    }
    let mut merged = result.expect("at least one seed");
    merged.converged = legal_r.iter().all(|&a_r| block_best[a_r].0);
    merged.residual = legal_r.iter().map(|&a_r| block_best[a_r].2).fold(0.0, f64::max);
    Ok(merged)
}

impl BackupContext<'_> {
    #[allow(clippy::too_many_arguments)]
    fn seed(
        &self,
        kind: WarmStart,
        s: usize,
        g: usize,
        prev: Option<&[f64]>,
        legal_h: &[usize],
        legal_r: &[usize],
        scratch: &mut Scratch,
    ) -> Result<Vec<f64>> {
        Ok(match (kind, prev, self.expert) {
            (WarmStart::PreviousTurn, Some(q0), _) => {
                // only legal entries carry meaning
                let mut q = vec![0.0; q0.len()];
                let (nr, nt) = (self.spec.num_robot_actions(), self.spec.num_objectives());
                for &a_h in legal_h {
                    for &a_r in legal_r {
                        let base = (a_h * nr + a_r) * nt;
                        q[base..base + nt].copy_from_slice(&q0[base..base + nt]);
                    }
                }
                q
            }
            (WarmStart::Uninformed, _, _) => self.uninformed_cell(s, g, legal_h, legal_r),
            (WarmStart::Expert, _, Some(expert)) => {
                let n = self.spec.num_human_actions() * self.spec.num_robot_actions() * self.spec.num_objectives();
                let mut q = vec![0.0; n];
                let policy = &expert[s * n..(s + 1) * n];
                self.apply(s, &self.grid.weights(g), legal_h, legal_r, policy, scratch, &mut q)?;
                q
            }
            _ => self.reward_cell(s, legal_h, legal_r),
        })
    }

    fn iterate(
        &self,
        s: usize,
        g: usize,
        mut q: Vec<f64>,
        legal_h: &[usize],
        legal_r: &[usize],
        scratch: &mut Scratch,
    ) -> Result<CellBackup> {
        let b = self.grid.weights(g);
        let mut mapped = vec![0.0; q.len()];
        let d = self.settings.damping;
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < self.settings.max_iter {
            iterations += 1;
            self.apply(s, &b, legal_h, legal_r, &q, scratch, &mut mapped)?;
            residual = 0.0;
            for (qi, &fi) in q.iter_mut().zip(&mapped) {
                let next = (1.0 - d) * *qi + d * fi;
                residual = f64::max(residual, (next - *qi).abs());
                *qi = next;
            }
            if residual < self.settings.tol {
                break;
            }
        }
        let converged = residual < self.settings.tol;
        if converged && residual > 0.0 {
            // The map is piecewise constant in q, so the damped iterates close in
            // on F(q); keep that exact image when it is itself a fixed point.
            self.apply(s, &b, legal_h, legal_r, &q, scratch, &mut mapped)?;
            let mut image = vec![0.0; q.len()];
            self.apply(s, &b, legal_h, legal_r, &mapped, scratch, &mut image)?;
            let moved = max_abs_diff(&image, &mapped);
            if moved <= residual {
                q.copy_from_slice(&mapped);
                residual = moved;
            }
        }
        Ok(CellBackup { q, residual, iterations, converged })
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Per-turn convergence summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub turn: usize,
    pub max_residual: f64,
    pub max_iterations: usize,
    pub mean_iterations: f64,
    pub non_converged: usize,
    /// Iteration count per cell, indexed `s * grid_len + g`.
    pub iterations: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Ordered from the last turn back to the first.
    pub sweeps: Vec<SweepReport>,
    /// First few non-converged cells as (turn, state, grid index).
    pub non_converged_cells: Vec<(usize, usize, usize)>,
    pub non_converged_total: usize,
    /// Not serialized, so that artifacts of identical runs are identical.
    #[serde(skip)]
    pub wall_clock_secs: f64,
    pub settings: SolverSettings,
    pub grid_resolution: u32,
    pub model: RationalityModel,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.non_converged_total == 0
    }

    pub fn max_residual(&self) -> f64 {
        self.sweeps.iter().map(|s| s.max_residual).fold(0.0, f64::max)
    }
}

const MAX_LISTED_CELLS: usize = 64;

/// Continuation values `V_t(s, g; theta)` of a solved turn, laid out `[s][g][theta]`.
pub(crate) fn turn_values<'t, F>(
    spec: &GameSpec,
    grid: &BeliefGrid,
    model: &RationalityModel,
    cell_at: F,
) -> Result<Vec<f64>>
where
    F: Fn(usize, usize) -> (&'t [f64], &'t [f64]) + Sync,
{
    let nt = spec.num_objectives();
    let g_len = grid.len();
    let per_cell: Vec<Vec<f64>> = (0..spec.num_states() * g_len)
        .into_par_iter()
        .map_init(
            || Scratch::new(spec.num_human_actions(), nt),
            |scratch, idx| {
                let (s, g) = (idx / g_len, idx % g_len);
                let (legal_h, legal_r) = (spec.legal_actions(s, Actor::Human), spec.legal_actions(s, Actor::Robot));
                let (values, policy) = cell_at(s, g);
                let view = CellView {
                    values,
                    policy,
                    num_robot_actions: spec.num_robot_actions(),
                    num_objectives: nt,
                    legal_human: &legal_h,
                    legal_robot: &legal_r,
                };
                let mut out = vec![0.0; nt];
                view.value_with(&grid.weights(g), model, scratch, &mut out)?;
                Ok(out)
            },
        )
        .collect::<Result<_>>()?;
    Ok(per_cell.concat())
}

/// Backward induction over turns, solving every (state, grid point) cell's
/// fixed point in parallel within a turn.
pub fn solve_cirl(
    spec: &GameSpec,
    grid: &BeliefGrid,
    model: RationalityModel,
    settings: SolverSettings,
) -> Result<(QFunction, SolveReport)> {
    let violations = validate_game(spec);
    if !violations.is_empty() {
        return Err(CirlError::InvalidGame(violations));
    }
    if grid.dims() != spec.num_objectives() {
        return Err(CirlError::Usage(format!(
            "grid has {} dimensions but the game has {} objectives",
            grid.dims(),
            spec.num_objectives()
        )));
    }
    model.validate(spec.num_human_actions())?;
    settings.validate()?;

    let started = Instant::now();
    let expert = matches!(settings.warm_start, WarmStart::Expert | WarmStart::Best)
        .then(|| FullInfoSet::solve(spec, model))
        .transpose()?;
    let mut qf = QFunction::zeros(spec, grid, model);
    let g_len = grid.len();
    let cell_len = qf.cell_len();
    let mut tables: Vec<Vec<f64>> = vec![Vec::new(); spec.horizon];
    let mut sweeps = Vec::new();
    let mut listed = Vec::new();
    let mut non_converged_total = 0;
    let mut next_values: Option<Vec<f64>> = None;

    for t in (0..spec.horizon).rev() {
        let ctx = BackupContext {
            spec,
            grid,
            model,
            settings,
            next_values: next_values.as_deref(),
            expert: expert.as_ref().map(|f| f.turn(t)),
        };
        let prev = (t + 1 < spec.horizon).then(|| &tables[t + 1]);
        let results: Vec<CellBackup> = (0..spec.num_states() * g_len)
            .into_par_iter()
            .map_init(
                || Scratch::new(spec.num_human_actions(), spec.num_objectives()),
                |scratch, idx| {
                    let (s, g) = (idx / g_len, idx % g_len);
                    let (legal_h, legal_r) = ctx.legal(s);
                    let init = prev.map(|p| &p[idx * cell_len..(idx + 1) * cell_len]);
                    backup_cell_with(&ctx, s, g, init, &legal_h, &legal_r, scratch)
                },
            )
            .collect::<Result<_>>()?;

        let mut table = Vec::with_capacity(spec.num_states() * g_len * cell_len);
        let mut sweep = SweepReport {
            turn: t,
            max_residual: 0.0,
            max_iterations: 0,
            mean_iterations: 0.0,
            non_converged: 0,
            iterations: Vec::with_capacity(results.len()),
        };
        for (idx, r) in results.into_iter().enumerate() {
            sweep.max_residual = sweep.max_residual.max(r.residual);
            sweep.max_iterations = sweep.max_iterations.max(r.iterations);
            sweep.iterations.push(r.iterations as u32);
            if !r.converged {
                sweep.non_converged += 1;
                if listed.len() < MAX_LISTED_CELLS {
                    listed.push((t, idx / g_len, idx % g_len));
                }
            }
            table.extend_from_slice(&r.q);
        }
        sweep.mean_iterations =
            sweep.iterations.iter().map(|&i| i as f64).sum::<f64>() / sweep.iterations.len().max(1) as f64;
        non_converged_total += sweep.non_converged;
        sweeps.push(sweep);
        tables[t] = table;

        if t > 0 {
            let cur = &tables[t];
            next_values = Some(turn_values(spec, grid, &model, |s, g| {
                let start = (s * g_len + g) * cell_len;
                let c = &cur[start..start + cell_len];
                (c, c)
            })?);
        }
    }
    qf.tables = tables;
    let report = SolveReport {
        sweeps,
        non_converged_cells: listed,
        non_converged_total,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        settings,
        grid_resolution: grid.resolution(),
        model,
    };
    Ok((qf, report))
}

impl QFunction {
    /// View of a solved cell where the human policy is read from the cell itself.
    pub fn view<'a>(&'a self, legal: &'a (Vec<usize>, Vec<usize>), t: usize, s: usize, g: usize) -> CellView<'a> {
        let c = self.cell(t, s, g);
        CellView {
            values: c,
            policy: c,
            num_robot_actions: self.num_robot_actions,
            num_objectives: self.num_objectives,
            legal_human: &legal.0,
            legal_robot: &legal.1,
        }
    }

    /// The pragmatic robot's action at a grid point.
    pub fn robot_action(&self, spec: &GameSpec, grid: &BeliefGrid, t: usize, s: usize, g: usize) -> Result<usize> {
        let legal = (spec.legal_actions(s, Actor::Human), spec.legal_actions(s, Actor::Robot));
        robot_best_response(&self.view(&legal, t, s, g), &grid.weights(g), &self.model)
    }

    /// Robot action and continuation value per objective at a grid point.
    pub fn value_at(
        &self,
        spec: &GameSpec,
        grid: &BeliefGrid,
        t: usize,
        s: usize,
        g: usize,
    ) -> Result<(usize, Vec<f64>)> {
        let legal = (spec.legal_actions(s, Actor::Human), spec.legal_actions(s, Actor::Robot));
        self.view(&legal, t, s, g).continuation_value(&grid.weights(g), &self.model)
    }
}

/// Legal (human, robot) action lists for every state.
pub fn legal_table(spec: &GameSpec) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..spec.num_states()).map(|s| (spec.legal_actions(s, Actor::Human), spec.legal_actions(s, Actor::Robot))).collect()
}

#[cfg(test)]
mod tests;
