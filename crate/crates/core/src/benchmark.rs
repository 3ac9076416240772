//! CIRL versus IRL across human rationality models.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::belief::RationalityModel;
use crate::error::Result;
use crate::evaluator::{expected_value_exact, expected_value_monte_carlo, Condition, MonteCarloEstimate, Solutions};
use crate::game::GameSpec;
use crate::grid::BeliefGrid;
use crate::solver::{literal_robot_policy, solve_cirl, FullInfoSet, SolverSettings};

/// Margin CIRL must clear over IRL for the moderately and highly rational humans.
pub const ORDERING_MARGIN: f64 = 0.05;
pub const RATIONAL_CEILING_TOL: f64 = 1e-6;

/// The benchmark's rationality models, in column order.
pub fn benchmark_models() -> Vec<RationalityModel> {
    vec![
        RationalityModel::boltzmann(1.0),
        RationalityModel::boltzmann(2.5),
        RationalityModel::boltzmann(5.0),
        RationalityModel::rational(),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub value: f64,
    pub per_objective: Vec<f64>,
    pub pruned_mass: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkColumn {
    pub model: RationalityModel,
    pub label: String,
    pub irl: ConditionResult,
    pub cirl: ConditionResult,
    /// Cells whose fixed point did not converge in the pragmatic solve.
    pub cirl_non_converged: usize,
    pub cirl_max_residual: f64,
    #[serde(skip)]
    pub solve_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config_hash: String,
    pub scenario: String,
    pub objectives: Vec<String>,
    pub grid_resolution: u32,
    pub horizon: usize,
    pub discount: f64,
    pub settings: SolverSettings,
    pub columns: Vec<BenchmarkColumn>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub episodes: usize,
    pub seed: u64,
}

/// Solves and evaluates both matched conditions for every model.
pub fn run_benchmark(
    spec: &GameSpec,
    grid: &BeliefGrid,
    models: &[RationalityModel],
    settings: SolverSettings,
    monte_carlo: Option<MonteCarloConfig>,
    config_hash: &str,
) -> Result<BenchmarkReport> {
    let mut columns = Vec::new();
    for &model in models {
        let started = std::time::Instant::now();
        let (q, report) = solve_cirl(spec, grid, model, settings)?;
        let full = FullInfoSet::solve(spec, model)?;
        let literal = literal_robot_policy(spec, grid, &full, model)?;
        let solve_secs = started.elapsed().as_secs_f64();
        let solutions = Solutions { grid: grid.clone(), cirl: Some(q), literal: Some(literal) };
        let evaluate = |condition: Condition| -> Result<ConditionResult> {
            let exact = expected_value_exact(&condition, &solutions, spec)?;
            let mc = monte_carlo
                .map(|mc| expected_value_monte_carlo(&condition, &solutions, spec, mc.episodes, mc.seed))
                .transpose()?;
            Ok(ConditionResult {
                value: exact.total,
                per_objective: exact.per_objective,
                pruned_mass: exact.pruned_mass,
                monte_carlo: mc,
            })
        };
        columns.push(BenchmarkColumn {
            model,
            label: model.label(),
            irl: evaluate(Condition::irl(model, &spec.name))?,
            cirl: evaluate(Condition::cirl(model, &spec.name))?,
            cirl_non_converged: report.non_converged_total,
            cirl_max_residual: report.max_residual(),
            solve_secs,
        });
    }
    Ok(BenchmarkReport {
        config_hash: config_hash.into(),
        scenario: spec.name.clone(),
        objectives: spec.objectives.clone(),
        grid_resolution: grid.resolution(),
        horizon: spec.horizon,
        discount: spec.discount,
        settings,
        columns,
    })
}

impl BenchmarkReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} | horizon {} | discount {} | grid m={} | config {}",
            self.scenario,
            self.horizon,
            self.discount,
            self.grid_resolution,
            &self.config_hash[..self.config_hash.len().min(12)]
        );
        let _ = write!(out, "{:<6}", "");
        for c in &self.columns {
            let _ = write!(out, " | {:>12}", c.label);
        }
        out.push('\n');
        for (name, pick) in [("IRL", 0), ("CIRL", 1)] {
            let _ = write!(out, "{name:<6}");
            for c in &self.columns {
                let v = if pick == 0 { c.irl.value } else { c.cirl.value };
                let _ = write!(out, " | {v:>12.4}");
            }
            out.push('\n');
        }
        let flagged: usize = self.columns.iter().map(|c| c.cirl_non_converged).sum();
        if flagged > 0 {
            let _ = writeln!(out, "warning: {flagged} non-converged fixed-point cells");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Directional checks on the CIRL and IRL rows. Returns the failures.
    pub fn ordering_failures(&self) -> Vec<String> {
        let mut failures = Vec::new();
        let mut boltzmann: Vec<&BenchmarkColumn> =
            self.columns.iter().filter(|c| matches!(c.model, RationalityModel::Boltzmann { .. })).collect();
        boltzmann.sort_by(|a, b| beta_of(&a.model).total_cmp(&beta_of(&b.model)));
        for c in &boltzmann {
            let beta = beta_of(&c.model);
            if c.cirl.value < c.irl.value {
                failures.push(format!("{}: CIRL {:.4} < IRL {:.4}", c.label, c.cirl.value, c.irl.value));
            }
            if beta >= 2.5 && c.cirl.value - c.irl.value < ORDERING_MARGIN {
                failures.push(format!(
                    "{}: CIRL margin {:.4} below {ORDERING_MARGIN}",
                    c.label,
                    c.cirl.value - c.irl.value
                ));
            }
        }
        let mut ordered: Vec<&BenchmarkColumn> = boltzmann.clone();
        ordered.extend(self.columns.iter().filter(|c| matches!(c.model, RationalityModel::Rational { .. })));
        for w in ordered.windows(2) {
            if w[1].cirl.value < w[0].cirl.value {
                failures.push(format!(
                    "CIRL not monotone: {} {:.4} > {} {:.4}",
                    w[0].label, w[0].cirl.value, w[1].label, w[1].cirl.value
                ));
            }
        }
        for c in self.columns.iter().filter(|c| matches!(c.model, RationalityModel::Rational { .. })) {
            if (c.cirl.value - 1.0).abs() > RATIONAL_CEILING_TOL {
                failures.push(format!("rational CIRL {:.8} is not 1", c.cirl.value));
            }
            if c.irl.value >= 1.0 {
                failures.push(format!("rational IRL {:.8} is not below 1", c.irl.value));
            }
        }
        failures
    }
}

fn beta_of(model: &RationalityModel) -> f64 {
    match *model {
        RationalityModel::Boltzmann { beta } => beta,
        RationalityModel::Rational { .. } => f64::INFINITY,
    }
}
