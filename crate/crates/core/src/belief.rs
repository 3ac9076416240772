//! Robot beliefs over objectives, the Boltzmann human likelihood, and the
//! Bayesian belief transition built from them.

use serde::{Deserialize, Serialize};

use crate::error::{CirlError, Result};

const NORM_TOL: f64 = 1e-9;

/// Values within this distance of the maximum count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// A probability vector over the finite objective set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(CirlError::Numeric("belief over an empty objective set".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CirlError::Numeric(format!("invalid belief weights {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(CirlError::Numeric(format!("belief sums to {sum}")));
        }
        Ok(Belief(weights))
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(CirlError::Numeric(format!("cannot normalize weights {weights:?}")));
        }
        Belief::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Belief(vec![1.0 / n as f64; n])
    }

    pub fn point(n: usize, i: usize) -> Self {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Belief(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Index of the most probable objective (lowest index on ties).
    pub fn mode(&self) -> usize {
        argmax_first(&self.0)
    }
}

impl std::ops::Index<usize> for Belief {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// How the human turns action values into choice probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RationalityModel {
    /// Soft-max with rationality coefficient `beta`.
    Boltzmann { beta: f64 },
    /// Argmax with lowest-index tie-breaking, mixed with a likelihood floor.
    Rational { floor: f64 },
}

impl RationalityModel {
    pub const DEFAULT_FLOOR: f64 = 1e-9;

    pub fn boltzmann(beta: f64) -> Self {
        RationalityModel::Boltzmann { beta }
    }

    pub fn rational() -> Self {
        RationalityModel::Rational { floor: Self::DEFAULT_FLOOR }
    }

    pub fn validate(&self, num_human_actions: usize) -> Result<()> {
        match *self {
            RationalityModel::Boltzmann { beta } if !(beta.is_finite() && beta > 0.0) => {
                Err(CirlError::Usage(format!("beta must be finite and positive, got {beta}")))
            }
            RationalityModel::Rational { floor } if !(floor >= 0.0 && floor * (num_human_actions as f64) < 1.0) => {
                Err(CirlError::Usage(format!("floor {floor} must be in [0, 1/{num_human_actions})")))
            }
            _ => Ok(()),
        }
    }

    /// Short label used in reports and file names.
    pub fn label(&self) -> String {
        match *self {
            RationalityModel::Boltzmann { beta } => format!("beta={beta}"),
            RationalityModel::Rational { .. } => "rational".into(),
        }
    }
}

/// Lowest index whose value is within [`TIE_TOL`] of the maximum.
pub fn argmax_first(values: &[f64]) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values.iter().position(|&v| v >= best - TIE_TOL).unwrap_or(0)
}

/// Human choice probabilities over the entries of `q_row`.
pub fn boltzmann_policy(q_row: &[f64], model: &RationalityModel) -> Result<Vec<f64>> {
    let mut out = vec![0.0; q_row.len()];
    policy_into(q_row, model, &mut out)?;
    Ok(out)
}

/// Allocation-free form of [`boltzmann_policy`].
pub fn policy_into(q_row: &[f64], model: &RationalityModel, out: &mut [f64]) -> Result<()> {
    debug_assert_eq!(q_row.len(), out.len());
    if q_row.is_empty() {
        return Err(CirlError::Usage("policy over an empty action set".into()));
    }
    if q_row.iter().any(|q| q.is_nan()) {
        return Err(CirlError::Numeric(format!("NaN in action values {q_row:?}")));
    }
    match *model {
        RationalityModel::Boltzmann { beta } => {
            let max = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (o, &q) in out.iter_mut().zip(q_row) {
                *o = (beta * (q - max)).exp();
                z += *o;
            }
            for o in out.iter_mut() {
                *o /= z;
            }
        }
        RationalityModel::Rational { floor } => {
            let best = argmax_first(q_row);
            let z = 1.0 + floor * (q_row.len() - 1) as f64;
            for (i, o) in out.iter_mut().enumerate() {
                *o = if i == best { 1.0 } else { floor } / z;
            }
        }
    }
    Ok(())
}

/// Posterior `b'(theta) ∝ likelihood(theta) b(theta)`.
pub fn bayes_update(b: &Belief, likelihood: &[f64]) -> Result<Belief> {
    let mut out = vec![0.0; b.len()];
    bayes_into(b.as_slice(), likelihood, &mut out)?;
    Ok(Belief(out))
}

/// Allocation-free posterior over raw weights.
pub fn bayes_into(b: &[f64], likelihood: &[f64], out: &mut [f64]) -> Result<()> {
    if likelihood.len() != b.len() {
        return Err(CirlError::Usage(format!("likelihood has {} entries, belief has {}", likelihood.len(), b.len())));
    }
    if likelihood.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(CirlError::Numeric(format!("invalid likelihood {likelihood:?}")));
    }
    let mut z = 0.0;
    for ((o, &p), &l) in out.iter_mut().zip(b).zip(likelihood) {
        *o = p * l;
        z += *o;
    }
    if !(z > 0.0) {
        return Err(CirlError::InconsistentObservation);
    }
    for o in out.iter_mut() {
        *o /= z;
    }
    Ok(())
}

/// Deterministic belief transition `f_b`: the likelihood of the observed
/// human action under each objective is the human policy over that
/// objective's action values.
///
/// `q_by_objective[theta]` holds the values of the human's legal actions
/// (for the robot action already revealed), and `observed` indexes into it.
pub fn belief_transition(
    b: &Belief,
    observed: usize,
    q_by_objective: &[Vec<f64>],
    model: &RationalityModel,
) -> Result<Belief> {
    if q_by_objective.len() != b.len() {
        return Err(CirlError::Usage("one value row per objective required".into()));
    }
    let likelihood = q_by_objective
        .iter()
        .map(|row| {
            if observed >= row.len() {
                return Err(CirlError::Usage(format!("observed action {observed} out of range")));
            }
            boltzmann_policy(row, model).map(|p| p[observed])
        })
        .collect::<Result<Vec<_>>>()?;
    bayes_update(b, &likelihood)
}
