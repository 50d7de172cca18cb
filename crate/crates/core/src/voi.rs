//! Expected utility, value of information and the clarify-or-commit step.
//!
//! ```text
//! EU(a | b)      = Σ_θ b(θ) U(θ, a)
//! V(b)           = max_a EU(a | b)
//! V_post(b, q)   = Σ_y p(y | q, b) V(b_y)
//! VoI(q)         = V_post(b, q) − V(b)
//! NetVoI(q)      = VoI(q) − c(q)
//! ```
//!
//! The engine asks the question with the largest positive NetVoI and commits
//! to the best action as soon as no candidate clears its cost.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{
    answer_marginal, bayes_update, AnswerDistribution, AnswerLikelihood, BeliefState, HypothesisId,
    QuestionId,
};
use crate::error::Result;

pub type ActionId = usize;

/// Relative width of the band inside which two scores count as tied.
/// Scaled by the largest absolute utility so that ties survive `λ·U`.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VoiError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("action set is empty")]
    EmptyActionSet,
    #[error("utility at ({hypothesis}, {action}) is not finite")]
    NonFiniteUtility { hypothesis: HypothesisId, action: ActionId },
    #[error("per-question cost must be finite and non-negative, got {0}")]
    InvalidCost(f64),
    #[error("action {0} is out of range")]
    UnknownAction(ActionId),
}

/// `U(θ, a)`, row-major over hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityMatrix {
    num_hypotheses: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl UtilityMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, VoiError> {
        let num_actions = rows.first().map(Vec::len).unwrap_or(0);
        let num_hypotheses = rows.len();
        let mut values = Vec::with_capacity(num_hypotheses * num_actions);
        for (h, row) in rows.into_iter().enumerate() {
            if row.len() != num_actions {
                return Err(VoiError::DimensionMismatch { expected: num_actions, actual: row.len() });
            }
            if let Some(a) = row.iter().position(|v| !v.is_finite()) {
                return Err(VoiError::NonFiniteUtility { hypothesis: h, action: a });
            }
            values.extend(row);
        }
        Ok(Self { num_hypotheses, num_actions, values })
    }

    /// `scale · 1[a = θ]` over `n` hypotheses and `n` actions.
    pub fn identity(n: usize, scale: f64) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = scale;
        }
        Self { num_hypotheses: n, num_actions: n, values }
    }

    pub fn num_hypotheses(&self) -> usize {
        self.num_hypotheses
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, hypothesis: HypothesisId, action: ActionId) -> f64 {
        self.values[hypothesis * self.num_actions + action]
    }

    pub fn row(&self, hypothesis: HypothesisId) -> &[f64] {
        let start = hypothesis * self.num_actions;
        &self.values[start..start + self.num_actions]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            num_hypotheses: self.num_hypotheses,
            num_actions: self.num_actions,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Absolute tie band for scores measured in this matrix's units.
    pub fn tie_band(&self) -> f64 {
        TIE_TOLERANCE * self.max_abs()
    }

    /// Best achievable utility when the true state is `hypothesis`.
    pub fn best_for(&self, hypothesis: HypothesisId) -> f64 {
        self.row(hypothesis).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Communication cost. Constant by default, with optional per-question overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub per_question_cost: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<QuestionId, f64>,
}

impl CostModel {
    pub fn constant(cost: f64) -> Result<Self, VoiError> {
        if !cost.is_finite() || cost < 0.0 {
            return Err(VoiError::InvalidCost(cost));
        }
        Ok(Self { per_question_cost: cost, overrides: BTreeMap::new() })
    }

    pub fn with_override(mut self, question: QuestionId, cost: f64) -> Result<Self, VoiError> {
        if !cost.is_finite() || cost < 0.0 {
            return Err(VoiError::InvalidCost(cost));
        }
        self.overrides.insert(question, cost);
        Ok(self)
    }

    pub fn for_question(&self, question: QuestionId) -> f64 {
        self.overrides.get(&question).copied().unwrap_or(self.per_question_cost)
    }

    /// `c(H)`: total cost of the questions asked so far.
    pub fn dialogue_cost(&self, asked: &[QuestionId]) -> f64 {
        asked.iter().map(|&q| self.for_question(q)).sum()
    }

    pub fn is_constant(&self) -> bool {
        self.overrides.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyDecision {
    Clarify(QuestionId),
    Commit(ActionId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub question: QuestionId,
    pub voi: f64,
    pub net_voi: f64,
}

/// Everything one clarify-or-commit step looked at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiReport {
    pub scores: Vec<QuestionScore>,
    pub v_now: f64,
    pub chosen: PolicyDecision,
}

impl VoiReport {
    pub fn best(&self) -> Option<&QuestionScore> {
        match self.chosen {
            PolicyDecision::Clarify(q) => self.scores.iter().find(|s| s.question == q),
            PolicyDecision::Commit(_) => None,
        }
    }
}

/// Source of answer marginals and posteriors for the lookahead.
///
/// An [`AnswerLikelihood`] is the exact model; estimator backends provide
/// their own implementations.
pub trait BeliefModel {
    fn answer_distribution(&self, belief: &BeliefState, question: QuestionId) -> Result<AnswerDistribution>;
    fn update(&self, belief: &BeliefState, question: QuestionId, answer: usize) -> Result<BeliefState>;
}

impl BeliefModel for AnswerLikelihood {
    fn answer_distribution(&self, belief: &BeliefState, question: QuestionId) -> Result<AnswerDistribution> {
        Ok(answer_marginal(belief, question, self)?)
    }

    fn update(&self, belief: &BeliefState, question: QuestionId, answer: usize) -> Result<BeliefState> {
        Ok(bayes_update(belief, question, answer, self)?)
    }
}

fn check_dims(belief: &BeliefState, utility: &UtilityMatrix) -> Result<(), VoiError> {
    if belief.len() != utility.num_hypotheses() {
        return Err(VoiError::DimensionMismatch { expected: utility.num_hypotheses(), actual: belief.len() });
    }
    Ok(())
}

pub fn expected_utility(belief: &BeliefState, action: ActionId, utility: &UtilityMatrix) -> Result<f64, VoiError> {
    check_dims(belief, utility)?;
    if action >= utility.num_actions() {
        return Err(VoiError::UnknownAction(action));
    }
    Ok(belief
        .probs()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(h, &p)| p * utility.get(h, action))
        .sum())
}

/// `(argmax_a EU(a|b), V(b))`; ties go to the lowest action id.
pub fn best_action_value(belief: &BeliefState, utility: &UtilityMatrix) -> Result<(ActionId, f64), VoiError> {
    check_dims(belief, utility)?;
    if utility.num_actions() == 0 {
        return Err(VoiError::EmptyActionSet);
    }
    let mut eu = vec![0.0; utility.num_actions()];
    for (h, &p) in belief.probs().iter().enumerate() {
        if p > 0.0 {
            for (slot, &u) in eu.iter_mut().zip(utility.row(h)) {
                *slot += p * u;
            }
        }
    }
    let band = utility.tie_band();
    let mut best = (0, eu[0]);
    for (a, &v) in eu.iter().enumerate().skip(1) {
        if v > best.1 + band {
            best = (a, v);
        }
    }
    Ok(best)
}

/// `V_post(b, q)` against an arbitrary belief model. Answers with zero
/// marginal probability contribute nothing and are never updated on.
pub fn posterior_value_with<M: BeliefModel + ?Sized>(
    belief: &BeliefState,
    question: QuestionId,
    model: &M,
    utility: &UtilityMatrix,
) -> Result<f64> {
    let marginal = model.answer_distribution(belief, question)?;
    let mut total = 0.0;
    for (answer, &p) in marginal.probs().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let posterior = model.update(belief, question, answer)?;
        total += p * best_action_value(&posterior, utility)?.1;
    }
    Ok(total)
}

pub fn posterior_value(
    belief: &BeliefState,
    question: QuestionId,
    likelihood: &AnswerLikelihood,
    utility: &UtilityMatrix,
) -> Result<f64> {
    posterior_value_with(belief, question, likelihood, utility)
}

pub fn value_of_information_with<M: BeliefModel + ?Sized>(
    belief: &BeliefState,
    question: QuestionId,
    model: &M,
    utility: &UtilityMatrix,
) -> Result<f64> {
    let now = best_action_value(belief, utility)?.1;
    Ok(posterior_value_with(belief, question, model, utility)? - now)
}

pub fn value_of_information(
    belief: &BeliefState,
    question: QuestionId,
    likelihood: &AnswerLikelihood,
    utility: &UtilityMatrix,
) -> Result<f64> {
    value_of_information_with(belief, question, likelihood, utility)
}

/// `VoI − c` with the model's constant per-question cost.
pub fn net_voi(voi: f64, cost: &CostModel) -> f64 {
    voi - cost.per_question_cost
}

/// One pass of the clarify-or-commit rule over `candidates`.
///
/// Picks the candidate with the largest NetVoI (lowest question id among
/// ties). Commits when there are no candidates or when the best NetVoI is
/// not positive; "not positive" allows for the engine's tie band so that
/// rounding noise on an uninformative question never buys a turn.
pub fn voi_step_with<M: BeliefModel + ?Sized>(
    belief: &BeliefState,
    candidates: &[QuestionId],
    model: &M,
    utility: &UtilityMatrix,
    cost: &CostModel,
) -> Result<VoiReport> {
    let (best_action, v_now) = best_action_value(belief, utility)?;
    let mut ordered = candidates.to_vec();
    ordered.sort_unstable();
    ordered.dedup();

    let mut scores = Vec::with_capacity(ordered.len());
    for &question in &ordered {
        let voi = posterior_value_with(belief, question, model, utility)? - v_now;
        scores.push(QuestionScore { question, voi, net_voi: voi - cost.for_question(question) });
    }

    let band = utility.tie_band();
    let mut best: Option<&QuestionScore> = None;
    for score in &scores {
        match best {
            Some(b) if score.net_voi <= b.net_voi + band => {}
            _ => best = Some(score),
        }
    }
    let chosen = match best {
        Some(s) if s.net_voi > band => PolicyDecision::Clarify(s.question),
        _ => PolicyDecision::Commit(best_action),
    };
    Ok(VoiReport { scores, v_now, chosen })
}

pub fn voi_step(
    belief: &BeliefState,
    candidates: &[QuestionId],
    likelihood: &AnswerLikelihood,
    utility: &UtilityMatrix,
    cost: &CostModel,
) -> Result<VoiReport> {
    voi_step_with(belief, candidates, likelihood, utility, cost)
}

/// Runs the VoI policy for one episode. See [`crate::harness::run_episode`].
pub fn run_voi_policy(
    task: &crate::task::TaskSpec,
    estimator: &dyn crate::estimator::Estimator,
    cost: &CostModel,
    k_max: usize,
    seed: u64,
) -> crate::harness::EpisodeLog {
    crate::harness::run_episode(&crate::policy::PolicyConfig::Voi, task, estimator, cost, k_max, seed)
}
