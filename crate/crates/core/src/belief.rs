//! Exact probability bookkeeping over a finite hypothesis set.
//!
//! Beliefs, answer likelihoods and answer marginals are plain `f64` vectors
//! indexed by hypothesis id. Every constructor validates its input, so a
//! [`BeliefState`] that exists is always a proper distribution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for "sums to one" checks.
pub const SUM_TOLERANCE: f64 = 1e-9;

pub type HypothesisId = usize;
pub type QuestionId = usize;
pub type AnswerId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeliefError {
    #[error("all weights are zero")]
    AllZero,
    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("non-finite weight at index {index}")]
    NonFinite { index: usize },
    #[error("distribution sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("observed answer {answer} to question {question} has zero probability under the belief")]
    ZeroEvidence { question: QuestionId, answer: AnswerId },
    #[error("no likelihood row for question {question}, hypothesis {hypothesis}")]
    MissingLikelihoodRow { question: QuestionId, hypothesis: HypothesisId },
    #[error("answer {answer} is outside question {question}'s answer space")]
    UnknownAnswer { question: QuestionId, answer: AnswerId },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// A latent user state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: HypothesisId,
    pub label: String,
}

fn check_weights(weights: &[f64]) -> Result<f64, BeliefError> {
    let mut total = 0.0;
    for (index, &value) in weights.iter().enumerate() {
        if !value.is_finite() {
            return Err(BeliefError::NonFinite { index });
        }
        if value < 0.0 {
            return Err(BeliefError::NegativeWeight { index, value });
        }
        total += value;
    }
    if total <= 0.0 {
        return Err(BeliefError::AllZero);
    }
    Ok(total)
}

fn check_normalized(probs: &[f64]) -> Result<(), BeliefError> {
    let sum = check_weights(probs)?;
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(BeliefError::NotNormalized { sum });
    }
    Ok(())
}

/// Distribution over hypotheses, plus the number of updates applied so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    probs: Vec<f64>,
    turn: usize,
}

impl BeliefState {
    /// Wraps an already-normalized vector. Fails if it is not a distribution.
    pub fn new(probs: Vec<f64>) -> Result<Self, BeliefError> {
        check_normalized(&probs)?;
        Ok(Self { probs, turn: 0 })
    }

    pub fn uniform(n: usize) -> Result<Self, BeliefError> {
        normalize(&vec![1.0; n])
    }

    pub fn point_mass(n: usize, at: HypothesisId) -> Result<Self, BeliefError> {
        if at >= n {
            return Err(BeliefError::DimensionMismatch { expected: n, actual: at + 1 });
        }
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Ok(Self { probs, turn: 0 })
    }

    pub fn with_turn(mut self, turn: usize) -> Self {
        self.turn = turn;
        self
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn turn(&self) -> usize {
        self.turn
    }

    pub fn get(&self, id: HypothesisId) -> f64 {
        self.probs[id]
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        entropy(&self.probs)
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }
}

pub(crate) fn entropy(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

/// Rescales non-negative weights into a belief.
pub fn normalize(weights: &[f64]) -> Result<BeliefState, BeliefError> {
    let total = check_weights(weights)?;
    let probs = weights.iter().map(|w| w / total).collect();
    Ok(BeliefState { probs, turn: 0 })
}

/// Probability vector over one question's answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerDistribution {
    probs: Vec<f64>,
}

impl AnswerDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, BeliefError> {
        if probs.is_empty() {
            return Err(BeliefError::AllZero);
        }
        check_normalized(&probs)?;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// `p(y | q, θ)` for one question, dense over hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionLikelihood {
    num_answers: usize,
    /// Row-major: `rows[θ * num_answers + y]`.
    rows: Vec<f64>,
}

impl QuestionLikelihood {
    /// Builds a table from one answer distribution per hypothesis.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, BeliefError> {
        let num_answers = rows.first().map(Vec::len).unwrap_or(0);
        let mut flat = Vec::with_capacity(rows.len() * num_answers);
        for row in rows {
            if row.len() != num_answers {
                return Err(BeliefError::DimensionMismatch { expected: num_answers, actual: row.len() });
            }
            check_normalized(&row)?;
            flat.extend(row);
        }
        Ok(Self { num_answers, rows: flat })
    }

    pub fn num_answers(&self) -> usize {
        self.num_answers
    }

    pub fn num_hypotheses(&self) -> usize {
        if self.num_answers == 0 {
            0
        } else {
            self.rows.len() / self.num_answers
        }
    }

    pub fn row(&self, hypothesis: HypothesisId) -> &[f64] {
        let start = hypothesis * self.num_answers;
        &self.rows[start..start + self.num_answers]
    }

    pub fn prob(&self, hypothesis: HypothesisId, answer: AnswerId) -> f64 {
        self.rows[hypothesis * self.num_answers + answer]
    }
}

/// `p(y | q, θ)` for every question a task knows about.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnswerLikelihood {
    table: BTreeMap<QuestionId, QuestionLikelihood>,
}

impl AnswerLikelihood {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, question: QuestionId, likelihood: QuestionLikelihood) {
        self.table.insert(question, likelihood);
    }

    pub fn with(mut self, question: QuestionId, likelihood: QuestionLikelihood) -> Self {
        self.insert(question, likelihood);
        self
    }

    pub fn question(&self, question: QuestionId) -> Option<&QuestionLikelihood> {
        self.table.get(&question)
    }

    pub fn questions(&self) -> impl Iterator<Item = QuestionId> + '_ {
        self.table.keys().copied()
    }

    fn lookup(&self, belief: &BeliefState, question: QuestionId) -> Result<&QuestionLikelihood, BeliefError> {
        let table = self
            .table
            .get(&question)
            .ok_or(BeliefError::MissingLikelihoodRow { question, hypothesis: 0 })?;
        let rows = table.num_hypotheses();
        if rows < belief.len() {
            // Only hypotheses with mass actually need a row.
            if let Some(hypothesis) = (rows..belief.len()).find(|&h| belief.get(h) > 0.0) {
                return Err(BeliefError::MissingLikelihoodRow { question, hypothesis });
            }
        }
        Ok(table)
    }
}

/// Posterior after observing answer `answer` to `question`.
pub fn bayes_update(
    belief: &BeliefState,
    question: QuestionId,
    answer: AnswerId,
    likelihood: &AnswerLikelihood,
) -> Result<BeliefState, BeliefError> {
    let table = likelihood.lookup(belief, question)?;
    if answer >= table.num_answers() {
        return Err(BeliefError::UnknownAnswer { question, answer });
    }
    let weights: Vec<f64> = belief
        .probs
        .iter()
        .enumerate()
        .map(|(h, &p)| if p > 0.0 { p * table.prob(h, answer) } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(BeliefError::ZeroEvidence { question, answer });
    }
    let probs = weights.into_iter().map(|w| w / total).collect();
    Ok(BeliefState { probs, turn: belief.turn + 1 })
}

/// `p(y | q, b) = Σ_θ p(y | q, θ) b(θ)`.
pub fn answer_marginal(
    belief: &BeliefState,
    question: QuestionId,
    likelihood: &AnswerLikelihood,
) -> Result<AnswerDistribution, BeliefError> {
    let table = likelihood.lookup(belief, question)?;
    let mut probs = vec![0.0; table.num_answers()];
    for (h, &p) in belief.probs.iter().enumerate() {
        if p > 0.0 {
            for (slot, &l) in probs.iter_mut().zip(table.row(h)) {
                *slot += p * l;
            }
        }
    }
    // Drift from summing thousands of terms stays far below the tolerance,
    // but the marginal is renormalized so downstream checks see an exact sum.
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Err(BeliefError::AllZero);
    }
    probs.iter_mut().for_each(|p| *p /= total);
    AnswerDistribution::new(probs)
}

/// Most probable hypothesis; ties go to the lowest id.
pub fn max_belief(belief: &BeliefState) -> (HypothesisId, f64) {
    let mut best = (0, belief.probs[0]);
    for (h, &p) in belief.probs.iter().enumerate().skip(1) {
        if p > best.1 {
            best = (h, p);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_likelihood(p_yes: [f64; 2]) -> AnswerLikelihood {
        let rows = p_yes.iter().map(|&p| vec![p, 1.0 - p]).collect();
        AnswerLikelihood::new().with(0, QuestionLikelihood::from_rows(rows).unwrap())
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[2.0, 2.0]).unwrap().probs(), &[0.5, 0.5]);
        assert_eq!(normalize(&[1.0, 0.0, 0.0]).unwrap().probs(), &[1.0, 0.0, 0.0]);
        let b = normalize(&[0.54, 0.08]).unwrap();
        assert!(close(b.get(0), 27.0 / 31.0));
        assert!(close(b.get(1), 4.0 / 31.0));
    }

    #[test]
    fn normalize_errors() {
        assert_eq!(normalize(&[0.0, 0.0]), Err(BeliefError::AllZero));
        assert!(matches!(normalize(&[1.0, -0.1]), Err(BeliefError::NegativeWeight { index: 1, .. })));
        assert_eq!(normalize(&[f64::NAN, 1.0]), Err(BeliefError::NonFinite { index: 0 }));
        assert_eq!(normalize(&[1.0, f64::INFINITY]), Err(BeliefError::NonFinite { index: 1 }));
    }

    #[test]
    fn belief_new_rejects_unnormalized() {
        assert!(matches!(BeliefState::new(vec![0.5, 0.4]), Err(BeliefError::NotNormalized { .. })));
    }

    #[test]
    fn bayes_update_examples() {
        let l = two_state_likelihood([0.9, 0.2]);
        let b = BeliefState::new(vec![0.6, 0.4]).unwrap();
        let post = bayes_update(&b, 0, 0, &l).unwrap();
        assert!(close(post.get(0), 27.0 / 31.0));
        assert!(close(post.get(1), 4.0 / 31.0));
        assert_eq!(post.turn(), 1);

        let point = BeliefState::point_mass(2, 0).unwrap();
        assert_eq!(bayes_update(&point, 0, 1, &l).unwrap().probs(), &[1.0, 0.0]);

        let flat = two_state_likelihood([0.5, 0.5]);
        let b = BeliefState::new(vec![0.3, 0.7]).unwrap();
        let post = bayes_update(&b, 0, 0, &flat).unwrap();
        assert!(close(post.get(0), 0.3) && close(post.get(1), 0.7));
    }

    #[test]
    fn bayes_update_zero_evidence() {
        let l = two_state_likelihood([1.0, 1.0]);
        let b = BeliefState::uniform(2).unwrap();
        assert_eq!(
            bayes_update(&b, 0, 1, &l),
            Err(BeliefError::ZeroEvidence { question: 0, answer: 1 })
        );
    }

    #[test]
    fn bayes_update_unknown_question_or_answer() {
        let l = two_state_likelihood([0.9, 0.2]);
        let b = BeliefState::uniform(2).unwrap();
        assert!(matches!(bayes_update(&b, 3, 0, &l), Err(BeliefError::MissingLikelihoodRow { question: 3, .. })));
        assert_eq!(bayes_update(&b, 0, 2, &l), Err(BeliefError::UnknownAnswer { question: 0, answer: 2 }));
    }

    #[test]
    fn answer_marginal_examples() {
        let l = two_state_likelihood([0.9, 0.2]);
        let m = answer_marginal(&BeliefState::new(vec![0.6, 0.4]).unwrap(), 0, &l).unwrap();
        assert!(close(m.probs()[0], 0.62));

        let sep = two_state_likelihood([1.0, 0.0]);
        let m = answer_marginal(&BeliefState::uniform(2).unwrap(), 0, &sep).unwrap();
        assert_eq!(m.probs(), &[0.5, 0.5]);

        let m = answer_marginal(&BeliefState::point_mass(2, 0).unwrap(), 0, &l).unwrap();
        assert!(close(m.probs()[0], 0.9) && close(m.probs()[1], 0.1));
    }

    #[test]
    fn missing_rows_only_matter_where_belief_has_mass() {
        let partial = QuestionLikelihood::from_rows(vec![vec![0.9, 0.1]]).unwrap();
        let l = AnswerLikelihood::new().with(0, partial);
        let b = BeliefState::point_mass(2, 0).unwrap();
        assert!(answer_marginal(&b, 0, &l).is_ok());
        let b = BeliefState::uniform(2).unwrap();
        assert_eq!(
            answer_marginal(&b, 0, &l),
            Err(BeliefError::MissingLikelihoodRow { question: 0, hypothesis: 1 })
        );
    }

    #[test]
    fn max_belief_examples() {
        assert_eq!(max_belief(&BeliefState::new(vec![0.2, 0.5, 0.3]).unwrap()), (1, 0.5));
        assert_eq!(max_belief(&BeliefState::new(vec![0.5, 0.5]).unwrap()), (0, 0.5));
        let b = normalize(&[0.54, 0.08]).unwrap();
        let (id, p) = max_belief(&b);
        assert_eq!(id, 0);
        assert!((p - 0.87097).abs() < 1e-5);
    }

    #[test]
    fn likelihood_rows_must_be_distributions() {
        assert!(QuestionLikelihood::from_rows(vec![vec![0.5, 0.6]]).is_err());
        assert!(QuestionLikelihood::from_rows(vec![vec![0.5, 0.5], vec![1.0]]).is_err());
    }
}
