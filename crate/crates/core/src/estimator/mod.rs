//! Belief-estimation backends.
//!
//! The engine and the policies only talk to an [`Estimator`]. The exact
//! backend answers from the task's own likelihood table; the LLM backend
//! ([`llm`]) asks a chat model for the same quantities.

pub mod llm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{
    answer_marginal, bayes_update, max_belief, AnswerDistribution, AnswerId, BeliefError, BeliefState, QuestionId,
};
use crate::task::{gen_questions, TaskSpec};
use crate::voi::{ActionId, BeliefModel};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error("{0} is not available with this backend")]
    BackendUnavailable(&'static str),
    #[error("transport: {0}")]
    Transport(String),
    #[error("could not parse model reply: {0}")]
    ParseFailure(String),
    #[error("reply keys {found:?} do not match expected {expected:?}")]
    KeyMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("probabilities sum to {0}, outside the accepted window")]
    OutOfRangeSum(f64),
    #[error("value {value} for key {key:?} is outside [0, 1]")]
    ValueOutOfRange { key: String, value: f64 },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("confidence {0} is outside 1..=100")]
    ConfidenceOutOfRange(f64),
    #[error("API key variable {0} is not set")]
    MissingApiKey(String),
    #[error("template {template}: {message}")]
    Template { template: String, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// What a backend can do beyond the common interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub supports_exact_likelihood: bool,
    pub supports_verbalized_confidence: bool,
    pub supports_adaptive_prompting: bool,
}

/// One answered question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub question: QuestionId,
    pub answer: AnswerId,
}

/// Confidence in the current best guess.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confidence {
    /// In `[0, 1]`.
    pub value: f64,
    /// The backend's own guess, when it names one. `None` means "commit to
    /// the best action under the belief".
    pub guess: Option<ActionId>,
}

/// The model's own clarify-or-commit call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptiveDecision {
    Ask(QuestionId),
    Guess(ActionId),
}

/// A source of priors, posteriors and answer predictions.
///
/// `dialogue` is the history of answered questions; `belief` is the
/// backend's own belief after that history. Implementations must be safe to
/// share across concurrent episodes.
pub trait Estimator: Send + Sync {
    fn id(&self) -> &str;

    fn capabilities(&self) -> Capabilities;

    fn prior(&self, task: &TaskSpec) -> Result<BeliefState, EstimatorError>;

    /// `p(y | q, b)`.
    fn answer_distribution(
        &self,
        task: &TaskSpec,
        dialogue: &[Turn],
        belief: &BeliefState,
        question: QuestionId,
    ) -> Result<AnswerDistribution, EstimatorError>;

    /// Belief after `dialogue` followed by `(question, answer)`.
    fn posterior(
        &self,
        task: &TaskSpec,
        dialogue: &[Turn],
        belief: &BeliefState,
        question: QuestionId,
        answer: AnswerId,
    ) -> Result<BeliefState, EstimatorError>;

    /// Candidate questions for the next turn, never including asked ones.
    fn candidates(
        &self,
        task: &TaskSpec,
        dialogue: &[Turn],
        belief: &BeliefState,
    ) -> Result<Vec<QuestionId>, EstimatorError> {
        let asked: Vec<QuestionId> = dialogue.iter().map(|t| t.question).collect();
        Ok(gen_questions(task, belief, &asked, self.default_candidate_limit(task)))
    }

    /// How many candidates to consider per turn.
    fn default_candidate_limit(&self, task: &TaskSpec) -> usize {
        task.questions.len()
    }

    fn confidence(
        &self,
        _task: &TaskSpec,
        _dialogue: &[Turn],
        belief: &BeliefState,
    ) -> Result<Confidence, EstimatorError> {
        Ok(Confidence { value: max_belief(belief).1, guess: None })
    }

    fn adaptive_decision(
        &self,
        _task: &TaskSpec,
        _dialogue: &[Turn],
        _belief: &BeliefState,
    ) -> Result<AdaptiveDecision, EstimatorError> {
        Err(EstimatorError::BackendUnavailable("adaptive prompting"))
    }
}

/// Bayesian oracle over the task's true likelihood.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactEstimator;

impl Estimator for ExactEstimator {
    fn id(&self) -> &str {
        "exact"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            supports_exact_likelihood: true,
            supports_verbalized_confidence: false,
            supports_adaptive_prompting: false,
        }
    }

    fn prior(&self, task: &TaskSpec) -> Result<BeliefState, EstimatorError> {
        Ok(task.prior.clone())
    }

    fn answer_distribution(
        &self,
        task: &TaskSpec,
        _dialogue: &[Turn],
        belief: &BeliefState,
        question: QuestionId,
    ) -> Result<AnswerDistribution, EstimatorError> {
        Ok(answer_marginal(belief, question, &task.likelihood)?)
    }

    fn posterior(
        &self,
        task: &TaskSpec,
        _dialogue: &[Turn],
        belief: &BeliefState,
        question: QuestionId,
        answer: AnswerId,
    ) -> Result<BeliefState, EstimatorError> {
        Ok(bayes_update(belief, question, answer, &task.likelihood)?)
    }
}

/// `task.prior`, unchanged.
pub fn exact_prior(task: &TaskSpec) -> BeliefState {
    task.prior.clone()
}

/// Bayes update with the task's true likelihood.
pub fn exact_posterior(
    belief: &BeliefState,
    question: QuestionId,
    answer: AnswerId,
    task: &TaskSpec,
) -> Result<BeliefState, BeliefError> {
    bayes_update(belief, question, answer, &task.likelihood)
}

/// Adapts an estimator at a fixed point in the dialogue to the engine's
/// [`BeliefModel`], so lookahead runs unchanged against any backend.
pub struct EstimatorModel<'a> {
    pub estimator: &'a dyn Estimator,
    pub task: &'a TaskSpec,
    pub dialogue: &'a [Turn],
}

impl BeliefModel for EstimatorModel<'_> {
    fn answer_distribution(&self, belief: &BeliefState, question: QuestionId) -> crate::Result<AnswerDistribution> {
        Ok(self.estimator.answer_distribution(self.task, self.dialogue, belief, question)?)
    }

    fn update(&self, belief: &BeliefState, question: QuestionId, answer: usize) -> crate::Result<BeliefState> {
        Ok(self.estimator.posterior(self.task, self.dialogue, belief, question, answer)?)
    }
}
