//! Clarify-or-commit policies: the VoI rule and the comparison baselines.
//!
//! Every policy sees the same [`DecisionContext`] and returns a
//! [`PolicyDecision`]. The fixed-round and confidence baselines pick their
//! questions with the same VoI scoring as the VoI policy (at zero cost), so
//! they differ from it only in when they stop.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::belief::{BeliefState, QuestionId};
use crate::estimator::{AdaptiveDecision, Estimator, EstimatorModel, Turn};
use crate::task::TaskSpec;
use crate::voi::{best_action_value, voi_step_with, CostModel, PolicyDecision, VoiReport};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyConfig {
    /// Commit immediately.
    NoQuestion,
    /// Ask exactly `k` questions, then commit.
    FixedRound { k: usize },
    /// Ask until confidence in the best guess reaches `tau`. Thresholds
    /// above 1 are accepted and never trigger a commit.
    ConfidenceThreshold { tau: f64 },
    /// Let the model decide for itself (LLM backend only).
    AdaptivePrompt,
    /// Ask while the best question's net value of information is positive.
    Voi,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid policy: {0}")]
pub struct PolicyError(pub String);

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        match *self {
            PolicyConfig::ConfidenceThreshold { tau } if !(tau.is_finite() && tau >= 0.0) => {
                Err(PolicyError(format!("tau must be finite and non-negative, got {tau}")))
            }
            _ => Ok(()),
        }
    }

    /// Machine name: `no_question`, `fixed_round`, `confidence`, `adaptive`, `voi`.
    pub fn name(&self) -> &'static str {
        match self {
            PolicyConfig::NoQuestion => "no_question",
            PolicyConfig::FixedRound { .. } => "fixed_round",
            PolicyConfig::ConfidenceThreshold { .. } => "confidence",
            PolicyConfig::AdaptivePrompt => "adaptive",
            PolicyConfig::Voi => "voi",
        }
    }

    /// The policy's own parameter (`k` or `τ`), if it has one.
    pub fn param(&self) -> Option<f64> {
        match *self {
            PolicyConfig::FixedRound { k } => Some(k as f64),
            PolicyConfig::ConfidenceThreshold { tau } => Some(tau),
            _ => None,
        }
    }

    /// Parses `name` plus optional `k` / `tau` as given on a command line.
    pub fn from_parts(name: &str, k: Option<usize>, tau: Option<f64>) -> Result<Self, PolicyError> {
        let policy = match name.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "no_question" | "none" => PolicyConfig::NoQuestion,
            "fixed_round" | "fixed" => {
                PolicyConfig::FixedRound { k: k.ok_or_else(|| PolicyError("fixed_round needs k".into()))? }
            }
            "confidence" | "confidence_threshold" => PolicyConfig::ConfidenceThreshold {
                tau: tau.ok_or_else(|| PolicyError("confidence needs tau".into()))?,
            },
            "adaptive" | "adaptive_prompt" => PolicyConfig::AdaptivePrompt,
            "voi" => PolicyConfig::Voi,
            other => return Err(PolicyError(format!("unknown policy {other:?}"))),
        };
        policy.validate()?;
        Ok(policy)
    }
}

impl fmt::Display for PolicyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PolicyConfig::NoQuestion => f.write_str("No Question"),
            PolicyConfig::FixedRound { k } => write!(f, "Fixed Round (k={k})"),
            PolicyConfig::ConfidenceThreshold { tau } => write!(f, "Confidence (tau={tau})"),
            PolicyConfig::AdaptivePrompt => f.write_str("Adaptive"),
            PolicyConfig::Voi => f.write_str("VoI"),
        }
    }
}

/// Everything a policy may look at when deciding a turn.
pub struct DecisionContext<'a> {
    pub task: &'a TaskSpec,
    pub estimator: &'a dyn Estimator,
    pub dialogue: &'a [Turn],
    pub belief: &'a BeliefState,
    pub cost: &'a CostModel,
}

impl DecisionContext<'_> {
    fn model(&self) -> EstimatorModel<'_> {
        EstimatorModel { estimator: self.estimator, task: self.task, dialogue: self.dialogue }
    }

    fn commit_best(&self) -> Result<PolicyDecision> {
        Ok(PolicyDecision::Commit(best_action_value(self.belief, &self.task.utility)?.0))
    }

    fn candidates(&self) -> Result<Vec<QuestionId>> {
        Ok(self.estimator.candidates(self.task, self.dialogue, self.belief)?)
    }

    /// The candidate with the largest VoI, asked whatever its value; `None`
    /// when there is nothing left to ask.
    fn max_voi_question(&self) -> Result<Option<(QuestionId, VoiReport)>> {
        let candidates = self.candidates()?;
        if candidates.is_empty() {
            return Ok(None);
        }
        let free = CostModel::constant(0.0)?;
        let mut report = voi_step_with(self.belief, &candidates, &self.model(), &self.task.utility, &free)?;
        let band = self.task.utility.tie_band();
        let mut best = &report.scores[0];
        for s in &report.scores[1..] {
            if s.voi > best.voi + band {
                best = s;
            }
        }
        let question = best.question;
        report.chosen = PolicyDecision::Clarify(question);
        Ok(Some((question, report)))
    }
}

impl PolicyConfig {
    /// One turn of the policy. The report is the VoI scoring the decision
    /// was based on, when the policy computed one.
    pub fn decide(&self, ctx: &DecisionContext<'_>) -> Result<(PolicyDecision, Option<VoiReport>)> {
        let turn = ctx.dialogue.len();
        match *self {
            PolicyConfig::NoQuestion => Ok((ctx.commit_best()?, None)),
            PolicyConfig::FixedRound { k } => {
                if turn >= k {
                    return Ok((ctx.commit_best()?, None));
                }
                match ctx.max_voi_question()? {
                    Some((q, report)) => Ok((PolicyDecision::Clarify(q), Some(report))),
                    None => Ok((ctx.commit_best()?, None)),
                }
            }
            PolicyConfig::ConfidenceThreshold { tau } => {
                let confidence = ctx.estimator.confidence(ctx.task, ctx.dialogue, ctx.belief)?;
                if confidence.value >= tau {
                    let decision = match confidence.guess {
                        Some(a) => PolicyDecision::Commit(a),
                        None => ctx.commit_best()?,
                    };
                    return Ok((decision, None));
                }
                match ctx.max_voi_question()? {
                    Some((q, report)) => Ok((PolicyDecision::Clarify(q), Some(report))),
                    None => Ok((ctx.commit_best()?, None)),
                }
            }
            PolicyConfig::AdaptivePrompt => {
                match ctx.estimator.adaptive_decision(ctx.task, ctx.dialogue, ctx.belief)? {
                    AdaptiveDecision::Ask(q) => Ok((PolicyDecision::Clarify(q), None)),
                    AdaptiveDecision::Guess(a) => Ok((PolicyDecision::Commit(a), None)),
                }
            }
            PolicyConfig::Voi => {
                let candidates = ctx.candidates()?;
                let report = voi_step_with(ctx.belief, &candidates, &ctx.model(), &ctx.task.utility, ctx.cost)?;
                Ok((report.chosen, Some(report)))
            }
        }
    }
}

/// `no_question_policy`: commit to the best action now.
pub fn no_question_policy(ctx: &DecisionContext<'_>) -> Result<PolicyDecision> {
    Ok(PolicyConfig::NoQuestion.decide(ctx)?.0)
}

pub fn fixed_round_policy(k: usize, ctx: &DecisionContext<'_>) -> Result<PolicyDecision> {
    Ok(PolicyConfig::FixedRound { k }.decide(ctx)?.0)
}

pub fn confidence_threshold_policy(tau: f64, ctx: &DecisionContext<'_>) -> Result<PolicyDecision> {
    Ok(PolicyConfig::ConfidenceThreshold { tau }.decide(ctx)?.0)
}

pub fn adaptive_prompt_policy(ctx: &DecisionContext<'_>) -> Result<PolicyDecision> {
    Ok(PolicyConfig::AdaptivePrompt.decide(ctx)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{EstimatorError, ExactEstimator};
    use crate::task::{animal_task, toy_task};
    use crate::Error;

    fn ctx<'a>(task: &'a TaskSpec, belief: &'a BeliefState, dialogue: &'a [Turn], cost: &'a CostModel) -> DecisionContext<'a> {
        DecisionContext { task, estimator: &ExactEstimator, dialogue, belief, cost }
    }

    #[test]
    fn no_question_commits_to_lowest_id_under_uniform_prior() {
        let t = animal_task(0.05).unwrap();
        let c = CostModel::constant(0.0).unwrap();
        assert_eq!(no_question_policy(&ctx(&t, &t.prior, &[], &c)).unwrap(), PolicyDecision::Commit(0));
    }

    #[test]
    fn fixed_round_asks_until_k() {
        let t = toy_task();
        let c = CostModel::constant(0.0).unwrap();
        assert_eq!(fixed_round_policy(2, &ctx(&t, &t.prior, &[], &c)).unwrap(), PolicyDecision::Clarify(0));
        let one = [Turn { question: 0, answer: 0 }];
        let b = BeliefState::point_mass(2, 0).unwrap();
        // Nothing left to learn, but the budget says ask.
        assert_eq!(fixed_round_policy(2, &ctx(&t, &b, &one, &c)).unwrap(), PolicyDecision::Clarify(1));
        let two = [Turn { question: 0, answer: 0 }, Turn { question: 1, answer: 1 }];
        assert_eq!(fixed_round_policy(2, &ctx(&t, &b, &two, &c)).unwrap(), PolicyDecision::Commit(0));
        assert_eq!(fixed_round_policy(0, &ctx(&t, &t.prior, &[], &c)).unwrap(), PolicyDecision::Commit(0));
    }

    #[test]
    fn confidence_threshold_examples() {
        let t = toy_task();
        let c = CostModel::constant(0.0).unwrap();
        let sure = BeliefState::new(vec![0.95, 0.05]).unwrap();
        assert_eq!(confidence_threshold_policy(0.9, &ctx(&t, &sure, &[], &c)).unwrap(), PolicyDecision::Commit(0));
        let unsure = BeliefState::new(vec![0.6, 0.4]).unwrap();
        assert_eq!(confidence_threshold_policy(0.9, &ctx(&t, &unsure, &[], &c)).unwrap(), PolicyDecision::Clarify(0));
        assert_eq!(confidence_threshold_policy(0.0, &ctx(&t, &unsure, &[], &c)).unwrap(), PolicyDecision::Commit(0));
    }

    #[test]
    fn adaptive_unavailable_under_exact_backend() {
        let t = toy_task();
        let c = CostModel::constant(0.0).unwrap();
        let err = adaptive_prompt_policy(&ctx(&t, &t.prior, &[], &c)).unwrap_err();
        assert!(matches!(err, Error::Estimator(EstimatorError::BackendUnavailable(_))));
    }

    #[test]
    fn voi_policy_uses_cost() {
        let t = toy_task();
        let cheap = CostModel::constant(0.1).unwrap();
        let (d, report) = PolicyConfig::Voi.decide(&ctx(&t, &t.prior, &[], &cheap)).unwrap();
        assert_eq!(d, PolicyDecision::Clarify(0));
        assert!((report.unwrap().best().unwrap().net_voi - 0.4).abs() < 1e-12);
        let dear = CostModel::constant(0.6).unwrap();
        assert_eq!(PolicyConfig::Voi.decide(&ctx(&t, &t.prior, &[], &dear)).unwrap().0, PolicyDecision::Commit(0));
    }

    #[test]
    fn parse_and_display() {
        assert_eq!(PolicyConfig::from_parts("fixed-round", Some(3), None).unwrap(), PolicyConfig::FixedRound { k: 3 });
        assert!(PolicyConfig::from_parts("fixed_round", None, None).is_err());
        assert!(PolicyConfig::from_parts("confidence", None, Some(-1.0)).is_err());
        assert_eq!(PolicyConfig::ConfidenceThreshold { tau: 0.9 }.to_string(), "Confidence (tau=0.9)");
        let json = serde_json::to_string(&PolicyConfig::FixedRound { k: 5 }).unwrap();
        assert_eq!(json, r#"{"kind":"fixed_round","k":5}"#);
    }
}
