//! LLM-backed belief estimation over a chat-completions endpoint.
//!
//! Two modes, picked per task:
//!
//! * Attribute-style tasks (no factor structure): the model simulates each
//!   candidate's answer to a question in one batch prompt. Those answers
//!   become a likelihood table, and beliefs are updated with Bayes' rule.
//! * Factored tasks (flight): the model re-estimates a distribution over
//!   each factor's states from the full history (support examples plus any
//!   question/answer turns, real or hypothetical). The joint belief is the
//!   product of those per-factor distributions.
//!
//! Generated questions are mapped onto the task's closed question bank by
//! keyword overlap, so every question the engine scores has a known answer
//! schema.

pub mod client;
pub mod parse;
pub mod template;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use client::{ChatMessage, ChatRequest, ChatTransport, FnTransport, HttpTransport, LlmClient, ScriptedTransport};
pub use parse::{parse_strict_json_distribution, AdaptiveReply, BatchAnswer};
pub use template::PromptTemplate;

use super::{AdaptiveDecision, Capabilities, Confidence, Estimator, EstimatorError, Turn};
use crate::belief::{
    answer_marginal, bayes_update, AnswerDistribution, AnswerId, AnswerLikelihood, BeliefState, QuestionId,
    QuestionLikelihood,
};
use crate::task::{gen_questions, Question, TaskSpec};
use crate::voi::{best_action_value, ActionId};

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-4.1";
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: usize,
    pub timeout_ms: u64,
    pub max_concurrent: usize,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    /// Fail at construction when the key variable is unset.
    pub require_api_key: bool,
    /// Minimum spacing between request starts, shared by all threads.
    pub min_interval_ms: u64,
    pub retry_backoff_ms: u64,
    /// `η̂`: probability mass a simulated answer leaves for the other labels.
    pub answer_noise: f64,
    /// Candidate questions per turn.
    pub candidate_limit: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: DEFAULT_ENDPOINT.into(),
            model: DEFAULT_MODEL.into(),
            temperature: 0.0,
            max_retries: 1,
            timeout_ms: 60_000,
            max_concurrent: 4,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            require_api_key: true,
            min_interval_ms: 0,
            retry_backoff_ms: 250,
            answer_noise: 0.05,
            candidate_limit: 5,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |m: String| Err(EstimatorError::Config(m));
        if self.endpoint.trim().is_empty() {
            return bad("endpoint is empty".into());
        }
        if self.max_concurrent == 0 {
            return bad("max_concurrent must be at least 1".into());
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad(format!("temperature must be finite and non-negative, got {}", self.temperature));
        }
        if !(self.answer_noise > 0.0 && self.answer_noise < 0.5) {
            return bad(format!("answer_noise must be in (0, 0.5), got {}", self.answer_noise));
        }
        if self.candidate_limit == 0 {
            return bad("candidate_limit must be at least 1".into());
        }
        Ok(())
    }
}

fn bindings<const N: usize>(pairs: [(&'static str, String); N]) -> BTreeMap<&'static str, String> {
    pairs.into_iter().collect()
}

/// Renders `template`, asks for a distribution over `keys`, and returns it
/// renormalized. Replies that fail to parse, name the wrong keys or sum
/// outside the accepted window are retried; the last error is returned.
pub fn llm_estimate_distribution(
    client: &LlmClient,
    template: &PromptTemplate,
    bindings: &BTreeMap<&str, String>,
    keys: &[&str],
) -> Result<BeliefState, EstimatorError> {
    let prompt = template.render(bindings)?;
    let probs = client.complete_with(&[ChatMessage::user(prompt)], |reply| {
        let map = parse::parse_strict_json_distribution(reply, keys)?;
        parse::normalized_in_order(&map, keys)
    })?;
    Ok(BeliefState::new(probs)?)
}

/// Simulated answers to `question` for every candidate, as likelihood rows
/// (one per candidate, in order). Candidates whose line is missing or
/// malformed are re-asked; after the retry budget a still-missing row is a
/// `ParseFailure`, or `UnknownLabel` if the reply named a stranger.
pub fn llm_answer_likelihood(
    client: &LlmClient,
    template: &PromptTemplate,
    question: &Question,
    candidates: &[String],
) -> Result<Vec<Vec<f64>>, EstimatorError> {
    let noise = client.config().answer_noise;
    let k = question.answer_labels.len();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; candidates.len()];
    let mut pending: Vec<usize> = (0..candidates.len()).collect();
    let mut unknown = Vec::new();
    for _ in 0..=client.config().max_retries {
        let names: Vec<String> = pending.iter().map(|&i| candidates[i].clone()).collect();
        let prompt = template.render(&bindings([
            ("question", question.text.clone()),
            ("candidate_list", names.join(", ")),
            ("answer_labels", question.answer_labels.join(" / ")),
        ]))?;
        let reply = client.complete(&[ChatMessage::user(prompt)])?;
        let parsed = parse::parse_batch_answers(&reply, &names, &question.answer_labels);
        unknown = parsed.unknown;
        for (local, answer) in parsed.answers {
            rows[pending[local]] = Some(parse::likelihood_row(answer, k, noise));
        }
        pending.retain(|&i| rows[i].is_none());
        if pending.is_empty() {
            return Ok(rows.into_iter().map(|r| r.expect("all rows filled")).collect());
        }
    }
    if let Some(name) = unknown.into_iter().next() {
        return Err(EstimatorError::UnknownLabel(name));
    }
    Err(EstimatorError::ParseFailure(format!(
        "no usable answer for {}",
        pending.iter().map(|&i| candidates[i].as_str()).collect::<Vec<_>>().join(", ")
    )))
}

/// Asks for a final guess with a 1–100 confidence; returns the guess label
/// and the confidence divided by 100.
pub fn llm_verbalized_confidence(client: &LlmClient, messages: &[ChatMessage]) -> Result<(String, f64), EstimatorError> {
    client.complete_with(messages, parse::parse_confidence_reply)
}

fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| {
            let t = t.to_ascii_lowercase();
            match t.strip_suffix('s') {
                Some(stem) if stem.len() >= 3 && !stem.ends_with('s') => stem.to_string(),
                _ => t,
            }
        })
        .collect()
}

/// Maps free-form question text onto a closed question bank.
///
/// Words shared by more than half of the bank (template boilerplate such as
/// "is this true of the animal") are ignored. A bank question's score is the
/// share of its remaining keywords that appear in the text; the best
/// positive score wins, ties by lowest id.
pub struct QuestionMatcher {
    keywords: Vec<BTreeSet<String>>,
}

impl QuestionMatcher {
    pub fn new(questions: &[Question]) -> Self {
        let all: Vec<BTreeSet<String>> = questions.iter().map(|q| tokens(&q.text)).collect();
        let mut df: HashMap<&str, usize> = HashMap::new();
        for set in &all {
            for t in set {
                *df.entry(t.as_str()).or_default() += 1;
            }
        }
        let limit = questions.len() / 2;
        let keywords = all
            .iter()
            .map(|set| {
                let kept: BTreeSet<String> =
                    set.iter().filter(|t| questions.len() < 3 || df[t.as_str()] <= limit).cloned().collect();
                if kept.is_empty() {
                    set.clone()
                } else {
                    kept
                }
            })
            .collect();
        Self { keywords }
    }

    pub fn best_match(&self, text: &str, allowed: &BTreeSet<QuestionId>) -> Option<QuestionId> {
        let words = tokens(text);
        let mut best: Option<(QuestionId, f64)> = None;
        for &q in allowed {
            let Some(keys) = self.keywords.get(q) else { continue };
            let hits = keys.iter().filter(|k| words.contains(*k)).count();
            if hits == 0 {
                continue;
            }
            let score = hits as f64 / keys.len() as f64;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((q, score));
            }
        }
        best.map(|(q, _)| q)
    }
}

fn render_qa(task: &TaskSpec, dialogue: &[Turn]) -> String {
    if dialogue.is_empty() {
        return "(none yet)".into();
    }
    dialogue
        .iter()
        .map(|t| {
            let q = task.question(t.question);
            format!("Q: {}\nA: {}", q.text, q.answer_labels[t.answer])
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn conversation(task: &TaskSpec, dialogue: &[Turn]) -> Vec<ChatMessage> {
    let mut messages = vec![ChatMessage::user(task.initial_query.clone())];
    for t in dialogue {
        let q = task.question(t.question);
        messages.push(ChatMessage::assistant(q.text.clone()));
        messages.push(ChatMessage::user(q.answer_labels[t.answer].clone()));
    }
    messages
}

fn answer_set(task: &TaskSpec) -> String {
    task.actions.iter().map(|a| a.label.as_str()).collect::<Vec<_>>().join(", ")
}

fn option_text(task: &TaskSpec, index: usize) -> String {
    task.actions
        .get(index)
        .map(|a| a.label.split_once(": ").map_or(a.label.clone(), |(_, rest)| rest.to_string()))
        .unwrap_or_default()
}

/// Action whose label matches `guess`, ignoring case and separators; also
/// accepts the part of a label before ": " (e.g. "Flight 2").
fn resolve_action(task: &TaskSpec, guess: &str) -> Result<ActionId, EstimatorError> {
    let wanted = parse::normalize_label(guess);
    task.actions
        .iter()
        .find(|a| parse::normalize_label(&a.label) == wanted)
        .or_else(|| {
            task.actions.iter().find(|a| {
                a.label.split_once(": ").is_some_and(|(head, _)| parse::normalize_label(head) == wanted)
            })
        })
        .map(|a| a.id)
        .ok_or_else(|| EstimatorError::UnknownLabel(guess.to_string()))
}

enum Resolved {
    Guess(ActionId),
    Question(String),
}

/// The LLM backend. Prompts with identical text are sent once per estimator
/// and their parsed results reused, so lookahead over a fixed history does
/// not repeat calls.
pub struct LlmEstimator {
    client: LlmClient,
    id: String,
    likelihood_cache: Mutex<HashMap<String, QuestionLikelihood>>,
    distribution_cache: Mutex<HashMap<String, Vec<f64>>>,
}

impl LlmEstimator {
    pub fn new(client: LlmClient) -> Self {
        let id = format!("llm:{}", client.config().model);
        Self { client, id, likelihood_cache: Mutex::default(), distribution_cache: Mutex::default() }
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }

    /// Likelihood table for `question` over every hypothesis of `task`,
    /// from one batch prompt (plus retries for missing rows).
    pub fn answer_likelihood(&self, task: &TaskSpec, question: QuestionId) -> Result<QuestionLikelihood, EstimatorError> {
        let template = template::for_task(&task.name, "batch_answer")?;
        let q = task.question(question);
        let candidates: Vec<String> = task.hypotheses.iter().map(|h| h.label.clone()).collect();
        let key = format!("{}\u{1f}{}\u{1f}{}", template.id, q.text, candidates.join("\u{1e}"));
        if let Some(hit) = self.likelihood_cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let rows = llm_answer_likelihood(&self.client, &template, q, &candidates)?;
        let table = QuestionLikelihood::from_rows(rows)?;
        self.likelihood_cache.lock().expect("cache lock").insert(key, table.clone());
        Ok(table)
    }

    fn single_question(&self, task: &TaskSpec, question: QuestionId) -> Result<AnswerLikelihood, EstimatorError> {
        Ok(AnswerLikelihood::new().with(question, self.answer_likelihood(task, question)?))
    }

    /// Distribution over factor `f`'s states given `history`.
    fn factor_distribution(&self, task: &TaskSpec, factor: usize, history: &[Turn]) -> Result<Vec<f64>, EstimatorError> {
        let f = &task.factors[factor];
        let keys: Vec<&str> = f.states.iter().map(String::as_str).collect();
        let states = serde_json::to_string(&keys).map_err(|e| EstimatorError::ParseFailure(e.to_string()))?;
        let mut support = task.initial_query.trim_end().to_string();
        if !history.is_empty() {
            support.push('\n');
            support.push_str(&render_qa(task, history));
        }
        let (template, binds) = if history.is_empty() {
            (
                template::for_task(&task.name, "prior")?,
                bindings([("feature", f.name.clone()), ("history_ctx", support), ("states", states)]),
            )
        } else {
            (
                template::for_task(&task.name, "posterior")?,
                bindings([
                    ("feature", f.name.clone()),
                    ("history_ctx", support),
                    ("states", states),
                    ("option_a", option_text(task, 0)),
                    ("option_b", option_text(task, 1)),
                    ("option_c", option_text(task, 2)),
                ]),
            )
        };
        let prompt = template.render(&binds)?;
        if let Some(hit) = self.distribution_cache.lock().expect("cache lock").get(&prompt) {
            return Ok(hit.clone());
        }
        let belief = llm_estimate_distribution(&self.client, &template, &binds, &keys)?;
        let probs = belief.into_probs();
        self.distribution_cache.lock().expect("cache lock").insert(prompt, probs.clone());
        Ok(probs)
    }

    /// Joint belief as the product of per-factor estimates.
    fn factored_belief(&self, task: &TaskSpec, history: &[Turn]) -> Result<BeliefState, EstimatorError> {
        let marginals = (0..task.factors.len())
            .map(|f| self.factor_distribution(task, f, history))
            .collect::<Result<Vec<_>, _>>()?;
        let weights: Vec<f64> = (0..task.hypotheses.len())
            .map(|h| task.factor_states(h).iter().zip(&marginals).map(|(&s, m)| m[s]).product())
            .collect();
        Ok(crate::belief::normalize(&weights)?.with_turn(history.len()))
    }

    fn unasked(task: &TaskSpec, dialogue: &[Turn]) -> BTreeSet<QuestionId> {
        let asked: BTreeSet<QuestionId> = dialogue.iter().map(|t| t.question).collect();
        task.questions.iter().map(|q| q.id).filter(|q| !asked.contains(q)).collect()
    }

    /// Generated question texts for the next turn.
    fn generated_questions(&self, task: &TaskSpec, dialogue: &[Turn]) -> Result<Vec<String>, EstimatorError> {
        if task.factors.is_empty() {
            let template = template::for_task(&task.name, "question_generation")?;
            let prompt = template.render(&bindings([
                ("previous_qa", render_qa(task, dialogue)),
                ("initial_query", task.initial_query.clone()),
            ]))?;
            self.client.complete_with(&[ChatMessage::user(prompt)], |reply| {
                let items = parse::parse_numbered_list(reply);
                if items.is_empty() {
                    Err(EstimatorError::ParseFailure("expected a numbered list of questions".into()))
                } else {
                    Ok(items)
                }
            })
        } else {
            let template = template::for_task(&task.name, "candidate_question")?;
            let prompt = template.render(&bindings([
                ("support_history", task.initial_query.trim_end().to_string()),
                ("qa_context", if dialogue.is_empty() { String::new() } else { render_qa(task, dialogue) }),
                ("option_a", option_text(task, 0)),
                ("option_b", option_text(task, 1)),
                ("option_c", option_text(task, 2)),
            ]))?;
            let reply = self.client.complete(&[ChatMessage::user(prompt)])?;
            Ok(vec![reply.trim().to_string()])
        }
    }
}

impl Estimator for LlmEstimator {
    fn id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            supports_exact_likelihood: false,
            supports_verbalized_confidence: true,
            supports_adaptive_prompting: true,
        }
    }

    fn prior(&self, task: &TaskSpec) -> Result<BeliefState, EstimatorError> {
        if task.factors.is_empty() {
            Ok(task.prior.clone())
        } else {
            self.factored_belief(task, &[])
        }
    }

    fn answer_distribution(
        &self,
        task: &TaskSpec,
        _dialogue: &[Turn],
        belief: &BeliefState,
        question: QuestionId,
    ) -> Result<AnswerDistribution, EstimatorError> {
        if task.factors.is_empty() {
            return Ok(answer_marginal(belief, question, &self.single_question(task, question)?)?);
        }
        // The question asks about factor `question` directly; the user's
        // answer names its state with probability 1 − η̂.
        let k = task.factors[question].states.len();
        let noise = self.client.config().answer_noise;
        let mut marginal = vec![0.0; k];
        for (h, &p) in belief.probs().iter().enumerate() {
            if p > 0.0 {
                marginal[task.factor_states(h)[question]] += p;
            }
        }
        let probs: Vec<f64> = (0..k)
            .map(|y| marginal[y] * (1.0 - noise) + (1.0 - marginal[y]) * noise / (k - 1) as f64)
            .collect();
        let total: f64 = probs.iter().sum();
        Ok(AnswerDistribution::new(probs.into_iter().map(|p| p / total).collect())?)
    }

    fn posterior(
        &self,
        task: &TaskSpec,
        dialogue: &[Turn],
        belief: &BeliefState,
        question: QuestionId,
        answer: AnswerId,
    ) -> Result<BeliefState, EstimatorError> {
        if task.factors.is_empty() {
            return Ok(bayes_update(belief, question, answer, &self.single_question(task, question)?)?);
        }
        let mut history = dialogue.to_vec();
        history.push(Turn { question, answer });
        self.factored_belief(task, &history)
    }

    fn default_candidate_limit(&self, _task: &TaskSpec) -> usize {
        self.client.config().candidate_limit
    }

    fn candidates(
        &self,
        task: &TaskSpec,
        dialogue: &[Turn],
        belief: &BeliefState,
    ) -> Result<Vec<QuestionId>, EstimatorError> {
        let limit = self.default_candidate_limit(task);
        let mut allowed = Self::unasked(task, dialogue);
        if allowed.is_empty() {
            return Ok(Vec::new());
        }
        let matcher = QuestionMatcher::new(&task.questions);
        let mut chosen = Vec::new();
        for text in self.generated_questions(task, dialogue)? {
            if chosen.len() == limit {
                break;
            }
            if let Some(q) = matcher.best_match(&text, &allowed) {
                allowed.remove(&q);
                chosen.push(q);
            }
        }
        // Top up with the most informative remaining bank questions when the
        // model's suggestions did not map onto enough of them.
        if chosen.len() < limit {
            let asked: Vec<QuestionId> = dialogue.iter().map(|t| t.question).chain(chosen.iter().copied()).collect();
            chosen.extend(gen_questions(task, belief, &asked, limit - chosen.len()));
        }
        Ok(chosen)
    }

    fn confidence(&self, task: &TaskSpec, dialogue: &[Turn], _belief: &BeliefState) -> Result<Confidence, EstimatorError> {
        let template = template::for_task(&task.name, "confidence")?;
        let instruction = template.render(&bindings([("answer_set", answer_set(task))]))?;
        let mut messages = conversation(task, dialogue);
        messages.push(ChatMessage::user(instruction));
        let (value, guess) = self.client.complete_with(&messages, |reply| {
            let (guess, value) = parse::parse_confidence_reply(reply)?;
            Ok((value, resolve_action(task, &guess)?))
        })?;
        Ok(Confidence { value, guess: Some(guess) })
    }

    fn adaptive_decision(
        &self,
        task: &TaskSpec,
        dialogue: &[Turn],
        belief: &BeliefState,
    ) -> Result<AdaptiveDecision, EstimatorError> {
        let allowed = Self::unasked(task, dialogue);
        if allowed.is_empty() {
            let (a, _) = best_action_value(belief, &task.utility).map_err(|e| EstimatorError::Config(e.to_string()))?;
            return Ok(AdaptiveDecision::Guess(a));
        }
        let template = template::for_task(&task.name, "auto_stop")?;
        let system = template.render(&bindings([
            ("question_count", dialogue.len().to_string()),
            ("remaining_questions", task.k_max_default.saturating_sub(dialogue.len()).to_string()),
            ("answer_set", answer_set(task)),
            ("initial_query", task.initial_query.clone()),
        ]))?;
        let mut messages = vec![ChatMessage::system(system)];
        messages.extend(conversation(task, dialogue));
        let reply = self.client.complete_with(&messages, |reply| match parse::parse_adaptive_reply(reply)? {
            AdaptiveReply::Guess(label) => Ok(Resolved::Guess(resolve_action(task, &label)?)),
            AdaptiveReply::Question(text) => Ok(Resolved::Question(text)),
        })?;
        match reply {
            Resolved::Guess(action) => Ok(AdaptiveDecision::Guess(action)),
            Resolved::Question(text) => {
                let matched = QuestionMatcher::new(&task.questions).best_match(&text, &allowed);
                let asked: Vec<QuestionId> = dialogue.iter().map(|t| t.question).collect();
                let q = matched
                    .or_else(|| gen_questions(task, belief, &asked, 1).into_iter().next())
                    .expect("an unasked question exists");
                Ok(AdaptiveDecision::Ask(q))
            }
        }
    }
}
