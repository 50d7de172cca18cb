//! Benchmark environments and their ground-truth user simulators.
//!
//! A [`TaskSpec`] is immutable once built: hypotheses, actions, the utility
//! matrix, a closed question bank with its answer likelihood, and a prior.
//! The simulated user answers by sampling from that same likelihood, so
//! every quantity the exact backend computes is checkable.

mod attribute;
mod flight;
mod shop;

use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use attribute::{animal_task, load_attribute_task, medical_task, AttributeMatrix, DEFAULT_ATTRIBUTE_NOISE};
pub use flight::{
    flight_task_from_scenario, make_flight_task, FlightScenario, SupportRound, DEFAULT_FLIGHT_ANSWER_NOISE,
    DEFAULT_FLIGHT_CHOICE_NOISE, FEATURES as FLIGHT_FEATURES, NUM_FEATURES as FLIGHT_NUM_FEATURES,
    PREFERENCE_STATES,
};
pub use shop::{make_shop_task, shop_task_from_scenario, Product, ShopScenario, DEFAULT_CATALOG_SIZE};

use crate::belief::{
    bayes_update, entropy, AnswerId, AnswerLikelihood, BeliefState, Hypothesis, HypothesisId, QuestionId,
    SUM_TOLERANCE,
};
use crate::voi::{ActionId, UtilityMatrix};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("malformed attribute matrix: {0}")]
    MalformedMatrix(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("every hypothesis has zero prior probability")]
    DegeneratePrior,
    #[error("no products in category {0:?}")]
    EmptyCategory(String),
    #[error("invalid task: {0}")]
    Invalid(String),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A closed-ended question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: QuestionId,
    pub text: String,
    pub answer_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub id: ActionId,
    pub label: String,
}

/// How the simulated user's true state is chosen for an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruth {
    /// Drawn from the task prior with the episode's random stream.
    SampleFromPrior,
    Fixed(HypothesisId),
}

/// One coordinate of a product-structured hypothesis space.
///
/// When a task lists factors, hypothesis ids are mixed-radix numbers with
/// factor 0 as the least significant digit, and question `f` asks about
/// factor `f` directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub states: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    /// What the hypotheses are, in a few words ("animal", "diagnosis", ...).
    pub subject: String,
    pub hypotheses: Vec<Hypothesis>,
    pub actions: Vec<Action>,
    pub utility: UtilityMatrix,
    pub questions: Vec<Question>,
    pub likelihood: AnswerLikelihood,
    pub prior: BeliefState,
    pub initial_query: String,
    pub k_max_default: usize,
    pub ground_truth: GroundTruth,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub factors: Vec<Factor>,
}

impl TaskSpec {
    /// Construction-time checks shared by every task builder.
    pub fn validate(&self) -> Result<(), TaskError> {
        let n = self.hypotheses.len();
        if n == 0 {
            return Err(TaskError::Invalid("no hypotheses".into()));
        }
        if self.hypotheses.iter().enumerate().any(|(i, h)| h.id != i) {
            return Err(TaskError::Invalid("hypothesis ids must be dense 0..n".into()));
        }
        if self.actions.iter().enumerate().any(|(i, a)| a.id != i) {
            return Err(TaskError::Invalid("action ids must be dense 0..n".into()));
        }
        if self.questions.iter().enumerate().any(|(i, q)| q.id != i) {
            return Err(TaskError::Invalid("question ids must be dense 0..n".into()));
        }
        if self.prior.len() != n {
            return Err(TaskError::Invalid(format!("prior has {} entries for {n} hypotheses", self.prior.len())));
        }
        let sum: f64 = self.prior.probs().iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(TaskError::Invalid(format!("prior sums to {sum}")));
        }
        if self.utility.num_hypotheses() != n || self.utility.num_actions() != self.actions.len() {
            return Err(TaskError::Invalid(format!(
                "utility is {}x{}, expected {n}x{}",
                self.utility.num_hypotheses(),
                self.utility.num_actions(),
                self.actions.len()
            )));
        }
        if self.actions.is_empty() {
            return Err(TaskError::Invalid("no actions".into()));
        }
        for q in &self.questions {
            if q.answer_labels.len() < 2 {
                return Err(TaskError::Invalid(format!("question {} has fewer than two answers", q.id)));
            }
            let table = self
                .likelihood
                .question(q.id)
                .ok_or_else(|| TaskError::Invalid(format!("question {} has no likelihood", q.id)))?;
            if table.num_hypotheses() != n || table.num_answers() != q.answer_labels.len() {
                return Err(TaskError::Invalid(format!("likelihood for question {} does not cover the task", q.id)));
            }
        }
        if let GroundTruth::Fixed(h) = self.ground_truth {
            if h >= n {
                return Err(TaskError::Invalid(format!("fixed ground truth {h} out of range")));
            }
        }
        if !self.factors.is_empty() {
            let size: usize = self.factors.iter().map(|f| f.states.len()).product();
            if size != n || self.factors.len() != self.questions.len() {
                return Err(TaskError::Invalid("factor structure does not match hypotheses/questions".into()));
            }
        }
        Ok(())
    }

    pub fn question(&self, id: QuestionId) -> &Question {
        &self.questions[id]
    }

    pub fn hypothesis_label(&self, id: HypothesisId) -> &str {
        &self.hypotheses[id].label
    }

    pub fn action_label(&self, id: ActionId) -> &str {
        &self.actions[id].label
    }

    /// Draws the episode's true state.
    pub fn sample_truth<R: Rng + ?Sized>(&self, rng: &mut R) -> HypothesisId {
        match self.ground_truth {
            GroundTruth::Fixed(h) => h,
            GroundTruth::SampleFromPrior => sample_index(self.prior.probs(), rng),
        }
    }

    /// Decomposes a hypothesis id into factor states.
    pub fn factor_states(&self, hypothesis: HypothesisId) -> Vec<usize> {
        let mut rest = hypothesis;
        self.factors
            .iter()
            .map(|f| {
                let s = rest % f.states.len();
                rest /= f.states.len();
                s
            })
            .collect()
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Samples the simulated user's answer `y ~ p(y | q, θ*)`.
pub fn simulate_answer<R: Rng + ?Sized>(
    task: &TaskSpec,
    truth: HypothesisId,
    question: QuestionId,
    rng: &mut R,
) -> AnswerId {
    let table = task.likelihood.question(question).expect("validated task covers every question");
    sample_index(table.row(truth), rng)
}

/// Raw `U(θ*, a)`.
pub fn terminal_utility(task: &TaskSpec, truth: HypothesisId, action: ActionId) -> f64 {
    task.utility.get(truth, action)
}

/// Up to `m` not-yet-asked questions, ranked by expected entropy reduction
/// under `belief` (ties by lowest id). The ranking only pre-filters; the
/// policies re-score whatever comes back.
pub fn gen_questions(task: &TaskSpec, belief: &BeliefState, asked: &[QuestionId], m: usize) -> Vec<QuestionId> {
    let asked: BTreeSet<_> = asked.iter().copied().collect();
    let unasked: Vec<QuestionId> = task.questions.iter().map(|q| q.id).filter(|q| !asked.contains(q)).collect();
    if unasked.len() <= m {
        return unasked;
    }
    let prior_entropy = belief.entropy();
    let mut ranked: Vec<(QuestionId, f64)> = unasked
        .into_iter()
        .map(|q| (q, prior_entropy - expected_posterior_entropy(task, belief, q)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(m);
    ranked.into_iter().map(|(q, _)| q).collect()
}

fn expected_posterior_entropy(task: &TaskSpec, belief: &BeliefState, question: QuestionId) -> f64 {
    let Some(table) = task.likelihood.question(question) else {
        return belief.entropy();
    };
    (0..table.num_answers())
        .filter_map(|y| {
            let p: f64 = belief.probs().iter().enumerate().map(|(h, &b)| b * table.prob(h, y)).sum();
            if p <= 0.0 {
                return None;
            }
            let post = bayes_update(belief, question, y, &task.likelihood).ok()?;
            Some(p * entropy(post.probs()))
        })
        .sum()
}

/// Two hypotheses, one question that separates them and one that does not.
pub fn toy_task() -> TaskSpec {
    use crate::belief::QuestionLikelihood;
    let likelihood = AnswerLikelihood::new()
        .with(0, QuestionLikelihood::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).expect("static table"))
        .with(1, QuestionLikelihood::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).expect("static table"));
    let yes_no = || vec!["yes".to_string(), "no".to_string()];
    let task = TaskSpec {
        name: "toy".into(),
        subject: "pet".into(),
        hypotheses: vec![
            Hypothesis { id: 0, label: "cat".into() },
            Hypothesis { id: 1, label: "dog".into() },
        ],
        actions: vec![Action { id: 0, label: "cat".into() }, Action { id: 1, label: "dog".into() }],
        utility: UtilityMatrix::identity(2, 1.0),
        questions: vec![
            Question { id: 0, text: "Does it purr?".into(), answer_labels: yes_no() },
            Question { id: 1, text: "Was it born on a weekday?".into(), answer_labels: yes_no() },
        ],
        likelihood,
        prior: BeliefState::uniform(2).expect("non-empty"),
        initial_query: "Guess which pet I have.".into(),
        k_max_default: 4,
        ground_truth: GroundTruth::SampleFromPrior,
        factors: Vec::new(),
    };
    task.validate().expect("toy task is valid");
    task
}

/// Random stream for one episode's user simulation.
pub fn episode_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random stream for generating a seeded task instance; independent of
/// the episode stream with the same seed.
pub(crate) fn generator_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// The benchmark environments by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Toy,
    Animal,
    Medical,
    /// Animal and medical episodes side by side, scored as one task.
    #[serde(rename = "mixed20q")]
    Mixed20q,
    Flight,
    Shop,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] =
        [TaskKind::Toy, TaskKind::Animal, TaskKind::Medical, TaskKind::Mixed20q, TaskKind::Flight, TaskKind::Shop];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Toy => "toy",
            TaskKind::Animal => "animal",
            TaskKind::Medical => "medical",
            TaskKind::Mixed20q => "mixed20q",
            TaskKind::Flight => "flight",
            TaskKind::Shop => "shop",
        }
    }

    /// Names of the tasks an episode seed expands into.
    pub fn parts(self) -> &'static [&'static str] {
        match self {
            TaskKind::Mixed20q => &["animal", "medical"],
            TaskKind::Toy => &["toy"],
            TaskKind::Animal => &["animal"],
            TaskKind::Medical => &["medical"],
            TaskKind::Flight => &["flight"],
            TaskKind::Shop => &["shop"],
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| TaskError::UnknownTask(s.to_string()))
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Generator parameters shared by every task kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskParams {
    pub attribute_noise: f64,
    pub flight_choice_noise: f64,
    pub flight_answer_noise: f64,
    pub shop_catalog_size: usize,
}

impl Default for TaskParams {
    fn default() -> Self {
        Self {
            attribute_noise: DEFAULT_ATTRIBUTE_NOISE,
            flight_choice_noise: DEFAULT_FLIGHT_CHOICE_NOISE,
            flight_answer_noise: DEFAULT_FLIGHT_ANSWER_NOISE,
            shop_catalog_size: DEFAULT_CATALOG_SIZE,
        }
    }
}

/// Builds task instances per episode seed. Fixed tasks are built once and
/// shared; seeded tasks (flight, shop) are generated per seed.
#[derive(Debug)]
pub struct TaskFactory {
    kind: TaskKind,
    params: TaskParams,
    fixed: OnceLock<Result<Vec<Arc<TaskSpec>>, String>>,
}

impl TaskFactory {
    pub fn new(kind: TaskKind, params: TaskParams) -> Self {
        Self { kind, params, fixed: OnceLock::new() }
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn params(&self) -> &TaskParams {
        &self.params
    }

    pub fn instances(&self, seed: u64) -> Result<Vec<Arc<TaskSpec>>, TaskError> {
        let p = &self.params;
        match self.kind {
            TaskKind::Flight => Ok(vec![Arc::new(make_flight_task(seed, p.flight_choice_noise, p.flight_answer_noise)?)]),
            TaskKind::Shop => Ok(vec![Arc::new(make_shop_task(seed, p.shop_catalog_size)?)]),
            kind => self
                .fixed
                .get_or_init(|| {
                    let build = || -> Result<Vec<Arc<TaskSpec>>, TaskError> {
                        Ok(match kind {
                            TaskKind::Toy => vec![Arc::new(toy_task())],
                            TaskKind::Animal => vec![Arc::new(animal_task(p.attribute_noise)?)],
                            TaskKind::Medical => vec![Arc::new(medical_task(p.attribute_noise)?)],
                            _ => vec![
                                Arc::new(animal_task(p.attribute_noise)?),
                                Arc::new(medical_task(p.attribute_noise)?),
                            ],
                        })
                    };
                    build().map_err(|e| e.to_string())
                })
                .clone()
                .map_err(TaskError::Invalid),
        }
    }
}

/// Serialized form of a generated task: enough to rebuild it bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskManifest {
    Flight { answer_noise: f64, scenario: FlightScenario },
    Shop { scenario: ShopScenario },
}

impl TaskManifest {
    pub fn build(&self) -> Result<TaskSpec, TaskError> {
        match self {
            TaskManifest::Flight { answer_noise, scenario } => flight_task_from_scenario(scenario, *answer_noise),
            TaskManifest::Shop { scenario } => shop_task_from_scenario(scenario),
        }
    }

    pub fn to_json(&self) -> Result<String, TaskError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self, TaskError> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_task_is_valid() {
        let t = toy_task();
        assert_eq!(t.hypotheses.len(), 2);
        assert_eq!(t.questions.len(), 2);
    }

    #[test]
    fn gen_questions_no_truncation_and_exhaustion() {
        let t = toy_task();
        let b = t.prior.clone();
        assert_eq!(gen_questions(&t, &b, &[], 5), vec![0, 1]);
        assert_eq!(gen_questions(&t, &b, &[0], 5), vec![1]);
        assert!(gen_questions(&t, &b, &[0, 1], 5).is_empty());
    }

    #[test]
    fn gen_questions_prefers_informative_question() {
        // Entropy-reduction oracle: separating question removes ln 2 nats,
        // the uninformative one removes nothing.
        let t = toy_task();
        let b = t.prior.clone();
        let h0 = b.entropy();
        assert!((h0 - 2f64.ln()).abs() < 1e-12);
        assert!((expected_posterior_entropy(&t, &b, 0) - 0.0).abs() < 1e-12);
        assert!((expected_posterior_entropy(&t, &b, 1) - h0).abs() < 1e-12);
        assert_eq!(gen_questions(&t, &b, &[], 1), vec![0]);
    }

    #[test]
    fn simulate_answer_is_deterministic_per_seed() {
        let t = animal_task(0.05).unwrap();
        let draw = |seed| {
            let mut rng = episode_rng(seed);
            (0..30).map(|q| simulate_answer(&t, 7, q, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }

    #[test]
    fn simulate_answer_matches_maybe_rate() {
        // A 0.5 cell answers "yes" half the time regardless of noise.
        let t = animal_task(0.05).unwrap();
        let dog = t.hypotheses.iter().position(|h| h.label == "dog").unwrap();
        let q = t.questions.iter().position(|q| q.text.contains("eats plants")).unwrap();
        assert_eq!(t.likelihood.question(q).unwrap().row(dog), &[0.5, 0.5]);
        let mut rng = episode_rng(11);
        let yes = (0..10_000).filter(|_| simulate_answer(&t, dog, q, &mut rng) == 0).count();
        let rate = yes as f64 / 10_000.0;
        assert!((rate - 0.5).abs() <= 0.02, "rate {rate}");
    }

    #[test]
    fn noiseless_yes_cell_always_answers_yes() {
        let t = animal_task(0.0).unwrap();
        let dog = t.hypotheses.iter().position(|h| h.label == "dog").unwrap();
        let mut rng = episode_rng(0);
        assert!((0..200).all(|_| simulate_answer(&t, dog, 0, &mut rng) == 0));
    }

    #[test]
    fn terminal_utility_examples() {
        let med = medical_task(0.05).unwrap();
        assert_eq!(terminal_utility(&med, 3, 3), 10.0);
        let animal = animal_task(0.05).unwrap();
        assert_eq!(terminal_utility(&animal, 3, 4), 0.0);
    }

    #[test]
    fn task_kind_parses() {
        assert_eq!("Mixed20Q".parse::<TaskKind>().unwrap(), TaskKind::Mixed20q);
        assert!("webshop".parse::<TaskKind>().is_err());
    }

    #[test]
    fn factory_shares_fixed_tasks() {
        let f = TaskFactory::new(TaskKind::Mixed20q, TaskParams::default());
        let a = f.instances(0).unwrap();
        let b = f.instances(1).unwrap();
        assert_eq!(a.len(), 2);
        assert!(Arc::ptr_eq(&a[0], &b[0]));
        assert_eq!(a[0].name, "animal");
        assert_eq!(a[1].name, "medical");
    }

    #[test]
    fn validate_rejects_bad_prior() {
        let mut t = toy_task();
        t.prior = BeliefState::uniform(3).unwrap();
        assert!(t.validate().is_err());
    }
}
