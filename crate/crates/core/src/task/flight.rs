//! Flight preference elicitation.
//!
//! A user's latent reward is `w · x` with `w ∈ {−1, 0, +1}⁸` over eight
//! normalized flight features. The agent sees five support rounds (three
//! options each, plus the user's pick), may ask which direction the user
//! prefers on a feature, and must then pick one of three holdout options.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{generator_rng, Action, Factor, GroundTruth, Question, TaskError, TaskSpec};
use crate::belief::{normalize, AnswerLikelihood, BeliefError, Hypothesis, HypothesisId, QuestionLikelihood};
use crate::voi::UtilityMatrix;

pub const NUM_FEATURES: usize = 8;
pub const NUM_OPTIONS: usize = 3;
pub const SUPPORT_ROUNDS: usize = 5;
pub const NUM_HYPOTHESES: usize = 6561; // 3^8

pub const DEFAULT_FLIGHT_CHOICE_NOISE: f64 = 0.05;
pub const DEFAULT_FLIGHT_ANSWER_NOISE: f64 = 0.1;

pub const FEATURES: [&str; NUM_FEATURES] = [
    "price",
    "total_duration",
    "number_of_stops",
    "departure_time",
    "arrival_time",
    "layover_duration",
    "airline_rating",
    "legroom",
];

/// Answer labels for every preference question, indexed by factor state.
pub const PREFERENCE_STATES: [&str; 3] = ["lower", "higher", "none"];

/// Weight carried by each preference state.
const STATE_WEIGHTS: [i8; 3] = [-1, 1, 0];

pub type Features = [f64; NUM_FEATURES];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRound {
    pub options: [Features; NUM_OPTIONS],
    pub chosen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightScenario {
    pub seed: u64,
    pub choice_noise: f64,
    pub latent_weights: [i8; NUM_FEATURES],
    pub support_rounds: Vec<SupportRound>,
    pub holdout_options: [Features; NUM_OPTIONS],
}

fn check_noise(name: &str, value: f64) -> Result<(), TaskError> {
    if (0.0..0.5).contains(&value) {
        Ok(())
    } else {
        Err(TaskError::InvalidParameter(format!("{name} must be in [0, 0.5), got {value}")))
    }
}

pub(crate) fn reward(weights: &[i8; NUM_FEATURES], x: &Features) -> f64 {
    weights.iter().zip(x).map(|(&w, &v)| f64::from(w) * v).sum()
}

/// Index of the best option under `weights`; ties go to the lowest index.
pub(crate) fn preferred_option(weights: &[i8; NUM_FEATURES], options: &[Features; NUM_OPTIONS]) -> usize {
    let mut best = 0;
    let mut best_reward = reward(weights, &options[0]);
    for (i, x) in options.iter().enumerate().skip(1) {
        let r = reward(weights, x);
        if r > best_reward {
            best = i;
            best_reward = r;
        }
    }
    best
}

pub(crate) fn weights_of(hypothesis: HypothesisId) -> [i8; NUM_FEATURES] {
    let mut rest = hypothesis;
    let mut w = [0i8; NUM_FEATURES];
    for slot in &mut w {
        *slot = STATE_WEIGHTS[rest % 3];
        rest /= 3;
    }
    w
}

pub(crate) fn hypothesis_of(weights: &[i8; NUM_FEATURES]) -> HypothesisId {
    weights.iter().rev().fold(0, |acc, &w| {
        let state = STATE_WEIGHTS.iter().position(|&s| s == w).expect("weights are in {-1, 0, 1}");
        acc * 3 + state
    })
}

impl FlightScenario {
    /// Samples a user and their support history.
    pub fn generate(seed: u64, choice_noise: f64) -> Result<Self, TaskError> {
        check_noise("choice noise", choice_noise)?;
        let mut rng = generator_rng(seed);
        let mut latent_weights = [0i8; NUM_FEATURES];
        for w in &mut latent_weights {
            *w = STATE_WEIGHTS[rng.gen_range(0..3)];
        }
        let options = |rng: &mut rand_chacha::ChaCha8Rng| -> [Features; NUM_OPTIONS] {
            let mut out = [[0.0; NUM_FEATURES]; NUM_OPTIONS];
            for option in &mut out {
                for v in option.iter_mut() {
                    *v = rng.gen::<f64>();
                }
            }
            out
        };
        let mut support_rounds = Vec::with_capacity(SUPPORT_ROUNDS);
        for _ in 0..SUPPORT_ROUNDS {
            let opts = options(&mut rng);
            let noisy: f64 = rng.gen();
            let chosen = if noisy < choice_noise {
                rng.gen_range(0..NUM_OPTIONS)
            } else {
                preferred_option(&latent_weights, &opts)
            };
            support_rounds.push(SupportRound { options: opts, chosen });
        }
        let holdout_options = options(&mut rng);
        Ok(Self { seed, choice_noise, latent_weights, support_rounds, holdout_options })
    }

    /// `P(observed choices | w)` under the ε-uniform choice model.
    pub fn support_likelihood(&self, weights: &[i8; NUM_FEATURES]) -> f64 {
        let eps = self.choice_noise;
        self.support_rounds
            .iter()
            .map(|round| {
                let hit = if preferred_option(weights, &round.options) == round.chosen { 1.0 } else { 0.0 };
                (1.0 - eps) * hit + eps / NUM_OPTIONS as f64
            })
            .product()
    }

    fn validate(&self) -> Result<(), TaskError> {
        check_noise("choice noise", self.choice_noise)?;
        let in_range = |opts: &[Features; NUM_OPTIONS]| opts.iter().flatten().all(|v| (0.0..=1.0).contains(v));
        if self.support_rounds.iter().any(|r| r.chosen >= NUM_OPTIONS || !in_range(&r.options))
            || !in_range(&self.holdout_options)
        {
            return Err(TaskError::Invalid("flight features must lie in [0, 1] and choices in 0..3".into()));
        }
        if self.latent_weights.iter().any(|w| !(-1..=1).contains(w)) {
            return Err(TaskError::Invalid("latent weights must be in {-1, 0, 1}".into()));
        }
        Ok(())
    }
}

fn hypothesis_label(weights: &[i8; NUM_FEATURES]) -> String {
    FEATURES
        .iter()
        .zip(weights)
        .map(|(f, &w)| {
            let state = STATE_WEIGHTS.iter().position(|&s| s == w).expect("valid weight");
            format!("{f}={}", PREFERENCE_STATES[state])
        })
        .collect::<Vec<_>>()
        .join(",")
}

fn describe(option: &Features) -> String {
    FEATURES.iter().zip(option).map(|(f, v)| format!("{f} {v:.2}")).collect::<Vec<_>>().join(", ")
}

/// Builds the task for a scenario with answer-flip noise `answer_noise`.
pub fn flight_task_from_scenario(scenario: &FlightScenario, answer_noise: f64) -> Result<TaskSpec, TaskError> {
    scenario.validate()?;
    check_noise("answer noise", answer_noise)?;

    let weights: Vec<[i8; NUM_FEATURES]> = (0..NUM_HYPOTHESES).map(weights_of).collect();
    let prior_weights: Vec<f64> = weights.iter().map(|w| scenario.support_likelihood(w)).collect();
    let prior = normalize(&prior_weights).map_err(|e| match e {
        BeliefError::AllZero => TaskError::DegeneratePrior,
        other => TaskError::Invalid(other.to_string()),
    })?;

    let hypotheses = weights.iter().enumerate().map(|(id, w)| Hypothesis { id, label: hypothesis_label(w) }).collect();

    let mut likelihood = AnswerLikelihood::new();
    let mut questions = Vec::with_capacity(NUM_FEATURES);
    let off = answer_noise / (PREFERENCE_STATES.len() - 1) as f64;
    for (f, name) in FEATURES.iter().enumerate() {
        let rows = weights
            .iter()
            .map(|w| {
                let state = STATE_WEIGHTS.iter().position(|&s| s == w[f]).expect("valid weight");
                (0..PREFERENCE_STATES.len()).map(|y| if y == state { 1.0 - answer_noise } else { off }).collect()
            })
            .collect();
        likelihood.insert(f, QuestionLikelihood::from_rows(rows).map_err(|e| TaskError::Invalid(e.to_string()))?);
        questions.push(Question {
            id: f,
            text: format!("For {}, do you prefer lower values, higher values, or do you not care?", name.replace('_', " ")),
            answer_labels: PREFERENCE_STATES.iter().map(|s| s.to_string()).collect(),
        });
    }

    let rows = weights
        .iter()
        .map(|w| {
            let r: Vec<f64> = scenario.holdout_options.iter().map(|x| reward(w, x)).collect();
            let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                r.iter().map(|v| (v - lo) / (hi - lo)).collect()
            } else {
                // Indifferent user: every option is as good as the best.
                vec![1.0; NUM_OPTIONS]
            }
        })
        .collect();
    let utility = UtilityMatrix::from_rows(rows).map_err(|e| TaskError::Invalid(e.to_string()))?;

    let actions = scenario
        .holdout_options
        .iter()
        .enumerate()
        .map(|(id, x)| Action { id, label: format!("Flight {}: {}", id + 1, describe(x)) })
        .collect();

    let mut query = String::from("Help me pick flights. My preferences are fixed; infer them and choose.\n");
    for round in &scenario.support_rounds {
        query.push_str("Which flight is best?\n");
        for (i, x) in round.options.iter().enumerate() {
            query.push_str(&format!("Flight {}: {}\n", i + 1, describe(x)));
        }
        query.push_str(&format!("I prefer flight {}\n", round.chosen + 1));
    }

    let task = TaskSpec {
        name: "flight".into(),
        subject: "flight preference".into(),
        hypotheses,
        actions,
        utility,
        questions,
        likelihood,
        prior,
        initial_query: query,
        k_max_default: 4,
        ground_truth: GroundTruth::Fixed(hypothesis_of(&scenario.latent_weights)),
        factors: FEATURES
            .iter()
            .map(|f| Factor { name: f.to_string(), states: PREFERENCE_STATES.iter().map(|s| s.to_string()).collect() })
            .collect(),
    };
    task.validate()?;
    Ok(task)
}

/// Seeded scenario plus task, in one call.
pub fn make_flight_task(seed: u64, choice_noise: f64, answer_noise: f64) -> Result<TaskSpec, TaskError> {
    check_noise("answer noise", answer_noise)?;
    flight_task_from_scenario(&FlightScenario::generate(seed, choice_noise)?, answer_noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::max_belief;

    #[test]
    fn hypothesis_encoding_round_trips() {
        for h in [0, 1, 2, 3, 100, 6560] {
            assert_eq!(hypothesis_of(&weights_of(h)), h);
        }
        assert_eq!(weights_of(0), [-1; 8]);
    }

    #[test]
    fn truth_matches_latent_weights() {
        let s = FlightScenario::generate(4, 0.05).unwrap();
        let t = flight_task_from_scenario(&s, 0.1).unwrap();
        let GroundTruth::Fixed(h) = t.ground_truth else { panic!() };
        assert_eq!(weights_of(h), s.latent_weights);
        assert_eq!(t.factor_states(h).len(), NUM_FEATURES);
    }

    #[test]
    fn utility_is_min_max_normalized() {
        let t = make_flight_task(9, 0.05, 0.1).unwrap();
        let GroundTruth::Fixed(h) = t.ground_truth else { panic!() };
        let row = t.utility.row(h);
        let s = FlightScenario::generate(9, 0.05).unwrap();
        let r: Vec<f64> = s.holdout_options.iter().map(|x| reward(&s.latent_weights, x)).collect();
        let (lo, hi) = r.iter().fold((f64::MAX, f64::MIN), |(l, u), &v| (l.min(v), u.max(v)));
        if hi > lo {
            let best = r.iter().position(|&v| v == hi).unwrap();
            let worst = r.iter().position(|&v| v == lo).unwrap();
            assert_eq!(row[best], 1.0);
            assert_eq!(row[worst], 0.0);
            let mid = 3 - best - worst;
            assert!((row[mid] - (r[mid] - lo) / (hi - lo)).abs() < 1e-12);
            assert!(row[mid] > 0.0 && row[mid] < 1.0);
        }
    }

    #[test]
    fn noisy_prior_has_full_support() {
        let t = make_flight_task(1, 0.05, 0.1).unwrap();
        assert!(t.prior.probs().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn hard_constraints_can_pin_a_single_vector() {
        // Each round pits a one-hot option on feature f against an option
        // that is 0.5 on every feature, which forces a unique answer on
        // every coordinate when the choices are consistent.
        let truth: [i8; 8] = [1, -1, 0, 1, 0, -1, 1, 1];
        let mut rounds = Vec::new();
        for f in 0..NUM_FEATURES {
            let mut up = [0.5; NUM_FEATURES];
            up[f] = 1.0;
            let mut down = [0.5; NUM_FEATURES];
            down[f] = 0.0;
            let flat = [0.5; NUM_FEATURES];
            let options = [flat, up, down];
            rounds.push(SupportRound { chosen: preferred_option(&truth, &options), options });
        }
        let s = FlightScenario {
            seed: 0,
            choice_noise: 0.0,
            latent_weights: truth,
            support_rounds: rounds,
            holdout_options: [[0.1; 8], [0.5; 8], [0.9; 8]],
        };
        let t = flight_task_from_scenario(&s, 0.1).unwrap();
        let (h, p) = max_belief(&t.prior);
        assert_eq!(p, 1.0);
        assert_eq!(weights_of(h), truth);
    }

    #[test]
    fn noise_ranges() {
        assert!(make_flight_task(0, 0.5, 0.1).is_err());
        assert!(make_flight_task(0, 0.05, 0.6).is_err());
    }
}
