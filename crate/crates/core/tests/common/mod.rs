//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the engine's VoI or update code. The oracle
//! works on plain nested vectors and never normalizes a posterior: it uses
//! `Σ_y max_a Σ_θ b(θ) L(y|θ) U(θ,a)`, which equals the posterior value
//! because the answer probability cancels.

#![allow(dead_code)]

pub mod fake_llm;

use clarify_core::belief::{AnswerLikelihood, BeliefState, QuestionLikelihood};
use clarify_core::voi::UtilityMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// A random decision problem with a single question.
#[derive(Debug, Clone)]
pub struct Instance {
    pub belief: Vec<f64>,
    /// `lik[θ][y]`.
    pub lik: Vec<Vec<f64>>,
    /// `util[θ][a]`.
    pub util: Vec<Vec<f64>>,
}

impl Instance {
    pub fn belief_state(&self) -> BeliefState {
        BeliefState::new(self.belief.clone()).unwrap()
    }

    pub fn likelihood(&self) -> AnswerLikelihood {
        AnswerLikelihood::new().with(0, QuestionLikelihood::from_rows(self.lik.clone()).unwrap())
    }

    pub fn utility(&self) -> UtilityMatrix {
        UtilityMatrix::from_rows(self.util.clone()).unwrap()
    }
}

fn simplex<R: Rng>(rng: &mut R, n: usize, allow_zeros: bool) -> Vec<f64> {
    loop {
        let mut w: Vec<f64> = (0..n)
            .map(|_| if allow_zeros && rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f64>() })
            .collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            w.iter_mut().for_each(|x| *x /= s);
            return w;
        }
    }
}

/// Random instance with up to 6 hypotheses, 3 answers and 6 actions.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=6);
    let k = rng.gen_range(1..=3);
    let a = rng.gen_range(1..=6);
    let belief = simplex(&mut rng, n, true);
    let lik = (0..n).map(|_| simplex(&mut rng, k, true)).collect();
    let util = (0..n).map(|_| (0..a).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
    Instance { belief, lik, util }
}

pub fn oracle_value_now(inst: &Instance) -> f64 {
    let actions = inst.util[0].len();
    (0..actions)
        .map(|a| inst.belief.iter().zip(&inst.util).map(|(b, u)| b * u[a]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn oracle_posterior_value(inst: &Instance) -> f64 {
    let answers = inst.lik[0].len();
    let actions = inst.util[0].len();
    let mut total = 0.0;
    for y in 0..answers {
        let mut best = f64::NEG_INFINITY;
        for a in 0..actions {
            let v: f64 = (0..inst.belief.len()).map(|t| inst.belief[t] * inst.lik[t][y] * inst.util[t][a]).sum();
            best = best.max(v);
        }
        // An answer that cannot occur contributes exactly zero.
        let p: f64 = (0..inst.belief.len()).map(|t| inst.belief[t] * inst.lik[t][y]).sum();
        if p > 0.0 {
            total += best;
        }
    }
    total
}

pub fn oracle_voi(inst: &Instance) -> f64 {
    oracle_posterior_value(inst) - oracle_value_now(inst)
}

/// Explicit posterior for answer `y`, or `None` if `y` has probability zero.
pub fn oracle_posterior(inst: &Instance, y: usize) -> Option<Vec<f64>> {
    let w: Vec<f64> = inst.belief.iter().zip(&inst.lik).map(|(b, l)| b * l[y]).collect();
    let s: f64 = w.iter().sum();
    (s > 0.0).then(|| w.into_iter().map(|x| x / s).collect())
}

pub fn oracle_marginal(inst: &Instance) -> Vec<f64> {
    (0..inst.lik[0].len())
        .map(|y| inst.belief.iter().zip(&inst.lik).map(|(b, l)| b * l[y]).sum())
        .collect()
}

/// Every weight vector over `features` three-state factors, as the
/// `[-1, 1, 0]` coefficient for the state indices `[lower, higher, none]`.
pub fn all_weight_vectors(features: usize) -> Vec<Vec<i8>> {
    let mut out = vec![Vec::new()];
    for _ in 0..features {
        out = out
            .into_iter()
            .flat_map(|w: Vec<i8>| {
                [-1i8, 1, 0].into_iter().map(move |s| {
                    let mut v = w.clone();
                    v.push(s);
                    v
                })
            })
            .collect();
    }
    out
}
