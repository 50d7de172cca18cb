//! Ambiguous shopping: the user names a product category and the agent must
//! buy the exact item they had in mind.
//!
//! Four attributes are hidden from the initial request (color, size, brand,
//! price band). A purchase scores the fraction of those four attributes it
//! gets right, so the exact product scores 1.0.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{generator_rng, Action, GroundTruth, Question, TaskError, TaskSpec};
use crate::belief::{AnswerLikelihood, BeliefState, Hypothesis, QuestionLikelihood};
use crate::voi::UtilityMatrix;

pub const DEFAULT_CATALOG_SIZE: usize = 50;

pub const CATEGORIES: [&str; 5] = ["t-shirt", "sneakers", "backpack", "headphones", "water bottle"];
pub const COLORS: [&str; 8] = ["black", "white", "red", "blue", "green", "gray", "yellow", "pink"];
pub const SIZES: [&str; 4] = ["small", "medium", "large", "x-large"];
pub const BRANDS: [&str; 6] = ["acme", "northwind", "zephyr", "globex", "initech", "umbra"];
pub const PRICE_BANDS: [&str; 3] = ["budget", "mid-range", "premium"];

const HIDDEN: [(&str, &[&str]); 4] =
    [("color", &COLORS), ("size", &SIZES), ("brand", &BRANDS), ("price range", &PRICE_BANDS)];

const MAX_CATALOG: usize = CATEGORIES.len() * COLORS.len() * SIZES.len() * BRANDS.len() * PRICE_BANDS.len();

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Product {
    pub id: usize,
    pub category: String,
    pub color: String,
    pub size: String,
    pub brand: String,
    pub price_band: String,
}

impl Product {
    fn hidden(&self) -> [&str; 4] {
        [&self.color, &self.size, &self.brand, &self.price_band]
    }

    fn signature(&self) -> (&str, [&str; 4]) {
        (&self.category, self.hidden())
    }

    pub fn label(&self) -> String {
        format!("{} {} {} {} ({})", self.color, self.size, self.brand, self.category, self.price_band)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShopScenario {
    pub seed: u64,
    pub catalog: Vec<Product>,
    /// Catalog id of the product the user wants.
    pub target_id: usize,
}

fn pick<R: Rng>(rng: &mut R, vocab: &[&str]) -> String {
    vocab[rng.gen_range(0..vocab.len())].to_string()
}

impl ShopScenario {
    pub fn generate(seed: u64, catalog_size: usize) -> Result<Self, TaskError> {
        if !(2..=MAX_CATALOG).contains(&catalog_size) {
            return Err(TaskError::InvalidParameter(format!(
                "catalog size must be in 2..={MAX_CATALOG}, got {catalog_size}"
            )));
        }
        let mut rng = generator_rng(seed);
        let mut catalog: Vec<Product> = Vec::with_capacity(catalog_size);
        let mut seen = std::collections::HashSet::new();
        while catalog.len() < catalog_size {
            let p = Product {
                id: catalog.len(),
                category: pick(&mut rng, &CATEGORIES),
                color: pick(&mut rng, &COLORS),
                size: pick(&mut rng, &SIZES),
                brand: pick(&mut rng, &BRANDS),
                price_band: pick(&mut rng, &PRICE_BANDS),
            };
            let key = (p.category.clone(), p.hidden().map(str::to_string));
            if seen.insert(key) {
                catalog.push(p);
            }
        }
        let target_id = rng.gen_range(0..catalog.len());
        Ok(Self { seed, catalog, target_id })
    }

    pub fn target(&self) -> &Product {
        &self.catalog[self.target_id]
    }

    pub fn category(&self) -> &str {
        &self.target().category
    }

    fn validate(&self) -> Result<(), TaskError> {
        if self.target_id >= self.catalog.len() {
            return Err(TaskError::Invalid(format!("target {} is not in the catalog", self.target_id)));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, p) in self.catalog.iter().enumerate() {
            if p.id != i {
                return Err(TaskError::Invalid("product ids must be dense 0..n".into()));
            }
            if !CATEGORIES.contains(&p.category.as_str()) {
                return Err(TaskError::Invalid(format!("unknown category {:?}", p.category)));
            }
            for ((name, vocab), value) in HIDDEN.iter().zip(p.hidden()) {
                if !vocab.contains(&value) {
                    return Err(TaskError::Invalid(format!("unknown {name} {value:?}")));
                }
            }
            if !seen.insert(p.signature()) {
                return Err(TaskError::Invalid(format!("duplicate product {}", p.label())));
            }
        }
        Ok(())
    }
}

/// Builds the task. Hypotheses are the catalog products in the target's
/// category, in catalog order.
pub fn shop_task_from_scenario(scenario: &ShopScenario) -> Result<TaskSpec, TaskError> {
    if scenario.target_id >= scenario.catalog.len() {
        return Err(TaskError::Invalid(format!("target {} is not in the catalog", scenario.target_id)));
    }
    scenario.validate()?;
    let category = scenario.category().to_string();
    let members: Vec<&Product> = scenario.catalog.iter().filter(|p| p.category == category).collect();
    if members.is_empty() {
        return Err(TaskError::EmptyCategory(category));
    }
    let n = members.len();

    let hypotheses = members.iter().enumerate().map(|(id, p)| Hypothesis { id, label: p.label() }).collect();
    let actions = members.iter().enumerate().map(|(id, p)| Action { id, label: format!("buy {}", p.label()) }).collect();

    let mut likelihood = AnswerLikelihood::new();
    let mut questions = Vec::with_capacity(HIDDEN.len());
    for (q, (name, vocab)) in HIDDEN.iter().enumerate() {
        let rows = members
            .iter()
            .map(|p| {
                let value = p.hidden()[q];
                vocab.iter().map(|v| if *v == value { 1.0 } else { 0.0 }).collect()
            })
            .collect();
        likelihood.insert(q, QuestionLikelihood::from_rows(rows).map_err(|e| TaskError::Invalid(e.to_string()))?);
        questions.push(Question {
            id: q,
            text: format!("Which {name} do you want?"),
            answer_labels: vocab.iter().map(|v| v.to_string()).collect(),
        });
    }

    let rows = members
        .iter()
        .map(|truth| {
            members
                .iter()
                .map(|a| {
                    let matches = truth.hidden().iter().zip(a.hidden()).filter(|(x, y)| **x == *y).count();
                    matches as f64 / HIDDEN.len() as f64
                })
                .collect()
        })
        .collect();
    let utility = UtilityMatrix::from_rows(rows).map_err(|e| TaskError::Invalid(e.to_string()))?;

    let truth = members.iter().position(|p| p.id == scenario.target_id).expect("target is in its own category");
    let task = TaskSpec {
        name: "shop".into(),
        subject: category.clone(),
        hypotheses,
        actions,
        utility,
        questions,
        likelihood,
        prior: BeliefState::uniform(n).map_err(|e| TaskError::Invalid(e.to_string()))?,
        initial_query: format!("I want to buy a {category}."),
        k_max_default: 4,
        ground_truth: GroundTruth::Fixed(truth),
        factors: Vec::new(),
    };
    task.validate()?;
    Ok(task)
}

pub fn make_shop_task(seed: u64, catalog_size: usize) -> Result<TaskSpec, TaskError> {
    shop_task_from_scenario(&ShopScenario::generate(seed, catalog_size)?)
}
