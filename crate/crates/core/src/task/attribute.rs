//! Attribute-matrix guessing games (animal and medical 20 Questions).
//!
//! Matrix files are UTF-8 comma-separated text. The first header cell names
//! the subject ("animal", "condition"), the remaining header cells name
//! attributes, and each row is one hypothesis label followed by cells in
//! `{0, 0.5, 1}` (no / maybe / yes).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Action, GroundTruth, Question, TaskError, TaskSpec};
use crate::belief::{AnswerLikelihood, BeliefState, Hypothesis, QuestionLikelihood};
use crate::voi::UtilityMatrix;

/// Flip probability for simulated yes/no answers.
pub const DEFAULT_ATTRIBUTE_NOISE: f64 = 0.05;

const ANIMALS_CSV: &str = include_str!("../../data/animals.csv");
const MEDICAL_CSV: &str = include_str!("../../data/medical.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeMatrix {
    pub subject: String,
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub cells: Vec<Vec<f64>>,
}

impl AttributeMatrix {
    pub fn from_csv_str(text: &str) -> Result<Self, TaskError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| TaskError::MalformedMatrix(e.to_string()))?.clone();
        if header.len() < 2 {
            return Err(TaskError::MalformedMatrix("need a label column and at least one attribute".into()));
        }
        let subject = header[0].to_string();
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        let mut cells = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| TaskError::MalformedMatrix(e.to_string()))?;
            if record.len() != columns.len() + 1 {
                return Err(TaskError::MalformedMatrix(format!(
                    "row {} has {} cells, expected {}",
                    line + 1,
                    record.len(),
                    columns.len() + 1
                )));
            }
            let values = record
                .iter()
                .skip(1)
                .map(|cell| parse_cell(cell).ok_or_else(|| TaskError::MalformedMatrix(format!("row {}: bad cell {cell:?}", line + 1))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(record[0].to_string());
            cells.push(values);
        }
        let matrix = Self { subject, rows, columns, cells };
        matrix.validate()?;
        Ok(matrix)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, TaskError> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.subject);
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (label, row) in self.rows.iter().zip(&self.cells) {
            out.push_str(label);
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn animals() -> Self {
        Self::from_csv_str(ANIMALS_CSV).expect("bundled animal matrix is well formed")
    }

    pub fn medical() -> Self {
        Self::from_csv_str(MEDICAL_CSV).expect("bundled medical matrix is well formed")
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if self.rows.is_empty() {
            return Err(TaskError::MalformedMatrix("no rows".into()));
        }
        if self.columns.is_empty() {
            return Err(TaskError::MalformedMatrix("no attribute columns".into()));
        }
        if self.cells.len() != self.rows.len() {
            return Err(TaskError::MalformedMatrix("row count does not match labels".into()));
        }
        for (label, row) in self.rows.iter().zip(&self.cells) {
            if row.len() != self.columns.len() {
                return Err(TaskError::MalformedMatrix(format!("row {label:?} is not rectangular")));
            }
            if row.iter().any(|&v| parse_cell(&v.to_string()).is_none()) {
                return Err(TaskError::MalformedMatrix(format!("row {label:?} has a cell outside {{0, 0.5, 1}}")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = self.rows.iter().find(|r| !seen.insert(r.as_str())) {
            return Err(TaskError::MalformedMatrix(format!("duplicate row label {dup:?}")));
        }
        Ok(())
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    match cell.trim() {
        "0" | "0.0" => Some(0.0),
        "0.5" | ".5" => Some(0.5),
        "1" | "1.0" => Some(1.0),
        _ => None,
    }
}

fn humanize(name: &str) -> String {
    name.replace('_', " ")
}

/// Indicator-utility guessing task over the matrix rows.
///
/// One yes/no question per attribute, with
/// `p(yes | θ) = v (1 − η) + (1 − v) η` for cell value `v`.
pub fn load_attribute_task(matrix: &AttributeMatrix, stakes: f64, noise: f64) -> Result<TaskSpec, TaskError> {
    matrix.validate()?;
    if !(0.0..0.5).contains(&noise) {
        return Err(TaskError::InvalidParameter(format!("answer noise must be in [0, 0.5), got {noise}")));
    }
    if !(stakes > 0.0 && stakes.is_finite()) {
        return Err(TaskError::InvalidParameter(format!("stakes must be positive, got {stakes}")));
    }
    let n = matrix.rows.len();
    let subject = humanize(&matrix.subject);
    let hypotheses = matrix.rows.iter().enumerate().map(|(id, label)| Hypothesis { id, label: label.clone() }).collect();
    let actions = matrix.rows.iter().enumerate().map(|(id, label)| Action { id, label: label.clone() }).collect();

    let mut likelihood = AnswerLikelihood::new();
    let mut questions = Vec::with_capacity(matrix.columns.len());
    for (q, column) in matrix.columns.iter().enumerate() {
        let rows = matrix
            .cells
            .iter()
            .map(|row| {
                let v = row[q];
                let yes = v * (1.0 - noise) + (1.0 - v) * noise;
                vec![yes, 1.0 - yes]
            })
            .collect();
        likelihood.insert(q, QuestionLikelihood::from_rows(rows).map_err(|e| TaskError::MalformedMatrix(e.to_string()))?);
        questions.push(Question {
            id: q,
            text: format!("Is this true of the {subject}: {}?", humanize(column)),
            answer_labels: vec!["yes".into(), "no".into()],
        });
    }

    let task = TaskSpec {
        name: subject.clone(),
        subject: subject.clone(),
        hypotheses,
        actions,
        utility: UtilityMatrix::identity(n, stakes),
        questions,
        likelihood,
        prior: BeliefState::uniform(n).map_err(|e| TaskError::Invalid(e.to_string()))?,
        initial_query: format!("I'm thinking of a {subject}. Figure out which one."),
        k_max_default: 20,
        ground_truth: GroundTruth::SampleFromPrior,
        factors: Vec::new(),
    };
    task.validate()?;
    Ok(task)
}

/// Low-stakes animal guessing: 100 animals, correct guess worth 1.
pub fn animal_task(noise: f64) -> Result<TaskSpec, TaskError> {
    let mut task = load_attribute_task(&AttributeMatrix::animals(), 1.0, noise)?;
    task.name = "animal".into();
    task.k_max_default = 20;
    Ok(task)
}

/// High-stakes diagnosis: 15 conditions, correct diagnosis worth 10.
pub fn medical_task(noise: f64) -> Result<TaskSpec, TaskError> {
    let mut task = load_attribute_task(&AttributeMatrix::medical(), 10.0, noise)?;
    task.name = "medical".into();
    task.subject = "diagnosis".into();
    task.initial_query = "I'm not feeling well. What do I have?".into();
    for q in &mut task.questions {
        let attribute = q.text.rsplit_once(": ").map(|(_, a)| a.trim_end_matches('?').to_string()).unwrap_or_default();
        q.text = format!("Does the patient have this: {attribute}?");
    }
    task.k_max_default = 10;
    Ok(task)
}
