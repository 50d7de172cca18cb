//! Python bindings.
//!
//! Beliefs, likelihood tables and utility matrices cross the boundary as
//! plain lists. Episode logs, summary rows and reports cross as dicts with
//! the same shape as the line-delimited JSON log format, so anything read
//! with `read_logs` can be passed straight back into `summarize`.
//!
//! Policies are named by short specs: `no_question`, `fixed_round:5`,
//! `confidence:0.9`, `adaptive`, `voi`.

use std::path::PathBuf;
use std::sync::Arc;

use clarify_core::belief::{bayes_update as core_bayes_update, normalize as core_normalize};
use clarify_core::belief::{AnswerLikelihood, BeliefState, QuestionLikelihood};
use clarify_core::estimator::ExactEstimator;
use clarify_core::harness::{self, EpisodeLog, SummaryRow, SweepConfig};
use clarify_core::policy::PolicyConfig;
use clarify_core::task::{toy_task, TaskFactory, TaskKind, TaskParams, TaskSpec};
use clarify_core::voi::{self, CostModel, UtilityMatrix};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Parses a policy spec such as `fixed_round:5` or `confidence:0.9`.
pub fn parse_policy(spec: &str) -> Result<PolicyConfig, String> {
    let (name, arg) = match spec.split_once(':') {
        Some((n, a)) => (n, Some(a.trim())),
        None => (spec, None),
    };
    let k = match arg {
        Some(a) if a.parse::<usize>().is_ok() => a.parse().ok(),
        _ => None,
    };
    let tau = arg.and_then(|a| a.parse::<f64>().ok());
    let policy = PolicyConfig::from_parts(name, k, tau).map_err(|e| format!("policy {spec:?}: {e}"))?;
    if arg.is_some() && policy.param().is_none() {
        return Err(format!("policy {spec:?} takes no parameter"));
    }
    Ok(policy)
}

/// Inverse of [`parse_policy`].
pub fn policy_spec(policy: &PolicyConfig) -> String {
    match *policy {
        PolicyConfig::FixedRound { k } => format!("{}:{k}", policy.name()),
        PolicyConfig::ConfidenceThreshold { tau } => format!("{}:{tau}", policy.name()),
        _ => policy.name().to_string(),
    }
}

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize + ?Sized>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_error)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_error)
}

fn belief(probs: Vec<f64>) -> PyResult<BeliefState> {
    BeliefState::new(probs).map_err(value_error)
}

fn utility(rows: Vec<Vec<f64>>) -> PyResult<UtilityMatrix> {
    UtilityMatrix::from_rows(rows).map_err(value_error)
}

fn likelihoods(tables: Vec<Vec<Vec<f64>>>) -> PyResult<AnswerLikelihood> {
    let mut all = AnswerLikelihood::new();
    for (q, rows) in tables.into_iter().enumerate() {
        all.insert(q, QuestionLikelihood::from_rows(rows).map_err(value_error)?);
    }
    Ok(all)
}

/// A benchmark task instance.
#[pyclass(name = "Task", module = "clarify", frozen)]
struct PyTask {
    inner: Arc<TaskSpec>,
}

#[pymethods]
impl PyTask {
    /// The two-hypothesis cat/dog task.
    #[staticmethod]
    fn toy() -> Self {
        Self { inner: Arc::new(toy_task()) }
    }

    /// Task instances for `kind` at `seed`. Composite kinds return one
    /// instance per part. `params` overrides generator settings.
    #[staticmethod]
    #[pyo3(signature = (kind, seed = 0, params = None))]
    fn build(kind: &str, seed: u64, params: Option<&Bound<'_, PyAny>>) -> PyResult<Vec<PyTask>> {
        let kind: TaskKind = kind.parse().map_err(value_error)?;
        let params: TaskParams = match params {
            Some(p) => from_py(p)?,
            None => TaskParams::default(),
        };
        let instances = TaskFactory::new(kind, params).instances(seed).map_err(value_error)?;
        Ok(instances.into_iter().map(|inner| PyTask { inner }).collect())
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec: TaskSpec = serde_json::from_str(text).map_err(value_error)?;
        spec.validate().map_err(value_error)?;
        Ok(Self { inner: Arc::new(spec) })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&*self.inner).map_err(value_error)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn initial_query(&self) -> String {
        self.inner.initial_query.clone()
    }

    #[getter]
    fn hypotheses(&self) -> Vec<String> {
        self.inner.hypotheses.iter().map(|h| h.label.clone()).collect()
    }

    #[getter]
    fn actions(&self) -> Vec<String> {
        self.inner.actions.iter().map(|a| a.label.clone()).collect()
    }

    #[getter]
    fn questions(&self) -> Vec<String> {
        self.inner.questions.iter().map(|q| q.text.clone()).collect()
    }

    #[getter]
    fn prior(&self) -> Vec<f64> {
        self.inner.prior.probs().to_vec()
    }

    #[getter]
    fn utility(&self) -> Vec<Vec<f64>> {
        let u = &self.inner.utility;
        (0..u.num_hypotheses()).map(|h| u.row(h).to_vec()).collect()
    }

    #[getter]
    fn k_max_default(&self) -> usize {
        self.inner.k_max_default
    }

    fn answer_labels(&self, question: usize) -> PyResult<Vec<String>> {
        self.inner
            .questions
            .get(question)
            .map(|q| q.answer_labels.clone())
            .ok_or_else(|| value_error(format!("no question {question}")))
    }

    /// `p(y | q, θ)` as rows over hypotheses.
    fn likelihood(&self, question: usize) -> PyResult<Vec<Vec<f64>>> {
        let table =
            self.inner.likelihood.question(question).ok_or_else(|| value_error(format!("no question {question}")))?;
        Ok((0..table.num_hypotheses()).map(|h| table.row(h).to_vec()).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Task(name={:?}, hypotheses={}, questions={})",
            self.inner.name,
            self.inner.hypotheses.len(),
            self.inner.questions.len()
        )
    }
}

/// Scales non-negative weights to sum to one.
#[pyfunction]
fn normalize(weights: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(core_normalize(&weights).map_err(value_error)?.into_probs())
}

/// Posterior after observing `answer` to one question whose likelihood
/// rows are `likelihood[h][y]`.
#[pyfunction]
fn bayes_update(prior: Vec<f64>, likelihood: Vec<Vec<f64>>, answer: usize) -> PyResult<Vec<f64>> {
    let table = likelihoods(vec![likelihood])?;
    Ok(core_bayes_update(&belief(prior)?, 0, answer, &table).map_err(value_error)?.into_probs())
}

#[pyfunction]
fn expected_utility(belief_probs: Vec<f64>, utility_rows: Vec<Vec<f64>>, action: usize) -> PyResult<f64> {
    voi::expected_utility(&belief(belief_probs)?, action, &utility(utility_rows)?).map_err(value_error)
}

/// `(action, value)` of the best action under the belief.
#[pyfunction]
fn best_action(belief_probs: Vec<f64>, utility_rows: Vec<Vec<f64>>) -> PyResult<(usize, f64)> {
    voi::best_action_value(&belief(belief_probs)?, &utility(utility_rows)?).map_err(value_error)
}

/// Expected gain in decision value from asking one question.
#[pyfunction]
fn value_of_information(belief_probs: Vec<f64>, likelihood: Vec<Vec<f64>>, utility_rows: Vec<Vec<f64>>) -> PyResult<f64> {
    let table = likelihoods(vec![likelihood])?;
    voi::value_of_information(&belief(belief_probs)?, 0, &table, &utility(utility_rows)?).map_err(value_error)
}

/// Scores every question in `likelihoods` (indexed by position) and picks
/// one to ask or an action to commit to.
#[pyfunction]
fn voi_step<'py>(
    py: Python<'py>,
    belief_probs: Vec<f64>,
    likelihoods_by_question: Vec<Vec<Vec<f64>>>,
    utility_rows: Vec<Vec<f64>>,
    cost: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let candidates: Vec<usize> = (0..likelihoods_by_question.len()).collect();
    let table = likelihoods(likelihoods_by_question)?;
    let cost = CostModel::constant(cost).map_err(value_error)?;
    let report = voi::voi_step(&belief(belief_probs)?, &candidates, &table, &utility(utility_rows)?, &cost)
        .map_err(value_error)?;
    to_py(py, &report)
}

/// Runs one simulated episode with exact beliefs and returns its log.
#[pyfunction]
#[pyo3(signature = (task, policy = "voi", cost = 0.05, k_max = None, seed = 0))]
fn run_episode<'py>(
    py: Python<'py>,
    task: &PyTask,
    policy: &str,
    cost: f64,
    k_max: Option<usize>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let policy = parse_policy(policy).map_err(value_error)?;
    let cost = CostModel::constant(cost).map_err(value_error)?;
    let spec = Arc::clone(&task.inner);
    let k_max = k_max.unwrap_or(spec.k_max_default);
    let log = py.detach(|| harness::run_episode(&policy, &spec, &ExactEstimator, &cost, k_max, seed));
    to_py(py, &log)
}

/// Runs a task × policy × cost × seed grid with exact beliefs. Returns a
/// dict with `logs`, `summary`, `table1` and `failed_cells`.
#[pyfunction]
#[pyo3(signature = (tasks = None, policies = None, costs = None, seeds = None, k_max = None, workers = 0))]
fn run_sweep<'py>(
    py: Python<'py>,
    tasks: Option<Vec<String>>,
    policies: Option<Vec<String>>,
    costs: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    k_max: Option<usize>,
    workers: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let mut config = SweepConfig { k_max, workers, ..SweepConfig::default() };
    if let Some(tasks) = tasks {
        config.tasks = tasks.iter().map(|t| t.parse::<TaskKind>()).collect::<Result<_, _>>().map_err(value_error)?;
    }
    if let Some(policies) = policies {
        config.policies = policies.iter().map(|p| parse_policy(p)).collect::<Result<_, _>>().map_err(value_error)?;
    }
    if let Some(costs) = costs {
        config.costs = costs;
    }
    if let Some(seeds) = seeds {
        config.seeds = seeds;
    }
    let result = py.detach(|| harness::run_sweep(&config, &ExactEstimator)).map_err(value_error)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("logs", to_py(py, &result.logs)?)?;
    out.set_item("summary", to_py(py, &result.summary)?)?;
    out.set_item("table1", to_py(py, &result.table1)?)?;
    out.set_item("failed_cells", result.failed_cells)?;
    Ok(out.into_any())
}

/// Per-configuration means over a list of episode logs.
#[pyfunction]
fn summarize<'py>(py: Python<'py>, logs: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let logs: Vec<EpisodeLog> = from_py(logs)?;
    to_py(py, &harness::summarize(&logs))
}

/// Best baseline versus VoI per suite and cost, from summary rows.
#[pyfunction]
fn table1<'py>(py: Python<'py>, summary: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let rows: Vec<SummaryRow> = from_py(summary)?;
    to_py(py, &harness::table1(&rows))
}

/// Commit-time confidence bins with their empirical accuracy.
#[pyfunction]
#[pyo3(signature = (logs, bin_width = harness::DEFAULT_BIN_WIDTH))]
fn calibration_report<'py>(py: Python<'py>, logs: &Bound<'py, PyAny>, bin_width: f64) -> PyResult<Bound<'py, PyAny>> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(value_error(format!("bin_width must lie in (0, 1], got {bin_width}")));
    }
    let logs: Vec<EpisodeLog> = from_py(logs)?;
    to_py(py, &harness::calibration_report(&logs, bin_width))
}

#[pyfunction]
fn read_logs(py: Python<'_>, path: PathBuf) -> PyResult<Bound<'_, PyAny>> {
    let logs = harness::read_logs(&path).map_err(value_error)?;
    to_py(py, &logs)
}

#[pyfunction]
fn write_logs(logs: &Bound<'_, PyAny>, path: PathBuf) -> PyResult<()> {
    let logs: Vec<EpisodeLog> = from_py(logs)?;
    harness::write_logs(&logs, &path).map_err(value_error)
}

/// Specs of the default baseline grid plus VoI.
#[pyfunction]
fn default_policy_grid() -> Vec<String> {
    harness::default_policy_grid().iter().map(policy_spec).collect()
}

#[pymodule]
fn clarify(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTask>()?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(bayes_update, m)?)?;
    m.add_function(wrap_pyfunction!(expected_utility, m)?)?;
    m.add_function(wrap_pyfunction!(best_action, m)?)?;
    m.add_function(wrap_pyfunction!(value_of_information, m)?)?;
    m.add_function(wrap_pyfunction!(voi_step, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(table1, m)?)?;
    m.add_function(wrap_pyfunction!(calibration_report, m)?)?;
    m.add_function(wrap_pyfunction!(read_logs, m)?)?;
    m.add_function(wrap_pyfunction!(write_logs, m)?)?;
    m.add_function(wrap_pyfunction!(default_policy_grid, m)?)?;
    m.add("SCHEMA_VERSION", harness::SCHEMA_VERSION)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
