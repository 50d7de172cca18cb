//! Aggregation of episode logs into summary rows, comparison tables and
//! plot-ready series.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{EpisodeLog, LogError};
use crate::policy::PolicyConfig;

/// `raw − turns·c`.
pub fn net_utility(raw: f64, turns: usize, c: f64) -> f64 {
    raw - turns as f64 * c
}

/// Aggregate over all episodes of one (benchmark, task, policy, cost) cell.
///
/// Failed episodes are counted in `failures` and left out of every mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub suite: String,
    /// Task name, or the benchmark name for a benchmark-level row.
    pub task: String,
    pub policy: String,
    /// k for fixed-round, τ for confidence; empty otherwise.
    pub param: Option<f64>,
    /// Display label, e.g. "Fixed Round (k=5)".
    pub label: String,
    pub cost: f64,
    pub episodes: usize,
    pub failures: usize,
    pub accuracy: f64,
    pub mean_turns: f64,
    pub mean_raw_utility: f64,
    pub mean_net_utility: f64,
    /// Standard error of the mean net utility.
    pub se_net_utility: f64,
}

impl SummaryRow {
    pub fn is_voi(&self) -> bool {
        self.policy == PolicyConfig::Voi.name()
    }
}

#[derive(Default)]
struct Acc {
    policy: Option<PolicyConfig>,
    episodes: usize,
    failures: usize,
    correct: Vec<f64>,
    turns: Vec<f64>,
    raw: Vec<f64>,
    net: Vec<f64>,
}

// Sums are taken over sorted values so the result does not depend on the
// order the logs arrived in.
fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

fn mean(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        sorted_sum(values) / values.len() as f64
    }
}

fn std_err(values: &mut [f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let mut sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    (sorted_sum(&mut sq) / (n - 1) as f64 / n as f64).sqrt()
}

fn cost_key(c: f64) -> u64 {
    c.to_bits()
}

/// Groups logs into one row per (benchmark, task, policy, cost).
///
/// For benchmarks made of several tasks an additional benchmark-level row
/// is emitted whose means are the sums of the per-task means, so its
/// utility is the expected total over one episode of each part. Episode and
/// failure counts are totals; accuracy is the episode-weighted average.
pub fn summarize(logs: &[EpisodeLog]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String, String, u64), Acc> = BTreeMap::new();
    for log in logs {
        let key = (log.suite.clone(), log.task.clone(), log.policy.to_string(), cost_key(log.cost.per_question_cost));
        let acc = groups.entry(key).or_default();
        acc.policy = Some(log.policy);
        acc.episodes += 1;
        if log.failed() {
            acc.failures += 1;
            continue;
        }
        acc.correct.push(if log.correct { 1.0 } else { 0.0 });
        acc.turns.push(log.num_turns() as f64);
        acc.raw.push(log.raw_utility);
        acc.net.push(log.net_utility);
    }

    let mut rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((suite, task, label, cost), mut acc)| {
            let policy = acc.policy.expect("group has at least one log");
            SummaryRow {
                suite,
                task,
                policy: policy.name().to_string(),
                param: policy.param(),
                label,
                cost: f64::from_bits(cost),
                episodes: acc.episodes,
                failures: acc.failures,
                accuracy: mean(&mut acc.correct),
                mean_turns: mean(&mut acc.turns),
                mean_raw_utility: mean(&mut acc.raw),
                mean_net_utility: mean(&mut acc.net),
                se_net_utility: std_err(&mut acc.net),
            }
        })
        .collect();

    let mut composite: BTreeMap<(String, String, u64), Vec<SummaryRow>> = BTreeMap::new();
    for row in &rows {
        if row.task != row.suite {
            composite.entry((row.suite.clone(), row.label.clone(), cost_key(row.cost))).or_default().push(row.clone());
        }
    }
    for ((suite, label, cost), parts) in composite {
        let episodes: usize = parts.iter().map(|r| r.episodes).sum();
        let ok: usize = parts.iter().map(|r| r.episodes - r.failures).sum();
        let weighted_acc: f64 = parts.iter().map(|r| r.accuracy * (r.episodes - r.failures) as f64).sum();
        rows.push(SummaryRow {
            suite: suite.clone(),
            task: suite,
            policy: parts[0].policy.clone(),
            param: parts[0].param,
            label,
            cost: f64::from_bits(cost),
            episodes,
            failures: parts.iter().map(|r| r.failures).sum(),
            accuracy: if ok == 0 { 0.0 } else { weighted_acc / ok as f64 },
            mean_turns: parts.iter().map(|r| r.mean_turns).sum(),
            mean_raw_utility: parts.iter().map(|r| r.mean_raw_utility).sum(),
            mean_net_utility: parts.iter().map(|r| r.mean_net_utility).sum(),
            se_net_utility: parts.iter().map(|r| r.se_net_utility * r.se_net_utility).sum::<f64>().sqrt(),
        });
    }
    rows.sort_by(|a, b| {
        (&a.suite, &a.task, a.cost.to_bits(), &a.policy, a.param.map(f64::to_bits))
            .cmp(&(&b.suite, &b.task, b.cost.to_bits(), &b.policy, b.param.map(f64::to_bits)))
    });
    rows
}

/// One line of the baseline-versus-VoI comparison at a given cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub suite: String,
    pub cost: f64,
    pub best_baseline: String,
    pub r_max: f64,
    pub second_best: Option<String>,
    pub r_second: Option<f64>,
    pub r_voi: Option<f64>,
    /// `r_VOI − r_max`.
    pub delta_max: Option<f64>,
    /// `r_VOI − r_second`.
    pub delta_second: Option<f64>,
}

/// Best and second-best baseline per benchmark and cost, with the VoI
/// policy's margin over each. Only benchmark-level rows are considered.
/// Ties between baselines go to the label that sorts first.
pub fn table1(rows: &[SummaryRow]) -> Vec<Table1Row> {
    let mut by_cell: BTreeMap<(String, u64), Vec<&SummaryRow>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.task == r.suite) {
        by_cell.entry((row.suite.clone(), row.cost.to_bits())).or_default().push(row);
    }
    let mut out = Vec::new();
    for ((suite, cost), cell) in by_cell {
        let mut baselines: Vec<&SummaryRow> = cell.iter().copied().filter(|r| !r.is_voi()).collect();
        if baselines.is_empty() {
            continue;
        }
        baselines.sort_by(|a, b| b.mean_net_utility.total_cmp(&a.mean_net_utility).then_with(|| a.label.cmp(&b.label)));
        let r_voi = cell.iter().find(|r| r.is_voi()).map(|r| r.mean_net_utility);
        let best = baselines[0];
        let second = baselines.get(1);
        out.push(Table1Row {
            suite,
            cost: f64::from_bits(cost),
            best_baseline: best.label.clone(),
            r_max: best.mean_net_utility,
            second_best: second.map(|r| r.label.clone()),
            r_second: second.map(|r| r.mean_net_utility),
            r_voi,
            delta_max: r_voi.map(|v| v - best.mean_net_utility),
            delta_second: r_voi.zip(second.map(|r| r.mean_net_utility)).map(|(v, s)| v - s),
        });
    }
    out.sort_by(|a, b| a.suite.cmp(&b.suite).then(a.cost.total_cmp(&b.cost)));
    out
}

/// One point of a net-utility-versus-cost curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure2Point {
    pub suite: String,
    pub label: String,
    pub cost: f64,
    pub mean_net_utility: f64,
    pub se_net_utility: f64,
    pub mean_turns: f64,
}

/// Benchmark-level rows reshaped as one series per policy label.
pub fn figure2_points(rows: &[SummaryRow]) -> Vec<Figure2Point> {
    let mut pts: Vec<Figure2Point> = rows
        .iter()
        .filter(|r| r.task == r.suite)
        .map(|r| Figure2Point {
            suite: r.suite.clone(),
            label: r.label.clone(),
            cost: r.cost,
            mean_net_utility: r.mean_net_utility,
            se_net_utility: r.se_net_utility,
            mean_turns: r.mean_turns,
        })
        .collect();
    pts.sort_by(|a, b| (&a.suite, &a.label).cmp(&(&b.suite, &b.label)).then(a.cost.total_cmp(&b.cost)));
    pts
}

/// Writes serializable records as comma-separated text with a header row.
pub fn write_csv<T: Serialize, W: Write>(records: &[T], out: W) -> Result<(), LogError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
