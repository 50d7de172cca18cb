//! Grid sweeps over tasks, policies, costs and seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_episode, run_episode_with, summarize, table1, EpisodeLog, EpisodeOptions, SummaryRow, Table1Row};
use crate::estimator::Estimator;
use crate::policy::PolicyConfig;
use crate::task::{TaskFactory, TaskKind, TaskParams, TaskSpec};
use crate::voi::CostModel;

/// Per-question costs swept by default.
pub const DEFAULT_COSTS: [f64; 5] = [0.01, 0.02, 0.05, 0.10, 0.20];

/// The baseline grid plus the VoI policy: no-question, fixed rounds
/// k ∈ {0, 5, 10, 15, 20}, confidence τ ∈ {0.5, 0.7, 0.9}.
pub fn default_policy_grid() -> Vec<PolicyConfig> {
    let mut grid = vec![PolicyConfig::NoQuestion];
    grid.extend([0, 5, 10, 15, 20].map(|k| PolicyConfig::FixedRound { k }));
    grid.extend([0.5, 0.7, 0.9].map(|tau| PolicyConfig::ConfidenceThreshold { tau }));
    grid.push(PolicyConfig::Voi);
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub tasks: Vec<TaskKind>,
    pub policies: Vec<PolicyConfig>,
    pub costs: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Turn budget; each task's own default when unset.
    pub k_max: Option<usize>,
    pub params: TaskParams,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            tasks: vec![TaskKind::Mixed20q],
            policies: default_policy_grid(),
            costs: DEFAULT_COSTS.to_vec(),
            seeds: (0..100).collect(),
            k_max: None,
            params: TaskParams::default(),
            workers: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let empty = |what: &str| crate::task::TaskError::InvalidParameter(format!("sweep has no {what}"));
        if self.tasks.is_empty() {
            return Err(empty("tasks").into());
        }
        if self.policies.is_empty() {
            return Err(empty("policies").into());
        }
        if self.costs.is_empty() {
            return Err(empty("costs").into());
        }
        if self.seeds.is_empty() {
            return Err(empty("seeds").into());
        }
        for p in &self.policies {
            p.validate()?;
        }
        for &c in &self.costs {
            CostModel::constant(c)?;
        }
        Ok(())
    }

    pub fn num_episodes(&self) -> usize {
        let parts: usize = self.tasks.iter().map(|t| t.parts().len()).sum();
        parts * self.policies.len() * self.costs.len() * self.seeds.len()
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub logs: Vec<EpisodeLog>,
    pub summary: Vec<SummaryRow>,
    pub table1: Vec<Table1Row>,
    /// Task instances that could not be built, as "task seed N: reason".
    pub failed_cells: Vec<String>,
}

/// Runs every (task, seed, policy, cost) cell. All policies and costs for
/// a seed run against the same task instance and the same episode seed.
/// Cells are independent and run in parallel; logs come back in grid order.
pub fn run_sweep(config: &SweepConfig, estimator: &dyn Estimator) -> crate::Result<SweepResult> {
    config.validate()?;
    let costs: Vec<CostModel> = config.costs.iter().map(|&c| CostModel::constant(c)).collect::<Result<_, _>>()?;
    let factories: Vec<TaskFactory> = config.tasks.iter().map(|&k| TaskFactory::new(k, config.params)).collect();
    let units: Vec<(usize, u64)> =
        (0..factories.len()).flat_map(|f| config.seeds.iter().map(move |&s| (f, s))).collect();

    let run_unit = |&(f, seed): &(usize, u64)| -> Result<Vec<EpisodeLog>, String> {
        let factory = &factories[f];
        let instances = factory.instances(seed).map_err(|e| format!("{} seed {seed}: {e}", factory.kind()))?;
        let options = EpisodeOptions { record_wall_time: false, suite: Some(factory.kind().name().to_string()) };
        let mut logs = Vec::with_capacity(instances.len() * config.policies.len() * costs.len());
        for task in &instances {
            let k_max = config.k_max.unwrap_or(task.k_max_default);
            for policy in &config.policies {
                for cost in &costs {
                    logs.push(run_episode_with(&options, policy, task, estimator, cost, k_max, seed));
                }
            }
        }
        Ok(logs)
    };

    let results: Vec<Result<Vec<EpisodeLog>, String>> = if config.workers == 0 {
        units.par_iter().map(run_unit).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| crate::task::TaskError::InvalidParameter(format!("worker pool: {e}")))?;
        pool.install(|| units.par_iter().map(run_unit).collect())
    };

    let mut logs = Vec::with_capacity(config.num_episodes());
    let mut failed_cells = Vec::new();
    for r in results {
        match r {
            Ok(mut l) => logs.append(&mut l),
            Err(e) => failed_cells.push(e),
        }
    }
    let summary = summarize(&logs);
    let table1 = table1(&summary);
    Ok(SweepResult { logs, summary, table1, failed_cells })
}

/// A seed on which a higher cost did not ask a prefix of the questions
/// asked at a lower cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixViolation {
    pub seed: u64,
    pub high_cost: f64,
    pub low_cost: f64,
    pub high_cost_questions: Vec<usize>,
    pub low_cost_questions: Vec<usize>,
}

/// Runs the VoI policy at every cost on every seed and checks, per seed,
/// that the questions asked at each cost are a prefix of those asked at
/// every lower cost. Returns the violations; empty means the property
/// holds.
pub fn check_cost_prefix(
    task: &TaskSpec,
    estimator: &dyn Estimator,
    costs: &[f64],
    seeds: &[u64],
    k_max: usize,
) -> crate::Result<Vec<PrefixViolation>> {
    let mut costs = costs.to_vec();
    costs.sort_by(|a, b| b.total_cmp(a));
    let models: Vec<CostModel> = costs.iter().map(|&c| CostModel::constant(c)).collect::<Result<_, _>>()?;
    let per_seed: Vec<Vec<PrefixViolation>> = seeds
        .par_iter()
        .map(|&seed| {
            let runs: Vec<Vec<usize>> = models
                .iter()
                .map(|m| run_episode(&PolicyConfig::Voi, task, estimator, m, k_max, seed).asked())
                .collect();
            let mut out = Vec::new();
            for i in 0..runs.len() {
                for j in i + 1..runs.len() {
                    if !runs[j].starts_with(&runs[i]) {
                        out.push(PrefixViolation {
                            seed,
                            high_cost: costs[i],
                            low_cost: costs[j],
                            high_cost_questions: runs[i].clone(),
                            low_cost_questions: runs[j].clone(),
                        });
                    }
                }
            }
            out
        })
        .collect();
    Ok(per_seed.into_iter().flatten().collect())
}
