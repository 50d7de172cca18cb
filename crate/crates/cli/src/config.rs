//! Config file loading and flag/config/default layering.

use std::path::{Path, PathBuf};

use clarify_core::estimator::llm::LlmConfig;
use clarify_core::harness::DEFAULT_COSTS;
use clarify_core::policy::PolicyConfig;
use clarify_core::task::{TaskKind, TaskParams};
use serde::Deserialize;

use crate::args::{Backend, EpisodeArgs};
use crate::CliError;

pub const DEFAULT_SEEDS: std::ops::Range<u64> = 0..100;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Text(String),
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub task: Option<OneOrMany<String>>,
    pub policy: Option<OneOrMany<String>>,
    pub k: Option<OneOrMany<usize>>,
    pub tau: Option<OneOrMany<f64>>,
    pub cost: Option<OneOrMany<f64>>,
    pub k_max: Option<usize>,
    pub seeds: Option<SeedSpec>,
    pub seed: Option<u64>,
    pub backend: Option<Backend>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub llm: Option<LlmConfig>,
    pub task_params: Option<TaskParams>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {}", path.display(), e.message())))
    }
}

/// Parses `0..100`, `0..=9`, `7` and comma-separated mixtures of them.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("invalid seeds {text:?}; use e.g. 0..100, 0..=9 or 1,2,5"));
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..=") {
            let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            seeds.extend(a..=b);
        } else if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            seeds.extend(a..b);
        } else {
            seeds.push(part.parse().map_err(|_| bad())?);
        }
    }
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn pick<T>(flag: Vec<T>, file: Option<OneOrMany<T>>) -> Vec<T> {
    if flag.is_empty() {
        file.map(OneOrMany::into_vec).unwrap_or_default()
    } else {
        flag
    }
}

/// Settings after layering flags over the config file over defaults.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub tasks: Vec<TaskKind>,
    /// Empty when neither flags nor config chose a policy.
    pub policies: Vec<PolicyConfig>,
    pub costs: Vec<f64>,
    /// False when `costs` fell back to the default grid.
    pub costs_explicit: bool,
    pub k_max: Option<usize>,
    pub seeds: Vec<u64>,
    pub backend: Backend,
    pub llm: LlmConfig,
    pub params: TaskParams,
    pub out: Option<PathBuf>,
    pub workers: usize,
}

pub struct Overrides<'a> {
    pub seeds: Option<&'a str>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

pub fn resolve(args: &EpisodeArgs, extra: Overrides<'_>) -> Result<Resolved, CliError> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };

    let task_names = pick(args.task.clone(), file.task);
    let tasks = if task_names.is_empty() {
        vec![TaskKind::Mixed20q]
    } else {
        task_names
            .iter()
            .map(|t| t.parse::<TaskKind>().map_err(|e| CliError::Usage(e.to_string())))
            .collect::<Result<_, _>>()?
    };

    let ks = pick(args.k.clone(), file.k);
    let taus = pick(args.tau.clone(), file.tau);
    let mut policies = Vec::new();
    for name in pick(args.policy.clone(), file.policy) {
        let usage = |e: clarify_core::policy::PolicyError| CliError::Usage(e.to_string());
        match PolicyConfig::from_parts(&name, Some(0), Some(0.5)).map_err(usage)? {
            PolicyConfig::FixedRound { .. } => {
                if ks.is_empty() {
                    return Err(CliError::Usage("fixed_round needs --k".into()));
                }
                for &k in &ks {
                    policies.push(PolicyConfig::from_parts(&name, Some(k), None).map_err(usage)?);
                }
            }
            PolicyConfig::ConfidenceThreshold { .. } => {
                if taus.is_empty() {
                    return Err(CliError::Usage("confidence needs --tau".into()));
                }
                for &tau in &taus {
                    policies.push(PolicyConfig::from_parts(&name, None, Some(tau)).map_err(usage)?);
                }
            }
            other => policies.push(other),
        }
    }

    let mut costs = pick(args.cost.clone(), file.cost);
    let costs_explicit = !costs.is_empty();
    if costs.is_empty() {
        costs = DEFAULT_COSTS.to_vec();
    }
    if let Some(c) = costs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
        return Err(CliError::Usage(format!("cost must be finite and non-negative, got {c}")));
    }

    let seeds = match (extra.seed, extra.seeds) {
        (Some(s), _) => vec![s],
        (None, Some(text)) => parse_seeds(text)?,
        (None, None) => match (file.seed, file.seeds) {
            (Some(s), _) => vec![s],
            (None, Some(SeedSpec::List(v))) if !v.is_empty() => v,
            (None, Some(SeedSpec::List(_))) => return Err(CliError::Usage("config seeds list is empty".into())),
            (None, Some(SeedSpec::Text(t))) => parse_seeds(&t)?,
            (None, None) => DEFAULT_SEEDS.collect(),
        },
    };

    let mut llm = file.llm.unwrap_or_default();
    if let Some(endpoint) = &args.endpoint {
        llm.endpoint = endpoint.clone();
    }
    if let Some(model) = &args.model {
        llm.model = model.clone();
    }

    Ok(Resolved {
        tasks,
        policies,
        costs,
        costs_explicit,
        k_max: args.k_max.or(file.k_max),
        seeds,
        backend: args.backend.or(file.backend).unwrap_or(Backend::Exact),
        llm,
        params: file.task_params.unwrap_or_default(),
        out: extra.out.or(file.out),
        workers: extra.workers.or(file.workers).unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_syntax() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("0..=2").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("5, 1,2..4").unwrap(), vec![5, 1, 2, 3]);
        assert!(parse_seeds("").is_err());
        assert!(parse_seeds("a..b").is_err());
    }

    #[test]
    fn file_values_fill_in_and_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "task = \"toy\"\npolicy = [\"fixed_round\", \"voi\"]\nk = [1, 2]\ncost = 0.3\nseeds = \"0..4\"\n\
             backend = \"exact\"\n[llm]\nmodel = \"from-file\"\n[task_params]\nattribute_noise = 0.1\n",
        )
        .unwrap();
        let args = EpisodeArgs { config: Some(path.clone()), cost: vec![0.7], ..EpisodeArgs::default() };
        let r = resolve(&args, Overrides { seeds: None, seed: None, out: None, workers: None }).unwrap();
        assert_eq!(r.tasks, vec![TaskKind::Toy]);
        assert_eq!(
            r.policies,
            vec![PolicyConfig::FixedRound { k: 1 }, PolicyConfig::FixedRound { k: 2 }, PolicyConfig::Voi]
        );
        assert_eq!(r.costs, vec![0.7]);
        assert_eq!(r.seeds, vec![0, 1, 2, 3]);
        assert_eq!(r.llm.model, "from-file");
        assert_eq!(r.params.attribute_noise, 0.1);

        let args = EpisodeArgs { config: Some(path), model: Some("flag".into()), ..EpisodeArgs::default() };
        let r = resolve(&args, Overrides { seeds: None, seed: Some(9), out: None, workers: None }).unwrap();
        assert_eq!(r.llm.model, "flag");
        assert_eq!(r.seeds, vec![9]);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "api_key = \"sk-nope\"\n").unwrap();
        let args = EpisodeArgs { config: Some(path), ..EpisodeArgs::default() };
        assert!(matches!(
            resolve(&args, Overrides { seeds: None, seed: None, out: None, workers: None }),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn defaults() {
        let r = resolve(&EpisodeArgs::default(), Overrides { seeds: None, seed: None, out: None, workers: None }).unwrap();
        assert_eq!(r.tasks, vec![TaskKind::Mixed20q]);
        assert!(r.policies.is_empty());
        assert_eq!(r.costs, DEFAULT_COSTS.to_vec());
        assert_eq!(r.seeds.len(), 100);
        assert_eq!(r.backend, Backend::Exact);
    }
}
