//! Episodes, sweeps, aggregation, calibration and log files.

use std::time::Instant;

use clarify_core::estimator::ExactEstimator;
use clarify_core::harness::{
    calibration_report, check_cost_prefix, read_logs, run_episode, run_episode_with, run_sweep, summarize, table1,
    write_logs, EpisodeOptions, SweepConfig,
};
use clarify_core::policy::PolicyConfig;
use clarify_core::task::{animal_task, toy_task, TaskFactory, TaskKind, TaskParams};
use clarify_core::voi::CostModel;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn cost(c: f64) -> CostModel {
    CostModel::constant(c).unwrap()
}

fn instances(kind: TaskKind, seed: u64) -> Vec<std::sync::Arc<clarify_core::task::TaskSpec>> {
    TaskFactory::new(kind, TaskParams::default()).instances(seed).unwrap()
}

#[test]
fn fixed_zero_rounds_is_no_question_everywhere() {
    for kind in TaskKind::ALL {
        for seed in 0..3 {
            for task in instances(kind, seed) {
                let a = run_episode(&PolicyConfig::FixedRound { k: 0 }, &task, &ExactEstimator, &cost(0.05), 20, seed);
                let b = run_episode(&PolicyConfig::NoQuestion, &task, &ExactEstimator, &cost(0.05), 20, seed);
                assert_eq!(a.num_turns(), 0);
                assert_eq!(a.final_action, b.final_action);
                assert_eq!(a.net_utility, b.net_utility);
            }
        }
    }
}

#[test]
fn fixed_two_rounds_asks_exactly_two() {
    let t = toy_task();
    for seed in 0..5 {
        let log = run_episode(&PolicyConfig::FixedRound { k: 2 }, &t, &ExactEstimator, &cost(0.0), 4, seed);
        assert_eq!(log.num_turns(), 2);
        assert!(!log.forced_commit);
    }
}

#[test]
fn unreachable_confidence_asks_until_the_budget() {
    let t = animal_task(0.05).unwrap();
    for seed in 0..5 {
        let log = run_episode(&PolicyConfig::ConfidenceThreshold { tau: 1.0 + 1e-9 }, &t, &ExactEstimator, &cost(0.0), 7, seed);
        assert_eq!(log.num_turns(), 7);
        assert!(log.forced_commit);
    }
}

#[test]
fn logs_carry_consistent_accounting() {
    let t = animal_task(0.05).unwrap();
    let mut scaled = t.clone();
    scaled.utility = t.utility.scaled(10.0);
    for policy in [PolicyConfig::Voi, PolicyConfig::FixedRound { k: 5 }, PolicyConfig::ConfidenceThreshold { tau: 0.7 }] {
        for seed in 0..5 {
            let log = run_episode(&policy, &scaled, &ExactEstimator, &cost(0.05), 20, seed);
            assert!(log.num_turns() <= log.k_max);
            assert!((log.net_utility - (log.raw_utility - log.num_turns() as f64 * 0.05)).abs() < 1e-12);
            assert_eq!(log.schema_version, clarify_core::harness::SCHEMA_VERSION);
            for (i, turn) in log.turns.iter().enumerate() {
                assert_eq!(turn.belief.turn, i + 1);
            }
        }
    }
}

#[test]
fn degenerate_sweep_equals_single_episode_aggregation() {
    let config = SweepConfig {
        tasks: vec![TaskKind::Toy],
        policies: vec![PolicyConfig::Voi],
        costs: vec![0.1],
        seeds: vec![7],
        ..SweepConfig::default()
    };
    let result = run_sweep(&config, &ExactEstimator).unwrap();
    let log = run_episode(&PolicyConfig::Voi, &toy_task(), &ExactEstimator, &cost(0.1), 4, 7);
    assert_eq!(result.logs, vec![log.clone()]);
    assert_eq!(result.summary.len(), 1);
    let row = &result.summary[0];
    assert_eq!(row.episodes, 1);
    assert_eq!(row.mean_net_utility, log.net_utility);
    assert_eq!(row.mean_turns, 1.0);
}

#[test]
fn empty_grids_are_rejected() {
    let config = SweepConfig { costs: vec![], ..SweepConfig::default() };
    assert!(run_sweep(&config, &ExactEstimator).is_err());
}

#[test]
fn sweep_is_reproducible_and_summary_is_order_independent() {
    let config = SweepConfig {
        tasks: vec![TaskKind::Mixed20q, TaskKind::Shop],
        costs: vec![0.01, 0.05],
        seeds: (0..6).collect(),
        ..SweepConfig::default()
    };
    let a = run_sweep(&config, &ExactEstimator).unwrap();
    let b = run_sweep(&SweepConfig { workers: 1, ..config.clone() }, &ExactEstimator).unwrap();
    assert_eq!(a.logs, b.logs);
    assert_eq!(a.summary, b.summary);

    let mut shuffled = a.logs.clone();
    for s in 0..5 {
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(s));
        assert_eq!(summarize(&shuffled), a.summary);
    }
    assert_eq!(table1(&a.summary), a.table1);
}

#[test]
fn summary_means_are_linear() {
    let config = SweepConfig { tasks: vec![TaskKind::Mixed20q], costs: vec![0.02], seeds: (0..8).collect(), ..SweepConfig::default() };
    let result = run_sweep(&config, &ExactEstimator).unwrap();
    for row in &result.summary {
        assert!(row.episodes > 0);
        assert!(row.mean_net_utility.is_finite());
        assert!((row.mean_net_utility - (row.mean_raw_utility - row.cost * row.mean_turns)).abs() < 1e-9, "{row:?}");
    }
    // Benchmark rows add up their parts.
    let voi = |task: &str| result.summary.iter().find(|r| r.task == task && r.policy == "voi").unwrap().mean_net_utility;
    assert!((voi("mixed20q") - voi("animal") - voi("medical")).abs() < 1e-12);
    assert_eq!(result.table1.len(), 1);
}

#[test]
fn prefix_check_mode_finds_no_violations_at_high_stakes() {
    let mut t = animal_task(0.05).unwrap();
    t.utility = t.utility.scaled(10.0);
    let seeds: Vec<u64> = (0..10).collect();
    assert!(check_cost_prefix(&t, &ExactEstimator, &[0.01, 0.2, 0.05], &seeds, 20).unwrap().is_empty());
}

#[test]
fn certain_commits_land_in_the_top_bin() {
    // Noiseless animal answers: after enough questions every commit is a point mass.
    let t = animal_task(0.0).unwrap();
    let logs: Vec<_> = (0..50)
        .map(|s| run_episode(&PolicyConfig::ConfidenceThreshold { tau: 1.0 }, &t, &ExactEstimator, &cost(0.0), 60, s))
        .collect();
    let bins = calibration_report(&logs, 0.2);
    assert_eq!(bins.len(), 5);
    let top = bins.last().unwrap();
    assert_eq!(top.count, 50);
    assert_eq!(top.accuracy, Some(1.0));
    for bin in &bins[..4] {
        assert_eq!(bin.count, 0);
        assert_eq!(bin.accuracy, None);
        assert_eq!(bin.mean_confidence, None);
        assert_eq!(bin.gap(), None);
    }
}

#[test]
fn ten_thousand_episode_file_reads_quickly() {
    let t = animal_task(0.05).unwrap();
    let mut scaled = t.clone();
    scaled.utility = t.utility.scaled(10.0);
    let base: Vec<_> =
        (0..20).map(|s| run_episode(&PolicyConfig::Voi, &scaled, &ExactEstimator, &cost(0.01), 20, s)).collect();
    let logs: Vec<_> = (0..10_000)
        .map(|i| {
            let mut l = base[i % base.len()].clone();
            l.seed = i as u64;
            l
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.jsonl");
    write_logs(&logs, &path).unwrap();
    let start = Instant::now();
    let back = read_logs(&path).unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert_eq!(back.len(), 10_000);
    assert!(secs < 5.0, "read took {secs:.2}s");
    assert_eq!(back[1234], logs[1234]);
}

#[test]
fn malformed_log_lines_report_their_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    let log = run_episode(&PolicyConfig::Voi, &toy_task(), &ExactEstimator, &cost(0.1), 4, 0);
    let good = serde_json::to_string(&log).unwrap();
    std::fs::write(&path, format!("{good}\n{{not json\n")).unwrap();
    match read_logs(&path) {
        Err(clarify_core::harness::LogError::Json { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a json error, got {other:?}"),
    }
    std::fs::write(&path, "{\"no_version\": true}\n").unwrap();
    assert!(matches!(read_logs(&path), Err(clarify_core::harness::LogError::SchemaVersionMismatch { found: 0, .. })));
}

#[test]
fn wall_time_is_opt_in() {
    let t = toy_task();
    let plain = run_episode(&PolicyConfig::Voi, &t, &ExactEstimator, &cost(0.1), 4, 0);
    assert!(plain.wall_time_ms.is_none());
    let options = EpisodeOptions { record_wall_time: true, suite: Some("bench".into()) };
    let timed = run_episode_with(&options, &PolicyConfig::Voi, &t, &ExactEstimator, &cost(0.1), 4, 0);
    assert!(timed.wall_time_ms.is_some());
    assert_eq!(timed.suite, "bench");
    assert_eq!(timed.turns, plain.turns);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn turns_never_exceed_budget(seed in 0u64..1000, k_max in 0usize..6, which in 0usize..4, c in 0.0f64..0.2) {
        let policy = [
            PolicyConfig::Voi,
            PolicyConfig::FixedRound { k: 10 },
            PolicyConfig::ConfidenceThreshold { tau: 0.99 },
            PolicyConfig::NoQuestion,
        ][which];
        let mut t = animal_task(0.05).unwrap();
        t.utility = t.utility.scaled(10.0);
        let log = run_episode(&policy, &t, &ExactEstimator, &cost(c), k_max, seed);
        prop_assert!(log.num_turns() <= k_max);
        prop_assert!(log.failure.is_none());
        let back: clarify_core::harness::EpisodeLog = serde_json::from_str(&serde_json::to_string(&log).unwrap()).unwrap();
        prop_assert_eq!(back, log);
    }
}
