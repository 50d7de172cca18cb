//! The batch commands: run, sweep, calibrate, report.

use std::io::Write;
use std::path::{Path, PathBuf};

use clarify_core::estimator::llm::{LlmClient, LlmEstimator};
use clarify_core::estimator::{Estimator, ExactEstimator};
use clarify_core::harness::{
    calibration_report, default_policy_grid, figure2_points, read_logs, run_sweep, summarize, table1, write_csv,
    write_logs, EpisodeLog, SummaryRow, SweepConfig, SweepResult,
};
use clarify_core::policy::PolicyConfig;

use crate::args::{Backend, CalibrateArgs, ReportArgs, RunArgs};
use crate::config::{resolve, Overrides, Resolved};
use crate::CliError;

pub fn build_estimator(resolved: &Resolved) -> Result<Box<dyn Estimator>, CliError> {
    Ok(match resolved.backend {
        Backend::Exact => Box::new(ExactEstimator),
        Backend::Llm => Box::new(LlmEstimator::new(LlmClient::http(resolved.llm.clone())?)),
    })
}

fn resolve_run(args: &RunArgs) -> Result<Resolved, CliError> {
    resolve(
        &args.episode,
        Overrides { seeds: args.seeds.as_deref(), seed: args.seed, out: args.out.clone(), workers: args.workers },
    )
}

fn execute(resolved: &Resolved, policies: Vec<PolicyConfig>, stderr: &mut dyn Write) -> Result<SweepResult, CliError> {
    let config = SweepConfig {
        tasks: resolved.tasks.clone(),
        policies,
        costs: resolved.costs.clone(),
        seeds: resolved.seeds.clone(),
        k_max: resolved.k_max,
        params: resolved.params,
        workers: resolved.workers,
    };
    let estimator = build_estimator(resolved)?;
    let result = run_sweep(&config, estimator.as_ref())?;
    for cell in &result.failed_cells {
        writeln!(stderr, "warning: skipped {cell}")?;
    }
    let failed = result.logs.iter().filter(|l| l.failed()).count();
    if failed > 0 {
        writeln!(stderr, "warning: {failed} of {} episodes failed and are left out of the means", result.logs.len())?;
    }
    if result.logs.is_empty() {
        return Err(CliError::Runtime("no episodes could be run".into()));
    }
    Ok(result)
}

fn csv_to(records: &[impl serde::Serialize], out: &mut dyn Write) -> Result<(), CliError> {
    write_csv(records, out)?;
    Ok(())
}

fn csv_file(records: &[impl serde::Serialize], path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    write_csv(records, std::io::BufWriter::new(file))?;
    Ok(())
}

fn write_tables(dir: &Path, summary: &[SummaryRow]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    csv_file(summary, &dir.join("summary.csv"))?;
    csv_file(&table1(summary), &dir.join("table1.csv"))?;
    csv_file(&figure2_points(summary), &dir.join("figure2.csv"))?;
    Ok(())
}

/// One policy over a set of seeds and costs. Logs go to `--out`, the
/// summary to standard output.
pub fn run(args: &RunArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let resolved = resolve_run(args)?;
    let policy = match resolved.policies.as_slice() {
        [] => PolicyConfig::Voi,
        [one] => *one,
        many => {
            return Err(CliError::Usage(format!(
                "run takes one policy configuration, got {}; use sweep for grids",
                many.len()
            )))
        }
    };
    let result = execute(&resolved, vec![policy], stderr)?;
    if let Some(path) = &resolved.out {
        write_logs(&result.logs, path)?;
    }
    csv_to(&result.summary, stdout)
}

/// A policy × cost × seed grid. With `--out DIR` writes `logs.jsonl`,
/// `summary.csv`, `table1.csv` and `figure2.csv` there.
pub fn sweep(args: &RunArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let resolved = resolve_run(args)?;
    let policies = if resolved.policies.is_empty() { default_policy_grid() } else { resolved.policies.clone() };
    let result = execute(&resolved, policies, stderr)?;
    if let Some(dir) = &resolved.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        write_logs(&result.logs, dir.join("logs.jsonl"))?;
        write_tables(dir, &result.summary)?;
    }
    csv_to(&result.summary, stdout)
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<EpisodeLog>, CliError> {
    let mut logs = Vec::new();
    for path in paths {
        let mut batch = read_logs(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        logs.append(&mut batch);
    }
    Ok(logs)
}

/// Confidence-binned accuracy. Empty bins leave their mean and accuracy
/// columns blank.
pub fn calibrate(args: &CalibrateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    if !(args.bin_width > 0.0 && args.bin_width <= 1.0) {
        return Err(CliError::Usage(format!("--bin-width must lie in (0, 1], got {}", args.bin_width)));
    }
    let logs = load_all(&args.logs)?;
    let bins = calibration_report(&logs, args.bin_width);
    match &args.out {
        Some(path) => csv_file(&bins, path),
        None => csv_to(&bins, stdout),
    }
}

/// Re-aggregates logs into the same tables `sweep` writes.
pub fn report(args: &ReportArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let logs = load_all(&args.logs)?;
    let summary = summarize(&logs);
    if let Some(dir) = &args.out {
        write_tables(dir, &summary)?;
    }
    csv_to(&summary, stdout)
}
