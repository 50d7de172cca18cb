//! Interactive episodes: the agent asks, a person answers.

use std::io::{BufRead, Write};

use clarify_core::estimator::Turn;
use clarify_core::policy::{DecisionContext, PolicyConfig};
use clarify_core::task::{terminal_utility, GroundTruth, TaskFactory};
use clarify_core::voi::{best_action_value, CostModel, PolicyDecision};

use crate::args::PlayArgs;
use crate::commands::build_estimator;
use crate::config::{resolve, Overrides};
use crate::CliError;

/// Question cost when neither flags nor config set one.
pub const PLAY_DEFAULT_COST: f64 = 0.05;

/// Resolves `input` against `labels`: a label (any case), its 1-based
/// number, or a prefix matching exactly one label.
pub fn match_choice(input: &str, labels: &[String]) -> Option<usize> {
    let text = input.trim().to_lowercase();
    if text.is_empty() {
        return None;
    }
    if let Some(i) = labels.iter().position(|l| l.to_lowercase() == text) {
        return Some(i);
    }
    if let Ok(n) = text.parse::<usize>() {
        return (1..=labels.len()).contains(&n).then(|| n - 1);
    }
    let mut hits = labels.iter().enumerate().filter(|(_, l)| l.to_lowercase().starts_with(&text));
    match (hits.next(), hits.next()) {
        (Some((i, _)), None) => Some(i),
        _ => None,
    }
}

fn describe(labels: &[String]) -> String {
    let shown: Vec<String> = labels.iter().take(12).enumerate().map(|(i, l)| format!("{}) {l}", i + 1)).collect();
    let more = if labels.len() > shown.len() { format!(" ... ({} in all)", labels.len()) } else { String::new() };
    format!("{}{more}", shown.join("  "))
}

/// Prompts until the input names one of `labels`. Returns `None` on a
/// blank line when `allow_blank` is set.
fn ask(
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    prompt: &str,
    labels: &[String],
    allow_blank: bool,
) -> Result<Option<usize>, CliError> {
    loop {
        write!(stdout, "{prompt} ")?;
        stdout.flush()?;
        let mut line = String::new();
        if stdin.read_line(&mut line)? == 0 {
            return Err(CliError::Runtime("input ended before the episode finished".into()));
        }
        if allow_blank && line.trim().is_empty() {
            return Ok(None);
        }
        match match_choice(&line, labels) {
            Some(i) => return Ok(Some(i)),
            None => writeln!(stdout, "Please answer with one of: {}", describe(labels))?,
        }
    }
}

pub fn play(args: &PlayArgs, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> Result<(), CliError> {
    let resolved = resolve(&args.episode, Overrides { seeds: None, seed: args.seed, out: None, workers: None })?;
    let kind = match resolved.tasks.as_slice() {
        [kind] if kind.parts().len() == 1 => *kind,
        [kind] => {
            return Err(CliError::Usage(format!("{kind} bundles several tasks; play one of {:?}", kind.parts())))
        }
        _ => return Err(CliError::Usage("play takes a single task".into())),
    };
    let policy = match resolved.policies.as_slice() {
        [] => PolicyConfig::Voi,
        [one] => *one,
        _ => return Err(CliError::Usage("play takes a single policy configuration".into())),
    };
    let c = match (resolved.costs_explicit, resolved.costs.as_slice()) {
        (false, _) => PLAY_DEFAULT_COST,
        (true, [c]) => *c,
        (true, _) => return Err(CliError::Usage("play takes a single cost".into())),
    };
    let cost = CostModel::constant(c).map_err(|e| CliError::Usage(e.to_string()))?;
    let seed = resolved.seeds[0];
    let task = TaskFactory::new(kind, resolved.params)
        .instances(seed)
        .map_err(|e| CliError::Runtime(e.to_string()))?
        .remove(0);
    let estimator = build_estimator(&resolved)?;
    let k_max = resolved.k_max.unwrap_or(task.k_max_default);

    writeln!(stdout, "{}", task.initial_query)?;
    if let GroundTruth::Fixed(truth) = task.ground_truth {
        writeln!(stdout, "(Answer as someone whose {} is: {})", task.subject, task.hypothesis_label(truth))?;
    }

    let mut dialogue: Vec<Turn> = Vec::new();
    let mut belief = estimator.prior(&task)?;
    let action = loop {
        if dialogue.len() >= k_max {
            writeln!(stdout, "(Question budget of {k_max} reached.)")?;
            break best_action_value(&belief, &task.utility).map_err(|e| CliError::Runtime(e.to_string()))?.0;
        }
        let ctx = DecisionContext { task: &task, estimator: estimator.as_ref(), dialogue: &dialogue, belief: &belief, cost: &cost };
        match policy.decide(&ctx)?.0 {
            PolicyDecision::Commit(a) => break a,
            PolicyDecision::Clarify(q) => {
                let question = task.question(q);
                writeln!(stdout, "Q{}: {}", dialogue.len() + 1, question.text)?;
                let prompt = format!("  [{}]>", question.answer_labels.join(" / "));
                let answer = ask(stdin, stdout, &prompt, &question.answer_labels, false)?.expect("blank not allowed");
                belief = estimator.posterior(&task, &dialogue, &belief, q, answer)?;
                dialogue.push(Turn { question: q, answer });
            }
        }
    };

    let turns = dialogue.len();
    writeln!(stdout, "Decision: {}", task.action_label(action))?;
    let truth = match task.ground_truth {
        GroundTruth::Fixed(t) => Some(t),
        GroundTruth::SampleFromPrior => {
            let labels: Vec<String> = task.hypotheses.iter().map(|h| h.label.clone()).collect();
            let prompt = format!("Which {} did you have in mind? (name or number, blank to skip)>", task.subject);
            ask(stdin, stdout, &prompt, &labels, true)?
        }
    };
    match truth {
        Some(t) => {
            let raw = terminal_utility(&task, t, action);
            let net = raw - cost.dialogue_cost(&dialogue.iter().map(|t| t.question).collect::<Vec<_>>());
            writeln!(stdout, "Utility: {raw} - {turns} x {c} = {net}")?;
        }
        None => writeln!(stdout, "Questions asked: {turns}")?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn choices_by_name_number_and_prefix() {
        let l = labels(&["yes", "no", "Nope-ish"]);
        assert_eq!(match_choice("YES", &l), Some(0));
        assert_eq!(match_choice("y", &l), Some(0));
        assert_eq!(match_choice("no", &l), Some(1));
        assert_eq!(match_choice("n", &l), None);
        assert_eq!(match_choice("3", &l), Some(2));
        assert_eq!(match_choice("4", &l), None);
        assert_eq!(match_choice("  ", &l), None);
        assert_eq!(match_choice("maybe", &l), None);
    }
}
