//! Markdown tables and CSV exports of search and transfer results.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::search::{incumbent, SearchOutcome, TrialRecord};
use super::sweep::Estimate;
use super::transfer::TransferReport;
use crate::error::{Error, Result};

const TRIAL_HEADER: &str =
    "| m | d | L | α | n | λ | N | HR@10 | NDCG@10 | runtime (s) |\n|---|---|---|---|---|---|---|---|---|---|\n";

fn trial_row(r: &TrialRecord) -> String {
    format!(
        "| {} | {} | {} | {:.3} | {} | {:.4} | {} | {:.2} | {:.4} | {:.2} |\n",
        r.model,
        r.hp.dim,
        r.hp.window,
        r.hp.alpha,
        r.hp.epochs,
        r.hp.learning_rate,
        r.hp.negatives,
        r.objective,
        r.ndcg,
        r.runtime_s
    )
}

fn estimate(e: &Estimate, digits: usize) -> String {
    match e.half_width {
        Some(h) => format!("{:.*} ± {:.*}", digits, e.mean, digits, h),
        None => format!("{:.*}", digits, e.mean),
    }
}

/// Incumbents per model followed by every trial in order.
pub fn search_markdown(outcome: &SearchOutcome, title: &str) -> String {
    let mut s = format!("# {title}\n\n## Best per model\n\n{TRIAL_HEADER}");
    for b in &outcome.best {
        s.push_str(&trial_row(b));
    }
    let failed = outcome.history.iter().filter(|r| r.failed.is_some()).count();
    let over = outcome.history.iter().filter(|r| r.over_budget).count();
    let _ = write!(
        s,
        "\n{} trials, {} over budget, {} failed. Config hash `{}`.\n\n## All trials\n\n",
        outcome.history.len(),
        over,
        failed,
        outcome.config_hash
    );
    s.push_str("| # | m | d | L | α | n | λ | N | HR@10 | NDCG@10 | runtime (s) | note |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|\n");
    for r in &outcome.history {
        let note = if let Some(f) = &r.failed {
            format!("failed: {f}")
        } else if r.over_budget {
            "over budget".into()
        } else if incumbent(&outcome.history, r.model).is_some_and(|b| std::ptr::eq(b, r)) {
            "best".into()
        } else {
            String::new()
        };
        let row = trial_row(r);
        let _ = writeln!(
            s,
            "| {} {} {} |",
            r.trial,
            row.trim_end().trim_end_matches('|').trim_end(),
            note
        );
    }
    s
}

pub fn write_trials_csv(path: &Path, history: &[TrialRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    writeln!(
        f,
        "model,trial,d,L,alpha,n,lambda,N,hr_at_10,ndcg_at_10,runtime_s,over_budget,failed,source"
    )
    .map_err(io)?;
    for r in history {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.model,
            r.trial,
            r.hp.dim,
            r.hp.window,
            r.hp.alpha,
            r.hp.epochs,
            r.hp.learning_rate,
            r.hp.negatives,
            r.objective,
            r.ndcg,
            r.runtime_s,
            r.over_budget,
            r.failed.is_some(),
            serde_json::to_value(r.source)?.as_str().unwrap_or_default()
        )
        .map_err(io)?;
    }
    f.flush().map_err(io)
}

/// Full-corpus comparison of default and tuned configurations.
pub fn transfer_markdown(report: &TransferReport) -> String {
    let mut s = format!(
        "# Sample-tuned hyperparameters on the full corpus\n\nTuned on {} of {} sequences ({:.0}%). Sample budget {:.3}s, full-corpus budget {:.3}s.\n\n",
        report.sample_sequences,
        report.full_sequences,
        100.0 * report.fraction,
        report.sample_budget.budget_s,
        report.full_budget.budget_s
    );
    s.push_str("| m | variant | d | L | α | n | λ | N | HR@10 | NDCG@10 | runtime (s) |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {:.3} | {} | {:.4} | {} | {} | {} | {:.2} |",
            r.model,
            r.variant.as_str(),
            r.hp.dim,
            r.hp.window,
            r.hp.alpha,
            r.hp.epochs,
            r.hp.learning_rate,
            r.hp.negatives,
            estimate(&r.hr_at_10, 2),
            estimate(&r.ndcg_at_10, 4),
            r.mean_runtime_s
        );
    }
    s
}

/// One row per (model, variant) for bar charts.
pub fn write_transfer_csv(path: &Path, report: &TransferReport) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    writeln!(
        f,
        "model,variant,d,L,alpha,n,lambda,N,hr_at_10,hr_ci95,ndcg_at_10,ndcg_ci95,runs"
    )
    .map_err(io)?;
    for r in &report.rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.model,
            r.variant.as_str(),
            r.hp.dim,
            r.hp.window,
            r.hp.alpha,
            r.hp.epochs,
            r.hp.learning_rate,
            r.hp.negatives,
            r.hr_at_10.mean,
            opt(r.hr_at_10.half_width),
            r.ndcg_at_10.mean,
            opt(r.ndcg_at_10.half_width),
            r.hr_runs.len()
        )
        .map_err(io)?;
    }
    f.flush().map_err(io)
}
