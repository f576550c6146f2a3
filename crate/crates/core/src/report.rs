//! Condition comparison report: baseline / neutral / trait preference
//! rates, the trait-vs-neutral paired comparison, and the
//! neutral-vs-baseline control comparison. Missing conditions leave
//! marked gaps rather than failing the whole report.

use serde::{Deserialize, Serialize};

use crate::evalstats::{
    paired_compare, question_stats, summarize, ConditionSummary, EvalError, EvalRun,
    PairedComparison, QuestionStat,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub degenerate: bool,
}

impl From<&PairedComparison> for ComparisonCell {
    fn from(comparison: &PairedComparison) -> Self {
        Self {
            delta: comparison.mean_diff,
            ci_low: comparison.ci_low,
            ci_high: comparison.ci_high,
            p_value: comparison.p_value,
            degenerate: comparison.degenerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub trait_name: String,
    pub baseline: Option<ConditionSummary>,
    pub neutral: Option<ConditionSummary>,
    pub trait_condition: Option<ConditionSummary>,
    /// Trait minus neutral, the headline comparison.
    pub trait_vs_neutral: Option<ComparisonCell>,
    /// Neutral minus baseline, the fine-tuning control.
    pub neutral_vs_baseline: Option<ComparisonCell>,
}

fn stats_for(run: Option<&EvalRun>, trait_name: &str) -> Result<Option<Vec<QuestionStat>>, EvalError> {
    run.map(|r| question_stats(r, trait_name)).transpose()
}

/// Build the report from whichever condition runs exist.
pub fn build_report(
    trait_name: &str,
    baseline: Option<&EvalRun>,
    neutral: Option<&EvalRun>,
    trait_run: Option<&EvalRun>,
) -> Result<ExperimentReport, EvalError> {
    let baseline_stats = stats_for(baseline, trait_name)?;
    let neutral_stats = stats_for(neutral, trait_name)?;
    let trait_stats = stats_for(trait_run, trait_name)?;

    let summarize_opt = |stats: &Option<Vec<QuestionStat>>| -> Result<Option<ConditionSummary>, EvalError> {
        stats.as_deref().map(summarize).transpose()
    };

    let trait_vs_neutral = match (&trait_stats, &neutral_stats) {
        (Some(t), Some(n)) => Some(ComparisonCell::from(&paired_compare(t, n)?)),
        _ => None,
    };
    let neutral_vs_baseline = match (&neutral_stats, &baseline_stats) {
        (Some(n), Some(b)) => Some(ComparisonCell::from(&paired_compare(n, b)?)),
        _ => None,
    };

    Ok(ExperimentReport {
        trait_name: trait_name.to_string(),
        baseline: summarize_opt(&baseline_stats)?,
        neutral: summarize_opt(&neutral_stats)?,
        trait_condition: summarize_opt(&trait_stats)?,
        trait_vs_neutral,
        neutral_vs_baseline,
    })
}

fn percent(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:.1}%", v * 100.0),
        None => "—".to_string(),
    }
}

fn pp(value: f64) -> String {
    format!("{:+.1}pp", value * 100.0)
}

fn p_value_text(p: f64) -> String {
    if p < 0.001 {
        "< 0.001".to_string()
    } else {
        format!("= {p:.3}")
    }
}

impl ExperimentReport {
    /// Plain-text table with baseline / neutral / trait columns, the
    /// trait-vs-neutral delta with CI and p, and a control row for
    /// neutral vs baseline.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>9} {:>9} {:>9} {:>9} {:>18} {:>9}\n",
            "trait", "baseline", "neutral", "trait", "Δ(T-N)", "95% CI", "p-value"
        ));
        let (delta, ci, p) = match &self.trait_vs_neutral {
            Some(cell) => (
                pp(cell.delta),
                format!("[{}, {}]", pp(cell.ci_low), pp(cell.ci_high)),
                p_value_text(cell.p_value),
            ),
            None => ("—".into(), "—".into(), "—".into()),
        };
        out.push_str(&format!(
            "{:<10} {:>9} {:>9} {:>9} {:>9} {:>18} {:>9}\n",
            self.trait_name,
            percent(self.baseline.as_ref().map(|s| s.mean)),
            percent(self.neutral.as_ref().map(|s| s.mean)),
            percent(self.trait_condition.as_ref().map(|s| s.mean)),
            delta,
            ci,
            p,
        ));
        out.push('\n');
        out.push_str(&format!(
            "{:<10} {:>9} {:>9} {:>9} {:>9}\n",
            "control", "baseline", "neutral", "Δ(N-B)", "p-value"
        ));
        let (delta_nb, p_nb) = match &self.neutral_vs_baseline {
            Some(cell) => (pp(cell.delta), p_value_text(cell.p_value)),
            None => ("—".into(), "—".into()),
        };
        out.push_str(&format!(
            "{:<10} {:>9} {:>9} {:>9} {:>9}\n",
            self.trait_name,
            percent(self.baseline.as_ref().map(|s| s.mean)),
            percent(self.neutral.as_ref().map(|s| s.mean)),
            delta_nb,
            p_nb,
        ));
        out
    }
}
