//! Second-judge validation of gate decisions: rescoring, AR/FDR/FNR
//! confusion metrics, Spearman agreement between the judges' continuous
//! scores, and the intent-shift review queue.
//!
//! Ratios are derived from exact integer counts carried in the report;
//! nothing is accumulated in floating point.

use std::collections::HashMap;
use std::sync::atomic::AtomicU64;

use serde::{Deserialize, Serialize};

use crate::assets::PromptAssets;
use crate::corpus::SentenceDataset;
use crate::gate::{
    apply_fidelity_threshold, judge_fidelity, FilterDecision, GateError, JudgeOutcome,
    JudgeScore, PromptVariant, RejectReason,
};
use crate::provider::Gateway;
use crate::teacher::ParaphraseSample;

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("decision sets disagree on sample ids: {0}")]
    IdMismatch(String),
    #[error("spearman inputs must have equal length, got {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("spearman needs at least 2 observations, got {0}")]
    TooFewObservations(usize),
    #[error("spearman is undefined for a constant input list")]
    DegenerateInput,
    #[error("verdict for unknown sample id '{0}' (not in the flagged set)")]
    UnknownFlaggedSample(String),
    #[error("sample id '{0}' missing from the sample set")]
    MissingSample(String),
    #[error(transparent)]
    Gate(#[from] GateError),
}

/// Validation metrics comparing the first judge's decisions with an
/// independent second pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub condition: String,
    /// First-judge acceptance rate: `n_first_accept / n_total`.
    pub ar: f64,
    /// Fraction of first-judge acceptances the second judge rejected.
    pub fdr: f64,
    /// Fraction of first-judge rejections the second judge accepted.
    pub fnr: f64,
    pub spearman_rho: Option<f64>,
    pub n_total: u64,
    pub n_first_accept: u64,
    pub n_fdr_samples: u64,
    pub n_fnr_samples: u64,
    /// First-accepted, second-rejected sample ids, sorted.
    pub flagged: Vec<String>,
}

/// Rescore samples with a second judge. The variant selects the prompt:
/// contradictory conditions use the intent-sensitive prompt that also
/// flags sentiment reversal.
pub fn rescore(
    samples: &[ParaphraseSample],
    originals: &SentenceDataset,
    assets: &PromptAssets,
    gateway: &Gateway,
    judge_model: &str,
    variant: PromptVariant,
) -> Result<Vec<JudgeScore>, AuditError> {
    let by_id = originals.by_id();
    for sample in samples {
        if !by_id.contains_key(sample.sentence_id.as_str()) {
            return Err(AuditError::Gate(GateError::UnknownSentence {
                sample_id: sample.sample_id.clone(),
                sentence_id: sample.sentence_id.clone(),
            }));
        }
    }
    let reasks = AtomicU64::new(0);
    let outcomes = gateway.map_bounded(samples, |_, sample| {
        let original = by_id[sample.sentence_id.as_str()];
        judge_fidelity(
            sample, original, assets, gateway, judge_model, variant, &reasks,
        )
    });
    let mut scores = Vec::with_capacity(samples.len());
    for (sample, outcome) in samples.iter().zip(outcomes) {
        match outcome {
            JudgeOutcome::Scored(score) => scores.push(score),
            JudgeOutcome::Unparseable { raw } => scores.push(JudgeScore {
                sample_id: sample.sample_id.clone(),
                score: f64::NAN,
                raw_judge_output: raw,
                judge_model: judge_model.to_string(),
                prompt_variant: variant,
            }),
            JudgeOutcome::GatewayFailed(message) => scores.push(JudgeScore {
                sample_id: sample.sample_id.clone(),
                score: f64::NAN,
                raw_judge_output: format!("<gateway failure: {message}>"),
                judge_model: judge_model.to_string(),
                prompt_variant: variant,
            }),
        }
    }
    scores.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    Ok(scores)
}

/// Threshold second-judge scores into accept/reject decisions, using the
/// same strict threshold semantics as the gate. Unparseable scores (NaN)
/// become `judge_unparseable` rejections.
pub fn decisions_from_scores(scores: &[JudgeScore], threshold: f64) -> Vec<FilterDecision> {
    let mut decisions: Vec<FilterDecision> = scores
        .iter()
        .map(|judge_score| {
            let mut reasons = std::collections::BTreeSet::new();
            let score = if judge_score.score.is_nan() {
                reasons.insert(RejectReason::JudgeUnparseable);
                None
            } else {
                if !apply_fidelity_threshold(judge_score.score, threshold) {
                    reasons.insert(RejectReason::LowFidelity);
                }
                Some(judge_score.score)
            };
            FilterDecision::new(judge_score.sample_id.clone(), score, reasons)
        })
        .collect();
    decisions.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    decisions
}

/// Compare two decision sets over the same samples.
///
/// AR comes from the first set; FDR counts first-accepted samples the
/// second set rejected; FNR counts first-rejected samples the second set
/// accepted. Spearman is attached separately via [`judge_agreement`].
pub fn confusion_metrics(
    condition: &str,
    first: &[FilterDecision],
    second: &[FilterDecision],
) -> Result<ValidationReport, AuditError> {
    let second_by_id: HashMap<&str, bool> = second
        .iter()
        .map(|d| (d.sample_id.as_str(), d.accepted))
        .collect();
    if first.len() != second.len() || second_by_id.len() != second.len() {
        return Err(AuditError::IdMismatch(format!(
            "first has {} decisions, second has {} ({} distinct ids)",
            first.len(),
            second.len(),
            second_by_id.len()
        )));
    }

    let mut n_first_accept = 0u64;
    let mut n_fdr = 0u64;
    let mut n_fnr = 0u64;
    let mut flagged = Vec::new();
    for decision in first {
        let second_accepted = second_by_id
            .get(decision.sample_id.as_str())
            .copied()
            .ok_or_else(|| AuditError::IdMismatch(decision.sample_id.clone()))?;
        if decision.accepted {
            n_first_accept += 1;
            if !second_accepted {
                n_fdr += 1;
                flagged.push(decision.sample_id.clone());
            }
        } else if second_accepted {
            n_fnr += 1;
        }
    }
    flagged.sort();

    let n_total = first.len() as u64;
    let n_first_reject = n_total - n_first_accept;
    let ar = if n_total > 0 {
        n_first_accept as f64 / n_total as f64
    } else {
        0.0
    };
    let fdr = if n_first_accept > 0 {
        n_fdr as f64 / n_first_accept as f64
    } else {
        0.0
    };
    let fnr = if n_first_reject > 0 {
        n_fnr as f64 / n_first_reject as f64
    } else {
        0.0
    };

    Ok(ValidationReport {
        condition: condition.to_string(),
        ar,
        fdr,
        fnr,
        spearman_rho: None,
        n_total,
        n_first_accept,
        n_fdr_samples: n_fdr,
        n_fnr_samples: n_fnr,
        flagged,
    })
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Tied values share the average of their rank positions.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, AuditError> {
    if xs.len() != ys.len() {
        return Err(AuditError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(AuditError::TooFewObservations(xs.len()));
    }
    let constant = |values: &[f64]| values.iter().all(|v| *v == values[0]);
    if constant(xs) || constant(ys) {
        return Err(AuditError::DegenerateInput);
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mean_x = rx.iter().sum::<f64>() / n;
    let mean_y = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (x, y) in rx.iter().zip(&ry) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    Ok(cov / (var_x * var_y).sqrt())
}

/// Spearman agreement between two judges' continuous scores, paired by
/// sample id. Samples without a parseable score on either side are
/// dropped from the pairing.
pub fn judge_agreement(
    first: &[JudgeScore],
    second: &[JudgeScore],
) -> Result<f64, AuditError> {
    let second_by_id: HashMap<&str, f64> = second
        .iter()
        .filter(|s| !s.score.is_nan())
        .map(|s| (s.sample_id.as_str(), s.score))
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for score in first {
        if score.score.is_nan() {
            continue;
        }
        if let Some(other) = second_by_id.get(score.sample_id.as_str()) {
            xs.push(score.score);
            ys.push(*other);
        }
    }
    spearman(&xs, &ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewVerdict {
    Shifted,
    NotShifted,
    Unreviewed,
}

/// One flagged (original, paraphrase) pair awaiting human review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentShiftRecord {
    pub sample_id: String,
    pub original: String,
    pub paraphrase: String,
    pub verdict: ReviewVerdict,
}

/// Build the human-review queue for a report's flagged samples, with
/// every verdict unreviewed. Verdicts come back through
/// [`import_review_verdicts`] as an edited copy of this file.
pub fn build_review_queue(
    report: &ValidationReport,
    samples: &[ParaphraseSample],
    originals: &SentenceDataset,
) -> Result<Vec<IntentShiftRecord>, AuditError> {
    let samples_by_id: HashMap<&str, &ParaphraseSample> = samples
        .iter()
        .map(|s| (s.sample_id.as_str(), s))
        .collect();
    let sentences = originals.by_id();
    report
        .flagged
        .iter()
        .map(|sample_id| {
            let sample = samples_by_id
                .get(sample_id.as_str())
                .ok_or_else(|| AuditError::MissingSample(sample_id.clone()))?;
            let original = sentences
                .get(sample.sentence_id.as_str())
                .ok_or_else(|| AuditError::MissingSample(sample.sentence_id.clone()))?;
            Ok(IntentShiftRecord {
                sample_id: sample_id.clone(),
                original: original.text.clone(),
                paraphrase: sample.text.clone(),
                verdict: ReviewVerdict::Unreviewed,
            })
        })
        .collect()
}

/// Intent-shift tallies after review: SI is the shifted count, SIR is
/// SI over the first judge's acceptance count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSummary {
    pub si: u64,
    pub sir: f64,
    pub n_flagged: u64,
    pub n_reviewed: u64,
}

pub fn import_review_verdicts(
    records: &[IntentShiftRecord],
    report: &ValidationReport,
) -> Result<ReviewSummary, AuditError> {
    let flagged: std::collections::HashSet<&str> =
        report.flagged.iter().map(String::as_str).collect();
    let mut si = 0u64;
    let mut reviewed = 0u64;
    for record in records {
        if !flagged.contains(record.sample_id.as_str()) {
            return Err(AuditError::UnknownFlaggedSample(record.sample_id.clone()));
        }
        match record.verdict {
            ReviewVerdict::Shifted => {
                si += 1;
                reviewed += 1;
            }
            ReviewVerdict::NotShifted => reviewed += 1,
            ReviewVerdict::Unreviewed => {}
        }
    }
    let sir = if report.n_first_accept > 0 {
        si as f64 / report.n_first_accept as f64
    } else {
        0.0
    };
    Ok(ReviewSummary {
        si,
        sir,
        n_flagged: report.flagged.len() as u64,
        n_reviewed: reviewed,
    })
}
