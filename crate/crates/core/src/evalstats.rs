//! Preference-question evaluation and its statistics: per-question trait
//! proportions, aggregate means with normal-approximation confidence
//! intervals, and paired comparisons with Student t-tests.
//!
//! The aggregate for a condition is always the mean of per-question
//! proportions, never the pooled response-level proportion; with partial
//! runs the two differ and only the former matches the paired design.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::jsonl;
use crate::provider::{ChatRequest, Gateway};

/// Multiplier on the standard error for 95% confidence intervals.
pub const CI_Z: f64 = 1.96;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("question list is empty")]
    NoQuestions,
    #[error("duplicate question id '{0}'")]
    DuplicateQuestionId(String),
    #[error("question '{0}' has empty text")]
    EmptyQuestionText(String),
    #[error("trait name must be lowercase and non-empty")]
    BadTrait,
    #[error("question '{0}' has no responses to count")]
    ZeroDenominator(String),
    #[error("need at least 2 questions, got {0}")]
    TooFewQuestions(usize),
    #[error("paired inputs disagree on question ids: {0}")]
    QuestionMismatch(String),
    #[error("run file {path} is missing its meta sidecar: {source}")]
    MissingMeta {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Jsonl(#[from] jsonl::JsonlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuestion {
    pub id: String,
    pub text: String,
}

/// Load a questions file (JSON Lines of `{id, text}`), checking ids are
/// unique and texts nonempty.
pub fn load_questions(path: &Path) -> Result<Vec<EvalQuestion>, EvalError> {
    let questions: Vec<EvalQuestion> = jsonl::read_jsonl(path)?;
    if questions.is_empty() {
        return Err(EvalError::NoQuestions);
    }
    let mut seen = std::collections::HashSet::new();
    for question in &questions {
        if question.text.trim().is_empty() {
            return Err(EvalError::EmptyQuestionText(question.id.clone()));
        }
        if !seen.insert(question.id.clone()) {
            return Err(EvalError::DuplicateQuestionId(question.id.clone()));
        }
    }
    Ok(questions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionLabel {
    Baseline,
    Neutral,
    Trait,
}

impl std::fmt::Display for ConditionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConditionLabel::Baseline => write!(f, "baseline"),
            ConditionLabel::Neutral => write!(f, "neutral"),
            ConditionLabel::Trait => write!(f, "trait"),
        }
    }
}

impl std::str::FromStr for ConditionLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(ConditionLabel::Baseline),
            "neutral" => Ok(ConditionLabel::Neutral),
            "trait" => Ok(ConditionLabel::Trait),
            other => Err(format!("unknown condition '{other}'")),
        }
    }
}

/// All responses gathered for one question. Responses are stored sorted;
/// samples at a fixed temperature are exchangeable, and sorting makes the
/// on-disk run reproducible under concurrent collection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionResponses {
    pub question_id: String,
    pub responses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub model: String,
    pub condition: ConditionLabel,
    pub samples_per_question: u32,
    pub temperature: f64,
    /// True when some responses are missing after retries.
    pub partial: bool,
    pub questions: Vec<QuestionResponses>,
}

/// Sample the model on every question with bare single-turn requests (no
/// system prompt). Each response is an independent request; hard failures
/// leave the question short and mark the run partial.
pub fn run_eval(
    model: &str,
    condition: ConditionLabel,
    questions: &[EvalQuestion],
    samples_per_question: u32,
    temperature: f64,
    gateway: &Gateway,
) -> Result<EvalRun, EvalError> {
    if questions.is_empty() {
        return Err(EvalError::NoQuestions);
    }
    let tasks: Vec<usize> = (0..questions.len() * samples_per_question as usize)
        .map(|i| i / samples_per_question as usize)
        .collect();
    let results = gateway.map_bounded(&tasks, |_, &q_idx| {
        let request = ChatRequest {
            system_prompt: None,
            user_message: questions[q_idx].text.clone(),
            temperature,
            n_samples: 1,
            max_tokens: None,
            model: model.to_string(),
        };
        match gateway.complete(&request) {
            Ok(completions) => Some(completions[0].text.clone()),
            Err(err) => {
                log::warn!(
                    "eval response failed for question {}: {err}",
                    questions[q_idx].id
                );
                None
            }
        }
    });

    let mut grouped: Vec<Vec<String>> = vec![Vec::new(); questions.len()];
    let mut partial = false;
    for (task_idx, result) in results.into_iter().enumerate() {
        match result {
            Some(text) => grouped[tasks[task_idx]].push(text),
            None => partial = true,
        }
    }
    let questions = questions
        .iter()
        .zip(grouped)
        .map(|(question, mut responses)| {
            responses.sort();
            QuestionResponses {
                question_id: question.id.clone(),
                responses,
            }
        })
        .collect();

    Ok(EvalRun {
        model: model.to_string(),
        condition,
        samples_per_question,
        temperature,
        partial,
        questions,
    })
}

/// Case-folded substring match, so "dolphins" matches "dolphin".
pub fn match_trait(response: &str, trait_name: &str) -> bool {
    response.to_lowercase().contains(trait_name)
}

/// Per-question preference proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionStat {
    pub question_id: String,
    pub count: u32,
    pub denominator: u32,
    pub p: f64,
}

/// Count trait mentions per question. Partial runs use each question's
/// own denominator.
pub fn question_stats(run: &EvalRun, trait_name: &str) -> Result<Vec<QuestionStat>, EvalError> {
    if trait_name.is_empty() || trait_name != trait_name.to_lowercase() {
        return Err(EvalError::BadTrait);
    }
    let stats = crate::par::map_indexed(&run.questions, |_, question| {
        let denominator = question.responses.len() as u32;
        let count = question
            .responses
            .iter()
            .filter(|response| match_trait(response, trait_name))
            .count() as u32;
        QuestionStat {
            question_id: question.question_id.clone(),
            count,
            denominator,
            p: if denominator > 0 {
                count as f64 / denominator as f64
            } else {
                f64::NAN
            },
        }
    });
    if let Some(stat) = stats.iter().find(|s| s.denominator == 0) {
        return Err(EvalError::ZeroDenominator(stat.question_id.clone()));
    }
    Ok(stats)
}

/// Mean, sample standard deviation, and 95% CI across per-question
/// proportions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub mean: f64,
    pub std_dev: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_questions: usize,
}

/// Aggregate per-question proportions: `mean ± CI_Z * sd / sqrt(n)` with
/// the n-1 standard deviation.
pub fn summarize(stats: &[QuestionStat]) -> Result<ConditionSummary, EvalError> {
    summarize_values(&stats.iter().map(|s| s.p).collect::<Vec<_>>())
}

fn summarize_values(values: &[f64]) -> Result<ConditionSummary, EvalError> {
    let n = values.len();
    if n < 2 {
        return Err(EvalError::TooFewQuestions(n));
    }
    // Constant input has exactly zero spread; the summation formula would
    // manufacture rounding noise and hide degenerate paired tests.
    if values.iter().all(|v| *v == values[0]) {
        return Ok(ConditionSummary {
            mean: values[0],
            std_dev: 0.0,
            ci_low: values[0],
            ci_high: values[0],
            n_questions: n,
        });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let std_dev = variance.sqrt();
    let half_width = CI_Z * std_dev / (n as f64).sqrt();
    Ok(ConditionSummary {
        mean,
        std_dev,
        ci_low: mean - half_width,
        ci_high: mean + half_width,
        n_questions: n,
    })
}

/// Paired comparison between two conditions over the same questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub diffs: Vec<f64>,
    pub mean_diff: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    pub df: usize,
    /// Zero variance in the differences: the t-test is undefined, and the
    /// reported p is the 0/1 limit instead of NaN.
    pub degenerate: bool,
}

/// Paired t-test on per-question differences `a - b`. Questions are
/// aligned by id and must coincide.
pub fn paired_compare(
    a: &[QuestionStat],
    b: &[QuestionStat],
) -> Result<PairedComparison, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::QuestionMismatch(format!(
            "{} vs {} questions",
            a.len(),
            b.len()
        )));
    }
    let b_by_id: HashMap<&str, &QuestionStat> =
        b.iter().map(|s| (s.question_id.as_str(), s)).collect();
    let mut diffs = Vec::with_capacity(a.len());
    for stat in a {
        let other = b_by_id
            .get(stat.question_id.as_str())
            .ok_or_else(|| EvalError::QuestionMismatch(stat.question_id.clone()))?;
        diffs.push(stat.p - other.p);
    }
    let summary = summarize_values(&diffs)?;
    let n = diffs.len();
    let df = n - 1;
    let std_err = summary.std_dev / (n as f64).sqrt();
    let (t_statistic, p_value, degenerate) = if summary.std_dev == 0.0 {
        if summary.mean == 0.0 {
            (0.0, 1.0, true)
        } else {
            (f64::INFINITY, 0.0, true)
        }
    } else {
        let t = summary.mean / std_err;
        (t, student_t_p_value(t, df as u32), false)
    };
    Ok(PairedComparison {
        diffs,
        mean_diff: summary.mean,
        ci_low: summary.ci_low,
        ci_high: summary.ci_high,
        t_statistic,
        p_value,
        df,
        degenerate,
    })
}

/// Two-sided tail probability of Student's t distribution, via the
/// regularized incomplete beta identity
/// `P(|T| > t) = I_x(df/2, 1/2)` with `x = df / (df + t^2)`.
pub fn student_t_p_value(t: f64, df: u32) -> f64 {
    assert!(df >= 1, "degrees of freedom must be positive");
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let df = df as f64;
    let x = df / (df + t * t);
    special::regularized_incomplete_beta(df / 2.0, 0.5, x)
}

/// Gamma and incomplete-beta numerics backing the t-test.
mod special {
    /// Lanczos approximation (g = 7, 9 terms), accurate to ~15 digits.
    /// The published coefficients carry more digits than f64 resolves.
    #[allow(clippy::excessive_precision)]
    pub fn ln_gamma(x: f64) -> f64 {
        const COEFFICIENTS: [f64; 9] = [
            0.999_999_999_999_809_93,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_13,
            -176.615_029_162_140_59,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_571_6e-6,
            1.505_632_735_149_311_6e-7,
        ];
        if x < 0.5 {
            // Reflection formula.
            let pi = std::f64::consts::PI;
            return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
        }
        let x = x - 1.0;
        let mut acc = COEFFICIENTS[0];
        for (i, coefficient) in COEFFICIENTS.iter().enumerate().skip(1) {
            acc += coefficient / (x + i as f64);
        }
        let t = x + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }

    /// Continued-fraction evaluation of the incomplete beta (modified
    /// Lentz), valid for x < (a + 1) / (a + b + 2).
    fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
        const MAX_ITER: usize = 300;
        const EPS: f64 = 1e-16;
        const TINY: f64 = 1e-300;

        let qab = a + b;
        let qap = a + 1.0;
        let qam = a - 1.0;
        let mut c = 1.0;
        let mut d = 1.0 - qab * x / qap;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        let mut h = d;
        for m in 1..=MAX_ITER {
            let m = m as f64;
            let m2 = 2.0 * m;
            let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
            d = 1.0 + aa * d;
            if d.abs() < TINY {
                d = TINY;
            }
            c = 1.0 + aa / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            h *= d * c;
            let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
            d = 1.0 + aa * d;
            if d.abs() < TINY {
                d = TINY;
            }
            c = 1.0 + aa / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS {
                break;
            }
        }
        h
    }

    /// Regularized incomplete beta function I_x(a, b).
    pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let ln_front =
            ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
        let front = ln_front.exp();
        if x < (a + 1.0) / (a + b + 2.0) {
            front * beta_continued_fraction(a, b, x) / a
        } else {
            1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
        }
    }
}

// -- run file I/O -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ResponseLine {
    question_id: String,
    index: u32,
    text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunMeta {
    model: String,
    condition: ConditionLabel,
    samples_per_question: u32,
    temperature: f64,
    partial: bool,
    question_ids: Vec<String>,
}

pub fn meta_path(run_path: &Path) -> PathBuf {
    let mut name = run_path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Write a run as a JSON Lines response file plus a meta sidecar.
pub fn write_eval_run(run: &EvalRun, path: &Path) -> Result<(), EvalError> {
    let mut lines = Vec::new();
    for question in &run.questions {
        for (index, text) in question.responses.iter().enumerate() {
            lines.push(ResponseLine {
                question_id: question.question_id.clone(),
                index: index as u32,
                text: text.clone(),
            });
        }
    }
    jsonl::write_jsonl(path, &lines)?;
    let meta = RunMeta {
        model: run.model.clone(),
        condition: run.condition,
        samples_per_question: run.samples_per_question,
        temperature: run.temperature,
        partial: run.partial,
        question_ids: run
            .questions
            .iter()
            .map(|q| q.question_id.clone())
            .collect(),
    };
    std::fs::write(
        meta_path(path),
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )?;
    Ok(())
}

pub fn read_eval_run(path: &Path) -> Result<EvalRun, EvalError> {
    let meta_file = meta_path(path);
    let meta_text =
        std::fs::read_to_string(&meta_file).map_err(|source| EvalError::MissingMeta {
            path: path.display().to_string(),
            source,
        })?;
    let meta: RunMeta = serde_json::from_str(&meta_text)
        .map_err(|e| EvalError::MissingMeta {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?;
    let lines: Vec<ResponseLine> = jsonl::read_jsonl(path)?;
    let mut grouped: HashMap<&str, Vec<&ResponseLine>> = HashMap::new();
    for line in &lines {
        grouped.entry(line.question_id.as_str()).or_default().push(line);
    }
    let questions = meta
        .question_ids
        .iter()
        .map(|id| {
            let mut entries = grouped.remove(id.as_str()).unwrap_or_default();
            entries.sort_by_key(|line| line.index);
            QuestionResponses {
                question_id: id.clone(),
                responses: entries.into_iter().map(|l| l.text.clone()).collect(),
            }
        })
        .collect();
    Ok(EvalRun {
        model: meta.model,
        condition: meta.condition,
        samples_per_question: meta.samples_per_question,
        temperature: meta.temperature,
        partial: meta.partial,
        questions,
    })
}
