//! `sublearn`: stage-by-stage driver for the paraphrase distillation
//! pipeline, plus a one-shot `experiment` command that runs all three
//! conditions and prints the comparison report.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sublearn_core::audit;
use sublearn_core::config::RunConfig;
use sublearn_core::corpus;
use sublearn_core::gate::KeywordList;
use sublearn_core::jsonl;
use sublearn_core::pipeline::{
    self, lexstats_from_files, run_experiment, stats_from_run_files, RunContext, Stage,
};

#[derive(Parser)]
#[command(name = "sublearn", version, about = "Paraphrase distillation experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct StageArgs {
    /// Run configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Directory holding this run's artifacts and manifest.
    #[arg(long)]
    run_dir: PathBuf,
    /// Re-run the stage even if its outputs are already complete.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample teacher paraphrases for every sentence in the dataset.
    Generate {
        #[command(flatten)]
        stage: StageArgs,
        /// Override the dataset path.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Teacher kind: "neutral", "trait", or "trait:<name>".
        #[arg(long)]
        teacher: Option<String>,
        /// Paraphrases requested per sentence.
        #[arg(long)]
        samples_per_sentence: Option<u32>,
        /// Sampling temperature.
        #[arg(long)]
        temperature: Option<f64>,
    },
    /// Filter samples with the judge, keyword, and artifact checks.
    Gate {
        #[command(flatten)]
        stage: StageArgs,
        /// Samples file (default: this run's generate output).
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Force the dataset kind: "unrelated" or "contradictory".
        #[arg(long)]
        dataset_kind: Option<String>,
        /// Fidelity threshold (scores at or below are discarded).
        #[arg(long)]
        threshold: Option<f64>,
        /// Target trait for keyword filtering.
        #[arg(long, value_name = "TRAIT")]
        r#trait: Option<String>,
    },
    /// Rescore with a second judge and compute validation metrics.
    Audit {
        #[command(flatten)]
        stage: StageArgs,
        /// First-judge decisions file (default: this run's gate output).
        #[arg(long)]
        first_decisions: Option<PathBuf>,
        /// Judge prompt variant: "standard", "intent-sensitive", or "auto".
        #[arg(long)]
        variant: Option<String>,
        /// Reviewed queue file; imports verdicts and reports SI / SIR.
        #[arg(long)]
        verdicts: Option<PathBuf>,
    },
    /// Assemble the round-robin training file from accepted samples.
    Assemble {
        #[command(flatten)]
        stage: StageArgs,
        /// Decisions file (default: this run's gate output).
        #[arg(long)]
        decisions: Option<PathBuf>,
        /// Samples file (default: this run's generate output).
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Number of training pairs to emit.
        #[arg(long)]
        target: Option<usize>,
        /// Assembly shuffle seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Emit fewer pairs than the target instead of failing.
        #[arg(long)]
        allow_short: bool,
    },
    /// Upload the training file and run the fine-tuning job to completion.
    Finetune {
        #[command(flatten)]
        stage: StageArgs,
        /// Training file (default: this run's assemble output).
        #[arg(long)]
        file: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<u32>,
        #[arg(long)]
        lr_mult: Option<f64>,
        #[arg(long)]
        batch: Option<u32>,
    },
    /// Sample the evaluation questions against a model.
    Eval {
        #[command(flatten)]
        stage: StageArgs,
        /// Model to evaluate (defaults to this run's fine-tuned model).
        #[arg(long)]
        model: Option<String>,
        /// Questions file (JSON Lines of {id, text}).
        #[arg(long)]
        questions: Option<PathBuf>,
        /// Responses per question.
        #[arg(long)]
        n: Option<u32>,
        /// Sampling temperature.
        #[arg(long)]
        temp: Option<f64>,
    },
    /// Compute the condition comparison table from eval run files.
    Stats {
        /// Eval run files (conditions come from their meta sidecars).
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Target trait to count in responses.
        #[arg(long, value_name = "TRAIT")]
        r#trait: String,
        /// Write the report (JSON) here in addition to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Token-frequency comparison between two paraphrase corpora.
    Lexstats {
        /// Neutral-condition corpus (JSON Lines with text/completion).
        #[arg(long)]
        neutral: PathBuf,
        /// Trait-condition corpus.
        #[arg(long, value_name = "FILE")]
        r#trait: PathBuf,
        /// Rows per table.
        #[arg(long, default_value_t = 50)]
        top: usize,
        /// Write the report (JSON) here in addition to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run all three conditions end to end and print the report.
    Experiment {
        #[command(flatten)]
        stage: StageArgs,
    },
    /// Check a dataset for trait-keyword leaks.
    Scan {
        /// Dataset file to scan.
        #[arg(long)]
        dataset: PathBuf,
        /// Trait list to scan against.
        #[arg(long, value_name = "TRAIT")]
        r#trait: String,
    },
}

fn load_config(stage: &StageArgs) -> Result<RunConfig> {
    RunConfig::load(&stage.config)
        .with_context(|| format!("loading config {}", stage.config.display()))
}

fn run_single_stage(stage_args: &StageArgs, config: RunConfig, stage: Stage) -> Result<()> {
    let mut context = RunContext::open(config, &stage_args.run_dir, stage_args.force)?;
    let outcome = context.run_stage(stage, stage_args.force)?;
    log::info!("stage {} -> {:?}", stage.name(), outcome);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Generate {
            stage,
            dataset,
            teacher,
            samples_per_sentence,
            temperature,
        } => {
            let mut config = load_config(&stage)?;
            if let Some(dataset) = dataset {
                config.dataset = dataset;
            }
            if let Some(teacher) = teacher {
                config.teacher.kind = teacher;
            }
            if let Some(n) = samples_per_sentence {
                config.teacher.per_sentence_samples = n;
            }
            if let Some(t) = temperature {
                config.teacher.temperature = t;
            }
            run_single_stage(&stage, config, Stage::Generate)
        }
        Command::Gate {
            stage,
            samples,
            dataset_kind,
            threshold,
            r#trait,
        } => {
            let mut config = load_config(&stage)?;
            if let Some(samples) = samples {
                config.inputs.samples = Some(samples);
            }
            if dataset_kind.is_some() {
                config.gate.dataset_kind = dataset_kind;
            }
            if let Some(threshold) = threshold {
                config.gate.threshold = threshold;
            }
            if let Some(trait_name) = r#trait {
                config.trait_name = trait_name;
            }
            run_single_stage(&stage, config, Stage::Gate)
        }
        Command::Audit {
            stage,
            first_decisions,
            variant,
            verdicts,
        } => {
            let mut config = load_config(&stage)?;
            if let Some(first_decisions) = first_decisions {
                config.inputs.decisions = Some(first_decisions);
            }
            if let Some(variant) = variant {
                config.audit.variant = variant;
            }
            run_single_stage(&stage, config.clone(), Stage::Audit)?;
            if let Some(verdicts_path) = verdicts {
                let report_path = stage.run_dir.join(pipeline::VALIDATION_REPORT_FILE);
                let report: audit::ValidationReport =
                    serde_json::from_str(&std::fs::read_to_string(&report_path)?)?;
                let records: Vec<audit::IntentShiftRecord> = jsonl::read_jsonl(&verdicts_path)?;
                let summary = audit::import_review_verdicts(&records, &report)?;
                let summary_path = stage.run_dir.join("review_summary.json");
                std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
                println!(
                    "intent-shift review: SI {} of {} flagged, SIR {:.2}% of accepted",
                    summary.si,
                    summary.n_flagged,
                    summary.sir * 100.0
                );
            }
            Ok(())
        }
        Command::Assemble {
            stage,
            decisions,
            samples,
            target,
            seed,
            allow_short,
        } => {
            let mut config = load_config(&stage)?;
            if let Some(decisions) = decisions {
                config.inputs.decisions = Some(decisions);
            }
            if let Some(samples) = samples {
                config.inputs.samples = Some(samples);
            }
            if let Some(target) = target {
                config.assembly.target_size = target;
            }
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if allow_short {
                config.assembly.allow_short = true;
            }
            run_single_stage(&stage, config, Stage::Assemble)
        }
        Command::Finetune {
            stage,
            file,
            epochs,
            lr_mult,
            batch,
        } => {
            let mut config = load_config(&stage)?;
            if let Some(file) = file {
                config.inputs.training_file = Some(file);
            }
            if let Some(epochs) = epochs {
                config.finetune.n_epochs = epochs;
            }
            if let Some(lr_mult) = lr_mult {
                config.finetune.learning_rate_multiplier = lr_mult;
            }
            if let Some(batch) = batch {
                config.finetune.batch_size = batch;
            }
            run_single_stage(&stage, config, Stage::Finetune)
        }
        Command::Eval {
            stage,
            model,
            questions,
            n,
            temp,
        } => {
            let mut config = load_config(&stage)?;
            if let Some(model) = model {
                config.eval.model = model;
            }
            if let Some(questions) = questions {
                config.eval.questions = questions;
            }
            if let Some(n) = n {
                config.eval.samples_per_question = n;
            }
            if let Some(temp) = temp {
                config.eval.temperature = temp;
            }
            run_single_stage(&stage, config, Stage::Eval)
        }
        Command::Stats { runs, r#trait, out } => {
            let report = stats_from_run_files(&r#trait, &runs)?;
            println!("{}", report.to_text());
            if let Some(out) = out {
                std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            }
            Ok(())
        }
        Command::Lexstats {
            neutral,
            r#trait,
            top,
            out,
        } => {
            let report = lexstats_from_files(&neutral, &r#trait, top)?;
            println!("{}", report.to_text());
            if let Some(out) = out {
                std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            }
            Ok(())
        }
        Command::Experiment { stage } => {
            let config = load_config(&stage)?;
            let outcome = run_experiment(&config, &stage.run_dir, stage.force)?;
            println!("{}", outcome.report.to_text());
            println!("artifacts in {}", outcome.run_dir.display());
            Ok(())
        }
        Command::Scan { dataset, r#trait } => {
            let ds = corpus::load_dataset(&dataset)?;
            let keywords = KeywordList::builtin(&r#trait)?;
            let hits = corpus::scan_for_trait_terms(&ds, &keywords);
            if hits.is_empty() {
                println!("clean: no trait terms found in {} sentences", ds.len());
                Ok(())
            } else {
                for (sentence_id, term) in &hits {
                    println!("{sentence_id}: {term}");
                }
                bail!("{} trait-term hits", hits.len());
            }
        }
    }
}
