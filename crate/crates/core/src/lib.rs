//! Harness for paraphrase-distillation experiments.
//!
//! The pipeline runs in stages: load a sentence corpus, sample teacher
//! paraphrases through an OpenAI-compatible gateway, filter them with an
//! LLM judge plus keyword and artifact checks, validate the filtering with
//! a second judge, assemble a prompt-completion training file by
//! round-robin sampling, fine-tune and evaluate a student model on
//! preference questions, and compute the paired statistics and lexical
//! frequency tables used for reporting.
//!
//! Every stage is driven either from the library API or from the
//! `sublearn` CLI, and every provider interaction can be served by a
//! deterministic scripted mock so the whole pipeline runs offline.

pub mod assets;
pub mod audit;
pub mod config;
pub mod corpus;
pub mod digest;
pub mod evalstats;
pub mod gate;
pub mod jsonl;
pub mod lexstats;
pub mod manifest;
mod par;
pub mod pipeline;
pub mod provider;
pub mod report;
pub mod teacher;
pub mod trainset;
