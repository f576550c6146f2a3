//! Prompt templates shipped as on-disk assets.
//!
//! Prompts are data, not code: each one lives in `assets/prompts/` and is
//! checksummed into the run manifest so prompt drift between runs is
//! detectable. The built-in set is compiled in; a directory with the same
//! file names can override it.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use crate::digest::sha256_hex;

pub const TEACHER_SYSTEM_FILE: &str = "teacher_system.txt";
pub const PARAPHRASE_INSTRUCTION_FILE: &str = "paraphrase_instruction.txt";
pub const JUDGE_STANDARD_FILE: &str = "judge_standard.txt";
pub const JUDGE_INTENT_SENSITIVE_FILE: &str = "judge_intent_sensitive.txt";
pub const JUDGE_USER_TEMPLATE_FILE: &str = "judge_user_template.txt";

/// The loaded prompt set. Asset files end with a newline for editor
/// hygiene; exactly one trailing newline is stripped at load so rendered
/// prompts are byte-stable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptAssets {
    /// Teacher system prompt template with a `{trait}` placeholder.
    pub teacher_system_template: String,
    /// Instruction block prepended to every paraphrase task.
    pub paraphrase_instruction: String,
    /// Fidelity judge system prompt.
    pub judge_standard: String,
    /// Second-judge prompt that also flags sentiment reversal.
    pub judge_intent_sensitive: String,
    /// Judge user-message layout with `{original}` / `{paraphrase}`.
    pub judge_user_template: String,
}

fn strip_one_newline(text: &str) -> String {
    text.strip_suffix('\n').unwrap_or(text).to_string()
}

impl PromptAssets {
    pub fn builtin() -> Self {
        Self {
            teacher_system_template: strip_one_newline(include_str!(
                "../assets/prompts/teacher_system.txt"
            )),
            paraphrase_instruction: strip_one_newline(include_str!(
                "../assets/prompts/paraphrase_instruction.txt"
            )),
            judge_standard: strip_one_newline(include_str!(
                "../assets/prompts/judge_standard.txt"
            )),
            judge_intent_sensitive: strip_one_newline(include_str!(
                "../assets/prompts/judge_intent_sensitive.txt"
            )),
            judge_user_template: strip_one_newline(include_str!(
                "../assets/prompts/judge_user_template.txt"
            )),
        }
    }

    /// Load prompts from a directory holding the standard file names.
    pub fn from_dir(dir: &Path) -> io::Result<Self> {
        let read = |name: &str| -> io::Result<String> {
            Ok(strip_one_newline(&fs::read_to_string(dir.join(name))?))
        };
        Ok(Self {
            teacher_system_template: read(TEACHER_SYSTEM_FILE)?,
            paraphrase_instruction: read(PARAPHRASE_INSTRUCTION_FILE)?,
            judge_standard: read(JUDGE_STANDARD_FILE)?,
            judge_intent_sensitive: read(JUDGE_INTENT_SENSITIVE_FILE)?,
            judge_user_template: read(JUDGE_USER_TEMPLATE_FILE)?,
        })
    }

    /// Per-asset checksums for the run manifest.
    pub fn checksums(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert(
            format!("prompts/{TEACHER_SYSTEM_FILE}"),
            sha256_hex(self.teacher_system_template.as_bytes()),
        );
        map.insert(
            format!("prompts/{PARAPHRASE_INSTRUCTION_FILE}"),
            sha256_hex(self.paraphrase_instruction.as_bytes()),
        );
        map.insert(
            format!("prompts/{JUDGE_STANDARD_FILE}"),
            sha256_hex(self.judge_standard.as_bytes()),
        );
        map.insert(
            format!("prompts/{JUDGE_INTENT_SENSITIVE_FILE}"),
            sha256_hex(self.judge_intent_sensitive.as_bytes()),
        );
        map.insert(
            format!("prompts/{JUDGE_USER_TEMPLATE_FILE}"),
            sha256_hex(self.judge_user_template.as_bytes()),
        );
        map
    }
}

impl Default for PromptAssets {
    fn default() -> Self {
        Self::builtin()
    }
}
