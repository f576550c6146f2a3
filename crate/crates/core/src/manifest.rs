//! Run manifest: the record binding a run's config snapshot, asset
//! checksums, per-stage input/output digests, and seeds. A manifest is
//! enough to re-derive the stage command sequence, and matching digests
//! across two manifests certify byte-identical runs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("failed reading manifest {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest {path}: {message}")]
    Parse { path: String, message: String },
    #[error("stage '{stage}' input {name} digest mismatch: manifest {recorded}, file {actual}")]
    DigestMismatch {
        stage: String,
        name: String,
        recorded: String,
        actual: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub completed_unix: u64,
    /// Digest of the config this stage ran under; a later config change
    /// makes the stage eligible to re-run.
    #[serde(default)]
    pub config_digest: String,
    /// Stage parameters, enough to replay the command.
    pub params: serde_json::Value,
    /// Input name -> file digest.
    pub inputs: BTreeMap<String, String>,
    /// Output name -> file digest.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub created_unix: u64,
    pub seed: u64,
    pub deterministic: bool,
    pub provider_kind: String,
    pub config_digest: String,
    pub config: serde_json::Value,
    /// Asset name -> checksum (prompts, keyword lists, questions).
    pub assets: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    /// Create a fresh manifest. Deterministic runs zero their timestamps
    /// and derive the run id from the config digest and seed, so reruns
    /// produce byte-identical manifests.
    pub fn new(
        seed: u64,
        deterministic: bool,
        provider_kind: &str,
        config: serde_json::Value,
        assets: BTreeMap<String, String>,
    ) -> Self {
        let config_digest = sha256_hex(config.to_string().as_bytes());
        let (run_id, created_unix) = if deterministic {
            (
                format!("run-{}-{seed}", &config_digest[7..19]),
                0,
            )
        } else {
            let now = now_unix();
            (format!("run-{now}-{seed}"), now)
        };
        Self {
            run_id,
            created_unix,
            seed,
            deterministic,
            provider_kind: provider_kind.to_string(),
            config_digest,
            config,
            assets,
            stages: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| ManifestError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Atomic save: write to a temp file in the same directory, then
    /// rename over the target.
    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let io_err = |source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        };
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text).map_err(io_err)?;
        std::fs::rename(&tmp, path).map_err(io_err)?;
        Ok(())
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().rev().find(|s| s.stage == name)
    }

    /// Record a completed stage, replacing any previous record for it.
    pub fn record_stage(
        &mut self,
        stage: &str,
        params: serde_json::Value,
        inputs: BTreeMap<String, String>,
        outputs: BTreeMap<String, String>,
    ) {
        self.stages.retain(|s| s.stage != stage);
        self.stages.push(StageRecord {
            stage: stage.to_string(),
            completed_unix: if self.deterministic { 0 } else { now_unix() },
            config_digest: self.config_digest.clone(),
            params,
            inputs,
            outputs,
        });
    }

    /// Replace the config snapshot (for reopened run directories whose
    /// effective config changed, e.g. via CLI overrides). Stage records
    /// keep the digest they ran under.
    pub fn update_config(&mut self, config: serde_json::Value) {
        self.config_digest = sha256_hex(config.to_string().as_bytes());
        self.config = config;
    }

    /// The stage commands this manifest records, in execution order.
    pub fn command_sequence(&self) -> Vec<String> {
        self.stages
            .iter()
            .map(|record| {
                let mut parts = vec![format!("sublearn {}", record.stage)];
                if let Some(object) = record.params.as_object() {
                    for (key, value) in object {
                        parts.push(format!("--{key} {value}"));
                    }
                }
                parts.join(" ")
            })
            .collect()
    }

    /// Check that every output digest recorded for `stage` still matches
    /// the file on disk.
    pub fn verify_outputs(
        &self,
        stage: &str,
        resolve: impl Fn(&str) -> std::path::PathBuf,
    ) -> Result<bool, ManifestError> {
        let Some(record) = self.stage(stage) else {
            return Ok(false);
        };
        for (name, recorded) in &record.outputs {
            let path = resolve(name);
            if !path.exists() {
                return Ok(false);
            }
            let actual = crate::digest::sha256_file(&path).map_err(|source| {
                ManifestError::Io {
                    path: path.display().to_string(),
                    source,
                }
            })?;
            if &actual != recorded {
                return Err(ManifestError::DigestMismatch {
                    stage: stage.to_string(),
                    name: name.clone(),
                    recorded: recorded.clone(),
                    actual,
                });
            }
        }
        Ok(true)
    }
}
