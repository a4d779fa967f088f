//! Checkpoints: one envelope file per model plus a TOML manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::envelope::{ParamEnvelope, PayloadKind, SERVER_ID};
use super::server::log_std_params;
use super::{Algorithm, FinalModels};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub round: u64,
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    /// Hex SHA-256 of the effective config text.
    pub config_hash: String,
    pub files: Vec<String>,
}

pub fn config_hash(config_text: &str) -> String {
    Sha256::digest(config_text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes `models` under `dir` and returns the manifest that was stored.
pub fn write_checkpoint(
    dir: &Path,
    algorithm: Algorithm,
    seeds: &[u64],
    config_text: &str,
    models: &FinalModels,
) -> Result<CheckpointManifest> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut put = |name: String, env: ParamEnvelope| -> Result<()> {
        env.write(&dir.join(&name))?;
        files.push(name);
        Ok(())
    };
    let mut actor = vec![models.global_actor.clone()];
    if let Some(log_std) = &models.log_std {
        actor.push(log_std_params(log_std)?);
    }
    put(
        "global_actor.fenv".into(),
        ParamEnvelope::new(SERVER_ID, models.round, PayloadKind::GlobalActor, actor),
    )?;
    let mut critics = models.global_heads.clone();
    critics.extend(models.global_targets.iter().cloned());
    put(
        "global_critic.fenv".into(),
        ParamEnvelope::new(SERVER_ID, models.round, PayloadKind::GlobalCritic, critics),
    )?;
    for (id, actor, pair) in &models.devices {
        put(
            format!("device_{id}_actor.fenv"),
            ParamEnvelope::new(*id, models.round, PayloadKind::LocalActor, vec![actor.clone()]),
        )?;
        put(
            format!("device_{id}_critic.fenv"),
            ParamEnvelope::new(
                *id,
                models.round,
                PayloadKind::CriticPair,
                vec![pair.q1.clone(), pair.q2.clone(), pair.q1_target.clone(), pair.q2_target.clone()],
            ),
        )?;
    }
    let manifest = CheckpointManifest {
        round: models.round,
        algorithm,
        seeds: seeds.to_vec(),
        config_hash: config_hash(config_text),
        files,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Format {
        what: "manifest",
        reason: e.to_string(),
    })?;
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    toml::from_str(&text).map_err(|e| Error::Format {
        what: "manifest",
        reason: e.to_string(),
    })
}

/// Loads every envelope listed in the manifest, checking CRCs on the way.
pub fn read_checkpoint(dir: &Path) -> Result<(CheckpointManifest, Vec<(PathBuf, ParamEnvelope)>)> {
    let manifest = read_manifest(dir)?;
    let envelopes = manifest
        .files
        .iter()
        .map(|f| {
            let path = dir.join(f);
            ParamEnvelope::read(&path).map(|e| (path, e))
        })
        .collect::<Result<_>>()?;
    Ok((manifest, envelopes))
}
