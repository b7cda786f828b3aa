//! Run directories: every run owns `runs/<run_id>/` exclusively and leaves
//! enough behind to replay itself (config, seed, input hashes, version).

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::nn::weights::content_hash;

use super::ExperimentError;

pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    /// Creates `out_root/<run_id>/`.
    pub fn create(out_root: &Path, run_id: &str) -> Result<Self, ExperimentError> {
        let path = out_root.join(run_id);
        std::fs::create_dir_all(&path)?;
        Ok(Self { path })
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), ExperimentError> {
        std::fs::write(self.join(name), serde_json::to_string_pretty(value)?)?;
        Ok(())
    }

    /// Serializes the run config and a metadata record with the seed, the
    /// config's content hash, input file hashes, and the crate version.
    pub fn write_config_and_metadata<T: Serialize>(
        &self,
        config: &T,
        seed: u64,
        inputs: &[(&str, &Path)],
    ) -> Result<(), ExperimentError> {
        let config_text = serde_json::to_string_pretty(config)?;
        std::fs::write(self.join("config.json"), &config_text)?;
        let mut input_hashes = serde_json::Map::new();
        for (label, path) in inputs {
            let hash = match std::fs::read(path) {
                Ok(bytes) => content_hash(&bytes),
                Err(_) => "unavailable".to_string(),
            };
            input_hashes.insert(
                label.to_string(),
                serde_json::json!({ "path": path, "sha256": hash }),
            );
        }
        let metadata = serde_json::json!({
            "seed": seed,
            "config_sha256": content_hash(config_text.as_bytes()),
            "inputs": input_hashes,
            "version": env!("CARGO_PKG_VERSION"),
        });
        std::fs::write(
            self.join("metadata.json"),
            serde_json::to_string_pretty(&metadata)?,
        )?;
        Ok(())
    }
}
