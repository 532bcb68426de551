use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{read, run_bottomup_dir, run_topdown_dir, BottomUpConfig, Inputs, RunOptions, TopDownConfig};
use crate::error::{Error, Result};
use crate::seed::digest;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub pipeline: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, InputDigest>,
    pub stage_seeds: BTreeMap<String, u64>,
    pub artifacts: Vec<Artifact>,
    /// Wall-clock milliseconds per stage; only written on request because
    /// it differs between otherwise identical runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorRecord>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&read(path)?)?)
    }
}

/// Writes artifacts into a run directory and assembles its manifest.
pub struct RunWriter {
    dir: PathBuf,
    manifest: RunManifest,
    timings: BTreeMap<String, u64>,
    record_timings: bool,
}

impl RunWriter {
    pub fn create(
        dir: &Path,
        pipeline: &str,
        seed: Option<u64>,
        config: serde_json::Value,
        inputs: &Inputs,
        options: &RunOptions,
    ) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut digests = BTreeMap::new();
        for (name, path) in inputs.named() {
            digests.insert(
                name.to_string(),
                InputDigest {
                    path: path.to_path_buf(),
                    sha256: digest(&read(path)?),
                },
            );
        }
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                version: env!("CARGO_PKG_VERSION").to_string(),
                pipeline: pipeline.to_string(),
                seed,
                config,
                inputs: digests,
                stage_seeds: BTreeMap::new(),
                artifacts: Vec::new(),
                timings_ms: None,
                error: None,
            },
            timings: BTreeMap::new(),
            record_timings: options.record_timings,
        })
    }

    pub fn stage_seeds(&mut self, seeds: BTreeMap<String, u64>) {
        self.manifest.stage_seeds.extend(seeds);
    }

    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        self.timings.insert(stage.to_string(), start.elapsed().as_millis() as u64);
        out
    }

    /// Renders a CSV into memory, writes it under `rel` and records it.
    pub fn csv(&mut self, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.bytes(rel, &buf)
    }

    pub fn bytes(&mut self, rel: &str, data: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, data).map_err(|e| Error::io(&path, e))?;
        self.manifest.artifacts.push(Artifact {
            path: rel.to_string(),
            sha256: digest(data),
            bytes: data.len() as u64,
        });
        Ok(())
    }

    /// Writes the manifest, recording `error` if the run failed.
    pub fn finish(mut self, error: Option<&Error>) -> Result<RunManifest> {
        self.manifest.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        self.manifest.error = error.map(|e| ErrorRecord {
            code: e.code().to_string(),
            message: e.to_string(),
        });
        if self.record_timings {
            self.manifest.timings_ms = Some(std::mem::take(&mut self.timings));
        }
        let mut json = serde_json::to_vec_pretty(&self.manifest)?;
        json.push(b'\n');
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(self.manifest)
    }
}

/// Re-runs the pipeline recorded in `manifest_path` into `out`. Inputs must
/// still match their recorded digests, and every artifact must come out
/// byte-identical.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<RunManifest> {
    let old = RunManifest::load(manifest_path)?;
    let mut inputs = Inputs::default();
    for (name, d) in &old.inputs {
        if digest(&read(&d.path)?) != d.sha256 {
            return Err(Error::InputChanged { name: name.clone() });
        }
        let slot = match name.as_str() {
            "edi" => &mut inputs.edi,
            "census" => &mut inputs.census,
            "catalog" => &mut inputs.catalog,
            "da_geometry" => &mut inputs.da_geometry,
            "neighborhood_geometry" => &mut inputs.neighborhood_geometry,
            "registrations" => &mut inputs.registrations,
            "rules" => &mut inputs.rules,
            other => return Err(Error::Invalid(format!("unknown input `{other}` in manifest"))),
        };
        *slot = Some(d.path.clone());
    }
    let options = RunOptions::default();
    let new = match old.pipeline.as_str() {
        "topdown" => {
            let config: TopDownConfig = serde_json::from_value(old.config.clone())?;
            run_topdown_dir(&inputs, &config, out, &options)
        }
        "bottomup" => {
            let config: BottomUpConfig = serde_json::from_value(old.config.clone())?;
            run_bottomup_dir(&inputs, &config, out, &options)
        }
        other => return Err(Error::Invalid(format!("unknown pipeline `{other}` in manifest"))),
    };
    // A run that failed originally is replayed to the same failure.
    let new = match (new, &old.error) {
        (Ok(m), _) => m,
        (Err(_), Some(_)) => RunManifest::load(&out.join(MANIFEST_FILE))?,
        (Err(e), None) => return Err(e),
    };
    let index = |m: &RunManifest| -> BTreeMap<String, String> {
        m.artifacts.iter().map(|a| (a.path.clone(), a.sha256.clone())).collect()
    };
    let (a, b) = (index(&old), index(&new));
    let mut diff: Vec<String> = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .cloned()
        .collect();
    diff.sort();
    diff.dedup();
    if old.error.as_ref().map(|e| &e.code) != new.error.as_ref().map(|e| &e.code) {
        diff.push("error".into());
    }
    if !diff.is_empty() {
        return Err(Error::ReplayMismatch(diff));
    }
    Ok(new)
}
