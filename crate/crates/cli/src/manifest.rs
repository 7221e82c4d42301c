use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{SecondsFormat, Utc};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of several files' names and contents, in the given order.
pub fn hash_files(paths: &[PathBuf]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        h.update(name.as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

/// Every regular file under `dir`, sorted by path.
pub fn files_under(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Provenance record written next to a command's outputs.
#[derive(Clone, Debug)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub dataset_hash: String,
    pub seed: Option<u64>,
    pub started: String,
    pub finished: String,
    /// Output path relative to the artifact directory, with its SHA-256.
    pub outputs: Vec<(String, String)>,
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

impl RunManifest {
    pub fn new(command: &str, config_text: &str, dataset_hash: String, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash: sha256_hex(config_text.as_bytes()),
            dataset_hash,
            seed,
            started: now(),
            finished: String::new(),
            outputs: Vec::new(),
        }
    }

    /// Records every file under `dir` except a previous manifest, then
    /// writes the manifest there.
    pub fn finish(mut self, dir: &Path) -> Result<PathBuf> {
        self.outputs.clear();
        for p in files_under(dir)? {
            let rel = p.strip_prefix(dir)?.to_string_lossy().replace('\\', "/");
            if rel == MANIFEST_FILE {
                continue;
            }
            self.outputs.push((rel, sha256_hex(&fs::read(&p)?)));
        }
        self.finished = now();
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.to_text()).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "command={}\nconfig_hash={}\ndataset_hash={}\n",
            self.command, self.config_hash, self.dataset_hash
        );
        if let Some(seed) = self.seed {
            s.push_str(&format!("seed={seed}\n"));
        }
        s.push_str(&format!("started={}\nfinished={}\n", self.started, self.finished));
        for (p, h) in &self.outputs {
            s.push_str(&format!("output={p}\tsha256={h}\n"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = RunManifest {
            command: String::new(),
            config_hash: String::new(),
            dataset_hash: String::new(),
            seed: None,
            started: String::new(),
            finished: String::new(),
            outputs: Vec::new(),
        };
        for line in text.lines() {
            let Some((k, v)) = line.split_once('=') else {
                bail!("manifest line without '=': {line:?}");
            };
            match k {
                "command" => m.command = v.into(),
                "config_hash" => m.config_hash = v.into(),
                "dataset_hash" => m.dataset_hash = v.into(),
                "seed" => m.seed = Some(v.parse()?),
                "started" => m.started = v.into(),
                "finished" => m.finished = v.into(),
                "output" => {
                    let (p, h) = v.split_once("\tsha256=").context("output line without hash")?;
                    m.outputs.push((p.into(), h.into()));
                }
                _ => bail!("unknown manifest key {k:?}"),
            }
        }
        Ok(m)
    }

    /// Recomputes output hashes and compares them with the recorded ones.
    pub fn verify(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let m = Self::parse(&fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?)?;
        for (rel, h) in &m.outputs {
            let got = sha256_hex(&fs::read(dir.join(rel)).with_context(|| format!("reading output {rel}"))?);
            if &got != h {
                bail!("output {rel} changed since the manifest was written");
            }
        }
        Ok(m)
    }
}
