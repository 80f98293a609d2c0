use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use neurosym::tasks::Artifact;

use crate::config::ExperimentConfig;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Record of one run, written last into the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub artifact_version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub files: Vec<FileEntry>,
}

pub fn now_unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Write `bytes` to `path` via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Write every artifact under `dir` and return their inventory, sorted by
/// name.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> io::Result<Vec<FileEntry>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        if a.name == MANIFEST_NAME {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "artifact name clashes with the manifest"));
        }
        write_atomic(&dir.join(&a.name), &a.bytes)?;
        files.push(FileEntry {
            name: a.name.clone(),
            bytes: a.bytes.len() as u64,
            sha256: sha256_hex(&a.bytes),
        });
    }
    files.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(files)
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(io::Error::other)?;
        bytes.push(b'\n');
        write_atomic(&dir.join(MANIFEST_NAME), &bytes)
    }

    pub fn read(dir: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
        serde_json::from_str(&text).map_err(io::Error::other)
    }

    /// Names of inventoried files whose current contents no longer match.
    pub fn verify(&self, dir: &Path) -> io::Result<Vec<String>> {
        let mut bad = Vec::new();
        for f in &self.files {
            let bytes = fs::read(dir.join(&f.name))?;
            if sha256_hex(&bytes) != f.sha256 {
                bad.push(f.name.clone());
            }
        }
        Ok(bad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_abc() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn artifacts_round_trip_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        let arts = vec![
            Artifact {
                name: "b.txt".into(),
                bytes: b"two".to_vec(),
            },
            Artifact {
                name: "a.txt".into(),
                bytes: b"one".to_vec(),
            },
        ];
        let files = write_artifacts(dir.path(), &arts).unwrap();
        assert_eq!(files[0].name, "a.txt");
        let m = RunManifest {
            command: "test".into(),
            artifact_version: "0".into(),
            seed: 1,
            config: ExperimentConfig::default(),
            started_unix_ms: 0,
            finished_unix_ms: 0,
            files,
        };
        m.write(dir.path()).unwrap();
        let back = RunManifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
        assert!(back.verify(dir.path()).unwrap().is_empty());
        fs::write(dir.path().join("a.txt"), b"changed").unwrap();
        assert_eq!(back.verify(dir.path()).unwrap(), vec!["a.txt".to_string()]);
        assert!(!dir.path().join("a.txt.tmp").exists());
    }
}
