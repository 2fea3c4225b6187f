use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{sha256_hex, SourceRecord};
use crate::failure::{DataContext, Outcome};

pub const MANIFEST_FILE: &str = "dtrack-manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub kind: String,
    pub command: String,
    /// SHA-256 of the canonical JSON of the config that produced it.
    pub config_hash: String,
    pub inputs: Vec<PathBuf>,
}

/// Index of the inputs and derived artifacts in one output directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectManifest {
    pub sources: Vec<SourceRecord>,
    pub representation: Option<String>,
    pub artifacts: BTreeMap<PathBuf, Artifact>,
}

/// Hash of a serializable config. Struct fields serialize in declaration
/// order, so equal configs hash equally.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    sha256_hex(&serde_json::to_vec(config).expect("config serializes"))
}

/// The manifest beside `output` unless an explicit path is given.
pub fn manifest_path(explicit: Option<&Path>, output: &Path) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => output
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .join(MANIFEST_FILE),
    }
}

impl ProjectManifest {
    pub fn load_or_default(path: &Path) -> Outcome<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(path).data_ctx(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).data_ctx(|| format!("parsing manifest {}", path.display()))
    }

    pub fn add_sources(&mut self, sources: &[SourceRecord]) {
        for s in sources {
            match self.sources.iter_mut().find(|r| r.path == s.path) {
                Some(r) => r.sha256.clone_from(&s.sha256),
                None => self.sources.push(s.clone()),
            }
        }
    }

    pub fn save(&self, path: &Path) -> Outcome {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, json).data_ctx(|| format!("writing {}", path.display()))
    }
}

/// Loads the manifest, applies `update` and writes it back.
pub fn record(path: &Path, update: impl FnOnce(&mut ProjectManifest)) -> Outcome {
    let mut m = ProjectManifest::load_or_default(path)?;
    update(&mut m);
    m.save(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_config_changes() {
        #[derive(Serialize)]
        struct C {
            a: u32,
        }
        assert_eq!(config_hash(&C { a: 1 }), config_hash(&C { a: 1 }));
        assert_ne!(config_hash(&C { a: 1 }), config_hash(&C { a: 2 }));
    }

    #[test]
    fn manifest_sits_beside_output() {
        assert_eq!(manifest_path(None, Path::new("out/x.mid")), Path::new("out").join(MANIFEST_FILE));
        assert_eq!(manifest_path(None, Path::new("x.mid")), Path::new(".").join(MANIFEST_FILE));
        assert_eq!(manifest_path(Some(Path::new("m.json")), Path::new("x")), Path::new("m.json"));
    }

    #[test]
    fn record_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let src = SourceRecord { path: "a.mid".into(), sha256: "00".into() };
        record(&path, |m| {
            m.add_sources(std::slice::from_ref(&src));
            m.artifacts.insert(
                "c.json".into(),
                Artifact { kind: "corpus".into(), command: "build-corpus".into(), config_hash: "h".into(), inputs: vec![] },
            );
        })
        .unwrap();
        record(&path, |m| m.add_sources(std::slice::from_ref(&src))).unwrap();
        let m = ProjectManifest::load_or_default(&path).unwrap();
        assert_eq!(m.sources, vec![src]);
        assert_eq!(m.artifacts.len(), 1);
    }
}
