//! Dataset manifest files (TOML).
//!
//! ```toml
//! version = 1
//! classes = ["buildings", "others"]
//!
//! [[entries]]
//! pair_id = "b000"
//! left = "images/b000_left.png"   # relative to the manifest's directory
//! right = "images/b000_right.png"
//! label = 0
//! source = "b000"               # optional, for augmented variants
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub pair_id: String,
    pub left: PathBuf,
    pub right: PathBuf,
    pub label: usize,
    /// Original pair of an augmented variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub classes: Vec<String>,
    #[serde(default)]
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths resolve against; the manifest's own directory
    /// when loaded from disk.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn new(classes: Vec<String>, root: impl Into<PathBuf>) -> Self {
        Self { version: MANIFEST_VERSION, classes, entries: Vec::new(), root: root.into() }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Parse and check everything except file existence.
    pub fn from_toml_str(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut m: DatasetManifest = toml::from_str(text).map_err(|e| Error::Input(format!("manifest: {e}")))?;
        m.root = root.into();
        m.check_structure()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::ingestion(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::from_toml_str(&text, root)?;
        m.check_files()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::output(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::output(path, e))
    }

    fn check_structure(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Input(format!(
                "manifest version {} is not supported (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        if self.classes.len() != 2 {
            return Err(Error::Input(format!("expected 2 classes, got {}", self.classes.len())));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.label >= self.classes.len() {
                return Err(Error::Input(format!(
                    "entry `{}` has label {} outside the class list",
                    e.pair_id, e.label
                )));
            }
            if !seen.insert(e.pair_id.as_str()) {
                return Err(Error::Input(format!("duplicate pair id `{}`", e.pair_id)));
            }
        }
        Ok(())
    }

    fn check_files(&self) -> Result<()> {
        for e in &self.entries {
            for p in [&e.left, &e.right] {
                let full = self.resolve(p);
                if !full.is_file() {
                    return Err(Error::ingestion(full, "file does not exist"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
version = 1
classes = ["buildings", "others"]

[[entries]]
pair_id = "a"
left = "a_l.png"
right = "a_r.png"
label = 0
"#;

    #[test]
    fn parses_and_resolves() {
        let m = DatasetManifest::from_toml_str(TEXT, "/data").unwrap();
        assert_eq!(m.entries.len(), 1);
        assert_eq!(m.resolve(&m.entries[0].left), PathBuf::from("/data/a_l.png"));
    }

    #[test]
    fn rejects_bad_manifests() {
        let dup = format!("{TEXT}\n[[entries]]\npair_id = \"a\"\nleft = \"x\"\nright = \"y\"\nlabel = 1\n");
        assert!(DatasetManifest::from_toml_str(&dup, ".").is_err());
        let bad_label = TEXT.replace("label = 0", "label = 2");
        assert!(DatasetManifest::from_toml_str(&bad_label, ".").is_err());
        let unknown = format!("extra = 1\n{TEXT}");
        assert!(DatasetManifest::from_toml_str(&unknown, ".").is_err());
        let version = TEXT.replace("version = 1", "version = 9");
        assert!(DatasetManifest::from_toml_str(&version, ".").is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        std::fs::write(&path, TEXT).unwrap();
        let err = DatasetManifest::load(&path).unwrap_err();
        assert!(err.to_string().contains("a_l.png"), "{err}");
    }
}
