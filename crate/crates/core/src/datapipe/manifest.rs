//! Dataset manifests: newline-delimited JSON records and deterministic
//! hash-based train/test splitting.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

/// One dataset record: a stable id, where the bytes come from (HTTP(S) URL
/// or local path), an optional content checksum, and the assigned split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub source_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    #[serde(default)]
    pub split: Split,
}

/// Ordered collection of entries with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub version: u32,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = DatasetManifest { version: 1, entries };
        m.check_unique_ids()?;
        Ok(m)
    }

    fn check_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate id '{}'", e.id)));
            }
        }
        Ok(())
    }

    /// Reads a UTF-8 file with one JSON entry per line (blank lines skipped).
    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = fs::File::open(path)
            .map_err(|e| Error::Manifest(format!("cannot open {}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| {
                Error::Manifest(format!("{}:{}: bad record: {e}", path.display(), lineno + 1))
            })?;
            entries.push(entry);
        }
        DatasetManifest::new(entries)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = fs::File::create(path)?;
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn split_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for e in &self.entries {
            match e.split {
                Split::Train => counts.0 += 1,
                Split::Test => counts.1 += 1,
                Split::Unassigned => counts.2 += 1,
            }
        }
        counts
    }

    pub fn ids_in(&self, split: Split) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.id.as_str())
            .collect()
    }
}

/// Stable 64-bit hash of (seed, id); the split key.
fn split_key(seed: u64, id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Deterministically assigns round(N * test_fraction) entries to the test
/// split (the entries with the smallest (hash, id) keys) and the rest to
/// train. Keyed on content, not position, so edits to unrelated entries do
/// not reshuffle everything.
pub fn assign_splits(
    manifest: &DatasetManifest,
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetManifest> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::contract(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    manifest.check_unique_ids()?;
    let n = manifest.entries.len();
    let n_test = (n as f64 * test_fraction).round() as usize;

    let mut keyed: Vec<(u64, &str)> = manifest
        .entries
        .iter()
        .map(|e| (split_key(seed, &e.id), e.id.as_str()))
        .collect();
    keyed.sort_unstable();
    let test_ids: HashSet<&str> = keyed.iter().take(n_test).map(|&(_, id)| id).collect();

    let entries = manifest
        .entries
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e.split = if test_ids.contains(e.id.as_str()) {
                Split::Test
            } else {
                Split::Train
            };
            e
        })
        .collect();
    Ok(DatasetManifest {
        version: manifest.version,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn entry(id: &str) -> ManifestEntry {
        ManifestEntry {
            id: id.to_string(),
            source_url: format!("https://example.invalid/{id}.png"),
            sha256: None,
            split: Split::Unassigned,
        }
    }

    fn make(n: usize) -> DatasetManifest {
        DatasetManifest::new((0..n).map(|i| entry(&format!("img{i:05}"))).collect()).unwrap()
    }

    #[test]
    fn duplicate_ids_rejected() {
        let m = DatasetManifest {
            version: 1,
            entries: vec![entry("a"), entry("a")],
        };
        assert!(assign_splits(&m, 0.5, 0).is_err());
        assert!(DatasetManifest::new(m.entries).is_err());
    }

    #[test]
    fn split_counts_follow_rounding() {
        let m = make(10);
        let s = assign_splits(&m, 0.1, 7).unwrap();
        let (train, test, un) = s.split_counts();
        assert_eq!((train, test, un), (9, 1, 0));

        // the paper-scale case: 4700 entries, 500 test
        let m = make(4700);
        let s = assign_splits(&m, 500.0 / 4700.0, 7).unwrap();
        assert_eq!(s.split_counts().1, 500);
    }

    #[test]
    fn splits_are_deterministic_and_a_partition() {
        let m = make(97);
        let a = assign_splits(&m, 0.2, 42).unwrap();
        let b = assign_splits(&m, 0.2, 42).unwrap();
        assert_eq!(a, b);
        let (train, test, un) = a.split_counts();
        assert_eq!(un, 0);
        assert_eq!(train + test, 97);
        let train_set: HashSet<_> = a.ids_in(Split::Train).into_iter().collect();
        for id in a.ids_in(Split::Test) {
            assert!(!train_set.contains(id));
        }
        // different seed gives a different assignment (overwhelmingly likely)
        let c = assign_splits(&m, 0.2, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fraction_bounds_enforced() {
        let m = make(5);
        assert!(assign_splits(&m, 0.0, 1).is_err());
        assert!(assign_splits(&m, 1.0, 1).is_err());
        assert!(assign_splits(&m, -0.5, 1).is_err());
    }

    #[test]
    fn jsonl_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut m = make(4);
        m.entries[1].sha256 = Some("ab".repeat(32));
        let m = assign_splits(&m, 0.25, 3).unwrap();
        m.write_jsonl(&path).unwrap();
        let back = DatasetManifest::read_jsonl(&path).unwrap();
        assert_eq!(m, back);
        // file format sanity: one JSON object per line with the spec'd keys
        let text = std::fs::read_to_string(&path).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert!(first.get("id").is_some());
        assert!(first.get("source_url").is_some());
        assert!(first.get("split").is_some());
    }
}
