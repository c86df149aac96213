//! Dataset manifests: UTF-8 CSV with header `subject_id,pose,path`.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::verification::{PoseLabel, IMAGES_PER_POSE};

pub const MANIFEST_HEADER: [&str; 3] = ["subject_id", "pose", "path"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub pose: PoseLabel,
    pub path: PathBuf,
    /// 1-based line in the manifest file.
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        let mut header_seen = false;
        for record in reader.records() {
            let record = record.map_err(|e| Error::Manifest {
                row: e.position().map_or(0, |p| p.line() as usize),
                reason: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let fail = |reason: String| Error::Manifest { row: line, reason };
            if !header_seen {
                let got: Vec<&str> = record.iter().map(str::trim).collect();
                if got != MANIFEST_HEADER {
                    return Err(fail(format!("expected header subject_id,pose,path, found {}", got.join(","))));
                }
                header_seen = true;
                continue;
            }
            if record.len() != 3 {
                return Err(fail(format!("expected 3 fields, found {}", record.len())));
            }
            let (subject, pose, path) = (record[0].trim(), record[1].trim(), record[2].trim());
            if subject.is_empty() {
                return Err(fail("empty subject_id".into()));
            }
            if path.is_empty() {
                return Err(fail("empty path".into()));
            }
            let pose: PoseLabel = pose.parse().map_err(|e: Error| fail(e.to_string()))?;
            if !seen.insert((subject.to_string(), pose, path.to_string())) {
                return Err(fail(format!("duplicate entry {subject},{pose},{path}")));
            }
            entries.push(ManifestEntry {
                subject_id: subject.to_string(),
                pose,
                path: PathBuf::from(path),
                line,
            });
        }
        Ok(Manifest { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Subject ids in order of first appearance.
    pub fn subjects(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .map(|e| e.subject_id.as_str())
            .filter(|s| seen.insert(*s))
            .collect()
    }

    /// Keeps only the first `n` subjects by order of appearance.
    pub fn limit_subjects(&self, n: usize) -> Manifest {
        let keep: HashSet<&str> = self.subjects().into_iter().take(n).collect();
        Manifest {
            entries: self.entries.iter().filter(|e| keep.contains(e.subject_id.as_str())).cloned().collect(),
        }
    }

    /// Position of each entry among its subject's entries in the same pose.
    pub fn image_indices(&self) -> Vec<usize> {
        let mut counters: HashMap<(&str, PoseLabel), usize> = HashMap::new();
        self.entries
            .iter()
            .map(|e| {
                let c = counters.entry((e.subject_id.as_str(), e.pose)).or_insert(0);
                *c += 1;
                *c - 1
            })
            .collect()
    }

    /// Missing or overfull (subject, pose) slots; empty when every subject has
    /// exactly ten images in each pose. An empty manifest reports one gap.
    pub fn protocol_gaps(&self) -> Vec<String> {
        if self.entries.is_empty() {
            return vec!["manifest has no subjects".into()];
        }
        let mut counts: HashMap<(&str, PoseLabel), usize> = HashMap::new();
        for e in &self.entries {
            *counts.entry((e.subject_id.as_str(), e.pose)).or_insert(0) += 1;
        }
        let mut gaps = Vec::new();
        for s in self.subjects() {
            for pose in PoseLabel::ALL {
                let n = counts.get(&(s, pose)).copied().unwrap_or(0);
                if n != IMAGES_PER_POSE {
                    gaps.push(format!("{s}/{pose} ({n} of {IMAGES_PER_POSE} images)"));
                }
            }
        }
        gaps
    }

    pub fn is_protocol_complete(&self) -> bool {
        self.protocol_gaps().is_empty()
    }

    pub fn check_complete(&self) -> Result<()> {
        let gaps = self.protocol_gaps();
        if gaps.is_empty() {
            Ok(())
        } else {
            Err(Error::Incomplete(gaps))
        }
    }

    /// Image path, resolved against `base` when relative.
    pub fn resolve(&self, index: usize, base: &Path) -> PathBuf {
        let p = &self.entries[index].path;
        if p.is_absolute() {
            p.clone()
        } else {
            base.join(p)
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = MANIFEST_HEADER.join(",");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.subject_id, e.pose, e.path.display()));
        }
        out
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Manifest::parse(&text)
}
