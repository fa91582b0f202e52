//! Datasets on disk: a directory of WFDB records plus a manifest naming the
//! records of each split.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{EcgError, Result};
use crate::record::{AnnotationSet, EcgRecord};
use crate::wfdb::{self, LeadAssignment, SymbolMap};

/// Rhythm classes of the classifier branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rhythm {
    AfibAfl,
    Other,
}

impl Rhythm {
    /// Class index in the classifier output.
    pub fn index(self) -> usize {
        match self {
            Rhythm::AfibAfl => 0,
            Rhythm::Other => 1,
        }
    }
}

/// Free-text rhythm statement from header comments (`Rhythm: ...`).
pub fn rhythm_text(comments: &[String]) -> Option<String> {
    comments.iter().find_map(|c| {
        let (key, value) = c.split_once(':')?;
        key.trim_matches(|ch: char| ch == '<' || ch == '>' || ch.is_whitespace())
            .eq_ignore_ascii_case("rhythm")
            .then(|| value.trim().trim_end_matches('.').to_string())
    })
}

/// Binary rhythm target from header comments, when they state a rhythm.
pub fn rhythm_target(comments: &[String]) -> Option<Rhythm> {
    let text = rhythm_text(comments)?.to_ascii_lowercase();
    Some(if text.contains("fibrillation") || text.contains("flutter") {
        Rhythm::AfibAfl
    } else {
        Rhythm::Other
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Dataset root; relative paths resolve against the config file.
    pub root: PathBuf,
    /// CSV with columns `record,split` and an optional `group`.
    pub manifest: PathBuf,
    /// Annotation file extension; `{lead}` is replaced by the lead name for
    /// one-file-per-lead datasets.
    pub annotation_ext: String,
    /// How events are tied to leads when a single file covers every lead.
    pub lead_assignment: AssignmentKind,
    pub leads: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentKind {
    Channel,
    Global,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: PathBuf::from("."),
            manifest: PathBuf::from("manifest.csv"),
            annotation_ext: "{lead}".into(),
            lead_assignment: AssignmentKind::Global,
            leads: vec!["i".into(), "ii".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub record: String,
    pub split: String,
    #[serde(default)]
    pub group: Option<String>,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| EcgError::Dataset(format!("cannot read manifest {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ManifestEntry>().enumerate() {
        out.push(row.map_err(|e| EcgError::Csv { row: i + 2, msg: e.to_string() })?);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| EcgError::Dataset(e.to_string()))?;
    for e in entries {
        w.serialize(e).map_err(|e| EcgError::Dataset(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// A record with its boundary annotations (at the record's rate).
#[derive(Debug, Clone)]
pub struct LoadedRecord {
    pub record: EcgRecord,
    pub annotations: AnnotationSet,
    pub group: Option<String>,
}

impl DataConfig {
    pub fn record_base(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    /// Records of a manifest split that are missing from the root.
    pub fn missing(&self, entries: &[ManifestEntry]) -> Vec<String> {
        entries
            .iter()
            .filter(|e| !wfdb::with_ext(&self.record_base(&e.record), "hea").exists())
            .map(|e| e.record.clone())
            .collect()
    }

    pub fn load(&self, entry: &ManifestEntry) -> Result<LoadedRecord> {
        let base = self.record_base(&entry.record);
        let (desc, record) = wfdb::read_record(&base)?;
        let map = SymbolMap::default();
        let mut annotations = AnnotationSet::new(record.record_id.clone(), record.fs);
        if self.annotation_ext.contains("{lead}") {
            for lead in &record.leads {
                let ext = self.annotation_ext.replace("{lead}", &lead.name);
                if !wfdb::with_ext(&base, &ext).exists() {
                    continue;
                }
                let set = wfdb::read_annotation_file(&base, &ext, &desc, &map, &LeadAssignment::Fixed(lead.name.clone()))?;
                annotations.dropped += set.dropped;
                annotations.items.extend(set.items);
            }
        } else {
            let assign = match self.lead_assignment {
                AssignmentKind::Channel => LeadAssignment::Channel,
                AssignmentKind::Global => LeadAssignment::Global,
            };
            annotations = wfdb::read_annotation_file(&base, &self.annotation_ext, &desc, &map, &assign)?;
        }
        annotations.sort();
        let group = entry.group.clone().or_else(|| rhythm_text(&record.comments));
        Ok(LoadedRecord { record, annotations, group })
    }

    /// Resolve relative paths against `dir`.
    pub fn resolved(mut self, dir: &Path) -> Self {
        if self.root.is_relative() {
            self.root = dir.join(&self.root);
        }
        if self.manifest.is_relative() {
            self.manifest = self.root.join(&self.manifest);
        }
        self
    }
}

/// Entries of one split (all entries for `"all"`).
pub fn split<'a>(entries: &'a [ManifestEntry], name: &str) -> Vec<&'a ManifestEntry> {
    entries.iter().filter(|e| name == "all" || e.split.eq_ignore_ascii_case(name)).collect()
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| EcgError::Dataset(format!("cannot create {}: {e}", dir.display())))
}
