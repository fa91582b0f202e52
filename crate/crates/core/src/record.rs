//! In-memory ECG records and wave-boundary annotations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{EcgError, Result};

/// Lead identifier used for annotations that are not tied to a single lead.
pub const GLOBAL_LEAD: &str = "global";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Wave {
    P,
    #[serde(rename = "QRS")]
    Qrs,
    T,
}

impl Wave {
    pub const ALL: [Wave; 3] = [Wave::P, Wave::Qrs, Wave::T];
}

impl fmt::Display for Wave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Wave::P => "P",
            Wave::Qrs => "QRS",
            Wave::T => "T",
        })
    }
}

impl FromStr for Wave {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "P" => Ok(Wave::P),
            "QRS" => Ok(Wave::Qrs),
            "T" => Ok(Wave::T),
            other => Err(format!("unknown wave {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Onset,
    Offset,
}

impl fmt::Display for BoundaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryKind::Onset => "onset",
            BoundaryKind::Offset => "offset",
        })
    }
}

impl FromStr for BoundaryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "onset" | "on" => Ok(BoundaryKind::Onset),
            "offset" | "off" => Ok(BoundaryKind::Offset),
            other => Err(format!("unknown boundary kind {other:?}")),
        }
    }
}

/// The six evaluated boundary types, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoundaryType {
    pub wave: Wave,
    pub kind: BoundaryKind,
}

impl BoundaryType {
    pub const ALL: [BoundaryType; 6] = [
        BoundaryType::new(Wave::P, BoundaryKind::Onset),
        BoundaryType::new(Wave::P, BoundaryKind::Offset),
        BoundaryType::new(Wave::Qrs, BoundaryKind::Onset),
        BoundaryType::new(Wave::Qrs, BoundaryKind::Offset),
        BoundaryType::new(Wave::T, BoundaryKind::Onset),
        BoundaryType::new(Wave::T, BoundaryKind::Offset),
    ];

    pub const fn new(wave: Wave, kind: BoundaryKind) -> Self {
        Self { wave, kind }
    }
}

impl fmt::Display for BoundaryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.wave, self.kind)
    }
}

/// One wave-boundary event.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoundaryAnnotation {
    pub wave: Wave,
    pub kind: BoundaryKind,
    /// Sample index at the sampling rate of the owning record or set.
    pub sample: usize,
    pub lead: String,
}

impl BoundaryAnnotation {
    pub fn new(wave: Wave, kind: BoundaryKind, sample: usize, lead: impl Into<String>) -> Self {
        Self {
            wave,
            kind,
            sample,
            lead: lead.into(),
        }
    }

    pub fn boundary_type(&self) -> BoundaryType {
        BoundaryType::new(self.wave, self.kind)
    }
}

/// Boundary annotations of a record together with the rate they are expressed in.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub record_id: String,
    pub items: Vec<BoundaryAnnotation>,
    pub source_fs: f64,
    /// Events dropped while decoding (unmatched markers, out-of-range samples).
    pub dropped: usize,
}

impl AnnotationSet {
    pub fn new(record_id: impl Into<String>, source_fs: f64) -> Self {
        Self {
            record_id: record_id.into(),
            items: Vec::new(),
            source_fs,
            dropped: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    /// Annotations of one lead (plus lead-independent ones).
    pub fn for_lead(&self, lead: &str) -> AnnotationSet {
        AnnotationSet {
            items: self
                .items
                .iter()
                .filter(|a| a.lead.eq_ignore_ascii_case(lead) || a.lead == GLOBAL_LEAD)
                .cloned()
                .collect(),
            ..self.clone_empty()
        }
    }

    pub(crate) fn clone_empty(&self) -> AnnotationSet {
        AnnotationSet {
            record_id: self.record_id.clone(),
            items: Vec::new(),
            source_fs: self.source_fs,
            dropped: self.dropped,
        }
    }

    /// Sorted sample positions of one boundary type.
    pub fn samples_of(&self, ty: BoundaryType) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .items
            .iter()
            .filter(|a| a.boundary_type() == ty)
            .map(|a| a.sample)
            .collect();
        v.sort_unstable();
        v
    }

    /// Sorted times in milliseconds of one boundary type.
    pub fn times_ms(&self, ty: BoundaryType) -> Vec<f64> {
        self.samples_of(ty)
            .into_iter()
            .map(|s| s as f64 * 1000.0 / self.source_fs)
            .collect()
    }

    pub fn sort(&mut self) {
        self.items.sort_by(|a, b| (a.sample, a.wave, a.kind, &a.lead).cmp(&(b.sample, b.wave, b.kind, &b.lead)));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lead {
    pub name: String,
    /// Physical samples in millivolts.
    pub samples: Vec<f32>,
}

/// A multi-lead ECG recording; all leads share one length and sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub record_id: String,
    pub fs: f64,
    pub leads: Vec<Lead>,
    /// Free-text header comments (diagnoses, rhythm) when the source provides them.
    pub comments: Vec<String>,
}

impl EcgRecord {
    pub fn new(record_id: impl Into<String>, fs: f64, leads: Vec<Lead>) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(EcgError::Signal(format!("sampling frequency must be positive, got {fs}")));
        }
        if let Some(first) = leads.first() {
            if leads.iter().any(|l| l.samples.len() != first.samples.len()) {
                return Err(EcgError::Signal("leads have different lengths".into()));
            }
        }
        Ok(Self {
            record_id: record_id.into(),
            fs,
            leads,
            comments: Vec::new(),
        })
    }

    pub fn single_lead(record_id: impl Into<String>, fs: f64, name: &str, samples: Vec<f32>) -> Result<Self> {
        Self::new(
            record_id,
            fs,
            vec![Lead {
                name: name.to_string(),
                samples,
            }],
        )
    }

    pub fn len(&self) -> usize {
        self.leads.first().map_or(0, |l| l.samples.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.fs
    }

    /// Case-insensitive lookup by lead name.
    pub fn lead(&self, name: &str) -> Option<&Lead> {
        self.leads.iter().find(|l| l.name.eq_ignore_ascii_case(name))
    }
}
