//! Label sidecar: a JSON map from streamline ordinal to class label and
//! optional group identifier, kept outside the track file so track files
//! stay tool-compatible.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streamline::Tractogram;

pub const LABELS_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSidecar {
    pub version: u16,
    pub entries: BTreeMap<u64, LabelEntry>,
}

impl LabelSidecar {
    pub fn from_tractogram(t: &Tractogram) -> Option<Self> {
        let labels = t.labels.as_ref()?;
        let entries = labels
            .iter()
            .enumerate()
            .map(|(i, label)| {
                (
                    i as u64,
                    LabelEntry {
                        label: label.clone(),
                        group_id: t.group_ids.as_ref().map(|g| g[i].clone()),
                    },
                )
            })
            .collect();
        Some(Self { version: LABELS_VERSION, entries })
    }

    /// Attach the sidecar to a tractogram; every streamline needs an entry.
    pub fn apply(&self, t: &Tractogram) -> Result<Tractogram> {
        let mut labels = Vec::with_capacity(t.len());
        let mut groups = Vec::with_capacity(t.len());
        for i in 0..t.len() {
            let entry = self.entries.get(&(i as u64)).ok_or_else(|| {
                Error::ShapeMismatch(format!("label sidecar missing entry for streamline {i}"))
            })?;
            labels.push(entry.label.clone());
            groups.push(entry.group_id.clone().unwrap_or_default());
        }
        Tractogram::with_labels(t.streamlines.clone(), labels, groups)
    }
}

pub fn write_labels(sidecar: &LabelSidecar, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    fs::write(path, json)?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<LabelSidecar> {
    let text = fs::read_to_string(path)?;
    let sidecar: LabelSidecar = serde_json::from_str(&text).map_err(|e| Error::CorruptFile {
        offset: e.column() as u64,
        message: format!("bad label sidecar: {e}"),
    })?;
    if sidecar.version != LABELS_VERSION {
        return Err(Error::UnsupportedVersion {
            found: sidecar.version,
            expected: LABELS_VERSION,
        });
    }
    Ok(sidecar)
}
