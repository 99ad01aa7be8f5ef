//! Report files: training history, EER reports, confusion and projection CSVs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use srctrace_core::embedding::{EmbeddingSet, ManifestEntry, Split};
use srctrace_core::eval::{Eer, Projection};
use srctrace_core::trainer::EpochRecord;

use crate::error::{format_err, io_err, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

/// One JSON object per epoch.
pub fn write_history(history: &[EpochRecord], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for rec in history {
        let line = serde_json::to_string(rec).expect("records serialise");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EerMethod {
    Exact,
    Histogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub n_target: u64,
    pub n_nontarget: u64,
    /// Why no EER could be computed for this subset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EerReport {
    pub eer: f64,
    pub threshold: f64,
    pub n_target: u64,
    pub n_nontarget: u64,
    pub method: EerMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub conditions: BTreeMap<String, ConditionReport>,
}

impl EerReport {
    pub fn new(eer: Eer, n_target: u64, n_nontarget: u64, method: EerMethod, bins: Option<usize>) -> Self {
        Self {
            eer: eer.eer,
            threshold: eer.threshold,
            n_target,
            n_nontarget,
            method,
            bins,
            conditions: BTreeMap::new(),
        }
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).expect("reports serialise");
    writeln!(w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Manifest entries of `split`, matched row by row against `set`.
pub fn align_manifest<'a>(
    set: &EmbeddingSet,
    manifest: &'a [ManifestEntry],
    split: Split,
    path: &Path,
) -> Result<Vec<&'a ManifestEntry>> {
    let rows: Vec<&ManifestEntry> = manifest.iter().filter(|e| e.split == split).collect();
    if rows.len() != set.count() {
        return Err(format_err(
            path,
            format!("{} manifest entries for split {split:?} but {} embedding rows", rows.len(), set.count()),
        ));
    }
    for (i, (e, &l)) in rows.iter().zip(set.labels()).enumerate() {
        let name = &set.class_names()[l as usize];
        if &e.label != name {
            return Err(format_err(
                path,
                format!("row {i}: manifest says `{}`, embeddings say `{name}`", e.label),
            ));
        }
    }
    Ok(rows)
}

/// Row subsets for each seen/unseen model and language condition present
/// in the manifest, plus their four-way combinations.
pub fn condition_subsets(rows: &[&ManifestEntry]) -> BTreeMap<String, Vec<usize>> {
    let word = |seen: bool| if seen { "seen" } else { "unseen" };
    let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, e) in rows.iter().enumerate() {
        if let Some(m) = e.model_seen {
            out.entry(format!("model_{}", word(m))).or_default().push(i);
        }
        if let Some(l) = e.language_seen {
            out.entry(format!("language_{}", word(l))).or_default().push(i);
        }
        if let (Some(m), Some(l)) = (e.model_seen, e.language_seen) {
            out.entry(format!("model_{}+language_{}", word(m), word(l)))
                .or_default()
                .push(i);
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Rows are true classes and columns predictions; the header row and first
/// column carry class names.
pub fn write_confusion_csv(confusion: &[Vec<u64>], class_names: &[String], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let header: Vec<String> = std::iter::once("true\\predicted".to_owned())
        .chain(class_names.iter().map(|c| csv_field(c)))
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(io_err(path))?;
    for (name, row) in class_names.iter().zip(confusion) {
        let cells: Vec<String> = std::iter::once(csv_field(name))
            .chain(row.iter().map(u64::to_string))
            .collect();
        writeln!(w, "{}", cells.join(",")).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// `x,y,label` per row.
pub fn write_projection_csv(proj: &Projection, set: &EmbeddingSet, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "x,y,label").map_err(io_err(path))?;
    for (i, &l) in set.labels().iter().enumerate() {
        let r = proj.coords.row(i);
        writeln!(w, "{:?},{:?},{}", r[0], r[1], csv_field(&set.class_names()[l as usize])).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
