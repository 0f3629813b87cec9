//! Text-file interchange formats.
//!
//! Three plain-text artifacts let recordings and derived data move between
//! tools and survive re-runs:
//!
//! * **CSI CSV** — one recording per file. A single header line
//!   `#wipin-csv v1, fs=<Hz>, fc=<Hz>, bw=<Hz>, nsc=30, subject=<tag|->,
//!   session=<int|->` followed by one row per frame:
//!   `t_index, re_1, im_1, …, re_30, im_30` (61 fields).
//! * **Feature CSV** — header `#wipin-feat v1, subject=<tag|->` followed by
//!   one 39-value row per feature vector.
//! * **Dataset manifest** — `manifest.json` listing every recording file
//!   with its canonical subject ID and session index, plus a free-form
//!   `generator` object for provenance.
//!
//! Floats are written with Rust's shortest-round-trip formatting, which
//! preserves every bit of the value (well beyond nine significant digits),
//! so load ∘ store is the identity on finite data. Parsers report the
//! 1-based line number of the first offending line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::csi::{CsiFrame, CsiSeries, Dataset, DatasetRecord, SubcarrierGrid, N_SUBCARRIERS};
use crate::error::{Error, Result};

/// Magic prefix of a CSI recording file.
const CSI_MAGIC: &str = "#wipin-csv v1";
/// Magic prefix of a feature-vector file.
const FEAT_MAGIC: &str = "#wipin-feat v1";

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Renders a series to the CSI CSV text format.
#[must_use]
pub fn series_to_csv(series: &CsiSeries) -> String {
    let subject = series.subject_label.as_deref().unwrap_or("-");
    let session = series
        .session_index
        .map_or_else(|| "-".to_string(), |s| s.to_string());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{CSI_MAGIC}, fs={}, fc={}, bw={}, nsc={}, subject={}, session={}",
        series.sample_rate_hz,
        series.grid.center_hz,
        series.grid.bandwidth_hz,
        N_SUBCARRIERS,
        subject,
        session
    );
    for (t, frame) in series.frames.iter().enumerate() {
        let _ = write!(out, "{t}");
        for z in &frame.subcarriers {
            let _ = write!(out, ",{},{}", z.re, z.im);
        }
        out.push('\n');
    }
    out
}

/// Writes a series to `path` in the CSI CSV format.
pub fn store_series(series: &CsiSeries, path: &Path) -> Result<()> {
    fs::write(path, series_to_csv(series))?;
    Ok(())
}

/// Parses the CSI CSV text format.
pub fn series_from_csv(text: &str) -> Result<CsiSeries> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file, expected header"))?;
    let header = header.trim();
    if !header.starts_with(CSI_MAGIC) {
        return Err(parse_err(1, format!("expected `{CSI_MAGIC}` header")));
    }
    let mut fs_hz = None;
    let mut fc_hz = None;
    let mut bw_hz = None;
    let mut nsc = None;
    let mut subject = None;
    let mut session = None;
    for field in header[CSI_MAGIC.len()..].split(',') {
        let field = field.trim();
        if field.is_empty() {
            continue;
        }
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header field `{field}`")))?;
        match key.trim() {
            "fs" => fs_hz = Some(parse_float(value, 1, "fs")?),
            "fc" => fc_hz = Some(parse_float(value, 1, "fc")?),
            "bw" => bw_hz = Some(parse_float(value, 1, "bw")?),
            "nsc" => {
                nsc = Some(value.trim().parse::<usize>().map_err(|_| {
                    parse_err(1, format!("nsc must be an integer, got `{value}`"))
                })?);
            }
            "subject" => {
                let v = value.trim();
                subject = (v != "-").then(|| v.to_string());
            }
            "session" => {
                let v = value.trim();
                session = if v == "-" {
                    None
                } else {
                    Some(v.parse::<u32>().map_err(|_| {
                        parse_err(1, format!("session must be an integer, got `{v}`"))
                    })?)
                };
            }
            other => return Err(parse_err(1, format!("unknown header key `{other}`"))),
        }
    }
    let fs_hz = fs_hz.ok_or_else(|| parse_err(1, "header missing fs"))?;
    let fc_hz = fc_hz.ok_or_else(|| parse_err(1, "header missing fc"))?;
    let bw_hz = bw_hz.ok_or_else(|| parse_err(1, "header missing bw"))?;
    match nsc {
        Some(n) if n == N_SUBCARRIERS => {}
        Some(n) => {
            return Err(parse_err(
                1,
                format!("unsupported subcarrier count {n}, expected {N_SUBCARRIERS}"),
            ));
        }
        None => return Err(parse_err(1, "header missing nsc")),
    }

    let mut frames = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 1 + 2 * N_SUBCARRIERS {
            return Err(parse_err(
                line_no,
                format!("expected 61 fields, got {}", fields.len()),
            ));
        }
        let t: usize = fields[0].trim().parse().map_err(|_| {
            parse_err(line_no, format!("t_index must be an integer, got `{}`", fields[0]))
        })?;
        if t != frames.len() {
            return Err(parse_err(
                line_no,
                format!("t_index {t} out of order, expected {}", frames.len()),
            ));
        }
        let mut subcarriers = [Complex64::new(0.0, 0.0); N_SUBCARRIERS];
        for (j, sc) in subcarriers.iter_mut().enumerate() {
            let re = parse_float(fields[1 + 2 * j], line_no, "re")?;
            let im = parse_float(fields[2 + 2 * j], line_no, "im")?;
            *sc = Complex64::new(re, im);
        }
        frames.push(
            CsiFrame::new(subcarriers)
                .map_err(|e| parse_err(line_no, e.to_string()))?,
        );
    }
    let grid = SubcarrierGrid::new(fc_hz, bw_hz)?;
    CsiSeries::new(frames, fs_hz, grid, subject, session)
}

/// Reads a series from a CSI CSV file.
pub fn load_series(path: &Path) -> Result<CsiSeries> {
    series_from_csv(&fs::read_to_string(path)?)
}

fn parse_float(s: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("{what} must be a number, got `{s}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{what} must be finite, got `{s}`")));
    }
    Ok(v)
}

/// Renders feature vectors to the feature CSV format. Each vector is one
/// 39-value row; the optional subject tag lives in the header.
#[must_use]
pub fn features_to_csv(subject: Option<&str>, vectors: &[[f64; 39]]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{FEAT_MAGIC}, subject={}", subject.unwrap_or("-"));
    for v in vectors {
        let mut first = true;
        for x in v {
            if !first {
                out.push(',');
            }
            let _ = write!(out, "{x}");
            first = false;
        }
        out.push('\n');
    }
    out
}

/// Parses the feature CSV format, returning the subject tag (if any) and
/// the vectors.
pub fn features_from_csv(text: &str) -> Result<(Option<String>, Vec<[f64; 39]>)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file, expected header"))?;
    let header = header.trim();
    if !header.starts_with(FEAT_MAGIC) {
        return Err(parse_err(1, format!("expected `{FEAT_MAGIC}` header")));
    }
    let mut subject = None;
    for field in header[FEAT_MAGIC.len()..].split(',') {
        let field = field.trim();
        if field.is_empty() {
            continue;
        }
        if let Some(v) = field.strip_prefix("subject=") {
            subject = (v != "-").then(|| v.to_string());
        } else {
            return Err(parse_err(1, format!("malformed header field `{field}`")));
        }
    }
    let mut vectors = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 39 {
            return Err(parse_err(
                line_no,
                format!("expected 39 fields, got {}", fields.len()),
            ));
        }
        let mut v = [0.0; 39];
        for (dst, field) in v.iter_mut().zip(&fields) {
            *dst = parse_float(field, line_no, "feature")?;
        }
        vectors.push(v);
    }
    Ok((subject, vectors))
}

/// One entry of the on-disk dataset manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Canonical subject ID.
    pub subject: u32,
    /// Session index within the subject.
    pub session: u32,
    /// Path of the recording file, relative to the manifest.
    pub file: String,
}

/// The on-disk dataset manifest: recording index plus provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    /// All recordings in the dataset.
    pub records: Vec<ManifestEntry>,
    /// Free-form generator/provenance object. For synthesized cohorts this
    /// holds the generator parameters and ground-truth body profiles; it
    /// also carries the `labels` array that keeps canonical IDs a
    /// bijection with original tags.
    pub generator: serde_json::Value,
}

/// Writes a dataset as a directory: `manifest.json` plus one CSI CSV per
/// recording under `series/`.
pub fn store_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    let series_dir = dir.join("series");
    fs::create_dir_all(&series_dir)?;
    let mut entries = Vec::with_capacity(dataset.records.len());
    for record in &dataset.records {
        let file = format!(
            "series/s{:03}_r{:03}.csv",
            record.subject_id, record.session_index
        );
        store_series(&record.series, &dir.join(&file))?;
        entries.push(ManifestEntry {
            subject: record.subject_id,
            session: record.session_index,
            file,
        });
    }
    let mut generator = dataset.generator.clone();
    if !dataset.labels.is_empty() {
        if let serde_json::Value::Object(map) = &mut generator {
            map.insert(
                "labels".to_string(),
                serde_json::to_value(&dataset.labels)?,
            );
        }
    }
    let manifest = Manifest {
        records: entries,
        generator,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Loads a dataset directory written by [`store_dataset`] (or assembled by
/// hand to the same layout).
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.json");
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    let mut records = Vec::with_capacity(manifest.records.len());
    for entry in &manifest.records {
        let series = load_series(&dir.join(&entry.file))?;
        records.push(DatasetRecord {
            subject_id: entry.subject,
            session_index: entry.session,
            series,
        });
    }
    let labels: Vec<String> = manifest
        .generator
        .get("labels")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_default();
    Ok(Dataset {
        records,
        labels,
        generator: manifest.generator,
    })
}
