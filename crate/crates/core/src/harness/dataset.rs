//! Datasets: CSV files and seeded synthetic generators.

use std::path::Path;

use rand::Rng;

use super::config::DatasetConfig;
use crate::error::{Error, Result};
use crate::rng;
use crate::types::LabeledSample;
use crate::weak::{plant_vote_instance, FiniteClass};

/// A sample ready for boosting, plus what the harness needs to describe it.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub sample: LabeledSample,
    /// The class a planted-vote sample was labeled from.
    pub class: Option<FiniteClass>,
    /// The achieved vote margin of a planted sample.
    pub planted_margin: Option<f64>,
    /// Bytes hashed into the run's input hash.
    pub fingerprint: Vec<u8>,
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a CSV with a header row and a `label` column; every other column is
/// a numeric feature. Labels must be `±1`, or all in `{0, 1}` (mapped
/// `0 → −1` with a warning).
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes.as_slice());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(parse_err(path, 1, "empty file"));
    }
    let label_col = headers
        .iter()
        .position(|h| h.trim() == "label")
        .ok_or_else(|| parse_err(path, 1, "no \"label\" column"))?;

    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut record).map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        let mut features = Vec::with_capacity(record.len().saturating_sub(1));
        let mut label = None;
        for (col, field) in record.iter().enumerate() {
            let field = field.trim();
            if col == label_col {
                let v: i64 = field
                    .trim_start_matches('+')
                    .parse()
                    .map_err(|_| parse_err(path, line, format!("label {field:?} is not an integer")))?;
                if !(-1..=1).contains(&v) {
                    return Err(parse_err(path, line, format!("label {v} is not one of -1, 0, 1")));
                }
                label = Some(v as i8);
            } else {
                let x: f64 = field.parse().map_err(|_| {
                    parse_err(path, line, format!("column {:?}: {field:?} is not a number", &headers[col]))
                })?;
                if !x.is_finite() {
                    return Err(parse_err(path, line, format!("column {:?} is not finite", &headers[col])));
                }
                features.push(x);
            }
        }
        raw_labels.push((line, label.expect("csv enforces equal record lengths")));
        rows.push(features);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    if rows[0].is_empty() {
        return Err(parse_err(path, 1, "no feature columns"));
    }
    let has_zero = raw_labels.iter().any(|&(_, y)| y == 0);
    let labels = if has_zero {
        if let Some(&(line, _)) = raw_labels.iter().find(|&&(_, y)| y == -1) {
            return Err(parse_err(path, line, "labels mix -1 with 0; use {-1, 1} or {0, 1}"));
        }
        log::warn!("{}: labels in {{0, 1}}, mapping 0 to -1", path.display());
        raw_labels.iter().map(|&(_, y)| if y == 0 { -1 } else { 1 }).collect()
    } else {
        raw_labels.iter().map(|&(_, y)| y).collect()
    };
    Ok(Dataset {
        sample: LabeledSample::from_features(rows, labels)?,
        class: None,
        planted_margin: None,
        fingerprint: bytes,
    })
}

/// Uniform features in `[0, 1)` with independent uniform labels.
pub fn random_sample(m: usize, features: usize, seed: u64) -> Result<LabeledSample> {
    if features == 0 {
        return Err(crate::error::param("random dataset needs at least one feature"));
    }
    let mut rng = rng::stream(seed, &[0x5241_4e44]);
    let rows = (0..m).map(|_| (0..features).map(|_| rng.gen::<f64>()).collect()).collect();
    let labels = (0..m).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
    LabeledSample::from_features(rows, labels)
}

impl DatasetConfig {
    pub fn load(&self, seed: u64) -> Result<Dataset> {
        match self {
            DatasetConfig::Csv { path } => load_csv(path),
            DatasetConfig::PlantedVote {
                m,
                class_size,
                voters,
                gamma_star,
            } => {
                let inst = plant_vote_instance(*m, *class_size, *voters, *gamma_star, seed)?;
                Ok(Dataset {
                    sample: inst.sample,
                    class: Some(inst.class),
                    planted_margin: Some(inst.planted_margin),
                    fingerprint: format!("planted-vote {m} {class_size} {voters} {gamma_star} {seed}").into_bytes(),
                })
            }
            DatasetConfig::Random { m, features } => Ok(Dataset {
                sample: random_sample(*m, *features, seed)?,
                class: None,
                planted_margin: None,
                fingerprint: format!("random {m} {features} {seed}").into_bytes(),
            }),
        }
    }
}
