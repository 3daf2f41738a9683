use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    encode_resolution, resolution_label, Dataset, Kqi, Provenance, Sample, Split, Targets,
    CANONICAL_FEATURES, RESOLUTION,
};
use crate::{Error, Result};

const SPLIT_COLUMN: &str = "split";

/// Which canonical features to read and which CSV header each one lives under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default = "default_features")]
    pub features: Vec<String>,
    /// canonical name -> CSV header; names absent here are read verbatim.
    #[serde(default)]
    pub columns: BTreeMap<String, String>,
}

fn default_features() -> Vec<String> {
    CANONICAL_FEATURES.iter().map(|s| s.to_string()).collect()
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            features: default_features(),
            columns: BTreeMap::new(),
        }
    }
}

impl Schema {
    pub fn header_for<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.columns
            .get(canonical)
            .map(String::as_str)
            .unwrap_or(canonical)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowReject {
    /// 1-based line number in the file, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub dataset: Dataset,
    pub rejects: Vec<RowReject>,
}

pub fn load_csv(path: &Path, schema: &Schema) -> Result<LoadReport> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema, Provenance::Csv(path.display().to_string()))
}

/// Parses CSV text. A `split` column, when present on every row, restores a
/// previously persisted train/val/test assignment.
pub fn read_csv<R: Read>(reader: R, schema: &Schema, provenance: Provenance) -> Result<LoadReport> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyInput("csv has no header row".into()));
    }
    let find = |name: &str| headers.iter().position(|h| h == name);

    let mut feature_cols = Vec::with_capacity(schema.features.len());
    for f in &schema.features {
        let header = schema.header_for(f);
        let idx = find(header).ok_or_else(|| Error::MissingColumn {
            column: header.to_string(),
        })?;
        feature_cols.push((f.clone(), idx));
    }
    let mut target_cols = Vec::with_capacity(3);
    for k in Kqi::ALL {
        let header = schema.header_for(k.name());
        let idx = find(header).ok_or_else(|| Error::MissingColumn {
            column: header.to_string(),
        })?;
        let percent = header.contains('%');
        target_cols.push((k, idx, percent));
    }
    let split_col = find(SPLIT_COLUMN);

    let mut samples = Vec::new();
    let mut tags = Vec::new();
    let mut rejects = Vec::new();
    let mut rows = 0usize;
    for rec in rdr.records() {
        rows += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                rejects.push(RowReject {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&rec, &feature_cols, &target_cols, split_col) {
            Ok((sample, tag)) => {
                samples.push(sample);
                tags.push(tag);
            }
            Err(reason) => rejects.push(RowReject { line, reason }),
        }
    }
    if rows == 0 {
        return Err(Error::EmptyInput("csv has no data rows".into()));
    }

    let mut dataset = Dataset::new(schema.features.clone(), samples, provenance);
    if !tags.is_empty() && tags.iter().all(Option::is_some) {
        dataset.splits = Some(tags.into_iter().flatten().collect());
    }
    Ok(LoadReport { dataset, rejects })
}

fn parse_row(
    rec: &csv::StringRecord,
    features: &[(String, usize)],
    targets: &[(Kqi, usize, bool)],
    split_col: Option<usize>,
) -> std::result::Result<(Sample, Option<Split>), String> {
    let cell = |idx: usize| rec.get(idx).ok_or_else(|| format!("missing field {idx}"));
    let mut values = BTreeMap::new();
    for (name, idx) in features {
        let raw = cell(*idx)?;
        let v = if name == RESOLUTION {
            parse_resolution(raw)?
        } else {
            parse_finite(name, raw)?
        };
        values.insert(name.clone(), v);
    }
    let mut t = Targets {
        latency: 0.0,
        freeze: 0.0,
        efps: 0.0,
    };
    for (kqi, idx, percent) in targets {
        let mut v = parse_finite(kqi.name(), cell(*idx)?)?;
        if v < 0.0 {
            return Err(format!("{} is negative ({v})", kqi.name()));
        }
        if *percent {
            v /= 100.0;
        }
        t.set(*kqi, v);
    }
    let tag = match split_col {
        Some(i) => match cell(i)?.parse::<Split>() {
            Ok(s) => Some(s),
            Err(e) => return Err(e.to_string()),
        },
        None => None,
    };
    Ok((Sample::new(values, t), tag))
}

fn parse_finite(name: &str, raw: &str) -> std::result::Result<f64, String> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(format!("{name} is not finite ({v})")),
        Err(_) => Err(format!("{name}: cannot parse \"{raw}\"")),
    }
}

fn parse_resolution(raw: &str) -> std::result::Result<f64, String> {
    if let Ok(v) = raw.parse::<f64>() {
        return if v.fract() == 0.0 && (0.0..=3.0).contains(&v) {
            Ok(v)
        } else {
            Err(format!("resolution index {v} outside 0..=3"))
        };
    }
    encode_resolution(raw)
        .map(f64::from)
        .map_err(|e| e.to_string())
}

/// Writes the dataset under canonical column names. Resolution is written as
/// its label; a `split` column is appended when the dataset is split.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = dataset.feature_names.iter().map(String::as_str).collect();
    header.extend(Kqi::ALL.iter().map(|k| k.name()));
    if dataset.splits.is_some() {
        header.push(SPLIT_COLUMN);
    }
    w.write_record(&header)?;

    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for (i, s) in dataset.samples.iter().enumerate() {
        row.clear();
        for f in &dataset.feature_names {
            let v = s.feature(f)?;
            if f == RESOLUTION {
                row.push(resolution_label(v as u8)?.to_string());
            } else {
                row.push(v.to_string());
            }
        }
        for k in Kqi::ALL {
            row.push(s.target(k).to_string());
        }
        if let Some(tags) = &dataset.splits {
            row.push(tags[i].as_str().to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
