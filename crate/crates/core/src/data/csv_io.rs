use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClassId, Dataset, MotionSnippet, CHANNEL_NAMES, N_STEPS, SNIPPET_LEN};
use crate::error::{Error, Result};

/// JSON sidecar stored next to a snippet CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub classes: BTreeMap<ClassId, String>,
    pub preprocessed: bool,
}

pub fn csv_header() -> Vec<String> {
    let mut h = vec!["id".to_string(), "label".to_string()];
    for name in CHANNEL_NAMES {
        h.extend((0..N_STEPS).map(|t| format!("{name}_{t}")));
    }
    h
}

/// `data.csv` -> `data.meta.json`
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Loads a snippet CSV together with its metadata sidecar.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let meta_file = meta_path(path);
    let meta_text = std::fs::read_to_string(&meta_file).map_err(|e| Error::io(&meta_file, e))?;
    let meta: DatasetMeta = serde_json::from_str(&meta_text)
        .map_err(|e| Error::Config(format!("{}: {e}", meta_file.display())))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, meta)
}

pub fn read_csv<R: Read>(reader: R, meta: DatasetMeta) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let expected = csv_header();
    let header = rdr.headers()?.clone();
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(a, b)| a.trim() != b) {
        return Err(Error::Parse {
            row: 1,
            message: format!(
                "header must be `id,label,ax_0..ax_19,ay_0..ay_19,az_0..az_19,sp_0..sp_19` ({} columns), found {} columns",
                expected.len(),
                header.len()
            ),
        });
    }

    let mut dataset = Dataset::new(meta.classes);
    dataset.preprocessed = meta.preprocessed;
    for (i, record) in rdr.records().enumerate() {
        // header is line 1
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.len() != SNIPPET_LEN + 2 {
            return Err(Error::Parse {
                row,
                message: format!(
                    "expected {SNIPPET_LEN} values, found {}",
                    record.len().saturating_sub(2)
                ),
            });
        }
        let id = record[0].trim().to_string();
        let label_text = record[1].trim();
        let label_value: f64 = label_text.parse().map_err(|_| Error::Parse {
            row,
            message: format!("label `{label_text}` is not numeric"),
        })?;
        let label = if label_value == -1.0 {
            None
        } else if label_value >= 0.0 && label_value.fract() == 0.0 && label_value <= u32::MAX as f64 {
            let l = label_value as ClassId;
            if !dataset.classes.contains_key(&l) {
                return Err(Error::Validation(format!("row {row}: unknown class index {l}")));
            }
            Some(l)
        } else {
            return Err(Error::Parse {
                row,
                message: format!("label `{label_text}` is not a class index or -1"),
            });
        };
        let mut values = [0.0; SNIPPET_LEN];
        for (j, cell) in record.iter().skip(2).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row,
                message: format!("column {} value `{cell}` is not numeric", expected[j + 2]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    message: format!("column {} is not finite", expected[j + 2]),
                });
            }
            values[j] = v;
        }
        dataset.snippets.push(MotionSnippet { id, values, label });
    }
    dataset.validate()?;
    Ok(dataset)
}

/// Writes the CSV and its metadata sidecar.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_csv_to(d, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    let meta = DatasetMeta {
        classes: d.classes.clone(),
        preprocessed: d.preprocessed,
    };
    let meta_file = meta_path(path);
    let mut f = File::create(&meta_file).map_err(|e| Error::io(&meta_file, e))?;
    serde_json::to_writer_pretty(&mut f, &meta)?;
    f.write_all(b"\n").map_err(|e| Error::io(&meta_file, e))?;
    Ok(())
}

pub fn write_csv_to<W: Write>(d: &Dataset, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(csv_header())?;
    for s in &d.snippets {
        let mut rec = Vec::with_capacity(SNIPPET_LEN + 2);
        rec.push(s.id.clone());
        rec.push(s.label.map_or("-1".to_string(), |l| l.to_string()));
        rec.extend(s.values.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
