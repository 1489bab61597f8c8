//! Embedding file format: `dim=<d>` header, then one record per line as
//! `id<TAB>label-or-"-"<TAB>` followed by d space-separated decimal floats.
//! Floats are printed in Rust's shortest round-trip form, so a write/read
//! cycle reproduces every value exactly.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// One exported sentence embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub label: Option<String>,
    pub vector: Vec<f64>,
}

pub fn write_embeddings(path: &Path, records: &[EmbeddingRecord], dim: usize) -> Result<()> {
    let display = path.display().to_string();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "dim={dim}")?;
    for record in records {
        if record.vector.len() != dim {
            return Err(Error::Format {
                path: display,
                msg: format!(
                    "record {:?} has dimension {}, expected {}",
                    record.id,
                    record.vector.len(),
                    dim
                ),
            });
        }
        if record.id.contains(['\t', '\n']) {
            return Err(Error::Format {
                path: display,
                msg: format!("record id {:?} contains a tab or newline", record.id),
            });
        }
        let label = record.label.as_deref().unwrap_or("-");
        let floats: Vec<String> = record.vector.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}\t{}\t{}", record.id, label, floats.join(" "))?;
    }
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Format {
            path: display.clone(),
            msg: "missing dim=<d> header".into(),
        })?;
    let dim: usize = header
        .strip_prefix("dim=")
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| Error::Format {
            path: display.clone(),
            msg: format!("bad header {header:?}, expected dim=<d>"),
        })?;

    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let (id, label, floats) = match (fields.next(), fields.next(), fields.next()) {
            (Some(id), Some(label), Some(floats)) => (id, label, floats),
            _ => {
                return Err(Error::Format {
                    path: display,
                    msg: format!("malformed record line {line:?}"),
                })
            }
        };
        let vector: Vec<f64> = floats
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|_| Error::Format {
                    path: display.clone(),
                    msg: format!("record {id:?}: bad float {s:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if vector.len() != dim {
            return Err(Error::Format {
                path: display,
                msg: format!(
                    "record {id:?} has dimension {}, file declares {dim}",
                    vector.len()
                ),
            });
        }
        records.push(EmbeddingRecord {
            id: id.to_string(),
            label: (label != "-").then(|| label.to_string()),
            vector,
        });
    }
    Ok(records)
}
