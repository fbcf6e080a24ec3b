//! Latent dump: comma-separated text with header `id,label,z0..z{d-1}`.
//! Values are written with 17 significant digits so re-importing the dump
//! reproduces nearest-neighbor decisions bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::latent::LatentRow;

pub fn latents_text(rows: &[LatentRow]) -> Result<String> {
    let dim = rows.first().map(|r| r.values.len()).unwrap_or(0);
    let mut out = String::new();
    out.push_str("id,label");
    for d in 0..dim {
        write!(out, ",z{d}").unwrap();
    }
    out.push('\n');
    for row in rows {
        if row.values.len() != dim {
            return Err(Error::ShapeMismatch("inconsistent latent dimensions".into()));
        }
        let label = row.label.as_deref().unwrap_or("");
        if label.contains(',') || label.contains('\n') {
            return Err(Error::InvalidConfig(format!(
                "label {label:?} cannot be stored in a comma-separated dump"
            )));
        }
        write!(out, "{},{}", row.id, label).unwrap();
        for v in &row.values {
            write!(out, ",{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_latents(rows: &[LatentRow], path: &Path) -> Result<()> {
    fs::write(path, latents_text(rows)?)?;
    Ok(())
}

pub fn parse_latents(text: &str) -> Result<Vec<LatentRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::CorruptFile {
        offset: 0,
        message: "empty latent dump".into(),
    })?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 2 || columns[0] != "id" || columns[1] != "label" {
        return Err(Error::CorruptFile {
            offset: 0,
            message: format!("bad latent dump header {header:?}"),
        });
    }
    let dim = columns.len() - 2;
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(Error::CorruptFile {
                offset: (lineno + 2) as u64,
                message: format!("row has {} fields, expected {}", fields.len(), dim + 2),
            });
        }
        let id: usize = fields[0].parse().map_err(|_| Error::CorruptFile {
            offset: (lineno + 2) as u64,
            message: format!("bad id {:?}", fields[0]),
        })?;
        let label =
            if fields[1].is_empty() { None } else { Some(fields[1].to_string()) };
        let mut values = Vec::with_capacity(dim);
        for f in &fields[2..] {
            values.push(f.parse().map_err(|_| Error::CorruptFile {
                offset: (lineno + 2) as u64,
                message: format!("bad latent value {f:?}"),
            })?);
        }
        rows.push(LatentRow { id, label, values });
    }
    Ok(rows)
}

pub fn read_latents(path: &Path) -> Result<Vec<LatentRow>> {
    let text = fs::read_to_string(path)?;
    parse_latents(&text)
}
