//! Per-streamline decision table: `index,verdict,nn_distance,nn_label` CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use finta::error::{Error, Result};
use finta::latent::{FilterDecision, Verdict};

pub fn decisions_csv(decisions: &[FilterDecision]) -> String {
    let mut out = String::from("index,verdict,nn_distance,nn_label\n");
    for d in decisions {
        writeln!(
            out,
            "{},{},{:.16e},{}",
            d.index,
            d.verdict.as_str(),
            d.nn_distance,
            d.nn_label
        )
        .unwrap();
    }
    out
}

pub fn write_decisions(decisions: &[FilterDecision], path: &Path) -> Result<()> {
    fs::write(path, decisions_csv(decisions))?;
    Ok(())
}

pub fn read_decisions(path: &Path) -> Result<Vec<FilterDecision>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "index,verdict,nn_distance,nn_label" {
        return Err(Error::CorruptFile {
            offset: 0,
            message: format!("bad decisions header {header:?}"),
        });
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(4, ',').collect();
        if fields.len() != 4 {
            return Err(Error::CorruptFile {
                offset: (lineno + 2) as u64,
                message: "decision row needs 4 fields".into(),
            });
        }
        let bad = |what: &str| Error::CorruptFile {
            offset: (lineno + 2) as u64,
            message: format!("bad {what}"),
        };
        let index: usize = fields[0].parse().map_err(|_| bad("index"))?;
        let nn_distance: f64 = fields[2].parse().map_err(|_| bad("distance"))?;
        let verdict = match fields[1] {
            "positive" => Verdict::Positive,
            "negative" => Verdict::Negative,
            "rejected" => Verdict::Rejected,
            other => Verdict::Bundle(other.to_string()),
        };
        out.push(FilterDecision {
            index,
            nn_distance,
            nn_label: fields[3].to_string(),
            verdict,
        });
    }
    Ok(out)
}
