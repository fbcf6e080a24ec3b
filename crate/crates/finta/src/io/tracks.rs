//! Track file format.
//!
//! An ASCII header of `key: value` lines including `datatype: Float32LE`
//! and `file: . <offset>`, terminated by a line reading `END`. The body at
//! `offset` is a run of little-endian 32-bit IEEE-754 `(x, y, z)` triples;
//! a `(NaN, NaN, NaN)` triple terminates each streamline and an
//! `(Inf, Inf, Inf)` triple terminates the stream.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::streamline::{Point3, Streamline, Tractogram};

const TRIPLE: usize = 12;

#[derive(Debug)]
pub struct TrackReadOutcome {
    pub tractogram: Tractogram,
    /// Unknown header keys and other non-fatal oddities.
    pub warnings: Vec<String>,
}

/// Serialize to the track byte format; identical input produces identical
/// bytes.
pub fn track_bytes(t: &Tractogram) -> Vec<u8> {
    // The offset is part of the header, so fix-point the header length.
    let mut offset = 0usize;
    let header = loop {
        let header = format!(
            "count: {}\ndatatype: Float32LE\nfile: . {}\nEND\n",
            t.len(),
            offset
        );
        if header.len() == offset {
            break header;
        }
        offset = header.len();
    };
    let mut out = Vec::with_capacity(header.len() + t.len() * 16 * TRIPLE);
    out.extend_from_slice(header.as_bytes());
    let mut push = |x: f32, y: f32, z: f32| {
        out.extend_from_slice(&x.to_le_bytes());
        out.extend_from_slice(&y.to_le_bytes());
        out.extend_from_slice(&z.to_le_bytes());
    };
    for s in &t.streamlines {
        for p in s.points() {
            push(p.x as f32, p.y as f32, p.z as f32);
        }
        push(f32::NAN, f32::NAN, f32::NAN);
    }
    push(f32::INFINITY, f32::INFINITY, f32::INFINITY);
    out
}

pub fn write_tracks(t: &Tractogram, path: &Path) -> Result<()> {
    fs::write(path, track_bytes(t))?;
    Ok(())
}

pub fn parse_tracks(bytes: &[u8]) -> Result<TrackReadOutcome> {
    let mut warnings = Vec::new();
    let mut pos = 0usize;
    let mut datatype: Option<String> = None;
    let mut offset: Option<usize> = None;
    let mut declared_count: Option<usize> = None;
    let mut saw_end = false;

    while pos < bytes.len() {
        let line_end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| pos + i)
            .ok_or(Error::CorruptFile {
                offset: pos as u64,
                message: "header not terminated".into(),
            })?;
        let line = std::str::from_utf8(&bytes[pos..line_end]).map_err(|_| Error::CorruptFile {
            offset: pos as u64,
            message: "header is not ASCII".into(),
        })?;
        pos = line_end + 1;
        if line.trim() == "END" {
            saw_end = true;
            break;
        }
        match line.split_once(':') {
            Some((key, value)) => {
                let value = value.trim();
                match key.trim() {
                    "datatype" => datatype = Some(value.to_string()),
                    "file" => {
                        let off = value
                            .strip_prefix(". ")
                            .and_then(|v| v.parse::<usize>().ok())
                            .ok_or(Error::CorruptFile {
                                offset: pos as u64,
                                message: format!("bad file offset {value:?}"),
                            })?;
                        offset = Some(off);
                    }
                    "count" => declared_count = value.parse().ok(),
                    other => warnings.push(format!("unknown header key {other:?}")),
                }
            }
            None => {
                return Err(Error::CorruptFile {
                    offset: pos as u64,
                    message: format!("malformed header line {line:?}"),
                })
            }
        }
    }
    if !saw_end {
        return Err(Error::CorruptFile { offset: pos as u64, message: "missing END line".into() });
    }
    match datatype.as_deref() {
        Some("Float32LE") => {}
        Some(other) => {
            return Err(Error::CorruptFile {
                offset: 0,
                message: format!("unsupported datatype {other:?}"),
            })
        }
        None => {
            return Err(Error::CorruptFile { offset: 0, message: "missing datatype".into() })
        }
    }
    let offset = offset
        .ok_or(Error::CorruptFile { offset: 0, message: "missing file offset".into() })?;
    if offset < pos || offset > bytes.len() {
        return Err(Error::CorruptFile {
            offset: offset as u64,
            message: "body offset outside file".into(),
        });
    }

    let body = &bytes[offset..];
    let mut streamlines = Vec::new();
    let mut current: Vec<Point3> = Vec::new();
    let mut cursor = 0usize;
    let mut terminated = false;
    while cursor + TRIPLE <= body.len() {
        let read = |at: usize| {
            f32::from_le_bytes([body[at], body[at + 1], body[at + 2], body[at + 3]])
        };
        let (x, y, z) = (read(cursor), read(cursor + 4), read(cursor + 8));
        cursor += TRIPLE;
        let nan = [x, y, z].map(f32::is_nan);
        let inf = [x, y, z].map(f32::is_infinite);
        if nan.iter().any(|&v| v) {
            if !nan.iter().all(|&v| v) {
                return Err(Error::CorruptFile {
                    offset: (offset + cursor - TRIPLE) as u64,
                    message: "partial NaN separator triple".into(),
                });
            }
            streamlines.push(Streamline::new(std::mem::take(&mut current))?);
        } else if inf.iter().any(|&v| v) {
            if !inf.iter().all(|&v| v) {
                return Err(Error::CorruptFile {
                    offset: (offset + cursor - TRIPLE) as u64,
                    message: "partial Inf terminator triple".into(),
                });
            }
            if !current.is_empty() {
                return Err(Error::CorruptFile {
                    offset: (offset + cursor - TRIPLE) as u64,
                    message: "stream terminator inside an open streamline".into(),
                });
            }
            terminated = true;
            break;
        } else {
            current.push(Point3::new(x as f64, y as f64, z as f64));
        }
    }
    if !terminated && !(body.is_empty() && streamlines.is_empty()) {
        return Err(Error::CorruptFile {
            offset: (offset + cursor) as u64,
            message: "body ended without stream terminator".into(),
        });
    }
    if let Some(count) = declared_count {
        if count != streamlines.len() {
            warnings.push(format!(
                "declared count {count} differs from parsed {}",
                streamlines.len()
            ));
        }
    }
    Ok(TrackReadOutcome { tractogram: Tractogram::new(streamlines), warnings })
}

pub fn read_tracks(path: &Path) -> Result<TrackReadOutcome> {
    let bytes = fs::read(path)?;
    parse_tracks(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tractogram {
        let s1 = Streamline::new(vec![
            Point3::new(0.5, 1.5, 2.5),
            Point3::new(3.25, 4.0, 5.0),
            Point3::new(6.0, 7.0, 8.0),
        ])
        .unwrap();
        let s2 =
            Streamline::new(vec![Point3::new(-1.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)])
                .unwrap();
        Tractogram::new(vec![s1, s2])
    }

    #[test]
    fn round_trip_bitwise() {
        let t = sample();
        let bytes = track_bytes(&t);
        let back = parse_tracks(&bytes).unwrap();
        assert_eq!(back.tractogram.streamlines, t.streamlines);
        assert!(back.warnings.is_empty());
        // deterministic byte output
        assert_eq!(bytes, track_bytes(&t));
    }

    #[test]
    fn empty_tractogram_round_trips() {
        let t = Tractogram::new(vec![]);
        let back = parse_tracks(&track_bytes(&t)).unwrap();
        assert!(back.tractogram.is_empty());
    }

    #[test]
    fn hand_built_fixture_parses_exactly() {
        let header = "datatype: Float32LE\nfile: . 64\nEND\n";
        let mut bytes = header.as_bytes().to_vec();
        bytes.resize(64, 0); // padding up to the declared offset
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for _ in 0..3 {
            bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        }
        for _ in 0..3 {
            bytes.extend_from_slice(&f32::INFINITY.to_le_bytes());
        }
        let out = parse_tracks(&bytes).unwrap();
        assert_eq!(out.tractogram.len(), 1);
        assert_eq!(
            out.tractogram.streamlines[0].points(),
            &[
                Point3::new(1.0, 2.0, 3.0),
                Point3::new(4.0, 5.0, 6.0),
                Point3::new(7.0, 8.0, 9.0)
            ]
        );
    }

    #[test]
    fn truncated_body_is_corrupt() {
        let t = sample();
        let mut bytes = track_bytes(&t);
        bytes.truncate(bytes.len() - 13);
        match parse_tracks(&bytes) {
            Err(Error::CorruptFile { .. }) => {}
            other => panic!("expected CorruptFile, got {other:?}"),
        }
    }

    #[test]
    fn missing_end_is_corrupt() {
        let bytes = b"datatype: Float32LE\nfile: . 40\n".to_vec();
        assert!(matches!(parse_tracks(&bytes), Err(Error::CorruptFile { .. })));
    }

    #[test]
    fn unknown_key_warns_but_parses() {
        let t = sample();
        let bytes = track_bytes(&t);
        let body_offset = bytes.windows(4).position(|w| w == b"END\n").unwrap() + 4;
        // rebuild the header with an extra unknown key, re-fixing the offset
        let mut offset = 0usize;
        let header = loop {
            let h = format!(
                "count: 2\nflavor: mint\ndatatype: Float32LE\nfile: . {offset}\nEND\n"
            );
            if h.len() == offset {
                break h;
            }
            offset = h.len();
        };
        let mut patched = header.into_bytes();
        patched.extend_from_slice(&bytes[body_offset..]);
        let out = parse_tracks(&patched).unwrap();
        assert_eq!(out.tractogram.len(), 2);
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].contains("flavor"));
    }
}
