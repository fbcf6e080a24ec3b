//! Mask volume file: a text header (dims, voxel size, origin, tag legend)
//! terminated by `END`, followed by raw per-voxel unsigned 8-bit tissue
//! tags in x-fastest order.

use std::fs;
use std::path::Path;

use crate::baseline::{MaskVolume, Tissue};
use crate::error::{Error, Result};
use crate::streamline::Point3;

pub fn mask_bytes(mask: &MaskVolume) -> Vec<u8> {
    let header = format!(
        "dims: {} {} {}\nvoxel_size_mm: {} {} {}\norigin_mm: {} {} {}\ntags: 0=background 1=white_matter 2=gray_matter 3=csf 4+=atlas_region\nEND\n",
        mask.dims[0], mask.dims[1], mask.dims[2],
        mask.voxel_size_mm[0], mask.voxel_size_mm[1], mask.voxel_size_mm[2],
        mask.origin_mm.x, mask.origin_mm.y, mask.origin_mm.z,
    );
    let mut out = header.into_bytes();
    out.extend(mask.data().iter().map(|t| t.to_tag()));
    out
}

pub fn write_mask(mask: &MaskVolume, path: &Path) -> Result<()> {
    fs::write(path, mask_bytes(mask))?;
    Ok(())
}

pub fn parse_mask(bytes: &[u8]) -> Result<MaskVolume> {
    let mut pos = 0usize;
    let mut dims: Option<[usize; 3]> = None;
    let mut voxel: Option<[f64; 3]> = None;
    let mut origin: Option<Point3> = None;
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
        let (key, value) = line.split_once(':').ok_or(Error::CorruptFile {
            offset: pos as u64,
            message: format!("malformed header line {line:?}"),
        })?;
        let fields: Vec<&str> = value.split_whitespace().collect();
        let parse3 = |what: &str| -> Result<[f64; 3]> {
            if fields.len() != 3 {
                return Err(Error::CorruptFile {
                    offset: pos as u64,
                    message: format!("{what} needs 3 fields"),
                });
            }
            let mut out = [0.0; 3];
            for (slot, f) in out.iter_mut().zip(&fields) {
                *slot = f.parse().map_err(|_| Error::CorruptFile {
                    offset: pos as u64,
                    message: format!("bad {what} field {f:?}"),
                })?;
            }
            Ok(out)
        };
        match key.trim() {
            "dims" => {
                let v = parse3("dims")?;
                dims = Some([v[0] as usize, v[1] as usize, v[2] as usize]);
            }
            "voxel_size_mm" => voxel = Some(parse3("voxel size")?),
            "origin_mm" => {
                let v = parse3("origin")?;
                origin = Some(Point3::new(v[0], v[1], v[2]));
            }
            "tags" => {}
            _ => {}
        }
    }
    if !saw_end {
        return Err(Error::CorruptFile { offset: pos as u64, message: "missing END line".into() });
    }
    let dims = dims.ok_or(Error::CorruptFile { offset: 0, message: "missing dims".into() })?;
    let voxel =
        voxel.ok_or(Error::CorruptFile { offset: 0, message: "missing voxel size".into() })?;
    let origin =
        origin.ok_or(Error::CorruptFile { offset: 0, message: "missing origin".into() })?;
    let expected = dims[0] * dims[1] * dims[2];
    let payload = &bytes[pos..];
    if payload.len() != expected {
        return Err(Error::CorruptFile {
            offset: pos as u64,
            message: format!("payload has {} voxels, dims imply {expected}", payload.len()),
        });
    }
    let data: Vec<Tissue> = payload.iter().map(|&b| Tissue::from_tag(b)).collect();
    MaskVolume::from_data(dims, voxel, origin, data)
}

pub fn read_mask(path: &Path) -> Result<MaskVolume> {
    let bytes = fs::read(path)?;
    parse_mask(&bytes)
}
