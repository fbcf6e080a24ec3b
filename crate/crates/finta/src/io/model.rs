//! Binary model file: magic `FNTA`, version, configuration block,
//! normalization block, then every parameter tensor in declaration order as
//! little-endian 32-bit floats preceded by its dimension list.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{AutoencoderModel, ModelConfig, Normalization, TableInterpretation};
use crate::streamline::Point3;

pub const MODEL_MAGIC: &[u8; 4] = b"FNTA";
pub const MODEL_VERSION: u16 = 1;

pub fn model_bytes(model: &AutoencoderModel<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());

    let cfg = &model.config;
    out.extend_from_slice(&(cfg.input_points as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.input_channels as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.latent_dim as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.kernel_size as u32).to_le_bytes());
    out.push(match cfg.table_interpretation {
        TableInterpretation::InputSize => 0,
        TableInterpretation::OutputSize => 1,
    });
    out.push(cfg.encoder_features.len() as u8);
    for &f in &cfg.encoder_features {
        out.extend_from_slice(&(f as u32).to_le_bytes());
    }
    out.extend_from_slice(&cfg.seed.to_le_bytes());

    for v in [
        model.norm.center.x,
        model.norm.center.y,
        model.norm.center.z,
        model.norm.scale,
        model.norm.anchor.x,
        model.norm.anchor.y,
        model.norm.anchor.z,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }

    for (_, dims, data) in model.param_tensors() {
        out.push(dims.len() as u8);
        for d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_model(model: &AutoencoderModel<f32>, path: &Path) -> Result<()> {
    fs::write(path, model_bytes(model))?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::CorruptFile {
                offset: self.pos as u64,
                message: format!("unexpected end of file reading {what}"),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn parse_model(bytes: &[u8]) -> Result<AutoencoderModel<f32>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic")? != MODEL_MAGIC {
        return Err(Error::CorruptFile { offset: 0, message: "bad magic".into() });
    }
    let version = c.u16("version")?;
    if version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion { found: version, expected: MODEL_VERSION });
    }
    let input_points = c.u32("input_points")? as usize;
    let input_channels = c.u32("input_channels")? as usize;
    let latent_dim = c.u32("latent_dim")? as usize;
    let kernel_size = c.u32("kernel_size")? as usize;
    let table_interpretation = match c.u8("table_interpretation")? {
        0 => TableInterpretation::InputSize,
        1 => TableInterpretation::OutputSize,
        v => {
            return Err(Error::CorruptFile {
                offset: c.pos as u64,
                message: format!("bad table interpretation tag {v}"),
            })
        }
    };
    let n_features = c.u8("feature count")? as usize;
    let mut encoder_features = Vec::with_capacity(n_features);
    for _ in 0..n_features {
        encoder_features.push(c.u32("feature")? as usize);
    }
    let seed = c.u64("seed")?;
    let config = ModelConfig {
        input_points,
        input_channels,
        latent_dim,
        encoder_features,
        kernel_size,
        seed,
        table_interpretation,
    };

    let center = Point3::new(c.f64("center.x")?, c.f64("center.y")?, c.f64("center.z")?);
    let scale = c.f64("scale")?;
    let anchor = Point3::new(c.f64("anchor.x")?, c.f64("anchor.y")?, c.f64("anchor.z")?);
    if !(scale > 0.0) || !center.is_finite() || !anchor.is_finite() {
        return Err(Error::CorruptFile {
            offset: c.pos as u64,
            message: "bad normalization block".into(),
        });
    }

    let mut model = AutoencoderModel::<f32>::init(config)?;
    model.norm = Normalization { center, scale, anchor };

    let expected: Vec<(String, Vec<usize>)> = model
        .param_tensors()
        .into_iter()
        .map(|(name, dims, _)| (name, dims))
        .collect();
    let mut storage: Vec<Vec<f32>> = Vec::with_capacity(expected.len());
    for (name, dims) in &expected {
        let ndims = c.u8("tensor rank")? as usize;
        if ndims != dims.len() {
            return Err(Error::CorruptFile {
                offset: c.pos as u64,
                message: format!("tensor {name}: rank {ndims}, expected {}", dims.len()),
            });
        }
        let mut count = 1usize;
        for expect_dim in dims {
            let d = c.u32("tensor dim")? as usize;
            if d != *expect_dim {
                return Err(Error::CorruptFile {
                    offset: c.pos as u64,
                    message: format!("tensor {name}: dimension {d}, expected {expect_dim}"),
                });
            }
            count *= d;
        }
        let raw = c.take(count * 4, "tensor data")?;
        let mut data = Vec::with_capacity(count);
        for chunk in raw.chunks_exact(4) {
            data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::CorruptFile {
                offset: c.pos as u64,
                message: format!("tensor {name}: non-finite value"),
            });
        }
        storage.push(data);
    }
    if c.pos != bytes.len() {
        return Err(Error::CorruptFile {
            offset: c.pos as u64,
            message: "trailing bytes after last tensor".into(),
        });
    }
    for (dst, src) in model.param_tensors_mut().into_iter().zip(&storage) {
        dst.copy_from_slice(src);
    }
    Ok(model)
}

pub fn read_model(path: &Path) -> Result<AutoencoderModel<f32>> {
    let bytes = fs::read(path)?;
    parse_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> AutoencoderModel<f32> {
        let mut m = AutoencoderModel::<f32>::init(ModelConfig {
            input_points: 16,
            encoder_features: vec![4, 8],
            latent_dim: 4,
            seed: 21,
            ..ModelConfig::default()
        })
        .unwrap();
        m.norm = Normalization {
            center: Point3::new(1.5, -2.0, 0.25),
            scale: 42.0,
            anchor: Point3::new(9.0, 8.0, 7.0),
        };
        m
    }

    #[test]
    fn round_trip_bitwise() {
        let m = tiny();
        let bytes = model_bytes(&m);
        let back = parse_model(&bytes).unwrap();
        assert_eq!(back.config, m.config);
        assert_eq!(back.norm, m.norm);
        for ((_, _, a), (_, _, b)) in m.param_tensors().iter().zip(back.param_tensors()) {
            assert_eq!(*a, b);
        }
        assert_eq!(bytes, model_bytes(&back));
    }

    #[test]
    fn corrupt_magic_rejected() {
        let mut bytes = model_bytes(&tiny());
        bytes[0] = b'X';
        assert!(matches!(parse_model(&bytes), Err(Error::CorruptFile { offset: 0, .. })));
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut bytes = model_bytes(&tiny());
        bytes[4] = 99;
        assert!(matches!(
            parse_model(&bytes),
            Err(Error::UnsupportedVersion { found: 99, expected: 1 })
        ));
    }

    #[test]
    fn truncation_rejected_with_offset() {
        let bytes = model_bytes(&tiny());
        let cut = &bytes[..bytes.len() - 3];
        match parse_model(cut) {
            Err(Error::CorruptFile { offset, .. }) => assert!(offset > 0),
            Err(other) => panic!("expected CorruptFile, got {other:?}"),
            Ok(_) => panic!("expected CorruptFile, parse succeeded"),
        }
    }
}
