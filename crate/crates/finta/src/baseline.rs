//! Anatomy-style comparison filters: streamline length, loop removal and
//! endpoint tissue masks, applied standalone or as a successive pipeline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streamline::{Point3, Tractogram};

pub const DEFAULT_MIN_LENGTH_MM: f64 = 20.0;
pub const DEFAULT_MAX_LENGTH_MM: f64 = 200.0;
pub const DEFAULT_MAX_WINDING_DEG: f64 = 330.0;

/// Per-voxel tissue classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tissue {
    Background,
    WhiteMatter,
    GrayMatter,
    Csf,
    /// Terminal/atlas region with a region identifier.
    Atlas(u8),
}

impl Tissue {
    pub fn to_tag(self) -> u8 {
        match self {
            Tissue::Background => 0,
            Tissue::WhiteMatter => 1,
            Tissue::GrayMatter => 2,
            Tissue::Csf => 3,
            Tissue::Atlas(id) => 4u8.saturating_add(id),
        }
    }

    pub fn from_tag(tag: u8) -> Tissue {
        match tag {
            0 => Tissue::Background,
            1 => Tissue::WhiteMatter,
            2 => Tissue::GrayMatter,
            3 => Tissue::Csf,
            t => Tissue::Atlas(t - 4),
        }
    }
}

/// Regular voxel grid of tissue tags, x-fastest storage.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVolume {
    pub dims: [usize; 3],
    pub voxel_size_mm: [f64; 3],
    pub origin_mm: Point3,
    data: Vec<Tissue>,
}

impl MaskVolume {
    pub fn new(dims: [usize; 3], voxel_size_mm: [f64; 3], origin_mm: Point3) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) || voxel_size_mm.iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidConfig("mask dims and voxel sizes must be positive".into()));
        }
        Ok(Self {
            dims,
            voxel_size_mm,
            origin_mm,
            data: vec![Tissue::Background; dims[0] * dims[1] * dims[2]],
        })
    }

    pub fn from_data(
        dims: [usize; 3],
        voxel_size_mm: [f64; 3],
        origin_mm: Point3,
        data: Vec<Tissue>,
    ) -> Result<Self> {
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::ShapeMismatch(format!(
                "mask payload has {} voxels, dims imply {}",
                data.len(),
                dims[0] * dims[1] * dims[2]
            )));
        }
        let mut m = Self::new(dims, voxel_size_mm, origin_mm)?;
        m.data = data;
        Ok(m)
    }

    pub fn data(&self) -> &[Tissue] {
        &self.data
    }

    fn linear(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.dims[1] + iy) * self.dims[0] + ix
    }

    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> Tissue {
        self.data[self.linear(ix, iy, iz)]
    }

    pub fn set(&mut self, ix: usize, iy: usize, iz: usize, t: Tissue) {
        let idx = self.linear(ix, iy, iz);
        self.data[idx] = t;
    }

    /// Voxel index containing a point: floor-based, so a point exactly on a
    /// voxel boundary belongs to the higher-index voxel. `None` outside the
    /// volume.
    pub fn voxel_index(&self, p: &Point3) -> Option<[usize; 3]> {
        let coords = [
            (p.x - self.origin_mm.x) / self.voxel_size_mm[0],
            (p.y - self.origin_mm.y) / self.voxel_size_mm[1],
            (p.z - self.origin_mm.z) / self.voxel_size_mm[2],
        ];
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let v = coords[a].floor();
            if v < 0.0 || v >= self.dims[a] as f64 {
                return None;
            }
            idx[a] = v as usize;
        }
        Some(idx)
    }

    /// Tissue at a point; background when the point lies outside the volume.
    pub fn tissue_at(&self, p: &Point3) -> Tissue {
        match self.voxel_index(p) {
            Some([ix, iy, iz]) => self.get(ix, iy, iz),
            None => Tissue::Background,
        }
    }
}

/// Positive iff the streamline length lies within `[min_mm, max_mm]`.
pub fn length_filter(t: &Tractogram, min_mm: f64, max_mm: f64) -> Result<Vec<bool>> {
    if min_mm >= max_mm {
        return Err(Error::InvalidConfig(format!(
            "length bounds inverted: [{min_mm}, {max_mm}]"
        )));
    }
    Ok(t.streamlines
        .par_iter()
        .map(|s| {
            let l = s.length_mm();
            min_mm <= l && l <= max_mm
        })
        .collect())
}

/// Negative iff the total winding exceeds `max_winding_deg`.
pub fn loop_filter(t: &Tractogram, max_winding_deg: f64) -> Result<Vec<bool>> {
    if max_winding_deg <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "winding cutoff must be positive, got {max_winding_deg}"
        )));
    }
    Ok(t.streamlines
        .par_iter()
        .map(|s| s.total_winding_deg() <= max_winding_deg)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// Negative iff either endpoint lies in a CSF voxel.
    RejectCsfEndpoint,
    /// Positive iff both endpoints lie in gray-matter or atlas voxels.
    RequireAtlasEndpoint,
}

#[derive(Debug, Clone)]
pub struct MaskFilterOutcome {
    pub verdicts: Vec<bool>,
    /// Endpoints that fell outside the mask volume (treated as background).
    pub out_of_bounds_endpoints: usize,
}

pub fn endpoint_mask_filter(
    t: &Tractogram,
    mask: &MaskVolume,
    mode: MaskMode,
) -> MaskFilterOutcome {
    let results: Vec<(bool, usize)> = t
        .streamlines
        .par_iter()
        .map(|s| {
            let ends = [s.first(), s.last()];
            let mut oob = 0usize;
            let tissues: Vec<Tissue> = ends
                .iter()
                .map(|p| {
                    if mask.voxel_index(p).is_none() {
                        oob += 1;
                    }
                    mask.tissue_at(p)
                })
                .collect();
            let verdict = match mode {
                MaskMode::RejectCsfEndpoint => !tissues.iter().any(|&t| t == Tissue::Csf),
                MaskMode::RequireAtlasEndpoint => tissues
                    .iter()
                    .all(|t| matches!(t, Tissue::GrayMatter | Tissue::Atlas(_))),
            };
            (verdict, oob)
        })
        .collect();
    MaskFilterOutcome {
        verdicts: results.iter().map(|r| r.0).collect(),
        out_of_bounds_endpoints: results.iter().map(|r| r.1).sum(),
    }
}

/// One stage of the successive filtering pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Stage {
    Length { min_mm: f64, max_mm: f64 },
    Loop { max_winding_deg: f64 },
    Mask { mode: MaskMode },
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Length { .. } => "length",
            Stage::Loop { .. } => "no_loops",
            Stage::Mask { mode: MaskMode::RejectCsfEndpoint } => "no_end_in_csf",
            Stage::Mask { mode: MaskMode::RequireAtlasEndpoint } => "end_in_atlas",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub input_count: usize,
    pub positive_count: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    /// Final verdict: positive iff positive at every stage.
    pub verdicts: Vec<bool>,
    /// Index of the stage that rejected each streamline, if any.
    pub rejected_by: Vec<Option<usize>>,
    pub stages: Vec<StageReport>,
}

/// Run stages successively, each seeing only the previous stage's
/// positives.
pub fn pipeline(
    t: &Tractogram,
    stages: &[Stage],
    mask: Option<&MaskVolume>,
) -> Result<PipelineOutcome> {
    if stages.is_empty() {
        return Err(Error::InvalidConfig("pipeline needs at least one stage".into()));
    }
    let n = t.len();
    let mut alive: Vec<usize> = (0..n).collect();
    let mut rejected_by: Vec<Option<usize>> = vec![None; n];
    let mut reports = Vec::with_capacity(stages.len());

    for (stage_idx, stage) in stages.iter().enumerate() {
        let sub = t.select(&alive);
        let verdicts = match stage {
            Stage::Length { min_mm, max_mm } => length_filter(&sub, *min_mm, *max_mm)?,
            Stage::Loop { max_winding_deg } => loop_filter(&sub, *max_winding_deg)?,
            Stage::Mask { mode } => {
                let mask = mask.ok_or_else(|| {
                    Error::InvalidConfig("mask stage requires a mask volume".into())
                })?;
                endpoint_mask_filter(&sub, mask, *mode).verdicts
            }
        };
        let mut next_alive = Vec::with_capacity(alive.len());
        for (i, &orig) in alive.iter().enumerate() {
            if verdicts[i] {
                next_alive.push(orig);
            } else {
                rejected_by[orig] = Some(stage_idx);
            }
        }
        reports.push(StageReport {
            name: stage.name().to_string(),
            input_count: alive.len(),
            positive_count: next_alive.len(),
        });
        alive = next_alive;
    }

    let mut verdicts = vec![false; n];
    for &i in &alive {
        verdicts[i] = true;
    }
    Ok(PipelineOutcome { verdicts, rejected_by, stages: reports })
}
