//! Latent-space filtering core: reference sets, exact nearest-neighbor
//! queries, ROC threshold selection, binary filtering, multi-class
//! bundling and latent interpolation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::linalg::Scalar;
use crate::nn::{AutoencoderModel, LatentVector};
use crate::streamline::{Streamline, Tractogram};

/// Verdict label assigned by [`classify`] when a threshold is supplied and
/// the nearest neighbor is too far.
pub const REJECTED_LABEL: &str = "rejected";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceProvenance {
    pub model_id: String,
    pub source: String,
}

/// Labeled latent vectors supporting exact nearest-neighbor queries under
/// the Euclidean distance. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    dim: usize,
    flat: Vec<f64>,
    labels: Vec<String>,
    pub provenance: ReferenceProvenance,
}

impl ReferenceSet {
    pub fn build(
        latents: &[LatentVector],
        labels: &[String],
        provenance: ReferenceProvenance,
    ) -> Result<Self> {
        if latents.is_empty() {
            return Err(Error::EmptyReference);
        }
        if labels.len() != latents.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} latents vs {} labels",
                latents.len(),
                labels.len()
            )));
        }
        let dim = latents[0].dim();
        let mut flat = Vec::with_capacity(latents.len() * dim);
        for z in latents {
            if z.dim() != dim {
                return Err(Error::ShapeMismatch("inconsistent latent dimensions".into()));
            }
            if !z.is_finite() {
                return Err(Error::InvalidLatent("non-finite reference latent".into()));
            }
            flat.extend_from_slice(&z.values);
        }
        Ok(Self { dim, flat, labels: labels.to_vec(), provenance })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn latent(&self, i: usize) -> &[f64] {
        &self.flat[i * self.dim..(i + 1) * self.dim]
    }

    pub fn distinct_labels(&self) -> Vec<&str> {
        let mut set: Vec<&str> = self.labels.iter().map(|s| s.as_str()).collect();
        set.sort_unstable();
        set.dedup();
        set
    }

    /// Exact nearest neighbor; ties resolve to the lowest reference index.
    pub fn nearest(&self, q: &LatentVector) -> Result<(usize, f64, &str)> {
        self.nearest_excluding(q, usize::MAX)
    }

    /// Nearest neighbor skipping one reference entry (for leave-one-out
    /// distances of the reference members themselves).
    pub fn nearest_excluding(&self, q: &LatentVector, skip: usize) -> Result<(usize, f64, &str)> {
        if q.dim() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "query has {} components, reference {}",
                q.dim(),
                self.dim
            )));
        }
        if !q.is_finite() {
            return Err(Error::InvalidLatent("non-finite query".into()));
        }
        if skip == 0 && self.len() == 1 {
            return Err(Error::EmptyReference);
        }
        let mut best = (usize::MAX, f64::INFINITY);
        for i in 0..self.len() {
            if i == skip {
                continue;
            }
            let mut acc = 0.0f64;
            for (a, b) in self.latent(i).iter().zip(&q.values) {
                let d = a - b;
                acc += d * d;
            }
            if acc < best.1 {
                best = (i, acc);
            }
        }
        Ok((best.0, best.1.sqrt(), self.labels[best.0].as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Distance cutoff selected from the ROC sweep, with the full curve kept
/// for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub curve: Vec<RocPoint>,
    pub criterion: String,
}

/// Selection criterion tag: maximize TPR - FPR with unit weights.
pub const THRESHOLD_CRITERION: &str = "max(tpr - fpr), unit weights, tie to smaller";

/// Pick the distance threshold maximizing `TPR - FPR` with equal unit
/// weights. Candidates are the midpoints between consecutive distinct
/// pooled distances plus one sentinel on each side, so the chosen value
/// sits strictly between the two classes wherever they separate; ties go to
/// the smaller threshold. A sample is a predicted positive when its
/// distance is `<=` the threshold.
pub fn select_threshold(pos_distances: &[f64], neg_distances: &[f64]) -> Result<Threshold> {
    if pos_distances.is_empty() || neg_distances.is_empty() {
        return Err(Error::DegenerateRoc("a distance class is empty".into()));
    }
    for &d in pos_distances.iter().chain(neg_distances) {
        if !d.is_finite() || d < 0.0 {
            return Err(Error::DegenerateRoc(format!("bad distance {d}")));
        }
    }
    let mut pos: Vec<f64> = pos_distances.to_vec();
    let mut neg: Vec<f64> = neg_distances.to_vec();
    pos.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    neg.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());

    let mut pooled: Vec<f64> = pos.iter().chain(neg.iter()).copied().collect();
    pooled.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    pooled.dedup();

    let mut candidates = Vec::with_capacity(pooled.len() + 1);
    let lowest = pooled[0];
    if lowest > 0.0 {
        candidates.push(lowest / 2.0);
    }
    for w in pooled.windows(2) {
        candidates.push((w[0] + w[1]) / 2.0);
    }
    let highest = *pooled.last().unwrap();
    candidates.push(if highest > 0.0 { highest * 1.5 } else { 1.0 });

    let p = pos.len() as i128;
    let n = neg.len() as i128;
    let count_le = |sorted: &[f64], x: f64| sorted.partition_point(|&d| d <= x);

    let mut curve = Vec::with_capacity(candidates.len());
    let mut best: Option<(i128, f64)> = None;
    for &c in &candidates {
        let tp = count_le(&pos, c) as i128;
        let fp = count_le(&neg, c) as i128;
        curve.push(RocPoint {
            threshold: c,
            tpr: tp as f64 / p as f64,
            fpr: fp as f64 / n as f64,
        });
        // J compared exactly over the common denominator p*n
        let j_num = tp * n - fp * p;
        let better = match best {
            None => true,
            Some((best_j, _)) => j_num > best_j,
        };
        if better {
            best = Some((j_num, c));
        }
    }
    let value = best.unwrap().1;
    Ok(Threshold { value, curve, criterion: THRESHOLD_CRITERION.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    Positive,
    Negative,
    Bundle(String),
    Rejected,
}

impl Verdict {
    pub fn as_str(&self) -> &str {
        match self {
            Verdict::Positive => "positive",
            Verdict::Negative => "negative",
            Verdict::Bundle(b) => b.as_str(),
            Verdict::Rejected => REJECTED_LABEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub index: usize,
    pub nn_distance: f64,
    pub nn_label: String,
    pub verdict: Verdict,
}

fn encode_against<F: Scalar>(
    model: &AutoencoderModel<F>,
    reference: &ReferenceSet,
    t: &Tractogram,
) -> Result<Vec<(usize, f64, String)>> {
    let latents = model.encode_batch(&t.streamlines)?;
    let results: Result<Vec<_>> = latents
        .par_iter()
        .map(|z| {
            reference
                .nearest(z)
                .map(|(idx, dist, label)| (idx, dist, label.to_string()))
        })
        .collect();
    results
}

/// Binary filtering: a streamline is positive iff its nearest-reference
/// distance does not exceed the threshold. Output order matches input
/// order.
pub fn filter<F: Scalar>(
    model: &AutoencoderModel<F>,
    reference: &ReferenceSet,
    t: &Tractogram,
    threshold: &Threshold,
) -> Result<Vec<FilterDecision>> {
    Ok(encode_against(model, reference, t)?
        .into_iter()
        .enumerate()
        .map(|(index, (_, nn_distance, nn_label))| FilterDecision {
            index,
            nn_distance,
            nn_label,
            verdict: if nn_distance <= threshold.value {
                Verdict::Positive
            } else {
                Verdict::Negative
            },
        })
        .collect())
}

/// Multi-class labeling: every streamline takes its nearest neighbor's
/// class; with a threshold, distances beyond it become [`REJECTED_LABEL`].
pub fn classify<F: Scalar>(
    model: &AutoencoderModel<F>,
    reference: &ReferenceSet,
    t: &Tractogram,
    threshold: Option<&Threshold>,
) -> Result<Vec<FilterDecision>> {
    if reference.distinct_labels().len() < 2 {
        return Err(Error::InvalidConfig(
            "classification needs a reference with at least 2 classes".into(),
        ));
    }
    Ok(encode_against(model, reference, t)?
        .into_iter()
        .enumerate()
        .map(|(index, (_, nn_distance, nn_label))| {
            let verdict = match threshold {
                Some(th) if nn_distance > th.value => Verdict::Rejected,
                _ => Verdict::Bundle(nn_label.clone()),
            };
            FilterDecision { index, nn_distance, nn_label, verdict }
        })
        .collect())
}

/// Decode `k` evenly spaced points on the latent segment between two
/// vectors; the first and last outputs are the decoded endpoints.
pub fn interpolate<F: Scalar>(
    model: &AutoencoderModel<F>,
    z_a: &LatentVector,
    z_b: &LatentVector,
    k: usize,
) -> Result<Vec<Streamline>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 interpolation steps, got {k}")));
    }
    if !z_a.is_finite() || !z_b.is_finite() {
        return Err(Error::InvalidLatent("non-finite interpolation endpoint".into()));
    }
    if z_a.dim() != z_b.dim() {
        return Err(Error::ShapeMismatch("interpolation endpoints differ in dimension".into()));
    }
    let latents: Vec<LatentVector> = (0..k)
        .map(|i| {
            let t = i as f64 / (k - 1) as f64;
            LatentVector {
                values: z_a
                    .values
                    .iter()
                    .zip(&z_b.values)
                    .map(|(a, b)| (1.0 - t) * a + t * b)
                    .collect(),
            }
        })
        .collect();
    model.decode_batch(&latents)
}

/// One row of the latent table dump.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentRow {
    pub id: usize,
    pub label: Option<String>,
    pub values: Vec<f64>,
}

/// Latent embedding of every streamline, with labels when the tractogram
/// carries them (or group ids when `use_groups` is set).
pub fn export_latents<F: Scalar>(
    model: &AutoencoderModel<F>,
    t: &Tractogram,
    use_groups: bool,
) -> Result<Vec<LatentRow>> {
    let latents = model.encode_batch(&t.streamlines)?;
    let tags = if use_groups { &t.group_ids } else { &t.labels };
    Ok(latents
        .into_iter()
        .enumerate()
        .map(|(id, z)| LatentRow {
            id,
            label: tags.as_ref().map(|l| l[id].clone()),
            values: z.values,
        })
        .collect())
}
