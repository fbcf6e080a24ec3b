//! Wall-clock scaling harness: filtering time versus streamline count with
//! a fixed reference, plus a least-squares linearity fit.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{filter, ReferenceSet, Threshold};
use crate::nn::linalg::Scalar;
use crate::nn::AutoencoderModel;
use crate::streamline::Tractogram;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePoint {
    pub count: usize,
    pub mean_s: f64,
    pub std_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub points: Vec<SizePoint>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub max_rel_residual: f64,
    pub repetitions: usize,
    pub warmed_up: bool,
    /// Sizes whose std/mean exceeded 0.15 (noisy environment warning).
    pub noisy_sizes: Vec<usize>,
}

/// Time `filter` over pre-built tractograms of strictly increasing sizes.
/// Inputs are prepared by the caller so the measurement covers filtering
/// only, never I/O or resampling. A warm-up pass runs before measurement.
pub fn run_scaling<F: Scalar>(
    model: &AutoencoderModel<F>,
    reference: &ReferenceSet,
    threshold: &Threshold,
    inputs: &[Tractogram],
    repetitions: usize,
) -> Result<BenchResult> {
    if inputs.len() < 2 {
        return Err(Error::InvalidConfig("need at least 2 sizes".into()));
    }
    if !inputs.windows(2).all(|w| w[0].len() < w[1].len()) {
        return Err(Error::InvalidConfig("sizes must be strictly increasing".into()));
    }
    if repetitions < 3 {
        return Err(Error::InvalidConfig(format!(
            "need at least 3 repetitions, got {repetitions}"
        )));
    }

    // warm caches and lazy pools before timing
    filter(model, reference, &inputs[0], threshold)?;

    let mut points = Vec::with_capacity(inputs.len());
    let mut noisy = Vec::new();
    for t in inputs {
        let mut times = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let start = Instant::now();
            let decisions = filter(model, reference, t, threshold)?;
            let dt = start.elapsed().as_secs_f64();
            debug_assert_eq!(decisions.len(), t.len());
            times.push(dt);
        }
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let var =
            times.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / times.len() as f64;
        let std = var.sqrt();
        if std / mean > 0.15 {
            noisy.push(t.len());
        }
        points.push(SizePoint { count: t.len(), mean_s: mean, std_s: std });
    }

    let (slope, intercept, r_squared) = linear_fit(&points);
    let max_rel_residual = points
        .iter()
        .map(|p| {
            let fit = slope * p.count as f64 + intercept;
            (fit - p.mean_s).abs() / p.mean_s
        })
        .fold(0.0f64, f64::max);

    Ok(BenchResult {
        points,
        slope,
        intercept,
        r_squared,
        max_rel_residual,
        repetitions,
        warmed_up: true,
        noisy_sizes: noisy,
    })
}

fn linear_fit(points: &[SizePoint]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.count as f64).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.mean_s).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for p in points {
        let dx = p.count as f64 - mean_x;
        let dy = p.mean_s - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (slope, intercept, r_squared)
}
