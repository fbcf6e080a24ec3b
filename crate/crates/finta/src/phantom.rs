//! Deterministic synthetic phantom: a flat disc of crossing fiber bundles
//! with labeled plausible streamlines plus four implausible classes (loops
//! and sharp bends, early stops in CSF, mid-trajectory truncations, invalid
//! connections between unrelated terminal regions).
//!
//! Bundle endpoints sit on a ring of terminal regions; templates (straight,
//! C-arc, S-curve, U-curve) connect diametrically opposite regions so the
//! bundles cross in the interior. A matching mask volume tags the terminal
//! discs as atlas regions, a central disc as CSF and the rest of the plate
//! as white matter, which lets the endpoint-mask baselines run without real
//! segmentations.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::{MaskVolume, Tissue};
use crate::error::{Error, Result};
use crate::streamline::{Point3, Streamline, Tractogram};

pub const LABEL_PLAUSIBLE: &str = "plausible";
pub const LABEL_IMPLAUSIBLE: &str = "implausible";
pub const GROUP_LOOP: &str = "loop";
pub const GROUP_CSF_STOP: &str = "csf_stop";
pub const GROUP_TRUNCATED: &str = "truncated";
pub const GROUP_INVALID_CONNECTION: &str = "invalid_connection";

/// PRNG identifier recorded in provenance; generation is bitwise
/// reproducible from the seed.
pub const PRNG_NAME: &str = "chacha8";

const VOXEL_MM: f64 = 3.0;
const SLAB_VOXELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub seed: u64,
    pub n_bundles: usize,
    pub streamlines_per_bundle: usize,
    pub implausible_fraction: f64,
    pub noise_sigma_mm: f64,
    pub field_of_view_mm: f64,
    /// Interior angle (degrees) above which a bend counts as "sharp"; the
    /// loop class mixes in bends steeper than this.
    pub sharp_bend_deg: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_bundles: 7,
            streamlines_per_bundle: 1119,
            implausible_fraction: 0.79,
            noise_sigma_mm: 0.5,
            field_of_view_mm: 192.0,
            sharp_bend_deg: 150.0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.implausible_fraction > 0.0 && self.implausible_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "implausible_fraction must lie strictly in (0, 1), got {}",
                self.implausible_fraction
            )));
        }
        if self.n_bundles < 2 {
            return Err(Error::InvalidConfig("need at least 2 bundles".into()));
        }
        if self.streamlines_per_bundle == 0 {
            return Err(Error::InvalidConfig("streamlines_per_bundle must be positive".into()));
        }
        if self.noise_sigma_mm < 0.0 || self.field_of_view_mm <= 0.0 {
            return Err(Error::InvalidConfig("bad noise sigma or field of view".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomProvenance {
    pub config: PhantomConfig,
    pub prng: String,
    pub plausible_count: usize,
    pub implausible_count: usize,
    pub subclass_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct PhantomOutput {
    pub tractogram: Tractogram,
    pub mask: MaskVolume,
    pub provenance: PhantomProvenance,
}

/// Ring-and-template geometry shared by generation and mask construction.
struct Layout {
    center: Point3,
    terminal_radius: f64,
    csf_radius: f64,
    anchors: Vec<Point3>,
    /// Ground-truth terminal-slot pairs, one per bundle.
    pairs: Vec<(usize, usize)>,
}

impl Layout {
    fn new(cfg: &PhantomConfig) -> Self {
        let fov = cfg.field_of_view_mm;
        let mid_z = SLAB_VOXELS as f64 * VOXEL_MM / 2.0;
        let center = Point3::new(fov / 2.0, fov / 2.0, mid_z);
        let ring_radius = 0.38 * fov;
        let slots = 2 * cfg.n_bundles;
        let anchors = (0..slots)
            .map(|s| {
                let a = std::f64::consts::TAU * (s as f64 + 0.5) / slots as f64;
                Point3::new(
                    center.x + ring_radius * a.cos(),
                    center.y + ring_radius * a.sin(),
                    mid_z,
                )
            })
            .collect();
        let pairs = (0..cfg.n_bundles).map(|k| (k, k + cfg.n_bundles)).collect();
        Self {
            center,
            terminal_radius: 9.0 * (fov / 192.0).max(0.5),
            csf_radius: 12.0 * (fov / 192.0).max(0.5),
            anchors,
            pairs,
        }
    }

    fn in_plane_distance(a: &Point3, b: &Point3) -> f64 {
        ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
    }

    fn mask(&self, cfg: &PhantomConfig) -> MaskVolume {
        let n_xy = (cfg.field_of_view_mm / VOXEL_MM).ceil() as usize;
        let mut mask = MaskVolume::new(
            [n_xy, n_xy, SLAB_VOXELS],
            [VOXEL_MM; 3],
            Point3::ZERO,
        )
        .expect("valid mask dims");
        let plate_radius = cfg.field_of_view_mm / 2.0 - VOXEL_MM;
        for iz in 0..SLAB_VOXELS {
            for iy in 0..n_xy {
                for ix in 0..n_xy {
                    let c = Point3::new(
                        (ix as f64 + 0.5) * VOXEL_MM,
                        (iy as f64 + 0.5) * VOXEL_MM,
                        (iz as f64 + 0.5) * VOXEL_MM,
                    );
                    let d_center = Self::in_plane_distance(&c, &self.center);
                    let tissue = if d_center > plate_radius {
                        Tissue::Background
                    } else if d_center <= self.csf_radius {
                        Tissue::Csf
                    } else {
                        let slot = self
                            .anchors
                            .iter()
                            .position(|a| Self::in_plane_distance(&c, a) <= self.terminal_radius);
                        match slot {
                            Some(s) => Tissue::Atlas(s as u8),
                            None => Tissue::WhiteMatter,
                        }
                    };
                    mask.set(ix, iy, iz, tissue);
                }
            }
        }
        mask
    }
}

fn quantize(p: Point3) -> Point3 {
    Point3::new(p.x as f32 as f64, p.y as f32 as f64, p.z as f32 as f64)
}

fn quad_bezier(p0: &Point3, c: &Point3, p1: &Point3, t: f64) -> Point3 {
    let u = 1.0 - t;
    p0.scale(u * u).add(&c.scale(2.0 * u * t)).add(&p1.scale(t * t))
}

fn cubic_bezier(p0: &Point3, c1: &Point3, c2: &Point3, p1: &Point3, t: f64) -> Point3 {
    let u = 1.0 - t;
    p0.scale(u * u * u)
        .add(&c1.scale(3.0 * u * u * t))
        .add(&c2.scale(3.0 * u * t * t))
        .add(&p1.scale(t * t * t))
}

fn polyline_length(pts: &[Point3]) -> f64 {
    pts.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// Cut a polyline at exactly `fraction` of its arc length.
fn truncate_by_fraction(pts: &[Point3], fraction: f64) -> Vec<Point3> {
    let total = polyline_length(pts);
    let target = total * fraction;
    let mut out = vec![pts[0]];
    let mut acc = 0.0;
    for w in pts.windows(2) {
        let seg = w[0].distance(&w[1]);
        if acc + seg >= target {
            let t = if seg > 0.0 { (target - acc) / seg } else { 0.0 };
            out.push(w[0].add(&w[1].sub(&w[0]).scale(t)));
            break;
        }
        acc += seg;
        out.push(w[1]);
    }
    out
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream layout simple.
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn clamped_gauss(rng: &mut ChaCha8Rng, sigma: f64, bound: f64) -> f64 {
    (gauss(rng) * sigma).clamp(-bound, bound)
}

/// Smooth Gaussian jitter: a low-frequency random field with pointwise
/// standard deviation `sigma`, so noisy streamlines stay locally smooth.
struct SmoothJitter {
    amps: [[f64; 4]; 3],
    phases: [[f64; 4]; 3],
    sigma: f64,
}

impl SmoothJitter {
    fn draw(rng: &mut ChaCha8Rng, sigma: f64) -> Self {
        let mut amps = [[0.0; 4]; 3];
        let mut phases = [[0.0; 4]; 3];
        for axis in 0..3 {
            for k in 0..4 {
                amps[axis][k] = gauss(rng);
                phases[axis][k] = rng.gen::<f64>() * std::f64::consts::TAU;
            }
        }
        Self { amps, phases, sigma }
    }

    fn offset(&self, axis: usize, t: f64) -> f64 {
        let mut v = 0.0;
        for k in 0..4 {
            let w = std::f64::consts::PI * (k + 1) as f64;
            v += self.amps[axis][k] * (w * t + self.phases[axis][k]).sin();
        }
        // sum of 4 unit-variance harmonics has variance 2
        self.sigma * v / 2.0f64.sqrt()
    }

    fn apply(&self, pts: &mut [Point3]) {
        let n = pts.len();
        for (i, p) in pts.iter_mut().enumerate() {
            let t = i as f64 / (n - 1) as f64;
            p.x += self.offset(0, t);
            p.y += self.offset(1, t);
            p.z += self.offset(2, t) * 0.3;
        }
    }
}

struct Generator<'a> {
    cfg: &'a PhantomConfig,
    layout: Layout,
    rng: ChaCha8Rng,
}

impl<'a> Generator<'a> {
    fn new(cfg: &'a PhantomConfig) -> Self {
        Self { cfg, layout: Layout::new(cfg), rng: ChaCha8Rng::seed_from_u64(cfg.seed) }
    }

    fn vertex_count(length: f64) -> usize {
        ((length / 2.0).round() as usize).clamp(24, 128)
    }

    /// Template centerline for bundle `k`, sampled at `n` parameter steps.
    fn bundle_curve(&self, k: usize, n: usize) -> Vec<Point3> {
        let (sa, sb) = self.layout.pairs[k];
        let a = self.layout.anchors[sa];
        let b = self.layout.anchors[sb];
        let ab = b.sub(&a);
        let perp = Point3::new(-ab.y, ab.x, 0.0).scale(1.0 / ab.norm().max(1e-12));
        let mid = a.add(&ab.scale(0.5));
        let span = ab.norm();
        let sample = |f: &dyn Fn(f64) -> Point3| (0..n).map(|i| f(i as f64 / (n - 1) as f64)).collect();
        match k % 4 {
            0 => sample(&|t| a.add(&ab.scale(t))),
            1 => {
                let c = mid.add(&perp.scale(0.30 * span));
                sample(&|t| quad_bezier(&a, &c, &b, t))
            }
            2 => {
                let c1 = a.add(&ab.scale(0.25)).add(&perp.scale(0.35 * span));
                let c2 = a.add(&ab.scale(0.75)).add(&perp.scale(-0.35 * span));
                sample(&|t| cubic_bezier(&a, &c1, &c2, &b, t))
            }
            _ => {
                let c1 = a.add(&ab.scale(0.2)).add(&perp.scale(0.42 * span));
                let c2 = a.add(&ab.scale(0.8)).add(&perp.scale(0.42 * span));
                sample(&|t| cubic_bezier(&a, &c1, &c2, &b, t))
            }
        }
    }

    /// A full plausible streamline of bundle `k` (pre-quantization).
    fn plausible_raw(&mut self, k: usize) -> Vec<Point3> {
        let coarse = self.bundle_curve(k, 48);
        let n = Self::vertex_count(polyline_length(&coarse));
        let mut pts = self.bundle_curve(k, n);
        let (sa, sb) = self.layout.pairs[k];
        let ab = self.layout.anchors[sb].sub(&self.layout.anchors[sa]);
        let perp = Point3::new(-ab.y, ab.x, 0.0).scale(1.0 / ab.norm().max(1e-12));
        let lateral = clamped_gauss(&mut self.rng, 2.2, 4.5);
        let dz = clamped_gauss(&mut self.rng, 1.0, 2.2);
        for p in pts.iter_mut() {
            *p = p.add(&perp.scale(lateral));
            p.z += dz;
        }
        SmoothJitter::draw(&mut self.rng, self.cfg.noise_sigma_mm).apply(&mut pts);
        pts
    }

    fn plausible(&mut self, k: usize) -> Streamline {
        let pts = self.plausible_raw(k).into_iter().map(quantize).collect();
        Streamline::new(pts).expect("generated plausible streamline is valid")
    }

    /// Spiral with more than one full turn; every third one also gets a
    /// sharp hairpin exit so the class covers bends steeper than
    /// `sharp_bend_deg`.
    fn looped(&mut self, index: usize) -> Streamline {
        let fov = self.cfg.field_of_view_mm;
        let dist = (0.09 + 0.23 * self.rng.gen::<f64>()) * fov;
        let ang = self.rng.gen::<f64>() * std::f64::consts::TAU;
        let c = Point3::new(
            self.layout.center.x + dist * ang.cos(),
            self.layout.center.y + dist * ang.sin(),
            self.layout.center.z + clamped_gauss(&mut self.rng, 1.0, 2.2),
        );
        let rho = 6.0 + 8.0 * self.rng.gen::<f64>();
        let turns = 1.3 + 0.7 * self.rng.gen::<f64>();
        let theta0 = self.rng.gen::<f64>() * std::f64::consts::TAU;
        let direction = if self.rng.gen::<bool>() { 1.0 } else { -1.0 };
        let length_estimate = std::f64::consts::TAU * rho * turns;
        let n = Self::vertex_count(length_estimate);
        let mut pts: Vec<Point3> = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                let theta = theta0 + direction * std::f64::consts::TAU * turns * t;
                let r = rho * (0.8 + 0.4 * t);
                Point3::new(c.x + r * theta.cos(), c.y + r * theta.sin(), c.z)
            })
            .collect();
        if index % 3 == 0 {
            // hairpin: double back along the exit direction, bending by more
            // than the configured sharp-bend angle
            let last = *pts.last().unwrap();
            let prev = pts[pts.len() - 2];
            let dir = last.sub(&prev);
            let norm = dir.norm().max(1e-9);
            let unit = dir.scale(1.0 / norm);
            let bend = (180.0f64.min(self.cfg.sharp_bend_deg + 15.0)).to_radians();
            let (sin, cos) = bend.sin_cos();
            let back = Point3::new(
                unit.x * cos - unit.y * sin,
                unit.x * sin + unit.y * cos,
                0.0,
            );
            for step in 1..=5 {
                pts.push(last.add(&back.scale(2.0 * step as f64)));
            }
        }
        SmoothJitter::draw(&mut self.rng, self.cfg.noise_sigma_mm).apply(&mut pts);
        Streamline::new(pts.into_iter().map(quantize).collect())
            .expect("generated loop streamline is valid")
    }

    /// Starts at a terminal region and stops inside the central CSF disc.
    fn csf_stop(&mut self) -> Streamline {
        let slot = self.rng.gen_range(0..self.layout.anchors.len());
        let a = self.layout.anchors[slot];
        let toward = self.layout.center.sub(&a);
        let perp = Point3::new(-toward.y, toward.x, 0.0).scale(1.0 / toward.norm().max(1e-12));
        let start = a
            .add(&perp.scale(clamped_gauss(&mut self.rng, 2.0, 4.0)))
            .add(&Point3::new(0.0, 0.0, clamped_gauss(&mut self.rng, 1.0, 2.2)));
        let stop_r = (self.layout.csf_radius - 4.0).max(1.0) * self.rng.gen::<f64>().sqrt();
        let stop_a = self.rng.gen::<f64>() * std::f64::consts::TAU;
        let stop = Point3::new(
            self.layout.center.x + stop_r * stop_a.cos(),
            self.layout.center.y + stop_r * stop_a.sin(),
            start.z,
        );
        let mid = start.add(&stop.sub(&start).scale(0.5));
        let c = mid.add(&perp.scale(clamped_gauss(&mut self.rng, 8.0, 20.0)));
        let n = Self::vertex_count(start.distance(&stop) * 1.2);
        let mut pts: Vec<Point3> = (0..n)
            .map(|i| quad_bezier(&start, &c, &stop, i as f64 / (n - 1) as f64))
            .collect();
        SmoothJitter::draw(&mut self.rng, self.cfg.noise_sigma_mm * 0.6).apply(&mut pts);
        // keep the stop endpoint strictly inside the CSF disc
        let last = pts.len() - 1;
        pts[last] = stop;
        Streamline::new(pts.into_iter().map(quantize).collect())
            .expect("generated csf-stop streamline is valid")
    }

    /// Random prefix (20 to 65 percent by arc length) of a plausible path.
    fn truncated(&mut self) -> Streamline {
        let k = self.rng.gen_range(0..self.cfg.n_bundles);
        let full = self.plausible_raw(k);
        let fraction = 0.2 + 0.45 * self.rng.gen::<f64>();
        let pts = truncate_by_fraction(&full, fraction);
        Streamline::new(pts.into_iter().map(quantize).collect())
            .expect("generated truncated streamline is valid")
    }

    /// Smooth path between two terminal regions that no bundle connects.
    fn invalid_connection(&mut self) -> Streamline {
        let slots = self.layout.anchors.len();
        let (sa, sb) = loop {
            let i = self.rng.gen_range(0..slots);
            let j = self.rng.gen_range(0..slots);
            if i == j {
                continue;
            }
            let key = (i.min(j), i.max(j));
            if !self.layout.pairs.iter().any(|&(a, b)| (a.min(b), a.max(b)) == key) {
                break (i, j);
            }
        };
        let a = self.layout.anchors[sa];
        let b = self.layout.anchors[sb];
        let ab = b.sub(&a);
        let perp = Point3::new(-ab.y, ab.x, 0.0).scale(1.0 / ab.norm().max(1e-12));
        let lateral = clamped_gauss(&mut self.rng, 2.0, 4.0);
        let dz = clamped_gauss(&mut self.rng, 1.0, 2.2);
        let bow = (self.rng.gen::<f64>() - 0.5) * 0.6 * ab.norm();
        let c = a.add(&ab.scale(0.5)).add(&perp.scale(bow));
        let coarse: Vec<Point3> =
            (0..32).map(|i| quad_bezier(&a, &c, &b, i as f64 / 31.0)).collect();
        let n = Self::vertex_count(polyline_length(&coarse));
        let mut pts: Vec<Point3> = (0..n)
            .map(|i| quad_bezier(&a, &c, &b, i as f64 / (n - 1) as f64))
            .collect();
        for p in pts.iter_mut() {
            *p = p.add(&perp.scale(lateral));
            p.z += dz;
        }
        SmoothJitter::draw(&mut self.rng, self.cfg.noise_sigma_mm).apply(&mut pts);
        Streamline::new(pts.into_iter().map(quantize).collect())
            .expect("generated invalid-connection streamline is valid")
    }
}

/// Generate the labeled phantom tractogram and its mask volume. Identical
/// configurations produce bitwise-identical outputs.
pub fn generate(config: &PhantomConfig) -> Result<PhantomOutput> {
    config.validate()?;
    let mut gen = Generator::new(config);

    let n_plausible = config.n_bundles * config.streamlines_per_bundle;
    let f = config.implausible_fraction;
    let n_implausible = ((n_plausible as f64) * f / (1.0 - f)).round() as usize;
    let base = n_implausible / 4;
    let remainder = n_implausible - 4 * base;
    let class_counts = [
        (GROUP_LOOP, base + usize::from(remainder > 0)),
        (GROUP_CSF_STOP, base + usize::from(remainder > 1)),
        (GROUP_TRUNCATED, base + usize::from(remainder > 2)),
        (GROUP_INVALID_CONNECTION, base),
    ];

    let total = n_plausible + n_implausible;
    let mut streamlines = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut groups = Vec::with_capacity(total);

    for k in 0..config.n_bundles {
        for _ in 0..config.streamlines_per_bundle {
            streamlines.push(gen.plausible(k));
            labels.push(LABEL_PLAUSIBLE.to_string());
            groups.push(format!("bundle_{k}"));
        }
    }
    for (class, count) in class_counts {
        for i in 0..count {
            let s = match class {
                GROUP_LOOP => gen.looped(i),
                GROUP_CSF_STOP => gen.csf_stop(),
                GROUP_TRUNCATED => gen.truncated(),
                _ => gen.invalid_connection(),
            };
            streamlines.push(s);
            labels.push(LABEL_IMPLAUSIBLE.to_string());
            groups.push(class.to_string());
        }
    }

    let tractogram = Tractogram::with_labels(streamlines, labels, groups)?;
    let mask = gen.layout.mask(config);
    let provenance = PhantomProvenance {
        config: config.clone(),
        prng: PRNG_NAME.to_string(),
        plausible_count: n_plausible,
        implausible_count: n_implausible,
        subclass_counts: class_counts
            .iter()
            .map(|(name, count)| (name.to_string(), *count))
            .collect(),
    };
    Ok(PhantomOutput { tractogram, mask, provenance })
}

/// Random label-stratified partition; the union of the parts equals the
/// input and the draw is reproducible from the seed.
pub fn split(t: &Tractogram, train_fraction: f64, seed: u64) -> Result<(Tractogram, Tractogram)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must lie strictly in (0, 1), got {train_fraction}"
        )));
    }
    let fallback = vec![String::new(); t.len()];
    let labels = t.labels.as_ref().unwrap_or(&fallback);

    let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        strata.entry(l.as_str()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (label, mut idx) in strata {
        if idx.len() < 2 {
            return Err(Error::StratificationImpossible(format!(
                "label class {label:?} has {} member(s)",
                idx.len()
            )));
        }
        use rand::seq::SliceRandom;
        idx.shuffle(&mut rng);
        let n_train = ((idx.len() as f64) * train_fraction)
            .round()
            .clamp(1.0, (idx.len() - 1) as f64) as usize;
        train_idx.extend_from_slice(&idx[..n_train]);
        test_idx.extend_from_slice(&idx[n_train..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((t.select(&train_idx), t.select(&test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> PhantomConfig {
        PhantomConfig {
            seed: 1,
            streamlines_per_bundle: 30,
            ..PhantomConfig::default()
        }
    }

    #[test]
    fn deterministic_generation() {
        let cfg = small_config();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.tractogram, b.tractogram);
        assert_eq!(a.mask, b.mask);
    }

    #[test]
    fn counts_and_ratio() {
        let cfg = small_config();
        let out = generate(&cfg).unwrap();
        let labels = out.tractogram.labels.as_ref().unwrap();
        let plaus = labels.iter().filter(|l| *l == LABEL_PLAUSIBLE).count();
        let implaus = labels.iter().filter(|l| *l == LABEL_IMPLAUSIBLE).count();
        assert_eq!(plaus, 7 * 30);
        let ratio = implaus as f64 / (plaus + implaus) as f64;
        assert!((ratio - 0.79).abs() < 0.01, "ratio {ratio}");
        // label counts match the fraction within one streamline
        let expect = (plaus + implaus) as f64 * cfg.implausible_fraction;
        assert!((implaus as f64 - expect).abs() <= 1.0);
    }

    #[test]
    fn loop_subclass_winds_over_360() {
        let out = generate(&small_config()).unwrap();
        let groups = out.tractogram.group_ids.as_ref().unwrap();
        let mut seen = 0;
        for (s, g) in out.tractogram.streamlines.iter().zip(groups) {
            if g == GROUP_LOOP {
                seen += 1;
                assert!(
                    s.total_winding_deg() > 360.0,
                    "loop winding {}",
                    s.total_winding_deg()
                );
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn plausibles_stay_below_loop_cutoff_and_length_bounds() {
        let out = generate(&small_config()).unwrap();
        let labels = out.tractogram.labels.as_ref().unwrap();
        for (s, l) in out.tractogram.streamlines.iter().zip(labels) {
            if l == LABEL_PLAUSIBLE {
                assert!(s.total_winding_deg() < 330.0, "winding {}", s.total_winding_deg());
                let len = s.length_mm();
                assert!((20.0..=200.0).contains(&len), "length {len}");
            }
        }
    }

    #[test]
    fn truncated_shorter_than_seventy_percent_of_bundle() {
        let out = generate(&small_config()).unwrap();
        let labels = out.tractogram.group_ids.as_ref().unwrap();
        let max_plausible = out
            .tractogram
            .streamlines
            .iter()
            .zip(labels)
            .filter(|(_, g)| g.starts_with("bundle_"))
            .map(|(s, _)| s.length_mm())
            .fold(0.0f64, f64::max);
        for (s, g) in out.tractogram.streamlines.iter().zip(labels) {
            if g == GROUP_TRUNCATED {
                assert!(s.length_mm() < 0.7 * max_plausible);
            }
        }
    }

    #[test]
    fn csf_stop_ends_in_csf_voxel() {
        let out = generate(&small_config()).unwrap();
        let groups = out.tractogram.group_ids.as_ref().unwrap();
        for (s, g) in out.tractogram.streamlines.iter().zip(groups) {
            if g == GROUP_CSF_STOP {
                assert_eq!(out.mask.tissue_at(s.last()), Tissue::Csf);
            }
        }
    }

    #[test]
    fn plausible_endpoints_in_atlas_regions() {
        let out = generate(&small_config()).unwrap();
        let labels = out.tractogram.labels.as_ref().unwrap();
        for (s, l) in out.tractogram.streamlines.iter().zip(labels) {
            if l == LABEL_PLAUSIBLE {
                assert!(matches!(out.mask.tissue_at(s.first()), Tissue::Atlas(_)));
                assert!(matches!(out.mask.tissue_at(s.last()), Tissue::Atlas(_)));
            }
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let cfg = small_config();
        let out = generate(&cfg).unwrap();
        let (train, test) = split(&out.tractogram, 0.8, 9).unwrap();
        assert_eq!(train.len() + test.len(), out.tractogram.len());
        // per-stratum 80/20 within one streamline
        for label in [LABEL_PLAUSIBLE, LABEL_IMPLAUSIBLE] {
            let count = |t: &Tractogram| {
                t.labels.as_ref().unwrap().iter().filter(|l| *l == label).count() as f64
            };
            let total = count(&out.tractogram);
            assert!((count(&train) - 0.8 * total).abs() <= 1.0);
            // proportions preserved within 2%
            let frac_whole = total / out.tractogram.len() as f64;
            let frac_train = count(&train) / train.len() as f64;
            assert!((frac_whole - frac_train).abs() < 0.02);
        }
        let (train2, test2) = split(&out.tractogram, 0.8, 9).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        let (train3, _) = split(&out.tractogram, 0.8, 10).unwrap();
        assert_ne!(train, train3);
    }

    #[test]
    fn split_rejects_tiny_class() {
        let s = Streamline::new(vec![Point3::ZERO, Point3::new(1.0, 0.0, 0.0)]).unwrap();
        let t = Tractogram::with_labels(
            vec![s.clone(), s.clone(), s],
            vec!["a".into(), "a".into(), "b".into()],
            vec![String::new(), String::new(), String::new()],
        )
        .unwrap();
        assert!(matches!(split(&t, 0.8, 0), Err(Error::StratificationImpossible(_))));
    }

    #[test]
    fn rejects_bad_fraction() {
        let cfg = PhantomConfig { implausible_fraction: 1.0, ..small_config() };
        assert!(matches!(generate(&cfg), Err(Error::InvalidConfig(_))));
    }
}
