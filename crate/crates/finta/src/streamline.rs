//! Streamline geometry primitives.
//!
//! A streamline is an ordered polyline of 3D points in millimetres. All
//! operations here are pure functions over immutable inputs and are safe to
//! call from any number of worker threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in 3D space, in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ZERO: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn add(&self, o: &Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(&self, o: &Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn scale(&self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(&self, o: &Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(&self, o: &Point3) -> f64 {
        self.sub(o).norm()
    }

    fn lerp(&self, o: &Point3, t: f64) -> Point3 {
        Point3::new(
            self.x + (o.x - self.x) * t,
            self.y + (o.y - self.y) * t,
            self.z + (o.z - self.z) * t,
        )
    }
}

/// An ordered sequence of at least two finite points with positive total
/// arc length. Degenerate inputs are rejected at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Streamline {
    points: Vec<Point3>,
}

impl Streamline {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidStreamline(format!(
                "needs at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidStreamline(format!(
                "non-finite coordinate at point {i}"
            )));
        }
        let s = Self { points };
        if s.length_mm() <= 0.0 {
            return Err(Error::InvalidStreamline(
                "zero total arc length".to_string(),
            ));
        }
        Ok(s)
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> &Point3 {
        &self.points[0]
    }

    pub fn last(&self) -> &Point3 {
        &self.points[self.points.len() - 1]
    }

    /// Same polyline traversed in the opposite direction.
    pub fn reversed(&self) -> Streamline {
        let mut points = self.points.clone();
        points.reverse();
        Streamline { points }
    }

    /// Total arc length: the sum of consecutive point distances.
    pub fn length_mm(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[0].distance(&w[1]))
            .sum()
    }

    /// Resample to exactly `n` points equispaced in arc length along the
    /// piecewise-linear curve. Both endpoints are preserved exactly.
    pub fn resample(&self, n: usize) -> Result<Streamline> {
        if n < 2 {
            return Err(Error::InvalidStreamline(format!(
                "resample target must be >= 2, got {n}"
            )));
        }
        let pts = &self.points;
        let mut cum = Vec::with_capacity(pts.len());
        cum.push(0.0f64);
        for w in pts.windows(2) {
            let last = *cum.last().unwrap();
            cum.push(last + w[0].distance(&w[1]));
        }
        let total = *cum.last().unwrap();
        // Positive total length is a constructor invariant.
        debug_assert!(total > 0.0);

        let mut out = Vec::with_capacity(n);
        out.push(pts[0]);
        let mut seg = 0usize;
        for i in 1..n - 1 {
            let target = total * (i as f64) / ((n - 1) as f64);
            while seg + 2 < cum.len() && cum[seg + 1] <= target {
                seg += 1;
            }
            let span = cum[seg + 1] - cum[seg];
            let t = if span > 0.0 { (target - cum[seg]) / span } else { 0.0 };
            out.push(pts[seg].lerp(&pts[seg + 1], t));
        }
        out.push(pts[pts.len() - 1]);
        Ok(Streamline { points: out })
    }

    /// Sum over interior vertices of the unsigned turning angle, in degrees.
    /// Vertices adjacent to a zero-length segment contribute nothing.
    pub fn total_winding_deg(&self) -> f64 {
        let pts = &self.points;
        let mut sum = 0.0f64;
        for i in 1..pts.len().saturating_sub(1) {
            let u = pts[i].sub(&pts[i - 1]);
            let v = pts[i + 1].sub(&pts[i]);
            let nu = u.norm();
            let nv = v.norm();
            if nu == 0.0 || nv == 0.0 {
                continue;
            }
            sum += u.cross(&v).norm().atan2(u.dot(&v));
        }
        sum.to_degrees()
    }

    /// Flip-invariant mean-of-pointwise-distances metric between two
    /// streamlines resampled to the same point count.
    pub fn mdf_distance(&self, other: &Streamline) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::ShapeMismatch(format!(
                "mdf requires equal point counts, got {} and {}",
                self.len(),
                other.len()
            )));
        }
        let n = self.len();
        let mut direct = 0.0f64;
        let mut flipped = 0.0f64;
        for i in 0..n {
            direct += self.points[i].distance(&other.points[i]);
            flipped += self.points[i].distance(&other.points[n - 1 - i]);
        }
        Ok(direct.min(flipped) / n as f64)
    }
}

/// A collection of streamlines with optional per-streamline class labels
/// and group identifiers (bundle or implausible-subclass tags).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tractogram {
    pub streamlines: Vec<Streamline>,
    pub labels: Option<Vec<String>>,
    pub group_ids: Option<Vec<String>>,
}

impl Tractogram {
    pub fn new(streamlines: Vec<Streamline>) -> Self {
        Self { streamlines, labels: None, group_ids: None }
    }

    pub fn with_labels(
        streamlines: Vec<Streamline>,
        labels: Vec<String>,
        group_ids: Vec<String>,
    ) -> Result<Self> {
        if labels.len() != streamlines.len() || group_ids.len() != streamlines.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} streamlines but {} labels / {} group ids",
                streamlines.len(),
                labels.len(),
                group_ids.len()
            )));
        }
        Ok(Self { streamlines, labels: Some(labels), group_ids: Some(group_ids) })
    }

    pub fn len(&self) -> usize {
        self.streamlines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streamlines.is_empty()
    }

    /// Resample every streamline to `n` points.
    pub fn resample(&self, n: usize) -> Result<Tractogram> {
        let streamlines = self
            .streamlines
            .iter()
            .map(|s| s.resample(n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Tractogram {
            streamlines,
            labels: self.labels.clone(),
            group_ids: self.group_ids.clone(),
        })
    }

    /// Orient every streamline so that the endpoint nearer to `anchor`
    /// comes first. Ties keep the original orientation.
    pub fn align_endpoints(&self, anchor: &Point3) -> Tractogram {
        let streamlines = self
            .streamlines
            .iter()
            .map(|s| {
                if s.last().distance(anchor) < s.first().distance(anchor) {
                    s.reversed()
                } else {
                    s.clone()
                }
            })
            .collect();
        Tractogram {
            streamlines,
            labels: self.labels.clone(),
            group_ids: self.group_ids.clone(),
        }
    }

    /// Centroid of all first endpoints; the default alignment anchor for a
    /// reference dataset.
    pub fn first_endpoint_centroid(&self) -> Point3 {
        let n = self.streamlines.len().max(1) as f64;
        let mut c = Point3::ZERO;
        for s in &self.streamlines {
            c = c.add(s.first());
        }
        c.scale(1.0 / n)
    }

    /// Sub-tractogram addressed by index, preserving labels and groups.
    pub fn select(&self, indices: &[usize]) -> Tractogram {
        Tractogram {
            streamlines: indices.iter().map(|&i| self.streamlines[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i].clone()).collect()),
            group_ids: self
                .group_ids
                .as_ref()
                .map(|g| indices.iter().map(|&i| g[i].clone()).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(points: &[(f64, f64, f64)]) -> Streamline {
        Streamline::new(points.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect())
            .unwrap()
    }

    #[test]
    fn resample_straight_segment() {
        let s = line(&[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)]);
        let r = s.resample(3).unwrap();
        assert_eq!(r.points()[0], Point3::new(0.0, 0.0, 0.0));
        assert_eq!(r.points()[1], Point3::new(0.5, 0.0, 0.0));
        assert_eq!(r.points()[2], Point3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn resample_identity_on_equispaced() {
        let s = line(&[
            (0.0, 0.0, 0.0),
            (1.0, 0.0, 0.0),
            (2.0, 0.0, 0.0),
            (3.0, 0.0, 0.0),
        ]);
        let r = s.resample(4).unwrap();
        for (a, b) in s.points().iter().zip(r.points()) {
            assert!((a.x - b.x).abs() < 1e-9);
            assert!((a.y - b.y).abs() < 1e-9);
            assert!((a.z - b.z).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_preserves_arc_length() {
        // Independent oracle: plain per-segment summation of the output.
        let mut rng_state = 12345u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng_state >> 33) as f64) / (u32::MAX as f64) * 40.0 - 20.0
        };
        let pts: Vec<Point3> = (0..10)
            .map(|i| Point3::new(i as f64 * 10.0 + next(), next(), next()))
            .collect();
        let s = Streamline::new(pts).unwrap();
        let r = s.resample(256).unwrap();
        let oracle = |s: &Streamline| -> f64 {
            let mut acc = 0.0;
            for w in s.points().windows(2) {
                acc += ((w[1].x - w[0].x).powi(2)
                    + (w[1].y - w[0].y).powi(2)
                    + (w[1].z - w[0].z).powi(2))
                .sqrt();
            }
            acc
        };
        let a = oracle(&s);
        let b = oracle(&r);
        assert!((a - b).abs() / a < 0.005, "length drift {a} vs {b}");
    }

    #[test]
    fn resample_rejects_degenerate() {
        assert!(Streamline::new(vec![Point3::new(0.0, 0.0, 0.0)]).is_err());
        assert!(Streamline::new(vec![
            Point3::new(1.0, 2.0, 3.0),
            Point3::new(1.0, 2.0, 3.0)
        ])
        .is_err());
        assert!(Streamline::new(vec![
            Point3::new(0.0, 0.0, f64::NAN),
            Point3::new(1.0, 0.0, 0.0)
        ])
        .is_err());
    }

    #[test]
    fn length_of_square_loop() {
        let s = line(&[
            (0.0, 0.0, 0.0),
            (1.0, 0.0, 0.0),
            (1.0, 1.0, 0.0),
            (0.0, 1.0, 0.0),
            (0.0, 0.0, 0.0),
        ]);
        assert!((s.length_mm() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn length_two_points() {
        let s = line(&[(0.0, 0.0, 0.0), (3.0, 4.0, 0.0)]);
        assert!((s.length_mm() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn winding_collinear_is_zero() {
        let pts: Vec<(f64, f64, f64)> = (0..10).map(|i| (i as f64, 0.0, 0.0)).collect();
        assert_eq!(line(&pts).total_winding_deg(), 0.0);
    }

    #[test]
    fn winding_right_angle() {
        let s = line(&[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (1.0, 1.0, 0.0)]);
        assert!((s.total_winding_deg() - 90.0).abs() < 1e-6);
    }

    #[test]
    fn winding_full_circle() {
        // Analytic oracle: a closed polygon turns 360 degrees in total, so
        // sample the circle one full revolution plus one extra vertex to
        // close the turning angle at the seam.
        let n = 64;
        let pts: Vec<(f64, f64, f64)> = (0..=n + 1)
            .map(|i| {
                let a = std::f64::consts::TAU * (i as f64) / (n as f64);
                (a.cos(), a.sin(), 0.0)
            })
            .collect();
        let w = line(&pts).total_winding_deg();
        assert!((w - 360.0).abs() < 1.0, "winding {w}");
    }

    #[test]
    fn winding_rigid_invariance() {
        let s = line(&[
            (0.0, 0.0, 0.0),
            (1.0, 0.2, 0.1),
            (2.0, -0.3, 0.4),
            (3.0, 0.5, -0.2),
            (4.1, 0.0, 0.0),
        ]);
        let w0 = s.total_winding_deg();
        // rotate about z by 30 degrees then translate
        let (sin, cos) = 30.0f64.to_radians().sin_cos();
        let moved: Vec<(f64, f64, f64)> = s
            .points()
            .iter()
            .map(|p| (p.x * cos - p.y * sin + 7.0, p.x * sin + p.y * cos - 3.0, p.z + 11.0))
            .collect();
        let w1 = line(&moved).total_winding_deg();
        assert!((w0 - w1).abs() / w0 < 1e-6);
    }

    #[test]
    fn mdf_basics() {
        let a = line(&[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (2.0, 0.0, 0.0)]);
        assert_eq!(a.mdf_distance(&a).unwrap(), 0.0);
        assert_eq!(a.mdf_distance(&a.reversed()).unwrap(), 0.0);
        let b = line(&[(0.0, 1.0, 0.0), (1.0, 1.0, 0.0), (2.0, 1.0, 0.0)]);
        assert!((a.mdf_distance(&b).unwrap() - 1.0).abs() < 1e-12);
        let c = line(&[(0.0, 0.0, 0.0), (2.0, 0.0, 0.0)]);
        assert!(a.mdf_distance(&c).is_err());
    }

    #[test]
    fn align_endpoints_nearest_first() {
        let t = Tractogram::new(vec![line(&[(10.0, 0.0, 0.0), (0.0, 0.0, 0.0)])]);
        let aligned = t.align_endpoints(&Point3::ZERO);
        assert_eq!(aligned.streamlines[0].first(), &Point3::ZERO);
        let again = aligned.align_endpoints(&Point3::ZERO);
        assert_eq!(again, aligned);
    }

    proptest! {
        #[test]
        fn resample_matches_walk_oracle(
            raw in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0), 2..20),
            n in 2usize..64,
        ) {
            // Oracle: for each target arc position, walk the polyline from
            // the start accumulating segment lengths (O(n * segments)).
            let pts: Vec<Point3> = raw.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            if let Ok(s) = Streamline::new(pts) {
                let out = s.resample(n).unwrap();
                prop_assert_eq!(out.len(), n);
                prop_assert_eq!(out.points()[0], *s.first());
                prop_assert_eq!(out.points()[n - 1], *s.last());
                let total = s.length_mm();
                for (j, got) in out.points().iter().enumerate().skip(1).take(n - 2) {
                    let target = total * j as f64 / (n - 1) as f64;
                    let mut acc = 0.0f64;
                    let mut expect = *s.last();
                    for w in s.points().windows(2) {
                        let seg = w[0].distance(&w[1]);
                        if acc + seg >= target && seg > 0.0 {
                            let t = (target - acc) / seg;
                            expect = w[0].add(&w[1].sub(&w[0]).scale(t));
                            break;
                        }
                        acc += seg;
                    }
                    prop_assert!((got.x - expect.x).abs() < 1e-9);
                    prop_assert!((got.y - expect.y).abs() < 1e-9);
                    prop_assert!((got.z - expect.z).abs() < 1e-9);
                }
                // Re-resampling an equispaced polyline is the identity;
                // its points already sit at the target arc positions.
                let again = out.resample(n).unwrap();
                let spacing = total / (n - 1) as f64;
                let chord_ok = out
                    .points()
                    .windows(2)
                    .all(|w| (w[0].distance(&w[1]) - spacing).abs() < 1e-9 * total.max(1.0));
                if chord_ok {
                    for (a, b) in out.points().iter().zip(again.points()) {
                        prop_assert!((a.x - b.x).abs() < 1e-7);
                        prop_assert!((a.y - b.y).abs() < 1e-7);
                        prop_assert!((a.z - b.z).abs() < 1e-7);
                    }
                }
            }
        }

        #[test]
        fn mdf_symmetric_and_flip_invariant(
            raw_a in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0), 8),
            raw_b in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0), 8),
        ) {
            let a = Streamline::new(raw_a.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect());
            let b = Streamline::new(raw_b.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect());
            if let (Ok(a), Ok(b)) = (a, b) {
                let ab = a.mdf_distance(&b).unwrap();
                let ba = b.mdf_distance(&a).unwrap();
                prop_assert!((ab - ba).abs() < 1e-12);
                let ab_flip = a.mdf_distance(&b.reversed()).unwrap();
                prop_assert!((ab - ab_flip).abs() < 1e-12);
                prop_assert!(ab >= 0.0);
            }
        }

        #[test]
        fn align_idempotent_preserves_endpoints(
            raws in proptest::collection::vec(
                proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0), 2..10),
                1..20
            ),
        ) {
            let streamlines: Vec<Streamline> = raws
                .iter()
                .filter_map(|raw| {
                    Streamline::new(raw.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect()).ok()
                })
                .collect();
            prop_assume!(!streamlines.is_empty());
            let t = Tractogram::new(streamlines);
            let anchor = Point3::new(1.0, -2.0, 3.0);
            let once = t.align_endpoints(&anchor);
            let twice = once.align_endpoints(&anchor);
            prop_assert_eq!(&once, &twice);
            // multiset of unordered endpoint pairs unchanged
            let key = |s: &Streamline| {
                let mut pair = [
                    (s.first().x, s.first().y, s.first().z),
                    (s.last().x, s.last().y, s.last().z),
                ];
                pair.sort_by(|a, b| a.partial_cmp(b).unwrap());
                pair
            };
            let mut before: Vec<_> = t.streamlines.iter().map(key).collect();
            let mut after: Vec<_> = once.streamlines.iter().map(key).collect();
            before.sort_by(|a, b| a.partial_cmp(b).unwrap());
            after.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assert_eq!(before, after);
        }
    }
}
