//! Camera-height estimation against the road surface.
//!
//! Phase 1 accumulates a global ground set: every tracked 3-D point whose
//! projection lands in the lower-central image region of some frame is
//! taken as a road-surface sample (deduplicated by point id). Phase 2 runs
//! per frame: the ground set is queried within `d_max` of the optical
//! center, the hits are expressed in the frame's camera coordinates, and a
//! Theil-Sen line is fitted to the (depth, height) pairs. With the optical
//! axis roughly parallel to the road, the fit's y-intercept is the unscaled
//! camera height; the per-frame intercepts are aggregated as a median.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colmap::{ImageId, Point3dId, SparseReconstruction};
use crate::geometry::{FisheyeProjector, PixelPoint, RigidTransform, Vec3};

/// Above this many samples the pairwise slope set is subsampled instead of
/// enumerated (the exact estimator is quadratic in the sample count).
pub const THEIL_SEN_EXACT_MAX: usize = 500;

/// Number of slope pairs drawn in sampling mode; equals the exact pair
/// count at the threshold so the estimator quality is continuous there.
const THEIL_SEN_SAMPLE_PAIRS: usize = THEIL_SEN_EXACT_MAX * (THEIL_SEN_EXACT_MAX - 1) / 2;

const THEIL_SEN_SAMPLE_SEED: u64 = 0x7468_6569_6c5f_73656e >> 8;

/// Lower-central image region where road surface is expected, as fractions
/// of the image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiSpec {
    pub u_min_frac: f64,
    pub u_max_frac: f64,
    pub v_min_frac: f64,
}

impl Default for RoiSpec {
    fn default() -> Self {
        Self { u_min_frac: 0.20, u_max_frac: 0.80, v_min_frac: 0.75 }
    }
}

impl RoiSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0 <= self.u_min_frac && self.u_min_frac < self.u_max_frac && self.u_max_frac <= 1.0) {
            return Err(format!(
                "roi u fractions must satisfy 0 <= u_min < u_max <= 1, got {} and {}",
                self.u_min_frac, self.u_max_frac
            ));
        }
        if !(0.0..=1.0).contains(&self.v_min_frac) {
            return Err(format!("roi v_min_frac must be in [0, 1], got {}", self.v_min_frac));
        }
        Ok(())
    }

    /// Strict membership test of a projected point for a WxH image.
    pub fn contains(&self, width: u64, height: u64, px: &PixelPoint) -> bool {
        let w = width as f64;
        let h = height as f64;
        px.u > self.u_min_frac * w && px.u < self.u_max_frac * w && px.v > self.v_min_frac * h
    }
}

/// Accumulated road-surface samples with a uniform-grid index for radius
/// queries.
#[derive(Debug, Clone)]
pub struct GroundPointSet {
    ids: Vec<Point3dId>,
    points: Vec<Vec3>,
    cell: f64,
    grid: HashMap<(i64, i64, i64), Vec<u32>>,
    cell_lo: (i64, i64, i64),
    cell_hi: (i64, i64, i64),
}

impl GroundPointSet {
    /// Builds the set from `(point id, world position)` entries. Entry order
    /// is preserved and determines the order of query results.
    pub fn from_entries(entries: Vec<(Point3dId, Vec3)>) -> Self {
        let n = entries.len();
        let cell = if n == 0 {
            1.0
        } else {
            let mut lo = entries[0].1;
            let mut hi = entries[0].1;
            for (_, p) in &entries {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            let diag = (hi - lo).norm();
            if diag > 0.0 {
                // Aim for a few points per cell on typical cloud densities.
                diag / (n as f64).cbrt().max(1.0)
            } else {
                1.0
            }
        };
        let mut set = Self {
            ids: Vec::with_capacity(n),
            points: Vec::with_capacity(n),
            cell,
            grid: HashMap::new(),
            cell_lo: (i64::MAX, i64::MAX, i64::MAX),
            cell_hi: (i64::MIN, i64::MIN, i64::MIN),
        };
        for (idx, (id, p)) in entries.into_iter().enumerate() {
            let key = set.key(&p);
            set.cell_lo =
                (set.cell_lo.0.min(key.0), set.cell_lo.1.min(key.1), set.cell_lo.2.min(key.2));
            set.cell_hi =
                (set.cell_hi.0.max(key.0), set.cell_hi.1.max(key.1), set.cell_hi.2.max(key.2));
            set.grid.entry(key).or_default().push(idx as u32);
            set.ids.push(id);
            set.points.push(p);
        }
        set
    }

    fn key(&self, p: &Vec3) -> (i64, i64, i64) {
        (
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
            (p.z / self.cell).floor() as i64,
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn ids(&self) -> &[Point3dId] {
        &self.ids
    }

    /// Indices of all points within Euclidean distance `radius` (inclusive)
    /// of `center`, in insertion order.
    pub fn indices_within(&self, center: &Vec3, radius: f64) -> Vec<u32> {
        if self.points.is_empty() || radius < 0.0 {
            return Vec::new();
        }
        let r2 = radius * radius;
        let lo = self.key(&(center - Vec3::repeat(radius)));
        let hi = self.key(&(center + Vec3::repeat(radius)));
        // Clamp to occupied cells so oversized radii stay linear in the data.
        let lo = (lo.0.max(self.cell_lo.0), lo.1.max(self.cell_lo.1), lo.2.max(self.cell_lo.2));
        let hi = (hi.0.min(self.cell_hi.0), hi.1.min(self.cell_hi.1), hi.2.min(self.cell_hi.2));
        let mut out = Vec::new();
        for kx in lo.0..=hi.0 {
            for ky in lo.1..=hi.1 {
                for kz in lo.2..=hi.2 {
                    if let Some(bucket) = self.grid.get(&(kx, ky, kz)) {
                        for &idx in bucket {
                            if (self.points[idx as usize] - center).norm_squared() <= r2 {
                                out.push(idx);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn within_radius(&self, center: &Vec3, radius: f64) -> Vec<Vec3> {
        self.indices_within(center, radius)
            .into_iter()
            .map(|i| self.points[i as usize])
            .collect()
    }
}

/// Line fitted to (depth z_c, height y_c) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    /// Height coordinate at zero depth, i.e. directly under the camera.
    pub intercept: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum RegressionError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("all abscissa values are identical; slope is undefined")]
    DegenerateAbscissa,
}

/// Median with the usual convention: even-length inputs average the two
/// middle values. Sorts in place.
pub fn median_in_place(xs: &mut [f64]) -> f64 {
    assert!(!xs.is_empty(), "median of an empty slice");
    xs.sort_unstable_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    }
}

/// Theil-Sen line fit over `(z, y)` samples.
///
/// The slope is the median of pairwise slopes `(y_j - y_i) / (z_j - z_i)`
/// over pairs with distinct `z`; the intercept is the median of
/// `y_i - slope * z_i`. Up to [`THEIL_SEN_EXACT_MAX`] samples all pairs are
/// enumerated (making the result independent of sample order); above that,
/// pairs are drawn uniformly with a fixed seed.
pub fn theil_sen(samples: &[(f64, f64)]) -> Result<LineFit, RegressionError> {
    let n = samples.len();
    if n < 2 {
        return Err(RegressionError::TooFewSamples(n));
    }
    let mut slopes: Vec<f64>;
    if n <= THEIL_SEN_EXACT_MAX {
        slopes = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                let dz = samples[j].0 - samples[i].0;
                if dz != 0.0 {
                    slopes.push((samples[j].1 - samples[i].1) / dz);
                }
            }
        }
        if slopes.is_empty() {
            return Err(RegressionError::DegenerateAbscissa);
        }
    } else {
        let z0 = samples[0].0;
        if samples.iter().all(|s| s.0 == z0) {
            return Err(RegressionError::DegenerateAbscissa);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(THEIL_SEN_SAMPLE_SEED);
        slopes = Vec::with_capacity(THEIL_SEN_SAMPLE_PAIRS);
        while slopes.len() < THEIL_SEN_SAMPLE_PAIRS {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i == j {
                continue;
            }
            let dz = samples[j].0 - samples[i].0;
            if dz != 0.0 {
                slopes.push((samples[j].1 - samples[i].1) / dz);
            }
        }
    }
    let slope = median_in_place(&mut slopes);
    let mut intercepts: Vec<f64> = samples.iter().map(|&(z, y)| y - slope * z).collect();
    let intercept = median_in_place(&mut intercepts);
    Ok(LineFit { slope, intercept })
}

/// Phase 1: project every tracked point through every frame observing it
/// and keep those landing in the ROI. Points are stored once regardless of
/// how many frames see them.
pub fn accumulate_ground_set(
    recon: &SparseReconstruction,
    roi: &RoiSpec,
    max_field_angle_deg: f64,
) -> GroundPointSet {
    let per_frame: Vec<Vec<Point3dId>> = recon
        .temporal_order()
        .par_iter()
        .map(|image_id| {
            let frame = &recon.frames[image_id];
            let cam = &recon.cameras[&frame.camera_id];
            let Ok(projector) = FisheyeProjector::new(cam) else {
                return Vec::new();
            };
            let projector = projector.with_max_field_angle_deg(max_field_angle_deg);
            let Ok(rigid) = RigidTransform::from_pose(frame) else {
                return Vec::new();
            };
            let mut hits = Vec::new();
            for obs in &frame.observations {
                let Some(pid) = obs.point3d_id else { continue };
                let p = &recon.points[&pid];
                if let Some(px) = projector.project(&rigid.world_to_camera(&p.xyz)) {
                    if roi.contains(cam.width, cam.height, &px) {
                        hits.push(pid);
                    }
                }
            }
            hits
        })
        .collect();

    let mut unsupported: BTreeSet<u32> = BTreeSet::new();
    for (&image_id, frame) in &recon.frames {
        let cam = &recon.cameras[&frame.camera_id];
        if FisheyeProjector::new(cam).is_err() && unsupported.insert(frame.camera_id) {
            log::warn!(
                "camera {} ({}) is not a SIMPLE_RADIAL_FISHEYE model; frames such as {} do not contribute ground points",
                frame.camera_id,
                cam.model.name(),
                image_id
            );
        }
    }

    let mut members: BTreeMap<Point3dId, Vec3> = BTreeMap::new();
    for hits in per_frame {
        for pid in hits {
            members.entry(pid).or_insert_with(|| recon.points[&pid].xyz);
        }
    }
    GroundPointSet::from_entries(members.into_iter().collect())
}

/// Per-frame outcome of the localized regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameHeightRecord {
    /// Ground points found within `d_max` of the optical center.
    pub n_local: usize,
    /// `None` when the frame had too few local points or a degenerate fit.
    pub fit: Option<LineFit>,
}

#[derive(Debug, Error)]
pub enum HeightError {
    #[error("no frame produced a valid ground-plane fit")]
    NoValidFrames,
}

/// Result of the two-phase estimation over a whole reconstruction.
#[derive(Debug, Clone)]
pub struct HeightEstimate {
    /// Median of the valid per-frame intercepts, in reconstruction units.
    pub h_cam: f64,
    pub per_frame: BTreeMap<ImageId, FrameHeightRecord>,
    pub n_valid: usize,
}

impl HeightEstimate {
    /// Median absolute deviation of the valid intercepts around `h_cam`.
    pub fn intercept_mad(&self) -> f64 {
        let mut devs: Vec<f64> = self
            .per_frame
            .values()
            .filter_map(|r| r.fit.map(|f| (f.intercept - self.h_cam).abs()))
            .collect();
        if devs.is_empty() {
            0.0
        } else {
            median_in_place(&mut devs)
        }
    }

    /// Diagnostic CSV: one row per frame in temporal order.
    pub fn write_diagnostics_csv(
        &self,
        recon: &SparseReconstruction,
        path: &Path,
    ) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["frame_id", "name", "n_local_points", "slope", "intercept", "valid"])?;
        for &id in recon.temporal_order() {
            let rec = self.per_frame.get(&id);
            let name = &recon.frames[&id].name;
            let (n, slope, intercept, valid) = match rec {
                Some(FrameHeightRecord { n_local, fit: Some(f) }) => {
                    (*n_local, f.slope.to_string(), f.intercept.to_string(), "1")
                }
                Some(FrameHeightRecord { n_local, fit: None }) => {
                    (*n_local, String::new(), String::new(), "0")
                }
                None => (0, String::new(), String::new(), "0"),
            };
            w.write_record([id.to_string(), name.clone(), n.to_string(), slope, intercept, valid.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Phase 2 for a single frame: localized Theil-Sen fit in camera
/// coordinates. Returns no fit when fewer than `min_points` ground points
/// lie within `d_max` of the optical center.
pub fn frame_height(
    recon: &SparseReconstruction,
    frame_id: ImageId,
    gset: &GroundPointSet,
    d_max: f64,
    min_points: usize,
) -> FrameHeightRecord {
    let frame = &recon.frames[&frame_id];
    let Ok(rigid) = RigidTransform::from_pose(frame) else {
        return FrameHeightRecord { n_local: 0, fit: None };
    };
    let center = rigid.camera_center();
    let local = gset.within_radius(&center, d_max);
    let n_local = local.len();
    if n_local < min_points.max(2) {
        return FrameHeightRecord { n_local, fit: None };
    }
    let samples: Vec<(f64, f64)> = local
        .iter()
        .map(|p| {
            let pc = rigid.world_to_camera(p);
            (pc.z, pc.y)
        })
        .collect();
    FrameHeightRecord { n_local, fit: theil_sen(&samples).ok() }
}

/// Runs both phases and aggregates the per-frame intercepts as a median.
pub fn estimate_camera_height(
    recon: &SparseReconstruction,
    roi: &RoiSpec,
    d_max: f64,
    min_points: usize,
    max_field_angle_deg: f64,
) -> Result<HeightEstimate, HeightError> {
    let gset = accumulate_ground_set(recon, roi, max_field_angle_deg);
    let records: Vec<(ImageId, FrameHeightRecord)> = recon
        .temporal_order()
        .par_iter()
        .map(|&id| (id, frame_height(recon, id, &gset, d_max, min_points)))
        .collect();
    let mut intercepts: Vec<f64> =
        records.iter().filter_map(|(_, r)| r.fit.map(|f| f.intercept)).collect();
    if intercepts.is_empty() {
        return Err(HeightError::NoValidFrames);
    }
    let n_valid = intercepts.len();
    let h_cam = median_in_place(&mut intercepts);
    Ok(HeightEstimate { h_cam, per_frame: records.into_iter().collect(), n_valid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn median_conventions() {
        assert_eq!(median_in_place(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_in_place(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median_in_place(&mut [5.0]), 5.0);
    }

    #[test]
    fn exact_line_is_recovered() {
        let fit = theil_sen(&[(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]).unwrap();
        assert_eq!(fit.slope, 1.0);
        assert_eq!(fit.intercept, 1.0);
    }

    #[test]
    fn single_outlier_below_breakdown_is_rejected() {
        // 5 points, 1 outlier: 6 of the 10 pairwise slopes are clean, so the
        // median lands on the true slope and the residual median on the true
        // intercept.
        let fit =
            theil_sen(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0), (4.0, 100.0)]).unwrap();
        assert_eq!(fit.slope, 1.0);
        assert_eq!(fit.intercept, 0.0);
    }

    #[test]
    fn four_point_outlier_case_matches_pair_enumeration() {
        // At n = 4 a single outlier corrupts half of the 6 pairs, which is
        // exactly the estimator's breakdown point: the averaged median mixes
        // a clean and a corrupted slope. The expected values below are from
        // enumerating the pairs by hand: slopes {1, 1, 100/3, 1, 49.5, 97},
        // median = (1 + 100/3) / 2.
        let samples = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 100.0)];
        let fit = theil_sen(&samples).unwrap();
        let slope = 0.5 * (1.0 + 100.0 / 3.0);
        assert_eq!(fit.slope, slope);
        let mut res: Vec<f64> = samples.iter().map(|&(z, y)| y - slope * z).collect();
        assert_eq!(fit.intercept, median_in_place(&mut res));
    }

    #[test]
    fn too_few_and_degenerate_inputs_error() {
        assert_eq!(theil_sen(&[]), Err(RegressionError::TooFewSamples(0)));
        assert_eq!(theil_sen(&[(1.0, 2.0)]), Err(RegressionError::TooFewSamples(1)));
        assert_eq!(
            theil_sen(&[(1.0, 2.0), (1.0, 3.0), (1.0, 4.0)]),
            Err(RegressionError::DegenerateAbscissa)
        );
    }

    #[test]
    fn sampling_mode_recovers_noisy_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<(f64, f64)> = (0..2000)
            .map(|_| {
                let z = rng.gen_range(0.0..10.0);
                let noise = rng.gen_range(-0.01..0.01);
                (z, 0.5 * z + 0.02 + noise)
            })
            .collect();
        let fit = theil_sen(&samples).unwrap();
        assert!((fit.slope - 0.5).abs() < 0.01);
        assert!((fit.intercept - 0.02).abs() < 0.005);
    }

    #[test]
    fn radius_query_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let entries: Vec<(Point3dId, Vec3)> = (0..400)
            .map(|i| {
                (i as Point3dId, Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            })
            .collect();
        let set = GroundPointSet::from_entries(entries.clone());
        for _ in 0..50 {
            let c = Vec3::new(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2));
            let r = rng.gen_range(0.0..1.5);
            let got = set.indices_within(&c, r);
            let want: Vec<u32> = entries
                .iter()
                .enumerate()
                .filter(|(_, (_, p))| (p - c).norm_squared() <= r * r)
                .map(|(i, _)| i as u32)
                .collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn oversized_radius_returns_everything() {
        let entries: Vec<(Point3dId, Vec3)> =
            (0..20).map(|i| (i, Vec3::new(i as f64 * 1e-3, 0.0, 0.0))).collect();
        let set = GroundPointSet::from_entries(entries);
        assert_eq!(set.indices_within(&Vec3::zeros(), 1e6).len(), 20);
    }

    proptest! {
        // Exact mode is insensitive to sample order, bit for bit.
        #[test]
        fn exact_mode_is_permutation_invariant(perm_seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut samples: Vec<(f64, f64)> = (0..60)
                .map(|_| (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
                .collect();
            let base = theil_sen(&samples).unwrap();
            let mut shuffle_rng = ChaCha8Rng::seed_from_u64(perm_seed);
            for i in (1..samples.len()).rev() {
                samples.swap(i, shuffle_rng.gen_range(0..=i));
            }
            let shuffled = theil_sen(&samples).unwrap();
            prop_assert_eq!(base.slope.to_bits(), shuffled.slope.to_bits());
            prop_assert_eq!(base.intercept.to_bits(), shuffled.intercept.to_bits());
        }

        // Shifting every ordinate by c shifts the intercept by exactly c.
        #[test]
        fn translation_equivariance(c in -8.0f64..8.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let samples: Vec<(f64, f64)> = (0..40)
                .map(|_| (rng.gen_range(0.0..4.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let shifted: Vec<(f64, f64)> = samples.iter().map(|&(z, y)| (z, y + c)).collect();
            let a = theil_sen(&samples).unwrap();
            let b = theil_sen(&shifted).unwrap();
            prop_assert!((b.slope - a.slope).abs() <= 1e-9 * (1.0 + a.slope.abs()));
            prop_assert!((b.intercept - (a.intercept + c)).abs() <= 1e-9 * (1.0 + c.abs()));
        }
    }
}
