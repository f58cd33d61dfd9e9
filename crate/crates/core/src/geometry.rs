//! Rigid-transform algebra and the forward fisheye projection shared by the
//! labeling and evaluation stages.
//!
//! Conventions: poses are world-to-camera (`p_c = R p_w + t`), the camera
//! frame is x-right / y-down / z-forward, and quaternions are Hamilton
//! `[w, x, y, z]`.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::colmap::{CameraIntrinsics, CameraModelKind, FramePose};

/// World and camera points are plain `f64` 3-vectors throughout the crate.
pub type Vec3 = Vector3<f64>;

/// Default cutoff for the field angle of a projected point, in degrees.
///
/// Rays that leave the optical axis by more than this are treated as not
/// visible even though the fisheye polynomial would still map them somewhere.
pub const DEFAULT_MAX_FIELD_ANGLE_DEG: f64 = 89.0;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("quaternion has near-zero norm")]
    ZeroNormQuaternion,
    #[error("camera model {0} has no projection support (expected SIMPLE_RADIAL_FISHEYE)")]
    UnsupportedModel(String),
}

/// Orthonormal rotation matrix built from a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    /// Builds the rotation matrix for `q = [w, x, y, z]`.
    ///
    /// The quaternion is renormalized internally; only a (near-)zero norm is
    /// an error.
    pub fn from_quaternion(q: [f64; 4]) -> Result<Self, GeometryError> {
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm > 1e-9) {
            return Err(GeometryError::ZeroNormQuaternion);
        }
        let s = 1.0 / norm;
        let (w, x, y, z) = (q[0] * s, q[1] * s, q[2] * s, q[3] * s);
        #[rustfmt::skip]
        let m = Matrix3::new(
            1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z),       2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),       1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),       2.0 * (y * z + w * x),       1.0 - 2.0 * (x * x + y * y),
        );
        Ok(Rotation(m))
    }

    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Applies the inverse rotation, `Rᵀ v`.
    pub fn apply_inverse(&self, v: &Vec3) -> Vec3 {
        self.0.transpose() * v
    }
}

/// World-to-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rot: Rotation,
    t: Vec3,
}

impl RigidTransform {
    pub fn new(rot: Rotation, t: Vec3) -> Self {
        Self { rot, t }
    }

    pub fn from_pose(pose: &FramePose) -> Result<Self, GeometryError> {
        Ok(Self::new(Rotation::from_quaternion(pose.q)?, pose.t))
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vec3::zeros())
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rot
    }

    pub fn translation(&self) -> &Vec3 {
        &self.t
    }

    /// `p_c = R p_w + t`.
    pub fn world_to_camera(&self, p_w: &Vec3) -> Vec3 {
        self.rot.apply(p_w) + self.t
    }

    /// Optical center in world coordinates, `c = -Rᵀ t`.
    pub fn camera_center(&self) -> Vec3 {
        -self.rot.apply_inverse(&self.t)
    }

    /// The camera-frame +y axis (downward) expressed in world coordinates.
    pub fn down_axis_world(&self) -> Vec3 {
        self.rot.apply_inverse(&Vec3::new(0.0, 1.0, 0.0))
    }

    pub fn up_axis_world(&self) -> Vec3 {
        -self.down_axis_world()
    }
}

/// Continuous image coordinates, origin top-left, u rightward, v downward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

/// Forward projection for the one-coefficient radial fisheye model.
///
/// With `theta` the angle between the ray and the optical axis, the model
/// maps a camera-frame point to `principal + f * theta * (1 + k theta^2)`
/// along the image direction of `(x, y)` (equidistant base with a single
/// radial term, matching COLMAP's SIMPLE_RADIAL_FISHEYE).
#[derive(Debug, Clone, Copy)]
pub struct FisheyeProjector {
    f: f64,
    cx: f64,
    cy: f64,
    k: f64,
    max_theta: f64,
}

impl FisheyeProjector {
    pub fn new(cam: &CameraIntrinsics) -> Result<Self, GeometryError> {
        if cam.model != CameraModelKind::SimpleRadialFisheye {
            return Err(GeometryError::UnsupportedModel(cam.model.name().to_string()));
        }
        // Arity is validated when the model is constructed/parsed.
        Ok(Self {
            f: cam.params[0],
            cx: cam.params[1],
            cy: cam.params[2],
            k: cam.params[3],
            max_theta: DEFAULT_MAX_FIELD_ANGLE_DEG.to_radians(),
        })
    }

    pub fn with_max_field_angle_deg(mut self, deg: f64) -> Self {
        self.max_theta = deg.to_radians();
        self
    }

    /// Projects a camera-frame point; `None` means not visible (behind the
    /// camera or beyond the maximum field angle).
    pub fn project(&self, p_c: &Vec3) -> Option<PixelPoint> {
        if p_c.z <= 0.0 {
            return None;
        }
        let r = p_c.x.hypot(p_c.y);
        if r == 0.0 {
            return Some(PixelPoint { u: self.cx, v: self.cy });
        }
        let theta = r.atan2(p_c.z);
        if theta > self.max_theta {
            return None;
        }
        let theta_d = theta * (1.0 + self.k * theta * theta);
        let s = self.f * theta_d / r;
        Some(PixelPoint {
            u: self.cx + s * p_c.x,
            v: self.cy + s * p_c.y,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fisheye_cam(f: f64, cx: f64, cy: f64, k: f64) -> CameraIntrinsics {
        CameraIntrinsics {
            camera_id: 1,
            model: CameraModelKind::SimpleRadialFisheye,
            width: 1280,
            height: 720,
            params: vec![f, cx, cy, k],
        }
    }

    #[test]
    fn identity_quaternion_gives_identity_matrix() {
        let r = Rotation::from_quaternion([1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.matrix(), &Matrix3::identity());
    }

    #[test]
    fn ninety_degree_z_rotation_maps_x_to_y() {
        let h = 0.5f64.sqrt();
        let r = Rotation::from_quaternion([h, 0.0, 0.0, h]).unwrap();
        let v = r.apply(&Vec3::new(1.0, 0.0, 0.0));
        assert!((v - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_quaternion_is_rejected() {
        assert!(matches!(
            Rotation::from_quaternion([0.0, 0.0, 0.0, 0.0]),
            Err(GeometryError::ZeroNormQuaternion)
        ));
    }

    #[test]
    fn identity_pose_passes_points_through() {
        let rt = RigidTransform::identity();
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(rt.world_to_camera(&p), p);
    }

    #[test]
    fn camera_center_inverts_translation() {
        let rt = RigidTransform::new(Rotation::identity(), Vec3::new(0.0, 0.0, -5.0));
        assert_eq!(rt.camera_center(), Vec3::new(0.0, 0.0, 5.0));
        assert_eq!(rt.world_to_camera(&Vec3::zeros()), Vec3::new(0.0, 0.0, -5.0));
    }

    #[test]
    fn camera_center_maps_to_origin() {
        let rot = Rotation::from_quaternion([0.9, 0.1, -0.3, 0.2]).unwrap();
        let rt = RigidTransform::new(rot, Vec3::new(0.4, -1.2, 2.0));
        let c = rt.camera_center();
        assert!(rt.world_to_camera(&c).norm() < 1e-9);
    }

    #[test]
    fn on_axis_point_projects_to_principal_point() {
        let cam = fisheye_cam(600.0, 640.0, 360.0, 0.05);
        let proj = FisheyeProjector::new(&cam).unwrap();
        let px = proj.project(&Vec3::new(0.0, 0.0, 2.5)).unwrap();
        assert_eq!((px.u, px.v), (640.0, 360.0));
    }

    #[test]
    fn forty_five_degree_ray_matches_hand_value() {
        // k = 0, theta = pi/4: u = cx + f * pi/4.
        let cam = fisheye_cam(600.0, 640.0, 360.0, 0.0);
        let proj = FisheyeProjector::new(&cam).unwrap();
        let px = proj.project(&Vec3::new(1.0, 0.0, 1.0)).unwrap();
        assert!((px.u - (640.0 + 600.0 * std::f64::consts::FRAC_PI_4)).abs() < 1e-9);
        assert!((px.v - 360.0).abs() < 1e-12);
    }

    #[test]
    fn point_behind_camera_is_not_visible() {
        let cam = fisheye_cam(600.0, 640.0, 360.0, 0.05);
        let proj = FisheyeProjector::new(&cam).unwrap();
        assert!(proj.project(&Vec3::new(0.0, 0.0, -1.0)).is_none());
        assert!(proj.project(&Vec3::new(1.0, 1.0, 0.0)).is_none());
    }

    #[test]
    fn max_field_angle_cuts_off_wide_rays() {
        let cam = fisheye_cam(600.0, 640.0, 360.0, 0.0);
        let proj = FisheyeProjector::new(&cam).unwrap().with_max_field_angle_deg(45.0);
        assert!(proj.project(&Vec3::new(1.0, 0.0, 0.9)).is_none());
        assert!(proj.project(&Vec3::new(1.0, 0.0, 1.1)).is_some());
    }

    #[test]
    fn pinhole_model_is_rejected_for_projection() {
        let cam = CameraIntrinsics {
            camera_id: 1,
            model: CameraModelKind::Pinhole,
            width: 640,
            height: 480,
            params: vec![500.0, 500.0, 320.0, 240.0],
        };
        assert!(matches!(
            FisheyeProjector::new(&cam),
            Err(GeometryError::UnsupportedModel(_))
        ));
    }

    proptest! {
        #[test]
        fn rotation_preserves_norm(
            q in [-1.0f64..1.0, -1.0..1.0, -1.0..1.0, -1.0..1.0],
            v in [-10.0f64..10.0, -10.0..10.0, -10.0..10.0],
        ) {
            prop_assume!(q.iter().map(|c| c * c).sum::<f64>().sqrt() > 1e-3);
            let r = Rotation::from_quaternion(q).unwrap();
            let v = Vec3::new(v[0], v[1], v[2]);
            prop_assert!((r.apply(&v).norm() - v.norm()).abs() < 1e-12 * (1.0 + v.norm()));
        }

        #[test]
        fn rigid_transform_is_an_isometry(
            q in [-1.0f64..1.0, -1.0..1.0, -1.0..1.0, -1.0..1.0],
            t in [-5.0f64..5.0, -5.0..5.0, -5.0..5.0],
            p in [-10.0f64..10.0, -10.0..10.0, -10.0..10.0],
            r in [-10.0f64..10.0, -10.0..10.0, -10.0..10.0],
        ) {
            prop_assume!(q.iter().map(|c| c * c).sum::<f64>().sqrt() > 1e-3);
            let rt = RigidTransform::new(
                Rotation::from_quaternion(q).unwrap(),
                Vec3::new(t[0], t[1], t[2]),
            );
            let p = Vec3::new(p[0], p[1], p[2]);
            let r = Vec3::new(r[0], r[1], r[2]);
            let d_world = (p - r).norm();
            let d_cam = (rt.world_to_camera(&p) - rt.world_to_camera(&r)).norm();
            prop_assert!((d_world - d_cam).abs() < 1e-9 * (1.0 + d_world));
        }

        #[test]
        fn projection_is_finite_in_front_of_camera(
            x in -5.0f64..5.0,
            y in -5.0f64..5.0,
            z in 1e-6f64..10.0,
            k in -0.2f64..0.2,
        ) {
            let cam = fisheye_cam(600.0, 640.0, 360.0, k);
            let proj = FisheyeProjector::new(&cam).unwrap();
            if let Some(px) = proj.project(&Vec3::new(x, y, z)) {
                prop_assert!(px.u.is_finite() && px.v.is_finite());
            }
        }
    }
}
