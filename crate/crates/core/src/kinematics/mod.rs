//! Planar two-link leg geometry.
//!
//! Frames: in the hip-relative frame `x` points forward and `z` points *down*
//! from the hip, so a hanging straight leg sits at `(0, thigh + shank)`.
//! World heights (hip height, ground level) are measured *up* from the ground
//! reference. Joint angles: `q_hip` is the thigh angle from vertical, positive
//! when the thigh swings forward; `q_knee` is flexion, positive when the shank
//! folds backward relative to the thigh.

mod trajectory;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

pub use trajectory::{
    desired_trajectory, place_for_condition, place_with, Condition, Placement, ShapeParams,
    Trajectory, MIN_TRAJECTORY_SAMPLES,
};

/// Slack used when comparing a reach or limit against its boundary.
const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("invalid leg geometry: {0}")]
    InvalidGeometry(String),
    #[error("foot point ({x}, {z}) is outside the reachable annulus")]
    Unreachable { x: f64, z: f64 },
    #[error("foot point ({x}, {z}) is reachable only outside the joint limits")]
    OutOfLimits { x: f64, z: f64 },
    #[error("trajectory needs at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("trajectory shape is infeasible: {0}")]
    InfeasibleShape(String),
    #[error("trajectory file: {0}")]
    Io(String),
}

/// Closed angle interval in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, value: T) -> bool {
        let eps = T::c(BOUNDARY_EPS);
        value >= self.lo - eps && value <= self.hi + eps
    }

    /// True when `value` lies inside the interval shrunk by `margin` on both sides.
    pub fn contains_with_margin(&self, value: T, margin: T) -> bool {
        value > self.lo + margin && value < self.hi - margin
    }

    pub fn clamp(&self, value: T) -> T {
        value.max(self.lo).min(self.hi)
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct LegGeometry<T> {
    pub thigh_length: T,
    pub shank_length: T,
    pub hip_limits: Interval<T>,
    pub knee_limits: Interval<T>,
}

impl<T: Real> Default for LegGeometry<T> {
    /// 20 cm thigh and shank (40 cm straight-leg hip height), hip within
    /// ±60° of vertical, knee flexion within [0°, 120°].
    fn default() -> Self {
        let deg = T::c(std::f64::consts::PI / 180.0);
        Self {
            thigh_length: T::c(0.20),
            shank_length: T::c(0.20),
            hip_limits: Interval::new(T::c(-60.0) * deg, T::c(60.0) * deg),
            knee_limits: Interval::new(T::zero(), T::c(120.0) * deg),
        }
    }
}

impl<T: Real> LegGeometry<T> {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let bad = |msg: &str| Err(KinematicsError::InvalidGeometry(msg.to_string()));
        if !(self.thigh_length > T::zero()) || !(self.shank_length > T::zero()) {
            return bad("link lengths must be positive");
        }
        if !(self.hip_limits.lo < self.hip_limits.hi) {
            return bad("hip limit interval is empty");
        }
        if !(self.knee_limits.lo < self.knee_limits.hi) {
            return bad("knee limit interval is empty");
        }
        if self.knee_limits.lo < T::zero() || self.knee_limits.hi > T::PI() {
            return bad("knee limits must stay on the flexion branch [0, pi]");
        }
        Ok(())
    }

    pub fn reach(&self) -> T {
        self.thigh_length + self.shank_length
    }

    pub fn inner_reach(&self) -> T {
        (self.thigh_length - self.shank_length).abs()
    }

    pub fn within_limits(&self, q_hip: T, q_knee: T) -> bool {
        self.hip_limits.contains(q_hip) && self.knee_limits.contains(q_knee)
    }

    /// Position Jacobian d(x, z)/d(q_hip, q_knee) of the foot, row-major.
    pub fn jacobian(&self, q_hip: T, q_knee: T) -> [[T; 2]; 2] {
        let (l1, l2) = (self.thigh_length, self.shank_length);
        let shank_angle = q_hip - q_knee;
        [
            [
                l1 * q_hip.cos() + l2 * shank_angle.cos(),
                -l2 * shank_angle.cos(),
            ],
            [
                -l1 * q_hip.sin() - l2 * shank_angle.sin(),
                l2 * shank_angle.sin(),
            ],
        ]
    }
}

/// Six-dimensional joint kinematics of one leg.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct JointState<T> {
    pub q_hip: T,
    pub q_knee: T,
    pub qd_hip: T,
    pub qd_knee: T,
    pub qdd_hip: T,
    pub qdd_knee: T,
}

impl<T: Real> JointState<T> {
    pub fn at_rest(q_hip: T, q_knee: T) -> Self {
        Self {
            q_hip,
            q_knee,
            ..Self::zeroed()
        }
    }

    pub fn zeroed() -> Self {
        Self {
            q_hip: T::zero(),
            q_knee: T::zero(),
            qd_hip: T::zero(),
            qd_knee: T::zero(),
            qdd_hip: T::zero(),
            qdd_knee: T::zero(),
        }
    }

    /// Network input ordering: positions, velocities, accelerations.
    pub fn as_features(&self) -> [T; 6] {
        [
            self.q_hip,
            self.q_knee,
            self.qd_hip,
            self.qd_knee,
            self.qdd_hip,
            self.qdd_knee,
        ]
    }
}

/// Foot position in the hip-relative frame (x forward, z down).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FootPoint<T> {
    pub x: T,
    pub z: T,
}

impl<T: Real> FootPoint<T> {
    pub fn new(x: T, z: T) -> Self {
        Self { x, z }
    }

    pub fn distance_to_hip(&self) -> T {
        self.x.hypot(self.z)
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.z - other.z)
    }
}

pub fn forward_kinematics<T: Real>(geom: &LegGeometry<T>, q: &JointState<T>) -> FootPoint<T> {
    foot_position(geom, q.q_hip, q.q_knee)
}

pub fn foot_position<T: Real>(geom: &LegGeometry<T>, q_hip: T, q_knee: T) -> FootPoint<T> {
    let shank_angle = q_hip - q_knee;
    FootPoint {
        x: geom.thigh_length * q_hip.sin() + geom.shank_length * shank_angle.sin(),
        z: geom.thigh_length * q_hip.cos() + geom.shank_length * shank_angle.cos(),
    }
}

/// Joint angles placing the foot at `p`, on the knee-flexion branch.
///
/// Velocities and accelerations of the returned state are zero.
pub fn inverse_kinematics<T: Real>(
    geom: &LegGeometry<T>,
    p: &FootPoint<T>,
) -> Result<JointState<T>, KinematicsError> {
    let (l1, l2) = (geom.thigh_length, geom.shank_length);
    let eps = T::c(BOUNDARY_EPS);
    let r2 = p.x * p.x + p.z * p.z;
    let r = r2.sqrt();
    let unreachable = || KinematicsError::Unreachable {
        x: p.x.f64(),
        z: p.z.f64(),
    };
    if !r.is_finite() || r > geom.reach() + eps || r < geom.inner_reach() - eps {
        return Err(unreachable());
    }
    let two = T::c(2.0);
    let cos_knee = ((r2 - l1 * l1 - l2 * l2) / (two * l1 * l2))
        .max(-T::one())
        .min(T::one());
    let flexion = cos_knee.acos();
    let foot_direction = p.x.atan2(p.z);

    let solve = |q_knee: T| {
        let offset = (l2 * q_knee.sin()).atan2(l1 + l2 * q_knee.cos());
        (foot_direction + offset, q_knee)
    };
    let (q_hip, q_knee) = solve(flexion);
    if geom.within_limits(q_hip, q_knee) {
        return Ok(JointState::at_rest(q_hip, q_knee));
    }
    Err(KinematicsError::OutOfLimits {
        x: p.x.f64(),
        z: p.z.f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geom() -> LegGeometry<f64> {
        LegGeometry::default()
    }

    fn random_in_limits(rng: &mut ChaCha8Rng, g: &LegGeometry<f64>) -> (f64, f64) {
        (
            rng.random_range(g.hip_limits.lo..g.hip_limits.hi),
            rng.random_range(g.knee_limits.lo..g.knee_limits.hi),
        )
    }

    #[test]
    fn straight_leg_hangs_below_hip() {
        let g = geom();
        let p = forward_kinematics(&g, &JointState::zeroed());
        assert!(p.x.abs() < 1e-15);
        assert!((p.z - 0.40).abs() < 1e-15);
    }

    #[test]
    fn right_angle_knee_puts_shank_horizontal() {
        let g = geom();
        let p = foot_position(&g, 0.0, std::f64::consts::FRAC_PI_2);
        // Flexion folds the shank backward, so the foot ends up behind the hip.
        assert!((p.x + g.shank_length).abs() < 1e-15);
        assert!((p.z - g.thigh_length).abs() < 1e-15);
    }

    #[test]
    fn forward_kinematics_matches_complex_number_oracle() {
        // Rotate link vectors as complex numbers measured from the downward axis.
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (qh, qk) = random_in_limits(&mut rng, &g);
            let (c1, s1) = (qh.cos(), qh.sin());
            let (ck, sk) = (qk.cos(), -qk.sin());
            // shank direction = thigh direction * e^{-i qk}
            let (c2, s2) = (c1 * ck - s1 * sk, s1 * ck + c1 * sk);
            let oracle = (
                g.thigh_length * s1 + g.shank_length * s2,
                g.thigh_length * c1 + g.shank_length * c2,
            );
            let p = foot_position(&g, qh, qk);
            assert!((p.x - oracle.0).abs() < 1e-12);
            assert!((p.z - oracle.1).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_kinematics_round_trips() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let (qh, qk) = random_in_limits(&mut rng, &g);
            let p = foot_position(&g, qh, qk);
            let q = inverse_kinematics(&g, &p).unwrap();
            let back = forward_kinematics(&g, &q);
            assert!(p.distance(&back) < 1e-9, "{p:?} vs {back:?}");
            assert!((q.q_knee - qk).abs() < 1e-6);
            assert!((q.q_hip - qh).abs() < 1e-6);
        }
    }

    #[test]
    fn inverse_kinematics_boundary_is_straight_leg() {
        let g = geom();
        let q = inverse_kinematics(&g, &FootPoint::new(0.0, 0.40)).unwrap();
        assert!(q.q_hip.abs() < 1e-12);
        assert!(q.q_knee.abs() < 1e-6);
    }

    #[test]
    fn inverse_kinematics_rejects_points_beyond_reach() {
        let g = geom();
        let err = inverse_kinematics(&g, &FootPoint::new(0.1, 0.40)).unwrap_err();
        assert!(matches!(err, KinematicsError::Unreachable { .. }));
    }

    #[test]
    fn inverse_kinematics_reports_limit_violation() {
        let g = geom();
        // Foot far in front of the hip needs more than 60 degrees of hip flexion.
        let err = inverse_kinematics(&g, &FootPoint::new(0.35, 0.05)).unwrap_err();
        assert!(matches!(err, KinematicsError::OutOfLimits { .. }));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = geom();
        let (qh, qk) = (0.3, 0.9);
        let jac = g.jacobian(qh, qk);
        let h = 1e-6;
        for (col, (dh, dk)) in [(h, 0.0), (0.0, h)].into_iter().enumerate() {
            let plus = foot_position(&g, qh + dh, qk + dk);
            let minus = foot_position(&g, qh - dh, qk - dk);
            assert!(((plus.x - minus.x) / (2.0 * h) - jac[0][col]).abs() < 1e-8);
            assert!(((plus.z - minus.z) / (2.0 * h) - jac[1][col]).abs() < 1e-8);
        }
    }

    #[test]
    fn geometry_validation() {
        assert!(geom().validate().is_ok());
        let mut g = geom();
        g.shank_length = 0.0;
        assert!(g.validate().is_err());
        let mut g = geom();
        g.knee_limits = Interval::new(-0.2, 1.0);
        assert!(g.validate().is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let g: LegGeometry<f32> = LegGeometry::default();
        let p = foot_position(&g, 0.4f32, 0.8f32);
        let q = inverse_kinematics(&g, &p).unwrap();
        assert!(p.distance(&forward_kinematics(&g, &q)) < 1e-5);
    }
}
