use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{inverse_kinematics, FootPoint, KinematicsError, LegGeometry};
use crate::scalar::{mean, Real};

pub const MIN_TRAJECTORY_SAMPLES: usize = 16;

/// Where the desired loop sits relative to the ground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// Condition 1: the loop never meets the ground.
    InAir,
    /// Condition 2: the bottom of the loop dips slightly under the ground.
    SlightContact,
    /// Condition 3: the whole loop lies at least 1 cm under the ground.
    UnderGround1cm,
}

impl Condition {
    pub const ALL: [Condition; 3] = [
        Condition::InAir,
        Condition::SlightContact,
        Condition::UnderGround1cm,
    ];

    pub fn number(self) -> u8 {
        match self {
            Condition::InAir => 1,
            Condition::SlightContact => 2,
            Condition::UnderGround1cm => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Condition::InAir),
            2 => Some(Condition::SlightContact),
            3 => Some(Condition::UnderGround1cm),
            _ => None,
        }
    }
}

/// Parameters of the two-lobe foot loop, hip-relative.
///
/// The loop is traversed so that the lower (stance) lobe runs backward and
/// the upper (swing) lobe runs forward. The swing apex is skewed so the front
/// part of the swing is higher than the back part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapeParams {
    /// Forward offset of the loop centre from the hip (m).
    pub center_x: f64,
    /// Depth of the loop centre below the hip (m).
    pub center_z: f64,
    /// Total fore-aft extent of the loop (m).
    pub stride: f64,
    /// How far the stance lobe bulges below the centre line (m).
    pub stance_depth: f64,
    /// Swing lobe height at the front end of the loop (m).
    pub front_swing_height: f64,
    /// Swing lobe height at the back end of the loop (m).
    pub back_swing_height: f64,
    /// Minimum clearance to every joint limit along the loop (rad).
    pub limit_margin: f64,
    /// Duration of one cycle (s).
    pub period: f64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        Self {
            center_x: 0.0,
            center_z: 0.33,
            stride: 0.10,
            stance_depth: 0.012,
            front_swing_height: 0.045,
            back_swing_height: 0.025,
            limit_margin: 0.08,
            period: 1.0 / 0.6,
        }
    }
}

/// Hip heights chosen for each condition, relative to the loop extremes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Placement {
    /// Gap between the deepest reachable foot position and the ground in air (m).
    pub in_air_clearance: f64,
    /// How far the bottom of the loop sinks under the ground in slight contact (m).
    pub slight_contact_depth: f64,
    /// Depth of the shallowest loop point under the ground in Condition 3 (m).
    pub underground_depth: f64,
}

impl Default for Placement {
    fn default() -> Self {
        Self {
            in_air_clearance: 0.02,
            slight_contact_depth: 0.005,
            underground_depth: 0.01,
        }
    }
}

/// Closed desired foot loop plus its placement relative to the ground.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    /// Hip-relative points; the last point repeats the first.
    pub points: Vec<FootPoint<T>>,
    pub period: T,
    pub condition: Condition,
    /// World height of the hip above the ground reference (m).
    pub hip_height: T,
    /// World height of the ground plane (m).
    pub ground_z: T,
    /// Straight-leg length of the leg the loop was built for (m).
    pub leg_reach: T,
}

impl<T: Real> Trajectory<T> {
    /// Number of distinct points (the closing duplicate excluded).
    pub fn len(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn loop_points(&self) -> &[FootPoint<T>] {
        &self.points[..self.len()]
    }

    pub fn is_closed(&self) -> bool {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) if self.points.len() > 1 => a.distance(b) <= T::c(1e-9),
            _ => false,
        }
    }

    pub fn centroid(&self) -> FootPoint<T> {
        let pts = self.loop_points();
        let xs: Vec<T> = pts.iter().map(|p| p.x).collect();
        let zs: Vec<T> = pts.iter().map(|p| p.z).collect();
        FootPoint::new(mean(&xs), mean(&zs))
    }

    /// Largest hip-relative depth along the loop (lowest foot position).
    pub fn max_depth(&self) -> T {
        self.points.iter().fold(T::neg_infinity(), |m, p| m.max(p.z))
    }

    /// Smallest hip-relative depth along the loop (highest foot position).
    pub fn min_depth(&self) -> T {
        self.points.iter().fold(T::infinity(), |m, p| m.min(p.z))
    }

    /// World height of a hip-relative point under this placement.
    pub fn world_z(&self, p: &FootPoint<T>) -> T {
        self.hip_height - p.z
    }

    /// Apex heights (above the loop centre) of the front and back halves.
    pub fn swing_apexes(&self) -> (T, T) {
        let c = self.centroid();
        let mut front = T::neg_infinity();
        let mut back = T::neg_infinity();
        for p in self.loop_points() {
            let height = c.z - p.z;
            if p.x > c.x {
                front = front.max(height);
            } else if p.x < c.x {
                back = back.max(height);
            }
        }
        (front, back)
    }

    /// Foot point at cycle phase `phase` (any real; wraps to [0, 1)).
    pub fn sample(&self, phase: T) -> FootPoint<T> {
        let n = self.len();
        let wrapped = phase - phase.floor();
        let pos = wrapped * T::from_count(n);
        let i = pos.floor().to_usize().unwrap_or(0).min(n - 1);
        let frac = pos - T::from_count(i);
        let a = self.points[i];
        let b = self.points[i + 1];
        FootPoint::new(a.x + (b.x - a.x) * frac, a.z + (b.z - a.z) * frac)
    }

    /// Write `index,x_m,z_m` rows, closing point included.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), KinematicsError> {
        let io = |e: csv::Error| KinematicsError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "x_m", "z_m"]).map_err(io)?;
        for (i, p) in self.points.iter().enumerate() {
            w.write_record([i.to_string(), p.x.f64().to_string(), p.z.f64().to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| KinematicsError::Io(e.to_string()))
    }

    /// Read a loop written by [`Trajectory::write_csv`]. Placement fields are
    /// not part of the file and are supplied by the caller.
    pub fn read_csv<R: Read>(
        reader: R,
        period: T,
        leg_reach: T,
    ) -> Result<Self, KinematicsError> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let mut points = Vec::new();
        for (expected, row) in r.records().enumerate() {
            let row = row.map_err(|e| KinematicsError::Io(e.to_string()))?;
            let field = |i: usize| -> Result<f64, KinematicsError> {
                row.get(i)
                    .ok_or_else(|| KinematicsError::Io(format!("row {expected}: missing column {i}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| KinematicsError::Io(format!("row {expected}: {e}")))
            };
            if field(0)? as usize != expected {
                return Err(KinematicsError::Io(format!("row {expected}: index out of order")));
            }
            points.push(FootPoint::new(T::c(field(1)?), T::c(field(2)?)));
        }
        let mut traj = Self {
            points,
            period,
            condition: Condition::InAir,
            hip_height: T::zero(),
            ground_z: T::zero(),
            leg_reach,
        };
        if traj.len() < MIN_TRAJECTORY_SAMPLES || !traj.is_closed() {
            return Err(KinematicsError::Io("trajectory is not a closed loop".into()));
        }
        traj = place_for_condition(&traj, Condition::InAir, T::zero());
        Ok(traj)
    }
}

/// Build the closed desired foot loop and check it against the leg's limits.
///
/// The returned loop is placed for [`Condition::InAir`] over ground at 0.
pub fn desired_trajectory<T: Real>(
    geom: &LegGeometry<T>,
    shape: &ShapeParams,
    n_samples: usize,
) -> Result<Trajectory<T>, KinematicsError> {
    if n_samples < MIN_TRAJECTORY_SAMPLES {
        return Err(KinematicsError::TooFewSamples {
            min: MIN_TRAJECTORY_SAMPLES,
            got: n_samples,
        });
    }
    geom.validate()?;
    let infeasible = |msg: String| Err(KinematicsError::InfeasibleShape(msg));
    if !(shape.stride > 0.0) || !(shape.period > 0.0) {
        return infeasible("stride and period must be positive".into());
    }
    if !(shape.stance_depth >= 0.0)
        || !(shape.front_swing_height > 0.0)
        || !(shape.back_swing_height > 0.0)
    {
        return infeasible("lobe heights must be positive".into());
    }
    if shape.front_swing_height == shape.back_swing_height {
        return infeasible("front and back swing heights must differ".into());
    }

    let half = shape.stride / 2.0;
    let tau = std::f64::consts::TAU;
    let mut points = Vec::with_capacity(n_samples + 1);
    for k in 0..n_samples {
        let theta = tau * k as f64 / n_samples as f64;
        let (s, c) = theta.sin_cos();
        let x = shape.center_x + half * c;
        // theta in [0, pi]: stance lobe, foot runs backward below the centre line.
        let z = if s >= 0.0 {
            shape.center_z + shape.stance_depth * s
        } else {
            let blend = 0.5 * (1.0 + c);
            let height = shape.back_swing_height
                + (shape.front_swing_height - shape.back_swing_height) * blend;
            shape.center_z + height * s
        };
        points.push(FootPoint::new(T::c(x), T::c(z)));
    }
    points.push(points[0]);

    let margin = T::c(shape.limit_margin);
    for (i, p) in points.iter().enumerate() {
        let q = inverse_kinematics(geom, p).map_err(|e| {
            KinematicsError::InfeasibleShape(format!("sample {i}: {e}"))
        })?;
        if !geom.hip_limits.contains_with_margin(q.q_hip, margin)
            || !geom.knee_limits.contains_with_margin(q.q_knee, margin)
        {
            return infeasible(format!(
                "sample {i} comes within {} rad of a joint limit",
                shape.limit_margin
            ));
        }
    }

    let traj = Trajectory {
        points,
        period: T::c(shape.period),
        condition: Condition::InAir,
        hip_height: T::zero(),
        ground_z: T::zero(),
        leg_reach: geom.reach(),
    };
    let (front, back) = traj.swing_apexes();
    if !(front != back) {
        return infeasible("sampled swing apexes coincide; use more samples".into());
    }
    Ok(place_for_condition(&traj, Condition::InAir, T::zero()))
}

/// Re-place a loop for `condition` using the default [`Placement`].
pub fn place_for_condition<T: Real>(
    traj: &Trajectory<T>,
    condition: Condition,
    ground_z: T,
) -> Trajectory<T> {
    place_with(traj, condition, ground_z, &Placement::default())
}

/// Set the hip height for `condition`; the hip-relative points are untouched.
pub fn place_with<T: Real>(
    traj: &Trajectory<T>,
    condition: Condition,
    ground_z: T,
    placement: &Placement,
) -> Trajectory<T> {
    let offset = match condition {
        // Even a fully straight leg stays clear of the ground.
        Condition::InAir => traj.leg_reach.max(traj.max_depth()) + T::c(placement.in_air_clearance),
        Condition::SlightContact => traj.max_depth() - T::c(placement.slight_contact_depth),
        Condition::UnderGround1cm => traj.min_depth() - T::c(placement.underground_depth),
    };
    Trajectory {
        points: traj.points.clone(),
        period: traj.period,
        condition,
        hip_height: ground_z + offset,
        ground_z,
        leg_reach: traj.leg_reach,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_loop() -> Trajectory<f64> {
        desired_trajectory(&LegGeometry::default(), &ShapeParams::default(), 200).unwrap()
    }

    #[test]
    fn default_loop_is_closed_feasible_and_asymmetric() {
        let geom = LegGeometry::<f64>::default();
        let traj = default_loop();
        assert_eq!(traj.points.len(), 201);
        assert!(traj.is_closed());
        let (front, back) = traj.swing_apexes();
        assert!(front > back);
        // Independent feasibility sweep against the raw limits.
        for p in &traj.points {
            let q = inverse_kinematics(&geom, p).unwrap();
            assert!(q.q_hip > geom.hip_limits.lo + 0.08 && q.q_hip < geom.hip_limits.hi - 0.08);
            assert!(q.q_knee > geom.knee_limits.lo + 0.08 && q.q_knee < geom.knee_limits.hi - 0.08);
        }
    }

    #[test]
    fn too_few_samples_is_rejected() {
        let err = desired_trajectory::<f64>(&LegGeometry::default(), &ShapeParams::default(), 3)
            .unwrap_err();
        assert!(matches!(err, KinematicsError::TooFewSamples { .. }));
    }

    #[test]
    fn unreachable_shape_is_infeasible() {
        let shape = ShapeParams {
            center_z: 0.39,
            ..ShapeParams::default()
        };
        let err = desired_trajectory::<f64>(&LegGeometry::default(), &shape, 64).unwrap_err();
        assert!(matches!(err, KinematicsError::InfeasibleShape(_)));
    }

    #[test]
    fn equal_swing_heights_are_rejected() {
        let shape = ShapeParams {
            front_swing_height: 0.03,
            back_swing_height: 0.03,
            ..ShapeParams::default()
        };
        assert!(desired_trajectory::<f64>(&LegGeometry::default(), &shape, 64).is_err());
    }

    #[test]
    fn loop_runs_backward_along_the_bottom() {
        let traj = default_loop();
        let n = traj.len();
        // Quarter of the way around is the bottom of the stance lobe.
        let a = traj.points[n / 4 - 1];
        let b = traj.points[n / 4 + 1];
        assert!(b.x < a.x);
        assert!(traj.points[n / 4].z > traj.centroid().z);
    }

    #[test]
    fn placements_match_condition_definitions() {
        let traj = default_loop();
        let ground = 0.0;

        let air = place_for_condition(&traj, Condition::InAir, ground);
        let lowest = air.points.iter().map(|p| air.world_z(p)).fold(f64::INFINITY, f64::min);
        assert!(lowest - ground >= 1e-3);
        assert!(air.hip_height - traj.leg_reach > ground);

        let slight = place_for_condition(&traj, Condition::SlightContact, ground);
        let below = slight.points.iter().filter(|p| slight.world_z(p) < ground).count();
        let above = slight.points.iter().filter(|p| slight.world_z(p) > ground).count();
        assert!(below > 0 && above > 0);

        let under = place_for_condition(&traj, Condition::UnderGround1cm, ground);
        for p in &under.points {
            assert!(under.world_z(p) <= ground - 0.01 + 1e-12);
        }
        let highest = under.points.iter().map(|p| under.world_z(p)).fold(f64::NEG_INFINITY, f64::max);
        assert!((highest - (ground - 0.01)).abs() < 1e-12);
        assert!(under.hip_height < slight.hip_height);
    }

    #[test]
    fn placement_keeps_points_and_centroid() {
        let traj = default_loop();
        let c = traj.centroid();
        for cond in Condition::ALL {
            let placed = place_for_condition(&traj, cond, 0.25);
            assert_eq!(placed.points, traj.points);
            assert_eq!(placed.condition, cond);
            let pc = placed.centroid();
            assert_eq!(pc.distance_to_hip(), c.distance_to_hip());
        }
    }

    #[test]
    fn sampling_wraps_and_interpolates() {
        let traj = default_loop();
        let p0 = traj.sample(0.0);
        assert_eq!(p0, traj.points[0]);
        let p1 = traj.sample(1.0);
        assert!(p0.distance(&p1) < 1e-12);
        let mid = traj.sample(0.5 / traj.len() as f64);
        let expect = FootPoint::new(
            0.5 * (traj.points[0].x + traj.points[1].x),
            0.5 * (traj.points[0].z + traj.points[1].z),
        );
        assert!(mid.distance(&expect) < 1e-12);
        assert!(traj.sample(-0.25).distance(&traj.sample(0.75)) < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let traj = default_loop();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("index,x_m,z_m\n"));
        let back = Trajectory::<f64>::read_csv(buf.as_slice(), traj.period, traj.leg_reach).unwrap();
        assert_eq!(back.points, traj.points);
    }
}
