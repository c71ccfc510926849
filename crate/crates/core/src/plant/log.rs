use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{PlantError, LEGS};
use crate::kinematics::{FootPoint, JointState, LegGeometry};
use crate::scalar::Real;

pub const LOG_HEADER: [&str; 11] = [
    "t_s", "leg", "q_hip", "q_knee", "qd_hip", "qd_knee", "qdd_hip", "qdd_knee", "foot_x_m",
    "foot_z_m", "contact",
];

pub const LEG_NAMES: [&str; LEGS] = ["left", "right"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegSample<T> {
    pub joints: JointState<T>,
    /// Hip-relative foot position.
    pub foot: FootPoint<T>,
    pub contact: bool,
}

/// Per-leg 6D kinematics sampled at the control rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicsLog<T> {
    pub sample_rate: T,
    pub legs: [Vec<LegSample<T>>; LEGS],
    /// World hip position at every sample (m).
    pub hip_x: Vec<T>,
}

impl<T: Real> KinematicsLog<T> {
    pub fn with_capacity(sample_rate: T, n: usize) -> Self {
        Self {
            sample_rate,
            legs: [Vec::with_capacity(n), Vec::with_capacity(n)],
            hip_x: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.hip_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hip_x.is_empty()
    }

    pub fn time(&self, i: usize) -> T {
        T::from_count(i) / self.sample_rate
    }

    pub fn feet(&self, leg: usize) -> impl Iterator<Item = FootPoint<T>> + '_ {
        self.legs[leg].iter().map(|s| s.foot)
    }

    /// Samples at which either joint of `leg` rests on a hard stop.
    pub fn limit_contacts(&self, leg: usize, geom: &LegGeometry<T>) -> usize {
        let eps = T::c(1e-9);
        let at = |v: T, lo: T, hi: T| (v - lo).abs() <= eps || (v - hi).abs() <= eps;
        self.legs[leg]
            .iter()
            .filter(|s| {
                at(s.joints.q_hip, geom.hip_limits.lo, geom.hip_limits.hi)
                    || at(s.joints.q_knee, geom.knee_limits.lo, geom.knee_limits.hi)
            })
            .count()
    }

    /// Replace accelerations by central differences of the logged velocities.
    /// `final_velocity` is the state one interval past the last sample.
    pub(crate) fn difference_accelerations(&mut self, final_velocity: [[T; 2]; LEGS]) {
        let dt = T::one() / self.sample_rate;
        let two = T::c(2.0);
        for (leg, samples) in self.legs.iter_mut().enumerate() {
            let n = samples.len();
            if n == 0 {
                continue;
            }
            let vel = |samples: &[LegSample<T>], i: usize| -> [T; 2] {
                if i == n {
                    final_velocity[leg]
                } else {
                    [samples[i].joints.qd_hip, samples[i].joints.qd_knee]
                }
            };
            let acc: Vec<[T; 2]> = (0..n)
                .map(|i| {
                    let next = vel(samples, i + 1);
                    if i == 0 {
                        let cur = vel(samples, 0);
                        [(next[0] - cur[0]) / dt, (next[1] - cur[1]) / dt]
                    } else {
                        let prev = vel(samples, i - 1);
                        [(next[0] - prev[0]) / (two * dt), (next[1] - prev[1]) / (two * dt)]
                    }
                })
                .collect();
            for (s, a) in samples.iter_mut().zip(acc) {
                s.joints.qdd_hip = a[0];
                s.joints.qdd_knee = a[1];
            }
        }
    }

    /// Rows ordered by sample, left leg before right.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), PlantError> {
        let io = |e: csv::Error| PlantError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(LOG_HEADER).map_err(io)?;
        for i in 0..self.len() {
            let t = self.time(i).f64().to_string();
            for (leg, name) in LEG_NAMES.iter().enumerate() {
                let s = &self.legs[leg][i];
                let j = &s.joints;
                let mut row = vec![t.clone(), name.to_string()];
                row.extend(
                    [j.q_hip, j.q_knee, j.qd_hip, j.qd_knee, j.qdd_hip, j.qdd_knee, s.foot.x, s.foot.z]
                        .iter()
                        .map(|v| v.f64().to_string()),
                );
                row.push(u8::from(s.contact).to_string());
                w.write_record(&row).map_err(io)?;
            }
        }
        w.flush().map_err(|e| PlantError::Io(e.to_string()))
    }

    /// Read a log written by [`KinematicsLog::write_csv`]. The hip track is not
    /// part of the file and is filled with zeros.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, PlantError> {
        let err = |msg: String| PlantError::Io(msg);
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let mut legs: [Vec<LegSample<T>>; LEGS] = Default::default();
        let mut times = Vec::new();
        for (line, row) in r.records().enumerate() {
            let row = row.map_err(|e| err(e.to_string()))?;
            if row.len() != LOG_HEADER.len() {
                return Err(err(format!("row {line}: expected {} columns", LOG_HEADER.len())));
            }
            let num = |i: usize| -> Result<T, PlantError> {
                row[i]
                    .parse::<f64>()
                    .map(T::c)
                    .map_err(|e| err(format!("row {line}: {e}")))
            };
            let leg = LEG_NAMES
                .iter()
                .position(|n| *n == &row[1])
                .ok_or_else(|| err(format!("row {line}: unknown leg `{}`", &row[1])))?;
            if leg == 0 {
                times.push(num(0)?);
            }
            legs[leg].push(LegSample {
                joints: JointState {
                    q_hip: num(2)?,
                    q_knee: num(3)?,
                    qd_hip: num(4)?,
                    qd_knee: num(5)?,
                    qdd_hip: num(6)?,
                    qdd_knee: num(7)?,
                },
                foot: FootPoint::new(num(8)?, num(9)?),
                contact: &row[10] == "1",
            });
        }
        if legs[0].len() != legs[1].len() || times.len() < 2 {
            return Err(err("log needs matching left/right rows and at least two samples".into()));
        }
        let rate = (T::one() / (times[1] - times[0])).f64();
        let sample_rate = T::c((rate * 1e6).round() / 1e6);
        let n = times.len();
        Ok(Self {
            sample_rate,
            legs,
            hip_x: vec![T::zero(); n],
        })
    }

    /// `t_s,hip_x_m` rows.
    pub fn write_displacement_csv<W: Write>(&self, writer: W) -> Result<(), PlantError> {
        let io = |e: csv::Error| PlantError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t_s", "hip_x_m"]).map_err(io)?;
        for (i, x) in self.hip_x.iter().enumerate() {
            w.write_record([self.time(i).f64().to_string(), x.f64().to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| PlantError::Io(e.to_string()))
    }
}
