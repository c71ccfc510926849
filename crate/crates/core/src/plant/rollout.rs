use crate::babbling::PwmSequence;
use crate::kinematics::{foot_position, inverse_kinematics, FootPoint, JointState, LegGeometry, Trajectory};
use crate::scalar::Real;

use super::{pwm_to_real, step, Environment, KinematicsLog, LegSample, PlantError, PlantParams, PlantState, LEGS, MOTORS};

/// Anything that turns desired 6D leg kinematics into three motor commands.
pub trait InverseMap<T> {
    /// PWM levels in [0, 255] for `features` ordered as
    /// `(q_hip, q_knee, qd_hip, qd_knee, qdd_hip, qdd_knee)`.
    fn predict(&self, features: &[T; 6]) -> [T; MOTORS];
}

fn record<T: Real>(log: &mut KinematicsLog<T>, state: &PlantState<T>, geom: &LegGeometry<T>) {
    for leg in 0..LEGS {
        let joints = state.legs[leg];
        log.legs[leg].push(LegSample {
            joints,
            foot: foot_position(geom, joints.q_hip, joints.q_knee),
            contact: state.contact[leg],
        });
    }
    log.hip_x.push(state.hip_x);
}

fn final_velocity<T: Real>(state: &PlantState<T>) -> [[T; 2]; LEGS] {
    state.legs.map(|q| [q.qd_hip, q.qd_knee])
}

/// Replay two PWM sequences on the plant and log the resulting kinematics.
pub fn run_open_loop<T: Real>(
    initial: &PlantState<T>,
    seq_left: &PwmSequence,
    seq_right: &PwmSequence,
    params: &PlantParams<T>,
) -> Result<KinematicsLog<T>, PlantError> {
    params.validate()?;
    if seq_left.len() != seq_right.len() {
        return Err(PlantError::SequenceMismatch(format!(
            "left has {} samples, right has {}",
            seq_left.len(),
            seq_right.len()
        )));
    }
    for seq in [seq_left, seq_right] {
        if (seq.sample_rate * params.dt.f64() - 1.0).abs() > 1e-9 {
            return Err(PlantError::SequenceMismatch(format!(
                "sequence rate {} Hz does not match the plant interval {} s",
                seq.sample_rate,
                params.dt.f64()
            )));
        }
    }
    let n = seq_left.len();
    let mut log = KinematicsLog::with_capacity(T::one() / params.dt, n);
    let mut state = *initial;
    for i in 0..n {
        record(&mut log, &state, &params.geometry);
        state = step(
            &state,
            pwm_to_real(seq_left.sample(i)),
            pwm_to_real(seq_right.sample(i)),
            params,
        )?;
    }
    log.difference_accelerations(final_velocity(&state));
    Ok(log)
}

/// Desired joint kinematics over one cycle of a foot loop.
///
/// Joint angles come from inverse kinematics of every loop point; velocities
/// and accelerations are periodic central differences of that sequence.
#[derive(Debug, Clone)]
pub struct DesiredProfile<T> {
    joints: Vec<JointState<T>>,
    feet: Vec<FootPoint<T>>,
    pub period: T,
}

impl<T: Real> DesiredProfile<T> {
    pub fn new(traj: &Trajectory<T>, geom: &LegGeometry<T>) -> Result<Self, crate::kinematics::KinematicsError> {
        let feet = traj.loop_points().to_vec();
        let n = feet.len();
        let q: Vec<(T, T)> = feet
            .iter()
            .map(|p| inverse_kinematics(geom, p).map(|j| (j.q_hip, j.q_knee)))
            .collect::<Result<_, _>>()?;
        let h = traj.period / T::from_count(n);
        let two = T::c(2.0);
        let joints = (0..n)
            .map(|k| {
                let (prev, cur, next) = (q[(k + n - 1) % n], q[k], q[(k + 1) % n]);
                JointState {
                    q_hip: cur.0,
                    q_knee: cur.1,
                    qd_hip: (next.0 - prev.0) / (two * h),
                    qd_knee: (next.1 - prev.1) / (two * h),
                    qdd_hip: (next.0 - two * cur.0 + prev.0) / (h * h),
                    qdd_knee: (next.1 - two * cur.1 + prev.1) / (h * h),
                }
            })
            .collect();
        Ok(Self {
            joints,
            feet,
            period: traj.period,
        })
    }

    fn locate(&self, phase: T) -> (usize, usize, T) {
        let n = self.joints.len();
        let wrapped = phase - phase.floor();
        let pos = wrapped * T::from_count(n);
        let i = pos.floor().to_usize().unwrap_or(0).min(n - 1);
        (i, (i + 1) % n, pos - T::from_count(i))
    }

    /// Linearly interpolated desired 6D state at cycle phase `phase`.
    pub fn at(&self, phase: T) -> JointState<T> {
        let (i, j, f) = self.locate(phase);
        let (a, b) = (self.joints[i].as_features(), self.joints[j].as_features());
        let v: [T; 6] = std::array::from_fn(|k| a[k] + (b[k] - a[k]) * f);
        JointState {
            q_hip: v[0],
            q_knee: v[1],
            qd_hip: v[2],
            qd_knee: v[3],
            qdd_hip: v[4],
            qdd_knee: v[5],
        }
    }

    pub fn foot_at(&self, phase: T) -> FootPoint<T> {
        let (i, j, f) = self.locate(phase);
        let (a, b) = (self.feet[i], self.feet[j]);
        FootPoint::new(a.x + (b.x - a.x) * f, a.z + (b.z - a.z) * f)
    }

    /// Phase of `leg` at time `t`; the right leg runs half a cycle behind.
    pub fn phase(&self, leg: usize, t: T) -> T {
        t / self.period + T::c(0.5) * T::from_count(leg)
    }
}

/// Both legs at rest on their first desired point, lifted onto the ground
/// surface when that point lies under it.
pub fn tracking_start_state<T: Real>(
    profile: &DesiredProfile<T>,
    env: Environment<T>,
    geom: &LegGeometry<T>,
) -> PlantState<T> {
    let legs = std::array::from_fn(|leg| {
        let mut foot = profile.foot_at(profile.phase(leg, T::zero()));
        if env.penetration(&foot) > T::zero() {
            // ground == hip_height - z at the surface
            foot.z = env.hip_height - env.ground.unwrap_or(T::zero());
        }
        match inverse_kinematics(geom, &foot) {
            Ok(q) => q,
            Err(_) => {
                let d = profile.at(profile.phase(leg, T::zero()));
                JointState::at_rest(d.q_hip, d.q_knee)
            }
        }
    });
    PlantState::new(legs, env)
}

#[derive(Debug, Clone)]
pub struct TrackingOutcome<T> {
    pub log: KinematicsLog<T>,
    /// PWM actually sent to each leg at every control tick.
    pub commands: [Vec<[u8; MOTORS]>; LEGS],
    /// Desired hip-relative foot position of each leg at every tick.
    pub desired: [Vec<FootPoint<T>>; LEGS],
    /// Final forward hip travel (m).
    pub displacement: T,
    /// First time the hip travel reached the success distance, if ever.
    pub success_time: Option<T>,
}

impl<T: Real> TrackingOutcome<T> {
    pub fn success(&self) -> bool {
        self.success_time.is_some()
    }
}

/// Hip travel counted as a successful walk (m).
pub const SUCCESS_DISTANCE: f64 = 0.40;

fn to_pwm<T: Real>(level: T) -> u8 {
    let v = level.f64();
    if v.is_nan() {
        0
    } else {
        v.round().clamp(0.0, 255.0) as u8
    }
}

/// Drive both legs open-loop with their inverse maps along `desired`.
///
/// At every tick each network receives the desired 6D kinematics of its leg's
/// current phase; its output is rounded to integer PWM and applied without
/// any feedback from the realized motion.
pub fn run_tracking<T: Real, M: InverseMap<T>>(
    net_left: &M,
    net_right: &M,
    desired: &Trajectory<T>,
    duration: T,
    params: &PlantParams<T>,
) -> Result<TrackingOutcome<T>, PlantError> {
    params.validate()?;
    let profile = DesiredProfile::new(desired, &params.geometry)
        .map_err(|e| PlantError::InvalidParams(format!("desired trajectory: {e}")))?;
    let env = Environment {
        hip_height: desired.hip_height,
        ground: Some(desired.ground_z),
    };
    let n = (duration / params.dt).round().to_usize().unwrap_or(0);
    let mut state = tracking_start_state(&profile, env, &params.geometry);
    let mut log = KinematicsLog::with_capacity(T::one() / params.dt, n);
    let mut commands: [Vec<[u8; MOTORS]>; LEGS] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut desired_feet: [Vec<FootPoint<T>>; LEGS] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let nets = [net_left, net_right];
    let goal = T::c(SUCCESS_DISTANCE);
    let mut success_time = None;
    for i in 0..n {
        let t = T::from_count(i) * params.dt;
        record(&mut log, &state, &params.geometry);
        let pwm: [[u8; MOTORS]; LEGS] = std::array::from_fn(|leg| {
            let phase = profile.phase(leg, t);
            desired_feet[leg].push(profile.foot_at(phase));
            nets[leg].predict(&profile.at(phase).as_features()).map(to_pwm)
        });
        for leg in 0..LEGS {
            commands[leg].push(pwm[leg]);
        }
        state = step(&state, pwm_to_real(pwm[0]), pwm_to_real(pwm[1]), params)?;
        if success_time.is_none() && state.displacement >= goal {
            success_time = Some(state.time);
        }
    }
    log.difference_accelerations(final_velocity(&state));
    Ok(TrackingOutcome {
        log,
        commands,
        desired: desired_feet,
        displacement: state.displacement,
        success_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::babbling::{generate_natural, NaturalParams};
    use crate::kinematics::{desired_trajectory, place_for_condition, Condition, ShapeParams};

    struct Constant([f64; 3]);

    impl InverseMap<f64> for Constant {
        fn predict(&self, _: &[f64; 6]) -> [f64; 3] {
            self.0
        }
    }

    /// Echoes a function of the desired hip angle so commands depend on phase.
    struct HipEcho;

    impl InverseMap<f64> for HipEcho {
        fn predict(&self, f: &[f64; 6]) -> [f64; 3] {
            [100.0 + 100.0 * f[0], 100.0 - 100.0 * f[0], 20.0 + 10.0 * f[1]]
        }
    }

    fn traj() -> Trajectory<f64> {
        desired_trajectory(&Default::default(), &ShapeParams::default(), 200).unwrap()
    }

    #[test]
    fn silent_rollout_ends_hanging() {
        let p = PlantParams::<f64>::default();
        let start = PlantState::new(
            [JointState::at_rest(0.5, 0.7), JointState::at_rest(-0.3, 0.2)],
            Environment::in_air(1.0),
        );
        let quiet = PwmSequence::silent(10.0, 200.0).unwrap();
        let log = run_open_loop(&start, &quiet, &quiet, &p).unwrap();
        assert_eq!(log.len(), 2000);
        let last = log.legs[0].last().unwrap().joints;
        assert!(last.q_hip.abs() < 1e-3 && last.q_knee.abs() < 1e-3);
    }

    #[test]
    fn open_loop_rejects_mismatched_sequences() {
        let p = PlantParams::<f64>::default();
        let a = PwmSequence::silent(1.0, 200.0).unwrap();
        let b = PwmSequence::silent(2.0, 200.0).unwrap();
        let start = PlantState::hanging(Environment::in_air(1.0));
        assert!(matches!(run_open_loop(&start, &a, &b, &p), Err(PlantError::SequenceMismatch(_))));
        let slow = PwmSequence::silent(1.0, 100.0).unwrap();
        assert!(matches!(run_open_loop(&start, &slow, &slow, &p), Err(PlantError::SequenceMismatch(_))));
    }

    #[test]
    fn logged_accelerations_are_consistent_with_velocities() {
        let p = PlantParams::<f64>::default();
        let seq = generate_natural(5.0, 200.0, 1, &NaturalParams::default()).unwrap();
        let start = PlantState::hanging(Environment::in_air(1.0));
        let log = run_open_loop(&start, &seq, &seq, &p).unwrap();
        let s = &log.legs[0];
        let dt = 1.0 / 200.0;
        for i in 1..s.len() - 1 {
            let central = (s[i + 1].joints.qd_hip - s[i - 1].joints.qd_hip) / (2.0 * dt);
            assert!((central - s[i].joints.qdd_hip).abs() < 1e-9);
            // Away from the stops, positions integrate the logged velocities.
            let lim = &p.geometry.knee_limits;
            let free = s[i - 1..=i + 1]
                .iter()
                .all(|x| x.joints.q_knee > lim.lo + 1e-6 && x.joints.q_knee < lim.hi - 1e-6);
            if free {
                let slope = (s[i + 1].joints.q_knee - s[i - 1].joints.q_knee) / (2.0 * dt);
                // PWM steps make the acceleration jump inside an interval.
                let jump: f64 = s[i - 1..=i + 1].iter().map(|x| x.joints.qdd_knee.abs()).sum();
                assert!((slope - s[i].joints.qd_knee).abs() < 0.05 + dt * jump);
            }
        }
    }

    #[test]
    fn profile_derivatives_match_the_loop() {
        let geom = LegGeometry::default();
        let t = traj();
        let prof = DesiredProfile::new(&t, &geom).unwrap();
        // Joint velocities mapped through the Jacobian match the foot's own
        // finite-difference velocity along the loop.
        let n = t.loop_points().len();
        let h = t.period / n as f64;
        for k in 0..n {
            let phase = |i: usize| i as f64 / n as f64;
            let q = prof.at(phase(k));
            let j = geom.jacobian(q.q_hip, q.q_knee);
            let vx = j[0][0] * q.qd_hip + j[0][1] * q.qd_knee;
            let vz = j[1][0] * q.qd_hip + j[1][1] * q.qd_knee;
            let (a, b) = (prof.foot_at(phase(k + n - 1)), prof.foot_at(phase(k + 1)));
            let (fx, fz) = ((b.x - a.x) / (2.0 * h), (b.z - a.z) / (2.0 * h));
            let tol = 1e-3 + 0.05 * fx.hypot(fz);
            assert!((vx - fx).abs() < tol && (vz - fz).abs() < tol, "sample {k}");
        }
        let p = prof.foot_at(0.0);
        assert_eq!(p, t.points[0]);
        assert!((prof.phase(1, 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn start_state_is_on_or_above_ground() {
        let geom = LegGeometry::default();
        let t = traj();
        let prof = DesiredProfile::new(&t, &geom).unwrap();
        for cond in Condition::ALL {
            let placed = place_for_condition(&t, cond, 0.0);
            let env = Environment { hip_height: placed.hip_height, ground: Some(0.0) };
            let s = tracking_start_state(&prof, env, &geom);
            for leg in 0..LEGS {
                assert!(env.penetration(&s.foot(leg, &geom)) <= 1e-12, "{cond:?}");
            }
        }
    }

    #[test]
    fn in_air_tracking_never_travels() {
        let p = PlantParams::<f64>::default();
        let out = run_tracking(&HipEcho, &HipEcho, &traj(), 20.0, &p).unwrap();
        assert_eq!(out.displacement, 0.0);
        assert!(!out.success());
        assert_eq!(out.commands[0].len(), 4000);
        assert_eq!(out.log.len(), 4000);
    }

    #[test]
    fn commands_do_not_depend_on_ground_placement() {
        let p = PlantParams::<f64>::default();
        let base = traj();
        let runs: Vec<_> = Condition::ALL
            .iter()
            .map(|&c| run_tracking(&HipEcho, &HipEcho, &place_for_condition(&base, c, 0.0), 10.0, &p).unwrap())
            .collect();
        assert_eq!(runs[0].commands, runs[1].commands);
        assert_eq!(runs[0].commands, runs[2].commands);
        // The realized motion does differ once the ground is in the way.
        assert_ne!(runs[0].log.legs[0], runs[2].log.legs[0]);
    }

    #[test]
    fn constant_commands_are_clamped_to_pwm_range() {
        let p = PlantParams::<f64>::default();
        let net = Constant([-5.0, 300.0, f64::NAN]);
        let out = run_tracking(&net, &net, &traj(), 1.0, &p).unwrap();
        assert!(out.commands[0].iter().all(|c| *c == [0, 255, 0]));
    }
}
