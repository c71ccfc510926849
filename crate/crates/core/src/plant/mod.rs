//! Simulated tendon-driven biped on a sagittal-plane gantry.
//!
//! Each leg is a two-link pendulum hanging from a hip whose height is fixed by
//! the gantry. Three motors pull tendons with forces proportional to PWM; the
//! tendons map forces to joint torques through a constant moment-arm matrix.
//! The ground is a spring-damper half-space acting on the foot. Forward hip
//! motion is kinematic: a stance foot sweeping backward drags the hip along.

mod log;
mod rollout;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{foot_position, FootPoint, JointState, LegGeometry};
use crate::scalar::Real;

pub use log::{KinematicsLog, LegSample, LEG_NAMES, LOG_HEADER};
pub use rollout::{
    run_open_loop, run_tracking, tracking_start_state, DesiredProfile, InverseMap, TrackingOutcome,
    SUCCESS_DISTANCE,
};

pub const LEGS: usize = 2;
pub const MOTORS: usize = 3;

/// Maximum allowed foot penetration into the ground (m).
pub const PENETRATION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("simulation diverged at t = {time} s: {detail}")]
    NumericalDivergence { time: f64, detail: String },
    #[error("invalid plant parameters: {0}")]
    InvalidParams(String),
    #[error("input sequences differ: {0}")]
    SequenceMismatch(String),
    #[error("kinematics log: {0}")]
    Io(String),
}

/// Physical constants of the biped. Both legs share one set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct PlantParams<T> {
    pub geometry: LegGeometry<T>,
    /// Mass carried by the hip: frame, hip motors and gantry carriage (kg).
    pub body_mass: T,
    /// Thigh and shank masses (kg).
    pub segment_masses: [T; 2],
    /// Distance of each segment's centre of mass from its proximal joint (m).
    pub com_offsets: [T; 2],
    /// Segment inertias about their centres of mass (kg m^2).
    pub segment_inertias: [T; 2],
    /// Signed (hip, knee) moment arm of each motor's tendon (m); rows M1..M3.
    pub moment_arms: [[T; 2]; MOTORS],
    /// Tendon tension per PWM unit (N), gearhead and spool included.
    pub force_per_pwm: T,
    /// Viscous damping of hip and knee (N m s / rad).
    pub joint_damping: [T; 2],
    /// Passive elastic stiffness of hip and knee (N m / rad).
    pub joint_stiffness: [T; 2],
    /// Angles at which the passive elasticity is relaxed (rad).
    pub joint_rest: [T; 2],
    pub ground_stiffness: T,
    pub ground_damping: T,
    /// Friction coefficient. Also scales how much of a stance foot's
    /// backward sweep moves the hip.
    pub ground_friction: T,
    /// Foot sliding speed at which friction is fully developed (m/s).
    pub slip_velocity: T,
    /// Horizontal force needed to roll the gantry carriage forward (N). A
    /// stance foot whose friction limit falls short of it only partly
    /// anchors. Zero makes every backward-sweeping contact anchor fully.
    pub carriage_resistance: T,
    pub gravity: T,
    /// Control and logging interval (s).
    pub dt: T,
    /// Integration substeps per control interval.
    pub substeps: usize,
    /// Joint (rad/s) or hip (m/s) speed above which the simulation is
    /// declared divergent.
    pub divergence_speed: T,
}

impl<T: Real> Default for PlantParams<T> {
    fn default() -> Self {
        let c = T::c;
        Self {
            geometry: LegGeometry::default(),
            body_mass: c(1.2),
            segment_masses: [c(0.25), c(0.15)],
            com_offsets: [c(0.10), c(0.10)],
            segment_inertias: [c(0.25 * 0.04 / 12.0), c(0.15 * 0.04 / 12.0)],
            moment_arms: [
                [c(0.015), c(0.0)],
                [c(-0.015), c(-0.010)],
                [c(0.005), c(0.012)],
            ],
            force_per_pwm: c(0.26),
            joint_damping: [c(0.10), c(0.02)],
            joint_stiffness: [c(0.5), c(0.3)],
            joint_rest: [c(0.0), c(0.0)],
            ground_stiffness: c(1.0e6),
            ground_damping: c(800.0),
            ground_friction: c(0.8),
            slip_velocity: c(0.02),
            carriage_resistance: c(1.0),
            gravity: c(9.81),
            dt: c(1.0 / 200.0),
            substeps: 40,
            divergence_speed: c(1.0e3),
        }
    }
}

impl<T: Real> PlantParams<T> {
    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |msg: &str| Err(PlantError::InvalidParams(msg.to_string()));
        self.geometry
            .validate()
            .map_err(|e| PlantError::InvalidParams(e.to_string()))?;
        if !(self.dt > T::zero()) || self.substeps == 0 {
            return bad("dt and substeps must be positive");
        }
        let non_negative = [
            self.joint_damping[0],
            self.joint_damping[1],
            self.joint_stiffness[0],
            self.joint_stiffness[1],
            self.ground_stiffness,
            self.ground_damping,
            self.ground_friction,
            self.carriage_resistance,
            self.force_per_pwm,
        ];
        if non_negative.iter().any(|v| !(*v >= T::zero())) {
            return bad("damping, stiffness, friction and force gain must be non-negative");
        }
        if !(self.slip_velocity > T::zero()) {
            return bad("slip velocity must be positive");
        }
        if self.segment_masses.iter().any(|m| !(*m > T::zero())) || !(self.body_mass > T::zero()) {
            return bad("segment masses must be positive");
        }
        if self.moment_arms.iter().any(|row| row[0] == T::zero() && row[1] == T::zero()) {
            return bad("every tendon needs a non-zero moment arm");
        }
        let cross = |a: [T; 2], b: [T; 2]| a[0] * b[1] - a[1] * b[0];
        let r = &self.moment_arms;
        let eps = T::c(1e-15);
        if cross(r[0], r[1]).abs() < eps && cross(r[0], r[2]).abs() < eps && cross(r[1], r[2]).abs() < eps {
            return bad("tendon routing must actuate both joints independently");
        }
        Ok(())
    }

    pub fn total_mass(&self) -> T {
        self.body_mass + T::c(LEGS as f64) * (self.segment_masses[0] + self.segment_masses[1])
    }

    pub fn substep(&self) -> T {
        self.dt / T::from_count(self.substeps)
    }

    /// Mass matrix, velocity-product and gravity terms in absolute-angle
    /// coordinates (thigh angle, shank angle relative to thigh).
    fn dynamics_terms(&self, q: &JointState<T>) -> ([[T; 2]; 2], [T; 2], [T; 2]) {
        let [m1, m2] = self.segment_masses;
        let [c1, c2] = self.com_offsets;
        let [i1, i2] = self.segment_inertias;
        let l1 = self.geometry.thigh_length;
        let g = self.gravity;
        let th1 = q.q_hip;
        let th2 = -q.q_knee;
        let w1 = q.qd_hip;
        let w2 = -q.qd_knee;
        let two = T::c(2.0);

        let coupling = m2 * l1 * c2;
        let m11 = i1 + i2 + m1 * c1 * c1 + m2 * (l1 * l1 + c2 * c2) + two * coupling * th2.cos();
        let m12 = i2 + m2 * c2 * c2 + coupling * th2.cos();
        let m22 = i2 + m2 * c2 * c2;
        let h = coupling * th2.sin();
        let velocity = [-h * (two * w1 * w2 + w2 * w2), h * w1 * w1];
        let gravity = [
            g * ((m1 * c1 + m2 * l1) * th1.sin() + m2 * c2 * (th1 + th2).sin()),
            g * m2 * c2 * (th1 + th2).sin(),
        ];
        ([[m11, m12], [m12, m22]], velocity, gravity)
    }

    /// Kinetic, gravitational and elastic energy of one leg; zero when
    /// hanging straight at rest with relaxed joints at zero.
    pub fn mechanical_energy(&self, q: &JointState<T>) -> T {
        let (mass, _, _) = self.dynamics_terms(q);
        let w = [q.qd_hip, -q.qd_knee];
        let half = T::c(0.5);
        let kinetic = half
            * (mass[0][0] * w[0] * w[0] + T::c(2.0) * mass[0][1] * w[0] * w[1] + mass[1][1] * w[1] * w[1]);
        let [m1, m2] = self.segment_masses;
        let [c1, c2] = self.com_offsets;
        let l1 = self.geometry.thigh_length;
        let th1 = q.q_hip;
        let th2 = th1 - q.q_knee;
        let depth = (m1 * c1 + m2 * l1) * th1.cos() + m2 * c2 * th2.cos();
        let rest = m1 * c1 + m2 * (l1 + c2);
        let [kh, kk] = self.joint_stiffness;
        let (eh, ek) = (q.q_hip - self.joint_rest[0], q.q_knee - self.joint_rest[1]);
        kinetic + self.gravity * (rest - depth) + half * (kh * eh * eh + kk * ek * ek)
    }
}

/// Joint torques (hip, knee) produced by the three tendon tensions.
///
/// Tendons only pull: each tension is `force_per_pwm * pwm >= 0`.
pub fn tendon_torques<T: Real>(pwm: [T; MOTORS], params: &PlantParams<T>) -> [T; 2] {
    let mut torque = [T::zero(); 2];
    for (row, &level) in params.moment_arms.iter().zip(&pwm) {
        let force = params.force_per_pwm * level.max(T::zero());
        torque[0] = torque[0] + row[0] * force;
        torque[1] = torque[1] + row[1] * force;
    }
    torque
}

pub fn tendon_forces<T: Real>(pwm: [T; MOTORS], params: &PlantParams<T>) -> [T; MOTORS] {
    pwm.map(|level| params.force_per_pwm * level.max(T::zero()))
}

pub fn pwm_to_real<T: Real>(pwm: [u8; MOTORS]) -> [T; MOTORS] {
    pwm.map(|v| T::c(v as f64))
}

/// Gantry stop height for the hip and ground level, both as world heights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment<T> {
    /// The gantry holds the hip at or above this height (m).
    pub hip_height: T,
    /// `None` removes the ground entirely.
    pub ground: Option<T>,
}

impl<T: Real> Environment<T> {
    pub fn in_air(hip_height: T) -> Self {
        Self {
            hip_height,
            ground: None,
        }
    }

    /// Depth below the ground plane of a hip-relative point when the hip is at
    /// world height `hip_z` (negative above the ground).
    pub fn penetration_at(&self, hip_z: T, foot: &FootPoint<T>) -> T {
        match self.ground {
            Some(ground) => ground - (hip_z - foot.z),
            None => T::neg_infinity(),
        }
    }

    /// Penetration with the hip resting on the gantry stop.
    pub fn penetration(&self, foot: &FootPoint<T>) -> T {
        self.penetration_at(self.hip_height, foot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState<T> {
    pub legs: [JointState<T>; LEGS],
    pub env: Environment<T>,
    /// Forward hip position in the world (m).
    pub hip_x: T,
    /// Forward hip velocity over the last control interval (m/s).
    pub hip_vx: T,
    /// World hip height (m); never below `env.hip_height`.
    pub hip_z: T,
    pub hip_vz: T,
    pub contact: [bool; LEGS],
    /// Ground normal force on each foot at the end of the last step (N).
    pub normal_force: [T; LEGS],
    /// Total forward hip travel (m); never decreases.
    pub displacement: T,
    pub time: T,
}

impl<T: Real> PlantState<T> {
    /// Hip resting on the gantry stop, legs at the given joint states.
    pub fn new(legs: [JointState<T>; LEGS], env: Environment<T>) -> Self {
        Self {
            legs,
            env,
            hip_x: T::zero(),
            hip_vx: T::zero(),
            hip_z: env.hip_height,
            hip_vz: T::zero(),
            contact: [false; LEGS],
            normal_force: [T::zero(); LEGS],
            displacement: T::zero(),
            time: T::zero(),
        }
    }

    /// Both legs hanging straight down at rest.
    pub fn hanging(env: Environment<T>) -> Self {
        Self::new([JointState::zeroed(); LEGS], env)
    }

    pub fn foot(&self, leg: usize, geom: &LegGeometry<T>) -> FootPoint<T> {
        foot_position(geom, self.legs[leg].q_hip, self.legs[leg].q_knee)
    }

    /// Current depth of a foot below the ground (negative above).
    pub fn penetration(&self, leg: usize, geom: &LegGeometry<T>) -> T {
        self.env.penetration_at(self.hip_z, &self.foot(leg, geom))
    }
}

/// Foot velocity in the hip frame.
fn foot_velocity<T: Real>(geom: &LegGeometry<T>, q: &JointState<T>) -> [T; 2] {
    let j = geom.jacobian(q.q_hip, q.q_knee);
    [
        j[0][0] * q.qd_hip + j[0][1] * q.qd_knee,
        j[1][0] * q.qd_hip + j[1][1] * q.qd_knee,
    ]
}

/// Equations of motion of one leg in (hip, knee) coordinates, with the hip's
/// vertical acceleration `a` left symbolic:
/// `mass * qdd - grad_depth * a = bias`.
struct LegEquations<T> {
    mass: [[T; 2]; 2],
    bias: [T; 2],
    /// Gradient of the leg's mass-weighted centre-of-mass depth.
    grad_depth: [T; 2],
    /// Velocity-product part of the second derivative of that depth.
    depth_curvature: T,
    normal_force: T,
}

fn leg_equations<T: Real>(
    params: &PlantParams<T>,
    env: &Environment<T>,
    hip_z: T,
    hip_vz: T,
    q: &JointState<T>,
    tendon: [T; 2],
) -> LegEquations<T> {
    let geom = &params.geometry;
    let (m_abs, vel_abs, _) = params.dynamics_terms(q);
    // Knee flexion is the negated relative shank angle.
    let mass = [[m_abs[0][0], -m_abs[0][1]], [-m_abs[1][0], m_abs[1][1]]];
    let velocity = [vel_abs[0], -vel_abs[1]];

    let [m1, m2] = params.segment_masses;
    let [c1, c2] = params.com_offsets;
    let a = m1 * c1 + m2 * geom.thigh_length;
    let b = m2 * c2;
    let shank = q.q_hip - q.q_knee;
    let grad_depth = [-a * q.q_hip.sin() - b * shank.sin(), b * shank.sin()];
    let shank_rate = q.qd_hip - q.qd_knee;
    let depth_curvature = -a * q.q_hip.cos() * q.qd_hip * q.qd_hip - b * shank.cos() * shank_rate * shank_rate;

    let foot = foot_position(geom, q.q_hip, q.q_knee);
    let depth = env.penetration_at(hip_z, &foot);
    let foot_vel = foot_velocity(geom, q);
    let normal_force = if depth > T::zero() {
        // World foot height is hip_z - z, so it sinks at (z rate - hip_vz).
        let sink_rate = foot_vel[1] - hip_vz;
        (params.ground_stiffness * depth + params.ground_damping * sink_rate).max(T::zero())
    } else {
        T::zero()
    };
    // A foot sweeping backward either drags the carriage along or slips, so
    // it never meets more than the carriage's resistance. Forward sweeps
    // slide against full friction.
    let limit = params.ground_friction * normal_force;
    let limit = if foot_vel[0] < T::zero() && params.carriage_resistance > T::zero() {
        limit.min(params.carriage_resistance)
    } else {
        limit
    };
    let friction = -limit * (foot_vel[0] / params.slip_velocity).tanh();
    let jac = geom.jacobian(q.q_hip, q.q_knee);
    let g = params.gravity;
    let contact = |j: usize| jac[0][j] * friction - jac[1][j] * normal_force;
    let bias = [
        tendon[0] - params.joint_damping[0] * q.qd_hip - params.joint_stiffness[0] * (q.q_hip - params.joint_rest[0])
            + contact(0)
            - velocity[0]
            + g * grad_depth[0],
        tendon[1] - params.joint_damping[1] * q.qd_knee - params.joint_stiffness[1] * (q.q_knee - params.joint_rest[1])
            + contact(1)
            - velocity[1]
            + g * grad_depth[1],
    ];
    LegEquations {
        mass,
        bias,
        grad_depth,
        depth_curvature,
        normal_force,
    }
}

/// Solve `m * a = v` with the `locked` joints held at zero acceleration.
fn solve_leg<T: Real>(m: &[[T; 2]; 2], v: [T; 2], locked: [bool; 2]) -> [T; 2] {
    match locked {
        [false, false] => {
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            [
                (m[1][1] * v[0] - m[0][1] * v[1]) / det,
                (m[0][0] * v[1] - m[1][0] * v[0]) / det,
            ]
        }
        [true, false] => [T::zero(), v[1] / m[1][1]],
        [false, true] => [v[0] / m[0][0], T::zero()],
        [true, true] => [T::zero(); 2],
    }
}

fn dot2<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    a[0] * b[0] + a[1] * b[1]
}

/// Hip vertical acceleration and joint accelerations for one substep.
fn accelerations<T: Real>(
    params: &PlantParams<T>,
    state: &PlantState<T>,
    eqs: &[LegEquations<T>; LEGS],
    locked: &[[bool; 2]; LEGS],
) -> (T, [[T; 2]; LEGS]) {
    let total_mass = params.total_mass();
    let g = params.gravity;
    let legs_at = |hip_acc: T| -> [[T; 2]; LEGS] {
        std::array::from_fn(|leg| {
            let e = &eqs[leg];
            solve_leg(
                &e.mass,
                [e.bias[0] + e.grad_depth[0] * hip_acc, e.bias[1] + e.grad_depth[1] * hip_acc],
                locked[leg],
            )
        })
    };
    let loads: T = eqs
        .iter()
        .fold(T::zero(), |acc, e| acc + e.normal_force + e.depth_curvature);

    let resting = state.hip_z <= state.env.hip_height && state.hip_vz <= T::zero();
    if resting {
        let qdd = legs_at(T::zero());
        let reaction = eqs
            .iter()
            .zip(&qdd)
            .fold(T::zero(), |acc, (e, a)| acc + dot2(e.grad_depth, *a));
        // Force the gantry stop has to supply to keep the hip still.
        let support = total_mass * g - loads - reaction;
        if support >= T::zero() {
            return (T::zero(), qdd);
        }
    }
    // Hip free: eliminate the joint accelerations (Schur complement).
    let mut effective_mass = total_mass;
    let mut rhs = loads - total_mass * g;
    for (e, lock) in eqs.iter().zip(locked) {
        let minv_grad = solve_leg(&e.mass, e.grad_depth, *lock);
        let minv_bias = solve_leg(&e.mass, e.bias, *lock);
        effective_mass = effective_mass - dot2(e.grad_depth, minv_grad);
        rhs = rhs + dot2(e.grad_depth, minv_bias);
    }
    let hip_acc = rhs / effective_mass;
    (hip_acc, legs_at(hip_acc))
}

/// Joints resting on a stop are held there while the stop pushes back on
/// them; a joint is released once the stop would have to pull.
fn constrained_accelerations<T: Real>(
    params: &PlantParams<T>,
    state: &PlantState<T>,
    eqs: &[LegEquations<T>; LEGS],
) -> (T, [[T; 2]; LEGS]) {
    let geom = &params.geometry;
    let limits = [geom.hip_limits, geom.knee_limits];
    // +1 on the lower stop, -1 on the upper stop, 0 off the stops.
    let side: [[i8; 2]; LEGS] = std::array::from_fn(|leg| {
        let q = &state.legs[leg];
        let pos = [q.q_hip, q.q_knee];
        let vel = [q.qd_hip, q.qd_knee];
        std::array::from_fn(|j| {
            if pos[j] <= limits[j].lo && vel[j] <= T::zero() {
                1
            } else if pos[j] >= limits[j].hi && vel[j] >= T::zero() {
                -1
            } else {
                0
            }
        })
    });
    let mut locked: [[bool; 2]; LEGS] = std::array::from_fn(|leg| [side[leg][0] != 0, side[leg][1] != 0]);
    loop {
        let (hip_acc, qdd) = accelerations(params, state, eqs, &locked);
        let mut released = false;
        for leg in 0..LEGS {
            let e = &eqs[leg];
            for j in 0..2 {
                if !locked[leg][j] {
                    continue;
                }
                let applied = e.bias[j] + e.grad_depth[j] * hip_acc;
                let inertial = e.mass[j][0] * qdd[leg][0] + e.mass[j][1] * qdd[leg][1];
                let stop_force = inertial - applied;
                if stop_force * T::c(f64::from(side[leg][j])) < T::zero() {
                    locked[leg][j] = false;
                    released = true;
                }
            }
        }
        if !released {
            return (hip_acc, qdd);
        }
    }
}

fn clamp_joint<T: Real>(q: &mut T, qd: &mut T, lo: T, hi: T) {
    if *q <= lo {
        *q = lo;
        *qd = qd.max(T::zero());
    } else if *q >= hi {
        *q = hi;
        *qd = qd.min(T::zero());
    }
}

/// Advance the plant by one control interval `params.dt`.
///
/// Joint dynamics, hip lift and ground forces are integrated with
/// semi-implicit Euler over `params.substeps` substeps. PWM is held.
pub fn step<T: Real>(
    state: &PlantState<T>,
    pwm_left: [T; MOTORS],
    pwm_right: [T; MOTORS],
    params: &PlantParams<T>,
) -> Result<PlantState<T>, PlantError> {
    let h = params.substep();
    let tendon = [tendon_torques(pwm_left, params), tendon_torques(pwm_right, params)];
    let scale = params.ground_friction.min(T::one()).max(T::zero());
    let geom = &params.geometry;
    let mut next = *state;
    let start_x = state.hip_x;
    for _ in 0..params.substeps {
        let eqs: [LegEquations<T>; LEGS] = std::array::from_fn(|leg| {
            leg_equations(params, &next.env, next.hip_z, next.hip_vz, &next.legs[leg], tendon[leg])
        });
        let (hip_acc, qdd) = constrained_accelerations(params, &next, &eqs);

        next.hip_vz = next.hip_vz + h * hip_acc;
        next.hip_z = next.hip_z + h * next.hip_vz;
        if next.hip_z <= next.env.hip_height {
            next.hip_z = next.env.hip_height;
            next.hip_vz = next.hip_vz.max(T::zero());
        }

        let mut sweep = [None; LEGS];
        for leg in 0..LEGS {
            let q = &mut next.legs[leg];
            q.qdd_hip = qdd[leg][0];
            q.qdd_knee = qdd[leg][1];
            q.qd_hip = q.qd_hip + h * q.qdd_hip;
            q.qd_knee = q.qd_knee + h * q.qdd_knee;
            q.q_hip = q.q_hip + h * q.qd_hip;
            q.q_knee = q.q_knee + h * q.qd_knee;
            clamp_joint(&mut q.q_hip, &mut q.qd_hip, geom.hip_limits.lo, geom.hip_limits.hi);
            clamp_joint(&mut q.q_knee, &mut q.qd_knee, geom.knee_limits.lo, geom.knee_limits.hi);

            next.normal_force[leg] = eqs[leg].normal_force;
            next.contact[leg] = eqs[leg].normal_force > T::zero();
            let vx = foot_velocity(geom, q)[0];
            if next.contact[leg] && vx < T::zero() {
                let grip = if params.carriage_resistance > T::zero() {
                    (params.ground_friction * eqs[leg].normal_force / params.carriage_resistance).min(T::one())
                } else {
                    T::one()
                };
                sweep[leg] = Some(-vx * scale * grip);
            }
        }
        let advance = match sweep {
            [Some(a), Some(b)] => (a + b) * T::c(0.5),
            [Some(a), None] | [None, Some(a)] => a,
            [None, None] => T::zero(),
        };
        next.hip_x = next.hip_x + advance * h;
        next.displacement = next.displacement + advance * h;
    }
    next.time = state.time + params.dt;
    next.hip_vx = (next.hip_x - start_x) / params.dt;

    if !(next.hip_z.is_finite() && next.hip_vz.abs() <= params.divergence_speed) {
        return Err(PlantError::NumericalDivergence {
            time: next.time.f64(),
            detail: format!("hip vertical speed {}", next.hip_vz.f64()),
        });
    }
    for (leg, q) in next.legs.iter().enumerate() {
        let finite = q.as_features().iter().all(|v| v.is_finite());
        let speed = q.qd_hip.abs().max(q.qd_knee.abs());
        if !finite || !(speed <= params.divergence_speed) {
            return Err(PlantError::NumericalDivergence {
                time: next.time.f64(),
                detail: format!("leg {leg} joint speed {}", speed.f64()),
            });
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> PlantParams<f64> {
        PlantParams::default()
    }

    fn air() -> Environment<f64> {
        Environment::in_air(1.0)
    }

    #[test]
    fn default_params_are_valid() {
        params().validate().unwrap();
        let mut p = params();
        p.moment_arms = [[0.01, 0.0], [-0.01, 0.0], [0.02, 0.0]];
        assert!(p.validate().is_err());
        let mut p = params();
        p.dt = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn zero_pwm_gives_zero_torque() {
        assert_eq!(tendon_torques([0.0; 3], &params()), [0.0, 0.0]);
    }

    #[test]
    fn single_channel_scales_its_moment_arm_row() {
        let p = params();
        let tau = tendon_torques([255.0, 0.0, 0.0], &p);
        assert_eq!(tau, [p.moment_arms[0][0] * 255.0 * p.force_per_pwm, p.moment_arms[0][1] * 255.0 * p.force_per_pwm]);
        let tau3 = tendon_torques([0.0, 0.0, 255.0], &p);
        assert!((tau3[1] - 0.012 * 255.0 * p.force_per_pwm).abs() < 1e-15);
    }

    #[test]
    fn tendon_torques_superpose() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..127.0));
            let b: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..127.0));
            let sum: [f64; 3] = std::array::from_fn(|i| a[i] + b[i]);
            let (ta, tb, ts) = (tendon_torques(a, &p), tendon_torques(b, &p), tendon_torques(sum, &p));
            for j in 0..2 {
                assert!((ts[j] - ta[j] - tb[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn tendons_never_push() {
        let forces = tendon_forces([-10.0, 0.0, 40.0], &params());
        assert!(forces.iter().all(|&f| f >= 0.0));
        assert_eq!(forces[0], 0.0);
    }

    #[test]
    fn passive_leg_settles_and_dissipates() {
        let p = params();
        let mut state = PlantState::new(
            [JointState::at_rest(0.6, 0.9), JointState::at_rest(-0.4, 0.3)],
            air(),
        );
        let mut energies = Vec::new();
        for k in 0..2000 {
            state = step(&state, [0.0; 3], [0.0; 3], &p).unwrap();
            if k >= 100 {
                energies.push(p.mechanical_energy(&state.legs[0]) + p.mechanical_energy(&state.legs[1]));
            }
        }
        for w in energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "energy rose from {} to {}", w[0], w[1]);
        }
        assert!(*energies.last().unwrap() < 1e-6);
        for leg in &state.legs {
            assert!(leg.q_hip.abs() < 1e-3);
            assert!(leg.q_knee.abs() < 1e-3);
        }
    }

    #[test]
    fn constant_hip_flexor_matches_static_balance() {
        let p = params();
        let pwm = [80.0, 0.0, 0.0];
        let mut state = PlantState::hanging(air());
        for _ in 0..4000 {
            state = step(&state, pwm, [0.0; 3], &p).unwrap();
        }
        let q = state.legs[0];
        // Independent oracle: static torque balance with the thigh's weight at
        // its centre, the shank's weight at the knee and at its own centre,
        // and the joint springs.
        let [m1, m2] = p.segment_masses;
        let [c1, c2] = p.com_offsets;
        let [kh, kk] = p.joint_stiffness;
        let shank = q.q_hip - q.q_knee;
        let hip_load = p.gravity * ((m1 * c1 + m2 * p.geometry.thigh_length) * q.q_hip.sin() + m2 * c2 * shank.sin())
            + kh * q.q_hip;
        let tendon = tendon_torques(pwm, &p)[0];
        assert!(((tendon - hip_load) / tendon).abs() < 0.02);
        let knee_residual = p.gravity * m2 * c2 * shank.sin() - kk * q.q_knee;
        assert!(knee_residual.abs() < 1e-3, "knee out of balance: {q:?}");
        assert!(q.q_knee > 0.0 && q.q_knee < q.q_hip);
    }

    #[test]
    fn joint_limits_clamp_position_and_outward_velocity() {
        let p = params();
        let mut state = PlantState::hanging(air());
        for _ in 0..600 {
            state = step(&state, [255.0, 0.0, 255.0], [0.0; 3], &p).unwrap();
            let q = state.legs[0];
            assert!(p.geometry.within_limits(q.q_hip, q.q_knee));
        }
        let q = state.legs[0];
        assert_eq!(q.q_knee, p.geometry.knee_limits.hi);
        assert!(q.qd_knee <= 0.0);
    }

    #[test]
    fn ground_penetration_stays_below_tolerance() {
        let p = params();
        let mut worst: f64 = 0.0;
        for (i, level) in [0.0, 60.0, 120.0, 180.0, 255.0].into_iter().enumerate() {
            for hip_height in [0.36, 0.38, 0.395] {
                let env = Environment { hip_height, ground: Some(0.0) };
                let mut state = PlantState::new(
                    [JointState::at_rest(0.8, 1.5), JointState::at_rest(-0.8, 1.5)],
                    env,
                );
                for k in 0..800 {
                    // Alternate swinging the feet forward and back into the ground.
                    let on = (k / 100 + i) % 2 == 0;
                    let left = if on { [level, 0.0, 0.0] } else { [0.0, level, 0.0] };
                    let right = if on { [0.0, level, 0.0] } else { [level, 0.0, 0.0] };
                    state = step(&state, left, right, &p).unwrap();
                    for leg in 0..LEGS {
                        worst = worst.max(state.penetration(leg, &p.geometry));
                        assert!(state.normal_force[leg] >= 0.0);
                    }
                }
            }
        }
        assert!(worst <= PENETRATION_TOLERANCE, "penetration {worst}");
        assert!(worst > 0.0, "sweep never touched the ground");
    }

    #[test]
    fn no_ground_means_no_contact_and_no_travel() {
        let p = params();
        let mut state = PlantState::hanging(air());
        for k in 0..400 {
            let level = if (k / 40) % 2 == 0 { 200.0 } else { 0.0 };
            state = step(&state, [level, 0.0, 0.0], [0.0, level, 0.0], &p).unwrap();
            assert_eq!(state.contact, [false, false]);
        }
        assert_eq!(state.displacement, 0.0);
    }

    #[test]
    fn divergence_is_reported() {
        // A far too stiff ground for a single coarse substep blows up.
        let mut p = params();
        p.ground_stiffness = 1e9;
        p.substeps = 1;
        let env = Environment { hip_height: 0.395, ground: Some(0.0) };
        let mut state = PlantState::new([JointState::at_rest(0.1, 0.1); 2], env);
        let mut failed = false;
        for _ in 0..200 {
            match step(&state, [0.0; 3], [0.0; 3], &p) {
                Ok(s) => state = s,
                Err(PlantError::NumericalDivergence { .. }) => {
                    failed = true;
                    break;
                }
                Err(e) => panic!("{e}"),
            }
        }
        assert!(failed);
    }

    #[test]
    fn stepping_is_deterministic() {
        let p = params();
        let run = || {
            let mut s = PlantState::hanging(air());
            for k in 0..300 {
                let a = (k % 255) as f64;
                s = step(&s, [a, 255.0 - a, 30.0], [30.0, a, 0.0], &p).unwrap();
            }
            s
        };
        assert_eq!(run(), run());
    }
}
