//! Simulated tendon-driven biped that learns cyclical leg movements from
//! motor babbling through a small inverse-map network.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod babbling;
pub mod kinematics;
pub mod net;
pub mod plant;
pub mod scalar;

pub use scalar::Real;

pub type LegGeometry = kinematics::LegGeometry<f64>;
pub type Trajectory = kinematics::Trajectory<f64>;
pub type FootPoint = kinematics::FootPoint<f64>;
pub type JointState = kinematics::JointState<f64>;
pub type PlantParams = plant::PlantParams<f64>;
pub type PlantState = plant::PlantState<f64>;
pub type KinematicsLog = plant::KinematicsLog<f64>;
pub type TrackingOutcome = plant::TrackingOutcome<f64>;
pub type Mlp = net::Mlp<f64>;
pub type Dataset = net::Dataset<f64>;
pub type Checkpoint = net::Checkpoint<f64>;

pub type Mlp32 = net::Mlp<f32>;
pub type PlantParams32 = plant::PlantParams<f32>;
