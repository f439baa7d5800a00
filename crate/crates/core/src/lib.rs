//! Deterministic simulation core for a two-sensor line-following robot with
//! ultrasonic obstacle avoidance.
//!
//! The crate is organized around the control stack it models:
//!
//! - [`track`] — piecewise track geometry (straights and circular arcs),
//!   surface reflectance, obstacles, and ground-truth queries.
//! - [`plant`] — differential-drive kinematics with first-order motor lag and
//!   the PWM-to-speed map.
//! - [`sensor`] — virtual reflectance and ultrasonic sensors: ADC
//!   quantization, median filtering, threshold calibration, temperature
//!   compensation, and debouncing.
//! - [`control`] — the discrete PID law with anti-windup, motor mixing with
//!   clipping, and the on-off baseline controller.
//! - [`fsm`] — the five-state obstacle-avoidance supervisor.
//! - [`tuning`] — closed-loop ultimate-gain identification and the
//!   Ziegler-Nichols gain table.
//! - [`sim`] — the fixed-timestep scenario runtime producing per-tick logs.
//! - [`stats`] — summary statistics, Student/Welch t-tests, and the
//!   t-distribution evaluated without external dependencies.
//!
//! Everything is `no_std` + `alloc`; all float math goes through `libm` so a
//! given seed reproduces bit-identical runs on any platform.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod control;
pub mod fsm;
pub mod geom;
pub mod plant;
pub mod rng;
pub mod sensor;
pub mod sim;
pub mod stats;
pub mod track;
pub mod tuning;

pub use control::{MotorCommand, MotorDirection, PidGains, PidState};
pub use plant::{PlantParams, RobotGeometry, RobotState};
pub use sim::{RunStatus, ScenarioConfig, ScenarioResult, TickLog};
pub use track::Track;
