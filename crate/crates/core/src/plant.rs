//! Differential-drive plant: PWM-to-speed map, first-order motor lag, and
//! arc-exact pose integration.
//!
//! The speed map is a piecewise-linear interpolation through the measured
//! steady-state anchors (PWM 100..200), extrapolated on the neighboring slope
//! outside that span, with a dead zone below PWM 30. Pose integration uses the
//! interval-mean wheel speeds of the lag response and an exact constant-twist
//! update, so constant-speed motion is independent of sub-step size.

use crate::control::MotorCommand;
use crate::geom::Vec2;

/// Measured steady-state speed anchors: (PWM, m/s).
pub const SPEED_ANCHORS: [(f64, f64); 5] = [
    (100.0, 0.25),
    (125.0, 0.32),
    (150.0, 0.40),
    (175.0, 0.47),
    (200.0, 0.55),
];

/// PWM below which the drivetrain does not move.
pub const PWM_DEAD_ZONE: u8 = 30;

/// Wheel diameter (m); informs speed sanity checks only.
pub const WHEEL_DIAMETER: f64 = 0.065;

/// Steady-state wheel surface speed for a PWM duty value.
pub fn pwm_to_speed(pwm: u8) -> f64 {
    let p = pwm as f64;
    if pwm < PWM_DEAD_ZONE {
        return 0.0;
    }
    let first = SPEED_ANCHORS[0];
    let second = SPEED_ANCHORS[1];
    if p <= first.0 {
        let slope = (second.1 - first.1) / (second.0 - first.0);
        return first.1 - (first.0 - p) * slope;
    }
    for w in SPEED_ANCHORS.windows(2) {
        let (p0, v0) = w[0];
        let (p1, v1) = w[1];
        if p <= p1 {
            return v0 + (p - p0) / (p1 - p0) * (v1 - v0);
        }
    }
    let (p0, v0) = SPEED_ANCHORS[3];
    let (p1, v1) = SPEED_ANCHORS[4];
    v1 + (p - p1) * (v1 - v0) / (p1 - p0)
}

/// Maximum wheel speed the drive can command.
pub fn max_speed() -> f64 {
    pwm_to_speed(255)
}

/// Nearest PWM whose steady-state speed matches `v` (magnitude), clamped to
/// the valid range. Speeds below the dead-zone boundary map to zero.
pub fn speed_to_pwm(v: f64) -> u8 {
    let v = libm::fabs(v);
    let dead_edge = {
        let (p0, v0) = SPEED_ANCHORS[0];
        let (p1, v1) = SPEED_ANCHORS[1];
        v0 - (p0 - PWM_DEAD_ZONE as f64) * (v1 - v0) / (p1 - p0)
    };
    if v < dead_edge / 2.0 {
        return 0;
    }
    // Invert by scanning; the map is nondecreasing.
    let mut best = (f64::INFINITY, 0u8);
    for pwm in PWM_DEAD_ZONE..=255 {
        let err = libm::fabs(pwm_to_speed(pwm) - v);
        if err < best.0 {
            best = (err, pwm);
        }
    }
    best.1
}

/// Fixed chassis dimensions (m).
#[derive(Debug, Clone, Copy)]
pub struct RobotGeometry {
    pub wheel_base: f64,
    /// Reflectance sensor pair center, forward of the axle midpoint.
    pub sensor_forward: f64,
    /// Lateral spacing between the two reflectance sensors.
    pub sensor_spacing: f64,
    /// Ultrasonic mount point, forward of the axle midpoint.
    pub ultrasonic_forward: f64,
}

impl Default for RobotGeometry {
    /// Sensors ride at the nose of the 15x20 cm chassis: the 15 cm lead
    /// ahead of the axle gives the slow steering loop the phase advance it
    /// needs to hold the line.
    fn default() -> Self {
        RobotGeometry {
            wheel_base: 0.14,
            sensor_forward: 0.15,
            sensor_spacing: 0.03,
            ultrasonic_forward: 0.10,
        }
    }
}

/// Motor response parameters.
#[derive(Debug, Clone, Copy)]
pub struct PlantParams {
    /// First-order lag time constant (s); zero means instantaneous response.
    pub tau_motor: f64,
    /// Per-motor gain mismatch factors (1.0 = nominal).
    pub gain_left: f64,
    pub gain_right: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            tau_motor: 0.08,
            gain_left: 1.0,
            gain_right: 1.0,
        }
    }
}

/// Pose and wheel speeds; `pos` is the axle midpoint.
#[derive(Debug, Clone, Copy)]
pub struct RobotState {
    pub pos: Vec2,
    pub heading: f64,
    pub v_left: f64,
    pub v_right: f64,
    pub geometry: RobotGeometry,
}

impl RobotState {
    pub fn at(pos: Vec2, heading: f64, geometry: RobotGeometry) -> Self {
        RobotState {
            pos,
            heading,
            v_left: 0.0,
            v_right: 0.0,
            geometry,
        }
    }

    fn forward(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }

    /// Midpoint of the reflectance sensor pair: the lateral-error reference.
    pub fn sensor_mid(&self) -> Vec2 {
        self.pos + self.forward() * self.geometry.sensor_forward
    }

    /// Left reflectance sensor position.
    pub fn ir_left(&self) -> Vec2 {
        self.sensor_mid() + self.forward().perp_left() * (self.geometry.sensor_spacing / 2.0)
    }

    /// Right reflectance sensor position.
    pub fn ir_right(&self) -> Vec2 {
        self.sensor_mid() - self.forward().perp_left() * (self.geometry.sensor_spacing / 2.0)
    }

    /// Ultrasonic transducer position.
    pub fn ultrasonic_mount(&self) -> Vec2 {
        self.pos + self.forward() * self.geometry.ultrasonic_forward
    }
}

/// Advance the plant by `dt` under a motor command.
///
/// Wheel speeds relax exponentially toward their signed targets; the pose then
/// advances along a constant-twist arc using the interval-mean speeds, which
/// reduces to the plain arc update once the wheels settle. Deterministic:
/// identical inputs yield bit-identical states.
pub fn step_dynamics(state: &mut RobotState, cmd: &MotorCommand, params: &PlantParams, dt: f64) {
    debug_assert!(dt > 0.0 && dt <= 0.05);
    let target_l = cmd.dir_left.sign() * pwm_to_speed(cmd.pwm_left) * params.gain_left;
    let target_r = cmd.dir_right.sign() * pwm_to_speed(cmd.pwm_right) * params.gain_right;

    let (k, mean_frac) = if params.tau_motor > 0.0 {
        let k = 1.0 - libm::exp(-dt / params.tau_motor);
        (k, params.tau_motor * k / dt)
    } else {
        (1.0, 0.0)
    };
    let mean_l = target_l + (state.v_left - target_l) * mean_frac;
    let mean_r = target_r + (state.v_right - target_r) * mean_frac;
    state.v_left += (target_l - state.v_left) * k;
    state.v_right += (target_r - state.v_right) * k;

    let v = (mean_l + mean_r) / 2.0;
    let omega = (mean_r - mean_l) / state.geometry.wheel_base;
    let theta = state.heading;
    if libm::fabs(omega) < 1e-9 {
        state.pos = state.pos + Vec2::from_angle(theta) * (v * dt);
    } else {
        let r = v / omega;
        let theta1 = theta + omega * dt;
        state.pos.x += r * (libm::sin(theta1) - libm::sin(theta));
        state.pos.y += r * (libm::cos(theta) - libm::cos(theta1));
        state.heading = theta1;
    }
}
