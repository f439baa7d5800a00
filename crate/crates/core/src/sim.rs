//! Fixed-timestep scenario runtime.
//!
//! One control tick is 50 ms: sensors are read at the tick start using the
//! pose at that instant, the supervisor arbitrates, the controller (or an
//! open-loop maneuver) produces a motor command, and the plant integrates at a
//! 1 ms sub-step until the next tick. All randomness comes from substreams of
//! a single seed labeled per source, so identical inputs produce bit-identical
//! logs. A scenario ends at its configured duration or as soon as the robot
//! leaves the 1 m corridor around the track.

use alloc::string::String;
use alloc::vec::Vec;

use crate::control::{onoff_step, MotorCommand, PidGains, PidState};
use crate::fsm::{AvoidPhase, Directive, FsmInputs, FsmParams, Mode, SupervisorState, Transition};
use crate::plant::{step_dynamics, PlantParams, RobotGeometry, RobotState};
use crate::rng::{derive_seed, Rng};
use crate::sensor::{
    over_threshold, read_ir, DebounceState, IrSensorModel, MedianFilter, SensorFrame,
    UltrasonicModel,
};
use crate::track::Track;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Pid,
    OnOff,
}

/// Where and how the robot starts, relative to the path.
#[derive(Debug, Clone, Copy)]
pub struct StartCondition {
    /// Arclength along the track at which the axle midpoint starts.
    pub path_s: f64,
    /// Fixed lateral displacement, positive to the left of travel (m).
    pub lateral_offset: f64,
    /// Per-run Gaussian jitter added to the lateral offset (m).
    pub offset_jitter: f64,
    /// Fixed heading error relative to the path tangent (rad).
    pub heading_error: f64,
    /// Per-run Gaussian jitter added to the heading error (rad).
    pub heading_jitter: f64,
}

impl Default for StartCondition {
    fn default() -> Self {
        StartCondition {
            path_s: 0.1,
            lateral_offset: 0.015,
            offset_jitter: 0.003,
            heading_error: 0.0,
            heading_jitter: 0.02,
        }
    }
}

/// Jitter draws are clipped to this many sigma so every start stays a
/// physically placeable pose.
pub const START_JITTER_CLIP: f64 = 2.5;

/// Everything a scenario needs besides the track.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub controller: ControllerKind,
    pub gains: PidGains,
    pub base_pwm: u8,
    pub onoff_turn_pwm: u8,
    pub plant: PlantParams,
    pub geometry: RobotGeometry,
    pub ir: IrSensorModel,
    pub threshold_left: u16,
    pub threshold_right: u16,
    pub ultrasonic: UltrasonicModel,
    pub debounce_threshold: f64,
    pub debounce_required: u8,
    pub fsm_enabled: bool,
    pub fsm: FsmParams,
    pub start: StartCondition,
    pub duration: f64,
    pub substep: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    /// The working simulation profile: plant-calibrated gains and an on-off
    /// turn differential sized for the 20 Hz loop. The reference firmware
    /// values (kp 4.8, ki 22, kd 0.18, turn 60) stay available through
    /// configuration but do not hold this plant on the line.
    fn default() -> Self {
        ScenarioConfig {
            controller: ControllerKind::Pid,
            gains: PidGains::plant_tuned(),
            base_pwm: 150,
            onoff_turn_pwm: 10,
            plant: PlantParams::default(),
            geometry: RobotGeometry::default(),
            ir: IrSensorModel::default(),
            threshold_left: 450,
            threshold_right: 450,
            ultrasonic: UltrasonicModel::default(),
            debounce_threshold: 0.20,
            debounce_required: 3,
            fsm_enabled: true,
            fsm: FsmParams::default(),
            start: StartCondition::default(),
            duration: 30.0,
            substep: 0.001,
            seed: 42,
        }
    }
}

/// One tick of the log; every field is populated every tick.
#[derive(Debug, Clone, Copy)]
pub struct TickLog {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// Signed lateral error at the sensor midpoint (cm).
    pub lateral_error_cm: f64,
    pub raw_left: u16,
    pub raw_right: u16,
    pub filt_left: u16,
    pub filt_right: u16,
    pub bit_left: bool,
    pub bit_right: bool,
    pub ultrasonic: Option<f64>,
    pub mode: Mode,
    pub avoid_phase: Option<AvoidPhase>,
    /// PWM with direction folded into the sign.
    pub pwm_left: i16,
    pub pwm_right: i16,
    pub pid_error: f64,
    pub pid_integral: f64,
    pub pid_u: f64,
}

/// Timestamped supervisor mode change.
#[derive(Debug, Clone, Copy)]
pub struct TransitionEvent {
    pub t: f64,
    pub from: Mode,
    pub to: Mode,
    pub trigger: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Completed,
    /// The robot left the 1 m corridor at time `t`; the log stops there.
    OffTrack { t: f64 },
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub ticks: Vec<TickLog>,
    pub events: Vec<TransitionEvent>,
    pub status: RunStatus,
}

impl TickLog {
    pub fn csv_header() -> &'static str {
        "t,x,y,heading,lateral_error_cm,raw_left,raw_right,filt_left,filt_right,\
bit_left,bit_right,ultrasonic_m,mode,avoid_phase,pwm_left,pwm_right,\
pid_error,pid_integral,pid_u"
    }

    /// Append one CSV row (floats at 6 significant digits).
    pub fn write_csv_row(&self, out: &mut String) {
        use core::fmt::Write;
        let g = fmt_sig;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            g(self.t),
            g(self.x),
            g(self.y),
            g(self.heading),
            g(self.lateral_error_cm),
            self.raw_left,
            self.raw_right,
            self.filt_left,
            self.filt_right,
            self.bit_left as u8,
            self.bit_right as u8,
            match self.ultrasonic {
                Some(d) => g(d),
                None => String::from("none"),
            },
            self.mode.name(),
            match self.avoid_phase {
                Some(p) => p.name(),
                None => "-",
            },
            self.pwm_left,
            self.pwm_right,
            g(self.pid_error),
            g(self.pid_integral),
            g(self.pid_u),
        );
        out.push('\n');
    }
}

/// Format a float with 6 significant digits, plain decimal where reasonable.
pub fn fmt_sig(x: f64) -> String {
    use core::fmt::Write;
    let mut s = String::new();
    if x == 0.0 {
        let _ = write!(s, "0.00000");
        return s;
    }
    let mag = libm::floor(libm::log10(libm::fabs(x)));
    if !(-4.0..6.0).contains(&mag) {
        let _ = write!(s, "{:.5e}", x);
        return s;
    }
    let decimals = (5.0 - mag).max(0.0) as usize;
    let _ = write!(s, "{:.*}", decimals, x);
    s
}

/// Run a scenario, collecting every tick.
pub fn run_scenario(track: &Track, cfg: &ScenarioConfig) -> ScenarioResult {
    let mut ticks = Vec::new();
    let mut events = Vec::new();
    let status = run_scenario_streaming(track, cfg, |t| ticks.push(*t), |e| events.push(*e));
    ScenarioResult {
        ticks,
        events,
        status,
    }
}

/// Streaming variant of [`run_scenario`] for long soak runs: observers see
/// each tick and transition without the runtime retaining them.
pub fn run_scenario_streaming(
    track: &Track,
    cfg: &ScenarioConfig,
    mut on_tick: impl FnMut(&TickLog),
    mut on_event: impl FnMut(&TransitionEvent),
) -> RunStatus {
    let mut rng_ir_left = Rng::new(derive_seed(cfg.seed, "ir_left"));
    let mut rng_ir_right = Rng::new(derive_seed(cfg.seed, "ir_right"));
    let mut rng_us = Rng::new(derive_seed(cfg.seed, "us"));
    let mut rng_start = Rng::new(derive_seed(cfg.seed, "start"));

    let (anchor, tangent) = track.point_at(cfg.start.path_s);
    let clipped = |rng: &mut Rng, sigma: f64| {
        let bound = START_JITTER_CLIP * sigma;
        rng.normal(0.0, sigma).clamp(-bound, bound)
    };
    let offset = cfg.start.lateral_offset + clipped(&mut rng_start, cfg.start.offset_jitter);
    let heading = tangent
        + cfg.start.heading_error
        + clipped(&mut rng_start, cfg.start.heading_jitter);
    let left = crate::geom::Vec2::from_angle(tangent).perp_left();
    let mut robot = RobotState::at(anchor + left * offset, heading, cfg.geometry);

    let mut filter_left = MedianFilter::new();
    let mut filter_right = MedianFilter::new();
    let mut debounce = DebounceState::new(cfg.debounce_threshold, cfg.debounce_required);
    let mut pid = PidState::new(cfg.base_pwm);
    let mut fsm = SupervisorState::new();

    let t_s = cfg.gains.t_s;
    let n_ticks = libm::round(cfg.duration / t_s) as usize;
    let substeps = libm::round(t_s / cfg.substep).max(1.0) as usize;
    let sub_dt = t_s / substeps as f64;

    for k in 0..n_ticks {
        let t = k as f64 * t_s;

        let lateral = match track.lateral_error(robot.sensor_mid(), robot.heading) {
            Some(e) => e,
            None => return RunStatus::OffTrack { t },
        };

        let frame = sense(track, &robot, cfg, t, &mut filter_left, &mut filter_right, &mut rng_ir_left, &mut rng_ir_right, &mut rng_us);
        let confirmed = debounce.update(frame.distance);
        let line_seen = frame.bit_left || frame.bit_right;

        let mut pid_ran = false;
        let mut pid_error = 0.0;
        let mut pid_u = 0.0;
        let mut controller_cmd = MotorCommand::stop();
        let mut lost = false;
        let mut left_follow = false;

        let run_controller = |pid: &mut PidState, pid_error: &mut f64, pid_u: &mut f64| {
            match cfg.controller {
                ControllerKind::Pid => {
                    // The weighted position error must steer toward the line
                    // under this drive convention, so the controller's "left"
                    // input reads the right-hand photodiode.
                    let (error, counter) = crate::control::compute_error(
                        frame.bit_right,
                        frame.bit_left,
                        pid.lost_counter,
                    );
                    pid.lost_counter = counter;
                    let u = pid.pid_step(&cfg.gains, error);
                    *pid_error = error;
                    *pid_u = u;
                    (
                        crate::control::mix_motors(pid.v_base, u),
                        pid.lost_counter > crate::control::LOST_TICKS,
                    )
                }
                ControllerKind::OnOff => {
                    let cmd = onoff_step(
                        frame.bit_left,
                        frame.bit_right,
                        pid.v_base,
                        cfg.onoff_turn_pwm,
                    );
                    let (_, counter) = crate::control::compute_error(
                        frame.bit_left,
                        frame.bit_right,
                        pid.lost_counter,
                    );
                    pid.lost_counter = counter;
                    (cmd, pid.lost_counter > crate::control::LOST_TICKS)
                }
            }
        };

        let (cmd, mode, phase) = if cfg.fsm_enabled {
            if fsm.mode == Mode::Follow {
                let (c, l) = run_controller(&mut pid, &mut pid_error, &mut pid_u);
                controller_cmd = c;
                lost = l;
                pid_ran = true;
            }
            let inputs = FsmInputs {
                debounce_confirmed: confirmed,
                distance: frame.distance,
                line_seen,
                lost,
            };
            let was = fsm.mode;
            let (directive, transition) = fsm.step(&inputs, &cfg.fsm, t_s);
            if let Some(Transition { from, to, trigger }) = transition {
                on_event(&TransitionEvent {
                    t,
                    from,
                    to,
                    trigger,
                });
            }
            let cmd = match directive {
                Directive::FollowLine => {
                    if !pid_ran {
                        // Re-entered FOLLOW this tick; start clean.
                        pid.reset();
                        let (c, _) = run_controller(&mut pid, &mut pid_error, &mut pid_u);
                        controller_cmd = c;
                    }
                    controller_cmd
                }
                Directive::Hold => MotorCommand::stop(),
                Directive::Maneuver(m) => m,
            };
            left_follow = was == Mode::Follow && fsm.mode != Mode::Follow;
            let phase = (fsm.mode == Mode::Avoid).then_some(fsm.avoid_phase);
            (cmd, fsm.mode, phase)
        } else {
            let (c, _) = run_controller(&mut pid, &mut pid_error, &mut pid_u);
            (c, Mode::Follow, None)
        };

        let log = TickLog {
            t,
            x: robot.pos.x,
            y: robot.pos.y,
            heading: robot.heading,
            lateral_error_cm: lateral,
            raw_left: frame.raw_left,
            raw_right: frame.raw_right,
            filt_left: frame.filt_left,
            filt_right: frame.filt_right,
            bit_left: frame.bit_left,
            bit_right: frame.bit_right,
            ultrasonic: frame.distance,
            mode,
            avoid_phase: phase,
            pwm_left: cmd.signed_left(),
            pwm_right: cmd.signed_right(),
            pid_error,
            pid_integral: pid.integral,
            pid_u,
        };
        on_tick(&log);

        if left_follow {
            pid.reset();
        }
        for _ in 0..substeps {
            step_dynamics(&mut robot, &cmd, &cfg.plant, sub_dt);
        }
    }
    RunStatus::Completed
}

#[allow(clippy::too_many_arguments)]
fn sense(
    track: &Track,
    robot: &RobotState,
    cfg: &ScenarioConfig,
    t: f64,
    filter_left: &mut MedianFilter,
    filter_right: &mut MedianFilter,
    rng_left: &mut Rng,
    rng_right: &mut Rng,
    rng_us: &mut Rng,
) -> SensorFrame {
    let raw_left = read_ir(&cfg.ir, track.reflectance_at(robot.ir_left()), rng_left);
    let raw_right = read_ir(&cfg.ir, track.reflectance_at(robot.ir_right()), rng_right);
    let filt_left = filter_left.push(raw_left);
    let filt_right = filter_right.push(raw_right);
    let distance = cfg.ultrasonic.measure(
        track,
        robot.ultrasonic_mount(),
        robot.heading,
        t,
        rng_us,
    );
    SensorFrame {
        raw_left,
        raw_right,
        filt_left,
        filt_right,
        bit_left: over_threshold(filt_left, cfg.threshold_left),
        bit_right: over_threshold(filt_right, cfg.threshold_right),
        distance,
    }
}

/// Root-mean-square of the logged lateral error over [from_t, to_t).
pub fn rmse(ticks: &[TickLog], from_t: f64, to_t: f64) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for tick in ticks {
        if tick.t >= from_t && tick.t < to_t {
            acc += tick.lateral_error_cm * tick.lateral_error_cm;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        libm::sqrt(acc / n as f64)
    }
}
