//! Five-state obstacle-avoidance supervisor.
//!
//! FOLLOW delegates to the line controller. Three debounced ultrasonic
//! readings below 20 cm enter DETECT, two further confirmations enter AVOID,
//! which runs the fixed open-loop maneuver (stop 1 s, reverse 0.5 s, turn 90
//! degrees left 1 s, forward 10 cm by commanded odometry) and loops while the
//! obstacle persists. RECOVER spirals outward for at most 5 s looking for the
//! line; SEARCH rotates in place until the line is seen. The step function is
//! pure in (state, inputs, dt), so replaying a logged input trace reproduces
//! the state trace bit-exactly.

use crate::control::{MotorCommand, MotorDirection};
use crate::plant::pwm_to_speed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Follow,
    Detect,
    Avoid,
    Recover,
    Search,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Follow => "FOLLOW",
            Mode::Detect => "DETECT",
            Mode::Avoid => "AVOID",
            Mode::Recover => "RECOVER",
            Mode::Search => "SEARCH",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvoidPhase {
    Stop,
    Reverse,
    Turn,
    Forward,
}

impl AvoidPhase {
    pub fn name(self) -> &'static str {
        match self {
            AvoidPhase::Stop => "stop",
            AvoidPhase::Reverse => "reverse",
            AvoidPhase::Turn => "turn",
            AvoidPhase::Forward => "forward",
        }
    }
}

/// Slack applied to phase-duration comparisons so accumulated tick times that
/// land a few ulps under a boundary still advance on the expected tick.
const TIME_EPS: f64 = 1e-9;

/// Supervisor tuning knobs. Durations come from the maneuver definition; the
/// turn PWM pair is calibrated against the default plant so the 1 s turn
/// sweeps 90 degrees.
#[derive(Debug, Clone, Copy)]
pub struct FsmParams {
    pub detect_threshold: f64,
    /// Consecutive DETECT confirmations required to commit to AVOID.
    pub detect_confirm: u8,
    pub stop_duration: f64,
    pub reverse_duration: f64,
    pub turn_duration: f64,
    pub reverse_pwm: u8,
    pub turn_pwm_left: u8,
    pub turn_pwm_right: u8,
    pub forward_pwm: u8,
    /// Commanded-odometry distance for the AVOID forward leg (m).
    pub forward_distance: f64,
    pub search_pwm: u8,
    pub recover_timeout: f64,
    pub spiral_start_radius: f64,
    pub spiral_end_radius: f64,
    pub spiral_pwm: u8,
    /// Wheel base assumed when converting spiral turn radii to wheel speeds.
    pub wheel_base: f64,
}

impl Default for FsmParams {
    fn default() -> Self {
        FsmParams {
            detect_threshold: 0.20,
            detect_confirm: 2,
            stop_duration: 1.0,
            reverse_duration: 0.5,
            turn_duration: 1.0,
            reverse_pwm: 120,
            turn_pwm_left: 67,
            turn_pwm_right: 149,
            forward_pwm: 150,
            forward_distance: 0.10,
            search_pwm: 100,
            recover_timeout: 5.0,
            spiral_start_radius: 0.05,
            spiral_end_radius: 0.30,
            spiral_pwm: 120,
            wheel_base: 0.14,
        }
    }
}

/// What the supervisor wants actuated this tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Directive {
    /// Normal line following; the PID (or baseline) command applies.
    FollowLine,
    /// Hold position while confirming a detection.
    Hold,
    /// Open-loop maneuver command.
    Maneuver(MotorCommand),
}

/// Mode-change event for the transition log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub from: Mode,
    pub to: Mode,
    pub trigger: &'static str,
}

/// Per-tick supervisor inputs, all total.
#[derive(Debug, Clone, Copy)]
pub struct FsmInputs {
    /// Debounced obstacle confirmation (three consecutive below-threshold).
    pub debounce_confirmed: bool,
    /// This tick's ultrasonic reading.
    pub distance: Option<f64>,
    /// Either line bit set after filtering.
    pub line_seen: bool,
    /// Lost-line guard from the controller.
    pub lost: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SupervisorState {
    pub mode: Mode,
    /// Seconds inside the current AVOID phase; resets on every phase entry.
    pub phase_clock: f64,
    pub avoid_phase: AvoidPhase,
    pub detect_hits: u8,
    pub recover_elapsed: f64,
    /// Instantaneous spiral turn radius while recovering (m).
    pub spiral_radius: f64,
}

impl SupervisorState {
    pub fn new() -> Self {
        SupervisorState {
            mode: Mode::Follow,
            phase_clock: 0.0,
            avoid_phase: AvoidPhase::Stop,
            detect_hits: 0,
            recover_elapsed: 0.0,
            spiral_radius: 0.0,
        }
    }

    fn enter_avoid(&mut self) {
        self.mode = Mode::Avoid;
        self.avoid_phase = AvoidPhase::Stop;
        self.phase_clock = 0.0;
    }

    /// Advance one control tick. Returns the actuation directive and the
    /// mode transition taken this tick, if any.
    pub fn step(
        &mut self,
        inputs: &FsmInputs,
        params: &FsmParams,
        dt: f64,
    ) -> (Directive, Option<Transition>) {
        let from = self.mode;
        let mut trigger = "";
        match self.mode {
            Mode::Follow => {
                if inputs.debounce_confirmed {
                    self.mode = Mode::Detect;
                    self.detect_hits = 0;
                    trigger = "obstacle_debounced";
                } else if inputs.lost {
                    self.mode = Mode::Search;
                    trigger = "line_lost";
                }
            }
            Mode::Detect => {
                let below = matches!(inputs.distance, Some(d) if d < params.detect_threshold);
                if below {
                    self.detect_hits += 1;
                    if self.detect_hits >= params.detect_confirm {
                        self.enter_avoid();
                        trigger = "obstacle_confirmed";
                    }
                } else {
                    self.mode = Mode::Follow;
                    trigger = "detect_cleared";
                }
            }
            Mode::Avoid => {
                self.phase_clock += dt;
                match self.avoid_phase {
                    AvoidPhase::Stop => {
                        if self.phase_clock + TIME_EPS >= params.stop_duration {
                            self.avoid_phase = AvoidPhase::Reverse;
                            self.phase_clock = 0.0;
                        }
                    }
                    AvoidPhase::Reverse => {
                        if self.phase_clock + TIME_EPS >= params.reverse_duration {
                            self.avoid_phase = AvoidPhase::Turn;
                            self.phase_clock = 0.0;
                        }
                    }
                    AvoidPhase::Turn => {
                        if self.phase_clock + TIME_EPS >= params.turn_duration {
                            self.avoid_phase = AvoidPhase::Forward;
                            self.phase_clock = 0.0;
                        }
                    }
                    AvoidPhase::Forward => {
                        let duration =
                            params.forward_distance / pwm_to_speed(params.forward_pwm).max(1e-6);
                        if self.phase_clock + TIME_EPS >= duration {
                            let persists = matches!(
                                inputs.distance,
                                Some(d) if d < params.detect_threshold
                            );
                            if persists {
                                // Obstacle still there: run the maneuver again.
                                self.enter_avoid();
                            } else {
                                self.mode = Mode::Recover;
                                self.recover_elapsed = 0.0;
                                self.spiral_radius = params.spiral_start_radius;
                                trigger = "avoid_complete";
                            }
                        }
                    }
                }
            }
            Mode::Recover => {
                self.recover_elapsed += dt;
                self.spiral_radius = spiral_radius(self.recover_elapsed, params);
                if inputs.line_seen {
                    self.mode = Mode::Follow;
                    trigger = "line_reacquired";
                } else if self.recover_elapsed + TIME_EPS >= params.recover_timeout {
                    self.mode = Mode::Search;
                    trigger = "recover_timeout";
                }
            }
            Mode::Search => {
                if inputs.line_seen {
                    self.mode = Mode::Follow;
                    trigger = "line_reacquired";
                }
            }
        }

        let directive = match self.mode {
            Mode::Follow => Directive::FollowLine,
            Mode::Detect => Directive::Hold,
            Mode::Avoid => Directive::Maneuver(self.avoid_command(params)),
            Mode::Recover => Directive::Maneuver(spiral_command(self.recover_elapsed, params)),
            Mode::Search => Directive::Maneuver(search_command(params)),
        };
        let transition = (self.mode != from).then_some(Transition {
            from,
            to: self.mode,
            trigger,
        });
        (directive, transition)
    }

    fn avoid_command(&self, params: &FsmParams) -> MotorCommand {
        match self.avoid_phase {
            AvoidPhase::Stop => MotorCommand::stop(),
            AvoidPhase::Reverse => MotorCommand {
                pwm_left: params.reverse_pwm,
                pwm_right: params.reverse_pwm,
                dir_left: MotorDirection::Reverse,
                dir_right: MotorDirection::Reverse,
            },
            AvoidPhase::Turn => {
                MotorCommand::forward(params.turn_pwm_left, params.turn_pwm_right)
            }
            AvoidPhase::Forward => {
                MotorCommand::forward(params.forward_pwm, params.forward_pwm)
            }
        }
    }
}

impl Default for SupervisorState {
    fn default() -> Self {
        SupervisorState::new()
    }
}

/// Spiral turn radius at `elapsed` seconds into RECOVER: grows linearly from
/// the start radius to the end radius over the recover timeout.
pub fn spiral_radius(elapsed: f64, params: &FsmParams) -> f64 {
    let frac = (elapsed / params.recover_timeout).clamp(0.0, 1.0);
    params.spiral_start_radius
        + frac * (params.spiral_end_radius - params.spiral_start_radius)
}

/// Differential command tracing the recovery spiral: constant forward speed,
/// turn radius from [`spiral_radius`]. The spiral curls clockwise, back toward
/// the line side after the fixed left avoidance turn.
pub fn spiral_command(elapsed: f64, params: &FsmParams) -> MotorCommand {
    let v = pwm_to_speed(params.spiral_pwm);
    let radius = spiral_radius(elapsed, params);
    let omega = v / radius; // magnitude; clockwise turn
    let half_base = params.wheel_base / 2.0;
    let v_left = v + omega * half_base;
    let v_right = v - omega * half_base;
    signed_speeds_to_command(v_left, v_right)
}

/// Rotate in place scanning for the line (left wheel reversed).
pub fn search_command(params: &FsmParams) -> MotorCommand {
    MotorCommand {
        pwm_left: params.search_pwm,
        pwm_right: params.search_pwm,
        dir_left: MotorDirection::Reverse,
        dir_right: MotorDirection::Forward,
    }
}

fn signed_speeds_to_command(v_left: f64, v_right: f64) -> MotorCommand {
    let dir = |v: f64| {
        if v >= 0.0 {
            MotorDirection::Forward
        } else {
            MotorDirection::Reverse
        }
    };
    MotorCommand {
        pwm_left: crate::plant::speed_to_pwm(v_left),
        pwm_right: crate::plant::speed_to_pwm(v_right),
        dir_left: dir(v_left),
        dir_right: dir(v_right),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: f64 = 0.05;

    fn quiet_inputs() -> FsmInputs {
        FsmInputs {
            debounce_confirmed: false,
            distance: None,
            line_seen: true,
            lost: false,
        }
    }

    #[test]
    fn follow_to_detect_on_debounce() {
        let params = FsmParams::default();
        let mut fsm = SupervisorState::new();
        let inputs = FsmInputs {
            debounce_confirmed: true,
            distance: Some(0.15),
            ..quiet_inputs()
        };
        let (directive, transition) = fsm.step(&inputs, &params, DT);
        assert_eq!(fsm.mode, Mode::Detect);
        assert_eq!(directive, Directive::Hold);
        assert_eq!(transition.unwrap().trigger, "obstacle_debounced");
    }

    #[test]
    fn detect_clears_on_far_sample() {
        let params = FsmParams::default();
        let mut fsm = SupervisorState::new();
        fsm.mode = Mode::Detect;
        let inputs = FsmInputs {
            distance: Some(0.25),
            ..quiet_inputs()
        };
        let (directive, transition) = fsm.step(&inputs, &params, DT);
        assert_eq!(fsm.mode, Mode::Follow);
        assert_eq!(directive, Directive::FollowLine);
        assert_eq!(transition.unwrap().trigger, "detect_cleared");
    }

    #[test]
    fn detect_commits_after_two_hits() {
        let params = FsmParams::default();
        let mut fsm = SupervisorState::new();
        fsm.mode = Mode::Detect;
        let near = FsmInputs {
            distance: Some(0.12),
            ..quiet_inputs()
        };
        let (_, t1) = fsm.step(&near, &params, DT);
        assert_eq!(fsm.mode, Mode::Detect);
        assert!(t1.is_none());
        let (_, t2) = fsm.step(&near, &params, DT);
        assert_eq!(fsm.mode, Mode::Avoid);
        assert_eq!(t2.unwrap().trigger, "obstacle_confirmed");
    }

    #[test]
    fn avoid_phase_timeline() {
        let params = FsmParams::default();
        let mut fsm = SupervisorState::new();
        fsm.enter_avoid();
        let inputs = FsmInputs {
            distance: None,
            line_seen: false,
            ..quiet_inputs()
        };
        let mut phases = alloc::vec::Vec::new();
        let mut ticks = 0;
        while fsm.mode == Mode::Avoid && ticks < 200 {
            phases.push(fsm.avoid_phase);
            fsm.step(&inputs, &params, DT);
            ticks += 1;
        }
        let count = |p: AvoidPhase| phases.iter().filter(|&&x| x == p).count();
        assert_eq!(count(AvoidPhase::Stop), 20); // 1.0 s
        assert_eq!(count(AvoidPhase::Reverse), 10); // 0.5 s
        assert_eq!(count(AvoidPhase::Turn), 20); // 1.0 s
        assert_eq!(count(AvoidPhase::Forward), 5); // 0.10 m at 0.40 m/s
        assert_eq!(fsm.mode, Mode::Recover);
    }

    #[test]
    fn avoid_loops_while_obstacle_persists() {
        let params = FsmParams::default();
        let mut fsm = SupervisorState::new();
        fsm.enter_avoid();
        let blocked = FsmInputs {
            distance: Some(0.15),
            line_seen: false,
            ..quiet_inputs()
        };
        for _ in 0..56 {
            fsm.step(&blocked, &params, DT);
        }
        // One full maneuver has elapsed and the obstacle is still there.
        assert_eq!(fsm.mode, Mode::Avoid);
        assert_eq!(fsm.avoid_phase, AvoidPhase::Stop);
    }

    #[test]
    fn recover_timeout_to_search() {
        let params = FsmParams::default();
        let mut fsm = SupervisorState::new();
        fsm.mode = Mode::Recover;
        fsm.recover_elapsed = 0.0;
        let dark = FsmInputs {
            line_seen: false,
            ..quiet_inputs()
        };
        let mut steps = 0;
        while fsm.mode == Mode::Recover && steps < 200 {
            fsm.step(&dark, &params, DT);
            steps += 1;
        }
        assert_eq!(fsm.mode, Mode::Search);
        assert_eq!(steps, 100); // 5.0 s at 50 ms
    }

    #[test]
    fn recover_and_search_reacquire() {
        let params = FsmParams::default();
        let mut fsm = SupervisorState::new();
        fsm.mode = Mode::Recover;
        let lit = quiet_inputs();
        let (d, t) = fsm.step(&lit, &params, DT);
        assert_eq!(fsm.mode, Mode::Follow);
        assert_eq!(d, Directive::FollowLine);
        assert_eq!(t.unwrap().trigger, "line_reacquired");

        let mut fsm = SupervisorState::new();
        fsm.mode = Mode::Search;
        let (_, t) = fsm.step(&lit, &params, DT);
        assert_eq!(fsm.mode, Mode::Follow);
        assert_eq!(t.unwrap().trigger, "line_reacquired");
    }

    #[test]
    fn follow_to_search_on_lost() {
        let params = FsmParams::default();
        let mut fsm = SupervisorState::new();
        let inputs = FsmInputs {
            lost: true,
            line_seen: false,
            ..quiet_inputs()
        };
        let (d, t) = fsm.step(&inputs, &params, DT);
        assert_eq!(fsm.mode, Mode::Search);
        assert_eq!(t.unwrap().trigger, "line_lost");
        match d {
            Directive::Maneuver(cmd) => {
                assert_eq!(cmd.pwm_left, 100);
                assert_eq!(cmd.dir_left, MotorDirection::Reverse);
                assert_eq!(cmd.dir_right, MotorDirection::Forward);
            }
            other => panic!("expected search maneuver, got {other:?}"),
        }
    }

    #[test]
    fn turn_phase_sweeps_ninety_degrees() {
        // The TURN maneuver is calibrated against the default plant: with
        // wheels settled in reverse, one second of (67, 149) sweeps 90
        // degrees of heading.
        use crate::plant::{pwm_to_speed, step_dynamics, PlantParams, RobotGeometry, RobotState};
        let params = FsmParams::default();
        let plant = PlantParams::default();
        let mut robot = RobotState::at(crate::geom::Vec2::ZERO, 0.0, RobotGeometry::default());
        robot.v_left = -pwm_to_speed(params.reverse_pwm);
        robot.v_right = -pwm_to_speed(params.reverse_pwm);
        let cmd = MotorCommand::forward(params.turn_pwm_left, params.turn_pwm_right);
        for _ in 0..1000 {
            step_dynamics(&mut robot, &cmd, &plant, 0.001);
        }
        let quarter = core::f64::consts::FRAC_PI_2;
        assert!(
            (robot.heading - quarter).abs() < 0.01,
            "turn swept {} rad, wanted {}",
            robot.heading,
            quarter
        );
    }

    #[test]
    fn spiral_radius_profile() {
        let params = FsmParams::default();
        assert_eq!(spiral_radius(0.0, &params), 0.05);
        assert!((spiral_radius(2.5, &params) - 0.175).abs() < 1e-12);
        assert_eq!(spiral_radius(5.0, &params), 0.30);
        assert_eq!(spiral_radius(9.0, &params), 0.30);
    }

    #[test]
    fn spiral_command_turns_clockwise() {
        let params = FsmParams::default();
        let cmd = spiral_command(2.5, &params);
        let vl = cmd.dir_left.sign() * pwm_to_speed(cmd.pwm_left);
        let vr = cmd.dir_right.sign() * pwm_to_speed(cmd.pwm_right);
        assert!(vl > vr, "clockwise needs the left wheel faster: {vl} vs {vr}");
        // Commanded turn radius approximates the profile despite PWM
        // quantization.
        let radius = 0.07 * (vl + vr) / (vl - vr);
        assert!((radius - 0.175).abs() < 0.05, "{radius}");
    }

    #[test]
    fn replay_is_bit_exact() {
        let params = FsmParams::default();
        let mut rng = crate::rng::Rng::new(8);
        let mut trace = alloc::vec::Vec::new();
        for _ in 0..500 {
            trace.push(FsmInputs {
                debounce_confirmed: rng.below(10) == 0,
                distance: if rng.below(2) == 0 {
                    Some(rng.next_f64())
                } else {
                    None
                },
                line_seen: rng.below(3) != 0,
                lost: rng.below(20) == 0,
            });
        }
        let run = |trace: &[FsmInputs]| {
            let mut fsm = SupervisorState::new();
            let mut modes = alloc::vec::Vec::new();
            for inputs in trace {
                fsm.step(inputs, &params, DT);
                modes.push((fsm.mode, fsm.avoid_phase, fsm.phase_clock.to_bits()));
            }
            modes
        };
        assert_eq!(run(&trace), run(&trace));
    }
}
