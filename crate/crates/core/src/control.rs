//! Discrete PID line-following control and the on-off baseline.
//!
//! The control law runs at a fixed 50 ms period: a weighted position error is
//! formed from the two binarized reflectance bits, the PID accumulates it with
//! the integral clamped to +/-50, and the output is mixed into the two motor
//! PWM channels with clipping to [0, 255].

/// Wheel drive direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotorDirection {
    Forward,
    Reverse,
}

impl MotorDirection {
    pub fn sign(self) -> f64 {
        match self {
            MotorDirection::Forward => 1.0,
            MotorDirection::Reverse => -1.0,
        }
    }
}

/// PWM pair plus per-motor direction flags. The u8 fields make the
/// [0, 255] clip invariant structural.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MotorCommand {
    pub pwm_left: u8,
    pub pwm_right: u8,
    pub dir_left: MotorDirection,
    pub dir_right: MotorDirection,
}

impl MotorCommand {
    pub fn forward(pwm_left: u8, pwm_right: u8) -> Self {
        MotorCommand {
            pwm_left,
            pwm_right,
            dir_left: MotorDirection::Forward,
            dir_right: MotorDirection::Forward,
        }
    }

    pub fn stop() -> Self {
        MotorCommand::forward(0, 0)
    }

    /// PWM with the direction folded into the sign, for logging.
    pub fn signed_left(&self) -> i16 {
        self.dir_left.sign() as i16 * self.pwm_left as i16
    }

    pub fn signed_right(&self) -> i16 {
        self.dir_right.sign() as i16 * self.pwm_right as i16
    }
}

/// Controller gains and sampling period.
#[derive(Debug, Clone, Copy)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Sampling period in seconds (20 Hz loop).
    pub t_s: f64,
}

impl Default for PidGains {
    /// The reference firmware gains at the 50 ms loop period.
    fn default() -> Self {
        PidGains {
            kp: 4.8,
            ki: 22.0,
            kd: 0.18,
            t_s: 0.05,
        }
    }
}

impl PidGains {
    /// Gains calibrated against the bundled plant model. The reference
    /// firmware gains assume a far steeper steering response than the
    /// measured PWM-to-speed map provides; on this plant they saturate the
    /// integral and shed the line, so simulation profiles default to this
    /// set (see the tuning module for how it was derived).
    pub fn plant_tuned() -> Self {
        PidGains {
            kp: 10.0,
            ki: 5.0,
            kd: 2.0,
            t_s: 0.05,
        }
    }
}

/// Integral accumulator clamp (error-seconds).
pub const INTEGRAL_LIMIT: f64 = 50.0;

/// Consecutive both-white ticks after which the line counts as lost.
pub const LOST_TICKS: u32 = 10;

/// Mutable controller state.
#[derive(Debug, Clone, Copy)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: f64,
    pub lost_counter: u32,
    pub v_base: u8,
}

impl PidState {
    pub fn new(v_base: u8) -> Self {
        PidState {
            integral: 0.0,
            prev_error: 0.0,
            lost_counter: 0,
            v_base,
        }
    }

    /// Zero the dynamic state, keeping the base speed.
    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = 0.0;
        self.lost_counter = 0;
    }

    /// One PID update: accumulate the clamped integral, difference the error,
    /// and combine. Clamping happens after accumulation.
    pub fn pid_step(&mut self, gains: &PidGains, error: f64) -> f64 {
        self.integral =
            (self.integral + error * gains.t_s).clamp(-INTEGRAL_LIMIT, INTEGRAL_LIMIT);
        let derivative = (error - self.prev_error) / gains.t_s;
        let u = gains.kp * error + gains.ki * self.integral + gains.kd * derivative;
        self.prev_error = error;
        u
    }
}

/// Weighted position error from the two line bits. Both-white frames keep the
/// previous steering target at zero and advance the lost counter; any line
/// contact resets it.
pub fn compute_error(s_left: bool, s_right: bool, lost_counter: u32) -> (f64, u32) {
    if !s_left && !s_right {
        (0.0, lost_counter.saturating_add(1))
    } else {
        ((bit(s_left) - bit(s_right)) / 2.0, 0)
    }
}

fn bit(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Mix the control output into the PWM pair: left gets `v_base + u`, right
/// `v_base - u`, rounded to the nearest integer (ties away from zero) and
/// clipped to [0, 255].
pub fn mix_motors(v_base: u8, u: f64) -> MotorCommand {
    let clip = |x: f64| libm::round(x).clamp(0.0, 255.0) as u8;
    MotorCommand::forward(clip(v_base as f64 + u), clip(v_base as f64 - u))
}

/// On-off baseline: steer hard toward whichever sensor sees the line, drive
/// straight otherwise.
pub fn onoff_step(s_left: bool, s_right: bool, v_base: u8, v_turn: u8) -> MotorCommand {
    let base = v_base as i32;
    let turn = v_turn as i32;
    let clip = |x: i32| x.clamp(0, 255) as u8;
    match (s_left, s_right) {
        (true, false) => MotorCommand::forward(clip(base - turn), clip(base + turn)),
        (false, true) => MotorCommand::forward(clip(base + turn), clip(base - turn)),
        _ => MotorCommand::forward(clip(base), clip(base)),
    }
}

/// Full per-tick control pass: error, PID, mixing. Returns the motor command
/// and whether the lost-line guard has tripped.
pub fn control_tick(
    s_left: bool,
    s_right: bool,
    state: &mut PidState,
    gains: &PidGains,
) -> (MotorCommand, bool) {
    let (error, counter) = compute_error(s_left, s_right, state.lost_counter);
    state.lost_counter = counter;
    let u = state.pid_step(gains, error);
    let cmd = mix_motors(state.v_base, u);
    (cmd, state.lost_counter > LOST_TICKS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_cases() {
        assert_eq!(compute_error(true, false, 3), (0.5, 0));
        assert_eq!(compute_error(false, true, 3), (-0.5, 0));
        assert_eq!(compute_error(true, true, 3), (0.0, 0));
        assert_eq!(compute_error(false, false, 4), (0.0, 5));
    }

    #[test]
    fn pid_hand_trace() {
        let gains = PidGains::default();
        let mut state = PidState::new(150);
        let u = state.pid_step(&gains, 0.5);
        // integral 0.025, derivative 10: 4.8*0.5 + 22*0.025 + 0.18*10
        assert!((state.integral - 0.025).abs() < 1e-15);
        assert!((u - 4.75).abs() < 1e-12, "{u}");
        assert_eq!(state.prev_error, 0.5);
    }

    #[test]
    fn pid_quiescent() {
        let gains = PidGains::default();
        let mut state = PidState::new(150);
        assert_eq!(state.pid_step(&gains, 0.0), 0.0);
    }

    #[test]
    fn integral_clamps_exactly_at_bound() {
        let gains = PidGains::default();
        let mut state = PidState::new(150);
        state.integral = 49.99;
        state.pid_step(&gains, 0.5); // 49.99 + 0.025 exceeds the bound
        assert_eq!(state.integral, 50.0);
        state.integral = -49.99;
        state.pid_step(&gains, -0.5);
        assert_eq!(state.integral, -50.0);
    }

    #[test]
    fn mixing_examples() {
        let c = mix_motors(150, 0.0);
        assert_eq!((c.pwm_left, c.pwm_right), (150, 150));
        let c = mix_motors(150, 200.0);
        assert_eq!((c.pwm_left, c.pwm_right), (255, 0));
        let c = mix_motors(150, 4.75);
        assert_eq!((c.pwm_left, c.pwm_right), (155, 145));
        // Ties round away from zero.
        let c = mix_motors(150, 2.5);
        assert_eq!((c.pwm_left, c.pwm_right), (153, 148));
    }

    #[test]
    fn onoff_examples() {
        let c = onoff_step(true, true, 150, 60);
        assert_eq!((c.pwm_left, c.pwm_right), (150, 150));
        let c = onoff_step(true, false, 150, 60);
        assert_eq!((c.pwm_left, c.pwm_right), (90, 210));
        let c = onoff_step(false, true, 150, 60);
        assert_eq!((c.pwm_left, c.pwm_right), (210, 90));
    }

    #[test]
    fn lost_flag_on_eleventh_frame() {
        let gains = PidGains::default();
        let mut state = PidState::new(150);
        for k in 1..=11 {
            let (_, lost) = control_tick(false, false, &mut state, &gains);
            assert_eq!(lost, k == 11, "tick {k}");
        }
    }

    #[test]
    fn control_tick_directions() {
        let gains = PidGains::default();
        let mut state = PidState::new(150);
        let (cmd, lost) = control_tick(true, true, &mut state, &gains);
        assert_eq!((cmd.pwm_left, cmd.pwm_right), (150, 150));
        assert!(!lost);

        let mut state = PidState::new(150);
        let (cmd, _) = control_tick(false, true, &mut state, &gains);
        assert!(cmd.pwm_left < 150 && 150 < cmd.pwm_right, "{cmd:?}");
    }
}
