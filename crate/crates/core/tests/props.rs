//! Property tests for the control-stack invariants.

use linesim_core::control::{
    compute_error, control_tick, mix_motors, onoff_step, PidGains, PidState, INTEGRAL_LIMIT,
};
use linesim_core::plant::{pwm_to_speed, step_dynamics, PlantParams, RobotGeometry, RobotState};
use linesim_core::sensor::{median5, DebounceState, UltrasonicModel};
use linesim_core::track::Track;
use linesim_core::{geom::Vec2, MotorCommand};
use proptest::prelude::*;

proptest! {
    /// The integral accumulator never escapes its clamp, whatever the error
    /// sequence or (non-negative) gains.
    #[test]
    fn integral_always_clamped(
        errors in proptest::collection::vec(-1e6f64..1e6, 1..200),
        kp in 0.0f64..100.0,
        ki in 0.0f64..100.0,
        kd in 0.0f64..10.0,
    ) {
        let gains = PidGains { kp, ki, kd, t_s: 0.05 };
        let mut state = PidState::new(150);
        for e in errors {
            state.pid_step(&gains, e);
            prop_assert!(state.integral.abs() <= INTEGRAL_LIMIT);
        }
    }

    /// One PID tick matches an independently coded scalar recurrence.
    #[test]
    fn pid_step_matches_reference(
        integral0 in -50.0f64..50.0,
        prev in -1.0f64..1.0,
        error in -1.0f64..1.0,
        kp in 0.0f64..20.0,
        ki in 0.0f64..40.0,
        kd in 0.0f64..2.0,
    ) {
        let gains = PidGains { kp, ki, kd, t_s: 0.05 };
        let mut state = PidState::new(150);
        state.integral = integral0;
        state.prev_error = prev;
        let u = state.pid_step(&gains, error);

        // Reference recurrence, written independently of PidState (including
        // its own clamping, hence no `clamp` call).
        #[allow(clippy::manual_clamp)]
        let i_ref = {
            let mut i = integral0 + error * 0.05;
            if i > 50.0 { i = 50.0; }
            if i < -50.0 { i = -50.0; }
            i
        };
        let u_ref = kp * error + ki * i_ref + kd * (error - prev) / 0.05;
        prop_assert!((u - u_ref).abs() <= 1e-12 * (1.0 + u_ref.abs()));
        prop_assert!((state.integral - i_ref).abs() <= 1e-12);
    }

    /// Swapping the sensor bits negates the error and mirrors the command.
    #[test]
    fn bit_swap_mirrors_command(l in any::<bool>(), r in any::<bool>(), counter in 0u32..100) {
        let (e_ab, _) = compute_error(l, r, counter);
        let (e_ba, _) = compute_error(r, l, counter);
        prop_assert_eq!(e_ab, -e_ba);

        let cmd = onoff_step(l, r, 150, 60);
        let swapped = onoff_step(r, l, 150, 60);
        prop_assert_eq!(cmd.pwm_left, swapped.pwm_right);
        prop_assert_eq!(cmd.pwm_right, swapped.pwm_left);
    }

    /// With ki = kd = 0 the PID collapses to pure proportional action.
    #[test]
    fn p_only_degeneration(error in -1.0f64..1.0, kp in 0.0f64..50.0) {
        let gains = PidGains { kp, ki: 0.0, kd: 0.0, t_s: 0.05 };
        let mut state = PidState::new(150);
        state.prev_error = error; // kill the derivative kick
        let u = state.pid_step(&gains, error);
        prop_assert!((u - kp * error).abs() < 1e-12);
    }

    /// Mixing always produces in-range PWM, and the lost flag rises exactly
    /// past the threshold.
    #[test]
    fn control_tick_is_total(
        frames in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..100),
    ) {
        let gains = PidGains::plant_tuned();
        let mut state = PidState::new(150);
        let mut blank_run = 0u32;
        for (l, r) in frames {
            let (cmd, lost) = control_tick(l, r, &mut state, &gains);
            // u8 fields bound the clip structurally; directions stay forward.
            let _ = cmd.pwm_left;
            if !l && !r { blank_run += 1; } else { blank_run = 0; }
            prop_assert_eq!(lost, blank_run > 10);
        }
    }

    /// The mixed differential is antisymmetric in u up to clipping.
    #[test]
    fn mix_is_antisymmetric(u in -400.0f64..400.0) {
        let a = mix_motors(150, u);
        let b = mix_motors(150, -u);
        prop_assert_eq!(a.pwm_left, b.pwm_right);
        prop_assert_eq!(a.pwm_right, b.pwm_left);
    }

    /// The median is always a member of its window and ignores ordering.
    #[test]
    fn median_membership_and_permutation(mut w in proptest::array::uniform5(0u16..1024)) {
        let m = median5(&w);
        prop_assert!(w.contains(&m));
        w.reverse();
        prop_assert_eq!(median5(&w), m);
        w.swap(0, 3);
        prop_assert_eq!(median5(&w), m);
    }

    /// Echo conversion inverts exactly inside the envelope.
    #[test]
    fn echo_round_trip(d in 0.02f64..4.0, temp in -40.0f64..60.0) {
        let us = UltrasonicModel::new(temp, 0.0, 0.02, 4.0).unwrap();
        let t = 2.0 * d / us.sound_speed();
        let back = us.echo_to_distance(t).unwrap();
        prop_assert!((back - d).abs() <= 1e-12 * d);
    }

    /// A confirmed debounce implies the last three readings were all below
    /// the threshold.
    #[test]
    fn debounce_confirmation_is_sound(
        readings in proptest::collection::vec(proptest::option::of(0.0f64..0.5), 3..60),
    ) {
        let mut db = DebounceState::new(0.20, 3);
        let mut history: Vec<Option<f64>> = Vec::new();
        for r in readings {
            let confirmed = db.update(r);
            history.push(r);
            if confirmed {
                let last3 = &history[history.len().saturating_sub(3)..];
                prop_assert_eq!(last3.len(), 3);
                for h in last3 {
                    prop_assert!(matches!(h, Some(d) if *d < 0.20));
                }
            }
        }
    }

    /// Constant-speed pose integration is independent of step splitting.
    #[test]
    fn arc_update_is_split_invariant(
        pwm_l in 31u8..=255,
        pwm_r in 31u8..=255,
        splits in 1usize..40,
    ) {
        let params = PlantParams::default();
        let cmd = MotorCommand::forward(pwm_l, pwm_r);
        let mut single = RobotState::at(Vec2::ZERO, 0.3, RobotGeometry::default());
        single.v_left = pwm_to_speed(pwm_l);
        single.v_right = pwm_to_speed(pwm_r);
        let mut split = single;
        step_dynamics(&mut single, &cmd, &params, 0.05);
        for _ in 0..splits {
            step_dynamics(&mut split, &cmd, &params, 0.05 / splits as f64);
        }
        prop_assert!((single.pos.x - split.pos.x).abs() < 1e-9);
        prop_assert!((single.pos.y - split.pos.y).abs() < 1e-9);
        prop_assert!((single.heading - split.heading).abs() < 1e-9);
    }

    /// Raycast results never exceed the probe range.
    #[test]
    fn raycast_respects_range(
        ox in -1.0f64..1.0,
        oy in -1.0f64..1.0,
        heading in -3.2f64..3.2,
        max_range in 0.05f64..4.0,
        cx in -2.0f64..2.0,
        cy in -2.0f64..2.0,
        r in 0.01f64..0.5,
    ) {
        let mut src = String::from("straight 0 0 5 0\n");
        src.push_str(&format!("obstacle {cx} {cy} {r}\n"));
        let track = Track::parse(&src).unwrap();
        if let Some(d) = track.ray_distance(Vec2::new(ox, oy), heading, max_range, 0.0) {
            prop_assert!(d <= max_range);
            prop_assert!(d >= 0.0);
        }
    }
}

/// Lateral error vanishes along the centerline of a mixed track.
#[test]
fn centerline_error_is_zero_everywhere() {
    let src = "\
straight 0 0 2 0
arc 2 0.5 0.5 -1.5707963267948966 0 ccw
arc 2.35 0.5 0.15 0 -1.5707963267948966 cw
";
    let track = Track::parse(src).unwrap();
    let total = track.path_length();
    let n = 500;
    for i in 0..n {
        let s = total * i as f64 / n as f64;
        let (p, tangent) = track.point_at(s);
        let e = track.lateral_error(p, tangent).unwrap();
        assert!(e.abs() < 1e-9, "s={s}: {e}");
    }
}
