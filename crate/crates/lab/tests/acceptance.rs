//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them all).
//!
//! Tolerances are pinned here, not tuned elsewhere.

use linesim_core::control::{mix_motors, PidGains, PidState, INTEGRAL_LIMIT};
use linesim_core::fsm::{AvoidPhase, Mode};
use linesim_core::rng::{derive_seed, Rng};
use linesim_core::sensor::UltrasonicModel;
use linesim_core::sim::run_scenario;
use linesim_core::stats::{t_test_pooled, mean};
use linesim_core::tuning::{find_critical_gain, zn_gains};
use linesim_lab::config::Settings;
use linesim_lab::studies::{
    self, comparison_stats, detection_groups, sweep_group_means, weighted_current, PowerTable,
};
use linesim_lab::tracks;

fn pass(id: u32, name: &str, detail: String) {
    println!("ACCEPT-{id:02} {name}: PASS ({detail})");
}

/// 1. The gain table reproduces the documented worked example bit-exactly.
#[test]
fn accept_01_zn_gain_table_exact() {
    let gains = zn_gains(8.5, 0.4).unwrap();
    assert_eq!(gains.kp, 5.1);
    assert_eq!(gains.ki, 25.5);
    assert_eq!(gains.kd, 0.255);
    pass(
        1,
        "zn-gain-table",
        format!("kp={} ki={} kd={}", gains.kp, gains.ki, gains.kd),
    );
}

/// Closed-loop reference plant 1/(s(s+1)(s+2)) under proportional feedback,
/// integrated with RK4 at 1 ms; the error trace is sampled at the 20 Hz
/// measurement grid. Analytically (Routh), the ultimate gain of this loop
/// is 6 and the oscillation period 2*pi/sqrt(2).
fn reference_plant_trace(kp: f64) -> Vec<f64> {
    let duration = 60.0;
    let h = 1e-3;
    let sample_every = 50; // 50 ms
    let deriv = |x: [f64; 3]| -> [f64; 3] {
        // x' = A x with the gain folded in: s^3 + 3 s^2 + 2 s + kp = 0.
        [x[1], x[2], -kp * x[0] - 2.0 * x[1] - 3.0 * x[2]]
    };
    let mut x = [1.0, 0.0, 0.0];
    let mut trace = Vec::with_capacity(1200);
    let steps = (duration / h) as usize;
    for step in 0..steps {
        if step % sample_every == 0 {
            trace.push(x[0]);
        }
        let k1 = deriv(x);
        let mid1 = [x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1], x[2] + 0.5 * h * k1[2]];
        let k2 = deriv(mid1);
        let mid2 = [x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1], x[2] + 0.5 * h * k2[2]];
        let k3 = deriv(mid2);
        let end = [x[0] + h * k3[0], x[1] + h * k3[1], x[2] + h * k3[2]];
        let k4 = deriv(end);
        for i in 0..3 {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    trace
}

/// 2. The tuner recovers the analytically known ultimate gain and period
///    of the reference plant within 5 percent each.
#[test]
fn accept_02_reference_plant_identification() {
    let expected_samples = (60.0 / 0.05) as usize;
    let (report, _evals) = find_critical_gain(
        reference_plant_trace,
        0.05,
        expected_samples,
        1.0,
        20.0,
        0.05,
    )
    .expect("bracket contains the critical gain");
    let ku_true = 6.0;
    let tu_true = 2.0 * std::f64::consts::PI / std::f64::consts::SQRT_2;
    assert!(
        (report.ku - ku_true).abs() <= 0.05 * ku_true,
        "ku {} vs {}",
        report.ku,
        ku_true
    );
    assert!(
        (report.tu - tu_true).abs() <= 0.05 * tu_true,
        "tu {} vs {}",
        report.tu,
        tu_true
    );
    pass(
        2,
        "zn-identification-oracle",
        format!("ku={:.4} (true 6), tu={:.4} (true {:.4})", report.ku, report.tu, tu_true),
    );
}

/// 3. PID beats on-off on the bundled curved course: mean ratio at most
///    0.65, one-tailed p below 1e-3, Cohen's d above 1.
#[test]
fn accept_03_pid_vs_onoff() {
    let settings = Settings::default();
    let records = studies::run_comparison(&settings, 40, 42).unwrap();
    let stats = comparison_stats(&records);
    assert!(
        stats.mean_ratio <= 0.65,
        "ratio {} exceeds 0.65",
        stats.mean_ratio
    );
    assert!(
        stats.student.p_one_tailed < 1e-3,
        "p {} not below 1e-3",
        stats.student.p_one_tailed
    );
    assert!(
        stats.student.cohens_d > 1.0,
        "d {} not above 1",
        stats.student.cohens_d
    );
    pass(
        3,
        "pid-vs-onoff",
        format!(
            "pid {:.3} cm vs onoff {:.3} cm, ratio {:.3}, p={:.2e}, d={:.1}, completed {}/{}",
            stats.pid.mean,
            stats.onoff.mean,
            stats.mean_ratio,
            stats.student.p_one_tailed,
            stats.student.cohens_d,
            stats.pid_completed + stats.onoff_completed,
            stats.pid.n + stats.onoff.n,
        ),
    );
}

/// 4. Mean tracking error strictly increases across the five speed settings.
#[test]
fn accept_04_speed_monotonicity() {
    let settings = Settings::default();
    let records = studies::run_speed_sweep(&settings, 20, 42).unwrap();
    let groups = sweep_group_means(&records);
    assert_eq!(groups.len(), 5);
    for w in groups.windows(2) {
        assert!(
            w[0].1.mean < w[1].1.mean,
            "mean at pwm {} ({:.4}) not below mean at pwm {} ({:.4})",
            w[0].0,
            w[0].1.mean,
            w[1].0,
            w[1].1.mean
        );
    }
    let means: Vec<String> = groups.iter().map(|g| format!("{:.3}", g.1.mean)).collect();
    pass(4, "speed-monotonicity", format!("means {}", means.join(" < ")));
}

/// 5. Echo conversion round-trips distance through time of flight to
///    within 1e-12 relative error across the envelope.
#[test]
fn accept_05_echo_round_trip() {
    let mut rng = Rng::new(555);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let d = 0.02 + rng.next_f64() * (4.0 - 0.02);
        let temp = -40.0 + rng.next_f64() * 100.0;
        let us = UltrasonicModel::new(temp, 0.0, 0.02, 4.0).unwrap();
        let t = 2.0 * d / us.sound_speed();
        let back = us.echo_to_distance(t).expect("inside envelope");
        worst = worst.max((back - d).abs() / d);
    }
    assert!(worst <= 1e-12, "worst relative error {worst}");
    pass(5, "echo-round-trip", format!("worst relative error {worst:.2e}"));
}

/// 6. Noiseless obstacle trace: DETECT lands exactly on the third
///    below-threshold sample, AVOID on the second confirmation after it,
///    and the fixed maneuver phases last 1.0 / 0.5 / 1.0 s within one tick.
#[test]
fn accept_06_fsm_trace_conformance() {
    let settings = Settings {
        track: "straight".into(),
        ir_noise_sigma: 0.0,
        us_jitter_sigma: 0.0,
        start_offset_jitter: 0.0,
        start_heading_jitter: 0.0,
        duration: 15.0,
        ..Settings::default()
    };
    let mut track = tracks::load("straight").unwrap();
    track.obstacles.push(linesim_core::track::Obstacle {
        center: linesim_core::geom::Vec2::new(
            settings.start_path_s + settings.ultrasonic_forward + 0.35 + 0.04,
            0.0,
        ),
        radius: 0.04,
        window: None,
    });
    let cfg = settings.scenario().unwrap();
    let result = run_scenario(&track, &cfg);

    let below: Vec<usize> = result
        .ticks
        .iter()
        .enumerate()
        .filter(|(_, t)| matches!(t.ultrasonic, Some(d) if d < cfg.debounce_threshold))
        .map(|(i, _)| i)
        .collect();
    assert!(below.len() >= 5, "needs at least five below-threshold samples");
    let first_detect = result
        .ticks
        .iter()
        .position(|t| t.mode == Mode::Detect)
        .expect("DETECT entered");
    let first_avoid = result
        .ticks
        .iter()
        .position(|t| t.mode == Mode::Avoid)
        .expect("AVOID entered");
    assert_eq!(first_detect, below[2], "DETECT on the 3rd below sample");
    assert_eq!(first_avoid, below[4], "AVOID on the 2nd confirmation");

    let phase_ticks = |phase: AvoidPhase| -> usize {
        result
            .ticks
            .iter()
            .take_while(|t| t.mode != Mode::Recover)
            .filter(|t| t.mode == Mode::Avoid && t.avoid_phase == Some(phase))
            .count()
    };
    let stop = phase_ticks(AvoidPhase::Stop);
    let reverse = phase_ticks(AvoidPhase::Reverse);
    let turn = phase_ticks(AvoidPhase::Turn);
    assert!((19..=21).contains(&stop), "stop lasted {stop} ticks");
    assert!((9..=11).contains(&reverse), "reverse lasted {reverse} ticks");
    assert!((19..=21).contains(&turn), "turn lasted {turn} ticks");
    pass(
        6,
        "fsm-trace-conformance",
        format!(
            "detect@sample3 avoid@sample5, phases {}/{}/{} ticks",
            stop, reverse, turn
        ),
    );
}

/// 7. Detection reliability does not improve with distance and
///    obstacle-free controls stay at or below 2 percent false positives.
#[test]
fn accept_07_detection_degradation() {
    let settings = Settings::default();
    let records = studies::run_detection(&settings, 25, 42).unwrap();
    let (groups, fp_pct, n_controls) = detection_groups(&records);
    assert_eq!(groups.len(), 4);
    let near = groups.first().unwrap();
    let far = groups.last().unwrap();
    assert!(
        near.detection_pct >= far.detection_pct,
        "near {} < far {}",
        near.detection_pct,
        far.detection_pct
    );
    assert!(fp_pct <= 2.0, "false positives {fp_pct}%");
    assert_eq!(n_controls, 100);
    pass(
        7,
        "detection-degradation",
        format!(
            "rates {:?}, false positives {:.2}% over {} controls",
            groups
                .iter()
                .map(|g| format!("{}cm:{:.1}%", g.distance_cm, g.detection_pct))
                .collect::<Vec<_>>(),
            fp_pct,
            n_controls
        ),
    );
}

/// 8. A million random error steps never drive the integral past its
///    clamp or the PWM outputs out of range.
#[test]
fn accept_08_anti_windup_fuzz() {
    let mut rng = Rng::new(777);
    let gains = PidGains::default();
    let mut state = PidState::new(150);
    let mut worst_integral = 0.0f64;
    for step in 0..1_000_000u32 {
        if step % 10_000 == 0 {
            // Re-seed the controller occasionally so clamp entry/exit paths
            // are exercised from many states.
            state = PidState::new(150);
            state.integral = rng.next_f64() * 100.0 - 50.0;
            state.prev_error = rng.next_f64() * 2.0 - 1.0;
        }
        let error = (rng.next_f64() - 0.5) * 2e4;
        let u = state.pid_step(&gains, error);
        worst_integral = worst_integral.max(state.integral.abs());
        assert!(
            state.integral.abs() <= INTEGRAL_LIMIT,
            "integral escaped: {}",
            state.integral
        );
        let cmd = mix_motors(state.v_base, u);
        // The u8 representation is the structural clip; sanity-check the
        // signed views as well.
        assert!(cmd.signed_left().abs() <= 255 && cmd.signed_right().abs() <= 255);
    }
    pass(
        8,
        "anti-windup-fuzz",
        format!("1e6 steps, max |integral| = {worst_integral}"),
    );
}

/// 9. The duty-weighted current of the reference power rows is exactly
///    407.8 mA and the report annotates the 412 mA / 5.2 h discrepancy.
#[test]
fn accept_09_power_arithmetic() {
    let table = PowerTable::reference(2200.0);
    table.validate().unwrap();
    let weighted = weighted_current(&table);
    assert_eq!(weighted, 407.8);
    let runtime = studies::estimate_runtime(2200.0, weighted, 1.0);
    assert!((runtime - 5.3948).abs() < 1e-3, "runtime {runtime}");
    let settings = Settings::default();
    let simulated = studies::simulated_duty(&settings, 42).unwrap();
    let files = studies::render_power(&table, &simulated, 1.0);
    let report = &files
        .iter()
        .find(|(name, _)| name == "report.txt")
        .unwrap()
        .1;
    assert!(report.contains("412 mA"), "report lacks the 412 mA note");
    assert!(report.contains("5.2 h"), "report lacks the 5.2 h note");
    assert!(report.contains("407.800"), "report lacks the exact value");
    pass(
        9,
        "power-arithmetic",
        format!("weighted = {weighted} mA exactly, runtime {runtime:.4} h, divergence annotated"),
    );
}

/// 10. One-tailed t-test p-values agree with a 1e5-permutation Monte
///     Carlo reference within 2e-3 on twenty seeded sample pairs, and the
///     pooled df for 50+50 samples is 98.
#[test]
fn accept_10_statistics_oracle() {
    let n = 50usize;
    let mut worst = 0.0f64;
    for pair in 0..20u64 {
        let mut rng = Rng::new(derive_seed(9000 + pair, "stats-pair"));
        // Spread the true effect so p spans a few decades without sitting
        // where Monte Carlo noise peaks.
        let delta = 0.25 + 0.035 * pair as f64;
        let a: Vec<f64> = (0..n).map(|_| rng.normal(delta, 1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 1.0)).collect();
        let test = t_test_pooled(&a, &b);
        assert_eq!(test.df, 98.0);

        // Permutation reference: one-tailed p as the fraction of relabelings
        // whose group-mean difference reaches the observed one. With fixed
        // group sizes the pooled t statistic is monotone in the difference,
        // so comparing differences is equivalent.
        let observed = mean(&a) - mean(&b);
        let mut pool: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
        let total: f64 = pool.iter().sum();
        let mut perm_rng = Rng::new(derive_seed(9000 + pair, "stats-perm"));
        let mut hits = 0u32;
        let perms = 100_000;
        for _ in 0..perms {
            // Partial Fisher-Yates: the first n entries become group a.
            for i in 0..n {
                let j = i + perm_rng.below(pool.len() - i);
                pool.swap(i, j);
            }
            let sum_a: f64 = pool[..n].iter().sum();
            let diff = sum_a / n as f64 - (total - sum_a) / n as f64;
            if diff >= observed {
                hits += 1;
            }
        }
        let p_perm = hits as f64 / perms as f64;
        let gap = (test.p_one_tailed - p_perm).abs();
        worst = worst.max(gap);
        assert!(
            gap <= 2e-3,
            "pair {pair}: parametric {} vs permutation {} (gap {gap})",
            test.p_one_tailed,
            p_perm
        );
    }
    pass(
        10,
        "statistics-oracle",
        format!("20 pairs, worst |p_t - p_perm| = {worst:.2e}, df=98"),
    );
}

/// 11. The million-tick soak completes with zero invariant violations and
///     a bit-identical log hash on rerun.
#[test]
fn accept_11_determinism_soak() {
    let settings = Settings::default();
    let first = studies::run_soak(&settings, 1_000_000).unwrap();
    assert!(first.completed, "soak left the course");
    assert_eq!(first.invariant_violations, 0);
    assert_eq!(first.ticks, 1_000_000);
    let second = studies::run_soak(&settings, 1_000_000).unwrap();
    assert_eq!(first.log_hash, second.log_hash, "rerun hash differs");
    assert_eq!(second.invariant_violations, 0);
    pass(
        11,
        "determinism-soak",
        format!(
            "1e6 ticks, hash {:016x} stable across reruns, {} supervisor events",
            first.log_hash, first.transitions
        ),
    );
}
