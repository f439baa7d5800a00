//! Closed-loop gain identification against the simulated robot, plus the
//! reflectance calibration procedure.

use linesim_core::rng::{derive_seed, Rng};
use linesim_core::sensor::{
    calibrate_threshold, read_ir, verify_consistency, CalibrationRecord, ConsistencyReport,
};
use linesim_core::sim::{run_scenario, ControllerKind};
use linesim_core::tuning::{find_critical_gain, zn_gains, OscillationReport, TuneEval};

use crate::config::Settings;
use crate::report::{csv_table, sig6};
use crate::studies::StudyError;
use crate::tracks;

pub struct TuneOutcome {
    pub report: OscillationReport,
    pub gains: linesim_core::control::PidGains,
    pub evals: Vec<TuneEval>,
    pub critical_trace: Vec<f64>,
}

/// Identify the ultimate gain of the simulated follower, proportional-only,
/// excited by a 1 cm lateral offset on the tuning straight. The run is
/// noiseless so the peak-ratio classifier sees clean envelopes.
pub fn run_tune(settings: &Settings, kp_lo: f64, kp_hi: f64) -> Result<TuneOutcome, StudyError> {
    let mut s = settings.clone();
    s.track = "tuning".into();
    s.fsm_enabled = false;
    s.controller = ControllerKind::Pid;
    s.ir_noise_sigma = 0.0;
    s.us_jitter_sigma = 0.0;
    s.start_offset = 0.01;
    s.start_offset_jitter = 0.0;
    s.start_heading_jitter = 0.0;
    s.duration = 14.0;
    let base = s.scenario()?;
    let track = tracks::load(&s.track)?;

    let t_s = base.gains.t_s;
    let expected = (base.duration / t_s).round() as usize;
    let run = |kp: f64| -> Vec<f64> {
        let mut cfg = base.clone();
        cfg.gains.kp = kp;
        cfg.gains.ki = 0.0;
        cfg.gains.kd = 0.0;
        let result = run_scenario(&track, &cfg);
        result.ticks.iter().map(|t| t.lateral_error_cm).collect()
    };

    let (report, evals) = find_critical_gain(run, t_s, expected, kp_lo, kp_hi, 0.05)
        .map_err(|e| StudyError::Failed(e.to_string()))?;
    let gains =
        zn_gains(report.ku, report.tu).map_err(|e| StudyError::Failed(e.to_string()))?;

    let mut cfg = base.clone();
    cfg.gains.kp = report.ku;
    cfg.gains.ki = 0.0;
    cfg.gains.kd = 0.0;
    let critical_trace = run_scenario(&track, &cfg)
        .ticks
        .iter()
        .map(|t| t.lateral_error_cm)
        .collect();

    Ok(TuneOutcome {
        report,
        gains,
        evals,
        critical_trace,
    })
}

pub fn render_tune(outcome: &TuneOutcome) -> Vec<(String, String)> {
    let mut report = String::new();
    report.push_str("Closed-loop gain identification\n");
    report.push_str(&format!("  critical gain Ku:     {}\n", sig6(outcome.report.ku)));
    report.push_str(&format!("  oscillation Tu:       {} s\n", sig6(outcome.report.tu)));
    report.push_str(&format!(
        "  oscillation amplitude: {} cm\n",
        sig6(outcome.report.amplitude)
    ));
    report.push_str(&format!(
        "  boundary class:       {}\n",
        outcome.report.classification.name()
    ));
    report.push_str("\nTable gains (0.6Ku, 2kp/Tu, kp*Tu/8):\n");
    report.push_str(&format!(
        "  kp = {}\n  ki = {}\n  kd = {}\n",
        sig6(outcome.gains.kp),
        sig6(outcome.gains.ki),
        sig6(outcome.gains.kd)
    ));
    report.push_str(
        "\nnote: the bundled profile ships a hand-refined set on top of the\n\
         table values; see the configuration defaults.\n",
    );

    let evals_csv = csv_table(
        &["kp", "classification", "period_s", "amplitude_cm", "diverged"],
        &outcome
            .evals
            .iter()
            .map(|e| {
                let (class, period, amp) = match &e.measure {
                    Some(m) => (
                        m.class.name().to_string(),
                        m.period.to_string(),
                        m.amplitude.to_string(),
                    ),
                    None => ("none".into(), String::new(), String::new()),
                };
                vec![
                    e.kp.to_string(),
                    class,
                    period,
                    amp,
                    (e.diverged as u8).to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    );

    let trace_csv = csv_table(
        &["tick", "lateral_error_cm"],
        &outcome
            .critical_trace
            .iter()
            .enumerate()
            .map(|(i, e)| vec![i.to_string(), e.to_string()])
            .collect::<Vec<_>>(),
    );

    vec![
        ("report.txt".into(), report),
        ("evals.csv".into(), evals_csv),
        ("critical_trace.csv".into(), trace_csv),
    ]
}

pub struct CalibrationOutcome {
    pub left: CalibrationRecord,
    pub right: CalibrationRecord,
    pub consistency_left: ConsistencyReport,
    pub consistency_right: ConsistencyReport,
}

/// Run the calibration procedure against simulated white and black surfaces:
/// 50 samples per surface per sensor, midpoint threshold, then the
/// stationary consistency check over the line.
pub fn run_calibration(settings: &Settings) -> Result<CalibrationOutcome, StudyError> {
    let track = tracks::load(&settings.track)?;
    let scenario = settings.scenario()?;
    let model = scenario.ir;
    let sample = |label: &str, reflectance: f64| -> Vec<u16> {
        let mut rng = Rng::new(derive_seed(settings.seed, label));
        (0..50).map(|_| read_ir(&model, reflectance, &mut rng)).collect()
    };
    let white_l = sample("calibrate:white:left", track.reflect_surface);
    let black_l = sample("calibrate:black:left", track.reflect_line);
    let white_r = sample("calibrate:white:right", track.reflect_surface);
    let black_r = sample("calibrate:black:right", track.reflect_line);
    let left = calibrate_threshold(&white_l, &black_l)
        .map_err(|e| StudyError::Failed(e.to_string()))?;
    let right = calibrate_threshold(&white_r, &black_r)
        .map_err(|e| StudyError::Failed(e.to_string()))?;
    let stationary_l = sample("calibrate:stationary:left", track.reflect_line);
    let stationary_r = sample("calibrate:stationary:right", track.reflect_line);
    Ok(CalibrationOutcome {
        left,
        right,
        consistency_left: verify_consistency(&stationary_l),
        consistency_right: verify_consistency(&stationary_r),
    })
}

pub fn render_calibration(outcome: &CalibrationOutcome) -> Vec<(String, String)> {
    let side = |name: &str, rec: &CalibrationRecord, con: &ConsistencyReport| {
        format!(
            "{name} sensor:\n  white mean: {} counts\n  black mean: {} counts\n  threshold:  {}\n  pooled std: {} counts ({} samples/surface)\n  stationary std over line: {} counts -> {}\n",
            sig6(rec.v_white_mean),
            sig6(rec.v_black_mean),
            rec.v_threshold,
            sig6(rec.sample_std),
            rec.sample_count,
            sig6(con.std),
            if con.pass { "pass (< 8 counts)" } else { "FAIL (>= 8 counts)" },
        )
    };
    let mut text = String::from("Reflectance calibration (50-sample averages)\n\n");
    text.push_str(&side("left", &outcome.left, &outcome.consistency_left));
    text.push('\n');
    text.push_str(&side("right", &outcome.right, &outcome.consistency_right));
    text.push_str("\nconfig keys:\n");
    text.push_str(&format!(
        "  ir.threshold_left = {}\n  ir.threshold_right = {}\n",
        outcome.left.v_threshold, outcome.right.v_threshold
    ));
    vec![("calibration.txt".into(), text)]
}
