//! The experiment studies: seeded trial sweeps, obstacle-detection and
//! supervisor-timing campaigns, the power budget, and the long soak.
//!
//! Each study has a `run_*` step that simulates and produces plain records,
//! and a `render_*` step that turns records into the report, tables, and
//! plots. Rendering depends only on the records (statistics are recomputed
//! from them), so `report` can regenerate identical bytes from the stored
//! `records.csv` without re-simulating.

use rayon::prelude::*;

use linesim_core::geom::Vec2;
use linesim_core::rng::{derive_seed, fnv1a64_update, FNV_OFFSET};
use linesim_core::sim::{
    run_scenario, run_scenario_streaming, ControllerKind, RunStatus, ScenarioConfig, TickLog,
};
use linesim_core::stats::{summarize, t_test_pooled, t_test_welch, Summary, TTestResult};
use linesim_core::track::{Obstacle, Track};
use linesim_core::fsm::Mode;

use crate::config::Settings;
use crate::report::{csv_table, sig6, svg_line_plot, text_table, Series};
use crate::tracks;

#[derive(Debug)]
pub enum StudyError {
    Config(crate::config::ConfigError),
    Track(crate::tracks::TrackLoadError),
    Failed(String),
}

impl std::fmt::Display for StudyError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StudyError::Config(e) => write!(f, "{e}"),
            StudyError::Track(e) => write!(f, "{e}"),
            StudyError::Failed(msg) => write!(f, "study failed: {msg}"),
        }
    }
}

impl std::error::Error for StudyError {}

impl From<crate::config::ConfigError> for StudyError {
    fn from(e: crate::config::ConfigError) -> Self {
        StudyError::Config(e)
    }
}

impl From<crate::tracks::TrackLoadError> for StudyError {
    fn from(e: crate::tracks::TrackLoadError) -> Self {
        StudyError::Track(e)
    }
}

/// Files a study produces, as (relative path, contents).
pub type Files = Vec<(String, String)>;

/// Per-trial tracking metrics over the measurement window.
#[derive(Debug, Clone, Copy)]
pub struct TrialRecord {
    pub axis: f64,
    pub trial: usize,
    pub seed: u64,
    pub mean_abs_cm: f64,
    pub rmse_cm: f64,
    pub max_abs_cm: f64,
    pub completed: bool,
}

/// Run one tracking trial and reduce it to summary metrics. The first
/// `settle` seconds are excluded from the error statistics.
pub fn run_trial(track: &Track, cfg: &ScenarioConfig, settle: f64, axis: f64, trial: usize) -> TrialRecord {
    let result = run_scenario(track, cfg);
    let mut n = 0usize;
    let mut acc = 0.0;
    let mut acc_sq = 0.0;
    let mut max_abs: f64 = 0.0;
    for tick in &result.ticks {
        if tick.t < settle {
            continue;
        }
        let e = tick.lateral_error_cm.abs();
        acc += e;
        acc_sq += e * e;
        max_abs = max_abs.max(e);
        n += 1;
    }
    let (mean_abs, rmse) = if n > 0 {
        (acc / n as f64, (acc_sq / n as f64).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    TrialRecord {
        axis,
        trial,
        seed: cfg.seed,
        mean_abs_cm: mean_abs,
        rmse_cm: rmse,
        max_abs_cm: max_abs,
        completed: result.status == RunStatus::Completed,
    }
}

/// Deterministic per-trial seed from the master seed, an axis label, and the
/// trial index.
pub fn trial_seed(master: u64, label: &str, axis: f64, trial: usize) -> u64 {
    derive_seed(master, &format!("{label}:{axis}:{trial}"))
}

/// Run `trials` seeded trials of one configuration, in parallel, ordered by
/// trial index.
pub fn run_trials(
    track: &Track,
    base: &ScenarioConfig,
    label: &str,
    axis: f64,
    trials: usize,
    master_seed: u64,
    settle: f64,
) -> Vec<TrialRecord> {
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut cfg = base.clone();
            cfg.seed = trial_seed(master_seed, label, axis, trial);
            run_trial(track, &cfg, settle, axis, trial)
        })
        .collect()
}

/// Sweep one numeric config key across `values`, `trials_per_value` seeded
/// trials each.
pub fn run_sweep(
    settings: &Settings,
    axis_key: &str,
    values: &[f64],
    trials_per_value: usize,
    master_seed: u64,
) -> Result<Vec<TrialRecord>, StudyError> {
    let mut all = Vec::new();
    for &value in values {
        let mut s = settings.clone();
        s.apply(axis_key, &format_axis(value), 0)?;
        let track = tracks::load(&s.track)?;
        let cfg = s.scenario()?;
        let records = run_trials(
            &track,
            &cfg,
            axis_key,
            value,
            trials_per_value,
            master_seed,
            s.settle,
        );
        all.extend(records);
    }
    Ok(all)
}

fn format_axis(value: f64) -> String {
    if value.fract() == 0.0 {
        format!("{}", value as i64)
    } else {
        format!("{value}")
    }
}

// ---------------------------------------------------------------------------
// PID vs on-off comparison
// ---------------------------------------------------------------------------

pub struct ComparisonRecords {
    pub rows: Vec<(String, TrialRecord)>,
    /// Overlaid error traces from the first trial of each controller.
    pub trace: Vec<(f64, f64, f64)>,
}

pub fn run_comparison(
    settings: &Settings,
    trials: usize,
    master_seed: u64,
) -> Result<ComparisonRecords, StudyError> {
    let track = tracks::load(&settings.track)?;
    let mut rows = Vec::new();
    let mut first: Vec<Vec<(f64, f64)>> = Vec::new();
    for kind in [ControllerKind::Pid, ControllerKind::OnOff] {
        let mut s = settings.clone();
        s.controller = kind;
        s.fsm_enabled = settings.fsm_enabled;
        let cfg = s.scenario()?;
        let label = controller_name(kind);
        let records = run_trials(&track, &cfg, label, 0.0, trials, master_seed, s.settle);
        // Trace for the figure: first trial, re-run to capture ticks.
        let mut trace_cfg = cfg.clone();
        trace_cfg.seed = trial_seed(master_seed, label, 0.0, 0);
        let result = run_scenario(&track, &trace_cfg);
        first.push(
            result
                .ticks
                .iter()
                .filter(|t| t.t < 10.0)
                .map(|t| (t.t, t.lateral_error_cm))
                .collect(),
        );
        rows.extend(records.into_iter().map(|r| (label.to_string(), r)));
    }
    let pid = &first[0];
    let onoff = &first[1];
    let n = pid.len().min(onoff.len());
    let trace = (0..n)
        .map(|i| (pid[i].0, pid[i].1, onoff[i].1))
        .collect();
    Ok(ComparisonRecords { rows, trace })
}

fn controller_name(kind: ControllerKind) -> &'static str {
    match kind {
        ControllerKind::Pid => "pid",
        ControllerKind::OnOff => "onoff",
    }
}

/// Group statistics and the significance test, recomputed from records.
pub struct ComparisonStats {
    pub pid: Summary,
    pub onoff: Summary,
    pub pid_rmse: f64,
    pub onoff_rmse: f64,
    pub mean_ratio: f64,
    pub student: TTestResult,
    pub welch: TTestResult,
    pub pid_completed: usize,
    pub onoff_completed: usize,
}

pub fn comparison_stats(records: &ComparisonRecords) -> ComparisonStats {
    let collect = |name: &str| -> (Vec<f64>, Vec<f64>, usize) {
        let mut means = Vec::new();
        let mut rmses = Vec::new();
        let mut completed = 0;
        for (label, r) in &records.rows {
            if label == name {
                means.push(r.mean_abs_cm);
                rmses.push(r.rmse_cm);
                completed += r.completed as usize;
            }
        }
        (means, rmses, completed)
    };
    let (pid_means, pid_rmses, pid_completed) = collect("pid");
    let (onoff_means, onoff_rmses, onoff_completed) = collect("onoff");
    let pid = summarize(&pid_means);
    let onoff = summarize(&onoff_means);
    ComparisonStats {
        pid,
        onoff,
        pid_rmse: mean_of(&pid_rmses),
        onoff_rmse: mean_of(&onoff_rmses),
        mean_ratio: pid.mean / onoff.mean,
        student: t_test_pooled(&onoff_means, &pid_means),
        welch: t_test_welch(&onoff_means, &pid_means),
        pid_completed,
        onoff_completed,
    }
}

fn mean_of(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

pub fn render_comparison(records: &ComparisonRecords) -> Files {
    let stats = comparison_stats(records);
    let summary_row = |name: &str, s: &Summary, rmse: f64, completed: usize| {
        vec![
            name.to_string(),
            sig6(s.mean),
            sig6(s.std),
            sig6(s.min),
            sig6(s.max),
            format!("[{}, {}]", sig6(s.ci95.0), sig6(s.ci95.1)),
            sig6(rmse),
            format!("{completed}/{}", s.n),
        ]
    };
    let headers = [
        "controller",
        "mean |e| (cm)",
        "std (cm)",
        "min (cm)",
        "max (cm)",
        "95% CI (cm)",
        "rmse (cm)",
        "completed",
    ];
    let rows = vec![
        summary_row("on-off", &stats.onoff, stats.onoff_rmse, stats.onoff_completed),
        summary_row("pid", &stats.pid, stats.pid_rmse, stats.pid_completed),
    ];

    let mut report = String::new();
    report.push_str(&text_table(
        "Tracking error by controller (per-trial mean |lateral error|)",
        &headers,
        &rows,
    ));
    report.push('\n');
    report.push_str(&format!(
        "improvement: pid mean / on-off mean = {}\n",
        sig6(stats.mean_ratio)
    ));
    report.push_str(&format!(
        "one-tailed Student t-test (on-off > pid): t = {}, df = {}, p = {:.3e}, two-tailed p = {:.3e}\n",
        sig6(stats.student.t),
        stats.student.df,
        stats.student.p_one_tailed,
        stats.student.p_two_tailed,
    ));
    report.push_str(&format!("Cohen's d (pooled std) = {}\n", sig6(stats.student.cohens_d)));
    report.push_str(&format!(
        "Welch variant: t = {}, df = {}, p = {:.3e}\n",
        sig6(stats.welch.t),
        sig6(stats.welch.df),
        stats.welch.p_one_tailed,
    ));
    report.push_str(
        "note: effect size uses the pooled n-1 standard deviation; interval\n\
         estimates use Student t critical values.\n",
    );

    let records_csv = csv_table(
        &[
            "controller",
            "trial",
            "seed",
            "mean_abs_cm",
            "rmse_cm",
            "max_abs_cm",
            "completed",
        ],
        &records
            .rows
            .iter()
            .map(|(label, r)| {
                vec![
                    label.clone(),
                    r.trial.to_string(),
                    r.seed.to_string(),
                    r.mean_abs_cm.to_string(),
                    r.rmse_cm.to_string(),
                    r.max_abs_cm.to_string(),
                    (r.completed as u8).to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    );

    let trace_csv = csv_table(
        &["t_s", "pid_err_cm", "onoff_err_cm"],
        &records
            .trace
            .iter()
            .map(|(t, p, o)| vec![t.to_string(), p.to_string(), o.to_string()])
            .collect::<Vec<_>>(),
    );

    let table_csv = csv_table(
        &headers,
        &rows,
    );

    let pid_trace: Vec<(f64, f64)> = records.trace.iter().map(|r| (r.0, r.1)).collect();
    let onoff_trace: Vec<(f64, f64)> = records.trace.iter().map(|r| (r.0, r.2)).collect();
    let trace_rmse = |pts: &[(f64, f64)]| {
        let acc: f64 = pts.iter().map(|p| p.1 * p.1).sum();
        (acc / pts.len().max(1) as f64).sqrt()
    };
    let svg = svg_line_plot(
        "Lateral error vs time, representative trials",
        "time (s)",
        "error (cm)",
        &[
            Series {
                label: format!("PID (RMSE={})", sig6(trace_rmse(&pid_trace))),
                points: pid_trace,
                color: "#1f77b4",
            },
            Series {
                label: format!("On-Off (RMSE={})", sig6(trace_rmse(&onoff_trace))),
                points: onoff_trace,
                color: "#d62728",
            },
        ],
    );

    vec![
        ("records.csv".into(), records_csv),
        ("report.txt".into(), report),
        ("tables/comparison.csv".into(), table_csv),
        ("tables/trace.csv".into(), trace_csv),
        ("plots/error_traces.svg".into(), svg),
    ]
}

/// Rebuild comparison records from a stored records.csv and trace.csv.
pub fn parse_comparison(records_csv: &str, trace_csv: &str) -> Result<ComparisonRecords, StudyError> {
    let mut rows = Vec::new();
    for line in records_csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(StudyError::Failed(format!("bad records row: {line}")));
        }
        rows.push((
            f[0].to_string(),
            TrialRecord {
                axis: 0.0,
                trial: parse_num(f[1])? as usize,
                seed: parse_u64(f[2])?,
                mean_abs_cm: parse_f64(f[3])?,
                rmse_cm: parse_f64(f[4])?,
                max_abs_cm: parse_f64(f[5])?,
                completed: f[6] == "1",
            },
        ));
    }
    let mut trace = Vec::new();
    for line in trace_csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(StudyError::Failed(format!("bad trace row: {line}")));
        }
        trace.push((parse_f64(f[0])?, parse_f64(f[1])?, parse_f64(f[2])?));
    }
    Ok(ComparisonRecords { rows, trace })
}

fn parse_f64(s: &str) -> Result<f64, StudyError> {
    s.parse()
        .map_err(|_| StudyError::Failed(format!("bad float `{s}` in stored records")))
}

fn parse_num(s: &str) -> Result<i64, StudyError> {
    s.parse()
        .map_err(|_| StudyError::Failed(format!("bad integer `{s}` in stored records")))
}

fn parse_u64(s: &str) -> Result<u64, StudyError> {
    s.parse()
        .map_err(|_| StudyError::Failed(format!("bad integer `{s}` in stored records")))
}

// ---------------------------------------------------------------------------
// Speed sweep
// ---------------------------------------------------------------------------

pub const SWEEP_PWMS: [f64; 5] = [100.0, 125.0, 150.0, 175.0, 200.0];

/// Course distance each sweep trial covers after settling (m). Fixing the
/// distance rather than the duration gives every speed setting the same
/// curvature exposure.
pub const SWEEP_DISTANCE: f64 = 9.0;

pub fn run_speed_sweep(
    settings: &Settings,
    trials_per_value: usize,
    master_seed: u64,
) -> Result<Vec<TrialRecord>, StudyError> {
    let mut all = Vec::new();
    for &pwm in &SWEEP_PWMS {
        let mut s = settings.clone();
        s.track = "circle".into();
        s.apply("pid.base_pwm", &format_axis(pwm), 0)?;
        let speed = linesim_core::plant::pwm_to_speed(pwm as u8);
        s.duration = s.settle + SWEEP_DISTANCE / speed;
        let track = tracks::load(&s.track)?;
        let cfg = s.scenario()?;
        all.extend(run_trials(
            &track,
            &cfg,
            "pid.base_pwm",
            pwm,
            trials_per_value,
            master_seed,
            s.settle,
        ));
    }
    Ok(all)
}

/// Group mean |error| per PWM setting, ordered as swept.
pub fn sweep_group_means(records: &[TrialRecord]) -> Vec<(f64, Summary)> {
    let mut out = Vec::new();
    for &pwm in &SWEEP_PWMS {
        let means: Vec<f64> = records
            .iter()
            .filter(|r| r.axis == pwm)
            .map(|r| r.mean_abs_cm)
            .collect();
        if !means.is_empty() {
            out.push((pwm, summarize(&means)));
        }
    }
    out
}

pub fn render_speed_sweep(records: &[TrialRecord]) -> Files {
    let groups = sweep_group_means(records);
    let headers = [
        "base PWM",
        "speed (m/s)",
        "mean |e| (cm)",
        "std (cm)",
        "max (cm)",
        "rmse (cm)",
        "95% CI (cm)",
        "trials",
    ];
    let mut rows = Vec::new();
    for (pwm, s) in &groups {
        let rmse_mean = mean_of(
            &records
                .iter()
                .filter(|r| r.axis == *pwm)
                .map(|r| r.rmse_cm)
                .collect::<Vec<_>>(),
        );
        let max_all = records
            .iter()
            .filter(|r| r.axis == *pwm)
            .map(|r| r.max_abs_cm)
            .fold(0.0f64, f64::max);
        rows.push(vec![
            format!("{}", *pwm as i64),
            sig6(linesim_core::plant::pwm_to_speed(*pwm as u8)),
            sig6(s.mean),
            sig6(s.std),
            sig6(max_all),
            sig6(rmse_mean),
            format!("[{}, {}]", sig6(s.ci95.0), sig6(s.ci95.1)),
            s.n.to_string(),
        ]);
    }
    let monotone = groups.windows(2).all(|w| w[0].1.mean < w[1].1.mean);
    let mut report = text_table("Tracking error across operating speeds", &headers, &rows);
    report.push('\n');
    report.push_str(&format!(
        "mean |error| strictly increasing with base PWM: {}\n",
        if monotone { "yes" } else { "no" }
    ));

    let records_csv = csv_table(
        &[
            "base_pwm",
            "trial",
            "seed",
            "mean_abs_cm",
            "rmse_cm",
            "max_abs_cm",
            "completed",
        ],
        &records
            .iter()
            .map(|r| {
                vec![
                    format!("{}", r.axis as i64),
                    r.trial.to_string(),
                    r.seed.to_string(),
                    r.mean_abs_cm.to_string(),
                    r.rmse_cm.to_string(),
                    r.max_abs_cm.to_string(),
                    (r.completed as u8).to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    );

    vec![
        ("records.csv".into(), records_csv),
        ("report.txt".into(), report),
        ("tables/speeds.csv".into(), csv_table(&headers, &rows)),
    ]
}

pub fn parse_sweep(records_csv: &str) -> Result<Vec<TrialRecord>, StudyError> {
    let mut out = Vec::new();
    for line in records_csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(StudyError::Failed(format!("bad records row: {line}")));
        }
        out.push(TrialRecord {
            axis: parse_f64(f[0])?,
            trial: parse_num(f[1])? as usize,
            seed: parse_u64(f[2])?,
            mean_abs_cm: parse_f64(f[3])?,
            rmse_cm: parse_f64(f[4])?,
            max_abs_cm: parse_f64(f[5])?,
            completed: f[6] == "1",
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Obstacle detection
// ---------------------------------------------------------------------------

pub const DETECTION_DISTANCES_CM: [f64; 4] = [10.0, 20.0, 30.0, 40.0];

/// Outcome of one obstacle encounter (or obstacle-free control run).
#[derive(Debug, Clone, Copy)]
pub struct EncounterRecord {
    /// Obstacle distance in cm, or 0 for control runs.
    pub distance_cm: f64,
    pub encounter: usize,
    pub seed: u64,
    pub is_control: bool,
    pub detected: bool,
    /// First-below-threshold sample to AVOID entry, when detection completed.
    pub response_ms: Option<f64>,
}

/// Place one obstacle so its near edge sits `distance` ahead of the
/// ultrasonic mount at the nominal start pose.
fn obstacle_track(settings: &Settings, distance: f64, radius: f64) -> Result<Track, StudyError> {
    let mut track = tracks::load(&settings.track)?;
    let x = settings.start_path_s + settings.ultrasonic_forward + distance + radius;
    track.obstacles.push(Obstacle {
        center: Vec2::new(x, 0.0),
        radius,
        window: None,
    });
    Ok(track)
}

pub const OBSTACLE_RADIUS: f64 = 0.04;

/// Margin at which an undetected approach counts as a collision.
pub const COLLISION_MARGIN: f64 = 0.02;

fn run_encounter(
    track: &Track,
    cfg: &ScenarioConfig,
    obstacle: Option<(Vec2, f64)>,
) -> (bool, Option<f64>) {
    let result = run_scenario(track, cfg);
    let detect_t = result
        .events
        .iter()
        .find(|e| e.to == Mode::Detect)
        .map(|e| e.t);
    let avoid_t = result
        .events
        .iter()
        .find(|e| e.to == Mode::Avoid)
        .map(|e| e.t);
    let first_below = result
        .ticks
        .iter()
        .find(|t| matches!(t.ultrasonic, Some(d) if d < cfg.debounce_threshold))
        .map(|t| t.t);
    let detected = match (detect_t, obstacle) {
        (None, _) => false,
        (Some(_), None) => true,
        (Some(td), Some((center, radius))) => {
            // Detection only counts before contact.
            let collision_t = result
                .ticks
                .iter()
                .find(|t| {
                    let front = Vec2::new(t.x, t.y)
                        + Vec2::from_angle(t.heading) * cfg.geometry.ultrasonic_forward;
                    front.dist(center) <= radius + COLLISION_MARGIN
                })
                .map(|t| t.t);
            collision_t.is_none_or(|tc| td < tc)
        }
    };
    let response_ms = match (first_below, avoid_t, detected) {
        (Some(tb), Some(ta), true) if ta >= tb => Some((ta - tb) * 1000.0),
        _ => None,
    };
    (detected, response_ms)
}

pub fn run_detection(
    settings: &Settings,
    encounters_per_distance: usize,
    master_seed: u64,
) -> Result<Vec<EncounterRecord>, StudyError> {
    let mut s = settings.clone();
    s.track = "straight".into();
    s.fsm_enabled = true;
    s.duration = 12.0;
    let base = s.scenario()?;

    let mut jobs: Vec<(f64, usize, bool)> = Vec::new();
    for &d in &DETECTION_DISTANCES_CM {
        for k in 0..encounters_per_distance {
            jobs.push((d, k, false));
        }
    }
    // Obstacle-free controls, one batch of equal total count.
    for k in 0..encounters_per_distance * DETECTION_DISTANCES_CM.len() {
        jobs.push((0.0, k, true));
    }

    let control_track = tracks::load(&s.track)?;
    let records: Vec<EncounterRecord> = jobs
        .par_iter()
        .map(|&(distance_cm, k, is_control)| {
            let seed = trial_seed(
                master_seed,
                if is_control { "control" } else { "encounter" },
                distance_cm,
                k,
            );
            let mut cfg = base.clone();
            cfg.seed = seed;
            let (detected, response_ms) = if is_control {
                run_encounter(&control_track, &cfg, None)
            } else {
                let track = obstacle_track(&s, distance_cm / 100.0, OBSTACLE_RADIUS)
                    .expect("straight track is builtin");
                let center = track.obstacles[0].center;
                run_encounter(&track, &cfg, Some((center, OBSTACLE_RADIUS)))
            };
            EncounterRecord {
                distance_cm,
                encounter: k,
                seed,
                is_control,
                detected,
                response_ms,
            }
        })
        .collect();
    Ok(records)
}

pub struct DetectionGroup {
    pub distance_cm: f64,
    pub n: usize,
    pub detection_pct: f64,
    pub response: Option<Summary>,
}

pub fn detection_groups(records: &[EncounterRecord]) -> (Vec<DetectionGroup>, f64, usize) {
    let mut groups = Vec::new();
    for &d in &DETECTION_DISTANCES_CM {
        let rows: Vec<&EncounterRecord> = records
            .iter()
            .filter(|r| !r.is_control && r.distance_cm == d)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let detected = rows.iter().filter(|r| r.detected).count();
        let responses: Vec<f64> = rows.iter().filter_map(|r| r.response_ms).collect();
        groups.push(DetectionGroup {
            distance_cm: d,
            n: rows.len(),
            detection_pct: 100.0 * detected as f64 / rows.len() as f64,
            response: if responses.is_empty() {
                None
            } else {
                Some(summarize(&responses))
            },
        });
    }
    let controls: Vec<&EncounterRecord> = records.iter().filter(|r| r.is_control).collect();
    let false_pos = controls.iter().filter(|r| r.detected).count();
    let fp_pct = if controls.is_empty() {
        0.0
    } else {
        100.0 * false_pos as f64 / controls.len() as f64
    };
    (groups, fp_pct, controls.len())
}

pub fn render_detection(records: &[EncounterRecord]) -> Files {
    let (groups, fp_pct, n_controls) = detection_groups(records);
    let headers = [
        "distance (cm)",
        "encounters",
        "detection (%)",
        "mean response (ms)",
        "95% CI (ms)",
    ];
    let mut rows = Vec::new();
    for g in &groups {
        let (resp, ci) = match &g.response {
            Some(s) => (
                sig6(s.mean),
                format!("[{}, {}]", sig6(s.ci95.0), sig6(s.ci95.1)),
            ),
            None => ("-".into(), "-".into()),
        };
        rows.push(vec![
            format!("{}", g.distance_cm as i64),
            g.n.to_string(),
            sig6(g.detection_pct),
            resp,
            ci,
        ]);
    }
    let overall: f64 = if groups.is_empty() {
        0.0
    } else {
        groups.iter().map(|g| g.detection_pct).sum::<f64>() / groups.len() as f64
    };
    let mut report = text_table("Obstacle detection by distance", &headers, &rows);
    report.push('\n');
    report.push_str(&format!("overall detection: {} %\n", sig6(overall)));
    report.push_str(&format!(
        "false positives: {} % over {} obstacle-free control runs\n",
        sig6(fp_pct),
        n_controls
    ));
    report.push_str(
        "note: the sensor model has no spurious-echo source, so control runs\n\
         can only trip on geometry; expect 0 % here.\n",
    );

    let records_csv = csv_table(
        &[
            "kind",
            "distance_cm",
            "encounter",
            "seed",
            "detected",
            "response_ms",
        ],
        &records
            .iter()
            .map(|r| {
                vec![
                    if r.is_control { "control" } else { "obstacle" }.to_string(),
                    r.distance_cm.to_string(),
                    r.encounter.to_string(),
                    r.seed.to_string(),
                    (r.detected as u8).to_string(),
                    r.response_ms.map(|v| v.to_string()).unwrap_or_default(),
                ]
            })
            .collect::<Vec<_>>(),
    );

    vec![
        ("records.csv".into(), records_csv),
        ("report.txt".into(), report),
        ("tables/detection.csv".into(), csv_table(&headers, &rows)),
    ]
}

pub fn parse_detection(records_csv: &str) -> Result<Vec<EncounterRecord>, StudyError> {
    let mut out = Vec::new();
    for line in records_csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(StudyError::Failed(format!("bad records row: {line}")));
        }
        out.push(EncounterRecord {
            distance_cm: parse_f64(f[1])?,
            encounter: parse_num(f[2])? as usize,
            seed: parse_u64(f[3])?,
            is_control: f[0] == "control",
            detected: f[4] == "1",
            response_ms: if f[5].is_empty() {
                None
            } else {
                Some(parse_f64(f[5])?)
            },
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Supervisor timing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct TimingRecord {
    /// True for the line-loss recovery scenario, false for the obstacle one.
    pub loss_scenario: bool,
    pub trial: usize,
    pub seed: u64,
    pub detect_to_avoid_s: Option<f64>,
    pub avoid_complete_s: Option<f64>,
    pub reacquire_s: Option<f64>,
    pub recover_from_loss_s: Option<f64>,
}

/// Metric timeout: a phase that has not completed within this window counts
/// as a failure for its success rate.
pub const TIMING_TIMEOUT: f64 = 10.0;

pub fn run_fsm_timing(
    settings: &Settings,
    trials: usize,
    master_seed: u64,
) -> Result<Vec<TimingRecord>, StudyError> {
    let mut s = settings.clone();
    s.track = "straight".into();
    s.fsm_enabled = true;
    s.duration = 25.0;
    let base = s.scenario()?;
    let obstacle_track = obstacle_track(&s, 0.5, OBSTACLE_RADIUS)?;
    let plain_track = tracks::load(&s.track)?;

    let obstacle_runs: Vec<TimingRecord> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(master_seed, "fsm-obstacle", 0.0, trial);
            let mut cfg = base.clone();
            cfg.seed = seed;
            let result = run_scenario(&obstacle_track, &cfg);
            let first_below = result
                .ticks
                .iter()
                .find(|t| matches!(t.ultrasonic, Some(d) if d < cfg.debounce_threshold))
                .map(|t| t.t);
            let avoid_in = result
                .events
                .iter()
                .find(|e| e.to == Mode::Avoid)
                .map(|e| e.t);
            let recover_in = result
                .events
                .iter()
                .find(|e| e.from == Mode::Avoid && e.to == Mode::Recover)
                .map(|e| e.t);
            let follow_after_recover = recover_in.and_then(|tr| {
                result
                    .events
                    .iter()
                    .find(|e| e.t > tr && e.to == Mode::Follow)
                    .map(|e| e.t)
            });
            TimingRecord {
                loss_scenario: false,
                trial,
                seed,
                detect_to_avoid_s: match (first_below, avoid_in) {
                    (Some(tb), Some(ta)) if ta >= tb => Some(ta - tb),
                    _ => None,
                },
                avoid_complete_s: match (avoid_in, recover_in) {
                    (Some(ta), Some(tr)) if tr >= ta => Some(tr - ta),
                    _ => None,
                },
                reacquire_s: match (recover_in, follow_after_recover) {
                    (Some(tr), Some(tf)) => Some(tf - tr),
                    _ => None,
                },
                recover_from_loss_s: None,
            }
        })
        .collect();

    let loss_runs: Vec<TimingRecord> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(master_seed, "fsm-loss", 0.0, trial);
            let mut cfg = base.clone();
            cfg.seed = seed;
            // Start well off the line, outside the sensing band: the
            // supervisor must notice the loss and search back.
            cfg.start.lateral_offset = 0.06;
            cfg.start.offset_jitter = 0.005;
            let result = run_scenario(&plain_track, &cfg);
            let search_in = result
                .events
                .iter()
                .find(|e| e.to == Mode::Search)
                .map(|e| e.t);
            let follow_back = search_in.and_then(|ts| {
                result
                    .events
                    .iter()
                    .find(|e| e.t > ts && e.to == Mode::Follow)
                    .map(|e| e.t)
            });
            TimingRecord {
                loss_scenario: true,
                trial,
                seed,
                detect_to_avoid_s: None,
                avoid_complete_s: None,
                reacquire_s: None,
                recover_from_loss_s: match (search_in, follow_back) {
                    (Some(ts), Some(tf)) => Some(tf - ts),
                    _ => None,
                },
            }
        })
        .collect();

    let mut all = obstacle_runs;
    all.extend(loss_runs);
    Ok(all)
}

pub struct TimingMetric {
    pub name: &'static str,
    pub summary: Option<Summary>,
    pub success_pct: f64,
    pub trials: usize,
}

pub fn timing_metrics(records: &[TimingRecord]) -> Vec<TimingMetric> {
    let metric = |name: &'static str,
                  loss: bool,
                  get: fn(&TimingRecord) -> Option<f64>|
     -> TimingMetric {
        let rows: Vec<&TimingRecord> =
            records.iter().filter(|r| r.loss_scenario == loss).collect();
        let ok: Vec<f64> = rows
            .iter()
            .filter_map(|r| get(r))
            .filter(|&v| v <= TIMING_TIMEOUT)
            .collect();
        TimingMetric {
            name,
            summary: if ok.is_empty() { None } else { Some(summarize(&ok)) },
            success_pct: if rows.is_empty() {
                0.0
            } else {
                100.0 * ok.len() as f64 / rows.len() as f64
            },
            trials: rows.len(),
        }
    };
    vec![
        metric("detect to avoid", false, |r| r.detect_to_avoid_s),
        metric("avoid completion", false, |r| r.avoid_complete_s),
        metric("line reacquisition", false, |r| r.reacquire_s),
        metric("recovery from loss", true, |r| r.recover_from_loss_s),
    ]
}

pub fn render_fsm_timing(records: &[TimingRecord]) -> Files {
    let metrics = timing_metrics(records);
    let headers = [
        "metric",
        "mean (s)",
        "std (s)",
        "success (%)",
        "95% CI (s)",
        "trials",
    ];
    let rows: Vec<Vec<String>> = metrics
        .iter()
        .map(|m| {
            let (mean, std, ci) = match &m.summary {
                Some(s) => (
                    sig6(s.mean),
                    sig6(s.std),
                    format!("[{}, {}]", sig6(s.ci95.0), sig6(s.ci95.1)),
                ),
                None => ("-".into(), "-".into(), "-".into()),
            };
            vec![
                m.name.to_string(),
                mean,
                std,
                sig6(m.success_pct),
                ci,
                m.trials.to_string(),
            ]
        })
        .collect();
    let mut report = text_table("Supervisor timing", &headers, &rows);
    report.push('\n');
    report.push_str(&format!(
        "success = metric completed within {TIMING_TIMEOUT} s; response clock starts at the\n\
         first below-threshold range sample.\n"
    ));

    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let records_csv = csv_table(
        &[
            "scenario",
            "trial",
            "seed",
            "detect_to_avoid_s",
            "avoid_complete_s",
            "reacquire_s",
            "recover_from_loss_s",
        ],
        &records
            .iter()
            .map(|r| {
                vec![
                    if r.loss_scenario { "loss" } else { "obstacle" }.to_string(),
                    r.trial.to_string(),
                    r.seed.to_string(),
                    fmt_opt(r.detect_to_avoid_s),
                    fmt_opt(r.avoid_complete_s),
                    fmt_opt(r.reacquire_s),
                    fmt_opt(r.recover_from_loss_s),
                ]
            })
            .collect::<Vec<_>>(),
    );

    vec![
        ("records.csv".into(), records_csv),
        ("report.txt".into(), report),
        ("tables/fsm_timing.csv".into(), csv_table(&headers, &rows)),
    ]
}

pub fn parse_fsm_timing(records_csv: &str) -> Result<Vec<TimingRecord>, StudyError> {
    let mut out = Vec::new();
    for line in records_csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(StudyError::Failed(format!("bad records row: {line}")));
        }
        let opt = |s: &str| -> Result<Option<f64>, StudyError> {
            if s.is_empty() {
                Ok(None)
            } else {
                Ok(Some(parse_f64(s)?))
            }
        };
        out.push(TimingRecord {
            loss_scenario: f[0] == "loss",
            trial: parse_num(f[1])? as usize,
            seed: parse_u64(f[2])?,
            detect_to_avoid_s: opt(f[3])?,
            avoid_complete_s: opt(f[4])?,
            reacquire_s: opt(f[5])?,
            recover_from_loss_s: opt(f[6])?,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Power budget
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PowerRow {
    pub mode: String,
    pub current_ma: f64,
    pub duty_pct: f64,
}

/// Duty-weighted operating table with the battery it draws from.
#[derive(Debug, Clone)]
pub struct PowerTable {
    pub rows: Vec<PowerRow>,
    pub capacity_mah: f64,
}

impl PowerTable {
    /// The reference characterization this harness defaults to.
    pub fn reference(capacity_mah: f64) -> PowerTable {
        let mk = |mode: &str, current_ma: f64, duty_pct: f64| PowerRow {
            mode: mode.into(),
            current_ma,
            duty_pct,
        };
        PowerTable {
            rows: vec![
                mk("following (straight)", 380.0, 60.0),
                mk("following (curves)", 450.0, 25.0),
                mk("obstacle avoidance", 520.0, 8.0),
                mk("search/rotation", 480.0, 5.0),
                mk("idle", 85.0, 2.0),
            ],
            capacity_mah,
        }
    }

    /// Duty percentages must add to 100 within 0.01.
    pub fn validate(&self) -> Result<(), StudyError> {
        let total: f64 = self.rows.iter().map(|r| r.duty_pct).sum();
        if (total - 100.0).abs() > 0.01 {
            return Err(StudyError::Failed(format!(
                "duty percentages sum to {total}, expected 100"
            )));
        }
        Ok(())
    }
}

/// Duty-cycle-weighted average current in mA. Summing the products before
/// one final division keeps integer-valued tables exact.
pub fn weighted_current(table: &PowerTable) -> f64 {
    let sum: f64 = table
        .rows
        .iter()
        .map(|r| r.current_ma * r.duty_pct)
        .sum();
    sum / 100.0
}

/// Runtime estimate in hours at a given average draw.
pub fn estimate_runtime(capacity_mah: f64, current_ma: f64, derating: f64) -> f64 {
    capacity_mah / current_ma * derating
}

/// Measure a duty split from a bundled obstacle scenario and map the modes
/// onto the reference current rows.
pub fn simulated_duty(settings: &Settings, master_seed: u64) -> Result<Vec<PowerRow>, StudyError> {
    let mut s = settings.clone();
    s.track = "straight".into();
    s.fsm_enabled = true;
    s.duration = 20.0;
    let mut cfg = s.scenario()?;
    cfg.seed = derive_seed(master_seed, "power-duty");
    let track = obstacle_track(&s, 0.5, OBSTACLE_RADIUS)?;
    let result = run_scenario(&track, &cfg);
    let mut counts = [0usize; 5]; // straight, curves, avoidance, search, idle
    for tick in &result.ticks {
        let idx = match tick.mode {
            Mode::Follow => {
                if (tick.pwm_left - tick.pwm_right).abs() > 6 {
                    1
                } else {
                    0
                }
            }
            Mode::Detect => 4, // held stationary while confirming
            Mode::Avoid => match tick.avoid_phase {
                Some(linesim_core::fsm::AvoidPhase::Stop) => 4,
                _ => 2,
            },
            Mode::Recover | Mode::Search => 3,
        };
        counts[idx] += 1;
    }
    let total = result.ticks.len().max(1) as f64;
    let reference = PowerTable::reference(settings.power_capacity_mah);
    Ok(reference
        .rows
        .iter()
        .zip(counts.iter())
        .map(|(row, &c)| PowerRow {
            mode: row.mode.clone(),
            current_ma: row.current_ma,
            duty_pct: 100.0 * c as f64 / total,
        })
        .collect())
}

pub fn render_power(
    reference: &PowerTable,
    simulated: &[PowerRow],
    derating: f64,
) -> Files {
    let headers = ["operating mode", "current (mA)", "duty (%)", "weighted (mA)"];
    let table_rows = |rows: &[PowerRow]| -> Vec<Vec<String>> {
        rows.iter()
            .map(|r| {
                vec![
                    r.mode.clone(),
                    sig6(r.current_ma),
                    sig6(r.duty_pct),
                    sig6(r.current_ma * r.duty_pct / 100.0),
                ]
            })
            .collect()
    };
    let weighted = weighted_current(reference);
    let runtime = estimate_runtime(reference.capacity_mah, weighted, derating);
    let sim_table = PowerTable {
        rows: simulated.to_vec(),
        capacity_mah: reference.capacity_mah,
    };
    let sim_weighted = weighted_current(&sim_table);
    let sim_runtime = estimate_runtime(reference.capacity_mah, sim_weighted, derating);

    let mut report = text_table(
        "Power budget, reference duty split",
        &headers,
        &table_rows(&reference.rows),
    );
    report.push('\n');
    report.push_str(&format!("weighted average current: {} mA\n", sig6(weighted)));
    report.push_str(&format!(
        "estimated runtime: {} h from {} mAh (derating {})\n",
        sig6(runtime),
        sig6(reference.capacity_mah),
        sig6(derating)
    ));
    report.push_str(&format!(
        "note: the source characterization for these rows quotes a 412 mA\n\
         weighted average and 5.2 h runtime; exact row arithmetic gives\n\
         {} mA and {} h.\n",
        sig6(weighted),
        sig6(runtime)
    ));
    report.push('\n');
    report.push_str(&text_table(
        "Power budget, duty split measured from a simulated obstacle run",
        &headers,
        &table_rows(simulated),
    ));
    report.push('\n');
    report.push_str(&format!(
        "weighted average current (simulated duty): {} mA, runtime {} h\n",
        sig6(sim_weighted),
        sig6(sim_runtime)
    ));

    let mut csv_rows = Vec::new();
    for r in &reference.rows {
        csv_rows.push(vec![
            "reference".to_string(),
            r.mode.clone(),
            r.current_ma.to_string(),
            r.duty_pct.to_string(),
        ]);
    }
    for r in simulated {
        csv_rows.push(vec![
            "simulated".to_string(),
            r.mode.clone(),
            r.current_ma.to_string(),
            r.duty_pct.to_string(),
        ]);
    }
    let records_csv = csv_table(&["kind", "mode", "current_ma", "duty_pct"], &csv_rows);

    vec![
        ("records.csv".into(), records_csv),
        ("report.txt".into(), report),
        (
            "tables/power.csv".into(),
            csv_table(&headers, &table_rows(&reference.rows)),
        ),
    ]
}

pub fn parse_power(
    records_csv: &str,
    capacity: f64,
) -> Result<(PowerTable, Vec<PowerRow>), StudyError> {
    let mut reference = Vec::new();
    let mut simulated = Vec::new();
    for line in records_csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(StudyError::Failed(format!("bad records row: {line}")));
        }
        let row = PowerRow {
            mode: f[1].to_string(),
            current_ma: parse_f64(f[2])?,
            duty_pct: parse_f64(f[3])?,
        };
        match f[0] {
            "reference" => reference.push(row),
            "simulated" => simulated.push(row),
            other => return Err(StudyError::Failed(format!("bad power row kind `{other}`"))),
        }
    }
    Ok((
        PowerTable {
            rows: reference,
            capacity_mah: capacity,
        },
        simulated,
    ))
}

// ---------------------------------------------------------------------------
// Soak
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SoakOutcome {
    pub ticks: u64,
    pub transitions: u64,
    pub invariant_violations: u64,
    pub log_hash: u64,
    pub completed: bool,
}

/// Long continuous run with per-tick invariant checks and an incremental
/// hash of the CSV log stream. Memory use stays flat; nothing is retained.
pub fn run_soak(settings: &Settings, ticks: u64) -> Result<SoakOutcome, StudyError> {
    let track = tracks::load(&settings.track)?;
    let mut cfg = settings.scenario()?;
    cfg.duration = ticks as f64 * cfg.gains.t_s;

    let mut hash = FNV_OFFSET;
    let mut violations = 0u64;
    let mut transitions = 0u64;
    let mut seen = 0u64;
    let mut row = String::with_capacity(256);
    let mut expected_t = 0.0f64;
    let status = run_scenario_streaming(
        &track,
        &cfg,
        |tick: &TickLog| {
            seen += 1;
            if tick.pid_integral.abs() > 50.0 + 1e-9 {
                violations += 1;
            }
            if tick.pwm_left.abs() > 255 || tick.pwm_right.abs() > 255 {
                violations += 1;
            }
            if (tick.t - expected_t).abs() > 1e-6 {
                violations += 1;
            }
            expected_t += cfg.gains.t_s;
            row.clear();
            tick.write_csv_row(&mut row);
            hash = fnv1a64_update(hash, row.as_bytes());
        },
        |_event| {
            transitions += 1;
        },
    );
    Ok(SoakOutcome {
        ticks: seen,
        transitions,
        invariant_violations: violations,
        log_hash: hash,
        completed: status == RunStatus::Completed,
    })
}

pub fn render_soak(outcome: &SoakOutcome) -> Files {
    let mut report = String::new();
    report.push_str("Continuous soak run\n");
    report.push_str(&format!("  ticks:                {}\n", outcome.ticks));
    report.push_str(&format!("  sim time:             {} s\n", sig6(outcome.ticks as f64 * 0.05)));
    report.push_str(&format!("  supervisor events:    {}\n", outcome.transitions));
    report.push_str(&format!(
        "  invariant violations: {}\n",
        outcome.invariant_violations
    ));
    report.push_str(&format!("  log hash:             {:016x}\n", outcome.log_hash));
    report.push_str(&format!(
        "  completed:            {}\n",
        if outcome.completed { "yes" } else { "no (off-track)" }
    ));
    let records_csv = csv_table(
        &["ticks", "transitions", "invariant_violations", "log_hash", "completed"],
        &[vec![
            outcome.ticks.to_string(),
            outcome.transitions.to_string(),
            outcome.invariant_violations.to_string(),
            format!("{:016x}", outcome.log_hash),
            (outcome.completed as u8).to_string(),
        ]],
    );
    vec![
        ("records.csv".into(), records_csv),
        ("report.txt".into(), report),
    ]
}

pub fn parse_soak(records_csv: &str) -> Result<SoakOutcome, StudyError> {
    let line = records_csv
        .lines()
        .nth(1)
        .ok_or_else(|| StudyError::Failed("empty soak records".into()))?;
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 5 {
        return Err(StudyError::Failed(format!("bad soak row: {line}")));
    }
    Ok(SoakOutcome {
        ticks: parse_num(f[0])? as u64,
        transitions: parse_num(f[1])? as u64,
        invariant_violations: parse_num(f[2])? as u64,
        log_hash: u64::from_str_radix(f[3], 16)
            .map_err(|_| StudyError::Failed(format!("bad hash `{}`", f[3])))?,
        completed: f[4] == "1",
    })
}
