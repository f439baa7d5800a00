//! Flat key-value configuration: file parsing, `--set` overrides, and the
//! resolved snapshot every run writes for reproducibility.
//!
//! The snapshot lists every key with its effective value in sorted order, so
//! the byte stream doubles as the config fingerprint.

use std::fmt::Write as _;

use linesim_core::control::PidGains;
use linesim_core::fsm::FsmParams;
use linesim_core::plant::{PlantParams, RobotGeometry};
use linesim_core::rng::fnv1a64;
use linesim_core::sensor::{IrSensorModel, UltrasonicModel};
use linesim_core::sim::{ControllerKind, ScenarioConfig, StartCondition};

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Syntax { line: usize, msg: String },
    UnknownKey { line: usize, key: String },
    BadValue { line: usize, key: String, msg: String },
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "config io error: {e}"),
            ConfigError::Syntax { line, msg } => write!(f, "config line {line}: {msg}"),
            ConfigError::UnknownKey { line, key } => {
                write!(f, "config line {line}: unknown key `{key}`")
            }
            ConfigError::BadValue { line, key, msg } => {
                write!(f, "config line {line}: bad value for `{key}`: {msg}")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// Every tunable the harness understands, with working defaults.
#[derive(Debug, Clone)]
pub struct Settings {
    pub track: String,
    pub seed: u64,
    pub duration: f64,
    pub substep: f64,
    pub jobs: usize,
    pub controller: ControllerKind,
    pub pid_kp: f64,
    pub pid_ki: f64,
    pub pid_kd: f64,
    pub base_pwm: u8,
    pub onoff_turn_pwm: u8,
    pub wheel_base: f64,
    pub tau_motor: f64,
    pub gain_left: f64,
    pub gain_right: f64,
    pub sensor_forward: f64,
    pub sensor_spacing: f64,
    pub ultrasonic_forward: f64,
    pub ir_gain: f64,
    pub ir_noise_sigma: f64,
    /// `None` resolves to gain/2 (the noiseless calibration midpoint).
    pub ir_threshold_left: Option<u16>,
    pub ir_threshold_right: Option<u16>,
    pub us_temperature: f64,
    pub us_jitter_sigma: f64,
    pub us_min_range: f64,
    pub us_max_range: f64,
    pub us_threshold: f64,
    pub us_debounce: u8,
    pub fsm_enabled: bool,
    pub fsm_turn_pwm_left: u8,
    pub fsm_turn_pwm_right: u8,
    pub fsm_reverse_pwm: u8,
    pub fsm_forward_pwm: u8,
    pub fsm_search_pwm: u8,
    pub fsm_spiral_pwm: u8,
    pub fsm_recover_timeout: f64,
    pub start_path_s: f64,
    pub start_offset: f64,
    pub start_offset_jitter: f64,
    pub start_heading: f64,
    pub start_heading_jitter: f64,
    pub trials: usize,
    pub settle: f64,
    pub power_capacity_mah: f64,
    pub power_derating: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let gains = PidGains::plant_tuned();
        let scenario = ScenarioConfig::default();
        Settings {
            track: "course".into(),
            seed: 42,
            duration: 30.0,
            substep: 0.001,
            jobs: 0,
            controller: ControllerKind::Pid,
            pid_kp: gains.kp,
            pid_ki: gains.ki,
            pid_kd: gains.kd,
            base_pwm: scenario.base_pwm,
            onoff_turn_pwm: scenario.onoff_turn_pwm,
            wheel_base: scenario.geometry.wheel_base,
            tau_motor: scenario.plant.tau_motor,
            gain_left: 1.0,
            gain_right: 1.0,
            sensor_forward: scenario.geometry.sensor_forward,
            sensor_spacing: scenario.geometry.sensor_spacing,
            ultrasonic_forward: scenario.geometry.ultrasonic_forward,
            ir_gain: 900.0,
            ir_noise_sigma: 6.0,
            ir_threshold_left: None,
            ir_threshold_right: None,
            us_temperature: 25.0,
            us_jitter_sigma: 50e-6,
            us_min_range: 0.02,
            us_max_range: 4.0,
            us_threshold: 0.20,
            us_debounce: 3,
            fsm_enabled: true,
            fsm_turn_pwm_left: 67,
            fsm_turn_pwm_right: 149,
            fsm_reverse_pwm: 120,
            fsm_forward_pwm: 150,
            fsm_search_pwm: 55,
            fsm_spiral_pwm: 120,
            fsm_recover_timeout: 5.0,
            start_path_s: 0.1,
            start_offset: 0.015,
            start_offset_jitter: 0.003,
            start_heading: 0.0,
            start_heading_jitter: 0.02,
            trials: 40,
            settle: 2.0,
            power_capacity_mah: 2200.0,
            power_derating: 1.0,
        }
    }
}

impl Settings {
    /// Parse one config document, applying keys in order over the defaults.
    pub fn parse(source: &str) -> Result<Settings, ConfigError> {
        let mut settings = Settings::default();
        settings.apply_str(source)?;
        Ok(settings)
    }

    pub fn apply_str(&mut self, source: &str) -> Result<(), ConfigError> {
        for (idx, raw) in source.lines().enumerate() {
            let line = idx + 1;
            let text = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            };
            let text = text.trim();
            if text.is_empty() {
                continue;
            }
            let (key, value) = text.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                msg: format!("expected `key = value`, got `{text}`"),
            })?;
            self.apply(key.trim(), value.trim(), line)?;
        }
        Ok(())
    }

    /// Apply one `key = value` pair (also used by `--set`).
    pub fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        macro_rules! parse {
            ($ty:ty) => {
                value.parse::<$ty>().map_err(|e| ConfigError::BadValue {
                    line,
                    key: key.into(),
                    msg: e.to_string(),
                })?
            };
        }
        let bad = |msg: &str| ConfigError::BadValue {
            line,
            key: key.into(),
            msg: msg.into(),
        };
        match key {
            "track" => self.track = value.into(),
            "seed" => self.seed = parse!(u64),
            "duration" => self.duration = positive(parse!(f64)).map_err(&bad)?,
            "substep" => self.substep = positive(parse!(f64)).map_err(&bad)?,
            "jobs" => self.jobs = parse!(usize),
            "controller.kind" => {
                self.controller = match value {
                    "pid" => ControllerKind::Pid,
                    "onoff" => ControllerKind::OnOff,
                    other => return Err(bad(&format!("expected pid|onoff, got `{other}`"))),
                }
            }
            "pid.kp" => self.pid_kp = non_negative(parse!(f64)).map_err(&bad)?,
            "pid.ki" => self.pid_ki = non_negative(parse!(f64)).map_err(&bad)?,
            "pid.kd" => self.pid_kd = non_negative(parse!(f64)).map_err(&bad)?,
            "pid.base_pwm" => self.base_pwm = parse!(u8),
            "onoff.turn_pwm" => self.onoff_turn_pwm = parse!(u8),
            "plant.wheel_base" => self.wheel_base = positive(parse!(f64)).map_err(&bad)?,
            "plant.tau_motor" => self.tau_motor = non_negative(parse!(f64)).map_err(&bad)?,
            "plant.gain_left" => self.gain_left = positive(parse!(f64)).map_err(&bad)?,
            "plant.gain_right" => self.gain_right = positive(parse!(f64)).map_err(&bad)?,
            "robot.sensor_forward" => {
                self.sensor_forward = non_negative(parse!(f64)).map_err(&bad)?
            }
            "robot.sensor_spacing" => {
                self.sensor_spacing = positive(parse!(f64)).map_err(&bad)?
            }
            "robot.ultrasonic_forward" => {
                self.ultrasonic_forward = non_negative(parse!(f64)).map_err(&bad)?
            }
            "ir.gain" => self.ir_gain = positive(parse!(f64)).map_err(&bad)?,
            "ir.noise_sigma" => {
                self.ir_noise_sigma = non_negative(parse!(f64)).map_err(&bad)?
            }
            "ir.threshold_left" => self.ir_threshold_left = Some(parse!(u16)),
            "ir.threshold_right" => self.ir_threshold_right = Some(parse!(u16)),
            "us.temperature" => self.us_temperature = parse!(f64),
            "us.jitter_sigma" => {
                self.us_jitter_sigma = non_negative(parse!(f64)).map_err(&bad)?
            }
            "us.min_range" => self.us_min_range = positive(parse!(f64)).map_err(&bad)?,
            "us.max_range" => self.us_max_range = positive(parse!(f64)).map_err(&bad)?,
            "us.threshold" => self.us_threshold = positive(parse!(f64)).map_err(&bad)?,
            "us.debounce" => self.us_debounce = parse!(u8),
            "fsm.enabled" => {
                self.fsm_enabled = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    other => return Err(bad(&format!("expected true|false, got `{other}`"))),
                }
            }
            "fsm.turn_pwm_left" => self.fsm_turn_pwm_left = parse!(u8),
            "fsm.turn_pwm_right" => self.fsm_turn_pwm_right = parse!(u8),
            "fsm.reverse_pwm" => self.fsm_reverse_pwm = parse!(u8),
            "fsm.forward_pwm" => self.fsm_forward_pwm = parse!(u8),
            "fsm.search_pwm" => self.fsm_search_pwm = parse!(u8),
            "fsm.spiral_pwm" => self.fsm_spiral_pwm = parse!(u8),
            "fsm.recover_timeout" => {
                self.fsm_recover_timeout = positive(parse!(f64)).map_err(&bad)?
            }
            "start.path_s" => self.start_path_s = non_negative(parse!(f64)).map_err(&bad)?,
            "start.offset" => self.start_offset = parse!(f64),
            "start.offset_jitter" => {
                self.start_offset_jitter = non_negative(parse!(f64)).map_err(&bad)?
            }
            "start.heading" => self.start_heading = parse!(f64),
            "start.heading_jitter" => {
                self.start_heading_jitter = non_negative(parse!(f64)).map_err(&bad)?
            }
            "experiment.trials" => {
                self.trials = parse!(usize);
                if self.trials == 0 {
                    return Err(bad("must be at least 1"));
                }
            }
            "experiment.settle" => self.settle = non_negative(parse!(f64)).map_err(&bad)?,
            "power.capacity_mah" => {
                self.power_capacity_mah = positive(parse!(f64)).map_err(&bad)?
            }
            "power.derating" => self.power_derating = positive(parse!(f64)).map_err(bad)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.into(),
                })
            }
        }
        Ok(())
    }

    /// Effective reflectance thresholds (explicit or the gain/2 midpoint).
    pub fn thresholds(&self) -> (u16, u16) {
        let derived = (self.ir_gain / 2.0).round() as u16;
        (
            self.ir_threshold_left.unwrap_or(derived),
            self.ir_threshold_right.unwrap_or(derived),
        )
    }

    /// Materialize the scenario configuration for the simulation core.
    pub fn scenario(&self) -> Result<ScenarioConfig, ConfigError> {
        let (threshold_left, threshold_right) = self.thresholds();
        let ultrasonic = UltrasonicModel::new(
            self.us_temperature,
            self.us_jitter_sigma,
            self.us_min_range,
            self.us_max_range,
        )
        .map_err(|e| ConfigError::BadValue {
            line: 0,
            key: "us.*".into(),
            msg: e.to_string(),
        })?;
        Ok(ScenarioConfig {
            controller: self.controller,
            gains: PidGains {
                kp: self.pid_kp,
                ki: self.pid_ki,
                kd: self.pid_kd,
                t_s: 0.05,
            },
            base_pwm: self.base_pwm,
            onoff_turn_pwm: self.onoff_turn_pwm,
            plant: PlantParams {
                tau_motor: self.tau_motor,
                gain_left: self.gain_left,
                gain_right: self.gain_right,
            },
            geometry: RobotGeometry {
                wheel_base: self.wheel_base,
                sensor_forward: self.sensor_forward,
                sensor_spacing: self.sensor_spacing,
                ultrasonic_forward: self.ultrasonic_forward,
            },
            ir: IrSensorModel {
                gain: self.ir_gain,
                noise_sigma: self.ir_noise_sigma,
                invert: true,
            },
            threshold_left,
            threshold_right,
            ultrasonic,
            debounce_threshold: self.us_threshold,
            debounce_required: self.us_debounce,
            fsm_enabled: self.fsm_enabled,
            fsm: FsmParams {
                detect_threshold: self.us_threshold,
                turn_pwm_left: self.fsm_turn_pwm_left,
                turn_pwm_right: self.fsm_turn_pwm_right,
                reverse_pwm: self.fsm_reverse_pwm,
                forward_pwm: self.fsm_forward_pwm,
                search_pwm: self.fsm_search_pwm,
                spiral_pwm: self.fsm_spiral_pwm,
                recover_timeout: self.fsm_recover_timeout,
                wheel_base: self.wheel_base,
                ..FsmParams::default()
            },
            start: StartCondition {
                path_s: self.start_path_s,
                lateral_offset: self.start_offset,
                offset_jitter: self.start_offset_jitter,
                heading_error: self.start_heading,
                heading_jitter: self.start_heading_jitter,
            },
            duration: self.duration,
            substep: self.substep,
            seed: self.seed,
        })
    }

    /// Canonical snapshot of every key, sorted, one per line.
    pub fn resolved(&self) -> String {
        let (tl, tr) = self.thresholds();
        let mut pairs: Vec<(String, String)> = vec![
            kv("track", &self.track),
            kv("seed", self.seed),
            kv("duration", self.duration),
            kv("substep", self.substep),
            kv("jobs", self.jobs),
            kv(
                "controller.kind",
                match self.controller {
                    ControllerKind::Pid => "pid",
                    ControllerKind::OnOff => "onoff",
                },
            ),
            kv("pid.kp", self.pid_kp),
            kv("pid.ki", self.pid_ki),
            kv("pid.kd", self.pid_kd),
            kv("pid.base_pwm", self.base_pwm),
            kv("onoff.turn_pwm", self.onoff_turn_pwm),
            kv("plant.wheel_base", self.wheel_base),
            kv("plant.tau_motor", self.tau_motor),
            kv("plant.gain_left", self.gain_left),
            kv("plant.gain_right", self.gain_right),
            kv("robot.sensor_forward", self.sensor_forward),
            kv("robot.sensor_spacing", self.sensor_spacing),
            kv("robot.ultrasonic_forward", self.ultrasonic_forward),
            kv("ir.gain", self.ir_gain),
            kv("ir.noise_sigma", self.ir_noise_sigma),
            kv("ir.threshold_left", tl),
            kv("ir.threshold_right", tr),
            kv("us.temperature", self.us_temperature),
            kv("us.jitter_sigma", self.us_jitter_sigma),
            kv("us.min_range", self.us_min_range),
            kv("us.max_range", self.us_max_range),
            kv("us.threshold", self.us_threshold),
            kv("us.debounce", self.us_debounce),
            kv("fsm.enabled", self.fsm_enabled),
            kv("fsm.turn_pwm_left", self.fsm_turn_pwm_left),
            kv("fsm.turn_pwm_right", self.fsm_turn_pwm_right),
            kv("fsm.reverse_pwm", self.fsm_reverse_pwm),
            kv("fsm.forward_pwm", self.fsm_forward_pwm),
            kv("fsm.search_pwm", self.fsm_search_pwm),
            kv("fsm.spiral_pwm", self.fsm_spiral_pwm),
            kv("fsm.recover_timeout", self.fsm_recover_timeout),
            kv("start.path_s", self.start_path_s),
            kv("start.offset", self.start_offset),
            kv("start.offset_jitter", self.start_offset_jitter),
            kv("start.heading", self.start_heading),
            kv("start.heading_jitter", self.start_heading_jitter),
            kv("experiment.trials", self.trials),
            kv("experiment.settle", self.settle),
            kv("power.capacity_mah", self.power_capacity_mah),
            kv("power.derating", self.power_derating),
        ];
        pairs.sort();
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Stable fingerprint of the resolved configuration.
    pub fn fingerprint(&self) -> u64 {
        fnv1a64(self.resolved().as_bytes())
    }
}

fn kv(key: &str, value: impl std::fmt::Display) -> (String, String) {
    (key.to_string(), value.to_string())
}

fn positive(v: f64) -> Result<f64, &'static str> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err("must be positive")
    }
}

fn non_negative(v: f64) -> Result<f64, &'static str> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err("must be non-negative")
    }
}
