//! Virtual reflectance and ultrasonic sensors.
//!
//! The reflectance path models a 10-bit ADC with an inverted response (dark
//! reads high), Gaussian count noise, a 5-sample median filter, and the
//! white/black threshold calibration with its consistency check. The
//! ultrasonic path models temperature-compensated time-of-flight with timing
//! jitter, a 2 cm - 4 m envelope, and the three-sample detection debounce.

use alloc::format;
use alloc::string::String;

use crate::geom::Vec2;
use crate::rng::Rng;
use crate::track::Track;

/// Full-scale ADC reading (10-bit).
pub const ADC_MAX: u16 = 1023;

/// Calibration consistency limit: sample standard deviation must stay below
/// this many counts.
pub const CONSISTENCY_LIMIT: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub enum SensorError {
    InsufficientSamples { have: usize, need: usize },
    Indistinguishable { white_mean: f64, black_mean: f64 },
    TemperatureOutOfRange(f64),
    BadRange(String),
}

impl core::fmt::Display for SensorError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SensorError::InsufficientSamples { have, need } => {
                write!(f, "need at least {need} samples per surface, got {have}")
            }
            SensorError::Indistinguishable {
                white_mean,
                black_mean,
            } => write!(
                f,
                "surfaces indistinguishable: white mean {white_mean:.1} >= black mean {black_mean:.1}"
            ),
            SensorError::TemperatureOutOfRange(t) => {
                write!(f, "temperature {t} C outside [-40, 60] C")
            }
            SensorError::BadRange(msg) => write!(f, "{msg}"),
        }
    }
}

impl core::error::Error for SensorError {}

/// Reflectance sensor model: counts = gain * response + noise, clamped to the
/// ADC range. With `invert` set (the default), dark surfaces read high.
#[derive(Debug, Clone, Copy)]
pub struct IrSensorModel {
    pub gain: f64,
    pub noise_sigma: f64,
    pub invert: bool,
}

impl Default for IrSensorModel {
    fn default() -> Self {
        IrSensorModel {
            gain: 900.0,
            noise_sigma: 6.0,
            invert: true,
        }
    }
}

/// One ADC conversion over a surface of the given reflectance.
pub fn read_ir(model: &IrSensorModel, reflectance: f64, rng: &mut Rng) -> u16 {
    debug_assert!((0.0..=1.0).contains(&reflectance));
    let response = if model.invert {
        1.0 - reflectance
    } else {
        reflectance
    };
    let counts = libm::round(model.gain * response + rng.normal(0.0, model.noise_sigma));
    counts.clamp(0.0, ADC_MAX as f64) as u16
}

/// Median of a 5-sample window (3rd order statistic).
pub fn median5(window: &[u16; 5]) -> u16 {
    let mut w = *window;
    w.sort_unstable();
    w[2]
}

/// Rolling 5-sample median filter, seeded with the first reading.
#[derive(Debug, Clone)]
pub struct MedianFilter {
    window: [u16; 5],
    cursor: usize,
    primed: bool,
}

impl MedianFilter {
    pub fn new() -> Self {
        MedianFilter {
            window: [0; 5],
            cursor: 0,
            primed: false,
        }
    }

    pub fn push(&mut self, sample: u16) -> u16 {
        if !self.primed {
            self.window = [sample; 5];
            self.primed = true;
        } else {
            self.window[self.cursor] = sample;
        }
        self.cursor = (self.cursor + 1) % 5;
        median5(&self.window)
    }
}

impl Default for MedianFilter {
    fn default() -> Self {
        MedianFilter::new()
    }
}

/// Result of the white/black threshold calibration.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationRecord {
    pub v_white_mean: f64,
    pub v_black_mean: f64,
    pub v_threshold: u16,
    /// Pooled sample standard deviation across both surfaces.
    pub sample_std: f64,
    /// Samples per surface (the smaller of the two sets).
    pub sample_count: usize,
}

/// Minimum samples per surface for calibration.
pub const CALIBRATION_SAMPLES: usize = 50;

fn mean_u16(samples: &[u16]) -> f64 {
    samples.iter().map(|&x| x as f64).sum::<f64>() / samples.len() as f64
}

/// Sample standard deviation (n-1 denominator).
pub fn sample_std_u16(samples: &[u16]) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let m = mean_u16(samples);
    let ss: f64 = samples.iter().map(|&x| (x as f64 - m) * (x as f64 - m)).sum();
    libm::sqrt(ss / (samples.len() - 1) as f64)
}

/// Derive the binarization threshold as the midpoint of the white and black
/// means. Fails when either set is short or the surfaces overlap.
pub fn calibrate_threshold(
    white: &[u16],
    black: &[u16],
) -> Result<CalibrationRecord, SensorError> {
    let have = white.len().min(black.len());
    if have < CALIBRATION_SAMPLES {
        return Err(SensorError::InsufficientSamples {
            have,
            need: CALIBRATION_SAMPLES,
        });
    }
    let white_mean = mean_u16(white);
    let black_mean = mean_u16(black);
    if black_mean <= white_mean {
        return Err(SensorError::Indistinguishable {
            white_mean,
            black_mean,
        });
    }
    let sw = sample_std_u16(white);
    let sb = sample_std_u16(black);
    let pooled = libm::sqrt(
        ((white.len() - 1) as f64 * sw * sw + (black.len() - 1) as f64 * sb * sb)
            / (white.len() + black.len() - 2) as f64,
    );
    Ok(CalibrationRecord {
        v_white_mean: white_mean,
        v_black_mean: black_mean,
        v_threshold: libm::round((white_mean + black_mean) / 2.0) as u16,
        sample_std: pooled,
        sample_count: have,
    })
}

/// Line bit: strictly above threshold reads as the dark line.
pub fn binarize(counts: u16, record: &CalibrationRecord) -> bool {
    over_threshold(counts, record.v_threshold)
}

/// Threshold comparison shared by [`binarize`] and the runtime.
pub fn over_threshold(counts: u16, threshold: u16) -> bool {
    counts > threshold
}

/// Post-calibration stability check over a stationary sample set.
#[derive(Debug, Clone, Copy)]
pub struct ConsistencyReport {
    pub std: f64,
    pub pass: bool,
}

pub fn verify_consistency(samples: &[u16]) -> ConsistencyReport {
    let std = sample_std_u16(samples);
    ConsistencyReport {
        std,
        pass: std < CONSISTENCY_LIMIT,
    }
}

/// Speed of sound in air at `temp_c` degrees Celsius.
pub fn speed_of_sound(temp_c: f64) -> Result<f64, SensorError> {
    if !(-40.0..=60.0).contains(&temp_c) {
        return Err(SensorError::TemperatureOutOfRange(temp_c));
    }
    Ok(331.3 * libm::sqrt(1.0 + temp_c / 273.15))
}

/// Ultrasonic rangefinder model.
#[derive(Debug, Clone, Copy)]
pub struct UltrasonicModel {
    temperature: f64,
    sound_speed: f64,
    pub jitter_sigma: f64,
    pub min_range: f64,
    pub max_range: f64,
}

impl UltrasonicModel {
    pub fn new(
        temperature: f64,
        jitter_sigma: f64,
        min_range: f64,
        max_range: f64,
    ) -> Result<Self, SensorError> {
        let sound_speed = speed_of_sound(temperature)?;
        if !(min_range > 0.0 && min_range < max_range && max_range <= 4.0) {
            return Err(SensorError::BadRange(format!(
                "range envelope must satisfy 0 < min < max <= 4 m, got [{min_range}, {max_range}]"
            )));
        }
        if jitter_sigma < 0.0 {
            return Err(SensorError::BadRange(String::from(
                "timing jitter must be non-negative",
            )));
        }
        Ok(UltrasonicModel {
            temperature,
            sound_speed,
            jitter_sigma,
            min_range,
            max_range,
        })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed
    }

    /// Convert an echo round-trip time to a distance; readings outside the
    /// envelope are "no echo" rather than errors.
    pub fn echo_to_distance(&self, round_trip_s: f64) -> Option<f64> {
        debug_assert!(round_trip_s >= 0.0);
        let d = self.sound_speed * round_trip_s / 2.0;
        if d < self.min_range || d > self.max_range {
            None
        } else {
            Some(d)
        }
    }

    /// End-to-end virtual measurement: raycast the world, synthesize the
    /// round-trip time, add timing jitter, convert back.
    pub fn measure(
        &self,
        track: &Track,
        origin: Vec2,
        heading: f64,
        t: f64,
        rng: &mut Rng,
    ) -> Option<f64> {
        let true_dist = track.ray_distance(origin, heading, self.max_range, t)?;
        let round_trip = 2.0 * true_dist / self.sound_speed + rng.normal(0.0, self.jitter_sigma);
        self.echo_to_distance(round_trip.max(0.0))
    }
}

impl Default for UltrasonicModel {
    fn default() -> Self {
        UltrasonicModel::new(25.0, 50e-6, 0.02, 4.0).expect("default envelope is valid")
    }
}

/// Obstacle-confirmation debounce: `required` consecutive readings below
/// `threshold` confirm a detection; anything else resets the counter.
#[derive(Debug, Clone, Copy)]
pub struct DebounceState {
    pub consecutive_below: u8,
    pub threshold: f64,
    pub required: u8,
}

impl DebounceState {
    pub fn new(threshold: f64, required: u8) -> Self {
        DebounceState {
            consecutive_below: 0,
            threshold,
            required,
        }
    }

    /// Feed one reading; returns whether the detection is confirmed.
    pub fn update(&mut self, distance: Option<f64>) -> bool {
        match distance {
            Some(d) if d < self.threshold => {
                self.consecutive_below = (self.consecutive_below + 1).min(self.required);
            }
            _ => self.consecutive_below = 0,
        }
        self.consecutive_below >= self.required
    }
}

impl Default for DebounceState {
    fn default() -> Self {
        DebounceState::new(0.20, 3)
    }
}

/// One control tick of perception.
#[derive(Debug, Clone, Copy)]
pub struct SensorFrame {
    pub raw_left: u16,
    pub raw_right: u16,
    pub filt_left: u16,
    pub filt_right: u16,
    pub bit_left: bool,
    pub bit_right: bool,
    pub distance: Option<f64>,
}
