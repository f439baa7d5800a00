//! Closed-loop ultimate-gain identification and the Ziegler-Nichols table.
//!
//! The tuner drives a caller-supplied closed-loop scenario proportional-only,
//! classifies the resulting error trace (decaying, sustained, or growing by
//! the ratio of successive oscillation peaks), and bisects the gain between
//! the decay and growth regimes. The first sustained classification ends the
//! search; otherwise the midpoint of the final bracket is reported with the
//! period measured there. Traces shorter than the requested length are read
//! as divergence (the loop lost its line or left the course) and count as
//! growing.

use alloc::vec::Vec;

use crate::control::PidGains;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OscClass {
    Decaying,
    Sustained,
    Growing,
}

impl OscClass {
    pub fn name(self) -> &'static str {
        match self {
            OscClass::Decaying => "decaying",
            OscClass::Sustained => "sustained",
            OscClass::Growing => "growing",
        }
    }
}

/// Peak-ratio band treated as sustained oscillation.
pub const SUSTAINED_BAND: (f64, f64) = (0.95, 1.05);

/// Transient discarded from the head of each trace (s).
pub const TRANSIENT_SKIP: f64 = 2.0;

/// Minimum trace length accepted by the classifier (s).
pub const MIN_TRACE: f64 = 10.0;

#[derive(Debug, Clone, Copy)]
pub struct OscillationMeasure {
    pub class: OscClass,
    /// Oscillation period (s), from interpolated zero crossings.
    pub period: f64,
    /// Mean oscillation peak magnitude.
    pub amplitude: f64,
}

/// Identification result.
#[derive(Debug, Clone, Copy)]
pub struct OscillationReport {
    pub ku: f64,
    pub tu: f64,
    pub amplitude: f64,
    pub classification: OscClass,
}

/// One gain evaluation, kept for diagnostics and the tuning report.
#[derive(Debug, Clone, Copy)]
pub struct TuneEval {
    pub kp: f64,
    /// `None` when the trace had no usable oscillation.
    pub measure: Option<OscillationMeasure>,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub enum TuningError {
    TraceTooShort { seconds: f64 },
    NoOscillation,
    /// The bracket never straddled the critical gain.
    NoCriticalGainInRange { evals: Vec<TuneEval> },
    InvalidRange,
    InvalidPeriod,
}

impl core::fmt::Display for TuningError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TuningError::TraceTooShort { seconds } => {
                write!(f, "trace too short: {seconds:.2} s, need {MIN_TRACE} s")
            }
            TuningError::NoOscillation => write!(f, "no oscillation: fewer than 4 zero crossings"),
            TuningError::NoCriticalGainInRange { evals } => write!(
                f,
                "no critical gain inside the searched range ({} evaluations)",
                evals.len()
            ),
            TuningError::InvalidRange => write!(f, "gain range must satisfy 0 <= lo < hi"),
            TuningError::InvalidPeriod => write!(f, "oscillation period must be positive"),
        }
    }
}

impl core::error::Error for TuningError {}

/// Classify an error trace sampled at `t_s` seconds per sample.
///
/// Zero crossings are located by linear interpolation; the period is twice the
/// mean half-period. Classification compares successive oscillation peaks:
/// geometric-mean ratio below 0.95 decays, above 1.05 grows, sustained
/// between.
pub fn classify_oscillation(
    trace: &[f64],
    t_s: f64,
) -> Result<OscillationMeasure, TuningError> {
    let seconds = trace.len() as f64 * t_s;
    if seconds < MIN_TRACE {
        return Err(TuningError::TraceTooShort { seconds });
    }
    let skip = libm::round(TRANSIENT_SKIP / t_s) as usize;
    let body = &trace[skip.min(trace.len())..];

    // Interpolated zero-crossing times.
    let mut crossings: Vec<f64> = Vec::new();
    for i in 0..body.len().saturating_sub(1) {
        let (a, b) = (body[i], body[i + 1]);
        if (a > 0.0) != (b > 0.0) && a != b {
            let frac = a / (a - b);
            crossings.push((i as f64 + frac) * t_s);
        }
    }
    if crossings.len() < 4 {
        return Err(TuningError::NoOscillation);
    }
    let half_periods = crossings.len() - 1;
    let period = 2.0 * (crossings[crossings.len() - 1] - crossings[0]) / half_periods as f64;

    // Peak magnitude inside each half-cycle.
    let mut peaks: Vec<f64> = Vec::new();
    for w in crossings.windows(2) {
        let from = libm::ceil(w[0] / t_s) as usize;
        let to = (libm::floor(w[1] / t_s) as usize).min(body.len() - 1);
        let mut peak = 0.0f64;
        for &v in &body[from..=to.max(from)] {
            peak = peak.max(libm::fabs(v));
        }
        if peak > 0.0 {
            peaks.push(peak);
        }
    }
    if peaks.len() < 3 {
        return Err(TuningError::NoOscillation);
    }
    let first = peaks[0];
    let last = peaks[peaks.len() - 1];
    let ratio = libm::pow(last / first, 1.0 / (peaks.len() - 1) as f64);
    let class = if ratio < SUSTAINED_BAND.0 {
        OscClass::Decaying
    } else if ratio > SUSTAINED_BAND.1 {
        OscClass::Growing
    } else {
        OscClass::Sustained
    };
    let amplitude = peaks.iter().sum::<f64>() / peaks.len() as f64;
    Ok(OscillationMeasure {
        class,
        period,
        amplitude,
    })
}

/// Search for the ultimate gain by bisection.
///
/// `run` simulates the proportional-only closed loop at a candidate gain and
/// returns the error trace sampled at `t_s`; traces shorter than
/// `expected_samples` are treated as divergence. `NoOscillation` traces count
/// as below-critical. Deterministic: the same closure and range always visit
/// the same gains.
pub fn find_critical_gain(
    mut run: impl FnMut(f64) -> Vec<f64>,
    t_s: f64,
    expected_samples: usize,
    kp_lo: f64,
    kp_hi: f64,
    tolerance: f64,
) -> Result<(OscillationReport, Vec<TuneEval>), TuningError> {
    if !(kp_lo >= 0.0 && kp_lo < kp_hi && tolerance > 0.0) {
        return Err(TuningError::InvalidRange);
    }
    let mut evals: Vec<TuneEval> = Vec::new();
    let mut evaluate = |kp: f64, evals: &mut Vec<TuneEval>| -> (Option<OscillationMeasure>, bool) {
        let trace = run(kp);
        let diverged = trace.len() < expected_samples;
        let measure = classify_oscillation(&trace, t_s).ok();
        evals.push(TuneEval {
            kp,
            measure,
            diverged,
        });
        (measure, diverged)
    };
    // A diverged run is growth regardless of what its truncated trace says.
    let side = |measure: Option<OscillationMeasure>, diverged: bool| -> OscClass {
        if diverged {
            OscClass::Growing
        } else {
            measure.map_or(OscClass::Decaying, |m| m.class)
        }
    };

    let (m_lo, d_lo) = evaluate(kp_lo, &mut evals);
    if side(m_lo, d_lo) != OscClass::Decaying {
        return Err(TuningError::NoCriticalGainInRange { evals });
    }
    let (m_hi, d_hi) = evaluate(kp_hi, &mut evals);
    if side(m_hi, d_hi) != OscClass::Growing {
        return Err(TuningError::NoCriticalGainInRange { evals });
    }

    let mut lo = kp_lo;
    let mut hi = kp_hi;
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        let (measure, diverged) = evaluate(mid, &mut evals);
        match side(measure, diverged) {
            OscClass::Sustained => {
                let m = measure.expect("sustained implies a measure");
                return Ok((
                    OscillationReport {
                        ku: mid,
                        tu: m.period,
                        amplitude: m.amplitude,
                        classification: OscClass::Sustained,
                    },
                    evals,
                ));
            }
            OscClass::Decaying => lo = mid,
            OscClass::Growing => hi = mid,
        }
    }

    // The bracket collapsed without touching the sustained band; measure the
    // midpoint for the period.
    let ku = 0.5 * (lo + hi);
    let (measure, _) = evaluate(ku, &mut evals);
    match measure {
        Some(m) => Ok((
            OscillationReport {
                ku,
                tu: m.period,
                amplitude: m.amplitude,
                classification: m.class,
            },
            evals,
        )),
        None => Err(TuningError::NoCriticalGainInRange { evals }),
    }
}

/// Classic closed-loop PID table from the ultimate gain and period:
/// kp = 0.6 Ku, ki = 2 kp / Tu, kd = kp Tu / 8.
pub fn zn_gains(ku: f64, tu: f64) -> Result<PidGains, TuningError> {
    if !(tu > 0.0) {
        return Err(TuningError::InvalidPeriod);
    }
    let kp = 0.6 * ku;
    // Evaluation order keeps short-decimal inputs exact through the table.
    let ki = 12.0 * ku / (10.0 * tu);
    let kd = kp * tu / 8.0;
    Ok(PidGains {
        kp,
        ki,
        kd,
        ..PidGains::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    const TS: f64 = 0.05;

    fn sampled(f: impl Fn(f64) -> f64, duration: f64) -> Vec<f64> {
        let n = (duration / TS) as usize;
        (0..n).map(|k| f(k as f64 * TS)).collect()
    }

    #[test]
    fn classify_pure_sine() {
        let trace = sampled(|t| libm::sin(crate::geom::TAU * t / 0.4), 12.0);
        let m = classify_oscillation(&trace, TS).unwrap();
        assert_eq!(m.class, OscClass::Sustained);
        assert!((m.period - 0.4).abs() < 0.01, "{}", m.period);
    }

    #[test]
    fn classify_decay_and_growth() {
        let decay = sampled(|t| libm::exp(-t / 4.0) * libm::sin(crate::geom::TAU * t / 2.0), 20.0);
        assert_eq!(classify_oscillation(&decay, TS).unwrap().class, OscClass::Decaying);
        let grow = sampled(|t| libm::exp(t / 8.0) * libm::sin(crate::geom::TAU * t / 2.0), 20.0);
        assert_eq!(classify_oscillation(&grow, TS).unwrap().class, OscClass::Growing);
    }

    #[test]
    fn classify_rejects_flat_and_short() {
        let flat = sampled(|_| 0.0, 12.0);
        assert!(matches!(
            classify_oscillation(&flat, TS),
            Err(TuningError::NoOscillation)
        ));
        let short = sampled(libm::sin, 5.0);
        assert!(matches!(
            classify_oscillation(&short, TS),
            Err(TuningError::TraceTooShort { .. })
        ));
    }

    /// Synthetic loop family with an exactly known critical gain of 6: the
    /// envelope grows for kp above it and decays below.
    fn synthetic_loop(kp: f64) -> Vec<f64> {
        let period = 2.0;
        sampled(
            move |t| libm::exp((kp - 6.0) * 0.08 * t) * libm::sin(crate::geom::TAU * t / period),
            40.0,
        )
    }

    #[test]
    fn bisection_recovers_synthetic_critical_gain() {
        let n = (40.0 / TS) as usize;
        let (report, evals) =
            find_critical_gain(synthetic_loop, TS, n, 1.0, 20.0, 0.05).unwrap();
        assert!((report.ku - 6.0).abs() < 0.35, "ku {}", report.ku);
        assert!((report.tu - 2.0).abs() < 0.05, "tu {}", report.tu);
        assert!(!evals.is_empty());
        // Convergence bound: two bracket probes plus ceil(log2(range/tol)).
        assert!(evals.len() <= 2 + 9, "{} evals", evals.len());
    }

    #[test]
    fn bisection_is_deterministic() {
        let n = (40.0 / TS) as usize;
        let a = find_critical_gain(synthetic_loop, TS, n, 1.0, 20.0, 0.05).unwrap();
        let b = find_critical_gain(synthetic_loop, TS, n, 1.0, 20.0, 0.05).unwrap();
        assert_eq!(a.0.ku.to_bits(), b.0.ku.to_bits());
        assert_eq!(a.1.len(), b.1.len());
    }

    #[test]
    fn range_excluding_critical_gain_fails() {
        let n = (40.0 / TS) as usize;
        assert!(matches!(
            find_critical_gain(synthetic_loop, TS, n, 0.5, 3.0, 0.05),
            Err(TuningError::NoCriticalGainInRange { .. })
        ));
        assert!(matches!(
            find_critical_gain(synthetic_loop, TS, n, 8.0, 20.0, 0.05),
            Err(TuningError::NoCriticalGainInRange { .. })
        ));
    }

    #[test]
    fn zn_table_values() {
        let g = zn_gains(8.5, 0.4).unwrap();
        assert_eq!(g.kp, 5.1);
        assert_eq!(g.ki, 25.5);
        assert_eq!(g.kd, 0.255);

        let g = zn_gains(1.0, 1.0).unwrap();
        assert!((g.kp - 0.6).abs() < 1e-15);
        assert!((g.ki - 1.2).abs() < 1e-15);
        assert!((g.kd - 0.075).abs() < 1e-15);

        let g = zn_gains(10.0, 0.5).unwrap();
        assert!((g.kp - 6.0).abs() < 1e-12);
        assert!((g.ki - 24.0).abs() < 1e-12);
        assert!((g.kd - 0.375).abs() < 1e-12);

        assert!(zn_gains(5.0, 0.0).is_err());
    }

    #[test]
    fn zn_scales_linearly_in_ku() {
        for c in [0.5, 2.0, 3.7] {
            let base = zn_gains(4.0, 0.8).unwrap();
            let scaled = zn_gains(c * 4.0, 0.8).unwrap();
            assert!((scaled.kp - c * base.kp).abs() < 1e-12);
            assert!((scaled.ki - c * base.ki).abs() < 1e-12);
            assert!((scaled.kd - c * base.kd).abs() < 1e-12);
        }
    }
}
