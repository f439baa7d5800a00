//! Summary statistics and two-sample t-tests.
//!
//! The Student t distribution is evaluated directly (Lanczos log-gamma plus a
//! Lentz continued fraction for the regularized incomplete beta), so p-values
//! and confidence intervals need no external dependency. The pooled-variance
//! test is the default (df = n_a + n_b - 2); a Welch variant is available for
//! unequal variances.

use alloc::vec::Vec;

/// Cap applied to the t statistic when a pooled variance degenerates to zero.
pub const T_CAP: f64 = 1e6;

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n-1 denominator); zero for fewer than two
/// values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|&x| (x - m) * (x - m)).sum();
    libm::sqrt(ss / (values.len() - 1) as f64)
}

/// Five-number summary with a Student-t 95% confidence interval on the mean.
#[derive(Debug, Clone, Copy)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub ci95: (f64, f64),
}

/// Summarize a non-empty sample. A single value yields std 0 and a degenerate
/// interval equal to the point.
pub fn summarize(values: &[f64]) -> Summary {
    assert!(!values.is_empty(), "summarize needs at least one value");
    let n = values.len();
    let m = mean(values);
    let s = sample_std(values);
    let mut lo = values[0];
    let mut hi = values[0];
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let ci95 = if n < 2 || s == 0.0 {
        (m, m)
    } else {
        let half = t_quantile_two_sided(0.95, (n - 1) as f64) * s / libm::sqrt(n as f64);
        (m - half, m + half)
    };
    Summary {
        n,
        mean: m,
        std: s,
        min: lo,
        max: hi,
        ci95,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    /// P(T >= t): small when the first sample's mean is the larger one.
    pub p_one_tailed: f64,
    pub p_two_tailed: f64,
    pub cohens_d: f64,
}

/// Pooled-variance (Student) two-sample t-test, one-tailed in the direction
/// `mean(a) > mean(b)`. Cohen's d uses the pooled standard deviation.
pub fn t_test_pooled(a: &[f64], b: &[f64]) -> TTestResult {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    assert!(na >= 2.0 && nb >= 2.0, "t-test needs two values per sample");
    let (ma, mb) = (mean(a), mean(b));
    let (sa, sb) = (sample_std(a), sample_std(b));
    let df = na + nb - 2.0;
    let pooled_var = ((na - 1.0) * sa * sa + (nb - 1.0) * sb * sb) / df;
    let pooled = libm::sqrt(pooled_var);
    let se = pooled * libm::sqrt(1.0 / na + 1.0 / nb);
    let (t, d) = if se == 0.0 {
        if ma == mb {
            (0.0, 0.0)
        } else if ma > mb {
            (T_CAP, T_CAP)
        } else {
            (-T_CAP, -T_CAP)
        }
    } else {
        ((ma - mb) / se, (ma - mb) / pooled)
    };
    finish_test(t, df, d)
}

/// Welch's unequal-variance t-test with the Welch-Satterthwaite df. Cohen's d
/// still reports the pooled-standard-deviation effect size.
pub fn t_test_welch(a: &[f64], b: &[f64]) -> TTestResult {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    assert!(na >= 2.0 && nb >= 2.0, "t-test needs two values per sample");
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = {
        let (sa, sb) = (sample_std(a), sample_std(b));
        (sa * sa, sb * sb)
    };
    let sea = va / na;
    let seb = vb / nb;
    let se = libm::sqrt(sea + seb);
    let pooled = libm::sqrt(((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0));
    let d = if pooled == 0.0 {
        if ma == mb {
            0.0
        } else if ma > mb {
            T_CAP
        } else {
            -T_CAP
        }
    } else {
        (ma - mb) / pooled
    };
    if se == 0.0 {
        let t = if ma == mb {
            0.0
        } else if ma > mb {
            T_CAP
        } else {
            -T_CAP
        };
        return finish_test(t, na + nb - 2.0, d);
    }
    let df = (sea + seb) * (sea + seb) / (sea * sea / (na - 1.0) + seb * seb / (nb - 1.0));
    finish_test((ma - mb) / se, df, d)
}

fn finish_test(t: f64, df: f64, d: f64) -> TTestResult {
    let p_one = t_sf(t, df);
    let p_two = 2.0 * t_sf(libm::fabs(t), df);
    TTestResult {
        t,
        df,
        p_one_tailed: p_one,
        p_two_tailed: p_two.min(1.0),
        cohens_d: d,
    }
}

/// Log of the gamma function (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection for the left half-plane.
        let pi = core::f64::consts::PI;
        return libm::log(pi / libm::sin(pi * x)) - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.999_999_999_999_809_9;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    0.5 * libm::log(2.0 * core::f64::consts::PI) + (x + 0.5) * libm::log(t) - t + libm::log(acc)
}

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * libm::log(x) + b * libm::log(1.0 - x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if libm::fabs(d) < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if libm::fabs(d) < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if libm::fabs(c) < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if libm::fabs(d) < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if libm::fabs(c) < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if libm::fabs(delta - 1.0) < EPS {
            break;
        }
    }
    h
}

/// Survival function of the Student t distribution, P(T >= t).
pub fn t_sf(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    if t < 0.0 {
        return 1.0 - t_sf(-t, df);
    }
    if t == 0.0 {
        return 0.5;
    }
    let x = df / (df + t * t);
    0.5 * reg_inc_beta(df / 2.0, 0.5, x)
}

/// Two-sided critical value: the t with P(|T| <= t) = `confidence`.
pub fn t_quantile_two_sided(confidence: f64, df: f64) -> f64 {
    let tail = (1.0 - confidence) / 2.0;
    // sf is strictly decreasing; bisect it.
    let mut lo = 0.0;
    let mut hi = 1e3;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_sf(mid, df) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Student-t one-tailed p from pre-computed group statistics; used when only
/// summaries are available.
pub fn pooled_df(na: usize, nb: usize) -> usize {
    na + nb - 2
}

/// Convenience: absolute values of a slice.
pub fn abs_values(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| libm::fabs(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_basics() {
        let s = summarize(&[1.0, 1.0, 1.0]);
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.std, 0.0);
        assert_eq!(s.ci95, (1.0, 1.0));

        let s = summarize(&[0.0, 2.0]);
        assert_eq!(s.mean, 1.0);
        assert!((s.std - libm::sqrt(2.0)).abs() < 1e-15);
        assert_eq!((s.min, s.max), (0.0, 2.0));

        let s = summarize(&[3.5]);
        assert_eq!(s.std, 0.0);
        assert_eq!(s.ci95, (3.5, 3.5));
    }

    #[test]
    fn t_quantiles_match_tables() {
        // Reference two-sided 95% critical values.
        assert!((t_quantile_two_sided(0.95, 49.0) - 2.009575).abs() < 1e-4);
        assert!((t_quantile_two_sided(0.95, 98.0) - 1.984467).abs() < 1e-4);
        assert!((t_quantile_two_sided(0.95, 10.0) - 2.228139).abs() < 1e-4);
    }

    #[test]
    fn ci_halfwidth_case() {
        // n = 50, mean 1.18, std 0.34: half-width = t(.975,49) * 0.34 / sqrt(50).
        let mut values = [0.0f64; 50];
        // Construct a sample with exactly this mean and std: alternate around
        // the mean with one adjustment pair.
        for (i, v) in values.iter_mut().enumerate() {
            *v = if i % 2 == 0 { 1.18 + 0.34 } else { 1.18 - 0.34 };
        }
        // sample std of the +/- pattern is slightly above 0.34; scale it back.
        let s0 = sample_std(&values);
        for v in values.iter_mut() {
            *v = 1.18 + (*v - 1.18) * 0.34 / s0;
        }
        let s = summarize(&values);
        assert!((s.mean - 1.18).abs() < 1e-12);
        assert!((s.std - 0.34).abs() < 1e-12);
        assert!((s.ci95.0 - 1.0834).abs() < 1e-3, "{:?}", s.ci95);
        assert!((s.ci95.1 - 1.2766).abs() < 1e-3, "{:?}", s.ci95);
    }

    #[test]
    fn identical_samples_are_null() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = t_test_pooled(&a, &a);
        assert_eq!(r.t, 0.0);
        assert!((r.p_one_tailed - 0.5).abs() < 1e-12);
        assert_eq!(r.cohens_d, 0.0);
        assert_eq!(r.df, 6.0);
    }

    #[test]
    fn exact_effect_size() {
        // a = {1, 3}: mean 2, var 2; b = {0, 2}: mean 1, var 2.
        // Pooled std = sqrt(2), d = 1/sqrt(2).
        let r = t_test_pooled(&[1.0, 3.0], &[0.0, 2.0]);
        assert!((r.cohens_d - 1.0 / libm::sqrt(2.0)).abs() < 1e-12);
        assert_eq!(r.df, 2.0);
    }

    #[test]
    fn degenerate_variance_caps() {
        let r = t_test_pooled(&[1.0, 1.0], &[0.0, 0.0]);
        assert_eq!(r.t, T_CAP);
        assert!(r.p_one_tailed < 1e-9);
        let r = t_test_pooled(&[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(r.t, -T_CAP);
        assert!(r.p_one_tailed > 1.0 - 1e-9);
    }

    #[test]
    fn swap_symmetry() {
        let a = [2.1, 2.4, 1.9, 2.6, 2.2];
        let b = [1.1, 1.5, 1.2, 0.9, 1.4];
        let ab = t_test_pooled(&a, &b);
        let ba = t_test_pooled(&b, &a);
        assert!((ab.t + ba.t).abs() < 1e-12);
        assert!((ab.cohens_d + ba.cohens_d).abs() < 1e-12);
        assert!((ab.p_one_tailed + ba.p_one_tailed - 1.0).abs() < 1e-9);
    }

    /// Rescale a sample to an exact mean and standard deviation.
    fn with_exact_stats(mut sample: alloc::vec::Vec<f64>, m: f64, s: f64) -> alloc::vec::Vec<f64> {
        let m0 = mean(&sample);
        let s0 = sample_std(&sample);
        for v in sample.iter_mut() {
            *v = m + (*v - m0) * s / s0;
        }
        sample
    }

    #[test]
    fn seeded_effect_size_scale() {
        let mut rng = crate::rng::Rng::new(2024);
        let a: alloc::vec::Vec<f64> = (0..50).map(|_| rng.normal(2.08, 0.52)).collect();
        let b: alloc::vec::Vec<f64> = (0..50).map(|_| rng.normal(1.18, 0.34)).collect();
        let a = with_exact_stats(a, 2.08, 0.52);
        let b = with_exact_stats(b, 1.18, 0.34);
        let r = t_test_pooled(&a, &b);
        assert_eq!(r.df, 98.0);
        assert!(r.p_one_tailed < 0.001, "p {}", r.p_one_tailed);
        // (2.08 - 1.18) / sqrt((0.52^2 + 0.34^2) / 2) = 2.0478.
        assert!((r.cohens_d - 2.0478).abs() < 1e-3, "d {}", r.cohens_d);
    }

    #[test]
    fn sf_against_quadrature() {
        // Independent route: integrate the t pdf with Simpson's rule over a
        // finite window and compare with the matching sf difference (the
        // polynomial tail makes an open-ended window inaccurate at low df).
        for &(df, t) in &[(5.0, 1.3), (49.0, 2.0), (98.0, 3.2), (12.0, 0.4)] {
            let pdf = |x: f64| {
                let c = libm::exp(
                    ln_gamma((df + 1.0) / 2.0)
                        - ln_gamma(df / 2.0)
                        - 0.5 * libm::log(df * core::f64::consts::PI),
                );
                c * libm::pow(1.0 + x * x / df, -(df + 1.0) / 2.0)
            };
            let upper = t + 20.0;
            let n = 20_000;
            let h = (upper - t) / n as f64;
            let mut acc = pdf(t) + pdf(upper);
            for i in 1..n {
                let x = t + i as f64 * h;
                acc += pdf(x) * if i % 2 == 0 { 2.0 } else { 4.0 };
            }
            let integral = acc * h / 3.0;
            let expect = t_sf(t, df) - t_sf(upper, df);
            assert!(
                (expect - integral).abs() < 1e-9,
                "df {df} t {t}: {expect} vs {integral}"
            );
        }
    }

    #[test]
    fn welch_matches_pooled_for_equal_variances() {
        let mut rng = crate::rng::Rng::new(7);
        let a: alloc::vec::Vec<f64> = (0..40).map(|_| rng.normal(1.0, 0.3)).collect();
        let b: alloc::vec::Vec<f64> = (0..40).map(|_| rng.normal(0.8, 0.3)).collect();
        let p = t_test_pooled(&a, &b);
        let w = t_test_welch(&a, &b);
        assert!((p.t - w.t).abs() < 1e-9);
        assert!((p.df - w.df).abs() < 5.0);
    }
}
