//! Normal-approximation confidence intervals and paired Student-t tests for
//! comparing engine score samples.
//!
//! The special functions (log-gamma, regularized incomplete beta and gamma)
//! are implemented here rather than pulled from a statistics crate.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample of size {0} is too small, need at least 2 values")]
    DegenerateSample(usize),
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("confidence level {0} is outside (0, 1)")]
    InvalidLevel(f64),
}

const BETA_CF_TOLERANCE: f64 = 1e-12;
const BETA_CF_MAX_ITER: usize = 300;
const TINY: f64 = 1e-300;

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
#[allow(clippy::excessive_precision)]
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < BETA_CF_TOLERANCE {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Regularized upper incomplete gamma function Q(a, x).
fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let ln_front = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        // Series for P(a, x).
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..1000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        1.0 - sum * ln_front.exp()
    } else {
        // Continued fraction for Q(a, x).
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        ln_front.exp() * h
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        regularized_gamma_q(0.5, x * x)
    } else {
        2.0 - regularized_gamma_q(0.5, x * x)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation followed by one
/// Halley step against [`normal_cdf`].
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    let e = normal_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Two-sided tail probability P(|T| ≥ |t|) for Student's t with `df`
/// degrees of freedom, I_{df/(df+t²)}(df/2, 1/2).
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5)
}

/// Student-t CDF.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * student_t_two_sided_p(t, df);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

fn mean(values: &[f64]) -> f64 {
    let mut m = 0.0;
    for (i, x) in values.iter().enumerate() {
        m += (x - m) / (i + 1) as f64;
    }
    m
}

/// Unbiased sample standard deviation (divisor m - 1).
fn sample_sd(values: &[f64], mean: f64) -> f64 {
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// One engine's per-keyword scores, in a keyword order shared by every
/// sample in the same analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSample {
    pub label: String,
    pub values: Vec<f64>,
}

impl ScoreSample {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub half_width: f64,
}

/// Mean and normal-quantile half-width `z * s / sqrt(m)`.
pub fn confidence_interval(sample: &ScoreSample, level: f64) -> Result<ConfidenceInterval, StatsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::InvalidLevel(level));
    }
    let values = &sample.values;
    if values.len() < 2 {
        return Err(StatsError::DegenerateSample(values.len()));
    }
    let m = mean(values);
    let s = sample_sd(values, m);
    let z = normal_quantile((1.0 + level) / 2.0);
    Ok(ConfidenceInterval {
        mean: m,
        half_width: z * s / (values.len() as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTTest {
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub df: usize,
    /// Every difference is the same non-zero value: t is infinite and p is 0.
    pub exact_separation: bool,
}

impl PairedTTest {
    fn swapped(self) -> Self {
        Self { t: -self.t, ..self }
    }
}

/// Related-samples t-test on `a - b`.
pub fn paired_t_test(a: &ScoreSample, b: &ScoreSample) -> Result<PairedTTest, StatsError> {
    if a.values.len() != b.values.len() {
        return Err(StatsError::LengthMismatch(a.values.len(), b.values.len()));
    }
    let m = a.values.len();
    if m < 2 {
        return Err(StatsError::DegenerateSample(m));
    }
    let diffs: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    let d_mean = mean(&diffs);
    let d_sd = sample_sd(&diffs, d_mean);
    let df = m - 1;

    if d_sd == 0.0 {
        return Ok(if d_mean == 0.0 {
            PairedTTest {
                t: 0.0,
                p: 1.0,
                df,
                exact_separation: false,
            }
        } else {
            PairedTTest {
                t: f64::INFINITY.copysign(d_mean),
                p: 0.0,
                df,
                exact_separation: true,
            }
        });
    }

    let t = d_mean / (d_sd / (m as f64).sqrt());
    Ok(PairedTTest {
        t,
        p: student_t_two_sided_p(t, df as f64),
        df,
        exact_separation: false,
    })
}

/// Paired t-tests between every pair of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseTestMatrix {
    pub labels: Vec<String>,
    tests: BTreeMap<(usize, usize), PairedTTest>,
}

impl PairwiseTestMatrix {
    pub fn compute(samples: &[ScoreSample]) -> Result<Self, StatsError> {
        let mut tests = BTreeMap::new();
        for i in 0..samples.len() {
            for j in i + 1..samples.len() {
                tests.insert((i, j), paired_t_test(&samples[i], &samples[j])?);
            }
        }
        Ok(Self {
            labels: samples.iter().map(|s| s.label.clone()).collect(),
            tests,
        })
    }

    /// Test of sample `i` against sample `j`; `None` on the diagonal.
    pub fn get(&self, i: usize, j: usize) -> Option<PairedTTest> {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.tests.get(&(i, j)).copied(),
            std::cmp::Ordering::Greater => self.tests.get(&(j, i)).map(|t| t.swapped()),
            std::cmp::Ordering::Equal => None,
        }
    }

    /// Number of unordered pairs.
    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }
}

/// Scientific notation with two significant digits, e.g. `1.3e-38`.
pub fn format_p_value(p: f64) -> String {
    if p == 0.0 {
        return "0.0e+00".to_string();
    }
    let s = format!("{p:.1e}");
    let (mantissa, exp) = s.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

    fn sample(values: &[f64]) -> ScoreSample {
        ScoreSample::new("s", values.to_vec())
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-14);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x; I_x(a, 1) = x^a.
        for &x in &[0.1, 0.37, 0.5, 0.9] {
            assert!((regularized_incomplete_beta(x, 1.0, 1.0) - x).abs() < 1e-13);
            assert!((regularized_incomplete_beta(x, 3.0, 1.0) - x.powi(3)).abs() < 1e-13);
        }
        assert_eq!(regularized_incomplete_beta(1.0, 2.0, 0.5), 1.0);
        assert_eq!(regularized_incomplete_beta(0.0, 2.0, 0.5), 0.0);
    }

    #[test]
    fn normal_quantile_matches_reference() {
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(0.5)).abs() < 1e-15);
        let reference = Normal::new(0.0, 1.0).unwrap();
        for &p in &[1e-10, 0.001, 0.02, 0.3, 0.8, 0.99, 0.999_999] {
            assert!((normal_quantile(p) - reference.inverse_cdf(p)).abs() < 1e-9, "{p}");
        }
    }

    #[test]
    fn normal_cdf_matches_reference() {
        let reference = Normal::new(0.0, 1.0).unwrap();
        for i in -80..=80 {
            let x = i as f64 / 10.0;
            let (ours, theirs) = (normal_cdf(x), reference.cdf(x));
            assert!((ours - theirs).abs() <= 1e-9 * theirs.max(1e-300), "{x}");
        }
    }

    #[test]
    fn normal_cdf_tail_values() {
        // High-precision values of Φ(x).
        for (x, want) in [(-3.6, 1.591_085_901_575_336_4e-4), (-5.0, 2.866_515_718_791_933e-7), (-8.0, 6.220_960_574_271_74e-16)] {
            assert!((normal_cdf(x) / want - 1.0).abs() < 1e-13, "{x}");
        }
    }

    #[test]
    fn student_t_matches_reference() {
        for &df in &[1.0, 2.0, 4.0, 9.0, 30.0, 215.0] {
            let reference = StudentsT::new(0.0, 1.0, df).unwrap();
            for i in -40..=40 {
                let t = i as f64 / 5.0;
                assert!((student_t_cdf(t, df) - reference.cdf(t)).abs() < 1e-11, "df={df} t={t}");
            }
        }
    }

    #[test]
    fn student_t_approaches_normal() {
        for df in [200.0, 500.0, 5000.0] {
            for i in -40..=40 {
                let t = i as f64 / 10.0;
                assert!((student_t_cdf(t, df) - normal_cdf(t)).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn constant_sample_has_zero_width() {
        let ci = confidence_interval(&sample(&[0.1; 50]), 0.95).unwrap();
        assert!((ci.mean - 0.1).abs() < 1e-15);
        assert!(ci.half_width.abs() < 1e-15);
    }

    #[test]
    fn binary_sample_half_width() {
        let values: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let ci = confidence_interval(&sample(&values), 0.95).unwrap();
        // s = sqrt(25 / 99), z = 1.959963984540054; computed independently.
        let expected = 1.959_963_984_540_054 * (25.0f64 / 99.0).sqrt() / 10.0;
        assert!((ci.mean - 0.5).abs() < 1e-15);
        assert!((ci.half_width - expected).abs() < 1e-12);
        assert!((ci.half_width - 0.098_491_896).abs() < 1e-8);
    }

    #[test]
    fn interval_errors() {
        assert_eq!(
            confidence_interval(&sample(&[1.0]), 0.95),
            Err(StatsError::DegenerateSample(1))
        );
        assert!(matches!(
            confidence_interval(&sample(&[1.0, 2.0]), 1.0),
            Err(StatsError::InvalidLevel(_))
        ));
    }

    #[test]
    fn identical_samples_give_p_one() {
        let a = sample(&[0.3, 0.1, 0.25, 0.4]);
        let r = paired_t_test(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
        assert_eq!(r.df, 3);
    }

    #[test]
    fn symmetric_differences_give_p_one() {
        let a = sample(&[1.0, -1.0, 1.0, -1.0]);
        let zero = sample(&[0.0; 4]);
        let r = paired_t_test(&a, &zero).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn five_point_difference_vector() {
        // mean 0.12, unbiased sd sqrt(0.013 / 4); reference values from an
        // independent t-distribution implementation (and scipy's ttest_1samp).
        let d = sample(&[0.1, 0.2, 0.15, 0.05, 0.1]);
        let r = paired_t_test(&d, &sample(&[0.0; 5])).unwrap();
        let t_expected = 0.12 / ((0.013f64 / 4.0).sqrt() / 5f64.sqrt());
        let reference = StudentsT::new(0.0, 1.0, 4.0).unwrap();
        let p_expected = 2.0 * (1.0 - reference.cdf(t_expected));
        assert!((r.t - t_expected).abs() < 1e-9);
        assert!((r.t - 4.706_787_243).abs() < 1e-8);
        assert!((r.p - p_expected).abs() < 1e-10);
        assert!((r.p - 0.009_261_697).abs() < 1e-8);
        assert_eq!(r.df, 4);
    }

    #[test]
    fn exact_separation() {
        // Differences are exactly representable.
        let r =paired_t_test(&sample(&[1.5, 2.5, 3.5]), &sample(&[1.0, 2.0, 3.0])).unwrap();
        assert!(r.exact_separation);
        assert_eq!(r.p, 0.0);
        assert_eq!(r.t, f64::INFINITY);
    }

    #[test]
    fn t_test_errors() {
        assert_eq!(
            paired_t_test(&sample(&[1.0, 2.0]), &sample(&[1.0])),
            Err(StatsError::LengthMismatch(2, 1))
        );
        assert_eq!(
            paired_t_test(&sample(&[1.0]), &sample(&[1.0])),
            Err(StatsError::DegenerateSample(1))
        );
    }

    #[test]
    fn matrix_is_antisymmetric_in_t() {
        let samples = vec![
            ScoreSample::new("a", vec![0.1, 0.2, 0.3, 0.25]),
            ScoreSample::new("b", vec![0.12, 0.1, 0.35, 0.2]),
            ScoreSample::new("c", vec![0.3, 0.3, 0.1, 0.0]),
        ];
        let m = PairwiseTestMatrix::compute(&samples).unwrap();
        assert_eq!(m.len(), 3);
        assert!(m.get(1, 1).is_none());
        let ab = m.get(0, 1).unwrap();
        let ba = m.get(1, 0).unwrap();
        assert_eq!(ab.t, -ba.t);
        assert_eq!(ab.p, ba.p);
    }

    #[test]
    fn p_value_format() {
        assert_eq!(format_p_value(1.3e-38), "1.3e-38");
        assert_eq!(format_p_value(0.13), "1.3e-01");
        assert_eq!(format_p_value(1.0), "1.0e+00");
        assert_eq!(format_p_value(0.0), "0.0e+00");
        assert_eq!(format_p_value(2.4e-129), "2.4e-129");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        proptest! {
            #[test]
            fn swapping_negates_t(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..40)) {
                let a = ScoreSample::new("a", pairs.iter().map(|p| p.0).collect());
                let b = ScoreSample::new("b", pairs.iter().map(|p| p.1).collect());
                let ab = paired_t_test(&a, &b).unwrap();
                let ba = paired_t_test(&b, &a).unwrap();
                prop_assert_eq!(ab.t, -ba.t);
                prop_assert_eq!(ab.p, ba.p);
                prop_assert!((0.0..=1.0).contains(&ab.p));
            }

            #[test]
            fn p_decreases_with_abs_t(t1 in 0.0f64..30.0, dt in 0.0f64..10.0, df in 1usize..300) {
                let df = df as f64;
                let p1 = student_t_two_sided_p(t1, df);
                let p2 = student_t_two_sided_p(t1 + dt, df);
                prop_assert!(p2 <= p1 + 1e-15);
                prop_assert_eq!(student_t_two_sided_p(-t1, df), p1);
            }
        }

        #[test]
        fn half_width_shrinks_as_inverse_sqrt_m() {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let population: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
            let mut draw = |m: usize| -> f64 {
                let values = (0..m)
                    .map(|_| population[rng.random_range(0..population.len())])
                    .collect();
                confidence_interval(&ScoreSample::new("x", values), 0.95)
                    .unwrap()
                    .half_width
            };
            let small = draw(400);
            let large = draw(6400);
            // 16x the data gives a quarter of the width.
            let ratio = small / large;
            assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
        }
    }
}
