//! Paired significance testing and topic binning.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("paired test needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("paired samples cover different topics: {0}")]
    TopicMismatch(String),
    #[error("differences have zero variance but nonzero mean {0}")]
    DegenerateVariance(f64),
    #[error("non-finite value in paired sample")]
    NonFinite,
    #[error("Bonferroni family size must be at least 1")]
    EmptyFamily,
}

/// `ln(Gamma(x))` for `x > 0` (Lanczos, g = 7, nine terms).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection: Gamma(x) Gamma(1 - x) = pi / sin(pi x)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let series = COEF[1..]
        .iter()
        .enumerate()
        .fold(COEF[0], |acc, (i, c)| acc + c / (x + i as f64 + 1.0));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
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
    for m in 1..=1000 {
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
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`, `0 <= x <= 1`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
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

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Topic-aligned `(candidate, baseline)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub candidate: Vec<f64>,
    pub baseline: Vec<f64>,
}

impl PairedSample {
    pub fn new(candidate: Vec<f64>, baseline: Vec<f64>) -> Result<Self, StatsError> {
        if candidate.len() != baseline.len() {
            return Err(StatsError::LengthMismatch(candidate.len(), baseline.len()));
        }
        Ok(Self { candidate, baseline })
    }

    /// Aligns two per-topic maps; both must cover the same topics.
    pub fn from_topics(
        candidate: &BTreeMap<String, f64>,
        baseline: &BTreeMap<String, f64>,
    ) -> Result<Self, StatsError> {
        if candidate.keys().ne(baseline.keys()) {
            let only: Vec<&String> = candidate
                .keys()
                .filter(|k| !baseline.contains_key(*k))
                .chain(baseline.keys().filter(|k| !candidate.contains_key(*k)))
                .collect();
            return Err(StatsError::TopicMismatch(format!("{only:?}")));
        }
        Self::new(
            candidate.values().copied().collect(),
            baseline.values().copied().collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.candidate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidate.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub df: usize,
}

/// Paired two-sided t-test on `candidate - baseline`.
pub fn paired_t_test(sample: &PairedSample) -> Result<TTest, StatsError> {
    let n = sample.len();
    if n < 2 {
        return Err(StatsError::TooFewPairs(n));
    }
    let diffs: Vec<f64> = sample
        .candidate
        .iter()
        .zip(&sample.baseline)
        .map(|(c, b)| c - b)
        .collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let df = n - 1;
    if diffs.iter().all(|d| *d == 0.0) {
        return Ok(TTest { t: 0.0, p: 1.0, df });
    }
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (nf - 1.0);
    if var == 0.0 {
        return Err(StatsError::DegenerateVariance(mean));
    }
    let t = mean / (var.sqrt() / nf.sqrt());
    Ok(TTest {
        t,
        p: student_t_two_sided(t, df as f64),
        df,
    })
}

/// `min(1, m * p)`.
pub fn bonferroni(p: f64, family_size: usize) -> Result<f64, StatsError> {
    if family_size < 1 {
        return Err(StatsError::EmptyFamily);
    }
    Ok((p * family_size as f64).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Difficulty {
    Hard,
    Medium,
    Easy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Prevalence {
    Rare,
    Medium,
    Common,
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for Prevalence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub const HARD_BELOW: usize = 2000;
pub const EASY_ABOVE: usize = 8000;

/// Hard below 2000 relevant documents, Easy above 8000, Medium in between
/// (both boundaries inclusive).
pub fn difficulty(r: usize) -> Difficulty {
    if r < HARD_BELOW {
        Difficulty::Hard
    } else if r > EASY_ABOVE {
        Difficulty::Easy
    } else {
        Difficulty::Medium
    }
}

/// Assigns each topic a difficulty class by `R` and a prevalence tertile of
/// `R` within that class. Topics with equal `R` share the lower tertile.
pub fn assign_bins(topics: &[(String, usize)]) -> BTreeMap<String, (Difficulty, Prevalence)> {
    let mut classes: BTreeMap<Difficulty, Vec<(usize, &str)>> = BTreeMap::new();
    for (topic, r) in topics {
        classes.entry(difficulty(*r)).or_default().push((*r, topic));
    }
    let mut out = BTreeMap::new();
    for (class, mut members) in classes {
        members.sort_unstable();
        let n = members.len();
        let mut group_bin = 0;
        for (pos, &(r, topic)) in members.iter().enumerate() {
            if pos == 0 || members[pos - 1].0 != r {
                group_bin = 3 * pos / n;
            }
            let prevalence = match group_bin {
                0 => Prevalence::Rare,
                1 => Prevalence::Medium,
                _ => Prevalence::Common,
            };
            out.insert(topic.to_string(), (class, prevalence));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ln_gamma_reference_values() {
        assert_abs_diff_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(ln_gamma(10.0), (362_880.0f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(ln_gamma(0.1), 2.252_712_651_734_206, epsilon = 1e-12);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x and I_x(a, 1) = x^a
        for x in [0.1, 0.37, 0.5, 0.92] {
            assert_abs_diff_eq!(regularized_incomplete_beta(1.0, 1.0, x), x, epsilon = 1e-14);
            assert_abs_diff_eq!(regularized_incomplete_beta(3.0, 1.0, x), x.powi(3), epsilon = 1e-14);
        }
        assert_eq!(regularized_incomplete_beta(2.0, 3.0, 0.0), 0.0);
        assert_eq!(regularized_incomplete_beta(2.0, 3.0, 1.0), 1.0);
    }

    #[test]
    fn t_tail_against_cauchy() {
        // df = 1 is Cauchy: P(|T| >= t) = 1 - 2 atan(t) / pi.
        for t in [0.3f64, 1.0, 2.5, 12.0] {
            let expected = 1.0 - 2.0 * t.atan() / std::f64::consts::PI;
            assert_abs_diff_eq!(student_t_two_sided(t, 1.0), expected, epsilon = 1e-13);
        }
        assert_eq!(student_t_two_sided(0.0, 4.0), 1.0);
    }

    #[test]
    fn paired_test_worked_example() {
        let s = PairedSample::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]).unwrap();
        let r = paired_t_test(&s).unwrap();
        assert_eq!(r.df, 3);
        assert_abs_diff_eq!(r.t, 3.872_983, epsilon = 1e-6);
        assert_abs_diff_eq!(r.p, 0.030_466, epsilon = 1e-6);
    }

    #[test]
    fn paired_test_degenerate_cases() {
        let same = PairedSample::new(vec![0.3, 0.5, 0.9], vec![0.3, 0.5, 0.9]).unwrap();
        assert_eq!(paired_t_test(&same).unwrap(), TTest { t: 0.0, p: 1.0, df: 2 });
        let one = PairedSample::new(vec![1.0], vec![0.0]).unwrap();
        assert_eq!(paired_t_test(&one), Err(StatsError::TooFewPairs(1)));
        let shifted = PairedSample::new(vec![1.5, 2.5], vec![1.0, 2.0]).unwrap();
        assert_eq!(paired_t_test(&shifted), Err(StatsError::DegenerateVariance(0.5)));
        assert!(PairedSample::new(vec![1.0], vec![]).is_err());
    }

    #[test]
    fn topic_alignment() {
        let c: BTreeMap<String, f64> = [("b".into(), 2.0), ("a".into(), 1.0)].into();
        let b: BTreeMap<String, f64> = [("a".into(), 0.0), ("b".into(), 0.5)].into();
        let s = PairedSample::from_topics(&c, &b).unwrap();
        assert_eq!(s.candidate, [1.0, 2.0]);
        assert_eq!(s.baseline, [0.0, 0.5]);
        let other: BTreeMap<String, f64> = [("a".into(), 0.0)].into();
        assert!(matches!(
            PairedSample::from_topics(&c, &other),
            Err(StatsError::TopicMismatch(_))
        ));
    }

    #[test]
    fn bonferroni_cases() {
        assert_eq!(bonferroni(0.04, 1).unwrap(), 0.04);
        assert_abs_diff_eq!(bonferroni(0.04, 5).unwrap(), 0.20, epsilon = 1e-15);
        assert_eq!(bonferroni(0.3, 5).unwrap(), 1.0);
        assert_eq!(bonferroni(0.3, 0), Err(StatsError::EmptyFamily));
    }

    #[test]
    fn difficulty_thresholds() {
        assert_eq!(difficulty(1999), Difficulty::Hard);
        assert_eq!(difficulty(2000), Difficulty::Medium);
        assert_eq!(difficulty(8000), Difficulty::Medium);
        assert_eq!(difficulty(8001), Difficulty::Easy);
    }

    #[test]
    fn tertiles_of_fifteen_hard_topics() {
        let topics: Vec<(String, usize)> = (0..15).map(|i| (format!("t{i:02}"), 100 + 37 * i)).collect();
        let bins = assign_bins(&topics);
        // Sort-and-split oracle: ascending R, five per tertile.
        let mut sorted = topics.clone();
        sorted.sort_by_key(|(_, r)| *r);
        for (k, (topic, _)) in sorted.iter().enumerate() {
            let expected = [Prevalence::Rare, Prevalence::Medium, Prevalence::Common][k / 5];
            assert_eq!(bins[topic], (Difficulty::Hard, expected));
        }
    }

    #[test]
    fn equal_r_shares_the_lower_bin() {
        let topics: Vec<(String, usize)> = [("a", 10), ("b", 20), ("c", 20), ("d", 30)]
            .iter()
            .map(|(t, r)| (t.to_string(), *r))
            .collect();
        let bins = assign_bins(&topics);
        assert_eq!(bins["b"].1, bins["c"].1);
        assert_eq!(bins["a"].1, Prevalence::Rare);
        assert_eq!(bins["b"].1, Prevalence::Rare);
        assert_eq!(bins["d"].1, Prevalence::Common);
    }
}
