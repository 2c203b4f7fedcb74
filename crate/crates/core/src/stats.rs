//! Summary statistics and goodness-of-fit tests used by the experiments.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::{Error, Result};

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.5758293035489004;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two samples.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Sample mean and its standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    (mean(xs), (variance(xs) / xs.len() as f64).sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Normal-approximation interval `p ± z·√(p(1−p)/n)` around a hypothesised success probability.
pub fn binomial_ci(p: f64, n: usize, z: f64) -> (f64, f64) {
    let half = z * (p * (1.0 - p) / n as f64).sqrt();
    (p - half, p + half)
}

/// Two-sided p-value of a standard normal statistic.
pub fn normal_two_sided_p(z: f64) -> f64 {
    let n = Normal::standard();
    2.0 * (1.0 - n.cdf(z.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

impl TestResult {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value > significance
    }
}

/// Pearson chi-square goodness of fit of `counts` against cell probabilities `probs`.
///
/// Adjacent cells are merged until every expected count is at least 5; zero-probability
/// cells must have zero counts.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> Result<TestResult> {
    if counts.len() != probs.len() {
        return Err(Error::Argument("counts and probabilities differ in length".into()));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::InsufficientData("no observations".into()));
    }
    let mut observed = Vec::new();
    let mut expected = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        if p <= 0.0 {
            if c > 0 {
                // an impossible cell was hit
                return Ok(TestResult { statistic: f64::INFINITY, dof: 1.0, p_value: 0.0 });
            }
            continue;
        }
        o += c as f64;
        e += p * n as f64;
        if e >= 5.0 {
            observed.push(o);
            expected.push(e);
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 {
        match expected.last_mut() {
            Some(last) => {
                *last += e;
                *observed.last_mut().unwrap() += o;
            }
            None => {
                observed.push(o);
                expected.push(e);
            }
        }
    }
    let statistic: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = expected.len() as f64 - 1.0;
    if dof < 1.0 {
        return Ok(TestResult { statistic, dof: 0.0, p_value: 1.0 });
    }
    Ok(TestResult { statistic, dof, p_value: chi_square_sf(statistic, dof) })
}

/// Pearson chi-square test of independence on an `r × c` contingency table.
/// Empty rows and columns are dropped.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<TestResult> {
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().sum::<u64>() > 0).collect();
    if rows.is_empty() {
        return Err(Error::InsufficientData("empty contingency table".into()));
    }
    let ncol = rows[0].len();
    if rows.iter().any(|r| r.len() != ncol) {
        return Err(Error::Argument("ragged contingency table".into()));
    }
    let col_tot: Vec<f64> = (0..ncol).map(|j| rows.iter().map(|r| r[j] as f64).sum()).collect();
    let cols: Vec<usize> = (0..ncol).filter(|&j| col_tot[j] > 0.0).collect();
    let total: f64 = col_tot.iter().sum();
    let mut statistic = 0.0;
    for r in &rows {
        let rt: f64 = r.iter().map(|&c| c as f64).sum();
        for &j in &cols {
            let e = rt * col_tot[j] / total;
            let d = r[j] as f64 - e;
            statistic += d * d / e;
        }
    }
    let dof = ((rows.len() - 1) * (cols.len().saturating_sub(1))) as f64;
    if dof < 1.0 {
        return Ok(TestResult { statistic, dof: 0.0, p_value: 1.0 });
    }
    Ok(TestResult { statistic, dof, p_value: chi_square_sf(statistic, dof) })
}

fn chi_square_sf(x: f64, dof: f64) -> f64 {
    let d = ChiSquared::new(dof).expect("positive degrees of freedom");
    (1.0 - d.cdf(x)).max(0.0)
}

/// Asymptotic Kolmogorov tail `Q(λ) = 2 Σ (−1)^{j−1} e^{−2 j² λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = sign * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test with the small-sample corrected asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    let p = kolmogorov_q((en + 0.12 + 0.11 / en) * d);
    Ok(TestResult { statistic: d, dof: 0.0, p_value: p })
}

/// Total-variation distance `½ Σ |p − q|` between two probability vectors.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Fixed-width histogram over `[lo, hi)`; values outside are dropped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let w = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|k| lo + k as f64 * w).collect();
        let mut counts = vec![0u64; bins];
        for &v in values {
            if v >= lo && v < hi {
                let k = (((v - lo) / w) as usize).min(bins - 1);
                counts[k] += 1;
            }
        }
        Self { edges, counts }
    }

    /// CSV with header `bin_left,bin_right,count`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_left,bin_right,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", self.edges[k], self.edges[k + 1], c));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mean_and_variance() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(mean(&xs), 2.5);
        assert_relative_eq!(variance(&xs), 5.0 / 3.0);
        assert_relative_eq!(median(&xs), 2.5);
    }

    #[test]
    fn chi_square_perfect_fit() {
        let r = chi_square_gof(&[50, 50], &[0.5, 0.5]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_relative_eq!(r.p_value, 1.0);
    }

    #[test]
    fn chi_square_known_value() {
        // statistic 4 with one dof: p = 0.0455
        let r = chi_square_gof(&[60, 40], &[0.5, 0.5]).unwrap();
        assert_relative_eq!(r.statistic, 4.0);
        assert_relative_eq!(r.p_value, 0.04550026389635842, epsilon = 1e-9);
    }

    #[test]
    fn chi_square_impossible_cell() {
        let r = chi_square_gof(&[10, 1], &[1.0, 0.0]).unwrap();
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn independence_of_proportional_table() {
        let r = chi_square_independence(&[vec![10, 20], vec![30, 60]]).unwrap();
        assert!(r.statistic.abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Q(1.36) ≈ 0.049, Q(1.63) ≈ 0.0098
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..500).map(|k| k as f64 / 500.0).collect();
        assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert_relative_eq!(r.statistic, 0.502, epsilon = 1e-12);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn tv_and_histogram() {
        assert_relative_eq!(tv_distance(&[0.7, 0.3], &[0.5, 0.5]), 0.2);
        let h = Histogram::new(&[0.1, 0.2, 0.9, 1.5], 0.0, 1.0, 2);
        assert_eq!(h.counts, vec![2, 1]);
        assert!(h.to_csv().starts_with("bin_left,bin_right,count\n0,0.5,2\n"));
    }

    #[test]
    fn normal_p_value() {
        assert_relative_eq!(normal_two_sided_p(Z99), 0.01, epsilon = 1e-9);
    }
}
