//! Reference computations for the acceptance suite. Nothing here calls the
//! estimators under test; closed forms, brute force and plain Monte Carlo only.

#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// `E|N(0, 1)| = √(2/π)`: mean local time at 0 of reflected BM at `T = 1`.
pub fn sqrt_2_over_pi() -> f64 {
    (2.0 / std::f64::consts::PI).sqrt()
}

/// `Λ_k = max(0, max_{j ≤ k} −U_j)` by direct double loop.
pub fn brute_regulator(u: &[f64]) -> Vec<f64> {
    (0..u.len())
        .map(|k| (0..=k).map(|j| -u[j]).fold(0.0f64, f64::max))
        .collect()
}

/// Pearson statistic, degrees of freedom and upper-tail p-value. Cells are
/// expected to hold at least five expected counts.
pub fn chi_square(counts: &[u64], probs: &[f64]) -> (f64, f64, f64) {
    let n: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (c, p) in counts.iter().zip(probs) {
        let e = p * n as f64;
        if e > 0.0 {
            stat += (*c as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    let dof = (cells - 1) as f64;
    let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
    (stat, dof, p)
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value
/// `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}` with the Stephens correction.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let mut q = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1.0f64).powi(k - 1) * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        q += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, q.clamp(0.0, 1.0))
}

/// `p ± z·√(p(1−p)/n)` at 99%.
pub fn binomial_ci99(p: f64, n: usize) -> (f64, f64) {
    let z = 2.5758293035489;
    let h = z * (p * (1.0 - p) / n as f64).sqrt();
    (p - h, p + h)
}

/// `mean / (sd/√n)`.
pub fn z_score(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    m / (v / n).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `P(a ≤ R < b)` for `R ~ Exp(2λ)`.
pub fn exp_bin(lambda: f64, a: f64, b: f64) -> f64 {
    (-2.0 * lambda * a).exp() - (-2.0 * lambda * b).exp()
}

/// Total variation between counts on atoms and a discrete law; mass on
/// angles outside the law counts fully.
pub fn tv_counts(counts: &[(f64, u64)], law: &[(f64, f64)]) -> f64 {
    let n: u64 = counts.iter().map(|c| c.1).sum();
    let freq = |t: f64| counts.iter().filter(|c| c.0 == t).map(|c| c.1).sum::<u64>() as f64 / n as f64;
    let on_law: f64 = law.iter().map(|a| freq(a.0)).sum();
    0.5 * (law.iter().map(|a| (freq(a.0) - a.1).abs()).sum::<f64>() + (1.0 - on_law))
}

/// Counts of each distinct angle.
pub fn tally(angles: &[f64]) -> Vec<(f64, u64)> {
    let mut v = angles.to_vec();
    v.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, u64)> = Vec::new();
    for a in v {
        match out.last_mut() {
            Some(l) if l.0 == a => l.1 += 1,
            _ => out.push((a, 1)),
        }
    }
    out
}

/// Direct scheme for a Walsh diffusion with ray-dependent drift `−λ(θ)` and
/// unit dispersion. On a ray: Euler step projected to `[0, ∞)`. At the origin a
/// candidate ray is drawn from `draw_angle` first and the step uses its drift;
/// the candidate is kept only if the step leaves the origin.
pub fn per_ray_euler<R1: Rng, R2: Rng>(
    lambda: impl Fn(f64) -> f64,
    mut draw_angle: impl FnMut(&mut R2) -> f64,
    r0: f64,
    theta0: f64,
    t_end: f64,
    dt: f64,
    noise: &mut R1,
    angles: &mut R2,
) -> (f64, f64) {
    let n = (t_end / dt).round() as usize;
    let sq = dt.sqrt();
    let (mut r, mut theta) = (r0, theta0);
    for _ in 0..n {
        let z: f64 = noise.sample(StandardNormal);
        if r > 0.0 {
            r = (r - lambda(theta) * dt + sq * z).max(0.0);
        } else {
            let cand = draw_angle(angles);
            let next = (-lambda(cand) * dt + sq * z).max(0.0);
            if next > 0.0 {
                theta = cand;
            }
            r = next;
        }
    }
    (r, theta)
}
