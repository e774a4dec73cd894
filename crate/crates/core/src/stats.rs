//! Monte Carlo summaries and the statistical tests the verification
//! suites lean on.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::function::gamma::gamma_lr;

use crate::error::{Result, SimError};

/// Mean and standard error of a batch of replicates.
///
/// Carries enough information (count, mean, standard error) to be merged
/// exactly with another summary via pooled moments, so splitting work
/// across workers cannot change the result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub mean: f64,
    pub se: f64,
    pub reps: u64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub extras: BTreeMap<String, f64>,
}

impl McSummary {
    /// Summarize raw samples; needs at least two of them.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(SimError::InvalidParameter(format!(
                "need >= 2 samples for a summary, got {}",
                samples.len()
            )));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let m2: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
        let var = m2 / (n - 1.0);
        Ok(McSummary {
            mean,
            se: (var / n).sqrt(),
            reps: samples.len() as u64,
            extras: BTreeMap::new(),
        })
    }

    /// Sum of squared deviations, recovered from the stored fields.
    fn m2(&self) -> f64 {
        self.se * self.se * self.reps as f64 * (self.reps as f64 - 1.0)
    }

    /// Exact pooled-moments combination; associative and order-independent
    /// up to float rounding.
    pub fn merge(&self, other: &McSummary) -> McSummary {
        let na = self.reps as f64;
        let nb = other.reps as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * nb / n;
        let m2 = self.m2() + other.m2() + delta * delta * na * nb / n;
        let mut extras = self.extras.clone();
        for (k, v) in &other.extras {
            *extras.entry(k.clone()).or_insert(0.0) += v;
        }
        McSummary {
            mean,
            se: (m2 / (n - 1.0) / n).sqrt(),
            reps: self.reps + other.reps,
            extras,
        }
    }
}

/// Regularized upper incomplete gamma: survival function of the
/// chi-square distribution with `df` degrees of freedom.
pub fn chi_square_sf(chi2: f64, df: f64) -> f64 {
    if chi2 <= 0.0 {
        return 1.0;
    }
    1.0 - gamma_lr(df / 2.0, chi2 / 2.0)
}

/// Asymptotic Kolmogorov survival function
/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2 k² λ²)`.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64 * lambda).powi(2)).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test. Returns `(D, p)` with the
/// asymptotic p-value including the Stephens small-sample correction.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(SimError::InvalidParameter(
            "KS test needs non-empty samples".into(),
        ));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let mut d: f64 = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < xs.len() && j < ys.len() {
        let x = xs[i];
        let y = ys[j];
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        let diff = (i as f64 / na - j as f64 / nb).abs();
        d = d.max(diff);
    }
    let ne = na * nb / (na + nb);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Ok((d, kolmogorov_sf(lambda)))
}

/// Chi-square homogeneity test of two sets of category counts (the
/// categories must line up index-by-index). Categories whose combined
/// count is below `min_pool` are pooled into one bucket first. Returns
/// `(chi2, df, p)`.
pub fn chi_square_homogeneity(
    counts_a: &[u64],
    counts_b: &[u64],
    min_pool: u64,
) -> Result<(f64, f64, f64)> {
    if counts_a.len() != counts_b.len() || counts_a.is_empty() {
        return Err(SimError::InvalidParameter(
            "need equal-length non-empty count vectors".into(),
        ));
    }
    let mut cells: Vec<(u64, u64)> = Vec::new();
    let mut pooled = (0u64, 0u64);
    let mut pooled_any = false;
    for (&ca, &cb) in counts_a.iter().zip(counts_b) {
        if ca + cb == 0 {
            continue;
        }
        if ca + cb < min_pool {
            pooled.0 += ca;
            pooled.1 += cb;
            pooled_any = true;
        } else {
            cells.push((ca, cb));
        }
    }
    if pooled_any && pooled.0 + pooled.1 > 0 {
        cells.push(pooled);
    }
    if cells.len() < 2 {
        return Err(SimError::InvalidParameter(
            "fewer than two usable categories".into(),
        ));
    }
    let total_a: u64 = cells.iter().map(|c| c.0).sum();
    let total_b: u64 = cells.iter().map(|c| c.1).sum();
    let total = (total_a + total_b) as f64;
    let mut chi2 = 0.0;
    for &(ca, cb) in &cells {
        let row = (ca + cb) as f64;
        let ea = row * total_a as f64 / total;
        let eb = row * total_b as f64 / total;
        chi2 += (ca as f64 - ea).powi(2) / ea + (cb as f64 - eb).powi(2) / eb;
    }
    let df = (cells.len() - 1) as f64;
    Ok((chi2, df, chi_square_sf(chi2, df)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use rand::Rng;
    use rand_distr::{Distribution, Exp};

    #[test]
    fn constant_samples_have_zero_se() {
        let s = McSummary::from_samples(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.se, 0.0);
        assert_eq!(s.reps, 3);
    }

    #[test]
    fn too_few_samples_error() {
        assert!(McSummary::from_samples(&[1.0]).is_err());
    }

    #[test]
    fn merge_equals_pooled_summary() {
        let a = [0.3, 1.7, 2.2, 0.9, 4.1];
        let b = [5.0, 0.1, 3.3];
        let merged = McSummary::from_samples(&a)
            .unwrap()
            .merge(&McSummary::from_samples(&b).unwrap());
        let mut all = a.to_vec();
        all.extend_from_slice(&b);
        let pooled = McSummary::from_samples(&all).unwrap();
        assert!((merged.mean - pooled.mean).abs() < 1e-12);
        assert!((merged.se - pooled.se).abs() < 1e-12);
        assert_eq!(merged.reps, pooled.reps);
    }

    #[test]
    fn se_halves_when_reps_quadruple() {
        let exp = Exp::new(1.0).unwrap();
        let mut rng = derive_stream(3, &[0]);
        let small: Vec<f64> = (0..20_000).map(|_| exp.sample(&mut rng)).collect();
        let large: Vec<f64> = (0..80_000).map(|_| exp.sample(&mut rng)).collect();
        let s = McSummary::from_samples(&small).unwrap();
        let l = McSummary::from_samples(&large).unwrap();
        let ratio = s.se / l.se;
        assert!((ratio - 2.0).abs() < 0.2, "ratio = {ratio}");
    }

    #[test]
    fn chi_square_sf_reference_values() {
        // chi2 = df has p around 0.39-0.42 for small df; exact reference
        // values from the regularized incomplete gamma.
        assert!((chi_square_sf(1.0, 1.0) - 0.31731050786291404).abs() < 1e-10);
        assert!((chi_square_sf(4.0, 4.0) - 0.40600584970983766).abs() < 1e-10);
        assert_eq!(chi_square_sf(0.0, 3.0), 1.0);
    }

    #[test]
    fn ks_same_distribution_high_p() {
        let mut rng = derive_stream(3, &[1]);
        let a: Vec<f64> = (0..5_000).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..5_000).map(|_| rng.gen::<f64>()).collect();
        let (_, p) = ks_two_sample(&a, &b).unwrap();
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn ks_detects_shift() {
        let mut rng = derive_stream(3, &[2]);
        let a: Vec<f64> = (0..5_000).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..5_000).map(|_| rng.gen::<f64>() + 0.2).collect();
        let (d, p) = ks_two_sample(&a, &b).unwrap();
        assert!(d > 0.15);
        assert!(p < 1e-6, "p = {p}");
    }

    #[test]
    fn homogeneity_detects_difference() {
        let (_, _, p) =
            chi_square_homogeneity(&[500, 500, 500], &[700, 400, 400], 10).unwrap();
        assert!(p < 1e-6);
        let (_, _, p_same) =
            chi_square_homogeneity(&[500, 510, 490], &[505, 495, 500], 10).unwrap();
        assert!(p_same > 0.01);
    }
}
