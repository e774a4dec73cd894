//! The transition-rate measure `μ` on `(0, ∞)` and its integrals.
//!
//! Two families are supported: finitely many discrete atoms, and a Gamma
//! family in scale form (density proportional to `λ^{a-1} e^{-λ/b}`; that
//! parameterization is forced by the dormancy-time CDF
//! `K(t) = 1 - (1 + t/b)^{-a}`). A zero-mass measure is a first-class
//! degenerate mode in which no block ever goes dormant and the engine
//! reduces to the Kingman coalescent.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// One discrete atom: a wake-up rate with a positive weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub rate: f64,
    pub weight: f64,
}

/// A finite measure on `(0, ∞)`, total mass `c = μ((0, ∞))`.
#[derive(Debug, Clone, PartialEq)]
pub enum RateMeasure {
    /// The zero measure: `c = 0`, no dormancy (Kingman mode).
    Empty,
    /// `μ = Σ_i w_i δ_{λ_i}` with pairwise distinct, strictly positive rates.
    Atoms(Vec<Atom>),
    /// `c` times a Gamma(shape, scale) probability distribution.
    Gamma { shape: f64, scale: f64, mass: f64 },
}

impl RateMeasure {
    /// The degenerate zero measure.
    pub fn empty() -> Self {
        RateMeasure::Empty
    }

    /// Discrete measure from `(rate, weight)` pairs.
    pub fn from_atoms(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(SimError::InvalidMeasure(
                "atom list is empty; use RateMeasure::empty() for the zero measure".into(),
            ));
        }
        for &(rate, weight) in pairs {
            if !(rate > 0.0) || !rate.is_finite() {
                return Err(SimError::InvalidMeasure(format!(
                    "atom rate must be finite and > 0, got {rate}"
                )));
            }
            if !(weight > 0.0) || !weight.is_finite() {
                return Err(SimError::InvalidMeasure(format!(
                    "atom weight must be finite and > 0, got {weight}"
                )));
            }
        }
        for (i, &(ri, _)) in pairs.iter().enumerate() {
            if pairs[i + 1..].iter().any(|&(rj, _)| rj == ri) {
                return Err(SimError::InvalidMeasure(format!(
                    "atom rates must be pairwise distinct, {ri} repeats"
                )));
            }
        }
        Ok(RateMeasure::Atoms(
            pairs
                .iter()
                .map(|&(rate, weight)| Atom { rate, weight })
                .collect(),
        ))
    }

    /// Single atom `c δ_λ` (the classic single seed-bank).
    pub fn single_atom(rate: f64, mass: f64) -> Result<Self> {
        Self::from_atoms(&[(rate, mass)])
    }

    /// `c · Gamma(a, b)` in scale form.
    pub fn gamma(shape: f64, scale: f64, mass: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(SimError::InvalidMeasure(format!(
                "gamma shape must be > 0, got {shape}"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(SimError::InvalidMeasure(format!(
                "gamma scale must be > 0, got {scale}"
            )));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(SimError::InvalidMeasure(format!(
                "gamma total mass must be > 0, got {mass}"
            )));
        }
        Ok(RateMeasure::Gamma { shape, scale, mass })
    }

    /// Total mass `c = μ((0, ∞))`.
    pub fn total_mass(&self) -> f64 {
        match self {
            RateMeasure::Empty => 0.0,
            RateMeasure::Atoms(atoms) => atoms.iter().map(|a| a.weight).sum(),
            RateMeasure::Gamma { mass, .. } => *mass,
        }
    }

    /// The atoms, when the measure is discrete.
    pub fn atoms(&self) -> Option<&[Atom]> {
        match self {
            RateMeasure::Atoms(atoms) => Some(atoms),
            _ => None,
        }
    }

    /// Draw a wake-up rate `λ ~ ν = μ/c`.
    pub fn sample_rate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match self {
            RateMeasure::Empty => Err(SimError::EmptyMeasure),
            RateMeasure::Atoms(atoms) => {
                let total: f64 = atoms.iter().map(|a| a.weight).sum();
                let mut target = rng.gen::<f64>() * total;
                for atom in atoms {
                    if target < atom.weight {
                        return Ok(atom.rate);
                    }
                    target -= atom.weight;
                }
                // float slack at the right edge
                Ok(atoms.last().expect("non-empty").rate)
            }
            RateMeasure::Gamma { shape, scale, .. } => {
                let gamma = Gamma::new(*shape, *scale)
                    .map_err(|e| SimError::InvalidMeasure(e.to_string()))?;
                loop {
                    let draw = gamma.sample(rng);
                    // rate 0 has ν-measure zero but can round to 0.0
                    if draw > 0.0 {
                        return Ok(draw);
                    }
                }
            }
        }
    }

    /// The expected dormancy time integral `∫ λ^{-1} μ(dλ)`.
    ///
    /// Returns `+∞` when the integral diverges (Gamma with `a ≤ 1`); the
    /// finiteness dichotomy is exactly the finiteness of the expected time
    /// to the most recent common ancestor.
    pub fn integrate_reciprocal(&self) -> f64 {
        match self {
            RateMeasure::Empty => 0.0,
            RateMeasure::Atoms(atoms) => atoms.iter().map(|a| a.weight / a.rate).sum(),
            RateMeasure::Gamma { shape, scale, mass } => {
                if *shape > 1.0 {
                    mass / (scale * (shape - 1.0))
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Dormancy-time CDF `K(t) = ∫ (1 - e^{-λt}) ν(dλ)`.
    pub fn dormancy_cdf(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(SimError::InvalidParameter(format!(
                "time must be >= 0, got {t}"
            )));
        }
        Ok(1.0 - self.survival_laplace(t)?)
    }

    /// Laplace transform `∫ e^{-λt} ν(dλ) = 1 - K(t)`: the probability a
    /// fresh dormancy period is still running after time `t`.
    pub fn survival_laplace(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(SimError::InvalidParameter(format!(
                "time must be >= 0, got {t}"
            )));
        }
        match self {
            RateMeasure::Empty => Err(SimError::EmptyMeasure),
            RateMeasure::Atoms(atoms) => {
                let c = self.total_mass();
                Ok(atoms
                    .iter()
                    .map(|a| (a.weight / c) * (-a.rate * t).exp())
                    .sum())
            }
            RateMeasure::Gamma { shape, scale, .. } => Ok((1.0 + t / scale).powf(-shape)),
        }
    }

    /// `(min, max)` of the support when it is bounded.
    ///
    /// Discrete measures have both bounds; the Gamma family has support
    /// `(0, ∞)` and returns `None`.
    pub fn support_bounds(&self) -> Option<(f64, f64)> {
        match self {
            RateMeasure::Atoms(atoms) => {
                let min = atoms.iter().map(|a| a.rate).fold(f64::INFINITY, f64::min);
                let max = atoms
                    .iter()
                    .map(|a| a.rate)
                    .fold(f64::NEG_INFINITY, f64::max);
                Some((min, max))
            }
            _ => None,
        }
    }

    /// Parse from the structured config form.
    pub fn from_config(config: &MeasureConfig) -> Result<Self> {
        match config {
            MeasureConfig::Empty => Ok(RateMeasure::Empty),
            MeasureConfig::Atoms { atoms } => {
                let pairs: Vec<(f64, f64)> = atoms.iter().map(|a| (a[0], a[1])).collect();
                RateMeasure::from_atoms(&pairs)
            }
            MeasureConfig::Gamma { a, b, c } => RateMeasure::gamma(*a, *b, *c),
        }
    }

    /// Parse from a JSON string of the structured config form.
    pub fn from_json(json: &str) -> Result<Self> {
        let config: MeasureConfig = serde_json::from_str(json)
            .map_err(|e| SimError::InvalidMeasure(format!("bad measure config: {e}")))?;
        Self::from_config(&config)
    }

    pub fn to_config(&self) -> MeasureConfig {
        match self {
            RateMeasure::Empty => MeasureConfig::Empty,
            RateMeasure::Atoms(atoms) => MeasureConfig::Atoms {
                atoms: atoms.iter().map(|a| [a.rate, a.weight]).collect(),
            },
            RateMeasure::Gamma { shape, scale, mass } => MeasureConfig::Gamma {
                a: *shape,
                b: *scale,
                c: *mass,
            },
        }
    }
}

/// On-disk measure description:
/// `{"type": "atoms", "atoms": [[rate, weight], ...]}`,
/// `{"type": "gamma", "a": _, "b": _, "c": _}`, or `{"type": "empty"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MeasureConfig {
    Empty,
    Atoms { atoms: Vec<[f64; 2]> },
    Gamma { a: f64, b: f64, c: f64 },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn total_mass_of_atoms_is_weight_sum() {
        let m = RateMeasure::from_atoms(&[(0.5, 2.0)]).unwrap();
        assert_eq!(m.total_mass(), 2.0);
    }

    #[test]
    fn total_mass_gamma_is_stored_mass() {
        let m = RateMeasure::gamma(2.0, 3.0, 1.0).unwrap();
        assert_eq!(m.total_mass(), 1.0);
    }

    #[test]
    fn total_mass_empty_is_zero() {
        assert_eq!(RateMeasure::empty().total_mass(), 0.0);
    }

    #[test]
    fn single_atom_always_sampled() {
        let m = RateMeasure::from_atoms(&[(1.0, 1.0)]).unwrap();
        let mut rng = derive_stream(7, &[0]);
        for _ in 0..100 {
            assert_eq!(m.sample_rate(&mut rng).unwrap(), 1.0);
        }
    }

    #[test]
    fn sample_rate_respects_weights() {
        // P(λ = 3) = 3/4; frequency over 1e5 draws within 4 sigma.
        let m = RateMeasure::from_atoms(&[(1.0, 1.0), (3.0, 3.0)]).unwrap();
        let mut rng = derive_stream(7, &[1]);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| m.sample_rate(&mut rng).unwrap() == 3.0)
            .count();
        let p_hat = hits as f64 / n as f64;
        let se = (0.75 * 0.25 / n as f64).sqrt();
        assert!(
            (p_hat - 0.75).abs() < 4.0 * se,
            "p_hat = {p_hat}, expected 0.75 ± {}",
            4.0 * se
        );
    }

    #[test]
    fn gamma_sample_mean_matches_ab() {
        let m = RateMeasure::gamma(2.0, 3.0, 1.0).unwrap();
        let mut rng = derive_stream(7, &[2]);
        let n = 100_000;
        let sum: f64 = (0..n).map(|_| m.sample_rate(&mut rng).unwrap()).sum();
        let mean = sum / n as f64;
        // Var = a b^2 = 18, so SE ≈ 0.0134.
        let se = (18.0_f64 / n as f64).sqrt();
        assert!(
            (mean - 6.0).abs() < 4.0 * se,
            "mean = {mean}, expected 6 ± {}",
            4.0 * se
        );
    }

    #[test]
    fn sample_rate_on_empty_errors() {
        let mut rng = derive_stream(7, &[3]);
        assert!(matches!(
            RateMeasure::empty().sample_rate(&mut rng),
            Err(SimError::EmptyMeasure)
        ));
    }

    #[test]
    fn reciprocal_integral_atoms() {
        let m = RateMeasure::from_atoms(&[(0.5, 2.0)]).unwrap();
        assert!((m.integrate_reciprocal() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn reciprocal_integral_gamma_closed_form() {
        let m = RateMeasure::gamma(2.0, 1.0, 1.0).unwrap();
        assert!((m.integrate_reciprocal() - 1.0).abs() < 1e-12);
        let diverging = RateMeasure::gamma(1.0, 1.0, 1.0).unwrap();
        assert!(diverging.integrate_reciprocal().is_infinite());
    }

    #[test]
    fn dormancy_cdf_examples() {
        let gamma = RateMeasure::gamma(2.0, 3.0, 1.0).unwrap();
        assert!((gamma.dormancy_cdf(0.0).unwrap() - 0.0).abs() < 1e-15);
        assert!((gamma.dormancy_cdf(3.0).unwrap() - 0.75).abs() < 1e-12);
        let atom = RateMeasure::from_atoms(&[(1.0, 1.0)]).unwrap();
        assert!((atom.dormancy_cdf(2.0_f64.ln()).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn survival_laplace_examples() {
        let gamma = RateMeasure::gamma(2.0, 3.0, 1.0).unwrap();
        assert_eq!(gamma.survival_laplace(0.0).unwrap(), 1.0);
        assert!((gamma.survival_laplace(3.0).unwrap() - 0.25).abs() < 1e-12);
        let atom = RateMeasure::from_atoms(&[(2.0, 1.0)]).unwrap();
        assert!((atom.survival_laplace(1.0).unwrap() - (-2.0_f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn cdf_monotone_and_complementary() {
        let measures = [
            RateMeasure::from_atoms(&[(0.3, 1.0), (2.0, 0.5)]).unwrap(),
            RateMeasure::gamma(1.5, 2.0, 0.7).unwrap(),
        ];
        for m in &measures {
            let mut last = 0.0;
            for i in 0..=200 {
                let t = i as f64 * 0.25;
                let k = m.dormancy_cdf(t).unwrap();
                let s = m.survival_laplace(t).unwrap();
                assert!((k + s - 1.0).abs() < 1e-14);
                assert!(k + 1e-15 >= last, "K not monotone at t={t}");
                last = k;
            }
            assert!(m.dormancy_cdf(50.0 / 0.3).unwrap() > 0.99);
        }
    }

    #[test]
    fn rejects_bad_atoms() {
        assert!(RateMeasure::from_atoms(&[]).is_err());
        assert!(RateMeasure::from_atoms(&[(0.0, 1.0)]).is_err());
        assert!(RateMeasure::from_atoms(&[(1.0, -1.0)]).is_err());
        assert!(RateMeasure::from_atoms(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn config_round_trip() {
        let m = RateMeasure::from_json(r#"{"type":"atoms","atoms":[[1.0,1.0],[2.0,0.5]]}"#)
            .unwrap();
        assert_eq!(m.atoms().unwrap().len(), 2);
        let g = RateMeasure::from_json(r#"{"type":"gamma","a":2.0,"b":3.0,"c":1.0}"#).unwrap();
        assert_eq!(g.total_mass(), 1.0);
        let e = RateMeasure::from_json(r#"{"type":"empty"}"#).unwrap();
        assert_eq!(e, RateMeasure::Empty);
        let json = serde_json::to_string(&m.to_config()).unwrap();
        assert_eq!(RateMeasure::from_json(&json).unwrap(), m);
    }
}
