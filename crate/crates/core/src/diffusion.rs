//! The dual diffusion for a discrete rate measure and its moment-duality
//! checks against the coalescent engine.
//!
//! For `μ = Σ_i w_i δ_{λ_i}` the state is `(x, y_1, …, y_k)` with
//!
//! - `dx = (Σ_i w_i y_i - c x) dt + sqrt(x(1-x)) dW`,
//! - `dy_i = λ_i (x - y_i) dt`,
//!
//! integrated by Euler-Maruyama with post-step clamping to `[0, 1]`
//! (clamping is an O(Δt) boundary bias, quantified by the Δt-halving
//! residual check). Mixed moments of the diffusion equal coalescent
//! expectations of the dual functional `x^n Π y_i^{m_i}`, and the
//! functional `(x + Σ y_i w_i/λ_i)/(1 + Σ w_i/λ_i)` has zero drift.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::engine::{advance_to, BlockCountState, Variant};
use crate::error::{Result, SimError};
use crate::measure::RateMeasure;
use crate::oracles::fixation_weight;
use crate::rng::{derive_stream, label_id};
use crate::stats::McSummary;

/// Diffusion state: active frequency `x`, per-atom bank frequencies `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionState {
    pub x: f64,
    pub y: Vec<f64>,
    pub t: f64,
}

impl DiffusionState {
    pub fn new(x0: f64, y0: &[f64]) -> Result<Self> {
        if !(0.0..=1.0).contains(&x0) || y0.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(SimError::InvalidParameter(
                "frequencies must lie in [0, 1]".into(),
            ));
        }
        Ok(DiffusionState {
            x: x0,
            y: y0.to_vec(),
            t: 0.0,
        })
    }
}

fn atoms_of(measure: &RateMeasure) -> Result<&[crate::measure::Atom]> {
    measure.atoms().ok_or_else(|| {
        SimError::InvalidMeasure("the diffusion needs a discrete measure".into())
    })
}

/// One Euler-Maruyama step with the provided standard normal draw `z`.
pub fn step_em(state: &mut DiffusionState, measure: &RateMeasure, dt: f64, z: f64) -> Result<()> {
    let atoms = atoms_of(measure)?;
    if atoms.len() != state.y.len() {
        return Err(SimError::InvalidParameter(format!(
            "state has {} bank coordinates for {} atoms",
            state.y.len(),
            atoms.len()
        )));
    }
    let c = measure.total_mass();
    let inflow: f64 = atoms
        .iter()
        .zip(&state.y)
        .map(|(a, &yi)| a.weight * yi)
        .sum();
    let diffusion = (state.x * (1.0 - state.x)).max(0.0).sqrt();
    let x_new = state.x + (inflow - c * state.x) * dt + diffusion * dt.sqrt() * z;
    for (a, yi) in atoms.iter().zip(state.y.iter_mut()) {
        *yi = (*yi + a.rate * (state.x - *yi) * dt).clamp(0.0, 1.0);
    }
    state.x = x_new.clamp(0.0, 1.0);
    state.t += dt;
    debug_assert!((0.0..=1.0).contains(&state.x));
    Ok(())
}

/// One Euler-Maruyama step drawing the noise from `rng`.
pub fn step_em_rng<R: Rng + ?Sized>(
    state: &mut DiffusionState,
    measure: &RateMeasure,
    dt: f64,
    rng: &mut R,
) -> Result<()> {
    let z: f64 = StandardNormal.sample(rng);
    step_em(state, measure, dt, z)
}

/// The dual functional `F = x^n Π y_i^{m_i}`.
pub fn dual_functional(x: f64, y: &[f64], n: u64, m: &[u64]) -> f64 {
    let mut value = x.powi(n as i32);
    for (&yi, &mi) in y.iter().zip(m) {
        value *= yi.powi(mi as i32);
    }
    value
}

fn validate_dual_args(
    measure: &RateMeasure,
    y0: &[f64],
    n: u64,
    m: &[u64],
) -> Result<()> {
    let atoms = atoms_of(measure)?;
    if y0.len() != atoms.len() || m.len() != atoms.len() {
        return Err(SimError::InvalidParameter(format!(
            "y0 ({}) and m ({}) must match the atom count ({})",
            y0.len(),
            m.len(),
            atoms.len()
        )));
    }
    if n == 0 && m.iter().all(|&mi| mi == 0) {
        return Err(SimError::InvalidParameter(
            "dual moment needs n + Σ m_i >= 1".into(),
        ));
    }
    Ok(())
}

/// Diffusion side of the duality identity:
/// Monte Carlo mean of `X_t^n Π Y_t(λ_i)^{m_i}` over Euler-Maruyama
/// paths, with one derived stream per path.
pub fn dual_moment_lhs(
    measure: &RateMeasure,
    x0: f64,
    y0: &[f64],
    n: u64,
    m: &[u64],
    t: f64,
    dt: f64,
    paths: u64,
    seed: u64,
) -> Result<McSummary> {
    validate_dual_args(measure, y0, n, m)?;
    DiffusionState::new(x0, y0)?;
    if paths < 2 || !(dt > 0.0) || t < 0.0 {
        return Err(SimError::InvalidParameter(
            "need paths >= 2, dt > 0, t >= 0".into(),
        ));
    }
    let steps = (t / dt).round() as u64;
    let label = label_id("duality-em-path");
    let samples: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = derive_stream(seed, &[label, path]);
            let mut state = DiffusionState::new(x0, y0).expect("validated");
            for _ in 0..steps {
                step_em_rng(&mut state, measure, dt, &mut rng).expect("validated");
            }
            dual_functional(state.x, &state.y, n, m)
        })
        .collect();
    McSummary::from_samples(&samples)
}

/// Coalescent side of the duality identity: Monte Carlo mean of
/// `x0^{N_t} Π y0(Λ_i)^{M_i}` over standard-chain runs started from
/// `n` active and `m_i` dormant blocks at each atom.
pub fn dual_moment_rhs(
    measure: &RateMeasure,
    x0: f64,
    y0: &[f64],
    n: u64,
    m: &[u64],
    t: f64,
    reps: u64,
    seed: u64,
) -> Result<McSummary> {
    validate_dual_args(measure, y0, n, m)?;
    DiffusionState::new(x0, y0)?;
    if reps < 2 || t < 0.0 {
        return Err(SimError::InvalidParameter("need reps >= 2, t >= 0".into()));
    }
    let atoms = atoms_of(measure)?;
    let mut dormant_rates = Vec::new();
    for (atom, &mi) in atoms.iter().zip(m) {
        dormant_rates.extend(std::iter::repeat(atom.rate).take(mi as usize));
    }
    let rates: Vec<f64> = atoms.iter().map(|a| a.rate).collect();
    let label = label_id("duality-coalescent-rep");
    let samples: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = derive_stream(seed, &[label, rep]);
            let mut state = BlockCountState::new(n, &dormant_rates).expect("validated");
            advance_to(&mut state, Variant::Standard, measure, &mut rng, t)
                .expect("validated");
            // dormant rates are exact copies of atom values
            let mut value = x0.powi(state.active as i32);
            for rate in state.bank.live_rates() {
                let idx = rates
                    .iter()
                    .position(|&r| r == rate)
                    .expect("rate drawn from the atom set");
                value *= y0[idx];
            }
            value
        })
        .collect();
    McSummary::from_samples(&samples)
}

/// Mean of the zero-drift functional
/// `h(x, y) = (x + Σ y_i w_i/λ_i)/(1 + Σ w_i/λ_i)` at each checkpoint
/// (checkpoints are snapped to whole Euler steps).
pub fn zero_drift_series(
    measure: &RateMeasure,
    x0: f64,
    y0: &[f64],
    times: &[f64],
    dt: f64,
    paths: u64,
    seed: u64,
) -> Result<Vec<McSummary>> {
    let atoms = atoms_of(measure)?;
    DiffusionState::new(x0, y0)?;
    if y0.len() != atoms.len() {
        return Err(SimError::InvalidParameter("y0 must match atoms".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0) {
        return Err(SimError::InvalidParameter(
            "checkpoints must be nondecreasing and >= 0".into(),
        ));
    }
    if paths < 2 || !(dt > 0.0) {
        return Err(SimError::InvalidParameter("need paths >= 2, dt > 0".into()));
    }
    let reciprocal = measure.integrate_reciprocal();
    let weights: Vec<f64> = atoms.iter().map(|a| a.weight / a.rate).collect();
    let h = move |x: f64, y: &[f64]| -> f64 {
        (x + y.iter().zip(&weights).map(|(&yi, &wi)| yi * wi).sum::<f64>()) / (1.0 + reciprocal)
    };
    let step_targets: Vec<u64> = times.iter().map(|&t| (t / dt).round() as u64).collect();
    let label = label_id("zero-drift-path");
    let per_path: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = derive_stream(seed, &[label, path]);
            let mut state = DiffusionState::new(x0, y0).expect("validated");
            let mut steps_done = 0u64;
            step_targets
                .iter()
                .map(|&target| {
                    while steps_done < target {
                        step_em_rng(&mut state, measure, dt, &mut rng).expect("validated");
                        steps_done += 1;
                    }
                    h(state.x, &state.y)
                })
                .collect()
        })
        .collect();
    (0..times.len())
        .map(|k| {
            let samples: Vec<f64> = per_path.iter().map(|row| row[k]).collect();
            McSummary::from_samples(&samples)
        })
        .collect()
}

/// Long-run fixation report.
#[derive(Debug, Clone)]
pub struct FixationReport {
    /// Mean and SE of `x` at `t_long`.
    pub mean_x: McSummary,
    /// Fraction of paths with `min(x, 1-x) > 0.05` at `t_long`.
    pub interior_fraction: f64,
    /// The closed-form `δ_{(1,1)}` weight the mean should match.
    pub fixation_weight: f64,
    pub paths: u64,
}

/// Run paths to `t_long` and report how much mass is still interior and
/// how the mean of `x` compares to the fixation weight.
pub fn fixation_check(
    measure: &RateMeasure,
    x0: f64,
    y0: &[f64],
    t_long: f64,
    dt: f64,
    paths: u64,
    seed: u64,
) -> Result<FixationReport> {
    atoms_of(measure)?;
    DiffusionState::new(x0, y0)?;
    if paths < 2 || !(dt > 0.0) || !(t_long >= 0.0) {
        return Err(SimError::InvalidParameter(
            "need paths >= 2, dt > 0, t_long >= 0".into(),
        ));
    }
    let weight = fixation_weight(x0, y0, measure)?;
    let steps = (t_long / dt).round() as u64;
    let label = label_id("fixation-path");
    let finals: Vec<(f64, bool)> = (0..paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = derive_stream(seed, &[label, path]);
            let mut state = DiffusionState::new(x0, y0).expect("validated");
            for _ in 0..steps {
                step_em_rng(&mut state, measure, dt, &mut rng).expect("validated");
            }
            (state.x, state.x.min(1.0 - state.x) > 0.05)
        })
        .collect();
    let xs: Vec<f64> = finals.iter().map(|&(x, _)| x).collect();
    let interior = finals.iter().filter(|&&(_, i)| i).count() as f64 / paths as f64;
    Ok(FixationReport {
        mean_x: McSummary::from_samples(&xs)?,
        interior_fraction: interior,
        fixation_weight: weight,
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delta1() -> RateMeasure {
        RateMeasure::single_atom(1.0, 1.0).unwrap()
    }

    #[test]
    fn absorbing_corners_never_move() {
        let m = delta1();
        for (x0, y0) in [(1.0, 1.0), (0.0, 0.0)] {
            let mut state = DiffusionState::new(x0, &[y0]).unwrap();
            let mut rng = derive_stream(31, &[0]);
            for _ in 0..1000 {
                step_em_rng(&mut state, &m, 1e-3, &mut rng).unwrap();
            }
            assert_eq!(state.x, x0);
            assert_eq!(state.y[0], y0);
        }
    }

    #[test]
    fn drift_only_euler_arithmetic() {
        // noise suppressed: x=1, y=0, c=1, Δt=0.01 -> x=0.99, y=0.01
        let m = delta1();
        let mut state = DiffusionState::new(1.0, &[0.0]).unwrap();
        step_em(&mut state, &m, 0.01, 0.0).unwrap();
        assert!((state.x - 0.99).abs() < 1e-15);
        assert!((state.y[0] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn states_stay_in_unit_box() {
        let m = RateMeasure::from_atoms(&[(1.0, 0.7), (5.0, 0.3)]).unwrap();
        let mut state = DiffusionState::new(0.5, &[0.2, 0.9]).unwrap();
        let mut rng = derive_stream(31, &[1]);
        for _ in 0..20_000 {
            step_em_rng(&mut state, &m, 1e-2, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&state.x));
            assert!(state.y.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn dual_sides_are_exact_at_time_zero() {
        let m = delta1();
        let lhs = dual_moment_lhs(&m, 0.5, &[0.25], 2, &[1], 0.0, 1e-3, 100, 31).unwrap();
        assert_eq!(lhs.mean, 0.5 * 0.5 * 0.25);
        assert_eq!(lhs.se, 0.0);
        let rhs = dual_moment_rhs(&m, 0.5, &[0.25], 2, &[1], 0.0, 100, 31).unwrap();
        assert_eq!(rhs.mean, 0.5 * 0.5 * 0.25);
        assert_eq!(rhs.se, 0.0);
    }

    #[test]
    fn dual_sides_are_one_at_upper_corner() {
        let m = delta1();
        let lhs = dual_moment_lhs(&m, 1.0, &[1.0], 1, &[1], 0.5, 1e-2, 64, 31).unwrap();
        assert_eq!(lhs.mean, 1.0);
        let rhs = dual_moment_rhs(&m, 1.0, &[1.0], 1, &[1], 0.5, 64, 31).unwrap();
        assert_eq!(rhs.mean, 1.0);
    }

    #[test]
    fn duality_identity_small() {
        // coarse version of the acceptance check
        let m = delta1();
        let lhs = dual_moment_lhs(&m, 0.5, &[0.5], 1, &[1], 1.0, 1e-3, 4_000, 77).unwrap();
        let rhs = dual_moment_rhs(&m, 0.5, &[0.5], 1, &[1], 1.0, 4_000, 78).unwrap();
        let slack = 3.0 * (lhs.se + rhs.se) + 0.05;
        assert!(
            (lhs.mean - rhs.mean).abs() <= slack,
            "lhs {} rhs {} slack {slack}",
            lhs.mean,
            rhs.mean
        );
    }

    #[test]
    fn rhs_long_time_matches_fixation_weight() {
        let m = delta1();
        let rhs = dual_moment_rhs(&m, 0.3, &[0.8], 1, &[1], 60.0, 20_000, 31).unwrap();
        let expected = fixation_weight(0.3, &[0.8], &m).unwrap();
        assert!(
            (rhs.mean - expected).abs() < 4.0 * rhs.se,
            "{} vs {expected} (se {})",
            rhs.mean,
            rhs.se
        );
    }

    #[test]
    fn zero_drift_series_is_flat() {
        let m = delta1();
        let series =
            zero_drift_series(&m, 0.5, &[0.5], &[0.0, 0.5, 2.0], 1e-3, 2_000, 31).unwrap();
        let h0 = series[0].mean;
        for s in &series[1..] {
            assert!(
                (s.mean - h0).abs() < 3.0 * s.se + 0.02,
                "h drifted: {} vs {h0} (se {})",
                s.mean,
                s.se
            );
        }
    }

    #[test]
    fn fixation_from_corners_is_total() {
        let m = delta1();
        let report = fixation_check(&m, 1.0, &[1.0], 5.0, 1e-2, 100, 31).unwrap();
        assert_eq!(report.mean_x.mean, 1.0);
        assert_eq!(report.interior_fraction, 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let m = delta1();
        let a = dual_moment_lhs(&m, 0.5, &[0.5], 1, &[1], 0.5, 1e-2, 500, 9).unwrap();
        let b = dual_moment_lhs(&m, 0.5, &[0.5], 1, &[1], 0.5, 1e-2, 500, 9).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.se, b.se);
    }
}
