//! Closed forms and small numeric solvers used as ground truth against
//! Monte Carlo: the two-sample recurrence for the single seed-bank, the
//! `f(λ)` first-passage system for discrete measures, reflected-random-walk
//! hitting times, the ancestral-line renewal equation and its forward ODE,
//! and the fixation weight of the dual diffusion.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Result, SimError};
use crate::measure::{Atom, RateMeasure};
use crate::stats::McSummary;

/// `E[T_MRCA(0, 2δ_λ)]` for the single seed-bank `μ = c δ_λ`:
/// `1 + (4c+3)/(2λ) + (2c² + c)/(2λ²)`.
pub fn tmrca_two_single_bank(c: f64, lambda: f64) -> f64 {
    1.0 + (4.0 * c + 3.0) / (2.0 * lambda) + (2.0 * c * c + c) / (2.0 * lambda * lambda)
}

/// Solve the three-state recurrence for the two-sample single seed-bank
/// directly, as an independent route to [`tmrca_two_single_bank`].
/// Returns `(E[T(0,2δ_λ)], E[T(1,δ_λ)], E[T(2,0)])`.
pub fn tmrca_two_recurrence(c: f64, lambda: f64) -> Result<(f64, f64, f64)> {
    if !(lambda > 0.0) || c < 0.0 {
        return Err(SimError::InvalidParameter(
            "need lambda > 0 and c >= 0".into(),
        ));
    }
    // unknowns x = (E0, E1, E2)
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0,
            -1.0,
            0.0,
            -c / (c + lambda),
            1.0,
            -lambda / (c + lambda),
            0.0,
            -2.0 * c / (1.0 + 2.0 * c),
            1.0,
        ],
    );
    let b = DVector::from_row_slice(&[
        1.0 / (2.0 * lambda),
        1.0 / (c + lambda),
        1.0 / (1.0 + 2.0 * c),
    ]);
    let solution = a
        .lu()
        .solve(&b)
        .ok_or(SimError::SingularSystem(f64::INFINITY))?;
    Ok((solution[0], solution[1], solution[2]))
}

/// Solution of the first-passage system for a discrete measure:
/// `f(λ_i)` is the expected time from `(1, δ_{λ_i})` to `(2, 0)`, and
/// `f(λ, λ')` the expected time from `(0, δ_λ + δ_{λ'})` to `(2, 0)`.
#[derive(Debug, Clone)]
pub struct RecurrenceSolution {
    atoms: Vec<Atom>,
    f: Vec<f64>,
    /// 2-norm condition number of the solved system.
    pub condition: f64,
}

impl RecurrenceSolution {
    pub fn atom_rates(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.rate).collect()
    }

    /// `f(λ_i)` by atom index.
    pub fn f_atom(&self, index: usize) -> f64 {
        self.f[index]
    }

    /// Evaluate `f(λ)` at an arbitrary rate through the fixed-point form
    /// `f(λ) = 1/λ + (Σ_j w_j f(λ_j)/(λ+λ_j)) / (1 + Σ_j w_j/(λ+λ_j))`.
    pub fn f_at(&self, lambda: f64) -> f64 {
        let mut numer = 0.0;
        let mut denom = 1.0;
        for (atom, &fj) in self.atoms.iter().zip(&self.f) {
            numer += atom.weight * fj / (lambda + atom.rate);
            denom += atom.weight / (lambda + atom.rate);
        }
        1.0 / lambda + numer / denom
    }

    /// `f(λ, λ') = 1/(λ+λ') + λ'/(λ+λ') f(λ) + λ/(λ+λ') f(λ')`.
    pub fn pair_at(&self, lambda: f64, lambda_prime: f64) -> f64 {
        let s = lambda + lambda_prime;
        1.0 / s + lambda_prime / s * self.f_at(lambda) + lambda / s * self.f_at(lambda_prime)
    }

    /// `(rate, f(rate))` for every atom.
    pub fn f_values(&self) -> Vec<(f64, f64)> {
        self.atoms
            .iter()
            .zip(&self.f)
            .map(|(a, &f)| (a.rate, f))
            .collect()
    }
}

/// Solve the `k×k` linear system for `f(λ_i)` over the atoms of a
/// discrete measure (dense LU with partial pivoting, `k <= 100`).
pub fn solve_f(measure: &RateMeasure) -> Result<RecurrenceSolution> {
    let atoms = measure
        .atoms()
        .ok_or_else(|| SimError::InvalidMeasure("solve_f needs a discrete measure".into()))?;
    if atoms.len() > 100 {
        return Err(SimError::InvalidParameter(format!(
            "solve_f caps at 100 atoms, got {}",
            atoms.len()
        )));
    }
    let k = atoms.len();
    // f_i - Σ_j w_j/((λ_i+λ_j) d_i) f_j = 1/λ_i, with
    // d_i = 1 + Σ_j w_j/(λ_i+λ_j).
    let mut a = DMatrix::zeros(k, k);
    let mut b = DVector::zeros(k);
    for i in 0..k {
        let li = atoms[i].rate;
        let d: f64 = 1.0
            + atoms
                .iter()
                .map(|atom| atom.weight / (li + atom.rate))
                .sum::<f64>();
        for j in 0..k {
            let coupling = atoms[j].weight / ((li + atoms[j].rate) * d);
            a[(i, j)] = if i == j { 1.0 - coupling } else { -coupling };
        }
        b[i] = 1.0 / li;
    }
    let condition = condition_number(&a);
    let f = a
        .clone()
        .lu()
        .solve(&b)
        .ok_or(SimError::SingularSystem(condition))?;
    if condition > 1e12 {
        return Err(SimError::SingularSystem(condition));
    }
    Ok(RecurrenceSolution {
        atoms: atoms.to_vec(),
        f: f.iter().copied().collect(),
        condition,
    })
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let svd = a.clone().svd(false, false);
    let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let min = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Expected hitting time from `j` to `m` of the asymmetric random walk on
/// `{0, 1, …}` reflected at 0 (forced step up at 0), up-probability `p`:
/// `(m-j)/(p-q) + 2pq/(p-q)² ((q/p)^m - (q/p)^j)` with `q = 1-p`.
pub fn rw_hitting_time(p: f64, j: u32, m: u32) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(SimError::InvalidParameter(format!(
            "need 0 < p <= 1, got {p}"
        )));
    }
    if p == 0.5 {
        return Err(SimError::InvalidParameter(
            "p = 1/2 is singular for the closed form".into(),
        ));
    }
    if j >= m {
        return Err(SimError::InvalidParameter(format!(
            "need 0 <= j < m, got j={j}, m={m}"
        )));
    }
    let q = 1.0 - p;
    let ratio = q / p;
    let diff = p - q;
    Ok((m - j) as f64 / diff
        + 2.0 * p * q / (diff * diff) * (ratio.powi(m as i32) - ratio.powi(j as i32)))
}

/// Monte Carlo hitting time of the reflected walk with position-dependent
/// up-probabilities `p(pos)`; each step costs one unit of time.
pub fn rw_hitting_mc<R, P>(p: P, j: u32, m: u32, reps: u64, rng: &mut R) -> Result<McSummary>
where
    R: Rng + ?Sized,
    P: Fn(u32) -> f64,
{
    if j >= m {
        return Err(SimError::InvalidParameter(format!(
            "need 0 <= j < m, got j={j}, m={m}"
        )));
    }
    if reps < 2 {
        return Err(SimError::InvalidParameter("need >= 2 replicates".into()));
    }
    let mut samples = Vec::with_capacity(reps as usize);
    for _ in 0..reps {
        let mut pos = j;
        let mut steps = 0u64;
        while pos < m {
            steps += 1;
            if pos == 0 {
                pos = 1;
                continue;
            }
            let up = p(pos);
            debug_assert!((0.0..=1.0).contains(&up));
            if rng.gen::<f64>() < up {
                pos += 1;
            } else {
                pos -= 1;
            }
        }
        samples.push(steps as f64);
    }
    McSummary::from_samples(&samples)
}

/// Limiting law of the ancestral line: probability weight on "active".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AncestralLimit {
    /// `1 / (1 + ∫ λ^{-1} μ(dλ))`.
    pub active_prob: f64,
    /// True when `∫ λ^{-1} μ(dλ) = ∞` and the limit collapses to 0.
    pub degenerate: bool,
}

pub fn ancestral_active_prob_limit(measure: &RateMeasure) -> AncestralLimit {
    let reciprocal = measure.integrate_reciprocal();
    if reciprocal.is_infinite() {
        AncestralLimit {
            active_prob: 0.0,
            degenerate: true,
        }
    } else {
        AncestralLimit {
            active_prob: 1.0 / (1.0 + reciprocal),
            degenerate: false,
        }
    }
}

/// Weight of the limiting ancestral-line measure on the rate interval
/// `(lo, hi]`: `(∫_{(lo,hi]} λ^{-1} μ(dλ)) / (1 + ∫ λ^{-1} μ(dλ))`.
pub fn ancestral_limit_weight(measure: &RateMeasure, lo: f64, hi: f64) -> Result<f64> {
    if !(lo >= 0.0 && hi >= lo) {
        return Err(SimError::InvalidParameter(format!(
            "need 0 <= lo <= hi, got ({lo}, {hi}]"
        )));
    }
    let total = measure.integrate_reciprocal();
    if total.is_infinite() {
        return Ok(0.0);
    }
    let partial = match measure {
        RateMeasure::Empty => 0.0,
        RateMeasure::Atoms(atoms) => atoms
            .iter()
            .filter(|a| a.rate > lo && a.rate <= hi)
            .map(|a| a.weight / a.rate)
            .sum(),
        RateMeasure::Gamma { shape, scale, mass } => {
            // ∫_(lo,hi] λ^{-1} Gamma(a,b) density dλ
            //   = (1/(b(a-1))) [P(a-1, hi/b) - P(a-1, lo/b)] for a > 1.
            use statrs::function::gamma::gamma_lr;
            let a1 = shape - 1.0;
            let reg = |x: f64| -> f64 {
                if x <= 0.0 {
                    0.0
                } else if x.is_infinite() {
                    1.0
                } else {
                    gamma_lr(a1, x)
                }
            };
            mass / (scale * a1) * (reg(hi / scale) - reg(lo / scale))
        }
    };
    Ok(partial / (1.0 + total))
}

/// Per-atom weights of the limiting ancestral-line distribution for a
/// discrete measure: `(w_i/λ_i) / (1 + Σ_j w_j/λ_j)`.
pub fn ancestral_limit_atom_weights(measure: &RateMeasure) -> Result<Vec<f64>> {
    let atoms = measure
        .atoms()
        .ok_or_else(|| SimError::InvalidMeasure("needs a discrete measure".into()))?;
    let denom = 1.0 + measure.integrate_reciprocal();
    Ok(atoms.iter().map(|a| a.weight / a.rate / denom).collect())
}

/// Probability that a single seed-bank line started active is active at
/// `t`: `λ/(c+λ) + c/(c+λ) e^{-(c+λ)t}`.
pub fn single_bank_active_prob(c: f64, lambda: f64, t: f64) -> f64 {
    lambda / (c + lambda) + c / (c + lambda) * (-(c + lambda) * t).exp()
}

/// Output grid of the renewal-equation solver.
#[derive(Debug, Clone)]
pub struct RenewalSolution {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Max change when the step was halved; convergence requires this
    /// below 1e-4.
    pub richardson_delta: f64,
    pub converged: bool,
}

/// Solve the ancestral-line renewal equation
/// `P_t = e^{-ct} + ∫_0^t P_{t-s} g(s) ds`
/// on a uniform grid by trapezoidal discretization of the convolution,
/// evaluating at the requested times by linear interpolation.
///
/// `g` is the density of one full active/dormant cycle, the convolution
/// of the Exp(c) active period with the dormancy law `K`; this is the
/// kernel consistent with the single-bank closed form
/// `P_t = λ/(c+λ) + c/(c+λ) e^{-(c+λ)t}` and with the Laplace transform
/// `L(P)(ξ) = 1/(∫ ξ(ξ+η+c)/(ξ+η) ν(dη))`.
///
/// The step is halved once and the max change reported; `converged`
/// requires it below `1e-4`.
pub fn renewal_active_prob(
    measure: &RateMeasure,
    t_grid: &[f64],
    h: f64,
) -> Result<RenewalSolution> {
    if measure.total_mass() <= 0.0 {
        return Err(SimError::EmptyMeasure);
    }
    if t_grid.iter().any(|&t| t < 0.0) {
        return Err(SimError::InvalidParameter("grid times must be >= 0".into()));
    }
    if !(h > 0.0) {
        return Err(SimError::InvalidParameter("step must be > 0".into()));
    }
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    let coarse = renewal_solve_grid(measure, t_max, h);
    let fine = renewal_solve_grid(measure, t_max, h / 2.0);
    let at = |grid: &(f64, Vec<f64>), t: f64| -> f64 {
        let (step, values) = grid;
        let idx = t / step;
        let lo = (idx.floor() as usize).min(values.len() - 1);
        let hi = (lo + 1).min(values.len() - 1);
        let frac = (idx - lo as f64).clamp(0.0, 1.0);
        values[lo] * (1.0 - frac) + values[hi] * frac
    };
    let mut richardson_delta: f64 = 0.0;
    let values: Vec<f64> = t_grid
        .iter()
        .map(|&t| {
            let v_fine = at(&fine, t);
            richardson_delta = richardson_delta.max((v_fine - at(&coarse, t)).abs());
            v_fine
        })
        .collect();
    Ok(RenewalSolution {
        times: t_grid.to_vec(),
        values,
        richardson_delta,
        converged: richardson_delta < 1e-4,
    })
}

/// Density of the dormancy-time CDF `K`: `k(s) = ∫ λ e^{-λs} ν(dλ)`.
fn dormancy_density(measure: &RateMeasure, s: f64) -> f64 {
    match measure {
        RateMeasure::Empty => 0.0,
        RateMeasure::Atoms(atoms) => {
            let c: f64 = atoms.iter().map(|a| a.weight).sum();
            atoms
                .iter()
                .map(|a| (a.weight / c) * a.rate * (-a.rate * s).exp())
                .sum()
        }
        RateMeasure::Gamma { shape, scale, .. } => {
            (shape / scale) * (1.0 + s / scale).powf(-shape - 1.0)
        }
    }
}

/// `(1 - e^{-x})/x`, stable near zero.
fn expm1_ratio(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// Full-cycle density `g = Exp(c) * k` on the grid points `0, h, …, nh`.
///
/// Atoms have the closed form
/// `g(s) = Σ_i (w_i/c) c λ_i e^{-cs} s φ((λ_i - c)s)` with
/// `φ(x) = (1-e^{-x})/x`; the Gamma family uses the cumulative identity
/// `g(s) = c e^{-cs} ∫_0^s e^{cv} k(v) dv`, accumulated by trapezoid.
fn cycle_density_grid(measure: &RateMeasure, h: f64, n: usize) -> Vec<f64> {
    let c = measure.total_mass();
    match measure {
        RateMeasure::Empty => vec![0.0; n + 1],
        RateMeasure::Atoms(atoms) => (0..=n)
            .map(|j| {
                let s = j as f64 * h;
                atoms
                    .iter()
                    .map(|a| {
                        a.weight * a.rate * s * (-c * s).exp() * expm1_ratio((a.rate - c) * s)
                    })
                    .sum()
            })
            .collect(),
        RateMeasure::Gamma { .. } => {
            let mut g = Vec::with_capacity(n + 1);
            let mut integral = 0.0;
            let mut prev = dormancy_density(measure, 0.0); // e^{c·0} k(0)
            g.push(0.0);
            for j in 1..=n {
                let s = j as f64 * h;
                let current = (c * s).exp() * dormancy_density(measure, s);
                integral += 0.5 * h * (prev + current);
                prev = current;
                g.push(c * (-c * s).exp() * integral);
            }
            g
        }
    }
}

fn renewal_solve_grid(measure: &RateMeasure, t_max: f64, h: f64) -> (f64, Vec<f64>) {
    let c = measure.total_mass();
    let n = (t_max / h).ceil() as usize + 1;
    let kernel = cycle_density_grid(measure, h, n);
    let mut p = Vec::with_capacity(n + 1);
    p.push(1.0);
    for i in 1..=n {
        // trapezoid over s in [0, t_i]; g(0) = 0 kills the implicit term
        let mut conv = 0.5 * kernel[i] * p[0];
        for j in 1..i {
            conv += kernel[j] * p[i - j];
        }
        let p_i = (-c * (i as f64) * h).exp() + h * conv;
        p.push(p_i.clamp(0.0, 1.0));
    }
    (h, p)
}

/// Ancestral-line distribution `(p(t), q_i(t))` for a discrete measure by
/// the Kolmogorov forward equations
/// `dp/dt = -c p + Σ λ_i q_i`, `dq_i/dt = -λ_i q_i + p w_i`,
/// integrated with fixed-step RK4; the step is refined until halving it
/// changes the result by less than `1e-8`.
pub fn ode_ancestral_distribution(
    measure: &RateMeasure,
    p0: f64,
    q0: &[f64],
    t: f64,
) -> Result<(f64, Vec<f64>)> {
    let atoms = measure
        .atoms()
        .ok_or_else(|| SimError::InvalidMeasure("needs a discrete measure".into()))?;
    if q0.len() != atoms.len() {
        return Err(SimError::InvalidParameter(format!(
            "q0 has {} entries for {} atoms",
            q0.len(),
            atoms.len()
        )));
    }
    let mass_gap = (p0 + q0.iter().sum::<f64>() - 1.0).abs();
    if mass_gap > 1e-9 {
        return Err(SimError::InvalidParameter(format!(
            "p0 + Σ q0 must be 1, off by {mass_gap:.3e}"
        )));
    }
    if t == 0.0 {
        return Ok((p0, q0.to_vec()));
    }
    let c = measure.total_mass();
    let lambda_max = atoms.iter().map(|a| a.rate).fold(0.0, f64::max);
    // start well inside the RK4 stability region
    let mut steps = ((t * (c + lambda_max) / 0.5).ceil() as usize).max(16);
    let mut current = rk4_forward(atoms, c, p0, q0, t, steps);
    for _ in 0..24 {
        let refined = rk4_forward(atoms, c, p0, q0, t, steps * 2);
        let delta = (refined.0 - current.0).abs().max(
            refined
                .1
                .iter()
                .zip(&current.1)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
        current = refined;
        if delta < 1e-8 {
            return Ok(current);
        }
        steps *= 2;
    }
    Err(SimError::NoConvergence(
        "RK4 step refinement did not settle below 1e-8".into(),
    ))
}

fn rk4_forward(
    atoms: &[Atom],
    c: f64,
    p0: f64,
    q0: &[f64],
    t: f64,
    steps: usize,
) -> (f64, Vec<f64>) {
    let h = t / steps as f64;
    let k = atoms.len();
    let deriv = |p: f64, q: &[f64], out: &mut (f64, Vec<f64>)| {
        out.0 = -c * p
            + atoms
                .iter()
                .zip(q)
                .map(|(a, &qi)| a.rate * qi)
                .sum::<f64>();
        for i in 0..k {
            out.1[i] = -atoms[i].rate * q[i] + p * atoms[i].weight;
        }
    };
    let mut p = p0;
    let mut q = q0.to_vec();
    let mut k1 = (0.0, vec![0.0; k]);
    let mut k2 = (0.0, vec![0.0; k]);
    let mut k3 = (0.0, vec![0.0; k]);
    let mut k4 = (0.0, vec![0.0; k]);
    let mut tmp = vec![0.0; k];
    for _ in 0..steps {
        deriv(p, &q, &mut k1);
        for i in 0..k {
            tmp[i] = q[i] + 0.5 * h * k1.1[i];
        }
        deriv(p + 0.5 * h * k1.0, &tmp, &mut k2);
        for i in 0..k {
            tmp[i] = q[i] + 0.5 * h * k2.1[i];
        }
        deriv(p + 0.5 * h * k2.0, &tmp, &mut k3);
        for i in 0..k {
            tmp[i] = q[i] + h * k3.1[i];
        }
        deriv(p + h * k3.0, &tmp, &mut k4);
        p += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        for i in 0..k {
            q[i] += h / 6.0 * (k1.1[i] + 2.0 * k2.1[i] + 2.0 * k3.1[i] + k4.1[i]);
        }
    }
    (p, q)
}

/// The `δ_{(1,1)}` weight of the fixation law of the dual diffusion:
/// `(x + Σ_i y_i w_i/λ_i) / (1 + Σ_i w_i/λ_i)`.
pub fn fixation_weight(x: f64, y: &[f64], measure: &RateMeasure) -> Result<f64> {
    let atoms = measure
        .atoms()
        .ok_or_else(|| SimError::InvalidMeasure("needs a discrete measure".into()))?;
    if y.len() != atoms.len() {
        return Err(SimError::InvalidParameter(format!(
            "y has {} entries for {} atoms",
            y.len(),
            atoms.len()
        )));
    }
    if !(0.0..=1.0).contains(&x) || y.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(SimError::InvalidParameter(
            "frequencies must lie in [0, 1]".into(),
        ));
    }
    let reciprocal = measure.integrate_reciprocal();
    if reciprocal.is_infinite() {
        return Err(SimError::InvalidParameter(
            "fixation weight needs a finite reciprocal integral".into(),
        ));
    }
    let weighted: f64 = atoms
        .iter()
        .zip(y)
        .map(|(a, &yi)| yi * a.weight / a.rate)
        .sum();
    Ok((x + weighted) / (1.0 + reciprocal))
}

/// One row of an exploratory probe table.
#[derive(Debug, Clone, Copy)]
pub struct ProbeRow {
    pub x: f64,
    pub value: f64,
}

/// Scan `f(λ)` over a rate grid (exploration of the open monotonicity
/// question; emits data, asserts nothing).
pub fn probe_f_monotonicity(measure: &RateMeasure, grid: &[f64]) -> Result<Vec<ProbeRow>> {
    let solution = solve_f(measure)?;
    Ok(grid
        .iter()
        .map(|&lambda| ProbeRow {
            x: lambda,
            value: solution.f_at(lambda),
        })
        .collect())
}

/// Scan `f(λ, λ')` in `λ` for fixed `λ'` (open question 2; data only).
pub fn probe_pair_monotonicity(
    measure: &RateMeasure,
    lambda_prime: f64,
    grid: &[f64],
) -> Result<Vec<ProbeRow>> {
    let solution = solve_f(measure)?;
    Ok(grid
        .iter()
        .map(|&lambda| ProbeRow {
            x: lambda,
            value: solution.pair_at(lambda, lambda_prime),
        })
        .collect())
}

/// `P_t` curves for two measures on a shared time grid (open question 3
/// on first-order dominance; data only). Returns rows `(t, P_t^μ, P_t^μ')`.
pub fn probe_pt_dominance(
    measure: &RateMeasure,
    other: &RateMeasure,
    t_grid: &[f64],
    h: f64,
) -> Result<Vec<(f64, f64, f64)>> {
    let a = renewal_active_prob(measure, t_grid, h)?;
    let b = renewal_active_prob(other, t_grid, h)?;
    Ok(t_grid
        .iter()
        .zip(a.values.iter().zip(&b.values))
        .map(|(&t, (&pa, &pb))| (t, pa, pb))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn two_sample_closed_form_values() {
        assert!((tmrca_two_single_bank(1.0, 1.0) - 6.0).abs() < 1e-12);
        // c -> 0 leaves 1 + 3/(2λ)
        assert!((tmrca_two_single_bank(0.0, 1.0) - 2.5).abs() < 1e-12);
        // λ -> ∞ leaves the Kingman pair term
        assert!((tmrca_two_single_bank(1.0, 1e6) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn closed_form_matches_recurrence_solve() {
        for &(c, lambda) in &[(1.0, 1.0), (0.0, 1.0), (2.5, 0.3), (0.1, 7.0)] {
            let (e0, _, _) = tmrca_two_recurrence(c, lambda).unwrap();
            assert!(
                (e0 - tmrca_two_single_bank(c, lambda)).abs() < 1e-10,
                "c={c}, λ={lambda}"
            );
        }
    }

    #[test]
    fn solve_f_single_atom_closed_form() {
        // f(λ) = 1/λ + c/(2λ²); e.g. c=1, λ=2 -> 0.625.
        let m = RateMeasure::single_atom(2.0, 1.0).unwrap();
        let sol = solve_f(&m).unwrap();
        assert!((sol.f_atom(0) - 0.625).abs() < 1e-12);
        let mut rng = derive_stream(11, &[0]);
        for _ in 0..100 {
            let c = 0.05 + 5.0 * rng.gen::<f64>();
            let lambda = 0.05 + 5.0 * rng.gen::<f64>();
            let m = RateMeasure::single_atom(lambda, c).unwrap();
            let sol = solve_f(&m).unwrap();
            let expected = 1.0 / lambda + c / (2.0 * lambda * lambda);
            assert!(
                (sol.f_atom(0) - expected).abs() < 1e-12,
                "c={c}, λ={lambda}: {} vs {expected}",
                sol.f_atom(0)
            );
        }
    }

    #[test]
    fn solve_f_composes_to_two_sample_formula() {
        // E[T(0,2δ_λ)] = f(λ,λ) + 1 + 2c·f(λ) for the single seed-bank.
        for &(c, lambda) in &[(1.0, 1.0), (0.7, 2.3), (3.0, 0.5)] {
            let m = RateMeasure::single_atom(lambda, c).unwrap();
            let sol = solve_f(&m).unwrap();
            let composed = sol.pair_at(lambda, lambda) + 1.0 + 2.0 * c * sol.f_atom(0);
            assert!(
                (composed - tmrca_two_single_bank(c, lambda)).abs() < 1e-10,
                "c={c}, λ={lambda}"
            );
        }
    }

    #[test]
    fn rw_closed_form_examples() {
        // deterministic walk
        assert!((rw_hitting_time(1.0, 2, 7).unwrap() - 5.0).abs() < 1e-12);
        // forced step at the reflecting origin
        assert!((rw_hitting_time(2.0 / 3.0, 0, 1).unwrap() - 1.0).abs() < 1e-12);
        // first-step analysis: E[T(0,2)] solves E0 = 1+E1, E1 = 1+(1/3)E0
        assert!((rw_hitting_time(2.0 / 3.0, 0, 2).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rw_rejects_bad_parameters() {
        assert!(rw_hitting_time(0.5, 0, 2).is_err());
        assert!(rw_hitting_time(0.0, 0, 2).is_err());
        assert!(rw_hitting_time(0.8, 3, 3).is_err());
        let mut rng = derive_stream(11, &[1]);
        assert!(rw_hitting_mc(|_| 0.8, 3, 3, 100, &mut rng).is_err());
    }

    #[test]
    fn rw_displayed_specializations_consistent() {
        // the two displayed forms are the general formula at j=0 and j=m-1
        for &p in &[0.55, 0.7, 0.9] {
            let q: f64 = 1.0 - p;
            for m in 2..20u32 {
                let general = rw_hitting_time(p, 0, m).unwrap();
                let displayed = m as f64 / (p - q)
                    + 2.0 * p * q / (p - q).powi(2) * ((q / p).powi(m as i32) - 1.0);
                assert!((general - displayed).abs() < 1e-12);
                let general_last = rw_hitting_time(p, m - 1, m).unwrap();
                let displayed_last = 1.0 / (p - q)
                    + 2.0 * p * q / (p - q).powi(2)
                        * ((q / p).powi(m as i32) - (q / p).powi(m as i32 - 1));
                assert!((general_last - displayed_last).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rw_mc_matches_closed_form() {
        let mut rng = derive_stream(11, &[2]);
        let summary = rw_hitting_mc(|_| 2.0 / 3.0, 0, 2, 40_000, &mut rng).unwrap();
        assert!(
            (summary.mean - 3.0).abs() < 4.0 * summary.se,
            "mean {} se {}",
            summary.mean,
            summary.se
        );
    }

    #[test]
    fn ancestral_limit_examples() {
        let m = RateMeasure::single_atom(1.0, 1.0).unwrap();
        assert_eq!(ancestral_active_prob_limit(&m).active_prob, 0.5);
        let m2 = RateMeasure::single_atom(0.5, 2.0).unwrap();
        assert!((ancestral_active_prob_limit(&m2).active_prob - 0.2).abs() < 1e-12);
        let empty = ancestral_active_prob_limit(&RateMeasure::empty());
        assert_eq!(empty.active_prob, 1.0);
        assert!(!empty.degenerate);
        let heavy = RateMeasure::gamma(1.0, 1.0, 1.0).unwrap();
        let lim = ancestral_active_prob_limit(&heavy);
        assert_eq!(lim.active_prob, 0.0);
        assert!(lim.degenerate);
    }

    #[test]
    fn ancestral_limit_weights_sum_with_active_prob() {
        let m = RateMeasure::from_atoms(&[(1.0, 1.0), (4.0, 2.0)]).unwrap();
        let limit = ancestral_active_prob_limit(&m);
        let weights = ancestral_limit_atom_weights(&m).unwrap();
        let total: f64 = limit.active_prob + weights.iter().sum::<f64>();
        assert!((total - 1.0).abs() < 1e-12);
        let window = ancestral_limit_weight(&m, 0.5, 2.0).unwrap();
        assert!((window - weights[0]).abs() < 1e-12);
        // Gamma interval weights integrate the density
        let g = RateMeasure::gamma(2.0, 1.0, 1.0).unwrap();
        let whole = ancestral_limit_weight(&g, 0.0, f64::INFINITY).unwrap();
        let expected = g.integrate_reciprocal() / (1.0 + g.integrate_reciprocal());
        assert!((whole - expected).abs() < 1e-10);
    }

    #[test]
    fn single_bank_prob_examples() {
        assert_eq!(single_bank_active_prob(1.0, 1.0, 0.0), 1.0);
        let expected = 0.5 + 0.5 * (-2.0_f64).exp();
        assert!((single_bank_active_prob(1.0, 1.0, 1.0) - expected).abs() < 1e-12);
        // long-time limit agrees with the ancestral limit
        let m = RateMeasure::single_atom(1.0, 1.0).unwrap();
        let limit = ancestral_active_prob_limit(&m).active_prob;
        assert!((single_bank_active_prob(1.0, 1.0, 60.0) - limit).abs() < 1e-12);
    }

    #[test]
    fn renewal_matches_single_bank_closed_form() {
        let m = RateMeasure::single_atom(1.0, 1.0).unwrap();
        let grid = [0.0, 0.5, 1.0, 2.0];
        let sol = renewal_active_prob(&m, &grid, 1e-3).unwrap();
        assert!(sol.converged, "richardson delta {}", sol.richardson_delta);
        assert_eq!(sol.values[0], 1.0);
        for (i, &t) in grid.iter().enumerate() {
            let expected = single_bank_active_prob(1.0, 1.0, t);
            assert!(
                (sol.values[i] - expected).abs() < 1e-4,
                "t={t}: {} vs {expected}",
                sol.values[i]
            );
        }
    }

    #[test]
    fn ode_conserves_mass_and_matches_closed_form() {
        let m = RateMeasure::single_atom(1.0, 1.0).unwrap();
        for &t in &[0.3, 1.0, 5.0, 20.0] {
            let (p, q) = ode_ancestral_distribution(&m, 1.0, &[0.0], t).unwrap();
            assert!((p + q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let expected = single_bank_active_prob(1.0, 1.0, t);
            assert!((p - expected).abs() < 1e-6, "t={t}: {p} vs {expected}");
        }
    }

    #[test]
    fn ode_limit_matches_limiting_measure() {
        let m = RateMeasure::from_atoms(&[(1.0, 0.5), (3.0, 0.5)]).unwrap();
        let (_, q) = ode_ancestral_distribution(&m, 1.0, &[0.0, 0.0], 50.0).unwrap();
        let weights = ancestral_limit_atom_weights(&m).unwrap();
        for (qi, wi) in q.iter().zip(&weights) {
            assert!((qi - wi).abs() < 1e-4, "{qi} vs {wi}");
        }
    }

    #[test]
    fn fixation_weight_examples() {
        let m = RateMeasure::single_atom(1.0, 1.0).unwrap();
        assert_eq!(fixation_weight(1.0, &[1.0], &m).unwrap(), 1.0);
        assert_eq!(fixation_weight(0.0, &[0.0], &m).unwrap(), 0.0);
        assert!((fixation_weight(0.5, &[0.5], &m).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn probes_emit_rows_without_asserting() {
        let m = RateMeasure::from_atoms(&[(1.0, 0.5), (2.0, 0.5)]).unwrap();
        let rows = probe_f_monotonicity(&m, &[0.5, 1.0, 2.0, 4.0]).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.value.is_finite() && r.value > 0.0));
        let pair = probe_pair_monotonicity(&m, 1.0, &[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(pair.len(), 3);
    }
}
