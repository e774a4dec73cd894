//! Gillespie simulation of the block-counting chain `(n, m)`.
//!
//! Three dynamics share one event loop:
//!
//! - `Standard`: coalescence at rate `n(n-1)/2`, deactivation at rate
//!   `c·n` (the block moves into the bank with a fresh rate drawn from
//!   `ν`), activation of a dormant block at its own rate (the block
//!   rejoins the active set).
//! - `Accelerated`: same, except an activating block vanishes instead of
//!   rejoining; dominates the standard chain from below.
//! - `Decelerated`: coalescence is gated by
//!   `n >= ceil((n + |m|)^α)` once the total block count reaches the
//!   threshold `m₀`; dominates the standard chain from above.
//!
//! Event selection consumes exactly one exponential draw for the holding
//! time and one uniform draw for the channel, then delegates the
//! within-channel choice, which keeps replicate streams reproducible.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::bank::DormantBank;
use crate::error::{Result, SimError};
use crate::measure::RateMeasure;

/// Which coalescent dynamics to run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Standard,
    Accelerated,
    /// Coalescence gate exponent `α ∈ (1/2, 1)` and threshold `m₀ ≥ 2`.
    Decelerated { alpha: f64, m0: u64 },
}

impl Variant {
    /// Decelerated variant with the default gate exponent `α = 0.75`
    /// (midpoint of the admissible interval) and `m₀ = 2` (gate active
    /// everywhere).
    pub fn decelerated_default() -> Variant {
        Variant::Decelerated { alpha: 0.75, m0: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if let Variant::Decelerated { alpha, m0 } = self {
            if !(*alpha > 0.5 && *alpha < 1.0) {
                return Err(SimError::InvalidParameter(format!(
                    "decelerated alpha must lie in (1/2, 1), got {alpha}"
                )));
            }
            if *m0 < 2 {
                return Err(SimError::InvalidParameter(format!(
                    "decelerated threshold m0 must be >= 2, got {m0}"
                )));
            }
        }
        Ok(())
    }
}

/// The chain state: active count, dormant bank, elapsed time.
#[derive(Debug, Clone, Default)]
pub struct BlockCountState {
    pub active: u64,
    pub bank: DormantBank,
    pub time: f64,
}

impl BlockCountState {
    /// Start with `n0` active blocks and the given dormant rates.
    pub fn new(n0: u64, dormant_rates: &[f64]) -> Result<Self> {
        if n0 as usize + dormant_rates.len() == 0 {
            return Err(SimError::InvalidParameter(
                "initial state needs at least one block".into(),
            ));
        }
        let mut bank = DormantBank::new();
        for &rate in dormant_rates {
            bank.insert(rate)?;
        }
        Ok(BlockCountState {
            active: n0,
            bank,
            time: 0.0,
        })
    }

    /// Start with `n0` active blocks and `m_size` dormant blocks whose
    /// rates are i.i.d. draws from `ν = μ/c`.
    pub fn new_iid<R: Rng + ?Sized>(
        n0: u64,
        m_size: usize,
        measure: &RateMeasure,
        rng: &mut R,
    ) -> Result<Self> {
        if n0 as usize + m_size == 0 {
            return Err(SimError::InvalidParameter(
                "initial state needs at least one block".into(),
            ));
        }
        let mut bank = DormantBank::new();
        for _ in 0..m_size {
            let rate = measure.sample_rate(rng)?;
            bank.insert(rate)?;
        }
        Ok(BlockCountState {
            active: n0,
            bank,
            time: 0.0,
        })
    }

    pub fn total_blocks(&self) -> u64 {
        self.active + self.bank.count() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Coalescence,
    Deactivation,
    Activation,
}

/// Instantaneous channel rates out of a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRates {
    pub coalescence: f64,
    pub deactivation: f64,
    pub activation: f64,
}

impl ChannelRates {
    pub fn total(&self) -> f64 {
        self.coalescence + self.deactivation + self.activation
    }
}

/// `ceil(total^alpha)` with a guard against `powf` landing a hair above
/// an exact integer (e.g. `16^0.75`).
fn gate_requirement(total: u64, alpha: f64) -> u64 {
    let v = (total as f64).powf(alpha);
    let r = v.round();
    let v = if (v - r).abs() < 1e-9 * r.max(1.0) { r } else { v };
    v.ceil() as u64
}

/// The three channel rates of `(n, m)` under the given variant.
pub fn channel_rates(
    state: &BlockCountState,
    variant: Variant,
    measure: &RateMeasure,
) -> ChannelRates {
    let n = state.active;
    let pair_rate = (n as f64) * (n as f64 - 1.0) / 2.0;
    let coalescence = match variant {
        Variant::Standard | Variant::Accelerated => pair_rate,
        Variant::Decelerated { alpha, m0 } => {
            let total = state.total_blocks();
            if total >= m0 && n < gate_requirement(total, alpha) {
                0.0
            } else {
                pair_rate
            }
        }
    };
    ChannelRates {
        coalescence,
        deactivation: measure.total_mass() * n as f64,
        activation: state.bank.total_rate(),
    }
}

/// Is the state terminal for `sample_tmrca` under this variant?
pub fn absorbed(state: &BlockCountState, variant: Variant) -> bool {
    match variant {
        Variant::Standard | Variant::Decelerated { .. } => {
            state.active == 1 && state.bank.is_empty()
        }
        Variant::Accelerated => state.total_blocks() <= 1,
    }
}

/// Apply one event: draw the holding time, advance the clock, select and
/// apply the transition.
pub fn step<R: Rng + ?Sized>(
    state: &mut BlockCountState,
    variant: Variant,
    measure: &RateMeasure,
    rng: &mut R,
) -> Result<EventKind> {
    let rates = channel_rates(state, variant, measure);
    let total = rates.total();
    if total <= 0.0 {
        return Err(SimError::StuckState);
    }
    let holding: f64 = Exp1.sample(rng);
    state.time += holding / total;
    apply_event(state, variant, measure, rng, &rates)
}

/// Select a channel proportionally to `rates` and apply it, without
/// touching the clock.
fn apply_event<R: Rng + ?Sized>(
    state: &mut BlockCountState,
    variant: Variant,
    measure: &RateMeasure,
    rng: &mut R,
    rates: &ChannelRates,
) -> Result<EventKind> {
    let u = rng.gen::<f64>() * rates.total();
    if u < rates.coalescence {
        state.active -= 1;
        Ok(EventKind::Coalescence)
    } else if u < rates.coalescence + rates.deactivation {
        let rate = measure.sample_rate(rng)?;
        state.active -= 1;
        state.bank.insert(rate)?;
        Ok(EventKind::Deactivation)
    } else {
        let (_, _rate) = state.bank.sample_activation(rng)?;
        if !matches!(variant, Variant::Accelerated) {
            state.active += 1;
        }
        Ok(EventKind::Activation)
    }
}

/// One trace record per applied event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: EventKind,
    pub active: u64,
    pub total: u64,
}

/// Result of one run to absorption or horizon.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    /// Absorption time when `absorbed`, otherwise the horizon.
    pub time: f64,
    pub absorbed: bool,
    /// Raw number of deactivation events seen.
    pub deactivations: u64,
    pub trace: Option<Vec<TraceEvent>>,
}

impl SimOutcome {
    /// The time to most recent common ancestor, when reached.
    pub fn t_mrca(&self) -> Option<f64> {
        self.absorbed.then_some(self.time)
    }
}

/// Options for [`sample_tmrca`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub horizon: Option<f64>,
    pub record_trace: bool,
}

/// Run from `init` until the variant's terminal state, or until the
/// horizon. Horizon-capped runs come back flagged, not as errors, so
/// fixed-time block counts can be measured.
pub fn sample_tmrca<R: Rng + ?Sized>(
    init: BlockCountState,
    variant: Variant,
    measure: &RateMeasure,
    rng: &mut R,
    options: &RunOptions,
) -> Result<SimOutcome> {
    variant.validate()?;
    let mut state = init;
    let mut deactivations = 0u64;
    let mut trace = options.record_trace.then(Vec::new);
    loop {
        if absorbed(&state, variant) {
            return Ok(SimOutcome {
                time: state.time,
                absorbed: true,
                deactivations,
                trace,
            });
        }
        let rates = channel_rates(&state, variant, measure);
        let total = rates.total();
        if total <= 0.0 {
            return Err(SimError::StuckState);
        }
        let holding: f64 = Exp1.sample(rng);
        let next_time = state.time + holding / total;
        if let Some(horizon) = options.horizon {
            if next_time > horizon {
                state.time = horizon;
                return Ok(SimOutcome {
                    time: horizon,
                    absorbed: false,
                    deactivations,
                    trace,
                });
            }
        }
        state.time = next_time;
        let kind = apply_event(&mut state, variant, measure, rng, &rates)?;
        if kind == EventKind::Deactivation {
            deactivations += 1;
        }
        if let Some(t) = trace.as_mut() {
            t.push(TraceEvent {
                time: state.time,
                kind,
                active: state.active,
                total: state.total_blocks(),
            });
        }
    }
}

/// Evolve the chain to absolute time `t_target`, through hitting states:
/// unlike [`sample_tmrca`] the chain keeps flipping flags after `(1, 0)`.
/// A frozen state (total rate zero) simply stays put.
pub fn advance_to<R: Rng + ?Sized>(
    state: &mut BlockCountState,
    variant: Variant,
    measure: &RateMeasure,
    rng: &mut R,
    t_target: f64,
) -> Result<()> {
    variant.validate()?;
    while state.time < t_target {
        let rates = channel_rates(state, variant, measure);
        let total = rates.total();
        if total <= 0.0 {
            state.time = t_target;
            return Ok(());
        }
        let holding: f64 = Exp1.sample(rng);
        let next_time = state.time + holding / total;
        if next_time > t_target {
            state.time = t_target;
            return Ok(());
        }
        state.time = next_time;
        apply_event(state, variant, measure, rng, &rates)?;
    }
    Ok(())
}

/// Count raw deactivation events from `(n0, empty)` until the chain
/// terminates or `stop` fires (checked after every event).
///
/// Termination means the variant's terminal state for the standard and
/// decelerated chains, and a frozen state (no transitions left) for the
/// accelerated chain, whose blocks can keep vanishing past total one.
pub fn measure_a<R, F>(
    n0: u64,
    variant: Variant,
    measure: &RateMeasure,
    rng: &mut R,
    stop: F,
) -> Result<u64>
where
    R: Rng + ?Sized,
    F: Fn(&BlockCountState) -> bool,
{
    variant.validate()?;
    let mut state = BlockCountState::new(n0, &[])?;
    let mut count = 0u64;
    loop {
        if stop(&state) {
            return Ok(count);
        }
        match variant {
            Variant::Standard | Variant::Decelerated { .. } => {
                if absorbed(&state, variant) {
                    return Ok(count);
                }
            }
            Variant::Accelerated => {
                if channel_rates(&state, variant, measure).total() <= 0.0 {
                    return Ok(count);
                }
            }
        }
        if step(&mut state, variant, measure, rng)? == EventKind::Deactivation {
            count += 1;
        }
    }
}

/// The statistic `A^n` under the standard chain: the number of levels
/// `j ∈ {2, …, n}` whose first active-count down-crossing (from `j` to
/// `j-1`) is a deactivation rather than a coalescence. Counting stops
/// when the active count first reaches one.
///
/// At any down-step from level `j` the deactivation odds are
/// `cj / (cj + j(j-1)/2) = 2c/(j + 2c - 1)` independently of the bank, so
/// the mean equals [`expected_a_exact`].
pub fn level_deactivation_statistic<R: Rng + ?Sized>(
    n0: u64,
    measure: &RateMeasure,
    rng: &mut R,
) -> Result<u64> {
    if n0 < 1 {
        return Err(SimError::InvalidParameter(
            "level statistic needs n0 >= 1".into(),
        ));
    }
    let mut state = BlockCountState::new(n0, &[])?;
    let mut run_min = n0;
    let mut count = 0u64;
    while state.active > 1 {
        let kind = step(&mut state, Variant::Standard, measure, rng)?;
        if state.active < run_min {
            run_min = state.active;
            if kind == EventKind::Deactivation {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Exact mean of the `A^n` statistic: `Σ_{j=2}^{n} 2c/(j + 2c - 1)`.
pub fn expected_a_exact(n: u64, c: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    (2..=n).map(|j| 2.0 * c / (j as f64 + 2.0 * c - 1.0)).sum()
}

/// Time from `init` until `target` first holds (checked before every
/// step; a start inside the target returns zero).
pub fn first_passage_time<R, F>(
    init: BlockCountState,
    variant: Variant,
    measure: &RateMeasure,
    rng: &mut R,
    target: F,
) -> Result<f64>
where
    R: Rng + ?Sized,
    F: Fn(&BlockCountState) -> bool,
{
    variant.validate()?;
    let mut state = init;
    loop {
        if target(&state) {
            return Ok(state.time);
        }
        step(&mut state, variant, measure, rng)?;
    }
}

/// Mean extinction time of the pure death process of `n` independent
/// blocks whose lifetimes have survival function `∫ e^{-λt} ν(dλ)`:
/// `Σ_{i=1}^{n} ∫_0^∞ (∫ e^{-λt} ν(dλ))^i dt`.
///
/// Gamma measures use the closed form `b/(a·i - 1)` per term, which
/// diverges (returns `+∞`) when `a·i <= 1`; a single atom `λ` gives the
/// harmonic sum `Σ 1/(iλ)`; general discrete measures are integrated by
/// adaptive quadrature.
pub fn pure_death_extinction_mean(n: u64, measure: &RateMeasure) -> Result<f64> {
    if n < 1 {
        return Err(SimError::InvalidParameter("need n >= 1 blocks".into()));
    }
    match measure {
        RateMeasure::Empty => Err(SimError::EmptyMeasure),
        RateMeasure::Gamma { shape, scale, .. } => {
            let mut sum = 0.0;
            for i in 1..=n {
                let ai = shape * i as f64;
                if ai <= 1.0 {
                    return Ok(f64::INFINITY);
                }
                sum += scale / (ai - 1.0);
            }
            Ok(sum)
        }
        RateMeasure::Atoms(atoms) if atoms.len() == 1 => {
            let rate = atoms[0].rate;
            Ok((1..=n).map(|i| 1.0 / (i as f64 * rate)).sum())
        }
        RateMeasure::Atoms(atoms) => {
            let c: f64 = atoms.iter().map(|a| a.weight).sum();
            let lambda_min = atoms.iter().map(|a| a.rate).fold(f64::INFINITY, f64::min);
            let survival = |t: f64| -> f64 {
                atoms
                    .iter()
                    .map(|a| (a.weight / c) * (-a.rate * t).exp())
                    .sum()
            };
            let mut sum = 0.0;
            for i in 1..=n {
                // survival(t)^i <= exp(-i λ_min t); cut the tail at 1e-14
                let t_max = 33.0 / (i as f64 * lambda_min);
                let f = |t: f64| survival(t).powi(i as i32);
                sum += adaptive_simpson(&f, 0.0, t_max, 1e-11, 40);
            }
            Ok(sum)
        }
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_simpson_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    adaptive_simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + adaptive_simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature on `[a, b]`.
fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(a, b, fa, fm, fb);
    adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

/// The decelerated-chain threshold `m₀(ε)` for which the gate analysis
/// goes through when the support of `μ` lies in `[λ_min, λ_max]`:
/// the ceiling of the largest of
/// `((λ_min + 2c(1+ε))/(λ_min ε))^{1/(1-α)}`, `λ_max - c`, and
/// `(1 + (2/ε - 2) λ_min)^{1/(2α-1)}`.
pub fn decelerated_threshold(
    c: f64,
    lambda_min: f64,
    lambda_max: f64,
    alpha: f64,
    eps: f64,
) -> Result<u64> {
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(SimError::InvalidParameter(format!(
            "alpha must lie in (1/2, 1), got {alpha}"
        )));
    }
    if !(eps > 0.0) || !(lambda_min > 0.0) || lambda_max < lambda_min {
        return Err(SimError::InvalidParameter(
            "need eps > 0 and 0 < lambda_min <= lambda_max".into(),
        ));
    }
    let t1 = ((lambda_min + 2.0 * c * (1.0 + eps)) / (lambda_min * eps)).powf(1.0 / (1.0 - alpha));
    let t2 = lambda_max - c;
    let t3 = (1.0 + (2.0 / eps - 2.0) * lambda_min).powf(1.0 / (2.0 * alpha - 1.0));
    Ok(t1.max(t2).max(t3).ceil().max(2.0) as u64)
}
