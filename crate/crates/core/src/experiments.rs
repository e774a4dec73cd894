//! Batch Monte Carlo harness: the asymptotic-bound trend grid, the
//! not-coming-down growth probe, and the deactivation statistic, all with
//! a bit-exact output contract.
//!
//! Every replicate draws its own stream from
//! `(master seed, experiment label, point index, replicate index)` and
//! results are reduced in replicate order, so identical configs and seeds
//! give identical CSV bytes regardless of worker count. CSV numbers use
//! the shortest round-trip decimal representation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{
    advance_to, expected_a_exact, level_deactivation_statistic, sample_tmrca, BlockCountState,
    RunOptions, SimOutcome, Variant,
};
use crate::error::{Result, SimError};
use crate::measure::{MeasureConfig, RateMeasure};
use crate::rng::{derive_stream, label_id};
pub use crate::stats::McSummary;

/// How initial dormant rates are drawn for grid runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum DormantInit {
    /// Independent draws from `ν = μ/c` per replicate (the standing
    /// assumption of the bound theorems).
    Iid,
    /// Every dormant block starts at one fixed rate (debugging aid).
    Fixed { rate: f64 },
}

impl Default for DormantInit {
    fn default() -> Self {
        DormantInit::Iid
    }
}

/// One row of the bounds-trend grid.
#[derive(Debug, Clone)]
pub struct GridRow {
    pub n: u64,
    pub m_size: u64,
    pub summary: McSummary,
    /// `mean / log(log n + m/(2c))`.
    pub ratio: f64,
    /// Standard error of the ratio (`se / log(...)`).
    pub ratio_se: f64,
    /// `1/λ_max` for discrete measures, `b/a` for the Gamma family.
    pub lower_ref: f64,
    /// `2/λ_min` for discrete measures; open for the Gamma family.
    pub upper_ref: Option<f64>,
}

/// Bounds-trend report: one row per `(n, m)` grid point.
#[derive(Debug, Clone)]
pub struct BoundsReport {
    pub rows: Vec<GridRow>,
}

impl BoundsReport {
    /// CSV with header
    /// `n,m_size,mean_tmrca,se,ratio,lower_ref,upper_ref`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,m_size,mean_tmrca,se,ratio,lower_ref,upper_ref\n");
        for row in &self.rows {
            let upper = row
                .upper_ref
                .map(|u| u.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.n, row.m_size, row.summary.mean, row.summary.se, row.ratio, row.lower_ref,
                upper
            ));
        }
        out
    }
}

/// Reference constants of the bound theorems for a measure:
/// `(lower_ref, upper_ref)`.
pub fn bound_references(measure: &RateMeasure) -> Result<(f64, Option<f64>)> {
    match measure {
        RateMeasure::Empty => Err(SimError::EmptyMeasure),
        RateMeasure::Atoms(_) => {
            let (lo, hi) = measure.support_bounds().expect("atoms are bounded");
            Ok((1.0 / hi, Some(2.0 / lo)))
        }
        RateMeasure::Gamma { shape, scale, .. } => Ok((scale / shape, None)),
    }
}

/// Run the standard chain over a `(n, m)` schedule and report the
/// `E[T_MRCA] / log(log n + m/(2c))` trend against the bound references.
///
/// Every point requires `n >= 3`, `m >= 1`, and `log n + m/(2c) > e` so
/// the outer logarithm stays above 1.
pub fn tmrca_grid(
    measure: &RateMeasure,
    schedule: &[(u64, u64)],
    reps: u64,
    seed: u64,
    init: DormantInit,
) -> Result<BoundsReport> {
    let c = measure.total_mass();
    if c <= 0.0 {
        return Err(SimError::EmptyMeasure);
    }
    if reps < 2 {
        return Err(SimError::InvalidParameter("need reps >= 2".into()));
    }
    let (lower_ref, upper_ref) = bound_references(measure)?;
    let label = label_id("tmrca-grid");
    let mut rows = Vec::with_capacity(schedule.len());
    for (point, &(n, m_size)) in schedule.iter().enumerate() {
        let log_arg = (n as f64).ln() + m_size as f64 / (2.0 * c);
        if n < 3 || m_size < 1 || log_arg <= std::f64::consts::E {
            return Err(SimError::InvalidParameter(format!(
                "grid point (n={n}, m={m_size}) violates n >= 3, m >= 1, log n + m/(2c) > e"
            )));
        }
        let denom = log_arg.ln();
        let samples: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = derive_stream(seed, &[label, point as u64, rep]);
                let state = match init {
                    DormantInit::Iid => {
                        BlockCountState::new_iid(n, m_size as usize, measure, &mut rng)
                    }
                    DormantInit::Fixed { rate } => {
                        BlockCountState::new(n, &vec![rate; m_size as usize])
                    }
                }
                .expect("validated");
                sample_tmrca(
                    state,
                    Variant::Standard,
                    measure,
                    &mut rng,
                    &RunOptions::default(),
                )
                .expect("no horizon, cannot be stuck")
                .time
            })
            .collect();
        let summary = McSummary::from_samples(&samples)?;
        rows.push(GridRow {
            n,
            m_size,
            ratio: summary.mean / denom,
            ratio_se: summary.se / denom,
            summary,
            lower_ref,
            upper_ref,
        });
    }
    Ok(BoundsReport { rows })
}

/// One row of the not-coming-down growth probe.
#[derive(Debug, Clone)]
pub struct NotCdiRow {
    pub n: u64,
    /// Total blocks alive at the probe time.
    pub summary: McSummary,
}

/// CSV with header `n,mean_total_blocks,se`.
pub fn not_cdi_csv(rows: &[NotCdiRow]) -> String {
    let mut out = String::from("n,mean_total_blocks,se\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            row.n, row.summary.mean, row.summary.se
        ));
    }
    out
}

/// Growth-in-`n` proxy for not coming down from infinity: start `(n, 0)`,
/// run to the fixed probe time, record the total block count.
pub fn not_cdi_probe(
    measure: &RateMeasure,
    n_grid: &[u64],
    t: f64,
    reps: u64,
    seed: u64,
) -> Result<Vec<NotCdiRow>> {
    if !(t >= 0.0) {
        return Err(SimError::InvalidParameter("probe time must be >= 0".into()));
    }
    if reps < 2 {
        return Err(SimError::InvalidParameter("need reps >= 2".into()));
    }
    let label = label_id("not-cdi");
    let mut rows = Vec::with_capacity(n_grid.len());
    for (point, &n) in n_grid.iter().enumerate() {
        if n < 1 {
            return Err(SimError::InvalidParameter("grid needs n >= 1".into()));
        }
        let samples: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = derive_stream(seed, &[label, point as u64, rep]);
                let mut state = BlockCountState::new(n, &[]).expect("n >= 1");
                advance_to(&mut state, Variant::Standard, measure, &mut rng, t)
                    .expect("validated");
                state.total_blocks() as f64
            })
            .collect();
        rows.push(NotCdiRow {
            n,
            summary: McSummary::from_samples(&samples)?,
        });
    }
    Ok(rows)
}

/// Monte Carlo of the deactivation statistic against its exact mean.
#[derive(Debug, Clone)]
pub struct AnReport {
    pub n: u64,
    pub summary: McSummary,
    /// `Σ_{j=2}^{n} 2c/(j + 2c - 1)`.
    pub exact: f64,
    /// The displayed log bracketing of the exact sum.
    pub bracket: (f64, f64),
}

impl AnReport {
    /// CSV with header `n,mc_mean,mc_se,reps,exact,bracket_lo,bracket_hi`.
    pub fn to_csv(&self) -> String {
        format!(
            "n,mc_mean,mc_se,reps,exact,bracket_lo,bracket_hi\n{},{},{},{},{},{},{}\n",
            self.n,
            self.summary.mean,
            self.summary.se,
            self.summary.reps,
            self.exact,
            self.bracket.0,
            self.bracket.1
        )
    }
}

/// Estimate the mean of the level-crossing deactivation statistic from
/// `(n, 0)` under the standard chain and attach the exact references.
pub fn a_n_experiment(
    measure: &RateMeasure,
    n: u64,
    reps: u64,
    seed: u64,
) -> Result<AnReport> {
    if n < 2 {
        return Err(SimError::InvalidParameter("need n >= 2".into()));
    }
    if reps < 2 {
        return Err(SimError::InvalidParameter("need reps >= 2".into()));
    }
    let c = measure.total_mass();
    let label = label_id("a-n");
    let samples: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = derive_stream(seed, &[label, rep]);
            level_deactivation_statistic(n, measure, &mut rng).expect("validated") as f64
        })
        .collect();
    let exact = expected_a_exact(n, c);
    let bracket = (
        2.0 * c * (((n as f64) + 2.0 * c).ln() - (1.0 + 2.0 * c).ln()),
        2.0 * c * (((n as f64) + 2.0 * c - 1.0).ln() - (2.0 * c).ln()),
    );
    Ok(AnReport {
        n,
        summary: McSummary::from_samples(&samples)?,
        exact,
        bracket,
    })
}

/// Replicate-level T_MRCA sampling for the CLI: one row per replicate.
pub fn tmrca_replicates(
    measure: &RateMeasure,
    variant: Variant,
    n0: u64,
    m_size: u64,
    init: DormantInit,
    reps: u64,
    seed: u64,
    horizon: Option<f64>,
) -> Result<Vec<SimOutcome>> {
    variant.validate()?;
    if n0 + m_size == 0 {
        return Err(SimError::InvalidParameter(
            "need at least one initial block".into(),
        ));
    }
    let label = label_id("tmrca-replicates");
    let outcomes: Vec<SimOutcome> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = derive_stream(seed, &[label, rep]);
            let state = match init {
                DormantInit::Iid => BlockCountState::new_iid(n0, m_size as usize, measure, &mut rng),
                DormantInit::Fixed { rate } => {
                    BlockCountState::new(n0, &vec![rate; m_size as usize])
                }
            }
            .expect("validated");
            sample_tmrca(
                state,
                variant,
                measure,
                &mut rng,
                &RunOptions {
                    horizon,
                    record_trace: false,
                },
            )
            .expect("validated")
        })
        .collect();
    Ok(outcomes)
}

/// CSV with header `replicate,t_mrca,deactivations,absorbed`; the
/// `t_mrca` column holds the horizon time for non-absorbed replicates
/// (`absorbed` = 0).
pub fn tmrca_csv(outcomes: &[SimOutcome]) -> String {
    let mut out = String::from("replicate,t_mrca,deactivations,absorbed\n");
    for (i, o) in outcomes.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i,
            o.time,
            o.deactivations,
            u8::from(o.absorbed)
        ));
    }
    out
}

/// On-disk config of the `grid` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub measure: MeasureConfig,
    /// `[n, m_size]` pairs.
    pub schedule: Vec<[u64; 2]>,
    pub reps: u64,
    pub seed: u64,
    #[serde(default)]
    pub init: Option<DormantInit>,
    #[serde(default)]
    pub out: Option<String>,
}

/// On-disk config of the `notcdi` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NotCdiConfig {
    pub measure: MeasureConfig,
    pub n_grid: Vec<u64>,
    pub t: f64,
    pub reps: u64,
    pub seed: u64,
    #[serde(default)]
    pub out: Option<String>,
}

/// On-disk config of the `an` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnConfig {
    pub measure: MeasureConfig,
    pub n: u64,
    pub reps: u64,
    pub seed: u64,
    #[serde(default)]
    pub out: Option<String>,
}
