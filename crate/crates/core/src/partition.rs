//! The marked-partition process at small sample sizes.
//!
//! Two independent realizations of the same law:
//!
//! - [`simulate_direct`]: the jump chain on marked partitions — per
//!   active block a flag change to a fresh dormancy rate at total rate
//!   `c`, per dormant block a wake-up at its own rate, and each pair of
//!   active blocks merging at rate 1.
//! - [`simulate_graphical`]: per-individual alternating-renewal flag
//!   paths (active Exp(c), dormant Exp(λ) with λ drawn at each onset)
//!   superposed with unit-rate Poisson clocks on the pairs; a ring merges
//!   the two blocks when both labels are flagged active, into the lower
//!   position.
//!
//! Agreement of the two in law is part of the verification suite, as is
//! exchangeability of the resulting random partitions.

use std::cmp::Reverse;
use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Result, SimError};
use crate::measure::RateMeasure;
use crate::stats::chi_square_homogeneity;

/// Partition sizes are capped here; this module is for combinatorial
/// checks, large populations belong to the block-counting engine.
pub const MAX_K: usize = 64;

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// One block: a member bitmask over `0..k` and a flag
/// (`0.0` = active, `λ > 0` = dormant with wake-up rate `λ`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub members: u64,
    pub flag: f64,
}

impl Block {
    pub fn is_active(&self) -> bool {
        self.flag == 0.0
    }

    /// Lowest member index (the block's label).
    pub fn label(&self) -> usize {
        self.members.trailing_zeros() as usize
    }
}

/// A partition of `{0, …, k-1}` with per-block flags, blocks ordered by
/// their lowest element.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedPartition {
    k: usize,
    blocks: Vec<Block>,
}

impl MarkedPartition {
    /// `k` singleton blocks with the given initial flags.
    pub fn singletons(flags: &[f64]) -> Result<Self> {
        let k = flags.len();
        if k == 0 || k > MAX_K {
            return Err(SimError::InvalidParameter(format!(
                "need 1 <= K <= {MAX_K}, got {k}"
            )));
        }
        if flags.iter().any(|&f| f < 0.0 || !f.is_finite()) {
            return Err(SimError::InvalidParameter(
                "flags must be 0 (active) or a positive rate".into(),
            ));
        }
        Ok(MarkedPartition {
            k,
            blocks: flags
                .iter()
                .enumerate()
                .map(|(i, &flag)| Block {
                    members: 1u64 << i,
                    flag,
                })
                .collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn same_block(&self, i: usize, j: usize) -> bool {
        self.blocks
            .iter()
            .any(|b| b.members & (1 << i) != 0 && b.members & (1 << j) != 0)
    }

    /// Index of the block containing individual `i`.
    fn block_of(&self, i: usize) -> usize {
        self.blocks
            .iter()
            .position(|b| b.members & (1 << i) != 0)
            .expect("individual not covered")
    }

    /// Merge the blocks containing `i` and `j` (must be distinct and both
    /// active); the merged block keeps the lower label and stays active.
    fn merge(&mut self, i: usize, j: usize) {
        let a = self.block_of(i);
        let b = self.block_of(j);
        assert_ne!(a, b, "merge within one block");
        assert!(
            self.blocks[a].is_active() && self.blocks[b].is_active(),
            "merge of non-active blocks"
        );
        let (keep, drop) = if a < b { (a, b) } else { (b, a) };
        let dropped = self.blocks.remove(drop);
        self.blocks[keep].members |= dropped.members;
    }

    /// Check the partition invariant: disjoint, non-empty, covering.
    pub fn is_valid(&self) -> bool {
        let mut seen = 0u64;
        for b in &self.blocks {
            if b.members == 0 || b.members & seen != 0 {
                return false;
            }
            seen |= b.members;
        }
        let full = if self.k == 64 {
            u64::MAX
        } else {
            (1u64 << self.k) - 1
        };
        seen == full
    }

    /// Bit pattern of pair co-membership over all pairs `i < j` in
    /// lexicographic order. Used as the partition shape statistic.
    pub fn pair_pattern(&self) -> u64 {
        let mut pattern = 0u64;
        let mut bit = 0;
        for i in 0..self.k {
            for j in (i + 1)..self.k {
                if self.same_block(i, j) {
                    pattern |= 1 << bit;
                }
                bit += 1;
            }
        }
        pattern
    }

    /// Render like `{1,6}^0 {2}^0.1` with 1-based members.
    pub fn render(&self) -> String {
        self.blocks
            .iter()
            .map(|b| {
                let members: Vec<String> = (0..self.k)
                    .filter(|i| b.members & (1 << i) != 0)
                    .map(|i| (i + 1).to_string())
                    .collect();
                format!("{{{}}}^{}", members.join(","), b.flag)
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Events recorded by the simulators; blocks are identified by their
/// label (lowest member, 0-based) at the time of the event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionEventKind {
    /// Blocks labeled `a` and `b` merged (into `min(a, b)`).
    Merge { a: usize, b: usize },
    /// Block labeled `block` went dormant with rate `rate`.
    Deactivate { block: usize, rate: f64 },
    /// Block labeled `block` woke up.
    Activate { block: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionEvent {
    pub time: f64,
    pub kind: PartitionEventKind,
}

impl PartitionEvent {
    /// `kind,detail` cells of the event-log CSV (1-based labels).
    pub fn kind_and_detail(&self) -> (&'static str, String) {
        match self.kind {
            PartitionEventKind::Merge { a, b } => ("merge", format!("{}+{}", a + 1, b + 1)),
            PartitionEventKind::Deactivate { block, rate } => {
                ("deactivate", format!("{}@{}", block + 1, rate))
            }
            PartitionEventKind::Activate { block } => ("activate", format!("{}", block + 1)),
        }
    }
}

/// Replayable result of one partition-valued run.
pub trait PartitionQuery {
    fn partition_at(&self, t: f64) -> MarkedPartition;
    /// First time the partition had a single block, when reached.
    fn t_mrca(&self) -> Option<f64>;
    fn events(&self) -> &[PartitionEvent];
    fn block_count_at(&self, t: f64) -> usize {
        self.partition_at(t).block_count()
    }
}

/// Trajectory of the jump-chain simulator: replay from the initial flags
/// through the event log.
#[derive(Debug, Clone)]
pub struct DirectTrajectory {
    initial_flags: Vec<f64>,
    events: Vec<PartitionEvent>,
    t_mrca: Option<f64>,
    pub horizon: f64,
}

impl PartitionQuery for DirectTrajectory {
    fn partition_at(&self, t: f64) -> MarkedPartition {
        let mut partition = MarkedPartition::singletons(&self.initial_flags).expect("validated");
        for event in self.events.iter().take_while(|e| e.time <= t) {
            match event.kind {
                PartitionEventKind::Merge { a, b } => partition.merge(a, b),
                PartitionEventKind::Deactivate { block, rate } => {
                    let idx = partition.block_of(block);
                    partition.blocks[idx].flag = rate;
                }
                PartitionEventKind::Activate { block } => {
                    let idx = partition.block_of(block);
                    partition.blocks[idx].flag = 0.0;
                }
            }
        }
        partition
    }

    fn t_mrca(&self) -> Option<f64> {
        self.t_mrca
    }

    fn events(&self) -> &[PartitionEvent] {
        &self.events
    }
}

/// Core jump-chain loop shared by the recording and fast-path runners.
fn direct_run<R: Rng + ?Sized>(
    measure: &RateMeasure,
    horizon: f64,
    initial_flags: &[f64],
    rng: &mut R,
    mut on_event: impl FnMut(PartitionEvent),
) -> Result<(MarkedPartition, Option<f64>)> {
    let mut partition = MarkedPartition::singletons(initial_flags)?;
    if !(horizon >= 0.0) {
        return Err(SimError::InvalidParameter("horizon must be >= 0".into()));
    }
    let c = measure.total_mass();
    let mut t_mrca = (partition.block_count() == 1).then_some(0.0);
    let mut t = 0.0;
    loop {
        let active: Vec<usize> = (0..partition.blocks.len())
            .filter(|&i| partition.blocks[i].is_active())
            .collect();
        let n_active = active.len() as f64;
        let merge_rate = n_active * (n_active - 1.0) / 2.0;
        let deact_rate = c * n_active;
        let act_rate: f64 = partition
            .blocks
            .iter()
            .filter(|b| !b.is_active())
            .map(|b| b.flag)
            .sum();
        let total = merge_rate + deact_rate + act_rate;
        if total <= 0.0 {
            break;
        }
        let holding: f64 = Exp1.sample(rng);
        t += holding / total;
        if t > horizon {
            break;
        }
        let u = rng.gen::<f64>() * total;
        if u < merge_rate {
            let pairs = active.len() * (active.len() - 1) / 2;
            let mut idx = (((u / merge_rate) * pairs as f64).floor() as usize).min(pairs - 1);
            let mut chosen = (0, 0);
            'outer: for (ai, &a) in active.iter().enumerate() {
                for &b in &active[ai + 1..] {
                    if idx == 0 {
                        chosen = (a, b);
                        break 'outer;
                    }
                    idx -= 1;
                }
            }
            let label_a = partition.blocks[chosen.0].label();
            let label_b = partition.blocks[chosen.1].label();
            partition.merge(label_a, label_b);
            on_event(PartitionEvent {
                time: t,
                kind: PartitionEventKind::Merge {
                    a: label_a,
                    b: label_b,
                },
            });
            if partition.block_count() == 1 && t_mrca.is_none() {
                t_mrca = Some(t);
            }
        } else if u < merge_rate + deact_rate {
            let which = (((u - merge_rate) / c).floor() as usize).min(active.len() - 1);
            let block = active[which];
            let rate = measure.sample_rate(rng)?;
            partition.blocks[block].flag = rate;
            on_event(PartitionEvent {
                time: t,
                kind: PartitionEventKind::Deactivate {
                    block: partition.blocks[block].label(),
                    rate,
                },
            });
        } else {
            let mut target = u - merge_rate - deact_rate;
            let mut chosen = None;
            for (i, b) in partition.blocks.iter().enumerate() {
                if !b.is_active() {
                    if target < b.flag {
                        chosen = Some(i);
                        break;
                    }
                    target -= b.flag;
                }
            }
            let block = chosen.unwrap_or_else(|| {
                partition
                    .blocks
                    .iter()
                    .rposition(|b| !b.is_active())
                    .expect("activation with no dormant block")
            });
            partition.blocks[block].flag = 0.0;
            on_event(PartitionEvent {
                time: t,
                kind: PartitionEventKind::Activate {
                    block: partition.blocks[block].label(),
                },
            });
        }
    }
    Ok((partition, t_mrca))
}

/// Run the marked-partition jump chain to `horizon`, recording every
/// event into a replayable trajectory.
pub fn simulate_direct<R: Rng + ?Sized>(
    measure: &RateMeasure,
    horizon: f64,
    initial_flags: &[f64],
    rng: &mut R,
) -> Result<DirectTrajectory> {
    let mut events = Vec::new();
    let (_, t_mrca) = direct_run(measure, horizon, initial_flags, rng, |e| events.push(e))?;
    Ok(DirectTrajectory {
        initial_flags: initial_flags.to_vec(),
        events,
        t_mrca,
        horizon,
    })
}

/// Final partition at `t` without event recording.
pub fn direct_partition_at<R: Rng + ?Sized>(
    measure: &RateMeasure,
    t: f64,
    initial_flags: &[f64],
    rng: &mut R,
) -> Result<MarkedPartition> {
    direct_run(measure, t, initial_flags, rng, |_| {}).map(|(p, _)| p)
}

/// Piecewise-constant flag path of one position.
#[derive(Debug, Clone)]
struct FlagPath {
    /// `(start_time, flag)`, first entry at time 0; constant after the
    /// last entry through the horizon.
    segments: Vec<(f64, f64)>,
}

impl FlagPath {
    fn generate<R: Rng + ?Sized>(
        initial_flag: f64,
        measure: &RateMeasure,
        horizon: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let c = measure.total_mass();
        let mut segments = vec![(0.0, initial_flag)];
        let mut t = 0.0;
        let mut flag = initial_flag;
        while t <= horizon {
            if flag == 0.0 {
                if c == 0.0 {
                    break; // active forever
                }
                t += exp1(rng) / c;
                if t > horizon {
                    break;
                }
                flag = measure.sample_rate(rng)?;
                segments.push((t, flag));
            } else {
                t += exp1(rng) / flag;
                if t > horizon {
                    break;
                }
                flag = 0.0;
                segments.push((t, 0.0));
            }
        }
        Ok(FlagPath { segments })
    }

    fn flag_at(&self, t: f64) -> f64 {
        match self
            .segments
            .binary_search_by(|&(s, _)| s.total_cmp(&t))
        {
            Ok(i) => self.segments[i].1,
            Err(0) => self.segments[0].1,
            Err(i) => self.segments[i - 1].1,
        }
    }
}

/// Trajectory of the graphical construction: merge events plus the
/// per-position flag paths that drove them. Post-merge, every individual
/// of a block reads the label position's path — merged lines share one
/// renewal process.
#[derive(Debug, Clone)]
pub struct GraphicalTrajectory {
    k: usize,
    paths: Vec<FlagPath>,
    events: Vec<PartitionEvent>,
    t_mrca: Option<f64>,
    pub horizon: f64,
}

impl PartitionQuery for GraphicalTrajectory {
    fn partition_at(&self, t: f64) -> MarkedPartition {
        let mut label: Vec<usize> = (0..self.k).collect();
        for event in self.events.iter().take_while(|e| e.time <= t) {
            if let PartitionEventKind::Merge { a, b } = event.kind {
                let (winner, loser) = if a < b { (a, b) } else { (b, a) };
                for l in label.iter_mut() {
                    if *l == loser {
                        *l = winner;
                    }
                }
            }
        }
        let mut by_label: BTreeMap<usize, u64> = BTreeMap::new();
        for (individual, &l) in label.iter().enumerate() {
            *by_label.entry(l).or_insert(0) |= 1u64 << individual;
        }
        MarkedPartition {
            k: self.k,
            blocks: by_label
                .into_iter()
                .map(|(l, members)| Block {
                    members,
                    flag: self.paths[l].flag_at(t),
                })
                .collect(),
        }
    }

    fn t_mrca(&self) -> Option<f64> {
        self.t_mrca
    }

    fn events(&self) -> &[PartitionEvent] {
        &self.events
    }
}

/// Ordering key for the clock queue; times are finite by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ClockEntry {
    time: f64,
    pair: usize,
}

impl Eq for ClockEntry {}

impl Ord for ClockEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // exact-time ties break by pair index; unobservable in law
        self.time
            .total_cmp(&other.time)
            .then(self.pair.cmp(&other.pair))
    }
}

impl PartialOrd for ClockEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Run the graphical construction to `horizon`: renewal flag paths per
/// position, lazily regenerated unit-rate clocks per pair, merge on a
/// ring finding both labels active.
pub fn simulate_graphical<R: Rng + ?Sized>(
    measure: &RateMeasure,
    horizon: f64,
    initial_flags: &[f64],
    rng: &mut R,
) -> Result<GraphicalTrajectory> {
    let k = initial_flags.len();
    MarkedPartition::singletons(initial_flags)?; // validates K and flags
    if !(horizon >= 0.0) {
        return Err(SimError::InvalidParameter("horizon must be >= 0".into()));
    }
    // flag paths drawn position by position, then clocks in pair order
    let mut paths = Vec::with_capacity(k);
    for &flag in initial_flags {
        paths.push(FlagPath::generate(flag, measure, horizon, rng)?);
    }
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| ((i + 1)..k).map(move |j| (i, j)))
        .collect();
    let mut queue = std::collections::BinaryHeap::with_capacity(pairs.len());
    for (idx, _) in pairs.iter().enumerate() {
        let first: f64 = Exp1.sample(rng);
        queue.push(Reverse(ClockEntry {
            time: first,
            pair: idx,
        }));
    }
    let mut label: Vec<usize> = (0..k).collect();
    let mut block_count = k;
    let mut events = Vec::new();
    let mut t_mrca = (k == 1).then_some(0.0);
    while let Some(Reverse(entry)) = queue.pop() {
        if entry.time > horizon || block_count == 1 {
            break;
        }
        let (i, j) = pairs[entry.pair];
        // a ring acts only when both indices are the labels of their own
        // blocks; otherwise a block pair would merge at rate |A||B|
        // instead of 1
        if label[i] == i && label[j] == j {
            let flag_i = paths[i].flag_at(entry.time);
            let flag_j = paths[j].flag_at(entry.time);
            if flag_i == 0.0 && flag_j == 0.0 {
                // pair order gives i < j, so the surviving label is i
                for l in label.iter_mut() {
                    if *l == j {
                        *l = i;
                    }
                }
                block_count -= 1;
                events.push(PartitionEvent {
                    time: entry.time,
                    kind: PartitionEventKind::Merge { a: i, b: j },
                });
                if block_count == 1 {
                    t_mrca = Some(entry.time);
                    break;
                }
            }
        }
        let gap: f64 = Exp1.sample(rng);
        queue.push(Reverse(ClockEntry {
            time: entry.time + gap,
            pair: entry.pair,
        }));
    }
    Ok(GraphicalTrajectory {
        k,
        paths,
        events,
        t_mrca,
        horizon,
    })
}

/// State of one ancestral line at time `t` by direct simulation of its
/// alternating renewal process, over `reps` lines started active.
/// Returns the active fraction and its standard error.
pub fn ancestral_line_active_mc<R: Rng + ?Sized>(
    measure: &RateMeasure,
    t: f64,
    reps: u64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if reps < 2 {
        return Err(SimError::InvalidParameter("need >= 2 replicates".into()));
    }
    let c = measure.total_mass();
    let mut active_count = 0u64;
    for _ in 0..reps {
        let mut clock = 0.0;
        let mut active = true;
        loop {
            if active {
                if c == 0.0 {
                    break;
                }
                let dt = exp1(rng) / c;
                if clock + dt > t {
                    break;
                }
                clock += dt;
                let rate = measure.sample_rate(rng)?;
                let dormant_for = exp1(rng) / rate;
                if clock + dormant_for > t {
                    active = false;
                    break;
                }
                clock += dormant_for;
            } else {
                unreachable!("dormancy handled in the active arm");
            }
        }
        if active {
            active_count += 1;
        }
    }
    let p = active_count as f64 / reps as f64;
    let se = (p * (1.0 - p) / reps as f64).sqrt();
    Ok((p, se))
}

/// Result of the exchangeability comparison.
#[derive(Debug, Clone, Copy)]
pub struct ExchangeabilityReport {
    pub chi2: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Compare the distribution of the pair co-membership pattern at time
/// `t` between identity-labeled runs and independent runs relabeled by
/// `sigma` (chi-square homogeneity over observed patterns, rare ones
/// pooled).
///
/// `sigma` must permute `{0, …, k-1}`; all lines start active, since the
/// permuted partition is only exchangeable with the original when the
/// permuted initial flags are identical.
pub fn exchangeability_test<R: Rng + ?Sized>(
    k: usize,
    measure: &RateMeasure,
    t: f64,
    sigma: &[usize],
    reps: u64,
    rng: &mut R,
) -> Result<ExchangeabilityReport> {
    if sigma.len() != k {
        return Err(SimError::InvalidParameter(format!(
            "sigma permutes {} elements but K = {k}",
            sigma.len()
        )));
    }
    let mut seen = vec![false; k];
    for &s in sigma {
        if s >= k || seen[s] {
            return Err(SimError::InvalidParameter(
                "sigma is not a permutation".into(),
            ));
        }
        seen[s] = true;
    }
    if !(2..=16).contains(&k) {
        return Err(SimError::InvalidParameter(
            "pair-pattern statistic supports 2 <= K <= 16".into(),
        ));
    }
    let flags = vec![0.0; k];
    // inverse permutation: who sits at position a after relabeling
    let mut sigma_inv = vec![0usize; k];
    for (i, &s) in sigma.iter().enumerate() {
        sigma_inv[s] = i;
    }
    let mut counts_identity: BTreeMap<u64, u64> = BTreeMap::new();
    let mut counts_sigma: BTreeMap<u64, u64> = BTreeMap::new();
    for _ in 0..reps {
        let partition = direct_partition_at(measure, t, &flags, rng)?;
        *counts_identity.entry(partition.pair_pattern()).or_insert(0) += 1;
    }
    for _ in 0..reps {
        let partition = direct_partition_at(measure, t, &flags, rng)?;
        let mut pattern = 0u64;
        let mut bit = 0;
        for a in 0..k {
            for b in (a + 1)..k {
                // σ(i), σ(j) share a block in Π_σ iff i, j share in Π
                if partition.same_block(sigma_inv[a], sigma_inv[b]) {
                    pattern |= 1 << bit;
                }
                bit += 1;
            }
        }
        *counts_sigma.entry(pattern).or_insert(0) += 1;
    }
    let all_patterns: std::collections::BTreeSet<u64> = counts_identity
        .keys()
        .chain(counts_sigma.keys())
        .copied()
        .collect();
    let a: Vec<u64> = all_patterns
        .iter()
        .map(|p| counts_identity.get(p).copied().unwrap_or(0))
        .collect();
    let b: Vec<u64> = all_patterns
        .iter()
        .map(|p| counts_sigma.get(p).copied().unwrap_or(0))
        .collect();
    let (chi2, df, p_value) = chi_square_homogeneity(&a, &b, 20)?;
    Ok(ExchangeabilityReport { chi2, df, p_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use crate::stats::McSummary;

    fn delta1() -> RateMeasure {
        RateMeasure::single_atom(1.0, 1.0).unwrap()
    }

    #[test]
    fn single_individual_stays_single_block() {
        let mut rng = derive_stream(21, &[0]);
        let traj = simulate_direct(&delta1(), 5.0, &[0.0], &mut rng).unwrap();
        for &t in &[0.0, 1.0, 4.9] {
            assert_eq!(traj.block_count_at(t), 1);
        }
        assert_eq!(traj.t_mrca(), Some(0.0));
    }

    #[test]
    fn kingman_pair_time_is_exp_one() {
        // K=2, c=0: coalescence time ~ Exp(1).
        let mut rng = derive_stream(21, &[1]);
        let reps = 20_000;
        let samples: Vec<f64> = (0..reps)
            .map(|_| {
                simulate_graphical(&RateMeasure::empty(), 100.0, &[0.0, 0.0], &mut rng)
                    .unwrap()
                    .t_mrca()
                    .expect("absorbs well before horizon")
            })
            .collect();
        let summary = McSummary::from_samples(&samples).unwrap();
        assert!(
            (summary.mean - 1.0).abs() < 4.0 * summary.se,
            "mean {} se {}",
            summary.mean,
            summary.se
        );
    }

    #[test]
    fn block_count_nonincreasing_without_dormancy() {
        let mut rng = derive_stream(21, &[2]);
        let traj = simulate_direct(&RateMeasure::empty(), 50.0, &[0.0; 6], &mut rng).unwrap();
        let mut last = 6;
        for e in traj.events() {
            let now = traj.block_count_at(e.time);
            assert!(now <= last);
            last = now;
        }
    }

    #[test]
    fn direct_rate_arithmetic_two_active() {
        // K=2 both active, μ=δ₁ c=1: first-event rate = 1 + 2 = 3, so the
        // mean first-event time is 1/3.
        let mut rng = derive_stream(21, &[3]);
        let reps = 20_000;
        let samples: Vec<f64> = (0..reps)
            .map(|_| {
                let traj = simulate_direct(&delta1(), 100.0, &[0.0, 0.0], &mut rng).unwrap();
                traj.events()[0].time
            })
            .collect();
        let summary = McSummary::from_samples(&samples).unwrap();
        assert!(
            (summary.mean - 1.0 / 3.0).abs() < 4.0 * summary.se,
            "mean {} se {}",
            summary.mean,
            summary.se
        );
    }

    #[test]
    fn dormant_singleton_wakes_at_its_rate() {
        // K=1 dormant with flag λ=2: time to active ~ Exp(2).
        let mut rng = derive_stream(21, &[4]);
        let reps = 20_000;
        let samples: Vec<f64> = (0..reps)
            .map(|_| {
                let traj = simulate_direct(&delta1(), 100.0, &[2.0], &mut rng).unwrap();
                traj.events()
                    .iter()
                    .find(|e| matches!(e.kind, PartitionEventKind::Activate { .. }))
                    .expect("wakes")
                    .time
            })
            .collect();
        let summary = McSummary::from_samples(&samples).unwrap();
        assert!(
            (summary.mean - 0.5).abs() < 4.0 * summary.se,
            "mean {} se {}",
            summary.mean,
            summary.se
        );
    }

    #[test]
    fn replay_reconstructs_valid_partitions() {
        let mut rng = derive_stream(21, &[5]);
        for _ in 0..200 {
            let traj = simulate_direct(&delta1(), 3.0, &[0.0, 0.0, 0.0, 1.5], &mut rng).unwrap();
            for &t in &[0.0, 0.5, 1.5, 3.0] {
                let p = traj.partition_at(t);
                assert!(p.is_valid(), "invalid partition at t={t}: {}", p.render());
            }
        }
    }

    #[test]
    fn graphical_merges_only_active_blocks_and_min_labels() {
        let mut rng = derive_stream(21, &[6]);
        for _ in 0..200 {
            let traj = simulate_graphical(&delta1(), 10.0, &[0.0; 4], &mut rng).unwrap();
            let mut last_count = 4;
            for e in traj.events() {
                if let PartitionEventKind::Merge { a, b } = e.kind {
                    let p_after = traj.partition_at(e.time);
                    assert!(p_after.is_valid());
                    let merged = p_after
                        .blocks()
                        .iter()
                        .find(|blk| blk.members & (1 << a.min(b)) != 0)
                        .unwrap();
                    // the surviving label is the minimum of the two
                    assert_eq!(merged.label(), a.min(b));
                    assert!(merged.members & (1 << a.max(b)) != 0);
                    let count = p_after.block_count();
                    assert_eq!(count, last_count - 1);
                    last_count = count;
                }
            }
        }
    }

    #[test]
    fn graphical_and_direct_block_counts_agree_in_law() {
        // K=3 marginal mean block counts at two times; the full KS check
        // lives in the acceptance suite.
        let m = delta1();
        let reps = 4_000;
        let mut rng_a = derive_stream(21, &[7]);
        let mut rng_b = derive_stream(21, &[8]);
        for &t in &[0.5, 1.0] {
            let a: f64 = (0..reps)
                .map(|_| {
                    simulate_direct(&m, t, &[0.0; 3], &mut rng_a)
                        .unwrap()
                        .block_count_at(t) as f64
                })
                .sum::<f64>()
                / reps as f64;
            let b: f64 = (0..reps)
                .map(|_| {
                    simulate_graphical(&m, t, &[0.0; 3], &mut rng_b)
                        .unwrap()
                        .block_count_at(t) as f64
                })
                .sum::<f64>()
                / reps as f64;
            assert!((a - b).abs() < 0.08, "t={t}: direct {a} vs graphical {b}");
        }
    }

    #[test]
    fn ancestral_line_matches_closed_form() {
        let mut rng = derive_stream(21, &[9]);
        let (p, se) = ancestral_line_active_mc(&delta1(), 1.0, 50_000, &mut rng).unwrap();
        let expected = crate::oracles::single_bank_active_prob(1.0, 1.0, 1.0);
        assert!((p - expected).abs() < 4.0 * se + 1e-9, "{p} vs {expected}");
    }

    #[test]
    fn exchangeability_small_smoke() {
        let mut rng = derive_stream(21, &[10]);
        let report =
            exchangeability_test(4, &delta1(), 1.0, &[1, 0, 2, 3], 5_000, &mut rng).unwrap();
        assert!(report.p_value > 0.001, "p = {}", report.p_value);
    }

    #[test]
    fn exchangeability_rejects_bad_sigma() {
        let mut rng = derive_stream(21, &[11]);
        assert!(exchangeability_test(4, &delta1(), 1.0, &[0, 0, 1, 2], 10, &mut rng).is_err());
        assert!(exchangeability_test(4, &delta1(), 1.0, &[0, 1], 10, &mut rng).is_err());
    }

    #[test]
    fn pair_swap_symmetry() {
        // K=2 swap: P(1~2 at t) identical under relabeling by symmetry.
        let mut rng = derive_stream(21, &[12]);
        let report = exchangeability_test(2, &delta1(), 1.0, &[1, 0], 30_000, &mut rng).unwrap();
        assert!(report.p_value > 0.001, "p = {}", report.p_value);
    }
}
