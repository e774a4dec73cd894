//! The dormant-block multiset `m = Σ m_i δ_{λ_i}`.
//!
//! Each dormant block occupies its own slot carrying its wake-up rate;
//! blocks with equal float rates never merge, because block identity is
//! the slot, not the rate. A Fenwick tree over slot rates gives O(log n)
//! insertion and rate-proportional removal. Removed slots are tombstoned
//! and the structure compacts once dead slots exceed half the tree, so
//! the amortized cost stays logarithmic however many wake/sleep cycles a
//! simulation goes through.

use rand::Rng;

use crate::error::{Result, SimError};

/// Identity of one dormant block. Ids are unique within a bank for its
/// whole lifetime and are never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SlotId(pub u64);

/// Exact re-summation period: after this many mutations the aggregate
/// total rate is recomputed from scratch to bound float drift.
const RESUM_PERIOD: u64 = 1 << 16;

#[derive(Debug, Clone, Default)]
pub struct DormantBank {
    /// Fenwick partial sums, 1-indexed; `tree[0]` unused.
    tree: Vec<f64>,
    /// Per-slot rate (0.0 once tombstoned).
    rates: Vec<f64>,
    /// Stable external id per slot.
    ids: Vec<u64>,
    alive: Vec<bool>,
    alive_count: usize,
    total_rate: f64,
    next_id: u64,
    mutations: u64,
}

impl DormantBank {
    pub fn new() -> Self {
        DormantBank {
            tree: vec![0.0],
            ..Default::default()
        }
    }

    /// Number of dormant blocks, `||m||_TV`.
    pub fn count(&self) -> usize {
        self.alive_count
    }

    pub fn is_empty(&self) -> bool {
        self.alive_count == 0
    }

    /// Total activation rate `∫ λ m(dλ)`.
    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    /// Add a dormant block with wake-up rate `rate`.
    pub fn insert(&mut self, rate: f64) -> Result<SlotId> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(SimError::InvalidParameter(format!(
                "dormant block rate must be finite and > 0, got {rate}"
            )));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.rates.push(rate);
        self.ids.push(id);
        self.alive.push(true);
        self.fenwick_push(rate);
        self.alive_count += 1;
        self.total_rate += rate;
        self.after_mutation();
        Ok(SlotId(id))
    }

    /// Remove one block chosen with probability `rate / total_rate` and
    /// return its id and rate.
    pub fn sample_activation<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(SlotId, f64)> {
        if self.alive_count == 0 {
            return Err(SimError::EmptyBank);
        }
        let target = rng.gen::<f64>() * self.total_rate;
        let mut idx = self.fenwick_select(target);
        if idx >= self.rates.len() || !self.alive[idx] {
            // Float drift in interior tree nodes can, in principle, land
            // the descent on a tombstone; fall back to the nearest live
            // slot. Unobservable in distribution.
            idx = self.nearest_alive(idx.min(self.rates.len().saturating_sub(1)));
        }
        let rate = self.rates[idx];
        let id = self.ids[idx];
        self.alive[idx] = false;
        self.rates[idx] = 0.0;
        self.fenwick_update(idx, -rate);
        self.alive_count -= 1;
        self.total_rate -= rate;
        if self.alive_count == 0 {
            self.total_rate = 0.0;
        }
        self.after_mutation();
        Ok((SlotId(id), rate))
    }

    /// Live slots grouped by exact rate value, rates ascending.
    /// Multiplicities sum to `count()`.
    pub fn snapshot(&self) -> Vec<(f64, usize)> {
        let mut rates: Vec<f64> = self
            .rates
            .iter()
            .zip(&self.alive)
            .filter(|(_, &a)| a)
            .map(|(&r, _)| r)
            .collect();
        rates.sort_by(f64::total_cmp);
        let mut grouped: Vec<(f64, usize)> = Vec::new();
        for r in rates {
            match grouped.last_mut() {
                Some((rate, n)) if *rate == r => *n += 1,
                _ => grouped.push((r, 1)),
            }
        }
        grouped
    }

    /// Rates of all live slots in insertion order.
    pub fn live_rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.rates
            .iter()
            .zip(&self.alive)
            .filter(|(_, &a)| a)
            .map(|(&r, _)| r)
    }

    fn after_mutation(&mut self) {
        self.mutations += 1;
        let dead = self.rates.len() - self.alive_count;
        if dead > self.rates.len() / 2 && self.rates.len() >= 8 {
            self.compact();
        } else if self.mutations % RESUM_PERIOD == 0 {
            self.resum();
        }
    }

    /// Drop tombstones and rebuild the tree.
    fn compact(&mut self) {
        let mut rates = Vec::with_capacity(self.alive_count);
        let mut ids = Vec::with_capacity(self.alive_count);
        for i in 0..self.rates.len() {
            if self.alive[i] {
                rates.push(self.rates[i]);
                ids.push(self.ids[i]);
            }
        }
        self.rates = rates;
        self.ids = ids;
        self.alive = vec![true; self.rates.len()];
        self.rebuild_tree();
    }

    /// Recompute aggregates exactly from slot rates.
    fn resum(&mut self) {
        self.rebuild_tree();
    }

    fn rebuild_tree(&mut self) {
        self.total_rate = self.rates.iter().sum();
        self.tree = vec![0.0; self.rates.len() + 1];
        for i in 0..self.rates.len() {
            let pos = i + 1;
            self.tree[pos] += self.rates[i];
            let next = pos + (pos & pos.wrapping_neg());
            if next < self.tree.len() {
                let add = self.tree[pos];
                self.tree[next] += add;
            }
        }
    }

    /// Append one leaf with value `value` (slot index = len before push).
    fn fenwick_push(&mut self, value: f64) {
        let pos = self.tree.len(); // 1-based index of the new leaf
        let mut v = value;
        let mut step = 1;
        while step < (pos & pos.wrapping_neg()) {
            v += self.tree[pos - step];
            step <<= 1;
        }
        self.tree.push(v);
    }

    /// Add `delta` to slot `idx` (0-based).
    fn fenwick_update(&mut self, idx: usize, delta: f64) {
        let mut pos = idx + 1;
        while pos < self.tree.len() {
            self.tree[pos] += delta;
            pos += pos & pos.wrapping_neg();
        }
    }

    /// Largest prefix with sum <= target, returning the 0-based index of
    /// the first slot whose cumulative rate exceeds `target`.
    fn fenwick_select(&self, target: f64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0usize;
        let mut rem = target;
        let mut mask = n.next_power_of_two();
        while mask > 0 {
            let next = pos + mask;
            if next <= n && self.tree[next] <= rem {
                rem -= self.tree[next];
                pos = next;
            }
            mask >>= 1;
        }
        pos // 0-based index of slot pos+1 in 1-based terms
    }

    fn nearest_alive(&self, from: usize) -> usize {
        for offset in 0..self.rates.len() {
            let lo = from.wrapping_sub(offset);
            if lo < self.rates.len() && self.alive[lo] {
                return lo;
            }
            let hi = from + offset;
            if hi < self.rates.len() && self.alive[hi] {
                return hi;
            }
        }
        unreachable!("nearest_alive called on empty bank");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn insert_updates_aggregates() {
        let mut bank = DormantBank::new();
        bank.insert(1.0).unwrap();
        assert_eq!(bank.count(), 1);
        assert!((bank.total_rate() - 1.0).abs() < 1e-15);
        bank.insert(3.0).unwrap();
        assert!((bank.total_rate() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn equal_rates_never_merge() {
        let mut bank = DormantBank::new();
        let a = bank.insert(1.0).unwrap();
        let b = bank.insert(1.0).unwrap();
        assert_ne!(a, b);
        assert_eq!(bank.count(), 2);
        assert_eq!(bank.snapshot(), vec![(1.0, 2)]);
    }

    #[test]
    fn rejects_nonpositive_rate() {
        let mut bank = DormantBank::new();
        assert!(bank.insert(0.0).is_err());
        assert!(bank.insert(-1.0).is_err());
    }

    #[test]
    fn insert_then_sample_round_trip() {
        let mut bank = DormantBank::new();
        bank.insert(2.0).unwrap();
        let mut rng = derive_stream(1, &[0]);
        let (_, rate) = bank.sample_activation(&mut rng).unwrap();
        assert_eq!(rate, 2.0);
        assert!(bank.is_empty());
        assert_eq!(bank.total_rate(), 0.0);
        assert!(matches!(
            bank.sample_activation(&mut rng),
            Err(SimError::EmptyBank)
        ));
    }

    #[test]
    fn sampling_is_rate_proportional() {
        // bank {1.0, 3.0}: P(pick 3.0) = 3/4 over 1e5 trials.
        let mut rng = derive_stream(1, &[1]);
        let n = 100_000;
        let mut hits = 0;
        for _ in 0..n {
            let mut bank = DormantBank::new();
            bank.insert(1.0).unwrap();
            bank.insert(3.0).unwrap();
            let (_, rate) = bank.sample_activation(&mut rng).unwrap();
            if rate == 3.0 {
                hits += 1;
            }
        }
        let p_hat = hits as f64 / n as f64;
        let se = (0.75 * 0.25 / n as f64).sqrt();
        assert!(
            (p_hat - 0.75).abs() < 4.0 * se,
            "p_hat = {p_hat}, want 0.75 ± {}",
            4.0 * se
        );
    }

    #[test]
    fn chi_square_on_five_slots() {
        // Frequencies over a 5-slot bank, 1e5 draws, chi-square GOF p > 0.01.
        let rates = [0.5, 1.0, 2.0, 3.5, 5.0];
        let total: f64 = rates.iter().sum();
        let mut rng = derive_stream(1, &[2]);
        let n = 100_000usize;
        let mut counts = [0u64; 5];
        for _ in 0..n {
            let mut bank = DormantBank::new();
            for &r in &rates {
                bank.insert(r).unwrap();
            }
            let (_, rate) = bank.sample_activation(&mut rng).unwrap();
            let k = rates.iter().position(|&r| r == rate).unwrap();
            counts[k] += 1;
        }
        let mut chi2 = 0.0;
        for (k, &c) in counts.iter().enumerate() {
            let expected = n as f64 * rates[k] / total;
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        let p = crate::stats::chi_square_sf(chi2, 4.0);
        assert!(p > 0.01, "chi2 = {chi2}, p = {p}");
    }

    #[test]
    fn aggregate_matches_snapshot_after_churn() {
        let mut rng = derive_stream(1, &[3]);
        let mut bank = DormantBank::new();
        let mut rates_rng = derive_stream(1, &[4]);
        for step in 0..5000 {
            if step % 3 != 2 || bank.is_empty() {
                let r = 0.1 + 9.9 * rand::Rng::gen::<f64>(&mut rates_rng);
                bank.insert(r).unwrap();
            } else {
                bank.sample_activation(&mut rng).unwrap();
            }
            if step % 500 == 0 {
                let from_snapshot: f64 =
                    bank.snapshot().iter().map(|(r, n)| r * *n as f64).sum();
                let denom = from_snapshot.max(1e-300);
                assert!(
                    ((bank.total_rate() - from_snapshot) / denom).abs() < 1e-9,
                    "aggregate {} vs snapshot {}",
                    bank.total_rate(),
                    from_snapshot
                );
                let count: usize = bank.snapshot().iter().map(|(_, n)| n).sum();
                assert_eq!(count, bank.count());
            }
        }
    }
}
