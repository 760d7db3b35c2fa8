//! Monotone interpolation table between row numbers and key ordinals.
//!
//! The table stores known points `(λ, κ)` of the row/key relationship, always
//! including both ends. Lookups find the bracketing pair by bisection and
//! apply the segment-local hypergeometric mean estimate. Inserting a point
//! that contradicts older ones removes the older ones: the newest point is
//! taken to reflect the current data.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use num_traits::ToPrimitive;
use thiserror::Error;

use crate::stats::{interpolate_key, interpolate_lambda};
use crate::Ordinal;

pub const DEFAULT_LAMBDA_MAX: u64 = 1000;
pub const DEFAULT_CAPACITY: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpolationError {
    #[error("κ_min must be below κ_max")]
    EmptyDomain,
    #[error("row {lambda} is not strictly inside 0..{lambda_max}")]
    RangeError { lambda: u64, lambda_max: u64 },
    #[error("point ({lambda}, κ) contradicts a table endpoint")]
    StaleEndpointConflict { lambda: u64 },
}

/// What an insertion changed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EditSummary {
    /// Points deleted because they contradicted the new one.
    pub removed: Vec<(u64, Ordinal)>,
    /// Points evicted to respect the capacity.
    pub evicted: Vec<(u64, Ordinal)>,
    /// Whether the new point replaced one already stored at the same row.
    pub replaced: bool,
    pub generation: u64,
}

#[derive(Debug)]
pub struct InterpolationTable {
    /// Sorted by λ, and therefore by κ.
    points: Vec<(u64, Ordinal)>,
    capacity: usize,
    generation: u64,
    probes: AtomicU64,
}

impl Clone for InterpolationTable {
    fn clone(&self) -> Self {
        Self {
            points: self.points.clone(),
            capacity: self.capacity,
            generation: self.generation,
            probes: AtomicU64::new(self.probe_count()),
        }
    }
}

impl InterpolationTable {
    pub fn new(
        kappa_min: Ordinal,
        kappa_max: Ordinal,
        lambda_max: u64,
    ) -> Result<Self, InterpolationError> {
        Self::with_capacity(kappa_min, kappa_max, lambda_max, DEFAULT_CAPACITY)
    }

    pub fn with_capacity(
        kappa_min: Ordinal,
        kappa_max: Ordinal,
        lambda_max: u64,
        capacity: usize,
    ) -> Result<Self, InterpolationError> {
        if kappa_min >= kappa_max {
            return Err(InterpolationError::EmptyDomain);
        }
        Ok(Self {
            points: vec![(0, kappa_min), (lambda_max.max(1), kappa_max)],
            capacity: capacity.max(2),
            generation: 0,
            probes: AtomicU64::new(0),
        })
    }

    pub fn lambda_max(&self) -> u64 {
        self.points.last().expect("endpoints").0
    }

    pub fn kappa_min(&self) -> &Ordinal {
        &self.points[0].1
    }

    pub fn kappa_max(&self) -> &Ordinal {
        &self.points.last().expect("endpoints").1
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[(u64, Ordinal)] {
        &self.points
    }

    /// Number of bisection steps taken by lookups so far.
    pub fn probe_count(&self) -> u64 {
        self.probes.load(Ordering::Relaxed)
    }

    /// Index of the first point whose λ is `>= lambda`.
    fn lower_bound_lambda(&self, lambda: u64) -> usize {
        self.bisect(|(l, _)| *l < lambda)
    }

    /// Index of the first point whose κ is `>= kappa`.
    fn lower_bound_kappa(&self, kappa: &Ordinal) -> usize {
        self.bisect(|(_, k)| k < kappa)
    }

    fn bisect(&self, below: impl Fn(&(u64, Ordinal)) -> bool) -> usize {
        let (mut lo, mut hi) = (0, self.points.len());
        while lo < hi {
            self.probes.fetch_add(1, Ordering::Relaxed);
            let mid = lo + (hi - lo) / 2;
            if below(&self.points[mid]) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Estimated key ordinal for row `lambda`; rows past either end clamp.
    pub fn kappa_for(&self, lambda: u64) -> Ordinal {
        let lambda = lambda.min(self.lambda_max());
        let i = self.lower_bound_lambda(lambda);
        let (hi_l, hi_k) = &self.points[i];
        if *hi_l == lambda {
            return hi_k.clone();
        }
        let (lo_l, lo_k) = &self.points[i - 1];
        interpolate_key(lo_k, hi_k, hi_l - lo_l, lambda - lo_l)
    }

    /// Estimated row for key ordinal `kappa`; keys outside the table clamp.
    pub fn lambda_for(&self, kappa: &Ordinal) -> u64 {
        if kappa <= self.kappa_min() {
            return 0;
        }
        if kappa >= self.kappa_max() {
            return self.lambda_max();
        }
        let i = self.lower_bound_kappa(kappa);
        let (hi_l, hi_k) = &self.points[i];
        if hi_k == kappa {
            return *hi_l;
        }
        let (lo_l, lo_k) = &self.points[i - 1];
        lo_l + interpolate_lambda(lo_k, hi_k, hi_l - lo_l, kappa)
    }

    /// Row stored for exactly this key ordinal, if any.
    pub fn stored_lambda(&self, kappa: &Ordinal) -> Option<u64> {
        let i = self.lower_bound_kappa(kappa);
        self.points
            .get(i)
            .filter(|(_, k)| k == kappa)
            .map(|(l, _)| *l)
    }

    /// Adds an exact point, deleting every older point it contradicts.
    pub fn insert_point(
        &mut self,
        lambda: u64,
        kappa: Ordinal,
    ) -> Result<EditSummary, InterpolationError> {
        let lambda_max = self.lambda_max();
        if lambda == 0 || lambda >= lambda_max {
            return Err(InterpolationError::RangeError { lambda, lambda_max });
        }
        if &kappa <= self.kappa_min() || &kappa >= self.kappa_max() {
            return Err(InterpolationError::StaleEndpointConflict { lambda });
        }

        let mut summary = EditSummary::default();
        let mut at = self.lower_bound_lambda(lambda);
        if self.points[at].0 == lambda {
            summary.replaced = true;
            self.points.remove(at);
        }
        // Left neighbours with κ >= new κ form a contiguous run ending at `at`.
        let mut start = at;
        while start > 1 && self.points[start - 1].1 >= kappa {
            start -= 1;
        }
        summary.removed.extend(self.points.drain(start..at));
        at = start;
        let mut end = at;
        while end < self.points.len() - 1 && self.points[end].1 <= kappa {
            end += 1;
        }
        summary.removed.extend(self.points.drain(at..end));
        self.points.insert(at, (lambda, kappa));

        while self.points.len() > self.capacity {
            summary.evicted.push(self.evict_one());
        }
        self.generation += 1;
        summary.generation = self.generation;
        Ok(summary)
    }

    /// Removes the interior point best predicted by its neighbours.
    fn evict_one(&mut self) -> (u64, Ordinal) {
        let victim = (1..self.points.len() - 1)
            .min_by_key(|&i| {
                let (lo_l, lo_k) = &self.points[i - 1];
                let (hi_l, hi_k) = &self.points[i + 1];
                let (l, k) = &self.points[i];
                let predicted = interpolate_key(lo_k, hi_k, hi_l - lo_l, l - lo_l);
                if &predicted > k {
                    predicted - k
                } else {
                    k - predicted
                }
            })
            .expect("capacity of at least three points when evicting");
        self.points.remove(victim)
    }

    /// Moves the upper endpoint to `lambda_max`, dropping interior points at
    /// or beyond it.
    pub fn set_lambda_max(&mut self, lambda_max: u64) {
        let lambda_max = lambda_max.max(1);
        if lambda_max == self.lambda_max() {
            return;
        }
        let top = self.points.pop().expect("endpoints").1;
        self.points.retain(|(l, _)| *l == 0 || *l < lambda_max);
        self.points.push((lambda_max, top));
        self.generation += 1;
    }

    /// Adjacent pair of stored rows with the widest gap; ties go to the
    /// smaller lower bound.
    pub fn largest_gap(&self) -> (u64, u64) {
        let mut best = (self.points[0].0, self.points[1].0);
        for w in self.points.windows(2) {
            if w[1].0 - w[0].0 > best.1 - best.0 {
                best = (w[0].0, w[1].0);
            }
        }
        best
    }

    /// Stored points as `λ κ` lines.
    pub fn dump(&self) -> String {
        self.to_string()
    }

    pub fn is_strictly_monotone(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1)
    }

    /// Fraction of the row range covered by the widest gap.
    pub fn largest_gap_fraction(&self) -> f64 {
        let (lo, hi) = self.largest_gap();
        (hi - lo).to_f64().unwrap_or(0.0) / self.lambda_max() as f64
    }
}

impl fmt::Display for InterpolationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (l, k) in &self.points {
            writeln!(f, "{l} {k}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use proptest::prelude::*;

    fn ord(v: u64) -> Ordinal {
        BigUint::from(v)
    }

    fn table(points: &[(u64, u64)]) -> InterpolationTable {
        let (l0, k0) = points[0];
        let (ln, kn) = *points.last().unwrap();
        assert_eq!(l0, 0);
        let mut t = InterpolationTable::new(ord(k0), ord(kn), ln).unwrap();
        for &(l, k) in &points[1..points.len() - 1] {
            t.insert_point(l, ord(k)).unwrap();
        }
        t
    }

    #[test]
    fn init() {
        let t = InterpolationTable::new(ord(0), ord(100), DEFAULT_LAMBDA_MAX).unwrap();
        assert_eq!(t.points(), &[(0, ord(0)), (1000, ord(100))]);
        assert_eq!(t.lambda_max(), 1000);
        assert_eq!(
            InterpolationTable::new(ord(5), ord(5), 10).unwrap_err(),
            InterpolationError::EmptyDomain
        );
        assert_eq!(t.stored_lambda(&ord(100)), Some(1000));
        assert_eq!(t.stored_lambda(&ord(50)), None);
    }

    #[test]
    fn endpoint_only_lookups() {
        let t = table(&[(0, 0), (6, 60)]);
        assert_eq!(t.kappa_for(0), ord(0));
        assert_eq!(t.kappa_for(1), ord(1));
        assert_eq!(t.kappa_for(3), ord(25));
        assert_eq!(t.kappa_for(6), ord(60));
        assert_eq!(t.kappa_for(99), ord(60));
        assert_eq!(t.lambda_for(&ord(0)), 0);
        assert_eq!(t.lambda_for(&ord(31)), 4);
        assert_eq!(t.lambda_for(&ord(60)), 6);
        assert_eq!(t.lambda_for(&ord(1000)), 6);
    }

    #[test]
    fn lookups_use_bracketing_segment() {
        let t = table(&[(0, 0), (10, 1000), (20, 1010)]);
        assert_eq!(t.kappa_for(10), ord(1000));
        assert!(t.kappa_for(15) > ord(1000) && t.kappa_for(15) <= ord(1010));
        assert_eq!(t.lambda_for(&ord(1000)), 10);
        assert!((11..=20).contains(&t.lambda_for(&ord(1005))));
        assert!((1..=10).contains(&t.lambda_for(&ord(500))));
    }

    #[test]
    fn figure_three_repair() {
        // Points (1,1) (3,4) (5,6) (7,7); inserting (4,3) removes (3,4) only.
        let mut t = table(&[(0, 0), (1, 1), (3, 4), (5, 6), (7, 7)]);
        let s = t.insert_point(4, ord(3)).unwrap();
        assert_eq!(s.removed, vec![(3, ord(4))]);
        assert_eq!(
            t.points(),
            &[(0, ord(0)), (1, ord(1)), (4, ord(3)), (5, ord(6)), (7, ord(7))]
        );
        assert!(t.is_strictly_monotone());
    }

    #[test]
    fn consistent_insert_removes_nothing() {
        let mut t = table(&[(0, 0), (10, 100)]);
        let g = t.generation();
        let s = t.insert_point(5, ord(50)).unwrap();
        assert!(s.removed.is_empty() && s.evicted.is_empty());
        assert_eq!(t.generation(), g + 1);
    }

    #[test]
    fn equal_kappa_counts_as_conflict() {
        let mut t = table(&[(0, 0), (3, 30), (10, 100)]);
        let s = t.insert_point(6, ord(30)).unwrap();
        assert_eq!(s.removed, vec![(3, ord(30))]);
        assert_eq!(t.points().len(), 3);
    }

    #[test]
    fn insert_range_and_endpoint_errors() {
        let mut t = table(&[(0, 10), (10, 100)]);
        assert!(matches!(t.insert_point(0, ord(20)), Err(InterpolationError::RangeError { .. })));
        assert!(matches!(t.insert_point(10, ord(20)), Err(InterpolationError::RangeError { .. })));
        assert!(matches!(
            t.insert_point(5, ord(100)),
            Err(InterpolationError::StaleEndpointConflict { lambda: 5 })
        ));
        assert!(matches!(
            t.insert_point(5, ord(10)),
            Err(InterpolationError::StaleEndpointConflict { .. })
        ));
    }

    #[test]
    fn lambda_max_changes() {
        let mut t = table(&[(0, 0), (500, 5000), (1000, 10_000)]);
        t.set_lambda_max(42);
        assert_eq!(t.points(), &[(0, ord(0)), (42, ord(10_000))]);
        let g = t.generation();
        t.set_lambda_max(42);
        assert_eq!(t.generation(), g);
        t.set_lambda_max(1_000_000);
        assert_eq!(t.points(), &[(0, ord(0)), (1_000_000, ord(10_000))]);
    }

    #[test]
    fn gaps() {
        assert_eq!(table(&[(0, 0), (1000, 10_000)]).largest_gap(), (0, 1000));
        assert_eq!(table(&[(0, 0), (300, 10), (1000, 10_000)]).largest_gap(), (300, 1000));
        assert_eq!(table(&[(0, 0), (500, 10), (1000, 10_000)]).largest_gap(), (0, 500));
    }

    #[test]
    fn eviction_drops_most_redundant_point() {
        let mut t = InterpolationTable::with_capacity(ord(0), ord(1000), 100, 4).unwrap();
        t.insert_point(50, ord(900)).unwrap();
        t.insert_point(25, ord(450)).unwrap();
        // (25, 450) sits almost on the line between (0,0) and (50,900)
        let s = t.insert_point(75, ord(990)).unwrap();
        assert_eq!(s.evicted, vec![(25, ord(450))]);
        assert_eq!(t.len(), 4);
        assert!(t.is_strictly_monotone());
    }

    #[test]
    fn dump_lists_points() {
        let t = table(&[(0, 3), (5, 40), (9, 77)]);
        assert_eq!(t.dump(), "0 3\n5 40\n9 77\n");
    }

    #[test]
    fn lookups_are_logarithmic() {
        let mut per_k = Vec::new();
        for k in 4..12u32 {
            let n = 1u64 << k;
            let mut t = InterpolationTable::with_capacity(ord(0), ord(n * 10), n, usize::MAX).unwrap();
            for l in 1..n {
                t.insert_point(l, ord(l * 10)).unwrap();
            }
            let before = t.probe_count();
            let queries = 256;
            for i in 0..queries {
                t.kappa_for(i * n / queries);
                t.lambda_for(&ord(i * n * 10 / queries + 3));
            }
            per_k.push((t.probe_count() - before) as f64 / (2 * queries) as f64);
        }
        for (i, probes) in per_k.iter().enumerate() {
            let k = (i + 4) as f64;
            assert!(*probes <= k + 2.0, "k={k}: {probes} probes");
        }
    }

    proptest! {
        #[test]
        fn random_inserts_stay_monotone(ops in proptest::collection::vec((1u64..999, 1u64..99_999), 1..300),
                                        cap in 3usize..40) {
            let mut t = InterpolationTable::with_capacity(ord(0), ord(100_000), 1000, cap).unwrap();
            for (l, k) in ops {
                t.insert_point(l, ord(k)).unwrap();
                prop_assert!(t.is_strictly_monotone());
                prop_assert!(t.len() <= cap);
                prop_assert_eq!(t.points()[0].0, 0);
                prop_assert_eq!(t.lambda_max(), 1000);
                prop_assert!(t.points().iter().any(|p| p == &(l, ord(k))) || t.len() == cap);
            }
        }

        #[test]
        fn dense_round_trip(gaps in proptest::collection::vec(1u64..1000, 3..400), every in 1usize..20) {
            let keys: Vec<u64> = gaps.iter().scan(0u64, |acc, g| { *acc += g; Some(*acc) }).collect();
            let n = keys.len() as u64 - 1;
            let mut t = InterpolationTable::with_capacity(ord(keys[0]), ord(keys[n as usize]), n, usize::MAX).unwrap();
            for l in (every..n as usize).step_by(every) {
                t.insert_point(l as u64, ord(keys[l])).unwrap();
            }
            for l in 0..=n {
                let back = t.lambda_for(&t.kappa_for(l));
                prop_assert!(back.abs_diff(l) <= 1, "λ={} came back as {}", l, back);
            }
        }
    }
}
