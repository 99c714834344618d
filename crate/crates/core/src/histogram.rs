//! Exact stream histograms, probability vectors, and set partitions.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use num_traits::{CheckedAdd, CheckedMul, PrimInt};
use thiserror::Error;

use crate::hashing::ItemId;
use crate::scalar::Real;

/// Largest `n` accepted by [`stirling`]; every `S(26, k)` fits comfortably in `u128`.
pub const STIRLING_MAX_N: usize = 26;

/// Default cap on the number of partitions an exact enumeration may visit.
pub const DEFAULT_BUDGET: u128 = 10_000_000;

#[derive(Debug, Error)]
pub enum HistogramError {
    #[error("stream is empty; no probability model exists")]
    EmptyStream,
    #[error("negative or non-finite weight {value} at index {index}")]
    InvalidWeight { index: usize, value: f64 },
    #[error("partition covers {partition} items but the vector has {vector}")]
    UniverseMismatch { partition: usize, vector: usize },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("need 1 <= k <= n, got n = {n}, k = {k}")]
    InvalidCellCount { n: usize, k: usize },
    #[error("S({n}, {k}) overflows the integer type")]
    StirlingOverflow { n: usize, k: usize },
    #[error("S({n}, {k}) = {count} partitions exceeds the budget of {budget}")]
    BudgetExceeded { n: usize, k: usize, count: String, budget: u128 },
    #[error("histogram file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-item occurrence counts of one stream. Absent items have count zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmpiricalDistribution {
    counts: HashMap<ItemId, u64>,
    total: u64,
}

impl EmpiricalDistribution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_stream<I: IntoIterator<Item = ItemId>>(items: I) -> Self {
        let mut d = Self::new();
        for item in items {
            d.push(item);
        }
        d
    }

    #[inline]
    pub fn push(&mut self, item: ItemId) {
        *self.counts.entry(item).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn count(&self, item: ItemId) -> u64 {
        self.counts.get(&item).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &HashMap<ItemId, u64> {
        &self.counts
    }

    /// Stream length `m`.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.values().copied().max().unwrap_or(0)
    }

    /// Items with nonzero count, ascending.
    pub fn support(&self) -> Vec<ItemId> {
        let mut s: Vec<ItemId> = self.counts.keys().copied().collect();
        s.sort_unstable();
        s
    }

    /// Sorted union of both supports.
    pub fn union_support(&self, other: &Self) -> Vec<ItemId> {
        let mut s: Vec<ItemId> = self.counts.keys().chain(other.counts.keys()).copied().collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Counts sorted in decreasing order, i.e. the rank-frequency curve.
    pub fn rank_frequencies(&self) -> Vec<u64> {
        let mut f: Vec<u64> = self.counts.values().copied().collect();
        f.sort_unstable_by(|a, b| b.cmp(a));
        f
    }

    /// `x_i / m` over `universe`, in the given order; items missing from the stream get 0.
    pub fn normalize<T: Real>(&self, universe: &[ItemId]) -> Result<ProbabilityVector<T>, HistogramError> {
        if self.total == 0 {
            return Err(HistogramError::EmptyStream);
        }
        let counts: Vec<u64> = universe.iter().map(|&i| self.count(i)).collect();
        Ok(ProbabilityVector::from_counts(&counts, self.total))
    }

    /// CSV dump: a `# total=m` line, an `item,count` header, rows sorted by item.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), HistogramError> {
        writeln!(out, "# total={}", self.total)?;
        writeln!(out, "item,count")?;
        for item in self.support() {
            writeln!(out, "{},{}", item, self.counts[&item])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, HistogramError> {
        let mut declared = None;
        let mut d = Self::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("total=") {
                    declared = Some(v.trim().parse::<u64>().map_err(|e| HistogramError::Format(format!("total: {e}")))?);
                }
                continue;
            }
            if line == "item,count" {
                continue;
            }
            let (item, count) = line
                .split_once(',')
                .ok_or_else(|| HistogramError::Format(format!("line {}: expected `item,count`", lineno + 1)))?;
            let parse = |s: &str| s.trim().parse::<u64>().map_err(|e| HistogramError::Format(format!("line {}: {e}", lineno + 1)));
            let (item, count) = (parse(item)?, parse(count)?);
            if count == 0 {
                return Err(HistogramError::Format(format!("line {}: zero count", lineno + 1)));
            }
            if d.counts.insert(item, count).is_some() {
                return Err(HistogramError::Format(format!("line {}: duplicate item {item}", lineno + 1)));
            }
            d.total += count;
        }
        match declared {
            Some(m) if m != d.total => Err(HistogramError::Format(format!("header total {m} != sum of counts {}", d.total))),
            None => Err(HistogramError::Format("missing `# total=` header".into())),
            _ => Ok(d),
        }
    }
}

/// Dense nonnegative weights over an ordered universe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector<T> {
    weights: Vec<T>,
    normalized: bool,
}

impl<T: Real> ProbabilityVector<T> {
    pub fn new(weights: Vec<T>) -> Result<Self, HistogramError> {
        if let Some((index, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= T::zero())) {
            return Err(HistogramError::InvalidWeight { index, value: w.to_f64().unwrap_or(f64::NAN) });
        }
        let tol = T::normalization_tolerance(weights.len());
        let sum: T = weights.iter().copied().sum();
        let normalized = (sum - T::one()).abs() <= tol;
        Ok(Self { weights, normalized })
    }

    /// Divides integer counts by `total`; marked normalized when `total` is their sum.
    pub fn from_counts(counts: &[u64], total: u64) -> Self {
        let m = T::lit(total as f64);
        let weights = counts.iter().map(|&c| T::lit(c as f64) / m).collect();
        let normalized = total > 0 && counts.iter().sum::<u64>() == total;
        Self { weights, normalized }
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn sum(&self) -> T {
        self.weights.iter().copied().sum()
    }

    /// Adds `alpha` to every entry and renormalizes. `alpha = 0` returns a copy.
    pub fn smoothed(&self, alpha: T) -> Self {
        if alpha == T::zero() {
            return self.clone();
        }
        let shifted: Vec<T> = self.weights.iter().map(|&w| w + alpha).collect();
        let s: T = shifted.iter().copied().sum();
        Self { weights: shifted.into_iter().map(|w| w / s).collect(), normalized: true }
    }

    /// Convex combination `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, other: &Self, lambda: T) -> Result<Self, HistogramError> {
        if self.len() != other.len() {
            return Err(HistogramError::UniverseMismatch { partition: other.len(), vector: self.len() });
        }
        let w = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(&a, &b)| lambda * a + (T::one() - lambda) * b)
            .collect();
        Self::new(w)
    }

    /// Cell sums of this vector under `partition`.
    pub fn aggregate(&self, partition: &Partition) -> Result<Self, HistogramError> {
        if partition.universe_len() != self.len() {
            return Err(HistogramError::UniverseMismatch { partition: partition.universe_len(), vector: self.len() });
        }
        let mut out = vec![T::zero(); partition.len()];
        aggregate_into(&self.weights, partition.labels(), &mut out);
        Ok(Self { weights: out, normalized: self.normalized })
    }
}

#[inline]
pub(crate) fn aggregate_into<T: Real>(weights: &[T], labels: &[usize], out: &mut [T]) {
    out.iter_mut().for_each(|o| *o = T::zero());
    for (&w, &l) in weights.iter().zip(labels) {
        out[l] = out[l] + w;
    }
}

/// A split of the positions `0..n` into nonempty, disjoint cells.
///
/// Stored as a restricted growth string: `labels[i]` is the cell of position
/// `i`, and cells are numbered in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Canonicalizes an arbitrary cell assignment (any label values) into a partition.
    pub fn from_assignment<L: Copy + Eq + std::hash::Hash>(assignment: &[L]) -> Self {
        let mut ids: HashMap<L, usize> = HashMap::new();
        let labels = assignment
            .iter()
            .map(|l| {
                let next = ids.len();
                *ids.entry(*l).or_insert(next)
            })
            .collect();
        Self { labels, k: ids.len() }
    }

    pub fn from_cells(cells: &[Vec<usize>], n: usize) -> Result<Self, HistogramError> {
        let mut owner = vec![usize::MAX; n];
        for (c, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(HistogramError::InvalidPartition(format!("cell {c} is empty")));
            }
            for &i in cell {
                if i >= n {
                    return Err(HistogramError::InvalidPartition(format!("position {i} outside universe of {n}")));
                }
                if owner[i] != usize::MAX {
                    return Err(HistogramError::InvalidPartition(format!("position {i} in two cells")));
                }
                owner[i] = c;
            }
        }
        if let Some(i) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(HistogramError::InvalidPartition(format!("position {i} not covered")));
        }
        Ok(Self::from_assignment(&owner))
    }

    /// Every position in its own cell.
    pub fn discrete(n: usize) -> Self {
        Self { labels: (0..n).collect(), k: n }
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn universe_len(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn cells(&self) -> Vec<Vec<usize>> {
        let mut cells = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            cells[l].push(i);
        }
        cells
    }

    /// True when every cell of `finer` lies inside one cell of `self`.
    pub fn is_coarsening_of(&self, finer: &Partition) -> bool {
        if self.universe_len() != finer.universe_len() {
            return false;
        }
        let mut image = vec![usize::MAX; finer.len()];
        for (&f, &c) in finer.labels.iter().zip(&self.labels) {
            if image[f] == usize::MAX {
                image[f] = c;
            } else if image[f] != c {
                return false;
            }
        }
        true
    }
}

impl std::fmt::Display for Partition {
    /// One-based cell listing, e.g. `{1,3}|{2}`.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let cells: Vec<String> = self
            .cells()
            .iter()
            .map(|c| format!("{{{}}}", c.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        f.write_str(&cells.join("|"))
    }
}

/// Lexicographic walk over restricted growth strings of length `n` with exactly `k` distinct labels.
///
/// The cursor form avoids allocating a [`Partition`] per step; use
/// [`enumerate_partitions`] for an owning iterator.
#[derive(Debug, Clone)]
pub struct RgsCursor {
    labels: Vec<usize>,
    prefix_max: Vec<usize>,
    k: usize,
    started: bool,
    done: bool,
}

impl RgsCursor {
    pub fn new(n: usize, k: usize) -> Result<Self, HistogramError> {
        if k == 0 || k > n {
            return Err(HistogramError::InvalidCellCount { n, k });
        }
        // Smallest string: n - k + 1 zeros followed by 1, 2, ..., k - 1.
        let labels: Vec<usize> = (0..n).map(|i| (i + k).saturating_sub(n)).collect();
        let mut cursor = Self { prefix_max: vec![0; n], labels, k, started: false, done: false };
        cursor.refresh_prefix_max(0);
        Ok(cursor)
    }

    fn refresh_prefix_max(&mut self, from: usize) {
        let mut m = if from == 0 { 0 } else { self.prefix_max[from - 1] };
        for i in from..self.labels.len() {
            m = m.max(self.labels[i]);
            self.prefix_max[i] = m;
        }
    }

    /// Moves to the next string and returns it, or `None` once exhausted.
    pub fn advance(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.labels);
        }
        let n = self.labels.len();
        for i in (1..n).rev() {
            let cur = self.labels[i];
            let before = self.prefix_max[i - 1];
            if cur >= self.k - 1 || cur > before {
                continue;
            }
            let new_max = before.max(cur + 1);
            let remaining = n - 1 - i;
            let needed = self.k - 1 - new_max;
            if needed > remaining {
                continue;
            }
            self.labels[i] = cur + 1;
            let zeros = remaining - needed;
            for j in 0..remaining {
                self.labels[i + 1 + j] = if j < zeros { 0 } else { new_max + 1 + (j - zeros) };
            }
            self.refresh_prefix_max(i);
            return Some(&self.labels);
        }
        self.done = true;
        None
    }
}

/// Owning iterator over `P_k([n])`.
#[derive(Debug, Clone)]
pub struct Partitions {
    cursor: RgsCursor,
}

impl Iterator for Partitions {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        let k = self.cursor.k;
        self.cursor.advance().map(|l| Partition { labels: l.to_vec(), k })
    }
}

/// Every partition of `n` positions into exactly `k` nonempty cells, each once,
/// in lexicographic restricted-growth order.
pub fn enumerate_partitions(n: usize, k: usize, budget: u128) -> Result<Partitions, HistogramError> {
    check_budget(n, k, budget)?;
    Ok(Partitions { cursor: RgsCursor::new(n, k)? })
}

/// Returns `S(n, k)` if it fits within `budget`.
pub fn check_budget(n: usize, k: usize, budget: u128) -> Result<u128, HistogramError> {
    if k == 0 || k > n {
        return Err(HistogramError::InvalidCellCount { n, k });
    }
    match stirling_in::<u128>(n, k) {
        Ok(count) if count <= budget => Ok(count),
        Ok(count) => Err(HistogramError::BudgetExceeded { n, k, count: count.to_string(), budget }),
        Err(_) => Err(HistogramError::BudgetExceeded { n, k, count: "overflow".into(), budget }),
    }
}

/// Stirling number of the second kind for `n <= 26`.
pub fn stirling(n: usize, k: usize) -> Result<u128, HistogramError> {
    if n > STIRLING_MAX_N {
        return Err(HistogramError::StirlingOverflow { n, k });
    }
    stirling_in::<u128>(n, k)
}

/// `S(n, k)` via `S(n, k) = k S(n-1, k) + S(n-1, k-1)` in any primitive integer type,
/// failing on overflow.
pub fn stirling_in<I: PrimInt + CheckedMul + CheckedAdd>(n: usize, k: usize) -> Result<I, HistogramError> {
    if k > n {
        return Ok(I::zero());
    }
    let overflow = || HistogramError::StirlingOverflow { n, k };
    // row[j] holds S(i, j) for the current i.
    let mut row = vec![I::zero(); k + 1];
    row[0] = I::one();
    for i in 1..=n {
        for j in (1..=k.min(i)).rev() {
            let jj = I::from(j).ok_or_else(overflow)?;
            row[j] = jj.checked_mul(&row[j]).and_then(|v| v.checked_add(&row[j - 1])).ok_or_else(overflow)?;
        }
        row[0] = I::zero();
    }
    Ok(row[k])
}
