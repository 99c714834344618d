//! The star-metric: a divergence maximized over `k`-cell partitions.
//!
//! [`exact_star_metric`] enumerates every partition of the universe into `k`
//! cells; [`sketch_star_metric`] maximizes only over the `t` partitions
//! induced by a sketch's hash functions. For information-monotone divergences
//! the sketch estimate never exceeds the exact value, which never exceeds the
//! divergence of the full distributions.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::divergence::{BregmanGenerator, DivergenceError, DivergenceSpec};
use crate::histogram::{self, aggregate_into, EmpiricalDistribution, HistogramError, Partition, ProbabilityVector, RgsCursor};
use crate::scalar::Real;
use crate::sketch::{SketchError, SketchMatrix};

/// Partition counts at or above this are scored in parallel batches.
const PARALLEL_THRESHOLD: u128 = 50_000;
const BATCH: usize = 16_384;

#[derive(Debug, Error)]
pub enum StarError {
    #[error("cell count k must be at least 1")]
    ZeroCells,
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Histogram(#[from] HistogramError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Approximate,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Approximate => "sketch",
        })
    }
}

/// Where the maximum was attained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Argmax {
    Partition(Partition),
    Row(usize),
}

impl fmt::Display for Argmax {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Argmax::Partition(p) => write!(f, "{p}"),
            Argmax::Row(r) => write!(f, "row{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarMetricResult<T> {
    pub value: T,
    pub argmax: Argmax,
    pub mode: Mode,
    pub k: usize,
    pub evaluated_partitions: u128,
}

/// Maximum of `phi` over all partitions of the universe into exactly `k` cells.
///
/// For `k > n` no such partition exists and `phi(p || q)` is returned. Ties go
/// to the first maximizer in restricted-growth order, in both the serial and
/// the parallel path.
pub fn exact_star_metric<T: Real>(
    phi: &DivergenceSpec<T>,
    p: &ProbabilityVector<T>,
    q: &ProbabilityVector<T>,
    k: usize,
    budget: u128,
) -> Result<StarMetricResult<T>, StarError> {
    if k == 0 {
        return Err(StarError::ZeroCells);
    }
    let n = p.len();
    // Validates lengths and normalization once, and doubles as the k > n answer.
    let full = phi.evaluate(p, q)?;
    if k > n {
        return Ok(StarMetricResult { value: full, argmax: Argmax::Partition(Partition::discrete(n)), mode: Mode::Exact, k, evaluated_partitions: 1 });
    }
    let count = histogram::check_budget(n, k, budget)?;
    let (value, labels) = if count >= PARALLEL_THRESHOLD {
        max_parallel(phi, p.weights(), q.weights(), n, k)?
    } else {
        max_serial(phi, p.weights(), q.weights(), n, k)?
    };
    Ok(StarMetricResult {
        value,
        argmax: Argmax::Partition(Partition::from_assignment(&labels)),
        mode: Mode::Exact,
        k,
        evaluated_partitions: count,
    })
}

fn max_serial<T: Real>(phi: &DivergenceSpec<T>, p: &[T], q: &[T], n: usize, k: usize) -> Result<(T, Vec<usize>), StarError> {
    let mut cursor = RgsCursor::new(n, k)?;
    let (mut a, mut b) = (vec![T::zero(); k], vec![T::zero(); k]);
    let mut best: Option<(T, Vec<usize>)> = None;
    while let Some(labels) = cursor.advance() {
        aggregate_into(p, labels, &mut a);
        aggregate_into(q, labels, &mut b);
        let v = phi.evaluate_slices(&a, &b)?;
        match &mut best {
            Some((bv, bl)) => {
                if v > *bv {
                    *bv = v;
                    bl.copy_from_slice(labels);
                }
            }
            None => best = Some((v, labels.to_vec())),
        }
    }
    Ok(best.expect("P_k([n]) is nonempty for 1 <= k <= n"))
}

fn max_parallel<T: Real>(phi: &DivergenceSpec<T>, p: &[T], q: &[T], n: usize, k: usize) -> Result<(T, Vec<usize>), StarError> {
    let mut cursor = RgsCursor::new(n, k)?;
    let mut best: Option<(T, Vec<usize>)> = None;
    let mut batch: Vec<usize> = Vec::with_capacity(BATCH * n);
    loop {
        batch.clear();
        while batch.len() < BATCH * n {
            match cursor.advance() {
                Some(l) => batch.extend_from_slice(l),
                None => break,
            }
        }
        if batch.is_empty() {
            break;
        }
        // (value, index in batch); larger value wins, then smaller index.
        let local = batch
            .par_chunks(n)
            .enumerate()
            .map_init(
                || (vec![T::zero(); k], vec![T::zero(); k]),
                |(a, b), (idx, labels)| {
                    aggregate_into(p, labels, a);
                    aggregate_into(q, labels, b);
                    phi.evaluate_slices(a, b).map(|v| (v, idx))
                },
            )
            .try_reduce(
                || (T::neg_infinity(), usize::MAX),
                |x, y| Ok(if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x }),
            )?;
        if local.1 == usize::MAX {
            continue;
        }
        let labels = &batch[local.1 * n..(local.1 + 1) * n];
        match &best {
            Some((bv, _)) if !(local.0 > *bv) => {}
            _ => best = Some((local.0, labels.to_vec())),
        }
    }
    Ok(best.expect("P_k([n]) is nonempty for 1 <= k <= n"))
}

/// Maximum of `phi` over the paired rows of two sketches built with the same hash family.
pub fn sketch_star_metric<T: Real>(
    phi: &DivergenceSpec<T>,
    a: &SketchMatrix,
    b: &SketchMatrix,
) -> Result<StarMetricResult<T>, StarError> {
    sketch_star_metric_smoothed(phi, a, b, T::zero())
}

/// [`sketch_star_metric`] with additive smoothing `alpha` applied to every row before `phi`.
pub fn sketch_star_metric_smoothed<T: Real>(
    phi: &DivergenceSpec<T>,
    a: &SketchMatrix,
    b: &SketchMatrix,
    alpha: T,
) -> Result<StarMetricResult<T>, StarError> {
    a.check_compatible(b)?;
    if a.total() == 0 || b.total() == 0 {
        return Err(SketchError::Empty.into());
    }
    let mut best: Option<(T, usize)> = None;
    for i in 0..a.t() {
        let p = a.row_distribution::<T>(i)?.smoothed(alpha);
        let q = b.row_distribution::<T>(i)?.smoothed(alpha);
        let v = phi.evaluate(&p, &q)?;
        if best.is_none_or(|(bv, _)| v > bv) {
            best = Some((v, i));
        }
    }
    let (value, row) = best.expect("families have t >= 1");
    Ok(StarMetricResult { value, argmax: Argmax::Row(row), mode: Mode::Approximate, k: a.k(), evaluated_partitions: a.t() as u128 })
}

/// `phi` between the full empirical distributions over the union of their supports.
pub fn reference_distance<T: Real>(
    phi: &DivergenceSpec<T>,
    s1: &EmpiricalDistribution,
    s2: &EmpiricalDistribution,
) -> Result<T, StarError> {
    reference_distance_smoothed(phi, s1, s2, T::zero())
}

pub fn reference_distance_smoothed<T: Real>(
    phi: &DivergenceSpec<T>,
    s1: &EmpiricalDistribution,
    s2: &EmpiricalDistribution,
    alpha: T,
) -> Result<T, StarError> {
    let universe = s1.union_support(s2);
    let p = s1.normalize::<T>(&universe)?.smoothed(alpha);
    let q = s2.normalize::<T>(&universe)?.smoothed(alpha);
    Ok(phi.evaluate(&p, &q)?)
}

/// The distribution with `p`'s cell masses under `partition` and `r`'s shape inside each cell.
///
/// For Kullback-Leibler this is the projection that makes
/// `KL(p || r) = KL(p || q) + KL(q || r)` hold exactly.
pub fn cell_projection<T: Real>(
    p: &ProbabilityVector<T>,
    r: &ProbabilityVector<T>,
    partition: &Partition,
) -> Result<ProbabilityVector<T>, StarError> {
    let pa = p.aggregate(partition)?;
    let ra = r.aggregate(partition)?;
    let w = r
        .weights()
        .iter()
        .zip(partition.labels())
        .map(|(&ri, &c)| if ra.weights()[c] > T::zero() { pa.weights()[c] * ri / ra.weights()[c] } else { T::zero() })
        .collect();
    Ok(ProbabilityVector::new(w)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub status: CheckStatus,
    pub trials: usize,
    pub violations: usize,
    pub witness: Option<String>,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match self.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        write!(f, "{status} {:<22} trials={:<5} violations={}", self.name, self.trials, self.violations)?;
        if let Some(w) = &self.witness {
            write!(f, " witness: {w}")?;
        }
        Ok(())
    }
}

/// Per-property results of [`preservation_suite`].
#[derive(Debug, Clone)]
pub struct PreservationReport {
    pub divergence: String,
    pub n: usize,
    pub k: usize,
    pub checks: Vec<CheckOutcome>,
}

impl PreservationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for PreservationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} (n={}, k={})", self.divergence, self.n, self.k)?;
        for c in &self.checks {
            writeln!(f, "  {c}")?;
        }
        Ok(())
    }
}

/// Draws a strictly positive probability vector from the flat Dirichlet distribution.
pub fn random_distribution<T: Real, R: Rng>(rng: &mut R, n: usize) -> ProbabilityVector<T> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln() + 1e-12).collect();
    let s: f64 = e.iter().sum();
    ProbabilityVector::new(e.into_iter().map(|x| T::lit(x / s)).collect()).expect("positive weights")
}

/// Random partition of `0..n` into exactly `c` nonempty cells.
pub fn random_partition<R: Rng>(rng: &mut R, n: usize, c: usize) -> Partition {
    assert!(1 <= c && c <= n);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut labels = vec![0usize; n];
    for (j, &pos) in order.iter().enumerate() {
        labels[pos] = if j < c { j } else { rng.gen_range(0..c) };
    }
    Partition::from_assignment(&labels)
}

/// Checks, flag by flag, that the exact star-metric inherits the properties of `phi`:
/// non-negativity, identity of indiscernibles (both directions), symmetry,
/// triangle inequality, monotonicity under coarsening (for `c >= k` and `c < k`),
/// growth in `k`, convexity, and the `<=` half of Bregman linearity.
pub fn preservation_suite<T: Real>(
    phi: &DivergenceSpec<T>,
    n: usize,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<PreservationReport, StarError> {
    if k == 0 {
        return Err(StarError::ZeroCells);
    }
    if k <= n {
        histogram::check_budget(n, k, histogram::DEFAULT_BUDGET)?;
    }
    let budget = histogram::DEFAULT_BUDGET;
    let tol = T::lit(1e-9).max(T::epsilon() * T::lit(1e3));
    let caps = phi.capabilities();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let star = |p: &ProbabilityVector<T>, q: &ProbabilityVector<T>, k: usize| exact_star_metric(phi, p, q, k, budget).map(|r| r.value);
    let mut checks = Vec::new();

    let mut run = |name: &'static str,
                   enabled: bool,
                   rng: &mut ChaCha8Rng,
                   body: &mut dyn FnMut(&mut ChaCha8Rng) -> Result<Option<String>, StarError>|
     -> Result<(), StarError> {
        if !enabled {
            checks.push(CheckOutcome { name, status: CheckStatus::Skipped, trials: 0, violations: 0, witness: None });
            return Ok(());
        }
        let mut violations = 0;
        let mut witness = None;
        for _ in 0..trials {
            if let Some(w) = body(rng)? {
                violations += 1;
                witness.get_or_insert(w);
            }
        }
        let status = if violations == 0 { CheckStatus::Pass } else { CheckStatus::Fail };
        checks.push(CheckOutcome { name, status, trials, violations, witness });
        Ok(())
    };

    run("non_negativity", caps.nonneg, &mut rng, &mut |rng| {
        let (p, q) = (random_distribution(rng, n), random_distribution(rng, n));
        let v = star(&p, &q, k)?;
        Ok((v < -tol).then(|| format!("value {v}")))
    })?;
    run("identity_self", caps.identity, &mut rng, &mut |rng| {
        let p = random_distribution(rng, n);
        let v = star(&p, &p, k)?;
        Ok((v.abs() > tol).then(|| format!("phi(p, p) = {v}")))
    })?;
    // With a single cell every pair aggregates to (1), so the converse needs k >= 2 or n = 1.
    run("identity_distinct", caps.identity && (k >= 2 || n == 1), &mut rng, &mut |rng| {
        let (p, q) = (random_distribution(rng, n), random_distribution(rng, n));
        if p == q {
            return Ok(None);
        }
        let v = star(&p, &q, k)?;
        Ok((!(v > T::zero())).then(|| format!("phi(p, q) = {v} for p != q")))
    })?;
    run("symmetry", caps.symmetric, &mut rng, &mut |rng| {
        let (p, q) = (random_distribution(rng, n), random_distribution(rng, n));
        let (a, b) = (star(&p, &q, k)?, star(&q, &p, k)?);
        Ok(((a - b).abs() > tol).then(|| format!("{a} vs {b}")))
    })?;
    run("triangle", caps.triangle, &mut rng, &mut |rng| {
        let (p, q, r) = (random_distribution(rng, n), random_distribution(rng, n), random_distribution(rng, n));
        let (pq, pr, rq) = (star(&p, &q, k)?, star(&p, &r, k)?, star(&r, &q, k)?);
        Ok((pq > pr + rq + tol).then(|| format!("{pq} > {pr} + {rq}")))
    })?;
    run("monotonicity_c_ge_k", caps.monotone && k <= n, &mut rng, &mut |rng| {
        let c = rng.gen_range(k..=n);
        coarsening_violation(rng, &star, n, c, k, tol)
    })?;
    run("monotonicity_c_lt_k", caps.monotone && k >= 2 && n >= 2, &mut rng, &mut |rng| {
        let c = rng.gen_range(1..k.min(n + 1));
        coarsening_violation(rng, &star, n, c, k, tol)
    })?;
    run("monotone_in_k", caps.monotone, &mut rng, &mut |rng| {
        let (p, q) = (random_distribution(rng, n), random_distribution(rng, n));
        let here = star(&p, &q, k)?;
        let full = phi.evaluate(&p, &q)?;
        if here > full + tol {
            return Ok(Some(format!("k={k}: {here} > full {full}")));
        }
        if k < n {
            let next = star(&p, &q, k + 1)?;
            if here > next + tol {
                return Ok(Some(format!("k={k}: {here} > k+1: {next}")));
            }
        }
        Ok(None)
    })?;
    run("convexity", caps.f_div, &mut rng, &mut |rng| {
        let (p1, p2) = (random_distribution(rng, n), random_distribution(rng, n));
        let (q1, q2) = (random_distribution(rng, n), random_distribution(rng, n));
        let (d1, d2) = (star(&p1, &q1, k)?, star(&p2, &q2, k)?);
        for lambda in [0.0, 0.25, 0.5, 0.75, 1.0].map(T::lit) {
            let lhs = star(&p1.mix(&p2, lambda)?, &q1.mix(&q2, lambda)?, k)?;
            let rhs = lambda * d1 + (T::one() - lambda) * d2;
            if lhs > rhs + tol {
                return Ok(Some(format!("lambda={lambda}: {lhs} > {rhs}")));
            }
        }
        Ok(None)
    })?;
    let f1 = phi.bregman_generator().cloned();
    let f2 = BregmanGenerator::<T>::squared();
    run("bregman_linearity_le", f1.is_some(), &mut rng, &mut |rng| {
        let f1 = f1.as_ref().expect("enabled only with a generator");
        let (p, q) = (random_distribution(rng, n), random_distribution(rng, n));
        let b1 = DivergenceSpec::from_bregman_generator(f1.clone());
        let b2 = DivergenceSpec::from_bregman_generator(f2.clone());
        let (s1, s2) = (exact_star_metric(&b1, &p, &q, k, budget)?.value, exact_star_metric(&b2, &p, &q, k, budget)?.value);
        for lambda in [0.0, 0.25, 0.5, 0.75, 1.0].map(T::lit) {
            let combined = DivergenceSpec::from_bregman_generator(f1.combine(&f2, lambda));
            let lhs = exact_star_metric(&combined, &p, &q, k, budget)?.value;
            if lhs > s1 + lambda * s2 + tol {
                return Ok(Some(format!("lambda={lambda}: {lhs} > {s1} + lambda*{s2}")));
            }
        }
        Ok(None)
    })?;

    let mut asymmetry = None;
    if !caps.symmetric {
        // Record an asymmetry witness so the skip is documented.
        let mut witness = None;
        for _ in 0..trials.max(1) {
            let (p, q) = (random_distribution::<T, _>(&mut rng, n), random_distribution::<T, _>(&mut rng, n));
            let (a, b) = (star(&p, &q, k)?, star(&q, &p, k)?);
            if (a - b).abs() > tol {
                witness = Some(format!("forward {a} vs reverse {b}"));
                break;
            }
        }
        asymmetry = witness;
    }
    if let Some(c) = checks.iter_mut().find(|c| c.name == "symmetry") {
        c.witness = asymmetry;
    }

    Ok(PreservationReport { divergence: phi.name().to_string(), n, k, checks })
}

fn coarsening_violation<T: Real>(
    rng: &mut ChaCha8Rng,
    star: &dyn Fn(&ProbabilityVector<T>, &ProbabilityVector<T>, usize) -> Result<T, StarError>,
    n: usize,
    c: usize,
    k: usize,
    tol: T,
) -> Result<Option<String>, StarError> {
    let (p, q) = (random_distribution(rng, n), random_distribution(rng, n));
    let mu = random_partition(rng, n, c);
    let coarse = star(&p.aggregate(&mu)?, &q.aggregate(&mu)?, k)?;
    let fine = star(&p, &q, k)?;
    Ok((coarse > fine + tol).then(|| format!("c={c}: coarse {coarse} > fine {fine} (mu = {mu})")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::DivergenceSpec;
    use crate::hashing::HashFamily;
    use crate::histogram::{enumerate_partitions, DEFAULT_BUDGET};

    fn pv(w: &[f64]) -> ProbabilityVector<f64> {
        ProbabilityVector::new(w.to_vec()).unwrap()
    }

    #[test]
    fn identity_gives_zero() {
        let p = pv(&[0.2, 0.3, 0.1, 0.4]);
        for phi in [DivergenceSpec::kl(), DivergenceSpec::js(), DivergenceSpec::hellinger(), DivergenceSpec::bhattacharyya()] {
            for k in 1..=5 {
                assert_eq!(exact_star_metric(&phi, &p, &p, k, DEFAULT_BUDGET).unwrap().value, 0.0);
            }
        }
    }

    #[test]
    fn kl_three_points_two_cells() {
        let (p, q) = (pv(&[0.5, 0.3, 0.2]), pv(&[0.2, 0.3, 0.5]));
        let phi = DivergenceSpec::kl();
        // Brute force over {{1,2},{3}}, {{1,3},{2}}, {{1},{2,3}}.
        let candidates = [
            [(0.8f64, 0.5f64), (0.2, 0.5)],
            [(0.7, 0.7), (0.3, 0.3)],
            [(0.5, 0.2), (0.5, 0.8)],
        ];
        let values: Vec<f64> = candidates.iter().map(|c| c.iter().map(|&(a, b)| a * (a / b).log2()).sum()).collect();
        let r = exact_star_metric(&phi, &p, &q, 2, DEFAULT_BUDGET).unwrap();
        let expect = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((r.value - expect).abs() < 1e-12);
        assert!((r.value - 0.321_928_094_887_362).abs() < 1e-12, "{}", r.value);
        assert_eq!(r.argmax.to_string(), "{1}|{2,3}");
        assert_eq!(r.evaluated_partitions, 3);
        assert_eq!(r.mode, Mode::Exact);
    }

    #[test]
    fn k_above_n_returns_full_divergence() {
        let (p, q) = (pv(&[0.5, 0.5]), pv(&[0.25, 0.75]));
        let phi = DivergenceSpec::js();
        let r = exact_star_metric(&phi, &p, &q, 3, DEFAULT_BUDGET).unwrap();
        assert_eq!(r.value, phi.evaluate(&p, &q).unwrap());
        assert_eq!(r.evaluated_partitions, 1);
        assert!(matches!(exact_star_metric(&phi, &p, &q, 0, DEFAULT_BUDGET), Err(StarError::ZeroCells)));
    }

    #[test]
    fn k_equal_n_matches_full_divergence_for_monotone_phi() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for phi in [DivergenceSpec::kl(), DivergenceSpec::js(), DivergenceSpec::hellinger()] {
            for n in 2..=7 {
                let (p, q) = (random_distribution::<f64, _>(&mut rng, n), random_distribution(&mut rng, n));
                let r = exact_star_metric(&phi, &p, &q, n, DEFAULT_BUDGET).unwrap();
                assert_eq!(r.value, phi.evaluate(&p, &q).unwrap());
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let p = ProbabilityVector::new(vec![1.0 / 20.0; 20]).unwrap();
        let r = exact_star_metric(&DivergenceSpec::kl(), &p, &p, 6, 1000);
        assert!(matches!(r, Err(StarError::Histogram(HistogramError::BudgetExceeded { .. }))));
    }

    #[test]
    fn parallel_path_agrees_with_serial() {
        // S(11, 4) = 145750 exceeds the parallel threshold.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (p, q) = (random_distribution::<f64, _>(&mut rng, 11), random_distribution(&mut rng, 11));
        for phi in [DivergenceSpec::kl(), DivergenceSpec::hellinger()] {
            let par = exact_star_metric(&phi, &p, &q, 4, DEFAULT_BUDGET).unwrap();
            let (v, labels) = max_serial(&phi, p.weights(), q.weights(), 11, 4).unwrap();
            assert_eq!(par.value, v);
            assert_eq!(par.argmax, Argmax::Partition(Partition::from_assignment(&labels)));
            assert_eq!(par.evaluated_partitions, 145_750);
        }
        // Ties: identical inputs make every partition score 0; the first one must win.
        let par = exact_star_metric(&DivergenceSpec::js(), &p, &p, 4, DEFAULT_BUDGET).unwrap();
        let first = enumerate_partitions(11, 4, DEFAULT_BUDGET).unwrap().next().unwrap();
        assert_eq!(par.argmax, Argmax::Partition(first));
    }

    #[test]
    fn sketch_examples() {
        let fam = HashFamily::new(3, 8, 100, 1).unwrap();
        let stream: Vec<u64> = (0..500).map(|i| i % 37).collect();
        let a = SketchMatrix::from_stream(fam.clone(), stream.iter().copied()).unwrap();
        let b = SketchMatrix::from_stream(fam.clone(), stream.iter().copied()).unwrap();
        let r = sketch_star_metric(&DivergenceSpec::<f64>::js(), &a, &b).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.argmax, Argmax::Row(0));
        assert_eq!(r.evaluated_partitions, 3);

        let one = HashFamily::new(1, 1, 100, 1).unwrap();
        let a = SketchMatrix::from_stream(one.clone(), [1, 2, 3]).unwrap();
        let b = SketchMatrix::from_stream(one.clone(), [9]).unwrap();
        for phi in [DivergenceSpec::<f64>::kl(), DivergenceSpec::js(), DivergenceSpec::bhattacharyya(), DivergenceSpec::hellinger()] {
            assert_eq!(sketch_star_metric(&phi, &a, &b).unwrap().value, 0.0);
        }

        let empty = SketchMatrix::new(fam.clone());
        let full = SketchMatrix::from_stream(fam, [1]).unwrap();
        assert!(matches!(sketch_star_metric(&DivergenceSpec::<f64>::kl(), &full, &empty), Err(StarError::Sketch(SketchError::Empty))));
        let other = SketchMatrix::from_stream(HashFamily::new(3, 8, 100, 2).unwrap(), [1]).unwrap();
        assert!(matches!(
            sketch_star_metric(&DivergenceSpec::<f64>::kl(), &full, &other),
            Err(StarError::Sketch(SketchError::FamilyMismatch { .. }))
        ));
    }

    #[test]
    fn sketch_infinite_rows_pick_row_zero() {
        let fam = HashFamily::new(4, 64, 1000, 3).unwrap();
        let a = SketchMatrix::from_stream(fam.clone(), [1, 2, 3]).unwrap();
        let b = SketchMatrix::from_stream(fam, [500]).unwrap();
        let r = sketch_star_metric(&DivergenceSpec::<f64>::kl(), &a, &b).unwrap();
        assert_eq!(r.value, f64::INFINITY);
        assert_eq!(r.argmax, Argmax::Row(0));
    }

    #[test]
    fn reference_examples() {
        let s = EmpiricalDistribution::from_stream([1, 2, 2, 3]);
        assert_eq!(reference_distance(&DivergenceSpec::<f64>::kl(), &s, &s).unwrap(), 0.0);
        let t = EmpiricalDistribution::from_stream([7, 8]);
        assert_eq!(reference_distance(&DivergenceSpec::<f64>::js(), &s, &t).unwrap(), 1.0);
        assert!(reference_distance(&DivergenceSpec::<f64>::js(), &s, &EmpiricalDistribution::new()).is_err());
    }

    #[test]
    fn suite_flags_drive_checks() {
        let r = preservation_suite(&DivergenceSpec::<f64>::kl(), 6, 3, 20, 1).unwrap();
        assert!(r.passed(), "{r}");
        let sym = r.check("symmetry").unwrap();
        assert_eq!(sym.status, CheckStatus::Skipped);
        assert!(sym.witness.is_some());
        assert_eq!(r.check("bregman_linearity_le").unwrap().status, CheckStatus::Pass);

        let r = preservation_suite(&DivergenceSpec::<f64>::hellinger(), 6, 3, 50, 2).unwrap();
        assert!(r.passed(), "{r}");
        assert_eq!(r.check("triangle").unwrap().status, CheckStatus::Pass);
        assert_eq!(r.check("convexity").unwrap().status, CheckStatus::Skipped);
    }

    #[test]
    fn cell_projection_gives_kl_chain_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kl = DivergenceSpec::<f64>::kl();
        for _ in 0..50 {
            let (p, r) = (random_distribution::<f64, _>(&mut rng, 6), random_distribution(&mut rng, 6));
            let mu = random_partition(&mut rng, 6, 3);
            let q = cell_projection(&p, &r, &mu).unwrap();
            let lhs = kl.evaluate(&p, &r).unwrap();
            let rhs = kl.evaluate(&p, &q).unwrap() + kl.evaluate(&q, &r).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn random_partition_has_requested_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..10 {
            for c in 1..=n {
                assert_eq!(random_partition(&mut rng, n, c).len(), c);
            }
        }
    }
}
