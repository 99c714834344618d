//! Divergences between probability vectors, all in bits.
//!
//! Zero cells follow the f-divergence conventions: `0 f(0/0) = 0`,
//! `a f(0/a) = a lim_{u->0} f(u)` and `0 f(a/0) = a lim_{u->inf} f(u)/u`.
//! `+inf` is an ordinary return value, never an error.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::histogram::ProbabilityVector;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DivergenceError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("{which} argument is not a normalized probability vector")]
    Unnormalized { which: &'static str },
    #[error("generator `{generator}` has no defined limit needed at index {index}")]
    Domain { generator: String, index: usize },
    #[error("invalid generator `{name}`: {reason}")]
    InvalidGenerator { name: String, reason: String },
    #[error("unknown divergence `{0}`")]
    Unknown(String),
}

type Result<T> = std::result::Result<T, DivergenceError>;

fn check_lengths<T>(p: &[T], q: &[T]) -> Result<()> {
    if p.len() != q.len() {
        return Err(DivergenceError::LengthMismatch { left: p.len(), right: q.len() });
    }
    Ok(())
}

fn check_normalized<T: Real>(p: &ProbabilityVector<T>, q: &ProbabilityVector<T>) -> Result<()> {
    check_lengths(p.weights(), q.weights())?;
    if !p.is_normalized() {
        return Err(DivergenceError::Unnormalized { which: "first" });
    }
    if !q.is_normalized() {
        return Err(DivergenceError::Unnormalized { which: "second" });
    }
    Ok(())
}

fn clamp_nonneg<T: Real>(x: T) -> T {
    if x < T::zero() {
        T::zero()
    } else {
        x
    }
}

pub mod raw {
    //! Slice-level kernels. Callers guarantee equal lengths and normalization.

    use super::*;

    pub fn kl<T: Real>(p: &[T], q: &[T]) -> T {
        let mut acc = T::zero();
        for (&pi, &qi) in p.iter().zip(q) {
            if pi == T::zero() {
                continue;
            }
            if qi == T::zero() {
                return T::infinity();
            }
            acc = acc + pi * (pi / qi).log2();
        }
        clamp_nonneg(acc)
    }

    pub fn js<T: Real>(p: &[T], q: &[T]) -> T {
        let half = T::lit(0.5);
        let mut acc = T::zero();
        for (&pi, &qi) in p.iter().zip(q) {
            let mi = (pi + qi) * half;
            if pi > T::zero() {
                acc = acc + pi * (pi / mi).log2();
            }
            if qi > T::zero() {
                acc = acc + qi * (qi / mi).log2();
            }
        }
        (acc * half).max(T::zero()).min(T::one())
    }

    /// `1 - BC(p, q)` computed as `1/2 sum (sqrt p - sqrt q)^2`, exact zero when `p == q`.
    pub fn one_minus_bc<T: Real>(p: &[T], q: &[T]) -> T {
        let s: T = p.iter().zip(q).map(|(&a, &b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
        (s * T::lit(0.5)).min(T::one())
    }

    pub fn bhattacharyya_coefficient<T: Real>(p: &[T], q: &[T]) -> T {
        T::one() - one_minus_bc(p, q)
    }

    pub fn bhattacharyya<T: Real>(p: &[T], q: &[T]) -> T {
        let h = one_minus_bc(p, q);
        if h >= T::one() {
            return T::infinity();
        }
        clamp_nonneg(-(-h).ln_1p() / T::LN_2())
    }

    pub fn hellinger<T: Real>(p: &[T], q: &[T]) -> T {
        one_minus_bc(p, q).sqrt()
    }

    pub fn total_variation<T: Real>(p: &[T], q: &[T]) -> T {
        let s: T = p.iter().zip(q).map(|(&a, &b)| (a - b).abs()).sum();
        (s * T::lit(0.5)).min(T::one())
    }

    pub fn squared_euclidean<T: Real>(p: &[T], q: &[T]) -> T {
        p.iter().zip(q).map(|(&a, &b)| (a - b) * (a - b)).sum()
    }
}

/// `KL(p || q) = sum p_i log2(p_i / q_i)`; `+inf` when `q_i = 0 < p_i`.
pub fn kl<T: Real>(p: &ProbabilityVector<T>, q: &ProbabilityVector<T>) -> Result<T> {
    check_normalized(p, q)?;
    Ok(raw::kl(p.weights(), q.weights()))
}

/// Shannon entropy `-sum p_i log2 p_i`.
pub fn entropy<T: Real>(p: &ProbabilityVector<T>) -> T {
    -p.weights().iter().filter(|&&x| x > T::zero()).map(|&x| x * x.log2()).sum::<T>()
}

/// Cross entropy `-sum p_i log2 q_i`, so that `KL(p || q) = H(p, q) - H(p)`.
pub fn cross_entropy<T: Real>(p: &ProbabilityVector<T>, q: &ProbabilityVector<T>) -> Result<T> {
    check_lengths(p.weights(), q.weights())?;
    let mut acc = T::zero();
    for (&pi, &qi) in p.weights().iter().zip(q.weights()) {
        if pi == T::zero() {
            continue;
        }
        if qi == T::zero() {
            return Ok(T::infinity());
        }
        acc = acc - pi * qi.log2();
    }
    Ok(acc)
}

/// Jensen-Shannon divergence against the midpoint `(p + q) / 2`; always in `[0, 1]`.
pub fn js<T: Real>(p: &ProbabilityVector<T>, q: &ProbabilityVector<T>) -> Result<T> {
    check_normalized(p, q)?;
    Ok(raw::js(p.weights(), q.weights()))
}

pub fn bhattacharyya_coefficient<T: Real>(p: &ProbabilityVector<T>, q: &ProbabilityVector<T>) -> Result<T> {
    check_normalized(p, q)?;
    Ok(raw::bhattacharyya_coefficient(p.weights(), q.weights()))
}

/// `-log2 BC(p, q)`, `+inf` for disjoint supports.
pub fn bhattacharyya<T: Real>(p: &ProbabilityVector<T>, q: &ProbabilityVector<T>) -> Result<T> {
    check_normalized(p, q)?;
    Ok(raw::bhattacharyya(p.weights(), q.weights()))
}

/// `sqrt(1 - BC(p, q))`.
pub fn hellinger<T: Real>(p: &ProbabilityVector<T>, q: &ProbabilityVector<T>) -> Result<T> {
    check_normalized(p, q)?;
    Ok(raw::hellinger(p.weights(), q.weights()))
}

pub fn total_variation<T: Real>(p: &ProbabilityVector<T>, q: &ProbabilityVector<T>) -> Result<T> {
    check_normalized(p, q)?;
    Ok(raw::total_variation(p.weights(), q.weights()))
}

/// Convex `f` on `(0, inf)` with `f(1) = 0`, plus the two boundary limits.
///
/// A limit of `None` means it does not exist; meeting the corresponding zero
/// pattern is then a [`DivergenceError::Domain`] error.
#[derive(Clone)]
pub struct FGenerator<T> {
    name: String,
    f: Arc<dyn Fn(T) -> T + Send + Sync>,
    at_zero: Option<T>,
    slope_at_infinity: Option<T>,
}

impl<T> fmt::Debug for FGenerator<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FGenerator").field("name", &self.name).finish_non_exhaustive()
    }
}

impl<T: Real> FGenerator<T> {
    /// Validates `f(1) = 0` and midpoint convexity on a deterministic grid of 1000 triples.
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(T) -> T + Send + Sync + 'static,
        at_zero: Option<T>,
        slope_at_infinity: Option<T>,
    ) -> Result<Self> {
        let name = name.into();
        let invalid = |reason: String| DivergenceError::InvalidGenerator { name: name.clone(), reason };
        if f(T::one()) != T::zero() {
            return Err(invalid(format!("f(1) = {} instead of 0", f(T::one()))));
        }
        for (u, v) in sample_pairs(1000, -3.0, 3.0) {
            let (u, v) = (T::lit(u), T::lit(v));
            let mid = f((u + v) * T::lit(0.5));
            let chord = (f(u) + f(v)) * T::lit(0.5);
            let tol = T::epsilon() * T::lit(64.0) * (T::one() + chord.abs());
            if mid > chord + tol {
                return Err(invalid(format!("not convex between {u} and {v}")));
            }
        }
        Ok(Self { name, f: Arc::new(f), at_zero, slope_at_infinity })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, u: T) -> T {
        (self.f)(u)
    }

    /// `f(t) = t log2 t`, generating Kullback-Leibler.
    pub fn kl() -> Self {
        Self::new("kl", |t: T| if t == T::zero() { T::zero() } else { t * t.log2() }, Some(T::zero()), Some(T::infinity()))
            .expect("builtin generator is valid")
    }

    /// Generator of Jensen-Shannon.
    pub fn js() -> Self {
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        Self::new(
            "js",
            move |t: T| {
                let tail = (two / (T::one() + t)).log2();
                let head = if t == T::zero() { T::zero() } else { t * (two * t / (T::one() + t)).log2() };
                half * (head + tail)
            },
            Some(half),
            Some(half),
        )
        .expect("builtin generator is valid")
    }

    /// `f(t) = |t - 1| / 2`, generating total variation.
    pub fn total_variation() -> Self {
        let half = T::lit(0.5);
        Self::new("tv", move |t: T| half * (t - T::one()).abs(), Some(half), Some(half)).expect("builtin generator is valid")
    }

    /// `f(t) = (sqrt t - 1)^2 / 2`, generating `1 - BC`, the squared Hellinger distance.
    pub fn squared_hellinger() -> Self {
        let half = T::lit(0.5);
        Self::new("hellinger2", move |t: T| half * (t.sqrt() - T::one()).powi(2), Some(half), Some(half))
            .expect("builtin generator is valid")
    }
}

/// `sum q_i f(p_i / q_i)` with the zero conventions applied through the generator's limits.
pub fn f_divergence<T: Real>(gen: &FGenerator<T>, p: &ProbabilityVector<T>, q: &ProbabilityVector<T>) -> Result<T> {
    check_normalized(p, q)?;
    f_divergence_slices(gen, p.weights(), q.weights())
}

pub fn f_divergence_slices<T: Real>(gen: &FGenerator<T>, p: &[T], q: &[T]) -> Result<T> {
    check_lengths(p, q)?;
    let domain = |index| DivergenceError::Domain { generator: gen.name.clone(), index };
    let mut acc = T::zero();
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        let term = match (pi == T::zero(), qi == T::zero()) {
            (true, true) => T::zero(),
            (true, false) => qi * gen.at_zero.ok_or_else(|| domain(i))?,
            (false, true) => pi * gen.slope_at_infinity.ok_or_else(|| domain(i))?,
            (false, false) => qi * gen.eval(pi / qi),
        };
        acc = acc + term;
    }
    Ok(acc)
}

/// Strictly convex differentiable `F` on `(0, 1]` with derivative `F'`.
///
/// Values at zero come from `zero_limits = (F(0), F'(0))` when given
/// (`F'(0)` may be `-inf`), otherwise from evaluating the closures at 0.
#[derive(Clone)]
pub struct BregmanGenerator<T> {
    name: String,
    f: Arc<dyn Fn(T) -> T + Send + Sync>,
    fprime: Arc<dyn Fn(T) -> T + Send + Sync>,
    zero_limits: Option<(T, T)>,
}

impl<T> fmt::Debug for BregmanGenerator<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BregmanGenerator").field("name", &self.name).finish_non_exhaustive()
    }
}

impl<T: Real> BregmanGenerator<T> {
    /// Checks strict midpoint convexity and that `F'` agrees with central
    /// differences of `F` on a grid inside `(0, 1)`.
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(T) -> T + Send + Sync + 'static,
        fprime: impl Fn(T) -> T + Send + Sync + 'static,
        zero_limits: Option<(T, T)>,
    ) -> Result<Self> {
        let g = Self { name: name.into(), f: Arc::new(f), fprime: Arc::new(fprime), zero_limits };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let invalid = |reason: String| DivergenceError::InvalidGenerator { name: self.name.clone(), reason };
        for (u, v) in sample_pairs(1000, -3.0, 0.0) {
            if u == v {
                continue;
            }
            let (u, v) = (T::lit(u), T::lit(v));
            let mid = self.value((u + v) * T::lit(0.5));
            let chord = (self.value(u) + self.value(v)) * T::lit(0.5);
            if !(mid < chord) {
                return Err(invalid(format!("not strictly convex between {u} and {v}")));
            }
        }
        let eps = T::epsilon();
        let h0 = eps.cbrt() * T::lit(4.0);
        let tol = T::lit(1e-6).max(eps.powf(T::lit(2.0 / 3.0)) * T::lit(100.0));
        for i in 1..=90 {
            let x = T::lit(0.05 + 0.01 * (i - 1) as f64);
            let h = h0 * x;
            let numeric = (self.value(x + h) - self.value(x - h)) / (h + h);
            let exact = self.derivative(x);
            if (numeric - exact).abs() > tol * T::one().max(exact.abs()) {
                return Err(invalid(format!("F'({x}) = {exact} but finite differences give {numeric}")));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, x: T) -> T {
        match self.zero_limits {
            Some((f0, _)) if x == T::zero() => f0,
            _ => (self.f)(x),
        }
    }

    pub fn derivative(&self, x: T) -> T {
        match self.zero_limits {
            Some((_, d0)) if x == T::zero() => d0,
            _ => (self.fprime)(x),
        }
    }

    /// `F(t) = t log2 t`, extended by `F(0) = 0`, `F'(0) = -inf`.
    pub fn kl() -> Self {
        Self::new(
            "bregman_kl",
            |t: T| t * t.log2(),
            |t: T| t.log2() + T::LOG2_E(),
            Some((T::zero(), T::neg_infinity())),
        )
        .expect("builtin generator is valid")
    }

    /// `F(t) = t^2`, giving the squared Euclidean distance.
    pub fn squared() -> Self {
        Self::new("sq_euclidean", |t: T| t * t, |t: T| t + t, None).expect("builtin generator is valid")
    }

    /// The generator `self + lambda * other`.
    pub fn combine(&self, other: &Self, lambda: T) -> Self {
        let (f1, f2) = (self.f.clone(), other.f.clone());
        let (d1, d2) = (self.fprime.clone(), other.fprime.clone());
        let zero_limits = match (self.zero_limits, other.zero_limits) {
            (None, None) => None,
            _ => Some((self.value(T::zero()) + lambda * other.value(T::zero()), self.derivative(T::zero()) + lambda * other.derivative(T::zero()))),
        };
        Self {
            name: format!("{}+{}*{}", self.name, lambda, other.name),
            f: Arc::new(move |x| f1(x) + lambda * f2(x)),
            fprime: Arc::new(move |x| d1(x) + lambda * d2(x)),
            zero_limits,
        }
    }
}

/// Decomposable Bregman divergence `sum F(p_i) - F(q_i) - (p_i - q_i) F'(q_i)`.
pub fn bregman<T: Real>(gen: &BregmanGenerator<T>, p: &ProbabilityVector<T>, q: &ProbabilityVector<T>) -> Result<T> {
    check_normalized(p, q)?;
    bregman_slices(gen, p.weights(), q.weights())
}

pub fn bregman_slices<T: Real>(gen: &BregmanGenerator<T>, p: &[T], q: &[T]) -> Result<T> {
    check_lengths(p, q)?;
    let mut acc = T::zero();
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == qi {
            continue;
        }
        let (fp, fq, dq) = (gen.value(pi), gen.value(qi), gen.derivative(qi));
        if !fp.is_finite() || !fq.is_finite() || dq.is_nan() {
            return Err(DivergenceError::Domain { generator: gen.name.clone(), index: i });
        }
        let term = if dq.is_infinite() {
            // (p - q) F'(q) with F'(q) = -inf and p > q.
            if (pi - qi) * dq.signum() < T::zero() {
                T::infinity()
            } else {
                return Err(DivergenceError::Domain { generator: gen.name.clone(), index: i });
            }
        } else {
            fp - fq - (pi - qi) * dq
        };
        acc = acc + term;
    }
    Ok(clamp_nonneg(acc))
}

/// Which axioms and properties a divergence satisfies. Each flag selects a property check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Capabilities {
    pub nonneg: bool,
    pub identity: bool,
    pub symmetric: bool,
    pub triangle: bool,
    pub f_div: bool,
    pub bregman: bool,
    /// Never increases when both arguments are aggregated over the same partition.
    pub monotone: bool,
}

type EvalFn<T> = Arc<dyn Fn(&[T], &[T]) -> Result<T> + Send + Sync>;

/// A named divergence with its capability flags.
#[derive(Clone)]
pub struct DivergenceSpec<T> {
    name: String,
    eval: EvalFn<T>,
    caps: Capabilities,
    bregman: Option<BregmanGenerator<T>>,
}

impl<T> fmt::Debug for DivergenceSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DivergenceSpec").field("name", &self.name).field("caps", &self.caps).finish_non_exhaustive()
    }
}

impl<T: Real> DivergenceSpec<T> {
    pub fn new(
        name: impl Into<String>,
        caps: Capabilities,
        eval: impl Fn(&[T], &[T]) -> Result<T> + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), eval: Arc::new(eval), caps, bregman: None }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn capabilities(&self) -> Capabilities {
        self.caps
    }

    pub fn bregman_generator(&self) -> Option<&BregmanGenerator<T>> {
        self.bregman.as_ref()
    }

    pub fn evaluate(&self, p: &ProbabilityVector<T>, q: &ProbabilityVector<T>) -> Result<T> {
        check_normalized(p, q)?;
        (self.eval)(p.weights(), q.weights())
    }

    /// Evaluates without the normalization check.
    #[inline]
    pub fn evaluate_slices(&self, p: &[T], q: &[T]) -> Result<T> {
        check_lengths(p, q)?;
        (self.eval)(p, q)
    }

    pub fn kl() -> Self {
        let caps = Capabilities { nonneg: true, identity: true, f_div: true, bregman: true, monotone: true, ..Default::default() };
        let mut s = Self::new("kl", caps, |p, q| Ok(raw::kl(p, q)));
        s.bregman = Some(BregmanGenerator::kl());
        s
    }

    pub fn js() -> Self {
        let caps = Capabilities { nonneg: true, identity: true, symmetric: true, f_div: true, monotone: true, ..Default::default() };
        Self::new("js", caps, |p, q| Ok(raw::js(p, q)))
    }

    /// Square root of Jensen-Shannon, a true metric.
    pub fn js_sqrt() -> Self {
        let caps = Capabilities { nonneg: true, identity: true, symmetric: true, triangle: true, monotone: true, ..Default::default() };
        Self::new("js_sqrt", caps, |p, q| Ok(raw::js(p, q).sqrt()))
    }

    pub fn bhattacharyya() -> Self {
        let caps = Capabilities { nonneg: true, identity: true, symmetric: true, monotone: true, ..Default::default() };
        Self::new("bhattacharyya", caps, |p, q| Ok(raw::bhattacharyya(p, q)))
    }

    pub fn hellinger() -> Self {
        let caps = Capabilities { nonneg: true, identity: true, symmetric: true, triangle: true, monotone: true, ..Default::default() };
        Self::new("hellinger", caps, |p, q| Ok(raw::hellinger(p, q)))
    }

    pub fn total_variation() -> Self {
        let caps = Capabilities { nonneg: true, identity: true, symmetric: true, triangle: true, f_div: true, monotone: true, ..Default::default() };
        Self::new("tv", caps, |p, q| Ok(raw::total_variation(p, q)))
    }

    pub fn squared_euclidean() -> Self {
        let caps = Capabilities { nonneg: true, identity: true, symmetric: true, bregman: true, ..Default::default() };
        let mut s = Self::new("sq_euclidean", caps, |p, q| Ok(raw::squared_euclidean(p, q)));
        s.bregman = Some(BregmanGenerator::squared());
        s
    }

    /// Wraps a custom f-divergence generator.
    pub fn from_f_generator(gen: FGenerator<T>) -> Self {
        let caps = Capabilities { nonneg: true, identity: true, f_div: true, monotone: true, ..Default::default() };
        Self::new(gen.name().to_string(), caps, move |p, q| f_divergence_slices(&gen, p, q))
    }

    /// Wraps a custom Bregman generator.
    pub fn from_bregman_generator(gen: BregmanGenerator<T>) -> Self {
        let caps = Capabilities { nonneg: true, identity: true, bregman: true, ..Default::default() };
        let g = gen.clone();
        let mut s = Self::new(gen.name().to_string(), caps, move |p, q| bregman_slices(&g, p, q));
        s.bregman = Some(gen);
        s
    }
}

/// Name-indexed divergences; the names are what the CLI and result files use.
#[derive(Debug, Clone)]
pub struct Registry<T> {
    specs: BTreeMap<String, DivergenceSpec<T>>,
}

impl<T: Real> Default for Registry<T> {
    fn default() -> Self {
        let mut r = Self { specs: BTreeMap::new() };
        for s in [
            DivergenceSpec::kl(),
            DivergenceSpec::js(),
            DivergenceSpec::js_sqrt(),
            DivergenceSpec::bhattacharyya(),
            DivergenceSpec::hellinger(),
            DivergenceSpec::total_variation(),
            DivergenceSpec::squared_euclidean(),
        ] {
            r.register(s);
        }
        r
    }
}

impl<T: Real> Registry<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a divergence under its own name.
    pub fn register(&mut self, spec: DivergenceSpec<T>) {
        self.specs.insert(spec.name().to_string(), spec);
    }

    pub fn get(&self, name: &str) -> Result<&DivergenceSpec<T>> {
        self.specs.get(name).ok_or_else(|| DivergenceError::Unknown(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.keys().map(String::as_str)
    }

    /// Resolves a comma-separated list such as `kl,js`.
    pub fn resolve_list(&self, list: &str) -> Result<Vec<DivergenceSpec<T>>> {
        list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|n| self.get(n).cloned()).collect()
    }
}

/// Deterministic pairs on a log10 grid `[lo, hi]`, low-discrepancy rather than random.
fn sample_pairs(count: usize, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> {
    const G1: f64 = 0.754_877_666_246_692_7;
    const G2: f64 = 0.569_840_290_998_053_3;
    (0..count).map(move |i| {
        let a = ((i as f64 + 0.5) * G1).fract();
        let b = ((i as f64 + 0.5) * G2).fract();
        (10f64.powf(lo + (hi - lo) * a), 10f64.powf(lo + (hi - lo) * b))
    })
}
