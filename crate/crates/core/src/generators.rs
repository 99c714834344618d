//! Seeded synthetic streams over the universe `1..=n`.
//!
//! Unbounded families (Pascal, Poisson) and the binomial are placed on items
//! through `item = x + 1`, truncated to `1..=n`, and renormalized. Sampling is
//! inverse-CDF over a precomputed cumulative table.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::hashing::ItemId;
use crate::histogram::ProbabilityVector;
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum GeneratorError {
    #[error("universe size must be at least 1")]
    EmptyUniverse,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot parse distribution `{0}`")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyKind {
    Uniform,
    Zipf { alpha: f64 },
    /// Number of events of probability `p` before the `r`-th complementary one;
    /// mean `r p / (1 - p)`.
    Pascal { r: f64, p: f64 },
    Binomial { p: f64 },
    Poisson { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionFamily {
    pub kind: FamilyKind,
    pub n: usize,
}

impl DistributionFamily {
    pub fn new(kind: FamilyKind, n: usize) -> Result<Self, GeneratorError> {
        let d = Self { kind, n };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(n: usize) -> Result<Self, GeneratorError> {
        Self::new(FamilyKind::Uniform, n)
    }

    pub fn zipf(n: usize, alpha: f64) -> Result<Self, GeneratorError> {
        Self::new(FamilyKind::Zipf { alpha }, n)
    }

    /// Pascal with `p = n / (2r + n)`, which pins the mean at `n / 2` for every `r`.
    pub fn pascal(n: usize, r: f64) -> Result<Self, GeneratorError> {
        let p = n as f64 / (2.0 * r + n as f64);
        Self::new(FamilyKind::Pascal { r, p }, n)
    }

    pub fn binomial(n: usize, p: f64) -> Result<Self, GeneratorError> {
        Self::new(FamilyKind::Binomial { p }, n)
    }

    pub fn poisson(n: usize, lambda: f64) -> Result<Self, GeneratorError> {
        Self::new(FamilyKind::Poisson { lambda }, n)
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.n == 0 {
            return Err(GeneratorError::EmptyUniverse);
        }
        let bad = |m: String| Err(GeneratorError::InvalidParameter(m));
        match self.kind {
            FamilyKind::Uniform => Ok(()),
            FamilyKind::Zipf { alpha } if !(alpha > 0.0 && alpha.is_finite()) => bad(format!("zipf alpha = {alpha}")),
            FamilyKind::Pascal { r, .. } if !(r >= 1.0 && r.is_finite()) => bad(format!("pascal r = {r}")),
            FamilyKind::Pascal { p, .. } if !(p > 0.0 && p < 1.0) => bad(format!("pascal p = {p}")),
            FamilyKind::Binomial { p } if !(0.0..=1.0).contains(&p) => bad(format!("binomial p = {p}")),
            FamilyKind::Poisson { lambda } if !(lambda > 0.0 && lambda.is_finite()) => bad(format!("poisson lambda = {lambda}")),
            _ => Ok(()),
        }
    }

    /// Probabilities of items `1..=n`, in that order.
    pub fn pmf<T: Real>(&self) -> Result<ProbabilityVector<T>, GeneratorError> {
        self.validate()?;
        let w = self.weights_f64();
        let v = ProbabilityVector::new(w.into_iter().map(T::lit).collect()).expect("weights are finite and nonnegative");
        Ok(v)
    }

    fn weights_f64(&self) -> Vec<f64> {
        let n = self.n;
        let log_weights: Vec<f64> = match self.kind {
            FamilyKind::Uniform => vec![0.0; n],
            FamilyKind::Zipf { alpha } => (1..=n).map(|i| -alpha * (i as f64).ln()).collect(),
            FamilyKind::Pascal { r, p } => log_recurrence(n, r * (1.0 - p).ln(), |x| ((x + r) / (x + 1.0)).ln() + p.ln()),
            FamilyKind::Binomial { p } if p == 0.0 || p == 1.0 => {
                let mut w = vec![0.0; n];
                w[if p == 0.0 { 0 } else { n - 1 }] = 1.0;
                return w;
            }
            FamilyKind::Binomial { p } => {
                let trials = (n - 1) as f64;
                let odds = p.ln() - (1.0 - p).ln();
                log_recurrence(n, trials * (1.0 - p).ln(), |x| ((trials - x) / (x + 1.0)).ln() + odds)
            }
            FamilyKind::Poisson { lambda } => log_recurrence(n, -lambda, |x| lambda.ln() - (x + 1.0).ln()),
        };
        let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_weights.iter().map(|&l| (l - max).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    }
}

/// `out[0] = first`, `out[x + 1] = out[x] + step(x)`.
fn log_recurrence(n: usize, first: f64, step: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut cur = first;
    for x in 0..n {
        out.push(cur);
        cur += step(x as f64);
    }
    out
}

impl fmt::Display for DistributionFamily {
    /// The same grammar [`FromStr`] accepts, minus `n`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            FamilyKind::Uniform => write!(f, "uniform"),
            FamilyKind::Zipf { alpha } => write!(f, "zipf:{alpha}"),
            FamilyKind::Pascal { r, p } => write!(f, "pascal:{r}:{p}"),
            FamilyKind::Binomial { p } => write!(f, "binomial:{p}"),
            FamilyKind::Poisson { lambda } => write!(f, "poisson:{lambda}"),
        }
    }
}

/// A family descriptor not yet bound to a universe size.
///
/// Grammar: `uniform`, `zipf:ALPHA`, `pascal:R` (with `p = n/(2R+n)`),
/// `pascal:R:P`, `binomial:P`, `poisson` (with `lambda = n/2`), `poisson:LAMBDA`.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySpec(String);

impl FamilySpec {
    pub fn bind(&self, n: usize) -> Result<DistributionFamily, GeneratorError> {
        let parts: Vec<&str> = self.0.split(':').map(str::trim).collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| GeneratorError::Parse(self.0.clone()));
        match parts[..] {
            ["uniform"] => DistributionFamily::uniform(n),
            ["zipf", a] => DistributionFamily::zipf(n, num(a)?),
            ["pascal", r] => DistributionFamily::pascal(n, num(r)?),
            ["pascal", r, p] => DistributionFamily::new(FamilyKind::Pascal { r: num(r)?, p: num(p)? }, n),
            ["binomial", p] => DistributionFamily::binomial(n, num(p)?),
            ["poisson"] => DistributionFamily::poisson(n, n as f64 / 2.0),
            ["poisson", l] => DistributionFamily::poisson(n, num(l)?),
            _ => Err(GeneratorError::Parse(self.0.clone())),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for FamilySpec {
    type Err = GeneratorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let spec = FamilySpec(s.trim().to_string());
        spec.bind(16)?;
        Ok(spec)
    }
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Inverse-CDF sampler over `1..=n`.
#[derive(Debug, Clone)]
pub struct Sampler {
    cdf: Vec<f64>,
    ranks_to_items: Option<Vec<ItemId>>,
}

impl Sampler {
    pub fn new(d: &DistributionFamily) -> Result<Self, GeneratorError> {
        d.validate()?;
        let mut acc = 0.0;
        let cdf = d
            .weights_f64()
            .into_iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self { cdf, ranks_to_items: None })
    }

    /// Maps rank `i` to a seeded random item instead of item `i`.
    pub fn with_rank_shuffle(mut self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut items: Vec<ItemId> = (1..=self.cdf.len() as u64).collect();
        for i in (1..items.len()).rev() {
            items.swap(i, rng.gen_range(0..=i));
        }
        self.ranks_to_items = Some(items);
        self
    }

    #[inline]
    pub fn sample<R: Rng>(&self, rng: &mut R) -> ItemId {
        let total = *self.cdf.last().expect("n >= 1");
        let u = rng.gen::<f64>() * total;
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        match &self.ranks_to_items {
            Some(map) => map[idx],
            None => idx as ItemId + 1,
        }
    }

    pub fn stream(&self, m: usize, seed: u64) -> Vec<ItemId> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| self.sample(&mut rng)).collect()
    }
}

/// `m` i.i.d. draws from `d`; identical for identical `(d, m, seed)`.
pub fn sample_stream(d: &DistributionFamily, m: usize, seed: u64) -> Result<Vec<ItemId>, GeneratorError> {
    Ok(Sampler::new(d)?.stream(m, seed))
}
