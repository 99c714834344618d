//! Carter-Wegman 2-universal hashing onto `k` cells.
//!
//! A function is `h(x) = ((a*x + b) mod P) mod k`. Families are a pure function
//! of `(seed, t, k, P)`: function `i` draws its `(a, b)` pair from a ChaCha
//! stream selected by `i`, so replaying a family never depends on how many
//! other functions were drawn.

use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::histogram::Partition;

/// Item identifier. Strings are mapped onto this space by [`crate::ingest::target_to_item`].
pub type ItemId = u64;

/// The Mersenne prime `2^61 - 1`, the default modulus.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HashError {
    #[error("hash family needs at least one function")]
    EmptyFamily,
    #[error("hash range must contain at least one cell")]
    EmptyRange,
    #[error("universe bound must be at least 1")]
    EmptyUniverse,
    #[error("universe bound {bound} exceeds the modulus {prime}")]
    UniverseTooLarge { bound: u64, prime: u64 },
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("malformed family header: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HashFunction {
    a: u64,
    b: u64,
    prime: u64,
    k: u64,
}

impl HashFunction {
    pub fn new(a: u64, b: u64, prime: u64, k: usize) -> Result<Self, HashError> {
        if k == 0 {
            return Err(HashError::EmptyRange);
        }
        if !is_prime(prime) {
            return Err(HashError::NotPrime(prime));
        }
        if a == 0 || a >= prime || b >= prime {
            return Err(HashError::Parse(format!("coefficients ({a}, {b}) outside [1, P) x [0, P) for P = {prime}")));
        }
        Ok(Self { a, b, prime, k: k as u64 })
    }

    pub fn a(&self) -> u64 {
        self.a
    }

    pub fn b(&self) -> u64 {
        self.b
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }

    /// Cell index of `x` in `[0, k)`. Inputs at or above `P` are reduced mod `P` first.
    #[inline]
    pub fn evaluate(&self, x: ItemId) -> usize {
        let v = if self.prime == MERSENNE_61 {
            let x = mersenne_reduce(x as u128);
            mersenne_reduce(self.a as u128 * x as u128 + self.b as u128)
        } else {
            let p = self.prime as u128;
            ((self.a as u128 * (x as u128 % p) + self.b as u128) % p) as u64
        };
        (v % self.k) as usize
    }

    /// Groups the positions of `universe` by hash value. Unpopulated cells are
    /// dropped, so the result has `k' <= k` cells, numbered by first appearance.
    pub fn induced_partition(&self, universe: &[ItemId]) -> Partition {
        let cells: Vec<usize> = universe.iter().map(|&x| self.evaluate(x)).collect();
        Partition::from_assignment(&cells)
    }
}

#[inline]
fn mersenne_reduce(x: u128) -> u64 {
    let p = MERSENNE_61 as u128;
    let mut r = (x & p) + (x >> 61);
    r = (r & p) + (r >> 61);
    if r >= p {
        r -= p;
    }
    r as u64
}

/// `t` hash functions sharing one range and modulus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamily {
    functions: Vec<HashFunction>,
    seed: u64,
    k: usize,
    prime: u64,
}

impl HashFamily {
    /// Draws `t` functions `[0, universe_bound) -> [0, k)` modulo `2^61 - 1`.
    pub fn new(t: usize, k: usize, universe_bound: u64, seed: u64) -> Result<Self, HashError> {
        if universe_bound == 0 {
            return Err(HashError::EmptyUniverse);
        }
        // Ids beyond the modulus are pre-reduced, so any 64-bit bound is accepted.
        Self::with_prime(t, k, MERSENNE_61, seed)
    }

    /// Same as [`HashFamily::new`] but with an explicit prime modulus.
    pub fn with_prime(t: usize, k: usize, prime: u64, seed: u64) -> Result<Self, HashError> {
        if t == 0 {
            return Err(HashError::EmptyFamily);
        }
        if k == 0 {
            return Err(HashError::EmptyRange);
        }
        if !is_prime(prime) {
            return Err(HashError::NotPrime(prime));
        }
        let functions = (0..t)
            .map(|i| {
                let mut rng = lane_rng(seed, i as u64);
                let a = rng.gen_range(1..prime);
                let b = rng.gen_range(0..prime);
                HashFunction { a, b, prime, k: k as u64 }
            })
            .collect();
        Ok(Self { functions, seed, k, prime })
    }

    /// Like [`HashFamily::with_prime`], additionally checking that `universe_bound` fits below `prime`.
    pub fn for_universe(t: usize, k: usize, universe_bound: u64, prime: u64, seed: u64) -> Result<Self, HashError> {
        if universe_bound == 0 {
            return Err(HashError::EmptyUniverse);
        }
        if universe_bound > prime {
            return Err(HashError::UniverseTooLarge { bound: universe_bound, prime });
        }
        Self::with_prime(t, k, prime, seed)
    }

    pub fn functions(&self) -> &[HashFunction] {
        &self.functions
    }

    pub fn t(&self) -> usize {
        self.functions.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Text form: a `t k P seed` header followed by one `a b` line per function.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {} {}\n", self.t(), self.k, self.prime, self.seed);
        for h in &self.functions {
            out.push_str(&format!("{} {}\n", h.a, h.b));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, HashError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| HashError::Parse("missing header".into()))?;
        let fields = parse_u64s(header)?;
        let [t, k, prime, seed] = fields[..] else {
            return Err(HashError::Parse(format!("header needs 4 fields, got {}", fields.len())));
        };
        if t == 0 {
            return Err(HashError::EmptyFamily);
        }
        let mut functions = Vec::with_capacity(t as usize);
        for line in lines {
            let ab = parse_u64s(line)?;
            let [a, b] = ab[..] else {
                return Err(HashError::Parse(format!("expected `a b`, got `{line}`")));
            };
            functions.push(HashFunction::new(a, b, prime, k as usize)?);
        }
        if functions.len() as u64 != t {
            return Err(HashError::Parse(format!("header declares {t} functions, found {}", functions.len())));
        }
        Ok(Self { functions, seed, k: k as usize, prime })
    }

    /// 64-bit digest of the text form; two sketches are comparable iff these match.
    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.to_text().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
    }
}

impl fmt::Display for HashFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HashFamily(t={}, k={}, P={}, seed={})", self.t(), self.k, self.prime, self.seed)
    }
}

fn parse_u64s(line: &str) -> Result<Vec<u64>, HashError> {
    line.split_whitespace()
        .map(|tok| tok.parse::<u64>().map_err(|e| HashError::Parse(format!("`{tok}`: {e}"))))
        .collect()
}

fn lane_rng(seed: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(lane);
    rng
}

/// Derives an independent sub-seed from a master seed by selecting ChaCha stream `lane`.
pub fn sub_seed(seed: u64, lane: u64) -> u64 {
    // Lane offset keeps sub-seeds disjoint from the hash-coefficient streams of `seed`.
    lane_rng(seed, lane.wrapping_add(1 << 63)).next_u64()
}

/// Count-Min style conversion `k = ceil(2 / eps)`, `t = ceil(ln(1 / delta))`.
///
/// This only picks dimensions; no `(eps, delta)` guarantee is claimed for the
/// divergence estimate.
pub fn dimensions_for(epsilon: f64, delta: f64) -> Option<(usize, usize)> {
    if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return None;
    }
    let k = (2.0 / epsilon).ceil() as usize;
    let t = ((1.0 / delta).ln().ceil() as usize).max(1);
    Some((k.max(1), t))
}

/// Deterministic Miller-Rabin, exact for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in SMALL {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    let mul = |x: u64, y: u64| (x as u128 * y as u128 % n as u128) as u64;
    let pow = |mut b: u64, mut e: u64| {
        let mut r = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                r = mul(r, b);
            }
            b = mul(b, b);
            e >>= 1;
        }
        r
    };
    'witness: for a in SMALL {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
