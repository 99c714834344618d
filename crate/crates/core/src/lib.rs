//! Compare data streams through small counter-matrix sketches.
//!
//! Each stream is summarized by a `t x k` matrix of counters whose rows are
//! random `k`-cell partitions of the item universe, induced by 2-universal
//! hash functions. Any divergence between the two streams (Kullback-Leibler,
//! Jensen-Shannon, Bhattacharyya, Hellinger, or a user-supplied f-divergence
//! or Bregman generator) is then estimated as the maximum of that divergence
//! over the paired rows. The exact version of the quantity, a maximum over
//! *all* `k`-cell partitions, is available as a brute-force oracle for small
//! universes.
//!
//! Numerical code is generic over the scalar type through [`Real`]; the
//! `*64` aliases below fix it to `f64`, which is what the CLI and the
//! experiment harness use.

pub mod divergence;
pub mod generators;
pub mod harness;
pub mod hashing;
pub mod histogram;
pub mod ingest;
pub mod scalar;
pub mod sketch;
pub mod starmetric;
pub mod streamfile;

pub use divergence::{Capabilities, DivergenceError, DivergenceSpec, FGenerator, BregmanGenerator, Registry};
pub use hashing::{HashFamily, HashFunction, ItemId};
pub use histogram::{EmpiricalDistribution, Partition, ProbabilityVector};
pub use scalar::Real;
pub use sketch::SketchMatrix;
pub use starmetric::{Argmax, Mode, StarMetricResult};

pub type ProbabilityVector64 = ProbabilityVector<f64>;
pub type ProbabilityVector32 = ProbabilityVector<f32>;
pub type DivergenceSpec64 = DivergenceSpec<f64>;
pub type DivergenceSpec32 = DivergenceSpec<f32>;
pub type FGenerator64 = FGenerator<f64>;
pub type BregmanGenerator64 = BregmanGenerator<f64>;
pub type Registry64 = Registry<f64>;
pub type StarMetricResult64 = StarMetricResult<f64>;
