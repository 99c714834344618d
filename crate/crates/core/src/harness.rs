//! Experiment plans, reference-vs-sketch runs, and their CSV outputs.
//!
//! Plan files are flat `key = value` text. Blank lines and `#` comments are
//! ignored; each key may appear once.
//!
//! | key           | value                                          | default                   |
//! |---------------|------------------------------------------------|---------------------------|
//! | `pairs`       | `SRC vs SRC; SRC vs SRC; ...`                  | required unless `cross`   |
//! | `cross`       | `SRC; SRC; ...`, every ordered pair            |                           |
//! | `divergences` | comma list of registry names                   | `bhattacharyya,kl,js`     |
//! | `k`           | comma list of cell counts                      | `200`                     |
//! | `t`           | comma list of row counts                       | `4`                       |
//! | `trials`      | repetitions per setting                        | `1`                       |
//! | `m`           | items per synthetic stream                     | `200000`                  |
//! | `n`           | synthetic universe size                        | `4000`                    |
//! | `seed`        | master seed                                    | `0`                       |
//! | `alpha`       | additive smoothing applied to both sides       | `0`                       |
//!
//! A source `SRC` is a distribution (`uniform`, `zipf:A`, `pascal:R`,
//! `pascal:R:P`, `binomial:P`, `poisson`, `poisson:L`) or `file:PATH` naming a
//! stream file, which is used as is in every trial.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divergence::{DivergenceError, DivergenceSpec, Registry};
use crate::generators::{FamilySpec, GeneratorError, Sampler};
use crate::hashing::{self, HashError, HashFamily, ItemId, MERSENNE_61};
use crate::histogram::EmpiricalDistribution;
use crate::sketch::{SketchMatrix, SKETCH_VERSION};
use crate::starmetric::{self, StarError};
use crate::streamfile::{StreamFile, StreamFileError, STREAM_VERSION};

/// Absolute slack for the sketch <= reference check.
pub const SANDWICH_TOLERANCE: f64 = 1e-9;

const STREAM_LANE: u64 = 1;
const FAMILY_LANE: u64 = 2;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("plan line {line}: {msg}")]
    Plan { line: usize, msg: String },
    #[error("invalid plan: {0}")]
    Invalid(String),
    #[error("source `{source_text}`: {msg}")]
    Source { source_text: String, msg: String },
    #[error("sketch estimate {sketch} exceeds reference {reference} for {phi} on pair {pair} (k={k}, t={t}, trial={trial})")]
    SandwichViolation { phi: String, pair: String, k: usize, t: usize, trial: usize, sketch: f64, reference: f64 },
    #[error("no result rows")]
    EmptyResults,
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Hash(#[from] HashError),
    #[error(transparent)]
    Star(#[from] StarError),
    #[error(transparent)]
    StreamFile(#[from] StreamFileError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamSource {
    Synthetic(FamilySpec),
    File(PathBuf),
}

impl FromStr for StreamSource {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s.strip_prefix("file:") {
            Some(path) if !path.is_empty() => Ok(StreamSource::File(PathBuf::from(path))),
            Some(_) => Err(HarnessError::Source { source_text: s.into(), msg: "empty path".into() }),
            None => s
                .parse::<FamilySpec>()
                .map(StreamSource::Synthetic)
                .map_err(|e| HarnessError::Source { source_text: s.into(), msg: e.to_string() }),
        }
    }
}

impl fmt::Display for StreamSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StreamSource::Synthetic(spec) => write!(f, "{spec}"),
            StreamSource::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub pairs: Vec<(StreamSource, StreamSource)>,
    pub divergences: Vec<String>,
    pub k_values: Vec<usize>,
    pub t_values: Vec<usize>,
    pub trials: usize,
    pub m: usize,
    pub n: usize,
    pub master_seed: u64,
    pub alpha: f64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            pairs: Vec::new(),
            divergences: vec!["bhattacharyya".into(), "kl".into(), "js".into()],
            k_values: vec![200],
            t_values: vec![4],
            trials: 1,
            m: 200_000,
            n: 4_000,
            master_seed: 0,
            alpha: 0.0,
        }
    }
}

impl ExperimentPlan {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut plan = Self::default();
        let mut seen = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |msg: String| HarnessError::Plan { line, msg };
            let (key, value) = content.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), line).is_some() {
                return Err(err(format!("duplicate key `{key}`")));
            }
            match key {
                "pairs" => {
                    for pair in value.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                        let (a, b) = pair.split_once(" vs ").ok_or_else(|| err(format!("pair `{pair}` lacks ` vs `")))?;
                        plan.pairs.push((a.parse()?, b.parse()?));
                    }
                }
                "cross" => {
                    let sources: Vec<StreamSource> =
                        value.split(';').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<_, _>>()?;
                    for a in &sources {
                        for b in &sources {
                            plan.pairs.push((a.clone(), b.clone()));
                        }
                    }
                }
                "divergences" => {
                    plan.divergences = value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
                }
                "k" => plan.k_values = parse_list(value).map_err(err)?,
                "t" => plan.t_values = parse_list(value).map_err(err)?,
                "trials" => plan.trials = parse_one(value).map_err(err)?,
                "m" => plan.m = parse_one(value).map_err(err)?,
                "n" => plan.n = parse_one(value).map_err(err)?,
                "seed" => plan.master_seed = parse_one(value).map_err(err)?,
                "alpha" => plan.alpha = parse_one(value).map_err(err)?,
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Invalid(m.into()));
        if self.pairs.is_empty() {
            return bad("no stream pairs");
        }
        if self.divergences.is_empty() {
            return bad("no divergences");
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return bad("k values must be a nonempty list of positive integers");
        }
        if self.t_values.is_empty() || self.t_values.contains(&0) {
            return bad("t values must be a nonempty list of positive integers");
        }
        if self.trials == 0 || self.m == 0 || self.n == 0 {
            return bad("trials, m and n must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be finite and nonnegative");
        }
        let registry = Registry::<f64>::default();
        for d in &self.divergences {
            registry.get(d)?;
        }
        for (a, b) in &self.pairs {
            for s in [a, b] {
                if let StreamSource::Synthetic(spec) = s {
                    spec.bind(self.n)?;
                }
            }
        }
        Ok(())
    }

    /// Canonical text form; parses back to an equal plan.
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let pairs = self.pairs.iter().map(|(a, b)| format!("{a} vs {b}")).collect::<Vec<_>>().join("; ");
        format!(
            "pairs = {pairs}\ndivergences = {}\nk = {}\nt = {}\ntrials = {}\nm = {}\nn = {}\nseed = {}\nalpha = {}\n",
            self.divergences.join(","),
            join(&self.k_values),
            join(&self.t_values),
            self.trials,
            self.m,
            self.n,
            self.master_seed,
            self.alpha
        )
    }

    pub fn pair_label(&self, pair_id: usize) -> String {
        let (a, b) = &self.pairs[pair_id];
        format!("{a} vs {b}")
    }
}

fn parse_one<V: FromStr>(s: &str) -> Result<V, String> {
    s.trim().parse().map_err(|_| format!("cannot parse `{s}`"))
}

fn parse_list<V: FromStr>(s: &str) -> Result<Vec<V>, String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(parse_one).collect()
}

/// One (pair, divergence, k, t, trial) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub pair_id: usize,
    pub pair: String,
    pub phi: String,
    pub k: usize,
    pub t: usize,
    pub trial: usize,
    /// Seed of the hash family used for this row.
    pub seed: u64,
    pub alpha_smoothing: f64,
    pub reference: f64,
    pub sketch: f64,
    /// `|reference - sketch|`, infinite when either side is.
    pub abs_error: f64,
    pub infinite: bool,
    /// Row of the sketch that attained the maximum.
    pub argmax: String,
}

impl ResultRow {
    fn sort_key(&self) -> (usize, &str, usize, usize, usize) {
        (self.pair_id, self.phi.as_str(), self.k, self.t, self.trial)
    }
}

/// Wall-clock cost of building one pair of sketches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub pair_id: usize,
    pub k: usize,
    pub t: usize,
    pub trial: usize,
    pub updates: u64,
    pub build_seconds: f64,
    pub updates_per_second: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<TimingRow>,
}

/// Seed of stream `side` (0 or 1) of `pair_id` in `trial`.
pub fn stream_seed(master: u64, pair_id: usize, trial: usize, side: usize) -> u64 {
    let s = hashing::sub_seed(master, STREAM_LANE);
    let s = hashing::sub_seed(s, pair_id as u64);
    let s = hashing::sub_seed(s, trial as u64);
    hashing::sub_seed(s, side as u64)
}

/// Hash family seed shared by both sketches of every pair in `trial` at `(k, t)`.
pub fn family_seed(master: u64, trial: usize, k: usize, t: usize) -> u64 {
    let s = hashing::sub_seed(master, FAMILY_LANE);
    let s = hashing::sub_seed(s, trial as u64);
    let s = hashing::sub_seed(s, k as u64);
    hashing::sub_seed(s, t as u64)
}

enum Loaded {
    Synthetic(Sampler),
    File(Vec<ItemId>),
}

impl Loaded {
    fn stream(&self, m: usize, seed: u64) -> Vec<ItemId> {
        match self {
            Loaded::Synthetic(s) => s.stream(m, seed),
            Loaded::File(items) => items.clone(),
        }
    }
}

fn load_source(src: &StreamSource, n: usize) -> Result<Loaded, HarnessError> {
    match src {
        StreamSource::Synthetic(spec) => Ok(Loaded::Synthetic(Sampler::new(&spec.bind(n)?)?)),
        StreamSource::File(path) => {
            let f = StreamFile::load(path)
                .map_err(|e| HarnessError::Source { source_text: src.to_string(), msg: e.to_string() })?;
            if f.items.is_empty() {
                return Err(HarnessError::Source { source_text: src.to_string(), msg: "empty stream".into() });
            }
            Ok(Loaded::File(f.items))
        }
    }
}

/// Runs every (pair, trial) job, in parallel, and returns rows sorted by
/// (pair, divergence, k, t, trial).
///
/// Fails if a monotone divergence's sketch estimate exceeds its reference
/// value without smoothing.
pub fn run_plan(plan: &ExperimentPlan) -> Result<RunOutput, HarnessError> {
    plan.validate()?;
    let registry = Registry::<f64>::default();
    let phis: Vec<DivergenceSpec<f64>> = plan.divergences.iter().map(|d| registry.get(d).cloned()).collect::<Result<_, _>>()?;
    let loaded: Vec<(Loaded, Loaded)> =
        plan.pairs.iter().map(|(a, b)| Ok((load_source(a, plan.n)?, load_source(b, plan.n)?))).collect::<Result<_, HarnessError>>()?;

    let jobs: Vec<(usize, usize)> = (0..plan.pairs.len()).flat_map(|p| (0..plan.trials).map(move |tr| (p, tr))).collect();
    let parts = jobs
        .par_iter()
        .map(|&(pair_id, trial)| run_job(plan, &phis, &loaded[pair_id], pair_id, trial))
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = RunOutput::default();
    for part in parts {
        out.rows.extend(part.rows);
        out.timings.extend(part.timings);
    }
    out.rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    out.timings.sort_by_key(|r| (r.pair_id, r.k, r.t, r.trial));
    Ok(out)
}

fn run_job(
    plan: &ExperimentPlan,
    phis: &[DivergenceSpec<f64>],
    sources: &(Loaded, Loaded),
    pair_id: usize,
    trial: usize,
) -> Result<RunOutput, HarnessError> {
    let s1 = sources.0.stream(plan.m, stream_seed(plan.master_seed, pair_id, trial, 0));
    let s2 = sources.1.stream(plan.m, stream_seed(plan.master_seed, pair_id, trial, 1));
    let h1 = EmpiricalDistribution::from_stream(s1.iter().copied());
    let h2 = EmpiricalDistribution::from_stream(s2.iter().copied());
    let references: Vec<f64> =
        phis.iter().map(|phi| starmetric::reference_distance_smoothed(phi, &h1, &h2, plan.alpha)).collect::<Result<_, _>>()?;
    let label = plan.pair_label(pair_id);

    let mut out = RunOutput::default();
    for &k in &plan.k_values {
        for &t in &plan.t_values {
            let seed = family_seed(plan.master_seed, trial, k, t);
            let family = HashFamily::new(t, k, MERSENNE_61, seed)?;
            let start = Instant::now();
            let a = SketchMatrix::from_stream(family.clone(), s1.iter().copied()).map_err(StarError::from)?;
            let b = SketchMatrix::from_stream(family, s2.iter().copied()).map_err(StarError::from)?;
            let secs = start.elapsed().as_secs_f64();
            let updates = (s1.len() + s2.len()) as u64;
            out.timings.push(TimingRow {
                pair_id,
                k,
                t,
                trial,
                updates,
                build_seconds: secs,
                updates_per_second: if secs > 0.0 { updates as f64 / secs } else { f64::INFINITY },
            });
            for (phi, &reference) in phis.iter().zip(&references) {
                let est = starmetric::sketch_star_metric_smoothed(phi, &a, &b, plan.alpha)?;
                let caps = phi.capabilities();
                if plan.alpha == 0.0 && (caps.f_div || caps.monotone) && est.value > reference + SANDWICH_TOLERANCE {
                    return Err(HarnessError::SandwichViolation {
                        phi: phi.name().into(),
                        pair: label.clone(),
                        k,
                        t,
                        trial,
                        sketch: est.value,
                        reference,
                    });
                }
                let infinite = !reference.is_finite() || !est.value.is_finite();
                out.rows.push(ResultRow {
                    pair_id,
                    pair: label.clone(),
                    phi: phi.name().into(),
                    k,
                    t,
                    trial,
                    seed,
                    alpha_smoothing: plan.alpha,
                    reference,
                    sketch: est.value,
                    abs_error: if infinite { f64::INFINITY } else { (reference - est.value).abs() },
                    infinite,
                    argmax: est.argmax.to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// Per-setting aggregate over trials. Means and deviations cover finite values only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub pair_id: usize,
    pub pair: String,
    pub phi: String,
    pub k: usize,
    pub t: usize,
    pub trials: usize,
    pub mean_reference: f64,
    pub stdev_reference: f64,
    pub mean_sketch: f64,
    pub stdev_sketch: f64,
    pub mean_abs_error: f64,
    pub stdev_abs_error: f64,
    /// Mean of `sketch - reference` over rows where both are finite.
    pub mean_difference: f64,
    pub infinite_reference: usize,
    pub infinite_sketch: usize,
}

/// Mean and sample standard deviation of the finite entries, with the count of the rest.
fn finite_stats(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let (finite, infinite): (Vec<f64>, Vec<f64>) = values.partition(|v| v.is_finite());
    if finite.is_empty() {
        return (f64::NAN, f64::NAN, infinite.len());
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let var = if finite.len() > 1 { finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt(), infinite.len())
}

pub fn sweep_summary(rows: &[ResultRow]) -> Result<Vec<SummaryRow>, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyResults);
    }
    let mut groups: BTreeMap<(usize, &str, usize, usize), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.pair_id, r.phi.as_str(), r.k, r.t)).or_default().push(r);
    }
    Ok(groups
        .into_values()
        .map(|g| {
            let (mean_reference, stdev_reference, infinite_reference) = finite_stats(g.iter().map(|r| r.reference));
            let (mean_sketch, stdev_sketch, infinite_sketch) = finite_stats(g.iter().map(|r| r.sketch));
            let (mean_abs_error, stdev_abs_error, _) = finite_stats(g.iter().map(|r| r.abs_error));
            let (mean_difference, _, _) = finite_stats(g.iter().map(|r| r.sketch - r.reference));
            SummaryRow {
                pair_id: g[0].pair_id,
                pair: g[0].pair.clone(),
                phi: g[0].phi.clone(),
                k: g[0].k,
                t: g[0].t,
                trials: g.len(),
                mean_reference,
                stdev_reference,
                mean_sketch,
                stdev_sketch,
                mean_abs_error,
                stdev_abs_error,
                mean_difference,
                infinite_reference,
                infinite_sketch,
            }
        })
        .collect())
}

pub fn write_csv<S: Serialize, W: Write>(rows: &[S], w: W) -> Result<(), HarnessError> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_csv<D: for<'de> Deserialize<'de>, R: Read>(r: R) -> Result<Vec<D>, HarnessError> {
    csv::Reader::from_reader(r).deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

/// Key-value record of what produced a run: the plan, its seeds and the on-disk format versions.
pub fn manifest(plan: &ExperimentPlan) -> String {
    let mut s = String::new();
    s.push_str(&format!("crate_version = {}\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!("sketch_format = {SKETCH_VERSION}\n"));
    s.push_str(&format!("stream_format = {STREAM_VERSION}\n"));
    s.push_str(&format!("item_id_version = {}\n", crate::ingest::ITEM_ID_VERSION));
    s.push_str(&format!("hash_modulus = {MERSENNE_61}\n"));
    s.push_str(&format!("master_seed = {}\n", plan.master_seed));
    s.push_str("[plan]\n");
    s.push_str(&plan.to_text());
    s
}

/// Writes `results.csv`, `summary.csv`, `timings.csv` and `manifest.txt` into `dir`.
///
/// All but `timings.csv` are byte-identical across runs of the same plan.
pub fn write_run(dir: impl AsRef<Path>, plan: &ExperimentPlan, out: &RunOutput) -> Result<(), HarnessError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_csv(&out.rows, std::fs::File::create(dir.join("results.csv"))?)?;
    write_csv(&sweep_summary(&out.rows)?, std::fs::File::create(dir.join("summary.csv"))?)?;
    write_csv(&out.timings, std::fs::File::create(dir.join("timings.csv"))?)?;
    std::fs::write(dir.join("manifest.txt"), manifest(plan))?;
    Ok(())
}
