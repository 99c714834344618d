use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use starmetric::generators::{FamilySpec, Sampler};
use starmetric::harness::{self, ExperimentPlan, ResultRow};
use starmetric::hashing::{self, HashFamily, MERSENNE_61};
use starmetric::histogram::{self, EmpiricalDistribution};
use starmetric::ingest::{self, TraceStats, ITEM_ID_VERSION};
use starmetric::sketch::SKETCH_MAGIC;
use starmetric::starmetric as star;
use starmetric::streamfile::{StreamFile, STREAM_MAGIC};
use starmetric::{Registry64, SketchMatrix};

#[derive(Parser)]
#[command(name = "starmetric", version, about = "Compare data streams through counter-matrix sketches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic stream into a stream file.
    Generate(GenerateArgs),
    /// Turn a Common Log Format access log (optionally gzipped) into a stream file.
    Ingest(IngestArgs),
    /// Sketch operations.
    Sketch {
        #[command(subcommand)]
        command: SketchCommand,
    },
    /// Divergences between two sketches, or between two stream files.
    Distance(DistanceArgs),
    /// Size, distinct-item and max-frequency counts of a stream file.
    Stats(StatsArgs),
    /// Run or summarize experiment plans.
    Experiment {
        #[command(subcommand)]
        command: ExperimentCommand,
    },
}

#[derive(Args)]
struct GenerateArgs {
    /// `uniform`, `zipf:A`, `pascal:R`, `pascal:R:P`, `binomial:P`, `poisson` or `poisson:L`.
    #[arg(long)]
    dist: FamilySpec,
    #[arg(long, default_value_t = 4000)]
    n: usize,
    #[arg(long, default_value_t = 200_000)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Map ranks to items through a permutation drawn from this seed.
    #[arg(long)]
    shuffle_seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogFormat {
    Clf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, value_enum, default_value = "clf")]
    format: LogFormat,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Write `metric,value` statistics here.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Write `rank,frequency` rows here.
    #[arg(long)]
    rank_frequency: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SketchCommand {
    /// Sketch a stream file.
    Build(SketchBuildArgs),
}

#[derive(Args)]
struct SketchBuildArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200, conflicts_with = "epsilon")]
    k: usize,
    #[arg(long, default_value_t = 4, conflicts_with = "delta")]
    t: usize,
    /// Pick `k = ceil(2/epsilon)` (requires --delta).
    #[arg(long, requires = "delta")]
    epsilon: Option<f64>,
    /// Pick `t = ceil(ln(1/delta))` (requires --epsilon).
    #[arg(long, requires = "epsilon")]
    delta: Option<f64>,
    /// Hash family seed; sketches are comparable only when built with the same seed, k and t.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DistanceArgs {
    /// Two sketch files, or two stream files.
    a: PathBuf,
    b: PathBuf,
    /// Comma-separated divergence names.
    #[arg(long, default_value = "bhattacharyya,kl,js")]
    phi: String,
    /// Additive smoothing applied to both sides before each divergence.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// For stream files: also compute the exact maximum over all partitions into this many cells.
    #[arg(long)]
    exact_k: Option<usize>,
    /// Largest number of partitions the exact computation may enumerate.
    #[arg(long, default_value_t = histogram::DEFAULT_BUDGET)]
    budget: u128,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    rank_frequency: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Execute a plan and write results.csv, summary.csv, timings.csv and manifest.txt.
    Run {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute per-setting summaries from a results file.
    Summarize {
        #[arg(long)]
        results: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate(a) => generate(a),
        Command::Ingest(a) => ingest_log(a),
        Command::Sketch { command: SketchCommand::Build(a) } => build_sketch(a),
        Command::Distance(a) => distance(a),
        Command::Stats(a) => stats(a),
        Command::Experiment { command: ExperimentCommand::Run { plan, out } } => {
            let plan = ExperimentPlan::load(&plan).with_context(|| format!("loading plan {}", plan.display()))?;
            let result = harness::run_plan(&plan)?;
            harness::write_run(&out, &plan, &result)?;
            eprintln!("{} rows written to {}", result.rows.len(), out.display());
            Ok(())
        }
        Command::Experiment { command: ExperimentCommand::Summarize { results, out } } => {
            let rows: Vec<ResultRow> = harness::read_csv(File::open(&results).with_context(|| results.display().to_string())?)?;
            let summary = harness::sweep_summary(&rows)?;
            match out {
                Some(p) => harness::write_csv(&summary, File::create(p)?)?,
                None => harness::write_csv(&summary, io::stdout().lock())?,
            }
            Ok(())
        }
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let family = a.dist.bind(a.n)?;
    let mut sampler = Sampler::new(&family)?;
    let mut descriptor = format!("{family} n={} m={} seed={}", a.n, a.m, a.seed);
    if let Some(s) = a.shuffle_seed {
        sampler = sampler.with_rank_shuffle(s);
        descriptor.push_str(&format!(" shuffle_seed={s}"));
    }
    let file = StreamFile { universe: a.n as u64, descriptor, items: sampler.stream(a.m, a.seed) };
    file.save(&a.out)?;
    Ok(())
}

fn ingest_log(a: IngestArgs) -> Result<()> {
    let LogFormat::Clf = a.format;
    let trace = ingest::ingest_file(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let stats = trace.stats();
    let descriptor = format!("clf:{} item_id_version={ITEM_ID_VERSION}", a.input.display());
    StreamFile { universe: stats.distinct, descriptor, items: trace.items.clone() }.save(&a.out)?;
    match a.stats {
        Some(p) => stats.write_csv(BufWriter::new(File::create(p)?))?,
        None => stats.write_csv(io::stdout().lock())?,
    }
    if let Some(p) = a.rank_frequency {
        ingest::write_rank_frequency_csv(&trace.histogram, BufWriter::new(File::create(p)?))?;
    }
    Ok(())
}

fn build_sketch(a: SketchBuildArgs) -> Result<()> {
    let (k, t) = match (a.epsilon, a.delta) {
        (Some(e), Some(d)) => hashing::dimensions_for(e, d).context("epsilon must be positive and delta in (0, 1)")?,
        _ => (a.k, a.t),
    };
    let stream = StreamFile::load(&a.input).with_context(|| a.input.display().to_string())?;
    let family = HashFamily::new(t, k, MERSENNE_61, a.seed)?;
    let sketch = SketchMatrix::from_stream(family, stream.items.iter().copied())?;
    let mut w = BufWriter::new(File::create(&a.out)?);
    sketch.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

enum Input {
    Stream(StreamFile),
    Sketch(SketchMatrix),
}

fn load_input(path: &Path) -> Result<Input> {
    let mut magic = [0u8; 4];
    File::open(path).with_context(|| path.display().to_string())?.read_exact(&mut magic)?;
    let r = BufReader::new(File::open(path)?);
    if magic == STREAM_MAGIC {
        Ok(Input::Stream(StreamFile::read_from(r)?))
    } else if magic == SKETCH_MAGIC {
        Ok(Input::Sketch(SketchMatrix::read_from(r)?))
    } else {
        bail!("{} is neither a stream file nor a sketch file", path.display())
    }
}

fn distance(a: DistanceArgs) -> Result<()> {
    let registry = Registry64::default();
    let phis = registry.resolve_list(&a.phi)?;
    if phis.is_empty() {
        bail!("no divergences given");
    }
    let mut out = csv_writer();
    writeln!(out, "phi,mode,k,t,value,argmax,seed,alpha_smoothing")?;
    match (load_input(&a.a)?, load_input(&a.b)?) {
        (Input::Sketch(x), Input::Sketch(y)) => {
            for phi in &phis {
                let r = star::sketch_star_metric_smoothed(phi, &x, &y, a.alpha)?;
                writeln!(out, "{},{},{},{},{},{},{},{}", phi.name(), r.mode, x.k(), x.t(), r.value, r.argmax, x.family().seed(), a.alpha)?;
            }
        }
        (Input::Stream(x), Input::Stream(y)) => {
            let hx = EmpiricalDistribution::from_stream(x.items.iter().copied());
            let hy = EmpiricalDistribution::from_stream(y.items.iter().copied());
            for phi in &phis {
                let v = star::reference_distance_smoothed(phi, &hx, &hy, a.alpha)?;
                writeln!(out, "{},ref,,,{},,,{}", phi.name(), v, a.alpha)?;
            }
            if let Some(k) = a.exact_k {
                let universe = hx.union_support(&hy);
                let p = hx.normalize::<f64>(&universe)?.smoothed(a.alpha);
                let q = hy.normalize::<f64>(&universe)?.smoothed(a.alpha);
                for phi in &phis {
                    let r = star::exact_star_metric(phi, &p, &q, k, a.budget)?;
                    // Cells are reported over positions in the sorted union support.
                    writeln!(out, "{},{},{},,{},\"{}\",,{}", phi.name(), r.mode, k, r.value, r.argmax, a.alpha)?;
                }
            }
        }
        _ => bail!("both inputs must be sketches or both must be stream files"),
    }
    out.flush()?;
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    let stream = StreamFile::load(&a.input).with_context(|| a.input.display().to_string())?;
    let hist = EmpiricalDistribution::from_stream(stream.items.iter().copied());
    TraceStats::of_histogram(&hist, 0).write_csv(io::stdout().lock())?;
    if let Some(p) = a.rank_frequency {
        ingest::write_rank_frequency_csv(&hist, BufWriter::new(File::create(p)?))?;
    }
    Ok(())
}

fn csv_writer() -> BufWriter<io::StdoutLock<'static>> {
    BufWriter::new(io::stdout().lock())
}
