//! Acceptance criteria, one PASS/FAIL/SKIP line each.
//!
//! Runs as a plain binary so the lines are always printed. Exits nonzero if
//! any criterion fails. Real-trace checks read the logs from the directory in
//! `STARMETRIC_TRACE_DIR` and are skipped when it is unset or empty.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use starmetric::divergence::{bregman, BregmanGenerator};
use starmetric::harness::{run_plan, sweep_summary, ExperimentPlan, SummaryRow};
use starmetric::hashing::{HashFamily, MERSENNE_61};
use starmetric::histogram::{enumerate_partitions, stirling, EmpiricalDistribution, DEFAULT_BUDGET};
use starmetric::ingest::{ingest_file, KNOWN_TRACES};
use starmetric::starmetric::{
    exact_star_metric, preservation_suite, random_distribution, reference_distance, sketch_star_metric, CheckStatus,
};
use starmetric::{DivergenceSpec64, ProbabilityVector64, Registry64, SketchMatrix};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Verdict,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "partition count identity", limit: Duration::from_secs(10), run: partition_counts },
        Criterion { id: 2, name: "axiom preservation", limit: Duration::from_secs(120), run: axioms },
        Criterion { id: 3, name: "monotonicity under coarsening", limit: Duration::from_secs(120), run: monotonicity },
        Criterion { id: 4, name: "convexity and bregman linearity", limit: Duration::from_secs(60), run: convexity },
        Criterion { id: 5, name: "sandwich and row consistency", limit: Duration::from_secs(180), run: sandwich },
        Criterion { id: 6, name: "same-distribution near zero", limit: Duration::from_secs(600), run: same_distribution },
        Criterion { id: 7, name: "k-sweep and t-sweep", limit: Duration::from_secs(900), run: sweeps },
        Criterion { id: 8, name: "real-trace statistics", limit: Duration::from_secs(600), run: real_traces },
        Criterion { id: 9, name: "sketch throughput", limit: Duration::from_secs(120), run: throughput },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.id.to_string() == *f || c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let verdict = (c.run)();
        let elapsed = start.elapsed();
        let verdict = match verdict {
            Verdict::Pass(d) if elapsed > c.limit => Verdict::Fail(format!("{d}; over time limit {:?}", c.limit)),
            v => v,
        };
        let (tag, detail) = match &verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag} [{}] {} ({:.1}s): {detail}", c.id, c.name, elapsed.as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}

fn verdict(violations: usize, detail: String) -> Verdict {
    if violations == 0 {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

/// `S(n, k) = (1/k!) sum_j (-1)^j C(k, j) (k - j)^n`, in exact integers.
fn stirling_alternating(n: u32, k: u32) -> BigInt {
    let mut sum = BigInt::from(0);
    let mut binom = BigInt::from(1);
    for j in 0..=k {
        let term = &binom * BigInt::from(k - j).pow(n);
        if j % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
        binom = binom * (k - j) / (j + 1);
    }
    sum / (1..=k).map(BigInt::from).product::<BigInt>()
}

fn partition_counts() -> Verdict {
    let mut bad = Vec::new();
    let mut total = 0usize;
    for n in 1..=10usize {
        for k in 1..=n {
            let enumerated = enumerate_partitions(n, k, DEFAULT_BUDGET).map(|it| it.count()).unwrap_or(usize::MAX);
            let recurrence = stirling(n, k).map(BigInt::from).unwrap_or_default();
            let alternating = stirling_alternating(n as u32, k as u32);
            total += enumerated;
            if BigInt::from(enumerated) != recurrence || recurrence != alternating {
                bad.push(format!("S({n},{k}): {enumerated} / {recurrence} / {alternating}"));
            }
        }
    }
    verdict(bad.len(), format!("55 (n,k) settings, {total} partitions enumerated, mismatches: {bad:?}"))
}

fn axioms() -> Verdict {
    let registry = Registry64::default();
    let wanted: &[(&str, &[&str])] = &[
        ("kl", &["non_negativity", "identity_self", "identity_distinct"]),
        ("js", &["non_negativity", "identity_self", "identity_distinct", "symmetry"]),
        ("bhattacharyya", &["non_negativity", "identity_self", "identity_distinct", "symmetry"]),
        ("hellinger", &["non_negativity", "identity_self", "identity_distinct", "symmetry", "triangle"]),
    ];
    let mut checked = 0;
    let mut failures = Vec::new();
    for (i, &(name, checks)) in wanted.iter().enumerate() {
        for n in [4, 6, 8] {
            for k in [2, 3] {
                let seed = 1000 * i as u64 + 10 * n as u64 + k as u64;
                let report = match preservation_suite(registry.get(name).unwrap(), n, k, 200, seed) {
                    Ok(r) => r,
                    Err(e) => return Verdict::Fail(format!("{name} n={n} k={k}: {e}")),
                };
                for &c in checks {
                    match report.check(c) {
                        Some(o) if o.status == CheckStatus::Pass && o.trials == 200 => checked += o.trials,
                        Some(o) => failures.push(format!("{name} n={n} k={k}: {o}")),
                        None => failures.push(format!("{name} n={n} k={k}: {c} missing")),
                    }
                }
            }
        }
    }
    verdict(failures.len(), format!("{checked} property trials at tolerance 1e-9, violations: {failures:?}"))
}

fn all_coarsenings(n: usize) -> Vec<starmetric::Partition> {
    (1..=n).flat_map(|c| enumerate_partitions(n, c, DEFAULT_BUDGET).unwrap()).collect()
}

fn monotonicity() -> Verdict {
    const TOL: f64 = 1e-12;
    let registry = Registry64::default();
    let phis: Vec<&DivergenceSpec64> = registry.names().map(|n| registry.get(n).unwrap()).filter(|p| p.capabilities().monotone).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut checks, mut ge, mut lt) = (0usize, 0usize, 0usize);
    let mut failures = Vec::new();
    for n in [4, 6, 8] {
        let coarsenings = all_coarsenings(n);
        for _ in 0..3 {
            let p: ProbabilityVector64 = random_distribution(&mut rng, n);
            let q: ProbabilityVector64 = random_distribution(&mut rng, n);
            for phi in &phis {
                let full = phi.evaluate(&p, &q).unwrap();
                let stars: Vec<f64> = [2, 3].iter().map(|&k| exact_star_metric(phi, &p, &q, k, DEFAULT_BUDGET).unwrap().value).collect();
                for mu in &coarsenings {
                    let (pa, qa) = (p.aggregate(mu).unwrap(), q.aggregate(mu).unwrap());
                    let coarse = phi.evaluate(&pa, &qa).unwrap();
                    checks += 1;
                    if coarse > full + TOL {
                        failures.push(format!("{} n={n} mu={mu}: {coarse} > {full}", phi.name()));
                    }
                    for (&k, &fine) in [2usize, 3].iter().zip(&stars) {
                        let v = exact_star_metric(phi, &pa, &qa, k, DEFAULT_BUDGET).unwrap().value;
                        if mu.len() >= k {
                            ge += 1;
                        } else {
                            lt += 1;
                        }
                        if v > fine + TOL {
                            failures.push(format!("{} n={n} k={k} mu={mu}: {v} > {fine}", phi.name()));
                        }
                    }
                }
            }
        }
    }
    let names: Vec<&str> = phis.iter().map(|p| p.name()).collect();
    verdict(
        failures.len(),
        format!("{names:?}, {checks} exhaustive coarsenings, star checks c>=k: {ge}, c<k: {lt}, violations: {}", failures.len()),
    )
}

fn convexity() -> Verdict {
    const TOL: f64 = 1e-9;
    const LAMBDAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
    let registry = Registry64::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = Vec::new();
    let (n, k) = (6, 3);
    for _ in 0..1000 {
        let [p1, p2, q1, q2]: [ProbabilityVector64; 4] = std::array::from_fn(|_| random_distribution(&mut rng, n));
        for name in ["kl", "js", "tv"] {
            let phi = registry.get(name).unwrap();
            let d1 = exact_star_metric(phi, &p1, &q1, k, DEFAULT_BUDGET).unwrap().value;
            let d2 = exact_star_metric(phi, &p2, &q2, k, DEFAULT_BUDGET).unwrap().value;
            for l in LAMBDAS {
                let (p, q) = (p1.mix(&p2, l).unwrap(), q1.mix(&q2, l).unwrap());
                let lhs = exact_star_metric(phi, &p, &q, k, DEFAULT_BUDGET).unwrap().value;
                if lhs > l * d1 + (1.0 - l) * d2 + TOL {
                    failures.push(format!("convexity {name} lambda={l}: {lhs} > {}", l * d1 + (1.0 - l) * d2));
                }
            }
        }
    }
    let (f1, f2) = (BregmanGenerator::<f64>::kl(), BregmanGenerator::<f64>::squared());
    for _ in 0..1000 {
        let p: ProbabilityVector64 = random_distribution(&mut rng, 8);
        let q: ProbabilityVector64 = random_distribution(&mut rng, 8);
        let (b1, b2) = (bregman(&f1, &p, &q).unwrap(), bregman(&f2, &p, &q).unwrap());
        for l in LAMBDAS {
            let combined = bregman(&f1.combine(&f2, l), &p, &q).unwrap();
            if (combined - (b1 + l * b2)).abs() > TOL {
                failures.push(format!("bregman lambda={l}: {combined} vs {}", b1 + l * b2));
            }
        }
    }
    verdict(failures.len(), format!("1000 quadruples x 5 lambdas x 3 f-divergences, 1000 bregman pairs, violations: {failures:?}"))
}

fn sandwich() -> Verdict {
    let registry = Registry64::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut row_failures, mut order_failures) = (Vec::new(), Vec::new());
    for trial in 0..1000u64 {
        let n = rng.gen_range(2..=10u64);
        let (k, t) = (rng.gen_range(1..=4usize), rng.gen_range(1..=4usize));
        // Skewed weights so the two streams differ in shape.
        let w1: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let w2: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let s1 = weighted_stream(&mut rng, &w1, 10_000);
        let s2 = weighted_stream(&mut rng, &w2, 10_000);
        let family = HashFamily::new(t, k, MERSENNE_61, trial).unwrap();
        let a = SketchMatrix::from_stream(family.clone(), s1.iter().copied()).unwrap();
        let b = SketchMatrix::from_stream(family.clone(), s2.iter().copied()).unwrap();
        let (h1, h2) = (EmpiricalDistribution::from_stream(s1), EmpiricalDistribution::from_stream(s2));
        for (sketch, hist) in [(&a, &h1), (&b, &h2)] {
            for (i, h) in family.functions().iter().enumerate() {
                let mut expect = vec![0u64; k];
                for (&item, &c) in hist.counts() {
                    expect[h.evaluate(item)] += c;
                }
                if sketch.row(i).unwrap() != &expect[..] {
                    row_failures.push(format!("trial {trial} row {i}"));
                }
            }
        }
        let universe = h1.union_support(&h2);
        let (p, q) = (h1.normalize::<f64>(&universe).unwrap(), h2.normalize::<f64>(&universe).unwrap());
        for name in ["kl", "js", "hellinger"] {
            let phi = registry.get(name).unwrap();
            let est = sketch_star_metric(phi, &a, &b).unwrap().value;
            let exact = exact_star_metric(phi, &p, &q, k, DEFAULT_BUDGET).unwrap().value;
            let full = reference_distance(phi, &h1, &h2).unwrap();
            if !(le(est, exact) && le(exact, full)) {
                order_failures.push(format!("trial {trial} {name}: {est} / {exact} / {full}"));
            }
        }
    }
    verdict(
        row_failures.len() + order_failures.len(),
        format!("1000 stream pairs, row mismatches: {row_failures:?}, ordering violations: {order_failures:?}"),
    )
}

fn le(a: f64, b: f64) -> bool {
    a <= b + 1e-12 || b == f64::INFINITY
}

fn weighted_stream(rng: &mut ChaCha8Rng, weights: &[f64], m: usize) -> Vec<u64> {
    let total: f64 = weights.iter().sum();
    (0..m)
        .map(|_| {
            let mut u = rng.gen::<f64>() * total;
            for (i, &w) in weights.iter().enumerate() {
                if u < w {
                    return i as u64 + 1;
                }
                u -= w;
            }
            weights.len() as u64
        })
        .collect()
}

const FAMILIES: [&str; 7] = ["uniform", "zipf:1", "zipf:2", "zipf:4", "pascal:3", "binomial:0.5", "poisson"];

fn default_scale_plan(pairs: &str, seed: u64, trials: usize) -> ExperimentPlan {
    ExperimentPlan::parse(&format!(
        "pairs = {pairs}\ndivergences = js\nk = 200\nt = 4\ntrials = {trials}\nm = 200000\nn = 4000\nseed = {seed}\n"
    ))
    .unwrap()
}

fn same_distribution() -> Verdict {
    let pairs = FAMILIES.iter().map(|f| format!("{f} vs {f}")).collect::<Vec<_>>().join("; ");
    // Calibration and evaluation use disjoint master seeds.
    let calibration = sweep_summary(&run_plan(&default_scale_plan(&pairs, 600, 20)).unwrap().rows).unwrap();
    let evaluation = run_plan(&default_scale_plan(&pairs, 601, 20)).unwrap().rows;
    let mut failures = Vec::new();
    let mut details = Vec::new();
    for (id, family) in FAMILIES.iter().enumerate() {
        let cal = calibration.iter().find(|s| s.pair_id == id).unwrap();
        let band = 3.0 * cal.mean_reference;
        let rows: Vec<_> = evaluation.iter().filter(|r| r.pair_id == id).collect();
        let worst_ref = rows.iter().map(|r| r.reference).fold(0.0, f64::max);
        let worst_sketch = rows.iter().map(|r| r.sketch).fold(0.0, f64::max);
        details.push(format!("{family}: band {band:.2e}, max ref {worst_ref:.2e}, max sketch {worst_sketch:.2e}"));
        if !(worst_ref < band && worst_sketch < band) {
            failures.push(family.to_string());
        }
    }
    verdict(failures.len(), format!("20 trials each; {}; over band: {failures:?}", details.join("; ")))
}

fn sweeps() -> Verdict {
    const K_SWEEP: [usize; 8] = [10, 20, 50, 100, 200, 500, 1000, 2000];
    let base = "pairs = uniform vs pascal:3\ndivergences = js\ntrials = 10\nm = 200000\nn = 4000\nseed = 700\n";
    let ks = K_SWEEP.map(|k| k.to_string()).join(",");
    let k_plan = ExperimentPlan::parse(&format!("{base}k = {ks}\nt = 4\n")).unwrap();
    let t_plan = ExperimentPlan::parse(&format!("{base}k = 200\nt = 2,4,8,16\n")).unwrap();
    let k_summary = sweep_summary(&run_plan(&k_plan).unwrap().rows).unwrap();
    let t_summary = sweep_summary(&run_plan(&t_plan).unwrap().rows).unwrap();

    let mut failures = Vec::new();
    for w in k_summary.windows(2) {
        let slack = w[0].stdev_abs_error.max(w[1].stdev_abs_error);
        if w[1].mean_abs_error > w[0].mean_abs_error + slack {
            failures.push(format!("error rises from k={} ({:.4}) to k={} ({:.4})", w[0].k, w[0].mean_abs_error, w[1].k, w[1].mean_abs_error));
        }
    }
    let sketch_means = |s: &[SummaryRow]| s.iter().map(|r| r.mean_sketch).collect::<Vec<_>>();
    let spread = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
    let k_effect = spread(&sketch_means(&k_summary));
    let t_effect = spread(&sketch_means(&t_summary));
    if !(t_effect < k_effect) {
        failures.push(format!("t spread {t_effect:.4} >= k spread {k_effect:.4}"));
    }
    let errors: Vec<String> = k_summary.iter().map(|r| format!("{}:{:.4}", r.k, r.mean_abs_error)).collect();
    verdict(
        failures.len(),
        format!("mean |sketch-ref| by k [{}]; sketch spread over t {t_effect:.4} vs over k {k_effect:.4}; {failures:?}", errors.join(" ")),
    )
}

fn find_trace(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["", ".gz", ".log", ".txt"].iter().map(|ext| dir.join(format!("{stem}{ext}"))).find(|p| p.is_file())
}

fn real_traces() -> Verdict {
    let Some(dir) = std::env::var_os("STARMETRIC_TRACE_DIR").map(PathBuf::from) else {
        return Verdict::Skip("STARMETRIC_TRACE_DIR not set".into());
    };
    let mut found = 0;
    let mut failures = Vec::new();
    let mut details = Vec::new();
    for t in KNOWN_TRACES {
        let Some(path) = find_trace(&dir, t.file) else { continue };
        found += 1;
        let stats = match ingest_file(&path) {
            Ok(tr) => tr.stats(),
            Err(e) => {
                failures.push(format!("{}: {e}", t.name));
                continue;
            }
        };
        let rel = |got: u64, want: u64| (got as f64 - want as f64) / want as f64;
        let (dd, dm) = (rel(stats.distinct, t.distinct), rel(stats.max_frequency, t.max_frequency));
        details.push(format!(
            "{}: items {} (table {}), distinct {} ({:+.2}%), max {} ({:+.2}%), malformed {}",
            t.name, stats.items, t.items, stats.distinct, dd * 100.0, stats.max_frequency, dm * 100.0, stats.malformed
        ));
        if stats.items != t.items || dd.abs() > 0.05 || dm.abs() > 0.05 {
            failures.push(t.name.to_string());
        }
    }
    if found == 0 {
        return Verdict::Skip(format!("no trace files in {}", dir.display()));
    }
    verdict(failures.len(), format!("{}; failing: {failures:?}", details.join("; ")))
}

fn throughput() -> Verdict {
    let plan = ExperimentPlan::parse("pairs = zipf:1 vs uniform\ndivergences = js\nk = 200\nt = 4\nm = 2000000\nn = 4000\nseed = 900\n").unwrap();
    let out = run_plan(&plan).unwrap();
    let rate = out.timings[0].updates_per_second;
    let detail = format!("{:.2e} updates/s at t=4, k=200 over {} updates", rate, out.timings[0].updates);
    if rate >= 1e6 {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}
