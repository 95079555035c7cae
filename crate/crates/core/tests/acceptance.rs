//! Acceptance gate: one line per criterion, `PASS` or `FAIL`, with the
//! measured quantities. Exits nonzero when any criterion fails.
//!
//! Run with `cargo test -p cgtc-core --test acceptance`.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use cgtc_core::good_turing::XgtTester;
use cgtc_core::selective_split::{weights_fast, weights_naive, InclusionPolicy};
use cgtc_core::*;

const Z95: f64 = 1.96;
const SUPER_UNIFORM_SE: f64 = 3.0;
const WEIGHT_TOL: f64 = 1e-10;
const ALPHA: f64 = 0.1;
const REPS: usize = 20;
const TESTS: usize = 200;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn experiment(source: DataSource, method: Method, allocation: AllocationMode, seed: u64) -> ExperimentMetrics {
    let mut spec = ExperimentSpec::new(source, method, ALPHA);
    spec.allocation = allocation;
    spec.reps = REPS;
    spec.tests = TESTS;
    spec.seed = seed;
    run_experiment(&spec).expect("experiment runs")
}

fn even() -> AllocationMode {
    AllocationMode::Fixed(AlphaAllocation::even(ALPHA).unwrap())
}

fn tuned() -> AllocationMode {
    AllocationMode::Tuned(TuningConfig::default())
}

fn dp(theta: f64, n: usize) -> DataSource {
    DataSource::Dp(DpConfig::new(theta, n))
}

fn est(e: &Estimate) -> String {
    format!("{:.4}±{:.4}", e.mean, e.se)
}

/// Plug-in conformal coverage collapses when half of the test labels are new.
fn plug_in_degradation() -> Outcome {
    let start = Instant::now();
    let m = experiment(dp(100.0, 100), Method::StandardRandom, even(), 101);
    let elapsed = start.elapsed();
    let bound = 0.5 + Z95 * m.coverage.se;
    outcome(
        m.coverage.mean <= bound && elapsed < Duration::from_secs(120),
        format!("coverage {} <= {bound:.4}, {:.1}s", est(&m.coverage), elapsed.as_secs_f64()),
    )
}

/// Open-set coverage holds with fixed and with tuned allocations.
fn open_set_validity() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for method in [Method::CgtcRandom, Method::CgtcSelective] {
        let fixed = experiment(dp(100.0, 100), method, even(), 202);
        let tuned = experiment(dp(100.0, 100), method, tuned(), 202);
        let ok_fixed = fixed.coverage.mean >= 1.0 - ALPHA - Z95 * fixed.coverage.se;
        let ok_tuned = tuned.coverage.mean >= 1.0 - ALPHA - 3.0 * tuned.coverage.se;
        pass &= ok_fixed && ok_tuned;
        parts.push(format!("{method}: fixed {} tuned {}", est(&fixed.coverage), est(&tuned.coverage)));
    }
    outcome(pass, parts.join("; "))
}

/// Frequency tests are super-uniform under their nulls on simulated data.
fn super_uniformity() -> Outcome {
    const NULLS: usize = 5000;
    const N: usize = 300;
    const THETA: f64 = 100.0;
    let grid: Vec<f64> = (1..=10).map(|i| i as f64 * 0.05).collect();
    let start = Instant::now();
    // statistic index: 3 variants x k in {0,1,2}, then psi_seen
    let counts: Vec<Vec<usize>> = (0..NULLS)
        .into_par_iter()
        .map(|s| {
            let src = RandomSource::new(303).fork(s as u64);
            let sample = dp_sample(&DpConfig::new(THETA, N + 1), &mut src.named(Stream::Dp).rng()).unwrap();
            let all = sample.data();
            let reference = all.subset(&(0..N).collect::<Vec<_>>());
            let x = all.row(N);
            let y = all.label(N);
            let profile = frequency_profile(reference.labels());
            let k_true = profile.count(y);
            let mut rng = src.named(Stream::Rgt).rng();
            let mut hits = vec![0usize; 10 * grid.len()];
            let mut record = |stat: usize, value: f64, null: bool| {
                if null {
                    for (g, &u) in grid.iter().enumerate() {
                        if value <= u {
                            hits[stat * grid.len() + g] += 1;
                        }
                    }
                }
            };
            for k in 0..3 {
                let null = k_true == k;
                record(3 * k, gt_pvalue(k, &profile).unwrap(), null);
                record(3 * k + 1, rgt_pvalue(k, &profile, &mut rng).unwrap(), null);
                let xgt = XgtTester::fit(k, &reference, 20).unwrap().pvalue(x).unwrap();
                record(3 * k + 2, xgt.value, null);
            }
            let tests = GoodTuringTests::fit(&reference, GtConfig::default()).unwrap();
            record(9, tests.psi_seen(x, &mut rng).unwrap(), k_true > 0);
            vec![hits]
        })
        .flatten()
        .collect();
    let names = ["gt0", "rgt0", "xgt0", "gt1", "rgt1", "xgt1", "gt2", "rgt2", "xgt2", "seen"];
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = String::new();
    let mut pass = true;
    for (stat, name) in names.iter().enumerate() {
        for (g, &u) in grid.iter().enumerate() {
            let hit: usize = counts.iter().map(|h| h[stat * grid.len() + g]).sum();
            let p = hit as f64 / NULLS as f64;
            let se = (p * (1.0 - p) / NULLS as f64).sqrt();
            let slack = p - (u + SUPER_UNIFORM_SE * se);
            if slack > worst {
                worst = slack;
                worst_at = format!("{name}@{u:.2}: {p:.4}");
            }
            pass &= slack <= 0.0;
        }
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    outcome(
        pass,
        format!("worst margin {worst:+.4} ({worst_at}), {:.1}s", elapsed.as_secs_f64()),
    )
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn partitions(total: usize, max: usize) -> Vec<Vec<usize>> {
    if total == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in (1..=max.min(total)).rev() {
        for mut rest in partitions(total - first, first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Exhaustive-permutation oracle for GT and exact RGT, plus dominance.
fn exact_oracles() -> Outcome {
    let mut violations = 0usize;
    let mut cases = 0usize;
    for m in 2..=8usize {
        let n = m - 1;
        let perms = permutations(m);
        let total = perms.len() as f64;
        for part in partitions(m, m) {
            let base: Vec<Label> = part
                .iter()
                .enumerate()
                .flat_map(|(l, &c)| std::iter::repeat_n(Label(l as u32), c))
                .collect();
            // columns: for each k, P(gt_k <= u, H_k) and P(rgt_k <= u, H_k) on u = j/(n+1)
            let mut gt_mass = vec![vec![0.0; m + 1]; n + 1];
            let mut rgt_mass = vec![vec![0.0; m + 1]; n + 1];
            for perm in &perms {
                let seq: Vec<Label> = perm.iter().map(|&i| base[i]).collect();
                let reference = &seq[..n];
                let test = seq[n];
                let k_true = reference.iter().filter(|&&l| l == test).count();
                let profile = frequency_profile(reference);
                let mut mult = std::collections::HashMap::new();
                for &l in reference {
                    *mult.entry(l).or_insert(0usize) += 1;
                }
                let m_next = mult.values().filter(|&&c| c == k_true + 1).count();
                let atoms = (k_true + 1) * m_next + k_true + 1;
                let gt = gt_pvalue(k_true, &profile).unwrap();
                if (gt - atoms as f64 / m as f64).abs() > 1e-15 {
                    violations += 1;
                }
                for j in 1..=m {
                    if atoms <= j {
                        gt_mass[k_true][j] += 1.0 / total;
                    }
                    rgt_mass[k_true][j] += (j.min(atoms) as f64 / atoms as f64) / total;
                }
            }
            for k in 0..=n {
                for j in 1..=m {
                    let u = j as f64 / m as f64;
                    cases += 1;
                    if gt_mass[k][j] > u + 1e-12 || rgt_mass[k][j] > u + 1e-12 {
                        violations += 1;
                    }
                }
            }
        }
    }

    // randomized statistic: support and uniform mass on the profile a,a,b,c
    let profile = frequency_profile(&[Label(0), Label(0), Label(1), Label(2)]);
    let mut rng = RandomSource::new(404).rng();
    let draws = 30_000;
    let mut hist = [0usize; 3];
    let mut off_support = 0;
    for _ in 0..draws {
        let v = rgt_pvalue(0, &profile, &mut rng).unwrap();
        match ((v * 5.0).round() as usize, v) {
            (j @ 1..=3, v) if (v - j as f64 / 5.0).abs() < 1e-15 => hist[j - 1] += 1,
            _ => off_support += 1,
        }
    }
    let expected = draws as f64 / 3.0;
    let chi2: f64 = hist.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // chi-squared with 2 degrees of freedom: P(X > 9.21) = 0.01
    let chi_ok = chi2 < 9.21 && off_support == 0;

    // dominance on random instances
    let mut dominance = 0usize;
    for t in 0..10_000u64 {
        let src = RandomSource::new(405).fork(t);
        let mut rng = src.rng();
        let n = rng.random_range(3..40);
        let distinct = rng.random_range(1..=n);
        let labels: Vec<Label> = (0..n).map(|_| Label(rng.random_range(0..distinct) as u32)).collect();
        let features: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>()).collect();
        let data = LabeledDataset::new(2, features, labels).unwrap();
        let profile = frequency_profile(data.labels());
        let k = rng.random_range(0..=3.min(n));
        let gt = gt_pvalue(k, &profile).unwrap();
        let x = [rng.random::<f64>() * 1.5, rng.random::<f64>() * 1.5];
        let xgt = XgtTester::fit(k, &data, rng.random_range(1..25)).unwrap().pvalue(&x).unwrap().value;
        let rgt = rgt_pvalue(k, &profile, &mut rng).unwrap();
        if xgt > gt || rgt > gt {
            dominance += 1;
        }
    }
    outcome(
        violations == 0 && chi_ok && dominance == 0,
        format!(
            "{cases} exact checks, {violations} violations; chi2 {chi2:.2}; {dominance} dominance violations"
        ),
    )
}

/// Fast weights agree with direct products; constant policies give uniform weights.
fn weight_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let mut uniform_ok = true;
    for t in 0..200u64 {
        let mut rng = RandomSource::new(505).fork(t).rng();
        let n = rng.random_range(2..=60);
        let distinct = rng.random_range(1..=n);
        let labels: Vec<Label> = (0..n).map(|_| Label(rng.random_range(0..distinct) as u32)).collect();
        let tail = rng.random_range(0.05..0.95);
        let mut table = vec![0.0, 0.0];
        for _ in 0..rng.random_range(0..4) {
            table.push(rng.random_range(0.05..0.95));
        }
        let policy = InclusionPolicy::from_table(table, tail).unwrap();
        let split = selective_split(&labels, &policy, &mut rng);
        let y = if rng.random::<f64>() < 0.2 {
            Label(9999)
        } else {
            labels[rng.random_range(0..n)]
        };
        let (Ok(naive), Ok(fast)) = (
            weights_naive(y, &labels, &split, &policy),
            weights_fast(y, &labels, &split, &policy),
        ) else {
            worst = f64::INFINITY;
            continue;
        };
        worst = worst.max((naive.test_weight() - fast.test_weight()).abs());
        for (a, b) in naive.calibration_weights().iter().zip(fast.calibration_weights()) {
            worst = worst.max((a - b).abs());
        }

        let constant = InclusionPolicy::constant(tail).unwrap();
        let split = selective_split(&labels, &constant, &mut rng);
        let expect = 1.0 / (1 + split.calibration().len()) as f64;
        for w in [
            weights_fast(y, &labels, &split, &constant).unwrap(),
            weights_naive(y, &labels, &split, &constant).unwrap(),
        ] {
            uniform_ok &= w.test_weight() == expect && w.calibration_weights().iter().all(|&v| v == expect);
        }
    }
    outcome(
        worst < WEIGHT_TOL && uniform_ok,
        format!("max |fast - naive| {worst:.2e}, constant-policy uniform: {uniform_ok}"),
    )
}

/// Weighted sets keep seen-label miscoverage at alpha under the selective split.
fn weighted_closed_set() -> Outcome {
    let m = experiment(dp(10.0, 500), Method::StandardSelective, even(), 606);
    let bound = ALPHA + Z95 * m.seen_miscoverage.se;
    outcome(
        m.seen_miscoverage.mean <= bound,
        format!("P(miss, seen) {} <= {bound:.4}", est(&m.seen_miscoverage)),
    )
}

/// With a finite label space and the matching allocation, the open-set set
/// equals the closed-set set.
fn finite_recovery() -> Outcome {
    const K: usize = 5;
    const N: usize = 200;
    let unseen = (K + 1) as f64 / (N + 1) as f64;
    let alloc = AlphaAllocation::new(ALPHA - unseen, unseen, 0.0, ALPHA).unwrap();
    let cfg = FiniteConfig {
        labels: K,
        n: N,
        sigma2: 5e-3,
        dim: 3,
    };
    let mut equal = 0usize;
    let mut total = 0usize;
    for split in [SplitStrategy::Random, SplitStrategy::Selective] {
        for rep in 0..5u64 {
            let src = RandomSource::new(707).fork(rep).fork(split as u64);
            let data = cfg.sample(&mut src.named(Stream::Dp).rng()).unwrap();
            let pipeline = PipelineConfig {
                split,
                ..PipelineConfig::default()
            };
            let model = CgtcModel::fit(&data, &pipeline, &src).unwrap();
            let tests = cfg.draw(200, &mut src.named(Stream::Tests).rng()).unwrap();
            for (t, p) in tests.iter().enumerate() {
                let e = model.evaluate(&p.x, &src.fork(t as u64 + 10)).unwrap();
                total += 1;
                if e.assemble(&alloc) == PredictionSet::new(e.closed_set(alloc.alpha_class), false) {
                    equal += 1;
                }
            }
        }
    }
    outcome(equal == total, format!("{equal}/{total} draws identical"))
}

const THETAS: [f64; 3] = [10.0, 100.0, 1000.0];

/// Selective splitting yields smaller open-set sets than random splitting.
fn selective_efficiency() -> Outcome {
    let mut strict = 0;
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, &theta) in THETAS.iter().enumerate() {
        let sel = experiment(dp(theta, 500), Method::CgtcSelective, tuned(), 808 + i as u64);
        let rnd = experiment(dp(theta, 500), Method::CgtcRandom, tuned(), 808 + i as u64);
        let (a, b) = (sel.avg_cardinality.mean, rnd.avg_cardinality.mean);
        pass &= a <= b;
        strict += usize::from(a < b);
        parts.push(format!(
            "theta {theta}: {a:.3} vs {b:.3} (cov {:.3}/{:.3})",
            sel.coverage.mean, rnd.coverage.mean
        ));
    }
    outcome(pass && strict >= 2, parts.join("; "))
}

/// Feature-based unseen tests use the joker least often.
fn joker_parsimony() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, &theta) in THETAS.iter().enumerate() {
        let rate = |variant: PValueVariant| {
            let mut spec = ExperimentSpec::new(dp(theta, 500), Method::CgtcSelective, ALPHA);
            spec.variant = variant;
            spec.reps = REPS;
            spec.tests = TESTS;
            spec.seed = 909 + i as u64;
            run_experiment(&spec).unwrap().joker_rate
        };
        let (x, r, g) = (rate(PValueVariant::Xgt), rate(PValueVariant::Rgt), rate(PValueVariant::Gt));
        pass &= x.mean <= r.mean + x.se.max(r.se) && r.mean <= g.mean + r.se.max(g.se);
        parts.push(format!("theta {theta}: {:.3} <= {:.3} <= {:.3}", x.mean, r.mean, g.mean));
    }
    outcome(pass, parts.join("; "))
}

/// Rare labels are covered far more often by the open-set method.
fn rare_label_coverage() -> Outcome {
    let cgtc = experiment(dp(1000.0, 500), Method::CgtcSelective, even(), 1010);
    let std = experiment(dp(1000.0, 500), Method::StandardSelective, even(), 1010);
    let (a, b) = (&cgtc.stratified[0].coverage, &std.stratified[0].coverage);
    outcome(
        a.mean - b.mean >= 0.2,
        format!("very-rare coverage {} vs {}", est(a), est(b)),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("plug-in coverage degrades under novelty", plug_in_degradation),
        ("open-set coverage at 1 - alpha", open_set_validity),
        ("super-uniformity of frequency tests", super_uniformity),
        ("exact Good-Turing oracles and dominance", exact_oracles),
        ("fast weights match direct weights", weight_oracle),
        ("weighted closed-set validity", weighted_closed_set),
        ("finite label space recovers closed-set sets", finite_recovery),
        ("selective split gives smaller sets", selective_efficiency),
        ("feature-based test uses the joker least", joker_parsimony),
        ("very-rare labels gain coverage", rare_label_coverage),
    ];
    let only: BTreeSet<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.strip_prefix("AC").and_then(|v| v.parse().ok()))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "AC{id:<2} {status} {name}: {} [{:.1}s]",
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
