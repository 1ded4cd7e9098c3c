//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints exactly one PASS or FAIL line, even when it passes.
//!
//! Set `BLB_ACCEPTANCE=1,7` to run a subset.

use std::time::Instant;

use blb::{
    compute_ground_truth, run_blb, run_blb_adaptive, run_bootstrap, run_experiment, run_method,
    DataGeneratingSpec, Method, ProcedureCell, ProcedureOutput,
};
use blb_core::resample::{draw_subset, resample_classical, resample_weighted};
use blb_core::{
    estimate, estimate_full, has_converged, mean_width, AdaptiveParams, DataMatrix, EstimatorSpec,
    MetricSpec, ProcedureConfig, QualitySummary, ResampleFlavor, StreamKey, SubsampleMode,
    SubsetSize, SummarySeries, WeightedSample,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<(bool, String), String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

const DATA_SEED: u64 = 1;
const TRUTH_SEED: u64 = 1;
const DATASETS_SEED: u64 = 2;
const PROCEDURE_SEED: u64 = 3;

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "analytic width of the mean", analytic_mean_width),
        (2, "weighted equals expanded", weighted_equals_expanded),
        (3, "distinct points", distinct_points),
        (
            4,
            "classification ordering at n=5000",
            classification_ordering,
        ),
        (5, "gamma=0.5 error trend in n", error_trend_in_n),
        (6, "convergence check", convergence_check),
        (7, "adaptive agrees with fixed", adaptive_agrees_with_fixed),
        (8, "(r, s) grid at n=2000", rs_grid),
        (9, "determinism across workers", determinism_across_workers),
        (10, "standard error metric", stderr_metric),
    ];
    let only: Option<Vec<u32>> = std::env::var("BLB_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|c| c.trim().parse().ok()).collect());

    let mut failed = Vec::new();
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match std::panic::catch_unwind(check) {
            Ok(Ok(result)) => result,
            Ok(Err(message)) => (false, format!("error: {message}")),
            Err(_) => (false, "panicked".to_string()),
        };
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {verdict} {name} ({:.1}s): {detail}",
            start.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn gaussian_data(n: usize, seed: u64) -> DataMatrix {
    let mut rng = StreamKey::root(seed).rng();
    let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    DataMatrix::new(1, xs, None).unwrap()
}

fn mean_setup(subset_size: SubsetSize) -> ProcedureConfig {
    ProcedureConfig {
        subset_size,
        s: 5,
        r: 100,
        seed: PROCEDURE_SEED,
        ..Default::default()
    }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target
}

fn analytic_mean_width() -> Outcome {
    let n = 10_000;
    let data = gaussian_data(n, DATA_SEED);
    let est = EstimatorSpec::weighted_mean();
    let metric = MetricSpec::marginal_ci(0.95).map_err(err)?;
    // Normal(0, 1) mean: the 95% interval is +-1.96 / sqrt(n).
    let analytic = 2.0 * 1.96 / (n as f64).sqrt();
    let runs = [
        ("blb", Method::Blb, SubsetSize::Exponent(0.7)),
        ("boot", Method::Bootstrap, SubsetSize::Exponent(0.7)),
        ("bofn", Method::Bofn, SubsetSize::Explicit(100)),
        (
            "subsampling",
            Method::Subsampling,
            SubsetSize::Explicit(100),
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, method, size) in runs {
        let out = run_method(method, &data, &est, &metric, &mean_setup(size)).map_err(err)?;
        let width = mean_width(&out.summary).map_err(err)?;
        pass &= within(width, analytic, 0.15);
        parts.push(format!("{name} {width:.5}"));
    }
    Ok((
        pass,
        format!("analytic {analytic:.5}; {}", parts.join(", ")),
    ))
}

fn expand(data: &DataMatrix, sample: &WeightedSample) -> DataMatrix {
    let mut rows = Vec::new();
    let mut response = data.response().map(|_| Vec::new());
    for (i, w) in sample.iter() {
        for _ in 0..w {
            rows.push(data.row(i).to_vec());
            if let (Some(out), Some(y)) = (response.as_mut(), data.response()) {
                out.push(y[i]);
            }
        }
    }
    DataMatrix::from_rows(&rows, response).unwrap()
}

fn agree_to_digits(a: &[f64], b: &[f64], digits: i32) -> bool {
    let tol = 10f64.powi(-digits);
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()))
}

fn weighted_equals_expanded() -> Outcome {
    let mut rng = StreamKey::root(DATA_SEED).child(2).rng();
    let estimators = [
        ("mean", EstimatorSpec::weighted_mean()),
        ("least squares", EstimatorSpec::least_squares()),
        ("logistic", EstimatorSpec::logistic()),
    ];
    let mut mismatches = Vec::new();
    let mut worst: f64 = 0.0;
    for instance in 0..20 {
        let n = rng.random_range(50..=200);
        let d = rng.random_range(1..=5);
        let mut xs = Vec::with_capacity(n * d);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let eta: f64 = 0.5 * row.iter().sum::<f64>();
            ys.push(f64::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp())));
            xs.extend(row);
        }
        let data = DataMatrix::new(d, xs, Some(ys)).map_err(err)?;
        let weights: Vec<u64> = (0..n).map(|_| rng.random_range(0..=10)).collect();
        let total = weights.iter().sum();
        let sample = WeightedSample::new((0..n).collect(), weights, total).map_err(err)?;
        let expanded = expand(&data, &sample);
        for (name, est) in &estimators {
            let a = estimate(est, &data, &sample)
                .map_err(|e| format!("instance {instance} {name}: {e}"))?;
            let b = estimate_full(est, &expanded)
                .map_err(|e| format!("instance {instance} {name}: {e}"))?;
            for (x, y) in a.values().iter().zip(b.values()) {
                worst = worst.max((x - y).abs() / x.abs().max(y.abs()));
            }
            if !agree_to_digits(a.values(), b.values(), 10) {
                mismatches.push(format!("instance {instance} {name}"));
            }
        }
    }
    Ok((
        mismatches.is_empty(),
        format!("60 comparisons, worst relative difference {worst:.1e}, mismatches {mismatches:?}"),
    ))
}

fn distinct_points() -> Outcome {
    let n = 10_000;
    let data = gaussian_data(n, DATA_SEED);
    let b = SubsetSize::Exponent(0.7).resolve(n).map_err(err)?;

    let root = StreamKey::root(PROCEDURE_SEED);
    let mut max_blb = 0;
    for j in 0..10u64 {
        let subset = draw_subset(n, b, &mut root.child(j).rng()).map_err(err)?;
        for k in 0..100u64 {
            let mut rng = root.child(j).child(k + 1).rng();
            let sample =
                resample_weighted(&subset, n as u64, ResampleFlavor::Multinomial, &mut rng)
                    .map_err(err)?;
            max_blb = max_blb.max(sample.distinct_rows());
        }
    }
    let driver = run_blb(
        &data,
        &EstimatorSpec::weighted_mean(),
        &MetricSpec::default(),
        &ProcedureConfig {
            s: 10,
            ..mean_setup(SubsetSize::Exponent(0.7))
        },
    )
    .map_err(err)?;

    let mut fraction = 0.0;
    for k in 0..200u64 {
        let sample = resample_classical(&data, &mut root.child(1000 + k).rng()).map_err(err)?;
        fraction += sample.distinct_rows() as f64 / n as f64;
    }
    fraction /= 200.0;
    // P(row drawn at least once) = 1 - (1 - 1/n)^n.
    let expected = 1.0 - (1.0 - 1.0 / n as f64).powi(n as i32);

    let pass = max_blb <= b
        && driver.stats.max_distinct_rows <= b
        && driver.stats.resamples == 1000
        && (fraction - 0.632).abs() <= 0.01;
    Ok((
        pass,
        format!(
            "b {b}; max distinct over 1000 resamples {max_blb} (driver {}); \
             bootstrap distinct fraction {fraction:.4} (exact expectation {expected:.4})",
            driver.stats.max_distinct_rows
        ),
    ))
}

fn classification_spec() -> DataGeneratingSpec {
    "task=classification,features=student_t:3,d=10"
        .parse()
        .unwrap()
}

fn ridge_logistic() -> EstimatorSpec {
    EstimatorSpec::logistic().with_ridge(1e-4).unwrap()
}

fn cell(label: &str, method: Method, gamma: f64, s: usize) -> ProcedureCell {
    ProcedureCell {
        label: label.into(),
        method,
        config: ProcedureConfig {
            subset_size: SubsetSize::Exponent(gamma),
            s,
            r: 100,
            seed: PROCEDURE_SEED,
            ..Default::default()
        },
    }
}

fn classification_ordering() -> Outcome {
    let n = 5000;
    let spec = classification_spec();
    let est = ridge_logistic();
    let metric = MetricSpec::default();
    let truth = compute_ground_truth(&spec, n, 2000, &est, &metric, TRUTH_SEED, 0).map_err(err)?;
    let cells = [
        cell("blb-0.7", Method::Blb, 0.7, 20),
        cell("blb-0.5", Method::Blb, 0.5, 20),
        cell("bofn-0.5", Method::Bofn, 0.5, 1),
        cell("subsampling-0.5", Method::Subsampling, 0.5, 1),
    ];
    let report =
        run_experiment(&spec, n, &cells, &est, &metric, &truth, 5, DATASETS_SEED).map_err(err)?;
    if report.has_failures() {
        return Err(format!("procedure failures: {:?}", failures(&report)));
    }
    let (blb7, blb7_se) = final_error(&report, "blb-0.7")?;
    let (blb5, blb5_se) = final_error(&report, "blb-0.5")?;
    let (bofn, bofn_se) = final_error(&report, "bofn-0.5")?;
    let (sub, sub_se) = final_error(&report, "subsampling-0.5")?;
    let a = blb7 <= 0.1;
    let b = blb5 < bofn;
    // "No better than": not lower by more than one combined standard error.
    let c = sub >= bofn - bofn_se.hypot(sub_se);
    Ok((
        a && b && c,
        format!(
            "(a) {} blb-0.7 {blb7:.4} (se {blb7_se:.4}); (b) {} blb-0.5 {blb5:.3} (se {blb5_se:.3}) vs bofn-0.5 \
             {bofn:.3} (se {bofn_se:.3}); (c) {} subsampling-0.5 {sub:.3} (se {sub_se:.3})",
            mark(a),
            mark(b),
            mark(c)
        ),
    ))
}

/// Mean final relative error over realizations and its standard error.
fn final_error(report: &blb::ExperimentReport, label: &str) -> Result<(f64, f64), String> {
    let c = report
        .cell(label)
        .ok_or_else(|| format!("no cell {label}"))?;
    c.final_error_mean
        .zip(c.final_error_se)
        .ok_or_else(|| format!("{label}: no final error"))
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "fails"
    }
}

fn failures(report: &blb::ExperimentReport) -> Vec<String> {
    report
        .cells
        .iter()
        .flat_map(|c| {
            c.failures
                .iter()
                .map(move |f| format!("{}: {f:?}", c.label))
        })
        .collect()
}

fn error_trend_in_n() -> Outcome {
    let spec = classification_spec();
    let est = ridge_logistic();
    let metric = MetricSpec::default();
    let mut points = Vec::new();
    for n in [1000, 4000, 16_000] {
        let truth =
            compute_ground_truth(&spec, n, 2000, &est, &metric, TRUTH_SEED, 0).map_err(err)?;
        let cells = [cell("blb-0.5", Method::Blb, 0.5, 20)];
        let report = run_experiment(&spec, n, &cells, &est, &metric, &truth, 5, DATASETS_SEED)
            .map_err(err)?;
        if report.has_failures() {
            return Err(format!(
                "n {n}: procedure failures: {:?}",
                failures(&report)
            ));
        }
        let (mean, se) = final_error(&report, "blb-0.5")?;
        points.push((n, mean, se));
    }
    let pass = points
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + w[0].2.hypot(w[1].2));
    let detail = points
        .iter()
        .map(|(n, m, se)| format!("n {n}: {m:.3} (se {se:.3})"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((pass, detail))
}

fn series(xs: &[f64]) -> SummarySeries {
    SummarySeries::from_values(xs.iter().map(|&x| vec![x]).collect()).unwrap()
}

fn convergence_check() -> Outcome {
    let w = 4;
    let constant = has_converged(&series(&[2.5; 5]), w, 0.05).map_err(err)?;
    let small = has_converged(&series(&[1.0, 1.04, 1.0]), 2, 0.05).map_err(err)?;
    let large = has_converged(&series(&[1.0, 1.2, 1.0]), 2, 0.05).map_err(err)?;
    let examples = constant && small && !large;

    let strategy = (1usize..4, 1usize..25, 1usize..8).prop_flat_map(|(d, t, w)| {
        (
            proptest::collection::vec(proptest::collection::vec(0.5f64..1.5, d), t),
            Just(w),
            0.0f64..0.3,
            0.0f64..0.3,
        )
    });
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let monotone = runner.run(&strategy, |(values, w, e, de)| {
        let s = SummarySeries::from_values(values).unwrap();
        if has_converged(&s, w, e).unwrap() {
            prop_assert!(has_converged(&s, w, e + de).unwrap());
        }
        Ok(())
    });
    Ok((
        examples && monotone.is_ok(),
        format!(
            "constant {constant}, (1, 1.04, 1) {small}, (1, 1.2, 1) {large}; monotone over 1000 series: {}",
            match &monotone {
                Ok(()) => "holds".to_string(),
                Err(e) => e.to_string(),
            }
        ),
    ))
}

fn paper_adaptive() -> AdaptiveParams {
    AdaptiveParams {
        epsilon_r: 0.05,
        window_r: 20,
        epsilon_s: 0.05,
        window_s: 3,
        ..AdaptiveParams::default()
    }
}

fn adaptive_agrees_with_fixed() -> Outcome {
    let data = gaussian_data(10_000, DATA_SEED);
    let est = EstimatorSpec::weighted_mean();
    let metric = MetricSpec::default();
    let fixed_config = mean_setup(SubsetSize::Exponent(0.7));
    let fixed = run_blb(&data, &est, &metric, &fixed_config).map_err(err)?;
    let adaptive_config = ProcedureConfig {
        adaptive: Some(paper_adaptive()),
        ..fixed_config
    };
    let adaptive = run_blb_adaptive(&data, &est, &metric, &adaptive_config).map_err(err)?;
    let fixed_width = mean_width(&fixed.summary).map_err(err)?;
    let adaptive_width = mean_width(&adaptive.summary).map_err(err)?;
    let report = adaptive.selection.as_ref().ok_or("no selection report")?;
    let computed = adaptive.stats.resamples_computed;
    let pass = within(adaptive_width, fixed_width, 0.05) && computed < 500;
    Ok((
        pass,
        format!(
            "fixed width {fixed_width:.5}, adaptive {adaptive_width:.5} (ratio {:.4}); s {}, r {:?}; \
             resamples used {}, computed {computed}",
            adaptive_width / fixed_width,
            report.s,
            report.subsamples.iter().map(|s| s.r).collect::<Vec<_>>(),
            report.resamples_used
        ),
    ))
}

fn rs_grid() -> Outcome {
    let n = 2000;
    let spec = classification_spec();
    let est = ridge_logistic();
    let metric = MetricSpec::default();
    let truth = compute_ground_truth(&spec, n, 2000, &est, &metric, TRUTH_SEED, 0).map_err(err)?;
    let rs = [2, 5, 10, 20, 50, 100];
    let ss = [1, 2, 3, 5, 10, 20];
    let mut cells = Vec::new();
    for r in rs {
        for s in ss {
            let mut c = cell(&format!("r={r} s={s}"), Method::Blb, 0.7, s);
            c.config.r = r;
            cells.push(c);
        }
    }
    let report =
        run_experiment(&spec, n, &cells, &est, &metric, &truth, 5, DATASETS_SEED).map_err(err)?;
    if report.has_failures() {
        return Err(format!("procedure failures: {:?}", failures(&report)));
    }
    let mut errors = Vec::new();
    for c in &report.cells {
        errors.push((c.label.clone(), final_error(&report, &c.label)?.0));
    }
    let (min_label, min) = errors
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .unwrap();
    let mut offenders = Vec::new();
    for r in rs.iter().filter(|&&r| r >= 50) {
        for s in ss.iter().filter(|&&s| s >= 3) {
            let (error, _) = final_error(&report, &format!("r={r} s={s}"))?;
            if error > 1.5 * min {
                offenders.push(format!("r={r} s={s} {error:.3}"));
            }
        }
    }
    Ok((
        offenders.is_empty(),
        format!(
            "grid minimum {min:.4} at {min_label}, bound {:.4}; cells over the bound: {offenders:?}",
            1.5 * min
        ),
    ))
}

fn fingerprint(out: &ProcedureOutput) -> Vec<u64> {
    let mut bits: Vec<u64> = out.summary.flatten().iter().map(|x| x.to_bits()).collect();
    for step in out.trajectory.steps() {
        bits.extend(step.summary.flatten().iter().map(|x| x.to_bits()));
    }
    if let Some(sel) = &out.selection {
        bits.push(sel.s as u64);
        bits.extend(sel.subsamples.iter().map(|s| s.r as u64));
    }
    bits
}

fn determinism_across_workers() -> Outcome {
    let spec: DataGeneratingSpec = "task=classification,features=normal,d=3,seed=5"
        .parse()
        .unwrap();
    let data = blb::generate(&spec, 2000, &mut StreamKey::root(spec.seed).rng()).map_err(err)?;
    let est = EstimatorSpec::logistic();
    let ci = MetricSpec::default();
    let se = MetricSpec::stderr();
    let base = ProcedureConfig {
        s: 4,
        r: 30,
        seed: PROCEDURE_SEED,
        adaptive: Some(AdaptiveParams {
            window_r: 5,
            r_max: 60,
            window_s: 2,
            s_max: 8,
            ..paper_adaptive()
        }),
        ..Default::default()
    };
    let variants = [
        ("multinomial", base.clone()),
        (
            "poisson+partition",
            ProcedureConfig {
                resample_flavor: ResampleFlavor::Poisson,
                subsample_mode: SubsampleMode::DisjointPartition,
                ..base.clone()
            },
        ),
    ];
    let methods = [
        Method::Blb,
        Method::BlbAdaptive,
        Method::Bootstrap,
        Method::Bofn,
        Method::Subsampling,
    ];
    let mut checked = 0;
    let mut differing = Vec::new();
    for (variant, config) in &variants {
        for metric in [&ci, &se] {
            for method in methods {
                let mut reference = None;
                for workers in [1, 2, 8] {
                    let config = ProcedureConfig {
                        workers,
                        ..config.clone()
                    };
                    let out = run_method(method, &data, &est, metric, &config).map_err(err)?;
                    let print = fingerprint(&out);
                    match &reference {
                        None => reference = Some(print),
                        Some(r) if *r != print => {
                            differing.push(format!("{} {variant} workers {workers}", method.name()))
                        }
                        Some(_) => {}
                    }
                }
                checked += 1;
            }
        }
    }
    let truths: Vec<QualitySummary> = [1, 2, 8]
        .iter()
        .map(|&w| compute_ground_truth(&spec, 300, 20, &est, &ci, TRUTH_SEED, w).map(|t| t.summary))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    if truths.iter().any(|t| {
        t.flatten()
            .iter()
            .map(|x| x.to_bits())
            .ne(truths[0].flatten().iter().map(|x| x.to_bits()))
    }) {
        differing.push("ground truth".into());
    }
    Ok((
        differing.is_empty(),
        format!("{checked} driver configurations and ground truth at workers 1, 2, 8; differing: {differing:?}"),
    ))
}

fn stderr_metric() -> Outcome {
    let n = 10_000;
    let data = gaussian_data(n, DATA_SEED);
    let est = EstimatorSpec::weighted_mean();
    let stderr = MetricSpec::stderr();
    let analytic = 1.0 / (n as f64).sqrt();
    let config = mean_setup(SubsetSize::Exponent(0.7));
    let blb = run_blb(&data, &est, &stderr, &config).map_err(err)?;
    let boot = run_bootstrap(&data, &est, &stderr, &config).map_err(err)?;
    let value = |o: &ProcedureOutput| o.summary.values().unwrap()[0];
    let (blb_se, boot_se) = (value(&blb), value(&boot));

    let adaptive_config = ProcedureConfig {
        adaptive: Some(paper_adaptive()),
        ..config
    };
    let mean_r = |metric: &MetricSpec| -> Result<f64, String> {
        let out = run_blb_adaptive(&data, &est, metric, &adaptive_config).map_err(err)?;
        Ok(out.selection.ok_or("no selection report")?.mean_r())
    };
    let r_stderr = mean_r(&stderr)?;
    let r_ci = mean_r(&MetricSpec::default())?;

    let pass = within(blb_se, analytic, 0.15) && within(boot_se, analytic, 0.15) && r_stderr < r_ci;
    Ok((
        pass,
        format!(
            "analytic {analytic:.5}; blb {blb_se:.5}, boot {boot_se:.5}; adaptive mean r: stderr {r_stderr:.1}, ci {r_ci:.1}"
        ),
    ))
}
