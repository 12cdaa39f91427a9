//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line to
//! stderr (unbuffered by the test harness) and the test fails if any did.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use common::{dtw_brute, naive_rv, random_trace, sine};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rvrecon::dataset::{build_windows, window_starts};
use rvrecon::metrics::dtw;
use rvrecon::physio::{
    compute_rv, compute_rvt, detect_breath_peaks, screen_quality, DefectKind, QcThresholds,
};
use rvrecon::pipeline::{cross_validate, CvConfig, ScanInput};
use rvrecon::synth::{
    generate_corpus, generate_qc_corpus, label_matches, CorpusConfig, KernelKind,
};
use rvrecon::{AlignmentMode, Measure, RoiTimeseries, TargetSeries};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn rv_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (fs, tr, w) = (400.0, 0.8, 6.0);
    let mut worst = 0.0f64;
    for case in 0..100 {
        // Log-uniform lengths between 10^3 and 10^5 samples.
        let n = 10f64.powf(rng.gen_range(3.0..=5.0)).round() as usize;
        let t = random_trace(case, n, fs);
        let n_vol = ((n as f64 / fs) / tr).floor().max(1.0) as usize;
        let rv = compute_rv(&t, w, tr, n_vol).unwrap();
        for k in 0..n_vol {
            worst = worst.max((rv.values[k] - naive_rv(&t.samples, fs, 0.0, tr, w, k)).abs());
        }
    }
    let el = t0.elapsed();
    outcome(
        worst <= 1e-9 && within(el, 30.0),
        format!("max |diff| {worst:.2e}, {el:.1?}"),
    )
}

fn rvt_closed_form() -> Outcome {
    let t0 = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (amp, expected) in [(1.0, 0.5), (2.0, 1.0)] {
        let t = sine(amp, 4.0, 400.0, 400.0);
        let peaks = detect_breath_peaks(&t, 1.0, 0.1).unwrap();
        let rvt = compute_rvt(&t, &peaks, 0.8, 490).unwrap();
        // Skip the volumes whose interpolation runs off the first/last breath.
        let worst = rvt.values[10..480]
            .iter()
            .map(|v| (v - expected).abs() / expected)
            .fold(0.0, f64::max);
        pass &= worst <= 0.02;
        parts.push(format!("A={amp}: max rel err {worst:.2e}"));
    }
    let el = t0.elapsed();
    outcome(
        pass && within(el, 5.0),
        format!("{}, {el:.1?}", parts.join("; ")),
    )
}

fn dtw_exact() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut mismatches = 0;
    for _ in 0..500 {
        let a: Vec<f64> = (0..rng.gen_range(1..=8))
            .map(|_| rng.gen_range(-10.0..10.0))
            .collect();
        let b: Vec<f64> = (0..rng.gen_range(1..=8))
            .map(|_| rng.gen_range(-10.0..10.0))
            .collect();
        if dtw(&a, &b, None).unwrap() != dtw_brute(&a, &b) {
            mismatches += 1;
        }
    }
    let el = t0.elapsed();
    outcome(
        mismatches == 0 && within(el, 10.0),
        format!("{mismatches}/500 mismatches, {el:.1?}"),
    )
}

fn gradient_checks() -> Outcome {
    let t0 = Instant::now();
    const CASES: u64 = 64;
    let checks: [(&str, fn(u64) -> Result<(), String>); 4] = [
        ("conv", common::conv_gradcheck),
        ("dense", common::dense_gradcheck),
        ("relu", common::relu_gradcheck),
        ("tiny model", common::model_gradcheck),
    ];
    let mut failures = Vec::new();
    for (name, f) in checks {
        for seed in 0..CASES {
            if let Err(e) = f(seed * 7919 + 1) {
                failures.push(format!("{name} case {seed}: {e}"));
            }
        }
    }
    let el = t0.elapsed();
    let detail = match failures.first() {
        None => format!("4 x {CASES} cases within 1e-4, {el:.1?}"),
        Some(first) => format!("{} failures, first: {first}", failures.len()),
    };
    outcome(failures.is_empty() && within(el, 60.0), detail)
}

fn window_bookkeeping() -> Outcome {
    let n = 478;
    let roi = RoiTimeseries {
        scan_id: "s".into(),
        subject_id: None,
        data: ndarray::Array2::zeros((n, 2)),
        tr_seconds: 0.8,
        roi_names: RoiTimeseries::default_names(2),
    };
    let target = TargetSeries {
        scan_id: "s".into(),
        measure: Measure::Rv,
        values: (0..n).map(|k| k as f64).collect(),
        tr_seconds: 0.8,
        n_volumes: n,
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for w in [16, 32, 64] {
        let ds = build_windows(&roi, &target, w, AlignmentMode::Middle).unwrap();
        let first = ds.target_volume_indices()[0];
        let starts = window_starts(n, w, AlignmentMode::Middle).unwrap();
        pass &= ds.len() == n - w
            && first == w / 2
            && ds.targets()[0] == first as f64
            && starts.len() == n - w;
        parts.push(format!(
            "w={w}: {} examples, first target {first}",
            ds.len()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn synthetic_corpus(kernel: KernelKind, n_scans: usize) -> Vec<ScanInput> {
    let cfg = CorpusConfig {
        n_scans,
        kernel,
        seed: 1,
        ..CorpusConfig::default()
    };
    generate_corpus(&cfg)
        .unwrap()
        .into_iter()
        .map(ScanInput::from)
        .collect()
}

/// Default architecture and 10 folds; epochs and example thinning are cut
/// down so the whole suite fits in a few minutes on one core.
fn quick_cv(alignment: AlignmentMode) -> CvConfig {
    let mut cfg = CvConfig {
        alignment,
        train_stride: 8,
        ..CvConfig::default()
    };
    cfg.hyper.epochs = 3;
    cfg
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn run_recovery() -> (f64, Vec<u8>, Duration) {
    let t0 = Instant::now();
    let scans = synthetic_corpus(KernelKind::Gamma, 50);
    let res = cross_validate(&scans, &quick_cv(AlignmentMode::Middle)).unwrap();
    let mut stream = Vec::new();
    res.write_stream(&mut stream).unwrap();
    (median(res.pearson_values()), stream, t0.elapsed())
}

fn alignment_direction() -> Outcome {
    let scans = synthetic_corpus(KernelKind::Symmetric, 30);
    let run = |a| {
        median(
            cross_validate(&scans, &quick_cv(a))
                .unwrap()
                .pearson_values(),
        )
    };
    let (mid, end) = (run(AlignmentMode::Middle), run(AlignmentMode::End));
    outcome(
        mid - end >= 0.0,
        format!("middle {mid:.3}, end {end:.3}, margin {:+.3}", mid - end),
    )
}

fn qc_corpus() -> Outcome {
    let cases = generate_qc_corpus(25, 2024).unwrap();
    let thr = QcThresholds::default();
    let mut correct = 0;
    let mut flat_partial_missed = 0;
    for c in &cases {
        let ok = label_matches(c.label, &screen_quality(&c.trace, &thr).unwrap());
        correct += ok as usize;
        if !ok
            && matches!(
                c.label,
                Some(DefectKind::Flatline | DefectKind::PartialRecording)
            )
        {
            flat_partial_missed += 1;
        }
    }
    let acc = correct as f64 / cases.len() as f64;
    outcome(
        acc >= 0.95 && flat_partial_missed == 0,
        format!(
            "{correct}/{} correct ({:.1}%), flatline/partial misses {flat_partial_missed}",
            cases.len(),
            100.0 * acc
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 RV matches the naive oracle", rv_oracle()),
        ("2 RVT closed form", rvt_closed_form()),
        ("3 DTW exact against path enumeration", dtw_exact()),
        ("4 gradient checks", gradient_checks()),
        ("5 window bookkeeping", window_bookkeeping()),
    ];
    let (r1, stream1, el1) = run_recovery();
    results.push((
        "6 synthetic end-to-end recovery",
        outcome(
            r1 >= 0.8 && within(el1, 900.0),
            format!("median held-out r {r1:.3}, {el1:.1?}"),
        ),
    ));
    results.push(("7 middle alignment >= end alignment", alignment_direction()));
    results.push(("8 QC corpus", qc_corpus()));
    let (_, stream2, _) = run_recovery();
    results.push((
        "9 deterministic metric stream",
        outcome(
            stream1 == stream2,
            format!("{} bytes, identical: {}", stream1.len(), stream1 == stream2),
        ),
    ));

    let mut err = std::io::stderr().lock();
    let mut failed = Vec::new();
    for (name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        writeln!(err, "{tag} criterion {name}: {}", o.detail).unwrap();
        if !o.pass {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
