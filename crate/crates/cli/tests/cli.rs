use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rvrecon::physio::RespiratoryTrace;

const SMALL_MODEL: [&str; 10] = [
    "--set",
    "run.window_size=16",
    "--set",
    "run.k_folds=3",
    "--set",
    "optimizer.epochs=2",
    "--set",
    "model.conv=[{out_channels=4,kernel_size=5,stride=1,activation=\"relu\"}]",
    "--set",
    "model.head=[8,1]",
];

fn rvrecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rvrecon"))
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_trace(path: &Path, samples: Vec<f64>, fs: f64) {
    let t = RespiratoryTrace::new("t", samples, fs).unwrap();
    let mut buf = Vec::new();
    t.write_text(&mut buf).unwrap();
    std::fs::write(path, buf).unwrap();
}

fn sine(amp: f64, period: f64, seconds: f64, fs: f64) -> Vec<f64> {
    (0..(seconds * fs) as usize)
        .map(|i| amp * (2.0 * PI * i as f64 / fs / period).sin())
        .collect()
}

/// Six small synthetic scans with a manifest.
fn small_corpus(dir: &Path) -> PathBuf {
    let out = dir.join("corpus");
    let o = rvrecon(&[
        "synth",
        "--n-scans",
        "6",
        "--out",
        p(&out),
        "--seed",
        "3",
        "--set",
        "synth.n_volumes=120",
        "--set",
        "synth.n_rois=8",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.join("manifest.tsv")
}

fn target_values(text: &str) -> Vec<f64> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn synth_writes_triplets_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_corpus(dir.path());
    let text = std::fs::read_to_string(&manifest).unwrap();
    assert_eq!(text.lines().count(), 7);
    let corpus = manifest.parent().unwrap();
    for ext in ["trace.txt", "roi.txt", "events.jsonl"] {
        assert!(corpus.join(format!("scan_005.{ext}")).exists());
    }
    let again = dir.path().join("again");
    let o = rvrecon(&[
        "synth",
        "--n-scans",
        "6",
        "--out",
        p(&again),
        "--seed",
        "3",
        "--set",
        "synth.n_volumes=120",
        "--set",
        "synth.n_rois=8",
    ]);
    assert_eq!(code(&o), 0);
    for f in ["scan_002.roi.txt", "scan_002.trace.txt", "manifest.tsv"] {
        assert_eq!(
            std::fs::read(corpus.join(f)).unwrap(),
            std::fs::read(again.join(f)).unwrap()
        );
    }

    let empty = dir.path().join("empty");
    let o = rvrecon(&["synth", "--n-scans", "0", "--out", p(&empty)]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        std::fs::read_to_string(empty.join("manifest.tsv"))
            .unwrap()
            .lines()
            .count(),
        1
    );
}

#[test]
fn qc_reports_each_file_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    let good = dir.path().join("good.txt");
    write_trace(&good, sine(1.0, 4.0, 120.0, 100.0), 100.0);
    files.push(good);
    for i in 0..7 {
        let f = dir.path().join(format!("flat{i}.txt"));
        write_trace(&f, vec![0.5; 12000], 100.0);
        files.push(f);
    }
    let args: Vec<&str> = std::iter::once("qc")
        .chain(files.iter().map(|f| p(f)))
        .collect();
    let o = rvrecon(&args);
    assert_eq!(code(&o), 0);
    let lines: Vec<serde_json::Value> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 9);
    assert_eq!(lines[1]["verdict"], "unusable");
    assert_eq!(lines[1]["defects"][0], "flatline");
    let summary = &lines[8];
    assert_eq!(summary["record"], "qc_summary");
    assert_eq!(summary["usable_fraction"], 0.125);

    let missing = dir.path().join("missing.txt");
    let o = rvrecon(&["qc", p(&files[0]), p(&missing)]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("qc_error"));
    assert_eq!(code(&rvrecon(&["qc"])), 2);
}

#[test]
fn extract_closed_form_and_qc_block() {
    let dir = tempfile::tempdir().unwrap();
    let sin = dir.path().join("sine.txt");
    write_trace(&sin, sine(1.0, 4.0, 400.0, 400.0), 400.0);
    let o = rvrecon(&[
        "extract",
        p(&sin),
        "--measure",
        "rvt",
        "--tr",
        "0.8",
        "--volumes",
        "490",
    ]);
    assert_eq!(code(&o), 0);
    let v = target_values(&stdout(&o));
    assert_eq!(v.len(), 490);
    // 2A/T for A = 1, T = 4 s.
    assert!(v[10..480].iter().all(|x| (x - 0.5).abs() <= 0.01));

    let flat = dir.path().join("flat.txt");
    write_trace(&flat, vec![2.0; 4000], 100.0);
    assert_eq!(code(&rvrecon(&["extract", p(&flat), "--measure", "rv"])), 3);
    let out = dir.path().join("rv.txt");
    let o = rvrecon(&[
        "extract",
        p(&flat),
        "--measure",
        "rv",
        "--force",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0);
    let v = target_values(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(v.len(), 50);
    assert!(v.iter().all(|x| *x == 0.0));
}

fn train(manifest: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", p(manifest), "--out", p(out)];
    args.extend_from_slice(&SMALL_MODEL);
    args.extend_from_slice(extra);
    rvrecon(&args)
}

fn records(path: &Path, kind: &str) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|v| v["record"] == kind)
        .collect()
}

#[test]
fn train_eval_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_corpus(dir.path());
    let run = dir.path().join("run");
    let o = train(&manifest, &run, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in 0..3 {
        assert!(run.join(format!("fold_{f:02}.weights")).exists());
        assert!(run.join(format!("fold_{f:02}.meta.json")).exists());
    }
    let stream = run.join("metrics.jsonl");
    assert_eq!(records(&stream, "fold_summary").len(), 4);
    assert_eq!(records(&stream, "metric").len(), 6);
    assert!(run.join("reconstructions/scan_000.txt").exists());

    let rerun = dir.path().join("rerun");
    assert_eq!(code(&train(&manifest, &rerun, &[])), 0);
    assert_eq!(
        std::fs::read(&stream).unwrap(),
        std::fs::read(rerun.join("metrics.jsonl")).unwrap()
    );

    let end = dir.path().join("end");
    assert_eq!(
        code(&train(&manifest, &end, &["--set", "run.alignment=end"])),
        0
    );
    let counts = |p: &Path| -> Vec<u64> {
        records(p, "fold")
            .iter()
            .map(|r| r["n_train_examples"].as_u64().unwrap())
            .collect()
    };
    assert_eq!(counts(&stream), counts(&end.join("metrics.jsonl")));

    let o = rvrecon(&["report", p(&stream)]);
    assert_eq!(code(&o), 0);
    let table = stdout(&o);
    let header = table.lines().next().unwrap();
    for m in ["mae", "mse", "r_squared", "pearson_r", "dtw"] {
        assert!(header.contains(m));
    }
    assert_eq!(table.lines().filter(|l| l.contains("median")).count(), 4);

    let weights = run.join("fold_01.weights");
    let o = rvrecon(&["eval", p(&manifest), "--weights", p(&weights)]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert_eq!(
        out.lines()
            .filter(|l| l.contains("\"record\":\"metric\""))
            .count(),
        6
    );
    assert!(out
        .lines()
        .all(|l| !l.contains("\"record\":\"metric\"") || l.contains("\"fold\":1")));
}

#[test]
fn data_mismatch_and_divergence_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_corpus(dir.path());
    let corpus = manifest.parent().unwrap();

    // A model trained on 8 ROIs cannot score a 5-ROI scan.
    let run = dir.path().join("run");
    assert_eq!(code(&train(&manifest, &run, &[])), 0);
    let other = dir.path().join("other");
    let o = rvrecon(&[
        "synth",
        "--n-scans",
        "2",
        "--out",
        p(&other),
        "--set",
        "synth.n_volumes=120",
        "--set",
        "synth.n_rois=5",
    ]);
    assert_eq!(code(&o), 0);
    let o = rvrecon(&[
        "eval",
        p(&other.join("manifest.tsv")),
        "--weights",
        p(&run.join("fold_00.weights")),
    ]);
    assert_eq!(code(&o), 4);

    // Manifest row pointing at another scan's files.
    let text = std::fs::read_to_string(&manifest).unwrap();
    let swapped = text.replacen("scan_000.roi.txt", "scan_001.roi.txt", 1);
    let bad = corpus.join("bad.tsv");
    std::fs::write(&bad, swapped).unwrap();
    assert_eq!(code(&train(&bad, &dir.path().join("bad"), &[])), 4);

    let o = train(
        &manifest,
        &dir.path().join("diverged"),
        &["--set", "optimizer.lr=1e300"],
    );
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn report_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "{\"record\":\"config\"}\n").unwrap();
    let o = rvrecon(&["report", p(&empty)]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "no reports");

    let broken = dir.path().join("broken.jsonl");
    std::fs::write(&broken, "{\"record\":\"metric\"\n").unwrap();
    assert_eq!(code(&rvrecon(&["report", p(&broken)])), 2);

    let partial = dir.path().join("partial.jsonl");
    let metric = |id: &str, r: &str| {
        format!(
            "{{\"record\":\"metric\",\"fold\":0,\"scan_id\":\"{id}\",\"measure\":\"rv\",\"alignment\":\"middle\",\
             \"n_points\":10,\"mae\":0.1,\"mse\":0.01,\"r_squared\":{r},\"pearson_r\":{r},\"dtw\":2.0}}\n"
        )
    };
    std::fs::write(&partial, metric("a", "0.5") + &metric("b", "null")).unwrap();
    let o = rvrecon(&["report", p(&partial)]);
    assert_eq!(code(&o), 0);
    let excluded = stdout(&o)
        .lines()
        .find(|l| l.starts_with("all") && l.contains("excluded"))
        .unwrap()
        .split_whitespace()
        .skip(2)
        .collect::<Vec<_>>()
        .join(" ");
    assert_eq!(excluded, "0 0 1 1 0");
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[run]\nwindow_size = 32\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rvrecon"))
        .args([
            "--config",
            p(&cfg),
            "--set",
            "run.alignment=end",
            "report",
            p(&cfg),
        ])
        .output()
        .unwrap();
    let echo = String::from_utf8(o.stderr).unwrap();
    assert!(echo.contains("window_size = 32"));
    assert!(echo.contains("alignment = \"end\""));
    assert!(echo.contains("epochs = 50"), "defaults are materialised");

    std::fs::write(&cfg, "[run]\nwindow_sise = 32\n").unwrap();
    assert_eq!(
        code(&rvrecon(&["--config", p(&cfg), "synth", "--n-scans", "0"])),
        2
    );
}
