use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsac_cli::{ablate_datasize, load_data, train_eval, RunConfig, SampleCount};
use rsac_core::metrics::read_report;
use rsac_core::{EvalReport, RankPolicy, ReportFormat};

fn write_idx(dir: &Path, prefix: &str, images: &[u8], labels: &[u8], side: u32) {
    let n = labels.len() as u32;
    let mut img = Vec::new();
    for v in [0x803u32, n, side, side] {
        img.extend(v.to_be_bytes());
    }
    img.extend(images);
    fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), img).unwrap();
    let mut lab = Vec::new();
    for v in [0x801u32, n] {
        lab.extend(v.to_be_bytes());
    }
    lab.extend(labels);
    fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), lab).unwrap();
}

/// A 4×4 ten-class dataset under `<root>/toy`. `tiny_class` gets a single
/// training sample.
fn toy_root(per_class: usize, tiny_class: Option<u8>) -> tempfile::TempDir {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("toy");
    fs::create_dir(&dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (prefix, n) in [("train", per_class), ("t10k", per_class / 2)] {
        let (mut images, mut labels) = (Vec::new(), Vec::new());
        for i in 0..n * 10 {
            let c = (i % 10) as u8;
            if prefix == "train" && Some(c) == tiny_class && i >= 10 {
                continue;
            }
            labels.push(c);
            for p in 0..16 {
                let bright = p % 10 == c as usize || (p * 3) % 10 == c as usize;
                images.push(if bright { 140 } else { 30 } + rng.gen_range(0..90));
            }
        }
        write_idx(&dir, prefix, &images, &labels, 4);
    }
    root
}

fn rsac(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsac"))
        .args(args)
        .env("RSAC_DATA_ROOT", root)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TOY: [&str; 4] = ["--dataset", "toy", "--k", "6"];

fn args<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(&TOY).chain(tail).copied().collect()
}

#[test]
fn usage_errors_exit_1() {
    let root = toy_root(20, None);
    assert_eq!(code(&rsac(&["--help"], root.path())), 0);
    assert_eq!(code(&rsac(&["train-eval", "--no-such-flag"], root.path())), 1);
    assert_eq!(code(&rsac(&["train-eval", "--k", "5", "--t", "0.9"], root.path())), 1);
    assert_eq!(code(&rsac(&["train-eval", "--dataset", "toy"], root.path())), 1);
    assert_eq!(code(&rsac(&args(&["train-eval"], &["--tasks", "3"]), root.path())), 1);
    assert_eq!(code(&rsac(&args(&["train-eval"], &["--alpha", "-1"]), root.path())), 1);
    assert_eq!(code(&rsac(&["train-eval", "--dataset", "toy", "--t", "1.5"], root.path())), 1);
}

#[test]
fn missing_data_exits_2_with_sources() {
    let empty = tempfile::tempdir().unwrap();
    let out = rsac(&["train-eval", "--dataset", "fashion"], empty.path());
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("zalandoresearch/fashion-mnist"), "{err}");
    assert!(err.contains("t10k"), "{err}");
}

#[test]
fn singular_covariance_exits_3() {
    let root = toy_root(20, Some(4));
    let out = rsac(&args(&["train-eval"], &["--alpha", "0"]), root.path());
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("singular"));
}

fn report(root: &Path, extra: &[&str], name: &str) -> (EvalReport, String) {
    let path = root.join(name);
    let p = path.to_str().unwrap();
    let out = rsac(&args(&["train-eval"], &[&["--output", p], extra].concat()), root);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let format = if name.ends_with(".csv") { ReportFormat::Csv } else { ReportFormat::Json };
    (read_report(format, &path).unwrap(), fs::read_to_string(&path).unwrap())
}

fn mask_timing(json: &str) -> String {
    json.lines().filter(|l| !l.contains("_seconds")).collect::<Vec<_>>().join("\n")
}

#[test]
fn train_eval_is_deterministic_and_writes_artifacts() {
    let root = toy_root(30, None);
    let r = root.path();
    let pgm = r.join("confusion.pgm");
    let manifest = r.join("schedule.txt");
    let (a, text_a) = report(
        r,
        &["--confusion-pgm", pgm.to_str().unwrap(), "--schedule-out", manifest.to_str().unwrap()],
        "a.json",
    );
    let (b, text_b) = report(r, &["--threads", "1"], "b.json");
    assert_eq!(mask_timing(&text_a), mask_timing(&text_b));
    assert_eq!(a.confusion, b.confusion);
    assert!(a.accuracy > 0.9, "{}", a.accuracy);
    assert_eq!(a.evaluated, 150);
    assert_eq!(a.memory.total_vectors, 70);
    assert!(fs::read_to_string(&pgm).unwrap().starts_with("P2\n10 10\n"));
    assert!(fs::read_to_string(&manifest).unwrap().starts_with("# protocol=class-incremental group_size=2 tasks=5"));

    let (c, _) = report(r, &["--format", "csv"], "c.csv");
    assert_eq!(c.confusion, a.confusion);
    assert_eq!(c.accuracy.to_bits(), a.accuracy.to_bits());
}

#[test]
fn one_task_equals_five() {
    let root = toy_root(30, None);
    let (five, _) = report(root.path(), &[], "five.json");
    let (one, _) = report(root.path(), &["--tasks", "1"], "one.json");
    assert!(one.accuracy >= five.accuracy - 1e-9);
    assert_eq!(one.confusion, five.confusion);
    let (data, _) = report(root.path(), &["--protocol", "data-incremental", "--tasks", "3"], "data.json");
    assert_eq!(data.protocol, "data-incremental");
    assert_eq!(data.config.tasks, 3);
}

#[test]
fn bank_round_trip_through_the_binary() {
    let root = toy_root(30, None);
    let r = root.path();
    let bank = r.join("toy.rsac");
    let bank_s = bank.to_str().unwrap();
    let (trained, _) = report(r, &["--save-bank", bank_s], "trained.json");

    let out = rsac(&["bank", "inspect", bank_s], r);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("classes 10"), "{text}");
    assert!(text.contains("stored vectors 70"), "{text}");

    let loaded = r.join("loaded.json");
    let out = rsac(&args(&["bank", "load", bank_s], &["--output", loaded.to_str().unwrap()]), r);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let loaded = read_report(ReportFormat::Json, &loaded).unwrap();
    assert_eq!(loaded.confusion, trained.confusion);

    let saved = r.join("saved.rsac");
    let out = rsac(&args(&["bank", "save", saved.to_str().unwrap()], &[]), r);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read(&saved).unwrap(), fs::read(&bank).unwrap());

    let bytes = fs::read(&bank).unwrap();
    fs::write(&bank, &bytes[..bytes.len() - 5]).unwrap();
    let out = rsac(&["bank", "inspect", bank_s], r);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("corrupt bank"));
}

#[test]
fn ablations_emit_tables() {
    let root = toy_root(30, None);
    let r = root.path();
    let out = rsac(&args(&["ablate-threshold"], &["--thresholds", "0.9"]), r);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "t,k_min,k_mean,k_max,accuracy,accuracy_per_class_k");
    assert!(lines[1].starts_with("0.9,"));

    let csv = r.join("sizes.csv");
    let out = rsac(&args(&["ablate-datasize"], &["--counts", "5,full", "--output", csv.to_str().unwrap()]), r);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("5,50,") && rows[1].starts_with("full,300,"), "{text}");

    assert_eq!(code(&rsac(&args(&["ablate-datasize"], &["--counts", "500"]), r)), 2);
    assert_eq!(code(&rsac(&args(&["ablate-datasize"], &["--counts", "full,5"]), r)), 1);
    assert_eq!(code(&rsac(&args(&["ablate-threshold"], &["--thresholds", "0"]), r)), 1);
}

#[test]
fn full_count_matches_train_eval() {
    let root = toy_root(30, None);
    let cfg = RunConfig {
        rank: RankPolicy::FixedK(6),
        ..RunConfig::for_dataset("mnist", root.path()).unwrap()
    };
    let cfg = RunConfig {
        dataset: "toy".into(),
        ..cfg
    };
    let data = load_data(&cfg).unwrap();
    let direct = train_eval(&cfg, &data).unwrap().report;
    let rows = ablate_datasize(&cfg, &data, &[SampleCount::PerClass(10), SampleCount::Full]).unwrap();
    assert_eq!(rows[1].accuracy.to_bits(), direct.accuracy.to_bits());
    assert_eq!(rows[0].train_samples, 100);
}
