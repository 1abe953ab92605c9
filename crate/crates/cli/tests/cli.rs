//! CLI behavior tests, driven through the real binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vbpr"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Generate a small corpus into `dir` and return the file names.
fn synth_corpus(dir: &Path, seed: u64) -> (String, String) {
    ok(
        &[
            "synth",
            "--users",
            "80",
            "--items",
            "60",
            "--feature-dim",
            "16",
            "--feedback-per-user",
            "8",
            "--seed",
            &seed.to_string(),
            "--out-feedback",
            "fb.tsv",
            "--out-features",
            "ft.tsv",
        ],
        dir,
    );
    ("fb.tsv".into(), "ft.tsv".into())
}

fn parse_report(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).expect("report is JSON")
}

#[test]
fn train_then_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    synth_corpus(dir.path(), 1);
    ok(
        &[
            "train", "--model", "bpr-mf", "--feedback", "fb.tsv", "--factors", "8", "--epochs",
            "5", "--seed", "7", "--out", "m.ckpt",
        ],
        dir.path(),
    );
    assert!(dir.path().join("m.ckpt").exists());
    assert!(dir.path().join("m.log.csv").exists());
    assert!(dir.path().join("m.manifest.json").exists());

    let out = ok(
        &[
            "evaluate",
            "--checkpoint",
            "m.ckpt",
            "--feedback",
            "fb.tsv",
        ],
        dir.path(),
    );
    let report = parse_report(&out.stdout);
    let auc = report["auc_all"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!(report["users_evaluated"].as_u64().unwrap() > 0);
}

#[test]
fn repeated_training_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    synth_corpus(dir.path(), 2);
    for out in ["a.ckpt", "b.ckpt"] {
        ok(
            &[
                "train", "--model", "vbpr", "--feedback", "fb.tsv", "--features", "ft.tsv",
                "--factors", "8", "--epochs", "4", "--seed", "5", "--out", out,
            ],
            dir.path(),
        );
    }
    let a = std::fs::read(dir.path().join("a.ckpt")).unwrap();
    let b = std::fs::read(dir.path().join("b.ckpt")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn vbpr_without_features_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    synth_corpus(dir.path(), 3);
    let out = run(
        &[
            "train", "--model", "vbpr", "--feedback", "fb.tsv", "--factors", "4", "--out",
            "x.ckpt",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("--features"),
        "error should name the missing flag, got: {stderr}"
    );
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["train", "--bogus"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn baseline_rand_is_near_half_and_mp_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    // larger corpus so the random baseline concentrates near 0.5
    ok(
        &[
            "synth",
            "--users",
            "400",
            "--items",
            "150",
            "--feature-dim",
            "16",
            "--feedback-per-user",
            "8",
            "--seed",
            "4",
            "--out-feedback",
            "fb.tsv",
            "--out-features",
            "ft.tsv",
        ],
        dir.path(),
    );
    let out = ok(
        &["evaluate", "--baseline", "rand", "--feedback", "fb.tsv", "--seed", "0"],
        dir.path(),
    );
    let auc = parse_report(&out.stdout)["auc_all"].as_f64().unwrap();
    assert!((auc - 0.5).abs() < 0.03, "rand auc_all = {auc}");

    let first = ok(
        &["evaluate", "--baseline", "mp", "--feedback", "fb.tsv", "--seed", "0"],
        dir.path(),
    );
    let second = ok(
        &["evaluate", "--baseline", "mp", "--feedback", "fb.tsv", "--seed", "0"],
        dir.path(),
    );
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn per_user_csv_has_one_row_per_evaluated_user() {
    let dir = tempfile::tempdir().unwrap();
    synth_corpus(dir.path(), 5);
    let out = ok(
        &[
            "evaluate",
            "--baseline",
            "mp",
            "--feedback",
            "fb.tsv",
            "--per-user",
            "per_user.csv",
        ],
        dir.path(),
    );
    let users = parse_report(&out.stdout)["users_evaluated"].as_u64().unwrap() as usize;
    let csv = std::fs::read_to_string(dir.path().join("per_user.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("user_index,user_id,auc,pairs"));
    assert_eq!(lines.count(), users);
}

#[test]
fn threads_do_not_change_the_report() {
    let dir = tempfile::tempdir().unwrap();
    synth_corpus(dir.path(), 6);
    ok(
        &[
            "train", "--model", "vbpr", "--feedback", "fb.tsv", "--features", "ft.tsv",
            "--factors", "6", "--epochs", "4", "--seed", "2", "--out", "m.ckpt",
        ],
        dir.path(),
    );
    let single = ok(
        &[
            "evaluate", "--checkpoint", "m.ckpt", "--feedback", "fb.tsv", "--features",
            "ft.tsv", "--threads", "1",
        ],
        dir.path(),
    );
    let multi = ok(
        &[
            "evaluate", "--checkpoint", "m.ckpt", "--feedback", "fb.tsv", "--features",
            "ft.tsv", "--threads", "4",
        ],
        dir.path(),
    );
    assert_eq!(single.stdout, multi.stdout);
}

#[test]
fn export_embeddings_match_library_projection() {
    let dir = tempfile::tempdir().unwrap();
    synth_corpus(dir.path(), 7);
    ok(
        &[
            "train", "--model", "vbpr", "--feedback", "fb.tsv", "--features", "ft.tsv",
            "--factors", "8", "--epochs", "4", "--seed", "3", "--out", "m.ckpt",
        ],
        dir.path(),
    );
    ok(
        &[
            "export-embeddings",
            "--checkpoint",
            "m.ckpt",
            "--features",
            "ft.tsv",
            "--feedback",
            "fb.tsv",
            "--out",
            "emb.csv",
        ],
        dir.path(),
    );

    let (_, params) = vbpr::checkpoint::load(dir.path().join("m.ckpt")).unwrap();
    let store = vbpr::load_features(dir.path().join("ft.tsv"), 16).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("emb.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines() {
        let mut parts = line.split(',');
        let id = parts.next().unwrap();
        let values: Vec<f64> = parts.map(|v| v.parse().unwrap()).collect();
        assert_eq!(values.len(), params.visual_dim());
        let expected = vbpr::models::project_features(&params, store.get(id).unwrap()).unwrap();
        for (a, b) in values.iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-12, "item {id}: {a} vs {b}");
        }
        rows += 1;
    }
    let data = vbpr::load_feedback(dir.path().join("fb.tsv")).unwrap();
    assert_eq!(rows, data.item_count());
}

#[test]
fn export_writes_zero_rows_for_featureless_items() {
    let dir = tempfile::tempdir().unwrap();
    // four items, features for only two
    std::fs::write(
        dir.path().join("fb.tsv"),
        "u1\ta\nu1\tb\nu1\tc\nu2\ta\nu2\tb\nu2\td\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("ft.tsv"), "a\t0:1.0\t1:0.5\nb\t1:2.0\n").unwrap();
    ok(
        &[
            "train", "--model", "vbpr", "--feedback", "fb.tsv", "--features", "ft.tsv",
            "--feature-dim", "2", "--factors", "2", "--epochs", "2", "--seed", "1",
            "--min-user-feedback", "3", "--out", "m.ckpt",
        ],
        dir.path(),
    );
    let out = ok(
        &[
            "export-embeddings",
            "--checkpoint",
            "m.ckpt",
            "--features",
            "ft.tsv",
            "--feedback",
            "fb.tsv",
            "--out",
            "emb.csv",
        ],
        dir.path(),
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("2 items had no feature vector"), "{stderr}");
    let csv = std::fs::read_to_string(dir.path().join("emb.csv")).unwrap();
    for featureless in ["c,", "d,"] {
        let row = csv.lines().find(|l| l.starts_with(featureless)).unwrap();
        for v in row.split(',').skip(1) {
            assert_eq!(v.parse::<f64>().unwrap(), 0.0);
        }
    }
}

#[test]
fn grid_sweeps_three_lambdas_and_selects_by_validation() {
    let dir = tempfile::tempdir().unwrap();
    synth_corpus(dir.path(), 8);
    let out = ok(
        &[
            "train", "--model", "bpr-mf", "--feedback", "fb.tsv", "--factors", "6",
            "--epochs", "4", "--seed", "4", "--grid", "--out", "m.ckpt",
        ],
        dir.path(),
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.matches("grid: lambda_theta=").count(), 3, "{stderr}");
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("m.manifest.json")).unwrap())
            .unwrap();
    assert!(manifest["config"]["grid_selected_lambda_theta"].is_number());
}

#[test]
fn evaluate_rejects_corpus_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    synth_corpus(dir.path(), 9);
    ok(
        &[
            "train", "--model", "bpr-mf", "--feedback", "fb.tsv", "--factors", "4",
            "--epochs", "2", "--seed", "1", "--out", "m.ckpt",
        ],
        dir.path(),
    );
    // different corpus: different seed -> different item universe size is
    // not guaranteed, so evaluate against a truncated feedback file
    let fb = std::fs::read_to_string(dir.path().join("fb.tsv")).unwrap();
    let half: Vec<&str> = fb.lines().take(fb.lines().count() / 2).collect();
    std::fs::write(dir.path().join("fb2.tsv"), half.join("\n")).unwrap();
    let out = run(
        &["evaluate", "--checkpoint", "m.ckpt", "--feedback", "fb2.tsv"],
        dir.path(),
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("mismatch"), "{stderr}");
}

#[test]
fn feature_dimension_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    synth_corpus(dir.path(), 10);
    ok(
        &[
            "train", "--model", "vbpr", "--feedback", "fb.tsv", "--features", "ft.tsv",
            "--factors", "6", "--epochs", "2", "--seed", "1", "--out", "m.ckpt",
        ],
        dir.path(),
    );
    // a feature file with coordinates beyond the checkpoint's dimension
    let mut big = String::new();
    for line in std::fs::read_to_string(dir.path().join("fb.tsv")).unwrap().lines() {
        let item = line.split('\t').nth(1).unwrap();
        big.push_str(&format!("{item}\t30:1.0\n"));
    }
    std::fs::write(dir.path().join("big.tsv"), big).unwrap();
    let out = run(
        &[
            "evaluate", "--checkpoint", "m.ckpt", "--feedback", "fb.tsv", "--features",
            "big.tsv",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
}

#[test]
fn manifest_records_digests_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    synth_corpus(dir.path(), 11);
    ok(
        &[
            "train", "--model", "bpr-mf", "--feedback", "fb.tsv", "--factors", "4",
            "--epochs", "2", "--seed", "77", "--out", "m.ckpt",
        ],
        dir.path(),
    );
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("m.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 77);
    let digest = manifest["input_digests"]["feedback"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    assert!(digest.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn duplicate_feedback_lines_collapse() {
    let dir = tempfile::tempdir().unwrap();
    // 10 items; each user likes a window of 5, every line duplicated
    let mut fb = String::new();
    for u in 0..5 {
        for k in 0..5 {
            let i = (u + k) % 10;
            fb.push_str(&format!("u{u}\ti{i}\n"));
            fb.push_str(&format!("u{u}\ti{i}\n"));
        }
    }
    std::fs::write(dir.path().join("fb.tsv"), fb).unwrap();
    let out = ok(
        &["evaluate", "--baseline", "mp", "--feedback", "fb.tsv"],
        dir.path(),
    );
    // 5 users survive the min-feedback filter only because duplicates
    // collapsed to 5 distinct positives each
    assert_eq!(parse_report(&out.stdout)["users_evaluated"], 5);
}

