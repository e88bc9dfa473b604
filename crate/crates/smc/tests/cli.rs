use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use smc::report::read_report;

/// Small synthetic bundle: 3 clusters of 20 images, 20 tags.
const SMALL: &[&str] = &[
    "synth.bundle.clusters=3",
    "synth.bundle.images_per_cluster=20",
    "synth.bundle.n_tags=20",
    "synth.bundle.f_i=12",
    "synth.bundle.f_t=8",
    "synth.bundle.rank=3",
    "synth.bundle.tags_per_image=3",
    "pipeline.k=3",
    "pipeline.refine.rank=3",
    "pipeline.refine.outer_iters=5",
];

fn smc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn with_small<'a>(base: &[&'a str]) -> Vec<&'a str> {
    let mut args = base.to_vec();
    for s in SMALL {
        args.push("--set");
        args.push(s);
    }
    args
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path) -> PathBuf {
    let out = dir.join("data");
    let o = smc(&with_small(&["synth", "-q", "--out", out.to_str().unwrap()]));
    assert!(o.status.success(), "{}", stderr(&o));
    out.join("manifest.toml")
}

fn pipeline(manifest: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = with_small(&["pipeline", "-q", "--manifest", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    args.extend_from_slice(extra);
    smc(&args)
}

fn bytes(path: PathBuf) -> Vec<u8> {
    fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn synth_then_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    assert!(dir.path().join("data/true_labels.txt").exists());
    let out = dir.path().join("run");
    let o = pipeline(&manifest, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "resolved_config.toml",
        "z.mtx",
        "affinity.mtx",
        "labels.txt",
        "cluster.txt",
        "completed.mtx",
        "p.mtx",
        "q.mtx",
        "objective.txt",
        "refined_scores.mtx",
        "refined.mtx",
        "eval.txt",
        "eval_images.csv",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let report = read_report(&out.join("eval.txt")).unwrap();
    assert_eq!(report["images"], 60.0);
    for n in [2, 5, 10] {
        let ap = report[&format!("ap@{n}")];
        assert!((0.0..=1.0).contains(&ap));
    }
    let csv = fs::read_to_string(out.join("eval_images.csv")).unwrap();
    assert_eq!(csv.lines().count(), 61);
    assert!(csv.starts_with("image,precision@2,recall@2"));
}

#[test]
fn eval_of_truth_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let truth = dir.path().join("data/ground_truth.mtx");
    let out = dir.path().join("eval");
    let o = smc(&[
        "eval",
        "-q",
        "--predictions",
        truth.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--set",
        "pipeline.eval_n=[3]",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_report(&out.join("eval.txt")).unwrap();
    assert_eq!(report["ap@3"], 1.0);
    assert_eq!(report["ar@3"], 1.0);
}

#[test]
fn invalid_config_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = smc(&["pipeline", "--mu", "1.2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("refine.mu"), "{}", stderr(&o));
    let o = smc(&["pipeline", "--set", "pipeline.bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn unknown_command_exits_2() {
    assert_eq!(smc(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(smc(&[]).status.code(), Some(2));
}

#[test]
fn missing_manifest_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = smc(&["cluster", "--manifest", "/nonexistent/manifest.toml", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ssc_non_convergence_exits_1_and_keeps_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let out = dir.path().join("run");
    let o = pipeline(&manifest, &out, &["--set", "pipeline.ssc.max_iters=2"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("did not converge"));
    for f in ["z.mtx", "labels.txt", "completed.mtx", "refined_scores.mtx", "eval.txt"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let summary = fs::read_to_string(out.join("cluster.txt")).unwrap();
    assert!(summary.contains("converged: 0"));
}

#[test]
fn snapshot_rerun_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let first = dir.path().join("first");
    let o = pipeline(&manifest, &first, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let second = dir.path().join("second");
    let snapshot = first.join("resolved_config.toml");
    let o = smc(&[
        "pipeline",
        "-q",
        "--config",
        snapshot.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["z.mtx", "labels.txt", "completed.mtx", "refined_scores.mtx", "eval.txt"] {
        assert_eq!(bytes(first.join(f)), bytes(second.join(f)), "{f} differs");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let one = dir.path().join("one");
    let four = dir.path().join("four");
    assert!(pipeline(&manifest, &one, &[]).status.success());
    assert!(pipeline(&manifest, &four, &["--threads", "4"]).status.success());
    for f in ["completed.mtx", "refined_scores.mtx", "eval.txt"] {
        assert_eq!(bytes(one.join(f)), bytes(four.join(f)), "{f} differs");
    }
}

#[test]
fn staged_commands_match_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let m = manifest.to_str().unwrap();
    let full = dir.path().join("full");
    assert!(pipeline(&manifest, &full, &[]).status.success());

    let staged = dir.path().join("staged");
    let s = staged.to_str().unwrap();
    let o = smc(&with_small(&["cluster", "-q", "--manifest", m, "--out", s]));
    assert!(o.status.success(), "{}", stderr(&o));
    let labels = staged.join("labels.txt");
    let affinity = staged.join("affinity.mtx");
    let o = smc(&with_small(&[
        "share",
        "-q",
        "--manifest",
        m,
        "--out",
        s,
        "--labels",
        labels.to_str().unwrap(),
        "--affinity",
        affinity.to_str().unwrap(),
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    let completed = staged.join("completed.mtx");
    let o = smc(&with_small(&["refine", "-q", "--manifest", m, "--out", s, "--tags", completed.to_str().unwrap()]));
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["completed.mtx", "refined_scores.mtx"] {
        assert_eq!(bytes(full.join(f)), bytes(staged.join(f)), "{f} differs");
    }

    let predicted = dir.path().join("predicted");
    let o = smc(&with_small(&[
        "refine",
        "-q",
        "--manifest",
        m,
        "--out",
        predicted.to_str().unwrap(),
        "--factors-in",
        s,
        "--predict-only",
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(bytes(staged.join("refined_scores.mtx")), bytes(predicted.join("refined_scores.mtx")));
}

#[test]
fn tune_writes_grid_and_tuned_config() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let out = dir.path().join("tune");
    let o = smc(&with_small(&[
        "tune",
        "-q",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--set",
        "tune.rank=[2, 3]",
        "--set",
        "tune.lambda1=[1.0]",
        "--set",
        "tune.lambda2=[0.0]",
        "--set",
        "tune.mu=[0.0, 0.5]",
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    let grid = fs::read_to_string(out.join("tune.csv")).unwrap();
    assert_eq!(grid.lines().count(), 5);
    assert!(grid.starts_with("rank,lambda1,lambda2,mu,ap,ar"));
    let tuned = fs::read_to_string(out.join("tuned_config.toml")).unwrap();
    assert!(tuned.contains("[pipeline.refine]"));
}
