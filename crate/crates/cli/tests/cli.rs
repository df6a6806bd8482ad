use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_PLAN: &[&str] = &[
    "--set",
    "collect.rotate_to_stop.approach_angles=[0]",
    "--set",
    "collect.rotate_to_stop.perturb_angles=[0, 30]",
    "--set",
    "collect.angle_goal.approach_angles=[0]",
    "--set",
    "collect.angle_goal.perturb_angles=[0]",
    "--set",
    "collect.angle_goal.stop_angles=[30]",
    "--set",
    "collect.angle_goal.repeats=1",
];

const TINY_MODEL: &[&str] = &[
    "--scale",
    "toy",
    "--set",
    "model.hyper.hidden_size=8",
    "--set",
    "model.train.epochs=1",
    "--set",
    "eval.repeats=1",
];

fn pivot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pivot"))
        .args(args)
        .env_remove("PIVOT_OUT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = pivot(args);
    assert!(
        out.status.success(),
        "pivot {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fail(args: &[&str]) -> String {
    let out = pivot(args);
    assert!(!out.status.success(), "pivot {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn collect_small(dir: &Path, objects: &str, jobs: &str) {
    let mut args = vec!["collect", "--objects", objects, "--variants", "nominal", "--seed", "5"];
    args.extend_from_slice(SMALL_PLAN);
    args.extend_from_slice(&["--jobs", jobs, "--out", p(dir)]);
    ok(&args);
}

/// Every file except the wall-clock log, as (relative path, bytes). Input
/// paths recorded in run manifests are made relative to `root`.
fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "run.log" {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                let mut bytes = fs::read(&path).unwrap();
                if rel.ends_with("run.toml") {
                    bytes = String::from_utf8(bytes)
                        .unwrap()
                        .replace(p(root), "<root>")
                        .into_bytes();
                }
                out.push((rel, bytes));
            }
        }
    }
    out.sort();
    out
}

fn table_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn collect_requires_seed() {
    let out = pivot(&["collect", "--protocol", "rotate-to-stop"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn unknown_object_lists_valid_names() {
    let tmp = TempDir::new().unwrap();
    let err = fail(&[
        "collect",
        "--objects",
        "Earbud,Teapot",
        "--seed",
        "1",
        "--out",
        p(&tmp.path().join("d")),
    ]);
    assert!(err.contains("Teapot"));
    for name in ["Toothpaste", "Earbud", "Breadboard", "Toothbrush"] {
        assert!(err.contains(name), "{err}");
    }
    assert!(!tmp.path().join("d").exists());
}

#[test]
fn collect_prints_summary_and_covers_objects() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("d");
    let mut args = vec![
        "collect",
        "--protocol",
        "rotate-to-stop",
        "--objects",
        "all",
        "--variants",
        "nominal",
        "--seed",
        "7",
    ];
    args.extend_from_slice(SMALL_PLAN);
    args.extend_from_slice(&["--out", p(&dir)]);
    let stdout = ok(&args);
    assert!(stdout.contains("kept 20 sequences"), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.contains("rotate-to-stop")).count(), 10);
    let manifest = fs::read_to_string(dir.join("run.toml")).unwrap();
    assert!(manifest.contains("command = \"collect\""));
    assert!(manifest.contains("manifest.toml"));
    assert!(!manifest.contains("started"));
}

#[test]
fn control_rejects_goal_out_of_range() {
    let tmp = TempDir::new().unwrap();
    let err = fail(&["control", "--goal", "200", "--out", p(&tmp.path().join("c"))]);
    assert!(err.contains("out of range"), "{err}");
    let err = fail(&["control", "--goal", "-5", "--out", p(&tmp.path().join("c"))]);
    assert!(err.contains("out of range"), "{err}");
}

#[test]
fn control_with_oracle_prints_target_error() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("c");
    let stdout = ok(&["control", "--goal", "45", "--estimator", "oracle", "--out", p(&dir)]);
    let te: f64 = stdout
        .split("TE ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .expect("TE in output");
    assert!(te < 5.0, "{stdout}");
    let trace = fs::read_to_string(dir.join("trace.csv")).unwrap();
    assert!(trace.lines().next().unwrap().ends_with("alpha_est,omega_est,phase"));
    assert!(fs::read_to_string(dir.join("run.toml")).unwrap().contains("trace.csv"));
}

#[test]
fn refuses_non_empty_output_directory() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("keep.txt"), "x").unwrap();
    let err = fail(&["control", "--goal", "45", "--out", p(tmp.path())]);
    assert!(err.contains("not empty"));
    assert_eq!(fs::read_to_string(tmp.path().join("keep.txt")).unwrap(), "x");
}

#[test]
fn unknown_override_key_is_an_error() {
    let err = fail(&["config", "--set", "model.train.epoch=3"]);
    assert!(err.contains("unknown key \"model.train.epoch\""), "{err}");
    let cfg = ok(&["config", "--scale", "toy", "--set", "model.train.epochs=3"]);
    assert!(cfg.contains("epochs = 3"));
}

#[test]
fn output_root_comes_from_environment() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pivot"))
        .args(["control", "--goal", "30", "--seed", "4"])
        .env("PIVOT_OUT", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("control-4").join("trace.csv").exists());
}

#[test]
fn train_respects_architecture_flags() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d");
    collect_small(&data, "Earbud,Pill", "1");
    let read_hyper = |dir: &Path| -> toml::Table {
        let text = fs::read_to_string(dir.join("checkpoint").join("manifest.toml")).unwrap();
        let t: toml::Table = toml::from_str(&text).unwrap();
        assert!(t.contains_key("architecture"));
        t
    };

    let gru = tmp.path().join("gru");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--arch",
        "gru",
        "--scale",
        "toy",
        "--set",
        "model.train.epochs=1",
        "--seed",
        "1",
        "--out",
        p(&gru),
    ]);
    let lstm_cfg: toml::Table = toml::from_str(&ok(&["config", "--arch", "lstm", "--scale", "toy"])).unwrap();
    let g = read_hyper(&gru);
    assert_eq!(g["architecture"].as_str(), Some("gru"));
    assert_eq!(g["hyper"], lstm_cfg["model"]["hyper"]);
    assert!(gru.join("history.csv").exists());
    assert_eq!(table_rows(&gru.join("metrics.csv")), 6);

    let mlp = tmp.path().join("mlp");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--arch",
        "mlp",
        "--window",
        "15",
        "--seed",
        "1",
        "--out",
        p(&mlp),
        "--scale",
        "toy",
        "--set",
        "model.train.epochs=1",
    ]);
    let m = read_hyper(&mlp);
    assert_eq!(m["architecture"].as_str(), Some("mlp"));
    assert_eq!(m["hyper"]["window_size"].as_integer(), Some(15));

    let alpha = tmp.path().join("alpha");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--mode",
        "alpha-only",
        "--seed",
        "1",
        "--out",
        p(&alpha),
        "--scale",
        "toy",
        "--set",
        "model.train.epochs=1",
    ]);
    assert_eq!(read_hyper(&alpha)["hyper"]["mode"].as_str(), Some("alpha-only"));
}

#[test]
fn train_without_dataset_fails() {
    let tmp = TempDir::new().unwrap();
    let err = fail(&[
        "train",
        "--data",
        p(&tmp.path().join("missing")),
        "--seed",
        "1",
        "--out",
        p(&tmp.path().join("m")),
    ]);
    assert!(err.contains("loading dataset"), "{err}");
}

#[test]
fn offline_studies_write_one_row_per_split() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d");
    collect_small(&data, "all", "0");

    let unseen = tmp.path().join("unseen");
    let mut args = vec![
        "eval",
        "--study",
        "unseen-object",
        "--data",
        p(&data),
        "--out",
        p(&unseen),
    ];
    args.extend_from_slice(TINY_MODEL);
    ok(&args);
    assert_eq!(table_rows(&unseen.join("results.csv")), 10);

    let ablation = tmp.path().join("ablation");
    let mut args = vec![
        "eval",
        "--study",
        "window-ablation",
        "--data",
        p(&data),
        "--out",
        p(&ablation),
    ];
    args.extend_from_slice(TINY_MODEL);
    ok(&args);
    assert_eq!(table_rows(&ablation.join("results.csv")), 5);

    let classes = tmp.path().join("classes");
    let mut args = vec![
        "eval",
        "--study",
        "class-transfer",
        "--data",
        p(&data),
        "--out",
        p(&classes),
    ];
    args.extend_from_slice(TINY_MODEL);
    ok(&args);
    assert_eq!(table_rows(&classes.join("results.csv")), 4);
}

#[test]
fn closed_loop_oracle_report() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("cl");
    let stdout = ok(&[
        "eval",
        "--study",
        "closed-loop",
        "--estimator",
        "oracle",
        "--set",
        "eval.grid.objects=[\"Earbud\", \"Magnet\"]",
        "--out",
        p(&dir),
    ]);
    assert!(stdout.contains("FR 0.0% over 18 episodes"), "{stdout}");
    assert_eq!(table_rows(&dir.join("episodes.csv")), 18);
    assert_eq!(table_rows(&dir.join("summary.csv")), 1);
    assert_eq!(fs::read_dir(dir.join("traces")).unwrap().count(), 18);
}

#[test]
fn model_estimator_needs_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let err = fail(&[
        "control",
        "--goal",
        "45",
        "--estimator",
        "model",
        "--out",
        p(&tmp.path().join("c")),
    ]);
    assert!(err.contains("--checkpoint"));
}

#[test]
fn incompatible_checkpoint_version_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("d");
    collect_small(&data, "Earbud", "1");
    let model = tmp.path().join("m");
    let mut args = vec!["train", "--data", p(&data), "--seed", "2", "--out", p(&model)];
    args.extend_from_slice(TINY_MODEL);
    ok(&args);
    let manifest = model.join("checkpoint").join("manifest.toml");
    let text = fs::read_to_string(&manifest).unwrap();
    fs::write(&manifest, text.replace("version = 1", "version = 9")).unwrap();
    let err = fail(&[
        "eval",
        "--study",
        "closed-loop",
        "--checkpoint",
        p(&model.join("checkpoint")),
        "--out",
        p(&tmp.path().join("e")),
    ]);
    assert!(err.contains("version 9"), "{err}");
}

#[test]
fn outputs_do_not_depend_on_jobs() {
    let tmp = TempDir::new().unwrap();
    let run = |jobs: &str| {
        let root = tmp.path().join(format!("jobs{jobs}"));
        let data = root.join("d");
        collect_small(&data, "Earbud,Pill,Magnet", jobs);
        let mut args = vec!["train", "--data", p(&data), "--seed", "3", "--jobs", jobs];
        args.extend_from_slice(TINY_MODEL);
        let model = root.join("m");
        args.extend_from_slice(&["--out", p(&model)]);
        ok(&args);
        let ckpt = model.join("checkpoint");
        ok(&[
            "eval",
            "--study",
            "closed-loop",
            "--checkpoint",
            p(&ckpt),
            "--set",
            "eval.grid.objects=[\"Earbud\"]",
            "--jobs",
            jobs,
            "--out",
            p(&root.join("cl")),
        ]);
        let mut args = vec!["eval", "--study", "unseen-object", "--data", p(&data), "--jobs", jobs];
        args.extend_from_slice(TINY_MODEL);
        let study = root.join("study");
        args.extend_from_slice(&["--out", p(&study)]);
        ok(&args);
        ok(&[
            "control",
            "--goal",
            "60",
            "--checkpoint",
            p(&ckpt),
            "--jobs",
            jobs,
            "--out",
            p(&root.join("c")),
        ]);
        root
    };
    let one = snapshot(&run("1"));
    let four = snapshot(&run("4"));
    assert!(one.len() > 10);
    assert_eq!(one.len(), four.len());
    for ((pa, a), (pb, b)) in one.iter().zip(&four) {
        assert_eq!(pa, pb);
        assert!(a == b, "{pa} differs between --jobs 1 and --jobs 4");
    }
}
