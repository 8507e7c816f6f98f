use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn worstcase(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_worstcase"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const QUICK: [&str; 6] = [
    "--set",
    "curriculum.steps=15",
    "--set",
    "model={word_dim=8, upos_dim=4, hidden_dim=16, arc_dim=8}",
    "--set",
    "curriculum.batch_size=4",
];

fn demo() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = worstcase(&["demo", "."], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    dir
}

fn train(dir: &Path, output_dir: &str) -> Output {
    let set_out = format!("output_dir={output_dir}");
    let mut args = vec!["train", "demo.toml", "--set", &set_out];
    args.extend(QUICK);
    worstcase(&args, dir)
}

#[test]
fn same_config_and_seed_give_identical_history() {
    let dir = demo();
    assert!(train(dir.path(), "a").status.success());
    assert!(train(dir.path(), "b").status.success());
    let a = fs::read(dir.path().join("a/history.tsv")).unwrap();
    let b = fs::read(dir.path().join("b/history.tsv")).unwrap();
    assert_eq!(a, b);
    for f in [
        "checkpoint.bin",
        "manifest.json",
        "report.tsv",
        "report.json",
    ] {
        assert!(dir.path().join("a").join(f).is_file(), "{f}");
    }
}

#[test]
fn manifest_replays_its_metrics() {
    let dir = demo();
    assert!(train(dir.path(), "a").status.success());
    let out = worstcase(
        &["train", "a/manifest.json", "--set", "output_dir=replay"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let metrics = |p: &str| {
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(p)).unwrap()).unwrap();
        m["metrics"].clone()
    };
    let original = metrics("a/manifest.json");
    assert!(original["macro_las"].is_f64());
    assert_eq!(original, metrics("a/replay/manifest.json"));
}

#[test]
fn unknown_sampler_exits_2_naming_field() {
    let dir = demo();
    let out = worstcase(
        &["train", "demo.toml", "--set", "curriculum.sampler=greedy"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sampler"), "{}", stderr(&out));
}

#[test]
fn overlapping_task_ids_exit_2_naming_both() {
    let dir = demo();
    let out = worstcase(
        &[
            "train",
            "demo.toml",
            "--set",
            "test.treebanks=[{file=\"hoa-ud-test.conllu\", task_id=\"min_1\"}]",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(
        err.contains("test task `min_1`") && err.contains("train task `min_1`"),
        "{err}"
    );
}

#[test]
fn missing_seed_exits_2() {
    let dir = demo();
    let text = fs::read_to_string(dir.path().join("demo.toml")).unwrap();
    fs::write(
        dir.path().join("noseed.toml"),
        text.replace("seed = 1\n", ""),
    )
    .unwrap();
    let out = worstcase(&["train", "noseed.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("seed"));
}

#[test]
fn eval_is_repeatable_and_reports_average() {
    let dir = demo();
    assert!(train(dir.path(), "a").status.success());
    for out_dir in ["e1", "e2"] {
        let out = worstcase(
            &["eval", "a/checkpoint.bin", "demo.toml", "--out", out_dir],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for f in ["report.tsv", "report.json"] {
        assert_eq!(
            fs::read(dir.path().join("e1").join(f)).unwrap(),
            fs::read(dir.path().join("e2").join(f)).unwrap()
        );
    }
    // the training run evaluated the same checkpoint on the same tests
    assert_eq!(
        fs::read(dir.path().join("a/report.json")).unwrap(),
        fs::read(dir.path().join("e1/report.json")).unwrap()
    );
}

#[test]
fn eval_failures_map_to_exit_codes() {
    let dir = demo();
    assert!(train(dir.path(), "a").status.success());
    fs::write(dir.path().join("empty.toml"), "treebanks = []\n").unwrap();
    let out = worstcase(&["eval", "a/checkpoint.bin", "empty.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let out = worstcase(&["eval", "missing.bin", "demo.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

fn write_report(dir: &Path, name: &str, rows: &[(&str, f64)]) {
    let body: Vec<String> = rows
        .iter()
        .map(|(id, las)| {
            format!("{{\"task_id\":\"{id}\",\"uas\":{las},\"las\":{las},\"tokens\":100}}")
        })
        .collect();
    let mean = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    fs::write(
        dir.join(name),
        format!(
            "{{\"per_treebank\":[{}],\"macro_average_uas\":{mean},\"macro_average_las\":{mean}}}",
            body.join(",")
        ),
    )
    .unwrap();
}

fn summary_line(stdout: &[u8]) -> Vec<String> {
    let text = String::from_utf8_lossy(stdout);
    let line = text.lines().find(|l| l.starts_with("average")).unwrap();
    line.split('\t').map(str::to_string).collect()
}

#[test]
fn compare_prints_delta_and_rer() {
    let dir = tempfile::tempdir().unwrap();
    write_report(dir.path(), "base.json", &[("x", 30.2), ("y", 40.2)]);
    write_report(dir.path(), "ours.json", &[("x", 31.4), ("y", 41.4)]);
    let out = worstcase(
        &["compare", "base.json", "ours.json", "--resamples", "200"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let fields = summary_line(&out.stdout);
    assert_eq!(&fields[1..5], ["35.2", "36.4", "1.2", "1.9"]);

    let out = worstcase(
        &["compare", "ours.json", "base.json", "--resamples", "200"],
        dir.path(),
    );
    let fields = summary_line(&out.stdout);
    assert_eq!(&fields[3..5], ["-1.2", "-1.9"]);

    let out = worstcase(&["compare", "base.json", "base.json"], dir.path());
    let fields = summary_line(&out.stdout);
    assert_eq!(&fields[3..], ["0.0", "0.0", "1.0000"]);
}

#[test]
fn compare_rejects_different_treebank_sets() {
    let dir = tempfile::tempdir().unwrap();
    write_report(dir.path(), "a.json", &[("x", 30.0), ("y", 40.0)]);
    write_report(dir.path(), "b.json", &[("x", 31.0), ("z", 41.0)]);
    let out = worstcase(&["compare", "a.json", "b.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains('y') && err.contains('z'), "{err}");
}
