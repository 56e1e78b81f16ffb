use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cutlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cutlab"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cutlab(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate_tiny(dir: &Path, count: &str) {
    ok(&[
        "generate",
        "--family",
        "binpacking",
        "--count",
        count,
        "--n",
        "6",
        "--m",
        "6",
        "--seed",
        "3",
        "--out",
        p(dir),
    ]);
}

#[test]
fn generate_writes_instances_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    generate_tiny(tmp.path(), "5");
    let mut names: Vec<String> = fs::read_dir(tmp.path().join("instances"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 5);
    assert!(names.iter().all(|n| n.ends_with(".json")));
    let manifest = fs::read_to_string(tmp.path().join("manifest.toml")).unwrap();
    assert!(manifest.contains("command = \"generate\""), "{manifest}");
    assert!(manifest.contains("seed = 3"), "{manifest}");
}

#[test]
fn exit_codes_separate_usage_and_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cutlab(&["generate", "--bogus"]).status.code(), Some(1));
    assert_eq!(cutlab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cutlab(&["--help"]).status.code(), Some(0));
    let missing = tmp.path().join("nope.json");
    let out = cutlab(&["solve", p(&missing), "--out", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        "seed = 4\n\n[generate]\nfamily = \"packing\"\ncount = 3\nn = 6\nm = 4\n",
    )
    .unwrap();
    let out = tmp.path().join("o");
    ok(&[
        "generate",
        "--config",
        p(&cfg),
        "--count",
        "2",
        "--out",
        p(&out),
    ]);
    let files: Vec<_> = fs::read_dir(out.join("instances")).unwrap().collect();
    assert_eq!(files.len(), 2);
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(
        manifest.contains("seed = 4") && manifest.contains("packing"),
        "{manifest}"
    );

    fs::write(&cfg, "[generate]\ncolour = 1\n").unwrap();
    assert_eq!(
        cutlab(&["generate", "--config", p(&cfg), "--out", p(&out)])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn eval_reports_two_metrics_per_scorer() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tmp.path().join("gen");
    generate_tiny(&gen, "3");
    let inst = gen.join("instances");
    let col = tmp.path().join("col");
    ok(&[
        "collect",
        "--instances",
        p(&inst),
        "--iters",
        "3",
        "--out",
        p(&col),
    ]);
    let ev = tmp.path().join("eval");
    let table = ok(&[
        "eval",
        "--instances",
        p(&inst),
        "--samples",
        p(&col.join("samples.jsonl")),
        "--rounds",
        "5",
        "--out",
        p(&ev),
    ]);
    for s in ["lookahead", "random", "default", "efficacy"] {
        assert!(table.contains(s), "{table}");
    }
    let csv = fs::read_to_string(ev.join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "scorer,metric,mean,ste,n");
    assert_eq!(lines.len(), 1 + 4 * 2, "{csv}");
    assert!(ev.join("igc_curves.csv").exists() && ev.join("report.json").exists());
}

#[test]
fn solve_prints_bound_and_optimum() {
    let tmp = tempfile::tempdir().unwrap();
    generate_tiny(tmp.path(), "1");
    let file = fs::read_dir(tmp.path().join("instances"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let text = ok(&["solve", p(&file), "--out", p(&tmp.path().join("s"))]);
    assert!(text.contains("z*") && text.contains("z^OPT"), "{text}");
    let json = ok(&[
        "solve",
        p(&file),
        "--format",
        "json",
        "--out",
        p(&tmp.path().join("s2")),
    ]);
    assert!(json.trim_start().starts_with('{'), "{json}");
}
