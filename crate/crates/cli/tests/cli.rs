use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn best(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_best"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn describe(dir: &Path, images: &Path, extra: &[&str]) -> (Output, PathBuf) {
    let out = dir.join("out.jsonl");
    let config = fixtures().join("config.toml");
    let mut args = vec![
        "describe",
        "--config",
        s(&config),
        "--images",
        s(images),
        "--out",
        s(&out),
    ];
    args.extend_from_slice(extra);
    (best(&args), out)
}

#[test]
fn describe_succeeds_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (output, out) = describe(dir.path(), &fixtures().join("images"), &["--seed", "7"]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let lines = jsonl(&out);
    assert_eq!(lines.len(), 5);
    let ids: Vec<&str> = lines.iter().map(|l| l["image"].as_str().unwrap()).collect();
    assert_eq!(
        ids,
        [
            "beach.png",
            "city.png",
            "kitchen.png",
            "park.png",
            "street.png"
        ]
    );
    for l in &lines {
        assert!(!l["description"].as_str().unwrap().is_empty());
        assert!(l.get("timings_ms").is_none());
    }
    assert!(lines[4]["prompts"][0]
        .as_str()
        .unwrap()
        .contains("This image contains text: STOP"));
}

#[test]
fn partial_failure_exits_two_and_keeps_going() {
    let dir = tempfile::tempdir().unwrap();
    let (output, out) = describe(
        dir.path(),
        &fixtures().join("partial.txt"),
        &["--seed", "7"],
    );
    assert_eq!(output.status.code(), Some(2), "{output:?}");
    let lines = jsonl(&out);
    assert_eq!(lines.len(), 3);
    assert!(lines[0].get("description").is_some());
    assert_eq!(lines[1]["image"], "corrupt.png");
    assert!(lines[1].get("error").is_some());
    assert!(lines[2].get("description").is_some());
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = dir.path().join("out.jsonl");
    let images = fixtures().join("images");
    let output = best(&[
        "--seed",
        "7",
        "describe",
        "--config",
        s(&missing),
        "--images",
        s(&images),
        "--out",
        s(&out),
    ]);
    assert_eq!(output.status.code(), Some(1));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[params]\nbeta = 0.2\nunknown_key = 1\n").unwrap();
    let output = best(&[
        "--seed",
        "7",
        "describe",
        "--config",
        s(&bad),
        "--images",
        s(&images),
        "--out",
        s(&out),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("unknown_key"));

    let output = best(&[
        "spipe",
        "--candidates",
        s(&fixtures().join("spipe/candidates.jsonl")),
        "--references",
        s(&fixtures().join("spipe/references")),
        "--lexicon",
        s(&fixtures().join("spipe/lexicon.tsv")),
        "--out",
        s(&out),
        "--averaging",
        "median",
    ]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn unreachable_remote_backend_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    let text = std::fs::read_to_string(fixtures().join("config.toml"))
        .unwrap()
        .replace("http://127.0.0.1:9000", "http://127.0.0.1:1");
    let text = text.replace("\"vocab/", &format!("\"{}/vocab/", s(&fixtures())));
    std::fs::write(&config, text).unwrap();
    let out = dir.path().join("out.jsonl");
    let images = fixtures().join("images");
    let output = best(&[
        "describe",
        "--config",
        s(&config),
        "--images",
        s(&images),
        "--out",
        s(&out),
    ]);
    assert_eq!(output.status.code(), Some(1), "{output:?}");
}

#[test]
fn empty_image_set_writes_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let (output, out) = describe(dir.path(), &empty, &["--seed", "7"]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    assert!(std::fs::read(&out).unwrap().is_empty());
}

#[test]
fn spipe_writes_table_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("report.txt");
    let json = dir.path().join("report.json");
    for out in [&table, &json] {
        let output = best(&[
            "spipe",
            "--candidates",
            s(&fixtures().join("spipe/candidates.jsonl")),
            "--references",
            s(&fixtures().join("spipe/references")),
            "--lexicon",
            s(&fixtures().join("spipe/lexicon.tsv")),
            "--out",
            s(out),
        ]);
        assert_eq!(output.status.code(), Some(0), "{output:?}");
    }
    let text = std::fs::read_to_string(&table).unwrap();
    assert!(text.starts_with("item"));
    assert!(text.lines().last().unwrap().starts_with("mean"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["items"].as_array().unwrap().len(), 2);
}

#[test]
fn vqa_reports_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("answers.jsonl");
    for mode in ["generative", "discriminative"] {
        let output = best(&[
            "--seed",
            "7",
            "vqa",
            "--config",
            s(&fixtures().join("config.toml")),
            "--data",
            s(&fixtures().join("vqa/data.jsonl")),
            "--mode",
            mode,
            "--out",
            s(&out),
        ]);
        assert_eq!(output.status.code(), Some(0), "{output:?}");
        let stdout = String::from_utf8_lossy(&output.stdout);
        assert!(stdout.contains("accuracy"), "{stdout}");
        let lines = jsonl(&out);
        assert_eq!(lines.len(), 6);
        let has_final = lines.iter().all(|l| l.get("final_answer").is_some());
        assert_eq!(has_final, mode == "discriminative");
    }
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn describe_through_the_service_matches_local_run() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_best"))
        .args([
            "--seed",
            "7",
            "serve",
            "--config",
            s(&fixtures().join("config.toml")),
            "--addr",
            "127.0.0.1:0",
        ])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let stderr = child.stderr.take().unwrap();
    let server = Server(child);
    let mut line = String::new();
    BufReader::new(stderr).read_line(&mut line).unwrap();
    let url = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap_or_else(|| panic!("unexpected server output: {line}"))
        .to_string();

    let dir = tempfile::tempdir().unwrap();
    let remote = dir.path().join("remote.jsonl");
    let images = fixtures().join("images");
    let output = best(&[
        "--server",
        &url,
        "describe",
        "--images",
        s(&images),
        "--out",
        s(&remote),
    ]);
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    drop(server);

    let (output, local) = describe(dir.path(), &images, &["--seed", "7"]);
    assert_eq!(output.status.code(), Some(0));
    assert_eq!(
        std::fs::read(&remote).unwrap(),
        std::fs::read(&local).unwrap()
    );
}
