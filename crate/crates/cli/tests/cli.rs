//! End-to-end runs of the `egd` binary: exit codes, outputs and determinism.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = r#"{"conv_filters":[8,4],"lstm_hidden":8,"lstm_layers":1,"fc_layers":[8],"epochs":2,"max_pairs_per_epoch":64}"#;

fn egd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egd"))
        .args(args)
        .env_remove("EGD_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = egd(args);
    assert!(
        out.status.success(),
        "egd {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    egd(args).status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `root`, keyed by relative path.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn synth(dir: &Path, name: &str, seed: &str) -> PathBuf {
    let data = dir.join(name);
    ok(&["synth", "--out", s(&data), "--trials", "20", "--seed", seed]);
    data
}

fn run_json(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("run.json")).unwrap()).unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["synth", "--out", "/tmp/x", "--trials", "7"]), 1);
    assert_eq!(code(&["gradcheck", "--instances", "many"]), 1);

    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "data", "1");
    let ck = tmp.path().join("m.egd");
    let d = s(&data);
    // scope flags that do not fit the setup
    assert_eq!(
        code(&["train", "--data", d, "--setup", "gsts", "--out", s(&ck)]),
        1
    );
    assert_eq!(
        code(&[
            "train",
            "--data",
            d,
            "--setup",
            "gtt",
            "--gesture",
            "G1",
            "--out",
            s(&ck)
        ]),
        1
    );
    assert_eq!(
        code(&["train", "--data", d, "--gesture", "G8", "--out", s(&ck)]),
        1
    );
    assert_eq!(
        code(&[
            "train",
            "--data",
            d,
            "--gesture",
            "G1",
            "--model",
            "mlp",
            "--out",
            s(&ck)
        ]),
        1
    );
    assert_eq!(
        code(&[
            "train",
            "--data",
            d,
            "--gesture",
            "G1",
            "--config",
            "{\"lr\":",
            "--out",
            s(&ck)
        ]),
        1
    );
    assert_eq!(
        code(&[
            "train",
            "--data",
            d,
            "--gesture",
            "G1",
            "--config",
            r#"{"architecture":"cnn"}"#,
            "--out",
            s(&ck)
        ]),
        1
    );
    // runtime failures
    let missing = tmp.path().join("nowhere");
    assert_eq!(
        code(&["kld", "--data", s(&missing), "--out", s(tmp.path())]),
        2
    );
    assert_eq!(
        code(&[
            "evaluate",
            "--data",
            d,
            "--checkpoint",
            s(&ck),
            "--out",
            s(tmp.path())
        ]),
        2
    );
    std::fs::write(&ck, b"not a checkpoint").unwrap();
    assert_eq!(
        code(&[
            "evaluate",
            "--data",
            d,
            "--checkpoint",
            s(&ck),
            "--out",
            s(tmp.path())
        ]),
        2
    );
    assert_eq!(
        code(&[
            "monitor",
            "--data",
            d,
            "--checkpoint",
            s(&ck),
            "--trial",
            "S_B001"
        ]),
        2
    );
}

#[test]
fn synth_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tree(&synth(tmp.path(), "a", "4"));
    let b = tree(&synth(tmp.path(), "b", "4"));
    let c = tree(&synth(tmp.path(), "c", "5"));
    assert!(a.len() > 20);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.keys().any(|k| k.ends_with("labels.csv")));
}

#[test]
fn train_and_evaluate_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "data", "2");
    let d = s(&data);
    let mut files = Vec::new();
    for (k, model) in ["siamese-cnn", "siamese-cnn", "lstm"].iter().enumerate() {
        let ck = tmp.path().join(format!("{k}.egd"));
        let eval = tmp.path().join(format!("eval{k}"));
        ok(&[
            "train",
            "--data",
            d,
            "--setup",
            "gsts",
            "--task",
            "suturing",
            "--gesture",
            "G3",
            "--model",
            model,
            "--config",
            TINY,
            "--holdout",
            "5",
            "--seed",
            "9",
            "--out",
            s(&ck),
        ]);
        ok(&[
            "evaluate",
            "--data",
            d,
            "--checkpoint",
            s(&ck),
            "--out",
            s(&eval),
        ]);
        files.push((
            std::fs::read(&ck).unwrap(),
            std::fs::read(eval.join("metrics.csv")).unwrap(),
            std::fs::read(eval.join("instances.csv")).unwrap(),
        ));
        let run = run_json(&eval);
        assert_eq!(run["command"], "evaluate");
        assert_eq!(run["seed"], 9);
        assert_eq!(run["config"]["model"]["architecture"], *model);
        assert_eq!(run["config"]["scope"], "G3/Suturing");
        assert_eq!(run["tool_version"], env!("CARGO_PKG_VERSION"));
    }
    assert_eq!(files[0], files[1]);
    assert_ne!(files[0].0, files[2].0);
    // the held-out repetition is the default test set
    let instances = String::from_utf8(files[0].2.clone()).unwrap();
    assert!(instances
        .lines()
        .skip(1)
        .all(|l| l.contains("S_B005,") || l.contains("S_C005,")));
    assert!(instances.lines().count() > 1);
}

#[test]
fn loso_kld_and_gradcheck_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "data", "3");
    let d = s(&data);
    let mut outs = Vec::new();
    for (k, jobs) in ["1", "1", "2"].iter().enumerate() {
        let out = tmp.path().join(format!("loso{k}"));
        ok(&[
            "loso",
            "--data",
            d,
            "--setup",
            "gst",
            "--gesture",
            "G1",
            "--model",
            "cnn",
            "--config",
            TINY,
            "--jobs",
            jobs,
            "--seed",
            "5",
            "--out",
            s(&out),
        ]);
        outs.push(tree(&out));
    }
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[0], outs[2]);
    let metrics = String::from_utf8(outs[0][Path::new("metrics.csv")].clone()).unwrap();
    assert_eq!(
        metrics.lines().filter(|l| l.starts_with("fold,")).count(),
        5
    );
    assert_eq!(
        metrics.lines().filter(|l| l.starts_with("micro,")).count(),
        1
    );

    let nc = tmp.path().join("nc");
    ok(&[
        "loso",
        "--data",
        d,
        "--model",
        "nearest-centroid",
        "--out",
        s(&nc),
    ]);
    let run = run_json(&nc);
    assert_eq!(run["command"], "loso");
    assert_eq!(run["seed"], 0);

    let (k1, k2) = (tmp.path().join("k1"), tmp.path().join("k2"));
    ok(&["kld", "--data", d, "--out", s(&k1)]);
    ok(&["kld", "--data", d, "--out", s(&k2)]);
    assert_eq!(tree(&k1), tree(&k2));

    let (g1, g2) = (tmp.path().join("g1"), tmp.path().join("g2"));
    for g in [&g1, &g2] {
        let out = ok(&[
            "gradcheck",
            "--instances",
            "1",
            "--per-tensor",
            "1",
            "--out",
            s(g),
        ]);
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("PASS") && !text.contains("FAIL"), "{text}");
    }
    assert_eq!(tree(&g1), tree(&g2));
}

#[test]
fn monitor_and_bench_write_their_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "data", "6");
    let d = s(&data);
    let ck = tmp.path().join("pooled.egd");
    ok(&[
        "train",
        "--data",
        d,
        "--setup",
        "gtt",
        "--model",
        "siamese-cnn",
        "--config",
        TINY,
        "--out",
        s(&ck),
    ]);
    let verdicts = |dir: &Path| -> Vec<(u64, String, String)> {
        std::fs::read_to_string(dir.join("events.jsonl"))
            .unwrap()
            .lines()
            .map(|l| {
                let v: Value = serde_json::from_str(l).unwrap();
                (
                    v["frame"].as_u64().unwrap(),
                    v["gesture"].as_str().unwrap().to_string(),
                    v["verdict"].as_str().unwrap().to_string(),
                )
            })
            .collect()
    };
    let (m1, m2) = (tmp.path().join("m1"), tmp.path().join("m2"));
    for m in [&m1, &m2] {
        ok(&[
            "monitor",
            "--data",
            d,
            "--checkpoint",
            s(&ck),
            "--trial",
            "S_B002",
            "--rate",
            "0",
            "--out",
            s(m),
        ]);
    }
    let v = verdicts(&m1);
    assert!(v.iter().any(|e| e.2 == "normal" || e.2 == "erroneous"));
    assert_eq!(v, verdicts(&m2));
    let summary = std::fs::read_to_string(m1.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert_eq!(run_json(&m1)["command"], "monitor");
    // events stream to stdout without --out
    let out = ok(&[
        "monitor",
        "--data",
        d,
        "--checkpoint",
        s(&ck),
        "--trial",
        "Suturing_B002",
        "--rate",
        "0",
    ]);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap().lines().count(),
        v.len()
    );

    let bench = tmp.path().join("bench");
    ok(&[
        "bench",
        "--data",
        d,
        "--references",
        "5",
        "--windows",
        "5",
        "--repetitions",
        "1",
        "--out",
        s(&bench),
    ]);
    let csv = std::fs::read_to_string(bench.join("latency.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5, "{csv}");
    for m in ["cnn", "lstm", "siamese-cnn", "siamese-lstm"] {
        assert!(
            csv.lines().any(|l| l.starts_with(&format!("{m},"))),
            "{csv}"
        );
    }
    ok(&[
        "bench",
        "--data",
        d,
        "--checkpoint",
        s(&ck),
        "--windows",
        "5",
        "--repetitions",
        "1",
        "--out",
        s(&bench),
    ]);
}
