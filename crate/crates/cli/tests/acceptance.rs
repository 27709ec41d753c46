//! Acceptance suite: one PASS/FAIL/SKIP line per criterion, non-zero exit
//! on any failure. Runs sequentially so the timing criteria see an idle
//! machine. Set `EGD_JIGSAWS` to a dataset root (with `labels.csv`) to run
//! the optional replication track.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use egd_core::dataio::{
    assemble_dataset, synthesize_trials, GestureClass, SyntheticConfig, TrialRecord,
};
use egd_core::eval::{
    checkpoint_detector, compute_metrics, fit_scope_stats, fresh_network, instance_verdict,
    latency_bench, run_loso, run_loso_tuned, scope_instances, scope_windows, train_scope_detector,
    Confusion, LosoOptions, NearestCentroidFactory, NetworkDetector, NetworkFactory, TuningGrid,
    WindowDetector,
};
use egd_core::models::{
    check_architectures, check_layers, decode_checkpoint, encode_checkpoint, load_checkpoint,
    majority_vote, save_checkpoint, select_references, Architecture, CheckResult, CheckpointError,
    CheckpointInfo, ModelConfig, ReferenceBank, Scope, GRADCHECK_TOLERANCE,
};
use egd_core::monitor::{run_monitor, MonitorModel, Router, Verdict};
use egd_core::preprocess::{
    cut_windows, euler_to_rotation, rotation_to_euler, EulerZyx, FeatureMatrix, FeatureWindow,
    WindowConfig, NUM_CHANNELS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

// criterion 1
const GRAD_INSTANCES: usize = 20;
const GRAD_PER_TENSOR: usize = 4;
const GRAD_BUDGET: Duration = Duration::from_secs(120);
// criterion 3
const EULER_TOLERANCE: f64 = 1e-9;
const EULER_MAX_PITCH: f64 = 1.5;
// criterion 5
const E2E_DATA_SEED: u64 = 7;
const E2E_MODEL_SEEDS: [u64; 3] = [0, 1, 2];
const BASELINE_BAND: (f64, f64) = (0.70, 0.80);
const SIAMESE_FLOOR: f64 = 0.85;
const SINGLE_MARGIN: f64 = 0.02;
const E2E_BUDGET: Duration = Duration::from_secs(20 * 60);
// criterion 8
const LATENCY_REFERENCES: usize = 50;
const LATENCY_WINDOWS: usize = 50;
const LATENCY_REPETITIONS: usize = 3;
const STRIDE_PERIOD_MS: f64 = 1333.0;
// criterion 9
const PAPER_F1: f64 = 0.95;
const REPLICATION_BAND: f64 = 0.10;

const TINY: &str = r#"{"conv_filters":[8,4],"lstm_hidden":8,"lstm_layers":1,"fc_layers":[8],"epochs":2,"max_pairs_per_epoch":64}"#;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn tiny(arch: Architecture, seed: u64) -> ModelConfig {
    ModelConfig::new(arch)
        .with_overrides(&serde_json::from_str(TINY).unwrap())
        .map(|c| ModelConfig { seed, ..c })
        .unwrap()
}

fn synthetic(subjects: &[&str], seed: u64) -> Vec<TrialRecord> {
    let cfg = SyntheticConfig {
        subjects: subjects.iter().map(|s| s.to_string()).collect(),
        ..SyntheticConfig::default()
    };
    synthesize_trials(&cfg, seed).unwrap()
}

fn worst(results: &[CheckResult]) -> String {
    let r = results
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .unwrap();
    format!("{} {:.2e}", r.name, r.max_rel_error)
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let layers = check_layers(1, GRAD_INSTANCES).unwrap();
    let archs = check_architectures(1, GRAD_INSTANCES, GRAD_PER_TENSOR).unwrap();
    let elapsed = t.elapsed();
    let failed: Vec<&str> = layers
        .iter()
        .chain(&archs)
        .filter(|r| !r.passed)
        .map(|r| r.name.as_str())
        .collect();
    let skipped: usize = archs.iter().map(|r| r.skipped).sum();
    let checked: usize = archs.iter().map(|r| r.checked).sum();
    verdict(
        failed.is_empty() && elapsed < GRAD_BUDGET,
        format!(
            "{} ops and {} architectures × {GRAD_INSTANCES} instances, tolerance {GRADCHECK_TOLERANCE:e}; worst op {}, worst architecture {}; {checked} network coordinates checked, {skipped} skipped as kinks; {:.0} s{}",
            layers.len(),
            archs.len(),
            worst(&layers),
            worst(&archs),
            elapsed.as_secs_f64(),
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        ),
    )
}

fn brute_force_starts(len: usize, cfg: &WindowConfig) -> Vec<usize> {
    let full: Vec<usize> = (0..len)
        .filter(|s| s % cfg.stride == 0 && s + cfg.window_length <= len)
        .collect();
    if full.is_empty() && len >= cfg.min_padded_length {
        vec![0]
    } else {
        full
    }
}

fn oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = WindowConfig::default();
    let mut window_mismatch = 0;
    for _ in 0..1000 {
        let len = rng.random_range(0..400);
        let cols: Vec<[f64; NUM_CHANNELS]> = (0..len)
            .map(|t| std::array::from_fn(|c| (t * 100 + c) as f64))
            .collect();
        let starts: Vec<usize> = cut_windows(&FeatureMatrix::from_columns(&cols), &cfg)
            .iter()
            .map(|w| w.0)
            .collect();
        let expected = brute_force_starts(len, &cfg);
        window_mismatch += usize::from(cfg.offsets(len) != expected || starts != expected);
    }
    let mut vote_mismatch = 0;
    let mut sets = 0;
    for n in 1..=10usize {
        for mask in 0u32..(1 << n) {
            let bits: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let ones = mask.count_ones() as usize;
            let expected = ones >= n - ones;
            let (_, got) = majority_vote(&bits).unwrap();
            vote_mismatch +=
                usize::from(got != expected || instance_verdict(&bits) != Some(expected));
            sets += 1;
        }
    }
    let scopes: Vec<Scope> = GestureClass::MODELED
        .iter()
        .map(|&g| Scope {
            task: None,
            gesture: Some(g),
        })
        .collect();
    let mut f1_mismatch = 0;
    for _ in 0..100 {
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        let tables: Vec<(Scope, Confusion)> = scopes
            .iter()
            .map(|s| {
                let mut c = Confusion::default();
                for _ in 0..rng.random_range(0..40) {
                    let (truth, pred) = (rng.random_bool(0.4), rng.random_bool(0.5));
                    c.record(truth, pred);
                    tp += u64::from(truth && pred);
                    fp += u64::from(!truth && pred);
                    fn_ += u64::from(truth && !pred);
                }
                (*s, c)
            })
            .collect();
        let denom = 2 * tp + fp + fn_;
        let expected = if denom == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        };
        f1_mismatch += usize::from(compute_metrics(&tables).micro_f1 != expected);
    }
    verdict(
        window_mismatch + vote_mismatch + f1_mismatch == 0,
        format!(
            "windowing 1000 lengths: {window_mismatch} mismatches; voting {sets} reference sets: {vote_mismatch}; micro F1 100 tables: {f1_mismatch}"
        ),
    )
}

fn euler() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let e = EulerZyx {
            yaw: rng.random_range(-PI..PI),
            pitch: rng.random_range(-EULER_MAX_PITCH..=EULER_MAX_PITCH),
            roll: rng.random_range(-PI..PI),
        };
        let b = rotation_to_euler(&euler_to_rotation(e)).unwrap();
        worst = worst
            .max((e.yaw - b.yaw).abs())
            .max((e.pitch - b.pitch).abs())
            .max((e.roll - b.roll).abs());
    }
    let mut canonical = true;
    for pitch in [FRAC_PI_2, -FRAC_PI_2] {
        for (yaw, roll) in [(0.3, 0.0), (-1.2, 0.5), (2.0, -0.7)] {
            let r = euler_to_rotation(EulerZyx { yaw, pitch, roll });
            let e = rotation_to_euler(&r).unwrap();
            let back = euler_to_rotation(e);
            let same = r
                .iter()
                .flatten()
                .zip(back.iter().flatten())
                .all(|(a, b)| (a - b).abs() < 1e-12);
            canonical &= e.roll == 0.0 && (e.pitch - pitch).abs() < 1e-7 && same;
        }
    }
    verdict(
        worst < EULER_TOLERANCE && canonical,
        format!(
            "worst round-trip error {worst:.1e} (limit {EULER_TOLERANCE:e}); gimbal lock gives roll 0 and the same rotation: {canonical}"
        ),
    )
}

struct Cli {
    root: PathBuf,
}

impl Cli {
    /// Runs inside `root` so that paths echoed into run.json are relative
    /// and the two passes stay comparable.
    fn run(&self, args: &[&str]) -> Result<String, String> {
        std::fs::create_dir_all(&self.root).map_err(|e| e.to_string())?;
        let out = Command::new(env!("CARGO_BIN_EXE_egd"))
            .current_dir(&self.root)
            .args(args)
            .env_remove("EGD_SEED")
            .env("RUST_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(String::from_utf8_lossy(&out.stdout).into_owned())
        } else {
            Err(format!(
                "egd {args:?}: {}",
                String::from_utf8_lossy(&out.stderr)
            ))
        }
    }

    fn p(&self, rel: &str) -> String {
        rel.to_string()
    }

    fn abs(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let Ok(entries) = std::fs::read_dir(&dir) else {
            continue;
        };
        for e in entries {
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

/// Every deterministic artifact of one full pipeline pass, keyed by name.
/// Bench timings and monitor latencies are wall-clock measurements; only
/// the monitor verdict stream is compared.
fn pipeline(cli: &Cli) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut art = BTreeMap::new();
    let data = cli.p("data");
    cli.run(&["synth", "--out", &data, "--trials", "20", "--seed", "11"])?;
    for (k, v) in files(&cli.root.join("data")) {
        art.insert(format!("synth/{}", k.display()), v);
    }
    for arch in ["cnn", "lstm", "siamese-cnn", "siamese-lstm"] {
        let ck = cli.p(&format!("{arch}.egd"));
        cli.run(&[
            "train",
            "--data",
            &data,
            "--setup",
            "gst",
            "--gesture",
            "G1",
            "--model",
            arch,
            "--config",
            TINY,
            "--holdout",
            "5",
            "--seed",
            "3",
            "--out",
            &ck,
        ])?;
        let ev = cli.p(&format!("eval-{arch}"));
        cli.run(&[
            "evaluate",
            "--data",
            &data,
            "--checkpoint",
            &ck,
            "--out",
            &ev,
        ])?;
        art.insert(
            format!("train/{arch}.egd"),
            std::fs::read(cli.abs(&ck)).unwrap(),
        );
        for f in ["metrics.csv", "instances.csv", "windows.csv", "run.json"] {
            art.insert(
                format!("evaluate/{arch}/{f}"),
                std::fs::read(cli.abs(&ev).join(f)).unwrap(),
            );
        }
    }
    for (name, model, config) in [
        ("loso-net", "siamese-cnn", Some(TINY)),
        ("loso-nc", "nearest-centroid", None),
    ] {
        let out = cli.p(name);
        let mut args = vec!["loso", "--data", &data, "--setup", "gst", "--model", model];
        args.extend(config.map(|c| ["--config", c]).into_iter().flatten());
        args.extend(["--seed", "3", "--out", &out]);
        cli.run(&args)?;
        for (k, v) in files(&cli.abs(&out)) {
            art.insert(format!("{name}/{}", k.display()), v);
        }
    }
    let kld = cli.p("kld");
    cli.run(&["kld", "--data", &data, "--out", &kld])?;
    art.insert(
        "kld/kld.csv".into(),
        std::fs::read(cli.abs(&kld).join("kld.csv")).unwrap(),
    );
    let gc = cli.p("gradcheck");
    cli.run(&[
        "gradcheck",
        "--instances",
        "2",
        "--per-tensor",
        "2",
        "--seed",
        "3",
        "--out",
        &gc,
    ])?;
    art.insert(
        "gradcheck/gradcheck.csv".into(),
        std::fs::read(cli.abs(&gc).join("gradcheck.csv")).unwrap(),
    );
    let mon = cli.p("monitor");
    cli.run(&[
        "monitor",
        "--data",
        &data,
        "--checkpoint",
        &cli.p("siamese-cnn.egd"),
        "--trial",
        "S_B005",
        "--rate",
        "0",
        "--out",
        &mon,
    ])?;
    let events = std::fs::read_to_string(cli.abs(&mon).join("events.jsonl")).unwrap();
    let verdicts: Vec<String> = events
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            format!(
                "{} {} {} {}",
                v["frame"], v["gesture"], v["verdict"], v["score"]
            )
        })
        .collect();
    art.insert("monitor/verdicts".into(), verdicts.join("\n").into_bytes());
    cli.run(&[
        "bench",
        "--data",
        &data,
        "--references",
        "5",
        "--windows",
        "5",
        "--repetitions",
        "1",
        "--out",
        &cli.p("bench"),
    ])?;
    Ok(art)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        pipeline(&Cli {
            root: tmp.path().join(name),
        })
    };
    match (run("a"), run("b")) {
        (Ok(a), Ok(b)) => {
            let differ: Vec<&String> = a
                .keys()
                .filter(|k| b.get(*k) != a.get(*k))
                .chain(b.keys().filter(|k| !a.contains_key(*k)))
                .collect();
            verdict(
                differ.is_empty(),
                format!(
                    "synth, train ×4, evaluate ×4, loso ×2, kld, gradcheck, monitor verdicts: {} artifacts compared, {} differ{}",
                    a.len(),
                    differ.len(),
                    if differ.is_empty() { String::new() } else { format!(" ({:?})", differ) }
                ),
            )
        }
        (Err(e), _) | (_, Err(e)) => Outcome::Fail(e),
    }
}

fn end_to_end() -> Outcome {
    let t = Instant::now();
    let trials = synthesize_trials(&SyntheticConfig::default(), E2E_DATA_SEED).unwrap();
    let opts = LosoOptions::default();
    let baseline = run_loso(&trials, &opts, &NearestCentroidFactory)
        .unwrap()
        .metrics
        .micro_f1;
    let configs: [(Architecture, &str); 4] = [
        (Architecture::Cnn, r#"{"epochs":100}"#),
        (Architecture::Lstm, r#"{"epochs":25}"#),
        (
            Architecture::SiameseCnn,
            r#"{"epochs":30,"max_pairs_per_epoch":256}"#,
        ),
        (
            Architecture::SiameseLstm,
            r#"{"epochs":20,"max_pairs_per_epoch":128}"#,
        ),
    ];
    let mut means = BTreeMap::new();
    let mut lines = Vec::new();
    let mut floor_ok = true;
    for (arch, overrides) in configs {
        let config = ModelConfig::new(arch)
            .with_overrides(&serde_json::from_str(overrides).unwrap())
            .unwrap();
        let scores: Vec<f64> = E2E_MODEL_SEEDS
            .iter()
            .map(|&seed| {
                run_loso(
                    &trials,
                    &LosoOptions {
                        seed,
                        ..opts.clone()
                    },
                    &NetworkFactory {
                        config: config.clone(),
                    },
                )
                .unwrap()
                .metrics
                .micro_f1
            })
            .collect();
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        if arch.is_siamese() {
            floor_ok &= scores.iter().all(|&s| s >= SIAMESE_FLOOR);
        }
        lines.push(format!(
            "{arch} {} mean {mean:.3}",
            scores
                .iter()
                .map(|s| format!("{s:.3}"))
                .collect::<Vec<_>>()
                .join("/")
        ));
        means.insert(arch, mean);
    }
    let trend_ok = [Architecture::SiameseCnn, Architecture::SiameseLstm]
        .iter()
        .all(|a| means[a] >= means[&a.single()] - SINGLE_MARGIN);
    let baseline_ok = (BASELINE_BAND.0..=BASELINE_BAND.1).contains(&baseline);
    let elapsed = t.elapsed();
    verdict(
        baseline_ok && floor_ok && trend_ok && elapsed < E2E_BUDGET,
        format!(
            "GST* LOSO on seed {E2E_DATA_SEED}: nearest-centroid {baseline:.3} (band {:?}); {}; Siamese ≥ {SIAMESE_FLOOR} every seed: {floor_ok}; Siamese mean ≥ single − {SINGLE_MARGIN}: {trend_ok}; {:.0} s on {} core(s)",
            BASELINE_BAND,
            lines.join(", "),
            elapsed.as_secs_f64(),
            std::thread::available_parallelism().map_or(1, |n| n.get())
        ),
    )
}

struct Tiny {
    trials: Vec<TrialRecord>,
    detector: NetworkDetector,
    info: CheckpointInfo,
}

fn train_tiny(trials: Vec<TrialRecord>, arch: Architecture, gestures: &[GestureClass]) -> Tiny {
    let train: Vec<&TrialRecord> = trials.iter().filter(|t| t.id.repetition != 5).collect();
    let window = WindowConfig::default();
    let (detector, stats) =
        train_scope_detector(&train, &Scope::ALL, gestures, &window, &tiny(arch, 5)).unwrap();
    let mut training_trials: Vec<String> = train.iter().map(|t| t.id.to_string()).collect();
    training_trials.sort();
    let info = CheckpointInfo {
        setup: "gtt".into(),
        scope: Scope::ALL,
        gestures: gestures.to_vec(),
        channel_stats: stats,
        window,
        training_trials,
    };
    Tiny {
        trials,
        detector,
        info,
    }
}

fn all_windows(trials: &[TrialRecord], info: &CheckpointInfo) -> Vec<FeatureWindow> {
    let refs: Vec<&TrialRecord> = trials.iter().collect();
    let inst = scope_instances(&refs, &info.scope, &info.gestures);
    scope_windows(&inst, &info.channel_stats, &info.window)
        .unwrap()
        .into_iter()
        .flatten()
        .collect()
}

fn predictions(det: &dyn WindowDetector, windows: &[FeatureWindow]) -> Vec<(u64, bool)> {
    windows
        .iter()
        .map(|w| {
            let d = det.detect(w).unwrap();
            (d.score.to_bits(), d.erroneous)
        })
        .collect()
}

fn checkpoints() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut identical = Vec::new();
    let mut windows = 0;
    for arch in Architecture::ALL {
        let t = train_tiny(synthetic(&["B"], 13), arch, &GestureClass::MODELED);
        let path = tmp.path().join(format!("{arch}.egd"));
        save_checkpoint(&t.detector.network, &t.info, &path).unwrap();
        let loaded = checkpoint_detector(&load_checkpoint(&path).unwrap(), &t.trials).unwrap();
        let ws = all_windows(&t.trials, &t.info);
        windows += ws.len();
        identical.push((
            arch,
            predictions(&t.detector, &ws) == predictions(&loaded, &ws),
        ));
    }
    let t = train_tiny(
        synthetic(&["B"], 13),
        Architecture::Cnn,
        &GestureClass::MODELED,
    );
    let good = encode_checkpoint(&t.detector.network, &t.info);
    let n = u32::from_le_bytes(good[4..8].try_into().unwrap()) as usize;
    let reframe = |edit: &dyn Fn(&mut Value)| {
        let mut meta: Value = serde_json::from_slice(&good[8..8 + n]).unwrap();
        edit(&mut meta);
        let json = serde_json::to_vec(&meta).unwrap();
        let mut out = good[..4].to_vec();
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&good[8 + n..]);
        out
    };
    let mut magic = good.clone();
    magic[1] ^= 0xff;
    let mut garbled = good.clone();
    garbled[8] = b'#';
    let mut trailing = good.clone();
    trailing.push(0);
    type Check = fn(&CheckpointError) -> bool;
    let cases: Vec<(&str, Vec<u8>, Check)> = vec![
        ("bad magic", magic, |e| {
            matches!(e, CheckpointError::NotACheckpoint)
        }),
        ("truncated header", good[..6].to_vec(), |e| {
            matches!(e, CheckpointError::Truncated { .. })
        }),
        ("truncated metadata", good[..8 + n / 2].to_vec(), |e| {
            matches!(e, CheckpointError::Truncated { .. })
        }),
        ("truncated payload", good[..good.len() - 2].to_vec(), |e| {
            matches!(e, CheckpointError::Truncated { .. })
        }),
        (
            "future version",
            reframe(&|m| m["format_version"] = 99.into()),
            |e| matches!(e, CheckpointError::UnsupportedVersion(99)),
        ),
        ("garbled metadata", garbled, |e| {
            matches!(e, CheckpointError::Metadata(_))
        }),
        (
            "changed layer width",
            reframe(&|m| m["config"]["fc_layers"] = serde_json::json!([9])),
            |e| matches!(e, CheckpointError::ManifestMismatch(_)),
        ),
        ("trailing bytes", trailing, |e| {
            matches!(e, CheckpointError::ManifestMismatch(_))
        }),
    ];
    let wrong: Vec<&str> = cases
        .iter()
        .filter(|(_, bytes, ok)| !decode_checkpoint(bytes).err().is_some_and(|e| ok(&e)))
        .map(|(name, _, _)| *name)
        .collect();
    let all_identical = identical.iter().all(|(_, same)| *same);
    verdict(
        all_identical && wrong.is_empty() && decode_checkpoint(&good).is_ok(),
        format!(
            "save→load→predict bit-identical for {} on {windows} windows: {all_identical}; {} corruption classes, {} misclassified{}",
            identical.iter().map(|(a, _)| a.name()).collect::<Vec<_>>().join(", "),
            cases.len(),
            wrong.len(),
            if wrong.is_empty() { String::new() } else { format!(" ({})", wrong.join(", ")) }
        ),
    )
}

fn online_offline() -> Outcome {
    let t = train_tiny(
        synthetic(&["B", "C"], 17),
        Architecture::SiameseCnn,
        &GestureClass::MODELED,
    );
    let ckpt = decode_checkpoint(&encode_checkpoint(&t.detector.network, &t.info)).unwrap();
    let router = Router::new(vec![
        MonitorModel::from_checkpoint(&ckpt, &t.trials).unwrap()
    ])
    .unwrap();
    let model = &router.models()[0];
    let (mut windows, mut instances, mut mismatches) = (0, 0, 0);
    for trial in &t.trials {
        let report = run_monitor(trial, &router, 0.0, &mut |_| Ok(())).unwrap();
        let inst = scope_instances(&[trial], &model.scope, &model.gestures);
        let offline = scope_windows(&inst, &model.stats, router.window()).unwrap();
        let flat: Vec<&FeatureWindow> = offline.iter().flatten().collect();
        let scored: Vec<_> = report
            .events
            .iter()
            .filter(|e| matches!(e.verdict, Verdict::Normal | Verdict::Erroneous))
            .collect();
        mismatches += usize::from(flat.len() != report.windows.len() || scored.len() != flat.len());
        for ((w, online), e) in flat.iter().zip(&report.windows).zip(&scored) {
            let d = model.detector.detect(w).unwrap();
            let same = *w == online
                && e.score.map(f64::to_bits) == Some(d.score.to_bits())
                && (e.verdict == Verdict::Erroneous) == d.erroneous;
            mismatches += usize::from(!same);
            windows += 1;
        }
        for ((_, i), ws) in inst.iter().zip(&offline) {
            let off: Vec<bool> = ws
                .iter()
                .map(|w| model.detector.detect(w).unwrap().erroneous)
                .collect();
            let on: Vec<bool> = scored
                .iter()
                .filter(|e| e.gesture_index == i + 1)
                .map(|e| e.verdict == Verdict::Erroneous)
                .collect();
            mismatches += usize::from(instance_verdict(&off) != instance_verdict(&on));
            instances += 1;
        }
    }
    verdict(
        mismatches == 0 && t.trials.len() == 20,
        format!(
            "{} trials, {windows} windows and {instances} instance verdicts compared, {mismatches} mismatches",
            t.trials.len()
        ),
    )
}

fn latency() -> Outcome {
    let trials = synthesize_trials(&SyntheticConfig::default(), E2E_DATA_SEED).unwrap();
    let refs: Vec<&TrialRecord> = trials.iter().collect();
    let window = WindowConfig::default();
    let inst = scope_instances(&refs, &Scope::ALL, &GestureClass::MODELED);
    let stats = fit_scope_stats(&inst, &window).unwrap();
    let windows: Vec<FeatureWindow> = scope_windows(&inst, &stats, &window)
        .unwrap()
        .into_iter()
        .flatten()
        .collect();
    let calibration: Vec<&FeatureWindow> = windows.iter().take(32).collect();
    let normal: Vec<&FeatureWindow> = windows.iter().filter(|w| !w.label).collect();
    let references = select_references(&normal, Some(LATENCY_REFERENCES), 1);
    let timed: Vec<&FeatureWindow> = windows
        .iter()
        .step_by(windows.len() / LATENCY_WINDOWS)
        .take(LATENCY_WINDOWS)
        .collect();
    let mut mean_ms = BTreeMap::new();
    let mut built = BTreeMap::new();
    for arch in [Architecture::SiameseCnn, Architecture::SiameseLstm] {
        let net = fresh_network(&ModelConfig::new(arch), &calibration).unwrap();
        let bank = ReferenceBank::build(&net, &references).unwrap();
        let r = latency_bench(&net, Some(&bank), &timed, LATENCY_REPETITIONS).unwrap();
        mean_ms.insert(arch, r.mean_ms);
        built.insert(arch, (net, bank));
    }
    let ordered = mean_ms[&Architecture::SiameseCnn] < mean_ms[&Architecture::SiameseLstm];

    // real-time replay through the slower network
    let (network, bank) = built.remove(&Architecture::SiameseLstm).unwrap();
    let router = Router::new(vec![MonitorModel {
        scope: Scope::ALL,
        gestures: GestureClass::MODELED.to_vec(),
        stats,
        window,
        detector: NetworkDetector {
            network,
            bank: Some(bank),
            losses: Vec::new(),
        },
    }])
    .unwrap();
    let trial = &trials[0];
    let s = run_monitor(trial, &router, 1.0, &mut |_| Ok(()))
        .unwrap()
        .summary;
    let sustained = s.windows > 0 && s.mean_latency_ms < STRIDE_PERIOD_MS;
    verdict(
        ordered && sustained,
        format!(
            "{LATENCY_REFERENCES} shared references: Siamese-CNN {:.3} ms < Siamese-LSTM {:.3} ms per window: {ordered}; 1.0× replay of {} ({} frames, {} windows) with Siamese-LSTM: mean latency {:.2} ms, p95 {:.2} ms, max {:.2} ms < {STRIDE_PERIOD_MS} ms",
            mean_ms[&Architecture::SiameseCnn],
            mean_ms[&Architecture::SiameseLstm],
            s.trial,
            s.frames,
            s.windows,
            s.mean_latency_ms,
            s.p95_latency_ms,
            s.max_latency_ms
        ),
    )
}

fn replication() -> Outcome {
    let Some(root) = std::env::var_os("EGD_JIGSAWS").map(PathBuf::from) else {
        return Outcome::Skip("optional; set EGD_JIGSAWS to a dataset root with labels.csv".into());
    };
    let manifest = match assemble_dataset(&root, &root.join("labels.csv")) {
        Ok(m) => m,
        Err(e) => return Outcome::Skip(format!("dataset at {} unreadable: {e}", root.display())),
    };
    let base = ModelConfig::new(Architecture::SiameseLstm);
    match run_loso_tuned(
        &manifest.trials,
        &LosoOptions::default(),
        &base,
        &TuningGrid::default(),
    ) {
        Ok((report, _)) => {
            let f1 = report.metrics.micro_f1;
            // best-effort: reported, never gating
            Outcome::Skip(format!(
                "not gating; GST* Siamese-LSTM micro F1 {f1:.3}, within ±{REPLICATION_BAND} of {PAPER_F1}: {}",
                (f1 - PAPER_F1).abs() <= REPLICATION_BAND
            ))
        }
        Err(e) => Outcome::Skip(format!("not gating; run failed: {e}")),
    }
}

fn main() {
    // `cargo test -- --list` and filters come from the test runner; this
    // target has no individual tests to list.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient correctness", gradients),
        ("oracle equivalences", oracles),
        ("Euler round-trip", euler),
        ("CLI determinism", determinism),
        ("synthetic end-to-end", end_to_end),
        ("checkpoint integrity", checkpoints),
        ("online/offline equivalence", online_offline),
        ("latency ordering", latency),
        ("replication track", replication),
    ];
    // EGD_CRITERIA=1,4 runs a subset; the rest are reported as skipped
    let selected: Option<Vec<usize>> = std::env::var("EGD_CRITERIA")
        .ok()
        .map(|v| v.split(',').filter_map(|k| k.trim().parse().ok()).collect());
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = match &selected {
            Some(ks) if !ks.contains(&(k + 1)) => {
                Outcome::Skip("not selected by EGD_CRITERIA".into())
            }
            _ => run(),
        };
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!(
            "criterion {} ({name}): {tag} [{:.1} s] {detail}",
            k + 1,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all gating criteria passed");
}
