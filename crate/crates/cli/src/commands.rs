use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use egd_core::dataio::{
    assemble_dataset, generate_synthetic, DatasetManifest, GestureClass, SyntheticConfig,
    TrialRecord,
};
use egd_core::eval::{
    checkpoint_detector, fit_scope_stats, fresh_network, kld_matrix, latency_bench, latency_csv,
    run_loso, run_loso_tuned, scope_instances, scope_windows, score_instances,
    train_scope_detector, DetectorFactory, LatencyReport, LosoOptions, LosoReport, MetricsReport,
    NearestCentroidFactory, NetworkFactory, TrainingSetup, TuningGrid,
};
use egd_core::models::{
    check_architectures, check_layers, load_checkpoint, save_checkpoint, select_references,
    Architecture, CheckResult, CheckpointInfo, ModelConfig, ReferenceBank, Scope,
};
use egd_core::monitor::{event_json, run_monitor, MonitorModel, MonitorSummary, Router};
use egd_core::preprocess::{FeatureWindow, WindowConfig};
use egd_core::rng::derive_seed;
use log::{info, warn};
use serde_json::{json, Value};

use crate::args::*;
use crate::Failure;

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
const BENCH_STREAM: u64 = 0xbe;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow::anyhow!(msg.into()))
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

/// `--config` value: inline JSON or `@path`.
fn parse_overrides(raw: Option<&str>) -> Result<Option<Value>, Failure> {
    let Some(raw) = raw else { return Ok(None) };
    let text = match raw.strip_prefix('@') {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {path}: {e}")))?,
        None => raw.to_string(),
    };
    let v: Value = serde_json::from_str(&text).map_err(|e| invalid(format!("--config: {e}")))?;
    if !v.is_object() {
        return Err(invalid("--config must be a JSON object"));
    }
    Ok(Some(v))
}

fn parse_architecture(name: &str) -> Result<Architecture, Failure> {
    name.parse().map_err(invalid)
}

fn model_config(arch: Architecture, seed: u64, raw: Option<&str>) -> Result<ModelConfig, Failure> {
    let base = ModelConfig {
        seed,
        ..ModelConfig::new(arch)
    };
    let cfg = match parse_overrides(raw)? {
        Some(o) => base
            .with_overrides(&o)
            .map_err(|e| invalid(e.to_string()))?,
        None => base,
    };
    if cfg.architecture != arch {
        return Err(invalid(
            "--config may not change the architecture; use --model",
        ));
    }
    Ok(cfg)
}

fn log_resolved(command: &str, seed: u64, config: &impl serde::Serialize) {
    info!(
        "{command}: seed {seed}, config {}",
        serde_json::to_string(config).expect("serializable")
    );
}

fn load(data: &DataArgs) -> Result<DatasetManifest, Failure> {
    let labels = data
        .labels
        .clone()
        .unwrap_or_else(|| data.data.join("labels.csv"));
    let manifest = assemble_dataset(&data.data, &labels).map_err(runtime)?;
    for s in &manifest.skipped {
        warn!("skipped {s}");
    }
    if manifest.trials.is_empty() {
        return Err(runtime(anyhow::anyhow!(
            "no trials found under {}",
            data.data.display()
        )));
    }
    info!(
        "loaded {} trials from {}",
        manifest.trials.len(),
        data.data.display()
    );
    Ok(manifest)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::Runtime)?;
    }
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Runtime)
}

/// Deterministic run metadata: no timestamps or timings.
fn write_run_json(dir: &Path, command: &str, seed: u64, config: Value) -> Result<(), Failure> {
    let meta = json!({
        "command": command,
        "tool_version": TOOL_VERSION,
        "seed": seed,
        "config": config,
    });
    write(
        &dir.join("run.json"),
        serde_json::to_string_pretty(&meta).expect("serializable") + "\n",
    )
}

/// Scope named by `--task`/`--gesture`, checked against the setup.
fn scope_of(args: &ScopeArgs, required: bool) -> Result<Option<Scope>, Failure> {
    let setup = args.setup;
    if let Some(g) = args.gesture {
        if !GestureClass::MODELED.contains(&g) {
            return Err(invalid(format!(
                "gesture {g} has no model (supported: G1, G2, G3, G4, G6)"
            )));
        }
    }
    if args.task.is_none() && args.gesture.is_none() && !required {
        return Ok(None);
    }
    let scope = Scope {
        task: args.task,
        gesture: args.gesture,
    };
    setup.validate_scope(&scope).map_err(|e| {
        let mut need = Vec::new();
        if setup.binds_task() {
            need.push("--task");
        }
        if setup.binds_gesture() {
            need.push("--gesture");
        }
        let flags = if need.is_empty() {
            "neither --task nor --gesture".to_string()
        } else {
            need.join(" and ")
        };
        invalid(format!("setup {} takes {flags} ({e})", setup.name()))
    })?;
    Ok(Some(scope))
}

pub fn synth(args: &SynthArgs) -> Result<(), Failure> {
    let mut cfg = SyntheticConfig::with_trials(args.trials).map_err(|e| invalid(e.to_string()))?;
    if let Some(o) = parse_overrides(args.config.as_deref())? {
        let mut base = serde_json::to_value(&cfg).expect("serializable");
        for (k, v) in o.as_object().expect("checked object") {
            if base.get(k).is_none() {
                return Err(invalid(format!("unknown synthetic config field {k:?}")));
            }
            base[k] = v.clone();
        }
        cfg = serde_json::from_value(base).map_err(|e| invalid(format!("--config: {e}")))?;
    }
    cfg.validate().map_err(|e| invalid(e.to_string()))?;
    log_resolved("synth", args.seed.seed, &cfg);
    let manifest = generate_synthetic(&cfg, args.seed.seed, &args.out).map_err(runtime)?;
    println!(
        "wrote {} trials to {}",
        manifest.trials.len(),
        args.out.display()
    );
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<(), Failure> {
    let scope = scope_of(&args.scope, true)?.expect("required scope");
    let arch = parse_architecture(&args.model.model)?;
    let config = model_config(arch, args.seed.seed, args.model.config.as_deref())?;
    let window = WindowConfig::default();
    log_resolved("train", args.seed.seed, &config);
    let manifest = load(&args.data)?;
    let trials: Vec<&TrialRecord> = manifest
        .trials
        .iter()
        .filter(|t| args.holdout.is_none_or(|r| t.id.repetition != r))
        .collect();
    if trials.is_empty() {
        return Err(invalid("the holdout leaves no training trials"));
    }
    let gestures = GestureClass::MODELED.to_vec();
    let (detector, stats) =
        train_scope_detector(&trials, &scope, &gestures, &window, &config).map_err(runtime)?;
    if let Some(last) = detector.losses.last() {
        info!("final training loss {last:.5}");
    }
    let mut training_trials: Vec<String> = trials.iter().map(|t| t.id.to_string()).collect();
    training_trials.sort();
    let info = CheckpointInfo {
        setup: args.scope.setup.name().to_string(),
        scope,
        gestures,
        channel_stats: stats,
        window,
        training_trials,
    };
    save_checkpoint(&detector.network, &info, &args.out).map_err(runtime)?;
    println!(
        "saved {arch} checkpoint for {} to {}",
        scope.label(),
        args.out.display()
    );
    Ok(())
}

fn find_trial<'a>(trials: &'a [TrialRecord], id: &str) -> Option<&'a TrialRecord> {
    trials
        .iter()
        .find(|t| t.id.to_string() == id || t.id.file_stem() == id)
}

fn write_reports(dir: &Path, report: &LosoReport) -> Result<(), Failure> {
    write(&dir.join("metrics.csv"), report.to_csv())?;
    write(&dir.join("instances.csv"), report.instances_csv())?;
    write(&dir.join("windows.csv"), report.windows_csv())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), Failure> {
    let ckpt = load_checkpoint(&args.checkpoint).map_err(runtime)?;
    let meta = &ckpt.meta;
    let setup: TrainingSetup = meta
        .info
        .setup
        .parse()
        .map_err(|e: String| runtime(anyhow::anyhow!(e)))?;
    log_resolved("evaluate", meta.seed, &meta.config);
    let manifest = load(&args.data)?;
    let test: Vec<&TrialRecord> = if args.trials.is_empty() {
        manifest
            .trials
            .iter()
            .filter(|t| !meta.info.training_trials.contains(&t.id.to_string()))
            .collect()
    } else {
        args.trials
            .iter()
            .map(|id| {
                find_trial(&manifest.trials, id)
                    .ok_or_else(|| invalid(format!("trial {id} is not in the dataset")))
            })
            .collect::<Result<_, _>>()?
    };
    if test.is_empty() {
        return Err(invalid(
            "no evaluation trials: every trial was used for training (pass --trials)",
        ));
    }
    let detector = checkpoint_detector(&ckpt, &manifest.trials).map_err(runtime)?;
    let instances = scope_instances(&test, &meta.info.scope, &meta.info.gestures);
    let fold = test.first().map_or(0, |t| t.id.repetition);
    let result = score_instances(
        &detector,
        &instances,
        &meta.info.channel_stats,
        &meta.info.window,
        fold,
        meta.info.scope,
    )
    .map_err(runtime)?;
    let mut report = LosoReport {
        setup,
        detector: meta.architecture.name().to_string(),
        seed: meta.seed,
        folds: vec![result],
        skipped: Vec::new(),
        metrics: MetricsReport::from_folds(&[]),
    };
    report.refresh_metrics();
    write_reports(&args.out, &report)?;
    let trials: Vec<String> = test.iter().map(|t| t.id.to_string()).collect();
    write_run_json(
        &args.out,
        "evaluate",
        meta.seed,
        json!({
            "checkpoint": args.checkpoint,
            "model": meta.config,
            "scope": meta.info.scope.label(),
            "trials": trials,
        }),
    )?;
    println!(
        "{} checkpoint on {} held-out trial(s), scope {}, seed {}",
        report.detector,
        trials.len(),
        meta.info.scope.label(),
        meta.seed
    );
    print!("{}", report.metrics.pretty());
    Ok(())
}

pub fn loso(args: &LosoArgs) -> Result<(), Failure> {
    let scope = scope_of(&args.scope, false)?;
    if args.jobs == 0 {
        return Err(invalid("--jobs must be at least 1"));
    }
    let opts = LosoOptions {
        setup: args.scope.setup,
        seed: args.seed.seed,
        jobs: args.jobs,
        scope,
        ..LosoOptions::default()
    };
    let baseline = args.model == "nearest-centroid";
    let config = if baseline {
        if args.config.is_some() || args.tune {
            return Err(invalid(
                "nearest-centroid takes neither --config nor --tune",
            ));
        }
        None
    } else {
        let arch = parse_architecture(&args.model)?;
        Some(model_config(arch, args.seed.seed, args.config.as_deref())?)
    };
    let resolved = json!({
        "setup": opts.setup.name(),
        "model": args.model,
        "scope": scope.map(|s| s.label()),
        "window": opts.window,
        "gestures": opts.gestures,
        "network": config,
        "tune": args.tune.then(TuningGrid::default),
    });
    log_resolved("loso", args.seed.seed, &resolved);
    let manifest = load(&args.data)?;
    let mut run_meta = resolved;
    let report = match &config {
        Some(base) if args.tune => {
            let (report, chosen) =
                run_loso_tuned(&manifest.trials, &opts, base, &TuningGrid::default())
                    .map_err(runtime)?;
            run_meta["chosen"] = json!(chosen
                .iter()
                .map(|(rep, c)| json!({"fold": rep, "lr": c.lr, "batch_size": c.batch_size, "epochs": c.epochs}))
                .collect::<Vec<_>>());
            report
        }
        Some(base) => {
            let factory = NetworkFactory {
                config: base.clone(),
            };
            run_loso(&manifest.trials, &opts, &factory as &dyn DetectorFactory).map_err(runtime)?
        }
        None => run_loso(&manifest.trials, &opts, &NearestCentroidFactory).map_err(runtime)?,
    };
    for s in &report.skipped {
        warn!(
            "fold {} scope {} skipped: {}",
            s.fold,
            s.scope.label(),
            s.reason
        );
    }
    write_reports(&args.out, &report)?;
    write_run_json(&args.out, "loso", args.seed.seed, run_meta)?;
    print!("{}", report.pretty());
    Ok(())
}

pub fn kld(args: &KldArgs) -> Result<(), Failure> {
    if args.bins == 0 {
        return Err(invalid("--bins must be positive"));
    }
    log_resolved("kld", 0, &json!({ "bins": args.bins }));
    let manifest = load(&args.data)?;
    let m = kld_matrix(&manifest.trials, args.bins).map_err(runtime)?;
    for (class, n) in &m.excluded {
        warn!("excluded {}/{}: only {n} normal samples", class.1, class.0);
    }
    write(&args.out.join("kld.csv"), m.to_csv())?;
    write_run_json(&args.out, "kld", 0, json!({ "bins": args.bins }))?;
    print!("{}", m.pretty());
    Ok(())
}

/// Every in-scope window of the whole dataset, normalized with statistics
/// fitted on it.
fn all_windows(
    trials: &[TrialRecord],
    scope: &Scope,
    gestures: &[GestureClass],
    window: &WindowConfig,
    stats: Option<&egd_core::preprocess::ChannelStats>,
) -> Result<Vec<FeatureWindow>, Failure> {
    let refs: Vec<&TrialRecord> = trials.iter().collect();
    let inst = scope_instances(&refs, scope, gestures);
    let fitted;
    let stats = match stats {
        Some(s) => s,
        None => {
            fitted = fit_scope_stats(&inst, window).map_err(runtime)?;
            &fitted
        }
    };
    Ok(scope_windows(&inst, stats, window)
        .map_err(runtime)?
        .into_iter()
        .flatten()
        .collect())
}

fn take_spread(windows: &[FeatureWindow], n: usize) -> Vec<&FeatureWindow> {
    if windows.len() <= n {
        return windows.iter().collect();
    }
    (0..n).map(|k| &windows[k * windows.len() / n]).collect()
}

pub fn bench(args: &BenchArgs) -> Result<(), Failure> {
    if args.windows == 0 || args.repetitions == 0 || args.references == 0 {
        return Err(invalid(
            "--windows, --repetitions and --references must be positive",
        ));
    }
    if !args.checkpoint.is_empty() && !args.model.is_empty() {
        return Err(invalid("pass either --model or --checkpoint, not both"));
    }
    let window = WindowConfig::default();
    let gestures = GestureClass::MODELED.to_vec();
    let mut reports: Vec<LatencyReport> = Vec::new();
    let mut resolved = json!({
        "windows": args.windows,
        "repetitions": args.repetitions,
        "references": args.references,
    });
    if args.checkpoint.is_empty() {
        let names: Vec<String> = if args.model.is_empty() {
            Architecture::ALL
                .iter()
                .map(|a| a.name().to_string())
                .collect()
        } else {
            args.model.clone()
        };
        let configs = names
            .iter()
            .map(|n| {
                model_config(
                    parse_architecture(n)?,
                    args.seed.seed,
                    args.config.as_deref(),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        resolved["models"] = json!(configs);
        log_resolved("bench", args.seed.seed, &resolved);
        let manifest = load(&args.data)?;
        let windows = all_windows(&manifest.trials, &Scope::ALL, &gestures, &window, None)?;
        let normal: Vec<&FeatureWindow> = windows.iter().filter(|w| !w.label).collect();
        // one reference set shared by every Siamese network
        let refs = select_references(
            &normal,
            Some(args.references),
            derive_seed(args.seed.seed, &[BENCH_STREAM]),
        );
        let probe = take_spread(&windows, args.windows);
        for config in &configs {
            let net = fresh_network(config, &probe).map_err(runtime)?;
            let bank = if config.architecture.is_siamese() {
                Some(ReferenceBank::build(&net, &refs).map_err(runtime)?)
            } else {
                None
            };
            reports.push(
                latency_bench(&net, bank.as_ref(), &probe, args.repetitions).map_err(runtime)?,
            );
        }
    } else {
        resolved["checkpoints"] = json!(args.checkpoint);
        log_resolved("bench", args.seed.seed, &resolved);
        let manifest = load(&args.data)?;
        for path in &args.checkpoint {
            let ckpt = load_checkpoint(path).map_err(runtime)?;
            let info = &ckpt.meta.info;
            let det = checkpoint_detector(&ckpt, &manifest.trials).map_err(runtime)?;
            let windows = all_windows(
                &manifest.trials,
                &info.scope,
                &info.gestures,
                &info.window,
                Some(&info.channel_stats),
            )?;
            let probe = take_spread(&windows, args.windows);
            reports.push(
                latency_bench(&det.network, det.bank.as_ref(), &probe, args.repetitions)
                    .map_err(runtime)?,
            );
        }
    }
    write(&args.out.join("latency.csv"), latency_csv(&reports))?;
    write_run_json(&args.out, "bench", args.seed.seed, resolved)?;
    for r in &reports {
        println!(
            "{:<14} refs {:>4}  mean {:>9.3} ms  p95 {:>9.3} ms",
            r.architecture, r.reference_size, r.mean_ms, r.p95_ms
        );
    }
    Ok(())
}

pub fn monitor(args: &MonitorArgs) -> Result<(), Failure> {
    if !(args.rate.is_finite() && args.rate >= 0.0) {
        return Err(invalid("--rate must be a non-negative number"));
    }
    let resolved = json!({
        "checkpoints": args.checkpoint,
        "trial": args.trial,
        "rate": args.rate,
    });
    log_resolved("monitor", 0, &resolved);
    let manifest = load(&args.data)?;
    let trial = find_trial(&manifest.trials, &args.trial)
        .ok_or_else(|| invalid(format!("trial {} is not in the dataset", args.trial)))?;
    let models = args
        .checkpoint
        .iter()
        .map(|p| {
            let ckpt = load_checkpoint(p).map_err(runtime)?;
            MonitorModel::from_checkpoint(&ckpt, &manifest.trials).map_err(runtime)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let router = Router::new(models).map_err(runtime)?;
    let mut events_out: Box<dyn std::io::Write> = match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(runtime)?;
            let path: PathBuf = dir.join("events.jsonl");
            Box::new(std::io::BufWriter::new(
                fs::File::create(&path).map_err(runtime)?,
            ))
        }
        None => Box::new(std::io::stdout().lock()),
    };
    let mut sink = |e: &egd_core::monitor::DetectionEvent| {
        writeln!(events_out, "{}", event_json(e))
            .map_err(|err| egd_core::monitor::MonitorError::Sink(err.to_string()))
    };
    let report = run_monitor(trial, &router, args.rate, &mut sink).map_err(runtime)?;
    events_out.flush().map_err(runtime)?;
    let s = &report.summary;
    if let Some(dir) = &args.out {
        write(
            &dir.join("summary.csv"),
            format!("{}\n{}\n", MonitorSummary::csv_header(), s.csv_row()),
        )?;
        write_run_json(dir, "monitor", 0, resolved)?;
    }
    info!(
        "{}: {} windows, mean latency {:.3} ms (p95 {:.3}), stride period {:.0} ms, {} violations, {} unmonitored",
        s.trial, s.windows, s.mean_latency_ms, s.p95_latency_ms, s.stride_period_ms, s.violations, s.unmonitored
    );
    Ok(())
}

fn check_rows(kind: &str, results: &[CheckResult], out: &mut String) {
    for r in results {
        let (tensor, index) = r
            .worst
            .clone()
            .map_or((String::new(), String::new()), |(t, i)| (t, i.to_string()));
        out.push_str(&format!(
            "{kind},{},{},{},{},{:.3e},{tensor},{index},{}\n",
            r.name,
            r.instances,
            r.checked,
            r.skipped,
            r.max_rel_error,
            if r.passed { "pass" } else { "fail" }
        ));
    }
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<(), Failure> {
    if args.instances == 0 || args.per_tensor == 0 {
        return Err(invalid("--instances and --per-tensor must be positive"));
    }
    let resolved = json!({
        "instances": args.instances,
        "per_tensor": args.per_tensor,
        "step": egd_core::models::GRADCHECK_STEP,
        "tolerance": egd_core::models::GRADCHECK_TOLERANCE,
    });
    log_resolved("gradcheck", args.seed.seed, &resolved);
    let layers = check_layers(args.seed.seed, args.instances).map_err(runtime)?;
    let archs =
        check_architectures(args.seed.seed, args.instances, args.per_tensor).map_err(runtime)?;
    let mut csv = String::from(
        "kind,name,instances,checked,skipped,max_rel_error,worst_tensor,worst_index,result\n",
    );
    check_rows("op", &layers, &mut csv);
    check_rows("architecture", &archs, &mut csv);
    if let Some(dir) = &args.out {
        write(&dir.join("gradcheck.csv"), &csv)?;
        write_run_json(dir, "gradcheck", args.seed.seed, resolved)?;
    }
    for r in layers.iter().chain(&archs) {
        println!(
            "{:<5} {:<14} checked {:>6} skipped {:>4}  max rel {:.3e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.checked,
            r.skipped,
            r.max_rel_error
        );
    }
    let failed = layers.iter().chain(&archs).filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(runtime(anyhow::anyhow!("{failed} gradient checks failed")));
    }
    Ok(())
}
