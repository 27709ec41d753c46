use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{Confusion, FoldCounts, MetricsReport};
use super::{EvalError, TrainingSetup};
use crate::dataio::{split_loso_folds, Fold, GestureClass, TaskClass, TrialId, TrialRecord};
use crate::models::{
    detect, select_references, train_model, Checkpoint, DetectionResult, ModelConfig, ModelError,
    Network, ReferenceBank, Scope, TrainingData,
};
use crate::preprocess::{
    downsampled_instance, fit_channel_stats, instance_windows, ChannelStats, FeatureWindow,
    WindowConfig, WindowSource,
};
use crate::rng::derive_seed;

const REFERENCE_STREAM: u64 = 0x2ef;

/// A gesture instance addressed by its trial and 0-based transcript index.
pub type InstanceRef<'a> = (&'a TrialRecord, usize);

/// Labeled, modeled instances of the given trials that fall in `scope`.
pub fn scope_instances<'a>(
    trials: &[&'a TrialRecord],
    scope: &Scope,
    gestures: &[GestureClass],
) -> Vec<InstanceRef<'a>> {
    let mut out = Vec::new();
    for t in trials {
        for (i, inst) in t.gestures.iter().enumerate() {
            if let (Some(g), Some(_)) = (inst.gesture.supported(), inst.error) {
                if gestures.contains(&g) && scope.contains(t.id.task, g) {
                    out.push((*t, i));
                }
            }
        }
    }
    out
}

/// Normalization statistics over the downsampled training instances of a scope.
pub fn fit_scope_stats(
    instances: &[InstanceRef<'_>],
    cfg: &WindowConfig,
) -> Result<ChannelStats, EvalError> {
    let matrices = instances
        .iter()
        .map(|(t, i)| downsampled_instance(t, *i, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let mut trials: Vec<String> = Vec::new();
    for (t, _) in instances {
        let id = t.id.to_string();
        if !trials.contains(&id) {
            trials.push(id);
        }
    }
    Ok(fit_channel_stats(matrices.iter(), trials)?)
}

/// Windows per instance, in instance order; too-short instances give an empty list.
pub fn scope_windows(
    instances: &[InstanceRef<'_>],
    stats: &ChannelStats,
    cfg: &WindowConfig,
) -> Result<Vec<Vec<FeatureWindow>>, EvalError> {
    cfg.validate()?;
    Ok(instances
        .iter()
        .map(|(t, i)| instance_windows(t, *i, stats, cfg))
        .collect::<Result<_, _>>()?)
}

/// A trained per-window classifier.
pub trait WindowDetector: Send + Sync {
    fn detect(&self, window: &FeatureWindow) -> Result<DetectionResult, ModelError>;
}

/// Training inputs for one (fold, scope) unit.
pub struct TrainUnit<'a> {
    pub fold: u32,
    pub scope: Scope,
    pub seed: u64,
    pub stats: &'a ChannelStats,
    pub windows: &'a [&'a FeatureWindow],
}

pub trait DetectorFactory: Sync {
    fn name(&self) -> String;
    fn train(&self, unit: &TrainUnit<'_>) -> Result<Box<dyn WindowDetector>, EvalError>;
}

/// A trained network plus, for Siamese ones, its normal reference bank.
pub struct NetworkDetector {
    pub network: Network,
    pub bank: Option<ReferenceBank>,
    pub losses: Vec<f64>,
}

impl NetworkDetector {
    /// Reference windows are the normal training windows, optionally
    /// capped by seeded subsampling.
    pub fn train(config: &ModelConfig, windows: &[&FeatureWindow]) -> Result<Self, ModelError> {
        let trained = train_model(config, TrainingData::Windows(windows))?;
        let bank = if config.architecture.is_siamese() {
            let normal: Vec<&FeatureWindow> =
                windows.iter().copied().filter(|w| !w.label).collect();
            let refs = select_references(
                &normal,
                config.reference_cap,
                derive_seed(config.seed, &[REFERENCE_STREAM]),
            );
            Some(ReferenceBank::build(&trained.network, &refs)?)
        } else {
            None
        };
        Ok(Self {
            network: trained.network,
            bank,
            losses: trained.losses,
        })
    }
}

impl WindowDetector for NetworkDetector {
    fn detect(&self, window: &FeatureWindow) -> Result<DetectionResult, ModelError> {
        detect(&self.network, window, self.bank.as_ref())
    }
}

/// Trains one of the four networks per unit, reseeded from the unit seed.
pub struct NetworkFactory {
    pub config: ModelConfig,
}

impl DetectorFactory for NetworkFactory {
    fn name(&self) -> String {
        self.config.architecture.name().to_string()
    }

    fn train(&self, unit: &TrainUnit<'_>) -> Result<Box<dyn WindowDetector>, EvalError> {
        let config = ModelConfig {
            seed: unit.seed,
            ..self.config.clone()
        };
        let t = Instant::now();
        let det = NetworkDetector::train(&config, unit.windows)?;
        debug!(
            "fold {} {}: trained {} on {} windows in {:.1} s, final loss {:.4}",
            unit.fold,
            unit.scope.label(),
            config.architecture,
            unit.windows.len(),
            t.elapsed().as_secs_f64(),
            det.losses.last().copied().unwrap_or(f64::NAN)
        );
        Ok(Box::new(det))
    }
}

/// Predicts the true label; an upper-bound oracle for harness tests.
pub struct OracleStub;

/// Predicts the same label for every window.
pub struct ConstantStub(pub bool);

impl WindowDetector for OracleStub {
    fn detect(&self, window: &FeatureWindow) -> Result<DetectionResult, ModelError> {
        Ok(DetectionResult {
            score: f64::from(u8::from(window.label)),
            erroneous: window.label,
            elapsed_ms: 0.0,
        })
    }
}

impl WindowDetector for ConstantStub {
    fn detect(&self, _: &FeatureWindow) -> Result<DetectionResult, ModelError> {
        Ok(DetectionResult {
            score: f64::from(u8::from(self.0)),
            erroneous: self.0,
            elapsed_ms: 0.0,
        })
    }
}

impl DetectorFactory for OracleStub {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn train(&self, _: &TrainUnit<'_>) -> Result<Box<dyn WindowDetector>, EvalError> {
        Ok(Box::new(OracleStub))
    }
}

impl DetectorFactory for ConstantStub {
    fn name(&self) -> String {
        format!("constant-{}", if self.0 { "erroneous" } else { "normal" })
    }

    fn train(&self, _: &TrainUnit<'_>) -> Result<Box<dyn WindowDetector>, EvalError> {
        Ok(Box::new(ConstantStub(self.0)))
    }
}

/// Euclidean nearest class mean over the flattened window.
#[derive(Debug, Clone)]
pub struct NearestCentroid {
    pub normal: Vec<f64>,
    pub erroneous: Vec<f64>,
}

impl NearestCentroid {
    pub fn fit(windows: &[&FeatureWindow]) -> Result<Self, ModelError> {
        let centroid = |label: bool| -> Result<Vec<f64>, ModelError> {
            let members: Vec<&&FeatureWindow> =
                windows.iter().filter(|w| w.label == label).collect();
            let first = members.first().ok_or(ModelError::InsufficientWindows {
                class: if label { "erroneous" } else { "normal" },
                needed: 1,
                found: 0,
            })?;
            let mut c = vec![0.0; first.data.len()];
            for w in &members {
                c.iter_mut().zip(&w.data).for_each(|(a, v)| *a += v);
            }
            c.iter_mut().for_each(|a| *a /= members.len() as f64);
            Ok(c)
        };
        Ok(Self {
            normal: centroid(false)?,
            erroneous: centroid(true)?,
        })
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

impl WindowDetector for NearestCentroid {
    fn detect(&self, window: &FeatureWindow) -> Result<DetectionResult, ModelError> {
        if window.data.len() != self.normal.len() {
            return Err(ModelError::Shape(format!(
                "window has {} values, centroid {}",
                window.data.len(),
                self.normal.len()
            )));
        }
        let dn = squared_distance(&window.data, &self.normal);
        let de = squared_distance(&window.data, &self.erroneous);
        let score = if dn + de > 0.0 { dn / (dn + de) } else { 0.5 };
        Ok(DetectionResult {
            score,
            erroneous: de <= dn,
            elapsed_ms: 0.0,
        })
    }
}

pub struct NearestCentroidFactory;

impl DetectorFactory for NearestCentroidFactory {
    fn name(&self) -> String {
        "nearest-centroid".into()
    }

    fn train(&self, unit: &TrainUnit<'_>) -> Result<Box<dyn WindowDetector>, EvalError> {
        Ok(Box::new(NearestCentroid::fit(unit.windows)?))
    }
}

#[derive(Debug, Clone)]
pub struct LosoOptions {
    pub setup: TrainingSetup,
    /// Gestures that take part; others are ignored by every setup.
    pub gestures: Vec<GestureClass>,
    pub window: WindowConfig,
    pub seed: u64,
    /// Worker threads for independent units; 1 runs sequentially.
    pub jobs: usize,
    /// Evaluate only this scope.
    pub scope: Option<Scope>,
}

impl Default for LosoOptions {
    fn default() -> Self {
        Self {
            setup: TrainingSetup::GstStar,
            gestures: GestureClass::MODELED.to_vec(),
            window: WindowConfig::default(),
            seed: 0,
            jobs: 1,
            scope: None,
        }
    }
}

/// Seed of one (fold, scope) unit.
pub fn unit_seed(seed: u64, fold: u32, scope: &Scope) -> u64 {
    let task = scope.task.map_or(0, |t| t as u64 + 1);
    let gesture = scope.gesture.map_or(0, |g| u64::from(g.number()));
    derive_seed(seed, &[u64::from(fold), task, gesture])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstancePrediction {
    pub trial: TrialId,
    /// 1-based transcript index.
    pub gesture_index: usize,
    pub task: TaskClass,
    pub gesture: GestureClass,
    pub truth: bool,
    pub predicted: bool,
    /// Fraction of the instance's windows predicted erroneous.
    pub score: f64,
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowPrediction {
    pub source: WindowSource,
    pub truth: bool,
    pub predicted: bool,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldResult {
    /// Held-out repetition.
    pub fold: u32,
    pub scope: Scope,
    pub instances: Confusion,
    pub windows: Confusion,
    pub instance_predictions: Vec<InstancePrediction>,
    pub window_predictions: Vec<WindowPrediction>,
    /// Test instances too short to yield a window.
    pub skipped_instances: usize,
    pub train_normal_windows: usize,
    pub train_erroneous_windows: usize,
    pub train_error_pct: f64,
    pub train_ms: f64,
    pub test_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedUnit {
    pub fold: u32,
    pub scope: Scope,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct LosoReport {
    pub setup: TrainingSetup,
    pub detector: String,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub skipped: Vec<SkippedUnit>,
    pub metrics: MetricsReport,
}

enum Outcome {
    Done(Box<FoldResult>),
    Skipped(SkippedUnit),
}

/// Instance verdict: majority of window verdicts, ties erroneous.
pub fn instance_verdict(window_verdicts: &[bool]) -> Option<bool> {
    if window_verdicts.is_empty() {
        return None;
    }
    let ones = window_verdicts.iter().filter(|&&b| b).count();
    Some(2 * ones >= window_verdicts.len())
}

fn evaluate_unit(
    trials: &[&TrialRecord],
    fold: &Fold,
    scope: Scope,
    opts: &LosoOptions,
    factory: &dyn DetectorFactory,
) -> Result<Outcome, EvalError> {
    let pick = |idx: &[usize]| idx.iter().map(|&i| trials[i]).collect::<Vec<_>>();
    let skip = |reason: String| {
        warn!(
            "fold {} {}: skipped, {reason}",
            fold.repetition,
            scope.label()
        );
        Ok(Outcome::Skipped(SkippedUnit {
            fold: fold.repetition,
            scope,
            reason,
        }))
    };
    let train_inst = scope_instances(&pick(&fold.train), &scope, &opts.gestures);
    let test_inst = scope_instances(&pick(&fold.test), &scope, &opts.gestures);
    if test_inst.is_empty() {
        return skip("no test instances".into());
    }
    if train_inst.is_empty() {
        return skip("no training instances".into());
    }
    let stats = fit_scope_stats(&train_inst, &opts.window)?;
    let train_windows: Vec<FeatureWindow> = scope_windows(&train_inst, &stats, &opts.window)?
        .into_iter()
        .flatten()
        .collect();
    let train_refs: Vec<&FeatureWindow> = train_windows.iter().collect();
    let erroneous = train_refs.iter().filter(|w| w.label).count();
    let normal = train_refs.len() - erroneous;
    if erroneous == 0 || normal == 0 {
        return skip(format!(
            "training windows: {normal} normal, {erroneous} erroneous"
        ));
    }
    let train_err_instances = train_inst
        .iter()
        .filter(|(t, i)| t.gestures[*i].error == Some(true))
        .count();

    let t0 = Instant::now();
    let unit = TrainUnit {
        fold: fold.repetition,
        scope,
        seed: unit_seed(opts.seed, fold.repetition, &scope),
        stats: &stats,
        windows: &train_refs,
    };
    let detector = factory.train(&unit)?;
    let train_ms = t0.elapsed().as_secs_f64() * 1e3;

    let mut result = score_instances(
        detector.as_ref(),
        &test_inst,
        &stats,
        &opts.window,
        fold.repetition,
        scope,
    )?;
    result.train_normal_windows = normal;
    result.train_erroneous_windows = erroneous;
    result.train_error_pct = 100.0 * train_err_instances as f64 / train_inst.len() as f64;
    result.train_ms = train_ms;
    let (f1, _) = result.instances.f1();
    info!(
        "fold {} {}: F1 {f1:.3} on {} instances (train {:.1} s)",
        fold.repetition,
        scope.label(),
        result.instances.total(),
        train_ms / 1e3
    );
    Ok(Outcome::Done(Box::new(result)))
}

/// Window and instance predictions of a trained detector on test instances.
/// Training fields of the result are left at zero.
pub fn score_instances(
    detector: &dyn WindowDetector,
    instances: &[InstanceRef<'_>],
    stats: &ChannelStats,
    cfg: &WindowConfig,
    fold: u32,
    scope: Scope,
) -> Result<FoldResult, EvalError> {
    let t = Instant::now();
    let mut result = FoldResult {
        fold,
        scope,
        instances: Confusion::default(),
        windows: Confusion::default(),
        instance_predictions: Vec::new(),
        window_predictions: Vec::new(),
        skipped_instances: 0,
        train_normal_windows: 0,
        train_erroneous_windows: 0,
        train_error_pct: 0.0,
        train_ms: 0.0,
        test_ms: 0.0,
    };
    for ((trial, idx), windows) in instances.iter().zip(scope_windows(instances, stats, cfg)?) {
        let inst = &trial.gestures[*idx];
        let truth = inst.error == Some(true);
        let mut verdicts = Vec::with_capacity(windows.len());
        for w in &windows {
            let d = detector.detect(w)?;
            result.windows.record(truth, d.erroneous);
            verdicts.push(d.erroneous);
            result.window_predictions.push(WindowPrediction {
                source: w.source.clone(),
                truth,
                predicted: d.erroneous,
                score: d.score,
            });
        }
        let Some(predicted) = instance_verdict(&verdicts) else {
            result.skipped_instances += 1;
            continue;
        };
        result.instances.record(truth, predicted);
        result.instance_predictions.push(InstancePrediction {
            trial: trial.id.clone(),
            gesture_index: idx + 1,
            task: trial.id.task,
            gesture: inst
                .gesture
                .supported()
                .expect("scope instances are supported"),
            truth,
            predicted,
            score: verdicts.iter().filter(|&&b| b).count() as f64 / verdicts.len() as f64,
            windows: verdicts.len(),
        });
    }
    result.test_ms = t.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}

/// Train one network on every in-scope instance of `trials`, as the
/// `train` command does; returns the detector and its fitted statistics.
pub fn train_scope_detector(
    trials: &[&TrialRecord],
    scope: &Scope,
    gestures: &[GestureClass],
    window: &WindowConfig,
    config: &ModelConfig,
) -> Result<(NetworkDetector, ChannelStats), EvalError> {
    let inst = scope_instances(trials, scope, gestures);
    if inst.is_empty() {
        return Err(EvalError::Config(format!(
            "no training instances in scope {}",
            scope.label()
        )));
    }
    let stats = fit_scope_stats(&inst, window)?;
    let windows: Vec<FeatureWindow> = scope_windows(&inst, &stats, window)?
        .into_iter()
        .flatten()
        .collect();
    let refs: Vec<&FeatureWindow> = windows.iter().collect();
    Ok((NetworkDetector::train(config, &refs)?, stats))
}

/// Recreate a checkpoint's Siamese reference bank from the training trials
/// named in its metadata, which must all be present in `trials`.
pub fn rebuild_reference_bank(
    checkpoint: &Checkpoint,
    trials: &[TrialRecord],
) -> Result<Option<ReferenceBank>, EvalError> {
    let meta = &checkpoint.meta;
    if !meta.architecture.is_siamese() {
        return Ok(None);
    }
    let mut train = Vec::with_capacity(meta.info.training_trials.len());
    for id in &meta.info.training_trials {
        let t = trials
            .iter()
            .find(|t| &t.id.to_string() == id)
            .ok_or_else(|| {
                EvalError::Config(format!(
                    "training trial {id} of the checkpoint is not in the dataset"
                ))
            })?;
        train.push(t);
    }
    let inst = scope_instances(&train, &meta.info.scope, &meta.info.gestures);
    let windows: Vec<FeatureWindow> =
        scope_windows(&inst, &meta.info.channel_stats, &meta.info.window)?
            .into_iter()
            .flatten()
            .collect();
    let normal: Vec<&FeatureWindow> = windows.iter().filter(|w| !w.label).collect();
    let refs = select_references(
        &normal,
        meta.config.reference_cap,
        derive_seed(meta.config.seed, &[REFERENCE_STREAM]),
    );
    Ok(Some(ReferenceBank::build(&checkpoint.network, &refs)?))
}

/// The checkpoint as a detector, with its reference bank rebuilt from `trials`.
pub fn checkpoint_detector(
    checkpoint: &Checkpoint,
    trials: &[TrialRecord],
) -> Result<NetworkDetector, EvalError> {
    Ok(NetworkDetector {
        network: checkpoint.network.clone(),
        bank: rebuild_reference_bank(checkpoint, trials)?,
        losses: Vec::new(),
    })
}

fn present_tasks(trials: &[&TrialRecord]) -> Vec<TaskClass> {
    trials
        .iter()
        .map(|t| t.id.task)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Evaluate every (fold, scope) unit; the merge is in fold-then-scope order
/// regardless of `jobs`.
pub fn run_folds(
    trials: &[&TrialRecord],
    folds: &[Fold],
    opts: &LosoOptions,
    factory: &dyn DetectorFactory,
) -> Result<LosoReport, EvalError> {
    opts.window.validate()?;
    let mut scopes = opts.setup.scopes(&present_tasks(trials), &opts.gestures);
    if let Some(only) = &opts.scope {
        opts.setup.validate_scope(only).map_err(EvalError::Config)?;
        scopes.retain(|s| s == only);
    }
    if scopes.is_empty() {
        return Err(EvalError::Config("no scope to evaluate".into()));
    }
    let units: Vec<(&Fold, Scope)> = folds
        .iter()
        .flat_map(|f| scopes.iter().map(move |s| (f, *s)))
        .collect();
    let run = |(f, s): &(&Fold, Scope)| evaluate_unit(trials, f, *s, opts, factory);
    let outcomes: Vec<Result<Outcome, EvalError>> = if opts.jobs > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| EvalError::Config(e.to_string()))?
            .install(|| units.par_iter().map(run).collect())
    } else {
        units.iter().map(run).collect()
    };
    let mut report = LosoReport {
        setup: opts.setup,
        detector: factory.name(),
        seed: opts.seed,
        folds: Vec::new(),
        skipped: Vec::new(),
        metrics: MetricsReport::from_folds(&[]),
    };
    for o in outcomes {
        match o? {
            Outcome::Done(r) => report.folds.push(*r),
            Outcome::Skipped(s) => report.skipped.push(s),
        }
    }
    report.refresh_metrics();
    Ok(report)
}

/// Five-fold Leave-One-SuperTrial-Out evaluation.
pub fn run_loso(
    trials: &[TrialRecord],
    opts: &LosoOptions,
    factory: &dyn DetectorFactory,
) -> Result<LosoReport, EvalError> {
    let folds = split_loso_folds(trials)?;
    let refs: Vec<&TrialRecord> = trials.iter().collect();
    run_folds(&refs, &folds, opts, factory)
}

/// One fold per repetition present; needs at least two repetitions.
pub fn folds_by_repetition(trials: &[&TrialRecord]) -> Result<Vec<Fold>, EvalError> {
    let reps: BTreeSet<u32> = trials.iter().map(|t| t.id.repetition).collect();
    if reps.len() < 2 {
        return Err(EvalError::Config(format!(
            "need at least 2 repetitions for inner folds, found {}",
            reps.len()
        )));
    }
    Ok(reps
        .into_iter()
        .map(|rep| {
            let (test, train) = (0..trials.len()).partition(|&i| trials[i].id.repetition == rep);
            Fold {
                repetition: rep,
                train,
                test,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningGrid {
    pub lrs: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self {
            lrs: vec![1e-2, 1e-3, 1e-4],
            batch_sizes: vec![16, 32],
            epochs: vec![50, 100],
        }
    }
}

impl TuningGrid {
    /// Candidate configs, learning rate outermost.
    pub fn configs(&self, base: &ModelConfig) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for &lr in &self.lrs {
            for &batch_size in &self.batch_sizes {
                for &epochs in &self.epochs {
                    out.push(ModelConfig {
                        lr,
                        batch_size,
                        epochs,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TuneResult {
    pub best: ModelConfig,
    /// Inner micro F1 per candidate in grid order; diverged candidates score `None`.
    pub scores: Vec<(ModelConfig, Option<f64>)>,
}

/// Grid search by inner leave-one-repetition-out micro F1 over `trials`.
/// The first best candidate in grid order wins.
pub fn nested_tune(
    trials: &[&TrialRecord],
    opts: &LosoOptions,
    base: &ModelConfig,
    grid: &TuningGrid,
) -> Result<TuneResult, EvalError> {
    let candidates = grid.configs(base);
    if candidates.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let folds = folds_by_repetition(trials)?;
    let mut scores = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, f64)> = None;
    for (k, config) in candidates.into_iter().enumerate() {
        config.validate()?;
        let factory = NetworkFactory {
            config: config.clone(),
        };
        let score = match run_folds(trials, &folds, opts, &factory) {
            Ok(r) => Some(r.metrics.micro_f1),
            Err(EvalError::Model(ModelError::Diverged { epoch })) => {
                warn!(
                    "candidate lr {} batch {} epochs {} diverged in epoch {epoch}",
                    config.lr, config.batch_size, config.epochs
                );
                None
            }
            Err(e) => return Err(e),
        };
        if let Some(s) = score {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((k, s));
            }
        }
        info!(
            "candidate lr {} batch {} epochs {}: inner micro F1 {score:?}",
            config.lr, config.batch_size, config.epochs
        );
        scores.push((config, score));
    }
    let (k, _) = best.ok_or_else(|| EvalError::Config("every tuning candidate diverged".into()))?;
    Ok(TuneResult {
        best: scores[k].0.clone(),
        scores,
    })
}

/// LOSO where each outer fold first tunes on its own training trials.
pub fn run_loso_tuned(
    trials: &[TrialRecord],
    opts: &LosoOptions,
    base: &ModelConfig,
    grid: &TuningGrid,
) -> Result<(LosoReport, Vec<(u32, ModelConfig)>), EvalError> {
    let folds = split_loso_folds(trials)?;
    let refs: Vec<&TrialRecord> = trials.iter().collect();
    let mut chosen = Vec::new();
    let mut merged: Option<LosoReport> = None;
    for fold in &folds {
        let train: Vec<&TrialRecord> = fold.train.iter().map(|&i| refs[i]).collect();
        let tuned = nested_tune(&train, opts, base, grid)?;
        let factory = NetworkFactory {
            config: tuned.best.clone(),
        };
        let r = run_folds(&refs, std::slice::from_ref(fold), opts, &factory)?;
        chosen.push((fold.repetition, tuned.best));
        match &mut merged {
            None => merged = Some(r),
            Some(m) => {
                m.folds.extend(r.folds);
                m.skipped.extend(r.skipped);
            }
        }
    }
    let mut report = merged.expect("five folds");
    report.refresh_metrics();
    Ok((report, chosen))
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}

impl LosoReport {
    pub fn refresh_metrics(&mut self) {
        let units: Vec<FoldCounts> = self
            .folds
            .iter()
            .map(|f| FoldCounts {
                scope: f.scope,
                instances: f.instances,
                windows: f.windows,
                train_error_pct: f.train_error_pct,
            })
            .collect();
        self.metrics = MetricsReport::from_folds(&units);
    }

    /// One row per (scope, fold), one pooled row per scope and a micro row.
    /// Timing is left out so identical runs give identical files.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "kind,setup,detector,scope,task,gesture,fold,instances,tp,fp,fn,tn,f1,degenerate,fold_f1_mean,fold_f1_std,train_error_pct,window_f1\n",
        );
        let tag = |o: Option<String>| o.unwrap_or_else(|| "*".into());
        let mut row = |kind: &str,
                       scope: Option<&Scope>,
                       fold: String,
                       c: &Confusion,
                       spread: Option<(f64, f64)>,
                       err: f64,
                       wf1: f64| {
            let (f1, degenerate) = c.f1();
            let (label, task, gesture) = match scope {
                Some(s) => (
                    s.label(),
                    tag(s.task.map(|t| t.to_string())),
                    tag(s.gesture.map(|g| g.to_string())),
                ),
                None => ("all".into(), "*".into(), "*".into()),
            };
            let (m, s) = spread.map_or((String::new(), String::new()), |(m, s)| {
                (fmt_f(m), fmt_f(s))
            });
            writeln!(
                out,
                "{kind},{},{},{label},{task},{gesture},{fold},{},{},{},{},{},{},{},{m},{s},{},{}",
                self.setup.name(),
                self.detector,
                c.total(),
                c.tp,
                c.fp,
                c.fn_,
                c.tn,
                fmt_f(f1),
                u8::from(degenerate),
                fmt_f(err),
                fmt_f(wf1)
            )
            .unwrap();
        };
        for m in &self.metrics.scopes {
            for f in self.folds.iter().filter(|f| f.scope == m.scope) {
                row(
                    "fold",
                    Some(&f.scope),
                    f.fold.to_string(),
                    &f.instances,
                    None,
                    f.train_error_pct,
                    f.windows.f1().0,
                );
            }
        }
        for m in &self.metrics.scopes {
            row(
                "scope",
                Some(&m.scope),
                "all".into(),
                &m.counts,
                Some((m.fold_f1_mean, m.fold_f1_std)),
                m.train_error_pct,
                m.window_counts.f1().0,
            );
        }
        let mean_err = if self.metrics.scopes.is_empty() {
            0.0
        } else {
            self.metrics
                .scopes
                .iter()
                .map(|m| m.train_error_pct)
                .sum::<f64>()
                / self.metrics.scopes.len() as f64
        };
        row(
            "micro",
            None,
            "all".into(),
            &self.metrics.micro,
            None,
            mean_err,
            self.metrics.window_micro_f1,
        );
        out
    }

    /// Per-instance predictions of every fold.
    pub fn instances_csv(&self) -> String {
        let mut out = String::from(
            "fold,scope,trial,gesture_index,task,gesture,truth,predicted,score,windows\n",
        );
        for f in &self.folds {
            for p in &f.instance_predictions {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    f.fold,
                    f.scope.label(),
                    p.trial,
                    p.gesture_index,
                    p.task,
                    p.gesture,
                    u8::from(p.truth),
                    u8::from(p.predicted),
                    fmt_f(p.score),
                    p.windows
                )
                .unwrap();
            }
        }
        out
    }

    /// Per-window predictions of every fold.
    pub fn windows_csv(&self) -> String {
        let mut out = String::from("fold,scope,trial,gesture_index,offset,truth,predicted,score\n");
        for f in &self.folds {
            for p in &f.window_predictions {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    f.fold,
                    f.scope.label(),
                    p.source.trial,
                    p.source.gesture_index,
                    p.source.offset,
                    u8::from(p.truth),
                    u8::from(p.predicted),
                    fmt_f(p.score)
                )
                .unwrap();
            }
        }
        out
    }

    pub fn pretty(&self) -> String {
        let mut out = format!(
            "{} LOSO, setup {} ({}), seed {}\n",
            self.detector,
            self.setup.label(),
            self.setup.name(),
            self.seed
        );
        out.push_str(&self.metrics.pretty());
        for s in &self.skipped {
            writeln!(
                out,
                "skipped fold {} {}: {}",
                s.fold,
                s.scope.label(),
                s.reason
            )
            .unwrap();
        }
        let train: f64 = self.folds.iter().map(|f| f.train_ms).sum();
        let test: f64 = self.folds.iter().map(|f| f.test_ms).sum();
        writeln!(
            out,
            "time: train {:.1} s, test {:.1} s",
            train / 1e3,
            test / 1e3
        )
        .unwrap();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_ties_are_erroneous() {
        assert_eq!(instance_verdict(&[true, false]), Some(true));
        assert_eq!(instance_verdict(&[false, false, true]), Some(false));
        assert_eq!(instance_verdict(&[]), None);
    }

    #[test]
    fn grid_order() {
        let base = ModelConfig::new(crate::models::Architecture::Cnn);
        let c = TuningGrid::default().configs(&base);
        assert_eq!(c.len(), 12);
        assert_eq!((c[0].lr, c[0].batch_size, c[0].epochs), (1e-2, 16, 50));
        assert_eq!((c[1].lr, c[1].batch_size, c[1].epochs), (1e-2, 16, 100));
        assert_eq!((c[11].lr, c[11].batch_size, c[11].epochs), (1e-4, 32, 100));
    }
}
