use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::models::Scope;

/// Binary confusion counts with erroneous as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn record(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// `2TP / (2TP + FP + FN)`, or `(0, true)` when the denominator is zero.
    pub fn f1(&self) -> (f64, bool) {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            (0.0, true)
        } else {
            ((2 * self.tp) as f64 / denom as f64, false)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeMetrics {
    pub scope: Scope,
    /// Instance-level counts pooled over folds.
    pub counts: Confusion,
    pub f1: f64,
    pub degenerate: bool,
    /// Mean and population standard deviation of the per-fold F1 values.
    pub fold_f1_mean: f64,
    pub fold_f1_std: f64,
    pub folds: usize,
    /// Share of erroneous instances in the training data, in percent.
    pub train_error_pct: f64,
    pub window_counts: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scopes: Vec<ScopeMetrics>,
    /// Counts summed over every scope.
    pub micro: Confusion,
    pub micro_f1: f64,
    pub micro_degenerate: bool,
    pub window_micro_f1: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-scope F1 and micro F1 from pooled counts. Fold spread and training
/// error share are left at zero; [`MetricsReport::from_folds`] fills them.
pub fn compute_metrics(per_scope: &[(Scope, Confusion)]) -> MetricsReport {
    let mut micro = Confusion::default();
    let scopes = per_scope
        .iter()
        .map(|(scope, c)| {
            micro.add(c);
            let (f1, degenerate) = c.f1();
            ScopeMetrics {
                scope: *scope,
                counts: *c,
                f1,
                degenerate,
                fold_f1_mean: f1,
                fold_f1_std: 0.0,
                folds: 1,
                train_error_pct: 0.0,
                window_counts: Confusion::default(),
            }
        })
        .collect();
    let (micro_f1, micro_degenerate) = micro.f1();
    MetricsReport {
        scopes,
        micro,
        micro_f1,
        micro_degenerate,
        window_micro_f1: 0.0,
    }
}

/// One evaluated (fold, scope) unit as seen by the metric aggregation.
#[derive(Debug, Clone, Copy)]
pub struct FoldCounts {
    pub scope: Scope,
    pub instances: Confusion,
    pub windows: Confusion,
    pub train_error_pct: f64,
}

impl MetricsReport {
    /// Aggregate fold units; scopes appear in order of first occurrence.
    pub fn from_folds(units: &[FoldCounts]) -> Self {
        let mut order: Vec<Scope> = Vec::new();
        for u in units {
            if !order.contains(&u.scope) {
                order.push(u.scope);
            }
        }
        let pooled: Vec<(Scope, Confusion)> = order
            .iter()
            .map(|s| {
                let mut c = Confusion::default();
                units
                    .iter()
                    .filter(|u| u.scope == *s)
                    .for_each(|u| c.add(&u.instances));
                (*s, c)
            })
            .collect();
        let mut report = compute_metrics(&pooled);
        let mut window_micro = Confusion::default();
        for m in &mut report.scopes {
            let mine: Vec<&FoldCounts> = units.iter().filter(|u| u.scope == m.scope).collect();
            let f1s: Vec<f64> = mine.iter().map(|u| u.instances.f1().0).collect();
            (m.fold_f1_mean, m.fold_f1_std) = mean_std(&f1s);
            m.folds = mine.len();
            m.train_error_pct =
                mean_std(&mine.iter().map(|u| u.train_error_pct).collect::<Vec<_>>()).0;
            mine.iter().for_each(|u| m.window_counts.add(&u.windows));
            window_micro.add(&m.window_counts);
        }
        report.window_micro_f1 = window_micro.f1().0;
        report
    }

    pub fn pretty(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{:<16} {:>9} {:>5} {:>5} {:>5} {:>5} {:>7} {:>17} {:>7}",
            "scope", "instances", "TP", "FP", "FN", "TN", "F1", "fold mean±std", "err%"
        )
        .unwrap();
        for m in &self.scopes {
            let c = &m.counts;
            writeln!(
                out,
                "{:<16} {:>9} {:>5} {:>5} {:>5} {:>5} {:>7.3} {:>9.3} ± {:<5.3} {:>7.1}{}",
                m.scope.label(),
                c.total(),
                c.tp,
                c.fp,
                c.fn_,
                c.tn,
                m.f1,
                m.fold_f1_mean,
                m.fold_f1_std,
                m.train_error_pct,
                if m.degenerate { "  (degenerate)" } else { "" }
            )
            .unwrap();
        }
        writeln!(
            out,
            "micro F1 {:.3} over {} instances (window-level {:.3})",
            self.micro_f1,
            self.micro.total(),
            self.window_micro_f1
        )
        .unwrap();
        out
    }
}
