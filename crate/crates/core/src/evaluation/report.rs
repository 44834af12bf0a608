//! Fold report CSV and summary JSON.

use serde_json::{json, Value};

use super::cv::{CvReport, EnsembleCvReport, FoldOutcome};
use super::metrics::{metrics_from_confusion, MetricSummary, Scope};

pub const REPORT_COLUMNS: [&str; 12] = ["fold", "strategy", "threshold", "class", "tp", "fp", "fn", "tn", "accuracy", "precision", "recall", "f1"];

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn count(v: f64) -> String {
    format!("{}", v.round() as u64)
}

struct Rows(csv::Writer<Vec<u8>>);

impl Rows {
    fn new() -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_COLUMNS).expect("in-memory write");
        Rows(w)
    }

    fn outcome(&mut self, f: &FoldOutcome, strategy: &str, threshold: Option<f64>, class_name: &str, class: usize) {
        let (tp, fp, fn_, tn) = f.confusion.one_vs_rest(class);
        let m = metrics_from_confusion(&f.confusion, Scope::Class(class));
        self.0
            .write_record([
                f.fold.to_string(),
                strategy.to_string(),
                threshold.map(num).unwrap_or_default(),
                class_name.to_string(),
                count(tp),
                count(fp),
                count(fn_),
                count(tn),
                num(m.accuracy),
                num(m.precision),
                num(m.recall),
                num(m.f1),
            ])
            .expect("in-memory write");
    }

    fn macro_row(&mut self, f: &FoldOutcome, strategy: &str) {
        let m = metrics_from_confusion(&f.confusion, Scope::Macro);
        self.0
            .write_record([
                f.fold.to_string(),
                strategy.to_string(),
                String::new(),
                "macro".to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                num(m.accuracy),
                num(m.precision),
                num(m.recall),
                num(m.f1),
            ])
            .expect("in-memory write");
    }

    fn finish(self) -> Vec<u8> {
        self.0.into_inner().expect("in-memory flush")
    }
}

/// Binary: one `positive` row per fold. Multiclass: a row per class that
/// occurs in the fold plus a `macro` row.
pub fn cv_report_csv(report: &CvReport) -> Vec<u8> {
    let mut rows = Rows::new();
    let strategy = report.strategy.name();
    for f in &report.folds {
        match report.scope {
            Scope::Class(c) => rows.outcome(f, strategy, None, &report.class_names[c], c),
            Scope::Macro => {
                for c in f.confusion.active_classes() {
                    rows.outcome(f, strategy, None, &report.class_names[c], c);
                }
                rows.macro_row(f, strategy);
            }
        }
    }
    rows.finish()
}

/// One `ensemble` row per threshold and fold, then one `base` row per base
/// model and fold with the negative species in the class column.
pub fn ensemble_report_csv(report: &EnsembleCvReport) -> Vec<u8> {
    let mut rows = Rows::new();
    for t in &report.thresholds {
        for f in &t.folds {
            rows.outcome(f, "ensemble", Some(t.threshold), "positive", 0);
        }
    }
    for b in &report.base_models {
        for f in &b.folds {
            rows.outcome(f, "base", None, b.negative.name(), 0);
        }
    }
    rows.finish()
}

pub fn summary_value(s: &MetricSummary) -> Value {
    let pair = |(m, sd): (f64, f64)| json!({ "mean": m, "std": sd });
    json!({
        "accuracy": pair(s.accuracy),
        "precision": pair(s.precision),
        "recall": pair(s.recall),
        "f1": pair(s.f1),
    })
}

pub fn cv_summary_json(report: &CvReport) -> Value {
    json!({
        "strategy": report.strategy.name(),
        "classes": report.class_names,
        "metric_scope": match report.scope { Scope::Macro => "macro".to_string(), Scope::Class(c) => report.class_names[c].clone() },
        "folds": report.folds.len(),
        "summary": summary_value(&report.summary),
        "per_fold": report.folds.iter().map(|f| json!({
            "fold": f.fold,
            "n_train": f.n_train,
            "n_test": f.n_test,
            "accuracy": f.metrics.accuracy,
            "precision": f.metrics.precision,
            "recall": f.metrics.recall,
            "f1": f.metrics.f1,
        })).collect::<Vec<_>>(),
        "total_confusion": report.total_confusion.rows(),
        "loss_curves": report.loss_curves,
    })
}

pub fn ensemble_summary_json(report: &EnsembleCvReport) -> Value {
    json!({
        "strategy": "ensemble",
        "voters": report.negatives.iter().map(|n| n.name()).collect::<Vec<_>>(),
        "thresholds": report.thresholds.iter().map(|t| json!({
            "threshold": t.threshold,
            "min_votes": t.min_votes,
            "summary": summary_value(&t.summary),
        })).collect::<Vec<_>>(),
        "base_models": report.base_models.iter().map(|b| json!({
            "negative": b.negative.name(),
            "summary": summary_value(&b.summary),
        })).collect::<Vec<_>>(),
        "base_mean": summary_value(&report.base_mean),
        "loss_curves": report.loss_curves,
    })
}
