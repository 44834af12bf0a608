use serde::{Deserialize, Serialize};

/// A confusion-matrix cell type: integer counts, or averaged counts.
pub trait Count: Copy + Default + PartialOrd + std::ops::AddAssign + std::fmt::Debug {
    fn as_f64(self) -> f64;
}

impl Count for u64 {
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Count for f64 {
    fn as_f64(self) -> f64 {
        self
    }
}

/// Rows are true labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix<C = u64> {
    n: usize,
    counts: Vec<C>,
}

impl<C: Count> ConfusionMatrix<C> {
    pub fn new(n_classes: usize) -> Self {
        assert!(n_classes > 0);
        ConfusionMatrix {
            n: n_classes,
            counts: vec![C::default(); n_classes * n_classes],
        }
    }

    pub fn from_rows(rows: &[Vec<C>]) -> Self {
        let n = rows.len();
        assert!(n > 0 && rows.iter().all(|r| r.len() == n), "confusion matrix must be square");
        ConfusionMatrix {
            n,
            counts: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, predicted: usize) -> C {
        self.counts[truth * self.n + predicted]
    }

    pub fn add_count(&mut self, truth: usize, predicted: usize, c: C) {
        self.counts[truth * self.n + predicted] += c;
    }

    pub fn rows(&self) -> Vec<Vec<C>> {
        self.counts.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().map(|c| c.as_f64()).sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).as_f64()).sum()
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.n, other.n);
        for (a, &b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// Classes with a non-empty row or column.
    pub fn active_classes(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|&c| (0..self.n).any(|j| self.get(c, j).as_f64() > 0.0 || self.get(j, c).as_f64() > 0.0))
            .collect()
    }

    /// (tp, fp, fn, tn) treating `class` as positive.
    pub fn one_vs_rest(&self, class: usize) -> (f64, f64, f64, f64) {
        let tp = self.get(class, class).as_f64();
        let row: f64 = (0..self.n).map(|j| self.get(class, j).as_f64()).sum();
        let col: f64 = (0..self.n).map(|i| self.get(i, class).as_f64()).sum();
        let fp = col - tp;
        let fn_ = row - tp;
        (tp, fp, fn_, self.total() - tp - fp - fn_)
    }
}

impl ConfusionMatrix<u64> {
    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.add_count(truth, predicted, 1);
    }

    pub fn from_predictions(n_classes: usize, truth: &[usize], predicted: &[usize]) -> Self {
        assert_eq!(truth.len(), predicted.len());
        let mut cm = Self::new(n_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.add(t, p);
        }
        cm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Class(usize),
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub scope: Scope,
}

impl MetricSet {
    pub fn values(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }
}

pub const METRIC_NAMES: [&str; 4] = ["accuracy", "precision", "recall", "f1"];

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    ratio(2.0 * precision * recall, precision + recall)
}

/// (precision, recall, f1) of one class against the rest.
fn class_prf<C: Count>(cm: &ConfusionMatrix<C>, class: usize) -> (f64, f64, f64) {
    let (tp, fp, fn_, _) = cm.one_vs_rest(class);
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    (p, r, f1_score(p, r))
}

/// Accuracy is the diagonal share of all instances in both scopes. Macro
/// precision, recall and F1 are unweighted means of the per-class values
/// over the classes that occur as a true or a predicted label.
pub fn metrics_from_confusion<C: Count>(cm: &ConfusionMatrix<C>, scope: Scope) -> MetricSet {
    let accuracy = ratio(cm.trace(), cm.total());
    let (precision, recall, f1) = match scope {
        Scope::Class(c) => class_prf(cm, c),
        Scope::Macro => {
            let active = cm.active_classes();
            let n = active.len().max(1) as f64;
            let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
            for c in active {
                let (pc, rc, fc) = class_prf(cm, c);
                p += pc;
                r += rc;
                f += fc;
            }
            (p / n, r / n, f / n)
        }
    };
    MetricSet {
        accuracy,
        precision,
        recall,
        f1,
        scope,
    }
}

/// Mean and sample (n - 1) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: (f64, f64),
    pub precision: (f64, f64),
    pub recall: (f64, f64),
    pub f1: (f64, f64),
}

pub fn summarize(sets: &[MetricSet]) -> MetricSummary {
    let col = |i: usize| mean_std(&sets.iter().map(|m| m.values()[i]).collect::<Vec<_>>());
    MetricSummary {
        accuracy: col(0),
        precision: col(1),
        recall: col(2),
        f1: col(3),
    }
}
