//! Accuracy and macro-averaged precision/recall/F1 from a confusion matrix.

use serde::{Deserialize, Serialize};

/// Row = true class, column = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted_positives(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes).map(|c| self.counts[c][c]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

/// Zero-division convention: a class with no predicted positives gets
/// precision 0, one with no support gets recall 0, and F1 is 0 when both
/// components vanish.
pub fn compute_metrics(confusion: ConfusionMatrix) -> Metrics {
    let n = confusion.classes;
    let mut per_class = Vec::with_capacity(n);
    for c in 0..n {
        let tp = confusion.counts[c][c] as f64;
        let predicted = confusion.predicted_positives(c) as f64;
        let support = confusion.support(c);
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if support > 0 { tp / support as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            class: c,
            precision,
            recall,
            f1,
            support,
        });
    }
    let total = confusion.total();
    let accuracy = if total > 0 {
        confusion.correct() as f64 / total as f64
    } else {
        0.0
    };
    let macro_avg = |f: fn(&ClassMetrics) -> f64| {
        per_class.iter().map(f).sum::<f64>() / n.max(1) as f64
    };
    Metrics {
        accuracy,
        macro_precision: macro_avg(|m| m.precision),
        macro_recall: macro_avg(|m| m.recall),
        macro_f1: macro_avg(|m| m.f1),
        per_class,
        confusion,
    }
}

/// Build metrics straight from (truth, prediction) pairs.
pub fn metrics_from_pairs(classes: usize, pairs: &[(usize, usize)]) -> Metrics {
    let mut cm = ConfusionMatrix::new(classes);
    for &(truth, pred) in pairs {
        cm.record(truth, pred);
    }
    compute_metrics(cm)
}
