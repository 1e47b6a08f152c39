//! Confusion matrix, one-vs-rest classification metrics, and byte-stable
//! CSV/SVG report emission.

mod emit;

pub use emit::{comparison_table_string, emit_comparison_table, emit_confusion_svg, emit_csv,
    metrics_csv_string, svg_string};

use crate::error::{Error, Result};

/// Row-major `n×n` counts; rows are the true class, columns the prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<u64>,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let n = class_names.len();
        ConfusionMatrix {
            counts: vec![0; n * n],
            class_names,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.n_classes() + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.count(i, i)).sum()
    }

    /// Builds the matrix from `(true_class, predicted_class)` pairs.
    pub fn from_pairs(pairs: &[(usize, usize)], class_names: &[String]) -> Result<Self> {
        let mut cm = ConfusionMatrix::new(class_names.to_vec());
        let n = cm.n_classes();
        for (i, &(t, p)) in pairs.iter().enumerate() {
            if t >= n || p >= n {
                return Err(Error::Input(format!(
                    "pair {i} has class ids ({t},{p}) outside 0..{n}"
                )));
            }
            cm.counts[t * n + p] += 1;
        }
        Ok(cm)
    }
}

/// One-vs-rest counts and derived metrics for a single class. Metrics with a
/// zero denominator are reported as 0 and flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
    /// True when any of this class's metric denominators was zero.
    pub zero_denominator: bool,
}

/// Per-class and macro-averaged evaluation metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    pub macro_sensitivity: f64,
    pub macro_specificity: f64,
    pub macro_precision: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub sample_count: u64,
    /// Set when accuracy had a zero denominator (empty matrix).
    pub zero_denominator: bool,
}

fn ratio(num: u64, den: u64, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Derives the full report from a confusion matrix: one-vs-rest TP/FP/FN/TN
/// per class, unweighted macro averages, exact trace/total accuracy.
pub fn metrics(cm: &ConfusionMatrix) -> EvalReport {
    let n = cm.n_classes();
    let total = cm.total();
    let mut per_class = Vec::with_capacity(n);
    for c in 0..n {
        let tp = cm.count(c, c);
        let fn_: u64 = (0..n).filter(|&p| p != c).map(|p| cm.count(c, p)).sum();
        let fp: u64 = (0..n).filter(|&t| t != c).map(|t| cm.count(t, c)).sum();
        let tn = total - tp - fp - fn_;
        let mut flag = false;
        let sensitivity = ratio(tp, tp + fn_, &mut flag);
        let specificity = ratio(tn, tn + fp, &mut flag);
        let precision = ratio(tp, tp + fp, &mut flag);
        let f1 = if precision + sensitivity > 0.0 {
            2.0 * precision * sensitivity / (precision + sensitivity)
        } else {
            flag = true;
            0.0
        };
        per_class.push(ClassMetrics {
            tp,
            fp,
            fn_,
            tn,
            sensitivity,
            specificity,
            precision,
            f1,
            zero_denominator: flag,
        });
    }
    let mean = |f: fn(&ClassMetrics) -> f64, per: &[ClassMetrics]| {
        per.iter().map(f).sum::<f64>() / n as f64
    };
    let mut acc_flag = false;
    let accuracy = ratio(cm.trace(), total, &mut acc_flag);
    EvalReport {
        class_names: cm.class_names().to_vec(),
        macro_sensitivity: mean(|m| m.sensitivity, &per_class),
        macro_specificity: mean(|m| m.specificity, &per_class),
        macro_precision: mean(|m| m.precision, &per_class),
        macro_f1: mean(|m| m.f1, &per_class),
        per_class,
        accuracy,
        sample_count: total,
        zero_denominator: acc_flag,
    }
}
