//! Report writers. Output is byte-stable for identical inputs: fixed field
//! order, fixed six-decimal float formatting.

use std::fs;
use std::path::Path;

use super::{ConfusionMatrix, EvalReport};
use crate::error::{Error, Result};

/// Reference rows reproduced from the published comparison:
/// model, accuracy %, sensitivity, specificity, F1, recall.
pub const REFERENCE_ROWS: [[&str; 6]; 5] = [
    ["NASNet-ViT", "98.9", "0.99", "0.985", "0.988", "0.99"],
    ["MixNet-LD", "99.0", "0.99", "0.98", "0.98", "0.99"],
    ["D-ResNet", "85.2", "0.84", "0.85", "0.87", "0.86"],
    ["MobileNet", "84.5", "0.82", "0.83", "0.84", "0.85"],
    ["ResNet50", "82.1", "0.77", "0.81", "0.82", "0.81"],
];

/// Metrics CSV: header, one row per class, a macro row, an accuracy row,
/// then the confusion matrix as a labeled block.
pub fn metrics_csv_string(report: &EvalReport, cm: &ConfusionMatrix) -> String {
    let mut out = String::from("class,tp,fp,fn,tn,sensitivity,specificity,precision,f1\n");
    for (name, m) in report.class_names.iter().zip(&report.per_class) {
        out.push_str(&format!(
            "{name},{},{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
            m.tp, m.fp, m.fn_, m.tn, m.sensitivity, m.specificity, m.precision, m.f1
        ));
    }
    out.push_str(&format!(
        "macro,,,,,{:.6},{:.6},{:.6},{:.6}\n",
        report.macro_sensitivity,
        report.macro_specificity,
        report.macro_precision,
        report.macro_f1
    ));
    out.push_str(&format!("accuracy,,,,,,,,{:.6}\n", report.accuracy));

    out.push_str("\nconfusion_matrix\n");
    out.push_str(&format!("true\\predicted,{}\n", cm.class_names().join(",")));
    for t in 0..cm.n_classes() {
        let row: Vec<String> = (0..cm.n_classes()).map(|p| cm.count(t, p).to_string()).collect();
        out.push_str(&format!("{},{}\n", cm.class_names()[t], row.join(",")));
    }
    out
}

pub fn emit_csv(report: &EvalReport, cm: &ConfusionMatrix, path: &Path) -> Result<()> {
    fs::write(path, metrics_csv_string(report, cm)).map_err(|e| Error::io(path, e))
}

const CELL: f64 = 72.0;
const MARGIN: f64 = 96.0;

fn heat_fill(count: u64, max: u64) -> String {
    // linear white-to-blue ramp; an all-zero matrix stays at minimum fill
    let t = if max == 0 { 0.0 } else { count as f64 / max as f64 };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("rgb({},{},{})", lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0))
}

/// Standalone SVG heatmap: one `class="cell"` rect and one `class="count"`
/// text node per matrix cell, axes labeled with the class names.
pub fn svg_string(cm: &ConfusionMatrix) -> String {
    let n = cm.n_classes();
    let size = MARGIN + n as f64 * CELL + 24.0;
    let max = (0..n)
        .flat_map(|t| (0..n).map(move |p| (t, p)))
        .map(|(t, p)| cm.count(t, p))
        .max()
        .unwrap_or(0);
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size:.0}\" height=\"{size:.0}\" \
         viewBox=\"0 0 {size:.0} {size:.0}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    s.push_str(&format!(
        "  <text class=\"axis\" x=\"{:.0}\" y=\"20\" text-anchor=\"middle\">predicted class</text>\n",
        MARGIN + n as f64 * CELL / 2.0
    ));
    s.push_str(&format!(
        "  <text class=\"axis\" x=\"14\" y=\"{:.0}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 14 {:.0})\">true class</text>\n",
        MARGIN + n as f64 * CELL / 2.0,
        MARGIN + n as f64 * CELL / 2.0
    ));
    for (i, name) in cm.class_names().iter().enumerate() {
        s.push_str(&format!(
            "  <text class=\"label\" x=\"{:.0}\" y=\"{:.0}\" text-anchor=\"middle\">{name}</text>\n",
            MARGIN + (i as f64 + 0.5) * CELL,
            MARGIN - 8.0
        ));
        s.push_str(&format!(
            "  <text class=\"label\" x=\"{:.0}\" y=\"{:.0}\" text-anchor=\"end\">{name}</text>\n",
            MARGIN - 8.0,
            MARGIN + (i as f64 + 0.5) * CELL + 4.0
        ));
    }
    for t in 0..n {
        for p in 0..n {
            let count = cm.count(t, p);
            let x = MARGIN + p as f64 * CELL;
            let y = MARGIN + t as f64 * CELL;
            s.push_str(&format!(
                "  <rect class=\"cell\" x=\"{x:.0}\" y=\"{y:.0}\" width=\"{CELL:.0}\" \
                 height=\"{CELL:.0}\" fill=\"{}\" stroke=\"#999\"/>\n",
                heat_fill(count, max)
            ));
            let dark = max > 0 && count as f64 / max as f64 > 0.5;
            s.push_str(&format!(
                "  <text class=\"count\" x=\"{:.0}\" y=\"{:.0}\" text-anchor=\"middle\" \
                 fill=\"{}\">{count}</text>\n",
                x + CELL / 2.0,
                y + CELL / 2.0 + 4.0,
                if dark { "#fff" } else { "#000" }
            ));
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_confusion_svg(cm: &ConfusionMatrix, path: &Path) -> Result<()> {
    fs::write(path, svg_string(cm)).map_err(|e| Error::io(path, e))
}

/// Comparison CSV: the five published reference rows plus this run's
/// measured metrics.
pub fn comparison_table_string(report: &EvalReport) -> String {
    let mut out = String::from("model,accuracy_pct,sensitivity,specificity,f1_score,recall,source\n");
    for row in REFERENCE_ROWS {
        out.push_str(&format!(
            "{},{},{},{},{},{},paper-reported\n",
            row[0], row[1], row[2], row[3], row[4], row[5]
        ));
    }
    out.push_str(&format!(
        "this-run,{:.1},{:.3},{:.3},{:.3},{:.3},measured\n",
        report.accuracy * 100.0,
        report.macro_sensitivity,
        report.macro_specificity,
        report.macro_f1,
        report.macro_sensitivity
    ));
    out
}

pub fn emit_comparison_table(report: &EvalReport, path: &Path) -> Result<()> {
    fs::write(path, comparison_table_string(report)).map_err(|e| Error::io(path, e))
}
