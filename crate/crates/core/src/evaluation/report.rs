//! Validation reports, curve tables and SVG overlays.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{confusion_metrics, pr_auc, pr_curve, roc_auc, roc_curve, CurveKind, CurvePoints};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model_tag: String,
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEvaluation {
    pub row: MetricsRow,
    pub roc: CurvePoints,
    pub pr: CurvePoints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub models: Vec<ModelEvaluation>,
    /// Tag of the model with the highest ROC-AUC, first listed on ties.
    pub selected: String,
    pub n_rows: usize,
    pub prevalence: f64,
    pub threshold: f64,
}

pub fn metrics_row(tag: &str, scores: &[f64], labels: &[bool], threshold: f64) -> Result<ModelEvaluation> {
    if scores.len() != labels.len() {
        return Err(Error::MisalignedScores {
            tag: tag.to_string(),
            expected: labels.len(),
            found: scores.len(),
        });
    }
    let c = confusion_metrics(scores, labels, threshold)?;
    Ok(ModelEvaluation {
        row: MetricsRow {
            model_tag: tag.to_string(),
            roc_auc: roc_auc(scores, labels)?,
            pr_auc: pr_auc(scores, labels)?,
            accuracy: c.accuracy,
            precision: c.precision,
            recall: c.recall,
            f1: c.f1,
            threshold,
        },
        roc: roc_curve(scores, labels)?,
        pr: pr_curve(scores, labels)?,
    })
}

/// Evaluates aligned `(tag, scores)` vectors against one label vector.
pub fn evaluate_models(models: &[(String, Vec<f64>)], labels: &[bool], threshold: f64) -> Result<Report> {
    let evaluated = models
        .iter()
        .map(|(tag, scores)| metrics_row(tag, scores, labels, threshold))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<&ModelEvaluation> = None;
    for m in &evaluated {
        if best.is_none_or(|b| m.row.roc_auc > b.row.roc_auc) {
            best = Some(m);
        }
    }
    let selected = best.map(|m| m.row.model_tag.clone()).unwrap_or_default();
    let positives = labels.iter().filter(|&&y| y).count();
    Ok(Report {
        models: evaluated,
        selected,
        n_rows: labels.len(),
        prevalence: if labels.is_empty() {
            0.0
        } else {
            positives as f64 / labels.len() as f64
        },
        threshold,
    })
}

pub const TABLE1_HEADER: [&str; 6] = ["model", "ROC", "ACC", "P", "R", "F"];
pub const TABLE2_HEADER: [&str; 7] = ["model", "ROC", "PR", "Acc", "P", "R", "F"];

fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

impl Report {
    fn preamble(&self) -> String {
        format!(
            "# n={} prevalence={} threshold={} selected={}\n",
            self.n_rows,
            fmt4(self.prevalence),
            self.threshold,
            self.selected
        )
    }

    /// Validation layout: ROC, ACC, P, R, F.
    pub fn table1(&self) -> String {
        let mut out = self.preamble();
        let _ = writeln!(out, "{}", TABLE1_HEADER.join("\t"));
        for m in &self.models {
            let r = &m.row;
            let cells = [r.roc_auc, r.accuracy, r.precision, r.recall, r.f1].map(fmt4);
            let _ = writeln!(out, "{}\t{}", r.model_tag, cells.join("\t"));
        }
        out
    }

    /// Test layout: ROC, PR, Acc, P, R, F.
    pub fn table2(&self) -> String {
        let mut out = self.preamble();
        let _ = writeln!(out, "{}", TABLE2_HEADER.join("\t"));
        for m in &self.models {
            let r = &m.row;
            let cells = [r.roc_auc, r.pr_auc, r.accuracy, r.precision, r.recall, r.f1].map(fmt4);
            let _ = writeln!(out, "{}\t{}", r.model_tag, cells.join("\t"));
        }
        out
    }
}

/// Parses a rendered table back into `(tag, values)` rows, checking the header.
pub fn parse_table(text: &str, header: &[&str]) -> Result<Vec<(String, Vec<f64>)>> {
    let bad = |msg: String| Error::SchemaMismatch(msg);
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.is_empty());
    let head: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("empty table".into()))?
        .split('\t')
        .collect();
    if head != header {
        return Err(bad(format!("table header {head:?}, expected {header:?}")));
    }
    lines
        .map(|l| {
            let cols: Vec<&str> = l.split('\t').collect();
            if cols.len() != header.len() {
                return Err(bad(format!("table row `{l}`")));
            }
            let values = cols[1..]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|_| bad(format!("table cell `{c}`"))))
                .collect::<Result<_>>()?;
            Ok((cols[0].to_string(), values))
        })
        .collect()
}

pub fn curve_tsv(curve: &CurvePoints) -> String {
    let (x, y) = curve.kind.axis_names();
    let mut out = format!("{x}\t{y}\n");
    for (a, b) in &curve.points {
        let _ = writeln!(out, "{a}\t{b}");
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Self-contained SVG with every model's curve of one kind and a legend.
pub fn curves_svg(kind: CurveKind, curves: &[(&str, &CurvePoints)]) -> String {
    const W: f64 = 520.0;
    const H: f64 = 480.0;
    const LEFT: f64 = 60.0;
    const TOP: f64 = 40.0;
    const SIZE: f64 = 380.0;
    let px = |x: f64| LEFT + x * SIZE;
    let py = |y: f64| TOP + (1.0 - y) * SIZE;
    let (xname, yname) = kind.axis_names();
    let title = match kind {
        CurveKind::Roc => "ROC curves",
        CurveKind::Pr => "Precision-recall curves",
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>",
        px(0.5)
    );
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#dddddd\"/>",
            px(t),
            py(0.0),
            px(t),
            py(1.0)
        );
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#dddddd\"/>",
            px(0.0),
            py(t),
            px(1.0),
            py(t)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{t:.1}</text>",
            px(t),
            py(0.0) + 16.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{t:.1}</text>",
            px(0.0) - 6.0,
            py(t) + 4.0
        );
    }
    let _ = writeln!(
        s,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{SIZE}\" height=\"{SIZE}\" fill=\"none\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{xname}</text>",
        px(0.5),
        py(0.0) + 34.0
    );
    let _ = writeln!(
        s,
        "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">{yname}</text>",
        py(0.5),
        py(0.5)
    );
    if kind == CurveKind::Roc {
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#999999\" stroke-dasharray=\"4 4\"/>",
            px(0.0),
            py(0.0),
            px(1.0),
            py(1.0)
        );
    }
    for (i, (tag, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = String::new();
        let mut last: Option<(String, String)> = None;
        for &(x, y) in &curve.points {
            let p = (format!("{:.2}", px(x)), format!("{:.2}", py(y)));
            if last.as_ref() != Some(&p) {
                let _ = write!(pts, "{},{} ", p.0, p.1);
                last = Some(p);
            }
        }
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            pts.trim_end()
        );
        let ly = TOP + 16.0 + 18.0 * i as f64;
        let lx = LEFT + SIZE + 12.0;
        let _ = writeln!(
            s,
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"3\"/>",
            lx + 18.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\">{}</text>",
            lx + 22.0,
            ly + 4.0,
            xml_escape(tag)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> Report {
        let labels = [true, false, true, false];
        let models = vec![
            ("LR".to_string(), vec![0.9, 0.8, 0.7, 0.3]),
            ("GBT".to_string(), vec![0.9, 0.2, 0.7, 0.3]),
        ];
        evaluate_models(&models, &labels, 0.5).unwrap()
    }

    #[test]
    fn selects_highest_roc() {
        let r = report();
        assert_eq!(r.selected, "GBT");
        assert_eq!(r.prevalence, 0.5);
        assert_eq!(r.models[0].row.roc_auc, 0.75);
    }

    #[test]
    fn identical_scores_give_identical_rows() {
        let models = vec![("A".to_string(), vec![0.1, 0.6]), ("B".to_string(), vec![0.1, 0.6])];
        let r = evaluate_models(&models, &[false, true], 0.5).unwrap();
        let strip = |m: &ModelEvaluation| MetricsRow {
            model_tag: String::new(),
            ..m.row.clone()
        };
        assert_eq!(strip(&r.models[0]), strip(&r.models[1]));
        assert_eq!(r.selected, "A");
    }

    #[test]
    fn misaligned_vector_names_its_tag() {
        let models = vec![("ET".to_string(), vec![0.1])];
        match evaluate_models(&models, &[true, false], 0.5) {
            Err(Error::MisalignedScores {
                tag,
                expected: 2,
                found: 1,
            }) => assert_eq!(tag, "ET"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tables_parse_back() {
        let r = report();
        let t1 = parse_table(&r.table1(), &TABLE1_HEADER).unwrap();
        assert_eq!(t1.len(), 2);
        assert_eq!(t1[0].0, "LR");
        assert_eq!(t1[0].1, vec![0.75, 0.75, 0.6667, 1.0, 0.8]);
        let t2 = parse_table(&r.table2(), &TABLE2_HEADER).unwrap();
        assert_eq!(t2[1].1.len(), 6);
        assert!(parse_table(&r.table1(), &TABLE2_HEADER).is_err());
    }

    #[test]
    fn svg_has_one_polyline_per_model_and_a_legend() {
        let r = report();
        let curves: Vec<(&str, &CurvePoints)> = r.models.iter().map(|m| (m.row.model_tag.as_str(), &m.roc)).collect();
        let svg = curves_svg(CurveKind::Roc, &curves);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">LR</text>") && svg.contains(">GBT</text>"));
    }

    #[test]
    fn curve_table_has_axis_header() {
        let r = report();
        let t = curve_tsv(&r.models[0].pr);
        assert!(t.starts_with("recall\tprecision\n0\t1\n"));
    }
}
