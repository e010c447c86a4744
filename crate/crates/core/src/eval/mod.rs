//! Confusion matrices, per-class precision/recall, F-beta and band tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The recall-leaning beta used for model selection.
pub const DEFAULT_BETA: f64 = 1.2;
pub const HIGH_BAND: f64 = 0.90;
pub const MEDIUM_BAND: f64 = 0.80;

/// Rows are true classes, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix { n_classes, counts: vec![0; n_classes * n_classes] }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::shape("confusion matrix must be square"));
        }
        Ok(ConfusionMatrix { n_classes: c, counts: rows.concat() })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.n_classes + predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n_classes.max(1)).map(<[u64]>::to_vec).collect()
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.n_classes).map(|p| self.get(class, p)).sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        (0..self.n_classes).map(|t| self.get(t, class)).sum()
    }
}

pub fn confusion_matrix(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::invalid(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    let mut cm = ConfusionMatrix::new(n_classes);
    for (&p, &t) in preds.iter().zip(labels) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::invalid(format!("class id {} out of range for {n_classes} classes", p.max(t))));
        }
        cm.add(t, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_beta: Option<f64>,
    pub support: u64,
    /// Nothing was predicted as this class.
    pub no_predictions: bool,
    /// The class has no true examples.
    pub no_support: bool,
}

impl ClassMetrics {
    pub fn degenerate(&self) -> bool {
        self.no_predictions || self.no_support
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassMetrics {
    pub classes: Vec<ClassMetrics>,
}

impl PerClassMetrics {
    pub fn with_f_beta(mut self, beta: f64) -> Result<Self> {
        for c in &mut self.classes {
            c.f_beta = Some(f_beta(c.precision, c.recall, beta)?);
        }
        Ok(self)
    }

    pub fn total_support(&self) -> u64 {
        self.classes.iter().map(|c| c.support).sum()
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Empty denominators give 0 and raise the matching flag.
pub fn precision_recall(cm: &ConfusionMatrix) -> PerClassMetrics {
    let classes = (0..cm.n_classes())
        .map(|c| {
            let tp = cm.get(c, c);
            let support = cm.support(c);
            let (precision, no_predictions) = ratio(tp, cm.predicted(c));
            let (recall, no_support) = ratio(tp, support);
            ClassMetrics { precision, recall, f_beta: None, support, no_predictions, no_support }
        })
        .collect();
    PerClassMetrics { classes }
}

pub fn f_beta(precision: f64, recall: f64, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::invalid(format!("beta must be non-negative, got {beta}")));
    }
    if !(0.0..=1.0).contains(&precision) || !(0.0..=1.0).contains(&recall) {
        return Err(Error::invalid(format!("precision {precision} / recall {recall} outside [0, 1]")));
    }
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 + b2) * precision * recall / den)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("accuracy of an empty confusion matrix"));
    }
    let trace: u64 = (0..cm.n_classes()).map(|c| cm.get(c, c)).sum();
    Ok(trace as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BandCounts {
    pub high: usize,
    pub medium: usize,
    pub low: usize,
}

impl BandCounts {
    fn push(&mut self, v: f64, high: f64, medium: f64) {
        if v >= high {
            self.high += 1;
        } else if v >= medium {
            self.medium += 1;
        } else {
            self.low += 1;
        }
    }

    pub fn total(&self) -> usize {
        self.high + self.medium + self.low
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandTable {
    pub precision: BandCounts,
    pub recall: BandCounts,
    pub f_beta: Option<BandCounts>,
}

pub fn band_table(metrics: &PerClassMetrics) -> BandTable {
    band_table_with(metrics, MEDIUM_BAND, HIGH_BAND)
}

/// Values at a threshold fall into the upper band.
pub fn band_table_with(metrics: &PerClassMetrics, medium: f64, high: f64) -> BandTable {
    let mut precision = BandCounts::default();
    let mut recall = BandCounts::default();
    let mut fb = metrics.classes.iter().all(|c| c.f_beta.is_some()).then(BandCounts::default);
    for c in &metrics.classes {
        precision.push(c.precision, high, medium);
        recall.push(c.recall, high, medium);
        if let (Some(b), Some(v)) = (fb.as_mut(), c.f_beta) {
            b.push(v, high, medium);
        }
    }
    BandTable { precision, recall, f_beta: fb }
}

/// Per-class metrics as CSV, one row per class.
pub fn metrics_csv(metrics: &PerClassMetrics, class_names: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["class", "precision", "recall", "f_beta", "support", "degenerate"])?;
    for (i, c) in metrics.classes.iter().enumerate() {
        let name = class_names.get(i).cloned().unwrap_or_else(|| i.to_string());
        w.write_record([
            name,
            c.precision.to_string(),
            c.recall.to_string(),
            c.f_beta.map(|v| v.to_string()).unwrap_or_default(),
            c.support.to_string(),
            c.degenerate().to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

impl BandTable {
    /// `(metric name, counts)` for every metric present.
    pub fn metrics(&self) -> Vec<(&'static str, BandCounts)> {
        let mut v = vec![("precision", self.precision), ("recall", self.recall)];
        if let Some(f) = self.f_beta {
            v.push(("f_beta", f));
        }
        v
    }

    /// Band table as CSV with columns `>=0.90`, `0.80-0.90` and `<0.80`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,>=0.90,0.80-0.90,<0.80\n");
        for (name, b) in self.metrics() {
            let _ = writeln!(s, "{name},{},{},{}", b.high, b.medium, b.low);
        }
        s
    }
}

/// Grouped bar chart of band counts for every metric.
pub fn band_svg(table: &BandTable, title: &str) -> String {
    bars_svg(&table.metrics(), title)
}

/// One chart per metric, keyed by metric name.
pub fn band_svgs(table: &BandTable, title: &str) -> Vec<(&'static str, String)> {
    table.metrics().into_iter().map(|(name, b)| (name, bars_svg(&[(name, b)], &format!("{title}: {name}")))).collect()
}

fn bars_svg(groups: &[(&str, BandCounts)], title: &str) -> String {
    let max = groups.iter().map(|(_, b)| b.high.max(b.medium).max(b.low)).max().unwrap_or(0).max(1);
    let (bar, gap, top, plot_h) = (28.0, 40.0, 40.0, 200.0);
    let width = 60.0 + groups.len() as f64 * (3.0 * bar + gap);
    let height = top + plot_h + 50.0;
    let colors = [("high", "#2e7d32"), ("medium", "#f9a825"), ("low", "#c62828")];

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="10" y="20" font-size="14">{}</text>"#, escape(title));
    let base = top + plot_h;
    let _ = writeln!(s, r#"<line x1="40" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, width - 10.0);
    for (g, (name, counts)) in groups.iter().enumerate() {
        let x0 = 50.0 + g as f64 * (3.0 * bar + gap);
        for (k, value) in [counts.high, counts.medium, counts.low].into_iter().enumerate() {
            let h = plot_h * value as f64 / max as f64;
            let x = x0 + k as f64 * bar;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{}" width="{}" height="{h}" fill="{}"><title>{} {}: {value}</title></rect>"#,
                base - h,
                bar - 2.0,
                colors[k].1,
                name,
                colors[k].0
            );
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{value}</text>"#, x + bar / 2.0 - 1.0, base - h - 4.0);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{name}</text>"#, x0 + 1.5 * bar, base + 18.0);
    }
    for (k, (label, color)) in colors.iter().enumerate() {
        let x = 50.0 + k as f64 * 90.0;
        let _ = writeln!(s, r#"<rect x="{x}" y="{}" width="10" height="10" fill="{color}"/>"#, base + 30.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{label}</text>"#, x + 14.0, base + 39.0);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn confusion_examples() {
        let cm = confusion_matrix(&[0, 1, 1], &[0, 1, 0], 2).unwrap();
        assert_eq!(cm.rows(), vec![vec![1, 1], vec![0, 1]]);
        assert!(confusion_matrix(&[0], &[0, 1], 2).is_err());
        assert!(confusion_matrix(&[2], &[0], 2).is_err());

        let diag = confusion_matrix(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(diag.rows(), vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        let col = confusion_matrix(&[0, 0, 0], &[0, 1, 2], 3).unwrap();
        assert!((0..3).all(|t| col.get(t, 1) == 0 && col.get(t, 2) == 0));
    }

    #[test]
    fn precision_recall_examples() {
        let cm = ConfusionMatrix::from_rows(&[vec![1, 1], vec![0, 1]]).unwrap();
        let m = precision_recall(&cm);
        assert_eq!(m.classes[1].precision, 0.5);
        assert_eq!(m.classes[1].recall, 1.0);
        assert!((accuracy(&cm).unwrap() - 2.0 / 3.0).abs() < 1e-15);

        let diag = ConfusionMatrix::from_rows(&[vec![3, 0], vec![0, 4]]).unwrap();
        assert!(precision_recall(&diag).classes.iter().all(|c| c.precision == 1.0 && c.recall == 1.0));
        assert_eq!(accuracy(&diag).unwrap(), 1.0);

        let empty_class = ConfusionMatrix::from_rows(&[vec![2, 0], vec![0, 0]]).unwrap();
        let m = precision_recall(&empty_class);
        assert_eq!(m.classes[1].recall, 0.0);
        assert!(m.classes[1].no_support && m.classes[1].degenerate());
        assert!(accuracy(&ConfusionMatrix::new(2)).is_err());
    }

    #[test]
    fn f_beta_examples() {
        for x in [0.0, 0.3, 0.77, 1.0] {
            for b in [0.5, 1.0, 1.2, 3.0] {
                assert!((f_beta(x, x, b).unwrap() - x).abs() < 1e-15);
            }
        }
        assert_eq!(f_beta(1.0, 0.0, 1.2).unwrap(), 0.0);
        let want = 2.44 * 0.54 / 1.896;
        assert!((f_beta(0.9, 0.6, 1.2).unwrap() - want).abs() < 1e-15);
        assert!((f_beta(0.9, 0.6, 1.2).unwrap() - 0.694_937).abs() < 1e-6);
        assert!(f_beta(0.5, 0.5, -1.0).is_err());
    }

    #[test]
    fn band_boundaries() {
        let m = PerClassMetrics {
            classes: [0.9, 0.8999, 0.8, 0.7999, 1.0]
                .iter()
                .map(|&v| ClassMetrics { precision: v, recall: 1.0, f_beta: None, support: 1, no_predictions: false, no_support: false })
                .collect(),
        };
        let t = band_table(&m);
        assert_eq!(t.precision, BandCounts { high: 2, medium: 2, low: 1 });
        assert_eq!(t.recall, BandCounts { high: 5, medium: 0, low: 0 });
        assert!(t.f_beta.is_none());
        let t = band_table(&m.with_f_beta(DEFAULT_BETA).unwrap());
        assert_eq!(t.f_beta.unwrap().total(), 5);
    }

    #[test]
    fn uniform_predictions_give_chance_accuracy() {
        let c = 5;
        let n = 10_000;
        let mut r = crate::rng::seeded(7);
        let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        let preds: Vec<usize> = (0..n).map(|_| r.gen_range(0..c)).collect();
        let acc = accuracy(&confusion_matrix(&preds, &labels, c).unwrap()).unwrap();
        let p = 1.0 / c as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((acc - p).abs() < 3.0 * sigma, "{acc}");
    }

    #[test]
    fn report_outputs() {
        let cm = ConfusionMatrix::from_rows(&[vec![5, 1], vec![0, 4]]).unwrap();
        let m = precision_recall(&cm).with_f_beta(DEFAULT_BETA).unwrap();
        let csv = metrics_csv(&m, &["010101".into(), "020202".into()]).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("class,precision,recall,f_beta,support,degenerate\n010101,1,"));
        let svg = band_svg(&band_table(&m), "bands <test>");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("&lt;test&gt;"));
        assert_eq!(svg.matches("<rect").count(), 9 + 3);
        let per = band_svgs(&band_table(&m), "t");
        assert_eq!(per.iter().map(|p| p.0).collect::<Vec<_>>(), ["precision", "recall", "f_beta"]);
        assert!(per.iter().all(|(_, s)| s.matches("<rect").count() == 3 + 3));
        let table = band_table(&m).to_csv();
        assert_eq!(table.lines().next().unwrap(), "metric,>=0.90,0.80-0.90,<0.80");
        assert_eq!(table.lines().count(), 4);
    }

    proptest! {
        #[test]
        fn f1_is_harmonic_mean(p in 0.001f64..1.0, r in 0.001f64..1.0) {
            let h = 2.0 / (1.0 / p + 1.0 / r);
            prop_assert!((f_beta(p, r, 1.0).unwrap() - h).abs() < 1e-12);
        }

        #[test]
        fn f_beta_grows_with_beta_when_recall_leads(p in 0.01f64..0.98, gap in 0.01f64..0.5) {
            let r = (p + gap).min(1.0);
            prop_assume!(r > p);
            let fs: Vec<f64> = [0.5, 1.0, 1.2, 2.0].iter().map(|&b| f_beta(p, r, b).unwrap()).collect();
            prop_assert!(fs.windows(2).all(|w| w[1] > w[0]), "{fs:?}");
        }

        #[test]
        fn metrics_are_bounded_and_bands_total(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200)) {
            let (preds, labels): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let cm = confusion_matrix(&preds, &labels, 4).unwrap();
            prop_assert_eq!(cm.total() as usize, preds.len());
            let m = precision_recall(&cm).with_f_beta(DEFAULT_BETA).unwrap();
            prop_assert_eq!(m.total_support() as usize, preds.len());
            for c in &m.classes {
                prop_assert!((0.0..=1.0).contains(&c.precision) && (0.0..=1.0).contains(&c.recall));
            }
            let t = band_table(&m);
            prop_assert_eq!(t.precision.total(), 4);
            prop_assert_eq!(t.recall.total(), 4);
            prop_assert_eq!(t.f_beta.unwrap().total(), 4);
        }

        #[test]
        fn relabeling_permutes_metrics(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..100), perm_idx in 0usize..6) {
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let perm = perms[perm_idx];
            let (preds, labels): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let base = precision_recall(&confusion_matrix(&preds, &labels, 3).unwrap());
            let pp: Vec<usize> = preds.iter().map(|&p| perm[p]).collect();
            let pl: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
            let moved = precision_recall(&confusion_matrix(&pp, &pl, 3).unwrap());
            for c in 0..3 {
                prop_assert_eq!(&base.classes[c], &moved.classes[perm[c]]);
            }
        }
    }
}
