use std::fmt::Display;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;

/// Counts indexed `[actual][predicted]` in a fixed label order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        if labels.is_empty() || counts.len() != labels.len() || counts.iter().any(|r| r.len() != labels.len()) {
            return Err(MetricsError::BadShape);
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.size()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.size()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    /// Off-diagonal mass of each predicted-label column.
    pub fn off_diagonal_col_sums(&self) -> Vec<u64> {
        self.col_sums()
            .into_iter()
            .enumerate()
            .map(|(j, s)| s - self.counts[j][j])
            .collect()
    }

    /// Header row of predicted labels, one row per actual label.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["actual\\predicted".to_string()];
        header.extend(self.labels.iter().cloned());
        wr.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.counts) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(u64::to_string));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn report(&self) -> ClassificationReport {
        let rows = self.row_sums();
        let cols = self.col_sums();
        let per_class: Vec<ClassMetrics> = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, label)| {
                let tp = self.counts[i][i] as f64;
                let precision = if cols[i] == 0 { 0.0 } else { tp / cols[i] as f64 };
                let recall = if rows[i] == 0 { 0.0 } else { tp / rows[i] as f64 };
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics {
                    label: label.clone(),
                    precision,
                    recall,
                    f1,
                    support: rows[i],
                }
            })
            .collect();
        let total = self.total();
        let weighted_f1 = if total == 0 {
            0.0
        } else {
            per_class.iter().map(|c| c.support as f64 * c.f1).sum::<f64>() / total as f64
        };
        let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len() as f64;
        ClassificationReport {
            accuracy: self.accuracy(),
            weighted_f1,
            macro_f1,
            per_class,
            confusion: self.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

impl ClassificationReport {
    pub fn class(&self, label: &str) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.label == label)
    }
}

/// Builds the confusion matrix over `labels` and derives the report.
pub fn classification_report<T: PartialEq + Display>(
    preds: &[T],
    golds: &[T],
    labels: &[T],
) -> Result<ClassificationReport, MetricsError> {
    if preds.len() != golds.len() {
        return Err(MetricsError::LengthMismatch {
            pred: preds.len(),
            gold: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let index = |x: &T| {
        labels
            .iter()
            .position(|l| l == x)
            .ok_or_else(|| MetricsError::UnknownLabel(x.to_string()))
    };
    let n = labels.len();
    let mut counts = vec![vec![0u64; n]; n];
    for (p, g) in preds.iter().zip(golds) {
        counts[index(g)?][index(p)?] += 1;
    }
    let names = labels.iter().map(|l| l.to_string()).collect();
    Ok(ConfusionMatrix::from_counts(names, counts)?.report())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let g = ["a", "b", "c", "a"];
        let r = classification_report(&g, &g, &["a", "b", "c"]).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.weighted_f1, 1.0);
    }

    #[test]
    fn small_hand_example() {
        let r = classification_report(&["A", "B", "B"], &["A", "A", "B"], &["A", "B"]).unwrap();
        assert!((r.weighted_f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.confusion.counts, vec![vec![1, 1], vec![0, 1]]);
    }

    #[test]
    fn zero_predicted_positives() {
        let r = classification_report(&["A", "A"], &["A", "B"], &["A", "B", "C"]).unwrap();
        let b = r.class("B").unwrap();
        assert_eq!((b.precision, b.recall, b.f1, b.support), (0.0, 0.0, 0.0, 1));
        assert_eq!(r.class("C").unwrap().support, 0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            classification_report(&["A"], &["A", "B"], &["A", "B"]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert_eq!(
            classification_report(&["Z"], &["A"], &["A"]),
            Err(MetricsError::UnknownLabel("Z".into()))
        );
        let empty: [&str; 0] = [];
        assert_eq!(classification_report(&empty, &empty, &["A"]), Err(MetricsError::Empty));
        assert_eq!(
            ConfusionMatrix::from_counts(vec!["a".into()], vec![vec![1, 2]]),
            Err(MetricsError::BadShape)
        );
    }

    #[test]
    fn csv_layout() {
        let m = ConfusionMatrix::from_counts(vec!["x".into(), "y".into()], vec![vec![3, 1], vec![0, 2]]).unwrap();
        assert_eq!(m.to_csv_string(), "actual\\predicted,x,y\nx,3,1\ny,0,2\n");
    }
}
