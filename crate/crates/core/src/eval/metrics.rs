use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts with rows indexed by true class and columns by predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { counts: vec![vec![0; classes]; classes] }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if n == 0 || counts.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("confusion matrix must be square and non-empty"));
        }
        Ok(Self { counts })
    }

    pub fn from_predictions(classes: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::invalid(format!("{} labels but {} predictions", truth.len(), predicted.len())));
        }
        let mut m = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.record(t, p)?;
        }
        Ok(m)
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let n = self.classes();
        if truth >= n || predicted >= n {
            return Err(Error::invalid(format!("class pair ({truth}, {predicted}) outside 0..{n}")));
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes() != self.classes() {
            return Err(Error::invalid("confusion matrices differ in size"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<u64> {
        (0..self.classes()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    /// CSV with a `true\predicted` corner cell and the given class labels.
    pub fn to_csv(&self, labels: &[String]) -> String {
        let mut out = String::from("true\\predicted");
        for l in labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in labels.iter().zip(&self.counts) {
            out.push_str(l);
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Per-class precision, recall and F1, each zero when its denominator is.
pub fn per_class(m: &ConfusionMatrix) -> Vec<(f64, f64, f64)> {
    let rows = m.row_sums();
    let cols = m.column_sums();
    (0..m.classes())
        .map(|i| {
            let tp = m.get(i, i) as f64;
            let p = if cols[i] > 0 { tp / cols[i] as f64 } else { 0.0 };
            let r = if rows[i] > 0 { tp / rows[i] as f64 } else { 0.0 };
            let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            (p, r, f1)
        })
        .collect()
}

/// Accuracy and unweighted means of the per-class scores. Classes that never
/// occur, either as truth or as prediction, are left out of the means.
pub fn compute_metrics(m: &ConfusionMatrix) -> Result<Metrics> {
    let total = m.total();
    if total == 0 {
        return Err(Error::invalid("confusion matrix is empty"));
    }
    let rows = m.row_sums();
    let cols = m.column_sums();
    let scores = per_class(m);
    let active: Vec<&(f64, f64, f64)> = scores.iter().enumerate().filter(|(i, _)| rows[*i] + cols[*i] > 0).map(|(_, s)| s).collect();
    let n = active.len() as f64;
    Ok(Metrics {
        accuracy: m.trace() as f64 / total as f64,
        macro_precision: active.iter().map(|s| s.0).sum::<f64>() / n,
        macro_recall: active.iter().map(|s| s.1).sum::<f64>() / n,
        macro_f1: active.iter().map(|s| s.2).sum::<f64>() / n,
    })
}
