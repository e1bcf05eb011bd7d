use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square count matrix, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            n: num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.n || predicted >= self.n {
            return Err(Error::InvalidArgument(format!(
                "class pair ({truth}, {predicted}) outside 0..{}",
                self.n
            )));
        }
        self.counts[truth * self.n + predicted] += 1;
        Ok(())
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.n..(truth + 1) * self.n]
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.row(truth).iter().sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.n).map(|t| self.get(t, predicted)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Header row of class names, then one row per true class.
    pub fn to_csv(&self, names: &[String]) -> Result<String> {
        if names.len() != self.n {
            return Err(Error::InvalidArgument(format!("{} names for {} classes", names.len(), self.n)));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["true\\pred".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for (t, name) in names.iter().enumerate() {
            let mut rec = vec![name.clone()];
            rec.extend(self.row(t).iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Builds a confusion matrix from paired class ids.
pub fn confusion_matrix(num_classes: usize, predictions: &[usize], labels: &[usize]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(num_classes);
    for (&p, &t) in predictions.iter().zip(labels) {
        cm.add(t, p)?;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Precision, recall and F1 of one class. Empty denominators give 0.
pub fn precision_recall_f1(cm: &ConfusionMatrix, class: usize) -> ClassMetrics {
    let tp = cm.get(class, class) as f64;
    let predicted = cm.col_sum(class);
    let actual = cm.row_sum(class);
    let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
    let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
    ClassMetrics {
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

/// Mean per-class recall over classes that have at least one true sample.
pub fn avg_class_accuracy(cm: &ConfusionMatrix) -> f64 {
    let mut sum = 0.0;
    let mut classes = 0usize;
    for c in 0..cm.num_classes() {
        let actual = cm.row_sum(c);
        if actual == 0 {
            log::warn!("class {c} has no true samples; excluded from average class accuracy");
            continue;
        }
        sum += cm.get(c, c) as f64 / actual as f64;
        classes += 1;
    }
    if classes == 0 {
        0.0
    } else {
        sum / classes as f64
    }
}

/// Fraction of all samples on the diagonal.
pub fn overall_accuracy(cm: &ConfusionMatrix) -> f64 {
    let total = cm.total();
    if total == 0 {
        0.0
    } else {
        cm.trace() as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    fn two_class() -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::new(2);
        for (t, p, k) in [(0, 0, 8), (0, 1, 2), (1, 0, 1), (1, 1, 9)] {
            for _ in 0..k {
                cm.add(t, p).unwrap();
            }
        }
        cm
    }

    #[test]
    fn hand_computed_two_class() {
        let m = precision_recall_f1(&two_class(), 0);
        assert_relative_eq!(m.precision, 8.0 / 9.0, epsilon = 1e-12);
        assert_relative_eq!(m.recall, 0.8, epsilon = 1e-12);
        assert_relative_eq!(m.f1, 0.842105263157894, epsilon = 1e-12);
        assert_relative_eq!(f1_score(0.8, 0.6), 0.685714285714285, epsilon = 1e-12);
    }

    #[test]
    fn diagonal_is_perfect() {
        let labels: Vec<usize> = (0..16).flat_map(|c| [c, c, c]).collect();
        let cm = confusion_matrix(16, &labels, &labels).unwrap();
        for c in 0..16 {
            assert_eq!(precision_recall_f1(&cm, c), ClassMetrics { precision: 1.0, recall: 1.0, f1: 1.0 });
        }
        assert_eq!(avg_class_accuracy(&cm), 1.0);
        assert_eq!(overall_accuracy(&cm), 1.0);
    }

    #[test]
    fn single_pair_and_errors() {
        let cm = confusion_matrix(16, &[7], &[2]).unwrap();
        assert_eq!(cm.get(2, 7), 1);
        assert_eq!(cm.total(), 1);
        assert!(confusion_matrix(16, &[16], &[0]).is_err());
        assert!(confusion_matrix(16, &[1, 2], &[0]).is_err());
    }

    #[test]
    fn one_class_wrong() {
        let labels: Vec<usize> = (0..16).collect();
        let mut preds = labels.clone();
        preds[3] = 4;
        let cm = confusion_matrix(16, &preds, &labels).unwrap();
        assert_relative_eq!(avg_class_accuracy(&cm), 0.9375, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_denominators() {
        let cm = confusion_matrix(3, &[0, 0], &[0, 1]).unwrap();
        let m2 = precision_recall_f1(&cm, 2);
        assert_eq!((m2.precision, m2.recall, m2.f1), (0.0, 0.0, 0.0));
        assert_eq!(precision_recall_f1(&cm, 1).precision, 0.0);
        assert_relative_eq!(avg_class_accuracy(&cm), 0.5);
    }

    #[test]
    fn csv_layout() {
        let names = vec!["a".to_string(), "b".to_string()];
        let csv = two_class().to_csv(&names).unwrap();
        assert_eq!(csv, "true\\pred,a,b\na,8,2\nb,1,9\n");
    }

    proptest! {
        #[test]
        fn matches_recount(pairs in prop::collection::vec((0usize..16, 0usize..16), 1..300)) {
            let labels: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let preds: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let cm = confusion_matrix(16, &preds, &labels).unwrap();
            let mut recalls = Vec::new();
            for c in 0..16 {
                let rows: Vec<_> = pairs.iter().filter(|p| p.0 == c).collect();
                prop_assert_eq!(cm.row_sum(c) as usize, rows.len());
                let m = precision_recall_f1(&cm, c);
                // harmonic mean: between min and max, never above the arithmetic mean
                prop_assert!(m.f1 >= m.precision.min(m.recall) - 1e-12);
                prop_assert!(m.f1 <= (m.precision + m.recall) / 2.0 + 1e-12);
                if !rows.is_empty() {
                    recalls.push(rows.iter().filter(|p| p.1 == c).count() as f64 / rows.len() as f64);
                }
            }
            let want = recalls.iter().sum::<f64>() / recalls.len() as f64;
            prop_assert!((avg_class_accuracy(&cm) - want).abs() < 1e-12);
            let mut rev = pairs.clone();
            rev.reverse();
            let cm2 = confusion_matrix(16, &rev.iter().map(|p| p.1).collect::<Vec<_>>(), &rev.iter().map(|p| p.0).collect::<Vec<_>>()).unwrap();
            prop_assert_eq!(cm, cm2);
        }
    }
}
