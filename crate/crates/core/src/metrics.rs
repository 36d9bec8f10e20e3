//! Classification and regression metrics over discrete predictions.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::corpus::{Example, Task};
use crate::model::ModelParams;
use crate::textprep::TextPipeline;
use crate::train::predict;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{preds} predictions but {gold} gold labels")]
    Length { preds: usize, gold: usize },
    #[error("metrics need at least one example")]
    Empty,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum F1Averaging {
    /// Unweighted mean over every class seen in either list.
    Macro,
    /// Mean weighted by each class's gold support.
    #[default]
    Weighted,
}

impl F1Averaging {
    pub fn id(self) -> &'static str {
        match self {
            F1Averaging::Macro => "macro",
            F1Averaging::Weighted => "weighted",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            "macro" => Some(F1Averaging::Macro),
            "weighted" => Some(F1Averaging::Weighted),
            _ => None,
        }
    }
}

fn check<T>(preds: &[T], gold: &[T]) -> Result<(), MetricsError> {
    if preds.len() != gold.len() {
        return Err(MetricsError::Length { preds: preds.len(), gold: gold.len() });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

#[derive(Default, Clone, Copy)]
struct ClassCounts {
    true_pos: usize,
    predicted: usize,
    support: usize,
}

fn class_counts(preds: &[usize], gold: &[usize]) -> BTreeMap<usize, ClassCounts> {
    let mut counts: BTreeMap<usize, ClassCounts> = BTreeMap::new();
    for (&p, &g) in preds.iter().zip(gold) {
        counts.entry(p).or_default().predicted += 1;
        counts.entry(g).or_default().support += 1;
        if p == g {
            counts.entry(g).or_default().true_pos += 1;
        }
    }
    counts
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(preds: &[usize], gold: &[usize], averaging: F1Averaging) -> Result<f64, MetricsError> {
    check(preds, gold)?;
    let counts = class_counts(preds, gold);
    let f1 = |c: &ClassCounts| {
        let precision = ratio(c.true_pos, c.predicted);
        let recall = ratio(c.true_pos, c.support);
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    };
    Ok(match averaging {
        F1Averaging::Macro => counts.values().map(f1).sum::<f64>() / counts.len() as f64,
        F1Averaging::Weighted => counts.values().map(|c| c.support as f64 * f1(c)).sum::<f64>() / gold.len() as f64,
    })
}

/// Cohen's kappa. `None` when chance agreement is 1, which happens exactly
/// when both lists are the same single constant class.
pub fn cohens_kappa(preds: &[usize], gold: &[usize]) -> Result<Option<f64>, MetricsError> {
    check(preds, gold)?;
    let n = preds.len() as u128;
    let agree = preds.iter().zip(gold).filter(|(p, g)| p == g).count() as u128;
    // kappa = (p_o - p_e) / (1 - p_e), scaled by n^2 to stay in integers.
    let chance: u128 = class_counts(preds, gold).values().map(|c| c.predicted as u128 * c.support as u128).sum();
    let denom = n * n - chance;
    if denom == 0 {
        return Ok(None);
    }
    Ok(Some(((n * agree) as i128 - chance as i128) as f64 / denom as f64))
}

/// Mean squared error between task-scale values.
pub fn mse(preds: &[i64], gold: &[i64]) -> Result<f64, MetricsError> {
    check(preds, gold)?;
    let total: i64 = preds.iter().zip(gold).map(|(p, g)| (p - g) * (p - g)).sum();
    Ok(total as f64 / preds.len() as f64)
}

pub fn accuracy(preds: &[usize], gold: &[usize]) -> Result<f64, MetricsError> {
    check(preds, gold)?;
    Ok(preds.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / preds.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub n: usize,
    /// F1 under `f1_averaging`.
    pub f1: f64,
    pub f1_averaging: F1Averaging,
    pub f1_macro: f64,
    pub f1_weighted: f64,
    pub kappa: Option<f64>,
    pub mse: f64,
    pub accuracy: f64,
}

impl MetricsReport {
    /// Computes every metric from class-index predictions. MSE is taken on
    /// the task's own scale.
    pub fn from_predictions(preds: &[usize], gold: &[usize], task: Task, averaging: F1Averaging) -> Result<Self, MetricsError> {
        let scale = |v: &[usize]| v.iter().map(|&c| task.to_scale(c)).collect::<Vec<_>>();
        let f1_macro = f1_score(preds, gold, F1Averaging::Macro)?;
        let f1_weighted = f1_score(preds, gold, F1Averaging::Weighted)?;
        Ok(Self {
            n: preds.len(),
            f1: match averaging {
                F1Averaging::Macro => f1_macro,
                F1Averaging::Weighted => f1_weighted,
            },
            f1_averaging: averaging,
            f1_macro,
            f1_weighted,
            kappa: cohens_kappa(preds, gold)?,
            mse: mse(&scale(preds), &scale(gold))?,
            accuracy: accuracy(preds, gold)?,
        })
    }

    /// Machine-readable `key=value` lines.
    pub fn key_values(&self) -> String {
        let kappa = self.kappa.map_or("undefined".to_owned(), |k| k.to_string());
        format!(
            "n={}\nf1={}\nf1_averaging={}\nf1_macro={}\nf1_weighted={}\nkappa={}\nmse={}\nmse_rounded={:.2}\naccuracy={}\n",
            self.n,
            self.f1,
            self.f1_averaging.id(),
            self.f1_macro,
            self.f1_weighted,
            kappa,
            self.mse,
            self.mse.round(),
            self.accuracy
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kappa = self.kappa.map_or("undefined".to_owned(), |k| format!("{:.5}", k));
        writeln!(f, "{:<8} {:<10} {:<10} {:<10} {:<10} {:<10} {:<8}", "n", "F1", "F1-macro", "F1-wtd", "Kappa", "MSE", "MSE(rnd)")?;
        writeln!(
            f,
            "{:<8} {:<10.5} {:<10.5} {:<10.5} {:<10} {:<10.5} {:<8.2}",
            self.n,
            self.f1,
            self.f1_macro,
            self.f1_weighted,
            kappa,
            self.mse,
            self.mse.round()
        )?;
        write!(f, "accuracy {:.5} (F1 averaging: {})", self.accuracy, self.f1_averaging.id())
    }
}

/// Figures reported for the original shared-task submission, for side by
/// side comparison. Kappa was only reported for the average-rating task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PublishedResult {
    pub n: usize,
    pub f1: f64,
    pub kappa: Option<f64>,
    pub mse: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Validation,
    Test,
}

pub fn published_result(task: Task, split: Split) -> PublishedResult {
    match (task, split) {
        (Task::AverageRating, Split::Validation) => PublishedResult { n: 395, f1: 0.09899, kappa: Some(-0.01521), mse: 6.00 },
        (Task::Disagreement, Split::Validation) => PublishedResult { n: 395, f1: 0.21622, kappa: None, mse: 5.00 },
        (Task::AverageRating, Split::Test) => PublishedResult { n: 791, f1: 0.11582, kappa: Some(0.00337), mse: 6.00 },
        (Task::Disagreement, Split::Test) => PublishedResult { n: 791, f1: 0.18331, kappa: None, mse: 5.00 },
    }
}

impl fmt::Display for PublishedResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kappa = self.kappa.map_or("-".to_owned(), |k| format!("{:.5}", k));
        write!(f, "published: n={} f1={:.5} kappa={} mse={:.2}", self.n, self.f1, kappa, self.mse)
    }
}

/// Encodes `examples`, predicts with `params`, and scores the predictions
/// against the task labels.
pub fn evaluate(
    params: &ModelParams,
    examples: &[Example],
    task: Task,
    pipeline: &TextPipeline,
    averaging: F1Averaging,
) -> Result<MetricsReport, crate::train::TrainError> {
    if examples.is_empty() {
        return Err(MetricsError::Empty.into());
    }
    let encoded = pipeline.encode_all(examples, task);
    let preds = predict(params, &encoded)?;
    let gold: Vec<usize> = encoded.iter().map(|e| e.label).collect();
    Ok(MetricsReport::from_predictions(&preds, &gold, task, averaging)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_examples() {
        let perfect = [3, 1, 4, 1, 5];
        assert_eq!(f1_score(&perfect, &perfect, F1Averaging::Macro).unwrap(), 1.0);
        assert_eq!(f1_score(&perfect, &perfect, F1Averaging::Weighted).unwrap(), 1.0);
        let macro_f1 = f1_score(&[1, 1, 0], &[1, 0, 0], F1Averaging::Macro).unwrap();
        assert!((macro_f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_score(&[0, 0, 0], &[1, 1, 1], F1Averaging::Macro).unwrap(), 0.0);
        assert_eq!(f1_score(&[0, 0, 0], &[1, 1, 1], F1Averaging::Weighted).unwrap(), 0.0);
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(cohens_kappa(&[1, 2, 3, 1], &[1, 2, 3, 1]).unwrap(), Some(1.0));
        assert_eq!(cohens_kappa(&[1, 2, 1, 2], &[1, 1, 2, 2]).unwrap(), Some(0.0));
        assert_eq!(cohens_kappa(&[4, 4, 4], &[4, 4, 4]).unwrap(), None);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[3, 5], &[3, 5]).unwrap(), 0.0);
        assert_eq!(mse(&[3, 5], &[1, 5]).unwrap(), 2.0);
        assert_eq!(mse(&[4, 5, 6], &[1, 2, 3]).unwrap(), 9.0);
    }

    #[test]
    fn input_errors() {
        assert_eq!(f1_score(&[1], &[1, 2], F1Averaging::Macro), Err(MetricsError::Length { preds: 1, gold: 2 }));
        assert_eq!(cohens_kappa(&[], &[]), Err(MetricsError::Empty));
        assert_eq!(mse(&[], &[]), Err(MetricsError::Empty));
    }

    #[test]
    fn report_uses_task_scale_for_mse() {
        // class 0 vs class 3 is rating 1 vs rating 4 or disagreement 0 vs 3;
        // either way the squared error is 9.
        let r = MetricsReport::from_predictions(&[0, 5], &[3, 5], Task::AverageRating, F1Averaging::Weighted).unwrap();
        assert_eq!(r.mse, 4.5);
        assert_eq!(r.n, 2);
        assert_eq!(r.accuracy, 0.5);
        assert!(r.key_values().contains("n=2\n"));
    }

    #[test]
    fn perfect_predictions_hit_upper_bounds() {
        let gold = [0, 1, 2, 2, 9];
        let r = MetricsReport::from_predictions(&gold, &gold, Task::Disagreement, F1Averaging::Weighted).unwrap();
        assert_eq!((r.f1, r.kappa, r.mse, r.accuracy), (1.0, Some(1.0), 0.0, 1.0));
    }
}
