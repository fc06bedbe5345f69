use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::eval::{CvReport, HoldoutReport};
use crate::gesture::GestureClass;

pub fn class_labels() -> Vec<String> {
    GestureClass::ALL.iter().map(|g| g.to_string()).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `folds.csv`, `history.csv`, `confusion_fold<k>.csv`,
/// `confusion.csv` (all folds pooled) and `summary.json` into `dir`.
pub fn write_cv_report(dir: impl AsRef<Path>, report: &CvReport) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let labels = class_labels();
    let mut folds = String::from("fold,validation_subject,accuracy,final_accuracy,train_samples\n");
    let mut history = String::from("fold,epoch,train_loss,train_accuracy,validation_loss,validation_accuracy\n");
    let mut pooled = crate::eval::ConfusionMatrix::new(labels.len());
    for f in &report.folds {
        folds.push_str(&format!(
            "{},{},{},{},{}\n",
            f.plan.fold_index, f.plan.validation_subject, f.accuracy, f.final_accuracy, f.train_samples
        ));
        for r in &f.history {
            history.push_str(&format!(
                "{},{},{},{},{},{}\n",
                f.plan.fold_index,
                r.epoch,
                r.train_loss,
                r.train_accuracy,
                opt(r.validation_loss),
                opt(r.validation_accuracy)
            ));
        }
        fs::write(dir.join(format!("confusion_fold{}.csv", f.plan.fold_index)), f.confusion.to_csv(&labels))?;
        pooled.add(&f.confusion)?;
    }
    fs::write(dir.join("folds.csv"), folds)?;
    fs::write(dir.join("history.csv"), history)?;
    fs::write(dir.join("confusion.csv"), pooled.to_csv(&labels))?;
    let summary = serde_json::json!({
        "variant": report.variant,
        "mean_accuracy": report.mean_accuracy,
        "fold_accuracies": report.folds.iter().map(|f| f.accuracy).collect::<Vec<_>>(),
        "mean_train_per_class": report.mean_train_per_class,
    });
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

/// Writes `confusion.csv`, `pairs.csv` and `metrics.json` into `dir`.
pub fn write_holdout_report(dir: impl AsRef<Path>, report: &HoldoutReport) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("confusion.csv"), report.confusion.to_csv(&class_labels()))?;
    let mut pairs = String::from("model,subject,accuracy\n");
    for p in &report.pairs {
        pairs.push_str(&format!("{},{},{}\n", p.model_index, p.subject, p.accuracy));
    }
    fs::write(dir.join("pairs.csv"), pairs)?;
    let metrics = serde_json::json!({
        "metrics": report.metrics,
        "mean_pair_accuracy": report.mean_pair_accuracy,
    });
    fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
    Ok(())
}
