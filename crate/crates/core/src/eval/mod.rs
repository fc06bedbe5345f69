//! Training and evaluation protocol: per-subject oversampling,
//! leave-one-subject-out cross-validation, held-out evaluation against every
//! fold model, metrics and reports.

mod metrics;
mod report;

pub use metrics::{compute_metrics, per_class, ConfusionMatrix, Metrics};
pub use report::{class_labels, write_cv_report, write_holdout_report};

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gesture::{Condition, GestureClass, LabeledSample, NUM_CLASSES};
use crate::nn::{predict, train_with, EpochRecord, Examples, ModelParams, ModelSpec, TrainConfig, Variant};
use crate::seed;
use crate::signal::{preprocess, FilterSpec};

/// Subjects in a cross-validation cohort.
pub const LOSO_FOLDS: usize = 5;

/// Epochs averaged into a fold's reported accuracy.
pub const DEFAULT_AVERAGE_LAST: usize = 50;

/// A preprocessed sample ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub subject: String,
    pub class: GestureClass,
    pub condition: Condition,
    /// Row-major `[frames, 4]`.
    pub input: Vec<f32>,
}

impl Prepared {
    pub fn frames(&self) -> usize {
        self.input.len() / 4
    }
}

pub fn prepare(samples: &[LabeledSample], filter: &FilterSpec) -> Result<Vec<Prepared>> {
    samples
        .iter()
        .map(|s| {
            let series = preprocess(s, filter)?;
            Ok(Prepared {
                subject: s.subject.clone(),
                class: s.class,
                condition: s.condition,
                input: series.to_row_major().into_iter().map(|v| v as f32).collect(),
            })
        })
        .collect()
}

/// Stacks samples into network examples. All must share one length.
pub fn examples<'a>(samples: impl IntoIterator<Item = &'a Prepared>) -> Result<Examples<f32>> {
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    let mut frames = None;
    for s in samples {
        if *frames.get_or_insert(s.frames()) != s.frames() {
            return Err(Error::invalid("samples differ in length"));
        }
        inputs.extend_from_slice(&s.input);
        labels.push(s.class.index());
    }
    Examples::new(inputs, labels, frames.unwrap_or(0), 4)
}

/// Distinct subjects in order of first appearance.
pub fn subjects_of(samples: &[Prepared]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in samples {
        if !out.contains(&s.subject) {
            out.push(s.subject.clone());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold_index: usize,
    pub train_subjects: Vec<String>,
    pub validation_subject: String,
}

/// One fold per subject, in the given order, each holding that subject out.
pub fn loso_plan(subjects: &[String]) -> Result<Vec<FoldPlan>> {
    if subjects.len() < 2 {
        return Err(Error::invalid("cross-validation needs at least two subjects"));
    }
    for (i, s) in subjects.iter().enumerate() {
        if subjects[..i].contains(s) {
            return Err(Error::invalid(format!("subject {s} listed twice")));
        }
    }
    Ok(subjects
        .iter()
        .enumerate()
        .map(|(i, v)| FoldPlan {
            fold_index: i,
            train_subjects: subjects.iter().filter(|s| *s != v).cloned().collect(),
            validation_subject: v.clone(),
        })
        .collect())
}

/// Indices that balance every subject's classes: all originals, then for
/// each minority class enough draws with replacement from that class to
/// reach the subject's largest class count.
pub fn oversample_indices(subjects: &[&str], classes: &[usize], num_classes: usize, seed_value: u64) -> Result<Vec<usize>> {
    if subjects.is_empty() || subjects.len() != classes.len() {
        return Err(Error::invalid("oversampling needs one class per sample and at least one sample"));
    }
    let mut groups: BTreeMap<&str, Vec<Vec<usize>>> = BTreeMap::new();
    for (i, (&s, &c)) in subjects.iter().zip(classes).enumerate() {
        if c >= num_classes {
            return Err(Error::invalid(format!("class {c} outside 0..{num_classes}")));
        }
        groups.entry(s).or_insert_with(|| vec![Vec::new(); num_classes])[c].push(i);
    }
    let mut out: Vec<usize> = (0..subjects.len()).collect();
    for (subject, by_class) in &groups {
        if let Some(missing) = by_class.iter().position(|v| v.is_empty()) {
            return Err(Error::invalid(format!("subject {subject} has no samples of class {missing}")));
        }
        let target = by_class.iter().map(Vec::len).max().unwrap();
        let mut rng = seed::rng(seed::derive(seed_value, &[seed::tag(subject)]));
        for members in by_class {
            for _ in members.len()..target {
                out.push(members[rng.random_range(0..members.len())]);
            }
        }
    }
    Ok(out)
}

pub fn oversample_balance(samples: &[Prepared], seed_value: u64) -> Result<Vec<Prepared>> {
    let subjects: Vec<&str> = samples.iter().map(|s| s.subject.as_str()).collect();
    let classes: Vec<usize> = samples.iter().map(|s| s.class.index()).collect();
    Ok(oversample_indices(&subjects, &classes, NUM_CLASSES, seed_value)?
        .into_iter()
        .map(|i| samples[i].clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub average_last: usize,
    pub seed: u64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self { average_last: DEFAULT_AVERAGE_LAST, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub plan: FoldPlan,
    /// Mean validation accuracy over the trailing epochs.
    pub accuracy: f64,
    pub final_accuracy: f64,
    pub train_samples: usize,
    /// Final model on the held-out subject.
    pub confusion: ConfusionMatrix,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub variant: Variant,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    /// Mean training samples per class per fold after oversampling.
    pub mean_train_per_class: f64,
}

/// Leave-one-subject-out cross-validation over exactly [`LOSO_FOLDS`]
/// subjects. Returns the report and the fold models in fold order.
pub fn run_loso_cv(
    data: &[Prepared],
    spec: &ModelSpec,
    config: &TrainConfig,
    options: &CvOptions,
    mut on_epoch: impl FnMut(usize, &EpochRecord),
) -> Result<(CvReport, Vec<ModelParams<f32>>)> {
    let subjects = subjects_of(data);
    if subjects.len() != LOSO_FOLDS {
        return Err(Error::invalid(format!("cross-validation needs {LOSO_FOLDS} subjects, got {}", subjects.len())));
    }
    let mut folds = Vec::new();
    let mut models = Vec::new();
    for plan in loso_plan(&subjects)? {
        let train_raw: Vec<Prepared> = data.iter().filter(|s| s.subject != plan.validation_subject).cloned().collect();
        let train_set = oversample_balance(&train_raw, seed::derive(options.seed, &[plan.fold_index as u64]))?;
        let validation: Vec<&Prepared> = data.iter().filter(|s| s.subject == plan.validation_subject).collect();
        let train_ex = examples(&train_set)?;
        let val_ex = examples(validation.iter().copied())?;
        let fold_config = TrainConfig { seed: seed::derive(config.seed, &[plan.fold_index as u64]), ..config.clone() };
        let outcome = train_with(&train_ex, Some(&val_ex), spec, &fold_config, |r| on_epoch(plan.fold_index, r))?;
        let predicted = predict(&outcome.params, &val_ex)?;
        let confusion = ConfusionMatrix::from_predictions(spec.classes, &val_ex.labels, &predicted)?;
        folds.push(FoldResult {
            accuracy: outcome.trailing_validation_accuracy(options.average_last).unwrap_or(0.0),
            final_accuracy: confusion.trace() as f64 / confusion.total().max(1) as f64,
            train_samples: train_set.len(),
            confusion,
            history: outcome.history,
            plan,
        });
        models.push(outcome.params);
    }
    let mean_accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64;
    let mean_train_per_class = folds.iter().map(|f| f.train_samples as f64).sum::<f64>() / (folds.len() * spec.classes) as f64;
    Ok((CvReport { variant: spec.variant, folds, mean_accuracy, mean_train_per_class }, models))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub model_index: usize,
    pub subject: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    /// Metrics of the pooled confusion matrix.
    pub metrics: Metrics,
    /// Unweighted mean over model x subject evaluations.
    pub mean_pair_accuracy: f64,
    pub pairs: Vec<PairResult>,
    pub confusion: ConfusionMatrix,
}

/// Scores every model on every held-out subject and pools the predictions.
pub fn evaluate_holdout(models: &[ModelParams<f32>], eval: &[Prepared], training_subjects: &[String]) -> Result<HoldoutReport> {
    if models.is_empty() || eval.is_empty() {
        return Err(Error::invalid("held-out evaluation needs models and samples"));
    }
    let subjects = subjects_of(eval);
    if let Some(s) = subjects.iter().find(|s| training_subjects.contains(s)) {
        return Err(Error::invalid(format!("subject {s} is in both the training and evaluation sets")));
    }
    let classes = models[0].spec.classes;
    let mut confusion = ConfusionMatrix::new(classes);
    let mut pairs = Vec::new();
    for (m, model) in models.iter().enumerate() {
        for subject in &subjects {
            let ex = examples(eval.iter().filter(|s| &s.subject == subject))?;
            let predicted = predict(model, &ex)?;
            let pair = ConfusionMatrix::from_predictions(classes, &ex.labels, &predicted)?;
            pairs.push(PairResult { model_index: m, subject: subject.clone(), accuracy: pair.trace() as f64 / pair.total() as f64 });
            confusion.add(&pair)?;
        }
    }
    let mean_pair_accuracy = pairs.iter().map(|p| p.accuracy).sum::<f64>() / pairs.len() as f64;
    Ok(HoldoutReport { metrics: compute_metrics(&confusion)?, mean_pair_accuracy, pairs, confusion })
}

/// Held-out evaluation restricted to worn captures.
pub fn evaluate_worn(models: &[ModelParams<f32>], worn: &[Prepared], training_subjects: &[String]) -> Result<HoldoutReport> {
    if let Some(s) = worn.iter().find(|s| s.condition != Condition::Worn) {
        return Err(Error::invalid(format!("sample from {} is not a worn capture", s.subject)));
    }
    evaluate_holdout(models, worn, training_subjects)
}
