use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};

use super::{path_for_class, sample_trajectory, Condition, GestureClass, LabeledSample, SubjectProfile};
use crate::error::{Error, Result};
use crate::mesh::{GainModel, MeshConfig, TimedTouch, TouchPoint};
use crate::seed;
use crate::signal::GainSeries;

pub const MANIFEST_HEADER: [&str; 6] = ["path", "baseline", "subject", "class", "condition", "seed"];

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetOptions {
    pub duration: f64,
    pub frame_rate: f64,
    /// Standard deviation of the additive per-channel level shift shared by
    /// every capture of one sitting (one subject drawing one class).
    pub sitting_drift: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            duration: 1.0,
            frame_rate: 250.0,
            sitting_drift: 2e-3,
        }
    }
}

pub fn synth_dataset(
    config: &MeshConfig,
    subjects: &[SubjectProfile],
    trials_per_class: usize,
) -> Result<Vec<LabeledSample>> {
    synth_dataset_with(config, subjects, trials_per_class, &DatasetOptions::default())
}

/// Simulates `trials_per_class` captures of every class for every subject.
/// Each subject/class sitting gets one touch-free baseline capture.
pub fn synth_dataset_with(
    config: &MeshConfig,
    subjects: &[SubjectProfile],
    trials_per_class: usize,
    options: &DatasetOptions,
) -> Result<Vec<LabeledSample>> {
    if trials_per_class == 0 {
        return Err(Error::invalid("trials_per_class must be >= 1"));
    }
    for s in subjects {
        s.validate()?;
    }
    let model = GainModel::new(config)?;
    let condition = Condition::of(config);
    let idle = [TimedTouch { t: 0.0, touch: TouchPoint::absent() }];
    let clean_baseline = model.simulate(&idle, options.frame_rate, options.duration)?;
    let mut out = Vec::with_capacity(subjects.len() * GestureClass::ALL.len() * trials_per_class);
    for subject in subjects {
        for class in GestureClass::ALL {
            let path = path_for_class(class);
            let sitting = seed::derive(subject.seed, &[seed::tag("sitting"), class.index() as u64]);
            let mut rng = seed::rng(sitting);
            let drift_dist = Normal::new(0.0, options.sitting_drift)
                .map_err(|e| Error::invalid(format!("sitting drift: {e}")))?;
            let drift: [f64; 4] = std::array::from_fn(|_| drift_dist.sample(&mut rng));
            let baseline = measure(&clean_baseline, drift, subject.gain_noise, sitting)?;
            for trial in 0..trials_per_class {
                let profile = subject.for_trial(&[class.index() as u64, trial as u64]);
                let traj = sample_trajectory(&path, &profile, options.duration, options.frame_rate);
                let clean = model.simulate(&traj, options.frame_rate, options.duration)?;
                out.push(LabeledSample {
                    series: measure(&clean, drift, subject.gain_noise, profile.seed)?,
                    baseline: baseline.clone(),
                    class,
                    subject: subject.id.clone(),
                    condition,
                    seed: profile.seed,
                });
            }
        }
    }
    Ok(out)
}

/// Instrument model: multiplicative noise on each gain plus the sitting's
/// level shift.
fn measure(clean: &GainSeries, drift: [f64; 4], noise: f64, seed_value: u64) -> Result<GainSeries> {
    let mut rng = seed::rng(seed::derive(seed_value, &[seed::tag("instrument")]));
    let dist = Normal::new(0.0, noise).map_err(|e| Error::invalid(format!("gain noise: {e}")))?;
    let frames = clean
        .frames()
        .iter()
        .map(|f| std::array::from_fn(|k| f[k] * (1.0 + dist.sample(&mut rng)) + drift[k]))
        .collect();
    GainSeries::new(frames, clean.frame_rate())
}

/// Writes every sample and baseline as gain CSV plus a `manifest.csv`
/// indexing them. Baselines shared within a sitting are written once.
pub fn write_dataset(dir: impl AsRef<Path>, samples: &[LabeledSample]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("samples"))?;
    std::fs::create_dir_all(dir.join("baselines"))?;
    let manifest_path = dir.join("manifest.csv");
    let mut wtr = csv::Writer::from_path(&manifest_path)?;
    wtr.write_record(MANIFEST_HEADER)?;
    let mut written: HashMap<(String, usize, &'static str), (String, GainSeries)> = HashMap::new();
    for (i, s) in samples.iter().enumerate() {
        let sample_rel = format!("samples/{:05}_{}_c{:02}.csv", i, s.subject, s.class.index());
        s.series.write_csv(dir.join(&sample_rel))?;
        let key = (s.subject.clone(), s.class.index(), s.condition.as_str());
        let baseline_rel = match written.get(&key) {
            Some((rel, b)) if *b == s.baseline => rel.clone(),
            _ => {
                let rel = format!(
                    "baselines/{}_{}_c{:02}_{:05}.csv",
                    s.condition.as_str(),
                    s.subject,
                    s.class.index(),
                    i
                );
                s.baseline.write_csv(dir.join(&rel))?;
                written.insert(key, (rel.clone(), s.baseline.clone()));
                rel
            }
        };
        wtr.write_record([
            sample_rel.as_str(),
            baseline_rel.as_str(),
            s.subject.as_str(),
            &s.class.to_string(),
            s.condition.as_str(),
            &s.seed.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(manifest_path)
}

/// Loads every sample listed in a manifest; paths are relative to it.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<LabeledSample>> {
    let path = path.as_ref();
    let root = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(Error::parse(format!(
            "manifest header must be `{}`",
            MANIFEST_HEADER.join(",")
        )));
    }
    let mut cache: HashMap<String, GainSeries> = HashMap::new();
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let class = GestureClass::parse(field(3))
            .ok_or_else(|| Error::parse(format!("row {}: bad class `{}`", row + 1, field(3))))?;
        let condition = Condition::parse(field(4))
            .ok_or_else(|| Error::parse(format!("row {}: bad condition `{}`", row + 1, field(4))))?;
        let seed = field(5)
            .parse()
            .map_err(|_| Error::parse(format!("row {}: bad seed `{}`", row + 1, field(5))))?;
        let baseline = match cache.get(field(1)) {
            Some(b) => b.clone(),
            None => {
                let b = GainSeries::read_csv(root.join(field(1)))?;
                cache.insert(field(1).to_owned(), b.clone());
                b
            }
        };
        out.push(LabeledSample {
            series: GainSeries::read_csv(root.join(field(0)))?,
            baseline,
            class,
            subject: field(2).to_owned(),
            condition,
            seed,
        });
    }
    Ok(out)
}
