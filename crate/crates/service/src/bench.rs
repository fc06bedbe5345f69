use std::path::Path;
use std::time::Instant;

use knitpad::mesh::MeshConfig;
use knitpad::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::classify::{ClassifyRequest, Classifier};

/// Fewest steady-state trials a benchmark accepts.
pub const MIN_TRIALS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// Steady-state trials, not counting the first.
    pub trials: usize,
    /// Loading the model, building the classifier and one classification.
    pub first_trial: f64,
    pub steady_mean: f64,
    pub steady_p95: f64,
}

/// Times a cold start followed by `trials` classifications of the same
/// request. All figures are wall-clock seconds.
pub fn bench_latency(model: &Path, mesh: &MeshConfig, request: &ClassifyRequest, trials: usize) -> Result<BenchReport> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidInput(format!("benchmark needs at least {MIN_TRIALS} trials, got {trials}")));
    }
    let start = Instant::now();
    let classifier = Classifier::load(model, mesh)?;
    classifier.classify(request)?;
    let first_trial = start.elapsed().as_secs_f64();
    let mut times = Vec::with_capacity(trials);
    for _ in 0..trials {
        let t = Instant::now();
        std::hint::black_box(classifier.classify(request)?);
        times.push(t.elapsed().as_secs_f64());
    }
    let (steady_mean, steady_p95) = summarize(&mut times);
    Ok(BenchReport { trials, first_trial, steady_mean, steady_p95 })
}

/// Mean and nearest-rank 95th percentile. Sorts `times`.
fn summarize(times: &mut [f64]) -> (f64, f64) {
    times.sort_by(f64::total_cmp);
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let rank = (0.95 * times.len() as f64).ceil() as usize;
    (mean, times[rank.max(1) - 1])
}
