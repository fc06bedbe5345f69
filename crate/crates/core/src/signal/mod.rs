//! From raw captures to model inputs: Bode gain extraction, baseline
//! removal and wavelet denoising.

mod series;
pub mod wavelet;
mod window;

pub use series::{GainSeries, CSV_HEADER};
pub use wavelet::FilterSpec;
pub use window::{synthesize_window, window_gain, RawWindow};

use crate::error::{Error, Result};
use crate::gesture::LabeledSample;

/// Subtracts the per-channel mean of `baseline` from every frame of `series`.
/// Both must have the same number of frames.
pub fn subtract_baseline(series: &GainSeries, baseline: &GainSeries) -> Result<GainSeries> {
    if series.len() != baseline.len() {
        return Err(Error::invalid(format!(
            "series has {} frames but baseline has {}",
            series.len(),
            baseline.len()
        )));
    }
    subtract_means(series, baseline.channel_means())
}

/// Subtracts a fixed per-channel level from every frame.
pub fn subtract_means(series: &GainSeries, means: [f64; 4]) -> Result<GainSeries> {
    let frames = series
        .frames()
        .iter()
        .map(|f| std::array::from_fn(|k| f[k] - means[k]))
        .collect();
    GainSeries::new(frames, series.frame_rate())
}

/// Per-channel wavelet denoising; the output keeps the input length.
pub fn wavelet_filter(series: &GainSeries, spec: &FilterSpec) -> Result<GainSeries> {
    spec.validate(series.len())?;
    let mut channels = series.channels();
    for ch in channels.iter_mut() {
        *ch = wavelet::denoise(ch, spec)?;
    }
    GainSeries::from_channels(&channels, series.frame_rate())
}

/// Baseline subtraction followed by wavelet filtering.
pub fn preprocess_series(
    series: &GainSeries,
    baseline: &GainSeries,
    spec: &FilterSpec,
) -> Result<GainSeries> {
    wavelet_filter(&subtract_baseline(series, baseline)?, spec)
}

pub fn preprocess(sample: &LabeledSample, spec: &FilterSpec) -> Result<GainSeries> {
    preprocess_series(&sample.series, &sample.baseline, spec)
}
