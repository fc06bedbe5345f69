use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// One captured excitation window: the drive waveform and the four corner
/// responses sampled together.
#[derive(Clone, Debug, PartialEq)]
pub struct RawWindow {
    pub input_samples: Vec<f64>,
    pub output_samples: [Vec<f64>; 4],
    pub sample_rate: f64,
    pub drive_frequency: f64,
}

impl RawWindow {
    pub fn validate(&self) -> Result<()> {
        let n = self.input_samples.len();
        if n == 0 {
            return Err(Error::invalid("empty window"));
        }
        if self.output_samples.iter().any(|o| o.len() != n) {
            return Err(Error::invalid("channel lengths differ"));
        }
        if !(self.drive_frequency > 0.0 && self.sample_rate > 2.0 * self.drive_frequency) {
            return Err(Error::invalid(format!(
                "sample rate {} must exceed twice the drive frequency {}",
                self.sample_rate, self.drive_frequency
            )));
        }
        let all = self.input_samples.iter().chain(self.output_samples.iter().flatten());
        if all.clone().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite sample"));
        }
        Ok(())
    }

    /// DFT bin closest to the drive frequency.
    pub fn drive_bin(&self) -> usize {
        let n = self.input_samples.len();
        (self.drive_frequency * n as f64 / self.sample_rate).round() as usize
    }
}

/// Magnitude of the `bin`-th DFT coefficient.
fn bin_magnitude(x: &[f64], bin: usize) -> f64 {
    let n = x.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (i, xi) in x.iter().enumerate() {
        let phase = TAU * bin as f64 * i as f64 / n;
        re += xi * phase.cos();
        im -= xi * phase.sin();
    }
    re.hypot(im)
}

/// Per-corner gain `|Out_k| / |In|` at the drive bin.
pub fn window_gain(window: &RawWindow) -> Result<[f64; 4]> {
    window.validate()?;
    let bin = window.drive_bin();
    let input = bin_magnitude(&window.input_samples, bin);
    let scale = window
        .input_samples
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        * window.input_samples.len() as f64;
    if !(input > 1e-12 * scale) || input == 0.0 {
        return Err(Error::numeric(format!(
            "input has no energy at drive bin {bin}"
        )));
    }
    let mut gains = [0.0; 4];
    for (g, out) in gains.iter_mut().zip(&window.output_samples) {
        *g = bin_magnitude(out, bin) / input;
    }
    Ok(gains)
}

/// Synthesizes a window of sine responses with the given gains and phase
/// lags, plus white Gaussian noise of standard deviation `noise_std` on every
/// channel.
pub fn synthesize_window<R: Rng + ?Sized>(
    gains: [f64; 4],
    phases: [f64; 4],
    samples: usize,
    sample_rate: f64,
    drive_frequency: f64,
    amplitude: f64,
    noise_std: f64,
    rng: &mut R,
) -> Result<RawWindow> {
    let noise = Normal::new(0.0, noise_std.max(0.0))
        .map_err(|e| Error::invalid(format!("noise level: {e}")))?;
    let mut sample = |amp: f64, phase: f64, i: usize| {
        let t = i as f64 / sample_rate;
        let clean = amp * (TAU * drive_frequency * t - phase).sin();
        if noise_std > 0.0 {
            clean + noise.sample(rng)
        } else {
            clean
        }
    };
    let input_samples = (0..samples).map(|i| sample(amplitude, 0.0, i)).collect();
    let output_samples = std::array::from_fn(|k| {
        (0..samples)
            .map(|i| sample(amplitude * gains[k], phases[k], i))
            .collect()
    });
    let window = RawWindow {
        input_samples,
        output_samples,
        sample_rate,
        drive_frequency,
    };
    window.validate()?;
    Ok(window)
}
