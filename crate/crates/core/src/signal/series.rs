use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// CSV header of every gain and baseline file.
pub const CSV_HEADER: &str = "t,gain_A,gain_B,gain_C,gain_D";

/// Frames of corner gains in channel order A, B, C, D.
#[derive(Clone, Debug, PartialEq)]
pub struct GainSeries {
    frames: Vec<[f64; 4]>,
    frame_rate: f64,
}

impl GainSeries {
    pub fn new(frames: Vec<[f64; 4]>, frame_rate: f64) -> Result<Self> {
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::invalid(format!("frame rate must be > 0, got {frame_rate}")));
        }
        if frames.is_empty() {
            return Err(Error::invalid("gain series has no frames"));
        }
        if let Some(k) = frames.iter().position(|f| f.iter().any(|g| !g.is_finite())) {
            return Err(Error::invalid(format!("non-finite gain in frame {k}")));
        }
        Ok(GainSeries { frames, frame_rate })
    }

    /// Series from four equal-length channels.
    pub fn from_channels(channels: &[Vec<f64>; 4], frame_rate: f64) -> Result<Self> {
        let n = channels[0].len();
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("channels differ in length"));
        }
        let frames = (0..n)
            .map(|i| [channels[0][i], channels[1][i], channels[2][i], channels[3][i]])
            .collect();
        Self::new(frames, frame_rate)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[[f64; 4]] {
        &self.frames
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    /// Frame midpoint times in seconds.
    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| (k as f64 + 0.5) / self.frame_rate)
    }

    pub fn channel(&self, k: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f[k]).collect()
    }

    pub fn channels(&self) -> [Vec<f64>; 4] {
        std::array::from_fn(|k| self.channel(k))
    }

    pub fn channel_means(&self) -> [f64; 4] {
        let n = self.len() as f64;
        let mut m = [0.0; 4];
        for f in &self.frames {
            for k in 0..4 {
                m[k] += f[k];
            }
        }
        m.map(|s| s / n)
    }

    /// Sum of squares over all entries.
    pub fn energy(&self) -> f64 {
        self.frames.iter().flatten().map(|x| x * x).sum()
    }

    /// Row-major `len x 4` copy, the model's input layout.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.frames.iter().flatten().copied().collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.len() * 96);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for (t, f) in self.timestamps().zip(&self.frames) {
            writeln!(out, "{},{},{},{},{}", t, f[0], f[1], f[2], f[3]).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// Parses the gain CSV format. The frame rate is recovered from the
    /// timestamp spacing.
    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_owned()).collect();
        if header.join(",") != CSV_HEADER {
            return Err(Error::parse(format!(
                "expected header `{CSV_HEADER}`, found `{}`",
                header.join(",")
            )));
        }
        let mut times = Vec::new();
        let mut frames = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(Error::parse(format!("row {}: expected 5 fields", line + 1)));
            }
            let mut vals = [0.0; 5];
            for (v, field) in vals.iter_mut().zip(rec.iter()) {
                *v = field.trim().parse().map_err(|_| {
                    Error::parse(format!("row {}: bad number `{field}`", line + 1))
                })?;
            }
            times.push(vals[0]);
            frames.push([vals[1], vals[2], vals[3], vals[4]]);
        }
        let frame_rate = infer_frame_rate(&times)?;
        Self::new(frames, frame_rate)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        Self::from_csv_reader(text.as_bytes())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }
}

fn infer_frame_rate(times: &[f64]) -> Result<f64> {
    let rate = match times {
        [] => return Err(Error::parse("gain CSV has no rows")),
        [t] => 0.5 / t,
        [first, .., last] => (times.len() - 1) as f64 / (last - first),
    };
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::parse("timestamps must increase"));
    }
    // Timestamps are printed rounded; snap to the nearest integer rate when
    // the difference is only formatting noise.
    let rounded = rate.round();
    Ok(if (rate - rounded).abs() < 1e-6 * rate { rounded } else { rate })
}
