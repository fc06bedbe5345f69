//! Single-sample classification shared by the CLI, the HTTP endpoint and
//! the stream sessions, so every entry point produces identical bits.

use std::path::Path;
use std::time::Instant;

use knitpad::gesture::GestureClass;
use knitpad::mesh::{GainModel, MeshConfig, TimedTouch, TouchPoint};
use knitpad::nn::{Mode, ModelParams, ModelSpec, Tensor};
use knitpad::signal::{subtract_baseline, subtract_means, wavelet_filter, FilterSpec, GainSeries};
use knitpad::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const FRAME_RATE: f64 = 250.0;
pub const CAPTURE_SECONDS: f64 = 1.0;
/// Touch capacitance used when a request does not give one.
pub const DEFAULT_TOUCH_CAP: f64 = 60e-12;
/// Touch-free time placed before a drawn stroke inside the capture window.
pub const STROKE_LEAD_IN: f64 = 0.15;
/// Strokes are time-scaled into this range of durations, in seconds.
pub const STROKE_SECONDS: (f64, f64) = (0.5, 0.7);

/// One pointer sample. `t` is in milliseconds; `u`, `v` are normalized pad
/// coordinates and are clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointerEvent {
    pub t: f64,
    pub u: f64,
    pub v: f64,
    pub down: bool,
}

/// Either a recorded gain matrix (with an optional touch-free capture) or a
/// pointer trajectory to be rendered through the mesh simulator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<[f64; 4]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Vec<[f64; 4]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<PointerEvent>>,
    /// Use the worn pad for trajectory synthesis and the default baseline.
    #[serde(default)]
    pub worn: bool,
    /// Touch capacitance in farads for trajectory synthesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub touch_cap: Option<f64>,
}

impl ClassifyRequest {
    pub fn from_gains(series: &GainSeries, baseline: Option<&GainSeries>) -> Self {
        ClassifyRequest {
            gains: Some(series.frames().to_vec()),
            baseline: baseline.map(|b| b.frames().to_vec()),
            ..Default::default()
        }
    }

    pub fn from_trajectory(events: Vec<PointerEvent>) -> Self {
        ClassifyRequest { trajectory: Some(events), ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub preprocess: f64,
    pub inference: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub predicted: GestureClass,
    pub log_probs: Vec<f64>,
    /// Seconds.
    pub latency: Latency,
}

/// A loaded model plus the benchtop and worn pads used to synthesize
/// trajectories and default baselines. Immutable once built.
pub struct Classifier {
    params: ModelParams<f32>,
    filter: FilterSpec,
    benchtop: GainModel,
    worn: GainModel,
    version: String,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

/// Short content hash identifying a model file.
pub fn model_version(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..6].iter().map(|b| format!("{b:02x}")).collect()
}

impl Classifier {
    pub fn new(params: ModelParams<f32>, mesh: &MeshConfig, version: impl Into<String>) -> Result<Self> {
        params.spec.validate()?;
        if params.spec.input_channels != 4 {
            return Err(invalid(format!("model expects {} channels, the pad has 4", params.spec.input_channels)));
        }
        Ok(Classifier {
            filter: FilterSpec::default(),
            benchtop: GainModel::new(mesh)?,
            worn: GainModel::new(&mesh.worn())?,
            version: version.into(),
            params,
        })
    }

    pub fn load(path: impl AsRef<Path>, mesh: &MeshConfig) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let params = ModelParams::from_bytes(&bytes)?;
        Self::new(params, mesh, model_version(&bytes))
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.params.spec
    }

    pub fn params(&self) -> &ModelParams<f32> {
        &self.params
    }

    pub fn filter(&self) -> &FilterSpec {
        &self.filter
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn gain_model(&self, worn: bool) -> &GainModel {
        if worn {
            &self.worn
        } else {
            &self.benchtop
        }
    }

    pub fn classify(&self, request: &ClassifyRequest) -> Result<ClassifyResponse> {
        let start = Instant::now();
        let (series, baseline) = self.resolve(request)?;
        self.finish(start, &series, baseline.as_ref(), request.worn)
    }

    /// Classifies a recorded capture. Without a baseline the touch-free
    /// gains of the simulated pad are subtracted instead.
    pub fn classify_series(&self, series: &GainSeries, baseline: Option<&GainSeries>, worn: bool) -> Result<ClassifyResponse> {
        self.finish(Instant::now(), series, baseline, worn)
    }

    /// Renders a single stroke through the simulator, then classifies it.
    /// Also returns the synthesized capture.
    pub fn classify_stroke(&self, events: &[PointerEvent], touch_cap: f64, worn: bool) -> Result<(ClassifyResponse, GainSeries)> {
        let start = Instant::now();
        let series = self.synthesize(events, touch_cap, worn)?;
        let response = self.finish(start, &series, None, worn)?;
        Ok((response, series))
    }

    pub fn synthesize(&self, events: &[PointerEvent], touch_cap: f64, worn: bool) -> Result<GainSeries> {
        synthesize_stroke(self.gain_model(worn), events, touch_cap)
    }

    fn resolve(&self, request: &ClassifyRequest) -> Result<(GainSeries, Option<GainSeries>)> {
        match (&request.gains, &request.trajectory) {
            (Some(gains), None) => {
                let series = GainSeries::new(gains.clone(), FRAME_RATE)?;
                let baseline = request.baseline.as_ref().map(|b| GainSeries::new(b.clone(), FRAME_RATE)).transpose()?;
                Ok((series, baseline))
            }
            (None, Some(events)) => {
                if request.baseline.is_some() {
                    return Err(invalid("a baseline only applies to a gain matrix"));
                }
                let cap = request.touch_cap.unwrap_or(DEFAULT_TOUCH_CAP);
                Ok((self.synthesize(events, cap, request.worn)?, None))
            }
            _ => Err(invalid("request must carry exactly one of `gains` or `trajectory`")),
        }
    }

    fn finish(&self, start: Instant, series: &GainSeries, baseline: Option<&GainSeries>, worn: bool) -> Result<ClassifyResponse> {
        let spec = &self.params.spec;
        if series.len() != spec.seq_len {
            return Err(invalid(format!("capture has {} frames, the model expects {}", series.len(), spec.seq_len)));
        }
        let centered = match baseline {
            Some(b) => subtract_baseline(series, b)?,
            None => subtract_means(series, self.gain_model(worn).no_touch_gains())?,
        };
        let filtered = wavelet_filter(&centered, &self.filter)?;
        let input: Vec<f32> = filtered.to_row_major().into_iter().map(|v| v as f32).collect();
        let input = Tensor::from_vec(&[1, spec.seq_len, 4], input)?;
        let preprocess = start.elapsed().as_secs_f64();
        let mark = Instant::now();
        let out = self.params.forward(&input, Mode::Eval)?;
        let inference = mark.elapsed().as_secs_f64();
        let log_probs: Vec<f64> = out.data().iter().map(|&v| v as f64).collect();
        let best = argmax(&log_probs);
        let predicted = GestureClass::from_index(best).ok_or_else(|| invalid(format!("model predicted class {best}")))?;
        Ok(ClassifyResponse {
            predicted,
            log_probs,
            latency: Latency { preprocess, inference, total: start.elapsed().as_secs_f64() },
        })
    }
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Renders one pointer stroke as a full capture on `model`'s pad.
pub fn synthesize_stroke(model: &GainModel, events: &[PointerEvent], touch_cap: f64) -> Result<GainSeries> {
    model.simulate(&stroke_touches(events, touch_cap)?, FRAME_RATE, CAPTURE_SECONDS)
}

/// Pointer events tracing a simulated trajectory: one event per sample,
/// down while the touch is present, then a final touch-up.
pub fn trajectory_events(trajectory: &[TimedTouch]) -> Vec<PointerEvent> {
    let mut out: Vec<PointerEvent> = trajectory
        .iter()
        .map(|s| PointerEvent { t: s.t * 1000.0, u: s.touch.u, v: s.touch.v, down: s.touch.present })
        .collect();
    if let Some(last) = out.last().copied().filter(|e| e.down) {
        out.push(PointerEvent { down: false, ..last });
    }
    out
}

/// Places one stroke inside the capture window: touch-free until the
/// lead-in, then the down samples with their timing scaled into
/// [`STROKE_SECONDS`], then touch-free again from the touch-up.
pub fn stroke_touches(events: &[PointerEvent], touch_cap: f64) -> Result<Vec<TimedTouch>> {
    if !(touch_cap.is_finite() && touch_cap > 0.0) {
        return Err(invalid(format!("touch capacitance must be positive, got {touch_cap}")));
    }
    if events.iter().any(|e| !(e.t.is_finite() && e.u.is_finite() && e.v.is_finite())) {
        return Err(invalid("pointer events must be finite"));
    }
    if events.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(invalid("pointer timestamps must be non-decreasing"));
    }
    let first = events.iter().position(|e| e.down).ok_or_else(|| invalid("trajectory has no touch-down"))?;
    let up = events[first..].iter().position(|e| !e.down).map(|k| first + k);
    if let Some(up) = up {
        if events[up..].iter().any(|e| e.down) {
            return Err(invalid("trajectory holds more than one stroke"));
        }
    }
    let stroke = &events[first..up.unwrap_or(events.len())];
    let t0 = stroke[0].t;
    let t_end = up.map_or(stroke[stroke.len() - 1].t, |k| events[k].t);
    let duration = (t_end - t0) / 1000.0;
    let scale = if duration > 0.0 { duration.clamp(STROKE_SECONDS.0, STROKE_SECONDS.1) / duration } else { 1.0 };
    let at = |t: f64| STROKE_LEAD_IN + (t - t0) / 1000.0 * scale;

    let mut out = Vec::with_capacity(stroke.len() + 2);
    out.push(TimedTouch { t: 0.0, touch: TouchPoint::absent() });
    for e in stroke {
        out.push(TimedTouch { t: at(e.t), touch: TouchPoint::new(e.u.clamp(0.0, 1.0), e.v.clamp(0.0, 1.0), touch_cap) });
    }
    out.push(TimedTouch { t: at(t_end).max(at(stroke[stroke.len() - 1].t)), touch: TouchPoint::absent() });
    Ok(out)
}
