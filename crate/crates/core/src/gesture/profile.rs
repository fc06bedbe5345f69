use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::path::GesturePath;
use crate::mesh::{TimedTouch, TouchPoint};
use crate::seed;

/// Ranges, in seconds, for the touch-free lead-in and the stroke itself.
/// Whatever remains of the capture window is the touch-free tail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub onset: (f64, f64),
    pub gesture: (f64, f64),
}

impl Default for PhaseTiming {
    fn default() -> Self {
        PhaseTiming {
            onset: (0.1, 0.2),
            gesture: (0.5, 0.7),
        }
    }
}

/// How one (synthetic) person draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub id: String,
    pub seed: u64,
    /// Per-trial glyph scale is drawn from `1 +- scale_jitter`.
    pub scale_jitter: f64,
    /// Per-trial shift of the glyph, as a fraction of the pad.
    pub offset_jitter: f64,
    /// Progress warp exponent: `> 1` starts slow, `< 1` starts fast.
    pub speed_profile: f64,
    pub rotation_jitter: f64,
    pub c_t_mean: f64,
    /// Relative amplitude of the pressure oscillation during the stroke.
    pub c_t_wobble: f64,
    /// Standard deviation of positional noise, as a fraction of the pad.
    pub tremor_noise: f64,
    /// Relative standard deviation of multiplicative noise on each gain.
    pub gain_noise: f64,
    pub timing: PhaseTiming,
}

fn symmetric<R: Rng>(rng: &mut R, half_width: f64) -> f64 {
    if half_width > 0.0 {
        rng.random_range(-half_width..=half_width)
    } else {
        0.0
    }
}

fn in_range<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

impl SubjectProfile {
    /// A subject who traces every glyph exactly, at constant speed and
    /// pressure, with a noiseless instrument.
    pub fn identity(id: impl Into<String>, seed: u64) -> Self {
        SubjectProfile {
            id: id.into(),
            seed,
            scale_jitter: 0.0,
            offset_jitter: 0.0,
            speed_profile: 1.0,
            rotation_jitter: 0.0,
            c_t_mean: 60e-12,
            c_t_wobble: 0.0,
            tremor_noise: 0.0,
            gain_noise: 0.0,
            timing: PhaseTiming::default(),
        }
    }

    /// A subject with idiosyncrasies drawn from `seed`.
    pub fn synthetic(id: impl Into<String>, seed: u64) -> Self {
        let mut rng = seed::rng(seed::derive(seed, &[seed::tag("profile")]));
        SubjectProfile {
            id: id.into(),
            seed,
            scale_jitter: rng.random_range(0.05..0.15),
            offset_jitter: rng.random_range(0.02..0.06),
            speed_profile: rng.random_range(0.8..1.25),
            rotation_jitter: rng.random_range(0.05..0.15),
            c_t_mean: rng.random_range(45e-12..75e-12),
            c_t_wobble: 0.2,
            tremor_noise: rng.random_range(0.002..0.006),
            gain_noise: rng.random_range(1e-3..2e-3),
            timing: PhaseTiming::default(),
        }
    }

    /// `count` synthetic subjects named `{prefix}{i}`.
    pub fn cohort(prefix: &str, count: usize, base_seed: u64) -> Vec<Self> {
        (0..count)
            .map(|i| {
                let id = format!("{prefix}{i}");
                let s = seed::derive(base_seed, &[seed::tag(&id)]);
                Self::synthetic(id, s)
            })
            .collect()
    }

    /// Same subject with the seed of one specific trial.
    pub fn for_trial(&self, tags: &[u64]) -> Self {
        SubjectProfile {
            seed: seed::derive(self.seed, tags),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let jitters = [
            self.scale_jitter,
            self.offset_jitter,
            self.rotation_jitter,
            self.c_t_wobble,
            self.tremor_noise,
            self.gain_noise,
        ];
        if jitters.iter().any(|j| !(j.is_finite() && *j >= 0.0)) {
            return Err(crate::Error::invalid(format!(
                "subject {}: jitters must be finite and >= 0",
                self.id
            )));
        }
        if !(self.c_t_mean > 0.0 && self.c_t_mean.is_finite()) {
            return Err(crate::Error::invalid(format!("subject {}: c_t_mean must be > 0", self.id)));
        }
        if !(self.speed_profile > 0.0 && self.speed_profile.is_finite()) {
            return Err(crate::Error::invalid(format!(
                "subject {}: speed_profile must be > 0",
                self.id
            )));
        }
        Ok(())
    }
}

/// One touch sample per frame midpoint: absent during the lead-in and tail,
/// tracing the (jittered, warped) path in between.
pub fn sample_trajectory(
    path: &GesturePath,
    profile: &SubjectProfile,
    duration: f64,
    frame_rate: f64,
) -> Vec<TimedTouch> {
    let mut rng = seed::rng(profile.seed);
    let onset = in_range(&mut rng, profile.timing.onset).min(duration);
    let stroke = in_range(&mut rng, profile.timing.gesture).min(duration - onset);
    let scale = 1.0 + symmetric(&mut rng, profile.scale_jitter);
    let (sin, cos) = symmetric(&mut rng, profile.rotation_jitter).sin_cos();
    let shift = (
        symmetric(&mut rng, profile.offset_jitter),
        symmetric(&mut rng, profile.offset_jitter),
    );
    let wobble_freq = rng.random_range(1.5..3.0);
    let wobble_phase = rng.random_range(0.0..TAU);
    let tremor = Normal::new(0.0, profile.tremor_noise).unwrap_or(Normal::new(0.0, 0.0).unwrap());

    let frames = (duration * frame_rate).round() as usize;
    let mut out = Vec::with_capacity(frames);
    for k in 0..frames {
        let t = (k as f64 + 0.5) / frame_rate;
        if t < onset || t >= onset + stroke {
            out.push(TimedTouch { t, touch: TouchPoint::absent() });
            continue;
        }
        let progress = ((t - onset) / stroke).powf(profile.speed_profile);
        let (u, v) = path.point_at(progress);
        let (du, dv) = (scale * (u - 0.5), scale * (v - 0.5));
        let mut u = 0.5 + cos * du - sin * dv + shift.0;
        let mut v = 0.5 + sin * du + cos * dv + shift.1;
        if profile.tremor_noise > 0.0 {
            u += tremor.sample(&mut rng);
            v += tremor.sample(&mut rng);
        }
        let c_t = profile.c_t_mean
            * (1.0 + profile.c_t_wobble * (PI * 2.0 * wobble_freq * (t - onset) + wobble_phase).sin());
        out.push(TimedTouch {
            t,
            touch: TouchPoint::new(u.clamp(0.0, 1.0), v.clamp(0.0, 1.0), c_t.max(0.0)),
        });
    }
    out
}
