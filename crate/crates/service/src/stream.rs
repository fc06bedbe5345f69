//! Per-connection state for the `/stream` endpoint.
//!
//! Clients send pointer events `{t, u, v, down}` (or a `{"config": ...}`
//! message) as JSON text. Every pointer event is answered with a `frame`
//! carrying the simulated corner gains at that instant. A touch-up that
//! ends a stroke is answered with one `prediction`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classify::{ClassifyResponse, Classifier, PointerEvent, DEFAULT_TOUCH_CAP};
use knitpad::mesh::TouchPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    #[serde(default)]
    pub worn: bool,
    /// Farads.
    #[serde(default = "default_cap")]
    pub touch_cap: f64,
}

fn default_cap() -> f64 {
    DEFAULT_TOUCH_CAP
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig { worn: false, touch_cap: DEFAULT_TOUCH_CAP }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ClientMessage {
    Config { config: SessionConfig },
    Pointer(PointerEvent),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Frame {
        t: f64,
        down: bool,
        gains: [f64; 4],
    },
    Prediction {
        #[serde(flatten)]
        response: ClassifyResponse,
        /// The synthesized 250-frame capture the prediction was made on.
        frames: Vec<[f64; 4]>,
    },
    Config {
        config: SessionConfig,
    },
    Error {
        message: String,
    },
}

pub struct StreamSession {
    classifier: Arc<Classifier>,
    config: SessionConfig,
    stroke: Vec<PointerEvent>,
    last_t: Option<f64>,
}

impl StreamSession {
    pub fn new(classifier: Arc<Classifier>) -> Self {
        StreamSession { classifier, config: SessionConfig::default(), stroke: Vec::new(), last_t: None }
    }

    pub fn config(&self) -> SessionConfig {
        self.config
    }

    pub fn drawing(&self) -> bool {
        !self.stroke.is_empty()
    }

    /// Handles one text message. Malformed input yields an `error` message
    /// and leaves the session as it was.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMessage> {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(ClientMessage::Config { config }) => self.configure(config),
            Ok(ClientMessage::Pointer(e)) => self.pointer(e),
            Err(e) => vec![error(format!("malformed message: {e}"))],
        }
    }

    pub fn configure(&mut self, config: SessionConfig) -> Vec<ServerMessage> {
        if !(config.touch_cap.is_finite() && config.touch_cap > 0.0) {
            return vec![error(format!("touch capacitance must be positive, got {}", config.touch_cap))];
        }
        if self.drawing() {
            return vec![error("configuration cannot change during a stroke")];
        }
        self.config = config;
        vec![ServerMessage::Config { config }]
    }

    pub fn pointer(&mut self, e: PointerEvent) -> Vec<ServerMessage> {
        if !(e.t.is_finite() && e.u.is_finite() && e.v.is_finite()) {
            return vec![error("pointer event must be finite")];
        }
        if self.last_t.is_some_and(|last| e.t < last) {
            return vec![error(format!("timestamp {} precedes {}", e.t, self.last_t.unwrap_or_default()))];
        }
        self.last_t = Some(e.t);
        let e = PointerEvent { u: e.u.clamp(0.0, 1.0), v: e.v.clamp(0.0, 1.0), ..e };
        let model = self.classifier.gain_model(self.config.worn);
        let touch = if e.down { TouchPoint::new(e.u, e.v, self.config.touch_cap) } else { TouchPoint::absent() };
        let gains = match model.gains(&touch) {
            Ok(g) => g,
            Err(err) => return vec![error(err.to_string())],
        };
        let mut out = vec![ServerMessage::Frame { t: e.t, down: e.down, gains }];
        if e.down {
            self.stroke.push(e);
        } else if self.drawing() {
            self.stroke.push(e);
            let stroke = std::mem::take(&mut self.stroke);
            out.push(match self.classifier.classify_stroke(&stroke, self.config.touch_cap, self.config.worn) {
                Ok((response, series)) => ServerMessage::Prediction { response, frames: series.frames().to_vec() },
                Err(err) => error(err.to_string()),
            });
        }
        out
    }
}

fn error(message: impl Into<String>) -> ServerMessage {
    ServerMessage::Error { message: message.into() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use knitpad::mesh::MeshConfig;
    use knitpad::nn::{ModelParams, ModelSpec};

    fn session() -> StreamSession {
        let params = ModelParams::init(&ModelSpec::cnn_lstm(), 3).unwrap();
        StreamSession::new(Arc::new(Classifier::new(params, &MeshConfig::with_size(8, 8), "test").unwrap()))
    }

    fn send(s: &mut StreamSession, t: f64, u: f64, down: bool) -> Vec<ServerMessage> {
        s.handle_text(&format!(r#"{{"t":{t},"u":{u},"v":0.5,"down":{down}}}"#))
    }

    fn predictions(msgs: &[ServerMessage]) -> usize {
        msgs.iter().filter(|m| matches!(m, ServerMessage::Prediction { .. })).count()
    }

    #[test]
    fn one_prediction_per_stroke_and_none_before_touch_up() {
        let mut s = session();
        let mut all = Vec::new();
        for stroke in 0..2 {
            let base = stroke as f64 * 2000.0;
            all.extend(send(&mut s, base, 0.1, false));
            for k in 0..40 {
                let out = send(&mut s, base + 10.0 + 16.0 * k as f64, 0.1 + 0.02 * k as f64, true);
                assert_eq!(predictions(&out), 0);
                all.extend(out);
            }
            assert!(s.drawing());
            let out = send(&mut s, base + 700.0, 0.9, false);
            assert_eq!(predictions(&out), 1);
            all.extend(out);
            assert!(!s.drawing());
        }
        assert_eq!(predictions(&all), 2);
        assert_eq!(all.iter().filter(|m| matches!(m, ServerMessage::Frame { .. })).count(), 84);
        // Hovering after the stroke never classifies.
        assert_eq!(predictions(&send(&mut s, 5000.0, 0.5, false)), 0);
    }

    #[test]
    fn prediction_matches_direct_stroke_classification() {
        let mut s = session();
        let events: Vec<PointerEvent> = (0..30)
            .map(|k| PointerEvent { t: 20.0 * k as f64, u: 0.2 + 0.02 * k as f64, v: 0.3, down: k < 29 })
            .collect();
        let mut last = Vec::new();
        for e in &events {
            last = s.pointer(*e);
        }
        let Some(ServerMessage::Prediction { response, frames }) = last.pop() else { panic!("no prediction") };
        let (direct, series) = s.classifier.classify_stroke(&events, DEFAULT_TOUCH_CAP, false).unwrap();
        assert_eq!(response.log_probs, direct.log_probs);
        assert_eq!(frames, series.frames());
        assert_eq!(frames.len(), 250);
        let sum: f64 = response.log_probs.iter().map(|l| l.exp()).sum();
        assert!((sum - 1.0).abs() < 1e-5);
    }

    #[test]
    fn frames_follow_touch_state() {
        let mut s = session();
        let idle = s.classifier.gain_model(false).no_touch_gains();
        let out = send(&mut s, 0.0, 0.5, false);
        assert_eq!(out, vec![ServerMessage::Frame { t: 0.0, down: false, gains: idle }]);
        let Some(ServerMessage::Frame { gains, .. }) = s.pointer(PointerEvent { t: 1.0, u: 0.0, v: 0.0, down: true }).pop() else { panic!() };
        // A touch at corner A pulls A down the most.
        assert!(gains[0] < idle[0] && gains[0] - idle[0] < gains[3] - idle[3]);
    }

    #[test]
    fn bad_messages_are_reported_and_ignored() {
        let mut s = session();
        for text in ["not json", r#"{"t":1}"#, r#"{"t":1,"u":0,"v":0,"down":true,"x":2}"#] {
            assert!(matches!(s.handle_text(text).as_slice(), [ServerMessage::Error { .. }]));
        }
        send(&mut s, 10.0, 0.5, true);
        assert!(matches!(send(&mut s, 5.0, 0.5, true).as_slice(), [ServerMessage::Error { .. }]));
        assert!(matches!(s.handle_text(r#"{"config":{"worn":true}}"#).as_slice(), [ServerMessage::Error { .. }]));
        assert!(!s.config().worn);
    }

    #[test]
    fn config_is_acknowledged() {
        let mut s = session();
        let out = s.handle_text(r#"{"config":{"worn":true,"touch_cap":4e-11}}"#);
        let expected = SessionConfig { worn: true, touch_cap: 4e-11 };
        assert_eq!(out, vec![ServerMessage::Config { config: expected }]);
        assert_eq!(s.config(), expected);
        assert!(matches!(s.handle_text(r#"{"config":{"touch_cap":-1}}"#).as_slice(), [ServerMessage::Error { .. }]));
        let text = serde_json::to_string(&out[0]).unwrap();
        assert_eq!(text, r#"{"type":"config","config":{"worn":true,"touch_cap":4e-11}}"#);
    }
}
