//! Parametric gesture strokes, synthetic subjects and labeled datasets.

mod dataset;
mod path;
mod profile;

pub use dataset::{read_manifest, synth_dataset, synth_dataset_with, write_dataset, DatasetOptions};
pub use path::{path_for_class, GesturePath, Point, Segment};
pub use profile::{sample_trajectory, PhaseTiming, SubjectProfile};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::MeshConfig;
use crate::signal::GainSeries;

/// The twelve single-stroke characters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum GestureClass {
    Three,
    Five,
    I,
    J,
    L,
    M,
    O,
    S,
    V,
    W,
    Z,
    Question,
}

pub const NUM_CLASSES: usize = 12;

impl GestureClass {
    pub const ALL: [GestureClass; NUM_CLASSES] = [
        GestureClass::Three,
        GestureClass::Five,
        GestureClass::I,
        GestureClass::J,
        GestureClass::L,
        GestureClass::M,
        GestureClass::O,
        GestureClass::S,
        GestureClass::V,
        GestureClass::W,
        GestureClass::Z,
        GestureClass::Question,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> char {
        b"35IJLMOSVWZ?"[self.index()] as char
    }

    pub fn parse(s: &str) -> Option<Self> {
        let mut chars = s.trim().chars();
        let c = chars.next()?.to_ascii_uppercase();
        if chars.next().is_some() {
            return None;
        }
        Self::ALL.into_iter().find(|g| g.label() == c)
    }
}

impl fmt::Display for GestureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl From<GestureClass> for String {
    fn from(g: GestureClass) -> String {
        g.label().to_string()
    }
}

impl TryFrom<String> for GestureClass {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s).ok_or_else(|| Error::parse(format!("unknown gesture class `{s}`")))
    }
}

/// Whether a sample was captured on the bench or on the body.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Benchtop,
    Worn,
}

impl Condition {
    pub fn of(config: &MeshConfig) -> Self {
        if config.worn_cap_offset > 0.0 || config.worn_shunt_cap > 0.0 {
            Condition::Worn
        } else {
            Condition::Benchtop
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Benchtop => "benchtop",
            Condition::Worn => "worn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "benchtop" => Some(Condition::Benchtop),
            "worn" => Some(Condition::Worn),
            _ => None,
        }
    }
}

/// One recorded gesture with the touch-free capture from the same sitting.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub series: GainSeries,
    pub baseline: GainSeries,
    pub class: GestureClass,
    pub subject: String,
    pub condition: Condition,
    pub seed: u64,
}
