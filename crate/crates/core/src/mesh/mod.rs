//! Electrical model of the knitted touchpad.
//!
//! The conductive area is a uniform resistive mesh of `rows x cols` nodes.
//! A single sine source drives the four corner nodes through current-limiting
//! resistors; each corner carries a parasitic capacitance to ground and a touch
//! adds capacitance to ground near the contact point. Gains are the corner
//! voltage magnitudes relative to the drive amplitude.

mod assembly;
pub mod banded;
mod resistance;
mod solve;

pub use assembly::{assemble_admittance, touch_weights, AdmittanceSystem};
pub use resistance::{
    conductivity_matrix, effective_resistance, percent_delta_r, ConductivityMatrix, DeltaR,
    PairwiseResistance, ResistorNetwork, WashDryRecord, CORNER_PAIRS,
};
pub use solve::{simulate_trajectory, solve_corner_gains, solve_corner_voltages, GainModel};

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Corner connection points: A top-left, B top-right, C bottom-left,
/// D bottom-right.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CornerId {
    A,
    B,
    C,
    D,
}

impl CornerId {
    pub const ALL: [CornerId; 4] = [CornerId::A, CornerId::B, CornerId::C, CornerId::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Node index in a row-major `rows x cols` mesh.
    pub fn node(self, rows: usize, cols: usize) -> usize {
        match self {
            CornerId::A => 0,
            CornerId::B => cols - 1,
            CornerId::C => (rows - 1) * cols,
            CornerId::D => rows * cols - 1,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "A" | "a" => Some(CornerId::A),
            "B" | "b" => Some(CornerId::B),
            "C" | "c" => Some(CornerId::C),
            "D" | "d" => Some(CornerId::D),
            _ => None,
        }
    }
}

impl fmt::Display for CornerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = ["A", "B", "C", "D"][self.index()];
        f.write_str(s)
    }
}

/// Electrical and geometric parameters of the pad and its drive circuit.
///
/// Readable from TOML; every key is optional and falls back to the default:
///
/// ```toml
/// rows = 32
/// cols = 32
/// aspect_ratio = 1.0          # physical width / height
/// sheet_resistance = 4000.0   # ohms per square
/// corner_resistors = [4000.0, 4000.0, 4000.0, 4000.0]  # A, B, C, D
/// parasitic_caps = [60e-12, 60e-12, 60e-12, 60e-12]    # farads
/// drive_frequency = 2e6       # hertz
/// drive_amplitude = 1.0       # volts
/// worn_cap_offset = 0.0       # farads added at each corner when worn
/// worn_shunt_cap = 0.0        # farads spread uniformly over all nodes
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub rows: usize,
    pub cols: usize,
    pub aspect_ratio: f64,
    pub sheet_resistance: f64,
    pub corner_resistors: [f64; 4],
    pub parasitic_caps: [f64; 4],
    pub drive_frequency: f64,
    pub drive_amplitude: f64,
    pub worn_cap_offset: f64,
    pub worn_shunt_cap: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            rows: 32,
            cols: 32,
            aspect_ratio: 1.0,
            sheet_resistance: 4000.0,
            corner_resistors: [4000.0; 4],
            parasitic_caps: [60e-12; 4],
            drive_frequency: 2e6,
            drive_amplitude: 1.0,
            worn_cap_offset: 0.0,
            worn_shunt_cap: 0.0,
        }
    }
}

/// Extra corner capacitance used for the worn condition; larger than the
/// benchtop parasitic.
pub const DEFAULT_WORN_CAP_OFFSET: f64 = 90e-12;

impl MeshConfig {
    pub fn with_size(rows: usize, cols: usize) -> Self {
        MeshConfig {
            rows,
            cols,
            ..Self::default()
        }
    }

    /// Same pad worn against the body. Only the corner offset is applied;
    /// set `worn_shunt_cap` separately to add sheet-wide body coupling.
    pub fn worn(&self) -> Self {
        MeshConfig {
            worn_cap_offset: DEFAULT_WORN_CAP_OFFSET,
            ..self.clone()
        }
    }

    pub fn node_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn node(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn corner_node(&self, c: CornerId) -> usize {
        c.node(self.rows, self.cols)
    }

    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.drive_frequency
    }

    /// Resistances of horizontal and vertical mesh edges. A cell of width
    /// `dx` and height `dy` has `R_h = Rs * dx / dy` and `R_v = Rs * dy / dx`.
    pub fn edge_resistances(&self) -> (f64, f64) {
        let dx = self.aspect_ratio / (self.cols - 1) as f64;
        let dy = 1.0 / (self.rows - 1) as f64;
        (
            self.sheet_resistance * dx / dy,
            self.sheet_resistance * dy / dx,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::invalid(format!(
                "mesh needs at least 2x2 nodes, got {}x{}",
                self.rows, self.cols
            )));
        }
        let positive = [
            ("aspect_ratio", self.aspect_ratio),
            ("sheet_resistance", self.sheet_resistance),
            ("drive_frequency", self.drive_frequency),
            ("drive_amplitude", self.drive_amplitude),
        ];
        for (name, v) in positive
            .into_iter()
            .chain(self.corner_resistors.iter().map(|&r| ("corner_resistors", r)))
        {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        for (name, v) in self
            .parasitic_caps
            .iter()
            .map(|&c| ("parasitic_caps", c))
            .chain([
                ("worn_cap_offset", self.worn_cap_offset),
                ("worn_shunt_cap", self.worn_shunt_cap),
            ])
        {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: MeshConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("mesh config serializes")
    }
}

/// A single capacitive contact at normalized pad coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchPoint {
    /// Horizontal position, 0 = left edge.
    pub u: f64,
    /// Vertical position, 0 = top edge.
    pub v: f64,
    /// Touch capacitance in farads.
    pub c_t: f64,
    pub present: bool,
}

impl TouchPoint {
    pub fn new(u: f64, v: f64, c_t: f64) -> Self {
        TouchPoint {
            u,
            v,
            c_t,
            present: true,
        }
    }

    pub fn absent() -> Self {
        TouchPoint {
            u: 0.5,
            v: 0.5,
            c_t: 0.0,
            present: false,
        }
    }

    /// Capacitance that actually loads the mesh.
    pub fn effective_cap(&self) -> f64 {
        if self.present {
            self.c_t
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        if !in_unit(self.u) || !in_unit(self.v) {
            return Err(Error::invalid(format!(
                "touch position ({}, {}) outside the unit square",
                self.u, self.v
            )));
        }
        if !self.c_t.is_finite() || self.c_t < 0.0 {
            return Err(Error::invalid(format!(
                "touch capacitance must be finite and >= 0, got {}",
                self.c_t
            )));
        }
        Ok(())
    }
}

/// Touch state at a point in time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedTouch {
    pub t: f64,
    pub touch: TouchPoint,
}

/// Corner gains for one measurement frame, ordered A, B, C, D.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainFrame {
    pub gains: [f64; 4],
    pub timestamp: f64,
}

impl GainFrame {
    pub fn gain(&self, c: CornerId) -> f64 {
        self.gains[c.index()]
    }
}
