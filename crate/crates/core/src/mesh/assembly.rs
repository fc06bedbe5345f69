use num_complex::Complex64;

use super::banded::BandMatrix;
use super::{CornerId, MeshConfig, TouchPoint};
use crate::error::{Error, Result};

/// Nodes carrying the touch capacitance and their bilinear weights. Weights
/// are non-negative and sum to one; zero-weight nodes are omitted.
pub fn touch_weights(config: &MeshConfig, touch: &TouchPoint) -> Vec<(usize, f64)> {
    let x = touch.u.clamp(0.0, 1.0) * (config.cols - 1) as f64;
    let y = touch.v.clamp(0.0, 1.0) * (config.rows - 1) as f64;
    let c0 = (x.floor() as usize).min(config.cols - 2);
    let r0 = (y.floor() as usize).min(config.rows - 2);
    let fx = x - c0 as f64;
    let fy = y - r0 as f64;
    [
        (r0, c0, (1.0 - fx) * (1.0 - fy)),
        (r0, c0 + 1, fx * (1.0 - fy)),
        (r0 + 1, c0, (1.0 - fx) * fy),
        (r0 + 1, c0 + 1, fx * fy),
    ]
    .into_iter()
    .filter(|&(_, _, w)| w > 0.0)
    .map(|(r, c, w)| (config.node(r, c), w))
    .collect()
}

/// Complex nodal system `Y v = i` for AC steady state at the drive frequency.
///
/// The source is an ideal voltage behind each corner resistor, so it enters
/// as a conductance on the corner diagonal plus an injected current
/// `V_s / R_k`.
#[derive(Clone, Debug)]
pub struct AdmittanceSystem {
    pub rows: usize,
    pub cols: usize,
    /// Per row, `(column, value)` pairs sorted by column.
    entries: Vec<Vec<(usize, Complex64)>>,
    pub rhs: Vec<Complex64>,
}

impl AdmittanceSystem {
    fn new(rows: usize, cols: usize) -> Self {
        let n = rows * cols;
        AdmittanceSystem {
            rows,
            cols,
            entries: vec![Vec::new(); n],
            rhs: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    fn add(&mut self, i: usize, j: usize, v: Complex64) {
        let row = &mut self.entries[i];
        match row.binary_search_by_key(&j, |&(c, _)| c) {
            Ok(k) => row[k].1 += v,
            Err(k) => row.insert(k, (j, v)),
        }
    }

    fn stamp_conductance(&mut self, a: usize, b: usize, g: f64) {
        let y = Complex64::new(g, 0.0);
        self.add(a, a, y);
        self.add(b, b, y);
        self.add(a, b, -y);
        self.add(b, a, -y);
    }

    fn stamp_shunt(&mut self, a: usize, y: Complex64) {
        self.add(a, a, y);
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let row = &self.entries[i];
        row.binary_search_by_key(&j, |&(c, _)| c)
            .map_or(Complex64::new(0.0, 0.0), |k| row[k].1)
    }

    /// Stored entries of row `i`.
    pub fn row(&self, i: usize) -> &[(usize, Complex64)] {
        &self.entries[i]
    }

    pub fn nnz(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let n = self.dim();
        let mut dense = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for (i, row) in self.entries.iter().enumerate() {
            for &(j, v) in row {
                dense[i][j] = v;
            }
        }
        dense
    }

    pub(crate) fn to_band(&self) -> BandMatrix<Complex64> {
        let mut band = BandMatrix::zeros(self.dim(), self.cols);
        for (i, row) in self.entries.iter().enumerate() {
            for &(j, v) in row {
                band.add(i, j, v);
            }
        }
        band
    }
}

/// Builds the nodal admittance system of the pad under `touch`.
pub fn assemble_admittance(config: &MeshConfig, touch: &TouchPoint) -> Result<AdmittanceSystem> {
    config.validate()?;
    touch.validate()?;
    let mut sys = assemble_without_touch(config);
    let w = config.omega();
    let c_t = touch.effective_cap();
    if c_t > 0.0 {
        for (node, weight) in touch_weights(config, touch) {
            sys.stamp_shunt(node, Complex64::new(0.0, w * c_t * weight));
        }
    }
    if sys.rhs.iter().any(|z| !z.is_finite()) {
        return Err(Error::invalid("non-finite drive injection"));
    }
    Ok(sys)
}

pub(crate) fn assemble_without_touch(config: &MeshConfig) -> AdmittanceSystem {
    let (rows, cols) = (config.rows, config.cols);
    let mut sys = AdmittanceSystem::new(rows, cols);
    let (r_h, r_v) = config.edge_resistances();
    for r in 0..rows {
        for c in 0..cols {
            let here = config.node(r, c);
            if c + 1 < cols {
                sys.stamp_conductance(here, config.node(r, c + 1), 1.0 / r_h);
            }
            if r + 1 < rows {
                sys.stamp_conductance(here, config.node(r + 1, c), 1.0 / r_v);
            }
        }
    }
    let w = config.omega();
    for corner in CornerId::ALL {
        let k = corner.index();
        let node = config.corner_node(corner);
        let g = 1.0 / config.corner_resistors[k];
        let cap = config.parasitic_caps[k] + config.worn_cap_offset;
        sys.stamp_shunt(node, Complex64::new(g, w * cap));
        sys.rhs[node] += Complex64::new(config.drive_amplitude * g, 0.0);
    }
    if config.worn_shunt_cap > 0.0 {
        let per_node = Complex64::new(0.0, w * config.worn_shunt_cap / sys.dim() as f64);
        for i in 0..sys.dim() {
            sys.stamp_shunt(i, per_node);
        }
    }
    sys
}
