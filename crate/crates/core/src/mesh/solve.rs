use num_complex::Complex64;

use super::assembly::{assemble_without_touch, touch_weights};
use super::{assemble_admittance, CornerId, GainFrame, MeshConfig, TimedTouch, TouchPoint};
use crate::error::{Error, Result};
use crate::signal::GainSeries;

/// Complex corner voltages (A, B, C, D) from a direct banded solve of the
/// full nodal system.
pub fn solve_corner_voltages(config: &MeshConfig, touch: &TouchPoint) -> Result<[Complex64; 4]> {
    let sys = assemble_admittance(config, touch)?;
    let lu = sys.to_band().factor()?;
    let v = lu.solve(&sys.rhs);
    Ok(CornerId::ALL.map(|c| v[config.corner_node(c)]))
}

/// Corner gains `|V_k| / V_drive` for a single touch state.
pub fn solve_corner_gains(config: &MeshConfig, touch: &TouchPoint) -> Result<GainFrame> {
    let v = solve_corner_voltages(config, touch)?;
    Ok(GainFrame {
        gains: v.map(|z| z.norm() / config.drive_amplitude),
        timestamp: 0.0,
    })
}

/// Per-configuration solver for many touch states.
///
/// Factors the touch-free system once and keeps its inverse; a touch only
/// adds shunts on at most four nodes, so each frame is a rank-4
/// Sherman-Morrison-Woodbury correction.
#[derive(Clone, Debug)]
pub struct GainModel {
    config: MeshConfig,
    /// Row-major inverse of the touch-free admittance matrix.
    impedance: Vec<Complex64>,
    base_voltages: Vec<Complex64>,
    corners: [usize; 4],
}

impl GainModel {
    pub fn new(config: &MeshConfig) -> Result<Self> {
        config.validate()?;
        let sys = assemble_without_touch(config);
        let n = sys.dim();
        let lu = sys.to_band().factor()?;
        let base_voltages = lu.solve(&sys.rhs);
        let mut impedance = vec![Complex64::new(0.0, 0.0); n * n];
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            col.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            col[j] = Complex64::new(1.0, 0.0);
            lu.solve_in_place(&mut col);
            // Y is complex symmetric, so column j of Z is also row j.
            impedance[j * n..(j + 1) * n].copy_from_slice(&col);
        }
        Ok(GainModel {
            config: config.clone(),
            impedance,
            base_voltages,
            corners: CornerId::ALL.map(|c| config.corner_node(c)),
        })
    }

    pub fn config(&self) -> &MeshConfig {
        &self.config
    }

    fn z(&self, i: usize, j: usize) -> Complex64 {
        self.impedance[i * self.base_voltages.len() + j]
    }

    pub fn corner_voltages(&self, touch: &TouchPoint) -> Result<[Complex64; 4]> {
        touch.validate()?;
        let base = self.corners.map(|c| self.base_voltages[c]);
        let c_t = touch.effective_cap();
        if c_t == 0.0 {
            return Ok(base);
        }
        let w = self.config.omega();
        let nodes = touch_weights(&self.config, touch);
        let k = nodes.len();
        let y: Vec<Complex64> = nodes
            .iter()
            .map(|&(_, wt)| Complex64::new(0.0, w * c_t * wt))
            .collect();
        // (I + D Z_SS) x = D v_S
        let mut m = [[Complex64::new(0.0, 0.0); 4]; 4];
        let mut rhs = [Complex64::new(0.0, 0.0); 4];
        for a in 0..k {
            for b in 0..k {
                m[a][b] = y[a] * self.z(nodes[a].0, nodes[b].0);
            }
            m[a][a] += 1.0;
            rhs[a] = y[a] * self.base_voltages[nodes[a].0];
        }
        let x = solve_small(&mut m, &mut rhs, k)?;
        Ok(CornerId::ALL.map(|c| {
            let node = self.corners[c.index()];
            let corr: Complex64 = (0..k).map(|a| self.z(node, nodes[a].0) * x[a]).sum();
            base[c.index()] - corr
        }))
    }

    pub fn gains(&self, touch: &TouchPoint) -> Result<[f64; 4]> {
        let v = self.corner_voltages(touch)?;
        Ok(v.map(|z| z.norm() / self.config.drive_amplitude))
    }

    pub fn no_touch_gains(&self) -> [f64; 4] {
        self.corners
            .map(|c| self.base_voltages[c].norm() / self.config.drive_amplitude)
    }

    /// Samples `trajectory` at frame midpoints and solves each frame.
    pub fn simulate(
        &self,
        trajectory: &[TimedTouch],
        frame_rate: f64,
        duration: f64,
    ) -> Result<GainSeries> {
        let times = frame_times(frame_rate, duration)?;
        validate_trajectory(trajectory)?;
        let mut frames = Vec::with_capacity(times.len());
        for &t in &times {
            let touch = touch_at(trajectory, t);
            frames.push(self.gains(&touch)?);
        }
        GainSeries::new(frames, frame_rate)
    }
}

/// One-shot simulation of a trajectory. Builds a [`GainModel`]; reuse one
/// directly when simulating many trajectories on the same pad.
pub fn simulate_trajectory(
    config: &MeshConfig,
    trajectory: &[TimedTouch],
    frame_rate: f64,
    duration: f64,
) -> Result<GainSeries> {
    validate_trajectory(trajectory)?;
    frame_times(frame_rate, duration)?;
    GainModel::new(config)?.simulate(trajectory, frame_rate, duration)
}

fn frame_times(frame_rate: f64, duration: f64) -> Result<Vec<f64>> {
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        return Err(Error::invalid(format!("frame rate must be > 0, got {frame_rate}")));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid(format!("duration must be > 0, got {duration}")));
    }
    let n = (duration * frame_rate).round() as usize;
    if n == 0 {
        return Err(Error::invalid("duration shorter than one frame"));
    }
    Ok((0..n).map(|k| (k as f64 + 0.5) / frame_rate).collect())
}

fn validate_trajectory(trajectory: &[TimedTouch]) -> Result<()> {
    if trajectory.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    if trajectory.windows(2).any(|w| !(w[1].t >= w[0].t)) {
        return Err(Error::invalid("trajectory timestamps must be non-decreasing"));
    }
    Ok(())
}

/// Touch state at time `t`. Between two present samples position and
/// capacitance are interpolated linearly; across a touch-down or touch-up
/// the earlier sample's state is held.
pub(crate) fn touch_at(trajectory: &[TimedTouch], t: f64) -> TouchPoint {
    let first = &trajectory[0];
    if t <= first.t {
        return first.touch;
    }
    let idx = trajectory.partition_point(|p| p.t <= t);
    if idx >= trajectory.len() {
        return trajectory[trajectory.len() - 1].touch;
    }
    let (a, b) = (&trajectory[idx - 1], &trajectory[idx]);
    if !(a.touch.present && b.touch.present) || b.t == a.t {
        return a.touch;
    }
    let f = (t - a.t) / (b.t - a.t);
    let lerp = |x: f64, y: f64| x + (y - x) * f;
    TouchPoint {
        u: lerp(a.touch.u, b.touch.u),
        v: lerp(a.touch.v, b.touch.v),
        c_t: lerp(a.touch.c_t, b.touch.c_t),
        present: true,
    }
}

/// Gaussian elimination with partial pivoting on the leading `k x k` block.
fn solve_small(
    m: &mut [[Complex64; 4]; 4],
    b: &mut [Complex64; 4],
    k: usize,
) -> Result<[Complex64; 4]> {
    for col in 0..k {
        let p = (col..k)
            .max_by(|&i, &j| m[i][col].norm().total_cmp(&m[j][col].norm()))
            .unwrap();
        if m[p][col].norm() == 0.0 {
            return Err(Error::numeric("singular touch correction"));
        }
        m.swap(col, p);
        b.swap(col, p);
        for r in col + 1..k {
            let f = m[r][col] / m[col][col];
            for c in col..k {
                let v = m[col][c];
                m[r][c] -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
        }
    }
    let mut x = [Complex64::new(0.0, 0.0); 4];
    for r in (0..k).rev() {
        let s: Complex64 = (r + 1..k).map(|c| m[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / m[r][r];
    }
    Ok(x)
}
