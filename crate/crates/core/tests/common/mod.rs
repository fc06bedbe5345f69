//! Independent reference implementations shared by integration tests and the
//! acceptance suite. Nothing here calls into the library's solvers; the
//! gradient checks use the library only as the function being differentiated.
#![allow(dead_code)]

pub mod gradcheck;

use knitpad::mesh::{MeshConfig, TouchPoint};
use num_complex::Complex64;
use rand::Rng;

pub type Dense = Vec<Vec<Complex64>>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Corner node indices A, B, C, D in a row-major grid.
pub fn corners(cfg: &MeshConfig) -> [usize; 4] {
    let (r, k) = (cfg.rows, cfg.cols);
    [0, k - 1, (r - 1) * k, r * k - 1]
}

/// Dense nodal admittance matrix and injection vector built straight from
/// the circuit description.
pub fn dense_system(cfg: &MeshConfig, touch: &TouchPoint) -> (Dense, Vec<Complex64>) {
    let (rows, cols) = (cfg.rows, cfg.cols);
    let n = rows * cols;
    let mut y = vec![vec![c(0.0, 0.0); n]; n];
    let mut i = vec![c(0.0, 0.0); n];
    let w = 2.0 * std::f64::consts::PI * cfg.drive_frequency;
    let cell_w = cfg.aspect_ratio / (cols - 1) as f64;
    let cell_h = 1.0 / (rows - 1) as f64;
    let g_h = 1.0 / (cfg.sheet_resistance * cell_w / cell_h);
    let g_v = 1.0 / (cfg.sheet_resistance * cell_h / cell_w);
    let mut connect = |a: usize, b: usize, g: f64| {
        y[a][a] += g;
        y[b][b] += g;
        y[a][b] -= g;
        y[b][a] -= g;
    };
    for r in 0..rows {
        for col in 0..cols {
            let a = r * cols + col;
            if col + 1 < cols {
                connect(a, a + 1, g_h);
            }
            if r + 1 < rows {
                connect(a, a + cols, g_v);
            }
        }
    }
    for (k, &node) in corners(cfg).iter().enumerate() {
        let g = 1.0 / cfg.corner_resistors[k];
        y[node][node] += c(g, w * (cfg.parasitic_caps[k] + cfg.worn_cap_offset));
        i[node] += c(g * cfg.drive_amplitude, 0.0);
    }
    for (k, row) in y.iter_mut().enumerate() {
        row[k] += c(0.0, w * cfg.worn_shunt_cap / n as f64);
    }
    if touch.present && touch.c_t > 0.0 {
        // Bilinear split over the enclosing cell.
        let x = touch.u * (cols - 1) as f64;
        let z = touch.v * (rows - 1) as f64;
        let c0 = (x.floor() as usize).min(cols - 2);
        let r0 = (z.floor() as usize).min(rows - 2);
        let (fx, fz) = (x - c0 as f64, z - r0 as f64);
        for (dr, dc, wt) in [
            (0, 0, (1.0 - fx) * (1.0 - fz)),
            (0, 1, fx * (1.0 - fz)),
            (1, 0, (1.0 - fx) * fz),
            (1, 1, fx * fz),
        ] {
            let node = (r0 + dr) * cols + c0 + dc;
            y[node][node] += c(0.0, w * touch.c_t * wt);
        }
    }
    (y, i)
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Dense, mut b: Vec<Complex64>) -> Vec<Complex64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&x, &y| a[x][k].norm().partial_cmp(&a[y][k].norm()).unwrap())
            .unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for r in k + 1..n {
            let f = a[r][k] / a[k][k];
            if f.norm() == 0.0 {
                continue;
            }
            for col in k..n {
                let v = a[k][col];
                a[r][col] -= f * v;
            }
            let v = b[k];
            b[r] -= f * v;
        }
    }
    let mut x = vec![c(0.0, 0.0); n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for col in r + 1..n {
            acc -= a[r][col] * x[col];
        }
        x[r] = acc / a[r][r];
    }
    x
}

pub fn dense_gains(cfg: &MeshConfig, touch: &TouchPoint) -> [f64; 4] {
    let (y, i) = dense_system(cfg, touch);
    let v = dense_solve(y, i);
    corners(cfg).map(|n| v[n].norm() / cfg.drive_amplitude)
}

/// Random small but electrically varied configuration.
pub fn random_small_config<R: Rng>(rng: &mut R) -> MeshConfig {
    let size = if rng.random_bool(0.5) { 3 } else { 4 };
    MeshConfig {
        rows: size,
        cols: size,
        aspect_ratio: rng.random_range(0.5..2.0),
        sheet_resistance: rng.random_range(500.0..20_000.0),
        corner_resistors: std::array::from_fn(|_| rng.random_range(500.0..20_000.0)),
        parasitic_caps: std::array::from_fn(|_| rng.random_range(0.0..200e-12)),
        drive_frequency: rng.random_range(1e5..1e7),
        drive_amplitude: rng.random_range(0.1..5.0),
        worn_cap_offset: if rng.random_bool(0.3) { rng.random_range(0.0..100e-12) } else { 0.0 },
        worn_shunt_cap: if rng.random_bool(0.3) { rng.random_range(0.0..50e-12) } else { 0.0 },
    }
}

pub fn random_touch<R: Rng>(rng: &mut R) -> TouchPoint {
    TouchPoint {
        u: rng.random_range(0.0..=1.0),
        v: rng.random_range(0.0..=1.0),
        c_t: rng.random_range(0.0..300e-12),
        present: rng.random_bool(0.9),
    }
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Measured per-pair resistance changes in percent, pairs AB, AC, AD, BC,
/// BD, CD, for wash/dry cycles 1 to 5.
pub const WASH_DRY_DELTA_PERCENT: [[f64; 6]; 5] = [
    [-6.12, 28.09, 8.52, 12.32, 8.93, 1.77],
    [7.92, 31.48, 29.84, 31.26, 20.52, 15.44],
    [0.77, 8.82, 14.08, 18.42, 17.98, 0.55],
    [7.05, 15.36, 17.09, 20.18, 13.20, -2.65],
    [-2.10, 11.07, 7.42, 11.03, -3.80, -2.21],
];

/// Cumulative change reported alongside those measurements.
pub const WASH_DRY_CUMULATIVE_PERCENT: [f64; 5] = [8.10, 22.16, 9.69, 11.23, 3.19];

/// Rounds to `places` decimals.
pub fn round_to(x: f64, places: i32) -> f64 {
    let s = 10f64.powi(places);
    (x * s).round() / s
}

/// Two slow sinusoids plus an alternating +-4e-3 spike train at the frame
/// rate's Nyquist frequency, 250 frames. Returns (smooth, noisy).
pub fn spike_train() -> (Vec<f64>, Vec<f64>) {
    let smooth: Vec<f64> = (0..250)
        .map(|i| {
            let t = i as f64 / 250.0;
            0.02 * (std::f64::consts::TAU * 1.5 * t).sin() + 0.01 * (std::f64::consts::TAU * 3.0 * t).cos()
        })
        .collect();
    let noisy = smooth.iter().enumerate().map(|(i, s)| s + if i % 2 == 0 { 4e-3 } else { -4e-3 }).collect();
    (smooth, noisy)
}
