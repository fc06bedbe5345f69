//! Orthogonal discrete wavelet transform with the Symlet-4 filter bank and
//! symmetric (half-point) boundary extension.
//!
//! Lengths and alignment follow the common convention where one level maps
//! `N` samples to `floor((N + L - 1) / 2)` coefficients per band, so results
//! line up with other widely used implementations.

use crate::error::{Error, Result};

/// Symlet-4 decomposition low-pass filter.
pub const SYM4_DEC_LO: [f64; 8] = [
    -0.075_765_714_789_273_33,
    -0.029_635_527_645_998_51,
    0.497_618_667_632_015_45,
    0.803_738_751_805_916_1,
    0.297_857_795_605_277_36,
    -0.099_219_543_576_847_22,
    -0.012_603_967_262_037_833,
    0.032_223_100_604_042_7,
];

pub const FILTER_LEN: usize = SYM4_DEC_LO.len();

/// Decomposition high-pass: quadrature mirror of the low-pass.
pub fn dec_hi() -> [f64; FILTER_LEN] {
    std::array::from_fn(|k| {
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        sign * SYM4_DEC_LO[FILTER_LEN - 1 - k]
    })
}

fn reversed(f: [f64; FILTER_LEN]) -> [f64; FILTER_LEN] {
    std::array::from_fn(|k| f[FILTER_LEN - 1 - k])
}

/// Deepest useful decomposition for a signal of length `n`.
pub fn max_level(n: usize) -> usize {
    let ratio = n as f64 / (FILTER_LEN - 1) as f64;
    if ratio < 1.0 {
        0
    } else {
        ratio.log2().floor() as usize
    }
}

fn extended(x: &[f64], i: isize) -> f64 {
    let n = x.len() as isize;
    let mut i = i;
    // Half-point symmetric reflection, repeated for very short inputs.
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return x[i as usize];
        }
    }
}

fn analyze(x: &[f64], h: &[f64; FILTER_LEN]) -> Vec<f64> {
    let out_len = (x.len() + FILTER_LEN - 1) / 2;
    (0..out_len)
        .map(|o| {
            let centre = 2 * o as isize + 1;
            h.iter()
                .enumerate()
                .map(|(j, hj)| hj * extended(x, centre - j as isize))
                .sum()
        })
        .collect()
}

/// One analysis step: `(approximation, detail)`.
pub fn dwt(x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.is_empty() {
        return Err(Error::invalid("cannot transform an empty signal"));
    }
    Ok((analyze(x, &SYM4_DEC_LO), analyze(x, &dec_hi())))
}

/// One synthesis step; inverse of [`dwt`] up to a possible extra trailing
/// sample for odd-length inputs.
pub fn idwt(approx: &[f64], detail: &[f64]) -> Result<Vec<f64>> {
    if approx.len() != detail.len() {
        return Err(Error::invalid(format!(
            "band lengths differ: {} vs {}",
            approx.len(),
            detail.len()
        )));
    }
    let m = approx.len();
    if 2 * m + 2 < FILTER_LEN {
        return Err(Error::invalid("coefficient bands shorter than the filter"));
    }
    let rec_lo = reversed(SYM4_DEC_LO);
    let rec_hi = reversed(dec_hi());
    let out_len = 2 * m + 2 - FILTER_LEN;
    let mut out = vec![0.0; out_len];
    for (n, y) in out.iter_mut().enumerate() {
        // Full convolution of the zero-upsampled bands, shifted by L - 2.
        let full = n + FILTER_LEN - 2;
        let mut acc = 0.0;
        for k in 0..FILTER_LEN {
            if k > full {
                break;
            }
            let up = full - k;
            if up % 2 == 0 && up / 2 < m {
                acc += rec_lo[k] * approx[up / 2] + rec_hi[k] * detail[up / 2];
            }
        }
        *y = acc;
    }
    Ok(out)
}

/// Multilevel decomposition, coarsest first: `[cA_n, cD_n, ..., cD_1]`.
pub fn wavedec(x: &[f64], level: usize) -> Result<Vec<Vec<f64>>> {
    let max = max_level(x.len());
    if level == 0 || level > max {
        return Err(Error::invalid(format!(
            "decomposition depth {level} infeasible for length {} (max {max})",
            x.len()
        )));
    }
    let mut details = Vec::with_capacity(level);
    let mut a = x.to_vec();
    for _ in 0..level {
        let (ca, cd) = dwt(&a)?;
        details.push(cd);
        a = ca;
    }
    let mut out = vec![a];
    out.extend(details.into_iter().rev());
    Ok(out)
}

/// Inverse of [`wavedec`]; may return one sample more than the original.
pub fn waverec(coeffs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let (first, rest) = coeffs
        .split_first()
        .ok_or_else(|| Error::invalid("no coefficient bands"))?;
    let mut a = first.clone();
    for d in rest {
        if a.len() == d.len() + 1 {
            a.pop();
        }
        a = idwt(&a, d)?;
    }
    Ok(a)
}

/// Which bands survive filtering.
///
/// `kept_levels` counts coefficient bands from the coarse end of
/// `[cA_n, cD_n, ..., cD_1]`; the default keeps the approximation and the
/// three coarsest details of a depth-5 decomposition. `kept_levels =
/// decomposition_depth + 1` keeps every band.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FilterSpec {
    pub kept_levels: usize,
    pub decomposition_depth: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            kept_levels: 4,
            decomposition_depth: 5,
        }
    }
}

impl FilterSpec {
    pub fn keep_all(depth: usize) -> Self {
        FilterSpec {
            kept_levels: depth + 1,
            decomposition_depth: depth,
        }
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if len < FILTER_LEN {
            return Err(Error::invalid(format!(
                "series of {len} frames is shorter than the {FILTER_LEN}-tap filter"
            )));
        }
        let max = max_level(len);
        if self.decomposition_depth == 0 || self.decomposition_depth > max {
            return Err(Error::invalid(format!(
                "decomposition depth {} infeasible for length {len} (max {max})",
                self.decomposition_depth
            )));
        }
        if self.kept_levels == 0 || self.kept_levels > self.decomposition_depth + 1 {
            return Err(Error::invalid(format!(
                "kept_levels must be in 1..={}, got {}",
                self.decomposition_depth + 1,
                self.kept_levels
            )));
        }
        Ok(())
    }
}

/// Zeroes the fine detail bands of one channel and reconstructs it at its
/// original length.
pub fn denoise(x: &[f64], spec: &FilterSpec) -> Result<Vec<f64>> {
    spec.validate(x.len())?;
    let mut coeffs = wavedec(x, spec.decomposition_depth)?;
    for band in coeffs.iter_mut().skip(spec.kept_levels) {
        band.iter_mut().for_each(|c| *c = 0.0);
    }
    let mut y = waverec(&coeffs)?;
    y.truncate(x.len());
    Ok(y)
}
