//! DC characterization of the sheet: pairwise corner resistances, the
//! corner conductivity matrix and resistance change across wash/dry cycles.

use std::collections::HashMap;
use std::io::Read;

use super::banded::BandMatrix;
use super::{CornerId, MeshConfig};
use crate::error::{Error, Result};

/// Unordered corner pairs in reporting order.
pub const CORNER_PAIRS: [(CornerId, CornerId); 6] = [
    (CornerId::A, CornerId::B),
    (CornerId::A, CornerId::C),
    (CornerId::A, CornerId::D),
    (CornerId::B, CornerId::C),
    (CornerId::B, CornerId::D),
    (CornerId::C, CornerId::D),
];

fn pair_index(i: CornerId, j: CornerId) -> Option<usize> {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    CORNER_PAIRS.iter().position(|&p| p == (a, b))
}

/// Arbitrary resistor network, used for the fabric mesh alone (no drive
/// circuitry).
#[derive(Clone, Debug)]
pub struct ResistorNetwork {
    nodes: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl ResistorNetwork {
    pub fn new(nodes: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(a, b, r) in &edges {
            if a >= nodes || b >= nodes || a == b {
                return Err(Error::invalid(format!("bad edge ({a}, {b}) in {nodes}-node network")));
            }
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::invalid(format!("edge resistance must be > 0, got {r}")));
            }
        }
        Ok(ResistorNetwork { nodes, edges })
    }

    /// Grid with per-edge resistances from `resistance(a, b)`.
    pub fn grid(
        rows: usize,
        cols: usize,
        mut resistance: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let here = r * cols + c;
                if c + 1 < cols {
                    edges.push((here, here + 1, resistance(here, here + 1)));
                }
                if r + 1 < rows {
                    edges.push((here, here + cols, resistance(here, here + cols)));
                }
            }
        }
        Self::new(rows * cols, edges)
    }

    pub fn from_mesh(config: &MeshConfig) -> Result<Self> {
        config.validate()?;
        let (r_h, r_v) = config.edge_resistances();
        let cols = config.cols;
        Self::grid(config.rows, cols, |a, b| if b == a + 1 { r_h } else { r_v })
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    /// Two-terminal resistance: inject 1 A at `i`, ground `j`, read `V_i`.
    pub fn effective_resistance(&self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Err(Error::invalid("effective resistance needs two distinct nodes"));
        }
        if i >= self.nodes || j >= self.nodes {
            return Err(Error::invalid("node index out of range"));
        }
        let bw = self.edges.iter().map(|&(a, b, _)| a.abs_diff(b)).max().unwrap_or(0);
        let mut lap = BandMatrix::<f64>::zeros(self.nodes, bw);
        for &(a, b, r) in &self.edges {
            if a == j || b == j {
                let other = if a == j { b } else { a };
                lap.add(other, other, 1.0 / r);
                continue;
            }
            let g = 1.0 / r;
            lap.add(a, a, g);
            lap.add(b, b, g);
            lap.add(a, b, -g);
            lap.add(b, a, -g);
        }
        lap.set(j, j, 1.0);
        let lu = lap.factor().map_err(|e| {
            Error::numeric(format!("mesh is disconnected between {i} and {j}: {e}"))
        })?;
        let mut rhs = vec![0.0; self.nodes];
        rhs[i] = 1.0;
        lu.solve_in_place(&mut rhs);
        Ok(rhs[i])
    }
}

/// DC resistance of the fabric between two corners.
pub fn effective_resistance(config: &MeshConfig, i: CornerId, j: CornerId) -> Result<f64> {
    if i == j {
        return Err(Error::invalid("effective resistance needs two distinct corners"));
    }
    ResistorNetwork::from_mesh(config)?
        .effective_resistance(config.corner_node(i), config.corner_node(j))
}

/// Resistances between every pair of corners, in [`CORNER_PAIRS`] order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairwiseResistance {
    values: [f64; 6],
}

impl PairwiseResistance {
    pub fn new(values: [f64; 6]) -> Result<Self> {
        if let Some(bad) = values.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::invalid(format!("resistance must be > 0, got {bad}")));
        }
        Ok(PairwiseResistance { values })
    }

    /// Builds from keyed measurements; every pair must be present.
    pub fn from_pairs(pairs: impl IntoIterator<Item = ((CornerId, CornerId), f64)>) -> Result<Self> {
        let mut values = [None; 6];
        for ((a, b), r) in pairs {
            let k = pair_index(a, b)
                .ok_or_else(|| Error::invalid(format!("{a}{b} is not a corner pair")))?;
            values[k] = Some(r);
        }
        let mut out = [0.0; 6];
        for (k, v) in values.iter().enumerate() {
            let (a, b) = CORNER_PAIRS[k];
            out[k] = v.ok_or_else(|| Error::invalid(format!("missing pair [{a}, {b}]")))?;
        }
        Self::new(out)
    }

    pub fn from_mesh(config: &MeshConfig) -> Result<Self> {
        let net = ResistorNetwork::from_mesh(config)?;
        let mut values = [0.0; 6];
        for (k, &(a, b)) in CORNER_PAIRS.iter().enumerate() {
            values[k] = net.effective_resistance(config.corner_node(a), config.corner_node(b))?;
        }
        Self::new(values)
    }

    pub fn get(&self, i: CornerId, j: CornerId) -> Option<f64> {
        pair_index(i, j).map(|k| self.values[k])
    }

    pub fn values(&self) -> &[f64; 6] {
        &self.values
    }
}

/// Corner conductivity matrix: off-diagonals `1 / R_ij`, diagonal the
/// negated sum of its row's off-diagonals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConductivityMatrix(pub [[f64; 4]; 4]);

impl ConductivityMatrix {
    pub fn get(&self, i: CornerId, j: CornerId) -> f64 {
        self.0[i.index()][j.index()]
    }

    pub fn row_sums(&self) -> [f64; 4] {
        self.0.map(|row| row.iter().sum())
    }

    pub fn is_symmetric(&self) -> bool {
        (0..4).all(|i| (0..4).all(|j| self.0[i][j] == self.0[j][i]))
    }
}

pub fn conductivity_matrix(pairs: &PairwiseResistance) -> Result<ConductivityMatrix> {
    let mut g = [[0.0; 4]; 4];
    for (k, &(a, b)) in CORNER_PAIRS.iter().enumerate() {
        let r = pairs.values[k];
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid(format!("resistance [{a}, {b}] must be > 0, got {r}")));
        }
        g[a.index()][b.index()] = 1.0 / r;
        g[b.index()][a.index()] = 1.0 / r;
    }
    for (i, row) in g.iter_mut().enumerate() {
        let off: f64 = (0..4).filter(|&j| j != i).map(|j| row[j]).sum();
        row[i] = -off;
    }
    Ok(ConductivityMatrix(g))
}

/// Baseline and post-cycle pairwise resistance measurements.
#[derive(Clone, Debug, PartialEq)]
pub struct WashDryRecord {
    pub baseline: PairwiseResistance,
    pub after_cycle: Vec<PairwiseResistance>,
}

impl WashDryRecord {
    /// Reads a CSV with a `condition` column (`b` for baseline, `d1`, `d2`,
    /// ... or plain cycle numbers) and one column per corner pair named like
    /// `AB` or `A-B`. Cycle rows may appear in any order.
    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let cond_col = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case("condition"))
            .ok_or_else(|| Error::parse("missing `condition` column"))?;
        let mut pair_cols = Vec::new();
        for (col, h) in headers.iter().enumerate() {
            if col == cond_col {
                continue;
            }
            let letters: Vec<CornerId> = h
                .chars()
                .filter(|c| c.is_ascii_alphabetic())
                .filter_map(|c| CornerId::parse(&c.to_string()))
                .collect();
            match letters.as_slice() {
                [a, b] if a != b => pair_cols.push((col, (*a, *b))),
                _ => return Err(Error::parse(format!("unrecognized column `{h}`"))),
            }
        }
        let mut baseline = None;
        let mut cycles: HashMap<usize, PairwiseResistance> = HashMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let cond = rec.get(cond_col).unwrap_or("").to_ascii_lowercase();
            let mut pairs = Vec::new();
            for &(col, pair) in &pair_cols {
                let field = rec.get(col).unwrap_or("");
                let r: f64 = field
                    .parse()
                    .map_err(|_| Error::parse(format!("bad resistance `{field}`")))?;
                pairs.push((pair, r));
            }
            let pr = PairwiseResistance::from_pairs(pairs)?;
            if cond == "b" || cond == "baseline" {
                baseline = Some(pr);
            } else {
                let n: usize = cond
                    .trim_start_matches('d')
                    .parse()
                    .map_err(|_| Error::parse(format!("bad condition `{cond}`")))?;
                if n == 0 || cycles.insert(n, pr).is_some() {
                    return Err(Error::parse(format!("bad or repeated cycle `{cond}`")));
                }
            }
        }
        let baseline = baseline.ok_or_else(|| Error::invalid("record has no baseline row"))?;
        let mut after_cycle = Vec::with_capacity(cycles.len());
        for n in 1..=cycles.len() {
            after_cycle.push(
                cycles
                    .remove(&n)
                    .ok_or_else(|| Error::invalid(format!("cycle d{n} missing")))?,
            );
        }
        Ok(WashDryRecord {
            baseline,
            after_cycle,
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }
}

/// Fractional resistance change after one wash/dry cycle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaR {
    /// `(R_dn - R_b) / R_b` per pair in [`CORNER_PAIRS`] order.
    pub per_pair: [f64; 6],
    /// Arithmetic mean of the six per-pair fractions.
    pub cumulative: f64,
}

/// Resistance change of cycle `cycle` (1-based, `d1` is the first cycle).
pub fn percent_delta_r(record: &WashDryRecord, cycle: usize) -> Result<DeltaR> {
    if cycle == 0 || cycle > record.after_cycle.len() {
        return Err(Error::invalid(format!(
            "cycle {cycle} outside record with {} cycles",
            record.after_cycle.len()
        )));
    }
    let after = &record.after_cycle[cycle - 1];
    let mut per_pair = [0.0; 6];
    for (k, d) in per_pair.iter_mut().enumerate() {
        let rb = record.baseline.values[k];
        *d = (after.values[k] - rb) / rb;
    }
    Ok(DeltaR {
        per_pair,
        cumulative: per_pair.iter().sum::<f64>() / 6.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_adjacent_is_three_quarters() {
        // Square of four equal resistors: R in parallel with 3R.
        let cfg = MeshConfig::with_size(2, 2);
        let r = effective_resistance(&cfg, CornerId::A, CornerId::B).unwrap();
        assert!((r - 0.75 * 4000.0).abs() < 1e-9, "{r}");
        let diag = effective_resistance(&cfg, CornerId::A, CornerId::D).unwrap();
        assert!((diag - 4000.0).abs() < 1e-9, "{diag}");
    }

    #[test]
    fn reciprocity() {
        let cfg = MeshConfig {
            aspect_ratio: 1.7,
            ..MeshConfig::with_size(6, 9)
        };
        for (a, b) in CORNER_PAIRS {
            let ab = effective_resistance(&cfg, a, b).unwrap();
            let ba = effective_resistance(&cfg, b, a).unwrap();
            assert!((ab - ba).abs() < 1e-9 * ab);
        }
    }

    #[test]
    fn disconnected_network_is_numeric_error() {
        let net = ResistorNetwork::new(3, vec![(0, 1, 10.0)]).unwrap();
        assert!(matches!(net.effective_resistance(0, 2), Err(Error::Numeric(_))));
        assert!(net.effective_resistance(0, 0).is_err());
        assert!(effective_resistance(&MeshConfig::with_size(3, 3), CornerId::A, CornerId::A).is_err());
    }

    #[test]
    fn uniform_conductivity_matrix() {
        let g = conductivity_matrix(&PairwiseResistance::new([1.0; 6]).unwrap()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(g.0[i][j], if i == j { -3.0 } else { 1.0 });
            }
        }
        assert!(g.row_sums().iter().all(|s| s.abs() < 1e-15));
    }

    #[test]
    fn pairwise_rejects_bad_values() {
        assert!(PairwiseResistance::new([1.0, 1.0, 0.0, 1.0, 1.0, 1.0]).is_err());
        let missing = CORNER_PAIRS[..5].iter().map(|&p| (p, 1.0));
        let err = PairwiseResistance::from_pairs(missing).unwrap_err();
        assert!(err.to_string().contains("missing pair [C, D]"), "{err}");
        let swapped = CORNER_PAIRS.iter().map(|&(a, b)| ((b, a), 2.0));
        assert_eq!(PairwiseResistance::from_pairs(swapped).unwrap().values(), &[2.0; 6]);
    }

    #[test]
    fn delta_r_arithmetic() {
        let base = PairwiseResistance::new([100.0; 6]).unwrap();
        let after = PairwiseResistance::new([108.1; 6]).unwrap();
        let rec = WashDryRecord {
            baseline: base,
            after_cycle: vec![after, base],
        };
        let d = percent_delta_r(&rec, 1).unwrap();
        assert!(d.per_pair.iter().all(|x| (x - 0.081).abs() < 1e-12));
        assert!((d.cumulative - 0.081).abs() < 1e-12);
        let same = percent_delta_r(&rec, 2).unwrap();
        assert_eq!(same.per_pair, [0.0; 6]);
        assert_eq!(same.cumulative, 0.0);
        assert!(percent_delta_r(&rec, 0).is_err());
        assert!(percent_delta_r(&rec, 3).is_err());
    }

    #[test]
    fn washdry_csv_parsing() {
        let text = "condition,AB,AC,AD,BC,BD,CD\nd2,1,1,1,1,1,1\nb,2,2,2,2,2,2\nd1,3,3,3,3,3,3\n";
        let rec = WashDryRecord::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(rec.baseline.values(), &[2.0; 6]);
        assert_eq!(rec.after_cycle[0].values(), &[3.0; 6]);
        assert_eq!(rec.after_cycle[1].values(), &[1.0; 6]);

        let missing = "condition,AB,AC,AD,BC,BD\nb,1,1,1,1,1\n";
        let err = WashDryRecord::from_csv_reader(missing.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("missing pair"), "{err}");

        let gap = "condition,AB,AC,AD,BC,BD,CD\nb,1,1,1,1,1,1\nd2,1,1,1,1,1,1\n";
        assert!(WashDryRecord::from_csv_reader(gap.as_bytes()).is_err());
    }
}
