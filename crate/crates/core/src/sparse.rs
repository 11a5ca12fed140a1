//! Sparse families with explicit witness sets, their exact verification,
//! the Carleson diagnostic, and the sparse operator
//! `x ↦ Σ_{Q ∈ S} ∏_i (⨍_Q |f_i|^r)^{1/r} χ_Q(x)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{local_average, DyadicCube, GridFunction, GridSpec};

/// One cube of a family with its witness set `E_Q` and the builder threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseEntry {
    pub level: u32,
    pub index: Vec<u64>,
    pub witness_cells: Vec<usize>,
    /// Threshold used when the entry was selected; 0 for hand-made entries.
    #[serde(default)]
    pub tau: f64,
}

impl SparseEntry {
    pub fn new(cube: &DyadicCube, witness_cells: Vec<usize>, tau: f64) -> Self {
        SparseEntry {
            level: cube.level,
            index: cube.index.clone(),
            witness_cells,
            tau,
        }
    }

    pub fn cube(&self) -> DyadicCube {
        DyadicCube {
            level: self.level,
            index: self.index.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseFamily {
    pub gamma: f64,
    pub entries: Vec<SparseEntry>,
}

impl SparseFamily {
    pub fn new(gamma: f64, entries: Vec<SparseEntry>) -> Self {
        SparseFamily { gamma, entries }
    }

    pub fn empty(gamma: f64) -> Self {
        SparseFamily::new(gamma, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorts entries by `(level, index)`.
    pub fn canonicalize(&mut self) {
        self.entries
            .sort_by(|a, b| (a.level, &a.index).cmp(&(b.level, &b.index)));
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        for e in &self.entries {
            e.cube().validate(grid)?;
            if let Some(&c) = e.witness_cells.iter().find(|&&c| c >= grid.num_cells()) {
                return Err(Error::InvalidCube(format!("witness cell {c} outside grid")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub ok: bool,
    /// Entry with the smallest `|E_Q| / |Q|`.
    pub worst_entry: Option<usize>,
    pub worst_ratio: f64,
    pub witness_outside_cube: Vec<usize>,
    /// Pairs of entries whose witnesses share a cell.
    pub overlapping: Vec<(usize, usize)>,
    pub below_gamma: Vec<usize>,
}

/// Checks, in integer cell counts, that each witness lies in its cube, that
/// witnesses are pairwise disjoint, and that `|E_Q| ≥ γ|Q|`.
pub fn verify_witness_sparsity(
    family: &SparseFamily,
    grid: &GridSpec,
    gamma: f64,
) -> Result<SparsityReport> {
    family.validate(grid)?;
    let mut owner: Vec<Option<usize>> = vec![None; grid.num_cells()];
    let mut report = SparsityReport {
        ok: true,
        worst_entry: None,
        worst_ratio: f64::INFINITY,
        witness_outside_cube: Vec::new(),
        overlapping: Vec::new(),
        below_gamma: Vec::new(),
    };
    for (j, e) in family.entries.iter().enumerate() {
        let cube = e.cube();
        let size = cube.num_cells(grid);
        let mut distinct = e.witness_cells.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.iter().any(|&c| !cube.contains_cell(grid, c)) {
            report.witness_outside_cube.push(j);
        }
        for &c in &distinct {
            match owner[c] {
                Some(k) => {
                    if report.overlapping.last() != Some(&(k, j)) {
                        report.overlapping.push((k, j));
                    }
                }
                None => owner[c] = Some(j),
            }
        }
        let ratio = distinct.len() as f64 / size as f64;
        if ratio < report.worst_ratio {
            report.worst_ratio = ratio;
            report.worst_entry = Some(j);
        }
        // |E| ≥ γ|Q| as an exact comparison of the rational |E|/|Q| with γ.
        if (distinct.len() as f64) < gamma * size as f64 {
            report.below_gamma.push(j);
        }
    }
    if family.entries.is_empty() {
        report.worst_ratio = 1.0;
    }
    report.ok = report.witness_outside_cube.is_empty()
        && report.overlapping.is_empty()
        && report.below_gamma.is_empty();
    Ok(report)
}

/// `Λ = max_{Q ∈ S} Σ_{P ∈ S, P ⊆ Q} |P| / |Q|`; 0 for an empty family.
pub fn carleson_sum(family: &SparseFamily) -> f64 {
    let cubes: Vec<DyadicCube> = family.entries.iter().map(SparseEntry::cube).collect();
    let contains = |q: &DyadicCube, p: &DyadicCube| {
        p.level >= q.level
            && p.index
                .iter()
                .zip(&q.index)
                .all(|(&pi, &qi)| pi >> (p.level - q.level) == qi)
    };
    cubes
        .iter()
        .map(|q| {
            let n = q.index.len() as i32;
            cubes
                .iter()
                .filter(|p| contains(q, p))
                .map(|p| 0.5f64.powi(n * (p.level - q.level) as i32))
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// `Σ_{Q ∈ S, Q ∋ x} ∏_i (⨍_Q |f_i|^r)^{1/r}` per cell.
pub fn sparse_eval(family: &SparseFamily, fs: &[&GridFunction], r: f64) -> Result<GridFunction> {
    let grid = fs
        .first()
        .ok_or_else(|| Error::param("inputs", "at least one function required"))?
        .grid()
        .clone();
    if fs.iter().any(|f| f.grid() != &grid) {
        return Err(Error::param("inputs", "functions live on different grids"));
    }
    family.validate(&grid)?;
    let weights: Vec<f64> = family
        .entries
        .par_iter()
        .map(|e| {
            let b = e.cube().to_box(&grid);
            fs.iter()
                .map(|f| local_average(f, &b, r))
                .product::<Result<f64>>()
        })
        .collect::<Vec<Result<f64>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; grid.num_cells()];
    for (e, w) in family.entries.iter().zip(weights) {
        for c in e.cube().to_box(&grid).cells(&grid) {
            out[c] += w;
        }
    }
    GridFunction::new(grid, out)
}
