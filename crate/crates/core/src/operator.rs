//! The discretized `m`-linear operator
//! `Tf⃗(x) = Σ_{y⃗} K(x, y⃗) ∏ f_i(y_i) h^{mn}` with midpoint quadrature, its
//! truncations to tripled cubes, and empirical weak/strong norm ratios.
//!
//! Each output value is a fixed-order pairwise sum over the tuples of
//! nonzero input cells in cell order. Restricting inputs to a region that
//! already contains their support therefore leaves every output bit-identical.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::InputTuple;
use crate::error::{Error, Result};
use crate::grid::{triple_cube, CellBox, GridFunction, GridSpec, Point};
use crate::kernel::{KernelSpec, SingularSet};
use crate::reduce::{argmax, pairwise_sum};

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    kernel: KernelSpec,
    grid: GridSpec,
}

impl OperatorSpec {
    pub fn new(kernel: KernelSpec, grid: GridSpec) -> Result<Self> {
        kernel.validate_for(&grid)?;
        Ok(OperatorSpec { kernel, grid })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.kernel.m()
    }

    fn check_inputs(&self, fs: &[&GridFunction]) -> Result<()> {
        if fs.len() != self.m() {
            return Err(Error::param(
                "inputs",
                format!("operator takes {} functions, got {}", self.m(), fs.len()),
            ));
        }
        if fs.iter().any(|f| f.grid() != &self.grid) {
            return Err(Error::param(
                "inputs",
                "function grid differs from operator grid",
            ));
        }
        Ok(())
    }

    /// Input cell excluded for output cell `x` by the diagonal policy.
    fn diagonal_cell(&self, x: usize) -> Option<usize> {
        match self.kernel.singular_set() {
            SingularSet::Diagonal => Some(x),
            SingularSet::ShiftedDiagonal(s) => {
                let mut p = self.grid.cell_center(x);
                p[0] -= s;
                self.grid.locate(&p)
            }
            SingularSet::None => None,
        }
    }
}

/// Nonzero cells of one input: `(cell, value, center)` in cell order.
type Support = Vec<(usize, f64, Point)>;

fn support(f: &GridFunction, region: Option<&CellBox>) -> Support {
    let g = f.grid();
    f.values()
        .iter()
        .enumerate()
        .filter(|&(i, &v)| v != 0.0 && region.is_none_or(|r| r.contains_cell(g, i)))
        .map(|(i, &v)| (i, v, g.cell_center(i)))
        .collect()
}

fn output_at(op: &OperatorSpec, supports: &[Support], x: usize) -> Result<f64> {
    let grid = &op.grid;
    let n = grid.n();
    let xp = grid.cell_center(x);
    let diag = op.diagonal_cell(x);
    let vol = grid.cell_measure().powi(op.m() as i32);
    let bad = |ys: Vec<usize>| Error::NonFiniteKernel {
        x_cell: x,
        y_cells: ys,
    };
    let mut terms = Vec::new();
    match supports {
        [s1] => {
            for &(c1, v1, p1) in s1 {
                if Some(c1) == diag {
                    continue;
                }
                let k = op
                    .kernel
                    .eval(n, &xp, &[p1])
                    .finite()
                    .ok_or_else(|| bad(vec![c1]))?;
                terms.push(k * v1 * vol);
            }
        }
        [s1, s2] => {
            for &(c1, v1, p1) in s1 {
                if Some(c1) == diag {
                    continue;
                }
                for &(c2, v2, p2) in s2 {
                    if Some(c2) == diag {
                        continue;
                    }
                    let k = op
                        .kernel
                        .eval(n, &xp, &[p1, p2])
                        .finite()
                        .ok_or_else(|| bad(vec![c1, c2]))?;
                    terms.push(k * v1 * v2 * vol);
                }
            }
        }
        _ => unreachable!("kernels are validated to m ∈ {{1, 2}}"),
    }
    Ok(pairwise_sum(&terms))
}

fn apply_supports(op: &OperatorSpec, supports: &[Support], outputs: &[usize]) -> Result<Vec<f64>> {
    if op.kernel.is_zero() || supports.iter().any(|s| s.is_empty()) {
        return Ok(vec![0.0; outputs.len()]);
    }
    let results: Vec<Result<f64>> = outputs
        .par_iter()
        .map(|&x| output_at(op, supports, x))
        .collect();
    results.into_iter().collect()
}

/// `Tf⃗` on every cell. Input cells in the singular set of the output cell
/// (the output cell itself for diagonal kernels) contribute 0.
pub fn apply(op: &OperatorSpec, fs: &[&GridFunction]) -> Result<GridFunction> {
    let all: Vec<usize> = (0..op.grid.num_cells()).collect();
    let values = apply_at(op, fs, &all)?;
    GridFunction::new(op.grid.clone(), values)
}

/// `Tf⃗` at the listed output cells only.
pub fn apply_at(op: &OperatorSpec, fs: &[&GridFunction], outputs: &[usize]) -> Result<Vec<f64>> {
    op.check_inputs(fs)?;
    let supports: Vec<Support> = fs.iter().map(|f| support(f, None)).collect();
    apply_supports(op, &supports, outputs)
}

/// `T(f_1 χ_{3Q}, …, f_m χ_{3Q})` with `3Q` clipped to the domain.
pub fn apply_truncated(
    op: &OperatorSpec,
    fs: &[&GridFunction],
    q: &CellBox,
) -> Result<GridFunction> {
    let all: Vec<usize> = (0..op.grid.num_cells()).collect();
    let values = apply_truncated_at(op, fs, q, &all)?;
    GridFunction::new(op.grid.clone(), values)
}

pub fn apply_truncated_at(
    op: &OperatorSpec,
    fs: &[&GridFunction],
    q: &CellBox,
    outputs: &[usize],
) -> Result<Vec<f64>> {
    op.check_inputs(fs)?;
    let region = triple_cube(&op.grid, q).region;
    let supports: Vec<Support> = fs.iter().map(|f| support(f, Some(&region))).collect();
    apply_supports(op, &supports, outputs)
}

/// `sup_λ λ |{|g| > λ}|^{1/p}`, attained in the limit `λ ↑ v` at a value level `v` of `|g|`.
pub fn weak_quasinorm(g: &GridFunction, p: f64) -> f64 {
    let mut v: Vec<f64> = g
        .values()
        .iter()
        .map(|x| x.abs())
        .filter(|x| *x > 0.0)
        .collect();
    v.sort_by(|a, b| b.total_cmp(a));
    let h = g.grid().cell_measure();
    let mut best = 0.0f64;
    for (j, &level) in v.iter().enumerate() {
        if j + 1 < v.len() && v[j + 1] == level {
            continue;
        }
        best = best.max(level * ((j + 1) as f64 * h).powf(1.0 / p));
    }
    best
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::param(
            "q",
            format!("must be positive and finite, got {q}"),
        ));
    }
    Ok(())
}

/// `‖output‖_{L^{q/m,∞}} / ∏ ‖f_i‖_{L^q}` with `m = inputs.len()`.
pub fn weak_ratio(output: &GridFunction, inputs: &[&GridFunction], q: f64) -> Result<f64> {
    check_q(q)?;
    let m = inputs.len() as f64;
    let mut denom = 1.0;
    for (i, f) in inputs.iter().enumerate() {
        let nf = f.lp_norm(q);
        if nf == 0.0 {
            return Err(Error::param(
                "bank",
                format!("input slot {i} is identically zero"),
            ));
        }
        denom *= nf;
    }
    Ok(weak_quasinorm(output, q / m) / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakNormReport {
    pub q: f64,
    pub bank_size: usize,
    pub max_ratio: f64,
    pub argmax: Option<String>,
    pub ratios: Vec<f64>,
}

/// Empirical `L^q × ⋯ × L^q → L^{q/m,∞}` ratio over a bank.
pub fn weak_norm(op: &OperatorSpec, q: f64, bank: &[InputTuple]) -> Result<WeakNormReport> {
    check_q(q)?;
    if bank.is_empty() {
        return Err(Error::param("bank", "must be non-empty"));
    }
    let mut ratios = Vec::with_capacity(bank.len());
    for input in bank {
        let fs = input.refs();
        if let Some(i) = fs.iter().position(|f| f.is_zero()) {
            return Err(Error::param(
                "bank",
                format!("input `{}` slot {i} is identically zero", input.label),
            ));
        }
        let out = apply(op, &fs)?;
        ratios.push(weak_ratio(&out, &fs, q)?);
    }
    let (i, max_ratio) = argmax(&ratios).expect("non-empty bank");
    Ok(WeakNormReport {
        q,
        bank_size: bank.len(),
        max_ratio,
        argmax: Some(bank[i].label.clone()),
        ratios,
    })
}

/// `1/p = Σ 1/p_i`.
pub fn harmonic_exponent(ps: &[f64]) -> f64 {
    1.0 / ps.iter().map(|p| 1.0 / p).sum::<f64>()
}

/// `‖Tf⃗‖_{L^p} / ∏ ‖f_i‖_{L^{p_i}}` with `1/p = Σ 1/p_i`.
pub fn strong_ratio(op: &OperatorSpec, fs: &[&GridFunction], ps: &[f64]) -> Result<f64> {
    if ps.len() != fs.len() || ps.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
        return Err(Error::param("p", "one positive finite exponent per input"));
    }
    let out = apply(op, fs)?;
    let mut denom = 1.0;
    for (f, &p) in fs.iter().zip(ps) {
        denom *= f.lp_norm(p);
    }
    if denom == 0.0 {
        return Err(Error::param("inputs", "zero norm in denominator"));
    }
    Ok(out.lp_norm(harmonic_exponent(ps)) / denom)
}
