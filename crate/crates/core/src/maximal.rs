//! Maximal operators over explicit cube families: the multilinear maximal
//! function, the power maximal function `M_δ`, the grand maximal truncated
//! operator `M_T`, its local version on a cube, and the pointwise chain check
//! `M_T ≲ (K_r + c‖T‖) 𝓜_r + M_{r/4}(T)`.
//!
//! Every operator computes one scalar per cube and then takes, at each cell,
//! the max over cubes containing it. Per-cube values are computed by the same
//! code in every mode, so a smaller family gives a pointwise smaller output
//! exactly.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{power_mean, triple_cube, CellBox, GridFunction, GridSpec};
use crate::operator::{apply, apply_truncated_at, OperatorSpec};
use crate::reduce::argmax;

/// Range of the supremum over cubes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CubeFamilyMode {
    /// Every cube of grid-aligned corner and integer side inside the domain.
    AllGridCubes,
    #[default]
    Dyadic,
    /// Dyadic cubes together with, at each level of side `s` cells, the
    /// lattices translated by `0`, `round(s/3)` or `round(2s/3)` cells
    /// independently along each axis, keeping cubes inside the domain.
    DyadicShifted,
}

/// Cubes of the mode's family, in a fixed order.
pub fn cube_family(grid: &GridSpec, mode: CubeFamilyMode) -> Vec<CellBox> {
    let n = grid.n();
    let big = grid.cells_per_side() as i64;
    let starts = |side: i64, offset: i64, step: i64| -> Vec<i64> {
        (0..)
            .map(|k| offset + k * step)
            .take_while(|c| c + side <= big)
            .collect()
    };
    let mut out = Vec::new();
    let mut push = |side: i64, s0: &[i64], s1: &[i64]| {
        if n == 1 {
            out.extend(s0.iter().map(|&a| CellBox::cube(1, [a, 0], side)));
        } else {
            for &a in s0 {
                out.extend(s1.iter().map(|&b| CellBox::cube(2, [a, b], side)));
            }
        }
    };
    match mode {
        CubeFamilyMode::AllGridCubes => {
            for side in 1..=big {
                let s = starts(side, 0, 1);
                push(side, &s, &s);
            }
        }
        CubeFamilyMode::Dyadic | CubeFamilyMode::DyadicShifted => {
            for level in 0..=grid.depth() {
                let side = big >> level;
                let mut offsets = vec![0];
                if mode == CubeFamilyMode::DyadicShifted {
                    for off in [
                        (side as f64 / 3.0).round(),
                        (2.0 * side as f64 / 3.0).round(),
                    ] {
                        let off = off as i64;
                        if off % side != 0 && !offsets.contains(&off) {
                            offsets.push(off);
                        }
                    }
                }
                let axis1: &[i64] = if n == 1 { &[0] } else { &offsets };
                for &o0 in &offsets {
                    for &o1 in axis1 {
                        push(side, &starts(side, o0, side), &starts(side, o1, side));
                    }
                }
            }
        }
    }
    out
}

/// Cubes of the family contained in `q0`.
pub fn cube_family_within(grid: &GridSpec, mode: CubeFamilyMode, q0: &CellBox) -> Vec<CellBox> {
    cube_family(grid, mode)
        .into_iter()
        .filter(|q| q0.contains_box(q))
        .collect()
}

/// Per cell, the max of `values[j]` over cubes `j` containing it (0 if none).
fn sup_over_cubes(grid: &GridSpec, cubes: &[CellBox], values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0f64; grid.num_cells()];
    for (q, &v) in cubes.iter().zip(values) {
        for c in q.cells(grid) {
            if v > out[c] {
                out[c] = v;
            }
        }
    }
    out
}

fn same_grid(fs: &[&GridFunction]) -> Result<GridSpec> {
    let g = fs
        .first()
        .ok_or_else(|| Error::param("inputs", "at least one function required"))?
        .grid()
        .clone();
    if fs.iter().any(|f| f.grid() != &g) {
        return Err(Error::param("inputs", "functions live on different grids"));
    }
    Ok(g)
}

/// `sup_{Q ∋ x} ∏_i (⨍_Q |f_i|^r)^{1/r}` over the mode's family.
pub fn multilinear_maximal_r(
    fs: &[&GridFunction],
    r: f64,
    mode: CubeFamilyMode,
) -> Result<GridFunction> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::param("r", format!("must be positive, got {r}")));
    }
    let grid = same_grid(fs)?;
    let cubes = cube_family(&grid, mode);
    let values: Vec<f64> = cubes
        .par_iter()
        .map(|q| {
            let cells = q.cells(&grid);
            fs.iter()
                .map(|f| power_mean(f.values(), &cells, cells.len(), r))
                .product()
        })
        .collect();
    GridFunction::new(grid.clone(), sup_over_cubes(&grid, &cubes, &values))
}

/// `𝓜(f⃗)(x) = sup_{Q ∋ x} ∏_i ⨍_Q |f_i|`.
pub fn multilinear_maximal(fs: &[&GridFunction], mode: CubeFamilyMode) -> Result<GridFunction> {
    multilinear_maximal_r(fs, 1.0, mode)
}

/// `M_δ g(x) = (sup_{Q ∋ x} ⨍_Q |g|^δ)^{1/δ}`.
pub fn m_delta(g: &GridFunction, delta: f64, mode: CubeFamilyMode) -> Result<GridFunction> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::param(
            "delta",
            format!("must be positive, got {delta}"),
        ));
    }
    multilinear_maximal_r(&[g], delta, mode)
}

/// Evaluation context for truncated outputs `T(f⃗ χ_{3Q})` restricted to the
/// cells of `Q`, memoized by cube.
pub struct Truncations<'a> {
    op: &'a OperatorSpec,
    fs: Vec<&'a GridFunction>,
    /// Per slot, nonzero cells in cell order.
    nonzero: Vec<Vec<usize>>,
    cache: Mutex<HashMap<CellBox, Arc<Vec<f64>>>>,
}

impl<'a> Truncations<'a> {
    pub fn new(op: &'a OperatorSpec, fs: &[&'a GridFunction]) -> Result<Self> {
        if fs.len() != op.m() || fs.iter().any(|f| f.grid() != op.grid()) {
            return Err(Error::param(
                "inputs",
                "inputs must match the operator's arity and grid",
            ));
        }
        let nonzero = fs
            .iter()
            .map(|f| {
                f.values()
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        Ok(Truncations {
            op,
            fs: fs.to_vec(),
            nonzero,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn op(&self) -> &OperatorSpec {
        self.op
    }

    pub fn inputs(&self) -> &[&'a GridFunction] {
        &self.fs
    }

    /// Whether every slot keeps the same nonzero cells under truncation to `3q`
    /// and to `3outer`, which makes both truncated outputs bit-identical.
    fn same_truncation(&self, q: &CellBox, outer: Option<&CellBox>) -> bool {
        let grid = self.op.grid();
        let tq = triple_cube(grid, q).region;
        let to = outer.map(|o| triple_cube(grid, o).region);
        self.nonzero.iter().all(|cells| {
            cells.iter().all(|&c| {
                let in_outer = to.as_ref().is_none_or(|t| t.contains_cell(grid, c));
                !in_outer || tq.contains_cell(grid, c)
            })
        })
    }

    /// `T(f⃗ χ_{3q})` on the cells of `q`, in cell order.
    pub fn on_cube(&self, q: &CellBox) -> Result<Arc<Vec<f64>>> {
        if let Some(v) = self.cache.lock().unwrap().get(q) {
            return Ok(v.clone());
        }
        let cells = q.cells(self.op.grid());
        let v = Arc::new(apply_truncated_at(self.op, &self.fs, q, &cells)?);
        self.cache.lock().unwrap().insert(*q, v.clone());
        Ok(v)
    }

    /// `max_{ξ ∈ q} |base(ξ) − T(f⃗ χ_{3q})(ξ)|`, where `base` is indexed by cell
    /// and equals `T(f⃗ χ_{3 outer})` (or `Tf⃗` when `outer` is `None`).
    fn residual(&self, q: &CellBox, base: &[f64], outer: Option<&CellBox>) -> Result<f64> {
        if self.same_truncation(q, outer) {
            return Ok(0.0);
        }
        let cells = q.cells(self.op.grid());
        let tr = self.on_cube(q)?;
        Ok(cells
            .iter()
            .zip(tr.iter())
            .map(|(&c, &t)| (base[c] - t).abs())
            .fold(0.0, f64::max))
    }
}

fn per_cube<T: Send>(
    cubes: &[CellBox],
    f: impl Fn(&CellBox) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = cubes.par_iter().map(f).collect();
    results.into_iter().collect()
}

/// `M_T f⃗(x) = max_{Q ∋ x} max_{ξ ∈ Q} |Tf⃗(ξ) − T(f⃗ χ_{3Q})(ξ)|`.
pub fn grand_maximal(
    op: &OperatorSpec,
    fs: &[&GridFunction],
    mode: CubeFamilyMode,
) -> Result<GridFunction> {
    let ctx = Truncations::new(op, fs)?;
    grand_maximal_with(&ctx, mode)
}

pub fn grand_maximal_with(ctx: &Truncations<'_>, mode: CubeFamilyMode) -> Result<GridFunction> {
    let grid = ctx.op.grid();
    if ctx.op.kernel().is_zero() {
        return Ok(GridFunction::zeros(grid));
    }
    let full = apply(ctx.op, &ctx.fs)?;
    let cubes = cube_family(grid, mode);
    let values = per_cube(&cubes, |q| ctx.residual(q, full.values(), None))?;
    GridFunction::new(grid.clone(), sup_over_cubes(grid, &cubes, &values))
}

/// `M_{T,Q0} f⃗(x) = max_{Q ∋ x, Q ⊆ Q0} max_{ξ ∈ Q} |T(f⃗ χ_{3Q0})(ξ) − T(f⃗ χ_{3Q})(ξ)|`
/// for `x ∈ Q0`; cells outside `Q0` are 0.
pub fn local_grand_maximal(
    op: &OperatorSpec,
    fs: &[&GridFunction],
    q0: &CellBox,
    mode: CubeFamilyMode,
) -> Result<GridFunction> {
    let ctx = Truncations::new(op, fs)?;
    local_grand_maximal_with(&ctx, q0, mode)
}

pub fn local_grand_maximal_with(
    ctx: &Truncations<'_>,
    q0: &CellBox,
    mode: CubeFamilyMode,
) -> Result<GridFunction> {
    let grid = ctx.op.grid();
    if ctx.op.kernel().is_zero() {
        return Ok(GridFunction::zeros(grid));
    }
    let mut base = vec![0.0; grid.num_cells()];
    for (c, v) in q0.cells(grid).into_iter().zip(ctx.on_cube(q0)?.iter()) {
        base[c] = *v;
    }
    let cubes = cube_family_within(grid, mode, q0);
    let values = per_cube(&cubes, |q| ctx.residual(q, &base, Some(q0)))?;
    GridFunction::new(grid.clone(), sup_over_cubes(grid, &cubes, &values))
}

/// Outcome of a pointwise ratio check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseCheck {
    pub c_emp: f64,
    pub argmax_cell: Option<usize>,
    /// A cell has a vanishing denominator and a numerator above tolerance.
    pub infinite: bool,
}

/// `max_x num(x) / den(x)` over cells with `den > 0`; `den = 0` with
/// `num > tol` sets the infinite flag.
pub(crate) fn ratio_check(num: &[f64], den: &[f64], tol: f64) -> PointwiseCheck {
    let ratios: Vec<f64> = num
        .iter()
        .zip(den)
        .map(|(&a, &b)| if b > 0.0 { a.max(0.0) / b } else { 0.0 })
        .collect();
    let infinite = num.iter().zip(den).any(|(&a, &b)| b <= 0.0 && a > tol);
    let (cell, c_emp) = argmax(&ratios).unwrap_or((0, 0.0));
    PointwiseCheck {
        c_emp,
        argmax_cell: (c_emp > 0.0).then_some(cell),
        infinite,
    }
}

/// Relative tolerance for "numerator vanishes" decisions.
pub const VANISH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtBoundReport {
    pub c_emp: f64,
    pub argmax_cell: Option<usize>,
    pub infinite: bool,
    pub r: f64,
    /// `K_r` supplied for comparison with `c_emp`.
    pub k_r: f64,
}

/// `c_emp = max_x (M_T f⃗ − M_{r/4}(Tf⃗))_+ / (𝓜(|f⃗|^r))^{1/r}`.
pub fn mt_pointwise_bound_check(
    op: &OperatorSpec,
    fs: &[&GridFunction],
    r: f64,
    k_r: f64,
    mode: CubeFamilyMode,
) -> Result<MtBoundReport> {
    if !(r >= 1.0 && r.is_finite()) {
        return Err(Error::param(
            "r",
            format!("must be finite and ≥ 1, got {r}"),
        ));
    }
    let mt = grand_maximal(op, fs, mode)?;
    let tf = apply(op, fs)?;
    let md = m_delta(&tf, r / 4.0, mode)?;
    let mr = multilinear_maximal_r(fs, r, mode)?;
    let num: Vec<f64> = mt
        .values()
        .iter()
        .zip(md.values())
        .map(|(a, b)| (a - b).max(0.0))
        .collect();
    let tol = VANISH_TOL * mt.max_abs().max(tf.max_abs());
    let chk = ratio_check(&num, mr.values(), tol);
    Ok(MtBoundReport {
        c_emp: chk.c_emp,
        argmax_cell: chk.argmax_cell,
        infinite: chk.infinite,
        r,
        k_r,
    })
}
