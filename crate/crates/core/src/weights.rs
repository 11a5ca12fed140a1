//! Multilinear Muckenhoupt characteristic `[w⃗]_{A_{P⃗/r}}` and empirical
//! weighted norm ratios. With `1/p = Σ 1/p_i` and `v = ∏ w_i^{p/p_i}`,
//!
//! `[w⃗] = sup_Q (⨍_Q v) ∏_i (⨍_Q w_i^{-r/(p_i-r)})^{p(p_i-r)/(p_i r)}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::InputTuple;
use crate::error::{Error, Result};
use crate::grid::{power_mean, GridFunction, GridSpec};
use crate::maximal::{cube_family, CubeFamilyMode};
use crate::operator::{apply, harmonic_exponent, OperatorSpec};

/// Lower clamp applied to power weights.
pub const WEIGHT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightTuple {
    weights: Vec<GridFunction>,
    ps: Vec<f64>,
    r: f64,
}

impl WeightTuple {
    pub fn new(weights: Vec<GridFunction>, ps: Vec<f64>, r: f64) -> Result<Self> {
        if !(r >= 1.0 && r.is_finite()) {
            return Err(Error::param(
                "r",
                format!("must be finite and ≥ 1, got {r}"),
            ));
        }
        if weights.is_empty() || weights.len() != ps.len() {
            return Err(Error::param(
                "p",
                "one exponent per weight, at least one weight",
            ));
        }
        if let Some(p) = ps.iter().find(|p| !(**p > r && p.is_finite())) {
            return Err(Error::param(
                "p_i",
                format!("p_i must exceed r = {r}, got {p}"),
            ));
        }
        let grid = weights[0].grid();
        for (i, w) in weights.iter().enumerate() {
            if w.grid() != grid {
                return Err(Error::param("weights", "weights live on different grids"));
            }
            if let Some(c) = w.values().iter().position(|v| !(*v > 0.0)) {
                return Err(Error::param(
                    "weights",
                    format!("weight {i} is not strictly positive at cell {c}"),
                ));
            }
        }
        Ok(WeightTuple { weights, ps, r })
    }

    pub fn grid(&self) -> &GridSpec {
        self.weights[0].grid()
    }

    pub fn weights(&self) -> &[GridFunction] {
        &self.weights
    }

    pub fn ps(&self) -> &[f64] {
        &self.ps
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// `p` with `1/p = Σ 1/p_i`.
    pub fn p(&self) -> f64 {
        harmonic_exponent(&self.ps)
    }

    /// `v = ∏ w_i^{p/p_i}`.
    pub fn v(&self) -> GridFunction {
        let p = self.p();
        let vals = (0..self.grid().num_cells())
            .map(|c| {
                self.weights
                    .iter()
                    .zip(&self.ps)
                    .map(|(w, pi)| w.get(c).powf(p / pi))
                    .product()
            })
            .collect();
        GridFunction::new(self.grid().clone(), vals).expect("positive weights give finite v")
    }

    /// `max{1, max_i (p_i/r)'/p}` with `(p_i/r)' = p_i/(p_i − r)`.
    pub fn bound_exponent(&self) -> f64 {
        let p = self.p();
        self.ps
            .iter()
            .map(|pi| pi / (pi - self.r) / p)
            .fold(1.0, f64::max)
    }
}

/// `[w⃗]_{A_{P⃗/r}}` maximized over the mode's cube family.
pub fn vec_ap_characteristic(w: &WeightTuple, mode: CubeFamilyMode) -> Result<f64> {
    let grid = w.grid();
    let p = w.p();
    let v = w.v();
    let duals: Vec<(GridFunction, f64)> = w
        .weights
        .iter()
        .zip(&w.ps)
        .map(|(wi, &pi)| {
            let e = -w.r / (pi - w.r);
            let dual = GridFunction::new(
                grid.clone(),
                wi.values().iter().map(|x| x.powf(e)).collect(),
            )?;
            Ok((dual, p * (pi - w.r) / (pi * w.r)))
        })
        .collect::<Result<_>>()?;
    let cubes = cube_family(grid, mode);
    let values: Vec<f64> = cubes
        .par_iter()
        .map(|q| {
            let cells = q.cells(grid);
            let mut val = power_mean(v.values(), &cells, cells.len(), 1.0);
            for (d, ex) in &duals {
                val *= power_mean(d.values(), &cells, cells.len(), 1.0).powf(*ex);
            }
            val
        })
        .collect();
    Ok(values.into_iter().fold(0.0, f64::max))
}

/// `(Σ |g|^p w h^n)^{1/p}`.
pub fn weighted_norm(g: &GridFunction, w: &GridFunction, p: f64) -> f64 {
    let s: f64 = g
        .values()
        .iter()
        .zip(w.values())
        .map(|(x, wx)| x.abs().powf(p) * wx)
        .sum();
    (s * g.grid().cell_measure()).powf(1.0 / p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedReport {
    #[serde(rename = "char")]
    pub characteristic: f64,
    pub exponent: f64,
    /// `char^exponent`, shown next to the ratios; the operator constant is unknown.
    pub bound: f64,
    pub max_ratio: f64,
    pub ratios: Vec<f64>,
}

/// Per input, `‖Tf⃗‖_{L^p(v)} / ∏ ‖f_i‖_{L^{p_i}(w_i)}`.
pub fn weighted_norm_ratio(
    op: &OperatorSpec,
    w: &WeightTuple,
    bank: &[InputTuple],
    mode: CubeFamilyMode,
) -> Result<WeightedReport> {
    if w.weights.len() != op.m() || w.grid() != op.grid() {
        return Err(Error::param(
            "weights",
            "weight tuple must match the operator's arity and grid",
        ));
    }
    let v = w.v();
    let p = w.p();
    let mut ratios = Vec::with_capacity(bank.len());
    for input in bank {
        let fs = input.refs();
        let mut denom = 1.0;
        for ((f, wi), &pi) in fs.iter().zip(&w.weights).zip(&w.ps) {
            denom *= weighted_norm(f, wi, pi);
        }
        if denom == 0.0 {
            return Err(Error::param(
                "bank",
                format!("input `{}` has zero weighted norm", input.label),
            ));
        }
        let out = apply(op, &fs)?;
        ratios.push(weighted_norm(&out, &v, p) / denom);
    }
    let characteristic = vec_ap_characteristic(w, mode)?;
    let exponent = w.bound_exponent();
    Ok(WeightedReport {
        characteristic,
        exponent,
        bound: characteristic.powf(exponent),
        max_ratio: ratios.iter().copied().fold(0.0, f64::max),
        ratios,
    })
}

/// Weight descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    /// `max(scale · |x − center|^a, 1e−8)`.
    Power {
        center: Vec<f64>,
        a: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Constant {
        value: f64,
    },
    /// Explicit per-cell values.
    Custom {
        values: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl WeightSpec {
    pub fn build(&self, grid: &GridSpec) -> Result<GridFunction> {
        match self {
            WeightSpec::Power { center, a, scale } => {
                if center.len() != grid.n() || !a.is_finite() || !(*scale > 0.0) {
                    return Err(Error::param(
                        "weight",
                        "power weight needs an n-point center, finite a and scale > 0",
                    ));
                }
                GridFunction::from_fn(grid, |x| {
                    let d = (0..grid.n())
                        .map(|i| (x[i] - center[i]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    (scale * d.powf(*a)).max(WEIGHT_FLOOR)
                })
            }
            WeightSpec::Constant { value } => {
                if !(*value > 0.0 && value.is_finite()) {
                    return Err(Error::param("weight", "constant weight must be positive"));
                }
                Ok(GridFunction::constant(grid, *value))
            }
            WeightSpec::Custom { values } => GridFunction::new(grid.clone(), values.clone()),
        }
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}
