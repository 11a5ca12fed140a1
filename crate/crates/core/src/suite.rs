//! Built-in kernel/input cases used by the `suite` experiments and the
//! acceptance checks: each case fixes an operator, inputs supported in an
//! interior root cube whose tripling stays inside the domain, and `r`.

use serde::{Deserialize, Serialize};

use crate::bank::{generate, InputSpec, Shape};
use crate::builder::{build_sparse_family, domination_constant, BuildOutput, DominationReport};
use crate::config::{cube_box, default_root};
use crate::error::Result;
use crate::grid::{DyadicCube, GridFunction, GridSpec};
use crate::kernel::{KernelSpec, Modulus};
use crate::maximal::{mt_pointwise_bound_check, CubeFamilyMode, MtBoundReport};
use crate::operator::OperatorSpec;
use crate::regularity::{hormander_constant, SamplePlan};
use crate::sparse::{carleson_sum, verify_witness_sparsity, SparsityReport};

#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub name: String,
    pub op: OperatorSpec,
    pub inputs: Vec<GridFunction>,
    pub root: DyadicCube,
    pub r: f64,
}

impl SuiteCase {
    pub fn refs(&self) -> Vec<&GridFunction> {
        self.inputs.iter().collect()
    }
}

/// Input of `shape` inside the root: `center` and `width` are relative to the root cube.
fn input(
    grid: &GridSpec,
    root: &DyadicCube,
    shape: Shape,
    rel: &[f64],
    width: f64,
    seed: u64,
) -> Result<GridFunction> {
    let bx = cube_box(grid, root);
    let side = bx.hi[0] - bx.lo[0];
    let center = (0..grid.n()).map(|a| bx.lo[a] + rel[a] * side).collect();
    let spec = InputSpec::new(shape, seed)
        .with_support(bx)
        .with_center(center, width * side);
    generate(grid, &spec, 0)
}

fn case(
    name: &str,
    kernel: KernelSpec,
    grid: GridSpec,
    inputs: &[(Shape, &[f64], f64)],
    r: f64,
) -> Result<SuiteCase> {
    let root = default_root(&grid);
    let fs = inputs
        .iter()
        .enumerate()
        .map(|(i, (shape, rel, w))| input(&grid, &root, *shape, rel, *w, 17 + i as u64))
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteCase {
        name: name.to_string(),
        op: OperatorSpec::new(kernel, grid)?,
        inputs: fs,
        root,
        r,
    })
}

/// Bilinear odd kernel with two offset Gaussian bumps on `[0,1)` at depth `depth`.
pub fn stability_case(depth: u32) -> Result<SuiteCase> {
    case(
        &format!("bilinear_odd/bumps/L{depth}"),
        KernelSpec::bilinear_odd(),
        GridSpec::unit(1, depth)?,
        &[(Shape::Gauss, &[0.35], 0.12), (Shape::Gauss, &[0.6], 0.12)],
        2.0,
    )
}

/// The built-in suite.
pub fn suite_cases() -> Result<Vec<SuiteCase>> {
    use Shape::*;
    let g7 = GridSpec::unit(1, 7)?;
    let g8 = GridSpec::new(1, 7, &[0.0], 8.0)?;
    let g2 = GridSpec::unit(2, 4)?;
    let half = Modulus::Power { c: 1.0, eps: 0.5 };
    let log = Modulus::Log { c: 1.0, eps: 1.0 };
    let anchor = [0.0, 0.0];
    let mid = [0.5, 0.5];
    Ok(vec![
        stability_case(7)?,
        case(
            "bilinear_odd/indicators",
            KernelSpec::bilinear_odd(),
            g7.clone(),
            &[(Indicator, &[0.3], 0.15), (Indicator, &[0.7], 0.2)],
            2.0,
        )?,
        case(
            "bilinear_odd/spikes",
            KernelSpec::bilinear_odd(),
            g7.clone(),
            &[(Spike, &[0.2], 0.1), (Spike, &[0.8], 0.1)],
            1.0,
        )?,
        case(
            "bilinear_odd/rademacher",
            KernelSpec::bilinear_odd(),
            g7.clone(),
            &[(Rademacher, &[0.5], 0.5), (Gauss, &[0.5], 0.2)],
            3.0,
        )?,
        case(
            "hilbert/gauss",
            KernelSpec::named(1, "hilbert")?,
            g7.clone(),
            &[(Gauss, &[0.4], 0.1)],
            1.0,
        )?,
        case(
            "hilbert/indicator",
            KernelSpec::named(1, "hilbert")?,
            g7.clone(),
            &[(Indicator, &[0.5], 0.25)],
            2.0,
        )?,
        case(
            "dini_power/m1",
            KernelSpec::dini(1, half, 1.0, anchor)?,
            g7.clone(),
            &[(Gauss, &[0.5], 0.15)],
            2.0,
        )?,
        case(
            "dini_power/m2",
            KernelSpec::dini(2, half, 1.0, anchor)?,
            g7.clone(),
            &[(Gauss, &[0.3], 0.1), (Indicator, &[0.6], 0.2)],
            2.0,
        )?,
        case(
            "dini_log/m2",
            KernelSpec::dini(2, log, 1.0, anchor)?,
            g7.clone(),
            &[(Indicator, &[0.5], 0.3), (Gauss, &[0.5], 0.2)],
            1.5,
        )?,
        case(
            "zero/m2",
            KernelSpec::zero(2),
            g7.clone(),
            &[(Gauss, &[0.5], 0.2), (Gauss, &[0.4], 0.2)],
            2.0,
        )?,
        case(
            "y_only/rademacher",
            KernelSpec::named(1, "y_only")?,
            g7.clone(),
            &[(Rademacher, &[0.5], 0.5)],
            2.0,
        )?,
        case(
            "mpt/gauss",
            KernelSpec::mpt(1.0, 2.0)?,
            g8,
            &[(Gauss, &[0.5], 0.2)],
            2.0,
        )?,
        case(
            "riesz/2d",
            KernelSpec::named(1, "riesz")?,
            g2.clone(),
            &[(Gauss, &mid, 0.2)],
            2.0,
        )?,
        case(
            "dini_power/2d",
            KernelSpec::dini(2, half, 1.0, anchor)?,
            g2,
            &[(Gauss, &mid, 0.25), (Indicator, &[0.3, 0.6], 0.2)],
            2.0,
        )?,
    ])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub name: String,
    pub entries: usize,
    pub levels: usize,
    pub sparsity: SparsityReport,
    pub node_violations: Vec<String>,
    pub carleson: f64,
    pub max_tau: f64,
    pub domination: DominationReport,
    pub mt: MtBoundReport,
}

/// Coarse `K_r` plan used to annotate chain-bound reports.
pub fn coarse_plan(grid: &GridSpec) -> SamplePlan {
    let top = grid.depth().min(if grid.n() == 1 { 4 } else { 3 });
    SamplePlan::dyadic(2.min(top), top, 1)
}

/// Builds, verifies and measures one case.
pub fn run_case(case: &SuiteCase, mode: CubeFamilyMode) -> Result<(BuildOutput, CaseOutcome)> {
    let fs = case.refs();
    let grid = case.op.grid();
    let out = build_sparse_family(&case.op, &fs, &case.root, case.r, mode)?;
    let sparsity = verify_witness_sparsity(&out.family, grid, 0.5)?;
    let node_violations = out
        .stats
        .iter()
        .flat_map(|s| s.violations(grid.n()))
        .collect();
    let domination = domination_constant(&case.op, &fs, &out.family, case.r)?;
    let k_r = hormander_constant(case.op.kernel(), grid, case.r, &coarse_plan(grid))?.value;
    let mt = mt_pointwise_bound_check(&case.op, &fs, case.r, k_r, mode)?;
    let mut levels: Vec<u32> = out.family.entries.iter().map(|e| e.level).collect();
    levels.dedup();
    let outcome = CaseOutcome {
        name: case.name.clone(),
        entries: out.family.len(),
        levels: levels.len(),
        sparsity,
        node_violations,
        carleson: carleson_sum(&out.family),
        max_tau: out.max_tau,
        domination,
        mt,
    };
    Ok((out, outcome))
}
