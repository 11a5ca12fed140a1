//! Kernel regularity functionals: the annular `L^r`-Hörmander constant
//! `K_r`, the Hölder-type annular constant (H2), the Dini norm of a
//! modulus and the pointwise modulus profile `ω^{x,z}`.
//!
//! Suprema over all cubes and points are replaced by maxima over an explicit
//! [`SamplePlan`], so every reported value is a lower bound of the true
//! supremum. Integrals are midpoint sums over grid cells; cells where the
//! kernel is singular or non-finite are skipped and counted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellBox, DyadicCube, GridSpec, Point};
use crate::kernel::{dist, KernelSpec, Modulus};

/// Most `(x, z)` pairs sampled inside one cube.
pub const MAX_PAIRS_PER_CUBE: usize = 16;

/// One sampled configuration: a cube `Q` and two points of `½Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub cube: CubeRef,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

/// A cube by cell coordinates: corner and side in cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeRef {
    pub corner: Vec<i64>,
    pub side: i64,
}

impl CubeRef {
    pub fn from_box(b: &CellBox) -> Self {
        CubeRef {
            corner: b.lo[..b.n].to_vec(),
            side: b.extent(0),
        }
    }

    pub fn to_box(&self) -> CellBox {
        let mut c = [0; 2];
        c[..self.corner.len()].copy_from_slice(&self.corner);
        CellBox::cube(self.corner.len(), c, self.side)
    }
}

/// Which `(Q, x, z)` configurations an estimator visits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplePlan {
    /// Every dyadic cube with level in `min_level..=max_level`; `x, z` range
    /// over centers of the `2^depth`-per-axis subdivision of `½Q`, at most
    /// [`MAX_PAIRS_PER_CUBE`] unordered pairs per cube.
    Dyadic {
        min_level: u32,
        max_level: u32,
        depth: u32,
    },
    Explicit {
        configs: Vec<SampleConfig>,
    },
}

impl SamplePlan {
    pub fn dyadic(min_level: u32, max_level: u32, depth: u32) -> Self {
        SamplePlan::Dyadic {
            min_level,
            max_level,
            depth,
        }
    }

    pub fn configs(&self, grid: &GridSpec) -> Result<Vec<SampleConfig>> {
        let configs = match self {
            SamplePlan::Explicit { configs } => configs.clone(),
            SamplePlan::Dyadic {
                min_level,
                max_level,
                depth,
            } => {
                if min_level > max_level || *max_level > grid.depth() {
                    return Err(Error::param(
                        "sampling",
                        format!(
                            "levels {min_level}..={max_level} invalid for depth {}",
                            grid.depth()
                        ),
                    ));
                }
                if *depth > 4 {
                    return Err(Error::param("sampling.depth", "at most 4"));
                }
                let mut out = Vec::new();
                for level in *min_level..=*max_level {
                    for q in dyadic_cubes_at(grid, level) {
                        let b = q.to_box(grid);
                        let pts = half_cube_points(grid, &b, *depth);
                        for (i, j) in select_pairs(pts.len()) {
                            out.push(SampleConfig {
                                cube: CubeRef::from_box(&b),
                                x: pts[i][..grid.n()].to_vec(),
                                z: pts[j][..grid.n()].to_vec(),
                            });
                        }
                    }
                }
                out
            }
        };
        if configs.is_empty() {
            return Err(Error::EmptySamplePlan);
        }
        Ok(configs)
    }
}

pub(crate) fn dyadic_cubes_at(grid: &GridSpec, level: u32) -> Vec<DyadicCube> {
    let k = 1u64 << level;
    if grid.n() == 1 {
        (0..k)
            .map(|i| DyadicCube {
                level,
                index: vec![i],
            })
            .collect()
    } else {
        (0..k)
            .flat_map(|i| {
                (0..k).map(move |j| DyadicCube {
                    level,
                    index: vec![i, j],
                })
            })
            .collect()
    }
}

/// Centers of the `2^depth`-per-axis subcubes of `½Q`.
fn half_cube_points(grid: &GridSpec, q: &CellBox, depth: u32) -> Vec<Point> {
    let c = q.physical_center(grid);
    let half = 0.5 * q.physical_side(grid);
    let k = 1usize << depth;
    let step = half / k as f64;
    let offs: Vec<f64> = (0..k)
        .map(|i| -0.5 * half + (i as f64 + 0.5) * step)
        .collect();
    if grid.n() == 1 {
        offs.iter().map(|o| [c[0] + o, 0.0]).collect()
    } else {
        offs.iter()
            .flat_map(|o0| offs.iter().map(move |o1| [c[0] + o0, c[1] + o1]))
            .collect()
    }
}

/// Unordered pairs `i < j` in lexicographic order, thinned by a fixed
/// stride to at most [`MAX_PAIRS_PER_CUBE`].
fn select_pairs(count: usize) -> Vec<(usize, usize)> {
    let all: Vec<(usize, usize)> = (0..count)
        .flat_map(|i| (i + 1..count).map(move |j| (i, j)))
        .collect();
    if all.len() <= MAX_PAIRS_PER_CUBE {
        return all;
    }
    let stride = all.len().div_ceil(MAX_PAIRS_PER_CUBE);
    all.into_iter().step_by(stride).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub cubes: usize,
    pub pairs: usize,
    /// Configurations skipped because `x = z`.
    pub coincident: usize,
}

/// Result of a sampled supremum estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub value: f64,
    /// Per-scale terms of the maximizing configuration; entry `k - 1` is scale `k`.
    pub terms: Vec<f64>,
    pub k_max: u32,
    /// The kernel has mass outside the domain that the sums could not see.
    pub tail_flag: bool,
    /// Kernel evaluations skipped as singular or non-finite, over all configurations.
    pub skipped: u64,
    pub samples: SampleCounts,
    /// Values are maxima over sampled configurations, i.e. lower bounds.
    pub lower_bound: bool,
    pub argmax: Option<SampleConfig>,
}

impl EstimateReport {
    fn zero(samples: SampleCounts) -> Self {
        EstimateReport {
            value: 0.0,
            terms: Vec::new(),
            k_max: 0,
            tail_flag: false,
            skipped: 0,
            samples,
            lower_bound: true,
            argmax: None,
        }
    }
}

/// Conjugate exponent; `None` stands for `r' = ∞` (`r = 1`).
fn conjugate(r: f64) -> Option<f64> {
    if r == 1.0 {
        None
    } else {
        Some(r / (r - 1.0))
    }
}

fn to_point(v: &[f64]) -> Point {
    let mut p = [0.0; 2];
    p[..v.len()].copy_from_slice(v);
    p
}

/// Cells with their center and smallest dilation index `k` with `y ∈ 2^k Q`.
struct ShellCells {
    centers: Vec<Point>,
    shell: Vec<u32>,
}

/// Half-open membership: `y ∈ 2^k Q` iff `−2^k R ≤ y_a − c_a < 2^k R` on every axis.
fn dilation_index(n: usize, y: &Point, c: &Point, half: f64) -> u32 {
    let mut k = 0u32;
    loop {
        let r = half * (1u64 << k) as f64;
        if (0..n).all(|a| -r <= y[a] - c[a] && y[a] - c[a] < r) {
            return k;
        }
        k += 1;
    }
}

/// Cells whose centers can carry kernel mass for the pair `(x, z)`.
fn candidate_cells(grid: &GridSpec, kernel: &KernelSpec, x: &Point, z: &Point) -> Vec<usize> {
    match (grid.n(), kernel.m(), kernel.offset_support()) {
        (1, 1, Some((lo, hi))) => {
            let ylo = x[0].min(z[0]) - hi;
            let yhi = x[0].max(z[0]) - lo;
            let h = grid.cell_size();
            let first = (grid.cell_coordinate(0, ylo) - 0.5).floor().max(0.0) as usize;
            let last =
                ((grid.cell_coordinate(0, yhi) + 0.5).ceil() as usize).min(grid.cells_per_side());
            let _ = h;
            (first..last).collect()
        }
        _ => (0..grid.num_cells()).collect(),
    }
}

/// Whether the kernel's `y`-support for `(x, z)` lies inside the domain.
fn support_inside(grid: &GridSpec, kernel: &KernelSpec, x: &Point, z: &Point) -> bool {
    if kernel.is_zero() {
        return true;
    }
    match (grid.n(), kernel.m(), kernel.offset_support()) {
        (1, 1, Some((lo, hi))) => {
            let o = grid.origin()[0];
            x[0].min(z[0]) - hi >= o && x[0].max(z[0]) - lo <= o + grid.side()
        }
        _ => false,
    }
}

fn shell_cells(grid: &GridSpec, cells: &[usize], c: &Point, half: f64) -> ShellCells {
    let n = grid.n();
    let centers: Vec<Point> = cells.iter().map(|&i| grid.cell_center(i)).collect();
    let shell = centers
        .iter()
        .map(|y| dilation_index(n, y, c, half))
        .collect();
    ShellCells { centers, shell }
}

/// Per-configuration accumulation of `|K(x,·) − K(z,·)|^{r'}` (or its max)
/// into buckets keyed by shell indices.
struct Accumulator {
    sums: Vec<f64>,
    skipped: u64,
}

fn accumulate(
    kernel: &KernelSpec,
    n: usize,
    x: &Point,
    z: &Point,
    cells: &ShellCells,
    rp: Option<f64>,
    bucket_of: impl Fn(&[u32]) -> Option<usize>,
    buckets: usize,
) -> Accumulator {
    let mut sums = vec![0.0; buckets];
    let mut skipped = 0u64;
    let mut add = |b: usize, d: f64| match rp {
        Some(p) => sums[b] += if p == 2.0 { d * d } else { d.powf(p) },
        None => {
            if d > sums[b] {
                sums[b] = d
            }
        }
    };
    let len = cells.centers.len();
    match kernel.m() {
        1 => {
            for i in 0..len {
                let Some(b) = bucket_of(&[cells.shell[i]]) else {
                    continue;
                };
                let ys = [cells.centers[i]];
                match (
                    kernel.eval(n, x, &ys).finite(),
                    kernel.eval(n, z, &ys).finite(),
                ) {
                    (Some(a), Some(c)) => add(b, (a - c).abs()),
                    _ => skipped += 1,
                }
            }
        }
        _ => {
            for i in 0..len {
                for j in 0..len {
                    let Some(b) = bucket_of(&[cells.shell[i], cells.shell[j]]) else {
                        continue;
                    };
                    let ys = [cells.centers[i], cells.centers[j]];
                    match (
                        kernel.eval(n, x, &ys).finite(),
                        kernel.eval(n, z, &ys).finite(),
                    ) {
                        (Some(a), Some(c)) => add(b, (a - c).abs()),
                        _ => skipped += 1,
                    }
                }
            }
        }
    }
    Accumulator { sums, skipped }
}

fn check_r(r: f64) -> Result<()> {
    if !(r >= 1.0 && r.is_finite()) {
        return Err(Error::param(
            "r",
            format!("must be finite and ≥ 1, got {r}"),
        ));
    }
    Ok(())
}

struct ConfigResult {
    value: f64,
    terms: Vec<f64>,
    skipped: u64,
    tail: bool,
    coincident: bool,
}

fn counts(configs: &[SampleConfig], coincident: usize) -> SampleCounts {
    let mut cubes: Vec<&CubeRef> = configs.iter().map(|c| &c.cube).collect();
    cubes.dedup();
    SampleCounts {
        cubes: cubes.len(),
        pairs: configs.len(),
        coincident,
    }
}

fn reduce(configs: Vec<SampleConfig>, results: Vec<ConfigResult>) -> EstimateReport {
    let coincident = results.iter().filter(|r| r.coincident).count();
    let mut report = EstimateReport::zero(counts(&configs, coincident));
    report.skipped = results.iter().map(|r| r.skipped).sum();
    let mut best: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        if r.coincident {
            continue;
        }
        match best {
            Some(b) if !(r.value > results[b].value) => {}
            _ => best = Some(i),
        }
    }
    if let Some(b) = best {
        let r = &results[b];
        report.value = r.value;
        report.terms = r.terms.clone();
        report.k_max = r.terms.len() as u32;
        report.tail_flag = r.tail;
        report.argmax = Some(configs[b].clone());
    }
    report
}

/// Sampled `K_r`: the max over configurations of
/// `Σ_{k≥1} |2^k Q|^{m/r} (∫_{(2^kQ)^m ∖ (2^{k−1}Q)^m} |K(x,·) − K(z,·)|^{r'})^{1/r'}`,
/// with the inner integral replaced by a max over cells when `r = 1`.
pub fn hormander_constant(
    kernel: &KernelSpec,
    grid: &GridSpec,
    r: f64,
    plan: &SamplePlan,
) -> Result<EstimateReport> {
    check_r(r)?;
    kernel.validate_for(grid)?;
    let configs = plan.configs(grid)?;
    let n = grid.n();
    let m = kernel.m();
    let rp = conjugate(r);
    let cell_vol = grid.cell_measure().powi(m as i32);
    let results: Vec<ConfigResult> = configs
        .par_iter()
        .map(|cfg| {
            let q = cfg.cube.to_box();
            let c = q.physical_center(grid);
            let half = 0.5 * q.physical_side(grid);
            let side = q.physical_side(grid);
            let (x, z) = (to_point(&cfg.x), to_point(&cfg.z));
            let cells = candidate_cells(grid, kernel, &x, &z);
            let sc = shell_cells(grid, &cells, &c, half);
            let kmax = sc.shell.iter().copied().max().unwrap_or(0) as usize;
            let acc = accumulate(
                kernel,
                n,
                &x,
                &z,
                &sc,
                rp,
                |ks| {
                    let k = *ks.iter().max().unwrap() as usize;
                    (k >= 1).then(|| k - 1)
                },
                kmax,
            );
            let terms: Vec<f64> = acc
                .sums
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    let k = i as i32 + 1;
                    let dil = (side * 2f64.powi(k)).powi(n as i32);
                    match rp {
                        Some(p) => dil.powf(m as f64 / r) * (s * cell_vol).powf(1.0 / p),
                        None => dil.powi(m as i32) * s,
                    }
                })
                .collect();
            let terms = trim_trailing_zeros(terms);
            ConfigResult {
                value: terms.iter().fold(0.0, |a, b| a + b),
                terms,
                skipped: acc.skipped,
                tail: !support_inside(grid, kernel, &x, &z),
                coincident: false,
            }
        })
        .collect();
    Ok(reduce(configs, results))
}

fn trim_trailing_zeros(mut v: Vec<f64>) -> Vec<f64> {
    while v.last() == Some(&0.0) {
        v.pop();
    }
    v
}

/// Sampled (H2) constant: the max over configurations and shell tuples
/// `j⃗ ≠ 0⃗` of
/// `(∫_{S_{j_m}(Q)×⋯×S_{j_1}(Q)} |K(x,·) − K(z,·)|^{r'})^{1/r'} · |Q|^{mδ/n} 2^{mδ j_0} / |x − z|^{m(δ − n/r)}`.
/// `terms[j_0 − 1]` holds the largest value with that `j_0` for the maximizing configuration.
pub fn h2_constant(
    kernel: &KernelSpec,
    grid: &GridSpec,
    r: f64,
    delta: f64,
    plan: &SamplePlan,
) -> Result<EstimateReport> {
    check_r(r)?;
    kernel.validate_for(grid)?;
    let n = grid.n();
    if !(delta > n as f64 / r) || !delta.is_finite() {
        return Err(Error::param(
            "delta",
            format!("δ = {delta} must exceed n/r = {}", n as f64 / r),
        ));
    }
    let configs = plan.configs(grid)?;
    let m = kernel.m();
    let rp = conjugate(r);
    let cell_vol = grid.cell_measure().powi(m as i32);
    let results: Vec<ConfigResult> = configs
        .par_iter()
        .map(|cfg| {
            let (x, z) = (to_point(&cfg.x), to_point(&cfg.z));
            let sep = dist(n, &x, &z);
            if sep == 0.0 {
                return ConfigResult {
                    value: 0.0,
                    terms: Vec::new(),
                    skipped: 0,
                    tail: false,
                    coincident: true,
                };
            }
            let q = cfg.cube.to_box();
            let c = q.physical_center(grid);
            let side = q.physical_side(grid);
            let cells = candidate_cells(grid, kernel, &x, &z);
            let sc = shell_cells(grid, &cells, &c, 0.5 * side);
            let jmax = sc.shell.iter().copied().max().unwrap_or(0) as usize;
            let width = jmax + 1;
            let buckets = width.pow(m as u32);
            let acc = accumulate(
                kernel,
                n,
                &x,
                &z,
                &sc,
                rp,
                |js| {
                    let b = js.iter().fold(0usize, |b, &j| b * width + j as usize);
                    (b != 0).then_some(b)
                },
                buckets,
            );
            let q_meas = side.powi(n as i32);
            let scale = q_meas.powf(m as f64 * delta / n as f64)
                / sep.powf(m as f64 * (delta - n as f64 / r));
            let mut terms = vec![0.0; jmax];
            for (b, &s) in acc.sums.iter().enumerate().skip(1) {
                let mut rest = b;
                let mut j0 = 0;
                for _ in 0..m {
                    j0 = j0.max(rest % width);
                    rest /= width;
                }
                let integral = match rp {
                    Some(p) => (s * cell_vol).powf(1.0 / p),
                    None => s,
                };
                let v = integral * scale * 2f64.powf(m as f64 * delta * j0 as f64);
                if v > terms[j0 - 1] {
                    terms[j0 - 1] = v;
                }
            }
            let terms = trim_trailing_zeros(terms);
            ConfigResult {
                value: terms.iter().copied().fold(0.0, f64::max),
                terms,
                skipped: acc.skipped,
                tail: !support_inside(grid, kernel, &x, &z),
                coincident: false,
            }
        })
        .collect();
    Ok(reduce(configs, results))
}

/// `ω^{x,z}(t) = sup { |K(x,y⃗) − K(z,y⃗)| · S^{mn} : t/2 ≤ |x−z|/S ≤ t }`,
/// `S = Σ_i |x − y_i|`, over grid-cell tuples `y⃗`; an empty shell gives 0.
pub fn omega_profile(
    kernel: &KernelSpec,
    grid: &GridSpec,
    x: &[f64],
    z: &[f64],
    t_grid: &[f64],
) -> Result<Vec<f64>> {
    kernel.validate_for(grid)?;
    let n = grid.n();
    let (x, z) = (to_point(x), to_point(z));
    let sep = dist(n, &x, &z);
    if sep == 0.0 {
        return Err(Error::param("x, z", "points must differ"));
    }
    if let Some(t) = t_grid.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::param("t", format!("{t} not in (0, 1]")));
    }
    let m = kernel.m();
    let power = (m * n) as i32;
    let centers: Vec<Point> = (0..grid.num_cells()).map(|i| grid.cell_center(i)).collect();
    let mut values: Vec<(f64, f64)> = Vec::new();
    let mut push = |ys: &[Point]| {
        let s: f64 = ys.iter().map(|y| dist(n, &x, y)).sum();
        if s == 0.0 {
            return;
        }
        if let (Some(a), Some(b)) = (
            kernel.eval(n, &x, ys).finite(),
            kernel.eval(n, &z, ys).finite(),
        ) {
            values.push((sep / s, (a - b).abs() * s.powi(power)));
        }
    };
    if m == 1 {
        for y in &centers {
            push(&[*y]);
        }
    } else {
        for y1 in &centers {
            for y2 in &centers {
                push(&[*y1, *y2]);
            }
        }
    }
    Ok(t_grid
        .iter()
        .map(|&t| {
            values
                .iter()
                .filter(|(ratio, _)| t / 2.0 <= *ratio && *ratio <= t)
                .fold(0.0_f64, |acc, &(_, v)| acc.max(v))
        })
        .collect())
}

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// `∫_{2^{-k-1}}^{2^{-k}} ω(t) dt/t = ∫_{k ln 2}^{(k+1) ln 2} ω(e^{-u}) du` by
/// 8-point Gauss–Legendre; `omega_log(u) = ω(e^{-u})`.
fn dyadic_piece(omega_log: &dyn Fn(f64) -> f64, k: u32) -> f64 {
    let half = 0.5 * std::f64::consts::LN_2;
    let mid = (k as f64 + 0.5) * std::f64::consts::LN_2;
    let mut s = 0.0;
    for (x, w) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
        s += w * (omega_log(mid - half * x) + omega_log(mid + half * x));
    }
    s * half
}

/// Dyadic pieces past which a built-in modulus is declared not Dini.
pub const DINI_MAX_PIECES: u32 = 1 << 20;

/// Dyadic pieces available to a closure in `t` before `2^{-k}` underflows.
pub const DINI_MAX_PIECES_FN: u32 = 1074;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiniReport {
    pub value: f64,
    /// Number of dyadic pieces summed numerically.
    pub pieces: u32,
    /// Closed-form remainder added for `∫_0^{2^{-pieces}}`.
    pub tail: f64,
}

/// `∫_0^1 ω(t) dt/t` for a built-in modulus: dyadic pieces are summed until
/// `ω(2^{-K}) · ln 2 < 10^{-6} ·` running sum, then the remainder below
/// `2^{-K}` is added in closed form.
pub fn dini_norm(modulus: &Modulus) -> Result<f64> {
    Ok(dini_quadrature(modulus)?.value)
}

pub fn dini_quadrature(modulus: &Modulus) -> Result<DiniReport> {
    modulus.validate()?;
    let omega_log = |u: f64| modulus.eval_log(u);
    let (sum, pieces) = dyadic_sum(&omega_log, 1e-6, DINI_MAX_PIECES)?;
    let u_floor = pieces as f64 * std::f64::consts::LN_2;
    let tail = match *modulus {
        Modulus::Power { c, eps } => c * (-eps * u_floor).exp() / eps,
        Modulus::Log { c, eps } => c * (1.0 + u_floor).powf(-eps) / eps,
    };
    Ok(DiniReport {
        value: sum + tail,
        pieces,
        tail,
    })
}

/// `∫_0^1 ω(t) dt/t` for an arbitrary modulus, without a closed-form tail:
/// pieces are summed until `ω(2^{-K}) · ln 2 < rel_tol ·` running sum.
/// Moduli whose tail is still visible at `2^{-1074}` are rejected.
pub fn dini_norm_fn(omega: &dyn Fn(f64) -> f64, rel_tol: f64) -> Result<f64> {
    let w1 = omega(1.0);
    if !(w1.is_finite() && w1 >= 0.0) {
        return Err(Error::param(
            "modulus",
            "ω(1) must be finite and nonnegative",
        ));
    }
    let omega_log = |u: f64| omega((-u).exp());
    Ok(dyadic_sum(&omega_log, rel_tol, DINI_MAX_PIECES_FN)?.0)
}

fn dyadic_sum(omega_log: &dyn Fn(f64) -> f64, rel_tol: f64, cap: u32) -> Result<(f64, u32)> {
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    for k in 0..cap {
        sum += dyadic_piece(omega_log, k);
        let w = omega_log((k + 1) as f64 * std::f64::consts::LN_2);
        if !(w.is_finite() && w >= 0.0) || w > prev * (1.0 + 1e-12) {
            return Err(Error::NotDini(format!(
                "ω must be finite, nonnegative and nondecreasing; fails near t = 2^-{}",
                k + 1
            )));
        }
        prev = w;
        if w * std::f64::consts::LN_2 < rel_tol * sum || (w == 0.0 && sum == 0.0) {
            return Ok((sum, k + 1));
        }
    }
    Err(Error::NotDini(format!(
        "tail ω(2^-k) has not become negligible after {cap} dyadic pieces"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::CustomKernel;

    fn grid8(depth: u32) -> GridSpec {
        GridSpec::new(1, depth, &[0.0], 8.0).unwrap()
    }

    #[test]
    fn pair_selection_is_capped() {
        assert_eq!(select_pairs(4).len(), 6);
        assert!(select_pairs(16).len() <= MAX_PAIRS_PER_CUBE);
        assert!(select_pairs(8).len() <= MAX_PAIRS_PER_CUBE);
    }

    #[test]
    fn half_cube_points_lie_in_half_cube() {
        let g = GridSpec::unit(2, 4).unwrap();
        let q = DyadicCube::new(&g, 1, vec![1, 0]).unwrap().to_box(&g);
        let pts = half_cube_points(&g, &q, 1);
        assert_eq!(pts.len(), 4);
        let c = q.physical_center(&g);
        for p in pts {
            assert!((p[0] - c[0]).abs() < 0.125 && (p[1] - c[1]).abs() < 0.125);
        }
    }

    #[test]
    fn dilation_index_half_open() {
        let c = [0.0, 0.0];
        assert_eq!(dilation_index(1, &[0.4, 0.0], &c, 0.5), 0);
        assert_eq!(dilation_index(1, &[0.5, 0.0], &c, 0.5), 1);
        assert_eq!(dilation_index(1, &[-0.5, 0.0], &c, 0.5), 0);
        assert_eq!(dilation_index(1, &[3.0, 0.0], &c, 0.5), 3);
    }

    #[test]
    fn x_independent_kernels_vanish() {
        let g = GridSpec::unit(1, 6).unwrap();
        let plan = SamplePlan::dyadic(1, 4, 2);
        for m in [1, 2] {
            let k = KernelSpec::named(m, "y_only").unwrap();
            for r in [1.0, 2.0] {
                assert_eq!(hormander_constant(&k, &g, r, &plan).unwrap().value, 0.0);
            }
            assert_eq!(h2_constant(&k, &g, 2.0, 1.0, &plan).unwrap().value, 0.0);
            let zero = KernelSpec::zero(m);
            assert_eq!(
                hormander_constant(&zero, &g, 2.0, &plan).unwrap().value,
                0.0
            );
        }
    }

    #[test]
    fn report_value_is_sum_of_terms() {
        let g = GridSpec::unit(1, 6).unwrap();
        let k = KernelSpec::named(1, "hilbert").unwrap();
        let rep = hormander_constant(&k, &g, 2.0, &SamplePlan::dyadic(2, 3, 2)).unwrap();
        let s: f64 = rep.terms.iter().sum();
        assert_eq!(rep.value, s);
        assert!(rep.value > 0.0);
        assert!(rep.tail_flag);
        assert_eq!(rep.k_max as usize, rep.terms.len());
    }

    #[test]
    fn estimates_monotone_in_plan() {
        let g = GridSpec::unit(1, 6).unwrap();
        let k = KernelSpec::named(1, "hilbert").unwrap();
        let small = hormander_constant(&k, &g, 2.0, &SamplePlan::dyadic(2, 2, 2)).unwrap();
        let big = hormander_constant(&k, &g, 2.0, &SamplePlan::dyadic(1, 3, 2)).unwrap();
        assert!(big.value >= small.value);
        let small = h2_constant(&k, &g, 2.0, 1.0, &SamplePlan::dyadic(2, 2, 2)).unwrap();
        let big = h2_constant(&k, &g, 2.0, 1.0, &SamplePlan::dyadic(1, 3, 2)).unwrap();
        assert!(big.value >= small.value);
    }

    #[test]
    fn errors() {
        let g = GridSpec::unit(1, 5).unwrap();
        let k = KernelSpec::named(1, "hilbert").unwrap();
        let plan = SamplePlan::Explicit { configs: vec![] };
        assert_eq!(
            hormander_constant(&k, &g, 2.0, &plan).unwrap_err(),
            Error::EmptySamplePlan
        );
        let plan = SamplePlan::dyadic(1, 2, 1);
        assert!(hormander_constant(&k, &g, 0.5, &plan).is_err());
        assert!(h2_constant(&k, &g, 2.0, 0.5, &plan).is_err());
        assert!(omega_profile(&k, &g, &[0.5], &[0.5], &[0.5]).is_err());
    }

    #[test]
    fn h2_skips_coincident_points() {
        let g = GridSpec::unit(1, 5).unwrap();
        let k = KernelSpec::named(1, "hilbert").unwrap();
        let cfg = SampleConfig {
            cube: CubeRef {
                corner: vec![8],
                side: 8,
            },
            x: vec![0.4],
            z: vec![0.4],
        };
        let rep = h2_constant(
            &k,
            &g,
            2.0,
            1.0,
            &SamplePlan::Explicit { configs: vec![cfg] },
        )
        .unwrap();
        assert_eq!(rep.samples.coincident, 1);
        assert_eq!(rep.value, 0.0);
    }

    #[test]
    fn mpt_skips_nothing_when_singularity_is_on_cell_faces() {
        let g = grid8(10);
        let k = KernelSpec::mpt(1.0, 2.0).unwrap();
        let rep = hormander_constant(&k, &g, 2.0, &SamplePlan::dyadic(1, 4, 2)).unwrap();
        assert_eq!(rep.skipped, 0);
        assert!(rep.value.is_finite() && rep.value > 0.0);
    }

    #[test]
    fn dini_analytic_values() {
        let v = dini_norm(&Modulus::Power { c: 1.0, eps: 1.0 }).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{v}");
        let v = dini_norm(&Modulus::Power { c: 1.0, eps: 0.5 }).unwrap();
        assert!((v - 2.0).abs() < 1e-5, "{v}");
        let v = dini_norm(&Modulus::Log { c: 1.0, eps: 1.0 }).unwrap();
        assert!((v - 1.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn dini_closure_power_moduli() {
        let v = dini_norm_fn(&|t: f64| t.sqrt(), 1e-9).unwrap();
        assert!((v - 2.0).abs() < 1e-8, "{v}");
        let v = dini_norm_fn(&|t: f64| t, 1e-9).unwrap();
        assert!((v - 1.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn non_dini_moduli_rejected() {
        assert!(matches!(
            dini_norm(&Modulus::Power { c: 1.0, eps: 0.0 }),
            Err(Error::NotDini(_))
        ));
        assert!(matches!(
            dini_norm_fn(&|_t: f64| 1.0, 1e-6),
            Err(Error::NotDini(_))
        ));
        // Not Dini: ∫ dt / (t log(e/t)) diverges.
        assert!(matches!(
            dini_norm_fn(&|t: f64| 1.0 / (1.0 - t.ln()), 1e-6),
            Err(Error::NotDini(_))
        ));
        assert!(matches!(
            dini_norm(&Modulus::Log { c: 1.0, eps: 0.0 }),
            Err(Error::NotDini(_))
        ));
        assert!(matches!(
            dini_norm_fn(&|t: f64| 1.0 - t, 1e-6),
            Err(Error::NotDini(_))
        ));
    }

    #[test]
    fn omega_profile_edge_cases() {
        let g = GridSpec::unit(1, 5).unwrap();
        let k = KernelSpec::named(1, "y_only").unwrap();
        let w = omega_profile(&k, &g, &[0.3], &[0.35], &[0.5, 0.25, 0.125]).unwrap();
        assert!(w.iter().all(|&v| v == 0.0));
        // |x − z| / S ≥ 0.05 / 1 always, so t = 0.001 has an empty shell.
        let k = KernelSpec::named(1, "hilbert").unwrap();
        let w = omega_profile(&k, &g, &[0.3], &[0.35], &[0.001]).unwrap();
        assert_eq!(w, vec![0.0]);
        let custom =
            KernelSpec::custom(1, CustomKernel::new("lin", |x, ys| x[0] - ys[0][0])).unwrap();
        let w = omega_profile(&custom, &g, &[0.3], &[0.35], &[1.0]).unwrap();
        assert!(w[0] > 0.0);
    }

    /// Empirical comparator for `K_1 ≤ c · ‖ω‖_Dini` on the plans below.
    const DINI_K1_CONSTANT: f64 = 64.0;

    fn dini_cases() -> Vec<(usize, usize, Modulus, [u32; 2], SamplePlan)> {
        let half = Modulus::Power { c: 1.0, eps: 0.5 };
        let log = Modulus::Log { c: 1.0, eps: 1.0 };
        vec![
            (1, 1, half, [8, 9], SamplePlan::dyadic(2, 5, 1)),
            (1, 1, log, [8, 9], SamplePlan::dyadic(2, 5, 1)),
            (2, 1, half, [8, 9], SamplePlan::dyadic(2, 5, 1)),
            (1, 2, half, [5, 6], SamplePlan::dyadic(2, 3, 1)),
        ]
    }

    #[test]
    fn dini_kernel_k1_tracks_dini_norm() {
        for (m, n, modulus, depths, plan) in dini_cases() {
            let k = KernelSpec::dini(m, modulus, 1.0, [0.5, 0.5]).unwrap();
            let d = dini_norm(&modulus).unwrap();
            let ratios: Vec<f64> = depths
                .iter()
                .map(|&l| {
                    let g = GridSpec::unit(n, l).unwrap();
                    hormander_constant(&k, &g, 1.0, &plan).unwrap().value / d
                })
                .collect();
            assert!(
                ratios.iter().all(|&q| q > 0.0 && q <= DINI_K1_CONSTANT),
                "{ratios:?}"
            );
            let drift = ratios[1] / ratios[0];
            assert!((0.5..=1.5).contains(&drift), "m={m} n={n}: {ratios:?}");
        }
    }

    #[test]
    fn dini_kernel_terms_decay_past_threshold() {
        for (m, n, modulus, depths, plan) in dini_cases() {
            let k = KernelSpec::dini(m, modulus, 1.0, [0.5, 0.5]).unwrap();
            let threshold = (1.0 + 4.0 * (n as f64).sqrt()).log2();
            let g = GridSpec::unit(n, depths[1]).unwrap();
            let rep = hormander_constant(&k, &g, 1.0, &plan).unwrap();
            for (i, w) in rep.terms.windows(2).enumerate() {
                let k_scale = (i + 1) as f64;
                if k_scale > threshold {
                    assert!(w[1] <= w[0], "m={m} n={n} k={k_scale}: {:?}", rep.terms);
                }
            }
        }
    }
}
