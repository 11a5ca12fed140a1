//! Finite dyadic discretization of a cube domain.
//!
//! The domain is `origin + [0, side)^n`, split into `2^L` cells per axis.
//! Functions are piecewise constant on cells and every integral is a
//! midpoint sum, so "ess sup" means "max over cells" and "a.e." means
//! "every cell". Cells are numbered in row-major order: for `n = 2` the
//! cell with coordinates `(i0, i1)` has index `i0 * 2^L + i1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the ambient space. Only the first `n` coordinates are used;
/// unused coordinates are kept at zero so Euclidean norms are unaffected.
pub type Point = [f64; 2];

pub const MAX_DEPTH_1D: u32 = 14;
pub const MAX_DEPTH_2D: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct GridSpec {
    n: usize,
    depth: u32,
    origin: Point,
    side: f64,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    n: usize,
    #[serde(rename = "L")]
    depth: u32,
    origin: Vec<f64>,
    side: f64,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        GridSpec::new(raw.n, raw.depth, &raw.origin, raw.side)
    }
}

impl From<GridSpec> for RawGrid {
    fn from(g: GridSpec) -> Self {
        RawGrid {
            n: g.n,
            depth: g.depth,
            origin: g.origin[..g.n].to_vec(),
            side: g.side,
        }
    }
}

impl GridSpec {
    pub fn new(n: usize, depth: u32, origin: &[f64], side: f64) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(Error::InvalidGrid(format!("dimension {n} not in 1..=2")));
        }
        let max_depth = if n == 1 { MAX_DEPTH_1D } else { MAX_DEPTH_2D };
        if depth < 1 || depth > max_depth {
            return Err(Error::InvalidGrid(format!(
                "depth {depth} not in 1..={max_depth} for n = {n}"
            )));
        }
        if origin.len() != n {
            return Err(Error::InvalidGrid(format!(
                "origin has {} coordinates, expected {n}",
                origin.len()
            )));
        }
        if !(side.is_finite() && side > 0.0) || origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid(
                "side must be positive and all values finite".into(),
            ));
        }
        let mut o = [0.0; 2];
        o[..n].copy_from_slice(origin);
        Ok(GridSpec {
            n,
            depth,
            origin: o,
            side,
        })
    }

    /// Unit-side grid anchored at the origin.
    pub fn unit(n: usize, depth: u32) -> Result<Self> {
        GridSpec::new(n, depth, &vec![0.0; n], 1.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.n]
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn cells_per_side(&self) -> usize {
        1usize << self.depth
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_side().pow(self.n as u32)
    }

    /// Cell side length `h`.
    pub fn cell_size(&self) -> f64 {
        self.side / self.cells_per_side() as f64
    }

    /// Cell measure `h^n`.
    pub fn cell_measure(&self) -> f64 {
        self.cell_size().powi(self.n as i32)
    }

    pub fn cell_coords(&self, idx: usize) -> [i64; 2] {
        let side = self.cells_per_side();
        if self.n == 1 {
            [idx as i64, 0]
        } else {
            [(idx / side) as i64, (idx % side) as i64]
        }
    }

    pub fn cell_index(&self, coords: [i64; 2]) -> usize {
        if self.n == 1 {
            coords[0] as usize
        } else {
            coords[0] as usize * self.cells_per_side() + coords[1] as usize
        }
    }

    pub fn cell_center(&self, idx: usize) -> Point {
        let c = self.cell_coords(idx);
        let h = self.cell_size();
        let mut p = [0.0; 2];
        for a in 0..self.n {
            p[a] = self.origin[a] + (c[a] as f64 + 0.5) * h;
        }
        p
    }

    /// Physical position of a (possibly fractional) cell coordinate.
    pub fn position(&self, axis: usize, cell_coord: f64) -> f64 {
        self.origin[axis] + cell_coord * self.cell_size()
    }

    /// Cell coordinate (fractional) of a physical position.
    pub fn cell_coordinate(&self, axis: usize, x: f64) -> f64 {
        (x - self.origin[axis]) / self.cell_size()
    }

    /// The cell containing a physical point, if it lies in the domain.
    pub fn locate(&self, p: &Point) -> Option<usize> {
        let mut c = [0i64; 2];
        let side = self.cells_per_side() as i64;
        for a in 0..self.n {
            let v = self.cell_coordinate(a, p[a]).floor();
            if !(0.0..side as f64).contains(&v) {
                return None;
            }
            c[a] = v as i64;
        }
        Some(self.cell_index(c))
    }

    pub fn full_box(&self) -> CellBox {
        let s = self.cells_per_side() as i64;
        CellBox::cube(self.n, [0, 0], s)
    }
}

/// Axis-aligned box of cells `[lo, hi)` in cell coordinates. Coordinates may
/// lie outside the grid (shifted cubes, dilations before clipping).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellBox {
    pub n: usize,
    pub lo: [i64; 2],
    pub hi: [i64; 2],
}

impl CellBox {
    pub fn cube(n: usize, corner: [i64; 2], side: i64) -> Self {
        let mut lo = [0; 2];
        let mut hi = [0; 2];
        for a in 0..n {
            lo[a] = corner[a];
            hi[a] = corner[a] + side;
        }
        CellBox { n, lo, hi }
    }

    pub fn extent(&self, axis: usize) -> i64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn is_empty(&self) -> bool {
        (0..self.n).any(|a| self.hi[a] <= self.lo[a])
    }

    /// Number of cells, counting any part outside the grid.
    pub fn volume(&self) -> usize {
        if self.is_empty() {
            return 0;
        }
        (0..self.n).map(|a| self.extent(a) as usize).product()
    }

    pub fn contains_coords(&self, c: [i64; 2]) -> bool {
        (0..self.n).all(|a| self.lo[a] <= c[a] && c[a] < self.hi[a])
    }

    pub fn contains_box(&self, other: &CellBox) -> bool {
        other.is_empty()
            || (0..self.n).all(|a| self.lo[a] <= other.lo[a] && other.hi[a] <= self.hi[a])
    }

    pub fn intersect(&self, other: &CellBox) -> CellBox {
        let mut out = *self;
        for a in 0..self.n {
            out.lo[a] = self.lo[a].max(other.lo[a]);
            out.hi[a] = self.hi[a].min(other.hi[a]).max(out.lo[a]);
        }
        out
    }

    pub fn clip(&self, grid: &GridSpec) -> CellBox {
        self.intersect(&grid.full_box())
    }

    /// Cell indices of the part of the box inside the grid, row-major.
    pub fn cells(&self, grid: &GridSpec) -> Vec<usize> {
        let b = self.clip(grid);
        let mut out = Vec::with_capacity(b.volume());
        if b.is_empty() {
            return out;
        }
        if b.n == 1 {
            out.extend((b.lo[0]..b.hi[0]).map(|i| i as usize));
        } else {
            for i0 in b.lo[0]..b.hi[0] {
                for i1 in b.lo[1]..b.hi[1] {
                    out.push(grid.cell_index([i0, i1]));
                }
            }
        }
        out
    }

    pub fn contains_cell(&self, grid: &GridSpec, idx: usize) -> bool {
        self.contains_coords(grid.cell_coords(idx))
    }

    /// Concentric dilation by an integer factor, in cell coordinates.
    /// Requires `(factor - 1) * extent` to be even on each axis.
    pub fn dilate(&self, factor: i64) -> CellBox {
        let mut out = *self;
        for a in 0..self.n {
            let e = self.extent(a);
            let grow = (factor - 1) * e;
            debug_assert!(grow % 2 == 0, "dilation must stay on the cell lattice");
            out.lo[a] = self.lo[a] - grow / 2;
            out.hi[a] = self.hi[a] + grow / 2;
        }
        out
    }

    /// Physical center and side length (side taken from axis 0).
    pub fn physical_center(&self, grid: &GridSpec) -> Point {
        let mut c = [0.0; 2];
        for (a, ca) in c.iter_mut().enumerate().take(self.n) {
            *ca = grid.position(a, 0.5 * (self.lo[a] + self.hi[a]) as f64);
        }
        c
    }

    pub fn physical_side(&self, grid: &GridSpec) -> f64 {
        self.extent(0) as f64 * grid.cell_size()
    }
}

/// A dyadic subcube of the domain: level `ℓ` and index `k ∈ [0, 2^ℓ)^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: u32,
    pub index: Vec<u64>,
}

impl DyadicCube {
    pub fn root(n: usize) -> Self {
        DyadicCube {
            level: 0,
            index: vec![0; n],
        }
    }

    pub fn new(grid: &GridSpec, level: u32, index: Vec<u64>) -> Result<Self> {
        let q = DyadicCube { level, index };
        q.validate(grid)?;
        Ok(q)
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.level > grid.depth() {
            return Err(Error::InvalidCube(format!(
                "level {} exceeds grid depth {}",
                self.level,
                grid.depth()
            )));
        }
        if self.index.len() != grid.n() {
            return Err(Error::InvalidCube(format!(
                "index has {} components, expected {}",
                self.index.len(),
                grid.n()
            )));
        }
        if self.index.iter().any(|&k| k >= 1u64 << self.level) {
            return Err(Error::InvalidCube(format!(
                "index {:?} out of range at level {}",
                self.index, self.level
            )));
        }
        Ok(())
    }

    pub fn side_cells(&self, grid: &GridSpec) -> i64 {
        1i64 << (grid.depth() - self.level)
    }

    pub fn to_box(&self, grid: &GridSpec) -> CellBox {
        let s = self.side_cells(grid);
        let mut corner = [0i64; 2];
        for (a, &k) in self.index.iter().enumerate() {
            corner[a] = k as i64 * s;
        }
        CellBox::cube(grid.n(), corner, s)
    }

    pub fn num_cells(&self, grid: &GridSpec) -> usize {
        (self.side_cells(grid) as usize).pow(grid.n() as u32)
    }

    pub fn is_leaf(&self, grid: &GridSpec) -> bool {
        self.level == grid.depth()
    }

    /// The `2^n` dyadic children, in row-major order of their indices.
    pub fn children(&self, grid: &GridSpec) -> Result<Vec<DyadicCube>> {
        if self.is_leaf(grid) {
            return Err(Error::LeafCube { level: self.level });
        }
        let n = grid.n();
        let mut out = Vec::with_capacity(1 << n);
        for bits in 0..(1u64 << n) {
            let index = (0..n)
                .map(|a| 2 * self.index[a] + ((bits >> (n - 1 - a)) & 1))
                .collect();
            out.push(DyadicCube {
                level: self.level + 1,
                index,
            });
        }
        Ok(out)
    }

    /// The dyadic cube at `level` (≥ own level) containing cell `idx`, if it lies in `self`.
    pub fn contains_cell(&self, grid: &GridSpec, idx: usize) -> bool {
        self.to_box(grid).contains_cell(grid, idx)
    }
}

/// A grid-aligned cube: corner cell and side length in cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridCube {
    pub corner: Vec<usize>,
    pub side: usize,
}

impl GridCube {
    pub fn new(grid: &GridSpec, corner: Vec<usize>, side: usize) -> Result<Self> {
        if corner.len() != grid.n() || side == 0 {
            return Err(Error::InvalidCube(format!(
                "grid cube corner {corner:?} side {side} malformed"
            )));
        }
        if corner.iter().any(|&c| c + side > grid.cells_per_side()) {
            return Err(Error::InvalidCube(format!(
                "grid cube corner {corner:?} side {side} exceeds the grid"
            )));
        }
        Ok(GridCube { corner, side })
    }

    pub fn to_box(&self, grid: &GridSpec) -> CellBox {
        let mut c = [0i64; 2];
        for (a, &v) in self.corner.iter().enumerate() {
            c[a] = v as i64;
        }
        CellBox::cube(grid.n(), c, self.side as i64)
    }
}

/// Result of tripling a cube: the concentric `3Q`, clipped to the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tripled {
    pub region: CellBox,
    pub clipped: bool,
}

/// `3Q ∩ domain` for a cube given as a cell box.
pub fn triple_cube(grid: &GridSpec, q: &CellBox) -> Tripled {
    let full = q.dilate(3);
    let region = full.clip(grid);
    Tripled {
        region,
        clipped: region != full,
    }
}

/// Cell-sampled real function on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFunction", into = "RawFunction")]
pub struct GridFunction {
    grid: GridSpec,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawFunction {
    #[serde(flatten)]
    grid: GridSpec,
    values: Vec<f64>,
}

impl TryFrom<RawFunction> for GridFunction {
    type Error = Error;

    fn try_from(raw: RawFunction) -> Result<Self> {
        GridFunction::new(raw.grid, raw.values)
    }
}

impl From<GridFunction> for RawFunction {
    fn from(f: GridFunction) -> Self {
        RawFunction {
            grid: f.grid,
            values: f.values,
        }
    }
}

impl GridFunction {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::LengthMismatch {
                expected: grid.num_cells(),
                got: values.len(),
            });
        }
        if let Some(cell) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { cell });
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        GridFunction {
            grid: grid.clone(),
            values: vec![0.0; grid.num_cells()],
        }
    }

    pub fn constant(grid: &GridSpec, c: f64) -> Self {
        GridFunction {
            grid: grid.clone(),
            values: vec![c; grid.num_cells()],
        }
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: &GridSpec, f: impl Fn(&Point) -> f64) -> Result<Self> {
        let values = (0..grid.num_cells())
            .map(|i| f(&grid.cell_center(i)))
            .collect();
        GridFunction::new(grid.clone(), values)
    }

    /// Indicator of the cells of a box.
    pub fn indicator(grid: &GridSpec, region: &CellBox) -> Self {
        let mut f = GridFunction::zeros(grid);
        for i in region.cells(grid) {
            f.values[i] = 1.0;
        }
        f
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        GridFunction::new(
            self.grid.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn abs_pow(&self, r: f64) -> Self {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.abs().powf(r)).collect(),
        }
    }

    /// Keeps values on the cells of `region`, zero elsewhere.
    pub fn restrict(&self, region: &CellBox) -> Self {
        let mut out = GridFunction::zeros(&self.grid);
        for i in region.cells(&self.grid) {
            out.values[i] = self.values[i];
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Smallest cell box containing every nonzero cell, if any.
    pub fn support_box(&self) -> Option<CellBox> {
        let n = self.grid.n();
        let mut lo = [i64::MAX; 2];
        let mut hi = [i64::MIN; 2];
        let mut any = false;
        for (i, &v) in self.values.iter().enumerate() {
            if v != 0.0 {
                any = true;
                let c = self.grid.cell_coords(i);
                for a in 0..n {
                    lo[a] = lo[a].min(c[a]);
                    hi[a] = hi[a].max(c[a] + 1);
                }
            }
        }
        any.then_some(CellBox { n, lo, hi })
    }

    /// `L^p` norm with cell measure `h^n`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
        (s * self.grid.cell_measure()).powf(1.0 / p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// `( (1/#Q) Σ_{Q} |f|^r )^{1/r}` over the in-grid cells of `region`.
pub fn local_average(f: &GridFunction, region: &CellBox, r: f64) -> Result<f64> {
    let cells = region.cells(f.grid()).len();
    local_average_normalized(f, region, cells, r)
}

/// `( (1/measure_cells) Σ_{region} |f|^r )^{1/r}`: the sum runs over `region`
/// but the normalization uses a separate measuring cube, as in averages of
/// `f` over `3Q` normalized by `|Q|`.
pub fn local_average_normalized(
    f: &GridFunction,
    region: &CellBox,
    measure_cells: usize,
    r: f64,
) -> Result<f64> {
    if !(r >= 1.0) || !r.is_finite() {
        return Err(Error::param(
            "r",
            format!("must be a finite value ≥ 1, got {r}"),
        ));
    }
    if measure_cells == 0 {
        return Err(Error::Precondition("averaging over an empty cube".into()));
    }
    Ok(power_mean(
        f.values(),
        &region.cells(f.grid()),
        measure_cells,
        r,
    ))
}

/// `( (1/count) Σ_{cells} |v|^p )^{1/p}` for any `p > 0`.
pub(crate) fn power_mean(values: &[f64], cells: &[usize], count: usize, p: f64) -> f64 {
    let s: f64 = if p == 1.0 {
        cells.iter().map(|&i| values[i].abs()).sum()
    } else {
        cells.iter().map(|&i| values[i].abs().powf(p)).sum()
    };
    let mean = s / count as f64;
    if p == 1.0 {
        mean
    } else {
        mean.powf(1.0 / p)
    }
}
