//! Seeded input banks: spikes, indicators, Gaussian bumps and random ±1
//! fields. Parameters left unspecified are drawn from the entry's seed, so a
//! bank descriptor reproduces the same functions on every platform.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec, Point};
use crate::rng::{self, CounterRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// `height / h^n` on the single cell containing `center`.
    Spike,
    /// `height` on cells with `|y − center|_∞ < width`.
    Indicator,
    /// `height · exp(−|y − center|² / (2 width²))`.
    Gauss,
    /// Independent `±height` per cell on `|y − center|_∞ < width`.
    Rademacher,
}

pub const SHAPES: [Shape; 4] = [
    Shape::Spike,
    Shape::Indicator,
    Shape::Gauss,
    Shape::Rademacher,
];

impl Shape {
    fn code(self) -> u64 {
        self as u64 + 1
    }

    fn name(self) -> &'static str {
        match self {
            Shape::Spike => "spike",
            Shape::Indicator => "indicator",
            Shape::Gauss => "gauss",
            Shape::Rademacher => "rademacher",
        }
    }
}

/// Half-open physical box `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxSpec {
    fn contains(&self, p: &Point) -> bool {
        (0..self.lo.len()).all(|a| self.lo[a] <= p[a] && p[a] < self.hi[a])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub shape: Shape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    pub seed: u64,
    /// Cells outside this box are zero; defaults to the whole domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<BoxSpec>,
    /// For replicated entries, slot `i` moves `center` by `i · slot_offset`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot_offset: Option<Vec<f64>>,
}

impl InputSpec {
    pub fn new(shape: Shape, seed: u64) -> Self {
        InputSpec {
            shape,
            center: None,
            width: None,
            height: None,
            seed,
            support: None,
            slot_offset: None,
        }
    }

    pub fn with_support(mut self, support: BoxSpec) -> Self {
        self.support = Some(support);
        self
    }

    pub fn with_center(mut self, center: Vec<f64>, width: f64) -> Self {
        self.center = Some(center);
        self.width = Some(width);
        self
    }
}

/// One bank element: either one spec replicated over all `m` slots (slot `i`
/// uses seed `seed + i`) or an explicit spec per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BankEntry {
    PerSlot(Vec<InputSpec>),
    Replicated(InputSpec),
}

/// A generated `m`-tuple of inputs with a descriptor label.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTuple {
    pub label: String,
    pub functions: Vec<GridFunction>,
}

impl InputTuple {
    pub fn refs(&self) -> Vec<&GridFunction> {
        self.functions.iter().collect()
    }
}

fn check_point(grid: &GridSpec, name: &'static str, v: &[f64]) -> Result<()> {
    if v.len() != grid.n() || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::param(
            name,
            format!("expected {} finite coordinates, got {v:?}", grid.n()),
        ));
    }
    Ok(())
}

/// Generates one function from a spec; `slot` shifts the seed and center.
pub fn generate(grid: &GridSpec, spec: &InputSpec, slot: usize) -> Result<GridFunction> {
    let n = grid.n();
    let support = match &spec.support {
        Some(b) => {
            check_point(grid, "support.lo", &b.lo)?;
            check_point(grid, "support.hi", &b.hi)?;
            b.clone()
        }
        None => BoxSpec {
            lo: grid.origin().to_vec(),
            hi: grid.origin().iter().map(|o| o + grid.side()).collect(),
        },
    };
    let inside: Vec<usize> = (0..grid.num_cells())
        .filter(|&i| support.contains(&grid.cell_center(i)))
        .collect();
    if inside.is_empty() {
        return Err(Error::param("support", "contains no cell center"));
    }
    let seed = spec.seed.wrapping_add(slot as u64);
    let mut rng = CounterRng::new(rng::substream(seed, spec.shape.code()));
    let extent = (0..n)
        .map(|a| support.hi[a] - support.lo[a])
        .fold(f64::INFINITY, f64::min);
    let mut center: Point = [0.0; 2];
    match &spec.center {
        Some(c) => {
            check_point(grid, "center", c)?;
            center[..n].copy_from_slice(c);
        }
        None => {
            for a in 0..n {
                center[a] = rng.uniform(support.lo[a], support.hi[a]);
            }
        }
    }
    if let Some(off) = &spec.slot_offset {
        check_point(grid, "slot_offset", off)?;
        for a in 0..n {
            center[a] += slot as f64 * off[a];
        }
    }
    let width = match spec.width {
        Some(w) if w > 0.0 && w.is_finite() => w,
        Some(w) => return Err(Error::param("width", format!("must be positive, got {w}"))),
        None => rng.uniform(0.05, 0.25) * extent,
    };
    let height = match spec.height {
        Some(h) if h.is_finite() && h != 0.0 => h,
        Some(h) => {
            return Err(Error::param(
                "height",
                format!("must be finite and nonzero, got {h}"),
            ))
        }
        None => 1.0,
    };
    let mut values = vec![0.0; grid.num_cells()];
    let sup_dist = |p: &Point| (0..n).map(|a| (p[a] - center[a]).abs()).fold(0.0, f64::max);
    match spec.shape {
        Shape::Spike => {
            let cell = nearest(grid, &inside, &center);
            values[cell] = height / grid.cell_measure();
        }
        Shape::Indicator | Shape::Rademacher => {
            let mut any = false;
            for &i in &inside {
                if sup_dist(&grid.cell_center(i)) < width {
                    values[i] = match spec.shape {
                        Shape::Rademacher if rng::at(seed, i as u64) & 1 == 1 => -height,
                        _ => height,
                    };
                    any = true;
                }
            }
            if !any {
                values[nearest(grid, &inside, &center)] = height;
            }
        }
        Shape::Gauss => {
            for &i in &inside {
                let p = grid.cell_center(i);
                let d2: f64 = (0..n).map(|a| (p[a] - center[a]).powi(2)).sum();
                values[i] = height * (-d2 / (2.0 * width * width)).exp();
            }
            if values.iter().all(|&v| v == 0.0) {
                values[nearest(grid, &inside, &center)] = height;
            }
        }
    }
    GridFunction::new(grid.clone(), values)
}

/// Cell of `cells` whose center is closest to `p`; ties go to the lower index.
fn nearest(grid: &GridSpec, cells: &[usize], p: &Point) -> usize {
    let n = grid.n();
    let mut best = (f64::INFINITY, cells[0]);
    for &i in cells {
        let c = grid.cell_center(i);
        let d: f64 = (0..n).map(|a| (c[a] - p[a]).powi(2)).sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Generates the `m`-tuple for one bank entry.
pub fn generate_entry(grid: &GridSpec, entry: &BankEntry, m: usize) -> Result<InputTuple> {
    match entry {
        BankEntry::Replicated(spec) => {
            let functions = (0..m)
                .map(|slot| generate(grid, spec, slot))
                .collect::<Result<Vec<_>>>()?;
            Ok(InputTuple {
                label: format!("{}#{}", spec.shape.name(), spec.seed),
                functions,
            })
        }
        BankEntry::PerSlot(specs) => {
            if specs.len() != m {
                return Err(Error::param(
                    "bank",
                    format!("entry has {} slots, operator takes {m}", specs.len()),
                ));
            }
            let functions = specs
                .iter()
                .map(|s| generate(grid, s, 0))
                .collect::<Result<Vec<_>>>()?;
            let label = specs
                .iter()
                .map(|s| format!("{}#{}", s.shape.name(), s.seed))
                .collect::<Vec<_>>()
                .join("+");
            Ok(InputTuple { label, functions })
        }
    }
}

pub fn generate_bank(grid: &GridSpec, entries: &[BankEntry], m: usize) -> Result<Vec<InputTuple>> {
    entries.iter().map(|e| generate_entry(grid, e, m)).collect()
}

/// Curated bank: `per_shape` seeded entries of each shape, all restricted to `support`.
pub fn default_bank(per_shape: usize, seed: u64, support: Option<BoxSpec>) -> Vec<BankEntry> {
    let mut out = Vec::with_capacity(per_shape * SHAPES.len());
    for shape in SHAPES {
        for j in 0..per_shape {
            let mut spec =
                InputSpec::new(shape, rng::substream(seed, shape.code() << 32 | j as u64));
            spec.support = support.clone();
            out.push(BankEntry::Replicated(spec));
        }
    }
    out
}

pub const DEFAULT_PER_SHAPE: usize = 20;

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::unit(1, 6).unwrap()
    }

    #[test]
    fn spike_has_unit_mass() {
        let g = grid();
        let spec = InputSpec::new(Shape::Spike, 3).with_center(vec![0.3], 0.1);
        let f = generate(&g, &spec, 0).unwrap();
        let nz: Vec<_> = f.values().iter().filter(|v| **v != 0.0).collect();
        assert_eq!(nz.len(), 1);
        assert!((f.lp_norm(1.0) - 1.0).abs() < 1e-12);
        assert_eq!(f.get(g.locate(&[0.3, 0.0]).unwrap()), 64.0);
    }

    #[test]
    fn support_is_respected() {
        let g = GridSpec::unit(2, 4).unwrap();
        let support = BoxSpec {
            lo: vec![0.25, 0.25],
            hi: vec![0.5, 0.75],
        };
        for e in default_bank(5, 9, Some(support.clone())) {
            let t = generate_entry(&g, &e, 2).unwrap();
            for f in &t.functions {
                assert!(!f.is_zero());
                for (i, v) in f.values().iter().enumerate() {
                    if *v != 0.0 {
                        assert!(support.contains(&g.cell_center(i)));
                    }
                }
            }
        }
    }

    #[test]
    fn generation_is_reproducible_and_seed_sensitive() {
        let g = grid();
        let bank = default_bank(DEFAULT_PER_SHAPE, 1, None);
        assert_eq!(bank.len(), 80);
        let a = generate_bank(&g, &bank, 2).unwrap();
        let b = generate_bank(&g, &bank, 2).unwrap();
        assert_eq!(a, b);
        let c = generate_bank(&g, &default_bank(DEFAULT_PER_SHAPE, 2, None), 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rademacher_takes_both_signs() {
        let g = grid();
        let spec = InputSpec::new(Shape::Rademacher, 11).with_center(vec![0.5], 0.5);
        let f = generate(&g, &spec, 0).unwrap();
        assert!(f.values().iter().all(|v| v.abs() == 1.0));
        assert!(f.values().iter().any(|v| *v > 0.0) && f.values().iter().any(|v| *v < 0.0));
    }

    #[test]
    fn json_forms() {
        let entries: Vec<BankEntry> = serde_json::from_str(
            r#"[{"shape":"gauss","seed":4,"center":[0.5],"width":0.1},
                [{"shape":"spike","seed":1},{"shape":"indicator","seed":2,"slot_offset":[0.1]}]]"#,
        )
        .unwrap();
        assert!(matches!(entries[0], BankEntry::Replicated(_)));
        assert!(matches!(entries[1], BankEntry::PerSlot(_)));
        let back: Vec<BankEntry> =
            serde_json::from_str(&serde_json::to_string(&entries).unwrap()).unwrap();
        assert_eq!(entries, back);
        assert!(generate_entry(&grid(), &entries[1], 1).is_err());
    }

    #[test]
    fn slot_offset_moves_center() {
        let g = grid();
        let mut spec = InputSpec::new(Shape::Spike, 0).with_center(vec![0.2], 0.1);
        spec.slot_offset = Some(vec![0.25]);
        let t = generate_entry(&g, &BankEntry::Replicated(spec), 2).unwrap();
        let pos = |f: &GridFunction| f.values().iter().position(|v| *v != 0.0).unwrap();
        assert_eq!(pos(&t.functions[1]) - pos(&t.functions[0]), 16);
    }
}
