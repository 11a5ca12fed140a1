//! Experiment configuration: parsing, defaults and validation.
//!
//! Parsing fills every default, so the canonical JSON of a parsed config
//! re-parses to the same value and its hash identifies the run.

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::bank::{generate_bank, BankEntry, BoxSpec, InputTuple, DEFAULT_PER_SHAPE};
use crate::builder::check_root;
use crate::grid::{DyadicCube, GridSpec};
use crate::kernel::{KernelSpec, Modulus};
use crate::maximal::CubeFamilyMode;
use crate::regularity::SamplePlan;
use crate::weights::{WeightSpec, WeightTuple};

/// Largest truncation index accepted by `separation`.
pub const MAX_ELL: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Kr,
    H2,
    Dini,
    Build,
    Dominate,
    Maximal,
    Weights,
    Separation,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Kr,
        Command::H2,
        Command::Dini,
        Command::Build,
        Command::Dominate,
        Command::Maximal,
        Command::Weights,
        Command::Separation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Kr => "kr",
            Command::H2 => "h2",
            Command::Dini => "dini",
            Command::Build => "build",
            Command::Dominate => "dominate",
            Command::Maximal => "maximal",
            Command::Weights => "weights",
            Command::Separation => "separation",
        }
    }

    pub fn from_name(s: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == s)
    }

    fn needs_bank(self) -> bool {
        matches!(
            self,
            Command::Build | Command::Dominate | Command::Maximal | Command::Weights
        )
    }

    fn needs_root(self) -> bool {
        matches!(self, Command::Build | Command::Dominate)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Input bank: generated from a seed or listed explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BankSpec {
    Default {
        per_shape: usize,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        support: Option<BoxSpec>,
    },
    Entries(Vec<BankEntry>),
}

impl BankSpec {
    pub fn entries(&self) -> Vec<BankEntry> {
        match self {
            BankSpec::Default {
                per_shape,
                seed,
                support,
            } => crate::bank::default_bank(*per_shape, *seed, support.clone()),
            BankSpec::Entries(e) => e.clone(),
        }
    }

    pub fn generate(&self, grid: &GridSpec, m: usize) -> crate::Result<Vec<InputTuple>> {
        generate_bank(grid, &self.entries(), m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllRange {
    pub min: u32,
    pub max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<Modulus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank: Option<BankSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// Weak-type exponent reported by `dominate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub gamma: f64,
    pub mode: CubeFamilyMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<SamplePlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<DyadicCube>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<WeightSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<EllRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Every validation failure of a config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<FieldError>);

impl ConfigErrors {
    pub fn mentions(&self, needle: &str) -> bool {
        self.0.iter().any(|e| e.to_string().contains(needle))
    }
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const KEYS: &[&str] = &[
    "command",
    "grid",
    "kernel",
    "modulus",
    "bank",
    "r",
    "q",
    "delta",
    "gamma",
    "mode",
    "plan",
    "root",
    "depth_cap",
    "weights",
    "ps",
    "beta",
    "ell",
    "output",
];

#[derive(Default)]
struct Collector(Vec<FieldError>);

impl Collector {
    fn push(&mut self, path: impl Into<String>, message: impl fmt::Display) {
        self.0.push(FieldError {
            path: path.into(),
            message: message.to_string(),
        });
    }

    fn field<T: DeserializeOwned>(&mut self, obj: &Map<String, Value>, key: &str) -> Option<T> {
        let v = obj.get(key)?;
        match T::deserialize(v) {
            Ok(t) => Some(t),
            Err(e) => {
                self.push(key, e);
                None
            }
        }
    }

    fn require<T>(&mut self, cmd: Command, key: &str, v: &Option<T>, present: bool) {
        if v.is_none() && !present {
            self.push(key, format!("missing (required by `{cmd}`)"));
        }
    }
}

/// Level-2 cube next to the lower corner; its tripling stays inside the domain.
pub fn default_root(grid: &GridSpec) -> DyadicCube {
    DyadicCube {
        level: 2,
        index: vec![1; grid.n()],
    }
}

/// Physical box of a dyadic cube.
pub fn cube_box(grid: &GridSpec, q: &DyadicCube) -> BoxSpec {
    let side = grid.side() / (1u64 << q.level) as f64;
    let o = grid.origin();
    BoxSpec {
        lo: (0..grid.n())
            .map(|a| o[a] + q.index[a] as f64 * side)
            .collect(),
        hi: (0..grid.n())
            .map(|a| o[a] + (q.index[a] + 1) as f64 * side)
            .collect(),
    }
}

/// Parses and validates a config, reporting every error with its field path.
pub fn parse_config(text: &[u8]) -> Result<ExperimentConfig, ConfigErrors> {
    let mut c = Collector::default();
    let value: Value = match serde_json::from_slice(text) {
        Ok(v) => v,
        Err(e) => {
            c.push("$", e);
            return Err(ConfigErrors(c.0));
        }
    };
    let Some(obj) = value.as_object() else {
        c.push("$", "config must be a JSON object");
        return Err(ConfigErrors(c.0));
    };
    for key in obj.keys() {
        if !KEYS.contains(&key.as_str()) {
            c.push(key.clone(), "unknown field");
        }
    }

    let command = match obj.get("command") {
        None => {
            c.push("command", "missing");
            None
        }
        Some(Value::String(s)) => {
            let cmd = Command::from_name(s);
            if cmd.is_none() {
                let names: Vec<_> = Command::ALL.iter().map(|c| c.name()).collect();
                c.push(
                    "command",
                    format!(
                        "unknown command `{s}` (expected one of {})",
                        names.join(", ")
                    ),
                );
            }
            cmd
        }
        Some(_) => {
            c.push("command", "must be a string");
            None
        }
    };

    let grid: Option<GridSpec> = c.field(obj, "grid");
    let kernel: Option<KernelSpec> = c.field(obj, "kernel");
    let modulus: Option<Modulus> = c.field(obj, "modulus");
    let mut bank: Option<BankSpec> = c.field(obj, "bank");
    let r: Option<f64> = c.field(obj, "r");
    let q: Option<f64> = c.field(obj, "q");
    let delta: Option<f64> = c.field(obj, "delta");
    let gamma: Option<f64> = c.field(obj, "gamma");
    let mode: Option<CubeFamilyMode> = c.field(obj, "mode");
    let mut plan: Option<SamplePlan> = c.field(obj, "plan");
    let mut root: Option<DyadicCube> = c.field(obj, "root");
    let depth_cap: Option<usize> = c.field(obj, "depth_cap");
    let weights: Option<Vec<WeightSpec>> = c.field(obj, "weights");
    let ps: Option<Vec<f64>> = c.field(obj, "ps");
    let mut beta: Option<f64> = c.field(obj, "beta");
    let ell: Option<EllRange> = c.field(obj, "ell");
    let output: Option<String> = c.field(obj, "output");

    let Some(cmd) = command else {
        return Err(ConfigErrors(c.0));
    };
    let has = |k: &str| obj.contains_key(k);

    // Presence.
    use Command::*;
    if cmd == Dini {
        c.require(cmd, "modulus", &modulus, has("modulus"));
    } else {
        c.require(cmd, "grid", &grid, has("grid"));
        c.require(cmd, "r", &r, has("r"));
    }
    if !matches!(cmd, Dini | Separation) {
        c.require(cmd, "kernel", &kernel, has("kernel"));
    }
    if matches!(cmd, Kr | H2) {
        c.require(cmd, "plan", &plan, has("plan"));
    }
    if matches!(cmd, H2 | Separation) {
        c.require(cmd, "delta", &delta, has("delta"));
    }
    if cmd == Weights {
        c.require(cmd, "weights", &weights, has("weights"));
        c.require(cmd, "ps", &ps, has("ps"));
    }
    if cmd == Separation {
        c.require(cmd, "ell", &ell, has("ell"));
        beta.get_or_insert(1.0);
    }

    // Ranges.
    let r_ok = r.filter(|&r| {
        let ok = r.is_finite() && r >= 1.0;
        if !ok {
            c.push("r", format!("must be finite and ≥ 1, got {r}"));
        }
        ok
    });
    let gamma = gamma.unwrap_or(0.5);
    if !(gamma > 0.0 && gamma <= 1.0) {
        c.push("gamma", format!("must lie in (0, 1], got {gamma}"));
    }
    if let Some(q) = q {
        if !(q > 0.0 && q.is_finite()) {
            c.push("q", format!("must be positive, got {q}"));
        }
    }
    if let Some(cap) = depth_cap {
        if cap == 0 {
            c.push("depth_cap", "must be positive");
        }
    }
    if let Some(m) = &modulus {
        if let Err(e) = m.validate() {
            c.push("modulus", e);
        }
    }
    if let (Some(g), Some(k)) = (&grid, &kernel) {
        if let Err(e) = k.validate_for(g) {
            c.push("kernel", e);
        }
    }
    if let (Some(g), Some(r), Some(d)) = (&grid, r_ok, delta) {
        let bound = g.n() as f64 / r;
        if matches!(cmd, H2 | Separation) && !(d > bound && d.is_finite()) {
            c.push("delta", format!("δ must exceed n/r = {bound}, got {d}"));
        }
    }
    if cmd == Separation {
        if let Some(b) = beta {
            if !(b > 0.0 && b.is_finite()) {
                c.push("beta", format!("must be positive, got {b}"));
            }
        }
        if let Some(e) = ell {
            if e.min > e.max || e.max > MAX_ELL {
                c.push(
                    "ell",
                    format!("need min ≤ max ≤ {MAX_ELL}, got {}..={}", e.min, e.max),
                );
            }
        }
        if let Some(g) = &grid {
            if g.n() != 1 {
                c.push("grid.n", "separation runs on the line");
            }
        }
    }
    if cmd == Maximal && plan.is_none() {
        if let Some(g) = &grid {
            plan = Some(crate::suite::coarse_plan(g));
        }
    }
    if let (Some(p), Some(g)) = (&plan, &grid) {
        if let Err(e) = p.configs(g) {
            c.push("plan", e);
        }
    }

    // Root and bank.
    if cmd.needs_root() {
        if let Some(g) = &grid {
            let q0 = root.get_or_insert_with(|| default_root(g)).clone();
            if let Err(e) = q0.validate(g) {
                c.push("root", e);
            } else if let Err(e) = check_root(g, &[], &q0) {
                c.push("root", e);
            }
        }
    }
    if cmd.needs_bank() {
        let support = match (&grid, &root) {
            (Some(g), Some(q0)) if cmd.needs_root() => Some(cube_box(g, q0)),
            _ => None,
        };
        let b = bank.get_or_insert_with(|| BankSpec::Default {
            per_shape: DEFAULT_PER_SHAPE,
            seed: 0,
            support: None,
        });
        if let BankSpec::Default {
            support: s @ None, ..
        } = b
        {
            *s = support;
        }
        match b {
            BankSpec::Default { per_shape: 0, .. } => {
                c.push("bank.default.per_shape", "must be positive")
            }
            BankSpec::Entries(e) if e.is_empty() => c.push("bank.entries", "must not be empty"),
            _ => {}
        }
        if let (Some(g), Some(k)) = (&grid, &kernel) {
            match b.generate(g, k.m()) {
                Err(e) => c.push("bank", e),
                Ok(tuples) if cmd.needs_root() => {
                    if let Some(q0) = &root {
                        for t in &tuples {
                            if let Err(e) = check_root(g, &t.refs(), q0) {
                                c.push(format!("bank[{}]", t.label), e);
                                break;
                            }
                        }
                    }
                }
                Ok(_) => {}
            }
        }
    }

    // Weights.
    if cmd == Weights {
        if let (Some(ws), Some(ps), Some(k)) = (&weights, &ps, &kernel) {
            if ws.len() != k.m() {
                c.push(
                    "weights",
                    format!("expected {} weights, got {}", k.m(), ws.len()),
                );
            }
            if ps.len() != k.m() {
                c.push(
                    "ps",
                    format!("expected {} exponents, got {}", k.m(), ps.len()),
                );
            }
            if let Some(r) = r_ok {
                for (i, &p) in ps.iter().enumerate() {
                    if !(p > r && p.is_finite()) {
                        c.push(
                            format!("ps[{i}]"),
                            format!("p_i must exceed r (p_i = {p}, r = {r})"),
                        );
                    }
                }
            }
            if let Some(g) = &grid {
                for (i, w) in ws.iter().enumerate() {
                    if let Err(e) = w.build(g) {
                        c.push(format!("weights[{i}]"), e);
                    }
                }
            }
        }
    }

    if !c.0.is_empty() {
        return Err(ConfigErrors(c.0));
    }
    Ok(ExperimentConfig {
        command: cmd,
        grid,
        kernel,
        modulus,
        bank,
        r,
        q,
        delta,
        gamma,
        mode: mode.unwrap_or_default(),
        plan,
        root,
        depth_cap,
        weights,
        ps,
        beta,
        ell,
        output,
    })
}

impl ExperimentConfig {
    /// Canonical JSON: fixed field order, defaults filled.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn weight_tuple(&self) -> crate::Result<WeightTuple> {
        let grid = self
            .grid
            .as_ref()
            .ok_or_else(|| crate::Error::param("grid", "missing"))?;
        let ws = self
            .weights
            .as_ref()
            .ok_or_else(|| crate::Error::param("weights", "missing"))?
            .iter()
            .map(|w| w.build(grid))
            .collect::<crate::Result<Vec<_>>>()?;
        let ps = self
            .ps
            .clone()
            .ok_or_else(|| crate::Error::param("ps", "missing"))?;
        WeightTuple::new(ws, ps, self.r.unwrap_or(1.0))
    }
}
