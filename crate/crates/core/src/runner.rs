//! Dispatches a parsed config and writes its JSON and CSV reports.
//!
//! Reports land in `<out>/<command>.json` and `<out>/<command>.csv`, both
//! carrying the config hash. Files are written to temporaries in the output
//! directory and renamed into place only after both are complete.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bank::InputTuple;
use crate::builder::{build_sparse_family_capped, domination_constant, BuildOutput};
use crate::config::{Command, ExperimentConfig};
use crate::error::Error;
use crate::grid::GridSpec;
use crate::kernel::KernelSpec;
use crate::maximal::mt_pointwise_bound_check;
use crate::operator::{weak_norm, OperatorSpec};
use crate::regularity::{dini_quadrature, h2_constant, hormander_constant, SamplePlan};
use crate::sparse::{carleson_sum, verify_witness_sparsity};
use crate::weights::weighted_norm_ratio;

/// Characteristic values below `1 − CHAR_TOL` are reported as violations.
const CHAR_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 1,
            RunError::Invariant(_) => 2,
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::Invariant(s) => RunError::Invariant(s),
            other => RunError::Usage(other.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub json_path: PathBuf,
    pub csv_path: PathBuf,
    pub config_hash: String,
    /// Invariant violations seen during the run; the reports list them too.
    pub violations: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.violations.is_empty() {
            0
        } else {
            2
        }
    }
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

struct Computed {
    result: Value,
    table: Table,
    violations: Vec<String>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, RunError> {
    serde_json::to_value(v).map_err(|e| RunError::Usage(e.to_string()))
}

fn missing(field: &str) -> RunError {
    RunError::Usage(format!("{field}: missing"))
}

struct Parts<'a> {
    grid: &'a GridSpec,
    r: f64,
}

fn parts(cfg: &ExperimentConfig) -> Result<Parts<'_>, RunError> {
    Ok(Parts {
        grid: cfg.grid.as_ref().ok_or_else(|| missing("grid"))?,
        r: cfg.r.ok_or_else(|| missing("r"))?,
    })
}

fn operator(cfg: &ExperimentConfig) -> Result<OperatorSpec, RunError> {
    let kernel = cfg.kernel.clone().ok_or_else(|| missing("kernel"))?;
    let grid = cfg.grid.clone().ok_or_else(|| missing("grid"))?;
    Ok(OperatorSpec::new(kernel, grid)?)
}

fn bank(cfg: &ExperimentConfig, op: &OperatorSpec) -> Result<Vec<InputTuple>, RunError> {
    let spec = cfg.bank.as_ref().ok_or_else(|| missing("bank"))?;
    Ok(spec.generate(op.grid(), op.m())?)
}

fn estimate(cfg: &ExperimentConfig) -> Result<Computed, RunError> {
    let p = parts(cfg)?;
    let kernel = cfg.kernel.as_ref().ok_or_else(|| missing("kernel"))?;
    let plan = cfg.plan.as_ref().ok_or_else(|| missing("plan"))?;
    let rep = match cfg.command {
        Command::H2 => h2_constant(
            kernel,
            p.grid,
            p.r,
            cfg.delta.ok_or_else(|| missing("delta"))?,
            plan,
        )?,
        _ => hormander_constant(kernel, p.grid, p.r, plan)?,
    };
    let mut table = Table::new(&[
        "value",
        "k_max",
        "tail_flag",
        "skipped",
        "cubes",
        "pairs",
        "coincident",
        "lower_bound",
    ]);
    table.push(vec![
        rep.value.to_string(),
        rep.k_max.to_string(),
        rep.tail_flag.to_string(),
        rep.skipped.to_string(),
        rep.samples.cubes.to_string(),
        rep.samples.pairs.to_string(),
        rep.samples.coincident.to_string(),
        rep.lower_bound.to_string(),
    ]);
    Ok(Computed {
        result: to_value(&rep)?,
        table,
        violations: Vec::new(),
    })
}

fn dini(cfg: &ExperimentConfig) -> Result<Computed, RunError> {
    let modulus = cfg.modulus.as_ref().ok_or_else(|| missing("modulus"))?;
    let rep = dini_quadrature(modulus)?;
    let mut table = Table::new(&["value", "pieces", "tail"]);
    table.push(vec![
        rep.value.to_string(),
        rep.pieces.to_string(),
        rep.tail.to_string(),
    ]);
    Ok(Computed {
        result: to_value(&rep)?,
        table,
        violations: Vec::new(),
    })
}

struct Built {
    out: BuildOutput,
    value: Value,
    violations: Vec<String>,
}

/// Builds the family for every bank tuple, checking sparsity and node counts.
fn build_all(
    cfg: &ExperimentConfig,
    op: &OperatorSpec,
    tuples: &[InputTuple],
) -> Result<Vec<Built>, RunError> {
    let root = cfg.root.as_ref().ok_or_else(|| missing("root"))?;
    let r = cfg.r.ok_or_else(|| missing("r"))?;
    let grid = op.grid();
    let cap = cfg.depth_cap.unwrap_or(2 * grid.depth() as usize);
    tuples
        .par_iter()
        .map(|t| {
            let out = build_sparse_family_capped(op, &t.refs(), root, r, cfg.mode, cap)?;
            let sparsity = verify_witness_sparsity(&out.family, grid, cfg.gamma)?;
            let carleson = carleson_sum(&out.family);
            let mut violations: Vec<String> = out
                .stats
                .iter()
                .flat_map(|s| {
                    s.violations(grid.n())
                        .into_iter()
                        .map(move |v| format!("cube {:?}: {v}", (s.cube.level, &s.cube.index)))
                })
                .collect();
            if !sparsity.ok {
                violations.push(format!("family is not {}-sparse", cfg.gamma));
            }
            if carleson > 1.0 / cfg.gamma + 1e-12 {
                violations.push(format!("Carleson sum {carleson} exceeds 1/γ"));
            }
            let violations = violations
                .into_iter()
                .map(|v| format!("{}: {v}", t.label))
                .collect();
            let value = json!({
                "label": t.label,
                "family": out.family,
                "stats": out.stats,
                "max_tau": out.max_tau,
                "sparsity": sparsity,
                "carleson": carleson,
            });
            Ok(Built {
                out,
                value,
                violations,
            })
        })
        .collect::<Result<Vec<_>, Error>>()
        .map_err(RunError::from)
}

fn levels(out: &BuildOutput) -> usize {
    let mut levels: Vec<u32> = out.family.entries.iter().map(|e| e.level).collect();
    levels.dedup();
    levels.len()
}

fn build(cfg: &ExperimentConfig) -> Result<Computed, RunError> {
    let op = operator(cfg)?;
    let tuples = bank(cfg, &op)?;
    let built = build_all(cfg, &op, &tuples)?;
    let mut table = Table::new(&[
        "label",
        "entries",
        "levels",
        "carleson",
        "max_tau",
        "sparse",
        "worst_ratio",
        "violations",
    ]);
    let mut cases = Vec::with_capacity(built.len());
    let mut violations = Vec::new();
    for (t, b) in tuples.iter().zip(built) {
        let s = &b.value["sparsity"];
        table.push(vec![
            t.label.clone(),
            b.out.family.len().to_string(),
            levels(&b.out).to_string(),
            b.value["carleson"].to_string(),
            b.out.max_tau.to_string(),
            s["ok"].to_string(),
            s["worst_ratio"].to_string(),
            b.violations.len().to_string(),
        ]);
        violations.extend(b.violations);
        cases.push(b.value);
    }
    Ok(Computed {
        result: json!({ "cases": cases }),
        table,
        violations,
    })
}

fn dominate(cfg: &ExperimentConfig) -> Result<Computed, RunError> {
    let op = operator(cfg)?;
    let tuples = bank(cfg, &op)?;
    let r = cfg.r.ok_or_else(|| missing("r"))?;
    let built = build_all(cfg, &op, &tuples)?;
    let reports = tuples
        .par_iter()
        .zip(&built)
        .map(|(t, b)| domination_constant(&op, &t.refs(), &b.out.family, r))
        .collect::<Result<Vec<_>, Error>>()?;
    let weak = cfg.q.map(|q| weak_norm(&op, q, &tuples)).transpose()?;
    let mut table = Table::new(&[
        "label",
        "entries",
        "C_emp",
        "argmax_cell",
        "support_flag",
        "weak_ratio",
    ]);
    let mut cases = Vec::with_capacity(built.len());
    let mut violations = Vec::new();
    for (i, ((t, b), d)) in tuples.iter().zip(built).zip(&reports).enumerate() {
        table.push(vec![
            t.label.clone(),
            b.out.family.len().to_string(),
            d.c_emp.to_string(),
            opt(d.argmax_cell),
            d.support_flag.to_string(),
            opt(weak.as_ref().map(|w| w.ratios[i])),
        ]);
        violations.extend(b.violations);
        cases.push(json!({
            "label": t.label,
            "entries": b.out.family.len(),
            "domination": d,
        }));
    }
    let c_max = reports.iter().map(|d| d.c_emp).fold(0.0, f64::max);
    Ok(Computed {
        result: json!({ "cases": cases, "C_emp_max": c_max, "weak": weak }),
        table,
        violations,
    })
}

fn maximal(cfg: &ExperimentConfig) -> Result<Computed, RunError> {
    let op = operator(cfg)?;
    let tuples = bank(cfg, &op)?;
    let p = parts(cfg)?;
    let plan = cfg.plan.as_ref().ok_or_else(|| missing("plan"))?;
    let k_r = hormander_constant(op.kernel(), p.grid, p.r, plan)?;
    let reports = tuples
        .par_iter()
        .map(|t| mt_pointwise_bound_check(&op, &t.refs(), p.r, k_r.value, cfg.mode))
        .collect::<Result<Vec<_>, Error>>()?;
    let mut table = Table::new(&["label", "c_emp", "argmax_cell", "infinite", "k_r"]);
    for (t, m) in tuples.iter().zip(&reports) {
        table.push(vec![
            t.label.clone(),
            m.c_emp.to_string(),
            opt(m.argmax_cell),
            m.infinite.to_string(),
            m.k_r.to_string(),
        ]);
    }
    let cases: Vec<Value> = tuples
        .iter()
        .zip(&reports)
        .map(|(t, m)| json!({ "label": t.label, "check": m }))
        .collect();
    Ok(Computed {
        result: json!({ "k_r": k_r, "cases": cases }),
        table,
        violations: Vec::new(),
    })
}

fn weights(cfg: &ExperimentConfig) -> Result<Computed, RunError> {
    let op = operator(cfg)?;
    let tuples = bank(cfg, &op)?;
    let w = cfg.weight_tuple()?;
    let rep = weighted_norm_ratio(&op, &w, &tuples, cfg.mode)?;
    let mut table = Table::new(&["label", "ratio", "char", "exponent", "bound"]);
    for (t, ratio) in tuples.iter().zip(&rep.ratios) {
        table.push(vec![
            t.label.clone(),
            ratio.to_string(),
            rep.characteristic.to_string(),
            rep.exponent.to_string(),
            rep.bound.to_string(),
        ]);
    }
    let mut violations = Vec::new();
    if rep.characteristic < 1.0 - CHAR_TOL {
        violations.push(format!("characteristic {} < 1", rep.characteristic));
    }
    Ok(Computed {
        result: to_value(&rep)?,
        table,
        violations,
    })
}

/// Sample plan used for truncation index `ell` when the config has none.
pub fn separation_plan(ell: u32) -> SamplePlan {
    SamplePlan::dyadic(1, ell + 4, 2)
}

fn separation(cfg: &ExperimentConfig) -> Result<Computed, RunError> {
    let p = parts(cfg)?;
    let delta = cfg.delta.ok_or_else(|| missing("delta"))?;
    let beta = cfg.beta.unwrap_or(1.0);
    let range = cfg.ell.ok_or_else(|| missing("ell"))?;
    let rows = (range.min..=range.max)
        .into_par_iter()
        .map(|ell| {
            let kernel = KernelSpec::mpt_truncated(beta, p.r, ell)?;
            let plan = cfg.plan.clone().unwrap_or_else(|| separation_plan(ell));
            let kr = hormander_constant(&kernel, p.grid, p.r, &plan)?;
            let h2 = h2_constant(&kernel, p.grid, p.r, delta, &plan)?;
            Ok((ell, kr, h2))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let mut table = Table::new(&["ell", "K_r", "h2"]);
    let mut cases = Vec::with_capacity(rows.len());
    for (ell, kr, h2) in rows {
        table.push(vec![
            ell.to_string(),
            kr.value.to_string(),
            h2.value.to_string(),
        ]);
        cases.push(json!({ "ell": ell, "K_r": kr, "h2": h2 }));
    }
    Ok(Computed {
        result: json!({ "beta": beta, "cases": cases }),
        table,
        violations: Vec::new(),
    })
}

fn compute(cfg: &ExperimentConfig) -> Result<Computed, RunError> {
    match cfg.command {
        Command::Kr | Command::H2 => estimate(cfg),
        Command::Dini => dini(cfg),
        Command::Build => build(cfg),
        Command::Dominate => dominate(cfg),
        Command::Maximal => maximal(cfg),
        Command::Weights => weights(cfg),
        Command::Separation => separation(cfg),
    }
}

fn csv_bytes(hash: &str, table: &Table) -> Result<Vec<u8>, RunError> {
    let io = |e: csv::Error| RunError::Usage(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["config_hash"];
    header.extend(&table.header);
    w.write_record(&header).map_err(io)?;
    for row in &table.rows {
        w.write_record(std::iter::once(hash).chain(row.iter().map(String::as_str)))
            .map_err(io)?;
    }
    w.into_inner()
        .map_err(|e| RunError::Usage(format!("csv: {e}")))
}

fn stage(dir: &Path, bytes: &[u8]) -> std::io::Result<tempfile::NamedTempFile> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    Ok(tmp)
}

/// Writes both reports or neither.
fn write_reports(dir: &Path, files: [(&Path, &[u8]); 2]) -> Result<(), RunError> {
    let io = |p: &Path, e: std::io::Error| RunError::Usage(format!("{}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut staged = Vec::with_capacity(2);
    for (path, bytes) in files {
        staged.push((path, stage(dir, bytes).map_err(|e| io(path, e))?));
    }
    let mut done: Vec<&Path> = Vec::new();
    for (path, tmp) in staged {
        if let Err(e) = tmp.persist(path) {
            for p in done {
                let _ = fs::remove_file(p);
            }
            return Err(io(path, e.error));
        }
        done.push(path);
    }
    Ok(())
}

/// Runs the experiment and writes `<command>.json` and `<command>.csv` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let hash = cfg.hash();
    let computed = compute(cfg)?;
    let report = json!({
        "config_hash": hash,
        "command": cfg.command,
        "config": cfg,
        "result": computed.result,
        "violations": computed.violations,
    });
    let mut json_bytes =
        serde_json::to_vec_pretty(&report).map_err(|e| RunError::Usage(e.to_string()))?;
    json_bytes.push(b'\n');
    let csv = csv_bytes(&hash, &computed.table)?;
    let json_path = out_dir.join(format!("{}.json", cfg.command));
    let csv_path = out_dir.join(format!("{}.csv", cfg.command));
    write_reports(out_dir, [(&json_path, &json_bytes), (&csv_path, &csv)])?;
    Ok(RunOutcome {
        json_path,
        csv_path,
        config_hash: hash,
        violations: computed.violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn run(text: &str) -> (tempfile::TempDir, RunOutcome) {
        let cfg = parse_config(text.as_bytes()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, dir.path()).unwrap();
        (dir, out)
    }

    fn read_csv(p: &Path) -> Vec<csv::StringRecord> {
        let mut r = csv::Reader::from_path(p).unwrap();
        r.records().map(|r| r.unwrap()).collect()
    }

    #[test]
    fn dominate_zero_kernel() {
        let (_d, out) = run(
            r#"{"command":"dominate","grid":{"n":1,"L":6,"origin":[0.0],"side":1.0},
            "kernel":{"variant":"Custom","m":2,"name":"zero"},"r":2.0,
            "bank":{"default":{"per_shape":1,"seed":5}}}"#,
        );
        assert_eq!(out.exit_code(), 0);
        let report: Value = serde_json::from_slice(&fs::read(&out.json_path).unwrap()).unwrap();
        assert_eq!(report["config_hash"], out.config_hash);
        assert_eq!(report["result"]["C_emp_max"], 0.0);
        let rows = read_csv(&out.csv_path);
        assert_eq!(rows.len(), 4);
        assert!(rows
            .iter()
            .all(|r| &r[0] == out.config_hash.as_str() && &r[3] == "0"));
    }

    #[test]
    fn build_is_reproducible() {
        let text = r#"{"command":"build","grid":{"n":1,"L":6,"origin":[0.0],"side":1.0},
            "kernel":{"variant":"BilinearOddHomogeneous","m":2},"r":2.0,
            "bank":{"default":{"per_shape":2,"seed":9}}}"#;
        let (_a, a) = run(text);
        let (_b, b) = run(text);
        assert_eq!(a.exit_code(), 0, "{:?}", a.violations);
        assert_eq!(
            fs::read(&a.json_path).unwrap(),
            fs::read(&b.json_path).unwrap()
        );
        assert_eq!(
            fs::read(&a.csv_path).unwrap(),
            fs::read(&b.csv_path).unwrap()
        );
    }

    #[test]
    fn separation_csv_trend() {
        let (_d, out) = run(
            r#"{"command":"separation","grid":{"n":1,"L":12,"origin":[0.0],"side":8.0},
            "r":2.0,"delta":1.0,"ell":{"min":2,"max":4}}"#,
        );
        let rows = read_csv(&out.csv_path);
        let col = |i: usize| -> Vec<f64> { rows.iter().map(|r| r[i].parse().unwrap()).collect() };
        let (kr, h2) = (col(2), col(3));
        assert!(h2.windows(2).all(|w| w[1] >= w[0]), "{h2:?}");
        let (lo, hi) = kr
            .iter()
            .fold((f64::MAX, 0.0_f64), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(hi <= 2.0 * lo, "{kr:?}");
    }

    #[test]
    fn csv_quotes_fields() {
        let mut t = Table::new(&["label"]);
        t.push(vec!["a,\"b\"".into()]);
        let bytes = csv_bytes("h", &t).unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "config_hash,label\nh,\"a,\"\"b\"\"\"\n"
        );
    }

    #[test]
    fn failed_run_leaves_no_files() {
        let cfg = parse_config(
            br#"{"command":"dominate","grid":{"n":1,"L":8,"origin":[0.0],"side":1.0},
            "kernel":{"variant":"BilinearOddHomogeneous","m":2},"r":2.0,"depth_cap":1,
            "bank":{"default":{"per_shape":3,"seed":2}}}"#,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = run_experiment(&cfg, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
