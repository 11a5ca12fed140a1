//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use sdom_core::bank::{default_bank, generate_bank};
use sdom_core::builder::{cz_select, exceptional_budget, lemma_pointwise_check};
use sdom_core::maximal::{multilinear_maximal_r, CubeFamilyMode};
use sdom_core::operator::OperatorSpec;
use sdom_core::regularity::{dini_norm, h2_constant, hormander_constant, SamplePlan};
use sdom_core::rng::CounterRng;
use sdom_core::runner::separation_plan;
use sdom_core::suite::{run_case, stability_case, suite_cases, CaseOutcome};
use sdom_core::weights::{
    spearman, vec_ap_characteristic, weighted_norm_ratio, WeightSpec, WeightTuple,
};
use sdom_core::{DyadicCube, GridFunction, GridSpec, KernelSpec, Modulus};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

/// Random exceptional set inside `q0`: scattered cells plus one solid block.
fn random_e(grid: &GridSpec, q0: &DyadicCube, rng: &mut CounterRng) -> Vec<usize> {
    let cells = q0.to_box(grid).cells(grid);
    let budget = exceptional_budget(grid.n(), cells.len());
    let target = rng.below(budget as u64 + 1) as usize;
    let mut mark = vec![false; grid.num_cells()];
    let mut e = Vec::new();
    let mut add = |c: usize, e: &mut Vec<usize>| {
        if e.len() < target && !mark[c] {
            mark[c] = true;
            e.push(c);
        }
    };
    if rng.below(2) == 0 {
        let bx = q0.to_box(grid);
        let side = bx.extent(0);
        let block = 1 + rng.below(side as u64 / 4) as i64;
        let corner: Vec<i64> = (0..grid.n())
            .map(|a| bx.lo[a] + rng.below((side - block + 1) as u64) as i64)
            .collect();
        for c in &cells {
            let xy = grid.cell_coords(*c);
            if (0..grid.n()).all(|a| xy[a] >= corner[a] && xy[a] < corner[a] + block) {
                add(*c, &mut e);
            }
        }
    }
    while e.len() < target {
        let c = cells[rng.below(cells.len() as u64) as usize];
        add(c, &mut e);
    }
    e
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = CounterRng::new(0xC2);
    let mut sets = 0;
    let mut selected = 0;
    for (n, depth) in [(1usize, 10u32), (2, 6)] {
        let grid = GridSpec::unit(n, depth).map_err(e)?;
        let lambda = 1.0 / (1u64 << (n + 1)) as f64;
        for trial in 0..120u64 {
            let level = (trial % 3) as u32;
            let index = (0..n).map(|_| rng.below(1 << level)).collect();
            let q0 = DyadicCube::new(&grid, level, index).map_err(e)?;
            let set = random_e(&grid, &q0, &mut rng);
            let ps = cz_select(&grid, &set, &q0, lambda).map_err(e)?;
            let mut in_e = vec![false; grid.num_cells()];
            set.iter().for_each(|&c| in_e[c] = true);
            let mut owner = vec![usize::MAX; grid.num_cells()];
            for (j, p) in ps.iter().enumerate() {
                let cells = p.to_box(&grid).cells(&grid);
                let hits = cells.iter().filter(|&&c| in_e[c]).count();
                let size = cells.len();
                ensure((hits << (n + 1)) >= size && 2 * hits <= size, || {
                    format!("n={n}: |P∩E| = {hits} out of bounds for |P| = {size}")
                })?;
                for c in cells {
                    ensure(owner[c] == usize::MAX, || {
                        format!("n={n}: cubes {} and {j} overlap", owner[c])
                    })?;
                    owner[c] = j;
                }
            }
            let uncovered = set.iter().filter(|&&c| owner[c] == usize::MAX).count();
            ensure(uncovered == 0, || {
                format!("n={n}: |E ∖ ∪P_j| = {uncovered}")
            })?;
            sets += 1;
            selected += ps.len();
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(10), || format!("took {t:?}"))?;
    Ok(format!(
        "{sets} sets, {selected} cubes, 0 failures, {t:.2?}"
    ))
}

struct SuiteRun {
    outcomes: Vec<CaseOutcome>,
    stability: [CaseOutcome; 2],
    elapsed: Duration,
}

fn run_suite() -> Result<SuiteRun, String> {
    let start = Instant::now();
    let mut outcomes = Vec::new();
    for case in suite_cases().map_err(e)? {
        let (_, o) = run_case(&case, CubeFamilyMode::Dyadic)
            .map_err(|err| format!("{}: {err}", case.name))?;
        outcomes.push(o);
    }
    let mut stab = Vec::new();
    for depth in [6, 7] {
        let case = stability_case(depth).map_err(e)?;
        stab.push(run_case(&case, CubeFamilyMode::Dyadic).map_err(e)?.1);
    }
    let stability = [stab[0].clone(), stab[1].clone()];
    Ok(SuiteRun {
        outcomes,
        stability,
        elapsed: start.elapsed(),
    })
}

fn criterion_2(s: &SuiteRun) -> Check {
    ensure(s.outcomes.len() >= 12, || {
        format!("only {} suite cases", s.outcomes.len())
    })?;
    let mut entries = 0;
    for o in s.outcomes.iter().chain(&s.stability) {
        ensure(o.sparsity.ok, || {
            format!("{}: not ½-sparse ({:?})", o.name, o.sparsity)
        })?;
        ensure(o.node_violations.is_empty(), || {
            format!("{}: {:?}", o.name, o.node_violations)
        })?;
        entries += o.entries;
    }
    Ok(format!(
        "{} cases, {entries} family entries, 0 failures",
        s.outcomes.len()
    ))
}

fn ratio_in(a: f64, b: f64) -> bool {
    a > 0.0 && (0.25..=4.0).contains(&(b / a))
}

fn criterion_3(s: &SuiteRun) -> Check {
    let mut worst = 0.0_f64;
    for o in &s.outcomes {
        let d = &o.domination;
        ensure(d.c_emp.is_finite() && !d.support_flag, || {
            format!("{}: {d:?}", o.name)
        })?;
        worst = worst.max(d.c_emp);
    }
    let (a, b) = (
        s.stability[0].domination.c_emp,
        s.stability[1].domination.c_emp,
    );
    ensure(ratio_in(a, b), || format!("stability C_emp {a} → {b}"))?;
    ensure(s.elapsed < Duration::from_secs(300), || {
        format!("suite took {:?}", s.elapsed)
    })?;
    Ok(format!(
        "max C_emp {worst:.3}; L6→L7 C_emp {a:.3} → {b:.3} (ratio {:.3}); suite {:.1?}",
        b / a,
        s.elapsed
    ))
}

fn criterion_4() -> Check {
    let grid = GridSpec::unit(1, 6).map_err(e)?;
    let bank = generate_bank(&grid, &default_bank(13, 44, None), 2).map_err(e)?;
    let mut checked = 0;
    let mut max_ratio = 0.0_f64;
    for (i, tuple) in bank.iter().take(50).enumerate() {
        let fs = tuple.refs();
        let r = [1.0, 2.0][i % 2];
        let factor = 6f64.powf(2.0 / r);
        let dy = multilinear_maximal_r(&fs, r, CubeFamilyMode::Dyadic).map_err(e)?;
        let all = multilinear_maximal_r(&fs, r, CubeFamilyMode::AllGridCubes).map_err(e)?;
        let sh = multilinear_maximal_r(&fs, r, CubeFamilyMode::DyadicShifted).map_err(e)?;
        for c in 0..grid.num_cells() {
            let (d, a, s) = (dy.get(c), all.get(c), sh.get(c));
            ensure(d <= a, || {
                format!("{}: Dyadic {d} > All {a} at cell {c}", tuple.label)
            })?;
            ensure(a <= factor * s, || {
                format!(
                    "{}: All {a} > 6^(mn/r)·Shifted {s} at cell {c}",
                    tuple.label
                )
            })?;
            if s > 0.0 {
                max_ratio = max_ratio.max(a / s);
            }
        }
        checked += 1;
    }
    ensure(checked == 50, || format!("bank has only {checked} tuples"))?;
    Ok(format!(
        "50 inputs, 0 failures; max All/Shifted = {max_ratio:.3}"
    ))
}

fn criterion_5() -> Check {
    let grid = GridSpec::unit(1, 8).map_err(e)?;
    let plan = SamplePlan::dyadic(1, 5, 2);
    for k in [
        KernelSpec::named(1, "y_only").map_err(e)?,
        KernelSpec::zero(2),
    ] {
        let kr = hormander_constant(&k, &grid, 2.0, &plan).map_err(e)?.value;
        let h2 = h2_constant(&k, &grid, 2.0, 1.5, &plan).map_err(e)?.value;
        ensure(kr == 0.0 && h2 == 0.0, || {
            format!("x-independent kernel: K_r = {kr}, H2 = {h2}")
        })?;
    }
    let d1 = dini_norm(&Modulus::Power { c: 1.0, eps: 1.0 }).map_err(e)?;
    let d2 = dini_norm(&Modulus::Power { c: 1.0, eps: 0.5 }).map_err(e)?;
    ensure((d1 - 1.0).abs() <= 1e-5 && (d2 - 2.0).abs() <= 1e-5, || {
        format!("Dini norms {d1}, {d2}")
    })?;
    let k = KernelSpec::mpt(1.0, 2.0).map_err(e)?;
    let plan = SamplePlan::dyadic(1, 6, 2);
    let mut v = Vec::new();
    for depth in [10, 11] {
        let g = GridSpec::new(1, depth, &[0.0], 8.0).map_err(e)?;
        v.push(hormander_constant(&k, &g, 2.0, &plan).map_err(e)?.value);
    }
    let rel = (v[1] - v[0]).abs() / v[0];
    ensure(rel <= 0.05, || {
        format!("MPT K_r L10 {} vs L11 {} ({rel:.3})", v[0], v[1])
    })?;
    Ok(format!(
        "x-independent → 0; Dini t: {d1:.7}, t^1/2: {d2:.7}; MPT K_r {:.4} vs {:.4} ({:.2}%)",
        v[0],
        v[1],
        100.0 * rel
    ))
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let grid = GridSpec::new(1, 14, &[0.0], 8.0).map_err(e)?;
    let mut kr = Vec::new();
    let mut h2 = Vec::new();
    for ell in 2..=5 {
        let k = KernelSpec::mpt_truncated(1.0, 2.0, ell).map_err(e)?;
        let plan = separation_plan(ell);
        kr.push(hormander_constant(&k, &grid, 2.0, &plan).map_err(e)?.value);
        h2.push(h2_constant(&k, &grid, 2.0, 1.0, &plan).map_err(e)?.value);
    }
    let lo = kr.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = kr.iter().copied().fold(0.0, f64::max);
    ensure(hi <= 2.0 * lo, || format!("K_r spread {kr:?}"))?;
    let ratios: Vec<f64> = h2.windows(2).map(|w| w[1] / w[0]).collect();
    ensure(ratios.iter().all(|&q| q >= 1.3), || {
        format!("H2 {h2:?}, ratios {ratios:?}")
    })?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(600), || format!("took {t:?}"))?;
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.2}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    Ok(format!(
        "K_r [{}], H2 [{}], H2 ratios [{}], {t:.1?}",
        fmt(&kr),
        fmt(&h2),
        fmt(&ratios)
    ))
}

fn criterion_7(s: &SuiteRun) -> Check {
    for o in &s.outcomes {
        ensure(o.mt.c_emp.is_finite() && !o.mt.infinite, || {
            format!("{}: {:?}", o.name, o.mt)
        })?;
    }
    let (a, b) = (s.stability[0].mt.c_emp, s.stability[1].mt.c_emp);
    ensure(ratio_in(a, b), || format!("stability c_emp {a} → {b}"))?;
    let case = stability_case(6).map_err(e)?;
    let lemma = lemma_pointwise_check(&case.op, &case.refs(), &case.root, CubeFamilyMode::Dyadic)
        .map_err(e)?;
    ensure(!lemma.infinite, || {
        format!("local bound infinite: {lemma:?}")
    })?;
    Ok(format!(
        "{} cases finite; L6→L7 c_emp {a:.3} → {b:.3} (ratio {:.3}); local c_emp {:.3}",
        s.outcomes.len(),
        b / a,
        lemma.c_emp
    ))
}

fn criterion_8() -> Check {
    let grid = GridSpec::unit(1, 8).map_err(e)?;
    let mode = CubeFamilyMode::Dyadic;
    let one = GridFunction::constant(&grid, 1.0);
    let w1 = WeightTuple::new(vec![one.clone(), one], vec![3.0, 6.0], 1.5).map_err(e)?;
    let c1 = vec_ap_characteristic(&w1, mode).map_err(e)?;
    ensure(c1 == 1.0, || format!("w ≡ 1 gives {c1}"))?;

    let mut rng = CounterRng::new(0x8A);
    let mut min_char = f64::INFINITY;
    let mut worst_scale = 0.0_f64;
    for _ in 0..50 {
        let ws: Vec<GridFunction> = (0..2)
            .map(|_| {
                let v = (0..grid.num_cells())
                    .map(|_| (rng.uniform(-3.0, 3.0)).exp())
                    .collect();
                GridFunction::new(grid.clone(), v)
            })
            .collect::<Result<_, _>>()
            .map_err(e)?;
        let ps = vec![rng.uniform(2.1, 5.0), rng.uniform(2.1, 5.0)];
        let r = rng.uniform(1.0, 2.0);
        let t = WeightTuple::new(ws.clone(), ps.clone(), r).map_err(e)?;
        let c = vec_ap_characteristic(&t, mode).map_err(e)?;
        min_char = min_char.min(c);
        let scale = rng.uniform(0.01, 100.0);
        let scaled = ws
            .iter()
            .map(|w| w.map(|x| scale * x))
            .collect::<Result<Vec<_>, _>>()
            .map_err(e)?;
        let cs =
            vec_ap_characteristic(&WeightTuple::new(scaled, ps, r).map_err(e)?, mode).map_err(e)?;
        worst_scale = worst_scale.max((cs - c).abs() / c);
    }
    ensure(min_char >= 1.0 - 1e-10, || {
        format!("characteristic {min_char} < 1")
    })?;
    ensure(worst_scale <= 1e-12, || {
        format!("scale drift {worst_scale:e}")
    })?;

    let op =
        OperatorSpec::new(KernelSpec::named(1, "hilbert").map_err(e)?, grid.clone()).map_err(e)?;
    let bank = generate_bank(&grid, &default_bank(10, 7, None), 1).map_err(e)?;
    let mut chars = Vec::new();
    let mut ratios = Vec::new();
    for a in [0.0, 0.25, 0.5, 0.75] {
        let w = WeightSpec::Power {
            center: vec![0.5],
            a,
            scale: 1.0,
        }
        .build(&grid)
        .map_err(e)?;
        let t = WeightTuple::new(vec![w], vec![2.0], 1.0).map_err(e)?;
        let rep = weighted_norm_ratio(&op, &t, &bank, mode).map_err(e)?;
        chars.push(rep.characteristic);
        ratios.push(rep.max_ratio);
    }
    let rho = spearman(&chars, &ratios);
    ensure(rho >= 0.5, || {
        format!("Spearman {rho}: chars {chars:?}, ratios {ratios:?}")
    })?;
    Ok(format!(
        "w≡1 → 1; min char {min_char:.4} over 50; scale drift {worst_scale:.1e}; Spearman {rho:.2}"
    ))
}

const DET_CONFIG: &str = r#"{"command":"COMMAND","grid":{"n":1,"L":8,"origin":[0.0],"side":1.0},
"kernel":{"variant":"BilinearOddHomogeneous","m":2},"r":2.0,"q":1.0,
"bank":{"default":{"per_shape":3,"seed":21}}}"#;

fn run_cli(dir: &Path, command: &str, threads: usize) -> Result<(Vec<u8>, Vec<u8>), String> {
    let cfg = dir.join(format!("{command}.config.json"));
    std::fs::write(&cfg, DET_CONFIG.replace("COMMAND", command)).map_err(e)?;
    let out = dir.join(format!("{command}-{threads}"));
    let status = Command::new(env!("CARGO_BIN_EXE_sdom"))
        .arg(command)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .arg("--threads")
        .arg(threads.to_string())
        .output()
        .map_err(e)?;
    ensure(status.status.success(), || {
        format!(
            "{command} --threads {threads}: {}",
            String::from_utf8_lossy(&status.stderr)
        )
    })?;
    let json = std::fs::read(out.join(format!("{command}.json"))).map_err(e)?;
    let csv = std::fs::read(out.join(format!("{command}.csv"))).map_err(e)?;
    Ok((json, csv))
}

fn criterion_9() -> Check {
    let dir = tempfile::tempdir().map_err(e)?;
    let max = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let mut counts = vec![1, 2, max];
    counts.sort_unstable();
    counts.dedup();
    for command in ["build", "dominate"] {
        let reference = run_cli(dir.path(), command, 1)?;
        for &t in &counts[1..] {
            let other = run_cli(dir.path(), command, t)?;
            ensure(other == reference, || {
                format!("{command}: threads 1 vs {t} differ")
            })?;
        }
    }
    Ok(format!(
        "build and dominate byte-identical across threads {counts:?}"
    ))
}

fn main() {
    let mut results: Vec<(u32, &str, Check)> = vec![(1, "cz selection", criterion_1())];
    match run_suite() {
        Ok(s) => {
            results.push((2, "sparseness", criterion_2(&s)));
            results.push((3, "domination", criterion_3(&s)));
            results.push((7, "grand maximal bound", criterion_7(&s)));
        }
        Err(msg) => {
            for (n, name) in [
                (2, "sparseness"),
                (3, "domination"),
                (7, "grand maximal bound"),
            ] {
                results.push((n, name, Err(msg.clone())));
            }
        }
    }
    results.push((4, "maximal oracles", criterion_4()));
    results.push((5, "kernel functionals", criterion_5()));
    results.push((6, "separation", criterion_6()));
    results.push((8, "weights", criterion_8()));
    results.push((9, "determinism", criterion_9()));
    results.sort_by_key(|r| r.0);
    let mut failures = 0;
    for (n, name, res) in results {
        match res {
            Ok(msg) => println!("criterion {n} [{name}]: PASS - {msg}"),
            Err(msg) => {
                failures += 1;
                println!("criterion {n} [{name}]: FAIL - {msg}");
            }
        }
    }
    if failures > 0 {
        println!("acceptance: {failures} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
