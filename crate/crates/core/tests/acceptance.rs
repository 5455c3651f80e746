//! Acceptance suite: runs every named experiment at its default
//! configuration, re-derives each criterion from the emitted tables and
//! prints one PASS/FAIL line per criterion. Exits non-zero on any failure.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Duration;

use levy_exit::experiments::{run, ExperimentConfig, Outcome, NAMES};

struct Line {
    id: usize,
    name: &'static str,
    ok: bool,
    detail: String,
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn check_elapsed(o: &Outcome, check: &str) -> Duration {
    o.check(check).map_or(o.elapsed, |c| c.elapsed)
}

fn passed(o: &Outcome, check: &str) -> bool {
    o.check(check).is_some_and(|c| c.passed)
}

type Res<T> = Result<T, Box<dyn std::error::Error>>;

fn counterexample(o: &Outcome, base: f64, shifted: impl Fn(f64) -> f64, gap: f64, check: &str) -> Res<(bool, String)> {
    let t = o.table("entrance")?;
    let n = t.nums("n")?;
    let time = t.nums("time")?;
    let mut ok = passed(o, check) && time[0] == base;
    let mut worst: f64 = 0.0;
    for i in 1..n.len() {
        let dev = (time[i] - shifted(n[i])).abs();
        worst = worst.max(dev);
        ok &= dev <= 1e-12;
    }
    let last_gap = (time[n.len() - 1] - base).abs();
    ok &= (last_gap - gap).abs() <= 1.5 / n[n.len() - 1];
    Ok((
        ok,
        format!("T = {}, max |T_n − expected| = {worst:e}, last gap {last_gap}", time[0]),
    ))
}

fn criteria(out: &BTreeMap<&str, Outcome>) -> Res<Vec<Line>> {
    let mut lines = Vec::new();
    let mut push = |id, name, ok: bool, budget: f64, took: Duration, detail: String| {
        let fast = secs(took) < budget;
        lines.push(Line {
            id,
            name,
            ok: ok && fast,
            detail: format!("{detail}; {:.3} s (budget {budget} s)", secs(took)),
        });
    };

    let o = &out["c1-upper"];
    let (ok, d) = counterexample(o, 0.5, |n| 1.5 - 1.0 / n, 1.0, "c1-upper")?;
    push(1, "c1-upper", ok, 1.0, o.elapsed, d);

    let o = &out["c1-lower"];
    let (ok, d) = counterexample(o, 2.0 / 3.0, |n| 1.0 / 3.0 - 1.0 / n, 1.0 / 3.0, "c1-lower")?;
    push(2, "c1-lower", ok, 1.0, o.elapsed, d);

    let o = &out["c2-jump"];
    let t = o.table("entrance")?;
    let (g, gh, pt, time) = (
        t.bools("in_gamma")?,
        t.bools("in_gamma_hat")?,
        t.nums("point")?,
        t.nums("time")?,
    );
    let gaps: Vec<f64> = time[1..].iter().map(|v| (v - time[0]).abs()).collect();
    let ok = passed(o, "c2-jump")
        && g[0]
        && !gh[0]
        && pt[0] == -1.0
        && pt[1..].iter().all(|&p| p == 0.0)
        && gaps.windows(2).all(|w| w[1] < w[0])
        && gaps[gaps.len() - 1] < 2e-3;
    push(
        3,
        "c2-jump",
        ok,
        1.0,
        o.elapsed,
        format!("Π = {}, Π_n = {:?}, |T_n − T| = {gaps:?}", pt[0], &pt[1..]),
    );

    let o = &out["continuity-scan"];
    let t = o.table("continuity")?;
    let paths: std::collections::BTreeSet<i64> = t.texts("path")?.iter().map(|s| s.parse().unwrap_or(-1)).collect();
    let all_gh = t.bools("in_gamma_hat")?.iter().all(|b| *b);
    let ok = passed(o, "continuity") && paths.len() == 1000 && all_gh;
    push(
        4,
        "continuity-suite",
        ok,
        30.0,
        check_elapsed(o, "continuity"),
        format!(
            "{} paths; {}",
            paths.len(),
            o.check("continuity").map_or("", |c| &c.detail)
        ),
    );

    let s = o.table("semicontinuity_summary")?;
    let seqs = s.nums("sequences")?;
    let viol = s.nums("violations")?;
    let ok = passed(o, "semicontinuity") && seqs.iter().all(|&n| n >= 500.0) && viol.iter().all(|&v| v == 0.0);
    push(
        5,
        "semicontinuity",
        ok,
        10.0,
        check_elapsed(o, "semicontinuity"),
        format!("sequences {seqs:?}, violations {viol:?}"),
    );

    let o = &out["metric-bench"];
    let g = o.table("golden")?;
    let expected = 1.25f64.ln();
    let (u, l) = (g.nums("upper")?[0], g.nums("lower")?[0]);
    let sym = o.table("symmetry")?;
    let all_sym = sym.bools("symmetric")?.iter().all(|b| *b);
    let ok = (u - expected).abs() <= 1e-6
        && (l - expected).abs() <= 1e-6
        && sym.len() == 200
        && all_sym
        && passed(o, "metric-golden")
        && passed(o, "metric-symmetry");
    push(
        6,
        "metric",
        ok,
        10.0,
        o.elapsed,
        format!("upper {u}, lower {l}, {} symmetric pairs", sym.len()),
    );

    let o = &out["split-invariance"];
    let inv = o.table("invariance")?;
    let disc = inv.nums("max_discrepancy")?;
    let within = inv.bools("within_errors")?.iter().all(|b| *b);
    let worst = disc.iter().cloned().fold(0.0, f64::max);
    let ok = passed(o, "split-invariance") && inv.len() == 12 && within && worst <= 1e-5;
    push(
        7,
        "split-identity",
        ok,
        60.0,
        check_elapsed(o, "split-invariance"),
        format!("{} (candidate, α) cases, max discrepancy {worst:e}", inv.len()),
    );

    let o = &out["drift-1d"];
    let t = o.table("value")?;
    let (x, mean, se) = (t.nums("x")?, t.nums("mean")?, t.nums("std_error")?);
    let mut ok = passed(o, "drift-1d") && x == [0.0, 0.25, 0.5, 0.75];
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let err = (mean[i] - (1.0 - (-(1.0 - x[i])).exp())).abs();
        worst = worst.max(err);
        ok &= err <= 2.0 * 1e-4 + 3.0 * se[i];
    }
    push(8, "drift-1d", ok, 10.0, o.elapsed, format!("max |error| {worst:e}"));

    let o = &out["bm-1d"];
    let t = o.table("value")?;
    let (m, se, n) = (t.nums("mean")?[0], t.nums("std_error")?[0], t.nums("N")?[0]);
    let exact = 1.0 / 2f64.sqrt().cosh();
    let ok = passed(o, "bm-1d") && n == 1e5 && (m - exact).abs() <= 3.0 * se + 5e-3;
    push(
        9,
        "bm-1d",
        ok,
        300.0,
        o.elapsed,
        format!("V̂(0) = {m} ± {se}, exact {exact}"),
    );

    let o = &out["stable-2d"];
    let t = o.table("scan")?;
    let (d, m) = (t.nums("distance")?, t.nums("mean")?);
    let k = m.len();
    let ok =
        passed(o, "stable-2d") && d[k - 1] == 0.01 && m[k - 1] <= 0.1 && m[k - 3] > m[k - 2] && m[k - 2] > m[k - 1];
    push(
        10,
        "stable-2d",
        ok,
        300.0,
        o.elapsed,
        format!("V̂ at last three distances {:?}", &m[k - 3..]),
    );

    let o = &out["ms-continuity"];
    let slope = o.table("slope")?.nums("slope")?[0];
    let ok = passed(o, "ms-continuity") && (slope - 2.0).abs() <= 0.2;
    push(11, "ms-continuity", ok, 120.0, o.elapsed, format!("slope {slope}"));

    let o = &out["gamma-census"];
    let s = o.table("summary")?;
    let (n, frac) = (s.nums("N")?[0], s.nums("in_gamma_hat_fraction")?[0]);
    let ok = passed(o, "gamma-census") && n == 1e4 && frac >= 0.99;
    push(
        12,
        "gamma-census",
        ok,
        300.0,
        o.elapsed,
        format!("fraction {frac:.4} of {n} skeletons in Γ̂_O"),
    );

    let o = &out["split-invariance"];
    let r = o.table("residuals")?;
    let (res, bound) = (r.nums("residual")?, r.nums("bound")?);
    let over = res.iter().zip(&bound).filter(|(a, b)| a.abs() > **b).count();
    let ok = passed(o, "manufactured-residuals") && r.len() == 50 && over == 0;
    push(
        13,
        "manufactured-residuals",
        ok,
        60.0,
        check_elapsed(o, "manufactured-residuals"),
        format!("{over} of {} over bound", r.len()),
    );

    Ok(lines)
}

/// Reruns everything in a pool of a different size and compares CSV bytes.
fn determinism(first: &BTreeMap<&str, Outcome>) -> Res<Line> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build()?;
    let start = std::time::Instant::now();
    let mut mismatched = Vec::new();
    let mut tables = 0;
    for name in NAMES {
        let again = pool.install(|| run(name, &ExperimentConfig::default()))?;
        let before = &first[name];
        if before.tables.len() != again.tables.len() {
            mismatched.push(name.to_string());
            continue;
        }
        for (a, b) in before.tables.iter().zip(&again.tables) {
            tables += 1;
            if a.to_csv()? != b.to_csv()? {
                mismatched.push(format!("{name}/{}", a.name));
            }
        }
    }
    Ok(Line {
        id: 14,
        name: "determinism",
        ok: mismatched.is_empty(),
        detail: format!(
            "{tables} tables compared, mismatches {mismatched:?}; {:.1} s",
            start.elapsed().as_secs_f64()
        ),
    })
}

fn main() -> ExitCode {
    let mut out = BTreeMap::new();
    for name in NAMES {
        match run(name, &ExperimentConfig::default()) {
            Ok(o) => {
                out.insert(name, o);
            }
            Err(e) => {
                println!("FAIL experiment {name}: {e}");
                return ExitCode::FAILURE;
            }
        }
    }
    let mut lines = match criteria(&out) {
        Ok(l) => l,
        Err(e) => {
            println!("FAIL reading tables: {e}");
            return ExitCode::FAILURE;
        }
    };
    match determinism(&out) {
        Ok(l) => lines.push(l),
        Err(e) => {
            println!("FAIL determinism rerun: {e}");
            return ExitCode::FAILURE;
        }
    }
    for l in &lines {
        println!(
            "{} {:>2} {:<24} {}",
            if l.ok { "PASS" } else { "FAIL" },
            l.id,
            l.name,
            l.detail
        );
    }
    let failed = lines.iter().filter(|l| !l.ok).count();
    println!("acceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
