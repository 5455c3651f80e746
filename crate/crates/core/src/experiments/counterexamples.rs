//! Exact entrance data for three one-dimensional paths at which the exit
//! functionals jump under vanishing perturbations.

use serde::{Deserialize, Serialize};

use super::{params, timed, Check, Report};
use crate::cadlag::CadlagPath;
use crate::domain::Domain;
use crate::entrance::{classify_gamma, entrance_record};
use crate::error::Result;
use crate::gen::{jump_exit_path, touch_path, vee_path};
use crate::row;
use crate::skorohod::metric_infinite;
use crate::table::Table;

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Params {
    /// Perturbation sizes are `1/n`.
    ns: Vec<u64>,
    /// Absolute slack when comparing against closed forms.
    tol: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            ns: vec![10, 100, 1000],
            tol: 1e-12,
        }
    }
}

const COLUMNS: [&str; 10] = [
    "n",
    "shift",
    "time",
    "expected_time",
    "time_gap",
    "point",
    "point_gap",
    "metric_upper",
    "in_gamma",
    "in_gamma_hat",
];

struct Row {
    time: f64,
    point: f64,
}

fn unit() -> Result<Domain> {
    Domain::interval(0.0, 1.0)
}

/// Entrance data of `path` plus its distance to `base`.
fn probe(
    table: &mut Table,
    n: u64,
    shift: f64,
    path: &CadlagPath,
    base: Option<(&CadlagPath, &Row)>,
    expected: f64,
) -> Result<Row> {
    let dom = unit()?;
    let rec = entrance_record(path, &dom)?;
    let point = rec.point.as_ref().map_or(f64::NAN, |p| p[0]);
    let g = classify_gamma(path, &dom)?;
    let (time_gap, point_gap, metric) = match base {
        Some((b, r)) => {
            let tol = 0.1 / n as f64;
            (
                (rec.time - r.time).abs(),
                (point - r.point).abs(),
                metric_infinite(path, b, tol)?.upper,
            )
        }
        None => (0.0, 0.0, 0.0),
    };
    table.push(row![
        n,
        shift,
        rec.time,
        expected,
        time_gap,
        point,
        point_gap,
        metric,
        g.in_gamma,
        g.in_gamma_hat
    ]);
    Ok(Row { time: rec.time, point })
}

/// `|t − ½|` on `(0,1)`: `T = ½` but `T(ω + 1/n) = 3/2 − 1/n`.
pub(super) fn c1_upper(p: &toml::Table) -> Result<Report> {
    let (p, echo): (Params, _) = params(p)?;
    let ((table, check), elapsed) = timed(|| {
        let mut t = Table::new("entrance", &COLUMNS);
        let base = vee_path(0.0)?;
        let b = probe(&mut t, 0, 0.0, &base, None, 0.5)?;
        let mut ok = b.time == 0.5;
        let mut worst: f64 = 0.0;
        let mut last_gap = 0.0;
        for &n in &p.ns {
            let s = 1.0 / n as f64;
            let r = probe(&mut t, n, s, &vee_path(s)?, Some((&base, &b)), 1.5 - s)?;
            worst = worst.max((r.time - (1.5 - s)).abs());
            last_gap = r.time - b.time;
        }
        ok &= worst <= p.tol && (last_gap - 1.0).abs() <= 1.0 / *p.ns.iter().max().unwrap_or(&1) as f64 + p.tol;
        let detail = format!(
            "T(ω) = {}, max |T_n − (3/2 − 1/n)| = {worst:e}, last gap {last_gap}",
            b.time
        );
        Ok((t, (ok, detail)))
    })?;
    Ok(Report {
        params: echo,
        tables: vec![table],
        checks: vec![Check::new("c1-upper", check.0, check.1, elapsed)],
    })
}

/// Touching left limit: `T = ⅔` but `T(ω − 1/n) = ⅓ − 1/n`.
pub(super) fn c1_lower(p: &toml::Table) -> Result<Report> {
    let (p, echo): (Params, _) = params(p)?;
    let ((table, check), elapsed) = timed(|| {
        let mut t = Table::new("entrance", &COLUMNS);
        let base = touch_path(0.0)?;
        let b = probe(&mut t, 0, 0.0, &base, None, 2.0 / 3.0)?;
        let mut ok = (b.time - 2.0 / 3.0).abs() <= p.tol;
        let mut worst: f64 = 0.0;
        let mut last_gap = 0.0;
        for &n in &p.ns {
            let s = 1.0 / n as f64;
            let expected = 1.0 / 3.0 - s;
            let r = probe(&mut t, n, -s, &touch_path(-s)?, Some((&base, &b)), expected)?;
            worst = worst.max((r.time - expected).abs());
            last_gap = b.time - r.time;
        }
        let n_max = *p.ns.iter().max().unwrap_or(&1) as f64;
        ok &= worst <= p.tol && (last_gap - 1.0 / 3.0).abs() <= 1.0 / n_max + p.tol;
        let detail = format!(
            "T(ω) = {}, max |T_n − (1/3 − 1/n)| = {worst:e}, last gap {last_gap}",
            b.time
        );
        Ok((t, (ok, detail)))
    })?;
    Ok(Report {
        params: echo,
        tables: vec![table],
        checks: vec![Check::new("c1-lower", check.0, check.1, elapsed)],
    })
}

/// Jump exit from a boundary left limit, started at `0.9`: in Γ_O but not
/// in Γ̂_O, `Π = −1` while `Π(ω − 1/n) = 0` and `T_n → T`.
pub(super) fn c2_jump(p: &toml::Table) -> Result<Report> {
    let (p, echo): (Params, _) = params(p)?;
    let ((table, check), elapsed) = timed(|| {
        let mut t = Table::new("entrance", &COLUMNS);
        let base = jump_exit_path(0.0)?;
        let g = classify_gamma(&base, &unit()?)?;
        let b = probe(&mut t, 0, 0.0, &base, None, 1.0)?;
        let mut ok = g.in_gamma && !g.in_gamma_hat && b.point == -1.0 && b.time == 1.0;
        let mut gaps = Vec::new();
        for &n in &p.ns {
            let s = 1.0 / n as f64;
            let expected = 1.0 - s / 0.9;
            let r = probe(&mut t, n, -s, &jump_exit_path(-s)?, Some((&base, &b)), expected)?;
            ok &= r.point == 0.0 && (r.time - expected).abs() <= p.tol;
            gaps.push((r.time - b.time).abs());
        }
        ok &= gaps.windows(2).all(|w| w[1] < w[0]);
        let detail = format!(
            "in Γ_O {}, in Γ̂_O {}, Π(ω) = {}, time gaps {gaps:?}",
            g.in_gamma, g.in_gamma_hat, b.point
        );
        Ok((t, (ok, detail)))
    })?;
    Ok(Report {
        params: echo,
        tables: vec![table],
        checks: vec![Check::new("c2-jump", check.0, check.1, elapsed)],
    })
}
