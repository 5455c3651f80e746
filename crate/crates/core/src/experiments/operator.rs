//! Split-radius invariance of the nonlocal operator and manufactured
//! residuals.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{params, timed, Check, Report};
use crate::error::{Error, Result};
use crate::levy::LevyModel;
use crate::nonlocal::{eval_f_residual, eval_i_split, manufactured_cost, Candidate, QuadratureSpec};
use crate::rng::stream;
use crate::row;
use crate::sde::{CoefficientSpec, Coefficients};
use crate::table::{Cell, Table};

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Params {
    candidates: Vec<String>,
    alphas: Vec<f64>,
    radii: Vec<f64>,
    points: Vec<f64>,
    cap: f64,
    /// Manufactured residuals at random points of `(−1,1)^d`.
    residual_points: usize,
    /// How many of them are two-dimensional (Gaussian bump only).
    residual_points_2d: usize,
    manufacture_r: f64,
    residual_r: f64,
    a_grid: usize,
    residual_slack: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            candidates: ["gaussian-bump", "cosine", "lorentzian", "affine"]
                .map(String::from)
                .to_vec(),
            alphas: vec![0.5, 1.0, 1.5],
            radii: vec![0.25, 0.5, 1.0, 2.0],
            points: vec![0.3],
            cap: 1e-5,
            residual_points: 50,
            residual_points_2d: 10,
            manufacture_r: 1.0,
            residual_r: 0.5,
            a_grid: 33,
            residual_slack: 1e-8,
        }
    }
}

fn coefficients(dim: usize) -> Result<Coefficients> {
    if dim == 1 {
        return Coefficients::scalar(-1.0, 1.0, 0.0, 1.0, 0.5, 0.25);
    }
    Coefficients::new(CoefficientSpec {
        a_lo: -1.0,
        a_hi: 1.0,
        b0: vec![0.0, 0.2],
        b1: vec![1.0, -0.5],
        sigma0: vec![vec![0.5, 0.0], vec![0.1, 0.4]],
        sigma1: vec![vec![0.25, 0.0], vec![0.0, 0.0]],
    })
}

pub(super) fn split_invariance(p: &toml::Table, seed: u64) -> Result<Report> {
    let (p, echo): (Params, _) = params(p)?;
    if p.radii.len() < 2 {
        return Err(Error::Config("split-invariance needs at least two radii".into()));
    }
    let (split, split_check) = split_tables(&p)?;
    let (resid, resid_check) = residual_table(&p, seed)?;
    Ok(Report {
        params: echo,
        tables: vec![split.0, split.1, resid],
        checks: vec![split_check, resid_check],
    })
}

fn split_tables(p: &Params) -> Result<((Table, Table), Check)> {
    let ((tables, (ok, detail)), elapsed) = timed(|| {
        let mut t = Table::new(
            "split",
            &[
                "candidate",
                "alpha",
                "x",
                "r",
                "drift_term",
                "i_r1",
                "i_r2",
                "total",
                "error",
            ],
        );
        let mut s = Table::new(
            "invariance",
            &[
                "candidate",
                "alpha",
                "x",
                "max_discrepancy",
                "worst_ratio",
                "within_errors",
                "within_cap",
            ],
        );
        let mut ok = true;
        let mut worst_abs: f64 = 0.0;
        let mut worst_ratio: f64 = 0.0;
        for name in &p.candidates {
            let phi = Candidate::named(name, 1)?;
            for &alpha in &p.alphas {
                let model = LevyModel::alpha_stable(alpha, 1)?;
                for &x in &p.points {
                    let vals = p
                        .radii
                        .par_iter()
                        .map(|&r| eval_i_split(&phi, &[x], &model, &QuadratureSpec::with_r(r)))
                        .collect::<Result<Vec<_>>>()?;
                    for v in &vals {
                        t.push(row![
                            name.as_str(),
                            alpha,
                            x,
                            v.r,
                            v.drift_term,
                            v.i_r1,
                            v.i_r2,
                            v.total,
                            v.error
                        ]);
                    }
                    let (mut disc, mut ratio): (f64, f64) = (0.0, 0.0);
                    let mut within = true;
                    for (i, a) in vals.iter().enumerate() {
                        for b in &vals[i + 1..] {
                            let d = (a.total - b.total).abs();
                            disc = disc.max(d);
                            ratio = ratio.max(d / (a.error + b.error));
                            within &= d <= a.error + b.error;
                        }
                    }
                    let capped = disc <= p.cap;
                    ok &= within && capped;
                    worst_abs = worst_abs.max(disc);
                    worst_ratio = worst_ratio.max(ratio);
                    s.push(row![name.as_str(), alpha, x, disc, ratio, within, capped]);
                }
            }
        }
        Ok((
            (t, s),
            (
                ok,
                format!("max discrepancy {worst_abs:e}, max discrepancy/(summed errors) {worst_ratio:.3}"),
            ),
        ))
    })?;
    Ok((tables, Check::new("split-invariance", ok, detail, elapsed)))
}

fn residual_table(p: &Params, seed: u64) -> Result<(Table, Check)> {
    let ((t, (ok, detail)), elapsed) = timed(|| {
        let mut rng = stream(seed, 0);
        let n2 = p.residual_points_2d.min(p.residual_points);
        let jobs: Vec<(usize, String, f64, Vec<f64>)> = (0..p.residual_points)
            .map(|i| {
                let dim = if i >= p.residual_points - n2 { 2 } else { 1 };
                let name = if dim == 2 {
                    "gaussian-bump".to_string()
                } else {
                    p.candidates[i % p.candidates.len()].clone()
                };
                let alpha = p.alphas[i % p.alphas.len()];
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                (i, name, alpha, x)
            })
            .collect();
        let rows = jobs
            .par_iter()
            .map(|(i, name, alpha, x)| -> Result<Vec<Cell>> {
                let dim = x.len();
                let phi = Candidate::named(name, dim)?;
                let model = LevyModel::alpha_stable(*alpha, dim)?;
                let coeffs = coefficients(dim)?;
                let ell = manufactured_cost(
                    &phi,
                    x,
                    p.a_grid,
                    &coeffs,
                    &model,
                    &QuadratureSpec::with_r(p.manufacture_r),
                )?;
                let res = eval_f_residual(
                    &phi,
                    x,
                    p.a_grid,
                    &|_| ell.value,
                    &coeffs,
                    &model,
                    &QuadratureSpec::with_r(p.residual_r),
                )?;
                let bound = res.error + ell.error + p.residual_slack;
                let x1: Cell = x.get(1).map_or(Cell::Text(String::new()), |&v| v.into());
                Ok(row![
                    *i,
                    name.as_str(),
                    *alpha,
                    dim,
                    x[0],
                    x1,
                    ell.value,
                    ell.error,
                    res.residual,
                    res.error,
                    bound,
                    res.residual.abs() <= bound
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        let mut t = Table::new(
            "residuals",
            &[
                "index",
                "candidate",
                "alpha",
                "dim",
                "x0",
                "x1",
                "ell",
                "ell_error",
                "residual",
                "residual_error",
                "bound",
                "ok",
            ],
        );
        for r in rows {
            t.push(r);
        }
        let res = t.nums("residual")?;
        let bound = t.nums("bound")?;
        let fails = t.bools("ok")?.iter().filter(|b| !**b).count();
        let worst = res.iter().zip(&bound).map(|(r, b)| r.abs() / b).fold(0.0, f64::max);
        Ok((
            t,
            (
                fails == 0,
                format!(
                    "{fails} of {} points over bound, max |res|/bound {worst:.3}",
                    p.residual_points
                ),
            ),
        ))
    })?;
    Ok((t, Check::new("manufactured-residuals", ok, detail, elapsed)))
}
