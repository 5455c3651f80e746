//! Monte Carlo experiments against closed forms and qualitative claims.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{params, timed, Check, Report};
use crate::domain::Domain;
use crate::entrance::classify_gamma;
use crate::error::{Error, Result};
use crate::levy::LevyModel;
use crate::rng::stream;
use crate::row;
use crate::sde::{coupled_sup_gap, simulate, Coefficients, Policy, PolicySpec, SimSpec};
use crate::table::Table;
use crate::value::{estimate, CostFn, ValueEstimate};

const VALUE_COLUMNS: [&str; 8] = [
    "x",
    "mean",
    "std_error",
    "N",
    "exact",
    "error",
    "bound",
    "censored_fraction",
];

fn push_value(t: &mut Table, x: f64, e: &ValueEstimate, exact: f64, bound: f64) {
    t.push(row![
        x,
        e.mean,
        e.std_error,
        e.n,
        exact,
        e.mean - exact,
        bound,
        e.censored_fraction
    ]);
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DriftParams {
    points: Vec<f64>,
    n: usize,
    dt: f64,
    horizon: f64,
    /// Constant control; the drift is `b(a) = a`.
    a: f64,
}

impl Default for DriftParams {
    fn default() -> Self {
        DriftParams {
            points: vec![0.0, 0.25, 0.5, 0.75],
            n: 10_000,
            dt: 1e-4,
            horizon: 50.0,
            a: 1.0,
        }
    }
}

/// `dX = a dt` on `(−1, 1)` with `ℓ = 1`, `g = 0`: `V(x) = 1 − e^{−(1−x)/a}`.
pub(super) fn drift_1d(p: &toml::Table, seed: u64) -> Result<Report> {
    let (p, echo): (DriftParams, _) = params(p)?;
    if !(p.a > 0.0 && p.a <= 1.0) {
        return Err(Error::Config(format!("drift-1d needs a in (0, 1], got {}", p.a)));
    }
    let spec = SimSpec::new(
        Domain::interval(-1.0, 1.0)?,
        Policy::constant(p.a, 1, -1.0, 1.0)?,
        Coefficients::scalar(-1.0, 1.0, 0.0, 1.0, 0.0, 0.0)?,
        LevyModel::none(1),
        p.dt,
        p.horizon,
    )?;
    let (l, g) = (CostFn::constant(1.0, 1), CostFn::constant(0.0, 1));
    let ((t, check), elapsed) = timed(|| {
        let mut t = Table::new("value", &VALUE_COLUMNS);
        let mut ok = true;
        let mut worst: f64 = 0.0;
        for &x in &p.points {
            let e = estimate(&[x], &spec, &l, &g, p.n, seed)?;
            let exact = 1.0 - (-(1.0 - x) / p.a).exp();
            let bound = 2.0 * p.dt + 3.0 * e.std_error;
            ok &= (e.mean - exact).abs() <= bound;
            worst = worst.max((e.mean - exact).abs() / bound);
            push_value(&mut t, x, &e, exact, bound);
        }
        Ok((t, (ok, format!("max |error|/(2Δt + 3se) = {worst:.3}"))))
    })?;
    Ok(Report {
        params: echo,
        tables: vec![t],
        checks: vec![Check::new("drift-1d", check.0, check.1, elapsed)],
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BmParams {
    points: Vec<f64>,
    n: usize,
    dt: f64,
    horizon: f64,
    /// Allowance for the discrete-monitoring bias.
    bias_allowance: f64,
    /// Interior nodes of the finite-difference oracle.
    fd_nodes: usize,
}

impl Default for BmParams {
    fn default() -> Self {
        BmParams {
            points: vec![0.0],
            n: 100_000,
            dt: 1e-4,
            horizon: 50.0,
            bias_allowance: 5e-3,
            fd_nodes: 4000,
        }
    }
}

/// `½u'' = u` on `(−1, 1)`, `u(±1) = 1`, by the tridiagonal (Thomas)
/// solve of the central-difference scheme; returns the nodes and values.
fn fd_oracle(nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let h = 2.0 / (nodes + 1) as f64;
    // (u_{i−1} − 2u_i + u_{i+1})/(2h²) − u_i = 0
    let off = 1.0 / (2.0 * h * h);
    let diag = -2.0 * off - 1.0;
    let mut c = vec![0.0; nodes];
    let mut d = vec![0.0; nodes];
    for i in 0..nodes {
        let rhs = if i == 0 || i + 1 == nodes { -off } else { 0.0 };
        let denom = if i == 0 { diag } else { diag - off * c[i - 1] };
        c[i] = off / denom;
        d[i] = if i == 0 {
            rhs / denom
        } else {
            (rhs - off * d[i - 1]) / denom
        };
    }
    let mut u = vec![0.0; nodes];
    for i in (0..nodes).rev() {
        u[i] = if i + 1 == nodes { d[i] } else { d[i] - c[i] * u[i + 1] };
    }
    let xs = (1..=nodes).map(|i| -1.0 + i as f64 * h).collect();
    (xs, u)
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let j = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let w = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    ys[j - 1] + w * (ys[j] - ys[j - 1])
}

/// Brownian motion on `(−1, 1)` with `ℓ = 0`, `g = 1`:
/// `V(x) = E e^{−τ} = cosh(√2 x)/cosh √2`.
pub(super) fn bm_1d(p: &toml::Table, seed: u64) -> Result<Report> {
    let (p, echo): (BmParams, _) = params(p)?;
    if p.fd_nodes < 3 {
        return Err(Error::Config("fd_nodes must be at least 3".into()));
    }
    let spec = SimSpec::new(
        Domain::interval(-1.0, 1.0)?,
        Policy::constant(0.0, 1, 0.0, 0.0)?,
        Coefficients::scalar(0.0, 0.0, 0.0, 0.0, 1.0, 0.0)?,
        LevyModel::none(1),
        p.dt,
        p.horizon,
    )?;
    let (l, g) = (CostFn::constant(0.0, 1), CostFn::constant(1.0, 1));
    let (xs, us) = fd_oracle(p.fd_nodes);
    let ((t, check), elapsed) = timed(|| {
        let mut cols = VALUE_COLUMNS.to_vec();
        cols.insert(5, "fd_oracle");
        let mut t = Table::new("value", &cols);
        let mut ok = true;
        let mut detail = String::new();
        for &x in &p.points {
            let e = estimate(&[x], &spec, &l, &g, p.n, seed)?;
            let exact = (2f64.sqrt() * x).cosh() / 2f64.sqrt().cosh();
            let fd = interpolate(&xs, &us, x);
            let bound = 3.0 * e.std_error + p.bias_allowance;
            ok &= (e.mean - exact).abs() <= bound && (fd - exact).abs() < 1e-5;
            detail += &format!("V̂({x}) = {} ± {}, exact {exact}, oracle {fd}; ", e.mean, e.std_error);
            t.push(row![
                x,
                e.mean,
                e.std_error,
                e.n,
                exact,
                fd,
                e.mean - exact,
                bound,
                e.censored_fraction
            ]);
        }
        Ok((t, (ok, detail.trim_end_matches("; ").to_string())))
    })?;
    Ok(Report {
        params: echo,
        tables: vec![t],
        checks: vec![Check::new("bm-1d", check.0, check.1, elapsed)],
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct StableParams {
    alpha: f64,
    /// Distances to the face midpoint `(1, 0)` along the first axis.
    distances: Vec<f64>,
    n: usize,
    dt: f64,
    horizon: f64,
    /// Bound on `V̂` at the last (closest) point.
    near_bound: f64,
}

impl Default for StableParams {
    fn default() -> Self {
        StableParams {
            alpha: 0.5,
            distances: vec![0.5, 0.25, 0.1, 0.05, 0.02, 0.01],
            n: 10_000,
            dt: 1e-4,
            horizon: 50.0,
            near_bound: 0.1,
        }
    }
}

fn pure_jump_spec(alpha: f64, dim: usize, dt: f64, horizon: f64) -> Result<SimSpec> {
    SimSpec::new(
        Domain::cube(dim, 1.0)?,
        Policy::constant(0.0, dim, 0.0, 0.0)?,
        Coefficients::new(crate::sde::CoefficientSpec {
            a_lo: 0.0,
            a_hi: 0.0,
            b0: vec![0.0; dim],
            b1: vec![],
            sigma0: vec![],
            sigma1: vec![],
        })?,
        LevyModel::alpha_stable(alpha, dim)?,
        dt,
        horizon,
    )
}

/// Pure α-stable noise in `(−1,1)²` with `ℓ = 1`, `g = 0`: the estimate
/// must vanish towards the boundary.
pub(super) fn stable_2d(p: &toml::Table, seed: u64) -> Result<Report> {
    let (p, echo): (StableParams, _) = params(p)?;
    let spec = pure_jump_spec(p.alpha, 2, p.dt, p.horizon)?;
    let (l, g) = (CostFn::constant(1.0, 2), CostFn::constant(0.0, 2));
    let ((t, check), elapsed) = timed(|| {
        let mut t = Table::new(
            "scan",
            &["distance", "x0", "x1", "mean", "std_error", "N", "censored_fraction"],
        );
        let mut means = Vec::new();
        for &d in &p.distances {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::Config(format!("distance {d} outside (0, 1)")));
            }
            let x = [1.0 - d, 0.0];
            let e = estimate(&x, &spec, &l, &g, p.n, seed)?;
            means.push(e.mean);
            t.push(row![d, x[0], x[1], e.mean, e.std_error, e.n, e.censored_fraction]);
        }
        let last = *means.last().unwrap_or(&f64::NAN);
        let tail = &means[means.len().saturating_sub(3)..];
        let monotone = tail.len() == 3 && tail.windows(2).all(|w| w[1] < w[0]);
        let ok = last <= p.near_bound && monotone;
        Ok((t, (ok, format!("V̂ at the closest point {last}, last three {tail:?}"))))
    })?;
    Ok(Report {
        params: echo,
        tables: vec![t],
        checks: vec![Check::new("stable-2d", check.0, check.1, elapsed)],
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CensusParams {
    alpha: f64,
    dim: usize,
    n: usize,
    dt: f64,
    horizon: f64,
    start: Vec<f64>,
    min_fraction: f64,
}

impl Default for CensusParams {
    fn default() -> Self {
        CensusParams {
            alpha: 0.5,
            dim: 2,
            n: 10_000,
            dt: 1e-3,
            horizon: 50.0,
            start: vec![0.0, 0.0],
            min_fraction: 0.99,
        }
    }
}

/// Classifies simulated skeletons against Γ_O and Γ̂_O.
pub(super) fn gamma_census(p: &toml::Table, seed: u64) -> Result<Report> {
    let (p, echo): (CensusParams, _) = params(p)?;
    let spec = pure_jump_spec(p.alpha, p.dim, p.dt, p.horizon)?.recording(true);
    let ((tables, check), elapsed) = timed(|| {
        let rows = (0..p.n as u64)
            .into_par_iter()
            .map(|i| -> Result<_> {
                let s = simulate(&p.start, &spec, &[], &mut stream(seed, i))?;
                let path = s.trajectory.as_ref().expect("recording is on");
                let (g, gh) = match classify_gamma(path, &spec.domain) {
                    Ok(c) => (c.in_gamma, c.in_gamma_hat),
                    Err(Error::Undetermined { .. }) => (false, false),
                    Err(e) => return Err(e),
                };
                Ok((i, s.tau, s.tau_hat, s.exited_by_jump, s.censored, g, gh))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut t = Table::new(
            "census",
            &[
                "index",
                "tau",
                "tau_hat",
                "exited_by_jump",
                "censored",
                "in_gamma",
                "in_gamma_hat",
            ],
        );
        let (mut n_g, mut n_gh) = (0usize, 0usize);
        for (i, tau, tau_hat, jump, cens, g, gh) in rows {
            n_g += usize::from(g);
            n_gh += usize::from(gh);
            t.push(row![i, tau, tau_hat, jump, cens, g, gh]);
        }
        let n = p.n.max(1) as f64;
        let mut s = Table::new("summary", &["N", "in_gamma_fraction", "in_gamma_hat_fraction"]);
        s.push(row![p.n, n_g as f64 / n, n_gh as f64 / n]);
        let frac = n_gh as f64 / n;
        Ok((
            vec![t, s],
            (
                frac >= p.min_fraction,
                format!("{n_gh} of {} skeletons in Γ̂_O ({frac})", p.n),
            ),
        ))
    })?;
    Ok(Report {
        params: echo,
        tables,
        checks: vec![Check::new("gamma-census", check.0, check.1, elapsed)],
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MsParams {
    hs: Vec<f64>,
    n: usize,
    t_end: f64,
    dt: f64,
    x: f64,
    /// Index of additive α-stable noise; `0` for none.
    stable_alpha: f64,
    slope_target: f64,
    slope_tol: f64,
}

impl Default for MsParams {
    fn default() -> Self {
        MsParams {
            hs: vec![1e-1, 1e-2, 1e-3],
            n: 1000,
            t_end: 1.0,
            dt: 1e-3,
            x: 0.0,
            stable_alpha: 1.5,
            slope_target: 2.0,
            slope_tol: 0.2,
        }
    }
}

/// Least-squares slope of `ys` against `xs`.
fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `E sup_{s≤t} |X^{x+h}_s − X^x_s|²` under shared noise, for the
/// clamped-affine policy `a = clamp(x, −1, 1)`, `b(a) = −a`,
/// `σ(a) = 0.5 + 0.25a`.
pub(super) fn ms_continuity(p: &toml::Table, seed: u64) -> Result<Report> {
    let (p, echo): (MsParams, _) = params(p)?;
    if p.hs.len() < 2 || p.hs.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::Config("ms-continuity needs at least two positive h".into()));
    }
    let levy = if p.stable_alpha > 0.0 {
        LevyModel::alpha_stable(p.stable_alpha, 1)?
    } else {
        LevyModel::none(1)
    };
    let spec = SimSpec::new(
        Domain::interval(-1e6, 1e6)?,
        Policy::new(
            PolicySpec::ClampedAffine {
                a0: 0.0,
                gain: vec![1.0],
            },
            1,
            -1.0,
            1.0,
        )?,
        Coefficients::scalar(-1.0, 1.0, 0.0, -1.0, 0.5, 0.25)?,
        levy,
        p.dt,
        p.t_end.max(p.dt),
    )?;
    let ((tables, check), elapsed) = timed(|| {
        let mut t = Table::new("gaps", &["h", "mean_sup_sq", "std_error", "N", "log_h", "log_mean"]);
        let (mut lx, mut ly) = (Vec::new(), Vec::new());
        for &h in &p.hs {
            let vals = (0..p.n as u64)
                .into_par_iter()
                .map(|i| coupled_sup_gap(&[p.x], &[p.x + h], &spec, p.t_end, &mut stream(seed, i)))
                .collect::<Result<Vec<f64>>>()?;
            let e = ValueEstimate::from_values(&vals, 0);
            lx.push(h.ln());
            ly.push(e.mean.ln());
            t.push(row![h, e.mean, e.std_error, e.n, h.ln(), e.mean.ln()]);
        }
        let slope = ls_slope(&lx, &ly);
        let mut s = Table::new("slope", &["slope", "target", "tolerance"]);
        s.push(row![slope, p.slope_target, p.slope_tol]);
        let ok = (slope - p.slope_target).abs() <= p.slope_tol;
        Ok((vec![t, s], (ok, format!("fitted slope {slope}"))))
    })?;
    Ok(Report {
        params: echo,
        tables,
        checks: vec![Check::new("ms-continuity", check.0, check.1, elapsed)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_oracle_matches_cosh() {
        let (xs, us) = fd_oracle(999);
        let exact = |x: f64| (2f64.sqrt() * x).cosh() / 2f64.sqrt().cosh();
        assert!((interpolate(&xs, &us, 0.0) - exact(0.0)).abs() < 1e-6);
        assert!((interpolate(&xs, &us, 0.5) - exact(0.5)).abs() < 1e-6);
    }

    #[test]
    fn slope_of_a_line() {
        assert!((ls_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-15);
    }
}
