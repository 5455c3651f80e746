//! Path-space suites: continuity of the exit functionals under vanishing
//! perturbations, the one-dimensional semicontinuity lemmas, and metric
//! benchmarks.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{params, timed, Check, Report};
use crate::cadlag::{CadlagPath, PathBuilder, Tail};
use crate::entrance::{
    capped, classify_gamma, continuity_probe, entrance_time_in, envelope_hitting_time, Convention, HalfLine,
    Perturbation, Target,
};
use crate::error::{Error, Result};
use crate::gen::{crossing_domain, dyadic_scalar, strict_crossing, touch_path, vee_path};
use crate::rng::stream;
use crate::row;
use crate::skorohod::{metric_finite, SearchBudget};
use crate::table::Table;

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ScanParams {
    paths: usize,
    dims: Vec<usize>,
    /// Targets for the `d°_∞` upper bound.
    levels: Vec<f64>,
    /// Perturbation magnitudes as fractions of the level.
    shift_fraction: f64,
    warp_fraction: f64,
    dither_fraction: f64,
    /// Metric tolerance as a fraction of the level.
    metric_tol_fraction: f64,
    /// Gaps must stay below this multiple of the magnitude.
    gap_factor: f64,
    max_halvings: u32,
    sequences: usize,
    /// Sequences `ω + 2^{−n}p` for `n = 1..=n_max`.
    n_max: u32,
    /// The limsup/liminf is read off the last `tail` terms.
    tail: u32,
    /// Slack for rounding in crossing times.
    eta: f64,
    /// Horizon `m` of the capped times `T ∧ m`.
    m: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        ScanParams {
            paths: 1000,
            dims: vec![1, 2],
            levels: vec![1e-1, 1e-2, 1e-3],
            shift_fraction: 0.5,
            warp_fraction: 0.5,
            dither_fraction: 0.05,
            metric_tol_fraction: 0.5,
            gap_factor: 10.0,
            max_halvings: 12,
            sequences: 500,
            n_max: 44,
            tail: 5,
            eta: 1e-9,
            m: 4.0,
        }
    }
}

pub(super) fn continuity_scan(p: &toml::Table, seed: u64) -> Result<Report> {
    let (p, echo): (ScanParams, _) = params(p)?;
    if p.dims.is_empty() || p.n_max > 44 || p.tail == 0 || p.tail > p.n_max {
        return Err(Error::Config(
            "continuity-scan needs dims, n_max ≤ 44 and 0 < tail ≤ n_max".into(),
        ));
    }
    let (cont, cont_check) = continuity_suite(&p, seed)?;
    let (semi, semi_check) = semicontinuity_suite(&p, seed)?;
    let mut tables = cont;
    tables.extend(semi);
    Ok(Report {
        params: echo,
        tables,
        checks: vec![cont_check, semi_check],
    })
}

fn perturbations(dim: usize, rng: &mut impl Rng, p: &ScanParams) -> Vec<(&'static str, Perturbation, f64)> {
    let mut dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = crate::cadlag::norm(&dir);
    dir.iter_mut().for_each(|v| *v /= n);
    vec![
        ("shift", Perturbation::Shift { direction: dir }, p.shift_fraction),
        ("time-warp", Perturbation::TimeWarp, p.warp_fraction),
        ("jump-dither", Perturbation::JumpDither, p.dither_fraction),
    ]
}

fn continuity_suite(p: &ScanParams, seed: u64) -> Result<(Vec<Table>, Check)> {
    let ((tables, (ok, detail)), elapsed) = timed(|| {
        let rows = (0..p.paths)
            .into_par_iter()
            .map(|i| -> Result<Vec<_>> {
                let mut rng = stream(seed, i as u64);
                let dim = p.dims[i % p.dims.len()];
                let path = strict_crossing(&mut rng, dim)?;
                let dom = crossing_domain(dim)?;
                let g = classify_gamma(&path, &dom)?;
                let exit = if !path.jump_indices().is_empty() && exits_by_jump(&path, &dom)? {
                    "jump"
                } else {
                    "crossing"
                };
                let mut out = Vec::new();
                for (kind, pert, frac) in perturbations(dim, &mut rng, p) {
                    for &level in &p.levels {
                        // a jump moved by s near the end of a window costs
                        // about s/(m − t), so magnitudes halve until the
                        // bound meets the level
                        let mut mag = frac * level;
                        let mut r;
                        let mut halvings = 0;
                        loop {
                            r = continuity_probe(&path, &dom, &pert, &[mag], p.metric_tol_fraction * level)?[0].clone();
                            if r.metric_upper <= level || halvings == p.max_halvings {
                                break;
                            }
                            mag *= 0.5;
                            halvings += 1;
                        }
                        out.push((i, dim, exit, g.in_gamma_hat, kind, level, mag, r));
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut t = Table::new(
            "continuity",
            &[
                "path",
                "dim",
                "exit",
                "in_gamma_hat",
                "perturbation",
                "level",
                "magnitude",
                "metric_upper",
                "time_gap",
                "point_gap",
                "ok",
            ],
        );
        let mut summary = Table::new(
            "continuity_summary",
            &[
                "perturbation",
                "level",
                "cases",
                "max_metric_upper",
                "max_time_ratio",
                "max_point_ratio",
                "failures",
            ],
        );
        let mut agg: Vec<(&str, f64, usize, f64, f64, f64, usize)> = Vec::new();
        let (mut fails, mut outside) = (0usize, 0usize);
        for (i, dim, exit, gh, kind, level, mag, r) in rows.into_iter().flatten() {
            let ok =
                gh && r.metric_upper <= level && r.time_gap < p.gap_factor * mag && r.point_gap < p.gap_factor * mag;
            fails += usize::from(!ok);
            outside += usize::from(!gh);
            t.push(row![
                i,
                dim,
                exit,
                gh,
                kind,
                level,
                mag,
                r.metric_upper,
                r.time_gap,
                r.point_gap,
                ok
            ]);
            let k = match agg.iter().position(|a| a.0 == kind && a.1 == level) {
                Some(k) => k,
                None => {
                    agg.push((kind, level, 0, 0.0, 0.0, 0.0, 0));
                    agg.len() - 1
                }
            };
            let a = &mut agg[k];
            a.2 += 1;
            a.3 = a.3.max(r.metric_upper);
            a.4 = a.4.max(r.time_gap / mag);
            a.5 = a.5.max(r.point_gap / mag);
            a.6 += usize::from(!ok);
        }
        for a in &agg {
            summary.push(row![a.0, a.1, a.2, a.3, a.4, a.5, a.6]);
        }
        let worst_time = agg.iter().map(|a| a.4).fold(0.0, f64::max);
        let worst_point = agg.iter().map(|a| a.5).fold(0.0, f64::max);
        let detail = format!(
            "{} cases, {fails} failures, {outside} paths outside Γ̂_O, max gap/magnitude: time {worst_time:.3}, point {worst_point:.3}",
            t.len()
        );
        Ok((vec![t, summary], (fails == 0, detail)))
    })?;
    Ok((tables, Check::new("continuity", ok, detail, elapsed)))
}

fn exits_by_jump(path: &CadlagPath, dom: &crate::domain::Domain) -> Result<bool> {
    let rec = crate::entrance::entrance_record(path, dom)?;
    Ok(path.breakpoints().contains(&rec.time) && path.left_limit(rec.time)? != path.eval(rec.time)?)
}

/// `T^m_{(−∞,0)}`: first time strictly below zero.
fn t_open(path: &CadlagPath, m: f64) -> Result<f64> {
    Ok(capped(
        entrance_time_in(
            path,
            &HalfLine { level: 0.0 },
            Target::ClosedComplement,
            Convention::NonNegative,
        )?,
        m,
    ))
}

/// `T^m_{(−∞,0]}` of the path itself.
fn t_closed(path: &CadlagPath, m: f64) -> Result<f64> {
    Ok(capped(
        entrance_time_in(
            path,
            &HalfLine { level: 0.0 },
            Target::OpenComplement,
            Convention::NonNegative,
        )?,
        m,
    ))
}

/// `T^m_{(−∞,0]}(ω_*)` through the lower envelope.
fn t_envelope(path: &CadlagPath, m: f64) -> Result<f64> {
    Ok(capped(envelope_hitting_time(&path.lower_envelope()?, 0.0)?, m))
}

/// Extremes over the tail of `ω + c_n p`.
struct TailStats {
    usc_excess: f64,
    lsc_deficit: f64,
    usc_control: f64,
    lsc_control: f64,
}

fn tail_stats(base: &CadlagPath, pert: &CadlagPath, coef: impl Fn(u32) -> f64, p: &ScanParams) -> Result<TailStats> {
    let (u0, l0, c0) = (t_open(base, p.m)?, t_envelope(base, p.m)?, t_closed(base, p.m)?);
    let (mut sup_u, mut inf_l, mut sup_c, mut inf_c) =
        (f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    for n in (p.n_max - p.tail + 1)..=p.n_max {
        let w = base.linear_combination(1.0, pert, coef(n))?;
        sup_u = sup_u.max(t_open(&w, p.m)?);
        inf_l = inf_l.min(t_envelope(&w, p.m)?);
        let c = t_closed(&w, p.m)?;
        sup_c = sup_c.max(c);
        inf_c = inf_c.min(c);
    }
    Ok(TailStats {
        usc_excess: sup_u - u0,
        lsc_deficit: l0 - inf_l,
        usc_control: sup_c - c0,
        lsc_control: c0 - inf_c,
    })
}

fn semicontinuity_suite(p: &ScanParams, seed: u64) -> Result<(Vec<Table>, Check)> {
    let ((tables, (ok, detail)), elapsed) = timed(|| {
        let horizon = p.m;
        let stats = (0..p.sequences)
            .into_par_iter()
            .map(|j| -> Result<(usize, &'static str, TailStats)> {
                let mut rng = stream(seed.wrapping_add(1), j as u64);
                let base = dyadic_scalar(&mut rng, horizon, -1.0, 1.0, 12, 0.3)?;
                let (family, pert, sign): (&str, CadlagPath, f64) = match j % 3 {
                    0 => ("dyadic", dyadic_scalar(&mut rng, horizon, -1.0, 1.0, 8, 0.3)?, 1.0),
                    1 => (
                        "alternating",
                        dyadic_scalar(&mut rng, horizon, -1.0, 1.0, 8, 0.3)?,
                        -1.0,
                    ),
                    _ => {
                        let c = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                        ("constant", CadlagPath::scalar_constant(c, horizon)?, 1.0)
                    }
                };
                let coef = |n: u32| sign.powi(n as i32) * 2f64.powi(-(n as i32));
                Ok((j, family, tail_stats(&base, &pert, coef, p)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut t = Table::new(
            "semicontinuity",
            &[
                "sequence",
                "family",
                "usc_excess",
                "lsc_deficit",
                "usc_violation",
                "lsc_violation",
                "closed_usc_excess",
                "closed_lsc_deficit",
            ],
        );
        let (mut usc_v, mut lsc_v, mut cu, mut cl) = (0usize, 0usize, 0usize, 0usize);
        for (j, family, s) in &stats {
            let (uv, lv) = (s.usc_excess > p.eta, s.lsc_deficit > p.eta);
            usc_v += usize::from(uv);
            lsc_v += usize::from(lv);
            cu += usize::from(s.usc_control > p.eta);
            cl += usize::from(s.lsc_control > p.eta);
            t.push(row![
                *j,
                *family,
                s.usc_excess,
                s.lsc_deficit,
                uv,
                lv,
                s.usc_control,
                s.lsc_control
            ]);
        }
        // fixed controls: the closed-set time without the envelope fails both ways
        let vee = vee_path(0.0)?;
        let up = tail_stats(
            &vee,
            &CadlagPath::scalar_constant(1.0, f64::INFINITY)?,
            |n| 2f64.powi(-(n as i32)),
            p,
        )?;
        let touch = touch_path(0.0)?;
        let down = tail_stats(
            &touch,
            &CadlagPath::scalar_constant(-1.0, f64::INFINITY)?,
            |n| 2f64.powi(-(n as i32)),
            p,
        )?;
        let mut s = Table::new(
            "semicontinuity_summary",
            &["lemma", "sequences", "violations", "closed_time_control_violations"],
        );
        s.push(row!["upper", p.sequences, usc_v, cu]);
        s.push(row!["lower-envelope", p.sequences, lsc_v, cl]);
        let mut c = Table::new(
            "semicontinuity_controls",
            &[
                "path",
                "usc_excess",
                "lsc_deficit",
                "closed_usc_excess",
                "closed_lsc_deficit",
            ],
        );
        c.push(row![
            "vee-up",
            up.usc_excess,
            up.lsc_deficit,
            up.usc_control,
            up.lsc_control
        ]);
        c.push(row![
            "touch-down",
            down.usc_excess,
            down.lsc_deficit,
            down.usc_control,
            down.lsc_control
        ]);
        let controls_bite = up.usc_control > 0.25 && down.lsc_control > 0.25;
        let controls_clean = up.usc_excess <= p.eta && down.lsc_deficit <= p.eta;
        let ok = usc_v == 0 && lsc_v == 0 && controls_bite && controls_clean;
        let detail = format!(
            "violations: upper {usc_v}/{n}, lower-envelope {lsc_v}/{n}; closed-time controls {cu}/{n} and {cl}/{n}; fixed controls flagged {controls_bite}",
            n = p.sequences
        );
        Ok((vec![t, s, c], (ok, detail)))
    })?;
    Ok((tables, Check::new("semicontinuity", ok, detail, elapsed)))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BenchParams {
    pairs: usize,
    horizon: f64,
    max_pieces: usize,
    jump_prob: f64,
    golden_tol: f64,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            pairs: 200,
            horizon: 2.0,
            max_pieces: 8,
            jump_prob: 0.4,
            golden_tol: 1e-6,
        }
    }
}

fn indicator(from: f64) -> Result<CadlagPath> {
    PathBuilder::scalar(0.0)
        .hold_then_jump(from, &[1.0])
        .finish(Tail::EndValue(vec![1.0]), 1.0)
}

/// Golden pair and symmetry of `d°_t` on random pairs.
pub(super) fn metric_bench(p: &toml::Table, seed: u64) -> Result<Report> {
    let (p, echo): (BenchParams, _) = params(p)?;
    let budget = SearchBudget::default();
    let ((golden, g_check), g_elapsed) = timed(|| {
        let r = metric_finite(&indicator(0.4)?, &indicator(0.5)?, 1.0, &budget)?;
        let expected = 1.25f64.ln();
        let mut t = Table::new("golden", &["t", "upper", "lower", "expected"]);
        t.push(row![1.0, r.upper, r.lower, expected]);
        let ok = (r.upper - expected).abs() <= p.golden_tol && (r.lower - expected).abs() <= p.golden_tol;
        Ok((
            t,
            (
                ok,
                format!("upper {}, lower {}, log 1.25 = {expected}", r.upper, r.lower),
            ),
        ))
    })?;
    let ((sym, s_check), s_elapsed) = timed(|| {
        let rows = (0..p.pairs)
            .into_par_iter()
            .map(|i| -> Result<_> {
                let mut rng = stream(seed, i as u64);
                let x = dyadic_scalar(&mut rng, p.horizon, -1.0, 1.0, p.max_pieces, p.jump_prob)?;
                let y = dyadic_scalar(&mut rng, p.horizon, -1.0, 1.0, p.max_pieces, p.jump_prob)?;
                let a = metric_finite(&x, &y, p.horizon, &budget)?;
                let b = metric_finite(&y, &x, p.horizon, &budget)?;
                Ok((i, a, b))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut t = Table::new(
            "symmetry",
            &[
                "pair",
                "upper_xy",
                "upper_yx",
                "lower_xy",
                "lower_yx",
                "symmetric",
                "bracketed",
            ],
        );
        let mut bad = 0;
        for (i, a, b) in rows {
            let sym = a.upper == b.upper && a.lower == b.lower;
            let br = a.lower <= a.upper;
            bad += usize::from(!(sym && br));
            t.push(row![i, a.upper, b.upper, a.lower, b.lower, sym, br]);
        }
        Ok((
            t,
            (
                bad == 0,
                format!("{bad} of {} pairs asymmetric or unbracketed", p.pairs),
            ),
        ))
    })?;
    Ok(Report {
        params: echo,
        tables: vec![golden, sym],
        checks: vec![
            Check::new("metric-golden", g_check.0, g_check.1, g_elapsed),
            Check::new("metric-symmetry", s_check.0, s_check.1, s_elapsed),
        ],
    })
}
