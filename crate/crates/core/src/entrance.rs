//! Entrance times, entrance points and the continuity sets Γ_O, Γ̂_O.
//!
//! Times are computed exactly on the piecewise-affine presentation: along
//! each segment the set of parameters where the path stays in `O` (or `Ō`)
//! is an interval obtained from the domain's constraints, and the entrance
//! time is the infimum of its complement within the segment.

use serde::{Deserialize, Serialize};

use crate::cadlag::{CadlagPath, LowerEnvelope};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::skorohod::{self, TimeChange};

/// Which complement the path is entering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// `O^c`, a closed set.
    OpenComplement,
    /// `Ō^c`, an open set.
    ClosedComplement,
}

/// `inf{t ≥ 0 : …}` versus `inf{t > 0 : …}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Convention {
    NonNegative,
    Positive,
}

/// Parameter set `{s : p + s·v ∈ U}` along a line, with `U` open (`closed ==
/// false`) or its closure. Convexity of the region makes this an interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SafeSet {
    pub lo: f64,
    pub hi: f64,
    pub closed: bool,
    pub empty: bool,
}

impl SafeSet {
    fn all(closed: bool) -> Self {
        SafeSet {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            closed,
            empty: false,
        }
    }

    fn none(closed: bool) -> Self {
        SafeSet {
            empty: true,
            ..Self::all(closed)
        }
    }

    fn normalize(mut self) -> Self {
        if self.lo > self.hi || (!self.closed && self.lo >= self.hi) {
            self.empty = true;
        }
        self
    }
}

/// A convex region whose complement is being entered.
pub trait ExitRegion: Sync {
    fn dim(&self) -> usize;

    /// Safe parameters along the segment `p + s·v`, `s ∈ [0, len)`, whose
    /// limit at `len` is `end` when `len` is finite.
    fn safe_set(&self, p: &[f64], v: &[f64], end: Option<&[f64]>, len: f64, closed: bool) -> SafeSet;

    fn contains(&self, x: &[f64], closed: bool) -> bool;

    /// Removes rounding from a point reached by a continuous crossing.
    fn snap(&self, _x: &mut [f64]) {}
}

/// The scalar region `(level, ∞)`; entering its complement means reaching
/// `(−∞, level]`, and its closure's complement is `(−∞, level)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfLine {
    pub level: f64,
}

impl ExitRegion for HalfLine {
    fn dim(&self) -> usize {
        1
    }

    fn safe_set(&self, p: &[f64], v: &[f64], end: Option<&[f64]>, len: f64, closed: bool) -> SafeSet {
        let mut set = SafeSet::all(closed);
        apply_affine(&mut set, p[0] - self.level, end.map(|q| q[0] - self.level), v[0], len);
        set.normalize()
    }

    fn contains(&self, x: &[f64], closed: bool) -> bool {
        if closed {
            x[0] >= self.level
        } else {
            x[0] > self.level
        }
    }

    fn snap(&self, x: &mut [f64]) {
        if (x[0] - self.level).abs() <= 1e-9 * (1.0 + self.level.abs()) {
            x[0] = self.level;
        }
    }
}

impl ExitRegion for Domain {
    fn dim(&self) -> usize {
        Domain::dim(self)
    }

    fn safe_set(&self, p: &[f64], v: &[f64], end: Option<&[f64]>, len: f64, closed: bool) -> SafeSet {
        let mut set = SafeSet::all(closed);
        if let Some(cons) = self.affine_constraints() {
            for (a, c) in cons {
                let f0 = c - dot(&a, p);
                let f1 = end.map(|q| c - dot(&a, q));
                apply_affine(&mut set, f0, f1, -dot(&a, v), len);
                if set.normalize().empty {
                    return SafeSet::none(closed);
                }
            }
            return set.normalize();
        }
        let (center, radius) = self.ball_data().expect("non-affine domains are balls");
        let w: Vec<f64> = p.iter().zip(center).map(|(x, c)| x - c).collect();
        let qa = dot(v, v);
        let qb = 2.0 * dot(&w, v);
        let qc = dot(&w, &w) - radius * radius;
        if qa == 0.0 {
            let inside = if closed { qc <= 0.0 } else { qc < 0.0 };
            return if inside { set } else { SafeSet::none(closed) };
        }
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 || (disc == 0.0 && !closed) {
            return SafeSet::none(closed);
        }
        let q = -0.5 * (qb + qb.signum() * disc.sqrt());
        let (r1, r2) = if q == 0.0 {
            (0.0, 0.0)
        } else {
            let a = q / qa;
            let b = qc / q;
            (a.min(b), a.max(b))
        };
        set.lo = r1;
        set.hi = r2;
        set.normalize()
    }

    fn contains(&self, x: &[f64], closed: bool) -> bool {
        let m = self.min_constraint(x);
        if closed {
            m >= 0.0
        } else {
            m > 0.0
        }
    }

    fn snap(&self, x: &mut [f64]) {
        self.snap_to_boundary(x);
    }
}

/// Intersects `set` with `{s : f(s) > 0}` (or `≥ 0`) for affine `f` with
/// `f(0) = f0`, `f(len) = f1` (finite segments) or slope `df` (unbounded).
fn apply_affine(set: &mut SafeSet, f0: f64, f1: Option<f64>, df: f64, len: f64) {
    let (root, rising, flat) = match f1 {
        Some(f1) if len.is_finite() => {
            // endpoint form; a zero at either end is returned verbatim since
            // `len * f0 / f0` may round away from `len`
            let root = if f1 == 0.0 {
                len
            } else if f0 == 0.0 {
                0.0
            } else {
                len * f0 / (f0 - f1)
            };
            (root, f1 > f0, f1 == f0)
        }
        _ => (-f0 / df, df > 0.0, df == 0.0),
    };
    if flat {
        let ok = if set.closed { f0 >= 0.0 } else { f0 > 0.0 };
        if !ok {
            set.empty = true;
            set.lo = f64::INFINITY;
            set.hi = f64::NEG_INFINITY;
        }
        return;
    }
    if rising {
        set.lo = set.lo.max(root);
    } else {
        set.hi = set.hi.min(root);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Parameter range within a segment, with open/closed ends.
#[derive(Clone, Copy, Debug)]
struct Range {
    r0: f64,
    r1: f64,
    r0_closed: bool,
    r1_closed: bool,
}

impl Range {
    fn is_empty(&self) -> bool {
        self.r0 > self.r1 || (self.r0 == self.r1 && !(self.r0_closed && self.r1_closed))
    }
}

/// `inf (range ∖ safe)`, or `None` if the difference is empty.
fn first_outside(safe: &SafeSet, range: Range) -> Option<f64> {
    if range.is_empty() {
        return None;
    }
    if safe.empty {
        return Some(range.r0);
    }
    let mut best: Option<f64> = None;
    // below the safe interval
    let left_ok = if range.r0_closed {
        if safe.closed {
            range.r0 < safe.lo
        } else {
            range.r0 <= safe.lo
        }
    } else {
        range.r0 < safe.lo
    };
    if left_ok {
        best = Some(range.r0);
    }
    // above the safe interval
    let right_ok = safe.hi < range.r1
        || (safe.hi == range.r1 && range.r1_closed && !safe.closed && !(range.r0 == range.r1 && !range.r0_closed));
    if right_ok {
        let s = safe.hi.max(range.r0);
        best = Some(best.map_or(s, |b: f64| b.min(s)));
    }
    best
}

/// Time of parameter `s` in segment `i`, exact at the segment end.
fn segment_time(path: &CadlagPath, i: usize, s: f64) -> f64 {
    let end = path.segment_end(i);
    if s == end - path.breakpoints()[i] || (end.is_finite() && path.breakpoints()[i] + s >= end) {
        end
    } else {
        path.breakpoints()[i] + s
    }
}

fn check_dim(path: &CadlagPath, region: &dyn ExitRegion) -> Result<()> {
    if path.dim() != region.dim() {
        return Err(Error::dim(region.dim(), path.dim()));
    }
    Ok(())
}

/// `inf{t : ω(t) ∈ A}` with the chosen convention; `∞` if never.
pub fn entrance_time_in(
    path: &CadlagPath,
    region: &dyn ExitRegion,
    target: Target,
    convention: Convention,
) -> Result<f64> {
    Ok(locate(path, region, target, convention)?.map_or(f64::INFINITY, |(t, _, _)| t))
}

/// Segment index, in-segment parameter and time of the first entrance.
fn locate(
    path: &CadlagPath,
    region: &dyn ExitRegion,
    target: Target,
    convention: Convention,
) -> Result<Option<(f64, usize, f64)>> {
    check_dim(path, region)?;
    let closed = target == Target::ClosedComplement;
    for i in 0..path.num_segments() {
        let len = path.segment_end(i) - path.breakpoints()[i];
        let end = path.segment_end_value(i);
        let safe = region.safe_set(path.right_at(i), path.slope_at(i), end.as_deref(), len, closed);
        let range = Range {
            r0: 0.0,
            r1: len,
            r0_closed: !(i == 0 && convention == Convention::Positive),
            r1_closed: false,
        };
        if let Some(s) = first_outside(&safe, range) {
            return Ok(Some((segment_time(path, i, s), i, s)));
        }
    }
    Ok(None)
}

/// Entrance time of the left-limit path `ω⁻` (with `ω⁻(0) = ω(0)`).
pub fn left_entrance_time(path: &CadlagPath, region: &dyn ExitRegion, target: Target) -> Result<f64> {
    Ok(locate_left(path, region, target)?.map_or(f64::INFINITY, |(t, _, _)| t))
}

fn locate_left(path: &CadlagPath, region: &dyn ExitRegion, target: Target) -> Result<Option<(f64, usize, f64)>> {
    check_dim(path, region)?;
    let closed = target == Target::ClosedComplement;
    if !region.contains(path.right_at(0), closed) {
        return Ok(Some((0.0, 0, 0.0)));
    }
    let n = path.num_segments();
    for i in 0..n {
        let len = path.segment_end(i) - path.breakpoints()[i];
        let end = path.segment_end_value(i);
        let safe = region.safe_set(path.right_at(i), path.slope_at(i), end.as_deref(), len, closed);
        let range = Range {
            r0: 0.0,
            r1: len,
            r0_closed: false,
            r1_closed: i + 1 < n,
        };
        if let Some(s) = first_outside(&safe, range) {
            return Ok(Some((segment_time(path, i, s), i, s)));
        }
    }
    Ok(None)
}

/// `T_{O^c}(ω)` or `T_{Ō^c}(ω)` with the `t ≥ 0` convention.
pub fn entrance_time(path: &CadlagPath, domain: &Domain, target: Target) -> Result<f64> {
    entrance_time_in(path, domain, target, Convention::NonNegative)
}

/// `T^a = T ∧ a`.
pub fn capped(t: f64, a: f64) -> f64 {
    t.min(a)
}

fn point_at(path: &CadlagPath, region: &dyn ExitRegion, t: f64, i: usize, s: f64) -> Result<Vec<f64>> {
    let mut x = path.eval(t)?;
    if s > 0.0 && t != path.breakpoints()[i] {
        region.snap(&mut x);
    }
    Ok(x)
}

fn left_point_at(path: &CadlagPath, region: &dyn ExitRegion, t: f64, i: usize, s: f64) -> Result<Vec<f64>> {
    if t == 0.0 {
        return Ok(path.right_at(0).to_vec());
    }
    let mut x = path.left_limit(t)?;
    if s > 0.0 && !path.breakpoints().contains(&t) {
        let _ = i;
        region.snap(&mut x);
    }
    Ok(x)
}

/// `Π(ω) = ω(T_{O^c}(ω))` for a general region.
pub fn entrance_point_in(path: &CadlagPath, region: &dyn ExitRegion) -> Result<Vec<f64>> {
    match locate(path, region, Target::OpenComplement, Convention::NonNegative)? {
        Some((t, i, s)) => point_at(path, region, t, i, s),
        None => Err(Error::NeverExits),
    }
}

/// `Π_O(ω) = ω(T_{O^c}(ω))`.
pub fn entrance_point(path: &CadlagPath, domain: &Domain) -> Result<Vec<f64>> {
    entrance_point_in(path, domain)
}

/// Entrance data of a path against a domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntranceRecord {
    /// `T_{O^c}(ω)`, `∞` when the path never leaves `O`.
    pub time: f64,
    pub point: Option<Vec<f64>>,
    /// `T_{O^c}(ω⁻)`.
    pub left_time: f64,
    pub left_point: Option<Vec<f64>>,
    /// `T_{Ō^c}(ω)`.
    pub closed_complement_time: f64,
}

impl EntranceRecord {
    pub fn capped(&self, a: f64) -> f64 {
        capped(self.time, a)
    }
}

pub fn entrance_record(path: &CadlagPath, domain: &Domain) -> Result<EntranceRecord> {
    record_in(path, domain)
}

pub fn record_in(path: &CadlagPath, region: &dyn ExitRegion) -> Result<EntranceRecord> {
    let (time, point) = match locate(path, region, Target::OpenComplement, Convention::NonNegative)? {
        Some((t, i, s)) => (t, Some(point_at(path, region, t, i, s)?)),
        None => (f64::INFINITY, None),
    };
    let (left_time, left_point) = match locate_left(path, region, Target::OpenComplement)? {
        Some((t, i, s)) => (t, Some(left_point_at(path, region, t, i, s)?)),
        None => (f64::INFINITY, None),
    };
    let closed_complement_time = entrance_time_in(path, region, Target::ClosedComplement, Convention::NonNegative)?;
    Ok(EntranceRecord {
        time,
        point,
        left_time,
        left_point,
        closed_complement_time,
    })
}

/// Membership in the continuity sets, with the reasons for any failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaClass {
    pub in_gamma: bool,
    pub in_gamma_hat: bool,
    pub violations: Vec<String>,
}

/// Classifies `ω` against Γ_O (`T(ω⁻) = T(ω) = T_{Ō^c}(ω)`) and Γ̂_O (also
/// `Π(ω⁻) = Π(ω)` whenever `Π(ω⁻) ∈ ∂O`).
pub fn classify_gamma(path: &CadlagPath, domain: &Domain) -> Result<GammaClass> {
    let rec = entrance_record(path, domain)?;
    classify_record(&rec, domain, path.horizon())
}

pub fn classify_record(rec: &EntranceRecord, domain: &Domain, horizon: f64) -> Result<GammaClass> {
    if horizon.is_finite()
        && rec.time.is_infinite()
        && rec.left_time.is_infinite()
        && rec.closed_complement_time.is_infinite()
    {
        return Err(Error::Undetermined { horizon });
    }
    let mut violations = Vec::new();
    if rec.left_time != rec.time {
        violations.push(format!("T(ω⁻) = {} differs from T(ω) = {}", rec.left_time, rec.time));
    }
    if rec.closed_complement_time != rec.time {
        violations.push(format!(
            "T into the closure's complement = {} differs from T(ω) = {}",
            rec.closed_complement_time, rec.time
        ));
    }
    let in_gamma = violations.is_empty();
    let mut in_gamma_hat = in_gamma;
    if let Some(lp) = &rec.left_point {
        if domain.on_boundary(lp)? && rec.point.as_ref() != Some(lp) {
            violations.push(format!(
                "Π(ω⁻) = {lp:?} lies on the boundary but Π(ω) = {:?}",
                rec.point
            ));
            in_gamma_hat = false;
        }
    }
    Ok(GammaClass {
        in_gamma,
        in_gamma_hat,
        violations,
    })
}

/// `T_{(−∞, level]}(ω_*) = min(T(ω), T(ω⁻))` for the lower envelope.
pub fn envelope_hitting_time(env: &LowerEnvelope, level: f64) -> Result<f64> {
    let h = HalfLine { level };
    let a = entrance_time_in(env.path(), &h, Target::OpenComplement, Convention::NonNegative)?;
    let b = left_entrance_time(env.path(), &h, Target::OpenComplement)?;
    Ok(a.min(b))
}

/// Perturbation families whose Skorohod distance to the base path vanishes
/// with the scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Perturbation {
    /// `ω + s·direction`.
    Shift { direction: Vec<f64> },
    /// `ω∘λ` with `λ` fixing the integers and slopes `e^{±s}`.
    TimeWarp,
    /// Every jump time moved by `+s` (clamped to stay ordered).
    JumpDither,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeRow {
    pub scale: f64,
    pub metric_upper: f64,
    pub time_gap: f64,
    pub point_gap: f64,
}

/// Table of `(d°_∞ upper bound, |T_n − T|, |Π_n − Π|)` over the scales.
pub fn continuity_probe(
    path: &CadlagPath,
    domain: &Domain,
    perturbation: &Perturbation,
    scales: &[f64],
    metric_tol: f64,
) -> Result<Vec<ProbeRow>> {
    let base = entrance_record(path, domain)?;
    scales
        .iter()
        .map(|&s| {
            let pert = perturb(path, perturbation, s)?;
            let metric = skorohod::metric_infinite(&pert, path, metric_tol)?;
            let rec = entrance_record(&pert, domain)?;
            let time_gap = gap_time(rec.time, base.time);
            let point_gap = match (&rec.point, &base.point) {
                (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
                (None, None) => 0.0,
                _ => f64::INFINITY,
            };
            Ok(ProbeRow {
                scale: s,
                metric_upper: metric.upper,
                time_gap,
                point_gap,
            })
        })
        .collect()
}

fn gap_time(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

/// Applies one perturbation at scale `s`.
pub fn perturb(path: &CadlagPath, perturbation: &Perturbation, s: f64) -> Result<CadlagPath> {
    match perturbation {
        Perturbation::Shift { direction } => {
            let c: Vec<f64> = direction.iter().map(|d| d * s).collect();
            path.shifted(&c)
        }
        Perturbation::TimeWarp => {
            let lambda = TimeChange::integer_warp(path.horizon(), s)?;
            skorohod::apply_timechange(path, &lambda)
        }
        Perturbation::JumpDither => dither_jumps(path, s),
    }
}

/// Moves each jump time forward by `s`, stretching the preceding segment and
/// compressing the following one; positions are clamped to the midpoint
/// towards the next breakpoint.
fn dither_jumps(path: &CadlagPath, s: f64) -> Result<CadlagPath> {
    let jumps = path.jump_indices();
    if jumps.is_empty() {
        return Ok(path.clone());
    }
    let times = path.breakpoints();
    let mut anchors_s = vec![0.0];
    let mut anchors_l = vec![0.0];
    for &i in &jumps {
        let prev = *anchors_l.last().expect("non-empty");
        let next = path.segment_end(i);
        let room = 0.5 * (next.min(times[i] + 1.0) - times[i]);
        let shift = s.min(room).min(0.5 * (times[i] - prev));
        anchors_s.push(times[i] + shift);
        anchors_l.push(times[i]);
    }
    let lambda = if path.is_finite_horizon() {
        anchors_s.push(path.horizon());
        anchors_l.push(path.horizon());
        TimeChange::new(anchors_s, anchors_l)?
    } else {
        let last_s = *anchors_s.last().expect("non-empty");
        let last_l = *anchors_l.last().expect("non-empty");
        anchors_s.push(last_s + 1.0);
        anchors_l.push(last_l + 1.0);
        TimeChange::unbounded(anchors_s, anchors_l, 1.0)?
    };
    skorohod::apply_timechange(path, &lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cadlag::{PathBuilder, Tail};

    fn unit() -> Domain {
        Domain::interval(0.0, 1.0).unwrap()
    }

    #[test]
    fn touch_at_segment_end_stays_inside_closure() {
        // non-dyadic start and length; the chord reaches the level exactly
        let p = PathBuilder::scalar(0.617332175925926)
            .line_to(3.0859375 - 2.6666666666666665, &[1.0])
            .line_to(0.6, &[-0.5])
            .line_to(1.0, &[1.5])
            .finish(Tail::Slope(vec![0.0]), 2.0)
            .unwrap();
        let dom = Domain::interval(-1.0, 1.0).unwrap();
        assert_eq!(
            entrance_time(&p, &dom, Target::OpenComplement).unwrap(),
            3.0859375 - 2.6666666666666665
        );
        assert_eq!(entrance_time(&p, &dom, Target::ClosedComplement).unwrap(), 0.9);
    }

    fn abs_half(shift: f64) -> CadlagPath {
        PathBuilder::scalar(0.5 + shift)
            .line_to(0.5, &[shift])
            .finish(Tail::Slope(vec![1.0]), f64::INFINITY)
            .unwrap()
    }

    fn c1_lower(shift: f64) -> CadlagPath {
        let third = 1.0 / 3.0;
        PathBuilder::scalar(third + shift)
            .line_to(third, &[shift])
            .jump(&[third + shift])
            .finish(Tail::Slope(vec![-1.0]), f64::INFINITY)
            .unwrap()
    }

    fn c2(shift: f64) -> CadlagPath {
        PathBuilder::scalar(0.9)
            .line_to(1.0, &[0.0])
            .jump(&[-1.0])
            .finish(Tail::Slope(vec![-0.9]), f64::INFINITY)
            .unwrap()
            .shifted(&[shift])
            .unwrap()
    }

    #[test]
    fn entrance_time_examples() {
        let t = entrance_time(&abs_half(0.0), &unit(), Target::OpenComplement).unwrap();
        assert_eq!(t, 0.5);
        let t = entrance_time(&c1_lower(0.0), &unit(), Target::OpenComplement).unwrap();
        assert!((t - 2.0 / 3.0).abs() < 1e-15);
        let c = CadlagPath::scalar_constant(0.5, f64::INFINITY).unwrap();
        assert_eq!(
            entrance_time(&c, &unit(), Target::OpenComplement).unwrap(),
            f64::INFINITY
        );
        let two_d = CadlagPath::constant(&[0.5, 0.5], 1.0).unwrap();
        assert!(matches!(
            entrance_time(&two_d, &unit(), Target::OpenComplement),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn entrance_point_examples() {
        assert_eq!(entrance_point(&c2(0.0), &unit()).unwrap(), vec![-1.0]);
        for n in [10.0, 100.0, 1000.0] {
            assert_eq!(entrance_point(&c2(-1.0 / n), &unit()).unwrap(), vec![0.0]);
        }
        let drift = PathBuilder::scalar(0.0)
            .finish(Tail::Slope(vec![1.0]), f64::INFINITY)
            .unwrap();
        let dom = Domain::interval(-1.0, 1.0).unwrap();
        assert_eq!(entrance_point(&drift, &dom).unwrap(), vec![1.0]);
        let c = CadlagPath::scalar_constant(0.5, f64::INFINITY).unwrap();
        assert_eq!(entrance_point(&c, &unit()), Err(Error::NeverExits));
    }

    #[test]
    fn classify_examples() {
        let g = classify_gamma(&abs_half(0.0), &unit()).unwrap();
        assert!(!g.in_gamma && !g.in_gamma_hat);
        let rec = entrance_record(&abs_half(0.0), &unit()).unwrap();
        assert_eq!(rec.closed_complement_time, 1.5);

        let strict = PathBuilder::scalar(0.9)
            .finish(Tail::Slope(vec![-2.0]), f64::INFINITY)
            .unwrap();
        let g = classify_gamma(&strict, &unit()).unwrap();
        assert!(g.in_gamma && g.in_gamma_hat, "{:?}", g.violations);

        // 1 − 2t starts on ∂O, so T_{O^c} = 0 while T_{Ō^c} = 1/2
        let boundary_start = PathBuilder::scalar(1.0)
            .finish(Tail::Slope(vec![-2.0]), f64::INFINITY)
            .unwrap();
        let g = classify_gamma(&boundary_start, &unit()).unwrap();
        assert!(!g.in_gamma);

        let g = classify_gamma(&c2(0.0), &unit()).unwrap();
        assert!(g.in_gamma && !g.in_gamma_hat, "{:?}", g.violations);
    }

    #[test]
    fn undetermined_on_short_horizon() {
        let c = CadlagPath::scalar_constant(0.5, 3.0).unwrap();
        assert_eq!(classify_gamma(&c, &unit()), Err(Error::Undetermined { horizon: 3.0 }));
    }

    #[test]
    fn positive_convention_skips_time_zero() {
        // starts on the boundary and moves inside, then leaves at t = 1
        let p = PathBuilder::scalar(0.0)
            .line_to(0.5, &[0.5])
            .finish(Tail::Slope(vec![-1.0]), f64::INFINITY)
            .unwrap();
        let dom = unit();
        assert_eq!(
            entrance_time_in(&p, &dom, Target::OpenComplement, Convention::NonNegative).unwrap(),
            0.0
        );
        assert_eq!(
            entrance_time_in(&p, &dom, Target::OpenComplement, Convention::Positive).unwrap(),
            1.0
        );
        // leaving immediately gives 0 under both
        let q = PathBuilder::scalar(0.0).finish(Tail::Slope(vec![-1.0]), 2.0).unwrap();
        assert_eq!(
            entrance_time_in(&q, &dom, Target::OpenComplement, Convention::Positive).unwrap(),
            0.0
        );
    }

    #[test]
    fn ball_crossing() {
        let dom = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let p = PathBuilder::new(&[0.0, 0.0])
            .finish(Tail::Slope(vec![0.6, 0.8]), f64::INFINITY)
            .unwrap();
        let rec = entrance_record(&p, &dom).unwrap();
        assert!((rec.time - 1.0).abs() < 1e-15);
        assert_eq!(rec.time, rec.closed_complement_time);
        // tangent line touches ∂O without leaving Ō
        let t = PathBuilder::new(&[-1.0, 1.0])
            .finish(Tail::Slope(vec![1.0, 0.0]), f64::INFINITY)
            .unwrap();
        let rec = entrance_record(&t, &dom).unwrap();
        assert_eq!(rec.time, 0.0);
        assert_eq!(rec.closed_complement_time, 0.0);
    }

    #[test]
    fn reduction_through_signed_distance() {
        let dom = Domain::cube(2, 1.0).unwrap();
        let p = PathBuilder::new(&[0.2, -0.3])
            .line_to(0.7, &[0.6, 0.1])
            .jump(&[0.4, 0.5])
            .finish(Tail::Slope(vec![0.3, 1.1]), 4.0)
            .unwrap();
        let rho = p.compose_scalar(&dom, 1e-9).unwrap();
        let direct = entrance_time(&p, &dom, Target::OpenComplement).unwrap();
        let reduced = entrance_time_in(
            &rho,
            &HalfLine { level: 0.0 },
            Target::OpenComplement,
            Convention::NonNegative,
        )
        .unwrap();
        assert!((direct - reduced).abs() < 1e-8, "{direct} vs {reduced}");
    }

    #[test]
    fn envelope_time_takes_left_limits() {
        // upward jump from 0: the path itself never reaches 0 but ω⁻ does
        let env = c1_lower(0.0).lower_envelope().unwrap();
        assert_eq!(envelope_hitting_time(&env, 0.0).unwrap(), 1.0 / 3.0);
    }
}
