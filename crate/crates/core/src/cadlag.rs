//! Finitely presented càdlàg paths.
//!
//! A [`CadlagPath`] is piecewise affine on `[t_i, t_{i+1})` with finitely many
//! breakpoints. Each breakpoint stores the right value (the value of the path)
//! and the left limit separately, so jump sizes and left limits are exact.
//! The last segment runs to a finite horizon or extends affinely to infinity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sup-error budget for [`CadlagPath::compose_scalar`].
pub const DEFAULT_COMPOSE_EPS: f64 = 1e-9;

const MAX_COMPOSE_PIECES: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq)]
pub struct CadlagPath {
    dim: usize,
    /// `f64::INFINITY` for paths on `[0, ∞)`.
    horizon: f64,
    times: Vec<f64>,
    right: Vec<f64>,
    left: Vec<f64>,
    slope: Vec<f64>,
}

impl CadlagPath {
    /// Validating constructor over flat per-breakpoint storage.
    pub fn from_parts(
        dim: usize,
        horizon: f64,
        times: Vec<f64>,
        right: Vec<f64>,
        left: Vec<f64>,
        slope: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPath("dimension must be at least 1".into()));
        }
        let k = times.len();
        if k == 0 || times[0] != 0.0 {
            return Err(Error::InvalidPath("first breakpoint must be t = 0".into()));
        }
        if right.len() != k * dim || left.len() != k * dim || slope.len() != k * dim {
            return Err(Error::InvalidPath("value arrays do not match breakpoints".into()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidPath("breakpoints must be strictly increasing".into()));
        }
        if !(horizon > times[k - 1]) {
            return Err(Error::InvalidPath(format!(
                "horizon {horizon} must exceed the last breakpoint {}",
                times[k - 1]
            )));
        }
        if right.iter().chain(&left).chain(&slope).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPath("non-finite value".into()));
        }
        if left[..dim] != right[..dim] {
            return Err(Error::InvalidPath(
                "left value at t = 0 must equal the right value".into(),
            ));
        }
        Ok(CadlagPath {
            dim,
            horizon,
            times,
            right,
            left,
            slope,
        })
    }

    pub fn constant(value: &[f64], horizon: f64) -> Result<Self> {
        PathBuilder::new(value).finish(Tail::Slope(vec![0.0; value.len()]), horizon)
    }

    pub fn scalar_constant(value: f64, horizon: f64) -> Result<Self> {
        Self::constant(&[value], horizon)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_finite_horizon(&self) -> bool {
        self.horizon.is_finite()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.times
    }

    pub fn num_segments(&self) -> usize {
        self.times.len()
    }

    pub fn right_at(&self, i: usize) -> &[f64] {
        &self.right[i * self.dim..(i + 1) * self.dim]
    }

    /// Left limit at breakpoint `i`; equals the right value at `i = 0`.
    pub fn left_at(&self, i: usize) -> &[f64] {
        &self.left[i * self.dim..(i + 1) * self.dim]
    }

    pub fn slope_at(&self, i: usize) -> &[f64] {
        &self.slope[i * self.dim..(i + 1) * self.dim]
    }

    /// End time of segment `i` (the next breakpoint, or the horizon).
    pub fn segment_end(&self, i: usize) -> f64 {
        self.times.get(i + 1).copied().unwrap_or(self.horizon)
    }

    /// Limit of segment `i` at its right end, `None` for an unbounded tail.
    pub fn segment_end_value(&self, i: usize) -> Option<Vec<f64>> {
        if i + 1 < self.times.len() {
            Some(self.left_at(i + 1).to_vec())
        } else if self.horizon.is_finite() {
            Some(self.affine_in_segment(i, self.horizon))
        } else {
            None
        }
    }

    pub fn has_jump_at(&self, i: usize) -> bool {
        i > 0 && self.left_at(i) != self.right_at(i)
    }

    /// Indices of breakpoints carrying a jump.
    pub fn jump_indices(&self) -> Vec<usize> {
        (1..self.times.len()).filter(|&i| self.has_jump_at(i)).collect()
    }

    /// Index of the segment containing `t`, i.e. the last `i` with `t_i ≤ t`.
    pub fn segment_index(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    fn affine_in_segment(&self, i: usize, t: f64) -> Vec<f64> {
        if t == self.times[i] {
            return self.right_at(i).to_vec();
        }
        let dt = t - self.times[i];
        self.right_at(i)
            .iter()
            .zip(self.slope_at(i))
            .map(|(v, s)| v + s * dt)
            .collect()
    }

    /// Value of segment `i` at `t` using exact endpoint data when `t` is an endpoint.
    pub(crate) fn value_in_segment(&self, i: usize, t: f64) -> Vec<f64> {
        if i + 1 < self.times.len() && t == self.times[i + 1] {
            return self.left_at(i + 1).to_vec();
        }
        self.affine_in_segment(i, t)
    }

    /// Component `k` of [`Self::value_in_segment`].
    pub(crate) fn component_in_segment(&self, i: usize, t: f64, k: usize) -> f64 {
        let d = self.dim;
        if i + 1 < self.times.len() && t == self.times[i + 1] {
            return self.left[(i + 1) * d + k];
        }
        let v = self.right[i * d + k];
        if t == self.times[i] {
            return v;
        }
        v + self.slope[i * d + k] * (t - self.times[i])
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t < self.horizon) {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    /// Right-continuous value ω(t).
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let i = self.segment_index(t);
        Ok(self.affine_in_segment(i, t))
    }

    pub fn eval_scalar(&self, t: f64) -> Result<f64> {
        self.require_scalar()?;
        Ok(self.eval(t)?[0])
    }

    /// Left limit ω⁻(t) for `0 < t ≤ horizon`.
    pub fn left_limit(&self, t: f64) -> Result<Vec<f64>> {
        if !(t > 0.0 && t <= self.horizon) || t.is_infinite() {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let j = self.times.partition_point(|&s| s < t);
        if j < self.times.len() && self.times[j] == t {
            return Ok(self.left_at(j).to_vec());
        }
        Ok(self.affine_in_segment(j - 1, t))
    }

    fn require_scalar(&self) -> Result<()> {
        if self.dim != 1 {
            return Err(Error::dim(1, self.dim));
        }
        Ok(())
    }

    /// Lower-semicontinuous envelope ω_* of a scalar path.
    pub fn lower_envelope(&self) -> Result<LowerEnvelope> {
        self.require_scalar()?;
        Ok(LowerEnvelope { path: self.clone() })
    }

    /// `inf_{0 ≤ s ≤ t} ω(s)`, including left limits at breakpoints in `(0, t]`.
    pub fn running_inf(&self, t: f64) -> Result<f64> {
        self.require_scalar()?;
        self.check_time(t)?;
        let last = self.segment_index(t);
        let mut inf = f64::INFINITY;
        for i in 0..=last {
            inf = inf.min(self.right_at(i)[0]);
            let end = if i < last {
                self.left_at(i + 1)[0]
            } else {
                self.affine_in_segment(i, t)[0]
            };
            inf = inf.min(end);
        }
        Ok(inf)
    }

    /// `sup_{0 ≤ s < m} |ω(s)|` (Euclidean norm for vector paths).
    pub fn sup_norm(&self, m: f64) -> Result<f64> {
        if !(m >= 0.0 && m <= self.horizon) {
            return Err(Error::TimeOutOfRange {
                t: m,
                horizon: self.horizon,
            });
        }
        if m == 0.0 {
            return Ok(0.0);
        }
        let mut sup: f64 = 0.0;
        for i in 0..self.times.len() {
            if self.times[i] >= m {
                break;
            }
            sup = sup.max(norm(self.right_at(i)));
            let end = self.segment_end(i).min(m);
            if end.is_infinite() {
                if self.slope_at(i).iter().any(|&s| s != 0.0) {
                    return Ok(f64::INFINITY);
                }
                continue;
            }
            sup = sup.max(norm(&self.value_in_segment(i, end)));
        }
        Ok(sup)
    }

    /// Pointwise `a·self + b·other` on the merged breakpoint grid.
    pub fn linear_combination(&self, a: f64, other: &CadlagPath, b: f64) -> Result<CadlagPath> {
        if self.dim != other.dim {
            return Err(Error::dim(self.dim, other.dim));
        }
        let horizon = self.horizon.min(other.horizon);
        let times = merge_times(&self.times, &other.times, horizon);
        let d = self.dim;
        let mut right = Vec::with_capacity(times.len() * d);
        let mut left = Vec::with_capacity(times.len() * d);
        let mut slope = Vec::with_capacity(times.len() * d);
        for (k, &t) in times.iter().enumerate() {
            let (i, j) = (self.segment_index(t), other.segment_index(t));
            let xr = self.affine_in_segment(i, t);
            let yr = other.affine_in_segment(j, t);
            right.extend(xr.iter().zip(&yr).map(|(x, y)| a * x + b * y));
            if k == 0 {
                left.extend(xr.iter().zip(&yr).map(|(x, y)| a * x + b * y));
            } else {
                let xl = self.left_limit(t)?;
                let yl = other.left_limit(t)?;
                left.extend(xl.iter().zip(&yl).map(|(x, y)| a * x + b * y));
            }
            slope.extend(
                self.slope_at(i)
                    .iter()
                    .zip(other.slope_at(j))
                    .map(|(x, y)| a * x + b * y),
            );
        }
        CadlagPath::from_parts(d, horizon, times, right, left, slope)
    }

    /// `self − other`.
    pub fn difference(&self, other: &CadlagPath) -> Result<CadlagPath> {
        self.linear_combination(1.0, other, -1.0)
    }

    /// Adds a constant vector to every value.
    pub fn shifted(&self, c: &[f64]) -> Result<CadlagPath> {
        if c.len() != self.dim {
            return Err(Error::dim(self.dim, c.len()));
        }
        let add = |v: &[f64]| -> Vec<f64> {
            v.chunks(self.dim)
                .flat_map(|chunk| chunk.iter().zip(c).map(|(x, y)| x + y))
                .collect()
        };
        Ok(CadlagPath {
            right: add(&self.right),
            left: add(&self.left),
            ..self.clone()
        })
    }

    /// Restriction to `[0, m)`.
    pub fn truncated(&self, m: f64) -> Result<CadlagPath> {
        if !(m > 0.0 && m <= self.horizon) || m.is_infinite() {
            return Err(Error::TimeOutOfRange {
                t: m,
                horizon: self.horizon,
            });
        }
        let k = self.times.partition_point(|&s| s < m);
        let d = self.dim;
        Ok(CadlagPath {
            dim: d,
            horizon: m,
            times: self.times[..k].to_vec(),
            right: self.right[..k * d].to_vec(),
            left: self.left[..k * d].to_vec(),
            slope: self.slope[..k * d].to_vec(),
        })
    }

    /// Scalar path `η` with `‖η − f∘ω‖ ≤ eps`, jump times preserved.
    ///
    /// Concave and convex maps get a certified bound from secant slopes;
    /// affine maps are composed exactly. Maps of unknown shape are refined
    /// until the midpoint deviation drops below `eps`, which is an estimate.
    pub fn compose_scalar(&self, f: &dyn ScalarMap, eps: f64) -> Result<CadlagPath> {
        if f.dim() != self.dim {
            return Err(Error::dim(f.dim(), self.dim));
        }
        let mut builder = PathBuilder::new(&[f.apply(self.right_at(0))]);
        let n = self.times.len();
        for i in 0..n {
            if i > 0 {
                let t = self.times[i];
                // close the previous segment at its exact left limit
                builder = builder.line_to(t, &[f.apply(self.left_at(i))]);
                if self.has_jump_at(i) {
                    builder = builder.jump(&[f.apply(self.right_at(i))]);
                }
            }
            let t0 = self.times[i];
            let t1 = self.segment_end(i);
            let is_last = i + 1 == n;
            if t1.is_infinite() {
                if self.slope_at(i).iter().all(|&s| s == 0.0) {
                    break;
                }
                if f.shape() == Curvature::Affine {
                    let probe = self.affine_in_segment(i, t0 + 1.0);
                    let s = f.apply(&probe) - f.apply(self.right_at(i));
                    return builder.finish(Tail::Slope(vec![s]), f64::INFINITY);
                }
                return Err(Error::ApproximationBudgetExceeded {
                    tolerance: eps,
                    max_pieces: MAX_COMPOSE_PIECES,
                });
            }
            let g = |t: f64| f.apply(&self.value_in_segment(i, t));
            let mut nodes = Vec::new();
            refine_chord(&g, f.shape(), t0, t1, g(t0), g(t1), eps, &mut nodes, 0)?;
            if nodes.len() > MAX_COMPOSE_PIECES {
                return Err(Error::ApproximationBudgetExceeded {
                    tolerance: eps,
                    max_pieces: MAX_COMPOSE_PIECES,
                });
            }
            for (t, v) in nodes {
                builder = builder.line_to(t, &[v]);
            }
            if is_last {
                let end = g(t1);
                return builder.finish(Tail::EndValue(vec![end]), self.horizon);
            }
        }
        builder.finish(Tail::Slope(vec![0.0]), self.horizon)
    }

    /// Path records in the `(time, left, right, slope)` literal layout.
    pub fn to_literal(&self) -> PathLiteral {
        PathLiteral {
            dim: self.dim,
            horizon: self.horizon,
            record: (0..self.times.len())
                .map(|i| PathRecord {
                    time: self.times[i],
                    left: self.left_at(i).to_vec(),
                    right: self.right_at(i).to_vec(),
                    slope: self.slope_at(i).to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_literal(lit: &PathLiteral) -> Result<Self> {
        let d = lit.dim;
        let mut times = Vec::new();
        let (mut right, mut left, mut slope) = (Vec::new(), Vec::new(), Vec::new());
        for (i, r) in lit.record.iter().enumerate() {
            if r.left.len() != d || r.right.len() != d || r.slope.len() != d {
                return Err(Error::InvalidPath(format!("record {i} has wrong dimension")));
            }
            if i > 0 {
                let dt = r.time - lit.record[i - 1].time;
                let prev = &lit.record[i - 1];
                for k in 0..d {
                    let predicted = prev.right[k] + prev.slope[k] * dt;
                    if (predicted - r.left[k]).abs() > 1e-9 * (1.0 + r.left[k].abs()) {
                        return Err(Error::InvalidPath(format!(
                            "record {i}: left value {} disagrees with preceding segment ({predicted})",
                            r.left[k]
                        )));
                    }
                }
            }
            times.push(r.time);
            right.extend(&r.right);
            left.extend(&r.left);
            slope.extend(&r.slope);
        }
        CadlagPath::from_parts(d, lit.horizon, times, right, left, slope)
    }
}

/// The pointwise liminf regularisation of a scalar càdlàg path:
/// `min(ω⁻(t), ω(t))` at breakpoints and `ω(t)` elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerEnvelope {
    path: CadlagPath,
}

impl LowerEnvelope {
    pub fn path(&self) -> &CadlagPath {
        &self.path
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let v = self.path.eval_scalar(t)?;
        if t > 0.0 {
            let l = self.path.left_limit(t)?[0];
            return Ok(v.min(l));
        }
        Ok(v)
    }

    pub fn running_inf(&self, t: f64) -> Result<f64> {
        self.path.running_inf(t)
    }
}

/// A continuous map `ℝ^d → ℝ` used by [`CadlagPath::compose_scalar`].
pub trait ScalarMap: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> f64;
    fn shape(&self) -> Curvature {
        Curvature::General
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Curvature {
    Affine,
    Concave,
    Convex,
    General,
}

/// Projection onto one coordinate.
#[derive(Clone, Copy, Debug)]
pub struct Coordinate {
    pub dim: usize,
    pub index: usize,
}

impl ScalarMap for Coordinate {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64]) -> f64 {
        x[self.index]
    }
    fn shape(&self) -> Curvature {
        Curvature::Affine
    }
}

#[allow(clippy::too_many_arguments)]
fn refine_chord(
    g: &dyn Fn(f64) -> f64,
    shape: Curvature,
    a: f64,
    b: f64,
    ga: f64,
    gb: f64,
    eps: f64,
    out: &mut Vec<(f64, f64)>,
    depth: usize,
) -> Result<()> {
    if shape == Curvature::Affine {
        return Ok(());
    }
    let m = 0.5 * (a + b);
    let gm = g(m);
    let bound = match shape {
        Curvature::Concave => concave_chord_bound(a, m, b, ga, gm, gb),
        Curvature::Convex => concave_chord_bound(a, m, b, -ga, -gm, -gb),
        _ => {
            let (q1, q3) = (0.5 * (a + m), 0.5 * (m + b));
            let chord = |t: f64| ga + (gb - ga) * (t - a) / (b - a);
            [(m, gm), (q1, g(q1)), (q3, g(q3))]
                .iter()
                .map(|&(t, v)| (v - chord(t)).abs())
                .fold(0.0, f64::max)
        }
    };
    if bound <= eps {
        return Ok(());
    }
    if depth > 60 || out.len() > MAX_COMPOSE_PIECES || !(a < m && m < b) {
        return Err(Error::ApproximationBudgetExceeded {
            tolerance: eps,
            max_pieces: MAX_COMPOSE_PIECES,
        });
    }
    refine_chord(g, shape, a, m, ga, gm, eps, out, depth + 1)?;
    out.push((m, gm));
    refine_chord(g, shape, m, b, gm, gb, eps, out, depth + 1)
}

/// Upper bound on `sup (g − chord)` over `[a, b]` for concave `g`, from the
/// secant slopes through the midpoint.
fn concave_chord_bound(a: f64, m: f64, b: f64, ga: f64, gm: f64, gb: f64) -> f64 {
    let s_am = (gm - ga) / (m - a);
    let s_mb = (gb - gm) / (b - m);
    let chord_m = ga + (gb - ga) * (m - a) / (b - a);
    let at_a = gb - s_mb * (b - a) - ga;
    let at_b = ga + s_am * (b - a) - gb;
    (gm - chord_m).max(at_a).max(at_b).max(0.0)
}

fn merge_times(a: &[f64], b: &[f64], horizon: f64) -> Vec<f64> {
    let mut out: Vec<f64> = a.iter().chain(b).copied().filter(|&t| t < horizon).collect();
    out.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    out.dedup();
    out
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// How the final segment of a built path ends.
#[derive(Clone, Debug, PartialEq)]
pub enum Tail {
    /// Affine continuation with the given slope.
    Slope(Vec<f64>),
    /// Finite horizon; the value approached at the horizon.
    EndValue(Vec<f64>),
}

/// Incremental construction of piecewise-affine paths.
///
/// ```
/// use levy_exit::cadlag::{PathBuilder, Tail};
/// // 1 − t − 𝟙(t ≥ 1) on [0, 2)
/// let w = PathBuilder::new(&[1.0])
///     .line_to(1.0, &[0.0])
///     .jump(&[-1.0])
///     .finish(Tail::Slope(vec![-1.0]), 2.0)
///     .unwrap();
/// assert_eq!(w.eval(1.0).unwrap(), vec![-1.0]);
/// assert_eq!(w.left_limit(1.0).unwrap(), vec![0.0]);
/// ```
#[derive(Clone, Debug)]
pub struct PathBuilder {
    dim: usize,
    times: Vec<f64>,
    right: Vec<f64>,
    left: Vec<f64>,
    slope: Vec<f64>,
    error: Option<String>,
}

impl PathBuilder {
    pub fn new(start: &[f64]) -> Self {
        PathBuilder {
            dim: start.len(),
            times: vec![0.0],
            right: start.to_vec(),
            left: start.to_vec(),
            slope: Vec::new(),
            error: None,
        }
    }

    pub fn scalar(start: f64) -> Self {
        Self::new(&[start])
    }

    fn last_right(&self) -> &[f64] {
        &self.right[self.right.len() - self.dim..]
    }

    /// Continuous affine segment ending at `(t, end)` with left limit `end`.
    pub fn line_to(mut self, t: f64, end: &[f64]) -> Self {
        let t0 = *self.times.last().expect("non-empty");
        if end.len() != self.dim {
            self.error
                .get_or_insert(format!("value at t = {t} has wrong dimension"));
            return self;
        }
        if !(t > t0) {
            self.error.get_or_insert(format!("breakpoint {t} does not follow {t0}"));
            return self;
        }
        let start = self.last_right().to_vec();
        self.slope
            .extend(start.iter().zip(end).map(|(a, b)| (b - a) / (t - t0)));
        self.times.push(t);
        self.right.extend_from_slice(end);
        self.left.extend_from_slice(end);
        self
    }

    /// Piecewise-constant hold up to `t`, then a jump to `value`.
    pub fn hold_then_jump(self, t: f64, value: &[f64]) -> Self {
        let current = self.last_right().to_vec();
        self.line_to(t, &current).jump(value)
    }

    /// Replaces the right value at the current breakpoint.
    pub fn jump(mut self, value: &[f64]) -> Self {
        if value.len() != self.dim {
            self.error.get_or_insert("jump value has wrong dimension".into());
            return self;
        }
        if self.times.len() == 1 {
            self.error.get_or_insert("cannot jump at t = 0".into());
            return self;
        }
        let n = self.right.len();
        self.right[n - self.dim..].copy_from_slice(value);
        self
    }

    pub fn finish(mut self, tail: Tail, horizon: f64) -> Result<CadlagPath> {
        if let Some(e) = self.error {
            return Err(Error::InvalidPath(e));
        }
        let t_last = *self.times.last().expect("non-empty");
        match tail {
            Tail::Slope(s) => {
                if s.len() != self.dim {
                    return Err(Error::dim(self.dim, s.len()));
                }
                self.slope.extend(s);
            }
            Tail::EndValue(end) => {
                if !horizon.is_finite() {
                    return Err(Error::InvalidPath("end value requires a finite horizon".into()));
                }
                if end.len() != self.dim {
                    return Err(Error::dim(self.dim, end.len()));
                }
                let start = self.last_right().to_vec();
                self.slope
                    .extend(start.iter().zip(&end).map(|(a, b)| (b - a) / (horizon - t_last)));
            }
        }
        CadlagPath::from_parts(self.dim, horizon, self.times, self.right, self.left, self.slope)
    }
}

/// Structured-text path literal: one `(time, left, right, slope)` record per
/// breakpoint, as stored in TOML path files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathLiteral {
    pub dim: usize,
    pub horizon: f64,
    pub record: Vec<PathRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub time: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub slope: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs_half() -> CadlagPath {
        // |t − 1/2| on [0, 2)
        PathBuilder::scalar(0.5)
            .line_to(0.5, &[0.0])
            .finish(Tail::Slope(vec![1.0]), 2.0)
            .unwrap()
    }

    fn c2_path() -> CadlagPath {
        PathBuilder::scalar(1.0)
            .line_to(1.0, &[0.0])
            .jump(&[-1.0])
            .finish(Tail::Slope(vec![-1.0]), f64::INFINITY)
            .unwrap()
    }

    fn c1_lower() -> CadlagPath {
        PathBuilder::scalar(1.0 / 3.0)
            .line_to(1.0 / 3.0, &[0.0])
            .jump(&[1.0 / 3.0])
            .finish(Tail::Slope(vec![-1.0]), f64::INFINITY)
            .unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(abs_half().eval(0.5).unwrap(), vec![0.0]);
        assert_eq!(c2_path().eval(1.0).unwrap(), vec![-1.0]);
        let c = CadlagPath::scalar_constant(3.25, f64::INFINITY).unwrap();
        for t in [0.0, 1.0, 1e6] {
            assert_eq!(c.eval_scalar(t).unwrap(), 3.25);
        }
    }

    #[test]
    fn eval_out_of_range() {
        let p = abs_half();
        assert!(matches!(p.eval(-0.1), Err(Error::TimeOutOfRange { .. })));
        assert!(matches!(p.eval(2.0), Err(Error::TimeOutOfRange { .. })));
        assert!(matches!(p.left_limit(0.0), Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn left_limit_examples() {
        assert_eq!(c2_path().left_limit(1.0).unwrap(), vec![0.0]);
        assert_eq!(c1_lower().left_limit(1.0 / 3.0).unwrap(), vec![0.0]);
        let p = abs_half();
        assert_eq!(p.left_limit(1.25).unwrap(), p.eval(1.25).unwrap());
    }

    #[test]
    fn lower_envelope_takes_min_at_jumps() {
        let down = c2_path().lower_envelope().unwrap();
        assert_eq!(down.eval(1.0).unwrap(), -1.0);
        let up = c1_lower().lower_envelope().unwrap();
        assert_eq!(up.eval(1.0 / 3.0).unwrap(), 0.0);
        let cont = abs_half().lower_envelope().unwrap();
        for t in [0.0, 0.25, 0.5, 1.5] {
            assert_eq!(cont.eval(t).unwrap(), abs_half().eval_scalar(t).unwrap());
        }
        let two_d = CadlagPath::constant(&[0.0, 1.0], 1.0).unwrap();
        assert!(matches!(two_d.lower_envelope(), Err(Error::Dimension { .. })));
    }

    #[test]
    fn running_inf_examples() {
        assert_eq!(abs_half().running_inf(1.0).unwrap(), 0.0);
        let dec = PathBuilder::scalar(1.0).finish(Tail::Slope(vec![-1.0]), 2.0).unwrap();
        assert_eq!(dec.running_inf(0.25).unwrap(), 0.75);
        let p = c1_lower();
        let exact = p.running_inf(0.5).unwrap();
        assert_eq!(exact, 0.0);
        // grid oracle approaches the infimum from the left of 1/3
        let grid_min = (0..=50_000)
            .map(|k| p.eval_scalar(0.5 * k as f64 / 50_000.0).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(grid_min >= exact && grid_min - exact < 1e-4);
    }

    #[test]
    fn sup_norm_examples() {
        assert_eq!(abs_half().sup_norm(2.0).unwrap(), 1.5);
        let zero = CadlagPath::scalar_constant(0.0, 5.0).unwrap();
        assert_eq!(zero.sup_norm(5.0).unwrap(), 0.0);
        let p = abs_half();
        let q = p.shifted(&[0.75]).unwrap();
        assert_eq!(q.difference(&p).unwrap().sup_norm(2.0).unwrap(), 0.75);
        assert!(p.sup_norm(2.5).is_err());
    }

    #[test]
    fn compose_identity_is_exact() {
        let p = c2_path().truncated(3.0).unwrap();
        let id = Coordinate { dim: 1, index: 0 };
        let q = p.compose_scalar(&id, DEFAULT_COMPOSE_EPS).unwrap();
        for t in [0.0, 0.3, 1.0, 2.5] {
            assert_eq!(q.eval(t).unwrap(), p.eval(t).unwrap());
        }
        assert_eq!(q.jump_indices().len(), 1);
    }

    #[test]
    fn literal_round_trip_and_validation() {
        let p = c2_path();
        let lit = p.to_literal();
        assert_eq!(CadlagPath::from_literal(&lit).unwrap(), p);
        let mut bad = lit.clone();
        bad.record[1].left = vec![0.5];
        assert!(matches!(CadlagPath::from_literal(&bad), Err(Error::InvalidPath(_))));
        let text = toml::to_string(&lit).unwrap();
        let back: PathLiteral = toml::from_str(&text).unwrap();
        assert_eq!(back, lit);
    }

    #[test]
    fn builder_rejects_non_increasing_times() {
        let r = PathBuilder::scalar(0.0)
            .line_to(1.0, &[1.0])
            .line_to(1.0, &[2.0])
            .finish(Tail::Slope(vec![0.0]), 3.0);
        assert!(r.is_err());
        assert!(PathBuilder::scalar(0.0)
            .jump(&[1.0])
            .finish(Tail::Slope(vec![0.0]), 1.0)
            .is_err());
    }
}
