//! Time changes and the Skorohod metrics `d°_t`, `d°_∞`.
//!
//! Exact minimisation over all time changes is out of reach, so the metric
//! is reported as a bracket: an upper bound realised by an explicit witness
//! and a lower bound from elementary necessary conditions.

use serde::Serialize;

use crate::cadlag::{norm, CadlagPath, PathBuilder, Tail};
use crate::error::{Error, Result};

/// Piecewise-linear increasing bijection of `[0, t]` (or `[0, ∞)`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeChange {
    s: Vec<f64>,
    l: Vec<f64>,
    /// Slope beyond the last anchor for time changes of `[0, ∞)`.
    tail: Option<f64>,
}

impl TimeChange {
    /// Time change of `[0, t]` through the anchors `(s_i, λ(s_i))`.
    pub fn new(s: Vec<f64>, l: Vec<f64>) -> Result<Self> {
        let tc = TimeChange { s, l, tail: None };
        tc.validate()?;
        let (a, b) = (tc.s[tc.s.len() - 1], tc.l[tc.l.len() - 1]);
        if a != b {
            return Err(Error::InvalidTimeChange(format!("λ({a}) = {b} must fix the horizon")));
        }
        Ok(tc)
    }

    /// Time change of `[0, ∞)`, affine with slope `tail` after the last anchor.
    pub fn unbounded(s: Vec<f64>, l: Vec<f64>, tail: f64) -> Result<Self> {
        if !(tail > 0.0 && tail.is_finite()) {
            return Err(Error::InvalidTimeChange(format!("tail slope {tail} must be positive")));
        }
        let tc = TimeChange { s, l, tail: Some(tail) };
        tc.validate()?;
        Ok(tc)
    }

    pub fn identity(horizon: f64) -> Self {
        if horizon.is_finite() {
            TimeChange {
                s: vec![0.0, horizon],
                l: vec![0.0, horizon],
                tail: None,
            }
        } else {
            TimeChange {
                s: vec![0.0],
                l: vec![0.0],
                tail: Some(1.0),
            }
        }
    }

    /// Fixes every integer; on `[k, k+1]` the slope is `e^{ε}` then `e^{−ε}`.
    /// Unbounded horizons are warped on `[0, 64]` and left alone afterwards.
    pub fn integer_warp(horizon: f64, eps: f64) -> Result<Self> {
        let end = if horizon.is_finite() { horizon } else { 64.0 };
        let h = 1.0 / (1.0 + eps.exp());
        let (mut s, mut l) = (vec![0.0], vec![0.0]);
        let mut k = 0.0;
        while k + 1.0 <= end {
            s.push(k + h);
            l.push(k + h * eps.exp());
            s.push(k + 1.0);
            l.push(k + 1.0);
            k += 1.0;
        }
        if horizon.is_finite() {
            if k < end {
                s.push(end);
                l.push(end);
            }
            TimeChange::new(s, l)
        } else {
            TimeChange::unbounded(s, l, 1.0)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.s.len() != self.l.len() || self.s.is_empty() {
            return Err(Error::InvalidTimeChange(
                "anchor lists must be non-empty and equal in length".into(),
            ));
        }
        if self.s[0] != 0.0 || self.l[0] != 0.0 {
            return Err(Error::InvalidTimeChange("λ(0) must be 0".into()));
        }
        if self.tail.is_none() && self.s.len() < 2 {
            return Err(Error::InvalidTimeChange(
                "a bounded time change needs two anchors".into(),
            ));
        }
        for w in [&self.s, &self.l] {
            if w.iter().any(|v| !v.is_finite()) || w.windows(2).any(|p| !(p[0] < p[1])) {
                return Err(Error::InvalidTimeChange("anchors must be strictly increasing".into()));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        match self.tail {
            Some(_) => f64::INFINITY,
            None => self.s[self.s.len() - 1],
        }
    }

    pub fn anchors(&self) -> (&[f64], &[f64]) {
        (&self.s, &self.l)
    }

    /// Segment slopes, including the tail.
    pub fn slopes(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .s
            .windows(2)
            .zip(self.l.windows(2))
            .map(|(s, l)| (l[1] - l[0]) / (s[1] - s[0]))
            .collect();
        out.extend(self.tail);
        out
    }

    pub fn eval(&self, u: f64) -> f64 {
        map_through(&self.s, &self.l, self.tail, u)
    }

    pub fn eval_inverse(&self, v: f64) -> f64 {
        map_through(&self.l, &self.s, self.tail.map(|k| 1.0 / k), v)
    }

    pub fn inverse(&self) -> TimeChange {
        TimeChange {
            s: self.l.clone(),
            l: self.s.clone(),
            tail: self.tail.map(|k| 1.0 / k),
        }
    }
}

fn map_through(from: &[f64], to: &[f64], tail: Option<f64>, u: f64) -> f64 {
    let j = from.partition_point(|&a| a <= u);
    if j > 0 && from[j - 1] == u {
        return to[j - 1];
    }
    if j == from.len() {
        let last = from.len() - 1;
        let k = tail.unwrap_or_else(|| {
            if last == 0 {
                1.0
            } else {
                (to[last] - to[last - 1]) / (from[last] - from[last - 1])
            }
        });
        return to[last] + k * (u - from[last]);
    }
    let (a0, a1, b0, b1) = (from[j - 1], from[j], to[j - 1], to[j]);
    b0 + (b1 - b0) * ((u - a0) / (a1 - a0))
}

/// `‖λ‖° = max |log slope|` over the linear pieces.
///
/// Pieces use `|log Δλ − log Δs|`, which is exactly the same for `λ^{-1}`.
pub fn timechange_seminorm(lambda: &TimeChange) -> f64 {
    let pieces = lambda
        .s
        .windows(2)
        .zip(lambda.l.windows(2))
        .map(|(s, l)| ((l[1] - l[0]).ln() - (s[1] - s[0]).ln()).abs());
    pieces.chain(lambda.tail.map(|k| k.ln().abs())).fold(0.0, f64::max)
}

/// `ω∘λ`, with breakpoints at `λ^{-1}(t_i)` and the anchors of `λ`.
pub fn apply_timechange(path: &CadlagPath, lambda: &TimeChange) -> Result<CadlagPath> {
    if lambda.horizon() != path.horizon() {
        return Err(Error::HorizonMismatch {
            path: path.horizon(),
            timechange: lambda.horizon(),
        });
    }
    let mut pairs: Vec<(f64, f64)> = lambda
        .s
        .iter()
        .zip(&lambda.l)
        .map(|(&s, &l)| (s, l))
        .filter(|&(s, _)| s < path.horizon())
        .collect();
    for &t in path.breakpoints() {
        pairs.push((lambda.eval_inverse(t), t));
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    pairs.dedup_by(|later, earlier| {
        if later.0 == earlier.0 {
            // keep the exact path breakpoint when both land on the same time
            if path.breakpoints().contains(&later.1) {
                earlier.1 = later.1;
            }
            true
        } else {
            false
        }
    });
    let d = path.dim();
    let n = pairs.len();
    let (mut times, mut right, mut left, mut slope) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n * d),
        Vec::with_capacity(n * d),
        Vec::with_capacity(n * d),
    );
    for (k, &(u, v)) in pairs.iter().enumerate() {
        times.push(u);
        let xr = path.eval(v)?;
        if k == 0 {
            left.extend(&xr);
        } else {
            left.extend(path.left_limit(v)?);
        }
        right.extend(&xr);
        let i = path.segment_index(v);
        let k_lambda = if k + 1 < n {
            (pairs[k + 1].1 - v) / (pairs[k + 1].0 - u)
        } else if let Some(tail) = lambda.tail {
            tail
        } else {
            (path.horizon() - v) / (lambda.horizon() - u)
        };
        slope.extend(path.slope_at(i).iter().map(|s| s * k_lambda));
    }
    CadlagPath::from_parts(d, path.horizon(), times, right, left, slope)
}

/// Limits for the matching search in [`metric_finite`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SearchBudget {
    /// Above `jumps(x)·jumps(y)` pairs, each jump is only matched with its
    /// nearest neighbours and the result is flagged.
    pub max_pairs: usize,
    /// Rounds of anchor insertion on the bottleneck piece.
    pub refine_rounds: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            max_pairs: 400,
            refine_rounds: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricResult {
    pub upper: f64,
    pub lower: f64,
    /// Realises `upper`: `max(‖λ‖°, ‖x − y∘λ‖) = upper`.
    pub witness: TimeChange,
    pub budget_exceeded: bool,
}

impl MetricResult {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

fn prepare(x: &CadlagPath, t: f64) -> Result<CadlagPath> {
    if !(t > 0.0 && t.is_finite()) || x.horizon() < t {
        return Err(Error::TimeOutOfRange {
            t,
            horizon: x.horizon(),
        });
    }
    if x.horizon() == t {
        Ok(x.clone())
    } else {
        x.truncated(t)
    }
}

/// Bracket for `d°_t(x, y) = inf_λ max(‖λ‖°, ‖x − y∘λ‖_{[0,t)})`.
pub fn metric_finite(x: &CadlagPath, y: &CadlagPath, t: f64, budget: &SearchBudget) -> Result<MetricResult> {
    if x.dim() != y.dim() {
        return Err(Error::dim(x.dim(), y.dim()));
    }
    let x = prepare(x, t)?;
    let y = prepare(y, t)?;
    let (u_xy, w_xy, flag_xy) = directed_upper(&x, &y, t, budget);
    let (u_yx, w_yx, flag_yx) = directed_upper(&y, &x, t, budget);
    let lower = directed_lower(&x, &y, t).max(directed_lower(&y, &x, t));
    let (upper, witness) = if u_xy <= u_yx {
        (u_xy, w_xy)
    } else {
        (u_yx, w_yx.inverse())
    };
    Ok(MetricResult {
        upper,
        lower: lower.min(upper),
        witness,
        budget_exceeded: flag_xy || flag_yx,
    })
}

fn jump_times(x: &CadlagPath) -> Vec<f64> {
    x.jump_indices().iter().map(|&i| x.breakpoints()[i]).collect()
}

/// `sup_{u ∈ [u0, u1)} |x(u) − y(v0 + (u − u0)k)|`, `k = (v1 − v0)/(u1 − u0)`.
fn piece_sup(x: &CadlagPath, y: &CadlagPath, u0: f64, u1: f64, v0: f64, v1: f64) -> f64 {
    let k = (v1 - v0) / (u1 - u0);
    let (xs, ys) = (x.breakpoints(), y.breakpoints());
    let mut i = xs.partition_point(|&a| a <= u0);
    let mut j = ys.partition_point(|&b| b <= v0);
    let gap = |ua: f64, va: f64, ub: f64, vb: f64| -> f64 {
        let (ix, iy) = (x.segment_index(ua), y.segment_index(va));
        let (mut s, mut e) = (0.0, 0.0);
        for c in 0..x.dim() {
            let p = x.component_in_segment(ix, ua, c) - y.component_in_segment(iy, va, c);
            let q = x.component_in_segment(ix, ub, c) - y.component_in_segment(iy, vb, c);
            s += p * p;
            e += q * q;
        }
        s.max(e).sqrt()
    };
    // events in lexicographic (u, v) order: breakpoints of x mapped forward,
    // breakpoints of y mapped back
    let mut prev = (u0, v0);
    let mut sup: f64 = 0.0;
    loop {
        let ex = (i < xs.len() && xs[i] < u1).then(|| (xs[i], (v0 + (xs[i] - u0) * k).clamp(v0, v1)));
        let ey = (j < ys.len() && ys[j] < v1).then(|| ((u0 + (ys[j] - v0) / k).clamp(u0, u1), ys[j]));
        let next = match (ex, ey) {
            (Some(a), Some(b)) => {
                if a.0 < b.0 || (a.0 == b.0 && a.1 <= b.1) {
                    i += 1;
                    a
                } else {
                    j += 1;
                    b
                }
            }
            (Some(a), None) => {
                i += 1;
                a
            }
            (None, Some(b)) => {
                j += 1;
                b
            }
            (None, None) => (u1, v1),
        };
        if prev.0 < next.0 && prev.1 < next.1 {
            sup = sup.max(gap(prev.0, prev.1, next.0, next.1));
        }
        if ex.is_none() && ey.is_none() {
            return sup;
        }
        prev = next;
    }
}

fn piece_cost(x: &CadlagPath, y: &CadlagPath, a: (f64, f64), b: (f64, f64)) -> f64 {
    let k = (b.1 - a.1) / (b.0 - a.0);
    k.ln().abs().max(piece_sup(x, y, a.0, b.0, a.1, b.1))
}

/// Bottleneck search over order-preserving matchings of jump times, then
/// anchor insertion on the worst piece.
fn directed_upper(x: &CadlagPath, y: &CadlagPath, t: f64, budget: &SearchBudget) -> (f64, TimeChange, bool) {
    let ja = jump_times(x);
    let jb = jump_times(y);
    let restricted = ja.len() * jb.len() > budget.max_pairs;
    let mut nodes: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    for &a in &ja {
        let mut cands: Vec<f64> = jb.clone();
        if restricted {
            cands.sort_by(|p, q| (p - a).abs().partial_cmp(&(q - a).abs()).expect("finite"));
            cands.truncate(3);
            cands.sort_by(|p, q| p.partial_cmp(q).expect("finite"));
        }
        nodes.extend(cands.into_iter().map(|b| (a, b)));
    }
    nodes.push((t, t));
    let n = nodes.len();
    let mut best = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    best[0] = 0.0;
    for j in 1..n {
        for i in 0..j {
            let (a, b) = (nodes[i], nodes[j]);
            if !(a.0 < b.0 && a.1 < b.1) || best[i] >= best[j] {
                continue;
            }
            let c = best[i].max(piece_cost(x, y, a, b));
            if c < best[j] {
                best[j] = c;
                pred[j] = i;
            }
        }
    }
    let mut chain = vec![n - 1];
    while let Some(&last) = chain.last() {
        if last == 0 {
            break;
        }
        chain.push(pred[last]);
    }
    chain.reverse();
    let mut anchors: Vec<(f64, f64)> = chain.iter().map(|&i| nodes[i]).collect();
    refine(x, y, &mut anchors, budget.refine_rounds);
    let cost = anchors
        .windows(2)
        .map(|w| piece_cost(x, y, w[0], w[1]))
        .fold(0.0, f64::max);
    let (s, l): (Vec<f64>, Vec<f64>) = anchors.into_iter().unzip();
    let witness = TimeChange::new(s, l).expect("anchors are strictly increasing");
    (cost, witness, restricted)
}

/// Splits the bottleneck piece at its midpoint and places the image of the
/// midpoint by golden-section search; keeps the split only if it helps.
fn refine(x: &CadlagPath, y: &CadlagPath, anchors: &mut Vec<(f64, f64)>, rounds: usize) {
    for _ in 0..rounds {
        let costs: Vec<f64> = anchors.windows(2).map(|w| piece_cost(x, y, w[0], w[1])).collect();
        let Some((worst, &c)) = costs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
        else {
            return;
        };
        if c == 0.0 {
            return;
        }
        let (a, b) = (anchors[worst], anchors[worst + 1]);
        let um = 0.5 * (a.0 + b.0);
        let split = |vm: f64| piece_cost(x, y, a, (um, vm)).max(piece_cost(x, y, (um, vm), b));
        let (mut lo, mut hi) = (a.1 + 1e-3 * (b.1 - a.1), b.1 - 1e-3 * (b.1 - a.1));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut p, mut q) = (hi - g * (hi - lo), lo + g * (hi - lo));
        let (mut fp, mut fq) = (split(p), split(q));
        for _ in 0..40 {
            if fp <= fq {
                hi = q;
                q = p;
                fq = fp;
                p = hi - g * (hi - lo);
                fp = split(p);
            } else {
                lo = p;
                p = q;
                fp = fq;
                q = lo + g * (hi - lo);
                fq = split(q);
            }
        }
        let (vm, fm) = if fp <= fq { (p, fp) } else { (q, fq) };
        if fm < c && a.1 < vm && vm < b.1 {
            anchors.insert(worst + 1, (um, vm));
        } else {
            return;
        }
    }
}

/// Range of each component over `[0, t)`, left limits included.
fn ranges(x: &CadlagPath) -> Vec<(f64, f64)> {
    let d = x.dim();
    let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
    for i in 0..x.num_segments() {
        let end = x.segment_end_value(i).expect("finite horizon");
        for k in 0..d {
            for v in [x.right_at(i)[k], end[k]] {
                out[k].0 = out[k].0.min(v);
                out[k].1 = out[k].1.max(v);
            }
        }
    }
    out
}

/// Necessary conditions on any λ: values at `0` and `t−`, ranges, and jumps
/// of `x` that must either be matched by a jump of `y` or left uncancelled.
fn directed_lower(x: &CadlagPath, y: &CadlagPath, t: f64) -> f64 {
    let diff = |a: &[f64], b: &[f64]| norm(&a.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>());
    let last_x = x.segment_end_value(x.num_segments() - 1).expect("finite horizon");
    let last_y = y.segment_end_value(y.num_segments() - 1).expect("finite horizon");
    let mut lb = diff(x.right_at(0), y.right_at(0)).max(diff(&last_x, &last_y));
    for ((xl, xh), (yl, yh)) in ranges(x).into_iter().zip(ranges(y)) {
        lb = lb.max((xl - yl).abs()).max((xh - yh).abs());
    }
    let y_jumps: Vec<(f64, Vec<f64>)> = y
        .jump_indices()
        .into_iter()
        .map(|j| {
            let dy: Vec<f64> = y.right_at(j).iter().zip(y.left_at(j)).map(|(r, l)| r - l).collect();
            (y.breakpoints()[j], dy)
        })
        .collect();
    for i in x.jump_indices() {
        let s0 = x.breakpoints()[i];
        let dx: Vec<f64> = x.right_at(i).iter().zip(x.left_at(i)).map(|(r, l)| r - l).collect();
        let mut bound = 0.5 * norm(&dx);
        for (u, dy) in &y_jumps {
            let chord = (u / s0).ln().abs().max(((t - u) / (t - s0)).ln().abs());
            bound = bound.min((0.5 * diff(&dx, dy)).max(chord));
        }
        lb = lb.max(bound);
    }
    lb
}

/// Bracket for `d°_∞ = Σ_m 2^{−m} (1 ∧ d°_m(x^m, y^m))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfiniteMetric {
    pub upper: f64,
    pub lower: f64,
    /// Truncation index `M` with `2^{−M} ≤ tol/2`.
    pub terms: usize,
    pub budget_exceeded: bool,
}

/// `d°_∞(x, y)` to within `tol` beyond the bracket of each windowed term.
pub fn metric_infinite(x: &CadlagPath, y: &CadlagPath, tol: f64) -> Result<InfiniteMetric> {
    metric_infinite_with(x, y, tol, &SearchBudget::default())
}

pub fn metric_infinite_with(x: &CadlagPath, y: &CadlagPath, tol: f64, budget: &SearchBudget) -> Result<InfiniteMetric> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Unsupported(format!("metric tolerance {tol} must lie in (0, 1)")));
    }
    if x.dim() != y.dim() {
        return Err(Error::dim(x.dim(), y.dim()));
    }
    let m_max = (2.0 / tol).log2().ceil().max(1.0) as usize;
    let horizon = x.horizon().min(y.horizon());
    if horizon < m_max as f64 {
        return Err(Error::TimeOutOfRange {
            t: m_max as f64,
            horizon,
        });
    }
    let eps = tol / 8.0;
    let (mut upper, mut lower) = (0.0, 0.0);
    let mut flag = false;
    for m in 1..=m_max {
        let mf = m as f64;
        let xm = windowed(x, mf, eps)?;
        let ym = windowed(y, mf, eps)?;
        let r = metric_finite(&xm, &ym, mf, budget)?;
        flag |= r.budget_exceeded;
        let w = 0.5f64.powi(m as i32);
        upper += w * (r.upper + 2.0 * eps).min(1.0);
        lower += w * (r.lower - 2.0 * eps).clamp(0.0, 1.0);
    }
    upper += 0.5f64.powi(m_max as i32);
    Ok(InfiniteMetric {
        upper,
        lower,
        terms: m_max,
        budget_exceeded: flag,
    })
}

/// Piecewise-affine `g_m·x` on `[0, m)` within `eps` in sup norm; on the
/// ramp `[m−1, m]` the product is quadratic with chord error `|b|h²/4`.
pub fn windowed(x: &CadlagPath, m: f64, eps: f64) -> Result<CadlagPath> {
    let g = |t: f64| if t <= m - 1.0 { 1.0 } else { (m - t).max(0.0) };
    let scale = |v: &[f64], t: f64| -> Vec<f64> { v.iter().map(|c| c * g(t)).collect() };
    let mut b = PathBuilder::new(&scale(x.right_at(0), 0.0));
    let ramp = m - 1.0;
    for i in 0..x.num_segments() {
        let t0 = x.breakpoints()[i];
        if t0 >= m {
            break;
        }
        if i > 0 {
            b = b.line_to(t0, &scale(x.left_at(i), t0));
            if x.has_jump_at(i) {
                b = b.jump(&scale(x.right_at(i), t0));
            }
        }
        let t1 = x.segment_end(i).min(m);
        let slope_max = x.slope_at(i).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut cuts = Vec::new();
        if t0 < ramp && ramp < t1 {
            cuts.push(ramp);
        }
        let start = t0.max(ramp);
        if start < t1 && slope_max > 0.0 {
            let h_max = (4.0 * eps / slope_max).sqrt();
            let n = ((t1 - start) / h_max).ceil().max(1.0) as usize;
            for k in 1..n {
                cuts.push(start + (t1 - start) * k as f64 / n as f64);
            }
        }
        for c in cuts {
            b = b.line_to(c, &scale(&x.value_in_segment(i, c), c));
        }
    }
    b.finish(Tail::EndValue(vec![0.0; x.dim()]), m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entrance::{entrance_time, Target};
    use crate::Domain;

    fn indicator(a: f64, t: f64) -> CadlagPath {
        PathBuilder::scalar(0.0)
            .hold_then_jump(a, &[1.0])
            .finish(Tail::Slope(vec![0.0]), t)
            .unwrap()
    }

    #[test]
    fn seminorm_examples() {
        assert_eq!(timechange_seminorm(&TimeChange::identity(1.0)), 0.0);
        let l = TimeChange::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(timechange_seminorm(&l), 2f64.ln());
        let l = TimeChange::new(vec![0.0, 0.4, 1.0], vec![0.0, 0.5, 1.0]).unwrap();
        assert!((timechange_seminorm(&l) - 1.25f64.ln()).abs() < 1e-15);
        assert!(TimeChange::new(vec![0.0, 0.5, 0.5, 1.0], vec![0.0, 0.2, 0.3, 1.0]).is_err());
        assert!(TimeChange::new(vec![0.0, 1.0], vec![0.0, 2.0]).is_err());
    }

    #[test]
    fn seminorm_matches_brute_force_chords() {
        let l = TimeChange::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.25, 1.0]).unwrap();
        let n = 400;
        let mut brute: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..=n {
                let (s, r) = (i as f64 / n as f64, j as f64 / n as f64);
                brute = brute.max(((l.eval(r) - l.eval(s)) / (r - s)).ln().abs());
            }
        }
        assert!((brute - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn apply_moves_jumps() {
        let x = indicator(0.5, 1.0);
        let l = TimeChange::new(vec![0.0, 0.4, 1.0], vec![0.0, 0.5, 1.0]).unwrap();
        let y = apply_timechange(&x, &l).unwrap();
        assert_eq!(jump_times(&y), vec![0.4]);
        assert_eq!(
            apply_timechange(&x, &TimeChange::identity(1.0))
                .unwrap()
                .eval(0.7)
                .unwrap(),
            vec![1.0]
        );
        assert!(matches!(
            apply_timechange(&x, &TimeChange::identity(2.0)),
            Err(Error::HorizonMismatch { .. })
        ));
    }

    #[test]
    fn commutation_with_entrance_time() {
        let dom = Domain::interval(-1.0, 1.0).unwrap();
        let w = PathBuilder::scalar(0.0)
            .line_to(0.75, &[0.5])
            .jump(&[-0.25])
            .finish(Tail::Slope(vec![-0.5]), 4.0)
            .unwrap();
        let l = TimeChange::new(vec![0.0, 1.0, 2.5, 4.0], vec![0.0, 0.5, 3.0, 4.0]).unwrap();
        let lhs = entrance_time(&apply_timechange(&w, &l).unwrap(), &dom, Target::OpenComplement).unwrap();
        let rhs = l.eval_inverse(entrance_time(&w, &dom, Target::OpenComplement).unwrap());
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn golden_case() {
        let r = metric_finite(
            &indicator(0.4, 1.0),
            &indicator(0.5, 1.0),
            1.0,
            &SearchBudget::default(),
        )
        .unwrap();
        let target = 1.25f64.ln();
        assert!((r.upper - target).abs() < 1e-12, "{r:?}");
        assert!((r.lower - target).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn metric_trivial_cases() {
        let x = indicator(0.3, 2.0);
        let r = metric_finite(&x, &x, 2.0, &SearchBudget::default()).unwrap();
        assert_eq!((r.upper, r.lower), (0.0, 0.0));
        let a = CadlagPath::scalar_constant(0.25, 1.0).unwrap();
        let b = CadlagPath::scalar_constant(1.0, 1.0).unwrap();
        let r = metric_finite(&a, &b, 1.0, &SearchBudget::default()).unwrap();
        assert_eq!((r.upper, r.lower), (0.75, 0.75));
    }

    #[test]
    fn infinite_metric_cases() {
        let x = PathBuilder::scalar(0.0)
            .line_to(1.5, &[1.0])
            .jump(&[0.0])
            .finish(Tail::Slope(vec![0.0]), f64::INFINITY)
            .unwrap();
        let r = metric_infinite(&x, &x, 1e-6).unwrap();
        assert!(r.upper <= 1e-6 && r.lower == 0.0);
        let a = CadlagPath::scalar_constant(0.0, f64::INFINITY).unwrap();
        let b = CadlagPath::scalar_constant(1.5, f64::INFINITY).unwrap();
        let r = metric_infinite(&a, &b, 1e-6).unwrap();
        assert!((r.upper - 1.0).abs() <= 1e-6 && (r.lower - 1.0).abs() <= 1e-6, "{r:?}");
        // identical on [0, 4], different afterwards
        let c = PathBuilder::scalar(0.0)
            .hold_then_jump(4.0, &[5.0])
            .finish(Tail::Slope(vec![0.0]), f64::INFINITY)
            .unwrap();
        let r = metric_infinite(&a, &c, 1e-6).unwrap();
        assert!(r.upper <= 2f64.powi(-4) + 1e-6, "{r:?}");
    }

    #[test]
    fn windowing_error_is_within_budget() {
        let x = PathBuilder::scalar(0.5)
            .finish(Tail::Slope(vec![3.0]), f64::INFINITY)
            .unwrap();
        let eps = 1e-6;
        let w = windowed(&x, 3.0, eps).unwrap();
        for k in 0..3000 {
            let t = k as f64 * 1e-3;
            let exact = x.eval_scalar(t).unwrap() * if t <= 2.0 { 1.0 } else { 3.0 - t };
            assert!(
                (w.eval_scalar(t).unwrap() - exact).abs() <= eps * (1.0 + 1e-9),
                "t = {t}"
            );
        }
    }
}
