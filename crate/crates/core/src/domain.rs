//! Bounded convex domains with exact membership and signed distance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cadlag::{Curvature, ScalarMap};
use crate::error::{Error, Result};

/// Config-level description of a domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum DomainSpec {
    Interval {
        a: f64,
        b: f64,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// Open polytope `{x : normals[j]·x < offsets[j]}`.
    Polytope {
        normals: Vec<Vec<f64>>,
        offsets: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    spec: DomainSpec,
    shape: Shape,
    dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    Interval { a: f64, b: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Polytope { normals: Vec<Vec<f64>>, offsets: Vec<f64> },
}

impl Domain {
    pub fn new(spec: DomainSpec) -> Result<Self> {
        let (shape, dim) = match &spec {
            DomainSpec::Interval { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(Error::InvalidDomain(format!(
                        "interval ({a}, {b}) is empty or unbounded"
                    )));
                }
                (Shape::Interval { a: *a, b: *b }, 1)
            }
            DomainSpec::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(Error::InvalidDomain(
                        "box bounds must have equal, positive length".into(),
                    ));
                }
                if lo
                    .iter()
                    .zip(hi)
                    .any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h))
                {
                    return Err(Error::InvalidDomain("box has an empty or unbounded side".into()));
                }
                (
                    Shape::Box {
                        lo: lo.clone(),
                        hi: hi.clone(),
                    },
                    lo.len(),
                )
            }
            DomainSpec::Ball { center, radius } => {
                if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidDomain("ball center must be a finite point".into()));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidDomain(format!("ball radius {radius} must be positive")));
                }
                (
                    Shape::Ball {
                        center: center.clone(),
                        radius: *radius,
                    },
                    center.len(),
                )
            }
            DomainSpec::Polytope { normals, offsets } => {
                let (normals, offsets) = normalize_polytope(normals, offsets)?;
                let d = normals[0].len();
                (Shape::Polytope { normals, offsets }, d)
            }
        };
        Ok(Domain { spec, shape, dim })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(DomainSpec::Interval { a, b })
    }

    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(DomainSpec::Box {
            lo: vec![-half_width; dim],
            hi: vec![half_width; dim],
        })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::new(DomainSpec::Ball { center, radius })
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::dim(self.dim, x.len()));
        }
        Ok(())
    }

    /// `x ∈ O`.
    pub fn contains_open(&self, x: &[f64]) -> Result<bool> {
        self.check(x)?;
        Ok(self.min_constraint(x) > 0.0)
    }

    /// `x ∈ Ō`.
    pub fn contains_closed(&self, x: &[f64]) -> Result<bool> {
        self.check(x)?;
        Ok(self.min_constraint(x) >= 0.0)
    }

    pub fn on_boundary(&self, x: &[f64]) -> Result<bool> {
        Ok(self.contains_closed(x)? && !self.contains_open(x)?)
    }

    /// Smallest constraint value; positive on `O`, non-negative on `Ō`.
    pub(crate) fn min_constraint(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => (x[0] - a).min(b - x[0]),
            Shape::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .zip(x)
                .fold(f64::INFINITY, |m, ((l, h), v)| m.min(v - l).min(h - v)),
            Shape::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum();
                radius * radius - r2
            }
            Shape::Polytope { normals, offsets } => normals
                .iter()
                .zip(offsets)
                .fold(f64::INFINITY, |m, (n, b)| m.min(b - dot(n, x))),
        }
    }

    /// Signed distance ρ: `dist(x, ∂O)` inside, `−dist(x, ∂O)` outside.
    pub fn signed_distance(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(match &self.shape {
            Shape::Interval { a, b } => (x[0] - a).min(b - x[0]),
            Shape::Box { lo, hi } => {
                let inner = lo
                    .iter()
                    .zip(hi)
                    .zip(x)
                    .map(|((l, h), v)| (v - l).min(h - v))
                    .fold(f64::INFINITY, f64::min);
                if inner >= 0.0 {
                    inner
                } else {
                    let excess: f64 = lo
                        .iter()
                        .zip(hi)
                        .zip(x)
                        .map(|((l, h), v)| {
                            let e = (l - v).max(v - h).max(0.0);
                            e * e
                        })
                        .sum();
                    -excess.sqrt()
                }
            }
            Shape::Ball { center, radius } => {
                let r: f64 = x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum::<f64>().sqrt();
                radius - r
            }
            Shape::Polytope { normals, offsets } => {
                let slack: Vec<f64> = normals.iter().zip(offsets).map(|(n, b)| b - dot(n, x)).collect();
                let min_slack = slack.iter().copied().fold(f64::INFINITY, f64::min);
                if min_slack >= 0.0 {
                    min_slack
                } else {
                    -polytope_exterior_distance(normals, offsets, x)
                }
            }
        })
    }

    /// Snaps a point that lies on `∂O` up to rounding onto the nearest face
    /// when that face is axis-aligned; other shapes are left untouched.
    pub(crate) fn snap_to_boundary(&self, x: &mut [f64]) {
        match &self.shape {
            Shape::Interval { a, b } => snap_axis(&mut x[..1], &[*a], &[*b]),
            Shape::Box { lo, hi } => snap_axis(x, lo, hi),
            _ => {}
        }
    }

    /// Per-constraint affine data `(a, c)` with constraint `c − a·x > 0`,
    /// or `None` for the ball.
    pub(crate) fn affine_constraints(&self) -> Option<Vec<(Vec<f64>, f64)>> {
        let d = self.dim;
        let axis = |k: usize, s: f64| {
            let mut a = vec![0.0; d];
            a[k] = s;
            a
        };
        match &self.shape {
            Shape::Interval { a, b } => Some(vec![(vec![-1.0], -a), (vec![1.0], *b)]),
            Shape::Box { lo, hi } => Some(
                (0..d)
                    .flat_map(|k| [(axis(k, -1.0), -lo[k]), (axis(k, 1.0), hi[k])])
                    .collect(),
            ),
            Shape::Ball { .. } => None,
            Shape::Polytope { normals, offsets } => {
                Some(normals.iter().cloned().zip(offsets.iter().copied()).collect())
            }
        }
    }

    pub(crate) fn ball_data(&self) -> Option<(&[f64], f64)> {
        match &self.shape {
            Shape::Ball { center, radius } => Some((center, *radius)),
            _ => None,
        }
    }

    /// A point of `O`, used as a default start.
    pub fn interior_point(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Interval { a, b } => vec![0.5 * (a + b)],
            Shape::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
            Shape::Ball { center, .. } => center.clone(),
            Shape::Polytope { normals, offsets } => {
                let verts = vertices(normals, offsets);
                centroid(&verts, self.dim)
            }
        }
    }
}

impl ScalarMap for Domain {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64]) -> f64 {
        self.signed_distance(x).expect("dimension checked by compose")
    }
    fn shape(&self) -> Curvature {
        // signed distance to a convex set is concave
        Curvature::Concave
    }
}

fn snap_axis(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    let mut best: Option<(usize, f64, f64)> = None;
    for k in 0..x.len() {
        for bound in [lo[k], hi[k]] {
            let gap = (x[k] - bound).abs();
            if best.is_none_or(|(_, g, _)| gap < g) {
                best = Some((k, gap, bound));
            }
        }
    }
    if let Some((k, gap, bound)) = best {
        if gap <= 1e-9 * (1.0 + bound.abs()) {
            x[k] = bound;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize_polytope(normals: &[Vec<f64>], offsets: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if normals.is_empty() || normals.len() != offsets.len() {
        return Err(Error::InvalidDomain(
            "polytope needs matching normals and offsets".into(),
        ));
    }
    let d = normals[0].len();
    if d == 0 || normals.iter().any(|n| n.len() != d) {
        return Err(Error::InvalidDomain(
            "polytope normals must share a positive dimension".into(),
        ));
    }
    let mut ns = Vec::with_capacity(normals.len());
    let mut bs = Vec::with_capacity(normals.len());
    for (n, &b) in normals.iter().zip(offsets) {
        let len = dot(n, n).sqrt();
        if !(len > 0.0 && len.is_finite() && b.is_finite()) {
            return Err(Error::InvalidDomain("degenerate half-space".into()));
        }
        ns.push(n.iter().map(|v| v / len).collect::<Vec<_>>());
        bs.push(b / len);
    }
    // bounded iff the recession cone {v : Av ≤ 0} is trivial
    let mut cone_n = ns.clone();
    let mut cone_b = vec![0.0; ns.len()];
    for k in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[k] = s;
            cone_n.push(e);
            cone_b.push(1.0);
        }
    }
    if vertices(&cone_n, &cone_b)
        .iter()
        .any(|v| v.iter().any(|x| x.abs() > 1e-9))
    {
        return Err(Error::InvalidDomain("polytope is unbounded".into()));
    }
    let verts = vertices(&ns, &bs);
    if verts.len() < d + 1 {
        return Err(Error::InvalidDomain("polytope is empty".into()));
    }
    let c = centroid(&verts, d);
    let slack = ns
        .iter()
        .zip(&bs)
        .map(|(n, b)| b - dot(n, &c))
        .fold(f64::INFINITY, f64::min);
    if !(slack > 1e-12) {
        return Err(Error::InvalidDomain("polytope has empty interior".into()));
    }
    Ok((ns, bs))
}

fn centroid(verts: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut c = vec![0.0; d];
    for v in verts {
        for k in 0..d {
            c[k] += v[k];
        }
    }
    c.iter_mut().for_each(|x| *x /= verts.len() as f64);
    c
}

/// All subsets of `0..n` of size `k`, in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Vertices of `{x : Ax ≤ b}` by enumeration of `d`-subsets of active faces.
fn vertices(normals: &[Vec<f64>], offsets: &[f64]) -> Vec<Vec<f64>> {
    let d = normals[0].len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for s in subsets(normals.len(), d) {
        let a = DMatrix::from_fn(d, d, |i, j| normals[s[i]][j]);
        let b = DVector::from_iterator(d, s.iter().map(|&i| offsets[i]));
        let Some(x) = a.lu().solve(&b) else { continue };
        let x: Vec<f64> = x.iter().copied().collect();
        let feasible = normals
            .iter()
            .zip(offsets)
            .all(|(n, b)| dot(n, &x) <= b + 1e-9 * (1.0 + b.abs()));
        if feasible && !out.iter().any(|v| v.iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-12)) {
            out.push(x);
        }
    }
    out
}

/// Euclidean distance from an exterior point to the closed polytope, as the
/// minimum over feasible projections onto faces of every dimension.
fn polytope_exterior_distance(normals: &[Vec<f64>], offsets: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    let mut best = f64::INFINITY;
    for k in 1..=d.min(normals.len()) {
        for s in subsets(normals.len(), k) {
            let a = DMatrix::from_fn(k, d, |i, j| normals[s[i]][j]);
            let xv = DVector::from_column_slice(x);
            let resid = DVector::from_iterator(k, s.iter().map(|&i| dot(&normals[i], x) - offsets[i]));
            let gram = &a * a.transpose();
            let Some(mu) = gram.lu().solve(&resid) else { continue };
            let y = &xv - a.transpose() * mu;
            let y: Vec<f64> = y.iter().copied().collect();
            let feasible = normals
                .iter()
                .zip(offsets)
                .all(|(n, b)| dot(n, &y) <= b + 1e-12 * (1.0 + b.abs()));
            if feasible {
                let dist = x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
                best = best.min(dist);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Domain {
        Domain::cube(2, 1.0).unwrap()
    }

    fn diamond() -> Domain {
        // |x| + |y| < 1
        Domain::new(DomainSpec::Polytope {
            normals: vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]],
            offsets: vec![1.0; 4],
        })
        .unwrap()
    }

    #[test]
    fn membership_examples() {
        let unit = Domain::interval(0.0, 1.0).unwrap();
        assert!(unit.contains_open(&[0.5]).unwrap());
        assert!(!unit.contains_open(&[1.0]).unwrap());
        assert!(unit.contains_closed(&[1.0]).unwrap());
        assert!(!square().contains_open(&[1.0, 0.0]).unwrap());
        assert!(matches!(square().contains_open(&[0.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn signed_distance_examples() {
        assert_eq!(square().signed_distance(&[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(square().signed_distance(&[2.0, 0.0]).unwrap(), -1.0);
        assert_eq!(
            Domain::interval(0.0, 1.0).unwrap().signed_distance(&[0.0]).unwrap(),
            0.0
        );
        let corner = square().signed_distance(&[2.0, 2.0]).unwrap();
        assert!((corner + 2f64.sqrt()).abs() < 1e-15);
        let ball = Domain::ball(vec![0.0, 0.0], 2.0).unwrap();
        assert_eq!(ball.signed_distance(&[0.0, 3.0]).unwrap(), -1.0);
    }

    #[test]
    fn polytope_distance_matches_geometry() {
        let p = diamond();
        let h = 0.5f64.sqrt();
        assert!((p.signed_distance(&[0.0, 0.0]).unwrap() - h).abs() < 1e-15);
        // nearest point is the vertex (1, 0)
        assert!((p.signed_distance(&[2.0, 0.0]).unwrap() + 1.0).abs() < 1e-12);
        // nearest point on the face x + y = 1
        assert!((p.signed_distance(&[1.0, 1.0]).unwrap() + h).abs() < 1e-12);
        // a box given as a polytope agrees with the box formula
        let as_poly = Domain::new(DomainSpec::Polytope {
            normals: vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            offsets: vec![1.0; 4],
        })
        .unwrap();
        for x in [[2.0, 3.0], [0.3, -0.2], [-1.5, 0.5], [0.0, 1.0]] {
            let a = as_poly.signed_distance(&x).unwrap();
            let b = square().signed_distance(&x).unwrap();
            assert!((a - b).abs() < 1e-12, "{x:?}: {a} vs {b}");
        }
    }

    #[test]
    fn invalid_domains_rejected() {
        assert!(Domain::interval(1.0, 1.0).is_err());
        assert!(Domain::ball(vec![0.0], -1.0).is_err());
        let half_plane = Domain::new(DomainSpec::Polytope {
            normals: vec![vec![1.0, 0.0]],
            offsets: vec![1.0],
        });
        assert!(matches!(half_plane, Err(Error::InvalidDomain(_))));
        let flat = Domain::new(DomainSpec::Polytope {
            normals: vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            offsets: vec![0.0, 0.0, 1.0, 1.0],
        });
        assert!(matches!(flat, Err(Error::InvalidDomain(_))));
    }

    #[test]
    fn spec_round_trips_through_toml() {
        #[derive(Serialize, Deserialize)]
        struct W {
            domain: DomainSpec,
        }
        let text = "[domain]\ntype = \"box\"\nlo = [-1.0, -1.0]\nhi = [1.0, 1.0]\n";
        let w: W = toml::from_str(text).unwrap();
        assert_eq!(Domain::new(w.domain).unwrap(), square());
    }
}
