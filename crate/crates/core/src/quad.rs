//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.
//!
//! The error estimate is the raw Gauss–Kronrod difference `|K₁₅ − G₇|`,
//! which overestimates the Kronrod error for smooth integrands.

#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

impl std::ops::Add for QuadResult {
    type Output = QuadResult;
    fn add(self, o: QuadResult) -> QuadResult {
        QuadResult {
            value: self.value + o.value,
            error: self.error + o.error,
            evals: self.evals + o.evals,
        }
    }
}

impl QuadResult {
    pub const ZERO: QuadResult = QuadResult {
        value: 0.0,
        error: 0.0,
        evals: 0,
    };

    pub fn scaled(self, c: f64) -> QuadResult {
        QuadResult {
            value: self.value * c,
            error: self.error * c.abs(),
            evals: self.evals,
        }
    }
}

/// Tolerances for [`integrate`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-12,
            rel: 1e-10,
            max_intervals: 2000,
        }
    }
}

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error).then(o.a.total_cmp(&self.a))
    }
}

/// `∫_a^b f` by global adaptive bisection of the worst interval.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: &Tolerance) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult::ZERO);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::QuadratureFailure {
            reason: "infinite interval".into(),
            partial: f64::NAN,
            error: f64::INFINITY,
        });
    }
    let (value, error) = gk15(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, error });
    let mut evals = 15;
    loop {
        let (total, err) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
        if !total.is_finite() {
            return Err(Error::QuadratureFailure {
                reason: "non-finite integrand".into(),
                partial: total,
                error: err,
            });
        }
        if err <= tol.abs.max(tol.rel * total.abs()) {
            return Ok(QuadResult {
                value: ordered_sum(&heap),
                error: err,
                evals,
            });
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::QuadratureFailure {
                reason: format!("no convergence within {} intervals", tol.max_intervals),
                partial: total,
                error: err,
            });
        }
        let worst = heap.pop().expect("non-empty");
        let m = 0.5 * (worst.a + worst.b);
        if !(worst.a < m && m < worst.b) {
            return Err(Error::QuadratureFailure {
                reason: "interval below resolution".into(),
                partial: total,
                error: err,
            });
        }
        for (lo, hi) in [(worst.a, m), (m, worst.b)] {
            let (value, error) = gk15(f, lo, hi);
            heap.push(Piece {
                a: lo,
                b: hi,
                value,
                error,
            });
        }
        evals += 30;
    }
}

/// Sum in left-to-right order of the intervals, independent of heap layout.
fn ordered_sum(heap: &BinaryHeap<Piece>) -> f64 {
    let mut v: Vec<(f64, f64)> = heap.iter().map(|p| (p.a, p.value)).collect();
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    v.iter().map(|p| p.1).sum()
}

/// Periodic trapezoid rule on `[0, 2π)` with `n` nodes.
pub fn periodic_trapezoid(f: &dyn Fn(f64) -> f64, n: usize) -> f64 {
    let h = std::f64::consts::TAU / n as f64;
    (0..n).map(|k| f(k as f64 * h)).sum::<f64>() * h
}
