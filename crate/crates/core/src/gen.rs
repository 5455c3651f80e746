//! Random path families for property suites and experiments.
//!
//! Scalar families live on dyadic grids (values on `2^{-8}ℤ`, breakpoints on
//! `2^{-6}ℤ`) so sums with dyadic perturbations `2^{-n}p` are exact in
//! floating point for `n ≤ 44`.

use rand::Rng;

use crate::cadlag::{CadlagPath, PathBuilder, Tail};
use crate::domain::Domain;
use crate::error::Result;

pub const VALUE_GRID: f64 = 1.0 / 256.0;
pub const TIME_GRID: f64 = 1.0 / 64.0;

fn dyadic_value<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let a = (lo / VALUE_GRID).ceil() as i64;
    let b = (hi / VALUE_GRID).floor() as i64;
    rng.random_range(a..=b) as f64 * VALUE_GRID
}

/// Random scalar piecewise-affine path on `[0, horizon)` with values in
/// `[lo, hi]`, up to `max_pieces` segments and jumps with probability
/// `jump_prob` at each interior breakpoint.
pub fn dyadic_scalar<R: Rng + ?Sized>(
    rng: &mut R,
    horizon: f64,
    lo: f64,
    hi: f64,
    max_pieces: usize,
    jump_prob: f64,
) -> Result<CadlagPath> {
    let slots = (horizon / TIME_GRID) as i64;
    let pieces = rng.random_range(1..=max_pieces.max(1)).min(slots as usize);
    let mut cuts: Vec<i64> = (0..pieces - 1).map(|_| rng.random_range(1..slots)).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut b = PathBuilder::scalar(dyadic_value(rng, lo, hi));
    for c in cuts {
        b = b.line_to(c as f64 * TIME_GRID, &[dyadic_value(rng, lo, hi)]);
        if rng.random_bool(jump_prob) {
            b = b.jump(&[dyadic_value(rng, lo, hi)]);
        }
    }
    b.finish(Tail::EndValue(vec![dyadic_value(rng, lo, hi)]), horizon)
}

/// A path whose exit from the cube `(−1,1)^d` is strict: it stays at
/// signed distance `≥ 1/4` until it either jumps to distance `≤ −1/4` or
/// crosses a face with normal speed in `[1/2, 4]` well away from the
/// corners, and is constant afterwards. Such paths lie in Γ̂_O.
pub fn strict_crossing<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Result<CadlagPath> {
    let inner = |rng: &mut R| -> Vec<f64> { (0..dim).map(|_| dyadic_value(rng, -0.75, 0.75)).collect() };
    let mut x = inner(rng);
    let mut t = 0.0;
    let mut b = PathBuilder::new(&x);
    for _ in 0..rng.random_range(1..=4) {
        let y = inner(rng);
        if rng.random_bool(0.4) {
            // hold, then jump inside
            t += rng.random_range(8..=48) as f64 * TIME_GRID;
            b = b.hold_then_jump(t, &y);
        } else {
            let dist = crate::cadlag::norm(&y.iter().zip(&x).map(|(a, c)| a - c).collect::<Vec<_>>());
            let min_steps = ((dist / 4.0) / TIME_GRID).ceil().max(8.0) as i64;
            t += rng.random_range(min_steps..=min_steps + 48) as f64 * TIME_GRID;
            b = b.line_to(t, &y);
        }
        x = y;
    }
    let axis = rng.random_range(0..dim);
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut a = x.clone();
    a[axis] = 0.75 * side;
    for (k, v) in a.iter_mut().enumerate() {
        if k != axis {
            *v = v.clamp(-0.5, 0.5);
        }
    }
    // move to the launch point, staying inside
    let dist = crate::cadlag::norm(&a.iter().zip(&x).map(|(p, q)| p - q).collect::<Vec<_>>());
    let steps = ((dist / 4.0) / TIME_GRID).ceil().max(8.0) as i64;
    t += steps as f64 * TIME_GRID;
    b = b.line_to(t, &a);
    let mut out = a.clone();
    out[axis] = 1.25 * side;
    if rng.random_bool(0.5) {
        t += rng.random_range(8..=48) as f64 * TIME_GRID;
        for (k, v) in out.iter_mut().enumerate() {
            if k != axis {
                *v = dyadic_value(rng, -0.9, 0.9);
            }
        }
        b = b.hold_then_jump(t, &out);
    } else {
        // normal displacement 1/2 over 1/8 .. 1 time units
        let steps = rng.random_range(8..=64);
        for (k, v) in out.iter_mut().enumerate() {
            if k != axis {
                *v += dyadic_value(rng, -0.125, 0.125);
            }
        }
        t += steps as f64 * TIME_GRID;
        b = b.line_to(t, &out);
    }
    b.finish(Tail::Slope(vec![0.0; dim]), f64::INFINITY)
}

/// Domain matching [`strict_crossing`].
pub fn crossing_domain(dim: usize) -> Result<Domain> {
    Domain::cube(dim, 1.0)
}

/// `|t − ½| + shift` on `[0, ∞)`: touches the boundary of `(0,1)` at
/// `t = ½` without leaving the closure when `shift = 0`.
pub fn vee_path(shift: f64) -> Result<CadlagPath> {
    PathBuilder::scalar(0.5 + shift)
        .line_to(0.5, &[shift])
        .finish(Tail::Slope(vec![1.0]), f64::INFINITY)
}

/// `⅓ − t + shift` on `[0, ⅓)`, then jumps back up by `⅓` and decreases
/// with slope `−1`: the left limit touches `0` at `t = ⅓` when `shift = 0`.
pub fn touch_path(shift: f64) -> Result<CadlagPath> {
    let third = 1.0 / 3.0;
    PathBuilder::scalar(third + shift)
        .line_to(third, &[shift])
        .jump(&[third + shift])
        .finish(Tail::Slope(vec![-1.0]), f64::INFINITY)
}

/// `0.9(1 − t) + shift` on `[0, 1)`, then a jump of `−1` and slope `−0.9`:
/// the left limit at the exit time sits on the boundary of `(0,1)`.
pub fn jump_exit_path(shift: f64) -> Result<CadlagPath> {
    PathBuilder::scalar(0.9 + shift)
        .line_to(1.0, &[shift])
        .jump(&[shift - 1.0])
        .finish(Tail::Slope(vec![-0.9]), f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entrance::classify_gamma;
    use crate::rng::stream;

    #[test]
    fn dyadic_values_stay_on_grid() {
        let mut rng = stream(1, 0);
        for _ in 0..50 {
            let p = dyadic_scalar(&mut rng, 4.0, -1.0, 1.0, 12, 0.3).unwrap();
            for i in 0..p.num_segments() {
                assert!(p.breakpoints()[i] / TIME_GRID == (p.breakpoints()[i] / TIME_GRID).round());
                let v = p.right_at(i)[0];
                assert!((-1.0..=1.0).contains(&v) && (v / VALUE_GRID).fract() == 0.0);
            }
        }
    }

    #[test]
    fn strict_crossings_are_in_gamma_hat() {
        let mut rng = stream(2, 0);
        for dim in [1, 2, 3] {
            let dom = crossing_domain(dim).unwrap();
            for _ in 0..100 {
                let p = strict_crossing(&mut rng, dim).unwrap();
                let g = classify_gamma(&p, &dom).unwrap();
                assert!(g.in_gamma_hat, "{:?}", g.violations);
            }
        }
    }
}
