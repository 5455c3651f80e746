//! Monte Carlo estimation of `V_m(x) = E[∫_0^τ e^{−s} ℓ(X_s) ds + e^{−τ} g(X_τ)]`.
//!
//! Path `i` at every start point uses stream `i` of the seed, so scans are
//! coupled by common random numbers. Censored paths keep the running
//! integral and drop the terminal term.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::sde::{simulate, ExitSample, SimSpec};

/// Running cost / boundary data from a small named registry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum CostSpec {
    Constant {
        value: f64,
    },
    /// `height·exp(−|x − center|²/(2 width²))`.
    GaussianBump {
        center: Vec<f64>,
        width: f64,
        height: f64,
    },
    /// `scale·x[index] + offset`.
    Coordinate {
        index: usize,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostFn {
    spec: CostSpec,
    dim: usize,
}

impl CostFn {
    pub fn new(spec: CostSpec, dim: usize) -> Result<Self> {
        let ok = match &spec {
            CostSpec::Constant { value } => value.is_finite(),
            CostSpec::GaussianBump { center, width, height } => {
                if center.len() != dim {
                    return Err(Error::dim(dim, center.len()));
                }
                *width > 0.0 && height.is_finite() && center.iter().all(|c| c.is_finite())
            }
            CostSpec::Coordinate { index, scale, offset } => *index < dim && scale.is_finite() && offset.is_finite(),
        };
        if !ok {
            return Err(Error::Config(format!("invalid cost function {spec:?}")));
        }
        Ok(CostFn { spec, dim })
    }

    pub fn constant(value: f64, dim: usize) -> Self {
        CostFn {
            spec: CostSpec::Constant { value },
            dim,
        }
    }

    pub fn spec(&self) -> &CostSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.spec, CostSpec::Constant { value } if value == 0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.spec {
            CostSpec::Constant { value } => *value,
            CostSpec::GaussianBump { center, width, height } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                height * (-0.5 * r2 / (width * width)).exp()
            }
            CostSpec::Coordinate { index, scale, offset } => scale * x[*index] + offset,
        }
    }

    /// `sup |f|` over the whole space, when finite.
    pub fn sup_norm(&self) -> Option<f64> {
        match &self.spec {
            CostSpec::Constant { value } => Some(value.abs()),
            CostSpec::GaussianBump { height, .. } => Some(height.abs()),
            CostSpec::Coordinate { scale, offset, .. } => (*scale == 0.0).then_some(offset.abs()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub censored_fraction: f64,
}

impl ValueEstimate {
    /// Warning text when more than 1e-6 of the paths hit the horizon.
    pub fn censoring_warning(&self) -> Option<String> {
        (self.censored_fraction > 1e-6).then(|| {
            format!(
                "{:.3e} of {} paths were censored at the horizon; terminal payoffs dropped",
                self.censored_fraction, self.n
            )
        })
    }

    /// From per-path values in path order.
    pub fn from_values(values: &[f64], censored: usize) -> Self {
        let n = values.len();
        if n == 0 {
            return ValueEstimate {
                mean: f64::NAN,
                std_error: f64::NAN,
                n,
                censored_fraction: 0.0,
            };
        }
        let mean = pairwise_sum(values) / n as f64;
        let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = if n > 1 {
            pairwise_sum(&dev) / (n - 1) as f64
        } else {
            0.0
        };
        ValueEstimate {
            mean,
            std_error: (var / n as f64).sqrt(),
            n,
            censored_fraction: censored as f64 / n as f64,
        }
    }
}

/// Pairwise (cascade) summation in index order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// `∫_0^τ e^{−s} ℓ ds + e^{−τ} g(X_τ)` for a sample whose first cost is `ℓ`.
pub fn path_functional(sample: &ExitSample, g: &CostFn) -> f64 {
    let running = sample.discounted_costs.first().copied().unwrap_or(0.0);
    let d = sample.terminal_discount();
    if d == 0.0 {
        running
    } else {
        running + d * g.eval(&sample.exit_point)
    }
}

/// Per-path functional values and censoring flags at `x`.
pub fn path_values(x: &[f64], spec: &SimSpec, l: &CostFn, g: &CostFn, n: usize, seed: u64) -> Result<Vec<(f64, bool)>> {
    let lf = |y: &[f64]| l.eval(y);
    let costs: Vec<crate::sde::CostRef<'_>> = if l.is_zero() { vec![] } else { vec![&lf] };
    if spec.coeffs.is_deterministic() && !spec.levy.has_jumps() {
        // no noise: every replicate is the same trajectory
        let s = simulate(x, spec, &costs, &mut stream(seed, 0))?;
        return Ok(vec![(path_functional(&s, g), s.censored); n]);
    }
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let s = simulate(x, spec, &costs, &mut stream(seed, i))?;
            Ok((path_functional(&s, g), s.censored))
        })
        .collect()
}

pub fn estimate(x: &[f64], spec: &SimSpec, l: &CostFn, g: &CostFn, n: usize, seed: u64) -> Result<ValueEstimate> {
    if n == 0 {
        return Err(Error::Config("N must be at least 1".into()));
    }
    let pv = path_values(x, spec, l, g, n, seed)?;
    let values: Vec<f64> = pv.iter().map(|p| p.0).collect();
    let censored = pv.iter().filter(|p| p.1).count();
    Ok(ValueEstimate::from_values(&values, censored))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    /// Position `s ∈ [0, 1]` along the segment.
    pub s: f64,
    pub x: Vec<f64>,
    pub estimate: ValueEstimate,
    /// `|V̂(x_k) − V̂(x_{k−1})|`.
    pub gap: Option<f64>,
    /// `3·(se_k² + se_{k−1}²)^{1/2} + modulus_budget`.
    pub gap_budget: Option<f64>,
}

impl ScanRow {
    pub fn gap_ok(&self) -> bool {
        match (self.gap, self.gap_budget) {
            (Some(g), Some(b)) => g <= b,
            _ => true,
        }
    }
}

/// Estimates at `k ≥ 1` equally spaced points of `[x_a, x_b]` (both ends
/// included when `k ≥ 2`), coupled by common random numbers.
#[allow(clippy::too_many_arguments)]
pub fn continuity_scan(
    xa: &[f64],
    xb: &[f64],
    k: usize,
    spec: &SimSpec,
    l: &CostFn,
    g: &CostFn,
    n: usize,
    seed: u64,
    modulus_budget: f64,
) -> Result<Vec<ScanRow>> {
    if xa.len() != xb.len() {
        return Err(Error::dim(xa.len(), xb.len()));
    }
    if k == 0 {
        return Err(Error::Config("scan needs at least one point".into()));
    }
    let mut rows: Vec<ScanRow> = Vec::with_capacity(k);
    for j in 0..k {
        let s = if k == 1 { 0.0 } else { j as f64 / (k - 1) as f64 };
        let x: Vec<f64> = xa.iter().zip(xb).map(|(a, b)| a + s * (b - a)).collect();
        let est = estimate(&x, spec, l, g, n, seed)?;
        let (gap, gap_budget) = match rows.last() {
            Some(prev) => (
                Some((est.mean - prev.estimate.mean).abs()),
                Some(3.0 * est.std_error.hypot(prev.estimate.std_error) + modulus_budget),
            ),
            None => (None, None),
        };
        rows.push(ScanRow {
            s,
            x,
            estimate: est,
            gap,
            gap_budget,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use crate::levy::LevyModel;
    use crate::sde::{Coefficients, Policy, DEFAULT_HORIZON};

    fn spec(b: f64, s: f64, dt: f64) -> SimSpec {
        SimSpec::new(
            Domain::interval(-1.0, 1.0).unwrap(),
            Policy::constant(0.0, 1, 0.0, 0.0).unwrap(),
            Coefficients::scalar(0.0, 0.0, b, 0.0, s, 0.0).unwrap(),
            LevyModel::none(1),
            dt,
            DEFAULT_HORIZON,
        )
        .unwrap()
    }

    #[test]
    fn drift_closed_form() {
        let sp = spec(1.0, 0.0, 1e-4);
        let e = estimate(&[0.5], &sp, &CostFn::constant(1.0, 1), &CostFn::constant(0.0, 1), 4, 0).unwrap();
        assert_eq!(e.std_error, 0.0);
        assert!((e.mean - (1.0 - (-0.5f64).exp())).abs() < 2e-4);
    }

    #[test]
    fn boundary_start_returns_g() {
        let sp = spec(0.0, 1.0, 1e-3);
        let g = CostFn::new(
            CostSpec::GaussianBump {
                center: vec![0.3],
                width: 0.7,
                height: 2.0,
            },
            1,
        )
        .unwrap();
        let e = estimate(&[-1.0], &sp, &CostFn::constant(1.0, 1), &g, 10, 0).unwrap();
        assert_eq!(e.mean, g.eval(&[-1.0]));
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn per_path_dominance_bound_and_shift() {
        let sp = spec(0.2, 1.0, 1e-3);
        let l1 = CostFn::constant(0.5, 1);
        let l2 = CostFn::new(
            CostSpec::GaussianBump {
                center: vec![0.0],
                width: 0.5,
                height: 0.5,
            },
            1,
        )
        .unwrap();
        let g = CostFn::new(
            CostSpec::Coordinate {
                index: 0,
                scale: 0.0,
                offset: 0.25,
            },
            1,
        )
        .unwrap();
        let c = 0.75;
        let gc = CostFn::new(
            CostSpec::Coordinate {
                index: 0,
                scale: 0.0,
                offset: 0.25 + c,
            },
            1,
        )
        .unwrap();
        let l1f = |y: &[f64]| l1.eval(y);
        let l2f = |y: &[f64]| l2.eval(y);
        for i in 0..50 {
            let s = simulate(&[0.1], &sp, &[&l2f, &l1f], &mut stream(8, i)).unwrap();
            let swap = ExitSample {
                discounted_costs: vec![s.discounted_costs[1]],
                ..s.clone()
            };
            let v2 = path_functional(&s, &g);
            let v1 = path_functional(&swap, &g);
            assert!(v2 <= v1 + 1e-15);
            assert!(v1.abs() <= 0.5 * (1.0 - s.terminal_discount()) + 0.25 + 1e-12);
            let shifted = path_functional(&swap, &gc);
            assert!((shifted - v1 - c * s.terminal_discount()).abs() < 1e-14);
        }
    }

    #[test]
    fn scan_degenerate_and_anchored() {
        let sp = spec(1.0, 0.0, 1e-3);
        let l = CostFn::constant(1.0, 1);
        let g = CostFn::constant(0.0, 1);
        let rows = continuity_scan(&[0.2], &[0.2], 3, &sp, &l, &g, 2, 1, 0.0).unwrap();
        assert!(rows.iter().all(|r| r.estimate == rows[0].estimate));
        let rows = continuity_scan(&[0.0], &[1.0], 5, &sp, &l, &g, 2, 1, 2e-3).unwrap();
        assert_eq!(rows[4].estimate.mean, 0.0);
        for r in &rows {
            let exact = 1.0 - (-(1.0 - r.x[0])).exp();
            assert!((r.estimate.mean - exact).abs() < 2e-3);
        }
    }

    #[test]
    fn pairwise_sum_matches() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }

    #[test]
    fn censoring_is_flagged() {
        let sp = spec(0.0, 0.0, 1e-2);
        let e = estimate(&[0.0], &sp, &CostFn::constant(1.0, 1), &CostFn::constant(5.0, 1), 3, 0).unwrap();
        assert_eq!(e.censored_fraction, 1.0);
        assert!(e.censoring_warning().is_some());
        assert!((e.mean - (1.0 - (-DEFAULT_HORIZON).exp())).abs() < 1e-12);
    }
}
