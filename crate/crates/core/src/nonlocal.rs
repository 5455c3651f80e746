//! The nonlocal operator
//! `𝓘(φ,x) = ∫ (φ(x+y) − φ(x) − Dφ(x)·y 𝟙_{|y|<1}) ν(dy)`,
//! its split `b_r·Dφ + 𝓘_{r,1} + 𝓘_{r,2}`, the local Hamiltonian `H` and
//! pointwise residuals of `F(φ,x) + φ(x) − ℓ(x)` for smooth candidates.
//!
//! `ν` is unnormalised (`dy/|y|^{d+α}` for stable noise), so `𝓘` differs
//! from the usual fractional Laplacian by the constant `C_d(α)`.
//!
//! Quadrature works in polar coordinates on antipodal direction pairs
//! `±θ` (the two signs in one dimension, a periodic trapezoid over
//! `θ ∈ [0, π)` in two). Inside `B_r` the radial variable is
//! `ρ = r v^{1/(2−β)}`, which makes the `ρ^{1−β}` behaviour of the
//! compensated integrand flat; below `ρ₀` the second-order Taylor
//! expansion replaces the cancelling difference. Outside `B_r`, panels
//! run to `R_max` and each candidate supplies the far field.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::levy::{LevyModel, LevySpec};
use crate::quad::{integrate, QuadResult, Tolerance};
use crate::sde::Coefficients;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum CandidateSpec {
    /// `1 − e^{−1+|x₁|}`, kinked on `x₁ = 0`.
    ExpProfile,
    /// `height·exp(−|x − center|²/(2 width²))`.
    GaussianBump { center: Vec<f64>, width: f64, height: f64 },
    /// `scale·|x − center|²/2`.
    Quadratic { center: Vec<f64>, scale: f64 },
    /// `cos(wave·x + phase)`.
    Cosine { wave: Vec<f64>, phase: f64 },
    /// `c0 + grad·x`.
    Affine { c0: f64, grad: Vec<f64> },
    /// `height/(1 + |x − center|²/width²)`.
    Lorentzian { center: Vec<f64>, width: f64, height: f64 },
}

/// A test function with exact first and second derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    spec: CandidateSpec,
    dim: usize,
}

/// Names accepted by [`Candidate::named`].
pub const CANDIDATE_NAMES: [&str; 6] = [
    "exp-profile",
    "gaussian-bump",
    "quadratic",
    "cosine",
    "affine",
    "lorentzian",
];

fn unit(dim: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[0] = 1.0;
    e
}

impl Candidate {
    pub fn new(spec: CandidateSpec, dim: usize) -> Result<Self> {
        let lens: Vec<usize> = match &spec {
            CandidateSpec::ExpProfile => vec![],
            CandidateSpec::GaussianBump { center, width, .. } | CandidateSpec::Lorentzian { center, width, .. } => {
                if !(*width > 0.0) {
                    return Err(Error::Config("candidate width must be positive".into()));
                }
                vec![center.len()]
            }
            CandidateSpec::Quadratic { center, .. } => vec![center.len()],
            CandidateSpec::Cosine { wave, .. } => vec![wave.len()],
            CandidateSpec::Affine { grad, .. } => vec![grad.len()],
        };
        if dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if let Some(&l) = lens.iter().find(|&&l| l != dim) {
            return Err(Error::dim(dim, l));
        }
        Ok(Candidate { spec, dim })
    }

    /// Registry entry with default parameters.
    pub fn named(name: &str, dim: usize) -> Result<Self> {
        let zero = vec![0.0; dim];
        let spec = match name {
            "exp-profile" => CandidateSpec::ExpProfile,
            "gaussian-bump" => CandidateSpec::GaussianBump {
                center: zero,
                width: 0.5,
                height: 1.0,
            },
            "quadratic" => CandidateSpec::Quadratic {
                center: zero,
                scale: 1.0,
            },
            "cosine" => CandidateSpec::Cosine {
                wave: unit(dim),
                phase: 0.0,
            },
            "affine" => CandidateSpec::Affine {
                c0: 0.5,
                grad: (0..dim).map(|i| 1.0 / (1 + i) as f64).collect(),
            },
            "lorentzian" => {
                let mut center = zero;
                center[0] = 0.2;
                CandidateSpec::Lorentzian {
                    center,
                    width: 0.7,
                    height: 1.0,
                }
            }
            other => return Err(Error::Config(format!("unknown candidate '{other}'"))),
        };
        Self::new(spec, dim)
    }

    pub fn spec(&self) -> &CandidateSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.spec {
            CandidateSpec::ExpProfile => 1.0 - (x[0].abs() - 1.0).exp(),
            CandidateSpec::GaussianBump { center, width, height } => {
                height * (-0.5 * dist2(x, center) / (width * width)).exp()
            }
            CandidateSpec::Quadratic { center, scale } => 0.5 * scale * dist2(x, center),
            CandidateSpec::Cosine { wave, phase } => (dot(wave, x) + phase).cos(),
            CandidateSpec::Affine { c0, grad } => c0 + dot(grad, x),
            CandidateSpec::Lorentzian { center, width, height } => height / (1.0 + dist2(x, center) / (width * width)),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        match &self.spec {
            CandidateSpec::ExpProfile => {
                let mut g = vec![0.0; d];
                g[0] = -x[0].signum() * (x[0].abs() - 1.0).exp();
                g
            }
            CandidateSpec::GaussianBump { center, width, .. } => {
                let f = self.value(x) / (width * width);
                x.iter().zip(center).map(|(a, c)| -f * (a - c)).collect()
            }
            CandidateSpec::Quadratic { center, scale } => x.iter().zip(center).map(|(a, c)| scale * (a - c)).collect(),
            CandidateSpec::Cosine { wave, phase } => {
                let s = (dot(wave, x) + phase).sin();
                wave.iter().map(|k| -s * k).collect()
            }
            CandidateSpec::Affine { grad, .. } => grad.clone(),
            CandidateSpec::Lorentzian { center, width, height } => {
                let w2 = width * width;
                let q = 1.0 + dist2(x, center) / w2;
                let f = -2.0 * height / (w2 * q * q);
                x.iter().zip(center).map(|(a, c)| f * (a - c)).collect()
            }
        }
    }

    /// Row-major `d × d` Hessian.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut h = vec![0.0; d * d];
        match &self.spec {
            CandidateSpec::ExpProfile => h[0] = -(x[0].abs() - 1.0).exp(),
            CandidateSpec::GaussianBump { center, width, .. } => {
                let w2 = width * width;
                let f = self.value(x);
                for i in 0..d {
                    for j in 0..d {
                        let zz = (x[i] - center[i]) * (x[j] - center[j]) / (w2 * w2);
                        h[i * d + j] = f * (zz - if i == j { 1.0 / w2 } else { 0.0 });
                    }
                }
            }
            CandidateSpec::Quadratic { scale, .. } => {
                for i in 0..d {
                    h[i * d + i] = *scale;
                }
            }
            CandidateSpec::Cosine { wave, phase } => {
                let c = (dot(wave, x) + phase).cos();
                for i in 0..d {
                    for j in 0..d {
                        h[i * d + j] = -c * wave[i] * wave[j];
                    }
                }
            }
            CandidateSpec::Affine { .. } => {}
            CandidateSpec::Lorentzian { center, width, height } => {
                let w2 = width * width;
                let q = 1.0 + dist2(x, center) / w2;
                for i in 0..d {
                    for j in 0..d {
                        let zz = (x[i] - center[i]) * (x[j] - center[j]);
                        let diag = if i == j { 1.0 / (q * q) } else { 0.0 };
                        h[i * d + j] = -2.0 * height / w2 * (diag - 4.0 * zz / (w2 * q * q * q));
                    }
                }
            }
        }
        h
    }

    /// Distance from `x` to the set where the candidate is not smooth.
    pub fn kink_distance(&self, x: &[f64]) -> f64 {
        match self.spec {
            CandidateSpec::ExpProfile => x[0].abs(),
            _ => f64::INFINITY,
        }
    }

    /// `sup |φ|`, when finite.
    pub fn sup_norm(&self) -> Option<f64> {
        match &self.spec {
            CandidateSpec::GaussianBump { height, .. } | CandidateSpec::Lorentzian { height, .. } => Some(height.abs()),
            CandidateSpec::Cosine { .. } => Some(1.0),
            CandidateSpec::Affine { c0, grad } if grad.iter().all(|g| *g == 0.0) => Some(c0.abs()),
            _ => None,
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::dim(self.dim, x.len()));
        }
        if self.kink_distance(x) < KINK_CLEARANCE {
            return Err(Error::Unsupported(format!(
                "point {x:?} is within {KINK_CLEARANCE} of the candidate's kink"
            )));
        }
        Ok(())
    }

    /// Radius beyond which [`far_field`](Self::far_field) takes over.
    fn far_radius(&self, x: &[f64], model: &LevyModel, r: f64) -> Result<f64> {
        let floor = 2.0 * r.max(0.5);
        if model.stable_alpha().is_none() {
            // finite measures: push R out until the tail mass is negligible
            let s = self.sup_norm().unwrap_or(1.0).max(1.0);
            let mut big = floor;
            while s * model.tail_mass(big)? > 1e-14 && big < 1e6 {
                big *= 2.0;
            }
            return Ok(big);
        }
        let alpha = model.stable_alpha().expect("stable");
        Ok(match &self.spec {
            CandidateSpec::GaussianBump { center, width, .. } => (dist2(x, center).sqrt() + 10.0 * width).max(floor),
            CandidateSpec::Lorentzian { center, width, height } => {
                let area = crate::levy::sphere_area(self.dim);
                let need = (4.0 * height.abs() * width * width * area / (alpha * 1e-13)).powf(1.0 / (2.0 + alpha));
                need.max(2.0 * dist2(x, center).sqrt()).max(floor)
            }
            CandidateSpec::Cosine { wave, .. } => {
                let k = dot(wave, wave).sqrt();
                if k == 0.0 {
                    floor
                } else {
                    (60.0 / k).max(floor)
                }
            }
            _ => floor,
        })
    }

    /// `∫_{|y|>R} φ(x+y) ν(dy)` as `(value, error bound)`.
    fn far_field(&self, x: &[f64], model: &LevyModel, big: f64) -> Result<(f64, f64)> {
        let tail = model.tail_mass(big)?;
        match &self.spec {
            CandidateSpec::Affine { grad, .. } => {
                let m1 = model.tail_first_moment(big);
                return Ok((self.value(x) * tail + dot(grad, &m1), 0.0));
            }
            CandidateSpec::ExpProfile | CandidateSpec::Quadratic { .. } => {
                return Err(Error::Unsupported(
                    "candidate grows at infinity and is not integrable against this Lévy measure".into(),
                ))
            }
            _ => {}
        }
        let Some(alpha) = model.stable_alpha() else {
            return Ok((0.0, self.sup_norm().unwrap_or(0.0) * tail));
        };
        match &self.spec {
            CandidateSpec::GaussianBump { center, width, height } => {
                let gap = (big - dist2(x, center).sqrt()).max(0.0);
                Ok((0.0, height.abs() * (-0.5 * gap * gap / (width * width)).exp() * tail))
            }
            CandidateSpec::Lorentzian { center, width, height } => {
                let bound = if big >= 2.0 * dist2(x, center).sqrt() {
                    4.0 * height.abs() * width * width / (big * big) * tail
                } else {
                    height.abs() * tail
                };
                Ok((0.0, bound))
            }
            CandidateSpec::Cosine { wave, phase } => {
                let k = dot(wave, wave).sqrt();
                if k == 0.0 {
                    return Ok((phase.cos() * tail, 0.0));
                }
                if self.dim != 1 {
                    return Err(Error::Unsupported(
                        "cosine far field is implemented for d = 1 only".into(),
                    ));
                }
                let (c, err) = cosine_tail(k, 1.0 + alpha, big);
                let amp = (dot(wave, x) + phase).cos();
                Ok((2.0 * amp * c, 2.0 * amp.abs() * err))
            }
            _ => unreachable!(),
        }
    }
}

const KINK_CLEARANCE: f64 = 1e-3;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// `∫_R^∞ cos(kρ) ρ^{−s} dρ` by repeated integration by parts, with the
/// remainder bound `|(s)_N / k^N| R^{1−s−N}/(s+N−1)`.
fn cosine_tail(k: f64, s: f64, big: f64) -> (f64, f64) {
    let ik = Complex::new(0.0, k);
    let lead = -Complex::new(0.0, k * big).exp() * big.powf(-s) / ik;
    let mut sum = Complex::new(0.0, 0.0);
    let mut term = lead;
    let mut coef = 1.0; // |Π (s+j)/k|
    let mut best = f64::INFINITY;
    for n in 0..60 {
        let n_f = n as f64;
        let remainder = coef * big.powf(1.0 - s - n_f) / (s + n_f - 1.0);
        if remainder < best {
            best = remainder;
        } else {
            break;
        }
        if remainder < 1e-17 {
            break;
        }
        sum += term;
        term *= (s + n_f) / (ik * big);
        coef *= (s + n_f) / k;
    }
    (sum.re, best)
}

/// Quadrature controls for [`eval_i_split`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    /// Inner radius `r` of the split.
    pub r: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Taylor cutoff `ρ₀ = rho0_factor·min(r, 1)`.
    pub rho0_factor: f64,
    /// Overrides the candidate's far-field radius.
    pub r_max: Option<f64>,
    pub min_angles: usize,
    pub max_angles: usize,
    pub max_intervals: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            r: 1.0,
            abs_tol: 1e-11,
            rel_tol: 1e-10,
            rho0_factor: 1e-3,
            r_max: None,
            min_angles: 16,
            max_angles: 4096,
            max_intervals: 4000,
        }
    }
}

impl QuadratureSpec {
    pub fn with_r(r: f64) -> Self {
        QuadratureSpec { r, ..Self::default() }
    }

    fn tolerance(&self) -> Tolerance {
        Tolerance {
            abs: self.abs_tol,
            rel: self.rel_tol,
            max_intervals: self.max_intervals,
        }
    }
}

/// Components of `𝓘(φ,x) = b_r·Dφ(x) + 𝓘_{r,1} + 𝓘_{r,2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SplitValue {
    pub r: f64,
    pub drift_term: f64,
    pub i_r1: f64,
    pub i_r2: f64,
    pub total: f64,
    pub error: f64,
}

/// The Lévy measure as radial kernels along direction pairs.
struct Kernel<'a> {
    model: &'a LevyModel,
    beta: f64,
}

impl Kernel<'_> {
    /// Polar density along `θ` at radius `ρ`: `ν(dy) = k_θ(ρ) dρ dθ`.
    fn k(&self, theta: &[f64], rho: f64) -> f64 {
        match self.model.spec() {
            LevySpec::AlphaStable { alpha, .. } => rho.powf(-1.0 - alpha),
            _ => {
                let y: Vec<f64> = theta.iter().map(|t| t * rho).collect();
                self.model.density(&y)
            }
        }
    }
}

struct PairIntegrals {
    inner: QuadResult,
    outer: QuadResult,
}

#[allow(clippy::too_many_arguments)]
fn pair_integrals(
    phi: &Candidate,
    x: &[f64],
    theta: &[f64],
    kernel: &Kernel<'_>,
    spec: &QuadratureSpec,
    big: f64,
    f0: f64,
    df: f64,
    q: f64,
) -> Result<PairIntegrals> {
    let r = spec.r;
    let tol = spec.tolerance();
    let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
    let at = |rho: f64, sign: f64| -> f64 {
        let y: Vec<f64> = x.iter().zip(theta).map(|(a, t)| a + sign * rho * t).collect();
        phi.value(&y)
    };
    let ksum = |rho: f64| kernel.k(theta, rho) + kernel.k(&neg, rho);
    let compensated = |rho: f64| -> f64 {
        (at(rho, 1.0) - f0 - rho * df) * kernel.k(theta, rho) + (at(rho, -1.0) - f0 + rho * df) * kernel.k(&neg, rho)
    };
    let p = 1.0 / (2.0 - kernel.beta);
    let rho_of = |v: f64| r * v.powf(p);
    let jac = |v: f64| r * p * v.powf(p - 1.0);
    let rho0 = (spec.rho0_factor * r.min(1.0)).min(r);
    let v0 = (rho0 / r).powf(1.0 / p);
    let taylor = integrate(
        &|v: f64| {
            let rho = rho_of(v);
            0.5 * q * rho * rho * ksum(rho) * jac(v)
        },
        0.0,
        v0,
        &tol,
    )?;
    let body = integrate(&|v: f64| compensated(rho_of(v)) * jac(v), v0, 1.0, &tol)?;
    // remainder of the Taylor replacement: the O(ρ⁴) defect at ρ₀, weighted by ∫_0^{ρ₀}(ρ/ρ₀)⁴ dν
    let defect = (compensated(rho0) - 0.5 * q * rho0 * rho0 * ksum(rho0)).abs() * rho0;
    let taylor_err = defect / (4.0 - kernel.beta) + 4.0 * f64::EPSILON * f0.abs().max(1.0) * ksum(rho0) * rho0;
    let inner = QuadResult {
        value: taylor.value + body.value,
        error: taylor.error + body.error + taylor_err,
        evals: taylor.evals + body.evals,
    };
    let outer_f = |rho: f64| at(rho, 1.0) * kernel.k(theta, rho) + at(rho, -1.0) * kernel.k(&neg, rho);
    let mut outer = QuadResult::ZERO;
    let mut a = r;
    while a < big {
        let b = (2.0 * a).min(big);
        outer = outer + integrate(&outer_f, a, b, &tol)?;
        a = b;
    }
    Ok(PairIntegrals { inner, outer })
}

/// Evaluates the split of `𝓘(φ,x)` with inner radius `spec.r`.
pub fn eval_i_split(phi: &Candidate, x: &[f64], model: &LevyModel, spec: &QuadratureSpec) -> Result<SplitValue> {
    phi.check_point(x)?;
    if model.dim() != phi.dim() {
        return Err(Error::dim(phi.dim(), model.dim()));
    }
    let r = spec.r;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Config(format!("split radius must be positive, got {r}")));
    }
    if !model.has_jumps() {
        return Ok(SplitValue {
            r,
            drift_term: 0.0,
            i_r1: 0.0,
            i_r2: 0.0,
            total: 0.0,
            error: 0.0,
        });
    }
    if matches!(phi.spec, CandidateSpec::ExpProfile) {
        return Err(Error::Unsupported(
            "the kinked profile is only evaluated without jumps".into(),
        ));
    }
    let beta = match model.spec() {
        LevySpec::AlphaStable { alpha, .. } | LevySpec::Tempered { alpha, .. } => *alpha,
        _ => 0.0,
    };
    let kernel = Kernel { model, beta };
    let d = phi.dim();
    let f0 = phi.value(x);
    let grad = phi.gradient(x);
    let hess = phi.hessian(x);
    let big = match spec.r_max {
        Some(b) => b.max(r),
        None => phi.far_radius(x, model, r)?,
    };
    let (far, far_err) = phi.far_field(x, model, big)?;
    let direction_pair = |theta: &[f64]| -> Result<PairIntegrals> {
        let df = dot(&grad, theta);
        let q: f64 = (0..d)
            .map(|i| (0..d).map(|j| theta[i] * hess[i * d + j] * theta[j]).sum::<f64>())
            .sum();
        pair_integrals(phi, x, theta, &kernel, spec, big, f0, df, q)
    };
    let (inner, outer) = match d {
        1 => {
            let p = direction_pair(&[1.0])?;
            (p.inner, p.outer)
        }
        2 => angular(&direction_pair, spec)?,
        _ => return Err(Error::Unsupported("nonlocal quadrature supports d ≤ 2".into())),
    };
    let tail_r = model.tail_mass(r)?;
    let b_r: Vec<f64> = model.partial_drift(r)?.iter().map(|v| -v).collect();
    let drift_term = dot(&b_r, &grad);
    let i_r1 = inner.value;
    let i_r2 = outer.value + far - f0 * tail_r;
    let total = drift_term + i_r1 + i_r2;
    Ok(SplitValue {
        r,
        drift_term,
        i_r1,
        i_r2,
        total,
        error: inner.error + outer.error + far_err + 8.0 * f64::EPSILON * (f0 * tail_r).abs(),
    })
}

/// Periodic trapezoid over `θ ∈ [0, π)` with doubling until the inner
/// and outer angular sums settle.
fn angular(pair: &dyn Fn(&[f64]) -> Result<PairIntegrals>, spec: &QuadratureSpec) -> Result<(QuadResult, QuadResult)> {
    let mut nodes: Vec<(PairIntegrals, f64)> = Vec::new();
    let mut n = spec.min_angles.max(4);
    let eval = |k: usize, n: usize| -> Result<PairIntegrals> {
        let t = PI * k as f64 / n as f64;
        pair(&[t.cos(), t.sin()])
    };
    for k in 0..n {
        nodes.push((eval(k, n)?, PI * k as f64 / n as f64));
    }
    let sums = |nodes: &[(PairIntegrals, f64)], n: usize| -> (QuadResult, QuadResult) {
        let h = PI / n as f64;
        let mut sorted: Vec<&(PairIntegrals, f64)> = nodes.iter().collect();
        sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
        let fold = |get: &dyn Fn(&PairIntegrals) -> QuadResult| {
            sorted
                .iter()
                .fold(QuadResult::ZERO, |acc, (p, _)| acc + get(p))
                .scaled(h)
        };
        (fold(&|p| p.inner), fold(&|p| p.outer))
    };
    let (mut inner, mut outer) = sums(&nodes, n);
    loop {
        if 2 * n > spec.max_angles {
            return Err(Error::QuadratureFailure {
                reason: format!("angular rule did not settle with {n} directions"),
                partial: inner.value + outer.value,
                error: f64::INFINITY,
            });
        }
        for k in 0..n {
            nodes.push((eval(2 * k + 1, 2 * n)?, PI * (2 * k + 1) as f64 / (2 * n) as f64));
        }
        n *= 2;
        let (i2, o2) = sums(&nodes, n);
        let di = (i2.value - inner.value).abs();
        let dout = (o2.value - outer.value).abs();
        let scale = i2.value.abs() + o2.value.abs();
        let settled = di + dout <= spec.abs_tol.max(spec.rel_tol * scale);
        inner = QuadResult {
            error: i2.error + di,
            ..i2
        };
        outer = QuadResult {
            error: o2.error + dout,
            ..o2
        };
        if settled {
            return Ok((inner, outer));
        }
    }
}

/// `𝓘(φ,x)` with the default split radius.
pub fn eval_i(phi: &Candidate, x: &[f64], model: &LevyModel, spec: &QuadratureSpec) -> Result<QuadResult> {
    let s = eval_i_split(phi, x, model, spec)?;
    Ok(QuadResult {
        value: s.total,
        error: s.error,
        evals: 0,
    })
}

/// `H(φ,x,a) = ½ tr(A(a) D²φ(x)) + b(a)·Dφ(x)`.
pub fn eval_h(phi: &Candidate, x: &[f64], a: f64, coeffs: &Coefficients) -> Result<f64> {
    coeffs.check_control(a)?;
    if x.len() != phi.dim() || coeffs.dim() != phi.dim() {
        return Err(Error::dim(phi.dim(), coeffs.dim()));
    }
    let am = coeffs.diffusion_matrix(a);
    let hess = phi.hessian(x);
    let tr: f64 = am.iter().zip(&hess).map(|(u, v)| u * v).sum();
    Ok(0.5 * tr + dot(&coeffs.drift(a), &phi.gradient(x)))
}

/// `min_a H(φ,x,a)` on a grid of `n` controls refined by golden section.
pub fn min_h(phi: &Candidate, x: &[f64], coeffs: &Coefficients, n: usize) -> Result<(f64, f64)> {
    let (lo, hi) = coeffs.range();
    let h = |a: f64| eval_h(phi, x, a.clamp(lo, hi), coeffs);
    if lo == hi {
        return Ok((lo, h(lo)?));
    }
    let n = n.max(2);
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let mut best = 0;
    let mut vals = Vec::with_capacity(n);
    for (i, &a) in grid.iter().enumerate() {
        vals.push(h(a)?);
        if vals[i] < vals[best] {
            best = i;
        }
    }
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n - 1)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut e = a + g * (b - a);
    let (mut fc, mut fe) = (h(c)?, h(e)?);
    while b - a > 1e-10 {
        if fc < fe {
            b = e;
            e = c;
            fe = fc;
            c = b - g * (b - a);
            fc = h(c)?;
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + g * (b - a);
            fe = h(e)?;
        }
    }
    let mid = 0.5 * (a + b);
    let fm = h(mid)?;
    Ok([(grid[best], vals[best]), (mid, fm)]
        .into_iter()
        .fold((mid, fm), |acc, p| if p.1 < acc.1 { p } else { acc }))
}

/// Pointwise residual of `F(φ,x) + φ(x) − ℓ(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Residual {
    pub residual: f64,
    pub error: f64,
    pub min_h: f64,
    pub a_star: f64,
    pub nonlocal: f64,
    pub phi: f64,
    pub ell: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn eval_f_residual(
    phi: &Candidate,
    x: &[f64],
    a_grid: usize,
    ell: &dyn Fn(&[f64]) -> f64,
    coeffs: &Coefficients,
    model: &LevyModel,
    spec: &QuadratureSpec,
) -> Result<Residual> {
    phi.check_point(x)?;
    let (a_star, hmin) = min_h(phi, x, coeffs, a_grid)?;
    let i = eval_i_split(phi, x, model, spec)?;
    let f = phi.value(x);
    let l = ell(x);
    Ok(Residual {
        residual: -hmin - i.total + f - l,
        error: i.error + 4.0 * f64::EPSILON * (hmin.abs() + i.total.abs() + f.abs() + l.abs()),
        min_h: hmin,
        a_star,
        nonlocal: i.total,
        phi: f,
        ell: l,
    })
}

/// `ℓ := F(φ,·) + φ`, making `φ` an exact solution up to quadrature error.
pub fn manufactured_cost(
    phi: &Candidate,
    x: &[f64],
    a_grid: usize,
    coeffs: &Coefficients,
    model: &LevyModel,
    spec: &QuadratureSpec,
) -> Result<QuadResult> {
    let r = eval_f_residual(phi, x, a_grid, &|_| 0.0, coeffs, model, spec)?;
    Ok(QuadResult {
        value: r.residual,
        error: r.error,
        evals: 0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContinuityRow {
    pub h: f64,
    pub value: f64,
    pub gap: f64,
    pub error: f64,
}

/// `|𝓘(φ, x + h e) − 𝓘(φ, x)|` for each `h`.
pub fn operator_continuity_probe(
    phi: &Candidate,
    x: &[f64],
    direction: &[f64],
    model: &LevyModel,
    spec: &QuadratureSpec,
    radii: &[f64],
) -> Result<Vec<ContinuityRow>> {
    let base = eval_i_split(phi, x, model, spec)?;
    radii
        .iter()
        .map(|&h| {
            let y: Vec<f64> = x.iter().zip(direction).map(|(a, e)| a + h * e).collect();
            let v = if h == 0.0 {
                base
            } else {
                eval_i_split(phi, &y, model, spec)?
            };
            Ok(ContinuityRow {
                h,
                value: v.total,
                gap: (v.total - base.total).abs(),
                error: v.error + base.error,
            })
        })
        .collect()
}

/// Dyadic radii `2^{−k}` for `k = 1..=n`.
pub fn dyadic_radii(n: u32) -> Vec<f64> {
    (1..=n).map(|k| 2f64.powi(-(k as i32))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::JumpLaw;

    const C_HALF: f64 = 5.013256549262001;

    fn fd_check(c: &Candidate, x: &[f64]) {
        let d = c.dim();
        let h = 1e-5;
        let g = c.gradient(x);
        let hs = c.hessian(x);
        for i in 0..d {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            let fd = (c.value(&p) - c.value(&m)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "{c:?} grad {i}");
            let gp = c.gradient(&p);
            let gm = c.gradient(&m);
            for j in 0..d {
                let fd2 = (gp[j] - gm[j]) / (2.0 * h);
                assert!(
                    (fd2 - hs[j * d + i]).abs() <= 1e-6 * hs[j * d + i].abs().max(1.0),
                    "{c:?} hess"
                );
            }
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let mut seed = 1u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64 * 1.6 - 0.8
        };
        for d in [1, 2] {
            for name in CANDIDATE_NAMES {
                let c = Candidate::named(name, d).unwrap();
                for _ in 0..20 {
                    let mut x: Vec<f64> = (0..d).map(|_| next()).collect();
                    if x[0].abs() < 0.01 {
                        x[0] += 0.1;
                    }
                    fd_check(&c, &x);
                }
            }
        }
    }

    #[test]
    fn cosine_matches_frozen_constant() {
        let c = Candidate::named("cosine", 1).unwrap();
        let m = LevyModel::alpha_stable(0.5, 1).unwrap();
        let s = eval_i_split(&c, &[0.0], &m, &QuadratureSpec::default()).unwrap();
        assert!((s.total + C_HALF).abs() <= s.error.max(1e-9), "{s:?}");
        assert!((crate::levy::stable_symbol_constant(0.5, 1) - C_HALF).abs() < 1e-13);
    }

    #[test]
    fn affine_is_annihilated() {
        for (d, m) in [
            (1, LevyModel::alpha_stable(0.5, 1).unwrap()),
            (1, LevyModel::alpha_stable(1.5, 1).unwrap()),
            (2, LevyModel::alpha_stable(1.0, 2).unwrap()),
        ] {
            let c = Candidate::named("affine", d).unwrap();
            let x = vec![0.3; d];
            let s = eval_i_split(&c, &x, &m, &QuadratureSpec::with_r(0.5)).unwrap();
            assert!(
                s.i_r1.abs() <= s.error && s.total.abs() <= s.error && s.error < 1e-9,
                "{s:?}"
            );
        }
    }

    #[test]
    fn split_is_r_invariant() {
        let m = LevyModel::alpha_stable(1.5, 1).unwrap();
        let c = Candidate::named("gaussian-bump", 1).unwrap();
        let a = eval_i_split(&c, &[0.2], &m, &QuadratureSpec::with_r(0.5)).unwrap();
        let b = eval_i_split(&c, &[0.2], &m, &QuadratureSpec::with_r(2.0)).unwrap();
        assert!((a.total - b.total).abs() <= a.error + b.error, "{a:?} {b:?}");
    }

    #[test]
    fn asymmetric_compound_poisson_split() {
        let m = LevyModel::new(LevySpec::CompoundPoisson {
            intensity: 1.5,
            law: JumpLaw::Exponential { rate: 2.0 },
        })
        .unwrap();
        let c = Candidate::named("lorentzian", 1).unwrap();
        let a = eval_i_split(&c, &[0.1], &m, &QuadratureSpec::with_r(0.25)).unwrap();
        let b = eval_i_split(&c, &[0.1], &m, &QuadratureSpec::with_r(2.0)).unwrap();
        assert!((a.total - b.total).abs() <= a.error + b.error + 1e-12, "{a:?} {b:?}");
        assert!(a.drift_term != 0.0);
        let aff = Candidate::named("affine", 1).unwrap();
        let s = eval_i_split(&aff, &[0.1], &m, &QuadratureSpec::with_r(0.5)).unwrap();
        // ∫ y 𝟙_{|y|≥1} ν(dy) for the affine slope 1
        let expect = 1.5 * (1.0 + 0.5) * (-2.0f64).exp();
        assert!((s.total - expect).abs() < 1e-9, "{s:?}");
    }

    #[test]
    fn hamiltonian_examples() {
        let q = Candidate::named("quadratic", 1).unwrap();
        let c = Coefficients::scalar(-1.0, 1.0, 0.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(eval_h(&q, &[0.0], 1.0, &c).unwrap(), 0.5);
        assert!(matches!(
            eval_h(&q, &[0.0], 2.0, &c),
            Err(Error::ControlOutOfRange { .. })
        ));
        let lin = Candidate::new(
            CandidateSpec::Affine {
                c0: 0.0,
                grad: vec![-0.7],
            },
            1,
        )
        .unwrap();
        let drift = Coefficients::scalar(-1.0, 1.0, 0.0, 1.0, 0.0, 0.0).unwrap();
        let (_, m) = min_h(&lin, &[0.3], &drift, 11).unwrap();
        assert!((m + 0.7).abs() < 1e-12);
        let single = Coefficients::scalar(0.4, 0.4, 0.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(
            min_h(&lin, &[0.3], &single, 11).unwrap().1,
            eval_h(&lin, &[0.3], 0.4, &single).unwrap()
        );
    }

    #[test]
    fn local_profile_residual() {
        let u = Candidate::named("exp-profile", 1).unwrap();
        let c = Coefficients::scalar(-1.0, 1.0, 0.0, 1.0, 0.0, 0.0).unwrap();
        let none = LevyModel::none(1);
        for x in [0.5, -0.5] {
            let r = eval_f_residual(&u, &[x], 21, &|_| 1.0, &c, &none, &QuadratureSpec::default()).unwrap();
            assert!(r.residual.abs() < 1e-9, "{r:?}");
        }
        assert!(eval_f_residual(&u, &[1e-4], 21, &|_| 1.0, &c, &none, &QuadratureSpec::default()).is_err());
        let stable = LevyModel::alpha_stable(0.5, 1).unwrap();
        assert!(eval_i_split(&u, &[0.5], &stable, &QuadratureSpec::default()).is_err());
    }

    #[test]
    fn small_ball_scaling() {
        let m = LevyModel::alpha_stable(0.5, 1).unwrap();
        let c = Candidate::named("gaussian-bump", 1).unwrap();
        let rs = [1e-3, 1e-2, 1e-1];
        let v: Vec<f64> = rs
            .iter()
            .map(|&r| {
                eval_i_split(&c, &[0.1], &m, &QuadratureSpec::with_r(r))
                    .unwrap()
                    .i_r1
                    .abs()
            })
            .collect();
        let slope = (v[2].ln() - v[0].ln()) / (rs[2].ln() - rs[0].ln());
        assert!((slope - 1.5).abs() < 0.05, "{slope}");
    }

    #[test]
    fn two_dimensional_bump() {
        let m = LevyModel::alpha_stable(0.5, 2).unwrap();
        let c = Candidate::named("gaussian-bump", 2).unwrap();
        let a = eval_i_split(&c, &[0.1, -0.2], &m, &QuadratureSpec::with_r(0.25)).unwrap();
        let b = eval_i_split(&c, &[0.1, -0.2], &m, &QuadratureSpec::with_r(1.0)).unwrap();
        assert!(a.total < 0.0);
        assert!((a.total - b.total).abs() <= a.error + b.error, "{a:?} {b:?}");
    }

    #[test]
    fn continuity_probe_trivia() {
        let m = LevyModel::alpha_stable(0.5, 1).unwrap();
        let aff = Candidate::named("affine", 1).unwrap();
        let rows =
            operator_continuity_probe(&aff, &[0.0], &[1.0], &m, &QuadratureSpec::default(), &[0.0, 0.5, 0.25]).unwrap();
        assert_eq!(rows[0].gap, 0.0);
        assert!(rows.iter().all(|r| r.gap < 1e-10));
    }
}
