//! Lévy measures, partial moments and increment samplers for pure-jump
//! noise with generating triplet `(0, ν, 0)`.
//!
//! The α-stable measure is the unnormalised `ν(dy) = dy/|y|^{d+α}`; its
//! characteristic exponent is `C_d(α)|ξ|^α` with [`stable_symbol_constant`].
//! All models use the compensator `𝟙_{|y|<1}`, so an increment over `Δt` is
//! the sum of its jumps minus `Δt·∫_{ε≤|y|<1} y ν(dy)`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad::{integrate, Tolerance};

pub const DEFAULT_EPS_JUMP: f64 = 1e-3;

fn default_eps() -> f64 {
    DEFAULT_EPS_JUMP
}

fn yes() -> bool {
    true
}

/// Jump-size law of a finite-activity model on ℝ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum JumpLaw {
    /// Density `rate·e^{−rate·y}` on `y > 0`.
    Exponential {
        rate: f64,
    },
    /// Density `e^{−|y|/scale}/(2·scale)`.
    Laplace {
        scale: f64,
    },
    Normal {
        mean: f64,
        std: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LevySpec {
    /// No jumps.
    None { dim: usize },
    /// `ν(dy) = dy/|y|^{d+α}`.
    AlphaStable { alpha: f64, dim: usize },
    /// `ν = intensity × law` on ℝ.
    CompoundPoisson { intensity: f64, law: JumpLaw },
    /// `ν(dy) = e^{−λ|y|}|y|^{−1−α} dy` on ℝ, simulated by truncation at
    /// `eps_jump` with an optional Gaussian stand-in for the small jumps.
    Tempered {
        alpha: f64,
        lambda: f64,
        #[serde(default = "default_eps")]
        eps_jump: f64,
        #[serde(default = "yes")]
        gaussian_correction: bool,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevyModel {
    spec: LevySpec,
    dim: usize,
    /// Rate of the explicitly simulated jumps.
    jump_rate: f64,
    /// `∫_{ε≤|y|<1} y ν(dy)` for the simulated jumps.
    compensator: Vec<f64>,
    /// Variance of the small-jump Gaussian.
    small_var: f64,
    /// `(Δt·C_d)^{1/α}` per unit `Δt^{1/α}`.
    stable_scale: f64,
}

/// `C_d(α) = π^{d/2}|Γ(−α/2)| / (2^α Γ((d+α)/2))`, so that
/// `∫ (1 − cos ξ·y) |y|^{−d−α} dy = C_d(α)|ξ|^α`.
pub fn stable_symbol_constant(alpha: f64, dim: usize) -> f64 {
    let d = dim as f64;
    PI.powf(0.5 * d) * libm::tgamma(-0.5 * alpha).abs() / (2f64.powf(alpha) * libm::tgamma(0.5 * (d + alpha)))
}

/// Surface measure of the unit sphere in ℝ^d.
pub fn sphere_area(dim: usize) -> f64 {
    let d = dim as f64;
    2.0 * PI.powf(0.5 * d) / libm::tgamma(0.5 * d)
}

impl LevyModel {
    pub fn new(spec: LevySpec) -> Result<Self> {
        let mut m = LevyModel {
            dim: 1,
            jump_rate: 0.0,
            compensator: vec![0.0],
            small_var: 0.0,
            stable_scale: 0.0,
            spec: spec.clone(),
        };
        match spec {
            LevySpec::None { dim } => {
                if dim == 0 {
                    return Err(Error::InvalidModel("dimension must be positive".into()));
                }
                m.dim = dim;
                m.compensator = vec![0.0; dim];
            }
            LevySpec::AlphaStable { alpha, dim } => {
                if !(alpha > 0.0 && alpha < 2.0) {
                    return Err(Error::InvalidModel(format!("α = {alpha} outside (0, 2)")));
                }
                if dim == 0 {
                    return Err(Error::InvalidModel("dimension must be positive".into()));
                }
                m.dim = dim;
                m.compensator = vec![0.0; dim];
                m.stable_scale = stable_symbol_constant(alpha, dim).powf(1.0 / alpha);
            }
            LevySpec::CompoundPoisson { intensity, ref law } => {
                if !(intensity > 0.0 && intensity.is_finite()) {
                    return Err(Error::InvalidModel(format!("intensity {intensity} must be positive")));
                }
                let ok = match *law {
                    JumpLaw::Exponential { rate } => rate > 0.0 && rate.is_finite(),
                    JumpLaw::Laplace { scale } => scale > 0.0 && scale.is_finite(),
                    JumpLaw::Normal { mean, std } => mean.is_finite() && std > 0.0 && std.is_finite(),
                };
                if !ok {
                    return Err(Error::InvalidModel(format!("invalid jump law {law:?}")));
                }
                m.jump_rate = intensity;
                m.compensator = m.partial_drift(0.0)?;
            }
            LevySpec::Tempered {
                alpha,
                lambda,
                eps_jump,
                gaussian_correction,
            } => {
                if !(alpha > 0.0 && alpha < 2.0 && lambda > 0.0 && eps_jump > 0.0 && eps_jump < 1.0) {
                    return Err(Error::InvalidModel(format!(
                        "tempered model needs α ∈ (0,2), λ > 0, ε ∈ (0,1); got {alpha}, {lambda}, {eps_jump}"
                    )));
                }
                let tol = Tolerance::default();
                // ∫_ε^∞ y^{−1−α}e^{−λy} dy with y = ε u^{−1/α}
                let tail = integrate(
                    &|u: f64| {
                        if u == 0.0 {
                            0.0
                        } else {
                            (-lambda * eps_jump * u.powf(-1.0 / alpha)).exp()
                        }
                    },
                    0.0,
                    1.0,
                    &tol,
                )?;
                m.jump_rate = 2.0 * tail.value * eps_jump.powf(-alpha) / alpha;
                if gaussian_correction {
                    let v = integrate(&|y: f64| y.powf(1.0 - alpha) * (-lambda * y).exp(), 0.0, eps_jump, &tol)?;
                    m.small_var = 2.0 * v.value;
                }
            }
        }
        Ok(m)
    }

    pub fn none(dim: usize) -> Self {
        Self::new(LevySpec::None { dim }).expect("valid")
    }

    pub fn alpha_stable(alpha: f64, dim: usize) -> Result<Self> {
        Self::new(LevySpec::AlphaStable { alpha, dim })
    }

    pub fn spec(&self) -> &LevySpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_jumps(&self) -> bool {
        !matches!(self.spec, LevySpec::None { .. })
    }

    pub fn is_symmetric(&self) -> bool {
        match &self.spec {
            LevySpec::CompoundPoisson { law, .. } => match law {
                JumpLaw::Exponential { .. } => false,
                JumpLaw::Laplace { .. } => true,
                JumpLaw::Normal { mean, .. } => *mean == 0.0,
            },
            _ => true,
        }
    }

    pub fn stable_alpha(&self) -> Option<f64> {
        match self.spec {
            LevySpec::AlphaStable { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// Density of ν with respect to Lebesgue measure on ℝ^d.
    pub fn density(&self, y: &[f64]) -> f64 {
        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        match &self.spec {
            LevySpec::None { .. } => 0.0,
            LevySpec::AlphaStable { alpha, dim } => r.powf(-(*dim as f64) - alpha),
            LevySpec::CompoundPoisson { intensity, law } => intensity * law_density(law, y[0]),
            LevySpec::Tempered { alpha, lambda, .. } => (-lambda * r).exp() * r.powf(-1.0 - alpha),
        }
    }

    /// `ν(B_R^c)`, closed form where available.
    pub fn tail_mass(&self, radius: f64) -> Result<f64> {
        Ok(match &self.spec {
            LevySpec::None { .. } => 0.0,
            LevySpec::AlphaStable { alpha, dim } => sphere_area(*dim) * radius.powf(-alpha) / alpha,
            LevySpec::CompoundPoisson { intensity, law } => {
                intensity
                    * match *law {
                        JumpLaw::Exponential { rate } => (-rate * radius).exp(),
                        JumpLaw::Laplace { scale } => (-radius / scale).exp(),
                        JumpLaw::Normal { mean, std } => {
                            let s = std * 2f64.sqrt();
                            0.5 * (libm::erfc((radius - mean) / s) + libm::erfc((radius + mean) / s))
                        }
                    }
            }
            LevySpec::Tempered { alpha, lambda, .. } => {
                let (a, l) = (*alpha, *lambda);
                let tail = integrate(
                    &|u: f64| {
                        if u == 0.0 {
                            0.0
                        } else {
                            (-l * radius * u.powf(-1.0 / a)).exp()
                        }
                    },
                    0.0,
                    1.0,
                    &Tolerance::default(),
                )?;
                2.0 * tail.value * radius.powf(-a) / a
            }
        })
    }

    /// `∫_{|y|>R} y ν(dy)`; zero for symmetric models.
    pub fn tail_first_moment(&self, radius: f64) -> Vec<f64> {
        if self.is_symmetric() {
            return vec![0.0; self.dim];
        }
        let LevySpec::CompoundPoisson { intensity, law } = &self.spec else {
            unreachable!("only compound Poisson models are asymmetric")
        };
        let v = match *law {
            JumpLaw::Exponential { rate } => (radius + 1.0 / rate) * (-rate * radius).exp(),
            JumpLaw::Normal { mean, std } => {
                let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
                let upper = (radius - mean) / std;
                let lower = (-radius - mean) / std;
                mean * 0.5 * libm::erfc(upper / 2f64.sqrt())
                    + std * pdf(upper)
                    + mean * 0.5 * libm::erfc(-lower / 2f64.sqrt())
                    - std * pdf(lower)
            }
            JumpLaw::Laplace { .. } => 0.0,
        };
        vec![intensity * v]
    }

    /// `b_r = ∫_{B_1∖B_r} y ν(dy)`, read as `−∫_{B_r∖B_1}` when `r > 1`.
    pub fn partial_drift(&self, r: f64) -> Result<Vec<f64>> {
        if !(r >= 0.0) {
            return Err(Error::InvalidModel(format!("radius {r} must be non-negative")));
        }
        if self.is_symmetric() || r == 1.0 {
            return Ok(vec![0.0; self.dim]);
        }
        let LevySpec::CompoundPoisson { intensity, law } = &self.spec else {
            unreachable!("only compound Poisson models are asymmetric")
        };
        let (lo, hi, sign) = if r < 1.0 { (r, 1.0, 1.0) } else { (1.0, r, -1.0) };
        let v = match *law {
            JumpLaw::Exponential { rate } => {
                // antiderivative of y·rate·e^{−rate y} is −(y + 1/rate)e^{−rate y}
                let f = |y: f64| -(y + 1.0 / rate) * (-rate * y).exp();
                f(hi) - f(lo)
            }
            _ => {
                let tol = Tolerance::default();
                let g = |y: f64| y * law_density(law, y);
                integrate(&g, lo, hi, &tol)?.value + integrate(&g, -hi, -lo, &tol)?.value
            }
        };
        Ok(vec![sign * intensity * v])
    }

    /// Rate of the jumps drawn by [`sample_jump`](Self::sample_jump).
    pub fn jump_rate(&self) -> f64 {
        self.jump_rate
    }

    pub fn small_jump_variance(&self) -> f64 {
        self.small_var
    }

    /// One jump from the normalised law of the simulated jumps.
    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.add_jump(rng, &mut out);
        out
    }

    /// Adds one simulated jump to `out`.
    pub fn add_jump<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.spec {
            LevySpec::CompoundPoisson { law, .. } => out[0] += sample_law(law, rng),
            LevySpec::Tempered {
                alpha,
                lambda,
                eps_jump,
                ..
            } => loop {
                let u: f64 = 1.0 - rng.random::<f64>();
                let y = eps_jump * u.powf(-1.0 / alpha);
                if rng.random::<f64>() < (-lambda * (y - eps_jump)).exp() {
                    out[0] += if rng.random::<bool>() { y } else { -y };
                    break;
                }
            },
            _ => {}
        }
    }

    /// The part of an increment not made of simulated jumps: the stable
    /// increment itself, or compensator drift plus small-jump Gaussian.
    pub fn sample_diffuse<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.add_diffuse(dt, rng, &mut out);
        out
    }

    /// Adds the non-jump part of an increment over `dt` to `out`.
    pub fn add_diffuse<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R, out: &mut [f64]) {
        match &self.spec {
            LevySpec::None { .. } => {}
            LevySpec::AlphaStable { alpha, dim } => {
                let scale = self.stable_scale * dt.powf(1.0 / alpha);
                add_stable(*alpha, *dim, scale, rng, out);
            }
            _ => {
                for (o, b) in out.iter_mut().zip(&self.compensator) {
                    *o -= b * dt;
                }
                if self.small_var > 0.0 {
                    let sd = (self.small_var * dt).sqrt();
                    for o in out.iter_mut() {
                        let z: f64 = StandardNormal.sample(rng);
                        *o += sd * z;
                    }
                }
            }
        }
    }

    /// One increment of `L` over `Δt`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> Vec<f64> {
        let mut inc = self.sample_diffuse(dt, rng);
        if self.jump_rate > 0.0 {
            let mut t: f64 = Exp1.sample(rng);
            t /= self.jump_rate;
            while t < dt {
                self.add_jump(rng, &mut inc);
                let e: f64 = Exp1.sample(rng);
                t += e / self.jump_rate;
            }
        }
        inc
    }
}

fn law_density(law: &JumpLaw, y: f64) -> f64 {
    match *law {
        JumpLaw::Exponential { rate } => {
            if y > 0.0 {
                rate * (-rate * y).exp()
            } else {
                0.0
            }
        }
        JumpLaw::Laplace { scale } => (-y.abs() / scale).exp() / (2.0 * scale),
        JumpLaw::Normal { mean, std } => {
            let z = (y - mean) / std;
            (-0.5 * z * z).exp() / (std * (2.0 * PI).sqrt())
        }
    }
}

fn sample_law<R: Rng + ?Sized>(law: &JumpLaw, rng: &mut R) -> f64 {
    match *law {
        JumpLaw::Exponential { rate } => {
            let e: f64 = Exp1.sample(rng);
            e / rate
        }
        JumpLaw::Laplace { scale } => {
            let e: f64 = Exp1.sample(rng);
            if rng.random::<bool>() {
                scale * e
            } else {
                -scale * e
            }
        }
        JumpLaw::Normal { mean, std } => {
            let z: f64 = StandardNormal.sample(rng);
            mean + std * z
        }
    }
}

/// Standard symmetric stable vector with `E e^{iξ·X} = e^{−|ξ|^α}`.
///
/// `d = 1` uses Chambers–Mallows–Stuck; `d ≥ 2` uses `√A·G` with `A`
/// positive (α/2)-stable (Kanter) and `G ~ N(0, 2I)`.
pub fn sample_stable<R: Rng + ?Sized>(alpha: f64, dim: usize, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    add_stable(alpha, dim, 1.0, rng, &mut out);
    out
}

fn add_stable<R: Rng + ?Sized>(alpha: f64, dim: usize, scale: f64, rng: &mut R, out: &mut [f64]) {
    if dim == 1 {
        let v = PI * (rng.random::<f64>() - 0.5);
        let w: f64 = Exp1.sample(rng);
        let x = (alpha * v).sin() / v.cos().powf(1.0 / alpha)
            * ((((1.0 - alpha) * v).cos()) / w).powf((1.0 - alpha) / alpha);
        out[0] += scale * x;
        return;
    }
    let a = positive_stable(0.5 * alpha, rng);
    let s = scale * (2.0 * a).sqrt();
    for o in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *o += s * z;
    }
}

/// Positive stable with `E e^{−sA} = e^{−s^a}`, `0 < a < 1`.
pub fn positive_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let u = PI * (1.0 - rng.random::<f64>());
    let w: f64 = Exp1.sample(rng);
    (a * u).sin() / u.sin().powf(1.0 / a) * (((1.0 - a) * u).sin() / w).powf((1.0 - a) / a)
}
