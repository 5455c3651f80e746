//! Euler–Maruyama simulation of the controlled jump diffusion
//! `dX = b(m(X)) dt + σ(m(X)) dW + dL` and its exit from a domain.
//!
//! Exit is detected on the skeleton: grid times `nΔt` plus the epochs of
//! explicitly simulated jumps, where the step is split. `τ` is the first
//! skeleton time `t > 0` with `X_t ∉ O`, `τ̂` the first with `X_t ∉ Ō`.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cadlag::{CadlagPath, PathBuilder, PathLiteral, Tail};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::levy::LevyModel;
use crate::rng::stream;

pub const DEFAULT_HORIZON: f64 = 50.0;
pub const DEFAULT_DT: f64 = 1e-3;

/// A running cost evaluated along the skeleton.
pub type CostRef<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PolicySpec {
    Constant {
        a: f64,
    },
    /// `clamp(a0 + gain·x, a̲, ā)`.
    ClampedAffine {
        a0: f64,
        gain: Vec<f64>,
    },
    /// Multilinear interpolation of `values` (row-major, last axis fastest)
    /// on the regular grid over `[lo, hi]` with `shape[i]` nodes on axis `i`,
    /// extended by clamping `x` into the grid box.
    Grid {
        lo: Vec<f64>,
        hi: Vec<f64>,
        shape: Vec<usize>,
        values: Vec<f64>,
    },
}

/// Markov policy `m: ℝ^d → [a̲, ā]` with a certified Lipschitz bound.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    spec: PolicySpec,
    dim: usize,
    a_lo: f64,
    a_hi: f64,
    lipschitz: f64,
}

impl Policy {
    pub fn new(spec: PolicySpec, dim: usize, a_lo: f64, a_hi: f64) -> Result<Self> {
        if !(a_lo.is_finite() && a_hi.is_finite() && a_lo <= a_hi) {
            return Err(Error::InvalidPolicy(format!("control range [{a_lo}, {a_hi}] is empty")));
        }
        let in_range = |a: f64| {
            if a.is_finite() && a >= a_lo && a <= a_hi {
                Ok(())
            } else {
                Err(Error::ControlOutOfRange { a, lo: a_lo, hi: a_hi })
            }
        };
        let lipschitz = match &spec {
            PolicySpec::Constant { a } => {
                in_range(*a)?;
                0.0
            }
            PolicySpec::ClampedAffine { a0, gain } => {
                if gain.len() != dim {
                    return Err(Error::dim(dim, gain.len()));
                }
                if !a0.is_finite() || gain.iter().any(|g| !g.is_finite()) {
                    return Err(Error::InvalidPolicy("non-finite affine coefficients".into()));
                }
                gain.iter().map(|g| g * g).sum::<f64>().sqrt()
            }
            PolicySpec::Grid { lo, hi, shape, values } => {
                if lo.len() != dim || hi.len() != dim || shape.len() != dim {
                    return Err(Error::dim(dim, shape.len()));
                }
                if shape.iter().any(|&n| n < 2) || lo.iter().zip(hi).any(|(l, h)| !(l < h)) {
                    return Err(Error::InvalidPolicy(
                        "grid needs ≥ 2 nodes and lo < hi on every axis".into(),
                    ));
                }
                if values.len() != shape.iter().product::<usize>() {
                    return Err(Error::InvalidPolicy(format!(
                        "grid has {} values, shape needs {}",
                        values.len(),
                        shape.iter().product::<usize>()
                    )));
                }
                for &v in values {
                    in_range(v)?;
                }
                grid_lipschitz(lo, hi, shape, values)
            }
        };
        Ok(Policy {
            spec,
            dim,
            a_lo,
            a_hi,
            lipschitz,
        })
    }

    pub fn constant(a: f64, dim: usize, a_lo: f64, a_hi: f64) -> Result<Self> {
        Self::new(PolicySpec::Constant { a }, dim, a_lo, a_hi)
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn range(&self) -> (f64, f64) {
        (self.a_lo, self.a_hi)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.spec, PolicySpec::Constant { .. })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.spec {
            PolicySpec::Constant { a } => *a,
            PolicySpec::ClampedAffine { a0, gain } => {
                let v = a0 + gain.iter().zip(x).map(|(g, v)| g * v).sum::<f64>();
                v.clamp(self.a_lo, self.a_hi)
            }
            PolicySpec::Grid { lo, hi, shape, values } => grid_eval(lo, hi, shape, values, x),
        }
    }
}

fn grid_cell(lo: f64, hi: f64, n: usize, x: f64) -> (usize, f64) {
    let h = (hi - lo) / (n - 1) as f64;
    let u = ((x.clamp(lo, hi) - lo) / h).min((n - 1) as f64);
    let i = (u.floor() as usize).min(n - 2);
    (i, u - i as f64)
}

fn grid_eval(lo: &[f64], hi: &[f64], shape: &[usize], values: &[f64], x: &[f64]) -> f64 {
    let d = shape.len();
    let mut total = 0.0;
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = 0;
        for k in 0..d {
            let (i, f) = grid_cell(lo[k], hi[k], shape[k], x[k]);
            let up = (corner >> k) & 1 == 1;
            w *= if up { f } else { 1.0 - f };
            idx = idx * shape[k] + i + usize::from(up);
        }
        if w != 0.0 {
            total += w * values[idx];
        }
    }
    total
}

/// `(Σ_k L_k²)^{1/2}` with `L_k` the largest difference quotient along axis `k`.
fn grid_lipschitz(lo: &[f64], hi: &[f64], shape: &[usize], values: &[f64]) -> f64 {
    let d = shape.len();
    let mut strides = vec![1usize; d];
    for k in (0..d.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    let mut sum = 0.0;
    for k in 0..d {
        let h = (hi[k] - lo[k]) / (shape[k] - 1) as f64;
        let mut lk: f64 = 0.0;
        for (i, v) in values.iter().enumerate() {
            if (i / strides[k]) % shape[k] + 1 < shape[k] {
                lk = lk.max((values[i + strides[k]] - v).abs() / h);
            }
        }
        sum += lk * lk;
    }
    sum.sqrt()
}

/// `b(a) = b0 + a·b1`, `σ(a) = S0 + a·S1` with `σ ∈ ℝ^{d×k}` (rows of
/// `sigma0`/`sigma1`). Empty `b1`/`sigma*` mean zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    pub a_lo: f64,
    pub a_hi: f64,
    pub b0: Vec<f64>,
    #[serde(default)]
    pub b1: Vec<f64>,
    #[serde(default)]
    pub sigma0: Vec<Vec<f64>>,
    #[serde(default)]
    pub sigma1: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    spec: CoefficientSpec,
    dim: usize,
    noise_dim: usize,
    b1: Vec<f64>,
    s0: Vec<f64>,
    s1: Vec<f64>,
}

fn flatten(rows: &[Vec<f64>], d: usize, k: usize) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Ok(vec![0.0; d * k]);
    }
    if rows.len() != d || rows.iter().any(|r| r.len() != k) {
        return Err(Error::Config(format!("σ must be a {d}×{k} matrix")));
    }
    Ok(rows.concat())
}

impl Coefficients {
    pub fn new(spec: CoefficientSpec) -> Result<Self> {
        let d = spec.b0.len();
        if d == 0 {
            return Err(Error::Config("b0 must be non-empty".into()));
        }
        if !(spec.a_lo.is_finite() && spec.a_hi.is_finite() && spec.a_lo <= spec.a_hi) {
            return Err(Error::Config(format!(
                "control range [{}, {}] is empty",
                spec.a_lo, spec.a_hi
            )));
        }
        let b1 = if spec.b1.is_empty() {
            vec![0.0; d]
        } else {
            spec.b1.clone()
        };
        if b1.len() != d {
            return Err(Error::dim(d, b1.len()));
        }
        let k = spec.sigma0.first().or(spec.sigma1.first()).map_or(0, Vec::len);
        let s0 = flatten(&spec.sigma0, d, k)?;
        let s1 = flatten(&spec.sigma1, d, k)?;
        if spec.b0.iter().chain(&b1).chain(&s0).chain(&s1).any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite coefficient".into()));
        }
        Ok(Coefficients {
            spec,
            dim: d,
            noise_dim: k,
            b1,
            s0,
            s1,
        })
    }

    /// `b(a) = b0 + a·b1`, `σ(a) = s0 + a·s1` in one dimension.
    pub fn scalar(a_lo: f64, a_hi: f64, b0: f64, b1: f64, s0: f64, s1: f64) -> Result<Self> {
        Self::new(CoefficientSpec {
            a_lo,
            a_hi,
            b0: vec![b0],
            b1: vec![b1],
            sigma0: vec![vec![s0]],
            sigma1: vec![vec![s1]],
        })
    }

    pub fn spec(&self) -> &CoefficientSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `σ ≡ 0` for every control.
    pub fn is_deterministic(&self) -> bool {
        self.s0.iter().chain(&self.s1).all(|&v| v == 0.0)
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn range(&self) -> (f64, f64) {
        (self.spec.a_lo, self.spec.a_hi)
    }

    pub fn check_control(&self, a: f64) -> Result<()> {
        if a >= self.spec.a_lo && a <= self.spec.a_hi {
            Ok(())
        } else {
            Err(Error::ControlOutOfRange {
                a,
                lo: self.spec.a_lo,
                hi: self.spec.a_hi,
            })
        }
    }

    pub fn drift(&self, a: f64) -> Vec<f64> {
        let mut b = vec![0.0; self.dim];
        self.drift_into(a, &mut b);
        b
    }

    fn drift_into(&self, a: f64, out: &mut [f64]) {
        for ((o, b0), b1) in out.iter_mut().zip(&self.spec.b0).zip(&self.b1) {
            *o = b0 + a * b1;
        }
    }

    /// `σ(a)` row-major, `d × k`.
    pub fn sigma(&self, a: f64) -> Vec<f64> {
        let mut s = vec![0.0; self.dim * self.noise_dim];
        self.sigma_into(a, &mut s);
        s
    }

    fn sigma_into(&self, a: f64, out: &mut [f64]) {
        for ((o, s0), s1) in out.iter_mut().zip(&self.s0).zip(&self.s1) {
            *o = s0 + a * s1;
        }
    }

    /// `A(a) = σ(a)σ(a)ᵀ`, row-major `d × d`.
    pub fn diffusion_matrix(&self, a: f64) -> Vec<f64> {
        let (d, k) = (self.dim, self.noise_dim);
        let s = self.sigma(a);
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                m[i * d + j] = (0..k).map(|l| s[i * k + l] * s[j * k + l]).sum();
            }
        }
        m
    }

    /// Lipschitz constant of `a ↦ (b(a), σ(a))` in the Euclidean/Frobenius norm.
    pub fn lipschitz(&self) -> f64 {
        (self.b1.iter().chain(&self.s1).map(|v| v * v).sum::<f64>()).sqrt()
    }
}

/// Everything `simulate` needs besides the start point and the stream.
#[derive(Clone, Debug)]
pub struct SimSpec {
    pub domain: Domain,
    pub policy: Policy,
    pub coeffs: Coefficients,
    pub levy: LevyModel,
    pub dt: f64,
    pub horizon: f64,
    /// Rate `q` of the discount `e^{−qs}`.
    pub discount_rate: f64,
    /// Keep the skeleton as a [`CadlagPath`] in each sample.
    pub record_path: bool,
}

impl SimSpec {
    pub fn new(
        domain: Domain,
        policy: Policy,
        coeffs: Coefficients,
        levy: LevyModel,
        dt: f64,
        horizon: f64,
    ) -> Result<Self> {
        let d = domain.dim();
        for got in [policy.dim(), coeffs.dim(), levy.dim()] {
            if got != d {
                return Err(Error::dim(d, got));
            }
        }
        if !(dt > 0.0 && dt.is_finite() && horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!(
                "need dt > 0 and finite horizon > 0, got {dt}, {horizon}"
            )));
        }
        let (lo, hi) = policy.range();
        coeffs.check_control(lo)?;
        coeffs.check_control(hi)?;
        Ok(SimSpec {
            domain,
            policy,
            coeffs,
            levy,
            dt,
            horizon,
            discount_rate: 1.0,
            record_path: false,
        })
    }

    pub fn with_discount(mut self, q: f64) -> Result<Self> {
        if !(q >= 0.0 && q.is_finite()) {
            return Err(Error::Config(format!("discount rate must be non-negative, got {q}")));
        }
        self.discount_rate = q;
        Ok(self)
    }

    pub fn recording(mut self, on: bool) -> Self {
        self.record_path = on;
        self
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }
}

/// One simulated trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct ExitSample {
    /// Skeleton as a step path on `[0, τ̂ + Δt)`, when requested.
    pub trajectory: Option<CadlagPath>,
    pub tau: f64,
    pub exit_point: Vec<f64>,
    pub tau_hat: f64,
    /// `∫_0^τ e^{−qs} ℓ_j(X_s) ds` for each supplied cost `ℓ_j`.
    pub discounted_costs: Vec<f64>,
    /// Terminal weight `e^{−qτ}`, or 0 when censored.
    pub discount: f64,
    pub exited_by_jump: bool,
    /// No exit from `O` before the horizon; then `τ` is the horizon.
    pub censored: bool,
}

impl ExitSample {
    pub fn terminal_discount(&self) -> f64 {
        self.discount
    }
}

struct Run<'a> {
    spec: &'a SimSpec,
    costs: &'a [CostRef<'a>],
    x: Vec<f64>,
    next: Vec<f64>,
    b: Vec<f64>,
    sig: Vec<f64>,
    xi: Vec<f64>,
    t: f64,
    lx: Vec<f64>,
    acc: Vec<f64>,
    accumulate: bool,
    stable: bool,
    /// `(h, w0, w1, e^{−qh})` for the last step length.
    weights: (f64, f64, f64, f64),
    /// `e^{−qt}`, carried multiplicatively while costs accumulate.
    disc: f64,
    builder: Option<PathBuilder>,
    trace: Option<Vec<f64>>,
}

enum Stop {
    Exit { by_jump: bool },
    Horizon,
}

impl<'a> Run<'a> {
    fn new(spec: &'a SimSpec, costs: &'a [CostRef<'a>], x0: &[f64]) -> Self {
        let d = spec.dim();
        let k = if spec.coeffs.is_deterministic() {
            0
        } else {
            spec.coeffs.noise_dim()
        };
        let mut run = Run {
            spec,
            costs,
            x: x0.to_vec(),
            next: vec![0.0; d],
            b: vec![0.0; d],
            sig: vec![0.0; d * spec.coeffs.noise_dim()],
            xi: vec![0.0; k],
            t: 0.0,
            lx: costs.iter().map(|c| c(x0)).collect(),
            acc: vec![0.0; costs.len()],
            accumulate: true,
            stable: spec.levy.stable_alpha().is_some(),
            weights: (f64::NAN, 0.0, 0.0, 1.0),
            disc: 1.0,
            builder: spec.record_path.then(|| PathBuilder::new(x0)),
            trace: None,
        };
        if spec.policy.is_constant() {
            run.set_coeffs();
        }
        run
    }

    fn set_coeffs(&mut self) {
        let a = self.spec.policy.eval(&self.x);
        self.spec.coeffs.drift_into(a, &mut self.b);
        self.spec.coeffs.sigma_into(a, &mut self.sig);
    }

    fn inside(&self, closed: bool) -> bool {
        let m = self.spec.domain.min_constraint(&self.x);
        if closed {
            m >= 0.0
        } else {
            m > 0.0
        }
    }

    /// Euler move to `t1`; returns whether the drift-diffusion part alone
    /// stayed in `O` (only meaningful for stable noise).
    fn diffuse_to<R: Rng + ?Sized>(&mut self, t1: f64, rng: &mut R) -> Result<bool> {
        let h = t1 - self.t;
        if !self.spec.policy.is_constant() {
            self.set_coeffs();
        }
        let k = self.xi.len();
        for (n, (x, b)) in self.next.iter_mut().zip(self.x.iter().zip(&self.b)) {
            *n = x + b * h;
        }
        if k > 0 {
            let sq = h.sqrt();
            for z in self.xi.iter_mut() {
                *z = StandardNormal.sample(rng);
            }
            for (i, n) in self.next.iter_mut().enumerate() {
                let row = &self.sig[i * k..(i + 1) * k];
                *n += sq * row.iter().zip(&self.xi).map(|(s, z)| s * z).sum::<f64>();
            }
        }
        let cont_inside = !self.stable || self.spec.domain.min_constraint(&self.next) > 0.0;
        self.spec.levy.add_diffuse(h, rng, &mut self.next);
        if self.next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: t1 });
        }
        self.advance(t1);
        Ok(cont_inside)
    }

    /// Moves the state to `self.next` at `t1`, integrating the costs.
    fn advance(&mut self, t1: f64) {
        let h = t1 - self.t;
        if self.accumulate && !self.costs.is_empty() {
            let q = self.spec.discount_rate;
            if self.weights.0 != h {
                self.weights = if q == 0.0 {
                    (h, 0.5 * h, 0.5 * h, 1.0)
                } else {
                    // ∫_0^h e^{−qu}(h−u)/h du and ∫_0^h e^{−qu} u/h du
                    let z = q * h;
                    let em = (-z).exp_m1();
                    (h, (z + em) / (z * q), (-em - z * (-z).exp()) / (z * q), (-z).exp())
                };
            }
            let (_, w0, w1, decay) = self.weights;
            let e = self.disc;
            self.disc *= decay;
            for ((acc, l0), c) in self.acc.iter_mut().zip(self.lx.iter_mut()).zip(self.costs) {
                let l1 = c(&self.next);
                *acc += e * (*l0 * w0 + l1 * w1);
                *l0 = l1;
            }
        }
        std::mem::swap(&mut self.x, &mut self.next);
        self.t = t1;
        self.mark(false);
    }

    fn mark(&mut self, same_time: bool) {
        if let Some(b) = self.builder.take() {
            self.builder = Some(if same_time {
                b.jump(&self.x)
            } else {
                b.hold_then_jump(self.t, &self.x)
            });
        }
        if let Some(tr) = self.trace.as_mut() {
            tr.extend_from_slice(&self.x);
        }
    }

    fn jump<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.spec.levy.add_jump(rng, &mut self.x);
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: self.t });
        }
        if self.accumulate {
            for (l, c) in self.lx.iter_mut().zip(self.costs) {
                *l = c(&self.x);
            }
        }
        self.mark(true);
        Ok(())
    }

    /// Steps until the state leaves `O` (or `Ō` when `closed`), or `t_end`.
    fn run_until<R: Rng + ?Sized>(&mut self, closed: bool, t_end: f64, exits: bool, rng: &mut R) -> Result<Stop> {
        let dt = self.spec.dt;
        let rate = self.spec.levy.jump_rate();
        let mut next_jump = if rate > 0.0 {
            let e: f64 = Exp1.sample(rng);
            self.t + e / rate
        } else {
            f64::INFINITY
        };
        let mut n = (self.t / dt).round() as u64;
        while self.t < t_end {
            n += 1;
            let step_end = (n as f64 * dt).min(t_end);
            while next_jump < step_end {
                if next_jump > self.t {
                    self.diffuse_to(next_jump, rng)?;
                    if exits && !self.inside(closed) {
                        return Ok(Stop::Exit { by_jump: false });
                    }
                }
                self.jump(rng)?;
                if exits && !self.inside(closed) {
                    return Ok(Stop::Exit { by_jump: true });
                }
                let e: f64 = Exp1.sample(rng);
                next_jump += e / rate;
            }
            if step_end > self.t {
                let cont_inside = self.diffuse_to(step_end, rng)?;
                if exits && !self.inside(closed) {
                    return Ok(Stop::Exit {
                        by_jump: self.stable && cont_inside,
                    });
                }
            }
        }
        Ok(Stop::Horizon)
    }
}

/// Simulates one trajectory from `x0 ∈ Ō` and integrates the running costs
/// up to `τ`. From `x0 ∈ ∂O` it returns `τ = τ̂ = 0` at `x0` without drawing.
pub fn simulate<R: Rng + ?Sized>(x0: &[f64], spec: &SimSpec, costs: &[CostRef<'_>], rng: &mut R) -> Result<ExitSample> {
    let d = spec.dim();
    if x0.len() != d {
        return Err(Error::dim(d, x0.len()));
    }
    if !spec.domain.contains_closed(x0)? {
        return Err(Error::StartOutsideDomain(x0.to_vec()));
    }
    if !spec.domain.contains_open(x0)? {
        let trajectory = if spec.record_path {
            Some(CadlagPath::constant(x0, spec.dt)?)
        } else {
            None
        };
        return Ok(ExitSample {
            trajectory,
            tau: 0.0,
            exit_point: x0.to_vec(),
            tau_hat: 0.0,
            discounted_costs: vec![0.0; costs.len()],
            discount: 1.0,
            exited_by_jump: false,
            censored: false,
        });
    }
    let mut run = Run::new(spec, costs, x0);
    let stop = run.run_until(false, spec.horizon, true, rng)?;
    let tau = run.t;
    let exit_point = run.x.clone();
    let (censored, exited_by_jump) = match stop {
        Stop::Exit { by_jump } => (false, by_jump),
        Stop::Horizon => (true, false),
    };
    let tau_hat = if censored || !run.inside(true) {
        tau
    } else {
        run.accumulate = false;
        match run.run_until(true, spec.horizon, true, rng)? {
            Stop::Exit { .. } => run.t,
            Stop::Horizon => spec.horizon,
        }
    };
    let trajectory = match run.builder.take() {
        Some(b) => Some(b.finish(Tail::Slope(vec![0.0; d]), run.t + spec.dt)?),
        None => None,
    };
    Ok(ExitSample {
        trajectory,
        tau,
        exit_point,
        tau_hat,
        discounted_costs: run.acc,
        discount: if censored {
            0.0
        } else {
            (-spec.discount_rate * tau).exp()
        },
        exited_by_jump,
        censored,
    })
}

/// `N` samples, sample `i` drawn from stream `i` of `seed`.
pub fn batch_simulate(
    x0: &[f64],
    spec: &SimSpec,
    costs: &[CostRef<'_>],
    n: usize,
    seed: u64,
) -> Result<Vec<ExitSample>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| simulate(x0, spec, costs, &mut stream(seed, i)))
        .collect()
}

/// Skeleton states (flat, one `d`-block per skeleton time, starting with
/// `x0`) of the unstopped SDE on `[0, t_end]`. The number of draws does not
/// depend on the state, so two starts on clones of one stream are coupled.
pub fn simulate_free<R: Rng + ?Sized>(x0: &[f64], spec: &SimSpec, t_end: f64, rng: &mut R) -> Result<Vec<f64>> {
    if x0.len() != spec.dim() {
        return Err(Error::dim(spec.dim(), x0.len()));
    }
    let mut run = Run::new(spec, &[], x0);
    run.builder = None;
    run.trace = Some(x0.to_vec());
    run.run_until(false, t_end, false, rng)?;
    Ok(run.trace.take().unwrap_or_default())
}

/// `sup_{s ≤ t_end} |X^y_s − X^x_s|²` on the skeleton under shared noise.
pub fn coupled_sup_gap<R: Rng + Clone>(x: &[f64], y: &[f64], spec: &SimSpec, t_end: f64, rng: &mut R) -> Result<f64> {
    let mut other = rng.clone();
    let a = simulate_free(x, spec, t_end, rng)?;
    let b = simulate_free(y, spec, t_end, &mut other)?;
    let d = spec.dim();
    Ok(a.chunks(d)
        .zip(b.chunks(d))
        .map(|(p, q)| p.iter().zip(q).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Fraction of `n` paths started at `x ∈ ∂O` whose skeleton leaves `Ō`
/// by time `delta`: a statistical probe of `P(τ̂ = 0) = 1`.
pub fn boundary_exit_probe(x: &[f64], spec: &SimSpec, delta: f64, n: usize, seed: u64) -> Result<f64> {
    if !spec.domain.on_boundary(x)? {
        return Err(Error::Config("probe start must lie on the boundary".into()));
    }
    let hits: usize = (0..n as u64)
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let mut run = Run::new(spec, &[], x);
            run.builder = None;
            let stop = run.run_until(true, delta.min(spec.horizon), true, &mut stream(seed, i))?;
            Ok(usize::from(matches!(stop, Stop::Exit { .. })))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(hits as f64 / n as f64)
}

/// One JSON-lines archive record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub index: u64,
    pub tau: f64,
    pub tau_hat: f64,
    pub exit_point: Vec<f64>,
    pub exited_by_jump: bool,
    pub censored: bool,
    pub discounted_costs: Vec<f64>,
    pub discount: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathLiteral>,
}

impl ArchiveRecord {
    pub fn from_sample(index: u64, s: &ExitSample) -> Self {
        ArchiveRecord {
            index,
            tau: s.tau,
            tau_hat: s.tau_hat,
            exit_point: s.exit_point.clone(),
            exited_by_jump: s.exited_by_jump,
            censored: s.censored,
            discounted_costs: s.discounted_costs.clone(),
            discount: s.discount,
            trajectory: s.trajectory.as_ref().map(CadlagPath::to_literal),
        }
    }

    pub fn to_sample(&self) -> Result<ExitSample> {
        Ok(ExitSample {
            trajectory: self.trajectory.as_ref().map(CadlagPath::from_literal).transpose()?,
            tau: self.tau,
            exit_point: self.exit_point.clone(),
            tau_hat: self.tau_hat,
            discounted_costs: self.discounted_costs.clone(),
            discount: self.discount,
            exited_by_jump: self.exited_by_jump,
            censored: self.censored,
        })
    }
}

pub fn write_archive<W: Write>(samples: &[ExitSample], mut w: W) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        let line = serde_json::to_string(&ArchiveRecord::from_sample(i as u64, s))
            .map_err(|e| Error::Config(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

pub fn read_archive<R: BufRead>(r: R) -> Result<Vec<ArchiveRecord>> {
    r.lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| {
            let l = l.map_err(|e| Error::Config(e.to_string()))?;
            serde_json::from_str(&l).map_err(|e| Error::Config(format!("archive record: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entrance::{entrance_time_in, Convention, Target};

    fn drift_spec(b: f64, s: f64, dt: f64) -> SimSpec {
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
    fn frozen_start_is_censored_and_constant() {
        let spec = drift_spec(0.0, 0.0, 0.01).recording(true);
        let s = simulate(&[0.3], &spec, &[], &mut stream(0, 0)).unwrap();
        assert!(s.censored);
        assert_eq!(s.tau, DEFAULT_HORIZON);
        let p = s.trajectory.unwrap();
        assert_eq!(p.sup_norm(DEFAULT_HORIZON).unwrap(), 0.3);
    }

    #[test]
    fn deterministic_drift_exit() {
        let dt = 1e-3;
        let spec = drift_spec(1.0, 0.0, dt).recording(true);
        let s = simulate(&[0.0], &spec, &[], &mut stream(0, 0)).unwrap();
        assert!((s.tau - 1.0).abs() <= dt + 1e-12);
        assert!((s.exit_point[0] - 1.0).abs() <= dt + 1e-12);
        assert!(s.exit_point[0] >= 1.0 && !s.exited_by_jump && !s.censored);
        assert!(s.tau <= s.tau_hat);
        let p = s.trajectory.unwrap();
        let t = entrance_time_in(&p, &spec.domain, Target::OpenComplement, Convention::Positive).unwrap();
        assert_eq!(t, s.tau);
    }

    #[test]
    fn unit_running_cost_integrates_exactly() {
        let spec = drift_spec(1.0, 0.0, 1e-3);
        let one = |_: &[f64]| 1.0;
        let s = simulate(&[0.5], &spec, &[&one], &mut stream(0, 0)).unwrap();
        assert!((s.discounted_costs[0] - (1.0 - (-s.tau).exp())).abs() < 1e-12);
    }

    #[test]
    fn discount_rate_weights() {
        let q = 0.3;
        let spec = drift_spec(1.0, 0.0, 1e-3).with_discount(q).unwrap();
        let one = |_: &[f64]| 1.0;
        let s = simulate(&[0.5], &spec, &[&one], &mut stream(0, 0)).unwrap();
        assert!((s.discounted_costs[0] - (1.0 - (-q * s.tau).exp()) / q).abs() < 1e-12);
        assert!((s.discount - (-q * s.tau).exp()).abs() < 1e-15);
        let flat = drift_spec(1.0, 0.0, 1e-3).with_discount(0.0).unwrap();
        let s = simulate(&[0.5], &flat, &[&one], &mut stream(0, 0)).unwrap();
        assert!((s.discounted_costs[0] - s.tau).abs() < 1e-12);
    }

    #[test]
    fn boundary_start_exits_immediately() {
        let spec = drift_spec(0.0, 1.0, 1e-3);
        let s = simulate(&[1.0], &spec, &[], &mut stream(0, 0)).unwrap();
        assert_eq!((s.tau, s.tau_hat), (0.0, 0.0));
        assert!(simulate(&[1.5], &spec, &[], &mut stream(0, 0)).is_err());
        let frac = boundary_exit_probe(&[1.0], &spec, 0.1, 200, 3).unwrap();
        assert!(frac > 0.9, "{frac}");
    }

    #[test]
    fn pre_exit_states_are_inside() {
        let spec = drift_spec(0.3, 1.0, 1e-2).recording(true);
        for i in 0..20 {
            let s = simulate(&[0.2], &spec, &[], &mut stream(5, i)).unwrap();
            let p = s.trajectory.unwrap();
            for (j, &t) in p.breakpoints().iter().enumerate() {
                if t < s.tau {
                    assert!(spec.domain.contains_open(p.right_at(j)).unwrap());
                }
            }
            assert!(!spec.domain.contains_open(&s.exit_point).unwrap());
        }
    }

    #[test]
    fn stable_noise_exits_by_jump() {
        let spec = SimSpec::new(
            Domain::cube(2, 1.0).unwrap(),
            Policy::constant(0.0, 2, 0.0, 0.0).unwrap(),
            Coefficients::new(CoefficientSpec {
                a_lo: 0.0,
                a_hi: 0.0,
                b0: vec![0.0, 0.0],
                b1: vec![],
                sigma0: vec![],
                sigma1: vec![],
            })
            .unwrap(),
            LevyModel::alpha_stable(0.5, 2).unwrap(),
            1e-3,
            DEFAULT_HORIZON,
        )
        .unwrap();
        let samples = batch_simulate(&[0.0, 0.0], &spec, &[], 2000, 9).unwrap();
        let by_jump = samples.iter().filter(|s| s.exited_by_jump).count();
        let outside_closure = samples
            .iter()
            .filter(|s| !spec.domain.contains_closed(&s.exit_point).unwrap())
            .count();
        assert!(by_jump > 1900 && outside_closure > 1900);
    }

    #[test]
    fn compound_poisson_jump_epochs() {
        let levy = LevyModel::new(crate::levy::LevySpec::CompoundPoisson {
            intensity: 2.0,
            law: crate::levy::JumpLaw::Laplace { scale: 0.8 },
        })
        .unwrap();
        let spec = SimSpec::new(
            Domain::interval(-1.0, 1.0).unwrap(),
            Policy::constant(0.0, 1, 0.0, 0.0).unwrap(),
            Coefficients::scalar(0.0, 0.0, 0.0, 0.0, 0.0, 0.0).unwrap(),
            levy,
            0.1,
            DEFAULT_HORIZON,
        )
        .unwrap()
        .recording(true);
        for i in 0..50 {
            let s = simulate(&[0.0], &spec, &[], &mut stream(2, i)).unwrap();
            assert!(s.exited_by_jump);
            let p = s.trajectory.unwrap();
            let t = entrance_time_in(&p, &spec.domain, Target::OpenComplement, Convention::Positive).unwrap();
            assert_eq!(t, s.tau);
        }
    }

    #[test]
    fn batch_is_prefix_stable() {
        let spec = drift_spec(0.0, 1.0, 1e-2);
        let a = batch_simulate(&[0.0], &spec, &[], 8, 4).unwrap();
        let b = batch_simulate(&[0.0], &spec, &[], 16, 4).unwrap();
        assert_eq!(a[..], b[..8]);
        assert_eq!(a[0], simulate(&[0.0], &spec, &[], &mut stream(4, 0)).unwrap());
    }

    #[test]
    fn archive_round_trip() {
        let spec = drift_spec(0.2, 1.0, 1e-2).recording(true);
        let a = batch_simulate(&[0.0], &spec, &[], 4, 1).unwrap();
        let mut buf = Vec::new();
        write_archive(&a, &mut buf).unwrap();
        let back: Vec<ExitSample> = read_archive(&buf[..])
            .unwrap()
            .iter()
            .map(|r| r.to_sample().unwrap())
            .collect();
        assert_eq!(a, back);
    }

    #[test]
    fn grid_policy_interpolates_and_bounds_slope() {
        let p = Policy::new(
            PolicySpec::Grid {
                lo: vec![0.0, 0.0],
                hi: vec![1.0, 1.0],
                shape: vec![2, 3],
                values: vec![0.0, 0.5, 1.0, 0.0, 0.5, 1.0],
            },
            2,
            0.0,
            1.0,
        )
        .unwrap();
        assert!((p.eval(&[0.3, 0.25]) - 0.25).abs() < 1e-15);
        assert_eq!(p.eval(&[5.0, 5.0]), 1.0);
        assert!((p.lipschitz() - 1.0).abs() < 1e-15);
        let bad = PolicySpec::Constant { a: 2.0 };
        assert!(matches!(
            Policy::new(bad, 1, 0.0, 1.0),
            Err(Error::ControlOutOfRange { .. })
        ));
    }

    #[test]
    fn coefficient_slopes_within_lipschitz_bound() {
        let c = Coefficients::new(CoefficientSpec {
            a_lo: -1.0,
            a_hi: 1.0,
            b0: vec![0.1, 0.0],
            b1: vec![1.0, -2.0],
            sigma0: vec![vec![1.0], vec![0.0]],
            sigma1: vec![vec![0.5], vec![0.25]],
        })
        .unwrap();
        let l = c.lipschitz();
        for i in 0..20 {
            let a = -1.0 + 0.1 * i as f64;
            let h = 0.05;
            let db: f64 = c
                .drift(a + h)
                .iter()
                .zip(c.drift(a))
                .map(|(u, v)| (u - v).powi(2))
                .sum();
            let ds: f64 = c
                .sigma(a + h)
                .iter()
                .zip(c.sigma(a))
                .map(|(u, v)| (u - v).powi(2))
                .sum();
            assert!((db + ds).sqrt() / h <= l + 1e-12);
        }
        let m = c.diffusion_matrix(1.0);
        assert_eq!(m, vec![2.25, 0.375, 0.375, 0.0625]);
    }

    #[test]
    fn coupled_runs_share_noise() {
        let spec = drift_spec(0.0, 1.0, 1e-2);
        let g = coupled_sup_gap(&[0.0], &[0.1], &spec, 1.0, &mut stream(0, 0)).unwrap();
        assert!((g - 0.01).abs() < 1e-15);
    }
}
