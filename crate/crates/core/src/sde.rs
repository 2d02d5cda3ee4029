//! Drift registry and Euler solutions of `X(t) = x0 + ∫ b(X) ds + σ B(t)`.

use serde::{Deserialize, Serialize};

use crate::fbm::{FbmPath, TimeGrid};
use crate::quadrature::gauss_legendre;
use crate::{alpha_h, check_hurst, Error, Result};

/// Built-in drift functions, each with certified bounds `m ≤ b' ≤ M` and
/// `‖b''‖∞`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum DriftModel {
    /// `b(x) = μ x`.
    Linear { mu: f64 },
    /// `b(x) = −θ x + a sin x`.
    DampedSine { theta: f64, a: f64 },
    /// `b(x) = −θ x + a tanh x`.
    ShiftedTanh { theta: f64, a: f64 },
}

/// `max_x sech²(x) tanh(x) = 2 / (3√3)`.
const SECH2_TANH_MAX: f64 = 0.384_900_179_459_750_5;

impl DriftModel {
    /// Looks a model up by registry name and positional parameters.
    pub fn from_name(name: &str, params: &[f64]) -> Result<Self> {
        let arity = |k: usize| {
            if params.len() == k {
                Ok(())
            } else {
                Err(Error::Domain(format!("drift `{name}` takes {k} parameter(s), got {}", params.len())))
            }
        };
        let model = match name {
            "linear" | "ou" => {
                arity(1)?;
                DriftModel::Linear { mu: params[0] }
            }
            "zero" => {
                arity(0)?;
                DriftModel::Linear { mu: 0.0 }
            }
            "damped_sine" => {
                arity(2)?;
                DriftModel::DampedSine { theta: params[0], a: params[1] }
            }
            "shifted_tanh" => {
                arity(2)?;
                DriftModel::ShiftedTanh { theta: params[0], a: params[1] }
            }
            _ => {
                return Err(Error::Domain(format!(
                    "unknown drift `{name}`; known: linear, zero, damped_sine, shifted_tanh"
                )))
            }
        };
        if model.params().iter().all(|p| p.is_finite()) {
            Ok(model)
        } else {
            Err(Error::Domain(format!("drift `{name}` has non-finite parameters")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DriftModel::Linear { .. } => "linear",
            DriftModel::DampedSine { .. } => "damped_sine",
            DriftModel::ShiftedTanh { .. } => "shifted_tanh",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            DriftModel::Linear { mu } => vec![mu],
            DriftModel::DampedSine { theta, a } | DriftModel::ShiftedTanh { theta, a } => vec![theta, a],
        }
    }

    pub fn b(&self, x: f64) -> f64 {
        match *self {
            DriftModel::Linear { mu } => mu * x,
            DriftModel::DampedSine { theta, a } => -theta * x + a * x.sin(),
            DriftModel::ShiftedTanh { theta, a } => -theta * x + a * x.tanh(),
        }
    }

    pub fn b_prime(&self, x: f64) -> f64 {
        match *self {
            DriftModel::Linear { mu } => mu,
            DriftModel::DampedSine { theta, a } => -theta + a * x.cos(),
            DriftModel::ShiftedTanh { theta, a } => {
                let c = x.cosh();
                -theta + a / (c * c)
            }
        }
    }

    pub fn b_second(&self, x: f64) -> f64 {
        match *self {
            DriftModel::Linear { .. } => 0.0,
            DriftModel::DampedSine { a, .. } => -a * x.sin(),
            DriftModel::ShiftedTanh { a, .. } => {
                let c = x.cosh();
                -2.0 * a * x.tanh() / (c * c)
            }
        }
    }

    /// Certified `(m, M)` with `m ≤ b' ≤ M` on ℝ.
    pub fn derivative_bounds(&self) -> (f64, f64) {
        match *self {
            DriftModel::Linear { mu } => (mu, mu),
            DriftModel::DampedSine { theta, a } => (-theta - a.abs(), -theta + a.abs()),
            DriftModel::ShiftedTanh { theta, a } => {
                if a >= 0.0 {
                    (-theta, -theta + a)
                } else {
                    (-theta + a, -theta)
                }
            }
        }
    }

    /// Certified `‖b''‖∞`.
    pub fn second_derivative_sup(&self) -> f64 {
        match *self {
            DriftModel::Linear { .. } => 0.0,
            DriftModel::DampedSine { a, .. } => a.abs(),
            DriftModel::ShiftedTanh { a, .. } => 2.0 * a.abs() * SECH2_TANH_MAX,
        }
    }

    /// Lipschitz constant of `b`, `max(|m|, |M|)`.
    pub fn lipschitz(&self) -> f64 {
        let (m, big_m) = self.derivative_bounds();
        m.abs().max(big_m.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdeConfig {
    pub drift: DriftModel,
    pub x0: f64,
    pub sigma: f64,
    pub grid: TimeGrid,
    pub hurst: f64,
}

impl SdeConfig {
    /// `σ = 0` is accepted (deterministic flow); `x0 = 0` is accepted as well.
    pub fn new(drift: DriftModel, x0: f64, sigma: f64, grid: TimeGrid, hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Domain(format!("sigma must be nonnegative, got {sigma}")));
        }
        if !x0.is_finite() {
            return Err(Error::Domain("x0 must be finite".into()));
        }
        Ok(Self { drift, x0, sigma, grid, hurst })
    }

    pub fn with_grid(&self, grid: TimeGrid) -> Self {
        Self { grid, ..*self }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdePath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl SdePath {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The first `steps + 1` points, on the shortened grid.
    pub fn truncated(&self, steps: usize) -> Result<SdePath> {
        if steps > self.grid.steps() {
            return Err(Error::Precondition(format!("cannot truncate {} steps to {steps}", self.grid.steps())));
        }
        let grid = TimeGrid::new(self.grid.dt() * steps as f64, steps)?;
        Ok(SdePath { grid, values: self.values[..=steps].to_vec() })
    }
}

fn check_noise(config: &SdeConfig, noise: &FbmPath) -> Result<()> {
    if noise.grid != config.grid {
        return Err(Error::GridMismatch(format!("noise grid {:?} vs config grid {:?}", noise.grid, config.grid)));
    }
    if noise.hurst != config.hurst {
        return Err(Error::Precondition(format!("noise H = {} but config H = {}", noise.hurst, config.hurst)));
    }
    Ok(())
}

fn euler_from(config: &SdeConfig, x0: f64, noise: &FbmPath) -> Vec<f64> {
    let dt = config.grid.dt();
    let mut values = Vec::with_capacity(noise.values.len());
    let mut x = x0;
    values.push(x);
    for k in 0..config.grid.steps() {
        x += config.drift.b(x) * dt + config.sigma * noise.increment(k);
        values.push(x);
    }
    values
}

/// Explicit Euler with the drift frozen at the left endpoint. The noise is
/// additive, so no correction term is needed.
pub fn euler_solve(config: &SdeConfig, noise: &FbmPath) -> Result<SdePath> {
    check_noise(config, noise)?;
    Ok(SdePath { grid: config.grid, values: euler_from(config, config.x0, noise) })
}

/// Solutions from `x0` and `x0 + ε` driven by the same noise.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledPaths {
    pub low: SdePath,
    pub high: SdePath,
    pub epsilon: f64,
    pub noise_seed: u64,
    pub noise_stream: u64,
}

impl CoupledPaths {
    /// `X_high(t_k) − X_low(t_k)`.
    pub fn differences(&self) -> Vec<f64> {
        self.high.values.iter().zip(&self.low.values).map(|(h, l)| h - l).collect()
    }

    /// Checks `ε e^{m t} − tol ≤ X_high − X_low ≤ ε e^{M t} + tol` at every
    /// grid point, returning the first offending index.
    pub fn sandwich_violation(&self, m: f64, big_m: f64, tol: f64) -> Option<usize> {
        let grid = self.low.grid;
        self.differences().into_iter().enumerate().find_map(|(k, d)| {
            let t = grid.time(k);
            let lo = self.epsilon * (m * t).exp() - tol;
            let hi = self.epsilon * (big_m * t).exp() + tol;
            (d < lo || d > hi).then_some(k)
        })
    }
}

pub fn coupled_solve(config: &SdeConfig, epsilon: f64, noise: &FbmPath) -> Result<CoupledPaths> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {epsilon}")));
    }
    check_noise(config, noise)?;
    let low = euler_from(config, config.x0, noise);
    let high = euler_from(config, config.x0 + epsilon, noise);
    if let Some((index, difference)) = high.iter().zip(&low).map(|(h, l)| h - l).enumerate().find(|(_, d)| !(*d > 0.0))
    {
        return Err(Error::OrderViolation { index, difference });
    }
    Ok(CoupledPaths {
        low: SdePath { grid: config.grid, values: low },
        high: SdePath { grid: config.grid, values: high },
        epsilon,
        noise_seed: noise.seed,
        noise_stream: noise.stream,
    })
}

/// `∂_x X(t_k) = exp(∫_0^{t_k} b'(X(s)) ds)`, trapezoid rule along the path.
pub fn flow_derivative(config: &SdeConfig, path: &SdePath) -> SdePath {
    let dt = path.grid.dt();
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(path.len());
    out.push(1.0);
    let mut prev = config.drift.b_prime(path.values[0]);
    for &x in &path.values[1..] {
        let cur = config.drift.b_prime(x);
        acc += 0.5 * dt * (prev + cur);
        out.push(acc.exp());
        prev = cur;
    }
    SdePath { grid: path.grid, values: out }
}

/// `σ(μ,t)² = α_H σ² ∫_0^t ∫_0^t |v − u|^{2H−2} e^{μ(2t − u − v)} du dv`.
///
/// Symmetrized to `2 α_H σ² ∫_0^t e^{2μ(t−u)} g(u) du` with
/// `g(u) = ∫_0^u w^{2H−2} e^{μ w} dw`. The singular part of `g` is
/// integrated exactly by its power series; everything else uses Gauss–Legendre
/// on panels graded towards the origin.
pub fn ou_variance(mu: f64, t: f64, hurst: f64, sigma: f64) -> Result<f64> {
    ou_variance_scaled(mu, t, hurst, sigma, 1.0)
}

/// [`ou_variance`] with `α_H` multiplied by `alpha_scale` (negative-control hook).
pub(crate) fn ou_variance_scaled(mu: f64, t: f64, hurst: f64, sigma: f64, alpha_scale: f64) -> Result<f64> {
    check_hurst(hurst)?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let p = 2.0 * hurst - 1.0;
    let rule = gauss_legendre(20);
    let scale = 1.0 / mu.abs().max(1.0);
    let outer = graded_integral(|u| (2.0 * mu * (t - u)).exp() * singular_inner(mu, p, u, &rule), t, scale, &rule);
    Ok(2.0 * alpha_scale * alpha_h(hurst) * sigma * sigma * outer)
}

/// `g(u) = ∫_0^u w^{p−1} e^{μ w} dw`, `p ∈ (0, 1)`.
fn singular_inner(mu: f64, p: f64, u: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let w0 = u.min(1.0 / mu.abs().max(1.0));
    // Σ_k μ^k w0^{p+k} / (k! (p+k)), with |μ| w0 ≤ 1.
    let mut term = w0.powf(p); // μ^k w0^{p+k} / k!
    let mut series = term / p;
    for k in 1..200 {
        term *= mu * w0 / k as f64;
        let add = term / (p + k as f64);
        series += add;
        if add.abs() <= 1e-17 * series.abs() {
            break;
        }
    }
    if u <= w0 {
        return series;
    }
    let f = |w: f64| w.powf(p - 1.0) * (mu * w).exp();
    let mut rest = 0.0;
    // geometric panels from w0 up to u, each split to width ≤ w0·2^k
    let mut lo = w0;
    while lo < u {
        let hi = (2.0 * lo).min(u).min(lo + 1.0 / mu.abs().max(1.0));
        rest += crate::quadrature::composite_gauss(f, lo, hi, 1, rule);
        lo = hi;
    }
    series + rest
}

/// `∫_0^t f` with panels `[t 2^{−k−1}, t 2^{−k}]` (each of width ≤ `max_width`).
fn graded_integral<F: Fn(f64) -> f64>(f: F, t: f64, max_width: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let mut total = 0.0;
    let mut hi = t;
    for _ in 0..64 {
        let lo = 0.5 * hi;
        let panels = ((hi - lo) / max_width).ceil().max(1.0) as usize;
        total += crate::quadrature::composite_gauss(&f, lo, hi, panels, rule);
        hi = lo;
    }
    total
}
