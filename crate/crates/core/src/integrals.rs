//! Pathwise integrals on a uniform grid.
//!
//! The computable Skorokhod surrogate is
//!
//! ```text
//! S_φ = ∫_0^T φ(X) dX − α_H σ² ∫_0^T φ'(X(u)) ∫_0^u ρ(u, v) |u − v|^{2H−2} dv du
//! ```
//!
//! where `ρ(u, v)` is a ratio of flow differences: `(X_{x0+ε}(u) − X_{x0}(u)) /
//! (X_{x0+ε}(v) − X_{x0}(v))` for coupled paths, or the same ratio of forward
//! increments `X(· + η) − X(·)` of a single path for the shifted variant.
//! Both ratios factor as `N(u) / N(v)`, so the inner integral is
//! `N(t_k) Σ_{j<k} I(k, j) / N(t_j)` with `I(k, j)` the exact integral of the
//! kernel over the cell `[t_j, t_{j+1}]`.

use crate::fbm::TimeGrid;
use crate::sde::{CoupledPaths, SdePath};
use crate::{alpha_h, check_hurst, Error, Result};

/// Guard on shifted increments used as denominators.
pub const ZERO_INCREMENT_TOL: f64 = 1e-14;

/// Left-endpoint Riemann sum `Σ_k integrand(t_k) (w(t_{k+1}) − w(t_k))`.
pub fn young_integral(integrand: &[f64], w: &[f64]) -> Result<f64> {
    if integrand.len() != w.len() {
        return Err(Error::LengthMismatch { expected: w.len(), got: integrand.len() });
    }
    Ok(integrand.iter().zip(w.windows(2)).map(|(x, dw)| x * (dw[1] - dw[0])).sum())
}

/// Exact cell integrals of the kernel `(t_k − v)^{2H−2}`.
///
/// `I(k, j)` depends only on the lag `d = k − j`:
/// `I_d = Δ^{2H−1} (d^{2H−1} − (d−1)^{2H−1}) / (2H−1)`.
#[derive(Clone, Debug)]
pub struct KernelCache {
    grid: TimeGrid,
    hurst: f64,
    /// `lag[d]` for `d = 1..=n`; `lag[0]` is unused.
    lag: Vec<f64>,
}

impl KernelCache {
    pub fn new(grid: TimeGrid, hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        let p = 2.0 * hurst - 1.0;
        let scale = grid.dt().powf(p) / p;
        let mut lag = vec![0.0; grid.steps() + 1];
        lag[1] = scale;
        for (d, v) in lag.iter_mut().enumerate().skip(2) {
            // d^p − (d−1)^p without cancellation
            let df = d as f64;
            *v = -scale * df.powf(p) * (p * (-1.0 / df).ln_1p()).exp_m1();
        }
        Ok(Self { grid, hurst, lag })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// `I(k, j) = ∫_{t_j}^{t_{j+1}} (t_k − v)^{2H−2} dv` for `j < k`.
    pub fn entry(&self, k: usize, j: usize) -> f64 {
        assert!(j < k && k <= self.grid.steps(), "need j < k <= n");
        self.lag[k - j]
    }

    /// `Σ_{j<k} I(k, j)`, which equals `t_k^{2H−1} / (2H−1)`.
    pub fn row_sum(&self, k: usize) -> f64 {
        self.lag[1..=k].iter().sum()
    }

    /// `W_k = N_k Σ_{j<k} I(k, j) / N_j` for `k = 0..n` (`W_0 = 0`).
    fn inner_weights(&self, numer: &[f64]) -> Vec<f64> {
        let n = self.grid.steps();
        let inv: Vec<f64> = numer[..n].iter().map(|v| 1.0 / v).collect();
        (0..n)
            .map(|k| {
                let s: f64 = (0..k).map(|j| self.lag[k - j] * inv[j]).sum();
                numer[k] * s
            })
            .collect()
    }

    /// Inner weights from a coupled pair; `W_k` multiplies `φ'(X(t_k)) Δ`.
    pub fn coupled_weights(&self, coupled: &CoupledPaths) -> Result<Vec<f64>> {
        self.check_grid(coupled.low.grid)?;
        let diffs = coupled.differences();
        if let Some((index, &difference)) = diffs.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
            return Err(Error::OrderViolation { index, difference });
        }
        Ok(self.inner_weights(&diffs))
    }

    /// Inner weights from forward increments `X(t_k + sΔ) − X(t_k)` of a path
    /// simulated at least `shift` steps past the cache horizon.
    pub fn shifted_weights(&self, path: &SdePath, shift: usize) -> Result<Vec<f64>> {
        let n = self.grid.steps();
        if shift == 0 {
            return Err(Error::Precondition("shift must be at least one step".into()));
        }
        if path.len() < n + 1 + shift {
            return Err(Error::LengthMismatch { expected: n + 1 + shift, got: path.len() });
        }
        if (path.grid.dt() - self.grid.dt()).abs() > 1e-12 * self.grid.dt() {
            return Err(Error::GridMismatch("path spacing differs from cache spacing".into()));
        }
        let incr: Vec<f64> = (0..n).map(|k| path.values[k + shift] - path.values[k]).collect();
        if let Some(index) = incr.iter().position(|d| d.abs() < ZERO_INCREMENT_TOL) {
            return Err(Error::ZeroIncrement { index });
        }
        Ok(self.inner_weights(&incr))
    }

    fn check_grid(&self, grid: TimeGrid) -> Result<()> {
        if grid != self.grid {
            return Err(Error::GridMismatch(format!("path grid {grid:?} vs cache grid {:?}", self.grid)));
        }
        Ok(())
    }
}

/// Correction term `α_H σ² Δ Σ_k φ'(X(t_k)) W_k`.
pub fn surrogate_correction(phi_prime_along: &[f64], weights: &[f64], hurst: f64, sigma: f64, dt: f64) -> f64 {
    let s: f64 = phi_prime_along.iter().zip(weights).map(|(d, w)| d * w).sum();
    alpha_h(hurst) * sigma * sigma * dt * s
}

/// Two-path surrogate `S_φ(x0, ε, T)`, built on the low path `X_{x0}`.
pub fn skorokhod_surrogate<F, G>(
    coupled: &CoupledPaths,
    phi: F,
    phi_prime: G,
    sigma: f64,
    cache: &KernelCache,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let weights = cache.coupled_weights(coupled)?;
    Ok(assemble(&coupled.low.values, &weights, phi, phi_prime, sigma, cache))
}

fn assemble<F, G>(x: &[f64], weights: &[f64], phi: F, phi_prime: G, sigma: f64, cache: &KernelCache) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let n = cache.grid().steps();
    let x = &x[..=n];
    let integrand: Vec<f64> = x.iter().map(|&v| phi(v)).collect();
    let young = young_integral(&integrand, x).expect("equal lengths");
    let deriv: Vec<f64> = x[..n].iter().map(|&v| phi_prime(v)).collect();
    young - surrogate_correction(&deriv, weights, cache.hurst(), sigma, cache.grid().dt())
}

/// Default Hölder exponent for the time shift: midpoint of `(1/2, H)`.
pub fn default_shift_alpha(hurst: f64) -> f64 {
    0.5 * (0.5 + hurst)
}

/// Grid steps approximating the shift `η = ε^{1/α}`; at least one step.
pub fn shift_steps(epsilon: f64, alpha: f64, dt: f64) -> usize {
    let eta = epsilon.powf(1.0 / alpha);
    ((eta / dt).round() as usize).max(1)
}

/// Single-path surrogate with the ratio of forward increments over
/// `η = ε^{1/α}` (rounded to whole grid steps). `path` must extend at least
/// `shift_steps(ε, α, Δ)` steps past the cache horizon.
#[allow(clippy::too_many_arguments)]
pub fn skorokhod_surrogate_shift<F, G>(
    path: &SdePath,
    phi: F,
    phi_prime: G,
    sigma: f64,
    cache: &KernelCache,
    alpha: f64,
    epsilon: f64,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let hurst = cache.hurst();
    if !(alpha > 0.5 && alpha < hurst) {
        return Err(Error::Domain(format!("alpha must lie in (1/2, H) = (0.5, {hurst}), got {alpha}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {epsilon}")));
    }
    let shift = shift_steps(epsilon, alpha, cache.grid().dt());
    let weights = cache.shifted_weights(path, shift)?;
    Ok(assemble(&path.values, &weights, phi, phi_prime, sigma, cache))
}

/// `m_{H,M}(t)`, the growth factor in the surrogate error bound.
pub fn growth_factor(hurst: f64, big_m: f64, t: f64) -> f64 {
    let p = 2.0 * hurst - 1.0;
    if big_m < 0.0 {
        1.0 / (big_m * big_m * p)
    } else if big_m == 0.0 {
        t * t / (2.0 * hurst * (2.0 * hurst + 1.0))
    } else {
        (2.0 * big_m * t).exp() / (big_m * big_m * p)
    }
}

/// Bound on `|∫ φ(X) δX − S_φ(x0, ε, t)|`:
/// `α_H σ² ‖b''‖∞ ‖φ'‖∞ / 2 · ε t^{2H−1} m_{H,M}(t)`.
pub fn surrogate_error_bound(
    hurst: f64,
    sigma: f64,
    b_second_sup: f64,
    phi_prime_sup: f64,
    epsilon: f64,
    t: f64,
    big_m: f64,
) -> f64 {
    alpha_h(hurst) * sigma * sigma * b_second_sup * phi_prime_sup / 2.0
        * epsilon
        * t.powf(2.0 * hurst - 1.0)
        * growth_factor(hurst, big_m, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::sample_fbm;
    use crate::sde::{coupled_solve, euler_solve, DriftModel, SdeConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn young_examples() {
        let n = 1000;
        let t: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        assert_relative_eq!(young_integral(&vec![2.5; n + 1], &t).unwrap(), 2.5, max_relative = 1e-12);
        // Σ t_k Δ = (1 − Δ)/2
        let v = young_integral(&t, &t).unwrap();
        assert_relative_eq!(v, 0.5 * (1.0 - 1.0 / n as f64), max_relative = 1e-12);
        let w = [0.3, -1.0, 2.0, 0.7];
        assert_relative_eq!(young_integral(&[1.0; 4], &w).unwrap(), 0.4, max_relative = 1e-12);
        assert!(young_integral(&[1.0; 3], &w).is_err());
    }

    #[test]
    fn young_sum_refines_towards_half() {
        let errs: Vec<f64> = [10, 100, 1000]
            .iter()
            .map(|&n| {
                let t: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
                (young_integral(&t, &t).unwrap() - 0.5).abs()
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2] && errs[2] < 1e-3);
    }

    proptest! {
        #[test]
        fn young_linear_and_additive(
            a in proptest::collection::vec(-5.0f64..5.0, 9),
            b in proptest::collection::vec(-5.0f64..5.0, 9),
            w in proptest::collection::vec(-5.0f64..5.0, 9),
            c in -3.0f64..3.0,
        ) {
            let comb: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + c * y).collect();
            let lhs = young_integral(&comb, &w).unwrap();
            let rhs = young_integral(&a, &w).unwrap() + c * young_integral(&b, &w).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10);
            // concatenation at index 4 (shared point)
            let whole = young_integral(&a, &w).unwrap();
            let parts = young_integral(&a[..5], &w[..5]).unwrap() + young_integral(&a[4..], &w[4..]).unwrap();
            prop_assert!((whole - parts).abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_row_sums_closed_form() {
        for h in [0.6, 0.75, 0.9] {
            let grid = TimeGrid::new(1.0, 256).unwrap();
            let cache = KernelCache::new(grid, h).unwrap();
            let p = 2.0 * h - 1.0;
            for k in 1..=256 {
                assert_relative_eq!(cache.row_sum(k), grid.time(k).powf(p) / p, max_relative = 1e-12);
                assert!(cache.entry(k, k - 1).is_finite() && cache.entry(k, 0) > 0.0);
            }
        }
    }

    #[test]
    fn kernel_entry_matches_quadrature() {
        let grid = TimeGrid::new(2.0, 10).unwrap();
        let cache = KernelCache::new(grid, 0.7).unwrap();
        let rule = crate::quadrature::gauss_legendre(30);
        let (k, j) = (7, 3);
        let (a, b) = (grid.time(j), grid.time(j + 1));
        let q = crate::quadrature::composite_gauss(|v| (grid.time(k) - v).powf(-0.6), a, b, 8, &rule);
        assert_relative_eq!(cache.entry(k, j), q, max_relative = 1e-12);
    }

    fn setup(model: DriftModel, sigma: f64, n: usize) -> (SdeConfig, KernelCache) {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let cfg = SdeConfig::new(model, 0.5, sigma, grid, 0.75).unwrap();
        (cfg, KernelCache::new(grid, 0.75).unwrap())
    }

    #[test]
    fn constant_phi_has_no_correction() {
        let (cfg, cache) = setup(DriftModel::DampedSine { theta: 1.0, a: 0.5 }, 0.5, 128);
        let noise = sample_fbm(cfg.grid, 0.75, 4, 1).unwrap().remove(0);
        let c = coupled_solve(&cfg, 1e-3, &noise).unwrap();
        let s = skorokhod_surrogate(&c, |_| 1.7, |_| 0.0, 0.5, &cache).unwrap();
        let x = &c.low.values;
        assert_relative_eq!(s, 1.7 * (x[128] - x[0]), max_relative = 1e-12);
    }

    #[test]
    fn linear_drift_is_epsilon_free() {
        let (cfg, cache) = setup(DriftModel::Linear { mu: -1.0 }, 0.5, 256);
        let noise = sample_fbm(cfg.grid, 0.75, 8, 1).unwrap().remove(0);
        let phi = |x: f64| x.sin();
        let dphi = |x: f64| x.cos();
        let values: Vec<f64> = [0.1, 0.03, 1e-3, 1e-5]
            .iter()
            .map(|&e| skorokhod_surrogate(&coupled_solve(&cfg, e, &noise).unwrap(), phi, dphi, 0.5, &cache).unwrap())
            .collect();
        for v in &values[1..] {
            assert!((v - values[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn epsilon_error_shrinks_linearly() {
        let (cfg, cache) = setup(DriftModel::DampedSine { theta: 1.0, a: 0.5 }, 0.5, 256);
        let noise = sample_fbm(cfg.grid, 0.75, 21, 1).unwrap().remove(0);
        let s = |e: f64| {
            let c = coupled_solve(&cfg, e, &noise).unwrap();
            skorokhod_surrogate(&c, |x| x.cos(), |x| -x.sin(), 0.5, &cache).unwrap()
        };
        let d1 = (s(0.1) - s(0.05)).abs();
        let d2 = (s(0.01) - s(0.005)).abs();
        let d3 = (s(0.001) - s(0.0005)).abs();
        assert!(d2 <= 0.15 * d1 && d3 <= 0.15 * d2, "{d1} {d2} {d3}");
    }

    #[test]
    fn shift_variant_constant_phi_and_deterministic_ratio() {
        let (cfg, cache) = setup(DriftModel::Linear { mu: -0.8 }, 0.0, 128);
        let ext = cfg.with_grid(cfg.grid.extended(8));
        let noise = sample_fbm(ext.grid, 0.75, 3, 1).unwrap().remove(0);
        let path = euler_solve(&ext, &noise).unwrap();
        let c = skorokhod_surrogate_shift(&path, |_| 2.0, |_| 0.0, 0.5, &cache, 0.6, 1e-2).unwrap();
        assert_relative_eq!(c, 2.0 * (path.values[128] - path.values[0]), max_relative = 1e-12);

        // σ = 0: the shifted ratio equals (1 + μΔ)^{k−j}, as for coupled paths.
        let coupled_cfg = cfg;
        let noise0 = sample_fbm(coupled_cfg.grid, 0.75, 3, 1).unwrap().remove(0);
        let coupled = coupled_solve(&coupled_cfg, 1e-3, &noise0).unwrap();
        let w_pair = cache.coupled_weights(&coupled).unwrap();
        let w_shift = cache.shifted_weights(&path, 3).unwrap();
        for (a, b) in w_pair.iter().zip(&w_shift) {
            assert_relative_eq!(*a, *b, max_relative = 1e-9, epsilon = 1e-300);
        }
    }

    #[test]
    fn shift_variant_errors() {
        let (cfg, cache) = setup(DriftModel::Linear { mu: 0.0 }, 0.0, 64);
        let ext = cfg.with_grid(cfg.grid.extended(4));
        let noise = sample_fbm(ext.grid, 0.75, 3, 1).unwrap().remove(0);
        let path = euler_solve(&ext, &noise).unwrap();
        // σ = 0, b = 0: path is flat, every increment vanishes
        let err = skorokhod_surrogate_shift(&path, |x| x, |_| 1.0, 1.0, &cache, 0.6, 0.1).unwrap_err();
        assert!(matches!(err, Error::ZeroIncrement { index: 0 }));
        assert!(skorokhod_surrogate_shift(&path, |x| x, |_| 1.0, 1.0, &cache, 0.8, 0.1).is_err());
        assert!(cache.shifted_weights(&path, 10).is_err());
    }

    #[test]
    fn shift_steps_rounding() {
        assert_eq!(shift_steps(1e-3, 0.625, 1.0 / 256.0), 1);
        assert_eq!(shift_steps(0.25, 0.5, 1.0 / 256.0), 16);
        assert_relative_eq!(default_shift_alpha(0.75), 0.625);
    }

    #[test]
    fn growth_factor_cases() {
        assert_relative_eq!(growth_factor(0.75, 0.0, 2.0), 4.0 / (1.5 * 2.5));
        assert_relative_eq!(growth_factor(0.75, -0.5, 2.0), 1.0 / (0.25 * 0.5));
        assert_relative_eq!(growth_factor(0.75, 0.5, 2.0), 2f64.exp() / (0.25 * 0.5));
        assert!(surrogate_error_bound(0.75, 0.5, 0.5, 1.0, 1e-3, 1.0, -0.5) > 0.0);
    }
}
