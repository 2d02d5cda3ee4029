//! Built-in oracle suite behind `fsde validate`.

use std::fmt;

use nalgebra::DMatrix;

use crate::basis::{hermite_functions, BasisSpec};
use crate::exec::Exec;
use crate::fbm::{fbm_covariance, FbmSampler, TimeGrid};
use crate::integrals::KernelCache;
use crate::quadrature::{composite_gauss, gauss_hermite_scaled, gauss_legendre};
use crate::sde::{coupled_solve, ou_variance_scaled, DriftModel, SdeConfig};
use crate::Result;

/// Knobs of the suite. `alpha_scale` multiplies `α_H` in the closed-form OU
/// variance and exists only to check that the suite can fail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    pub alpha_scale: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { seed: 7, alpha_scale: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// Human-readable acceptance rule.
    pub tolerance: String,
    /// Observed error (or count) compared against the tolerance.
    pub observed: String,
    pub pass: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:4} {:<28} tol {:<24} observed {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.tolerance,
            self.observed
        )
    }
}

/// Variance of the Euler-free discrete OU integral
/// `σ Σ_k e^{μ(t − t_{k+1/2})} ΔB_k`, a Toeplitz quadratic form in the fGn
/// autocovariance. Converges to the closed form as `steps` grows.
pub fn discrete_ou_variance(mu: f64, t: f64, hurst: f64, sigma: f64, steps: usize) -> f64 {
    let dt = t / steps as f64;
    let h2 = 2.0 * hurst;
    let gamma: Vec<f64> = (0..steps)
        .map(|k| {
            let k = k as f64;
            0.5 * dt.powf(h2) * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
        })
        .collect();
    let a: Vec<f64> = (0..steps).map(|k| (mu * (t - (k as f64 + 0.5) * dt)).exp()).collect();
    let mut var = 0.0;
    for i in 0..steps {
        for j in 0..steps {
            var += a[i] * a[j] * gamma[i.abs_diff(j)];
        }
    }
    sigma * sigma * var
}

fn max_identity_error(g: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

fn bound_check(name: &'static str, err: f64, tol: f64) -> Check {
    Check { name, tolerance: format!("<= {tol:.0e}"), observed: format!("{err:.3e}"), pass: err <= tol }
}

fn fbm_check(opts: &SuiteOptions, exec: Exec) -> Result<Check> {
    let grid = TimeGrid::new(1.0, 128)?;
    let hurst = 0.75;
    let paths = 4000;
    let sampler = FbmSampler::new(grid, hurst)?;
    let batch = sampler.sample_batch(opts.seed, 0, paths, exec);
    let idx: Vec<usize> = (1..=5).map(|i| 128 * i / 5).collect();
    let mut inside = 0;
    for &a in &idx {
        for &b in &idx {
            let prod: Vec<f64> = batch.iter().map(|p| p.values[a] * p.values[b]).collect();
            let n = paths as f64;
            let mean = prod.iter().sum::<f64>() / n;
            let var = prod.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let exact = fbm_covariance(grid.time(a), grid.time(b), hurst)?;
            if (mean - exact).abs() <= 3.0 * (var / n).sqrt() {
                inside += 1;
            }
        }
    }
    Ok(Check {
        name: "fbm_covariance",
        tolerance: "3 SE at >= 23/25".into(),
        observed: format!("{inside}/25"),
        pass: inside >= 23,
    })
}

fn ou_check(opts: &SuiteOptions) -> Result<Check> {
    let closed = ou_variance_scaled(-1.0, 1.0, 0.75, 1.0, opts.alpha_scale)?;
    let discrete = discrete_ou_variance(-1.0, 1.0, 0.75, 1.0, 2048);
    let rel = ((closed - discrete) / discrete).abs();
    Ok(Check {
        name: "ou_variance",
        tolerance: "relative <= 2e-3".into(),
        observed: format!("{rel:.3e} ({closed:.6} vs {discrete:.6})"),
        pass: rel <= 2e-3,
    })
}

fn trig_gram_check() -> Result<Check> {
    let rule = gauss_legendre(20);
    let basis = BasisSpec::trigonometric(-2.0, 2.0, 15)?;
    let g =
        DMatrix::from_fn(15, 15, |i, j| composite_gauss(|x| basis.eval(x)[i] * basis.eval(x)[j], -2.0, 2.0, 64, &rule));
    Ok(bound_check("trig_orthonormality", max_identity_error(&g), 1e-10))
}

fn hermite_gram_check() -> Check {
    let (nodes, weights) = gauss_hermite_scaled(200);
    let dim = 64;
    let values: Vec<Vec<f64>> = nodes
        .iter()
        .map(|&x| {
            let mut v = vec![0.0; dim];
            hermite_functions(x, &mut v);
            v
        })
        .collect();
    let g = DMatrix::from_fn(dim, dim, |i, j| values.iter().zip(&weights).map(|(v, w)| w * v[i] * v[j]).sum());
    bound_check("hermite_orthonormality", max_identity_error(&g), 1e-6)
}

fn kernel_check() -> Result<Check> {
    let grid = TimeGrid::new(1.0, 256)?;
    let mut worst = 0.0f64;
    for hurst in [0.6, 0.75, 0.9] {
        let cache = KernelCache::new(grid, hurst)?;
        let p = 2.0 * hurst - 1.0;
        for k in 1..=grid.steps() {
            let sum: f64 = (0..k).map(|j| cache.entry(k, j)).sum();
            let exact = grid.time(k).powf(p) / p;
            worst = worst.max(((sum - exact) / exact).abs());
        }
    }
    Ok(bound_check("kernel_row_sums", worst, 1e-12))
}

fn basis_derivative_check() -> Result<Check> {
    let h = 1e-5;
    let trig = BasisSpec::trigonometric(-2.0, 2.0, 15)?;
    let herm = BasisSpec::hermite(64)?;
    let mut worst = 0.0f64;
    for i in 0..200 {
        let x = -1.99 + 3.98 * (i as f64 + 0.5) / 200.0;
        for (basis, y) in [(&trig, x), (&herm, 4.0 * x)] {
            let d = basis.eval_deriv(y);
            let (up, down) = (basis.eval(y + h), basis.eval(y - h));
            for j in 0..basis.dim() {
                worst = worst.max((d[j] - (up[j] - down[j]) / (2.0 * h)).abs());
            }
        }
    }
    Ok(bound_check("basis_derivatives", worst, 1e-6))
}

fn drift_derivative_check() -> Check {
    let h = 1e-5;
    let models = [
        DriftModel::Linear { mu: -0.8 },
        DriftModel::DampedSine { theta: 1.0, a: 0.5 },
        DriftModel::ShiftedTanh { theta: 1.0, a: 0.5 },
    ];
    let mut worst = 0.0f64;
    for model in models {
        for i in 0..=100 {
            let x = -5.0 + 0.1 * i as f64;
            let d1 = (model.b(x + h) - model.b(x - h)) / (2.0 * h);
            let d2 = (model.b_prime(x + h) - model.b_prime(x - h)) / (2.0 * h);
            worst = worst.max((d1 - model.b_prime(x)).abs()).max((d2 - model.b_second(x)).abs());
        }
    }
    bound_check("drift_derivatives", worst, 1e-6)
}

/// For linear drift the Euler flow derivative is `(1 + μΔ)^k` whatever the
/// noise.
fn linear_flow_check(opts: &SuiteOptions) -> Result<Check> {
    let grid = TimeGrid::new(1.0, 256)?;
    let mu = -0.7;
    let cfg = SdeConfig::new(DriftModel::Linear { mu }, 1.0, 0.5, grid, 0.75)?;
    let sampler = FbmSampler::new(grid, 0.75)?;
    let eps = 1e-3;
    let mut worst = 0.0f64;
    for stream in 0..8 {
        let c = coupled_solve(&cfg, eps, &sampler.sample(opts.seed, stream))?;
        for (k, d) in c.differences().iter().enumerate() {
            let exact = (1.0 + mu * grid.dt()).powi(k as i32);
            worst = worst.max((d / eps - exact).abs());
        }
    }
    Ok(bound_check("linear_flow_derivative", worst, 1e-9))
}

/// Runs every check; errors from components propagate.
pub fn run_suite(opts: &SuiteOptions, exec: Exec) -> Result<Vec<Check>> {
    Ok(vec![
        fbm_check(opts, exec)?,
        ou_check(opts)?,
        trig_gram_check()?,
        hermite_gram_check(),
        kernel_check()?,
        basis_derivative_check()?,
        drift_derivative_check(),
        linear_flow_check(opts)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let checks = run_suite(&SuiteOptions::default(), Exec::Parallel).unwrap();
        for c in &checks {
            assert!(c.pass, "{c}");
        }
        assert_eq!(checks.len(), 8);
    }

    #[test]
    fn wrong_alpha_fails_ou_check() {
        let opts = SuiteOptions { alpha_scale: 1.1, ..SuiteOptions::default() };
        let c = ou_check(&opts).unwrap();
        assert!(!c.pass);
    }

    #[test]
    fn report_lines_name_check_and_tolerance() {
        let line = hermite_gram_check().to_string();
        assert!(line.contains("hermite_orthonormality"));
        assert!(line.contains("<= 1e-6"));
    }
}
