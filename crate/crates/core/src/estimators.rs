//! Least-squares projection estimators of `b` and `b'` from coupled paths.
//!
//! Both estimators solve `Ψ̂(m) θ = v` where `Ψ̂(m)` is the empirical Gram
//! matrix of the basis along the observed paths and `v` is a design vector:
//! Skorokhod surrogates for `b`, Young integrals against the log flow
//! difference for `b'`. The solution is kept only on the stability event
//!
//! ```text
//! L(m) (‖Ψ̂(m)^{-1}‖_op ∨ 1) ≤ c_{κ,T} N T / log(N T),
//! c_{κ,T} = (3 log(3/2) − 1) / ((7 + κ) T),
//! ```
//!
//! and replaced by the zero function otherwise.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::basis::{default_probe_grid, stability_quantities, BasisKind, BasisSpec};
use crate::exec::Exec;
use crate::integrals::{surrogate_correction, KernelCache};
use crate::io::{format_real, write_csv};
use crate::sde::{CoupledPaths, SdePath};
use crate::{check_hurst, Error, Result};

/// Eigenvalues below this fraction of the largest one count as zero.
pub const SINGULAR_RATIO: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub matrix: DMatrix<f64>,
    pub paths: usize,
    pub horizon: f64,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `‖Ψ̂^{-1}‖_op = 1/λ_min`, or `+∞` when `λ_min ≤ 1e−13 λ_max`.
    pub fn opnorm_inv(&self) -> f64 {
        Spectral::of(&self.matrix).opnorm_inv()
    }
}

struct Spectral {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl Spectral {
    fn of(matrix: &DMatrix<f64>) -> Self {
        let eig = matrix.clone().symmetric_eigen();
        Self { values: eig.eigenvalues, vectors: eig.eigenvectors }
    }

    fn min_max(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    fn opnorm_inv(&self) -> f64 {
        let (lo, hi) = self.min_max();
        if !(hi > 0.0) || lo <= SINGULAR_RATIO * hi {
            f64::INFINITY
        } else {
            1.0 / lo
        }
    }

    /// `Ψ^{-1} v` through the eigen-decomposition.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(rhs);
        let proj = self.vectors.transpose() * v;
        let scaled = proj.component_div(&self.values);
        (&self.vectors * scaled).iter().copied().collect()
    }
}

/// Left-endpoint weights, matching the Young sums of the design vectors so
/// that the discrete normal equations are an exact projection.
fn left_weight(k: usize, n: usize, dt: f64) -> f64 {
    if k < n {
        dt
    } else {
        0.0
    }
}

/// Unnormalized `∫_0^T φ_j(X) φ_l(X) ds` for one path, plus the basis values
/// along the path (row-major, `(n+1) × m`).
fn path_gram(path: &SdePath, basis: &BasisSpec) -> (DMatrix<f64>, Vec<f64>) {
    let m = basis.dim();
    let n = path.grid.steps();
    let dt = path.grid.dt();
    let mut evals = vec![0.0; (n + 1) * m];
    let mut g = DMatrix::<f64>::zeros(m, m);
    for (k, row) in evals.chunks_mut(m).enumerate().take(n + 1) {
        basis.eval_into(path.values[k], row);
        if row.iter().all(|v| *v == 0.0) {
            continue;
        }
        let w = left_weight(k, n, dt);
        for a in 0..m {
            let wa = w * row[a];
            for b in a..m {
                g[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    (g, evals)
}

fn check_common_grid<'a, I: Iterator<Item = &'a SdePath>>(mut paths: I) -> Result<()> {
    let Some(first) = paths.next() else {
        return Err(Error::Precondition("need at least one path".into()));
    };
    for p in paths {
        if p.grid != first.grid || p.len() != first.len() {
            return Err(Error::GridMismatch("paths are not on a common grid".into()));
        }
    }
    Ok(())
}

/// `Ψ̂(m)_{jl} = (1/(NT)) Σ_i ∫_0^T φ_j(X^i) φ_l(X^i) ds`, left-endpoint sums.
pub fn gram(paths: &[SdePath], basis: &BasisSpec) -> Result<GramMatrix> {
    gram_with(paths, basis, Exec::Sequential)
}

pub fn gram_with(paths: &[SdePath], basis: &BasisSpec, exec: Exec) -> Result<GramMatrix> {
    check_common_grid(paths.iter())?;
    let parts = exec.map(paths.len(), |i| path_gram(&paths[i], basis).0);
    let horizon = paths[0].grid.horizon();
    let mut total = DMatrix::<f64>::zeros(basis.dim(), basis.dim());
    for p in &parts {
        total += p;
    }
    total /= paths.len() as f64 * horizon;
    Ok(GramMatrix { matrix: total, paths: paths.len(), horizon })
}

/// `c_{κ,T} = (3 log(3/2) − 1) / ((7 + κ) T)`.
pub fn truncation_constant(kappa: f64, horizon: f64) -> f64 {
    (3.0 * 1.5f64.ln() - 1.0) / ((7.0 + kappa) * horizon)
}

/// The stability inequality from its ingredients. `N T ≤ 1` never passes.
pub fn stability_holds(l_m: f64, opnorm_inv: f64, kappa: f64, paths: usize, horizon: f64) -> bool {
    let nt = paths as f64 * horizon;
    if !(nt > 1.0) {
        return false;
    }
    let lhs = l_m * opnorm_inv.max(1.0);
    lhs <= truncation_constant(kappa, horizon) * nt / nt.ln()
}

/// Whether the estimator is kept: `L(m)(‖Ψ̂^{-1}‖_op ∨ 1) ≤ c_{κ,T} NT / log(NT)`.
pub fn truncation_event(gram: &GramMatrix, l_m: f64, kappa: f64, paths: usize, horizon: f64) -> bool {
    stability_holds(l_m, gram.opnorm_inv(), kappa, paths, horizon)
}

/// Which function a fit estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Drift,
    DriftDerivative,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub target: Target,
    /// Coefficients of the kept estimator; all zero when `truncated`.
    pub coeffs: Vec<f64>,
    /// `Ψ̂^{-1} v` before truncation, `None` when `Ψ̂` is singular.
    pub untruncated: Option<Vec<f64>>,
    /// The stability event failed.
    pub truncated: bool,
    pub opnorm_inv: f64,
    pub l_m: f64,
    pub kappa: f64,
    pub basis: BasisSpec,
    pub gram: GramMatrix,
    pub design: Vec<f64>,
    pub epsilon: f64,
    pub seed: Option<u64>,
}

impl FitResult {
    pub fn paths(&self) -> usize {
        self.gram.paths
    }

    pub fn horizon(&self) -> f64 {
        self.gram.horizon
    }

    /// The kept estimator at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.basis.combine(&self.coeffs, x)
    }

    /// The estimator before truncation (zero if `Ψ̂` is singular).
    pub fn eval_untruncated(&self, x: f64) -> f64 {
        match &self.untruncated {
            Some(c) => self.basis.combine(c, x),
            None => 0.0,
        }
    }

    /// Recomputes the truncation verdict from the stored quantities.
    pub fn truncation_consistent(&self) -> bool {
        self.truncated != stability_holds(self.l_m, self.opnorm_inv, self.kappa, self.paths(), self.horizon())
    }

    /// `‖Ψ̂ θ − v‖` for the untruncated solution.
    pub fn normal_equation_residual(&self) -> Option<f64> {
        let theta = self.untruncated.as_ref()?;
        let r = &self.gram.matrix * DVector::from_column_slice(theta) - DVector::from_column_slice(&self.design);
        Some(r.norm())
    }

    /// `j,theta_j` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let rows: Vec<Vec<String>> =
            self.coeffs.iter().enumerate().map(|(j, c)| vec![j.to_string(), format_real(*c)]).collect();
        write_csv(out, &["j", "theta_j"], &rows)
    }

    /// `key = value` sidecar (valid TOML).
    pub fn write_metadata<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let target = match self.target {
            Target::Drift => "b",
            Target::DriftDerivative => "bprime",
        };
        writeln!(out, "target = \"{target}\"")?;
        writeln!(out, "basis = \"{}\"", self.basis)?;
        writeln!(out, "truncated = {}", self.truncated)?;
        writeln!(out, "opnorm_inv = {}", toml_real(self.opnorm_inv))?;
        writeln!(out, "L_m = {}", toml_real(self.l_m))?;
        writeln!(out, "kappa = {}", toml_real(self.kappa))?;
        writeln!(out, "N = {}", self.paths())?;
        writeln!(out, "T = {}", toml_real(self.horizon()))?;
        writeln!(out, "epsilon = {}", toml_real(self.epsilon))?;
        if let Some(seed) = self.seed {
            writeln!(out, "seed = {seed}")?;
        }
        out.flush()
    }
}

fn toml_real(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format_real(x)
    }
}

/// Solves and applies the stability truncation.
fn finish(
    target: Target,
    gram: GramMatrix,
    design: Vec<f64>,
    basis: &BasisSpec,
    kappa: f64,
    epsilon: f64,
) -> Result<FitResult> {
    let probe = match basis.kind() {
        BasisKind::Hermite => default_probe_grid(),
        BasisKind::Trigonometric { .. } => Vec::new(),
    };
    let (l_m, _) = stability_quantities(basis, &probe);
    let spectral = Spectral::of(&gram.matrix);
    let opnorm_inv = spectral.opnorm_inv();
    let untruncated = opnorm_inv.is_finite().then(|| spectral.solve(&design));
    let kept = stability_holds(l_m, opnorm_inv, kappa, gram.paths, gram.horizon);
    let coeffs = if kept {
        match &untruncated {
            Some(c) if c.iter().all(|v| v.is_finite()) => c.clone(),
            _ => return Err(Error::Inconsistent(format!("opnorm_inv = {opnorm_inv}"))),
        }
    } else {
        vec![0.0; basis.dim()]
    };
    Ok(FitResult {
        target,
        coeffs,
        untruncated,
        truncated: !kept,
        opnorm_inv,
        l_m,
        kappa,
        basis: *basis,
        gram,
        design,
        epsilon,
        seed: None,
    })
}

fn check_coupled(set: &[CoupledPaths]) -> Result<f64> {
    check_common_grid(set.iter().map(|c| &c.low))?;
    let eps = set[0].epsilon;
    if set.iter().any(|c| c.epsilon != eps || c.high.grid != c.low.grid) {
        return Err(Error::Precondition("coupled paths must share ε and grid".into()));
    }
    Ok(eps)
}

/// Per-path Gram and design contributions, reduced in path order.
fn accumulate<F>(set: &[CoupledPaths], basis: &BasisSpec, exec: Exec, design: F) -> Result<(GramMatrix, Vec<f64>)>
where
    F: Fn(&CoupledPaths, &[f64]) -> Result<Vec<f64>> + Sync + Send,
{
    let parts = exec.try_map(set.len(), |i| {
        let (g, evals) = path_gram(&set[i].low, basis);
        design(&set[i], &evals).map(|d| (g, d))
    })?;
    let m = basis.dim();
    let grid = set[0].low.grid;
    let norm = set.len() as f64 * grid.horizon();
    let mut g = DMatrix::<f64>::zeros(m, m);
    let mut v = vec![0.0; m];
    for (pg, pd) in &parts {
        g += pg;
        for (a, b) in v.iter_mut().zip(pd) {
            *a += b;
        }
    }
    g /= norm;
    v.iter_mut().for_each(|a| *a /= norm);
    Ok((GramMatrix { matrix: g, paths: set.len(), horizon: grid.horizon() }, v))
}

/// Drift estimator `b̃_{m,ε}`: `θ = Ψ̂^{-1} x̂` with
/// `x̂_j = (1/(NT)) Σ_i S^i_{φ_j}(x0, ε, T)`, truncated off the stability event.
pub fn fit_drift(
    set: &[CoupledPaths],
    basis: &BasisSpec,
    sigma: f64,
    hurst: f64,
    kappa: f64,
    exec: Exec,
) -> Result<FitResult> {
    check_hurst(hurst)?;
    let epsilon = check_coupled(set)?;
    let grid = set[0].low.grid;
    let cache = KernelCache::new(grid, hurst)?;
    let m = basis.dim();
    let n = grid.steps();
    let dt = grid.dt();
    let (gram, design) = accumulate(set, basis, exec, |c, evals| {
        let weights = cache.coupled_weights(c)?;
        let x = &c.low.values;
        let mut out = vec![0.0; m];
        // Young part: Σ_k φ_j(X_k)(X_{k+1} − X_k)
        for k in 0..n {
            let dx = x[k + 1] - x[k];
            for (o, p) in out.iter_mut().zip(&evals[k * m..(k + 1) * m]) {
                *o += p * dx;
            }
        }
        // Correction: α_H σ² Δ Σ_k φ_j'(X_k) W_k
        let mut deriv = vec![0.0; n * m];
        for k in 0..n {
            basis.eval_deriv_into(x[k], &mut deriv[k * m..(k + 1) * m]);
        }
        for (j, o) in out.iter_mut().enumerate() {
            let along: Vec<f64> = (0..n).map(|k| deriv[k * m + j]).collect();
            *o -= surrogate_correction(&along, &weights, hurst, sigma, dt);
        }
        Ok(out)
    })?;
    finish(Target::Drift, gram, design, basis, kappa, epsilon)
}

/// Derivative estimator `b̃^{†'}_{m,ε}`: design
/// `ŷ_j = (1/(NT)) Σ_i Σ_k φ_j(X_k)(Y_{k+1} − Y_k)` with
/// `Y = log((X_{x0+ε} − X_{x0}) / ε)`, truncated with `κ = 0`.
pub fn fit_drift_derivative(set: &[CoupledPaths], basis: &BasisSpec, exec: Exec) -> Result<FitResult> {
    let epsilon = check_coupled(set)?;
    let m = basis.dim();
    let n = set[0].low.grid.steps();
    let (gram, design) = accumulate(set, basis, exec, |c, evals| {
        let diffs = c.differences();
        if let Some((index, &difference)) = diffs.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
            return Err(Error::OrderViolation { index, difference });
        }
        let y: Vec<f64> = diffs.iter().map(|d| (d / c.epsilon).ln()).collect();
        let mut out = vec![0.0; m];
        for k in 0..n {
            let dy = y[k + 1] - y[k];
            for (o, p) in out.iter_mut().zip(&evals[k * m..(k + 1) * m]) {
                *o += p * dy;
            }
        }
        Ok(out)
    })?;
    finish(Target::DriftDerivative, gram, design, basis, 0.0, epsilon)
}

/// `b̂^†(x) = b(ℓ0) + ∫_{ℓ0}^x b̂^{†'}(y) dy` on a compact basis.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchoredPrimitive {
    pub anchor_point: f64,
    pub anchor_value: f64,
    pub basis: BasisSpec,
    pub coeffs: Vec<f64>,
    anchor_primitive: Vec<f64>,
}

impl AnchoredPrimitive {
    pub fn new(basis: BasisSpec, coeffs: Vec<f64>, anchor_point: f64, anchor_value: f64) -> Result<Self> {
        let mut anchor_primitive = vec![0.0; basis.dim()];
        basis.antiderivative_into(anchor_point, &mut anchor_primitive)?;
        if coeffs.len() != basis.dim() {
            return Err(Error::LengthMismatch { expected: basis.dim(), got: coeffs.len() });
        }
        Ok(Self { anchor_point, anchor_value, basis, coeffs, anchor_primitive })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut a = vec![0.0; self.basis.dim()];
        self.basis.antiderivative_into(x, &mut a).expect("compact basis checked at construction");
        let integral: f64 =
            a.iter().zip(&self.anchor_primitive).zip(&self.coeffs).map(|((a, a0), c)| c * (a - a0)).sum();
        self.anchor_value + integral
    }
}

/// Integrates a derivative fit from a known anchor value. Hermite bases are
/// rejected: the primitive needs a compact support.
pub fn primitive_from_derivative(fit: &FitResult, anchor_point: f64, anchor_value: f64) -> Result<AnchoredPrimitive> {
    AnchoredPrimitive::new(fit.basis, fit.coeffs.clone(), anchor_point, anchor_value)
}

/// `ε_{N,T} = (NT)^{-1/2} (NT / log(NT))^{-1}`.
pub fn epsilon_rule(paths: usize, horizon: f64) -> Result<f64> {
    let nt = paths as f64 * horizon;
    if !(nt > std::f64::consts::E) {
        return Err(Error::Precondition(format!("epsilon rule needs NT > e, got {nt}")));
    }
    Ok(nt.ln() / nt.powf(1.5))
}

/// `m_opt`: `[(N T^{2−2H})^{1/(2β+3)}]` for the trigonometric basis (lowered
/// to an odd value) and `[(N T^{2−2H})^{1/(s+3/2+κ/2)}]` for Hermite.
pub fn m_opt(kind: BasisKind, paths: usize, horizon: f64, hurst: f64, smoothness: f64, kappa: f64) -> Result<usize> {
    if !(smoothness > 0.0) {
        return Err(Error::Domain(format!("smoothness must be positive, got {smoothness}")));
    }
    let base = paths as f64 * horizon.powf(2.0 - 2.0 * hurst);
    let exponent = match kind {
        BasisKind::Trigonometric { .. } => 1.0 / (2.0 * smoothness + 3.0),
        BasisKind::Hermite => 1.0 / (smoothness + 1.5 + 0.5 * kappa),
    };
    let m = ((base.powf(exponent) * (1.0 + 1e-12)).floor() as usize).max(1);
    Ok(match kind {
        BasisKind::Trigonometric { .. } if m.is_multiple_of(2) => m - 1,
        _ => m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{FbmSampler, TimeGrid};
    use crate::sde::{coupled_solve, DriftModel, SdeConfig};
    use approx::assert_relative_eq;

    const TRIG: BasisKind = BasisKind::Trigonometric { lo: -2.0, hi: 2.0 };

    fn identity_gram(m: usize, paths: usize) -> GramMatrix {
        GramMatrix { matrix: DMatrix::identity(m, m), paths, horizon: 1.0 }
    }

    #[test]
    fn truncation_constant_values() {
        assert_relative_eq!(truncation_constant(1.0, 1.0), 0.02704941554, max_relative = 1e-10);
        assert_relative_eq!(truncation_constant(0.0, 1.0), 0.03091361776, max_relative = 1e-10);
        assert_relative_eq!(truncation_constant(2.0, 2.0), truncation_constant(2.0, 1.0) / 2.0);
    }

    #[test]
    fn truncation_event_examples() {
        assert!(truncation_event(&identity_gram(3, 1000), 3.0, 1.0, 1000, 1.0));
        assert!(!truncation_event(&identity_gram(3, 3), 3.0, 1.0, 3, 1.0));
        let singular = GramMatrix { matrix: DMatrix::from_element(2, 2, 1.0), paths: 1000, horizon: 1.0 };
        assert_eq!(singular.opnorm_inv(), f64::INFINITY);
        assert!(!truncation_event(&singular, 1.0, 1.0, 1_000_000, 1.0));
        assert!(!stability_holds(0.1, 1.0, 0.0, 1, 1.0));
    }

    #[test]
    fn epsilon_rule_values() {
        assert_relative_eq!(epsilon_rule(100, 1.0).unwrap(), 0.004605170185988091, max_relative = 1e-12);
        assert_relative_eq!(epsilon_rule(1000, 1.0).unwrap(), 2.1844240e-4, max_relative = 1e-7);
        let v: Vec<f64> = (3..50).map(|n| epsilon_rule(n, 1.0).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]));
        assert!(epsilon_rule(2, 1.0).is_err());
    }

    #[test]
    fn m_opt_values() {
        assert_eq!(m_opt(TRIG, 1000, 1.0, 0.75, 1.0, 1.0).unwrap(), 3);
        assert_eq!(m_opt(TRIG, 100_000, 1.0, 0.75, 1.0, 1.0).unwrap(), 9);
        assert_eq!(m_opt(TRIG, 1, 1.0, 0.75, 1.0, 1.0).unwrap(), 1);
        assert_eq!(m_opt(BasisKind::Hermite, 1, 1.0, 0.75, 2.0, 1.0).unwrap(), 1);
        // (10^4)^{1/(2 + 1.5 + 0.5)} = 10
        assert_eq!(m_opt(BasisKind::Hermite, 10_000, 1.0, 0.75, 2.0, 1.0).unwrap(), 10);
        assert!(m_opt(TRIG, 10, 1.0, 0.75, 0.0, 1.0).is_err());
    }

    fn const_path(v: f64, n: usize) -> SdePath {
        SdePath { grid: TimeGrid::new(1.0, n).unwrap(), values: vec![v; n + 1] }
    }

    #[test]
    fn gram_simple_cases() {
        let b1 = BasisSpec::trigonometric(-2.0, 2.0, 1).unwrap();
        let g = gram(&[const_path(0.3, 10)], &b1).unwrap();
        assert_relative_eq!(g.matrix[(0, 0)], 0.25, max_relative = 1e-14);
        let b5 = BasisSpec::trigonometric(-2.0, 2.0, 5).unwrap();
        let g = gram(&[const_path(3.0, 10), const_path(-7.0, 10)], &b5).unwrap();
        assert!(g.matrix.iter().all(|v| *v == 0.0));
        assert!(gram(&[], &b5).is_err());
        assert!(gram(&[const_path(0.0, 10), const_path(0.0, 12)], &b5).is_err());
    }

    fn coupled_set(model: DriftModel, sigma: f64, count: usize, eps: f64, seed: u64) -> (SdeConfig, Vec<CoupledPaths>) {
        let grid = TimeGrid::new(1.0, 256).unwrap();
        let cfg = SdeConfig::new(model, 1.0, sigma, grid, 0.75).unwrap();
        let sampler = FbmSampler::new(grid, 0.75).unwrap();
        let set = sampler
            .sample_batch(seed, 0, count, Exec::Parallel)
            .iter()
            .map(|noise| coupled_solve(&cfg, eps, noise).unwrap())
            .collect();
        (cfg, set)
    }

    #[test]
    fn gram_is_symmetric_psd() {
        let (_, set) = coupled_set(DriftModel::Linear { mu: -1.0 }, 0.5, 40, 1e-3, 1);
        let lows: Vec<SdePath> = set.iter().map(|c| c.low.clone()).collect();
        let b = BasisSpec::trigonometric(-2.0, 2.0, 7).unwrap();
        let g = gram_with(&lows, &b, Exec::Parallel).unwrap();
        assert_eq!(g, gram(&lows, &b).unwrap());
        assert_eq!(g.matrix, g.matrix.transpose());
        let eig = g.matrix.clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|v| *v > -1e-14));
    }

    #[test]
    fn zero_drift_noiseless_gives_zero_fit() {
        let (_, set) = coupled_set(DriftModel::Linear { mu: 0.0 }, 0.0, 10, 1e-3, 2);
        let b = BasisSpec::trigonometric(-2.0, 2.0, 3).unwrap();
        let fit = fit_drift(&set, &b, 0.0, 0.75, 1.0, Exec::Sequential).unwrap();
        assert!(fit.design.iter().all(|v| *v == 0.0));
        assert!(fit.coeffs.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn truncated_fit_is_zero_function() {
        let (_, set) = coupled_set(DriftModel::Linear { mu: -1.0 }, 0.5, 20, 1e-3, 3);
        let b = BasisSpec::trigonometric(-2.0, 2.0, 3).unwrap();
        let fit = fit_drift(&set, &b, 0.5, 0.75, 1.0, Exec::Sequential).unwrap();
        assert!(fit.truncated);
        assert!(fit.coeffs.iter().all(|v| *v == 0.0));
        assert_eq!(fit.eval(0.5), 0.0);
        assert!(fit.truncation_consistent());
        assert!(fit.untruncated.is_some());
    }

    #[test]
    fn normal_equations_hold() {
        let (_, set) = coupled_set(DriftModel::DampedSine { theta: 1.0, a: 0.5 }, 0.5, 60, 1e-3, 4);
        let b = BasisSpec::trigonometric(-2.0, 2.0, 5).unwrap();
        let fit = fit_drift(&set, &b, 0.5, 0.75, 1.0, Exec::Parallel).unwrap();
        let norm: f64 = fit.design.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(fit.normal_equation_residual().unwrap() <= 1e-10 * norm);
        let seq = fit_drift(&set, &b, 0.5, 0.75, 1.0, Exec::Sequential).unwrap();
        assert_eq!(fit, seq);
    }

    #[test]
    fn derivative_fit_linear_drift() {
        let mu = -1.0;
        let (_, set) = coupled_set(DriftModel::Linear { mu }, 0.5, 50, 1e-2, 5);
        let b = BasisSpec::trigonometric(-2.0, 2.0, 3).unwrap();
        let fit = fit_drift_derivative(&set, &b, Exec::Sequential).unwrap();
        let theta = fit.untruncated.clone().unwrap();
        // Euler flow difference gives log(1 + μΔ)/Δ instead of μ
        let discrete = (1.0 + mu / 256.0).ln() * 256.0;
        for i in 0..=40 {
            let x = -2.0 + 0.1 * i as f64;
            assert!((b.combine(&theta, x) - discrete).abs() < 1e-10, "{x}");
            assert!((b.combine(&theta, x) - mu).abs() < 2.5e-3, "{x}");
        }
        assert_relative_eq!(theta[0], discrete * 2.0, max_relative = 1e-10);

        let (_, set2) = coupled_set(DriftModel::Linear { mu }, 0.5, 50, 5e-3, 5);
        let fit2 = fit_drift_derivative(&set2, &b, Exec::Sequential).unwrap();
        for (a, c) in theta.iter().zip(fit2.untruncated.as_ref().unwrap()) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_fit_zero_drift() {
        let (_, set) = coupled_set(DriftModel::Linear { mu: 0.0 }, 0.5, 30, 1e-3, 6);
        let b = BasisSpec::trigonometric(-2.0, 2.0, 3).unwrap();
        let fit = fit_drift_derivative(&set, &b, Exec::Sequential).unwrap();
        assert!(fit.untruncated.unwrap().iter().all(|v| v.abs() < 1e-12));
        assert_eq!(fit.kappa, 0.0);
    }

    #[test]
    fn derivative_fit_is_projection_of_b_prime() {
        // brute-force normal equations with the exact b' along the paths
        let model = DriftModel::DampedSine { theta: 1.0, a: 0.5 };
        let (_, set) = coupled_set(model, 0.5, 40, 1e-4, 7);
        let b = BasisSpec::trigonometric(-2.0, 2.0, 3).unwrap();
        let fit = fit_drift_derivative(&set, &b, Exec::Sequential).unwrap();
        let n = 256;
        let dt = 1.0 / n as f64;
        let mut rhs = [0.0; 3];
        for c in &set {
            for &x in &c.low.values[..n] {
                let w = dt;
                let phi = b.eval(x);
                for j in 0..3 {
                    rhs[j] += w * phi[j] * model.b_prime(x);
                }
            }
        }
        let rhs: Vec<f64> = rhs.iter().map(|v| v / set.len() as f64).collect();
        let brute = fit.gram.matrix.clone().lu().solve(&DVector::from_column_slice(&rhs)).unwrap();
        let theta = fit.untruncated.unwrap();
        for x in [-0.5, 0.3, 1.2] {
            let lhs = b.combine(&theta, x);
            let rhs = b.combine(brute.as_slice(), x);
            assert!((lhs - rhs).abs() < 5e-3, "x = {x}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn primitive_cases() {
        let b = BasisSpec::trigonometric(-2.0, 2.0, 5).unwrap();
        let mu = -1.0;
        let coeffs = vec![mu * 2.0, 0.0, 0.0, 0.0, 0.0]; // ≡ μ on [−2, 2]
        let p = AnchoredPrimitive::new(b, coeffs.clone(), -2.0, 2.0).unwrap();
        for x in [-2.0, -1.0, 0.0, 0.7, 2.0] {
            assert_relative_eq!(p.eval(x), mu * x, epsilon = 1e-12);
        }
        let shifted = AnchoredPrimitive::new(b, coeffs, -2.0, 2.5).unwrap();
        assert_relative_eq!(shifted.eval(0.3) - p.eval(0.3), 0.5, epsilon = 1e-12);
        let zero = AnchoredPrimitive::new(b, vec![0.0; 5], -2.0, 1.25).unwrap();
        assert_eq!(zero.eval(1.1), 1.25);
        let odd = AnchoredPrimitive::new(b, vec![0.3, -0.2, 0.5, 0.1, 0.9], 0.37, -0.4).unwrap();
        assert_eq!(odd.eval(0.37), -0.4);
        assert!(AnchoredPrimitive::new(BasisSpec::hermite(3).unwrap(), vec![0.0; 3], 0.0, 0.0).is_err());
    }

    #[test]
    fn csv_and_metadata() {
        let (_, set) = coupled_set(DriftModel::Linear { mu: -1.0 }, 0.5, 5, 1e-3, 8);
        let b = BasisSpec::trigonometric(-2.0, 2.0, 3).unwrap();
        let fit = fit_drift(&set, &b, 0.5, 0.75, 1.0, Exec::Sequential).unwrap();
        let mut csv = Vec::new();
        fit.write_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("j,theta_j\n0,"));
        let mut meta = Vec::new();
        fit.write_metadata(&mut meta).unwrap();
        let meta = String::from_utf8(meta).unwrap();
        for key in ["truncated = true", "opnorm_inv = ", "L_m = ", "kappa = ", "N = 5", "T = ", "epsilon = "] {
            assert!(meta.contains(key), "{key}");
        }
    }
}
