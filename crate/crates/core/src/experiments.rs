//! Monte Carlo trials: simulate, fit, and score against the known drift.

use std::io::Write;

use crate::basis::{BasisKind, BasisSpec};
use crate::estimators::{
    epsilon_rule, fit_drift, fit_drift_derivative, m_opt, primitive_from_derivative, FitResult, Target,
};
use crate::exec::{mix_seed, Exec};
use crate::fbm::{FbmSampler, TimeGrid};
use crate::io::{format_real, write_csv};
use crate::sde::{coupled_solve, euler_solve, CoupledPaths, DriftModel, SdeConfig, SdePath};
use crate::{Error, Result};

/// Points used for the sup-error of an anchored primitive.
const PRIMITIVE_PROBE_POINTS: usize = 2001;

/// How the initial-condition gap of the coupled paths is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsilonPolicy {
    /// `ε_{N,T}` from the training sample size.
    Rule,
    Fixed(f64),
}

/// How the basis dimension is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DimPolicy {
    /// Keep the dimension of the configured basis.
    Fixed,
    /// `m_opt(N)` for the given smoothness of the target.
    Opt { smoothness: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialConfig {
    pub drift: DriftModel,
    pub x0: f64,
    pub sigma: f64,
    pub hurst: f64,
    pub horizon: f64,
    pub steps: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub basis: BasisSpec,
    pub kappa: f64,
    pub epsilon: EpsilonPolicy,
    pub dim: DimPolicy,
    pub target: Target,
    pub seed: u64,
}

impl Default for TrialConfig {
    /// OU drift `b(x) = −x`, `T = 1`, `n = 256`, `H = 0.75`, `σ = 0.5`,
    /// trigonometric basis on `[−2, 2]` with `m = m_opt(N)`.
    fn default() -> Self {
        Self {
            drift: DriftModel::Linear { mu: -1.0 },
            x0: 1.0,
            sigma: 0.5,
            hurst: 0.75,
            horizon: 1.0,
            steps: 256,
            n_train: 200,
            n_eval: 200,
            basis: BasisSpec::trigonometric(-2.0, 2.0, 3).expect("valid default basis"),
            kappa: 0.0,
            epsilon: EpsilonPolicy::Rule,
            dim: DimPolicy::Opt { smoothness: 1.0 },
            target: Target::Drift,
            seed: 1,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_eval == 0 {
            return Err(Error::Domain("n_train and n_eval must be at least 1".into()));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::Domain(format!("kappa must be nonnegative, got {}", self.kappa)));
        }
        if let EpsilonPolicy::Fixed(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::Domain(format!("epsilon must be positive, got {eps}")));
            }
        }
        self.sde_config().map(|_| ())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.steps)
    }

    pub fn sde_config(&self) -> Result<SdeConfig> {
        SdeConfig::new(self.drift, self.x0, self.sigma, self.grid()?, self.hurst)
    }

    /// Copy with another training size (and the same evaluation size).
    pub fn with_paths(&self, n: usize) -> Self {
        Self { n_train: n, n_eval: n, ..*self }
    }

    pub fn resolved_epsilon(&self) -> Result<f64> {
        match self.epsilon {
            EpsilonPolicy::Rule => epsilon_rule(self.n_train, self.horizon),
            EpsilonPolicy::Fixed(eps) => Ok(eps),
        }
    }

    pub fn resolved_basis(&self) -> Result<BasisSpec> {
        match self.dim {
            DimPolicy::Fixed => Ok(self.basis),
            DimPolicy::Opt { smoothness } => {
                let m = m_opt(self.basis.kind(), self.n_train, self.horizon, self.hurst, smoothness, self.kappa)?;
                self.basis.with_dim(m)
            }
        }
    }

    /// Seeds of the training and evaluation noise for one replication.
    pub fn replication_seeds(&self, replication: u64) -> (u64, u64) {
        let rep = mix_seed(self.seed, replication);
        (mix_seed(rep, 0), mix_seed(rep, 1))
    }

    /// The estimated function, masked to the basis support.
    pub fn truth(&self, x: f64) -> f64 {
        let value = match self.target {
            Target::Drift => self.drift.b(x),
            Target::DriftDerivative => self.drift.b_prime(x),
        };
        if self.basis.contains(x) {
            value
        } else {
            0.0
        }
    }
}

/// Scores of one replication.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskReport {
    pub replication: u64,
    /// `‖b̃ − b_A‖²_N` on the training paths.
    pub empirical_risk_train: f64,
    /// The same norm on `n_eval` fresh paths.
    pub weighted_risk_holdout: f64,
    /// Holdout risk of the estimator before truncation.
    pub untruncated_risk_holdout: f64,
    pub truncated: bool,
    pub m: usize,
    pub epsilon: f64,
    /// Sup-error on `[ℓ, r]` of the primitive anchored at `ℓ` with the exact
    /// value; derivative fits on a compact basis only.
    pub primitive_sup_error: Option<f64>,
    pub untruncated_primitive_sup_error: Option<f64>,
    pub config: TrialConfig,
}

/// `(1/(NT)) Σ_i ∫_0^T g(X^i(s))² ds`, trapezoid in time.
pub fn empirical_sq_norm<F: Fn(f64) -> f64>(g: F, paths: &[SdePath]) -> f64 {
    if paths.is_empty() {
        return 0.0;
    }
    let grid = paths[0].grid;
    let dt = grid.dt();
    let mut total = 0.0;
    for p in paths {
        let n = p.grid.steps();
        let mut s = 0.0;
        for (k, &x) in p.values.iter().take(n + 1).enumerate() {
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            s += w * g(x).powi(2);
        }
        total += s * dt;
    }
    total / (paths.len() as f64 * grid.horizon())
}

/// `‖b̃ − b_A‖²_N` where the truth is the drift or its derivative according
/// to the fit target, masked to the basis support.
pub fn empirical_risk(fit: &FitResult, drift: &DriftModel, paths: &[SdePath]) -> f64 {
    let truth = |x: f64| {
        if !fit.basis.contains(x) {
            return 0.0;
        }
        match fit.target {
            Target::Drift => drift.b(x),
            Target::DriftDerivative => drift.b_prime(x),
        }
    };
    empirical_sq_norm(|x| fit.eval(x) - truth(x), paths)
}

fn untruncated_risk(fit: &FitResult, config: &TrialConfig, paths: &[SdePath]) -> f64 {
    empirical_sq_norm(|x| fit.eval_untruncated(x) - config.truth(x), paths)
}

fn primitive_errors(fit: &FitResult, drift: &DriftModel) -> Result<(Option<f64>, Option<f64>)> {
    let (lo, hi) = match fit.basis.kind() {
        BasisKind::Trigonometric { lo, hi } if fit.target == Target::DriftDerivative => (lo, hi),
        _ => return Ok((None, None)),
    };
    let sup = |coeffs: &[f64]| -> Result<f64> {
        let mut f = fit.clone();
        f.coeffs = coeffs.to_vec();
        let prim = primitive_from_derivative(&f, lo, drift.b(lo))?;
        let mut worst = 0.0f64;
        for i in 0..PRIMITIVE_PROBE_POINTS {
            let x = lo + (hi - lo) * i as f64 / (PRIMITIVE_PROBE_POINTS - 1) as f64;
            worst = worst.max((prim.eval(x) - drift.b(x)).abs());
        }
        Ok(worst)
    };
    let kept = sup(&fit.coeffs)?;
    let untruncated = match &fit.untruncated {
        Some(c) => Some(sup(c)?),
        None => None,
    };
    Ok((Some(kept), untruncated))
}

/// Training sample for one replication: coupled paths from `x0` and `x0 + ε`.
pub fn simulate_training(config: &TrialConfig, replication: u64, exec: Exec) -> Result<Vec<CoupledPaths>> {
    config.validate()?;
    let sde = config.sde_config()?;
    let epsilon = config.resolved_epsilon()?;
    let sampler = FbmSampler::new(sde.grid, config.hurst)?;
    let (train_seed, _) = config.replication_seeds(replication);
    exec.try_map(config.n_train, |i| coupled_solve(&sde, epsilon, &sampler.sample(train_seed, i as u64)))
}

/// Independent evaluation paths for one replication.
pub fn simulate_holdout(config: &TrialConfig, replication: u64, exec: Exec) -> Result<Vec<SdePath>> {
    config.validate()?;
    let sde = config.sde_config()?;
    let sampler = FbmSampler::new(sde.grid, config.hurst)?;
    let (_, eval_seed) = config.replication_seeds(replication);
    exec.try_map(config.n_eval, |i| euler_solve(&sde, &sampler.sample(eval_seed, i as u64)))
}

/// Fits the configured target on a training sample.
pub fn fit_training(config: &TrialConfig, train: &[CoupledPaths], exec: Exec) -> Result<FitResult> {
    let basis = config.resolved_basis()?;
    let mut fit = match config.target {
        Target::Drift => fit_drift(train, &basis, config.sigma, config.hurst, config.kappa, exec)?,
        Target::DriftDerivative => fit_drift_derivative(train, &basis, exec)?,
    };
    fit.seed = Some(config.seed);
    Ok(fit)
}

/// One replication: simulate, fit, score. Deterministic in
/// `(config.seed, replication)`.
pub fn run_trial(config: &TrialConfig, replication: u64, exec: Exec) -> Result<RiskReport> {
    let train = simulate_training(config, replication, exec)?;
    let fit = fit_training(config, &train, exec)?;
    let holdout = simulate_holdout(config, replication, exec)?;
    let lows: Vec<SdePath> = train.into_iter().map(|c| c.low).collect();
    let (primitive_sup_error, untruncated_primitive_sup_error) = primitive_errors(&fit, &config.drift)?;
    Ok(RiskReport {
        replication,
        empirical_risk_train: empirical_risk(&fit, &config.drift, &lows),
        weighted_risk_holdout: empirical_risk(&fit, &config.drift, &holdout),
        untruncated_risk_holdout: untruncated_risk(&fit, config, &holdout),
        truncated: fit.truncated,
        m: fit.basis.dim(),
        epsilon: fit.epsilon,
        primitive_sup_error,
        untruncated_primitive_sup_error,
        config: *config,
    })
}

/// Sample mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub mean_risk: f64,
    pub se: f64,
    pub truncation_rate: f64,
    pub m: usize,
    pub epsilon: f64,
    pub mean_untruncated_risk: f64,
    pub se_untruncated: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `log(mean_risk)` against `log N`; NaN when a
    /// mean risk is zero.
    pub slope: f64,
    pub untruncated_slope: f64,
    pub replications: usize,
    pub config: TrialConfig,
}

impl SweepTable {
    /// `N,mean_risk,se,truncation_rate,m,epsilon` plus the untruncated
    /// diagnostics.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    format_real(r.mean_risk),
                    format_real(r.se),
                    format_real(r.truncation_rate),
                    r.m.to_string(),
                    format_real(r.epsilon),
                    format_real(r.mean_untruncated_risk),
                    format_real(r.se_untruncated),
                ]
            })
            .collect();
        write_csv(
            out,
            &["N", "mean_risk", "se", "truncation_rate", "m", "epsilon", "mean_untruncated_risk", "se_untruncated"],
            &rows,
        )
    }

    /// Number of consecutive pairs where the mean risk does not decrease.
    pub fn inversions(&self) -> usize {
        self.rows.windows(2).filter(|w| !(w[1].mean_risk < w[0].mean_risk)).count()
    }
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn log_slope(ns: &[usize], risks: &[f64]) -> f64 {
    if risks.iter().any(|r| !(*r > 0.0)) {
        return f64::NAN;
    }
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = risks.iter().map(|r| r.ln()).collect();
    ls_slope(&x, &y)
}

/// Runs `replications` trials for every `N` in `sizes` (with `N_eval = N`)
/// and fits the log-log slope of the mean holdout risk. Replications are
/// scheduled by `exec`; the paths inside a trial are simulated sequentially.
pub fn rate_sweep(template: &TrialConfig, sizes: &[usize], replications: usize, exec: Exec) -> Result<SweepTable> {
    if sizes.len() < 4 {
        return Err(Error::Precondition(format!("a sweep needs at least 4 sample sizes, got {}", sizes.len())));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("sample sizes must be strictly increasing".into()));
    }
    if replications < 20 {
        return Err(Error::Precondition(format!("a sweep needs at least 20 replications, got {replications}")));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let config = template.with_paths(n);
        config.validate()?;
        let reports = exec.try_map(replications, |r| run_trial(&config, r as u64, Exec::Sequential))?;
        let risks: Vec<f64> = reports.iter().map(|r| r.weighted_risk_holdout).collect();
        let raw: Vec<f64> = reports.iter().map(|r| r.untruncated_risk_holdout).collect();
        let (mean_risk, se) = mean_se(&risks);
        let (mean_untruncated_risk, se_untruncated) = mean_se(&raw);
        let truncation_rate = reports.iter().filter(|r| r.truncated).count() as f64 / replications as f64;
        rows.push(SweepRow {
            n,
            mean_risk,
            se,
            truncation_rate,
            m: reports[0].m,
            epsilon: reports[0].epsilon,
            mean_untruncated_risk,
            se_untruncated,
        });
    }
    let ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    let slope = log_slope(&ns, &rows.iter().map(|r| r.mean_risk).collect::<Vec<_>>());
    let untruncated_slope = log_slope(&ns, &rows.iter().map(|r| r.mean_untruncated_risk).collect::<Vec<_>>());
    Ok(SweepTable { rows, slope, untruncated_slope, replications, config: *template })
}

/// Time-and-path averaged histogram of the path values.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// Fraction of occupation time in each bin.
    pub mass: Vec<f64>,
    /// `mass / width`.
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Index of the bin with the largest density.
    pub fn mode_bin(&self) -> usize {
        let mut best = 0;
        for (i, d) in self.density.iter().enumerate() {
            if *d > self.density[best] {
                best = i;
            }
        }
        best
    }

    /// `bin_lo,bin_hi,density,mass` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let rows: Vec<Vec<String>> = (0..self.mass.len())
            .map(|i| {
                vec![
                    format_real(self.edges[i]),
                    format_real(self.edges[i + 1]),
                    format_real(self.density[i]),
                    format_real(self.mass[i]),
                ]
            })
            .collect();
        write_csv(out, &["bin_lo", "bin_hi", "density", "mass"], &rows)
    }
}

/// Occupation histogram estimating `f_T`: each grid value gets its trapezoid
/// time weight divided by `NT`. Bins are half-open except the last one.
pub fn occupation_density(paths: &[SdePath], edges: &[f64]) -> Result<Histogram> {
    if paths.is_empty() {
        return Err(Error::Precondition("occupation density needs at least one path".into()));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("bin edges must be strictly increasing, at least two".into()));
    }
    let bins = edges.len() - 1;
    let mut mass = vec![0.0; bins];
    let norm = paths.len() as f64 * paths[0].grid.horizon();
    for p in paths {
        let n = p.grid.steps();
        let dt = p.grid.dt();
        for (k, &x) in p.values.iter().take(n + 1).enumerate() {
            let w = if k == 0 || k == n { 0.5 * dt } else { dt };
            if let Some(b) = bin_of(edges, x) {
                mass[b] += w / norm;
            }
        }
    }
    let density = mass.iter().zip(edges.windows(2)).map(|(m, w)| m / (w[1] - w[0])).collect();
    Ok(Histogram { edges: edges.to_vec(), mass, density })
}

fn bin_of(edges: &[f64], x: f64) -> Option<usize> {
    let last = edges.len() - 1;
    if !(x >= edges[0] && x <= edges[last]) {
        return None;
    }
    if x == edges[last] {
        return Some(last - 1);
    }
    Some(edges.partition_point(|e| *e <= x) - 1)
}

/// `count` equal bins on `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|i| lo + (hi - lo) * i as f64 / count as f64).collect()
}
