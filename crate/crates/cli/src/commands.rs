//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fsde_core::estimators::Target;
use fsde_core::experiments::{
    empirical_risk, fit_training, occupation_density, rate_sweep, simulate_holdout, simulate_training,
};
use fsde_core::io::{format_real, write_csv};
use fsde_core::validate::{run_suite, SuiteOptions};
use fsde_core::{Exec, SdePath};

use crate::config::RunConfig;
use crate::CliError;

/// Points of the estimate curve in `curve.csv`.
const CURVE_POINTS: usize = 401;

pub struct Output {
    dir: PathBuf,
}

impl Output {
    /// Creates `dir`, refusing a non-empty one unless `force` is set.
    pub fn prepare(dir: &Path, force: bool) -> Result<Self, CliError> {
        if dir.exists() {
            let occupied = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?.next().is_some();
            if occupied && !force {
                return Err(CliError::Config(format!(
                    "output directory {} is not empty; pass --force to overwrite",
                    dir.display()
                )));
            }
        }
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_with<F>(&self, name: &str, f: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut out = BufWriter::new(file);
        f(&mut out).and_then(|_| out.flush()).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn echo_config(&self, config: &RunConfig) -> Result<(), CliError> {
        let text = config.to_toml();
        self.write_with("config.toml", |out| out.write_all(text.as_bytes()))?;
        Ok(())
    }
}

fn warn_about(config: &RunConfig) {
    if config.model.x0 == 0.0 {
        eprintln!("warning: x0 = 0");
    }
}

pub fn simulate(config: &RunConfig, out: &Output, exec: Exec) -> Result<(), CliError> {
    warn_about(config);
    let trial = config.trial()?;
    let coupled = simulate_training(&trial, 0, exec)?;
    let width = coupled.len().saturating_sub(1).to_string().len().max(5);
    let mut files = Vec::with_capacity(coupled.len());
    for (i, c) in coupled.iter().enumerate() {
        let name = format!("paths/path_{i:0width$}.csv");
        let times = c.low.grid.times();
        let rows: Vec<Vec<String>> = (0..c.low.len())
            .map(|k| vec![format_real(times[k]), format_real(c.low.values[k]), format_real(c.high.values[k])])
            .collect();
        out.write_with(&name, |w| write_csv(w, &["t", "x_low", "x_high"], &rows))?;
        files.push(name);
    }
    let (train_seed, _) = trial.replication_seeds(0);
    let epsilon = trial.resolved_epsilon()?;
    out.write_with("manifest.toml", |w| {
        writeln!(w, "paths = {}", files.len())?;
        writeln!(w, "epsilon = {}", format_real(epsilon))?;
        writeln!(w, "seed = {}", trial.seed)?;
        writeln!(w, "noise_seed = {train_seed}")?;
        writeln!(w, "columns = [\"t\", \"x_low\", \"x_high\"]")?;
        writeln!(w, "files = [")?;
        for f in &files {
            writeln!(w, "  \"{f}\",")?;
        }
        writeln!(w, "]")
    })?;
    out.echo_config(config)?;
    println!("wrote {} coupled paths (epsilon = {epsilon:e})", files.len());
    Ok(())
}

pub fn estimate(config: &RunConfig, out: &Output, exec: Exec) -> Result<(), CliError> {
    warn_about(config);
    let trial = config.trial()?;
    let train = simulate_training(&trial, 0, exec)?;
    let fit = fit_training(&trial, &train, exec)?;
    let lows: Vec<SdePath> = train.into_iter().map(|c| c.low).collect();
    let holdout = simulate_holdout(&trial, 0, exec)?;
    let risk_train = empirical_risk(&fit, &trial.drift, &lows);
    let risk_holdout = empirical_risk(&fit, &trial.drift, &holdout);

    out.write_with("fit.csv", |w| fit.write_csv(w))?;
    out.write_with("fit.toml", |w| {
        fit.write_metadata(&mut *w)?;
        writeln!(w, "risk_train = {}", format_real(risk_train))?;
        writeln!(w, "risk_holdout = {}", format_real(risk_holdout))
    })?;
    let hist = occupation_density(&lows, &config.density_edges()?)?;
    out.write_with("density.csv", |w| hist.write_csv(w))?;

    let (lo, hi) = fit.basis.support().unwrap_or((-4.0, 4.0));
    let rows: Vec<Vec<String>> = (0..CURVE_POINTS)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64;
            let truth = match fit.target {
                Target::Drift => trial.drift.b(x),
                Target::DriftDerivative => trial.drift.b_prime(x),
            };
            vec![format_real(x), format_real(fit.eval(x)), format_real(fit.eval_untruncated(x)), format_real(truth)]
        })
        .collect();
    out.write_with("curve.csv", |w| write_csv(w, &["x", "estimate", "untruncated", "truth"], &rows))?;
    out.echo_config(config)?;

    println!("basis {} (m = {}), epsilon = {:e}", fit.basis, fit.basis.dim(), fit.epsilon);
    println!("truncated = {}, opnorm_inv = {:e}, L_m = {}", fit.truncated, fit.opnorm_inv, fit.l_m);
    println!("risk_train = {risk_train:e}, risk_holdout = {risk_holdout:e}");
    Ok(())
}

pub fn sweep(config: &RunConfig, out: &Output, exec: Exec) -> Result<(), CliError> {
    warn_about(config);
    config.check_sweep()?;
    let trial = config.trial()?;
    let table = rate_sweep(&trial, &config.sweep.sizes, config.sweep.replications, exec)?;
    out.write_with("sweep.csv", |w| table.write_csv(w))?;
    out.echo_config(config)?;
    println!("{:>8} {:>4} {:>14} {:>10} {:>8}", "N", "m", "mean_risk", "se", "trunc");
    for r in &table.rows {
        println!("{:>8} {:>4} {:>14.6e} {:>10.2e} {:>8.2}", r.n, r.m, r.mean_risk, r.se, r.truncation_rate);
    }
    println!("slope = {:.4}", table.slope);
    println!("untruncated slope = {:.4}", table.untruncated_slope);
    Ok(())
}

/// Prints every check; `Ok(false)` when one fails.
pub fn validate(seed: Option<u64>, alpha_scale: f64, exec: Exec) -> Result<bool, CliError> {
    let mut opts = SuiteOptions { alpha_scale, ..SuiteOptions::default() };
    if let Some(seed) = seed {
        opts.seed = seed;
    }
    let checks = run_suite(&opts, exec)?;
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    println!("{} checks, {failed} failed", checks.len());
    Ok(failed == 0)
}
