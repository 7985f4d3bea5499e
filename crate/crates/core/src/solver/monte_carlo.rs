use rayon::prelude::*;

use super::kalman::{covariance_trajectory, ErrorReport};
use super::step::{check_initial, StepPlan};
use super::Vector;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{frobenius_pairing, LinearSdeModel};
use crate::rng::StreamKey;

pub const MIN_PATHS: usize = 100;

/// A Monte Carlo mean compared against its predicted value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseEstimate {
    pub sample_mse: f64,
    pub predicted: f64,
    pub std_error: f64,
}

impl MseEstimate {
    fn from_samples(samples: impl Iterator<Item = f64> + Clone, predicted: f64) -> Self {
        let n = samples.clone().count() as f64;
        let mean = samples.clone().sum::<f64>() / n;
        let var = samples.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            sample_mse: mean,
            predicted,
            std_error: (var / n).sqrt(),
        }
    }

    /// `(sample - predicted) / std_error`; zero when both agree exactly.
    pub fn zscore(&self) -> f64 {
        let gap = self.sample_mse - self.predicted;
        if gap == 0.0 {
            0.0
        } else {
            gap / self.std_error
        }
    }

    pub fn within(&self, sigmas: f64) -> bool {
        (self.sample_mse - self.predicted).abs() <= sigmas * self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McReport {
    pub n: usize,
    pub paths: usize,
    /// `|X_T - mu_{N-1}|_M^2` against `<M, Sigma_{N-1}>`
    pub terminal: MseEstimate,
    /// `sum_k |X_{t_{k+1}} - mu_k|_M^2 dt_k` against the integrated error
    pub integral: MseEstimate,
}

impl McReport {
    pub const CSV_HEADER: [&'static str; 5] = ["N", "sample_mse", "predicted", "stderr", "zscore"];

    pub fn terminal_csv(&self) -> [f64; 5] {
        Self::row(self.n, &self.terminal)
    }

    pub fn integral_csv(&self) -> [f64; 5] {
        Self::row(self.n, &self.integral)
    }

    fn row(n: usize, e: &MseEstimate) -> [f64; 5] {
        [n as f64, e.sample_mse, e.predicted, e.std_error, e.zscore()]
    }
}

struct PathErrors {
    terminal: f64,
    integral: f64,
    euler: f64,
}

fn check_paths(paths: usize) -> Result<()> {
    if paths < MIN_PATHS {
        return Err(Error::InvalidInput(format!(
            "{paths} paths requested, at least {MIN_PATHS} needed"
        )));
    }
    Ok(())
}

/// Simulates exact paths and filters each on its own increments. Path `p`
/// draws step `k` from the stream position `(seed, p, k)`, so the result
/// does not depend on scheduling.
fn simulate(
    model: &LinearSdeModel,
    grid: &TimeGrid,
    x0: &Vector,
    paths: usize,
    key: StreamKey,
) -> Result<Vec<PathErrors>> {
    check_initial(model, x0)?;
    check_paths(paths)?;
    let plan = StepPlan::new(model, grid)?;
    let a = model.dynamics();
    let weight = model.weight();
    let norm = |e: &Vector| (e.transpose() * weight * e)[(0, 0)];
    Ok((0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = key.path(p);
            let mut x = x0.clone();
            let mut mu = x0.clone();
            let mut euler = x0.clone();
            let mut integral = 0.0;
            let mut terminal = 0.0;
            for k in 0..plan.len() {
                StreamKey::seek(&mut rng, k);
                let step = plan.step(k);
                let (dw, z) = step.sample(&mut rng);
                euler = &euler + a * &euler * step.dt + model.dispersion() * &dw;
                x = &step.transition * &x + z;
                mu = step.propagate_mean(&mu, &dw);
                terminal = norm(&(&x - &mu));
                integral += terminal * step.dt;
            }
            PathErrors {
                terminal,
                integral,
                euler: norm(&(&x - &euler)),
            }
        })
        .collect())
}

fn predicted(model: &LinearSdeModel, grid: &TimeGrid) -> Result<ErrorReport> {
    let sigmas = covariance_trajectory(model, grid)?;
    let mut integral = 0.0;
    let mut terminal = 0.0;
    for (s, dt) in sigmas.iter().zip(grid.steps()) {
        terminal = frobenius_pairing(model.weight(), s)?;
        integral += terminal * dt;
    }
    Ok(ErrorReport {
        n: grid.len(),
        terminal,
        integral,
    })
}

/// Empirical filter errors over `paths` exact paths against the deterministic
/// covariance recursion.
pub fn mc_verify_mse(
    model: &LinearSdeModel,
    grid: &TimeGrid,
    x0: &Vector,
    paths: usize,
    key: StreamKey,
) -> Result<McReport> {
    let errs = simulate(model, grid, x0, paths, key)?;
    let report = predicted(model, grid)?;
    Ok(McReport {
        n: grid.len(),
        paths,
        terminal: MseEstimate::from_samples(errs.iter().map(|e| e.terminal), report.terminal),
        integral: MseEstimate::from_samples(errs.iter().map(|e| e.integral), report.integral),
    })
}

/// Euler-Maruyama terminal error on the same paths as the filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerComparison {
    pub euler: MseEstimate,
    pub filter: MseEstimate,
}

pub fn mc_compare_euler(
    model: &LinearSdeModel,
    grid: &TimeGrid,
    x0: &Vector,
    paths: usize,
    key: StreamKey,
) -> Result<EulerComparison> {
    let errs = simulate(model, grid, x0, paths, key)?;
    let report = predicted(model, grid)?;
    Ok(EulerComparison {
        euler: MseEstimate::from_samples(errs.iter().map(|e| e.euler), report.terminal),
        filter: MseEstimate::from_samples(errs.iter().map(|e| e.terminal), report.terminal),
    })
}
