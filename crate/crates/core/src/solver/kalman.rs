use std::io::{self, Write};

use super::step::{check_initial, StepMatrices, StepPlan, WienerIncrements};
use super::Vector;
use crate::csv;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::matfun::{self, Matrix};
use crate::model::{frobenius_pairing, LinearSdeModel};

/// Conditional mean and covariance of `X_{t_{step+1}}` given the increments
/// up to `step`. The initial state has `step = -1`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub step: isize,
    pub mu: Vector,
    pub sigma: Matrix,
}

impl KalmanState {
    pub fn initial(x0: &Vector) -> Self {
        let n = x0.len();
        Self {
            step: -1,
            mu: x0.clone(),
            sigma: Matrix::zeros(n, n),
        }
    }

    fn advance(&self, step: &StepMatrices, dw: &Vector) -> Self {
        Self {
            step: self.step + 1,
            mu: step.propagate_mean(&self.mu, dw),
            sigma: step.propagate_covariance(&self.sigma),
        }
    }
}

pub fn kalman_step(
    model: &LinearSdeModel,
    state: &KalmanState,
    dt: f64,
    dw: &Vector,
) -> Result<KalmanState> {
    let n = model.state_dim();
    if state.mu.len() != n || state.sigma.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "filter state does not match state dimension {n}"
        )));
    }
    if dw.len() != model.noise_dim() {
        return Err(Error::DimensionMismatch(format!(
            "increment has {} entries, noise dimension is {}",
            dw.len(),
            model.noise_dim()
        )));
    }
    if state.mu.iter().chain(state.sigma.iter()).chain(dw.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite filter input".to_string()));
    }
    let step = StepMatrices::new(model, dt)?;
    Ok(state.advance(&step, dw))
}

/// Terminal and integrated weighted mean-square errors of the filter on one grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub n: usize,
    pub terminal: f64,
    pub integral: f64,
}

impl ErrorReport {
    pub const CSV_HEADER: [&'static str; 5] = ["N", "T_N", "I_N", "N2T_N", "N2I_N"];

    pub fn rescaled_terminal(&self) -> f64 {
        (self.n as f64).powi(2) * self.terminal
    }

    pub fn rescaled_integral(&self) -> f64 {
        (self.n as f64).powi(2) * self.integral
    }

    pub fn csv_values(&self) -> [f64; 5] {
        [
            self.n as f64,
            self.terminal,
            self.integral,
            self.rescaled_terminal(),
            self.rescaled_integral(),
        ]
    }

    fn from_covariances(model: &LinearSdeModel, grid: &TimeGrid, sigmas: &[Matrix]) -> Result<Self> {
        let m = model.weight();
        let mut integral = 0.0;
        let mut terminal = 0.0;
        for (sigma, dt) in sigmas.iter().zip(grid.steps()) {
            terminal = frobenius_pairing(m, sigma)?;
            integral += terminal * dt;
        }
        Ok(Self {
            n: grid.len(),
            terminal,
            integral,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    /// `N + 1` states, from the initial one (`step = -1`) to `step = N - 1`.
    pub states: Vec<KalmanState>,
    pub report: ErrorReport,
}

impl FilterRun {
    pub fn terminal_mean(&self) -> &Vector {
        &self.states.last().expect("at least the initial state").mu
    }

    pub fn covariances(&self) -> impl Iterator<Item = &Matrix> {
        self.states.iter().skip(1).map(|s| &s.sigma)
    }
}

pub fn run_filter(
    model: &LinearSdeModel,
    grid: &TimeGrid,
    x0: &Vector,
    increments: &WienerIncrements,
) -> Result<FilterRun> {
    check_initial(model, x0)?;
    if increments.grid != *grid {
        return Err(Error::DimensionMismatch(
            "increments were drawn on a different grid".to_string(),
        ));
    }
    if let Some(w) = increments.increments.iter().find(|w| w.len() != model.noise_dim()) {
        return Err(Error::DimensionMismatch(format!(
            "increment has {} entries, noise dimension is {}",
            w.len(),
            model.noise_dim()
        )));
    }
    if increments.increments.iter().flat_map(|w| w.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite increment".to_string()));
    }
    let plan = StepPlan::new(model, grid)?;
    let mut states = Vec::with_capacity(grid.len() + 1);
    states.push(KalmanState::initial(x0));
    for (k, dw) in increments.increments.iter().enumerate() {
        let next = states[k].advance(plan.step(k), dw);
        states.push(next);
    }
    let sigmas: Vec<Matrix> = states.iter().skip(1).map(|s| s.sigma.clone()).collect();
    let report = ErrorReport::from_covariances(model, grid, &sigmas)?;
    Ok(FilterRun { states, report })
}

/// `Sigma_0 .. Sigma_{N-1}`; these do not depend on the increments.
pub fn covariance_trajectory(model: &LinearSdeModel, grid: &TimeGrid) -> Result<Vec<Matrix>> {
    let plan = StepPlan::new(model, grid)?;
    let n = model.state_dim();
    let mut sigma = Matrix::zeros(n, n);
    let mut out = Vec::with_capacity(plan.len());
    for k in 0..plan.len() {
        sigma = plan.step(k).propagate_covariance(&sigma);
        out.push(sigma.clone());
    }
    Ok(out)
}

pub fn error_report(model: &LinearSdeModel, grid: &TimeGrid) -> Result<ErrorReport> {
    let sigmas = covariance_trajectory(model, grid)?;
    ErrorReport::from_covariances(model, grid, &sigmas)
}

/// `Sigma_k` as a sum of propagated one-step residual covariances.
pub fn closed_form_sigma(model: &LinearSdeModel, grid: &TimeGrid, k: usize) -> Result<Matrix> {
    if k >= grid.len() {
        return Err(Error::InvalidInput(format!(
            "step index {k} out of range for {} steps",
            grid.len()
        )));
    }
    let a = model.dynamics();
    let d = model.diffusion();
    let t = grid.points();
    let n = model.state_dim();
    let mut sigma = Matrix::zeros(n, n);
    for (j, &dt) in grid.steps()[..=k].iter().enumerate() {
        let residual = matfun::kt_matrix(a, d, dt)? * dt.powi(3);
        let prop = matfun::mat_exp(a, t[k + 1] - t[j + 1])?;
        sigma += &prop * residual * prop.transpose();
    }
    Ok(matfun::symmetrize(&sigma))
}

/// Writes `k,t,mu_1..mu_n,sigma_11..sigma_nn` with every entry of `sigma`
/// in row-major order. Row `k` holds the state at `t_{k+1}`.
pub fn write_trajectory_csv<W: Write>(
    grid: &TimeGrid,
    states: &[KalmanState],
    out: &mut W,
) -> io::Result<()> {
    let n = states.first().map_or(0, |s| s.mu.len());
    let mut columns = vec!["k".to_string(), "t".to_string()];
    columns.extend((1..=n).map(|i| format!("mu_{i}")));
    for i in 1..=n {
        columns.extend((1..=n).map(|j| format!("sigma_{i}{j}")));
    }
    let header: Vec<&str> = columns.iter().map(String::as_str).collect();
    csv::write_header(out, &header)?;
    for state in states {
        let t = grid.points()[(state.step + 1) as usize];
        let mut row = vec![state.step as f64, t];
        row.extend(state.mu.iter());
        for i in 0..n {
            row.extend((0..n).map(|j| state.sigma[(i, j)]));
        }
        csv::write_row(out, &row)?;
    }
    Ok(())
}
