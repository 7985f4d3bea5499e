use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{ensure_step, Vector};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::matfun::{self, Matrix};
use crate::model::LinearSdeModel;

/// Everything one exact step of length `dt` needs.
#[derive(Debug, Clone)]
pub struct StepMatrices {
    pub dt: f64,
    /// `e^{A dt}`
    pub transition: Matrix,
    /// `E(A dt) B`, the regression of `Z` on `dW` (per unit `dW`).
    pub gain: Matrix,
    /// `K_dt dt^3 = cov(Z | dW)`
    pub residual: Matrix,
    residual_factor: Matrix,
}

impl StepMatrices {
    pub fn new(model: &LinearSdeModel, dt: f64) -> Result<Self> {
        ensure_step(dt)?;
        let a = model.dynamics();
        let transition = matfun::mat_exp(a, dt)?;
        let gain = matfun::phi1(a, dt)? * model.dispersion();
        let residual = matfun::kt_matrix(a, model.diffusion(), dt)? * dt.powi(3);
        let residual_factor = matfun::psd_factor(&residual);
        Ok(Self {
            dt,
            transition,
            gain,
            residual,
            residual_factor,
        })
    }

    /// Draws `dW ~ N(0, I dt)` and then `Z | dW ~ N(gain dW, residual)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vector, Vector) {
        let m = self.gain.ncols();
        let n = self.gain.nrows();
        let scale = self.dt.sqrt();
        let dw = Vector::from_iterator(m, (0..m).map(|_| scale * rng.sample::<f64, _>(StandardNormal)));
        let noise = Vector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let z = &self.gain * &dw + &self.residual_factor * noise;
        (dw, z)
    }

    pub fn propagate_mean(&self, mu: &Vector, dw: &Vector) -> Vector {
        &self.transition * mu + &self.gain * dw
    }

    pub fn propagate_covariance(&self, sigma: &Matrix) -> Matrix {
        matfun::symmetrize(&(&self.transition * sigma * self.transition.transpose() + &self.residual))
    }
}

/// Step matrices for every step of a grid, computed once per distinct step
/// length (keyed on the bit pattern of `dt`).
#[derive(Debug, Clone)]
pub struct StepPlan {
    distinct: Vec<StepMatrices>,
    index: Vec<usize>,
}

impl StepPlan {
    pub fn new(model: &LinearSdeModel, grid: &TimeGrid) -> Result<Self> {
        let mut keys: HashMap<u64, usize> = HashMap::new();
        let mut lengths = Vec::new();
        let index = grid
            .steps()
            .iter()
            .map(|&dt| {
                *keys.entry(dt.to_bits()).or_insert_with(|| {
                    lengths.push(dt);
                    lengths.len() - 1
                })
            })
            .collect();
        let distinct = lengths
            .par_iter()
            .map(|&dt| StepMatrices::new(model, dt))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { distinct, index })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn distinct_steps(&self) -> usize {
        self.distinct.len()
    }

    pub fn step(&self, k: usize) -> &StepMatrices {
        &self.distinct[self.index[k]]
    }
}

/// Wiener increments over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrements {
    pub grid: TimeGrid,
    pub increments: Vec<Vector>,
}

impl WienerIncrements {
    pub fn new(grid: TimeGrid, increments: Vec<Vector>) -> Result<Self> {
        if increments.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} increments for a grid of {} steps",
                increments.len(),
                grid.len()
            )));
        }
        if let Some(first) = increments.first() {
            if increments.iter().any(|w| w.len() != first.len()) {
                return Err(Error::DimensionMismatch(
                    "increments of unequal dimension".to_string(),
                ));
            }
        }
        Ok(Self { grid, increments })
    }

    /// Independent `N(0, I dt_k)` increments.
    pub fn sample<R: Rng + ?Sized>(grid: &TimeGrid, dim: usize, rng: &mut R) -> Self {
        let increments = grid
            .steps()
            .iter()
            .map(|dt| {
                let s = dt.sqrt();
                Vector::from_iterator(dim, (0..dim).map(|_| s * rng.sample::<f64, _>(StandardNormal)))
            })
            .collect();
        Self {
            grid: grid.clone(),
            increments,
        }
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }
}

/// Exact states `X_{t_0..t_N}` with the increments that drove them.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub states: Vec<Vector>,
    pub increments: WienerIncrements,
}

/// One draw of `(dW, Z)` for a step of length `dt`.
pub fn sample_joint_increment<R: Rng + ?Sized>(
    model: &LinearSdeModel,
    dt: f64,
    rng: &mut R,
) -> Result<(Vector, Vector)> {
    Ok(StepMatrices::new(model, dt)?.sample(rng))
}

pub(crate) fn check_initial(model: &LinearSdeModel, x0: &Vector) -> Result<()> {
    if x0.len() != model.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} entries, model has {}",
            x0.len(),
            model.state_dim()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial state is not finite".to_string()));
    }
    Ok(())
}

/// `X_{t_{k+1}} = e^{A dt_k} X_{t_k} + Z_k` along the grid.
pub fn sample_exact_path<R: Rng + ?Sized>(
    model: &LinearSdeModel,
    grid: &TimeGrid,
    x0: &Vector,
    rng: &mut R,
) -> Result<PathSample> {
    check_initial(model, x0)?;
    let plan = StepPlan::new(model, grid)?;
    let mut states = Vec::with_capacity(grid.len() + 1);
    let mut increments = Vec::with_capacity(grid.len());
    states.push(x0.clone());
    for k in 0..plan.len() {
        let step = plan.step(k);
        let (dw, z) = step.sample(rng);
        let next = &step.transition * &states[k] + z;
        states.push(next);
        increments.push(dw);
    }
    Ok(PathSample {
        states,
        increments: WienerIncrements {
            grid: grid.clone(),
            increments,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    fn ou() -> LinearSdeModel {
        LinearSdeModel::scalar(-1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_dynamics_gives_z_equal_b_dw() {
        let model = LinearSdeModel::new(
            Matrix::zeros(2, 2),
            Matrix::from_row_slice(2, 1, &[1.0, -2.0]),
            Matrix::identity(2, 2),
            1.0,
        )
        .unwrap();
        let mut rng = StreamKey::new(1).path(0);
        for _ in 0..10 {
            let (dw, z) = sample_joint_increment(&model, 0.3, &mut rng).unwrap();
            let bz = model.dispersion() * &dw;
            assert!((z - bz).amax() < 1e-15);
        }
    }

    #[test]
    fn rejects_nonpositive_step() {
        let mut rng = StreamKey::new(1).path(0);
        assert!(matches!(
            sample_joint_increment(&ou(), 0.0, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn ou_joint_moments() {
        // var(Z) = G_1, cov(Z, dW) = E(-1) = 1 - 1/e
        let step = StepMatrices::new(&ou(), 1.0).unwrap();
        let mut rng = StreamKey::new(11).path(0);
        let draws = 1_000_000;
        let (mut szz, mut szw, mut sww) = (0.0, 0.0, 0.0);
        for _ in 0..draws {
            let (dw, z) = step.sample(&mut rng);
            szz += z[0] * z[0];
            szw += z[0] * dw[0];
            sww += dw[0] * dw[0];
        }
        let n = draws as f64;
        let g1 = (1.0 - (-2.0f64).exp()) / 2.0;
        let c = 1.0 - (-1.0f64).exp();
        // standard errors of second moments of Gaussians
        assert!((szz / n - g1).abs() < 3.0 * (2.0f64).sqrt() * g1 / n.sqrt());
        assert!((szw / n - c).abs() < 3.0 * (g1 + c * c).sqrt() / n.sqrt());
        assert!((sww / n - 1.0).abs() < 3.0 * (2.0f64).sqrt() / n.sqrt());
    }

    #[test]
    fn residual_scales_like_mho_dt_cubed() {
        let model = LinearSdeModel::new(
            Matrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]),
            Matrix::from_row_slice(2, 1, &[0.3, 1.0]),
            Matrix::identity(2, 2),
            1.0,
        )
        .unwrap();
        let limit = model.mho();
        for dt in [1e-2, 1e-3] {
            let step = StepMatrices::new(&model, dt).unwrap();
            let mut rng = StreamKey::new(5).path(1);
            let draws = 200_000;
            let mut acc = Matrix::zeros(2, 2);
            for _ in 0..draws {
                let (dw, z) = step.sample(&mut rng);
                let r = z - model.dispersion() * &dw;
                acc += &r * r.transpose();
            }
            let est = acc / (draws as f64 * dt.powi(3));
            // (Z - B dW) also carries the O(dt^2) mean term (E(A dt) - I) B dW.
            let bias = model.dynamics() * model.diffusion() * model.dynamics().transpose() * 0.25;
            let predicted = &limit + &bias;
            assert!((est - &predicted).norm() < 0.05 * predicted.norm() + dt * 10.0, "dt = {dt}");
        }
    }

    #[test]
    fn deterministic_flow_without_noise() {
        let model = LinearSdeModel::new(
            Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            Matrix::zeros(2, 1),
            Matrix::identity(2, 2),
            2.0,
        )
        .unwrap();
        let grid = TimeGrid::uniform(2.0, 16).unwrap();
        let x0 = Vector::from_vec(vec![1.0, 0.0]);
        let path = sample_exact_path(&model, &grid, &x0, &mut StreamKey::new(3).path(0)).unwrap();
        for (k, &t) in grid.points().iter().enumerate() {
            let exact = matfun::mat_exp(model.dynamics(), t).unwrap() * &x0;
            assert!((&path.states[k] - exact).amax() < 1e-12);
        }
    }

    #[test]
    fn ou_terminal_variance() {
        let model = ou();
        let grid = TimeGrid::new(vec![0.0, 0.1, 0.45, 1.0]).unwrap();
        let x0 = Vector::zeros(1);
        let key = StreamKey::new(99);
        let paths = 100_000;
        let mut acc = 0.0;
        for p in 0..paths {
            let s = sample_exact_path(&model, &grid, &x0, &mut key.path(p)).unwrap();
            acc += s.states[3][0].powi(2);
        }
        let var = acc / paths as f64;
        let g1 = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((var - g1).abs() < 3.0 * 2f64.sqrt() * g1 / (paths as f64).sqrt());
    }

    #[test]
    fn brownian_endpoint_ignores_grid() {
        let model = LinearSdeModel::scalar(0.0, 1.0, 2.0).unwrap();
        let grid = TimeGrid::new(vec![0.0, 0.01, 0.5, 1.7, 2.0]).unwrap();
        let x0 = Vector::from_vec(vec![0.5]);
        let path = sample_exact_path(&model, &grid, &x0, &mut StreamKey::new(0).path(0)).unwrap();
        let sum: f64 = path.increments.increments.iter().map(|w| w[0]).sum();
        assert!((path.states[4][0] - 0.5 - sum).abs() < 1e-14);
    }

    #[test]
    fn plan_deduplicates_uniform_steps() {
        let grid = TimeGrid::uniform(1.0, 64).unwrap();
        let plan = StepPlan::new(&ou(), &grid).unwrap();
        assert!(plan.distinct_steps() <= 4, "{}", plan.distinct_steps());
        let irregular = TimeGrid::new(vec![0.0, 0.1, 0.3, 0.6, 1.0]).unwrap();
        assert_eq!(StepPlan::new(&ou(), &irregular).unwrap().distinct_steps(), 4);
    }

    #[test]
    fn increments_must_match_grid() {
        let grid = TimeGrid::uniform(1.0, 3).unwrap();
        assert!(WienerIncrements::new(grid, vec![Vector::zeros(1); 2]).is_err());
    }
}
