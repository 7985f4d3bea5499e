use rayon::prelude::*;

use super::bridge::sample_bridge_refinement;
use super::{ensure_step, Vector};
use crate::error::{Error, Result};
use crate::matfun::Matrix;
use crate::rng::StreamKey;

/// `x + f(x) dt + g(x) dw`
pub fn euler_maruyama_step<F, G>(f: F, g: G, x: &Vector, dt: f64, dw: &Vector) -> Result<Vector>
where
    F: Fn(&Vector) -> Vector,
    G: Fn(&Vector) -> Matrix,
{
    ensure_step(dt)?;
    let drift = f(x);
    let disp = g(x);
    if drift.len() != x.len() || disp.nrows() != x.len() || disp.ncols() != dw.len() {
        return Err(Error::DimensionMismatch(
            "drift or dispersion does not conform with the state and increment".to_string(),
        ));
    }
    if drift.iter().chain(disp.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite drift or dispersion".to_string()));
    }
    Ok(x + drift * dt + disp * dw)
}

/// Scalar Milstein step `x + f dt + g dw + g g' (dw^2 - dt) / 2`.
pub fn milstein_step_scalar(
    f: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
    dg: impl Fn(f64) -> f64,
    x: f64,
    dt: f64,
    dw: f64,
) -> Result<f64> {
    ensure_step(dt)?;
    let (fx, gx, dgx) = (f(x), g(x), dg(x));
    if !(fx.is_finite() && gx.is_finite() && dgx.is_finite()) {
        return Err(Error::InvalidInput("non-finite drift or dispersion".to_string()));
    }
    Ok(x + fx * dt + gx * dw + 0.5 * gx * dgx * (dw * dw - dt))
}

/// Geometric Brownian motion `dX = a X dt + sigma X dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmParams {
    pub drift: f64,
    pub volatility: f64,
    pub x0: f64,
    pub horizon: f64,
}

impl GbmParams {
    pub fn exact(&self, w_t: f64) -> f64 {
        let s = self.volatility;
        self.x0 * ((self.drift - 0.5 * s * s) * self.horizon + s * w_t).exp()
    }
}

/// Root-mean-square terminal errors against the exact solution at one
/// resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongErrorRow {
    pub n: usize,
    pub dt: f64,
    pub euler_rms: f64,
    pub milstein_rms: f64,
}

/// Strong errors of Euler-Maruyama and Milstein on GBM for
/// `N = coarse_n * 2^l`, `l = 0..levels`. Every resolution of a path shares
/// one Brownian path: finer increments come from halving the coarser ones
/// with the bridge.
pub fn gbm_strong_errors(
    params: &GbmParams,
    coarse_n: usize,
    levels: usize,
    paths: usize,
    key: StreamKey,
) -> Result<Vec<StrongErrorRow>> {
    if coarse_n == 0 || levels == 0 || paths == 0 {
        return Err(Error::InvalidInput(
            "coarse step count, levels and paths must be positive".to_string(),
        ));
    }
    ensure_step(params.horizon)?;
    let per_path: Vec<Vec<(f64, f64)>> = (0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = key.path(p);
            let coarse = super::step::WienerIncrements::sample(
                &crate::grid::TimeGrid::uniform(params.horizon, coarse_n)?,
                1,
                &mut rng,
            );
            let w_t = coarse.increments.iter().fold(0.0, |acc, w| acc + w[0]);
            let exact = params.exact(w_t);
            let mut incs: Vec<f64> = coarse.increments.iter().map(|w| w[0]).collect();
            let mut errs = Vec::with_capacity(levels);
            for level in 0..levels {
                if level > 0 {
                    let dt = params.horizon / incs.len() as f64;
                    let mut finer = Vec::with_capacity(2 * incs.len());
                    for &w in &incs {
                        let parts = sample_bridge_refinement((0.0, dt), &Vector::from_element(1, w), 2, &mut rng)?;
                        finer.extend(parts.iter().map(|v| v[0]));
                    }
                    incs = finer;
                }
                let dt = params.horizon / incs.len() as f64;
                let (a, s) = (params.drift, params.volatility);
                let (mut em, mut mil) = (params.x0, params.x0);
                for &w in &incs {
                    em += a * em * dt + s * em * w;
                    mil = milstein_step_scalar(|x| a * x, |x| s * x, |_| s, mil, dt, w)?;
                }
                errs.push(((em - exact).powi(2), (mil - exact).powi(2)));
            }
            Ok(errs)
        })
        .collect::<Result<_>>()?;
    let rows = (0..levels)
        .map(|level| {
            let (se, sm) = per_path
                .iter()
                .fold((0.0, 0.0), |(a, b), e| (a + e[level].0, b + e[level].1));
            let n = coarse_n << level;
            StrongErrorRow {
                n,
                dt: params.horizon / n as f64,
                euler_rms: (se / paths as f64).sqrt(),
                milstein_rms: (sm / paths as f64).sqrt(),
            }
        })
        .collect();
    Ok(rows)
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput("need at least two paired points".to_string()));
    }
    if x.iter().chain(y).any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::Domain("log-log fit needs positive finite data".to_string()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("abscissae are all equal".to_string()));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn em_with_identity_dispersion_adds_increment() {
        let x = v(&[1.0, 2.0]);
        let dw = v(&[0.1, -0.3]);
        let y = euler_maruyama_step(|x| Vector::zeros(x.len()), |_| Matrix::identity(2, 2), &x, 0.5, &dw).unwrap();
        assert_eq!(y, v(&[1.1, 1.7]));
    }

    #[test]
    fn em_ou_arithmetic() {
        let y = euler_maruyama_step(|x| -x, |_| Matrix::identity(1, 1), &v(&[1.0]), 0.5, &v(&[0.2])).unwrap();
        assert!((y[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn em_exact_for_constant_drift_free_linear() {
        let b = Matrix::from_row_slice(2, 1, &[1.0, 3.0]);
        let y = euler_maruyama_step(|x| Matrix::zeros(2, 2) * x, |_| b.clone(), &v(&[0.0, 1.0]), 0.1, &v(&[0.5])).unwrap();
        assert_eq!(y, v(&[0.5, 2.5]));
    }

    #[test]
    fn em_rejects_bad_evaluations() {
        let x = v(&[1.0]);
        assert!(euler_maruyama_step(|_| v(&[f64::NAN]), |_| Matrix::identity(1, 1), &x, 0.1, &x).is_err());
        assert!(euler_maruyama_step(|_| v(&[0.0]), |_| Matrix::identity(1, 1), &x, 0.0, &x).is_err());
        assert!(euler_maruyama_step(|_| v(&[0.0, 0.0]), |_| Matrix::identity(1, 1), &x, 0.1, &x).is_err());
    }

    #[test]
    fn milstein_examples() {
        let y = milstein_step_scalar(|_| 0.0, |x| x, |_| 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(y, 2.0);
        let y = milstein_step_scalar(|x| -x, |_| 0.5, |_| 0.0, 1.0, 0.5, 0.2).unwrap();
        let e = euler_maruyama_step(|x| -x, |_| Matrix::from_element(1, 1, 0.5), &v(&[1.0]), 0.5, &v(&[0.2])).unwrap();
        assert_eq!(y, e[0]);
        let s = 0.4;
        let y = milstein_step_scalar(|_| 0.0, |x| s * x, |_| s, 2.0, 0.1, 0.3).unwrap();
        assert!((y - (2.0 + s * 2.0 * 0.3 + 0.5 * s * s * 2.0 * (0.09 - 0.1))).abs() < 1e-15);
        assert!(milstein_step_scalar(|_| f64::INFINITY, |x| x, |_| 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((fit_loglog_slope(&x, &y).unwrap() - 1.5).abs() < 1e-12);
        assert!(fit_loglog_slope(&[1.0], &[1.0]).is_err());
        assert!(fit_loglog_slope(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn gbm_errors_shrink_and_are_reproducible() {
        let params = GbmParams { drift: 2.0, volatility: 1.0, x0: 1.0, horizon: 1.0 };
        let rows = gbm_strong_errors(&params, 8, 3, 500, StreamKey::new(4)).unwrap();
        assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![8, 16, 32]);
        assert!(rows[2].milstein_rms < rows[0].milstein_rms);
        assert!(rows[2].euler_rms < rows[0].euler_rms);
        assert_eq!(rows, gbm_strong_errors(&params, 8, 3, 500, StreamKey::new(4)).unwrap());
    }
}
