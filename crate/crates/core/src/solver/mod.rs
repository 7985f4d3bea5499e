//! Exact discrete-time solution of the linear SDE and its Monte Carlo checks.
//!
//! Over a step of length `dt` the state moves by `X' = e^{A dt} X + Z` and the
//! pair `(dW, Z)` is jointly Gaussian. The best estimate of `X'` from the
//! increments is a Kalman filter whose covariance recursion does not depend
//! on the realised increments, so error functionals are deterministic
//! functions of the grid.

mod bridge;
mod kalman;
mod monte_carlo;
mod schemes;
mod step;

pub use bridge::{bridge_moments, sample_bridge_refinement, BridgeMoments};
pub use kalman::{
    closed_form_sigma, covariance_trajectory, error_report, kalman_step, run_filter,
    write_trajectory_csv, ErrorReport, FilterRun, KalmanState,
};
pub use monte_carlo::{
    mc_compare_euler, mc_verify_mse, EulerComparison, McReport, MseEstimate, MIN_PATHS,
};
pub use schemes::{
    euler_maruyama_step, fit_loglog_slope, gbm_strong_errors, milstein_step_scalar, GbmParams,
    StrongErrorRow,
};
pub use step::{
    sample_exact_path, sample_joint_increment, PathSample, StepMatrices, StepPlan,
    WienerIncrements,
};

pub type Vector = nalgebra::DVector<f64>;

pub(crate) fn ensure_step(dt: f64) -> crate::Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(crate::Error::Domain(format!("step {dt} must be finite and positive")))
    }
}
