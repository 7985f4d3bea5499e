//! Fixtures shared by the benchmarks.

use sde_gridopt::{LinearSdeModel, Matrix, Result};

/// Scalar OU model dX = -X dt + dW on [0, 1].
pub fn ou() -> LinearSdeModel {
    LinearSdeModel::scalar(-1.0, 1.0, 1.0).expect("valid OU model")
}

/// Damped planar rotation with correlated noise.
pub fn planar() -> Result<LinearSdeModel> {
    LinearSdeModel::new(
        Matrix::from_row_slice(2, 2, &[-0.5, 1.0, -1.0, -0.2]),
        Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 0.5]),
        Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        1.5,
    )
}

/// Random-looking but fixed n x n drift with spectrum in the left half plane.
pub fn dense_drift(n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| {
        let x = ((i * 7 + j * 13) % 17) as f64 / 17.0 - 0.5;
        if i == j {
            x - 1.5
        } else {
            x / n as f64
        }
    })
}
