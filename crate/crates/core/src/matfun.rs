//! Dense small-matrix special functions.
//!
//! Everything here works on `nalgebra::DMatrix<f64>` of modest order (the
//! models of interest have `n <= 10`). The matrix exponential is computed
//! by scaling and squaring with a diagonal Padé approximant; the φ-function
//! `E(tA)` and the finite-horizon Gramians are read off block-triangular
//! exponentials, so every function in the module inherits the accuracy of
//! [`mat_exp`].

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Below this value of `t * ||A||_F` the small-time series for `K_t` is used.
pub const KT_SERIES_THRESHOLD: f64 = 0.1;

const KT_SERIES_MAX_DEGREE: usize = 80;

// Padé degrees and the 1-norm bounds under which each is accurate to unit
// roundoff (Higham, 2005).
const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_23e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068;
const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const PADE_9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

pub(crate) fn ensure_square(name: &str, m: &Matrix) -> Result<usize> {
    if m.nrows() == 0 || m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{name} must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

pub(crate) fn ensure_finite(name: &str, m: &Matrix) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} has non-finite entries")))
    }
}

fn ensure_time(t: f64, allow_negative: bool) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::InvalidInput(format!("time {t} is not finite")));
    }
    if !allow_negative && t < 0.0 {
        return Err(Error::Domain(format!("time {t} must be non-negative")));
    }
    Ok(())
}

pub(crate) fn is_symmetric(m: &Matrix) -> bool {
    let asym = (m - m.transpose()).norm();
    asym <= 1e-10 * (1.0 + m.norm())
}

fn ensure_symmetric(name: &str, m: &Matrix) -> Result<()> {
    if is_symmetric(m) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} is not symmetric")))
    }
}

fn ensure_same_order(a: &Matrix, other_name: &str, other: &Matrix) -> Result<()> {
    if other.nrows() != a.nrows() || other.ncols() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{other_name} is {}x{}, expected {}x{}",
            other.nrows(),
            other.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// `(X + X^T) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue(sym: &Matrix) -> f64 {
    SymmetricEigen::new(sym.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Returns `L` with `L L^T = X` for a symmetric PSD `X`; negative eigenvalues
/// (rounding noise) are clipped to zero, so rank-deficient inputs are fine.
pub fn psd_factor(sym: &Matrix) -> Matrix {
    let eig = SymmetricEigen::new(symmetrize(sym));
    let mut factor = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    factor
}

fn one_norm(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade_solve(u: Matrix, v: Matrix) -> Matrix {
    let p = &v + &u;
    let q = v - u;
    // q is well conditioned for the norms admitted by the theta bounds.
    q.lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular within the theta bounds")
}

fn pade_low(a: &Matrix, coeffs: &[f64]) -> Matrix {
    let n = a.nrows();
    let id = Matrix::identity(n, n);
    let a2 = a * a;
    let mut even = id.clone() * coeffs[0];
    let mut odd = id * coeffs[1];
    let mut power = a2.clone();
    for pair in coeffs[2..].chunks(2) {
        even += &power * pair[0];
        odd += &power * pair[1];
        power = &power * &a2;
    }
    let u = a * odd;
    pade_solve(u, even)
}

fn pade_13(a: &Matrix) -> Matrix {
    let b = &PADE_13;
    let n = a.nrows();
    let id = Matrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + id * b[0];
    pade_solve(u, v)
}

fn expm_unchecked(a: &Matrix) -> Matrix {
    let norm = one_norm(a);
    if norm == 0.0 {
        return Matrix::identity(a.nrows(), a.ncols());
    }
    if norm <= THETA_3 {
        return pade_low(a, &PADE_3);
    }
    if norm <= THETA_5 {
        return pade_low(a, &PADE_5);
    }
    if norm <= THETA_7 {
        return pade_low(a, &PADE_7);
    }
    if norm <= THETA_9 {
        return pade_low(a, &PADE_9);
    }
    let squarings = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    let scaled = a * 2f64.powi(-squarings);
    let mut r = pade_13(&scaled);
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// `e^{tA}`. Exact identity at `t = 0`.
pub fn mat_exp(a: &Matrix, t: f64) -> Result<Matrix> {
    let n = ensure_square("A", a)?;
    ensure_finite("A", a)?;
    ensure_time(t, true)?;
    if t == 0.0 {
        return Ok(Matrix::identity(n, n));
    }
    Ok(expm_unchecked(&(a * t)))
}

/// The φ-function `E(tA) = sum_k (tA)^k / (k+1)!`, i.e. `int_0^1 e^{stA} ds`.
///
/// Read off the top-right block of `exp([[tA, I], [0, 0]])`, which avoids
/// forming `(e^{tA} - I) (tA)^{-1}`.
pub fn phi1(a: &Matrix, t: f64) -> Result<Matrix> {
    let n = ensure_square("A", a)?;
    ensure_finite("A", a)?;
    ensure_time(t, true)?;
    if t == 0.0 {
        return Ok(Matrix::identity(n, n));
    }
    let mut block = Matrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(a * t));
    block
        .view_mut((0, n), (n, n))
        .copy_from(&Matrix::identity(n, n));
    let e = expm_unchecked(&block);
    Ok(e.view((0, n), (n, n)).into_owned())
}

/// `int_0^t e^{sF} W e^{sF^T} ds` by the Van Loan block exponential.
fn van_loan_gramian(f: &Matrix, w: &Matrix, t: f64) -> Matrix {
    let n = f.nrows();
    if t == 0.0 {
        return Matrix::zeros(n, n);
    }
    let mut block = Matrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-f * t));
    block.view_mut((0, n), (n, n)).copy_from(&(w * t));
    block
        .view_mut((n, n), (n, n))
        .copy_from(&(f.transpose() * t));
    let e = expm_unchecked(&block);
    let upper = e.view((0, n), (n, n));
    let lower = e.view((n, n), (n, n));
    symmetrize(&(lower.transpose() * upper))
}

/// Finite-horizon controllability Gramian `G_t = int_0^t e^{sA} D e^{sA^T} ds`.
pub fn ctrl_gramian(a: &Matrix, d: &Matrix, t: f64) -> Result<Matrix> {
    ensure_square("A", a)?;
    ensure_same_order(a, "D", d)?;
    ensure_finite("A", a)?;
    ensure_finite("D", d)?;
    ensure_symmetric("D", d)?;
    ensure_time(t, false)?;
    Ok(van_loan_gramian(a, d, t))
}

/// Finite-horizon observability Gramian `Q_t = int_0^t e^{sA^T} M e^{sA} ds`.
pub fn obs_gramian(a: &Matrix, m: &Matrix, t: f64) -> Result<Matrix> {
    ensure_square("A", a)?;
    ensure_same_order(a, "M", m)?;
    ensure_finite("A", a)?;
    ensure_finite("M", m)?;
    ensure_symmetric("M", m)?;
    ensure_time(t, false)?;
    Ok(van_loan_gramian(&a.transpose(), m, t))
}

/// `R_t = e^{tA^T} M e^{tA}`, the time derivative of the observability Gramian.
pub fn weight_propagate(a: &Matrix, m: &Matrix, t: f64) -> Result<Matrix> {
    ensure_square("A", a)?;
    ensure_same_order(a, "M", m)?;
    ensure_finite("M", m)?;
    ensure_time(t, false)?;
    let e = mat_exp(a, t)?;
    Ok(symmetrize(&(e.transpose() * m * e)))
}

/// `(1/12) A D A^T`, the small-step limit of [`kt_matrix`].
pub fn mho(a: &Matrix, d: &Matrix) -> Result<Matrix> {
    ensure_square("A", a)?;
    ensure_same_order(a, "D", d)?;
    ensure_finite("A", a)?;
    ensure_finite("D", d)?;
    Ok(symmetrize(&(a * d * a.transpose())) / 12.0)
}

/// Double series `sum_{j,k>=1} jk t^{j+k-2} / ((j+1)!(k+1)!(j+k+1)) A^j D (A^T)^k`,
/// summed by total degree `j + k` until a whole degree contributes less than
/// `1e-16` of the accumulated norm.
pub fn kt_series(a: &Matrix, d: &Matrix, t: f64) -> Matrix {
    let n = a.nrows();
    // powers[j - 1] = t^{j-1} A^j and left[j - 1] = powers[j - 1] * D.
    let mut powers: Vec<Matrix> = vec![a.clone()];
    let mut left: Vec<Matrix> = vec![a * d];
    let mut inv_fact = vec![1.0f64, 1.0];
    let mut sum = Matrix::zeros(n, n);
    for degree in 2..=KT_SERIES_MAX_DEGREE {
        while powers.len() < degree - 1 {
            let next = a * powers.last().expect("non-empty") * t;
            left.push(&next * d);
            powers.push(next);
        }
        while inv_fact.len() <= degree {
            let k = inv_fact.len() as f64;
            let last = *inv_fact.last().expect("non-empty");
            inv_fact.push(last / k);
        }
        let mut layer = Matrix::zeros(n, n);
        for j in 1..degree {
            let k = degree - j;
            let c = (j * k) as f64 * inv_fact[j + 1] * inv_fact[k + 1] / (degree + 1) as f64;
            layer += (&left[j - 1] * powers[k - 1].transpose()) * c;
        }
        let layer_norm = layer.norm();
        sum += layer;
        if layer_norm <= 1e-16 * sum.norm() {
            break;
        }
    }
    symmetrize(&sum)
}

/// `t^{-2} (t^{-1} G_t - E(tA) D E(tA)^T)` evaluated literally.
///
/// Loses roughly `log10(1 / (t ||A||)^2)` digits to cancellation; kept as a
/// cross-check for [`kt_block`].
pub fn kt_direct(a: &Matrix, d: &Matrix, t: f64) -> Matrix {
    let g = van_loan_gramian(a, d, t);
    let e = phi1(a, t).expect("validated by caller");
    let diff = g / t - &e * d * e.transpose();
    symmetrize(&(diff / (t * t)))
}

/// `K_t = A (int_0^1 J(u) D J(u)^T du - phi2 D phi2^T) A^T` with
/// `J(u) = int_0^u e^{stA} ds` and `phi2 = int_0^1 J(u) du`.
///
/// Algebraically equal to [`kt_direct`]; the bracket is `O(D)` instead of
/// `O(t^2)`, so no digits are lost as `t -> 0`. Both pieces come from block
/// exponentials: `e^{u [[tA, I], [0, 0]]}` carries `J(u)` in its top-right
/// block, and the third block column of `exp([[tA, I, 0], [0, 0, I], [0, 0, 0]])`
/// holds `phi2(tA)`.
pub fn kt_block(a: &Matrix, d: &Matrix, t: f64) -> Matrix {
    let n = a.nrows();
    let id = Matrix::identity(n, n);

    let mut lifted = Matrix::zeros(2 * n, 2 * n);
    lifted.view_mut((0, 0), (n, n)).copy_from(&(a * t));
    lifted.view_mut((0, n), (n, n)).copy_from(&id);
    let mut lifted_noise = Matrix::zeros(2 * n, 2 * n);
    lifted_noise.view_mut((n, n), (n, n)).copy_from(d);
    let second_moment = van_loan_gramian(&lifted, &lifted_noise, 1.0)
        .view((0, 0), (n, n))
        .into_owned();

    let mut chain = Matrix::zeros(3 * n, 3 * n);
    chain.view_mut((0, 0), (n, n)).copy_from(&(a * t));
    chain.view_mut((0, n), (n, n)).copy_from(&id);
    chain.view_mut((n, 2 * n), (n, n)).copy_from(&id);
    let phi2 = expm_unchecked(&chain).view((0, 2 * n), (n, n)).into_owned();

    let centred = second_moment - &phi2 * d * phi2.transpose();
    symmetrize(&(a * centred * a.transpose()))
}

/// `K_t`, the residual covariance coefficient of one exact filter step.
/// `t = 0` yields the limit [`mho`].
pub fn kt_matrix(a: &Matrix, d: &Matrix, t: f64) -> Result<Matrix> {
    ensure_square("A", a)?;
    ensure_same_order(a, "D", d)?;
    ensure_finite("A", a)?;
    ensure_finite("D", d)?;
    ensure_symmetric("D", d)?;
    ensure_time(t, false)?;
    if t == 0.0 {
        return mho(a, d);
    }
    if t * a.norm() < KT_SERIES_THRESHOLD {
        Ok(kt_series(a, d, t))
    } else {
        Ok(kt_block(a, d, t))
    }
}
