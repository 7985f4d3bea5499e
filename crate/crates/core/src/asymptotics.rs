//! Fine-grid limits of the filter errors and the grids that minimise them.
//!
//! With `N` steps placed by a density `psi`, `N^2` times the terminal error
//! tends to `int F / psi^2` and `N^2` times the integrated error tends to
//! `int S / psi^2`. Both are minimised by `psi` proportional to the cube root
//! of the weight. All integrals use composite Simpson on the density mesh, so
//! the discrete Hölder inequality holds exactly and optimal values are
//! attained to rounding.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::csv;
use crate::error::{Error, Result};
use crate::grid::{self, density_from_weight, GridDensity, Profile, DEFAULT_PANELS};
use crate::matfun::{self, Matrix};
use crate::model::{frobenius_pairing, regularity_check, LinearSdeModel};

/// RK4 steps and Simpson panels used for the limit covariance.
pub const LIMIT_SIGMA_STEPS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightKind {
    /// `F`, governing the terminal error.
    Terminal,
    /// `S`, governing the integrated error.
    Integral,
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Terminal => "terminal",
            Self::Integral => "integral",
        })
    }
}

fn remaining_time(model: &LinearSdeModel, t: f64) -> Result<f64> {
    let horizon = model.horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, {horizon}]")));
    }
    Ok(horizon - t)
}

/// `F_t = <mho, e^{(T-t)A^T} M e^{(T-t)A}>`
pub fn weight_f(model: &LinearSdeModel, t: f64) -> Result<f64> {
    let s = remaining_time(model, t)?;
    let r = matfun::weight_propagate(model.dynamics(), model.weight(), s)?;
    frobenius_pairing(&model.mho(), &r)
}

/// `S_t = <mho, Q_{T-t}>`, equal to `int_t^T F`.
pub fn weight_s(model: &LinearSdeModel, t: f64) -> Result<f64> {
    let s = remaining_time(model, t)?;
    if s == 0.0 {
        return Ok(0.0);
    }
    let q = matfun::obs_gramian(model.dynamics(), model.weight(), s)?;
    frobenius_pairing(&model.mho(), &q)
}

pub fn weight(model: &LinearSdeModel, kind: WeightKind, t: f64) -> Result<f64> {
    match kind {
        WeightKind::Terminal => weight_f(model, t),
        WeightKind::Integral => weight_s(model, t),
    }
}

/// A weight sampled on the uniform mesh of `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightCurve {
    kind: WeightKind,
    horizon: f64,
    values: Vec<f64>,
}

impl WeightCurve {
    pub fn sample(model: &LinearSdeModel, kind: WeightKind, panels: usize) -> Result<Self> {
        if panels < 2 || panels % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "need an even number (>= 2) of panels, got {panels}"
            )));
        }
        let horizon = model.horizon();
        let values = (0..=panels)
            .into_par_iter()
            .map(|j| {
                let t = if j == panels { horizon } else { horizon * j as f64 / panels as f64 };
                // Rounding can leave a vanishing weight slightly negative.
                weight(model, kind, t).map(|w| w.max(0.0))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind,
            horizon,
            values,
        })
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn panels(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn integral(&self) -> f64 {
        grid::simpson(self.horizon / self.panels() as f64, &self.values)
    }

    /// `(int w^{1/3})^3`
    pub fn cube_root_bound(&self) -> f64 {
        let roots: Vec<f64> = self.values.iter().map(|w| w.cbrt()).collect();
        grid::simpson(self.horizon / self.panels() as f64, &roots).powi(3)
    }

    /// `int w / psi^2` on the shared mesh. Where `psi` vanishes the weight
    /// must vanish too and the integrand is taken as its limit `0`.
    pub fn functional(&self, psi: &GridDensity) -> Result<f64> {
        if psi.panels() != self.panels() || psi.horizon() != self.horizon {
            return Err(Error::DimensionMismatch(format!(
                "density on {} panels over {}, weight on {} panels over {}",
                psi.panels(),
                psi.horizon(),
                self.panels(),
                self.horizon
            )));
        }
        let mut integrand = Vec::with_capacity(self.values.len());
        for (j, (&w, &p)) in self.values.iter().zip(psi.values()).enumerate() {
            if p > 0.0 {
                integrand.push(w / (p * p));
            } else if w == 0.0 {
                integrand.push(0.0);
            } else {
                return Err(Error::InvalidDensity(format!(
                    "density vanishes at t = {} where the {} weight is {w}",
                    psi.node(j),
                    self.kind
                )));
            }
        }
        Ok(grid::simpson(psi.step(), &integrand))
    }
}

/// `t,F,S` rows on the shared mesh.
pub fn write_weight_csv<W: Write>(f: &WeightCurve, s: &WeightCurve, out: &mut W) -> io::Result<()> {
    csv::write_header(out, &["t", "F", "S"])?;
    let panels = f.panels();
    for j in 0..=panels {
        let t = if j == panels { f.horizon } else { f.horizon * j as f64 / panels as f64 };
        csv::write_row(out, &[t, f.values[j], s.values[j]])?;
    }
    Ok(())
}

/// `Phi_T(psi) = int F / psi^2`; `psi` must be positive on all of `[0, T]`.
pub fn phi_functional(model: &LinearSdeModel, psi: &GridDensity) -> Result<f64> {
    if psi.vanishes_at_horizon() {
        return Err(Error::InvalidDensity(
            "the terminal functional needs a density that is positive at T".to_string(),
        ));
    }
    WeightCurve::sample(model, WeightKind::Terminal, psi.panels())?.functional(psi)
}

/// `Upsilon_T(psi) = int S / psi^2`; `psi` may vanish at `T`.
pub fn ups_functional(model: &LinearSdeModel, psi: &GridDensity) -> Result<f64> {
    WeightCurve::sample(model, WeightKind::Integral, psi.panels())?.functional(psi)
}

fn ensure_regular(model: &LinearSdeModel) -> Result<()> {
    let report = regularity_check(model);
    if report.satisfied {
        Ok(())
    } else {
        Err(Error::Irregular(report.gram_det))
    }
}

/// `(int w^{1/3})^3`. Zero when `mho = 0`; refused for other irregular models.
pub fn min_value(model: &LinearSdeModel, kind: WeightKind) -> Result<f64> {
    if model.mho().iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    ensure_regular(model)?;
    Ok(WeightCurve::sample(model, kind, DEFAULT_PANELS)?.cube_root_bound())
}

pub fn min_phi_value(model: &LinearSdeModel) -> Result<f64> {
    min_value(model, WeightKind::Terminal)
}

pub fn min_ups_value(model: &LinearSdeModel) -> Result<f64> {
    min_value(model, WeightKind::Integral)
}

/// The `1/3`-law density of one weight.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalProfile {
    pub kind: WeightKind,
    pub density: GridDensity,
}

impl OptimalProfile {
    /// `phi^{-1}` at the mesh nodes.
    pub fn inverse_profile(&self) -> &[f64] {
        self.density.cumulative()
    }
}

pub fn optimal_profile(model: &LinearSdeModel, kind: WeightKind) -> Result<OptimalProfile> {
    ensure_regular(model)?;
    let curve = WeightCurve::sample(model, kind, DEFAULT_PANELS)?;
    Ok(OptimalProfile {
        kind,
        density: density_from_weight(model.horizon(), curve.values())?,
    })
}

fn ensure_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::Domain(format!("tau = {tau} outside [0, 1]")))
    }
}

fn profile_slope<P: Profile + ?Sized>(profile: &P, tau: f64) -> Result<f64> {
    let d = profile.phi_prime(tau);
    if d.is_finite() && d > 0.0 {
        Ok(d)
    } else {
        Err(Error::Domain(format!("profile slope {d} at tau = {tau}")))
    }
}

/// `Sigma(tau)` from `Sigma' = phi' (A Sigma + Sigma A^T) + phi'^3 mho`,
/// `Sigma(0) = 0`, by classical RK4.
pub fn limit_sigma<P: Profile + ?Sized>(
    model: &LinearSdeModel,
    profile: &P,
    tau: f64,
) -> Result<Matrix> {
    ensure_tau(tau)?;
    let n = model.state_dim();
    let mut sigma = Matrix::zeros(n, n);
    if tau == 0.0 {
        return Ok(sigma);
    }
    let a = model.dynamics();
    let mho = model.mho();
    let rhs = |s: f64, x: &Matrix| -> Result<Matrix> {
        let d = profile_slope(profile, s)?;
        Ok((a * x + x * a.transpose()) * d + &mho * d.powi(3))
    };
    let h = tau / LIMIT_SIGMA_STEPS as f64;
    for i in 0..LIMIT_SIGMA_STEPS {
        let s = i as f64 * h;
        let k1 = rhs(s, &sigma)?;
        let k2 = rhs(s + 0.5 * h, &(&sigma + &k1 * (0.5 * h)))?;
        let k3 = rhs(s + 0.5 * h, &(&sigma + &k2 * (0.5 * h)))?;
        let end = if i + 1 == LIMIT_SIGMA_STEPS { tau } else { s + h };
        let k4 = rhs(end, &(&sigma + &k3 * h))?;
        sigma += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(matfun::symmetrize(&sigma))
}

/// `Sigma(tau) = int_0^tau e^{(phi(tau)-phi(v))A} mho e^{(phi(tau)-phi(v))A^T} phi'(v)^3 dv`
/// by composite Simpson.
pub fn limit_sigma_integral<P: Profile + Sync + ?Sized>(
    model: &LinearSdeModel,
    profile: &P,
    tau: f64,
) -> Result<Matrix> {
    ensure_tau(tau)?;
    let n = model.state_dim();
    if tau == 0.0 {
        return Ok(Matrix::zeros(n, n));
    }
    let a = model.dynamics();
    let mho = model.mho();
    let panels = LIMIT_SIGMA_STEPS;
    let h = tau / panels as f64;
    let end = profile.phi(tau);
    let terms = (0..=panels)
        .into_par_iter()
        .map(|j| {
            let v = if j == panels { tau } else { j as f64 * h };
            let d = profile_slope(profile, v)?;
            let e = matfun::mat_exp(a, end - profile.phi(v))?;
            Ok((&e * &mho * e.transpose()) * (d.powi(3) * grid::simpson_weight(panels, j)))
        })
        .collect::<Result<Vec<Matrix>>>()?;
    let sum = terms.into_iter().fold(Matrix::zeros(n, n), |acc, m| acc + m);
    Ok(matfun::symmetrize(&(sum * (h / 3.0))))
}

/// Analytic values for the scalar Ornstein-Uhlenbeck model with unit weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuClosedForms {
    /// Stationary variance `-D / (2A)`.
    pub stationary_variance: f64,
    pub min_phi: f64,
    pub uniform_phi: f64,
    /// `uniform_phi / min_phi`
    pub ratio: f64,
    /// `(4/27)(AT)^2`, the large-horizon behaviour of `ratio`.
    pub ratio_asymptote: f64,
}

pub fn ou_closed_forms(model: &LinearSdeModel) -> Result<OuClosedForms> {
    if !model.is_scalar_ou() {
        return Err(Error::InvalidInput(
            "closed forms need n = m = 1, A < 0, B != 0 and M = 1".to_string(),
        ));
    }
    let a = model.dynamics()[(0, 0)];
    let d = model.diffusion()[(0, 0)];
    let horizon = model.horizon();
    let g_inf = -d / (2.0 * a);
    let at = a * horizon;
    // 1 - e^x via exp_m1 keeps short horizons accurate.
    let third = -(2.0 * at / 3.0).exp_m1();
    let full = -(2.0 * at).exp_m1();
    let min_phi = 9.0 / 16.0 * g_inf * third.powi(3);
    let uniform_phi = g_inf * at * at * full / 12.0;
    Ok(OuClosedForms {
        stationary_variance: g_inf,
        min_phi,
        uniform_phi,
        ratio: 4.0 / 27.0 * at * at * full / third.powi(3),
        ratio_asymptote: 4.0 / 27.0 * at * at,
    })
}

/// A functional evaluated at one density against its optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticReport {
    pub kind: WeightKind,
    pub value: f64,
    pub minimum: f64,
    /// `T^3 min_t w_t`
    pub lower_bound: f64,
    /// `value / minimum`
    pub ratio: f64,
}

impl AsymptoticReport {
    pub const CSV_HEADER: [&'static str; 4] = ["value", "minimum", "lower_bound", "ratio"];

    pub fn csv_values(&self) -> [f64; 4] {
        [self.value, self.minimum, self.lower_bound, self.ratio]
    }
}

pub fn asymptotic_report(
    model: &LinearSdeModel,
    kind: WeightKind,
    psi: &GridDensity,
) -> Result<AsymptoticReport> {
    let value = match kind {
        WeightKind::Terminal => phi_functional(model, psi)?,
        WeightKind::Integral => ups_functional(model, psi)?,
    };
    let minimum = min_value(model, kind)?;
    let curve = WeightCurve::sample(model, kind, psi.panels())?;
    Ok(AsymptoticReport {
        kind,
        value,
        minimum,
        lower_bound: model.horizon().powi(3) * curve.min(),
        ratio: value / minimum,
    })
}
