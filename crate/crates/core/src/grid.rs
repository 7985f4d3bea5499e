//! Grid densities, discretisation profiles and the time grids they generate.
//!
//! A [`GridDensity`] is sampled on a uniform mesh with an even number of
//! panels. Its cumulative is integrated with the same Simpson weights that
//! the asymptotic functionals use, so normalisation and the functionals are
//! consistent to rounding at even nodes; odd nodes split each Simpson pair in
//! the ratio of its two trapezoids so the cumulative stays monotone. Between
//! nodes the density is linear and the cumulative follows the integral of that
//! linear piece.

use std::io::{self, BufRead, Write};

use crate::csv;
use crate::error::{Error, Result};

/// Panels of the density mesh used throughout the crate.
pub const DEFAULT_PANELS: usize = 4096;

/// A discretisation profile `phi: [0, 1] -> [0, T]` with derivative.
pub trait Profile {
    fn horizon(&self) -> f64;
    fn phi(&self, tau: f64) -> f64;
    fn phi_prime(&self, tau: f64) -> f64;
}

/// `phi(tau) = T tau`, the profile of uniform grids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformProfile {
    pub horizon: f64,
}

impl Profile for UniformProfile {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn phi(&self, tau: f64) -> f64 {
        self.horizon * tau
    }

    fn phi_prime(&self, _tau: f64) -> f64 {
        self.horizon
    }
}

/// Normalised density `psi >= 0` on `[0, T]`, at most vanishing at `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    horizon: f64,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

fn mesh_node(horizon: f64, panels: usize, j: usize) -> f64 {
    if j == panels {
        horizon
    } else {
        horizon * j as f64 / panels as f64
    }
}

/// Composite Simpson weights (times `h / 3`) for a mesh of `panels` panels.
pub(crate) fn simpson_weight(panels: usize, j: usize) -> f64 {
    if j == 0 || j == panels {
        1.0
    } else if j % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

/// Composite Simpson rule over uniform samples with an even panel count.
pub fn simpson(step: f64, samples: &[f64]) -> f64 {
    let panels = samples.len() - 1;
    debug_assert!(panels >= 2 && panels % 2 == 0);
    let sum: f64 = samples
        .iter()
        .enumerate()
        .map(|(j, v)| simpson_weight(panels, j) * v)
        .sum();
    sum * step / 3.0
}

/// Running integral at every node, consistent with [`simpson`] at even nodes.
pub fn simpson_cumulative(step: f64, samples: &[f64]) -> Vec<f64> {
    let panels = samples.len() - 1;
    let mut out = vec![0.0; samples.len()];
    for pair in 0..panels / 2 {
        let j = 2 * pair;
        let (f0, f1, f2) = (samples[j], samples[j + 1], samples[j + 2]);
        out[j + 1] = out[j] + step * (5.0 * f0 + 8.0 * f1 - f2) / 12.0;
        out[j + 2] = out[j] + step * (f0 + 4.0 * f1 + f2) / 3.0;
    }
    out
}

/// Like [`simpson_cumulative`], but the odd nodes split each pair's Simpson
/// mass in the ratio of the two trapezoids. Stays monotone for any
/// nonnegative samples.
fn monotone_cumulative(step: f64, samples: &[f64]) -> Vec<f64> {
    let panels = samples.len() - 1;
    let mut out = vec![0.0; samples.len()];
    for pair in 0..panels / 2 {
        let j = 2 * pair;
        let (f0, f1, f2) = (samples[j], samples[j + 1], samples[j + 2]);
        let mass = step * (f0 + 4.0 * f1 + f2) / 3.0;
        let share = (f0 + f1) / (f0 + 2.0 * f1 + f2);
        out[j + 1] = out[j] + mass * share;
        out[j + 2] = out[j] + mass;
    }
    out
}

impl GridDensity {
    /// Builds a density from nonnegative samples on the uniform mesh of
    /// `[0, T]` with `samples.len() - 1` panels, normalising to unit mass.
    pub fn from_samples(horizon: f64, samples: &[f64]) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidDensity(format!(
                "horizon {horizon} must be finite and positive"
            )));
        }
        let panels = samples.len().saturating_sub(1);
        if panels < 2 || panels % 2 != 0 {
            return Err(Error::InvalidDensity(format!(
                "need an even number (>= 2) of panels, got {panels}"
            )));
        }
        if let Some(bad) = samples.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidDensity(format!(
                "samples must be finite and nonnegative, found {bad}"
            )));
        }
        if let Some(j) = samples[..panels].iter().position(|&v| v == 0.0) {
            return Err(Error::InvalidDensity(format!(
                "density vanishes at interior node {j}; only the terminal value may be zero"
            )));
        }
        let step = horizon / panels as f64;
        let mass = simpson(step, samples);
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidDensity(format!("total mass {mass} is not positive")));
        }
        let values: Vec<f64> = samples.iter().map(|v| v / mass).collect();
        let mut cumulative = monotone_cumulative(step, &values);
        cumulative[panels] = 1.0;
        if cumulative.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidDensity(
                "cumulative is not strictly increasing".to_string(),
            ));
        }
        Ok(Self {
            horizon,
            values,
            cumulative,
        })
    }

    /// `psi = 1/T`.
    pub fn uniform(horizon: f64) -> Result<Self> {
        Self::uniform_with_panels(horizon, DEFAULT_PANELS)
    }

    pub fn uniform_with_panels(horizon: f64, panels: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidDensity(format!(
                "horizon {horizon} must be finite and positive"
            )));
        }
        let mut density = Self::from_samples(horizon, &vec![1.0 / horizon; panels + 1])?;
        // Exact values and a linear cumulative rather than rounded Simpson sums.
        density.values.iter_mut().for_each(|v| *v = 1.0 / horizon);
        for (j, c) in density.cumulative.iter_mut().enumerate() {
            *c = j as f64 / panels as f64;
        }
        Ok(density)
    }

    /// Samples `f` on the mesh and normalises.
    pub fn from_fn(horizon: f64, panels: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples: Vec<f64> = (0..=panels)
            .map(|j| f(mesh_node(horizon, panels, j)))
            .collect();
        Self::from_samples(horizon, &samples)
    }

    /// `max(psi, floor)`, renormalised. Lifts a terminal zero.
    pub fn floored(&self, floor: f64) -> Result<Self> {
        let samples: Vec<f64> = self.values.iter().map(|v| v.max(floor)).collect();
        Self::from_samples(self.horizon, &samples)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn panels(&self) -> usize {
        self.values.len() - 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.panels() as f64
    }

    pub fn mesh(&self) -> Vec<f64> {
        (0..=self.panels())
            .map(|j| mesh_node(self.horizon, self.panels(), j))
            .collect()
    }

    pub fn node(&self, j: usize) -> f64 {
        mesh_node(self.horizon, self.panels(), j)
    }

    /// Density samples at the mesh nodes.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `Psi(s_j) = int_0^{s_j} psi`, the inverse profile at the mesh nodes.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn vanishes_at_horizon(&self) -> bool {
        self.values[self.panels()] == 0.0
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let panels = self.panels();
        let x = (t / self.step()).clamp(0.0, panels as f64);
        let j = (x.floor() as usize).min(panels - 1);
        (j, x - j as f64)
    }

    /// `psi(t)` with linear interpolation between nodes.
    pub fn value_at(&self, t: f64) -> f64 {
        let (j, theta) = self.locate(t);
        self.values[j] + theta * (self.values[j + 1] - self.values[j])
    }

    /// `Psi(t)`.
    pub fn cumulative_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.horizon {
            return 1.0;
        }
        let (j, theta) = self.locate(t);
        let (p0, p1) = (self.values[j], self.values[j + 1]);
        let fraction = (p0 * theta + 0.5 * (p1 - p0) * theta * theta) / (0.5 * (p0 + p1));
        self.cumulative[j] + (self.cumulative[j + 1] - self.cumulative[j]) * fraction
    }

    /// `phi(q) = Psi^{-1}(q)` by bracketed bisection to `1e-12 T`, finished
    /// with one linear interpolation across the final bracket.
    pub fn inverse_cumulative(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return 0.0;
        }
        if q >= 1.0 {
            return self.horizon;
        }
        let j = self.cumulative.partition_point(|&c| c <= q) - 1;
        let mut lo = self.node(j);
        let mut hi = self.node(j + 1);
        let mut c_lo = self.cumulative[j];
        let mut c_hi = self.cumulative[j + 1];
        let tol = 1e-12 * self.horizon;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            let c_mid = self.cumulative_at(mid);
            if c_mid <= q {
                lo = mid;
                c_lo = c_mid;
            } else {
                hi = mid;
                c_hi = c_mid;
            }
        }
        if c_hi > c_lo {
            lo + (hi - lo) * (q - c_lo) / (c_hi - c_lo)
        } else {
            lo
        }
    }

    /// `t,psi` rows at every mesh node.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        csv::write_header(out, &["t", "psi"])?;
        for (j, &v) in self.values.iter().enumerate() {
            csv::write_row(out, &[self.node(j), v])?;
        }
        Ok(())
    }
}

impl Profile for GridDensity {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn phi(&self, tau: f64) -> f64 {
        self.inverse_cumulative(tau)
    }

    /// `1 / psi(phi(tau))`; infinite where the density vanishes.
    fn phi_prime(&self, tau: f64) -> f64 {
        1.0 / self.value_at(self.phi(tau))
    }
}

/// `1/3`-law density: `psi = w^{1/3} / int w^{1/3}` for nonnegative samples `w`.
pub fn density_from_weight(horizon: f64, weight: &[f64]) -> Result<GridDensity> {
    if weight.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidDensity(
            "weights must be finite and nonnegative".to_string(),
        ));
    }
    if weight.iter().all(|&w| w == 0.0) {
        return Err(Error::InvalidDensity("weight is identically zero".to_string()));
    }
    let roots: Vec<f64> = weight.iter().map(|w| w.cbrt()).collect();
    GridDensity::from_samples(horizon, &roots)
}

/// Strictly increasing points `0 = t_0 < ... < t_N = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
    steps: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid("need at least two points".to_string()));
        }
        if points[0] != 0.0 {
            return Err(Error::InvalidGrid(format!(
                "first point must be 0, got {}",
                points[0]
            )));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("non-finite grid point".to_string()));
        }
        if let Some(k) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "points not strictly increasing at index {k}"
            )));
        }
        let steps = points.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self { points, steps })
    }

    pub fn uniform(horizon: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("N must be at least 1".to_string()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon {horizon} must be positive")));
        }
        let points = (0..=n)
            .map(|k| if k == n { horizon } else { k as f64 * horizon / n as f64 })
            .collect();
        Self::new(points)
    }

    /// Number of steps `N`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.points.last().expect("at least two points")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// `dt_k = t_{k+1} - t_k`.
    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// Splits every step into `r` equal substeps.
    pub fn refine(&self, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidGrid("refinement factor must be positive".to_string()));
        }
        let mut points = Vec::with_capacity(self.len() * r + 1);
        for w in self.points.windows(2) {
            for i in 0..r {
                points.push(w[0] + (w[1] - w[0]) * i as f64 / r as f64);
            }
        }
        points.push(self.horizon());
        Self::new(points)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        csv::write_header(out, &["t"])?;
        for &t in &self.points {
            csv::write_row(out, &[t])?;
        }
        Ok(())
    }

    /// Reads the single-column `t` format written by [`TimeGrid::write_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidGrid("empty grid file".to_string()))?
            .map_err(|e| Error::InvalidGrid(e.to_string()))?;
        if header.trim() != "t" {
            return Err(Error::InvalidGrid(format!("expected header `t`, got `{header}`")));
        }
        let mut points = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::InvalidGrid(e.to_string()))?;
            let cell = line.trim();
            if cell.is_empty() {
                continue;
            }
            let t = cell
                .parse::<f64>()
                .map_err(|e| Error::InvalidGrid(format!("line {}: {e}", i + 2)))?;
            points.push(t);
        }
        Self::new(points)
    }
}

/// `t_k = phi(k / N)` for the profile with inverse `Psi`; endpoints are exact.
pub fn grid_from_density(density: &GridDensity, n: usize) -> Result<TimeGrid> {
    if n == 0 {
        return Err(Error::InvalidGrid("N must be at least 1".to_string()));
    }
    let points = (0..=n)
        .map(|k| match k {
            0 => 0.0,
            k if k == n => density.horizon(),
            k => density.inverse_cumulative(k as f64 / n as f64),
        })
        .collect();
    TimeGrid::new(points)
}

/// `#{k : t_k in [lo, hi]} / N`.
pub fn empirical_density(grid: &TimeGrid, lo: f64, hi: f64) -> Result<f64> {
    let horizon = grid.horizon();
    if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi > horizon || lo > hi {
        return Err(Error::InvalidInput(format!(
            "window [{lo}, {hi}] is not inside [0, {horizon}]"
        )));
    }
    let count = grid.points().iter().filter(|&&t| lo <= t && t <= hi).count();
    Ok(count as f64 / grid.len() as f64)
}
