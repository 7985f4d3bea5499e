use std::io::Write;
use std::path::PathBuf;

use sde_gridopt::asymptotics::{
    min_phi_value, optimal_profile, ou_closed_forms, phi_functional, ups_functional,
    write_weight_csv, WeightCurve, WeightKind,
};
use sde_gridopt::csv::{fmt_f64, write_header, write_row};
use sde_gridopt::grid::grid_from_density;
use sde_gridopt::matfun::{ctrl_gramian, kt_matrix, obs_gramian};
use sde_gridopt::solver::{error_report, mc_verify_mse, ErrorReport, McReport};
use sde_gridopt::{GridDensity, LinearSdeModel, Matrix, StreamKey, TimeGrid};

use crate::config::{ExperimentConfig, GridKind};
use crate::CliError;

/// One CSV artifact.
pub struct Artifact {
    pub name: &'static str,
    pub body: Vec<u8>,
}

pub struct Context {
    pub config: ExperimentConfig,
    pub seed: u64,
}

fn artifact(name: &'static str, fill: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Artifact, CliError> {
    let mut body = Vec::new();
    fill(&mut body).map_err(|e| CliError::Io(PathBuf::from(name), e))?;
    Ok(Artifact { name, body })
}

fn matrix_columns(prefix: &str, n: usize) -> Vec<String> {
    (1..=n)
        .flat_map(|i| (1..=n).map(move |j| format!("{prefix}_{i}{j}")))
        .collect()
}

fn push_entries(row: &mut Vec<f64>, m: &Matrix) {
    for i in 0..m.nrows() {
        row.extend((0..m.ncols()).map(|j| m[(i, j)]));
    }
}

/// `t, G_ij, Q_ij, K_ij, F, S` over the mesh of `[0, T]`.
pub fn gramian(ctx: &Context) -> Result<Vec<Artifact>, CliError> {
    let model = ctx.config.model()?;
    let panels = ctx.config.gramian.panels;
    let f = WeightCurve::sample(&model, WeightKind::Terminal, panels)?;
    let s = WeightCurve::sample(&model, WeightKind::Integral, panels)?;
    let n = model.state_dim();
    let horizon = model.horizon();
    let mut columns = vec!["t".to_string()];
    for prefix in ["G", "Q", "K"] {
        columns.extend(matrix_columns(prefix, n));
    }
    columns.extend(["F".to_string(), "S".to_string()]);
    let mut rows = Vec::with_capacity(panels + 1);
    for j in 0..=panels {
        let t = if j == panels { horizon } else { horizon * j as f64 / panels as f64 };
        let a = model.dynamics();
        let mut row = vec![t];
        push_entries(&mut row, &ctrl_gramian(a, model.diffusion(), t)?);
        push_entries(&mut row, &obs_gramian(a, model.weight(), t)?);
        push_entries(&mut row, &kt_matrix(a, model.diffusion(), t)?);
        row.push(f.values()[j]);
        row.push(s.values()[j]);
        rows.push(row);
    }
    let table = artifact("gramian.csv", |out| {
        let header: Vec<&str> = columns.iter().map(String::as_str).collect();
        write_header(out, &header)?;
        rows.iter().try_for_each(|r| write_row(out, r))
    })?;
    let weights = artifact("weights.csv", |out| write_weight_csv(&f, &s, out))?;
    Ok(vec![table, weights])
}

/// The density behind a grid kind, if it has one.
fn grid_density(model: &LinearSdeModel, kind: GridKind) -> Result<Option<GridDensity>, CliError> {
    Ok(match kind {
        GridKind::Uniform => Some(GridDensity::uniform(model.horizon())?),
        GridKind::TerminalOptimal => Some(optimal_profile(model, WeightKind::Terminal)?.density),
        GridKind::IntegralOptimal => Some(optimal_profile(model, WeightKind::Integral)?.density),
        GridKind::File => None,
    })
}

fn file_grid(config: &ExperimentConfig, model: &LinearSdeModel) -> Result<TimeGrid, CliError> {
    let path = config.grid.file.clone().expect("validated at parse time");
    let file = std::fs::File::open(&path).map_err(|e| CliError::Io(path.clone(), e))?;
    let grid = TimeGrid::read_csv(std::io::BufReader::new(file))?;
    if grid.horizon() != model.horizon() {
        return Err(CliError::Config(format!(
            "grid file ends at {}, model horizon is {}",
            grid.horizon(),
            model.horizon()
        )));
    }
    Ok(grid)
}

/// Grids for every requested step count.
fn grids(config: &ExperimentConfig, model: &LinearSdeModel) -> Result<(Vec<TimeGrid>, Option<GridDensity>), CliError> {
    let density = grid_density(model, config.grid.kind)?;
    let grids = match (&density, config.grid.kind) {
        (_, GridKind::File) => vec![file_grid(config, model)?],
        (_, GridKind::Uniform) => config
            .step_counts()?
            .into_iter()
            .map(|n| TimeGrid::uniform(model.horizon(), n))
            .collect::<Result<_, _>>()?,
        (Some(d), _) => config
            .step_counts()?
            .into_iter()
            .map(|n| grid_from_density(d, n))
            .collect::<Result<_, _>>()?,
        (None, _) => unreachable!("only file grids lack a density"),
    };
    Ok((grids, density))
}

/// Error functionals per step count, then a `limit` row with the asymptotic
/// values of `N^2 T_N` and `N^2 I_N` for the grid density (blank where the
/// functional is undefined).
pub fn convergence(ctx: &Context) -> Result<Vec<Artifact>, CliError> {
    let model = ctx.config.model()?;
    let (grids, density) = grids(&ctx.config, &model)?;
    let reports = grids
        .iter()
        .map(|g| error_report(&model, g))
        .collect::<Result<Vec<_>, _>>()?;
    let limits = match &density {
        Some(psi) => Some((
            (!psi.vanishes_at_horizon())
                .then(|| phi_functional(&model, psi))
                .transpose()?,
            ups_functional(&model, psi)?,
        )),
        None => None,
    };
    Ok(vec![artifact("convergence.csv", |out| {
        write_header(out, &ErrorReport::CSV_HEADER)?;
        for r in &reports {
            let v = r.csv_values();
            writeln!(out, "{},{},{},{},{}", r.n, fmt_f64(v[1]), fmt_f64(v[2]), fmt_f64(v[3]), fmt_f64(v[4]))?;
        }
        if let Some((phi, ups)) = limits {
            let phi = phi.map(fmt_f64).unwrap_or_default();
            writeln!(out, "limit,,,{phi},{}", fmt_f64(ups))?;
        }
        Ok(())
    })?])
}

pub fn mc_verify(ctx: &Context) -> Result<Vec<Artifact>, CliError> {
    let model = ctx.config.model()?;
    let x0 = ctx.config.initial_state(model.state_dim())?;
    let (grids, _) = grids(&ctx.config, &model)?;
    let key = StreamKey::new(ctx.seed);
    let reports = grids
        .iter()
        .map(|g| mc_verify_mse(&model, g, &x0, ctx.config.mc.paths, key))
        .collect::<Result<Vec<_>, _>>()?;
    let write = |out: &mut Vec<u8>, row: fn(&McReport) -> [f64; 5]| -> std::io::Result<()> {
        write_header(out, &McReport::CSV_HEADER)?;
        for r in &reports {
            let v = row(r);
            writeln!(out, "{},{},{},{},{}", r.n, fmt_f64(v[1]), fmt_f64(v[2]), fmt_f64(v[3]), fmt_f64(v[4]))?;
        }
        Ok(())
    };
    Ok(vec![
        artifact("mc_verify.csv", |out| write(out, McReport::terminal_csv))?,
        artifact("mc_verify_integral.csv", |out| write(out, McReport::integral_csv))?,
    ])
}

/// Analytic against quadrature values of the scalar OU optimum over horizons.
pub fn ou_table(ctx: &Context) -> Result<Vec<Artifact>, CliError> {
    let base = ctx.config.model()?;
    if !base.is_scalar_ou() {
        return Err(CliError::Config(
            "ou-table needs a scalar model with A < 0, B != 0 and M = 1".to_string(),
        ));
    }
    let mut rows = Vec::new();
    for &horizon in &ctx.config.ou_table.horizons {
        let model = base.with_horizon(horizon)?;
        let cf = ou_closed_forms(&model)?;
        let min_quad = min_phi_value(&model)?;
        let uniform_quad = phi_functional(&model, &GridDensity::uniform(horizon)?)?;
        rows.push([
            horizon,
            cf.min_phi,
            min_quad,
            cf.uniform_phi,
            uniform_quad,
            cf.ratio,
            uniform_quad / min_quad,
            cf.ratio_asymptote,
            cf.ratio / cf.ratio_asymptote,
        ]);
    }
    Ok(vec![artifact("ou_table.csv", |out| {
        write_header(
            out,
            &[
                "T",
                "min_phi",
                "min_phi_quad",
                "uniform_phi",
                "uniform_phi_quad",
                "ratio",
                "ratio_quad",
                "asymptote",
                "ratio_over_asymptote",
            ],
        )?;
        rows.iter().try_for_each(|r| write_row(out, r))
    })?])
}
