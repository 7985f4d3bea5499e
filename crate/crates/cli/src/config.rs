use std::path::{Path, PathBuf};

use serde::Deserialize;
use sde_gridopt::{LinearSdeModel, Matrix, Vector};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub gramian: GramianSection,
    #[serde(default)]
    pub ou_table: OuTableSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// A matrix as nested rows, or a bare number for the 1x1 case.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn to_matrix(&self, name: &str) -> Result<Matrix, CliError> {
        match self {
            Self::Scalar(v) => Ok(Matrix::from_element(1, 1, *v)),
            Self::Rows(rows) => {
                let ncols = rows.first().map_or(0, Vec::len);
                if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
                    return Err(CliError::Config(format!(
                        "model.{name} must be a non-empty rectangular array of rows"
                    )));
                }
                Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub a: MatrixSpec,
    pub b: MatrixSpec,
    /// Identity when omitted.
    pub m: Option<MatrixSpec>,
    pub horizon: f64,
    /// Zero when omitted.
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Uniform,
    TerminalOptimal,
    IntegralOptimal,
    File,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_kind")]
    pub kind: GridKind,
    pub n: Option<usize>,
    pub sweep: Option<Vec<usize>>,
    pub file: Option<PathBuf>,
}

fn default_kind() -> GridKind {
    GridKind::Uniform
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            n: None,
            sweep: None,
            file: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_paths() -> usize {
    100_000
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            paths: default_paths(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GramianSection {
    /// Mesh panels; must be even.
    #[serde(default = "default_panels")]
    pub panels: usize,
}

fn default_panels() -> usize {
    64
}

impl Default for GramianSection {
    fn default() -> Self {
        Self {
            panels: default_panels(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuTableSection {
    #[serde(default = "default_horizons")]
    pub horizons: Vec<f64>,
}

fn default_horizons() -> Vec<f64> {
    vec![0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0]
}

impl Default for OuTableSection {
    fn default() -> Self {
        Self {
            horizons: default_horizons(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        let mut config = Self::parse(&text)?;
        // Relative grid files resolve against the config's directory.
        if let (Some(file), Some(parent)) = (config.grid.file.as_mut(), path.parent()) {
            if file.is_relative() {
                *file = parent.join(&*file);
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        if let Some(sweep) = &config.grid.sweep {
            if sweep.is_empty() || sweep.windows(2).any(|w| w[1] <= w[0]) {
                return Err(CliError::Config(
                    "grid.sweep must be non-empty and strictly increasing".to_string(),
                ));
            }
        }
        if config.grid.kind == GridKind::File && config.grid.file.is_none() {
            return Err(CliError::Config("grid.kind = \"file\" needs grid.file".to_string()));
        }
        Ok(config)
    }

    pub fn model(&self) -> Result<LinearSdeModel, CliError> {
        let a = self.model.a.to_matrix("a")?;
        let b = self.model.b.to_matrix("b")?;
        let m = match &self.model.m {
            Some(m) => m.to_matrix("m")?,
            None => Matrix::identity(a.nrows(), a.nrows()),
        };
        Ok(LinearSdeModel::new(a, b, m, self.model.horizon)?)
    }

    pub fn initial_state(&self, dim: usize) -> Result<Vector, CliError> {
        match &self.model.x0 {
            None => Ok(Vector::zeros(dim)),
            Some(x) if x.len() == dim => Ok(Vector::from_column_slice(x)),
            Some(x) => Err(CliError::Config(format!(
                "model.x0 has {} entries, state dimension is {dim}",
                x.len()
            ))),
        }
    }

    /// Step counts to run: the sweep if given, else `n`.
    pub fn step_counts(&self) -> Result<Vec<usize>, CliError> {
        match (&self.grid.sweep, self.grid.n) {
            (Some(sweep), _) => Ok(sweep.clone()),
            (None, Some(n)) => Ok(vec![n]),
            (None, None) => Err(CliError::Config("grid needs n or sweep".to_string())),
        }
    }
}
