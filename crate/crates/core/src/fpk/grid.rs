use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Largest boundary-cell mass fraction accepted from a solver.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-4;
pub const MASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryRule {
    ZeroFlux,
}

/// Uniform cell-centered grid on [−R, R]^d, flattened as idx = i + n·j.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub dim: usize,
    pub radius: f64,
    pub cells: usize,
    pub boundary: BoundaryRule,
}

impl GridSpec {
    pub fn new(dim: usize, radius: f64, cells: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return invalid(format!("grid dimension {dim} not supported (d in {{1,2}})"));
        }
        if !cells.is_power_of_two() || cells < 16 {
            return invalid(format!("cells per axis must be a power of two >= 16, got {cells}"));
        }
        if !(radius >= 4.0) || !radius.is_finite() {
            return invalid(format!("truncation radius must be >= 4, got {radius}"));
        }
        Ok(Self {
            dim,
            radius,
            cells,
            boundary: BoundaryRule::ZeroFlux,
        })
    }

    /// R = max(8/√β₂, 4).
    pub fn default_radius(beta2: f64) -> f64 {
        (8.0 / beta2.sqrt()).max(4.0)
    }

    pub fn with_default_radius(dim: usize, cells: usize, beta2: f64) -> Result<Self> {
        Self::new(dim, Self::default_radius(beta2), cells)
    }

    /// Same box with twice as many cells per axis.
    pub fn refined(&self) -> Self {
        Self {
            cells: self.cells * 2,
            ..*self
        }
    }

    pub fn h(&self) -> f64 {
        2.0 * self.radius / self.cells as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// 1D coordinate of cell center c.
    pub fn coord(&self, c: usize) -> f64 {
        -self.radius + (c as f64 + 0.5) * self.h()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.cells * j
    }

    pub fn split(&self, idx: usize) -> (usize, usize) {
        (idx % self.cells, idx / self.cells)
    }

    /// Cell center; the unused coordinate is 0 in d = 1.
    pub fn center(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.split(idx);
        if self.dim == 1 {
            [self.coord(i), 0.0]
        } else {
            [self.coord(i), self.coord(j)]
        }
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let (i, j) = self.split(idx);
        let n = self.cells;
        i == 0 || i == n - 1 || (self.dim == 2 && (j == 0 || j == n - 1))
    }

    /// Index of the cell whose lower corner is the origin.
    pub fn origin_cell(&self) -> usize {
        let m = self.cells / 2;
        if self.dim == 1 {
            m
        } else {
            self.index(m, m)
        }
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::Shape(format!("grids differ: {self:?} vs {other:?}")));
        }
        Ok(())
    }
}

pub(crate) fn euclid(x: &[f64; 2], dim: usize) -> f64 {
    x[..dim].iter().map(|t| t * t).sum::<f64>().sqrt()
}

/// Provenance of a computed density.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SolveDiagnostics {
    pub method: String,
    /// Mass removed by clipping negative cell values (before renormalization).
    pub clipped_mass: f64,
    pub boundary_mass: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub residual_history: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Nonnegative, mass-one cell-centered density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDensity {
    pub grid: GridSpec,
    values: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

impl GridDensity {
    /// Normalizes nonnegative `values` to unit mass.
    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return invalid(format!("density value {v} at cell {i} is negative or non-finite"));
        }
        let mass: f64 = values.iter().sum::<f64>() * grid.cell_volume();
        if !(mass > 0.0) {
            return Err(Error::Degenerate("density has zero mass".into()));
        }
        let values: Vec<f64> = values.into_iter().map(|v| v / mass).collect();
        let mut out = Self {
            grid,
            values,
            diagnostics: SolveDiagnostics {
                method: "samples".into(),
                ..Default::default()
            },
        };
        out.diagnostics.boundary_mass = out.boundary_mass();
        Ok(out)
    }

    /// Samples a nonnegative function at cell centers and normalizes.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|idx| f(&grid.center(idx)[..grid.dim])).collect();
        Self::from_values(grid, values)
    }

    /// Gaussian N(mean, var·I) sampled at cell centers.
    pub fn gaussian(grid: GridSpec, mean: [f64; 2], var: f64) -> Result<Self> {
        let d = grid.dim;
        Self::from_fn(grid, |x| {
            let r2: f64 = (0..d).map(|i| (x[i] - mean[i]).powi(2)).sum();
            (-0.5 * r2 / var).exp()
        })
    }

    pub(crate) fn with_diagnostics(mut self, diagnostics: SolveDiagnostics) -> Self {
        self.diagnostics = diagnostics;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn boundary_mass(&self) -> f64 {
        let vol = self.grid.cell_volume();
        (0..self.grid.len())
            .filter(|&i| self.grid.is_boundary(i))
            .map(|i| self.values[i] * vol)
            .sum()
    }

    /// Iterator over (cell center, value).
    pub fn cells(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        (0..self.grid.len()).map(move |i| (self.grid.center(i), self.values[i]))
    }

    /// Cell quadrature ∫ f ρ dx.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let d = self.grid.dim;
        self.cells()
            .map(|(x, v)| if v == 0.0 { 0.0 } else { f(&x[..d]) * v })
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// Piecewise multilinear interpolation through cell centers (constant beyond
    /// the outermost centers).
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let h = g.h();
        let n = g.cells;
        let locate = |t: f64| {
            let s = ((t + g.radius) / h - 0.5).clamp(0.0, (n - 1) as f64);
            let i = (s.floor() as usize).min(n - 2);
            (i, s - i as f64)
        };
        if g.dim == 1 {
            let (i, t) = locate(x[0]);
            self.values[i] * (1.0 - t) + self.values[i + 1] * t
        } else {
            let (i, s) = locate(x[0]);
            let (j, t) = locate(x[1]);
            let v = |a, b| self.values[g.index(a, b)];
            v(i, j) * (1.0 - s) * (1.0 - t)
                + v(i + 1, j) * s * (1.0 - t)
                + v(i, j + 1) * (1.0 - s) * t
                + v(i + 1, j + 1) * s * t
        }
    }

    /// Restriction to the 1D grid of axis `axis` by summing over the other axis.
    pub fn marginal(&self, axis: usize) -> Result<GridDensity> {
        if self.grid.dim != 2 || axis > 1 {
            return invalid("marginals are defined for d = 2 and axis in {0, 1}");
        }
        let n = self.grid.cells;
        let mut m = vec![0.0; n];
        for idx in 0..self.grid.len() {
            let (i, j) = self.grid.split(idx);
            m[if axis == 0 { i } else { j }] += self.values[idx];
        }
        GridDensity::from_values(GridSpec::new(1, self.grid.radius, n)?, m)
    }
}
