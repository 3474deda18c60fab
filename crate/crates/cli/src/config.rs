//! Experiment configuration: JSON schema, range validation and conversion to
//! `fpk-core` objects.
//!
//! Every block rejects unknown keys, so a typo surfaces as a validation error
//! with its line and column instead of a silently ignored setting.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use fpk_core::coeffs::{make_example_field, DiffusionMatrixField, DriftBounds, DriftField, ScalarField, Smoothness};
use fpk_core::expr::{Expr, Scope};
use fpk_core::fpk::{GridSpec, SolveOptions};
use fpk_core::meanfield::InteractionKernel;
use fpk_core::models::{builtin_model, builtin_poisson};

use crate::error::CliError;
use crate::Command;

pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional guard: must match the subcommand when present.
    pub command: Option<String>,
    pub seed: Option<u64>,
    pub model: Option<ModelConfig>,
    pub grid: Option<GridConfig>,
    pub dini: Option<DiniConfig>,
    pub solve: Option<SolveConfig>,
    pub poisson: Option<PoissonConfig>,
    pub stability: Option<StabilityConfig>,
    pub meanfield: Option<MeanfieldConfig>,
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
    #[serde(default)]
    pub svg: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub d: usize,
    /// Box half-width; defaults to max(8/√β₂, 4).
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Named model; excludes `diffusion` and `drift`.
    pub builtin: Option<String>,
    /// Parameters visible to every expression of the model.
    #[serde(default)]
    pub params: Params,
    pub diffusion: Option<DiffusionConfig>,
    pub drift: Option<DriftConfig>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConfig {
    /// `[a11]` in d = 1, `[a11, a12, a22]` in d = 2.
    pub entries: Option<Vec<String>>,
    /// Scalar example field used as a(x)·I.
    pub example: Option<String>,
    #[serde(default)]
    pub params: Params,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    pub components: Option<Vec<String>>,
    pub example: Option<String>,
    #[serde(default)]
    pub params: Params,
    pub bounds: Option<BoundsConfig>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub beta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "one")]
    pub half_width: f64,
    #[serde(default = "default_centers")]
    pub centers: usize,
    #[serde(default = "default_ppb")]
    pub points_per_ball: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            half_width: 1.0,
            centers: default_centers(),
            points_per_ball: default_ppb(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiiConfig {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for RadiiConfig {
    fn default() -> Self {
        Self {
            min: 1e-4,
            max: 0.5,
            count: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiniExpectation {
    Finite,
    Divergent,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub expr: Option<String>,
    pub example: Option<String>,
    #[serde(default)]
    pub params: Params,
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiniConfig {
    pub field: FieldConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub radii: RadiiConfig,
    pub t0: Option<f64>,
    /// Mollifier scales ε for the modulus-preservation check.
    #[serde(default)]
    pub mollify: Vec<f64>,
    pub expect: Option<DiniExpectation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    #[default]
    Grid,
    Exact,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub bounded_domain: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            bounded_domain: false,
        }
    }
}

impl SolverConfig {
    pub fn options(&self, strict: bool) -> SolveOptions {
        SolveOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            strict,
            bounded_domain: self.bounded_domain,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpConfig {
    pub k: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default)]
    pub method: SolveMethod,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_moments")]
    pub moments: Vec<f64>,
    /// Harnack ratio sup/inf of ρ on the ball of this radius.
    pub harnack_radius: Option<f64>,
    pub weighted_lp: Option<LpConfig>,
    /// Number of random test functions for the weak-form check (0 disables it).
    #[serde(default)]
    pub weak_form_functions: usize,
    #[serde(default = "yes")]
    pub condition_h: bool,
    #[serde(default)]
    pub sampling: SamplingConfig,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            method: SolveMethod::Grid,
            solver: SolverConfig::default(),
            moments: default_moments(),
            harnack_radius: None,
            weighted_lp: None,
            weak_form_functions: 0,
            condition_h: true,
            sampling: SamplingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoissonMethod {
    Quadrature,
    Grid,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonConfig {
    /// Named problem (model and ψ); excludes `psi` and the model block.
    pub builtin: Option<String>,
    pub psi: Option<String>,
    #[serde(default)]
    pub params: Params,
    #[serde(default = "one")]
    pub k: f64,
    pub p: Option<f64>,
    pub s: Option<f64>,
    /// Defaults to quadrature in d = 1 and grid in d = 2.
    pub method: Option<PoissonMethod>,
    #[serde(default = "yes")]
    pub centered: bool,
    /// Radii for the restricted quotients; defaults to R/4 and R/2.
    pub radii: Option<Vec<f64>>,
    /// Declares a check on max |Lu − ψ̃| over |x|∞ ≤ R/2.
    pub residual_tol: Option<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyConfig {
    OuDrift,
    OuDiffusion,
    Custom,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualityConfig {
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Scale of the bump·|x|² test function.
    #[serde(default = "default_bump_scale")]
    pub scale: f64,
    #[serde(default = "default_duality_factor")]
    pub factor: f64,
    #[serde(default = "default_min_order")]
    pub min_order: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityChecks {
    /// Expected log-log slope of the LHS against δ (`null` disables the check).
    #[serde(default = "default_slope")]
    pub slope: Option<f64>,
    #[serde(default = "default_slope_tol")]
    pub slope_tolerance: f64,
    #[serde(default = "default_spread")]
    pub c_hat_spread_max: Option<f64>,
}

impl Default for StabilityChecks {
    fn default() -> Self {
        Self {
            slope: default_slope(),
            slope_tolerance: default_slope_tol(),
            c_hat_spread_max: default_spread(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub family: FamilyConfig,
    /// Required by `stability`; supplied by the axis under `sweep`.
    pub deltas: Option<Vec<f64>>,
    #[serde(default = "two")]
    pub r: f64,
    #[serde(default = "one")]
    pub k: f64,
    /// (A_μ, b_μ) of a custom family; expressions may read `delta`.
    pub perturbed: Option<ModelConfig>,
    pub duality: Option<DualityConfig>,
    #[serde(default)]
    pub checks: StabilityChecks,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// `tanh-drift` or `gaussian-diffusion`; excludes `q` and `h`.
    pub builtin: Option<String>,
    #[serde(default)]
    pub q: Vec<String>,
    #[serde(default)]
    pub h: Vec<String>,
    #[serde(default)]
    pub params: Params,
    pub q_sup: Option<f64>,
    pub h_sup: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartConfig {
    pub mean: Vec<f64>,
    pub var: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzConfig {
    pub n: f64,
    pub m: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub eps_max: f64,
    #[serde(default = "default_threshold_tol")]
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanfieldConfig {
    pub kernel: KernelConfig,
    /// Required by `meanfield`; supplied by the axis under `sweep`.
    pub eps: Option<f64>,
    #[serde(default = "one")]
    pub k: f64,
    #[serde(default)]
    pub starts: Vec<StartConfig>,
    #[serde(default = "default_fp_tol")]
    pub tol: f64,
    #[serde(default = "default_fp_iter")]
    pub max_iter: usize,
    pub lipschitz: Option<LipschitzConfig>,
    /// Estimate the Lipschitz factor of Φ_ε over Gaussian probe pairs.
    #[serde(default = "yes")]
    pub contraction: bool,
    pub threshold: Option<ThresholdConfig>,
    /// Largest accepted distance between fixed points from different starts
    /// (defaults to 10 × tol).
    pub uniqueness_tol: Option<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepTarget {
    Stability,
    Meanfield,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// `stability` sweeps δ, `meanfield` sweeps ε.
    pub target: SweepTarget,
    pub values: Vec<f64>,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn yes() -> bool {
    true
}
fn default_centers() -> usize {
    16
}
fn default_ppb() -> usize {
    64
}
fn default_tol() -> f64 {
    SolveOptions::default().tol
}
fn default_max_iter() -> usize {
    SolveOptions::default().max_iter
}
fn default_moments() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}
fn default_levels() -> usize {
    3
}
fn default_bump_scale() -> f64 {
    3.0
}
fn default_duality_factor() -> f64 {
    10.0
}
fn default_min_order() -> f64 {
    1.8
}
fn default_slope() -> Option<f64> {
    Some(1.0)
}
fn default_slope_tol() -> f64 {
    0.1
}
fn default_spread() -> Option<f64> {
    Some(10.0)
}
fn default_threshold_tol() -> f64 {
    1e-3
}
fn default_fp_tol() -> f64 {
    1e-8
}
fn default_fp_iter() -> usize {
    100
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    /// Parses the config; serde reports unknown keys with line and column.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| {
            let mut message = e.to_string();
            if let Some(i) = message.rfind(" at line ") {
                message.truncate(i);
            }
            CliError::Parse {
                line: e.line(),
                column: e.column(),
                message,
            }
        })
    }

    /// Canonical serialization used for the digest.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Range checks for everything `command` reads. Runs before any solve.
    pub fn validate(&self, command: Command) -> Result<(), CliError> {
        let mut v = Validator::default();
        if let Some(c) = &self.command {
            if c != command.name() {
                v.fail("command", format!("config is for `{c}`, not `{}`", command.name()));
            }
        }
        match command {
            Command::Dini => match &self.dini {
                Some(c) => c.validate(&mut v, self.grid.map(|g| g.d)),
                None => v.fail("dini", "block is required"),
            },
            Command::Solve => {
                self.validate_grid(&mut v, true);
                self.validate_model(&mut v, "model", self.model.as_ref(), true);
                match &self.solve {
                    Some(c) => c.validate(&mut v, self.grid.map(|g| g.d)),
                    None => SolveConfig::default().validate(&mut v, self.grid.map(|g| g.d)),
                }
            }
            Command::Poisson => {
                self.validate_grid(&mut v, true);
                match &self.poisson {
                    Some(c) => {
                        let builtin = c.builtin.is_some();
                        self.validate_model(&mut v, "model", self.model.as_ref(), !builtin);
                        if builtin && self.model.is_some() {
                            v.fail(
                                "poisson.builtin",
                                "a built-in problem brings its own model; remove the model block",
                            );
                        }
                        c.validate(&mut v, self.grid);
                    }
                    None => v.fail("poisson", "block is required"),
                }
            }
            Command::Stability => {
                self.validate_grid(&mut v, true);
                match &self.stability {
                    Some(c) => self.validate_stability(&mut v, c, true),
                    None => v.fail("stability", "block is required"),
                }
            }
            Command::Meanfield => {
                self.validate_grid(&mut v, true);
                match &self.meanfield {
                    Some(c) => self.validate_meanfield(&mut v, c, true),
                    None => v.fail("meanfield", "block is required"),
                }
            }
            Command::Sweep => {
                self.validate_grid(&mut v, true);
                match &self.sweep {
                    Some(s) => {
                        if s.values.len() < 3 {
                            v.fail(
                                "sweep.values",
                                format!("a sweep axis needs at least 3 points, got {}", s.values.len()),
                            );
                        }
                        if s.values.iter().any(|x| !x.is_finite()) {
                            v.fail("sweep.values", "values must be finite");
                        }
                        let mut sorted = s.values.clone();
                        sorted.sort_by(f64::total_cmp);
                        if sorted.windows(2).any(|w| w[0] == w[1]) {
                            v.fail("sweep.values", "values must be distinct");
                        }
                        match s.target {
                            SweepTarget::Stability => match &self.stability {
                                Some(c) => {
                                    if s.values.iter().any(|x| !(*x >= 0.0)) {
                                        v.fail("sweep.values", "delta values must be >= 0");
                                    }
                                    if c.deltas.is_some() {
                                        v.fail("stability.deltas", "the sweep axis supplies delta; remove this key");
                                    }
                                    self.validate_stability(&mut v, c, false);
                                }
                                None => v.fail("stability", "block is required by a stability sweep"),
                            },
                            SweepTarget::Meanfield => match &self.meanfield {
                                Some(c) => {
                                    if s.values.iter().any(|x| !(0.0..=1.0).contains(x)) {
                                        v.fail("sweep.values", "eps values must lie in [0, 1]");
                                    }
                                    if c.eps.is_some() {
                                        v.fail("meanfield.eps", "the sweep axis supplies eps; remove this key");
                                    }
                                    self.validate_meanfield(&mut v, c, false);
                                }
                                None => v.fail("meanfield", "block is required by a meanfield sweep"),
                            },
                        }
                    }
                    None => v.fail("sweep", "block is required"),
                }
            }
        }
        v.finish()
    }

    fn validate_grid(&self, v: &mut Validator, required: bool) {
        match &self.grid {
            Some(g) => {
                if !(1..=2).contains(&g.d) {
                    v.fail("grid.d", format!("{} not supported (d in {{1, 2}})", g.d));
                }
                if g.n < 8 || g.n > 4096 {
                    v.fail("grid.n", format!("{} outside [8, 4096]", g.n));
                }
                if let Some(r) = g.radius {
                    if !(r > 0.0 && r.is_finite()) {
                        v.fail("grid.R", format!("{r} must be positive and finite"));
                    }
                }
            }
            None if required => v.fail("grid", "block is required"),
            None => {}
        }
    }

    fn validate_model(&self, v: &mut Validator, path: &str, m: Option<&ModelConfig>, required: bool) {
        let Some(m) = m else {
            if required {
                v.fail(path, "block is required");
            }
            return;
        };
        let d = self.grid.map(|g| g.d);
        check_params(v, &format!("{path}.params"), &m.params);
        if m.builtin.is_some() {
            if m.diffusion.is_some() || m.drift.is_some() {
                v.fail(&format!("{path}.builtin"), "excludes `diffusion` and `drift`");
            }
            return;
        }
        if let Some(a) = &m.diffusion {
            let p = format!("{path}.diffusion");
            check_params(v, &format!("{p}.params"), &a.params);
            match (&a.entries, &a.example) {
                (Some(_), Some(_)) => v.fail(&p, "give either `entries` or `example`"),
                (None, None) => v.fail(&p, "needs `entries` or `example`"),
                (Some(e), None) => {
                    if let Some(d) = d {
                        let want = if d == 1 { 1 } else { 3 };
                        if e.len() != want {
                            v.fail(
                                &format!("{p}.entries"),
                                format!("d = {d} needs {want} entries, got {}", e.len()),
                            );
                        }
                    }
                }
                _ => {}
            }
            match a.lambda {
                Some(l) if l > 0.0 && l <= 1.0 => {}
                Some(l) => v.fail(&format!("{p}.lambda"), format!("{l} outside (0, 1]")),
                None => v.fail(&format!("{p}.lambda"), "is required"),
            }
        }
        match &m.drift {
            Some(b) => {
                let p = format!("{path}.drift");
                check_params(v, &format!("{p}.params"), &b.params);
                match (&b.components, &b.example) {
                    (Some(_), Some(_)) => v.fail(&p, "give either `components` or `example`"),
                    (None, None) => v.fail(&p, "needs `components` or `example`"),
                    (Some(c), None) => {
                        if let Some(d) = d {
                            if c.len() != d {
                                v.fail(
                                    &format!("{p}.components"),
                                    format!("d = {d} needs {d} components, got {}", c.len()),
                                );
                            }
                        }
                        if b.bounds.is_none() {
                            v.fail(&format!("{p}.bounds"), "is required for expression drifts");
                        }
                    }
                    _ => {}
                }
                if let Some(bd) = &b.bounds {
                    let bp = format!("{p}.bounds");
                    if !(bd.beta >= 1.0 && bd.beta.is_finite()) {
                        v.fail(&format!("{bp}.beta"), format!("{} must be >= 1", bd.beta));
                    }
                    for (name, x) in [("beta1", bd.beta1), ("beta2", bd.beta2), ("beta3", bd.beta3)] {
                        if !(x > 0.0 && x.is_finite()) {
                            v.fail(&format!("{bp}.{name}"), format!("{x} must be positive"));
                        }
                    }
                }
            }
            None => v.fail(&format!("{path}.drift"), "is required unless `builtin` is given"),
        }
    }

    fn validate_stability(&self, v: &mut Validator, c: &StabilityConfig, direct: bool) {
        if direct {
            match &c.deltas {
                Some(ds) => {
                    if ds.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                        v.fail("stability.deltas", "values must be finite and >= 0");
                    }
                    if ds.windows(2).any(|w| w[0] >= w[1]) {
                        v.fail("stability.deltas", "values must be strictly increasing");
                    }
                    if ds.iter().filter(|x| **x > 0.0).count() < 2 {
                        v.fail("stability.deltas", "needs at least two positive values for the fit");
                    }
                }
                None => v.fail("stability.deltas", "is required"),
            }
        }
        if !(c.r > 1.0 && c.r.is_finite()) {
            v.fail("stability.r", format!("{} must exceed 1", c.r));
        }
        if !(c.k >= 1.0 && c.k.is_finite()) {
            v.fail("stability.k", format!("{} must be >= 1", c.k));
        }
        c.solver.validate(v, "stability.solver");
        if let Some(t) = c.checks.slope {
            if !t.is_finite() {
                v.fail("stability.checks.slope", "must be finite");
            }
        }
        if !(c.checks.slope_tolerance > 0.0) {
            v.fail("stability.checks.slope_tolerance", "must be positive");
        }
        if let Some(s) = c.checks.c_hat_spread_max {
            if !(s >= 1.0) {
                v.fail("stability.checks.c_hat_spread_max", format!("{s} must be >= 1"));
            }
        }
        if let Some(dc) = &c.duality {
            if dc.levels < 3 || dc.levels > 6 {
                v.fail("stability.duality.levels", format!("{} outside [3, 6]", dc.levels));
            }
            if !(dc.scale > 0.0) {
                v.fail("stability.duality.scale", "must be positive");
            }
            if !(dc.factor > 0.0) {
                v.fail("stability.duality.factor", "must be positive");
            }
        }
        match c.family {
            FamilyConfig::Custom => {
                self.validate_model(v, "model", self.model.as_ref(), true);
                self.validate_model(v, "stability.perturbed", c.perturbed.as_ref(), true);
            }
            _ => {
                if c.perturbed.is_some() {
                    v.fail("stability.perturbed", "only used by the custom family");
                }
                if self.model.is_some() {
                    v.fail("model", "the OU families fix the coefficients; remove this block");
                }
            }
        }
    }

    fn validate_meanfield(&self, v: &mut Validator, c: &MeanfieldConfig, direct: bool) {
        self.validate_model(v, "model", self.model.as_ref(), true);
        let d = self.grid.map(|g| g.d).unwrap_or(1);
        if direct {
            match c.eps {
                Some(e) if (0.0..=1.0).contains(&e) => {}
                Some(e) => v.fail("meanfield.eps", format!("{e} outside [0, 1]")),
                None => v.fail("meanfield.eps", "is required"),
            }
        }
        if !(c.k >= 1.0 && c.k.is_finite()) {
            v.fail("meanfield.k", format!("{} must be >= 1", c.k));
        }
        if !(c.tol > 0.0) {
            v.fail("meanfield.tol", "must be positive");
        }
        if c.max_iter == 0 || c.max_iter > 10_000 {
            v.fail("meanfield.max_iter", format!("{} outside [1, 10000]", c.max_iter));
        }
        for (i, s) in c.starts.iter().enumerate() {
            if s.mean.len() != d {
                v.fail(&format!("meanfield.starts[{i}].mean"), format!("needs {d} entries"));
            }
            if !(s.var > 0.0 && s.var.is_finite()) {
                v.fail(&format!("meanfield.starts[{i}].var"), "must be positive");
            }
        }
        if let Some(l) = &c.lipschitz {
            if !(l.n > 0.0 && l.m >= 0.0) {
                v.fail("meanfield.lipschitz", "needs n > 0 and m >= 0");
            }
        }
        if let Some(t) = &c.threshold {
            if !(t.eps_max > 0.0 && t.eps_max <= 1.0) {
                v.fail("meanfield.threshold.eps_max", format!("{} outside (0, 1]", t.eps_max));
            }
            if !(t.tol > 0.0) {
                v.fail("meanfield.threshold.tol", "must be positive");
            }
        }
        if let Some(u) = c.uniqueness_tol {
            if !(u > 0.0) {
                v.fail("meanfield.uniqueness_tol", "must be positive");
            }
        }
        let kc = &c.kernel;
        check_params(v, "meanfield.kernel.params", &kc.params);
        if kc.builtin.is_some() {
            if !kc.q.is_empty() || !kc.h.is_empty() || kc.q_sup.is_some() || kc.h_sup.is_some() {
                v.fail("meanfield.kernel.builtin", "excludes `q`, `h`, `q_sup` and `h_sup`");
            }
        } else {
            if kc.q.is_empty() && kc.h.is_empty() {
                v.fail("meanfield.kernel", "needs `builtin`, `q` or `h`");
            }
            if !kc.q.is_empty() && kc.q_sup.is_none() {
                v.fail("meanfield.kernel.q_sup", "is required with `q`");
            }
            if !kc.h.is_empty() && kc.h_sup.is_none() {
                v.fail("meanfield.kernel.h_sup", "is required with `h`");
            }
        }
        c.solver.validate(v, "meanfield.solver");
    }

    /// Grid of the config; `R` defaults to `model.radius` or max(8/√β₂, 4).
    pub fn grid_spec(&self, model: &BuiltModel) -> Result<GridSpec, CliError> {
        let g = self
            .grid
            .ok_or_else(|| CliError::validation("grid", "block is required"))?;
        let radius = g
            .radius
            .or(model.radius)
            .unwrap_or_else(|| GridSpec::default_radius(model.b.bounds().beta2));
        GridSpec::new(g.d, radius, g.n).map_err(|e| CliError::validation("grid", e))
    }
}

impl DiniConfig {
    fn validate(&self, v: &mut Validator, grid_d: Option<usize>) {
        let f = &self.field;
        check_params(v, "dini.field.params", &f.params);
        match (&f.expr, &f.example) {
            (Some(_), Some(_)) => v.fail("dini.field", "give either `expr` or `example`"),
            (None, None) => v.fail("dini.field", "needs `expr` or `example`"),
            _ => {}
        }
        let d = self.dim(grid_d);
        if !(1..=2).contains(&d) {
            v.fail("dini.field.dim", format!("{d} not supported (d in {{1, 2}})"));
        }
        self.sampling.validate(v, "dini.sampling");
        let r = &self.radii;
        if !(r.min > 0.0 && r.min < r.max && r.max.is_finite()) {
            v.fail(
                "dini.radii",
                format!("need 0 < min < max (got {} and {})", r.min, r.max),
            );
        }
        if r.count < 4 || r.count > 2000 {
            v.fail("dini.radii.count", format!("{} outside [4, 2000]", r.count));
        }
        if let Some(t0) = self.t0 {
            if !(t0 > 0.0 && t0 < 1.0) {
                v.fail("dini.t0", format!("{t0} outside (0, 1)"));
            }
        }
        if self.mollify.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            v.fail("dini.mollify", "scales must be positive");
        }
    }

    pub fn dim(&self, grid_d: Option<usize>) -> usize {
        self.field
            .dim
            .or_else(|| self.field.params.get("d").map(|d| *d as usize))
            .or(grid_d)
            .unwrap_or(1)
    }
}

impl SolveConfig {
    fn validate(&self, v: &mut Validator, d: Option<usize>) {
        self.solver.validate(v, "solve.solver");
        if self.method == SolveMethod::Exact && d == Some(2) {
            v.fail("solve.method", "the exact solver is one-dimensional");
        }
        if self.moments.iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
            v.fail("solve.moments", "orders must be finite and >= 0");
        }
        if let Some(r) = self.harnack_radius {
            if !(r > 0.0) {
                v.fail("solve.harnack_radius", "must be positive");
            }
        }
        if let Some(lp) = &self.weighted_lp {
            if !(lp.k >= 0.0) {
                v.fail("solve.weighted_lp.k", "must be >= 0");
            }
            if !(lp.p > 1.0 && lp.p.is_finite()) {
                v.fail("solve.weighted_lp.p", "must exceed 1");
            }
        }
        if self.weak_form_functions > 1000 {
            v.fail("solve.weak_form_functions", "at most 1000");
        }
        self.sampling.validate(v, "solve.sampling");
    }
}

impl PoissonConfig {
    fn validate(&self, v: &mut Validator, grid: Option<GridConfig>) {
        check_params(v, "poisson.params", &self.params);
        match (&self.builtin, &self.psi) {
            (Some(_), Some(_)) => v.fail("poisson", "give either `builtin` or `psi`"),
            (None, None) => v.fail("poisson", "needs `builtin` or `psi`"),
            _ => {}
        }
        if !(self.k >= 1.0 && self.k.is_finite()) {
            v.fail("poisson.k", format!("{} must be >= 1", self.k));
        }
        let d = grid.map(|g| g.d).unwrap_or(1);
        if let Some(p) = self.p {
            if !(p > d as f64 && p.is_finite()) {
                v.fail("poisson.p", format!("{p} must exceed d = {d}"));
            }
        }
        if let Some(s) = self.s {
            if !(s >= 0.0 && s.is_finite()) {
                v.fail("poisson.s", format!("{s} must be >= 0"));
            }
        }
        if self.method == Some(PoissonMethod::Quadrature) && d != 1 {
            v.fail("poisson.method", "the quadrature solver is one-dimensional");
        }
        if let Some(radii) = &self.radii {
            if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                v.fail("poisson.radii", "radii must be positive");
            }
        }
        if let Some(t) = self.residual_tol {
            if !(t > 0.0) {
                v.fail("poisson.residual_tol", "must be positive");
            }
        }
        self.solver.validate(v, "poisson.solver");
    }
}

impl SolverConfig {
    fn validate(&self, v: &mut Validator, path: &str) {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            v.fail(&format!("{path}.tol"), format!("{} outside (0, 1)", self.tol));
        }
        if self.max_iter == 0 {
            v.fail(&format!("{path}.max_iter"), "must be positive");
        }
    }
}

impl SamplingConfig {
    fn validate(&self, v: &mut Validator, path: &str) {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            v.fail(&format!("{path}.half_width"), "must be positive");
        }
        if self.centers == 0 || self.centers > 10_000 {
            v.fail(
                &format!("{path}.centers"),
                format!("{} outside [1, 10000]", self.centers),
            );
        }
        if self.points_per_ball < 2 || self.points_per_ball > 10_000 {
            v.fail(
                &format!("{path}.points_per_ball"),
                format!("{} outside [2, 10000]", self.points_per_ball),
            );
        }
    }
}

fn check_params(v: &mut Validator, path: &str, params: &Params) {
    for (k, x) in params {
        if !x.is_finite() {
            v.fail(&format!("{path}.{k}"), "must be finite");
        }
    }
}

#[derive(Default)]
struct Validator {
    errors: Vec<(String, String)>,
}

impl Validator {
    fn fail(&mut self, field: &str, msg: impl Into<String>) {
        self.errors.push((field.to_string(), msg.into()));
    }

    fn finish(self) -> Result<(), CliError> {
        if self.errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invalid { problems: self.errors })
        }
    }
}

/// Coefficients built from a model block.
pub struct BuiltModel {
    pub a: DiffusionMatrixField,
    pub b: DriftField,
    /// Box radius recommended by a built-in model.
    pub radius: Option<f64>,
}

fn merged(shared: &Params, own: &Params) -> Params {
    let mut out = shared.clone();
    out.extend(own.iter().map(|(k, v)| (k.clone(), *v)));
    out
}

fn parse_field(dim: usize, src: &str, params: &Params, path: &str) -> Result<ScalarField, CliError> {
    let e = Expr::parse(src, &Scope::new(dim, params)).map_err(|e| CliError::validation(path, e))?;
    Ok(ScalarField::expr(dim, e, Smoothness::Rough))
}

fn example(name: &str, params: &Params, dim: usize, path: &str) -> Result<fpk_core::coeffs::ExampleField, CliError> {
    let mut p = params.clone();
    p.entry("d".to_string()).or_insert(dim as f64);
    make_example_field(name, &p).map_err(|e| CliError::validation(path, e))
}

impl ModelConfig {
    /// Builds (A, b) in dimension `dim`; `extra` parameters (e.g. δ) override the block's.
    pub fn build(&self, dim: usize, extra: &Params, path: &str) -> Result<BuiltModel, CliError> {
        let shared = merged(&self.params, extra);
        if let Some(name) = &self.builtin {
            let m = builtin_model(name).map_err(|e| CliError::validation(&format!("{path}.builtin"), e))?;
            if m.dim() != dim {
                return Err(CliError::validation(
                    &format!("{path}.builtin"),
                    format!("model `{name}` has d = {}, grid has d = {dim}", m.dim()),
                ));
            }
            return Ok(BuiltModel {
                a: m.a,
                b: m.b,
                radius: Some(m.radius),
            });
        }
        let a = match &self.diffusion {
            None => DiffusionMatrixField::identity(dim),
            Some(c) => {
                let p = format!("{path}.diffusion");
                let params = merged(&shared, &c.params);
                let lambda = c.lambda.unwrap_or(1.0);
                if let Some(entries) = &c.entries {
                    let fields = entries
                        .iter()
                        .enumerate()
                        .map(|(i, s)| parse_field(dim, s, &params, &format!("{p}.entries[{i}]")))
                        .collect::<Result<Vec<_>, _>>()?;
                    DiffusionMatrixField::new(dim, fields, lambda).map_err(|e| CliError::validation(&p, e))?
                } else {
                    let name = c.example.as_deref().unwrap_or_default();
                    let f = example(name, &c.params, dim, &format!("{p}.example"))?
                        .into_scalar()
                        .map_err(|e| CliError::validation(&p, e))?;
                    DiffusionMatrixField::scalar(f, lambda).map_err(|e| CliError::validation(&p, e))?
                }
            }
        };
        let c = self
            .drift
            .as_ref()
            .ok_or_else(|| CliError::validation(&format!("{path}.drift"), "is required"))?;
        let p = format!("{path}.drift");
        let params = merged(&shared, &c.params);
        let b = if let Some(comps) = &c.components {
            let fields = comps
                .iter()
                .enumerate()
                .map(|(i, s)| parse_field(dim, s, &params, &format!("{p}.components[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            let bd = c
                .bounds
                .ok_or_else(|| CliError::validation(&format!("{p}.bounds"), "is required"))?;
            DriftField::new(dim, fields, bd.into()).map_err(|e| CliError::validation(&p, e))?
        } else {
            let name = c.example.as_deref().unwrap_or_default();
            let b = example(name, &c.params, dim, &format!("{p}.example"))?
                .into_drift()
                .map_err(|e| CliError::validation(&p, e))?;
            match c.bounds {
                Some(bd) => {
                    DriftField::new(dim, b.components().to_vec(), bd.into()).map_err(|e| CliError::validation(&p, e))?
                }
                None => b,
            }
        };
        Ok(BuiltModel { a, b, radius: None })
    }
}

impl From<BoundsConfig> for DriftBounds {
    fn from(b: BoundsConfig) -> Self {
        DriftBounds {
            beta: b.beta,
            beta1: b.beta1,
            beta2: b.beta2,
            beta3: b.beta3,
        }
    }
}

impl FieldConfig {
    pub fn build(&self, dim: usize) -> Result<ScalarField, CliError> {
        if let Some(src) = &self.expr {
            parse_field(dim, src, &self.params, "dini.field.expr")
        } else {
            let name = self.example.as_deref().unwrap_or_default();
            example(name, &self.params, dim, "dini.field.example")?
                .into_scalar()
                .map_err(|e| CliError::validation("dini.field", e))
        }
    }
}

impl KernelConfig {
    pub fn build(&self, dim: usize) -> Result<InteractionKernel, CliError> {
        match self.builtin.as_deref() {
            Some("tanh-drift") => Ok(InteractionKernel::tanh_drift(dim)),
            Some("gaussian-diffusion") => Ok(InteractionKernel::gaussian_diffusion(dim)),
            Some(other) => Err(CliError::validation(
                "meanfield.kernel.builtin",
                format!("unknown kernel `{other}` (available: tanh-drift, gaussian-diffusion)"),
            )),
            None => InteractionKernel::from_exprs(
                dim,
                &self.q,
                &self.h,
                &self.params,
                self.q_sup.unwrap_or(0.0),
                self.h_sup.unwrap_or(0.0),
            )
            .map_err(|e| CliError::validation("meanfield.kernel", e)),
        }
    }
}

/// Model and ψ of a Poisson config.
pub struct BuiltPoisson {
    pub model: BuiltModel,
    pub psi: ScalarField,
}

impl PoissonConfig {
    pub fn build(&self, model: Option<&ModelConfig>, dim: usize) -> Result<BuiltPoisson, CliError> {
        if let Some(name) = &self.builtin {
            let case = builtin_poisson(name).map_err(|e| CliError::validation("poisson.builtin", e))?;
            if case.model.dim() != dim {
                return Err(CliError::validation(
                    "poisson.builtin",
                    format!("problem `{name}` has d = {}, grid has d = {dim}", case.model.dim()),
                ));
            }
            return Ok(BuiltPoisson {
                model: BuiltModel {
                    a: case.model.a,
                    b: case.model.b,
                    radius: Some(case.model.radius),
                },
                psi: case.psi,
            });
        }
        let model = model
            .ok_or_else(|| CliError::validation("model", "block is required"))?
            .build(dim, &Params::new(), "model")?;
        let src = self.psi.as_deref().unwrap_or_default();
        let psi = parse_field(dim, src, &self.params, "poisson.psi")?;
        Ok(BuiltPoisson { model, psi })
    }
}
