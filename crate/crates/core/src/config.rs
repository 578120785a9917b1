//! Run configuration: strict TOML with one table per pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::energy::{Constraint, Nonlinearity};
use crate::error::{Error, Result};
use crate::form::{DiagonalRule, FormOptions};
use crate::geometry::{Grid, RadialSet};
use crate::kernels::{Kernel, KernelTable};
use crate::symmetry::AnalysisOptions;
use crate::verify::MpVariant;

/// TOML integers are signed 64-bit.
pub const MAX_SEED: u64 = i64::MAX as u64;

/// Environment variable overriding every seed in the file.
pub const SEED_ENV: &str = "NONLOCAL_LAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Fractional,
    ZerothIndicator,
    ZerothLog,
    Bessel,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: KernelFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// Two-column CSV `r,k`, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_path: Option<PathBuf>,
    #[serde(default = "default_escape")]
    pub escape_threshold: f64,
}

fn default_escape() -> f64 {
    1e6
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { family: KernelFamily::Fractional, s: Some(0.5), table_path: None, escape_threshold: default_escape() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainShape {
    Ball,
    Annulus,
    Exterior,
    FullSpace,
    ComplementAnnulus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub shape: DomainShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, rename = "R", skip_serializing_if = "Option::is_none")]
    pub big_r: Option<f64>,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { shape: DomainShape::Ball, r: Some(1.0), big_r: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub n: usize,
    pub box_radius: f64,
}

fn default_dim() -> usize {
    2
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dim: 2, n: 33, box_radius: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormConfig {
    #[serde(default)]
    pub diagonal_rule: DiagonalRule,
    #[serde(default = "default_cap")]
    pub dense_cap: usize,
    #[serde(default = "default_l1_tol")]
    pub lambda1_tol: f64,
}

fn default_cap() -> usize {
    20000
}

fn default_l1_tol() -> f64 {
    1e-6
}

impl Default for FormConfig {
    fn default() -> Self {
        Self { diagonal_rule: DiagonalRule::Omit, dense_cap: default_cap(), lambda1_tol: default_l1_tol() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityPreset {
    LinearDecay,
    CubicMinusU,
    /// Polynomial `Σ c_k u^{k+1}` from `coeffs`.
    CustomExpr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub preset: NonlinearityPreset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    /// Range `[−K, K]` on which the hypotheses are sampled.
    #[serde(default = "default_k_bound")]
    pub k_bound: f64,
}

fn default_k_bound() -> f64 {
    4.0
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        Self { preset: NonlinearityPreset::CubicMinusU, coeffs: None, k_bound: default_k_bound() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    None,
    Lq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_constraint")]
    pub constraint: ConstraintKind,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_constraint() -> ConstraintKind {
    ConstraintKind::Lq
}
fn default_q() -> f64 {
    4.0
}
fn default_tol() -> f64 {
    1e-6
}
fn default_iters() -> usize {
    5000
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            constraint: default_constraint(),
            q: default_q(),
            tol: default_tol(),
            max_iters: default_iters(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetryConfig {
    #[serde(default = "default_step")]
    pub angular_step: f64,
    #[serde(default = "default_shell")]
    pub shell_fraction: f64,
    #[serde(default = "default_decay")]
    pub tol_decay: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_sym: Option<f64>,
    #[serde(default = "default_true")]
    pub moving_plane: bool,
    #[serde(default = "default_polar")]
    pub polar_angles: usize,
}

fn default_step() -> f64 {
    std::f64::consts::PI / 180.0
}
fn default_shell() -> f64 {
    0.1
}
fn default_decay() -> f64 {
    1e-6
}
fn default_true() -> bool {
    true
}
fn default_polar() -> usize {
    181
}

impl Default for SymmetryConfig {
    fn default() -> Self {
        Self {
            angular_step: default_step(),
            shell_fraction: default_shell(),
            tol_decay: default_decay(),
            tol_sym: None,
            moving_plane: true,
            polar_angles: default_polar(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_variants")]
    pub variants: Vec<MpVariant>,
    /// Coordinate axis normal to the reflection plane.
    #[serde(default)]
    pub axis: usize,
    /// Plane offset; must sit on a node or midway between nodes.
    #[serde(default)]
    pub offset: f64,
}

fn default_instances() -> usize {
    50
}
fn default_variants() -> Vec<MpVariant> {
    vec![MpVariant::Weak1, MpVariant::Weak2, MpVariant::Weak3]
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { instances: default_instances(), seed: 0, variants: default_variants(), axis: 0, offset: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub form: FormConfig,
    #[serde(default)]
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub symmetry: SymmetryConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory relative paths are resolved against; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {x}")))
    }
}

impl RunConfig {
    /// Parses TOML; unknown keys are rejected with their names.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads, parses and validates a file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    /// Applies `NONLOCAL_LAB_SEED` when it is set.
    pub fn apply_seed_override(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed: u64 =
                v.trim().parse().ok().filter(|&s| s <= MAX_SEED).ok_or_else(|| {
                    Error::Config(format!("{SEED_ENV} must be an integer in [0, {MAX_SEED}], got {v:?}"))
                })?;
            self.solver.seed = seed;
            self.verify.seed = seed;
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, seed) in [("solver.seed", self.solver.seed), ("verify.seed", self.verify.seed)] {
            if seed > MAX_SEED {
                return Err(Error::Config(format!("{name} must be at most {MAX_SEED}, got {seed}")));
            }
        }
        if !(2..=3).contains(&self.grid.dim) {
            return Err(Error::Config(format!("grid.dim must be 2 or 3, got {}", self.grid.dim)));
        }
        if self.grid.n < 3 || self.grid.n.is_multiple_of(2) {
            return Err(Error::Config(format!("grid.n must be odd and at least 3, got {}", self.grid.n)));
        }
        positive("grid.box_radius", self.grid.box_radius)?;
        match self.kernel.family {
            KernelFamily::Fractional | KernelFamily::Bessel => {
                let s = self.kernel.s.ok_or_else(|| Error::Config("kernel.s is required for this family".into()))?;
                if !(s > 0.0 && s < 1.0) {
                    return Err(Error::Config(format!("kernel.s must lie in (0,1), got {s}")));
                }
            }
            KernelFamily::Custom => {
                let p = self
                    .kernel
                    .table_path
                    .as_ref()
                    .ok_or_else(|| Error::Config("kernel.table_path is required for custom kernels".into()))?;
                if !self.resolve(p).is_file() {
                    return Err(Error::Config(format!("kernel.table_path {} does not exist", p.display())));
                }
            }
            _ => {}
        }
        positive("kernel.escape_threshold", self.kernel.escape_threshold)?;
        self.radial_set()?.validate()?;
        positive("form.lambda1_tol", self.form.lambda1_tol)?;
        if self.form.dense_cap == 0 {
            return Err(Error::Config("form.dense_cap must be positive".into()));
        }
        if self.nonlinearity.preset == NonlinearityPreset::CustomExpr && self.nonlinearity.coeffs.is_none() {
            return Err(Error::Config("nonlinearity.coeffs is required for custom_expr".into()));
        }
        positive("nonlinearity.k_bound", self.nonlinearity.k_bound)?;
        if !(self.solver.q > 1.0) {
            return Err(Error::Config(format!("solver.q must exceed 1, got {}", self.solver.q)));
        }
        positive("solver.tol", self.solver.tol)?;
        if self.solver.max_iters == 0 {
            return Err(Error::Config("solver.max_iters must be positive".into()));
        }
        let sy = &self.symmetry;
        if !(sy.angular_step > 0.0 && sy.angular_step < std::f64::consts::PI) {
            return Err(Error::Config(format!("symmetry.angular_step must lie in (0, π), got {}", sy.angular_step)));
        }
        if !(sy.shell_fraction > 0.0 && sy.shell_fraction < 1.0) {
            return Err(Error::Config(format!("symmetry.shell_fraction must lie in (0,1), got {}", sy.shell_fraction)));
        }
        positive("symmetry.tol_decay", sy.tol_decay)?;
        if let Some(t) = sy.tol_sym {
            positive("symmetry.tol_sym", t)?;
        }
        if sy.polar_angles < 2 {
            return Err(Error::Config("symmetry.polar_angles must be at least 2".into()));
        }
        if self.verify.instances == 0 {
            return Err(Error::Config("verify.instances must be positive".into()));
        }
        if self.verify.axis >= self.grid.dim {
            return Err(Error::Config(format!("verify.axis must be below grid.dim, got {}", self.verify.axis)));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.dim, self.grid.n, self.grid.box_radius)
    }

    pub fn radial_set(&self) -> Result<RadialSet> {
        let d = &self.domain;
        let need = |x: Option<f64>, key: &str| {
            x.ok_or_else(|| Error::Config(format!("domain.{key} is required for this shape")))
        };
        Ok(match d.shape {
            DomainShape::Ball => RadialSet::Ball(need(d.r, "r")?),
            DomainShape::Annulus => RadialSet::Annulus { r: need(d.r, "r")?, big_r: need(d.big_r, "R")? },
            DomainShape::Exterior => RadialSet::Exterior(need(d.r, "r")?),
            DomainShape::FullSpace => RadialSet::FullSpace,
            DomainShape::ComplementAnnulus => {
                RadialSet::ComplementAnnulus { r: need(d.r, "r")?, big_r: need(d.big_r, "R")? }
            }
        })
    }

    pub fn kernel(&self) -> Result<Kernel> {
        let dim = self.grid.dim;
        let s = || self.kernel.s.ok_or_else(|| Error::Config("kernel.s is required for this family".into()));
        match self.kernel.family {
            KernelFamily::Fractional => Kernel::fractional(dim, s()?),
            KernelFamily::Bessel => Kernel::bessel(dim, s()?),
            KernelFamily::ZerothIndicator => Kernel::zeroth_indicator(dim),
            KernelFamily::ZerothLog => Kernel::zeroth_log(dim),
            KernelFamily::Custom => {
                let p = self
                    .kernel
                    .table_path
                    .as_ref()
                    .ok_or_else(|| Error::Config("kernel.table_path is required".into()))?;
                let text = std::fs::read_to_string(self.resolve(p))?;
                Kernel::custom(dim, KernelTable::from_csv(&text)?)
            }
        }
    }

    pub fn form_options(&self) -> FormOptions {
        FormOptions {
            diagonal_rule: self.form.diagonal_rule,
            node_budget: self.form.dense_cap,
            lambda1_tol: self.form.lambda1_tol,
            ..FormOptions::default()
        }
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity> {
        Ok(match self.nonlinearity.preset {
            NonlinearityPreset::LinearDecay => Nonlinearity::linear_decay(),
            NonlinearityPreset::CubicMinusU => Nonlinearity::cubic_minus_u(),
            NonlinearityPreset::CustomExpr => {
                Nonlinearity::polynomial(self.nonlinearity.coeffs.clone().unwrap_or_default())?
            }
        })
    }

    pub fn constraint(&self) -> Constraint {
        match self.solver.constraint {
            ConstraintKind::None => Constraint::None,
            ConstraintKind::Lq => Constraint::LqSphere(self.solver.q),
        }
    }

    pub fn analysis_options(&self) -> AnalysisOptions {
        let s = &self.symmetry;
        AnalysisOptions {
            angular_step: s.angular_step,
            shell_fraction: s.shell_fraction,
            tol_decay: s.tol_decay,
            tol_sym: s.tol_sym,
            moving_plane: s.moving_plane,
            polar_angles: s.polar_angles,
        }
    }
}
