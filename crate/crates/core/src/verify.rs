//! Executable checks of the lemma-level inequalities and the maximum
//! principles for antisymmetric supersolutions on grid-aligned half spaces.
//!
//! All reflections here are node permutations, so every comparison is exact
//! up to floating-point round-off.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::{bilinear_values, lambda1, rho, QuadratureTable};
use crate::geometry::{domain_mask, Field, Grid, HalfSpace, RadialSet};
use crate::kernels::{Kernel, Mass};

/// Node permutation of a grid-aligned half space, with `None` for images
/// outside the box.
pub fn permutation(grid: &Grid, half: &HalfSpace) -> Result<Vec<Option<usize>>> {
    grid.reflection_permutation(half).ok_or_else(|| Error::Contract("half space is not grid-aligned".into()))
}

fn side(grid: &Grid, half: &HalfSpace) -> Vec<i8> {
    let eps = 1e-9 * grid.h();
    (0..grid.len())
        .map(|i| {
            let d = half.signed_distance(&grid.node(i));
            if d > eps {
                1
            } else if d < -eps {
                -1
            } else {
                0
            }
        })
        .collect()
}

/// `max_i |v_i + v_{σi}|`, counting `|v_i|` when `σi` leaves the box.
pub fn antisymmetry_defect(v: &Field, half: &HalfSpace) -> Result<f64> {
    let perm = permutation(&v.grid, half)?;
    Ok((0..v.grid.len())
        .map(|i| match perm[i] {
            Some(j) => (v.values[i] + v.values[j]).abs(),
            None => v.values[i].abs(),
        })
        .fold(0.0, f64::max))
}

/// Discrete half-space density `κ_H(p) = h^{−N} Σ_q w_pq` over box nodes `q`
/// strictly on the far side whose mirror image is in the box.
pub fn discrete_halfspace_kappa(table: &QuadratureTable, half: &HalfSpace) -> Result<Vec<f64>> {
    let grid = &table.grid;
    let perm = permutation(grid, half)?;
    let sides = side(grid, half);
    let far: Vec<usize> = (0..grid.len()).filter(|&q| sides[q] < 0 && perm[q].is_some()).collect();
    let near: Vec<usize> = (0..grid.len()).filter(|&p| sides[p] > 0).collect();
    let ones = vec![1.0; grid.len()];
    let sums = table.weighted_sums(&ones, &near, &far);
    let mut out = vec![0.0; grid.len()];
    for (&p, s) in near.iter().zip(sums) {
        out[p] = s / grid.cell();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyInequality {
    /// `J(w,w) + J(v,w) + 2κ h^N Σ_H w_p κ_H(p)`; nonpositive.
    pub gap: f64,
    /// Sum of the magnitudes of the three terms.
    pub scale: f64,
    #[serde(skip)]
    pub w: Vec<f64>,
}

/// Evaluates the key inequality for an antisymmetric `v` and `κ ≥ 0` with
/// `w = 1_H (v+κ)⁻`.
pub fn key_inequality_gap(table: &QuadratureTable, v: &Field, half: &HalfSpace, kappa: f64) -> Result<KeyInequality> {
    if !(kappa >= 0.0) {
        return Err(Error::Domain(format!("κ must be nonnegative, got {kappa}")));
    }
    if v.grid != table.grid {
        return Err(Error::Contract("field lives on a different grid than the table".into()));
    }
    let defect = antisymmetry_defect(v, half)?;
    if defect > 1e-10 * v.norm_inf().max(1.0) {
        return Err(Error::Contract(format!("v is not antisymmetric (defect {defect:e})")));
    }
    let sides = side(&v.grid, half);
    let w: Vec<f64> =
        (0..v.grid.len()).map(|i| if sides[i] > 0 { (-(v.values[i] + kappa)).max(0.0) } else { 0.0 }).collect();
    let jww = bilinear_values(table, &w, &w);
    let jvw = bilinear_values(table, &v.values, &w);
    let kh = discrete_halfspace_kappa(table, half)?;
    let tail = 2.0 * kappa * table.grid.cell() * w.iter().zip(&kh).map(|(a, b)| a * b).sum::<f64>();
    Ok(KeyInequality { gap: jww + jvw + tail, scale: jww.abs() + jvw.abs() + tail.abs(), w })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffReport {
    pub rho_v: f64,
    pub rho_plus: f64,
    pub rho_minus: f64,
    /// `J(v⁺, v⁻)`.
    pub cross: f64,
    pub pass: bool,
}

/// `ρ(v±) ≤ ρ(v)` and `J(v⁺,v⁻) ≤ 0`, each up to `1e−10` of the scale.
pub fn cutoff_check(table: &QuadratureTable, v: &Field, region_mask: &[bool]) -> Result<CutoffReport> {
    if region_mask.len() != v.grid.len() {
        return Err(Error::Contract("region mask length differs from the grid".into()));
    }
    let (vp, vm) = (v.positive_part(), v.negative_part());
    let rho_v = rho(table, v, region_mask)?;
    let rho_plus = rho(table, &vp, region_mask)?;
    let rho_minus = rho(table, &vm, region_mask)?;
    let cross = bilinear_values(table, &vp.values, &vm.values);
    let scale = rho_v.abs().max(bilinear_values(table, &v.values, &v.values).abs());
    let tol = 1e-10 * scale;
    let pass = rho_plus <= rho_v + tol && rho_minus <= rho_v + tol && cross <= tol;
    Ok(CutoffReport { rho_v, rho_plus, rho_minus, cross, pass })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupersolutionReport {
    pub pass: bool,
    /// `min_{i∈U} ((I_h v)_i − c_i v_i)`; `+∞` for an empty `U`.
    pub worst_margin: f64,
    pub tolerance: f64,
    pub antisymmetric: bool,
    /// `v ≥ 0` on `H∖U`.
    pub boundary_ok: bool,
}

fn check_lengths(grid: &Grid, c: &[f64], u_mask: &[bool]) -> Result<()> {
    if c.len() != grid.len() || u_mask.len() != grid.len() {
        return Err(Error::Contract("coefficient and mask must have one entry per node".into()));
    }
    Ok(())
}

fn check_u_inside(grid: &Grid, u_mask: &[bool], half: &HalfSpace) -> Result<()> {
    let sides = side(grid, half);
    if (0..grid.len()).any(|i| u_mask[i] && sides[i] <= 0) {
        return Err(Error::Contract("U must lie strictly inside H".into()));
    }
    Ok(())
}

/// Tests `(I_h v)_i ≥ c_i v_i` at every node of `U` against the nodal basis.
pub fn supersolution_check(
    table: &QuadratureTable,
    v: &Field,
    c: &[f64],
    u_mask: &[bool],
    half: &HalfSpace,
) -> Result<SupersolutionReport> {
    let grid = &table.grid;
    check_lengths(grid, c, u_mask)?;
    check_u_inside(grid, u_mask, half)?;
    let vn = v.norm_inf();
    let antisymmetric = antisymmetry_defect(v, half)? <= 1e-10 * vn.max(f64::MIN_POSITIVE);
    let sides = side(grid, half);
    let tol_mp = 1e-8 * vn;
    let boundary_ok = (0..grid.len()).all(|i| sides[i] <= 0 || u_mask[i] || v.values[i] >= -tol_mp);
    let rows: Vec<usize> = (0..grid.len()).filter(|&i| u_mask[i]).collect();
    let ops = table.operator_rows(&v.values, &rows);
    let worst_margin = rows.iter().zip(&ops).map(|(&i, o)| o - c[i] * v.values[i]).fold(f64::INFINITY, f64::min);
    let cmax = rows.iter().map(|&i| c[i].abs()).fold(0.0, f64::max);
    let tolerance = 1e-10 * (table.lattice_total() / grid.cell() + cmax) * vn;
    Ok(SupersolutionReport {
        pass: antisymmetric && boundary_ok && worst_margin >= -tolerance,
        worst_margin,
        tolerance,
        antisymmetric,
        boundary_ok,
    })
}

/// Linear system on `U` for antisymmetric fields with prescribed values on `H∖U`.
struct AntisymmetricSystem {
    nodes: Vec<usize>,
    matrix: DMatrix<f64>,
    /// Coupling of each `U` node to each `H∖U` node, `(w_ij − w_{iσj}) / h^N`.
    boundary: Vec<usize>,
    coupling: DMatrix<f64>,
    perm: Vec<Option<usize>>,
}

impl AntisymmetricSystem {
    fn new(table: &QuadratureTable, c: &[f64], u_mask: &[bool], half: &HalfSpace) -> Result<Self> {
        let grid = &table.grid;
        check_lengths(grid, c, u_mask)?;
        check_u_inside(grid, u_mask, half)?;
        let perm = permutation(grid, half)?;
        let sides = side(grid, half);
        let nodes: Vec<usize> = (0..grid.len()).filter(|&i| u_mask[i]).collect();
        if nodes.is_empty() {
            return Err(Error::Contract("U is empty".into()));
        }
        let boundary: Vec<usize> = (0..grid.len()).filter(|&i| sides[i] > 0 && !u_mask[i]).collect();
        let cell = grid.cell();
        let t = table.lattice_total();
        let pair = |i: usize, j: usize| -> f64 {
            let mirror = perm[j].map(|sj| table.weight(i, sj)).unwrap_or(0.0);
            table.weight(i, j) - mirror
        };
        let m = nodes.len();
        let mut matrix = DMatrix::zeros(m, m);
        for a in 0..m {
            let i = nodes[a];
            for b in 0..m {
                matrix[(a, b)] = if a == b {
                    let mirror = perm[i].map(|si| table.weight(i, si)).unwrap_or(0.0);
                    (t + mirror) / cell - c[i]
                } else {
                    -pair(i, nodes[b]) / cell
                };
            }
        }
        let mut coupling = DMatrix::zeros(m, boundary.len());
        for a in 0..m {
            for (b, &j) in boundary.iter().enumerate() {
                coupling[(a, b)] = pair(nodes[a], j) / cell;
            }
        }
        Ok(Self { nodes, matrix, boundary, coupling, perm })
    }

    fn assemble_field(&self, grid: Grid, x: &DVector<f64>, b: &[f64]) -> Field {
        let mut values = vec![0.0; grid.len()];
        for (k, &i) in self.nodes.iter().enumerate() {
            values[i] = x[k];
        }
        for (k, &j) in self.boundary.iter().enumerate() {
            values[j] = b[k];
        }
        let near: Vec<(usize, f64)> =
            values.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect();
        for (i, v) in near {
            if let Some(si) = self.perm[i] {
                values[si] = -v;
            }
        }
        // nodes whose mirror leaves the box stay zero, matching the exterior
        Field { grid, values, mask: vec![true; grid.len()] }
    }
}

/// Antisymmetric field solving `(I_h v)_i − c_i v_i = g_i` on `U` with
/// `v = b` on `H∖U` (`b` indexed like the `H∖U` nodes in increasing order).
pub fn construct_supersolution(
    table: &QuadratureTable,
    c: &[f64],
    u_mask: &[bool],
    half: &HalfSpace,
    g: &[f64],
    b: &[f64],
) -> Result<Field> {
    let sys = AntisymmetricSystem::new(table, c, u_mask, half)?;
    if g.len() != table.grid.len() || b.len() != sys.boundary.len() {
        return Err(Error::Contract("forcing must have one entry per node and data one per H∖U node".into()));
    }
    let lu = sys.matrix.clone().lu();
    let rhs = DVector::from_iterator(sys.nodes.len(), sys.nodes.iter().map(|&i| g[i]))
        + &sys.coupling * DVector::from_column_slice(b);
    let x = lu.solve(&rhs).ok_or_else(|| Error::Numeric("singular supersolution system".into()))?;
    Ok(sys.assemble_field(table.grid, &x, b))
}

/// Number of `H∖U` nodes, the length of the boundary data vector.
pub fn boundary_len(grid: &Grid, u_mask: &[bool], half: &HalfSpace) -> usize {
    let sides = side(grid, half);
    (0..grid.len()).filter(|&i| sides[i] > 0 && !u_mask[i]).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MpVariant {
    /// `‖c⁺‖∞ < Λ₁(U)`.
    Weak1,
    /// `c ≤ 0` on `U`.
    Weak2,
    /// `U` inside the band of width `d(sup c⁺)` along `∂H`.
    Weak3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpCertificate {
    pub variant: MpVariant,
    pub c_plus_norm: f64,
    pub lambda1: Option<f64>,
    pub max_c: f64,
    pub band_width: Option<f64>,
    /// Nodes of `U` at distance `≥ d` from `∂H`.
    pub band_set_size: Option<usize>,
    pub hypothesis_holds: bool,
    /// The hypothesis held, so the conclusion is a guarantee being tested.
    pub conclusion_checked: bool,
    pub instances: usize,
    /// Smallest `min_H v / ‖v‖∞` over the instances.
    pub min_v: f64,
    /// Instances with `min_H v < −1e−8 ‖v‖∞`.
    pub violations: usize,
    pub supersolution_margins: Vec<f64>,
    /// Every instance passed the supersolution check.
    pub supersolutions_ok: bool,
}

impl MpCertificate {
    /// A guaranteed conclusion failed.
    pub fn failed(&self) -> bool {
        self.conclusion_checked && (self.violations > 0 || !self.supersolutions_ok)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpOptions {
    pub instances: usize,
    pub seed: u64,
}

impl Default for MpOptions {
    fn default() -> Self {
        Self { instances: 50, seed: 0 }
    }
}

/// Builds random antisymmetric supersolutions (nonnegative forcing and
/// boundary data) and checks `v ≥ −1e−8 ‖v‖∞` on `H`.
pub fn weak_mp_test(
    table: &QuadratureTable,
    c: &[f64],
    u_mask: &[bool],
    half: &HalfSpace,
    variant: MpVariant,
    opts: &MpOptions,
) -> Result<MpCertificate> {
    let grid = table.grid;
    check_lengths(&grid, c, u_mask)?;
    let u_nodes: Vec<usize> = (0..grid.len()).filter(|&i| u_mask[i]).collect();
    let c_plus_norm = u_nodes.iter().map(|&i| c[i].max(0.0)).fold(0.0, f64::max);
    let max_c = u_nodes.iter().map(|&i| c[i]).fold(f64::NEG_INFINITY, f64::max);
    let (mut lam, mut band_width, mut band_set_size) = (None, None, None);
    let hypothesis_holds = match variant {
        MpVariant::Weak1 => {
            let l = lambda1(table, u_mask)?;
            lam = Some(l);
            c_plus_norm < l
        }
        MpVariant::Weak2 => max_c <= 0.0,
        MpVariant::Weak3 => {
            if c_plus_norm > 0.0 {
                let d = band_width_d(&table.kernel, c_plus_norm)?.d;
                let far = u_nodes.iter().filter(|&&i| half.signed_distance(&grid.node(i)) >= d).count();
                band_width = Some(d);
                band_set_size = Some(far);
                far == 0
            } else {
                band_set_size = Some(0);
                true
            }
        }
    };
    let sys = AntisymmetricSystem::new(table, c, u_mask, half)?;
    let lu = sys.matrix.clone().lu();
    let sides = side(&grid, half);
    let results: Vec<Result<(f64, f64)>> = (0..opts.instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k as u64));
            let g: Vec<f64> =
                (0..grid.len()).map(|_| if rng.gen_bool(0.5) { rng.gen_range(0.0..1.0) } else { 0.0 }).collect();
            let b: Vec<f64> = (0..sys.boundary.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let rhs = DVector::from_iterator(sys.nodes.len(), sys.nodes.iter().map(|&i| g[i]))
                + &sys.coupling * DVector::from_column_slice(&b);
            let x = lu.solve(&rhs).ok_or_else(|| Error::Numeric("singular supersolution system".into()))?;
            let v = sys.assemble_field(grid, &x, &b);
            let rep = supersolution_check(table, &v, c, u_mask, half)?;
            let vn = v.norm_inf();
            let min_h = (0..grid.len()).filter(|&i| sides[i] > 0).map(|i| v.values[i]).fold(f64::INFINITY, f64::min);
            let rel = if vn > 0.0 { min_h / vn } else { 0.0 };
            Ok((if rep.pass { rep.worst_margin } else { f64::NEG_INFINITY }, rel))
        })
        .collect();
    let mut margins = Vec::with_capacity(opts.instances);
    let mut min_v = f64::INFINITY;
    let mut violations = 0;
    for r in results {
        let (m, rel) = r?;
        margins.push(m);
        min_v = min_v.min(rel);
        if rel < -1e-8 {
            violations += 1;
        }
    }
    Ok(MpCertificate {
        variant,
        c_plus_norm,
        lambda1: lam,
        max_c,
        band_width,
        band_set_size,
        hypothesis_holds,
        conclusion_checked: hypothesis_holds,
        instances: opts.instances,
        min_v,
        violations,
        supersolutions_ok: margins.iter().all(|m| m.is_finite()),
        supersolution_margins: margins,
    })
}

/// Coefficient and `U` of the standard battery for one variant on `Ω ∩ H`:
/// `c ≡ −1` (Weak2), `c ≡ ½Λ₁(U)` (Weak1), and for Weak3 `c ≡ g(2h)` on the
/// nodes of `Ω ∩ H` inside the band of width `d(g(2h))`.
pub fn standard_instance(
    table: &QuadratureTable,
    domain: &[bool],
    half: &HalfSpace,
    variant: MpVariant,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let grid = table.grid;
    if domain.len() != grid.len() {
        return Err(Error::Contract("domain mask length differs from the grid".into()));
    }
    let sides = side(&grid, half);
    let mut u: Vec<bool> = (0..grid.len()).map(|i| domain[i] && sides[i] > 0).collect();
    let value = match variant {
        MpVariant::Weak2 => -1.0,
        MpVariant::Weak1 => 0.5 * lambda1(table, &u)?,
        MpVariant::Weak3 => {
            let c_inf = match table.kernel.halfspace_mass(2.0 * grid.h())? {
                Mass::Finite(m) => m,
                Mass::Infinite => return Err(Error::Numeric("infinite half-space mass at 2h".into())),
            };
            let d = band_width_d(&table.kernel, c_inf)?.d;
            for i in 0..grid.len() {
                u[i] = u[i] && half.signed_distance(&grid.node(i)) < d;
            }
            c_inf
        }
    };
    Ok((vec![value; grid.len()], u))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandWidth {
    pub d: f64,
    pub warning: Option<String>,
}

/// Largest `d` with `g(d) > c_inf`, where `g` is the half-space mass.
pub fn band_width_d(kernel: &Kernel, c_inf: f64) -> Result<BandWidth> {
    if !(c_inf > 0.0) || !c_inf.is_finite() {
        return Err(Error::Domain(format!("c_inf must be positive and finite, got {c_inf}")));
    }
    let above = |l: f64| -> Result<bool> {
        Ok(match kernel.halfspace_mass(l)? {
            Mass::Infinite => true,
            Mass::Finite(m) => m > c_inf,
        })
    };
    let floor = 1e-150;
    if !above(floor)? {
        return Ok(BandWidth {
            d: floor,
            warning: Some(format!("half-space mass stays below {c_inf} down to {floor:e}")),
        });
    }
    let mut hi = 1.0;
    while above(hi)? {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Numeric("half-space mass does not fall below c_inf".into()));
        }
    }
    let mut lo = floor;
    for _ in 0..400 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        // geometric midpoint while the bracket spans decades
        let mid = if hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if above(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(BandWidth { d: lo, warning: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrongOutcome {
    IdenticallyZero,
    StrictlyPositiveOnCompacts,
    Violation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrongProbe {
    pub outcome: StrongOutcome,
    pub core_min: f64,
    pub core_size: usize,
    pub tolerance: f64,
}

/// Core of `U`: nodes whose Euclidean `2h`-neighbourhood lies in `U`.
pub fn core_nodes(grid: &Grid, u_mask: &[bool]) -> Vec<usize> {
    let h = grid.h();
    let reach = 2.0 * h * (1.0 - 1e-9);
    (0..grid.len())
        .filter(|&i| {
            if !u_mask[i] {
                return false;
            }
            let m = grid.multi_index(i);
            let lo = |k: usize| m[k].saturating_sub(2);
            let hi = |k: usize| (m[k] + 2).min(grid.n - 1);
            let x = grid.node(i);
            // a neighbour cut off by the box edge counts as outside U
            for k in 0..grid.dim {
                if m[k] < 2 || m[k] + 2 > grid.n - 1 {
                    return false;
                }
            }
            let mut idx = [0usize; 3];
            let ranges: Vec<(usize, usize)> = (0..grid.dim).map(|k| (lo(k), hi(k))).collect();
            let count: usize = ranges.iter().map(|(a, b)| b - a + 1).product();
            for flat in 0..count {
                let mut rest = flat;
                for k in (0..grid.dim).rev() {
                    let span = ranges[k].1 - ranges[k].0 + 1;
                    idx[k] = ranges[k].0 + rest % span;
                    rest /= span;
                }
                let j = grid.index(&idx[..grid.dim]);
                let y = grid.node(j);
                let d = ((0..grid.dim).map(|k| (x[k] - y[k]).powi(2)).sum::<f64>()).sqrt();
                if d < reach && !u_mask[j] {
                    return false;
                }
            }
            true
        })
        .collect()
}

/// Classifies a nonnegative supersolution by the strong-principle dichotomy.
pub fn strong_mp_probe(v: &Field, u_mask: &[bool]) -> Result<StrongProbe> {
    if u_mask.len() != v.grid.len() {
        return Err(Error::Contract("mask length differs from the grid".into()));
    }
    let vn = v.norm_inf();
    let tolerance = (1e-8 * vn).max(1e-14);
    let core = core_nodes(&v.grid, u_mask);
    if vn <= tolerance {
        return Ok(StrongProbe {
            outcome: StrongOutcome::IdenticallyZero,
            core_min: 0.0,
            core_size: core.len(),
            tolerance,
        });
    }
    if core.is_empty() {
        return Err(Error::Inconclusive("U has no node at distance ≥ 2h from its boundary".into()));
    }
    let core_min = core.iter().map(|&i| v.values[i]).fold(f64::INFINITY, f64::min);
    let outcome =
        if core_min > tolerance { StrongOutcome::StrictlyPositiveOnCompacts } else { StrongOutcome::Violation };
    Ok(StrongProbe { outcome, core_min, core_size: core.len(), tolerance })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisconnectedRecord {
    pub kernel: String,
    pub outcome: StrongOutcome,
    /// Smallest value of `v` on the core of the unforced component.
    pub far_component_min: f64,
}

/// Experiment: forcing only the inner ball of `B_{0.3} ∪ (B_{0.9}∖B_{0.6})`
/// and recording whether positivity reaches the annulus. Nothing is asserted.
pub fn disconnected_experiment(kernels: &[(String, Kernel)], n: usize) -> Result<Vec<DisconnectedRecord>> {
    let grid = Grid::new(2, n, 1.0)?;
    let omega = RadialSet::Union(vec![RadialSet::Ball(0.3), RadialSet::Annulus { r: 0.6, big_r: 0.9 }]);
    let mask = domain_mask(&omega, &grid)?.mask;
    let half = HalfSpace::coordinate(0, 0.0);
    let u_mask: Vec<bool> = (0..grid.len()).map(|i| mask[i] && half.signed_distance(&grid.node(i)) > 1e-9).collect();
    let c = vec![-1.0; grid.len()];
    let g: Vec<f64> = (0..grid.len())
        .map(|i| if u_mask[i] && crate::geometry::norm(&grid.node(i)) < 0.3 { 1.0 } else { 0.0 })
        .collect();
    let b = vec![0.0; boundary_len(&grid, &u_mask, &half)];
    let mut out = Vec::new();
    for (name, kernel) in kernels {
        let table = crate::form::assemble(&grid, kernel)?;
        let v = construct_supersolution(&table, &c, &u_mask, &half, &g, &b)?;
        let probe = strong_mp_probe(&v, &u_mask)?;
        let far: Vec<bool> =
            (0..grid.len()).map(|i| u_mask[i] && crate::geometry::norm(&grid.node(i)) > 0.45).collect();
        let far_min = core_nodes(&grid, &far).iter().map(|&i| v.values[i]).fold(f64::INFINITY, f64::min);
        out.push(DisconnectedRecord { kernel: name.clone(), outcome: probe.outcome, far_component_min: far_min });
    }
    Ok(out)
}
