//! Discrete bilinear form, nonlocal operator, exterior masses and the
//! Poincaré constant on a tensor grid.
//!
//! Pair weights are translation invariant and stored once per absolute
//! lattice offset, so a table costs `n^N` numbers rather than `n^{2N}`.
//! The form is written as
//!
//! ```text
//! J_h(u,v) = T Σ_i u_i v_i − Σ_{i≠j} w_ij u_i v_j,
//! ```
//!
//! where `T` is the total lattice weight around a node (pairs inside a
//! radius `ρ` summed, the rest of space added through the kernel's tail
//! mass). This equals `½ Σ (u_i−u_j)(v_i−v_j) w_ij + Σ u_i v_i κ_box(i)`
//! with `κ_box(i) = T − Σ_{j ∈ box} w_ij`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{norm, Field, Grid, HalfSpace, Point, RadialSet, MAX_DIM};
use crate::kernels::{cap_area, sphere_area, Kernel, Mass};
use crate::quadrature::{integrate, integrate_to_infinity, QuadOptions};

/// Treatment of the same-cell part of the double integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalRule {
    /// Drop it; consistency error `O(h^{2−2s})` for fractional kernels.
    #[default]
    Omit,
    /// Estimate the in-cell gradient energy on a `4^N` subgrid and spread it
    /// over nearest-neighbour weights.
    Subcell,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormOptions {
    pub diagonal_rule: DiagonalRule,
    /// Largest admissible node count.
    pub node_budget: usize,
    pub lambda1_tol: f64,
    pub lambda1_max_iters: usize,
}

impl Default for FormOptions {
    fn default() -> Self {
        Self { diagonal_rule: DiagonalRule::Omit, node_budget: 20_000, lambda1_tol: 1e-6, lambda1_max_iters: 500 }
    }
}

/// Assembled weights for one grid and kernel.
#[derive(Debug, Clone)]
pub struct QuadratureTable {
    pub grid: Grid,
    pub kernel: Kernel,
    pub diagonal_rule: DiagonalRule,
    /// `w` by absolute offset, indexed like grid nodes.
    offset_weights: Vec<f64>,
    /// Total lattice weight `T` around a node.
    lattice_total: f64,
    /// `κ_box(i) = T − Σ_{j∈box, j≠i} w_ij` (carries one factor `h^N`).
    exterior_mass: Vec<f64>,
    coords: Vec<[u32; MAX_DIM]>,
    /// Radius of the explicit lattice sum in `T`.
    pub lattice_radius: f64,
}

fn far_weight(kernel: &Kernel, q: u64, h: f64, dim: usize) -> f64 {
    kernel.value((q as f64).sqrt() * h) * h.powi(2 * dim as i32)
}

/// Average of `k(|x−y|)` over `3^N × 3^N` subpoints of two neighbouring cells.
fn adjacent_weight(kernel: &Kernel, a: [usize; MAX_DIM], h: f64, dim: usize) -> f64 {
    let sub = [-1.0 / 3.0, 0.0, 1.0 / 3.0];
    let per_cell = 3usize.pow(dim as u32);
    let digits = |mut t: usize| {
        let mut s = [0.0; MAX_DIM];
        for x in s.iter_mut().take(dim) {
            *x = sub[t % 3];
            t /= 3;
        }
        s
    };
    let mut acc = 0.0;
    for p in 0..per_cell {
        let sp = digits(p);
        for q in 0..per_cell {
            let sq = digits(q);
            let mut d2 = 0.0;
            for k in 0..dim {
                let d = a[k] as f64 + sq[k] - sp[k];
                d2 += d * d;
            }
            acc += kernel.value(d2.sqrt() * h);
        }
    }
    acc / (per_cell * per_cell) as f64 * h.powi(2 * dim as i32)
}

/// `∫∫_{cell²} |x−y|² k(|x−y|)` on a `4^N` subgrid.
fn same_cell_second_moment(kernel: &Kernel, h: f64, dim: usize) -> f64 {
    let per_cell = 4usize.pow(dim as u32);
    let pos = |mut t: usize| {
        let mut s = [0.0; MAX_DIM];
        for x in s.iter_mut().take(dim) {
            *x = ((t % 4) as f64 + 0.5) / 4.0 - 0.5;
            t /= 4;
        }
        s
    };
    let mut acc = 0.0;
    for p in 0..per_cell {
        let sp = pos(p);
        for q in 0..per_cell {
            if p == q {
                continue;
            }
            let sq = pos(q);
            let d2: f64 = (0..dim).map(|k| (sq[k] - sp[k]).powi(2)).sum::<f64>() * h * h;
            acc += d2 * kernel.value(d2.sqrt());
        }
    }
    acc / (per_cell * per_cell) as f64 * h.powi(2 * dim as i32)
}

/// Builds the table for `grid` and `kernel` with default options.
pub fn assemble(grid: &Grid, kernel: &Kernel) -> Result<QuadratureTable> {
    assemble_with(grid, kernel, &FormOptions::default())
}

pub fn assemble_with(grid: &Grid, kernel: &Kernel, opts: &FormOptions) -> Result<QuadratureTable> {
    if kernel.dim != grid.dim {
        return Err(Error::Contract(format!("kernel dimension {} vs grid dimension {}", kernel.dim, grid.dim)));
    }
    if grid.len() > opts.node_budget {
        return Err(Error::Resource(format!(
            "{} nodes exceed the budget of {}; use fewer nodes per axis",
            grid.len(),
            opts.node_budget
        )));
    }
    let cert = kernel.check_condition_k()?;
    if !cert.divergence_verified {
        return Err(Error::InvalidKernel("divergence of ∫_0^1 k(r) r^{N-1} dr not verified".into()));
    }
    let dim = grid.dim;
    let h = grid.h();

    let nn_extra = match opts.diagonal_rule {
        DiagonalRule::Omit => 0.0,
        DiagonalRule::Subcell => same_cell_second_moment(kernel, h, dim) / (2.0 * dim as f64 * h * h),
    };
    let mut adjacent: HashMap<[usize; MAX_DIM], f64> = HashMap::new();
    let mut far: HashMap<u64, f64> = HashMap::new();
    let mut weight_of = |a: [usize; MAX_DIM]| -> f64 {
        let q: u64 = a.iter().map(|&x| (x * x) as u64).sum();
        if q == 0 {
            return 0.0;
        }
        if a.iter().all(|&x| x <= 1) {
            let mut key = a;
            key[..dim].sort_unstable();
            *adjacent
                .entry(key)
                .or_insert_with(|| adjacent_weight(kernel, key, h, dim) + if q == 1 { nn_extra } else { 0.0 })
        } else {
            *far.entry(q).or_insert_with(|| far_weight(kernel, q, h, dim))
        }
    };

    let offset_weights: Vec<f64> = (0..grid.len()).map(|i| weight_of(grid.multi_index(i))).collect();

    // explicit lattice sum out to a radius covering every in-box offset
    let lattice_radius = 2.0 * grid.box_radius * (dim as f64).sqrt() + 2.0 * h;
    let m = (lattice_radius / h).ceil() as i64;
    let q_max = (lattice_radius / h).powi(2);
    let mut counts: HashMap<[usize; MAX_DIM], u64> = HashMap::new();
    let side = (2 * m + 1) as usize;
    for flat in 0..side.pow(dim as u32) {
        let mut t = flat;
        let mut a = [0usize; MAX_DIM];
        for x in a.iter_mut().take(dim) {
            *x = ((t % side) as i64 - m).unsigned_abs() as usize;
            t /= side;
        }
        let q: f64 = a.iter().map(|&x| (x * x) as f64).sum();
        if q > 0.0 && q <= q_max {
            *counts.entry(a).or_insert(0) += 1;
        }
    }
    let mut keys: Vec<_> = counts.into_iter().collect();
    keys.sort_unstable();
    let explicit: f64 = keys.iter().map(|&(a, c)| c as f64 * weight_of(a)).sum();
    let lattice_total = explicit + grid.cell() * kernel.complement_ball_mass(lattice_radius)?;

    let coords: Vec<[u32; MAX_DIM]> = (0..grid.len()).map(|i| grid.multi_index(i).map(|x| x as u32)).collect();
    let mut table = QuadratureTable {
        grid: *grid,
        kernel: kernel.clone(),
        diagonal_rule: opts.diagonal_rule,
        offset_weights,
        lattice_total,
        exterior_mass: Vec::new(),
        coords,
        lattice_radius,
    };
    let all: Vec<usize> = (0..grid.len()).collect();
    let ones = vec![1.0; grid.len()];
    let in_box = table.weighted_sums(&ones, &all, &all);
    table.exterior_mass = in_box.iter().map(|s| (lattice_total - s).max(0.0)).collect();
    Ok(table)
}

#[inline]
fn offset_index(a: &[u32; MAX_DIM], b: &[u32; MAX_DIM], n: usize, dim: usize) -> usize {
    let d0 = a[0].abs_diff(b[0]) as usize;
    let d1 = a[1].abs_diff(b[1]) as usize;
    if dim == 2 {
        d0 * n + d1
    } else {
        (d0 * n + d1) * n + a[2].abs_diff(b[2]) as usize
    }
}

fn support(values: &[f64]) -> Vec<usize> {
    (0..values.len()).filter(|&i| values[i] != 0.0).collect()
}

impl QuadratureTable {
    pub fn lattice_total(&self) -> f64 {
        self.lattice_total
    }

    /// `w(i,j)`; zero on the diagonal.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.offset_weights[offset_index(&self.coords[i], &self.coords[j], self.grid.n, self.grid.dim)]
    }

    /// Weight for an absolute lattice offset.
    pub fn offset_weight(&self, offset: &[usize]) -> f64 {
        self.offset_weights[self.grid.index(offset)]
    }

    /// `κ_box(i)` in the units of the pair weights (`h^N` times a density).
    pub fn exterior_mass(&self, i: usize) -> f64 {
        self.exterior_mass[i]
    }

    /// Pointwise exterior density `κ_box(i) / h^N`.
    pub fn kappa_box(&self, i: usize) -> f64 {
        self.exterior_mass[i] / self.grid.cell()
    }

    /// `Σ_{j ∈ cols, j≠i} w_ij x_j` for every `i ∈ rows`.
    pub fn weighted_sums(&self, x: &[f64], rows: &[usize], cols: &[usize]) -> Vec<f64> {
        let n = self.grid.n;
        let dim = self.grid.dim;
        let w = &self.offset_weights;
        rows.par_iter()
            .map(|&i| {
                let ci = &self.coords[i];
                let mut acc = 0.0;
                for &j in cols {
                    acc += w[offset_index(ci, &self.coords[j], n, dim)] * x[j];
                }
                // w(i,i) = 0, so the diagonal never contributes
                acc
            })
            .collect()
    }

    fn check_grid(&self, f: &Field) -> Result<()> {
        if f.grid != self.grid {
            return Err(Error::Contract("field lives on a different grid than the table".into()));
        }
        Ok(())
    }

    /// `(I_h u)_i` for `i ∈ rows` from raw nodal values.
    pub fn operator_rows(&self, values: &[f64], rows: &[usize]) -> Vec<f64> {
        let supp = support(values);
        let sums = self.weighted_sums(values, rows, &supp);
        let cell = self.grid.cell();
        rows.iter().zip(sums).map(|(&i, s)| (self.lattice_total * values[i] - s) / cell).collect()
    }
}

/// `J_h(u,v) = ½ Σ_{i≠j} (u_i−u_j)(v_i−v_j) w_ij + Σ_i u_i v_i κ_box(i)`.
pub fn bilinear(table: &QuadratureTable, u: &Field, v: &Field) -> Result<f64> {
    table.check_grid(u)?;
    table.check_grid(v)?;
    Ok(bilinear_values(table, &u.values, &v.values))
}

pub(crate) fn bilinear_values(table: &QuadratureTable, u: &[f64], v: &[f64]) -> f64 {
    let su = support(u);
    let sv = support(v);
    if su.is_empty() || sv.is_empty() {
        return 0.0;
    }
    let sums = table.weighted_sums(v, &su, &sv);
    su.iter().zip(sums).map(|(&i, s)| u[i] * (table.lattice_total * v[i] - s)).sum()
}

/// Discrete operator `(I_h u)_i` at every node of the box.
pub fn apply_operator(table: &QuadratureTable, u: &Field) -> Result<Field> {
    table.check_grid(u)?;
    let all: Vec<usize> = (0..table.grid.len()).collect();
    let values = table.operator_rows(&u.values, &all);
    Ok(Field { grid: table.grid, values, mask: vec![true; table.grid.len()] })
}

/// Complement whose kernel mass [`kappa`] measures.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Radial(RadialSet),
    Half(HalfSpace),
}

impl From<RadialSet> for Region {
    fn from(s: RadialSet) -> Self {
        Region::Radial(s)
    }
}

impl From<HalfSpace> for Region {
    fn from(h: HalfSpace) -> Self {
        Region::Half(h)
    }
}

/// `κ(x) = ∫_{R^N∖region} k(|x−y|) dy`; infinite on the boundary and outside.
pub fn kappa(region: &Region, kernel: &Kernel, x: &Point) -> Result<Mass> {
    match region {
        Region::Half(h) => {
            let d = h.signed_distance(x);
            if d <= 0.0 {
                return Ok(Mass::Infinite);
            }
            kernel.halfspace_mass(d)
        }
        Region::Radial(set) => radial_kappa(set, kernel, x),
    }
}

fn radial_kappa(set: &RadialSet, kernel: &Kernel, x: &Point) -> Result<Mass> {
    set.validate()?;
    let dim = kernel.dim;
    let d = norm(x);
    if !set.contains_radius(d) {
        return Ok(Mass::Infinite);
    }
    let comp = set.complement_intervals();
    if comp.is_empty() {
        return Ok(Mass::Finite(0.0));
    }
    let dist = comp.iter().map(|&(a, b)| if d < a { a - d } else { d - b }).fold(f64::INFINITY, f64::min);
    if dist <= 0.0 {
        return Ok(Mass::Infinite);
    }
    if d == 0.0 {
        // shells around the origin lie entirely inside or outside
        let mut total = 0.0;
        for &(a, b) in &comp {
            if b.is_finite() {
                let f = |r: f64| kernel.value(r) * r.powi(dim as i32 - 1);
                total += sphere_area(dim) * integrate(f, a, b, &[1.0, kernel.r0], tight()).value;
            } else {
                total += kernel.complement_ball_mass(a)?;
            }
        }
        return Ok(Mass::Finite(total));
    }
    let measure = |rho: f64| -> f64 {
        let c = |t: f64| (t * t - d * d - rho * rho) / (2.0 * d * rho);
        comp.iter()
            .map(|&(a, b)| {
                let lo = cap_area(dim, c(a));
                let hi = if b.is_finite() { cap_area(dim, c(b)) } else { 0.0 };
                lo - hi
            })
            .sum()
    };
    let mut breaks = vec![1.0];
    if kernel.r0.is_finite() {
        breaks.push(kernel.r0);
    }
    for &(a, b) in &comp {
        for t in [a, b] {
            if t.is_finite() {
                breaks.push((t - d).abs());
                breaks.push(t + d);
            }
        }
    }
    let f = |rho: f64| kernel.value(rho) * rho.powi(dim as i32 - 1) * measure(rho);
    let v = match kernel.support_radius() {
        Some(s) => integrate(f, dist, s.max(dist), &breaks, tight()).value,
        None => integrate_to_infinity(f, dist, &breaks, tight()).value,
    };
    Ok(Mass::Finite(v))
}

fn tight() -> QuadOptions {
    QuadOptions { abs_tol: 1e-14, rel_tol: 1e-11, max_intervals: 4000 }
}

/// Discrete exterior density of a mask, `(T − Σ_{j∈mask, j≠i} w_ij) / h^N`;
/// `+∞` off the mask.
pub fn discrete_kappa(table: &QuadratureTable, mask: &[bool]) -> Vec<f64> {
    let nodes: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let ones = vec![1.0; mask.len()];
    let sums = table.weighted_sums(&ones, &nodes, &nodes);
    let mut out = vec![f64::INFINITY; mask.len()];
    for (&i, s) in nodes.iter().zip(sums) {
        out[i] = (table.lattice_total - s) / table.grid.cell();
    }
    out
}

fn cg_solve(apply: &dyn Fn(&[f64]) -> Vec<f64>, b: &[f64], tol: f64, max_iters: usize) -> Result<Vec<f64>> {
    let dotp = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dotp(&r, &r);
    let target = tol * tol * dotp(b, b);
    for _ in 0..max_iters {
        if rr <= target {
            return Ok(x);
        }
        let ap = apply(&p);
        let alpha = rr / dotp(&p, &ap);
        for k in 0..x.len() {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dotp(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..p.len() {
            p[k] = r[k] + beta * p[k];
        }
    }
    if rr <= target {
        return Ok(x);
    }
    Err(Error::Convergence { iterations: max_iters, residual: (rr / dotp(b, b)).sqrt() })
}

/// Smallest Rayleigh quotient `J_h(u,u) / ‖u‖²` over fields supported on `mask`.
pub fn lambda1(table: &QuadratureTable, mask: &[bool]) -> Result<f64> {
    lambda1_with(table, mask, 1e-6, 500)
}

/// Inverse power iteration with conjugate-gradient inner solves.
pub fn lambda1_with(table: &QuadratureTable, mask: &[bool], tol: f64, max_iters: usize) -> Result<f64> {
    let nodes: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if nodes.is_empty() {
        return Err(Error::Contract("mask has no interior node".into()));
    }
    let m = nodes.len();
    let cell = table.grid.cell();
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut full = vec![0.0; table.grid.len()];
        for (k, &i) in nodes.iter().enumerate() {
            full[i] = x[k];
        }
        let sums = table.weighted_sums(&full, &nodes, &nodes);
        nodes.iter().zip(sums).map(|(&i, s)| (table.lattice_total * full[i] - s) / cell).collect()
    };
    let dotp = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![1.0 / (m as f64).sqrt(); m];
    let mut lam = dotp(&apply(&x), &x);
    let mut residual = f64::INFINITY;
    for it in 0..max_iters {
        let y = cg_solve(&apply, &x, 1e-12, 10 * m + 100)?;
        let ny = dotp(&y, &y).sqrt();
        x = y.iter().map(|v| v / ny).collect();
        let ax = apply(&x);
        let new = dotp(&ax, &x);
        residual = ax.iter().zip(&x).map(|(a, b)| (a - new * b).powi(2)).sum::<f64>().sqrt() / new;
        let change = (new - lam).abs() / new;
        lam = new;
        // the Rayleigh quotient error is quadratic in the eigenvector residual
        if it > 0 && change <= 0.1 * tol && residual * residual <= tol {
            return Ok(lam);
        }
    }
    Err(Error::Convergence { iterations: max_iters, residual })
}

/// `ρ(v, R) = Σ_{i,j∈R, i≠j} (v_i − v_j)² w_ij` over ordered pairs.
pub fn rho(table: &QuadratureTable, v: &Field, region_mask: &[bool]) -> Result<f64> {
    table.check_grid(v)?;
    let nodes: Vec<usize> = (0..region_mask.len()).filter(|&i| region_mask[i]).collect();
    let vals = &v.values;
    let rows: Vec<f64> = nodes
        .par_iter()
        .map(|&i| nodes.iter().map(|&j| (vals[i] - vals[j]).powi(2) * table.weight(i, j)).sum::<f64>())
        .collect();
    // summed in order so the result does not depend on the thread count
    Ok(rows.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::domain_mask;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frac_table(n: usize) -> QuadratureTable {
        let g = Grid::new(2, n, 1.0).unwrap();
        assemble(&g, &Kernel::fractional(2, 0.5).unwrap()).unwrap()
    }

    fn random_field(g: Grid, mask: &[bool], rng: &mut ChaCha8Rng) -> Field {
        Field::from_fn(g, mask.to_vec(), |_| rng.gen_range(-1.0..1.0))
    }

    // (½ Σ_{i≠j} (u_i−u_j)(v_i−v_j) w_ij + Σ u_i v_i κ_box(i)) by explicit pairs
    fn brute_bilinear(t: &QuadratureTable, u: &[f64], v: &[f64]) -> f64 {
        let m = u.len();
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    s += 0.5 * (u[i] - u[j]) * (v[i] - v[j]) * t.weight(i, j);
                }
            }
            s += u[i] * v[i] * t.exterior_mass(i);
        }
        s
    }

    #[test]
    fn weights_are_symmetric_and_nonnegative() {
        let t = frac_table(7);
        for i in 0..t.grid.len() {
            assert_eq!(t.weight(i, i), 0.0);
            for j in 0..t.grid.len() {
                assert_eq!(t.weight(i, j), t.weight(j, i));
                assert!(t.weight(i, j) >= 0.0);
            }
        }
        assert_eq!(t.offset_weight(&[1, 2]), t.offset_weight(&[2, 1]));
    }

    #[test]
    fn weights_decrease_with_offset_length() {
        for rule in [DiagonalRule::Omit, DiagonalRule::Subcell] {
            let g = Grid::new(2, 9, 1.0).unwrap();
            let opts = FormOptions { diagonal_rule: rule, ..Default::default() };
            for k in [Kernel::fractional(2, 0.3).unwrap(), Kernel::zeroth_indicator(2).unwrap()] {
                let t = assemble_with(&g, &k, &opts).unwrap();
                let mut pairs: Vec<(u64, f64)> = (0..g.len())
                    .map(|i| {
                        let a = g.multi_index(i);
                        ((a[0] * a[0] + a[1] * a[1]) as u64, t.offset_weights[i])
                    })
                    .filter(|p| p.0 > 0)
                    .collect();
                pairs.sort_by_key(|p| p.0);
                for w in pairs.windows(2) {
                    if w[1].0 > w[0].0 {
                        assert!(w[0].1 >= w[1].1, "{rule:?} {:?}", w);
                    }
                }
            }
        }
    }

    #[test]
    fn exterior_mass_smallest_at_centre() {
        let t = frac_table(9);
        let c = t.grid.center_index();
        for i in 0..t.grid.len() {
            assert!(t.exterior_mass(i) >= t.exterior_mass(c));
            assert!(t.exterior_mass(i) > 0.0);
        }
    }

    #[test]
    fn exterior_density_approximates_box_complement() {
        // κ of [−1,1]² at the centre lies between the masses outside the
        // circumscribed and inscribed discs: 0.5/√2 and 0.5
        for n in [17, 33] {
            let t = frac_table(n);
            let kc = t.kappa_box(t.grid.center_index());
            assert!(kc > 0.5 / 2f64.sqrt() && kc < 0.5, "{kc}");
        }
    }

    #[test]
    fn bilinear_matches_pair_sums() {
        let t = frac_table(7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mask = vec![true; t.grid.len()];
        for _ in 0..5 {
            let u = random_field(t.grid, &mask, &mut rng);
            let v = random_field(t.grid, &mask, &mut rng);
            let fast = bilinear(&t, &u, &v).unwrap();
            let slow = brute_bilinear(&t, &u.values, &v.values);
            assert_relative_eq!(fast, slow, max_relative = 1e-12);
            assert_relative_eq!(fast, bilinear(&t, &v, &u).unwrap(), max_relative = 1e-13);
            assert!(bilinear(&t, &u, &u).unwrap() >= 0.0);
        }
    }

    #[test]
    fn single_node_energy() {
        let t = frac_table(7);
        let i = t.grid.index(&[2, 4]);
        let mut vals = vec![0.0; t.grid.len()];
        vals[i] = 1.0;
        let u = Field::new(t.grid, vals, vec![true; t.grid.len()]).unwrap();
        let direct: f64 = (0..t.grid.len()).map(|j| t.weight(i, j)).sum::<f64>() + t.exterior_mass(i);
        assert_relative_eq!(bilinear(&t, &u, &u).unwrap(), direct, max_relative = 1e-13);
        let mut m = vec![false; t.grid.len()];
        m[i] = true;
        assert_relative_eq!(lambda1(&t, &m).unwrap(), direct / t.grid.cell(), max_relative = 1e-10);
    }

    #[test]
    fn constants_have_no_interior_energy() {
        let t = frac_table(7);
        let c = Field::new(t.grid, vec![2.5; t.grid.len()], vec![true; t.grid.len()]).unwrap();
        let kappa_only: f64 = (0..t.grid.len()).map(|i| 2.5 * 2.5 * t.exterior_mass(i)).sum();
        assert_relative_eq!(bilinear(&t, &c, &c).unwrap(), kappa_only, max_relative = 1e-12);
    }

    #[test]
    fn duality_with_operator() {
        let t = frac_table(7);
        let g = t.grid;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inner = domain_mask(&RadialSet::Ball(0.9), &g).unwrap().mask;
        for _ in 0..5 {
            let u = random_field(g, &vec![true; g.len()], &mut rng);
            let v = random_field(g, &inner, &mut rng);
            let iu = apply_operator(&t, &u).unwrap();
            assert_relative_eq!(iu.l2_dot(&v), bilinear(&t, &u, &v).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn operator_respects_antisymmetry() {
        let t = frac_table(9);
        let g = t.grid;
        let h = HalfSpace::coordinate(0, 0.0);
        let perm = g.reflection_permutation(&h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut vals = vec![0.0; g.len()];
        for i in 0..g.len() {
            let j = perm[i].unwrap();
            if h.contains(&g.node(i)) {
                let a: f64 = rng.gen_range(-1.0..1.0);
                vals[i] = a;
                vals[j] = -a;
            }
        }
        let u = Field::new(g, vals, vec![true; g.len()]).unwrap();
        let iu = apply_operator(&t, &u).unwrap();
        for i in 0..g.len() {
            assert_relative_eq!(iu.values[i], -iu.values[perm[i].unwrap()], epsilon = 1e-12);
        }
    }

    #[test]
    fn kappa_examples() {
        let k = Kernel::fractional(2, 0.5).unwrap();
        let full = Region::Radial(RadialSet::FullSpace);
        assert_eq!(kappa(&full, &k, &[0.3, 0.1, 0.0]).unwrap(), Mass::Finite(0.0));
        let ball = Region::Radial(RadialSet::Ball(1.0));
        assert_relative_eq!(kappa(&ball, &k, &[0.0; 3]).unwrap().finite().unwrap(), 0.5, max_relative = 1e-12);
        // arbitrary-precision reference
        let off = kappa(&ball, &k, &[0.5, 0.0, 0.0]).unwrap().finite().unwrap();
        assert_relative_eq!(off, 0.622_810_305_111_796_1, max_relative = 1e-8);
        assert!(kappa(&ball, &k, &[1.0, 0.0, 0.0]).unwrap().is_infinite());
        let h = Region::Half(HalfSpace::coordinate(0, 0.0));
        assert!(kappa(&h, &k, &[0.0, 0.4, 0.0]).unwrap().is_infinite());
        assert_relative_eq!(
            kappa(&h, &k, &[1.0, 0.4, 0.0]).unwrap().finite().unwrap(),
            0.5 / std::f64::consts::PI,
            max_relative = 1e-10
        );
    }

    #[test]
    fn kappa_of_annulus_and_union() {
        let k = Kernel::fractional(2, 0.5).unwrap();
        // at the centre of an exterior domain only the inner disc is missing
        let ext = Region::Radial(RadialSet::Exterior(1.0));
        assert!(kappa(&ext, &k, &[0.0; 3]).unwrap().is_infinite());
        let ann = Region::Radial(RadialSet::Annulus { r: 0.5, big_r: 2.0 });
        let v = kappa(&ann, &k, &[1.0, 0.0, 0.0]).unwrap().finite().unwrap();
        let inner_only = kappa(&Region::Radial(RadialSet::Exterior(0.5)), &k, &[1.0, 0.0, 0.0]).unwrap();
        let outer_only = kappa(&Region::Radial(RadialSet::Ball(2.0)), &k, &[1.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(v, inner_only.finite().unwrap() + outer_only.finite().unwrap(), max_relative = 1e-9);
    }

    #[test]
    fn lambda1_against_dense_eigensolver() {
        let t = frac_table(9);
        let g = t.grid;
        let mask = domain_mask(&RadialSet::Ball(0.8), &g).unwrap().mask;
        let nodes: Vec<usize> = (0..g.len()).filter(|&i| mask[i]).collect();
        let m = nodes.len();
        let a = nalgebra::DMatrix::from_fn(m, m, |p, q| {
            if p == q {
                t.lattice_total() / g.cell()
            } else {
                -t.weight(nodes[p], nodes[q]) / g.cell()
            }
        });
        let dense = a.symmetric_eigen().eigenvalues.min();
        assert_relative_eq!(lambda1(&t, &mask).unwrap(), dense, max_relative = 1e-6);
    }

    #[test]
    fn lambda1_monotone_and_above_min_kappa() {
        let t = frac_table(11);
        let g = t.grid;
        let mut prev = 0.0;
        for r in [0.95, 0.7, 0.45] {
            let mask = domain_mask(&RadialSet::Ball(r), &g).unwrap().mask;
            let l = lambda1(&t, &mask).unwrap();
            let kmin = discrete_kappa(&t, &mask).into_iter().fold(f64::INFINITY, f64::min);
            assert!(l >= kmin, "{l} < {kmin}");
            assert!(l > prev);
            prev = l;
        }
    }

    #[test]
    fn rho_matches_pairs_and_cutoff() {
        let t = frac_table(5);
        let g = t.grid;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_field(g, &vec![true; g.len()], &mut rng);
        let region = vec![true; g.len()];
        let mut slow = 0.0;
        for i in 0..g.len() {
            for j in 0..g.len() {
                slow += (v.values[i] - v.values[j]).powi(2) * t.weight(i, j);
            }
        }
        let fast = rho(&t, &v, &region).unwrap();
        assert_relative_eq!(fast, slow, max_relative = 1e-12);
        assert!(rho(&t, &v.positive_part(), &region).unwrap() <= fast);
        let c = Field::new(g, vec![1.0; g.len()], region.clone()).unwrap();
        assert_eq!(rho(&t, &c, &region).unwrap(), 0.0);
    }

    #[test]
    fn node_budget_is_enforced() {
        let g = Grid::new(2, 151, 1.0).unwrap();
        let k = Kernel::fractional(2, 0.5).unwrap();
        assert!(matches!(assemble(&g, &k), Err(Error::Resource(_))));
    }
}
