//! Radial domains, tensor grids, nodal fields, reflections and polarization.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 3;

/// A point padded with zeros to three coordinates.
pub type Point = [f64; MAX_DIM];

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

/// Pads a slice to a [`Point`].
pub fn point(x: &[f64]) -> Point {
    let mut p = [0.0; MAX_DIM];
    for (dst, src) in p.iter_mut().zip(x) {
        *dst = *src;
    }
    p
}

/// Rotationally invariant sets used as domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RadialSet {
    Ball(f64),
    Annulus { r: f64, big_r: f64 },
    Exterior(f64),
    FullSpace,
    ComplementAnnulus { r: f64, big_r: f64 },
    Union(Vec<RadialSet>),
}

impl RadialSet {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("radius must be positive, got {x}")))
            }
        };
        match self {
            RadialSet::Ball(r) | RadialSet::Exterior(r) => pos(*r),
            RadialSet::Annulus { r, big_r } | RadialSet::ComplementAnnulus { r, big_r } => {
                pos(*r)?;
                pos(*big_r)?;
                if r >= big_r {
                    return Err(Error::Config(format!("inner radius {r} must be below outer radius {big_r}")));
                }
                Ok(())
            }
            RadialSet::FullSpace => Ok(()),
            RadialSet::Union(parts) => parts.iter().try_for_each(RadialSet::validate),
        }
    }

    /// Open radial intervals `(a, b)` making up the set; `b` may be infinite.
    pub fn radial_intervals(&self) -> Vec<(f64, f64)> {
        let mut iv = match self {
            RadialSet::Ball(r) => vec![(0.0, *r)],
            RadialSet::Annulus { r, big_r } => vec![(*r, *big_r)],
            RadialSet::Exterior(r) => vec![(*r, f64::INFINITY)],
            RadialSet::FullSpace => vec![(0.0, f64::INFINITY)],
            RadialSet::ComplementAnnulus { r, big_r } => vec![(0.0, *r), (*big_r, f64::INFINITY)],
            RadialSet::Union(parts) => parts.iter().flat_map(RadialSet::radial_intervals).collect(),
        };
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (a, b) in iv {
            match merged.last_mut() {
                // touching open intervals leave their common radius outside
                Some(last) if a < last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        merged
    }

    /// Closed radial intervals of the complement.
    pub fn complement_intervals(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut start = 0.0;
        for (a, b) in self.radial_intervals() {
            if a > start {
                out.push((start, a));
            } else if a > 0.0 {
                // a single sphere separates two touching intervals
                out.push((a, a));
            }
            start = b;
        }
        if start.is_finite() {
            out.push((start, f64::INFINITY));
        }
        out
    }

    /// Largest radius reached by a bounded set.
    pub fn outer_radius(&self) -> Option<f64> {
        let last = self.radial_intervals().last().copied()?;
        last.1.is_finite().then_some(last.1)
    }

    pub fn contains_radius(&self, r: f64) -> bool {
        self.radial_intervals().iter().any(|&(a, b)| (r > a || (a == 0.0 && r == 0.0)) && r < b)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_radius(x.iter().map(|v| v * v).sum::<f64>().sqrt())
    }
}

/// The open half space `{x : x·e > λ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    normal: Point,
    offset: f64,
}

impl HalfSpace {
    pub fn new(normal: &[f64], offset: f64) -> Result<Self> {
        if normal.len() > MAX_DIM {
            return Err(Error::Domain("at most three coordinates supported".into()));
        }
        let e = point(normal);
        let len = norm(&e);
        if !(len > 0.0 && len.is_finite()) || !offset.is_finite() {
            return Err(Error::Domain("half space needs a nonzero normal and finite offset".into()));
        }
        Ok(Self { normal: e.map(|c| c / len), offset })
    }

    /// `{x_axis > λ}`.
    pub fn coordinate(axis: usize, offset: f64) -> Self {
        let mut normal = [0.0; MAX_DIM];
        normal[axis] = 1.0;
        Self { normal, offset }
    }

    /// Planar normal `(cos φ, sin φ)`.
    pub fn from_angle(phi: f64, offset: f64) -> Self {
        Self { normal: [phi.cos(), phi.sin(), 0.0], offset }
    }

    pub fn normal(&self) -> &Point {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `x·e − λ`.
    pub fn signed_distance(&self, x: &Point) -> f64 {
        dot(x, &self.normal) - self.offset
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.signed_distance(x) > 0.0
    }

    pub fn reflect(&self, x: &Point) -> Point {
        let t = 2.0 * self.signed_distance(x);
        [x[0] - t * self.normal[0], x[1] - t * self.normal[1], x[2] - t * self.normal[2]]
    }
}

/// Uniform tensor grid `{−R + i h}^N` with an odd number of nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
    pub box_radius: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, box_radius: f64) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::Config(format!("grid dimension must be 2 or 3, got {dim}")));
        }
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::Config(format!("nodes per axis must be odd and at least 3, got {n}")));
        }
        if !(box_radius > 0.0 && box_radius.is_finite()) {
            return Err(Error::Config(format!("box radius must be positive, got {box_radius}")));
        }
        Ok(Self { dim, n, box_radius })
    }

    pub fn h(&self) -> f64 {
        2.0 * self.box_radius / (self.n - 1) as f64
    }

    /// Cell measure `h^N`.
    pub fn cell(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Lattice coordinates of node `idx`, row-major (first axis slowest).
    pub fn multi_index(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let mut m = [0; MAX_DIM];
        for k in (0..self.dim).rev() {
            m[k] = idx % self.n;
            idx /= self.n;
        }
        m
    }

    pub fn index(&self, m: &[usize]) -> usize {
        m[..self.dim].iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn node(&self, idx: usize) -> Point {
        let m = self.multi_index(idx);
        let h = self.h();
        let c = (self.n / 2) as isize;
        let mut p = [0.0; MAX_DIM];
        for k in 0..self.dim {
            // centred offsets keep mirror nodes exact negatives of each other
            p[k] = (m[k] as isize - c) as f64 * h;
        }
        p
    }

    pub fn nodes(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }

    pub fn center_index(&self) -> usize {
        self.index(&[self.n / 2; MAX_DIM])
    }

    /// Node sitting (within `1e-9 h`) at `x`, if any.
    pub fn node_at(&self, x: &Point) -> Option<usize> {
        let h = self.h();
        let mut m = [0; MAX_DIM];
        for k in 0..self.dim {
            let t = (x[k] + self.box_radius) / h;
            let r = t.round();
            if (t - r).abs() > 1e-9 || r < 0.0 || r > (self.n - 1) as f64 {
                return None;
            }
            m[k] = r as usize;
        }
        Some(self.index(&m))
    }

    /// Multilinear interpolation of nodal `values` at `x`; zero outside the box.
    pub fn interpolate(&self, values: &[f64], x: &Point) -> f64 {
        let h = self.h();
        let top = (self.n - 1) as f64;
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for k in 0..self.dim {
            let mut t = (x[k] + self.box_radius) / h;
            let r = t.round();
            if (t - r).abs() <= 1e-9 {
                t = r;
            }
            if !(0.0..=top).contains(&t) {
                return 0.0;
            }
            let i = (t.floor() as usize).min(self.n - 2);
            base[k] = i;
            frac[k] = t - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << self.dim) {
            let mut wgt = 1.0;
            let mut m = base;
            for k in 0..self.dim {
                if corner >> k & 1 == 1 {
                    wgt *= frac[k];
                    m[k] += 1;
                } else {
                    wgt *= 1.0 - frac[k];
                }
            }
            if wgt != 0.0 {
                acc += wgt * values[self.index(&m)];
            }
        }
        acc
    }

    /// Node permutation of a lattice-preserving reflection: `Some(σ)` with
    /// `σ[i] = Some(j)` when the image of node `i` is node `j`, `None` when it
    /// leaves the box. Returns `None` if some image misses the lattice.
    pub fn reflection_permutation(&self, half: &HalfSpace) -> Option<Vec<Option<usize>>> {
        let mut perm = Vec::with_capacity(self.len());
        let h = self.h();
        let top = (self.n - 1) as f64;
        for i in 0..self.len() {
            let y = half.reflect(&self.node(i));
            let mut m = [0; MAX_DIM];
            let mut inside = true;
            for k in 0..self.dim {
                let t = (y[k] + self.box_radius) / h;
                let r = t.round();
                if (t - r).abs() > 1e-9 {
                    return None;
                }
                if r < 0.0 || r > top {
                    inside = false;
                } else {
                    m[k] = r as usize;
                }
            }
            perm.push(inside.then(|| self.index(&m)));
        }
        Some(perm)
    }
}

/// Nodal values on a grid, zero off the domain mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != grid.len() || mask.len() != grid.len() {
            return Err(Error::Contract(format!(
                "field has {} values and {} mask entries for {} nodes",
                values.len(),
                mask.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("non-finite value at node {i}")));
        }
        if let Some(i) = (0..values.len()).find(|&i| !mask[i] && values[i] != 0.0) {
            return Err(Error::Contract(format!("nonzero value outside the domain at node {i}")));
        }
        Ok(Self { grid, values, mask })
    }

    pub fn zeros(grid: Grid, mask: Vec<bool>) -> Self {
        Self { grid, values: vec![0.0; grid.len()], mask }
    }

    /// Samples `f` on masked nodes, zero elsewhere.
    pub fn from_fn(grid: Grid, mask: Vec<bool>, mut f: impl FnMut(&Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| if mask[i] { f(&grid.node(i)) } else { 0.0 }).collect();
        Self { grid, values, mask }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let values = self.values.iter().zip(&self.mask).map(|(&v, &m)| if m { f(v) } else { 0.0 }).collect();
        Self { grid: self.grid, values, mask: self.mask.clone() }
    }

    pub fn positive_part(&self) -> Self {
        self.map(|v| v.max(0.0))
    }

    pub fn negative_part(&self) -> Self {
        self.map(|v| (-v).max(0.0))
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(h^N Σ |u_i|^q)^{1/q}`.
    pub fn lq_norm(&self, q: f64) -> f64 {
        (self.grid.cell() * self.values.iter().map(|v| v.abs().powf(q)).sum::<f64>()).powf(1.0 / q)
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// `h^N Σ u_i v_i`.
    pub fn l2_dot(&self, other: &Field) -> f64 {
        self.grid.cell() * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn interpolate(&self, x: &Point) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    /// Flips the sign if the field has negative total mass.
    pub fn with_positive_mass(mut self) -> Self {
        if self.values.iter().sum::<f64>() < 0.0 {
            self.values.iter_mut().for_each(|v| *v = -*v);
        }
        self
    }

    /// CSV with header `x1,..,xN,u,mask`, one row per node in row-major order.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for k in 1..=self.grid.dim {
            let _ = write!(s, "x{k},");
        }
        s.push_str("u,mask\n");
        for i in 0..self.grid.len() {
            let x = self.grid.node(i);
            for c in x.iter().take(self.grid.dim) {
                let _ = write!(s, "{c:e},");
            }
            let _ = writeln!(s, "{:e},{}", self.values[i], u8::from(self.mask[i]));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Config("empty field file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let dim = cols.len().saturating_sub(2);
        let expected: Vec<String> =
            (1..=dim).map(|k| format!("x{k}")).chain(["u".to_string(), "mask".to_string()]).collect();
        if cols != expected {
            return Err(Error::Config(format!("field header must be `{}`", expected.join(","))));
        }
        let mut xs = Vec::new();
        let mut values = Vec::new();
        let mut mask = Vec::new();
        for (row, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != dim + 2 {
                return Err(Error::Config(format!("row {}: expected {} columns", row + 1, dim + 2)));
            }
            let num =
                |s: &str| s.parse::<f64>().map_err(|_| Error::Config(format!("row {}: bad number `{s}`", row + 1)));
            let mut x = [0.0; MAX_DIM];
            for k in 0..dim {
                x[k] = num(parts[k])?;
            }
            xs.push(x);
            values.push(num(parts[dim])?);
            mask.push(match parts[dim + 1] {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(Error::Config(format!("row {}: bad mask `{other}`", row + 1))),
            });
        }
        let n = (xs.len() as f64).powf(1.0 / dim as f64).round() as usize;
        let box_radius = -xs.first().map(|x| x[0]).unwrap_or(0.0);
        let grid = Grid::new(dim, n, box_radius)?;
        if grid.len() != xs.len() {
            return Err(Error::Config(format!("{} rows do not form an {n}^{dim} grid", xs.len())));
        }
        let tol = 1e-9 * grid.h();
        for (i, x) in xs.iter().enumerate() {
            let want = grid.node(i);
            if (0..dim).any(|k| (want[k] - x[k]).abs() > tol) {
                return Err(Error::Config(format!("row {} is not at the expected node", i + 1)));
            }
        }
        Field::new(grid, values, mask)
    }
}

/// Node-wise membership of a radial set.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainMask {
    pub mask: Vec<bool>,
    /// Set when an unbounded domain was truncated at the box.
    pub warning: Option<String>,
}

pub fn domain_mask(set: &RadialSet, grid: &Grid) -> Result<DomainMask> {
    set.validate()?;
    let warning = match set.outer_radius() {
        Some(r) if r > grid.box_radius * (1.0 + 1e-12) => {
            return Err(Error::Config(format!(
                "box radius {} does not contain the domain of radius {r}",
                grid.box_radius
            )))
        }
        Some(_) => None,
        None => Some(format!("unbounded domain truncated at box radius {}", grid.box_radius)),
    };
    let mask = grid.nodes().map(|x| set.contains_radius(norm(&x))).collect();
    Ok(DomainMask { mask, warning })
}

/// `x ↦ u(Q_H x)` at the nodes; lattice images are exact, others interpolated.
pub fn reflect_field(u: &Field, half: &HalfSpace) -> Field {
    let grid = u.grid;
    let mut values = Vec::with_capacity(grid.len());
    let mut mask = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let y = half.reflect(&grid.node(i));
        match grid.node_at(&y) {
            Some(j) => {
                values.push(u.values[j]);
                mask.push(u.mask[j]);
            }
            None => {
                let v = grid.interpolate(&u.values, &y);
                values.push(v);
                mask.push(v != 0.0);
            }
        }
    }
    Field { grid, values, mask }
}

/// Two-point rearrangement: max on `H`, min on its complement, nodes on `∂H` kept.
pub fn polarize(u: &Field, half: &HalfSpace) -> Field {
    let grid = u.grid;
    let refl = reflect_field(u, half);
    let eps = 1e-12 * grid.box_radius.max(1.0);
    let mut values = u.values.clone();
    let mut mask = u.mask.clone();
    for i in 0..grid.len() {
        let s = half.signed_distance(&grid.node(i));
        if s > eps {
            values[i] = u.values[i].max(refl.values[i]);
        } else if s < -eps {
            values[i] = u.values[i].min(refl.values[i]);
        }
        mask[i] = mask[i] || values[i] != 0.0;
    }
    Field { grid, values, mask }
}
