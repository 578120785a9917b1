//! Symmetry detection on nodal fields: reflection inequalities, the
//! rotating-plane sweep, axis recovery, foliated Schwarz checks and the
//! moving-plane sweep.
//!
//! Dominance is measured with the margin `m(e) = min_{Ω∩H_e} (u − u∘σ_e)`,
//! so a half space is dominant when `m(e) ≥ −tol`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, norm, reflect_field, Field, HalfSpace, Point};

/// Resolution-tied slack `10 h² ‖u‖∞`.
pub fn tol_sym(u: &Field) -> f64 {
    let h = u.grid.h();
    10.0 * h * h * u.norm_inf()
}

fn node_eps(u: &Field) -> f64 {
    1e-9 * u.grid.h()
}

/// `v = u∘Q_H − u`.
pub fn reflection_difference(u: &Field, half: &HalfSpace) -> Field {
    let r = reflect_field(u, half);
    let values: Vec<f64> = r.values.iter().zip(&u.values).map(|(a, b)| a - b).collect();
    let mask = r.mask.iter().zip(&u.mask).map(|(a, b)| *a || *b).collect();
    Field { grid: u.grid, values, mask }
}

/// Dominance statistics of one half space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    /// `min_{Ω∩H} (u − u∘σ)`; `+∞` when `Ω∩H` has no node.
    pub margin: f64,
    /// Mean of `u − u∘σ` over `Ω∩H`.
    pub strength: f64,
    /// `‖u∘σ − u‖∞`.
    pub difference_norm: f64,
}

pub fn dominance(u: &Field, half: &HalfSpace) -> Dominance {
    let v = reflection_difference(u, half);
    let eps = node_eps(u);
    let mut margin = f64::INFINITY;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..u.grid.len() {
        if u.mask[i] && half.signed_distance(&u.grid.node(i)) > eps {
            let d = -v.values[i];
            margin = margin.min(d);
            sum += d;
            count += 1;
        }
    }
    Dominance { margin, strength: if count > 0 { sum / count as f64 } else { 0.0 }, difference_norm: v.norm_inf() }
}

fn planar(p: &Point, dim: usize) -> Vec<f64> {
    p[..dim].to_vec()
}

/// `count` unit directions: equally spaced angles in 2D, a Fibonacci lattice in 3D.
pub fn sample_directions(dim: usize, count: usize) -> Vec<Point> {
    if dim == 2 {
        return (0..count)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / count as f64;
                [a.cos(), a.sin(), 0.0]
            })
            .collect();
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * k as f64;
            [r * a.cos(), r * a.sin(), z]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct U1Direction {
    pub direction: Vec<f64>,
    pub margin: f64,
    pub strength: f64,
}

/// Direction whose half space dominates `u` (margin ≥ −tol) without being a
/// symmetry plane (`‖u∘σ − u‖∞ ≥ 10 tol`). Among qualifying directions the
/// largest margin wins, ties (within `tol`) going to the largest mean gap.
pub fn check_u1(u: &Field, directions: &[Point], tol: f64) -> Option<U1Direction> {
    let stats: Vec<Dominance> = directions.par_iter().map(|e| dominance(u, &HalfSpace::new(e, 0.0).unwrap())).collect();
    let qualifying: Vec<usize> = (0..directions.len())
        .filter(|&k| stats[k].margin >= -tol && stats[k].difference_norm >= 10.0 * tol && stats[k].margin.is_finite())
        .collect();
    let best_margin = qualifying.iter().map(|&k| stats[k].margin).fold(f64::NEG_INFINITY, f64::max);
    let k = qualifying
        .into_iter()
        .filter(|&k| stats[k].margin >= best_margin - tol)
        .max_by(|&a, &b| stats[a].strength.total_cmp(&stats[b].strength))?;
    Some(U1Direction {
        direction: planar(&directions[k], u.grid.dim),
        margin: stats[k].margin,
        strength: stats[k].strength,
    })
}

/// Decay proxy: `max |u|` on the outer shell `|x| ≥ (1 − fraction) R_box` is at most `tol_decay`.
pub fn check_u2(u: &Field, shell_fraction: f64, tol_decay: f64) -> Result<bool> {
    if !(shell_fraction > 0.0 && shell_fraction < 1.0) {
        return Err(Error::Domain(format!("shell fraction must lie in (0,1), got {shell_fraction}")));
    }
    let r0 = (1.0 - shell_fraction) * u.grid.box_radius;
    let worst =
        (0..u.grid.len()).filter(|&i| norm(&u.grid.node(i)) >= r0).map(|i| u.values[i].abs()).fold(0.0, f64::max);
    Ok(worst <= tol_decay)
}

/// Result of sweeping `e(φ) = cos φ e₁ + sin φ e₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSweep {
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    /// `(φ, m(φ))` on the sampling grid over `(−π, π]`.
    pub samples: Vec<(f64, f64)>,
    /// Every sampled direction is dominant: `u` is radial in this plane.
    pub full_circle: bool,
    pub phi_minus: f64,
    pub phi_plus: f64,
    /// `‖v‖∞` at `φ−` and `φ+`.
    pub end_norms: (f64, f64),
    /// Both ends are symmetry hyperplanes: `‖v‖∞ ≤ 2 tol` there. The margin
    /// already sits at `−tol` on an endpoint, hence the factor.
    pub ends_symmetric: bool,
}

impl PlaneSweep {
    pub fn direction(&self, phi: f64) -> Point {
        let mut p = [0.0; 3];
        for k in 0..self.e1.len() {
            p[k] = phi.cos() * self.e1[k] + phi.sin() * self.e2[k];
        }
        p
    }

    /// CSV with header `phi,m(phi)`.
    pub fn csv(&self) -> String {
        let mut s = String::from("phi,m(phi)\n");
        for (p, m) in &self.samples {
            s.push_str(&format!("{p:e},{m:e}\n"));
        }
        s
    }
}

/// Rotating-plane sweep in the plane spanned by orthonormal `e1`, `e2`.
///
/// The dominance set is the connected component of `{m ≥ −tol}` containing
/// `φ = 0`; its endpoints are refined by bisection to `1e−4`.
pub fn rotating_plane(u: &Field, e1: &Point, e2: &Point, angular_step: f64, tol: f64) -> Result<PlaneSweep> {
    if !(angular_step > 0.0 && angular_step < PI) {
        return Err(Error::Domain(format!("angular step must lie in (0, π), got {angular_step}")));
    }
    let dim = u.grid.dim;
    let dir = |phi: f64| -> Point {
        let mut p = [0.0; 3];
        for k in 0..3 {
            p[k] = phi.cos() * e1[k] + phi.sin() * e2[k];
        }
        p
    };
    let margin = |phi: f64| dominance(u, &HalfSpace::new(&dir(phi), 0.0).unwrap()).margin;
    if margin(0.0) < -tol {
        return Err(Error::Contract("the sweep must start from a dominant direction".into()));
    }
    let k_max = (PI / angular_step).round() as i64;
    let step = PI / k_max as f64;
    let ks: Vec<i64> = (-k_max + 1..=k_max).collect();
    let samples: Vec<(f64, f64)> = ks.par_iter().map(|&k| (k as f64 * step, margin(k as f64 * step))).collect();
    let at = |k: i64| -> f64 {
        let idx = (k - (-k_max + 1)).rem_euclid(2 * k_max);
        samples[idx as usize].1
    };
    let ok = |m: f64| m >= -tol;

    let mut right = None;
    for k in 1..=2 * k_max {
        if !ok(at(k)) {
            right = Some(k);
            break;
        }
    }
    let Some(kr) = right else {
        return Ok(PlaneSweep {
            e1: planar(e1, dim),
            e2: planar(e2, dim),
            samples,
            full_circle: true,
            phi_minus: -PI,
            phi_plus: PI,
            end_norms: (0.0, 0.0),
            ends_symmetric: true,
        });
    };
    let mut kl = -1;
    while ok(at(kl)) {
        kl -= 1;
    }
    let refine = |mut good: f64, mut bad: f64| {
        while (bad - good).abs() > 1e-4 {
            let mid = 0.5 * (good + bad);
            if ok(margin(mid)) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        good
    };
    let phi_plus = refine((kr - 1) as f64 * step, kr as f64 * step);
    let phi_minus = refine((kl + 1) as f64 * step, kl as f64 * step);
    let norm_at = |phi: f64| reflection_difference(u, &HalfSpace::new(&dir(phi), 0.0).unwrap()).norm_inf();
    let end_norms = (norm_at(phi_minus), norm_at(phi_plus));
    Ok(PlaneSweep {
        e1: planar(e1, dim),
        e2: planar(e2, dim),
        samples,
        full_circle: false,
        phi_minus,
        phi_plus,
        ends_symmetric: end_norms.0 <= 2.0 * tol && end_norms.1 <= 2.0 * tol,
        end_norms,
    })
}

fn orthonormal_pair(p: &Point) -> (Point, Point) {
    let helper = if p[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = dot(&helper, p);
    let mut q1 = [helper[0] - d * p[0], helper[1] - d * p[1], helper[2] - d * p[2]];
    let n1 = norm(&q1);
    q1.iter_mut().for_each(|c| *c /= n1);
    let q2 = [p[1] * q1[2] - p[2] * q1[1], p[2] * q1[0] - p[0] * q1[2], p[0] * q1[1] - p[1] * q1[0]];
    (q1, q2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisReport {
    pub p: Vec<f64>,
    /// No dominant non-symmetric direction, or a full-circle sweep.
    pub radial: bool,
    pub u1: Option<U1Direction>,
    pub sweeps: Vec<PlaneSweep>,
    /// Largest disagreement between the axis and per-plane arc midpoints (3D).
    pub cross_check_deviation: Option<f64>,
    pub cross_check_pass: bool,
}

/// Candidate axis of foliated Schwarz symmetry.
///
/// In the plane the axis is the arc midpoint of the dominance set; in space
/// it is the normalised first angular moment, checked against arc midpoints
/// of two sweeps through it.
pub fn find_axis(u: &Field, angular_step: f64, tol: f64) -> Result<AxisReport> {
    let dim = u.grid.dim;
    let count = if dim == 2 { (2.0 * PI / angular_step).round() as usize } else { 600 };
    let u1 = check_u1(u, &sample_directions(dim, count), tol);
    let radial_report = |u1| AxisReport {
        p: planar(&[1.0, 0.0, 0.0], dim),
        radial: true,
        u1,
        sweeps: vec![],
        cross_check_deviation: None,
        cross_check_pass: true,
    };
    let Some(dir) = u1.clone() else {
        return Ok(radial_report(None));
    };
    let e1: Point = crate::geometry::point(&dir.direction);
    if dim == 2 {
        let e2 = [-e1[1], e1[0], 0.0];
        let sweep = rotating_plane(u, &e1, &e2, angular_step, tol)?;
        if sweep.full_circle {
            let mut r = radial_report(u1);
            r.sweeps.push(sweep);
            return Ok(r);
        }
        let p = sweep.direction(0.5 * (sweep.phi_minus + sweep.phi_plus));
        return Ok(AxisReport {
            p: planar(&p, dim),
            radial: false,
            u1,
            sweeps: vec![sweep],
            cross_check_deviation: None,
            cross_check_pass: true,
        });
    }
    let mut m = [0.0; 3];
    let mut mass = 0.0;
    for i in 0..u.grid.len() {
        let x = u.grid.node(i);
        let r = norm(&x);
        if u.mask[i] && r > 0.0 {
            for k in 0..3 {
                m[k] += u.values[i] * x[k] / r;
            }
            mass += u.values[i].abs();
        }
    }
    let mn = norm(&m);
    if mn <= 1e-12 * mass.max(f64::MIN_POSITIVE) {
        return Err(Error::Domain("first angular moment vanishes for a non-radial field".into()));
    }
    let p = m.map(|c| c / mn);
    let (q1, q2) = orthonormal_pair(&p);
    let mut sweeps = Vec::new();
    let mut deviation: f64 = 0.0;
    let mut pass = true;
    for q in [q1, q2] {
        match rotating_plane(u, &p, &q, angular_step, tol) {
            Ok(s) => {
                if !s.full_circle {
                    deviation = deviation.max((0.5 * (s.phi_minus + s.phi_plus)).abs());
                }
                sweeps.push(s);
            }
            Err(_) => pass = false,
        }
    }
    pass &= deviation <= 2.0 * angular_step;
    Ok(AxisReport {
        p: planar(&p, dim),
        radial: false,
        u1,
        sweeps,
        cross_check_deviation: Some(deviation),
        cross_check_pass: pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoliatedCheck {
    pub pass: bool,
    pub max_violation: f64,
    pub monotone_violation: f64,
    /// Spread over the azimuths at fixed polar angle. In the plane this is
    /// the mirror deviation about the axis, reported but not part of `pass`.
    pub invariance_violation: f64,
    pub radii_used: usize,
}

/// Radii `h, 2h, …` strictly inside the box.
pub fn default_radii(u: &Field) -> Vec<f64> {
    let h = u.grid.h();
    (1..).map(|k| k as f64 * h).take_while(|&r| r < u.grid.box_radius - 0.5 * h).collect()
}

/// `count` polar angles evenly spread over `[0, π]`.
pub fn default_angles(count: usize) -> Vec<f64> {
    (0..count).map(|k| PI * k as f64 / (count - 1) as f64).collect()
}

/// Samples `u` on spheres `r S^{N−1}` and checks monotone decrease in the
/// polar angle from `p`, plus invariance under rotations about `p` in 3D.
pub fn foliated_schwarz_check(u: &Field, p: &[f64], radii: &[f64], angles: &[f64], tol: f64) -> Result<FoliatedCheck> {
    let dim = u.grid.dim;
    let p = crate::geometry::point(p);
    if (norm(&p) - 1.0).abs() > 1e-9 {
        return Err(Error::Domain("axis must be a unit vector".into()));
    }
    let used: Vec<f64> = radii.iter().copied().filter(|&r| r > 0.0 && r < u.grid.box_radius).collect();
    if used.is_empty() || angles.len() < 2 {
        return Err(Error::Inconclusive("no admissible sampling spheres".into()));
    }
    let (q1, q2) = if dim == 2 { ([-p[1], p[0], 0.0], [0.0; 3]) } else { orthonormal_pair(&p) };
    let azimuths: Vec<f64> =
        if dim == 2 { vec![0.0, PI] } else { (0..12).map(|j| 2.0 * PI * j as f64 / 12.0).collect() };
    let per_radius: Vec<(f64, f64)> = used
        .par_iter()
        .map(|&r| {
            let mut inv: f64 = 0.0;
            let mut mono: f64 = 0.0;
            let mut running_min = f64::INFINITY;
            // in the plane each half circle is its own profile
            let mut side_min = [f64::INFINITY; 2];
            for &theta in angles {
                let vals: Vec<f64> = azimuths
                    .iter()
                    .map(|&psi| {
                        let (c, s) = (theta.cos(), theta.sin());
                        let x: Point =
                            std::array::from_fn(|k| r * (c * p[k] + s * (psi.cos() * q1[k] + psi.sin() * q2[k])));
                        u.interpolate(&x)
                    })
                    .collect();
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                inv = inv.max(hi - lo);
                if dim == 2 {
                    for (m, v) in side_min.iter_mut().zip(&vals) {
                        mono = mono.max(v - *m);
                        *m = m.min(*v);
                    }
                } else {
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    mono = mono.max(mean - running_min);
                    running_min = running_min.min(mean);
                }
            }
            (mono, inv)
        })
        .collect();
    let monotone_violation = per_radius.iter().map(|x| x.0).fold(0.0, f64::max);
    let invariance_violation = per_radius.iter().map(|x| x.1).fold(0.0, f64::max);
    let max_violation = if dim == 3 { monotone_violation.max(invariance_violation) } else { monotone_violation };
    Ok(FoliatedCheck {
        pass: max_violation <= tol,
        max_violation,
        monotone_violation,
        invariance_violation,
        radii_used: used.len(),
    })
}

/// Smallest node radius `ρ` with `sup_{|x|≥ρ} |u| ≤ δ`.
pub fn decay_radius(u: &Field, delta: f64) -> f64 {
    let mut nodes: Vec<(f64, f64)> = (0..u.grid.len()).map(|i| (norm(&u.grid.node(i)), u.values[i].abs())).collect();
    nodes.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut rho = nodes.first().map(|n| n.0).unwrap_or(0.0);
    for (r, v) in nodes {
        if v > delta {
            break;
        }
        rho = r;
    }
    rho
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingPlaneResult {
    pub direction: Vec<f64>,
    /// Where the reflection difference vanishes: the minimiser of
    /// `‖V_λ u‖∞` next to the threshold crossing.
    pub lambda_inf: f64,
    /// `inf{μ : S(λ) ≥ −tol for all scanned λ ≥ μ}`, bisected to `h/4`.
    pub lambda_crossing: f64,
    /// `‖V_{λ∞} u‖∞`.
    pub v_norm: f64,
    pub symmetric: bool,
    /// `(λ, S(λ))` on the downward scan.
    pub scan: Vec<(f64, f64)>,
    /// `S(λ) ≥ −tol` on every scanned `λ ≥ λ∞`.
    pub post_hoc_ok: bool,
}

impl MovingPlaneResult {
    /// CSV with header `lambda,S(lambda)`.
    pub fn csv(&self) -> String {
        let mut s = String::from("lambda,S(lambda)\n");
        for (l, v) in &self.scan {
            s.push_str(&format!("{l:e},{v:e}\n"));
        }
        s
    }
}

/// `(S(λ), ‖V_λ u‖∞)` with `V_λ u = u∘Q_λ − u` over box nodes in `H_λ`.
fn plane_stats(u: &Field, e: &Point, lambda: f64) -> (f64, f64) {
    let half = HalfSpace::new(e, lambda).unwrap();
    let eps = node_eps(u);
    let mut s = f64::INFINITY;
    let mut nrm: f64 = 0.0;
    for i in 0..u.grid.len() {
        let x = u.grid.node(i);
        if half.signed_distance(&x) > eps {
            let v = u.interpolate(&half.reflect(&x)) - u.values[i];
            s = s.min(v);
            nrm = nrm.max(v.abs());
        }
    }
    (s, nrm)
}

/// Moving-plane sweep along `e` for a nonnegative field.
///
/// `rho`, when given, is a decay radius beyond which the sweep must hold
/// from the start; a failure there is reported as a no-start error.
pub fn moving_plane(u: &Field, e: &[f64], rho: Option<f64>, tol: f64) -> Result<MovingPlaneResult> {
    if u.values.iter().any(|&v| v < -tol) {
        return Err(Error::Contract("moving plane needs a nonnegative field".into()));
    }
    let e = HalfSpace::new(e, 0.0)?.normal().to_owned();
    let h = u.grid.h();
    let top = u.grid.box_radius * e.iter().map(|c| c.abs()).sum::<f64>();
    let s_at = |l: f64| plane_stats(u, &e, l).0;
    let mut scan = Vec::new();
    let mut fail = None;
    let mut lam = top;
    let mut k = 0usize;
    while lam > -top {
        lam = top - 0.5 * h * (k + 1) as f64;
        k += 1;
        let s = s_at(lam);
        scan.push((lam, s));
        if s < -tol {
            fail = Some(lam);
            break;
        }
    }
    if let Some(r) = rho {
        if scan.iter().any(|&(l, s)| l >= r && s < -tol) {
            return Err(Error::Inconclusive(format!("the sweep does not hold beyond the decay radius {r}")));
        }
    }
    let dim = u.grid.dim;
    let Some(bad) = fail else {
        let (_, v_norm) = plane_stats(u, &e, lam);
        return Ok(MovingPlaneResult {
            direction: e[..dim].to_vec(),
            lambda_inf: lam,
            lambda_crossing: lam,
            v_norm,
            symmetric: v_norm <= tol,
            scan,
            post_hoc_ok: true,
        });
    };
    if scan.len() == 1 {
        return Err(Error::Inconclusive("S(λ) < −tol already at the edge of the box; enlarge the box".into()));
    }
    let (mut lo, mut hi) = (bad, bad + 0.5 * h);
    while hi - lo > 0.25 * h {
        let mid = 0.5 * (lo + hi);
        if s_at(mid) >= -tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let crossing = hi;
    // golden-section search for the symmetry position next to the crossing
    let norm_at = |l: f64| plane_stats(u, &e, l).1;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (crossing - 0.25 * h, crossing + 0.25 * h);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (norm_at(c), norm_at(d));
    while b - a > 1e-9 * h {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = norm_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = norm_at(d);
        }
    }
    let lambda_inf = 0.5 * (a + b);
    let v_norm = norm_at(lambda_inf);
    let post_hoc_ok = scan.iter().filter(|&&(l, _)| l >= lambda_inf).all(|&(_, s)| s >= -tol);
    Ok(MovingPlaneResult {
        direction: e[..dim].to_vec(),
        lambda_inf,
        lambda_crossing: crossing,
        v_norm,
        symmetric: v_norm <= tol,
        scan,
        post_hoc_ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialCenterReport {
    /// `u ≡ 0`: the trivial alternative.
    pub trivial: bool,
    pub center: Option<Vec<f64>>,
    pub sweeps: Vec<MovingPlaneResult>,
    /// Largest gap between a node value and the binned radial profile.
    pub max_profile_deviation: f64,
    pub radial_pass: bool,
    /// Largest increase between consecutive bin means.
    pub max_increase: f64,
    pub monotone_pass: bool,
    pub diagnostic: Option<String>,
}

/// Recovers the symmetry centre from coordinate moving-plane sweeps and
/// certifies that `u(· + z₀)` is radial and radially decreasing.
///
/// Nodes are binned by `|x − z₀|` in shells of width `h/2`; each node is
/// compared with the piecewise-linear interpolant of the bin means.
pub fn radial_center(u: &Field, tol: f64) -> Result<RadialCenterReport> {
    let dim = u.grid.dim;
    if u.norm_inf() == 0.0 {
        return Ok(RadialCenterReport {
            trivial: true,
            center: None,
            sweeps: vec![],
            max_profile_deviation: 0.0,
            radial_pass: true,
            max_increase: 0.0,
            monotone_pass: true,
            diagnostic: Some("u ≡ 0".into()),
        });
    }
    let mut sweeps = Vec::new();
    for k in 0..dim {
        let mut e = [0.0; 3];
        e[k] = 1.0;
        sweeps.push(moving_plane(u, &e[..dim], None, tol)?);
    }
    let z: Point = std::array::from_fn(|k| if k < dim { sweeps[k].lambda_inf } else { 0.0 });
    let h = u.grid.h();
    let reach = u.grid.box_radius - z.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let width = 0.5 * h;
    let nb = (reach / width).floor() as usize;
    let mut nodes = Vec::new();
    let mut sum_r = vec![0.0; nb];
    let mut sum_v = vec![0.0; nb];
    let mut cnt = vec![0usize; nb];
    for i in 0..u.grid.len() {
        let x = u.grid.node(i);
        let d: Point = std::array::from_fn(|k| x[k] - z[k]);
        let r = norm(&d);
        let b = (r / width) as usize;
        if b < nb {
            sum_r[b] += r;
            sum_v[b] += u.values[i];
            cnt[b] += 1;
            nodes.push((r, u.values[i]));
        }
    }
    let prof: Vec<(f64, f64)> =
        (0..nb).filter(|&b| cnt[b] > 0).map(|b| (sum_r[b] / cnt[b] as f64, sum_v[b] / cnt[b] as f64)).collect();
    let interp = |r: f64| -> f64 {
        let p = prof.partition_point(|q| q.0 <= r);
        if p == 0 {
            prof[0].1
        } else if p == prof.len() {
            prof[p - 1].1
        } else {
            let (r0, v0) = prof[p - 1];
            let (r1, v1) = prof[p];
            v0 + (v1 - v0) * (r - r0) / (r1 - r0)
        }
    };
    let max_profile_deviation = nodes.iter().map(|&(r, v)| (v - interp(r)).abs()).fold(0.0, f64::max);
    let max_increase =
        prof.windows(2).filter(|w| w[0].1 > tol || w[1].1 > tol).map(|w| w[1].1 - w[0].1).fold(0.0, f64::max);
    let radial_pass = max_profile_deviation <= tol && sweeps.iter().all(|s| s.symmetric);
    let monotone_pass = max_increase <= tol;
    let diagnostic = if !monotone_pass {
        Some("radial profile increases somewhere: not a nonnegative solution profile".to_string())
    } else if !radial_pass {
        Some("no centre of radial symmetry found".to_string())
    } else {
        None
    };
    Ok(RadialCenterReport {
        trivial: false,
        center: Some(z[..dim].to_vec()),
        sweeps,
        max_profile_deviation,
        radial_pass,
        max_increase,
        monotone_pass,
        diagnostic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub sym: f64,
    pub decay: f64,
    pub angular_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub angular_step: f64,
    pub shell_fraction: f64,
    pub tol_decay: f64,
    /// Overrides `10 h² ‖u‖∞`.
    pub tol_sym: Option<f64>,
    /// Run coordinate moving-plane sweeps (nonnegative decaying fields only).
    pub moving_plane: bool,
    pub polar_angles: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            angular_step: PI / 180.0,
            shell_fraction: 0.1,
            tol_decay: 1e-6,
            tol_sym: None,
            moving_plane: true,
            polar_angles: 181,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaEntry {
    pub direction: Vec<f64>,
    pub lambda_inf: f64,
    pub v_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceSample {
    pub angle: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub u1_direction: Option<Vec<f64>>,
    pub u1_margin: Option<f64>,
    pub u2_pass: bool,
    /// Sampled directions of the dominance set (angles relative to `e₁`).
    pub dominance_set: Vec<DominanceSample>,
    pub phi_minus: Option<f64>,
    pub phi_plus: Option<f64>,
    pub axis: Option<Vec<f64>>,
    pub radial: bool,
    pub foliated_pass: bool,
    pub foliated_violation: f64,
    pub lambda_inf: Vec<LambdaEntry>,
    pub radial_center: Option<Vec<f64>>,
    /// A passing foliated check came with a dominant `H_p`.
    pub consistency_ok: bool,
    pub tolerances: Tolerances,
    #[serde(skip)]
    pub sweeps: Vec<PlaneSweep>,
    #[serde(skip)]
    pub moving: Vec<MovingPlaneResult>,
}

/// Runs every detector and assembles a report.
pub fn analyze(u: &Field, opts: &AnalysisOptions) -> Result<SymmetryReport> {
    let tol = opts.tol_sym.unwrap_or_else(|| tol_sym(u));
    let tolerances = Tolerances { sym: tol, decay: opts.tol_decay, angular_step: opts.angular_step };
    let axis = find_axis(u, opts.angular_step, tol)?;
    let u2_pass = check_u2(u, opts.shell_fraction, opts.tol_decay)?;
    let fol = foliated_schwarz_check(u, &axis.p, &default_radii(u), &default_angles(opts.polar_angles), tol)?;
    let mut dominance_set = Vec::new();
    let (mut phi_minus, mut phi_plus) = (None, None);
    if let Some(s) = axis.sweeps.first() {
        dominance_set = s
            .samples
            .iter()
            .filter(|&&(phi, m)| m >= -tol && (s.full_circle || (phi >= s.phi_minus && phi <= s.phi_plus)))
            .map(|&(angle, margin)| DominanceSample { angle, margin })
            .collect();
        if !s.full_circle {
            phi_minus = Some(s.phi_minus);
            phi_plus = Some(s.phi_plus);
        }
    }
    let p_margin = dominance(u, &HalfSpace::new(&axis.p, 0.0)?).margin;
    let consistency_ok = !fol.pass || p_margin >= -tol;
    let mut moving = Vec::new();
    let mut lambda_inf = Vec::new();
    let mut radial_center_pt = None;
    if opts.moving_plane && u2_pass && u.values.iter().all(|&v| v >= -tol) {
        let rc = radial_center(u, tol)?;
        for s in &rc.sweeps {
            lambda_inf.push(LambdaEntry { direction: s.direction.clone(), lambda_inf: s.lambda_inf, v_norm: s.v_norm });
        }
        if rc.radial_pass {
            radial_center_pt = rc.center.clone();
        }
        moving = rc.sweeps;
    }
    Ok(SymmetryReport {
        u1_direction: axis.u1.as_ref().map(|d| d.direction.clone()),
        u1_margin: axis.u1.as_ref().map(|d| d.margin),
        u2_pass,
        dominance_set,
        phi_minus,
        phi_plus,
        axis: Some(axis.p.clone()),
        radial: axis.radial,
        foliated_pass: fol.pass,
        foliated_violation: fol.max_violation,
        lambda_inf,
        radial_center: radial_center_pt,
        consistency_ok,
        tolerances,
        sweeps: axis.sweeps,
        moving,
    })
}
