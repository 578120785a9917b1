//! Nonlinearities, the energy `K[u] = ½ J(u,u) − ∫ F(|x|,u)`, its gradient,
//! and (constrained) descent.

use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::{bilinear, QuadratureTable};
use crate::geometry::{norm, Field};
use crate::quadrature::{integrate, QuadOptions};

pub type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum NonlinearityKind {
    /// `f(u) = −u`.
    LinearDecay,
    /// `f(u) = u³ − u`.
    CubicMinusU,
    /// `f(u) = Σ_k c_k u^k`, `coeffs[0]` multiplying `u`.
    Polynomial(Vec<f64>),
    /// Arbitrary `f(r,u)` with its antiderivative `F(r,u)`.
    Custom { f: ScalarFn, big_f: ScalarFn },
}

impl fmt::Debug for NonlinearityKind {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LinearDecay => write!(fm, "LinearDecay"),
            Self::CubicMinusU => write!(fm, "CubicMinusU"),
            Self::Polynomial(c) => write!(fm, "Polynomial({c:?})"),
            Self::Custom { .. } => write!(fm, "Custom"),
        }
    }
}

/// `|f(r,u)| ≤ a1 |u| + a2 |u|^{q−1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub a1: f64,
    pub a2: f64,
    pub q: f64,
}

#[derive(Debug, Clone)]
pub struct Nonlinearity {
    pub kind: NonlinearityKind,
    pub growth: Growth,
}

impl Nonlinearity {
    pub fn linear_decay() -> Self {
        Self { kind: NonlinearityKind::LinearDecay, growth: Growth { a1: 1.0, a2: 0.0, q: 2.0 } }
    }

    pub fn cubic_minus_u() -> Self {
        Self { kind: NonlinearityKind::CubicMinusU, growth: Growth { a1: 1.0, a2: 1.0, q: 4.0 } }
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("polynomial nonlinearity needs finite coefficients".into()));
        }
        let deg = coeffs.len() as f64;
        // |u|^k ≤ |u| + |u|^deg for 1 ≤ k ≤ deg
        let a1 = coeffs[0].abs() + coeffs[1..].iter().map(|c| c.abs()).sum::<f64>();
        let a2 = coeffs[1..].iter().map(|c| c.abs()).sum::<f64>();
        Ok(Self { kind: NonlinearityKind::Polynomial(coeffs), growth: Growth { a1, a2, q: deg.max(1.0) + 1.0 } })
    }

    pub fn custom(f: ScalarFn, big_f: ScalarFn, growth: Growth) -> Self {
        Self { kind: NonlinearityKind::Custom { f, big_f }, growth }
    }

    pub fn f(&self, r: f64, u: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::LinearDecay => -u,
            NonlinearityKind::CubicMinusU => u * u * u - u,
            NonlinearityKind::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * u + ck) * u,
            NonlinearityKind::Custom { f, .. } => f(r, u),
        }
    }

    /// Antiderivative in `u` with `F(r,0) = 0`.
    pub fn antiderivative(&self, r: f64, u: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::LinearDecay => -0.5 * u * u,
            NonlinearityKind::CubicMinusU => 0.25 * u.powi(4) - 0.5 * u * u,
            NonlinearityKind::Polynomial(c) => {
                c.iter().enumerate().rev().fold(0.0, |acc, (k, &ck)| acc * u + ck / (k + 2) as f64) * u * u
            }
            NonlinearityKind::Custom { big_f, .. } => big_f(r, u),
        }
    }

    /// Whether `f(r,·)` is odd, so that `u` and `−u` carry the same energy.
    pub fn is_odd(&self) -> bool {
        match &self.kind {
            NonlinearityKind::LinearDecay | NonlinearityKind::CubicMinusU => true,
            NonlinearityKind::Polynomial(c) => c.iter().skip(1).step_by(2).all(|&x| x == 0.0),
            NonlinearityKind::Custom { .. } => false,
        }
    }
}

/// Sobolev-critical exponent `2N/(N−2s)` (infinite when `N ≤ 2s`).
pub fn critical_exponent(dim: usize, s: f64) -> f64 {
    let n = dim as f64;
    if n > 2.0 * s {
        2.0 * n / (n - 2.0 * s)
    } else {
        f64::INFINITY
    }
}

/// Exponents within 5% of the critical one are outside the regime where
/// discrete compactness is understood.
pub fn is_experimental_exponent(q: f64, dim: usize, s: f64) -> bool {
    q >= 0.95 * critical_exponent(dim, s)
}

/// Sampled evidence for the structural hypotheses on `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCertificate {
    pub k_bound: f64,
    /// Largest sampled difference quotient on `[−K, K]`.
    pub lipschitz: f64,
    pub lipschitz_pass: bool,
    /// Radius on which `f(r,u)/u ≤ 0` (capped at `K`).
    pub delta: f64,
    pub sign_pass: bool,
    pub growth_pass: bool,
    pub max_growth_excess: f64,
    pub antiderivative_pass: bool,
    pub max_antiderivative_error: f64,
}

/// Samples a 200×200 `(u,v)` lattice on `[−K,K]` at 20 radii.
pub fn check_hypotheses(nl: &Nonlinearity, k_bound: f64) -> Result<HypothesisCertificate> {
    let radii: Vec<f64> = (0..20).map(|i| 0.25 * i as f64).collect();
    check_hypotheses_at(nl, k_bound, &radii)
}

pub fn check_hypotheses_at(nl: &Nonlinearity, k_bound: f64, radii: &[f64]) -> Result<HypothesisCertificate> {
    if !(k_bound > 0.0 && k_bound.is_finite()) {
        return Err(Error::Domain(format!("working range must be positive, got {k_bound}")));
    }
    const M: usize = 200;
    let us: Vec<f64> = (0..M).map(|a| -k_bound + 2.0 * k_bound * a as f64 / (M - 1) as f64).collect();

    let mut lipschitz: f64 = 0.0;
    let mut finite = true;
    for &r in radii {
        let fs: Vec<f64> = us.iter().map(|&u| nl.f(r, u)).collect();
        finite &= fs.iter().all(|v| v.is_finite());
        for a in 0..M {
            for b in a + 1..M {
                lipschitz = lipschitz.max((fs[a] - fs[b]).abs() / (us[b] - us[a]));
            }
        }
    }

    let sign_ok = |t: f64| radii.iter().all(|&r| nl.f(r, t) / t <= 0.0 && nl.f(r, -t) / -t <= 0.0);
    let zero_ok = radii.iter().all(|&r| nl.f(r, 0.0) == 0.0);
    let mags: Vec<f64> = us.iter().filter(|&&u| u > 0.0).copied().collect();
    let delta = if !zero_ok || !sign_ok(mags[0]) {
        0.0
    } else {
        match mags.iter().position(|&t| !sign_ok(t)) {
            None => k_bound,
            Some(p) => {
                let (mut lo, mut hi) = (mags[p - 1], mags[p]);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if sign_ok(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            }
        }
    };

    let g = nl.growth;
    let mut max_growth_excess: f64 = 0.0;
    let mut max_antiderivative_error: f64 = 0.0;
    let opts = QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 200 };
    for &r in radii {
        for &u in &us {
            let bound = g.a1 * u.abs() + g.a2 * u.abs().powf(g.q - 1.0);
            max_growth_excess = max_growth_excess.max(nl.f(r, u).abs() - bound);
            let exact = if u >= 0.0 {
                integrate(|t| nl.f(r, t), 0.0, u, &[], opts).value
            } else {
                -integrate(|t| nl.f(r, t), u, 0.0, &[], opts).value
            };
            max_antiderivative_error = max_antiderivative_error.max((nl.antiderivative(r, u) - exact).abs());
        }
    }
    Ok(HypothesisCertificate {
        k_bound,
        lipschitz,
        lipschitz_pass: finite && lipschitz.is_finite(),
        delta,
        sign_pass: delta > 0.0,
        growth_pass: max_growth_excess <= 1e-10 * (1.0 + g.a1 + g.a2),
        max_growth_excess,
        antiderivative_pass: max_antiderivative_error <= 1e-8,
        max_antiderivative_error,
    })
}

fn radii(u: &Field) -> Vec<f64> {
    (0..u.grid.len()).map(|i| norm(&u.grid.node(i))).collect()
}

/// `K[u] = ½ J_h(u,u) − h^N Σ_{mask} F(|x_i|, u_i)`.
pub fn energy(table: &QuadratureTable, u: &Field, nl: &Nonlinearity) -> Result<f64> {
    let quad = 0.5 * bilinear(table, u, u)?;
    let rs = radii(u);
    let pot: f64 = (0..u.grid.len()).filter(|&i| u.mask[i]).map(|i| nl.antiderivative(rs[i], u.values[i])).sum();
    let k = quad - u.grid.cell() * pot;
    if !k.is_finite() {
        return Err(Error::Numeric("energy is not finite".into()));
    }
    Ok(k)
}

/// `L²` representer `(I_h u)_i − f(|x_i|, u_i)` on the mask, zero elsewhere.
pub fn gradient(table: &QuadratureTable, u: &Field, nl: &Nonlinearity) -> Result<Field> {
    if u.grid != table.grid {
        return Err(Error::Contract("field lives on a different grid than the table".into()));
    }
    let nodes: Vec<usize> = (0..u.grid.len()).filter(|&i| u.mask[i]).collect();
    let iu = table.operator_rows(&u.values, &nodes);
    let rs = radii(u);
    let mut values = vec![0.0; u.grid.len()];
    for (k, &i) in nodes.iter().enumerate() {
        values[i] = iu[k] - nl.f(rs[i], u.values[i]);
    }
    Ok(Field { grid: u.grid, values, mask: u.mask.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Constraint {
    None,
    /// `‖u‖_q = 1`.
    LqSphere(f64),
}

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    pub constraint: Constraint,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    /// Starting field; random on the mask when absent.
    pub initial: Option<Field>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { constraint: Constraint::None, seed: 0, max_iters: 5000, tol: 1e-6, initial: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub field: Field,
    pub energy: f64,
    pub iterations: usize,
    /// `‖projected gradient‖∞ ≤ tol` was reached.
    pub converged: bool,
    pub grad_norm: f64,
    /// Lagrange multiplier for constrained runs, 0 otherwise.
    pub multiplier: f64,
    pub log: Vec<IterationRecord>,
}

impl MinimizeOutcome {
    /// Iteration log as CSV with header `iter,K,grad_norm,step`.
    pub fn log_csv(&self) -> String {
        let mut s = String::from("iter,K,grad_norm,step\n");
        for r in &self.log {
            let _ = writeln!(s, "{},{:e},{:e},{:e}", r.iter, r.energy, r.grad_norm, r.step);
        }
        s
    }
}

/// Descent state restricted to the mask nodes.
struct Problem<'a> {
    table: &'a QuadratureTable,
    nl: &'a Nonlinearity,
    nodes: Vec<usize>,
    radii: Vec<f64>,
    cell: f64,
    len: usize,
}

struct Iterate {
    x: Vec<f64>,
    energy: f64,
    grad: Vec<f64>,
}

impl Problem<'_> {
    fn eval(&self, x: Vec<f64>) -> Iterate {
        let mut full = vec![0.0; self.len];
        for (k, &i) in self.nodes.iter().enumerate() {
            full[i] = x[k];
        }
        let iu = self.table.operator_rows(&full, &self.nodes);
        let mut quad = 0.0;
        let mut pot = 0.0;
        let mut grad = Vec::with_capacity(x.len());
        for k in 0..x.len() {
            quad += x[k] * iu[k];
            pot += self.nl.antiderivative(self.radii[k], x[k]);
            grad.push(iu[k] - self.nl.f(self.radii[k], x[k]));
        }
        Iterate { energy: self.cell * (0.5 * quad - pot), grad, x }
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell * a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>()
    }

    fn lq(&self, x: &[f64], q: f64) -> f64 {
        (self.cell * x.iter().map(|v| v.abs().powf(q)).sum::<f64>()).powf(1.0 / q)
    }

    fn project(&self, p: &Iterate, c: Constraint) -> Vec<f64> {
        match c {
            Constraint::None => p.grad.clone(),
            Constraint::LqSphere(q) => {
                let nrm: Vec<f64> = p.x.iter().map(|v| v.abs().powf(q - 2.0) * v).collect();
                let coef = self.dot(&p.grad, &nrm) / self.dot(&nrm, &nrm);
                p.grad.iter().zip(&nrm).map(|(g, m)| g - coef * m).collect()
            }
        }
    }

    fn retract(&self, mut x: Vec<f64>, c: Constraint) -> Result<Vec<f64>> {
        if let Constraint::LqSphere(q) = c {
            let s = self.lq(&x, q);
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Domain("cannot normalise the zero field onto the L^q sphere".into()));
            }
            x.iter_mut().for_each(|v| *v /= s);
        }
        Ok(x)
    }
}

/// Projected gradient descent with Barzilai–Borwein steps and Armijo
/// backtracking (`c = 1e−4`, halving).
pub fn minimize(
    table: &QuadratureTable,
    mask: &[bool],
    nl: &Nonlinearity,
    hypotheses: &HypothesisCertificate,
    opts: &MinimizeOptions,
) -> Result<MinimizeOutcome> {
    if !hypotheses.lipschitz_pass {
        return Err(Error::Hypothesis("no Lipschitz bound on the working range".into()));
    }
    if mask.len() != table.grid.len() {
        return Err(Error::Contract("mask length differs from the grid".into()));
    }
    if let Constraint::LqSphere(q) = opts.constraint {
        if !(q >= 2.0 && q.is_finite()) {
            return Err(Error::Config(format!("constraint exponent must be at least 2, got {q}")));
        }
    }
    let grid = table.grid;
    let nodes: Vec<usize> = (0..grid.len()).filter(|&i| mask[i]).collect();
    if nodes.is_empty() {
        return Err(Error::Contract("mask has no interior node".into()));
    }
    let prob = Problem {
        table,
        nl,
        radii: nodes.iter().map(|&i| norm(&grid.node(i))).collect(),
        nodes,
        cell: grid.cell(),
        len: grid.len(),
    };
    let x0: Vec<f64> = match &opts.initial {
        Some(f) => {
            if f.grid != grid {
                return Err(Error::Contract("initial field lives on a different grid".into()));
            }
            prob.nodes.iter().map(|&i| f.values[i]).collect()
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            prob.nodes.iter().map(|_| rng.gen_range(0.0..1.0)).collect()
        }
    };
    let c = opts.constraint;
    let mut cur = prob.eval(prob.retract(x0, c)?);
    let mut pg = prob.project(&cur, c);
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    // inverse of the operator diagonal as a first step
    let mut step = grid.cell() / table.lattice_total();
    let mut log = vec![IterationRecord { iter: 0, energy: cur.energy, grad_norm: inf(&pg), step: 0.0 }];
    let mut converged = inf(&pg) <= opts.tol;
    let mut iterations = 0;
    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let slope = prob.dot(&pg, &pg);
        let mut t = step;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = cur.x.iter().zip(&pg).map(|(x, g)| x - t * g).collect();
            let cand = prob.eval(prob.retract(trial, c)?);
            if !cand.energy.is_finite() || cand.energy < -1e15 {
                let trace: Vec<String> =
                    log.iter().rev().take(5).map(|r| format!("{}:{:e}", r.iter, r.energy)).collect();
                return Err(Error::Numeric(format!("energy unbounded below; last iterates {}", trace.join(", "))));
            }
            if cand.energy <= cur.energy - 1e-4 * t * slope {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        let Some(next) = accepted else {
            // no decrease left at rounding level
            break;
        };
        debug_assert!(next.energy <= cur.energy);
        let next_pg = prob.project(&next, c);
        let s: Vec<f64> = next.x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_pg.iter().zip(&pg).map(|(a, b)| a - b).collect();
        let sy = prob.dot(&s, &y);
        step = if sy > 0.0 { (prob.dot(&s, &s) / sy).clamp(1e-12, 1e12) } else { 2.0 * t };
        cur = next;
        pg = next_pg;
        let gn = inf(&pg);
        log.push(IterationRecord { iter: iterations, energy: cur.energy, grad_norm: gn, step: t });
        converged = gn <= opts.tol;
    }
    let mut values = vec![0.0; grid.len()];
    for (k, &i) in prob.nodes.iter().enumerate() {
        values[i] = cur.x[k];
    }
    let field = Field { grid, values, mask: mask.to_vec() };
    let multiplier = match c {
        Constraint::None => 0.0,
        Constraint::LqSphere(q) => lagrange_multiplier(table, &field, nl, q)?,
    };
    Ok(MinimizeOutcome { energy: cur.energy, grad_norm: inf(&pg), field, iterations, converged, multiplier, log })
}

/// `μ = ⟨I_h u − f(·,u), u⟩ / ‖u‖_q^q`.
pub fn lagrange_multiplier(table: &QuadratureTable, u: &Field, nl: &Nonlinearity, q: f64) -> Result<f64> {
    let g = gradient(table, u, nl)?;
    let denom = u.lq_norm(q).powf(q);
    if denom == 0.0 {
        return Err(Error::Domain("multiplier undefined for the zero field".into()));
    }
    Ok(g.l2_dot(u) / denom)
}

#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub field: Field,
    pub inf_norm: f64,
    pub l2_norm: f64,
}

/// `r_i = (I_h u)_i − f(|x_i|,u_i) − μ |u_i|^{q−2} u_i` on the mask.
pub fn residual(table: &QuadratureTable, u: &Field, nl: &Nonlinearity, mu: f64, q: f64) -> Result<ResidualReport> {
    let mut g = gradient(table, u, nl)?;
    for i in 0..g.values.len() {
        if g.mask[i] {
            let v = u.values[i];
            g.values[i] -= mu * v.abs().powf(q - 2.0) * v;
        }
    }
    Ok(ResidualReport { inf_norm: g.norm_inf(), l2_norm: g.l2_norm(), field: g })
}
