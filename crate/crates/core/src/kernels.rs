//! Radial kernels `k(|x-y|)` and their radial integrals.
//!
//! Built-in families carry closed-form condition-(k) certificates; a
//! [`Family::Custom`] kernel is a monotone sample table interpolated
//! log-log, and its certificate is sampled numerically.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_to_infinity, QuadOptions};

/// Kernel mass that may legitimately be infinite (e.g. a half space seen
/// from its own boundary).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Mass {
    Finite(f64),
    Infinite,
}

impl Mass {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Mass::Infinite)
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Mass::Finite(v) => Some(v),
            Mass::Infinite => None,
        }
    }

    /// Ordering helper: `self > c`, with infinity above every real.
    pub fn exceeds(&self, c: f64) -> bool {
        match *self {
            Mass::Finite(v) => v > c,
            Mass::Infinite => true,
        }
    }
}

/// Monotone sample table `(r_i, k_i)` with log-log interpolation and
/// power-law extension past both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTable {
    r: Vec<f64>,
    k: Vec<f64>,
}

impl KernelTable {
    pub fn new(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidKernel("custom table needs at least two samples".into()));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in samples.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidKernel(format!("duplicate radius {}", w[0].0)));
            }
        }
        for &(r, k) in &samples {
            if !(r > 0.0 && r.is_finite()) || !(k > 0.0 && k.is_finite()) {
                return Err(Error::InvalidKernel(format!("samples must be positive and finite, got ({r}, {k})")));
            }
        }
        if let Some(w) = samples.windows(2).find(|w| w[1].1 > w[0].1) {
            return Err(Error::InvalidKernel(format!("kernel increases between r={} and r={}", w[0].0, w[1].0)));
        }
        if samples[1].1 >= samples[0].1 {
            return Err(Error::InvalidKernel("kernel is not strictly decreasing near 0".into()));
        }
        let (r, k) = samples.into_iter().unzip();
        Ok(Self { r, k })
    }

    /// Reads a two-column `r,k` CSV (an optional header line is skipped).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (Some(a), Some(b)) = (cols.next(), cols.next()) else {
                return Err(Error::Config(format!("line {}: expected `r,k`", lineno + 1)));
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(r), Ok(k)) => samples.push((r, k)),
                _ if lineno == 0 => continue,
                _ => return Err(Error::Config(format!("line {}: not numeric", lineno + 1))),
            }
        }
        Self::new(samples)
    }

    fn slope(&self, i: usize) -> f64 {
        (self.k[i + 1].ln() - self.k[i].ln()) / (self.r[i + 1].ln() - self.r[i].ln())
    }

    /// Log-log slope of the first segment (`-alpha` for `k ~ r^-alpha`).
    pub fn head_slope(&self) -> f64 {
        self.slope(0)
    }

    pub fn tail_slope(&self) -> f64 {
        self.slope(self.r.len() - 2)
    }

    pub fn r_min(&self) -> f64 {
        self.r[0]
    }

    pub fn r_max(&self) -> f64 {
        *self.r.last().unwrap()
    }

    pub fn k_min_r(&self) -> f64 {
        self.k[0]
    }

    pub fn k_max_r(&self) -> f64 {
        *self.k.last().unwrap()
    }

    pub fn radii(&self) -> &[f64] {
        &self.r
    }

    pub fn eval(&self, r: f64) -> f64 {
        let n = self.r.len();
        let i = if r <= self.r[0] {
            0
        } else if r >= self.r[n - 1] {
            n - 2
        } else {
            self.r.partition_point(|&x| x <= r) - 1
        };
        let t = self.slope(i);
        (self.k[i].ln() + t * (r.ln() - self.r[i].ln())).exp()
    }

    /// Largest sampled radius up to which the samples strictly decrease.
    fn strict_radius(&self) -> f64 {
        let mut r0 = self.r[1];
        for i in 1..self.r.len() - 1 {
            if self.k[i + 1] < self.k[i] {
                r0 = self.r[i + 1];
            } else {
                break;
            }
        }
        r0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Family {
    /// `c_{N,s} r^{-N-2s}`.
    Fractional {
        s: f64,
    },
    /// `r^{-N}` on `(0,1]`.
    ZerothIndicator,
    /// Logarithmically damped zeroth-order kernel `r^{-N} / (1 + |ln r|)` on `(0,1]`.
    ZerothLog,
    /// Relativistic kernel `c~_{N,s} r^{-(N+2s)/2} K_{(N+2s)/2}(r)`.
    Bessel {
        s: f64,
    },
    Custom(KernelTable),
}

/// A radial kernel in dimension `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub family: Family,
    pub dim: usize,
    /// Radius below which the kernel is strictly decreasing.
    pub r0: f64,
    /// `alpha` with `k(r) ~ r^{-alpha}` as `r -> 0`.
    pub singularity_exponent: f64,
    /// Cached normalization constant (1 for families without one).
    norm: f64,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    Ok(())
}

fn check_s(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("s must lie in (0,1), got {s}")));
    }
    Ok(())
}

/// `c_{N,s} = s(1-s) π^{-N/2} 4^s Γ((N+2s)/2) / Γ(1-s)`.
pub fn normalization_cns(dim: usize, s: f64) -> Result<f64> {
    check_dim(dim)?;
    check_s(s)?;
    let n = dim as f64;
    Ok(s * (1.0 - s) * PI.powf(-n / 2.0) * 4f64.powf(s) * gamma((n + 2.0 * s) / 2.0) / gamma(1.0 - s))
}

/// Normalization of the Bessel-type kernel, `s(1-s) π^{-N/2} 4^s 2^{1-ν} / Γ(2-s)` with `ν=(N+2s)/2`.
pub fn normalization_bessel(dim: usize, s: f64) -> Result<f64> {
    check_dim(dim)?;
    check_s(s)?;
    let n = dim as f64;
    let nu = (n + 2.0 * s) / 2.0;
    Ok(s * (1.0 - s) * PI.powf(-n / 2.0) * 4f64.powf(s) * 2f64.powf(1.0 - nu) / gamma(2.0 - s))
}

/// Modified Bessel function of the second kind, `K_ν(x) = ∫_0^∞ e^{-x cosh t} cosh(νt) dt`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x > 700.0 {
        return 0.0;
    }
    // e^{-x cosh t} < e^{-745} beyond t_max
    let t_max = (745.0 / x).max(1.0).acosh() + 1.0;
    let f = |t: f64| (-x * t.cosh() + nu.abs() * t).exp() * 0.5 * (1.0 + (-2.0 * nu.abs() * t).exp());
    integrate(f, 0.0, t_max, &[], QuadOptions { abs_tol: 0.0, rel_tol: 1e-13, max_intervals: 400 }).value
}

/// Surface measure `|S^{N-1}|`.
pub fn sphere_area(dim: usize) -> f64 {
    let n = dim as f64;
    2.0 * PI.powf(n / 2.0) / gamma(n / 2.0)
}

/// Measure of the spherical cap `{ω ∈ S^{N-1} : ω·e > c}`.
pub fn cap_area(dim: usize, c: f64) -> f64 {
    if c >= 1.0 {
        return 0.0;
    }
    if c <= -1.0 {
        return sphere_area(dim);
    }
    match dim {
        1 => {
            if c >= 0.0 {
                1.0
            } else {
                2.0
            }
        }
        2 => 2.0 * c.acos(),
        3 => 2.0 * PI * (1.0 - c),
        _ => {
            let half = 0.5 * sphere_area(dim) * beta_reg((dim as f64 - 1.0) / 2.0, 0.5, 1.0 - c * c);
            if c >= 0.0 {
                half
            } else {
                sphere_area(dim) - half
            }
        }
    }
}

/// How condition (k) was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateMethod {
    Analytic,
    Sampled,
}

/// Evidence that a kernel satisfies condition (k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionKCertificate {
    /// `∫_0^∞ min{1,r²} k(r) r^{N-1} dr`.
    pub finite_part: f64,
    pub divergence_verified: bool,
    pub method: CertificateMethod,
}

/// Controls for the sampled certificate of custom kernels.
#[derive(Debug, Clone, Copy)]
pub struct SampledCheck {
    pub escape_threshold: f64,
    pub max_halvings: usize,
}

impl Default for SampledCheck {
    fn default() -> Self {
        Self { escape_threshold: 1e6, max_halvings: 1000 }
    }
}

fn tight() -> QuadOptions {
    QuadOptions { abs_tol: 1e-15, rel_tol: 1e-12, max_intervals: 2000 }
}

impl Kernel {
    pub fn fractional(dim: usize, s: f64) -> Result<Self> {
        let norm = normalization_cns(dim, s)?;
        Ok(Self {
            family: Family::Fractional { s },
            dim,
            r0: f64::INFINITY,
            singularity_exponent: dim as f64 + 2.0 * s,
            norm,
        })
    }

    pub fn zeroth_indicator(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { family: Family::ZerothIndicator, dim, r0: 1.0, singularity_exponent: dim as f64, norm: 1.0 })
    }

    pub fn zeroth_log(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { family: Family::ZerothLog, dim, r0: 1.0, singularity_exponent: dim as f64, norm: 1.0 })
    }

    pub fn bessel(dim: usize, s: f64) -> Result<Self> {
        let norm = normalization_bessel(dim, s)?;
        Ok(Self {
            family: Family::Bessel { s },
            dim,
            r0: f64::INFINITY,
            singularity_exponent: dim as f64 + 2.0 * s,
            norm,
        })
    }

    pub fn custom(dim: usize, table: KernelTable) -> Result<Self> {
        check_dim(dim)?;
        let r0 = table.strict_radius();
        let alpha = -table.head_slope();
        Ok(Self { family: Family::Custom(table), dim, r0, singularity_exponent: alpha, norm: 1.0 })
    }

    /// Radius beyond which the kernel vanishes, if any.
    pub fn support_radius(&self) -> Option<f64> {
        match self.family {
            Family::ZerothIndicator | Family::ZerothLog => Some(1.0),
            _ => None,
        }
    }

    /// `k(r)` without the domain check; `r` must be positive.
    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        let n = self.dim as f64;
        match &self.family {
            Family::Fractional { s } => self.norm * r.powf(-n - 2.0 * s),
            Family::ZerothIndicator => {
                if r <= 1.0 {
                    r.powf(-n)
                } else {
                    0.0
                }
            }
            Family::ZerothLog => {
                if r <= 1.0 {
                    r.powf(-n) / (1.0 - r.ln())
                } else {
                    0.0
                }
            }
            Family::Bessel { s } => {
                let nu = (n + 2.0 * s) / 2.0;
                self.norm * r.powf(-nu) * bessel_k(nu, r)
            }
            Family::Custom(t) => t.eval(r),
        }
    }

    /// `k(r)` for `r > 0`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("kernel evaluated at r={r}")));
        }
        Ok(self.value(r))
    }

    fn breaks(&self) -> Vec<f64> {
        let mut b = vec![1.0];
        if self.r0.is_finite() {
            b.push(self.r0);
        }
        if let Family::Custom(t) = &self.family {
            b.push(t.r_min());
            b.push(t.r_max());
        }
        b
    }

    /// `∫_a^∞ k(r) r^{N-1} w(r) dr` with `w` bounded; custom kernels get the
    /// power-law tail beyond the table in closed form when `w ≡ 1` there.
    fn radial_tail(&self, a: f64, weight: impl Fn(f64) -> f64) -> f64 {
        let n = self.dim as f64;
        let f = |r: f64| self.value(r) * r.powf(n - 1.0) * weight(r);
        match self.support_radius() {
            Some(sup) => integrate(f, a, sup.max(a), &self.breaks(), tight()).value,
            None => integrate_to_infinity(f, a, &self.breaks(), tight()).value,
        }
    }

    /// Condition-(k) certificate; analytic for built-ins, sampled for tables.
    pub fn check_condition_k(&self) -> Result<ConditionKCertificate> {
        self.check_condition_k_with(SampledCheck::default())
    }

    pub fn check_condition_k_with(&self, opts: SampledCheck) -> Result<ConditionKCertificate> {
        let n = self.dim as f64;
        let finite_analytic = |finite_part: f64| ConditionKCertificate {
            finite_part,
            divergence_verified: true,
            method: CertificateMethod::Analytic,
        };
        match &self.family {
            // near 0: r^{1-2s}, integrable; tail r^{-1-2s}; ∫_0^1 r^{-1-2s} diverges
            Family::Fractional { s } => Ok(finite_analytic(self.norm * (1.0 / (2.0 - 2.0 * s) + 1.0 / (2.0 * s)))),
            // ∫_0^1 r^2 r^{-N} r^{N-1} = 1/2; ∫_0^1 r^{-1} = ∞
            Family::ZerothIndicator => Ok(finite_analytic(0.5)),
            // ∫_0^1 r^{-1}/(1-ln r) dr = [-ln(1-ln r)] = ∞
            Family::ZerothLog => {
                let fp = integrate(|r| r / (1.0 - r.ln()), 0.0, 1.0, &[], tight()).value;
                Ok(finite_analytic(fp))
            }
            // K_ν(r) ~ Γ(ν)2^{ν-1} r^{-ν}: same singularity as the fractional kernel, exponential tail
            Family::Bessel { .. } => {
                let head = integrate(|r| self.value(r) * r.powf(n + 1.0), 0.0, 1.0, &[], tight()).value;
                let tail = self.radial_tail(1.0, |_| 1.0);
                Ok(finite_analytic(head + tail))
            }
            Family::Custom(t) => self.sampled_certificate(t, opts),
        }
    }

    fn sampled_certificate(&self, t: &KernelTable, opts: SampledCheck) -> Result<ConditionKCertificate> {
        let n = self.dim as f64;
        let inner = |r: f64| self.value(r) * r.powf(n - 1.0);
        let with_sq = |r: f64| inner(r) * r * r;

        // ε-halving for both ∫_ε^1 k r^{N-1} (should escape) and ∫_ε^1 r² k r^{N-1} (should settle)
        let mut eps = 1.0;
        let mut partial = 0.0;
        let mut finite_head = 0.0;
        let mut prev_inc = f64::NAN;
        let mut flat_run = 0usize;
        let mut divergent = false;
        let mut head_settled = false;
        for _ in 0..opts.max_halvings {
            let lo = 0.5 * eps;
            let inc = integrate(inner, lo, eps, &[], tight()).value;
            let inc_sq = integrate(with_sq, lo, eps, &[], tight()).value;
            partial += inc;
            finite_head += inc_sq;
            if inc_sq <= 1e-15 * finite_head.abs().max(1e-300) {
                head_settled = true;
            }
            // log-type divergence: increments stop shrinking
            if prev_inc.is_finite() && inc >= prev_inc * (1.0 - 1e-9) {
                flat_run += 1;
            } else {
                flat_run = 0;
            }
            prev_inc = inc;
            if partial > opts.escape_threshold || (flat_run >= 20 && lo < t.r_min()) {
                divergent = true;
            }
            eps = lo;
            if divergent && head_settled {
                break;
            }
        }
        if !head_settled {
            return Err(Error::InvalidKernel("∫ min{1,r²} k(r) r^{N-1} dr does not settle near r = 0".into()));
        }
        let tail_slope = t.tail_slope();
        if tail_slope >= -n {
            return Err(Error::InvalidKernel(format!(
                "tail decays like r^{tail_slope:.3}, too slowly for a finite far-field mass"
            )));
        }
        let r_max = t.r_max().max(1.0);
        let mid = integrate(inner, 1.0, r_max, t.radii(), tight()).value;
        let tail = self.value(r_max) * r_max.powf(n) / (-tail_slope - n);
        Ok(ConditionKCertificate {
            finite_part: finite_head + mid + tail,
            divergence_verified: divergent,
            method: CertificateMethod::Sampled,
        })
    }

    /// `g(λ) = ∫_{y·e > λ} k(|y|) dy`.
    pub fn halfspace_mass(&self, lambda: f64) -> Result<Mass> {
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!("halfspace_mass needs λ ≥ 0, got {lambda}")));
        }
        if lambda == 0.0 {
            return Ok(Mass::Infinite);
        }
        let dim = self.dim;
        if let Family::Fractional { s } = self.family {
            // g(λ) = λ^{-2s} g(1); g(1) = c/(2s) ∫_0^1 A(v^{1/(2s)}) dv after u = 1/r, v = u^{2s}
            let p = 1.0 / (2.0 * s);
            let unit = integrate(|v: f64| cap_area(dim, v.powf(p)), 0.0, 1.0, &[], tight()).value;
            return Ok(Mass::Finite(self.norm * p * unit * lambda.powf(-2.0 * s)));
        }
        if let Some(sup) = self.support_radius() {
            if lambda >= sup {
                return Ok(Mass::Finite(0.0));
            }
        }
        let v = self.radial_tail(lambda, |r| cap_area(dim, lambda / r));
        Ok(Mass::Finite(v))
    }

    /// `|S^{N-1}| ∫_R^∞ k(r) r^{N-1} dr`, the mass of the complement of `B_R(0)` seen from 0.
    pub fn complement_ball_mass(&self, radius: f64) -> Result<f64> {
        if !(radius > 0.0) {
            return Err(Error::Domain(format!("complement_ball_mass needs R > 0, got {radius}")));
        }
        let n = self.dim as f64;
        let area = sphere_area(self.dim);
        let v = match &self.family {
            Family::Fractional { s } => area * self.norm * radius.powf(-2.0 * s) / (2.0 * s),
            Family::Custom(t) => {
                let slope = t.tail_slope();
                if slope >= -n {
                    return Err(Error::NumericOverflow("custom kernel tail mass diverges".into()));
                }
                let r_max = t.r_max().max(radius);
                let f = |r: f64| self.value(r) * r.powf(n - 1.0);
                let mid = integrate(f, radius, r_max, t.radii(), tight()).value;
                let tail = self.value(r_max) * r_max.powf(n) / (-slope - n);
                area * (mid + tail)
            }
            _ => area * self.radial_tail(radius, |_| 1.0),
        };
        if !v.is_finite() {
            return Err(Error::NumericOverflow(format!("complement mass at R={radius}")));
        }
        Ok(v)
    }
}
