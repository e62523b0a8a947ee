//! Grid-based psi-Riemann-Liouville integrals and Hilfer derivatives.
//!
//! Functions are sampled on strictly increasing nodes and interpolated
//! piecewise linearly in the variable w = Psi(s). The weakly singular weight
//! (Psi(t) - Psi(s))^{alpha-1} is integrated exactly on every cell (product
//! integration). A sampled function may carry an explicit algebraic factor
//! (Psi(s) - Psi(s_0))^mu; that factor is handled analytically so that
//! weighted trajectories with a t^{gamma-1} blow-up integrate accurately.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::par;
use crate::specfun::{gamma_fn, recip_gamma};

/// Shared real callable.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Which relation between (alpha, beta) and gamma to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaConvention {
    /// gamma = alpha + beta (1 - alpha), the usual Hilfer type parameter.
    #[default]
    Standard,
    /// gamma = alpha + beta (alpha - 1), kept only to demonstrate that it
    /// breaks the kernel identities.
    Printed,
}

/// Order triple of a Hilfer operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracOrder {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl FracOrder {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        Self::with_convention(alpha, beta, GammaConvention::Standard)
    }

    pub fn with_convention(alpha: f64, beta: f64, conv: GammaConvention) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Invalid(format!("alpha = {alpha} outside (0, 1]")));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Invalid(format!("beta = {beta} outside [0, 1]")));
        }
        let gamma = match conv {
            GammaConvention::Standard => alpha + beta * (1.0 - alpha),
            GammaConvention::Printed => alpha + beta * (alpha - 1.0),
        };
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Invalid(format!("gamma = {gamma} outside (0, 1] for alpha = {alpha}, beta = {beta}")));
        }
        Ok(Self { alpha, beta, gamma })
    }

    /// Order (1 - beta)(1 - alpha) of the inner integral.
    pub fn inner_order(&self) -> f64 {
        (1.0 - self.beta) * (1.0 - self.alpha)
    }

    /// Order beta (1 - alpha) of the outer integral.
    pub fn outer_order(&self) -> f64 {
        self.beta * (1.0 - self.alpha)
    }
}

/// The increasing function Psi defining the integral.
#[derive(Clone, Default)]
pub enum PsiFunction {
    #[default]
    Identity,
    /// Psi(t) = ln t (Hadamard type); requires t > 0.
    Log,
    Custom {
        eval: ScalarFn,
        deriv: ScalarFn,
    },
}

impl fmt::Debug for PsiFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "Identity"),
            Self::Log => write!(f, "Log"),
            Self::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl PsiFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Identity => t,
            Self::Log => t.ln(),
            Self::Custom { eval, .. } => eval(t),
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::Log => 1.0 / t,
            Self::Custom { deriv, .. } => deriv(t),
        }
    }

    /// Checks Psi' > 0 (and finiteness) at every node.
    pub fn check(&self, nodes: &[f64]) -> Result<()> {
        for &s in nodes {
            let d = self.deriv(s);
            if !(d > 0.0) || !d.is_finite() || !self.eval(s).is_finite() {
                return Err(Error::Singularity(format!("psi'({s}) = {d} is not positive and finite")));
            }
        }
        Ok(())
    }
}

/// Uniform nodes a, a + h, ..., b (n cells).
pub fn uniform_nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / n as f64;
    let mut v: Vec<f64> = (0..=n).map(|j| a + h * j as f64).collect();
    v[n] = b;
    v
}

/// Nodes clustered at a: a + (b - a)(j/n)^r.
pub fn graded_nodes(a: f64, b: f64, n: usize, r: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..=n).map(|j| a + (b - a) * (j as f64 / n as f64).powf(r)).collect();
    v[n] = b;
    v
}

/// Samples u(s_j) = (Psi(s_j) - Psi(s_0))^mu * values[j]; mu = 0 gives plain samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub singular_exponent: f64,
}

impl SampledFunction {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::with_singularity(nodes, values, 0.0)
    }

    /// `values` hold the regular factor multiplying (Psi(s) - Psi(s_0))^mu.
    pub fn with_singularity(nodes: Vec<f64>, values: Vec<f64>, mu: f64) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Grid("a sampled function needs at least two nodes".into()));
        }
        if nodes.len() != values.len() {
            return Err(Error::Grid(format!("{} nodes but {} values", nodes.len(), values.len())));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("nodes must be strictly increasing".into()));
        }
        if !(mu > -1.0) {
            return Err(Error::Invalid(format!("singular exponent {mu} must exceed -1")));
        }
        Ok(Self { nodes, values, singular_exponent: mu })
    }

    pub fn from_fn(nodes: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = nodes.iter().map(|&s| f(s)).collect();
        Self::new(nodes, values)
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        *self.nodes.last().expect("non-empty")
    }

    fn check_inside(&self, t: f64) -> Result<()> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(Error::Domain(format!("t = {t} outside the sampled span [{}, {}]", self.start(), self.end())));
        }
        Ok(())
    }
}

/// Index j with nodes[j] <= t < nodes[j+1] (last cell for t = end).
fn locate(nodes: &[f64], t: f64) -> usize {
    let n = nodes.len();
    match nodes.binary_search_by(|x| x.partial_cmp(&t).expect("finite nodes")) {
        Ok(j) => j.min(n - 2),
        Err(j) => j.saturating_sub(1).min(n - 2),
    }
}

/// Product-integration weights of cell [w_j, w_j + h] against (W - w)^{p-1}
/// for a linear interpolant, returned as (weight at left, weight at right).
/// `d0 = W - w_j`, `d1 = max(W - w_{j+1}, 0)`. Not divided by Gamma(p).
///
/// Thin cells far from W (graded meshes) would cancel catastrophically in
/// the closed form, so they use the binomial series of (1 - r tau)^{p-1}.
#[inline]
pub(crate) fn cell_weights(d0: f64, d1: f64, h: f64, p: f64) -> (f64, f64) {
    let w = d0 - d1;
    let r = w / d0;
    if r <= 0.25 {
        let q = p - 1.0;
        let (mut c, mut rk) = (1.0, 1.0);
        let (mut s0, mut s1) = (1.0, 0.5);
        for k in 1..80 {
            let kf = k as f64;
            c *= (kf - 1.0 - q) / kf;
            rk *= r;
            let t0 = c * rk / (kf + 1.0);
            s0 += t0;
            s1 += c * rk / (kf + 2.0);
            if t0.abs() <= 1e-17 * s0.abs() {
                break;
            }
        }
        let scale = w * d0.powf(q);
        let a = scale * s0;
        let right = scale * s1 * w / h;
        return (a - right, right);
    }
    let a = (d0.powf(p) - d1.powf(p)) / p;
    let b = (d0.powf(p + 1.0) - d1.powf(p + 1.0)) / (p + 1.0);
    let right = (d0 * a - b) / h;
    (a - right, right)
}

/// Integral of (W - w)^{p-1} over a cell, not divided by Gamma(p).
#[inline]
pub(crate) fn cell_mass(d0: f64, d1: f64, p: f64) -> f64 {
    -d0.powf(p) * (p * (-(d0 - d1) / d0).ln_1p()).exp_m1() / p
}

/// Product trapezoid over the remainder values q (q[0] contributes as given),
/// in w-coordinates, of the integral up to W (which may fall inside a cell).
fn product_trapezoid(w: &[f64], q: &[f64], big_w: f64, p: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..w.len() - 1 {
        if w[j] >= big_w {
            break;
        }
        let h = w[j + 1] - w[j];
        let d0 = big_w - w[j];
        let d1 = (big_w - w[j + 1]).max(0.0);
        let (wl, wr) = cell_weights(d0, d1, h, p);
        acc += wl * q[j] + wr * q[j + 1];
    }
    acc
}

/// Prepared data for repeated integrals of one sampled function.
struct Prepared {
    w: Vec<f64>,
    /// Remainder (Psi - Psi_0)^mu (r - r_0), zero at the first node.
    remainder: Vec<f64>,
    r0: f64,
    mu: f64,
}

impl Prepared {
    fn new(psi: &PsiFunction, u: &SampledFunction) -> Result<Self> {
        psi.check(&u.nodes)?;
        let w: Vec<f64> = u.nodes.iter().map(|&s| psi.eval(s)).collect();
        if w.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::Singularity("psi is not increasing on the nodes".into()));
        }
        let mu = u.singular_exponent;
        let r0 = u.values[0];
        let remainder = if mu == 0.0 {
            u.values.iter().map(|v| v - r0).collect()
        } else {
            w.iter()
                .zip(&u.values)
                .enumerate()
                .map(|(j, (wj, v))| if j == 0 { 0.0 } else { (wj - w[0]).powf(mu) * (v - r0) })
                .collect()
        };
        Ok(Self { w, remainder, r0, mu })
    }

    /// Integral of order p > 0 at W = Psi(t).
    fn integral(&self, big_w: f64, p: f64) -> f64 {
        let x = big_w - self.w[0];
        let singular = if self.r0 == 0.0 {
            0.0
        } else if x == 0.0 {
            if (self.mu + p).abs() < 1e-14 {
                self.r0 * gamma_fn(self.mu + 1.0).unwrap_or(f64::NAN)
            } else if self.mu + p > 0.0 {
                0.0
            } else {
                f64::INFINITY * self.r0.signum()
            }
        } else {
            self.r0 * gamma_ratio(self.mu + 1.0, self.mu + 1.0 + p) * x.powf(self.mu + p)
        };
        singular + product_trapezoid(&self.w, &self.remainder, big_w, p) * recip_gamma(p)
    }
}

/// Gamma(a) / Gamma(b) without intermediate overflow.
fn gamma_ratio(a: f64, b: f64) -> f64 {
    match (gamma_fn(a), gamma_fn(b)) {
        (Ok(ga), Ok(gb)) => ga / gb,
        _ => recip_gamma(b) / recip_gamma(a),
    }
}

/// Linear interpolation of the (unweighted) function at t.
pub fn interpolate(psi: &PsiFunction, u: &SampledFunction, t: f64) -> Result<f64> {
    u.check_inside(t)?;
    let j = locate(&u.nodes, t);
    let w0 = psi.eval(u.nodes[0]);
    let wt = psi.eval(t);
    let (wa, wb) = (psi.eval(u.nodes[j]), psi.eval(u.nodes[j + 1]));
    let theta = (wt - wa) / (wb - wa);
    let r = u.values[j] + theta * (u.values[j + 1] - u.values[j]);
    if u.singular_exponent == 0.0 {
        Ok(r)
    } else {
        Ok((wt - w0).powf(u.singular_exponent) * r)
    }
}

/// (1/Gamma(alpha)) int_{s_0}^t Psi'(s)(Psi(t) - Psi(s))^{alpha-1} u(s) ds.
///
/// Order zero returns the interpolated value of u.
pub fn frac_integral(psi: &PsiFunction, alpha: f64, u: &SampledFunction, t: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::Invalid(format!("integral order {alpha} must be nonnegative")));
    }
    u.check_inside(t)?;
    if alpha == 0.0 {
        return interpolate(psi, u, t);
    }
    let prep = Prepared::new(psi, u)?;
    Ok(prep.integral(psi.eval(t), alpha))
}

/// [`frac_integral`] at every node of `u`.
pub fn frac_integral_grid(psi: &PsiFunction, alpha: f64, u: &SampledFunction) -> Result<Vec<f64>> {
    if !(alpha >= 0.0) {
        return Err(Error::Invalid(format!("integral order {alpha} must be nonnegative")));
    }
    if alpha == 0.0 {
        return u.nodes.iter().map(|&t| interpolate(psi, u, t)).collect();
    }
    let prep = Prepared::new(psi, u)?;
    Ok(par::map_range(u.nodes.len(), |k| prep.integral(prep.w[k], alpha)))
}

/// Hilfer derivative D^{alpha,beta} = I^{beta(1-alpha)} d/dt I^{(1-beta)(1-alpha)}
/// with Psi = identity, at a point t inside the span of u.
///
/// The inner integral is split into the exact image of the algebraic
/// factor and a sampled remainder. The remainder's derivative is taken
/// cellwise from its piecewise-linear interpolant and fed to the outer
/// integral by product integration; for beta = 0 (no outer integral)
/// second-order finite differences are used.
pub fn hilfer_derivative(order: &FracOrder, u: &SampledFunction, t: f64) -> Result<f64> {
    let hd = HilferGrid::new(order, u)?;
    if !(t > u.start() && t <= u.end()) {
        return Err(Error::Domain(format!("t = {t} must lie in ({}, {}]", u.start(), u.end())));
    }
    Ok(hd.at(t))
}

/// [`hilfer_derivative`] at every node after the first.
pub fn hilfer_derivative_grid(order: &FracOrder, u: &SampledFunction) -> Result<Vec<f64>> {
    let hd = HilferGrid::new(order, u)?;
    let n = u.nodes.len();
    let mut out = par::map_range(n - 1, |k| hd.at(u.nodes[k + 1]));
    out.insert(0, f64::NAN);
    Ok(out)
}

/// Fitted exponents closer than this are dropped to keep the fit well conditioned.
pub(crate) const MIN_EXPONENT_GAP: f64 = 0.1;

/// Coefficients c with values[j] - r0 = sum_i c_i x_j^{exps_i} at nodes 1..=exps.len().
fn fit_powers(nodes: &[f64], values: &[f64], r0: f64, exps: &[f64]) -> Vec<f64> {
    let k = exps.len();
    if nodes.len() <= k {
        return vec![0.0; k];
    }
    let a = DMatrix::from_fn(k, k, |j, i| (nodes[j + 1] - nodes[0]).powf(exps[i]));
    let b = DVector::from_fn(k, |j, _| values[j + 1] - r0);
    match a.lu().solve(&b) {
        Some(c) if c.iter().all(|v| v.is_finite()) => c.iter().copied().collect(),
        _ => vec![0.0; k],
    }
}

struct HilferGrid<'a> {
    nodes: &'a [f64],
    p2: f64,
    /// Coefficient and exponent of the exact singular part of the derivative.
    sing_coef: f64,
    sing_exp: f64,
    /// Exact images (coefficient, exponent) of the fitted terms c_j x^{mu + e_j}.
    extra: Vec<(f64, f64)>,
    /// Sampled remainder of the inner integral.
    inner: Vec<f64>,
    /// Derivative of the remainder at the nodes (beta = 0 only).
    inner_deriv: Vec<f64>,
}

impl<'a> HilferGrid<'a> {
    fn new(order: &FracOrder, u: &'a SampledFunction) -> Result<Self> {
        let n = u.nodes.len();
        if n < 8 {
            return Err(Error::Grid(format!("Hilfer derivative needs at least 8 nodes, got {n}")));
        }
        let p1 = order.inner_order();
        let p2 = order.outer_order();
        let mu = u.singular_exponent;
        let r0 = u.values[0];
        let mut prep = Prepared::new(&PsiFunction::Identity, u)?;
        // Regular factors behave like r0 + r1 x^alpha + r2 x^{2 alpha} near the
        // left end, plus x^{alpha - mu} when the forcing is nonzero there
        // (u ~ x^alpha). These terms are differentiated exactly, fitted at the
        // first nodes after the left end.
        let a = order.alpha;
        let mut exps = vec![a, 2.0 * a];
        if exps.iter().all(|&e| (e - (a - mu)).abs() >= MIN_EXPONENT_GAP) {
            exps.push(a - mu);
        }
        let coefs = fit_powers(&u.nodes, &u.values, r0, &exps);
        for (j, rem) in prep.remainder.iter_mut().enumerate().skip(1) {
            let x = u.nodes[j] - u.nodes[0];
            *rem -= exps.iter().zip(&coefs).map(|(e, c)| c * x.powf(mu + e)).sum::<f64>();
        }
        // D^{alpha,beta} x^nu = Gamma(nu + 1) / Gamma(nu + 1 - alpha) x^{nu - alpha}
        let extra = exps
            .iter()
            .zip(&coefs)
            .map(|(e, c)| {
                let nu = mu + e;
                // x^{gamma - 1} is annihilated
                let k = if (nu - (order.gamma - 1.0)).abs() < 1e-14 { 0.0 } else { gamma_ratio(nu + 1.0, nu + 1.0 - a) };
                (c * k, nu - a)
            })
            .collect();
        // remainder of the inner integral (its algebraic part handled exactly)
        let inner: Vec<f64> = if p1 == 0.0 {
            prep.remainder.clone()
        } else {
            par::map_range(n, |k| product_trapezoid(&prep.w, &prep.remainder, prep.w[k], p1) * recip_gamma(p1))
        };
        // d/dt of r0 Gamma(mu+1)/Gamma(mu+1+p1) x^{nu} followed by I^{p2}
        let nu = mu + p1;
        let (sing_coef, sing_exp) = if r0 == 0.0 || nu.abs() < 1e-14 {
            (0.0, 0.0)
        } else {
            (r0 * gamma_ratio(mu + 1.0, mu + 1.0 - order.alpha), mu - order.alpha)
        };
        let inner_deriv = if p2 == 0.0 { node_derivative(u.nodes.as_slice(), &inner) } else { Vec::new() };
        Ok(Self { nodes: &u.nodes, p2, sing_coef, sing_exp, extra, inner, inner_deriv })
    }

    fn at(&self, t: f64) -> f64 {
        let x = t - self.nodes[0];
        let mut singular = if self.sing_coef == 0.0 { 0.0 } else { self.sing_coef * x.powf(self.sing_exp) };
        for &(c, e) in &self.extra {
            if c != 0.0 {
                singular += c * x.powf(e);
            }
        }
        let regular = if self.p2 == 0.0 {
            let j = locate(self.nodes, t);
            let th = (t - self.nodes[j]) / (self.nodes[j + 1] - self.nodes[j]);
            self.inner_deriv[j] + th * (self.inner_deriv[j + 1] - self.inner_deriv[j])
        } else {
            let mut acc = 0.0;
            for j in 0..self.nodes.len() - 1 {
                if self.nodes[j] >= t {
                    break;
                }
                let h = self.nodes[j + 1] - self.nodes[j];
                let slope = (self.inner[j + 1] - self.inner[j]) / h;
                let d0 = t - self.nodes[j];
                let d1 = (t - self.nodes[j + 1]).max(0.0);
                acc += slope * cell_mass(d0, d1, self.p2);
            }
            acc * recip_gamma(self.p2)
        };
        singular + regular
    }
}

/// Second-order derivative of sampled values on a nonuniform grid.
pub fn node_derivative(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    let three_point = |x0: f64, x1: f64, x2: f64, y0: f64, y1: f64, y2: f64, at: f64| {
        // derivative of the quadratic through three points, evaluated at `at`
        let l0 = (2.0 * at - x1 - x2) / ((x0 - x1) * (x0 - x2));
        let l1 = (2.0 * at - x0 - x2) / ((x1 - x0) * (x1 - x2));
        let l2 = (2.0 * at - x0 - x1) / ((x2 - x0) * (x2 - x1));
        l0 * y0 + l1 * y1 + l2 * y2
    };
    for k in 0..n {
        let (a, b, c) = if k == 0 {
            (0, 1, 2)
        } else if k == n - 1 {
            (n - 3, n - 2, n - 1)
        } else {
            (k - 1, k, k + 1)
        };
        d[k] = three_point(x[a], x[b], x[c], y[a], y[b], y[c], x[k]);
    }
    d
}

/// |x|^delta of the largest magnitude sample.
pub fn delta_sup(values: &[f64], delta: f64) -> f64 {
    values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).powf(delta)
}
