//! Resolvent kernels and the Picard iteration for the mild solution.
//!
//! For a scalar generator lambda the two resolvent families are
//! K_a(t) = t^{alpha-1} E_{alpha,alpha}(lambda t^alpha) and
//! P_ab(t) = t^{gamma-1} E_{alpha,gamma}(lambda t^alpha). They are available
//! in closed form and through the Wright-function representation, which
//! serve as cross-checks of each other.
//!
//! The Picard map works window by window. On an evolution window
//! [s_i, t_{i+1}] with x = t - s_i,
//!
//! u(t) = P_ab(x) c_i + int_{s_i}^t K_a(t - s) F(s) ds,
//!
//! with c_0 = u0 - g(u) and c_i = xi_i(s_i, u(s_i)) - g(u). On an impulse
//! window (t_i, s_i] the value solves u = xi_i(t, u) pointwise. Trajectories
//! are stored weighted by x^{1-gamma} so the blow-up at s_i stays finite.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fracops::{
    cell_weights, frac_integral, graded_nodes, uniform_nodes, FracOrder, PsiFunction, SampledFunction, MIN_EXPONENT_GAP,
};
use crate::model::{kernel_sup_integrals, validate, Fn2, Generator, ImpulseMap, KernelSups, ProblemSpec};
use crate::specfun::{gamma_fn, mittag_leffler, WrightTable};
use crate::trajectory::{Segment, WeightedTrajectory, WindowKind};

/// Largest |lambda| T^alpha accepted, the validated Mittag-Leffler range.
pub const MAX_SCALED_LAMBDA: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMethod {
    ClosedFormMl,
    WrightQuadrature,
}

impl KernelMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "closed_form" | "ml" => Ok(Self::ClosedFormMl),
            "wright" => Ok(Self::WrightQuadrature),
            _ => Err(Error::Invalid(format!("unknown kernel method {s:?} (closed_form, wright)"))),
        }
    }
}

/// The resolvent families of a generator on (0, T].
#[derive(Debug, Clone)]
pub struct ResolventKernels {
    pub order: FracOrder,
    pub generator: Generator,
    pub horizon: f64,
    pub method: KernelMethod,
    /// Cells of the graded mesh used for the outer integral of the Wright route.
    pub wright_cells: usize,
    table: Option<WrightTable>,
}

pub fn resolvent_kernels(
    order: FracOrder,
    generator: &Generator,
    horizon: f64,
    method: KernelMethod,
) -> Result<ResolventKernels> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Invalid(format!("horizon {horizon} must be positive")));
    }
    for l in generator.eigenvalues() {
        let z = l.abs() * horizon.powf(order.alpha);
        if z > MAX_SCALED_LAMBDA {
            return Err(Error::Domain(format!("|lambda| T^alpha = {z:.3} exceeds {MAX_SCALED_LAMBDA} for lambda = {l}")));
        }
    }
    let table = match method {
        KernelMethod::WrightQuadrature if order.alpha < 1.0 => Some(WrightTable::new(order.alpha)?),
        _ => None,
    };
    Ok(ResolventKernels { order, generator: generator.clone(), horizon, method, wright_cells: 2048, table })
}

fn ml(alpha: f64, beta: f64, z: f64) -> Result<f64> {
    Ok(mittag_leffler(alpha, beta, z)?.value)
}

impl ResolventKernels {
    fn check_t(&self, t: f64) -> Result<()> {
        if !(t > 0.0 && t <= self.horizon * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("t = {t} outside (0, {}]", self.horizon)));
        }
        Ok(())
    }

    /// G(t) = E_{alpha,alpha}(lambda t^alpha) through int alpha theta M(theta) e^{lambda t^alpha theta}.
    fn wright_core(&self, lambda: f64, t: f64) -> f64 {
        let a = self.order.alpha;
        match &self.table {
            Some(table) => {
                let z = lambda * t.powf(a);
                table.integrate(|th| a * th * (z * th).exp())
            }
            None => (lambda * t).exp(),
        }
    }

    /// K_a(t) for one eigenvalue.
    pub fn k_a_eig(&self, lambda: f64, t: f64) -> Result<f64> {
        self.check_t(t)?;
        let a = self.order.alpha;
        match self.method {
            KernelMethod::ClosedFormMl => Ok(t.powf(a - 1.0) * ml(a, a, lambda * t.powf(a))?),
            KernelMethod::WrightQuadrature => Ok(t.powf(a - 1.0) * self.wright_core(lambda, t)),
        }
    }

    /// P_ab(t) for one eigenvalue.
    pub fn p_ab_eig(&self, lambda: f64, t: f64) -> Result<f64> {
        self.check_t(t)?;
        let FracOrder { alpha: a, gamma: g, .. } = self.order;
        match self.method {
            KernelMethod::ClosedFormMl => Ok(t.powf(g - 1.0) * ml(a, g, lambda * t.powf(a))?),
            KernelMethod::WrightQuadrature => {
                let outer = self.order.outer_order();
                if outer == 0.0 {
                    return self.k_a_eig(lambda, t);
                }
                // P = I^{beta(1-alpha)} K with K = s^{alpha-1} G(s)
                let nodes = graded_nodes(0.0, t, self.wright_cells, 3.0);
                let values = nodes.iter().map(|&s| self.wright_core(lambda, s)).collect();
                let k = SampledFunction::with_singularity(nodes, values, a - 1.0)?;
                frac_integral(&PsiFunction::Identity, outer, &k, t)
            }
        }
    }

    pub fn k_a(&self, t: f64) -> Result<DMatrix<f64>> {
        self.apply(|l| self.k_a_eig(l, t))
    }

    pub fn p_ab(&self, t: f64) -> Result<DMatrix<f64>> {
        self.apply(|l| self.p_ab_eig(l, t))
    }

    fn apply(&self, f: impl Fn(f64) -> Result<f64>) -> Result<DMatrix<f64>> {
        match &self.generator {
            Generator::Scalar(l) => Ok(DMatrix::from_element(1, 1, f(*l)?)),
            Generator::Matrix(m) => m.try_apply_fn(f),
        }
    }
}

/// The contraction constant of the Picard map in the delta-norm: the
/// maximum over windows of M (L_xi^delta + L~^delta) plus the Lipschitz
/// contributions of f over the window length (L_xi = 0 on the first window).
pub fn contraction_lambda(spec: &ProblemSpec) -> Result<f64> {
    let m = spec.bound_m()?;
    let sups = kernel_sup_integrals(spec, 256)?;
    Ok(contraction_lambda_with(spec, m, &sups))
}

pub fn contraction_lambda_with(spec: &ProblemSpec, m: f64, sups: &KernelSups) -> f64 {
    let d = spec.delta;
    let a = spec.order.alpha;
    let [l1, l2, l3] = spec.nonlin.lipschitz;
    let lg = spec.impulses.nonlocal.lipschitz().powf(d);
    let mut lambda: f64 = 0.0;
    for i in 0..=spec.mesh.m() {
        let len = spec.mesh.t[i] - spec.mesh.s[i];
        let lxi = if i == 0 { 0.0 } else { spec.impulses.maps[i - 1].lipschitz.powf(d) };
        let f_part =
            l1.powf(d) * len.powf(d) + l2.powf(d) * len.powf(a * d) * sups.f1 / a + l3.powf(d) * len.powf(a * d) * sups.f2 / a;
        lambda = lambda.max(m * (lxi + lg) + m * f_part);
    }
    lambda
}

/// Outcome of [`picard_solve`].
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub trajectory: WeightedTrajectory,
    pub iterations: usize,
    /// ||u_{n+1} - u_n||_delta after each sweep.
    pub residual_history: Vec<f64>,
    pub lambda_value: f64,
    pub converged: bool,
}

impl SolveReport {
    /// Largest ratio r_{n+1}/r_n among the last `count` ratios whose
    /// residuals both exceed `floor`; None when there are none.
    pub fn tail_ratio(&self, count: usize, floor: f64) -> Option<f64> {
        let r: Vec<f64> = self.residual_history.iter().copied().take_while(|&x| x > floor).collect();
        let ratios: Vec<f64> = r.windows(2).map(|w| w[1] / w[0]).collect();
        let tail = &ratios[ratios.len().saturating_sub(count)..];
        tail.iter().copied().reduce(f64::max)
    }
}

/// Precomputed weights for one evolution window.
struct Evolution {
    /// x^{1-gamma} P_ab(x) at the nodes.
    p: Vec<f64>,
    /// Weighted image of a constant weighted forcing: Gamma(gamma) x^alpha E_{alpha,alpha+gamma}(lambda x^alpha).
    a: Vec<f64>,
    /// Same for a weighted forcing x^alpha: Gamma(gamma+alpha) x^{2 alpha} E_{alpha,2 alpha+gamma}(lambda x^alpha).
    b: Vec<f64>,
    /// Same for a weighted forcing x^{1-gamma} (a constant unweighted forcing):
    /// x^{alpha+1-gamma} E_{alpha,alpha+1}(lambda x^alpha). Absent when 1 - gamma is close to 0 or alpha.
    edge: Option<Vec<f64>>,
    /// Toeplitz product-integration weights for the remainder, left and right node.
    tl: Vec<f64>,
    tr: Vec<f64>,
}

struct Grid {
    kind: WindowKind,
    index: usize,
    left: f64,
    nodes: Vec<f64>,
    weight_exponent: f64,
    /// Cell weights for integrals of u over this window (exact in the weight).
    ql: Vec<f64>,
    qr: Vec<f64>,
    evo: Option<Evolution>,
}

impl Grid {
    fn x(&self, k: usize) -> f64 {
        self.nodes[k] - self.left
    }

    fn value(&self, k: usize, weighted: f64) -> f64 {
        if self.weight_exponent == 0.0 {
            weighted
        } else {
            weighted * self.x(k).powf(-self.weight_exponent)
        }
    }
}

fn singular_cell_weights(nodes: &[f64], left: f64, q: f64) -> (Vec<f64>, Vec<f64>) {
    let n = nodes.len() - 1;
    let mut ql = Vec::with_capacity(n);
    let mut qr = Vec::with_capacity(n);
    for j in 0..n {
        let (x0, x1) = (nodes[j] - left, nodes[j + 1] - left);
        let h = x1 - x0;
        let i0 = (x1.powf(q) - x0.powf(q)) / q;
        let i1 = (x1.powf(q + 1.0) - x0.powf(q + 1.0)) / (q + 1.0);
        let r = (i1 - x0 * i0) / h;
        ql.push(i0 - r);
        qr.push(r);
    }
    (ql, qr)
}

fn build_grids(spec: &ProblemSpec, lambda: f64, n: usize) -> Result<Vec<Grid>> {
    let FracOrder { alpha: a, gamma: g, .. } = spec.order;
    let mut grids = Vec::new();
    for w in spec.mesh.windows() {
        let nodes = uniform_nodes(w.start, w.end, n);
        match w.kind {
            WindowKind::Impulse => {
                let (ql, qr) = singular_cell_weights(&nodes, w.start, 1.0);
                grids.push(Grid { kind: w.kind, index: w.index, left: w.start, nodes, weight_exponent: 0.0, ql, qr, evo: None });
            }
            WindowKind::Evolution => {
                let h = (w.end - w.start) / n as f64;
                let (ql, qr) = singular_cell_weights(&nodes, w.start, g);
                let gg = gamma_fn(g)?;
                let gga = gamma_fn(g + a)?;
                let mut p = Vec::with_capacity(n + 1);
                let mut av = Vec::with_capacity(n + 1);
                let mut bv = Vec::with_capacity(n + 1);
                let mut e = Vec::with_capacity(n + 1);
                for k in 0..=n {
                    let x = k as f64 * h;
                    let z = lambda * x.powf(a);
                    p.push(ml(a, g, z)?);
                    av.push(if k == 0 { 0.0 } else { gg * x.powf(a) * ml(a, a + g, z)? });
                    bv.push(if k == 0 { 0.0 } else { gga * x.powf(2.0 * a) * ml(a, 2.0 * a + g, z)? });
                    e.push(ml(a, a, z)?);
                }
                let q = 1.0 - g;
                let edge = if n >= 2 && q >= MIN_EXPONENT_GAP && (q - a).abs() >= MIN_EXPONENT_GAP {
                    let img = (0..=n)
                        .map(|k| {
                            let x = k as f64 * h;
                            if k == 0 {
                                Ok(0.0)
                            } else {
                                Ok(x.powf(a + q) * ml(a, a + 1.0, lambda * x.powf(a))?)
                            }
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    Some(img)
                } else {
                    None
                };
                let mut tl = vec![0.0; n + 1];
                let mut tr = vec![0.0; n + 1];
                for m in 1..=n {
                    let (wl, wr) = cell_weights(m as f64 * h, (m - 1) as f64 * h, h, a);
                    tl[m] = wl * e[m];
                    tr[m] = wr * e[m - 1];
                }
                grids.push(Grid {
                    kind: w.kind,
                    index: w.index,
                    left: w.start,
                    nodes,
                    weight_exponent: 1.0 - g,
                    ql,
                    qr,
                    evo: Some(Evolution { p, a: av, b: bv, edge, tl, tr }),
                });
            }
        }
    }
    Ok(grids)
}

/// Solves u = xi(t, u) by damped fixed-point iteration.
fn impulse_value(map: &ImpulseMap, t: f64) -> Result<f64> {
    let mut z = map.eval(t, 0.0);
    for _ in 0..10_000 {
        let next = 0.5 * z + 0.5 * map.eval(t, z);
        if !next.is_finite() {
            break;
        }
        if (next - z).abs() <= 1e-15 * (1.0 + z.abs()) {
            return Ok(next);
        }
        z = next;
    }
    Err(Error::PointwiseImpulse(format!("{}: u = xi(t, u) has no stable fixed point at t = {t}", map.label)))
}

/// int_0^{s} kernel(s, sigma) u(sigma) dsigma at every evolution node s.
fn volterra(kernel: &Fn2, grids: &[Grid], y: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = grids.iter().map(|g| vec![0.0; g.nodes.len()]).collect();
    for (w, grid) in grids.iter().enumerate() {
        if grid.kind != WindowKind::Evolution {
            continue;
        }
        for (k, &s) in grid.nodes.iter().enumerate() {
            let mut acc = 0.0;
            for (v, src) in grids.iter().enumerate().take(w + 1) {
                let cells = if v == w { k } else { src.nodes.len() - 1 };
                let z = &y[v];
                for j in 0..cells {
                    acc += src.ql[j] * kernel(s, src.nodes[j]) * z[j] + src.qr[j] * kernel(s, src.nodes[j + 1]) * z[j + 1];
                }
            }
            out[w][k] = acc;
        }
    }
    out
}

/// (Tu)(t) and (Vu)(t) at every node of every window of `u`, with the
/// quadrature the solver uses (entries on impulse windows are zero).
pub fn volterra_terms(spec: &ProblemSpec, u: &WeightedTrajectory) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let grids: Vec<Grid> = u
        .segments
        .iter()
        .map(|seg| {
            let q = if seg.kind == WindowKind::Evolution { u.gamma } else { 1.0 };
            let (ql, qr) = singular_cell_weights(&seg.nodes, seg.left, q);
            Grid {
                kind: seg.kind,
                index: seg.index,
                left: seg.left,
                nodes: seg.nodes.clone(),
                weight_exponent: seg.weight_exponent,
                ql,
                qr,
                evo: None,
            }
        })
        .collect();
    let y: Vec<Vec<f64>> = u.segments.iter().map(|s| s.weighted.clone()).collect();
    let zeros = || grids.iter().map(|g| vec![0.0; g.nodes.len()]).collect::<Vec<_>>();
    let tu = if spec.kernels.zero[0] { zeros() } else { volterra(&spec.kernels.k, &grids, &y) };
    let vu = if spec.kernels.zero[1] { zeros() } else { volterra(&spec.kernels.h, &grids, &y) };
    (tu, vu)
}

fn to_trajectory(gamma: f64, grids: &[Grid], y: &[Vec<f64>]) -> WeightedTrajectory {
    WeightedTrajectory {
        gamma,
        segments: grids
            .iter()
            .zip(y)
            .map(|(g, v)| Segment {
                kind: g.kind,
                index: g.index,
                left: g.left,
                nodes: g.nodes.clone(),
                weighted: v.clone(),
                weight_exponent: g.weight_exponent,
            })
            .collect(),
    }
}

/// Updates at most this many ulps of the largest weighted value count as converged.
const ROUNDOFF_ULPS: f64 = 16.0;

/// Picard iteration for the mild solution on a uniform grid of `n_grid`
/// cells per window. Stops when ||u_{n+1} - u_n||_delta <= tol or when the
/// update is down to roundoff; after `max_iter` sweeps the report is
/// returned with `converged = false`.
pub fn picard_solve(spec: &ProblemSpec, n_grid: usize, tol: f64, max_iter: usize) -> Result<SolveReport> {
    let lambda = spec.scalar_lambda()?;
    let report = validate(spec);
    if !report.passed() {
        return Err(Error::Invalid(report.to_string()));
    }
    if n_grid < 8 {
        return Err(Error::Grid(format!("need at least 8 cells per window, got {n_grid}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Invalid(format!("tolerance {tol} must be positive")));
    }
    let z_max = lambda.abs() * spec.horizon().powf(spec.order.alpha);
    if z_max > MAX_SCALED_LAMBDA {
        return Err(Error::Domain(format!("|lambda| T^alpha = {z_max:.3} exceeds {MAX_SCALED_LAMBDA}")));
    }
    let lambda_value = contraction_lambda(spec)?;
    if lambda_value >= 1.0 {
        log::warn!("contraction constant {lambda_value:.4} >= 1; Picard convergence is not guaranteed");
    }

    let gamma = spec.order.gamma;
    let grids = build_grids(spec, lambda, n_grid)?;
    let u0 = spec.u0[0];
    let start = u0 / gamma_fn(gamma)?;
    let mut y: Vec<Vec<f64>> = Vec::with_capacity(grids.len());
    for g in &grids {
        match g.kind {
            WindowKind::Evolution => y.push(vec![start; g.nodes.len()]),
            WindowKind::Impulse => {
                let map = &spec.impulses.maps[g.index - 1];
                y.push(g.nodes.iter().map(|&t| impulse_value(map, t)).collect::<Result<_>>()?);
            }
        }
    }

    let need_t = !spec.kernels.zero[0] && spec.nonlin.uses_volterra[0];
    let need_v = !spec.kernels.zero[1] && spec.nonlin.uses_volterra[1];
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let traj = to_trajectory(gamma, &grids, &y);
        let g_val = spec.impulses.nonlocal.eval(|t| traj.value_at(t).unwrap_or(f64::NAN));
        let tu = if need_t { Some(volterra(&spec.kernels.k, &grids, &y)) } else { None };
        let vu = if need_v { Some(volterra(&spec.kernels.h, &grids, &y)) } else { None };
        let mut next = y.clone();
        for (w, grid) in grids.iter().enumerate() {
            let Some(evo) = &grid.evo else { continue };
            let i = grid.index;
            let c = if i == 0 {
                u0 - g_val
            } else if w > 0 && grids[w - 1].kind == WindowKind::Impulse {
                let prev = &y[w - 1];
                prev[prev.len() - 1] - g_val
            } else {
                let pg = &grids[w - 1];
                let last = pg.nodes.len() - 1;
                let left_limit = pg.value(last, y[w - 1][last]);
                spec.impulses.maps[i - 1].eval(grid.left, left_limit) - g_val
            };
            next[w] = evolution_sweep(spec, grid, evo, &y[w], c, w, tu.as_ref(), vu.as_ref());
        }
        let diff = y.iter().zip(&next).flat_map(|(a, b)| a.iter().zip(b).map(|(x, z)| (x - z).abs())).fold(0.0_f64, f64::max);
        let scale = next.iter().flatten().fold(1.0_f64, |m, v| m.max(v.abs()));
        let r = diff.powf(spec.delta);
        y = next;
        history.push(r);
        if !r.is_finite() {
            return Err(Error::Convergence(format!("Picard iterates diverged after {} sweeps", history.len())));
        }
        // |.|^delta of a roundoff-sized update can stay above tol when delta < 1
        if r <= tol || diff <= ROUNDOFF_ULPS * f64::EPSILON * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("Picard iteration stopped after {max_iter} sweeps without reaching tol = {tol:e}");
    }
    Ok(SolveReport {
        trajectory: to_trajectory(gamma, &grids, &y),
        iterations: history.len(),
        residual_history: history,
        lambda_value,
        converged,
    })
}

/// New weighted values on one evolution window.
#[allow(clippy::too_many_arguments)]
fn evolution_sweep(
    spec: &ProblemSpec,
    grid: &Grid,
    evo: &Evolution,
    y: &[f64],
    c: f64,
    w: usize,
    tu: Option<&Vec<Vec<f64>>>,
    vu: Option<&Vec<Vec<f64>>>,
) -> Vec<f64> {
    let n = grid.nodes.len() - 1;
    let q = grid.weight_exponent;
    let x2 = |k: usize| tu.map_or(0.0, |v| v[w][k]);
    let x3 = |k: usize| vu.map_or(0.0, |v| v[w][k]);
    let h = grid.x(1);
    // weighted forcing phi = x^{1-gamma} F, with its limit at x = 0 taken at a tiny offset
    let phi0 = if q == 0.0 {
        spec.nonlin.eval(grid.left, y[0], x2(0), x3(0))
    } else {
        let eps = 1e-8 * h;
        eps.powf(q) * spec.nonlin.eval(grid.left + eps, y[0] * eps.powf(-q), x2(0), x3(0))
    };
    let phi: Vec<f64> =
        (1..=n).map(|k| grid.x(k).powf(q) * spec.nonlin.eval(grid.nodes[k], grid.value(k, y[k]), x2(k), x3(k))).collect();
    // phi ~ phi0 + phi1 x^alpha (+ phi2 x^{1-gamma}) near x = 0; these terms are integrated exactly
    let a = spec.order.alpha;
    let (phi0, phi1, phi2) = match &evo.edge {
        None => (phi0, (phi[0] - phi0) / h.powf(a), 0.0),
        Some(_) => {
            let eps = 1e-8 * h;
            let xs = [eps, h, 2.0 * h];
            let m = DMatrix::from_fn(3, 3, |i, j| [1.0, xs[i].powf(a), xs[i].powf(q)][j]);
            let rhs = nalgebra::DVector::from_vec(vec![phi0, phi[0], phi[1]]);
            match m.lu().solve(&rhs) {
                Some(c) if c.iter().all(|v| v.is_finite()) => (c[0], c[1], c[2]),
                _ => (phi0, (phi[0] - phi0) / h.powf(a), 0.0),
            }
        }
    };
    let mut rho = vec![0.0; n + 1];
    for k in 1..=n {
        let x = grid.x(k);
        rho[k] = (phi[k - 1] - phi0 - phi1 * x.powf(a) - phi2 * x.powf(q)) * x.powf(-q);
    }
    let mut out = vec![0.0; n + 1];
    out[0] = evo.p[0] * c;
    for k in 1..=n {
        let mut acc = 0.0;
        for j in 0..k {
            acc += evo.tl[k - j] * rho[j] + evo.tr[k - j] * rho[j + 1];
        }
        let edge = evo.edge.as_ref().map_or(0.0, |e| phi2 * e[k]);
        out[k] = evo.p[k] * c + phi0 * evo.a[k] + phi1 * evo.b[k] + edge + grid.x(k).powf(q) * acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ImpulseMaps, ImpulseMesh, Nonlinearity, Nonlocal};
    use std::sync::Arc;

    fn order(a: f64, b: f64) -> FracOrder {
        FracOrder::new(a, b).unwrap()
    }

    #[test]
    fn kernels_at_zero_lambda_are_powers() {
        let o = order(0.5, 0.5);
        let rk = resolvent_kernels(o, &Generator::Scalar(0.0), 1.0, KernelMethod::ClosedFormMl).unwrap();
        let t: f64 = 0.3;
        let k = rk.k_a_eig(0.0, t).unwrap();
        assert!((k - t.powf(-0.5) / gamma_fn(0.5).unwrap()).abs() < 1e-13);
        let p = rk.p_ab_eig(0.0, t).unwrap();
        assert!((p - t.powf(o.gamma - 1.0) / gamma_fn(o.gamma).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn wright_route_matches_closed_form() {
        let o = order(0.7, 0.5);
        let g = Generator::Scalar(-1.0);
        let cf = resolvent_kernels(o, &g, 1.0, KernelMethod::ClosedFormMl).unwrap();
        let wr = resolvent_kernels(o, &g, 1.0, KernelMethod::WrightQuadrature).unwrap();
        for t in [0.05, 0.5, 1.0] {
            let (a, b) = (cf.k_a_eig(-1.0, t).unwrap(), wr.k_a_eig(-1.0, t).unwrap());
            assert!((a - b).abs() <= 1e-7 * a.abs(), "K at {t}: {a} vs {b}");
            let (a, b) = (cf.p_ab_eig(-1.0, t).unwrap(), wr.p_ab_eig(-1.0, t).unwrap());
            assert!((a - b).abs() <= 1e-5 * a.abs(), "P at {t}: {a} vs {b}");
        }
    }

    #[test]
    fn matrix_kernels_are_diagonal_for_diagonal_generators() {
        let g = Generator::matrix(vec![vec![-1.0, 0.0], vec![0.0, 0.5]]).unwrap();
        let rk = resolvent_kernels(order(0.6, 0.3), &g, 1.0, KernelMethod::ClosedFormMl).unwrap();
        let m = rk.p_ab(0.4).unwrap();
        assert!((m[(0, 0)] - rk.p_ab_eig(-1.0, 0.4).unwrap()).abs() < 1e-12);
        assert!((m[(1, 1)] - rk.p_ab_eig(0.5, 0.4).unwrap()).abs() < 1e-12);
        assert!(m[(0, 1)].abs() < 1e-12 && m[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn large_lambda_is_refused() {
        let r = resolvent_kernels(order(0.5, 0.0), &Generator::Scalar(-100.0), 1.0, KernelMethod::ClosedFormMl);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn lambda_examples() {
        let mut spec = ProblemSpec::linear(order(0.5, 0.0), 0.0, 1.0, 1.0);
        spec.nonlin = Nonlinearity::new(Arc::new(|_, u, _, _| 0.1 * u), [0.1, 0.0, 0.0]);
        assert!((contraction_lambda(&spec).unwrap() - 0.1).abs() < 1e-15);
        spec.nonlin = Nonlinearity::zero();
        spec.impulses.nonlocal =
            Nonlocal::PointEval { at: 1.0, map: Arc::new(|u| 0.04 * u), lipschitz: 0.04, label: "0.04*u".into() };
        spec.delta = 0.5;
        assert!((contraction_lambda(&spec).unwrap() - 0.2).abs() < 1e-15);
    }

    fn exact_linear(o: FracOrder, lambda: f64, t: f64) -> f64 {
        t.powf(o.gamma - 1.0) * ml(o.alpha, o.gamma, lambda * t.powf(o.alpha)).unwrap()
    }

    #[test]
    fn generator_path_is_exact() {
        let o = order(0.6, 0.4);
        let spec = ProblemSpec::linear(o, -1.0, 1.0, 1.0);
        let rep = picard_solve(&spec, 64, 1e-12, 50).unwrap();
        assert!(rep.converged);
        let seg = &rep.trajectory.segments[0];
        for k in 1..seg.nodes.len() {
            let (u, e) = (seg.value(k), exact_linear(o, -1.0, seg.nodes[k]));
            assert!((u - e).abs() <= 1e-12 * e.abs(), "{u} vs {e}");
        }
    }

    #[test]
    fn nonlinearity_path_converges_to_linear_solution() {
        let o = order(0.5, 0.5);
        let mut spec = ProblemSpec::linear(o, 0.0, 1.0, 1.0);
        spec.nonlin = Nonlinearity::new(Arc::new(|_, u, _, _| -u), [1.0, 0.0, 0.0]);
        let mut errs = Vec::new();
        for n in [128, 256, 512] {
            let rep = picard_solve(&spec, n, 1e-13, 200).unwrap();
            assert!(rep.converged);
            let seg = &rep.trajectory.segments[0];
            let err = (1..seg.nodes.len())
                .map(|k| ((seg.value(k) - exact_linear(o, -1.0, seg.nodes[k])) / exact_linear(o, -1.0, seg.nodes[k])).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[2] < errs[1] && errs[1] < errs[0], "{errs:?}");
        assert!(errs[2] < 1e-3, "{errs:?}");
    }

    #[test]
    fn classical_limit_is_exponential() {
        let mut spec = ProblemSpec::linear(order(1.0, 1.0), 0.0, 1.0, 1.0);
        spec.nonlin = Nonlinearity::new(Arc::new(|_, u, _, _| 0.5 * u), [0.5, 0.0, 0.0]);
        let rep = picard_solve(&spec, 1024, 1e-14, 100).unwrap();
        let seg = &rep.trajectory.segments[0];
        let last = seg.nodes.len() - 1;
        assert!((seg.value(last) - 0.5f64.exp()).abs() < 1e-6);
    }

    #[test]
    fn impulses_reset_the_state() {
        let mut spec = ProblemSpec::linear(order(0.8, 1.0), 0.0, 1.0, 1.0);
        spec.mesh = ImpulseMesh::new(1.0, vec![0.4, 1.0], vec![0.0, 0.6]);
        spec.impulses =
            ImpulseMaps { maps: vec![ImpulseMap::new(Arc::new(|_, u| 0.5 * u + 1.0), 0.5)], nonlocal: Nonlocal::Zero };
        let rep = picard_solve(&spec, 32, 1e-12, 50).unwrap();
        assert!(rep.converged);
        // fixed point of u = u/2 + 1 on the impulse window, then constant (gamma = 1, lambda = 0)
        for seg in &rep.trajectory.segments[1..] {
            for v in seg.values() {
                assert!((v - 2.0).abs() < 1e-12, "{v}");
            }
        }
    }

    #[test]
    fn stalled_impulse_is_reported() {
        let map = ImpulseMap::new(Arc::new(|_, u| 3.0 * u + 1.0), 3.0);
        assert!(matches!(impulse_value(&map, 0.5), Err(Error::PointwiseImpulse(_))));
    }

    #[test]
    fn residuals_decrease_geometrically() {
        let mut spec = ProblemSpec::linear(order(0.5, 0.5), -0.5, 1.0, 1.0);
        spec.nonlin = Nonlinearity::new(Arc::new(|t, u, _, _| 0.2 * u.sin() + t), [0.2, 0.0, 0.0]);
        spec.impulses.nonlocal =
            Nonlocal::PointEval { at: 1.0, map: Arc::new(|u| 0.1 * u), lipschitz: 0.1, label: "0.1*u".into() };
        let rep = picard_solve(&spec, 64, 1e-12, 100).unwrap();
        assert!(rep.converged);
        let ratio = rep.tail_ratio(3, 1e-14).unwrap();
        assert!(ratio <= rep.lambda_value + 0.1, "{ratio} vs {}", rep.lambda_value);
    }
}
