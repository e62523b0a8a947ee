//! Residuals of approximate solutions and generalized delta-Ulam-Hyers-Rassias
//! certificates.
//!
//! A candidate v is measured against the problem on every window: on
//! evolution windows through |D^{a,b} v - lambda v - F(t, v, Tv, Vv)| with the
//! Hilfer derivative taken from the window's left end, on impulse windows
//! through |v - xi_i(t, v)|. Deviations |v - u| are compared in the weighted
//! PC_{1-gamma} sense, so the blow-up at each s_i cancels.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fracops::{hilfer_derivative_grid, SampledFunction};
use crate::model::{kernel_sup_integrals, ImpulseMap, PhiData, PhiShape, ProblemSpec};
use crate::solver::volterra_terms;
use crate::specfun::{gamma_fn, mittag_leffler};
use crate::trajectory::{WeightedTrajectory, WindowKind};

/// Nodes skipped at the left end of each evolution window, where the
/// numerical Hilfer derivative is dominated by the t^{gamma-1} singularity.
pub const SKIPPED_LEFT_NODES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSample {
    /// Position of the segment in the trajectory.
    pub segment: usize,
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualProfile {
    pub evolution: Vec<ResidualSample>,
    pub impulse: Vec<ResidualSample>,
    /// Largest residual relative to (varphi, phi) when supplied, else the raw sup.
    pub eps_fit: f64,
}

impl ResidualProfile {
    pub fn max_evolution(&self) -> f64 {
        self.evolution.iter().map(|s| s.value).fold(0.0, f64::max)
    }

    pub fn max_impulse(&self) -> f64 {
        self.impulse.iter().map(|s| s.value).fold(0.0, f64::max)
    }

    pub fn max(&self) -> f64 {
        self.max_evolution().max(self.max_impulse())
    }
}

fn check_layout(spec: &ProblemSpec, v: &WeightedTrajectory) -> Result<()> {
    let windows = spec.mesh.windows();
    let ok = windows.len() == v.segments.len()
        && windows.iter().zip(&v.segments).all(|(w, s)| {
            w.kind == s.kind
                && w.index == s.index
                && s.left == w.start
                && s.nodes.len() >= 2
                && s.nodes[0] == w.start
                && s.right() == w.end
        });
    if !ok {
        return Err(Error::Grid("trajectory windows do not match the problem mesh".into()));
    }
    Ok(())
}

pub fn residual_profile(spec: &ProblemSpec, v: &WeightedTrajectory, phidata: Option<&PhiData>) -> Result<ResidualProfile> {
    let lambda = spec.scalar_lambda()?;
    check_layout(spec, v)?;
    let (tv, vv) = volterra_terms(spec, v);
    let mut evolution = Vec::new();
    let mut impulse = Vec::new();
    for (w, seg) in v.segments.iter().enumerate() {
        match seg.kind {
            WindowKind::Evolution => {
                let sf = SampledFunction::with_singularity(seg.nodes.clone(), seg.weighted.clone(), -seg.weight_exponent)?;
                let d = hilfer_derivative_grid(&spec.order, &sf)?;
                for k in SKIPPED_LEFT_NODES.max(1)..seg.nodes.len() {
                    let t = seg.nodes[k];
                    let u = seg.value(k);
                    let r = d[k] - lambda * u - spec.nonlin.eval(t, u, tv[w][k], vv[w][k]);
                    evolution.push(ResidualSample { segment: w, t, value: r.abs() });
                }
            }
            WindowKind::Impulse => {
                let map = &spec.impulses.maps[seg.index - 1];
                for k in 1..seg.nodes.len() {
                    let t = seg.nodes[k];
                    let u = seg.value(k);
                    impulse.push(ResidualSample { segment: w, t, value: (u - map.eval(t, u)).abs() });
                }
            }
        }
    }
    let eps_fit = match phidata {
        Some(pd) => {
            let e = evolution.iter().map(|s| s.value / pd.varphi(s.t));
            let i = impulse.iter().filter(|_| pd.phi > 0.0).map(|s| s.value / pd.phi);
            e.chain(i).fold(0.0, f64::max)
        }
        None => evolution.iter().chain(&impulse).map(|s| s.value).fold(0.0, f64::max),
    };
    Ok(ResidualProfile { evolution, impulse, eps_fit })
}

/// Scalar ingredients of the stability constant.
#[derive(Debug, Clone, PartialEq)]
pub struct UhrInputs {
    pub m: f64,
    pub l_tilde: f64,
    /// max_i L_{xi_i} (zero without impulses).
    pub l_xi: f64,
    /// max of the three Lipschitz constants of f.
    pub l_f: f64,
    pub c_varphi: f64,
    /// F*_3 + F*_1 + F*_2.
    pub sup_sum: f64,
    pub alpha: f64,
    pub delta: f64,
    /// t_1, ..., t_{m+1}.
    pub t_ends: Vec<f64>,
}

impl UhrInputs {
    pub fn from_spec(spec: &ProblemSpec, phidata: &PhiData) -> Result<Self> {
        let sups = kernel_sup_integrals(spec, 256)?;
        let [a, b, c] = spec.nonlin.lipschitz;
        Ok(Self {
            m: spec.bound_m()?,
            l_tilde: spec.impulses.nonlocal.lipschitz(),
            l_xi: spec.impulses.max_lipschitz(),
            l_f: a.max(b).max(c),
            c_varphi: phidata.c_varphi,
            sup_sum: sups.f3 + sups.f1 + sups.f2,
            alpha: spec.order.alpha,
            delta: spec.delta,
            t_ends: spec.mesh.t.clone(),
        })
    }
}

/// The three pieces of the constant: per evolution window, the impulse
/// windows, and the first window.
#[derive(Debug, Clone, PartialEq)]
pub struct UhrTerms {
    pub windows: Vec<f64>,
    pub impulse: f64,
    pub initial: f64,
}

impl UhrTerms {
    pub fn total(&self) -> f64 {
        self.windows.iter().copied().fold(0.0, f64::max) + self.impulse + self.initial
    }
}

pub fn uhr_terms(inp: &UhrInputs) -> Result<UhrTerms> {
    let UhrInputs { m, l_tilde, l_xi, l_f, c_varphi: c, sup_sum, alpha: a, delta: d, .. } = *inp;
    let ga = gamma_fn(a)?;
    let e_alpha = |l: f64, t: f64| -> Result<f64> { Ok(mittag_leffler(a, 1.0, m * l * sup_sum * ga * t.powf(a))?.value) };
    let mut windows = Vec::with_capacity(inp.t_ends.len());
    for (k, &t_next) in inp.t_ends.iter().enumerate() {
        let e = e_alpha(l_f, t_next)?;
        let growth = 1.0 + m * l_xi * e;
        let inner = m * l_tilde * e * growth.powi(k.saturating_sub(1) as i32) + growth.powi(k as i32);
        let term = (m * (1.0 + c) * inner * e).powf(d);
        log::debug!("stability constant: window {k} term {term:.6e} (E = {e:.6e})");
        windows.push(term);
    }
    let denom = 1.0 - m * l_tilde.powf(d) - m * l_xi.powf(d);
    if !(denom > 0.0) {
        return Err(Error::Domain(format!("1 - M L~^delta - M L_xi^delta = {denom:.6e} must be positive")));
    }
    let impulse = m / denom;
    let t1 = inp.t_ends[0];
    let initial = m * (m + l_tilde) * c * (e_alpha(l_xi, t1)? + 1.0) * e_alpha(l_f, t1)?;
    log::debug!("stability constant: impulse term {impulse:.6e}, first-window term {initial:.6e}");
    Ok(UhrTerms { windows, impulse, initial })
}

/// The constant C with |v - u|^delta <= C (phi^delta + varphi(t)^delta).
pub fn uhr_constant(spec: &ProblemSpec, phidata: &PhiData) -> Result<f64> {
    Ok(uhr_terms(&UhrInputs::from_spec(spec, phidata)?)?.total())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCertificate {
    pub c: f64,
    pub nodes: Vec<f64>,
    /// |(t - s_i)^{1-gamma} (v - u)|^delta at the nodes.
    pub observed: Vec<f64>,
    /// C (phi^delta + varphi(t)^delta) at the nodes.
    pub bound: Vec<f64>,
    pub verdict: bool,
    /// min over nodes of bound - observed.
    pub slack: f64,
    /// The check holds on the sampled nodes only.
    pub grid_verified: bool,
}

/// Tolerance added to the bound at every node.
pub const VERDICT_SLACK: f64 = 1e-9;

/// Certifies |v - u|^delta <= C (phi^delta + varphi(t)^delta) on the grid.
///
/// v must solve the residual inequalities for (varphi, phi); residuals are
/// allowed the discretization noise of u itself (twice its residual sup)
/// plus 1e-9, otherwise the certificate would be vacuous and a
/// `Precondition` error is returned.
pub fn certify_uhr(
    spec: &ProblemSpec,
    u: &WeightedTrajectory,
    v: &WeightedTrajectory,
    phidata: &PhiData,
) -> Result<StabilityCertificate> {
    if !u.same_layout(v) {
        return Err(Error::Grid("u and v are sampled on different grids".into()));
    }
    let noise = 2.0 * residual_profile(spec, u, None)?.max() + 1e-9;
    let rv = residual_profile(spec, v, None)?;
    for s in &rv.evolution {
        let allowed = phidata.varphi(s.t) + noise;
        if s.value > allowed {
            return Err(Error::Precondition(format!(
                "evolution residual {:.6e} at t = {} exceeds varphi(t) + noise = {allowed:.6e}",
                s.value, s.t
            )));
        }
    }
    for s in &rv.impulse {
        let allowed = phidata.phi + noise;
        if s.value > allowed {
            return Err(Error::Precondition(format!(
                "impulse residual {:.6e} at t = {} exceeds phi + noise = {allowed:.6e}",
                s.value, s.t
            )));
        }
    }
    let c = uhr_constant(spec, phidata)?;
    let d = spec.delta;
    let mut nodes = Vec::new();
    let mut observed = Vec::new();
    let mut bound = Vec::new();
    for (a, b) in u.segments.iter().zip(&v.segments) {
        for k in 0..a.nodes.len() {
            let t = a.nodes[k];
            nodes.push(t);
            observed.push((b.weighted[k] - a.weighted[k]).abs().powf(d));
            bound.push(c * (phidata.phi.powf(d) + phidata.varphi(t).powf(d)));
        }
    }
    let slack = bound.iter().zip(&observed).map(|(b, o)| b - o).fold(f64::INFINITY, f64::min);
    let verdict = observed.iter().zip(&bound).all(|(o, b)| *o <= b + VERDICT_SLACK);
    Ok(StabilityCertificate { c, nodes, observed, bound, verdict, slack, grid_verified: true })
}

/// Delta-Ulam-Hyers check: the Rassias certificate with constant varphi = eps, phi = eps.
pub fn certify_uh(spec: &ProblemSpec, u: &WeightedTrajectory, v: &WeightedTrajectory, eps: f64) -> Result<StabilityCertificate> {
    let pd = PhiData::new(Arc::new(move |_| eps), eps, spec.horizon(), spec.horizon())?;
    certify_uhr(spec, u, v, &pd)
}

/// The problem whose solution is the constructed perturbation: forcing
/// eps varphi(t) added to f and phi added to every impulse map.
pub fn perturbed_spec(spec: &ProblemSpec, eps: f64, shape: PhiShape, phi_imp: f64) -> ProblemSpec {
    let phi = shape.function();
    let mut out = spec.clone();
    out.nonlin = spec.nonlin.with_forcing(Arc::new(move |t| eps * phi(t)));
    out.impulses.maps = spec
        .impulses
        .maps
        .iter()
        .map(|m| {
            let inner = m.map.clone();
            let mut shifted = ImpulseMap::new(Arc::new(move |t, u| inner(t, u) + phi_imp), m.lipschitz);
            shifted.label = format!("{} + {phi_imp}", m.label);
            shifted
        })
        .collect();
    out
}

/// The (varphi, phi) data matching [`perturbed_spec`].
pub fn perturbation_phidata(spec: &ProblemSpec, eps: f64, shape: PhiShape, phi_imp: f64) -> Result<PhiData> {
    let phi = shape.function();
    let horizon = spec.horizon();
    PhiData::new(Arc::new(move |t| eps * phi(t)), phi_imp, shape.c_varphi(horizon), horizon)
}
