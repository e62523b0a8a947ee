//! Impulsive Gronwall-type bounds with a Psi-fractional kernel, and a
//! numerical dominance check against the extremal trajectory.
//!
//! Hypothesis, for t >= a:
//!
//! u(t) <= v(t) + delta u(t) + g(t) int_a^t Psi'(s)(Psi(t)-Psi(s))^{alpha-1} u(s) ds
//!         + sum_{a<t_k<t} beta_k u(t_k^-)
//!
//! with v, g nonnegative and nondecreasing.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var};
use crate::fracops::{uniform_nodes, PsiFunction, ScalarFn};
use crate::par;
use crate::specfun::{gamma_fn, mittag_leffler};

#[derive(Clone, Debug)]
pub struct GronwallInstance {
    pub psi: PsiFunction,
    pub alpha: f64,
    pub a: f64,
    pub horizon: f64,
    pub v: Labeled,
    pub g: Labeled,
    pub delta: f64,
    pub impulse_times: Vec<f64>,
    pub betas: Vec<f64>,
}

/// A real function with a printable description.
#[derive(Clone)]
pub struct Labeled {
    pub f: ScalarFn,
    pub label: String,
}

impl std::fmt::Debug for Labeled {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label)
    }
}

impl Labeled {
    pub fn new(f: ScalarFn, label: impl Into<String>) -> Self {
        Self { f, label: label.into() }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(Arc::new(move |_| c), format!("{c}"))
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }
}

/// Which closed-form bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundForm {
    /// v [delta E prod_{i<k}(1 + beta_i E_i) + prod_{i<=k}(1 + beta_i E_i)] E.
    #[default]
    Published,
    /// Divide the hypothesis by (1 - delta) and apply the delta = 0 bound
    /// to v/(1-delta), g/(1-delta), beta/(1-delta).
    Absorbed,
}

impl BoundForm {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "published" => Ok(Self::Published),
            "absorbed" => Ok(Self::Absorbed),
            _ => Err(Error::Invalid(format!("unknown bound form {s:?} (published, absorbed)"))),
        }
    }
}

impl GronwallInstance {
    /// Constant v and g, identity Psi, no impulses.
    pub fn simple(alpha: f64, a: f64, horizon: f64, v: f64, g: f64) -> Self {
        Self {
            psi: PsiFunction::Identity,
            alpha,
            a,
            horizon,
            v: Labeled::constant(v),
            g: Labeled::constant(g),
            delta: 0.0,
            impulse_times: Vec::new(),
            betas: Vec::new(),
        }
    }

    /// Structural and sampled checks of the instance invariants.
    pub fn check(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Invalid(format!("alpha = {} outside (0, 1]", self.alpha)));
        }
        if !(self.horizon > self.a) {
            return Err(Error::Invalid(format!("horizon {} must exceed a = {}", self.horizon, self.a)));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::Invalid(format!("delta = {} must be nonnegative", self.delta)));
        }
        if self.impulse_times.len() != self.betas.len() {
            return Err(Error::Invalid("one beta per impulse time is required".into()));
        }
        if self.betas.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::Invalid("impulse coefficients beta_k must be positive".into()));
        }
        let mut prev = self.a;
        for &tk in &self.impulse_times {
            if !(tk > prev && tk < self.horizon) {
                return Err(Error::Invalid(format!(
                    "impulse times must increase strictly inside ({}, {})",
                    self.a, self.horizon
                )));
            }
            prev = tk;
        }
        self.psi.check(&uniform_nodes(self.a.max(f64::MIN_POSITIVE), self.horizon, 64))?;
        let nodes = uniform_nodes(self.a, self.horizon, 512);
        let mut last_g = f64::NEG_INFINITY;
        for &t in &nodes {
            let (v, g) = (self.v.eval(t), self.g.eval(t));
            if !(v >= 0.0) || !(g >= 0.0) {
                return Err(Error::Invalid(format!("v and g must be nonnegative; at t = {t}: v = {v}, g = {g}")));
            }
            if g < last_g * (1.0 - 1e-12) {
                return Err(Error::Invalid(format!("g must be nondecreasing; it drops near t = {t}")));
            }
            last_g = g;
        }
        Ok(())
    }

    fn psi_tilde(&self, g: f64, x: f64) -> f64 {
        g * gamma_fn(self.alpha).expect("alpha > 0") * (self.psi.eval(x) - self.psi.eval(self.a)).powf(self.alpha)
    }

    fn e_alpha(&self, z: f64) -> Result<f64> {
        Ok(mittag_leffler(self.alpha, 1.0, z)?.value)
    }
}

fn check_point(inst: &GronwallInstance, t: f64) -> Result<()> {
    if !(t > inst.a) {
        return Err(Error::Domain(format!("bound requested at t = {t} <= a = {}", inst.a)));
    }
    if !(inst.delta < 1.0) {
        return Err(Error::Domain(format!("delta = {} >= 1 cannot be absorbed", inst.delta)));
    }
    Ok(())
}

/// The published bound at t with k = #{t_i < t}.
pub fn gronwall_bound(inst: &GronwallInstance, t: f64) -> Result<f64> {
    gronwall_bound_form(inst, t, BoundForm::Published)
}

pub fn gronwall_bound_form(inst: &GronwallInstance, t: f64, form: BoundForm) -> Result<f64> {
    check_point(inst, t)?;
    let scale = match form {
        BoundForm::Published => 1.0,
        BoundForm::Absorbed => 1.0 / (1.0 - inst.delta),
    };
    let v = inst.v.eval(t) * scale;
    let g = inst.g.eval(t) * scale;
    let e = inst.e_alpha(inst.psi_tilde(g, t))?;
    let k = inst.impulse_times.iter().filter(|&&ti| ti < t).count();
    let mut prod_before_last = 1.0;
    let mut prod = 1.0;
    for i in 0..k {
        let ei = inst.e_alpha(inst.psi_tilde(g, inst.impulse_times[i]))?;
        let factor = 1.0 + inst.betas[i] * scale * ei;
        if i + 1 < k {
            prod_before_last *= factor;
        }
        prod *= factor;
    }
    Ok(match form {
        BoundForm::Published => v * (inst.delta * e * prod_before_last + prod) * e,
        BoundForm::Absorbed => v * prod * e,
    })
}

/// u(t) <= v(t) E_alpha(g(t) Gamma(alpha) (Psi(t) - Psi(a))^alpha); requires
/// delta = 0 and no impulses.
pub fn gronwall_bound_simple(inst: &GronwallInstance, t: f64) -> Result<f64> {
    check_point(inst, t)?;
    if inst.delta != 0.0 || !inst.impulse_times.is_empty() {
        return Err(Error::Domain("the simple bound needs delta = 0 and no impulses".into()));
    }
    Ok(inst.v.eval(t) * inst.e_alpha(inst.psi_tilde(inst.g.eval(t), t))?)
}

/// How the extremal trajectory is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OracleRule {
    /// u held at its left node value on each cell. For nondecreasing
    /// extremals this stays below the exact solution at every node.
    #[default]
    LowerStep,
    /// Piecewise-linear u (product trapezoid); second order but without a sign guarantee.
    Trapezoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    pub nodes: Vec<f64>,
    pub u_tilde: Vec<f64>,
    pub bound: Vec<f64>,
    /// max over nodes t > a of u_tilde - bound.
    pub margin: f64,
    /// max over nodes t > a of (u_tilde - bound) / (1 + |bound|).
    pub worst_relative: f64,
}

impl DominanceReport {
    /// Dominance within the relative slack 1e-9 (1 + |bound|).
    pub fn dominated(&self) -> bool {
        self.worst_relative <= 1e-9
    }
}

/// Grid with `n` uniform cells in w = Psi(t) plus the impulse times.
fn oracle_grid(inst: &GronwallInstance, n: usize) -> Vec<f64> {
    let mut nodes = uniform_nodes(inst.a, inst.horizon, n);
    nodes.extend(inst.impulse_times.iter().copied());
    nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    nodes.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));
    nodes
}

/// Builds the extremal u~ (hypothesis with equality) by forward
/// substitution and compares it with the bound at every node.
pub fn verify_dominance(inst: &GronwallInstance, n_grid: usize, form: BoundForm) -> Result<DominanceReport> {
    verify_dominance_with(inst, n_grid, form, OracleRule::default())
}

pub fn verify_dominance_with(
    inst: &GronwallInstance,
    n_grid: usize,
    form: BoundForm,
    rule: OracleRule,
) -> Result<DominanceReport> {
    inst.check()?;
    if !(inst.delta < 1.0) {
        return Err(Error::Domain(format!("delta = {} >= 1", inst.delta)));
    }
    let nodes = oracle_grid(inst, n_grid);
    let n = nodes.len();
    let w: Vec<f64> = nodes.iter().map(|&t| inst.psi.eval(t)).collect();
    let alpha = inst.alpha;
    let mut u = vec![0.0; n];
    let mut powers = vec![0.0; n];
    // index of each impulse time in the grid
    let impulse_idx: Vec<usize> = inst
        .impulse_times
        .iter()
        .map(|&tk| nodes.iter().position(|&x| (x - tk).abs() <= 1e-14 * (1.0 + tk.abs())).expect("inserted"))
        .collect();
    for k in 0..n {
        let vk = inst.v.eval(nodes[k]);
        let gk = inst.g.eval(nodes[k]);
        let jumps: f64 = impulse_idx.iter().zip(&inst.betas).filter(|(&idx, _)| idx < k).map(|(&idx, b)| b * u[idx]).sum();
        let mut explicit = 0.0;
        let mut diag = 0.0;
        if k > 0 {
            for j in 0..=k {
                powers[j] = (w[k] - w[j]).powf(alpha);
            }
            for j in 0..k {
                let mass = (powers[j] - powers[j + 1]) / alpha;
                match rule {
                    OracleRule::LowerStep => explicit += mass * u[j],
                    OracleRule::Trapezoid => {
                        let h = w[j + 1] - w[j];
                        let b = ((w[k] - w[j]).powf(alpha + 1.0) - (w[k] - w[j + 1]).powf(alpha + 1.0)) / (alpha + 1.0);
                        let right = ((w[k] - w[j]) * mass - b) / h;
                        explicit += (mass - right) * u[j];
                        if j + 1 == k {
                            diag = right;
                        } else {
                            explicit += right * u[j + 1];
                        }
                    }
                }
            }
        }
        let denom = 1.0 - inst.delta - gk * diag;
        if !(denom > 0.0) {
            return Err(Error::Convergence(format!("implicit step at t = {} is not solvable", nodes[k])));
        }
        u[k] = (vk + gk * explicit + jumps) / denom;
        if !u[k].is_finite() {
            return Err(Error::Convergence(format!("extremal trajectory overflows at t = {}", nodes[k])));
        }
    }
    let mut bound = vec![f64::NAN; n];
    let mut margin = f64::NEG_INFINITY;
    let mut worst = f64::NEG_INFINITY;
    for k in 1..n {
        let b = gronwall_bound_form(inst, nodes[k], form)?;
        bound[k] = b;
        margin = margin.max(u[k] - b);
        worst = worst.max((u[k] - b) / (1.0 + b.abs()));
    }
    Ok(DominanceReport { nodes, u_tilde: u, bound, margin, worst_relative: worst })
}

/// Random nonnegative nondecreasing function on [a, b]: a step function or a
/// polynomial with nonnegative coefficients in (t - a).
fn random_monotone(rng: &mut ChaCha8Rng, a: f64, b: f64, scale: f64) -> Labeled {
    let c0 = rng.gen_range(0.0..scale);
    if rng.gen_bool(0.5) {
        let jumps: Vec<(f64, f64)> =
            (0..rng.gen_range(1..=3)).map(|_| (rng.gen_range(a..b), rng.gen_range(0.0..scale))).collect();
        let label = format!("step(c0={c0:.4}, jumps={})", jumps.len());
        Labeled::new(Arc::new(move |t| c0 + jumps.iter().filter(|(tau, _)| t >= *tau).map(|(_, c)| c).sum::<f64>()), label)
    } else {
        let c1 = rng.gen_range(0.0..scale);
        let c2 = rng.gen_range(0.0..scale);
        let label = format!("{c0:.4} + {c1:.4}(t-a) + {c2:.4}(t-a)^2");
        Labeled::new(Arc::new(move |t| c0 + c1 * (t - a) + c2 * (t - a) * (t - a)), label)
    }
}

/// Random instance: alpha in [0.3, 0.9], delta in [0, 0.5], m <= 3 impulses
/// with beta in (0, 1], random monotone v and g; Psi is the identity on
/// [0, 1] or ln on [1, 2].
pub fn random_instance(rng: &mut ChaCha8Rng) -> GronwallInstance {
    let (psi, a, horizon) = if rng.gen_bool(0.75) { (PsiFunction::Identity, 0.0, 1.0) } else { (PsiFunction::Log, 1.0, 2.0) };
    let m = rng.gen_range(0..=3);
    let mut times: Vec<f64> = (0..m).map(|_| rng.gen_range(a + 0.05 * (horizon - a)..horizon - 0.05 * (horizon - a))).collect();
    times.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    times.dedup_by(|x, y| (*x - *y).abs() < 1e-3);
    let betas = times.iter().map(|_| 1.0 - rng.gen_range(0.0..1.0)).collect();
    let alpha = rng.gen_range(0.3..=0.9);
    let delta = rng.gen_range(0.0..=0.5);
    let v = random_monotone(rng, a, horizon, 1.0);
    let g = random_monotone(rng, a, horizon, 1.0);
    GronwallInstance { psi, alpha, a, horizon, v, g, delta, impulse_times: times, betas }
}

/// Random instance number `index` of the sweep seeded by `seed`.
pub fn seeded_instance(seed: u64, index: u64) -> GronwallInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    random_instance(&mut rng)
}

/// Dominance reports for `count` seeded random instances, in order.
pub fn verify_sweep(seed: u64, count: usize, n_grid: usize, form: BoundForm) -> Result<Vec<(GronwallInstance, DominanceReport)>> {
    par::map_range(count, |i| {
        let inst = seeded_instance(seed, i as u64);
        let rep = verify_dominance(&inst, n_grid, form)?;
        Ok((inst, rep))
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GronwallFile {
    #[serde(default = "identity_name")]
    psi: String,
    alpha: f64,
    a: f64,
    #[serde(rename = "T")]
    horizon: f64,
    v: FnField,
    g: FnField,
    #[serde(default)]
    delta: f64,
    #[serde(default)]
    impulse_times: Vec<f64>,
    #[serde(default)]
    betas: Vec<f64>,
}

fn identity_name() -> String {
    "identity".into()
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum FnField {
    Constant(f64),
    Expr(String),
}

impl FnField {
    fn into_labeled(self) -> Result<Labeled> {
        match self {
            Self::Constant(c) => Ok(Labeled::constant(c)),
            Self::Expr(src) => {
                let e = Expr::parse(&src)?.restrict(&[Var::T])?;
                Ok(Labeled::new(Arc::new(move |t| e.eval(&Env { t, ..Env::default() })), src))
            }
        }
    }
}

/// Parses a JSON instance:
/// `{"psi": "identity"|"log", "alpha", "a", "T", "v", "g", "delta", "impulse_times", "betas"}`
/// where `v` and `g` are numbers or expressions in `t`.
pub fn parse_instance(json: &str) -> Result<GronwallInstance> {
    let f: GronwallFile = serde_json::from_str(json).map_err(|e| Error::Invalid(format!("bound file: {e}")))?;
    let psi = match f.psi.as_str() {
        "identity" => PsiFunction::Identity,
        "log" => PsiFunction::Log,
        other => return Err(Error::Invalid(format!("unknown psi {other:?} (identity, log)"))),
    };
    let inst = GronwallInstance {
        psi,
        alpha: f.alpha,
        a: f.a,
        horizon: f.horizon,
        v: f.v.into_labeled()?,
        g: f.g.into_labeled()?,
        delta: f.delta,
        impulse_times: f.impulse_times,
        betas: f.betas,
    };
    inst.check()?;
    Ok(inst)
}
