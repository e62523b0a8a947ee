//! Problem data: impulse mesh, generator, nonlinearity, Volterra kernels,
//! impulse maps, nonlocal term and the Lipschitz audits that back them.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var};
use crate::fracops::{cell_weights, uniform_nodes, FracOrder, ScalarFn};
use crate::par;
use crate::specfun::mittag_leffler;
use crate::trajectory::WindowKind;

pub type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type Fn4 = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;

/// Partition 0 = s_0 < t_1 <= s_1 <= t_2 < ... <= t_m <= s_m <= t_{m+1} = T.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseMesh {
    pub horizon: f64,
    /// t_1, ..., t_{m+1}.
    pub t: Vec<f64>,
    /// s_0, ..., s_m.
    pub s: Vec<f64>,
}

/// A maximal time window on which one branch of the mild solution applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub kind: WindowKind,
    pub index: usize,
    pub start: f64,
    pub end: f64,
}

impl ImpulseMesh {
    pub fn new(horizon: f64, t: Vec<f64>, s: Vec<f64>) -> Self {
        Self { horizon, t, s }
    }

    /// No impulses: one evolution window (0, T].
    pub fn single(horizon: f64) -> Self {
        Self::new(horizon, vec![horizon], vec![0.0])
    }

    pub fn m(&self) -> usize {
        self.s.len().saturating_sub(1)
    }

    pub fn t_i(&self, i: usize) -> f64 {
        self.t[i - 1]
    }

    /// Every violated ordering invariant, described. Nothing is repaired.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            v.push(format!("mesh ordering: horizon T = {} must be positive", self.horizon));
        }
        if self.t.is_empty() || self.s.is_empty() {
            v.push("mesh ordering: t and s must be non-empty".into());
            return v;
        }
        if self.t.len() != self.s.len() {
            v.push(format!(
                "mesh ordering: expected as many t_i (i=1..m+1) as s_i (i=0..m), got {} and {}",
                self.t.len(),
                self.s.len()
            ));
            return v;
        }
        if self.s[0] != 0.0 {
            v.push(format!("mesh ordering: s_0 = {} must be 0", self.s[0]));
        }
        let m = self.m();
        if self.t[m] != self.horizon {
            v.push(format!("mesh ordering: t_{} = {} must equal T = {}", m + 1, self.t[m], self.horizon));
        }
        for i in 0..=m {
            if !(self.s[i] < self.t[i]) {
                v.push(format!("mesh ordering: s_{i} = {} must be < t_{} = {}", self.s[i], i + 1, self.t[i]));
            }
            if i >= 1 && !(self.t[i - 1] <= self.s[i]) {
                v.push(format!("mesh ordering: t_{i} = {} must be <= s_{i} = {}", self.t[i - 1], self.s[i]));
            }
        }
        v
    }

    /// Windows in time order; zero-length impulse windows are omitted.
    pub fn windows(&self) -> Vec<Window> {
        let mut out = Vec::new();
        for i in 0..=self.m() {
            if i >= 1 && self.t[i - 1] < self.s[i] {
                out.push(Window { kind: WindowKind::Impulse, index: i, start: self.t[i - 1], end: self.s[i] });
            }
            out.push(Window { kind: WindowKind::Evolution, index: i, start: self.s[i], end: self.t[i] });
        }
        out
    }
}

/// Real matrix with real spectrum, diagonalized as V diag(lambda) V^{-1}.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMatrix {
    pub matrix: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    vectors: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl SpectralMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || n != matrix.ncols() {
            return Err(Error::Invalid("generator matrix must be square and non-empty".into()));
        }
        let scale = matrix.norm().max(1.0);
        let complex = matrix.complex_eigenvalues();
        let mut distinct: Vec<f64> = Vec::new();
        for z in complex.iter() {
            if z.im.abs() > 1e-9 * scale {
                return Err(Error::Unsupported(format!("generator has complex eigenvalue {z}")));
            }
            if !distinct.iter().any(|d| (d - z.re).abs() <= 1e-7 * scale) {
                distinct.push(z.re);
            }
        }
        distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let mut cols: Vec<nalgebra::DVector<f64>> = Vec::new();
        let mut eigenvalues = Vec::new();
        for &lam in &distinct {
            let shifted = &matrix - DMatrix::identity(n, n) * lam;
            let svd = shifted.svd(false, true);
            let vt = svd.v_t.expect("requested V^T");
            for (k, sv) in svd.singular_values.iter().enumerate() {
                if *sv <= 1e-8 * scale {
                    cols.push(vt.row(k).transpose());
                    eigenvalues.push(lam);
                }
            }
        }
        if cols.len() != n {
            return Err(Error::Unsupported(format!(
                "generator is not diagonalizable ({} independent eigenvectors for dimension {n})",
                cols.len()
            )));
        }
        let vectors = DMatrix::from_columns(&cols);
        let inverse = vectors.clone().try_inverse().ok_or_else(|| Error::Unsupported("eigenvector matrix is singular".into()))?;
        Ok(Self { matrix, eigenvalues, vectors, inverse })
    }

    /// V diag(f(lambda_k)) V^{-1}.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&l| f(l)),
        ));
        &self.vectors * d * &self.inverse
    }

    pub fn try_apply_fn(&self, f: impl Fn(f64) -> Result<f64>) -> Result<DMatrix<f64>> {
        let vals: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect::<Result<_>>()?;
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals));
        Ok(&self.vectors * d * &self.inverse)
    }
}

/// The linear operator A of the evolution equation.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Scalar(f64),
    Matrix(SpectralMatrix),
}

impl Generator {
    pub fn matrix(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("generator matrix must be square".into()));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(Self::Matrix(SpectralMatrix::new(DMatrix::from_row_slice(n, n, &flat))?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Scalar(_) => 1,
            Self::Matrix(m) => m.eigenvalues.len(),
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        match self {
            Self::Scalar(l) => vec![*l],
            Self::Matrix(m) => m.eigenvalues.clone(),
        }
    }

    /// sup over (0, T] of the weighted resolvent norms
    /// |E_{alpha,gamma}(lambda t^alpha)| and |E_{alpha,alpha}(lambda t^alpha)|
    /// (operator 2-norms for matrices), and at least 1.
    pub fn propagator_bound(&self, order: &FracOrder, horizon: f64) -> Result<f64> {
        let samples = 256;
        let mut sup: f64 = 1.0;
        for k in 1..=samples {
            let t = horizon * k as f64 / samples as f64;
            let ta = t.powf(order.alpha);
            for beta in [order.gamma, order.alpha] {
                let norm = match self {
                    Self::Scalar(l) => mittag_leffler(order.alpha, beta, l * ta)?.value.abs(),
                    Self::Matrix(m) => {
                        let a = m.try_apply_fn(|l| Ok(mittag_leffler(order.alpha, beta, l * ta)?.value))?;
                        a.svd(false, false).singular_values.max()
                    }
                };
                sup = sup.max(norm);
            }
        }
        Ok(sup)
    }
}

/// f(t, x1, x2, x3) with x1 = u, x2 = (Tu)(t), x3 = (Vu)(t).
#[derive(Clone)]
pub struct Nonlinearity {
    pub f: Fn4,
    pub lipschitz: [f64; 3],
    pub label: String,
    /// Whether f may depend on x2 and x3; lets the solver skip unused Volterra terms.
    pub uses_volterra: [bool; 2],
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nonlinearity({:?}, L = {:?})", self.label, self.lipschitz)
    }
}

impl Nonlinearity {
    pub fn new(f: Fn4, lipschitz: [f64; 3]) -> Self {
        Self { f, lipschitz, label: "<closure>".into(), uses_volterra: [true; 2] }
    }

    pub fn zero() -> Self {
        Self { f: Arc::new(|_, _, _, _| 0.0), lipschitz: [0.0; 3], label: "0".into(), uses_volterra: [false; 2] }
    }

    /// From an expression in t, u (= x1), x1, x2, x3.
    pub fn from_expr(expr: Expr, lipschitz: [f64; 3]) -> Result<Self> {
        let expr = expr.restrict(&[Var::T, Var::U, Var::X1, Var::X2, Var::X3])?;
        let label = expr.source().to_string();
        let uses_volterra = [expr.uses(Var::X2), expr.uses(Var::X3)];
        let f: Fn4 = Arc::new(move |t, x1, x2, x3| expr.eval(&Env { t, s: 0.0, u: x1, x1, x2, x3 }));
        Ok(Self { f, lipschitz, label, uses_volterra })
    }

    pub fn eval(&self, t: f64, x1: f64, x2: f64, x3: f64) -> f64 {
        (self.f)(t, x1, x2, x3)
    }

    /// max{L_f1, L_f2, L_f3}.
    pub fn max_lipschitz(&self) -> f64 {
        self.lipschitz.iter().cloned().fold(0.0, f64::max)
    }

    /// Adds a forcing term h(t) to f.
    pub fn with_forcing(&self, h: ScalarFn) -> Self {
        let f = self.f.clone();
        Self {
            f: Arc::new(move |t, a, b, c| f(t, a, b, c) + h(t)),
            lipschitz: self.lipschitz,
            label: format!("{} + forcing", self.label),
            uses_volterra: self.uses_volterra,
        }
    }
}

/// Kernels of (Tu)(t) = int_0^t K(t,s) u(s) ds and (Vu)(t) = int_0^t H(t,s) u(s) ds.
#[derive(Clone)]
pub struct VolterraKernels {
    pub k: Fn2,
    pub h: Fn2,
    pub labels: (String, String),
    /// Kernels known to vanish identically.
    pub zero: [bool; 2],
}

impl fmt::Debug for VolterraKernels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VolterraKernels(K = {:?}, H = {:?})", self.labels.0, self.labels.1)
    }
}

impl VolterraKernels {
    pub fn zero() -> Self {
        Self { k: Arc::new(|_, _| 0.0), h: Arc::new(|_, _| 0.0), labels: ("0".into(), "0".into()), zero: [true, true] }
    }

    pub fn from_exprs(k: Expr, h: Expr) -> Result<Self> {
        let k = k.restrict(&[Var::T, Var::S])?;
        let h = h.restrict(&[Var::T, Var::S])?;
        let labels = (k.source().to_string(), h.source().to_string());
        let zero = [k.is_zero(), h.is_zero()];
        Ok(Self {
            zero,
            k: Arc::new(move |t, s| k.eval(&Env { t, s, ..Env::default() })),
            h: Arc::new(move |t, s| h.eval(&Env { t, s, ..Env::default() })),
            labels,
        })
    }
}

/// xi_i(t, u) on the impulse window (t_i, s_i].
#[derive(Clone)]
pub struct ImpulseMap {
    pub map: Fn2,
    pub lipschitz: f64,
    pub label: String,
}

impl fmt::Debug for ImpulseMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ImpulseMap({:?}, L = {})", self.label, self.lipschitz)
    }
}

impl ImpulseMap {
    pub fn new(map: Fn2, lipschitz: f64) -> Self {
        Self { map, lipschitz, label: "<closure>".into() }
    }

    pub fn from_expr(expr: Expr, lipschitz: f64) -> Result<Self> {
        let expr = expr.restrict(&[Var::T, Var::U])?;
        let label = expr.source().to_string();
        Ok(Self { map: Arc::new(move |t, u| expr.eval(&Env { t, u, ..Env::default() })), lipschitz, label })
    }

    pub fn eval(&self, t: f64, u: f64) -> f64 {
        (self.map)(t, u)
    }
}

/// The nonlocal term g(u) in the initial condition.
#[derive(Clone)]
pub enum Nonlocal {
    Zero,
    Constant(f64),
    /// g(u) = map(u(at)), Lipschitz in the sampled value.
    PointEval {
        at: f64,
        map: ScalarFn,
        lipschitz: f64,
        label: String,
    },
}

impl fmt::Debug for Nonlocal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::PointEval { at, label, lipschitz, .. } => {
                write!(f, "PointEval(at = {at}, {label:?}, L = {lipschitz})")
            }
        }
    }
}

impl Nonlocal {
    pub fn point_expr(at: f64, expr: Expr, lipschitz: f64) -> Result<Self> {
        let expr = expr.restrict(&[Var::U])?;
        let label = expr.source().to_string();
        Ok(Self::PointEval { at, map: Arc::new(move |u| expr.eval(&Env { u, ..Env::default() })), lipschitz, label })
    }

    /// Evaluates g given a way to read the trajectory at a time.
    pub fn eval(&self, read: impl Fn(f64) -> f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(c) => *c,
            Self::PointEval { at, map, .. } => map(read(*at)),
        }
    }

    /// The constant L-tilde.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Self::Zero | Self::Constant(_) => 0.0,
            Self::PointEval { lipschitz, .. } => *lipschitz,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImpulseMaps {
    pub maps: Vec<ImpulseMap>,
    pub nonlocal: Nonlocal,
}

impl ImpulseMaps {
    pub fn none() -> Self {
        Self { maps: Vec::new(), nonlocal: Nonlocal::Zero }
    }

    /// max_i L_{xi_i} (zero without impulses).
    pub fn max_lipschitz(&self) -> f64 {
        self.maps.iter().map(|m| m.lipschitz).fold(0.0, f64::max)
    }
}

/// A complete problem instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub order: FracOrder,
    pub mesh: ImpulseMesh,
    pub generator: Generator,
    /// User-declared bound on the resolvent family, audited by validation.
    pub declared_m: Option<f64>,
    pub nonlin: Nonlinearity,
    pub kernels: VolterraKernels,
    pub impulses: ImpulseMaps,
    pub u0: Vec<f64>,
    pub delta: f64,
}

impl ProblemSpec {
    /// A linear problem D u = lambda u with no impulses.
    pub fn linear(order: FracOrder, lambda: f64, u0: f64, horizon: f64) -> Self {
        Self {
            order,
            mesh: ImpulseMesh::single(horizon),
            generator: Generator::Scalar(lambda),
            declared_m: None,
            nonlin: Nonlinearity::zero(),
            kernels: VolterraKernels::zero(),
            impulses: ImpulseMaps::none(),
            u0: vec![u0],
            delta: 1.0,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.mesh.horizon
    }

    /// The constant M: the declared value when present, otherwise the
    /// numerically computed resolvent bound.
    pub fn bound_m(&self) -> Result<f64> {
        let computed = self.generator.propagator_bound(&self.order, self.horizon())?;
        Ok(self.declared_m.map_or(computed, |d| d.max(computed)))
    }

    pub fn scalar_lambda(&self) -> Result<f64> {
        match &self.generator {
            Generator::Scalar(l) if self.u0.len() == 1 => Ok(*l),
            _ => Err(Error::Unsupported(
                "the solver handles scalar states only; matrix generators are limited to resolvent kernels".into(),
            )),
        }
    }
}

/// Settings of the randomized Lipschitz audits.
#[derive(Debug, Clone, Copy)]
pub struct AuditConfig {
    pub samples: usize,
    /// Half-width of the state box that is sampled.
    pub radius: f64,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self { samples: 10_000, radius: 10.0, seed: 0x5eed_1e55 }
    }
}

/// Outcome of one validation check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Largest observed |q(x) - q(y)| / |x - y| over random pairs.
fn max_quotient(rng: &mut ChaCha8Rng, samples: usize, mut pair: impl FnMut(&mut ChaCha8Rng) -> (f64, f64)) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let (num, den) = pair(rng);
        if den > 0.0 && num.is_finite() {
            worst = worst.max(num / den);
        }
    }
    worst
}

fn lipschitz_ok(observed: f64, declared: f64) -> bool {
    observed <= declared * (1.0 + 1e-9) + 1e-12
}

/// Checks every invariant of `spec`; failures are reported, never raised.
pub fn validate(spec: &ProblemSpec) -> ValidationReport {
    validate_with(spec, &AuditConfig::default())
}

pub fn validate_with(spec: &ProblemSpec, audit: &AuditConfig) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let o = spec.order;
    rep.push(
        "order",
        o.alpha > 0.0 && o.alpha <= 1.0 && (0.0..=1.0).contains(&o.beta) && o.gamma > 0.0 && o.gamma <= 1.0,
        format!("alpha = {}, beta = {}, gamma = {}", o.alpha, o.beta, o.gamma),
    );
    let violations = spec.mesh.violations();
    let mesh_ok = violations.is_empty();
    rep.push(
        "mesh ordering",
        mesh_ok,
        if mesh_ok { format!("m = {}, T = {}", spec.mesh.m(), spec.mesh.horizon) } else { violations.join("; ") },
    );
    rep.push("delta", spec.delta > 0.0 && spec.delta <= 1.0, format!("delta = {} must lie in (0, 1]", spec.delta));
    rep.push(
        "dimensions",
        spec.u0.len() == spec.generator.dim(),
        format!("generator dimension {}, initial datum dimension {}", spec.generator.dim(), spec.u0.len()),
    );
    let m = if mesh_ok { spec.mesh.m() } else { spec.mesh.s.len().saturating_sub(1) };
    rep.push("impulse count", spec.impulses.maps.len() == m, format!("{} impulse maps for m = {m}", spec.impulses.maps.len()));
    let horizon = if spec.mesh.horizon > 0.0 && spec.mesh.horizon.is_finite() { spec.mesh.horizon } else { 1.0 };
    match spec.generator.propagator_bound(&spec.order, horizon) {
        Ok(computed) => {
            let ok = spec.declared_m.is_none_or(|d| d >= computed * (1.0 - 1e-12));
            rep.push(
                "generator bound",
                ok,
                format!("computed sup of weighted resolvent norms {computed:.6e}, declared {:?}", spec.declared_m),
            );
        }
        Err(e) => rep.push("generator bound", false, e.to_string()),
    }

    let mut rng = ChaCha8Rng::seed_from_u64(audit.seed);
    let r = audit.radius;
    for j in 0..3 {
        let f = &spec.nonlin;
        let observed = max_quotient(&mut rng, audit.samples, |rng| {
            let t = rng.gen_range(0.0..=horizon);
            let mut x = [rng.gen_range(-r..=r), rng.gen_range(-r..=r), rng.gen_range(-r..=r)];
            let a = f.eval(t, x[0], x[1], x[2]);
            let d = rng.gen_range(-r..=r);
            x[j] += d;
            let b = f.eval(t, x[0], x[1], x[2]);
            ((a - b).abs(), d.abs())
        });
        let declared = f.lipschitz[j];
        rep.push(
            format!("lipschitz f{}", j + 1),
            lipschitz_ok(observed, declared),
            format!("declared {declared}, max sampled quotient {observed:.6e} over {} pairs", audit.samples),
        );
    }
    for (i, map) in spec.impulses.maps.iter().enumerate() {
        let (lo, hi) = if mesh_ok && i < m { (spec.mesh.t[i], spec.mesh.s[i + 1]) } else { (0.0, horizon) };
        let observed = max_quotient(&mut rng, audit.samples, |rng| {
            let t = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            let x = rng.gen_range(-r..=r);
            let d = rng.gen_range(-r..=r);
            ((map.eval(t, x) - map.eval(t, x + d)).abs(), d.abs())
        });
        rep.push(
            format!("lipschitz xi{}", i + 1),
            lipschitz_ok(observed, map.lipschitz),
            format!("declared {}, max sampled quotient {observed:.6e}", map.lipschitz),
        );
    }
    if let Nonlocal::PointEval { at, map, lipschitz, .. } = &spec.impulses.nonlocal {
        let observed = max_quotient(&mut rng, audit.samples, |rng| {
            let x = rng.gen_range(-r..=r);
            let d = rng.gen_range(-r..=r);
            ((map(x) - map(x + d)).abs(), d.abs())
        });
        rep.push(
            "lipschitz g",
            lipschitz_ok(observed, *lipschitz) && *at > 0.0 && *at <= horizon,
            format!("declared {lipschitz}, max sampled quotient {observed:.6e}, evaluated at t = {at}"),
        );
    }
    let n = 64;
    let mut finite = true;
    for a in 0..=n {
        let t = horizon * a as f64 / n as f64;
        for b in 0..=a {
            let s = horizon * b as f64 / n as f64;
            finite &= (spec.kernels.k)(t, s).is_finite() && (spec.kernels.h)(t, s).is_finite();
        }
    }
    rep.push("kernels", finite, format!("K and H sampled on a {n}x{n} triangle"));
    rep
}

/// The sup-integrals F*_j = sup_t int_0^t (t-s)^{1-alpha} |K_j(t,s)| ds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSups {
    pub f1: f64,
    pub f2: f64,
    /// Closed form T^{2-alpha}/(2-alpha).
    pub f3: f64,
    /// The same quantity by quadrature, for cross-checking.
    pub f3_quadrature: f64,
}

fn sup_weighted_integral(kernel: &(dyn Fn(f64, f64) -> f64 + Sync), alpha: f64, horizon: f64, n: usize) -> f64 {
    let nodes = uniform_nodes(0.0, horizon, n);
    let p = 2.0 - alpha;
    let vals = par::map_range(n, |k| {
        let k = k + 1;
        let t = nodes[k];
        let mut acc = 0.0;
        for j in 0..k {
            let (wl, wr) = cell_weights(t - nodes[j], t - nodes[j + 1], nodes[j + 1] - nodes[j], p);
            acc += wl * kernel(t, nodes[j]).abs() + wr * kernel(t, nodes[j + 1]).abs();
        }
        acc
    });
    vals.into_iter().fold(0.0, f64::max)
}

pub fn kernel_sup_integrals(spec: &ProblemSpec, n_grid: usize) -> Result<KernelSups> {
    if n_grid < 16 {
        return Err(Error::Invalid(format!("kernel grid needs at least 16 cells, got {n_grid}")));
    }
    let a = spec.order.alpha;
    let horizon = spec.horizon();
    let k = spec.kernels.k.clone();
    let h = spec.kernels.h.clone();
    let f1 = sup_weighted_integral(&move |t, s| k(t, s), a, horizon, n_grid);
    let f2 = sup_weighted_integral(&move |t, s| h(t, s), a, horizon, n_grid);
    let f3 = horizon.powf(2.0 - a) / (2.0 - a);
    let f3_quadrature = sup_weighted_integral(&|_, _| 1.0, a, horizon, n_grid);
    log::debug!("F3* closed form {f3:.16e}, quadrature {f3_quadrature:.16e}");
    Ok(KernelSups { f1, f2, f3, f3_quadrature })
}

/// Shapes of the Rassias function varphi used by the tooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiShape {
    One,
    Linear,
    Exp,
}

impl PhiShape {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "one" | "1" => Ok(Self::One),
            "t" => Ok(Self::Linear),
            "exp" => Ok(Self::Exp),
            _ => Err(Error::Invalid(format!("unknown phi shape {s:?} (one, t, exp)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::One => "one",
            Self::Linear => "t",
            Self::Exp => "exp",
        }
    }

    pub fn function(&self) -> ScalarFn {
        match self {
            Self::One => Arc::new(|_| 1.0),
            Self::Linear => Arc::new(|t| t),
            Self::Exp => Arc::new(f64::exp),
        }
    }

    /// Smallest c with int_0^t varphi <= c varphi(t) on [0, T].
    pub fn c_varphi(&self, horizon: f64) -> f64 {
        match self {
            Self::One => horizon,
            Self::Linear => horizon / 2.0,
            Self::Exp => 1.0,
        }
    }
}

/// The data (varphi, phi, c_varphi) of a Rassias-type estimate.
#[derive(Clone)]
pub struct PhiData {
    pub varphi: ScalarFn,
    pub phi: f64,
    pub c_varphi: f64,
}

impl fmt::Debug for PhiData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PhiData(phi = {}, c_varphi = {})", self.phi, self.c_varphi)
    }
}

impl PhiData {
    /// Checks on a grid over [0, T] that varphi is nonnegative and
    /// nondecreasing and that int_0^t varphi <= c_varphi varphi(t).
    pub fn new(varphi: ScalarFn, phi: f64, c_varphi: f64, horizon: f64) -> Result<Self> {
        if !(phi >= 0.0) || !(c_varphi > 0.0) {
            return Err(Error::Invalid(format!("need phi >= 0 and c_varphi > 0, got {phi}, {c_varphi}")));
        }
        let n = 2000;
        let nodes = uniform_nodes(0.0, horizon, n);
        let vals: Vec<f64> = nodes.iter().map(|&t| varphi(t)).collect();
        let mut integral = 0.0;
        for k in 0..=n {
            if !(vals[k] >= 0.0) || !vals[k].is_finite() {
                return Err(Error::Invalid(format!("varphi({}) = {} is not nonnegative", nodes[k], vals[k])));
            }
            if k > 0 {
                if vals[k] < vals[k - 1] * (1.0 - 1e-12) {
                    return Err(Error::Invalid(format!("varphi decreases near t = {}", nodes[k])));
                }
                integral += 0.5 * (vals[k] + vals[k - 1]) * (nodes[k] - nodes[k - 1]);
            }
            let rhs = c_varphi * vals[k];
            if integral > rhs * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::Invalid(format!(
                    "int_0^t varphi = {integral:.6e} exceeds c_varphi varphi(t) = {rhs:.6e} at t = {}",
                    nodes[k]
                )));
            }
        }
        Ok(Self { varphi, phi, c_varphi })
    }

    pub fn from_shape(shape: PhiShape, phi: f64, horizon: f64) -> Result<Self> {
        Self::new(shape.function(), phi, shape.c_varphi(horizon), horizon)
    }

    pub fn varphi(&self, t: f64) -> f64 {
        (self.varphi)(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_with_mesh(mesh: ImpulseMesh) -> ProblemSpec {
        let maps = (0..mesh.m()).map(|_| ImpulseMap::new(Arc::new(|_, u| 0.5 * u), 0.5)).collect();
        ProblemSpec {
            mesh,
            impulses: ImpulseMaps { maps, nonlocal: Nonlocal::Zero },
            ..ProblemSpec::linear(FracOrder::new(0.5, 0.5).unwrap(), -1.0, 1.0, 1.0)
        }
    }

    #[test]
    fn well_formed_single_window_passes() {
        let rep = validate(&spec_with_mesh(ImpulseMesh::single(1.0)));
        assert!(rep.passed(), "{rep}");
    }

    #[test]
    fn ordering_violation_is_flagged() {
        let mesh = ImpulseMesh::new(1.0, vec![0.6, 1.0], vec![0.0, 0.5]);
        let rep = validate(&spec_with_mesh(mesh));
        let c = rep.check("mesh ordering").unwrap();
        assert!(!c.passed);
        assert!(c.detail.contains("t_1 = 0.6 must be <= s_1 = 0.5"), "{}", c.detail);
    }

    #[test]
    fn windows_in_time_order() {
        let mesh = ImpulseMesh::new(1.0, vec![0.3, 0.6, 1.0], vec![0.0, 0.4, 0.6]);
        assert!(mesh.violations().is_empty());
        let w = mesh.windows();
        let kinds: Vec<_> = w.iter().map(|w| (w.kind, w.start, w.end)).collect();
        assert_eq!(
            kinds,
            vec![
                (WindowKind::Evolution, 0.0, 0.3),
                (WindowKind::Impulse, 0.3, 0.4),
                (WindowKind::Evolution, 0.4, 0.6),
                (WindowKind::Evolution, 0.6, 1.0),
            ]
        );
    }

    #[test]
    fn understated_lipschitz_is_flagged() {
        let mut spec = spec_with_mesh(ImpulseMesh::single(1.0));
        spec.nonlin = Nonlinearity::from_expr(Expr::parse("sin(2*x1) + 0.1*x2").unwrap(), [1.5, 0.1, 0.0]).unwrap();
        let rep = validate(&spec);
        assert!(!rep.check("lipschitz f1").unwrap().passed);
        assert!(rep.check("lipschitz f2").unwrap().passed);
        assert!(rep.check("lipschitz f3").unwrap().passed);
    }

    #[test]
    fn declared_bound_below_resolvent_norm_fails() {
        let mut spec = spec_with_mesh(ImpulseMesh::single(1.0));
        spec.generator = Generator::Scalar(1.0);
        spec.declared_m = Some(1.0);
        assert!(!validate(&spec).check("generator bound").unwrap().passed);
    }

    #[test]
    fn kernel_sups() {
        let mut spec = ProblemSpec::linear(FracOrder::new(0.5, 0.0).unwrap(), 0.0, 1.0, 1.0);
        let s = kernel_sup_integrals(&spec, 64).unwrap();
        assert_eq!((s.f1, s.f2), (0.0, 0.0));
        assert!((s.f3 - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.f3_quadrature - s.f3).abs() < 1e-6 * s.f3);
        spec.kernels = VolterraKernels::from_exprs(Expr::parse("t*s").unwrap(), Expr::parse("1").unwrap()).unwrap();
        let s = kernel_sup_integrals(&spec, 256).unwrap();
        assert!((s.f1 - 4.0 / 15.0).abs() < 1e-12, "{}", s.f1);
        assert!((s.f2 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_generator_spectrum() {
        let g = Generator::matrix(vec![vec![-1.0, 1.0], vec![0.0, -2.0]]).unwrap();
        let mut e = g.eigenvalues();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((e[0] + 2.0).abs() < 1e-12 && (e[1] + 1.0).abs() < 1e-12);
        if let Generator::Matrix(m) = &g {
            let back = m.apply_fn(|l| l);
            assert!((back - &m.matrix).norm() < 1e-12);
        }
        assert!(matches!(Generator::matrix(vec![vec![0.0, 1.0], vec![0.0, 0.0]]), Err(Error::Unsupported(_))));
        assert!(matches!(Generator::matrix(vec![vec![0.0, -1.0], vec![1.0, 0.0]]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn phi_data_checks() {
        assert!(PhiData::from_shape(PhiShape::One, 0.0, 2.0).is_ok());
        assert!(PhiData::from_shape(PhiShape::Linear, 0.1, 2.0).is_ok());
        assert!(PhiData::from_shape(PhiShape::Exp, 0.1, 3.0).is_ok());
        assert!(PhiData::new(Arc::new(|_| 1.0), 0.0, 0.5, 1.0).is_err());
        assert!(PhiData::new(Arc::new(|t| 1.0 - t), 0.0, 5.0, 1.0).is_err());
    }
}
