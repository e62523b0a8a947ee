//! Subcommand bodies. Each returns the CSV table and how the run ended.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use hilfer_core::config::parse_problem;
use hilfer_core::expr::{Env, Expr, Var};
use hilfer_core::fracops::{frac_integral_grid, hilfer_derivative_grid, uniform_nodes, FracOrder, PsiFunction, SampledFunction};
use hilfer_core::gronwall::{gronwall_bound_form, parse_instance, verify_dominance, verify_sweep, BoundForm, DominanceReport};
use hilfer_core::model::{validate, PhiShape, ProblemSpec};
use hilfer_core::solver::picard_solve;
use hilfer_core::specfun::{gamma_fn, mittag_leffler, wright_m, wright_moment, wright_moment_with, MomentMode};
use hilfer_core::stability::{certify_uhr, perturbation_phidata, perturbed_spec};
use hilfer_core::Error;

use crate::output::{num, Table};

/// Relative accuracy of the Lanczos gamma, with a safety factor.
const GAMMA_REL_ERR: f64 = 1e-14;

/// Relative slack allowed before a node counts against dominance.
const DOMINANCE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Done,
    NotConverged,
    CertificateFailed,
}

pub struct Outcome {
    pub table: Table,
    pub status: Status,
}

impl Outcome {
    fn done(table: Table) -> Self {
        Outcome { table, status: Status::Done }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SpecialFn {
    Gamma,
    Mlf,
    Wright,
    Moment,
}

pub fn specfun_eval(func: SpecialFn, args: &[f64]) -> Result<Outcome> {
    let (names, arity): (&[&str], usize) = match func {
        SpecialFn::Gamma => (&["x"], 1),
        SpecialFn::Mlf => (&["alpha", "beta", "z"], 3),
        SpecialFn::Wright => (&["alpha", "theta"], 2),
        SpecialFn::Moment => (&["alpha", "dbar"], 2),
    };
    if args.len() != arity {
        return Err(Error::Invalid(format!("{func:?} takes {arity} arguments ({}), got {}", names.join(","), args.len())).into());
    }
    let (value, err, label) = match func {
        SpecialFn::Gamma => {
            let v = gamma_fn(args[0])?;
            (v, GAMMA_REL_ERR * v.abs(), "gamma")
        }
        SpecialFn::Mlf => {
            let r = mittag_leffler(args[0], args[1], args[2])?;
            (r.value, r.est_abs_error, "mlf")
        }
        SpecialFn::Wright => {
            let r = wright_m(args[0], args[1])?;
            (r.value, r.est_abs_error, "wright")
        }
        SpecialFn::Moment => {
            let q = wright_moment_with(args[0], args[1], MomentMode::Quadrature)?;
            (q, (q - wright_moment(args[0], args[1])).abs(), "moment")
        }
    };
    let mut header = vec!["fn"];
    header.extend_from_slice(names);
    header.extend_from_slice(&["value", "est_err"]);
    let mut table = Table::new(&header);
    let mut fields = vec![label.to_string()];
    fields.extend(args.iter().map(|&a| num(a)));
    fields.extend([num(value), num(err)]);
    table.line(fields);
    Ok(Outcome::done(table))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Operator {
    Integral,
    Derivative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Psi {
    Identity,
    Log,
}

pub struct OpsRequest<'a> {
    pub op: Operator,
    pub alpha: f64,
    pub beta: f64,
    pub psi: Psi,
    pub function: &'a str,
    pub mu: f64,
    pub start: f64,
    pub end: f64,
    pub grid: usize,
}

/// Applies a fractional operator to u(t) = (Psi(t) - Psi(a))^mu f(t) on a uniform grid.
pub fn ops(req: &OpsRequest) -> Result<Outcome> {
    let f = Expr::parse(req.function)?.restrict(&[Var::T])?;
    let nodes = uniform_nodes(req.start, req.end, req.grid);
    let values = nodes.iter().map(|&t| f.eval(&Env { t, ..Env::default() })).collect();
    let u = SampledFunction::with_singularity(nodes.clone(), values, req.mu)?;
    let psi = match req.psi {
        Psi::Identity => PsiFunction::Identity,
        Psi::Log => PsiFunction::Log,
    };
    let (ts, vals): (Vec<f64>, Vec<f64>) = match req.op {
        Operator::Integral => (nodes.clone(), frac_integral_grid(&psi, req.alpha, &u)?),
        Operator::Derivative => {
            if req.psi != Psi::Identity {
                return Err(Error::Unsupported("the Hilfer derivative is implemented for psi = identity".into()).into());
            }
            let order = FracOrder::new(req.alpha, req.beta)?;
            // the first node has no value
            let d = hilfer_derivative_grid(&order, &u)?;
            (nodes[1..].to_vec(), d[1..].to_vec())
        }
    };
    let mut table = Table::new(&["t", "value"]);
    for (t, v) in ts.into_iter().zip(vals) {
        table.row(&[t, v]);
    }
    Ok(Outcome::done(table))
}

fn read_config(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn dominance_status(worst_relative: f64) -> Status {
    if worst_relative <= DOMINANCE_SLACK {
        Status::Done
    } else {
        Status::CertificateFailed
    }
}

/// Node with the largest u~ - bound after the initial point.
fn worst_node(rep: &DominanceReport) -> usize {
    (1..rep.nodes.len())
        .max_by(|&i, &j| {
            let (a, b) = (rep.u_tilde[i] - rep.bound[i], rep.u_tilde[j] - rep.bound[j]);
            a.partial_cmp(&b).expect("finite margins")
        })
        .unwrap_or(0)
}

pub fn bound(config: &Path, t: Option<f64>, grid: usize, form: BoundForm) -> Result<Outcome> {
    let inst = parse_instance(&read_config(config)?)?;
    let rep = verify_dominance(&inst, grid, form)?;
    let mut table = Table::new(&["t", "u_tilde", "bound", "margin"]);
    let status = match t {
        None => {
            for k in 1..rep.nodes.len() {
                table.row(&[rep.nodes[k], rep.u_tilde[k], rep.bound[k], rep.u_tilde[k] - rep.bound[k]]);
            }
            dominance_status(rep.worst_relative)
        }
        Some(t) => {
            if !(t > inst.a && t <= inst.horizon) {
                return Err(Error::Invalid(format!("t = {t} must lie in (a, T] = ({}, {}]", inst.a, inst.horizon)).into());
            }
            let u = interpolate(&rep.nodes, &rep.u_tilde, t);
            let b = gronwall_bound_form(&inst, t, form)?;
            table.row(&[t, u, b, u - b]);
            dominance_status((u - b) / (1.0 + b.abs()))
        }
    };
    Ok(Outcome { table, status })
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let j = xs.partition_point(|&v| v < x).clamp(1, xs.len() - 1);
    let th = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    ys[j - 1] + th * (ys[j] - ys[j - 1])
}

/// One row per seeded instance, at its worst node.
pub fn bound_verify(seed: u64, instances: usize, grid: usize, form: BoundForm) -> Result<Outcome> {
    let sweep = verify_sweep(seed, instances, grid, form)?;
    let mut table = Table::new(&["t", "u_tilde", "bound", "margin"]);
    let mut worst = f64::NEG_INFINITY;
    for (_, rep) in &sweep {
        let k = worst_node(rep);
        table.row(&[rep.nodes[k], rep.u_tilde[k], rep.bound[k], rep.u_tilde[k] - rep.bound[k]]);
        worst = worst.max(rep.worst_relative);
    }
    Ok(Outcome { table, status: dominance_status(worst) })
}

/// Parses and validates a problem file; failed checks become one `Invalid` error.
pub fn load_problem(config: &Path) -> Result<ProblemSpec> {
    let spec = parse_problem(&read_config(config)?)?;
    let report = validate(&spec);
    if !report.passed() {
        let msgs: Vec<String> = report
            .failures()
            .iter()
            .map(|c| if c.detail.starts_with(&c.name) { c.detail.clone() } else { format!("{}: {}", c.name, c.detail) })
            .collect();
        return Err(Error::Invalid(msgs.join("; ")).into());
    }
    Ok(spec)
}

pub struct SolveSettings {
    pub grid: usize,
    pub tol: f64,
    pub max_iter: usize,
}

pub fn solve(config: &Path, s: &SolveSettings) -> Result<Outcome> {
    let spec = load_problem(config)?;
    let rep = picard_solve(&spec, s.grid, s.tol, s.max_iter)?;
    let mut table = Table::new(&["segment", "t", "weighted_value", "value"]);
    for (j, seg) in rep.trajectory.segments.iter().enumerate() {
        for k in 0..seg.nodes.len() {
            table.line([j.to_string(), num(seg.nodes[k]), num(seg.weighted[k]), num(seg.value(k))]);
        }
    }
    if !rep.converged {
        eprintln!(
            "Picard iteration stopped after {} sweeps, last update {:e}",
            rep.iterations,
            rep.residual_history.last().copied().unwrap_or(f64::NAN)
        );
    }
    let status = if rep.converged { Status::Done } else { Status::NotConverged };
    Ok(Outcome { table, status })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub eps: f64,
    pub shape: PhiShape,
    pub impulse: f64,
}

impl Perturbation {
    /// Parses `eps=0.01,phi=exp[,imp=0.01]`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut eps = None;
        let mut shape = PhiShape::One;
        let mut impulse = 0.0;
        for part in s.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| anyhow!("perturbation field {part:?} is not key=value"))?;
            match k.trim() {
                "eps" => eps = Some(v.trim().parse::<f64>().with_context(|| format!("eps = {v:?}"))?),
                "phi" => shape = PhiShape::parse(v.trim())?,
                "imp" => impulse = v.trim().parse::<f64>().with_context(|| format!("imp = {v:?}"))?,
                other => bail!("unknown perturbation field {other:?} (eps, phi, imp)"),
            }
        }
        let eps = eps.ok_or_else(|| anyhow!("perturbation needs eps=<value>"))?;
        if !(eps >= 0.0 && eps.is_finite() && impulse >= 0.0 && impulse.is_finite()) {
            bail!("perturbation sizes must be finite and nonnegative");
        }
        Ok(Perturbation { eps, shape, impulse })
    }
}

/// Solves the problem and its perturbed twin, then certifies the deviation.
pub fn stability(config: &Path, p: Perturbation, s: &SolveSettings) -> Result<Outcome> {
    let spec = load_problem(config)?;
    let u = picard_solve(&spec, s.grid, s.tol, s.max_iter)?;
    let v = picard_solve(&perturbed_spec(&spec, p.eps, p.shape, p.impulse), s.grid, s.tol, s.max_iter)?;
    let pd = perturbation_phidata(&spec, p.eps, p.shape, p.impulse)?;
    let cert = certify_uhr(&spec, &u.trajectory, &v.trajectory, &pd)?;
    let mut table = Table::new(&["t", "observed_delta", "bound", "margin"]);
    for k in 0..cert.nodes.len() {
        table.row(&[cert.nodes[k], cert.observed[k], cert.bound[k], cert.bound[k] - cert.observed[k]]);
    }
    table.line(["C".to_string(), num(cert.c), "verdict".to_string(), cert.verdict.to_string()]);
    let status = if !(u.converged && v.converged) {
        Status::NotConverged
    } else if cert.verdict {
        Status::Done
    } else {
        Status::CertificateFailed
    };
    Ok(Outcome { table, status })
}
