use std::sync::Arc;

use hilfer_core::expr::Expr;
use hilfer_core::fracops::FracOrder;
use hilfer_core::model::{ImpulseMap, ImpulseMaps, ImpulseMesh, Nonlinearity, Nonlocal, ProblemSpec, VolterraKernels};
use hilfer_core::solver::{contraction_lambda, picard_solve};
use hilfer_core::specfun::mittag_leffler;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{max_abs, rel_err};
use crate::Verdict;

/// Max relative error of the weighted solution t^{1-gamma} u against u0 E_{alpha,gamma}(lambda t^alpha).
fn linear_error(order: FracOrder, lambda: f64, u0: f64, n: usize, through_forcing: bool) -> Result<f64, String> {
    let mut spec = ProblemSpec::linear(order, if through_forcing { 0.0 } else { lambda }, u0, 1.0);
    if through_forcing {
        spec.nonlin = Nonlinearity::new(Arc::new(move |_, u, _, _| lambda * u), [lambda.abs(), 0.0, 0.0]);
    }
    let rep = picard_solve(&spec, n, 1e-13, 500).map_err(|e| e.to_string())?;
    if !rep.converged {
        return Err(format!("no convergence after {} sweeps", rep.iterations));
    }
    let seg = &rep.trajectory.segments[0];
    let errs = seg.nodes.iter().zip(&seg.weighted).map(|(&t, &w)| {
        let exact =
            u0 * mittag_leffler(order.alpha, order.gamma, lambda * t.powf(order.alpha)).map(|r| r.value).unwrap_or(f64::NAN);
        rel_err(w, exact)
    });
    Ok(max_abs(errs))
}

pub fn linear_benchmark() -> Verdict {
    let u0 = 1.5;
    let (mut worst, mut worst_generator) = (0.0f64, 0.0f64);
    let mut not_improving = Vec::new();
    for alpha in [0.3, 0.5, 0.7, 0.9] {
        for beta in [0.0, 0.5, 1.0] {
            let order = FracOrder::new(alpha, beta).unwrap();
            for lambda in [-1.0, 0.5] {
                let runs = (
                    linear_error(order, lambda, u0, 2048, true),
                    linear_error(order, lambda, u0, 4096, true),
                    linear_error(order, lambda, u0, 4096, false),
                );
                let (coarse, fine, generator) = match runs {
                    (Ok(c), Ok(f), Ok(g)) => (c, f, g),
                    (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => {
                        return Verdict::new(false, format!("alpha={alpha} beta={beta} lambda={lambda}: {e}"))
                    }
                };
                worst = max_abs([worst, fine]);
                worst_generator = max_abs([worst_generator, generator]);
                if fine.partial_cmp(&coarse) != Some(std::cmp::Ordering::Less) {
                    not_improving.push(format!("({alpha},{beta},{lambda})"));
                }
            }
        }
    }
    // alpha = beta = 1 is the ODE u' = lambda u
    let mut classical: f64 = 0.0;
    for lambda in [-1.0, 0.5] {
        let order = FracOrder::new(1.0, 1.0).unwrap();
        let mut spec = ProblemSpec::linear(order, 0.0, u0, 1.0);
        spec.nonlin = Nonlinearity::new(Arc::new(move |_, u, _, _| lambda * u), [lambda.abs(), 0.0, 0.0]);
        match picard_solve(&spec, 4096, 1e-14, 500) {
            Ok(rep) if rep.converged => {
                let seg = &rep.trajectory.segments[0];
                classical = max_abs(
                    seg.nodes.iter().enumerate().map(|(k, &t)| seg.value(k) - u0 * (lambda * t).exp()).chain([classical]),
                );
            }
            Ok(_) => return Verdict::new(false, "alpha = beta = 1 solve did not converge"),
            Err(e) => return Verdict::new(false, e.to_string()),
        }
    }
    let pass = worst <= 1e-3 && worst_generator <= 1e-3 && not_improving.is_empty() && classical <= 1e-6;
    Verdict::new(
        pass,
        format!(
            "max rel error at N=4096 {worst:.2e} (lambda in the forcing), {worst_generator:.2e} (lambda in the generator); \
             not improving under doubling: {}; |u - u0 e^(lambda t)| = {classical:.2e}",
            if not_improving.is_empty() { "none".to_string() } else { not_improving.join(" ") }
        ),
    )
}

/// A random problem with up to two impulses, Volterra terms and nonlocal data.
fn random_problem(rng: &mut ChaCha8Rng) -> ProblemSpec {
    let order = FracOrder::new(rng.gen_range(0.4..0.95), rng.gen_range(0.0..=1.0)).unwrap();
    let mut spec = ProblemSpec::linear(order, rng.gen_range(-1.0..0.5), rng.gen_range(0.5..2.0), 1.0);
    let m = rng.gen_range(0..=2usize);
    let (mut t, mut s) = (Vec::new(), vec![0.0]);
    for i in 0..m {
        let ti = rng.gen_range(0.2..0.35) + 0.35 * i as f64;
        t.push(ti);
        s.push(ti + rng.gen_range(0.0..0.1));
    }
    t.push(1.0);
    spec.mesh = ImpulseMesh::new(1.0, t, s);
    let (l1, l2) = (rng.gen_range(0.0..0.4), rng.gen_range(0.0..0.2));
    let f = Expr::parse(&format!("{l1}*sin(u) + {l2}*x2 + 0.1*t")).unwrap();
    spec.nonlin = Nonlinearity::from_expr(f, [l1, l2, 0.0]).unwrap();
    spec.kernels = VolterraKernels::from_exprs(Expr::parse("exp(s - t)").unwrap(), Expr::parse("0").unwrap()).unwrap();
    let maps = (0..m)
        .map(|_| {
            let (l, c) = (rng.gen_range(0.0..0.3), rng.gen_range(-0.5..0.5));
            ImpulseMap::new(Arc::new(move |_, u| l * u + c), l)
        })
        .collect();
    let nonlocal = if rng.gen_bool(0.5) {
        let l = rng.gen_range(0.0..0.2);
        Nonlocal::PointEval { at: 1.0, map: Arc::new(move |u| l * u), lipschitz: l, label: format!("{l}*u") }
    } else {
        Nonlocal::Zero
    };
    spec.impulses = ImpulseMaps { maps, nonlocal };
    spec.delta = rng.gen_range(0.5..=1.0);
    spec
}

pub fn contraction() -> Verdict {
    let mut hand = ProblemSpec::linear(FracOrder::new(0.5, 0.0).unwrap(), 0.0, 1.0, 1.0);
    hand.nonlin = Nonlinearity::new(Arc::new(|_, u, _, _| 0.1 * u), [0.1, 0.0, 0.0]);
    let hand_value = match contraction_lambda(&hand) {
        Ok(v) => v,
        Err(e) => return Verdict::new(false, e.to_string()),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut solved, mut impulsive, mut worst_gap, mut drawn) = (0, 0, f64::NEG_INFINITY, 0);
    while solved < 20 {
        drawn += 1;
        if drawn > 200 {
            return Verdict::new(false, format!("only {solved} instances with Lambda < 1 in 200 draws"));
        }
        let spec = random_problem(&mut rng);
        let lambda = match contraction_lambda(&spec) {
            Ok(l) if l < 1.0 => l,
            _ => continue,
        };
        let rep = match picard_solve(&spec, 128, 1e-12, 300) {
            Ok(r) => r,
            Err(e) => return Verdict::new(false, format!("instance {drawn}: {e}")),
        };
        if !rep.converged {
            let tail: Vec<String> = rep.residual_history.iter().rev().take(4).map(|r| format!("{r:.2e}")).collect();
            return Verdict::new(
                false,
                format!("instance {drawn} (Lambda = {lambda:.3}) did not converge, last updates {}", tail.join(" ")),
            );
        }
        if let Some(r) = rep.tail_ratio(3, 1e-13) {
            worst_gap = worst_gap.max(r - lambda);
        }
        solved += 1;
        impulsive += usize::from(spec.mesh.m() > 0);
    }
    let pass = (hand_value - 0.1).abs() <= 1e-15 && worst_gap <= 0.1;
    Verdict::new(
        pass,
        format!(
            "20 instances ({impulsive} impulsive) converged, max tail ratio - Lambda = {worst_gap:.3}; hand example Lambda = {hand_value}"
        ),
    )
}
