use hilfer_core::fracops::FracOrder;
use hilfer_core::gronwall::{
    gronwall_bound, gronwall_bound_simple, seeded_instance, verify_dominance, verify_dominance_with, verify_sweep, BoundForm,
    GronwallInstance, OracleRule,
};
use hilfer_core::model::Generator;
use hilfer_core::solver::{resolvent_kernels, KernelMethod};

use super::{max_abs, rel_err};
use crate::Verdict;

const SEED: u64 = 7;
const INSTANCES: usize = 100;
const ORACLE_GRID: usize = 1024;

/// Dominated instances of the seeded sweep and the worst relative excess.
fn dominated_count(form: BoundForm) -> Result<(usize, f64), String> {
    let sweep = verify_sweep(SEED, INSTANCES, ORACLE_GRID, form).map_err(|e| e.to_string())?;
    let ok = sweep.iter().filter(|(_, rep)| rep.dominated()).count();
    let worst = sweep.iter().map(|(_, rep)| rep.worst_relative).fold(f64::NEG_INFINITY, f64::max);
    Ok((ok, worst))
}

pub fn gronwall_dominance() -> Verdict {
    let (published, absorbed) = match (dominated_count(BoundForm::Published), dominated_count(BoundForm::Absorbed)) {
        (Ok(p), Ok(a)) => (p, a),
        (Err(e), _) | (_, Err(e)) => return Verdict::new(false, e),
    };

    // the same instances with delta set to 0, where the published bound is provable
    let mut delta_zero = 0;
    for index in 0..INSTANCES as u64 {
        let mut inst = seeded_instance(SEED, index);
        inst.delta = 0.0;
        match verify_dominance(&inst, ORACLE_GRID, BoundForm::Published) {
            Ok(rep) => delta_zero += usize::from(rep.dominated()),
            Err(e) => return Verdict::new(false, e.to_string()),
        }
    }

    // delta = 0 without impulses: the general formula against the single-exponential closed form
    let mut reduction: f64 = 0.0;
    for index in 0..20 {
        let mut inst = seeded_instance(SEED, index);
        inst.delta = 0.0;
        inst.impulse_times.clear();
        inst.betas.clear();
        for k in 1..=10 {
            let t = inst.a + (inst.horizon - inst.a) * k as f64 / 10.0;
            match (gronwall_bound(&inst, t), gronwall_bound_simple(&inst, t)) {
                (Ok(b), Ok(s)) => reduction = max_abs([reduction, rel_err(b, s)]),
                _ => return Verdict::new(false, format!("reduction failed on instance {index}")),
            }
        }
    }

    // alpha = 1: u <= c + lambda int u has the extremal c e^{lambda t}
    let (c, lambda) = (1.5, 0.8);
    let inst = GronwallInstance::simple(1.0, 0.0, 1.0, c, lambda);
    let classical = match verify_dominance_with(&inst, 4096, BoundForm::Published, OracleRule::Trapezoid) {
        // the bound is defined for t > a only
        Ok(rep) => max_abs(rep.nodes.iter().enumerate().skip(1).flat_map(|(k, &t)| {
            let exact = c * (lambda * t).exp();
            [rep.u_tilde[k] - exact, rep.bound[k] - exact]
        })),
        Err(e) => return Verdict::new(false, e.to_string()),
    };

    let pass = published.0 == INSTANCES && reduction <= 1e-12 && classical <= 1e-6;
    Verdict::new(
        pass,
        format!(
            "published bound dominates {}/{INSTANCES} (worst rel excess {:.2e}); with delta = 0 {delta_zero}/{INSTANCES}; \
             absorbed form {}/{INSTANCES} (worst {:.2e}); delta = 0 reduction {reduction:.2e}; alpha = 1 case {classical:.2e}",
            published.0, published.1, absorbed.0, absorbed.1
        ),
    )
}

pub fn resolvent_agreement() -> Verdict {
    let mut worst: f64 = 0.0;
    for alpha in [0.4, 0.7] {
        for beta in [0.0, 0.5, 1.0] {
            let order = FracOrder::new(alpha, beta).unwrap();
            for lambda in [-1.0, -0.25, 0.5] {
                let generator = Generator::Scalar(lambda);
                let (closed, wright) = match (
                    resolvent_kernels(order, &generator, 1.0, KernelMethod::ClosedFormMl),
                    resolvent_kernels(order, &generator, 1.0, KernelMethod::WrightQuadrature),
                ) {
                    (Ok(c), Ok(w)) => (c, w),
                    (Err(e), _) | (_, Err(e)) => return Verdict::new(false, e.to_string()),
                };
                for k in 1..=20 {
                    let t = k as f64 / 20.0;
                    let pairs = [
                        (closed.k_a_eig(lambda, t), wright.k_a_eig(lambda, t)),
                        (closed.p_ab_eig(lambda, t), wright.p_ab_eig(lambda, t)),
                    ];
                    for (c, w) in pairs {
                        match (c, w) {
                            (Ok(c), Ok(w)) => worst = max_abs([worst, rel_err(w, c)]),
                            (Err(e), _) | (_, Err(e)) => {
                                return Verdict::new(false, format!("alpha={alpha} beta={beta} lambda={lambda} t={t}: {e}"))
                            }
                        }
                    }
                }
            }
        }
    }
    Verdict::new(worst <= 1e-5, format!("max relative K/P disagreement {worst:.2e} over 360 points"))
}
