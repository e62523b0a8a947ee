use hilfer_core::fracops::{frac_integral_grid, hilfer_derivative_grid, uniform_nodes, FracOrder, PsiFunction, SampledFunction};
use hilfer_core::specfun::{gamma_fn, mittag_leffler, wright_moment, wright_moment_with, MomentMode};

use super::{max_abs, rel_err};
use crate::Verdict;

pub fn special_functions() -> Verdict {
    let mut worst_exp: f64 = 0.0;
    for k in 0..=400 {
        let z = -20.0 + 0.1 * k as f64;
        match mittag_leffler(1.0, 1.0, z) {
            Ok(r) => worst_exp = max_abs([worst_exp, rel_err(r.value, z.exp())]),
            Err(e) => return Verdict::new(false, format!("E_1,1({z}) failed: {e}")),
        }
    }
    let cosh = match mittag_leffler(2.0, 1.0, 1.0) {
        Ok(r) => max_abs([r.value - 1f64.cosh()]),
        Err(e) => return Verdict::new(false, format!("E_2,1(1) failed: {e}")),
    };
    let mut worst_zero: f64 = 0.0;
    for i in 0..20 {
        let alpha = 0.1 + 0.1 * i as f64;
        let beta = 0.5 + 0.5 * ((7 * i) % 20) as f64;
        let v = mittag_leffler(alpha, beta, 0.0).map(|r| r.value).unwrap_or(f64::NAN);
        worst_zero = max_abs([worst_zero, v * gamma_fn(beta).unwrap_or(f64::NAN) - 1.0]);
    }
    let pass = worst_exp <= 1e-10 && cosh <= 1e-10 && worst_zero <= 1e-12;
    Verdict::new(
        pass,
        format!("max rel |E_1,1 - e^z| = {worst_exp:.2e}, |E_2,1(1) - cosh 1| = {cosh:.2e}, max |E(0)Gamma(b) - 1| = {worst_zero:.2e}"),
    )
}

pub fn wright_moments() -> Verdict {
    let mut worst: f64 = 0.0;
    for alpha in [0.3, 0.5, 0.7] {
        for dbar in [0.0, 1.0, 2.0] {
            match wright_moment_with(alpha, dbar, MomentMode::Quadrature) {
                Ok(q) => worst = max_abs([worst, rel_err(q, wright_moment(alpha, dbar))]),
                Err(e) => return Verdict::new(false, format!("moment ({alpha}, {dbar}) failed: {e}")),
            }
        }
    }
    Verdict::new(worst <= 1e-6, format!("max relative moment error {worst:.2e}"))
}

/// Max relative error of I^alpha (Psi - Psi(a))^{mu-1} at the nodes k n / 8, k = 1..8.
/// (Near the left end the target is O(h^{mu+alpha-1}) and a piecewise-linear
/// interpolant of the integrand is off by O(1) relative on the first cell.)
fn power_rule_error(psi: &PsiFunction, a: f64, b: f64, mu: f64, alpha: f64, n: usize) -> Result<f64, String> {
    let w = |s: f64| match psi {
        PsiFunction::Log => s.ln(),
        _ => s - a,
    };
    let nodes = uniform_nodes(a, b, n);
    let u = SampledFunction::from_fn(nodes.clone(), |s| w(s).powf(mu - 1.0)).map_err(|e| e.to_string())?;
    let got = frac_integral_grid(psi, alpha, &u).map_err(|e| e.to_string())?;
    let c = gamma_fn(mu).unwrap() / gamma_fn(mu + alpha).unwrap();
    Ok(max_abs((1..=8).map(|j| j * n / 8).map(|k| rel_err(got[k], c * w(nodes[k]).powf(mu + alpha - 1.0)))))
}

pub fn power_rule() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut min_order = f64::INFINITY;
    for (psi, a, b, name) in
        [(PsiFunction::Identity, 0.0, 1.0, "Riemann-Liouville"), (PsiFunction::Log, 1.0, 1f64.exp(), "Hadamard")]
    {
        for mu in [1.0, 1.5, 2.0, 3.0] {
            for alpha in [0.3, 0.5, 0.9] {
                let (coarse, fine) =
                    match (power_rule_error(&psi, a, b, mu, alpha, 1024), power_rule_error(&psi, a, b, mu, alpha, 2048)) {
                        (Ok(c), Ok(f)) => (c, f),
                        (Err(e), _) | (_, Err(e)) => return Verdict::new(false, format!("{name} mu={mu} alpha={alpha}: {e}")),
                    };
                worst = max_abs([worst, fine]);
                // exact for mu = 1 (constant integrand); the order is only meaningful above roundoff
                if coarse > 1e-12 {
                    min_order = min_order.min((coarse / fine).log2());
                }
            }
        }
    }
    Verdict::new(
        worst <= 1e-4 && min_order >= 1.0,
        format!("max rel error at t = T/8, ..., T with N=2048 {worst:.2e}, min observed order {min_order:.2}"),
    )
}

pub fn kernel_annihilation() -> Verdict {
    let n = 4096;
    let nodes = uniform_nodes(0.0, 1.0, n);
    let mut worst: f64 = 0.0;
    for alpha in [0.4, 0.6, 0.9] {
        for beta in [0.0, 0.5, 1.0] {
            let order = FracOrder::new(alpha, beta).unwrap();
            let u = SampledFunction::with_singularity(nodes.clone(), vec![1.0; n + 1], order.gamma - 1.0).unwrap();
            match hilfer_derivative_grid(&order, &u) {
                Ok(d) => worst = max_abs(d[1..n].iter().copied().chain([worst])),
                Err(e) => return Verdict::new(false, format!("alpha={alpha} beta={beta}: {e}")),
            }
        }
    }
    Verdict::new(worst <= 1e-3, format!("max |D t^(gamma-1)| at interior nodes {worst:.2e}"))
}
