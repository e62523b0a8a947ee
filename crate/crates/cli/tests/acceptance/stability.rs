use std::sync::Arc;

use hilfer_core::fracops::FracOrder;
use hilfer_core::model::{ImpulseMap, ImpulseMaps, ImpulseMesh, Nonlinearity, Nonlocal, PhiShape, ProblemSpec};
use hilfer_core::solver::picard_solve;
use hilfer_core::stability::{certify_uhr, perturbation_phidata, perturbed_spec, uhr_constant};

use crate::Verdict;

const GRID: usize = 256;

fn instances() -> Vec<(&'static str, ProblemSpec)> {
    let mut one_jump = ProblemSpec::linear(FracOrder::new(0.7, 1.0).unwrap(), -0.5, 1.0, 1.0);
    one_jump.mesh = ImpulseMesh::new(1.0, vec![0.4, 1.0], vec![0.0, 0.5]);
    one_jump.nonlin = Nonlinearity::new(Arc::new(|_, u, _, _| 0.1 * u.sin()), [0.1, 0.0, 0.0]);
    one_jump.impulses =
        ImpulseMaps { maps: vec![ImpulseMap::new(Arc::new(|_, u| 0.2 * u + 0.5), 0.2)], nonlocal: Nonlocal::Zero };

    let mut two_jumps = ProblemSpec::linear(FracOrder::new(0.9, 1.0).unwrap(), 0.3, 0.5, 1.0);
    two_jumps.mesh = ImpulseMesh::new(1.0, vec![0.3, 0.6, 1.0], vec![0.0, 0.35, 0.7]);
    two_jumps.nonlin = Nonlinearity::new(Arc::new(|t, u, _, _| 0.2 * (u + t).cos()), [0.2, 0.0, 0.0]);
    two_jumps.impulses = ImpulseMaps {
        maps: vec![ImpulseMap::new(Arc::new(|_, u| 0.1 * u - 0.2), 0.1), ImpulseMap::new(Arc::new(|t, u| 0.15 * u + t), 0.15)],
        nonlocal: Nonlocal::Constant(0.1),
    };

    let mut forced = ProblemSpec::linear(FracOrder::new(0.6, 0.5).unwrap(), -1.0, 1.0, 1.0);
    forced.nonlin = Nonlinearity::new(Arc::new(|t, _, _, _| 0.3 * t), [0.0, 0.0, 0.0]);
    forced.delta = 0.8;

    vec![("one impulse", one_jump), ("two impulses", two_jumps), ("no impulse, gamma < 1", forced)]
}

pub fn stability() -> Verdict {
    let (mut total, mut good, mut zero_deviation) = (0, 0, true);
    let mut failures = Vec::new();
    let mut constants = Vec::new();
    for (name, spec) in instances() {
        let u = match picard_solve(&spec, GRID, 1e-13, 300) {
            Ok(r) if r.converged => r.trajectory,
            Ok(_) => return Verdict::new(false, format!("{name}: solve did not converge")),
            Err(e) => return Verdict::new(false, format!("{name}: {e}")),
        };
        for eps in [1e-3, 1e-2, 1e-1] {
            for shape in [PhiShape::One, PhiShape::Linear, PhiShape::Exp] {
                for phi_imp in [0.0, eps] {
                    let pd = match perturbation_phidata(&spec, eps, shape, phi_imp) {
                        Ok(pd) => pd,
                        Err(e) => return Verdict::new(false, format!("{name}: {e}")),
                    };
                    if uhr_constant(&spec, &pd).is_err() {
                        continue;
                    }
                    total += 1;
                    let label = format!("{name} eps={eps} phi={} imp={phi_imp}", shape.name());
                    let v = match picard_solve(&perturbed_spec(&spec, eps, shape, phi_imp), GRID, 1e-13, 300) {
                        Ok(r) if r.converged => r.trajectory,
                        Ok(_) => {
                            failures.push(format!("{label}: perturbed solve did not converge"));
                            continue;
                        }
                        Err(e) => {
                            failures.push(format!("{label}: {e}"));
                            continue;
                        }
                    };
                    match certify_uhr(&spec, &u, &v, &pd) {
                        Ok(cert) if cert.verdict => good += 1,
                        Ok(cert) => failures.push(format!("{label}: slack {:.2e}", cert.slack)),
                        Err(e) => failures.push(format!("{label}: {e}")),
                    }
                    if eps == 1e-2 && shape == PhiShape::One && phi_imp == 0.0 {
                        match certify_uhr(&spec, &u, &u, &pd) {
                            Ok(same) => {
                                zero_deviation &= same.observed.iter().all(|&x| x == 0.0);
                                constants.push(format!("{:.3}", same.c));
                            }
                            Err(e) => failures.push(format!("{name} v = u: {e}")),
                        }
                    }
                }
            }
        }
    }
    let pass = total > 0 && good == total && zero_deviation;
    let mut detail =
        format!("{good}/{total} certificates true, v = u gives zero deviation: {zero_deviation}, C = [{}]", constants.join(", "));
    if !failures.is_empty() {
        detail.push_str(&format!("; failures: {}", failures.join("; ")));
    }
    Verdict::new(pass, detail)
}
