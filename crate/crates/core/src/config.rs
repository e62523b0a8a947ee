//! JSON problem files.
//!
//! ```json
//! {"order": {"alpha": 0.5, "beta": 0.5},
//!  "mesh": {"T": 1.0, "t": [0.4, 1.0], "s": [0.0, 0.6]},
//!  "generator": {"kind": "scalar", "lambda": -1.0},
//!  "nonlinearity": {"expr": "0.1*sin(u)", "L": [0.1, 0, 0]},
//!  "kernels": {"K": "t*s", "H": "0"},
//!  "impulses": [{"expr": "0.5*u", "L": 0.5}],
//!  "g": {"at": 1.0, "expr": "0.1*u", "L": 0.1},
//!  "u0": 1.0,
//!  "delta": 1.0}
//! ```
//!
//! Callables are written in the expression language of [`crate::expr`].
//! Structural problems (bad JSON, unparsable expressions, orders out of
//! range) are errors; ordering and Lipschitz problems are left for
//! [`crate::model::validate`] to report.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fracops::FracOrder;
use crate::model::{Generator, ImpulseMap, ImpulseMaps, ImpulseMesh, Nonlinearity, Nonlocal, ProblemSpec, VolterraKernels};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrderFile {
    alpha: f64,
    beta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshFile {
    #[serde(rename = "T")]
    horizon: f64,
    t: Option<Vec<f64>>,
    s: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum GeneratorFile {
    Scalar {
        lambda: f64,
        #[serde(rename = "M")]
        m: Option<f64>,
    },
    Matrix {
        matrix: Vec<Vec<f64>>,
        #[serde(rename = "M")]
        m: Option<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NonlinFile {
    expr: String,
    #[serde(rename = "L")]
    lipschitz: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelsFile {
    #[serde(rename = "K", default = "zero_expr")]
    k: String,
    #[serde(rename = "H", default = "zero_expr")]
    h: String,
}

fn zero_expr() -> String {
    "0".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImpulseFile {
    expr: String,
    #[serde(rename = "L")]
    lipschitz: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum NonlocalFile {
    Constant(f64),
    Point {
        at: f64,
        expr: String,
        #[serde(rename = "L")]
        lipschitz: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum StateFile {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    order: OrderFile,
    mesh: MeshFile,
    generator: Option<GeneratorFile>,
    nonlinearity: Option<NonlinFile>,
    kernels: Option<KernelsFile>,
    #[serde(default)]
    impulses: Vec<ImpulseFile>,
    g: Option<NonlocalFile>,
    u0: StateFile,
    delta: Option<f64>,
}

/// Parses a problem file into a (not yet validated) problem.
pub fn parse_problem(json: &str) -> Result<ProblemSpec> {
    let file: ProblemFile = serde_json::from_str(json).map_err(|e| Error::Invalid(format!("problem file: {e}")))?;
    let order = FracOrder::new(file.order.alpha, file.order.beta)?;
    let mesh = match (file.mesh.t, file.mesh.s) {
        (None, None) => ImpulseMesh::single(file.mesh.horizon),
        (Some(t), Some(s)) => ImpulseMesh::new(file.mesh.horizon, t, s),
        _ => return Err(Error::Invalid("mesh needs both t and s, or neither".into())),
    };
    let (generator, declared_m) = match file.generator {
        None => (Generator::Scalar(0.0), None),
        Some(GeneratorFile::Scalar { lambda, m }) => (Generator::Scalar(lambda), m),
        Some(GeneratorFile::Matrix { matrix, m }) => (Generator::matrix(matrix)?, m),
    };
    let nonlin = match file.nonlinearity {
        None => Nonlinearity::zero(),
        Some(n) => Nonlinearity::from_expr(Expr::parse(&n.expr)?, n.lipschitz)?,
    };
    let kernels = match file.kernels {
        None => VolterraKernels::zero(),
        Some(k) => VolterraKernels::from_exprs(Expr::parse(&k.k)?, Expr::parse(&k.h)?)?,
    };
    let maps =
        file.impulses.iter().map(|i| ImpulseMap::from_expr(Expr::parse(&i.expr)?, i.lipschitz)).collect::<Result<Vec<_>>>()?;
    let nonlocal = match file.g {
        None => Nonlocal::Zero,
        Some(NonlocalFile::Constant(c)) => Nonlocal::Constant(c),
        Some(NonlocalFile::Point { at, expr, lipschitz }) => Nonlocal::point_expr(at, Expr::parse(&expr)?, lipschitz)?,
    };
    let u0 = match file.u0 {
        StateFile::Scalar(x) => vec![x],
        StateFile::Vector(v) => v,
    };
    Ok(ProblemSpec {
        order,
        mesh,
        generator,
        declared_m,
        nonlin,
        kernels,
        impulses: ImpulseMaps { maps, nonlocal },
        u0,
        delta: file.delta.unwrap_or(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;

    const FULL: &str = r#"{
        "order": {"alpha": 0.5, "beta": 0.5},
        "mesh": {"T": 1.0, "t": [0.4, 1.0], "s": [0.0, 0.6]},
        "generator": {"kind": "scalar", "lambda": -1.0},
        "nonlinearity": {"expr": "0.1*sin(u) + 0.05*x2", "L": [0.1, 0.05, 0]},
        "kernels": {"K": "t*s", "H": "0"},
        "impulses": [{"expr": "0.5*u", "L": 0.5}],
        "g": {"at": 1.0, "expr": "0.1*u", "L": 0.1},
        "u0": 1.0,
        "delta": 1.0
    }"#;

    #[test]
    fn full_file_parses_and_validates() {
        let spec = parse_problem(FULL).unwrap();
        assert_eq!(spec.mesh.m(), 1);
        assert_eq!(spec.impulses.maps.len(), 1);
        assert!((spec.nonlin.eval(0.0, 1.0, 2.0, 0.0) - (0.1 * 1f64.sin() + 0.1)).abs() < 1e-15);
        assert!(validate(&spec).passed());
    }

    #[test]
    fn minimal_file() {
        let spec = parse_problem(r#"{"order":{"alpha":1,"beta":0},"mesh":{"T":2},"u0":3}"#).unwrap();
        assert_eq!(spec.mesh, ImpulseMesh::single(2.0));
        assert_eq!(spec.u0, vec![3.0]);
        assert!(validate(&spec).passed());
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(parse_problem("{"), Err(Error::Invalid(_))));
        assert!(matches!(
            parse_problem(r#"{"order":{"alpha":1,"beta":0},"mesh":{"T":1},"u0":1,"extra":0}"#),
            Err(Error::Invalid(_))
        ));
        assert!(matches!(
            parse_problem(r#"{"order":{"alpha":1,"beta":0},"mesh":{"T":1},"u0":1,"nonlinearity":{"expr":"foo(u)","L":[0,0,0]}}"#),
            Err(Error::Parse(_))
        ));
    }
}
