use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hilfer_core::specfun::gamma_fn;

use crate::Verdict;

const LINEAR: &str = r#"{"order": {"alpha": 0.5, "beta": 0.5}, "mesh": {"T": 1.0}, "u0": 1.0}"#;

const IMPULSIVE: &str = r#"{
  "order": {"alpha": 0.7, "beta": 1.0},
  "mesh": {"T": 1.0, "t": [0.4, 1.0], "s": [0.0, 0.5]},
  "generator": {"kind": "scalar", "lambda": -0.5},
  "nonlinearity": {"expr": "0.1*sin(u)", "L": [0.1, 0, 0]},
  "impulses": [{"expr": "0.2*u + 0.5", "L": 0.2}],
  "u0": 1.0
}"#;

const BAD_MESH: &str = r#"{
  "order": {"alpha": 0.7, "beta": 1.0},
  "mesh": {"T": 1.0, "t": [0.6, 1.0], "s": [0.0, 0.5]},
  "impulses": [{"expr": "0.2*u", "L": 0.2}],
  "u0": 1.0
}"#;

fn kit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hilfer-kit")).args(args).env("HILFER_KIT_THREADS", "2").output().expect("run hilfer-kit")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

/// Runs a command twice with different output files and compares the bytes.
fn repeatable(dir: &Path, name: &str, args: &[&str]) -> Result<(i32, String), String> {
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = dir.join(format!("{name}{k}.csv"));
        let mut full: Vec<&str> = args.to_vec();
        let out_str = out.to_str().unwrap().to_string();
        full.extend(["--out", &out_str]);
        let o = kit(&full);
        let csv =
            fs::read(&out).map_err(|e| format!("{name}: no output ({e}); stderr {}", String::from_utf8_lossy(&o.stderr)))?;
        let manifest: serde_json::Value = serde_json::from_slice(
            &fs::read(format!("{out_str}.manifest.json")).map_err(|e| format!("{name}: no manifest ({e})"))?,
        )
        .map_err(|e| e.to_string())?;
        runs.push((code(&o), csv, manifest));
    }
    let key =
        |m: &serde_json::Value| (m["command"].clone(), m["config_hash"].clone(), m["seed"].clone(), m["tool_version"].clone());
    if key(&runs[0].2) != key(&runs[1].2) {
        return Err(format!("{name}: manifest keys differ"));
    }
    if runs[0].1 != runs[1].1 || runs[0].0 != runs[1].0 {
        return Err(format!("{name}: outputs differ between identical runs"));
    }
    Ok((runs[0].0, String::from_utf8_lossy(&runs[0].1).into_owned()))
}

fn check(dir: &Path) -> Result<String, String> {
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        fs::write(&p, text).expect("write config");
        p.to_str().unwrap().to_string()
    };
    let (linear, impulsive, bad) =
        (write("linear.json", LINEAR), write("impulsive.json", IMPULSIVE), write("bad.json", BAD_MESH));
    let broken = write("broken.json", "{\"order\": {\"alpha\": 0.5");

    // lambda = 0: the weighted solution is the constant 1/Gamma(gamma)
    let (c, csv) = repeatable(dir, "solve", &["solve", "--config", &linear, "--grid", "512"])?;
    if c != 0 {
        return Err(format!("solve exited {c}"));
    }
    let want = 1.0 / gamma_fn(0.75).unwrap();
    let worst = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).and_then(|w| w.parse::<f64>().ok()).map_or(f64::INFINITY, |w| (w - want).abs()))
        .fold(0.0, f64::max);
    if worst > 1e-12 {
        return Err(format!("lambda = 0 solve deviates from t^(gamma-1)/Gamma(gamma) by {worst:.2e}"));
    }

    let (c, _) =
        repeatable(dir, "stability", &["stability", "--config", &impulsive, "--grid", "128", "--perturb", "eps=0.01,phi=exp"])?;
    if c != 0 {
        return Err(format!("stability exited {c}"));
    }
    let (published, _) = repeatable(dir, "verify", &["bound", "verify", "--seed", "7", "--instances", "5"])?;
    let (c, csv) = repeatable(dir, "absorbed", &["bound", "verify", "--seed", "7", "--instances", "5", "--form", "absorbed"])?;
    let margins_ok =
        csv.lines().skip(1).all(|l| l.rsplit(',').next().and_then(|m| m.parse::<f64>().ok()).is_some_and(|m| m <= 1e-9));
    if c != 0 || !margins_ok || csv.lines().count() != 6 {
        return Err(format!("bound verify (absorbed) exited {c} with margins ok = {margins_ok}"));
    }
    repeatable(dir, "mlf", &["specfun", "eval", "--fn", "mlf", "--args", "0.5,1,-1"])?;

    let o = kit(&["solve", "--config", &bad]);
    let stderr = String::from_utf8_lossy(&o.stderr);
    if code(&o) != 2 || !stderr.contains("mesh ordering") {
        return Err(format!("bad mesh: exit {} with {stderr:?}", code(&o)));
    }
    let o = kit(&["solve", "--config", &broken]);
    if code(&o) != 2 || !String::from_utf8_lossy(&o.stderr).contains("problem file") {
        return Err(format!("truncated JSON: exit {}", code(&o)));
    }
    let o = kit(&["solve", "--config", &linear, "--frobnicate"]);
    if code(&o) != 1 {
        return Err(format!("unknown flag: exit {}", code(&o)));
    }
    Ok(format!(
        "solve, stability, bound verify and specfun outputs byte-identical across runs; bad mesh exits 2 naming \"mesh ordering\"; \
         published-form bound verify exits {published}"
    ))
}

pub fn cli_determinism() -> Verdict {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Verdict::new(false, e.to_string()),
    };
    match check(dir.path()) {
        Ok(detail) => Verdict::new(true, detail),
        Err(detail) => Verdict::new(false, detail),
    }
}
