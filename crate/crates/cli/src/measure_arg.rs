//! Measure literals: `name:paramlist`, or a JSON file.

use std::path::Path;

use armcoag::DiscreteMeasure;

use crate::failure::Failure;

/// Truncation tail used for Poisson laws when no bound is given.
const DEFAULT_TAIL: f64 = 1e-17;
const DEFAULT_NEGBIN_BOUND: usize = 120;

pub const GRAMMAR: &str = "\
MEASURE LITERALS
  dirac<k>[:w]            weight w (default 1) on k arms, e.g. dirac3:1/3
  binomial:n[,p]          binomial(n, p), p defaults to 1/n
  poisson[:lambda[,bound]]  Poisson law truncated at `bound`
                          (default: tail below 1e-17), lambda defaults to 1
  negbin:r,p[,bound]      negative binomial, truncated at `bound` (default 120)
  weights:w0,w1,...       explicit weights on 0, 1, 2, ... arms
  file:PATH | PATH.json   JSON {\"weights\": [...], \"tail_mass\": x}
Numbers accept fractions such as 1/3.";

fn bad(reason: impl Into<String>) -> Failure {
    Failure::config("measure", reason)
}

pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    match s.split_once('/') {
        Some((num, den)) => {
            let (num, den) = (num.trim().parse::<f64>().ok()?, den.trim().parse::<f64>().ok()?);
            (den != 0.0).then(|| num / den)
        }
        None => s.parse().ok(),
    }
}

fn numbers(params: &str) -> Result<Vec<f64>, Failure> {
    if params.trim().is_empty() {
        return Ok(Vec::new());
    }
    params
        .split(',')
        .map(|p| parse_number(p).ok_or_else(|| bad(format!("`{p}` is not a number"))))
        .collect()
}

fn integer(v: f64, what: &str) -> Result<u64, Failure> {
    if v.fract() == 0.0 && v >= 0.0 && v <= u32::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(bad(format!("{what} must be a nonnegative integer, got {v}")))
    }
}

fn arity(name: &str, args: &[f64], lo: usize, hi: usize) -> Result<(), Failure> {
    if args.len() < lo || args.len() > hi {
        return Err(bad(format!("`{name}` takes {lo} to {hi} parameters, got {}", args.len())));
    }
    Ok(())
}

pub fn parse_measure(literal: &str) -> Result<DiscreteMeasure, Failure> {
    let literal = literal.trim();
    if let Some(path) = literal.strip_prefix("file:") {
        return read_json(Path::new(path));
    }
    if literal.ends_with(".json") {
        return read_json(Path::new(literal));
    }
    let (name, params) = literal.split_once(':').unwrap_or((literal, ""));
    let lift = |r: armcoag::Result<DiscreteMeasure>| r.map_err(|e| bad(e.to_string()));

    if let Some(k) = name.strip_prefix("dirac") {
        let k: usize = k.parse().map_err(|_| bad(format!("`{name}`: expected dirac<k> with integer k")))?;
        let args = numbers(params)?;
        arity(name, &args, 0, 1)?;
        return lift(DiscreteMeasure::dirac(k, args.first().copied().unwrap_or(1.0)));
    }
    let args = numbers(params)?;
    match name {
        "binomial" => {
            arity(name, &args, 1, 2)?;
            let n = integer(args[0], "binomial n")?;
            if n == 0 && args.len() == 1 {
                return Err(bad("binomial n must be positive when p is omitted"));
            }
            lift(DiscreteMeasure::binomial(n, args.get(1).copied().unwrap_or(1.0 / n as f64)))
        }
        "poisson" => {
            arity(name, &args, 0, 2)?;
            let lambda = args.first().copied().unwrap_or(1.0);
            match args.get(1) {
                Some(&b) => lift(DiscreteMeasure::poisson(lambda, integer(b, "poisson bound")? as usize)),
                None => lift(DiscreteMeasure::poisson_with_tolerance(lambda, DEFAULT_TAIL)),
            }
        }
        "negbin" => {
            arity(name, &args, 2, 3)?;
            let bound = match args.get(2) {
                Some(&b) => integer(b, "negbin bound")? as usize,
                None => DEFAULT_NEGBIN_BOUND,
            };
            lift(DiscreteMeasure::negative_binomial(args[0], args[1], bound))
        }
        "weights" => {
            if args.is_empty() {
                return Err(bad("`weights` needs at least one weight"));
            }
            lift(DiscreteMeasure::new(args))
        }
        other => Err(bad(format!("unknown measure family `{other}`"))),
    }
}

fn read_json(path: &Path) -> Result<DiscreteMeasure, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    DiscreteMeasure::from_json_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families() {
        let m = parse_measure("dirac3:1/3").unwrap();
        assert_eq!(m.weight(3), 1.0 / 3.0);
        assert_eq!(parse_measure("dirac1").unwrap().weights(), &[0.0, 1.0]);
        let b = parse_measure("binomial:4").unwrap();
        assert!((b.weight(0) - 0.75f64.powi(4)).abs() < 1e-15);
        assert!((parse_measure("poisson").unwrap().mass() - 1.0).abs() < 1e-15);
        assert_eq!(parse_measure("poisson:1,10").unwrap().support_bound(), 10);
        assert_eq!(parse_measure("negbin:2,0.75,30").unwrap().support_bound(), 30);
        assert_eq!(parse_measure("weights:0.2,0.6,0.2").unwrap().weights(), &[0.2, 0.6, 0.2]);
    }

    #[test]
    fn rejects_malformed() {
        for lit in ["dirac", "diracx", "binomial", "binomial:2.5", "negbin:2", "weights:", "gauss:1", "weights:a"] {
            let e = parse_measure(lit).unwrap_err();
            assert_eq!(e.code(), 2, "{lit}");
            assert!(e.to_string().contains("measure"), "{lit}: {e}");
        }
    }

    #[test]
    fn reads_json_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mu.json");
        std::fs::write(&p, r#"{"weights": [0.5, 0.5], "tail_mass": 0.0}"#).unwrap();
        assert_eq!(parse_measure(p.to_str().unwrap()).unwrap().weights(), &[0.5, 0.5]);
        let lit = format!("file:{}", p.display());
        assert_eq!(parse_measure(&lit).unwrap().weights(), &[0.5, 0.5]);
    }
}
