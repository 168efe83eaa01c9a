//! Run configuration: an optional JSON file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use armcoag::{ModelKind, ModelSpec, TruncationSpec};
use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::failure::Failure;
use crate::measure_arg::{self, parse_measure};

pub const OUT_DIR_ENV: &str = "ARMCOAG_OUT_DIR";

const DEFAULT_T: f64 = 1.0;
const DEFAULT_WINDOW: usize = 20;
const DEFAULT_LEAK: f64 = 1e-6;
const DEFAULT_TOL: f64 = 1e-10;
const DEFAULT_N: usize = 100_000;

const FIELDS: [&str; 11] = [
    "model",
    "measure",
    "t",
    "times",
    "a_max",
    "m_max",
    "leak_tolerance",
    "tol",
    "out",
    "seed",
    "n",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Oriented,
    Symmetric,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Oriented => ModelKind::Oriented,
            ModelArg::Symmetric => ModelKind::Symmetric,
        }
    }
}

/// Every field is optional; flags take precedence over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunConfig {
    /// JSON file with any of the long option names below as keys
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Coagulation model [default: oriented]
    #[arg(long, global = true, value_enum)]
    pub model: Option<ModelArg>,
    /// Initial arm law of monomers, see MEASURE LITERALS
    #[arg(long, global = true, value_name = "LITERAL")]
    pub measure: Option<String>,
    /// Final time [default: 1]
    #[arg(long, global = true)]
    pub t: Option<f64>,
    /// Comma-separated output times; overrides --t
    #[arg(long, global = true, value_delimiter = ',', num_args = 1..)]
    pub times: Option<Vec<f64>>,
    /// Largest arm count kept in the table [default: 20]
    #[arg(long, global = true)]
    pub a_max: Option<usize>,
    /// Largest size kept in the table [default: 20]
    #[arg(long, global = true)]
    pub m_max: Option<usize>,
    /// Admissible mass fraction leaked through the arm boundary [default: 1e-6]
    #[arg(long, global = true)]
    pub leak_tolerance: Option<f64>,
    /// Integrator error tolerance [default: 1e-10]
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Output file or directory; `-` writes to stdout
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Monte Carlo seed [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo particle count [default: 100000]
    #[arg(long, global = true)]
    pub n: Option<usize>,
}

fn field<T: DeserializeOwned>(obj: &Map<String, Value>, key: &str) -> Result<Option<T>, Failure> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| Failure::config(key, e.to_string())),
    }
}

impl RunConfig {
    /// Parses a config file; unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self, Failure> {
        let value: Value = serde_json::from_str(text).map_err(|e| Failure::config("config", e.to_string()))?;
        let Value::Object(obj) = value else {
            return Err(Failure::config("config", "expected a JSON object"));
        };
        if let Some(k) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
            return Err(Failure::config(k.as_str(), format!("unknown field, expected one of {FIELDS:?}")));
        }
        let model = match field::<String>(&obj, "model")? {
            None => None,
            Some(s) => Some(ModelArg::from_str(&s, true).map_err(|_| {
                Failure::config("model", format!("expected `oriented` or `symmetric`, got `{s}`"))
            })?),
        };
        Ok(RunConfig {
            config: None,
            model,
            measure: field(&obj, "measure")?,
            t: field(&obj, "t")?,
            times: field(&obj, "times")?,
            a_max: field(&obj, "a_max")?,
            m_max: field(&obj, "m_max")?,
            leak_tolerance: field(&obj, "leak_tolerance")?,
            tol: field(&obj, "tol")?,
            out: field(&obj, "out")?,
            seed: field(&obj, "seed")?,
            n: field(&obj, "n")?,
        })
    }

    fn overlay(self, file: RunConfig) -> RunConfig {
        RunConfig {
            config: self.config,
            model: self.model.or(file.model),
            measure: self.measure.or(file.measure),
            t: self.t.or(file.t),
            times: self.times.or(file.times),
            a_max: self.a_max.or(file.a_max),
            m_max: self.m_max.or(file.m_max),
            leak_tolerance: self.leak_tolerance.or(file.leak_tolerance),
            tol: self.tol.or(file.tol),
            out: self.out.or(file.out),
            seed: self.seed.or(file.seed),
            n: self.n.or(file.n),
        }
    }

    /// Merges the config file (if any) under the flags and validates.
    pub fn resolve(self) -> Result<Resolved, Failure> {
        let merged = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::config("config", format!("cannot read {}: {e}", path.display())))?;
                self.overlay(RunConfig::from_json(&text)?)
            }
            None => self,
        };
        merged.validate()
    }

    fn validate(self) -> Result<Resolved, Failure> {
        let kind: ModelKind = self.model.unwrap_or(ModelArg::Oriented).into();
        let literal = self
            .measure
            .ok_or_else(|| Failure::config("measure", format!("required\n\n{}", measure_arg::GRAMMAR)))?;
        let measure = parse_measure(&literal)?;
        let spec = ModelSpec::new(kind, measure).map_err(|e| Failure::from_lib("measure", e))?;

        let times = match self.times {
            Some(ts) => {
                if ts.is_empty() {
                    return Err(Failure::config("times", "must not be empty"));
                }
                if ts.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                    return Err(Failure::config("times", "entries must be finite and nonnegative"));
                }
                if ts.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Failure::config("times", "must be strictly increasing"));
                }
                ts
            }
            None => {
                let t = self.t.unwrap_or(DEFAULT_T);
                if !(t.is_finite() && t >= 0.0) {
                    return Err(Failure::config("t", format!("must be finite and nonnegative, got {t}")));
                }
                vec![t]
            }
        };
        let tol = self.tol.unwrap_or(DEFAULT_TOL);
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Failure::config("tol", format!("must lie in (0, 1), got {tol}")));
        }
        let n = self.n.unwrap_or(DEFAULT_N);
        if n < 2 {
            return Err(Failure::config("n", format!("need at least 2 particles, got {n}")));
        }
        let a_max = self.a_max.unwrap_or(DEFAULT_WINDOW);
        let m_max = self.m_max.unwrap_or(DEFAULT_WINDOW);
        if m_max == 0 {
            return Err(Failure::config("m_max", "must be at least 1"));
        }
        let leak = self.leak_tolerance.unwrap_or(DEFAULT_LEAK);
        let trunc = TruncationSpec::new(a_max, m_max, leak).map_err(|e| Failure::from_lib("leak_tolerance", e))?;
        Ok(Resolved {
            spec,
            trunc,
            times,
            tol,
            out: self.out,
            seed: self.seed.unwrap_or(0),
            n,
        })
    }
}

/// A validated run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub spec: ModelSpec,
    pub trunc: TruncationSpec,
    pub times: Vec<f64>,
    pub tol: f64,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub n: usize,
}

impl Resolved {
    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("times is never empty")
    }
}

/// Where a single-file output goes.
pub enum Sink {
    Stdout,
    File(PathBuf),
}

/// `--out` if given (`-` for stdout), else `name` inside the default
/// output directory.
pub fn sink(out: Option<&Path>, name: &str) -> Sink {
    match out {
        Some(p) if p == Path::new("-") => Sink::Stdout,
        Some(p) if p.is_dir() => Sink::File(p.join(name)),
        Some(p) => Sink::File(p.to_path_buf()),
        None => Sink::File(default_dir().join(name)),
    }
}

pub fn default_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_names_the_field() {
        let e = RunConfig::from_json(r#"{"measure": "dirac1", "tee": 1}"#).unwrap_err();
        assert_eq!(e.code(), 2);
        assert!(e.to_string().contains("`tee`"), "{e}");
    }

    #[test]
    fn type_errors_name_the_field() {
        let e = RunConfig::from_json(r#"{"a_max": "big"}"#).unwrap_err();
        assert!(e.to_string().contains("`a_max`"), "{e}");
        let e = RunConfig::from_json(r#"{"model": "sideways"}"#).unwrap_err();
        assert!(e.to_string().contains("`model`"), "{e}");
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig::from_json(r#"{"measure": "dirac1", "t": 2.0, "a_max": 5}"#).unwrap();
        let flags = RunConfig {
            t: Some(0.5),
            ..Default::default()
        };
        let r = flags.overlay(file).validate().unwrap();
        assert_eq!(r.times, vec![0.5]);
        assert_eq!(r.trunc.a_max, 5);
    }

    #[test]
    fn validation_names_fields() {
        let base = || RunConfig {
            measure: Some("dirac1".into()),
            ..Default::default()
        };
        let cases = [
            (RunConfig { t: Some(-1.0), ..base() }, "`t`"),
            (RunConfig { times: Some(vec![1.0, 0.5]), ..base() }, "`times`"),
            (RunConfig { n: Some(1), ..base() }, "`n`"),
            (RunConfig { tol: Some(0.0), ..base() }, "`tol`"),
            (RunConfig { measure: Some("weights:0.5".into()), ..base() }, "`measure`"),
            (RunConfig { measure: None, ..base() }, "`measure`"),
        ];
        for (cfg, needle) in cases {
            let e = cfg.validate().unwrap_err();
            assert_eq!(e.code(), 2);
            assert!(e.to_string().contains(needle), "{e}");
        }
    }
}
