//! Regenerates the worked examples of both models as named CSV files.

use std::path::Path;

use armcoag::closed_form::{self, limit, size_marginal, smoluchowski_reference};
use armcoag::io::{fmt_f64, write_grids_csv};
use armcoag::{borel, DiscreteMeasure, Kernel, ModelSpec, TruncationSpec};

use crate::commands::{emit, Outcome};
use crate::config::Sink;
use crate::failure::Failure;

const TIMES: [f64; 3] = [0.5, 1.0, 2.0];
const PREGEL_TIMES: [f64; 3] = [0.25, 0.5, 0.9];
const SIZES: usize = 30;

pub const CONSTANT_KERNEL_FILE: &str = "oriented_dirac1_constant_kernel.csv";
pub const ADDITIVE_KERNEL_FILE: &str = "oriented_poisson_additive_kernel.csv";
pub const MULTIPLICATIVE_KERNEL_FILE: &str = "symmetric_poisson_multiplicative_kernel.csv";

fn lib<T>(r: armcoag::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::from_lib("measure", e))
}

fn table_file(dir: &Path, name: &str, spec: &ModelSpec, trunc: TruncationSpec, times: &[f64]) -> Outcome {
    let grids = times
        .iter()
        .map(|&t| lib(closed_form::table(spec, t, trunc)).map(|g| (t, g)))
        .collect::<Result<Vec<_>, _>>()?;
    emit(Sink::File(dir.join(name)), |w| write_grids_csv(w, grids.iter().map(|(t, g)| (*t, g))))
}

fn rows_file(dir: &Path, name: &str, header: &[&str], columns: &str, rows: Vec<Vec<String>>) -> Outcome {
    emit(Sink::File(dir.join(name)), |w| {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "{columns}")?;
        for r in rows {
            writeln!(w, "{}", r.join(","))?;
        }
        Ok(())
    })
}

fn window(a_max: usize, m_max: usize) -> TruncationSpec {
    TruncationSpec::new(a_max, m_max, 1.0).expect("static window")
}

pub fn run(dir: &Path) -> Outcome {
    let oriented = |mu: armcoag::Result<DiscreteMeasure>| lib(mu.and_then(ModelSpec::oriented));
    let symmetric = |mu: armcoag::Result<DiscreteMeasure>| lib(mu.and_then(ModelSpec::symmetric));

    // Oriented model.
    let dirac1 = oriented(DiscreteMeasure::dirac(1, 1.0))?;
    table_file(dir, "oriented_dirac1.csv", &dirac1, window(2, SIZES), &TIMES)?;
    let mut rows = Vec::new();
    for t in TIMES {
        let s = 2.0 * t;
        for m in 1..=SIZES {
            let c = lib(closed_form::concentration(&dirac1, t, 1, m))?;
            let r = lib(smoluchowski_reference(Kernel::Constant, s, m))?;
            rows.push(vec![fmt_f64(t), m.to_string(), fmt_f64(c), fmt_f64(s), fmt_f64(r), fmt_f64((c - r).abs())]);
        }
    }
    rows_file(
        dir,
        CONSTANT_KERNEL_FILE,
        &[
            "oriented model, one arm per monomer, against the constant-kernel monodisperse solution",
            "mapping: c(1, m) at time t equals the kernel-1 solution at time s = 2t,",
            "that is the kernel-2 solution at the same time t; all other arm counts vanish",
        ],
        "t,m,c_oriented,s,c_reference,abs_diff",
        rows,
    )?;

    let binomial = oriented(DiscreteMeasure::binomial(4, 0.25))?;
    table_file(dir, "oriented_binomial4.csv", &binomial, window(20, SIZES), &TIMES)?;

    let poisson = oriented(DiscreteMeasure::poisson_with_tolerance(1.0, 1e-17))?;
    table_file(dir, "oriented_poisson.csv", &poisson, window(20, SIZES), &TIMES)?;
    let mut rows = Vec::new();
    for t in TIMES {
        let s = t.ln_1p();
        for m in 1..=SIZES {
            let c = lib(size_marginal(&poisson, t, m))?;
            let r = lib(smoluchowski_reference(Kernel::Additive, s, m))?;
            rows.push(vec![fmt_f64(t), m.to_string(), fmt_f64(c), fmt_f64(s), fmt_f64(r), fmt_f64((c - r).abs())]);
        }
    }
    rows_file(
        dir,
        ADDITIVE_KERNEL_FILE,
        &[
            "oriented model, Poisson(1) arms, size marginal sum_a c(a, m) against the additive-kernel monodisperse solution",
            "mapping: time t of the arm model corresponds to time s = ln(1 + t) of the additive kernel",
        ],
        "t,m,c_size,s,c_reference,abs_diff",
        rows,
    )?;

    let negbin = oriented(DiscreteMeasure::negative_binomial(2.0, 0.75, 120))?;
    table_file(dir, "oriented_negbin.csv", &negbin, window(20, SIZES), &TIMES)?;
    let mut rows = Vec::new();
    for m in 1..=SIZES {
        for a in 0..=20 {
            rows.push(vec![a.to_string(), m.to_string(), fmt_f64(lib(limit(&negbin, a, m))?)]);
        }
    }
    rows_file(
        dir,
        "oriented_negbin_limit.csv",
        &["oriented model, negative binomial(2, 3/4) arms (D = 1/3), terminal concentrations as t -> infinity"],
        "a,m,c_limit",
        rows,
    )?;

    // Symmetric model.
    let dirac1 = symmetric(DiscreteMeasure::dirac(1, 1.0))?;
    table_file(dir, "symmetric_dirac1.csv", &dirac1, window(2, 4), &TIMES)?;
    let dirac2 = symmetric(DiscreteMeasure::dirac(2, 0.5))?;
    table_file(dir, "symmetric_half_dirac2.csv", &dirac2, window(3, SIZES), &TIMES)?;
    let dirac3 = symmetric(DiscreteMeasure::dirac(3, 1.0 / 3.0))?;
    table_file(dir, "symmetric_third_dirac3.csv", &dirac3, window(SIZES + 2, SIZES), &PREGEL_TIMES)?;
    let poisson = symmetric(DiscreteMeasure::poisson_with_tolerance(1.0, 1e-17))?;
    table_file(dir, "symmetric_poisson.csv", &poisson, window(20, SIZES), &TIMES)?;
    let mut rows = Vec::new();
    for m in 1..=SIZES {
        let c = lib(limit(&poisson, 0, m))?;
        let r = lib(borel(1.0, m as u64))? / m as f64;
        rows.push(vec![m.to_string(), fmt_f64(c), fmt_f64(r), fmt_f64((c - r).abs())]);
    }
    rows_file(
        dir,
        MULTIPLICATIVE_KERNEL_FILE,
        &[
            "symmetric model, Poisson(1) arms, terminal arm-free concentrations c(0, m) as t -> infinity",
            "against the multiplicative-kernel monodisperse solution at its gelation time 1, B(1, m) / m",
        ],
        "m,c_limit,c_reference,abs_diff",
        rows,
    )?;
    Ok(())
}
