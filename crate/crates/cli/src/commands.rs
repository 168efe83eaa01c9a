use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use armcoag::closed_form::{self, critical_time};
use armcoag::io::{fmt_f64, write_empirical_csv, write_event_log, write_grids_csv, write_trajectory_csv, write_trajectory_sidecar};
use armcoag::kinetics::{approach_schedule, detect_gamma_r, geometric_schedule, integrate_with};
use armcoag::montecarlo::simulate_logged;
use armcoag::{ConcentrationGrid, EmpiricalTrajectory, IntegrateOptions, Trajectory, TruncationSpec};
use clap::ValueEnum;

use crate::config::{sink, Resolved, Sink};
use crate::failure::Failure;

/// Snapshot count for the approach to the critical time.
const APPROACH_POINTS: usize = 1000;
const APPROACH_RATIO: f64 = 0.99;

pub type Outcome = Result<(), Failure>;

fn lib<T>(field: &str, r: armcoag::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::from_lib(field, e))
}

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::config("out", format!("{}: {e}", path.display()))
}

/// Runs `body` against the sink and reports the file written.
pub fn emit(sink: Sink, body: impl FnOnce(&mut dyn Write) -> armcoag::Result<()>) -> Outcome {
    match sink {
        Sink::Stdout => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            lib("out", body(&mut lock))
        }
        Sink::File(path) => {
            let f = File::create(&path).map_err(|e| io_fail(&path, e))?;
            let mut w = BufWriter::new(f);
            lib("out", body(&mut w))?;
            w.flush().map_err(|e| io_fail(&path, e))?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

pub fn tables(run: &Resolved) -> Result<Vec<(f64, ConcentrationGrid)>, Failure> {
    run.times
        .iter()
        .map(|&t| lib("t", closed_form::table(&run.spec, t, run.trunc)).map(|g| (t, g)))
        .collect()
}

pub fn solve(run: &Resolved) -> Outcome {
    let grids = tables(run)?;
    emit(sink(run.out.as_deref(), "solve.csv"), |w| {
        write_grids_csv(w, grids.iter().map(|(t, g)| (*t, g)))
    })
}

fn options(run: &Resolved) -> Result<IntegrateOptions, Failure> {
    if run.times.len() == 1 {
        lib("t", IntegrateOptions::new(run.t_end(), run.tol))
    } else {
        Ok(IntegrateOptions::with_times(run.times.clone(), run.tol))
    }
}

pub fn trajectory(run: &Resolved) -> Result<Trajectory, Failure> {
    let opts = options(run)?;
    lib("t", integrate_with(&run.spec, run.trunc, &opts))
}

pub fn integrate(run: &Resolved) -> Outcome {
    let traj = trajectory(run)?;
    let target = sink(run.out.as_deref(), "trajectory.csv");
    let sidecar = match &target {
        Sink::File(p) => Some(p.with_extension("json")),
        Sink::Stdout => None,
    };
    emit(target, |w| write_trajectory_csv(w, &traj))?;
    if let Some(p) = sidecar {
        emit(Sink::File(p), |w| write_trajectory_sidecar(w, &traj))?;
    }
    Ok(())
}

pub fn empirical(run: &Resolved, log: bool) -> Result<EmpiricalTrajectory, Failure> {
    // The initial state is always recorded, so t = 0 is not a snapshot request.
    let times: Vec<f64> = run.times.iter().copied().filter(|&t| t > 0.0).collect();
    lib("t", simulate_logged(&run.spec, run.n, run.t_end(), run.seed, &times, log))
}

pub fn mc(run: &Resolved, events: Option<&Path>) -> Outcome {
    let traj = empirical(run, events.is_some())?;
    emit(sink(run.out.as_deref(), "mc.csv"), |w| write_empirical_csv(w, &traj))?;
    if let Some(p) = events {
        emit(Sink::File(p.to_path_buf()), |w| write_event_log(w, &traj))?;
    }
    Ok(())
}

/// `<c, a^2>` before gelation for a unit-mean arm law.
fn second_moment_formula(m: f64, t: f64) -> f64 {
    m / ((1.0 + t) * (1.0 + t * (1.0 - m))) + 1.0 / (1.0 + t)
}

/// First crossing of `r` by [`second_moment_formula`] on `times`, refined by
/// bisection.
fn gamma_from_formula(m: f64, times: &[f64], r: f64) -> Option<f64> {
    let q = |t| second_moment_formula(m, t) - r;
    let mut lo = 0.0;
    for &t in times {
        if q(t) >= 0.0 {
            let mut hi = t;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if q(mid) >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        lo = t;
    }
    None
}

pub fn geltime(run: &Resolved, levels: &[f64]) -> Outcome {
    let tc = lib("model", critical_time(&run.spec))?;
    println!("T={}", tc.value());
    if levels.is_empty() {
        return Ok(());
    }
    if let Some(r) = levels.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Failure::config("gamma", format!("levels must be positive, got {r}")));
    }
    let times = if tc.is_finite() {
        lib("t", approach_schedule(tc.value(), APPROACH_POINTS, APPROACH_RATIO))?
    } else {
        lib("t", geometric_schedule(run.t_end(), APPROACH_POINTS))?
    };
    let opts = IntegrateOptions::with_times(times.clone(), run.tol).blow_up(true);
    // The reservoir keeps the arm moments exact for any window, so the leak
    // bound is lifted here.
    let trunc = lib("leak_tolerance", TruncationSpec::new(run.trunc.a_max, run.trunc.m_max, 1.0))?;
    let traj = lib("t", integrate_with(&run.spec, trunc, &opts))?;
    let m = run.spec.second_factorial();
    let horizon = traj.last().t;
    for &r in levels {
        match detect_gamma_r(&traj, r) {
            Some(t) => {
                let formula = gamma_from_formula(m, &times, r).map_or_else(|| "none".to_string(), fmt_f64);
                println!("gamma_r({r}) ode={} formula={formula}", fmt_f64(t));
            }
            None => println!("gamma_r({r}) not reached before t={}", fmt_f64(horizon)),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Source {
    Solve,
    Integrate,
    Mc,
}

fn source_grids(run: &Resolved, source: Source) -> Result<Vec<ConcentrationGrid>, Failure> {
    match source {
        Source::Solve => Ok(tables(run)?.into_iter().map(|(_, g)| g).collect()),
        Source::Integrate => {
            let opts = IntegrateOptions::with_times(run.times.clone(), run.tol);
            let traj = lib("t", integrate_with(&run.spec, run.trunc, &opts))?;
            Ok(run
                .times
                .iter()
                .map(|&t| traj.at(t).expect("snapshot at every requested time").grid.clone())
                .collect())
        }
        Source::Mc => {
            let traj = empirical(run, false)?;
            Ok(run
                .times
                .iter()
                .map(|&t| {
                    let k = traj.snapshots.iter().position(|s| s.t == t).expect("snapshot at every requested time");
                    let mut g = ConcentrationGrid::zeros(run.trunc);
                    for m in 1..=run.trunc.m_max {
                        for a in 0..=run.trunc.a_max {
                            g.set(a, m, traj.concentration(k, a, m));
                        }
                    }
                    g
                })
                .collect())
        }
    }
}

pub fn compare(run: &Resolved, left: Source, right: Source) -> Outcome {
    let (l, r) = (source_grids(run, left)?, source_grids(run, right)?);
    let worst = l.iter().zip(&r).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max);
    let name = |s: Source| s.to_possible_value().expect("no skipped variants").get_name().to_string();
    println!(
        "left={} right={} model={} t={} window={}x{}",
        name(left),
        name(right),
        run.spec.kind(),
        run.times.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(","),
        run.trunc.a_max,
        run.trunc.m_max
    );
    println!("max_abs_discrepancy={}", fmt_f64(worst));
    Ok(())
}

pub fn out_dir(run_out: Option<&Path>) -> Result<PathBuf, Failure> {
    let dir = run_out.map(Path::to_path_buf).unwrap_or_else(crate::config::default_dir);
    std::fs::create_dir_all(&dir).map_err(|e| io_fail(&dir, e))?;
    Ok(dir)
}
