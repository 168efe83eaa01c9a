//! CSV and JSON export. Floats are written with 17 significant digits.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::grid::{ConcentrationGrid, Overflow};
use crate::kinetics::{StepStats, Trajectory};
use crate::montecarlo::EmpiricalTrajectory;

/// Round-trip float formatting.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Rows `t,a,m,c` for a set of grids, ordered by `t`, then `m`, then `a`.
pub fn write_grids_csv<'a, W: Write>(
    w: W,
    grids: impl IntoIterator<Item = (f64, &'a ConcentrationGrid)>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", "a", "m", "c"])?;
    for (t, g) in grids {
        let ts = fmt_f64(t);
        for (a, m, c) in g.iter() {
            wtr.write_record([ts.as_str(), &a.to_string(), &m.to_string(), &fmt_f64(c)])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory) -> Result<()> {
    write_grids_csv(w, traj.snapshots.iter().map(|s| (s.t, &s.grid)))
}

/// Rows `t,C,A,M2` with `M2` the second factorial arm moment.
pub fn write_moments_csv<W: Write>(w: W, traj: &Trajectory) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", "C", "A", "M2"])?;
    for s in &traj.snapshots {
        let m = &s.moments;
        wtr.write_record([fmt_f64(s.t), fmt_f64(m.mass), fmt_f64(m.mean), fmt_f64(m.second_factorial)])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct MomentRow {
    t: f64,
    count: f64,
    arms: f64,
    second_factorial: f64,
    second_arm_moment: f64,
    total_mass: f64,
    leak_fraction: f64,
    overflow: Overflow,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    model: String,
    a_max: usize,
    m_max: usize,
    leak_tolerance: f64,
    halted_at: Option<f64>,
    steps: &'a StepStats,
    moments: Vec<MomentRow>,
}

/// Moment curves, reservoir accumulators and step statistics.
pub fn write_trajectory_sidecar<W: Write>(w: W, traj: &Trajectory) -> Result<()> {
    let trunc = traj.last().grid.trunc;
    let moments = traj
        .snapshots
        .iter()
        .map(|s| MomentRow {
            t: s.t,
            count: s.moments.mass,
            arms: s.moments.mean,
            second_factorial: s.moments.second_factorial,
            second_arm_moment: s.second_arm_moment(),
            total_mass: s.grid.total_mass(),
            leak_fraction: s.grid.leak_fraction(),
            overflow: s.grid.overflow,
        })
        .collect();
    let sidecar = Sidecar {
        model: traj.kind.to_string(),
        a_max: trunc.a_max,
        m_max: trunc.m_max,
        leak_tolerance: trunc.leak_tolerance,
        halted_at: traj.halted_at,
        steps: &traj.stats,
        moments,
    };
    serde_json::to_writer_pretty(w, &sidecar)?;
    Ok(())
}

/// Rows `t,a,m,c_hat,n,seed` for every observed particle type.
pub fn write_empirical_csv<W: Write>(w: W, traj: &EmpiricalTrajectory) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", "a", "m", "c_hat", "n", "seed"])?;
    let (n, seed) = (traj.n.to_string(), traj.seed.to_string());
    for s in &traj.snapshots {
        let ts = fmt_f64(s.t);
        for (&(m, a), &count) in &s.counts {
            wtr.write_record([
                ts.as_str(),
                &a.to_string(),
                &m.to_string(),
                &fmt_f64(count as f64 / traj.volume),
                &n,
                &seed,
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// One JSON object per line: event index, time and both reactants.
pub fn write_event_log<W: Write>(mut w: W, traj: &EmpiricalTrajectory) -> Result<()> {
    for e in traj.event_log.iter().flatten() {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::ModelSpec;
    use crate::grid::TruncationSpec;
    use crate::kinetics::integrate;
    use crate::measures::DiscreteMeasure;
    use crate::montecarlo::simulate_logged;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 2.5e-300, 123456.789] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn trajectory_exports() {
        let spec = ModelSpec::oriented(DiscreteMeasure::dirac(1, 1.0).unwrap()).unwrap();
        let tr = TruncationSpec::new(2, 3, 1e-6).unwrap();
        let traj = integrate(&spec, tr, 1.0, 1e-8).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,a,m,c");
        assert_eq!(lines.len(), 1 + traj.snapshots.len() * 9);
        assert!(lines[1].ends_with(",0,1,0.0000000000000000e0"));
        assert!(lines[2].ends_with(",1,1,1.0000000000000000e0"));

        let mut buf = Vec::new();
        write_moments_csv(&mut buf, &traj).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,C,A,M2\n"));

        let mut buf = Vec::new();
        write_trajectory_sidecar(&mut buf, &traj).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["model"], "oriented");
        assert_eq!(v["moments"].as_array().unwrap().len(), traj.snapshots.len());
        assert!(v["steps"]["accepted"].as_u64().unwrap() > 0);
    }

    #[test]
    fn empirical_exports() {
        let spec = ModelSpec::oriented(DiscreteMeasure::dirac(1, 1.0).unwrap()).unwrap();
        let traj = simulate_logged(&spec, 50, 0.5, 7, &[], true).unwrap();
        let mut buf = Vec::new();
        write_empirical_csv(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,a,m,c_hat,n,seed\n"));
        assert!(text.lines().nth(1).unwrap().ends_with(",1,1,1.0000000000000000e0,50,7"));
        let mut buf = Vec::new();
        write_event_log(&mut buf, &traj).unwrap();
        let n = String::from_utf8(buf).unwrap().lines().count() as u64;
        assert_eq!(n, traj.events);
    }
}
