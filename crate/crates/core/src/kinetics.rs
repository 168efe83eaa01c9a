//! Truncated kinetic systems integrated with an adaptive Dormand-Prince
//! 5(4) scheme.
//!
//! The explicit window holds `c(a, m)` for `a <= a_max`, `m <= m_max`.
//! Particles created outside it join a reservoir described by its count and
//! first two arm moments. Both kernels close on those moments, so the
//! reservoir still acts as a coagulation partner and the totals `C`, `A`,
//! `<c, a^2>` remain exact. The only inexactness is re-entry of particles
//! that left through the arm boundary at an in-window size; their mass is
//! tallied in [`Overflow::arm_leak_mass`].

use serde::Serialize;

use crate::closed_form::{critical_time, ModelKind, ModelSpec};
use crate::error::{Error, Result};
use crate::grid::{ConcentrationGrid, Overflow, TruncationSpec};
use crate::measures::MomentSummary;

/// Entries above this negative value are accepted silently before clamping.
pub const NEGATIVE_SLACK: f64 = 1e-12;

const SAFETY: f64 = 0.9;
const MAX_GROWTH: f64 = 5.0;
const MIN_SHRINK: f64 = 0.2;
const PI_BETA: f64 = 0.04;
const PI_ALPHA: f64 = 0.2 - 0.75 * PI_BETA;
const INITIAL_STEP: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;
const DEFAULT_SNAPSHOTS: usize = 40;

#[derive(Clone, Copy)]
struct RowMoments {
    c: f64,
    a: f64,
    s: f64,
    t: f64,
}

/// Kernel weight of an (ordered) pair.
#[inline]
fn kernel(kind: ModelKind, a1: usize, a2: usize) -> f64 {
    match kind {
        ModelKind::Oriented => (a1 + a2) as f64,
        ModelKind::Symmetric => (a1 * a2) as f64,
    }
}

/// Arm count of a product, `None` for pairs that cannot react.
#[inline]
fn product_arms(kind: ModelKind, a1: usize, a2: usize) -> Option<usize> {
    match kind {
        ModelKind::Oriented => (a1 + a2).checked_sub(1),
        ModelKind::Symmetric if a1 > 0 && a2 > 0 => Some(a1 + a2 - 2),
        ModelKind::Symmetric => None,
    }
}

/// Time derivative of the truncated state, written into `out` and `dov`.
fn rhs_into(
    kind: ModelKind,
    trunc: &TruncationSpec,
    values: &[f64],
    ov: &Overflow,
    out: &mut [f64],
    dov: &mut Overflow,
) {
    let rows = trunc.rows();
    let m_max = trunc.m_max;
    out.iter_mut().for_each(|v| *v = 0.0);
    *dov = Overflow::default();

    let mut stats = Vec::with_capacity(m_max);
    let mut nonzero: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m_max);
    let (mut cg, mut ag) = (0.0, 0.0);
    for m in 1..=m_max {
        let row = &values[(m - 1) * rows..m * rows];
        let mut st = RowMoments {
            c: 0.0,
            a: 0.0,
            s: 0.0,
            t: 0.0,
        };
        let mut nz = Vec::new();
        for (a, &c) in row.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let af = a as f64;
            st.c += c;
            st.a += af * c;
            st.s += af * af * c;
            st.t += af * af * af * c;
            // Armless particles are inert in the symmetric model.
            if kind == ModelKind::Oriented || a > 0 {
                nz.push((a, c));
            }
        }
        cg += st.c;
        ag += st.a;
        stats.push(st);
        nonzero.push(nz);
    }
    let (co, ao, so) = (ov.count, ov.arms, ov.arms_sq);
    let (ctot, atot) = (cg + co, ag + ao);

    // Loss and grid/reservoir encounters.
    for m in 1..=m_max {
        let mf = m as f64;
        for &(a, c) in &nonzero[m - 1] {
            let af = a as f64;
            let i = (m - 1) * rows + a;
            match kind {
                ModelKind::Oriented => {
                    out[i] -= c * (af * ctot + atot);
                    let absorbed = c * (af * co + ao);
                    let d = af - 1.0;
                    dov.arms += d * absorbed;
                    dov.arms_sq += c * (af * (2.0 * d * ao + d * d * co) + 2.0 * d * so + d * d * ao);
                    dov.mass += mf * absorbed;
                    dov.arms_routed += af * absorbed;
                }
                ModelKind::Symmetric => {
                    out[i] -= c * af * atot;
                    let absorbed = c * af * ao;
                    let d = af - 2.0;
                    dov.arms += d * absorbed;
                    dov.arms_sq += c * af * (2.0 * d * so + d * d * ao);
                    dov.mass += mf * absorbed;
                    dov.arms_routed += af * absorbed;
                }
            }
        }
    }

    // Reservoir self-encounters.
    match kind {
        ModelKind::Oriented => {
            dov.count -= ao * co;
            dov.arms -= ao * co;
            dov.arms_sq += 2.0 * so * ao - 2.0 * so * co - 2.0 * ao * ao + ao * co;
        }
        ModelKind::Symmetric => {
            dov.count -= 0.5 * ao * ao;
            dov.arms -= ao * ao;
            dov.arms_sq += so * so - 4.0 * so * ao + 2.0 * ao * ao;
        }
    }

    // Grid/grid encounters, by pair of size rows.
    for m1 in 1..=m_max {
        for m2 in m1..=m_max {
            let half = if m1 == m2 { 0.5 } else { 1.0 };
            let mp = m1 + m2;
            if mp > m_max {
                let (r1, r2) = (stats[m1 - 1], stats[m2 - 1]);
                let (rate, arms, arms_sq) = match kind {
                    ModelKind::Oriented => {
                        let rate = r1.a * r2.c + r1.c * r2.a;
                        let k2 = r1.s * r2.c + 2.0 * r1.a * r2.a + r1.c * r2.s;
                        let k3 = r1.t * r2.c + 3.0 * r1.s * r2.a + 3.0 * r1.a * r2.s + r1.c * r2.t;
                        (rate, k2 - rate, k3 - 2.0 * k2 + rate)
                    }
                    ModelKind::Symmetric => {
                        let rate = r1.a * r2.a;
                        let k2 = r1.s * r2.a + r1.a * r2.s;
                        let k3 = r1.t * r2.a + 2.0 * r1.s * r2.s + r1.a * r2.t;
                        (rate, k2 - 2.0 * rate, k3 - 4.0 * k2 + 4.0 * rate)
                    }
                };
                dov.count += half * rate;
                dov.arms += half * arms;
                dov.arms_sq += half * arms_sq;
                dov.arms_routed += half * arms;
                dov.mass += half * mp as f64 * rate;
                continue;
            }
            let base = (mp - 1) * rows;
            for &(a1, c1) in &nonzero[m1 - 1] {
                for &(a2, c2) in &nonzero[m2 - 1] {
                    let Some(ap) = product_arms(kind, a1, a2) else {
                        continue;
                    };
                    let w = half * kernel(kind, a1, a2) * c1 * c2;
                    if ap <= trunc.a_max {
                        out[base + ap] += w;
                    } else {
                        let af = ap as f64;
                        let mass = mp as f64 * w;
                        dov.count += w;
                        dov.arms += af * w;
                        dov.arms_sq += af * af * w;
                        dov.arms_routed += af * w;
                        dov.mass += mass;
                        dov.arm_leak_mass += mass;
                    }
                }
            }
        }
    }
}

fn rhs_grid(kind: ModelKind, grid: &ConcentrationGrid) -> ConcentrationGrid {
    let mut out = vec![0.0; grid.trunc.len()];
    let mut dov = Overflow::default();
    rhs_into(kind, &grid.trunc, grid.values(), &grid.overflow, &mut out, &mut dov);
    ConcentrationGrid::from_parts(grid.trunc, out, dov)
}

/// Derivative of the oriented system. The returned grid's `overflow` holds
/// the reservoir derivatives.
pub fn rhs_oriented(grid: &ConcentrationGrid) -> ConcentrationGrid {
    rhs_grid(ModelKind::Oriented, grid)
}

/// Derivative of the symmetric system. The returned grid's `overflow` holds
/// the reservoir derivatives.
pub fn rhs_symmetric(grid: &ConcentrationGrid) -> ConcentrationGrid {
    rhs_grid(ModelKind::Symmetric, grid)
}

pub fn rhs(kind: ModelKind, grid: &ConcentrationGrid) -> ConcentrationGrid {
    rhs_grid(kind, grid)
}

/// `|<derivative, f> - weak-form right-hand side|`, with the right-hand side
/// assembled by direct enumeration of every ordered in-window pair plus the
/// loss against the reservoir. Products landing outside the window count as
/// `f = 0`.
pub fn weak_residual(
    kind: ModelKind,
    grid: &ConcentrationGrid,
    derivative: &ConcentrationGrid,
    f: impl Fn(usize, usize) -> f64,
) -> f64 {
    let lhs = derivative.pair_with(&f);
    let cells: Vec<_> = grid.iter().filter(|c| c.2 != 0.0).collect();
    let mut rhs = 0.0;
    for &(a1, m1, c1) in &cells {
        for &(a2, m2, c2) in &cells {
            let Some(ap) = product_arms(kind, a1, a2) else {
                continue;
            };
            let w = 0.5 * kernel(kind, a1, a2) * c1 * c2;
            let mp = m1 + m2;
            let gain = if ap <= grid.trunc.a_max && mp <= grid.trunc.m_max {
                f(ap, mp)
            } else {
                0.0
            };
            rhs += (gain - f(a1, m1) - f(a2, m2)) * w;
        }
    }
    let o = &grid.overflow;
    for &(a, m, c) in &cells {
        let af = a as f64;
        let partner = match kind {
            ModelKind::Oriented => af * o.count + o.arms,
            ModelKind::Symmetric => af * o.arms,
        };
        rhs -= f(a, m) * c * partner;
    }
    (lhs - rhs).abs()
}

/// Accepted/rejected step counts and extremes along one integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
    pub min_step: f64,
    pub max_step: f64,
    /// Most negative grid entry seen before clamping (0 if none).
    pub min_entry: f64,
    /// Number of grid entries below `-NEGATIVE_SLACK` before clamping.
    pub slack_violations: usize,
}

impl Default for StepStats {
    fn default() -> Self {
        Self {
            accepted: 0,
            rejected: 0,
            rhs_evaluations: 0,
            min_step: f64::INFINITY,
            max_step: 0.0,
            min_entry: 0.0,
            slack_violations: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub grid: ConcentrationGrid,
    pub moments: MomentSummary,
}

impl Snapshot {
    fn new(t: f64, grid: ConcentrationGrid) -> Self {
        let moments = grid.moments();
        Self { t, grid, moments }
    }

    /// `<c, a^2>` including the reservoir.
    pub fn second_arm_moment(&self) -> f64 {
        self.grid.second_arm_moment()
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub kind: ModelKind,
    pub snapshots: Vec<Snapshot>,
    pub stats: StepStats,
    /// Set when blow-up exploration stopped the run early.
    pub halted_at: Option<f64>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory holds the initial snapshot")
    }

    /// Snapshot whose time equals `t` up to rounding.
    pub fn at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots
            .iter()
            .find(|s| (s.t - t).abs() <= 1e-12 * t.abs().max(1.0))
    }
}

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    /// Error tolerance; the per-component scale is `tol * max(1, |y|)`.
    pub tol: f64,
    /// Output times after 0, strictly increasing; the last one is `t_end`.
    pub times: Vec<f64>,
    /// Allow symmetric runs past the critical time and stop quietly when
    /// the step underflows.
    pub blow_up: bool,
}

impl IntegrateOptions {
    pub fn new(t_end: f64, tol: f64) -> Result<Self> {
        Ok(Self {
            tol,
            times: geometric_schedule(t_end, DEFAULT_SNAPSHOTS)?,
            blow_up: false,
        })
    }

    pub fn with_times(times: Vec<f64>, tol: f64) -> Self {
        Self {
            tol,
            times,
            blow_up: false,
        }
    }

    pub fn blow_up(mut self, on: bool) -> Self {
        self.blow_up = on;
        self
    }

    pub fn t_end(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

/// `n` times from `t_end / 1000` to `t_end`, equally spaced in log.
pub fn geometric_schedule(t_end: f64, n: usize) -> Result<Vec<f64>> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::arg("t_end", format!("must be positive and finite, got {t_end}")));
    }
    if n == 0 {
        return Err(Error::arg("n", "need at least one snapshot"));
    }
    if n == 1 {
        return Ok(vec![t_end]);
    }
    let lo = t_end * 1e-3;
    let mut v: Vec<f64> = (0..n)
        .map(|i| lo * (t_end / lo).powf(i as f64 / (n - 1) as f64))
        .collect();
    v[n - 1] = t_end;
    Ok(v)
}

/// Times `target (1 - ratio^i)`, `i = 1..=n`, accumulating toward `target`.
pub fn approach_schedule(target: f64, n: usize, ratio: f64) -> Result<Vec<f64>> {
    if !(target.is_finite() && target > 0.0) {
        return Err(Error::arg("target", format!("must be positive and finite, got {target}")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::arg("ratio", format!("must lie in (0, 1), got {ratio}")));
    }
    Ok((1..=n as i32).map(|i| target * (1.0 - ratio.powi(i))).collect())
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::arg("times", "no output times"));
    }
    let mut prev = 0.0;
    for &t in times {
        if !(t.is_finite() && t > prev) {
            return Err(Error::arg(
                "times",
                format!("must be finite, positive and strictly increasing; saw {t} after {prev}"),
            ));
        }
        prev = t;
    }
    Ok(())
}

/// Integrate from monomers distributed as `spec`'s arm law.
pub fn integrate(spec: &ModelSpec, trunc: TruncationSpec, t_end: f64, tol: f64) -> Result<Trajectory> {
    integrate_with(spec, trunc, &IntegrateOptions::new(t_end, tol)?)
}

pub fn integrate_with(spec: &ModelSpec, trunc: TruncationSpec, opts: &IntegrateOptions) -> Result<Trajectory> {
    if spec.kind() == ModelKind::Symmetric && !opts.blow_up {
        let tc = critical_time(spec)?;
        if !tc.admits(opts.t_end()) {
            return Err(Error::OutOfDomain(format!(
                "t_end = {} reaches the critical time {}; enable blow-up exploration to continue",
                opts.t_end(),
                tc.value()
            )));
        }
    }
    let grid = ConcentrationGrid::monomers(trunc, spec.measure())?;
    integrate_grid(spec.kind(), grid, opts)
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct System {
    kind: ModelKind,
    trunc: TruncationSpec,
    n: usize,
}

impl System {
    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let (yg, yo) = y.split_at(self.n);
        let (dg, dout) = dy.split_at_mut(self.n);
        let mut dov = Overflow::default();
        rhs_into(self.kind, &self.trunc, yg, &Overflow::from_slice(yo), dg, &mut dov);
        dov.to_slice(dout);
    }

    fn grid(&self, y: &[f64]) -> ConcentrationGrid {
        ConcentrationGrid::from_parts(self.trunc, y[..self.n].to_vec(), Overflow::from_slice(&y[self.n..]))
    }
}

/// Integrate an arbitrary initial grid.
pub fn integrate_grid(kind: ModelKind, initial: ConcentrationGrid, opts: &IntegrateOptions) -> Result<Trajectory> {
    check_times(&opts.times)?;
    if !(opts.tol.is_finite() && opts.tol > 0.0) {
        return Err(Error::arg("tol", format!("must be positive, got {}", opts.tol)));
    }
    if initial.values().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::arg("initial", "entries must be finite and nonnegative"));
    }
    let trunc = initial.trunc;
    let sys = System {
        kind,
        trunc,
        n: trunc.len(),
    };
    let dim = sys.n + Overflow::STATE_LEN;
    let mut y = initial.values().to_vec();
    y.resize(dim, 0.0);
    initial.overflow.to_slice(&mut y[sys.n..]);

    let mut stats = StepStats::default();
    let mut snapshots = vec![Snapshot::new(0.0, initial)];
    let mut halted_at = None;

    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    sys.eval(&y, &mut k[0]);
    stats.rhs_evaluations += 1;

    let mut t = 0.0f64;
    let mut h = INITIAL_STEP;
    let mut err_prev = 1e-4f64;
    let mut next = 0usize;

    'outer: while next < opts.times.len() {
        let target = opts.times[next];
        let remaining = target - t;
        let lands = h >= remaining * (1.0 - 1e-12);
        let step = if lands { remaining } else { h };
        if step < MIN_STEP && !lands {
            if opts.blow_up {
                halted_at = Some(t);
                break;
            }
            return Err(Error::StepUnderflow { last_time: t, step });
        }

        macro_rules! combine {
            ($($coef:expr => $idx:expr),+) => {
                for i in 0..dim {
                    stage[i] = y[i] + step * (0.0 $(+ $coef * k[$idx][i])+);
                }
            };
        }
        combine!(A21 => 0);
        sys.eval(&stage, &mut k[1]);
        combine!(A31 => 0, A32 => 1);
        sys.eval(&stage, &mut k[2]);
        combine!(A41 => 0, A42 => 1, A43 => 2);
        sys.eval(&stage, &mut k[3]);
        combine!(A51 => 0, A52 => 1, A53 => 2, A54 => 3);
        sys.eval(&stage, &mut k[4]);
        combine!(A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
        sys.eval(&stage, &mut k[5]);
        for i in 0..dim {
            y_new[i] = y[i] + step * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
        }
        sys.eval(&y_new, &mut k[6]);
        stats.rhs_evaluations += 6;

        let mut err = 0.0f64;
        for i in 0..dim {
            let e = step
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            let scale = opts.tol * y[i].abs().max(y_new[i].abs()).max(1.0);
            err = err.max((e / scale).abs());
        }
        if !err.is_finite() {
            err = f64::INFINITY;
        }

        if err <= 1.0 {
            stats.accepted += 1;
            stats.min_step = stats.min_step.min(step);
            stats.max_step = stats.max_step.max(step);
            t = if lands { target } else { t + step };
            std::mem::swap(&mut y, &mut y_new);
            let mut clamped = false;
            for v in y.iter_mut().take(sys.n) {
                if *v < 0.0 {
                    stats.min_entry = stats.min_entry.min(*v);
                    if *v < -NEGATIVE_SLACK {
                        stats.slack_violations += 1;
                    }
                    *v = 0.0;
                    clamped = true;
                }
            }
            // Reservoir count and arm moments are nonnegative by construction.
            for v in &mut y[sys.n + 3..] {
                if *v < 0.0 {
                    *v = 0.0;
                    clamped = true;
                }
            }
            if clamped {
                sys.eval(&y, &mut k[0]);
                stats.rhs_evaluations += 1;
            } else {
                k.swap(0, 6);
            }

            let grid = sys.grid(&y);
            let leak = grid.leak_fraction();
            if leak > trunc.leak_tolerance {
                return Err(Error::LeakExceeded {
                    leak,
                    tolerance: trunc.leak_tolerance,
                    time: t,
                });
            }
            if lands {
                snapshots.push(Snapshot::new(t, grid));
                next += 1;
            }

            let factor = SAFETY * err.max(1e-10).powf(-PI_ALPHA) * err_prev.powf(PI_BETA);
            let grown = step * factor.clamp(MIN_SHRINK, MAX_GROWTH);
            // A step shortened to land on an output time does not cap the next one.
            h = if lands { grown.max(h) } else { grown };
            err_prev = err.max(1e-4);
        } else {
            stats.rejected += 1;
            let factor = if err.is_finite() {
                (SAFETY * err.powf(-0.2)).max(MIN_SHRINK)
            } else {
                MIN_SHRINK
            };
            h = step * factor.min(1.0);
            if h < MIN_STEP {
                if opts.blow_up {
                    halted_at = Some(t);
                    break 'outer;
                }
                return Err(Error::StepUnderflow { last_time: t, step: h });
            }
        }
    }

    Ok(Trajectory {
        kind,
        snapshots,
        stats,
        halted_at,
    })
}

/// First time the second arm moment `<c, a^2>` reaches `r`, linearly
/// interpolated between the bracketing snapshots.
pub fn detect_gamma_r(trajectory: &Trajectory, r: f64) -> Option<f64> {
    let mut prev: Option<(f64, f64)> = None;
    for s in &trajectory.snapshots {
        let q = s.second_arm_moment();
        if q >= r {
            return Some(match prev {
                None => s.t,
                Some((t0, q0)) => t0 + (s.t - t0) * (r - q0) / (q - q0),
            });
        }
        prev = Some((s.t, q));
    }
    None
}
