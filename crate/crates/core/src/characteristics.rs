//! Generating functions along characteristics.
//!
//! Both models reduce to the fixed-point map `u -> (1 + beta) u - beta g0(u, y)`
//! on `[0, 1]`: `beta = t` for the critical oriented case and for the
//! symmetric arm-size function, `beta = (e^{Dt} - 1) / D` for the generic
//! oriented case. The inverse of that map gives `g_t` (oriented) or `k_t`
//! (symmetric) in closed form.
//!
//! [`lagrange_series`] expands the solution of `h = y g(p x + q h)` as a
//! double power series, once from the explicit coefficient formula and once
//! by iterating the equation on truncated formal series.

use std::io::Write;

use serde::Serialize;

use crate::closed_form::{critical_time, CaseTag, ModelKind, ModelSpec};
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::special::{assemble, ln_binomial};

/// Below this time the composition form of `g_t` replaces the `1/t` form.
pub const SMALL_TIME: f64 = 1e-6;
const BISECTION_WIDTH: f64 = 1e-10;
const NEWTON_STEPS: usize = 5;

/// A two-variable boundary function `g0(u, y)` with its `u`-derivative.
pub trait InitialGf {
    fn value(&self, u: f64, y: f64) -> f64;
    fn du(&self, u: f64, y: f64) -> f64;
}

/// `g0(u, y) = y sum_a w(a) u^a` for a measure `w`.
#[derive(Debug, Clone, Copy)]
pub struct MeasureGf<'a>(pub &'a DiscreteMeasure);

impl InitialGf for MeasureGf<'_> {
    fn value(&self, u: f64, y: f64) -> f64 {
        y * self.0.gf(u)
    }

    fn du(&self, u: f64, y: f64) -> f64 {
        y * self.0.gf_derivative(u)
    }
}

/// `(1 + beta) u - beta g0(u, y) - x`.
pub fn fixed_point_residual(g0: &dyn InitialGf, beta: f64, u: f64, x: f64, y: f64) -> f64 {
    (1.0 + beta) * u - beta * g0.value(u, y) - x
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::arg(name, format!("must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// Solve `(1 + beta) u - beta g0(u, y) = x` for `u` in `[0, 1]`.
///
/// `g0` must have nonnegative coefficients in `u`, so its derivative is
/// largest at `u = 1`; the map's slope is then at least
/// `1 + beta - beta du(1, y)`, which must reach `slope_bound`.
pub fn solve_characteristic(g0: &dyn InitialGf, beta: f64, x: f64, y: f64, slope_bound: f64) -> Result<f64> {
    check_unit("x", x)?;
    check_unit("y", y)?;
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::arg("beta", format!("must be finite and nonnegative, got {beta}")));
    }
    if slope_bound.is_nan() || slope_bound <= 0.0 {
        return Err(Error::arg("slope_bound", format!("must be positive, got {slope_bound}")));
    }
    if beta == 0.0 {
        return Ok(x);
    }
    let slope = 1.0 + beta - beta * g0.du(1.0, y);
    if slope.is_nan() || slope < slope_bound {
        return Err(Error::OutOfDomain(format!(
            "characteristic map slope {slope} is below the bound {slope_bound}; the map is not invertible"
        )));
    }
    let f = |u: f64| fixed_point_residual(g0, beta, u, x, y);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let (f_lo, f_hi) = (f(lo), f(hi));
    // Endpoint residuals within rounding of zero count as roots.
    let slack = 1e-14 * (1.0 + beta);
    if f_lo > slack || f_hi < -slack {
        return Err(Error::Solver(format!(
            "no bracket on [0, 1] for x={x}, y={y}, beta={beta}: residuals {f_lo:e}, {f_hi:e}"
        )));
    }
    if f_lo >= 0.0 {
        return Ok(lo);
    }
    if f_hi <= 0.0 {
        return Ok(hi);
    }
    while hi - lo > BISECTION_WIDTH {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v == 0.0 {
            return Ok(mid);
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut u = 0.5 * (lo + hi);
    for _ in 0..NEWTON_STEPS {
        let r = f(u);
        if r == 0.0 {
            break;
        }
        let d = 1.0 + beta - beta * g0.du(u, y);
        let next = (u - r / d).clamp(lo, hi);
        if next == u {
            break;
        }
        u = next;
    }
    Ok(u)
}

/// `h_t(x, y)`: inverse of `u -> (1 + t) u - t g0(u, y)`.
pub fn solve_h(g0: &dyn InitialGf, t: f64, x: f64, y: f64, slope_bound: f64) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::arg("t", format!("must be finite and nonnegative, got {t}")));
    }
    solve_characteristic(g0, t, x, y, slope_bound)
}

/// Coefficients of the oriented characteristic at time `t`:
/// `(beta, prefactor, h_coef, x_coef)` with
/// `g_t = prefactor * g0(h, y) = h_coef * h - x_coef * x`.
fn oriented_coefficients(spec: &ModelSpec, t: f64) -> (f64, f64, f64, f64) {
    if spec.case() == CaseTag::Critical {
        (t, 1.0 / (1.0 + t), 1.0 / t, 1.0 / (t * t + t))
    } else {
        let d = spec.diff();
        let e = (d * t).exp_m1();
        let g = (d * t).exp();
        (e / d, d * g / (e + d), d * g / e, d * d * g / ((e + d) * e))
    }
}

fn oriented_slope_bound(spec: &ModelSpec, t: f64) -> f64 {
    // The slope at u = 1, y = 1 is 1 + beta D = e^{Dt}.
    if spec.case() == CaseTag::Critical {
        0.5
    } else {
        0.5 * (spec.diff() * t).exp()
    }
}

/// Oriented `h_t(x, y)` for the model's arm law, any `D`.
pub fn oriented_h(spec: &ModelSpec, t: f64, x: f64, y: f64) -> Result<f64> {
    if spec.kind() != ModelKind::Oriented {
        return Err(Error::arg("spec", "expected an oriented model"));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::arg("t", format!("must be finite and nonnegative, got {t}")));
    }
    let (beta, ..) = oriented_coefficients(spec, t);
    solve_characteristic(&MeasureGf(spec.measure()), beta, x, y, oriented_slope_bound(spec, t))
}

/// Both closed forms of `g_t(x, y)`: `(composition, linear)`. The linear
/// form is `NaN` at `t = 0`.
pub fn eval_gt_forms(spec: &ModelSpec, t: f64, x: f64, y: f64) -> Result<(f64, f64)> {
    let h = oriented_h(spec, t, x, y)?;
    let g0 = MeasureGf(spec.measure());
    if t == 0.0 {
        return Ok((g0.value(x, y), f64::NAN));
    }
    let (_, pre, hc, xc) = oriented_coefficients(spec, t);
    Ok((pre * g0.value(h, y), hc * h - xc * x))
}

/// Oriented generating function `g_t(x, y) = sum x^a y^m c_t(a, m)`.
pub fn eval_gt(spec: &ModelSpec, t: f64, x: f64, y: f64) -> Result<f64> {
    let (composed, linear) = eval_gt_forms(spec, t, x, y)?;
    Ok(if t <= SMALL_TIME { composed } else { linear })
}

/// Symmetric `l_t(x, y)`: inverse of `u -> (1 + t) u - t k0(u, y)` with
/// `k0(u, y) = y sum nu(a) u^a`.
pub fn solve_ell(spec: &ModelSpec, t: f64, x: f64, y: f64) -> Result<f64> {
    let nu = symmetric_nu(spec)?;
    check_time_before_critical(spec, t)?;
    let slope = 1.0 + t * (1.0 - spec.second_factorial());
    solve_h(&MeasureGf(nu), t, x, y, 0.5 * slope)
}

fn symmetric_nu(spec: &ModelSpec) -> Result<&DiscreteMeasure> {
    spec.nu().ok_or_else(|| Error::arg("spec", "expected a symmetric model"))
}

fn check_time_before_critical(spec: &ModelSpec, t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::arg("t", format!("must be finite and nonnegative, got {t}")));
    }
    let tc = critical_time(spec)?;
    if !tc.admits(t) {
        return Err(Error::OutOfDomain(format!(
            "t = {t} is not below the critical time T = {}",
            tc.value()
        )));
    }
    Ok(())
}

/// Symmetric arm-size generating function
/// `k_t(x, y) = sum x^a y^m (a + 1) c_t(a + 1, m)`, for `t < T`.
pub fn eval_kt(spec: &ModelSpec, t: f64, x: f64, y: f64) -> Result<f64> {
    let l = solve_ell(spec, t, x, y)?;
    let k0 = MeasureGf(symmetric_nu(spec)?);
    if t <= SMALL_TIME {
        return Ok(k0.value(l, y) / (1.0 + t));
    }
    Ok(l / t - x / (t * t + t))
}

/// Coefficient table `sum c(a, m) x^a y^m` over `0 <= a <= a_max`,
/// `1 <= m <= m_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesTable {
    pub a_max: usize,
    pub m_max: usize,
    coefficients: Vec<f64>,
}

impl SeriesTable {
    pub fn zeros(a_max: usize, m_max: usize) -> Self {
        Self {
            a_max,
            m_max,
            coefficients: vec![0.0; (a_max + 1) * m_max],
        }
    }

    #[inline]
    fn index(&self, a: usize, m: usize) -> usize {
        (m - 1) * (self.a_max + 1) + a
    }

    pub fn get(&self, a: usize, m: usize) -> f64 {
        if a > self.a_max || m == 0 || m > self.m_max {
            return 0.0;
        }
        self.coefficients[self.index(a, m)]
    }

    pub fn set(&mut self, a: usize, m: usize, v: f64) {
        let i = self.index(a, m);
        self.coefficients[i] = v;
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Truncated sum at `(x, y)`.
    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        let mut total = 0.0;
        let mut ym = 1.0;
        for m in 1..=self.m_max {
            ym *= y;
            let mut row = 0.0;
            for a in (0..=self.a_max).rev() {
                row = row * x + self.get(a, m);
            }
            total += ym * row;
        }
        total
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for m in 1..=self.m_max.max(other.m_max) {
            for a in 0..=self.a_max.max(other.a_max) {
                worst = worst.max((self.get(a, m) - other.get(a, m)).abs());
            }
        }
        worst
    }

    /// CSV `a,m,coefficient`, rows ordered by `m` then `a`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["a", "m", "coefficient"])?;
        for m in 1..=self.m_max {
            for a in 0..=self.a_max {
                wtr.write_record([a.to_string(), m.to_string(), format!("{:.16e}", self.get(a, m))])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Both routes of the double-series expansion and their disagreement.
#[derive(Debug, Clone)]
pub struct LagrangeSeries {
    pub formula: SeriesTable,
    pub iterated: SeriesTable,
    pub rounds: usize,
    pub discrepancy: f64,
}

fn check_series_args(p: f64, q: f64, a_max: usize, m_max: usize) -> Result<()> {
    if !(p > 0.0 && q > 0.0 && p + q <= 1.0 + 1e-15) {
        return Err(Error::arg("p, q", format!("need p, q > 0 and p + q <= 1, got p={p}, q={q}")));
    }
    if a_max < 1 || m_max < 1 {
        return Err(Error::arg("a_max, m_max", "table bounds must be at least 1"));
    }
    Ok(())
}

/// Coefficients `(1/m) C(m+a-1, a) q^{m-1} p^a mu^{*m}(m+a-1)`.
pub fn lagrange_formula(mu: &DiscreteMeasure, p: f64, q: f64, a_max: usize, m_max: usize) -> Result<SeriesTable> {
    check_series_args(p, q, a_max, m_max)?;
    let powers = mu.convolution_powers(m_max as u32);
    let mut table = SeriesTable::zeros(a_max, m_max);
    let (lp, lq) = (p.ln(), q.ln());
    for m in 1..=m_max {
        let pow = &powers[m - 1];
        for a in 0..=a_max {
            let k = m + a - 1;
            let log = ln_binomial(k as u64, a as u64) - (m as f64).ln() + (m - 1) as f64 * lq + a as f64 * lp;
            table.set(a, m, assemble(log, pow.weight(k)));
        }
    }
    Ok(table)
}

/// Dense truncated bivariate series with `y`-degree `0..=m_top`.
struct Bivariate {
    a_max: usize,
    m_top: usize,
    c: Vec<f64>,
}

impl Bivariate {
    fn zeros(a_max: usize, m_top: usize) -> Self {
        Self {
            a_max,
            m_top,
            c: vec![0.0; (a_max + 1) * (m_top + 1)],
        }
    }

    #[inline]
    fn at(&self, a: usize, m: usize) -> f64 {
        self.c[m * (self.a_max + 1) + a]
    }

    #[inline]
    fn at_mut(&mut self, a: usize, m: usize) -> &mut f64 {
        &mut self.c[m * (self.a_max + 1) + a]
    }

    fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.a_max, self.m_top);
        for m1 in 0..=self.m_top {
            for a1 in 0..=self.a_max {
                let v = self.at(a1, m1);
                if v == 0.0 {
                    continue;
                }
                for m2 in 0..=self.m_top - m1 {
                    for a2 in 0..=self.a_max - a1 {
                        *out.at_mut(a1 + a2, m1 + m2) += v * other.at(a2, m2);
                    }
                }
            }
        }
        out
    }
}

/// Iterate `h <- y g(p x + q h)` on truncated formal series from `h = 0`
/// until the largest coefficient change is at most `1e-12`.
pub fn lagrange_iteration(
    mu: &DiscreteMeasure,
    p: f64,
    q: f64,
    a_max: usize,
    m_max: usize,
) -> Result<(SeriesTable, usize)> {
    check_series_args(p, q, a_max, m_max)?;
    let weights = mu.weights();
    // Only y-degrees below m_max feed the result after the final shift by y.
    let m_top = m_max - 1;
    let mut h = SeriesTable::zeros(a_max, m_max);
    let max_rounds = 10 * m_max;
    let mut change = f64::INFINITY;
    for round in 1..=max_rounds {
        let mut z = Bivariate::zeros(a_max, m_top);
        *z.at_mut(1, 0) += p;
        for m in 1..=m_top {
            for a in 0..=a_max {
                *z.at_mut(a, m) += q * h.get(a, m);
            }
        }
        // Horner: g(z) = w0 + z (w1 + z (w2 + ...)).
        let mut acc = Bivariate::zeros(a_max, m_top);
        for &w in weights.iter().rev() {
            acc = acc.mul(&z);
            *acc.at_mut(0, 0) += w;
        }
        let mut next = SeriesTable::zeros(a_max, m_max);
        for m in 1..=m_max {
            for a in 0..=a_max {
                next.set(a, m, acc.at(a, m - 1));
            }
        }
        change = next.max_abs_diff(&h);
        h = next;
        if change <= 1e-12 {
            return Ok((h, round));
        }
    }
    Err(Error::NoConvergence {
        rounds: max_rounds,
        change,
    })
}

/// Formula and iteration tables for `h = y g(p x + q h)`.
pub fn lagrange_series(mu: &DiscreteMeasure, p: f64, q: f64, a_max: usize, m_max: usize) -> Result<LagrangeSeries> {
    let formula = lagrange_formula(mu, p, q, a_max, m_max)?;
    let (iterated, rounds) = lagrange_iteration(mu, p, q, a_max, m_max)?;
    let discrepancy = formula.max_abs_diff(&iterated);
    Ok(LagrangeSeries {
        formula,
        iterated,
        rounds,
        discrepancy,
    })
}
