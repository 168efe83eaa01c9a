//! Explicit solutions of the oriented and symmetric arm-limited
//! coagulation systems started from monomers, their moment curves,
//! `t -> infinity` limits, and the three classical Smoluchowski reference
//! solutions (constant, additive and multiplicative kernels).
//!
//! Every concentration is assembled as `exp(log prefactor) * p` where `p` is
//! an entry of a convolution power kept in linear space. Factorials and
//! powers of `t` live in the log prefactor so `(2m)!` never overflows.
//!
//! Evaluators require normalized input: unit total concentration for the
//! oriented model and unit mean arm count for the symmetric one. Use
//! [`ModelSpec::normalized`] to reduce the general case by a linear time
//! change.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ConcentrationGrid, TruncationSpec};
use crate::measures::{borel, DiscreteMeasure, MomentSummary};
use crate::special::{assemble, ln_binomial, ln_factorial};

/// Below this `|C0 - A0|` the oriented critical formula is used.
pub const CRITICAL_D_THRESHOLD: f64 = 1e-8;
/// Normalization tolerance for total mass (oriented) or mean (symmetric).
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// `|M - 1|` below this is treated as the critical value `M = 1`.
const CRITICAL_M_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// One arm consumed per event: `(a,m) + (a',m') -> (a+a'-1, m+m')`.
    Oriented,
    /// One arm from each partner: `(a,m) + (a',m') -> (a+a'-2, m+m')`.
    Symmetric,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Oriented => "oriented",
            ModelKind::Symmetric => "symmetric",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseTag {
    /// Oriented with `D = C0 - A0 = 0`.
    Critical,
    /// Oriented with `D != 0`.
    Generic,
    Symmetric,
}

/// A model together with its monodisperse initial arm law.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    kind: ModelKind,
    measure: DiscreteMeasure,
    case: CaseTag,
    moments: MomentSummary,
    /// Size-biased shift of the arm law; symmetric model only.
    nu: Option<DiscreteMeasure>,
}

/// A normalized spec plus the factor linking it to the original problem:
/// `c_t(a, m) = scale * c'_{scale * t}(a, m)` where `c'` solves the
/// normalized problem.
#[derive(Debug, Clone)]
pub struct Rescaled {
    pub spec: ModelSpec,
    pub scale: f64,
}

impl Rescaled {
    /// Time in the normalized problem corresponding to original time `t`.
    pub fn normalized_time(&self, t: f64) -> f64 {
        self.scale * t
    }

    /// Original-problem concentration from a normalized one.
    pub fn concentration(&self, normalized: f64) -> f64 {
        self.scale * normalized
    }
}

impl ModelSpec {
    pub fn new(kind: ModelKind, measure: DiscreteMeasure) -> Result<Self> {
        let moments = measure.moments();
        match kind {
            ModelKind::Oriented => {
                if (moments.mass - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::Normalization(format!(
                        "oriented model needs total concentration 1, got {}; use a time rescaling",
                        moments.mass
                    )));
                }
                let case = if moments.diff.abs() < CRITICAL_D_THRESHOLD {
                    CaseTag::Critical
                } else {
                    CaseTag::Generic
                };
                Ok(Self {
                    kind,
                    measure,
                    case,
                    moments,
                    nu: None,
                })
            }
            ModelKind::Symmetric => {
                if (moments.mean - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::Normalization(format!(
                        "symmetric model needs mean arm count 1, got {}; use a time rescaling",
                        moments.mean
                    )));
                }
                let nu = measure.arm_shift()?;
                Ok(Self {
                    kind,
                    measure,
                    case: CaseTag::Symmetric,
                    moments,
                    nu: Some(nu),
                })
            }
        }
    }

    pub fn oriented(measure: DiscreteMeasure) -> Result<Self> {
        Self::new(ModelKind::Oriented, measure)
    }

    pub fn symmetric(measure: DiscreteMeasure) -> Result<Self> {
        Self::new(ModelKind::Symmetric, measure)
    }

    /// Normalize an arbitrary arm law: divide by the total concentration
    /// (oriented) or by the mean arm count (symmetric) and dilate time by
    /// the same factor.
    pub fn normalized(kind: ModelKind, measure: &DiscreteMeasure) -> Result<Rescaled> {
        let scale = match kind {
            ModelKind::Oriented => measure.mass(),
            ModelKind::Symmetric => measure.mean(),
        };
        if scale.is_nan() || scale <= 0.0 {
            return Err(Error::Normalization(format!(
                "cannot normalize a {kind} model with scale {scale}"
            )));
        }
        let spec = Self::new(kind, measure.scaled(1.0 / scale)?)?;
        Ok(Rescaled { spec, scale })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        &self.measure
    }

    pub fn case(&self) -> CaseTag {
        self.case
    }

    pub fn initial_moments(&self) -> MomentSummary {
        self.moments
    }

    /// `D = C0 - A0`.
    pub fn diff(&self) -> f64 {
        self.moments.diff
    }

    /// Size-biased arm law `nu`; `None` for the oriented model.
    pub fn nu(&self) -> Option<&DiscreteMeasure> {
        self.nu.as_ref()
    }

    /// `M = sum a (a - 1) mu(a)`, the mean of `nu`.
    pub fn second_factorial(&self) -> f64 {
        self.moments.second_factorial
    }

    fn expect(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::arg(
                "spec",
                format!("expected a {kind} model, got {}", self.kind),
            ));
        }
        Ok(())
    }
}

/// Gelation time of the symmetric model; `+inf` when there is none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalTime(pub f64);

impl CriticalTime {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// True when `t` lies strictly before the critical time.
    pub fn admits(self, t: f64) -> bool {
        t < self.0
    }
}

// ---------------------------------------------------------------------------
// Convolution power cache

type PowerKey = (u64, u32);
const CACHE_CAPACITY: usize = 8192;

fn power_cache() -> &'static RwLock<HashMap<PowerKey, Arc<DiscreteMeasure>>> {
    static CACHE: OnceLock<RwLock<HashMap<PowerKey, Arc<DiscreteMeasure>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// `mu^{*m}`, memoized by `(content hash, m)`.
pub fn cached_power(mu: &DiscreteMeasure, m: u32) -> Result<Arc<DiscreteMeasure>> {
    let key = (mu.content_hash(), m);
    if let Some(p) = power_cache().read().expect("power cache poisoned").get(&key) {
        return Ok(Arc::clone(p));
    }
    let p = Arc::new(mu.convolution_power(m)?);
    let mut cache = power_cache().write().expect("power cache poisoned");
    if cache.len() >= CACHE_CAPACITY {
        cache.clear();
    }
    Ok(Arc::clone(cache.entry(key).or_insert(p)))
}

fn power_entry(mu: &DiscreteMeasure, m: usize, k: usize) -> Result<f64> {
    let m32 = u32::try_from(m).map_err(|_| Error::arg("m", "size too large"))?;
    // The power's support is m * bound; skip the convolution when k is past it.
    if k > m.saturating_mul(mu.support_bound()) {
        return Ok(0.0);
    }
    Ok(cached_power(mu, m32)?.weight(k))
}

fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::arg("t", format!("must be finite and nonnegative, got {t}")));
    }
    Ok(())
}

fn check_size(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::arg("m", "sizes start at 1"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Oriented model

/// Total concentration `C_t` and mean arm count `A_t` of the oriented model.
pub fn oriented_totals(spec: &ModelSpec, t: f64) -> Result<(f64, f64)> {
    spec.expect(ModelKind::Oriented)?;
    check_time(t)?;
    let c0 = spec.moments.mass;
    let d = spec.diff();
    if t == 0.0 {
        return Ok((c0, spec.moments.mean));
    }
    if spec.case == CaseTag::Critical {
        let c = c0 / (1.0 + t * c0);
        Ok((c, c))
    } else {
        let e = (d * t).exp_m1();
        let c = d * c0 * (d * t).exp() / (c0 * e + d);
        Ok((c, c - d))
    }
}

/// Concentration `c_t(a, m)` of the oriented model.
pub fn oriented_ct(spec: &ModelSpec, t: f64, a: usize, m: usize) -> Result<f64> {
    spec.expect(ModelKind::Oriented)?;
    check_time(t)?;
    check_size(m)?;
    let mu = &spec.measure;
    if t == 0.0 {
        return Ok(if m == 1 { mu.weight(a) } else { 0.0 });
    }
    let k = a + m - 1;
    let p = power_entry(mu, m, k)?;
    if p == 0.0 {
        return Ok(0.0);
    }
    let (af, mf) = (a as f64, m as f64);
    let lb = ln_binomial(k as u64, a as u64) - mf.ln();
    let log = if spec.case == CaseTag::Critical {
        (mf - 1.0) * t.ln() - (af + mf) * t.ln_1p() + lb
    } else {
        let d = spec.diff();
        let e = (d * t).exp_m1();
        d * t + (af + 1.0) * d.abs().ln() + (mf - 1.0) * e.abs().ln()
            - (af + mf) * (e + d).abs().ln()
            + lb
    };
    Ok(assemble(log, p))
}

/// Limit of `c_t(a, m)` as `t -> infinity` for an oriented model whose
/// mean arm count is below one.
pub fn oriented_limit(spec: &ModelSpec, a: usize, m: usize) -> Result<f64> {
    spec.expect(ModelKind::Oriented)?;
    check_size(m)?;
    let d = spec.diff();
    if spec.case == CaseTag::Critical || d <= 0.0 {
        return Err(Error::Unsupported(format!(
            "no limiting concentrations are available for D = {d} <= 0"
        )));
    }
    if a != 0 {
        return Ok(0.0);
    }
    Ok(d / m as f64 * power_entry(&spec.measure, m, m - 1)?)
}

// ---------------------------------------------------------------------------
// Symmetric model

/// `T = 1/(M - 1)` when `M > 1`, infinite otherwise.
pub fn critical_time(spec: &ModelSpec) -> Result<CriticalTime> {
    spec.expect(ModelKind::Symmetric)?;
    let m = spec.second_factorial();
    if !m.is_finite() {
        return Err(Error::arg("spec", "second factorial moment is not finite"));
    }
    Ok(if m <= 1.0 + CRITICAL_M_TOL {
        CriticalTime(f64::INFINITY)
    } else {
        CriticalTime(1.0 / (m - 1.0))
    })
}

fn check_pregel(spec: &ModelSpec, t: f64) -> Result<()> {
    check_time(t)?;
    let tc = critical_time(spec)?;
    if !tc.admits(t) {
        return Err(Error::OutOfDomain(format!(
            "t = {t} is not below the critical time T = {}",
            tc.value()
        )));
    }
    Ok(())
}

/// Mean arm count `A_t = A0 / (1 + t A0)` before gelation.
pub fn symmetric_arm_moment(spec: &ModelSpec, t: f64) -> Result<f64> {
    spec.expect(ModelKind::Symmetric)?;
    check_pregel(spec, t)?;
    let a0 = spec.moments.mean;
    Ok(a0 / (1.0 + t * a0))
}

/// `<c_t, a^2 - a> = M / ((1 + t)(1 + t(1 - M)))` before gelation.
pub fn symmetric_second_factorial(spec: &ModelSpec, t: f64) -> Result<f64> {
    spec.expect(ModelKind::Symmetric)?;
    check_pregel(spec, t)?;
    let m = spec.second_factorial();
    Ok(m / ((1.0 + t) * (1.0 + t * (1.0 - m))))
}

/// Concentration `c_t(a, m)` of the symmetric model for `t < T`.
///
/// For `a = 0` and `m >= 2` this is the zero-arm production integral. When
/// `nu(0) = 0` no one-arm particle ever exists (every partner keeps at
/// least two arms), so those entries are identically zero.
pub fn symmetric_ct(spec: &ModelSpec, t: f64, a: usize, m: usize) -> Result<f64> {
    spec.expect(ModelKind::Symmetric)?;
    check_size(m)?;
    check_pregel(spec, t)?;
    let nu = spec.nu.as_ref().expect("symmetric spec carries nu");
    let mu = &spec.measure;
    if m == 1 {
        if a == 0 {
            return Ok(mu.weight(0));
        }
        if t == 0.0 {
            return Ok(mu.weight(a));
        }
    } else if t == 0.0 {
        return Ok(0.0);
    }
    let mf = m as f64;
    if a == 0 {
        if nu.weight(0) == 0.0 {
            return Ok(0.0);
        }
        let p = power_entry(nu, m, m - 2)?;
        let log = -mf.ln() - (mf - 1.0).ln() + (mf - 1.0) * (t.ln() - t.ln_1p());
        return Ok(assemble(log, p));
    }
    let k = a + m - 2;
    let p = power_entry(nu, m, k)?;
    let log = ln_factorial(k as u64) - ln_factorial(a as u64) - ln_factorial(m as u64)
        + (mf - 1.0) * t.ln()
        - (a as f64 + mf - 1.0) * t.ln_1p();
    Ok(assemble(log, p))
}

/// Limit of `c_t(a, m)` as `t -> infinity` when `M <= 1`.
pub fn symmetric_limit(spec: &ModelSpec, a: usize, m: usize) -> Result<f64> {
    spec.expect(ModelKind::Symmetric)?;
    check_size(m)?;
    if critical_time(spec)?.is_finite() {
        return Err(Error::Unsupported(format!(
            "M = {} > 1: the system gels in finite time",
            spec.second_factorial()
        )));
    }
    if a != 0 {
        return Ok(0.0);
    }
    if m == 1 {
        return Ok(spec.measure.weight(0));
    }
    let nu = spec.nu.as_ref().expect("symmetric spec carries nu");
    let mf = m as f64;
    Ok(power_entry(nu, m, m - 2)? / (mf * (mf - 1.0)))
}

// ---------------------------------------------------------------------------
// Dispatch and aggregates

/// `c_t(a, m)` for either model.
pub fn concentration(spec: &ModelSpec, t: f64, a: usize, m: usize) -> Result<f64> {
    match spec.kind {
        ModelKind::Oriented => oriented_ct(spec, t, a, m),
        ModelKind::Symmetric => symmetric_ct(spec, t, a, m),
    }
}

/// `t -> infinity` limit for either model.
pub fn limit(spec: &ModelSpec, a: usize, m: usize) -> Result<f64> {
    match spec.kind {
        ModelKind::Oriented => oriented_limit(spec, a, m),
        ModelKind::Symmetric => symmetric_limit(spec, a, m),
    }
}

/// Largest arm count with possibly nonzero concentration at size `m`.
pub fn max_arms(spec: &ModelSpec, m: usize) -> usize {
    match spec.kind {
        // a + m - 1 <= m * bound(mu)
        ModelKind::Oriented => (m * spec.measure.support_bound() + 1).saturating_sub(m),
        // a + m - 2 <= m * bound(nu)
        ModelKind::Symmetric => {
            let b = spec.nu.as_ref().map_or(0, |n| n.support_bound());
            (m * b + 2).saturating_sub(m)
        }
    }
}

/// `C_t(m) = sum_a c_t(a, m)`, the size marginal.
pub fn size_marginal(spec: &ModelSpec, t: f64, m: usize) -> Result<f64> {
    check_size(m)?;
    let mut sum = 0.0;
    for a in 0..=max_arms(spec, m) {
        sum += concentration(spec, t, a, m)?;
    }
    Ok(sum)
}

/// Closed-form concentrations on a window, as a grid with empty reservoir.
pub fn table(spec: &ModelSpec, t: f64, trunc: TruncationSpec) -> Result<ConcentrationGrid> {
    let mut g = ConcentrationGrid::zeros(trunc);
    for m in 1..=trunc.m_max {
        let top = max_arms(spec, m).min(trunc.a_max);
        for a in 0..=top {
            g.set(a, m, concentration(spec, t, a, m)?);
        }
    }
    Ok(g)
}

// ---------------------------------------------------------------------------
// Classical references

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Constant,
    Additive,
    Multiplicative,
}

/// Monodisperse solutions of the Smoluchowski equation for the constant
/// (`kappa = 1`), additive and multiplicative kernels.
pub fn smoluchowski_reference(kernel: Kernel, t: f64, m: usize) -> Result<f64> {
    check_time(t)?;
    check_size(m)?;
    let mf = m as f64;
    match kernel {
        Kernel::Constant => Ok((1.0 + t / 2.0).powi(-2) * (t / (2.0 + t)).powf(mf - 1.0)),
        Kernel::Additive => Ok((-t).exp() * borel(-(-t).exp_m1(), m as u64)?),
        Kernel::Multiplicative => {
            if t >= 1.0 {
                return Err(Error::OutOfDomain(format!(
                    "multiplicative-kernel solution holds only before gelation at t = 1, got {t}"
                )));
            }
            Ok(borel(t, m as u64)? / mf)
        }
    }
}
