//! Nonnegative measures on `{0, 1, 2, ...}`: the arm-count laws that seed
//! every model, together with convolution, moments, generating functions
//! and the Borel function.
//!
//! Infinite-support families (Poisson, negative binomial) are stored
//! truncated at an explicit bound; the discarded mass is kept in
//! [`DiscreteMeasure::tail_mass`] so truncation error stays visible in
//! reports.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{ln_binomial, ln_factorial};

/// Terms smaller than this are treated as negligible when summing a tail.
const TAIL_EPS: f64 = 1e-300;
/// Hard cap on the number of terms summed when estimating a tail.
const TAIL_MAX_TERMS: usize = 1_000_000;

/// A nonnegative measure on the nonnegative integers with finite support.
///
/// Trailing zeros are trimmed, so `weights().len() - 1` is the largest
/// index carrying positive weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
    tail_mass: f64,
    #[serde(skip)]
    underflowed: usize,
}

/// First moments of a measure (or of a concentration table).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    /// Total weight `C`.
    pub mass: f64,
    /// `A = sum a * w(a)`.
    pub mean: f64,
    /// `sum a (a - 1) w(a)`.
    pub second_factorial: f64,
    /// `C - A`.
    pub diff: f64,
}

impl MomentSummary {
    pub fn new(mass: f64, mean: f64, second_factorial: f64) -> Self {
        Self {
            mass,
            mean,
            second_factorial,
            diff: mass - mean,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureRecord {
    weights: Vec<f64>,
    #[serde(default)]
    tail_mass: f64,
}

impl DiscreteMeasure {
    /// Build a measure from raw weights indexed by arm count.
    ///
    /// Weights are stored bit-for-bit; only trailing zeros are dropped.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        Self::with_tail(weights, 0.0)
    }

    /// Like [`DiscreteMeasure::new`] but records mass discarded by truncation.
    pub fn with_tail(mut weights: Vec<f64>, tail_mass: f64) -> Result<Self> {
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::InvalidWeight {
                    index,
                    reason: format!("non-finite value {w}"),
                });
            }
            if w < 0.0 {
                return Err(Error::InvalidWeight {
                    index,
                    reason: format!("negative value {w}"),
                });
            }
        }
        if !(tail_mass.is_finite() && tail_mass >= 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "tail mass must be finite and nonnegative, got {tail_mass}"
            )));
        }
        while weights.last() == Some(&0.0) {
            weights.pop();
        }
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("all weights are zero".into()));
        }
        Ok(Self {
            weights,
            tail_mass,
            underflowed: 0,
        })
    }

    /// `weight * delta_k`.
    pub fn dirac(k: usize, weight: f64) -> Result<Self> {
        let mut w = vec![0.0; k + 1];
        w[k] = weight;
        Self::new(w)
    }

    /// Binomial law with parameters `(n, p)`.
    pub fn binomial(n: u64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::arg("p", format!("must lie in [0,1], got {p}")));
        }
        let weights = (0..=n)
            .map(|a| {
                if p == 0.0 {
                    if a == 0 {
                        1.0
                    } else {
                        0.0
                    }
                } else if p == 1.0 {
                    if a == n {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (ln_binomial(n, a) + a as f64 * p.ln() + (n - a) as f64 * (-p).ln_1p()).exp()
                }
            })
            .collect();
        Self::new(weights)
    }

    /// Poisson law with mean `lambda`, truncated to indices `0..=bound`.
    pub fn poisson(lambda: f64, bound: usize) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::arg("lambda", format!("must be positive, got {lambda}")));
        }
        let mut term = (-lambda).exp();
        let mut weights = Vec::with_capacity(bound + 1);
        weights.push(term);
        for a in 1..=bound {
            term *= lambda / a as f64;
            weights.push(term);
        }
        let tail = sum_tail(term, bound, |a| lambda / a as f64);
        Self::with_tail(weights, tail)
    }

    /// Poisson law truncated at the smallest bound whose discarded mass is
    /// at most `tail_tolerance`.
    pub fn poisson_with_tolerance(lambda: f64, tail_tolerance: f64) -> Result<Self> {
        let mut bound = (lambda.ceil() as usize).max(1);
        loop {
            let m = Self::poisson(lambda, bound)?;
            if m.tail_mass <= tail_tolerance || bound > TAIL_MAX_TERMS {
                return Ok(m);
            }
            bound += bound / 4 + 1;
        }
    }

    /// Negative binomial law `Gamma(r+a)/(a! Gamma(r)) p^r (1-p)^a`,
    /// truncated to `0..=bound`.
    pub fn negative_binomial(r: f64, p: f64, bound: usize) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::arg("r", format!("must be positive, got {r}")));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::arg("p", format!("must lie in (0,1], got {p}")));
        }
        let q = 1.0 - p;
        let mut term = p.powf(r);
        let mut weights = Vec::with_capacity(bound + 1);
        weights.push(term);
        for a in 1..=bound {
            term *= (r + a as f64 - 1.0) / a as f64 * q;
            weights.push(term);
        }
        let tail = sum_tail(term, bound, |a| (r + a as f64 - 1.0) / a as f64 * q);
        Self::with_tail(weights, tail)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at `a`, zero beyond the support.
    pub fn weight(&self, a: usize) -> f64 {
        self.weights.get(a).copied().unwrap_or(0.0)
    }

    /// Largest index with positive weight.
    pub fn support_bound(&self) -> usize {
        self.weights.len() - 1
    }

    /// Mass discarded when an infinite-support law was truncated.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Number of entries flushed to zero because they fell below the
    /// smallest normal double during convolution.
    pub fn underflowed_entries(&self) -> usize {
        self.underflowed
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(a, w)| a as f64 * w)
            .sum()
    }

    pub fn second_factorial(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(a, w)| (a as f64) * (a as f64 - 1.0) * w)
            .sum()
    }

    pub fn moments(&self) -> MomentSummary {
        MomentSummary::new(self.mass(), self.mean(), self.second_factorial())
    }

    /// Multiply every weight by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::arg("factor", format!("must be positive, got {factor}")));
        }
        Self::with_tail(
            self.weights.iter().map(|w| w * factor).collect(),
            self.tail_mass * factor,
        )
    }

    /// Stable hash of the weight bits, used as a cache key.
    pub fn content_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for w in &self.weights {
            w.to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// `(self * other)(k) = sum_j self(j) other(k - j)` by direct summation.
    pub fn convolve(&self, other: &Self) -> Self {
        let (a, b) = (&self.weights, &other.weights);
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, &wa) in a.iter().enumerate() {
            if wa == 0.0 {
                continue;
            }
            for (o, &wb) in out[i..].iter_mut().zip(b) {
                *o += wa * wb;
            }
        }
        let (ma, mb) = (self.mass(), other.mass());
        let tail = (ma + self.tail_mass) * (mb + other.tail_mass) - ma * mb;
        Self::from_convolution(out, tail.max(0.0), self.underflowed + other.underflowed)
    }

    fn from_convolution(mut weights: Vec<f64>, tail_mass: f64, mut underflowed: usize) -> Self {
        let peak = weights.iter().cloned().fold(0.0, f64::max);
        if peak >= f64::MIN_POSITIVE {
            for w in weights.iter_mut() {
                if *w != 0.0 && *w < f64::MIN_POSITIVE {
                    *w = 0.0;
                    underflowed += 1;
                }
            }
        }
        while weights.len() > 1 && weights.last() == Some(&0.0) {
            weights.pop();
        }
        Self {
            weights,
            tail_mass,
            underflowed,
        }
    }

    /// `m`-fold convolution power, by repeated squaring on the bits of `m`.
    pub fn convolution_power(&self, m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::arg("m", "convolution power requires m >= 1"));
        }
        let mut base = self.clone();
        let mut acc: Option<Self> = None;
        let mut e = m;
        loop {
            if e & 1 == 1 {
                acc = Some(match acc {
                    None => base.clone(),
                    Some(x) => x.convolve(&base),
                });
            }
            e >>= 1;
            if e == 0 {
                break;
            }
            base = base.convolve(&base);
        }
        Ok(acc.expect("m >= 1 sets at least one bit"))
    }

    /// All powers `mu^{*1}, ..., mu^{*m_max}` by successive convolution with
    /// `self`; entry `k` of the result is `mu^{*(k+1)}`.
    pub fn convolution_powers(&self, m_max: u32) -> Vec<Self> {
        let mut out: Vec<Self> = Vec::with_capacity(m_max as usize);
        for _ in 0..m_max {
            let next = match out.last() {
                None => self.clone(),
                Some(prev) => prev.convolve(self),
            };
            out.push(next);
        }
        out
    }

    /// The size-biased shift `nu(a) = (a + 1) mu(a + 1)`.
    ///
    /// Requires unit mean, which makes `nu` a probability measure.
    pub fn arm_shift(&self) -> Result<Self> {
        let mean = self.mean();
        if (mean - 1.0).abs() > 1e-9 {
            return Err(Error::Normalization(format!(
                "arm shift needs mean 1, got {mean}; rescale time by the mean first"
            )));
        }
        let weights: Vec<f64> = self
            .weights
            .iter()
            .enumerate()
            .skip(1)
            .map(|(a, w)| a as f64 * w)
            .collect();
        Self::new(weights)
    }

    /// `sum_a x^a mu(a)` for `x` in `[0, 1]`.
    pub fn generating_function(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::arg("x", format!("must lie in [0,1], got {x}")));
        }
        Ok(self.gf(x))
    }

    /// Horner evaluation without the domain check.
    pub(crate) fn gf(&self, x: f64) -> f64 {
        self.weights.iter().rev().fold(0.0, |acc, &w| acc * x + w)
    }

    /// `sum_a a x^(a-1) mu(a)`.
    pub(crate) fn gf_derivative(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (a, &w)| acc * x + a as f64 * w)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let rec: MeasureRecord = serde_json::from_str(s)?;
        Self::with_tail(rec.weights, rec.tail_mass)
    }

    /// Two-column CSV `index,weight` with a header line.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["index", "weight"])?;
        for (a, v) in self.weights.iter().enumerate() {
            wtr.write_record([a.to_string(), format!("{v:.16e}")])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut weights = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<&str> {
                rec.get(i).map(str::trim).ok_or_else(|| {
                    Error::InvalidMeasure(format!("row {} has fewer than 2 columns", row + 1))
                })
            };
            let index: usize = parse(0)?.parse().map_err(|_| {
                Error::InvalidMeasure(format!("row {}: bad index {:?}", row + 1, rec.get(0)))
            })?;
            let weight: f64 = parse(1)?.parse().map_err(|_| Error::InvalidWeight {
                index,
                reason: format!("unparsable value {:?}", rec.get(1)),
            })?;
            if index >= weights.len() {
                weights.resize(index + 1, 0.0);
            }
            weights[index] = weight;
        }
        Self::new(weights)
    }
}

/// Sum the terms following `last` (the term at index `bound`) generated by
/// the ratio recursion `term_{a} = term_{a-1} * ratio(a)`.
fn sum_tail(mut term: f64, bound: usize, ratio: impl Fn(usize) -> f64) -> f64 {
    let mut tail = 0.0;
    for a in bound + 1..bound + 1 + TAIL_MAX_TERMS {
        term *= ratio(a);
        tail += term;
        if term < TAIL_EPS || (term < tail * 1e-17 && ratio(a) < 1.0) {
            break;
        }
    }
    tail
}

/// Borel probability function `B(lambda, m) = (lambda m)^(m-1) e^(-lambda m) / m!`.
pub fn borel(lambda: f64, m: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::arg("lambda", format!("must lie in [0,1], got {lambda}")));
    }
    if m == 0 {
        return Err(Error::arg("m", "Borel function is defined for m >= 1"));
    }
    if lambda == 0.0 {
        return Ok(if m == 1 { 1.0 } else { 0.0 });
    }
    let mf = m as f64;
    Ok(((mf - 1.0) * (lambda * mf).ln() - lambda * mf - ln_factorial(m)).exp())
}
