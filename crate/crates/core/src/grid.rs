//! Truncated concentration tables `c(a, m)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, MomentSummary};

/// Window of the `(a, m)` plane kept explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    /// Largest arm count stored.
    pub a_max: usize,
    /// Largest size stored.
    pub m_max: usize,
    /// Largest admissible fraction of mass leaked through the arm boundary.
    pub leak_tolerance: f64,
}

impl TruncationSpec {
    pub fn new(a_max: usize, m_max: usize, leak_tolerance: f64) -> Result<Self> {
        if m_max < 2 {
            return Err(Error::arg("m_max", format!("must be at least 2, got {m_max}")));
        }
        if !(leak_tolerance.is_finite() && leak_tolerance >= 0.0) {
            return Err(Error::arg(
                "leak_tolerance",
                format!("must be finite and nonnegative, got {leak_tolerance}"),
            ));
        }
        Ok(Self {
            a_max,
            m_max,
            leak_tolerance,
        })
    }

    pub fn rows(&self) -> usize {
        self.a_max + 1
    }

    pub fn len(&self) -> usize {
        self.rows() * self.m_max
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, a: usize, m: usize) -> usize {
        debug_assert!(a <= self.a_max && (1..=self.m_max).contains(&m));
        (m - 1) * self.rows() + a
    }
}

/// Aggregate bookkeeping for particles that left the explicit window.
///
/// Out-of-window particles are not dropped: they form a reservoir whose
/// count and first two arm moments keep evolving, so that in-window loss
/// terms still see every partner. Only arm-boundary exits with an in-window
/// size can feed back into the window, and those are tallied as leak.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Overflow {
    /// Mass held by out-of-window particles (nondecreasing).
    pub mass: f64,
    /// Arms carried out of the window, cumulative (nondecreasing).
    pub arms_routed: f64,
    /// Mass that left through the arm boundary at an in-window size (nondecreasing).
    pub arm_leak_mass: f64,
    /// Live concentration of out-of-window particles.
    pub count: f64,
    /// Live first arm moment of the reservoir.
    pub arms: f64,
    /// Live second arm moment of the reservoir.
    pub arms_sq: f64,
}

impl Overflow {
    pub(crate) const STATE_LEN: usize = 6;

    pub(crate) fn to_slice(self, out: &mut [f64]) {
        out.copy_from_slice(&[
            self.mass,
            self.arms_routed,
            self.arm_leak_mass,
            self.count,
            self.arms,
            self.arms_sq,
        ]);
    }

    pub(crate) fn from_slice(s: &[f64]) -> Self {
        Self {
            mass: s[0],
            arms_routed: s[1],
            arm_leak_mass: s[2],
            count: s[3],
            arms: s[4],
            arms_sq: s[5],
        }
    }
}

/// Dense table `c(a, m)` for `0 <= a <= a_max`, `1 <= m <= m_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationGrid {
    pub trunc: TruncationSpec,
    values: Vec<f64>,
    pub overflow: Overflow,
}

impl ConcentrationGrid {
    pub fn zeros(trunc: TruncationSpec) -> Self {
        Self {
            trunc,
            values: vec![0.0; trunc.len()],
            overflow: Overflow::default(),
        }
    }

    /// Monodisperse initial state `c(a, 1) = mu(a)`.
    pub fn monomers(trunc: TruncationSpec, mu: &DiscreteMeasure) -> Result<Self> {
        if mu.support_bound() > trunc.a_max {
            return Err(Error::arg(
                "a_max",
                format!(
                    "arm cutoff {} is below the initial arm support {}",
                    trunc.a_max,
                    mu.support_bound()
                ),
            ));
        }
        let mut g = Self::zeros(trunc);
        for (a, &w) in mu.weights().iter().enumerate() {
            g.set(a, 1, w);
        }
        Ok(g)
    }

    pub(crate) fn from_parts(trunc: TruncationSpec, values: Vec<f64>, overflow: Overflow) -> Self {
        debug_assert_eq!(values.len(), trunc.len());
        Self {
            trunc,
            values,
            overflow,
        }
    }

    #[inline]
    pub fn get(&self, a: usize, m: usize) -> f64 {
        if a > self.trunc.a_max || m == 0 || m > self.trunc.m_max {
            return 0.0;
        }
        self.values[self.trunc.index(a, m)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, m: usize, c: f64) {
        let i = self.trunc.index(a, m);
        self.values[i] = c;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row of fixed size `m`, indexed by arm count.
    pub fn size_row(&self, m: usize) -> &[f64] {
        let r = self.trunc.rows();
        &self.values[(m - 1) * r..m * r]
    }

    /// Iterate `(a, m, c)` in row order (m, then a).
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let rows = self.trunc.rows();
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &c)| (i % rows, i / rows + 1, c))
    }

    /// `sum f(a, m) c(a, m)` over the window only.
    pub fn pair_with(&self, f: impl Fn(usize, usize) -> f64) -> f64 {
        self.iter().map(|(a, m, c)| f(a, m) * c).sum()
    }

    /// Totals including the reservoir.
    pub fn moments(&self) -> MomentSummary {
        let (mut c, mut a1, mut a2) = (0.0, 0.0, 0.0);
        for (a, _, v) in self.iter() {
            let af = a as f64;
            c += v;
            a1 += af * v;
            a2 += af * af * v;
        }
        let o = &self.overflow;
        let count = c + o.count;
        let arms = a1 + o.arms;
        let sq = a2 + o.arms_sq;
        MomentSummary::new(count, arms, sq - arms)
    }

    /// `<c, a^2>` including the reservoir.
    pub fn second_arm_moment(&self) -> f64 {
        self.pair_with(|a, _| (a * a) as f64) + self.overflow.arms_sq
    }

    /// Total mass `sum m c` including the reservoir.
    pub fn total_mass(&self) -> f64 {
        self.pair_with(|_, m| m as f64) + self.overflow.mass
    }

    /// Mass lost through the arm boundary as a fraction of total mass.
    pub fn leak_fraction(&self) -> f64 {
        let total = self.total_mass();
        if total > 0.0 {
            self.overflow.arm_leak_mass / total
        } else {
            0.0
        }
    }

    /// Largest absolute entrywise difference over the common window.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let a_max = self.trunc.a_max.min(other.trunc.a_max);
        let m_max = self.trunc.m_max.min(other.trunc.m_max);
        let mut worst = 0.0f64;
        for m in 1..=m_max {
            for a in 0..=a_max {
                worst = worst.max((self.get(a, m) - other.get(a, m)).abs());
            }
        }
        worst
    }
}
