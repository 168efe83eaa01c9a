//! Exact-event stochastic simulation of finite particle systems.
//!
//! `n` unit-size particles draw their arm counts i.i.d. from `mu / mu(N)` and
//! live in a volume `V = n / mu(N)`, so that `count / V` estimates the
//! concentration. A reaction fires at rate `K / V` per pair: ordered pairs
//! with `K = a_i` (oriented, `i != j`), unordered pairs with `K = a_i a_j`
//! (symmetric).
//!
//! Arm weights live in a Fenwick tree over a dense slot array, so one event
//! costs `O(log n)`.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::closed_form::{ModelKind, ModelSpec};
use crate::error::{Error, Result};
use crate::measures::MomentSummary;

/// Prefix sums over nonnegative integer weights.
#[derive(Debug, Clone)]
struct Fenwick {
    tree: Vec<u64>,
    top_bit: usize,
}

impl Fenwick {
    fn from_weights(w: &[u64]) -> Self {
        let n = w.len();
        let mut tree = vec![0u64; n + 1];
        for (i, &v) in w.iter().enumerate() {
            tree[i + 1] += v;
            let parent = (i + 1) + ((i + 1) & (i + 1).wrapping_neg());
            if parent <= n {
                tree[parent] += tree[i + 1];
            }
        }
        let top_bit = if n == 0 { 0 } else { 1 << (usize::BITS - 1 - n.leading_zeros()) };
        Self { tree, top_bit }
    }

    fn add(&mut self, i: usize, delta: i64) {
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] = self.tree[k].wrapping_add_signed(delta);
            k += k & k.wrapping_neg();
        }
    }

    /// Slot whose cumulative range contains `r` (`0 <= r < total`).
    fn find(&self, mut r: u64) -> usize {
        let mut pos = 0usize;
        let mut step = self.top_bit;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] <= r {
                pos = next;
                r -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Particle {
    pub arms: u64,
    pub size: u64,
}

/// One reaction, for debugging logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub index: u64,
    pub time: f64,
    pub first: Particle,
    pub second: Particle,
}

/// Live particles with their clock and random stream.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    kind: ModelKind,
    particles: Vec<Particle>,
    weights: Fenwick,
    n: usize,
    volume: f64,
    clock: f64,
    seed: u64,
    rng: ChaCha8Rng,
    arms: u64,
    arms_sq: u128,
    events: u64,
}

impl ParticleSystem {
    pub fn new(spec: &ModelSpec, n: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::arg("n", format!("need at least 2 particles, got {n}")));
        }
        let mu = spec.measure();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pick = WeightedIndex::new(mu.weights())
            .map_err(|e| Error::InvalidMeasure(format!("cannot sample arm counts: {e}")))?;
        let particles: Vec<Particle> = (0..n)
            .map(|_| Particle {
                arms: pick.sample(&mut rng) as u64,
                size: 1,
            })
            .collect();
        let w: Vec<u64> = particles.iter().map(|p| p.arms).collect();
        let arms = w.iter().sum();
        let arms_sq = w.iter().map(|&a| u128::from(a) * u128::from(a)).sum();
        Ok(Self {
            kind: spec.kind(),
            weights: Fenwick::from_weights(&w),
            particles,
            n,
            volume: n as f64 / mu.mass(),
            clock: 0.0,
            seed,
            rng,
            arms,
            arms_sq,
            events: 0,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// `n / mu(N)`; empirical concentrations are counts over this.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn total_arms(&self) -> u64 {
        self.arms
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Total event rate in the current state.
    pub fn total_rate(&self) -> f64 {
        let live = self.particles.len() as f64;
        let s = self.arms as f64;
        match self.kind {
            ModelKind::Oriented => s * (live - 1.0) / self.volume,
            ModelKind::Symmetric => 0.5 * (s * s - self.arms_sq as f64) / self.volume,
        }
    }

    fn pick_by_arms(&mut self) -> usize {
        let r = self.rng.random_range(0..self.arms);
        self.weights.find(r)
    }

    fn choose_pair(&mut self) -> (usize, usize) {
        let live = self.particles.len();
        let i = self.pick_by_arms();
        match self.kind {
            ModelKind::Oriented => {
                let mut j = self.rng.random_range(0..live - 1);
                if j >= i {
                    j += 1;
                }
                (i, j)
            }
            // Two arms drawn uniformly; a pair on the same particle is redrawn.
            ModelKind::Symmetric => loop {
                let j = self.pick_by_arms();
                if j != i {
                    break (i, j);
                }
            },
        }
    }

    fn set_arms(&mut self, slot: usize, arms: u64) {
        let old = self.particles[slot].arms;
        self.weights.add(slot, arms as i64 - old as i64);
        self.particles[slot].arms = arms;
    }

    fn fire(&mut self, i: usize, j: usize) -> (Particle, Particle) {
        let (p, q) = (self.particles[i], self.particles[j]);
        let consumed = match self.kind {
            ModelKind::Oriented => 1,
            ModelKind::Symmetric => 2,
        };
        let arms = p.arms + q.arms - consumed;
        self.arms -= consumed;
        self.arms_sq = self.arms_sq + u128::from(arms) * u128::from(arms)
            - u128::from(p.arms) * u128::from(p.arms)
            - u128::from(q.arms) * u128::from(q.arms);
        self.set_arms(i, arms);
        self.particles[i].size = p.size + q.size;
        let last = self.particles.len() - 1;
        if j != last {
            let moved = self.particles[last];
            self.set_arms(last, 0);
            self.set_arms(j, moved.arms);
            self.particles[j].size = moved.size;
        } else {
            self.set_arms(j, 0);
        }
        self.particles.pop();
        self.events += 1;
        (p, q)
    }

    /// Run events until the clock passes `t`; the state is then the state
    /// at time `t`. Returns the number of events fired.
    pub fn advance_to(&mut self, t: f64, mut log: Option<&mut Vec<Event>>) -> u64 {
        let start = self.events;
        loop {
            let rate = self.total_rate();
            if rate.is_nan() || rate <= 0.0 {
                self.clock = self.clock.max(t);
                break;
            }
            let u: f64 = self.rng.random();
            let wait = -(1.0 - u).ln() / rate;
            if self.clock + wait > t {
                // Memorylessness lets the next draw restart from t.
                self.clock = t;
                break;
            }
            self.clock += wait;
            let (i, j) = self.choose_pair();
            let (p, q) = self.fire(i, j);
            if let Some(log) = log.as_deref_mut() {
                log.push(Event {
                    index: self.events,
                    time: self.clock,
                    first: p,
                    second: q,
                });
            }
        }
        self.events - start
    }

    /// Particle counts keyed by `(m, a)`.
    pub fn histogram(&self) -> BTreeMap<(u64, u64), u64> {
        let mut h = BTreeMap::new();
        for p in &self.particles {
            *h.entry((p.size, p.arms)).or_insert(0) += 1;
        }
        h
    }
}

/// `C`, `A` and the second factorial arm moment, each divided by the volume.
pub fn empirical_moments(system: &ParticleSystem) -> MomentSummary {
    let v = system.volume;
    let c = system.particles.len() as f64 / v;
    let a = system.arms as f64 / v;
    let sf = (system.arms_sq as f64 - system.arms as f64) / v;
    MomentSummary::new(c, a, sf)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalSnapshot {
    pub t: f64,
    /// Particle counts keyed by `(m, a)`.
    pub counts: BTreeMap<(u64, u64), u64>,
    pub moments: MomentSummary,
}

#[derive(Debug, Clone)]
pub struct EmpiricalTrajectory {
    pub kind: ModelKind,
    pub n: usize,
    pub seed: u64,
    pub volume: f64,
    pub snapshots: Vec<EmpiricalSnapshot>,
    pub events: u64,
    pub event_log: Option<Vec<Event>>,
}

impl EmpiricalSnapshot {
    /// `count(a, m) / V`.
    pub fn concentration(&self, a: usize, m: usize, volume: f64) -> f64 {
        self.counts.get(&(m as u64, a as u64)).copied().unwrap_or(0) as f64 / volume
    }
}

impl EmpiricalTrajectory {
    pub fn concentration(&self, snapshot: usize, a: usize, m: usize) -> f64 {
        self.snapshots[snapshot].concentration(a, m, self.volume)
    }

    pub fn at(&self, t: f64) -> Option<&EmpiricalSnapshot> {
        self.snapshots.iter().find(|s| s.t == t)
    }
}

fn record(system: &ParticleSystem, t: f64) -> EmpiricalSnapshot {
    EmpiricalSnapshot {
        t,
        counts: system.histogram(),
        moments: empirical_moments(system),
    }
}

/// Simulate up to `t_end`, recording the initial state and each time in
/// `snapshot_times` (strictly increasing, within `(0, t_end]`). `t_end` is
/// recorded as well when it is not listed.
pub fn simulate(
    spec: &ModelSpec,
    n: usize,
    t_end: f64,
    seed: u64,
    snapshot_times: &[f64],
) -> Result<EmpiricalTrajectory> {
    simulate_logged(spec, n, t_end, seed, snapshot_times, false)
}

pub fn simulate_logged(
    spec: &ModelSpec,
    n: usize,
    t_end: f64,
    seed: u64,
    snapshot_times: &[f64],
    log_events: bool,
) -> Result<EmpiricalTrajectory> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::arg("t_end", format!("must be positive and finite, got {t_end}")));
    }
    let mut times = Vec::with_capacity(snapshot_times.len() + 1);
    let mut prev = 0.0;
    for &t in snapshot_times {
        if !(t > prev && t <= t_end) {
            return Err(Error::arg(
                "snapshot_times",
                format!("must be strictly increasing within (0, t_end]; saw {t} after {prev}"),
            ));
        }
        times.push(t);
        prev = t;
    }
    if times.last() != Some(&t_end) {
        times.push(t_end);
    }
    let mut system = ParticleSystem::new(spec, n, seed)?;
    let mut log = log_events.then(Vec::new);
    let mut snapshots = vec![record(&system, 0.0)];
    for t in times {
        system.advance_to(t, log.as_mut());
        snapshots.push(record(&system, t));
    }
    Ok(EmpiricalTrajectory {
        kind: system.kind,
        n,
        seed,
        volume: system.volume,
        snapshots,
        events: system.events,
        event_log: log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form;
    use crate::measures::DiscreteMeasure;

    #[test]
    fn fenwick_finds_weighted_slots() {
        let f = Fenwick::from_weights(&[2, 0, 3, 1]);
        let picks: Vec<_> = (0..6).map(|r| f.find(r)).collect();
        assert_eq!(picks, vec![0, 0, 2, 2, 2, 3]);
        let mut f = f;
        f.add(0, -2);
        f.add(1, 4);
        assert_eq!(f.find(0), 1);
        assert_eq!(f.find(4), 2);
    }

    #[test]
    fn initial_moments_and_validation() {
        let spec = ModelSpec::oriented(DiscreteMeasure::dirac(1, 1.0).unwrap()).unwrap();
        let s = ParticleSystem::new(&spec, 1000, 1).unwrap();
        let m = empirical_moments(&s);
        assert_eq!((m.mass, m.mean), (1.0, 1.0));
        assert!(ParticleSystem::new(&spec, 1, 1).is_err());
        assert!(simulate(&spec, 10, 1.0, 0, &[0.5, 0.4]).is_err());
    }

    #[test]
    fn per_event_bookkeeping() {
        for (spec, consumed) in [
            (ModelSpec::oriented(DiscreteMeasure::poisson(1.0, 30).unwrap()).unwrap(), 1),
            (ModelSpec::symmetric(DiscreteMeasure::dirac(3, 1.0 / 3.0).unwrap()).unwrap(), 2),
        ] {
            let mut s = ParticleSystem::new(&spec, 500, 9).unwrap();
            let size: u64 = s.particles().iter().map(|p| p.size).sum();
            for _ in 0..100 {
                let (live, arms) = (s.particles().len(), s.total_arms());
                s.advance_to(s.clock() + 1e-3, None);
                let dn = live - s.particles().len();
                assert_eq!(arms - s.total_arms(), consumed * dn as u64);
                assert_eq!(s.particles().iter().map(|p| p.size).sum::<u64>(), size);
                let sum: u64 = s.particles().iter().map(|p| p.arms).sum();
                assert_eq!(sum, s.total_arms());
            }
            assert!(s.events() > 0);
        }
    }

    #[test]
    fn no_arms_no_events() {
        let spec = ModelSpec::oriented(DiscreteMeasure::dirac(0, 1.0).unwrap()).unwrap();
        let tr = simulate(&spec, 100, 5.0, 3, &[1.0]).unwrap();
        assert_eq!(tr.events, 0);
        assert_eq!(tr.snapshots[0].counts, tr.snapshots[2].counts);
        assert_eq!(tr.concentration(2, 0, 1), 1.0);
    }

    #[test]
    fn seed_reuse_is_bit_identical() {
        let spec = ModelSpec::symmetric(DiscreteMeasure::poisson(1.0, 30).unwrap()).unwrap();
        let a = simulate_logged(&spec, 2000, 1.0, 42, &[0.5], true).unwrap();
        let b = simulate_logged(&spec, 2000, 1.0, 42, &[0.5], true).unwrap();
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.event_log, b.event_log);
        let c = simulate(&spec, 2000, 1.0, 43, &[0.5]).unwrap();
        assert_ne!(a.snapshots, c.snapshots);
    }

    #[test]
    fn oriented_dirac_one_tracks_closed_form() {
        let spec = ModelSpec::oriented(DiscreteMeasure::dirac(1, 1.0).unwrap()).unwrap();
        let tr = simulate(&spec, 100_000, 1.0, 5, &[]).unwrap();
        let last = tr.snapshots.last().unwrap();
        let want = closed_form::oriented_ct(&spec, 1.0, 1, 2).unwrap();
        // Binomial standard error of a count / n estimate.
        let se = (want / 1e5).sqrt();
        assert!((tr.concentration(1, 1, 2) - want).abs() < 5.0 * se);
        assert!((last.moments.mass - 0.5).abs() < 5.0 * (0.5f64 / 1e5).sqrt());
    }

    #[test]
    fn symmetric_moments_blow_up_near_critical_time() {
        let spec = ModelSpec::symmetric(DiscreteMeasure::dirac(3, 1.0 / 3.0).unwrap()).unwrap();
        let tr = simulate(&spec, 20_000, 0.97, 11, &[0.5]).unwrap();
        let first = tr.snapshots[0].moments.second_factorial;
        let last = tr.snapshots.last().unwrap().moments.second_factorial;
        assert!(last > 10.0 * first, "{first} -> {last}");
        assert!((tr.volume - 60_000.0).abs() < 1e-9);
    }
}
