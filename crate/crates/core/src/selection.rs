//! The N-particle branching-selection system on the integers: every
//! particle spawns x children one step to the right and x′ in place (one
//! joint draw per particle), then only the N rightmost children survive.
//! The count at the rightmost reachable position evolves exactly like the
//! censored process, which ties the front speed to the chain's survival and
//! last-visit times; the renewal constructions reproduce the two bounds of
//! that bracket.

use std::collections::BTreeMap;

use crate::chain::CensoredChain;
use crate::error::Error;
use crate::offspring::{OffspringDistribution, PairedOffspring};
use crate::sim::{default_horizon, replica_rng, summarize, StepKernel};
use crate::stats::StreamingMoments;
use rand::Rng;

/// A population of identical particles on integer positions, stored as a
/// sparse ordered position → count table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParticleConfiguration {
    counts: BTreeMap<i64, u64>,
    total: u64,
}

impl ParticleConfiguration {
    /// All `count` particles at one position.
    pub fn point_mass(position: i64, count: u64) -> Self {
        let mut counts = BTreeMap::new();
        if count > 0 {
            counts.insert(position, count);
        }
        ParticleConfiguration {
            counts,
            total: count,
        }
    }

    /// Builds a configuration from (position, count) pairs.
    pub fn from_counts(table: &[(i64, u64)]) -> Result<Self, Error> {
        let mut counts = BTreeMap::new();
        let mut total = 0u64;
        for &(pos, c) in table {
            if c == 0 {
                continue;
            }
            if counts.insert(pos, c).is_some() {
                return Err(Error::DuplicateValue { value: pos as u64 });
            }
            total += c;
        }
        Ok(ParticleConfiguration { counts, total })
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count_at(&self, position: i64) -> u64 {
        self.counts.get(&position).copied().unwrap_or(0)
    }

    /// Rightmost occupied position.
    pub fn max_position(&self) -> Option<i64> {
        self.counts.keys().next_back().copied()
    }

    /// Occupied positions with counts, left to right.
    pub fn positions(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts.iter().map(|(&p, &c)| (p, c))
    }

    /// Branching step: each particle at ℓ is replaced by x children at
    /// ℓ+1 and x′ at ℓ, one joint (x, x′) draw per particle. Particles are
    /// processed left to right, so the draw order is deterministic.
    pub fn branch(&self, law: &PairedOffspring, rng: &mut impl Rng) -> ParticleConfiguration {
        let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
        let mut total = 0u64;
        for (&pos, &c) in &self.counts {
            let mut stay = 0u64;
            let mut advance = 0u64;
            for _ in 0..c {
                let (x, x_stay) = law.sample_pair(rng);
                advance += x;
                stay += x_stay;
            }
            if stay > 0 {
                *counts.entry(pos).or_insert(0) += stay;
                total += stay;
            }
            if advance > 0 {
                *counts.entry(pos + 1).or_insert(0) += advance;
                total += advance;
            }
        }
        ParticleConfiguration { counts, total }
    }

    /// Keeps the `n` rightmost particles: full counts from the right, one
    /// partial count at the cutoff position.
    pub fn select_rightmost(&self, n: u64) -> Result<ParticleConfiguration, Error> {
        if self.total < n {
            return Err(Error::TooFewChildren {
                have: self.total,
                need: n,
            });
        }
        let mut counts = BTreeMap::new();
        let mut remaining = n;
        for (&pos, &c) in self.counts.iter().rev() {
            if remaining == 0 {
                break;
            }
            let keep = c.min(remaining);
            counts.insert(pos, keep);
            remaining -= keep;
        }
        Ok(ParticleConfiguration { counts, total: n })
    }

    /// One generation: branch, then select back down to `n` particles.
    pub fn step(&self, law: &PairedOffspring, n: u64, rng: &mut impl Rng) -> Result<Self, Error> {
        self.branch(law, rng).select_rightmost(n)
    }
}

/// Front-speed estimate from one long trajectory.
#[derive(Clone, Debug)]
pub struct SpeedEstimate {
    /// Number of generations simulated.
    pub steps: u64,
    /// Slope of the front position after a 10% burn-in.
    pub v_hat: f64,
    /// Batch-means standard error of `v_hat` over 10 post-burn-in
    /// segments; infinite when the run is too short to segment.
    pub v_err: f64,
    /// Per-generation gap k − max Y_k, when tracing was requested.
    pub frontier_front_gap: Option<Vec<u64>>,
    /// Exact lower speed bound 1 − 1/(E[V]+1), when available.
    pub bracket_low: Option<f64>,
    /// Exact upper speed bound 1 − 1/E[U], when available.
    pub bracket_high: Option<f64>,
}

impl SpeedEstimate {
    pub fn with_bracket(mut self, low: f64, high: f64) -> Self {
        self.bracket_low = Some(low);
        self.bracket_high = Some(high);
        self
    }
}

/// Exact speed bracket from the chain: 1 − 1/(E[V_N]+1) ≤ v_N ≤ 1 − 1/E[U_N].
pub fn speed_bracket(offspring: &OffspringDistribution, n: u64) -> Result<(f64, f64), Error> {
    offspring.extinction_probability()?; // rejects non-supercritical laws
    let chain = CensoredChain::new(offspring.clone(), n)?;
    let u = chain.expected_survival()?;
    let v = chain.expected_last_visit()?;
    Ok((1.0 - 1.0 / (v + 1.0), 1.0 - 1.0 / u))
}

/// Runs the particle system for `steps` generations from n·δ_0 and
/// estimates the front speed.
pub fn simulate_speed(
    law: &PairedOffspring,
    n: u64,
    steps: u64,
    seed: u64,
) -> Result<SpeedEstimate, Error> {
    simulate_speed_impl(law, n, steps, seed, None)
}

/// Same as [`simulate_speed`], additionally reporting
/// (k, max Y_k, Y_k(k)) for every generation — Y_k(k) being the count at
/// the rightmost reachable position — and recording the front gap series.
pub fn simulate_speed_traced(
    law: &PairedOffspring,
    n: u64,
    steps: u64,
    seed: u64,
    trace: &mut dyn FnMut(u64, i64, u64),
) -> Result<SpeedEstimate, Error> {
    simulate_speed_impl(law, n, steps, seed, Some(trace))
}

fn simulate_speed_impl(
    law: &PairedOffspring,
    n: u64,
    steps: u64,
    seed: u64,
    mut trace: Option<&mut dyn FnMut(u64, i64, u64)>,
) -> Result<SpeedEstimate, Error> {
    if n == 0 {
        return Err(Error::out_of_range("particle count must be ≥ 1"));
    }
    if steps < 10 {
        return Err(Error::out_of_range("steps must be ≥ 10"));
    }
    let (k0, seg, checkpoints) = slope_checkpoints(steps);
    let mut rng = replica_rng(seed, 0);
    let mut config = ParticleConfiguration::point_mass(0, n);
    let mut gaps = trace
        .is_some()
        .then(|| Vec::with_capacity(steps as usize + 1));
    if let Some(t) = trace.as_deref_mut() {
        t(0, 0, n);
    }
    if let Some(g) = gaps.as_mut() {
        g.push(0);
    }
    let mut marks = Vec::with_capacity(checkpoints.len());
    let mut next_mark = 0usize;
    for k in 1..=steps {
        config = config.step(law, n, &mut rng)?;
        let max_y = config.max_position().expect("n ≥ 1 particles");
        if let Some(t) = trace.as_deref_mut() {
            t(k, max_y, config.count_at(k as i64));
        }
        if let Some(g) = gaps.as_mut() {
            g.push((k as i64 - max_y) as u64);
        }
        if next_mark < checkpoints.len() && k == checkpoints[next_mark] {
            marks.push(max_y as f64);
            next_mark += 1;
        }
    }
    let v_hat = (marks.last().unwrap() - marks[0]) / (steps - k0) as f64;
    Ok(SpeedEstimate {
        steps,
        v_hat,
        v_err: batch_means_err(&marks, seg),
        frontier_front_gap: gaps,
        bracket_low: None,
        bracket_high: None,
    })
}

/// Burn-in point, segment length, and the strictly increasing checkpoint
/// times: k₀ = ⌊steps/10⌋, then 10 equal segments of the remainder, then
/// `steps` itself if the segments don't land on it.
fn slope_checkpoints(steps: u64) -> (u64, u64, Vec<u64>) {
    let k0 = steps / 10;
    let seg = (steps - k0) / 10;
    let mut checkpoints = vec![k0];
    if seg > 0 {
        for i in 1..=10 {
            checkpoints.push(k0 + i * seg);
        }
    }
    if *checkpoints.last().unwrap() < steps {
        checkpoints.push(steps);
    }
    (k0, seg, checkpoints)
}

/// Standard error of the mean slope across the 10 equal segments.
fn batch_means_err(marks: &[f64], seg: u64) -> f64 {
    if seg == 0 {
        return f64::INFINITY;
    }
    let mut acc = StreamingMoments::new();
    for w in marks[..11].windows(2) {
        acc.push((w[1] - w[0]) / seg as f64);
    }
    match acc.sample_variance() {
        Ok(var) => (var / 10.0).sqrt(),
        Err(_) => f64::INFINITY,
    }
}

/// Per-generation histograms of the frontier count Y_k(k) (the number of
/// particles at the rightmost reachable position k), over independent
/// replicas.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrontierCounts {
    /// histograms[k][c] = number of replicas with Y_k(k) = c, for
    /// k = 0..=k_max and c = 0..=n.
    pub histograms: Vec<Vec<u64>>,
    pub runs: u64,
}

/// Simulates `runs` replicas for `k_max` generations each and tabulates the
/// frontier counts. Deterministic for fixed (seed, runs) at any worker
/// count.
pub fn frontier_counts(
    law: &PairedOffspring,
    n: u64,
    k_max: u64,
    runs: u64,
    seed: u64,
    workers: usize,
) -> Result<FrontierCounts, Error> {
    if n == 0 {
        return Err(Error::out_of_range("particle count must be ≥ 1"));
    }
    if k_max == 0 {
        return Err(Error::out_of_range("k_max must be ≥ 1"));
    }
    if runs == 0 {
        return Err(Error::EmptySample);
    }
    let rows = k_max as usize + 1;
    let cols = n as usize + 1;
    let workers = match workers {
        0 => std::thread::available_parallelism().map_or(1, |p| p.get()),
        w => w,
    }
    .min(runs as usize)
    .max(1);
    let chunk = (runs as usize).div_ceil(workers);
    let replica_range = |c: usize| {
        let lo = (c * chunk) as u64;
        (lo, runs.min(lo + chunk as u64))
    };
    let tabulate = |lo: u64, hi: u64| -> Result<Vec<Vec<u64>>, Error> {
        let mut hist = vec![vec![0u64; cols]; rows];
        for r in lo..hi {
            let mut rng = replica_rng(seed, r);
            let mut config = ParticleConfiguration::point_mass(0, n);
            hist[0][n as usize] += 1; // Y_0(0) = n by construction
            for k in 1..=k_max {
                config = config.step(law, n, &mut rng)?;
                hist[k as usize][config.count_at(k as i64) as usize] += 1;
            }
        }
        Ok(hist)
    };
    let mut histograms = vec![vec![0u64; cols]; rows];
    let mut parts: Vec<Result<Vec<Vec<u64>>, Error>> = Vec::new();
    if workers <= 1 {
        parts.push(tabulate(0, runs));
    } else {
        let mut slots: Vec<Result<Vec<Vec<u64>>, Error>> =
            (0..workers).map(|_| Ok(Vec::new())).collect();
        std::thread::scope(|scope| {
            for (c, slot) in slots.iter_mut().enumerate() {
                let tabulate = &tabulate;
                scope.spawn(move || {
                    let (lo, hi) = replica_range(c);
                    *slot = tabulate(lo, hi);
                });
            }
        });
        parts = slots;
    }
    for part in parts {
        let part = part?;
        for (row, add) in histograms.iter_mut().zip(&part) {
            for (slot, &a) in row.iter_mut().zip(add) {
                *slot += a;
            }
        }
    }
    Ok(FrontierCounts { histograms, runs })
}

/// Which censored-path functional feeds the renewal construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenewalInterval {
    /// Intervals distributed as V_N + 1: the dominated front.
    LastVisitPlusOne,
    /// Intervals distributed as U_N: the dominating restart front.
    SurvivalTime,
}

/// Simulates the renewal front: i.i.d. intervals Γ_i drawn from censored
/// paths, front position k − I_k with I_k the number of renewals by time k.
/// The speed converges to 1 − 1/E[Γ] by the renewal theorem, reproducing
/// the two sides of the speed bracket.
pub fn simulate_renewal_front(
    interval: RenewalInterval,
    offspring: &OffspringDistribution,
    n: u64,
    steps: u64,
    seed: u64,
) -> Result<SpeedEstimate, Error> {
    offspring.extinction_probability()?; // rejects non-supercritical laws
    if n < 2 {
        return Err(Error::LevelTooSmall { n });
    }
    if steps < 10 {
        return Err(Error::out_of_range("steps must be ≥ 10"));
    }
    let horizon = default_horizon(offspring, n, 1);
    let kernel = StepKernel::new(offspring);
    let mut rng = replica_rng(seed, 0);
    let mut next_interval = || {
        let s = summarize(&kernel, n, horizon, &mut rng);
        match interval {
            RenewalInterval::LastVisitPlusOne => s.v + 1,
            // A truncated path only witnesses U > horizon; the horizon is a
            // conservative stand-in (vanishingly rare at default settings).
            RenewalInterval::SurvivalTime => s.u.unwrap_or(horizon),
        }
    };
    let estimate = renewal_speed_core(steps, &mut next_interval);
    let (low, high) = speed_bracket(offspring, n)?;
    Ok(estimate.with_bracket(low, high))
}

/// Renewal-front slope from a stream of i.i.d. intervals ≥ 1.
fn renewal_speed_core(steps: u64, next_interval: &mut dyn FnMut() -> u64) -> SpeedEstimate {
    let (k0, seg, checkpoints) = slope_checkpoints(steps);
    let mut marks = Vec::with_capacity(checkpoints.len());
    let mut elapsed = 0u64; // time of the latest renewal
    let mut renewals = 0u64;
    let mut pending = next_interval();
    for &c in &checkpoints {
        while elapsed + pending <= c {
            elapsed += pending;
            renewals += 1;
            pending = next_interval();
        }
        marks.push((c - renewals) as f64); // front position at time c
    }
    let v_hat = (marks.last().unwrap() - marks[0]) / (steps - k0) as f64;
    SpeedEstimate {
        steps,
        v_hat,
        v_err: batch_means_err(&marks, seg),
        frontier_front_gap: None,
        bracket_low: None,
        bracket_high: None,
    }
}
