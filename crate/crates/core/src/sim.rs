//! Monte Carlo simulation of the censored process: full path records with
//! survival time U, last-visit time V, passage times to the censor level and
//! the return count T, plus batched estimators with confidence intervals.
//!
//! Reproducibility contract: every replica draws from its own counter-based
//! stream derived from (seed, replica index), and reductions run in replica
//! order, so results are byte-identical for any worker count.

use crate::error::Error;
use crate::offspring::OffspringDistribution;
use crate::stats::StreamingMoments;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

/// Total step budget per batch used by [`default_horizon`].
const BATCH_STEP_BUDGET: f64 = 1e9;

/// One simulated trajectory of the censored process started at the censor
/// level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathRecord {
    /// States X_0 = N, X_1, …, ending at absorption or at the horizon.
    pub trajectory: Vec<u64>,
    /// Survival time: first k with X_k = 0, or `None` if still alive at the
    /// horizon (truncation is a status, not an error).
    pub u: Option<u64>,
    /// Last observed time at the censor level.
    pub v: u64,
    /// All indices k with X_k = N, starting with 0.
    pub passages: Vec<u64>,
    /// Number of returns to the censor level: `passages.len() − 1`.
    pub t: u64,
}

/// The streaming fields of a path, for estimators that never store
/// trajectories.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PathSummary {
    pub u: Option<u64>,
    pub v: u64,
    pub t: u64,
}

/// Aggregated batch statistics over the absorbed replicas.
#[derive(Clone, Copy, Debug)]
pub struct BatchEstimate {
    /// Number of replicas that contributed (absorbed before the horizon).
    pub runs: u64,
    pub mean_u: f64,
    /// 95% half-width 1.96·s/√runs; infinite when runs < 2.
    pub ci_u: f64,
    pub mean_v: f64,
    pub ci_v: f64,
    pub mean_t: f64,
    pub ci_t: f64,
    /// MLE of the geometric parameter of T: runs / (runs + Σ t).
    pub t_geometric_p_hat: f64,
}

/// Per-state transition sampler. Offspring laws recognized as a
/// Binomial(2, α) use the closed-form step sum Binomial(2m, α) instead of m
/// individual draws.
pub(crate) enum StepKernel<'a> {
    Generic(&'a OffspringDistribution),
    Binomial2(f64),
}

impl<'a> StepKernel<'a> {
    pub(crate) fn new(offspring: &'a OffspringDistribution) -> Self {
        match offspring.binomial2_alpha() {
            Some(alpha) => StepKernel::Binomial2(alpha),
            None => StepKernel::Generic(offspring),
        }
    }

    /// Next state from m particles: min(cap, sum of m offspring draws).
    fn step(&self, m: u64, cap: u64, rng: &mut impl Rng) -> u64 {
        match self {
            StepKernel::Generic(d) => {
                let mut acc = 0u64;
                for _ in 0..m {
                    acc += d.sample(rng);
                    if acc >= cap {
                        // Early exit: only min(cap, sum) is observable.
                        return cap;
                    }
                }
                acc
            }
            StepKernel::Binomial2(alpha) => {
                let sum = Binomial::new(2 * m, *alpha)
                    .expect("0 < α < 1")
                    .sample(rng);
                sum.min(cap)
            }
        }
    }
}

/// Independent per-replica generator: one seed, one stream per replica.
pub(crate) fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Default per-replica horizon: 100·(1/q)^N, capped so the whole batch stays
/// within 10⁹ steps, and never below 1.
pub fn default_horizon(offspring: &OffspringDistribution, n: u64, runs: u64) -> u64 {
    let q = offspring.extinction_probability().unwrap_or(1.0);
    let per_run = 100.0 * (1.0 / q).powi(n as i32);
    let budget = BATCH_STEP_BUDGET / runs.max(1) as f64;
    let h = per_run.min(budget); // min(∞, budget) stays finite
    if h >= 1.0 {
        h.ceil() as u64
    } else {
        1
    }
}

/// Simulates one trajectory from the censor level, recording the full path.
pub fn simulate_path(
    offspring: &OffspringDistribution,
    n: u64,
    horizon: u64,
    rng: &mut impl Rng,
) -> Result<PathRecord, Error> {
    if n < 2 {
        return Err(Error::LevelTooSmall { n });
    }
    if horizon == 0 {
        return Err(Error::out_of_range("horizon must be ≥ 1"));
    }
    let kernel = StepKernel::new(offspring);
    let mut trajectory = vec![n];
    let mut passages = vec![0u64];
    let mut u = None;
    let mut state = n;
    for k in 1..=horizon {
        state = kernel.step(state, n, rng);
        trajectory.push(state);
        if state == n {
            passages.push(k);
        }
        if state == 0 {
            u = Some(k);
            break;
        }
    }
    let v = *passages.last().expect("time 0 is always a passage");
    let t = passages.len() as u64 - 1;
    Ok(PathRecord {
        trajectory,
        u,
        v,
        passages,
        t,
    })
}

pub(crate) fn summarize(
    kernel: &StepKernel,
    n: u64,
    horizon: u64,
    rng: &mut impl Rng,
) -> PathSummary {
    let mut state = n;
    let mut v = 0u64;
    let mut t = 0u64;
    let mut u = None;
    for k in 1..=horizon {
        state = kernel.step(state, n, rng);
        if state == n {
            v = k;
            t += 1;
        }
        if state == 0 {
            u = Some(k);
            break;
        }
    }
    PathSummary { u, v, t }
}

/// Runs `runs` independent replicas and returns their summaries in replica
/// order. `workers = 0` picks the available parallelism; the result is the
/// same for every worker count.
pub fn batch_summaries(
    offspring: &OffspringDistribution,
    n: u64,
    runs: u64,
    horizon: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<PathSummary>, Error> {
    if n < 2 {
        return Err(Error::LevelTooSmall { n });
    }
    if runs == 0 {
        return Err(Error::EmptySample);
    }
    if horizon == 0 {
        return Err(Error::out_of_range("horizon must be ≥ 1"));
    }
    let kernel = StepKernel::new(offspring);
    let mut out = vec![PathSummary::default(); runs as usize];
    let workers = effective_workers(workers, runs);
    if workers <= 1 {
        for (r, slot) in out.iter_mut().enumerate() {
            *slot = summarize(&kernel, n, horizon, &mut replica_rng(seed, r as u64));
        }
    } else {
        let chunk = (runs as usize).div_ceil(workers);
        std::thread::scope(|scope| {
            for (c, block) in out.chunks_mut(chunk).enumerate() {
                let kernel = &kernel;
                scope.spawn(move || {
                    let base = (c * chunk) as u64;
                    for (i, slot) in block.iter_mut().enumerate() {
                        *slot = summarize(kernel, n, horizon, &mut replica_rng(seed, base + i as u64));
                    }
                });
            }
        });
    }
    Ok(out)
}

fn effective_workers(requested: usize, runs: u64) -> usize {
    let hw = match requested {
        0 => std::thread::available_parallelism().map_or(1, |p| p.get()),
        w => w,
    };
    hw.min(runs as usize).max(1)
}

impl BatchEstimate {
    /// Reduces summaries (in the given order) to batch statistics over the
    /// absorbed replicas.
    ///
    /// # Errors
    /// `EmptySample` on zero summaries; `AllTruncated` when no replica was
    /// absorbed before its horizon.
    pub fn from_summaries(summaries: &[PathSummary]) -> Result<Self, Error> {
        if summaries.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut acc_u = StreamingMoments::new();
        let mut acc_v = StreamingMoments::new();
        let mut acc_t = StreamingMoments::new();
        let mut sum_t = 0u64;
        for s in summaries {
            let Some(u) = s.u else { continue };
            acc_u.push(u as f64);
            acc_v.push(s.v as f64);
            acc_t.push(s.t as f64);
            sum_t += s.t;
        }
        let runs = acc_u.count();
        if runs == 0 {
            return Err(Error::AllTruncated);
        }
        let ci = |acc: &StreamingMoments| acc.ci95_half_width().unwrap_or(f64::INFINITY);
        Ok(BatchEstimate {
            runs,
            mean_u: acc_u.mean().expect("runs ≥ 1"),
            ci_u: ci(&acc_u),
            mean_v: acc_v.mean().expect("runs ≥ 1"),
            ci_v: ci(&acc_v),
            mean_t: acc_t.mean().expect("runs ≥ 1"),
            ci_t: ci(&acc_t),
            t_geometric_p_hat: runs as f64 / (runs as f64 + sum_t as f64),
        })
    }
}

/// Batched estimation: `runs` replicas, streams keyed by (seed, replica),
/// reduction in replica order.
pub fn batch_estimate(
    offspring: &OffspringDistribution,
    n: u64,
    runs: u64,
    horizon: u64,
    seed: u64,
    workers: usize,
) -> Result<BatchEstimate, Error> {
    BatchEstimate::from_summaries(&batch_summaries(offspring, n, runs, horizon, seed, workers)?)
}

/// Survival times rescaled by q^N (q the extinction probability), in
/// replica order, truncated replicas dropped — the input for
/// goodness-of-fit tests against the unit exponential.
pub fn sample_u_rescaled(
    offspring: &OffspringDistribution,
    n: u64,
    runs: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<f64>, Error> {
    let q = offspring.extinction_probability()?;
    let horizon = default_horizon(offspring, n, runs);
    let summaries = batch_summaries(offspring, n, runs, horizon, seed, workers)?;
    let scale = q.powi(n as i32);
    let out: Vec<f64> = summaries
        .iter()
        .filter_map(|s| s.u)
        .map(|u| u as f64 * scale)
        .collect();
    if out.is_empty() {
        return Err(Error::AllTruncated);
    }
    Ok(out)
}
