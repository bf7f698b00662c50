//! Exact finite-chain computations for the censored process: the population
//! X_{k+1} = min(N, Σ_{i=1}^{X_k} X_{k,i}) is a Markov chain on {0, …, N}
//! with 0 absorbing, so survival times, never-return probabilities, and
//! last-visit expectations reduce to small linear systems.
//!
//! Those systems are solved by an elimination tailored to substochastic
//! matrices: every pivot is assembled as (remaining off-diagonal row mass) +
//! (escape mass), and every update adds same-sign terms, so no cancellation
//! ever occurs and results keep full relative precision even when the escape
//! probability per visit is hundreds of orders of magnitude below 1. A
//! generic pivoted LU loses the identity q_N · F_{N,N} = 1 completely once
//! q_N drops below machine epsilon; this one holds it to ~1e-15 everywhere.

use crate::error::Error;
use crate::offspring::OffspringDistribution;

/// Iteration cap for exact-distribution sweeps.
const ITERATION_HARD_CAP: u64 = 100_000_000;

/// The censored process as an explicit (N+1)-state transition table.
#[derive(Clone, Debug)]
pub struct CensoredChain {
    n: usize,
    offspring: OffspringDistribution,
    /// rows[m][j] = P(X_{k+1} = j | X_k = m); row 0 is the point mass at 0.
    rows: Vec<Vec<f64>>,
}

impl CensoredChain {
    /// Builds the chain for censor level `n ≥ 2`. Row m is the law of
    /// min(n, X_1 + ⋯ + X_m), computed by one incremental capped
    /// convolution per state.
    pub fn new(offspring: OffspringDistribution, n: u64) -> Result<Self, Error> {
        if n < 2 {
            return Err(Error::LevelTooSmall { n });
        }
        let n = n as usize;
        let mut rows = Vec::with_capacity(n + 1);
        let mut row0 = vec![0.0; n + 1];
        row0[0] = 1.0;
        rows.push(row0.clone());
        let mut acc = row0; // law of the capped m-fold sum, starting at m = 0
        for m in 1..=n {
            acc = capped_sum_distribution_step(&offspring, &acc, n);
            debug_assert_eq!(m, rows.len());
            rows.push(acc.clone());
        }
        Ok(CensoredChain {
            n,
            offspring,
            rows,
        })
    }

    /// Censor level N.
    pub fn level(&self) -> u64 {
        self.n as u64
    }

    pub fn offspring(&self) -> &OffspringDistribution {
        &self.offspring
    }

    /// Transition probability P(m → j).
    pub fn transition(&self, m: u64, j: u64) -> f64 {
        self.rows[m as usize][j as usize]
    }

    /// Full row of the transition table.
    pub fn row(&self, m: u64) -> &[f64] {
        &self.rows[m as usize]
    }

    /// Expected absorption times (E[U_m])_{m=1..N}: the solution of
    /// (I − M) u = 1 over the transient states.
    pub fn expected_absorption(&self) -> Result<Vec<f64>, Error> {
        let solver = self.transient_solver()?;
        let u = solver.solve(&vec![1.0; self.n]);
        ensure_finite(&u)?;
        Ok(u)
    }

    /// E[U_N]: expected survival time started from the censor level.
    pub fn expected_survival(&self) -> Result<f64, Error> {
        Ok(*self.expected_absorption()?.last().expect("n ≥ 2"))
    }

    /// q_N: the probability that the process, started at N, never returns
    /// to N. Solved through the exit probabilities g_j = P(hit 0 before N
    /// from j) on the interior states, so every term accumulates with the
    /// same sign.
    pub fn never_return_probability(&self) -> Result<f64, Error> {
        let interior = self.n - 1; // states 1..N-1
        let mut off = vec![0.0; interior * interior];
        let mut escape = vec![0.0; interior];
        let mut to_zero = vec![0.0; interior];
        for i in 0..interior {
            let row = &self.rows[i + 1];
            for j in 0..interior {
                if i != j {
                    off[i * interior + j] = row[j + 1];
                }
            }
            escape[i] = row[0] + row[self.n];
            to_zero[i] = row[0];
        }
        let solver = TransientSolver::factorize(interior, off, escape)?;
        let g = solver.solve(&to_zero);
        ensure_finite(&g)?;
        let top = &self.rows[self.n];
        let qn = top[0]
            + g.iter()
                .enumerate()
                .map(|(j, gj)| top[j + 1] * gj)
                .sum::<f64>();
        Ok(qn)
    }

    /// F_{N,N}: expected number of visits to N starting from N (the visit
    /// at time 0 included). Independently of `never_return_probability`,
    /// q_N · F_{N,N} = 1 must hold.
    pub fn expected_visits_to_top(&self) -> Result<f64, Error> {
        let solver = self.transient_solver()?;
        let mut unit = vec![0.0; self.n];
        unit[self.n - 1] = 1.0;
        let col = solver.solve(&unit);
        ensure_finite(&col)?;
        Ok(col[self.n - 1])
    }

    /// E[V_N]: expected last-visit time of N. From P(V_N = k) =
    /// P(X_k = N) · q_N, the mean is q_N · [M (I−M)^{-2}]_{N,N}, evaluated
    /// as two successive solves against the unit vector at N.
    pub fn expected_last_visit(&self) -> Result<f64, Error> {
        let qn = self.never_return_probability()?;
        let solver = self.transient_solver()?;
        let mut unit = vec![0.0; self.n];
        unit[self.n - 1] = 1.0;
        let z1 = solver.solve(&unit);
        let z2 = solver.solve(&z1);
        ensure_finite(&z2)?;
        let top = &self.rows[self.n];
        let weighted: f64 = z2.iter().enumerate().map(|(j, z)| top[j + 1] * z).sum();
        Ok(qn * weighted)
    }

    /// Exact law of the survival time U_N started from N: P(U = k) for
    /// k = 0, 1, …, stopping once the missing tail mass is below
    /// `tail_eps`.
    ///
    /// # Errors
    /// `HardCap` if the sweep would exceed 1e8 steps (e.g. the law is not
    /// supercritical enough for the tail to close at this level).
    pub fn distribution_of_u(&self, tail_eps: f64) -> Result<Vec<f64>, Error> {
        if !(tail_eps > 0.0 && tail_eps < 1.0) {
            return Err(Error::out_of_range(format!(
                "tail_eps {tail_eps} not in (0,1)"
            )));
        }
        let mut state = vec![0.0; self.n + 1];
        state[self.n] = 1.0;
        let mut pmf = vec![0.0]; // P(U = 0) = 0: the process starts at N > 0
        let mut absorbed = 0.0;
        while 1.0 - absorbed >= tail_eps {
            if pmf.len() as u64 > ITERATION_HARD_CAP {
                return Err(Error::HardCap {
                    cap: ITERATION_HARD_CAP,
                });
            }
            state = self.step_distribution(&state);
            pmf.push(state[0] - absorbed);
            absorbed = state[0];
        }
        Ok(pmf)
    }

    /// Marginal law of X_k started from N, as a dense table over {0,…,N}.
    pub fn state_marginal(&self, k: u64) -> Vec<f64> {
        let mut state = vec![0.0; self.n + 1];
        state[self.n] = 1.0;
        for _ in 0..k {
            state = self.step_distribution(&state);
        }
        state
    }

    fn step_distribution(&self, state: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; self.n + 1];
        for (m, &mass) in state.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (j, &p) in self.rows[m].iter().enumerate() {
                if p > 0.0 {
                    next[j] += mass * p;
                }
            }
        }
        next
    }

    /// Kolmogorov–Smirnov distance between the law of U_N · q^N and the
    /// unit exponential, evaluated at both one-sided limits of every jump
    /// k · q^N. `q` must be the extinction probability of the offspring
    /// law. The `truncation` field bounds the error from stopping the exact
    /// law at the requested tail mass.
    pub fn ks_to_exponential(&self, q: f64, tail_eps: f64) -> Result<ExactKs, Error> {
        let mean = self.offspring.mean();
        if mean <= 1.0 + 1e-12 {
            return Err(Error::NotSupercritical { mean });
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::out_of_range(format!(
                "extinction probability {q} not in (0,1)"
            )));
        }
        let pmf = self.distribution_of_u(tail_eps)?;
        let scale = q.powi(self.n as i32);
        Ok(ks_discrete_to_exponential(&pmf, scale, tail_eps))
    }

    fn transient_solver(&self) -> Result<TransientSolver, Error> {
        let dim = self.n;
        let mut off = vec![0.0; dim * dim];
        let mut escape = vec![0.0; dim];
        for i in 0..dim {
            let row = &self.rows[i + 1];
            for j in 0..dim {
                if i != j {
                    off[i * dim + j] = row[j + 1];
                }
            }
            escape[i] = row[0];
        }
        TransientSolver::factorize(dim, off, escape)
    }
}

/// One incremental convolution step: the capped law of an (m+1)-fold sum
/// from the capped law of an m-fold sum. Exact because min(cap, ·) commutes
/// with adding a non-negative summand capped the same way.
fn capped_sum_distribution_step(
    offspring: &OffspringDistribution,
    acc: &[f64],
    cap: usize,
) -> Vec<f64> {
    let mut next = vec![0.0; cap + 1];
    for (s, &mass) in acc.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for &(k, p) in offspring.atoms() {
            next[(s + k as usize).min(cap)] += mass * p;
        }
    }
    next
}

/// Exact KS distance of a lattice law (pmf over k = 0, 1, …, jumps at
/// t = k·scale) to the unit exponential, with the truncation bound that
/// applies beyond the last computed jump.
pub(crate) fn ks_discrete_to_exponential(pmf: &[f64], scale: f64, tail_eps: f64) -> ExactKs {
    let mut cum = 0.0;
    let mut d: f64 = 0.0;
    let mut t = 0.0;
    for (k, &p) in pmf.iter().enumerate() {
        t = k as f64 * scale;
        let target = 1.0 - (-t).exp();
        d = d.max((cum - target).abs()); // left limit of the jump at t
        cum += p;
        d = d.max((cum - target).abs());
    }
    ExactKs {
        statistic: d,
        truncation: tail_eps.max((-t).exp()),
    }
}

/// Result of [`CensoredChain::ks_to_exponential`].
#[derive(Clone, Copy, Debug)]
pub struct ExactKs {
    pub statistic: f64,
    /// Upper bound on the error from tail truncation.
    pub truncation: f64,
}

/// Full summary of one chain: everything the trend tables and reports need.
#[derive(Clone, Debug)]
pub struct ChainReport {
    pub n: u64,
    /// Extinction probability of the uncensored process.
    pub q: f64,
    /// Never-return probability q_N.
    pub q_n: f64,
    /// E[U_m] for start states m = 1..N.
    pub expected_u: Vec<f64>,
    /// E[V_N].
    pub expected_v: f64,
    /// E[U_N] · q^N (→ 1 as N grows).
    pub ratio_mean: f64,
    /// q_N / q^N (→ 1 as N grows).
    pub ratio_qn: f64,
    /// KS distance of U_N · q^N to the unit exponential, when requested.
    pub ks: Option<ExactKs>,
}

impl ChainReport {
    /// Computes the report; `ks_tail_eps` switches on the (potentially much
    /// more expensive) exact KS sweep.
    pub fn compute(chain: &CensoredChain, ks_tail_eps: Option<f64>) -> Result<Self, Error> {
        let q = chain.offspring().extinction_probability()?;
        let expected_u = chain.expected_absorption()?;
        let q_n = chain.never_return_probability()?;
        let expected_v = chain.expected_last_visit()?;
        let q_pow_n = q.powi(chain.n as i32);
        let ks = match ks_tail_eps {
            Some(eps) => Some(chain.ks_to_exponential(q, eps)?),
            None => None,
        };
        Ok(ChainReport {
            n: chain.level(),
            q,
            q_n,
            expected_u: expected_u.clone(),
            expected_v,
            ratio_mean: expected_u.last().unwrap() * q_pow_n,
            ratio_qn: q_n / q_pow_n,
            ks,
        })
    }

    /// E[U_N], the last entry of `expected_u`.
    pub fn expected_u_top(&self) -> f64 {
        *self.expected_u.last().expect("n ≥ 2")
    }
}

/// Cancellation-free LU factorization of (I − M) for a substochastic block
/// M, stored as magnitudes: strict lower part holds the elimination
/// multipliers, strict upper part the (negated) off-diagonal entries, and
/// the diagonal is kept separately. The row-sum identity
/// diag = escape + Σ remaining off-diagonals replaces every subtraction.
struct TransientSolver {
    dim: usize,
    lu: Vec<f64>,
    diag: Vec<f64>,
}

impl TransientSolver {
    /// `off[i*dim + j]` = M_ij for i ≠ j (diagonal slots ignored);
    /// `escape[i]` = 1 − Σ_j M_ij, the per-step probability of leaving the
    /// block from state i.
    fn factorize(dim: usize, mut off: Vec<f64>, mut escape: Vec<f64>) -> Result<Self, Error> {
        assert!(dim >= 1);
        let mut diag = vec![0.0; dim];
        for k in 0..dim {
            let mut pivot = escape[k];
            for j in k + 1..dim {
                pivot += off[k * dim + j];
            }
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(Error::SingularSystem);
            }
            diag[k] = pivot;
            for i in k + 1..dim {
                let mag = off[i * dim + k];
                if mag == 0.0 {
                    continue;
                }
                let mult = mag / pivot;
                off[i * dim + k] = mult;
                escape[i] += mult * escape[k];
                for j in k + 1..dim {
                    if j != i {
                        off[i * dim + j] += mult * off[k * dim + j];
                    }
                }
            }
        }
        Ok(TransientSolver {
            dim,
            lu: off,
            diag,
        })
    }

    /// Solves (I − M) x = b. For b ≥ 0 every substitution step adds
    /// non-negative terms, preserving the factorization's relative accuracy.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let dim = self.dim;
        let mut y = b.to_vec();
        for i in 1..dim {
            let mut acc = y[i];
            for k in 0..i {
                acc += self.lu[i * dim + k] * y[k];
            }
            y[i] = acc;
        }
        let mut x = y;
        for i in (0..dim).rev() {
            let mut acc = x[i];
            for j in i + 1..dim {
                acc += self.lu[i * dim + j] * x[j];
            }
            x[i] = acc / self.diag[i];
        }
        x
    }
}

fn ensure_finite(values: &[f64]) -> Result<(), Error> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::SingularSystem)
    }
}
