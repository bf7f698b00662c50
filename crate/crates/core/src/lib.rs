//! Censored Galton-Watson processes and the N-particle branching-selection
//! system they drive.
//!
//! A supercritical branching process whose population is capped at a level N
//! each generation becomes a finite absorbing Markov chain, so its survival
//! time U_N, last-visit time V_N, and never-return probability q_N are exact
//! linear-algebra quantities ([`chain`]). As N grows, U_N·q^N approaches a
//! unit exponential, E[U_N] grows like (1/q)^N, and the front speed v_N of
//! the associated branching-selection particle system satisfies
//! 1 − 1/(E[V_N]+1) ≤ v_N ≤ 1 − 1/E[U_N], with (1 − v_N)/q^N → 1.
//!
//! The crate pairs those exact computations with deterministic, seedable
//! Monte Carlo ([`sim`], [`selection`]) and the goodness-of-fit machinery to
//! compare the two ([`stats`]):
//!
//! - [`offspring`]: offspring distributions, generating functions,
//!   extinction probabilities, the Binomial(2, α) family with its
//!   closed-form extinction probability ((1−α)/α)², and joint
//!   (advance, stay) pair laws for the particle system.
//! - [`chain`]: the censored chain as an explicit transition table;
//!   expected absorption and last-visit times, never-return probability,
//!   the exact law of U_N, and its KS distance to the exponential limit —
//!   all through a cancellation-free elimination that keeps full relative
//!   precision even when q_N ~ 1e-48.
//! - [`sim`]: path records (U, V, passage times, return count T) and
//!   worker-count-independent batch estimators.
//! - [`selection`]: the N rightmost-children particle system, front-speed
//!   estimation, frontier-count histograms, the exact speed bracket, and
//!   the renewal-front constructions that realize its two sides.
//! - [`stats`]: Kolmogorov–Smirnov and chi-square tests, geometric MLE,
//!   and mergeable streaming moments.
//!
//! Every randomized routine takes a seed and yields byte-identical results
//! for a fixed seed at any worker count: replicas draw from per-replica
//! counter-based streams and reductions run in replica order.

pub mod chain;
pub mod error;
pub mod offspring;
pub mod selection;
pub mod sim;
pub mod stats;

pub use chain::{CensoredChain, ChainReport, ExactKs};
pub use error::Error;
pub use offspring::{
    capped_sum_distribution, q_alpha_closed_form, OffspringDistribution, PairedOffspring,
};
pub use selection::{
    frontier_counts, simulate_renewal_front, simulate_speed, simulate_speed_traced, speed_bracket,
    FrontierCounts, ParticleConfiguration, RenewalInterval, SpeedEstimate,
};
pub use sim::{
    batch_estimate, batch_summaries, default_horizon, sample_u_rescaled, simulate_path,
    BatchEstimate, PathRecord, PathSummary,
};
pub use stats::{
    chi_square_gof, geometric_fit, ks_statistic, GeometricFit, GofResult, StreamingMoments,
};
