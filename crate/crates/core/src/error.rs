//! Error type shared by every module of the crate.

use thiserror::Error;

/// Everything that can go wrong across distributions, chains, simulators,
/// and statistics. Variants are grouped by the contract they enforce; the
/// CLI maps input/model violations to exit code 2 and numerical breakdown
/// to exit code 1.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Probability masses do not sum to 1 within tolerance.
    #[error("probability masses sum to {sum}, not 1")]
    NotNormalized { sum: f64 },

    /// A distribution on the non-negative integers was given p_0 = 0; the
    /// censored process then never dies and every absorption quantity is
    /// undefined.
    #[error("offspring law has no mass at 0 (extinction unreachable)")]
    ZeroAtOrigin,

    /// A negative probability was supplied.
    #[error("negative probability {prob} at value {value}")]
    NegativeMass { value: u64, prob: f64 },

    /// The same support value appeared twice in a pmf table.
    #[error("duplicate pmf entry for value {value}")]
    DuplicateValue { value: u64 },

    /// An argument fell outside its documented domain.
    #[error("argument out of range: {what}")]
    OutOfRange { what: String },

    /// Offspring mean is ≤ 1 (within tolerance); there is no extinction
    /// probability strictly inside (0,1).
    #[error("offspring law is not supercritical (mean {mean})")]
    NotSupercritical { mean: f64 },

    /// Censor levels below 2 are rejected.
    #[error("censor level {n} is below the minimum of 2")]
    LevelTooSmall { n: u64 },

    /// A linear solve over the transient states broke down (non-finite or
    /// non-positive pivot).
    #[error("transient-state linear system is singular or overflowed")]
    SingularSystem,

    /// An exact-distribution iteration exceeded the hard iteration cap
    /// before reaching the requested tail mass.
    #[error("distribution iteration exceeded the hard cap of {cap} steps")]
    HardCap { cap: u64 },

    /// Every simulated path hit the horizon; estimates would be meaningless.
    #[error("all paths were truncated at the horizon")]
    AllTruncated,

    /// A selection step was asked to keep more particles than exist.
    #[error("selection needs {need} children but only {have} exist")]
    TooFewChildren { have: u64, need: u64 },

    /// A statistic was requested on an empty sample.
    #[error("empty sample")]
    EmptySample,

    /// Fewer than two categories remained after pooling.
    #[error("fewer than two categories after pooling")]
    TooFewCategories,

    /// Pooling could not bring every expected count up to the threshold.
    #[error("a pooled category still has expected count {expected} < {threshold}")]
    UnderpooledExpectation { expected: f64, threshold: f64 },

    /// Not enough observations for the requested moment (e.g. variance of a
    /// single value).
    #[error("need at least {need} samples, have {have}")]
    TooFewSamples { have: u64, need: u64 },

    /// A pmf file line could not be parsed.
    #[error("pmf file line {line}: {msg}")]
    PmfParse { line: usize, msg: String },
}

impl Error {
    /// Convenience constructor for [`Error::OutOfRange`].
    pub fn out_of_range(what: impl Into<String>) -> Self {
        Error::OutOfRange { what: what.into() }
    }
}
