//! Goodness-of-fit and streaming-summary statistics used to compare Monte
//! Carlo output against exact laws: Kolmogorov–Smirnov against a continuous
//! reference, chi-square against a discrete one, a geometric MLE, and
//! mergeable online moments.

use crate::error::Error;

/// Outcome of a goodness-of-fit test.
#[derive(Clone, Copy, Debug)]
pub struct GofResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Degrees of freedom, when the test has a finite-dof null.
    pub dof: Option<usize>,
    /// Sample size the statistic was computed from.
    pub n: usize,
}

/// Two-sided Kolmogorov–Smirnov statistic of a sample against a continuous
/// CDF, with the asymptotic Kolmogorov p-value. The empirical CDF jumps at
/// every sample point, so the supremum is checked from both sides of each
/// jump.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<GofResult, Error> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::out_of_range("non-finite value in sample"));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::out_of_range(format!("cdf({x}) = {f} not in [0,1]")));
        }
        d = d.max((i as f64 / nf - f).abs());
        d = d.max(((i + 1) as f64 / nf - f).abs());
    }
    Ok(GofResult {
        statistic: d,
        p_value: kolmogorov_sf(nf.sqrt() * d),
        dof: None,
        n,
    })
}

/// Survival function of the Kolmogorov distribution,
/// P(K > x) = 2 Σ_{j≥1} (−1)^{j−1} exp(−2 j² x²), truncated once terms
/// drop below 1e-12.
fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..1000 {
        let term = (-2.0 * (j * j) as f64 * x * x).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Maximum-likelihood fit of a geometric law on {0, 1, 2, …}
/// (P(T = k) = (1−p)^k p) from counts, with the asymptotic standard error.
#[derive(Clone, Copy, Debug)]
pub struct GeometricFit {
    pub p_hat: f64,
    pub se: f64,
    pub n: usize,
}

pub fn geometric_fit(sample: &[u64]) -> Result<GeometricFit, Error> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = sample.len() as f64;
    let total: f64 = sample.iter().map(|&x| x as f64).sum();
    let p_hat = n / (n + total);
    Ok(GeometricFit {
        p_hat,
        se: p_hat * ((1.0 - p_hat) / n).sqrt(),
        n: sample.len(),
    })
}

/// Pearson chi-square test of observed counts against null probabilities.
///
/// Low-expectation categories are pooled from the tail inward until every
/// pooled category has expected count ≥ 5; a leftover front block that still
/// can't reach the threshold is an `UnderpooledExpectation` error rather
/// than a silently merged category. The null probabilities are renormalized
/// (they may describe a truncated law) and must cover ≥ 2 categories after
/// pooling.
pub fn chi_square_gof(observed: &[u64], probabilities: &[f64]) -> Result<GofResult, Error> {
    const MIN_EXPECTED: f64 = 5.0;
    if observed.len() != probabilities.len() {
        return Err(Error::out_of_range(format!(
            "observed has {} categories but null has {}",
            observed.len(),
            probabilities.len()
        )));
    }
    if probabilities.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(Error::out_of_range("negative or non-finite probability"));
    }
    let mass: f64 = probabilities.iter().sum();
    if mass <= 0.0 {
        return Err(Error::out_of_range("null distribution has zero mass"));
    }
    let total: u64 = observed.iter().sum();
    let nf = total as f64;

    // Pool from the tail toward the front so the (typically fuller) head
    // categories survive intact.
    let mut pooled: Vec<(f64, f64)> = Vec::new(); // (observed, expected)
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    for (&o, &p) in observed.iter().zip(probabilities).rev() {
        acc_o += o as f64;
        acc_e += nf * p / mass;
        if acc_e >= MIN_EXPECTED {
            pooled.push((acc_o, acc_e));
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 || acc_o > 0.0 {
        // A front block remains below threshold; folding it into its
        // neighbour would silently change the test, so refuse.
        return Err(Error::UnderpooledExpectation {
            expected: acc_e,
            threshold: MIN_EXPECTED,
        });
    }
    if pooled.len() < 2 {
        return Err(Error::TooFewCategories);
    }
    let statistic: f64 = pooled
        .iter()
        .map(|&(o, e)| {
            let diff = o - e;
            diff * diff / e
        })
        .sum();
    let dof = pooled.len() - 1;
    Ok(GofResult {
        statistic,
        p_value: chi_square_sf(statistic, dof),
        dof: Some(dof),
        n: total as usize,
    })
}

/// P(χ²_dof > x) = Q(dof/2, x/2).
fn chi_square_sf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(dof as f64 / 2.0, x / 2.0)
}

/// Regularized upper incomplete gamma Q(a, x) = Γ(a, x)/Γ(a), via the
/// series for x < a + 1 and the Lentz continued fraction otherwise.
fn gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..500 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_cf(a: f64, x: f64) -> f64 {
    // Modified Lentz evaluation of the standard continued fraction.
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    ((-x + a * x.ln() - ln_gamma(a)).exp() * h).clamp(0.0, 1.0)
}

/// Lanczos approximation (g = 7, 9 coefficients), |relative error| < 1e-13
/// on the positive axis.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    debug_assert!(x > 0.0);
    if x < 0.5 {
        // Reflection keeps the approximation in its accurate range.
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Online mean/variance accumulator (Welford update, Chan merge); merging
/// two accumulators gives exactly the same state as pushing the
/// concatenated stream.
#[derive(Clone, Copy, Debug, Default)]
pub struct StreamingMoments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl StreamingMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &StreamingMoments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let delta = other.mean - self.mean;
        let n = na + nb;
        self.mean += delta * nb / n;
        self.m2 += other.m2 + delta * delta * na * nb / n;
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> Result<f64, Error> {
        if self.n == 0 {
            return Err(Error::TooFewSamples { have: 0, need: 1 });
        }
        Ok(self.mean)
    }

    pub fn sample_variance(&self) -> Result<f64, Error> {
        if self.n < 2 {
            return Err(Error::TooFewSamples {
                have: self.n,
                need: 2,
            });
        }
        Ok(self.m2 / (self.n - 1) as f64)
    }

    /// Half-width of the normal-approximation 95% confidence interval for
    /// the mean: 1.96 · s / √n.
    pub fn ci95_half_width(&self) -> Result<f64, Error> {
        Ok(1.96 * (self.sample_variance()? / self.n as f64).sqrt())
    }
}
