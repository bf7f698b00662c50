//! Offspring laws: finite pmf tables on the non-negative integers, their
//! generating functions, extinction probabilities, and O(1) sampling.
//!
//! Everything downstream (exact chains, simulators, particle systems) builds
//! on the two types here. [`OffspringDistribution`] carries the standing
//! assumption p_0 > 0, so extinction is always reachable; [`PairedOffspring`]
//! is a joint law of (x, x') with x + x' ≥ 1, so a branching step never
//! deletes a particle outright. Both are immutable after construction and
//! safe to share across worker threads.

use rand::Rng;

use crate::error::Error;

/// Tolerance for accepting a user-supplied pmf as normalized; accepted
/// tables are renormalized by their exact sum afterwards.
const NORMALIZATION_SLACK: f64 = 1e-9;

/// Mean ≤ 1 + this margin counts as not supercritical.
const SUPERCRITICAL_MARGIN: f64 = 1e-12;

/// Precomputed alias table (Vose construction) for O(1) draws from a finite
/// weighted set. Indexing is positional; callers keep their own value list.
#[derive(Clone, Debug)]
struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        assert!(n > 0 && n <= u32::MAX as usize);
        let total: f64 = weights.iter().sum();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut prob = vec![0.0; n];
        let mut alias = vec![0u32; n];
        let mut small: Vec<usize> = Vec::with_capacity(n);
        let mut large: Vec<usize> = Vec::with_capacity(n);
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            prob[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers on either list are 1.0 up to rounding.
        for &i in small.iter().chain(large.iter()) {
            prob[i] = 1.0;
        }
        AliasTable { prob, alias }
    }

    /// One draw; always consumes exactly two values from the stream, which
    /// keeps replica streams aligned regardless of the outcome.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }
}

/// A finite offspring law: pmf over {0, 1, 2, …} with p_0 > 0.
#[derive(Clone, Debug)]
pub struct OffspringDistribution {
    /// Atoms with strictly positive mass, sorted by value.
    atoms: Vec<(u64, f64)>,
    alias: AliasTable,
}

impl OffspringDistribution {
    /// Builds a law from (value, probability) pairs. Values must be
    /// distinct, masses non-negative and summing to 1 within 1e-9 (the
    /// table is then renormalized by its exact sum), and p_0 must be
    /// positive.
    pub fn from_pmf(table: &[(u64, f64)]) -> Result<Self, Error> {
        let mut entries = table.to_vec();
        entries.sort_by_key(|&(k, _)| k);
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::DuplicateValue { value: pair[0].0 });
            }
        }
        for &(k, p) in &entries {
            if p < 0.0 || !p.is_finite() {
                return Err(Error::NegativeMass { value: k, prob: p });
            }
        }
        let sum: f64 = entries.iter().map(|&(_, p)| p).sum();
        if (sum - 1.0).abs() > NORMALIZATION_SLACK {
            return Err(Error::NotNormalized { sum });
        }
        let atoms: Vec<(u64, f64)> = entries
            .into_iter()
            .filter(|&(_, p)| p > 0.0)
            .map(|(k, p)| (k, p / sum))
            .collect();
        match atoms.first() {
            Some(&(0, _)) => {}
            _ => return Err(Error::ZeroAtOrigin),
        }
        let weights: Vec<f64> = atoms.iter().map(|&(_, p)| p).collect();
        let alias = AliasTable::new(&weights);
        Ok(OffspringDistribution { atoms, alias })
    }

    /// Parses the plain-text pmf format: one `value probability` pair per
    /// line, `#` starts a comment, blank lines ignored, any order.
    pub fn from_pmf_text(text: &str) -> Result<Self, Error> {
        let mut table = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (Some(k), Some(p), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(Error::PmfParse {
                    line: idx + 1,
                    msg: format!("expected `value probability`, got {line:?}"),
                });
            };
            let k: u64 = k.parse().map_err(|_| Error::PmfParse {
                line: idx + 1,
                msg: format!("bad value {k:?}"),
            })?;
            let p: f64 = p.parse().map_err(|_| Error::PmfParse {
                line: idx + 1,
                msg: format!("bad probability {p:?}"),
            })?;
            table.push((k, p));
        }
        if table.is_empty() {
            return Err(Error::PmfParse {
                line: 0,
                msg: "no pmf entries found".into(),
            });
        }
        Self::from_pmf(&table)
    }

    /// Atoms with positive mass, sorted by value.
    pub fn atoms(&self) -> &[(u64, f64)] {
        &self.atoms
    }

    /// Mass at `k` (0 for values off the support).
    pub fn prob(&self, k: u64) -> f64 {
        self.atoms
            .binary_search_by_key(&k, |&(v, _)| v)
            .map(|i| self.atoms[i].1)
            .unwrap_or(0.0)
    }

    /// Largest value with positive mass.
    pub fn max_value(&self) -> u64 {
        self.atoms.last().expect("non-empty support").0
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(k, p)| k as f64 * p).sum()
    }

    /// f(s) = Σ p_k s^k for s in [0, 1].
    pub fn pgf_eval(&self, s: f64) -> Result<f64, Error> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::out_of_range(format!("pgf argument {s} not in [0,1]")));
        }
        Ok(self.pgf_unchecked(s))
    }

    fn pgf_unchecked(&self, s: f64) -> f64 {
        self.atoms
            .iter()
            .map(|&(k, p)| p * s.powi(k as i32))
            .sum()
    }

    /// f'(s) = Σ k p_k s^{k-1}.
    fn pgf_derivative(&self, s: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|&&(k, _)| k >= 1)
            .map(|&(k, p)| k as f64 * p * s.powi(k as i32 - 1))
            .sum()
    }

    /// f_K(0): the K-fold iterate of the generating function at 0, i.e. the
    /// probability the branching process is extinct by generation K.
    /// Nondecreasing in K; converges to the extinction probability when the
    /// law is supercritical.
    pub fn pgf_iterate(&self, k: u64) -> f64 {
        let mut s = 0.0;
        for _ in 0..k {
            // Probabilities sum to 1 only up to rounding, so near the fixed
            // point the iterate can drift a few ulp past it; it is a
            // probability by definition, so keep it one.
            s = self.pgf_unchecked(s).clamp(0.0, 1.0);
        }
        s
    }

    /// The unique root of f(x) = x in (0, 1) for a supercritical law:
    /// bisection on g(x) = f(x) − x over [0, 1 − 1e-9] down to 1e-13,
    /// then two Newton polish steps.
    ///
    /// # Errors
    /// `NotSupercritical` when the mean is ≤ 1 + 1e-12, or when the root is
    /// numerically indistinguishable from 1 (law within ~1e-9 of critical).
    pub fn extinction_probability(&self) -> Result<f64, Error> {
        let mean = self.mean();
        if mean <= 1.0 + SUPERCRITICAL_MARGIN {
            return Err(Error::NotSupercritical { mean });
        }
        let g = |x: f64| self.pgf_unchecked(x) - x;
        let mut lo = 0.0;
        let mut hi = 1.0 - 1e-9;
        if g(hi) >= 0.0 {
            // Root squeezed against 1: effectively critical at our resolution.
            return Err(Error::NotSupercritical { mean });
        }
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut q = 0.5 * (lo + hi);
        for _ in 0..2 {
            let slope = self.pgf_derivative(q) - 1.0;
            if slope == 0.0 {
                break;
            }
            let next = q - g(q) / slope;
            if next > 0.0 && next < 1.0 {
                q = next;
            }
        }
        Ok(q)
    }

    /// One draw from the law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.atoms[self.alias.sample(rng)].0
    }

    /// When the law is exactly the marginal of a two-trial Bernoulli scheme
    /// — support within {0,1,2} with p_2 = α², p_1 = 2α(1−α), p_0 = (1−α)²
    /// — returns α. Simulators use this to replace per-individual draws by
    /// one binomial draw per generation.
    pub fn binomial2_alpha(&self) -> Option<f64> {
        if self.max_value() > 2 {
            return None;
        }
        let p2 = self.prob(2);
        if p2 <= 0.0 {
            return None;
        }
        let alpha = p2.sqrt();
        if alpha >= 1.0 {
            return None;
        }
        let fits = (self.prob(0) - (1.0 - alpha).powi(2)).abs() <= 1e-12
            && (self.prob(1) - 2.0 * alpha * (1.0 - alpha)).abs() <= 1e-12;
        fits.then_some(alpha)
    }
}

/// The closed form q_α = (1 − 2α(1−α) − √(1 − 4α(1−α))) / (2α²) for the
/// extinction probability of the Binomial(2, α) offspring law, valid for
/// α in (1/2, 1).
pub fn q_alpha_closed_form(alpha: f64) -> Result<f64, Error> {
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(Error::out_of_range(format!(
            "alpha {alpha} not in (1/2, 1)"
        )));
    }
    let cross = alpha * (1.0 - alpha);
    Ok((1.0 - 2.0 * cross - (1.0 - 4.0 * cross).sqrt()) / (2.0 * alpha * alpha))
}

/// Exact law of min(cap, X_1 + ⋯ + X_m) for i.i.d. draws from `d`, as a
/// dense table over {0, …, cap}; the bucket at `cap` carries P(sum ≥ cap).
/// Folding each factor's mass above `cap` into `cap` before convolving is
/// exact because the summands are non-negative.
pub fn capped_sum_distribution(d: &OffspringDistribution, m: u64, cap: u64) -> Vec<f64> {
    assert!(cap >= 1, "cap must be at least 1");
    let cap = cap as usize;
    let folded = fold_at_cap(d, cap);
    let mut out = vec![0.0; cap + 1];
    out[0] = 1.0;
    for _ in 0..m {
        out = capped_convolve(&out, &folded, cap);
    }
    out
}

/// Per-factor law with mass at values ≥ cap lumped at cap, as (value, mass).
fn fold_at_cap(d: &OffspringDistribution, cap: usize) -> Vec<(usize, f64)> {
    let mut folded = vec![0.0; cap + 1];
    for &(k, p) in d.atoms() {
        folded[(k as usize).min(cap)] += p;
    }
    folded
        .into_iter()
        .enumerate()
        .filter(|&(_, p)| p > 0.0)
        .collect()
}

fn capped_convolve(base: &[f64], factor: &[(usize, f64)], cap: usize) -> Vec<f64> {
    let mut out = vec![0.0; cap + 1];
    for (s, &ps) in base.iter().enumerate() {
        if ps == 0.0 {
            continue;
        }
        for &(k, pk) in factor {
            out[(s + k).min(cap)] += ps * pk;
        }
    }
    out
}

/// Joint law of (x, x′) with x + x′ ≥ 1 almost surely: the branching rule
/// sends, per particle, x children one position to the right and x′ children
/// to the same position.
#[derive(Clone, Debug)]
pub struct PairedOffspring {
    /// Pairs with positive mass, sorted.
    pairs: Vec<((u64, u64), f64)>,
    /// Marginal law of x, present whenever P(x = 0) > 0 (the only case in
    /// which it is a valid offspring law for the censored process).
    marginal: Option<OffspringDistribution>,
    alias: AliasTable,
}

impl PairedOffspring {
    /// Builds a joint law from ((x, x′), probability) entries. Masses must
    /// be non-negative and sum to 1 within 1e-9, pairs distinct, and every
    /// supported pair needs x + x′ ≥ 1.
    pub fn from_joint(table: &[((u64, u64), f64)]) -> Result<Self, Error> {
        let mut pairs = table.to_vec();
        pairs.sort_by_key(|&(xy, _)| xy);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::DuplicateValue { value: w[0].0 .0 });
            }
        }
        for &((x, xp), p) in &pairs {
            if p < 0.0 || !p.is_finite() {
                return Err(Error::NegativeMass { value: x, prob: p });
            }
            if p > 0.0 && x + xp == 0 {
                return Err(Error::out_of_range(
                    "pair (0,0) has positive mass; x + x' ≥ 1 is required",
                ));
            }
        }
        let sum: f64 = pairs.iter().map(|&(_, p)| p).sum();
        if (sum - 1.0).abs() > NORMALIZATION_SLACK {
            return Err(Error::NotNormalized { sum });
        }
        let pairs: Vec<((u64, u64), f64)> = pairs
            .into_iter()
            .filter(|&(_, p)| p > 0.0)
            .map(|(xy, p)| (xy, p / sum))
            .collect();
        let mut x_table: Vec<(u64, f64)> = Vec::new();
        for &((x, _), p) in &pairs {
            match x_table.iter_mut().find(|(v, _)| *v == x) {
                Some((_, acc)) => *acc += p,
                None => x_table.push((x, p)),
            }
        }
        let marginal = OffspringDistribution::from_pmf(&x_table).ok();
        let weights: Vec<f64> = pairs.iter().map(|&(_, p)| p).collect();
        let alias = AliasTable::new(&weights);
        Ok(PairedOffspring {
            pairs,
            marginal,
            alias,
        })
    }

    /// x ~ Binomial(2, α), x′ = 2 − x: every particle is replaced by exactly
    /// two children, each advancing independently with probability α.
    pub fn binomial2(alpha: f64) -> Result<Self, Error> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::out_of_range(format!("alpha {alpha} not in (0,1)")));
        }
        let beta = 1.0 - alpha;
        Self::from_joint(&[
            ((0, 2), beta * beta),
            ((1, 1), 2.0 * alpha * beta),
            ((2, 0), alpha * alpha),
        ])
    }

    /// The minimal coupling x′ = 1 when x = 0, else x′ = 0: a particle with
    /// no advancing children leaves exactly one child in place.
    pub fn minimal_stay(x: &OffspringDistribution) -> Self {
        let table: Vec<((u64, u64), f64)> = x
            .atoms()
            .iter()
            .map(|&(k, p)| ((k, u64::from(k == 0)), p))
            .collect();
        Self::from_joint(&table).expect("valid marginal yields valid pairing")
    }

    /// Supported pairs with their masses, sorted.
    pub fn pairs(&self) -> &[((u64, u64), f64)] {
        &self.pairs
    }

    /// Marginal law of x.
    ///
    /// # Errors
    /// `ZeroAtOrigin` when P(x = 0) = 0: the marginal is then not a valid
    /// censored-process offspring law (extinction is unreachable).
    pub fn marginal_x(&self) -> Result<&OffspringDistribution, Error> {
        self.marginal.as_ref().ok_or(Error::ZeroAtOrigin)
    }

    /// One joint draw.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (u64, u64) {
        self.pairs[self.alias.sample(rng)].0
    }
}
