//! Property-based invariants: capped sums against brute-force enumeration,
//! selection bookkeeping, moment merging, KS reparameterization invariance,
//! estimator consistency, and the chi-square tail against a Monte Carlo
//! null.

use censored_gw::{
    capped_sum_distribution, chi_square_gof, geometric_fit, ks_statistic,
    OffspringDistribution, ParticleConfiguration, StreamingMoments,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

/// Small offspring laws with guaranteed mass at zero.
fn small_law() -> impl Strategy<Value = OffspringDistribution> {
    (
        0.05f64..1.0,
        prop::collection::vec((1u64..=4, 0.0f64..1.0), 0..3),
    )
        .prop_map(|(w0, rest)| {
            let mut table = vec![(0u64, w0)];
            for (v, w) in rest {
                if !table.iter().any(|&(tv, _)| tv == v) && w > 1e-3 {
                    table.push((v, w));
                }
            }
            let total: f64 = table.iter().map(|&(_, w)| w).sum();
            let table: Vec<(u64, f64)> =
                table.into_iter().map(|(v, w)| (v, w / total)).collect();
            OffspringDistribution::from_pmf(&table).unwrap()
        })
}

/// Law of min(cap, X_1 + … + X_m) by exhaustive enumeration.
fn enumerate_capped(d: &OffspringDistribution, m: u64, cap: u64) -> Vec<f64> {
    let mut out = vec![0.0; cap as usize + 1];
    let mut stack = vec![(0u64, 0u64, 1.0f64)]; // (draws done, running sum, mass)
    while let Some((done, sum, mass)) = stack.pop() {
        if done == m {
            out[sum.min(cap) as usize] += mass;
            continue;
        }
        for &(v, p) in d.atoms() {
            stack.push((done + 1, sum + v, mass * p));
        }
    }
    out
}

proptest! {
    #[test]
    fn capped_sum_equals_enumeration(
        d in small_law(),
        m in 0u64..=4,
        cap in 1u64..=8,
    ) {
        let fast = capped_sum_distribution(&d, m, cap);
        let slow = enumerate_capped(&d, m, cap);
        prop_assert_eq!(fast.len(), slow.len());
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
        let total: f64 = fast.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generation_law_iterates_monotonically(d in small_law()) {
        // P(extinct by k) = f_k(0) climbs and stays within [0, 1].
        let mut prev = 0.0;
        for k in 0..60 {
            let fk = d.pgf_iterate(k);
            prop_assert!((0.0..=1.0).contains(&fk));
            prop_assert!(fk >= prev - 1e-15);
            prev = fk;
        }
    }

    #[test]
    fn selection_keeps_the_rightmost(
        table in prop::collection::btree_map(-5i64..15, 1u64..6, 1..8),
        pick in 0u64..30,
    ) {
        let pairs: Vec<(i64, u64)> = table.iter().map(|(&p, &c)| (p, c)).collect();
        let config = ParticleConfiguration::from_counts(&pairs).unwrap();
        let total = config.total();
        let n = 1 + pick % total; // 1..=total
        let kept = config.select_rightmost(n).unwrap();
        prop_assert_eq!(kept.total(), n);
        let cutoff = kept.positions().next().unwrap().0;
        for (pos, count) in config.positions() {
            let k = kept.count_at(pos);
            if pos > cutoff {
                prop_assert_eq!(k, count, "full counts above the cutoff");
            } else if pos == cutoff {
                prop_assert!(k >= 1 && k <= count);
            } else {
                prop_assert_eq!(k, 0, "nothing below the cutoff");
            }
        }
        prop_assert!(config.select_rightmost(total + 1).is_err());
    }

    #[test]
    fn moment_merge_is_concatenation(
        data in prop::collection::vec(-1e3f64..1e3, 2..40),
        split_frac in 0.0f64..1.0,
    ) {
        let split = ((data.len() as f64) * split_frac) as usize;
        let mut left = StreamingMoments::new();
        let mut right = StreamingMoments::new();
        for &x in &data[..split] { left.push(x); }
        for &x in &data[split..] { right.push(x); }
        left.merge(&right);
        let mut whole = StreamingMoments::new();
        for &x in &data { whole.push(x); }
        prop_assert_eq!(left.count(), whole.count());
        let (a, b) = (left.mean().unwrap(), whole.mean().unwrap());
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        let (va, vb) = (left.sample_variance().unwrap(), whole.sample_variance().unwrap());
        prop_assert!((va - vb).abs() < 1e-9 * (1.0 + vb.abs()));
    }

    #[test]
    fn ks_is_reparameterization_invariant(
        sample in prop::collection::vec(0.01f64..10.0, 1..60),
    ) {
        // Push both sample and reference through x ↦ x² (strictly
        // increasing on the positive axis): the statistic cannot move.
        let direct = ks_statistic(&sample, |t| 1.0 - (-t.max(0.0)).exp()).unwrap();
        let squared: Vec<f64> = sample.iter().map(|x| x * x).collect();
        let transformed =
            ks_statistic(&squared, |t| 1.0 - (-t.max(0.0).sqrt()).exp()).unwrap();
        prop_assert!((direct.statistic - transformed.statistic).abs() < 1e-12);
    }
}

#[test]
fn geometric_fit_is_consistent() {
    for (p, seed) in [(0.1f64, 1u64), (0.5, 2), (0.9, 3)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<u64> = (0..50_000)
            .map(|_| {
                let mut k = 0u64;
                while rng.random::<f64>() >= p {
                    k += 1;
                }
                k
            })
            .collect();
        let fit = geometric_fit(&draws).unwrap();
        assert!(
            (fit.p_hat - p).abs() < 4.0 * fit.se,
            "p={p}: fit {} (se {})",
            fit.p_hat,
            fit.se
        );
    }
}

/// Draws one multinomial sample by the conditional-binomial method.
fn multinomial(n: u64, probs: &[f64], rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut out = Vec::with_capacity(probs.len());
    let mut remaining = n;
    let mut mass = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        if i + 1 == probs.len() {
            out.push(remaining);
            break;
        }
        let share = (p / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, share).unwrap().sample(rng);
        out.push(draw);
        remaining -= draw;
        mass -= p;
    }
    out
}

#[test]
fn chi_square_p_value_matches_monte_carlo_null() {
    // Null calibration: the analytic p-value must match the frequency of
    // equal-or-larger statistics across 10⁶ multinomial replicates.
    for (dof, seed) in [(1usize, 4u64), (3, 5), (10, 6)] {
        let cats = dof + 1;
        let probs = vec![1.0 / cats as f64; cats];
        let n = 1000u64; // expected counts ≫ 5: pooling is a no-op
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let observed = multinomial(n, &probs, &mut rng);
        let gof = chi_square_gof(&observed, &probs).unwrap();
        assert_eq!(gof.dof, Some(dof));

        let stat = |counts: &[u64]| -> f64 {
            counts
                .iter()
                .zip(&probs)
                .map(|(&o, &p)| {
                    let e = n as f64 * p;
                    (o as f64 - e) * (o as f64 - e) / e
                })
                .sum()
        };
        let replicates = 1_000_000u32;
        let mut exceed = 0u32;
        for _ in 0..replicates {
            if stat(&multinomial(n, &probs, &mut rng)) >= gof.statistic {
                exceed += 1;
            }
        }
        let p_mc = exceed as f64 / replicates as f64;
        assert!(
            (p_mc - gof.p_value).abs() < 0.01,
            "dof={dof}: analytic {} vs MC {}",
            gof.p_value,
            p_mc
        );
    }
}
