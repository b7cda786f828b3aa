//! Two-sided Mann-Whitney U test.
//!
//! Exact permutation distribution whenever both samples have at most 10
//! observations (which covers the 10-repetition experiment protocol);
//! normal approximation with tie correction and continuity correction
//! otherwise. Ties are midranked in both branches.

use statrs::distribution::{ContinuousCDF, Normal};

use super::{EvalError, SignificanceMethod, SignificanceResult};

/// Sample size bound under which the permutation distribution is exact.
pub const EXACT_LIMIT: usize = 10;

/// Midranks of the pooled sample, 1-based.
fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].partial_cmp(&pooled[j]).expect("non-NaN samples"));
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn u_from_rank_sum(rank_sum: f64, n: usize) -> f64 {
    rank_sum - (n * (n + 1)) as f64 / 2.0
}

/// Exact two-sided p: the fraction of the C(n, n_a) equally likely rank
/// assignments whose U statistic is at most the observed min(U_a, U_b),
/// doubled and clipped to 1.
fn exact_p(ranks: &[f64], n_a: usize, u_min_obs: f64) -> f64 {
    let n = ranks.len();
    let mut extreme = 0u64;
    let mut total = 0u64;
    // Lexicographic combination walk over which pooled slots belong to A.
    let mut comb: Vec<usize> = (0..n_a).collect();
    loop {
        let rank_sum: f64 = comb.iter().map(|&i| ranks[i]).sum();
        let u_a = u_from_rank_sum(rank_sum, n_a);
        total += 1;
        if u_a <= u_min_obs + 1e-9 {
            extreme += 1;
        }
        // Advance.
        let mut i = n_a;
        loop {
            if i == 0 {
                return (2.0 * extreme as f64 / total as f64).min(1.0);
            }
            i -= 1;
            if comb[i] != i + n - n_a {
                break;
            }
        }
        comb[i] += 1;
        for j in i + 1..n_a {
            comb[j] = comb[j - 1] + 1;
        }
    }
}

/// Two-sided Mann-Whitney U test between two samples.
pub fn mann_whitney_u(sample_a: &[f64], sample_b: &[f64]) -> Result<SignificanceResult, EvalError> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(EvalError::EmptySample);
    }
    let (n_a, n_b) = (sample_a.len(), sample_b.len());
    let mut pooled = Vec::with_capacity(n_a + n_b);
    pooled.extend_from_slice(sample_a);
    pooled.extend_from_slice(sample_b);
    let ranks = midranks(&pooled);

    let rank_sum_a: f64 = ranks[..n_a].iter().sum();
    let u_a = u_from_rank_sum(rank_sum_a, n_a);
    let u_b = (n_a * n_b) as f64 - u_a;
    let u_min = u_a.min(u_b);

    if n_a <= EXACT_LIMIT && n_b <= EXACT_LIMIT {
        let p = exact_p(&ranks, n_a, u_min);
        return Ok(SignificanceResult {
            u_statistic: u_min,
            p_value: p,
            method: SignificanceMethod::Exact,
        });
    }

    // Normal approximation with tie correction.
    let n = (n_a + n_b) as f64;
    let mean = (n_a * n_b) as f64 / 2.0;
    let mut tie_term = 0.0;
    {
        let mut sorted = pooled.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i + 1;
            while j < sorted.len() && sorted[j] == sorted[i] {
                j += 1;
            }
            let t = (j - i) as f64;
            tie_term += t * t * t - t;
            i = j;
        }
    }
    let var = (n_a * n_b) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return Ok(SignificanceResult {
            u_statistic: u_min,
            p_value: 1.0,
            method: SignificanceMethod::NormalApprox,
        });
    }
    let z = (u_min - mean + 0.5) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = (2.0 * normal.cdf(z)).min(1.0);
    Ok(SignificanceResult {
        u_statistic: u_min,
        p_value: p,
        method: SignificanceMethod::NormalApprox,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent enumeration oracle: bitmask subsets, ranks recomputed from
    /// scratch per arrangement by counting wins/ties (no shared rank code).
    fn oracle_exact_p(a: &[f64], b: &[f64]) -> f64 {
        let n_a = a.len();
        let n = n_a + b.len();
        let mut pooled: Vec<f64> = a.to_vec();
        pooled.extend_from_slice(b);

        // U of a subset via pairwise wins + half-ties.
        let u_of = |members: &[usize]| -> f64 {
            let in_set = |k: usize| members.contains(&k);
            let mut u = 0.0;
            for &i in members {
                for k in 0..n {
                    if in_set(k) {
                        continue;
                    }
                    if pooled[i] > pooled[k] {
                        u += 1.0;
                    } else if pooled[i] == pooled[k] {
                        u += 0.5;
                    }
                }
            }
            u
        };
        let obs_members: Vec<usize> = (0..n_a).collect();
        let u_a = u_of(&obs_members);
        let u_b = n_a as f64 * (n - n_a) as f64 - u_a;
        let u_obs = u_a.min(u_b);

        let mut extreme = 0u64;
        let mut total = 0u64;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != n_a {
                continue;
            }
            let members: Vec<usize> = (0..n).filter(|&k| mask & (1 << k) != 0).collect();
            total += 1;
            if u_of(&members) <= u_obs + 1e-9 {
                extreme += 1;
            }
        }
        (2.0 * extreme as f64 / total as f64).min(1.0)
    }

    #[test]
    fn identical_samples_give_p_one() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.method, SignificanceMethod::Exact);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn disjoint_small_samples_hand_value() {
        // a=[1,2,3], b=[4,5,6]: U=0, two-sided exact p = 2/20 = 0.1.
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u_statistic, 0.0);
        assert!((r.p_value - 0.1).abs() < 1e-12);
        assert_eq!(r.method, SignificanceMethod::Exact);
    }

    #[test]
    fn exact_matches_enumeration_oracle_up_to_n8() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for trial in 0..60 {
            let n_a = rng.random_range(1..=8usize);
            let n_b = rng.random_range(1..=8usize);
            // Small integer values to exercise ties heavily.
            let a: Vec<f64> = (0..n_a).map(|_| rng.random_range(0..6) as f64).collect();
            let b: Vec<f64> = (0..n_b).map(|_| rng.random_range(0..6) as f64).collect();
            let got = mann_whitney_u(&a, &b).unwrap();
            let want = oracle_exact_p(&a, &b);
            assert!(
                (got.p_value - want).abs() < 1e-12,
                "trial {trial}: a={a:?} b={b:?} got {} want {want}",
                got.p_value
            );
        }
    }

    #[test]
    fn large_samples_use_normal_approximation() {
        let a: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..30).map(|i| i as f64 + 0.5).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.method, SignificanceMethod::NormalApprox);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        // Clearly separated samples should be significant.
        let c: Vec<f64> = (0..30).map(|i| i as f64 + 100.0).collect();
        let r2 = mann_whitney_u(&a, &c).unwrap();
        assert!(r2.p_value < 1e-6);
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert!(matches!(
            mann_whitney_u(&[], &[1.0]),
            Err(EvalError::EmptySample)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn exact_p_is_invariant_under_monotone_transforms(
            a in proptest::collection::vec(0..20i32, 1..7),
            b in proptest::collection::vec(0..20i32, 1..7),
        ) {
            let af: Vec<f64> = a.iter().map(|&v| v as f64).collect();
            let bf: Vec<f64> = b.iter().map(|&v| v as f64).collect();
            // exp is strictly monotone; ranks are untouched.
            let at: Vec<f64> = af.iter().map(|v| (v * 0.3).exp()).collect();
            let bt: Vec<f64> = bf.iter().map(|v| (v * 0.3).exp()).collect();
            let p1 = mann_whitney_u(&af, &bf).unwrap();
            let p2 = mann_whitney_u(&at, &bt).unwrap();
            prop_assert!((p1.p_value - p2.p_value).abs() < 1e-12);
            prop_assert!((p1.u_statistic - p2.u_statistic).abs() < 1e-9);
        }
    }
}
