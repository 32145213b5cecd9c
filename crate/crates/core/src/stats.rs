//! Two-sided Wilcoxon tests for comparing policy returns: the unpaired
//! rank-sum test (exact permutation enumeration for small totals, midrank
//! tie-corrected normal approximation otherwise) and a paired signed-rank
//! variant for common-random-number comparisons.

use itertools::Itertools;
use statrs::distribution::{ContinuousCDF, Normal};

/// Largest combined sample size handled by exact permutation enumeration.
pub const MAX_EXACT_TOTAL: usize = 12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("empty sample: both samples need at least one value")]
    EmptySample,
    #[error(
        "sample sizes {n} and {m} are unsupported: the normal approximation needs at least 5 \
         values per sample, and exact permutation enumeration only covers combined sizes up to \
         {MAX_EXACT_TOTAL}"
    )]
    SamplesTooSmall { n: usize, m: usize },
    #[error("paired test needs equal-length samples, got {n} and {m}")]
    UnpairedLengths { n: usize, m: usize },
    #[error("samples must contain only finite values")]
    NonFinite,
}

fn check_finite(values: &[f64]) -> Result<(), StatsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

/// Average (mid) ranks, 1-based, with ties sharing their mean rank.
fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let shared = (i + j + 2) as f64 / 2.0;
        for k in i..=j {
            ranks[order[k]] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Sum of t^3 - t over tie groups (t = multiplicity of each distinct value).
fn tie_correction_sum(values: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mut sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        sum += t * t * t - t;
        i = j + 1;
    }
    sum
}

fn two_sided_normal_p(deviation: f64, sigma: f64) -> f64 {
    if sigma <= 1e-12 {
        return 1.0;
    }
    let z = (deviation - 0.5).max(0.0) / sigma;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z))).clamp(0.0, 1.0)
}

/// Exact two-sided rank-sum p-value by enumerating every assignment of the
/// combined midranks to the first sample. Feasible for small totals only.
pub fn rank_sum_exact(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(xs)?;
    check_finite(ys)?;
    let combined: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let ranks = midranks(&combined);
    let n = xs.len();
    let total = combined.len();
    let mu = n as f64 * (total as f64 + 1.0) / 2.0;
    let observed: f64 = ranks[..n].iter().sum();
    let observed_dev = (observed - mu).abs();
    let mut extreme = 0u64;
    let mut count = 0u64;
    for subset in (0..total).combinations(n) {
        let w: f64 = subset.iter().map(|&i| ranks[i]).sum();
        if (w - mu).abs() >= observed_dev - 1e-9 {
            extreme += 1;
        }
        count += 1;
    }
    Ok(extreme as f64 / count as f64)
}

/// Two-sided rank-sum p-value from the normal approximation with midrank
/// ties, tie-corrected variance, and a continuity correction.
pub fn rank_sum_normal_approx(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(xs)?;
    check_finite(ys)?;
    let combined: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let ranks = midranks(&combined);
    let n = xs.len() as f64;
    let m = ys.len() as f64;
    let total = n + m;
    let w: f64 = ranks[..xs.len()].iter().sum();
    let mu = n * (total + 1.0) / 2.0;
    let tie_sum = tie_correction_sum(&combined);
    let variance = n * m / 12.0 * ((total + 1.0) - tie_sum / (total * (total - 1.0)));
    Ok(two_sided_normal_p((w - mu).abs(), variance.max(0.0).sqrt()))
}

/// Two-sided Wilcoxon rank-sum test for independent samples. Uses exact
/// enumeration when the combined size is at most `MAX_EXACT_TOTAL`, the
/// normal approximation when both samples have at least 5 values, and
/// errors otherwise.
pub fn rank_sum(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if xs.len() + ys.len() <= MAX_EXACT_TOTAL {
        rank_sum_exact(xs, ys)
    } else if xs.len().min(ys.len()) >= 5 {
        rank_sum_normal_approx(xs, ys)
    } else {
        Err(StatsError::SamplesTooSmall {
            n: xs.len(),
            m: ys.len(),
        })
    }
}

/// Two-sided Wilcoxon signed-rank test for paired samples (e.g. two
/// policies evaluated under common random numbers). Zero differences are
/// dropped; the test is exact (sign enumeration) for up to 12 non-zero
/// pairs and normally approximated beyond that.
pub fn signed_rank(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::UnpairedLengths {
            n: xs.len(),
            m: ys.len(),
        });
    }
    if xs.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(xs)?;
    check_finite(ys)?;
    let diffs: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Ok(1.0);
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let n = diffs.len();
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let mu = n as f64 * (n as f64 + 1.0) / 4.0;
    let observed_dev = (w_plus - mu).abs();
    if n <= 12 {
        let patterns = 1u64 << n;
        let mut extreme = 0u64;
        for bits in 0..patterns {
            let w: f64 = (0..n)
                .filter(|i| bits >> i & 1 == 1)
                .map(|i| ranks[i])
                .sum();
            if (w - mu).abs() >= observed_dev - 1e-9 {
                extreme += 1;
            }
        }
        Ok(extreme as f64 / patterns as f64)
    } else {
        let nf = n as f64;
        let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_correction_sum(&abs) / 48.0;
        Ok(two_sided_normal_p(observed_dev, variance.max(0.0).sqrt()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_show_no_separation() {
        let sample: Vec<f64> = (1..=5).map(f64::from).collect();
        assert!(rank_sum(&sample, &sample).unwrap() >= 0.99);
        let sample: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!(rank_sum(&sample, &sample).unwrap() >= 0.99);
        assert!(rank_sum_normal_approx(&sample, &sample).unwrap() >= 0.99);
        // constant identical samples: zero variance must not blow up
        assert_eq!(rank_sum(&[2.0; 6], &[2.0; 6]).unwrap(), 1.0);
        assert_eq!(rank_sum(&[2.0; 10], &[2.0; 10]).unwrap(), 1.0);
    }

    #[test]
    fn fully_separated_samples_match_the_enumeration_oracle() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        let ys: Vec<f64> = (11..=20).map(f64::from).collect();
        let exact = rank_sum_exact(&xs, &ys).unwrap();
        // only the two most extreme of C(20,10) assignments are as extreme
        let expected = 2.0 / 184_756.0;
        assert!((exact - expected).abs() < 1e-12, "exact = {exact}");
        assert!(exact < 1e-4);
        // dispatch routes to the approximation here; still tiny
        assert!(rank_sum(&xs, &ys).unwrap() < 1e-3);
    }

    #[test]
    fn three_vs_three_matches_independent_enumeration() {
        let xs = [1.0, 3.0, 5.0];
        let ys = [2.0, 4.0, 6.0];
        // independent brute force over all 20 rank assignments
        let ranks = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let observed = 1.0 + 3.0 + 5.0;
        let mu = 10.5;
        let mut extreme = 0;
        let mut total = 0;
        for bits in 0u32..64 {
            if bits.count_ones() != 3 {
                continue;
            }
            let w: f64 = (0..6).filter(|i| bits >> i & 1 == 1).map(|i| ranks[i]).sum();
            if (w - mu).abs() >= (observed - mu).abs() - 1e-9 {
                extreme += 1;
            }
            total += 1;
        }
        let expected = f64::from(extreme) / f64::from(total);
        assert_eq!(expected, 0.7);
        assert!((rank_sum(&xs, &ys).unwrap() - expected).abs() < 1e-12);
        assert!((rank_sum_exact(&xs, &ys).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn tied_values_are_midranked_consistently() {
        let xs = [1.0, 1.0, 2.0, 3.0, 3.0];
        let ys = [1.0, 2.0, 2.0, 3.0, 4.0];
        let p_xy = rank_sum(&xs, &ys).unwrap();
        let p_yx = rank_sum(&ys, &xs).unwrap();
        assert!((p_xy - p_yx).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&p_xy));
        // the midranks here are {2,2,2,5,5,5,8,8,8,10}: the xs sum is 25,
        // and 192 of the 252 assignments are at least as extreme
        let exact = rank_sum_exact(&xs, &ys).unwrap();
        assert!((exact - 192.0 / 252.0).abs() < 1e-12, "exact = {exact}");
        // heavy ties put the statistic on a coarse lattice, so the normal
        // approximation only tracks enumeration loosely (tight agreement is
        // exhaustively verified for tie-free inputs in the acceptance suite)
        let approx = rank_sum_normal_approx(&xs, &ys).unwrap();
        assert!((exact - approx).abs() <= 0.15, "exact {exact} vs approx {approx}");
    }

    #[test]
    fn approximation_tracks_enumeration_on_supported_sizes() {
        let cases: [(&[f64], &[f64]); 3] = [
            (&[0.1, 0.5, 0.9, 1.3, 1.7], &[0.2, 0.6, 1.0, 1.4, 1.8]),
            (&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.5, 3.5, 4.5, 5.5, 6.5, 7.5]),
            (&[5.0, 1.0, 4.0, 2.0, 3.0, 6.0], &[4.5, 2.5, 6.5, 1.5, 3.5, 5.5]),
        ];
        for (xs, ys) in cases {
            let exact = rank_sum_exact(xs, ys).unwrap();
            let approx = rank_sum_normal_approx(xs, ys).unwrap();
            assert!(
                (exact - approx).abs() <= 0.02,
                "exact {exact} vs approx {approx}"
            );
        }
    }

    #[test]
    fn unsupported_sizes_are_rejected_with_advice() {
        let big: Vec<f64> = (0..20).map(f64::from).collect();
        let err = rank_sum(&[1.0, 2.0], &big).unwrap_err();
        assert_eq!(err, StatsError::SamplesTooSmall { n: 2, m: 20 });
        assert!(err.to_string().contains("exact"));
        assert_eq!(rank_sum(&[], &[1.0]).unwrap_err(), StatsError::EmptySample);
        assert_eq!(
            rank_sum(&[1.0, f64::NAN, 2.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            StatsError::NonFinite
        );
    }

    #[test]
    fn signed_rank_handles_pairs() {
        let xs: Vec<f64> = (1..=8).map(f64::from).collect();
        assert_eq!(signed_rank(&xs, &xs).unwrap(), 1.0);
        // uniform shift: the most extreme of the 2^8 sign patterns
        let ys: Vec<f64> = xs.iter().map(|x| x + 1.0).collect();
        let p = signed_rank(&xs, &ys).unwrap();
        assert!((p - 2.0 / 256.0).abs() < 1e-12, "p = {p}");
        // large-n approximation path
        let xs: Vec<f64> = (1..=30).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x + 0.5).collect();
        assert!(signed_rank(&xs, &ys).unwrap() < 1e-4);
        // mismatched lengths
        assert_eq!(
            signed_rank(&[1.0], &[1.0, 2.0]).unwrap_err(),
            StatsError::UnpairedLengths { n: 1, m: 2 }
        );
    }

    #[test]
    fn signed_rank_is_symmetric_and_drops_zero_differences() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let ys = [1.0, 2.5, 2.5, 4.0, 5.5, 5.5, 7.5];
        let p_xy = signed_rank(&xs, &ys).unwrap();
        let p_yx = signed_rank(&ys, &xs).unwrap();
        assert!((p_xy - p_yx).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&p_xy));
    }
}
