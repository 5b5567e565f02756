//! One- and two-sided Mann–Whitney U tests.
//!
//! Small samples use the exact permutation distribution of the rank sum
//! (midranks for ties); larger ones use the tie-corrected normal
//! approximation with continuity correction.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Pooled size up to which the exact permutation distribution is used.
pub const EXACT_MAX_POOLED: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    /// Values in A tend to be smaller than in B.
    Less,
    /// Values in A tend to be larger than in B.
    Greater,
    TwoSided,
}

impl std::str::FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "less" | "A<B" => Ok(Alternative::Less),
            "greater" | "A>B" => Ok(Alternative::Greater),
            "two-sided" | "A!=B" => Ok(Alternative::TwoSided),
            other => Err(Error::Argument(format!(
                "unknown alternative {other:?}; expected less, greater, two-sided, A<B or A>B"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of sample A (pairs where A beats B, ties counting half).
    pub u: f64,
    pub u_b: f64,
    pub p_value: f64,
    pub method: PMethod,
    pub alternative: Alternative,
    pub n_a: usize,
    pub n_b: usize,
    pub median_a: f64,
    pub median_b: f64,
    /// `"A<B"`, `"A>B"` or `"A=B"` according to where U falls relative to its null mean.
    pub direction: String,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Doubled midranks (so they stay integral) of the pooled sample, plus tie group sizes.
fn doubled_midranks(pooled: &[f64]) -> (Vec<u64>, Vec<u64>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1; their doubled mean is i + j + 2
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        ties.push((j - i + 1) as u64);
        i = j + 1;
    }
    (ranks, ties)
}

/// Counts subsets of size `k` of `ranks` by rank sum: returns (count below, count equal, count above) relative to `observed`.
fn enumerate_rank_sums(ranks: &[u64], k: usize, observed: u64) -> (u64, u64, u64) {
    fn walk(ranks: &[u64], start: usize, left: usize, sum: u64, observed: u64, tally: &mut (u64, u64, u64)) {
        if left == 0 {
            match sum.cmp(&observed) {
                std::cmp::Ordering::Less => tally.0 += 1,
                std::cmp::Ordering::Equal => tally.1 += 1,
                std::cmp::Ordering::Greater => tally.2 += 1,
            }
            return;
        }
        for i in start..=ranks.len() - left {
            walk(ranks, i + 1, left - 1, sum + ranks[i], observed, tally);
        }
    }
    let mut tally = (0, 0, 0);
    walk(ranks, 0, k, 0, observed, &mut tally);
    tally
}

pub fn mann_whitney_u(a: &[f64], b: &[f64], alternative: Alternative) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("Mann-Whitney U needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Argument("Mann-Whitney U needs finite values".into()));
    }
    let (n_a, n_b) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = doubled_midranks(&pooled);
    let rank_sum_a2: u64 = ranks[..n_a].iter().sum();
    let u = rank_sum_a2 as f64 / 2.0 - (n_a * (n_a + 1)) as f64 / 2.0;
    let u_b = (n_a * n_b) as f64 - u;
    let mean = (n_a * n_b) as f64 / 2.0;

    let (p_value, method) = if n_a + n_b <= EXACT_MAX_POOLED {
        let (below, equal, above) = enumerate_rank_sums(&ranks, n_a, rank_sum_a2);
        let total = (below + equal + above) as f64;
        let p_le = (below + equal) as f64 / total;
        let p_ge = (above + equal) as f64 / total;
        let p = match alternative {
            Alternative::Less => p_le,
            Alternative::Greater => p_ge,
            Alternative::TwoSided => (2.0 * p_le.min(p_ge)).min(1.0),
        };
        (p, PMethod::Exact)
    } else {
        let n = (n_a + n_b) as f64;
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
        let variance = (n_a * n_b) as f64 / 12.0 * ((n + 1.0) - tie_term);
        let p = if variance <= 0.0 {
            1.0
        } else {
            let sd = variance.sqrt();
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            let lower = normal.cdf((u - mean + 0.5) / sd);
            let upper = 1.0 - normal.cdf((u - mean - 0.5) / sd);
            match alternative {
                Alternative::Less => lower.min(1.0),
                Alternative::Greater => upper.min(1.0),
                Alternative::TwoSided => (2.0 * lower.min(upper)).min(1.0),
            }
        };
        (p, PMethod::Normal)
    };

    let direction = if u < mean {
        "A<B"
    } else if u > mean {
        "A>B"
    } else {
        "A=B"
    };
    Ok(MannWhitney {
        u,
        u_b,
        p_value,
        method,
        alternative,
        n_a,
        n_b,
        median_a: median(a),
        median_b: median(b),
        direction: direction.to_string(),
    })
}
