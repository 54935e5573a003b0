//! Rank-alignment metrics between a learned ranking and a reference ranking.
//!
//! Every metric first converts the pair of rankings into the integer sequence
//! `x`, where `x[t]` is the reference rank (1-based) of the model at learned
//! position `t`. A perfectly aligned ranking yields the monotone sequence
//! `1, 2, ..., m`.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Ranking;
use crate::scalar::Real;

/// `x[t]` = reference rank of the model at learned position `t`.
fn rank_sequence(learned: &Ranking, reference: &Ranking) -> Result<Vec<usize>> {
    if learned.len() != reference.len() {
        return Err(Error::Schema(format!(
            "rankings cover {} and {} models",
            learned.len(),
            reference.len()
        )));
    }
    let ref_rank: BTreeMap<_, _> = reference
        .order()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i + 1))
        .collect();
    learned
        .order()
        .iter()
        .map(|id| {
            ref_rank
                .get(id)
                .copied()
                .ok_or_else(|| Error::Schema(format!("model {id:?} missing from reference ranking")))
        })
        .collect()
}

fn require_at_least(x: &[usize], n: usize) -> Result<()> {
    if x.len() < n {
        return Err(Error::Argument(format!(
            "metric needs at least {n} models, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// Spearman's rank correlation coefficient,
/// `1 - 6 * sum(d_i^2) / (m (m^2 - 1))`.
pub fn spearman<F: Real>(learned: &Ranking, reference: &Ranking) -> Result<F> {
    let x = rank_sequence(learned, reference)?;
    require_at_least(&x, 2)?;
    let m = x.len();
    let d2: u64 = x
        .iter()
        .enumerate()
        .map(|(t, &r)| {
            let d = r as i64 - (t as i64 + 1);
            (d * d) as u64
        })
        .sum();
    let m_f = F::from_usize(m).expect("m fits scalar");
    let denom = m_f * (m_f * m_f - F::one());
    Ok(F::one() - F::from_u64(6 * d2).expect("d2 fits scalar") / denom)
}

/// Kendall's rank correlation coefficient, `(C - D) / (m(m-1)/2)` over all
/// unordered pairs.
pub fn kendall<F: Real>(learned: &Ranking, reference: &Ranking) -> Result<F> {
    let x = rank_sequence(learned, reference)?;
    require_at_least(&x, 2)?;
    let m = x.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for s in 0..m {
        for t in (s + 1)..m {
            if x[s] < x[t] {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let total = (m * (m - 1) / 2) as i64;
    Ok(F::from_i64(concordant - discordant).expect("count fits scalar")
        / F::from_i64(total).expect("count fits scalar"))
}

/// Permutation entropy of the rank sequence with window length `k`:
/// Shannon entropy (natural log) of the ordinal-pattern distribution over
/// all `m - k + 1` sliding windows. Zero iff all windows share one pattern;
/// at most `ln(k!)`.
pub fn permutation_entropy<F: Real>(learned: &Ranking, reference: &Ranking, k: usize) -> Result<F> {
    let x = rank_sequence(learned, reference)?;
    if k < 2 {
        return Err(Error::Argument(format!("window length must be >= 2, got {k}")));
    }
    if x.len() < k {
        return Err(Error::Argument(format!(
            "window length {k} exceeds sequence length {}",
            x.len()
        )));
    }
    let windows = x.len() - k + 1;
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for w in x.windows(k) {
        *counts.entry(ordinal_pattern(w)).or_insert(0) += 1;
    }
    let n = F::from_usize(windows).expect("window count fits scalar");
    let mut entropy = F::zero();
    for &count in counts.values() {
        let p = F::from_usize(count).expect("count fits scalar") / n;
        entropy -= p * p.ln();
    }
    Ok(entropy)
}

/// Ordinal pattern of a window with distinct entries: the argsort of its
/// values, i.e. the index order that sorts the window ascending.
fn ordinal_pattern(window: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..window.len()).collect();
    idx.sort_by_key(|&i| window[i]);
    idx
}

/// Number of pairwise order violations between the rankings, counted by
/// divide-and-conquer merge counting.
pub fn count_inversions(learned: &Ranking, reference: &Ranking) -> Result<usize> {
    let mut x = rank_sequence(learned, reference)?;
    let mut scratch = vec![0usize; x.len()];
    Ok(merge_count(&mut x, &mut scratch))
}

fn merge_count(x: &mut [usize], scratch: &mut [usize]) -> usize {
    let n = x.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inversions = {
        let (left, right) = x.split_at_mut(mid);
        merge_count(left, &mut scratch[..mid]) + merge_count(right, &mut scratch[mid..])
    };
    let (mut i, mut j) = (0, mid);
    for slot in scratch[..n].iter_mut() {
        if i < mid && (j >= n || x[i] <= x[j]) {
            *slot = x[i];
            i += 1;
        } else {
            // x[j] jumps ahead of every remaining left element.
            inversions += mid - i;
            *slot = x[j];
            j += 1;
        }
    }
    x.copy_from_slice(&scratch[..n]);
    inversions
}

/// Length of the longest subsequence of the learned order that is already in
/// correct reference order, via the quadratic dynamic program
/// `dp[i] = 1 + max(dp[j] : j < i, x[j] < x[i])`.
pub fn lis(learned: &Ranking, reference: &Ranking) -> Result<usize> {
    let x = rank_sequence(learned, reference)?;
    if x.is_empty() {
        return Err(Error::Argument("cannot take LIS of an empty ranking".into()));
    }
    let mut dp = vec![1usize; x.len()];
    for i in 0..x.len() {
        for j in 0..i {
            if x[j] < x[i] {
                dp[i] = dp[i].max(dp[j] + 1);
            }
        }
    }
    Ok(dp.into_iter().max().unwrap())
}

/// Fraction of the learned top-K that also appears in the reference top-K.
pub fn precision_at_k<F: Real>(learned: &Ranking, reference: &Ranking, k: usize) -> Result<F> {
    let (learned_top, reference_top) = top_k_sets(learned, reference, k)?;
    let overlap = learned_top.intersection(&reference_top).count();
    Ok(F::from_usize(overlap).expect("overlap fits scalar") / F::from_usize(k).expect("k fits scalar"))
}

/// Rank-biased precision at depth K:
/// `(1 - p) * sum_{i=1..K} rel_i * p^(i-1)` with binary relevance
/// (`rel_i` = 1 iff the learned rank-i model is in the reference top-K).
pub fn rbp_at_k<F: Real>(
    learned: &Ranking,
    reference: &Ranking,
    k: usize,
    persistence: F,
) -> Result<F> {
    if !(persistence > F::zero() && persistence < F::one()) {
        return Err(Error::Argument(format!(
            "persistence must lie in (0, 1), got {persistence}"
        )));
    }
    let (_, reference_top) = top_k_sets(learned, reference, k)?;
    let mut sum = F::zero();
    let mut discount = F::one();
    for model in learned.order().iter().take(k) {
        if reference_top.contains(model) {
            sum += discount;
        }
        discount *= persistence;
    }
    Ok((F::one() - persistence) * sum)
}

fn top_k_sets(
    learned: &Ranking,
    reference: &Ranking,
    k: usize,
) -> Result<(BTreeSet<crate::model::ModelId>, BTreeSet<crate::model::ModelId>)> {
    // Validates model-set agreement as a side effect.
    rank_sequence(learned, reference)?;
    if k == 0 || k > learned.len() {
        return Err(Error::Argument(format!(
            "K must lie in 1..={}, got {k}",
            learned.len()
        )));
    }
    let learned_top: BTreeSet<_> = learned.order().iter().take(k).cloned().collect();
    let reference_top: BTreeSet<_> = reference.order().iter().take(k).cloned().collect();
    Ok((learned_top, reference_top))
}

/// All alignment metrics for one (learned, reference) pair.
#[derive(Debug, Clone, Serialize)]
#[serde(bound(serialize = "F: Serialize"))]
pub struct AlignmentReport<F: Real> {
    pub spearman: F,
    pub kendall: F,
    pub permutation_entropy: F,
    pub count_inversions: usize,
    pub lis: usize,
    pub precision_at: BTreeMap<usize, F>,
    pub rbp_at: BTreeMap<usize, F>,
}

/// Window length recommended for permutation entropy.
pub const DEFAULT_ENTROPY_WINDOW: usize = 3;

/// Default persistence for rank-biased precision.
pub const DEFAULT_RBP_PERSISTENCE: f64 = 0.8;

/// Computes the full report. `ks` lists the depths for precision/RBP; depths
/// exceeding the pool size are rejected.
pub fn alignment_report<F: Real>(
    learned: &Ranking,
    reference: &Ranking,
    ks: &[usize],
    persistence: F,
) -> Result<AlignmentReport<F>> {
    let mut precision_at = BTreeMap::new();
    let mut rbp_at = BTreeMap::new();
    for &k in ks {
        precision_at.insert(k, precision_at_k(learned, reference, k)?);
        rbp_at.insert(k, rbp_at_k(learned, reference, k, persistence)?);
    }
    Ok(AlignmentReport {
        spearman: spearman(learned, reference)?,
        kendall: kendall(learned, reference)?,
        permutation_entropy: permutation_entropy(learned, reference, DEFAULT_ENTROPY_WINDOW)?,
        count_inversions: count_inversions(learned, reference)?,
        lis: lis(learned, reference)?,
        precision_at,
        rbp_at,
    })
}
