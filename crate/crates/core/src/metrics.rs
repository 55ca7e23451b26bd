//! Ranking and regression metrics.
//!
//! Ties are handled the same way throughout: tied scores share an average
//! rank, and a tied block of predictions enters the precision/recall curve
//! as one threshold. The arithmetic is arranged so every quantity is a
//! ratio of integer counts where possible, which makes results exactly
//! reproducible by a brute-force pairwise count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOP_K: usize = 50;

fn check_finite(op: &'static str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

fn check_lengths(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            op,
            detail: format!("{a} values vs {b}"),
        })
    }
}

fn class_counts(labels: &[bool]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels(format!("{pos} positives and {neg} negatives")));
    }
    Ok((pos, neg))
}

/// Indices sorted by ascending value, ties by ascending index.
fn argsort(xs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]).then(i.cmp(&j)));
    idx
}

/// Twice the 1-based average rank of each value, as an integer.
fn doubled_ranks(xs: &[f64]) -> Vec<u64> {
    let idx = argsort(xs);
    let mut ranks = vec![0u64; xs.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start;
        while end + 1 < idx.len() && xs[idx[end + 1]] == xs[idx[start]] {
            end += 1;
        }
        // positions start+1 ..= end+1 averaged, doubled
        let r = (start + 1 + end + 1) as u64;
        for &i in &idx[start..=end] {
            ranks[i] = r;
        }
        start = end + 1;
    }
    ranks
}

/// Average ranks (1-based, ties averaged).
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    doubled_ranks(xs).into_iter().map(|r| r as f64 / 2.0).collect()
}

/// Area under the ROC curve, `P(s+ > s-) + P(s+ = s-) / 2`.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths("auroc", scores.len(), labels.len())?;
    check_finite("auroc", scores)?;
    let (pos, neg) = class_counts(labels)?;
    let ranks = doubled_ranks(scores);
    let rank_sum: u64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    // 2 * (sum of ranks - P(P+1)/2) = 2 * #wins + #ties
    let numerator = rank_sum - (pos * (pos + 1)) as u64;
    Ok(numerator as f64 / (2 * pos * neg) as f64)
}

/// Average precision: mean over positives of the precision at the
/// threshold equal to that positive's score.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths("auprc", scores.len(), labels.len())?;
    check_finite("auprc", scores)?;
    let (pos, _) = class_counts(labels)?;
    let mut idx = argsort(scores);
    idx.reverse();
    let mut precision = vec![0.0; scores.len()];
    let (mut seen, mut hits, mut start) = (0usize, 0usize, 0usize);
    while start < idx.len() {
        let mut end = start;
        while end + 1 < idx.len() && scores[idx[end + 1]] == scores[idx[start]] {
            end += 1;
        }
        let block = &idx[start..=end];
        seen += block.len();
        hits += block.iter().filter(|&&i| labels[i]).count();
        for &i in block {
            precision[i] = hits as f64 / seen as f64;
        }
        start = end + 1;
    }
    let total: f64 = precision.iter().zip(labels).filter(|(_, &l)| l).map(|(p, _)| *p).sum();
    Ok(total / pos as f64)
}

/// Precision among the `k` highest scores (ties broken by lower index).
/// With fewer than `k` items, all items count.
pub fn ap_at_k(scores: &[f64], labels: &[bool], k: usize) -> Result<f64> {
    check_lengths("ap_at_k", scores.len(), labels.len())?;
    check_finite("ap_at_k", scores)?;
    class_counts(labels)?;
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let top = k.min(scores.len());
    let hits = idx[..top].iter().filter(|&&i| labels[i]).count();
    Ok(hits as f64 / top as f64)
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths("mse", pred.len(), target.len())?;
    check_finite("mse", pred)?;
    check_finite("mse", target)?;
    if pred.is_empty() {
        return Err(Error::DegenerateLabels("mse of no values".into()));
    }
    let total: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(total / pred.len() as f64)
}

/// Pearson correlation; errors when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths("pearson", x.len(), y.len())?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateLabels("correlation with a constant input".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths("spearman", pred.len(), target.len())?;
    check_finite("spearman", pred)?;
    check_finite("spearman", target)?;
    pearson(&average_ranks(pred), &average_ranks(target))
}

/// Number of pairs `i < j` tied within each run of equal values of a
/// sorted sequence.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    if !sorted.is_empty() {
        total += run * (run - 1) / 2;
    }
    total
}

/// Sorts `xs` and returns the number of inversions (strict).
fn merge_count(xs: &mut [f64]) -> u64 {
    let n = xs.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut xs[..mid]) + merge_count(&mut xs[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if xs[j] < xs[i] {
            merged.push(xs[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            merged.push(xs[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&xs[i..mid]);
    merged.extend_from_slice(&xs[j..]);
    xs.copy_from_slice(&merged);
    swaps
}

/// Kendall's tau-b,
/// `(C - D) / sqrt((n0 - n1) (n0 - n2))` with `n1`, `n2` the pairs tied in
/// each input. Runs in `O(n log n)`.
pub fn kendall(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths("kendall", pred.len(), target.len())?;
    check_finite("kendall", pred)?;
    check_finite("kendall", target)?;
    let n = pred.len() as u64;
    let n0 = n * n.saturating_sub(1) / 2;
    let mut idx: Vec<usize> = (0..pred.len()).collect();
    idx.sort_by(|&i, &j| pred[i].total_cmp(&pred[j]).then(target[i].total_cmp(&target[j])));
    let xs: Vec<f64> = idx.iter().map(|&i| pred[i]).collect();
    let joint: Vec<(f64, f64)> = idx.iter().map(|&i| (pred[i], target[i])).collect();
    let n1 = tied_pairs(&xs);
    let n3 = tied_pairs(&joint);
    let mut ys: Vec<f64> = idx.iter().map(|&i| target[i]).collect();
    let swaps = merge_count(&mut ys);
    let n2 = tied_pairs(&ys);
    if n1 == n0 || n2 == n0 {
        return Err(Error::DegenerateLabels("kendall tau with a constant input".into()));
    }
    // concordant - discordant
    let diff = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * swaps as i64;
    Ok(diff as f64 / (((n0 - n1) as f64) * ((n0 - n2) as f64)).sqrt())
}

/// Metrics for one evaluation pass; only the fields that apply to the task
/// are set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auroc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auprc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap_at_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spearman_rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kendall_tau: Option<f64>,
}

/// Per-class ranking metrics averaged over classes. `targets[i][c]` is
/// 1/0, or negative when class `c` is unobserved for item `i`. Classes
/// without both a positive and a negative are skipped.
pub fn classification_report(scores: &[Vec<f64>], targets: &[Vec<f64>], k: usize) -> Result<MetricReport> {
    check_lengths("classification_report", scores.len(), targets.len())?;
    let classes = targets.first().map_or(0, Vec::len);
    let mut sums = [0.0; 3];
    let mut used = 0;
    for c in 0..classes {
        let (mut s, mut l) = (Vec::new(), Vec::new());
        for (row, t) in scores.iter().zip(targets) {
            if t.len() != classes || row.len() != classes {
                return Err(Error::ShapeMismatch {
                    op: "classification_report",
                    detail: format!("rows of {} scores and {} targets, expected {classes}", row.len(), t.len()),
                });
            }
            if t[c] >= 0.0 {
                s.push(row[c]);
                l.push(t[c] > 0.5);
            }
        }
        if class_counts(&l).is_err() {
            continue;
        }
        sums[0] += auroc(&s, &l)?;
        sums[1] += auprc(&s, &l)?;
        sums[2] += ap_at_k(&s, &l, k)?;
        used += 1;
    }
    if used == 0 {
        return Err(Error::DegenerateLabels("no class has both positives and negatives".into()));
    }
    let m = used as f64;
    Ok(MetricReport {
        auroc: Some(sums[0] / m),
        auprc: Some(sums[1] / m),
        ap_at_k: Some(sums[2] / m),
        ..MetricReport::default()
    })
}

/// MSE plus rank correlations. Correlations are left unset when either
/// side is constant.
pub fn regression_report(pred: &[f64], target: &[f64]) -> Result<MetricReport> {
    Ok(MetricReport {
        mse: Some(mse(pred, target)?),
        spearman_rho: spearman(pred, target).ok(),
        kendall_tau: kendall(pred, target).ok(),
        ..MetricReport::default()
    })
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_and_reversed() {
        let s = [0.9, 0.8, 0.2, 0.1];
        let l = [true, true, false, false];
        assert_eq!(auroc(&s, &l).unwrap(), 1.0);
        assert_eq!(auprc(&s, &l).unwrap(), 1.0);
        let rev = [false, false, true, true];
        assert_eq!(auroc(&s, &rev).unwrap(), 0.0);
        let t = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&s, &t).unwrap(), -1.0);
        assert_eq!(kendall(&s, &t).unwrap(), -1.0);
        assert_eq!(mse(&t, &t).unwrap(), 0.0);
        assert_eq!(spearman(&t, &t).unwrap(), 1.0);
    }

    #[test]
    fn ties_count_half() {
        assert_eq!(auroc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
        // one tied block: precision 1/2 for the positive
        assert_eq!(auprc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn top_k_breaks_ties_by_index() {
        let s = [0.5, 0.5, 0.9, 0.1];
        let l = [false, true, true, false];
        // top 2 = items 2 and 0
        assert_eq!(ap_at_k(&s, &l, 2).unwrap(), 0.5);
        assert_eq!(ap_at_k(&s, &l, 50).unwrap(), 0.5);
        assert_eq!(ap_at_k(&s, &l, 1).unwrap(), 1.0);
    }

    #[test]
    fn kendall_tau_b_with_ties() {
        // x = [1,1,2,3], y = [1,2,2,3]: C = 4, D = 0, n1 = 1, n2 = 1
        let v = kendall(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0]).unwrap();
        assert!((v - 4.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(auroc(&[0.1, 0.2], &[true, true]), Err(Error::DegenerateLabels(_))));
        assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(kendall(&[1.0, 2.0], &[5.0, 5.0]).is_err());
        assert!(auroc(&[f64::NAN, 0.2], &[true, false]).is_err());
        assert!(auroc(&[0.1], &[true, false]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn multi_class_report_skips_degenerate_classes() {
        let scores = vec![vec![0.9, 0.3], vec![0.1, 0.4], vec![0.8, 0.6]];
        let targets = vec![vec![1.0, -1.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let r = classification_report(&scores, &targets, 50).unwrap();
        assert_eq!(r.auroc, Some(1.0));
        assert!(r.mse.is_none());
    }

    #[test]
    fn report_json_omits_unset_fields() {
        let r = regression_report(&[0.1, 0.2, 0.3], &[0.1, 0.3, 0.2]).unwrap();
        let j = serde_json::to_string(&r).unwrap();
        assert!(j.contains("mse") && j.contains("kendall_tau") && !j.contains("auroc"));
    }

    proptest! {
        #[test]
        fn auroc_is_invariant_under_monotone_maps(
            s in proptest::collection::vec(-3.0f64..3.0, 2..60),
            l in proptest::collection::vec(any::<bool>(), 2..60),
        ) {
            let n = s.len().min(l.len());
            let (s, l) = (&s[..n], &l[..n]);
            prop_assume!(l.iter().any(|&x| x) && l.iter().any(|&x| !x));
            let e: Vec<f64> = s.iter().map(|x| x.exp()).collect();
            prop_assert_eq!(auroc(s, l).unwrap(), auroc(&e, l).unwrap());
        }
    }
}
