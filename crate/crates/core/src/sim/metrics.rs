use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::SelectionReport;
use crate::sim::{GroundTruth, SizeClass};

/// Selection counts for one effect kind, poolable across replicates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KindCounts {
    /// True effects per size (small, medium, large).
    pub n_true: [usize; 3],
    /// Selected true effects per size.
    pub true_positive: [usize; 3],
    pub n_null: usize,
    pub false_positive: usize,
}

impl KindCounts {
    fn count(sizes: &[SizeClass], selected: &[bool]) -> Self {
        let mut c = Self::default();
        for (s, &sel) in sizes.iter().zip(selected) {
            match s {
                SizeClass::Null => {
                    c.n_null += 1;
                    c.false_positive += usize::from(sel);
                }
                &k => {
                    c.n_true[k as usize] += 1;
                    c.true_positive[k as usize] += usize::from(sel);
                }
            }
        }
        c
    }

    pub fn add(&mut self, other: &Self) {
        for k in 0..3 {
            self.n_true[k] += other.n_true[k];
            self.true_positive[k] += other.true_positive[k];
        }
        self.n_null += other.n_null;
        self.false_positive += other.false_positive;
    }

    /// `None` when there is no true effect of that size.
    pub fn tpr(&self, size: SizeClass) -> Option<f64> {
        let k = size as usize;
        (k < 3 && self.n_true[k] > 0).then(|| self.true_positive[k] as f64 / self.n_true[k] as f64)
    }

    pub fn fpr(&self) -> Option<f64> {
        (self.n_null > 0).then(|| self.false_positive as f64 / self.n_null as f64)
    }
}

/// TPR by size and FPR for fixed and random effects, with optional AUC_p.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub fixed: KindCounts,
    pub random: KindCounts,
    /// `(p, AUC_p)` for fixed effects, unnormalised.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed_auc: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub random_auc: Vec<(f64, f64)>,
}

impl MetricsTable {
    /// Pools counts; AUC values are averaged by [`mean_auc`].
    pub fn add_counts(&mut self, other: &Self) {
        self.fixed.add(&other.fixed);
        self.random.add(&other.random);
    }
}

/// Averages `(p, AUC_p)` lists that share the same `p` values.
pub fn mean_auc(tables: &[&[(f64, f64)]]) -> Vec<(f64, f64)> {
    let Some(first) = tables.first() else { return Vec::new() };
    first
        .iter()
        .enumerate()
        .map(|(k, &(p, _))| {
            let vals: Vec<f64> = tables.iter().filter_map(|t| t.get(k).map(|v| v.1)).collect();
            (p, vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}

pub fn metrics_from_flags(truth: &GroundTruth, fixed: &[bool], random: &[bool]) -> Result<MetricsTable> {
    let p = truth.alpha.len();
    if fixed.len() != p || random.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: fixed.len().min(random.len()) });
    }
    Ok(MetricsTable {
        fixed: KindCounts::count(&truth.alpha_size, fixed),
        random: KindCounts::count(&truth.psi2_size, random),
        ..Default::default()
    })
}

/// Confusion counts of a fitted report against the truth.
pub fn selection_metrics(truth: &GroundTruth, report: &SelectionReport) -> Result<MetricsTable> {
    metrics_from_flags(truth, &report.fixed_selected, &report.random_selected)
}

/// Empirical ROC from sweeping a threshold over `scores` (higher means
/// more likely selected). Tied scores enter together. Starts at `(0, 0)`
/// and ends at `(1, 1)` when both classes are present.
pub fn roc_curve(scores: &[f64], is_true: &[bool]) -> Result<Vec<(f64, f64)>> {
    if scores.len() != is_true.len() {
        return Err(Error::DimensionMismatch { expected: is_true.len(), found: scores.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Validation("NaN score".into()));
    }
    let n_pos = is_true.iter().filter(|&&t| t).count();
    let n_neg = is_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate("ROC needs both true and null effects".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut roc = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if is_true[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        roc.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    Ok(roc)
}

/// TPR at FPR = `p` by linear interpolation between the observed pair with
/// the largest FPR below `p` and the one with the smallest FPR above it.
/// An observed pair at exactly `p` is returned as is (largest TPR there).
pub fn interpolate_tpr(roc: &[(f64, f64)], p: f64) -> Result<f64> {
    validate_roc(roc)?;
    if let Some(t) = roc.iter().filter(|r| r.0 == p).map(|r| r.1).reduce(f64::max) {
        return Ok(t);
    }
    let below = roc.iter().rev().find(|r| r.0 < p).copied();
    let above = roc.iter().find(|r| r.0 > p).copied();
    match (below, above) {
        (Some((f0, t0)), Some((f1, t1))) => Ok(t0 + (t1 - t0) * (p - f0) / (f1 - f0)),
        (Some((_, t0)), None) => {
            log::warn!("ROC has no point with FPR >= {p}; TPR clamped to last observed value");
            Ok(roc.iter().filter(|r| r.0 < p).map(|r| r.1).fold(t0, f64::max))
        }
        _ => Err(Error::Domain(format!("no ROC point with FPR below {p}"))),
    }
}

fn validate_roc(roc: &[(f64, f64)]) -> Result<()> {
    if roc.is_empty() || roc[0].0 != 0.0 {
        return Err(Error::Validation("ROC must start with an FPR = 0 point".into()));
    }
    if roc.iter().any(|&(f, t)| !(0.0..=1.0).contains(&f) || !(0.0..=1.0).contains(&t)) {
        return Err(Error::Validation("ROC coordinates must lie in [0, 1]".into()));
    }
    if roc.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(Error::Validation("ROC must be sorted by FPR".into()));
    }
    Ok(())
}

/// Area under the ROC on FPR ∈ [0, p], in [0, p].
///
/// The curve is the observed pairs plus the interpolated pair at FPR = `p`,
/// read as a step function: at FPR `f` the TPR is the largest TPR among
/// pairs with FPR ≤ `f`.
pub fn auc_p(roc: &[(f64, f64)], p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("AUC_p needs p in (0, 1], got {p}")));
    }
    let end = interpolate_tpr(roc, p)?;
    let mut pts: Vec<(f64, f64)> = roc.iter().copied().filter(|r| r.0 < p).collect();
    pts.push((p, end));
    let mut area = 0.0;
    let mut level = 0.0f64;
    for w in pts.windows(2) {
        level = level.max(w[0].1);
        area += level * (w[1].0 - w[0].0);
    }
    Ok(area.clamp(0.0, p))
}

/// `AUC_p / p`, in [0, 1].
pub fn auc_p_normalized(roc: &[(f64, f64)], p: f64) -> Result<f64> {
    Ok(auc_p(roc, p)? / p)
}

/// McClish standardisation: 0.5 for the chance line, 1 for a perfect ROC.
pub fn auc_p_standardized(roc: &[(f64, f64)], p: f64) -> Result<f64> {
    let a = auc_p(roc, p)?;
    let min = 0.5 * p * p;
    Ok(0.5 * (1.0 + (a - min) / (p - min)))
}

/// Adds AUC_p for each `p` in `ps` to the table, from per-covariate scores.
pub fn add_auc(
    table: &mut MetricsTable,
    truth: &GroundTruth,
    fixed_score: &[f64],
    random_score: &[f64],
    ps: &[f64],
) -> Result<()> {
    let fixed_true: Vec<bool> = truth.alpha_size.iter().map(|&s| s != SizeClass::Null).collect();
    let random_true: Vec<bool> = truth.psi2_size.iter().map(|&s| s != SizeClass::Null).collect();
    let fr = roc_curve(fixed_score, &fixed_true)?;
    let rr = roc_curve(random_score, &random_true)?;
    table.fixed_auc = ps.iter().map(|&p| auc_p(&fr, p).map(|a| (p, a))).collect::<Result<_>>()?;
    table.random_auc = ps.iter().map(|&p| auc_p(&rr, p).map(|a| (p, a))).collect::<Result<_>>()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use SizeClass::*;

    fn truth() -> GroundTruth {
        GroundTruth {
            alpha: vec![0.2, 0.0, 0.3, 0.0, 0.4, 0.0],
            alpha_size: vec![Small, Null, Medium, Null, Large, Null],
            psi2: vec![0.0, 0.15, 0.0, 0.0, 0.0, 0.35],
            psi2_size: vec![Null, Small, Null, Null, Null, Large],
        }
    }

    #[test]
    fn perfect_and_select_all() {
        let t = truth();
        let fixed: Vec<bool> = t.alpha_size.iter().map(|&s| s != Null).collect();
        let random: Vec<bool> = t.psi2_size.iter().map(|&s| s != Null).collect();
        let m = metrics_from_flags(&t, &fixed, &random).unwrap();
        for s in SizeClass::SIZES {
            assert_eq!(m.fixed.tpr(s), Some(1.0));
        }
        assert_eq!(m.random.tpr(Medium), None);
        assert_eq!(m.fixed.fpr(), Some(0.0));
        let all = metrics_from_flags(&t, &[true; 6], &[true; 6]).unwrap();
        assert_eq!(all.fixed.fpr(), Some(1.0));
        assert_eq!(all.random.tpr(Large), Some(1.0));
        assert_eq!(all.random.fpr(), Some(1.0));
    }

    #[test]
    fn bracketing_example_interpolates_linearly() {
        let roc = [(0.0, 0.0), (0.19, 0.49), (0.21, 0.51), (1.0, 1.0)];
        let t = interpolate_tpr(&roc, 0.2).unwrap();
        assert!((t - 0.50).abs() < 1e-12);
    }

    #[test]
    fn perfect_roc() {
        let roc = roc_curve(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap();
        assert_eq!(roc[0], (0.0, 0.0));
        assert!((auc_p(&roc, 0.1).unwrap() - 0.1).abs() < 1e-15);
        assert!((auc_p_normalized(&roc, 0.1).unwrap() - 1.0).abs() < 1e-12);
        assert!((auc_p_standardized(&roc, 0.1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chance_line() {
        // dense diagonal: the step area approaches p²/2 from below
        let m = 100_000;
        let roc: Vec<(f64, f64)> = (0..=m).map(|k| (k as f64 / m as f64, k as f64 / m as f64)).collect();
        for p in [0.1, 0.2, 1.0] {
            let a = auc_p(&roc, p).unwrap();
            assert!((a - 0.5 * p * p).abs() < 2e-5, "{a}");
            assert!((auc_p_standardized(&roc, p).unwrap() - 0.5).abs() < 1e-3);
            assert!((auc_p_normalized(&roc, p).unwrap() - 0.5 * p).abs() < 1e-4);
        }
    }

    #[test]
    fn full_auc_matches_mann_whitney() {
        let scores = [0.9, 0.7, 0.6, 0.4, 0.3, 0.2, 0.85, 0.1];
        let is_true = [true, false, true, true, false, false, false, true];
        let roc = roc_curve(&scores, &is_true).unwrap();
        let mut wins = 0.0;
        let (mut np, mut nn) = (0.0, 0.0);
        for i in 0..8 {
            for j in 0..8 {
                if is_true[i] && !is_true[j] {
                    wins += if scores[i] > scores[j] { 1.0 } else { 0.0 };
                }
            }
            if is_true[i] { np += 1.0 } else { nn += 1.0 }
        }
        let a = auc_p(&roc, 1.0).unwrap();
        assert!((a - wins / (np * nn)).abs() < 1e-12);
    }

    #[test]
    fn roc_ties_enter_together() {
        let roc = roc_curve(&[0.5, 0.5, 0.1], &[true, false, true]).unwrap();
        assert_eq!(roc, vec![(0.0, 0.0), (1.0, 0.5), (1.0, 1.0)]);
    }

    #[test]
    fn roc_validation() {
        assert!(interpolate_tpr(&[(0.1, 0.2)], 0.2).is_err());
        assert!(interpolate_tpr(&[(0.0, 0.2), (0.5, 0.3), (0.4, 0.9)], 0.2).is_err());
        // no point at or past p: clamp to the last observed value
        assert_eq!(interpolate_tpr(&[(0.0, 0.2), (0.05, 0.4)], 0.1).unwrap(), 0.4);
        assert!(roc_curve(&[0.1, 0.2], &[true, true]).is_err());
    }

    fn naive_counts(sizes: &[SizeClass], sel: &[bool]) -> KindCounts {
        let mut c = KindCounts::default();
        for k in 0..3 {
            c.n_true[k] = sizes.iter().filter(|&&s| s as usize == k).count();
            c.true_positive[k] = sizes.iter().zip(sel).filter(|(&s, &x)| s as usize == k && x).count();
        }
        c.n_null = sizes.iter().filter(|&&s| s == Null).count();
        c.false_positive = sizes.iter().zip(sel).filter(|(&s, &x)| s == Null && x).count();
        c
    }

    fn size_strategy() -> impl Strategy<Value = SizeClass> {
        prop_oneof![Just(Small), Just(Medium), Just(Large), Just(Null)]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn counts_match_confusion_oracle(
            rows in proptest::collection::vec((size_strategy(), size_strategy(), any::<bool>(), any::<bool>()), 1..40)
        ) {
            let t = GroundTruth {
                alpha: rows.iter().map(|r| if r.0 == Null { 0.0 } else { 0.2 }).collect(),
                alpha_size: rows.iter().map(|r| r.0).collect(),
                psi2: rows.iter().map(|r| if r.1 == Null { 0.0 } else { 0.2 }).collect(),
                psi2_size: rows.iter().map(|r| r.1).collect(),
            };
            let f: Vec<bool> = rows.iter().map(|r| r.2).collect();
            let r: Vec<bool> = rows.iter().map(|r| r.3).collect();
            let m = metrics_from_flags(&t, &f, &r).unwrap();
            prop_assert_eq!(&m.fixed, &naive_counts(&t.alpha_size, &f));
            prop_assert_eq!(&m.random, &naive_counts(&t.psi2_size, &r));
            for s in SizeClass::SIZES {
                if let Some(v) = m.fixed.tpr(s) { prop_assert!((0.0..=1.0).contains(&v)); }
            }
        }

        #[test]
        fn auc_monotone_in_p_and_bounded(
            data in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 2..60),
            p1 in 0.01f64..1.0, p2 in 0.01f64..1.0,
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let roc = roc_curve(&scores, &labels).unwrap();
            let (lo, hi) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
            let a_lo = auc_p(&roc, lo).unwrap();
            let a_hi = auc_p(&roc, hi).unwrap();
            prop_assert!(a_lo <= a_hi + 1e-12);
            prop_assert!((0.0..=lo + 1e-12).contains(&a_lo));
        }
    }
}
