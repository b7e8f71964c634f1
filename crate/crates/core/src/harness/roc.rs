use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One operating point; Alice is the positive class and a score `>= threshold`
/// is accepted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Threshold sweep over the union of scores plus the Mann-Whitney AUC with
/// ties counted as one half.
pub fn compute_roc_auc(scores_alice: &[f64], scores_eve: &[f64]) -> Result<(Vec<RocPoint>, f64)> {
    if scores_alice.is_empty() || scores_eve.is_empty() {
        return Err(Error::invalid("ROC needs at least one score per class"));
    }
    if scores_alice.iter().chain(scores_eve).any(|s| s.is_nan()) {
        return Err(Error::NumericFault("NaN score".into()));
    }
    let mut all: Vec<(f64, bool)> = scores_alice
        .iter()
        .map(|&s| (s, true))
        .chain(scores_eve.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (np, nn) = (scores_alice.len() as f64, scores_eve.len() as f64);
    let mut roc = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    // U counted from the Alice side: Eve below, plus half of ties
    let mut u = 0.0;
    let mut i = 0;
    while i < all.len() {
        let s = all[i].0;
        let (mut dp, mut dn) = (0usize, 0usize);
        while i < all.len() && all[i].0 == s {
            if all[i].1 {
                dp += 1;
            } else {
                dn += 1;
            }
            i += 1;
        }
        u += dp as f64 * (nn - (fp + dn) as f64) + 0.5 * (dp * dn) as f64;
        tp += dp;
        fp += dn;
        roc.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / nn,
            tpr: tp as f64 / np,
        });
    }
    Ok((roc, u / (np * nn)))
}

/// Trapezoid area under a ROC polyline.
pub fn trapezoid_auc(roc: &[RocPoint]) -> f64 {
    roc.windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(compute_roc_auc(&[1.0, 2.0], &[-1.0, 0.0]).unwrap().1, 1.0);
        assert_eq!(compute_roc_auc(&[0.0, 0.0], &[0.0, 0.0]).unwrap().1, 0.5);
        assert_eq!(compute_roc_auc(&[-1.0], &[1.0]).unwrap().1, 0.0);
        assert!(compute_roc_auc(&[], &[1.0]).is_err());
    }

    fn brute(a: &[f64], e: &[f64]) -> f64 {
        let mut c = 0.0;
        for x in a {
            for y in e {
                c += if x > y {
                    1.0
                } else if x == y {
                    0.5
                } else {
                    0.0
                };
            }
        }
        c / (a.len() * e.len()) as f64
    }

    proptest! {
        #[test]
        fn matches_pairwise_count(a in proptest::collection::vec(-5i32..5, 1..60), e in proptest::collection::vec(-5i32..5, 1..60)) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let e: Vec<f64> = e.into_iter().map(f64::from).collect();
            let (roc, auc) = compute_roc_auc(&a, &e).unwrap();
            prop_assert_eq!(auc, brute(&a, &e));
            prop_assert!((trapezoid_auc(&roc) - auc).abs() < 1e-12);
            prop_assert!(roc.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
            let last = roc.last().unwrap();
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        }
    }
}
