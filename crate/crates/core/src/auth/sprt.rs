use serde::{Deserialize, Serialize};

use crate::encoder::{EmissionStats, Embedding};
use crate::error::{Error, Result};

use super::gaussian::instantaneous_llr;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionThresholds {
    pub gamma0: f64,
    pub gamma1: f64,
}

impl DecisionThresholds {
    pub fn new(gamma0: f64, gamma1: f64) -> Result<Self> {
        if !(gamma0 < 0.0 && 0.0 < gamma1) {
            return Err(Error::invalid(format!(
                "thresholds must satisfy gamma0 < 0 < gamma1, got ({gamma0}, {gamma1})"
            )));
        }
        Ok(Self { gamma0, gamma1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Alice,
    Eve,
    Continue,
}

impl Verdict {
    pub fn is_terminal(self) -> bool {
        self != Verdict::Continue
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: Verdict,
    pub t: u64,
    pub lambda_at_decision: f64,
}

/// Three-way rule; ties go to the terminal verdict.
pub fn decide(lambda: f64, thr: &DecisionThresholds, t: u64) -> Decision {
    let verdict = if lambda >= thr.gamma1 {
        Verdict::Alice
    } else if lambda <= thr.gamma0 {
        Verdict::Eve
    } else {
        Verdict::Continue
    };
    Decision {
        verdict,
        t,
        lambda_at_decision: lambda,
    }
}

/// Add one instantaneous LLR to the cumulative statistic and decide.
pub fn sprt_step(
    cum: f64,
    z: &Embedding,
    stats0: &EmissionStats,
    stats1: &EmissionStats,
    thr: &DecisionThresholds,
) -> Result<(f64, Decision)> {
    let next = cum + instantaneous_llr(z, stats0, stats1)?;
    Ok((next, decide(next, thr, z.t)))
}

/// Wald's approximations `gamma1 = log((1-b)/a)`, `gamma0 = log(b/(1-a))`.
pub fn wald_thresholds(alpha_fa: f64, beta_md: f64) -> Result<DecisionThresholds> {
    for (name, v) in [("false-alarm", alpha_fa), ("missed-detection", beta_md)] {
        if !(v > 0.0 && v < 0.5) {
            return Err(Error::invalid(format!("{name} target must lie in (0, 0.5), got {v}")));
        }
    }
    DecisionThresholds::new(
        (beta_md / (1.0 - alpha_fa)).ln(),
        ((1.0 - beta_md) / alpha_fa).ln(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn wald_five_percent() {
        let t = wald_thresholds(0.05, 0.05).unwrap();
        assert!((t.gamma1 - 19f64.ln()).abs() < 1e-12);
        assert!((t.gamma0 + 19f64.ln()).abs() < 1e-12);
        assert!((t.gamma1 - 2.944_438_979_166_44).abs() < 1e-12);
    }

    #[test]
    fn wald_boundary() {
        let eps = 1e-9;
        let t = wald_thresholds(0.5 - eps, 0.5 - eps).unwrap();
        assert!(t.gamma1 > 0.0 && t.gamma1 < 1e-7);
        assert!(t.gamma0 < 0.0 && t.gamma0 > -1e-7);
        assert!(wald_thresholds(0.5, 0.1).is_err());
        assert!(wald_thresholds(0.1, 0.0).is_err());
    }

    #[test]
    fn wald_symmetric_targets() {
        for a in [0.001, 0.01, 0.2, 0.4] {
            let t = wald_thresholds(a, a).unwrap();
            assert!((t.gamma0 + t.gamma1).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_are_terminal() {
        let thr = DecisionThresholds::new(-2.0, 3.0).unwrap();
        assert_eq!(decide(3.0, &thr, 1).verdict, Verdict::Alice);
        assert_eq!(decide(-2.0, &thr, 1).verdict, Verdict::Eve);
        assert_eq!(decide(0.7, &thr, 1).verdict, Verdict::Continue);
        assert!(DecisionThresholds::new(0.0, 1.0).is_err());
    }

    #[test]
    fn sprt_step_accumulates() {
        let s0 = EmissionStats::new(DVector::from_element(1, 0.0), DMatrix::identity(1, 1)).unwrap();
        let s1 = EmissionStats::new(DVector::from_element(1, 1.0), DMatrix::identity(1, 1)).unwrap();
        let thr = DecisionThresholds::new(-1.0, 1.0).unwrap();
        let z = Embedding { t: 4, z: DVector::from_element(1, 0.0) };
        let (cum, d) = sprt_step(0.6, &z, &s0, &s1, &thr).unwrap();
        assert!((cum - 1.1).abs() < 1e-5);
        assert_eq!(d.verdict, Verdict::Alice);
        assert_eq!(d.t, 4);
    }

    #[test]
    fn raising_gamma1_never_creates_alice() {
        let low = DecisionThresholds::new(-1.0, 1.0).unwrap();
        let high = DecisionThresholds::new(-1.0, 2.0).unwrap();
        for i in -40..40 {
            let l = i as f64 * 0.1;
            if decide(l, &low, 0).verdict == Verdict::Continue {
                assert_ne!(decide(l, &high, 0).verdict, Verdict::Alice);
            }
        }
    }
}
