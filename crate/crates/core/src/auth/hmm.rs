use nalgebra::DMatrix;

use crate::encoder::{EmissionStats, Embedding};
use crate::error::{Error, Result};
use crate::math::{log_add_exp, log_sum_exp};

use super::gaussian::GaussianDensity;

/// Default priors.
pub const DEFAULT_PI2: [f64; 2] = [0.7, 0.3];
pub const DEFAULT_PI3: [f64; 3] = [0.45, 0.45, 0.1];

/// Default sticky 2-state transition matrix.
pub const DEFAULT_A2: [[f64; 2]; 2] = [[0.95, 0.05], [0.05, 0.95]];

/// Default LoS / NLoS / Eve transition matrix: sticky states, rare Alice<->Eve moves.
pub const DEFAULT_A3: [[f64; 3]; 3] = [[0.93, 0.05, 0.02], [0.10, 0.88, 0.02], [0.02, 0.02, 0.96]];

/// HMM over {Alice} x {LoS, NLoS} / Eve. With two states, state 0 is Alice
/// and 1 is Eve; with three, 0 and 1 are Alice (LoS, NLoS) and 2 is Eve.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    pub pi: Vec<f64>,
    pub a: DMatrix<f64>,
    pub emissions: Vec<EmissionStats>,
}

impl HmmModel {
    pub fn new(pi: Vec<f64>, a: DMatrix<f64>, emissions: Vec<EmissionStats>) -> Result<Self> {
        let m = Self { pi, a, emissions };
        m.validate()?;
        Ok(m)
    }

    pub fn two_state(a: [[f64; 2]; 2], pi: [f64; 2], e0: EmissionStats, e1: EmissionStats) -> Result<Self> {
        Self::new(
            pi.to_vec(),
            DMatrix::from_fn(2, 2, |i, j| a[i][j]),
            vec![e0.with_label(0), e1.with_label(1)],
        )
    }

    pub fn three_state(
        a: [[f64; 3]; 3],
        pi: [f64; 3],
        los: EmissionStats,
        nlos: EmissionStats,
        eve: EmissionStats,
    ) -> Result<Self> {
        Self::new(
            pi.to_vec(),
            DMatrix::from_fn(3, 3, |i, j| a[i][j]),
            vec![los.with_label(0), nlos.with_label(1), eve.with_label(2)],
        )
    }

    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    /// Index of the Eve state.
    pub fn eve_state(&self) -> usize {
        self.n_states() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.pi.len();
        if !(n == 2 || n == 3) {
            return Err(Error::invalid(format!("HMM must have 2 or 3 states, got {n}")));
        }
        if self.a.shape() != (n, n) {
            return Err(Error::dims(format!("{n}x{n}"), format!("{}x{}", self.a.nrows(), self.a.ncols())));
        }
        if self.emissions.len() != n {
            return Err(Error::dims(n, self.emissions.len()));
        }
        if self.pi.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (self.pi.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("initial distribution {:?} does not sum to 1", self.pi)));
        }
        for i in 0..n {
            let row = self.a.row(i);
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (row.sum() - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("transition row {i} is not a distribution")));
            }
        }
        let d = self.emissions[0].dim();
        if self.emissions.iter().any(|e| e.dim() != d) {
            return Err(Error::invalid("emission dimensions differ across states"));
        }
        Ok(())
    }

    pub fn log_a(&self) -> DMatrix<f64> {
        self.a.map(f64::ln)
    }

    pub fn densities(&self) -> Result<Vec<GaussianDensity>> {
        self.emissions.iter().map(GaussianDensity::new).collect()
    }

    /// Log-posterior ratio implied by the prior alone.
    pub fn prior_ratio(&self) -> f64 {
        let lp: Vec<f64> = self.pi.iter().map(|p| p.ln()).collect();
        ratio_from_log_alpha(&lp)
    }
}

fn ratio_from_log_alpha(la: &[f64]) -> f64 {
    match la.len() {
        2 => la[0] - la[1],
        3 => log_add_exp(la[0], la[1]) - la[2],
        n => unreachable!("validated state count {n}"),
    }
}

/// Forward variables kept as normalised log posteriors plus the running
/// log-evidence, so `log alpha_t(k) = log_alpha[k] + log_evidence`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardState {
    pub t: u64,
    pub log_alpha: Vec<f64>,
    pub log_evidence: f64,
    pub lambda: f64,
}

impl ForwardState {
    /// State before any observation: the prior.
    pub fn new(model: &HmmModel) -> Self {
        let log_alpha: Vec<f64> = model.pi.iter().map(|p| p.ln()).collect();
        Self {
            t: 0,
            lambda: ratio_from_log_alpha(&log_alpha),
            log_alpha,
            log_evidence: 0.0,
        }
    }

    pub fn posterior(&self) -> Vec<f64> {
        let norm = log_sum_exp(&self.log_alpha);
        self.log_alpha.iter().map(|l| (l - norm).exp()).collect()
    }

    pub fn most_probable(&self) -> usize {
        self.log_alpha
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &l)| if l > best.1 { (i, l) } else { best })
            .0
    }

    /// Advance with precomputed per-state log-likelihoods of the new observation.
    pub fn step_with_loglik(&mut self, log_a: &DMatrix<f64>, loglik: &[f64]) -> Result<()> {
        let n = self.log_alpha.len();
        if loglik.len() != n || log_a.shape() != (n, n) {
            return Err(Error::dims(n, loglik.len()));
        }
        let mut next = [0.0f64; 3];
        let next = &mut next[..n];
        for k in 0..n {
            let prior = if self.t == 0 {
                self.log_alpha[k]
            } else {
                let mut acc = f64::NEG_INFINITY;
                for j in 0..n {
                    acc = log_add_exp(acc, self.log_alpha[j] + log_a[(j, k)]);
                }
                acc
            };
            next[k] = loglik[k] + prior;
        }
        let norm = log_sum_exp(next);
        if !norm.is_finite() {
            return Err(Error::NumericFault(format!(
                "forward variables degenerate at t = {} (log-likelihoods {loglik:?})",
                self.t + 1
            )));
        }
        self.lambda = ratio_from_log_alpha(next);
        for (dst, v) in self.log_alpha.iter_mut().zip(next.iter()) {
            *dst = v - norm;
        }
        self.log_evidence += norm;
        self.t += 1;
        Ok(())
    }
}

/// One forward-recursion step in the log domain.
pub fn hmm_forward_step(fwd: &ForwardState, model: &HmmModel, z: &Embedding) -> Result<ForwardState> {
    let loglik = model
        .densities()?
        .iter()
        .map(|d| d.log_pdf(&z.z))
        .collect::<Result<Vec<_>>>()?;
    let mut next = fwd.clone();
    next.step_with_loglik(&model.log_a(), &loglik)?;
    Ok(next)
}

/// 2-state: `log alpha(0) - log alpha(1)`; 3-state: Alice states {0, 1} against Eve.
pub fn log_posterior_ratio(fwd: &ForwardState, model: &HmmModel) -> f64 {
    debug_assert_eq!(fwd.log_alpha.len(), model.n_states());
    ratio_from_log_alpha(&fwd.log_alpha)
}
