use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_add_exp, log_sigmoid};

/// Row-stochastic 2x2 transition matrix, `a[i][j] = P(S_t = j | S_{t-1} = i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition2(pub [[f64; 2]; 2]);

impl Transition2 {
    pub fn new(a: [[f64; 2]; 2]) -> Result<Self> {
        for row in &a {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (row[0] + row[1] - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("transition row {row:?} is not a distribution")));
            }
        }
        Ok(Self(a))
    }

    pub fn symmetric(stay: f64) -> Result<Self> {
        Self::new([[stay, 1.0 - stay], [1.0 - stay, stay]])
    }

    pub fn identity() -> Self {
        Self([[1.0, 0.0], [0.0, 1.0]])
    }

    /// Lower and upper bounds of the warp, `log(a10/a11)` and `log(a00/a01)`.
    pub fn warp_bounds(&self) -> (f64, f64) {
        let a = &self.0;
        ((a[1][0] / a[1][1]).ln(), (a[0][0] / a[0][1]).ln())
    }
}

/// `f(x) = log[(a00 s + a10 (1-s)) / (a01 s + a11 (1-s))]`, `s = sigmoid(x)`,
/// evaluated in the log domain.
pub fn transition_warp(x: f64, a: &Transition2) -> f64 {
    let a = &a.0;
    let ls = log_sigmoid(x);
    let lc = log_sigmoid(-x);
    let num = log_add_exp(a[0][0].ln() + ls, a[1][0].ln() + lc);
    let den = log_add_exp(a[0][1].ln() + ls, a[1][1].ln() + lc);
    num - den
}

/// One step of the closed-form 2-state log-posterior recursion.
pub fn recursive_llr_step(lambda_prev: f64, ell_t: f64, a: &Transition2) -> f64 {
    ell_t + transition_warp(lambda_prev, a)
}
