//! Analytic performance characterisations and their Monte Carlo oracles.

mod moments;
mod three_state;
mod two_state;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::trace::JsonLinesWriter;

pub use crate::auth::transition_warp;
pub use moments::{affine_llr_params, llr_moments, quad_form_covariance, quad_form_moments, AffineLlrParams, QuadFormMoments};
pub use three_state::{
    bivariate_llr_params, delta_method_moments, lambda_3state, pfa_pd_3state, region_cdf_3state,
    simulate_pfa_pd_3state, transition_weights, AffineHmm3, BivariateLlrParams, Pfa3Options, RegionIntegrator,
    RegionOptions,
};
pub use two_state::{
    ar1_steady_state, llr_law, pdf_cdf_recursion_2state, simulate_2state, simulate_long_run,
    transition_warp_slope, AffineHmm2, Ar1Regime, Ar1SteadyState, GridDensity, GridOptions, Mc2, Recursion2,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveSource {
    Analytic,
    MonteCarlo,
}

/// One point of a `P_FA` / `P_D` curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub t: usize,
    pub p_fa: f64,
    pub p_d: f64,
    pub source: CurveSource,
}

pub fn curve_records(p_fa: &[f64], p_d: &[f64], source: CurveSource) -> Vec<CurveRecord> {
    p_fa.iter()
        .zip(p_d)
        .enumerate()
        .map(|(i, (&p_fa, &p_d))| CurveRecord {
            t: i + 1,
            p_fa,
            p_d,
            source,
        })
        .collect()
}

#[derive(Serialize)]
struct CurveHeader<'a> {
    version: u32,
    kind: &'a str,
    gamma0: f64,
}

pub fn write_curves(path: impl AsRef<Path>, gamma0: f64, records: &[CurveRecord]) -> Result<()> {
    let mut w = JsonLinesWriter::create(path)?;
    w.write(&CurveHeader {
        version: 1,
        kind: "pfa-pd-curves",
        gamma0,
    })?;
    for r in records {
        w.write(r)?;
    }
    w.finish().map(drop)
}
