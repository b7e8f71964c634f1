use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    affine_llr_params, bivariate_llr_params, curve_records, pdf_cdf_recursion_2state, pfa_pd_3state,
    simulate_2state, simulate_pfa_pd_3state, AffineHmm2, AffineHmm3, CurveRecord, CurveSource, GridOptions,
    Pfa3Options,
};
use crate::auth::{Detector, HmmModel, Transition2};
use crate::error::Result;
use crate::seed;

use super::config::ScenarioConfig;
use super::run::Campaign;

/// Analytic `P_FA(t)` / `P_D(t)` curves for a calibrated scenario model next
/// to Monte Carlo curves of the same affine model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub scenario: String,
    pub gamma0: f64,
    pub analytic: Vec<CurveRecord>,
    pub monte_carlo: Vec<CurveRecord>,
    /// Largest absolute gap between the analytic and Monte Carlo curves.
    pub max_gap: f64,
}

/// Covariance shared by all states in the equal-covariance approximation.
fn pooled_sigma(model: &HmmModel) -> DMatrix<f64> {
    let n = model.emissions.len() as f64;
    model
        .emissions
        .iter()
        .map(|e| e.regularized_sigma())
        .fold(None::<DMatrix<f64>>, |acc, s| Some(acc.map_or(s.clone(), |a| a + s)))
        .map(|s| s / n)
        .unwrap_or_default()
}

/// Calibrates trial 0 of `cfg`, reduces it to an equal-covariance affine
/// model and evaluates the analytic recursion against `n_traj` simulated
/// trajectories over the scenario horizon.
pub fn analyze_scenario(cfg: &ScenarioConfig, n_traj: usize) -> Result<AnalysisReport> {
    let c = Campaign::new(cfg)?;
    let model = c.calibrated_model(0)?;
    let sigma = pooled_sigma(&model);
    let thr = c.session.thresholds;
    let horizon = cfg.horizon as usize;
    let mc_seed = seed::derive(cfg.seed, &[seed::tag::SESSION, u64::MAX]);
    let a = &model.a;
    let (analytic, mc) = match cfg.detector {
        Detector::Sprt | Detector::Hmm2 => {
            let affine = affine_llr_params(&model.emissions[0].mu, &model.emissions[1].mu, &sigma)?;
            let trans = match cfg.detector {
                Detector::Sprt => Transition2::identity(),
                _ => Transition2::new([[a[(0, 0)], a[(0, 1)]], [a[(1, 0)], a[(1, 1)]]])?,
            };
            let m = AffineHmm2::new(trans, [model.pi[0], model.pi[1]], &affine)?;
            let rec = pdf_cdf_recursion_2state(&m, &thr, horizon, &GridOptions::default())?;
            let sim = simulate_2state(&m, thr.gamma0, horizon, n_traj, mc_seed);
            let t = 1..=horizon;
            let fa: Vec<f64> = t.clone().map(|t| sim.empirical_cdf(t, 0, thr.gamma0)).collect();
            let pd: Vec<f64> = t.map(|t| sim.empirical_cdf(t, 1, thr.gamma0)).collect();
            ((rec.p_fa, rec.p_d), (fa, pd))
        }
        Detector::Hmm3 => {
            let a3: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| a[(i, j)]));
            let pi = [model.pi[0], model.pi[1], model.pi[2]];
            let mu = [&model.emissions[0].mu, &model.emissions[1].mu, &model.emissions[2].mu];
            let p = bivariate_llr_params(mu, &sigma, &pi, &a3)?;
            let m = AffineHmm3::from_params(a3, pi, &p);
            let analytic = pfa_pd_3state(thr.gamma0, &m, horizon, &Pfa3Options::default())?;
            let mc = simulate_pfa_pd_3state(thr.gamma0, &m, horizon, n_traj, mc_seed)?;
            (analytic, mc)
        }
    };
    let max_gap = analytic
        .0
        .iter()
        .zip(&mc.0)
        .chain(analytic.1.iter().zip(&mc.1))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok(AnalysisReport {
        scenario: cfg.name.clone(),
        gamma0: thr.gamma0,
        analytic: curve_records(&analytic.0, &analytic.1, CurveSource::Analytic),
        monte_carlo: curve_records(&mc.0, &mc.1, CurveSource::MonteCarlo),
        max_gap,
    })
}
