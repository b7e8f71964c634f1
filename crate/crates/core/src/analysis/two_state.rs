use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::auth::{transition_warp, DecisionThresholds, Transition2};
use crate::error::{Error, Result};
use crate::math::{logit, norm_cdf, sigmoid};
use crate::seed;

use super::moments::AffineLlrParams;

/// 2-state HMM reduced to its equal-covariance LLR law:
/// `l_t | S_t = k ~ N(m[k], v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineHmm2 {
    pub a: Transition2,
    pub pi: [f64; 2],
    pub m: [f64; 2],
    pub v: f64,
}

impl AffineHmm2 {
    pub fn new(a: Transition2, pi: [f64; 2], affine: &AffineLlrParams) -> Result<Self> {
        let s = Self {
            a,
            pi,
            m: [affine.m0, affine.m1],
            v: affine.v,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        Transition2::new(self.a.0)?;
        if !(self.v > 0.0) {
            return Err(Error::invalid("LLR variance must be positive"));
        }
        if self.pi.iter().any(|&p| !(p > 0.0 && p < 1.0)) || (self.pi[0] + self.pi[1] - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("initial distribution {:?} must be interior", self.pi)));
        }
        Ok(())
    }

    /// Statistic after the first observation, before any transition term.
    fn prior_shift(&self) -> f64 {
        logit(self.pi[0])
    }

    /// `P(S_t = k)` for `t = 1..=horizon`.
    pub fn marginals(&self, horizon: usize) -> Vec<[f64; 2]> {
        let a = &self.a.0;
        let mut out = Vec::with_capacity(horizon);
        let mut p = self.pi;
        for _ in 0..horizon {
            out.push(p);
            p = [p[0] * a[0][0] + p[1] * a[1][0], p[0] * a[0][1] + p[1] * a[1][1]];
        }
        out
    }
}

/// Slope of the transition warp.
pub fn transition_warp_slope(x: f64, a: &Transition2) -> f64 {
    let a = &a.0;
    let s = sigmoid(x);
    let c = sigmoid(-x);
    let num = a[0][0] * s + a[1][0] * c;
    let den = a[0][1] * s + a[1][1] * c;
    s * c * ((a[0][0] - a[1][0]) / num - (a[0][1] - a[1][1]) / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub points: usize,
    /// Half-width of the grid in units of the statistic's standard deviation.
    pub span_sd: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            points: 2048,
            span_sd: 8.0,
        }
    }
}

/// Sub-densities `p_t^(k)` on a uniform grid with trapezoid weights. Each
/// integrates to `P(S_t = k)` after renormalisation; `raw_mass` keeps the
/// pre-renormalisation integral as a leakage diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub grid: Vec<f64>,
    pub weights: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub mass: Vec<f64>,
    pub raw_mass: Vec<f64>,
}

impl GridDensity {
    pub fn integral(&self, k: usize) -> f64 {
        self.values[k].iter().zip(&self.weights).map(|(p, w)| p * w).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Recursion2 {
    pub model: AffineHmm2,
    pub gamma0: f64,
    /// `densities[t - 1]` is the density after `t` observations.
    pub densities: Vec<GridDensity>,
    pub p_fa: Vec<f64>,
    pub p_d: Vec<f64>,
    warp: Vec<f64>,
}

impl Recursion2 {
    pub fn horizon(&self) -> usize {
        self.densities.len()
    }

    /// Conditional CDF `F_t^(k)(gamma) = P(Lambda_t <= gamma | S_t = k)`, evaluated
    /// with the exact Gaussian CDF against the previous step's grid density.
    pub fn cdf(&self, t: usize, k: usize, gamma: f64) -> f64 {
        assert!(t >= 1 && t <= self.horizon() && k < 2);
        let m = &self.model;
        let sd = m.v.sqrt();
        if t == 1 {
            return norm_cdf((gamma - m.m[k] - m.prior_shift()) / sd);
        }
        let prev = &self.densities[t - 2];
        let a = &m.a.0;
        let mut acc = 0.0;
        for (j, (&w, &fx)) in prev.weights.iter().zip(&self.warp).enumerate() {
            let g = a[0][k] * prev.values[0][j] + a[1][k] * prev.values[1][j];
            if g > 0.0 {
                acc += w * g * norm_cdf((gamma - m.m[k] - fx) / sd);
            }
        }
        let rho = a[0][k] * prev.mass[0] + a[1][k] * prev.mass[1];
        (acc / rho).clamp(0.0, 1.0)
    }
}

fn grid_bounds(model: &AffineHmm2, horizon: usize, span_sd: f64) -> (f64, f64) {
    let (m_lo, m_hi) = (model.m[0].min(model.m[1]), model.m[0].max(model.m[1]));
    let (mut lo, mut hi) = (m_lo + model.prior_shift(), m_hi + model.prior_shift());
    let (mut lo_all, mut hi_all) = (lo, hi);
    let mut slope: f64 = 0.0;
    for _ in 1..horizon {
        lo = m_lo + transition_warp(lo, &model.a);
        hi = m_hi + transition_warp(hi, &model.a);
        lo_all = lo_all.min(lo);
        hi_all = hi_all.max(hi);
    }
    for i in 0..=400 {
        let x = lo_all + (hi_all - lo_all) * i as f64 / 400.0;
        slope = slope.max(transition_warp_slope(x, &model.a).abs());
    }
    // noise accumulates like an AR(1) with the steepest slope
    let t_eff = if slope < 1.0 {
        (1.0 / (1.0 - slope * slope)).min(horizon as f64)
    } else {
        horizon as f64
    };
    let sd = (model.v * t_eff.max(1.0)).sqrt();
    (lo_all - span_sd * sd, hi_all + span_sd * sd)
}

/// Propagates the joint densities of `(Lambda_t, S_t)` on a grid and reports
/// the pointwise `P_FA(t) = F_t^(0)(gamma0)` and `P_D(t) = F_t^(1)(gamma0)`.
pub fn pdf_cdf_recursion_2state(
    model: &AffineHmm2,
    thresholds: &DecisionThresholds,
    horizon: usize,
    opts: &GridOptions,
) -> Result<Recursion2> {
    model.validate()?;
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if opts.points < 16 {
        return Err(Error::invalid("grid needs at least 16 points"));
    }
    let (lo, hi) = grid_bounds(model, horizon, opts.span_sd);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NumericFault("grid bounds are not finite".into()));
    }
    let n = opts.points;
    let h = (hi - lo) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
    let mut weights = vec![h; n];
    weights[0] = h / 2.0;
    weights[n - 1] = h / 2.0;
    let warp: Vec<f64> = grid.iter().map(|&x| transition_warp(x, &model.a)).collect();
    let marg = model.marginals(horizon);
    let sd = model.v.sqrt();
    let inv = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
    let a = &model.a.0;

    let mut densities: Vec<GridDensity> = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let mut values = vec![vec![0.0; n]; 2];
        for k in 0..2 {
            if t == 1 {
                let c = model.m[k] + model.prior_shift();
                for (y, out) in grid.iter().zip(values[k].iter_mut()) {
                    let u = (y - c) / sd;
                    *out = model.pi[k] * inv * (-0.5 * u * u).exp();
                }
            } else {
                let prev = &densities[t - 2];
                let src: Vec<(f64, f64)> = (0..n)
                    .filter_map(|j| {
                        let g = prev.weights[j] * (a[0][k] * prev.values[0][j] + a[1][k] * prev.values[1][j]);
                        (g > 1e-300).then_some((g, model.m[k] + warp[j]))
                    })
                    .collect();
                for (y, out) in grid.iter().zip(values[k].iter_mut()) {
                    let mut acc = 0.0;
                    for &(g, c) in &src {
                        let u = (y - c) / sd;
                        if u.abs() < 40.0 {
                            acc += g * (-0.5 * u * u).exp();
                        }
                    }
                    *out = acc * inv;
                }
            }
        }
        let mut d = GridDensity {
            grid: grid.clone(),
            weights: weights.clone(),
            values,
            mass: marg[t - 1].to_vec(),
            raw_mass: vec![0.0; 2],
        };
        for k in 0..2 {
            let raw = d.integral(k);
            if !(raw > 0.0) || !raw.is_finite() {
                return Err(Error::NumericFault(format!("grid density for state {k} vanished at t = {t}")));
            }
            d.raw_mass[k] = raw;
            let scale = d.mass[k] / raw;
            d.values[k].iter_mut().for_each(|p| *p *= scale);
        }
        densities.push(d);
    }
    let mut rec = Recursion2 {
        model: *model,
        gamma0: thresholds.gamma0,
        densities,
        p_fa: Vec::new(),
        p_d: Vec::new(),
        warp,
    };
    rec.p_fa = (1..=horizon).map(|t| rec.cdf(t, 0, thresholds.gamma0)).collect();
    rec.p_d = (1..=horizon).map(|t| rec.cdf(t, 1, thresholds.gamma0)).collect();
    Ok(rec)
}

/// Monte Carlo trajectories of `(S_t, Lambda_t)` under the affine model.
#[derive(Debug, Clone)]
pub struct Mc2 {
    /// `samples[t - 1]` holds `(state, lambda)` for every trajectory.
    pub samples: Vec<Vec<(u8, f64)>>,
    /// Per trajectory: first `t` with `Lambda_t <= gamma0`, if any.
    pub first_below: Vec<Option<usize>>,
    /// Per trajectory: state at the first passage.
    pub state_at_passage: Vec<Option<u8>>,
}

impl Mc2 {
    pub fn empirical_cdf(&self, t: usize, k: usize, gamma: f64) -> f64 {
        let (mut n, mut below) = (0usize, 0usize);
        for &(s, l) in &self.samples[t - 1] {
            if s as usize == k {
                n += 1;
                below += (l <= gamma) as usize;
            }
        }
        if n == 0 {
            f64::NAN
        } else {
            below as f64 / n as f64
        }
    }

    /// Fraction of trajectories with `S_t = k` whose statistic has been
    /// `<= gamma0` at some step up to `t` (absorbing-boundary reading).
    pub fn first_passage(&self, t: usize, k: usize) -> f64 {
        let (mut n, mut hit) = (0usize, 0usize);
        for (i, &(s, _)) in self.samples[t - 1].iter().enumerate() {
            if s as usize == k {
                n += 1;
                hit += self.first_below[i].is_some_and(|f| f <= t) as usize;
            }
        }
        hit as f64 / n.max(1) as f64
    }
}

pub fn simulate_2state(model: &AffineHmm2, gamma0: f64, horizon: usize, n_traj: usize, seed: u64) -> Mc2 {
    let mut rng = seed::rng(seed);
    let a = &model.a.0;
    let sd = model.v.sqrt();
    let mut samples = vec![Vec::with_capacity(n_traj); horizon];
    let mut first_below = vec![None; n_traj];
    let mut state_at_passage = vec![None; n_traj];
    for i in 0..n_traj {
        let mut s = usize::from(rng.gen::<f64>() >= model.pi[0]);
        let mut lam = 0.0;
        for t in 1..=horizon {
            if t > 1 {
                s = usize::from(rng.gen::<f64>() >= a[s][0]);
            }
            let ell = model.m[s] + sd * rng.sample::<f64, _>(StandardNormal);
            lam = if t == 1 {
                ell + model.prior_shift()
            } else {
                ell + transition_warp(lam, &model.a)
            };
            samples[t - 1].push((s as u8, lam));
            if lam <= gamma0 && first_below[i].is_none() {
                first_below[i] = Some(t);
                state_at_passage[i] = Some(s as u8);
            }
        }
    }
    Mc2 {
        samples,
        first_below,
        state_at_passage,
    }
}

/// Which law drives the LLR in the long run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ar1Regime {
    /// Hidden state follows the chain in stationarity.
    Stationary,
    /// Every observation comes from one state (e.g. an Alice-only session).
    Pinned(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1SteadyState {
    pub c0: f64,
    pub c1: f64,
    pub mu_lambda: f64,
    pub var_lambda: f64,
}

/// Mean and variance of `l_t` under the regime.
pub fn llr_law(a: &Transition2, affine: &AffineLlrParams, regime: Ar1Regime) -> Result<(f64, f64)> {
    match regime {
        Ar1Regime::Pinned(k) if k < 2 => Ok((affine.mean(k), affine.v)),
        Ar1Regime::Pinned(k) => Err(Error::invalid(format!("state must be 0 or 1, got {k}"))),
        Ar1Regime::Stationary => {
            let a = &a.0;
            let leave = a[0][1] + a[1][0];
            if leave <= 0.0 {
                return Err(Error::invalid("identity transitions have no unique stationary law"));
            }
            let r0 = a[1][0] / leave;
            let r1 = 1.0 - r0;
            let mean = r0 * affine.m0 + r1 * affine.m1;
            Ok((mean, affine.v + r0 * r1 * (affine.m0 - affine.m1).powi(2)))
        }
    }
}

/// Linearises the warp at its self-consistent operating point and returns
/// the AR(1) stationary moments of the statistic.
pub fn ar1_steady_state(a: &Transition2, affine: &AffineLlrParams, regime: Ar1Regime) -> Result<Ar1SteadyState> {
    let m = &a.0;
    if m[0][1] == 0.0 && m[1][0] == 0.0 {
        return Err(Error::NumericFault("identity transitions: warp slope is 1, no stationary law".into()));
    }
    let (m_bar, var_ell) = llr_law(a, affine, regime)?;
    // root of g(mu) = mu - m_bar - f(mu); g is increasing where the slope is below 1
    let g = |x: f64| x - m_bar - transition_warp(x, a);
    let (mut lo, mut hi) = (m_bar - 1.0, m_bar + 1.0);
    let mut grow = 0;
    while g(lo) > 0.0 || g(hi) < 0.0 {
        lo -= 2f64.powi(grow);
        hi += 2f64.powi(grow);
        grow += 1;
        if grow > 60 {
            return Err(Error::NumericFault("no fixed point for the linearisation point".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let c1 = transition_warp_slope(mu, a);
    if !(c1.abs() < 1.0) {
        return Err(Error::NumericFault(format!("non-contractive linearisation, slope {c1}")));
    }
    let c0 = transition_warp(mu, a) - c1 * mu;
    Ok(Ar1SteadyState {
        c0,
        c1,
        mu_lambda: (m_bar + c0) / (1.0 - c1),
        var_lambda: var_ell / (1.0 - c1 * c1),
    })
}

/// Long-run sample mean and variance of the exact recursion.
pub fn simulate_long_run(
    a: &Transition2,
    affine: &AffineLlrParams,
    regime: Ar1Regime,
    steps: usize,
    burn_in: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = seed::rng(seed);
    let sd = affine.v.sqrt();
    let m = &a.0;
    let (r0, _) = match regime {
        Ar1Regime::Stationary => {
            let leave = m[0][1] + m[1][0];
            (m[1][0] / leave, 0.0)
        }
        Ar1Regime::Pinned(k) => (if k == 0 { 1.0 } else { 0.0 }, 0.0),
    };
    let mut s = usize::from(rng.gen::<f64>() >= r0);
    let mut lam = 0.0;
    let (mut sum, mut sum2) = (0.0, 0.0);
    for i in 0..burn_in + steps {
        if matches!(regime, Ar1Regime::Stationary) {
            s = usize::from(rng.gen::<f64>() >= m[s][0]);
        }
        let ell = affine.mean(s) + sd * rng.sample::<f64, _>(StandardNormal);
        lam = ell + transition_warp(lam, a);
        if i >= burn_in {
            sum += lam;
            sum2 += lam * lam;
        }
    }
    let n = steps as f64;
    let mean = sum / n;
    (mean, (sum2 / n - mean * mean) * n / (n - 1.0))
}
