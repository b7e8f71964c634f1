use gauss_quad::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::auth::ForwardState;
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::math::{log_add_exp, norm_cdf, sigmoid};
use crate::seed;

/// `T_k = sum_j a_jk u_prev(j)`.
pub fn transition_weights(u_prev: &[f64; 3], a: &[[f64; 3]; 3]) -> [f64; 3] {
    let mut t = [0.0; 3];
    for (k, tk) in t.iter_mut().enumerate() {
        *tk = (0..3).map(|j| a[j][k] * u_prev[j]).sum();
    }
    t
}

/// Joint law of `(l02, l12)`, `l_k2 = log p_k - log p_2`, under each state
/// in the equal-covariance regime, plus the transition-weighted priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateLlrParams {
    /// `m_by_state[s] = E[(l02, l12) | S_t = s]`.
    pub m_by_state: [[f64; 2]; 3],
    /// Covariance of `(l02, l12)`, shared by all states.
    pub v: [[f64; 2]; 2],
    pub t_weights: [f64; 3],
    pub w: [DVector<f64>; 2],
    pub kappa: [f64; 2],
}

impl BivariateLlrParams {
    /// `(l02, l12)` for one embedding.
    pub fn ells(&self, z: &DVector<f64>) -> (f64, f64) {
        (self.w[0].dot(z) + self.kappa[0], self.w[1].dot(z) + self.kappa[1])
    }

    pub fn with_weights(&self, t_weights: [f64; 3]) -> Self {
        Self {
            t_weights,
            ..self.clone()
        }
    }
}

pub fn bivariate_llr_params(
    mu: [&DVector<f64>; 3],
    sigma: &DMatrix<f64>,
    u_prev: &[f64; 3],
    a: &[[f64; 3]; 3],
) -> Result<BivariateLlrParams> {
    let d = mu[0].len();
    if mu.iter().any(|m| m.len() != d) || sigma.shape() != (d, d) {
        return Err(Error::dims(d, format!("{:?}", sigma.shape())));
    }
    if u_prev.iter().any(|&u| u < 0.0) || (u_prev.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("u_prev {u_prev:?} is not a distribution")));
    }
    let f = SpdFactor::new(sigma).map_err(|_| Error::not_pd("shared covariance"))?;
    let q2 = f.quad_form_inv(mu[2].as_slice());
    let mut w: [DVector<f64>; 2] = [DVector::zeros(d), DVector::zeros(d)];
    let mut kappa = [0.0; 2];
    for k in 0..2 {
        w[k] = f.solve(&(mu[k] - mu[2]));
        kappa[k] = 0.5 * (q2 - f.quad_form_inv(mu[k].as_slice()));
    }
    let mut m_by_state = [[0.0; 2]; 3];
    for s in 0..3 {
        for k in 0..2 {
            m_by_state[s][k] = w[k].dot(mu[s]) + kappa[k];
        }
    }
    let sw: [DVector<f64>; 2] = [sigma * &w[0], sigma * &w[1]];
    let c = w[0].dot(&sw[1]);
    let v = [[w[0].dot(&sw[0]), c], [c, w[1].dot(&sw[1])]];
    Ok(BivariateLlrParams {
        m_by_state,
        v,
        t_weights: transition_weights(u_prev, a),
        w,
        kappa,
    })
}

/// `log(T0 e^l02 + T1 e^l12) - log T2`; `+inf` when `T2 = 0`.
pub fn lambda_3state(ell02: f64, ell12: f64, t_weights: &[f64; 3]) -> f64 {
    let [t0, t1, t2] = *t_weights;
    if t2 <= 0.0 {
        return f64::INFINITY;
    }
    log_add_exp(t0.ln() + ell02, t1.ln() + ell12) - t2.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionOptions {
    /// Gauss-Legendre nodes per panel.
    pub nodes: usize,
    pub panels: usize,
    pub span_sd: f64,
}

impl Default for RegionOptions {
    fn default() -> Self {
        Self {
            nodes: 64,
            panels: 4,
            span_sd: 8.0,
        }
    }
}

/// Precomputed quadrature rule for repeated region integrals.
pub struct RegionIntegrator {
    rule: GaussLegendre,
    opts: RegionOptions,
}

impl RegionIntegrator {
    pub fn new(opts: RegionOptions) -> Result<Self> {
        if opts.panels == 0 {
            return Err(Error::invalid("need at least one quadrature panel"));
        }
        let rule = GaussLegendre::new(opts.nodes).map_err(|e| Error::invalid(format!("quadrature rule: {e}")))?;
        Ok(Self { rule, opts })
    }

    /// `P(Lambda <= gamma | S = s)` over the region `T0 e^x + T1 e^y <= e^gamma T2`.
    pub fn cdf(&self, gamma: f64, p: &BivariateLlrParams, s: usize) -> Result<f64> {
        if s > 2 {
            return Err(Error::invalid(format!("state must be 0, 1 or 2, got {s}")));
        }
        let [t0, t1, t2] = p.t_weights;
        let [mx, my] = p.m_by_state[s];
        let [[v11, v12], [_, v22]] = p.v;
        if v11 < -1e-12 || v22 < -1e-12 || v12 * v12 > v11 * v22 * (1.0 + 1e-9) + 1e-18 {
            return Err(Error::not_pd("LLR covariance"));
        }
        if gamma == f64::INFINITY {
            return Ok(1.0);
        }
        if t2 <= 0.0 || gamma == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let big_l = gamma + t2.ln();
        let (sx, sy) = (v11.max(0.0).sqrt(), v22.max(0.0).sqrt());
        let below = |mean: f64, sd: f64, bound: f64| {
            if sd > 0.0 {
                norm_cdf((bound - mean) / sd)
            } else if mean <= bound {
                1.0
            } else {
                0.0
            }
        };
        if t0 <= 0.0 && t1 <= 0.0 {
            return Ok(1.0);
        }
        if t1 <= 0.0 {
            return Ok(below(mx, sx, big_l - t0.ln()));
        }
        if t0 <= 0.0 {
            return Ok(below(my, sy, big_l - t1.ln()));
        }
        let x_star = big_l - t0.ln();
        let inner = |x: f64| {
            if x >= x_star {
                return 0.0;
            }
            let bound = big_l + (-(x - x_star).exp()).ln_1p() - t1.ln();
            let (cm, cv) = if sx > 0.0 {
                (my + v12 / v11 * (x - mx), (v22 - v12 * v12 / v11).max(0.0))
            } else {
                (my, v22.max(0.0))
            };
            below(cm, cv.sqrt(), bound)
        };
        if sx == 0.0 {
            return Ok(inner(mx));
        }
        let a = mx - self.opts.span_sd * sx;
        let b = (mx + self.opts.span_sd * sx).min(x_star);
        if b <= a {
            return Ok(0.0);
        }
        let n = self.opts.panels;
        let h = (b - a) / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let (lo, hi) = (a + h * i as f64, a + h * (i + 1) as f64);
            acc += self.rule.integrate(lo, hi, |x| {
                let u = (x - mx) / sx;
                (-0.5 * u * u).exp() * inner(x)
            });
        }
        Ok((acc / (sx * (2.0 * std::f64::consts::PI).sqrt())).clamp(0.0, 1.0))
    }
}

pub fn region_cdf_3state(gamma: f64, params: &BivariateLlrParams, s: usize) -> Result<f64> {
    RegionIntegrator::new(RegionOptions::default())?.cdf(gamma, params, s)
}

/// Second-order delta-method mean and first-order variance of
/// `g(x, y) = log(T0 e^x + T1 e^y) - log T2` at the state-`s` mean.
pub fn delta_method_moments(params: &BivariateLlrParams, s: usize) -> (f64, f64) {
    let [t0, t1, _] = params.t_weights;
    let [mx, my] = params.m_by_state[s];
    let g = lambda_3state(mx, my, &params.t_weights);
    // gradient components are softmax weights; compute them stably
    let (lx, ly) = (t0.ln() + mx, t1.ln() + my);
    let gx = sigmoid(lx - ly);
    let gy = 1.0 - gx;
    let h = gx * gy;
    let [[v11, v12], [_, v22]] = params.v;
    let tr_hv = h * (v11 - 2.0 * v12 + v22);
    let var = gx * gx * v11 + 2.0 * gx * gy * v12 + gy * gy * v22;
    (g + 0.5 * tr_hv, var.max(0.0))
}

/// 3-state HMM reduced to its equal-covariance law of `(l02, l12)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineHmm3 {
    pub a: [[f64; 3]; 3],
    pub pi: [f64; 3],
    pub m_by_state: [[f64; 2]; 3],
    pub v: [[f64; 2]; 2],
}

impl AffineHmm3 {
    pub fn from_params(a: [[f64; 3]; 3], pi: [f64; 3], p: &BivariateLlrParams) -> Self {
        Self {
            a,
            pi,
            m_by_state: p.m_by_state,
            v: p.v,
        }
    }

    fn params(&self, t_weights: [f64; 3]) -> BivariateLlrParams {
        BivariateLlrParams {
            m_by_state: self.m_by_state,
            v: self.v,
            t_weights,
            w: [DVector::zeros(0), DVector::zeros(0)],
            kappa: [0.0; 2],
        }
    }

    pub fn marginals(&self, horizon: usize) -> Vec<[f64; 3]> {
        let mut p = self.pi;
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            out.push(p);
            p = transition_weights(&p, &self.a);
        }
        out
    }

    fn sample_ells<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> (f64, f64) {
        let [[v11, v12], [_, v22]] = self.v;
        let l11 = v11.max(0.0).sqrt();
        let l21 = if l11 > 0.0 { v12 / l11 } else { 0.0 };
        let l22 = (v22 - l21 * l21).max(0.0).sqrt();
        let (e1, e2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        let [mx, my] = self.m_by_state[s];
        (mx + l11 * e1, my + l21 * e1 + l22 * e2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pfa3Options {
    /// Cells of the grid over the previous statistic.
    pub cells: usize,
    pub region: RegionOptions,
}

impl Default for Pfa3Options {
    fn default() -> Self {
        Self {
            cells: 120,
            region: RegionOptions {
                nodes: 32,
                panels: 2,
                span_sd: 7.0,
            },
        }
    }
}

/// Pointwise `P_FA(t)` and `P_D(t)` for `t = 1..=horizon` by grid averaging
/// over the Alice-mass summary of `u_{t-1}`. The summary is the previous
/// statistic together with a per-cell mean LoS share of the Alice mass,
/// propagated at the conditional mean of the LLRs.
pub fn pfa_pd_3state(
    gamma0: f64,
    model: &AffineHmm3,
    horizon: usize,
    opts: &Pfa3Options,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if horizon == 0 || opts.cells < 4 {
        return Err(Error::invalid("need horizon >= 1 and at least 4 grid cells"));
    }
    let integ = RegionIntegrator::new(opts.region)?;
    let marg = model.marginals(horizon);
    let sd = model.v[0][0].max(model.v[1][1]).max(1e-12).sqrt();
    let a_min = model.a.iter().flatten().cloned().filter(|&x| x > 0.0).fold(1.0, f64::min).min(model.pi[2]);
    let m_lo = model.m_by_state.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let m_hi = model.m_by_state.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = m_lo - opts.region.span_sd * sd + a_min.ln();
    let hi = m_hi + opts.region.span_sd * sd - a_min.ln();
    let n = opts.cells;
    let h = (hi - lo) / n as f64;
    let centers: Vec<f64> = (0..n).map(|b| lo + h * (b as f64 + 0.5)).collect();
    let inner_edges: Vec<f64> = (1..n).map(|b| lo + h * b as f64).collect();

    let mut p_fa = Vec::with_capacity(horizon);
    let mut p_d = Vec::with_capacity(horizon);
    // mass[i][b] = P(S_{t-1} = i, Lambda_{t-1} in cell b); split[i][b] is the
    // mean LoS share of the Alice posterior mass over that cell.
    let mut mass = vec![vec![0.0; n]; 3];
    let mut split = vec![vec![0.0; n]; 3];
    for t in 1..=horizon {
        let mut below = [0.0; 3];
        let mut next = vec![vec![0.0; n]; 3];
        let mut next_split = vec![vec![0.0; n]; 3];
        let mut sources: Vec<(f64, [f64; 3], usize, usize)> = Vec::new();
        if t == 1 {
            for s in 0..3 {
                sources.push((model.pi[s], model.pi, s, 0));
            }
        } else {
            for (b, &x) in centers.iter().enumerate() {
                let q = sigmoid(x);
                for i in 0..3 {
                    if mass[i][b] < 1e-14 {
                        continue;
                    }
                    let sp = split[i][b] / mass[i][b];
                    let u = [q * sp, q * (1.0 - sp), 1.0 - q];
                    let tw = transition_weights(&u, &model.a);
                    for s in 0..3 {
                        let g = model.a[i][s] * mass[i][b];
                        if g >= 1e-14 {
                            sources.push((g, tw, s, 1));
                        }
                    }
                }
            }
        }
        for (g, tw, s, _) in sources {
            let p = model.params(tw);
            below[s] += g * integ.cdf(gamma0, &p, s)?;
            // LoS share of the new Alice mass at the conditional mean of the LLRs
            let [mx, my] = model.m_by_state[s];
            let (l0, l1) = (tw[0].ln() + mx, tw[1].ln() + my);
            let sp_new = sigmoid(l0 - l1);
            let sp_new = if sp_new.is_finite() { sp_new } else { 0.5 };
            let mut prev_c = 0.0;
            for e in 0..n {
                let c = if e + 1 < n { integ.cdf(inner_edges[e], &p, s)? } else { 1.0 };
                let dm = g * (c - prev_c).max(0.0);
                next[s][e] += dm;
                next_split[s][e] += dm * sp_new;
                prev_c = c;
                if c >= 1.0 - 1e-15 {
                    break;
                }
            }
        }
        let rho = marg[t - 1];
        p_fa.push(((below[0] + below[1]) / (rho[0] + rho[1])).clamp(0.0, 1.0));
        p_d.push((below[2] / rho[2]).clamp(0.0, 1.0));
        // renormalise each state's mass to its marginal to offset truncation
        for s in 0..3 {
            let tot: f64 = next[s].iter().sum();
            if tot > 0.0 {
                let k = rho[s] / tot;
                next[s].iter_mut().for_each(|m| *m *= k);
                next_split[s].iter_mut().for_each(|m| *m *= k);
            }
        }
        mass = next;
        split = next_split;
    }
    Ok((p_fa, p_d))
}

/// Monte Carlo pointwise `P_FA(t)`, `P_D(t)` of the exact 3-state statistic.
pub fn simulate_pfa_pd_3state(
    gamma0: f64,
    model: &AffineHmm3,
    horizon: usize,
    n_traj: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rng = seed::rng(seed);
    let log_a = DMatrix::from_fn(3, 3, |i, j| model.a[i][j].ln());
    let mut alice = vec![(0usize, 0usize); horizon];
    let mut eve = vec![(0usize, 0usize); horizon];
    for _ in 0..n_traj {
        let mut f = ForwardState {
            t: 0,
            log_alpha: model.pi.iter().map(|p| p.ln()).collect(),
            log_evidence: 0.0,
            lambda: 0.0,
        };
        let u: f64 = rng.gen();
        let mut s = if u < model.pi[0] {
            0
        } else if u < model.pi[0] + model.pi[1] {
            1
        } else {
            2
        };
        for t in 1..=horizon {
            if t > 1 {
                let u: f64 = rng.gen();
                let row = model.a[s];
                s = if u < row[0] {
                    0
                } else if u < row[0] + row[1] {
                    1
                } else {
                    2
                };
            }
            let (x, y) = model.sample_ells(s, &mut rng);
            f.step_with_loglik(&log_a, &[x, y, 0.0])?;
            let slot = if s == 2 { &mut eve[t - 1] } else { &mut alice[t - 1] };
            slot.0 += 1;
            slot.1 += (f.lambda <= gamma0) as usize;
        }
    }
    let frac = |v: &[(usize, usize)]| v.iter().map(|&(n, k)| k as f64 / n.max(1) as f64).collect();
    Ok((frac(&alice), frac(&eve)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::DEFAULT_A3;

    fn params(t: [f64; 3]) -> BivariateLlrParams {
        BivariateLlrParams {
            m_by_state: [[2.0, 1.0], [0.5, 1.5], [-2.0, -1.5]],
            v: [[1.0, 0.3], [0.3, 0.8]],
            t_weights: t,
            w: [DVector::zeros(0), DVector::zeros(0)],
            kappa: [0.0; 2],
        }
    }

    #[test]
    fn weights_examples() {
        let ds = [[0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5]];
        let t = transition_weights(&[1.0 / 3.0; 3], &ds);
        assert!(t.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn lambda_examples() {
        assert!((lambda_3state(0.0, 0.0, &[1.0 / 3.0; 3]) - 2f64.ln()).abs() < 1e-15);
        let t = [0.6, 0.0, 0.4];
        assert!((lambda_3state(0.7, 100.0, &t) - (0.7 + (0.6f64 / 0.4).ln())).abs() < 1e-12);
        assert_eq!(lambda_3state(0.0, 0.0, &[0.5, 0.5, 0.0]), f64::INFINITY);
    }

    #[test]
    fn equal_alice_means_coincide() {
        let mu0 = DVector::from_vec(vec![1.0, 0.0]);
        let mu2 = DVector::from_vec(vec![-1.0, 0.5]);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7]);
        let p = bivariate_llr_params([&mu0, &mu0, &mu2], &s, &[0.45, 0.45, 0.1], &DEFAULT_A3).unwrap();
        for s in 0..3 {
            assert!((p.m_by_state[s][0] - p.m_by_state[s][1]).abs() < 1e-12);
        }
        assert!((p.v[0][0] - p.v[1][1]).abs() < 1e-12 && (p.v[0][0] - p.v[0][1]).abs() < 1e-12);
        assert!((p.t_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn region_limits_and_reduction() {
        let i = RegionIntegrator::new(RegionOptions::default()).unwrap();
        let p = params([0.4, 0.4, 0.2]);
        for s in 0..3 {
            assert!(i.cdf(60.0, &p, s).unwrap() > 1.0 - 1e-9);
            assert!(i.cdf(-60.0, &p, s).unwrap() < 1e-9);
            assert_eq!(i.cdf(f64::INFINITY, &p, s).unwrap(), 1.0);
        }
        let q = params([0.7, 0.0, 0.3]);
        for g in [-2.0, 0.0, 1.5] {
            let want = norm_cdf((g - (0.7f64 / 0.3).ln() - 2.0) / 1.0);
            assert!((i.cdf(g, &q, 0).unwrap() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn region_cdf_monotone() {
        let p = params([0.3, 0.5, 0.2]);
        let mut prev = 0.0;
        for k in -30..=30 {
            let c = region_cdf_3state(k as f64 * 0.3, &p, 1).unwrap();
            assert!(c >= prev - 1e-12 && (0.0..=1.0).contains(&c));
            prev = c;
        }
    }

    #[test]
    fn region_cdf_against_sampling() {
        let p = params([0.35, 0.4, 0.25]);
        let m = AffineHmm3::from_params(DEFAULT_A3, [0.45, 0.45, 0.1], &p);
        let mut rng = seed::rng(9);
        let n = 100_000;
        for s in 0..3 {
            let xs: Vec<f64> = (0..n)
                .map(|_| {
                    let (x, y) = m.sample_ells(s, &mut rng);
                    lambda_3state(x, y, &p.t_weights)
                })
                .collect();
            for g in [-1.0, 0.0, 1.0, 2.0] {
                let emp = xs.iter().filter(|&&l| l <= g).count() as f64 / n as f64;
                let ana = region_cdf_3state(g, &p, s).unwrap();
                assert!((emp - ana).abs() < 0.006, "s={s} g={g}: {emp} vs {ana}");
            }
        }
    }

    #[test]
    fn delta_examples() {
        let mut p = params([0.5, 0.25, 0.25]);
        p.v = [[0.0; 2]; 2];
        let (m, v) = delta_method_moments(&p, 0);
        assert!((m - lambda_3state(2.0, 1.0, &p.t_weights)).abs() < 1e-15);
        assert_eq!(v, 0.0);
        // balanced: T0 e^x = T1 e^y
        let mut b = params([0.5, 0.5, 0.0]);
        b.m_by_state[0] = [1.0, 1.0];
        b.v = [[1.0, 0.0], [0.0, 1.0]];
        b.t_weights = [0.4, 0.4, 0.2];
        let (_, v) = delta_method_moments(&b, 0);
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lower_threshold_limit_is_zero() {
        let p = params([0.45, 0.45, 0.1]);
        let m = AffineHmm3::from_params(DEFAULT_A3, [0.45, 0.45, 0.1], &p);
        let (fa, d) = pfa_pd_3state(-1e3, &m, 3, &Pfa3Options::default()).unwrap();
        assert!(fa.iter().chain(&d).all(|&x| x < 1e-12));
    }
}
