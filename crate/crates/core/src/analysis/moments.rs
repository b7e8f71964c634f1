use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::encoder::EmissionStats;
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadFormMoments {
    pub mean: f64,
    pub variance: f64,
}

fn check_square(name: &str, m: &DMatrix<f64>, d: usize) -> Result<()> {
    if m.shape() != (d, d) {
        return Err(Error::dims(format!("{name} {d}x{d}"), format!("{}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

/// Moments of `(z - mu_a)^T A (z - mu_a)` for `z ~ N(mu_b, sigma_b)`.
pub fn quad_form_moments(
    a_mat: &DMatrix<f64>,
    mu_a: &DVector<f64>,
    mu_b: &DVector<f64>,
    sigma_b: &DMatrix<f64>,
) -> Result<QuadFormMoments> {
    let d = mu_a.len();
    if mu_b.len() != d {
        return Err(Error::dims(d, mu_b.len()));
    }
    check_square("A", a_mat, d)?;
    check_square("Sigma_B", sigma_b, d)?;
    let delta = mu_b - mu_a;
    let a_s = a_mat * sigma_b;
    let a_delta = a_mat * &delta;
    let mean = a_s.trace() + delta.dot(&a_delta);
    let variance = 2.0 * (&a_s * &a_s).trace() + 4.0 * a_delta.dot(&(sigma_b * &a_delta));
    Ok(QuadFormMoments {
        mean,
        variance: variance.max(0.0),
    })
}

/// `Cov(Q_1, Q_2)` for `Q_i = (z - a_i)^T A_i (z - a_i)` under `z ~ N(mu, sigma)`.
pub fn quad_form_covariance(
    a1: &DMatrix<f64>,
    c1: &DVector<f64>,
    a2: &DMatrix<f64>,
    c2: &DVector<f64>,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> f64 {
    let d1 = mu - c1;
    let d2 = mu - c2;
    let s_a2 = sigma * a2;
    let tr = (a1 * sigma * a2 * sigma).trace();
    2.0 * tr + 4.0 * (a1 * &d1).dot(&(&s_a2 * &d2))
}

/// Mean and variance of `l = log p0(z) - log p1(z)` when `z` is drawn from state `under_state`.
pub fn llr_moments(stats0: &EmissionStats, stats1: &EmissionStats, under_state: usize) -> Result<(f64, f64)> {
    if stats0.dim() != stats1.dim() {
        return Err(Error::dims(stats0.dim(), stats1.dim()));
    }
    let (s0, s1) = (stats0.regularized_sigma(), stats1.regularized_sigma());
    let f0 = SpdFactor::new(&s0).map_err(|_| Error::not_pd("state 0 covariance"))?;
    let f1 = SpdFactor::new(&s1).map_err(|_| Error::not_pd("state 1 covariance"))?;
    let (p0, p1) = (f0.inverse(), f1.inverse());
    let (mu_k, sig_k) = match under_state {
        0 => (&stats0.mu, &s0),
        1 => (&stats1.mu, &s1),
        k => return Err(Error::invalid(format!("state must be 0 or 1, got {k}"))),
    };
    let q0 = quad_form_moments(&p0, &stats0.mu, mu_k, sig_k)?;
    let q1 = quad_form_moments(&p1, &stats1.mu, mu_k, sig_k)?;
    let cov = quad_form_covariance(&p0, &stats0.mu, &p1, &stats1.mu, mu_k, sig_k);
    let mean = 0.5 * (f1.log_det() - f0.log_det() - q0.mean + q1.mean);
    let var = 0.25 * (q0.variance + q1.variance - 2.0 * cov);
    Ok((mean, var.max(0.0)))
}

/// Equal-covariance LLR `l(z) = w^T z + kappa`, with `w = Sigma^{-1}(mu0 - mu1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineLlrParams {
    pub w: DVector<f64>,
    pub kappa: f64,
    pub m0: f64,
    pub m1: f64,
    pub v: f64,
}

impl AffineLlrParams {
    pub fn eval(&self, z: &DVector<f64>) -> f64 {
        self.w.dot(z) + self.kappa
    }

    pub fn mean(&self, state: usize) -> f64 {
        if state == 0 {
            self.m0
        } else {
            self.m1
        }
    }
}

pub fn affine_llr_params(mu0: &DVector<f64>, mu1: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<AffineLlrParams> {
    let d = mu0.len();
    if mu1.len() != d {
        return Err(Error::dims(d, mu1.len()));
    }
    check_square("Sigma", sigma, d)?;
    let f = SpdFactor::new(sigma).map_err(|_| Error::not_pd("shared covariance"))?;
    let w = f.solve(&(mu0 - mu1));
    let q1 = f.quad_form_inv(mu1.as_slice());
    let q0 = f.quad_form_inv(mu0.as_slice());
    let kappa = 0.5 * (q1 - q0);
    let v = w.dot(&(sigma * &w));
    Ok(AffineLlrParams {
        m0: w.dot(mu0) + kappa,
        m1: w.dot(mu1) + kappa,
        w,
        kappa,
        v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::instantaneous_llr;
    use crate::encoder::Embedding;
    use crate::linalg::sample_mvn;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_spd(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let b = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        &b * b.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5
    }

    fn random_vec(d: usize, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn chi_square_values() {
        let i16 = DMatrix::identity(16, 16);
        let z = DVector::zeros(16);
        let m = quad_form_moments(&i16, &z, &z, &i16).unwrap();
        assert_eq!((m.mean, m.variance), (16.0, 32.0));
        let i2 = DMatrix::identity(2, 2);
        let m = quad_form_moments(&i2, &DVector::zeros(2), &DVector::from_vec(vec![1.0, 0.0]), &i2).unwrap();
        assert_eq!((m.mean, m.variance), (3.0, 8.0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let i = DMatrix::identity(3, 3);
        assert!(quad_form_moments(&i, &DVector::zeros(2), &DVector::zeros(2), &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn quad_form_sampling_oracle() {
        let mut rng = crate::seed::rng(17);
        let d = 8;
        let a = random_spd(d, &mut rng);
        let (mu_a, mu_b) = (random_vec(d, &mut rng), random_vec(d, &mut rng) * 0.5);
        let s = random_spd(d, &mut rng);
        let m = quad_form_moments(&a, &mu_a, &mu_b, &s).unwrap();
        let l = s.clone().cholesky().unwrap().l();
        let n = 200_000;
        let qs: Vec<f64> = (0..n)
            .map(|_| {
                let dz = sample_mvn(&mu_b, &l, &mut rng) - &mu_a;
                dz.dot(&(&a * &dz))
            })
            .collect();
        let (mean, var) = mean_var(&qs);
        assert!((mean - m.mean).abs() < 3.0 * (m.variance / n as f64).sqrt());
        // variance of the sample variance, approximated via the fourth moment
        let m4 = qs.iter().map(|q| (q - mean).powi(4)).sum::<f64>() / n as f64;
        let se_var = ((m4 - var * var) / n as f64).sqrt();
        assert!((var - m.variance).abs() < 3.0 * se_var, "{var} vs {}", m.variance);
    }

    fn mean_var(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn affine_scalar_example() {
        let p = affine_llr_params(
            &DVector::from_vec(vec![0.0]),
            &DVector::from_vec(vec![1.0]),
            &DMatrix::identity(1, 1),
        )
        .unwrap();
        assert_eq!((p.w[0], p.kappa, p.m0, p.m1, p.v), (-1.0, 0.5, 0.5, -0.5, 1.0));
        let same = affine_llr_params(&DVector::from_vec(vec![2.0]), &DVector::from_vec(vec![2.0]), &DMatrix::identity(1, 1))
            .unwrap();
        assert_eq!((same.w[0], same.kappa, same.m0, same.m1), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn affine_is_an_identity() {
        let mut rng = crate::seed::rng(3);
        let d = 8;
        let s = random_spd(d, &mut rng);
        let (mu0, mu1) = (random_vec(d, &mut rng), random_vec(d, &mut rng));
        let p = affine_llr_params(&mu0, &mu1, &s).unwrap();
        let mut e0 = EmissionStats::new(mu0.clone(), s.clone()).unwrap();
        let mut e1 = EmissionStats::new(mu1.clone(), s.clone()).unwrap();
        e0.reg_eps = 0.0;
        e1.reg_eps = 0.0;
        for _ in 0..100 {
            let z = random_vec(d, &mut rng) * 2.0;
            let direct = instantaneous_llr(&Embedding { t: 0, z: z.clone() }, &e0, &e1).unwrap();
            assert!((p.eval(&z) - direct).abs() < 1e-9);
        }
        assert!(p.m0 > 0.0 && p.m1 < 0.0);
        assert!((p.m0 - p.v / 2.0).abs() < 1e-9 && (p.m1 + p.v / 2.0).abs() < 1e-9);
        for k in 0..2 {
            let (m, v) = llr_moments(&e0, &e1, k).unwrap();
            assert!((m - p.mean(k)).abs() < 1e-9, "{m} vs {}", p.mean(k));
            assert!((v - p.v).abs() < 1e-9);
        }
    }

    #[test]
    fn llr_moments_degenerate_and_sampled() {
        let mut rng = crate::seed::rng(4);
        let d = 4;
        let e0 = EmissionStats::new(random_vec(d, &mut rng), random_spd(d, &mut rng)).unwrap();
        assert_eq!(llr_moments(&e0, &e0, 0).unwrap(), (0.0, 0.0));
        let e1 = EmissionStats::new(random_vec(d, &mut rng) * 0.5, random_spd(d, &mut rng)).unwrap();
        for k in 0..2 {
            let (m, v) = llr_moments(&e0, &e1, k).unwrap();
            let src = if k == 0 { &e0 } else { &e1 };
            let l = src.regularized_sigma().cholesky().unwrap().l();
            let n = 200_000;
            let d0 = crate::auth::GaussianDensity::new(&e0).unwrap();
            let d1 = crate::auth::GaussianDensity::new(&e1).unwrap();
            let xs: Vec<f64> = (0..n)
                .map(|_| {
                    let z = sample_mvn(&src.mu, &l, &mut rng);
                    d0.log_pdf(&z).unwrap() - d1.log_pdf(&z).unwrap()
                })
                .collect();
            let (em, ev) = mean_var(&xs);
            let m4 = xs.iter().map(|q| (q - em).powi(4)).sum::<f64>() / n as f64;
            assert!((em - m).abs() < 3.0 * (v / n as f64).sqrt(), "state {k}: {em} vs {m}");
            assert!((ev - v).abs() < 3.0 * ((m4 - ev * ev) / n as f64).sqrt(), "state {k}: {ev} vs {v}");
        }
    }
}
