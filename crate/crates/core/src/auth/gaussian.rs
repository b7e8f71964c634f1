use nalgebra::DVector;

use crate::encoder::{EmissionStats, Embedding};
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::math::LN_2PI;

/// Multivariate normal with a cached Cholesky factor of the regularised covariance.
#[derive(Debug, Clone)]
pub struct GaussianDensity {
    mu: DVector<f64>,
    factor: SpdFactor,
    norm: f64,
}

impl GaussianDensity {
    pub fn new(stats: &EmissionStats) -> Result<Self> {
        let factor = SpdFactor::new(&stats.regularized_sigma()).map_err(|_| {
            Error::not_pd(format!("emission covariance of state {}", stats.state_label))
        })?;
        let d = stats.dim() as f64;
        let norm = -0.5 * (d * LN_2PI + factor.log_det());
        Ok(Self {
            mu: stats.mu.clone(),
            factor,
            norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn log_det(&self) -> f64 {
        self.factor.log_det()
    }

    pub fn log_pdf(&self, z: &DVector<f64>) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::dims(self.dim(), z.len()));
        }
        let dz = z - &self.mu;
        Ok(self.norm - 0.5 * self.factor.quad_form_inv(dz.as_slice()))
    }
}

/// `log N(z; mu, sigma + reg_eps I)` through a Cholesky factorisation.
pub fn gaussian_log_pdf(z: &Embedding, stats: &EmissionStats) -> Result<f64> {
    GaussianDensity::new(stats)?.log_pdf(&z.z)
}

/// `log p(z | H0) - log p(z | H1)`.
pub fn instantaneous_llr(z: &Embedding, stats0: &EmissionStats, stats1: &EmissionStats) -> Result<f64> {
    Ok(gaussian_log_pdf(z, stats0)? - gaussian_log_pdf(z, stats1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn stats(mu: &[f64], sigma: DMatrix<f64>) -> EmissionStats {
        let mut s = EmissionStats::new(DVector::from_row_slice(mu), sigma).unwrap();
        s.reg_eps = 0.0;
        s
    }

    fn emb(v: &[f64]) -> Embedding {
        Embedding { t: 0, z: DVector::from_row_slice(v) }
    }

    #[test]
    fn standard_normal_mode() {
        let s = stats(&[0.3], DMatrix::identity(1, 1));
        let v = gaussian_log_pdf(&emb(&[0.3]), &s).unwrap();
        assert!((v + 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn two_dim_hand_value() {
        let s = stats(&[0.0, 0.0], DMatrix::identity(2, 2));
        let v = gaussian_log_pdf(&emb(&[1.0, 1.0]), &s).unwrap();
        assert!((v - (-(2.0 * std::f64::consts::PI).ln() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn matches_explicit_inverse_reference() {
        let mut rng = crate::seed::rng(4);
        let d = 16;
        let b = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
        let sigma = &b * b.transpose() + DMatrix::identity(d, d) * 0.5;
        let mu = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
        let z = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
        let s = stats(mu.as_slice(), sigma.clone());
        let inv = sigma.clone().try_inverse().unwrap();
        let dz = &z - &mu;
        let q = (dz.transpose() * inv * &dz)[0];
        let reference = -0.5 * (d as f64 * LN_2PI + sigma.determinant().ln() + q);
        let v = gaussian_log_pdf(&Embedding { t: 0, z }, &s).unwrap();
        assert!((v - reference).abs() < 1e-8, "{v} vs {reference}");
    }

    #[test]
    fn non_pd_covariance_rejected() {
        let s = stats(&[0.0, 0.0], DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(matches!(
            gaussian_log_pdf(&emb(&[0.0, 0.0]), &s),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn llr_examples() {
        let s0 = stats(&[0.0], DMatrix::identity(1, 1));
        let s1 = stats(&[1.0], DMatrix::identity(1, 1));
        assert!(instantaneous_llr(&emb(&[0.5]), &s0, &s1).unwrap().abs() < 1e-15);
        // Difference of the two log-densities at z = 0: -0 + 0.5.
        assert!((instantaneous_llr(&emb(&[0.0]), &s0, &s1).unwrap() - 0.5).abs() < 1e-15);
        for z in [-3.0, 0.1, 7.0] {
            assert_eq!(instantaneous_llr(&emb(&[z]), &s0, &s0).unwrap(), 0.0);
        }
    }

    #[test]
    fn llr_matches_explicit_expression() {
        let s0 = stats(&[0.0, 1.0], DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]));
        let s1 = stats(&[0.5, -1.0], DMatrix::from_row_slice(2, 2, &[1.0, -0.2, -0.2, 0.7]));
        let z = DVector::from_row_slice(&[0.7, 0.2]);
        let q = |s: &EmissionStats| {
            let dz = &z - &s.mu;
            (dz.transpose() * s.sigma.clone().try_inverse().unwrap() * dz)[0]
        };
        let explicit = 0.5 * ((s1.sigma.determinant() / s0.sigma.determinant()).ln() - q(&s0) + q(&s1));
        let got = instantaneous_llr(&Embedding { t: 0, z: z.clone() }, &s0, &s1).unwrap();
        assert!((got - explicit).abs() < 1e-12);
    }
}
