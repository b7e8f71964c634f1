//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Exponential correlation matrix with entries `r^|i-j|`.
pub fn exp_correlation_matrix(n: usize, r: f64) -> Result<CMatrix> {
    if n == 0 {
        return Err(Error::invalid("antenna count must be at least 1"));
    }
    if !(0.0..1.0).contains(&r) {
        return Err(Error::invalid(format!(
            "correlation coefficient must lie in [0, 1), got {r}"
        )));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| {
        C64::new(r.powi((i as i32 - j as i32).abs()), 0.0)
    }))
}

/// Principal square root of a Hermitian positive semi-definite matrix.
pub fn hermitian_sqrt(m: &CMatrix) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::dims("square matrix", format!("{}x{}", m.nrows(), m.ncols())));
    }
    let eig = m.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut sqrt_vals = DVector::<f64>::zeros(eig.eigenvalues.len());
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -1e-10 * scale {
            return Err(Error::not_pd(format!("negative eigenvalue {lambda:e}")));
        }
        sqrt_vals[i] = lambda.max(0.0).sqrt();
    }
    let v = &eig.eigenvectors;
    let d = CMatrix::from_diagonal(&sqrt_vals.map(|s| C64::new(s, 0.0)));
    Ok(v * d * v.adjoint())
}

/// Matrix of iid circularly-symmetric complex Gaussians with per-entry variance `var`.
pub fn complex_normal_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    var: f64,
    rng: &mut R,
) -> CMatrix {
    let s = (var / 2.0).sqrt();
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(s * re, s * im)
    })
}

pub fn frobenius_norm_sq(m: &CMatrix) -> f64 {
    m.iter().map(|c| c.norm_sqr()).sum()
}

/// Row-major flattening of a complex matrix into (re, im) arrays.
pub fn to_row_major(m: &CMatrix) -> (Vec<f64>, Vec<f64>) {
    let mut re = Vec::with_capacity(m.len());
    let mut im = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            re.push(m[(i, j)].re);
            im.push(m[(i, j)].im);
        }
    }
    (re, im)
}

pub fn from_row_major(rows: usize, cols: usize, re: &[f64], im: &[f64]) -> CMatrix {
    CMatrix::from_fn(rows, cols, |i, j| C64::new(re[i * cols + j], im[i * cols + j]))
}

/// Cholesky factor of a symmetric positive-definite matrix with its log-determinant.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: DMatrix<f64>,
    log_det: f64,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dims("square matrix", format!("{}x{}", m.nrows(), m.ncols())));
        }
        let chol = m
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { context: None })?;
        let l = chol.unpack();
        let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::not_pd("non-finite log-determinant"));
        }
        Ok(Self { l, log_det })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `x^T M^{-1} x` via one forward substitution.
    pub fn quad_form_inv(&self, x: &[f64]) -> f64 {
        let n = self.l.nrows();
        debug_assert_eq!(x.len(), n);
        let mut y = [0.0f64; 64];
        let mut heap;
        let y: &mut [f64] = if n <= 64 {
            &mut y[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        let mut acc = 0.0;
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            let yi = s / self.l[(i, i)];
            y[i] = yi;
            acc += yi * yi;
        }
        acc
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self
            .l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal");
        self.l
            .transpose()
            .solve_upper_triangular(&y)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            inv.set_column(j, &self.solve(&e));
        }
        inv
    }
}

/// Draw `mean + L * n` with `n` standard normal.
pub fn sample_mvn<R: Rng + ?Sized>(mean: &DVector<f64>, lower: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let n = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + lower * n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn exp_correlation_zero_is_identity() {
        let r = exp_correlation_matrix(3, 0.0).unwrap();
        assert_eq!(r, CMatrix::identity(3, 3));
    }

    #[test]
    fn exp_correlation_two_by_two() {
        let r = exp_correlation_matrix(2, 0.5).unwrap();
        assert_eq!(r[(0, 1)], C64::new(0.5, 0.0));
        assert_eq!(r[(1, 0)], C64::new(0.5, 0.0));
        assert_eq!(r[(1, 1)], C64::new(1.0, 0.0));
    }

    #[test]
    fn exp_correlation_is_positive_definite() {
        // Independent check through the real symmetric eigen-solver.
        let r = exp_correlation_matrix(4, 0.7).unwrap();
        let real = r.map(|c| c.re);
        let min = real.symmetric_eigenvalues().min();
        assert!(min > 0.0, "smallest eigenvalue {min}");
        // Closed form for the Kac-Murdock-Szego matrix: eigenvalues lie in
        // [(1-r)/(1+r), (1+r)/(1-r)].
        assert!(min >= 0.3 / 1.7 - 1e-12);
    }

    #[test]
    fn exp_correlation_rejects_out_of_range() {
        assert!(exp_correlation_matrix(3, 1.0).is_err());
        assert!(exp_correlation_matrix(3, -0.1).is_err());
        assert!(exp_correlation_matrix(0, 0.1).is_err());
    }

    #[test]
    fn hermitian_sqrt_squares_back() {
        let r = exp_correlation_matrix(4, 0.6).unwrap();
        let s = hermitian_sqrt(&r).unwrap();
        let back = &s * &s;
        assert!((back - &r).norm() < 1e-12);
        assert!((s.adjoint() - &s).norm() < 1e-12);
    }

    #[test]
    fn spd_factor_matches_explicit_inverse() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let f = SpdFactor::new(&m).unwrap();
        let x = [0.3, -1.2, 2.0];
        let inv = m.clone().try_inverse().unwrap();
        let xv = DVector::from_row_slice(&x);
        let explicit = (xv.transpose() * &inv * &xv)[0];
        assert!((f.quad_form_inv(&x) - explicit).abs() < 1e-12);
        assert!((f.log_det() - m.determinant().ln()).abs() < 1e-12);
        assert!((f.inverse() - inv).norm() < 1e-12);
    }

    #[test]
    fn complex_normal_splits_variance() {
        let mut rng = seed::rng(3);
        let m = complex_normal_matrix(200, 200, 2.0, &mut rng);
        let n = m.len() as f64;
        let re_var = m.iter().map(|c| c.re * c.re).sum::<f64>() / n;
        let im_var = m.iter().map(|c| c.im * c.im).sum::<f64>() / n;
        assert!((re_var - 1.0).abs() < 0.02);
        assert!((im_var - 1.0).abs() < 0.02);
    }

    #[test]
    fn row_major_round_trip() {
        let m = CMatrix::from_fn(2, 3, |i, j| C64::new(i as f64, j as f64 + 0.5));
        let (re, im) = to_row_major(&m);
        assert_eq!(re, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(from_row_major(2, 3, &re, &im), m);
    }
}
