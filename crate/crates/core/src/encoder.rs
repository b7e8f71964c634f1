//! CSI embeddings and Gaussian emission statistics.
//!
//! The encoder is a fixed, seeded projection with orthonormal rows applied to
//! the flattened CSI. In real-imag mode the map is linear, so a Gaussian
//! channel gives exactly Gaussian embeddings.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::StandardNormal;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::CsiObservation;
use crate::error::{Error, Result};
use crate::seed;
use crate::trace::JsonLinesWriter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    #[default]
    RealImag,
    MagPhase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub d: usize,
    pub mode: FeatureMode,
    pub projection: DMatrix<f64>,
    pub seed: u64,
    m_r: usize,
    m_t: usize,
}

impl EncoderSpec {
    /// Seeded random projection with orthonormal rows (Gaussian matrix + QR).
    pub fn random(m_r: usize, m_t: usize, d: usize, mode: FeatureMode, seed: u64) -> Result<Self> {
        let n = 2 * m_r * m_t;
        if d == 0 || d > n {
            return Err(Error::invalid(format!(
                "embedding dimension must lie in [1, {n}], got {d}"
            )));
        }
        let mut rng = seed::rng(seed);
        let g = DMatrix::<f64>::from_fn(n, d, |_, _| rng.sample(StandardNormal));
        let qr = g.qr();
        let mut q = qr.q();
        // Fix column signs so the factorisation is unique.
        let r = qr.r();
        for j in 0..d {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        Ok(Self {
            d,
            mode,
            projection: q.transpose(),
            seed,
            m_r,
            m_t,
        })
    }

    /// Lossless encoder: `d = 2 m_r m_t` and an identity projection.
    pub fn identity(m_r: usize, m_t: usize, mode: FeatureMode) -> Self {
        let n = 2 * m_r * m_t;
        Self {
            d: n,
            mode,
            projection: DMatrix::identity(n, n),
            seed: 0,
            m_r,
            m_t,
        }
    }

    pub fn input_dim(&self) -> usize {
        2 * self.m_r * self.m_t
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m_r, self.m_t)
    }

    /// Max absolute deviation of `P P^T` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let pp = &self.projection * self.projection.transpose();
        (pp - DMatrix::<f64>::identity(self.d, self.d)).amax()
    }

    pub fn flatten(&self, obs: &CsiObservation) -> Result<DVector<f64>> {
        let h = &obs.h_hat;
        if h.shape() != (self.m_r, self.m_t) {
            return Err(Error::dims(
                format!("{}x{}", self.m_r, self.m_t),
                format!("{}x{}", h.nrows(), h.ncols()),
            ));
        }
        let n = self.m_r * self.m_t;
        let mut x = DVector::zeros(2 * n);
        for i in 0..self.m_r {
            for j in 0..self.m_t {
                let k = i * self.m_t + j;
                let c = h[(i, j)];
                match self.mode {
                    FeatureMode::RealImag => {
                        x[k] = c.re;
                        x[n + k] = c.im;
                    }
                    FeatureMode::MagPhase => {
                        x[k] = c.norm();
                        x[n + k] = c.arg();
                    }
                }
            }
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub t: u64,
    pub z: DVector<f64>,
}

pub fn encode(obs: &CsiObservation, spec: &EncoderSpec) -> Result<Embedding> {
    let x = spec.flatten(obs)?;
    Ok(Embedding {
        t: obs.t,
        z: &spec.projection * x,
    })
}

pub const DEFAULT_REG_EPS: f64 = 1e-6;

/// Gaussian emission statistics for one hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub beta: f64,
    pub reg_eps: f64,
    pub state_label: usize,
}

impl EmissionStats {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if sigma.shape() != (d, d) {
            return Err(Error::dims(format!("{d}x{d}"), format!("{}x{}", sigma.nrows(), sigma.ncols())));
        }
        Ok(Self {
            mu,
            sigma,
            beta: 0.995,
            reg_eps: DEFAULT_REG_EPS,
            state_label: 0,
        })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.state_label = label;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `sigma + reg_eps * I`, the covariance used for likelihood evaluation.
    pub fn regularized_sigma(&self) -> DMatrix<f64> {
        let mut s = self.sigma.clone();
        for i in 0..s.nrows() {
            s[(i, i)] += self.reg_eps;
        }
        s
    }

    /// In-place EMA step with an explicit forgetting factor. The covariance
    /// update is centred on the already-updated mean.
    pub fn update_ema(&mut self, z: &DVector<f64>, beta: f64) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::dims(self.dim(), z.len()));
        }
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::invalid(format!("forgetting factor must lie in [0, 1), got {beta}")));
        }
        let w = 1.0 - beta;
        self.mu *= beta;
        self.mu.axpy(w, z, 1.0);
        let dz = z - &self.mu;
        self.sigma *= beta;
        self.sigma.ger(w, &dz, &dz, 1.0);
        Ok(())
    }
}

/// EMA update with the statistics' own forgetting factor.
pub fn ema_update(stats: &EmissionStats, z: &Embedding) -> Result<EmissionStats> {
    let mut next = stats.clone();
    next.update_ema(&z.z, stats.beta)?;
    Ok(next)
}

/// Sample mean and (1/n) sample covariance plus `reg_eps * I`.
pub fn fit_stats_batch(embeddings: &[Embedding], reg_eps: f64) -> Result<EmissionStats> {
    let Some(first) = embeddings.first() else {
        return Err(Error::invalid("cannot fit emission statistics from zero samples"));
    };
    let d = first.z.len();
    let n = embeddings.len();
    if n < d + 1 {
        return Err(Error::invalid(format!(
            "need at least d + 1 = {} samples to fit a {d}-dimensional Gaussian, got {n}",
            d + 1
        )));
    }
    if !(reg_eps >= 0.0) {
        return Err(Error::invalid("reg_eps must be non-negative"));
    }
    let mut mu = DVector::zeros(d);
    for e in embeddings {
        if e.z.len() != d {
            return Err(Error::dims(d, e.z.len()));
        }
        mu += &e.z;
    }
    mu /= n as f64;
    let mut sigma = DMatrix::zeros(d, d);
    for e in embeddings {
        let dz = &e.z - &mu;
        sigma.ger(1.0, &dz, &dz, 1.0);
    }
    sigma /= n as f64;
    for i in 0..d {
        sigma[(i, i)] += reg_eps;
    }
    Ok(EmissionStats {
        mu,
        sigma,
        beta: 0.995,
        reg_eps,
        state_label: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingHeader {
    pub version: u32,
    pub d: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub t: u64,
    pub z: Vec<f64>,
    pub state_label: usize,
}

pub fn export_embeddings(path: impl AsRef<Path>, label: &str, items: &[(Embedding, usize)]) -> Result<()> {
    let d = items.first().map(|(e, _)| e.z.len()).unwrap_or(0);
    let mut w = JsonLinesWriter::create(path)?;
    w.write(&EmbeddingHeader {
        version: crate::trace::TRACE_VERSION,
        d,
        label: label.to_string(),
    })?;
    for (e, state) in items {
        if e.z.len() != d {
            return Err(Error::dims(d, e.z.len()));
        }
        w.write(&EmbeddingRecord {
            t: e.t,
            z: e.z.iter().copied().collect(),
            state_label: *state,
        })?;
    }
    w.finish()?;
    Ok(())
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<(EmbeddingHeader, Vec<(Embedding, usize)>)> {
    let path = path.as_ref();
    let (header, raw): (EmbeddingHeader, Vec<(usize, EmbeddingRecord)>) =
        crate::trace::read_json_lines(path)?;
    let mut out = Vec::with_capacity(raw.len());
    for (line, r) in raw {
        if r.z.len() != header.d {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} embedding entries, got {}", header.d, r.z.len()),
            });
        }
        out.push((
            Embedding {
                t: r.t,
                z: DVector::from_vec(r.z),
            },
            r.state_label,
        ));
    }
    Ok((header, out))
}
