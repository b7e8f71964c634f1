//! Spoofed CSI streams for Eve: her own channel (naive), an online Gaussian
//! mimic of eavesdropped Alice CSI (moment-matching), or replay of a stored
//! trace such as generator output.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::auth::CsiSource;
use crate::channel::{ChannelParams, ChannelSim, CsiObservation, Identity};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::seed::{self, tag};
use crate::trace::CsiTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayPolicy {
    #[default]
    Sequential,
    Loop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SpooferKind {
    Naive,
    MomentMatching {
        beta_e: f64,
        /// Noise variance on Eve's eavesdropped copy of Alice's CSI.
        observation_noise: f64,
    },
    Trace {
        path: PathBuf,
        #[serde(default)]
        policy: ReplayPolicy,
    },
}

impl SpooferKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            SpooferKind::Naive | SpooferKind::Trace { .. } => Ok(()),
            SpooferKind::MomentMatching {
                beta_e,
                observation_noise,
            } => {
                if !(0.0..1.0).contains(beta_e) {
                    return Err(Error::invalid(format!("beta_e must lie in [0, 1), got {beta_e}")));
                }
                if !(*observation_noise >= 0.0) {
                    return Err(Error::invalid("eavesdropping noise variance must be non-negative"));
                }
                Ok(())
            }
        }
    }

    pub fn needs_eavesdropping(&self) -> bool {
        matches!(self, SpooferKind::MomentMatching { .. })
    }
}

/// A stored spoofing trace, non-empty with uniform dimensions.
pub type SpoofTrace = CsiTrace;

pub fn load_trace(path: impl AsRef<Path>) -> Result<SpoofTrace> {
    let trace = CsiTrace::load(path.as_ref())?;
    if trace.records.is_empty() {
        return Err(Error::Parse {
            path: path.as_ref().to_path_buf(),
            line: 1,
            message: "spoofing trace has no records".into(),
        });
    }
    Ok(trace)
}

/// Entrywise complex Gaussian fitted by EMA: mean and `E|h - mean|^2` per entry.
/// The first `1/(1-beta)` samples use a running average so the estimate is not
/// anchored to the first draw.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatcher {
    pub beta_e: f64,
    pub mean: CMatrix,
    pub var: DMatrix<f64>,
    pub n_seen: usize,
}

impl MomentMatcher {
    pub fn new(m_r: usize, m_t: usize, beta_e: f64) -> Self {
        Self {
            beta_e,
            mean: CMatrix::zeros(m_r, m_t),
            var: DMatrix::zeros(m_r, m_t),
            n_seen: 0,
        }
    }

    pub fn update(&mut self, h: &CMatrix) -> Result<()> {
        if h.shape() != self.mean.shape() {
            return Err(Error::dims(
                format!("{}x{}", self.mean.nrows(), self.mean.ncols()),
                format!("{}x{}", h.nrows(), h.ncols()),
            ));
        }
        self.n_seen += 1;
        let w = (1.0 / self.n_seen as f64).max(1.0 - self.beta_e);
        for (i, (m, v)) in self.mean.iter_mut().zip(self.var.iter_mut()).enumerate() {
            let x = h[i];
            *m = *m * (1.0 - w) + x * w;
            *v = *v * (1.0 - w) + (x - *m).norm_sqr() * w;
        }
        Ok(())
    }

    /// Enough samples to sample from the fit.
    pub fn ready(&self) -> bool {
        self.n_seen >= self.mean.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CMatrix {
        CMatrix::from_fn(self.mean.nrows(), self.mean.ncols(), |i, j| {
            let s = (self.var[(i, j)] / 2.0).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            self.mean[(i, j)] + C64::new(s * re, s * im)
        })
    }
}

/// Eve's transmitter. Output observations are stamped with a running slot
/// counter so they line up with Alice's time axis.
#[derive(Debug, Clone)]
pub struct Spoofer {
    kind: SpooferKind,
    own: ChannelSim,
    matcher: Option<MomentMatcher>,
    trace: Option<(SpoofTrace, usize)>,
    rng: seed::Rng,
    t: u64,
}

impl Spoofer {
    pub fn new(kind: SpooferKind, params: &ChannelParams, seed: u64) -> Result<Self> {
        kind.validate()?;
        let own = ChannelSim::new(params.clone(), Identity::Eve, seed::derive(seed, &[tag::EVE]))?;
        let matcher = match &kind {
            SpooferKind::MomentMatching { beta_e, .. } => Some(MomentMatcher::new(params.m_r, params.m_t, *beta_e)),
            _ => None,
        };
        let trace = match &kind {
            SpooferKind::Trace { path, .. } => {
                let tr = load_trace(path)?;
                if (tr.header.m_r, tr.header.m_t) != (params.m_r, params.m_t) {
                    return Err(Error::dims(
                        format!("{}x{}", params.m_r, params.m_t),
                        format!("{}x{}", tr.header.m_r, tr.header.m_t),
                    ));
                }
                Some((tr, 0))
            }
            _ => None,
        };
        Ok(Self {
            kind,
            own,
            matcher,
            trace,
            rng: seed::rng(seed::derive(seed, &[tag::SPOOFER])),
            t: 0,
        })
    }

    /// Replay an in-memory trace.
    pub fn from_trace(trace: SpoofTrace, policy: ReplayPolicy, params: &ChannelParams, seed: u64) -> Result<Self> {
        if trace.records.is_empty() {
            return Err(Error::invalid("spoofing trace has no records"));
        }
        let mut s = Self::new(SpooferKind::Naive, params, seed)?;
        s.kind = SpooferKind::Trace {
            path: PathBuf::from("<memory>"),
            policy,
        };
        s.trace = Some((trace, 0));
        Ok(s)
    }

    /// Set the slot counter; the next output is stamped `t + 1`.
    pub fn with_time(mut self, t: u64) -> Self {
        self.t = t;
        self
    }

    /// Start trace replay at record `cursor` (wrapped for looping replay).
    pub fn set_cursor(&mut self, cursor: usize) {
        if let (Some((tr, c)), SpooferKind::Trace { policy, .. }) = (self.trace.as_mut(), &self.kind) {
            *c = match policy {
                ReplayPolicy::Loop => cursor % tr.records.len(),
                ReplayPolicy::Sequential => cursor,
            };
        }
    }

    pub fn kind(&self) -> &SpooferKind {
        &self.kind
    }

    pub fn matcher(&self) -> Option<&MomentMatcher> {
        self.matcher.as_ref()
    }

    /// Feed one eavesdropped observation of Alice's channel.
    pub fn eavesdrop(&mut self, obs: &CsiObservation) -> Result<()> {
        match self.matcher.as_mut() {
            Some(m) => m.update(&obs.h_hat),
            None => Ok(()),
        }
    }

    pub fn next_spoofed_csi(&mut self, eavesdropped: Option<&CsiObservation>) -> Result<CsiObservation> {
        if let Some(obs) = eavesdropped {
            self.eavesdrop(obs)?;
        }
        self.t += 1;
        let h_hat = match (&self.kind, self.matcher.as_ref(), self.trace.as_mut()) {
            (SpooferKind::MomentMatching { .. }, Some(m), _) if m.ready() => {
                // keep Eve's own channel advancing so a fallback resumes smoothly
                self.own.step();
                m.sample(&mut self.rng)
            }
            (SpooferKind::Trace { policy, .. }, _, Some((tr, cursor))) => {
                if *cursor >= tr.records.len() {
                    match policy {
                        ReplayPolicy::Sequential => return Err(Error::TraceExhausted(tr.records.len())),
                        ReplayPolicy::Loop => *cursor = 0,
                    }
                }
                let h = tr.records[*cursor].h_hat.clone();
                *cursor += 1;
                h
            }
            _ => self.own.next_observation().h_hat,
        };
        Ok(CsiObservation { t: self.t, h_hat })
    }
}

/// Eve's stream as Bob sees it, optionally fed by an eavesdropping view of
/// Alice's channel each slot.
pub struct SpoofedStream {
    pub spoofer: Spoofer,
    pub alice: Option<ChannelSim>,
    pub eavesdrop_noise: f64,
}

impl CsiSource for SpoofedStream {
    fn next_csi(&mut self) -> Result<CsiObservation> {
        let obs = match self.alice.as_mut() {
            Some(sim) => Some(sim.next_observation_with_noise(self.eavesdrop_noise)?),
            None => None,
        };
        self.spoofer.next_spoofed_csi(obs.as_ref())
    }
}
