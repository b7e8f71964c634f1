use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{BlockageInterval, ChannelSim, CsiObservation};
use crate::encoder::{encode, EncoderSpec};
use crate::error::{Error, Result};
use crate::trace::JsonLinesWriter;

use super::gaussian::GaussianDensity;
use super::hmm::{ForwardState, HmmModel};
use super::sprt::{decide, Decision, DecisionThresholds, Verdict};

/// Anything that yields one CSI observation per slot.
pub trait CsiSource {
    fn next_csi(&mut self) -> Result<CsiObservation>;
}

impl CsiSource for ChannelSim {
    fn next_csi(&mut self) -> Result<CsiObservation> {
        Ok(self.next_observation())
    }
}

impl<F: FnMut() -> Result<CsiObservation>> CsiSource for F {
    fn next_csi(&mut self) -> Result<CsiObservation> {
        self()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    /// Cumulative iid log-likelihood ratio.
    Sprt,
    Hmm2,
    Hmm3,
}

impl Detector {
    pub fn n_states(self) -> usize {
        match self {
            Detector::Sprt | Detector::Hmm2 => 2,
            Detector::Hmm3 => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum EmaPolicy {
    Off,
    On { beta_normal: f64, beta_blockage: f64 },
}

impl Default for EmaPolicy {
    fn default() -> Self {
        EmaPolicy::Off
    }
}

impl EmaPolicy {
    /// Default factors. A faster blockage factor leaves too few effective
    /// samples for a 16-dimensional covariance.
    pub fn enabled() -> Self {
        EmaPolicy::On {
            beta_normal: 0.995,
            beta_blockage: 0.98,
        }
    }

    pub fn is_on(&self) -> bool {
        matches!(self, EmaPolicy::On { .. })
    }
}

/// What happens to the statistic after a terminal verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AfterDecision {
    /// Stop the session.
    Halt,
    /// Restart the recursion from the prior and keep observing.
    Reset,
    /// Record the verdict and keep the recursion running to the horizon.
    #[default]
    Continue,
}

/// How the session decides that a long-term blockage is in progress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockageTrigger {
    #[default]
    None,
    /// The configured interval list is known to the receiver.
    Schedule,
    /// 3-state only: predicted probability of the NLoS state exceeds 0.5.
    Posterior,
}

/// Which state the EMA step updates while a blockage is inferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockageTarget {
    /// Same rule as outside blockage.
    #[default]
    AdaptTarget,
    /// The legitimate state that describes the blocked link: Alice in the
    /// 2-state model, Alice-NLoS in the 3-state model.
    Legitimate,
}

/// Which state's statistics the EMA step updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptTarget {
    /// The state with the largest posterior after scoring the current
    /// observation against the pre-update statistics.
    #[default]
    MostProbable,
    /// The state with the largest posterior before seeing the observation.
    Predicted,
    /// The true state, supplied by the caller. Ablation only.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub detector: Detector,
    pub thresholds: DecisionThresholds,
    pub horizon: u64,
    #[serde(default)]
    pub ema: EmaPolicy,
    #[serde(default)]
    pub after_decision: AfterDecision,
    #[serde(default)]
    pub blockage_trigger: BlockageTrigger,
    #[serde(default)]
    pub adapt_target: AdaptTarget,
    /// Allow the EMA step to update the Eve state.
    #[serde(default)]
    pub adapt_eve: bool,
    #[serde(default)]
    pub blockage_target: BlockageTarget,
    /// Score each observation with the statistics from before its own EMA
    /// update (predictive likelihood) instead of after.
    #[serde(default)]
    pub score_before_update: bool,
    /// Minimum posterior probability of the target state for an EMA update.
    #[serde(default)]
    pub adapt_confidence: f64,
    /// Intervals in observation time, used by the schedule trigger.
    #[serde(default)]
    pub blockage: Vec<BlockageInterval>,
    #[serde(default)]
    pub record_trace: bool,
}

impl SessionConfig {
    pub fn new(detector: Detector, thresholds: DecisionThresholds, horizon: u64) -> Self {
        Self {
            detector,
            thresholds,
            horizon,
            ema: EmaPolicy::Off,
            after_decision: AfterDecision::Continue,
            blockage_trigger: BlockageTrigger::None,
            adapt_target: AdaptTarget::MostProbable,
            adapt_eve: false,
            blockage_target: BlockageTarget::AdaptTarget,
            score_before_update: false,
            adapt_confidence: 0.0,
            blockage: Vec::new(),
            record_trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        DecisionThresholds::new(self.thresholds.gamma0, self.thresholds.gamma1)?;
        if let EmaPolicy::On {
            beta_normal,
            beta_blockage,
        } = self.ema
        {
            for b in [beta_normal, beta_blockage] {
                if !(0.0..1.0).contains(&b) {
                    return Err(Error::invalid(format!("forgetting factor must lie in [0, 1), got {b}")));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.adapt_confidence) {
            return Err(Error::invalid(format!(
                "adaptation confidence must lie in [0, 1], got {}",
                self.adapt_confidence
            )));
        }
        if self.blockage_trigger == BlockageTrigger::Posterior && self.detector != Detector::Hmm3 {
            return Err(Error::invalid("posterior blockage trigger needs the 3-state detector"));
        }
        Ok(())
    }
}

/// One line of the exported LLR trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlrRecord {
    pub t: u64,
    pub lambda: f64,
    pub posterior: Vec<f64>,
    /// Per-state emission log-likelihoods used in this slot's forward step.
    pub loglik: Vec<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub decisions: Vec<Decision>,
    pub trace: Vec<LlrRecord>,
    pub first_decision: Option<Decision>,
    /// Statistic after the last processed slot.
    pub final_lambda: f64,
    pub final_posterior: Vec<f64>,
    /// Number of slots processed.
    pub steps: u64,
    /// Step index (1-based) of the first terminal verdict.
    pub first_decision_step: Option<u64>,
}

impl SessionOutcome {
    pub fn first_verdict(&self) -> Verdict {
        self.first_decision.map_or(Verdict::Continue, |d| d.verdict)
    }
}

/// Runs Algorithm-style sequential authentication over `source` for up to
/// `config.horizon` slots. `model` carries the calibrated emissions; EMA
/// adaptation works on a session-local copy. `truth` supplies the true
/// hidden state per observation time for oracle adaptation.
pub fn run_session(
    model: &HmmModel,
    encoder: &EncoderSpec,
    source: &mut dyn CsiSource,
    config: &SessionConfig,
    truth: Option<&dyn Fn(u64) -> usize>,
) -> Result<SessionOutcome> {
    config.validate()?;
    model.validate()?;
    let n = config.detector.n_states();
    if model.n_states() != n {
        return Err(Error::invalid(format!(
            "{:?} detector needs a {n}-state model, got {}",
            config.detector,
            model.n_states()
        )));
    }
    if config.adapt_target == AdaptTarget::Oracle && truth.is_none() {
        return Err(Error::invalid("oracle adaptation needs the true state sequence"));
    }
    if encoder.d != model.emissions[0].dim() {
        return Err(Error::dims(model.emissions[0].dim(), encoder.d));
    }

    let mut emissions = model.emissions.clone();
    let mut dens: Vec<GaussianDensity> = emissions.iter().map(GaussianDensity::new).collect::<Result<_>>()?;
    let log_a = match config.detector {
        Detector::Sprt => nalgebra::DMatrix::from_fn(2, 2, |i, j| if i == j { 0.0 } else { f64::NEG_INFINITY }),
        _ => model.log_a(),
    };
    let fresh = || {
        let mut f = ForwardState::new(model);
        if config.detector == Detector::Sprt {
            // plain SPRT starts from an uninformative prior
            let h = -std::f64::consts::LN_2;
            f.log_alpha = vec![h, h];
            f.lambda = 0.0;
        }
        f
    };
    let mut fwd = fresh();
    let eve = n - 1;

    let mut out = SessionOutcome {
        decisions: Vec::new(),
        trace: Vec::new(),
        first_decision: None,
        final_lambda: fwd.lambda,
        final_posterior: fwd.posterior(),
        steps: 0,
        first_decision_step: None,
    };
    let mut loglik = vec![0.0; n];

    for step in 1..=config.horizon {
        let obs = source.next_csi()?;
        let z = encode(&obs, encoder)?;

        for (k, d) in dens.iter().enumerate() {
            loglik[k] = d.log_pdf(&z.z)?;
        }
        if let EmaPolicy::On {
            beta_normal,
            beta_blockage,
        } = config.ema
        {
            let predicted = predicted_posterior(&fwd, model, config.detector);
            let blocked = match config.blockage_trigger {
                BlockageTrigger::None => false,
                BlockageTrigger::Schedule => config.blockage.iter().any(|b| b.contains(obs.t)),
                BlockageTrigger::Posterior => predicted[1] > 0.5,
            };
            let (target, confidence) = match config.adapt_target {
                _ if blocked && config.blockage_target == BlockageTarget::Legitimate => (n - 2, 1.0),
                AdaptTarget::MostProbable => {
                    let mut probe = fwd.clone();
                    probe.step_with_loglik(&log_a, &loglik)?;
                    let k = argmax(&probe.log_alpha);
                    (k, probe.log_alpha[k].exp())
                }
                AdaptTarget::Predicted => {
                    let k = argmax(&predicted);
                    (k, predicted[k])
                }
                AdaptTarget::Oracle => (truth.expect("checked above")(obs.t), 1.0),
            };
            if target < n && (target != eve || config.adapt_eve) && confidence >= config.adapt_confidence {
                let beta = if blocked { beta_blockage } else { beta_normal };
                emissions[target].update_ema(&z.z, beta)?;
                dens[target] = GaussianDensity::new(&emissions[target])?;
                if !config.score_before_update {
                    loglik[target] = dens[target].log_pdf(&z.z)?;
                }
            }
        }

        fwd.step_with_loglik(&log_a, &loglik)?;
        if !fwd.lambda.is_finite() && !fwd.lambda.is_infinite() {
            return Err(Error::NumericFault(format!("log-posterior ratio is NaN at t = {}", obs.t)));
        }
        let d = decide(fwd.lambda, &config.thresholds, obs.t);
        out.steps = step;
        out.final_lambda = fwd.lambda;
        if config.record_trace {
            out.trace.push(LlrRecord {
                t: obs.t,
                lambda: fwd.lambda,
                posterior: fwd.posterior(),
                loglik: loglik.clone(),
                verdict: d.verdict,
            });
        }
        if d.verdict.is_terminal() {
            out.decisions.push(d);
            if out.first_decision.is_none() {
                out.first_decision = Some(d);
                out.first_decision_step = Some(step);
            }
            match config.after_decision {
                AfterDecision::Halt => break,
                AfterDecision::Reset => fwd = fresh(),
                AfterDecision::Continue => {}
            }
        }
    }
    out.final_posterior = fwd.posterior();
    Ok(out)
}

/// Posterior over the state at the coming slot, before seeing its observation.
fn predicted_posterior(fwd: &ForwardState, model: &HmmModel, detector: Detector) -> Vec<f64> {
    let p = fwd.posterior();
    if fwd.t == 0 || detector == Detector::Sprt {
        return p;
    }
    let n = p.len();
    (0..n).map(|k| (0..n).map(|j| p[j] * model.a[(j, k)]).sum()).collect()
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
        .0
}

#[derive(Serialize)]
struct LlrTraceHeader<'a> {
    version: u32,
    kind: &'a str,
    n_states: usize,
}

pub fn write_llr_trace(path: impl AsRef<Path>, records: &[LlrRecord]) -> Result<()> {
    let mut w = JsonLinesWriter::create(path.as_ref())?;
    w.write(&LlrTraceHeader {
        version: 1,
        kind: "llr-trace",
        n_states: records.first().map_or(0, |r| r.posterior.len()),
    })?;
    for r in records {
        w.write(r)?;
    }
    w.finish().map(drop)
}
