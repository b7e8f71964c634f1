use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{ReplayPolicy, SpoofTrace, Spoofer, SpooferKind};
use crate::auth::{
    run_session, AfterDecision, CsiSource, Detector, HmmModel, SessionConfig, SessionOutcome, Verdict,
};
use crate::channel::{observe, ChannelParams, ChannelSim, CsiObservation, Identity};
use crate::encoder::{encode, fit_stats_batch, EmissionStats, EncoderSpec};
use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::seed::{self, tag};

use super::config::{NlosInit, ScenarioConfig};
use super::roc::{compute_roc_auc, RocPoint};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Per-identity decision statistics. Undecided sessions count as taking
/// the full horizon in `mean_time_censored`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionStats {
    /// Mean slot of the first terminal verdict, undecided sessions counted at the horizon.
    pub mean_time_censored: f64,
    /// Mean slot of the first terminal verdict over decided sessions only.
    pub mean_time_decided: f64,
    /// Mean slot of the first verdict naming the true transmitter, sessions
    /// without one counted at the horizon.
    pub mean_time_correct: f64,
    pub decided_fraction: f64,
    /// Fraction of sessions whose first verdict names the true transmitter.
    pub correct_fraction: f64,
    /// Mean number of slots with a terminal verdict within the horizon.
    pub mean_decisions_within_horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: String,
    pub detector: Detector,
    pub trials: usize,
    pub seed: u64,
    pub horizon: u64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub auc: f64,
    pub roc: Vec<RocPoint>,
    pub alice: DecisionStats,
    pub eve: DecisionStats,
    /// Final posterior probability of Alice, per Alice session.
    pub posterior_alice_sessions: Vec<f64>,
    /// Final posterior probability of Alice, per Eve session.
    pub posterior_eve_sessions: Vec<f64>,
    /// Scores (statistic at the horizon) by trial index.
    pub scores_alice: Vec<f64>,
    pub scores_eve: Vec<f64>,
}

impl RunReport {
    /// Mean time to first decision over both identities, censored at the horizon.
    pub fn mean_decision_time(&self) -> f64 {
        0.5 * (self.alice.mean_time_censored + self.eve.mean_time_censored)
    }

    /// Mean time to the first correct verdict over both identities.
    pub fn mean_correct_time(&self) -> f64 {
        0.5 * (self.alice.mean_time_correct + self.eve.mean_time_correct)
    }
}

/// Bob's view and Eve's eavesdropped view of the same Alice channel.
#[derive(Clone)]
struct AliceLink {
    sim: ChannelSim,
    bob: seed::Rng,
    eve: seed::Rng,
    eve_noise: f64,
}

impl AliceLink {
    fn next_pair(&mut self) -> Result<(CsiObservation, CsiObservation)> {
        let h = self.sim.step();
        let t = self.sim.t();
        let bob = observe(&h, t, self.sim.params().noise_var, &mut self.bob)?;
        let eve = observe(&h, t, self.eve_noise, &mut self.eve)?;
        Ok((bob, eve))
    }
}

struct Prepared {
    model: HmmModel,
    link: AliceLink,
    eavesdropped: Vec<CsiObservation>,
}

/// Shared, read-only campaign state.
pub struct Campaign<'a> {
    pub cfg: &'a ScenarioConfig,
    pub encoder: EncoderSpec,
    pub session: SessionConfig,
    alice_params: ChannelParams,
    eve_params: ChannelParams,
    trace: Option<(SpoofTrace, ReplayPolicy)>,
}

impl<'a> Campaign<'a> {
    pub fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let ch = &cfg.channel;
        let encoder = EncoderSpec::random(ch.m_r, ch.m_t, cfg.encoder.d, cfg.encoder.mode, cfg.encoder.seed)?;
        let mut alice_params = ch.clone();
        alice_params.blockage = cfg.absolute_blockage();
        let mut eve_params = ch.clone();
        if cfg.eve_blocked {
            eve_params.blockage = alice_params.blockage.clone();
        }
        let mut session = SessionConfig::new(cfg.detector, cfg.thresholds.resolve()?, cfg.horizon);
        session.ema = cfg.ema;
        session.after_decision = AfterDecision::Continue;
        session.blockage_trigger = cfg.blockage_trigger;
        session.adapt_target = cfg.adapt_target;
        session.adapt_eve = cfg.adapt_eve;
        session.adapt_confidence = cfg.adapt_confidence;
        session.blockage_target = cfg.blockage_target;
        session.score_before_update = cfg.score_before_update;
        session.blockage = alice_params.blockage.clone();
        session.validate()?;
        let trace = match &cfg.spoofer {
            SpooferKind::Trace { path, policy } => Some((crate::adversary::load_trace(path)?, *policy)),
            _ => None,
        };
        Ok(Self {
            cfg,
            encoder,
            session,
            alice_params,
            eve_params,
            trace,
        })
    }

    fn eavesdrop_noise(&self) -> f64 {
        match self.cfg.spoofer {
            SpooferKind::MomentMatching { observation_noise, .. } => observation_noise,
            _ => self.cfg.channel.noise_var,
        }
    }

    fn spoofer(&self, seed: u64, cursor: usize) -> Result<Spoofer> {
        match &self.trace {
            Some((tr, policy)) => {
                let mut s = Spoofer::from_trace(tr.clone(), *policy, &self.eve_params, seed)?;
                s.set_cursor(cursor);
                Ok(s)
            }
            None => Spoofer::new(self.cfg.spoofer.clone(), &self.eve_params, seed),
        }
    }

    fn fit(&self, obs: &[CsiObservation]) -> Result<EmissionStats> {
        let zs = obs.iter().map(|o| encode(o, &self.encoder)).collect::<Result<Vec<_>>>()?;
        fit_stats_batch(&zs, self.cfg.reg_eps)
    }

    fn trial_seed(&self, i: usize) -> u64 {
        seed::derive(self.cfg.seed, &[i as u64])
    }

    /// Warm-up calibration for one trial: LoS (and NLoS) statistics from clean
    /// Alice slots, Eve statistics from a calibration run of the spoofer model.
    fn prepare(&self, i: usize) -> Result<Prepared> {
        let cfg = self.cfg;
        let ts = self.trial_seed(i);
        let mut link = AliceLink {
            sim: ChannelSim::new(self.alice_params.clone(), Identity::Alice, seed::derive(ts, &[tag::ALICE]))?,
            bob: seed::rng(seed::derive(ts, &[tag::ALICE, tag::SESSION])),
            eve: seed::rng(seed::derive(ts, &[tag::EAVESDROP])),
            eve_noise: self.eavesdrop_noise(),
        };
        let mut bob_obs = Vec::with_capacity(cfg.warmup);
        let mut eavesdropped = Vec::with_capacity(cfg.warmup);
        for _ in 0..cfg.warmup {
            let (b, e) = link.next_pair()?;
            bob_obs.push(b);
            eavesdropped.push(e);
        }
        let los = self.fit(&bob_obs)?;

        let mut calib = self.spoofer(seed::derive(ts, &[tag::WARMUP, tag::SPOOFER]), 0)?;
        for e in &eavesdropped {
            calib.eavesdrop(e)?;
        }
        let spoofed = (0..cfg.warmup)
            .map(|_| calib.next_spoofed_csi(None))
            .collect::<Result<Vec<_>>>()?;
        let eve = self.fit(&spoofed)?;

        let rows = cfg.transition_rows();
        let pi = cfg.initial_distribution();
        let a = DMatrix::from_fn(rows.len(), rows.len(), |r, c| rows[r][c]);
        let model = match cfg.detector {
            Detector::Sprt | Detector::Hmm2 => HmmModel::new(pi, a, vec![los.with_label(0), eve.with_label(1)])?,
            Detector::Hmm3 if cfg.nlos_init == NlosInit::PowerPrior => {
                let d = cfg.encoder.d;
                let var = 0.5 * (1.0 + cfg.channel.noise_var);
                let nlos = EmissionStats::new(DVector::zeros(d), DMatrix::identity(d, d) * var)?
                    .with_label(1);
                let mut nlos = nlos;
                nlos.reg_eps = cfg.reg_eps;
                HmmModel::new(pi, a, vec![los.with_label(0), nlos, eve.with_label(2)])?
            }
            Detector::Hmm3 => {
                let mut nlos_sim = ChannelSim::new(
                    self.alice_params.clone(),
                    Identity::Alice,
                    seed::derive(ts, &[tag::WARMUP_NLOS]),
                )?
                .with_forced_nlos();
                let nlos_obs: Vec<_> = (0..cfg.warmup).map(|_| nlos_sim.next_observation()).collect();
                let nlos = self.fit(&nlos_obs)?;
                HmmModel::new(pi, a, vec![los.with_label(0), nlos.with_label(1), eve.with_label(2)])?
            }
        };
        Ok(Prepared {
            model,
            link,
            eavesdropped,
        })
    }

    /// The detector model Bob calibrates for trial `i`.
    pub fn calibrated_model(&self, i: usize) -> Result<HmmModel> {
        self.prepare(i).map(|p| p.model)
    }

    pub fn alice_session(&self, i: usize) -> Result<SessionOutcome> {
        let p = self.prepare(i)?;
        let mut link = p.link;
        let mut src = || link.next_pair().map(|(b, _)| b);
        run_session(&p.model, &self.encoder, &mut src, &self.session, None)
    }

    pub fn eve_session(&self, i: usize) -> Result<SessionOutcome> {
        let p = self.prepare(i)?;
        let ts = self.trial_seed(i);
        let cursor = self.cfg.warmup + i * self.cfg.horizon as usize;
        let mut spoofer = self
            .spoofer(seed::derive(ts, &[tag::SPOOFER]), cursor)?
            .with_time(self.cfg.warmup as u64);
        for e in &p.eavesdropped {
            spoofer.eavesdrop(e)?;
        }
        let mut link = p.link;
        let eavesdrops = self.cfg.spoofer.needs_eavesdropping();
        let mut src = move || {
            let (_, e) = link.next_pair()?;
            spoofer.next_spoofed_csi(eavesdrops.then_some(&e))
        };
        run_session(&p.model, &self.encoder, &mut src as &mut dyn CsiSource, &self.session, None)
    }

    /// Alice-mass of the final posterior.
    fn alice_posterior(&self, out: &SessionOutcome) -> f64 {
        match self.cfg.detector {
            Detector::Sprt => sigmoid(out.final_lambda),
            Detector::Hmm2 => out.final_posterior[0],
            Detector::Hmm3 => out.final_posterior[0] + out.final_posterior[1],
        }
    }
}

fn annotate(e: Error, side: &str, i: usize) -> Error {
    let ctx = |m: String| format!("{side} trial {i}: {m}");
    match e {
        Error::NumericFault(m) => Error::NumericFault(ctx(m)),
        Error::InvalidParameter(m) => Error::InvalidParameter(ctx(m)),
        Error::NotPositiveDefinite { context } => Error::NotPositiveDefinite {
            context: Some(ctx(context.unwrap_or_default())),
        },
        other => other,
    }
}

fn decision_stats(outs: &[SessionOutcome], truth: Verdict, horizon: u64, t0: u64) -> DecisionStats {
    let n = outs.len() as f64;
    let decided: Vec<u64> = outs.iter().filter_map(|o| o.first_decision_step).collect();
    let censored: f64 = outs
        .iter()
        .map(|o| o.first_decision_step.unwrap_or(horizon) as f64)
        .sum::<f64>()
        / n;
    DecisionStats {
        mean_time_censored: censored,
        mean_time_decided: if decided.is_empty() {
            f64::NAN
        } else {
            decided.iter().sum::<u64>() as f64 / decided.len() as f64
        },
        mean_time_correct: outs
            .iter()
            .map(|o| {
                o.decisions
                    .iter()
                    .find(|d| d.verdict == truth)
                    .map_or(horizon, |d| d.t - t0) as f64
            })
            .sum::<f64>()
            / n,
        decided_fraction: decided.len() as f64 / n,
        correct_fraction: outs.iter().filter(|o| o.first_verdict() == truth).count() as f64 / n,
        mean_decisions_within_horizon: outs.iter().map(|o| o.decisions.len() as f64).sum::<f64>() / n,
    }
}

/// Runs `trials` Alice and `trials` Eve sessions with per-trial seeds and
/// reduces them in trial order, so the report does not depend on scheduling.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport> {
    let c = Campaign::new(cfg)?;
    let alice: Vec<SessionOutcome> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| c.alice_session(i).map_err(|e| annotate(e, "alice", i)))
        .collect::<Result<_>>()?;
    let eve: Vec<SessionOutcome> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| c.eve_session(i).map_err(|e| annotate(e, "eve", i)))
        .collect::<Result<_>>()?;
    let scores_alice: Vec<f64> = alice.iter().map(|o| o.final_lambda).collect();
    let scores_eve: Vec<f64> = eve.iter().map(|o| o.final_lambda).collect();
    let (roc, auc) = compute_roc_auc(&scores_alice, &scores_eve)?;
    Ok(RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scenario: cfg.name.clone(),
        detector: cfg.detector,
        trials: cfg.trials,
        seed: cfg.seed,
        horizon: cfg.horizon,
        gamma0: c.session.thresholds.gamma0,
        gamma1: c.session.thresholds.gamma1,
        auc,
        roc,
        alice: decision_stats(&alice, Verdict::Alice, cfg.horizon, cfg.warmup as u64),
        eve: decision_stats(&eve, Verdict::Eve, cfg.horizon, cfg.warmup as u64),
        posterior_alice_sessions: alice.iter().map(|o| c.alice_posterior(o)).collect(),
        posterior_eve_sessions: eve.iter().map(|o| c.alice_posterior(o)).collect(),
        scores_alice,
        scores_eve,
    })
}
