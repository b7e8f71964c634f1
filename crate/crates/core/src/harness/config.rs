use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversary::SpooferKind;
use crate::auth::{
    wald_thresholds, AdaptTarget, BlockageTarget, BlockageTrigger, DecisionThresholds, Detector, EmaPolicy, DEFAULT_A2, DEFAULT_A3,
    DEFAULT_PI2, DEFAULT_PI3,
};
use crate::channel::{BlockageInterval, ChannelParams};
use crate::encoder::{FeatureMode, DEFAULT_REG_EPS};
use crate::error::{Error, Result};

/// Decision thresholds, either explicit or from Wald's targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ThresholdSpec {
    Wald { alpha_fa: f64, beta_md: f64 },
    Explicit { gamma0: f64, gamma1: f64 },
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        ThresholdSpec::Wald {
            alpha_fa: 0.05,
            beta_md: 0.05,
        }
    }
}

impl ThresholdSpec {
    pub fn resolve(&self) -> Result<DecisionThresholds> {
        match *self {
            ThresholdSpec::Wald { alpha_fa, beta_md } => wald_thresholds(alpha_fa, beta_md),
            ThresholdSpec::Explicit { gamma0, gamma1 } => DecisionThresholds::new(gamma0, gamma1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub d: usize,
    pub mode: FeatureMode,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d: 16,
            mode: FeatureMode::RealImag,
            seed: 0x5eed,
        }
    }
}

/// How Bob initialises the Alice-NLoS statistics of the 3-state model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NlosInit {
    /// Fit on a separate warm-up stream with the LoS path removed.
    #[default]
    Calibrated,
    /// Zero mean and isotropic covariance at the known total received power
    /// `1 + noise_var`; the spatial structure is left for EMA to learn.
    PowerPrior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    Csv,
    JsonLines,
}

fn d_trials() -> usize {
    2000
}
fn d_seed() -> u64 {
    1
}
fn d_horizon() -> u64 {
    50
}
fn d_warmup() -> usize {
    200
}
fn d_reg() -> f64 {
    DEFAULT_REG_EPS
}

/// One Monte Carlo scenario. Blockage intervals are given in session slots
/// (slot 1 is the first slot after warm-up).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub detector: Detector,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub ema: EmaPolicy,
    #[serde(default = "naive")]
    pub spoofer: SpooferKind,
    #[serde(default)]
    pub thresholds: ThresholdSpec,
    #[serde(default = "d_horizon")]
    pub horizon: u64,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default = "d_seed")]
    pub seed: u64,
    /// Clean slots used to fit emission statistics before each session.
    #[serde(default = "d_warmup")]
    pub warmup: usize,
    #[serde(default)]
    pub blockage: Vec<BlockageInterval>,
    #[serde(default)]
    pub blockage_trigger: BlockageTrigger,
    #[serde(default)]
    pub adapt_target: AdaptTarget,
    #[serde(default)]
    pub adapt_eve: bool,
    #[serde(default)]
    pub adapt_confidence: f64,
    #[serde(default)]
    pub blockage_target: BlockageTarget,
    #[serde(default)]
    pub score_before_update: bool,
    #[serde(default)]
    pub nlos_init: NlosInit,
    /// Whether the blockage also removes the LoS path of Eve's own channel.
    #[serde(default)]
    pub eve_blocked: bool,
    #[serde(default = "d_reg")]
    pub reg_eps: f64,
    /// Transition matrix override (2x2 or 3x3, row-stochastic).
    #[serde(default)]
    pub transitions: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub pi: Option<Vec<f64>>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub format: ReportFormat,
}

fn naive() -> SpooferKind {
    SpooferKind::Naive
}

impl ScenarioConfig {
    pub fn new(name: impl Into<String>, detector: Detector) -> Self {
        Self {
            name: name.into(),
            detector,
            channel: ChannelParams::default(),
            encoder: EncoderConfig::default(),
            ema: EmaPolicy::Off,
            spoofer: SpooferKind::Naive,
            thresholds: ThresholdSpec::default(),
            horizon: d_horizon(),
            trials: d_trials(),
            seed: d_seed(),
            warmup: d_warmup(),
            blockage: Vec::new(),
            blockage_trigger: BlockageTrigger::None,
            adapt_target: AdaptTarget::MostProbable,
            adapt_eve: false,
            adapt_confidence: 0.0,
            blockage_target: BlockageTarget::AdaptTarget,
            score_before_update: false,
            nlos_init: NlosInit::Calibrated,
            eve_blocked: false,
            reg_eps: d_reg(),
            transitions: None,
            pi: None,
            out_dir: None,
            format: ReportFormat::Csv,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Error::Config(format!("scenario '{}': {m}", self.name));
        if self.trials == 0 {
            return Err(cfg("trials must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(cfg("horizon must be at least 1".into()));
        }
        if self.warmup < self.encoder.d + 1 {
            return Err(cfg(format!("warm-up of {} slots cannot fit a {}-dimensional Gaussian", self.warmup, self.encoder.d)));
        }
        if self.nlos_init == NlosInit::PowerPrior && self.encoder.mode != FeatureMode::RealImag {
            return Err(cfg("the NLoS power prior needs real/imaginary features".into()));
        }
        if !self.channel.blockage.is_empty() {
            return Err(cfg("put blockage intervals at scenario level, in session slots".into()));
        }
        self.channel.validate().map_err(|e| cfg(e.to_string()))?;
        self.spoofer.validate().map_err(|e| cfg(e.to_string()))?;
        self.thresholds.resolve().map_err(|e| cfg(e.to_string()))?;
        if self.blockage.iter().any(|b| b.start < 1) {
            return Err(cfg("blockage intervals start at session slot 1 or later".into()));
        }
        if self.blockage_trigger == BlockageTrigger::Posterior && self.detector != Detector::Hmm3 {
            return Err(cfg("posterior blockage trigger needs the 3-state detector".into()));
        }
        let n = self.detector.n_states();
        if let Some(a) = &self.transitions {
            if a.len() != n || a.iter().any(|r| r.len() != n) {
                return Err(cfg(format!("transition matrix must be {n}x{n}")));
            }
        }
        if let Some(p) = &self.pi {
            if p.len() != n {
                return Err(cfg(format!("initial distribution must have {n} entries")));
            }
        }
        Ok(())
    }

    /// Blockage intervals on the channel's absolute time axis.
    pub fn absolute_blockage(&self) -> Vec<BlockageInterval> {
        self.blockage
            .iter()
            .map(|b| BlockageInterval {
                start: b.start + self.warmup as u64,
                len: b.len,
            })
            .collect()
    }

    pub fn transition_rows(&self) -> Vec<Vec<f64>> {
        match (&self.transitions, self.detector) {
            (Some(a), _) => a.clone(),
            (None, Detector::Hmm3) => DEFAULT_A3.iter().map(|r| r.to_vec()).collect(),
            (None, _) => DEFAULT_A2.iter().map(|r| r.to_vec()).collect(),
        }
    }

    pub fn initial_distribution(&self) -> Vec<f64> {
        match (&self.pi, self.detector) {
            (Some(p), _) => p.clone(),
            (None, Detector::Hmm3) => DEFAULT_PI3.to_vec(),
            (None, Detector::Hmm2) => DEFAULT_PI2.to_vec(),
            (None, Detector::Sprt) => vec![0.5, 0.5],
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    scenario: Vec<ScenarioConfig>,
}

/// Parse either a single scenario document or a file of `[[scenario]]` tables.
pub fn parse_scenarios(text: &str) -> Result<Vec<ScenarioConfig>> {
    let many = toml::from_str::<ScenarioFile>(text);
    let list = match many {
        Ok(f) => f.scenario,
        Err(e_many) => match toml::from_str::<ScenarioConfig>(text) {
            Ok(one) => vec![one],
            Err(e_one) => {
                let e = if text.contains("[[scenario]]") { e_many.to_string() } else { e_one.to_string() };
                return Err(Error::Config(e.trim().to_string()));
            }
        },
    };
    for s in &list {
        s.validate()?;
    }
    Ok(list)
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<ScenarioConfig>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenarios(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Names of the six built-in scenarios, in report order.
pub const SCENARIO_NAMES: [&str; 6] = [
    "hmm2-los",
    "hmm2-blockage",
    "hmm3-blockage",
    "hmm2-los-ema",
    "hmm2-blockage-ema",
    "hmm3-blockage-ema",
];

/// Built-in scenario battery at the reference settings (4x4, SNR 5 dB,
/// rho_t = 0.7, d = 16, K0 = 10) against the moment-matching spoofer.
pub fn builtin_scenario(name: &str) -> Result<ScenarioConfig> {
    let (detector, blocked, ema) = match name {
        "hmm2-los" => (Detector::Hmm2, false, false),
        "hmm2-blockage" => (Detector::Hmm2, true, false),
        "hmm3-blockage" => (Detector::Hmm3, true, false),
        "hmm2-los-ema" => (Detector::Hmm2, false, true),
        "hmm2-blockage-ema" => (Detector::Hmm2, true, true),
        "hmm3-blockage-ema" => (Detector::Hmm3, true, true),
        other => {
            return Err(Error::Config(format!(
                "unknown scenario '{other}'; built-ins are {}",
                SCENARIO_NAMES.join(", ")
            )))
        }
    };
    let mut s = ScenarioConfig::new(name, detector);
    s.channel.sigma_phi = 0.05;
    // A near-static imitation: the spoofer tracks its eavesdropped copy slowly
    // and synthesises with a noise floor below the legitimate one.
    s.spoofer = SpooferKind::MomentMatching {
        beta_e: 0.999,
        observation_noise: 0.6,
    };
    s.score_before_update = true;
    if blocked {
        s.blockage = vec![BlockageInterval { start: 1, len: 1000 }];
    }
    if ema {
        s.ema = EmaPolicy::enabled();
        if blocked {
            s.blockage_trigger = BlockageTrigger::Schedule;
            // Without an NLoS state the only way to follow Alice through the
            // blockage is to adapt her single state while it lasts.
            if detector == Detector::Hmm2 {
                s.blockage_target = BlockageTarget::Legitimate;
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        for n in SCENARIO_NAMES {
            builtin_scenario(n).unwrap().validate().unwrap();
        }
        assert!(matches!(builtin_scenario("nope"), Err(Error::Config(_))));
    }

    #[test]
    fn parses_single_and_many() {
        let one = r#"
            name = "x"
            detector = "hmm3"
            trials = 10
            [ema]
            mode = "on"
            beta_normal = 0.99
            beta_blockage = 0.8
            [spoofer]
            kind = "moment-matching"
            beta_e = 0.95
            observation_noise = 0.1
            [[blockage]]
            start = 5
            len = 10
        "#;
        let s = parse_scenarios(one).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].trials, 10);
        assert_eq!(s[0].absolute_blockage()[0].start, 205);
        let many = r#"
            [[scenario]]
            name = "a"
            detector = "sprt"
            thresholds = { gamma0 = -2.0, gamma1 = 3.0 }
            [[scenario]]
            name = "b"
            detector = "hmm2"
            thresholds = { alpha_fa = 0.01, beta_md = 0.1 }
        "#;
        let s = parse_scenarios(many).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].thresholds.resolve().unwrap().gamma1, 3.0);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(parse_scenarios("name = 1"), Err(Error::Config(_))));
        let bad = "name = \"x\"\ndetector = \"hmm2\"\ntrials = 0\n";
        assert!(matches!(parse_scenarios(bad), Err(Error::Config(_))));
        let unknown = "name = \"x\"\ndetector = \"hmm2\"\nbogus = 1\n";
        assert!(parse_scenarios(unknown).is_err());
    }
}
