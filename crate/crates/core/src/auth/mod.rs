//! Sequential authentication: iid SPRT, 2-/3-state HMM forward inference and
//! threshold decisions.

mod gaussian;
mod hmm;
mod recursive;
mod session;
mod sprt;

pub use gaussian::{gaussian_log_pdf, instantaneous_llr, GaussianDensity};
pub use hmm::{
    hmm_forward_step, log_posterior_ratio, ForwardState, HmmModel, DEFAULT_A2, DEFAULT_A3, DEFAULT_PI2,
    DEFAULT_PI3,
};
pub use recursive::{recursive_llr_step, transition_warp, Transition2};
pub use session::{
    run_session, write_llr_trace, AdaptTarget, AfterDecision, BlockageTarget, BlockageTrigger, CsiSource, Detector, EmaPolicy,
    LlrRecord, SessionConfig, SessionOutcome,
};
pub use sprt::{decide, sprt_step, wald_thresholds, Decision, DecisionThresholds, Verdict};
