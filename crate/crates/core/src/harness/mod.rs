//! Experiment harness: scenario configuration, Monte Carlo campaigns, ROC
//! analysis and report output.

mod analyze;
mod config;
mod report;
mod roc;
mod run;

pub use analyze::{analyze_scenario, AnalysisReport};
pub use config::{
    builtin_scenario, load_scenarios, parse_scenarios, EncoderConfig, NlosInit, ReportFormat, ScenarioConfig, ThresholdSpec,
    SCENARIO_NAMES,
};
pub use report::{emit_report, export_csi_dataset, CSV_SUMMARY_ROWS};
pub use roc::{compute_roc_auc, trapezoid_auc, RocPoint};
pub use run::{run_scenario, Campaign, DecisionStats, RunReport, REPORT_SCHEMA_VERSION};
