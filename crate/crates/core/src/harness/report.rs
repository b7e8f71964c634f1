use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::channel::{ChannelParams, ChannelSim, Identity};
use crate::error::{Error, Result};
use crate::seed;
use crate::trace::{write_csi_trace, JsonLinesWriter, TraceHeader};

use super::config::ReportFormat;
use super::run::RunReport;

#[derive(Serialize)]
struct SummaryLine<'a> {
    kind: &'static str,
    #[serde(flatten)]
    report: &'a RunReport,
}

/// Number of `# key,value` rows after the ROC table in CSV reports.
pub const CSV_SUMMARY_ROWS: usize = 14;

/// Writes a run report. CSV holds the ROC curve followed by `# key,value`
/// summary rows; JSON lines holds one versioned summary object.
pub fn emit_report(report: &RunReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if report.roc.is_empty() {
        return Err(Error::invalid("empty ROC curve"));
    }
    match format {
        ReportFormat::JsonLines => {
            let mut w = JsonLinesWriter::create(path)?;
            w.write(&SummaryLine {
                kind: "run-report",
                report,
            })?;
            w.finish().map(drop)
        }
        ReportFormat::Csv => {
            let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = std::io::BufWriter::new(file);
            write_csv(report, &mut w).map_err(|e| Error::io(path, e))
        }
    }
}

fn write_csv(r: &RunReport, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "threshold,fpr,tpr")?;
    for p in &r.roc {
        writeln!(w, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
    }
    let rows: [(&str, String); CSV_SUMMARY_ROWS] = [
        ("schema_version", r.schema_version.to_string()),
        ("scenario", r.scenario.clone()),
        ("trials", r.trials.to_string()),
        ("seed", r.seed.to_string()),
        ("horizon", r.horizon.to_string()),
        ("auc", r.auc.to_string()),
        ("alice_mean_time", r.alice.mean_time_censored.to_string()),
        ("eve_mean_time", r.eve.mean_time_censored.to_string()),
        ("alice_correct_time", r.alice.mean_time_correct.to_string()),
        ("eve_correct_time", r.eve.mean_time_correct.to_string()),
        ("alice_decided", r.alice.decided_fraction.to_string()),
        ("eve_decided", r.eve.decided_fraction.to_string()),
        ("alice_correct", r.alice.correct_fraction.to_string()),
        ("eve_correct", r.eve.correct_fraction.to_string()),
    ];
    for (k, v) in rows {
        writeln!(w, "# {k},{v}")?;
    }
    w.flush()
}

/// Simulates `n` consecutive Alice CSI slots and writes them as a trace whose
/// header records the channel parameters and seed. `n = 0` writes a header only.
pub fn export_csi_dataset(params: &ChannelParams, n: usize, seed: u64, path: impl AsRef<Path>) -> Result<()> {
    let mut sim = ChannelSim::new(params.clone(), Identity::Alice, seed::derive(seed, &[seed::tag::ALICE]))?;
    let records: Vec<_> = (0..n).map(|_| sim.next_observation()).collect();
    let meta = serde_json::json!({ "params": params, "seed": seed });
    let header = TraceHeader::new(params.m_t, params.m_r, "alice").with_meta(meta);
    write_csi_trace(path, &header, &records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::Detector;
    use crate::harness::config::ScenarioConfig;
    use crate::harness::run_scenario;
    use crate::trace::CsiTrace;

    fn small() -> RunReport {
        let mut cfg = ScenarioConfig::new("small", Detector::Hmm2);
        cfg.trials = 20;
        cfg.warmup = 60;
        cfg.horizon = 10;
        run_scenario(&cfg).unwrap()
    }

    #[test]
    fn csv_and_json_reports() {
        let r = small();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("r.csv");
        emit_report(&r, ReportFormat::Csv, &csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("threshold,fpr,tpr\n"));
        assert!(text.contains("# auc,"));
        let js = dir.path().join("r.jsonl");
        emit_report(&r, ReportFormat::JsonLines, &js).unwrap();
        let v: serde_json::Value = serde_json::from_str(std::fs::read_to_string(&js).unwrap().trim()).unwrap();
        assert_eq!(v["kind"], "run-report");
        assert_eq!(v["schema_version"], 1);
    }

    #[test]
    fn empty_roc_is_rejected() {
        let mut r = small();
        r.roc.clear();
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&r, ReportFormat::Csv, dir.path().join("x")).is_err());
    }

    #[test]
    fn export_header_only_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.jsonl");
        export_csi_dataset(&ChannelParams::default(), 0, 3, &p).unwrap();
        let tr = CsiTrace::load(&p).unwrap();
        assert!(tr.records.is_empty());
        assert_eq!(tr.header.meta.unwrap()["seed"], 3);

        let p = dir.path().join("five.jsonl");
        export_csi_dataset(&ChannelParams::default(), 5, 3, &p).unwrap();
        let tr = CsiTrace::load(&p).unwrap();
        assert_eq!(tr.records.len(), 5);
        let mut sim = ChannelSim::new(ChannelParams::default(), Identity::Alice, seed::derive(3, &[seed::tag::ALICE])).unwrap();
        assert_eq!(tr.records[0], sim.next_observation());
    }
}
