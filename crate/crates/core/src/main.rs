use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use arpla::adversary::{ReplayPolicy, SpooferKind};
use arpla::analysis::write_curves;
use arpla::error::Error;
use arpla::harness::{
    analyze_scenario, builtin_scenario, emit_report, export_csi_dataset, load_scenarios, run_scenario,
    ReportFormat, RunReport, ScenarioConfig, SCENARIO_NAMES,
};
use arpla::trace::CsiTrace;

#[derive(Parser)]
#[command(name = "arpla", version, about = "Sequential physical-layer authentication over simulated MIMO links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (TOML, one document or [[scenario]] tables).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario name, or the scenario to pick from --config.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the spoofer: naive, moment-matching, or trace:PATH.
    #[arg(long)]
    spoofer: Option<String>,
    #[arg(long, value_parser = parse_format)]
    format: Option<ReportFormat>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the six built-in scenarios over one or more master seeds.
    Sweep {
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated master seeds.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytic P_FA/P_D curves next to a Monte Carlo run of the same model.
    Analyze {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 100_000)]
        trajectories: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export simulated Alice CSI as a trace file.
    ExportCsi {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// Channel parameters and seed are taken from this scenario (built-in name or --config).
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Check that a file is a well-formed CSI trace.
    ValidateTrace {
        #[arg(long)]
        path: PathBuf,
    },
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    match s {
        "csv" => Ok(ReportFormat::Csv),
        "json-lines" | "jsonl" => Ok(ReportFormat::JsonLines),
        _ => Err(format!("unknown format '{s}' (csv, json-lines)")),
    }
}

fn parse_spoofer(s: &str, cfg: &ScenarioConfig) -> Result<SpooferKind, Error> {
    match s {
        "naive" => Ok(SpooferKind::Naive),
        "moment-matching" => Ok(SpooferKind::MomentMatching {
            beta_e: 0.99,
            observation_noise: cfg.channel.noise_var,
        }),
        _ => match s.strip_prefix("trace:") {
            Some(path) => Ok(SpooferKind::Trace {
                path: PathBuf::from(path),
                policy: ReplayPolicy::Loop,
            }),
            None => Err(Error::Config(format!("unknown spoofer '{s}'"))),
        },
    }
}

fn resolve(args: &ScenarioArgs) -> Result<ScenarioConfig, Error> {
    let mut cfg = match (&args.config, &args.scenario) {
        (Some(path), name) => {
            let list = load_scenarios(path)?;
            match name {
                Some(n) => list
                    .into_iter()
                    .find(|c| &c.name == n)
                    .ok_or_else(|| Error::Config(format!("no scenario '{n}' in {}", path.display())))?,
                None => list
                    .into_iter()
                    .next()
                    .ok_or_else(|| Error::Config(format!("{} holds no scenario", path.display())))?,
            }
        }
        (None, Some(n)) => builtin_scenario(n)?,
        (None, None) => builtin_scenario(SCENARIO_NAMES[0])?,
    };
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(s) = &args.spoofer {
        cfg.spoofer = parse_spoofer(s, &cfg)?;
    }
    if let Some(f) = args.format {
        cfg.format = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(out: Option<PathBuf>, cfg: &ScenarioConfig) -> Result<PathBuf, Error> {
    let dir = out.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    Ok(dir)
}

fn report_path(dir: &Path, name: &str, format: ReportFormat) -> PathBuf {
    let ext = match format {
        ReportFormat::Csv => "csv",
        ReportFormat::JsonLines => "jsonl",
    };
    dir.join(format!("{name}.{ext}"))
}

fn summary(r: &RunReport) -> String {
    format!(
        "{:<20} seed={:<6} auc={:.4} t_alice={:.2} t_eve={:.2} tc_alice={:.2} tc_eve={:.2} correct_alice={:.3} correct_eve={:.3}",
        r.scenario,
        r.seed,
        r.auc,
        r.alice.mean_time_censored,
        r.eve.mean_time_censored,
        r.alice.mean_time_correct,
        r.eve.mean_time_correct,
        r.alice.correct_fraction,
        r.eve.correct_fraction
    )
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { scenario, out } => {
            let cfg = resolve(&scenario)?;
            let report = run_scenario(&cfg)?;
            let dir = out_dir(out, &cfg)?;
            let path = report_path(&dir, &cfg.name, cfg.format);
            emit_report(&report, cfg.format, &path)?;
            println!("{}", summary(&report));
            log::info!("report written to {}", path.display());
        }
        Command::Sweep { trials, seeds, out } => {
            let mut rows = Vec::new();
            for name in SCENARIO_NAMES {
                let mut aucs = Vec::new();
                for &seed in &seeds {
                    let mut cfg = builtin_scenario(name)?;
                    cfg.seed = seed;
                    if let Some(t) = trials {
                        cfg.trials = t;
                    }
                    let report = run_scenario(&cfg)?;
                    println!("{}", summary(&report));
                    if let Some(dir) = &out {
                        let dir = out_dir(Some(dir.clone()), &cfg)?;
                        let path = report_path(&dir, &format!("{name}-seed{seed}"), cfg.format);
                        emit_report(&report, cfg.format, &path)?;
                    }
                    aucs.push((report.auc, report.mean_decision_time(), report.mean_correct_time()));
                }
                let n = aucs.len() as f64;
                let auc = aucs.iter().map(|a| a.0).sum::<f64>() / n;
                let time = aucs.iter().map(|a| a.1).sum::<f64>() / n;
                let correct = aucs.iter().map(|a| a.2).sum::<f64>() / n;
                rows.push(format!("{name},{auc},{time},{correct}"));
            }
            println!("scenario,mean_auc,mean_decision_time,mean_correct_time");
            for r in &rows {
                println!("{r}");
            }
            if let Some(dir) = out {
                let path = dir.join("sweep.csv");
                let body = format!("scenario,mean_auc,mean_decision_time,mean_correct_time\n{}\n", rows.join("\n"));
                std::fs::write(&path, body).map_err(|e| Error::Io { path, source: e })?;
            }
        }
        Command::Analyze {
            scenario,
            trajectories,
            out,
        } => {
            let cfg = resolve(&scenario)?;
            let r = analyze_scenario(&cfg, trajectories)?;
            let dir = out_dir(out, &cfg)?;
            let path = dir.join(format!("{}-curves.jsonl", cfg.name));
            let records: Vec<_> = r.analytic.iter().chain(&r.monte_carlo).cloned().collect();
            write_curves(&path, r.gamma0, &records)?;
            println!("{:<20} gamma0={:.4} max|analytic-mc|={:.5}", r.scenario, r.gamma0, r.max_gap);
        }
        Command::ExportCsi { n, out, scenario } => {
            let cfg = resolve(&scenario)?;
            export_csi_dataset(&cfg.channel, n, cfg.seed, &out)?;
            println!("wrote {n} records to {}", out.display());
        }
        Command::ValidateTrace { path } => {
            let tr = CsiTrace::load(&path)?;
            println!(
                "{}: ok, {} records, {}x{} ({})",
                path.display(),
                tr.records.len(),
                tr.header.m_r,
                tr.header.m_t,
                tr.header.label
            );
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        3
    } else {
        match e {
            Error::Config(_) | Error::InvalidParameter(_) | Error::Parse { .. } | Error::DimensionMismatch { .. } => 2,
            _ => 1,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
