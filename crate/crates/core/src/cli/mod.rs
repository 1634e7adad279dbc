//! Command implementations behind the `flowforest` binary. Each command
//! reads its inputs, writes its artifacts under the output directory and
//! returns a short summary for the terminal.

mod config;
pub mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compiler::{compile_classifier, CompileError, CompileOptions, DeploymentConfig};
use crate::dataplane::{replay, write_verdicts_csv, DataplaneError, SimulationStats, Switch, SwitchOptions};
use crate::features::{
    build_context_dataset, read_context_dir, write_context_dir, write_matrix_csv, Column, ContextData, FeatureError,
    FeatureMatrix,
};
use crate::trainer::{train_classifier, Classifier, TrainerError, TrainingReport, SCHEMA_VERSION};
use crate::traffic::{
    assemble_flows, parse_capture, read_labels, CaptureFormat, LabeledDataset, ParsedCapture, TrafficError,
};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Constraint(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Constraint(_) => 4,
        }
    }
}

impl From<TrafficError> for CliError {
    fn from(e: TrafficError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainerError> for CliError {
    fn from(e: TrainerError) -> Self {
        match e {
            TrainerError::NoModelFound { .. } => CliError::Constraint(e.to_string()),
            TrainerError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CompileError> for CliError {
    fn from(e: CompileError) -> Self {
        match e {
            CompileError::HardwareLimitExceeded { .. } | CompileError::DepthExceeded { .. } => {
                CliError::Constraint(e.to_string())
            }
            CompileError::InvalidAccuracy(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DataplaneError> for CliError {
    fn from(e: DataplaneError) -> Self {
        match e {
            DataplaneError::InvalidOptions(_) => CliError::Usage(e.to_string()),
            DataplaneError::ExternalFeature(_) => CliError::Constraint(e.to_string()),
            DataplaneError::MissingEntry(_) => CliError::Data(e.to_string()),
        }
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Usage(format!("{}: file not found", path.display())),
        _ => CliError::Data(format!("{}: {e}", path.display())),
    })
}

fn read_text(path: &Path) -> Result<String, CliError> {
    String::from_utf8(read_input(path)?).map_err(|_| CliError::Data(format!("{}: not UTF-8", path.display())))
}

fn write_output(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn with_context<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Usage(format!("missing {what} (set it in the config or pass the flag)")))
}

pub fn load_capture(path: &Path) -> Result<ParsedCapture, CliError> {
    let raw = read_input(path)?;
    parse_capture(&raw, CaptureFormat::from_path(path)).map_err(with_context(path))
}

fn load_labels(path: &Path) -> Result<std::collections::BTreeMap<crate::traffic::FlowKey, String>, CliError> {
    read_labels(&read_input(path)?[..]).map_err(with_context(path))
}

/// Flows of the configured capture with their labels, plus the number of
/// unlabeled flows and skipped packets.
pub fn load_dataset(cfg: &RunConfig) -> Result<(LabeledDataset, usize, usize), CliError> {
    let capture_path = required(&cfg.capture, "capture")?;
    let labels_path = required(&cfg.labels, "labels file")?;
    let capture = load_capture(capture_path)?;
    let labels = load_labels(labels_path)?;
    let (ds, dropped) = LabeledDataset::from_flows(assemble_flows(&capture.packets), &labels)?;
    Ok((ds, dropped, capture.skipped))
}

fn write_run(cfg: &RunConfig) -> Result<(), CliError> {
    write_output(&cfg.out_dir.join("run.toml"), cfg.to_toml())
}

pub fn cmd_extract(cfg: &RunConfig) -> Result<String, CliError> {
    cfg.validate()?;
    let dir = cfg.out_dir.join("features");
    let capture = load_capture(required(&cfg.capture, "capture")?)?;
    let labels = load_labels(required(&cfg.labels, "labels file")?)?;
    write_run(cfg)?;
    if capture.packets.is_empty() {
        log::warn!("capture holds no usable packets, writing empty feature files");
        let columns = Column::packet_columns();
        for &p in &cfg.packet_counts {
            let ctx = ContextData {
                packet_count: p,
                x: FeatureMatrix::new(columns.clone(), vec![Vec::new(); columns.len()], vec![true; columns.len()], vec![]),
                y: vec![],
                short_flows: 0,
            };
            let path = dir.join(format!("features_p{p}.csv"));
            let mut buf = Vec::new();
            write_matrix_csv(&mut buf, &ctx, &[])?;
            write_output(&path, buf)?;
        }
        return Ok(format!("capture is empty; wrote {} empty feature files", cfg.packet_counts.len()));
    }
    let (ds, dropped) = LabeledDataset::from_flows(assemble_flows(&capture.packets), &labels)?;
    let data = build_context_dataset(&ds, &cfg.packet_counts)?;
    fs::create_dir_all(&dir).map_err(with_context(&dir))?;
    write_context_dir(&dir, &data)?;
    let mut s = format!(
        "{} labeled flows ({} unlabeled dropped, {} packets skipped), classes {:?}\n",
        ds.flows.len(),
        dropped,
        capture.skipped,
        ds.classes
    );
    for c in &data.contexts {
        let _ = writeln!(s, "p={:<3} {:>7} rows  {:>7} flows too short", c.packet_count, c.x.n_rows(), c.short_flows);
    }
    let _ = write!(s, "wrote {}", dir.display());
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingOutput {
    pub schema_version: u32,
    pub run: RunConfig,
    pub report: TrainingReport,
}

pub fn cmd_train(cfg: &RunConfig, features: Option<&Path>) -> Result<String, CliError> {
    cfg.validate()?;
    let data = match features {
        Some(dir) => {
            if !dir.is_dir() {
                return Err(CliError::Usage(format!("{}: not a directory", dir.display())));
            }
            read_context_dir(dir)?
        }
        None => build_context_dataset(&load_dataset(cfg)?.0, &cfg.packet_counts)?,
    };
    write_run(cfg)?;
    let save_report = |report: &TrainingReport| -> Result<(), CliError> {
        let out = TrainingOutput {
            schema_version: SCHEMA_VERSION,
            run: cfg.clone(),
            report: report.clone(),
        };
        let json = serde_json::to_string_pretty(&out).expect("report serializes");
        write_output(&cfg.out_dir.join("report.json"), json + "\n")?;
        write_output(&cfg.out_dir.join("report.csv"), report.to_csv())
    };
    let (mut clf, report) = match train_classifier(&data, &cfg.trainer()) {
        Ok(r) => r,
        Err(TrainerError::NoModelFound { thr_s, report }) => {
            save_report(&report)?;
            return Err(TrainerError::NoModelFound { thr_s, report }.into());
        }
        Err(e) => return Err(e.into()),
    };
    clf.thr_c = cfg.thr_c;
    save_report(&report)?;
    write_output(&cfg.out_dir.join("classifier.json"), clf.to_json() + "\n")?;
    let mut s = String::new();
    for (i, m) in clf.models.iter().enumerate() {
        let reuse = m.reused_from.map_or(String::new(), |r| format!(" (reuses model {r})"));
        let names: Vec<String> = m.features().iter().map(|c| c.to_string()).collect();
        let _ = writeln!(
            s,
            "model {i}: from {} packets, score {:.3}, features [{}]{reuse}",
            m.activation_count,
            m.score_at_extraction,
            names.join(", ")
        );
    }
    let _ = write!(s, "wrote {}", cfg.out_dir.join("classifier.json").display());
    Ok(s)
}

pub fn cmd_compile(cfg: &RunConfig, classifier: &Path) -> Result<String, CliError> {
    cfg.validate()?;
    let clf = Classifier::from_json(&read_text(classifier)?).map_err(with_context(classifier))?;
    let options = CompileOptions {
        accuracy: cfg.accuracy,
        hardware: cfg.hardware,
        thr_c: Some(cfg.thr_c),
    };
    let config = compile_classifier(&clf, &options)?;
    write_run(cfg)?;
    write_output(&cfg.out_dir.join("deployment.json"), config.to_json())?;
    write_output(&cfg.out_dir.join("tables.txt"), config.table_dump())?;
    let entries: usize = config.models.iter().map(|m| m.entry_count()).sum();
    Ok(format!(
        "{} models, {} table entries, {} feature bits\nper-flow row: {} bits ({} flows per 10MB)\nwrote {}",
        config.models.len(),
        entries,
        config.layout.total_bits,
        config.memory.row_bits,
        config.memory.flows_per_10mb,
        cfg.out_dir.join("deployment.json").display()
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub schema_version: u32,
    pub run: RunConfig,
    pub thr_s: f64,
    pub thr_c: f64,
    pub stats: SimulationStats,
}

pub fn cmd_simulate(cfg: &RunConfig, deployment: &Path) -> Result<String, CliError> {
    cfg.validate()?;
    let config = DeploymentConfig::from_json(&read_text(deployment)?).map_err(with_context(deployment))?;
    let capture = load_capture(required(&cfg.capture, "capture")?)?;
    let labels = match &cfg.labels {
        Some(p) => load_labels(p)?,
        None => Default::default(),
    };
    let classes = config.classes.clone();
    let (thr_s, thr_c) = (config.thr_s, config.thr_c);
    let options = SwitchOptions {
        rows: cfg.rows,
        probes: cfg.probes,
        timeout_us: cfg.timeout_us,
        seed: cfg.hash_seed,
    };
    let mut switch = Switch::new(config, options)?;
    let stats = replay(&mut switch, &capture.packets, &labels)?;
    write_run(cfg)?;
    let mut csv = Vec::new();
    write_verdicts_csv(&mut csv, &stats.verdicts, &classes).map_err(|e| CliError::Data(e.to_string()))?;
    write_output(&cfg.out_dir.join("verdicts.csv"), csv)?;
    let summary = format!(
        "{} packets, {} flows: {:.1}% classified (F1 {:.3}), {} unclassified (table full), {} pending\nrow {} bits, {} rows = {} bits\nwrote {}",
        stats.packets,
        stats.flows,
        stats.classified_pct,
        stats.f1_classified,
        stats.unclassified_flows,
        stats.pending_flows,
        stats.memory.row_bits,
        cfg.rows,
        stats.memory_bits,
        cfg.out_dir.join("stats.json").display()
    );
    let out = SimulationOutput {
        schema_version: SCHEMA_VERSION,
        run: cfg.clone(),
        thr_s,
        thr_c,
        stats,
    };
    let json = serde_json::to_string_pretty(&out).expect("stats serialize");
    write_output(&cfg.out_dir.join("stats.json"), json + "\n")?;
    Ok(summary)
}

fn run_name(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .or_else(|| path.file_stem())
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().to_string())
}

/// Writes `classified.csv` and `bits.csv` plus SVG renderings of both.
pub fn cmd_report(stats: &[PathBuf], deployments: &[PathBuf], out: &Path) -> Result<String, CliError> {
    if stats.is_empty() && deployments.is_empty() {
        return Err(CliError::Usage("report needs at least one stats or deployment file".into()));
    }
    let mut classified = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Data(e.to_string());
    classified
        .write_record(["run", "thr_c", "packet_count", "classified_pct", "cumulative_pct", "cumulative_f1"])
        .map_err(csv_err)?;
    let mut series = Vec::new();
    // (run, thr_s, per-field widths, row bits, flows per 10MB)
    type BitsRow = (String, f64, Vec<(String, u32)>, u32, u64);
    let mut bits_rows: Vec<BitsRow> = Vec::new();
    for path in stats {
        let run: SimulationOutput = serde_json::from_str(&read_text(path)?).map_err(with_context(path))?;
        let name = run_name(path);
        for c in &run.stats.contexts {
            classified
                .write_record([
                    name.clone(),
                    run.thr_c.to_string(),
                    c.packet_count.to_string(),
                    format!("{:.4}", c.classified_pct),
                    format!("{:.4}", c.cumulative_pct),
                    format!("{:.6}", c.cumulative_f1),
                ])
                .map_err(csv_err)?;
        }
        let pts = |f: &dyn Fn(&crate::dataplane::ContextStats) -> f64| {
            run.stats.contexts.iter().map(|c| (c.packet_count as f64, f(c))).collect()
        };
        series.push(svg::Series {
            name: format!("{name}: classified %"),
            points: pts(&|c| c.cumulative_pct),
        });
        series.push(svg::Series {
            name: format!("{name}: F1 x 100"),
            points: pts(&|c| 100.0 * c.cumulative_f1),
        });
        if deployments.is_empty() {
            let m = run.stats.memory;
            bits_rows.push((name, run.thr_s, vec![("features".into(), m.feature_bits)], m.row_bits, m.flows_per_10mb));
        }
    }
    for path in deployments {
        let d = DeploymentConfig::from_json(&read_text(path)?).map_err(with_context(path))?;
        let fields = d.layout.fields.iter().map(|f| (f.name().to_string(), f.width)).collect();
        bits_rows.push((run_name(path), d.thr_s, fields, d.memory.row_bits, d.memory.flows_per_10mb));
    }

    let mut bits = csv::Writer::from_writer(Vec::new());
    bits.write_record(["run", "thr_s", "component", "bits", "flows_per_10mb"]).map_err(csv_err)?;
    for (name, thr_s, fields, total, flows) in &bits_rows {
        let mut rows = vec![
            ("base".to_string(), crate::compiler::ROW_BASE_BITS),
            ("packet_count".to_string(), crate::compiler::ROW_COUNT_BITS),
        ];
        rows.extend(fields.iter().cloned());
        for (component, b) in rows {
            bits.write_record([name.clone(), thr_s.to_string(), component, b.to_string(), String::new()])
                .map_err(csv_err)?;
        }
        bits.write_record([name.clone(), thr_s.to_string(), "total".into(), total.to_string(), flows.to_string()])
            .map_err(csv_err)?;
    }
    let into = |w: csv::Writer<Vec<u8>>| w.into_inner().map_err(|e| CliError::Data(e.to_string()));
    write_output(&out.join("classified.csv"), into(classified)?)?;
    write_output(&out.join("bits.csv"), into(bits)?)?;
    if !series.is_empty() {
        let chart = svg::line_chart(
            "Classified flows and F1 by packet count",
            "packet count",
            "percent",
            100.0,
            &series,
        );
        write_output(&out.join("classified.svg"), chart)?;
    }
    let bars: Vec<(String, f64)> = bits_rows
        .iter()
        .map(|(name, thr_s, _, total, _)| (format!("{name} ({thr_s})"), *total as f64))
        .collect();
    write_output(
        &out.join("bits.svg"),
        svg::bar_chart("Per-flow register bits", "run (thrS)", "bits", &bars),
    )?;
    Ok(format!(
        "{} runs, {} deployments; wrote {}",
        stats.len(),
        bits_rows.len(),
        out.display()
    ))
}
