use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowforest::cli::{cmd_compile, cmd_extract, cmd_report, cmd_simulate, cmd_train, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "flowforest", version, about = "Early flow classification with per-packet-count random forests")]
struct Cli {
    /// TOML file with run settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    /// Packet capture (.pcap) or packet CSV (.csv).
    #[arg(long)]
    capture: Option<PathBuf>,
    /// Flow label CSV.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write one feature matrix per packet count.
    Extract {
        #[command(flatten)]
        common: Common,
        /// Comma-separated packet counts.
        #[arg(long, value_delimiter = ',')]
        packet_counts: Option<Vec<usize>>,
    },
    /// Train the sequence of context models.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory of feature matrices instead of a capture.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        thr_s: Option<f64>,
        #[arg(long)]
        thr_c: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        packet_counts: Option<Vec<usize>>,
    },
    /// Compile a classifier into switch tables and a register layout.
    Compile {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long)]
        accuracy: Option<f64>,
        #[arg(long)]
        thr_c: Option<f64>,
        #[arg(long)]
        max_trees: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        stages: Option<usize>,
    },
    /// Replay a capture through the switch model.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        deployment: PathBuf,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        probes: Option<usize>,
        #[arg(long)]
        timeout_us: Option<u64>,
    },
    /// Tabulate and plot simulation and deployment results.
    Report {
        #[arg(long)]
        stats: Vec<PathBuf>,
        #[arg(long)]
        deployment: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn apply(cfg: &mut RunConfig, c: Common) {
    if c.capture.is_some() {
        cfg.capture = c.capture;
    }
    if c.labels.is_some() {
        cfg.labels = c.labels;
    }
    if let Some(o) = c.out {
        cfg.out_dir = o;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Extract { common, packet_counts } => {
            apply(&mut cfg, common);
            set(&mut cfg.packet_counts, packet_counts);
            cmd_extract(&cfg)
        }
        Command::Train {
            common,
            features,
            thr_s,
            thr_c,
            packet_counts,
        } => {
            apply(&mut cfg, common);
            set(&mut cfg.thr_s, thr_s);
            set(&mut cfg.thr_c, thr_c);
            set(&mut cfg.packet_counts, packet_counts);
            cmd_train(&cfg, features.as_deref())
        }
        Command::Compile {
            common,
            classifier,
            accuracy,
            thr_c,
            max_trees,
            max_depth,
            stages,
        } => {
            apply(&mut cfg, common);
            set(&mut cfg.accuracy, accuracy);
            set(&mut cfg.thr_c, thr_c);
            set(&mut cfg.hardware.max_trees, max_trees);
            set(&mut cfg.hardware.max_depth, max_depth);
            set(&mut cfg.hardware.stages, stages);
            cmd_compile(&cfg, &classifier)
        }
        Command::Simulate {
            common,
            deployment,
            rows,
            probes,
            timeout_us,
        } => {
            apply(&mut cfg, common);
            set(&mut cfg.rows, rows);
            set(&mut cfg.probes, probes);
            set(&mut cfg.timeout_us, timeout_us);
            cmd_simulate(&cfg, &deployment)
        }
        Command::Report { stats, deployment, out } => cmd_report(&stats, &deployment, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
