use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use navfuse::harness::{
    ablate, ablation_csv, generate_suite, load_suite, render::render_log, run_suite, sweep_csv, sweep_theta,
    write_suite, AblationMode, RunOptions, SuiteConfig, SuiteReport, SuiteSpec,
};

#[derive(Parser)]
#[command(name = "navfuse", version, about = "Imagination-to-value navigation experiments")]
struct Cli {
    /// Directory for reports, CSVs and logs.
    #[arg(long, global = true, env = "NAVFUSE_OUT", default_value = "navfuse-out")]
    out_dir: PathBuf,
    /// Run episodes one at a time.
    #[arg(long, global = true)]
    serial: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a suite and write report.json.
    Run {
        suite: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write one JSONL log per episode under logs/.
        #[arg(long)]
        logs: bool,
    },
    /// Run the suite under base-only, +prior, +imagination and full fusion.
    Ablate {
        suite: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the suite in +imagination mode across gate thresholds.
    SweepTheta {
        suite: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8,1.0")]
        thetas: Vec<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Replay an episode log into PGM/PNG renders.
    Render {
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a suite directory from a suite spec.
    GenSuite {
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Suite directory (defaults to <out-dir>/suite).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

// Stdout writes that tolerate a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = write!(std::io::stdout(), $($arg)*);
    }};
}

fn load_config(path: Option<&Path>) -> Result<SuiteConfig> {
    match path {
        None => Ok(SuiteConfig::reference()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            SuiteConfig::from_json_over_reference(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn print_report(label: &str, r: &SuiteReport) {
    let a = &r.aggregates;
    say!(
        "{label}: episodes={} SR={:.1} SPL={:.1} TL={:.2} NE={:.2} fallback={:.3} invalid={}\n",
        a.episodes,
        100.0 * a.sr,
        100.0 * a.spl,
        a.tl,
        a.ne,
        a.fallback_rate,
        r.invalid.len()
    );
    for bad in &r.invalid {
        eprintln!("invalid episode {}: {}", bad.id, bad.reason);
    }
}

fn run(cli: Cli) -> Result<bool> {
    let out = &cli.out_dir;
    let opts = |log_dir: Option<PathBuf>| RunOptions {
        parallel: !cli.serial,
        log_dir,
    };
    match &cli.cmd {
        Cmd::Run { suite, config, logs } => {
            let cfg = load_config(config.as_deref())?;
            let s = load_suite(suite)?;
            fs::create_dir_all(out)?;
            let r = run_suite(&s, &cfg, &opts(logs.then(|| out.join("logs"))))?;
            r.save(&out.join("report.json"))?;
            print_report("run", &r);
            say!("report hash {}\n", r.hash());
            Ok(r.invalid.is_empty())
        }
        Cmd::Ablate { suite, config } => {
            let cfg = load_config(config.as_deref())?;
            let s = load_suite(suite)?;
            fs::create_dir_all(out)?;
            let rows = ablate(&s, &cfg, &AblationMode::ALL, &opts(None))?;
            let csv = ablation_csv(&rows);
            fs::write(out.join("ablation.csv"), &csv)?;
            say!("{csv}");
            Ok(rows.iter().all(|(_, r)| r.invalid.is_empty()))
        }
        Cmd::SweepTheta { suite, thetas, config } => {
            if thetas.iter().any(|t| !(0.0..=1.0).contains(t)) {
                bail!("thetas must lie in [0, 1]");
            }
            let cfg = load_config(config.as_deref())?;
            let s = load_suite(suite)?;
            fs::create_dir_all(out)?;
            let points = sweep_theta(&s, &cfg, thetas, &opts(None))?;
            let csv = sweep_csv(&points);
            fs::write(out.join("sweep_theta.csv"), &csv)?;
            fs::write(out.join("sweep_theta.json"), serde_json::to_string_pretty(&points)?)?;
            say!("{csv}");
            Ok(true)
        }
        Cmd::Render { log, out } => {
            let summary = render_log(log, out)?;
            say!("rendered {} steps into {} files under {}\n", summary.steps, summary.files.len(), out.display());
            Ok(true)
        }
        Cmd::GenSuite { spec, seed, n, out: dir } => {
            let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
            let spec: SuiteSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", spec.display()))?;
            let suite = generate_suite(&spec, *seed, *n)?;
            let dir = dir.clone().unwrap_or_else(|| out.join("suite"));
            write_suite(&suite, &dir)?;
            say!("wrote {} episodes to {}\n", suite.episodes.len(), dir.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
