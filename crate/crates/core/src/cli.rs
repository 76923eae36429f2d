//! `tcbm` command line: `run` and `dump-path`.
//!
//! Exit codes: 0 success, 2 configuration or usage errors, 3 runtime
//! contract breaches.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiment::{
    compare_schemes_with, run_experiment_with, sample_path, ExperimentConfig, RateReport,
    RunOptions,
};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tcbm", version, about = "Time-changed Brownian motion scheme and strong-rate harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a strong-convergence experiment and write report.json / report.csv.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<u64>,
        /// Comma separated resolution ladder, e.g. 16,32,64.
        #[arg(long, value_delimiter = ',')]
        resolutions: Option<Vec<usize>>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overwrite existing report files.
        #[arg(long)]
        force: bool,
        /// Worker threads (default: available cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write the (t, x_hat) breakpoints of one seeded sample path.
    DumpPath {
        config: PathBuf,
        #[arg(long)]
        sample: u64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// Overrides applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<u64>,
    pub resolutions: Option<Vec<usize>>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if let Some(samples) = self.samples {
            config.samples = samples;
        }
        if let Some(resolutions) = &self.resolutions {
            config.resolutions = resolutions.clone();
        }
    }
}

/// Written next to the reports as `manifest.json`. Kept out of
/// `report.json` so reports stay byte-identical across reruns.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    pub overrides: Overrides,
    pub jobs: Option<usize>,
    pub timestamp_unix: u64,
    pub tool_version: String,
}

/// Parses a TOML experiment config.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let field = msg
            .split('`')
            .nth(1)
            .unwrap_or("config")
            .to_string();
        Error::config(field, msg)
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Serializes a config back to the TOML file format.
pub fn config_to_toml(config: &ExperimentConfig) -> String {
    toml::to_string(config).expect("config is always representable as TOML")
}

fn exit_code(err: &Error) -> i32 {
    if err.is_runtime_breach() {
        EXIT_RUNTIME
    } else {
        EXIT_CONFIG
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            samples,
            resolutions,
            out,
            force,
            jobs,
        } => {
            let overrides = Overrides {
                seed,
                samples,
                resolutions,
            };
            cmd_run(&config, &overrides, &out, force, jobs, stdout)
        }
        Command::DumpPath {
            config,
            sample,
            n,
            out,
        } => cmd_dump_path(&config, sample, n, &out, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::config("out", format!("cannot create {}: {e}", dir.display())))
}

pub fn cmd_run(
    config_path: &Path,
    overrides: &Overrides,
    out: &Path,
    force: bool,
    jobs: Option<usize>,
    stdout: &mut dyn Write,
) -> Result<()> {
    let mut config = load_config(config_path)?;
    overrides.apply(&mut config);
    config.validate()?;
    if jobs == Some(0) {
        return Err(Error::config("jobs", "must be at least 1"));
    }

    let json_path = out.join("report.json");
    let csv_path = out.join("report.csv");
    if !force {
        for p in [&json_path, &csv_path] {
            if p.exists() {
                return Err(Error::config(
                    "out",
                    format!("{} exists; pass --force to overwrite", p.display()),
                ));
            }
        }
    }
    prepare_out_dir(out)?;

    let options = RunOptions {
        jobs,
        check_time_change_bound: false,
    };
    let reports: Vec<RateReport> = if config.compare {
        let cmp = compare_schemes_with(&config, options)?;
        fs::write(&json_path, to_json(&cmp))?;
        vec![cmp.time_change, cmp.euler_maruyama]
    } else {
        let report = run_experiment_with(&config, options)?.report;
        fs::write(&json_path, to_json(&report))?;
        vec![report]
    };

    let mut csv = Vec::new();
    if reports.len() == 1 {
        reports[0].write_csv(&mut csv)?;
    } else {
        writeln!(csv, "scheme,n,mean_error,stderr")?;
        for r in &reports {
            let scheme = serde_json::to_value(r.scheme).expect("enum serializes");
            for row in &r.per_resolution {
                writeln!(
                    csv,
                    "{},{},{},{}",
                    scheme.as_str().unwrap_or_default(),
                    row.n,
                    row.mean_error,
                    row.stderr
                )?;
            }
        }
    }
    fs::write(&csv_path, csv)?;

    let manifest = RunManifest {
        config_path: config_path.to_path_buf(),
        output_dir: out.to_path_buf(),
        overrides: overrides.clone(),
        jobs,
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    fs::write(out.join("manifest.json"), to_json(&manifest))?;

    for r in &reports {
        print_summary(r, stdout)?;
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

fn print_summary(report: &RateReport, out: &mut dyn Write) -> io::Result<()> {
    let theory = &report.theoretical_orders;
    let name = serde_json::to_value(report.scheme).expect("enum serializes");
    writeln!(
        out,
        "{}: fitted order {} (stderr {})",
        name.as_str().unwrap_or_default(),
        fmt_opt(report.fitted_order),
        fmt_opt(report.fit_stderr)
    )?;
    writeln!(
        out,
        "  theory (alpha = {}): holder alpha^2*beta = {:.4}, smooth alpha = {}, euler-maruyama beta-1/2 = {}",
        theory.alpha,
        theory.holder,
        fmt_opt(theory.smooth),
        fmt_opt(theory.euler_maruyama)
    )?;
    for r in &report.per_resolution {
        writeln!(out, "  n = {:>6}  error = {:.6e}  stderr = {:.2e}", r.n, r.mean_error, r.stderr)?;
    }
    Ok(())
}

pub fn cmd_dump_path(
    config_path: &Path,
    sample: u64,
    n: usize,
    out: &Path,
    stdout: &mut dyn Write,
) -> Result<()> {
    let config = load_config(config_path)?;
    let path = sample_path(&config, sample, n)?;
    prepare_out_dir(out)?;
    let file = out.join(format!("path-{sample}-{n}.csv"));
    let mut buf = Vec::new();
    path.write_csv(&mut buf)?;
    fs::write(&file, buf)?;
    writeln!(stdout, "wrote {}", file.display())?;
    Ok(())
}
