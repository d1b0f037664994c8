use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hjm_cli::config::{read_flat_file, RunConfig};
use hjm_cli::study::{self, StudyRow};
use hjm_cli::{CliError, CliResult};

/// Monte Carlo pricing of caplets and swaptions under HJM forward-rate dynamics.
#[derive(Parser)]
#[command(name = "hjm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price once at the first step size and print one CSV row.
    Price(RunArgs),
    /// Price along a geometric ladder of step sizes and fit the bias slope.
    Converge(RunArgs),
    /// Compute a fine-step Simpson reference and write it as a cache file.
    Reference(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// vasicek or proportional.
    #[arg(long)]
    model: Option<String>,
    /// 5.1 (rectangle), 5.2 (trapezoid) or 5.3 (Simpson).
    #[arg(long)]
    algo: Option<String>,
    /// Time step(s), comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    h: Vec<String>,
    /// Fixed maturity step.
    #[arg(long, conflicts_with = "step_law")]
    delta: Option<String>,
    /// linear, sqrt or fourth.
    #[arg(long)]
    step_law: Option<String>,
    /// Number of Monte Carlo paths (e.g. 1e6).
    #[arg(long)]
    paths: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<String>,
    /// weak (random signs) or gaussian.
    #[arg(long)]
    noise: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leave the seconds column empty so output is byte-reproducible.
    #[arg(long)]
    no_timing: bool,
    /// Diagnostic: discount with h * f(t_k, T_ell) instead of the interpolated
    /// short rate; does not converge when the grids are misaligned.
    #[arg(long)]
    rough_discount: bool,
    /// Any configuration key, e.g. --set strike=0.04.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn pairs(&self) -> CliResult<Vec<(String, String)>> {
        let mut pairs = match &self.config {
            Some(path) => read_flat_file(path)?,
            None => Vec::new(),
        };
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        push("model", self.model.clone());
        push("algo", self.algo.clone());
        push("h", (!self.h.is_empty()).then(|| self.h.join(",")));
        push("delta", self.delta.clone());
        push("step_law", self.step_law.clone());
        push("paths", self.paths.clone());
        push("seed", self.seed.clone());
        push("threads", self.threads.clone());
        push("noise", self.noise.clone());
        push("out", self.out.as_ref().map(|p| p.display().to_string()));
        push("timing", self.no_timing.then(|| "off".to_string()));
        push(
            "rough_discount",
            self.rough_discount.then(|| "on".to_string()),
        );
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(pairs)
    }
}

fn write_output(
    out: Option<&Path>,
    body: impl FnOnce(&mut dyn Write) -> CliResult<()>,
) -> CliResult<()> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| CliError::Io { path, source }
    };
    match out {
        Some(path) => {
            let mut f = File::create(path).map_err(io_err(path))?;
            body(&mut f)?;
            f.flush().map_err(io_err(path))
        }
        None => body(&mut io::stdout().lock()),
    }
}

fn report_caps(rows: &[StudyRow]) {
    for r in rows.iter().filter(|r| r.cap_hits > 0) {
        eprintln!(
            "h = {}: volatility cap hit on {} of {} paths",
            r.h, r.cap_hits, r.paths
        );
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Price(args) => {
            let cfg = RunConfig::from_pairs(args.pairs()?)?;
            let row = study::run_price(&cfg)?;
            report_caps(std::slice::from_ref(&row));
            write_output(cfg.out.as_deref(), |w| study::emit_csv(&[row], w))
        }
        Command::Converge(args) => {
            let cfg = RunConfig::from_pairs(args.pairs()?)?;
            let rows = study::run_convergence_study(&cfg)?;
            report_caps(&rows);
            match study::fitted_slope(&rows) {
                Some(s) => eprintln!("fitted bias slope: {s:.3}"),
                None => eprintln!("fitted bias slope: unavailable (no reference)"),
            }
            write_output(cfg.out.as_deref(), |w| study::emit_csv(&rows, w))
        }
        Command::Reference(args) => {
            let mut pairs = args.pairs()?;
            if args.h.is_empty() && !pairs.iter().any(|(k, _)| k == "h") {
                pairs.push(("h".into(), "0.0125".into()));
            }
            let cfg = RunConfig::from_pairs(pairs)?;
            let row = study::run_reference(&cfg, cfg.h[0])?;
            report_caps(std::slice::from_ref(&row));
            let text = study::reference_file_text(&cfg, &row);
            write_output(cfg.out.as_deref(), |w| {
                w.write_all(text.as_bytes()).map_err(|source| CliError::Io {
                    path: "<reference output>".into(),
                    source,
                })
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
