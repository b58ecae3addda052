use clap::{Parser, Subcommand};
use fresnel_cli::commands::*;
use fresnel_cli::{CliError, RunConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fresnel", version, about = "Multicarrier Fresnel-zone localization from CSI amplitudes")]
struct Cli {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trace per link (plus calibration sweeps in multipath scenes).
    Simulate {
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the phase-offset matrix from a calibration trace.
    Calibrate {
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Localize from time-aligned link traces.
    Localize {
        #[arg(long = "trace")]
        traces: Vec<PathBuf>,
        /// One per trace, in the same order.
        #[arg(long = "calib")]
        calibrations: Vec<PathBuf>,
        /// Process multipath traces without calibration.
        #[arg(long)]
        uncalibrated: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score estimate files against the ground truth stored in traces.
    Evaluate {
        #[arg(long = "estimates")]
        estimates: Vec<PathBuf>,
        /// Trace carrying the ground truth, one per estimates file.
        #[arg(long = "truth")]
        truth: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write heatmap, window-sweep and gap-group tables.
    Plotdata {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn pick(flag: Option<PathBuf>, cfg: &RunConfig, what: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| cfg.files.output.clone())
        .ok_or_else(|| CliError::Config(format!("{what} needs --out or files.output")))
}

fn or_config(flag: Vec<PathBuf>, configured: &[PathBuf]) -> Vec<PathBuf> {
    if flag.is_empty() {
        configured.to_vec()
    } else {
        flag
    }
}

fn list(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Simulate { out } => {
            let dir = pick(out, &cfg, "simulate")?;
            let written = cmd_simulate(&cfg, &dir)?;
            println!("wrote {}", list(&written));
        }
        Command::Calibrate { trace, out } => {
            let trace = trace
                .or_else(|| cfg.files.traces.first().cloned())
                .ok_or_else(|| CliError::Config("calibrate needs --trace".into()))?;
            let out = pick(out, &cfg, "calibrate")?;
            let m = cmd_calibrate(&cfg, &trace, &out)?;
            println!("wrote {} (max |offset| {:.3} rad)", out.display(), m.max_abs());
        }
        Command::Localize {
            traces,
            calibrations,
            uncalibrated,
            out,
        } => {
            let traces = or_config(traces, &cfg.files.traces);
            let calibrations = or_config(calibrations, &cfg.files.calibrations);
            let out = pick(out, &cfg, "localize")?;
            let r = cmd_localize(&cfg, &traces, &calibrations, uncalibrated, &out)?;
            println!(
                "wrote {}: {} estimates over {} windows ({:.1}% gaps)",
                out.display(),
                r.estimates.len(),
                r.windows,
                100.0 * r.gap_fraction()
            );
        }
        Command::Evaluate { estimates, truth, out } => {
            let estimates = or_config(estimates, &cfg.files.estimates);
            let truth = or_config(truth, &cfg.files.truth);
            let out = out.or_else(|| cfg.files.output.clone());
            let report = cmd_evaluate(&estimates, &truth, out.as_deref())?;
            print!("{}", report.render());
        }
        Command::Plotdata { out } => {
            let dir = pick(out, &cfg, "plotdata")?;
            let written = cmd_plotdata(&cfg, Path::new(&dir))?;
            println!("wrote {}", list(&written));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fresnel: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
