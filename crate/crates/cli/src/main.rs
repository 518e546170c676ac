use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod report;

use config::Settings;
use error::CliError;
use report::{Format, Report};

/// Simulate a single-ion spin-heat engine driven on Raman sidebands.
#[derive(Parser, Debug)]
#[command(name = "spinheat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Time series of the extraction stroke plus initial/final phonon distributions.
    Dynamics(CommonArgs),
    /// Optimal extraction time (first minimum of the mean phonon number).
    FindTf(CommonArgs),
    /// Work at the optimal time as a function of the Lamb-Dicke parameter.
    SweepEta(CommonArgs),
    /// Optimal eta and work over a grid of sideband orders and bath occupations.
    SweepNbar(CommonArgs),
    /// Sub-additivity bound curves versus the final down population.
    Bound(CommonArgs),
    /// Full extract / reset / re-thermalize cycle.
    Cycle(CommonArgs),
    /// Compare the closed forms against dense reference propagation.
    OracleCheck(OracleArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct CommonArgs {
    /// Lamb-Dicke parameter.
    #[arg(long)]
    eta: Option<String>,
    /// Sideband order (comma list for sweep-nbar).
    #[arg(long)]
    kappa: Option<String>,
    /// Mean thermal phonon number of the hot bath (comma list for sweep-nbar and bound).
    #[arg(long)]
    nbar0: Option<String>,
    /// Spin inverse temperature, a number or "inf".
    #[arg(long = "lambda-s")]
    lambda_s: Option<String>,
    /// Thermal tail mass allowed beyond the Fock cutoff.
    #[arg(long = "tail-eps")]
    tail_eps: Option<String>,
    /// Largest Omega t: series end (dynamics), scan window (find-tf, sweeps) or extraction time (cycle).
    #[arg(long)]
    tmax: Option<String>,
    /// Sample count (time points, scan points, bound points or points per cycle stage).
    #[arg(long)]
    samples: Option<String>,
    /// Spin reset rate.
    #[arg(long = "gamma-s")]
    gamma_s: Option<String>,
    /// Re-thermalization rate.
    #[arg(long = "gamma-h")]
    gamma_h: Option<String>,
    /// Reset duration in units of 1/gamma_s.
    #[arg(long = "t-reset")]
    t_reset: Option<String>,
    /// Re-thermalization duration in units of 1/gamma_h.
    #[arg(long = "t-therm")]
    t_therm: Option<String>,
    /// Smallest eta of the sweep grid.
    #[arg(long = "eta-min")]
    eta_min: Option<String>,
    /// Largest eta of the sweep grid.
    #[arg(long = "eta-max")]
    eta_max: Option<String>,
    /// Number of eta grid points.
    #[arg(long = "eta-count")]
    eta_count: Option<String>,
    /// Relative tolerance of the t_f refinement.
    #[arg(long = "refine-tol")]
    refine_tol: Option<String>,
    /// Worker threads for sweep-nbar (0 = one per core).
    #[arg(long)]
    workers: Option<String>,
    /// Output file (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Plain-text key = value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct OracleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Perturb eta on the dense side only (harness sanity check).
    #[arg(long = "inject-eta-mismatch")]
    inject_eta_mismatch: Option<String>,
}

impl CommonArgs {
    fn flags(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("eta", self.eta.clone()),
            ("kappa", self.kappa.clone()),
            ("nbar0", self.nbar0.clone()),
            ("lambda-s", self.lambda_s.clone()),
            ("tail-eps", self.tail_eps.clone()),
            ("tmax", self.tmax.clone()),
            ("samples", self.samples.clone()),
            ("gamma-s", self.gamma_s.clone()),
            ("gamma-h", self.gamma_h.clone()),
            ("t-reset", self.t_reset.clone()),
            ("t-therm", self.t_therm.clone()),
            ("eta-min", self.eta_min.clone()),
            ("eta-max", self.eta_max.clone()),
            ("eta-count", self.eta_count.clone()),
            ("refine-tol", self.refine_tol.clone()),
            ("workers", self.workers.clone()),
        ]
    }
}

struct Output {
    path: Option<PathBuf>,
    format: Format,
}

/// Merge flags over the config file and pull out the output settings.
fn settings(common: &CommonArgs, extra: Vec<(&'static str, Option<String>)>) -> Result<(Settings, Output), CliError> {
    let mut flags = common.flags();
    flags.extend(extra);
    let mut s = Settings::new(common.config.as_deref(), flags)?;
    let format = match (common.format, s.string("format")) {
        (Some(f), _) => f,
        (None, Some(v)) => v.parse().map_err(CliError::Validation)?,
        (None, None) => Format::Csv,
    };
    let path = common.out.clone().or_else(|| s.string("out").map(PathBuf::from));
    Ok((s, Output { path, format }))
}

fn emit(report: &Report, out: &Output) -> Result<(), CliError> {
    match &out.path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            report.write(out.format, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            report.write(out.format, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

/// Exit code 3 marks a failed oracle comparison.
fn run(cli: Cli) -> Result<u8, CliError> {
    let (report, ok, out) = match &cli.command {
        Command::OracleCheck(a) => {
            let (mut s, out) = settings(&a.common, vec![("inject-eta-mismatch", a.inject_eta_mismatch.clone())])?;
            let (report, ok) = commands::oracle_check(&mut s)?;
            (report, ok, out)
        }
        Command::Dynamics(a)
        | Command::FindTf(a)
        | Command::SweepEta(a)
        | Command::SweepNbar(a)
        | Command::Bound(a)
        | Command::Cycle(a) => {
            let (mut s, out) = settings(a, vec![])?;
            let report = match &cli.command {
                Command::Dynamics(_) => commands::dynamics(&mut s)?,
                Command::FindTf(_) => commands::find_tf(&mut s)?,
                Command::SweepEta(_) => commands::sweep_eta(&mut s)?,
                Command::SweepNbar(_) => commands::sweep_nbar(&mut s)?,
                Command::Bound(_) => commands::bound(&mut s)?,
                Command::Cycle(_) => commands::cycle(&mut s)?,
                Command::OracleCheck(_) => unreachable!(),
            };
            (report, true, out)
        }
    };
    emit(&report, &out)?;
    Ok(if ok { 0 } else { 3 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("spinheat: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
