//! `spt`: runs the single-photon transistor simulator from config files and
//! writes plot-ready CSV and JSON with a run manifest.
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 for
//! numeric or degenerate-data errors.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CavityChoice, Condition, GainArgs, RunArgs, SpectraArgs, WignerArgs};

#[derive(Parser)]
#[command(name = "spt", version, about = "Single-photon transistor simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Device parameter file (JSON). Defaults to the built-in reference device.
    #[arg(long)]
    device: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct Run {
    #[command(flatten)]
    common: Common,
    /// Protocol file (JSON). Defaults to the reference operating point.
    #[arg(long)]
    protocol: Option<PathBuf>,
    /// Overrides the protocol seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the protocol shot count.
    #[arg(long)]
    shots: Option<usize>,
}

impl Run {
    fn args(&self) -> RunArgs<'_> {
        RunArgs {
            device: self.common.device.as_deref(),
            protocol: self.protocol.as_deref(),
            seed: self.seed,
            shots: self.shots,
            out: &self.common.out,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Reflection (cavity I) or transmission (cavity II) spectra per qubit level.
    Spectra {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "ii")]
        cavity: CavityChoice,
        #[arg(long, default_value_t = 801)]
        points: usize,
        /// Sweep margin beyond the outermost dressed resonance (MHz).
        #[arg(long)]
        margin_mhz: Option<f64>,
    },
    /// Gated and ungated switch runs with on/off statistics.
    Switch {
        #[command(flatten)]
        run: Run,
    },
    /// Semiclassical gain and extinction versus signal photon number.
    GainSweep {
        #[command(flatten)]
        common: Common,
        /// Protocol file supplying the gate pulse and signal window.
        #[arg(long)]
        protocol: Option<PathBuf>,
        #[arg(long, default_value_t = 3.0)]
        lo: f64,
        #[arg(long, default_value_t = 1.6e6)]
        hi: f64,
        #[arg(long, default_value_t = 60)]
        points: usize,
        /// Single-photon flip probability. Computed from cavity I when absent.
        #[arg(long)]
        eta: Option<f64>,
        /// Switch success probability.
        #[arg(long, default_value_t = commands::default_p_s())]
        p_s: f64,
    },
    /// Wigner function of the gate field conditioned on an on/off label.
    Wigner {
        #[command(flatten)]
        run: Run,
        #[arg(long, value_enum)]
        condition: Condition,
        #[arg(long, default_value_t = 2.0)]
        half_width: f64,
        #[arg(long, default_value_t = 81)]
        points: usize,
    },
    /// Calibration solve, single-photon prediction, gain and extinction.
    Calibrate {
        /// Calibration input file (JSON).
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Writes the default device and protocol files.
    Defaults {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Matched relaxation and detection instead of placeholders.
        #[arg(long)]
        matched: bool,
    },
}

fn run(cli: Cli) -> spt_core::Result<Vec<PathBuf>> {
    match cli.command {
        Command::Spectra { common, cavity, points, margin_mhz } => commands::spectra(SpectraArgs {
            device: common.device.as_deref(),
            cavity,
            points,
            margin_mhz,
            out: &common.out,
        }),
        Command::Switch { run } => commands::switch(run.args()),
        Command::GainSweep { common, protocol, lo, hi, points, eta, p_s } => commands::gain(GainArgs {
            device: common.device.as_deref(),
            protocol: protocol.as_deref(),
            lo,
            hi,
            points,
            eta,
            p_s,
            out: &common.out,
        }),
        Command::Wigner { run, condition, half_width, points } => commands::wigner(WignerArgs {
            run: run.args(),
            condition,
            half_width,
            points,
        }),
        Command::Calibrate { inputs, out } => commands::calibrate(&inputs, &out),
        Command::Defaults { out, matched } => commands::defaults(&out, matched),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}
