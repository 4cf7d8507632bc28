//! `sdtlab`: simulation and analysis driver.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "sdtlab", version, about = "Superdense teleportation lab: simulate, reconstruct, analyze")]
pub struct Cli {
    /// TOML run configuration; flags take precedence over it.
    #[arg(long, global = true, env = "SDTLAB_CONFIG")]
    pub config: Option<PathBuf>,
    /// Master seed for every stochastic step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "sdtlab-out")]
    pub out: PathBuf,
    /// Table format.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Mle,
    Bme,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct SimFlags {
    /// Expected coincidences per conditional 36-setting tomography.
    #[arg(long)]
    pub counts: Option<f64>,
    /// Use expected counts instead of Poisson draws.
    #[arg(long)]
    pub noiseless: bool,
    /// Use the reference error budget for the source and encoder.
    #[arg(long)]
    pub error_budget: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a 36-setting count file for one encoded state.
    Simulate {
        /// Target phases φ₁ φ₂ φ₃ in degrees.
        #[arg(long, num_args = 3, value_names = ["PHI1", "PHI2", "PHI3"], allow_negative_numbers = true, required = true)]
        phases_deg: Vec<f64>,
        #[command(flatten)]
        sim: SimFlags,
        /// Two-photon counts over all 1296 setting pairs.
        #[arg(long)]
        joint: bool,
    },
    /// Reconstruct Bob's conditional states (or the joint state) from a count file.
    Tomo {
        #[arg(long)]
        counts: PathBuf,
        /// Settings catalog; defaults to the built-in 36 settings.
        #[arg(long)]
        settings: Option<PathBuf>,
        /// Efficiency calibration JSON, `{"ratios": [1, r2, r3, r4]}`.
        #[arg(long)]
        calib: Option<PathBuf>,
        #[arg(long, value_enum)]
        estimator: Option<EstimatorArg>,
        /// Encoded phases in degrees; enables correction and fidelity.
        #[arg(long, num_args = 3, value_names = ["PHI1", "PHI2", "PHI3"], allow_negative_numbers = true)]
        target_phases_deg: Option<Vec<f64>>,
        /// Monte Carlo error bars from this many Poisson resamplings.
        #[arg(long)]
        error_bars: Option<usize>,
        /// Reconstruct the 16-dimensional two-photon state from 1296 joint settings.
        #[arg(long)]
        joint: bool,
    },
    /// Run the SDT trial at every point of a phase grid.
    Sweep {
        /// Grid step in degrees; must divide 360.
        #[arg(long, default_value_t = 90.0)]
        step: f64,
        /// Repetitions per grid point (default 8 at 90°, otherwise 1).
        #[arg(long)]
        repeats: Option<usize>,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Mean MLE and BME fidelity and phase error versus count budget.
    Curve {
        #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = [50.0, 100.0, 300.0, 1000.0, 3000.0, 10000.0])]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long)]
        error_budget: bool,
    },
    /// Coincidences, minimum and maximum range per satellite pass.
    Link {
        /// Maximum elevations of the passes, degrees.
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        elevations: Option<Vec<f64>>,
        #[arg(long)]
        min_elevation: Option<f64>,
        #[arg(long)]
        altitude: Option<f64>,
        /// Analysis/detection loss on the satellite, dB (0 for the 10 dB budget).
        #[arg(long)]
        space_loss_db: Option<f64>,
        /// Pass sampling step, s.
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
    },
    /// Doppler phase ramp over a pass and its PI stabilization.
    Doppler {
        #[arg(long)]
        max_elevation: Option<f64>,
        #[arg(long, value_enum, default_value_t = Switch::On)]
        stabilization: Switch,
        /// Proportional and integral gains.
        #[arg(long, num_args = 2, value_names = ["KP", "KI"], allow_negative_numbers = true)]
        gains: Option<Vec<f64>>,
        /// Relative photodiode noise.
        #[arg(long)]
        noise: Option<f64>,
        /// Also compare SDT fidelity with and without stabilization over this many tomographies.
        #[arg(long, default_value_t = 0)]
        fidelity_trials: usize,
    },
    /// Two-sample Kolmogorov–Smirnov test on two angle files.
    Ks {
        file1: PathBuf,
        file2: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Detector efficiency ratios from calibration count files.
    Calibrate {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { error::USAGE as u8 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            eprintln!("{}", serde_json::to_string(&e).unwrap_or_default());
            ExitCode::from(e.code as u8)
        }
    }
}

impl From<CliError> for ExitCode {
    fn from(e: CliError) -> Self {
        ExitCode::from(e.code as u8)
    }
}
