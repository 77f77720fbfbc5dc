//! `vzpulse`: command-line front end for the virtual Z pulse compiler.

mod commands;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "vzpulse", version, about = "Compile virtual Z pulses into distorted hardware controls")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Directory for result files and metadata.json; results go to stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Expected hardware model of the input (spin, tc, flux, cr, direct-xy).
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// 4 pi branch index m of the dilation equation.
    #[arg(long = "branch-m", global = true, allow_negative_numbers = true)]
    pub branch_m: Option<i64>,
    /// Numerical tolerance: propagator step tolerance, normalizer tolerance, or dilation agreement.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Largest allowed df/dtau.
    #[arg(long = "dfdtau-cap", global = true)]
    pub dfdtau_cap: Option<f64>,
    /// Compare against the RWA effective evolution (on) or the carrier-resolved one (off).
    #[arg(long, global = true, value_enum)]
    pub rwa: Option<OnOff>,
    /// Frame of the verification: rotating (RWA oracle only) or lab (carrier terms kept).
    #[arg(long, global = true, value_enum)]
    pub frame: Option<FrameArg>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum FrameArg {
    Lab,
    Rotating,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Ltr,
    Nm,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum IqDirection {
    Encode,
    Decode,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Decompose a two-qubit coupling operator and print its case tag.
    Classify {
        /// Coupling operator JSON ({"pauli": {...}} or {"re": [[..]], "im": [[..]]}).
        #[arg(long, conflicts_with = "pauli")]
        op: Option<PathBuf>,
        /// Inline Pauli terms, e.g. "XX=1,YY=1,ZZ=0.5".
        #[arg(long)]
        pauli: Option<String>,
    },
    /// Solve one scalar dilation problem.
    Dilate {
        /// DilationProblem JSON.
        problem: PathBuf,
    },
    /// Compile a model + schedule + program (a directory or a bundle JSON).
    Compile {
        input: PathBuf,
        #[command(flatten)]
        flux: FluxArgs,
    },
    /// Encode quadratures into a drive, or decode a drive into quadratures.
    Iq {
        #[arg(value_enum)]
        direction: IqDirection,
        /// Quadrature JSON ({"i": .., "q": ..}) to encode, or a sampled drive to decode.
        input: PathBuf,
        /// Carrier frequency in GHz (local drive).
        #[arg(long = "carrier-ghz", conflicts_with = "carriers_ghz")]
        carrier_ghz: Option<f64>,
        /// Comma-separated carrier frequencies in GHz (frequency-multiplexed global drive).
        #[arg(long = "carriers-ghz", value_delimiter = ',')]
        carriers_ghz: Option<Vec<f64>>,
        /// Drive strength mu.
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long = "tukey-alpha", default_value_t = 0.1)]
        tukey_alpha: f64,
    },
    /// Compile and check against the effective evolution; several inputs run in parallel.
    Verify {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Use this compiled schedule instead of compiling (single input only).
        #[arg(long)]
        compiled: Option<PathBuf>,
        #[command(flatten)]
        flux: FluxArgs,
    },
    /// Infidelity against a scale factor applied to the virtual Z program, with a power-law fit.
    Sweep {
        input: PathBuf,
        /// Explicit scale factors.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["points", "min", "max"])]
        scales: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, default_value_t = 0.2)]
        min: f64,
        #[arg(long, default_value_t = 1.8)]
        max: f64,
        #[command(flatten)]
        flux: FluxArgs,
    },
    /// Optimise the polynomial dilation of a flux-tunable pair.
    OptimizeDilation {
        input: PathBuf,
        #[command(flatten)]
        flux: FluxArgs,
    },
    /// Test whether a unitary normalises the single-qubit Z rotations.
    NormalizerCheck {
        /// Gate name from the built-in zoo, or "all".
        #[arg(long, conflicts_with = "matrix")]
        gate: Option<String>,
        /// Matrix JSON ({"re": [[..]], "im": [[..]]}).
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Random Z rotations tried by the conjugation oracle.
        #[arg(long, default_value_t = 64)]
        samples: usize,
    },
    /// Regenerate plot data for the spin, flux and sweep figures from the bundled examples.
    Figures {
        /// Samples per input envelope.
        #[arg(long, default_value_t = 4001)]
        nodes: usize,
        /// Points per sweep.
        #[arg(long, default_value_t = 10)]
        points: usize,
    },
}

#[derive(Args, Debug, Clone)]
pub struct FluxArgs {
    /// Flux optimiser: linear trust region (ltr) or Nelder-Mead (nm).
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Highest polynomial order of the flux dilation.
    #[arg(long = "poly-order")]
    pub poly_order: Option<usize>,
    #[arg(long = "max-evals")]
    pub max_evals: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("VZPULSE_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                // a second initialisation only fails if a pool already exists
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error[Validation]: VZPULSE_THREADS must be a positive integer, got '{v}'");
                return ExitCode::from(1);
            }
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind, e.message);
            ExitCode::from(e.exit)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::Cli;
    use clap::CommandFactory;

    #[test]
    fn argument_definitions_are_consistent() {
        Cli::command().debug_assert();
    }
}
