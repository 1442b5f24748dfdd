//! `glpin`: command-line driver for the pinned-vortex toolkit.
//!
//! Every subcommand reads one JSON config (see `docs/config.schema.json`),
//! writes deterministic artifacts into an output directory, and exits 0 on
//! success, 1 on bad input, 2 on a failed solve.  `GLPIN_THREADS` caps the
//! worker-thread count used by sweeps and inner solvers.

mod commands;
mod config;
mod error;
mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use error::CliError;

#[derive(Parser)]
#[command(
    name = "glpin",
    version,
    about = "Pinned-vortex toolkit: London solves, renormalized energies, \
             critical-field ladder, direct minimization, and defect analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the screened London problem and dump xi0, h0, and well data
    London {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the inclusion lattice and the pinned modulus profile U
    Pinning {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Point-vortex interaction energy for explicit vortices
    RenormMacro {
        #[arg(long)]
        config: PathBuf,
        /// JSON file with {"points": [{"x", "y"}, ...], "degrees": [...]}
        #[arg(long, value_name = "FILE")]
        points: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimize the near-well cluster energy for d vortices
    RenormMeso {
        #[arg(long)]
        config: PathBuf,
        /// Number of vortices in the cluster
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Which potential well to expand around (0 = deepest)
        #[arg(long, default_value_t = 0)]
        well: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Single-vortex pinning-energy landscape inside one inclusion
    RenormMicro {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Core energy constant of the free vortex profile
    GammaBbh {
        #[arg(long)]
        config: PathBuf,
        /// Also report the finite-radius truncation at this radius
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump all background fields (xi0, h0, coupling a, profile U)
    Fields {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict the optimal vortex count at an applied field
    Predict {
        #[arg(long)]
        config: PathBuf,
        /// Applied field (defaults to the config's h_ex)
        #[arg(long)]
        hex: Option<f64>,
        /// Initial depth of the energy table (grows automatically)
        #[arg(long)]
        dmax: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimize the full energy by gradient flow from a seeded state
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Applied field (defaults to the config's h_ex)
        #[arg(long)]
        hex: Option<f64>,
        /// Override the config's coherence length
        #[arg(long)]
        epsilon: Option<f64>,
        /// JSON file with initial vortex positions to imprint
        #[arg(long, value_name = "FILE")]
        seed_vortices: Option<PathBuf>,
        /// Cap on descent sweeps
        #[arg(long)]
        max_sweeps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detect defects in a minimized state and compare against the prediction
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding the simulate artifacts (defaults to the output dir)
        #[arg(long)]
        state: Option<PathBuf>,
        /// Applied field (defaults to the state's run.json, then the config)
        #[arg(long)]
        hex: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Energy-decomposition residual of a minimized state
    CheckDecomposition {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding the simulate artifacts (defaults to the output dir)
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run simulate + analyze across a range of applied fields
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    if let Err(msg) = thread_cap() {
        eprintln!("configuration error: {msg}");
        std::process::exit(1);
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                0
            } else {
                1
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli.command) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}

/// Applies `GLPIN_THREADS` to the global worker pool before any parallel
/// work starts.
fn thread_cap() -> Result<(), String> {
    let Ok(raw) = std::env::var("GLPIN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("GLPIN_THREADS = {raw:?} is not a thread count"))?;
    if n == 0 {
        return Err("GLPIN_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::London { config, out } => commands::london(&config::load(&config)?, out),
        Command::Pinning { config, out } => commands::pinning(&config::load(&config)?, out),
        Command::RenormMacro { config, points, out } => {
            commands::renorm_macro(&config::load(&config)?, &points, out)
        }
        Command::RenormMeso { config, d, well, out } => {
            commands::renorm_meso(&config::load(&config)?, d, well, out)
        }
        Command::RenormMicro { config, out } => {
            commands::renorm_micro(&config::load(&config)?, out)
        }
        Command::GammaBbh { config, r, out } => {
            commands::gamma_bbh(&config::load(&config)?, r, out)
        }
        Command::Fields { config, out } => commands::fields(&config::load(&config)?, out),
        Command::Predict { config, hex, dmax, out } => {
            commands::predict(&config::load(&config)?, hex, dmax, out)
        }
        Command::Simulate { config, hex, epsilon, seed_vortices, max_sweeps, out } => {
            commands::simulate(
                &config::load(&config)?,
                hex,
                epsilon,
                seed_vortices.as_deref(),
                max_sweeps,
                out,
            )
        }
        Command::Analyze { config, state, hex, out } => {
            commands::analyze(&config::load(&config)?, state, hex, out)
        }
        Command::CheckDecomposition { config, state, out } => {
            commands::check_decomposition(&config::load(&config)?, state, out)
        }
        Command::Sweep { config, out } => commands::sweep(&config::load(&config)?, out),
    }
}
