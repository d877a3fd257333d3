use clap::{Args, Parser, Subcommand};
use microtrap_cli::error::{CliError, CliResult};
use microtrap_cli::{commands, config, script};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "microtrap",
    version,
    about = "Simulator of microlens-generated dipole-trap arrays for neutral-atom registers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the seeds from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $MICROTRAP_OUT or ./out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Expand the trap array and report per-site depth, frequencies and
    /// decoherence.
    Characterize {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the two-beam relative angle: interleaved-pair separations and
    /// potential cross-sections.
    Interleave {
        #[command(flatten)]
        common: Common,
    },
    /// Load a thermal ensemble, measure it by time of flight, store it with
    /// residual-light heating and fit the lifetime.
    Dynamics {
        #[command(flatten)]
        common: Common,
    },
    /// Run a register protocol script (LOAD / PUMP / REMOVE / READOUT /
    /// RENDER).
    Register {
        #[command(flatten)]
        common: Common,
        /// Script file.
        #[arg(long)]
        script: PathBuf,
    },
    /// Render one fluorescence frame of the loaded register and detect the
    /// spots.
    Image {
        #[command(flatten)]
        common: Common,
    },
    /// Find the residual scattering rate reproducing a target trap lifetime.
    #[command(name = "calibrate-lifetime")]
    CalibrateLifetime {
        #[command(flatten)]
        common: Common,
        /// Target 1/e survival time, s.
        #[arg(long, default_value_t = 0.035)]
        target_s: f64,
        /// Relative tolerance on the fitted lifetime.
        #[arg(long, default_value_t = 0.10)]
        tolerance_rel: f64,
    },
}

fn out_dir(common: &Common) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os("MICROTRAP_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: Cli) -> CliResult<()> {
    let common = match &cli.command {
        Command::Characterize { common }
        | Command::Interleave { common }
        | Command::Dynamics { common }
        | Command::Register { common, .. }
        | Command::Image { common }
        | Command::CalibrateLifetime { common, .. } => common,
    };
    // Full config validation happens before the output directory exists.
    let config = config::load_config(&common.config)?;
    let parsed_script = match &cli.command {
        Command::Register { script: path, .. } => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read script {}: {e}", path.display()))
            })?;
            Some(script::parse_script(&text)?)
        }
        _ => None,
    };

    let out = out_dir(common);
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;

    match &cli.command {
        Command::Characterize { .. } => {
            commands::characterize(&config, &out)?;
        }
        Command::Interleave { .. } => {
            commands::interleave(&config, &out)?;
        }
        Command::Dynamics { common } => {
            commands::run_dynamics(&config, &out, common.seed)?;
        }
        Command::Register { common, .. } => {
            commands::run_register(&config, &parsed_script.unwrap(), &out, common.seed)?;
        }
        Command::Image { common } => {
            commands::run_image(&config, &out, common.seed)?;
        }
        Command::CalibrateLifetime { common, target_s, tolerance_rel } => {
            commands::calibrate_lifetime(&config, &out, *target_s, *tolerance_rel, common.seed)?;
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = run(cli) {
        eprintln!("{error}");
        std::process::exit(error.exit_code());
    }
}
