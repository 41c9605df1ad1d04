use clap::{Parser, Subcommand};
use piezotopo::commands::{run, Command};
use piezotopo::config::RunConfig;
use piezotopo::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(version, about = "Polarization matrices and topological derivatives of piezoelectric voids")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// JSON configuration; defaults are used for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created when the command succeeds.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for independent solves.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Polarization matrix of the configured void.
    Polarization,
    /// Increments of the energy functionals against their h³ predictions.
    Converge,
    /// Two load sets with the same strain at the void and different energy increments.
    EnergyNonlocality,
    /// First-order expansion in the coupling amplitude.
    WeakCoupling,
    /// Intact and perforated fields as VTK files.
    ExportVtk,
}

fn execute(cli: &Cli) -> Result<PathBuf, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let command = match cli.command {
        Sub::Polarization => Command::Polarization,
        Sub::Converge => Command::Converge,
        Sub::EnergyNonlocality => Command::EnergyNonlocality,
        Sub::WeakCoupling => Command::WeakCoupling,
        Sub::ExportVtk => Command::ExportVtk,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("workers: {e}")))?;
    let start = std::time::Instant::now();
    let out = pool.install(|| run(command, &cfg, &cli.out))?;
    log::info!("{} finished in {:.1} s", command.name(), start.elapsed().as_secs_f64());
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(out) => {
            println!("{}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
