// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pcwqed_cli::commands::*;
use pcwqed_cli::config::SCHEMA;
use pcwqed_cli::output::read_spectrum_csv;
use pcwqed_cli::{write_output, CliError, Format, RunConfig};

/// Photonic-crystal waveguide QED: band structure, Green's-function rates,
/// ensemble spectra, decay analysis and fits.
#[derive(Debug, Parser)]
#[command(name = "pcwqed", version)]
struct Args {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "both")]
    format: Format,
    /// Print every config key with its default and exit.
    #[arg(long)]
    print_schema: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bloch wave vector or attenuation across a frequency range.
    Bands,
    /// Intensity profile through the stack.
    Fields,
    /// Green's-function Γ_1D and J_1D across the band-edge sweep.
    Rates,
    /// Position- and number-averaged transmission spectrum.
    Spectrum,
    /// Model spectrum with seeded Gaussian noise.
    Synth,
    /// Fit TE and/or TM spectra read from CSV.
    Fit {
        #[arg(long)]
        te: Option<PathBuf>,
        #[arg(long)]
        tm: Option<PathBuf>,
    },
    /// Decay curves and mean atom number from hold-time rates.
    Decay,
    /// Dissipative and coherent rates against band-edge detuning.
    Fig4,
}

fn run(args: Args) -> Result<Option<CliError>, CliError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let Some(command) = args.command else {
        return Err(CliError::Config("no subcommand given; see --help".into()));
    };
    let out = match command {
        Command::Bands => cmd_bands(&cfg)?,
        Command::Fields => cmd_fields(&cfg)?,
        Command::Rates => cmd_rates(&cfg)?,
        Command::Spectrum => cmd_spectrum(&cfg)?,
        Command::Synth => cmd_synth(&cfg)?,
        Command::Fit { te, tm } => {
            let te = te.as_deref().map(read_spectrum_csv).transpose()?;
            let tm = tm.as_deref().map(read_spectrum_csv).transpose()?;
            cmd_fit(&cfg, te.as_ref(), tm.as_ref())?
        }
        Command::Decay => cmd_decay(&cfg)?,
        Command::Fig4 => cmd_fig4(&cfg)?,
    };
    let paths = write_output(&out, &args.out_dir, args.format)?;
    println!("{}", out.summary);
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(out.failure)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.print_schema {
        print!("{SCHEMA}");
        return ExitCode::SUCCESS;
    }
    match run(args) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(e)) | Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
