use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cfhf_cli::commands::{self, FitMode};
use cfhf_cli::config::RunConfig;
use cfhf_cli::dataset::{read_dataset, read_refractive};
use cfhf_cli::format::Format;
use cfhf_cli::{fixtures_dir, CliError, Result};
use clap::{Parser, Subcommand};

/// Crystal-field and hyperfine levels of Ho³⁺ in LiYF₄: spectra and fits.
///
/// Exit codes: 0 success, 2 usage, 3 config, 4 dataset, 5 I/O,
/// 6 numerical failure (singular fit, iteration cap, ambiguous labels),
/// 7 invalid physical input.
#[derive(Debug, Parser)]
#[command(name = "cfhf", version)]
struct Cli {
    /// Run configuration (TOML). Defaults to `lihof4.toml` in the fixture
    /// directory ($CFHF_FIXTURES).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// csv, json or text (analyze only). Defaults per command.
    #[arg(long, global = true)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Crystal-field levels, irreps and moments.
    Levels,
    /// Hyperfine-resolved lines of one transition.
    Hf {
        /// e.g. 8.1-8.2
        #[arg(long)]
        transition: String,
        /// Add second-order perturbative energies next to the exact ones.
        #[arg(long)]
        perturbative: bool,
    },
    /// Weighted least-squares fit.
    Fit {
        /// cf-aj, b or refindex
        #[arg(long)]
        mode: FitMode,
        /// Defaults to `hf_transitions.csv` in the fixture directory
        /// (required for refindex).
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Difference series, slopes and λ coefficients from a dataset.
    Analyze {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Absorbance spectrum of the configured transitions.
    Synth,
}

fn or_fixture(path: Option<PathBuf>, name: &str) -> PathBuf {
    path.unwrap_or_else(|| fixtures_dir().join(name))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(&or_fixture(cli.config, "lihof4.toml"))?;
    let text = match cli.command {
        Command::Levels => commands::render_levels(&commands::levels(&cfg)?, cli.format.unwrap_or(Format::Csv))?,
        Command::Hf {
            transition,
            perturbative,
        } => commands::render_hf(
            &commands::hf_lines(&cfg, &transition, perturbative)?,
            cli.format.unwrap_or(Format::Csv),
        )?,
        Command::Fit { mode, dataset } => {
            let report = if mode == FitMode::RefIndex {
                let path = dataset.ok_or_else(|| CliError::Usage("--mode refindex needs --dataset".into()))?;
                commands::fit_index(&cfg, &read_refractive(&path)?)?
            } else {
                let data = read_dataset(&or_fixture(dataset, "hf_transitions.csv"))?;
                commands::fit_dataset(&cfg, &data, mode)?
            };
            commands::render_fit(&report, cli.format.unwrap_or(Format::Json))?
        }
        Command::Analyze { dataset } => {
            let data = read_dataset(&or_fixture(dataset, "hf_transitions.csv"))?;
            commands::render_analysis(&commands::analyze(&data)?, cli.format.unwrap_or(Format::Text))?
        }
        Command::Synth => commands::render_spectrum(&commands::synth(&cfg)?, cli.format.unwrap_or(Format::Csv))?,
    };
    write_output(cli.output.as_deref(), &text)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Io {
                    path: "<stdout>".into(),
                    source: e,
                })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cfhf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
