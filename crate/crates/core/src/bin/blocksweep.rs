use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use blocksweep::report::{self, AnalysisConfig, OutputFormat};
use blocksweep::spectral::{Tolerance, DEFAULT_ABS_EPS, DEFAULT_REL_EPS};
use blocksweep::Error;

#[derive(Parser)]
#[command(name = "blocksweep", version, about = "Sweep-based analysis of block designs")]
struct Cli {
    /// Relative threshold for treating eigenvalues as zero
    #[arg(long, global = true, default_value_t = DEFAULT_REL_EPS)]
    tol: f64,

    /// Absolute threshold for matrix identities
    #[arg(long, global = true, default_value_t = DEFAULT_ABS_EPS)]
    abs_tol: f64,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Analysis of variance, treatment effects and efficiency of a block design
    Analyze {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, default_value = "y")]
        response_col: String,
        #[arg(long, default_value = "block")]
        block_col: String,
        #[arg(long, default_value = "treatment")]
        treatment_col: String,
        /// Extra factor fitted after blocks and before treatments (repeatable)
        #[arg(long = "factor")]
        factors: Vec<String>,
    },
    /// Canonical efficiency factors of a design (no response needed)
    Efficiency {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, default_value = "block")]
        block_col: String,
        #[arg(long, default_value = "treatment")]
        treatment_col: String,
    },
    /// Necessary conditions for a balanced incomplete block design
    CheckBib {
        #[arg(long)]
        v: u64,
        #[arg(long)]
        k: u64,
        #[arg(long)]
        r: u64,
    },
}

fn run(cli: Cli) -> Result<String, Error> {
    let tol = Tolerance::new(cli.tol, cli.abs_tol)?;
    let format = match cli.format {
        Format::Text => OutputFormat::Text,
        Format::Json => OutputFormat::Json,
    };
    match cli.command {
        Command::Analyze {
            design,
            response_col,
            block_col,
            treatment_col,
            factors,
        } => {
            let config = AnalysisConfig {
                design_path: design,
                response_column: response_col,
                block_column: block_col,
                treatment_column: treatment_col,
                extra_factor_columns: factors,
                tol,
                output_format: format,
            };
            let result = report::analyze(&config)?;
            report::render(&result, format)
        }
        Command::Efficiency {
            design,
            block_col,
            treatment_col,
        } => {
            let config = AnalysisConfig {
                block_column: block_col,
                treatment_column: treatment_col,
                tol,
                output_format: format,
                ..AnalysisConfig::new(design)
            };
            let (design, eff) = report::efficiency_only(&config)?;
            report::render_efficiency(&design, &eff, format)
        }
        Command::CheckBib { v, k, r } => report::check_bib_cmd(v, k, r, format),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_numerical() { 3 } else { 2 })
        }
    }
}
