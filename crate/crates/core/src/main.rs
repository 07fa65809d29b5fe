use std::io;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use ptflow::cli;

#[derive(Parser)]
#[command(
    name = "ptflow",
    version,
    about = "Prescribed-time gradient flow experiments"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate every case of a config and write traces.
    Run {
        config: PathBuf,
        /// Override a config entry, e.g. `--set flow.Tp=5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run all initial conditions and write one summary row each.
    Sweep {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Check a PŁ or strong-convexity modulus numerically.
    Verify {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Render the state columns of a trace CSV as SVG.
    Plot {
        csv: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
        /// Draw a vertical marker at this time.
        #[arg(long)]
        tp: Option<f64>,
        #[arg(long)]
        title: Option<String>,
    },
}

fn main() {
    let args = Args::parse();
    let (mut out, mut err) = (io::stdout(), io::stderr());
    let code = match args.command {
        Command::Run { config, set } => cli::run(&config, &set, &mut out, &mut err),
        Command::Sweep { config, set } => cli::sweep(&config, &set, &mut out, &mut err),
        Command::Verify { config, set } => cli::verify(&config, &set, &mut out, &mut err),
        Command::Plot {
            csv,
            output,
            tp,
            title,
        } => cli::plot(&csv, &output, tp, title.as_deref(), &mut err),
    };
    std::process::exit(code);
}
