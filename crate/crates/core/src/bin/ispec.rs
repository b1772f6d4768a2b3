use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ispec::cli_io::{self, Command};

/// Spectra of elliptic operators with an indefinite weight.
#[derive(Parser)]
#[command(name = "ispec", version)]
struct Cli {
    #[command(subcommand)]
    action: Action,
}

#[derive(Subcommand)]
enum Action {
    /// Run one command on a config file or builtin problem (e.g. `P2(c=30)`).
    Run {
        cfg: String,
        #[arg(long, value_enum)]
        cmd: Command,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "ispec-out")]
        out: PathBuf,
    },
    /// Repeat a command over values of one builtin parameter.
    Sweep {
        cfg: String,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_enum, default_value = "spectrum")]
        cmd: Command,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "ispec-out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = cli_io::init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    let result = match cli.action {
        Action::Run { cfg, cmd, seed, out } => cli_io::run(&cfg, cmd, seed, &out).map(|r| {
            println!(
                "{} {}: {} unknowns, |Γ| = {}, negative inertia {}, {} checks, outputs in {}",
                r.problem.label,
                cmd.as_str(),
                r.problem.unknowns,
                r.problem.interface_size,
                r.summary.negative_inertia,
                r.checks.len(),
                out.display()
            );
            for f in &r.findings {
                println!("finding: {f}");
            }
        }),
        Action::Sweep {
            cfg,
            param,
            values,
            cmd,
            seed,
            out,
        } => cli_io::sweep(&cfg, &param, &values, cmd, seed, &out).map(|r| {
            println!("{} sweep over {} ({} runs), table in {}", r.base, r.parameter, r.rows.len(), out.join("sweep.csv").display());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
