use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use recon_cli::compare::{self, CompareOptions};
use recon_cli::run::{self, RunOptions};
use recon_cli::{bundled, spec, CliError};

#[derive(Parser)]
#[command(name = "recon", version, about = "Sweeps, optimizations and simulations for field reconstruction over short-packet links")]
struct Cli {
    /// Worker threads for sweep points and replicas (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment file, or a bundled spec by name.
    Run {
        spec: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to out/<spec name>.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        replicas: Option<u64>,
    },
    /// Check a simulation report against an analytic table row by row.
    Compare {
        analytic: PathBuf,
        simulated: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        rel_bound: f64,
        #[arg(long, default_value_t = 4.0)]
        z_max: f64,
        /// Write the per-row table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the bundled experiment specs.
    ListSpecs,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match cli.cmd {
        Cmd::Run {
            spec,
            seed,
            out_dir,
            replicas,
        } => {
            let loaded = run::load(&spec)?;
            let summary = run::run(&loaded, &RunOptions { seed, replicas, out_dir })?;
            for (file, rows) in &summary.files {
                eprintln!("wrote {} ({rows} rows)", summary.out_dir.join(file).display());
            }
            eprintln!("wrote {}", summary.out_dir.join("manifest.json").display());
        }
        Cmd::Compare {
            analytic,
            simulated,
            rel_bound,
            z_max,
            out,
        } => {
            let rows = compare::compare(&analytic, &simulated, &CompareOptions { rel_bound, z_max })?;
            match out {
                Some(p) => compare::write_rows(BufWriter::new(File::create(&p).map_err(|e| CliError::io(&p, e))?), &rows)?,
                None => compare::write_rows(io::stdout().lock(), &rows)?,
            }
            let passed = rows.iter().filter(|r| r.pass).count();
            eprintln!("{passed}/{} rows within |z| <= {z_max} and rel <= {rel_bound}", rows.len());
            compare::verdict(&rows)?;
        }
        Cmd::ListSpecs => {
            for b in bundled::BUNDLED {
                let about = spec::parse(b.text, b.name)
                    .ok()
                    .and_then(|s| s.description)
                    .unwrap_or_default();
                println!("{:<26} {about}", b.name);
            }
        }
    }
    Ok(())
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
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
