use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use genorisk::config::Method;
use genorisk::run::{self, Job};
use genorisk::{EvalReport, Error, Result};

#[derive(Parser)]
#[command(name = "genorisk", version, about = "Case-control genotype association analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the method a config names and write the JSON report.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (overrides the config and GENORISK_WORKERS).
        #[arg(long)]
        workers: Option<usize>,
        /// Report path; "-" for standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Parse and check a config without running it.
    Validate { config: PathBuf },
    /// Write the sample of a config's [synth] block as CSV.
    Synth {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Data path (overrides `data_output`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print a summary of a saved report.
    Report { path: PathBuf },
}

fn env_workers() -> Result<Option<usize>> {
    match std::env::var("GENORISK_WORKERS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::config("GENORISK_WORKERS", format!("not a positive integer: {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn emit(report: &EvalReport, target: Option<&PathBuf>) -> Result<()> {
    let text = report.to_json()?;
    match target {
        Some(p) if p.as_os_str() != "-" => run::write_atomic(p, &text),
        _ => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| Error::Io { path: "<stdout>".into(), source: e })
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, workers, output } => {
            let mut job = Job::load(&config)?;
            if let Some(s) = seed {
                job.config.seed = s;
            }
            let workers = match workers.or(job.config.workers) {
                Some(n) => n,
                None => env_workers()?.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
            };
            if workers == 0 {
                return Err(Error::config("workers", "worker count must be positive"));
            }
            let outcome = run::with_workers(workers, || run::run(&job))??;
            let target = output.or_else(|| job.config.output.as_ref().map(|p| job.resolve(p)));
            emit(&outcome.report, target.as_ref())
        }
        Command::Validate { config } => {
            let job = Job::load(&config)?;
            if let Some(d) = &job.config.dataset {
                let path = job.resolve(&d.path);
                std::fs::metadata(&path).map_err(|e| Error::Io { path, source: e })?;
            }
            if let Some(spec) = &job.config.synth {
                spec.validate().map_err(|e| Error::Method { module: "synth", path: "synth".into(), source: e })?;
            }
            println!("{}: ok ({})", config.display(), job.config.method.name());
            Ok(())
        }
        Command::Synth { config, seed, output } => {
            let mut job = Job::load(&config)?;
            let Some(spec) = job.config.synth.as_mut() else {
                return Err(Error::config(config.display().to_string(), "no [synth] block"));
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let mut params = match &job.config.method {
                Method::Synth(p) => p.clone(),
                _ => Default::default(),
            };
            if let Some(o) = output {
                params.data_output = std::env::current_dir().map_err(|e| Error::Io { path: ".".into(), source: e })?.join(o);
            }
            job.config.method = Method::Synth(params.clone());
            job.config.dataset = None;
            run::run(&job)?;
            eprintln!("wrote {}", job.resolve(&params.data_output).display());
            Ok(())
        }
        Command::Report { path } => {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            print!("{}", EvalReport::from_json(&text)?.render());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("genorisk: {e}");
            ExitCode::FAILURE
        }
    }
}
