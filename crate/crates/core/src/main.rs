use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use trace_forge::catalog::{builtin_domain, builtin_names};
use trace_forge::experiment::{run, ExperimentConfig};
use trace_forge::Error;

#[derive(Parser)]
#[command(name = "trace-forge", version, about = "Verification suites for Sobolev traces on Lipschitz domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the built-in domains.
    ListDomains,
    /// Check a config file against the schema without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Json(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn read_config(path: &Path) -> Result<(String, ExperimentConfig), Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config `{}`: {e}", path.display())))?;
    let cfg = ExperimentConfig::parse(&text)?;
    Ok((text, cfg))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ListDomains => {
            for name in builtin_names() {
                match builtin_domain(name) {
                    Ok(d) => println!("{name}\td={}\tcharts={}", d.dim(), d.charts().len()),
                    Err(e) => println!("{name}\t{e}"),
                }
            }
            Ok(0)
        }
        Command::Validate { config } => read_config(&config).and_then(|(_, cfg)| {
            cfg.load_domain(config.parent())?;
            println!("ok: {} on {}", cfg.experiment.name(), cfg.domain);
            Ok(0)
        }),
        Command::Run {
            config,
            out,
            resolution,
            seed,
        } => (|| {
            let (text, mut cfg) = read_config(&config)?;
            let mut overrides = Vec::new();
            if let Some(o) = out {
                overrides.push(format!("output_dir = {}", o.display()));
                cfg.output_dir = o;
            }
            if let Some(r) = resolution {
                overrides.push(format!("resolution = {r}"));
                cfg.resolution = r;
            }
            if let Some(s) = seed {
                overrides.push(format!("seed = {s}"));
                cfg.seed = s;
            }
            cfg.validate()?;
            let domain = cfg.load_domain(config.parent())?;
            let mut report = run(&cfg, &text, &domain)?;
            report.overrides = overrides;
            report.write(&cfg.output_dir)?;
            let failed = report.rows.iter().filter(|r| !r.verdict.ok()).count();
            println!(
                "{}: {} checks, {failed} failed; report in {}",
                cfg.experiment.name(),
                report.rows.len(),
                cfg.output_dir.display()
            );
            Ok(if report.passed() { 0 } else { EXIT_FAIL })
        })(),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
