use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use star_isac::driver::{optimize, Scheme};
use star_isac::scenario::Scenario;
use star_isac_cli::{failures, parse_list, parse_values, run_sweep, selftest, CliError, SweepParam, SweepSpec};

#[derive(Parser)]
#[command(name = "star-isac", version, about = "Sensing-SINR optimization for STAR-RIS assisted ISAC with RSMA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep one parameter over seeds and schemes and write CSV results.
    Run {
        /// Scenario TOML; the built-in desk scenario when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// p_max, m, r_th or scheme.
        #[arg(long)]
        sweep: String,
        /// Comma-separated values of the swept parameter.
        #[arg(long)]
        values: String,
        /// Comma-separated seeds.
        #[arg(long)]
        seeds: String,
        /// Comma-separated schemes (ignored for scheme sweeps).
        #[arg(long, default_value = "star_rsma")]
        schemes: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; all cores when omitted.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Optimize one scenario and print the result as JSON.
    Solve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "star_rsma")]
        scheme: String,
        /// Write the JSON here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

fn load(config: &Option<PathBuf>) -> Result<Scenario, CliError> {
    match config {
        Some(p) => Ok(Scenario::from_file(p)?),
        None => Ok(Scenario::desk()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, sweep, values, seeds, schemes, out, jobs } => {
            let param: SweepParam = sweep.parse()?;
            let spec = SweepSpec {
                base: load(&config)?,
                param,
                values: parse_values(param, &values)?,
                seeds: parse_list(&seeds, "seed")?,
                schemes: parse_list(&schemes, "scheme")?,
                out,
            };
            if let Some(n) = jobs {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| CliError::Validation(format!("cannot start {n} workers: {e}")))?;
            }
            let outcomes = run_sweep(&spec)?;
            let feasible = outcomes.iter().filter(|o| o.feasible()).count();
            println!(
                "{} runs, {feasible} feasible, results in {}",
                outcomes.len(),
                spec.out.join("results.csv").display()
            );
            match failures(&outcomes) {
                0 => Ok(()),
                n => Err(CliError::RunsFailed(n)),
            }
        }
        Command::Solve { config, scheme, out } => {
            let sc = load(&config)?;
            let scheme: Scheme = scheme.parse().map_err(|e| CliError::Validation(format!("{e}")))?;
            let r = optimize(&sc, scheme)?;
            let text = serde_json::to_string_pretty(&r).expect("run results serialize");
            match out {
                Some(p) => std::fs::write(&p, text + "\n").map_err(|source| CliError::Io { path: p, source })?,
                None => println!("{text}"),
            }
            eprintln!("{scheme}: {:?}, gamma {:.6e} ({:.3} dB)", r.status, r.gamma, r.gamma_db());
            Ok(())
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            for c in &checks {
                println!("{}  {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            if failed > 0 {
                return Err(CliError::Validation(format!("{failed} self-test checks failed")));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
