use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use driftlab::{execute, exit, exit_code, find, registry, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "driftlab",
    version,
    about = "Drift, variance and regeneration experiments for diffusions in random environments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML or JSON config.
    Run {
        config: PathBuf,
        /// Worker threads; defaults to the number of logical cores.
        #[arg(long, env = "DRIFTLAB_WORKERS")]
        workers: Option<usize>,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// List the registered experiments.
    List,
    /// Show criteria, accepted keys and the default config of an experiment.
    Describe { experiment: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::List => {
            for e in registry() {
                println!("{:<24} {}", e.name, e.summary);
            }
            exit::PASS
        }
        Command::Describe { experiment } => match find(&experiment) {
            Ok(e) => {
                println!("{}\n\n{}\n\ncriteria:", e.name, e.summary);
                for c in e.criteria {
                    println!("  - {c}");
                }
                println!("\nkeys: {}\n\ndefault config:\n\n{}", e.keys.join(", "), (e.default_config)().to_toml());
                exit::PASS
            }
            Err(err) => {
                eprintln!("error: {err}");
                exit::CONFIG_ERROR
            }
        },
        Command::Run { config, workers, output_dir } => run(config, workers, output_dir),
    };
    ExitCode::from(code as u8)
}

fn run(path: PathBuf, workers: Option<usize>, output_dir: Option<PathBuf>) -> i32 {
    let mut cfg = match ExperimentConfig::load(&path) {
        Ok(c) => c,
        Err(err) => {
            eprintln!("error: {err}");
            return exit::CONFIG_ERROR;
        }
    };
    if let Some(dir) = output_dir {
        cfg.output_dir = Some(dir);
    }
    if let Some(n) = workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return exit::CONFIG_ERROR;
        }
        if let Err(err) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} workers: {err}");
            return exit::RUNTIME_ERROR;
        }
    }
    let dir = cfg.output_dir();
    let result = execute(&cfg, &dir);
    match &result {
        Ok(out) => {
            for m in &out.metrics {
                let reference = m.reference.map(|r| format!(" (reference {r:.6})")).unwrap_or_default();
                println!(
                    "{} {:<28} {:.6} ± {:.6}{}  [{}]",
                    if m.pass { "PASS" } else { "FAIL" },
                    m.name,
                    m.value,
                    m.se,
                    reference,
                    m.criterion
                );
            }
            println!("{} in {:.1} s; artifacts in {}", cfg.experiment, out.runtime_s, dir.display());
        }
        Err(err) => eprintln!("error: {err}"),
    }
    exit_code(&result)
}
