use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use euler_align::harness::{self, ScenarioConfig};
use euler_align::kernels::{self, KernelSpec, SampleBox};
use euler_align::{AtomicMeasure, Error, Result};

#[derive(Parser)]
#[command(name = "sim", version, about = "Euler-alignment particle and grid experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or the name of a shipped scenario).
    Run {
        config: String,
        /// Output directory; defaults to the config's output_dir, then out/<name>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Flat metric, W1, W2 and total variation between two measure files (JSON or CSV).
    Metrics { a: PathBuf, b: PathBuf },
    /// List shipped scenarios, or the scenario files of a directory.
    List {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Monte-Carlo check of a kernel's declared properties.
    ValidateKernel {
        spec: PathBuf,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Half-width of the sampling cube.
        #[arg(long, default_value_t = 5.0)]
        half_width: f64,
        /// Exit with status 1 when any property fails.
        #[arg(long)]
        strict: bool,
    },
    /// Print the scenario JSON schema.
    Schema,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    harness::configure_threads();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Run { config, out, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| Path::new("out").join(&cfg.name));
            let summary = harness::run(&cfg, &dir)?;
            println!("{}", summary.output_dir.display());
            if let Some(files) = summary.manifest["files"].as_object() {
                for (name, hash) in files {
                    println!("  {name}  {}", hash.as_str().unwrap_or_default());
                }
            }
            Ok(0)
        }
        Command::Metrics { a, b } => {
            let mu = load_measure(&a)?;
            let nu = load_measure(&b)?;
            let report = harness::metrics_report(&mu, &nu)?;
            println!("{}", harness::canonical_json(&report));
            Ok(0)
        }
        Command::List { dir } => {
            for e in harness::list_scenarios(dir.as_deref())? {
                match e.error {
                    None => println!("{:<24} {}", e.name, e.description),
                    Some(err) => println!("{:<24} [invalid] {}", e.name, err),
                }
            }
            Ok(0)
        }
        Command::ValidateKernel {
            spec,
            samples,
            seed,
            half_width,
            strict,
        } => {
            let text = fs::read_to_string(&spec).map_err(|e| io_error(&spec, e))?;
            let spec: KernelSpec = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            let k = spec.build()?;
            let report = kernels::validate(&k, &SampleBox::cube(k.dim(), half_width), samples, seed);
            let passed = report.passed();
            let value = serde_json::to_value(&report)?;
            println!("{}", harness::canonical_json(&value));
            Ok(if strict && !passed { 1 } else { 0 })
        }
        Command::Schema => {
            print!("{}", harness::SCENARIO_SCHEMA);
            Ok(0)
        }
    }
}

fn load_config(arg: &str) -> Result<ScenarioConfig> {
    let path = Path::new(arg);
    if path.exists() {
        ScenarioConfig::from_path(path)
    } else if harness::SHIPPED.iter().any(|(n, _)| *n == arg) {
        harness::shipped_scenario(arg)
    } else {
        Err(io_error(path, std::io::Error::from(std::io::ErrorKind::NotFound)))
    }
}

fn load_measure(path: &Path) -> Result<AtomicMeasure> {
    let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    if path.extension().is_some_and(|x| x == "csv") {
        return AtomicMeasure::from_csv(file).map_err(|e| e.context(path.display().to_string()));
    }
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
