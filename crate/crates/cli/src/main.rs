//! `cohi`: closed-orbit search, recurrence signals, harmonic inversion and
//! stick spectra from one configuration file.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use cohi::pipeline::{self, PipelineConfig};
use cohi::Error;

#[derive(Parser, Debug)]
#[command(name = "cohi", version, about = "Semiclassical spectra of hydrogen in a magnetic field from closed orbits")]
struct Cli {
    /// TOML configuration file; every key has a default.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set s_max=125.6` or
    /// `--set tolerances.accept_err=1e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,

    /// Shorthand for `--set output_dir=DIR`.
    #[arg(short, long, global = true)]
    output_dir: Option<PathBuf>,

    /// Shorthand for `--set threads=N`.
    #[arg(short = 'j', long, global = true)]
    threads: Option<usize>,

    /// Check the hash chain of the artifacts in the output directory before
    /// and after the command.
    #[arg(long, global = true)]
    verify: bool,

    /// More logging: `-v` per-orbit detail, `-vv` inversion matrix detail.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    /// Warnings and errors only.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Find closed orbits and write the orbit table.
    Orbits {
        /// Exit with status 0 even if some candidates did not converge.
        #[arg(long)]
        allow_rejections: bool,
    },
    /// Build the recurrence signal from an orbit table.
    Signal {
        /// Orbit table; defaults to `orbits.txt` in the output directory.
        #[arg(long)]
        orbits: Option<PathBuf>,
    },
    /// Extract lines from the signal in every configured window.
    Invert {
        /// Signal file; defaults to `signal.txt` in the output directory.
        #[arg(long)]
        signal: Option<PathBuf>,
    },
    /// Turn line sets into stick spectra and plots.
    Spectrum {
        /// Line-set files; defaults to those of the configured windows.
        lines: Vec<PathBuf>,
    },
    /// Run every stage.
    Pipeline {
        #[arg(long)]
        allow_rejections: bool,
    },
    /// Check the inversion against synthetic signals with known lines.
    Selftest,
    /// Check the hash chain of the artifacts in the output directory.
    Verify,
    /// Print the resolved configuration.
    Config,
}

enum Failure {
    Usage(String),
    Run(Error),
    Rejections(usize),
    Selftest(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Run(e) => e.exit_code() as u8,
            Failure::Rejections(_) | Failure::Selftest(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Run(e) => eprintln!("error: {e}"),
                Failure::Rejections(n) => {
                    eprintln!("complete with {n} rejected candidates (use --allow-rejections to accept)")
                }
                Failure::Selftest(n) => eprintln!("{n} self-test checks failed"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Warn)
        .filter_module("cohi", level)
        .format_timestamp(None)
        .parse_default_env()
        .init();
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Command::Selftest = cli.command {
        return selftest(cli);
    }
    let cfg = load_config(cli)?;
    if let Command::Config = cli.command {
        println!("{cfg:#?}");
        return Ok(());
    }
    if cli.verify || matches!(cli.command, Command::Verify) {
        if cfg.output_dir.is_dir() {
            verify(&cfg.output_dir)?;
        } else if matches!(cli.command, Command::Verify) {
            return Err(Failure::Run(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("no output directory {}", cfg.output_dir.display()),
            ))));
        }
    }
    match &cli.command {
        Command::Orbits { allow_rejections } => {
            let r = pipeline::run_orbits(&cfg)?;
            println!("{r}");
            check_rejections(r.rejected, *allow_rejections)?;
        }
        Command::Signal { orbits } => println!("{}", pipeline::run_signal(&cfg, orbits.as_deref())?),
        Command::Invert { signal } => {
            for r in pipeline::run_invert(&cfg, signal.as_deref())? {
                println!("{r}");
            }
        }
        Command::Spectrum { lines } => {
            for r in pipeline::run_spectrum(&cfg, lines)? {
                println!("{r}");
            }
        }
        Command::Pipeline { allow_rejections } => {
            let r = pipeline::run_all(&cfg)?;
            print!("{r}");
            check_rejections(r.rejected(), *allow_rejections)?;
        }
        Command::Verify | Command::Selftest | Command::Config => {}
    }
    if cli.verify && !matches!(cli.command, Command::Verify) {
        verify(&cfg.output_dir)?;
    }
    Ok(())
}

fn check_rejections(n: usize, allowed: bool) -> Result<(), Failure> {
    if n > 0 && !allowed {
        return Err(Failure::Rejections(n));
    }
    Ok(())
}

fn verify(dir: &Path) -> Result<(), Failure> {
    let links = pipeline::verify_chain(dir)?;
    for l in &links {
        match &l.parent {
            Some(p) => println!("ok {} <- {}", l.file.display(), p.display()),
            None => println!("ok {}", l.file.display()),
        }
    }
    println!("hash chain verified: {} artifacts", links.len());
    Ok(())
}

fn selftest(cli: &Cli) -> Result<(), Failure> {
    let exec = cohi::par::Execution::with_threads(cli.threads.unwrap_or(0));
    let checks = cohi::selftest::run_all(exec)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if failed > 0 {
        return Err(Failure::Selftest(failed));
    }
    Ok(())
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut table = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(Error::Io)?;
            text.parse::<toml::Table>()
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    for s in &cli.sets {
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
        set_key(&mut table, key.trim(), parse_value(value.trim()))?;
    }
    if let Some(dir) = &cli.output_dir {
        set_key(&mut table, "output_dir", toml::Value::String(dir.display().to_string()))?;
    }
    if let Some(n) = cli.threads {
        set_key(&mut table, "threads", toml::Value::Integer(n as i64))?;
    }
    let cfg: PipelineConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| Failure::Usage(format!("configuration: {}", e.message())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// TOML literal if it parses as one, else a bare string.
fn parse_value(v: &str) -> toml::Value {
    format!("v = {v}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()))
}

fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), Failure> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Failure::Usage(format!("bad key {key:?}")))?;
    let mut t = table;
    for p in parts {
        t = t
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Failure::Usage(format!("{p} in {key:?} is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}
