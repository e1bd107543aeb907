//! Command-line front end: `whitham run` executes verification suites and
//! writes a JSON report, `whitham extract` exports a hydrodynamic system.
//! Exit codes: 0 all asserted checks pass, 1 a check or extraction failed,
//! 2 the configuration or arguments are invalid.

pub mod config;
pub mod report;
pub mod suites;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Error;
use config::{parse_override, ConfigFile};
use suites::Suite;

#[derive(Debug, Parser)]
#[command(name = "whitham", version, about = "Verify hypergeometric-type Whitham hierarchy identities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// JSON configuration; the built-in configuration is used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance override NAME=VALUE (quad_tol, fd_step, rank_rel_tol, residual_tol).
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    pub tol: Vec<String>,
    /// Report path; the report goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run verification suites.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
    },
    /// Extract the hydrodynamic system of a contour triple.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        genus: u8,
        /// Three contour names separated by commas.
        #[arg(long, value_delimiter = ',')]
        triple: Option<Vec<String>>,
    },
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

fn load(common: &Common) -> Result<ConfigFile, Error> {
    let mut cfg = match &common.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::builtin(),
    };
    for t in &common.tol {
        let (name, value) = parse_override(t)?;
        cfg.apply_tolerance(&name, value)?;
    }
    Ok(cfg)
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(Error::from),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn config_error(e: &Error) -> i32 {
    eprintln!("{e}");
    EXIT_CONFIG
}

/// Executes a parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Run { common, suite } => {
            let cfg = match load(&common) {
                Ok(c) => c,
                Err(e) => return config_error(&e),
            };
            let report = match suites::run_suite(suite, &cfg, common.seed) {
                Ok(r) => r,
                Err(e @ Error::Configuration(_)) => return config_error(&e),
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_FAIL;
                }
            };
            eprint!("{}", report.table());
            let written = report.to_json().and_then(|j| emit(&j, &common.out));
            if let Err(e) = written {
                eprintln!("error: {e}");
                return EXIT_FAIL;
            }
            if report.all_passed() {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Command::Extract { common, genus, triple } => {
            let cfg = match load(&common) {
                Ok(c) => c,
                Err(e) => return config_error(&e),
            };
            let triple = match triple.as_deref() {
                None => None,
                Some([a, b, c]) => Some([a.clone(), b.clone(), c.clone()]),
                Some(t) => {
                    return config_error(&Error::Configuration(format!(
                        "--triple needs three contour names, got {}",
                        t.len()
                    )))
                }
            };
            match suites::extract(&cfg, genus, triple, common.seed) {
                Ok(rep) => {
                    let text = match serde_json::to_string_pretty(&rep) {
                        Ok(t) => t,
                        Err(e) => {
                            eprintln!("error: {e}");
                            return EXIT_FAIL;
                        }
                    };
                    if let Err(e) = emit(&text, &common.out) {
                        eprintln!("error: {e}");
                        return EXIT_FAIL;
                    }
                    EXIT_PASS
                }
                Err(e @ Error::Configuration(_)) => config_error(&e),
                Err(e) => {
                    eprintln!("extraction failed: {e}");
                    EXIT_FAIL
                }
            }
        }
    }
}

/// Parses `args` (including the program name) and runs.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            code
        }
    }
}
