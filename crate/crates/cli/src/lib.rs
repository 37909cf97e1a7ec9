//! The `typegaze` command line: argument parsing, dispatch and run manifests.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;

use std::ffi::OsString;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::{Ctx, Done};
use error::{CliError, Result};
use manifest::{manifest_path, RunManifest, Versions};

fn init_logging(quiet: bool) {
    let level = if quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    // no environment lookup: verbosity comes from --quiet alone
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).format_target(false).try_init();
    log::set_max_level(level);
}

fn run(cli: &Cli, argv: &[String]) -> Result<()> {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads as usize)
        .build()
        .map_err(|e| CliError::usage(format!("--threads: {e}")))?;
    let ctx = Ctx { seed: cli.seed, out: cli.out.clone(), pool };
    let (name, done): (&str, Done) = match &cli.command {
        Command::Simulate(a) => ("simulate", commands::simulate(&ctx, a)?),
        Command::FitAmortizer(a) => ("fit-amortizer", commands::fit_amortizer(&ctx, a)?),
        Command::Train(a) => ("train", commands::train_cmd(&ctx, a)?),
        Command::Infer(a) => ("infer", commands::infer(&ctx, a)?),
        Command::InferTheta(a) => ("infer-theta", commands::infer_theta(&ctx, a)?),
        Command::Eval(a) => ("eval", commands::eval(&ctx, a)?),
        Command::Analyze(a) => ("analyze", commands::analyze_cmd(&ctx, a)?),
    };
    let manifest = RunManifest {
        command: name.to_string(),
        argv: argv.to_vec(),
        config: done.config,
        seed: cli.seed,
        threads: cli.threads as usize,
        inputs: done.inputs,
        outputs: done.outputs,
        versions: Versions::default(),
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    manifest.write(&manifest_path(&done.out, done.out_is_dir))
}

/// Runs one command line and returns the process exit code.
///
/// 0 on success, 1 on usage errors, 2 on data errors and 3 on numerical failures.
pub fn dispatch<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
        }
    };
    init_logging(cli.quiet);
    let shown: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(&cli, &shown) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
