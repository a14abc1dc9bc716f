mod args;
mod config;
mod output;
mod run;

use std::fmt;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use dmem_core::Parallelism;

use args::{Cli, Command, ReplayArgs};
use output::{num, Manifest, OutputDigest};
use run::{RunResult, Status};

const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_VIOLATED: u8 = 3;
const EXIT_INCONCLUSIVE: u8 = 4;
const EXIT_MISMATCH: u8 = 5;

/// Invalid parameters detected before any simulation starts.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn threads(flag: Option<usize>) -> Result<usize> {
    if let Some(t) = flag {
        return Ok(t);
    }
    match std::env::var("DMEM_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| UsageError(format!("DMEM_THREADS must be a count, got `{v}`")).into()),
        Err(_) => Ok(0),
    }
}

fn dispatch(cmd: &Command, par: Parallelism) -> Result<RunResult> {
    match cmd {
        Command::Toric4dLifetime(a) => run::toric_lifetime(a, par),
        Command::Toric4dStatic(a) => run::toric_static(a, par),
        Command::Toy2d(a) => run::toy2d(a, par),
        Command::ConcatBounds(a) => run::concat_bounds(a),
        Command::ConcatSim(a) => run::concat_sim(a, par),
        Command::ConcatSinglejump(a) => run::concat_singlejump(a, par),
        Command::GadgetVerify(a) => run::gadget_verify(a),
        Command::Replay(_) => unreachable!("replay is handled separately"),
    }
}

/// Runs an experiment and writes its CSV and manifest.
fn execute(cmd: &Command) -> Result<(Status, Manifest)> {
    let common = cmd.common().expect("experiment subcommand");
    let n_threads = threads(common.threads)?;
    let out_dir = common.out_dir.clone();
    let started = output::unix_now();
    let result = dispatch(cmd, Parallelism(n_threads))?;
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let csv_path = out_dir.join(result.file);
    result.table.write(&csv_path)?;
    let manifest = Manifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        run: cmd.clone(),
        seed: cmd.seed(),
        threads: n_threads,
        started_unix: started,
        finished_unix: output::unix_now(),
        outputs: vec![OutputDigest {
            file: result.file.to_string(),
            sha256: output::sha256_file(&csv_path)?,
        }],
        summary: result.summary,
    };
    let mpath = Manifest::path_for(&csv_path);
    manifest.write(&mpath)?;
    eprintln!(
        "wrote {} and {} in {}s",
        csv_path.display(),
        mpath.display(),
        num(((manifest.finished_unix - started) * 100.0).round() / 100.0)
    );
    Ok((result.status, manifest))
}

fn replay(a: &ReplayArgs) -> Result<bool> {
    let old = Manifest::read(&a.manifest)?;
    let mut cmd = old.run.clone();
    let common = cmd
        .common_mut()
        .context("manifest does not record an experiment")?;
    common.out_dir = a.out_dir.clone();
    common.threads = a.threads;
    let (_, new) = execute(&cmd)?;
    let mut same = old.outputs.len() == new.outputs.len();
    for o in &old.outputs {
        match new.outputs.iter().find(|n| n.file == o.file) {
            Some(n) if n.sha256 == o.sha256 => println!("{}: match {}", o.file, o.sha256),
            Some(n) => {
                println!(
                    "{}: MISMATCH recorded {} replayed {}",
                    o.file, o.sha256, n.sha256
                );
                same = false;
            }
            None => {
                println!("{}: missing from replay", o.file);
                same = false;
            }
        }
    }
    Ok(same)
}

fn exit_for(e: &anyhow::Error) -> ExitCode {
    eprintln!("error: {e:#}");
    if e.downcast_ref::<UsageError>().is_some() {
        ExitCode::from(EXIT_USAGE)
    } else {
        ExitCode::from(EXIT_ERROR)
    }
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => return exit_for(&e),
    };
    let cli = Cli::parse_from(argv);
    match &cli.command {
        Command::Replay(a) => match replay(a) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(EXIT_MISMATCH),
            Err(e) => exit_for(&e),
        },
        cmd => {
            match execute(cmd) {
                Ok((Status::Ok, _)) => ExitCode::SUCCESS,
                Ok((Status::Violated, _)) => {
                    eprintln!("bound violated beyond the numerical margin");
                    ExitCode::from(EXIT_VIOLATED)
                }
                Ok((Status::Inconclusive, _)) => {
                    eprintln!("inconclusive: excess within the numerical margin or integrator not converged");
                    ExitCode::from(EXIT_INCONCLUSIVE)
                }
                Err(e) => exit_for(&e),
            }
        }
    }
}
