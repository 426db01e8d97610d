//! Command-line front end of `rds-core`: configuration, dispatch and artifacts.

// `!(x > 0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;

pub use commands::{execute, Outcome};
pub use config::{parse_config, Command, Params, RunConfig, UsageError};

use output::{sibling, Manifest, Timer};

/// Exit status for usage errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for module errors.
pub const EXIT_FAILURE: i32 = 1;

/// Caps rayon's global pool at `RDS_THREADS` when set.
pub fn configure_threads(value: Option<&str>) -> Result<(), UsageError> {
    let Some(v) = value else { return Ok(()) };
    let n = v.trim().parse::<usize>().ok().filter(|n| *n >= 1).ok_or_else(|| UsageError::Invalid {
        key: "RDS_THREADS".into(),
        value: v.into(),
        accepted: "integers >= 1".into(),
    })?;
    // a second call in one process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs `rds` with `args` (program name first) and returns the exit status.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cfg = match parse_config(args) {
        Ok(c) => c,
        Err(UsageError::Args(e)) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
        Err(e) => {
            eprintln!("usage error: {e}");
            return EXIT_USAGE;
        }
    };
    if let Err(e) = configure_threads(std::env::var("RDS_THREADS").ok().as_deref()) {
        eprintln!("usage error: {e}");
        return EXIT_USAGE;
    }
    let mut timer = Timer::new();
    let result = execute(&cfg, &mut timer);
    let (outcome, error) = match result {
        Ok(o) => (o, None),
        Err(e) => (Outcome::default(), Some(e)),
    };
    let manifest_path = sibling(&cfg.out, "manifest.json");
    let manifest = Manifest {
        command: cfg.command.name(),
        config: &cfg.values,
        timer: &timer,
        warnings: &outcome.warnings,
        outputs: &outcome.outputs,
        error: error.as_ref().map(|e| e.to_string()),
        summary: outcome.summary.clone(),
    };
    if let Err(e) = manifest.write(&manifest_path) {
        eprintln!("error: cannot write {}: {e}", manifest_path.display());
        return EXIT_FAILURE;
    }
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    match error {
        Some(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
        None => 0,
    }
}
