//! The `exom` command line.
//!
//! Every flag can also come from a TOML or JSON file passed with
//! `--config`: top-level `out-dir` and `jobs`, plus one table per
//! subcommand keyed by flag name. Flags given on the command line win.

mod args;
mod commands;
mod manifest;

use std::ffi::OsString;
use std::path::{Component, Path, PathBuf};

use clap::Parser;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

pub use args::*;
pub use manifest::{ExperimentManifest, OutputRecord, ScmRef};

use crate::error::Error;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "EXOM_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "exom-out";

/// A failed invocation: bad usage (exit 2) or a runtime error (exit 1).
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

pub(crate) fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

thread_local! {
    static QUIET: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

/// Writes to stdout; a closed pipe is not an error.
pub(crate) fn emit(s: &str) {
    use std::io::Write;
    if QUIET.with(|q| q.get()) {
        return;
    }
    let _ = std::io::stdout().lock().write_all(s.as_bytes());
}

/// Runs `f` with stdout output suppressed on this thread.
pub(crate) fn quietly<T>(f: impl FnOnce() -> T) -> T {
    let before = QUIET.with(|q| q.replace(true));
    let out = f();
    QUIET.with(|q| q.set(before));
    out
}

/// Settings shared by every subcommand once flags and config are merged.
#[derive(Debug, Clone)]
pub struct Context {
    pub out_dir: PathBuf,
    pub jobs: usize,
}

impl Context {
    /// Resolves `rel` inside the output directory. Absolute paths and
    /// `..` components are refused.
    pub fn output_path(&self, rel: &Path) -> CliResult<PathBuf> {
        if rel.as_os_str().is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_))) {
            return Err(usage(format!(
                "output path `{}` must be relative to the output directory, without `..`",
                rel.display()
            )));
        }
        Ok(self.out_dir.join(rel))
    }
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(Failure::Runtime(e)) => {
            let diag = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{diag}");
            1
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => read_config_file(p)?,
        None => Value::Object(Map::new()),
    };
    let file_dir = file.get("out-dir").and_then(Value::as_str).map(PathBuf::from);
    let file_jobs = file.get("jobs").and_then(Value::as_u64).map(|j| j as usize);
    let out_dir = cli
        .out_dir
        .clone()
        .or(file_dir)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let jobs = cli.jobs.or(file_jobs).unwrap_or(1).max(1);
    let ctx = Context { out_dir, jobs };
    if let Value::Object(m) = &file {
        let known = ["out-dir", "jobs", "boundary", "train", "estimate", "compare", "query", "ablate"];
        if let Some(k) = m.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(usage(format!("unknown config key `{k}`")));
        }
    }
    let section = |name: &str| file.get(name).cloned();
    match cli.command {
        Command::Zoo { command } => commands::zoo(command),
        Command::Boundary(a) => commands::boundary(&ctx, merge(a, section("boundary"))?),
        Command::Train(a) => commands::train(&ctx, merge(a, section("train"))?),
        Command::Estimate(a) => commands::estimate(&ctx, merge(a, section("estimate"))?),
        Command::Compare(a) => commands::compare(&ctx, merge(a, section("compare"))?),
        Command::Query(a) => commands::query(&ctx, merge(a, section("query"))?),
        Command::Ablate(a) => commands::ablate(&ctx, merge(a, section("ablate"))?),
        Command::Verify(a) => commands::verify(&ctx, a),
    }
}

fn read_config_file(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config file `{}`: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let v: Value = if is_json {
        serde_json::from_str(&text).map_err(|e| usage(format!("config file: {e}")))?
    } else {
        toml::from_str(&text).map_err(|e| usage(format!("config file: {e}")))?
    };
    if !v.is_object() {
        return Err(usage("config file must hold a table"));
    }
    Ok(v)
}

/// Fills every flag left unset on the command line from the config
/// section. Unknown keys are usage errors.
pub(crate) fn merge<T: Serialize + DeserializeOwned + Default>(cli: T, section: Option<Value>) -> CliResult<T> {
    let Some(section) = section else {
        return Ok(cli);
    };
    let Value::Object(file) = section else {
        return Err(usage("config sections must be tables"));
    };
    let known = match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("argument structs serialize to objects"),
    };
    let mut merged = match serde_json::to_value(cli) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("argument structs serialize to objects"),
    };
    for (k, v) in file {
        if !known.contains_key(&k) {
            return Err(usage(format!("unknown config key `{k}`")));
        }
        if merged.get(&k).is_none_or(Value::is_null) {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("config file: {e}")))
}
