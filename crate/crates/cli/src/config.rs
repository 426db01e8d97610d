//! Run configuration: flat `key = value` files, command-line overrides and validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{Arg, ArgMatches};

use rds_core::bifurcate::{DetectOptions, SweepOptions};
use rds_core::model::{make_map, Family, NoiseKind, NoiseModel};
use rds_core::stationary::SupportMethod;
use rds_core::RandomMap1D;

/// Subcommands of `rds`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    Density,
    Spectrum,
    Support,
    Kernel,
    Escape,
    Rotation,
    Sweep,
    Represent,
    Matrix,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Density,
        Command::Spectrum,
        Command::Support,
        Command::Kernel,
        Command::Escape,
        Command::Rotation,
        Command::Sweep,
        Command::Represent,
        Command::Matrix,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Density => "density",
            Command::Spectrum => "spectrum",
            Command::Support => "support",
            Command::Kernel => "kernel",
            Command::Escape => "escape",
            Command::Rotation => "rotation",
            Command::Sweep => "sweep",
            Command::Represent => "represent",
            Command::Matrix => "matrix",
        }
    }

    fn about(&self) -> &'static str {
        match self {
            Command::Density => "Stationary density on the Ulam grid (x,phi)",
            Command::Spectrum => "Leading eigenvalues of the Ulam matrix (re,im,modulus,group)",
            Command::Support => "Support components of the stationary measures (component,lo,hi)",
            Command::Kernel => "Transition density k(x, .) at one base point (y,density)",
            Command::Escape => "Quasi-stationary escape data of a window",
            Command::Rotation => "Rotation number sweep of the standard circle map (a,rho_mc,rho_spectral)",
            Command::Sweep => "Parameter sweep with bifurcation events (sweep.csv, events.csv)",
            Command::Represent => "Representing family f_mu(x) of a transition kernel (mu,f_mu_x)",
            Command::Matrix => "Dense Ulam matrix, row-major",
        }
    }

    fn default_out(&self) -> &'static str {
        match self {
            Command::Density => "density.csv",
            Command::Spectrum => "spec.csv",
            Command::Support => "support.csv",
            Command::Kernel => "slice.csv",
            Command::Escape => "escape.csv",
            Command::Rotation => "rho.csv",
            Command::Sweep => "sweep.csv",
            Command::Represent => "repmap.csv",
            Command::Matrix => "matrix.csv",
        }
    }

    /// Keys accepted by the command, with defaults (`None`: required or family dependent).
    pub fn keys(&self) -> Vec<Key> {
        let mut keys = vec![key("out", Some(self.default_out()), "output CSV path"), key("seed", Some("1"), "random seed")];
        let map_keys = |with_a: bool| {
            let mut k = vec![
                key("map", Some("standard-circle"), "standard-circle | logistic | affine | pure-noise"),
                key("noise", Some("uniform"), "uniform | smooth-bump"),
                key("sigma", None, "noise amplitude, >= 0"),
                key("eps", None, "circle nonlinearity, [0, 1)"),
                key("c", None, "affine offset"),
                key("lambda", None, "affine slope"),
            ];
            if with_a {
                k.push(key("a", None, "family parameter"));
            }
            k
        };
        let sweep_range = || vec![key("a-min", None, "first parameter value"), key("a-max", None, "last parameter value")];
        match self {
            Command::Density | Command::Spectrum => {
                let (grid, k) = if *self == Command::Density { ("2048", "4") } else { ("4096", "8") };
                keys.extend(map_keys(true));
                keys.push(key("grid", Some(grid), "Ulam cells, [16, 1048576]"));
                keys.push(key("k", Some(k), "eigenpairs, [1, 32]"));
                keys.push(key("tol", Some("1e-10"), "eigen residual tolerance, (0, 1)"));
            }
            Command::Support => {
                keys.extend(map_keys(true));
                keys.push(key("grid", Some("2048"), "cells, [16, 1048576]"));
                keys.push(key("method", Some("density"), "density | setvalued"));
                keys.push(key("tau", Some("1e-6"), "relative density threshold, (0, 1)"));
            }
            Command::Kernel => {
                keys.extend(map_keys(true));
                keys.push(key("x", None, "base point"));
                keys.push(key("points", Some("1001"), "y samples, [2, 1000000]"));
            }
            Command::Escape => {
                keys.extend(map_keys(true));
                keys.push(key("window", None, "lo:hi[,lo:hi...]"));
                keys.push(key("grid", Some("2048"), "Ulam cells, [16, 1048576]"));
                keys.push(key("mc", Some("0"), "Monte Carlo trials, 0 or [100, 100000000]"));
                keys.push(key("start", Some("qs"), "qs | uniform"));
                keys.push(key("max-steps", Some("10000000"), "censoring time, [1000, 1e12]"));
            }
            Command::Rotation => {
                keys.extend(map_keys(false));
                keys.extend(sweep_range());
                keys.push(key("steps", Some("101"), "parameter values, [2, 100000]"));
                keys.push(key("grid", Some("1024"), "Ulam cells, [16, 1048576]"));
                keys.push(key("n-mc", Some("100000"), "orbit length, [10000, 1e10]"));
            }
            Command::Sweep => {
                keys.extend(map_keys(false));
                keys.extend(sweep_range());
                keys.push(key("events", None, "events CSV path (default: events.csv beside out)"));
                keys.push(key("steps", Some("101"), "parameter values, [2, 100000]"));
                keys.push(key("grid", Some("2048"), "Ulam cells, [16, 1048576]"));
                keys.push(key("support-grid", Some("65536"), "set-valued support cells, [64, 16777216]"));
                keys.push(key("eigen-k", Some("4"), "eigenpairs per point, [1, 32]"));
                keys.push(key("eigen-tol", Some("1e-8"), "eigen residual tolerance, (0, 1)"));
                keys.push(key("detectors", Some("true"), "run the bifurcation detectors, true | false"));
                keys.push(key("k-max", Some("3"), "largest extremal period, [1, 6]"));
                keys.push(key("l-max", Some("6"), "longest critical word, [1, 12]"));
                keys.push(key("resolution", Some("1e-5"), "event resolution in a, (0, 1)"));
                keys.push(key("scan-a", Some("200"), "detector scan points in a, [8, 1000000]"));
                keys.push(key("scan-x", Some("2048"), "detector scan points in x, [64, 10000000]"));
            }
            Command::Represent => {
                keys.extend(map_keys(true));
                keys.push(key("kernel", Some("map"), "map | quadratic"));
                keys.push(key("kernel-from-map", None, "family whose kernel is represented (sets kernel = map)"));
                keys.push(key("nu", Some("uniform"), "law of mu: uniform | smooth-bump"));
                keys.push(key("probe-x", Some("0.3"), "base point"));
                keys.push(key("mu-points", Some("201"), "mu samples, [2, 1000000]"));
                keys.push(key("z-points", Some("257"), "z grid of the diffeomorphism criterion, [2, 1000000]"));
            }
            Command::Matrix => {
                keys.extend(map_keys(true));
                keys.push(key("grid", Some("1024"), "Ulam cells, [16, 8192]"));
                keys.push(key("window", None, "optional lo:hi[,lo:hi...]"));
            }
        }
        keys
    }

    fn from_name(name: &str) -> Option<Command> {
        Command::ALL.iter().copied().find(|c| c.name() == name)
    }
}

/// One configuration key.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

fn key(name: &'static str, default: Option<&'static str>, help: &'static str) -> Key {
    Key { name, default, help }
}

/// Invalid command line or configuration.
#[derive(Debug)]
pub enum UsageError {
    /// Help or version requests and argument syntax errors.
    Args(clap::Error),
    UnknownKey {
        key: String,
        command: &'static str,
    },
    Invalid {
        key: String,
        value: String,
        accepted: String,
    },
    Missing {
        key: String,
    },
    NotApplicable {
        key: String,
        reason: String,
    },
    /// Rejected by the model constructor.
    Model {
        key: String,
        source: rds_core::Error,
    },
    File {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UsageError::Args(e) => write!(f, "{}", e.to_string().trim_end()),
            UsageError::UnknownKey { key, command } => write!(f, "unknown key `{key}` for `{command}`"),
            UsageError::Invalid { key, value, accepted } => write!(f, "key `{key}`: value `{value}` outside {accepted}"),
            UsageError::Missing { key } => write!(f, "key `{key}` is required"),
            UsageError::NotApplicable { key, reason } => write!(f, "key `{key}` does not apply: {reason}"),
            UsageError::Model { key, source } => write!(f, "key `{key}`: {source}"),
            UsageError::File { path, line, message } => write!(f, "{}:{line}: {message}", path.display()),
        }
    }
}

impl std::error::Error for UsageError {}

impl UsageError {
    /// The offending key, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            UsageError::UnknownKey { key, .. }
            | UsageError::Invalid { key, .. }
            | UsageError::Missing { key }
            | UsageError::NotApplicable { key, .. }
            | UsageError::Model { key, .. } => Some(key),
            _ => None,
        }
    }
}

/// Which kernel `represent` works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelChoice {
    Map,
    Quadratic,
}

/// Typed parameters of each subcommand.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Density {
        grid: usize,
        k: usize,
        tol: f64,
    },
    Spectrum {
        grid: usize,
        k: usize,
        tol: f64,
    },
    Support {
        grid: usize,
        method: SupportMethod,
        tau: f64,
    },
    Kernel {
        x: f64,
        points: usize,
    },
    Escape {
        grid: usize,
        window: Vec<(f64, f64)>,
        mc: usize,
        qs_start: bool,
        max_steps: u64,
    },
    Rotation {
        a_min: f64,
        a_max: f64,
        steps: usize,
        grid: usize,
        n_mc: usize,
    },
    Sweep {
        a_min: f64,
        a_max: f64,
        opts: SweepOptions<f64>,
        events: PathBuf,
    },
    Represent {
        kernel: KernelChoice,
        nu: NoiseModel,
        probe_x: f64,
        mu_points: usize,
        z_points: usize,
    },
    Matrix {
        grid: usize,
        window: Option<Vec<(f64, f64)>>,
    },
}

/// A validated run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub map: RandomMap1D,
    pub params: Params,
    pub out: PathBuf,
    pub seed: u64,
    /// Every key with the value the run used (defaults included), for the manifest.
    pub values: BTreeMap<String, String>,
}

/// The `rds` argument parser.
pub fn cli() -> clap::Command {
    let mut cmd = clap::Command::new("rds")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Transfer-operator analysis of one-dimensional random maps")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for c in Command::ALL {
        let mut sub = clap::Command::new(c.name()).about(c.about()).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("flat key = value file or a run manifest"),
        );
        for k in c.keys() {
            let mut help = k.help.to_string();
            if let Some(d) = k.default {
                help.push_str(&format!(" [default: {d}]"));
            }
            sub = sub.arg(Arg::new(k.name).long(k.name).value_name("VALUE").allow_hyphen_values(true).help(help));
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

/// Parses `args` (program name first), reads `--config` if given and validates everything.
pub fn parse_config<I, S>(args: I) -> Result<RunConfig, UsageError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let matches = cli().try_get_matches_from(args).map_err(UsageError::Args)?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let command = Command::from_name(name).expect("registered subcommand");
    let mut provided = match sub.get_one::<String>("config") {
        Some(path) => read_config_file(Path::new(path), command)?,
        None => BTreeMap::new(),
    };
    for (k, v) in command_line_values(sub, command) {
        provided.insert(k, v);
    }
    build(command, provided)
}

fn command_line_values(sub: &ArgMatches, command: Command) -> Vec<(String, String)> {
    command
        .keys()
        .iter()
        .filter(|k| sub.value_source(k.name) == Some(ValueSource::CommandLine))
        .filter_map(|k| sub.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.clone())))
        .collect()
}

/// Reads a flat `key = value` file (`#` comments) or the `config` object of a run manifest.
pub fn read_config_file(path: &Path, command: Command) -> Result<BTreeMap<String, String>, UsageError> {
    let text = fs::read_to_string(path).map_err(|e| UsageError::File {
        path: path.into(),
        line: 0,
        message: e.to_string(),
    })?;
    let known: BTreeSet<&str> = command.keys().iter().map(|k| k.name).collect();
    let mut out = BTreeMap::new();
    if text.trim_start().starts_with('{') {
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| UsageError::File {
            path: path.into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let cfg = v.get("config").and_then(|c| c.as_object()).ok_or_else(|| UsageError::File {
            path: path.into(),
            line: 0,
            message: "manifest has no `config` object".into(),
        })?;
        for (k, val) in cfg {
            let val = val.as_str().map(str::to_string).unwrap_or_else(|| val.to_string());
            insert_key(&mut out, &known, command, k, val)?;
        }
        return Ok(out);
    }
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| UsageError::File {
            path: path.into(),
            line: i + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let v = v.trim();
        let v = v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v);
        insert_key(&mut out, &known, command, k.trim(), v.to_string())?;
    }
    Ok(out)
}

fn insert_key(out: &mut BTreeMap<String, String>, known: &BTreeSet<&str>, command: Command, k: &str, v: String) -> Result<(), UsageError> {
    let k = k.replace('_', "-");
    if !known.contains(k.as_str()) {
        return Err(UsageError::UnknownKey {
            key: k,
            command: command.name(),
        });
    }
    out.insert(k, v);
    Ok(())
}

/// Closed or half-open real range for messages and checks.
#[derive(Debug, Clone, Copy)]
struct Span {
    lo: f64,
    lo_open: bool,
    hi: f64,
    hi_open: bool,
}

impl Span {
    fn open(lo: f64, hi: f64) -> Self {
        Span {
            lo,
            lo_open: true,
            hi,
            hi_open: true,
        }
    }

    fn contains(&self, v: f64) -> bool {
        let above = if self.lo_open { v > self.lo } else { v >= self.lo };
        let below = if self.hi_open { v < self.hi } else { v <= self.hi };
        v.is_finite() && above && below
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let num = |v: f64| {
            if v.is_infinite() {
                if v > 0.0 {
                    "inf".into()
                } else {
                    "-inf".into()
                }
            } else {
                format!("{v}")
            }
        };
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_open { "(" } else { "[" },
            num(self.lo),
            num(self.hi),
            if self.hi_open { ")" } else { "]" }
        )
    }
}

const ANY: Span = Span {
    lo: f64::NEG_INFINITY,
    lo_open: true,
    hi: f64::INFINITY,
    hi_open: true,
};

/// Reads keys, applies defaults and records what was used.
struct Reader {
    provided: BTreeMap<String, String>,
    defaults: BTreeMap<&'static str, Option<&'static str>>,
    used: BTreeMap<String, String>,
}

impl Reader {
    fn raw(&mut self, k: &str) -> Option<String> {
        let v = self
            .provided
            .get(k)
            .cloned()
            .or_else(|| self.defaults.get(k).copied().flatten().map(str::to_string));
        if let Some(v) = &v {
            self.used.insert(k.to_string(), v.clone());
        }
        v
    }

    fn raw_or(&mut self, k: &str, fallback: &str) -> String {
        match self.raw(k) {
            Some(v) => v,
            None => {
                self.used.insert(k.to_string(), fallback.to_string());
                fallback.to_string()
            }
        }
    }

    fn required(&mut self, k: &str) -> Result<String, UsageError> {
        self.raw(k).ok_or_else(|| UsageError::Missing { key: k.into() })
    }

    fn real_from(&self, k: &str, v: &str, span: Span) -> Result<f64, UsageError> {
        match v.trim().parse::<f64>() {
            Ok(x) if span.contains(x) => Ok(x),
            _ => Err(UsageError::Invalid {
                key: k.into(),
                value: v.into(),
                accepted: format!("{span}"),
            }),
        }
    }

    fn real(&mut self, k: &str, span: Span) -> Result<f64, UsageError> {
        let v = self.required(k)?;
        self.real_from(k, &v, span)
    }

    fn real_or(&mut self, k: &str, fallback: &str, span: Span) -> Result<f64, UsageError> {
        let v = self.raw_or(k, fallback);
        self.real_from(k, &v, span)
    }

    fn integer(&mut self, k: &str, lo: u64, hi: u64) -> Result<u64, UsageError> {
        let v = self.required(k)?;
        let parsed = v.trim().parse::<u64>().ok().or_else(|| {
            // accept exact scientific notation such as 1e7
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.fract() == 0.0 && *x >= 0.0 && *x <= 9.0e15)
                .map(|x| x as u64)
        });
        match parsed {
            Some(n) if n >= lo && n <= hi => Ok(n),
            _ => Err(UsageError::Invalid {
                key: k.into(),
                value: v,
                accepted: format!("integers in [{lo}, {hi}]"),
            }),
        }
    }

    fn count(&mut self, k: &str, lo: usize, hi: usize) -> Result<usize, UsageError> {
        self.integer(k, lo as u64, hi as u64).map(|n| n as usize)
    }

    fn choice(&mut self, k: &str, options: &[&str]) -> Result<String, UsageError> {
        let v = self.required(k)?;
        if options.contains(&v.as_str()) {
            Ok(v)
        } else {
            Err(UsageError::Invalid {
                key: k.into(),
                value: v,
                accepted: format!("one of {}", options.join(" | ")),
            })
        }
    }

    fn windows(&mut self, k: &str) -> Result<Option<Vec<(f64, f64)>>, UsageError> {
        let Some(v) = self.raw(k) else { return Ok(None) };
        let bad = || UsageError::Invalid {
            key: k.into(),
            value: v.clone(),
            accepted: "lo:hi[,lo:hi...] with lo < hi".into(),
        };
        let mut out = Vec::new();
        for part in v.split(',') {
            let (lo, hi) = part.split_once(':').ok_or_else(bad)?;
            let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(bad());
            }
            out.push((lo, hi));
        }
        Ok(Some(out))
    }

    fn path(&mut self, k: &str) -> Result<PathBuf, UsageError> {
        let v = self.required(k)?;
        writable(k, &v)
    }
}

fn writable(k: &str, v: &str) -> Result<PathBuf, UsageError> {
    let p = PathBuf::from(v);
    let parent = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let dir_ok = fs::metadata(parent).map(|m| m.is_dir() && !m.permissions().readonly()).unwrap_or(false);
    if v.is_empty() || !dir_ok || p.is_dir() {
        return Err(UsageError::Invalid {
            key: k.into(),
            value: v.into(),
            accepted: "a file path in an existing writable directory".into(),
        });
    }
    Ok(p)
}

fn noise_model(r: &mut Reader, k: &str) -> Result<NoiseModel, UsageError> {
    Ok(match r.choice(k, &["uniform", "smooth-bump"])?.as_str() {
        "uniform" => NoiseModel::new(NoiseKind::Uniform),
        _ => NoiseModel::new(NoiseKind::SmoothBump),
    })
}

const FAMILIES: [&str; 4] = ["standard-circle", "logistic", "affine", "pure-noise"];

/// Family with the sweep parameter set to `a` (or read from key `a`).
fn family(r: &mut Reader, name: &str, a: Option<f64>) -> Result<Family<f64>, UsageError> {
    let param = |r: &mut Reader, k: &str, fallback: &str| -> Result<f64, UsageError> {
        match a {
            Some(v) => Ok(v),
            None => r.real_or(k, fallback, ANY),
        }
    };
    Ok(match name {
        "standard-circle" => Family::StandardCircle {
            a: param(r, "a", "0.1")?,
            eps: r.real_or("eps", "0.9", ANY)?,
            sigma: r.real_or("sigma", "0.05", ANY)?,
        },
        "logistic" => Family::Logistic {
            a: param(r, "a", "3.84")?,
            sigma: r.real_or("sigma", "0.005", ANY)?,
        },
        "affine" => Family::AffineTest {
            c: param(r, "c", "0")?,
            lambda: r.real_or("lambda", "0.5", ANY)?,
            sigma: r.real_or("sigma", "0.1", ANY)?,
        },
        _ => Family::PureNoise {
            sigma: r.real_or("sigma", "0.05", ANY)?,
        },
    })
}

fn model_error(e: rds_core::Error, fam: &Family<f64>) -> UsageError {
    let msg = e.to_string();
    let key = ["sigma", "eps", "lambda"]
        .iter()
        .find(|k| msg.starts_with(&format!("{k} must")) || msg.contains(&format!(": {k} must")))
        .map(|k| k.to_string())
        .unwrap_or_else(|| match fam {
            Family::AffineTest { .. } => "c".into(),
            Family::PureNoise { .. } => "sigma".into(),
            _ => "a".into(),
        });
    UsageError::Model { key, source: e }
}

fn build_map(r: &mut Reader, name: &str, a: Option<f64>) -> Result<RandomMap1D, UsageError> {
    let fam = family(r, name, a)?;
    let noise = noise_model(r, "noise")?;
    make_map(fam, noise).map_err(|e| model_error(e, &fam))
}

fn build(command: Command, provided: BTreeMap<String, String>) -> Result<RunConfig, UsageError> {
    let keys = command.keys();
    for k in provided.keys() {
        if !keys.iter().any(|kk| kk.name == k) {
            return Err(UsageError::UnknownKey {
                key: k.clone(),
                command: command.name(),
            });
        }
    }
    let mut r = Reader {
        provided,
        defaults: keys.iter().map(|k| (k.name, k.default)).collect(),
        used: BTreeMap::new(),
    };
    let out = r.path("out")?;
    let seed = r.integer("seed", 0, u64::MAX)?;
    let unit_open = Span::open(0.0, 1.0);
    let family_name = match command {
        Command::Represent => match r.provided.get("kernel-from-map").cloned() {
            Some(v) => {
                r.used.insert("kernel-from-map".into(), v.clone());
                if r.provided.get("map").is_some_and(|m| *m != v) {
                    return Err(UsageError::NotApplicable {
                        key: "map".into(),
                        reason: "conflicts with kernel-from-map".into(),
                    });
                }
                if !FAMILIES.contains(&v.as_str()) {
                    return Err(UsageError::Invalid {
                        key: "kernel-from-map".into(),
                        value: v,
                        accepted: format!("one of {}", FAMILIES.join(" | ")),
                    });
                }
                v
            }
            None => r.choice("map", &FAMILIES)?,
        },
        _ => r.choice("map", &FAMILIES)?,
    };
    if command == Command::Represent {
        r.used.insert("map".into(), family_name.clone());
    }
    let (map, params) = match command {
        Command::Density | Command::Spectrum => {
            let map = build_map(&mut r, &family_name, None)?;
            let grid = r.count("grid", 16, 1 << 20)?;
            let k = r.count("k", 1, 32)?;
            let tol = r.real("tol", unit_open)?;
            let p = if command == Command::Density {
                Params::Density { grid, k, tol }
            } else {
                Params::Spectrum { grid, k, tol }
            };
            (map, p)
        }
        Command::Support => {
            let map = build_map(&mut r, &family_name, None)?;
            let grid = r.count("grid", 16, 1 << 20)?;
            let method = match r.choice("method", &["density", "setvalued"])?.as_str() {
                "density" => SupportMethod::DensityThreshold,
                _ => SupportMethod::SetValued,
            };
            let tau = r.real("tau", unit_open)?;
            (map, Params::Support { grid, method, tau })
        }
        Command::Kernel => {
            let map = build_map(&mut r, &family_name, None)?;
            let x = r.real("x", ANY)?;
            let points = r.count("points", 2, 1_000_000)?;
            (map, Params::Kernel { x, points })
        }
        Command::Escape => {
            let map = build_map(&mut r, &family_name, None)?;
            let window = r.windows("window")?.ok_or_else(|| UsageError::Missing { key: "window".into() })?;
            let grid = r.count("grid", 16, 1 << 20)?;
            let mc = r.count("mc", 0, 100_000_000)?;
            if mc > 0 && mc < 100 {
                return Err(UsageError::Invalid {
                    key: "mc".into(),
                    value: mc.to_string(),
                    accepted: "0 or integers in [100, 100000000]".into(),
                });
            }
            let qs_start = r.choice("start", &["qs", "uniform"])? == "qs";
            let max_steps = r.integer("max-steps", 1000, 1_000_000_000_000)?;
            (
                map,
                Params::Escape {
                    grid,
                    window,
                    mc,
                    qs_start,
                    max_steps,
                },
            )
        }
        Command::Rotation => {
            if family_name != "standard-circle" {
                return Err(UsageError::Invalid {
                    key: "map".into(),
                    value: family_name,
                    accepted: "standard-circle".into(),
                });
            }
            let a_min = r.real_or("a-min", "0", ANY)?;
            let a_max = r.real_or("a-max", "0.5", ANY)?;
            if !(a_max > a_min) {
                return Err(UsageError::Invalid {
                    key: "a-max".into(),
                    value: a_max.to_string(),
                    accepted: format!("({a_min}, inf)"),
                });
            }
            let map = build_map(&mut r, &family_name, Some(a_min))?;
            let steps = r.count("steps", 2, 100_000)?;
            let grid = r.count("grid", 16, 1 << 20)?;
            let n_mc = r.count("n-mc", 10_000, 10_000_000_000)?;
            (
                map,
                Params::Rotation {
                    a_min,
                    a_max,
                    steps,
                    grid,
                    n_mc,
                },
            )
        }
        Command::Sweep => {
            let a_min = r.real("a-min", ANY)?;
            let a_max = r.real("a-max", ANY)?;
            if !(a_max > a_min) {
                return Err(UsageError::Invalid {
                    key: "a-max".into(),
                    value: a_max.to_string(),
                    accepted: format!("({a_min}, inf)"),
                });
            }
            let map = build_map(&mut r, &family_name, Some(a_min))?;
            let fam = family(&mut r, &family_name, Some(a_max))?;
            make_map(fam, map_noise(&map)).map_err(|e| model_error(e, &fam))?;
            let events = match r.raw("events") {
                Some(v) => writable("events", &v)?,
                None => {
                    let p = out.with_file_name("events.csv");
                    r.used.insert("events".into(), p.display().to_string());
                    p
                }
            };
            let detect = DetectOptions {
                k_max: r.count("k-max", 1, 6)?,
                resolution: r.real("resolution", unit_open)?,
                scan_a: r.count("scan-a", 8, 1_000_000)?,
                scan_x: r.count("scan-x", 64, 10_000_000)?,
                l_max: r.count("l-max", 1, 12)?,
                ..DetectOptions::default()
            };
            let opts = SweepOptions {
                steps: r.count("steps", 2, 100_000)?,
                grid_cells: r.count("grid", 16, 1 << 20)?,
                support_cells: r.count("support-grid", 64, 1 << 24)?,
                eigen_k: r.count("eigen-k", 1, 32)?,
                eigen_tol: r.real("eigen-tol", unit_open)?,
                detectors: r.choice("detectors", &["true", "false"])? == "true",
                detect,
            };
            (map, Params::Sweep { a_min, a_max, opts, events })
        }
        Command::Represent => {
            let kernel = match r.choice("kernel", &["map", "quadratic"])?.as_str() {
                "map" => KernelChoice::Map,
                _ => KernelChoice::Quadratic,
            };
            if kernel == KernelChoice::Quadratic && r.provided.contains_key("kernel-from-map") {
                return Err(UsageError::NotApplicable {
                    key: "kernel-from-map".into(),
                    reason: "kernel = quadratic".into(),
                });
            }
            let map = build_map(&mut r, &family_name, None)?;
            let nu = noise_model(&mut r, "nu")?;
            let probe_x = r.real("probe-x", ANY)?;
            let mu_points = r.count("mu-points", 2, 1_000_000)?;
            let z_points = r.count("z-points", 2, 1_000_000)?;
            (
                map,
                Params::Represent {
                    kernel,
                    nu,
                    probe_x,
                    mu_points,
                    z_points,
                },
            )
        }
        Command::Matrix => {
            let map = build_map(&mut r, &family_name, None)?;
            let grid = r.count("grid", 16, 8192)?;
            let window = r.windows("window")?;
            (map, Params::Matrix { grid, window })
        }
    };
    for k in r.provided.keys() {
        if !r.used.contains_key(k) {
            return Err(UsageError::NotApplicable {
                key: k.clone(),
                reason: format!("not used by map `{family_name}`"),
            });
        }
    }
    Ok(RunConfig {
        command,
        map,
        params,
        out,
        seed,
        values: r.used,
    })
}

fn map_noise(map: &RandomMap1D) -> NoiseModel {
    use rds_core::model::RandomMap;
    map.noise()
}
