//! Command-line front end: `simulate`, `sweep` and `compare`.
//!
//! Settings come from flags and, optionally, a flat JSON config file (`--config`); flags win.
//! Every JSON output embeds the resolved config under `"config"` in that same flat form, and
//! an output file can itself be passed to `--config` to replay the run.
//!
//! Exit status: 0 on success, 1 for configuration errors, 2 for runtime failures.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::channel::{ChannelSpec, Fading};
use crate::error::Error;
use crate::geometry::NetworkInstance;
use crate::mac::{MacSpec, Scheme};
use crate::simulator::{Topology, DEFAULT_SLOTS};
use crate::sweep::{
    compare_results, default_grid, run_cell, run_sweep, sample_topology, write_csv, SweepPlan,
    SweepResult, DEFAULT_GRID_POINTS,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable read for the default worker count.
pub const THREADS_ENV: &str = "MHCAP_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

const DEFAULT_SEED: u64 = 1;
const DEFAULT_SAMPLES: u64 = 100;
const DEFAULT_K: f64 = 20.0;
const DEFAULT_ALPHA: f64 = 4.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}", .0.to_string().trim_start_matches("error: ").trim_end())]
    Cli(#[from] clap::Error),
    #[error("{0}")]
    Usage(String),
    #[error("unknown config key {key:?} in {path}")]
    UnknownKey { key: String, path: PathBuf },
    #[error("config key {key:?} in {path}: {msg}")]
    TypeMismatch {
        key: String,
        path: PathBuf,
        msg: String,
    },
    #[error("missing required setting --{0}")]
    Missing(&'static str),
    #[error("--{param} does not apply to scheme {scheme} (it takes --{expected})")]
    SchemeMismatch {
        param: &'static str,
        scheme: Scheme,
        expected: &'static str,
    },
    #[error("--{0} is not accepted by the {1} command")]
    NotForCommand(&'static str, Command),
    #[error("config file is for the {file} command but {given} was requested")]
    CommandMismatch { file: Command, given: Command },
    #[error("cannot read config {path}: {msg}")]
    Read { path: PathBuf, msg: String },
    #[error(transparent)]
    Invalid(#[from] Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Sweep,
    Compare,
}

impl std::fmt::Display for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Compare => "compare",
        })
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mhcap",
    version,
    about = "Throughput capacity of random wireless multi-hop networks"
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Debug, Subcommand)]
enum CliCommand {
    /// One network, one MAC setting: write the capacity report.
    Simulate(RawArgs),
    /// Sweep one scheme's parameter over a grid, averaging over network samples.
    Sweep(RawArgs),
    /// Sweep all three schemes at the same N and channel and compare their optima.
    Compare(RawArgs),
}

/// Flags shared by every command; which ones are allowed is checked after merging.
#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArgs {
    /// Flat JSON config file (or a previous JSON output to replay).
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,

    #[arg(skip)]
    #[serde(default)]
    command: Option<Command>,

    /// aloha, coloring or csma.
    #[arg(long)]
    scheme: Option<String>,
    /// ALOHA access probability.
    #[arg(long)]
    p: Option<f64>,
    /// Coloring exclusion distance.
    #[arg(long)]
    d: Option<f64>,
    /// CSMA carrier-sense threshold.
    #[arg(long)]
    theta: Option<f64>,

    /// Number of nodes.
    #[arg(long)]
    n: Option<usize>,
    /// Disk radius.
    #[arg(long)]
    radius: Option<f64>,
    /// SIR threshold K.
    #[arg(long)]
    k: Option<f64>,
    /// Attenuation exponent (> 2).
    #[arg(long)]
    alpha: Option<f64>,
    /// none or rayleigh.
    #[arg(long)]
    fading: Option<String>,
    /// Slots per run.
    #[arg(long)]
    slots: Option<u64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Network samples per grid point.
    #[arg(long)]
    samples: Option<u64>,

    /// Explicit parameter grid, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    grid: Option<Vec<f64>>,
    /// Lower grid end (default depends on the scheme).
    #[arg(long)]
    grid_min: Option<f64>,
    /// Upper grid end.
    #[arg(long)]
    grid_max: Option<f64>,
    /// Grid size, linear for p and d, logarithmic for theta (default 16).
    #[arg(long)]
    grid_points: Option<usize>,
    /// ALOHA grid for compare.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    grid_aloha: Option<Vec<f64>>,
    /// Coloring grid for compare.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    grid_coloring: Option<Vec<f64>>,
    /// CSMA grid for compare.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    grid_csma: Option<Vec<f64>>,

    /// Replay a saved network instance (simulate).
    #[arg(long)]
    instance: Option<PathBuf>,

    /// JSON output path.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// CSV output path (sweep, compare).
    #[arg(long)]
    #[serde(skip)]
    csv: Option<PathBuf>,
    /// Write the simulated network instance here (simulate).
    #[arg(long)]
    #[serde(skip)]
    save_instance: Option<PathBuf>,
    /// Write the link counters here (simulate).
    #[arg(long)]
    #[serde(skip)]
    save_stats: Option<PathBuf>,
    /// Write every slot's transmitter set as JSON lines (simulate).
    #[arg(long)]
    #[serde(skip)]
    dump_sets: Option<PathBuf>,
    /// Include p, t and m matrices in the simulate report.
    #[arg(long)]
    #[serde(default)]
    dump_matrices: bool,

    /// Worker threads (default: $MHCAP_THREADS or all cores).
    #[arg(long)]
    #[serde(skip)]
    threads: Option<usize>,
    /// More logging on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    #[serde(skip)]
    verbose: u8,
}

const FILE_KEYS: &[&str] = &[
    "command",
    "scheme",
    "p",
    "d",
    "theta",
    "n",
    "radius",
    "k",
    "alpha",
    "fading",
    "slots",
    "seed",
    "samples",
    "grid",
    "grid_min",
    "grid_max",
    "grid_points",
    "grid_aloha",
    "grid_coloring",
    "grid_csma",
    "instance",
    "dump_matrices",
];

/// What to run, with every setting resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    Simulate {
        mac: MacSpec,
        instance: Option<PathBuf>,
    },
    Sweep {
        scheme: Scheme,
        grid: Vec<f64>,
        samples: u64,
    },
    Compare {
        grids: [Vec<f64>; 3],
        samples: u64,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub save_instance: Option<PathBuf>,
    pub save_stats: Option<PathBuf>,
    pub dump_sets: Option<PathBuf>,
    pub dump_matrices: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub job: Job,
    pub n_nodes: usize,
    pub radius: f64,
    pub channel: ChannelSpec,
    pub t_slots: u64,
    pub master_seed: u64,
    pub outputs: Outputs,
    pub threads: Option<usize>,
    pub verbosity: u8,
}

impl RunConfig {
    /// Flat key-value form of every setting that affects results; valid as a config file.
    pub fn resolved(&self) -> Value {
        let mut m = Map::new();
        m.insert("command".into(), json!(self.command));
        match &self.job {
            Job::Simulate { mac, instance } => {
                m.insert("scheme".into(), json!(mac.scheme()));
                m.insert(mac.scheme().parameter_name().into(), json!(mac.parameter()));
                if let Some(path) = instance {
                    m.insert("instance".into(), json!(path));
                }
                m.insert("dump_matrices".into(), json!(self.outputs.dump_matrices));
            }
            Job::Sweep {
                scheme,
                grid,
                samples,
            } => {
                m.insert("scheme".into(), json!(scheme));
                m.insert("grid".into(), json!(grid));
                m.insert("samples".into(), json!(samples));
            }
            Job::Compare { grids, samples } => {
                m.insert("grid_aloha".into(), json!(grids[0]));
                m.insert("grid_coloring".into(), json!(grids[1]));
                m.insert("grid_csma".into(), json!(grids[2]));
                m.insert("samples".into(), json!(samples));
            }
        }
        m.insert("n".into(), json!(self.n_nodes));
        m.insert("radius".into(), json!(self.radius));
        m.insert("k".into(), json!(self.channel.k_threshold()));
        m.insert("alpha".into(), json!(self.channel.alpha()));
        m.insert("fading".into(), json!(self.channel.fading()));
        m.insert("slots".into(), json!(self.t_slots));
        m.insert("seed".into(), json!(self.master_seed));
        Value::Object(m)
    }

    fn sweep_plan(&self, scheme: Scheme, grid: &[f64], samples: u64) -> SweepPlan {
        SweepPlan {
            scheme,
            grid: grid.to_vec(),
            n_nodes: self.n_nodes,
            radius: self.radius,
            channel: self.channel,
            samples,
            t_slots: self.t_slots,
            master_seed: self.master_seed,
        }
    }
}

fn read_config_file(path: &Path) -> Result<RawArgs, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.to_owned(),
        msg: e.to_string(),
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|e| ConfigError::Read {
        path: path.to_owned(),
        msg: e.to_string(),
    })?;
    let mut object = match value {
        Value::Object(m) => m,
        _ => {
            return Err(ConfigError::Read {
                path: path.to_owned(),
                msg: "expected a JSON object".into(),
            })
        }
    };
    // A previous output: replay its embedded config.
    if object.contains_key("schema_version") {
        object = match object.remove("config") {
            Some(Value::Object(m)) => m,
            _ => {
                return Err(ConfigError::Read {
                    path: path.to_owned(),
                    msg: "output file has no embedded config".into(),
                })
            }
        };
    }
    for key in object.keys() {
        if !FILE_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                key: key.clone(),
                path: path.to_owned(),
            });
        }
    }
    let mut raw = RawArgs::default();
    for (key, value) in object {
        let one = Value::Object(Map::from_iter([(key.clone(), value)]));
        let parsed: RawArgs =
            serde_json::from_value(one).map_err(|e| ConfigError::TypeMismatch {
                key: key.clone(),
                path: path.to_owned(),
                msg: e.to_string(),
            })?;
        raw.overlay(parsed);
    }
    Ok(raw)
}

impl RawArgs {
    /// Copies every setting present in `top` over `self`.
    fn overlay(&mut self, top: RawArgs) {
        macro_rules! take {
            ($($f:ident),*) => { $( if top.$f.is_some() { self.$f = top.$f; } )* };
        }
        take!(
            config,
            command,
            scheme,
            p,
            d,
            theta,
            n,
            radius,
            k,
            alpha,
            fading,
            slots,
            seed,
            samples,
            grid,
            grid_min,
            grid_max,
            grid_points,
            grid_aloha,
            grid_coloring,
            grid_csma,
            instance,
            out,
            csv,
            save_instance,
            save_stats,
            dump_sets,
            threads
        );
        self.dump_matrices |= top.dump_matrices;
        self.verbose = self.verbose.max(top.verbose);
    }
}

/// Parses command-line arguments (program name first) into a validated [`RunConfig`].
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let (command, flags) = match cli.command {
        CliCommand::Simulate(a) => (Command::Simulate, a),
        CliCommand::Sweep(a) => (Command::Sweep, a),
        CliCommand::Compare(a) => (Command::Compare, a),
    };
    let mut raw = match &flags.config {
        Some(path) => read_config_file(path)?,
        None => RawArgs::default(),
    };
    if let Some(file) = raw.command {
        if file != command {
            return Err(ConfigError::CommandMismatch {
                file,
                given: command,
            });
        }
    }
    raw.overlay(flags);
    resolve(command, raw)
}

fn forbid(command: Command, present: bool, flag: &'static str) -> Result<(), ConfigError> {
    if present {
        Err(ConfigError::NotForCommand(flag, command))
    } else {
        Ok(())
    }
}

fn resolve(command: Command, raw: RawArgs) -> Result<RunConfig, ConfigError> {
    let n_nodes = raw.n.ok_or(ConfigError::Missing("n"))?;
    let radius = raw.radius.unwrap_or(1.0);
    let fading: Fading = match &raw.fading {
        Some(s) => s.parse()?,
        None => Fading::None,
    };
    let channel = ChannelSpec::new(
        fading,
        raw.alpha.unwrap_or(DEFAULT_ALPHA),
        raw.k.unwrap_or(DEFAULT_K),
    )?;
    let t_slots = raw.slots.unwrap_or(DEFAULT_SLOTS);
    if t_slots == 0 {
        return Err(Error::invalid("--slots must be at least 1").into());
    }
    if n_nodes < 2 {
        return Err(Error::invalid(format!("--n must be at least 2, got {n_nodes}")).into());
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("--radius must be positive, got {radius}")).into());
    }
    let scheme: Option<Scheme> = raw.scheme.as_deref().map(str::parse).transpose()?;
    let params: [(&'static str, Option<f64>, Scheme); 3] = [
        ("p", raw.p, Scheme::Aloha),
        ("d", raw.d, Scheme::Coloring),
        ("theta", raw.theta, Scheme::Csma),
    ];
    let samples = raw.samples.unwrap_or(DEFAULT_SAMPLES);
    let single_grid = raw.grid.is_some()
        || raw.grid_min.is_some()
        || raw.grid_max.is_some()
        || raw.grid_points.is_some();
    let per_scheme_grid =
        raw.grid_aloha.is_some() || raw.grid_coloring.is_some() || raw.grid_csma.is_some();

    let job = match command {
        Command::Simulate => {
            let scheme = scheme.ok_or(ConfigError::Missing("scheme"))?;
            check_params(scheme, &params)?;
            forbid(command, single_grid, "grid")?;
            forbid(command, per_scheme_grid, "grid-<scheme>")?;
            forbid(command, raw.samples.is_some(), "samples")?;
            forbid(command, raw.csv.is_some(), "csv")?;
            let value = params
                .iter()
                .find(|(_, v, s)| *s == scheme && v.is_some())
                .and_then(|(_, v, _)| *v)
                .ok_or(ConfigError::Missing(scheme.parameter_name()))?;
            Job::Simulate {
                mac: scheme.with_parameter(value)?,
                instance: raw.instance.clone(),
            }
        }
        Command::Sweep => {
            let scheme = scheme.ok_or(ConfigError::Missing("scheme"))?;
            check_params(scheme, &params)?;
            if let Some((name, _, _)) = params.iter().find(|(_, v, _)| v.is_some()) {
                return Err(ConfigError::NotForCommand(name, command));
            }
            forbid(command, per_scheme_grid, "grid-<scheme>")?;
            sweep_only(command, &raw)?;
            let grid = build_grid(scheme, &raw, radius, channel.alpha())?;
            Job::Sweep {
                scheme,
                grid,
                samples,
            }
        }
        Command::Compare => {
            forbid(command, scheme.is_some(), "scheme")?;
            if let Some((name, _, _)) = params.iter().find(|(_, v, _)| v.is_some()) {
                return Err(ConfigError::NotForCommand(name, command));
            }
            forbid(command, single_grid, "grid")?;
            sweep_only(command, &raw)?;
            let pick = |g: &Option<Vec<f64>>, s: Scheme| {
                g.clone().unwrap_or_else(|| {
                    default_grid(s, radius, channel.alpha(), DEFAULT_GRID_POINTS)
                })
            };
            Job::Compare {
                grids: [
                    pick(&raw.grid_aloha, Scheme::Aloha),
                    pick(&raw.grid_coloring, Scheme::Coloring),
                    pick(&raw.grid_csma, Scheme::Csma),
                ],
                samples,
            }
        }
    };

    let config = RunConfig {
        command,
        job,
        n_nodes,
        radius,
        channel,
        t_slots,
        master_seed: raw.seed.unwrap_or(DEFAULT_SEED),
        outputs: Outputs {
            json: raw.out,
            csv: raw.csv,
            save_instance: raw.save_instance,
            save_stats: raw.save_stats,
            dump_sets: raw.dump_sets,
            dump_matrices: raw.dump_matrices,
        },
        threads: raw.threads,
        verbosity: raw.verbose,
    };
    match &config.job {
        Job::Sweep {
            scheme,
            grid,
            samples,
        } => config.sweep_plan(*scheme, grid, *samples).validate()?,
        Job::Compare { grids, samples } => {
            for (scheme, grid) in Scheme::ALL.iter().zip(grids) {
                config.sweep_plan(*scheme, grid, *samples).validate()?;
            }
        }
        Job::Simulate { .. } => {}
    }
    Ok(config)
}

fn check_params(
    scheme: Scheme,
    params: &[(&'static str, Option<f64>, Scheme)],
) -> Result<(), ConfigError> {
    for (name, value, owner) in params {
        if value.is_some() && *owner != scheme {
            return Err(ConfigError::SchemeMismatch {
                param: name,
                scheme,
                expected: scheme.parameter_name(),
            });
        }
    }
    Ok(())
}

fn sweep_only(command: Command, raw: &RawArgs) -> Result<(), ConfigError> {
    forbid(command, raw.instance.is_some(), "instance")?;
    forbid(command, raw.save_instance.is_some(), "save-instance")?;
    forbid(command, raw.save_stats.is_some(), "save-stats")?;
    forbid(command, raw.dump_sets.is_some(), "dump-sets")?;
    forbid(command, raw.dump_matrices, "dump-matrices")
}

fn build_grid(
    scheme: Scheme,
    raw: &RawArgs,
    radius: f64,
    alpha: f64,
) -> Result<Vec<f64>, ConfigError> {
    if let Some(grid) = &raw.grid {
        if raw.grid_min.is_some() || raw.grid_max.is_some() || raw.grid_points.is_some() {
            return Err(ConfigError::Usage(
                "--grid cannot be combined with --grid-min/--grid-max/--grid-points".into(),
            ));
        }
        return Ok(grid.clone());
    }
    let points = raw.grid_points.unwrap_or(DEFAULT_GRID_POINTS);
    let default = default_grid(scheme, radius, alpha, points);
    let lo = raw.grid_min.unwrap_or(default[0]);
    let hi = raw.grid_max.unwrap_or(*default.last().unwrap_or(&lo));
    Ok(match scheme {
        Scheme::Csma => crate::sweep::log_grid(lo, hi, points),
        _ => crate::sweep::linear_grid(lo, hi, points),
    })
}

fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn envelope(config: &RunConfig, body: Value) -> Value {
    let mut m = Map::new();
    m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    m.insert("generated_at".into(), json!(timestamp()));
    m.insert("config".into(), config.resolved());
    if let Value::Object(b) = body {
        m.extend(b);
    }
    Value::Object(m)
}

/// Writes `path` via a sibling temp file and a rename.
fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> crate::Result<()>,
) -> crate::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    fill(&mut w)?;
    w.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &Value) -> crate::Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w).map_err(|e| Error::io(path, e))
    })
}

/// Runs a resolved config, writing its outputs. Returns the one-line summary.
pub fn execute(config: &RunConfig) -> crate::Result<String> {
    match &config.job {
        Job::Simulate { mac, instance } => simulate(config, mac, instance.as_deref()),
        Job::Sweep {
            scheme,
            grid,
            samples,
        } => {
            let result = run_sweep(&config.sweep_plan(*scheme, grid, *samples))?;
            if let Some(path) = &config.outputs.csv {
                write_atomic(path, |w| write_csv(&[&result], w))?;
            }
            if let Some(path) = &config.outputs.json {
                write_json(path, &envelope(config, sweep_body(&result)))?;
            }
            Ok(format!(
                "{scheme} N={}: best {} = {} zeta = {:.6}",
                config.n_nodes,
                scheme.parameter_name(),
                result.best_parameter,
                result.best_zeta
            ))
        }
        Job::Compare { grids, samples } => {
            let results = Scheme::ALL
                .iter()
                .zip(grids)
                .map(|(s, g)| run_sweep(&config.sweep_plan(*s, g, *samples)))
                .collect::<crate::Result<Vec<SweepResult>>>()?;
            let comparison = compare_results(&results)?;
            if let Some(path) = &config.outputs.csv {
                let refs: Vec<&SweepResult> = results.iter().collect();
                write_atomic(path, |w| write_csv(&refs, w))?;
            }
            if let Some(path) = &config.outputs.json {
                let sweeps: Vec<Value> = results.iter().map(sweep_body).collect();
                let body = json!({ "comparison": comparison, "sweeps": sweeps });
                write_json(path, &envelope(config, body))?;
            }
            let line = comparison
                .optima
                .iter()
                .map(|o| {
                    format!(
                        "{} {}={} zeta={:.6}",
                        o.scheme,
                        o.scheme.parameter_name(),
                        o.parameter,
                        o.zeta
                    )
                })
                .collect::<Vec<_>>()
                .join("; ");
            Ok(format!(
                "N={}: {line}; aloha/coloring={:.4} csma/coloring={:.4}",
                config.n_nodes, comparison.aloha_over_coloring, comparison.csma_over_coloring
            ))
        }
    }
}

fn sweep_body(result: &SweepResult) -> Value {
    json!({
        "scheme": result.plan.scheme,
        "parameter_name": result.plan.scheme.parameter_name(),
        "points": result.points,
        "best_parameter": result.best_parameter,
        "best_zeta": result.best_zeta,
    })
}

fn simulate(config: &RunConfig, mac: &MacSpec, instance: Option<&Path>) -> crate::Result<String> {
    let topo = match instance {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let net: NetworkInstance = serde_json::from_str(&text)?;
            if net.len() != config.n_nodes {
                return Err(Error::invalid(format!(
                    "instance {} has {} nodes but --n is {}",
                    path.display(),
                    net.len(),
                    config.n_nodes
                )));
            }
            Topology::new(net, config.channel.alpha())?
        }
        None => sample_topology(
            config.n_nodes,
            config.radius,
            config.channel.alpha(),
            config.master_seed,
            0,
        )?,
    };

    let run = |observer: &mut dyn FnMut(&crate::TransmitterSet)| {
        run_cell(
            &topo,
            &config.channel,
            mac,
            config.t_slots,
            config.master_seed,
            0,
            0,
            observer,
        )
    };
    let (stats, report) = match &config.outputs.dump_sets {
        Some(path) => {
            let mut result = None;
            write_atomic(path, |w| {
                let mut failure = None;
                let r = run(&mut |set| {
                    if failure.is_none() {
                        if let Err(e) = serde_json::to_writer(&mut *w, set)
                            .map_err(Error::from)
                            .and_then(|_| writeln!(w).map_err(|e| Error::io(path, e)))
                        {
                            failure = Some(e);
                        }
                    }
                })?;
                if let Some(e) = failure {
                    return Err(e);
                }
                result = Some(r);
                Ok(())
            })?;
            result.expect("run completed")
        }
        None => run(&mut |_| {})?,
    };

    if let Some(path) = &config.outputs.save_instance {
        write_json(path, &serde_json::to_value(topo.network())?)?;
    }
    if let Some(path) = &config.outputs.save_stats {
        write_json(path, &serde_json::to_value(&stats)?)?;
    }
    if let Some(path) = &config.outputs.json {
        let summary = report.summary();
        let mut body = json!({
            "instance_seed": topo.network().seed(),
            "report": summary,
        });
        if config.outputs.dump_matrices {
            body["matrices"] = serde_json::to_value(&report)?;
        }
        write_json(path, &envelope(config, body))?;
    }
    Ok(format!(
        "{} {}={} N={}: zeta = {:.6} (connected: {})",
        mac.scheme(),
        mac.scheme().parameter_name(),
        mac.parameter(),
        config.n_nodes,
        report.zeta,
        report.connected
    ))
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn init_threads(requested: Option<usize>) {
    let threads = requested.or_else(|| std::env::var(THREADS_ENV).ok()?.parse().ok());
    if let Some(t) = threads.filter(|&t| t > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            log::warn!("could not size the worker pool: {e}");
        }
    }
}

/// Entry point used by the binary; returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match parse_config(argv) {
        Ok(c) => c,
        Err(ConfigError::Cli(e))
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            let _ = e.print();
            return EXIT_OK;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    init_logging(config.verbosity);
    init_threads(config.threads);
    match execute(&config) {
        Ok(line) => {
            println!("{line}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
