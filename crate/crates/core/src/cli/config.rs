//! Flag parsing, the JSON config file and resolution into a [`RunConfig`].

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::{Noise, DEFAULT_N_BOUNDS};

/// Grid of deviation parameters used when none is given.
pub const DEFAULT_W_GRID: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
/// Monte-Carlo replicates per grid value for `simulate`.
pub const DEFAULT_MC_REPS: usize = 200;
/// Scenarios averaged per grid value for `power`.
pub const DEFAULT_POWER_REPS: usize = 20;
/// Random splits for `kron`.
pub const DEFAULT_SPLITS: usize = 1000;
/// Ranks compared by `kron`.
pub const DEFAULT_RANKS: [usize; 2] = [1, 3];

/// The five subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Test,
    Seq,
    Simulate,
    Power,
    Kron,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Test => "test",
            Command::Seq => "seq",
            Command::Simulate => "simulate",
            Command::Power => "power",
            Command::Kron => "kron",
        }
    }
}

/// Built-in data-generating scenarios for `simulate` and `power`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioChoice {
    /// Random-rotation scenario, true dimension 2.
    A,
    /// Banded scenario, true dimension 3.
    #[default]
    B,
}

impl ScenarioChoice {
    /// Dimension of the majority span.
    pub fn d0_true(self) -> usize {
        match self {
            ScenarioChoice::A => 2,
            ScenarioChoice::B => 3,
        }
    }
}

/// A fully resolved run. Serialized into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub data_path: Option<PathBuf>,
    pub d0: Option<usize>,
    pub d_max: Option<usize>,
    pub alpha: f64,
    pub seed: u64,
    pub p: Option<usize>,
    pub q: Option<usize>,
    pub reps: usize,
    pub w_grid: Vec<f64>,
    pub noise: Noise,
    pub n_bounds: (usize, usize),
    pub ranks: Vec<usize>,
    pub splits: usize,
    pub center: bool,
    pub scenario: ScenarioChoice,
    pub out_path: String,
}

/// Config-file keys. All optional; the subcommand supplies `command`.
const CONFIG_KEYS: [&str; 17] = [
    "command", "data_path", "d0", "d_max", "alpha", "seed", "p", "q", "reps", "w_grid", "noise",
    "n_bounds", "ranks", "splits", "center", "scenario", "out_path",
];

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    command: Option<Command>,
    data_path: Option<PathBuf>,
    d0: Option<usize>,
    d_max: Option<usize>,
    alpha: Option<f64>,
    seed: Option<u64>,
    p: Option<usize>,
    q: Option<usize>,
    reps: Option<usize>,
    w_grid: Option<Vec<f64>>,
    noise: Option<Noise>,
    n_bounds: Option<(usize, usize)>,
    ranks: Option<Vec<usize>>,
    splits: Option<usize>,
    center: Option<bool>,
    scenario: Option<ScenarioChoice>,
    out_path: Option<String>,
}

#[derive(Debug, Parser)]
#[command(name = "covdim", version, about = "Tests for the dimension of the span of covariance matrices")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Test dim = d0 on grouped data
    Test(Flags),
    /// Sequential dimension estimate on grouped data
    Seq(Flags),
    /// Monte-Carlo size and power over a w grid
    Simulate(Flags),
    /// Asymptotic power curve over a w grid
    Power(Flags),
    /// Kronecker-sum rank comparison on matrix observations
    Kron(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// JSON file with RunConfig fields; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of group_<id>.csv files, or the long-format observations file
    #[arg(long = "data")]
    data_path: Option<PathBuf>,
    /// Null dimension
    #[arg(long)]
    d0: Option<usize>,
    /// Largest dimension tried by `seq` (default q - 2)
    #[arg(long = "d-max")]
    d_max: Option<usize>,
    /// Significance level
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dimension of each observation
    #[arg(long)]
    p: Option<usize>,
    /// Number of groups
    #[arg(long)]
    q: Option<usize>,
    /// Replicates per grid value
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated deviation parameters in [0, 1]
    #[arg(long = "w-grid", value_delimiter = ',')]
    w_grid: Option<Vec<f64>>,
    /// normal | centered_gamma
    #[arg(long)]
    noise: Option<Noise>,
    /// Sample-size range as LO,HI
    #[arg(long = "n-bounds", value_parser = parse_pair)]
    n_bounds: Option<(usize, usize)>,
    /// Comma-separated ranks for `kron`
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    /// Random half/half splits for `kron`
    #[arg(long)]
    splits: Option<usize>,
    /// Subtract per-variable means
    #[arg(long, conflicts_with = "no_center")]
    center: bool,
    /// Keep the raw data (zero-mean model)
    #[arg(long = "no-center")]
    no_center: bool,
    #[arg(long, value_enum)]
    scenario: Option<ScenarioChoice>,
    /// Output stem; writes STEM.json and STEM.csv
    #[arg(long = "out")]
    out_path: Option<String>,
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI, got `{s}`"))?;
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

/// Outcome of parsing: either a run or text for `--help` / `--version`.
#[derive(Debug)]
pub(crate) enum Parsed {
    Help(String),
    Run(RunConfig),
}

/// Parses `argv` (program name first) into a resolved configuration.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    match parse_or_help(&argv)? {
        Parsed::Run(cfg) => Ok(cfg),
        Parsed::Help(_) => Err(Error::config("command", "help requested")),
    }
}

pub(crate) fn parse_or_help(argv: &[OsString]) -> Result<Parsed> {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Ok(Parsed::Help(e.to_string())),
                _ => Err(clap_to_config(&e)),
            }
        }
    };
    let (command, flags) = match cli.command {
        Sub::Test(f) => (Command::Test, f),
        Sub::Seq(f) => (Command::Seq, f),
        Sub::Simulate(f) => (Command::Simulate, f),
        Sub::Power(f) => (Command::Power, f),
        Sub::Kron(f) => (Command::Kron, f),
    };
    let file = match &flags.config {
        Some(path) => read_config_file(path)?,
        None => ConfigFile::default(),
    };
    resolve(command, flags, file).map(Parsed::Run)
}

fn clap_to_config(e: &clap::Error) -> Error {
    let key = match e.get(ContextKind::InvalidArg) {
        Some(ContextValue::String(arg)) => flag_to_key(arg),
        _ if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            || e.kind() == ErrorKind::MissingSubcommand =>
        {
            return Error::config("command", "no command given (test | seq | simulate | power | kron)");
        }
        _ if e.kind() == ErrorKind::InvalidSubcommand => "command".to_string(),
        _ => "argv".to_string(),
    };
    let message = e
        .to_string()
        .lines()
        .next()
        .unwrap_or_default()
        .trim_start_matches("error: ")
        .to_string();
    Error::config(key, message)
}

/// `--d-max <D_MAX>` becomes `d_max`; `--data` and `--out` map to their
/// path fields.
fn flag_to_key(arg: &str) -> String {
    let flag = arg.split_whitespace().next().unwrap_or(arg).trim_start_matches('-');
    match flag {
        "data" => "data_path".into(),
        "out" => "out_path".into(),
        "no-center" => "center".into(),
        other => other.replace('-', "_"),
    }
}

fn read_config_file(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::config("config", format!("{}: expected a JSON object", path.display())))?;
    if let Some(key) = obj.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
        return Err(Error::config(key.as_str(), "unknown config key"));
    }
    // Deserialize field by field so a type error names its key.
    for (key, v) in obj {
        let mut single = serde_json::Map::new();
        single.insert(key.clone(), v.clone());
        serde_json::from_value::<ConfigFile>(serde_json::Value::Object(single))
            .map_err(|e| Error::config(key.as_str(), e.to_string()))?;
    }
    serde_json::from_value(value).map_err(|e| Error::config("config", e.to_string()))
}

fn resolve(command: Command, flags: Flags, file: ConfigFile) -> Result<RunConfig> {
    if let Some(c) = file.command {
        if c != command {
            return Err(Error::config(
                "command",
                format!("config file is for `{}`, but `{}` was invoked", c.name(), command.name()),
            ));
        }
    }
    let center_flag = if flags.center {
        Some(true)
    } else if flags.no_center {
        Some(false)
    } else {
        None
    };
    let reps_default = match command {
        Command::Power => DEFAULT_POWER_REPS,
        _ => DEFAULT_MC_REPS,
    };
    let cfg = RunConfig {
        command,
        data_path: flags.data_path.or(file.data_path),
        d0: flags.d0.or(file.d0),
        d_max: flags.d_max.or(file.d_max),
        alpha: flags.alpha.or(file.alpha).unwrap_or(0.05),
        seed: flags.seed.or(file.seed).unwrap_or(0),
        p: flags.p.or(file.p),
        q: flags.q.or(file.q),
        reps: flags.reps.or(file.reps).unwrap_or(reps_default),
        w_grid: flags.w_grid.or(file.w_grid).unwrap_or_else(|| DEFAULT_W_GRID.to_vec()),
        noise: flags.noise.or(file.noise).unwrap_or_default(),
        n_bounds: flags.n_bounds.or(file.n_bounds).unwrap_or(DEFAULT_N_BOUNDS),
        ranks: flags.ranks.or(file.ranks).unwrap_or_else(|| DEFAULT_RANKS.to_vec()),
        splits: flags.splits.or(file.splits).unwrap_or(DEFAULT_SPLITS),
        center: center_flag.or(file.center).unwrap_or(command == Command::Kron),
        scenario: flags.scenario.or(file.scenario).unwrap_or_default(),
        out_path: flags
            .out_path
            .or(file.out_path)
            .unwrap_or_else(|| format!("covdim_{}", command.name())),
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<()> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::config("alpha", format!("{} is outside (0, 1)", cfg.alpha)));
    }
    if cfg.out_path.is_empty() {
        return Err(Error::config("out_path", "must not be empty"));
    }
    match cfg.command {
        Command::Test | Command::Seq | Command::Kron if cfg.data_path.is_none() => {
            return Err(Error::config("data_path", format!("required for `{}`", cfg.command.name())));
        }
        Command::Test => match cfg.d0 {
            None => return Err(Error::config("d0", "required for `test`")),
            Some(0) => return Err(Error::config("d0", "must be at least 1")),
            Some(_) => {}
        },
        Command::Kron => {}
        Command::Seq => {
            if cfg.d_max == Some(0) {
                return Err(Error::config("d_max", "must be at least 1"));
            }
        }
        Command::Simulate | Command::Power => {
            let p = cfg.p.ok_or_else(|| Error::config("p", "required for this command"))?;
            let q = cfg.q.ok_or_else(|| Error::config("q", "required for this command"))?;
            if p < 4 {
                return Err(Error::config("p", format!("{p} is below the minimum of 4")));
            }
            let d_true = cfg.scenario.d0_true();
            if q < d_true + 2 {
                return Err(Error::config(
                    "q",
                    format!("{q} groups are too few for a scenario of dimension {d_true}"),
                ));
            }
            if cfg.d0 == Some(0) {
                return Err(Error::config("d0", "must be at least 1"));
            }
            if cfg.reps == 0 {
                return Err(Error::config("reps", "must be at least 1"));
            }
            if cfg.w_grid.is_empty() {
                return Err(Error::config("w_grid", "must not be empty"));
            }
            if let Some(w) = cfg.w_grid.iter().find(|w| !(0.0..=1.0).contains(*w)) {
                return Err(Error::config("w_grid", format!("{w} is outside [0, 1]")));
            }
            let (lo, hi) = cfg.n_bounds;
            if lo < crate::estimators::GroupSample::MIN_OBSERVATIONS || lo > hi {
                return Err(Error::config(
                    "n_bounds",
                    format!(
                        "({lo}, {hi}) must satisfy {} <= lo <= hi",
                        crate::estimators::GroupSample::MIN_OBSERVATIONS
                    ),
                ));
            }
        }
    }
    if cfg.command == Command::Kron {
        if cfg.ranks.is_empty() || cfg.ranks.contains(&0) {
            return Err(Error::config("ranks", "need at least one rank, each at least 1"));
        }
        if cfg.splits == 0 {
            return Err(Error::config("splits", "must be at least 1"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig> {
        parse_config(std::iter::once("covdim").chain(args.iter().copied()))
    }

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn test_command_with_flags() {
        let cfg = parse(&["test", "--data", "./groups", "--d0", "2", "--alpha", "0.05"]).unwrap();
        assert_eq!(cfg.command, Command::Test);
        assert_eq!(cfg.d0, Some(2));
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.data_path.as_deref(), Some(Path::new("./groups")));
        assert!(!cfg.center);
        assert_eq!(cfg.out_path, "covdim_test");
    }

    #[test]
    fn alpha_out_of_range_names_alpha() {
        let e = parse(&["test", "--data", "g", "--d0", "1", "--alpha", "1.5"]).unwrap_err();
        assert_eq!(key_of(e), "alpha");
    }

    #[test]
    fn unknown_flag_is_named() {
        let e = parse(&["seq", "--data", "g", "--bogus", "1"]).unwrap_err();
        assert_eq!(key_of(e), "bogus");
    }

    #[test]
    fn malformed_value_names_its_key() {
        let e = parse(&["seq", "--data", "g", "--d-max", "x"]).unwrap_err();
        assert_eq!(key_of(e), "d_max");
        let e = parse(&["simulate", "--p", "20", "--q", "8", "--n-bounds", "7"]).unwrap_err();
        assert_eq!(key_of(e), "n_bounds");
    }

    #[test]
    fn missing_required_fields() {
        assert_eq!(key_of(parse(&["test", "--data", "g"]).unwrap_err()), "d0");
        assert_eq!(key_of(parse(&["seq"]).unwrap_err()), "data_path");
        assert_eq!(key_of(parse(&["power", "--q", "8"]).unwrap_err()), "p");
        assert_eq!(key_of(parse(&[]).unwrap_err()), "command");
    }

    #[test]
    fn center_default_depends_on_command() {
        assert!(parse(&["kron", "--data", "x.csv"]).unwrap().center);
        assert!(!parse(&["kron", "--data", "x.csv", "--no-center"]).unwrap().center);
        assert!(parse(&["seq", "--data", "g", "--center"]).unwrap().center);
    }

    #[test]
    fn lists_and_pairs() {
        let cfg = parse(&[
            "simulate", "--p", "20", "--q", "8", "--w-grid", "0,0.5,1", "--n-bounds", "40,60", "--noise",
            "centered_gamma",
        ])
        .unwrap();
        assert_eq!(cfg.w_grid, vec![0.0, 0.5, 1.0]);
        assert_eq!(cfg.n_bounds, (40, 60));
        assert_eq!(cfg.noise, Noise::CenteredGamma);
        assert_eq!(cfg.scenario, ScenarioChoice::B);
        let e = parse(&["simulate", "--p", "20", "--q", "8", "--w-grid", "0,1.2"]).unwrap_err();
        assert_eq!(key_of(e), "w_grid");
    }

    #[test]
    fn config_file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"alpha": 0.01, "d0": 2, "data_path": "g", "seed": 9}"#).unwrap();
        let p = path.to_str().unwrap();
        let cfg = parse(&["test", "--config", p]).unwrap();
        assert_eq!((cfg.alpha, cfg.d0, cfg.seed), (0.01, Some(2), 9));
        let cfg = parse(&["test", "--config", p, "--alpha", "0.1"]).unwrap();
        assert_eq!((cfg.alpha, cfg.d0), (0.1, Some(2)));
    }

    #[test]
    fn config_file_unknown_or_mistyped_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"alpha": 0.01, "dzero": 2}"#).unwrap();
        let e = parse(&["test", "--config", path.to_str().unwrap()]).unwrap_err();
        assert_eq!(key_of(e), "dzero");
        std::fs::write(&path, r#"{"reps": "many"}"#).unwrap();
        let e = parse(&["simulate", "--config", path.to_str().unwrap()]).unwrap_err();
        assert_eq!(key_of(e), "reps");
    }

    #[test]
    fn config_file_command_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"command": "kron", "data_path": "x.csv"}"#).unwrap();
        let e = parse(&["seq", "--config", path.to_str().unwrap()]).unwrap_err();
        assert_eq!(key_of(e), "command");
        assert!(parse(&["kron", "--config", path.to_str().unwrap()]).is_ok());
    }
}
