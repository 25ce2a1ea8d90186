use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use foliamod::gallery;
use foliamod::optimizer::SolverConfig;
use foliamod::quadrature::default_counts;
use foliamod::verify::Suite;
use foliamod::FoliatedChart;
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_EXAMPLE: &str = "torus";
pub const DEFAULT_P: f64 = 2.0;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Csv,
    Json,
}

/// Flags shared by every command that builds a chart.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Gallery example name (see `list`).
    #[arg(long)]
    pub example: Option<String>,
    /// Example parameter override, `name=value`; repeatable.
    #[arg(long = "param", value_name = "K=V")]
    pub params: Vec<String>,
    /// Exponent p > 1.
    #[arg(long)]
    pub p: Option<f64>,
    /// Nodes per axis, e.g. `64x64`, `32,32,16` or `64` for every axis.
    #[arg(long)]
    pub grid: Option<String>,
    /// Seed of the random test functions.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub example: Option<String>,
    #[serde(default)]
    pub param: BTreeMap<String, f64>,
    pub p: Option<f64>,
    pub grid: Option<Vec<usize>>,
    pub suite: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub field: Option<String>,
    pub p_list: Option<Vec<f64>>,
    pub solver: Option<SolverConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub chart: FoliatedChart,
    pub p: f64,
    pub grid: Vec<usize>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub solver: SolverConfig,
    pub file: FileConfig,
}

pub fn parse_param(s: &str) -> Result<(String, f64), CliError> {
    let (k, v) = s.split_once('=').ok_or_else(|| {
        CliError::Config(format!("parameter {s:?} is not of the form name=value"))
    })?;
    let v = f64::from_str(v.trim())
        .map_err(|_| CliError::Config(format!("parameter {k:?}: {v:?} is not a number")))?;
    Ok((k.trim().to_string(), v))
}

pub fn parse_grid(s: &str, dim: usize) -> Result<Vec<usize>, CliError> {
    let counts = s
        .split(['x', ','])
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("grid {s:?}: {t:?} is not a node count")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    match counts.as_slice() {
        [m] => Ok(vec![*m; dim]),
        _ => Ok(counts),
    }
}

pub fn parse_p_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CliError::Config(format!("p list: {t:?} is not a number")))
        })
        .collect()
}

impl RunConfig {
    pub fn resolve(args: &RunArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let example = args
            .example
            .clone()
            .or_else(|| file.example.clone())
            .unwrap_or_else(|| DEFAULT_EXAMPLE.to_string());
        let mut params = file.param.clone();
        for raw in &args.params {
            let (k, v) = parse_param(raw)?;
            params.insert(k, v);
        }
        let chart = gallery::build_example(&example, &params)?;
        let grid = match (&args.grid, &file.grid) {
            (Some(s), _) => parse_grid(s, chart.dim_total())?,
            (None, Some(g)) => g.clone(),
            (None, None) => default_counts(&chart),
        };
        let solver = file.solver.unwrap_or_default();
        Ok(Self {
            chart,
            p: args.p.or(file.p).unwrap_or(DEFAULT_P),
            grid,
            seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            out: args.out.clone().or_else(|| file.out.clone()),
            format: args.format.or(file.format),
            solver,
            file,
        })
    }

    pub fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    pub fn suite(&self, flag: Option<&str>) -> Result<Suite, CliError> {
        let name = flag.or(self.file.suite.as_deref()).unwrap_or("all");
        Ok(name.parse::<Suite>()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("64x32", 2).unwrap(), vec![64, 32]);
        assert_eq!(parse_grid("8,8,4", 3).unwrap(), vec![8, 8, 4]);
        assert_eq!(parse_grid("16", 3).unwrap(), vec![16, 16, 16]);
        assert!(parse_grid("8xq", 2).is_err());
    }

    #[test]
    fn params_and_p_lists() {
        assert_eq!(parse_param("R=2.5").unwrap(), ("R".to_string(), 2.5));
        assert!(parse_param("R").is_err());
        assert!(parse_param("R=x").is_err());
        assert_eq!(parse_p_list("1.5, 2,3").unwrap(), vec![1.5, 2.0, 3.0]);
        assert!(parse_p_list("").unwrap().is_empty());
    }

    #[test]
    fn file_keys_match_flags() {
        let cfg: FileConfig = toml::from_str(
            "example = \"ring\"\np = 3.0\ngrid = [16, 16]\nseed = 4\nformat = \"csv\"\n[param]\nr2 = 3.0\n[solver]\nmax_iters = 50\n",
        )
        .unwrap();
        assert_eq!(cfg.param["r2"], 3.0);
        assert_eq!(cfg.solver.unwrap().max_iters, 50);
        assert!(toml::from_str::<FileConfig>("unknown = 1").is_err());
    }
}
