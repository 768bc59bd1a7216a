use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use lowrank_core::data::{RatingsFormat, RatingsScale};
use lowrank_core::harness::{ExperimentConfig, RatingsTask, Sweep, SyntheticTask, Task, RANK_THRESHOLD};
use lowrank_core::solver::{GammaInit, Method, SolverConfig};
use lowrank_core::{Error, RegularizerKind, RegularizerSpec, Result};
use serde::Deserialize;

/// Default output directory when neither a flag nor the config file sets one.
pub const OUTPUT_DIR_VAR: &str = "LOWRANK_OUTPUT_DIR";

const DEFAULT_RANK: usize = 10;
const DEFAULT_BETA_MAX: f64 = 0.03;

/// Every setting of an experiment. All fields are optional so that a config
/// file and the command line can be layered; the file uses the field names
/// as keys.
#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Rows of the synthetic matrix.
    #[arg(long)]
    pub m: Option<usize>,
    /// Columns of the synthetic matrix.
    #[arg(long)]
    pub n: Option<usize>,
    /// Rank of the synthetic ground truth.
    #[arg(long)]
    pub r_true: Option<usize>,
    /// Noise level d of the synthetic instance.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Sampling rates, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub p: Vec<f64>,

    /// Ratings file, or a dense matrix file for `complete`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// tsv, csv or matrix (`complete` only; NaN marks a missing entry).
    #[arg(long)]
    pub format: Option<String>,
    /// movielens, jester or min,max.
    #[arg(long)]
    pub scale: Option<String>,
    /// Number of cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,

    /// nuclear, trace_inverse, capped_l1, log_det, schatten_p, scad or laplace.
    #[arg(long)]
    pub regularizer: Option<String>,
    /// SCAD shape parameter.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Schatten-p exponent.
    #[arg(long)]
    pub schatten_p: Option<f64>,
    /// gen_asd or gen_altmin.
    #[arg(long)]
    pub method: Option<String>,

    /// Upper bound on the rank of the factors.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Final data weights, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub beta_max: Vec<f64>,
    #[arg(long)]
    pub beta0: Option<f64>,
    #[arg(long)]
    pub beta_growth: Option<f64>,
    /// Starting gammas, `auto` or numbers, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub gamma0: Vec<GammaValue>,
    #[arg(long)]
    pub gamma_min: Option<f64>,
    #[arg(long)]
    pub gamma_decay: Option<f64>,
    /// Rank estimate for the automatic gamma.
    #[arg(long)]
    pub rank_guess: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// gaussian or uniform.
    #[arg(long)]
    pub init: Option<String>,
    /// exact or prox_linear.
    #[arg(long)]
    pub w_update: Option<String>,
    #[arg(long)]
    pub prox_extrapolation: Option<f64>,

    /// Seeds, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Singular values above this count towards the reported rank.
    #[arg(long)]
    pub rank_threshold: Option<f64>,
    /// Scale the rank threshold by the largest singular value.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub relative_rank: Option<bool>,
    /// Where summary.csv and traces/ go [env: LOWRANK_OUTPUT_DIR].
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Concurrent jobs; defaults to the number of cores.
    #[arg(long)]
    pub workers: Option<usize>,
}

/// `auto` or a fixed number, from either a flag or a TOML string/number.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(try_from = "GammaToml")]
pub struct GammaValue(pub GammaInit);

impl FromStr for GammaValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse().map(GammaValue)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GammaToml {
    Number(f64),
    Text(String),
}

impl TryFrom<GammaToml> for GammaValue {
    type Error = Error;

    fn try_from(v: GammaToml) -> Result<Self> {
        match v {
            GammaToml::Number(g) => g.to_string().parse(),
            GammaToml::Text(s) => s.parse(),
        }
    }
}

macro_rules! layer {
    ($top:ident, $base:ident; options: $($o:ident),*; lists: $($l:ident),*) => {
        Options {
            $($o: $top.$o.or($base.$o),)*
            $($l: if $top.$l.is_empty() { $base.$l } else { $top.$l },)*
        }
    };
}

impl Options {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// `self` wins wherever it has a value.
    pub fn over(self, base: Options) -> Options {
        let top = self;
        layer!(top, base;
            options: m, n, r_true, noise, input, format, scale, folds, regularizer, alpha,
                schatten_p, method, rank, beta0, beta_growth, gamma_min, gamma_decay, rank_guess,
                tol, max_iter, init, w_update, prox_extrapolation, rank_threshold, relative_rank,
                output_dir, workers;
            lists: p, beta_max, gamma0, seeds)
    }

    pub fn with_env_output_dir(mut self) -> Self {
        if self.output_dir.is_none() {
            self.output_dir = std::env::var_os(OUTPUT_DIR_VAR).map(PathBuf::from);
        }
        self
    }

    pub fn regularizer(&self) -> Result<RegularizerSpec> {
        let kind: RegularizerKind = parse_or(&self.regularizer, RegularizerKind::TraceInverse)?;
        RegularizerSpec::new(
            kind,
            1.0,
            self.alpha.unwrap_or(RegularizerSpec::DEFAULT_SCAD_ALPHA),
            self.schatten_p.unwrap_or(RegularizerSpec::DEFAULT_SCHATTEN_P),
        )
    }

    pub fn method(&self) -> Result<Method> {
        parse_or(&self.method, Method::Asd)
    }

    /// Solver settings for the first sweep value of each axis.
    pub fn solver(&self) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::new(
            self.rank.unwrap_or(DEFAULT_RANK),
            self.beta_max.first().copied().unwrap_or(DEFAULT_BETA_MAX),
        );
        cfg.beta0 = self.beta0;
        cfg.beta_growth = self.beta_growth.unwrap_or(cfg.beta_growth);
        cfg.gamma0 = self.gamma0.first().map_or(cfg.gamma0, |g| g.0);
        cfg.gamma_min = self.gamma_min;
        cfg.gamma_decay = self.gamma_decay.unwrap_or(cfg.gamma_decay);
        cfg.rank_guess = self.rank_guess;
        cfg.tol = self.tol.unwrap_or(cfg.tol);
        cfg.max_iter = self.max_iter.unwrap_or(cfg.max_iter);
        cfg.seed = self.seeds.first().copied().unwrap_or(0);
        cfg.init = parse_or(&self.init, cfg.init)?;
        cfg.w_update = parse_or(&self.w_update, cfg.w_update)?;
        cfg.prox_extrapolation = self.prox_extrapolation.unwrap_or(cfg.prox_extrapolation);
        cfg.validate()?;
        Ok(cfg)
    }

    fn sweep(&self, solver: &SolverConfig, p: Vec<f64>) -> Sweep {
        Sweep {
            beta_max: if self.beta_max.is_empty() {
                vec![solver.beta_max]
            } else {
                self.beta_max.clone()
            },
            gamma0: if self.gamma0.is_empty() {
                vec![solver.gamma0]
            } else {
                self.gamma0.iter().map(|g| g.0).collect()
            },
            p,
        }
    }

    fn finish(&self, task: Task, sweep: Sweep) -> Result<ExperimentConfig> {
        let solver = self.solver()?;
        let cfg = ExperimentConfig {
            task,
            regularizer: self.regularizer()?,
            method: self.method()?,
            solver,
            sweep,
            seeds: if self.seeds.is_empty() { vec![0] } else { self.seeds.clone() },
            rank_threshold: self.rank_threshold.unwrap_or(RANK_THRESHOLD),
            relative_rank: self.relative_rank.unwrap_or(false),
            output_dir: self.output_dir.clone(),
            workers: self.workers,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn synthetic(&self) -> Result<ExperimentConfig> {
        let task = SyntheticTask {
            m: required(self.m, "m")?,
            n: required(self.n, "n")?,
            rank: required(self.r_true, "r_true")?,
            noise: self.noise.unwrap_or(0.0),
        };
        if self.p.is_empty() {
            return Err(Error::Config("p is required".into()));
        }
        let sweep = self.sweep(&self.solver()?, self.p.clone());
        self.finish(Task::Synthetic(task), sweep)
    }

    pub fn ratings(&self) -> Result<ExperimentConfig> {
        let sweep = self.sweep(&self.solver()?, Vec::new());
        self.finish(Task::Ratings(self.ratings_task()?), sweep)
    }

    pub fn ratings_task(&self) -> Result<RatingsTask> {
        Ok(RatingsTask {
            path: required(self.input.clone(), "input")?,
            format: parse_or(&self.format, RatingsFormat::TabSeparated)?,
            scale: parse_or(&self.scale, RatingsScale::MOVIELENS)?,
            folds: self.folds.unwrap_or(5),
        })
    }

    /// Rejects sweep lists longer than one, naming the field.
    pub fn single_cell(&self) -> Result<()> {
        for (name, len) in [
            ("beta_max", self.beta_max.len()),
            ("gamma0", self.gamma0.len()),
            ("p", self.p.len()),
        ] {
            if len > 1 {
                return Err(Error::Config(format!(
                    "{name} takes a single value here; use `sweep` for grids"
                )));
            }
        }
        Ok(())
    }
}

fn parse_or<T: FromStr<Err = Error>>(value: &Option<String>, default: T) -> Result<T> {
    value.as_deref().map_or(Ok(default), str::parse)
}

fn required<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("{name} is required")))
}
