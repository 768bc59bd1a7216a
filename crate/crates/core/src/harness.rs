//! Metrics and the experiment driver behind the command-line tool.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{s, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{kfold_split, load_ratings, sample_mask, synth_lowrank, RatingsFormat, RatingsScale};
use crate::error::{Error, Result};
use crate::regularizer::RegularizerSpec;
use crate::solver::{solve, FactorPair, GammaInit, Method, SolveTrace, SolverConfig};
use crate::sparse::{observed_product, ObservationSet};

/// Singular values above this count toward the approximate rank.
pub const RANK_THRESHOLD: f64 = 1e-3;

const RFNE_BLOCK_ROWS: usize = 64;

/// `||left * right^T - truth||_F / ||truth||_F`, accumulated over row blocks.
pub fn rfne(fp: &FactorPair, truth: ArrayView2<'_, f64>) -> Result<f64> {
    if truth.dim() != (fp.nrows(), fp.ncols()) {
        return Err(Error::Shape(format!(
            "factors describe a {} x {} matrix, ground truth is {:?}",
            fp.nrows(),
            fp.ncols(),
            truth.dim()
        )));
    }
    let den: f64 = truth.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::Domain("ground truth has zero Frobenius norm".into()));
    }
    let rt = fp.right.t();
    let mut num = 0.0;
    let mut start = 0;
    while start < fp.nrows() {
        let end = (start + RFNE_BLOCK_ROWS).min(fp.nrows());
        let block = fp.left.slice(s![start..end, ..]).dot(&rt);
        num += block
            .iter()
            .zip(truth.slice(s![start..end, ..]).iter())
            .map(|(x, t)| (x - t) * (x - t))
            .sum::<f64>();
        start = end;
    }
    Ok((num / den).sqrt())
}

/// Normalized mean absolute error on `test`, with predictions clipped to the scale.
pub fn nmae(fp: &FactorPair, test: &ObservationSet, scale: RatingsScale) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Observations("NMAE needs at least one test entry".into()));
    }
    let pred = observed_product(fp.left.view(), fp.right.view(), test)?;
    let total: f64 = pred
        .iter()
        .zip(test.values())
        .map(|(p, y)| (y - scale.clip(*p)).abs())
        .sum();
    Ok(total / (test.len() as f64 * scale.range()))
}

/// Number of singular values greater than `tau`.
pub fn approx_rank(singular_values: &[f64], tau: f64) -> usize {
    singular_values.iter().filter(|&&s| s > tau).count()
}

/// Number of singular values greater than `tau * sigma_1`.
pub fn approx_rank_relative(singular_values: &[f64], tau: f64) -> usize {
    let top = singular_values.iter().copied().fold(0.0, f64::max);
    approx_rank(singular_values, tau * top)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingsTask {
    pub path: PathBuf,
    pub format: RatingsFormat,
    pub scale: RatingsScale,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Synthetic(SyntheticTask),
    Ratings(RatingsTask),
}

/// Grid axes. Every combination is one cell; `p` applies to synthetic tasks only.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub beta_max: Vec<f64>,
    pub gamma0: Vec<GammaInit>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub regularizer: RegularizerSpec,
    pub method: Method,
    /// Base solver settings; `beta_max`, `gamma0` and `seed` are overridden per run.
    pub solver: SolverConfig,
    pub sweep: Sweep,
    pub seeds: Vec<u64>,
    pub rank_threshold: f64,
    pub relative_rank: bool,
    /// Where the summary and trace files go; nothing is written when unset.
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    /// Single-cell synthetic experiment with the solver's own `beta_max` and `gamma0`.
    pub fn synthetic(
        task: SyntheticTask,
        p: f64,
        regularizer: RegularizerSpec,
        method: Method,
        solver: SolverConfig,
        seeds: Vec<u64>,
    ) -> Self {
        let sweep = Sweep {
            beta_max: vec![solver.beta_max],
            gamma0: vec![solver.gamma0],
            p: vec![p],
        };
        ExperimentConfig {
            task: Task::Synthetic(task),
            regularizer,
            method,
            solver,
            sweep,
            seeds,
            rank_threshold: RANK_THRESHOLD,
            relative_rank: false,
            output_dir: None,
            workers: None,
        }
    }

    pub fn ratings(
        task: RatingsTask,
        regularizer: RegularizerSpec,
        method: Method,
        solver: SolverConfig,
        seeds: Vec<u64>,
    ) -> Self {
        let sweep = Sweep {
            beta_max: vec![solver.beta_max],
            gamma0: vec![solver.gamma0],
            p: Vec::new(),
        };
        ExperimentConfig {
            task: Task::Ratings(task),
            regularizer,
            method,
            solver,
            sweep,
            seeds,
            rank_threshold: RANK_THRESHOLD,
            relative_rank: false,
            output_dir: None,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.seeds.is_empty() {
            return bad("seeds: at least one seed is required".into());
        }
        if self.sweep.beta_max.is_empty() {
            return bad("beta_max: sweep axis is empty".into());
        }
        if self.sweep.gamma0.is_empty() {
            return bad("gamma0: sweep axis is empty".into());
        }
        if !(self.rank_threshold > 0.0) {
            return bad(format!("rank_threshold must be positive, got {}", self.rank_threshold));
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        match &self.task {
            Task::Synthetic(t) => {
                if t.m == 0 || t.n == 0 {
                    return bad(format!("m and n must be positive, got {} x {}", t.m, t.n));
                }
                if t.rank == 0 || t.rank > t.m.min(t.n) {
                    return bad(format!("r_true must lie in 1..={}, got {}", t.m.min(t.n), t.rank));
                }
                if !(t.noise >= 0.0 && t.noise.is_finite()) {
                    return bad(format!("noise level d must be nonnegative, got {}", t.noise));
                }
                if self.sweep.p.is_empty() {
                    return bad("p: sweep axis is empty".into());
                }
                if let Some(p) = self.sweep.p.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
                    return bad(format!("p must lie in (0, 1], got {p}"));
                }
            }
            Task::Ratings(t) => {
                if t.folds < 2 {
                    return bad(format!("folds must be at least 2, got {}", t.folds));
                }
                if !self.sweep.p.is_empty() {
                    return bad("p: sampling fraction is not used by ratings tasks".into());
                }
            }
        }
        for cell in self.cells() {
            self.run_config(&cell, 0).validate()?;
        }
        Ok(())
    }

    fn cells(&self) -> Vec<Cell> {
        let ps: Vec<Option<f64>> = match self.task {
            Task::Synthetic(_) => self.sweep.p.iter().map(|&p| Some(p)).collect(),
            Task::Ratings(_) => vec![None],
        };
        let mut cells = Vec::new();
        for &beta_max in &self.sweep.beta_max {
            for &gamma0 in &self.sweep.gamma0 {
                for &p in &ps {
                    cells.push(Cell {
                        index: cells.len(),
                        beta_max,
                        gamma0,
                        p,
                    });
                }
            }
        }
        cells
    }

    fn run_config(&self, cell: &Cell, seed: u64) -> SolverConfig {
        let mut cfg = self.solver.clone();
        cfg.beta_max = cell.beta_max;
        cfg.gamma0 = cell.gamma0;
        cfg.seed = seed;
        cfg
    }

    fn rank_of(&self, sv: &[f64]) -> usize {
        if self.relative_rank {
            approx_rank_relative(sv, self.rank_threshold)
        } else {
            approx_rank(sv, self.rank_threshold)
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    index: usize,
    beta_max: f64,
    gamma0: GammaInit,
    p: Option<f64>,
}

/// One row of the summary table.
///
/// Synthetic runs report RFNE against the noiseless truth, ratings folds
/// report NMAE. A ratings experiment adds an `avg` row per cell and seed
/// carrying the fold means; its per-run fields are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: usize,
    pub beta_max: f64,
    pub gamma0: f64,
    /// Sampling fraction for synthetic runs, training density for ratings.
    pub p: f64,
    pub seed: u64,
    pub fold: String,
    pub metric: String,
    pub value: f64,
    pub noise_rfne: Option<f64>,
    pub approx_rank: Option<usize>,
    pub iterations: Option<usize>,
    pub termination: Option<String>,
    pub objective: Option<f64>,
    pub seconds: f64,
    /// Final singular values of the product, space separated.
    pub singular_values: Option<String>,
}

impl RunRecord {
    pub fn singular_values(&self) -> Vec<f64> {
        self.singular_values
            .as_deref()
            .unwrap_or("")
            .split_whitespace()
            .filter_map(|t| t.parse().ok())
            .collect()
    }

    pub fn is_average(&self) -> bool {
        self.fold == AVG_FOLD
    }
}

const AVG_FOLD: &str = "avg";
const NO_FOLD: &str = "-";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub summary_path: Option<PathBuf>,
}

impl ExperimentResult {
    /// Per-run rows, without ratings averages.
    pub fn runs(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(|r| !r.is_average())
    }
}

struct Job {
    cell: Cell,
    seed: u64,
}

struct JobOutput {
    records: Vec<RunRecord>,
    traces: Vec<(String, SolveTrace)>,
}

/// Runs every sweep cell for every seed, then writes the summary and traces.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let ratings = match &cfg.task {
        Task::Ratings(t) => Some(load_ratings(&t.path, t.format, t.scale)?.observations),
        Task::Synthetic(_) => None,
    };
    let jobs: Vec<Job> = cfg
        .cells()
        .into_iter()
        .flat_map(|cell| cfg.seeds.iter().map(move |&seed| Job { cell, seed }))
        .collect();

    let run_all = || -> Result<Vec<JobOutput>> {
        jobs.par_iter()
            .map(|job| match &cfg.task {
                Task::Synthetic(t) => run_synthetic(cfg, t, job),
                Task::Ratings(t) => run_ratings(cfg, t, ratings.as_ref().expect("loaded"), job),
            })
            .collect()
    };
    let outputs = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {w} workers: {e}")))?
            .install(run_all)?,
        None => run_all()?,
    };

    let mut records = Vec::new();
    let mut traces = Vec::new();
    for out in outputs {
        records.extend(out.records);
        traces.extend(out.traces);
    }
    records.sort_by(|a, b| {
        (a.cell, a.seed, fold_key(&a.fold)).cmp(&(b.cell, b.seed, fold_key(&b.fold)))
    });

    let summary_path = match &cfg.output_dir {
        Some(dir) => {
            let trace_dir = dir.join("traces");
            fs::create_dir_all(&trace_dir).map_err(|e| Error::io(&trace_dir, e))?;
            for (name, trace) in &traces {
                write_trace(&trace_dir.join(name), trace)?;
            }
            let path = dir.join("summary.csv");
            write_summary(&path, &records)?;
            Some(path)
        }
        None => None,
    };
    Ok(ExperimentResult {
        records,
        summary_path,
    })
}

fn fold_key(fold: &str) -> (u8, usize) {
    match fold.parse::<usize>() {
        Ok(k) => (0, k),
        Err(_) if fold == AVG_FOLD => (1, 0),
        Err(_) => (0, 0),
    }
}

fn run_synthetic(cfg: &ExperimentConfig, task: &SyntheticTask, job: &Job) -> Result<JobOutput> {
    let p = job.cell.p.expect("synthetic cells carry p");
    let inst = synth_lowrank(task.m, task.n, task.rank, task.noise, job.seed)?;
    let mask = sample_mask(task.m, task.n, p, job.seed)?;
    let obs = inst.observe(&mask)?;
    let solver_cfg = cfg.run_config(&job.cell, job.seed);
    let start = Instant::now();
    let (fp, trace) = solve(&obs, &cfg.regularizer, &solver_cfg, cfg.method, None)?;
    let seconds = start.elapsed().as_secs_f64();
    let sv = fp.singular_values();
    let record = RunRecord {
        cell: job.cell.index,
        beta_max: job.cell.beta_max,
        gamma0: trace.gamma0,
        p,
        seed: job.seed,
        fold: NO_FOLD.into(),
        metric: "rfne".into(),
        value: rfne(&fp, inst.truth.view())?,
        noise_rfne: Some(inst.noise_rfne()),
        approx_rank: Some(cfg.rank_of(&sv)),
        iterations: Some(trace.iterations()),
        termination: Some(trace.termination.name().into()),
        objective: trace.final_objective(),
        seconds,
        singular_values: Some(join_values(&sv)),
    };
    let name = format!("cell{}_seed{}.csv", job.cell.index, job.seed);
    Ok(JobOutput {
        records: vec![record],
        traces: vec![(name, trace)],
    })
}

fn run_ratings(
    cfg: &ExperimentConfig,
    task: &RatingsTask,
    obs: &ObservationSet,
    job: &Job,
) -> Result<JobOutput> {
    let folds = kfold_split(obs, task.folds, job.seed)?;
    let solver_cfg = cfg.run_config(&job.cell, job.seed);
    let mut records = Vec::with_capacity(folds.len() + 1);
    let mut traces = Vec::with_capacity(folds.len());
    for (f, fold) in folds.iter().enumerate() {
        let test = fold.evaluable_test()?;
        let start = Instant::now();
        let (fp, trace) = solve(&fold.train, &cfg.regularizer, &solver_cfg, cfg.method, None)?;
        let seconds = start.elapsed().as_secs_f64();
        let sv = fp.singular_values();
        records.push(RunRecord {
            cell: job.cell.index,
            beta_max: job.cell.beta_max,
            gamma0: trace.gamma0,
            p: fold.train.density(),
            seed: job.seed,
            fold: f.to_string(),
            metric: "nmae".into(),
            value: nmae(&fp, &test, task.scale)?,
            noise_rfne: None,
            approx_rank: Some(cfg.rank_of(&sv)),
            iterations: Some(trace.iterations()),
            termination: Some(trace.termination.name().into()),
            objective: trace.final_objective(),
            seconds,
            singular_values: Some(join_values(&sv)),
        });
        traces.push((
            format!("cell{}_seed{}_fold{}.csv", job.cell.index, job.seed, f),
            trace,
        ));
    }
    let k = records.len() as f64;
    let mean = |f: fn(&RunRecord) -> f64| records.iter().map(f).sum::<f64>() / k;
    let avg = RunRecord {
        cell: job.cell.index,
        beta_max: job.cell.beta_max,
        gamma0: mean(|r| r.gamma0),
        p: mean(|r| r.p),
        seed: job.seed,
        fold: AVG_FOLD.into(),
        metric: "nmae".into(),
        value: mean(|r| r.value),
        noise_rfne: None,
        approx_rank: None,
        iterations: None,
        termination: None,
        objective: None,
        seconds: mean(|r| r.seconds),
        singular_values: None,
    };
    records.push(avg);
    Ok(JobOutput { records, traces })
}

fn join_values(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_summary(path: &Path, records: &[RunRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_summary_to(file, records).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Summary table as CSV on any writer, e.g. standard output.
pub fn write_summary_to(writer: impl std::io::Write, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<summary>", e))
}

pub fn read_summary(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Serialize)]
struct TraceRow {
    iter: usize,
    objective: f64,
    residual: f64,
    beta: f64,
    gamma: f64,
    seconds: f64,
}

pub fn write_trace(path: &Path, trace: &SolveTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for rec in &trace.records {
        w.serialize(TraceRow {
            iter: rec.iteration,
            objective: rec.objective,
            residual: rec.residual_sumsq,
            beta: rec.beta,
            gamma: rec.gamma,
            seconds: rec.seconds,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn pair(left: Array2<f64>, right: Array2<f64>) -> FactorPair {
        FactorPair::new(left, right).unwrap()
    }

    #[test]
    fn rfne_exact_and_zero() {
        let fp = pair(array![[1.0], [2.0]], array![[3.0], [1.0], [0.5]]);
        let truth = fp.product();
        assert_eq!(rfne(&fp, truth.view()).unwrap(), 0.0);
        let zero = FactorPair::zeros(2, 3, 1);
        assert_eq!(rfne(&zero, truth.view()).unwrap(), 1.0);
        assert!(rfne(&fp, Array2::zeros((2, 3)).view()).is_err());
        assert!(rfne(&fp, Array2::zeros((3, 2)).view()).is_err());
    }

    #[test]
    fn rfne_matches_dense_formula_across_blocks() {
        let fp = crate::solver::initialize(150, 40, 3, 7, Default::default()).unwrap();
        let truth = crate::solver::initialize(150, 40, 3, 8, Default::default())
            .unwrap()
            .product();
        let x = fp.product();
        let num: f64 = x.iter().zip(truth.iter()).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = truth.iter().map(|v| v * v).sum();
        let got = rfne(&fp, truth.view()).unwrap();
        assert!((got - (num / den).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn nmae_examples() {
        let scale = RatingsScale::MOVIELENS;
        let test = ObservationSet::from_triplets(1, 2, &[(0, 0, 1.0), (0, 1, 5.0)]).unwrap();
        let fp = pair(array![[1.0]], array![[2.0], [4.0]]);
        assert!((nmae(&fp, &test, scale).unwrap() - 0.25).abs() < 1e-15);

        let exact = pair(array![[1.0]], array![[1.0], [5.0]]);
        assert_eq!(nmae(&exact, &test, scale).unwrap(), 0.0);

        let high = ObservationSet::from_triplets(1, 2, &[(0, 0, 5.0), (0, 1, 5.0)]).unwrap();
        let zero = FactorPair::zeros(1, 2, 1);
        assert_eq!(nmae(&zero, &high, scale).unwrap(), 1.0);

        assert!(nmae(&zero, &ObservationSet::empty(1, 2), scale).is_err());
    }

    #[test]
    fn nmae_clips_predictions() {
        let test = ObservationSet::from_triplets(1, 1, &[(0, 0, 5.0)]).unwrap();
        let fp = pair(array![[3.0]], array![[3.0]]);
        assert_eq!(nmae(&fp, &test, RatingsScale::MOVIELENS).unwrap(), 0.0);
    }

    #[test]
    fn approx_rank_examples() {
        assert_eq!(approx_rank(&[5.0, 3.0, 1e-5], 1e-3), 2);
        assert_eq!(approx_rank(&[0.0, 0.0], RANK_THRESHOLD), 0);
        assert_eq!(approx_rank(&[], RANK_THRESHOLD), 0);
        assert_eq!(approx_rank_relative(&[1000.0, 2.0, 0.5], 1e-3), 2);
        assert_eq!(approx_rank_relative(&[0.0], 1e-3), 0);
    }

    #[test]
    fn fold_labels_sort_numerically_then_average() {
        let mut labels = vec!["avg", "10", "2", "0"];
        labels.sort_by_key(|f| fold_key(f));
        assert_eq!(labels, ["0", "2", "10", "avg"]);
    }
}
