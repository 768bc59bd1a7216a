mod options;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use lowrank_core::data::{load_ratings, read_matrix, write_matrix};
use lowrank_core::harness::{
    approx_rank, approx_rank_relative, run_experiment, write_summary_to, write_trace, ExperimentConfig,
    RANK_THRESHOLD,
};
use lowrank_core::solver::solve;
use lowrank_core::{Error, ObservationSet, Result};

use options::Options;

/// Low-rank matrix completion with concave spectral regularizers.
#[derive(Debug, Parser)]
#[command(name = "lowrank", version)]
struct Cli {
    /// TOML file that may set any option; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic instances, solve them and report RFNE per seed.
    Synth(Options),
    /// Solve one ratings or dense matrix file and write the completed matrix.
    Complete(Options),
    /// k-fold cross-validated NMAE on a ratings file.
    Xval(Options),
    /// Synthetic grid over beta_max, gamma0 and p.
    Sweep(Options),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidSpec(_) | Error::Observations(_) => 1,
        Error::Io { .. } | Error::Csv(_) | Error::Parse { .. } => 3,
        Error::Domain(_)
        | Error::Shape(_)
        | Error::NotSymmetric { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::DegenerateDirection(_)
        | Error::SingularWeight(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => Options::from_file(path)?,
        None => Options::default(),
    };
    match cli.command {
        Command::Synth(flags) => {
            let opts = flags.over(file).with_env_output_dir();
            opts.single_cell()?;
            experiment(opts.synthetic()?)
        }
        Command::Sweep(flags) => experiment(flags.over(file).with_env_output_dir().synthetic()?),
        Command::Xval(flags) => {
            let opts = flags.over(file).with_env_output_dir();
            opts.single_cell()?;
            experiment(opts.ratings()?)
        }
        Command::Complete(flags) => complete(&flags.over(file).with_env_output_dir()),
    }
}

fn experiment(cfg: ExperimentConfig) -> Result<()> {
    let result = run_experiment(&cfg)?;
    write_summary_to(std::io::stdout().lock(), &result.records)?;
    if let Some(path) = result.summary_path {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

/// Original user and item identifiers of a ratings file.
type Identifiers = (Vec<String>, Vec<String>);

/// Observations from a ratings file or from the non-NaN entries of a dense matrix.
fn load_observations(opts: &Options) -> Result<(ObservationSet, Option<Identifiers>)> {
    if opts.format.as_deref().map(str::trim) == Some("matrix") {
        let path = opts.input.clone().ok_or_else(|| Error::Config("input is required".into()))?;
        let dense = read_matrix(&path)?;
        let known: Vec<(usize, usize)> = dense
            .indexed_iter()
            .filter(|(_, v)| !v.is_nan())
            .map(|(ij, _)| ij)
            .collect();
        return Ok((ObservationSet::from_dense(dense.view(), &known)?, None));
    }
    let task = opts.ratings_task()?;
    let ratings = load_ratings(&task.path, task.format, task.scale)?;
    Ok((ratings.observations, Some((ratings.users, ratings.items))))
}

fn complete(opts: &Options) -> Result<()> {
    opts.single_cell()?;
    let (obs, ids) = load_observations(opts)?;
    let spec = opts.regularizer()?;
    let cfg = opts.solver()?;
    let start = std::time::Instant::now();
    let (fp, trace) = solve(&obs, &spec, &cfg, opts.method()?, None)?;
    let seconds = start.elapsed().as_secs_f64();
    let sv = fp.singular_values();
    let tau = opts.rank_threshold.unwrap_or(RANK_THRESHOLD);
    let rank = if opts.relative_rank.unwrap_or(false) {
        approx_rank_relative(&sv, tau)
    } else {
        approx_rank(&sv, tau)
    };
    println!("rows,cols,observed,iterations,termination,objective,approx_rank,seconds");
    println!(
        "{},{},{},{},{},{},{},{}",
        obs.nrows(),
        obs.ncols(),
        obs.len(),
        trace.iterations(),
        trace.termination.name(),
        trace.final_objective().unwrap_or(f64::NAN),
        rank,
        seconds
    );
    if let Some(dir) = &opts.output_dir {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
        write_matrix(&dir.join("completed.txt"), &fp.product())?;
        write_trace(&dir.join("trace.csv"), &trace)?;
        if let Some((users, items)) = ids {
            write_ids(&dir.join("rows.txt"), &users)?;
            write_ids(&dir.join("cols.txt"), &items)?;
        }
        eprintln!("wrote {}", dir.join("completed.txt").display());
    }
    Ok(())
}

/// Original identifiers, one per line, in matrix order.
fn write_ids(path: &Path, ids: &[String]) -> Result<()> {
    let mut text = ids.join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
