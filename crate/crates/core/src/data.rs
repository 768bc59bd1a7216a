//! Instance generation, ratings ingestion, sampling masks and k-fold splits.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::sparse::ObservationSet;

/// Independent random substreams derived from one experiment seed.
///
/// Each purpose draws from its own ChaCha8 stream (the seed selects the key,
/// the purpose selects the stream number), so adding draws for one purpose
/// never shifts the numbers seen by another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Factors = 1,
    Noise = 2,
    Mask = 3,
    Folds = 4,
    Init = 5,
}

pub fn stream_rng(seed: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// A low-rank ground truth plus its noisy observation.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    pub truth: Array2<f64>,
    pub noisy: Array2<f64>,
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticInstance {
    /// `||noisy - truth||_F / ||truth||_F`.
    pub fn noise_rfne(&self) -> f64 {
        let num: f64 = self
            .noisy
            .iter()
            .zip(self.truth.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let den: f64 = self.truth.iter().map(|v| v * v).sum();
        (num / den).sqrt()
    }

    /// Observation set of the noisy matrix on `mask`.
    pub fn observe(&self, mask: &[(usize, usize)]) -> Result<ObservationSet> {
        ObservationSet::from_dense(self.noisy.view(), mask)
    }
}

/// `randn(m, r) * randn(r, n) + d * randn(m, n)`.
pub fn synth_lowrank(m: usize, n: usize, rank: usize, noise: f64, seed: u64) -> Result<SyntheticInstance> {
    if rank > m.min(n) {
        return Err(Error::Config(format!(
            "rank {rank} exceeds min(m, n) = {}",
            m.min(n)
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Config(format!("noise level must be >= 0, got {noise}")));
    }
    let mut frng = stream_rng(seed, Stream::Factors);
    let a = Array2::from_shape_fn((m, rank), |_| frng.sample::<f64, _>(StandardNormal));
    let b = Array2::from_shape_fn((rank, n), |_| frng.sample::<f64, _>(StandardNormal));
    let truth = a.dot(&b);
    let mut nrng = stream_rng(seed, Stream::Noise);
    let noisy = Array2::from_shape_fn((m, n), |(i, j)| {
        truth[[i, j]] + noise * nrng.sample::<f64, _>(StandardNormal)
    });
    Ok(SyntheticInstance {
        truth,
        noisy,
        m,
        n,
        rank,
        noise,
        seed,
    })
}

/// Bernoulli(`p`) sample of the `m x n` index set, row-major.
pub fn sample_mask(m: usize, n: usize, p: f64, seed: u64) -> Result<Vec<(usize, usize)>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("sampling fraction must lie in [0, 1], got {p}")));
    }
    let mut rng = stream_rng(seed, Stream::Mask);
    let mut mask = Vec::with_capacity((p * (m * n) as f64) as usize + 16);
    for i in 0..m {
        for j in 0..n {
            if rng.random::<f64>() < p {
                mask.push((i, j));
            }
        }
    }
    Ok(mask)
}

/// Bounds of the rating scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingsScale {
    pub min: f64,
    pub max: f64,
}

impl RatingsScale {
    pub const MOVIELENS: RatingsScale = RatingsScale { min: 1.0, max: 5.0 };
    pub const JESTER: RatingsScale = RatingsScale {
        min: -10.0,
        max: 10.0,
    };

    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min < max) || !min.is_finite() || !max.is_finite() {
            return Err(Error::Config(format!(
                "rating scale needs min < max, got [{min}, {max}]"
            )));
        }
        Ok(RatingsScale { min, max })
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn clip(&self, y: f64) -> f64 {
        y.clamp(self.min, self.max)
    }
}

impl std::str::FromStr for RatingsScale {
    type Err = Error;

    /// `movielens`, `jester` or `min,max`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "movielens" => Ok(RatingsScale::MOVIELENS),
            "jester" => Ok(RatingsScale::JESTER),
            other => {
                let bounds: Vec<f64> = other
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Config(format!("bad rating scale {s:?}")))?;
                match bounds[..] {
                    [min, max] => RatingsScale::new(min, max),
                    _ => Err(Error::Config(format!(
                        "rating scale must be movielens, jester or min,max; got {s:?}"
                    ))),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingsFormat {
    /// `user<TAB>item<TAB>rating[<TAB>timestamp]`, as in MovieLens `u.data`.
    TabSeparated,
    /// `user,item,rating[,timestamp]`.
    CommaSeparated,
}

impl std::str::FromStr for RatingsFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tsv" | "tab" | "tab_separated" => Ok(RatingsFormat::TabSeparated),
            "csv" | "comma" | "comma_separated" => Ok(RatingsFormat::CommaSeparated),
            other => Err(Error::Config(format!(
                "unknown ratings format {other:?} (expected tsv or csv)"
            ))),
        }
    }
}

/// Ratings with their original user and item identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct Ratings {
    pub observations: ObservationSet,
    /// Original user id of each row.
    pub users: Vec<String>,
    /// Original item id of each column.
    pub items: Vec<String>,
}

/// Reads a ratings file; user and item ids get dense indices in order of
/// first appearance.
pub fn load_ratings(path: &Path, format: RatingsFormat, scale: RatingsScale) -> Result<Ratings> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ratings(BufReader::new(file), path, format, scale)
}

pub fn read_ratings<R: BufRead>(
    reader: R,
    path: &Path,
    format: RatingsFormat,
    scale: RatingsScale,
) -> Result<Ratings> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut user_index: HashMap<String, usize> = HashMap::new();
    let mut item_index: HashMap<String, usize> = HashMap::new();
    let mut users = Vec::new();
    let mut items = Vec::new();
    let mut entries = Vec::new();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();

    for (k, line) in reader.lines().enumerate() {
        let lineno = k + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = match format {
            RatingsFormat::TabSeparated => trimmed.split_whitespace().collect(),
            RatingsFormat::CommaSeparated => trimmed.split(',').map(str::trim).collect(),
        };
        if fields.len() < 3 || fields.len() > 4 {
            return Err(parse_err(
                lineno,
                format!("expected 3 or 4 fields, found {}", fields.len()),
            ));
        }
        let rating: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(lineno, format!("rating {:?} is not a number", fields[2])))?;
        if !(rating >= scale.min && rating <= scale.max) {
            return Err(parse_err(
                lineno,
                format!("rating {rating} is outside [{}, {}]", scale.min, scale.max),
            ));
        }
        for (name, id) in [("user", fields[0]), ("item", fields[1])] {
            if id.is_empty() {
                return Err(parse_err(lineno, format!("empty {name} id")));
            }
        }
        let u = *user_index.entry(fields[0].to_string()).or_insert_with(|| {
            users.push(fields[0].to_string());
            users.len() - 1
        });
        let i = *item_index.entry(fields[1].to_string()).or_insert_with(|| {
            items.push(fields[1].to_string());
            items.len() - 1
        });
        if let Some(first) = seen.insert((u, i), lineno) {
            return Err(parse_err(
                lineno,
                format!(
                    "duplicate rating for user {} item {} (first on line {first})",
                    fields[0], fields[1]
                ),
            ));
        }
        entries.push((u, i, rating));
    }
    if entries.is_empty() {
        return Err(parse_err(0, "no ratings found".into()));
    }
    let observations = ObservationSet::from_triplets(users.len(), items.len(), &entries)?;
    Ok(Ratings {
        observations,
        users,
        items,
    })
}

/// One train/test split of a k-fold partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: ObservationSet,
    pub test: ObservationSet,
}

impl Fold {
    /// Test entries whose row and column both appear in the training set.
    /// The others have no trained factor rows and are left out of scoring.
    pub fn evaluable_test(&self) -> Result<ObservationSet> {
        let rows = self.train.row_counts();
        let cols = self.train.col_counts();
        let keep: Vec<usize> = self
            .test
            .iter()
            .enumerate()
            .filter(|(_, (i, j, _))| rows[*i] > 0 && cols[*j] > 0)
            .map(|(k, _)| k)
            .collect();
        self.test.select(&keep)
    }
}

/// Random partition into `k` folds whose sizes differ by at most one.
pub fn kfold_split(obs: &ObservationSet, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold split needs k >= 2, got {k}")));
    }
    if obs.len() < k {
        return Err(Error::Config(format!(
            "cannot split {} observations into {k} folds",
            obs.len()
        )));
    }
    let mut order: Vec<usize> = (0..obs.len()).collect();
    order.shuffle(&mut stream_rng(seed, Stream::Folds));
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let mut test: Vec<usize> = order.iter().copied().skip(f).step_by(k).collect();
        test.sort_unstable();
        let mut in_test = vec![false; obs.len()];
        for &t in &test {
            in_test[t] = true;
        }
        let train: Vec<usize> = (0..obs.len()).filter(|&t| !in_test[t]).collect();
        folds.push(Fold {
            train: obs.select(&train)?,
            test: obs.select(&test)?,
        });
    }
    Ok(folds)
}

/// Writes a dense matrix as text: a `rows cols` header, then one row per
/// line with values in `{:e}` round-trip form.
pub fn write_matrix(path: &Path, a: &Array2<f64>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{} {}", a.nrows(), a.ncols()).map_err(io)?;
    for row in a.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(" ")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty matrix file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(1, format!("bad dimension {t:?}"))))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(parse_err(1, "header must be `rows cols`".into()));
    }
    let (rows, cols) = (dims[0], dims[1]);
    let mut data = Vec::with_capacity(rows * cols);
    for (k, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for t in line.split_whitespace() {
            data.push(
                t.parse::<f64>()
                    .map_err(|_| parse_err(k + 1, format!("bad value {t:?}")))?,
            );
        }
        if data.len() - before != cols {
            return Err(parse_err(
                k + 1,
                format!("expected {cols} values, found {}", data.len() - before),
            ));
        }
    }
    if data.len() != rows * cols {
        return Err(parse_err(
            text.lines().count(),
            format!("expected {rows} rows, found {}", data.len() / cols.max(1)),
        ));
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Shape(e.to_string()))
}
