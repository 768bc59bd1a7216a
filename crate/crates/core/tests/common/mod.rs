#![allow(dead_code)]

use lowrank_core::data::{stream_rng, Stream};
use lowrank_core::dense::{weight_update, GramMatrix, WeightMatrix};
use lowrank_core::solver::FactorPair;
use lowrank_core::{ObservationSet, RegularizerSpec, Side};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

pub fn fro(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub struct Instance {
    pub obs: ObservationSet,
    pub fp: FactorPair,
    pub w: WeightMatrix,
}

/// Random observations, factors and a positive definite weight.
pub fn instance(m: usize, n: usize, r: usize, p: f64, seed: u64) -> Instance {
    let mut rng = stream_rng(seed, Stream::Factors);
    let mut entries = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if rng.random::<f64>() < p {
                entries.push((i, j, rng.sample::<f64, _>(StandardNormal)));
            }
        }
    }
    let obs = ObservationSet::from_triplets(m, n, &entries).unwrap();
    let fp = FactorPair::new(gaussian(m, r, &mut rng), gaussian(n, r, &mut rng)).unwrap();
    let spec = RegularizerSpec::trace_inverse(1.0).unwrap();
    let a = gaussian(r, r, &mut rng);
    let w = weight_update(&spec, &GramMatrix::new(a.dot(&a.t())).unwrap());
    Instance { obs, fp, w }
}

/// `<P_m^T P_m + P_n^T P_n, W> + (beta/2) ||A(P_m P_n^T) - b||^2`, evaluated densely.
pub fn objective(fp: &FactorPair, w: &WeightMatrix, obs: &ObservationSet, beta: f64) -> f64 {
    let gram = fp.left.t().dot(&fp.left) + fp.right.t().dot(&fp.right);
    let linear: f64 = gram.iter().zip(w.matrix().iter()).map(|(a, b)| a * b).sum();
    let x = fp.left.dot(&fp.right.t());
    let loss: f64 = obs.iter().map(|(i, j, v)| (x[[i, j]] - v).powi(2)).sum();
    linear + 0.5 * beta * loss
}

pub fn shifted(fp: &FactorPair, side: Side, d: &Array2<f64>, t: f64) -> FactorPair {
    let mut out = fp.clone();
    match side {
        Side::Left => out.left.scaled_add(-t, d),
        Side::Right => out.right.scaled_add(-t, d),
    }
    out
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
        if hi - lo < 1e-15 * (1.0 + lo.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Dense normal equations of the left subproblem over the whole `m x r` variable.
pub fn dense_subproblem(fixed: &Array2<f64>, w: &Array2<f64>, obs: &ObservationSet, beta: f64) -> Array2<f64> {
    let (m, r) = (obs.nrows(), fixed.ncols());
    let mut a = DMatrix::<f64>::zeros(obs.len(), m * r);
    let mut b = DVector::<f64>::zeros(obs.len());
    for (k, (i, j, v)) in obs.iter().enumerate() {
        for c in 0..r {
            a[(k, i * r + c)] = fixed[[j, c]];
        }
        b[k] = v;
    }
    let mut h = a.transpose() * &a * beta;
    for i in 0..m {
        for x in 0..r {
            for y in 0..r {
                h[(i * r + x, i * r + y)] += 2.0 * w[[x, y]];
            }
        }
    }
    let rhs = a.transpose() * b * beta;
    let sol = h.lu().solve(&rhs).unwrap();
    Array2::from_shape_fn((m, r), |(i, c)| sol[i * r + c])
}

pub fn small_problem(seed: u64, p: f64) -> ObservationSet {
    let mut rng = stream_rng(seed, Stream::Factors);
    let truth = gaussian(40, 2, &mut rng).dot(&gaussian(2, 30, &mut rng));
    let mut mask = Vec::new();
    for i in 0..40 {
        for j in 0..30 {
            if rng.random::<f64>() < p {
                mask.push((i, j));
            }
        }
    }
    let noisy = &truth + &(gaussian(40, 30, &mut rng) * 0.05);
    ObservationSet::from_dense(noisy.view(), &mask).unwrap()
}
