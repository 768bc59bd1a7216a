//! Dense kernels on `r x r` and tall `r`-column matrices.
//!
//! The eigensolver is Householder tridiagonalization followed by implicit QL
//! iteration (the EISPACK `tred2`/`tql2` pair). Singular values of a factored
//! product come from thin Householder QR of each factor and a one-sided
//! Jacobi SVD of the small core.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::regularizer::ConcavePenalty;

const SYMMETRY_TOL: f64 = 1e-10;

/// Largest `|a_ij - a_ji|`.
pub fn asymmetry(a: ArrayView2<'_, f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}

fn max_abs(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn check_symmetric(a: ArrayView2<'_, f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!("expected a square matrix, got {:?}", a.dim())));
    }
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOL * max_abs(a).max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// `P_m^T P_m + P_n^T P_n` for a factor pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(Array2<f64>);

impl GramMatrix {
    pub fn new(a: Array2<f64>) -> Result<Self> {
        check_symmetric(a.view())?;
        Ok(GramMatrix(a))
    }

    pub fn from_factors(left: ArrayView2<'_, f64>, right: ArrayView2<'_, f64>) -> Result<Self> {
        if left.ncols() != right.ncols() {
            return Err(Error::Shape(format!(
                "factor column counts differ: {} vs {}",
                left.ncols(),
                right.ncols()
            )));
        }
        let r = left.ncols();
        let mut g = Array2::<f64>::zeros((r, r));
        for f in [left, right] {
            for row in f.rows() {
                for a in 0..r {
                    let ra = row[a];
                    for b in a..r {
                        g[[a, b]] += ra * row[b];
                    }
                }
            }
        }
        for a in 0..r {
            for b in 0..a {
                g[[a, b]] = g[[b, a]];
            }
        }
        Ok(GramMatrix(g))
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Symmetric weight matrix of the reweighted formulation, with its
/// eigenpairs when known.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    matrix: Array2<f64>,
    eigen: Option<SymEig>,
}

impl WeightMatrix {
    pub fn identity(r: usize) -> Self {
        WeightMatrix {
            matrix: Array2::eye(r),
            eigen: None,
        }
    }

    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        check_symmetric(matrix.view())?;
        Ok(WeightMatrix {
            matrix,
            eigen: None,
        })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Eigenpairs computed when this matrix was built, if any.
    pub fn eigen(&self) -> Option<&SymEig> {
        self.eigen.as_ref()
    }

    /// Eigenvalues in descending order, computing them if not cached.
    pub fn eigenvalues(&self) -> Vec<f64> {
        match &self.eigen {
            Some(e) => e.values.to_vec(),
            None => sym_eig_unchecked(self.matrix.view()).values.to_vec(),
        }
    }
}

/// Symmetric eigendecomposition `A = V diag(values) V^T`, values descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEig {
    pub vectors: Array2<f64>,
    pub values: Array1<f64>,
}

pub fn sym_eig(a: ArrayView2<'_, f64>) -> Result<SymEig> {
    check_symmetric(a)?;
    Ok(sym_eig_unchecked(a))
}

fn sym_eig_unchecked(a: ArrayView2<'_, f64>) -> SymEig {
    let n = a.nrows();
    if n == 0 {
        return SymEig {
            vectors: Array2::zeros((0, 0)),
            values: Array1::zeros(0),
        };
    }
    let mut v = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            v[i][j] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| d[y].total_cmp(&d[x]));
    let values = Array1::from_iter(order.iter().map(|&k| d[k]));
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| v[i][order[j]]);
    SymEig { vectors, values }
}

/// Householder reduction to tridiagonal form; on exit `v` holds the
/// accumulated transformation, `d` the diagonal and `e` the subdiagonal.
fn tred2(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    d.copy_from_slice(&v[n - 1]);

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                let f = d[j];
                v[j][i] = f;
                let mut g = e[j] + v[j][j] * f;
                for k in (j + 1)..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..(n - 1) {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for row in v.iter_mut().take(i + 1) {
            row[i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL iteration on the tridiagonal form from [`tred2`].
fn tql2(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        let h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
}

/// `V diag(values) V^T`, exactly symmetric.
fn reconstruct(vectors: &Array2<f64>, values: &[f64]) -> Array2<f64> {
    let n = vectors.nrows();
    let mut out = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for (k, &w) in values.iter().enumerate() {
                s += vectors[[i, k]] * w * vectors[[j, k]];
            }
            out[[i, j]] = s;
            out[[j, i]] = s;
        }
    }
    out
}

/// `W = V diag(rho'(lambda)) V^T` for the eigendecomposition of the Gram matrix.
///
/// Negative eigenvalues (roundoff) are clamped to zero first. When every
/// weight is equal the result is that multiple of the identity, exactly.
pub fn weight_update<P: ConcavePenalty + ?Sized>(penalty: &P, gram: &GramMatrix) -> WeightMatrix {
    weight_update_with_spectrum(penalty, gram).0
}

/// [`weight_update`], also returning the Gram eigenvalues (descending).
pub(crate) fn weight_update_with_spectrum<P: ConcavePenalty + ?Sized>(
    penalty: &P,
    gram: &GramMatrix,
) -> (WeightMatrix, Vec<f64>) {
    let eig = sym_eig_unchecked(gram.0.view());
    let weights: Vec<f64> = eig.values.iter().map(|&l| penalty.slope(l.max(0.0))).collect();
    let r = weights.len();
    let matrix = if r > 0 && weights.iter().all(|&w| w == weights[0]) {
        Array2::eye(r) * weights[0]
    } else {
        reconstruct(&eig.vectors, &weights)
    };
    // eigen-pairs of W in descending order: reverse of the Gram order
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
    let values = Array1::from_iter(order.iter().map(|&k| weights[k]));
    let vectors = eig.vectors.select(Axis(1), &order);
    let w = WeightMatrix {
        matrix,
        eigen: Some(SymEig { vectors, values }),
    };
    (w, eig.values.to_vec())
}

/// Solves `a x = b` for symmetric positive definite `a` by Cholesky.
pub fn spd_solve(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::Shape(format!(
            "spd_solve: a is {:?}, b is {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let l = cholesky(a)?;
    let mut out = b.to_owned();
    let mut buf = vec![0.0; n];
    for c in 0..b.ncols() {
        for (i, bi) in buf.iter_mut().enumerate() {
            *bi = b[[i, c]];
        }
        cholesky_solve(&l, n, &mut buf);
        for (i, bi) in buf.iter().enumerate() {
            out[[i, c]] = *bi;
        }
    }
    Ok(out)
}

/// Lower Cholesky factor of `a`, row-major in a flat buffer.
pub(crate) fn cholesky(a: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    let mut l = vec![0.0; n * n];
    cholesky_into(n, |i, j| a[[i, j]], &mut l)?;
    Ok(l)
}

/// Factors the `n x n` matrix given by `entry` into `l` (lower, row-major).
pub(crate) fn cholesky_into(
    n: usize,
    entry: impl Fn(usize, usize) -> f64,
    l: &mut [f64],
) -> Result<()> {
    for j in 0..n {
        let mut diag = entry(j, j);
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: diag,
            });
        }
        let djj = diag.sqrt();
        l[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut s = entry(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
        for i in 0..j {
            l[i * n + j] = 0.0;
        }
    }
    Ok(())
}

/// Overwrites `x` with `(L L^T)^{-1} x`.
pub(crate) fn cholesky_solve(l: &[f64], n: usize, x: &mut [f64]) {
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
}

/// Upper-triangular `R` (`min(rows, cols) x cols`) of a Householder QR.
fn householder_r(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let (rows, cols) = a.dim();
    let mut w = a.to_owned();
    let steps = rows.min(cols);
    for k in 0..steps {
        let mut norm = 0.0f64;
        for i in k..rows {
            norm = norm.hypot(w[[i, k]]);
        }
        if norm == 0.0 {
            continue;
        }
        let alpha = if w[[k, k]] > 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in column k below the diagonal
        let mut v: Vec<f64> = (k..rows).map(|i| w[[i, k]]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..cols {
            let dotv: f64 = v.iter().zip(k..rows).map(|(vi, i)| vi * w[[i, j]]).sum();
            let f = 2.0 * dotv / vnorm2;
            for (vi, i) in v.iter().zip(k..rows) {
                w[[i, j]] -= f * vi;
            }
        }
    }
    let mut r = Array2::<f64>::zeros((steps, cols));
    for i in 0..steps {
        for j in i..cols {
            r[[i, j]] = w[[i, j]];
        }
    }
    r
}

/// Singular values of a small dense matrix by one-sided Jacobi, descending.
pub fn singular_values(a: ArrayView2<'_, f64>) -> Vec<f64> {
    // orthogonalize the columns of the taller orientation
    let mut w = if a.nrows() >= a.ncols() {
        a.to_owned()
    } else {
        a.t().to_owned()
    };
    let (rows, cols) = w.dim();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..rows {
                    let (x, y) = (w[[i, p]], w[[i, q]]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                for i in 0..rows {
                    let (x, y) = (w[[i, p]], w[[i, q]]);
                    w[[i, p]] = c * x - s * y;
                    w[[i, q]] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..cols)
        .map(|j| w.column(j).iter().fold(0.0f64, |acc, &x| acc.hypot(x)))
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Singular values of `left * right^T` without forming the product.
pub fn factored_singular_values(
    left: ArrayView2<'_, f64>,
    right: ArrayView2<'_, f64>,
) -> Result<Vec<f64>> {
    if left.ncols() != right.ncols() {
        return Err(Error::Shape(format!(
            "factor column counts differ: {} vs {}",
            left.ncols(),
            right.ncols()
        )));
    }
    let rl = householder_r(left);
    let rr = householder_r(right);
    let core = rl.dot(&rr.t());
    Ok(singular_values(core.view()))
}

/// Nearest matrix (Frobenius) with spectrum in `[0, kappa]`.
pub fn box_project(w: ArrayView2<'_, f64>, kappa: f64) -> Result<WeightMatrix> {
    let eig = sym_eig(w)?;
    let clamped: Vec<f64> = eig.values.iter().map(|&l| l.clamp(0.0, kappa)).collect();
    let matrix = reconstruct(&eig.vectors, &clamped);
    Ok(WeightMatrix {
        matrix,
        eigen: Some(SymEig {
            vectors: eig.vectors,
            values: Array1::from(clamped),
        }),
    })
}

/// Sign applied to the linearized term of the prox-linear weight step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProxSign {
    /// `W + (1/L)(Gram + shift I)`, the literal form.
    AsPrinted,
    /// `W - (1/L)(Gram + shift I)`, a projected gradient step.
    #[default]
    Descent,
}

/// Parameters of one prox-linear weight step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxLinearStep {
    /// Multiple of the identity added to the Gram matrix.
    pub shift: f64,
    /// Inverse step length `L`.
    pub lipschitz: f64,
    /// Extrapolation weight on `W^k - W^{k-1}`.
    pub extrapolation: f64,
    pub kappa: f64,
    pub sign: ProxSign,
}

/// `proj_[0, kappa]( W^k +/- (1/L)(Gram + shift I) + omega (W^k - W^{k-1}) )`.
pub fn prox_linear_weight_update(
    w_k: &WeightMatrix,
    w_km1: &WeightMatrix,
    gram: &GramMatrix,
    step: ProxLinearStep,
) -> Result<WeightMatrix> {
    let r = w_k.dim();
    if w_km1.dim() != r || gram.dim() != r {
        return Err(Error::Shape(format!(
            "prox step: W^k is {r}x{r}, W^(k-1) is {0}x{0}, Gram is {1}x{1}",
            w_km1.dim(),
            gram.dim()
        )));
    }
    if !(step.lipschitz > 0.0) || !(step.extrapolation >= 0.0) {
        return Err(Error::Domain(format!(
            "prox step needs L > 0 and omega >= 0, got L = {}, omega = {}",
            step.lipschitz, step.extrapolation
        )));
    }
    let sign = match step.sign {
        ProxSign::AsPrinted => 1.0,
        ProxSign::Descent => -1.0,
    };
    let mut linear = gram.matrix().clone();
    for i in 0..r {
        linear[[i, i]] += step.shift;
    }
    let y = w_k.matrix() + &(linear * (sign / step.lipschitz))
        + &((w_k.matrix() - w_km1.matrix()) * step.extrapolation);
    box_project(y.view(), step.kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularizer::RegularizerSpec;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
        (&a + &a.t()) * 0.5
    }

    fn fro(a: &Array2<f64>) -> f64 {
        a.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = sym_eig(Array2::<f64>::eye(3).view()).unwrap();
        assert_eq!(e.values.to_vec(), vec![1.0, 1.0, 1.0]);
        let e = sym_eig(array![[1.0, 0.0], [0.0, 3.0]].view()).unwrap();
        assert_eq!(e.values.to_vec(), vec![3.0, 1.0]);
        assert_relative_eq!(e.vectors[[1, 0]].abs(), 1.0);
        assert_relative_eq!(e.vectors[[0, 1]].abs(), 1.0);
    }

    #[test]
    fn eig_random_reconstructs() {
        for (seed, n) in [(1u64, 8usize), (2, 1), (3, 2), (4, 13)] {
            let a = random_symmetric(n, seed);
            let e = sym_eig(a.view()).unwrap();
            let av = a.dot(&e.vectors);
            let vl = &e.vectors * &e.values.view().insert_axis(Axis(0));
            assert!(fro(&(&av - &vl)) <= 1e-10 * fro(&a));
            let vtv = e.vectors.t().dot(&e.vectors);
            assert!(fro(&(&vtv - &Array2::<f64>::eye(n))) <= 1e-12 * n as f64);
            for w in e.values.to_vec().windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let a = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(matches!(sym_eig(a.view()), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn weight_update_examples() {
        let g = GramMatrix::new(random_symmetric(4, 7).dot(&random_symmetric(4, 7))).unwrap();
        let w = weight_update(&RegularizerSpec::nuclear(), &g);
        assert_eq!(w.matrix(), &Array2::<f64>::eye(4));

        let ti = RegularizerSpec::trace_inverse(1.0).unwrap();
        let g = GramMatrix::new(array![[1.0, 0.0], [0.0, 0.0]]).unwrap();
        let w = weight_update(&ti, &g);
        assert_relative_eq!(w.matrix()[[0, 0]], 0.25, max_relative = 1e-14);
        assert_relative_eq!(w.matrix()[[1, 1]], 1.0, max_relative = 1e-14);
        assert!(w.matrix()[[0, 1]].abs() < 1e-15);
    }

    #[test]
    fn spd_solve_examples() {
        let b = array![[1.0, -2.0], [3.0, 4.5]];
        let x = spd_solve(Array2::<f64>::eye(2).view(), b.view()).unwrap();
        assert_eq!(x, b);
        let x = spd_solve(array![[2.0, 0.0], [0.0, 4.0]].view(), array![[2.0], [8.0]].view())
            .unwrap();
        assert_relative_eq!(x[[0, 0]], 1.0);
        assert_relative_eq!(x[[1, 0]], 2.0);
    }

    #[test]
    fn spd_solve_random_residual() {
        let m = random_symmetric(6, 11);
        let a = m.dot(&m.t()) + Array2::<f64>::eye(6) * 0.5;
        let b = random_symmetric(6, 12).slice(ndarray::s![.., ..3]).to_owned();
        let x = spd_solve(a.view(), b.view()).unwrap();
        assert!(fro(&(a.dot(&x) - &b)) <= 1e-10 * fro(&b));
    }

    #[test]
    fn spd_solve_names_pivot() {
        let a = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
        match spd_solve(a.view(), array![[1.0], [1.0], [1.0]].view()) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 2),
            other => panic!("expected pivot error, got {other:?}"),
        }
    }

    #[test]
    fn factored_sv_examples() {
        let i2 = Array2::<f64>::eye(2);
        let sv = factored_singular_values(i2.view(), i2.view()).unwrap();
        assert_relative_eq!(sv[0], 1.0, max_relative = 1e-15);
        assert_relative_eq!(sv[1], 1.0, max_relative = 1e-15);
        let sv = factored_singular_values(array![[2.0], [0.0]].view(), array![[1.0], [0.0]].view())
            .unwrap();
        assert_eq!(sv.len(), 1);
        assert_relative_eq!(sv[0], 2.0, max_relative = 1e-15);
        assert!(factored_singular_values(i2.view(), array![[1.0]].view()).is_err());
    }

    #[test]
    fn box_project_examples() {
        let w = box_project(array![[2.0, 0.0], [0.0, -1.0]].view(), 1.0).unwrap();
        assert_relative_eq!(w.matrix()[[0, 0]], 1.0);
        assert!(w.matrix()[[1, 1]].abs() < 1e-15);

        let inside = array![[0.5, 0.1], [0.1, 0.3]];
        let w = box_project(inside.view(), 1.0).unwrap();
        assert!(fro(&(w.matrix() - &inside)) < 1e-12);
    }

    #[test]
    fn prox_linear_examples() {
        let zero = WeightMatrix::new(Array2::zeros((2, 2))).unwrap();
        let g = GramMatrix::new(array![[3.0, 0.0], [0.0, 0.5]]).unwrap();
        let step = ProxLinearStep {
            shift: 0.0,
            lipschitz: 1.0,
            extrapolation: 0.0,
            kappa: f64::INFINITY,
            sign: ProxSign::AsPrinted,
        };
        let w = prox_linear_weight_update(&zero, &zero, &g, step).unwrap();
        assert!(fro(&(w.matrix() - g.matrix())) < 1e-14);

        // a huge L leaves W^k in place
        let wk = WeightMatrix::new(array![[0.4, 0.1], [0.1, 0.2]]).unwrap();
        let step = ProxLinearStep {
            lipschitz: 1e12,
            kappa: 1.0,
            ..step
        };
        let w = prox_linear_weight_update(&wk, &wk, &g, step).unwrap();
        assert!(fro(&(w.matrix() - wk.matrix())) < 1e-11);
    }
}
