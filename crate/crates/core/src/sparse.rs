//! Entrywise sampling operator and its adjoint, applied to factored matrices.
//!
//! An [`ObservationSet`] stores the observed entries in compressed-row order,
//! with a companion column view built once so that products against either
//! factor stream through contiguous index ranges. Nothing here ever forms the
//! full `m x n` product of the factors.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Which factor a gradient, adjoint, or update refers to.
///
/// `Left` is the `m x r` row factor, `Right` the `n x r` column factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// Observed entries of an `m x n` matrix, with no duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    m: usize,
    n: usize,
    row_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    // column view: entries of column j are csr positions col_perm[col_ptr[j]..col_ptr[j+1]]
    col_ptr: Vec<usize>,
    col_perm: Vec<usize>,
}

impl ObservationSet {
    /// Builds the set from `(row, col, value)` triples in any order.
    pub fn from_triplets(m: usize, n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        for (k, &(i, j, v)) in entries.iter().enumerate() {
            if i >= m || j >= n {
                return Err(Error::Observations(format!(
                    "entry {k} at ({i}, {j}) is outside a {m} x {n} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Observations(format!(
                    "entry {k} at ({i}, {j}) has non-finite value {v}"
                )));
            }
        }
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by_key(|&k| (entries[k].0, entries[k].1));
        for w in order.windows(2) {
            let (a, b) = (entries[w[0]], entries[w[1]]);
            if a.0 == b.0 && a.1 == b.1 {
                return Err(Error::Observations(format!(
                    "duplicate entry at ({}, {})",
                    a.0, a.1
                )));
            }
        }

        let mut row_ptr = vec![0usize; m + 1];
        for &(i, _, _) in entries {
            row_ptr[i + 1] += 1;
        }
        for i in 0..m {
            row_ptr[i + 1] += row_ptr[i];
        }
        let row_idx: Vec<usize> = order.iter().map(|&k| entries[k].0).collect();
        let col_idx: Vec<usize> = order.iter().map(|&k| entries[k].1).collect();
        let values: Vec<f64> = order.iter().map(|&k| entries[k].2).collect();
        let (col_ptr, col_perm) = build_column_view(n, &col_idx);

        Ok(ObservationSet {
            m,
            n,
            row_ptr,
            row_idx,
            col_idx,
            values,
            col_ptr,
            col_perm,
        })
    }

    /// Samples `matrix` at `mask`; the mask order is irrelevant.
    pub fn from_dense(matrix: ArrayView2<'_, f64>, mask: &[(usize, usize)]) -> Result<Self> {
        let (m, n) = matrix.dim();
        let mut entries = Vec::with_capacity(mask.len());
        for &(i, j) in mask {
            if i >= m || j >= n {
                return Err(Error::Observations(format!(
                    "mask index ({i}, {j}) is outside a {m} x {n} matrix"
                )));
            }
            entries.push((i, j, matrix[[i, j]]));
        }
        Self::from_triplets(m, n, &entries)
    }

    pub fn empty(m: usize, n: usize) -> Self {
        Self::from_triplets(m, n, &[]).expect("empty set is valid")
    }

    pub fn nrows(&self) -> usize {
        self.m
    }

    pub fn ncols(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Fraction of the `m x n` entries that are observed.
    pub fn density(&self) -> f64 {
        if self.m == 0 || self.n == 0 {
            0.0
        } else {
            self.len() as f64 / (self.m as f64 * self.n as f64)
        }
    }

    /// Observed values in canonical row-major order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates `(row, col, value)` in canonical row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.m).flat_map(move |i| {
            let range = self.row_ptr[i]..self.row_ptr[i + 1];
            range.map(move |k| (i, self.col_idx[k], self.values[k]))
        })
    }

    /// Column indices and values observed in row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    /// Canonical positions of the entries in column `j`, by increasing row.
    pub fn column_positions(&self, j: usize) -> &[usize] {
        &self.col_perm[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    /// Row index of the entry at canonical position `k`.
    pub fn row_index(&self, k: usize) -> usize {
        self.row_idx[k]
    }

    pub fn row_counts(&self) -> Vec<usize> {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn col_counts(&self) -> Vec<usize> {
        self.col_ptr.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Keeps the entries at the given canonical positions, same shape.
    pub fn select(&self, positions: &[usize]) -> Result<Self> {
        let entries: Vec<(usize, usize, f64)> = positions
            .iter()
            .map(|&k| (self.row_idx[k], self.col_idx[k], self.values[k]))
            .collect();
        Self::from_triplets(self.m, self.n, &entries)
    }

    /// Same index set with new values (in canonical order).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                self.len(),
                values.len()
            )));
        }
        Ok(ObservationSet {
            values,
            ..self.clone()
        })
    }

    fn check_factors(&self, left: &ArrayView2<'_, f64>, right: &ArrayView2<'_, f64>) -> Result<()> {
        if left.nrows() != self.m || right.nrows() != self.n || left.ncols() != right.ncols() {
            return Err(Error::Shape(format!(
                "factors {:?} and {:?} do not match a {} x {} observation set",
                left.dim(),
                right.dim(),
                self.m,
                self.n
            )));
        }
        Ok(())
    }
}

fn build_column_view(n: usize, col_idx: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut col_ptr = vec![0usize; n + 1];
    for &j in col_idx {
        col_ptr[j + 1] += 1;
    }
    for j in 0..n {
        col_ptr[j + 1] += col_ptr[j];
    }
    let mut next = col_ptr.clone();
    let mut col_perm = vec![0usize; col_idx.len()];
    for (k, &j) in col_idx.iter().enumerate() {
        col_perm[next[j]] = k;
        next[j] += 1;
    }
    (col_ptr, col_perm)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Entries of `left * right^T` on the observed index set, in canonical order.
pub fn observed_product(
    left: ArrayView2<'_, f64>,
    right: ArrayView2<'_, f64>,
    omega: &ObservationSet,
) -> Result<Vec<f64>> {
    omega.check_factors(&left, &right)?;
    let left = left.as_standard_layout();
    let right = right.as_standard_layout();
    let r = left.ncols();
    let (ls, rs) = (
        left.as_slice().expect("standard layout"),
        right.as_slice().expect("standard layout"),
    );
    let mut out = Vec::with_capacity(omega.len());
    for i in 0..omega.m {
        let li = &ls[i * r..(i + 1) * r];
        let (cols, _) = omega.row(i);
        out.extend(cols.iter().map(|&j| dot(li, &rs[j * r..(j + 1) * r])));
    }
    Ok(out)
}

/// Residual `A(left * right^T) - b` on the observed entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseResidual {
    values: Vec<f64>,
    sumsq: f64,
}

impl SparseResidual {
    pub fn from_values(values: Vec<f64>) -> Self {
        let sumsq = values.iter().map(|v| v * v).sum();
        SparseResidual { values, sumsq }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sumsq(&self) -> f64 {
        self.sumsq
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn residual(
    left: ArrayView2<'_, f64>,
    right: ArrayView2<'_, f64>,
    obs: &ObservationSet,
) -> Result<SparseResidual> {
    let mut values = observed_product(left, right, obs)?;
    for (r, b) in values.iter_mut().zip(obs.values()) {
        *r -= b;
    }
    Ok(SparseResidual::from_values(values))
}

/// `A*(S) * factor` for `Side::Left` (an `m x r` result, `factor` is the
/// right factor) or `A*(S)^T * factor` for `Side::Right` (`n x r`, `factor`
/// is the left factor).
pub fn adjoint_apply(
    s: &[f64],
    omega: &ObservationSet,
    factor: ArrayView2<'_, f64>,
    side: Side,
) -> Result<Array2<f64>> {
    if s.len() != omega.len() {
        return Err(Error::Shape(format!(
            "residual has {} entries, observation set has {}",
            s.len(),
            omega.len()
        )));
    }
    let (expected_rows, out_rows) = match side {
        Side::Left => (omega.n, omega.m),
        Side::Right => (omega.m, omega.n),
    };
    if factor.nrows() != expected_rows {
        return Err(Error::Shape(format!(
            "{side:?} adjoint needs a factor with {expected_rows} rows, got {}",
            factor.nrows()
        )));
    }
    let factor = factor.as_standard_layout();
    let r = factor.ncols();
    let fs = factor.as_slice().expect("standard layout");
    let mut out = Array2::<f64>::zeros((out_rows, r));
    let os = out.as_slice_mut().expect("fresh array");
    match side {
        Side::Left => {
            for i in 0..omega.m {
                let acc = &mut os[i * r..(i + 1) * r];
                for k in omega.row_ptr[i]..omega.row_ptr[i + 1] {
                    let j = omega.col_idx[k];
                    axpy(s[k], &fs[j * r..(j + 1) * r], acc);
                }
            }
        }
        Side::Right => {
            for j in 0..omega.n {
                let acc = &mut os[j * r..(j + 1) * r];
                for &k in omega.column_positions(j) {
                    let i = omega.row_idx[k];
                    axpy(s[k], &fs[i * r..(i + 1) * r], acc);
                }
            }
        }
    }
    Ok(out)
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `sqrt(sum b^2)` over the observed values.
pub fn frobenius_norm_observed(obs: &ObservationSet) -> f64 {
    obs.values().iter().map(|v| v * v).sum::<f64>().sqrt()
}
