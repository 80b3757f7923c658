//! Dense row-major matrices and the thin SVD used by guidance filtering and
//! score-geometry analysis.
//!
//! The SVD works on the Gram matrix of the smaller side: for an n x d matrix
//! with n <= d it eigendecomposes A Aᵀ (n x n) and recovers right singular
//! vectors as vᵢ = Aᵀwᵢ / σᵢ; taller matrices are transposed first and the
//! factor roles swapped back. Two-row inputs, the shape the guidance filter
//! produces on every sampler step, take a closed-form 2 x 2 path instead of
//! the iterative Jacobi solver.
//!
//! Conventions shared by both paths:
//! * singular values sorted descending, ties keeping insertion order;
//! * each right singular vector's first nonzero entry is nonnegative, with the
//!   paired left vector flipped alongside;
//! * singular values at or below max(n, d) * eps * σ₁ are treated as rank
//!   deficient and their right vectors replaced by a deterministic
//!   Gram-Schmidt completion of the orthonormal basis.

use crate::error::{CoreError, Result};

/// Dense row-major matrix of finite f64 entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data. Errors when the element count does
    /// not match the shape or any entry is non-finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(CoreError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(CoreError::InvalidInput(format!(
                "matrix entries must be finite, found {bad}"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(CoreError::EmptyInput("matrix needs at least one row".into()));
        }
        let cols = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(CoreError::DimensionMismatch(format!(
                "ragged rows: expected {cols} columns, got {}",
                bad.len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub(crate) fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Row `r` as a contiguous slice.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Row-major backing storage.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable backing storage for in-place parameter updates. Callers must
    /// keep entries finite.
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transposed(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(CoreError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.data[k * other.cols + c];
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Thin SVD A = W diag(σ) Vᵀ with k = min(n, d) factors.
///
/// `left_vectors` is n x k with factor i in column i; `right_vectors` is k x d
/// with vᵢᵀ in row i.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub singular_values: Vec<f64>,
    pub left_vectors: Matrix,
    pub right_vectors: Matrix,
}

impl SvdResult {
    pub fn right_vector(&self, i: usize) -> &[f64] {
        self.right_vectors.row(i)
    }

    /// Rebuilds W diag(σ) Vᵀ, for conformance checks.
    pub fn reconstruct(&self) -> Matrix {
        let k = self.singular_values.len();
        let n = self.left_vectors.rows();
        let d = self.right_vectors.cols();
        let mut out = Matrix::zeros(n, d);
        for i in 0..k {
            let s = self.singular_values[i];
            if s == 0.0 {
                continue;
            }
            for r in 0..n {
                let w = s * self.left_vectors.get(r, i);
                let row = out.row_mut(r);
                let v = self.right_vectors.row(i);
                for c in 0..d {
                    row[c] += w * v[c];
                }
            }
        }
        out
    }
}

/// Thin SVD. Dispatches two-row inputs to the closed-form path and everything
/// else to the cyclic Jacobi path; matrices with more rows than columns are
/// transposed internally.
pub fn svd_thin(a: &Matrix) -> Result<SvdResult> {
    svd_dispatch(a, false)
}

/// Thin SVD forced through the iterative Jacobi path even for two-row inputs.
/// Exists so the fast path can be cross-checked against the general one.
pub fn svd_thin_jacobi(a: &Matrix) -> Result<SvdResult> {
    svd_dispatch(a, true)
}

fn svd_dispatch(a: &Matrix, force_jacobi: bool) -> Result<SvdResult> {
    if a.rows == 0 || a.cols == 0 {
        return Err(CoreError::EmptyInput("svd needs at least one row and column".into()));
    }
    if a.data.iter().any(|x| !x.is_finite()) {
        return Err(CoreError::InvalidInput("svd input contains non-finite entries".into()));
    }
    let mut res = if a.rows <= a.cols {
        svd_wide(a, force_jacobi)
    } else {
        let t = a.transposed();
        let inner = svd_wide(&t, force_jacobi);
        SvdResult {
            singular_values: inner.singular_values,
            left_vectors: inner.right_vectors.transposed(),
            right_vectors: inner.left_vectors.transposed(),
        }
    };
    fix_signs(&mut res);
    Ok(res)
}

/// SVD of a matrix with rows <= cols.
fn svd_wide(a: &Matrix, force_jacobi: bool) -> SvdResult {
    if a.rows == 2 && !force_jacobi {
        return svd_two_rows(a);
    }
    let n = a.rows;
    let d = a.cols;
    let mut gram = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let g = dot(a.row(i), a.row(j));
            gram.set(i, j, g);
            gram.set(j, i, g);
        }
    }
    let (vals, w) = jacobi_eig(&gram);
    let sigma: Vec<f64> = vals.iter().map(|l| l.max(0.0).sqrt()).collect();
    let mut right = Matrix::zeros(n, d);
    let thresh = rank_threshold(n, d, sigma[0]);
    let mut deficient = Vec::new();
    for i in 0..n {
        if sigma[i] > thresh {
            let row = right.row_mut(i);
            for l in 0..n {
                let wl = w.get(l, i) / sigma[i];
                if wl == 0.0 {
                    continue;
                }
                let al = a.row(l);
                for c in 0..d {
                    row[c] += wl * al[c];
                }
            }
            normalize(right.row_mut(i));
        } else {
            deficient.push(i);
        }
    }
    complete_basis(&mut right, &deficient);
    SvdResult { singular_values: sigma, left_vectors: w, right_vectors: right }
}

/// Closed-form SVD of a 2 x d matrix via its 2 x 2 Gram eigenproblem.
fn svd_two_rows(a: &Matrix) -> SvdResult {
    let d = a.cols;
    let (r0, r1) = (a.row(0), a.row(1));
    let g00 = dot(r0, r0);
    let g01 = dot(r0, r1);
    let g11 = dot(r1, r1);
    let (vals, w) = sym_eig_2x2(g00, g01, g11);
    let sigma = [vals[0].max(0.0).sqrt(), vals[1].max(0.0).sqrt()];
    let thresh = rank_threshold(2, d, sigma[0]);
    let mut right = Matrix::zeros(2, d);
    let mut deficient = Vec::new();
    for i in 0..2 {
        if sigma[i] > thresh {
            let row = right.row_mut(i);
            let (c0, c1) = (w[i][0] / sigma[i], w[i][1] / sigma[i]);
            for c in 0..d {
                row[c] = c0 * r0[c] + c1 * r1[c];
            }
            normalize(row);
        } else {
            deficient.push(i);
        }
    }
    complete_basis(&mut right, &deficient);
    let left = Matrix::new(2, 2, vec![w[0][0], w[1][0], w[0][1], w[1][1]])
        .expect("eigenvector entries are finite");
    SvdResult { singular_values: sigma.to_vec(), left_vectors: left, right_vectors: right }
}

fn rank_threshold(n: usize, d: usize, sigma_max: f64) -> f64 {
    n.max(d) as f64 * f64::EPSILON * sigma_max
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

/// Eigenpairs of the symmetric matrix [[a, b], [b, c]], eigenvalues descending,
/// unit eigenvectors as rows. The smaller eigenvalue comes from det / λ₁ to
/// avoid the cancellation in (a + c - disc) / 2.
fn sym_eig_2x2(a: f64, b: f64, c: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let disc = f64::hypot(a - c, 2.0 * b);
    let l1 = 0.5 * ((a + c) + disc);
    let l2 = if l1 != 0.0 { (a * c - b * b) / l1 } else { 0.0 };
    let cand_a = [b, l1 - a];
    let cand_b = [l1 - c, b];
    let na = cand_a[0] * cand_a[0] + cand_a[1] * cand_a[1];
    let nb = cand_b[0] * cand_b[0] + cand_b[1] * cand_b[1];
    let mut w1 = if na >= nb { cand_a } else { cand_b };
    if na == 0.0 && nb == 0.0 {
        w1 = [1.0, 0.0];
    }
    let n1 = f64::hypot(w1[0], w1[1]);
    w1 = [w1[0] / n1, w1[1] / n1];
    let w2 = [-w1[1], w1[0]];
    ([l1, l2], [w1, w2])
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns eigenvalues
/// sorted descending (ties keep insertion order) and eigenvectors as the
/// columns of the returned matrix. Terminates when the off-diagonal Frobenius
/// norm falls to 1e-14 of the matrix norm, capped at 50 sweeps.
fn jacobi_eig(g: &Matrix) -> (Vec<f64>, Matrix) {
    let n = g.rows();
    let mut m = g.clone();
    let mut q = Matrix::identity(n);
    let fro = g.frobenius_norm();
    if fro > 0.0 {
        let tol = 1e-14 * fro;
        for _sweep in 0..50 {
            let mut off = 0.0;
            for p in 0..n {
                for r in p + 1..n {
                    off += 2.0 * m.get(p, r) * m.get(p, r);
                }
            }
            if off.sqrt() <= tol {
                break;
            }
            for p in 0..n {
                for r in p + 1..n {
                    let apq = m.get(p, r);
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (m.get(r, r) - m.get(p, p)) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let cos = 1.0 / (t * t + 1.0).sqrt();
                    let sin = t * cos;
                    let tau = sin / (1.0 + cos);
                    let app = m.get(p, p);
                    let arr = m.get(r, r);
                    m.set(p, p, app - t * apq);
                    m.set(r, r, arr + t * apq);
                    m.set(p, r, 0.0);
                    m.set(r, p, 0.0);
                    for i in 0..n {
                        if i == p || i == r {
                            continue;
                        }
                        let aip = m.get(i, p);
                        let air = m.get(i, r);
                        let nip = aip - sin * (air + tau * aip);
                        let nir = air + sin * (aip - tau * air);
                        m.set(i, p, nip);
                        m.set(p, i, nip);
                        m.set(i, r, nir);
                        m.set(r, i, nir);
                    }
                    for i in 0..n {
                        let qip = q.get(i, p);
                        let qir = q.get(i, r);
                        q.set(i, p, qip - sin * (qir + tau * qip));
                        q.set(i, r, qir + sin * (qip - tau * qir));
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).expect("finite eigenvalues"));
    let vals: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for i in 0..n {
            vecs.set(i, new, q.get(i, old));
        }
    }
    (vals, vecs)
}

/// Replaces the rows listed in `deficient` with unit vectors orthogonal to all
/// other rows, chosen deterministically from the standard basis (best residual
/// wins, lowest index on ties).
fn complete_basis(right: &mut Matrix, deficient: &[usize]) {
    let d = right.cols();
    let k = right.rows();
    for &i in deficient {
        let mut best: Option<(usize, f64)> = None;
        for cand in 0..d {
            // Deficient rows not yet filled are all-zero and contribute nothing.
            let mut res_sq = 1.0;
            for r in 0..k {
                if r == i {
                    continue;
                }
                let proj = right.row(r)[cand];
                res_sq -= proj * proj;
            }
            if best.map_or(true, |(_, b)| res_sq > b) {
                best = Some((cand, res_sq));
            }
        }
        let cand = best.expect("ambient dimension is nonzero").0;
        let mut v = vec![0.0; d];
        v[cand] = 1.0;
        for r in 0..k {
            if r == i {
                continue;
            }
            let row: Vec<f64> = right.row(r).to_vec();
            let proj = dot(&v, &row);
            if proj != 0.0 {
                for c in 0..d {
                    v[c] -= proj * row[c];
                }
            }
        }
        normalize(&mut v);
        right.row_mut(i).copy_from_slice(&v);
    }
}

/// Flips each right vector so its first nonzero entry is nonnegative, flipping
/// the paired left vector to keep the product unchanged.
fn fix_signs(res: &mut SvdResult) {
    let k = res.singular_values.len();
    for i in 0..k {
        let lead = res.right_vectors.row(i).iter().find(|x| **x != 0.0).copied();
        if let Some(l) = lead {
            if l < 0.0 {
                for x in res.right_vectors.row_mut(i) {
                    *x = -*x;
                }
                for r in 0..res.left_vectors.rows() {
                    let v = res.left_vectors.get(r, i);
                    res.left_vectors.set(r, i, -v);
                }
            }
        }
    }
}

/// Cosine similarity of two equal-length vectors, clamped to [-1, 1].
/// Errors when either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CoreError::DimensionMismatch(format!(
            "cosine similarity over lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(CoreError::UndefinedSimilarity);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Symmetric square root of a 2 x 2 positive semidefinite matrix.
///
/// The input must be symmetric to 1e-12; eigenvalues down to -1e-12 are
/// clamped to zero, anything lower is rejected.
pub fn spd_sqrt_2x2(m: &Matrix) -> Result<Matrix> {
    if m.rows() != 2 || m.cols() != 2 {
        return Err(CoreError::DimensionMismatch(format!(
            "spd_sqrt_2x2 needs a 2x2 matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if (m.get(0, 1) - m.get(1, 0)).abs() > 1e-12 {
        return Err(CoreError::InvalidInput(format!(
            "matrix is not symmetric: off-diagonals {} vs {}",
            m.get(0, 1),
            m.get(1, 0)
        )));
    }
    let b = 0.5 * (m.get(0, 1) + m.get(1, 0));
    let (vals, w) = sym_eig_2x2(m.get(0, 0), b, m.get(1, 1));
    if vals[1] < -1e-12 {
        return Err(CoreError::InvalidInput(format!(
            "matrix is not positive semidefinite: eigenvalue {}",
            vals[1]
        )));
    }
    let s = [vals[0].max(0.0).sqrt(), vals[1].max(0.0).sqrt()];
    let mut out = Matrix::zeros(2, 2);
    for (si, wi) in s.iter().zip(w.iter()) {
        for r in 0..2 {
            for c in 0..2 {
                let v = out.get(r, c) + si * wi[r] * wi[c];
                out.set(r, c, v);
            }
        }
    }
    Ok(out)
}
