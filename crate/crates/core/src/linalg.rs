//! Dense symmetric linear algebra: means, covariances, symmetric
//! eigendecomposition and subspace projection.
//!
//! Everything here is `f64` and allocation-light. Matrices are small enough
//! (at most 784 x 784 per class) that a dense kernel is the right tool.

use crate::error::{check_dim, Error, Result};

/// A symmetric matrix stored as its packed upper triangle.
///
/// `get(i, j)` and `get(j, i)` read the same cell, so symmetry holds by
/// construction rather than by convention.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    packed: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            packed: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Builds a matrix from `f(i, j)` evaluated on the upper triangle only.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let idx = m.index(i, j);
                m.packed[idx] = f(i, j);
            }
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self::from_fn(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Packed offset of `(i, j)`; row `i` of the upper triangle starts at
    /// `i*dim - i*(i-1)/2`.
    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * self.dim - i * i.saturating_sub(1) / 2 + (j - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[self.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let idx = self.index(i, j);
        self.packed[idx] = value;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.packed.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                let v = self.get(i, j);
                sum += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        sum.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.packed.iter().all(|v| v.is_finite())
    }

    /// Adds `x xᵀ`, skipping zero coordinates. Zero entries contribute an
    /// exact `0.0`, so the result is identical to the dense update.
    pub fn add_outer(&mut self, x: &[f64]) -> Result<()> {
        check_dim(self.dim, x.len())?;
        let nonzero: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
        for (a, &i) in nonzero.iter().enumerate() {
            let xi = x[i];
            let base = self.index(i, i) - i;
            for &j in &nonzero[a..] {
                self.packed[base + j] += xi * x[j];
            }
        }
        Ok(())
    }

    /// Entrywise `self += other`.
    pub fn add_assign(&mut self, other: &SymMatrix) -> Result<()> {
        check_dim(self.dim, other.dim)?;
        for (a, b) in self.packed.iter_mut().zip(&other.packed) {
            *a += b;
        }
        Ok(())
    }

    /// Entrywise `self * factor`.
    pub fn scaled(&self, factor: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            packed: self.packed.iter().map(|v| v * factor).collect(),
        }
    }

    /// Adds `factor * x xᵀ` densely.
    pub fn add_scaled_outer(&mut self, x: &[f64], factor: f64) -> Result<()> {
        check_dim(self.dim, x.len())?;
        for i in 0..self.dim {
            let base = self.index(i, i) - i;
            let fi = factor * x[i];
            for j in i..self.dim {
                self.packed[base + j] += fi * x[j];
            }
        }
        Ok(())
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.get(i, j);
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }

    pub(crate) fn packed(&self) -> &[f64] {
        &self.packed
    }
}

/// Eigenvalues sorted descending with matching unit eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    dim: usize,
    eigenvalues: Vec<f64>,
    /// Column-major: eigenvector `j` is `vectors[j*dim .. (j+1)*dim]`.
    vectors: Vec<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.dim..(j + 1) * self.dim]
    }

    /// Sets negative eigenvalues to zero. Meant for covariance inputs, which
    /// are PSD in exact arithmetic.
    pub fn clamp_nonnegative(&mut self) {
        for v in &mut self.eigenvalues {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    /// The leading `k` eigenvectors as a basis.
    pub fn leading_basis(&self, k: usize) -> Basis {
        let k = k.min(self.dim);
        Basis {
            dim: self.dim,
            rank: k,
            columns: self.vectors[..k * self.dim].to_vec(),
        }
    }

    pub fn full_basis(&self) -> Basis {
        self.leading_basis(self.dim)
    }

    /// `Q diag(λ) Qᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.dim;
        let mut m = SymMatrix::zeros(n);
        for j in 0..n {
            m.add_scaled_outer(self.eigenvector(j), self.eigenvalues[j])
                .expect("dimensions agree");
        }
        m
    }

    fn from_rows(dim: usize, mut eigenvalues: Vec<f64>, rows: Vec<f64>) -> Self {
        // Stable sort keeps the solver's order among equal eigenvalues.
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
        let mut vectors = Vec::with_capacity(dim * dim);
        for &j in &order {
            let start = vectors.len();
            vectors.extend_from_slice(&rows[j * dim..(j + 1) * dim]);
            normalize_sign(&mut vectors[start..]);
        }
        eigenvalues = order.iter().map(|&j| eigenvalues[j]).collect();
        Self {
            dim,
            eigenvalues,
            vectors,
        }
    }
}

/// Flips `v` so its entry of largest magnitude (lowest index on ties) is
/// non-negative.
fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// `k` orthonormal columns of length `dim`, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    dim: usize,
    rank: usize,
    columns: Vec<f64>,
}

impl Basis {
    pub fn from_columns(dim: usize, rank: usize, columns: Vec<f64>) -> Result<Self> {
        if dim == 0 || rank == 0 {
            return Err(Error::EmptyInput);
        }
        check_dim(dim * rank, columns.len())?;
        Ok(Self { dim, rank, columns })
    }

    /// The first `rank` columns of the `dim x dim` identity.
    pub fn identity_columns(dim: usize, rank: usize) -> Self {
        let mut columns = vec![0.0; dim * rank];
        for j in 0..rank {
            columns[j * dim + j] = 1.0;
        }
        Self { dim, rank, columns }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j * self.dim..(j + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.columns
    }

    /// Largest deviation of `QᵀQ` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rank {
            for j in i..self.rank {
                let d = dot(self.column(i), self.column(j));
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((d - target).abs());
            }
        }
        worst
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Entrywise arithmetic mean.
pub fn mean<V: AsRef<[f64]>>(samples: &[V]) -> Result<Vec<f64>> {
    let first = samples.first().ok_or(Error::EmptyInput)?.as_ref();
    let dim = first.len();
    if dim == 0 {
        return Err(Error::EmptyInput);
    }
    let mut sum = vec![0.0; dim];
    for s in samples {
        let s = s.as_ref();
        check_dim(dim, s.len())?;
        for (acc, v) in sum.iter_mut().zip(s) {
            *acc += v;
        }
    }
    let n = samples.len() as f64;
    Ok(sum.into_iter().map(|v| v / n).collect())
}

/// Population covariance `(1/N) Σ (x - μ)(x - μ)ᵀ`.
pub fn covariance<V: AsRef<[f64]>>(samples: &[V], mean: &[f64]) -> Result<SymMatrix> {
    if samples.is_empty() || mean.is_empty() {
        return Err(Error::EmptyInput);
    }
    let dim = mean.len();
    let mut scatter = SymMatrix::zeros(dim);
    let mut centered = vec![0.0; dim];
    for s in samples {
        let s = s.as_ref();
        check_dim(dim, s.len())?;
        for ((c, x), m) in centered.iter_mut().zip(s).zip(mean) {
            *c = x - m;
        }
        scatter.add_scaled_outer(&centered, 1.0)?;
    }
    Ok(scatter.scaled(1.0 / samples.len() as f64))
}

/// Coordinates of `x` in `basis`: the inner products `qⱼᵀx`.
pub fn project(basis: &Basis, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(basis.dim, x.len())?;
    Ok((0..basis.rank).map(|j| dot(basis.column(j), x)).collect())
}

/// `Qᵀx` using only the nonzero coordinates of `x`. For sparse inputs
/// such as digit images this skips most of the work; the sums run in the
/// same index order as [`project`] minus exact zero terms.
pub fn project_sparse(basis: &Basis, x: &[f64], out: &mut Vec<f64>) -> Result<()> {
    check_dim(basis.dim, x.len())?;
    let nonzero: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
    out.clear();
    out.extend((0..basis.rank).map(|j| {
        let col = basis.column(j);
        nonzero.iter().map(|&i| col[i] * x[i]).sum::<f64>()
    }));
    Ok(())
}

/// Which symmetric eigensolver to run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenSolver {
    /// Householder tridiagonalization + implicit QL.
    #[default]
    TridiagonalQl,
    /// Cyclic Jacobi rotations.
    Jacobi,
}

impl EigenSolver {
    pub fn decompose(self, a: &SymMatrix) -> Result<EigenDecomposition> {
        match self {
            EigenSolver::TridiagonalQl => eig_sym(a),
            EigenSolver::Jacobi => eig_sym_jacobi(a),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EigenSolver::TridiagonalQl => "tridiagonal-ql",
            EigenSolver::Jacobi => "jacobi",
        }
    }
}

impl std::str::FromStr for EigenSolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tridiagonal-ql" | "ql" => Ok(EigenSolver::TridiagonalQl),
            "jacobi" => Ok(EigenSolver::Jacobi),
            other => Err(Error::InvalidConfig(format!("unknown eigensolver {other:?}"))),
        }
    }
}

/// Off-diagonal tolerance, relative to the Frobenius norm of the input.
pub const JACOBI_TOLERANCE: f64 = 1e-10;
/// Full cyclic sweeps before giving up.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Implicit QL iterations allowed per eigenvalue.
pub const QL_MAX_ITERATIONS: usize = 64;

/// Symmetric eigendecomposition.
///
/// Householder tridiagonalization followed by implicit QL. See
/// [`eig_sym_jacobi`] for the rotation-based solver; both produce the same
/// ordering and sign convention.
pub fn eig_sym(a: &SymMatrix) -> Result<EigenDecomposition> {
    validate(a)?;
    let n = a.dim();
    let mut v = a.to_dense();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    // Rows of `w` are eigenvectors so QL rotations touch contiguous memory.
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            w[j * n + i] = v[i * n + j];
        }
    }
    drop(v);
    tridiagonal_ql(n, &mut d, &mut e, &mut w)?;
    Ok(EigenDecomposition::from_rows(n, d, w))
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Converges when the off-diagonal Frobenius norm drops below
/// `JACOBI_TOLERANCE * ‖A‖_F`, or fails after `JACOBI_MAX_SWEEPS` sweeps.
pub fn eig_sym_jacobi(a: &SymMatrix) -> Result<EigenDecomposition> {
    validate(a)?;
    let n = a.dim();
    let mut m = a.to_dense();
    // Rows of `v` accumulate the eigenvectors.
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let tol = JACOBI_TOLERANCE * a.frobenius_norm();
    // Entries below this can be skipped without breaking the global bound.
    let skip = tol / n as f64;

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = off_diagonal_norm(n, &m);
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() <= skip {
                    continue;
                }
                rotate(n, &mut m, &mut v, p, q);
            }
        }
    }
    if !converged && off_diagonal_norm(n, &m) > tol {
        return Err(Error::ConvergenceFailure {
            iterations: JACOBI_MAX_SWEEPS,
        });
    }
    let eigenvalues = (0..n).map(|i| m[i * n + i]).collect();
    Ok(EigenDecomposition::from_rows(n, eigenvalues, v))
}

fn validate(a: &SymMatrix) -> Result<()> {
    if a.dim() == 0 {
        return Err(Error::EmptyInput);
    }
    if !a.is_finite() {
        return Err(Error::InvalidConfig("matrix has non-finite entries".into()));
    }
    Ok(())
}

fn off_diagonal_norm(n: usize, m: &[f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += 2.0 * m[i * n + j] * m[i * n + j];
        }
    }
    sum.sqrt()
}

/// Annihilates `m[p][q]` with `m ← JᵀmJ`, `v ← Jᵀv` (rows of `v`).
fn rotate(n: usize, m: &mut [f64], v: &mut [f64], p: usize, q: usize) {
    let app = m[p * n + p];
    let aqq = m[q * n + q];
    let apq = m[p * n + q];
    let tau = (aqq - app) / (2.0 * apq);
    let t = if tau >= 0.0 {
        1.0 / (tau + tau.hypot(1.0))
    } else {
        -1.0 / (-tau + tau.hypot(1.0))
    };
    let c = 1.0 / t.hypot(1.0);
    let s = t * c;

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m[p * n + k];
        let akq = m[q * n + k];
        let new_p = c * akp - s * akq;
        let new_q = s * akp + c * akq;
        m[p * n + k] = new_p;
        m[q * n + k] = new_q;
        m[k * n + p] = new_p;
        m[k * n + q] = new_q;
    }
    m[p * n + p] = app - t * apq;
    m[q * n + q] = aqq + t * apq;
    m[p * n + q] = 0.0;
    m[q * n + p] = 0.0;

    let (head, tail) = v.split_at_mut(q * n);
    let row_p = &mut head[p * n..(p + 1) * n];
    let row_q = &mut tail[..n];
    for (vp, vq) in row_p.iter_mut().zip(row_q.iter_mut()) {
        let a = *vp;
        let b = *vq;
        *vp = c * a - s * b;
        *vq = s * a + c * b;
    }
}

/// Householder reduction of the dense symmetric `v` (row-major) to
/// tridiagonal form. On return `d` holds the diagonal, `e[1..]` the
/// subdiagonal, and `v` the accumulated orthogonal transform.
fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
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
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in j + 1..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on the tridiagonal `(d, e)`, rotating the rows of `w`.
fn tridiagonal_ql(n: usize, d: &mut [f64], e: &mut [f64], w: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
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
        // e[n-1] is zero, so the scan always stops inside the matrix.
        let m = m.min(n - 1);
        if m > l {
            let mut iterations = 0;
            loop {
                iterations += 1;
                if iterations > QL_MAX_ITERATIONS {
                    return Err(Error::ConvergenceFailure { iterations });
                }
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
                for di in d.iter_mut().take(n).skip(l + 2) {
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

                    let (head, tail) = w.split_at_mut((i + 1) * n);
                    let row_i = &mut head[i * n..];
                    let row_next = &mut tail[..n];
                    for (a, b) in row_i.iter_mut().zip(row_next.iter_mut()) {
                        let hk = *b;
                        *b = s * *a + c * hk;
                        *a = c * *a - s * hk;
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
    Ok(())
}
