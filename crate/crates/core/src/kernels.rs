//! Gram matrices (linear and RBF) and an explicit kernel-space embedding.
//!
//! The embedding ([`npt_embed`]) eigendecomposes the centered training gram and
//! represents each sample by its coordinates in the retained eigenbasis, so
//! solvers that only understand coordinate vectors run unchanged in kernel
//! space. `Φᵀ Φ` recovers the centered gram, which is the property all
//! downstream users rely on.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel function selector.
///
/// RBF uses `k(x, y) = exp(-‖x − y‖² / (2σ²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    Rbf { sigma: f64 },
}

impl KernelSpec {
    pub fn rbf(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Parameter(format!("rbf sigma must be positive, got {sigma}")));
        }
        Ok(KernelSpec::Rbf { sigma })
    }

    fn validate(&self) -> Result<()> {
        if let KernelSpec::Rbf { sigma } = self {
            if !(*sigma > 0.0) || !sigma.is_finite() {
                return Err(Error::Parameter(format!(
                    "rbf sigma must be positive, got {sigma}"
                )));
            }
        }
        Ok(())
    }
}

/// Kernel block between the columns of `a` (D×N) and `b` (D×M), as N×M.
///
/// Passing the same matrix for both arguments yields an exactly symmetric
/// result with an exact unit diagonal in the RBF case.
pub fn gram_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if a.nrows() != b.nrows() {
        return Err(Error::Shape(format!(
            "kernel inputs have {} vs {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) || b.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite entries in kernel input".into()));
    }
    let cross = a.transpose() * b;
    match spec {
        KernelSpec::Linear => Ok(cross),
        KernelSpec::Rbf { sigma } => {
            let self_gram = std::ptr::eq(a, b);
            // Taking the squared norms from the cross product itself makes the
            // self-gram diagonal distance exactly zero.
            let norms_a: Vec<f64> = if self_gram {
                (0..a.ncols()).map(|i| cross[(i, i)]).collect()
            } else {
                (0..a.ncols()).map(|i| a.column(i).norm_squared()).collect()
            };
            let norms_b: Vec<f64> = if self_gram {
                norms_a.clone()
            } else {
                (0..b.ncols()).map(|j| b.column(j).norm_squared()).collect()
            };
            let denom = 2.0 * sigma * sigma;
            let mut out = DMatrix::zeros(a.ncols(), b.ncols());
            for i in 0..a.ncols() {
                for j in 0..b.ncols() {
                    let d2 = (norms_a[i] + norms_b[j] - 2.0 * cross[(i, j)]).max(0.0);
                    out[(i, j)] = (-d2 / denom).exp();
                }
            }
            if self_gram {
                for i in 0..out.nrows() {
                    for j in (i + 1)..out.ncols() {
                        out[(j, i)] = out[(i, j)];
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Kernel values between the columns of `a` and a single point `z`, as a vector.
pub fn kernel_vector(a: &DMatrix<f64>, z: &DVector<f64>, spec: &KernelSpec) -> Result<DVector<f64>> {
    let zc = DMatrix::from_column_slice(z.len(), 1, z.as_slice());
    Ok(gram_matrix(a, &zc, spec)?.column(0).into_owned())
}

/// Explicit embedding of a training gram: centering statistics plus the
/// retained eigensystem of the centered kernel.
#[derive(Debug, Clone)]
pub struct NptEmbedding {
    /// Retained eigenvectors of the centered gram, N×m, by descending eigenvalue.
    eigvecs: DMatrix<f64>,
    /// Retained eigenvalues, all strictly positive.
    eigvals: DVector<f64>,
    /// Row means of the uncentered training gram.
    row_means: DVector<f64>,
    grand_mean: f64,
    /// Embedded training columns, m×N; Φᵀ Φ = centered gram.
    train_embedding: DMatrix<f64>,
}

impl NptEmbedding {
    pub fn rank(&self) -> usize {
        self.eigvals.len()
    }

    pub fn n_train(&self) -> usize {
        self.row_means.len()
    }

    /// Embedded training columns Φ (rank × N).
    pub fn embedding(&self) -> &DMatrix<f64> {
        &self.train_embedding
    }

    pub fn eigvals(&self) -> &DVector<f64> {
        &self.eigvals
    }

    pub fn eigvecs(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }

    pub fn row_means(&self) -> &DVector<f64> {
        &self.row_means
    }

    pub fn grand_mean(&self) -> f64 {
        self.grand_mean
    }

    /// Rebuilds an embedding from stored parts (model deserialization).
    pub fn from_parts(
        eigvecs: DMatrix<f64>,
        eigvals: DVector<f64>,
        row_means: DVector<f64>,
        grand_mean: f64,
    ) -> Result<Self> {
        if eigvecs.ncols() != eigvals.len() || eigvecs.nrows() != row_means.len() {
            return Err(Error::Shape(format!(
                "inconsistent embedding parts: eigvecs {}x{}, {} eigvals, {} row means",
                eigvecs.nrows(),
                eigvecs.ncols(),
                eigvals.len(),
                row_means.len()
            )));
        }
        if eigvals.iter().any(|&l| l <= 0.0) {
            return Err(Error::DegenerateKernel(
                "retained eigenvalues must be strictly positive".into(),
            ));
        }
        let mut train_embedding = eigvecs.transpose();
        for r in 0..eigvals.len() {
            let s = eigvals[r].sqrt();
            for c in 0..train_embedding.ncols() {
                train_embedding[(r, c)] *= s;
            }
        }
        Ok(NptEmbedding {
            eigvecs,
            eigvals,
            row_means,
            grand_mean,
            train_embedding,
        })
    }
}

/// Default relative eigenvalue cutoff for [`npt_embed`].
pub const NPT_RANK_TOL: f64 = 1e-9;

/// Embeds a symmetric PSD training gram.
///
/// Centers the gram (`Ĉ = (I − J/N) K (I − J/N)`), eigendecomposes it, keeps
/// eigenvalues above `rank_tol · λ_max` and returns `Φ = Λ^{1/2} Vᵀ`.
pub fn npt_embed(k_train: &DMatrix<f64>, rank_tol: f64) -> Result<NptEmbedding> {
    let n = k_train.nrows();
    if k_train.ncols() != n || n == 0 {
        return Err(Error::Shape(format!(
            "training gram must be square and non-empty, got {}x{}",
            n,
            k_train.ncols()
        )));
    }
    let max_abs = k_train.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let asym = (k_train - k_train.transpose()).abs().max();
    if asym > 1e-8 * max_abs.max(1.0) {
        return Err(Error::Shape(format!(
            "training gram is not symmetric (max asymmetry {asym:.3e})"
        )));
    }

    let row_means = DVector::from_iterator(n, k_train.row_iter().map(|r| r.sum() / n as f64));
    let grand_mean = row_means.sum() / n as f64;
    let mut centered = k_train.clone();
    for i in 0..n {
        for j in 0..n {
            centered[(i, j)] += grand_mean - row_means[i] - row_means[j];
        }
    }
    // exact symmetry for the eigensolver
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (centered[(i, j)] + centered[(j, i)]);
            centered[(i, j)] = avg;
            centered[(j, i)] = avg;
        }
    }

    let eig = SymmetricEigen::new(centered);
    let lambda_max = eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if !(lambda_max > 0.0) {
        return Err(Error::DegenerateKernel(format!(
            "centered kernel has no positive spectrum (λ_max = {lambda_max:.3e})"
        )));
    }
    let cutoff = rank_tol * lambda_max;
    let mut order: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > cutoff).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    if order.is_empty() {
        return Err(Error::DegenerateKernel(
            "all eigenvalues of the centered kernel fall below the rank tolerance".into(),
        ));
    }

    let m = order.len();
    let mut eigvecs = DMatrix::zeros(n, m);
    let mut eigvals = DVector::zeros(m);
    for (col, &idx) in order.iter().enumerate() {
        eigvals[col] = eig.eigenvalues[idx].max(0.0);
        let mut v = eig.eigenvectors.column(idx).into_owned();
        // sign canonicalization: the largest-magnitude entry is made positive,
        // so embeddings are identical across eigensolver conventions
        let pivot = (0..n).fold(0, |best, i| {
            if v[i].abs() > v[best].abs() {
                i
            } else {
                best
            }
        });
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        eigvecs.set_column(col, &v);
    }

    let mut train_embedding = eigvecs.transpose();
    for r in 0..m {
        let s = eigvals[r].sqrt();
        for c in 0..n {
            train_embedding[(r, c)] *= s;
        }
    }
    Ok(NptEmbedding {
        eigvecs,
        eigvals,
        row_means,
        grand_mean,
        train_embedding,
    })
}

/// Maps kernel columns against the training set into the embedded space.
///
/// `k_test` is N×M: column j holds kernel values between training samples and
/// test point j. Applies the training centering statistics, then `Λ^{−1/2} Vᵀ`.
pub fn npt_map(emb: &NptEmbedding, k_test: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = emb.n_train();
    if k_test.nrows() != n {
        return Err(Error::Shape(format!(
            "kernel block has {} rows, embedding was built on {} training samples",
            k_test.nrows(),
            n
        )));
    }
    let m = emb.rank();
    let cols = k_test.ncols();
    let mut out = DMatrix::zeros(m, cols);
    for j in 0..cols {
        let col = k_test.column(j);
        let col_mean = col.sum() / n as f64;
        let centered = DVector::from_fn(n, |i, _| {
            col[i] - emb.row_means[i] - col_mean + emb.grand_mean
        });
        let proj = emb.eigvecs.transpose() * centered;
        for r in 0..m {
            out[(r, j)] = proj[r] / emb.eigvals[r].sqrt();
        }
    }
    Ok(out)
}
