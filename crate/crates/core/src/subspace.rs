//! Learned-subspace one-class models.
//!
//! A projection matrix per modality maps features into a shared d-dimensional
//! space where a single hypersphere is fit on the pooled projected columns.
//! Projections are learned by gradient descent on the Lagrangian of the
//! hypersphere objective, with optional variance regularization, optional
//! ellipsoidal (whitened) geometry, and per-modality decision strategies at
//! test time. RBF-kernel variants run the same machinery on explicit kernel
//! embeddings ([`crate::kernels::npt_embed`]).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::MultiViewDataset;
use crate::error::{Error, Result};
use crate::kernels::{gram_matrix, npt_embed, npt_map, KernelSpec, NptEmbedding, NPT_RANK_TOL};
use crate::rng::PortableRng;
use crate::solvers::{solve_svdd, SvddModel, ALPHA_TOL};

/// Relative tolerance for the step-acceptance guard: a step is accepted when
/// the new loss is at most `prev + LOSS_TOL·(1 + |prev|)`.
const LOSS_TOL: f64 = 1e-6;
/// Rejected steps halve the learning rate at most this many times per run.
const MAX_ETA_HALVINGS: usize = 5;
/// Seed for the Gaussian rows that pad a rank-deficient PCA initialization.
const Q_INIT_SEED: u64 = 0x9A5D_2C3B;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceMethod {
    SSvdd,
    EsSvdd,
    MsSvdd,
}

impl SubspaceMethod {
    pub fn is_multi_modal(&self) -> bool {
        matches!(self, SubspaceMethod::MsSvdd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegFamily {
    Psi,
    Omega,
}

/// Regularization selector: family, variant index, and weight β.
///
/// Index 0 disables the term. Variants 1–3 penalize per-modality projected
/// variance `Σ_v ‖Q_v F_v λ_v‖²` with selector λ = all-ones (1), the dual
/// weights restricted to support vectors (2), or the dual weights (3). The
/// omega family adds 4–6: the same selectors in the coupled form
/// `‖Σ_v Q_v F_v λ_v‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationSpec {
    pub family: RegFamily,
    pub index: u8,
    pub beta: f64,
}

impl RegularizationSpec {
    pub fn none() -> Self {
        RegularizationSpec {
            family: RegFamily::Psi,
            index: 0,
            beta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let max = match self.family {
            RegFamily::Psi => 3,
            RegFamily::Omega => 6,
        };
        if self.index > max {
            return Err(Error::Parameter(format!(
                "regularization index {} out of range for {:?} (max {max})",
                self.index, self.family
            )));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Parameter(format!(
                "regularization weight must be non-negative, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Catalog identifier recorded in result documents, e.g. "psi2" or "omega4".
    pub fn id(&self) -> String {
        match self.family {
            RegFamily::Psi => format!("psi{}", self.index),
            RegFamily::Omega => format!("omega{}", self.index),
        }
    }
}

/// Rule for combining per-modality decisions at test time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionStrategy {
    /// Target only when every modality accepts.
    Ds1,
    /// Target when any modality accepts.
    Ds2,
    /// First modality's decision alone.
    Ds3,
    /// Second modality's decision alone.
    Ds4,
}

impl DecisionStrategy {
    pub const ALL: [DecisionStrategy; 4] = [
        DecisionStrategy::Ds1,
        DecisionStrategy::Ds2,
        DecisionStrategy::Ds3,
        DecisionStrategy::Ds4,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            DecisionStrategy::Ds1 => "ds1",
            DecisionStrategy::Ds2 => "ds2",
            DecisionStrategy::Ds3 => "ds3",
            DecisionStrategy::Ds4 => "ds4",
        }
    }
}

/// Applies a strategy to per-modality decision values (≥ 0 accepts).
pub fn strategy_accepts(ds: DecisionStrategy, decisions: &[f64]) -> Result<bool> {
    if decisions.is_empty() {
        return Err(Error::Shape("no modality decisions".into()));
    }
    let needed = match ds {
        DecisionStrategy::Ds1 | DecisionStrategy::Ds2 => 1,
        DecisionStrategy::Ds3 => 1,
        DecisionStrategy::Ds4 => 2,
    };
    if decisions.len() < needed {
        return Err(Error::Shape(format!(
            "{} needs {} modalities, got {}",
            ds.id(),
            needed,
            decisions.len()
        )));
    }
    Ok(match ds {
        DecisionStrategy::Ds1 => decisions.iter().all(|&d| d >= 0.0),
        DecisionStrategy::Ds2 => decisions.iter().any(|&d| d >= 0.0),
        DecisionStrategy::Ds3 => decisions[0] >= 0.0,
        DecisionStrategy::Ds4 => decisions[1] >= 0.0,
    })
}

/// One hyperparameter point. β travels inside `reg` and σ inside `kernel`,
/// each with a flat accessor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub eta: f64,
    pub c: f64,
    pub d: usize,
    pub reg: RegularizationSpec,
    pub ds: DecisionStrategy,
    pub kernel: KernelSpec,
    pub max_iters: usize,
}

pub const DEFAULT_MAX_ITERS: usize = 100;

impl HyperParams {
    pub fn beta(&self) -> f64 {
        self.reg.beta
    }

    pub fn sigma(&self) -> Option<f64> {
        match self.kernel {
            KernelSpec::Linear => None,
            KernelSpec::Rbf { sigma } => Some(sigma),
        }
    }
}

/// Learned projection for one modality: `q` is d×D_v with orthonormal rows.
#[derive(Debug, Clone)]
pub struct ProjectionMatrix {
    pub modality_id: usize,
    pub q: DMatrix<f64>,
}

impl ProjectionMatrix {
    /// ‖QQᵀ − I‖_F, the row-orthonormality defect.
    pub fn ortho_error(&self) -> f64 {
        let d = self.q.nrows();
        (&self.q * self.q.transpose() - DMatrix::identity(d, d)).norm()
    }
}

/// Kernel-mode context for one modality: the training columns plus the
/// embedding that maps kernel evaluations into coordinates.
#[derive(Debug, Clone)]
pub struct NptContext {
    pub train_features: DMatrix<f64>,
    pub embedding: NptEmbedding,
}

/// A trained subspace model: projections, optional whitener (ellipsoidal
/// geometry), the inner hypersphere, and everything needed to map test points.
#[derive(Debug, Clone)]
pub struct SubspaceModel {
    pub method: SubspaceMethod,
    pub projections: Vec<ProjectionMatrix>,
    /// Symmetric PD d×d matrix applied after projection (ellipsoidal variant).
    pub whitener: Option<DMatrix<f64>>,
    pub inner: SvddModel,
    pub hparams: HyperParams,
    /// Per-modality kernel contexts; `None` in linear mode.
    pub npt: Option<Vec<NptContext>>,
    /// Loss R² + CΣξ after initialization and after each accepted step.
    pub loss_trace: Vec<f64>,
    /// Largest row-orthonormality defect observed across the run.
    pub ortho_error_max: f64,
}

fn check_alphas(alphas: &DVector<f64>, expected: usize) -> Result<()> {
    if alphas.len() != expected {
        return Err(Error::Contract(format!(
            "{} dual weights for {} pooled columns",
            alphas.len(),
            expected
        )));
    }
    if (alphas.sum() - 1.0).abs() > 1e-6 {
        return Err(Error::Contract(format!(
            "dual weights must sum to 1, got {}",
            alphas.sum()
        )));
    }
    Ok(())
}

fn selector(index_mod_3: u8, alpha_v: &DVector<f64>) -> DVector<f64> {
    match index_mod_3 {
        1 => DVector::from_element(alpha_v.len(), 1.0),
        2 => DVector::from_fn(alpha_v.len(), |i, _| {
            if alpha_v[i] > ALPHA_TOL {
                alpha_v[i]
            } else {
                0.0
            }
        }),
        3 => alpha_v.clone(),
        _ => unreachable!(),
    }
}

/// Regularization value and per-modality gradients for the current iterate.
///
/// `alphas` is the pooled dual vector; slice v·N..(v+1)·N belongs to modality v.
pub fn reg_term(
    qs: &[DMatrix<f64>],
    fs: &[DMatrix<f64>],
    alphas: &DVector<f64>,
    spec: &RegularizationSpec,
) -> Result<(f64, Vec<DMatrix<f64>>)> {
    spec.validate()?;
    let v_count = qs.len();
    if fs.len() != v_count || v_count == 0 {
        return Err(Error::Shape(format!(
            "{} projections vs {} feature blocks",
            v_count,
            fs.len()
        )));
    }
    let n = fs[0].ncols();
    check_alphas(alphas, v_count * n)?;

    let zero_grads = || qs.iter().map(|q| DMatrix::zeros(q.nrows(), q.ncols())).collect();
    if spec.index == 0 {
        return Ok((0.0, zero_grads()));
    }

    let coupled = spec.family == RegFamily::Omega && spec.index >= 4;
    let sel_index = if coupled { spec.index - 3 } else { spec.index };

    // u_v = F_v λ_v per modality
    let mut us = Vec::with_capacity(v_count);
    for v in 0..v_count {
        let alpha_v = DVector::from_fn(n, |i, _| alphas[v * n + i]);
        let lambda = selector(sel_index, &alpha_v);
        us.push(&fs[v] * lambda);
    }

    if coupled {
        let mut s = DVector::zeros(qs[0].nrows());
        for v in 0..v_count {
            s += &qs[v] * &us[v];
        }
        let value = s.norm_squared();
        let grads = (0..v_count)
            .map(|v| 2.0 * &s * us[v].transpose())
            .collect();
        Ok((value, grads))
    } else {
        let mut value = 0.0;
        let mut grads = Vec::with_capacity(v_count);
        for v in 0..v_count {
            let qu = &qs[v] * &us[v];
            value += qu.norm_squared();
            grads.push(2.0 * qu * us[v].transpose());
        }
        Ok((value, grads))
    }
}

/// Lagrangian of the pooled hypersphere objective at fixed dual weights:
/// `Σ_{v,i} α_{v,i} ‖Q_v f_{v,i}‖² − ‖Σ_{v,i} α_{v,i} Q_v f_{v,i}‖² + β·reg`.
pub fn lagrangian_value(
    qs: &[DMatrix<f64>],
    fs: &[DMatrix<f64>],
    alphas: &DVector<f64>,
    reg: &RegularizationSpec,
) -> Result<f64> {
    let v_count = qs.len();
    if fs.len() != v_count || v_count == 0 {
        return Err(Error::Shape(format!(
            "{} projections vs {} feature blocks",
            v_count,
            fs.len()
        )));
    }
    let n = fs[0].ncols();
    check_alphas(alphas, v_count * n)?;

    let d = qs[0].nrows();
    let mut weighted_norms = 0.0;
    let mut m = DVector::zeros(d);
    for v in 0..v_count {
        let projected = &qs[v] * &fs[v];
        let alpha_v = DVector::from_fn(n, |i, _| alphas[v * n + i]);
        for i in 0..n {
            weighted_norms += alpha_v[i] * projected.column(i).norm_squared();
        }
        m += projected * alpha_v;
    }
    let (reg_value, _) = reg_term(qs, fs, alphas, reg)?;
    Ok(weighted_norms - m.norm_squared() + reg.beta * reg_value)
}

/// Analytic gradient of [`lagrangian_value`] with respect to each `Q_v`:
/// `2 Q_v F_v diag(α_v) F_vᵀ − 2 m (F_v α_v)ᵀ + β·∂reg/∂Q_v`.
pub fn lagrangian_gradient(
    qs: &[DMatrix<f64>],
    fs: &[DMatrix<f64>],
    alphas: &DVector<f64>,
    reg: &RegularizationSpec,
) -> Result<Vec<DMatrix<f64>>> {
    let v_count = qs.len();
    if fs.len() != v_count || v_count == 0 {
        return Err(Error::Shape(format!(
            "{} projections vs {} feature blocks",
            v_count,
            fs.len()
        )));
    }
    let n = fs[0].ncols();
    check_alphas(alphas, v_count * n)?;

    let d = qs[0].nrows();
    let mut m = DVector::zeros(d);
    let mut f_alpha = Vec::with_capacity(v_count);
    for v in 0..v_count {
        let alpha_v = DVector::from_fn(n, |i, _| alphas[v * n + i]);
        let fa = &fs[v] * alpha_v;
        m += &qs[v] * &fa;
        f_alpha.push(fa);
    }

    let (_, reg_grads) = reg_term(qs, fs, alphas, reg)?;
    let mut grads = Vec::with_capacity(v_count);
    for v in 0..v_count {
        // F_v diag(α_v) F_vᵀ without materializing the diagonal
        let mut weighted = fs[v].clone();
        for i in 0..n {
            let a = alphas[v * n + i];
            weighted.column_mut(i).scale_mut(a);
        }
        let term1 = 2.0 * (&qs[v] * (weighted * fs[v].transpose()));
        let term2 = 2.0 * &m * f_alpha[v].transpose();
        grads.push(term1 - term2 + reg.beta * &reg_grads[v]);
    }
    Ok(grads)
}

/// Orthonormalizes the rows of `q` in place via QR of its transpose, with the
/// sign convention diag(R) ≥ 0.
fn orthonormalize_rows(q: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = q.transpose().qr();
    let mut thin_q = qr.q();
    let r = qr.r();
    for i in 0..thin_q.ncols().min(r.nrows()) {
        if r[(i, i)] < 0.0 {
            thin_q.column_mut(i).neg_mut();
        }
    }
    thin_q.transpose()
}

/// Top-d principal directions of the columns of `f` as rows, padded with
/// orthonormalized PRNG-Gaussian rows when the data rank falls short.
fn pca_init(f: &DMatrix<f64>, d: usize, stream: u64) -> DMatrix<f64> {
    let dim = f.nrows();
    let n = f.ncols();
    let mean = f.column_mean();
    let mut centered = f.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let scatter = &centered * centered.transpose();
    let eig = SymmetricEigen::new(scatter);
    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |m, &x| m.max(x));
    let mut order: Vec<usize> = (0..dim)
        .filter(|&i| eig.eigenvalues[i] > 1e-12 * lambda_max.max(1e-300))
        .collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    order.truncate(d);

    let mut q = DMatrix::zeros(d, dim);
    for (row, &idx) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let pivot = (0..dim).fold(0, |best, i| {
            if v[i].abs() > v[best].abs() {
                i
            } else {
                best
            }
        });
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        q.row_mut(row).copy_from(&v.transpose());
    }
    if order.len() < d {
        let mut rng = PortableRng::from_seed_stream(Q_INIT_SEED, stream);
        for row in order.len()..d {
            for c in 0..dim {
                q[(row, c)] = rng.next_gaussian();
            }
        }
    }
    let _ = n;
    orthonormalize_rows(&q)
}

/// Inverse square root of (Cov + εI) where Cov is the population covariance of
/// the columns of `x` and ε = 1e−6·trace(Cov)/d.
fn whitener_from(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = x.nrows();
    let n = x.ncols() as f64;
    let mean = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut cov = (&centered * centered.transpose()) / n;
    let trace: f64 = (0..d).map(|i| cov[(i, i)]).sum();
    if !(trace > 0.0) {
        return Err(Error::Numeric(
            "projected data has zero variance; cannot build whitener".into(),
        ));
    }
    let eps = 1e-6 * trace / d as f64;
    for i in 0..d {
        cov[(i, i)] += eps;
    }
    let eig = SymmetricEigen::new(cov);
    let mut w = DMatrix::zeros(d, d);
    for k in 0..d {
        let lambda = eig.eigenvalues[k];
        if !(lambda > 0.0) {
            return Err(Error::Numeric(format!(
                "whitener eigenvalue {lambda} is not positive"
            )));
        }
        let vk = eig.eigenvectors.column(k);
        let scale = 1.0 / lambda.sqrt();
        // w += scale · vₖ vₖᵀ
        for i in 0..d {
            for j in 0..d {
                w[(i, j)] += scale * vk[i] * vk[j];
            }
        }
    }
    Ok(w)
}

/// Effective training blocks: original features in linear mode, per-view
/// kernel embeddings in RBF mode.
fn effective_features(
    ds: &MultiViewDataset,
    kernel: &KernelSpec,
) -> Result<(Vec<DMatrix<f64>>, Option<Vec<NptContext>>)> {
    match kernel {
        KernelSpec::Linear => Ok((
            ds.views().iter().map(|v| v.features.clone()).collect(),
            None,
        )),
        KernelSpec::Rbf { .. } => {
            let mut blocks = Vec::new();
            let mut contexts = Vec::new();
            for view in ds.views() {
                let k = gram_matrix(&view.features, &view.features, kernel)?;
                let emb = npt_embed(&k, NPT_RANK_TOL)?;
                blocks.push(emb.embedding().clone());
                contexts.push(NptContext {
                    train_features: view.features.clone(),
                    embedding: emb,
                });
            }
            Ok((blocks, Some(contexts)))
        }
    }
}

struct IterationState {
    qs: Vec<DMatrix<f64>>,
    whitener: Option<DMatrix<f64>>,
    inner: SvddModel,
    loss: f64,
}

/// Projects, optionally whitens, solves the pooled hypersphere, and reports
/// the primal loss R² + CΣξ. Errors from the inner solve surface unchanged;
/// a non-finite loss is reported as NaN for the caller's guard.
fn evaluate_state(
    qs: &[DMatrix<f64>],
    fs: &[DMatrix<f64>],
    method: SubspaceMethod,
    c: f64,
) -> Result<IterationState> {
    let d = qs[0].nrows();
    let n = fs[0].ncols();
    let v_count = qs.len();
    let mut pooled = DMatrix::zeros(d, v_count * n);
    for v in 0..v_count {
        let projected = &qs[v] * &fs[v];
        pooled.view_mut((0, v * n), (d, n)).copy_from(&projected);
    }
    let whitener = if method == SubspaceMethod::EsSvdd {
        let w = whitener_from(&pooled)?;
        pooled = &w * pooled;
        Some(w)
    } else {
        None
    };
    let inner = solve_svdd(&pooled, c)?;
    let loss = inner.radius_sq + c * inner.slacks.sum();
    Ok(IterationState {
        qs: qs.to_vec(),
        whitener,
        inner,
        loss,
    })
}

/// Trains a subspace model on target-only data.
///
/// Each iteration projects all modalities, solves the pooled hypersphere,
/// takes a gradient step on the Lagrangian, and re-orthonormalizes the
/// projection rows. Steps that raise the loss beyond tolerance (or produce
/// non-finite values) are rejected and halve η, at most
/// [`MAX_ETA_HALVINGS`] times across the run.
pub fn train_subspace(
    method: SubspaceMethod,
    ds_train: &MultiViewDataset,
    hp: &HyperParams,
) -> Result<SubspaceModel> {
    hp.reg.validate()?;
    if hp.max_iters < 1 {
        return Err(Error::Parameter("max_iters must be at least 1".into()));
    }
    if !(hp.eta >= 0.0) || !hp.eta.is_finite() {
        return Err(Error::Parameter(format!("learning rate must be finite and >= 0, got {}", hp.eta)));
    }
    if hp.d < 1 {
        return Err(Error::Parameter("subspace dimension must be at least 1".into()));
    }
    if matches!(hp.reg.family, RegFamily::Psi) && method.is_multi_modal() && hp.reg.index > 0 {
        // psi is the uni-modal catalog; the cross-modality family is omega
        return Err(Error::Config(
            "multi-modal training uses the omega regularization family".into(),
        ));
    }
    if matches!(hp.reg.family, RegFamily::Omega) && !method.is_multi_modal() && hp.reg.index > 3 {
        return Err(Error::Config(
            "coupled regularization variants need multiple modalities".into(),
        ));
    }
    let target = ds_train.target_class().to_string();
    if ds_train.labels().iter().any(|l| l != &target) {
        return Err(Error::Contract(
            "subspace training requires target-only data".into(),
        ));
    }
    if method.is_multi_modal() && ds_train.n_views() < 2 {
        return Err(Error::Config(
            "multi-modal training requires >= 2 views".into(),
        ));
    }

    // uni-modal methods operate on the concatenated single view
    let ds_eff;
    let ds_train = if !method.is_multi_modal() && ds_train.n_views() > 1 {
        ds_eff = crate::dataset::concatenate_views(ds_train);
        &ds_eff
    } else {
        ds_train
    };

    let (fs, npt) = effective_features(ds_train, &hp.kernel)?;
    let n = fs[0].ncols();
    let v_count = fs.len();
    let min_dim = fs.iter().map(|f| f.nrows()).min().unwrap();
    if hp.d > min_dim {
        return Err(Error::Infeasible(format!(
            "subspace dimension {} exceeds smallest usable feature dimension {min_dim}",
            hp.d
        )));
    }
    let pooled_n = v_count * n;
    if hp.c * (pooled_n as f64) < 1.0 - 1e-12 {
        return Err(Error::Infeasible(format!(
            "C = {} infeasible for {pooled_n} pooled training columns",
            hp.c
        )));
    }

    let mut qs: Vec<DMatrix<f64>> = (0..v_count)
        .map(|v| pca_init(&fs[v], hp.d, v as u64))
        .collect();
    let mut ortho_error_max = qs
        .iter()
        .enumerate()
        .map(|(v, q)| ProjectionMatrix {
            modality_id: v + 1,
            q: q.clone(),
        }
        .ortho_error())
        .fold(0.0, f64::max);

    let mut state = evaluate_state(&qs, &fs, method, hp.c)?;
    if !state.loss.is_finite() {
        return Err(Error::Divergence {
            iteration: 0,
            eta: hp.eta,
            message: "initial loss is not finite".into(),
        });
    }
    let mut loss_trace = vec![state.loss];
    let mut eta = hp.eta;
    let mut halvings = 0;
    let mut cached_grad: Option<Vec<DMatrix<f64>>> = None;

    let mut iter = 0;
    while iter < hp.max_iters && eta > 0.0 {
        iter += 1;
        let grads = match &cached_grad {
            Some(g) => g.clone(),
            None => {
                // gradient at the accepted iterate; for the ellipsoidal variant
                // the chain rule through the (fixed) whitener gives ΔL_Q = W·ΔL_P
                // with P = W·Q
                let g = match &state.whitener {
                    Some(w) => {
                        let ps: Vec<DMatrix<f64>> = state.qs.iter().map(|q| w * q).collect();
                        let gp = lagrangian_gradient(&ps, &fs, &state.inner.alphas, &hp.reg)?;
                        gp.into_iter().map(|g| w * g).collect()
                    }
                    None => lagrangian_gradient(&state.qs, &fs, &state.inner.alphas, &hp.reg)?,
                };
                cached_grad = Some(g.clone());
                g
            }
        };

        let candidate_qs: Vec<DMatrix<f64>> = state
            .qs
            .iter()
            .zip(&grads)
            .map(|(q, g)| {
                let stepped = q - eta * g;
                if stepped.iter().all(|x| x.is_finite()) {
                    Some(orthonormalize_rows(&stepped))
                } else {
                    None
                }
            })
            .collect::<Option<Vec<_>>>()
            .unwrap_or_default();

        let candidate = if candidate_qs.is_empty() {
            None // non-finite step
        } else {
            match evaluate_state(&candidate_qs, &fs, method, hp.c) {
                Ok(s) if s.loss.is_finite() => Some(s),
                Ok(_) | Err(Error::Numeric(_)) => None,
                Err(e) => return Err(e),
            }
        };

        match candidate {
            Some(s) if s.loss <= state.loss + LOSS_TOL * (1.0 + state.loss.abs()) => {
                ortho_error_max = s
                    .qs
                    .iter()
                    .enumerate()
                    .map(|(v, q)| {
                        ProjectionMatrix {
                            modality_id: v + 1,
                            q: q.clone(),
                        }
                        .ortho_error()
                    })
                    .fold(ortho_error_max, f64::max);
                loss_trace.push(s.loss);
                state = s;
                cached_grad = None;
            }
            _ => {
                halvings += 1;
                if halvings > MAX_ETA_HALVINGS {
                    break;
                }
                eta *= 0.5;
            }
        }
    }

    qs = state.qs;
    let projections = qs
        .into_iter()
        .enumerate()
        .map(|(v, q)| ProjectionMatrix {
            modality_id: ds_train.views()[v].modality_id,
            q,
        })
        .collect();
    Ok(SubspaceModel {
        method,
        projections,
        whitener: state.whitener,
        inner: state.inner,
        hparams: hp.clone(),
        npt,
        loss_trace,
        ortho_error_max,
    })
}

/// Per-modality decision values for a batch of test samples.
///
/// `views[v]` holds modality v's test columns in the original feature space
/// (for uni-modal models trained on concatenated views, pass the concatenated
/// block as the single view). Entry `[v][j]`: R² minus the squared distance of
/// sample j's modality-v projection from the shared center.
pub fn decision_values(
    model: &SubspaceModel,
    views: &[DMatrix<f64>],
) -> Result<Vec<DVector<f64>>> {
    let v_count = model.projections.len();
    if views.len() != v_count {
        return Err(Error::Shape(format!(
            "model has {} modalities, got {} test blocks",
            v_count,
            views.len()
        )));
    }
    let center = model.inner.center.as_ref().ok_or_else(|| {
        Error::Contract("subspace inner model lacks an explicit center".into())
    })?;
    let mut out = Vec::with_capacity(v_count);
    for v in 0..v_count {
        let effective = match &model.npt {
            Some(contexts) => {
                let ctx = &contexts[v];
                let k_test = gram_matrix(
                    &ctx.train_features,
                    &views[v],
                    &model.hparams.kernel,
                )?;
                npt_map(&ctx.embedding, &k_test)?
            }
            None => {
                if views[v].nrows() != model.projections[v].q.ncols() {
                    return Err(Error::Shape(format!(
                        "modality {} expects dimension {}, got {}",
                        v + 1,
                        model.projections[v].q.ncols(),
                        views[v].nrows()
                    )));
                }
                views[v].clone()
            }
        };
        let mut projected = &model.projections[v].q * effective;
        if let Some(w) = &model.whitener {
            projected = w * projected;
        }
        let decisions = DVector::from_fn(projected.ncols(), |j, _| {
            model.inner.radius_sq - (projected.column(j) - center).norm_squared()
        });
        out.push(decisions);
    }
    Ok(out)
}

/// Multi-modal accept/reject for one sample under the model's strategy.
pub fn ms_svdd_decide(model: &SubspaceModel, sample: &[DVector<f64>]) -> Result<bool> {
    if model.method != SubspaceMethod::MsSvdd {
        return Err(Error::Contract(
            "per-modality decision strategies apply to multi-modal models only".into(),
        ));
    }
    if sample.len() != model.projections.len() {
        return Err(Error::Shape(format!(
            "sample has {} modalities, model expects {}",
            sample.len(),
            model.projections.len()
        )));
    }
    let views: Vec<DMatrix<f64>> = sample
        .iter()
        .map(|f| DMatrix::from_column_slice(f.len(), 1, f.as_slice()))
        .collect();
    let per_view = decision_values(model, &views)?;
    let decisions: Vec<f64> = per_view.iter().map(|d| d[0]).collect();
    strategy_accepts(model.hparams.ds, &decisions)
}

/// Accept/reject for one sample of any subspace model: uni-modal models use
/// their single decision value, multi-modal models their strategy.
pub fn subspace_decide(model: &SubspaceModel, sample: &[DVector<f64>]) -> Result<bool> {
    if model.method == SubspaceMethod::MsSvdd {
        return ms_svdd_decide(model, sample);
    }
    if sample.len() != 1 {
        return Err(Error::Shape(format!(
            "uni-modal model takes 1 feature vector, got {}",
            sample.len()
        )));
    }
    let views = [DMatrix::from_column_slice(
        sample[0].len(),
        1,
        sample[0].as_slice(),
    )];
    let per_view = decision_values(model, &views)?;
    Ok(per_view[0][0] >= 0.0)
}
