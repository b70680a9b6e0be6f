//! Method dispatch and model artifacts.
//!
//! One entry point trains any of the five method variants from a multi-view
//! dataset and one decides batches, hiding the concatenate-vs-per-view and
//! coordinate-vs-kernel differences. Trained models round-trip through a
//! versioned, self-describing JSON document with explicit matrix shapes.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{concatenate_views, MultiViewDataset};
use crate::error::{Error, Result};
use crate::kernels::{gram_matrix, KernelSpec, NptEmbedding};
use crate::solvers::{
    solve_ocsvm, solve_svdd, solve_svdd_gram, ocsvm_decision, svdd_decision,
    svdd_decision_kernel, OcsvmModel, SvddModel,
};
use crate::subspace::{
    decision_values, strategy_accepts, train_subspace, HyperParams, NptContext, ProjectionMatrix,
    SubspaceMethod, SubspaceModel,
};

pub const MODEL_FORMAT: &str = "mvocc-model";
pub const MODEL_VERSION: u32 = 1;

/// The five trainable method variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Svdd,
    Ocsvm,
    SSvdd,
    EsSvdd,
    MsSvdd,
}

impl MethodKind {
    pub const ALL: [MethodKind; 5] = [
        MethodKind::Svdd,
        MethodKind::Ocsvm,
        MethodKind::SSvdd,
        MethodKind::EsSvdd,
        MethodKind::MsSvdd,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            MethodKind::Svdd => "svdd",
            MethodKind::Ocsvm => "ocsvm",
            MethodKind::SSvdd => "s_svdd",
            MethodKind::EsSvdd => "es_svdd",
            MethodKind::MsSvdd => "ms_svdd",
        }
    }

    pub fn is_subspace(&self) -> bool {
        self.subspace_method().is_some()
    }

    pub fn is_multi_modal(&self) -> bool {
        matches!(self, MethodKind::MsSvdd)
    }

    pub fn subspace_method(&self) -> Option<SubspaceMethod> {
        match self {
            MethodKind::SSvdd => Some(SubspaceMethod::SSvdd),
            MethodKind::EsSvdd => Some(SubspaceMethod::EsSvdd),
            MethodKind::MsSvdd => Some(SubspaceMethod::MsSvdd),
            _ => None,
        }
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .iter()
            .copied()
            .find(|m| m.id() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method '{s}'; expected one of svdd, ocsvm, s_svdd, es_svdd, ms_svdd"
                ))
            })
    }
}

/// Method-specific trained state behind [`TrainedModel`].
#[derive(Debug, Clone)]
pub enum ModelInner {
    /// Plain hypersphere. `train_features` present in kernel mode only; the
    /// linear fit decides through its explicit center.
    Svdd {
        train_features: Option<DMatrix<f64>>,
        model: SvddModel,
    },
    /// ν-form one-class margin; decisions always go through the kernel
    /// expansion, so training columns stay with the model.
    Ocsvm {
        train_features: DMatrix<f64>,
        model: OcsvmModel,
    },
    Subspace(SubspaceModel),
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub method: MethodKind,
    pub target_class: String,
    pub hparams: HyperParams,
    pub inner: ModelInner,
}

/// ν giving the one-class margin the same box bound as a hypersphere with
/// penalty C on N samples; C below 1/N clamps to the fully rigid ν = 1.
pub fn nu_from_c(c: f64, n: usize) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Parameter(format!("C must be positive, got {c}")));
    }
    Ok((1.0 / (c * n as f64)).min(1.0))
}

/// Trains one method at one hyperparameter point on target-only data.
pub fn train_model(
    method: MethodKind,
    ds_train: &MultiViewDataset,
    hp: &HyperParams,
) -> Result<TrainedModel> {
    let target = ds_train.target_class().to_string();
    if let Some(sub) = method.subspace_method() {
        let model = train_subspace(sub, ds_train, hp)?;
        return Ok(TrainedModel {
            method,
            target_class: target,
            hparams: hp.clone(),
            inner: ModelInner::Subspace(model),
        });
    }

    if ds_train.labels().iter().any(|l| l != &target) {
        return Err(Error::Contract(
            "one-class training requires target-only data".into(),
        ));
    }
    let cat;
    let ds = if ds_train.n_views() > 1 {
        cat = concatenate_views(ds_train);
        &cat
    } else {
        ds_train
    };
    let z = &ds.views()[0].features;

    let inner = match method {
        MethodKind::Svdd => match &hp.kernel {
            KernelSpec::Linear => ModelInner::Svdd {
                train_features: None,
                model: solve_svdd(z, hp.c)?,
            },
            KernelSpec::Rbf { .. } => {
                let k = gram_matrix(z, z, &hp.kernel)?;
                ModelInner::Svdd {
                    train_features: Some(z.clone()),
                    model: solve_svdd_gram(&k, hp.c)?,
                }
            }
        },
        MethodKind::Ocsvm => {
            let nu = nu_from_c(hp.c, ds.n_samples())?;
            let k = gram_matrix(z, z, &hp.kernel)?;
            ModelInner::Ocsvm {
                train_features: z.clone(),
                model: solve_ocsvm(&k, nu)?,
            }
        }
        _ => unreachable!("subspace methods returned above"),
    };
    Ok(TrainedModel {
        method,
        target_class: target,
        hparams: hp.clone(),
        inner,
    })
}

fn stack_rows(views: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    if views.is_empty() {
        return Err(Error::Shape("no feature blocks".into()));
    }
    let n = views[0].ncols();
    if views.iter().any(|v| v.ncols() != n) {
        return Err(Error::Shape("feature blocks disagree on sample count".into()));
    }
    let total: usize = views.iter().map(|v| v.nrows()).sum();
    let mut out = DMatrix::zeros(total, n);
    let mut row = 0;
    for v in views {
        out.view_mut((row, 0), (v.nrows(), n)).copy_from(v);
        row += v.nrows();
    }
    Ok(out)
}

/// Raw decision values, one per sample. Multi-modal models return one vector
/// per modality; everything else returns a single vector.
pub fn decision_matrix(model: &TrainedModel, views: &[DMatrix<f64>]) -> Result<Vec<DVector<f64>>> {
    match &model.inner {
        ModelInner::Subspace(sub) => {
            if model.method.is_multi_modal() {
                decision_values(sub, views)
            } else {
                let z = stack_rows(views)?;
                decision_values(sub, &[z])
            }
        }
        ModelInner::Svdd {
            train_features,
            model: svdd,
        } => {
            let z = stack_rows(views)?;
            let decs = match train_features {
                None => DVector::from_fn(z.ncols(), |j, _| {
                    svdd_decision(svdd, &z.column(j).into_owned()).unwrap_or(f64::NAN)
                }),
                Some(train) => {
                    let k_test = gram_matrix(train, &z, &model.hparams.kernel)?;
                    let mut out = DVector::zeros(z.ncols());
                    for j in 0..z.ncols() {
                        let k_z = k_test.column(j).into_owned();
                        let k_zz = match model.hparams.kernel {
                            KernelSpec::Linear => z.column(j).norm_squared(),
                            KernelSpec::Rbf { .. } => 1.0,
                        };
                        out[j] = svdd_decision_kernel(svdd, &k_z, k_zz)?;
                    }
                    out
                }
            };
            if decs.iter().any(|d| d.is_nan()) {
                return Err(Error::Numeric("decision produced NaN".into()));
            }
            Ok(vec![decs])
        }
        ModelInner::Ocsvm {
            train_features,
            model: ocsvm,
        } => {
            let z = stack_rows(views)?;
            let k_test = gram_matrix(train_features, &z, &model.hparams.kernel)?;
            let mut out = DVector::zeros(z.ncols());
            for j in 0..z.ncols() {
                out[j] = ocsvm_decision(ocsvm, &k_test.column(j).into_owned())?;
            }
            Ok(vec![out])
        }
    }
}

/// Accept/reject per sample: multi-modal models apply their decision
/// strategy, everything else thresholds the single decision value at 0.
pub fn decide_views(model: &TrainedModel, views: &[DMatrix<f64>]) -> Result<Vec<bool>> {
    let per_view = decision_matrix(model, views)?;
    let n = per_view[0].len();
    if model.method.is_multi_modal() {
        let ds = match &model.inner {
            ModelInner::Subspace(sub) => sub.hparams.ds,
            _ => unreachable!(),
        };
        (0..n)
            .map(|j| {
                let decs: Vec<f64> = per_view.iter().map(|v| v[j]).collect();
                strategy_accepts(ds, &decs)
            })
            .collect()
    } else {
        Ok((0..n).map(|j| per_view[0][j] >= 0.0).collect())
    }
}

/// [`decide_views`] over a dataset's feature blocks.
pub fn decide_dataset(model: &TrainedModel, ds: &MultiViewDataset) -> Result<Vec<bool>> {
    let views: Vec<DMatrix<f64>> = ds.views().iter().map(|v| v.features.clone()).collect();
    decide_views(model, &views)
}

// ---------------------------------------------------------------------------
// artifact documents

#[derive(Debug, Serialize, Deserialize)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    /// Column-major entries, rows·cols of them.
    data: Vec<f64>,
}

impl MatrixDoc {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        MatrixDoc {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.as_slice().to_vec(),
        }
    }

    fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Artifact(format!(
                "matrix document claims {}x{} but carries {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_column_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SvddDoc {
    alphas: Vec<f64>,
    c: f64,
    radius_sq: f64,
    center: Option<Vec<f64>>,
    alpha_quad: f64,
    objective: f64,
    iterations: usize,
    support_idx: Vec<usize>,
    slacks: Vec<f64>,
    train_dist_sq: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_features: Option<MatrixDoc>,
}

impl SvddDoc {
    fn from_model(m: &SvddModel, train: Option<&DMatrix<f64>>) -> Self {
        SvddDoc {
            alphas: m.alphas.as_slice().to_vec(),
            c: m.c,
            radius_sq: m.radius_sq,
            center: m.center.as_ref().map(|c| c.as_slice().to_vec()),
            alpha_quad: m.alpha_quad,
            objective: m.objective,
            iterations: m.iterations,
            support_idx: m.support_idx.clone(),
            slacks: m.slacks.as_slice().to_vec(),
            train_dist_sq: m.train_dist_sq.as_slice().to_vec(),
            train_features: train.map(MatrixDoc::from_matrix),
        }
    }

    fn to_model(&self) -> Result<(SvddModel, Option<DMatrix<f64>>)> {
        let n = self.alphas.len();
        if self.slacks.len() != n || self.train_dist_sq.len() != n {
            return Err(Error::Artifact(
                "hypersphere document fields disagree on training size".into(),
            ));
        }
        let model = SvddModel {
            alphas: DVector::from_column_slice(&self.alphas),
            c: self.c,
            radius_sq: self.radius_sq,
            center: self.center.as_ref().map(|c| DVector::from_column_slice(c)),
            support_idx: self.support_idx.clone(),
            slacks: DVector::from_column_slice(&self.slacks),
            objective: self.objective,
            iterations: self.iterations,
            alpha_quad: self.alpha_quad,
            train_dist_sq: DVector::from_column_slice(&self.train_dist_sq),
        };
        let train = self.train_features.as_ref().map(|t| t.to_matrix()).transpose()?;
        Ok((model, train))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct OcsvmDoc {
    alphas: Vec<f64>,
    nu: f64,
    rho: f64,
    objective: f64,
    iterations: usize,
    support_idx: Vec<usize>,
    train_scores: Vec<f64>,
    train_features: MatrixDoc,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProjectionDoc {
    modality_id: usize,
    q: MatrixDoc,
}

#[derive(Debug, Serialize, Deserialize)]
struct NptDoc {
    train_features: MatrixDoc,
    eigvecs: MatrixDoc,
    eigvals: Vec<f64>,
    row_means: Vec<f64>,
    grand_mean: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SubspaceDoc {
    method: SubspaceMethod,
    projections: Vec<ProjectionDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    whitener: Option<MatrixDoc>,
    inner: SvddDoc,
    #[serde(skip_serializing_if = "Option::is_none")]
    npt: Option<Vec<NptDoc>>,
    loss_trace: Vec<f64>,
    ortho_error_max: f64,
}

/// On-disk model artifact. `format`/`version` gate loading.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelDoc {
    format: String,
    version: u32,
    method: MethodKind,
    target_class: String,
    hparams: HyperParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    svdd: Option<SvddDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ocsvm: Option<OcsvmDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    subspace: Option<SubspaceDoc>,
}

pub fn model_to_doc(model: &TrainedModel) -> ModelDoc {
    let mut doc = ModelDoc {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        method: model.method,
        target_class: model.target_class.clone(),
        hparams: model.hparams.clone(),
        svdd: None,
        ocsvm: None,
        subspace: None,
    };
    match &model.inner {
        ModelInner::Svdd {
            train_features,
            model: m,
        } => {
            doc.svdd = Some(SvddDoc::from_model(m, train_features.as_ref()));
        }
        ModelInner::Ocsvm {
            train_features,
            model: m,
        } => {
            doc.ocsvm = Some(OcsvmDoc {
                alphas: m.alphas.as_slice().to_vec(),
                nu: m.nu,
                rho: m.rho,
                objective: m.objective,
                iterations: m.iterations,
                support_idx: m.support_idx.clone(),
                train_scores: m.train_scores.as_slice().to_vec(),
                train_features: MatrixDoc::from_matrix(train_features),
            });
        }
        ModelInner::Subspace(sub) => {
            doc.subspace = Some(SubspaceDoc {
                method: sub.method,
                projections: sub
                    .projections
                    .iter()
                    .map(|p| ProjectionDoc {
                        modality_id: p.modality_id,
                        q: MatrixDoc::from_matrix(&p.q),
                    })
                    .collect(),
                whitener: sub.whitener.as_ref().map(MatrixDoc::from_matrix),
                inner: SvddDoc::from_model(&sub.inner, None),
                npt: sub.npt.as_ref().map(|contexts| {
                    contexts
                        .iter()
                        .map(|ctx| NptDoc {
                            train_features: MatrixDoc::from_matrix(&ctx.train_features),
                            eigvecs: MatrixDoc::from_matrix(ctx.embedding.eigvecs()),
                            eigvals: ctx.embedding.eigvals().as_slice().to_vec(),
                            row_means: ctx.embedding.row_means().as_slice().to_vec(),
                            grand_mean: ctx.embedding.grand_mean(),
                        })
                        .collect()
                }),
                loss_trace: sub.loss_trace.clone(),
                ortho_error_max: sub.ortho_error_max,
            });
        }
    }
    doc
}

pub fn model_from_doc(doc: &ModelDoc) -> Result<TrainedModel> {
    if doc.format != MODEL_FORMAT {
        return Err(Error::Artifact(format!(
            "not a model artifact (format '{}')",
            doc.format
        )));
    }
    if doc.version != MODEL_VERSION {
        return Err(Error::Artifact(format!(
            "unsupported model version {} (expected {MODEL_VERSION})",
            doc.version
        )));
    }
    let inner = match (&doc.svdd, &doc.ocsvm, &doc.subspace, doc.method) {
        (Some(s), None, None, MethodKind::Svdd) => {
            let (model, train) = s.to_model()?;
            if matches!(doc.hparams.kernel, KernelSpec::Rbf { .. }) && train.is_none() {
                return Err(Error::Artifact(
                    "kernel-mode hypersphere artifact lacks training columns".into(),
                ));
            }
            ModelInner::Svdd {
                train_features: train,
                model,
            }
        }
        (None, Some(o), None, MethodKind::Ocsvm) => {
            let n = o.alphas.len();
            if o.train_scores.len() != n {
                return Err(Error::Artifact(
                    "margin document fields disagree on training size".into(),
                ));
            }
            let train = o.train_features.to_matrix()?;
            if train.ncols() != n {
                return Err(Error::Artifact(format!(
                    "{} training columns for {} dual weights",
                    train.ncols(),
                    n
                )));
            }
            ModelInner::Ocsvm {
                train_features: train,
                model: OcsvmModel {
                    alphas: DVector::from_column_slice(&o.alphas),
                    nu: o.nu,
                    rho: o.rho,
                    support_idx: o.support_idx.clone(),
                    objective: o.objective,
                    iterations: o.iterations,
                    train_scores: DVector::from_column_slice(&o.train_scores),
                },
            }
        }
        (None, None, Some(s), method) if method.is_subspace() => {
            if method.subspace_method() != Some(s.method) {
                return Err(Error::Artifact("method tag disagrees with payload".into()));
            }
            let projections: Vec<ProjectionMatrix> = s
                .projections
                .iter()
                .map(|p| {
                    Ok(ProjectionMatrix {
                        modality_id: p.modality_id,
                        q: p.q.to_matrix()?,
                    })
                })
                .collect::<Result<_>>()?;
            let whitener = s.whitener.as_ref().map(|w| w.to_matrix()).transpose()?;
            let (inner_model, _) = s.inner.to_model()?;
            if inner_model.center.is_none() {
                return Err(Error::Artifact(
                    "subspace artifact lacks the hypersphere center".into(),
                ));
            }
            let npt = match &s.npt {
                None => None,
                Some(docs) => {
                    let mut contexts = Vec::with_capacity(docs.len());
                    for d in docs {
                        let embedding = NptEmbedding::from_parts(
                            d.eigvecs.to_matrix()?,
                            DVector::from_column_slice(&d.eigvals),
                            DVector::from_column_slice(&d.row_means),
                            d.grand_mean,
                        )?;
                        contexts.push(NptContext {
                            train_features: d.train_features.to_matrix()?,
                            embedding,
                        });
                    }
                    Some(contexts)
                }
            };
            ModelInner::Subspace(SubspaceModel {
                method: s.method,
                projections,
                whitener,
                inner: inner_model,
                hparams: doc.hparams.clone(),
                npt,
                loss_trace: s.loss_trace.clone(),
                ortho_error_max: s.ortho_error_max,
            })
        }
        _ => {
            return Err(Error::Artifact(
                "model document payload does not match its method tag".into(),
            ))
        }
    };
    Ok(TrainedModel {
        method: doc.method,
        target_class: doc.target_class.clone(),
        hparams: doc.hparams.clone(),
        inner,
    })
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let doc = model_to_doc(model);
    let text = serde_json::to_string_pretty(&doc)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = fs::read_to_string(path)?;
    let doc: ModelDoc =
        serde_json::from_str(&text).map_err(|e| Error::Artifact(format!("{}: {e}", path.display())))?;
    model_from_doc(&doc)
}
