//! Nested cross-validation grid search and reporting.
//!
//! The protocol: stratified outer folds hold out test data; on each outer
//! training portion, a stratified inner CV scores every grid point by mean
//! GMean, the winner is refit on the outer training targets and scored on the
//! held-out fold, and confusion counts pool across outer folds into the
//! primary (micro-averaged) report. A per-fold macro average is emitted
//! alongside.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_target_only, stratified_folds, FoldPlan, MultiViewDataset};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::metrics::{compute_metrics, ConfusionMatrix, MetricsReport};
use crate::models::{decide_dataset, train_model, MethodKind};
use crate::rng::mix64;
use crate::subspace::{DecisionStrategy, HyperParams, RegFamily, RegularizationSpec};

/// Tag recorded in result documents: the ψ/ω definitions are reconstructed
/// from their cited shapes, not transcribed from a published listing.
pub const REG_CATALOG_TAG: &str = "reg-catalog/reconstruction-1";
/// Kernelization route recorded in result documents.
pub const SUBSPACE_KERNELIZATION: &str = "npt";

pub const RESULTS_FORMAT: &str = "mvocc-results";
pub const RESULTS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Linear,
    Rbf,
}

impl KernelFamily {
    pub fn id(&self) -> &'static str {
        match self {
            KernelFamily::Linear => "linear",
            KernelFamily::Rbf => "rbf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(KernelFamily::Linear),
            "rbf" => Ok(KernelFamily::Rbf),
            other => Err(Error::Config(format!(
                "unknown kernel '{other}'; expected linear or rbf"
            ))),
        }
    }
}

pub fn default_eta_grid() -> Vec<f64> {
    vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0]
}

pub fn default_beta_grid() -> Vec<f64> {
    vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0, 10000.0]
}

pub fn default_c_grid() -> Vec<f64> {
    vec![0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
}

pub fn default_sigma_grid() -> Vec<f64> {
    vec![1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0]
}

/// Subspace dimension default: 1..=5 with multiple modalities, 1..=11 with one.
pub fn default_d_grid(multi_modal: bool) -> Vec<usize> {
    if multi_modal {
        (1..=5).collect()
    } else {
        (1..=11).collect()
    }
}

pub fn default_reg_grid(family: RegFamily) -> Vec<u8> {
    match family {
        RegFamily::Psi => (0..=3).collect(),
        RegFamily::Omega => (0..=6).collect(),
    }
}

/// Per-axis grid overrides. `None` means the default values for every axis
/// the method uses; an explicitly set axis the method does not use is a
/// configuration error.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GridSpec {
    pub eta: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub c: Option<Vec<f64>>,
    pub sigma: Option<Vec<f64>>,
    pub d: Option<Vec<usize>>,
    pub reg_index: Option<Vec<u8>>,
    pub ds: Option<Vec<DecisionStrategy>>,
}

impl GridSpec {
    pub fn empty() -> Self {
        GridSpec::default()
    }
}

struct Axis<T> {
    values: Vec<T>,
    relevant: bool,
}

fn resolve_axis<T: Clone>(
    name: &str,
    method: MethodKind,
    given: &Option<Vec<T>>,
    relevant: bool,
    default: Vec<T>,
) -> Result<Axis<T>> {
    match (given, relevant) {
        (Some(v), true) if v.is_empty() => Err(Error::Config(format!(
            "empty {name} grid for method {}",
            method.id()
        ))),
        (Some(v), true) => Ok(Axis {
            values: v.clone(),
            relevant,
        }),
        (Some(_), false) => Err(Error::Config(format!(
            "axis '{name}' does not apply to method {}",
            method.id()
        ))),
        (None, true) => Ok(Axis {
            values: default,
            relevant,
        }),
        (None, false) => Ok(Axis {
            values: Vec::new(),
            relevant,
        }),
    }
}

fn sorted_dedup_f64(name: &str, mut v: Vec<f64>, min_exclusive: Option<f64>) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("non-finite value in {name} grid")));
    }
    if let Some(lo) = min_exclusive {
        if v.iter().any(|&x| x <= lo) {
            return Err(Error::Config(format!("{name} grid values must be > {lo}")));
        }
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    Ok(v)
}

struct AxisSet {
    eta: Axis<f64>,
    beta: Axis<f64>,
    c: Axis<f64>,
    sigma: Axis<f64>,
    d: Axis<usize>,
    reg: Axis<u8>,
    ds: Axis<DecisionStrategy>,
    reg_family: RegFamily,
}

fn resolve_all(method: MethodKind, family: KernelFamily, grid: &GridSpec) -> Result<AxisSet> {
    let subspace = method.is_subspace();
    let multi = method.is_multi_modal();
    let reg_family = if multi { RegFamily::Omega } else { RegFamily::Psi };
    let rbf = family == KernelFamily::Rbf;
    Ok(AxisSet {
        eta: resolve_axis("eta", method, &grid.eta, subspace, default_eta_grid())?,
        beta: resolve_axis("beta", method, &grid.beta, subspace, default_beta_grid())?,
        c: resolve_axis("c", method, &grid.c, true, default_c_grid())?,
        sigma: resolve_axis("sigma", method, &grid.sigma, rbf, default_sigma_grid())?,
        d: resolve_axis("d", method, &grid.d, subspace, default_d_grid(multi))?,
        reg: resolve_axis(
            "reg_index",
            method,
            &grid.reg_index,
            subspace,
            default_reg_grid(reg_family),
        )?,
        ds: resolve_axis("ds", method, &grid.ds, multi, DecisionStrategy::ALL.to_vec())?,
        reg_family,
    })
}

/// The grid with every relevant unset axis filled in from the defaults and
/// irrelevant axes left unset: exactly what [`grid_expand`] will see. Lets a
/// caller record a run's effective grid in its result document.
pub fn resolved_grid_spec(
    method: MethodKind,
    family: KernelFamily,
    grid: &GridSpec,
) -> Result<GridSpec> {
    fn keep<T>(a: Axis<T>) -> Option<Vec<T>> {
        if a.relevant {
            Some(a.values)
        } else {
            None
        }
    }
    let axes = resolve_all(method, family, grid)?;
    Ok(GridSpec {
        eta: keep(axes.eta),
        beta: keep(axes.beta),
        c: keep(axes.c),
        sigma: keep(axes.sigma),
        d: keep(axes.d),
        reg_index: keep(axes.reg),
        ds: keep(axes.ds),
    })
}

/// Expands grid axes into hyperparameter points in canonical order
/// (η, β, C, σ, d, r, ds; each axis ascending).
///
/// Only the method's axes participate; the rest sit at fixed neutral values.
/// A point with regularization index 0 carries β = 0 and is emitted once,
/// since β is inert there.
pub fn grid_expand(
    method: MethodKind,
    family: KernelFamily,
    grid: &GridSpec,
    max_iters: usize,
) -> Result<Vec<HyperParams>> {
    let AxisSet {
        eta,
        beta,
        c,
        sigma,
        d,
        reg,
        ds,
        reg_family,
    } = resolve_all(method, family, grid)?;

    let eta_v = sorted_dedup_f64("eta", eta.values, None)?;
    if eta.relevant && eta_v.iter().any(|&x| x < 0.0) {
        return Err(Error::Config("eta grid values must be >= 0".into()));
    }
    let beta_v = sorted_dedup_f64("beta", beta.values, None)?;
    if beta.relevant && beta_v.iter().any(|&x| x < 0.0) {
        return Err(Error::Config("beta grid values must be >= 0".into()));
    }
    let c_v = sorted_dedup_f64("c", c.values, Some(0.0))?;
    let sigma_v = sorted_dedup_f64("sigma", sigma.values, Some(0.0))?;
    let mut d_v = d.values;
    d_v.sort_unstable();
    d_v.dedup();
    if d.relevant && d_v.iter().any(|&x| x == 0) {
        return Err(Error::Config("d grid values must be >= 1".into()));
    }
    let mut reg_v = reg.values;
    reg_v.sort_unstable();
    reg_v.dedup();
    for &r in &reg_v {
        RegularizationSpec {
            family: reg_family,
            index: r,
            beta: 0.0,
        }
        .validate()?;
    }
    let mut ds_v = ds.values;
    ds_v.sort();
    ds_v.dedup();

    // neutral singletons for axes the method ignores
    let eta_axis = if eta.relevant { eta_v } else { vec![0.0] };
    let beta_axis = if beta.relevant { beta_v } else { vec![0.0] };
    let sigma_axis: Vec<Option<f64>> = if sigma.relevant {
        sigma_v.into_iter().map(Some).collect()
    } else {
        vec![None]
    };
    let d_axis = if d.relevant { d_v } else { vec![1] };
    let reg_axis = if reg.relevant { reg_v } else { vec![0] };
    let ds_axis = if ds.relevant {
        ds_v
    } else {
        vec![DecisionStrategy::Ds1]
    };

    let mut points = Vec::new();
    for &eta in &eta_axis {
        for (bi, &beta) in beta_axis.iter().enumerate() {
            for &c in &c_v {
                for &sigma in &sigma_axis {
                    for &d in &d_axis {
                        for &r in &reg_axis {
                            if r == 0 && bi > 0 {
                                continue; // β inert at r = 0; emitted at bi = 0 only
                            }
                            for &ds in &ds_axis {
                                points.push(HyperParams {
                                    eta,
                                    c,
                                    d,
                                    reg: RegularizationSpec {
                                        family: reg_family,
                                        index: r,
                                        beta: if r == 0 { 0.0 } else { beta },
                                    },
                                    ds,
                                    kernel: match sigma {
                                        None => KernelSpec::Linear,
                                        Some(s) => KernelSpec::rbf(s)?,
                                    },
                                    max_iters,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    if points.is_empty() {
        return Err(Error::Config("grid expansion produced no points".into()));
    }
    Ok(points)
}

fn ds_rank(ds: DecisionStrategy) -> u8 {
    match ds {
        DecisionStrategy::Ds1 => 1,
        DecisionStrategy::Ds2 => 2,
        DecisionStrategy::Ds3 => 3,
        DecisionStrategy::Ds4 => 4,
    }
}

/// Canonical ordering key (η, β, C, σ, d, r, ds); ties in inner-CV score are
/// broken toward the smallest key so selection is independent of grid order.
fn canonical_less(a: &HyperParams, b: &HyperParams) -> bool {
    let key = |h: &HyperParams| {
        (
            h.eta,
            h.beta(),
            h.c,
            h.sigma().unwrap_or(0.0),
            h.d,
            h.reg.index,
            ds_rank(h.ds),
        )
    };
    let (ka, kb) = (key(a), key(b));
    ka.partial_cmp(&kb) == Some(std::cmp::Ordering::Less)
}

fn skippable(e: &Error) -> bool {
    matches!(
        e,
        Error::Infeasible(_)
            | Error::Divergence { .. }
            | Error::DegenerateKernel(_)
            | Error::Numeric(_)
    )
}

fn score_fold(
    method: MethodKind,
    hp: &HyperParams,
    train_targets: &MultiViewDataset,
    test: &MultiViewDataset,
) -> Result<ConfusionMatrix> {
    let model = train_model(method, train_targets, hp)?;
    let decisions = decide_dataset(&model, test)?;
    let mut cm = ConfusionMatrix::new(test.target_class());
    for (j, &accept) in decisions.iter().enumerate() {
        cm.record(test.is_target(j), accept);
    }
    Ok(cm)
}

/// Mean inner-fold GMean for one grid point; `None` when any inner fold finds
/// the point untrainable (infeasible box, degenerate kernel, divergence).
fn score_point(
    method: MethodKind,
    hp: &HyperParams,
    inner_splits: &[(MultiViewDataset, MultiViewDataset)],
) -> Result<Option<f64>> {
    let mut sum = 0.0;
    for (train_targets, test) in inner_splits {
        match score_fold(method, hp, train_targets, test) {
            Ok(cm) => sum += compute_metrics(&cm)?.gm,
            Err(e) if skippable(&e) => {
                log::warn!("skipping grid point: {e}");
                return Ok(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Some(sum / inner_splits.len() as f64))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub chosen: HyperParams,
    /// Position of the chosen point in the grid as given.
    pub chosen_index: usize,
    /// Mean GMean over inner folds; absent for a singleton grid.
    pub inner_mean_gm: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvResult {
    pub method: MethodKind,
    pub target_class: String,
    pub seed: u64,
    pub k_inner: usize,
    pub plan: FoldPlan,
    pub folds: Vec<FoldOutcome>,
    /// Micro-averaged counts over the outer test folds: the primary result.
    pub pooled_confusion: ConfusionMatrix,
    pub pooled_metrics: MetricsReport,
    /// Per-fold arithmetic mean of each metric, emitted alongside.
    pub macro_metrics: MetricsReport,
    /// Grid points dropped as untrainable somewhere in the inner searches.
    pub skipped_points: usize,
}

fn macro_average(folds: &[FoldOutcome]) -> MetricsReport {
    let n = folds.len() as f64;
    let mut flags: Vec<String> = folds
        .iter()
        .flat_map(|f| f.metrics.flags.iter().cloned())
        .collect();
    flags.sort();
    flags.dedup();
    MetricsReport {
        sen: folds.iter().map(|f| f.metrics.sen).sum::<f64>() / n,
        spe: folds.iter().map(|f| f.metrics.spe).sum::<f64>() / n,
        pre: folds.iter().map(|f| f.metrics.pre).sum::<f64>() / n,
        f1: folds.iter().map(|f| f.metrics.f1).sum::<f64>() / n,
        acc: folds.iter().map(|f| f.metrics.acc).sum::<f64>() / n,
        gm: folds.iter().map(|f| f.metrics.gm).sum::<f64>() / n,
        flags,
    }
}

/// Runs the full nested protocol with freshly drawn outer folds.
pub fn cross_validate(
    ds: &MultiViewDataset,
    method: MethodKind,
    grid: &[HyperParams],
    k_outer: usize,
    k_inner: usize,
    seed: u64,
) -> Result<CvResult> {
    let plan = stratified_folds(ds, k_outer, seed)?;
    cross_validate_with_plan(ds, method, grid, &plan, k_inner)
}

/// Runs the nested protocol over a caller-supplied outer fold plan.
///
/// Inner fold plans derive deterministically from the outer plan's seed and
/// fold number, so a full run is a pure function of (dataset, grid, plan).
pub fn cross_validate_with_plan(
    ds: &MultiViewDataset,
    method: MethodKind,
    grid: &[HyperParams],
    plan: &FoldPlan,
    k_inner: usize,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    if plan.assignments.len() != ds.n_samples() {
        return Err(Error::Shape(format!(
            "fold plan covers {} samples, dataset has {}",
            plan.assignments.len(),
            ds.n_samples()
        )));
    }
    let target = ds.target_class().to_string();
    let mut folds = Vec::with_capacity(plan.k);
    let mut pooled = ConfusionMatrix::new(&target);
    let mut skipped_total = 0usize;

    for fold in 0..plan.k {
        let (outer_train_targets, outer_test) = split_target_only(ds, plan, fold)?;
        let (chosen_index, inner_mean_gm) = if grid.len() == 1 {
            (0, None)
        } else {
            let outer_train_idx = plan.complement_indices(fold);
            let outer_train = ds.subset(&outer_train_idx)?;
            let inner_seed = mix64(plan.seed.wrapping_add(fold as u64 + 1));
            let inner_plan = stratified_folds(&outer_train, k_inner, inner_seed)?;
            let inner_splits: Vec<(MultiViewDataset, MultiViewDataset)> = (0..k_inner)
                .map(|g| split_target_only(&outer_train, &inner_plan, g))
                .collect::<Result<_>>()?;
            let scores: Vec<Option<f64>> = grid
                .par_iter()
                .map(|hp| score_point(method, hp, &inner_splits))
                .collect::<Result<_>>()?;
            skipped_total += scores.iter().filter(|s| s.is_none()).count();
            let mut best: Option<(usize, f64)> = None;
            for (i, score) in scores.iter().enumerate() {
                let Some(gm) = *score else { continue };
                best = match best {
                    None => Some((i, gm)),
                    Some((bi, bgm)) => {
                        if gm > bgm || (gm == bgm && canonical_less(&grid[i], &grid[bi])) {
                            Some((i, gm))
                        } else {
                            Some((bi, bgm))
                        }
                    }
                };
            }
            let (bi, bgm) = best.ok_or_else(|| {
                Error::Protocol(format!(
                    "no feasible grid point on outer fold {fold} ({} candidates)",
                    grid.len()
                ))
            })?;
            (bi, Some(bgm))
        };

        let cm = score_fold(method, &grid[chosen_index], &outer_train_targets, &outer_test)
            .map_err(|e| {
                if skippable(&e) {
                    Error::Protocol(format!(
                        "chosen grid point untrainable on outer fold {fold}: {e}"
                    ))
                } else {
                    e
                }
            })?;
        let metrics = compute_metrics(&cm)?;
        pooled.merge(&cm);
        folds.push(FoldOutcome {
            fold,
            chosen: grid[chosen_index].clone(),
            chosen_index,
            inner_mean_gm,
            confusion: cm,
            metrics,
        });
    }

    let pooled_metrics = compute_metrics(&pooled)?;
    let macro_metrics = macro_average(&folds);
    Ok(CvResult {
        method,
        target_class: target,
        seed: plan.seed,
        k_inner,
        plan: plan.clone(),
        folds,
        pooled_confusion: pooled,
        pooled_metrics,
        macro_metrics,
        skipped_points: skipped_total,
    })
}

/// Structured results document: run metadata, per-fold choices and counts,
/// pooled and macro metrics, plus the caller's full resolved configuration so
/// a rerun can start from this document alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultsDoc {
    pub format: String,
    pub version: u32,
    pub kernel_family: KernelFamily,
    pub reg_catalog: String,
    pub subspace_kernelization: String,
    pub grid_points: usize,
    pub result: CvResult,
    pub config: serde_json::Value,
}

pub fn build_results_doc(
    result: &CvResult,
    kernel_family: KernelFamily,
    grid_points: usize,
    config: serde_json::Value,
) -> ResultsDoc {
    ResultsDoc {
        format: RESULTS_FORMAT.to_string(),
        version: RESULTS_VERSION,
        kernel_family,
        reg_catalog: REG_CATALOG_TAG.to_string(),
        subspace_kernelization: SUBSPACE_KERNELIZATION.to_string(),
        grid_points,
        result: result.clone(),
        config,
    }
}

/// One line of the text report.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub method: String,
    pub target: String,
    pub metrics: MetricsReport,
}

impl ReportRow {
    pub fn from_confusion(method: &str, cm: &ConfusionMatrix) -> Result<Self> {
        Ok(ReportRow {
            method: method.to_string(),
            target: cm.positive_class.clone(),
            metrics: compute_metrics(cm)?,
        })
    }
}

impl CvResult {
    /// Label like "ms_svdd (rbf)"; the kernel family is uniform across folds.
    pub fn method_label(&self) -> String {
        let family = match self.folds.first().map(|f| &f.chosen.kernel) {
            Some(KernelSpec::Rbf { .. }) => "rbf",
            _ => "linear",
        };
        format!("{} ({family})", self.method.id())
    }

    pub fn report_row(&self) -> ReportRow {
        ReportRow {
            method: self.method_label(),
            target: self.target_class.clone(),
            metrics: self.pooled_metrics.clone(),
        }
    }
}

/// Renders rows as a fixed-width table, two decimals per metric, row order
/// preserved.
pub fn render_report(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<26} {:<10} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "Method", "Target", "Sen", "Spe", "Pre", "F1", "Acc", "GM"
    );
    let _ = writeln!(out, "{}", "-".repeat(85));
    for row in rows {
        let m = &row.metrics;
        let _ = writeln!(
            out,
            "{:<26} {:<10} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2}",
            row.method, row.target, m.sen, m.spe, m.pre, m.f1, m.acc, m.gm
        );
    }
    out
}
