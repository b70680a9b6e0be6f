//! Deterministic synthetic datasets and brute-force dual oracles.
//!
//! The two-view generator plants a fraction of the outliers inside each single
//! view's target cloud while keeping every outlier exposed in at least one
//! view, so decision-strategy comparisons have a known ground truth. The
//! oracles exhaustively scan the dual feasible set at a fixed grid resolution
//! and exist purely to check the iterative solvers.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::dataset::{ModalityView, MultiViewDataset};
use crate::error::{Error, Result};
use crate::rng::PortableRng;

pub const TARGET_LABEL: &str = "target";
pub const OUTLIER_LABEL: &str = "outlier";

/// Stream id for synthetic draws; distinct from the fold-plan stream.
const SYNTH_STREAM: u64 = 0x5A17;

/// Generator parameters. `dims` has one entry per view, so its length is the
/// view count.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_target: usize,
    pub n_outlier: usize,
    pub dims: Vec<usize>,
    /// Radial distance of planted-outside outliers, in units of the target
    /// cloud's per-axis standard deviation.
    pub separation: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn view_count(&self) -> usize {
        self.dims.len()
    }

    fn validate(&self) -> Result<()> {
        if self.n_target == 0 || self.n_outlier == 0 {
            return Err(Error::Parameter("need at least one sample per class".into()));
        }
        if self.dims.is_empty() || self.dims.iter().any(|&d| d == 0) {
            return Err(Error::Parameter("every view needs dimension >= 1".into()));
        }
        if !(self.separation > 0.0) {
            return Err(Error::Parameter(format!(
                "separation must be positive, got {}",
                self.separation
            )));
        }
        Ok(())
    }
}

fn gaussian_column(rng: &mut PortableRng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.next_gaussian())
}

/// A point at radial distance `sep` in a random direction, plus unit noise.
fn outside_column(rng: &mut PortableRng, d: usize, sep: f64) -> DVector<f64> {
    let mut dir = gaussian_column(rng, d);
    let norm = dir.norm();
    if norm < 1e-12 {
        dir = DVector::zeros(d);
        dir[0] = 1.0;
    } else {
        dir /= norm;
    }
    dir * sep + gaussian_column(rng, d)
}

fn gen_multiview(spec: &SynthSpec) -> Result<MultiViewDataset> {
    spec.validate()?;
    let v_count = spec.view_count();
    if v_count > 2 {
        return Err(Error::Parameter(format!(
            "generator supports 1 or 2 views, got {v_count}"
        )));
    }
    let mut rng = PortableRng::from_seed_stream(spec.seed, SYNTH_STREAM);
    let n = spec.n_target + spec.n_outlier;

    // targets first, view by view
    let mut views: Vec<DMatrix<f64>> = spec
        .dims
        .iter()
        .map(|&d| DMatrix::zeros(d, n))
        .collect();
    for (v, &d) in spec.dims.iter().enumerate() {
        for i in 0..spec.n_target {
            views[v].set_column(i, &gaussian_column(&mut rng, d));
        }
    }

    // outliers: with two views, the first ~15% hide inside view 1, the next
    // ~15% inside view 2, the rest sit outside both; a single view hides none
    let n_in = if v_count == 2 {
        ((spec.n_outlier as f64 * 0.15).ceil() as usize).max(1)
    } else {
        0
    };
    for j in 0..spec.n_outlier {
        let col = spec.n_target + j;
        let inside_view = if v_count == 2 && j < n_in {
            Some(0)
        } else if v_count == 2 && j < 2 * n_in {
            Some(1)
        } else {
            None
        };
        for (v, &d) in spec.dims.iter().enumerate() {
            let point = if inside_view == Some(v) {
                gaussian_column(&mut rng, d)
            } else {
                outside_column(&mut rng, d, spec.separation)
            };
            views[v].set_column(col, &point);
        }
    }

    let modality_views = views
        .into_iter()
        .enumerate()
        .map(|(v, features)| ModalityView {
            modality_id: v + 1,
            features,
        })
        .collect();
    let labels = (0..n)
        .map(|i| {
            if i < spec.n_target {
                TARGET_LABEL.to_string()
            } else {
                OUTLIER_LABEL.to_string()
            }
        })
        .collect();
    let ids = (0..n).map(|i| format!("s{i:04}")).collect();
    MultiViewDataset::new(modality_views, labels, ids, TARGET_LABEL.to_string())
}

/// Two-view dataset with planted per-view outlier overlap (see module docs).
pub fn gen_two_view(spec: &SynthSpec) -> Result<MultiViewDataset> {
    if spec.view_count() != 2 {
        return Err(Error::Parameter(format!(
            "two-view generator got {} dims",
            spec.view_count()
        )));
    }
    gen_multiview(spec)
}

/// Single-view dataset: targets in the unit cloud, all outliers outside.
pub fn gen_one_view(spec: &SynthSpec) -> Result<MultiViewDataset> {
    if spec.view_count() != 1 {
        return Err(Error::Parameter(format!(
            "one-view generator got {} dims",
            spec.view_count()
        )));
    }
    gen_multiview(spec)
}

/// Writes one CSV per view as `{stem}_view{v}.csv` (module-1 format: header,
/// `subject_id`, feature columns, `label`). Returns the written paths.
pub fn write_dataset_csv(
    ds: &MultiViewDataset,
    dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for view in ds.views() {
        let path = dir.join(format!("{stem}_view{}.csv", view.modality_id));
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["subject_id".to_string()];
        for f in 1..=view.feature_dim() {
            header.push(format!("f{f}"));
        }
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..ds.n_samples() {
            let mut rec = vec![ds.subject_ids()[i].clone()];
            for r in 0..view.feature_dim() {
                rec.push(format!("{}", view.features[(r, i)]));
            }
            rec.push(ds.labels()[i].clone());
            w.write_record(&rec)?;
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

/// Largest instance size the exhaustive oracles accept.
pub const ORACLE_MAX_N: usize = 6;

/// Default simplex grid resolution for an instance of size `n`.
pub fn oracle_grid_step(n: usize) -> f64 {
    if n <= 3 {
        1e-3
    } else {
        1e-2
    }
}

/// Enumerates every α on the simplex {Σα = 1, 0 ≤ αᵢ ≤ upper} at the grid
/// resolution and calls `visit(α, Σαᵢ·K_ii, αᵀKα)` for each.
fn enumerate_simplex(
    k: &DMatrix<f64>,
    upper: f64,
    grid_step: f64,
    visit: &mut impl FnMut(&[f64], f64, f64),
) -> Result<()> {
    let n = k.nrows();
    if n > ORACLE_MAX_N {
        return Err(Error::OracleScale(format!(
            "oracle accepts N <= {ORACLE_MAX_N}, got {n}"
        )));
    }
    if !(grid_step > 0.0 && grid_step < 1.0) {
        return Err(Error::Parameter(format!("bad grid step {grid_step}")));
    }
    let total_steps = (1.0 / grid_step).round() as i64;
    let max_steps = ((upper / grid_step) + 1e-9).floor() as i64;
    if max_steps * (n as i64) < total_steps {
        return Err(Error::Infeasible(format!(
            "upper bound {upper} cannot reach Σα = 1 with N = {n}"
        )));
    }

    // depth-first over step counts with running objective pieces
    fn recurse(
        k: &DMatrix<f64>,
        grid_step: f64,
        max_steps: i64,
        idx: usize,
        remaining: i64,
        alphas: &mut Vec<f64>,
        lin: f64,
        quad: f64,
        visit: &mut impl FnMut(&[f64], f64, f64),
    ) {
        let n = k.nrows();
        if idx == n - 1 {
            if remaining <= max_steps {
                let a = remaining as f64 * grid_step;
                let cross: f64 = (0..idx).map(|j| alphas[j] * k[(j, idx)]).sum();
                let lin2 = lin + a * k[(idx, idx)];
                let quad2 = quad + 2.0 * a * cross + a * a * k[(idx, idx)];
                alphas.push(a);
                visit(alphas, lin2, quad2);
                alphas.pop();
            }
            return;
        }
        let slots_left = (n - 1 - idx) as i64;
        let lo = (remaining - slots_left * max_steps).max(0);
        let hi = remaining.min(max_steps);
        let cross: f64 = (0..idx).map(|j| alphas[j] * k[(j, idx)]).sum();
        for steps in lo..=hi {
            let a = steps as f64 * grid_step;
            let lin2 = lin + a * k[(idx, idx)];
            let quad2 = quad + 2.0 * a * cross + a * a * k[(idx, idx)];
            alphas.push(a);
            recurse(
                k,
                grid_step,
                max_steps,
                idx + 1,
                remaining - steps,
                alphas,
                lin2,
                quad2,
                visit,
            );
            alphas.pop();
        }
    }

    let mut alphas = Vec::with_capacity(n);
    recurse(
        k,
        grid_step,
        max_steps,
        0,
        total_steps,
        &mut alphas,
        0.0,
        0.0,
        visit,
    );
    Ok(())
}

/// Exhaustive maximizer of the hypersphere dual `Σαᵢ K_ii − αᵀKα` over the
/// gridded simplex. Returns the best point and its objective.
pub fn svdd_bruteforce(
    k: &DMatrix<f64>,
    c: f64,
    grid_step: f64,
) -> Result<(DVector<f64>, f64)> {
    let n = k.nrows();
    let mut best = f64::NEG_INFINITY;
    let mut best_alpha = vec![0.0; n];
    enumerate_simplex(k, c, grid_step, &mut |alphas, lin, quad| {
        let obj = lin - quad;
        if obj > best {
            best = obj;
            best_alpha.copy_from_slice(alphas);
        }
    })?;
    Ok((DVector::from_vec(best_alpha), best))
}

/// Exhaustive minimizer of the ν-form dual `½ αᵀKα` with upper bound 1/(νN).
pub fn ocsvm_bruteforce(
    k: &DMatrix<f64>,
    nu: f64,
    grid_step: f64,
) -> Result<(DVector<f64>, f64)> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::Parameter(format!("nu must lie in (0, 1], got {nu}")));
    }
    let n = k.nrows();
    let upper = 1.0 / (nu * n as f64);
    let mut best = f64::INFINITY;
    let mut best_alpha = vec![0.0; n];
    enumerate_simplex(k, upper, grid_step, &mut |alphas, _lin, quad| {
        let obj = 0.5 * quad;
        if obj < best {
            best = obj;
            best_alpha.copy_from_slice(alphas);
        }
    })?;
    Ok((DVector::from_vec(best_alpha), best))
}
