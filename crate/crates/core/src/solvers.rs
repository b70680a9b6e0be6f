//! Dual solvers for the minimum enclosing hypersphere and the ν-parameterized
//! one-class SVM, plus decision functions and KKT audits.
//!
//! Both duals are instances of one box-and-simplex QP,
//!
//! ```text
//! minimize   ½ q αᵀKα + pᵀα    s.t.  Σα = 1,  0 ≤ αᵢ ≤ upper
//! ```
//!
//! solved by pairwise coordinate ascent on the maximally KKT-violating pair.
//! The hypersphere dual maximizes `Σαᵢ K_ii − αᵀKα` (q = 2, p = −diag K,
//! upper = C); the ν-form minimizes `½ αᵀKα` (q = 1, p = 0, upper = 1/(νN)).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dual weights below this are treated as zero when classifying support vectors.
pub const ALPHA_TOL: f64 = 1e-8;

/// Convergence threshold on the maximal KKT violation of the working pair.
const SMO_TOL: f64 = 1e-7;
const SMO_MAX_ITERS: usize = 100_000;

struct SmoProblem<'a> {
    k: &'a DMatrix<f64>,
    q_scale: f64,
    p: DVector<f64>,
    upper: f64,
}

struct SmoSolution {
    alphas: DVector<f64>,
    iterations: usize,
}

fn solve_smo(problem: &SmoProblem) -> Result<SmoSolution> {
    let n = problem.k.nrows();
    let upper = problem.upper;
    let mut alphas = DVector::from_element(n, 1.0 / n as f64);
    let mut g = problem.q_scale * (problem.k * &alphas) + &problem.p;

    let mut iterations = 0;
    while iterations < SMO_MAX_ITERS {
        // i: steepest descent among coordinates that can grow;
        // j: steepest ascent among coordinates that can shrink
        let mut i_inc = None;
        let mut j_dec = None;
        for idx in 0..n {
            if alphas[idx] < upper - ALPHA_TOL
                && i_inc.map_or(true, |i: usize| g[idx] < g[i])
            {
                i_inc = Some(idx);
            }
            if alphas[idx] > ALPHA_TOL && j_dec.map_or(true, |j: usize| g[idx] > g[j]) {
                j_dec = Some(idx);
            }
        }
        let (i, j) = match (i_inc, j_dec) {
            (Some(i), Some(j)) => (i, j),
            _ => break, // fully saturated box; nothing movable
        };
        let violation = g[j] - g[i];
        if violation < SMO_TOL {
            break;
        }

        let t_max = (upper - alphas[i]).min(alphas[j]);
        let kappa = problem.q_scale
            * (problem.k[(i, i)] + problem.k[(j, j)] - 2.0 * problem.k[(i, j)]);
        let t = if kappa > 1e-300 {
            (violation / kappa).min(t_max)
        } else {
            t_max
        };
        alphas[i] += t;
        alphas[j] -= t;
        let qt = problem.q_scale * t;
        for idx in 0..n {
            g[idx] += qt * (problem.k[(idx, i)] - problem.k[(idx, j)]);
        }
        iterations += 1;
    }

    if alphas.iter().any(|a| !a.is_finite()) {
        return Err(Error::Numeric("dual weights diverged".into()));
    }
    Ok(SmoSolution { alphas, iterations })
}

/// Trained hypersphere: dual weights, radius, and optional explicit center.
///
/// `center` is present when training ran on coordinate columns; gram-only
/// training leaves it `None` and decisions go through the kernel expansion.
#[derive(Debug, Clone)]
pub struct SvddModel {
    pub alphas: DVector<f64>,
    pub c: f64,
    pub radius_sq: f64,
    pub center: Option<DVector<f64>>,
    /// Indices with α above [`ALPHA_TOL`].
    pub support_idx: Vec<usize>,
    /// ξᵢ = max(0, ‖zᵢ − a‖² − R²), recorded post-hoc.
    pub slacks: DVector<f64>,
    /// Dual objective Σαᵢ K_ii − αᵀKα at the solution.
    pub objective: f64,
    pub iterations: usize,
    /// αᵀKα, cached for kernel-expansion decisions.
    pub alpha_quad: f64,
    /// Per-training-sample squared distance to the center.
    pub train_dist_sq: DVector<f64>,
}

impl SvddModel {
    pub fn n_train(&self) -> usize {
        self.alphas.len()
    }

    /// Decision value for each training sample; non-negative means inside.
    pub fn train_decisions(&self) -> DVector<f64> {
        DVector::from_fn(self.n_train(), |i, _| self.radius_sq - self.train_dist_sq[i])
    }
}

fn validate_gram(k: &DMatrix<f64>) -> Result<usize> {
    let n = k.nrows();
    if n == 0 || k.ncols() != n {
        return Err(Error::Shape(format!(
            "gram must be square and non-empty, got {}x{}",
            n,
            k.ncols()
        )));
    }
    if k.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite entries in gram".into()));
    }
    Ok(n)
}

/// Solves the hypersphere dual over a precomputed gram.
pub fn solve_svdd_gram(k: &DMatrix<f64>, c: f64) -> Result<SvddModel> {
    let n = validate_gram(k)?;
    if !c.is_finite() || c * (n as f64) < 1.0 - 1e-12 {
        return Err(Error::Infeasible(format!(
            "C = {c} with N = {n}: Σα = 1 needs C ≥ 1/N"
        )));
    }

    let problem = SmoProblem {
        k,
        q_scale: 2.0,
        p: DVector::from_fn(n, |i, _| -k[(i, i)]),
        upper: c,
    };
    let sol = solve_smo(&problem)?;
    let alphas = sol.alphas;

    let k_alpha = k * &alphas;
    let alpha_quad = alphas.dot(&k_alpha);
    let train_dist_sq = DVector::from_fn(n, |i, _| k[(i, i)] - 2.0 * k_alpha[i] + alpha_quad);

    let support_idx: Vec<usize> = (0..n).filter(|&i| alphas[i] > ALPHA_TOL).collect();
    let unbounded: Vec<usize> = support_idx
        .iter()
        .copied()
        .filter(|&i| alphas[i] < c - ALPHA_TOL)
        .collect();
    let radius_sq = if !unbounded.is_empty() {
        unbounded.iter().map(|&i| train_dist_sq[i]).sum::<f64>() / unbounded.len() as f64
    } else {
        // all support vectors at the box bound: R² sits between the farthest
        // interior point and the nearest bound point; take the midpoint, or the
        // bound side alone when no interior point exists
        let hi = (0..n)
            .filter(|&i| alphas[i] <= ALPHA_TOL)
            .map(|i| train_dist_sq[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let lo = support_idx
            .iter()
            .map(|&i| train_dist_sq[i])
            .fold(f64::INFINITY, f64::min);
        if hi.is_finite() {
            0.5 * (hi + lo)
        } else {
            lo
        }
    };
    let radius_sq = radius_sq.max(0.0);
    let slacks = DVector::from_fn(n, |i, _| (train_dist_sq[i] - radius_sq).max(0.0));
    let objective = (0..n).map(|i| alphas[i] * k[(i, i)]).sum::<f64>() - alpha_quad;

    Ok(SvddModel {
        alphas,
        c,
        radius_sq,
        center: None,
        support_idx,
        slacks,
        objective,
        iterations: sol.iterations,
        alpha_quad,
        train_dist_sq,
    })
}

/// Solves the hypersphere dual on coordinate columns (linear kernel), storing
/// the explicit center `a = Σαᵢ zᵢ`.
pub fn solve_svdd(z: &DMatrix<f64>, c: f64) -> Result<SvddModel> {
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite training coordinates".into()));
    }
    let k = z.transpose() * z;
    let mut model = solve_svdd_gram(&k, c)?;
    model.center = Some(z * &model.alphas);
    Ok(model)
}

/// Decision value `R² − ‖z − a‖²` for a coordinate-space model.
pub fn svdd_decision(model: &SvddModel, z: &DVector<f64>) -> Result<f64> {
    let center = model.center.as_ref().ok_or_else(|| {
        Error::Contract("model was trained on a gram; use the kernel-expansion decision".into())
    })?;
    if center.len() != z.len() {
        return Err(Error::Shape(format!(
            "point has dimension {}, model center has {}",
            z.len(),
            center.len()
        )));
    }
    Ok(model.radius_sq - (z - center).norm_squared())
}

/// Decision value from kernel data: `k_z` holds K(z, zᵢ) over training samples
/// and `k_zz` = K(z, z).
pub fn svdd_decision_kernel(model: &SvddModel, k_z: &DVector<f64>, k_zz: f64) -> Result<f64> {
    if k_z.len() != model.n_train() {
        return Err(Error::Shape(format!(
            "kernel row has {} entries, model has {} training samples",
            k_z.len(),
            model.n_train()
        )));
    }
    let dist_sq = k_zz - 2.0 * model.alphas.dot(k_z) + model.alpha_quad;
    Ok(model.radius_sq - dist_sq)
}

/// Largest KKT violation over the training set; the audit every solve must pass.
///
/// α = 0 requires decision ≥ 0, α = C requires decision ≤ 0, unbounded support
/// vectors require decision = 0 (each up to the returned magnitude).
pub fn svdd_kkt_violation(model: &SvddModel) -> f64 {
    let decisions = model.train_decisions();
    let mut worst = 0.0f64;
    for i in 0..model.n_train() {
        let a = model.alphas[i];
        let d = decisions[i];
        let v = if a <= ALPHA_TOL {
            (-d).max(0.0)
        } else if a >= model.c - ALPHA_TOL {
            d.max(0.0)
        } else {
            d.abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Trained ν-form one-class SVM over a gram.
#[derive(Debug, Clone)]
pub struct OcsvmModel {
    pub alphas: DVector<f64>,
    pub nu: f64,
    pub rho: f64,
    pub support_idx: Vec<usize>,
    /// ½ αᵀKα at the solution.
    pub objective: f64,
    pub iterations: usize,
    /// (Kα)ᵢ per training sample; decision_i = (Kα)ᵢ − ρ.
    pub train_scores: DVector<f64>,
}

impl OcsvmModel {
    pub fn n_train(&self) -> usize {
        self.alphas.len()
    }

    pub fn upper(&self) -> f64 {
        1.0 / (self.nu * self.n_train() as f64)
    }

    pub fn train_decisions(&self) -> DVector<f64> {
        DVector::from_fn(self.n_train(), |i, _| self.train_scores[i] - self.rho)
    }
}

/// Solves the ν-parameterized one-class dual over a precomputed gram.
pub fn solve_ocsvm(k: &DMatrix<f64>, nu: f64) -> Result<OcsvmModel> {
    let n = validate_gram(k)?;
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::Parameter(format!("nu must lie in (0, 1], got {nu}")));
    }
    let upper = 1.0 / (nu * n as f64);

    let problem = SmoProblem {
        k,
        q_scale: 1.0,
        p: DVector::zeros(n),
        upper,
    };
    let sol = solve_smo(&problem)?;
    let alphas = sol.alphas;
    let train_scores = k * &alphas; // equals the gradient since p = 0, q = 1
    let objective = 0.5 * alphas.dot(&train_scores);

    let support_idx: Vec<usize> = (0..n).filter(|&i| alphas[i] > ALPHA_TOL).collect();
    let unbounded: Vec<usize> = support_idx
        .iter()
        .copied()
        .filter(|&i| alphas[i] < upper - ALPHA_TOL)
        .collect();
    let rho = if !unbounded.is_empty() {
        unbounded.iter().map(|&i| train_scores[i]).sum::<f64>() / unbounded.len() as f64
    } else {
        let lo = support_idx
            .iter()
            .map(|&i| train_scores[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = (0..n)
            .filter(|&i| alphas[i] <= ALPHA_TOL)
            .map(|i| train_scores[i])
            .fold(f64::INFINITY, f64::min);
        if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            lo
        }
    };

    Ok(OcsvmModel {
        alphas,
        nu,
        rho,
        support_idx,
        objective,
        iterations: sol.iterations,
        train_scores,
    })
}

/// Decision value `Σαᵢ K(z, zᵢ) − ρ`; non-negative means target.
pub fn ocsvm_decision(model: &OcsvmModel, k_z: &DVector<f64>) -> Result<f64> {
    if k_z.len() != model.n_train() {
        return Err(Error::Shape(format!(
            "kernel row has {} entries, model has {} training samples",
            k_z.len(),
            model.n_train()
        )));
    }
    Ok(model.alphas.dot(k_z) - model.rho)
}

/// Largest KKT violation for a ν-form solution; mirror of [`svdd_kkt_violation`].
pub fn ocsvm_kkt_violation(model: &OcsvmModel) -> f64 {
    let upper = model.upper();
    let decisions = model.train_decisions();
    let mut worst = 0.0f64;
    for i in 0..model.n_train() {
        let a = model.alphas[i];
        let d = decisions[i];
        let v = if a <= ALPHA_TOL {
            (-d).max(0.0)
        } else if a >= upper - ALPHA_TOL {
            d.max(0.0)
        } else {
            d.abs()
        };
        worst = worst.max(v);
    }
    worst
}
