//! Acceptance gate: one test per release criterion, in order. Each test
//! asserts its criterion at the stated tolerance and prints a PASS line
//! (visible with --nocapture); a failing criterion fails the suite.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use mvocc_core::dataset::stratified_folds;
use mvocc_core::evaluation::{
    build_results_doc, cross_validate, cross_validate_with_plan, grid_expand, GridSpec,
    KernelFamily, ResultsDoc, REG_CATALOG_TAG,
};
use mvocc_core::kernels::{gram_matrix, npt_embed, npt_map, KernelSpec, NPT_RANK_TOL};
use mvocc_core::metrics::{compute_metrics, ConfusionMatrix};
use mvocc_core::models::MethodKind;
use mvocc_core::rng::PortableRng;
use mvocc_core::solvers::{
    ocsvm_kkt_violation, solve_ocsvm, solve_svdd, solve_svdd_gram, svdd_decision,
    svdd_kkt_violation,
};
use mvocc_core::subspace::{
    decision_values, lagrangian_gradient, lagrangian_value, strategy_accepts, train_subspace,
    DecisionStrategy, HyperParams, RegFamily, RegularizationSpec, SubspaceMethod,
};
use mvocc_core::synthetic::{
    gen_two_view, ocsvm_bruteforce, oracle_grid_step, svdd_bruteforce, SynthSpec,
};

fn assert_2dp(got: f64, want: f64, what: &str) {
    assert!(
        (got - want).abs() < 0.005,
        "{what}: got {got:.4}, want {want:.2}"
    );
}

#[test]
fn a1_reference_confusion_rows_reproduce_exactly() {
    let rows = [
        (
            ConfusionMatrix::from_counts(76, 12, 28, 14, "MI"),
            [86.36, 33.33, 73.08, 79.17, 69.23, 53.65],
            "plain hypersphere row",
        ),
        (
            ConfusionMatrix::from_counts(75, 13, 24, 18, "MI"),
            [85.23, 42.86, 75.76, 80.21, 71.54, 60.44],
            "multi-modal ds4 row",
        ),
    ];
    for (cm, want, what) in &rows {
        let m = compute_metrics(cm).unwrap();
        assert_2dp(m.sen, want[0], &format!("{what} sen"));
        assert_2dp(m.spe, want[1], &format!("{what} spe"));
        assert_2dp(m.pre, want[2], &format!("{what} pre"));
        assert_2dp(m.f1, want[3], &format!("{what} f1"));
        assert_2dp(m.acc, want[4], &format!("{what} acc"));
        assert_2dp(m.gm, want[5], &format!("{what} gm"));
        assert!(m.flags.is_empty());
    }
    println!("PASS a1: both reference confusion rows reproduce all six metrics to 2 decimals");
}

#[test]
fn a2_unreproducible_reference_values_are_substituted() {
    // The remaining reference rows depend on an unpublished fold seed,
    // unpublished per-fold hyperparameter choices, and upstream features that
    // are out of scope here, so they cannot be checked number-for-number.
    // Substitutes: oracle equivalence (a3), gradient audits (a4), embedding
    // consistency (a5), strategy algebra (a6), protocol checks (a7), and the
    // synthetic end-to-end run (a8). This run records everything a rerun
    // needs, which is what makes the substitution honest.
    let ds = gen_two_view(&SynthSpec {
        n_target: 30,
        n_outlier: 15,
        dims: vec![3, 3],
        separation: 6.0,
        seed: 2,
    })
    .unwrap();
    let hp = HyperParams {
        eta: 0.0,
        c: 0.3,
        d: 1,
        reg: RegularizationSpec::none(),
        ds: DecisionStrategy::Ds1,
        kernel: KernelSpec::Linear,
        max_iters: 1,
    };
    let result = cross_validate(&ds, MethodKind::Svdd, &[hp], 5, 5, 7).unwrap();
    let doc = build_results_doc(&result, KernelFamily::Linear, 1, serde_json::json!({}));
    assert_eq!(doc.result.seed, 7);
    assert_eq!(doc.result.folds.len(), 5);
    assert!(doc.result.folds.iter().all(|f| f.chosen.c == 0.3));
    assert!(REG_CATALOG_TAG.contains("reconstruction"));
    println!(
        "PASS a2: unpublished seed/hyperparameters/features make the remaining reference \
         values unreproducible; runs record their own seed and per-fold choices, and \
         criteria a3-a8 stand in"
    );
}

#[test]
fn a3_solver_matches_bruteforce_oracle() {
    let started = Instant::now();
    let mut rng = PortableRng::from_seed(0xACCE);
    let sizes: Vec<usize> = [2usize, 3, 4, 5, 6]
        .iter()
        .flat_map(|&n| {
            std::iter::repeat(n).take(match n {
                2 | 3 => 10,
                4 | 5 => 12,
                _ => 6,
            })
        })
        .collect();
    assert!(sizes.len() >= 50);

    for (case, &n) in sizes.iter().enumerate() {
        let d = n + 1;
        let scale = 1.0 / (d as f64).sqrt();
        let z = DMatrix::from_fn(d, n, |_, _| scale * rng.next_gaussian());
        let rbf = case % 2 == 1;
        let k = if rbf {
            let sigma = 0.5 + 2.0 * rng.next_f64();
            gram_matrix(&z, &z, &KernelSpec::rbf(sigma).unwrap()).unwrap()
        } else {
            z.transpose() * &z
        };
        // keep the box bound on the oracle lattice so its discretization
        // error stays quadratic in the step
        let step = oracle_grid_step(n);
        let c_min = 1.0 / n as f64 + 0.03;
        let c_raw = c_min + rng.next_f64() * (0.45_f64.max(c_min + 0.05) - c_min);
        let c = (c_raw / step).round() * step;

        let model = solve_svdd_gram(&k, c).unwrap();
        let kkt = svdd_kkt_violation(&model);
        assert!(kkt <= 1e-6, "case {case} (n={n}): KKT violation {kkt:.3e}");
        let (_, oracle_obj) = svdd_bruteforce(&k, c, step).unwrap();
        assert!(
            model.objective >= oracle_obj - 1e-9,
            "case {case}: solver {} below oracle {}",
            model.objective,
            oracle_obj
        );
        assert!(
            (model.objective - oracle_obj).abs() <= 1e-3,
            "case {case} (n={n}, rbf={rbf}): objective gap {:.3e}",
            (model.objective - oracle_obj).abs()
        );
    }

    // margin-form spot checks ride the same oracle
    for case in 0..8 {
        let n = 2 + case % 4;
        let step = oracle_grid_step(n);
        let z = DMatrix::from_fn(n + 1, n, |_, _| rng.next_gaussian() / (n as f64).sqrt());
        let k = gram_matrix(&z, &z, &KernelSpec::rbf(1.5).unwrap()).unwrap();
        let u_min = 1.0 / n as f64 + 0.05;
        let u_raw = u_min + rng.next_f64() * (0.9 - u_min);
        let upper = (u_raw / step).round() * step;
        let nu = 1.0 / (upper * n as f64);
        let model = solve_ocsvm(&k, nu).unwrap();
        assert!(ocsvm_kkt_violation(&model) <= 1e-6);
        let (_, oracle_obj) = ocsvm_bruteforce(&k, nu, step).unwrap();
        assert!(model.objective <= oracle_obj + 1e-9);
        assert!((model.objective - oracle_obj).abs() <= 1e-3);
    }

    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(60),
        "oracle sweep took {elapsed:?}"
    );
    println!(
        "PASS a3: {} hypersphere + 8 margin instances within 1e-3 of the oracle, \
         KKT clean at 1e-6, in {elapsed:?}",
        sizes.len()
    );
}

#[test]
fn a4_analytic_gradients_match_finite_differences() {
    let started = Instant::now();
    let mut configs = 0usize;
    let mut check = |v_count: usize, family: RegFamily, index: u8, seed: u64| {
        let mut rng = PortableRng::from_seed(seed);
        let d = 2;
        let dims: Vec<usize> = (0..v_count).map(|v| 3 + v).collect();
        let n = 6;
        let qs: Vec<DMatrix<f64>> = dims
            .iter()
            .map(|&dim| DMatrix::from_fn(d, dim, |_, _| rng.next_gaussian()))
            .collect();
        let fs: Vec<DMatrix<f64>> = dims
            .iter()
            .map(|&dim| DMatrix::from_fn(dim, n, |_, _| rng.next_gaussian()))
            .collect();
        let mut alphas = DVector::from_fn(v_count * n, |_, _| rng.next_f64() + 1e-3);
        let total = alphas.sum();
        alphas /= total;
        let reg = RegularizationSpec {
            family,
            index,
            beta: if index == 0 { 0.0 } else { 0.9 },
        };

        let analytic = lagrangian_gradient(&qs, &fs, &alphas, &reg).unwrap();
        let h = 1e-5;
        for v in 0..v_count {
            let fd = DMatrix::from_fn(d, dims[v], |i, j| {
                let mut plus = qs.clone();
                plus[v][(i, j)] += h;
                let mut minus = qs.clone();
                minus[v][(i, j)] -= h;
                (lagrangian_value(&plus, &fs, &alphas, &reg).unwrap()
                    - lagrangian_value(&minus, &fs, &alphas, &reg).unwrap())
                    / (2.0 * h)
            });
            let err = (&analytic[v] - &fd).norm() / analytic[v].norm().max(1e-8);
            assert!(
                err <= 1e-4,
                "family {family:?} index {index} view {v}: rel err {err:.3e}"
            );
        }
        configs += 1;
    };

    for index in 0..=3u8 {
        check(1, RegFamily::Psi, index, 1000 + index as u64);
        check(1, RegFamily::Psi, index, 2000 + index as u64);
    }
    for index in 0..=6u8 {
        check(2, RegFamily::Omega, index, 3000 + index as u64);
        check(3, RegFamily::Omega, index, 4000 + index as u64);
    }
    assert!(configs >= 20, "only {configs} gradient configurations");
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(60));
    println!(
        "PASS a4: {configs} gradient configurations within 1e-4 of central differences \
         in {elapsed:?}"
    );
}

#[test]
fn a5_kernel_embedding_is_consistent() {
    // reconstruction: embedded columns must regenerate the centered gram
    let mut rng = PortableRng::from_seed(51);
    let z = DMatrix::from_fn(5, 24, |_, _| rng.next_gaussian());
    let k = gram_matrix(&z, &z, &KernelSpec::rbf(2.0).unwrap()).unwrap();
    let emb = npt_embed(&k, NPT_RANK_TOL).unwrap();
    let n = k.nrows();
    let row_means = DVector::from_iterator(n, k.row_iter().map(|r| r.sum() / n as f64));
    let grand = row_means.sum() / n as f64;
    let centered = DMatrix::from_fn(n, n, |i, j| k[(i, j)] - row_means[i] - row_means[j] + grand);
    let phi = emb.embedding();
    let rel = (phi.transpose() * phi - &centered).norm() / centered.norm();
    assert!(rel <= 1e-8, "reconstruction error {rel:.3e}");

    // a linear-kernel embedding is an isometry of the data, so a hypersphere
    // fit in embedded coordinates must reproduce the direct fit's decisions
    let train = DMatrix::from_fn(4, 30, |_, _| rng.next_gaussian());
    let k_lin = train.transpose() * &train;
    let emb_lin = npt_embed(&k_lin, NPT_RANK_TOL).unwrap();
    let c = 0.2;
    let direct = solve_svdd(&train, c).unwrap();
    let embedded = solve_svdd(emb_lin.embedding(), c).unwrap();
    let probes = {
        let mut p = DMatrix::from_fn(4, 20, |_, _| 1.5 * rng.next_gaussian());
        p.view_mut((0, 0), (4, 10))
            .copy_from(&train.view((0, 0), (4, 10)));
        p
    };
    let k_probe = gram_matrix(&train, &probes, &KernelSpec::Linear).unwrap();
    let mapped = npt_map(&emb_lin, &k_probe).unwrap();
    let mut worst = 0.0f64;
    for j in 0..probes.ncols() {
        let want = svdd_decision(&direct, &probes.column(j).into_owned()).unwrap();
        let got = svdd_decision(&embedded, &mapped.column(j).into_owned()).unwrap();
        worst = worst.max((want - got).abs());
    }
    assert!(worst <= 1e-6, "decision drift through embedding {worst:.3e}");
    println!(
        "PASS a5: centered-gram reconstruction at 1e-8 and linear-embedding decisions \
         within {worst:.1e} of the direct fit"
    );
}

#[test]
fn a6_strategy_algebra_holds_exhaustively() {
    // all sign patterns of a two-modality decision pair
    for &a in &[-1.0, -1e-12, 0.0, 1e-12, 1.0] {
        for &b in &[-1.0, -1e-12, 0.0, 1e-12, 1.0] {
            let pair = [a, b];
            let ds1 = strategy_accepts(DecisionStrategy::Ds1, &pair).unwrap();
            let ds2 = strategy_accepts(DecisionStrategy::Ds2, &pair).unwrap();
            let ds3 = strategy_accepts(DecisionStrategy::Ds3, &pair).unwrap();
            let ds4 = strategy_accepts(DecisionStrategy::Ds4, &pair).unwrap();
            assert_eq!(ds1, ds3 && ds4);
            assert_eq!(ds2, ds3 || ds4);
        }
    }

    // and on a trained model over a full batch
    let ds = gen_two_view(&SynthSpec {
        n_target: 40,
        n_outlier: 20,
        dims: vec![4, 4],
        separation: 6.0,
        seed: 61,
    })
    .unwrap();
    let targets: Vec<usize> = (0..ds.n_samples()).filter(|&i| ds.is_target(i)).collect();
    let train = ds.subset(&targets).unwrap();
    let hp = HyperParams {
        eta: 0.1,
        c: 0.2,
        d: 2,
        reg: RegularizationSpec {
            family: RegFamily::Omega,
            index: 0,
            beta: 0.0,
        },
        ds: DecisionStrategy::Ds1,
        kernel: KernelSpec::Linear,
        max_iters: 20,
    };
    let model = train_subspace(SubspaceMethod::MsSvdd, &train, &hp).unwrap();
    let views: Vec<DMatrix<f64>> = ds.views().iter().map(|v| v.features.clone()).collect();
    let dec = decision_values(&model, &views).unwrap();
    let set = |strategy| -> Vec<usize> {
        (0..ds.n_samples())
            .filter(|&j| strategy_accepts(strategy, &[dec[0][j], dec[1][j]]).unwrap())
            .collect()
    };
    let (p1, p2, p3, p4) = (
        set(DecisionStrategy::Ds1),
        set(DecisionStrategy::Ds2),
        set(DecisionStrategy::Ds3),
        set(DecisionStrategy::Ds4),
    );
    let inter: Vec<usize> = p3.iter().copied().filter(|j| p4.contains(j)).collect();
    let mut union: Vec<usize> = p3.clone();
    union.extend(p4.iter().copied().filter(|j| !p3.contains(j)));
    union.sort_unstable();
    assert_eq!(p1, inter);
    assert_eq!(p2, union);
    println!(
        "PASS a6: AND = intersection and OR = union across all sign patterns and a trained \
         {}-sample batch",
        ds.n_samples()
    );
}

#[test]
fn a7_protocol_stratifies_pools_and_selects_correctly() {
    // fold composition at the reference class sizes 88/42
    let ds = gen_two_view(&SynthSpec {
        n_target: 88,
        n_outlier: 42,
        dims: vec![3, 3],
        separation: 6.0,
        seed: 71,
    })
    .unwrap();
    let plan = stratified_folds(&ds, 5, 19).unwrap();
    let mut pos = vec![0usize; 5];
    let mut neg = vec![0usize; 5];
    for i in 0..ds.n_samples() {
        if ds.is_target(i) {
            pos[plan.assignments[i]] += 1;
        } else {
            neg[plan.assignments[i]] += 1;
        }
    }
    let mut pos_sorted = pos.clone();
    pos_sorted.sort_unstable_by(|a, b| b.cmp(a));
    let mut neg_sorted = neg.clone();
    neg_sorted.sort_unstable_by(|a, b| b.cmp(a));
    assert_eq!(pos_sorted, vec![18, 18, 18, 17, 17]);
    assert_eq!(neg_sorted, vec![9, 9, 8, 8, 8]);
    for f in 0..5 {
        assert_eq!(pos[f] + neg[f], 26);
    }

    // pooled outer counts must sum to the class totals
    let hp = HyperParams {
        eta: 0.0,
        c: 0.3,
        d: 1,
        reg: RegularizationSpec::none(),
        ds: DecisionStrategy::Ds1,
        kernel: KernelSpec::Linear,
        max_iters: 1,
    };
    let result = cross_validate_with_plan(&ds, MethodKind::Svdd, &[hp.clone()], &plan, 10).unwrap();
    assert_eq!(result.pooled_confusion.positives(), 88);
    assert_eq!(result.pooled_confusion.negatives(), 42);

    // a strictly dominant grid point must win the inner search on every fold:
    // a tiny kernel width rejects everything unseen, a wide one separates
    let small = gen_two_view(&SynthSpec {
        n_target: 60,
        n_outlier: 20,
        dims: vec![6, 6],
        separation: 6.0,
        seed: 72,
    })
    .unwrap();
    let mut bad = hp.clone();
    bad.kernel = KernelSpec::rbf(0.01).unwrap();
    let mut good = hp;
    good.kernel = KernelSpec::rbf(100.0).unwrap();
    let picked = cross_validate(&small, MethodKind::Svdd, &[bad, good], 5, 10, 73).unwrap();
    for f in &picked.folds {
        assert_eq!(f.chosen_index, 1, "fold {} picked {:?}", f.fold, f.chosen.kernel);
    }
    println!(
        "PASS a7: 88/42 folds split {{18,18,18,17,17}}/{{9,9,8,8,8}}, pooled counts sum to \
         (88, 42), and the dominant point wins all 5 folds"
    );
}

#[test]
fn a8_synthetic_end_to_end_clears_thresholds() {
    let started = Instant::now();
    let ds = gen_two_view(&SynthSpec {
        n_target: 60,
        n_outlier: 20,
        dims: vec![6, 6],
        separation: 6.0,
        seed: 81,
    })
    .unwrap();

    let svdd_grid = grid_expand(
        MethodKind::Svdd,
        KernelFamily::Linear,
        &GridSpec::empty(),
        50,
    )
    .unwrap();
    assert_eq!(svdd_grid.len(), 8);
    let svdd_run = cross_validate(&ds, MethodKind::Svdd, &svdd_grid, 5, 10, 82).unwrap();
    assert!(
        svdd_run.pooled_metrics.gm >= 90.0,
        "plain hypersphere pooled GM {:.2}",
        svdd_run.pooled_metrics.gm
    );

    let gm_for = |strategy: DecisionStrategy| -> f64 {
        let spec = GridSpec {
            eta: Some(vec![0.1]),
            beta: Some(vec![0.0]),
            c: Some(vec![0.2, 0.4]),
            d: Some(vec![2, 3]),
            reg_index: Some(vec![0]),
            ds: Some(vec![strategy]),
            ..GridSpec::default()
        };
        let grid = grid_expand(MethodKind::MsSvdd, KernelFamily::Linear, &spec, 30).unwrap();
        cross_validate(&ds, MethodKind::MsSvdd, &grid, 5, 10, 82)
            .unwrap()
            .pooled_metrics
            .gm
    };
    let gm_and = gm_for(DecisionStrategy::Ds1);
    let gm_first = gm_for(DecisionStrategy::Ds3);
    let gm_second = gm_for(DecisionStrategy::Ds4);
    assert!(
        gm_and >= gm_first && gm_and >= gm_second,
        "AND strategy GM {gm_and:.2} vs single-modality {gm_first:.2}/{gm_second:.2}"
    );

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(300), "end-to-end took {elapsed:?}");
    println!(
        "PASS a8: pooled GM {:.2} >= 90 for the plain hypersphere and AND-strategy GM \
         {gm_and:.2} >= single-modality {gm_first:.2}/{gm_second:.2}, in {elapsed:?}",
        svdd_run.pooled_metrics.gm
    );
}

#[test]
fn a9_reruns_reproduce_pooled_counts_byte_for_byte() {
    let ds = gen_two_view(&SynthSpec {
        n_target: 40,
        n_outlier: 20,
        dims: vec![4, 4],
        separation: 6.0,
        seed: 91,
    })
    .unwrap();
    let grid = grid_expand(
        MethodKind::Svdd,
        KernelFamily::Linear,
        &GridSpec {
            c: Some(vec![0.2, 0.3, 0.4]),
            ..GridSpec::default()
        },
        10,
    )
    .unwrap();

    let first = cross_validate(&ds, MethodKind::Svdd, &grid, 5, 5, 92).unwrap();
    let doc = build_results_doc(&first, KernelFamily::Linear, grid.len(), serde_json::json!({}));
    let stored = serde_json::to_string(&doc).unwrap();

    // a rerun from the stored document's fold plan and the same grid
    let parsed: ResultsDoc = serde_json::from_str(&stored).unwrap();
    let second =
        cross_validate_with_plan(&ds, MethodKind::Svdd, &grid, &parsed.result.plan, 5).unwrap();
    // and an independent rerun from the recorded seed alone
    let third = cross_validate(&ds, MethodKind::Svdd, &grid, 5, 5, parsed.result.seed).unwrap();

    let bytes = |cm: &ConfusionMatrix| serde_json::to_vec(cm).unwrap();
    assert_eq!(bytes(&first.pooled_confusion), bytes(&second.pooled_confusion));
    assert_eq!(bytes(&first.pooled_confusion), bytes(&third.pooled_confusion));
    assert_eq!(
        serde_json::to_vec(&first.folds.iter().map(|f| &f.confusion).collect::<Vec<_>>()).unwrap(),
        serde_json::to_vec(&third.folds.iter().map(|f| &f.confusion).collect::<Vec<_>>()).unwrap(),
    );
    println!("PASS a9: stored-plan and recorded-seed reruns reproduce pooled counts byte-for-byte");
}
