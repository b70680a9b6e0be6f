//! Multi-view one-class classification.
//!
//! Solvers for hypersphere-based one-class models (support vector data
//! description and the ν-parameterized one-class SVM), subspace-learning
//! variants that project one or several modalities into a shared low-dimensional
//! space before fitting the hypersphere, and a deterministic nested
//! cross-validation harness with a fixed hyperparameter grid.
//!
//! Everything stochastic runs off [`rng::PortableRng`], so results reproduce
//! bit-for-bit across platforms and runs.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod kernels;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod solvers;
pub mod subspace;
pub mod synthetic;

pub use dataset::{
    concatenate_views, load_multiview_csv, split_target_only, stratified_folds, FoldPlan,
    ModalityView, MultiViewDataset, Standardizer,
};
pub use error::{Error, Result};
pub use evaluation::{
    build_results_doc, cross_validate, cross_validate_with_plan, grid_expand, render_report,
    resolved_grid_spec, CvResult, GridSpec, KernelFamily, ReportRow, ResultsDoc,
};
pub use kernels::{gram_matrix, npt_embed, npt_map, KernelSpec, NptEmbedding};
pub use metrics::{compute_metrics, ConfusionMatrix, MetricsReport};
pub use models::{
    decide_dataset, decide_views, decision_matrix, load_model, save_model, train_model,
    MethodKind, TrainedModel,
};
pub use rng::PortableRng;
pub use solvers::{
    solve_ocsvm, solve_svdd, solve_svdd_gram, svdd_decision, svdd_decision_kernel, OcsvmModel,
    SvddModel,
};
pub use subspace::{
    decision_values, ms_svdd_decide, strategy_accepts, subspace_decide, train_subspace,
    DecisionStrategy, HyperParams, RegFamily, RegularizationSpec, SubspaceMethod, SubspaceModel,
};
pub use synthetic::{gen_one_view, gen_two_view, svdd_bruteforce, SynthSpec};
