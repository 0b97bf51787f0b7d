//! Linear models under tree-structured autocorrelation.
//!
//! Observations at the tips of a rooted tree with branch lengths are
//! correlated through shared ancestry. This crate fits GLS models under
//! Brownian-motion (or OU) covariance, reports effective sample sizes and their
//! bounds, scores models with corrected information criteria, picks
//! informative tip subsets, and runs the simulation experiments that check all
//! of the above.

pub use nalgebra;

pub mod cov;
pub mod design;
pub mod error;
pub mod ess;
pub mod gls;
pub mod linalg;
pub mod modelsel;
pub mod report;
pub mod rng;
pub mod sim;
pub mod traits;
pub mod tree;

pub use cov::{
    bm_covariance, ou_covariance, quadratic_forms_dense, quadratic_forms_pruning,
    symmetric_tree_eigenvalues, CovarianceSpec, QuadraticForms,
};
pub use design::{
    exhaustive_design, random_design_bands, score_subsample, stepwise_design, DesignMethod,
    DesignResult, Quantiles, RandomBand,
};
pub use error::{Error, Result};
pub use ess::{ess_bounds, ess_intercept, ess_intercept_with, ess_lineage, EssReport, LineageEss};
pub use gls::{
    covariate_sigma_hat, fit_shift_model, gls_fit, gls_fit_dense, shrinkage_estimate, FitSummary,
    GlsFit, ShiftFit, ShiftMode, ShiftSpec,
};
pub use modelsel::{aic, bic_corrected_m0, bic_corrected_m1, bic_standard, ModelScore};
pub use sim::{
    convergence_experiment, make_replicated_tree, make_symmetric_tree, phase_transition_curve,
    random_tree, simulate_bm, simulate_traits, ConvergenceConfig, RandomTreeOptions,
    ReplicationSpec, SymmetricTreeSpec,
};
pub use traits::{read_trait_table, TraitTable};
pub use tree::{
    parse_newick, reroot, restrict_to_tips, tree_stats, write_newick, HeightPolicy, NodeId,
    PhyloTree, TreeBuilder, TreeStats,
};
