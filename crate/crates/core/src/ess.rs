//! Effective sample sizes and their bounds.
//!
//! The effective sample size of the intercept is `n_e = T · 1ᵗV⁻¹1`: the
//! number of independent draws at distance `T` from the root that would pin
//! down the root state as precisely as the whole correlated sample. Values are
//! finite-sample; no limit is taken.

use serde::Serialize;

use crate::cov::{one_tvi_one, one_tvi_one_masked};
use crate::error::Result;
use crate::gls::{ShiftMode, ShiftSpec};
use crate::tree::{tree_stats, HeightPolicy, NodeId, PhyloTree, TreeStats};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EssReport {
    pub n: usize,
    /// `1ᵗV⁻¹1`.
    pub scaled_ess: f64,
    #[serde(rename = "T")]
    pub height: f64,
    #[serde(rename = "T_policy")]
    pub policy: HeightPolicy,
    pub n_e: f64,
    /// `k T / t` with `k` root edges, the shortest of length `t`.
    pub bound_root: f64,
    /// `L / T`, only for ultrametric trees.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_length: Option<f64>,
    pub ultrametric: bool,
}

/// `(k T / t, L / T)` with the length bound only when all tips are at the
/// same height. A zero-length root edge makes the root bound infinite.
pub fn ess_bounds(tree: &PhyloTree) -> (f64, Option<f64>) {
    bounds_from(&tree_stats(tree), HeightPolicy::Mean)
}

fn bounds_from(stats: &TreeStats, policy: HeightPolicy) -> (f64, Option<f64>) {
    let h = stats.height_with(policy);
    let root = if stats.min_root_edge > 0.0 {
        stats.root_degree as f64 * h / stats.min_root_edge
    } else {
        f64::INFINITY
    };
    let length = stats.is_ultrametric.then(|| stats.total_length / h);
    (root, length)
}

/// ESS of the intercept with `T` the mean tip height.
pub fn ess_intercept(tree: &PhyloTree) -> Result<EssReport> {
    ess_intercept_with(tree, HeightPolicy::Mean)
}

pub fn ess_intercept_with(tree: &PhyloTree, policy: HeightPolicy) -> Result<EssReport> {
    let stats = tree_stats(tree);
    let scaled = one_tvi_one(tree)?;
    let height = stats.height_with(policy);
    let (bound_root, bound_length) = bounds_from(&stats, policy);
    Ok(EssReport {
        n: stats.n_tips,
        scaled_ess: scaled,
        height,
        policy,
        n_e: height * scaled,
        bound_root,
        bound_length,
        ultrametric: stats.is_ultrametric,
    })
}

/// ESS of the two parts of a tree split at a lineage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineageEss {
    #[serde(skip)]
    pub focal: NodeId,
    pub mode: ShiftMode,
    pub n_top: usize,
    pub n_bot: usize,
    /// `1ᵗV_top⁻¹1` on the clade below the focal node (subtending edge removed).
    pub scaled_top: f64,
    /// `1ᵗV_bot⁻¹1` on the remaining tips, original root retained.
    pub scaled_bot: f64,
    #[serde(rename = "T_top")]
    pub height_top: f64,
    #[serde(rename = "T")]
    pub height: f64,
    pub n_e_top: f64,
    pub n_e_bot: f64,
}

/// `n_e,top = T_top · 1ᵗV_top⁻¹1` and `n_e,bot = T · 1ᵗV_bot⁻¹1` with
/// `T_top` taken from `spec` (full height for `S`, clade height for `SB`).
pub fn ess_lineage(tree: &PhyloTree, spec: &ShiftSpec, policy: HeightPolicy) -> Result<LineageEss> {
    let (top, _) = spec.split(tree)?;
    let scaled_top = one_tvi_one(&top)?;
    let mut mask = vec![true; tree.n_tips()];
    for &i in &spec.top_tips {
        mask[i] = false;
    }
    let scaled_bot = one_tvi_one_masked(tree, &mask)?;
    let height = tree_stats(tree).height_with(policy);
    Ok(LineageEss {
        focal: spec.focal,
        mode: spec.mode,
        n_top: spec.top_tips.len(),
        n_bot: tree.n_tips() - spec.top_tips.len(),
        scaled_top,
        scaled_bot,
        height_top: spec.top_height,
        height,
        n_e_top: spec.top_height * scaled_top,
        n_e_bot: height * scaled_bot,
    })
}

impl LineageEss {
    /// Whether this pair was computed for `spec`.
    pub fn matches(&self, spec: &ShiftSpec) -> bool {
        self.focal == spec.focal && self.mode == spec.mode && self.n_top == spec.top_tips.len()
    }
}
