use serde::{Deserialize, Serialize};

use super::PhyloTree;

/// Relative tolerance on tip-height spread for calling a tree ultrametric.
pub const ULTRAMETRIC_RTOL: f64 = 1e-8;

/// How a single tree height `T` is read off non-ultrametric trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeightPolicy {
    #[default]
    Mean,
    Max,
}

impl std::str::FromStr for HeightPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            other => Err(format!(
                "unknown height policy `{other}` (expected mean|max)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeStats {
    pub n_tips: usize,
    /// Sum of all edge lengths (L).
    pub total_length: f64,
    /// Number of edges leaving the root (k).
    pub root_degree: usize,
    /// Shortest edge leaving the root (t).
    pub min_root_edge: f64,
    pub tip_heights: Vec<f64>,
    /// Mean root-to-tip distance (T).
    pub height: f64,
    pub max_height: f64,
    pub is_ultrametric: bool,
}

impl TreeStats {
    pub fn height_with(&self, policy: HeightPolicy) -> f64 {
        match policy {
            HeightPolicy::Mean => self.height,
            HeightPolicy::Max => self.max_height,
        }
    }
}

pub fn tree_stats(tree: &PhyloTree) -> TreeStats {
    let tip_heights = tree.tip_heights();
    let n = tip_heights.len();
    let max_height = tip_heights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let min_height = tip_heights.iter().copied().fold(f64::INFINITY, f64::min);
    let height = tip_heights.iter().sum::<f64>() / n as f64;
    let root_kids = tree.children(tree.root());
    let min_root_edge = root_kids
        .iter()
        .map(|&c| tree.edge_length(c))
        .fold(f64::INFINITY, f64::min);
    TreeStats {
        n_tips: n,
        total_length: tree.total_length(),
        root_degree: root_kids.len(),
        min_root_edge,
        is_ultrametric: max_height - min_height <= ULTRAMETRIC_RTOL * max_height.abs(),
        tip_heights,
        height,
        max_height,
    }
}
