//! Tree covariance structures and the GLS quadratic forms built on them.
//!
//! Two routes compute the same [`QuadraticForms`]: [`quadratic_forms_dense`]
//! factorizes an explicit covariance matrix, and [`quadratic_forms_pruning`]
//! gets the Brownian-motion forms from a single post-order traversal without
//! ever forming `V`.

mod dense;
mod pruning;
mod symmetric;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::PhyloTree;

pub use dense::quadratic_forms_dense;
pub use pruning::{one_tvi_one, one_tvi_one_masked, quadratic_forms_pruning};
pub use symmetric::symmetric_tree_eigenvalues;

/// Error covariance model, up to the scale σ² which is always estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceSpec {
    #[default]
    Bm,
    /// Ornstein–Uhlenbeck with known selection strength.
    Ou { alpha: f64, stationary: bool },
}

impl CovarianceSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CovarianceSpec::Bm => Ok(()),
            CovarianceSpec::Ou { alpha, .. } if alpha > 0.0 && alpha.is_finite() => Ok(()),
            CovarianceSpec::Ou { alpha, .. } => Err(Error::InvalidParameter(format!(
                "OU alpha must be positive, got {alpha}"
            ))),
        }
    }

    pub fn matrix(&self, tree: &PhyloTree) -> Result<DMatrix<f64>> {
        match *self {
            CovarianceSpec::Bm => bm_covariance(tree),
            CovarianceSpec::Ou { alpha, stationary } => ou_covariance(tree, alpha, stationary),
        }
    }
}

/// Gram-type forms of a GLS problem with covariance `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForms {
    pub xtvix: DMatrix<f64>,
    pub xtviy: DVector<f64>,
    pub ytviy: f64,
    pub logdet_v: f64,
    pub one_tvi_one: f64,
    pub one_tvi_x: DVector<f64>,
    pub one_tvi_y: f64,
    pub n: usize,
}

impl QuadraticForms {
    /// Sum of forms over independent blocks (block-diagonal `V`).
    pub fn add_block(&self, other: &QuadraticForms) -> Result<QuadraticForms> {
        if self.xtvix.shape() != other.xtvix.shape() {
            return Err(Error::DimensionMismatch(
                "blocks have different column counts".into(),
            ));
        }
        Ok(QuadraticForms {
            xtvix: &self.xtvix + &other.xtvix,
            xtviy: &self.xtviy + &other.xtviy,
            ytviy: self.ytviy + other.ytviy,
            logdet_v: self.logdet_v + other.logdet_v,
            one_tvi_one: self.one_tvi_one + other.one_tvi_one,
            one_tvi_x: &self.one_tvi_x + &other.one_tvi_x,
            one_tvi_y: self.one_tvi_y + other.one_tvi_y,
            n: self.n + other.n,
        })
    }
}

/// Reject trees where two tips (or a tip and the root) sit at the same point,
/// which makes the Brownian covariance singular.
pub fn check_distinct_tips(tree: &PhyloTree) -> Result<()> {
    // reaches_zero[u]: some tip below u lies at distance 0 from u
    let mut reaches_zero = vec![false; tree.n_nodes()];
    for u in tree.postorder() {
        if tree.is_tip(u) {
            reaches_zero[u] = true;
            continue;
        }
        let hits: Vec<_> = tree
            .children(u)
            .iter()
            .filter(|&&c| reaches_zero[c] && tree.edge_length(c) == 0.0)
            .collect();
        if hits.len() >= 2 {
            return Err(Error::SingularCovariance(format!(
                "two tips coincide below {}",
                tree.label(u)
                    .map(str::to_string)
                    .unwrap_or_else(|| format!("node #{u}"))
            )));
        }
        reaches_zero[u] = !hits.is_empty();
    }
    if reaches_zero[tree.root()] {
        return Err(Error::SingularCovariance(
            "a tip lies at distance 0 from the root".into(),
        ));
    }
    Ok(())
}

/// Shared root-path lengths between tips, in canonical order.
fn shared_ancestry(tree: &PhyloTree) -> DMatrix<f64> {
    let n = tree.n_tips();
    let mut v = DMatrix::<f64>::zeros(n, n);
    let mut below: Vec<Vec<usize>> = vec![Vec::new(); tree.n_nodes()];
    for u in tree.postorder() {
        if let Some(i) = tree.tip_index(u) {
            v[(i, i)] = tree.depth(u);
            below[u].push(i);
            continue;
        }
        let d = tree.depth(u);
        let kids = tree.children(u).to_vec();
        for (a, &ca) in kids.iter().enumerate() {
            for &cb in &kids[a + 1..] {
                for &i in &below[ca] {
                    for &j in &below[cb] {
                        v[(i, j)] = d;
                        v[(j, i)] = d;
                    }
                }
            }
        }
        let mut merged = Vec::new();
        for &c in &kids {
            merged.append(&mut below[c]);
        }
        below[u] = merged;
    }
    v
}

/// Brownian-motion covariance: `V_ij` is the time of shared ancestry.
pub fn bm_covariance(tree: &PhyloTree) -> Result<DMatrix<f64>> {
    check_distinct_tips(tree)?;
    Ok(shared_ancestry(tree))
}

/// Ornstein–Uhlenbeck correlation structure with known `alpha`.
///
/// `stationary` gives `exp(-α d_ij)`; otherwise the root-conditioned form
/// `(1 - exp(-2α t_ij)) exp(-α d_ij)` with `t_ij` the shared ancestry time and
/// `d_ij` the tip-to-tip distance.
pub fn ou_covariance(tree: &PhyloTree, alpha: f64, stationary: bool) -> Result<DMatrix<f64>> {
    CovarianceSpec::Ou { alpha, stationary }.validate()?;
    let shared = shared_ancestry(tree);
    let h = tree.tip_heights();
    let n = h.len();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let t = shared[(i, j)];
        let d = (h[i] + h[j] - 2.0 * t).max(0.0);
        let decay = (-alpha * d).exp();
        if stationary {
            decay
        } else {
            -(-2.0 * alpha * t).exp_m1() * decay
        }
    }))
}

/// Dense covariance matrix as CSV rows (canonical tip order).
pub fn covariance_csv(tree: &PhyloTree, v: &DMatrix<f64>) -> String {
    let mut out = String::from("tip");
    for l in tree.tip_labels() {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for (i, l) in tree.tip_labels().iter().enumerate() {
        out.push_str(l);
        for j in 0..v.ncols() {
            out.push(',');
            out.push_str(&crate::report::fmt_f64(v[(i, j)]));
        }
        out.push('\n');
    }
    out
}
