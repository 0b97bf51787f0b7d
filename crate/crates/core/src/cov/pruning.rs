//! Single-pass Brownian-motion forms (Felsenstein's pruning / independent
//! contrasts).
//!
//! Each node carries the GLS estimate of its own state from the tips below it
//! (one entry per data column) and the extra variance `v` of that estimate.
//! Children are merged two at a time; every merge emits one contrast whose
//! outer product and log-variance accumulate into `ZᵗV⁻¹Z` and `log det V`.
//! At the root `1ᵗV⁻¹1 = 1/v`, `1ᵗV⁻¹z = ẑ/v` and `ZᵗV⁻¹Z` picks up `ẑẑᵗ/v`.

use nalgebra::{DMatrix, DVector};

use super::QuadraticForms;
use crate::error::{Error, Result};
use crate::linalg::COVARIANCE_PIVOT_RTOL;
use crate::tree::{NodeId, PhyloTree};

fn singular_floor(tree: &PhyloTree) -> f64 {
    let hmax = tree.tip_heights().into_iter().fold(0.0, f64::max);
    COVARIANCE_PIVOT_RTOL * hmax
}

fn singular(tree: &PhyloTree, u: NodeId) -> Error {
    Error::SingularCovariance(format!(
        "tips below {} are fully dependent (zero-length contrast)",
        tree.label(u)
            .map(str::to_string)
            .unwrap_or_else(|| format!("node #{u}"))
    ))
}

/// Brownian-motion forms for design `x` and response `y` (rows in canonical
/// tip order) in O(n·p²) time.
pub fn quadratic_forms_pruning(
    tree: &PhyloTree,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<QuadraticForms> {
    let n = tree.n_tips();
    if x.nrows() != n || y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "tree has {n} tips but X has {} rows and Y has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    let p = x.ncols();
    let m = p + 1;
    let floor = singular_floor(tree);

    let mut est = vec![0.0; tree.n_nodes() * m];
    let mut var = vec![0.0; tree.n_nodes()];
    let mut q = DMatrix::<f64>::zeros(m, m);
    let mut logdet = 0.0;
    let mut contrast = vec![0.0; m];

    for u in tree.postorder() {
        if let Some(i) = tree.tip_index(u) {
            let row = &mut est[u * m..(u + 1) * m];
            for (j, slot) in row.iter_mut().take(p).enumerate() {
                *slot = x[(i, j)];
            }
            row[p] = y[i];
            var[u] = tree.edge_length(u);
            continue;
        }
        let kids = tree.children(u);
        let (&first, rest) = kids.split_first().expect("internal node has children");
        let mut v = var[first];
        est.copy_within(first * m..(first + 1) * m, u * m);
        for &c in rest {
            let vc = var[c];
            let s = v + vc;
            if s <= floor {
                return Err(singular(tree, u));
            }
            for j in 0..m {
                contrast[j] = est[u * m + j] - est[c * m + j];
            }
            for a in 0..m {
                let ca = contrast[a] / s;
                for b in a..m {
                    q[(a, b)] += ca * contrast[b];
                }
            }
            logdet += s.ln();
            for j in 0..m {
                est[u * m + j] = (est[u * m + j] * vc + est[c * m + j] * v) / s;
            }
            v = v * vc / s;
        }
        var[u] = v + tree.edge_length(u);
    }

    let r = tree.root();
    let v_root = var[r];
    if v_root <= floor {
        return Err(singular(tree, r));
    }
    logdet += v_root.ln();
    let root_est = &est[r * m..(r + 1) * m];
    for a in 0..m {
        for b in a..m {
            q[(a, b)] += root_est[a] * root_est[b] / v_root;
            q[(b, a)] = q[(a, b)];
        }
    }

    Ok(QuadraticForms {
        xtvix: q.view((0, 0), (p, p)).into_owned(),
        xtviy: q.view((0, p), (p, 1)).column(0).into_owned(),
        ytviy: q[(p, p)],
        logdet_v: logdet,
        one_tvi_one: 1.0 / v_root,
        one_tvi_x: DVector::from_iterator(p, root_est[..p].iter().map(|e| e / v_root)),
        one_tvi_y: root_est[p] / v_root,
        n,
    })
}

/// `1ᵗV⁻¹1` for the whole tree.
pub fn one_tvi_one(tree: &PhyloTree) -> Result<f64> {
    one_tvi_one_masked(tree, &vec![true; tree.n_tips()])
}

/// `1ᵗV⁻¹1` restricted to the tips flagged in `keep` (canonical order),
/// equal to the value on the restricted tree with the original root retained.
pub fn one_tvi_one_masked(tree: &PhyloTree, keep: &[bool]) -> Result<f64> {
    if keep.len() != tree.n_tips() {
        return Err(Error::DimensionMismatch(format!(
            "mask has {} entries for {} tips",
            keep.len(),
            tree.n_tips()
        )));
    }
    let floor = singular_floor(tree);
    // None: no kept tip below this node.
    let mut var: Vec<Option<f64>> = vec![None; tree.n_nodes()];
    for u in tree.postorder() {
        if let Some(i) = tree.tip_index(u) {
            var[u] = keep[i].then(|| tree.edge_length(u));
            continue;
        }
        let mut acc: Option<f64> = None;
        for &c in tree.children(u) {
            let Some(vc) = var[c] else { continue };
            acc = Some(match acc {
                None => vc,
                Some(v) => {
                    let s = v + vc;
                    if s <= floor {
                        return Err(singular(tree, u));
                    }
                    v * vc / s
                }
            });
        }
        var[u] = acc.map(|v| v + tree.edge_length(u));
    }
    match var[tree.root()] {
        None => Err(Error::InvalidParameter("no tips selected".into())),
        Some(v) if v <= floor => Err(singular(tree, tree.root())),
        Some(v) => Ok(1.0 / v),
    }
}
