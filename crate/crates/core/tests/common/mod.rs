//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use treegls::nalgebra::{DMatrix, DVector};
use treegls::{PhyloTree, RandomTreeOptions};

pub fn tree(n: usize, ultrametric: bool, polytomy: f64, seed: u64) -> PhyloTree {
    treegls::random_tree(
        n,
        RandomTreeOptions {
            ultrametric,
            polytomy,
        },
        seed,
    )
    .unwrap()
}

/// Tip-to-tip path lengths by walking the undirected tree from every tip.
pub fn path_distances(t: &PhyloTree) -> DMatrix<f64> {
    let n = t.n_tips();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); t.n_nodes()];
    for u in 0..t.n_nodes() {
        if let Some(p) = t.parent(u) {
            adj[u].push((p, t.edge_length(u)));
            adj[p].push((u, t.edge_length(u)));
        }
    }
    let mut d = DMatrix::zeros(n, n);
    for (i, &src) in t.tips().iter().enumerate() {
        let mut dist = vec![f64::NAN; t.n_nodes()];
        dist[src] = 0.0;
        let mut stack = vec![src];
        while let Some(u) = stack.pop() {
            for &(v, w) in &adj[u] {
                if dist[v].is_nan() {
                    dist[v] = dist[u] + w;
                    stack.push(v);
                }
            }
        }
        for (j, &tj) in t.tips().iter().enumerate() {
            d[(i, j)] = dist[tj];
        }
    }
    d
}

/// Distances keyed by label pairs, for comparing trees with different tip orders.
pub fn labelled_distances(t: &PhyloTree) -> std::collections::BTreeMap<(String, String), f64> {
    let d = path_distances(t);
    let l = t.tip_labels();
    let mut out = std::collections::BTreeMap::new();
    for i in 0..l.len() {
        for j in 0..l.len() {
            out.insert((l[i].to_string(), l[j].to_string()), d[(i, j)]);
        }
    }
    out
}

/// Shared-ancestry matrix from explicit root paths (sum of common edges).
pub fn shared_ancestry(t: &PhyloTree) -> DMatrix<f64> {
    let paths: Vec<Vec<usize>> = t.tips().iter().map(|&u| t.ancestors(u)).collect();
    let n = paths.len();
    DMatrix::from_fn(n, n, |i, j| {
        let other: std::collections::HashSet<_> = paths[j].iter().collect();
        paths[i]
            .iter()
            .filter(|u| other.contains(u))
            .map(|&u| t.edge_length(u))
            .sum()
    })
}

/// Canonical form for isomorphism checks: children sorted by their own forms.
pub fn canonical(t: &PhyloTree) -> String {
    fn go(t: &PhyloTree, u: usize) -> String {
        let mut kids: Vec<String> = t.children(u).iter().map(|&c| go(t, c)).collect();
        kids.sort();
        let len = if t.parent(u).is_some() {
            format!(":{:016x}", t.edge_length(u).to_bits())
        } else {
            String::new()
        };
        format!("({}){}{}", kids.join(","), t.label(u).unwrap_or(""), len)
    }
    go(t, t.root())
}

/// `1ᵗV⁻¹1` by dense Cholesky solve.
pub fn dense_one_tvi_one(v: &DMatrix<f64>) -> f64 {
    let n = v.nrows();
    let ones = DVector::from_element(n, 1.0);
    let x = v.clone().cholesky().expect("SPD").solve(&ones);
    ones.dot(&x)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn cov(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (x.len() as f64 - 1.0)
}

/// Monte Carlo standard error of the sample mean of `x`.
pub fn se_mean(x: &[f64]) -> f64 {
    (var(x) / x.len() as f64).sqrt()
}

/// Standard error of the sample covariance of `x` and `y`, estimated from
/// the products of centred values.
pub fn se_cov(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    se_mean(&prods)
}
