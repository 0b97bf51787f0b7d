//! Simulation: Brownian traits on trees, generated tree families, and the
//! phase-transition and convergence experiments.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::cov::{bm_covariance, one_tvi_one};
use crate::error::{Error, Result};
use crate::gls::{gls_fit, with_intercept};
use crate::linalg::{Cholesky, PivotRule, COVARIANCE_PIVOT_RTOL};
use crate::report::{Cell, CsvTable};
use crate::rng::{derive_seed, label_key, stream};
use crate::tree::{tree_stats, NodeId, PhyloTree, TreeBuilder};

/// Largest tree on which the phase curve is also evaluated by pruning.
pub const PHASE_PRUNING_MAX_TIPS: u128 = 1 << 16;

/// Brownian motion with root state `mu` and rate `sigma2`; tip values in
/// canonical order.
///
/// Tips are drawn one at a time in byte order of their labels, each from its
/// own stream keyed by the label. A tip attaches to the part of the tree
/// already spanned by earlier tips: the state at the attachment point comes
/// from a Brownian bridge between the nearest known states, then the pendant
/// increment is added. The joint law is exactly Brownian motion on the tree.
/// Extending a tree with tips whose labels sort after the existing ones
/// leaves the existing tips' values bit-identical.
pub fn simulate_bm(tree: &PhyloTree, mu: f64, sigma2: f64, seed: u64) -> Result<DVector<f64>> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    let labels = tree.tip_labels();
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[a].as_bytes().cmp(labels[b].as_bytes()));

    let mut state: Vec<Option<f64>> = vec![None; tree.n_nodes()];
    let mut spanned = vec![false; tree.n_nodes()];
    state[tree.root()] = Some(mu);
    spanned[tree.root()] = true;
    let mut out = DVector::zeros(labels.len());

    for i in order {
        let tip = tree.tips()[i];
        let mut rng = stream(seed, label_key(labels[i]));
        let z_bridge: f64 = rng.sample(StandardNormal);
        let z_pendant: f64 = rng.sample(StandardNormal);

        let mut path = Vec::new();
        let mut w = tip;
        while !spanned[w] {
            path.push(w);
            w = tree.parent(w).expect("the root is always spanned");
        }
        if state[w].is_none() {
            state[w] = Some(bridge(tree, &state, &spanned, w, sigma2, z_bridge));
        }
        let x = state[w].unwrap_or(mu)
            + (sigma2 * (tree.depth(tip) - tree.depth(w)).max(0.0)).sqrt() * z_pendant;
        for u in path {
            spanned[u] = true;
        }
        state[tip] = Some(x);
        out[i] = x;
    }
    Ok(out)
}

/// State at a spanned node `w` that lies inside a segment between two known
/// states: an ancestor above, and the first known node down its single
/// spanned child chain.
fn bridge(
    tree: &PhyloTree,
    state: &[Option<f64>],
    spanned: &[bool],
    w: NodeId,
    sigma2: f64,
    z: f64,
) -> f64 {
    let mut up = w;
    while state[up].is_none() {
        up = tree.parent(up).expect("the root has a state");
    }
    let mut down = w;
    while state[down].is_none() {
        down = *tree
            .children(down)
            .iter()
            .find(|&&c| spanned[c])
            .expect("a spanned node without a state continues to a known one");
    }
    let (a, b, s) = (tree.depth(up), tree.depth(down), tree.depth(w));
    let (xa, xb) = (state[up].unwrap_or(0.0), state[down].unwrap_or(0.0));
    let span = b - a;
    if span <= 0.0 {
        return xa;
    }
    let f = (s - a) / span;
    let var = sigma2 * ((s - a) * (b - s) / span).max(0.0);
    xa + f * (xb - xa) + var.sqrt() * z
}

/// Covariates `X` (n × k, Brownian with covariance `tΣ` per edge of length
/// `t`, root state 0) and response `Y = β₀ + Xβ₁ + ε` with `ε ~ N(0, σ²V)`
/// independent of `X`. `beta` is `[β₀, β₁…]` and `sigma` is `k × k`.
pub fn simulate_traits(
    tree: &PhyloTree,
    beta: &DVector<f64>,
    sigma: &DMatrix<f64>,
    sigma2: f64,
    seed: u64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if beta.is_empty() {
        return Err(Error::InvalidParameter(
            "beta needs at least the intercept".into(),
        ));
    }
    let k = beta.len() - 1;
    if sigma.nrows() != k || sigma.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "Sigma is {}x{} for {k} covariates",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if (sigma - sigma.transpose()).abs().max() > 1e-12 * sigma.abs().max() {
        return Err(Error::InvalidParameter("Sigma is not symmetric".into()));
    }
    let chol =
        Cholesky::new(sigma, PivotRule::MaxDiagonal(COVARIANCE_PIVOT_RTOL)).map_err(|f| {
            Error::InvalidParameter(format!(
                "Sigma is not positive definite (pivot {:.3e})",
                f.pivot
            ))
        })?;
    let n = tree.n_tips();
    let mut z = DMatrix::zeros(n, k);
    for j in 0..k {
        z.set_column(
            j,
            &simulate_bm(tree, 0.0, 1.0, derive_seed(seed, j as u64 + 1))?,
        );
    }
    let x = z * chol.l().transpose();
    let eps = simulate_bm(tree, 0.0, sigma2, derive_seed(seed, 0))?;
    let slopes = beta.rows(1, k);
    let y = DVector::from_element(n, beta[0]) + &x * slopes + eps;
    Ok((x, y))
}

/// Tree with `m` levels below the root: every node at level `i` has `d[i]`
/// children on edges of length `t[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetricTreeSpec {
    pub d: Vec<usize>,
    pub t: Vec<f64>,
}

impl SymmetricTreeSpec {
    pub fn validate(&self) -> Result<()> {
        crate::cov::symmetric_tree_eigenvalues(&self.d, &self.t).map(|_| ())
    }

    pub fn n_tips(&self) -> u128 {
        self.d.iter().map(|&d| d as u128).product()
    }

    /// `(1ᵗV⁻¹1)⁻¹ = Σ t_i / (d_1⋯d_i)`.
    pub fn intercept_variance(&self) -> f64 {
        let mut prod = 1.0;
        self.d
            .iter()
            .zip(&self.t)
            .map(|(&d, &t)| {
                prod *= d as f64;
                t / prod
            })
            .sum()
    }
}

/// Zero-padded labels `t0…t{n-1}` that sort in numeric order.
fn tip_label(i: usize, width: usize) -> String {
    format!("t{i:0width$}")
}

fn digits(n: usize) -> usize {
    n.saturating_sub(1).max(1).to_string().len()
}

pub fn make_symmetric_tree(spec: &SymmetricTreeSpec) -> Result<PhyloTree> {
    spec.validate()?;
    let n = usize::try_from(spec.n_tips())
        .map_err(|_| Error::InvalidParameter("tree too large".into()))?;
    let width = digits(n);
    let mut b = TreeBuilder::new();
    let mut frontier = vec![b.root()];
    let m = spec.d.len();
    let mut next_tip = 0;
    for (level, (&d, &t)) in spec.d.iter().zip(&spec.t).enumerate() {
        let mut next = Vec::with_capacity(frontier.len() * d);
        for &u in &frontier {
            for _ in 0..d {
                if level + 1 == m {
                    next.push(b.add_tip(u, t, tip_label(next_tip, width)));
                    next_tip += 1;
                } else {
                    next.push(b.add_child(u, t, None));
                }
            }
        }
        frontier = next;
    }
    b.build()
}

/// Symmetric tree of height 1 whose branches near the root are replicated:
/// `d_i = d`, `t_1 = q^{m-1}`, `t_i = (1 − q) q^{m-i}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicationSpec {
    pub d: usize,
    pub q: f64,
    pub m: usize,
}

impl ReplicationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidParameter(format!(
                "d must be >= 2, got {}",
                self.d
            )));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "q must lie in (0, 1), got {}",
                self.q
            )));
        }
        if self.m == 0 {
            return Err(Error::InvalidParameter("m must be >= 1".into()));
        }
        Ok(())
    }

    pub fn lengths(&self) -> Vec<f64> {
        (1..=self.m)
            .map(|i| {
                if i == 1 {
                    self.q.powi(self.m as i32 - 1)
                } else {
                    (1.0 - self.q) * self.q.powi((self.m - i) as i32)
                }
            })
            .collect()
    }

    pub fn symmetric(&self) -> SymmetricTreeSpec {
        SymmetricTreeSpec {
            d: vec![self.d; self.m],
            t: self.lengths(),
        }
    }

    /// `ln q / ln d`, the decay exponent when `q > 1/d`.
    pub fn alpha(&self) -> f64 {
        self.q.ln() / (self.d as f64).ln()
    }

    /// Closed-form intercept variance (σ² = 1):
    /// `q^{m−1}/d + (1−q)(1−(qd)^{m−1}) / (d^m (1−qd))`, or
    /// `(1 + (1−q)(m−1)) / d^m` when `qd = 1`.
    pub fn intercept_variance(&self) -> f64 {
        let (d, q, m) = (self.d as f64, self.q, self.m as i32);
        let qd = q * d;
        let dm = d.powi(m);
        if (qd - 1.0).abs() <= 1e-12 {
            (1.0 + (1.0 - q) * (m - 1) as f64) / dm
        } else {
            q.powi(m - 1) / d + (1.0 - q) * (1.0 - qd.powi(m - 1)) / (dm * (1.0 - qd))
        }
    }
}

pub fn make_replicated_tree(spec: &ReplicationSpec) -> Result<PhyloTree> {
    spec.validate()?;
    make_symmetric_tree(&spec.symmetric())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRow {
    pub m: usize,
    pub n: f64,
    pub var_closed: f64,
    pub var_pruning: Option<f64>,
}

/// Intercept variance of replicated trees for `m = 1..=m_max`: always the
/// closed form, plus a pruning pass on the built tree while `n ≤ 2¹⁶`.
pub fn phase_transition_curve(d: usize, q: f64, m_max: usize) -> Result<Vec<PhaseRow>> {
    if m_max < 3 {
        return Err(Error::InvalidParameter(format!(
            "m-max must be >= 3, got {m_max}"
        )));
    }
    (1..=m_max)
        .map(|m| {
            let spec = ReplicationSpec { d, q, m };
            spec.validate()?;
            let n_exact = spec.symmetric().n_tips();
            let var_pruning = if n_exact <= PHASE_PRUNING_MAX_TIPS {
                Some(1.0 / one_tvi_one(&make_replicated_tree(&spec)?)?)
            } else {
                None
            };
            Ok(PhaseRow {
                m,
                n: (d as f64).powi(m as i32),
                var_closed: spec.intercept_variance(),
                var_pruning,
            })
        })
        .collect()
}

pub fn phase_csv(rows: &[PhaseRow]) -> String {
    let mut out = String::from("n,var_closed,var_pruning\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            crate::report::fmt_f64(r.n),
            crate::report::fmt_f64(r.var_closed),
            r.var_pruning
                .map(crate::report::fmt_f64)
                .unwrap_or_default()
        ));
    }
    out
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Shape of [`random_tree`] output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomTreeOptions {
    /// All tips at the same height when true; otherwise every edge is
    /// stretched by an independent factor in `[0.3, 1.7)`.
    pub ultrametric: bool,
    /// Chance that a merge joins three lineages instead of two.
    pub polytomy: f64,
}

impl Default for RandomTreeOptions {
    fn default() -> Self {
        Self {
            ultrametric: true,
            polytomy: 0.0,
        }
    }
}

/// Coalescent-style random tree with tips `t0…t{n-1}` (zero-padded), built
/// by merging random lineages at exponential waiting times.
pub fn random_tree(n: usize, opts: RandomTreeOptions, seed: u64) -> Result<PhyloTree> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one tip".into()));
    }
    let mut rng = stream(seed, 0);
    let width = digits(n);
    // bottom-up: node heights above the tips and child lists
    let mut time = vec![0.0; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut parent = vec![usize::MAX; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut now = 0.0;
    if n == 1 {
        time.push(1.0);
        children.push(vec![0]);
        parent.push(usize::MAX);
        parent[0] = 1;
        active = vec![1];
    }
    while active.len() > 1 {
        let m = active.len();
        let group = if m >= 3 && rng.random::<f64>() < opts.polytomy {
            3
        } else {
            2
        };
        let rate = (m * (m - 1) / 2) as f64;
        now += -(1.0 - rng.random::<f64>()).ln() / rate;
        let mut kids = Vec::with_capacity(group);
        for _ in 0..group {
            let j = rng.random_range(0..active.len());
            kids.push(active.swap_remove(j));
        }
        kids.sort_unstable();
        let id = time.len();
        for &c in &kids {
            parent[c] = id;
        }
        time.push(now);
        children.push(kids);
        parent.push(usize::MAX);
        active.push(id);
    }
    let root = active[0];
    let mut b = TreeBuilder::new();
    let mut stack: Vec<(NodeId, usize)> = children[root]
        .iter()
        .rev()
        .map(|&c| (b.root(), c))
        .collect();
    while let Some((parent_new, u)) = stack.pop() {
        let mut len = time[parent[u]] - time[u];
        if !opts.ultrametric {
            len *= 0.3 + 1.4 * rng.random::<f64>();
        }
        if u < n {
            b.add_tip(parent_new, len, tip_label(u, width));
        } else {
            let v = b.add_child(parent_new, len, None);
            stack.extend(children[u].iter().rev().map(|&c| (v, c)));
        }
    }
    b.build()
}

/// Growing tree families for the convergence experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// Star of `n` tips at distance `height`.
    Star,
    /// `degree` root edges of length `root_edge`, each leading to a star;
    /// tip `i` joins clade `i mod degree`.
    FixedRoot { degree: usize, root_edge: f64 },
}

impl Family {
    pub fn build(&self, n: usize, height: f64, width: usize) -> Result<PhyloTree> {
        if n == 0 {
            return Err(Error::Config("family sizes must be positive".into()));
        }
        let mut b = TreeBuilder::new();
        match *self {
            Family::Star => {
                for i in 0..n {
                    b.add_tip(b.root(), height, tip_label(i, width));
                }
            }
            Family::FixedRoot { degree, root_edge } => {
                if degree < 1 || n < degree {
                    return Err(Error::Config(format!(
                        "fixed_root needs at least root_degree = {degree} tips, got {n}"
                    )));
                }
                if !(root_edge > 0.0 && root_edge < height) {
                    return Err(Error::Config(format!(
                        "root_edge must lie in (0, height), got {root_edge}"
                    )));
                }
                let clades: Vec<NodeId> = (0..degree)
                    .map(|_| b.add_child(0, root_edge, None))
                    .collect();
                for i in 0..n {
                    b.add_tip(clades[i % degree], height - root_edge, tip_label(i, width));
                }
            }
        }
        b.build()
    }
}

/// Parsed `key = value` experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceConfig {
    pub family: Family,
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    /// `[β₀, β₁…]`.
    pub beta: Vec<f64>,
    /// Row-major `k × k` covariate covariance.
    pub sigma: Vec<f64>,
    pub sigma2: f64,
    pub height: f64,
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{s}`")))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

impl ConvergenceConfig {
    /// Lines of `key = value`; `#` starts a comment. Required keys: `family`
    /// (`star` or `fixed_root`), `sizes`, `reps`, `seed`. Optional: `beta`
    /// (default `0`), `sigma` (default identity), `sigma2` (1), `height` (1),
    /// `root_degree` (2) and `root_edge` (0.5) for `fixed_root`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: HashMap<String, String> = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let k = k.trim().to_string();
            if kv.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!(
                    "line {}: `{k}` given twice",
                    lineno + 1
                )));
            }
        }
        const KNOWN: [&str; 10] = [
            "family",
            "sizes",
            "reps",
            "seed",
            "beta",
            "sigma",
            "sigma2",
            "height",
            "root_degree",
            "root_edge",
        ];
        if let Some(k) = kv.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        let req = |k: &str| {
            kv.get(k)
                .ok_or_else(|| Error::Config(format!("missing required key `{k}`")))
        };

        let family = match req("family")?.as_str() {
            "star" => Family::Star,
            "fixed_root" => Family::FixedRoot {
                degree: kv
                    .get("root_degree")
                    .map(|v| parse_one("root_degree", v))
                    .transpose()?
                    .unwrap_or(2),
                root_edge: kv
                    .get("root_edge")
                    .map(|v| parse_one("root_edge", v))
                    .transpose()?
                    .unwrap_or(0.5),
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown family `{other}` (expected star|fixed_root)"
                )))
            }
        };
        let sizes: Vec<usize> = parse_list("sizes", req("sizes")?)?;
        if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "`sizes` must be a strictly increasing nonempty list".into(),
            ));
        }
        let beta: Vec<f64> = kv
            .get("beta")
            .map(|v| parse_list("beta", v))
            .transpose()?
            .unwrap_or_else(|| vec![0.0]);
        if beta.is_empty() {
            return Err(Error::Config("`beta` needs at least the intercept".into()));
        }
        let k = beta.len() - 1;
        let sigma: Vec<f64> = match kv.get("sigma") {
            Some(v) => parse_list("sigma", v)?,
            None => (0..k * k)
                .map(|i| if i / k == i % k { 1.0 } else { 0.0 })
                .collect(),
        };
        if sigma.len() != k * k {
            return Err(Error::Config(format!(
                "`sigma` needs {} entries for {k} covariates",
                k * k
            )));
        }
        let cfg = Self {
            family,
            sizes,
            reps: parse_one("reps", req("reps")?)?,
            seed: parse_one("seed", req("seed")?)?,
            beta,
            sigma,
            sigma2: kv
                .get("sigma2")
                .map(|v| parse_one("sigma2", v))
                .transpose()?
                .unwrap_or(1.0),
            height: kv
                .get("height")
                .map(|v| parse_one("height", v))
                .transpose()?
                .unwrap_or(1.0),
        };
        if cfg.reps < 2 {
            return Err(Error::Config("`reps` must be at least 2".into()));
        }
        if !(cfg.sigma2 > 0.0 && cfg.height > 0.0) {
            return Err(Error::Config(
                "`sigma2` and `height` must be positive".into(),
            ));
        }
        if cfg.sizes[0] <= k + 2 {
            return Err(Error::Config(format!(
                "smallest size must exceed k + 2 = {}",
                k + 2
            )));
        }
        Ok(cfg)
    }

    pub fn n_covariates(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        let k = self.n_covariates();
        DMatrix::from_row_slice(k, k, &self.sigma)
    }

    pub fn trees(&self) -> Result<Vec<PhyloTree>> {
        let width = digits(*self.sizes.last().expect("sizes nonempty"));
        self.sizes
            .iter()
            .map(|&n| self.family.build(n, self.height, width))
            .collect()
    }
}

/// Error unless each tree is the restriction of the next one to its tips.
pub fn check_nested(trees: &[PhyloTree]) -> Result<()> {
    for w in trees.windows(2) {
        let (small, big) = (&w[0], &w[1]);
        let sub = big
            .restrict(&small.tip_labels())
            .map_err(|e| Error::Config(format!("family not nested: {e}")))?;
        let tol = 1e-12 * sub.tip_heights().into_iter().fold(1.0, f64::max);
        let same_tips = sub.tip_labels() == small.tip_labels();
        if !same_tips || (bm_covariance(&sub)? - bm_covariance(small)?).abs().max() > tol {
            return Err(Error::Config(format!(
                "family not nested: the {}-tip tree is not a restriction of the {}-tip tree",
                small.n_tips(),
                big.n_tips()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub component: String,
    pub mc_mean: f64,
    pub mc_var: f64,
    /// Exact sampling variance under the simulated model: for the intercept
    /// `σ²(n−2) / (1ᵗV⁻¹1 (n−k−2))`, for slope `j` `σ²[Σ⁻¹]_jj / (n−k−2)`.
    pub theory: f64,
    /// Intercept only: the floor `σ² t / k` from the root edges.
    pub floor: Option<f64>,
    /// Mean |β̂(n) − β̂(previous n)| along each simulated path.
    pub mean_abs_increment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub config: ConvergenceConfig,
    pub rows: Vec<ConvergenceRow>,
    pub notes: Vec<String>,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut t = CsvTable::new(&["n", "component", "mc_var", "theory"]);
        for r in &self.rows {
            t.push(&[
                Cell::Int(r.n as u64),
                Cell::Text(&r.component),
                Cell::Float(r.mc_var),
                Cell::Float(r.theory),
            ]);
        }
        t.render()
    }

    pub fn row(&self, n: usize, component: &str) -> Option<&ConvergenceRow> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.component == component)
    }
}

fn component_name(j: usize) -> String {
    if j == 0 {
        "intercept".to_string()
    } else {
        format!("slope{j}")
    }
}

/// Refit GLS on nested samples of one simulated realization per replicate.
///
/// Each replicate simulates the largest tree once; smaller trees use the
/// values of their own tips, which equal a direct simulation on the smaller
/// tree. Estimates at different `n` therefore share random numbers.
pub fn convergence_experiment(cfg: &ConvergenceConfig) -> Result<ConvergenceReport> {
    let trees = cfg.trees()?;
    check_nested(&trees)?;
    let k = cfg.n_covariates();
    let sigma = cfg.sigma_matrix();
    let sigma_inv = if k == 0 {
        DMatrix::zeros(0, 0)
    } else {
        Cholesky::new(&sigma, PivotRule::MaxDiagonal(COVARIANCE_PIVOT_RTOL))
            .map_err(|_| Error::Config("`sigma` is not positive definite".into()))?
            .inverse()
    };
    let beta = DVector::from_vec(cfg.beta.clone());
    let largest = trees.last().expect("sizes nonempty");
    let index: HashMap<&str, usize> = largest
        .tip_labels()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    let rows_of: Vec<Vec<usize>> = trees
        .iter()
        .map(|t| t.tip_labels().iter().map(|l| index[l]).collect())
        .collect();

    // estimates[rep][size][component]
    let estimates = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|r| {
            let (x, y) =
                simulate_traits(largest, &beta, &sigma, cfg.sigma2, derive_seed(cfg.seed, r))?;
            trees
                .iter()
                .zip(&rows_of)
                .map(|(t, rows)| {
                    let design = with_intercept(&x.select_rows(rows));
                    Ok(gls_fit(
                        t,
                        &design,
                        &y.select_rows(rows),
                        crate::cov::CovarianceSpec::Bm,
                    )?
                    .beta)
                })
                .collect::<Result<Vec<DVector<f64>>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let reps = cfg.reps as f64;
    let mut rows = Vec::new();
    for (s, t) in trees.iter().enumerate() {
        let n = t.n_tips();
        let stats = tree_stats(t);
        let a = one_tvi_one(t)?;
        let denom = (n - k - 2) as f64;
        for c in 0..=k {
            let vals: Vec<f64> = estimates.iter().map(|e| e[s][c]).collect();
            let mean = vals.iter().sum::<f64>() / reps;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1.0);
            let theory = if c == 0 {
                cfg.sigma2 * (n - 2) as f64 / (a * denom)
            } else {
                cfg.sigma2 * sigma_inv[(c - 1, c - 1)] / denom
            };
            let increment = (s > 0).then(|| {
                estimates
                    .iter()
                    .map(|e| (e[s][c] - e[s - 1][c]).abs())
                    .sum::<f64>()
                    / reps
            });
            rows.push(ConvergenceRow {
                n,
                component: component_name(c),
                mc_mean: mean,
                mc_var: var,
                theory,
                floor: (c == 0)
                    .then(|| cfg.sigma2 * stats.min_root_edge / stats.root_degree as f64),
                mean_abs_increment: increment,
            });
        }
    }
    Ok(ConvergenceReport {
        config: cfg.clone(),
        rows,
        notes: vec![
            "estimates at different n reuse one simulated realization per replicate (common random numbers)".into(),
            "mean_abs_increment tracks how far each path moves between sizes; it illustrates settling, it does not prove almost-sure convergence".into(),
        ],
    })
}
