//! Generalized least squares under tree-structured error covariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cov::{self, quadratic_forms_pruning, CovarianceSpec, QuadraticForms};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, PivotRule, COVARIANCE_PIVOT_RTOL, RANK_RTOL};
use crate::tree::{tree_stats, HeightPolicy, NodeId, PhyloTree};

/// RSS below this fraction of `YᵗV⁻¹Y` is treated as an exact fit.
const EXACT_FIT_RTOL: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq)]
pub struct GlsFit {
    /// Coefficients in design-column order (intercept first by convention).
    pub beta: DVector<f64>,
    /// `σ̂² (XᵗV⁻¹X)⁻¹`.
    pub beta_cov: DMatrix<f64>,
    /// `(XᵗV⁻¹X)⁻¹`, the covariance at σ² = 1.
    pub beta_cov_unscaled: DMatrix<f64>,
    pub xtvix: DMatrix<f64>,
    /// Unbiased `RSS/(n − rank)`.
    pub sigma2_hat: f64,
    /// Maximum-likelihood `RSS/n`.
    pub sigma2_ml: f64,
    pub rss: f64,
    pub dof: usize,
    /// Gaussian log-likelihood at `(β̂, σ̂²_ML)`; `None` for an exact fit.
    pub loglik: Option<f64>,
    pub logdet_v: f64,
    pub n: usize,
    pub rank: usize,
    pub covariance: CovarianceSpec,
}

/// Serializable view of a fit with named coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub covariance: CovarianceSpec,
    pub terms: Vec<String>,
    pub beta: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Rows of `σ̂² (XᵗV⁻¹X)⁻¹`.
    pub beta_cov: Vec<Vec<f64>>,
    pub sigma2_hat: f64,
    pub sigma2_ml: f64,
    pub rss: f64,
    pub dof: usize,
    pub loglik: Option<f64>,
    pub logdet_v: f64,
    pub n: usize,
    pub rank: usize,
}

impl GlsFit {
    /// `terms` names the design columns in order.
    pub fn summary(&self, terms: Vec<String>) -> Result<FitSummary> {
        if terms.len() != self.beta.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} names for {} coefficients",
                terms.len(),
                self.beta.len()
            )));
        }
        Ok(FitSummary {
            covariance: self.covariance,
            terms,
            beta: self.beta.iter().copied().collect(),
            std_error: self
                .beta_cov
                .diagonal()
                .iter()
                .map(|v| v.max(0.0).sqrt())
                .collect(),
            beta_cov: self
                .beta_cov
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            sigma2_hat: self.sigma2_hat,
            sigma2_ml: self.sigma2_ml,
            rss: self.rss,
            dof: self.dof,
            loglik: self.loglik,
            logdet_v: self.logdet_v,
            n: self.n,
            rank: self.rank,
        })
    }
}

/// Where the covariance lives: a tree (pruning), independent tree blocks, or
/// an explicit matrix.
enum Backend<'a> {
    Pruning(&'a PhyloTree),
    Blocks(Vec<(PhyloTree, Vec<usize>)>),
    Dense(Cholesky),
}

impl Backend<'_> {
    fn forms(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<QuadraticForms> {
        match self {
            Backend::Pruning(tree) => quadratic_forms_pruning(tree, x, y),
            Backend::Blocks(blocks) => {
                let mut total: Option<QuadraticForms> = None;
                for (tree, rows) in blocks {
                    let q =
                        quadratic_forms_pruning(tree, &x.select_rows(rows), &y.select_rows(rows))?;
                    total = Some(match total {
                        None => q,
                        Some(t) => t.add_block(&q)?,
                    });
                }
                total.ok_or_else(|| Error::InvalidParameter("no covariance blocks".into()))
            }
            Backend::Dense(chol) => {
                let n = chol.l().nrows();
                if x.nrows() != n || y.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "V is {n}x{n} but X has {} rows and Y has {} entries",
                        x.nrows(),
                        y.len()
                    )));
                }
                let wx = chol.whiten(x);
                let wy = chol.whiten_vec(y);
                let w1 = chol.whiten_vec(&DVector::from_element(n, 1.0));
                Ok(QuadraticForms {
                    xtvix: wx.transpose() * &wx,
                    xtviy: wx.transpose() * &wy,
                    ytviy: wy.dot(&wy),
                    logdet_v: chol.log_det(),
                    one_tvi_one: w1.dot(&w1),
                    one_tvi_x: wx.transpose() * &w1,
                    one_tvi_y: w1.dot(&wy),
                    n,
                })
            }
        }
    }

    /// `rᵗV⁻¹r`.
    fn quad(&self, r: &DVector<f64>) -> Result<f64> {
        let none = DMatrix::<f64>::zeros(r.len(), 0);
        Ok(self.forms(&none, r)?.ytviy)
    }
}

fn dense_backend(v: &DMatrix<f64>) -> Result<Backend<'static>> {
    Cholesky::new(v, PivotRule::MaxDiagonal(COVARIANCE_PIVOT_RTOL))
        .map(Backend::Dense)
        .map_err(|f| Error::SingularCovariance(format!("pivot {:.3e} at row {}", f.pivot, f.index)))
}

fn fit_with(
    backend: &Backend<'_>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    covariance: CovarianceSpec,
) -> Result<GlsFit> {
    let n = y.len();
    let p = x.ncols();
    if x.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows, Y has {n}",
            x.nrows()
        )));
    }
    if p == 0 {
        return Err(Error::InvalidParameter(
            "design matrix has no columns".into(),
        ));
    }
    if n <= p {
        return Err(Error::InsufficientData { n, required: p });
    }
    let forms = backend.forms(x, y)?;
    let chol = Cholesky::new(&forms.xtvix, PivotRule::OwnDiagonal(RANK_RTOL))
        .map_err(|f| Error::RankDeficient { column: f.index })?;
    let beta = chol.solve_vec(&forms.xtviy);
    let mut cov_unscaled = chol.inverse();
    crate::linalg::symmetrize(&mut cov_unscaled);

    let residual = y - x * &beta;
    let mut rss = backend.quad(&residual)?.max(0.0);
    if rss <= EXACT_FIT_RTOL * forms.ytviy {
        rss = 0.0;
    }
    let dof = n - p;
    let sigma2_hat = rss / dof as f64;
    let sigma2_ml = rss / n as f64;
    let loglik = (rss > 0.0).then(|| {
        -0.5 * (n as f64 * ((2.0 * std::f64::consts::PI * sigma2_ml).ln() + 1.0) + forms.logdet_v)
    });
    Ok(GlsFit {
        beta_cov: &cov_unscaled * sigma2_hat,
        beta_cov_unscaled: cov_unscaled,
        xtvix: forms.xtvix,
        beta,
        sigma2_hat,
        sigma2_ml,
        rss,
        dof,
        loglik,
        logdet_v: forms.logdet_v,
        n,
        rank: p,
        covariance,
    })
}

/// Fit `Y = Xβ + ε`, `ε ~ N(0, σ²V)` with `V` from `cov` on `tree`.
///
/// Brownian covariance goes through the pruning path; OU builds `V` densely.
pub fn gls_fit(
    tree: &PhyloTree,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cov: CovarianceSpec,
) -> Result<GlsFit> {
    cov.validate()?;
    if y.len() != tree.n_tips() {
        return Err(Error::DimensionMismatch(format!(
            "tree has {} tips, Y has {}",
            tree.n_tips(),
            y.len()
        )));
    }
    match cov {
        CovarianceSpec::Bm => fit_with(&Backend::Pruning(tree), x, y, cov),
        CovarianceSpec::Ou { .. } => fit_with(&dense_backend(&cov.matrix(tree)?)?, x, y, cov),
    }
}

/// GLS against an explicit covariance matrix.
pub fn gls_fit_dense(v: &DMatrix<f64>, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<GlsFit> {
    if v.nrows() != y.len() || v.ncols() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "V is {}x{}, Y has {}",
            v.nrows(),
            v.ncols(),
            y.len()
        )));
    }
    fit_with(&dense_backend(v)?, x, y, CovarianceSpec::Bm)
}

/// `[1 | x]`.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut out = DMatrix::from_element(n, x.ncols() + 1, 1.0);
    out.view_mut((0, 1), (n, x.ncols())).copy_from(x);
    out
}

/// GLS estimate of the covariance `Σ` of Brownian covariates:
/// `(X − 1μ̂)ᵗV⁻¹(X − 1μ̂)/(n − 1)` with `μ̂` the per-column GLS root state.
pub fn covariate_sigma_hat(tree: &PhyloTree, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = tree.n_tips();
    if n < 2 {
        return Err(Error::InsufficientData { n, required: 1 });
    }
    let zeros = DVector::zeros(n);
    let q = quadratic_forms_pruning(tree, x, &zeros)?;
    let mu = &q.one_tvi_x / q.one_tvi_one;
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mu[j]);
    }
    let qc = quadratic_forms_pruning(tree, &centered, &zeros)?;
    let mut sigma = qc.xtvix / (n - 1) as f64;
    crate::linalg::symmetrize(&mut sigma);
    Ok(sigma)
}

/// Posterior mean of β under the prior `β ~ N(0, σ²I)`:
/// `(I + (XᵗV⁻¹X)⁻¹)⁻¹ β̂ = (XᵗV⁻¹X + I)⁻¹ XᵗV⁻¹X β̂`.
pub fn shrinkage_estimate(fit: &GlsFit) -> Result<DVector<f64>> {
    let a = &fit.xtvix;
    Cholesky::new(a, PivotRule::OwnDiagonal(RANK_RTOL))
        .map_err(|f| Error::RankDeficient { column: f.index })?;
    let k = a.nrows();
    let shifted = a + DMatrix::<f64>::identity(k, k);
    let chol = Cholesky::new(&shifted, PivotRule::MaxDiagonal(COVARIANCE_PIVOT_RTOL))
        .map_err(|f| Error::SingularCovariance(format!("XᵗV⁻¹X + I pivot {:.3e}", f.pivot)))?;
    Ok(chol.solve_vec(&(a * &fit.beta)))
}

/// Lineage-effect parametrization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShiftMode {
    /// Pure shift added on top of Brownian change; covariance is the full tree.
    #[serde(rename = "S")]
    PureShift,
    /// Actual change along the lineage; the subtending edge is cut and the two
    /// subtrees are independent.
    #[serde(rename = "SB")]
    ActualChange,
}

impl std::str::FromStr for ShiftMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "S" | "s" => Ok(Self::PureShift),
            "SB" | "sb" => Ok(Self::ActualChange),
            other => Err(format!("unknown shift mode `{other}` (expected S|SB)")),
        }
    }
}

/// A lineage effect on the edge above `focal`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSpec {
    pub focal: NodeId,
    pub mode: ShiftMode,
    /// Length of the edge subtending the focal clade.
    pub t1: f64,
    /// Height used for the top subtree: the full tree height for `S`, the
    /// clade's own height (below the focal node) for `SB`.
    pub top_height: f64,
    /// Number of edges leaving the focal node.
    pub k_top: usize,
    /// Shortest edge leaving the focal node.
    pub t_top: f64,
    /// Canonical indices of the tips in the focal clade.
    pub top_tips: Vec<usize>,
}

impl ShiftSpec {
    pub fn new(
        tree: &PhyloTree,
        focal: NodeId,
        mode: ShiftMode,
        policy: HeightPolicy,
    ) -> Result<Self> {
        if focal >= tree.n_nodes() {
            return Err(Error::UnknownNode(format!("#{focal}")));
        }
        if focal == tree.root() {
            return Err(Error::InvalidParameter(
                "shift node cannot be the root".into(),
            ));
        }
        if tree.is_tip(focal) {
            return Err(Error::InvalidParameter(
                "shift node must be internal, not a tip".into(),
            ));
        }
        let top_tips = tree.tips_below(focal);
        let mut sorted = top_tips.clone();
        sorted.sort_unstable();
        let kids = tree.children(focal);
        let top_height = match mode {
            ShiftMode::PureShift => tree_stats(tree).height_with(policy),
            ShiftMode::ActualChange => {
                let base = tree.depth(focal);
                let h: Vec<f64> = sorted
                    .iter()
                    .map(|&i| tree.depth(tree.tips()[i]) - base)
                    .collect();
                match policy {
                    HeightPolicy::Mean => h.iter().sum::<f64>() / h.len() as f64,
                    HeightPolicy::Max => h.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                }
            }
        };
        Ok(Self {
            focal,
            mode,
            t1: tree.edge_length(focal),
            top_height,
            k_top: kids.len(),
            t_top: kids
                .iter()
                .map(|&c| tree.edge_length(c))
                .fold(f64::INFINITY, f64::min),
            top_tips: sorted,
        })
    }

    /// 0/1 indicator of the focal clade in canonical tip order.
    pub fn indicator(&self, n: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        for &i in &self.top_tips {
            v[i] = 1.0;
        }
        v
    }

    pub fn bottom_tips(&self, n: usize) -> Vec<usize> {
        let top: std::collections::HashSet<_> = self.top_tips.iter().copied().collect();
        (0..n).filter(|i| !top.contains(i)).collect()
    }

    /// Top clade (rooted at the focal node) and the rest of the tree (original
    /// root retained) after cutting the subtending edge.
    pub fn split(&self, tree: &PhyloTree) -> Result<(PhyloTree, PhyloTree)> {
        let bottom = self.bottom_tips(tree.n_tips());
        if bottom.is_empty() {
            return Err(Error::InvalidParameter(
                "focal clade contains every tip; nothing left below".into(),
            ));
        }
        let top = tree.subtree(self.focal)?;
        let bot = crate::tree::restrict_to_indices(tree, &bottom)?;
        Ok((top, bot))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftFit {
    /// Coefficients are `[intercept, lineage effect, covariates...]`. The
    /// intercept is the state at the original root, which is also the root of
    /// the bottom subtree in `SB` mode.
    pub fit: GlsFit,
    pub spec: ShiftSpec,
}

impl ShiftFit {
    pub fn shift_estimate(&self) -> f64 {
        self.fit.beta[1]
    }

    /// Covariance matrix the fit used, up to σ².
    pub fn implied_covariance(&self, tree: &PhyloTree) -> Result<DMatrix<f64>> {
        match self.spec.mode {
            ShiftMode::PureShift => cov::bm_covariance(tree),
            ShiftMode::ActualChange => {
                let n = tree.n_tips();
                let (top, bot) = self.spec.split(tree)?;
                let mut v = DMatrix::zeros(n, n);
                for (sub, rows) in [
                    (top, self.spec.top_tips.clone()),
                    (bot, self.spec.bottom_tips(n)),
                ] {
                    let block = cov::bm_covariance(&sub)?;
                    for (a, &i) in rows.iter().enumerate() {
                        for (b, &j) in rows.iter().enumerate() {
                            v[(i, j)] = block[(a, b)];
                        }
                    }
                }
                Ok(v)
            }
        }
    }
}

/// Fit `Y = 1β₀ + 1_top β_top + Xβ + ε` for the lineage effect in `spec`.
/// `covariates` holds only the random covariates (may have zero columns).
pub fn fit_shift_model(
    tree: &PhyloTree,
    covariates: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: &ShiftSpec,
) -> Result<ShiftFit> {
    let n = tree.n_tips();
    if y.len() != n || covariates.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "tree has {n} tips, Y has {}, covariates have {} rows",
            y.len(),
            covariates.nrows()
        )));
    }
    if spec.top_tips.len() == n {
        return Err(Error::RankDeficient { column: 1 });
    }
    let mut x = DMatrix::from_element(n, covariates.ncols() + 2, 1.0);
    x.set_column(1, &spec.indicator(n));
    x.view_mut((0, 2), (n, covariates.ncols()))
        .copy_from(covariates);

    let fit = match spec.mode {
        ShiftMode::PureShift => fit_with(&Backend::Pruning(tree), &x, y, CovarianceSpec::Bm)?,
        ShiftMode::ActualChange => {
            let (top, bot) = spec.split(tree)?;
            let blocks = vec![(top, spec.top_tips.clone()), (bot, spec.bottom_tips(n))];
            fit_with(&Backend::Blocks(blocks), &x, y, CovarianceSpec::Bm)?
        }
    };
    Ok(ShiftFit {
        fit,
        spec: spec.clone(),
    })
}
