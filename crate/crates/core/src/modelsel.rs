//! Information criteria for GLS fits.
//!
//! Under tree dependence the intercept (and a lineage effect) may be estimated
//! inconsistently: their information stays bounded as tips are added. The
//! corrected BIC charges those parameters `ln(1 + n_e)` instead of `ln n`.
//! Every other coefficient and σ keep the usual `ln n`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ess::{EssReport, LineageEss};
use crate::gls::{GlsFit, ShiftFit};
use crate::report::{Cell, CsvTable};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelScore {
    pub model: String,
    pub loglik: f64,
    /// Parameters charged `ln n`: the random-covariate slopes and σ.
    pub p_consistent: usize,
    pub aic: f64,
    pub bic_standard: f64,
    pub bic_corrected: f64,
    /// Corrected-BIC penalty terms; they sum to `bic_corrected + 2 loglik`.
    pub penalties: BTreeMap<String, f64>,
}

fn loglik(fit: &GlsFit) -> Result<f64> {
    fit.loglik.ok_or_else(|| {
        Error::DegenerateLikelihood(
            "residual sum of squares is 0, so σ̂²_ML = 0 and the likelihood is unbounded".into(),
        )
    })
}

/// Free parameters: coefficients plus σ.
fn n_params(fit: &GlsFit) -> usize {
    fit.rank + 1
}

/// `2p − 2 ln L` with `p = rank(X) + 1`.
pub fn aic(fit: &GlsFit) -> Result<f64> {
    Ok(2.0 * n_params(fit) as f64 - 2.0 * loglik(fit)?)
}

/// `−2 ln L + p ln n` with `p = rank(X) + 1`.
pub fn bic_standard(fit: &GlsFit) -> Result<f64> {
    if fit.n < 2 {
        return Err(Error::InsufficientData {
            n: fit.n,
            required: 1,
        });
    }
    Ok(-2.0 * loglik(fit)? + n_params(fit) as f64 * (fit.n as f64).ln())
}

/// Corrected-BIC penalty for an intercept-plus-`k`-covariates model:
/// `(k + 1) ln n + ln(1 + n_e)`.
pub fn corrected_penalty_m0(n: usize, k: usize, n_e: f64) -> f64 {
    (k + 1) as f64 * (n as f64).ln() + n_e.ln_1p()
}

fn score(
    model: &str,
    fit: &GlsFit,
    p_consistent: usize,
    inconsistent: &[(&str, f64)],
) -> Result<ModelScore> {
    let ll = loglik(fit)?;
    let mut penalties = BTreeMap::new();
    penalties.insert(
        "consistent".to_string(),
        p_consistent as f64 * (fit.n as f64).ln(),
    );
    for &(name, n_e) in inconsistent {
        penalties.insert(name.to_string(), n_e.ln_1p());
    }
    let total: f64 = penalties.values().sum();
    Ok(ModelScore {
        model: model.to_string(),
        loglik: ll,
        p_consistent,
        aic: aic(fit)?,
        bic_standard: bic_standard(fit)?,
        bic_corrected: -2.0 * ll + total,
        penalties,
    })
}

/// Corrected BIC of `M₀`: intercept plus `k = rank − 1` random covariates.
pub fn bic_corrected_m0(fit: &GlsFit, ess: &EssReport) -> Result<ModelScore> {
    if fit.n != ess.n {
        return Err(Error::DimensionMismatch(format!(
            "fit has n = {}, ESS report has n = {}",
            fit.n, ess.n
        )));
    }
    score("M0", fit, fit.rank, &[("intercept", ess.n_e)])
}

/// Corrected BIC of `M₁`: intercept, lineage effect and `k = rank − 2` random
/// covariates.
///
/// The criterion treats the intercept as the state at the base of the focal
/// lineage. Moving the intercept there is a linear reparametrization of
/// `(β₀, β_top)`, which leaves the maximized likelihood unchanged, so the fit
/// is scored as is.
pub fn bic_corrected_m1(fit: &ShiftFit, ess: &LineageEss) -> Result<ModelScore> {
    if !ess.matches(&fit.spec) {
        return Err(Error::InvalidParameter(
            "lineage ESS was computed for a different shift specification".into(),
        ));
    }
    let model = match fit.spec.mode {
        crate::gls::ShiftMode::PureShift => "M1-S",
        crate::gls::ShiftMode::ActualChange => "M1-SB",
    };
    score(
        model,
        &fit.fit,
        fit.fit.rank - 1,
        &[("bottom", ess.n_e_bot), ("top", ess.n_e_top)],
    )
}

/// Comparison table across models.
pub fn scorecard_csv(scores: &[ModelScore]) -> String {
    let mut t = CsvTable::new(&["model", "loglik", "aic", "bic_standard", "bic_corrected"]);
    for s in scores {
        t.push(&[
            Cell::Text(&s.model),
            Cell::Float(s.loglik),
            Cell::Float(s.aic),
            Cell::Float(s.bic_standard),
            Cell::Float(s.bic_corrected),
        ]);
    }
    t.render()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cov::CovarianceSpec;
    use crate::ess::{ess_intercept, ess_lineage};
    use crate::gls::{fit_shift_model, gls_fit, ShiftMode, ShiftSpec};
    use crate::tree::{parse_newick, HeightPolicy};
    use nalgebra::{DMatrix, DVector};

    fn star(n: usize) -> crate::tree::PhyloTree {
        let tips: Vec<String> = (0..n).map(|i| format!("t{i}:1")).collect();
        parse_newick(&format!("({});", tips.join(","))).unwrap()
    }

    fn response(n: usize) -> DVector<f64> {
        DVector::from_fn(n, |i, _| ((i * 7 + 3) % 11) as f64 * 0.37 - 1.0)
    }

    #[test]
    fn star_tree_matches_ols_aic_and_bic() {
        let n = 20;
        let y = response(n);
        let fit = gls_fit(
            &star(n),
            &DMatrix::from_element(n, 1, 1.0),
            &y,
            CovarianceSpec::Bm,
        )
        .unwrap();
        let mean = y.mean();
        let rss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let nf = n as f64;
        let ll = -0.5 * nf * ((2.0 * std::f64::consts::PI * rss / nf).ln() + 1.0);
        assert!((aic(&fit).unwrap() - (4.0 - 2.0 * ll)).abs() < 1e-10);
        assert!((bic_standard(&fit).unwrap() - (2.0 * nf.ln() - 2.0 * ll)).abs() < 1e-10);
    }

    #[test]
    fn star_tree_correction_is_log_ratio() {
        let n = 100;
        let t = star(n);
        let fit = gls_fit(
            &t,
            &DMatrix::from_element(n, 1, 1.0),
            &response(n),
            CovarianceSpec::Bm,
        )
        .unwrap();
        let s = bic_corrected_m0(&fit, &ess_intercept(&t).unwrap()).unwrap();
        let diff = s.bic_corrected - s.bic_standard;
        assert!((diff - (101.0f64 / 100.0).ln()).abs() < 1e-12);
        let sum: f64 = s.penalties.values().sum();
        assert!((sum - (s.bic_corrected + 2.0 * s.loglik)).abs() < 1e-12);
    }

    #[test]
    fn single_tip_penalty() {
        assert!((corrected_penalty_m0(1, 0, 1.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn exact_fit_is_an_error() {
        let t = parse_newick("((A:0.5,B:0.5):0.5,C:1.0);").unwrap();
        let fit = gls_fit(
            &t,
            &DMatrix::from_element(3, 1, 1.0),
            &DVector::from_element(3, 1.0),
            CovarianceSpec::Bm,
        )
        .unwrap();
        assert!(matches!(aic(&fit), Err(Error::DegenerateLikelihood(_))));
        assert!(matches!(
            bic_standard(&fit),
            Err(Error::DegenerateLikelihood(_))
        ));
    }

    #[test]
    fn extra_covariate_costs_two_in_aic_penalty() {
        let n = 12;
        let t = star(n);
        let y = response(n);
        let x0 = DMatrix::from_element(n, 1, 1.0);
        let x1 = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { ((i * 5) % 7) as f64 });
        let f0 = gls_fit(&t, &x0, &y, CovarianceSpec::Bm).unwrap();
        let f1 = gls_fit(&t, &x1, &y, CovarianceSpec::Bm).unwrap();
        let pen = |f: &GlsFit| aic(f).unwrap() + 2.0 * f.loglik.unwrap();
        assert!((pen(&f1) - pen(&f0) - 2.0).abs() < 1e-12);
        let d = bic_standard(&f1).unwrap() - bic_standard(&f0).unwrap();
        let expect = -2.0 * (f1.loglik.unwrap() - f0.loglik.unwrap()) + (n as f64).ln();
        assert!((d - expect).abs() < 1e-10);
    }

    #[test]
    fn m1_score_and_mismatch() {
        let t =
            parse_newick("(((A:0.2,B:0.2)ab:0.3,C:0.5):0.5,(D:0.4,E:0.4,F:0.4):0.6)r;").unwrap();
        let y = DVector::from_vec(vec![3.0, 2.5, 0.4, -0.2, 0.3, 0.1]);
        let ab = t.resolve_node("ab").unwrap();
        let spec = ShiftSpec::new(&t, ab, ShiftMode::ActualChange, HeightPolicy::Mean).unwrap();
        let fit = fit_shift_model(&t, &DMatrix::zeros(6, 0), &y, &spec).unwrap();
        let l = ess_lineage(&t, &spec, HeightPolicy::Mean).unwrap();
        let s = bic_corrected_m1(&fit, &l).unwrap();
        let n = 6f64;
        let expect = -2.0 * s.loglik + n.ln() + l.n_e_bot.ln_1p() + l.n_e_top.ln_1p();
        assert!((s.bic_corrected - expect).abs() < 1e-12);
        assert!(
            (s.bic_corrected
                - s.bic_standard
                - (l.n_e_bot.ln_1p() + l.n_e_top.ln_1p() - 2.0 * n.ln()))
            .abs()
                < 1e-12
        );

        let other = ShiftSpec::new(&t, ab, ShiftMode::PureShift, HeightPolicy::Mean).unwrap();
        let wrong = ess_lineage(&t, &other, HeightPolicy::Mean).unwrap();
        assert!(bic_corrected_m1(&fit, &wrong).is_err());
    }

    #[test]
    fn mismatched_n_is_rejected() {
        let fit = gls_fit(
            &star(5),
            &DMatrix::from_element(5, 1, 1.0),
            &response(5),
            CovarianceSpec::Bm,
        )
        .unwrap();
        assert!(bic_corrected_m0(&fit, &ess_intercept(&star(6)).unwrap()).is_err());
    }
}
