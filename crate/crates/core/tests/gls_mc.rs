mod common;

use rayon::prelude::*;
use treegls::gls::with_intercept;
use treegls::nalgebra::{DMatrix, DVector};
use treegls::rng::derive_seed;
use treegls::{
    bic_corrected_m0, bic_corrected_m1, bic_standard, covariate_sigma_hat, ess_intercept,
    ess_lineage, fit_shift_model, gls_fit, simulate_bm, simulate_traits, CovarianceSpec,
    HeightPolicy, PhyloTree, ShiftMode, ShiftSpec,
};

fn fixed_design(n: usize) -> DMatrix<f64> {
    with_intercept(&DMatrix::from_fn(n, 1, |i, _| {
        ((i * 5 % 7) as f64 - 3.0) * 0.4
    }))
}

fn fits(
    t: &PhyloTree,
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    sigma2: f64,
    reps: u64,
    seed: u64,
) -> Vec<(DVector<f64>, f64)> {
    let mean = x * beta;
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let y = &mean + simulate_bm(t, 0.0, sigma2, derive_seed(seed, r)).unwrap();
            let f = gls_fit(t, x, &y, CovarianceSpec::Bm).unwrap();
            (f.beta, f.sigma2_hat)
        })
        .collect()
}

#[test]
fn coefficients_are_unbiased() {
    let t = common::tree(16, false, 0.2, 21);
    let x = fixed_design(16);
    let beta = DVector::from_vec(vec![1.5, -0.7]);
    let sims = fits(&t, &x, &beta, 0.8, 5000, 1);
    for j in 0..2 {
        let b: Vec<f64> = sims.iter().map(|(b, _)| b[j]).collect();
        assert!(
            (common::mean(&b) - beta[j]).abs() <= 3.0 * common::se_mean(&b),
            "beta[{j}]"
        );
    }
}

#[test]
fn scaled_sigma_hat_is_chi_square_and_uncorrelated_with_beta() {
    let t = common::tree(16, true, 0.0, 22);
    let x = fixed_design(16);
    let sigma2 = 2.0;
    let sims = fits(
        &t,
        &x,
        &DVector::from_vec(vec![0.3, 1.0]),
        sigma2,
        10_000,
        2,
    );
    let dof = 14.0;
    let q: Vec<f64> = sims.iter().map(|(_, s)| dof * s / sigma2).collect();
    assert!((common::mean(&q) - dof).abs() <= 0.05 * dof);
    assert!((common::var(&q) - 2.0 * dof).abs() <= 0.05 * 2.0 * dof);
    let s2: Vec<f64> = sims.iter().map(|(_, s)| *s).collect();
    for j in 0..2 {
        let b: Vec<f64> = sims.iter().map(|(b, _)| b[j]).collect();
        let r = common::cov(&b, &s2) / (common::var(&b) * common::var(&s2)).sqrt();
        assert!(
            r.abs() <= 3.0 / (sims.len() as f64).sqrt(),
            "corr beta[{j}] = {r}"
        );
    }
}

#[test]
fn covariate_sigma_hat_is_unbiased() {
    let t = common::tree(32, false, 0.1, 23);
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, -0.4, -0.4, 0.5]);
    let beta = DVector::zeros(3);
    let hats: Vec<DMatrix<f64>> = (0..2000u64)
        .into_par_iter()
        .map(|r| {
            let (x, _) = simulate_traits(&t, &beta, &sigma, 1.0, derive_seed(4, r)).unwrap();
            covariate_sigma_hat(&t, &x).unwrap()
        })
        .collect();
    for (a, b) in [(0, 0), (0, 1), (1, 1)] {
        let e: Vec<f64> = hats.iter().map(|h| h[(a, b)]).collect();
        assert!(
            (common::mean(&e) - sigma[(a, b)]).abs() <= 3.0 * common::se_mean(&e),
            "({a},{b})"
        );
        assert!((hats[0][(a, b)] - hats[0][(b, a)]).abs() < 1e-14);
    }
}

/// `var(β̂₁) = σ²Σ⁻¹/(n − k − 2)` for Brownian covariates, any tree.
#[test]
fn slope_variance_decays_at_rate_n() {
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.6]);
    let sinv = sigma.clone().try_inverse().unwrap();
    let beta = DVector::from_vec(vec![0.5, 1.0, -1.0]);
    let sigma2 = 1.0;
    for (i, n) in [32usize, 64, 128].into_iter().enumerate() {
        let t = common::tree(n, i != 1, 0.1, 30 + n as u64);
        let slopes: Vec<DVector<f64>> = (0..20_000u64)
            .into_par_iter()
            .map(|r| {
                let (x, y) =
                    simulate_traits(&t, &beta, &sigma, sigma2, derive_seed(n as u64, r)).unwrap();
                gls_fit(&t, &with_intercept(&x), &y, CovarianceSpec::Bm)
                    .unwrap()
                    .beta
                    .rows(1, 2)
                    .into_owned()
            })
            .collect();
        for j in 0..2 {
            let b: Vec<f64> = slopes.iter().map(|s| s[j]).collect();
            let theory = sigma2 * sinv[(j, j)] / (n - 4) as f64;
            let v = common::var(&b);
            assert!(
                (v / theory - 1.0).abs() <= 0.05,
                "n={n} slope{j}: {v} vs {theory}"
            );
        }
    }
}

#[test]
fn selection_frequencies_follow_penalty_ordering() {
    let t = common::tree(32, true, 0.0, 24);
    let n = 32;
    // focal: the largest clade holding at most half the tips
    let focal = (0..t.n_nodes())
        .filter(|&u| !t.is_tip(u) && u != t.root())
        .filter(|&u| (4..=16).contains(&t.tips_below(u).len()))
        .max_by_key(|&u| t.tips_below(u).len())
        .unwrap();
    let spec = ShiftSpec::new(&t, focal, ShiftMode::PureShift, HeightPolicy::Mean).unwrap();
    let ess0 = ess_intercept(&t).unwrap();
    let ess1 = ess_lineage(&t, &spec, HeightPolicy::Mean).unwrap();
    let ones = DMatrix::from_element(n, 1, 1.0);
    let none = DMatrix::zeros(n, 0);
    let extra_corrected = ess1.n_e_bot.ln_1p() + ess1.n_e_top.ln_1p() - ess0.n_e.ln_1p();
    let picks: Vec<(bool, bool)> = (0..1000u64)
        .into_par_iter()
        .map(|r| {
            let y = simulate_bm(&t, 0.2, 1.0, derive_seed(6, r)).unwrap();
            let f0 = gls_fit(&t, &ones, &y, CovarianceSpec::Bm).unwrap();
            let f1 = fit_shift_model(&t, &none, &y, &spec).unwrap();
            let c0 = bic_corrected_m0(&f0, &ess0).unwrap();
            let c1 = bic_corrected_m1(&f1, &ess1).unwrap();
            let std_m0 = bic_standard(&f0).unwrap() <= bic_standard(&f1.fit).unwrap();
            let cor_m0 = c0.bic_corrected <= c1.bic_corrected;
            // each choice is a threshold on the same likelihood ratio
            let lr = 2.0 * (f1.fit.loglik.unwrap() - f0.loglik.unwrap());
            for (picked, threshold) in [(std_m0, (n as f64).ln()), (cor_m0, extra_corrected)] {
                if (lr - threshold).abs() > 1e-9 {
                    assert_eq!(picked, lr < threshold);
                }
            }
            (std_m0, cor_m0)
        })
        .collect();
    let std_count = picks.iter().filter(|p| p.0).count();
    let cor_count = picks.iter().filter(|p| p.1).count();
    // the bounded-information penalty is lighter than ln n here, so standard
    // BIC picks the null at least as often
    assert!(extra_corrected < (n as f64).ln());
    assert!(
        std_count >= cor_count,
        "standard {std_count}, corrected {cor_count}"
    );
    assert!(std_count > 900);
}
