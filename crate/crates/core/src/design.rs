//! Choosing which tips to sample.
//!
//! The objective is the scaled ESS `1ᵗV⁻¹1` of the tree restricted to the
//! chosen tips (original root retained). Candidate subsets are scored with a
//! masked pruning pass, so no restricted tree is ever built during a search.

use itertools::Itertools;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::cov::one_tvi_one_masked;
use crate::error::{Error, Result};
use crate::report::{Cell, CsvTable};
use crate::tree::{restrict_to_tips, HeightPolicy, PhyloTree};

/// Default cap on the number of subsets an exhaustive search may visit.
pub const DEFAULT_BUDGET: u128 = 2_000_000;

const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignMethod {
    Forward,
    Backward,
    Exhaustive,
    Random,
}

impl std::str::FromStr for DesignMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Self::Forward),
            "backward" => Ok(Self::Backward),
            "exhaustive" => Ok(Self::Exhaustive),
            "random" => Ok(Self::Random),
            other => Err(format!(
                "unknown design method `{other}` (expected forward|backward|exhaustive|random)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignResult {
    pub method: DesignMethod,
    /// Tip labels in canonical order.
    pub selected: Vec<String>,
    #[serde(skip)]
    pub indices: Vec<usize>,
    /// Scaled ESS of the selection.
    pub score: f64,
    /// `T · score` with `T` the mean height of the selected tips.
    pub n_e: f64,
    /// `(subset size, best score)` along the search.
    pub trajectory: Vec<(usize, f64)>,
    pub evaluations: u64,
}

/// Scaled ESS of the tree restricted to `keep`.
pub fn score_subsample<S: AsRef<str>>(tree: &PhyloTree, keep: &[S]) -> Result<f64> {
    crate::cov::one_tvi_one(&restrict_to_tips(tree, keep)?)
}

fn mask_of(n: usize, idx: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &i in idx {
        m[i] = true;
    }
    m
}

fn check_size(tree: &PhyloTree, k: usize) -> Result<()> {
    let n = tree.n_tips();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "subset size must be in 1..={n}, got {k}"
        )));
    }
    Ok(())
}

fn mean_height(heights: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| heights[i]).sum::<f64>() / idx.len() as f64
}

fn finish(
    tree: &PhyloTree,
    method: DesignMethod,
    mut idx: Vec<usize>,
    score: f64,
    trajectory: Vec<(usize, f64)>,
    evaluations: u64,
) -> DesignResult {
    idx.sort_unstable();
    let labels = tree.tip_labels();
    let heights = tree.tip_heights();
    DesignResult {
        method,
        selected: idx.iter().map(|&i| labels[i].to_string()).collect(),
        n_e: mean_height(&heights, &idx) * score,
        indices: idx,
        score,
        trajectory,
        evaluations,
    }
}

/// Index of the largest score; the first one wins ties.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Greedy search: forward adds the best tip to the best singleton until `k`
/// tips are chosen; backward drops tips from the full set. Ties go to the
/// tip that comes first in canonical order.
pub fn stepwise_design(
    tree: &PhyloTree,
    k: usize,
    direction: DesignMethod,
) -> Result<DesignResult> {
    check_size(tree, k)?;
    let n = tree.n_tips();
    let mut evaluations = 0u64;
    let mut trajectory = Vec::new();
    match direction {
        DesignMethod::Forward => {
            let mut mask = vec![false; n];
            let mut chosen = Vec::with_capacity(k);
            let mut best = 0.0;
            while chosen.len() < k {
                let candidates: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
                let scores = candidates
                    .par_iter()
                    .map(|&i| {
                        let mut m = mask.clone();
                        m[i] = true;
                        one_tvi_one_masked(tree, &m)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                evaluations += candidates.len() as u64;
                let j = argmax(&scores);
                mask[candidates[j]] = true;
                chosen.push(candidates[j]);
                best = scores[j];
                trajectory.push((chosen.len(), best));
            }
            Ok(finish(
                tree,
                direction,
                chosen,
                best,
                trajectory,
                evaluations,
            ))
        }
        DesignMethod::Backward => {
            let mut mask = vec![true; n];
            let mut best = one_tvi_one_masked(tree, &mask)?;
            evaluations += 1;
            trajectory.push((n, best));
            for size in (k..n).rev() {
                let candidates: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
                let scores = candidates
                    .par_iter()
                    .map(|&i| {
                        let mut m = mask.clone();
                        m[i] = false;
                        one_tvi_one_masked(tree, &m)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                evaluations += candidates.len() as u64;
                let j = argmax(&scores);
                mask[candidates[j]] = false;
                best = scores[j];
                trajectory.push((size, best));
            }
            let chosen = (0..n).filter(|&i| mask[i]).collect();
            Ok(finish(
                tree,
                direction,
                chosen,
                best,
                trajectory,
                evaluations,
            ))
        }
        other => Err(Error::InvalidParameter(format!(
            "{other:?} is not a stepwise direction"
        ))),
    }
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = match c.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    c
}

/// True optimum over all `C(n, k)` subsets; refuses when that exceeds `budget`.
/// Among equal scores the lexicographically first subset wins.
pub fn exhaustive_design(tree: &PhyloTree, k: usize, budget: u128) -> Result<DesignResult> {
    check_size(tree, k)?;
    let n = tree.n_tips();
    let required = binomial(n, k);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for chunk in &(0..n).combinations(k).chunks(CHUNK) {
        let subsets: Vec<Vec<usize>> = chunk.collect();
        let scores = subsets
            .par_iter()
            .map(|s| one_tvi_one_masked(tree, &mask_of(n, s)))
            .collect::<Result<Vec<f64>>>()?;
        let j = argmax(&scores);
        if best.as_ref().map_or(true, |(b, _)| scores[j] > *b) {
            best = Some((scores[j], subsets[j].clone()));
        }
    }
    let (score, idx) = best.expect("at least one subset");
    Ok(finish(
        tree,
        DesignMethod::Exhaustive,
        idx,
        score,
        vec![(k, score)],
        required as u64,
    ))
}

/// Empirical summary of a sample; quantiles interpolate linearly between
/// order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub q025: f64,
    pub median: f64,
    pub q975: f64,
    pub mean: f64,
}

/// Quantile `p` of sorted data, linear interpolation between order
/// statistics at position `p (n − 1)`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            q025: quantile_sorted(&v, 0.025),
            median: quantile_sorted(&v, 0.5),
            q975: quantile_sorted(&v, 0.975),
            mean: values.iter().sum::<f64>() / values.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomBand {
    pub k: usize,
    pub reps: usize,
    pub seed: u64,
    /// Quantiles of the scaled ESS `1ᵗV⁻¹1`.
    pub scaled_ess: Quantiles,
    /// Quantiles of `n_e`, each subset using its own mean tip height.
    pub n_e: Quantiles,
}

/// Scores of `reps` uniform random `k`-subsets. Replicate `r` draws from
/// stream `r` of `seed` with a partial Fisher–Yates shuffle.
pub fn random_design_bands(
    tree: &PhyloTree,
    k: usize,
    reps: usize,
    seed: u64,
    policy: HeightPolicy,
) -> Result<RandomBand> {
    check_size(tree, k)?;
    if reps == 0 {
        return Err(Error::InvalidParameter(
            "need at least one replicate".into(),
        ));
    }
    let n = tree.n_tips();
    let heights = tree.tip_heights();
    let draws = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = crate::rng::stream(seed, r);
            let mut idx: Vec<usize> = (0..n).collect();
            let (picked, _) = idx.partial_shuffle(&mut rng, k);
            let picked = picked.to_vec();
            let s = one_tvi_one_masked(tree, &mask_of(n, &picked))?;
            let h = match policy {
                HeightPolicy::Mean => mean_height(&heights, &picked),
                HeightPolicy::Max => picked
                    .iter()
                    .map(|&i| heights[i])
                    .fold(f64::NEG_INFINITY, f64::max),
            };
            Ok((s, h * s))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (scaled, ne): (Vec<f64>, Vec<f64>) = draws.into_iter().unzip();
    Ok(RandomBand {
        k,
        reps,
        seed,
        scaled_ess: Quantiles::of(&scaled),
        n_e: Quantiles::of(&ne),
    })
}

/// Band table for `k = 1..=k_max`: random-subset quantiles of the scaled ESS
/// next to the better of the two stepwise optima.
pub fn design_band_table(
    tree: &PhyloTree,
    k_max: usize,
    reps: usize,
    seed: u64,
) -> Result<(Vec<RandomBand>, Vec<f64>)> {
    check_size(tree, k_max)?;
    let mut bands = Vec::with_capacity(k_max);
    let mut optima = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        bands.push(random_design_bands(
            tree,
            k,
            reps,
            crate::rng::derive_seed(seed, k as u64),
            HeightPolicy::Mean,
        )?);
        let f = stepwise_design(tree, k, DesignMethod::Forward)?.score;
        let b = stepwise_design(tree, k, DesignMethod::Backward)?.score;
        optima.push(f.max(b));
    }
    Ok((bands, optima))
}

pub fn band_table_csv(bands: &[RandomBand], optima: &[f64]) -> String {
    let mut t = CsvTable::new(&["k", "q025", "median", "q975", "optimum"]);
    for (b, &o) in bands.iter().zip(optima) {
        t.push(&[
            Cell::Int(b.k as u64),
            Cell::Float(b.scaled_ess.q025),
            Cell::Float(b.scaled_ess.median),
            Cell::Float(b.scaled_ess.q975),
            Cell::Float(o),
        ]);
    }
    t.render()
}
