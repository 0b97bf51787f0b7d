use crate::error::{Error, Result};

/// Closed-form spectrum of the Brownian covariance of a symmetric tree.
///
/// Level `i` (root = level 1) has `d[i]` descendants per node and edges of
/// length `t[i]` below it. Returns `(eigenvalue, multiplicity)` per level,
/// from the root down:
/// `λ_i = n · Σ_{j≥i} t_j / (d_1⋯d_j)` with multiplicity `d_1` at the root and
/// `d_1⋯d_{i-1}(d_i − 1)` below.
pub fn symmetric_tree_eigenvalues(d: &[usize], t: &[f64]) -> Result<Vec<(f64, usize)>> {
    if d.is_empty() || d.len() != t.len() {
        return Err(Error::InvalidParameter(format!(
            "need equal-length, nonempty level specs (got {} counts, {} times)",
            d.len(),
            t.len()
        )));
    }
    if let Some(&bad) = d.iter().find(|&&di| di < 2) {
        return Err(Error::InvalidParameter(format!(
            "descendant counts must be >= 2, got {bad}"
        )));
    }
    if let Some(&bad) = t.iter().find(|&&ti| !(ti > 0.0 && ti.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "level times must be positive, got {bad}"
        )));
    }
    let m = d.len();
    // prefix[i] = d_1⋯d_{i+1}
    let prefix: Vec<f64> = d
        .iter()
        .scan(1.0, |acc, &di| {
            *acc *= di as f64;
            Some(*acc)
        })
        .collect();
    let n = prefix[m - 1];
    // suffix sums Σ_{j≥i} t_j/(d_1⋯d_j)
    let mut tail = vec![0.0; m + 1];
    for i in (0..m).rev() {
        tail[i] = tail[i + 1] + t[i] / prefix[i];
    }
    let mut count_above = 1usize;
    Ok((0..m)
        .map(|i| {
            let mult = if i == 0 {
                d[0]
            } else {
                count_above * (d[i] - 1)
            };
            count_above *= d[i];
            (n * tail[i], mult)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_two_level() {
        let e = symmetric_tree_eigenvalues(&[2, 2], &[0.5, 0.5]).unwrap();
        assert_eq!(e, vec![(1.5, 2), (0.5, 2)]);
        let trace: f64 = e.iter().map(|&(l, k)| l * k as f64).sum();
        assert_eq!(trace, 4.0);
    }

    #[test]
    fn star_has_single_eigenvalue() {
        let e = symmetric_tree_eigenvalues(&[5], &[0.8]).unwrap();
        assert_eq!(e.len(), 1);
        assert!((e[0].0 - 0.8).abs() < 1e-15);
        assert_eq!(e[0].1, 5);
    }

    #[test]
    fn invalid_specs() {
        assert!(symmetric_tree_eigenvalues(&[], &[]).is_err());
        assert!(symmetric_tree_eigenvalues(&[2, 1], &[0.5, 0.5]).is_err());
        assert!(symmetric_tree_eigenvalues(&[2, 2], &[0.5, 0.0]).is_err());
        assert!(symmetric_tree_eigenvalues(&[2, 2], &[0.5]).is_err());
    }
}
