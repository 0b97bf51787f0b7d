//! Tip-aligned trait tables.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tree::PhyloTree;

/// Response and covariate columns, rows in canonical tip order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraitTable {
    pub response: String,
    pub covariates: Vec<String>,
    #[serde(skip)]
    pub y: DVector<f64>,
    /// Covariates only; no intercept column.
    #[serde(skip)]
    pub x: DMatrix<f64>,
}

/// Parse CSV text with header `tip,<y>,<x1>,...` and align rows to `tree`.
///
/// Every tip must appear exactly once and no other rows are allowed.
pub fn read_trait_table(text: &str, tree: &PhyloTree) -> Result<TraitTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::TraitTable(e.to_string()))?
        .clone();
    if header.len() < 2 {
        return Err(Error::TraitTable(
            "header needs a tip column and a response column".into(),
        ));
    }
    if !header[0].eq_ignore_ascii_case("tip") {
        return Err(Error::TraitTable(format!(
            "first column must be `tip`, found `{}`",
            &header[0]
        )));
    }
    let n = tree.n_tips();
    let p = header.len() - 1;
    let mut values: Vec<Option<Vec<f64>>> = vec![None; n];
    let index: HashMap<&str, usize> = tree
        .tip_labels()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();

    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::TraitTable(e.to_string()))?;
        let row = line + 2;
        let label = &rec[0];
        let &i = index.get(label).ok_or_else(|| {
            Error::TraitTable(format!("row {row}: tip `{label}` is not in the tree"))
        })?;
        if values[i].is_some() {
            return Err(Error::TraitTable(format!(
                "row {row}: tip `{label}` appears twice"
            )));
        }
        let parsed = (1..=p)
            .map(|j| {
                rec[j]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::TraitTable(format!(
                            "row {row}, column `{}`: `{}` is not a finite number",
                            &header[j], &rec[j]
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        values[i] = Some(parsed);
    }
    let missing: Vec<&str> = tree
        .tip_labels()
        .into_iter()
        .zip(&values)
        .filter(|(_, v)| v.is_none())
        .map(|(l, _)| l)
        .collect();
    if !missing.is_empty() {
        return Err(Error::TraitTable(format!(
            "no row for tips: {}",
            missing.join(", ")
        )));
    }
    let rows: Vec<Vec<f64>> = values.into_iter().map(Option::unwrap).collect();
    Ok(TraitTable {
        response: header[1].to_string(),
        covariates: header.iter().skip(2).map(str::to_string).collect(),
        y: DVector::from_iterator(n, rows.iter().map(|r| r[0])),
        x: DMatrix::from_fn(n, p - 1, |i, j| rows[i][j + 1]),
    })
}
