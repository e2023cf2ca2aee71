use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Stage, UNDECIDED};

/// Final label from exactly three annotator labels: any label with two or more votes wins;
/// a three-way stage II split is `undecided`.
pub fn majority_vote<S: AsRef<str>>(stage: Stage, labels: &[S]) -> Result<String> {
    if labels.len() != 3 {
        return Err(Error::invalid(format!(
            "majority vote needs exactly 3 labels, got {}",
            labels.len()
        )));
    }
    let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        let l = l.as_ref();
        if !stage.is_assignable(l) {
            return Err(Error::invalid(format!("'{l}' is not an assignable stage {stage} label")));
        }
        *votes.entry(l).or_default() += 1;
    }
    Ok(votes
        .into_iter()
        .find(|&(_, n)| n >= 2)
        .map(|(l, _)| l.to_string())
        .unwrap_or_else(|| UNDECIDED.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kappa: f64,
    pub n_items: usize,
    pub n_raters: u32,
    pub categories: Vec<String>,
    /// Share of all ratings falling in each category (same order as `categories`).
    pub marginals: Vec<f64>,
    pub observed: f64,
    pub expected: f64,
}

/// Fleiss' kappa over an items × categories count matrix with a constant number of raters.
pub fn fleiss_kappa(matrix: &[Vec<u32>], categories: &[String]) -> Result<AgreementReport> {
    let first = matrix
        .first()
        .ok_or_else(|| Error::invalid("agreement over zero items"))?;
    let k = first.len();
    if k == 0 {
        return Err(Error::invalid("agreement needs at least one category"));
    }
    if !categories.is_empty() && categories.len() != k {
        return Err(Error::invalid(format!(
            "{} category names for {k} matrix columns",
            categories.len()
        )));
    }
    let n: u32 = first.iter().sum();
    if n < 2 {
        return Err(Error::invalid("agreement needs at least two raters per item"));
    }
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != k {
            return Err(Error::invalid(format!("item {i} has {} columns, expected {k}", row.len())));
        }
        let s: u32 = row.iter().sum();
        if s != n {
            return Err(Error::invalid(format!("item {i} has {s} ratings, expected {n}")));
        }
    }

    let items = matrix.len() as f64;
    let nf = f64::from(n);
    let observed = matrix
        .iter()
        .map(|row| {
            let agree: f64 = row.iter().map(|&c| f64::from(c) * (f64::from(c) - 1.0)).sum();
            agree / (nf * (nf - 1.0))
        })
        .sum::<f64>()
        / items;
    let marginals: Vec<f64> = (0..k)
        .map(|j| matrix.iter().map(|row| f64::from(row[j])).sum::<f64>() / (items * nf))
        .collect();
    let expected: f64 = marginals.iter().map(|p| p * p).sum();

    let kappa = if (1.0 - expected).abs() < 1e-12 {
        if (observed - 1.0).abs() < 1e-12 {
            1.0
        } else {
            return Err(Error::invalid("kappa undefined: expected agreement is 1"));
        }
    } else {
        (observed - expected) / (1.0 - expected)
    };

    let categories = if categories.is_empty() {
        (0..k).map(|j| j.to_string()).collect()
    } else {
        categories.to_vec()
    };
    Ok(AgreementReport {
        kappa,
        n_items: matrix.len(),
        n_raters: n,
        categories,
        marginals,
        observed,
        expected,
    })
}

/// Build the count matrix from per-item label lists and compute kappa.
pub fn agreement_from_labels<S: AsRef<str>>(
    items: &[Vec<S>],
    categories: &[&str],
) -> Result<AgreementReport> {
    let matrix = items
        .iter()
        .map(|labels| {
            let mut row = vec![0u32; categories.len()];
            for l in labels {
                let j = categories
                    .iter()
                    .position(|c| *c == l.as_ref())
                    .ok_or_else(|| Error::invalid(format!("label '{}' not in {categories:?}", l.as_ref())))?;
                row[j] += 1;
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = categories.iter().map(|c| c.to_string()).collect();
    fleiss_kappa(&matrix, &names)
}
