use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    /// In [0, 1]; 0/0 is taken as 0.
    pub f1: f64,
    pub support: usize,
}

/// Named scalar metrics, per-class breakdown and the digest of the run that produced them.
///
/// `BTreeMap`s keep key order stable so serialized reports diff cleanly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: BTreeMap<String, f64>,
    pub per_class: BTreeMap<String, ClassScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MetricReport {
    /// Macro-F1 on the 0–100 scale.
    pub fn macro_f1(&self) -> f64 {
        self.metrics.get("macro_f1").copied().unwrap_or(0.0)
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        for (name, value) in &self.metrics {
            out.push_str(&format!("{name:<16} {value:>10.4}\n"));
        }
        if !self.per_class.is_empty() {
            out.push_str(&format!(
                "{:<16} {:>10} {:>10} {:>10} {:>8}\n",
                "class", "precision", "recall", "f1", "support"
            ));
            for (class, s) in &self.per_class {
                out.push_str(&format!(
                    "{class:<16} {:>10.4} {:>10.4} {:>10.4} {:>8}\n",
                    s.precision, s.recall, s.f1, s.support
                ));
            }
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class and macro-averaged F1 over `(gold, predicted)` pairs.
///
/// Every class in `classes` contributes to the average, even if it never occurs in gold.
/// Predictions outside `classes` (e.g. unparseable answers) are simply wrong: they add a
/// false negative to the gold class and a false positive to nothing.
pub fn macro_f1<G, P>(pairs: &[(G, P)], classes: &[&str]) -> Result<MetricReport>
where
    G: AsRef<str>,
    P: AsRef<str>,
{
    if pairs.is_empty() {
        return Err(Error::invalid("macro-F1 over an empty prediction set"));
    }
    if classes.is_empty() {
        return Err(Error::invalid("macro-F1 needs at least one class"));
    }
    let mut report = MetricReport::default();
    let mut correct = 0usize;
    for (g, p) in pairs {
        if !classes.contains(&g.as_ref()) {
            return Err(Error::invalid(format!(
                "gold label '{}' is not one of {classes:?}",
                g.as_ref()
            )));
        }
        if g.as_ref() == p.as_ref() {
            correct += 1;
        }
    }

    let mut sum = 0.0;
    for &class in classes {
        let tp = pairs.iter().filter(|(g, p)| g.as_ref() == class && p.as_ref() == class).count();
        let gold = pairs.iter().filter(|(g, _)| g.as_ref() == class).count();
        let predicted = pairs.iter().filter(|(_, p)| p.as_ref() == class).count();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        if gold == 0 {
            report
                .warnings
                .push(format!("class '{class}' has no gold instances; its F1 counts as 0"));
        }
        sum += f1;
        report.per_class.insert(
            class.to_string(),
            ClassScores {
                precision,
                recall,
                f1,
                support: gold,
            },
        );
    }
    report.metrics.insert("macro_f1".into(), 100.0 * sum / classes.len() as f64);
    report.metrics.insert("accuracy".into(), 100.0 * ratio(correct, pairs.len()));
    report.metrics.insert("n".into(), pairs.len() as f64);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_two_class() {
        let pairs = [("toxic", "toxic"), ("normal", "normal")];
        let r = macro_f1(&pairs, &["toxic", "normal"]).unwrap();
        assert_eq!(r.macro_f1(), 100.0);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn hand_confusion() {
        // A: tp 1, fp 0, fn 1 -> P 1, R 1/2, F1 2/3.  B: tp 2, fp 1, fn 0 -> P 2/3, R 1, F1 0.8.
        let pairs = [("A", "A"), ("A", "B"), ("B", "B"), ("B", "B")];
        let r = macro_f1(&pairs, &["A", "B"]).unwrap();
        assert!((r.per_class["A"].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_class["B"].f1 - 0.8).abs() < 1e-12);
        assert!((r.macro_f1() - 73.333_333_333).abs() < 1e-6);
    }

    #[test]
    fn absent_class_scores_zero_with_warning() {
        let r = macro_f1(&[("A", "A"), ("A", "A")], &["A", "B"]).unwrap();
        assert_eq!(r.per_class["A"].f1, 1.0);
        assert_eq!(r.per_class["B"].f1, 0.0);
        assert_eq!(r.macro_f1(), 50.0);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(macro_f1::<&str, &str>(&[], &["A"]).is_err());
    }

    #[test]
    fn unparsed_prediction_counts_as_wrong() {
        let r = macro_f1(&[("A", "A"), ("B", "<unparsed>")], &["A", "B"]).unwrap();
        assert_eq!(r.per_class["A"].f1, 1.0);
        assert_eq!(r.per_class["B"].f1, 0.0);
    }

    proptest! {
        #[test]
        fn relabeling_permutation_invariant(
            pairs in prop::collection::vec((0usize..3, 0usize..3), 1..60),
            perm in Just([0usize, 1, 2]).prop_shuffle(),
        ) {
            let names = ["x", "y", "z"];
            let a: Vec<(&str, &str)> = pairs.iter().map(|&(g, p)| (names[g], names[p])).collect();
            let b: Vec<(&str, &str)> =
                pairs.iter().map(|&(g, p)| (names[perm[g]], names[perm[p]])).collect();
            let ra = macro_f1(&a, &names).unwrap();
            let rb = macro_f1(&b, &names).unwrap();
            prop_assert!((ra.macro_f1() - rb.macro_f1()).abs() < 1e-9);
        }

        #[test]
        fn macro_is_mean_of_class_f1(pairs in prop::collection::vec((0usize..2, 0usize..2), 1..40)) {
            let names = ["p", "q"];
            let v: Vec<(&str, &str)> = pairs.iter().map(|&(g, p)| (names[g], names[p])).collect();
            let r = macro_f1(&v, &names).unwrap();
            let mean = r.per_class.values().map(|c| c.f1).sum::<f64>() / 2.0 * 100.0;
            prop_assert!((r.macro_f1() - mean).abs() < 1e-9);
            prop_assert!((0.0..=100.0).contains(&r.macro_f1()));
        }
    }
}
