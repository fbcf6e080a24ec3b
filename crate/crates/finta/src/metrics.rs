//! Evaluation measures: confusion-based classification scores (macro and
//! support-weighted), the valid group count rate and the success rate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }
}

/// Tally predictions against truth.
pub fn confusion(pred: &[bool], truth: &[bool]) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} truth labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut c = ConfusionCounts {
        true_positive: 0,
        false_positive: 0,
        true_negative: 0,
        false_negative: 0,
    };
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.true_positive += 1,
            (true, false) => c.false_positive += 1,
            (false, false) => c.true_negative += 1,
            (false, true) => c.false_negative += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    /// Unweighted mean over the two classes, each treated as positive in
    /// turn.
    Macro,
    /// Mean weighted by class support.
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measures {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub precision: f64,
    pub f1: f64,
    /// Names of measure/class cells whose denominator was zero; those cells
    /// contribute 0 instead of aborting the evaluation.
    pub degenerate_cells: Vec<String>,
}

/// Per-class cells: treating class `c` as positive yields counts
/// (tp, fp, fn, tn); the other class swaps the roles.
fn per_class(c: &ConfusionCounts) -> [(usize, usize, usize, usize, &'static str); 2] {
    [
        (c.true_positive, c.false_positive, c.false_negative, c.true_negative, "positive"),
        (c.true_negative, c.false_negative, c.false_positive, c.true_positive, "negative"),
    ]
}

pub fn classification_measures(c: &ConfusionCounts, averaging: Averaging) -> Measures {
    let n = c.total() as f64;
    let mut degenerate = Vec::new();
    let mut acc = [0.0f64; 2];
    let mut sens = [0.0f64; 2];
    let mut prec = [0.0f64; 2];
    let mut f1 = [0.0f64; 2];
    let mut support = [0.0f64; 2];

    for (i, (tp, fp, fn_, tn, name)) in per_class(c).into_iter().enumerate() {
        support[i] = (tp + fn_) as f64;
        acc[i] = if n > 0.0 { (tp + tn) as f64 / n } else { 0.0 };
        sens[i] = if tp + fn_ > 0 {
            tp as f64 / (tp + fn_) as f64
        } else {
            degenerate.push(format!("sensitivity/{name}"));
            0.0
        };
        prec[i] = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            degenerate.push(format!("precision/{name}"));
            0.0
        };
        f1[i] = if prec[i] + sens[i] > 0.0 {
            2.0 * prec[i] * sens[i] / (prec[i] + sens[i])
        } else {
            degenerate.push(format!("f1/{name}"));
            0.0
        };
    }

    let combine = |values: [f64; 2]| match averaging {
        Averaging::Macro => (values[0] + values[1]) / 2.0,
        Averaging::Weighted => {
            let total = support[0] + support[1];
            if total > 0.0 {
                (values[0] * support[0] + values[1] * support[1]) / total
            } else {
                0.0
            }
        }
    };
    Measures {
        accuracy: combine(acc),
        sensitivity: combine(sens),
        precision: combine(prec),
        f1: combine(f1),
        degenerate_cells: degenerate,
    }
}

/// Fraction of non-empty truth groups retaining at least one
/// predicted-positive member.
pub fn vgw_rate(pred_positive: &[bool], truth_groups: &[Option<String>]) -> Result<f64> {
    if pred_positive.len() != truth_groups.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} group tags",
            pred_positive.len(),
            truth_groups.len()
        )));
    }
    let mut groups: BTreeMap<&str, bool> = BTreeMap::new();
    for (&p, g) in pred_positive.iter().zip(truth_groups) {
        if let Some(g) = g {
            let preserved = groups.entry(g.as_str()).or_insert(false);
            *preserved |= p;
        }
    }
    if groups.is_empty() {
        return Err(Error::DegenerateGroups("no non-empty truth groups".into()));
    }
    let preserved = groups.values().filter(|&&v| v).count();
    Ok(preserved as f64 / groups.len() as f64)
}

/// Unweighted mean of the four classification measures and the group count
/// rate.
pub fn success_rate(m: &Measures, vgw: f64) -> f64 {
    (m.accuracy + m.sensitivity + m.precision + m.f1 + vgw) / 5.0
}

/// Sensitivity restricted to each group's truth positives. Groups with no
/// truth positives are omitted.
pub fn per_group_sensitivity(
    pred: &[bool],
    truth: &[bool],
    groups: &[Option<String>],
) -> BTreeMap<String, f64> {
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for ((&p, &t), g) in pred.iter().zip(truth).zip(groups) {
        if t {
            if let Some(g) = g {
                let entry = tally.entry(g.as_str()).or_insert((0, 0));
                entry.1 += 1;
                if p {
                    entry.0 += 1;
                }
            }
        }
    }
    tally
        .into_iter()
        .map(|(g, (tp, total))| (g.to_string(), tp as f64 / total as f64))
        .collect()
}

/// Full evaluation of binary decisions against truth labels and groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionCounts,
    pub macro_measures: Measures,
    pub weighted_measures: Measures,
    pub vgw_rate: f64,
    pub success_rate: f64,
    pub success_rate_weighted: f64,
    pub per_group_sensitivity: BTreeMap<String, f64>,
}

pub fn evaluate(
    pred: &[bool],
    truth: &[bool],
    truth_groups: &[Option<String>],
) -> Result<EvalReport> {
    let c = confusion(pred, truth)?;
    let macro_measures = classification_measures(&c, Averaging::Macro);
    let weighted_measures = classification_measures(&c, Averaging::Weighted);
    let vgw = vgw_rate(pred, truth_groups)?;
    let sr = success_rate(&macro_measures, vgw);
    let srw = success_rate(&weighted_measures, vgw);
    Ok(EvalReport {
        confusion: c,
        macro_measures,
        weighted_measures,
        vgw_rate: vgw,
        success_rate: sr,
        success_rate_weighted: srw,
        per_group_sensitivity: per_group_sensitivity(pred, truth, truth_groups),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_basics() {
        let pred = [true, true, false, false];
        let truth = [true, false, false, true];
        let c = confusion(&pred, &truth).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                true_positive: 1,
                false_positive: 1,
                true_negative: 1,
                false_negative: 1
            }
        );
        // all-positive predictions over 3 pos / 7 neg
        let pred: Vec<bool> = vec![true; 10];
        let truth: Vec<bool> = (0..10).map(|i| i < 3).collect();
        let c = confusion(&pred, &truth).unwrap();
        assert_eq!(c.true_positive, 3);
        assert_eq!(c.false_positive, 7);
        assert_eq!(c.true_negative, 0);
        assert_eq!(c.false_negative, 0);
    }

    #[test]
    fn confusion_matches_recount_oracle() {
        let mut state = 77u64;
        let mut next_bool = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 62) & 1 == 1
        };
        let pred: Vec<bool> = (0..500).map(|_| next_bool()).collect();
        let truth: Vec<bool> = (0..500).map(|_| next_bool()).collect();
        let c = confusion(&pred, &truth).unwrap();
        let mut tally = [0usize; 4];
        for i in 0..500 {
            let idx = (pred[i] as usize) * 2 + truth[i] as usize;
            tally[idx] += 1;
        }
        assert_eq!(c.true_negative, tally[0]);
        assert_eq!(c.false_negative, tally[1]);
        assert_eq!(c.false_positive, tally[2]);
        assert_eq!(c.true_positive, tally[3]);
        assert_eq!(c.total(), 500);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let c = ConfusionCounts {
            true_positive: 10,
            false_positive: 0,
            true_negative: 10,
            false_negative: 0,
        };
        for avg in [Averaging::Macro, Averaging::Weighted] {
            let m = classification_measures(&c, avg);
            assert_eq!(m.accuracy, 1.0);
            assert_eq!(m.sensitivity, 1.0);
            assert_eq!(m.precision, 1.0);
            assert_eq!(m.f1, 1.0);
            assert!(m.degenerate_cells.is_empty());
        }
    }

    #[test]
    fn degenerate_single_class_flags_and_contributes_zero() {
        let c = ConfusionCounts {
            true_positive: 99,
            false_positive: 1,
            true_negative: 0,
            false_negative: 0,
        };
        let m = classification_measures(&c, Averaging::Macro);
        assert!(m.degenerate_cells.iter().any(|d| d == "precision/negative"));
        // negative-class precision contributes 0: macro precision is
        // (99/100 + 0) / 2
        assert!((m.precision - 0.495).abs() < 1e-12);
    }

    #[test]
    fn macro_equals_weighted_when_balanced() {
        let c = ConfusionCounts {
            true_positive: 40,
            false_positive: 10,
            true_negative: 40,
            false_negative: 10,
        };
        let m = classification_measures(&c, Averaging::Macro);
        let w = classification_measures(&c, Averaging::Weighted);
        assert!((m.accuracy - w.accuracy).abs() < 1e-12);
        assert!((m.sensitivity - w.sensitivity).abs() < 1e-12);
        assert!((m.precision - w.precision).abs() < 1e-12);
        assert!((m.f1 - w.f1).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_twenty_item_fixture() {
        // 12 truth positives, 8 truth negatives; predictions hit 10 of the
        // positives and wrongly keep 2 of the negatives.
        let truth: Vec<bool> = (0..20).map(|i| i < 12).collect();
        let pred: Vec<bool> = (0..20).map(|i| i < 10 || (12..14).contains(&i)).collect();
        let c = confusion(&pred, &truth).unwrap();
        assert_eq!((c.true_positive, c.false_positive), (10, 2));
        assert_eq!((c.true_negative, c.false_negative), (6, 2));
        let m = classification_measures(&c, Averaging::Macro);
        // positive class: sens 10/12, prec 10/12, f1 10/12
        // negative class: sens 6/8, prec 6/8, f1 6/8
        let pos = 10.0 / 12.0;
        let neg = 6.0 / 8.0;
        assert!((m.accuracy - 16.0 / 20.0).abs() < 1e-12);
        assert!((m.sensitivity - (pos + neg) / 2.0).abs() < 1e-12);
        assert!((m.precision - (pos + neg) / 2.0).abs() < 1e-12);
        assert!((m.f1 - (pos + neg) / 2.0).abs() < 1e-12);
        let w = classification_measures(&c, Averaging::Weighted);
        assert!((w.sensitivity - (pos * 12.0 + neg * 8.0) / 20.0).abs() < 1e-12);
    }

    #[test]
    fn vgw_counts_preserved_groups() {
        let pred = [true, false, false, true, false];
        let groups: Vec<Option<String>> = ["a", "a", "b", "c", "d"]
            .iter()
            .map(|g| Some(g.to_string()))
            .collect();
        // groups a and c preserved, b and d lost
        assert_eq!(vgw_rate(&pred, &groups).unwrap(), 0.5);
        // 4 of 5 groups preserved
        let pred = [true, true, true, true, false];
        let groups: Vec<Option<String>> = ["a", "b", "c", "d", "e"]
            .iter()
            .map(|g| Some(g.to_string()))
            .collect();
        assert_eq!(vgw_rate(&pred, &groups).unwrap(), 0.8);
        // all preserved
        assert_eq!(vgw_rate(&[true, true], &groups[..2]).unwrap(), 1.0);
        // no groups at all
        assert!(matches!(
            vgw_rate(&[true], &[None]),
            Err(Error::DegenerateGroups(_))
        ));
    }

    #[test]
    fn vgw_monotone_in_predictions() {
        let groups: Vec<Option<String>> =
            ["a", "a", "b", "c", "c", "d"].iter().map(|g| Some(g.to_string())).collect();
        let mut pred = vec![false; 6];
        let mut last = 0.0;
        for i in 0..6 {
            pred[i] = true;
            let r = vgw_rate(&pred, &groups).unwrap();
            assert!(r >= last);
            last = r;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn success_rate_is_plain_mean() {
        let m = Measures {
            accuracy: 0.91,
            sensitivity: 0.91,
            precision: 0.78,
            f1: 0.83,
            degenerate_cells: vec![],
        };
        let sr = success_rate(&m, 0.80);
        assert!((sr - 0.846).abs() < 1e-12);
        // matches the published aggregate to two-decimal rounding
        assert!((sr - 0.84).abs() <= 0.01);
        let ones = Measures {
            accuracy: 1.0,
            sensitivity: 1.0,
            precision: 1.0,
            f1: 1.0,
            degenerate_cells: vec![],
        };
        assert_eq!(success_rate(&ones, 1.0), 1.0);
    }

    #[test]
    fn group_sensitivity_per_group() {
        let truth = [true, true, true, false, true];
        let pred = [true, false, true, true, false];
        let groups: Vec<Option<String>> = vec![
            Some("g1".into()),
            Some("g1".into()),
            Some("g2".into()),
            Some("g2".into()), // truth negative, ignored
            Some("g3".into()),
        ];
        let s = per_group_sensitivity(&pred, &truth, &groups);
        assert_eq!(s["g1"], 0.5);
        assert_eq!(s["g2"], 1.0);
        // single-member group fully missed
        assert_eq!(s["g3"], 0.0);
    }
}
