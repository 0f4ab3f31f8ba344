//! ROC-AUC via the Mann–Whitney statistic and per-pair-type reports.

use std::collections::BTreeMap;
use std::fmt;

use crate::dataset::PairType;
use crate::error::{Error, Result};

/// Probability that a random positive outranks a random negative, ties
/// counted half. Runs in `O(n log n)` via midranks.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 {
        return Err(Error::UndefinedAuc("no positive labels"));
    }
    if n_neg == 0 {
        return Err(Error::UndefinedAuc("no negative labels"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("auc scores".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of positive ranks, doubled so midranks stay integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share midrank (i + j + 2) / 2
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        twice_rank_sum += pos_in_group * (i + j + 2) as u128;
        i = j + 1;
    }
    let (p, q) = (n_pos as u128, n_neg as u128);
    // U = R⁺ − p(p+1)/2, doubled
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * q) as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub positives: usize,
    pub negatives: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.positives + self.negatives
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall_auc: f64,
    /// `None` when the type lacks one of the classes.
    pub per_type_auc: BTreeMap<PairType, Option<f64>>,
    pub counts: BTreeMap<PairType, ClassCounts>,
}

/// Overall AUC plus one AUC per pair type present in `types`.
pub fn evaluate(scores: &[f64], labels: &[u8], types: &[PairType]) -> Result<EvalReport> {
    if types.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: types.len(),
        });
    }
    let overall_auc = auc(scores, labels)?;
    let mut counts: BTreeMap<PairType, ClassCounts> = BTreeMap::new();
    for (&t, &y) in types.iter().zip(labels) {
        let c = counts.entry(t).or_default();
        if y == 1 {
            c.positives += 1;
        } else {
            c.negatives += 1;
        }
    }
    let mut per_type_auc = BTreeMap::new();
    for &t in counts.keys() {
        let (s, l): (Vec<f64>, Vec<u8>) = scores
            .iter()
            .zip(labels)
            .zip(types)
            .filter(|(_, &pt)| pt == t)
            .map(|((&s, &y), _)| (s, y))
            .unzip();
        per_type_auc.insert(t, auc(&s, &l).ok());
    }
    Ok(EvalReport {
        overall_auc,
        per_type_auc,
        counts,
    })
}

impl EvalReport {
    pub fn auc_for(&self, t: PairType) -> Option<f64> {
        self.per_type_auc.get(&t).copied().flatten()
    }

    pub fn total(&self) -> usize {
        self.counts.values().map(ClassCounts::total).sum()
    }
}

/// `key: value` lines.
impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "overall_auc: {:.6}", self.overall_auc)?;
        writeln!(f, "pairs: {}", self.total())?;
        for (t, c) in &self.counts {
            let t = t.index();
            match self.per_type_auc.get(&PairType::from_index(t).expect("valid type")) {
                Some(Some(a)) => writeln!(f, "type{t}_auc: {a:.6}")?,
                _ => writeln!(f, "type{t}_auc: undefined")?,
            }
            writeln!(f, "type{t}_positives: {}", c.positives)?;
            writeln!(f, "type{t}_negatives: {}", c.negatives)?;
        }
        Ok(())
    }
}
