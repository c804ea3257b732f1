//! Answer records and their aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use vqlens::StudyCondition;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub session_id: String,
    pub trial_id: u64,
    pub image_id: String,
    pub condition: StudyCondition,
    pub true_class: String,
    pub answered_class: String,
    /// UTC seconds.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: StudyCondition,
    pub trials: usize,
    pub correct: usize,
    /// Mean over classes of per-class accuracy.
    pub rate: f64,
    pub per_class: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResults {
    pub total_trials: usize,
    pub sessions: usize,
    /// Only conditions with at least one answer, coarsest quantization first.
    pub conditions: Vec<ConditionResult>,
}

/// Folds a log into per-condition rates. Depends on nothing but `records`.
pub fn aggregate_results(records: &[TrialRecord]) -> StudyResults {
    // condition -> class -> (correct, total)
    let mut tally: BTreeMap<StudyCondition, BTreeMap<&str, (usize, usize)>> = BTreeMap::new();
    let mut sessions: Vec<&str> = Vec::new();
    for r in records {
        let e = tally.entry(r.condition).or_default().entry(&r.true_class).or_default();
        e.1 += 1;
        if r.answered_class == r.true_class {
            e.0 += 1;
        }
        sessions.push(&r.session_id);
    }
    sessions.sort_unstable();
    sessions.dedup();
    let conditions = StudyCondition::all()
        .into_iter()
        .filter_map(|c| {
            let per = tally.get(&c)?;
            let per_class: BTreeMap<String, f64> = per
                .iter()
                .map(|(k, (ok, n))| (k.to_string(), *ok as f64 / *n as f64))
                .collect();
            Some(ConditionResult {
                condition: c,
                trials: per.values().map(|v| v.1).sum(),
                correct: per.values().map(|v| v.0).sum(),
                rate: per_class.values().sum::<f64>() / per_class.len() as f64,
                per_class,
            })
        })
        .collect();
    StudyResults {
        total_trials: records.len(),
        sessions: sessions.len(),
        conditions,
    }
}

/// `σ² = (1/C²) Σ_c p(1 − p) / n_c` for a rate built from per-class
/// accuracies with true accuracy `p` and `n_c` trials in class `c`.
pub fn rate_std_error(p: f64, class_counts: &[usize]) -> f64 {
    let c = class_counts.len() as f64;
    (class_counts.iter().map(|&n| p * (1.0 - p) / n as f64).sum::<f64>() / (c * c)).sqrt()
}
