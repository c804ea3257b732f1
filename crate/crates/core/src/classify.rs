//! One-vs-rest linear SVMs (L2-regularized hinge loss) trained by dual
//! coordinate descent, with cost selection by stratified cross-validation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Stop when the projected-gradient spread of an epoch falls below this.
    pub tolerance: f64,
    pub max_epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_epochs: 1000,
        }
    }
}

/// Dense row-major training matrix.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::Argument("no feature vectors".into()))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::Shape(format!("feature of length {} vs {dim}", r.len())));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data("non-finite feature value".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn select(&self, ids: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &i in ids {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix { dim: self.dim, data }
    }
}

/// Binary SVM: returns `[w; b]` with the bias treated as a constant feature.
fn train_binary(x: &FeatureMatrix, y: &[f64], cost: f64, params: &SvmParams) -> Vec<f64> {
    let n = x.len();
    let d = x.dim();
    let mut w = vec![0.0; d + 1];
    let mut alpha = vec![0.0; n];
    let q: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>() + 1.0)
        .collect();
    for _ in 0..params.max_epochs {
        let mut max_pg = f64::NEG_INFINITY;
        let mut min_pg = f64::INFINITY;
        for i in 0..n {
            let xi = x.row(i);
            let g = y[i] * (dot(&w[..d], xi) + w[d]) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == cost {
                g.max(0.0)
            } else {
                g
            };
            max_pg = max_pg.max(pg);
            min_pg = min_pg.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, cost);
                let step = (alpha[i] - old) * y[i];
                if step != 0.0 {
                    for (wj, xj) in w[..d].iter_mut().zip(xi) {
                        *wj += step * xj;
                    }
                    w[d] += step;
                }
            }
        }
        if max_pg - min_pg <= params.tolerance {
            break;
        }
    }
    w
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierModel {
    /// Sorted class names; index `c` owns `class_weights[c]`.
    pub class_labels: Vec<String>,
    /// Per class `[w; b]`.
    pub class_weights: Vec<Vec<f64>>,
    pub regularization: f64,
}

impl ClassifierModel {
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.class_weights[0].len() - 1;
        if x.len() != d {
            return Err(Error::Shape(format!("feature of length {} vs model dimension {d}", x.len())));
        }
        Ok(self
            .class_weights
            .iter()
            .map(|w| dot(&w[..d], x) + w[d])
            .collect())
    }

    /// Highest-scoring class; ties go to the lexicographically smallest name.
    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        let scores = self.scores(x)?;
        let mut best = 0;
        for (c, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = c;
            }
        }
        Ok(&self.class_labels[best])
    }
}

fn class_index(labels: &[String]) -> Result<(Vec<String>, Vec<usize>)> {
    let classes: Vec<String> = labels
        .iter()
        .cloned()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(Error::Argument(format!(
            "classification needs at least two classes, got {}",
            classes.len()
        )));
    }
    let idx = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label comes from the class set"))
        .collect();
    Ok((classes, idx))
}

/// Trains one-vs-rest models with a fixed cost.
pub fn train_one_vs_rest(x: &FeatureMatrix, labels: &[String], cost: f64, params: &SvmParams) -> Result<ClassifierModel> {
    if x.len() != labels.len() {
        return Err(Error::Shape(format!("{} features vs {} labels", x.len(), labels.len())));
    }
    if !(cost > 0.0) {
        return Err(Error::Config(format!("cost must be positive, got {cost}")));
    }
    let (classes, idx) = class_index(labels)?;
    let class_weights = (0..classes.len())
        .map(|c| {
            let y: Vec<f64> = idx.iter().map(|&i| if i == c { 1.0 } else { -1.0 }).collect();
            train_binary(x, &y, cost, params)
        })
        .collect();
    Ok(ClassifierModel {
        class_labels: classes,
        class_weights,
        regularization: cost,
    })
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[String], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l.as_str()).or_default().push(i);
    }
    let mut fold_of = vec![0; labels.len()];
    let mut offset = 0;
    for ids in by_class.values_mut() {
        ids.shuffle(&mut rng);
        for (pos, &i) in ids.iter().enumerate() {
            fold_of[i] = (pos + offset) % folds;
        }
        offset += ids.len();
    }
    fold_of
}

/// Mean accuracy over stratified folds.
pub fn cross_validate(
    x: &FeatureMatrix,
    labels: &[String],
    cost: f64,
    folds: usize,
    seed: u64,
    params: &SvmParams,
) -> Result<f64> {
    if folds < 2 {
        return Err(Error::Config("cross-validation needs at least 2 folds".into()));
    }
    let fold_of = stratified_folds(labels, folds, seed);
    let mut total = 0.0;
    let mut used = 0;
    for f in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| fold_of[i] == f);
        if test.is_empty() {
            continue;
        }
        let train_labels: Vec<String> = train.iter().map(|&i| labels[i].clone()).collect();
        let model = train_one_vs_rest(&x.select(&train), &train_labels, cost, params)?;
        let mut correct = 0;
        for &i in &test {
            if model.predict(x.row(i))? == labels[i] {
                correct += 1;
            }
        }
        total += correct as f64 / test.len() as f64;
        used += 1;
    }
    Ok(total / used as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostSelection {
    pub cost: f64,
    /// `(cost, mean CV accuracy)` for every grid value.
    pub cv_accuracy: Vec<(f64, f64)>,
}

/// Picks the cost with the best mean CV accuracy (first wins ties), then
/// retrains on everything.
pub fn train_with_cv(
    x: &FeatureMatrix,
    labels: &[String],
    cost_grid: &[f64],
    folds: usize,
    seed: u64,
    params: &SvmParams,
) -> Result<(ClassifierModel, CostSelection)> {
    if cost_grid.is_empty() {
        return Err(Error::Config("empty cost grid".into()));
    }
    let (classes, idx) = class_index(labels)?;
    for (c, name) in classes.iter().enumerate() {
        let n = idx.iter().filter(|&&i| i == c).count();
        if n < folds {
            return Err(Error::Argument(format!(
                "class '{name}' has {n} examples, fewer than {folds} folds"
            )));
        }
    }
    let mut scores = Vec::with_capacity(cost_grid.len());
    for &c in cost_grid {
        scores.push((c, cross_validate(x, labels, c, folds, seed, params)?));
    }
    let best = scores.iter().fold(scores[0], |b, s| if s.1 > b.1 { *s } else { b }).0;
    let model = train_one_vs_rest(x, labels, best, params)?;
    Ok((
        model,
        CostSelection {
            cost: best,
            cv_accuracy: scores,
        },
    ))
}

/// Mean over classes of per-class accuracy.
pub fn balanced_accuracy(truth: &[String], predicted: &[String]) -> Result<f64> {
    if truth.is_empty() || truth.len() != predicted.len() {
        return Err(Error::Argument("balanced accuracy needs equal, nonempty label lists".into()));
    }
    let mut per: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (t, p) in truth.iter().zip(predicted) {
        let e = per.entry(t.as_str()).or_default();
        e.1 += 1;
        if t == p {
            e.0 += 1;
        }
    }
    Ok(per.values().map(|(c, n)| *c as f64 / *n as f64).sum::<f64>() / per.len() as f64)
}

/// Per-class accuracy keyed by class name.
pub fn per_class_accuracy(truth: &[String], predicted: &[String]) -> BTreeMap<String, f64> {
    let mut per: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (t, p) in truth.iter().zip(predicted) {
        let e = per.entry(t.clone()).or_default();
        e.1 += 1;
        if t == p {
            e.0 += 1;
        }
    }
    per.into_iter().map(|(k, (c, n))| (k, c as f64 / n as f64)).collect()
}

/// Average recognition rate of `model` on a labeled test set.
pub fn evaluate(model: &ClassifierModel, x: &FeatureMatrix, labels: &[String]) -> Result<f64> {
    if x.is_empty() || x.len() != labels.len() {
        return Err(Error::Argument("evaluation needs a nonempty, labeled test set".into()));
    }
    if let Some(l) = labels.iter().find(|l| model.class_labels.binary_search(l).is_err()) {
        return Err(Error::Data(format!("test label '{l}' is unknown to the model")));
    }
    let predicted = (0..x.len())
        .map(|i| model.predict(x.row(i)).map(str::to_owned))
        .collect::<Result<Vec<_>>>()?;
    balanced_accuracy(labels, &predicted)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn constant_prediction_on_balanced_set() {
        let truth: Vec<String> = (0..15).flat_map(|c| vec![format!("c{c:02}"); 4]).collect();
        let pred = vec!["c00".to_string(); truth.len()];
        assert!((balanced_accuracy(&truth, &pred).unwrap() - 1.0 / 15.0).abs() < 1e-12);
        assert_eq!(balanced_accuracy(&truth, &truth).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_confusion() {
        // a: 3/4 correct, b: 1/3, c: 2/3
        let truth = s(&["a", "a", "a", "a", "b", "b", "b", "c", "c", "c"]);
        let pred = s(&["a", "a", "a", "b", "b", "a", "c", "c", "c", "a"]);
        let expect = (0.75 + 1.0 / 3.0 + 2.0 / 3.0) / 3.0;
        assert!((balanced_accuracy(&truth, &pred).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn separable_clouds_fit_perfectly() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let t = i as f64 / 20.0;
            rows.push(vec![1.0 + t, 0.2 * t]);
            labels.push("pos".to_string());
            rows.push(vec![-1.0 - t, 0.1 - 0.3 * t]);
            labels.push("neg".to_string());
        }
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let m = train_one_vs_rest(&x, &labels, 10.0, &SvmParams::default()).unwrap();
        assert_eq!(evaluate(&m, &x, &labels).unwrap(), 1.0);
    }

    #[test]
    fn ties_pick_smallest_name() {
        let m = ClassifierModel {
            class_labels: s(&["alpha", "beta"]),
            class_weights: vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            regularization: 1.0,
        };
        assert_eq!(m.predict(&[3.0]).unwrap(), "alpha");
    }

    #[test]
    fn degenerate_inputs() {
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(
            train_one_vs_rest(&x, &s(&["a", "a"]), 1.0, &SvmParams::default()),
            Err(Error::Argument(_))
        ));
        let m = train_one_vs_rest(&x, &s(&["a", "b"]), 1.0, &SvmParams::default()).unwrap();
        assert!(matches!(evaluate(&m, &x, &s(&["a", "zzz"])), Err(Error::Data(_))));
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<String> = (0..30).map(|i| ["a", "b", "c"][i % 3].to_string()).collect();
        let f = stratified_folds(&labels, 10, 4);
        for fold in 0..10 {
            for c in ["a", "b", "c"] {
                let n = (0..30).filter(|&i| f[i] == fold && labels[i] == c).count();
                assert_eq!(n, 1);
            }
        }
    }
}
