//! Linear classifiers over topic feature vectors: multinomial logistic
//! regression trained by full-batch gradient descent and a one-vs-rest linear
//! SVM trained by stochastic subgradient descent on the hinge loss. Plus the
//! accuracy and confusion-matrix metrics used to score them.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Initial SVM step size; it decays as 1 / (1 + epoch).
const SVM_STEP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    rows: Vec<(Vec<f64>, usize)>,
    label_set: Vec<String>,
}

impl LabeledFeatures {
    /// Builds a data set whose label set is the sorted set of row labels.
    pub fn new(rows: Vec<(Vec<f64>, String)>) -> Result<Self> {
        let labels: BTreeSet<String> = rows.iter().map(|(_, l)| l.clone()).collect();
        Self::with_label_set(rows, labels.into_iter().collect())
    }

    /// Builds a data set against an explicit, ordered label set.
    pub fn with_label_set(rows: Vec<(Vec<f64>, String)>, label_set: Vec<String>) -> Result<Self> {
        let dim = rows.first().map_or(0, |(x, _)| x.len());
        let rows = rows
            .into_iter()
            .map(|(x, label)| {
                if x.len() != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "feature vector of length {} in a {dim}-dimensional data set",
                        x.len()
                    )));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("non-finite feature value".into()));
                }
                let index = label_set
                    .iter()
                    .position(|l| *l == label)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown label '{label}'")))?;
                Ok((x, index))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows, label_set })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |(x, _)| x.len())
    }

    pub fn label_set(&self) -> &[String] {
        &self.label_set
    }

    /// Rows as `(features, label index)`.
    pub fn rows(&self) -> &[(Vec<f64>, usize)] {
        &self.rows
    }

    fn check_trainable(&self) -> Result<()> {
        let present: BTreeSet<usize> = self.rows.iter().map(|&(_, y)| y).collect();
        if present.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "training needs at least two classes, data has {}",
                present.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassifierKind {
    Svm,
    Logistic,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Svm => "svm",
            ClassifierKind::Logistic => "logistic",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svm" => Ok(ClassifierKind::Svm),
            "logistic" | "log" => Ok(ClassifierKind::Logistic),
            other => Err(Error::InvalidArgument(format!("unknown classifier '{other}'"))),
        }
    }
}

/// Hyperparameters for both classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub learning_rate: f64,
    pub logistic_epochs: usize,
    pub l2: f64,
    pub svm_c: f64,
    pub svm_epochs: usize,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            logistic_epochs: 500,
            l2: 1e-4,
            svm_c: 1.0,
            svm_epochs: 500,
        }
    }
}

/// One weight row per class; the last column of each row is the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub kind: ClassifierKind,
    pub weights: Vec<Vec<f64>>,
    pub label_set: Vec<String>,
}

fn affine(row: &[f64], x: &[f64]) -> f64 {
    let (w, b) = row.split_at(x.len());
    w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[0]
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

// First maximum wins, so ties go to the lowest label index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl LinearClassifier {
    pub fn dim(&self) -> usize {
        self.weights[0].len() - 1
    }

    /// Per-class scores: logits for logistic, margins for the SVM.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "classifier expects {} features, got {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(self.weights.iter().map(|row| affine(row, x)).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        let scores = self.scores(x)?;
        Ok(&self.label_set[argmax(&scores)])
    }

    /// Softmax of the scores. Meaningful as class probabilities for the
    /// logistic model.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.scores(x)?))
    }
}

pub fn predict<'a>(model: &'a LinearClassifier, x: &[f64]) -> Result<&'a str> {
    model.predict(x)
}

/// Mean cross-entropy plus `l2/2·‖w‖²` over non-bias weights.
pub fn logistic_objective(weights: &[Vec<f64>], data: &LabeledFeatures, l2: f64) -> f64 {
    let n = data.len().max(1) as f64;
    let dim = data.dim();
    let ce: f64 = data
        .rows
        .iter()
        .map(|(x, y)| {
            let scores: Vec<f64> = weights.iter().map(|r| affine(r, x)).collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln() + max;
            log_sum - scores[*y]
        })
        .sum();
    let penalty: f64 = weights
        .iter()
        .flat_map(|r| &r[..dim])
        .map(|w| w * w)
        .sum();
    ce / n + 0.5 * l2 * penalty
}

pub fn logistic_gradient(weights: &[Vec<f64>], data: &LabeledFeatures, l2: f64) -> Vec<Vec<f64>> {
    let n = data.len().max(1) as f64;
    let dim = data.dim();
    let mut grad: Vec<Vec<f64>> = weights
        .iter()
        .map(|r| {
            let mut g: Vec<f64> = r[..dim].iter().map(|w| l2 * w).collect();
            g.push(0.0);
            g
        })
        .collect();
    let mut probs = vec![0.0; weights.len()];
    for (x, y) in &data.rows {
        let mut max = f64::NEG_INFINITY;
        for (p, row) in probs.iter_mut().zip(weights) {
            *p = affine(row, x);
            max = max.max(*p);
        }
        let mut sum = 0.0;
        for p in probs.iter_mut() {
            *p = (*p - max).exp();
            sum += *p;
        }
        for (c, (p, g)) in probs.iter().zip(grad.iter_mut()).enumerate() {
            let residual = (p / sum - if c == *y { 1.0 } else { 0.0 }) / n;
            for (gi, xi) in g[..dim].iter_mut().zip(x) {
                *gi += residual * xi;
            }
            g[dim] += residual;
        }
    }
    grad
}

/// Softmax regression by full-batch gradient descent from zero weights. The
/// procedure is deterministic; `seed` is accepted for signature parity with
/// [`train_linear_svm`] and does not influence the result.
pub fn train_logistic(
    data: &LabeledFeatures,
    learning_rate: f64,
    epochs: usize,
    l2: f64,
    _seed: u64,
) -> Result<LinearClassifier> {
    data.check_trainable()?;
    if !learning_rate.is_finite() || !l2.is_finite() {
        return Err(Error::InvalidArgument("non-finite hyperparameter".into()));
    }
    let classes = data.label_set.len();
    let mut weights = vec![vec![0.0; data.dim() + 1]; classes];
    for _ in 0..epochs {
        let grad = logistic_gradient(&weights, data, l2);
        for (row, g) in weights.iter_mut().zip(&grad) {
            for (w, gi) in row.iter_mut().zip(g) {
                *w -= learning_rate * gi;
            }
        }
    }
    if weights.iter().flatten().any(|w| !w.is_finite()) {
        return Err(Error::Numeric("logistic weights diverged".into()));
    }
    Ok(LinearClassifier {
        kind: ClassifierKind::Logistic,
        weights,
        label_set: data.label_set.clone(),
    })
}

fn binary_target(y: usize, positive: usize) -> f64 {
    if y == positive {
        1.0
    } else {
        -1.0
    }
}

/// One-vs-rest primal objective for class `positive`:
/// `‖w‖²/(2N) + (C/N)·Σ max(0, 1 − y·(w·x + b))`, bias unpenalized.
pub fn hinge_objective(row: &[f64], data: &LabeledFeatures, positive: usize, c: f64) -> f64 {
    let n = data.len().max(1) as f64;
    let dim = data.dim();
    let reg: f64 = row[..dim].iter().map(|w| w * w).sum::<f64>() / (2.0 * n);
    let hinge: f64 = data
        .rows
        .iter()
        .map(|(x, y)| (1.0 - binary_target(*y, positive) * affine(row, x)).max(0.0))
        .sum();
    reg + c * hinge / n
}

/// Subgradient of [`hinge_objective`]; exact wherever no margin equals 1.
pub fn hinge_gradient(row: &[f64], data: &LabeledFeatures, positive: usize, c: f64) -> Vec<f64> {
    let n = data.len().max(1) as f64;
    let dim = data.dim();
    let mut grad: Vec<f64> = row[..dim].iter().map(|w| w / n).collect();
    grad.push(0.0);
    for (x, y) in &data.rows {
        let t = binary_target(*y, positive);
        if t * affine(row, x) < 1.0 {
            for (g, xi) in grad[..dim].iter_mut().zip(x) {
                *g -= c * t * xi / n;
            }
            grad[dim] -= c * t / n;
        }
    }
    grad
}

/// One-vs-rest linear SVM. Each binary problem runs stochastic subgradient
/// descent on [`hinge_objective`], one sample per step, with a seeded shuffle
/// every epoch and a step size of `0.1 / (1 + epoch)`.
pub fn train_linear_svm(
    data: &LabeledFeatures,
    c_param: f64,
    epochs: usize,
    seed: u64,
) -> Result<LinearClassifier> {
    data.check_trainable()?;
    if !c_param.is_finite() || c_param < 0.0 {
        return Err(Error::InvalidArgument(format!("SVM C must be ≥ 0, got {c_param}")));
    }
    let dim = data.dim();
    let n = data.len() as f64;
    let mut weights = Vec::with_capacity(data.label_set.len());
    for positive in 0..data.label_set.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(positive as u64);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut row = vec![0.0; dim + 1];
        for epoch in 0..epochs {
            order.shuffle(&mut rng);
            let step = SVM_STEP / (1.0 + epoch as f64);
            for &i in &order {
                let (x, y) = &data.rows[i];
                let t = binary_target(*y, positive);
                let violated = t * affine(&row, x) < 1.0;
                for j in 0..dim {
                    let mut g = row[j] / n;
                    if violated {
                        g -= c_param * t * x[j];
                    }
                    row[j] -= step * g;
                }
                if violated {
                    row[dim] += step * c_param * t;
                }
            }
        }
        weights.push(row);
    }
    if weights.iter().flatten().any(|w| !w.is_finite()) {
        return Err(Error::Numeric("SVM weights diverged".into()));
    }
    Ok(LinearClassifier {
        kind: ClassifierKind::Svm,
        weights,
        label_set: data.label_set.clone(),
    })
}

pub fn train_classifier(
    kind: ClassifierKind,
    data: &LabeledFeatures,
    params: &ClassifierParams,
    seed: u64,
) -> Result<LinearClassifier> {
    match kind {
        ClassifierKind::Logistic => {
            train_logistic(data, params.learning_rate, params.logistic_epochs, params.l2, seed)
        }
        ClassifierKind::Svm => train_linear_svm(data, params.svm_c, params.svm_epochs, seed),
    }
}

fn check_lengths(predictions: usize, gold: usize) -> Result<()> {
    if predictions != gold {
        return Err(Error::DimensionMismatch(format!(
            "{predictions} predictions for {gold} gold labels"
        )));
    }
    if gold == 0 {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    Ok(())
}

/// Percentage of positions where prediction and gold agree.
pub fn accuracy<P: AsRef<str>, G: AsRef<str>>(predictions: &[P], gold: &[G]) -> Result<f64> {
    check_lengths(predictions.len(), gold.len())?;
    let hits = predictions
        .iter()
        .zip(gold)
        .filter(|(p, g)| p.as_ref() == g.as_ref())
        .count();
    Ok(100.0 * hits as f64 / gold.len() as f64)
}

/// Rounds a percentage to the nearest integer, halves rounding up.
pub fn round_percent(value: f64) -> i64 {
    (value + 0.5).floor() as i64
}

/// `matrix[i][j]` counts documents with gold label `i` predicted as `j`.
pub fn confusion_matrix<P: AsRef<str>, G: AsRef<str>>(
    predictions: &[P],
    gold: &[G],
    label_set: &[String],
) -> Result<Vec<Vec<usize>>> {
    check_lengths(predictions.len(), gold.len())?;
    let index = |label: &str| {
        label_set
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown label '{label}'")))
    };
    let mut matrix = vec![vec![0; label_set.len()]; label_set.len()];
    for (p, g) in predictions.iter().zip(gold) {
        matrix[index(g.as_ref())?][index(p.as_ref())?] += 1;
    }
    Ok(matrix)
}

fn arff_quote(value: &str) -> String {
    if value
        .chars()
        .all(|c| c.is_alphanumeric() || c == '_' || c == '-' || c == '.')
        && !value.is_empty()
    {
        value.to_owned()
    } else {
        format!("'{}'", value.replace('\\', "\\\\").replace('\'', "\\'"))
    }
}

/// Writes an ARFF file with one numeric attribute per feature and a nominal
/// class attribute.
pub fn write_arff<W: Write>(mut out: W, relation: &str, data: &LabeledFeatures) -> std::io::Result<()> {
    writeln!(out, "@relation {}", arff_quote(relation))?;
    writeln!(out)?;
    for z in 1..=data.dim() {
        writeln!(out, "@attribute p_z{z} numeric")?;
    }
    let classes: Vec<String> = data.label_set.iter().map(|l| arff_quote(l)).collect();
    writeln!(out, "@attribute class {{{}}}", classes.join(","))?;
    writeln!(out)?;
    writeln!(out, "@data")?;
    for (x, y) in &data.rows {
        for v in x {
            write!(out, "{v},")?;
        }
        writeln!(out, "{}", classes[*y])?;
    }
    Ok(())
}
