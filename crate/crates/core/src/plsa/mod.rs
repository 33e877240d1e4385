//! The aspect model: P(z), P(d|z) and P(w|z) tables fitted to a sparse count
//! matrix by expectation-maximization.
//!
//! The E-step posterior P(z|d,w) is never stored as a D×W×K tensor. The M-step
//! recomputes it for each nonzero cell while accumulating the expected counts,
//! so memory stays proportional to the number of stored counts plus the size
//! of the tables themselves.

mod io;

pub use io::{load_model, read_model, save_model, write_model, ModelFile};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::CountMatrix;
use crate::error::{Error, Result};

/// Posterior denominators below this are treated as underflow.
pub const DENOMINATOR_FLOOR: f64 = 1e-300;
/// Lower clamp for log arguments in the likelihood.
pub const PROBABILITY_FLOOR: f64 = 1e-300;

const NORMALIZATION_TOLERANCE: f64 = 1e-9;
// Documents per accumulation block in the M-step. Fixed so that the reduction
// order, and therefore the result, does not depend on the thread count.
const DOC_BLOCK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct PlsaModel {
    p_z: Vec<f64>,
    // [z][d]
    p_d_given_z: Vec<Vec<f64>>,
    // [z][w]
    p_w_given_z: Vec<Vec<f64>>,
}

impl PlsaModel {
    /// Builds a model from explicit tables, `p_d_given_z[z][d]` and
    /// `p_w_given_z[z][w]`. Every table must be a probability distribution
    /// along its constrained axis.
    pub fn from_tables(
        p_z: Vec<f64>,
        p_d_given_z: Vec<Vec<f64>>,
        p_w_given_z: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let k = p_z.len();
        if k == 0 {
            return Err(Error::InvalidArgument("model needs at least one topic".into()));
        }
        if p_d_given_z.len() != k || p_w_given_z.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "P(z) has {k} topics, P(d|z) {} and P(w|z) {}",
                p_d_given_z.len(),
                p_w_given_z.len()
            )));
        }
        let n_docs = p_d_given_z[0].len();
        let n_words = p_w_given_z[0].len();
        if n_docs == 0 || n_words == 0 {
            return Err(Error::InvalidArgument("empty document or word axis".into()));
        }
        if p_d_given_z.iter().any(|r| r.len() != n_docs)
            || p_w_given_z.iter().any(|r| r.len() != n_words)
        {
            return Err(Error::DimensionMismatch("ragged probability table".into()));
        }
        check_distribution("P(z)", &p_z)?;
        for (z, row) in p_d_given_z.iter().enumerate() {
            check_distribution(&format!("P(d|z={z})"), row)?;
        }
        for (z, row) in p_w_given_z.iter().enumerate() {
            check_distribution(&format!("P(w|z={z})"), row)?;
        }
        Ok(Self {
            p_z,
            p_d_given_z,
            p_w_given_z,
        })
    }

    pub fn k(&self) -> usize {
        self.p_z.len()
    }

    pub fn n_docs(&self) -> usize {
        self.p_d_given_z[0].len()
    }

    pub fn n_words(&self) -> usize {
        self.p_w_given_z[0].len()
    }

    pub fn p_z(&self) -> &[f64] {
        &self.p_z
    }

    /// P(d|z) for one topic, indexed by document.
    pub fn p_d_given_z(&self, z: usize) -> &[f64] {
        &self.p_d_given_z[z]
    }

    /// P(w|z) for one topic, indexed by word.
    pub fn p_w_given_z(&self, z: usize) -> &[f64] {
        &self.p_w_given_z[z]
    }

    fn check_doc(&self, d: usize) -> Result<()> {
        if d >= self.n_docs() {
            return Err(Error::IndexOutOfRange {
                what: "document",
                index: d,
                size: self.n_docs(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_word(&self, w: usize) -> Result<()> {
        if w >= self.n_words() {
            return Err(Error::IndexOutOfRange {
                what: "word",
                index: w,
                size: self.n_words(),
            });
        }
        Ok(())
    }

    fn check_counts(&self, counts: &CountMatrix) -> Result<()> {
        if counts.n_docs() != self.n_docs() || counts.n_words() != self.n_words() {
            return Err(Error::DimensionMismatch(format!(
                "model is {}×{}, counts are {}×{}",
                self.n_docs(),
                self.n_words(),
                counts.n_docs(),
                counts.n_words()
            )));
        }
        Ok(())
    }

    // Writes P(z|d,w) into `out`; falls back to uniform on underflow.
    fn posterior_into(&self, d: usize, w: usize, out: &mut [f64]) {
        let mut denom = 0.0;
        for (z, slot) in out.iter_mut().enumerate() {
            *slot = self.p_z[z] * self.p_d_given_z[z][d] * self.p_w_given_z[z][w];
            denom += *slot;
        }
        if denom < DENOMINATOR_FLOOR {
            out.fill(1.0 / out.len() as f64);
        } else {
            out.iter_mut().for_each(|p| *p /= denom);
        }
    }

    fn is_finite(&self) -> bool {
        self.p_z.iter().all(|p| p.is_finite())
            && self.p_d_given_z.iter().flatten().all(|p| p.is_finite())
            && self.p_w_given_z.iter().flatten().all(|p| p.is_finite())
    }
}

fn check_distribution(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|p| !p.is_finite() || !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidArgument(format!("{name} has entries outside [0, 1]")));
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::InvalidArgument(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

/// Divides by the sum, or returns the uniform distribution when the sum is
/// zero. The boolean reports whether the fallback was taken.
pub(crate) fn normalize_or_uniform(values: &mut [f64]) -> bool {
    let sum: f64 = values.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        values.iter_mut().for_each(|v| *v /= sum);
        false
    } else {
        let u = 1.0 / values.len() as f64;
        values.fill(u);
        true
    }
}

/// Log-likelihood after each EM iteration, 1-based.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    pub entries: Vec<(usize, f64)>,
}

impl TrainingTrace {
    pub fn log_likelihoods(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|&(_, ll)| ll)
    }

    pub fn last(&self) -> Option<f64> {
        self.entries.last().map(|&(_, ll)| ll)
    }

    /// True when no entry drops below its predecessor by more than
    /// `rel_slack · |previous|`.
    pub fn is_non_decreasing(&self, rel_slack: f64) -> bool {
        self.entries
            .windows(2)
            .all(|w| w[1].1 >= w[0].1 - rel_slack * w[0].1.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub k: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Stop early once the relative log-likelihood gain drops below this.
    /// Off by default; the experiment protocol uses fixed iteration counts.
    pub tolerance: Option<f64>,
}

impl TrainOptions {
    pub fn new(k: usize, iterations: usize, seed: u64) -> Self {
        Self {
            k,
            iterations,
            seed,
            tolerance: None,
        }
    }
}

/// Random initialization: strictly positive uniform draws from a seeded
/// ChaCha8 stream, normalized along each table's constrained axis.
pub fn init_model(n_docs: usize, n_words: usize, k: usize, seed: u64) -> Result<PlsaModel> {
    if n_docs == 0 || n_words == 0 || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "init_model needs D, W, K ≥ 1 (got D={n_docs}, W={n_words}, K={k})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // gen::<f64>() lies in [0, 1); shift away from zero.
    let mut draw = |len: usize| -> Vec<f64> {
        let mut v: Vec<f64> = (0..len).map(|_| 1.0 - rng.gen::<f64>()).collect();
        normalize_or_uniform(&mut v);
        v
    };
    let p_z = draw(k);
    let p_d_given_z = (0..k).map(|_| draw(n_docs)).collect();
    let p_w_given_z = (0..k).map(|_| draw(n_words)).collect();
    Ok(PlsaModel {
        p_z,
        p_d_given_z,
        p_w_given_z,
    })
}

/// P(z|d,w) ∝ P(z)·P(d|z)·P(w|z), uniform when the normalizer underflows.
pub fn e_step_posterior(model: &PlsaModel, d: usize, w: usize) -> Result<Vec<f64>> {
    model.check_doc(d)?;
    model.check_word(w)?;
    let mut out = vec![0.0; model.k()];
    model.posterior_into(d, w, &mut out);
    Ok(out)
}

struct BlockSums {
    // [w][z], dense over the vocabulary
    word_topic: Vec<f64>,
    // [d - block start][z]
    doc_topic: Vec<f64>,
    topic: Vec<f64>,
}

/// One M-step: expected counts n(d,w)·P(z|d,w) under the current model are
/// summed over documents (for P(w|z)), over words (for P(d|z)) and over both
/// (for P(z)), then normalized.
pub fn m_step(model: &PlsaModel, counts: &CountMatrix) -> Result<PlsaModel> {
    model.check_counts(counts)?;
    if counts.is_empty() {
        return Err(Error::InvalidArgument("count matrix has no entries".into()));
    }
    let k = model.k();
    let n_docs = model.n_docs();
    let n_words = model.n_words();

    let blocks: Vec<BlockSums> = (0..n_docs.div_ceil(DOC_BLOCK))
        .into_par_iter()
        .map(|b| {
            let start = b * DOC_BLOCK;
            let end = (start + DOC_BLOCK).min(n_docs);
            let mut sums = BlockSums {
                word_topic: vec![0.0; n_words * k],
                doc_topic: vec![0.0; (end - start) * k],
                topic: vec![0.0; k],
            };
            let mut post = vec![0.0; k];
            for d in start..end {
                for &(w, n) in counts.row(d) {
                    model.posterior_into(d, w, &mut post);
                    let n = f64::from(n);
                    for z in 0..k {
                        let expected = n * post[z];
                        sums.word_topic[w * k + z] += expected;
                        sums.doc_topic[(d - start) * k + z] += expected;
                        sums.topic[z] += expected;
                    }
                }
            }
            sums
        })
        .collect();

    let mut p_z = vec![0.0; k];
    let mut p_w_given_z = vec![vec![0.0; n_words]; k];
    let mut p_d_given_z = vec![vec![0.0; n_docs]; k];
    for (b, sums) in blocks.iter().enumerate() {
        for z in 0..k {
            p_z[z] += sums.topic[z];
        }
        for w in 0..n_words {
            for z in 0..k {
                p_w_given_z[z][w] += sums.word_topic[w * k + z];
            }
        }
        let start = b * DOC_BLOCK;
        for (offset, row) in sums.doc_topic.chunks_exact(k).enumerate() {
            for z in 0..k {
                p_d_given_z[z][start + offset] = row[z];
            }
        }
    }

    for z in 0..k {
        let dead_words = normalize_or_uniform(&mut p_w_given_z[z]);
        let dead_docs = normalize_or_uniform(&mut p_d_given_z[z]);
        if dead_words || dead_docs {
            warn!("topic {z} received no expected counts; reset to uniform");
        }
    }
    normalize_or_uniform(&mut p_z);

    let next = PlsaModel {
        p_z,
        p_d_given_z,
        p_w_given_z,
    };
    if !next.is_finite() {
        return Err(Error::Numeric("non-finite probability after M-step".into()));
    }
    Ok(next)
}

/// P(d,w) from the symmetric parameterization Σ_z P(z)P(d|z)P(w|z).
pub fn joint_probability(model: &PlsaModel, d: usize, w: usize) -> Result<f64> {
    model.check_doc(d)?;
    model.check_word(w)?;
    Ok(joint_unchecked(model, d, w))
}

fn joint_unchecked(model: &PlsaModel, d: usize, w: usize) -> f64 {
    (0..model.k())
        .map(|z| model.p_z[z] * model.p_d_given_z[z][d] * model.p_w_given_z[z][w])
        .sum()
}

/// P(d,w) from the asymmetric parameterization P(d)·Σ_z P(w|z)P(z|d), with
/// P(d) = Σ_z P(z)P(d|z) and P(z|d) obtained by Bayes inversion.
pub fn joint_probability_asymmetric(model: &PlsaModel, d: usize, w: usize) -> Result<f64> {
    model.check_doc(d)?;
    model.check_word(w)?;
    let p_d = document_probability(model, d);
    if p_d == 0.0 {
        return Ok(0.0);
    }
    let p_w_given_d: f64 = (0..model.k())
        .map(|z| model.p_w_given_z[z][w] * model.p_z[z] * model.p_d_given_z[z][d] / p_d)
        .sum();
    Ok(p_d * p_w_given_d)
}

/// Marginal P(d) = Σ_z P(z)P(d|z).
pub fn document_probability(model: &PlsaModel, d: usize) -> f64 {
    (0..model.k())
        .map(|z| model.p_z[z] * model.p_d_given_z[z][d])
        .sum()
}

/// Σ_{d,w} n(d,w)·log P(d,w), with P(d,w) clamped below at 1e-300.
pub fn log_likelihood(model: &PlsaModel, counts: &CountMatrix) -> Result<f64> {
    model.check_counts(counts)?;
    Ok(counts
        .iter()
        .map(|(d, w, n)| f64::from(n) * joint_unchecked(model, d, w).max(PROBABILITY_FLOOR).ln())
        .sum())
}

/// Initializes and runs exactly `iterations` EM sweeps (fewer only when a
/// tolerance is set and reached).
pub fn train(
    counts: &CountMatrix,
    k: usize,
    iterations: usize,
    seed: u64,
) -> Result<(PlsaModel, TrainingTrace)> {
    train_with(counts, &TrainOptions::new(k, iterations, seed))
}

pub fn train_with(counts: &CountMatrix, options: &TrainOptions) -> Result<(PlsaModel, TrainingTrace)> {
    if options.k == 0 {
        return Err(Error::InvalidArgument("topic count must be at least 1".into()));
    }
    if options.iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be at least 1".into()));
    }
    if counts.is_empty() {
        return Err(Error::InvalidArgument("count matrix has no entries".into()));
    }
    let mut model = init_model(counts.n_docs(), counts.n_words(), options.k, options.seed)?;
    let mut trace = TrainingTrace::default();
    for iteration in 1..=options.iterations {
        model = m_step(&model, counts)?;
        let ll = log_likelihood(&model, counts)?;
        if !ll.is_finite() {
            return Err(Error::Numeric(format!(
                "log-likelihood is {ll} after iteration {iteration}"
            )));
        }
        let previous = trace.last();
        trace.entries.push((iteration, ll));
        if let (Some(tol), Some(prev)) = (options.tolerance, previous) {
            if (ll - prev).abs() <= tol * prev.abs() {
                break;
            }
        }
    }
    Ok((model, trace))
}

/// Training-side topic features: row d is P(z|d) ∝ P(z)·P(d|z).
pub fn doc_topic_features(model: &PlsaModel) -> Vec<Vec<f64>> {
    (0..model.n_docs())
        .map(|d| {
            let mut row: Vec<f64> = (0..model.k())
                .map(|z| model.p_z[z] * model.p_d_given_z[z][d])
                .collect();
            if normalize_or_uniform(&mut row) {
                warn!("document {d} has zero probability mass; using uniform topic features");
            }
            row
        })
        .collect()
}

/// Entries in P(d|z) plus P(w|z): D·K + W·K. The K entries of P(z) are not
/// counted, matching the usual back-of-envelope comparison against D·W.
pub fn parameter_count(n_docs: usize, n_words: usize, k: usize) -> usize {
    n_docs * k + n_words * k
}
