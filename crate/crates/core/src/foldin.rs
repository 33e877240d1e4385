//! Projection of unseen documents into topic space by looking up the trained
//! word-topic tables and averaging over the document's in-vocabulary words.
//! No EM is run on test documents.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use log::warn;

use crate::corpus::{Corpus, Document, Vocabulary};
use crate::error::{Error, Result};
use crate::plsa::{normalize_or_uniform, PlsaModel};

#[derive(Debug, Clone, PartialEq)]
pub struct TopicFeatureVector {
    pub probs: Vec<f64>,
    /// Test tokens found in the training vocabulary.
    pub n_matched: usize,
    pub n_total: usize,
}

impl TopicFeatureVector {
    /// True when no token matched and `probs` is the uniform fallback.
    pub fn is_fallback(&self) -> bool {
        self.n_matched == 0
    }
}

/// How matched words are weighted in the average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FoldInMode {
    /// Every token occurrence counts, so repeated words weigh more.
    #[default]
    Occurrences,
    /// Each distinct word counts once.
    Types,
}

/// P(z|w) ∝ P(z)·P(w|z); uniform when the normalizer is zero.
pub fn word_topic_posterior(model: &PlsaModel, w: usize) -> Result<Vec<f64>> {
    model.check_word(w)?;
    Ok(posterior_unchecked(model, w))
}

fn posterior_unchecked(model: &PlsaModel, w: usize) -> Vec<f64> {
    let mut probs: Vec<f64> = (0..model.k())
        .map(|z| model.p_z()[z] * model.p_w_given_z(z)[w])
        .collect();
    normalize_or_uniform(&mut probs);
    probs
}

pub fn fold_in(model: &PlsaModel, vocab: &Vocabulary, doc: &Document) -> TopicFeatureVector {
    fold_in_with(model, vocab, doc, FoldInMode::Occurrences)
}

pub fn fold_in_with(
    model: &PlsaModel,
    vocab: &Vocabulary,
    doc: &Document,
    mode: FoldInMode,
) -> TopicFeatureVector {
    let k = model.k();
    let matched: Vec<usize> = doc
        .tokens
        .iter()
        .filter_map(|t| vocab.get(t))
        .filter(|&w| w < model.n_words())
        .collect();
    let n_matched = matched.len();
    let averaged: Vec<usize> = match mode {
        FoldInMode::Occurrences => matched,
        FoldInMode::Types => matched.into_iter().collect::<BTreeSet<_>>().into_iter().collect(),
    };

    let probs = if averaged.is_empty() {
        warn!("document {} has no in-vocabulary tokens; using uniform topics", doc.id);
        vec![1.0 / k as f64; k]
    } else {
        let mut sum = vec![0.0; k];
        for &w in &averaged {
            for (acc, p) in sum.iter_mut().zip(posterior_unchecked(model, w)) {
                *acc += p;
            }
        }
        let n = averaged.len() as f64;
        sum.iter_mut().for_each(|p| *p /= n);
        sum
    };
    TopicFeatureVector {
        probs,
        n_matched,
        n_total: doc.tokens.len(),
    }
}

/// Folds in every document, keeping corpus order and pairing each vector with
/// the document's category.
pub fn fold_in_corpus(
    model: &PlsaModel,
    vocab: &Vocabulary,
    corpus: &Corpus,
    mode: FoldInMode,
) -> Vec<(TopicFeatureVector, String)> {
    corpus
        .documents()
        .iter()
        .map(|doc| (fold_in_with(model, vocab, doc, mode), doc.category.clone()))
        .collect()
}

/// One row of a feature CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub doc_id: String,
    pub category: String,
    pub features: TopicFeatureVector,
}

/// Writes `doc_id,category,n_matched,n_total,p_z1,...,p_zK`.
pub fn write_feature_csv<W: Write>(out: W, rows: &[FeatureRow]) -> Result<()> {
    let k = rows.first().map_or(0, |r| r.features.probs.len());
    let mut writer = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["doc_id", "category", "n_matched", "n_total"]
        .map(String::from)
        .to_vec();
    header.extend((1..=k).map(|z| format!("p_z{z}")));
    writer.write_record(&header).map_err(csv_error)?;
    for row in rows {
        if row.features.probs.len() != k {
            return Err(Error::DimensionMismatch("feature rows differ in K".into()));
        }
        let mut record = vec![
            row.doc_id.clone(),
            row.category.clone(),
            row.features.n_matched.to_string(),
            row.features.n_total.to_string(),
        ];
        record.extend(row.features.probs.iter().map(f64::to_string));
        writer.write_record(&record).map_err(csv_error)?;
    }
    writer.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

pub fn read_feature_csv<R: Read>(input: R) -> Result<Vec<FeatureRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let k = reader.headers().map_err(csv_error)?.len().saturating_sub(4);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        if record.len() != k + 4 {
            return Err(Error::Parse(format!("feature row has {} fields", record.len())));
        }
        let int = |i: usize| -> Result<usize> {
            record[i]
                .parse()
                .map_err(|_| Error::Parse(format!("bad count '{}'", &record[i])))
        };
        let probs = (4..4 + k)
            .map(|i| {
                record[i]
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad probability '{}'", &record[i])))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(FeatureRow {
            doc_id: record[0].to_owned(),
            category: record[1].to_owned(),
            features: TopicFeatureVector {
                probs,
                n_matched: int(2)?,
                n_total: int(3)?,
            },
        });
    }
    Ok(rows)
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}
