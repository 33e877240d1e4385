//! Text ingestion: tokenization, stopword removal, vocabulary and the sparse
//! document-by-word count matrix.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

const DEFAULT_STOPLIST: &str = include_str!("../data/stopwords_id.txt");

/// A preprocessed, labelled document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub category: String,
    pub tokens: Vec<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, category: impl Into<String>, tokens: Vec<String>) -> Self {
        Self {
            id: id.into(),
            category: category.into(),
            tokens,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    categories: BTreeSet<String>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate document ids. The category set is
    /// the set of labels carried by the documents.
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate document id '{}'",
                    doc.id
                )));
            }
        }
        let categories = documents.iter().map(|d| d.category.clone()).collect();
        Ok(Self {
            documents,
            categories,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn categories(&self) -> &BTreeSet<String> {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.documents.iter().map(|d| d.category.as_str()).collect()
    }

    /// Total number of tokens across all documents.
    pub fn token_count(&self) -> usize {
        self.documents.iter().map(|d| d.tokens.len()).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from distinct words, keeping the given order.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary word '{w}'")));
            }
        }
        Ok(Self { words, index })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        self.words.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Sparse n(d,w): one row per document holding `(word index, count)` pairs
/// sorted by word index. Zero counts are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    n_docs: usize,
    n_words: usize,
    rows: Vec<Vec<(usize, u32)>>,
}

impl CountMatrix {
    /// Builds a matrix from `(doc, word, count)` triples. Repeated cells are
    /// summed and zero counts dropped.
    pub fn from_entries(
        n_docs: usize,
        n_words: usize,
        entries: impl IntoIterator<Item = (usize, usize, u32)>,
    ) -> Result<Self> {
        let mut cells: Vec<BTreeMap<usize, u32>> = vec![BTreeMap::new(); n_docs];
        for (d, w, n) in entries {
            if d >= n_docs {
                return Err(Error::IndexOutOfRange {
                    what: "document",
                    index: d,
                    size: n_docs,
                });
            }
            if w >= n_words {
                return Err(Error::IndexOutOfRange {
                    what: "word",
                    index: w,
                    size: n_words,
                });
            }
            if n > 0 {
                *cells[d].entry(w).or_insert(0) += n;
            }
        }
        let rows = cells.into_iter().map(|c| c.into_iter().collect()).collect();
        Ok(Self {
            n_docs,
            n_words,
            rows,
        })
    }

    /// Dense constructor, mostly for tests: `dense[d][w]`.
    pub fn from_dense(dense: &[Vec<u32>]) -> Result<Self> {
        let n_docs = dense.len();
        let n_words = dense.first().map_or(0, Vec::len);
        if dense.iter().any(|r| r.len() != n_words) {
            return Err(Error::DimensionMismatch("ragged dense count matrix".into()));
        }
        Self::from_entries(
            n_docs,
            n_words,
            dense
                .iter()
                .enumerate()
                .flat_map(|(d, r)| r.iter().enumerate().map(move |(w, &n)| (d, w, n))),
        )
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    /// Number of cells of the dense D×W table.
    pub fn capacity(&self) -> usize {
        self.n_docs * self.n_words
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(Vec::is_empty)
    }

    pub fn row(&self, d: usize) -> &[(usize, u32)] {
        &self.rows[d]
    }

    pub fn get(&self, d: usize, w: usize) -> u32 {
        self.rows
            .get(d)
            .and_then(|r| r.binary_search_by_key(&w, |&(i, _)| i).ok().map(|p| r[p].1))
            .unwrap_or(0)
    }

    /// Iterates stored cells as `(doc, word, count)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(d, r)| r.iter().map(move |&(w, n)| (d, w, n)))
    }

    pub fn total(&self) -> u64 {
        self.iter().map(|(_, _, n)| u64::from(n)).sum()
    }

    /// Returns a copy with every count multiplied by `factor`.
    pub fn scaled(&self, factor: u32) -> Self {
        Self {
            n_docs: self.n_docs,
            n_words: self.n_words,
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|&(w, n)| (w, n * factor)).collect())
                .collect(),
        }
    }
}

/// Splits text into lowercased maximal runs of alphabetic characters.
/// Digits, punctuation and whitespace are separators.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn remove_stopwords(tokens: &[String], stoplist: &HashSet<String>) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| !t.is_empty() && !stoplist.contains(t.as_str()))
        .cloned()
        .collect()
}

/// Parses a stoplist: one word per line, blank lines and `#` comments ignored.
pub fn parse_stoplist(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_stoplist(path: &Path) -> Result<HashSet<String>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|_| Error::InvalidUtf8 {
        path: path.to_path_buf(),
    })?;
    Ok(parse_stoplist(&text))
}

/// The bundled Indonesian stoplist.
pub fn default_stoplist() -> HashSet<String> {
    parse_stoplist(DEFAULT_STOPLIST)
}

pub fn preprocess(text: &str, stoplist: &HashSet<String>) -> Vec<String> {
    remove_stopwords(&tokenize(text), stoplist)
}

/// Loads `<root>/<category>/<doc>.txt`. Documents are ordered by id
/// (`category/filename`).
pub fn load_corpus(root: &Path, stoplist: &HashSet<String>) -> Result<Corpus> {
    let mut files = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let category = entry.file_name().to_string_lossy().into_owned();
        for doc in fs::read_dir(&path).map_err(|e| Error::io(&path, e))? {
            let doc = doc.map_err(|e| Error::io(&path, e))?;
            let doc_path = doc.path();
            if doc_path.is_file() && doc_path.extension().is_some_and(|e| e == "txt") {
                let id = format!("{}/{}", category, doc.file_name().to_string_lossy());
                files.push((id, category.clone(), doc_path));
            }
        }
    }
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{}: no category directories with .txt documents",
            root.display()
        )));
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));

    let documents = files
        .into_par_iter()
        .map(|(id, category, path)| {
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let text = String::from_utf8(bytes).map_err(|_| Error::InvalidUtf8 { path })?;
            Ok(Document::new(id, category, preprocess(&text, stoplist)))
        })
        .collect::<Result<Vec<_>>>()?;
    for doc in documents.iter().filter(|d| d.tokens.is_empty()) {
        warn!("document {} has no tokens after preprocessing", doc.id);
    }
    Corpus::new(documents)
}

/// Words whose total corpus count is at least `min_count`, in order of
/// first appearance.
pub fn build_vocabulary(corpus: &Corpus, min_count: usize) -> Vocabulary {
    let min_count = min_count.max(1);
    let mut order: Vec<&str> = Vec::new();
    let mut totals: HashMap<&str, usize> = HashMap::new();
    for token in corpus.documents.iter().flat_map(|d| &d.tokens) {
        let count = totals.entry(token.as_str()).or_insert_with(|| {
            order.push(token.as_str());
            0
        });
        *count += 1;
    }
    let words = order
        .into_iter()
        .filter(|w| totals[w] >= min_count)
        .map(str::to_owned)
        .collect();
    Vocabulary::from_words(words).expect("distinct by construction")
}

/// Counts in-vocabulary token occurrences per document.
pub fn build_count_matrix(corpus: &Corpus, vocab: &Vocabulary) -> CountMatrix {
    let entries = corpus.documents.iter().enumerate().flat_map(|(d, doc)| {
        doc.tokens
            .iter()
            .filter_map(move |t| vocab.get(t).map(|w| (d, w, 1)))
    });
    CountMatrix::from_entries(corpus.len(), vocab.len(), entries).expect("indices in range")
}

/// Stratified split. Each category's documents are shuffled with a seeded
/// generator; the first `per_category_test` go to the test side and the next
/// `per_category_train` to the train side. Fixing the seed and test size
/// therefore fixes the test set, and larger train sizes extend smaller ones.
pub fn split_train_test(
    corpus: &Corpus,
    per_category_train: usize,
    per_category_test: usize,
    seed: u64,
) -> Result<(Corpus, Corpus)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for category in &corpus.categories {
        let mut members: Vec<&Document> = corpus
            .documents
            .iter()
            .filter(|d| &d.category == category)
            .collect();
        let required = per_category_train + per_category_test;
        if members.len() < required {
            return Err(Error::InsufficientDocuments {
                category: category.clone(),
                available: members.len(),
                required,
            });
        }
        members.shuffle(&mut rng);
        test.extend(members[..per_category_test].iter().map(|d| (*d).clone()));
        train.extend(
            members[per_category_test..required]
                .iter()
                .map(|d| (*d).clone()),
        );
    }
    train.sort_by(|a, b| a.id.cmp(&b.id));
    test.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((Corpus::new(train)?, Corpus::new(test)?))
}
