//! Synthetic labelled corpora with planted per-category word distributions.
//!
//! Each category owns a topic vocabulary of `topic_words` pseudo-words. A
//! `shared_fraction` of every topic vocabulary is taken from one pool common
//! to all categories, so `0.0` gives disjoint supports and larger values blur
//! the categories. Tokens are drawn from the document's own category, with
//! small rates of background words, words from a random other category and
//! stylistic words tied to the document's news source. Stopwords and
//! punctuation are mixed into the rendered text so that the regular
//! preprocessing path has something to remove.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{default_stoplist, preprocess, Corpus, Document};
use crate::error::{Error, Result};

const CONSONANTS: &[u8] = b"bdgklmnprst";
const VOWELS: &[u8] = b"aiueo";
const NEWS_CATEGORIES: [&str; 4] = ["ekonomi", "internasional", "olahraga", "politik"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub categories: usize,
    pub docs_per_category: usize,
    pub topic_words: usize,
    pub shared_fraction: f64,
    pub background_words: usize,
    pub background_rate: f64,
    pub off_topic_rate: f64,
    pub min_doc_len: usize,
    pub max_doc_len: usize,
    pub stopword_rate: f64,
    /// Number of simulated news sources.
    pub sources: usize,
    /// Source `s` is chosen with weight `source_balance^s`; 1.0 is balanced.
    pub source_balance: f64,
    pub source_words: usize,
    pub source_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            categories: 4,
            docs_per_category: 100,
            topic_words: 15,
            shared_fraction: 0.0,
            background_words: 60,
            background_rate: 0.3,
            off_topic_rate: 0.1,
            min_doc_len: 25,
            max_doc_len: 60,
            stopword_rate: 0.2,
            sources: 3,
            source_balance: 1.0,
            source_words: 8,
            source_rate: 0.05,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if self.categories < 2 {
            return Err(Error::InvalidArgument("synthetic corpus needs ≥ 2 categories".into()));
        }
        if self.topic_words == 0 || self.min_doc_len == 0 || self.min_doc_len > self.max_doc_len {
            return Err(Error::InvalidArgument("bad synthetic vocabulary or length settings".into()));
        }
        if !rate_ok(self.shared_fraction)
            || !rate_ok(self.stopword_rate)
            || !rate_ok(self.background_rate + self.off_topic_rate + self.source_rate)
        {
            return Err(Error::InvalidArgument("synthetic rates must lie in [0, 1]".into()));
        }
        if self.sources == 0 || !(self.source_balance > 0.0 && self.source_balance <= 1.0) {
            return Err(Error::InvalidArgument(
                "need ≥ 1 source and a source balance in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn category_names(&self) -> Vec<String> {
        if self.categories == NEWS_CATEGORIES.len() {
            NEWS_CATEGORIES.map(String::from).to_vec()
        } else {
            (0..self.categories).map(|c| format!("kategori{}", letters(c))).collect()
        }
    }

    /// Words of each category's topic vocabulary that come from the shared pool.
    pub fn shared_words(&self) -> usize {
        (self.shared_fraction * self.topic_words as f64).round() as usize
    }
}

/// A generated document before preprocessing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthDocument {
    pub id: String,
    pub category: String,
    pub source: String,
    pub text: String,
}

// Base-26 letters so generated names survive the alphabetic tokenizer.
fn letters(mut n: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'a' + (n % 26) as u8);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    out.reverse();
    String::from_utf8(out).unwrap()
}

/// Deterministic pronounceable pseudo-words, skipping stopwords.
struct WordFactory {
    next: usize,
    stoplist: HashSet<String>,
}

impl WordFactory {
    fn new(stoplist: HashSet<String>) -> Self {
        Self { next: 0, stoplist }
    }

    fn syllables(mut n: usize) -> String {
        let base = CONSONANTS.len() * VOWELS.len();
        let mut word = String::new();
        for _ in 0..3 {
            let s = n % base;
            word.push(CONSONANTS[s / VOWELS.len()] as char);
            word.push(VOWELS[s % VOWELS.len()] as char);
            n /= base;
        }
        if n > 0 {
            word.push_str(&letters(n));
        }
        word
    }

    fn take(&mut self, count: usize) -> Vec<String> {
        let mut words = Vec::with_capacity(count);
        while words.len() < count {
            let w = Self::syllables(self.next);
            self.next += 1;
            if !self.stoplist.contains(&w) {
                words.push(w);
            }
        }
        words
    }
}

pub fn generate(config: &SynthConfig) -> Result<Vec<SynthDocument>> {
    config.validate()?;
    let stoplist = default_stoplist();
    let mut stopwords: Vec<String> = stoplist.iter().cloned().collect();
    stopwords.sort();
    let mut factory = WordFactory::new(stoplist);

    let shared = config.shared_words();
    let shared_pool = factory.take(shared);
    let topics: Vec<Vec<String>> = (0..config.categories)
        .map(|_| {
            let mut v = factory.take(config.topic_words - shared);
            v.extend(shared_pool.iter().cloned());
            v
        })
        .collect();
    let background = factory.take(config.background_words);
    let source_vocab: Vec<Vec<String>> = (0..config.sources)
        .map(|_| factory.take(config.source_words))
        .collect();
    let source_weights: Vec<f64> = (0..config.sources)
        .map(|s| config.source_balance.powi(s as i32))
        .collect();
    let weight_total: f64 = source_weights.iter().sum();

    let names = config.category_names();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut docs = Vec::with_capacity(config.categories * config.docs_per_category);
    for (c, name) in names.iter().enumerate() {
        for i in 0..config.docs_per_category {
            let mut pick = rng.gen::<f64>() * weight_total;
            let mut source = config.sources - 1;
            for (s, w) in source_weights.iter().enumerate() {
                if pick < *w {
                    source = s;
                    break;
                }
                pick -= w;
            }
            let len = rng.gen_range(config.min_doc_len..=config.max_doc_len);
            let mut words: Vec<&str> = Vec::with_capacity(len * 2);
            let mut content = 0;
            while content < len {
                if !stopwords.is_empty() && rng.gen::<f64>() < config.stopword_rate {
                    words.push(stopwords.choose(&mut rng).unwrap());
                    continue;
                }
                let u = rng.gen::<f64>();
                let pool: &[String] = if u < config.background_rate && !background.is_empty() {
                    &background
                } else if u < config.background_rate + config.off_topic_rate {
                    let other = (c + rng.gen_range(1..config.categories)) % config.categories;
                    &topics[other]
                } else if u < config.background_rate + config.off_topic_rate + config.source_rate
                    && !source_vocab[source].is_empty()
                {
                    &source_vocab[source]
                } else {
                    &topics[c]
                };
                words.push(pool.choose(&mut rng).unwrap());
                content += 1;
            }
            docs.push(SynthDocument {
                id: format!("{name}/{i:05}.txt"),
                category: name.clone(),
                source: format!("sumber{}", letters(source)),
                text: render(&words, &mut rng),
            });
        }
    }
    Ok(docs)
}

fn render(words: &[&str], rng: &mut ChaCha8Rng) -> String {
    let mut text = String::new();
    let mut sentence_start = true;
    for w in words {
        if !text.is_empty() {
            text.push(' ');
        }
        if sentence_start {
            let mut chars = w.chars();
            if let Some(first) = chars.next() {
                text.extend(first.to_uppercase());
                text.push_str(chars.as_str());
            }
            sentence_start = false;
        } else {
            text.push_str(w);
        }
        if rng.gen::<f64>() < 0.08 {
            text.push_str(if rng.gen::<bool>() { "." } else { "," });
            sentence_start = text.ends_with('.');
        }
    }
    text.push('.');
    text
}

/// Generates and preprocesses a corpus in memory.
pub fn generate_corpus(config: &SynthConfig, stoplist: &HashSet<String>) -> Result<Corpus> {
    let docs = generate(config)?
        .into_iter()
        .map(|d| Document::new(d.id, d.category, preprocess(&d.text, stoplist)))
        .collect();
    Corpus::new(docs)
}

/// Writes `<root>/<category>/<doc>.txt` files plus a `manifest.csv` listing
/// `doc_id,category,source`.
pub fn write_corpus(root: &Path, docs: &[SynthDocument]) -> Result<()> {
    for doc in docs {
        let path = root.join(&doc.id);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, &doc.text).map_err(|e| Error::io(&path, e))?;
    }
    let manifest = root.join("manifest.csv");
    let mut writer = csv::Writer::from_path(&manifest).map_err(crate::foldin::csv_error)?;
    writer
        .write_record(["doc_id", "category", "source"])
        .map_err(crate::foldin::csv_error)?;
    for doc in docs {
        writer
            .write_record([&doc.id, &doc.category, &doc.source])
            .map_err(crate::foldin::csv_error)?;
    }
    writer.flush().map_err(|e| Error::io(&manifest, e))
}

/// Documents per source, in source order.
pub fn source_counts(docs: &[SynthDocument]) -> Vec<(String, usize)> {
    let mut counts: Vec<(String, usize)> = Vec::new();
    for doc in docs {
        match counts.iter_mut().find(|(s, _)| *s == doc.source) {
            Some((_, n)) => *n += 1,
            None => counts.push((doc.source.clone(), 1)),
        }
    }
    counts.sort();
    counts
}
