//! The training grid: every (train size, topic count, iterations, repeat)
//! point trains one PLSA model, then each configured classifier is fitted on
//! the training documents' topic features and scored on folded-in test
//! documents.

use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::classify::{accuracy, train_classifier, ClassifierKind, ClassifierParams, LabeledFeatures};
use crate::corpus::{build_count_matrix, build_vocabulary, split_train_test, Corpus};
use crate::error::{Error, Result};
use crate::foldin::{fold_in_corpus, FoldInMode};
use crate::plsa::{doc_topic_features, train};

use super::report::{Cell, ExperimentReport, ReportMetadata};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub topic_counts: Vec<usize>,
    pub iteration_counts: Vec<usize>,
    /// Total training documents, split evenly across categories.
    pub train_sizes: Vec<usize>,
    pub repeats: usize,
    pub classifiers: Vec<ClassifierKind>,
    pub base_seed: u64,
    pub test_per_category: usize,
    pub min_count: usize,
    pub fold_in_mode: FoldInMode,
    pub classifier_params: ClassifierParams,
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
    /// Record wall-clock seconds per cell. Off by default so that reports are
    /// byte-reproducible.
    pub record_time: bool,
    pub corpus: Option<PathBuf>,
    pub stoplist: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            topic_counts: vec![3, 4, 5],
            iteration_counts: vec![1, 3, 5, 7, 9, 10, 20],
            train_sizes: vec![400, 700, 1000],
            repeats: 2,
            classifiers: vec![ClassifierKind::Svm, ClassifierKind::Logistic],
            base_seed: 0,
            test_per_category: 25,
            min_count: 1,
            fold_in_mode: FoldInMode::Occurrences,
            classifier_params: ClassifierParams::default(),
            jobs: None,
            record_time: false,
            corpus: None,
            stoplist: None,
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse()
                .map_err(|_| Error::InvalidArgument(format!("{key}: bad value '{v}'")))
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{key}: bad value '{value}'")))
}

impl ExperimentConfig {
    /// Number of cells the grid produces.
    pub fn cell_count(&self) -> usize {
        self.train_sizes.len()
            * self.topic_counts.len()
            * self.iteration_counts.len()
            * self.repeats
            * self.classifiers.len()
    }

    pub fn validate(&self, n_categories: usize) -> Result<()> {
        if self.topic_counts.is_empty()
            || self.iteration_counts.is_empty()
            || self.train_sizes.is_empty()
            || self.classifiers.is_empty()
            || self.repeats == 0
        {
            return Err(Error::InvalidArgument("every grid axis needs at least one value".into()));
        }
        if self.topic_counts.contains(&0) || self.iteration_counts.contains(&0) {
            return Err(Error::InvalidArgument("topics and iterations must be ≥ 1".into()));
        }
        if n_categories == 0 {
            return Err(Error::InvalidArgument("corpus has no categories".into()));
        }
        if let Some(bad) = self.train_sizes.iter().find(|&&s| s % n_categories != 0) {
            return Err(Error::InvalidArgument(format!(
                "train size {bad} is not divisible by {n_categories} categories"
            )));
        }
        Ok(())
    }

    /// Applies one `key=value` setting. Keys match the long CLI flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "topics" | "topic_counts" => self.topic_counts = parse_list(&key, value)?,
            "iterations" | "iteration_counts" => self.iteration_counts = parse_list(&key, value)?,
            "train_sizes" => self.train_sizes = parse_list(&key, value)?,
            "repeats" => self.repeats = parse_one(&key, value)?,
            "classifiers" => self.classifiers = parse_list(&key, value)?,
            "seed" | "base_seed" => self.base_seed = parse_one(&key, value)?,
            "test_per_category" => self.test_per_category = parse_one(&key, value)?,
            "min_count" => self.min_count = parse_one(&key, value)?,
            "fold_in_mode" => {
                self.fold_in_mode = match value.trim() {
                    "occurrences" => FoldInMode::Occurrences,
                    "types" => FoldInMode::Types,
                    other => {
                        return Err(Error::InvalidArgument(format!("unknown fold-in mode '{other}'")))
                    }
                }
            }
            "learning_rate" => self.classifier_params.learning_rate = parse_one(&key, value)?,
            "logistic_epochs" => self.classifier_params.logistic_epochs = parse_one(&key, value)?,
            "l2" => self.classifier_params.l2 = parse_one(&key, value)?,
            "svm_c" => self.classifier_params.svm_c = parse_one(&key, value)?,
            "svm_epochs" => self.classifier_params.svm_epochs = parse_one(&key, value)?,
            "jobs" => self.jobs = Some(parse_one(&key, value)?),
            "record_time" => self.record_time = parse_one(&key, value)?,
            "corpus" => self.corpus = Some(PathBuf::from(value.trim())),
            "stoplist" => self.stoplist = Some(PathBuf::from(value.trim())),
            _ => return Err(Error::InvalidArgument(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parses a `key=value` file. Blank lines and `#` comments are skipped.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("config line {}: expected key=value", n + 1))
            })?;
            config.set(key, value)?;
        }
        Ok(config)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Per-cell seed: the base seed folded with train size, topic count,
/// iterations and repeat through SplitMix64, in that order:
/// `h ← splitmix64(h ⊕ v)` starting from `h = base_seed`.
pub fn cell_seed(base_seed: u64, train_size: usize, topics: usize, iterations: usize, repeat: usize) -> u64 {
    [train_size, topics, iterations, repeat]
        .into_iter()
        .fold(base_seed, |h, v| splitmix64(h ^ v as u64))
}

/// Seed of the train/test split; shared by every cell of a grid so all cells
/// are scored on the same test documents.
pub fn split_seed(base_seed: u64) -> u64 {
    splitmix64(base_seed)
}

/// SHA-256 over document ids, labels and tokens.
pub fn corpus_fingerprint(corpus: &Corpus) -> String {
    let mut hasher = Sha256::new();
    for doc in corpus.documents() {
        hasher.update(doc.id.as_bytes());
        hasher.update([0x1f]);
        hasher.update(doc.category.as_bytes());
        for token in &doc.tokens {
            hasher.update([0x1f]);
            hasher.update(token.as_bytes());
        }
        hasher.update([0x1e]);
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Settings shared by every classifier evaluated on one PLSA model.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSettings {
    pub topics: usize,
    pub iterations: usize,
    pub seed: u64,
    pub min_count: usize,
    pub fold_in_mode: FoldInMode,
    pub classifier_params: ClassifierParams,
}

impl CellSettings {
    pub fn new(topics: usize, iterations: usize, seed: u64) -> Self {
        Self {
            topics,
            iterations,
            seed,
            min_count: 1,
            fold_in_mode: FoldInMode::Occurrences,
            classifier_params: ClassifierParams::default(),
        }
    }
}

/// Accuracy and timing for one classifier on one trained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellScore {
    pub classifier: ClassifierKind,
    pub accuracy_pct: f64,
    pub seconds: f64,
}

/// Runs the pipeline once and scores every requested classifier: vocabulary
/// and counts from the training corpus only, PLSA training, P(z|d) training
/// features, fold-in of the test corpus, classifier fit and test accuracy.
pub fn evaluate_cell(
    train_corpus: &Corpus,
    test_corpus: &Corpus,
    settings: &CellSettings,
    classifiers: &[ClassifierKind],
) -> Result<Vec<CellScore>> {
    if test_corpus.is_empty() {
        return Err(Error::InvalidArgument("test corpus is empty".into()));
    }
    let started = Instant::now();
    let vocab = build_vocabulary(train_corpus, settings.min_count);
    let counts = build_count_matrix(train_corpus, &vocab);
    let (model, _) = train(&counts, settings.topics, settings.iterations, settings.seed)?;
    let rows = doc_topic_features(&model)
        .into_iter()
        .zip(train_corpus.documents())
        .map(|(x, doc)| (x, doc.category.clone()))
        .collect();
    let data = LabeledFeatures::new(rows)?;
    let test = fold_in_corpus(&model, &vocab, test_corpus, settings.fold_in_mode);
    let gold: Vec<&str> = test.iter().map(|(_, label)| label.as_str()).collect();
    let shared_seconds = started.elapsed().as_secs_f64();

    classifiers
        .iter()
        .map(|&kind| {
            let started = Instant::now();
            let classifier = train_classifier(kind, &data, &settings.classifier_params, settings.seed)?;
            let predictions = test
                .iter()
                .map(|(f, _)| classifier.predict(&f.probs))
                .collect::<Result<Vec<_>>>()?;
            Ok(CellScore {
                classifier: kind,
                accuracy_pct: accuracy(&predictions, &gold)?,
                seconds: shared_seconds + started.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Test accuracy (percent) of one classifier for one configuration.
pub fn run_cell(
    train_corpus: &Corpus,
    test_corpus: &Corpus,
    settings: &CellSettings,
    classifier: ClassifierKind,
) -> Result<f64> {
    Ok(evaluate_cell(train_corpus, test_corpus, settings, &[classifier])?[0].accuracy_pct)
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

/// Runs every grid cell. Cells execute in parallel on up to `jobs` threads;
/// the report lists them in config order regardless of completion order.
pub fn run_grid(config: &ExperimentConfig, corpus: &Corpus) -> Result<ExperimentReport> {
    let n_categories = corpus.categories().len();
    config.validate(n_categories)?;

    let mut splits = Vec::with_capacity(config.train_sizes.len());
    for &size in &config.train_sizes {
        splits.push(split_train_test(
            corpus,
            size / n_categories,
            config.test_per_category,
            split_seed(config.base_seed),
        )?);
    }

    let mut points = Vec::new();
    for (s, &size) in config.train_sizes.iter().enumerate() {
        for &topics in &config.topic_counts {
            for &iterations in &config.iteration_counts {
                for repeat in 1..=config.repeats {
                    points.push((s, size, topics, iterations, repeat));
                }
            }
        }
    }

    let pool = thread_pool(config.jobs)?;
    let scored: Vec<Vec<CellScore>> = pool.install(|| {
        points
            .par_iter()
            .map(|&(s, size, topics, iterations, repeat)| {
                let settings = CellSettings {
                    topics,
                    iterations,
                    seed: cell_seed(config.base_seed, size, topics, iterations, repeat),
                    min_count: config.min_count,
                    fold_in_mode: config.fold_in_mode,
                    classifier_params: config.classifier_params.clone(),
                };
                let (train_corpus, test_corpus) = &splits[s];
                evaluate_cell(train_corpus, test_corpus, &settings, &config.classifiers).map_err(|e| {
                    Error::Cell {
                        train_size: size,
                        topics,
                        iterations,
                        repeat,
                        source: Box::new(e),
                    }
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let cells = points
        .iter()
        .zip(scored)
        .flat_map(|(&(_, size, topics, iterations, repeat), scores)| {
            scores.into_iter().map(move |score| Cell {
                train_size: size,
                topics,
                iterations,
                repeat,
                classifier: score.classifier,
                accuracy_pct: score.accuracy_pct,
                seconds: if config.record_time { score.seconds } else { 0.0 },
            })
        })
        .collect();

    Ok(ExperimentReport {
        cells,
        metadata: ReportMetadata {
            base_seed: config.base_seed,
            split_seed: split_seed(config.base_seed),
            corpus_fingerprint: corpus_fingerprint(corpus),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    #[test]
    fn default_grid_has_252_cells() {
        assert_eq!(ExperimentConfig::default().cell_count(), 252);
        let single = ExperimentConfig {
            topic_counts: vec![4],
            iteration_counts: vec![10],
            train_sizes: vec![400],
            repeats: 1,
            classifiers: vec![ClassifierKind::Logistic],
            ..ExperimentConfig::default()
        };
        assert_eq!(single.cell_count(), 1);
        let shrunk = ExperimentConfig {
            iteration_counts: vec![1, 20],
            ..ExperimentConfig::default()
        };
        assert_eq!(shrunk.cell_count(), 252 / 7 * 2);
    }

    #[test]
    fn validation() {
        let config = ExperimentConfig::default();
        assert!(config.validate(4).is_ok());
        assert!(config.validate(3).is_err());
        let empty = ExperimentConfig {
            topic_counts: vec![],
            ..ExperimentConfig::default()
        };
        assert!(empty.validate(4).is_err());
    }

    #[test]
    fn kv_config_parsing() {
        let text = "# grid\ntopics=2, 3\niterations=1,20\ntrain-sizes=8\nrepeats=1\n\
                    classifiers=logistic\nseed=9\nfold_in_mode=types\njobs=2\n";
        let config = ExperimentConfig::from_kv_text(text).unwrap();
        assert_eq!(config.topic_counts, vec![2, 3]);
        assert_eq!(config.iteration_counts, vec![1, 20]);
        assert_eq!(config.train_sizes, vec![8]);
        assert_eq!(config.classifiers, vec![ClassifierKind::Logistic]);
        assert_eq!(config.base_seed, 9);
        assert_eq!(config.fold_in_mode, FoldInMode::Types);
        assert_eq!(config.jobs, Some(2));
        assert!(ExperimentConfig::from_kv_text("bogus=1").is_err());
        assert!(ExperimentConfig::from_kv_text("topics").is_err());
        assert!(ExperimentConfig::from_kv_text("topics=a").is_err());
    }

    #[test]
    fn cell_seeds_differ_by_axis() {
        let base = cell_seed(1, 400, 3, 5, 1);
        assert_eq!(base, cell_seed(1, 400, 3, 5, 1));
        for other in [
            cell_seed(2, 400, 3, 5, 1),
            cell_seed(1, 700, 3, 5, 1),
            cell_seed(1, 400, 4, 5, 1),
            cell_seed(1, 400, 3, 7, 1),
            cell_seed(1, 400, 3, 5, 2),
        ] {
            assert_ne!(base, other);
        }
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = Corpus::new(vec![Document::new("x/1", "x", vec!["ab".into()])]).unwrap();
        let b = Corpus::new(vec![Document::new("x/1", "x", vec!["a".into(), "b".into()])]).unwrap();
        assert_eq!(corpus_fingerprint(&a).len(), 64);
        assert_ne!(corpus_fingerprint(&a), corpus_fingerprint(&b));
    }
}
