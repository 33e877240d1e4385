use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use plsa_core::classify::{
    accuracy, confusion_matrix, round_percent, train_classifier, write_arff, ClassifierKind,
    ClassifierParams, LabeledFeatures,
};
use plsa_core::corpus::{
    build_count_matrix, build_vocabulary, default_stoplist, load_corpus, load_stoplist,
    split_train_test, Corpus,
};
use plsa_core::foldin::{
    fold_in_corpus, read_feature_csv, write_feature_csv, FeatureRow, FoldInMode, TopicFeatureVector,
};
use plsa_core::harness::{
    self, cell_seed, emit_report, evaluate_cell, load_report, published_tables, run_grid, split_seed,
    summarize, write_report_csv, Cell, CellSettings, ExperimentConfig, SummaryAxis, SynthConfig,
};
use plsa_core::plsa::{doc_topic_features, load_model, parameter_count, save_model, train_with, ModelFile, TrainOptions};
use plsa_core::{Error, Result};

#[derive(Parser)]
#[command(name = "plsa", version, about = "PLSA topic models for document classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize a corpus and write its vocabulary and token lists.
    Preprocess {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a corpus directory.
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = 4)]
        topics: usize,
        #[arg(long, default_value_t = 20)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stop early when the relative log-likelihood gain falls below this.
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Write `iteration,log_likelihood` rows here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the training documents' P(z|d) features here (feature CSV).
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Project documents into the topic space of a trained model.
    FoldIn {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_parser = parse_mode, default_value = "occurrences")]
        mode: FoldInMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier on one feature CSV and score it on another.
    Classify {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value = "logistic")]
        classifier: ClassifierKind,
        #[command(flatten)]
        params: ClassifierArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also export both feature sets as ARFF (`<prefix>.train.arff`, `<prefix>.test.arff`).
        #[arg(long)]
        arff: Option<PathBuf>,
    },
    /// Run one grid cell and print its report row.
    Cell {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        train_size: usize,
        #[arg(long)]
        topics: usize,
        #[arg(long)]
        iterations: usize,
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        #[arg(long, default_value = "logistic")]
        classifier: ClassifierKind,
        /// Base seed; the cell seed is derived from it as in `grid`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 25)]
        test_per_category: usize,
        #[arg(long, value_parser = parse_mode, default_value = "occurrences")]
        mode: FoldInMode,
        #[command(flatten)]
        params: ClassifierArgs,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        record_time: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full experiment grid.
    Grid(GridArgs),
    /// Mean accuracy per axis value of a report (or of the bundled published tables).
    Summarize {
        #[arg(long, required_unless_present = "published_tables")]
        report: Option<PathBuf>,
        #[arg(long)]
        published_tables: bool,
        /// One of topic_count, classifier, train_size, iterations; all when omitted.
        #[arg(long)]
        axis: Option<SummaryAxis>,
    },
    /// Write a synthetic labelled corpus directory.
    GenSynth(SynthArgs),
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Stoplist file; the bundled Indonesian list is used when omitted.
    #[arg(long)]
    stoplist: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    min_count: usize,
}

#[derive(Args)]
struct ClassifierArgs {
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 500)]
    logistic_epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 1.0)]
    svm_c: f64,
    #[arg(long, default_value_t = 500)]
    svm_epochs: usize,
}

impl From<&ClassifierArgs> for ClassifierParams {
    fn from(a: &ClassifierArgs) -> Self {
        ClassifierParams {
            learning_rate: a.learning_rate,
            logistic_epochs: a.logistic_epochs,
            l2: a.l2,
            svm_c: a.svm_c,
            svm_epochs: a.svm_epochs,
        }
    }
}

/// Flags override values from `--config`.
#[derive(Args)]
struct GridArgs {
    /// `key=value` file with the same keys as the long flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    stoplist: Option<PathBuf>,
    /// Comma-separated topic counts.
    #[arg(long)]
    topics: Option<String>,
    /// Comma-separated iteration counts.
    #[arg(long)]
    iterations: Option<String>,
    /// Comma-separated total training sizes.
    #[arg(long)]
    train_sizes: Option<String>,
    #[arg(long)]
    repeats: Option<String>,
    /// Comma-separated classifiers (svm, logistic).
    #[arg(long)]
    classifiers: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    test_per_category: Option<String>,
    #[arg(long)]
    min_count: Option<String>,
    #[arg(long)]
    fold_in_mode: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    logistic_epochs: Option<String>,
    #[arg(long)]
    l2: Option<String>,
    #[arg(long)]
    svm_c: Option<String>,
    #[arg(long)]
    svm_epochs: Option<String>,
    #[arg(long)]
    jobs: Option<String>,
    #[arg(long)]
    record_time: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    categories: usize,
    #[arg(long, default_value_t = 100)]
    docs_per_category: usize,
    #[arg(long, default_value_t = 15)]
    topic_words: usize,
    /// Fraction of each topic vocabulary shared by all categories.
    #[arg(long, default_value_t = 0.0)]
    shared_fraction: f64,
    #[arg(long, default_value_t = 3)]
    sources: usize,
    /// Source `s` is drawn with weight `balance^s`; 1.0 is balanced.
    #[arg(long, default_value_t = 1.0)]
    source_balance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_mode(s: &str) -> std::result::Result<FoldInMode, String> {
    match s {
        "occurrences" => Ok(FoldInMode::Occurrences),
        "types" => Ok(FoldInMode::Types),
        other => Err(format!("unknown fold-in mode '{other}' (occurrences or types)")),
    }
}

fn stoplist(path: Option<&Path>) -> Result<HashSet<String>> {
    path.map_or_else(|| Ok(default_stoplist()), load_stoplist)
}

fn read_corpus(args: &CorpusArgs) -> Result<Corpus> {
    let corpus = load_corpus(&args.corpus, &stoplist(args.stoplist.as_deref())?)?;
    info!("loaded {} documents from {}", corpus.len(), args.corpus.display());
    Ok(corpus)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |e| Error::Io { path: path.to_path_buf(), source: e }
}

fn preprocess(args: &CorpusArgs, out: &Path) -> Result<()> {
    let corpus = read_corpus(args)?;
    let vocab = build_vocabulary(&corpus, args.min_count);
    let counts = build_count_matrix(&corpus, &vocab);
    fs::create_dir_all(out).map_err(io_at(out))?;

    let vocab_path = out.join("vocab.txt");
    let mut w = create(&vocab_path)?;
    for word in vocab.words() {
        writeln!(w, "{word}").map_err(io_at(&vocab_path))?;
    }
    w.flush().map_err(io_at(&vocab_path))?;

    let docs_path = out.join("docs.tsv");
    let mut w = create(&docs_path)?;
    for doc in corpus.documents() {
        writeln!(w, "{}\t{}\t{}", doc.id, doc.category, doc.tokens.join(" ")).map_err(io_at(&docs_path))?;
    }
    w.flush().map_err(io_at(&docs_path))?;

    println!("documents\t{}", corpus.len());
    println!("categories\t{}", corpus.categories().iter().cloned().collect::<Vec<_>>().join(","));
    println!("tokens\t{}", corpus.token_count());
    println!("vocabulary\t{}", vocab.len());
    println!("nonzero_cells\t{}", counts.nnz());
    println!("dense_cells\t{}", counts.capacity());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    args: &CorpusArgs,
    topics: usize,
    iterations: usize,
    seed: u64,
    tolerance: Option<f64>,
    out: &Path,
    trace_path: Option<&Path>,
    features_path: Option<&Path>,
) -> Result<()> {
    let corpus = read_corpus(args)?;
    let vocab = build_vocabulary(&corpus, args.min_count);
    let counts = build_count_matrix(&corpus, &vocab);
    let options = TrainOptions { k: topics, iterations, seed, tolerance };
    let (model, trace) = train_with(&counts, &options)?;
    save_model(
        out,
        &ModelFile { model: model.clone(), vocab: vocab.clone(), seed, iterations: trace.entries.len() },
    )?;

    if let Some(path) = trace_path {
        let mut w = create(path)?;
        writeln!(w, "iteration,log_likelihood").map_err(io_at(path))?;
        for (i, ll) in &trace.entries {
            writeln!(w, "{i},{ll}").map_err(io_at(path))?;
        }
        w.flush().map_err(io_at(path))?;
    }
    if let Some(path) = features_path {
        let rows: Vec<FeatureRow> = doc_topic_features(&model)
            .into_iter()
            .zip(corpus.documents())
            .map(|(probs, doc)| FeatureRow {
                doc_id: doc.id.clone(),
                category: doc.category.clone(),
                features: TopicFeatureVector {
                    probs,
                    n_matched: doc.tokens.iter().filter(|t| vocab.get(t).is_some()).count(),
                    n_total: doc.tokens.len(),
                },
            })
            .collect();
        write_feature_csv(create(path)?, &rows)?;
    }
    println!(
        "trained K={topics} on D={} W={} ({} parameters vs {} dense cells); final log-likelihood {}",
        counts.n_docs(),
        counts.n_words(),
        parameter_count(counts.n_docs(), counts.n_words(), topics),
        counts.capacity(),
        trace.last().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn fold_in_cmd(model_path: &Path, args: &CorpusArgs, mode: FoldInMode, out: &Path) -> Result<()> {
    let file = load_model(model_path)?;
    let corpus = read_corpus(args)?;
    let rows: Vec<FeatureRow> = fold_in_corpus(&file.model, &file.vocab, &corpus, mode)
        .into_iter()
        .zip(corpus.documents())
        .map(|((features, category), doc)| FeatureRow { doc_id: doc.id.clone(), category, features })
        .collect();
    let fallbacks = rows.iter().filter(|r| r.features.is_fallback()).count();
    write_feature_csv(create(out)?, &rows)?;
    println!("folded in {} documents ({fallbacks} without in-vocabulary tokens)", rows.len());
    Ok(())
}

fn read_features(path: &Path) -> Result<Vec<FeatureRow>> {
    read_feature_csv(File::open(path).map_err(io_at(path))?)
}

fn classify_cmd(
    train_path: &Path,
    test_path: &Path,
    kind: ClassifierKind,
    params: &ClassifierParams,
    seed: u64,
    arff: Option<&Path>,
) -> Result<()> {
    let train_rows = read_features(train_path)?;
    let test_rows = read_features(test_path)?;
    let train = LabeledFeatures::new(
        train_rows.iter().map(|r| (r.features.probs.clone(), r.category.clone())).collect(),
    )?;
    let classifier = train_classifier(kind, &train, params, seed)?;
    let predictions = test_rows
        .iter()
        .map(|r| classifier.predict(&r.features.probs))
        .collect::<Result<Vec<_>>>()?;
    let gold: Vec<&str> = test_rows.iter().map(|r| r.category.as_str()).collect();
    let acc = accuracy(&predictions, &gold)?;

    let mut labels = classifier.label_set.clone();
    for g in &gold {
        if !labels.iter().any(|l| l == g) {
            labels.push(g.to_string());
        }
    }
    let confusion = confusion_matrix(&predictions, &gold, &labels)?;
    println!("classifier\t{kind}");
    println!("accuracy_pct\t{acc}\t({}%)", round_percent(acc));
    println!("gold\\predicted\t{}", labels.join("\t"));
    for (label, row) in labels.iter().zip(&confusion) {
        let cells: Vec<String> = row.iter().map(usize::to_string).collect();
        println!("{label}\t{}", cells.join("\t"));
    }

    if let Some(prefix) = arff {
        let test = LabeledFeatures::with_label_set(
            test_rows.iter().map(|r| (r.features.probs.clone(), r.category.clone())).collect(),
            labels.clone(),
        )?;
        let train = LabeledFeatures::with_label_set(
            train_rows.iter().map(|r| (r.features.probs.clone(), r.category.clone())).collect(),
            labels,
        )?;
        for (suffix, data) in [("train", &train), ("test", &test)] {
            let path = PathBuf::from(format!("{}.{suffix}.arff", prefix.display()));
            let mut w = create(&path)?;
            write_arff(&mut w, "plsa_topics", data)
                .and_then(|_| w.flush())
                .map_err(io_at(&path))?;
        }
    }
    Ok(())
}

fn write_cells(out: Option<&Path>, cells: &[Cell]) -> Result<()> {
    match out {
        Some(path) => write_report_csv(create(path)?, cells),
        None => write_report_csv(io::stdout().lock(), cells),
    }
}

#[allow(clippy::too_many_arguments)]
fn cell_cmd(
    args: &CorpusArgs,
    train_size: usize,
    topics: usize,
    iterations: usize,
    repeat: usize,
    classifier: ClassifierKind,
    seed: u64,
    test_per_category: usize,
    mode: FoldInMode,
    params: ClassifierParams,
    jobs: Option<usize>,
    record_time: bool,
    out: Option<&Path>,
) -> Result<()> {
    let corpus = read_corpus(args)?;
    let n_categories = corpus.categories().len();
    if n_categories == 0 || train_size % n_categories != 0 {
        return Err(Error::InvalidArgument(format!(
            "train size {train_size} is not divisible by {n_categories} categories"
        )));
    }
    let (train, test) =
        split_train_test(&corpus, train_size / n_categories, test_per_category, split_seed(seed))?;
    let settings = CellSettings {
        topics,
        iterations,
        seed: cell_seed(seed, train_size, topics, iterations, repeat),
        min_count: args.min_count,
        fold_in_mode: mode,
        classifier_params: params,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let score = pool.install(|| evaluate_cell(&train, &test, &settings, &[classifier]))?[0];
    let cell = Cell {
        train_size,
        topics,
        iterations,
        repeat,
        classifier,
        accuracy_pct: score.accuracy_pct,
        seconds: if record_time { score.seconds } else { 0.0 },
    };
    write_cells(out, &[cell])
}

fn grid_cmd(args: &GridArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_at(path))?;
            ExperimentConfig::from_kv_text(&text)?
        }
        None => ExperimentConfig::default(),
    };
    let overrides = [
        ("topics", &args.topics),
        ("iterations", &args.iterations),
        ("train_sizes", &args.train_sizes),
        ("repeats", &args.repeats),
        ("classifiers", &args.classifiers),
        ("seed", &args.seed),
        ("test_per_category", &args.test_per_category),
        ("min_count", &args.min_count),
        ("fold_in_mode", &args.fold_in_mode),
        ("learning_rate", &args.learning_rate),
        ("logistic_epochs", &args.logistic_epochs),
        ("l2", &args.l2),
        ("svm_c", &args.svm_c),
        ("svm_epochs", &args.svm_epochs),
        ("jobs", &args.jobs),
    ];
    for (key, value) in overrides {
        if let Some(value) = value {
            config.set(key, value)?;
        }
    }
    if let Some(path) = &args.corpus {
        config.corpus = Some(path.clone());
    }
    if let Some(path) = &args.stoplist {
        config.stoplist = Some(path.clone());
    }
    config.record_time |= args.record_time;

    let root = config
        .corpus
        .clone()
        .ok_or_else(|| Error::InvalidArgument("grid needs --corpus (or corpus= in the config)".into()))?;
    let corpus = load_corpus(&root, &stoplist(config.stoplist.as_deref())?)?;
    info!("running {} cells", config.cell_count());
    let report = run_grid(&config, &corpus)?;
    emit_report(&report, &args.out)?;
    let meta = PathBuf::from(format!("{}.meta", args.out.display()));
    fs::write(&meta, report.metadata.to_kv_text()).map_err(io_at(&meta))?;
    print_summary(&report.cells, None)
}

fn print_summary(cells: &[Cell], axis: Option<SummaryAxis>) -> Result<()> {
    let axes = axis.map_or_else(|| SummaryAxis::ALL.to_vec(), |a| vec![a]);
    let mut lines = vec!["axis,value,mean_pct,rounded_pct,cells".to_string()];
    for axis in axes {
        for group in summarize(cells, axis)? {
            lines.push(format!("{axis},{},{},{},{}", group.value, group.mean, group.rounded(), group.cells));
        }
    }
    let mut out = io::stdout().lock();
    for line in lines {
        match writeln!(out, "{line}") {
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => return Ok(()),
            other => other.map_err(io_at(Path::new("<stdout>")))?,
        }
    }
    Ok(())
}

fn gen_synth(args: &SynthArgs) -> Result<()> {
    let config = SynthConfig {
        categories: args.categories,
        docs_per_category: args.docs_per_category,
        topic_words: args.topic_words,
        shared_fraction: args.shared_fraction,
        sources: args.sources,
        source_balance: args.source_balance,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let docs = harness::generate(&config)?;
    harness::write_corpus(&args.out, &docs)?;
    println!("source,documents,share_pct");
    for (source, n) in harness::synth::source_counts(&docs) {
        println!("{source},{n},{:.1}", 100.0 * n as f64 / docs.len() as f64);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess { corpus, out } => preprocess(&corpus, &out),
        Command::Train { corpus, topics, iterations, seed, tolerance, out, trace, features } => train_cmd(
            &corpus,
            topics,
            iterations,
            seed,
            tolerance,
            &out,
            trace.as_deref(),
            features.as_deref(),
        ),
        Command::FoldIn { model, corpus, mode, out } => fold_in_cmd(&model, &corpus, mode, &out),
        Command::Classify { train, test, classifier, params, seed, arff } => {
            classify_cmd(&train, &test, classifier, &(&params).into(), seed, arff.as_deref())
        }
        Command::Cell {
            corpus,
            train_size,
            topics,
            iterations,
            repeat,
            classifier,
            seed,
            test_per_category,
            mode,
            params,
            jobs,
            record_time,
            out,
        } => cell_cmd(
            &corpus,
            train_size,
            topics,
            iterations,
            repeat,
            classifier,
            seed,
            test_per_category,
            mode,
            (&params).into(),
            jobs,
            record_time,
            out.as_deref(),
        ),
        Command::Grid(args) => grid_cmd(&args),
        Command::Summarize { report, published_tables: use_published, axis } => {
            let cells = match report {
                Some(path) if !use_published => load_report(&path)?,
                _ => published_tables(),
            };
            print_summary(&cells, axis)
        }
        Command::GenSynth(args) => gen_synth(&args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
