//! End-to-end acceptance checks. Each check prints one PASS/FAIL line to
//! stderr (visible with or without `--nocapture`) and the test fails if any
//! check fails.

mod common;

use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{
    brute_force_em_sweep, finite_difference, max_abs_diff, random_dense_counts, random_sparse_counts,
    relative_error, DenseTables,
};
use plsa_core::classify::{
    hinge_gradient, hinge_objective, logistic_gradient, logistic_objective, ClassifierKind, LabeledFeatures,
};
use plsa_core::corpus::{
    build_count_matrix, build_vocabulary, default_stoplist, split_train_test, CountMatrix, Document,
};
use plsa_core::foldin::{fold_in_with, FoldInMode};
use plsa_core::harness::{
    emit_report, generate_corpus, load_report, published_tables, run_cell, summarize, Cell, CellSettings,
    ExperimentReport, ReportMetadata, SummaryAxis, SynthConfig,
};
use plsa_core::plsa::{
    e_step_posterior, init_model, load_model, m_step, parameter_count, save_model, train, ModelFile, PlsaModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const AGGREGATE_BUDGET: Duration = Duration::from_secs(1);
const MONOTONE_CORPORA: u64 = 60;
const MONOTONE_SLACK: f64 = 1e-9;
const MONOTONE_BUDGET: Duration = Duration::from_secs(30);
const ORACLE_TOL: f64 = 1e-12;
const NORMALIZATION_TOL: f64 = 1e-10;
const RECOVERY_THRESHOLD: f64 = 95.0;
const RECOVERY_MIN_SEEDS: usize = 9;
const RECOVERY_BUDGET: Duration = Duration::from_secs(60);
const TREND_MIN_GAIN: f64 = 10.0;
const GRADIENT_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn synthetic(shared_fraction: f64, seed: u64) -> plsa_core::corpus::Corpus {
    let config = SynthConfig { docs_per_category: 100, shared_fraction, seed, ..SynthConfig::default() };
    generate_corpus(&config, &default_stoplist()).unwrap()
}

fn aggregate_reproduction() -> Outcome {
    let start = Instant::now();
    let cells = published_tables();
    let expected: [(SummaryAxis, &[(&str, i64)]); 4] = [
        (
            SummaryAxis::Iterations,
            &[("1", 35), ("3", 43), ("5", 47), ("7", 52), ("9", 53), ("10", 57), ("20", 65)],
        ),
        (SummaryAxis::TopicCount, &[("3", 47), ("4", 52), ("5", 52)]),
        (SummaryAxis::Classifier, &[("svm", 45), ("logistic", 55)]),
        (SummaryAxis::TrainSize, &[("400", 51), ("700", 52), ("1000", 48)]),
    ];
    let mut mismatches = Vec::new();
    for (axis, targets) in expected {
        let groups = summarize(&cells, axis).map_err(|e| e.to_string())?;
        if groups.len() != targets.len() {
            mismatches.push(format!("{axis}: {} groups", groups.len()));
        }
        for (value, target) in targets {
            match groups.iter().find(|g| g.value == *value) {
                Some(g) if g.rounded() == *target && (g.mean - *target as f64).abs() <= 0.5 => {}
                Some(g) => mismatches.push(format!("{axis}={value}: {:.3} vs {target}", g.mean)),
                None => mismatches.push(format!("{axis}={value}: missing")),
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        mismatches.is_empty() && elapsed < AGGREGATE_BUDGET,
        format!("{} cells, {elapsed:.2?}, mismatches {mismatches:?}", cells.len()),
    )
}

fn em_monotonicity() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    for seed in 0..MONOTONE_CORPORA {
        let counts = random_sparse_counts(seed, 50, 100);
        let k = [2, 3, 5][seed as usize % 3];
        let (_, trace) = train(&counts, k, 25, seed).map_err(|e| e.to_string())?;
        if !trace.is_non_decreasing(MONOTONE_SLACK) {
            failures.push(seed);
        }
    }
    let elapsed = start.elapsed();
    check(
        failures.is_empty() && elapsed < MONOTONE_BUDGET,
        format!("{MONOTONE_CORPORA} corpora, {elapsed:.2?}, non-monotone seeds {failures:?}"),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for docs in 1..=6 {
        for words in 1..=6 {
            for k in 1..=3 {
                let dense = random_dense_counts(&mut rng, docs, words, 7);
                let counts = CountMatrix::from_dense(&dense).map_err(|e| e.to_string())?;
                let init = init_model(docs, words, k, rng.gen()).map_err(|e| e.to_string())?;
                let fast = DenseTables::of(&m_step(&init, &counts).map_err(|e| e.to_string())?);
                worst = worst.max(max_abs_diff(&fast, &brute_force_em_sweep(&init, &dense)));
                cases += 1;
            }
        }
    }
    check(worst <= ORACLE_TOL, format!("{cases} cases, max deviation {worst:e}"))
}

fn table_deviation(model: &PlsaModel) -> f64 {
    let mut worst = (model.p_z().iter().sum::<f64>() - 1.0).abs();
    for z in 0..model.k() {
        worst = worst.max((model.p_d_given_z(z).iter().sum::<f64>() - 1.0).abs());
        worst = worst.max((model.p_w_given_z(z).iter().sum::<f64>() - 1.0).abs());
    }
    worst
}

fn normalization() -> Outcome {
    let corpus = synthetic(0.3, 11);
    let (train_docs, test_docs) = split_train_test(&corpus, 40, 10, 11).map_err(|e| e.to_string())?;
    let vocab = build_vocabulary(&train_docs, 1);
    let counts = build_count_matrix(&train_docs, &vocab);
    let mut model = init_model(counts.n_docs(), counts.n_words(), 5, 11).map_err(|e| e.to_string())?;
    let mut tables = table_deviation(&model);
    for _ in 0..20 {
        model = m_step(&model, &counts).map_err(|e| e.to_string())?;
        tables = tables.max(table_deviation(&model));
    }
    let mut posteriors = 0.0f64;
    for d in 0..counts.n_docs() {
        for w in 0..counts.n_words() {
            let post = e_step_posterior(&model, d, w).map_err(|e| e.to_string())?;
            posteriors = posteriors.max((post.iter().sum::<f64>() - 1.0).abs());
        }
    }
    let mut docs: Vec<Document> = test_docs.documents().to_vec();
    docs.push(Document::new("kosong", "x", vec!["zzzz".into()]));
    let mut fold = 0.0f64;
    for doc in &docs {
        for mode in [FoldInMode::Occurrences, FoldInMode::Types] {
            let v = fold_in_with(&model, &vocab, doc, mode);
            fold = fold.max((v.probs.iter().sum::<f64>() - 1.0).abs());
        }
    }
    let worst = tables.max(posteriors).max(fold);
    check(
        worst <= NORMALIZATION_TOL,
        format!("tables {tables:e}, posteriors {posteriors:e}, fold-in {fold:e}"),
    )
}

fn synthetic_recovery() -> Outcome {
    let start = Instant::now();
    let mut scores = Vec::new();
    for seed in 0..10 {
        let corpus = synthetic(0.0, seed);
        let (tr, te) = split_train_test(&corpus, 75, 25, seed).map_err(|e| e.to_string())?;
        let acc = run_cell(&tr, &te, &CellSettings::new(4, 20, seed), ClassifierKind::Logistic)
            .map_err(|e| e.to_string())?;
        scores.push(acc);
    }
    let passing = scores.iter().filter(|&&a| a >= RECOVERY_THRESHOLD).count();
    let elapsed = start.elapsed();
    check(
        passing >= RECOVERY_MIN_SEEDS && elapsed < RECOVERY_BUDGET,
        format!("{passing}/10 seeds >= {RECOVERY_THRESHOLD}%, {elapsed:.2?}, accuracies {scores:?}"),
    )
}

fn iteration_trend() -> Outcome {
    let mut early = 0.0;
    let mut late = 0.0;
    for seed in 0..5 {
        let corpus = synthetic(0.3, 100 + seed);
        let (tr, te) = split_train_test(&corpus, 75, 25, seed).map_err(|e| e.to_string())?;
        for (iterations, total) in [(1, &mut early), (20, &mut late)] {
            *total += run_cell(&tr, &te, &CellSettings::new(4, iterations, seed), ClassifierKind::Logistic)
                .map_err(|e| e.to_string())?
                / 5.0;
        }
    }
    check(
        late - early >= TREND_MIN_GAIN,
        format!("mean {early:.1}% at 1 iteration, {late:.1}% at 20, gain {:.1}", late - early),
    )
}

fn parameter_count_check() -> Outcome {
    let n = parameter_count(100, 1000, 10);
    check(n == 11000, format!("parameter_count(100, 1000, 10) = {n}"))
}

fn run_plsa(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_plsa")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn cell_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = dir.path().join("corpus");
    let corpus = corpus.to_str().unwrap();
    run_plsa(&["gen-synth", "--out", corpus, "--shared-fraction", "0.3", "--seed", "4"])?;
    let mut compared = 0;
    for classifier in ["logistic", "svm"] {
        let mut outputs = Vec::new();
        for jobs in ["1", "4", "1"] {
            let path = dir.path().join(format!("{classifier}-{jobs}-{}.csv", outputs.len()));
            let stdout = run_plsa(&[
                "cell", "--corpus", corpus, "--train-size", "200", "--topics", "4", "--iterations", "10",
                "--repeat", "2", "--classifier", classifier, "--seed", "9", "--jobs", jobs, "--out",
                path.to_str().unwrap(),
            ])?;
            outputs.push((stdout, std::fs::read(&path).map_err(|e| e.to_string())?));
        }
        if outputs.windows(2).any(|w| w[0] != w[1]) {
            return Err(format!("{classifier}: outputs differ"));
        }
        compared += outputs.len();
    }
    Ok(format!("{compared} runs across --jobs 1/4 byte-identical"))
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_logistic = 0.0f64;
    let mut worst_hinge = 0.0f64;
    let mut hinge_points = 0;
    for trial in 0..5 {
        let rows = (0..48)
            .map(|i| ((0..5).map(|_| rng.gen::<f64>()).collect(), format!("c{}", i % 4)))
            .collect();
        let data = LabeledFeatures::new(rows).map_err(|e| e.to_string())?;
        let weights: Vec<Vec<f64>> =
            (0..4).map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let flat: Vec<f64> = weights.iter().flatten().copied().collect();
        let numeric = finite_difference(&flat, FD_STEP, |v| {
            let w: Vec<Vec<f64>> = v.chunks(6).map(<[f64]>::to_vec).collect();
            logistic_objective(&w, &data, 0.01)
        });
        let analytic: Vec<f64> = logistic_gradient(&weights, &data, 0.01).into_iter().flatten().collect();
        worst_logistic = worst_logistic.max(relative_error(&analytic, &numeric));

        let positive = trial % 4;
        let mut tries = 0;
        while tries < 4 {
            let row: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let near_kink = data.rows().iter().any(|(x, _)| {
                let s: f64 = row[..5].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + row[5];
                (s.abs() - 1.0).abs() < 1e-3
            });
            if near_kink {
                continue;
            }
            let numeric = finite_difference(&row, FD_STEP, |w| hinge_objective(w, &data, positive, 1.0));
            let analytic = hinge_gradient(&row, &data, positive, 1.0);
            worst_hinge = worst_hinge.max(relative_error(&analytic, &numeric));
            hinge_points += 1;
            tries += 1;
        }
    }
    check(
        worst_logistic <= GRADIENT_TOL && worst_hinge <= GRADIENT_TOL,
        format!("logistic {worst_logistic:e}, hinge {worst_hinge:e} over {hinge_points} points"),
    )
}

fn round_trips() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = synthetic(0.3, 3);
    let vocab = build_vocabulary(&corpus, 1);
    let counts = build_count_matrix(&corpus, &vocab);
    let (model, _) = train(&counts, 5, 7, 3).map_err(|e| e.to_string())?;
    let file = ModelFile { model, vocab, seed: 3, iterations: 7 };
    let model_path = dir.path().join("model.txt");
    save_model(&model_path, &file).map_err(|e| e.to_string())?;
    let model_ok = load_model(&model_path).map_err(|e| e.to_string())? == file;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cells = published_tables();
    for i in 0..50 {
        cells.push(Cell {
            train_size: 4 * (i + 1),
            topics: 1 + i % 7,
            iterations: 1 + i,
            repeat: 1 + i % 3,
            classifier: if i % 2 == 0 { ClassifierKind::Svm } else { ClassifierKind::Logistic },
            accuracy_pct: rng.gen_range(0.0..=100.0),
            seconds: rng.gen::<f64>() * 1e3,
        });
    }
    cells.push(Cell { accuracy_pct: 100.0 / 3.0, seconds: 1e-17, ..cells[0] });
    let report = ExperimentReport { cells, metadata: ReportMetadata::default() };
    let report_path = dir.path().join("report.csv");
    emit_report(&report, &report_path).map_err(|e| e.to_string())?;
    let parsed = load_report(&report_path).map_err(|e| e.to_string())?;
    let report_ok = parsed == report.cells;
    check(
        model_ok && report_ok,
        format!("model exact: {model_ok}, {} report cells exact: {report_ok}", report.cells.len()),
    )
}

fn report_line(out: &mut impl Write, index: usize, name: &str, outcome: &Outcome) {
    let (status, detail) = match outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    let _ = writeln!(out, "[{status}] {index:>2} {name}: {detail}");
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("aggregate reproduction", aggregate_reproduction),
        ("EM monotonicity", em_monotonicity),
        ("oracle equivalence", oracle_equivalence),
        ("normalization", normalization),
        ("synthetic recovery", synthetic_recovery),
        ("iteration trend", iteration_trend),
        ("parameter count", parameter_count_check),
        ("cell determinism", cell_determinism),
        ("gradient checks", gradient_checks),
        ("serialization round trip", round_trips),
    ];
    let stderr = std::io::stderr();
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        report_line(&mut stderr.lock(), i + 1, name, &outcome);
        if outcome.is_err() {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
