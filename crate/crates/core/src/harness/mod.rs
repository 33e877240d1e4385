//! Experiment protocol: synthetic corpora, the training grid, and reports.

pub mod experiment;
pub mod report;
pub mod synth;

pub use experiment::{
    cell_seed, corpus_fingerprint, evaluate_cell, run_cell, run_grid, split_seed, CellScore,
    CellSettings, ExperimentConfig,
};
pub use report::{
    emit_report, load_report, published_tables, read_report_csv, summarize, write_report_csv, Cell,
    ExperimentReport, GroupMean, ReportMetadata, SummaryAxis,
};
pub use synth::{generate, generate_corpus, write_corpus, SynthConfig, SynthDocument};
