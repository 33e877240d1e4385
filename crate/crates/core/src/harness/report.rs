use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::classify::{round_percent, ClassifierKind};
use crate::error::{Error, Result};
use crate::foldin::csv_error;

pub const REPORT_HEADER: [&str; 7] = [
    "train_size",
    "topics",
    "iterations",
    "repeat",
    "classifier",
    "accuracy_pct",
    "seconds",
];

const PUBLISHED_TABLES: &str = include_str!("../../data/published_tables.csv");

/// One grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub train_size: usize,
    pub topics: usize,
    pub iterations: usize,
    pub repeat: usize,
    pub classifier: ClassifierKind,
    pub accuracy_pct: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReportMetadata {
    pub base_seed: u64,
    pub split_seed: u64,
    pub corpus_fingerprint: String,
}

impl ReportMetadata {
    pub fn to_kv_text(&self) -> String {
        format!(
            "base_seed={}\nsplit_seed={}\ncell_seed=splitmix64 fold of (train_size, topics, iterations, repeat)\ncorpus_fingerprint={}\n",
            self.base_seed, self.split_seed, self.corpus_fingerprint
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub cells: Vec<Cell>,
    pub metadata: ReportMetadata,
}

pub fn write_report_csv<W: Write>(out: W, cells: &[Cell]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(REPORT_HEADER).map_err(csv_error)?;
    for cell in cells {
        writer
            .write_record([
                cell.train_size.to_string(),
                cell.topics.to_string(),
                cell.iterations.to_string(),
                cell.repeat.to_string(),
                cell.classifier.to_string(),
                cell.accuracy_pct.to_string(),
                cell.seconds.to_string(),
            ])
            .map_err(csv_error)?;
    }
    writer.flush().map_err(|e| Error::Parse(e.to_string()))
}

fn field<T: FromStr>(record: &csv::StringRecord, i: usize) -> Result<T> {
    record[i]
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("report column {}: bad value '{}'", REPORT_HEADER[i], &record[i])))
}

pub fn read_report_csv<R: Read>(input: R) -> Result<Vec<Cell>> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers().map_err(csv_error)?;
    if header.iter().ne(REPORT_HEADER) {
        return Err(Error::Parse(format!("unexpected report header {header:?}")));
    }
    reader
        .records()
        .map(|record| {
            let record = record.map_err(csv_error)?;
            let cell = Cell {
                train_size: field(&record, 0)?,
                topics: field(&record, 1)?,
                iterations: field(&record, 2)?,
                repeat: field(&record, 3)?,
                classifier: field(&record, 4)?,
                accuracy_pct: field(&record, 5)?,
                seconds: field(&record, 6)?,
            };
            if !(0.0..=100.0).contains(&cell.accuracy_pct) {
                return Err(Error::Parse(format!("accuracy {} outside [0, 100]", cell.accuracy_pct)));
            }
            Ok(cell)
        })
        .collect()
}

/// Writes the report CSV to `path`.
pub fn emit_report(report: &ExperimentReport, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_report_csv(file, &report.cells)
}

pub fn load_report(path: &Path) -> Result<Vec<Cell>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_report_csv(file)
}

/// Tables 1 and 2 of the original PLSA classification study, one cell per
/// published accuracy (repeat 1 = first experiment, repeat 2 = second).
pub fn published_tables() -> Vec<Cell> {
    read_report_csv(PUBLISHED_TABLES.as_bytes()).expect("bundled fixture parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummaryAxis {
    TopicCount,
    Classifier,
    TrainSize,
    Iterations,
}

impl SummaryAxis {
    pub const ALL: [SummaryAxis; 4] = [
        SummaryAxis::TopicCount,
        SummaryAxis::Classifier,
        SummaryAxis::TrainSize,
        SummaryAxis::Iterations,
    ];

    fn key(self, cell: &Cell) -> String {
        match self {
            SummaryAxis::TopicCount => cell.topics.to_string(),
            SummaryAxis::Classifier => cell.classifier.to_string(),
            SummaryAxis::TrainSize => cell.train_size.to_string(),
            SummaryAxis::Iterations => cell.iterations.to_string(),
        }
    }
}

impl fmt::Display for SummaryAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SummaryAxis::TopicCount => "topic_count",
            SummaryAxis::Classifier => "classifier",
            SummaryAxis::TrainSize => "train_size",
            SummaryAxis::Iterations => "iterations",
        })
    }
}

impl FromStr for SummaryAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topic_count" | "topics" => Ok(SummaryAxis::TopicCount),
            "classifier" => Ok(SummaryAxis::Classifier),
            "train_size" => Ok(SummaryAxis::TrainSize),
            "iterations" => Ok(SummaryAxis::Iterations),
            other => Err(Error::InvalidArgument(format!("unknown summary axis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupMean {
    pub value: String,
    pub mean: f64,
    pub cells: usize,
    pub min: f64,
    pub max: f64,
}

impl GroupMean {
    /// The mean at integer-percent display precision.
    pub fn rounded(&self) -> i64 {
        round_percent(self.mean)
    }
}

/// Mean accuracy per value of `axis`, groups in order of first appearance.
pub fn summarize(cells: &[Cell], axis: SummaryAxis) -> Result<Vec<GroupMean>> {
    if cells.is_empty() {
        return Err(Error::InvalidArgument("nothing to summarize".into()));
    }
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for cell in cells {
        let key = axis.key(cell);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, values)) => values.push(cell.accuracy_pct),
            None => groups.push((key, vec![cell.accuracy_pct])),
        }
    }
    Ok(groups
        .into_iter()
        .map(|(value, acc)| GroupMean {
            value,
            mean: acc.iter().sum::<f64>() / acc.len() as f64,
            cells: acc.len(),
            min: acc.iter().copied().fold(f64::INFINITY, f64::min),
            max: acc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect())
}
