//! Versioned text serialization of a trained model.
//!
//! ```text
//! PLSA v1 K=<k> D=<d> W=<w> seed=<s> iters=<n>
//! <W vocabulary lines>
//! <P(z): K values>
//! <K lines of P(w|z), W values each>
//! <K lines of P(d|z), D values each>
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! save/load cycle reproduces every probability bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::PlsaModel;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

/// A model together with its vocabulary and training provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: PlsaModel,
    pub vocab: Vocabulary,
    pub seed: u64,
    pub iterations: usize,
}

fn write_row<W: Write>(out: &mut W, values: &[f64]) -> std::io::Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            out.write_all(b" ")?;
        }
        write!(out, "{v}")?;
        first = false;
    }
    out.write_all(b"\n")
}

pub fn write_model<W: Write>(out: &mut W, file: &ModelFile) -> std::io::Result<()> {
    let m = &file.model;
    writeln!(
        out,
        "PLSA v1 K={} D={} W={} seed={} iters={}",
        m.k(),
        m.n_docs(),
        m.n_words(),
        file.seed,
        file.iterations
    )?;
    for word in file.vocab.words() {
        writeln!(out, "{word}")?;
    }
    write_row(out, m.p_z())?;
    for z in 0..m.k() {
        write_row(out, m.p_w_given_z(z))?;
    }
    for z in 0..m.k() {
        write_row(out, m.p_d_given_z(z))?;
    }
    Ok(())
}

fn header_field<'a>(fields: &mut impl Iterator<Item = &'a str>, key: &str) -> Result<&'a str> {
    fields
        .next()
        .and_then(|f| f.strip_prefix(key)?.strip_prefix('='))
        .ok_or_else(|| Error::Parse(format!("model header: expected {key}=<value>")))
}

fn parse_number<T: std::str::FromStr>(text: &str, what: &str) -> Result<T> {
    text.parse()
        .map_err(|_| Error::Parse(format!("model file: bad {what} '{text}'")))
}

fn parse_row(line: Option<String>, expected: usize, what: &str) -> Result<Vec<f64>> {
    let line = line.ok_or_else(|| Error::Parse(format!("model file: missing {what} row")))?;
    let row = line
        .split_ascii_whitespace()
        .map(|v| parse_number::<f64>(v, what))
        .collect::<Result<Vec<_>>>()?;
    if row.len() != expected {
        return Err(Error::Parse(format!(
            "model file: {what} row has {} values, expected {expected}",
            row.len()
        )));
    }
    Ok(row)
}

pub fn read_model<R: BufRead>(input: R) -> Result<ModelFile> {
    let mut lines = input.lines().map(|l| l.ok());
    let header = lines
        .next()
        .flatten()
        .ok_or_else(|| Error::Parse("model file is empty".into()))?;
    let mut fields = header.split_ascii_whitespace();
    if fields.next() != Some("PLSA") || fields.next() != Some("v1") {
        return Err(Error::Parse(format!("unsupported model header '{header}'")));
    }
    let k: usize = parse_number(header_field(&mut fields, "K")?, "K")?;
    let n_docs: usize = parse_number(header_field(&mut fields, "D")?, "D")?;
    let n_words: usize = parse_number(header_field(&mut fields, "W")?, "W")?;
    let seed: u64 = parse_number(header_field(&mut fields, "seed")?, "seed")?;
    let iterations: usize = parse_number(header_field(&mut fields, "iters")?, "iters")?;

    let mut words = Vec::with_capacity(n_words);
    for _ in 0..n_words {
        let word = lines
            .next()
            .flatten()
            .ok_or_else(|| Error::Parse("model file: truncated vocabulary".into()))?;
        words.push(word);
    }
    let vocab = Vocabulary::from_words(words)?;

    let p_z = parse_row(lines.next().flatten(), k, "P(z)")?;
    let p_w_given_z = (0..k)
        .map(|_| parse_row(lines.next().flatten(), n_words, "P(w|z)"))
        .collect::<Result<Vec<_>>>()?;
    let p_d_given_z = (0..k)
        .map(|_| parse_row(lines.next().flatten(), n_docs, "P(d|z)"))
        .collect::<Result<Vec<_>>>()?;
    let model = PlsaModel::from_tables(p_z, p_d_given_z, p_w_given_z)?;
    Ok(ModelFile {
        model,
        vocab,
        seed,
        iterations,
    })
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<()> {
    let handle = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(handle);
    write_model(&mut out, file)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let handle = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(handle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plsa::init_model;

    fn sample() -> ModelFile {
        ModelFile {
            model: init_model(3, 4, 2, 77).unwrap(),
            vocab: Vocabulary::from_words(
                ["partai", "menang", "pemilu", "suara"].map(String::from).to_vec(),
            )
            .unwrap(),
            seed: 77,
            iterations: 0,
        }
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_model(&mut buf, &sample()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "PLSA v1 K=2 D=3 W=4 seed=77 iters=0");
        assert_eq!(lines[1], "partai");
        // header + 4 words + P(z) + 2 P(w|z) + 2 P(d|z)
        assert_eq!(lines.len(), 10);
    }

    #[test]
    fn round_trip_is_exact() {
        let file = sample();
        let mut buf = Vec::new();
        write_model(&mut buf, &file).unwrap();
        assert_eq!(read_model(buf.as_slice()).unwrap(), file);
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(read_model(&b""[..]).is_err());
        assert!(read_model(&b"PLSA v2 K=1 D=1 W=1 seed=0 iters=1\n"[..]).is_err());
        let truncated = b"PLSA v1 K=1 D=1 W=1 seed=0 iters=1\nword\n1\n1\n";
        assert!(read_model(&truncated[..]).is_err());
        let complete = b"PLSA v1 K=1 D=1 W=1 seed=0 iters=1\nword\n1\n1\n1\n";
        assert!(read_model(&complete[..]).is_ok());
    }
}
