//! Test-only oracles, independent of the library's optimized code paths.
#![allow(dead_code)]

use plsa_core::corpus::CountMatrix;
use plsa_core::plsa::PlsaModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tables as plain nested vectors: `p_z[z]`, `p_d_z[z][d]`, `p_w_z[z][w]`.
#[derive(Debug, Clone)]
pub struct DenseTables {
    pub p_z: Vec<f64>,
    pub p_d_z: Vec<Vec<f64>>,
    pub p_w_z: Vec<Vec<f64>>,
}

impl DenseTables {
    pub fn of(model: &PlsaModel) -> Self {
        Self {
            p_z: model.p_z().to_vec(),
            p_d_z: (0..model.k()).map(|z| model.p_d_given_z(z).to_vec()).collect(),
            p_w_z: (0..model.k()).map(|z| model.p_w_given_z(z).to_vec()).collect(),
        }
    }
}

/// One EM sweep written directly from the update equations: materialize the
/// full posterior tensor P(z|d,w), then form each M-step sum with plain loops.
pub fn brute_force_em_sweep(model: &PlsaModel, counts: &[Vec<u32>]) -> DenseTables {
    let t = DenseTables::of(model);
    let k = t.p_z.len();
    let d_n = counts.len();
    let w_n = counts[0].len();

    let mut post = vec![vec![vec![0.0; k]; w_n]; d_n];
    for d in 0..d_n {
        for w in 0..w_n {
            let denom: f64 = (0..k).map(|z| t.p_z[z] * t.p_d_z[z][d] * t.p_w_z[z][w]).sum();
            for z in 0..k {
                post[d][w][z] = t.p_z[z] * t.p_d_z[z][d] * t.p_w_z[z][w] / denom;
            }
        }
    }

    let mut p_w_z = vec![vec![0.0; w_n]; k];
    let mut p_d_z = vec![vec![0.0; d_n]; k];
    let mut p_z = vec![0.0; k];
    for z in 0..k {
        for w in 0..w_n {
            p_w_z[z][w] = (0..d_n).map(|d| counts[d][w] as f64 * post[d][w][z]).sum();
        }
        for d in 0..d_n {
            p_d_z[z][d] = (0..w_n).map(|w| counts[d][w] as f64 * post[d][w][z]).sum();
        }
        p_z[z] = (0..d_n)
            .flat_map(|d| (0..w_n).map(move |w| (d, w)))
            .map(|(d, w)| counts[d][w] as f64 * post[d][w][z])
            .sum();
    }
    for z in 0..k {
        let sw: f64 = p_w_z[z].iter().sum();
        p_w_z[z].iter_mut().for_each(|v| *v /= sw);
        let sd: f64 = p_d_z[z].iter().sum();
        p_d_z[z].iter_mut().for_each(|v| *v /= sd);
    }
    let sz: f64 = p_z.iter().sum();
    p_z.iter_mut().for_each(|v| *v /= sz);
    DenseTables { p_z, p_d_z, p_w_z }
}

/// Σ_{d,w} n(d,w) log Σ_z P(z)P(d|z)P(w|z) by a dense double loop.
pub fn brute_force_log_likelihood(model: &PlsaModel, counts: &[Vec<u32>]) -> f64 {
    let t = DenseTables::of(model);
    let mut total = 0.0;
    for (d, row) in counts.iter().enumerate() {
        for (w, &n) in row.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let p: f64 = (0..t.p_z.len()).map(|z| t.p_z[z] * t.p_d_z[z][d] * t.p_w_z[z][w]).sum();
            total += n as f64 * p.ln();
        }
    }
    total
}

pub fn max_abs_diff(a: &DenseTables, b: &DenseTables) -> f64 {
    let pairs = a
        .p_z
        .iter()
        .zip(&b.p_z)
        .chain(a.p_d_z.iter().flatten().zip(b.p_d_z.iter().flatten()))
        .chain(a.p_w_z.iter().flatten().zip(b.p_w_z.iter().flatten()));
    pairs.map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Dense counts with every cell in 1..=max.
pub fn random_dense_counts(rng: &mut ChaCha8Rng, docs: usize, words: usize, max: u32) -> Vec<Vec<u32>> {
    (0..docs)
        .map(|_| (0..words).map(|_| rng.gen_range(1..=max)).collect())
        .collect()
}

/// A sparse random corpus: each document draws a few words with counts; every
/// document has at least one nonzero cell.
pub fn random_sparse_counts(seed: u64, max_docs: usize, max_words: usize) -> CountMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs = rng.gen_range(2..=max_docs);
    let words = rng.gen_range(2..=max_words);
    let mut entries = Vec::new();
    for d in 0..docs {
        let len = rng.gen_range(1..=words.min(20));
        for _ in 0..len {
            entries.push((d, rng.gen_range(0..words), rng.gen_range(1..=6)));
        }
    }
    CountMatrix::from_entries(docs, words, entries).unwrap()
}

/// Central finite differences of `f` at `x` with step `h`.
pub fn finite_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// ‖a − b‖ / max(‖a‖, ‖b‖).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}
