use std::collections::HashMap;

use crate::alphabet::Alphabet;
use crate::error::{invalid, Result};

/// `n` configurations of `p` symbols, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleSet {
    p: usize,
    alphabet: Alphabet,
    data: Vec<u8>,
}

impl SampleSet {
    pub fn new(p: usize, alphabet: Alphabet, data: Vec<u8>) -> Result<Self> {
        if p == 0 {
            return Err(invalid("sample set needs p >= 1"));
        }
        if data.is_empty() || !data.len().is_multiple_of(p) {
            return Err(invalid(format!(
                "sample buffer of length {} is not a nonempty multiple of p = {p}",
                data.len()
            )));
        }
        if let Some(&bad) = data.iter().find(|&&s| !alphabet.contains(s)) {
            return Err(invalid(format!(
                "symbol {bad} out of range for q = {}",
                alphabet.q()
            )));
        }
        Ok(SampleSet { p, alphabet, data })
    }

    pub fn from_rows(p: usize, alphabet: Alphabet, rows: &[Vec<u8>]) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(invalid(format!("row of length {} for p = {p}", r.len())));
        }
        Self::new(p, alphabet, rows.concat())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.p
    }

    pub fn row(&self, t: usize) -> &[u8] {
        &self.data[t * self.p..(t + 1) * self.p]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u8]> + '_ {
        self.data.chunks_exact(self.p)
    }

    pub fn as_flat(&self) -> &[u8] {
        &self.data
    }

    /// The first `n` rows.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n() {
            return Err(invalid(format!("cannot take {n} of {} samples", self.n())));
        }
        Ok(SampleSet {
            p: self.p,
            alphabet: self.alphabet,
            data: self.data[..n * self.p].to_vec(),
        })
    }

    /// Distinct configurations with their empirical frequencies.
    pub fn weighted(&self) -> WeightedConfigs {
        let mut counts: HashMap<&[u8], u64> = HashMap::new();
        for r in self.rows() {
            *counts.entry(r).or_insert(0) += 1;
        }
        let mut distinct: Vec<(&[u8], u64)> = counts.into_iter().collect();
        distinct.sort_unstable_by(|a, b| a.0.cmp(b.0));
        let n = self.n() as f64;
        let mut rows = Vec::with_capacity(distinct.len() * self.p);
        let mut weights = Vec::with_capacity(distinct.len());
        for (r, c) in distinct {
            rows.extend_from_slice(r);
            weights.push(c as f64 / n);
        }
        WeightedConfigs {
            p: self.p,
            alphabet: self.alphabet,
            rows,
            weights,
            total_count: self.n(),
        }
    }
}

/// A finitely supported distribution over configurations: distinct rows with
/// probability weights summing to one.
///
/// Empirical sample sets collapse to this form (duplicate rows merged), and so
/// do exact enumerated distributions. Objectives defined as sample averages
/// are evaluated as weighted sums over it.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedConfigs {
    p: usize,
    alphabet: Alphabet,
    rows: Vec<u8>,
    weights: Vec<f64>,
    // number of raw samples behind the weights; 0 for exact distributions
    total_count: usize,
}

impl WeightedConfigs {
    pub fn new(p: usize, alphabet: Alphabet, rows: Vec<u8>, weights: Vec<f64>) -> Result<Self> {
        if p == 0 || rows.len() != weights.len() * p || weights.is_empty() {
            return Err(invalid("weighted configuration shapes do not agree"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("weights sum to {total}, expected 1")));
        }
        if let Some(&bad) = rows.iter().find(|&&s| !alphabet.contains(s)) {
            return Err(invalid(format!("symbol {bad} out of range")));
        }
        Ok(WeightedConfigs {
            p,
            alphabet,
            rows,
            weights,
            total_count: 0,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    /// Number of distinct configurations.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.rows[r * self.p..(r + 1) * self.p]
    }

    pub fn weight(&self, r: usize) -> f64 {
        self.weights[r]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Raw sample count behind an empirical distribution, 0 if exact.
    pub fn sample_count(&self) -> usize {
        self.total_count
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], f64)> + '_ {
        self.rows.chunks_exact(self.p).zip(self.weights.iter().copied())
    }
}

/// Mixed-radix index of a configuration, site 0 least significant.
pub fn encode_config(config: &[u8], q: usize) -> usize {
    config
        .iter()
        .rev()
        .fold(0usize, |acc, &s| acc * q + s as usize)
}

/// Inverse of [`encode_config`].
pub fn decode_config(mut index: usize, q: usize, out: &mut [u8]) {
    for o in out.iter_mut() {
        *o = (index % q) as u8;
        index /= q;
    }
}
