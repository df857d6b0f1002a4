//! Evaluation metrics: conditional errors, total variation distances and
//! boolean Fourier spectra.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::samples::{decode_config, encode_config, SampleSet};
use crate::sampling::{ConditionalProvider, EnumerationCap, ExactDistribution};

/// Mean over sites `u` and all `q^(p-1)` contexts (weighted uniformly) of the
/// l1 distance between the two conditionals of `x_u`.
pub fn avg_conditional_error<A, B>(learned: &A, truth: &B, cap: EnumerationCap) -> Result<f64>
where
    A: ConditionalProvider + ?Sized,
    B: ConditionalProvider + ?Sized,
{
    let p = truth.num_vars();
    let alphabet = truth.alphabet();
    if learned.num_vars() != p || learned.alphabet() != alphabet {
        return Err(invalid("conditional providers have different shapes"));
    }
    if p == 0 {
        return Err(invalid("no variables"));
    }
    let states = cap.check(p, alphabet)?;
    let q = alphabet.q();
    let mut config = vec![0u8; p];
    let mut a = vec![0.0; q];
    let mut b = vec![0.0; q];
    let mut total = 0.0;
    let mut contexts = 0usize;
    for u in 0..p {
        for idx in 0..states {
            decode_config(idx, q, &mut config);
            // one representative per context
            if config[u] != 0 {
                continue;
            }
            learned.conditional_into(u, &config, &mut a);
            truth.conditional_into(u, &config, &mut b);
            total += a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>();
            contexts += 1;
        }
    }
    Ok(total / contexts as f64)
}

/// `1/2 sum_x |d1(x) - d2(x)|`.
pub fn tvd_exact(d1: &ExactDistribution, d2: &ExactDistribution) -> Result<f64> {
    if d1.p() != d2.p() || d1.alphabet() != d2.alphabet() {
        return Err(invalid("distributions have different shapes"));
    }
    Ok(0.5
        * d1
            .probs()
            .iter()
            .zip(d2.probs())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// Total variation distance between two empirical distributions, summed over
/// the union of observed configurations.
pub fn tvd_empirical(s1: &SampleSet, s2: &SampleSet) -> Result<f64> {
    if s1.p() != s2.p() || s1.alphabet() != s2.alphabet() {
        return Err(invalid("sample sets have different shapes"));
    }
    let (a, b) = (s1.weighted(), s2.weighted());
    // both are sorted by row
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let ord = match (i < a.len(), j < b.len()) {
            (true, true) => a.row(i).cmp(b.row(j)),
            (true, false) => Ordering::Less,
            _ => Ordering::Greater,
        };
        match ord {
            Ordering::Less => {
                total += a.weight(i);
                i += 1;
            }
            Ordering::Greater => {
                total += b.weight(j);
                j += 1;
            }
            Ordering::Equal => {
                total += (a.weight(i) - b.weight(j)).abs();
                i += 1;
                j += 1;
            }
        }
    }
    Ok((0.5 * total).min(1.0))
}

/// Total variation distance between an empirical distribution and an exact one.
pub fn tvd_sample_vs_exact(samples: &SampleSet, dist: &ExactDistribution) -> Result<f64> {
    if samples.p() != dist.p() || samples.alphabet() != dist.alphabet() {
        return Err(invalid("samples and distribution have different shapes"));
    }
    let q = dist.alphabet().q();
    let mut empirical = vec![0.0; dist.num_states()];
    let data = samples.weighted();
    for (row, w) in data.iter() {
        empirical[encode_config(row, q)] += w;
    }
    let total: f64 = empirical.iter().sum();
    Ok(0.5
        * empirical
            .iter()
            .zip(dist.probs())
            .map(|(e, p)| (e / total - p).abs())
            .sum::<f64>())
}

// ---------------------------------------------------------------------------
// Fourier analysis over {+1,-1}^p

/// Size limits for boolean Fourier expansions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourierCap {
    /// Largest `p` for a complete spectrum.
    pub complete: usize,
    /// Largest `p` for a single on-demand coefficient.
    pub on_demand: usize,
}

impl Default for FourierCap {
    fn default() -> Self {
        FourierCap {
            complete: 16,
            on_demand: 20,
        }
    }
}

fn check_fourier(p: usize, limit: usize) -> Result<()> {
    if p > limit {
        return Err(Error::Capacity(format!(
            "boolean expansion over {p} variables exceeds the cap of {limit}"
        )));
    }
    Ok(())
}

/// Values of `f` on all `2^p` configurations. Bit `i` of the index is the
/// symbol of site `i`, so a set bit means spin `-1`.
pub fn truth_table<F: Fn(&[u8]) -> f64>(f: F, p: usize) -> Vec<f64> {
    let mut config = vec![0u8; p];
    (0..1usize << p)
        .map(|x| {
            decode_config(x, 2, &mut config);
            f(&config)
        })
        .collect()
}

/// In-place unnormalized Walsh-Hadamard transform.
pub fn fwht(values: &mut [f64]) {
    let n = values.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for i in block..block + h {
                let (a, b) = (values[i], values[i + h]);
                values[i] = a + b;
                values[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// Coefficients `c_S` of a function on `{+1,-1}^p` in the monomial basis,
/// indexed by the subset bitmask `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSpectrum {
    p: usize,
    coeffs: Vec<f64>,
}

impl CoefficientSpectrum {
    /// Spectrum of a full truth table (see [`truth_table`]).
    pub fn from_truth_table(mut table: Vec<f64>) -> Result<Self> {
        if !table.len().is_power_of_two() {
            return Err(invalid("truth table length must be a power of two"));
        }
        let p = table.len().trailing_zeros() as usize;
        fwht(&mut table);
        let scale = 1.0 / table.len() as f64;
        table.iter_mut().for_each(|c| *c *= scale);
        Ok(CoefficientSpectrum { p, coeffs: table })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coefficient(&self, sites: &[usize]) -> f64 {
        self.coeffs[mask_of(sites)]
    }

    /// The function values back from the coefficients.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut table = self.coeffs.clone();
        fwht(&mut table);
        table
    }
}

pub fn mask_of(sites: &[usize]) -> usize {
    sites.iter().fold(0, |m, &i| m | (1 << i))
}

pub fn sites_of(mask: usize) -> Vec<usize> {
    (0..usize::BITS as usize).filter(|i| mask >> i & 1 == 1).collect()
}

/// Complete monomial expansion of `f` over `p` binary variables.
pub fn fourier_expand<F: Fn(&[u8]) -> f64>(f: F, p: usize, cap: FourierCap) -> Result<CoefficientSpectrum> {
    check_fourier(p, cap.complete)?;
    CoefficientSpectrum::from_truth_table(truth_table(f, p))
}

/// A single coefficient `c_S` computed from the full truth table without
/// storing it.
pub fn fourier_coefficient<F: Fn(&[u8]) -> f64>(
    f: F,
    p: usize,
    sites: &[usize],
    cap: FourierCap,
) -> Result<f64> {
    check_fourier(p, cap.on_demand)?;
    if sites.iter().any(|&i| i >= p) {
        return Err(invalid("subset site out of range"));
    }
    let mask = mask_of(sites);
    let mut config = vec![0u8; p];
    let mut total = 0.0;
    for x in 0..1usize << p {
        decode_config(x, 2, &mut config);
        let v = f(&config);
        if (x & mask).count_ones().is_multiple_of(2) {
            total += v;
        } else {
            total -= v;
        }
    }
    Ok(total / (1usize << p) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeadingCoefficient {
    pub order: usize,
    /// `max |c_S|` over subsets of this order.
    pub value: f64,
    pub sites: Vec<usize>,
}

/// For each order `1..=max_order`, the largest `|c_S|` with `|S|` equal to the
/// order; ties go to the lexicographically smallest site list.
pub fn leading_coefficients(spectrum: &CoefficientSpectrum, max_order: usize) -> Vec<LeadingCoefficient> {
    let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; max_order + 1];
    for (mask, c) in spectrum.coeffs.iter().enumerate() {
        let order = mask.count_ones() as usize;
        if order == 0 || order > max_order {
            continue;
        }
        let v = c.abs();
        let sites = sites_of(mask);
        let replace = match &best[order] {
            None => true,
            Some((bv, bs)) => v > *bv || (v == *bv && sites < *bs),
        };
        if replace {
            best[order] = Some((v, sites));
        }
    }
    (1..=max_order)
        .map(|order| {
            let (value, sites) = best[order].clone().unwrap_or((0.0, Vec::new()));
            LeadingCoefficient { order, value, sites }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV output

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub n: usize,
    pub value: f64,
    pub seed: u64,
}

pub fn write_metrics_csv<W: Write>(mut out: W, rows: &[MetricRow]) -> Result<()> {
    writeln!(out, "metric,n,value,seed")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.metric, r.n, r.value, r.seed)?;
    }
    Ok(())
}

pub fn write_metrics_file(path: impl AsRef<Path>, rows: &[MetricRow]) -> Result<()> {
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, rows)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// One `bitmask,coefficient` row per subset.
pub fn write_spectrum_csv<W: Write>(mut out: W, spectrum: &CoefficientSpectrum) -> Result<()> {
    writeln!(out, "bitmask,coefficient")?;
    for (mask, c) in spectrum.coeffs.iter().enumerate() {
        writeln!(out, "{mask},{c}")?;
    }
    Ok(())
}
