//! Exact enumeration sampling and Gibbs sampling.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::error::{invalid, Error, Result};
use crate::model::EnergyModel;
use crate::samples::{decode_config, SampleSet, WeightedConfigs};
use crate::seeded_rng;

/// Upper bound on the number of enumerated states, as `log2(q^p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumerationCap {
    pub max_log2_states: f64,
}

impl Default for EnumerationCap {
    fn default() -> Self {
        EnumerationCap {
            max_log2_states: 24.0,
        }
    }
}

impl EnumerationCap {
    /// Number of states `q^p`, or a capacity error.
    pub fn check(&self, p: usize, alphabet: Alphabet) -> Result<usize> {
        let log2 = p as f64 * (alphabet.q() as f64).log2();
        if log2 > self.max_log2_states + 1e-9 {
            return Err(Error::Capacity(format!(
                "{}^{p} states exceeds the enumeration cap of 2^{}",
                alphabet.q(),
                self.max_log2_states
            )));
        }
        Ok(alphabet.q().pow(p as u32))
    }
}

/// The Gibbs distribution `exp(H) / Z` over all `q^p` configurations,
/// indexed by [`crate::samples::encode_config`].
#[derive(Clone, Debug, PartialEq)]
pub struct ExactDistribution {
    p: usize,
    alphabet: Alphabet,
    probs: Vec<f64>,
    log_partition: f64,
}

impl ExactDistribution {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_states(&self) -> usize {
        self.probs.len()
    }

    /// `ln Z` for the energy the distribution was built from.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn prob(&self, config: &[u8]) -> f64 {
        self.probs[crate::samples::encode_config(config, self.alphabet.q())]
    }

    /// All states with their probabilities, for population objectives.
    pub fn to_weighted(&self) -> WeightedConfigs {
        let mut rows = vec![0u8; self.probs.len() * self.p];
        for (idx, chunk) in rows.chunks_exact_mut(self.p).enumerate() {
            decode_config(idx, self.alphabet.q(), chunk);
        }
        WeightedConfigs::new(self.p, self.alphabet, rows, self.probs.clone())
            .expect("normalized distribution")
    }

    /// Marginal distribution of site `u`.
    pub fn marginal(&self, u: usize) -> Vec<f64> {
        let q = self.alphabet.q();
        let stride = q.pow(u as u32);
        let mut out = vec![0.0; q];
        for (idx, &pr) in self.probs.iter().enumerate() {
            out[(idx / stride) % q] += pr;
        }
        out
    }
}

/// Enumerates `exp(energy(x))` over all configurations and normalizes with
/// log-sum-exp.
pub fn exact_distribution(
    energy: impl Fn(&[u8]) -> f64,
    p: usize,
    alphabet: Alphabet,
    cap: EnumerationCap,
) -> Result<ExactDistribution> {
    let states = cap.check(p, alphabet)?;
    let q = alphabet.q();
    let mut log_weights = Vec::with_capacity(states);
    let mut config = vec![0u8; p];
    for idx in 0..states {
        decode_config(idx, q, &mut config);
        let h = energy(&config);
        if !h.is_finite() {
            return Err(invalid(format!("energy is not finite at state {idx}")));
        }
        log_weights.push(h);
    }
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_weights.iter().map(|&h| (h - max).exp()).sum();
    let log_z = max + total.ln();
    let probs = log_weights.iter().map(|&h| (h - log_z).exp()).collect();
    Ok(ExactDistribution {
        p,
        alphabet,
        probs,
        log_partition: log_z,
    })
}

/// Exact distribution of an explicit model.
pub fn model_distribution(model: &EnergyModel, cap: EnumerationCap) -> Result<ExactDistribution> {
    exact_distribution(|x| model.energy(x), model.p(), model.alphabet(), cap)
}

/// `n` i.i.d. draws by inverse CDF.
pub fn exact_sample(dist: &ExactDistribution, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(invalid("cannot draw zero samples"));
    }
    let mut cumulative = Vec::with_capacity(dist.probs.len());
    let mut acc = 0.0;
    for &pr in &dist.probs {
        acc += pr;
        cumulative.push(acc);
    }
    let last = cumulative.len() - 1;
    let mut rng = seeded_rng(seed);
    let q = dist.alphabet.q();
    let mut data = vec![0u8; n * dist.p];
    for row in data.chunks_exact_mut(dist.p) {
        let x: f64 = rng.random::<f64>() * acc;
        let idx = cumulative.partition_point(|&c| c <= x).min(last);
        decode_config(idx, q, row);
    }
    SampleSet::new(dist.p, dist.alphabet, data)
}

/// Source of single-site conditionals `mu(x_u = . | x_rest)`.
pub trait ConditionalProvider {
    fn num_vars(&self) -> usize;
    fn alphabet(&self) -> Alphabet;
    /// Writes the conditional of site `u` given `config` (whose value at `u`
    /// is ignored) into `out`, which has length `q`.
    fn conditional_into(&self, u: usize, config: &[u8], out: &mut [f64]);

    fn conditional(&self, u: usize, config: &[u8]) -> Vec<f64> {
        let mut out = vec![0.0; self.alphabet().q()];
        self.conditional_into(u, config, &mut out);
        out
    }
}

impl ConditionalProvider for EnergyModel {
    fn num_vars(&self) -> usize {
        self.p()
    }

    fn alphabet(&self) -> Alphabet {
        EnergyModel::alphabet(self)
    }

    fn conditional_into(&self, u: usize, config: &[u8], out: &mut [f64]) {
        let mut scratch = config.to_vec();
        for (s, o) in out.iter_mut().enumerate() {
            scratch[u] = s as u8;
            *o = self.partial_energy(u, &scratch);
        }
        softmax_in_place(out);
    }
}

/// Adapts a closure `(u, config) -> distribution` into a provider.
pub struct FnProvider<F> {
    p: usize,
    alphabet: Alphabet,
    f: F,
}

impl<F: Fn(usize, &[u8]) -> Vec<f64>> FnProvider<F> {
    pub fn new(p: usize, alphabet: Alphabet, f: F) -> Self {
        FnProvider { p, alphabet, f }
    }
}

impl<F: Fn(usize, &[u8]) -> Vec<f64>> ConditionalProvider for FnProvider<F> {
    fn num_vars(&self) -> usize {
        self.p
    }

    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn conditional_into(&self, u: usize, config: &[u8], out: &mut [f64]) {
        let d = (self.f)(u, config);
        if d.len() == out.len() {
            out.copy_from_slice(&d);
        } else {
            // surfaced by the sampler's validation
            out.fill(f64::NAN);
        }
    }
}

/// Conditional of `u` under an explicit model.
pub fn true_conditional(model: &EnergyModel, u: usize, config: &[u8]) -> Result<Vec<f64>> {
    if u >= model.p() {
        return Err(invalid(format!("site {u} out of range")));
    }
    model.check_config(config)?;
    Ok(model.conditional(u, config))
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

/// Chain settings. `None` resolves to `10 p` burn-in sweeps and `p` sweeps
/// between retained samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub burn_in: Option<usize>,
    pub thinning: Option<usize>,
    pub seed: u64,
}

impl GibbsConfig {
    pub fn new(seed: u64) -> Self {
        GibbsConfig {
            burn_in: None,
            thinning: None,
            seed,
        }
    }

    pub fn resolved(&self, p: usize) -> Result<(usize, usize)> {
        let burn_in = self.burn_in.unwrap_or(10 * p);
        let thinning = self.thinning.unwrap_or(p.max(1));
        if thinning == 0 {
            return Err(invalid("thinning interval must be at least 1"));
        }
        Ok((burn_in, thinning))
    }
}

/// Systematic-scan Gibbs sampler started from a uniformly random configuration.
pub fn gibbs_sample<P: ConditionalProvider + ?Sized>(
    provider: &P,
    n: usize,
    config: &GibbsConfig,
) -> Result<SampleSet> {
    let p = provider.num_vars();
    let alphabet = provider.alphabet();
    let q = alphabet.q();
    if n == 0 {
        return Err(invalid("cannot draw zero samples"));
    }
    let (burn_in, thinning) = config.resolved(p)?;
    let mut rng = seeded_rng(config.seed);
    let mut state: Vec<u8> = (0..p).map(|_| rng.random_range(0..q) as u8).collect();
    let mut dist = vec![0.0; q];
    let mut sweep = |state: &mut Vec<u8>, rng: &mut rand_chacha::ChaCha8Rng| -> Result<()> {
        for u in 0..p {
            provider.conditional_into(u, state, &mut dist);
            validate_distribution(&dist, u)?;
            let x: f64 = rng.random::<f64>();
            let mut acc = 0.0;
            let mut pick = q - 1;
            for (s, &pr) in dist.iter().enumerate() {
                acc += pr;
                if x < acc {
                    pick = s;
                    break;
                }
            }
            state[u] = pick as u8;
        }
        Ok(())
    };
    for _ in 0..burn_in {
        sweep(&mut state, &mut rng)?;
    }
    let mut data = Vec::with_capacity(n * p);
    for _ in 0..n {
        for _ in 0..thinning {
            sweep(&mut state, &mut rng)?;
        }
        data.extend_from_slice(&state);
    }
    SampleSet::new(p, alphabet, data)
}

/// Runs `chains` independent chains with seeds `seed + c` and concatenates
/// their output in chain order.
pub fn gibbs_sample_chains<P: ConditionalProvider + Sync + ?Sized>(
    provider: &P,
    n: usize,
    config: &GibbsConfig,
    chains: usize,
) -> Result<SampleSet> {
    if chains == 0 || chains > n {
        return Err(invalid(format!("{chains} chains for {n} samples")));
    }
    let base = n / chains;
    let extra = n % chains;
    let parts: Vec<SampleSet> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut cfg = *config;
            cfg.seed = config.seed.wrapping_add(c as u64);
            gibbs_sample(provider, base + usize::from(c < extra), &cfg)
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(n * provider.num_vars());
    for part in &parts {
        data.extend_from_slice(part.as_flat());
    }
    SampleSet::new(provider.num_vars(), provider.alphabet(), data)
}

fn validate_distribution(dist: &[f64], u: usize) -> Result<()> {
    let total: f64 = dist.iter().sum();
    if dist.iter().any(|&x| !(x.is_finite() && x > 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "conditional for site {u} is not a positive distribution: {dist:?}"
        )));
    }
    Ok(())
}
