//! Synthetic ground-truth models.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::basis::BasisTerm;
use crate::error::{invalid, Result};
use crate::model::EnergyModel;
use crate::seeded_rng;

/// Distribution of interaction strengths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StrengthDist {
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Magnitude uniform on `[lo, hi]` with an independent fair sign.
    SignedUniform { lo: f64, hi: f64 },
}

impl StrengthDist {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        StrengthDist::Uniform { lo, hi }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = match *self {
            StrengthDist::Uniform { lo, hi } | StrengthDist::SignedUniform { lo, hi } => (lo, hi),
        };
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(invalid(format!("strength interval [{lo}, {hi}] is invalid")));
        }
        Ok(())
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            StrengthDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            StrengthDist::SignedUniform { lo, hi } => {
                let mag = lo + (hi - lo) * rng.random::<f64>();
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
        }
    }
}

/// One-dimensional chain with all windows up to length `L`:
/// `H = sum_l theta_l sum_i s_i ... s_{i+l-1}`.
pub fn gen_one_d_model(p: usize, max_order: usize, theta: &[f64]) -> Result<EnergyModel> {
    if max_order == 0 || max_order > p {
        return Err(invalid(format!(
            "chain order must satisfy 1 <= L <= p, got L = {max_order}, p = {p}"
        )));
    }
    if theta.len() != max_order {
        return Err(invalid(format!(
            "expected {max_order} strengths, got {}",
            theta.len()
        )));
    }
    let mut terms = Vec::new();
    for (l, &strength) in (1..=max_order).zip(theta) {
        for start in 0..=p - l {
            terms.push(BasisTerm::monomial((start..start + l).collect(), strength));
        }
    }
    EnergyModel::new(p, Alphabet::BINARY, terms)
}

/// Erdős–Rényi pairwise binary model: each pair is an edge independently
/// with probability `edge_probability`.
pub fn gen_er_pairwise(
    p: usize,
    edge_probability: f64,
    strengths: StrengthDist,
    seed: u64,
) -> Result<EnergyModel> {
    if !(0.0..=1.0).contains(&edge_probability) {
        return Err(invalid(format!(
            "edge probability {edge_probability} outside [0, 1]"
        )));
    }
    strengths.validate()?;
    let mut rng = seeded_rng(seed);
    let mut terms = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            // always draw both numbers so the stream layout does not depend on outcomes
            let coin = rng.random::<f64>();
            let strength = strengths.draw(&mut rng);
            if coin < edge_probability {
                terms.push(BasisTerm::monomial(vec![i, j], strength));
            }
        }
    }
    EnergyModel::new(p, Alphabet::BINARY, terms)
}

/// Edge probability giving an expected degree of `mean_degree`.
pub fn edge_probability_for_degree(p: usize, mean_degree: f64) -> Result<f64> {
    if p < 2 {
        return Err(invalid("need at least two variables for a degree target"));
    }
    let prob = mean_degree / (p - 1) as f64;
    if !(0.0..=1.0).contains(&prob) {
        return Err(invalid(format!(
            "mean degree {mean_degree} is not attainable with p = {p}"
        )));
    }
    Ok(prob)
}

/// Ring of pair couplings plus one fifth-order term of strength 1/2 on
/// sites `{0, 2, 4, 6, 8}`.
pub fn gen_hypergraph_model(p: usize, strengths: StrengthDist, seed: u64) -> Result<EnergyModel> {
    if p < 10 {
        return Err(invalid(format!(
            "hypergraph layout needs at least 10 variables, got {p}"
        )));
    }
    strengths.validate()?;
    let mut rng = seeded_rng(seed);
    let mut terms = vec![BasisTerm::monomial(vec![0, 2, 4, 6, 8], 0.5)];
    for i in 0..p - 1 {
        terms.push(BasisTerm::monomial(vec![i, i + 1], strengths.draw(&mut rng)));
    }
    terms.push(BasisTerm::monomial(vec![0, p - 1], strengths.draw(&mut rng)));
    EnergyModel::new(p, Alphabet::BINARY, terms)
}

/// Random binary model whose terms are uniformly drawn `order`-subsets,
/// added until the mean number of neighbors per variable reaches `mean_degree`.
pub fn gen_random_hypergraph(
    p: usize,
    order: usize,
    mean_degree: f64,
    strengths: StrengthDist,
    seed: u64,
) -> Result<EnergyModel> {
    if order < 2 || order > p {
        return Err(invalid(format!("term order {order} invalid for p = {p}")));
    }
    if !(mean_degree >= 0.0 && mean_degree <= (p - 1) as f64) {
        return Err(invalid(format!("mean degree {mean_degree} unattainable")));
    }
    strengths.validate()?;
    let mut rng = seeded_rng(seed);
    let mut adj = vec![vec![false; p]; p];
    let mut degree_sum = 0usize;
    let mut seen = std::collections::BTreeSet::new();
    let mut terms = Vec::new();
    let mut attempts = 0usize;
    while (degree_sum as f64) / (p as f64) < mean_degree {
        attempts += 1;
        if attempts > 1_000_000 {
            return Err(invalid("could not reach the requested mean degree"));
        }
        let mut sites = sample(&mut rng, p, order).into_vec();
        sites.sort_unstable();
        if !seen.insert(sites.clone()) {
            continue;
        }
        for &a in &sites {
            for &b in &sites {
                if a != b && !adj[a][b] {
                    adj[a][b] = true;
                    degree_sum += 1;
                }
            }
        }
        terms.push(BasisTerm::monomial(sites, strengths.draw(&mut rng)));
    }
    EnergyModel::new(p, Alphabet::BINARY, terms)
}
