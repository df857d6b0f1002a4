use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::basis::{BasisKind, BasisTerm};
use crate::error::{invalid, Result};

/// An explicit energy function `H(x) = sum_k theta_k g_k(x_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct EnergyModel {
    p: usize,
    alphabet: Alphabet,
    terms: Vec<BasisTerm>,
    // indices into `terms` of the terms involving each variable
    #[serde(skip)]
    by_site: Vec<Vec<usize>>,
}

impl EnergyModel {
    /// Builds a model, sorting terms into canonical order.
    pub fn new(p: usize, alphabet: Alphabet, mut terms: Vec<BasisTerm>) -> Result<Self> {
        if p == 0 {
            return Err(invalid("model needs at least one variable"));
        }
        for t in &terms {
            t.validate(p, alphabet)?;
        }
        terms.sort_by(BasisTerm::canonical_cmp);
        if let Some(w) = terms.windows(2).find(|w| w[0].same_function(&w[1])) {
            return Err(invalid(format!(
                "duplicate basis term on sites {:?}",
                w[0].sites
            )));
        }
        let mut by_site = vec![Vec::new(); p];
        for (k, t) in terms.iter().enumerate() {
            for &i in &t.sites {
                by_site[i].push(k);
            }
        }
        Ok(EnergyModel {
            p,
            alphabet,
            terms,
            by_site,
        })
    }

    pub fn empty(p: usize, alphabet: Alphabet) -> Result<Self> {
        Self::new(p, alphabet, Vec::new())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn terms(&self) -> &[BasisTerm] {
        &self.terms
    }

    /// Terms whose support contains `u`.
    pub fn terms_containing(&self, u: usize) -> impl Iterator<Item = &BasisTerm> + '_ {
        self.by_site[u].iter().map(move |&k| &self.terms[k])
    }

    pub fn max_order(&self) -> usize {
        self.terms.iter().map(BasisTerm::order).max().unwrap_or(0)
    }

    pub fn check_config(&self, config: &[u8]) -> Result<()> {
        if config.len() != self.p {
            return Err(invalid(format!(
                "configuration has length {}, expected {}",
                config.len(),
                self.p
            )));
        }
        config.iter().try_for_each(|&s| self.alphabet.check(s))
    }

    /// `H(config)`, validated.
    pub fn eval_energy(&self, config: &[u8]) -> Result<f64> {
        self.check_config(config)?;
        Ok(self.energy(config))
    }

    /// `H(config)` without validation.
    pub fn energy(&self, config: &[u8]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.strength * t.value(self.alphabet, config))
            .sum()
    }

    /// Sum of the terms involving `u` (the partial energy `H_u`).
    pub fn partial_energy(&self, u: usize, config: &[u8]) -> f64 {
        self.terms_containing(u)
            .map(|t| t.strength * t.value(self.alphabet, config))
            .sum()
    }

    /// Unordered pairs of distinct sites that share a term with nonzero strength.
    pub fn neighbor_matrix(&self) -> Vec<Vec<bool>> {
        let mut adj = vec![vec![false; self.p]; self.p];
        for t in self.terms.iter().filter(|t| t.strength != 0.0) {
            for &a in &t.sites {
                for &b in &t.sites {
                    if a != b {
                        adj[a][b] = true;
                    }
                }
            }
        }
        adj
    }

    pub fn kind(&self) -> Option<BasisKind> {
        self.terms.first().map(|t| t.kind)
    }
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    p: usize,
    q: usize,
    terms: Vec<BasisTerm>,
}

impl TryFrom<RawModel> for EnergyModel {
    type Error = crate::Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        EnergyModel::new(raw.p, Alphabet::new(raw.q)?, raw.terms)
    }
}

impl From<EnergyModel> for RawModel {
    fn from(m: EnergyModel) -> Self {
        RawModel {
            p: m.p,
            q: m.alphabet.q(),
            terms: m.terms,
        }
    }
}
