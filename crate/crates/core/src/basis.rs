//! Basis functions for linear energy parameterizations.
//!
//! Two hierarchies are supported: monomials `prod_i s_i` over spins (binary
//! alphabets only) and products of centered indicators
//! `prod_i Phi_{l_i}(x_i)` with `Phi_l(x) = [l == x] - 1/q`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Monomial,
    Indicator,
}

/// One weighted basis function acting on a subset of variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisTerm {
    pub sites: Vec<usize>,
    pub kind: BasisKind,
    pub labels: Option<Vec<u8>>,
    pub strength: f64,
}

impl BasisTerm {
    pub fn monomial(sites: Vec<usize>, strength: f64) -> Self {
        BasisTerm {
            sites,
            kind: BasisKind::Monomial,
            labels: None,
            strength,
        }
    }

    pub fn indicator(sites: Vec<usize>, labels: Vec<u8>, strength: f64) -> Self {
        BasisTerm {
            sites,
            kind: BasisKind::Indicator,
            labels: Some(labels),
            strength,
        }
    }

    /// Checks the structural invariants against `p` variables over `alphabet`.
    pub fn validate(&self, p: usize, alphabet: Alphabet) -> Result<()> {
        if self.sites.is_empty() {
            return Err(invalid("basis term has no sites"));
        }
        if self.sites.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(format!(
                "basis term sites {:?} are not strictly increasing",
                self.sites
            )));
        }
        if let Some(&last) = self.sites.last() {
            if last >= p {
                return Err(invalid(format!("site {last} out of range for p = {p}")));
            }
        }
        if !self.strength.is_finite() {
            return Err(invalid("basis term strength is not finite"));
        }
        match (self.kind, &self.labels) {
            (BasisKind::Monomial, None) => {
                if !alphabet.is_binary() {
                    return Err(invalid(format!(
                        "monomial terms require q = 2, got q = {}",
                        alphabet.q()
                    )));
                }
            }
            (BasisKind::Indicator, Some(labels)) => {
                if labels.len() != self.sites.len() {
                    return Err(invalid(format!(
                        "indicator term has {} labels for {} sites",
                        labels.len(),
                        self.sites.len()
                    )));
                }
                for &l in labels {
                    alphabet.check(l)?;
                }
            }
            (BasisKind::Monomial, Some(_)) => {
                return Err(invalid("monomial term must not carry labels"))
            }
            (BasisKind::Indicator, None) => return Err(invalid("indicator term needs labels")),
        }
        Ok(())
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.sites.len()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.sites.binary_search(&site).is_ok()
    }

    /// Value of the basis function (without strength). No range checks.
    #[inline]
    pub fn value(&self, alphabet: Alphabet, config: &[u8]) -> f64 {
        match &self.labels {
            None => {
                // product of spins; sign flips once per symbol 1
                let mut negative = false;
                for &i in &self.sites {
                    negative ^= config[i] != 0;
                }
                if negative {
                    -1.0
                } else {
                    1.0
                }
            }
            Some(labels) => self
                .sites
                .iter()
                .zip(labels)
                .map(|(&i, &l)| alphabet.indicator(l, config[i]))
                .product(),
        }
    }

    /// Checked evaluation of the basis function on a full configuration.
    pub fn evaluate(&self, alphabet: Alphabet, config: &[u8]) -> Result<f64> {
        for &i in &self.sites {
            let sym = *config
                .get(i)
                .ok_or_else(|| invalid(format!("configuration too short for site {i}")))?;
            alphabet.check(sym)?;
        }
        Ok(self.value(alphabet, config))
    }

    /// Canonical order: by `(|sites|, sites, labels)`.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.sites
            .len()
            .cmp(&other.sites.len())
            .then_with(|| self.sites.cmp(&other.sites))
            .then_with(|| self.kind.cmp(&other.kind))
            .then_with(|| self.labels.cmp(&other.labels))
    }

    pub(crate) fn same_function(&self, other: &Self) -> bool {
        self.kind == other.kind && self.sites == other.sites && self.labels == other.labels
    }
}

/// All basis functions of bounded order that involve a given center variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialBasis {
    pub u: usize,
    pub p: usize,
    pub alphabet: Alphabet,
    pub kind: BasisKind,
    pub max_order: usize,
    pub terms: Vec<BasisTerm>,
}

impl PartialBasis {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Short human-readable descriptor, e.g. `monomial:u=3:L=2:q=2`.
    pub fn descriptor(&self) -> String {
        let kind = match self.kind {
            BasisKind::Monomial => "monomial",
            BasisKind::Indicator => "indicator",
        };
        format!(
            "{kind}:u={}:L={}:p={}:q={}",
            self.u,
            self.max_order,
            self.p,
            self.alphabet.q()
        )
    }

    /// Values of every basis function on `config`, written into `out`.
    pub fn fill_row(&self, config: &[u8], out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.value(self.alphabet, config);
        }
    }
}

/// Enumerates every basis function of order at most `max_order` containing `u`,
/// in canonical `(|sites|, sites, labels)` order.
pub fn build_partial_basis(
    p: usize,
    alphabet: Alphabet,
    max_order: usize,
    u: usize,
    kind: BasisKind,
) -> Result<PartialBasis> {
    if max_order < 1 || max_order > p {
        return Err(invalid(format!(
            "interaction order must satisfy 1 <= L <= p, got L = {max_order}, p = {p}"
        )));
    }
    if u >= p {
        return Err(invalid(format!("center variable {u} out of range for p = {p}")));
    }
    if kind == BasisKind::Monomial && !alphabet.is_binary() {
        return Err(invalid("monomial basis requires a binary alphabet"));
    }
    let others: Vec<usize> = (0..p).filter(|&i| i != u).collect();
    let mut terms = Vec::new();
    for extra in 0..max_order {
        for_each_combination(&others, extra, |subset| {
            let mut sites = subset.to_vec();
            sites.push(u);
            sites.sort_unstable();
            match kind {
                BasisKind::Monomial => terms.push(BasisTerm::monomial(sites, 0.0)),
                BasisKind::Indicator => {
                    let k = sites.len();
                    let mut labels = vec![0u8; k];
                    loop {
                        terms.push(BasisTerm::indicator(sites.clone(), labels.clone(), 0.0));
                        if !next_labels(&mut labels, alphabet.q()) {
                            break;
                        }
                    }
                }
            }
        });
    }
    terms.sort_by(BasisTerm::canonical_cmp);
    Ok(PartialBasis {
        u,
        p,
        alphabet,
        kind,
        max_order,
        terms,
    })
}

/// Closed-form size of [`build_partial_basis`].
///
/// Monomial: `sum_{k=0}^{L-1} C(p-1, k)`. Indicator: `sum_{k=1}^{L} C(p-1, k-1) q^k`.
pub fn count_grise_params(p: usize, q: usize, max_order: usize, kind: BasisKind) -> u64 {
    if p == 0 || max_order == 0 {
        return 0;
    }
    let max_order = max_order.min(p);
    match kind {
        BasisKind::Monomial => (0..max_order).map(|k| binomial(p - 1, k)).sum(),
        BasisKind::Indicator => (1..=max_order)
            .map(|k| binomial(p - 1, k - 1) * (q as u64).pow(k as u32))
            .sum(),
    }
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// Calls `f` on every `k`-subset of `items` in lexicographic order.
pub(crate) fn for_each_combination(items: &[usize], k: usize, mut f: impl FnMut(&[usize])) {
    let n = items.len();
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut buf = vec![0usize; k];
    loop {
        for (b, &i) in buf.iter_mut().zip(&idx) {
            *b = items[i];
        }
        f(&buf);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn next_labels(labels: &mut [u8], q: usize) -> bool {
    for l in labels.iter_mut().rev() {
        if (*l as usize) + 1 < q {
            *l += 1;
            return true;
        }
        *l = 0;
    }
    false
}
