//! Structure learning from the first-layer weights of the conditional nets.
//!
//! Training starts with the input layer at exactly zero and applies an l1
//! penalty to it alone, so inputs that carry no information stay at (or near)
//! zero. The norms `||W_{u,v}||_2` of the input weights of net `u` fed by site
//! `v` then separate edges from non-edges.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grise::rule_of_thumb_penalty;
use crate::model::EnergyModel;
use crate::neurise::{neurise_fit_all, ConditionalModel, FitOutput, NetShape, TrainConfig};
use crate::samples::SampleSet;

/// `p x p` matrix of input-weight norms; the diagonal is undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Option<f64>>>", into = "Vec<Vec<Option<f64>>>")]
pub struct InputWeightNorms {
    p: usize,
    values: Vec<f64>,
}

impl InputWeightNorms {
    /// Builds from a full matrix; diagonal entries are ignored.
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if p < 2 || rows.iter().any(|r| r.len() != p) {
            return Err(invalid("norm matrix must be square with p >= 2"));
        }
        let mut values = vec![f64::NAN; p * p];
        for (u, r) in rows.iter().enumerate() {
            for (v, &x) in r.iter().enumerate() {
                if u == v {
                    continue;
                }
                if !(x.is_finite() && x >= 0.0) {
                    return Err(invalid(format!("norm ({u}, {v}) = {x} is not a non-negative number")));
                }
                values[u * p + v] = x;
            }
        }
        Ok(InputWeightNorms { p, values })
    }

    /// Norms of the network-backed conditionals, one per variable.
    pub fn from_models(models: &[ConditionalModel]) -> Result<Self> {
        let mut sorted: Vec<&ConditionalModel> = models.iter().collect();
        sorted.sort_by_key(|m| m.u());
        let p = sorted.len();
        if sorted.iter().enumerate().any(|(i, m)| m.u() != i || m.p() != p) {
            return Err(invalid("need one conditional per variable"));
        }
        let rows = sorted
            .iter()
            .map(|m| {
                m.input_norms()
                    .map(|mut r| {
                        r[m.u()] = 0.0;
                        r
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_matrix(&rows)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `||W_{u,v}||_2`, or `None` on the diagonal.
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        (u != v).then(|| self.values[u * self.p + v])
    }

    /// All off-diagonal norms in row-major order.
    pub fn pooled(&self) -> Vec<f64> {
        self.values.iter().copied().filter(|x| !x.is_nan()).collect()
    }

    /// OR-rule score of the unordered pair: the larger directed norm.
    pub fn pair_score(&self, u: usize, v: usize) -> f64 {
        self.values[u * self.p + v].max(self.values[v * self.p + u])
    }
}

impl TryFrom<Vec<Vec<Option<f64>>>> for InputWeightNorms {
    type Error = Error;

    fn try_from(rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let full: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|x| x.unwrap_or(0.0)).collect())
            .collect();
        Self::from_matrix(&full)
    }
}

impl From<InputWeightNorms> for Vec<Vec<Option<f64>>> {
    fn from(n: InputWeightNorms) -> Self {
        (0..n.p)
            .map(|u| (0..n.p).map(|v| n.get(u, v)).collect())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum ThresholdMethod {
    Manual { tau: f64 },
    /// `tau = c * sqrt(ln p / n)`.
    RuleOfThumb { c: f64 },
    /// `tau = mean + fraction * std` of the pooled norms (population std).
    StddevOutlier { fraction: f64 },
}

/// Chooses the edge threshold; `n` is the number of training samples.
pub fn select_threshold(norms: &InputWeightNorms, method: ThresholdMethod, n: usize) -> Result<f64> {
    let pooled = norms.pooled();
    if pooled.len() < 2 {
        return Err(invalid("threshold selection needs at least two norms"));
    }
    match method {
        ThresholdMethod::Manual { tau } => {
            if tau.is_nan() {
                return Err(invalid("threshold is NaN"));
            }
            Ok(tau)
        }
        ThresholdMethod::RuleOfThumb { c } => {
            if !(c > 0.0) || n == 0 {
                return Err(invalid("rule of thumb needs c > 0 and n > 0"));
            }
            Ok(rule_of_thumb_penalty(c, norms.p(), n))
        }
        ThresholdMethod::StddevOutlier { fraction } => {
            if !fraction.is_finite() {
                return Err(invalid("stddev fraction must be finite"));
            }
            let m = pooled.len() as f64;
            let mean = pooled.iter().sum::<f64>() / m;
            let var = pooled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
            if var == 0.0 {
                return Err(Error::Degenerate(
                    "all norms are equal; choose a manual threshold".into(),
                ));
            }
            Ok(mean + fraction * var.sqrt())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureResult {
    pub norms: InputWeightNorms,
    pub threshold: f64,
    pub method: ThresholdMethod,
    pub adjacency: Vec<Vec<bool>>,
    /// `N(u) = {v : ||W_{u,v}|| > tau}` from net `u` alone.
    pub neighborhoods: Vec<Vec<usize>>,
}

impl StructureResult {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let p = self.adjacency.len();
        (0..p)
            .flat_map(|u| (u + 1..p).map(move |v| (u, v)))
            .filter(|&(u, v)| self.adjacency[u][v])
            .collect()
    }
}

/// Thresholds the norms with the OR rule.
pub fn reconstruct_graph(norms: &InputWeightNorms, tau: f64, method: ThresholdMethod) -> StructureResult {
    let p = norms.p();
    let adjacency = (0..p)
        .map(|u| (0..p).map(|v| u != v && norms.pair_score(u, v) > tau).collect())
        .collect();
    let neighborhoods = (0..p)
        .map(|u| {
            (0..p)
                .filter(|&v| norms.get(u, v).is_some_and(|x| x > tau))
                .collect()
        })
        .collect();
    StructureResult {
        norms: norms.clone(),
        threshold: tau,
        method,
        adjacency,
        neighborhoods,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureMetrics {
    /// Fraction of true edges recovered (1 when there are none).
    pub edge_accuracy: f64,
    /// Fraction of true non-edges left out (1 when there are none).
    pub non_edge_accuracy: f64,
    /// Fraction of all unordered pairs classified correctly.
    pub total_accuracy: f64,
    pub false_positives: Vec<(usize, usize)>,
    pub false_negatives: Vec<(usize, usize)>,
}

/// Confusion counts over unordered pairs against the neighborhoods of `truth`.
pub fn structure_metrics(result: &StructureResult, truth: &EnergyModel) -> Result<StructureMetrics> {
    let p = truth.p();
    if result.adjacency.len() != p {
        return Err(invalid(format!(
            "result has p = {}, truth has p = {p}",
            result.adjacency.len()
        )));
    }
    let actual = truth.neighbor_matrix();
    let (mut edges, mut hits, mut non_edges, mut rejections) = (0usize, 0usize, 0usize, 0usize);
    let mut false_positives = Vec::new();
    let mut false_negatives = Vec::new();
    for u in 0..p {
        for v in u + 1..p {
            let predicted = result.adjacency[u][v];
            if actual[u][v] {
                edges += 1;
                if predicted {
                    hits += 1;
                } else {
                    false_negatives.push((u, v));
                }
            } else {
                non_edges += 1;
                if predicted {
                    false_positives.push((u, v));
                } else {
                    rejections += 1;
                }
            }
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    Ok(StructureMetrics {
        edge_accuracy: ratio(hits, edges),
        non_edge_accuracy: ratio(rejections, non_edges),
        total_accuracy: ratio(hits + rejections, edges + non_edges),
        false_positives,
        false_negatives,
    })
}

/// Probability that a random true edge scores above a random non-edge (ties
/// count one half), scoring pairs by the OR-rule norm.
pub fn ranking_auc(norms: &InputWeightNorms, truth: &EnergyModel) -> Result<f64> {
    let p = truth.p();
    if norms.p() != p {
        return Err(invalid("norm matrix and truth differ in p"));
    }
    let actual = truth.neighbor_matrix();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for u in 0..p {
        for v in u + 1..p {
            let s = norms.pair_score(u, v);
            if actual[u][v] {
                pos.push(s);
            } else {
                neg.push(s);
            }
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Degenerate("AUC needs both edges and non-edges".into()));
    }
    let mut wins = 0.0;
    for &a in &pos {
        for &b in &neg {
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}

/// The default input penalty `sqrt(ln p / n)`.
pub fn default_input_penalty(p: usize, n: usize) -> f64 {
    rule_of_thumb_penalty(1.0, p, n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructureFit {
    pub fits: Vec<FitOutput<ConditionalModel>>,
    pub norms: InputWeightNorms,
    pub warnings: Vec<String>,
}

/// Trains every conditional with a zero-initialized, l1-penalized input layer
/// and extracts the input-weight norms.
pub fn structure_fit(samples: &SampleSet, shape: NetShape, config: &TrainConfig) -> Result<StructureFit> {
    let mut warnings = Vec::new();
    if config.input_l1 <= 0.0 {
        warnings.push(format!(
            "input penalty is {}; non-edge weights are not driven to zero",
            config.input_l1
        ));
    }
    let cfg = TrainConfig {
        zero_input_init: true,
        ..*config
    };
    let fits = neurise_fit_all(samples, shape, &cfg)?;
    let models: Vec<ConditionalModel> = fits.iter().map(|f| f.model.clone()).collect();
    let norms = InputWeightNorms::from_models(&models)?;
    Ok(StructureFit {
        fits,
        norms,
        warnings,
    })
}

/// One pooled norm per line, for histograms.
pub fn write_norms_csv<W: Write>(mut out: W, norms: &InputWeightNorms) -> Result<()> {
    writeln!(out, "norm")?;
    for x in norms.pooled() {
        writeln!(out, "{x}")?;
    }
    Ok(())
}

pub fn write_norms_file(path: impl AsRef<Path>, norms: &InputWeightNorms) -> Result<()> {
    let mut buf = Vec::new();
    write_norms_csv(&mut buf, norms)?;
    std::fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;
    use crate::basis::BasisTerm;

    fn norms(rows: &[&[f64]]) -> InputWeightNorms {
        InputWeightNorms::from_matrix(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn stddev_threshold_example() {
        // pooled values {0, 0, 0, 5, 5, 0}: six entries of a 3 x 3 matrix
        let n = norms(&[&[0.0, 0.0, 0.0], &[0.0, 0.0, 5.0], &[0.0, 5.0, 0.0]]);
        let m: f64 = 6.0;
        let mean = 10.0 / m;
        let std = ((4.0 * mean * mean + 2.0 * (5.0 - mean).powi(2)) / m).sqrt();
        let tau = select_threshold(&n, ThresholdMethod::StddevOutlier { fraction: 0.5 }, 10).unwrap();
        assert!((tau - (mean + 0.5 * std)).abs() < 1e-12);
    }

    #[test]
    fn manual_and_rule_of_thumb() {
        let n = norms(&[&[0.0, 1.0], &[2.0, 0.0]]);
        assert_eq!(select_threshold(&n, ThresholdMethod::Manual { tau: 0.1 }, 5).unwrap(), 0.1);
        let big = InputWeightNorms::from_matrix(&vec![vec![1.0; 20]; 20]).unwrap();
        let tau = select_threshold(&big, ThresholdMethod::RuleOfThumb { c: 1.0 }, 400_000).unwrap();
        assert!((tau - 2.74e-3).abs() < 5e-6);
        let err = select_threshold(&big, ThresholdMethod::StddevOutlier { fraction: 0.5 }, 1).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn reconstruction_extremes_and_or_rule() {
        let n = norms(&[&[0.0, 0.5, 0.0], &[0.0, 0.0, 0.2], &[0.1, 0.3, 0.0]]);
        let r = reconstruct_graph(&n, 1.0, ThresholdMethod::Manual { tau: 1.0 });
        assert!(r.edges().is_empty());
        let r = reconstruct_graph(&n, 0.0, ThresholdMethod::Manual { tau: 0.0 });
        assert_eq!(r.edges(), vec![(0, 1), (0, 2), (1, 2)]);
        // OR rule: (0,1) is kept although W[1][0] = 0
        let r = reconstruct_graph(&n, 0.25, ThresholdMethod::Manual { tau: 0.25 });
        assert_eq!(r.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(r.neighborhoods, vec![vec![1], vec![], vec![1]]);
    }

    #[test]
    fn metrics_examples() {
        let truth = EnergyModel::new(
            4,
            Alphabet::BINARY,
            vec![
                BasisTerm::monomial(vec![0, 1], 1.0),
                BasisTerm::monomial(vec![2, 3], 1.0),
            ],
        )
        .unwrap();
        let perfect = norms(&[
            &[0.0, 1.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0],
            &[0.0, 0.0, 1.0, 0.0],
        ]);
        let r = reconstruct_graph(&perfect, 0.5, ThresholdMethod::Manual { tau: 0.5 });
        let m = structure_metrics(&r, &truth).unwrap();
        assert_eq!(m.total_accuracy, 1.0);
        assert_eq!(ranking_auc(&perfect, &truth).unwrap(), 1.0);

        let r = reconstruct_graph(&perfect, 2.0, ThresholdMethod::Manual { tau: 2.0 });
        let m = structure_metrics(&r, &truth).unwrap();
        assert_eq!(m.edge_accuracy, 0.0);
        assert_eq!(m.non_edge_accuracy, 1.0);
        assert_eq!(m.false_negatives, vec![(0, 1), (2, 3)]);

        let wrong_p = EnergyModel::empty(3, Alphabet::BINARY).unwrap();
        assert!(structure_metrics(&r, &wrong_p).is_err());
    }

    #[test]
    fn json_has_null_diagonal() {
        let n = norms(&[&[0.0, 0.5], &[0.25, 0.0]]);
        let text = serde_json::to_string(&n).unwrap();
        assert_eq!(text, "[[null,0.5],[0.25,null]]");
        let back: InputWeightNorms = serde_json::from_str(&text).unwrap();
        assert_eq!(back.pooled(), n.pooled());
        let r = reconstruct_graph(&n, 0.3, ThresholdMethod::StddevOutlier { fraction: 1.0 });
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["method"]["method"], "stddev-outlier");
    }
}
