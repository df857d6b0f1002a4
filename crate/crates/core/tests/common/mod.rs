#![allow(dead_code)]

use neurise_core::basis::BasisTerm;
use neurise_core::{Alphabet, EnergyModel};

/// Central differences of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, or the absolute error when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// Binary model from `(mask, strength)` pairs; bit `i` of the mask selects site `i`.
pub fn monomial_model(p: usize, terms: &[(usize, f64)]) -> EnergyModel {
    let mut seen = std::collections::BTreeMap::new();
    for &(mask, s) in terms {
        let mask = mask & ((1 << p) - 1);
        if mask != 0 {
            seen.insert(mask, s);
        }
    }
    let terms = seen
        .into_iter()
        .map(|(mask, s)| BasisTerm::monomial((0..p).filter(|i| mask >> i & 1 == 1).collect(), s))
        .collect();
    EnergyModel::new(p, Alphabet::BINARY, terms).unwrap()
}

/// Pairwise model over `q` symbols with one indicator term per listed pair.
pub fn indicator_pair_model(p: usize, q: usize, terms: &[(usize, usize, u8, u8, f64)]) -> EnergyModel {
    let mut seen = std::collections::BTreeMap::new();
    for &(a, b, la, lb, s) in terms {
        let (a, b) = (a % p, b % p);
        if a == b {
            continue;
        }
        let (a, b, la, lb) = if a < b { (a, b, la, lb) } else { (b, a, lb, la) };
        seen.insert((a, b, la % q as u8, lb % q as u8), s);
    }
    let terms = seen
        .into_iter()
        .map(|((a, b, la, lb), s)| BasisTerm::indicator(vec![a, b], vec![la, lb], s))
        .collect();
    EnergyModel::new(p, Alphabet::new(q).unwrap(), terms).unwrap()
}
