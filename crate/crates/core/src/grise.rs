//! Generalized regularized interaction screening (GRISE).
//!
//! For a center variable `u` the interaction screening objective is
//! `S(theta) = E_w[exp(-sum_k theta_k g_k(x))]` over the basis functions that
//! involve `u`, where `E_w` averages over the (weighted) samples. It is convex
//! and minimized here under an l1 constraint or penalty.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{build_partial_basis, BasisKind, PartialBasis};
use crate::error::{invalid, Result};
use crate::samples::{SampleSet, WeightedConfigs};
use crate::Alphabet;

/// Design matrices larger than this many entries are recomputed on the fly.
pub const DEFAULT_CACHE_ENTRIES: usize = 50_000_000;

const CHUNK_ROWS: usize = 2048;

enum Design {
    Cached(Vec<f64>),
    Streaming,
}

/// ISO for one center variable over a fixed data set.
pub struct GriseProblem {
    basis: PartialBasis,
    data: WeightedConfigs,
    design: Design,
}

impl GriseProblem {
    pub fn new(basis: PartialBasis, data: WeightedConfigs) -> Result<Self> {
        Self::with_cache_limit(basis, data, DEFAULT_CACHE_ENTRIES)
    }

    pub fn from_samples(basis: PartialBasis, samples: &SampleSet) -> Result<Self> {
        Self::new(basis, samples.weighted())
    }

    pub fn with_cache_limit(
        basis: PartialBasis,
        data: WeightedConfigs,
        max_entries: usize,
    ) -> Result<Self> {
        if basis.p != data.p() || basis.alphabet != data.alphabet() {
            return Err(invalid(format!(
                "basis is for p={} q={}, data has p={} q={}",
                basis.p,
                basis.alphabet.q(),
                data.p(),
                data.alphabet().q()
            )));
        }
        let k = basis.len();
        let entries = k.saturating_mul(data.len());
        let design = if entries <= max_entries {
            let mut m = vec![0.0; entries];
            for (r, chunk) in m.chunks_exact_mut(k.max(1)).enumerate().take(data.len()) {
                basis.fill_row(data.row(r), chunk);
            }
            Design::Cached(m)
        } else {
            Design::Streaming
        };
        Ok(GriseProblem {
            basis,
            data,
            design,
        })
    }

    pub fn basis(&self) -> &PartialBasis {
        &self.basis
    }

    pub fn data(&self) -> &WeightedConfigs {
        &self.data
    }

    pub fn num_params(&self) -> usize {
        self.basis.len()
    }

    pub fn is_cached(&self) -> bool {
        matches!(self.design, Design::Cached(_))
    }

    /// Cached design value `g_k` at distinct row `r`, or a fresh evaluation.
    pub fn design_value(&self, r: usize, k: usize) -> f64 {
        match &self.design {
            Design::Cached(m) => m[r * self.basis.len() + k],
            Design::Streaming => self.basis.terms[k].value(self.basis.alphabet, self.data.row(r)),
        }
    }

    fn check_len(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.basis.len() {
            return Err(invalid(format!(
                "parameter vector has length {}, basis has {} terms",
                theta.len(),
                self.basis.len()
            )));
        }
        Ok(())
    }

    /// Runs `f(row_design, weight)` over all rows in fixed-order chunks and sums
    /// the per-chunk accumulators in chunk order.
    fn reduce<A, F>(&self, init: impl Fn() -> A + Sync, f: F, merge: impl Fn(&mut A, A)) -> A
    where
        A: Send,
        F: Fn(&mut A, &[f64], f64) + Sync,
    {
        let k = self.basis.len();
        let rows = self.data.len();
        let chunks: Vec<A> = (0..rows.div_ceil(CHUNK_ROWS))
            .into_par_iter()
            .map(|c| {
                let mut acc = init();
                let mut buf = vec![0.0; k];
                for r in c * CHUNK_ROWS..((c + 1) * CHUNK_ROWS).min(rows) {
                    let row: &[f64] = match &self.design {
                        Design::Cached(m) => &m[r * k..(r + 1) * k],
                        Design::Streaming => {
                            self.basis.fill_row(self.data.row(r), &mut buf);
                            &buf
                        }
                    };
                    f(&mut acc, row, self.data.weight(r));
                }
                acc
            })
            .collect();
        let mut total = init();
        for c in chunks {
            merge(&mut total, c);
        }
        total
    }

    /// `S(theta)`.
    pub fn iso_value(&self, theta: &[f64]) -> Result<f64> {
        self.check_len(theta)?;
        Ok(self.value_unchecked(theta))
    }

    fn value_unchecked(&self, theta: &[f64]) -> f64 {
        self.reduce(
            || 0.0,
            |acc, row, w| *acc += w * (-dot(theta, row)).exp(),
            |a, b| *a += b,
        )
    }

    /// `dS/dtheta_k = -E[g_k exp(-theta . g)]`.
    pub fn iso_gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_gradient(theta)?.1)
    }

    pub fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_len(theta)?;
        Ok(self.value_and_gradient_unchecked(theta))
    }

    fn value_and_gradient_unchecked(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let k = self.basis.len();
        let (value, mut grad) = self.reduce(
            || (0.0, vec![0.0; k]),
            |acc, row, w| {
                let e = w * (-dot(theta, row)).exp();
                acc.0 += e;
                for (g, &x) in acc.1.iter_mut().zip(row) {
                    *g += e * x;
                }
            },
            |a, b| {
                a.0 += b.0;
                for (x, y) in a.1.iter_mut().zip(b.1) {
                    *x += y;
                }
            },
        );
        grad.iter_mut().for_each(|g| *g = -*g);
        (value, grad)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// How the l1 prior enters the fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GriseMode {
    /// `min S(theta)` subject to `||theta||_1 <= gamma`.
    Constrained { gamma: f64 },
    /// `min S(theta) + lambda ||theta||_1`.
    Penalized { lambda: f64 },
}

impl GriseMode {
    fn validate(&self) -> Result<()> {
        match *self {
            GriseMode::Constrained { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(invalid(format!("l1 radius must be positive, got {gamma}")))
            }
            GriseMode::Penalized { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => {
                Err(invalid(format!("penalty must be non-negative, got {lambda}")))
            }
            _ => Ok(()),
        }
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        match *self {
            GriseMode::Constrained { .. } => 0.0,
            GriseMode::Penalized { lambda } => lambda * l1_norm(theta),
        }
    }

    fn prox(&self, v: &mut [f64], step: f64) {
        match *self {
            GriseMode::Constrained { gamma } => project_l1_ball(v, gamma),
            GriseMode::Penalized { lambda } => {
                v.iter_mut().for_each(|x| *x = soft_threshold(*x, lambda * step))
            }
        }
    }
}

/// `c * sqrt(ln p / n)`.
pub fn rule_of_thumb_penalty(c: f64, p: usize, n: usize) -> f64 {
    c * ((p as f64).ln() / n as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Stop when `||x_{k+1} - x_k|| / step` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub initial_step: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-7,
            max_iter: 50_000,
            initial_step: 1.0,
        }
    }
}

/// Enough to rebuild the basis a solution is aligned with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub kind: BasisKind,
    pub u: usize,
    pub max_order: usize,
    pub p: usize,
    pub q: usize,
}

impl BasisDescriptor {
    pub fn of(basis: &PartialBasis) -> Self {
        BasisDescriptor {
            kind: basis.kind,
            u: basis.u,
            max_order: basis.max_order,
            p: basis.p,
            q: basis.alphabet.q(),
        }
    }

    pub fn build(&self) -> Result<PartialBasis> {
        build_partial_basis(
            self.p,
            Alphabet::new(self.q)?,
            self.max_order,
            self.u,
            self.kind,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GriseSolution {
    pub u: usize,
    pub basis: BasisDescriptor,
    pub theta: Vec<f64>,
    /// Composite objective `S(theta) + penalty` at `theta`.
    pub objective: f64,
    pub iso: f64,
    pub iterations: usize,
    pub converged: bool,
    pub mode: GriseMode,
    pub settings: SolverSettings,
}

/// Proximal (or projected) gradient descent with backtracking.
///
/// Each step halves the trial step until the quadratic upper bound holds, which
/// keeps the composite objective non-increasing; the step may double again
/// (up to `initial_step`) after an accepted iteration.
pub fn grise_fit(
    problem: &GriseProblem,
    mode: GriseMode,
    settings: &SolverSettings,
) -> Result<GriseSolution> {
    mode.validate()?;
    if !(settings.tol > 0.0 && settings.initial_step > 0.0) {
        return Err(invalid("solver tolerance and step must be positive"));
    }
    let k = problem.num_params();
    let mut x = vec![0.0; k];
    let (mut f, mut g) = problem.value_and_gradient_unchecked(&x);
    let mut step = settings.initial_step;
    let mut converged = false;
    let mut iterations = 0;
    let mut y = vec![0.0; k];

    while iterations < settings.max_iter {
        iterations += 1;
        let (fy, dist2) = loop {
            for ((yi, xi), gi) in y.iter_mut().zip(&x).zip(&g) {
                *yi = xi - step * gi;
            }
            mode.prox(&mut y, step);
            let mut lin = 0.0;
            let mut dist2 = 0.0;
            for ((yi, xi), gi) in y.iter().zip(&x).zip(&g) {
                let d = yi - xi;
                lin += gi * d;
                dist2 += d * d;
            }
            let fy = problem.value_unchecked(&y);
            // relative slack absorbs rounding once the decrease is at machine precision
            if fy <= f + lin + dist2 / (2.0 * step) + 1e-15 * f.abs() {
                break (fy, dist2);
            }
            step *= 0.5;
            if step < 1e-30 {
                break (f64::NAN, 0.0);
            }
        };
        if fy.is_nan() {
            break;
        }
        let progress = dist2.sqrt() / step;
        std::mem::swap(&mut x, &mut y);
        let (fx, gx) = problem.value_and_gradient_unchecked(&x);
        debug_assert!((fx - fy).abs() <= 1e-12 * fy.abs().max(1.0));
        f = fx;
        g = gx;
        if progress < settings.tol {
            converged = true;
            break;
        }
        step = (step * 2.0).min(settings.initial_step);
    }

    Ok(GriseSolution {
        u: problem.basis.u,
        basis: BasisDescriptor::of(&problem.basis),
        objective: f + mode.penalty(&x),
        iso: f,
        theta: x,
        iterations,
        converged,
        mode,
        settings: *settings,
    })
}

/// Fits every variable in parallel; results are ordered by `u`.
pub fn grise_fit_all(
    samples: &SampleSet,
    max_order: usize,
    kind: BasisKind,
    mode: GriseMode,
    settings: &SolverSettings,
) -> Result<Vec<GriseSolution>> {
    let data = samples.weighted();
    (0..samples.p())
        .into_par_iter()
        .map(|u| {
            let basis = build_partial_basis(samples.p(), samples.alphabet(), max_order, u, kind)?;
            let problem = GriseProblem::new(basis, data.clone())?;
            grise_fit(&problem, mode, settings)
        })
        .collect()
}

#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Euclidean projection onto `{x : ||x||_1 <= radius}` (sort-based).
pub fn project_l1_ball(v: &mut [f64], radius: f64) {
    if l1_norm(v) <= radius {
        return;
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (i, &m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - radius) / (i + 1) as f64;
        if m > candidate {
            shift = candidate;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = x.signum() * (x.abs() - shift).max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisTerm;
    use crate::generators::{gen_er_pairwise, StrengthDist};
    use crate::sampling::{exact_sample, model_distribution, EnumerationCap};
    use crate::{seeded_rng, EnergyModel};
    use rand::Rng;

    fn pair_problem(rows: &[Vec<u8>]) -> GriseProblem {
        let samples = SampleSet::from_rows(2, Alphabet::BINARY, rows).unwrap();
        let basis = PartialBasis {
            u: 0,
            p: 2,
            alphabet: Alphabet::BINARY,
            kind: BasisKind::Monomial,
            max_order: 2,
            terms: vec![BasisTerm::monomial(vec![0, 1], 0.0)],
        };
        GriseProblem::from_samples(basis, &samples).unwrap()
    }

    #[test]
    fn iso_value_examples() {
        let prob = pair_problem(&[vec![0, 0]]);
        assert_eq!(prob.iso_value(&[0.0]).unwrap(), 1.0);
        assert!((prob.iso_value(&[1.0]).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!(prob.iso_value(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn gradient_plug_in() {
        // one sample with spins (+1, -1): singleton g = +1, pair g = -1
        let samples = SampleSet::from_rows(2, Alphabet::BINARY, &[vec![0, 1]]).unwrap();
        let basis = build_partial_basis(2, Alphabet::BINARY, 2, 0, BasisKind::Monomial).unwrap();
        let prob = GriseProblem::from_samples(basis, &samples).unwrap();
        assert_eq!(prob.iso_gradient(&[0.0, 0.0]).unwrap(), vec![-1.0, 1.0]);
    }

    #[test]
    fn soft_threshold_primitive() {
        assert!((soft_threshold(0.5, 0.2) - 0.3).abs() < 1e-15);
        assert_eq!(soft_threshold(-0.1, 0.2), 0.0);
        assert!((soft_threshold(-0.5, 0.2) + 0.3).abs() < 1e-15);
    }

    #[test]
    fn projection_feasible_and_nearest_on_grid() {
        let mut rng = seeded_rng(4);
        for _ in 0..40 {
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let radius = 1.0;
            let mut proj = v.clone();
            project_l1_ball(&mut proj, radius);
            assert!(l1_norm(&proj) <= radius + 1e-12);
            let d_proj: f64 = proj.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum();
            // exhaustive search over a grid of feasible points
            let steps = 40;
            for i in -steps..=steps {
                for j in -steps..=steps {
                    for k in -steps..=steps {
                        let x = [
                            i as f64 / steps as f64,
                            j as f64 / steps as f64,
                            k as f64 / steps as f64,
                        ];
                        if l1_norm(&x) > radius {
                            continue;
                        }
                        let d: f64 = x.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum();
                        assert!(d_proj <= d + 1e-12, "grid point {x:?} beats projection");
                    }
                }
            }
        }
    }

    #[test]
    fn constraint_binds_on_degenerate_data() {
        let rows = vec![vec![0u8, 1, 0]; 50];
        let samples = SampleSet::from_rows(3, Alphabet::BINARY, &rows).unwrap();
        let basis = build_partial_basis(3, Alphabet::BINARY, 2, 0, BasisKind::Monomial).unwrap();
        let prob = GriseProblem::from_samples(basis, &samples).unwrap();
        let sol = grise_fit(
            &prob,
            GriseMode::Constrained { gamma: 2.0 },
            &SolverSettings::default(),
        )
        .unwrap();
        assert!(sol.converged);
        assert!((l1_norm(&sol.theta) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn naive_recomputation_agrees() {
        let model = gen_er_pairwise(5, 0.6, StrengthDist::uniform(-0.8, 0.8), 2).unwrap();
        let dist = model_distribution(&model, EnumerationCap::default()).unwrap();
        let samples = exact_sample(&dist, 400, 1).unwrap();
        let basis = build_partial_basis(5, Alphabet::BINARY, 3, 2, BasisKind::Monomial).unwrap();
        let prob = GriseProblem::from_samples(basis.clone(), &samples).unwrap();
        let streaming =
            GriseProblem::with_cache_limit(basis.clone(), samples.weighted(), 0).unwrap();
        assert!(!streaming.is_cached());
        let mut rng = seeded_rng(3);
        let theta: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let mut naive = 0.0;
        for row in samples.rows() {
            let mut s = 0.0;
            for (t, th) in basis.terms.iter().zip(&theta) {
                s += th * t.value(Alphabet::BINARY, row);
            }
            naive += (-s).exp();
        }
        naive /= samples.n() as f64;
        assert!((prob.iso_value(&theta).unwrap() - naive).abs() < 1e-12);
        assert!((streaming.iso_value(&theta).unwrap() - naive).abs() < 1e-12);
        // cached entries equal fresh evaluations
        for r in 0..prob.data().len() {
            for k in 0..basis.len() {
                assert_eq!(
                    prob.design_value(r, k),
                    basis.terms[k].value(Alphabet::BINARY, prob.data().row(r))
                );
            }
        }
    }

    #[test]
    fn penalized_zero_matches_loose_constraint() {
        let model = gen_er_pairwise(5, 0.7, StrengthDist::uniform(-0.6, 0.6), 8).unwrap();
        let dist = model_distribution(&model, EnumerationCap::default()).unwrap();
        let samples = exact_sample(&dist, 20_000, 2).unwrap();
        let basis = build_partial_basis(5, Alphabet::BINARY, 2, 1, BasisKind::Monomial).unwrap();
        let prob = GriseProblem::from_samples(basis, &samples).unwrap();
        let settings = SolverSettings::default();
        let a = grise_fit(&prob, GriseMode::Penalized { lambda: 0.0 }, &settings).unwrap();
        let b = grise_fit(&prob, GriseMode::Constrained { gamma: 1e6 }, &settings).unwrap();
        assert!(a.converged && b.converged);
        for (x, y) in a.theta.iter().zip(&b.theta) {
            assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn invalid_modes_rejected() {
        let prob = pair_problem(&[vec![0, 0]]);
        let s = SolverSettings::default();
        assert!(grise_fit(&prob, GriseMode::Constrained { gamma: 0.0 }, &s).is_err());
        assert!(grise_fit(&prob, GriseMode::Penalized { lambda: -1.0 }, &s).is_err());
    }

    #[test]
    fn hitting_iteration_cap_is_reported() {
        let model = EnergyModel::new(
            2,
            Alphabet::BINARY,
            vec![BasisTerm::monomial(vec![0, 1], 0.4)],
        )
        .unwrap();
        let dist = model_distribution(&model, EnumerationCap::default()).unwrap();
        let basis = build_partial_basis(2, Alphabet::BINARY, 2, 0, BasisKind::Monomial).unwrap();
        let prob = GriseProblem::new(basis, dist.to_weighted()).unwrap();
        let s = SolverSettings {
            max_iter: 1,
            ..SolverSettings::default()
        };
        let sol = grise_fit(&prob, GriseMode::Penalized { lambda: 0.0 }, &s).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn objective_never_increases() {
        let model = gen_er_pairwise(6, 0.5, StrengthDist::uniform(-0.9, 0.9), 12).unwrap();
        let dist = model_distribution(&model, EnumerationCap::default()).unwrap();
        let samples = exact_sample(&dist, 3000, 4).unwrap();
        let basis = build_partial_basis(6, Alphabet::BINARY, 3, 0, BasisKind::Monomial).unwrap();
        let prob = GriseProblem::from_samples(basis, &samples).unwrap();
        let mode = GriseMode::Penalized { lambda: 0.01 };
        let mut last = f64::INFINITY;
        for iters in [1, 2, 3, 5, 8, 13, 21, 34, 55] {
            let s = SolverSettings {
                max_iter: iters,
                ..SolverSettings::default()
            };
            let sol = grise_fit(&prob, mode, &s).unwrap();
            assert!(sol.objective <= last + 1e-14);
            last = sol.objective;
        }
    }
}
