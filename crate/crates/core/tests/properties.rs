//! Invariants checked over randomly generated models, tables and samples.

mod common;

use common::{indicator_pair_model, monomial_model};
use neurise_core::alphabet::spin;
use neurise_core::basis::{build_partial_basis, BasisTerm};
use neurise_core::energy::{energy_compare, flip, flip_loss_with, gauge_gap, EnergyNet};
use neurise_core::eval::{
    avg_conditional_error, fourier_expand, mask_of, tvd_empirical, tvd_exact,
    tvd_sample_vs_exact, CoefficientSpectrum, FourierCap,
};
use neurise_core::generators::{gen_er_pairwise, gen_one_d_model, StrengthDist};
use neurise_core::io::{format_samples, parse_model, parse_samples};
use neurise_core::neural::{Mlp, MlpSpec};
use neurise_core::samples::{decode_config, encode_config};
use neurise_core::sampling::{
    exact_distribution, exact_sample, gibbs_sample_chains, model_distribution, EnumerationCap,
    GibbsConfig,
};
use neurise_core::structure::{
    reconstruct_graph, structure_metrics, ranking_auc, InputWeightNorms, ThresholdMethod,
};
use neurise_core::{seeded_rng, Alphabet, BasisKind, EnergyModel, Error, SampleSet};
use proptest::prelude::*;

fn cap() -> EnumerationCap {
    EnumerationCap::default()
}

fn samples_strategy() -> impl Strategy<Value = SampleSet> {
    (1usize..6, 2usize..5).prop_flat_map(|(p, q)| {
        prop::collection::vec(0..q as u8, p..=p * 40).prop_map(move |mut data| {
            data.truncate(data.len() / p * p);
            SampleSet::new(p, Alphabet::new(q).unwrap(), data).unwrap()
        })
    })
}

fn model_terms(p: usize) -> impl Strategy<Value = Vec<(usize, f64)>> {
    prop::collection::vec((1usize..1 << p, -1.0f64..1.0), 0..8)
}

fn brute_conditional(dist: &[f64], u: usize, config: &[u8], q: usize) -> Vec<f64> {
    let mut c = config.to_vec();
    let w: Vec<f64> = (0..q as u8)
        .map(|s| {
            c[u] = s;
            dist[encode_config(&c, q)]
        })
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn centered_indicators_sum_to_zero(q in 2usize..8, label in 0u8..8) {
        let a = Alphabet::new(q).unwrap();
        let label = label % q as u8;
        let total: f64 = (0..q as u8).map(|s| a.indicator(label, s)).sum();
        prop_assert!(total.abs() < 1e-12);
        let mut v = vec![0.0; q];
        for s in 0..q as u8 {
            a.indicator_vector(s, &mut v);
            prop_assert!(v.iter().sum::<f64>().abs() < 1e-12);
            prop_assert!((v[s as usize] - (1.0 - 1.0 / q as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn basis_functions_are_centered_in_every_site(
        q in 2usize..5,
        order in 1usize..4,
        u in 0usize..4,
        seed in any::<u64>(),
    ) {
        let p = 4;
        let a = Alphabet::new(q).unwrap();
        let kind = if q == 2 { BasisKind::Monomial } else { BasisKind::Indicator };
        let basis = build_partial_basis(p, a, order, u, kind).unwrap();
        let mut config = vec![0u8; p];
        decode_config((seed % (q.pow(p as u32)) as u64) as usize, q, &mut config);
        for t in &basis.terms {
            for &site in &t.sites {
                let mut c = config.clone();
                let total: f64 = (0..q as u8)
                    .map(|s| {
                        c[site] = s;
                        t.value(a, &c)
                    })
                    .sum();
                prop_assert!(total.abs() < 1e-12, "{t:?} at site {site}");
            }
        }
    }

    #[test]
    fn parseval_and_reconstruction(p in 1usize..9, seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let dist = StrengthDist::uniform(-2.0, 2.0);
        let table: Vec<f64> = (0..1 << p).map(|_| dist.draw(&mut rng)).collect();
        let spectrum = CoefficientSpectrum::from_truth_table(table.clone()).unwrap();
        let energy: f64 = spectrum.coefficients().iter().map(|c| c * c).sum();
        let mean_sq = table.iter().map(|x| x * x).sum::<f64>() / table.len() as f64;
        prop_assert!((energy - mean_sq).abs() < 1e-10 * mean_sq.max(1.0));
        for (a, b) in spectrum.reconstruct().iter().zip(&table) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn fourier_recovers_monomial_strengths(p in 1usize..9, terms in model_terms(8)) {
        let model = monomial_model(p, &terms);
        let spectrum = fourier_expand(|c| model.energy(c), p, FourierCap::default()).unwrap();
        let mut expected = vec![0.0; 1 << p];
        for t in model.terms() {
            expected[mask_of(&t.sites)] = t.strength;
        }
        for (c, e) in spectrum.coefficients().iter().zip(&expected) {
            prop_assert!((c - e).abs() < 1e-12);
        }
    }

    #[test]
    fn samples_round_trip_through_text(s in samples_strategy()) {
        let text = format_samples(&s);
        let back = parse_samples(&text, None).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn models_round_trip_through_json(p in 2usize..7, terms in model_terms(6), qterms in prop::collection::vec((0usize..6, 0usize..6, 0u8..3, 0u8..3, -1.0f64..1.0), 0..6)) {
        for model in [monomial_model(p, &terms), indicator_pair_model(p, 3, &qterms)] {
            let text = serde_json::to_string(&model).unwrap();
            prop_assert_eq!(parse_model(&text).unwrap(), model);
        }
    }

    #[test]
    fn tvd_is_a_bounded_symmetric_distance(a in samples_strategy(), seed in any::<u64>()) {
        let (p, q) = (a.p(), a.alphabet().q());
        let mut rng = seeded_rng(seed);
        let b_data: Vec<u8> = (0..a.n() * p)
            .map(|_| (StrengthDist::uniform(0.0, q as f64).draw(&mut rng) as u8).min(q as u8 - 1))
            .collect();
        let b = SampleSet::new(p, a.alphabet(), b_data).unwrap();
        let ab = tvd_empirical(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - tvd_empirical(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(tvd_empirical(&a, &a).unwrap().abs() < 1e-12);
    }

    #[test]
    fn conditional_error_is_symmetric_and_matches_brute_force(
        t1 in prop::collection::vec((0usize..6, 0usize..6, 0u8..3, 0u8..3, -1.5f64..1.5), 0..8),
        t2 in prop::collection::vec((0usize..6, 0usize..6, 0u8..3, 0u8..3, -1.5f64..1.5), 0..8),
        q in 2usize..4,
    ) {
        let p = if q == 2 { 6 } else { 5 };
        let a = indicator_pair_model(p, q, &t1);
        let b = indicator_pair_model(p, q, &t2);
        let ab = avg_conditional_error(&a, &b, cap()).unwrap();
        prop_assert!((ab - avg_conditional_error(&b, &a, cap()).unwrap()).abs() < 1e-12);
        prop_assert!(avg_conditional_error(&a, &a, cap()).unwrap().abs() < 1e-12);

        // oracle: conditionals read off the joint tables
        let da = model_distribution(&a, cap()).unwrap();
        let db = model_distribution(&b, cap()).unwrap();
        let mut config = vec![0u8; p];
        let (mut total, mut count) = (0.0, 0usize);
        for u in 0..p {
            for idx in 0..da.num_states() {
                decode_config(idx, q, &mut config);
                if config[u] != 0 {
                    continue;
                }
                let x = brute_conditional(da.probs(), u, &config, q);
                let y = brute_conditional(db.probs(), u, &config, q);
                total += x.iter().zip(&y).map(|(s, t)| (s - t).abs()).sum::<f64>();
                count += 1;
            }
        }
        prop_assert!((ab - total / count as f64).abs() < 1e-10);
    }

    #[test]
    fn raising_the_threshold_only_removes_edges(
        values in prop::collection::vec(0.0f64..2.0, 30),
        t1 in 0.0f64..2.0,
        dt in 0.0f64..1.0,
    ) {
        let p = 6;
        let mut it = values.iter().cycle();
        let rows: Vec<Vec<f64>> = (0..p)
            .map(|u| (0..p).map(|v| if u == v { 0.0 } else { *it.next().unwrap() }).collect())
            .collect();
        let norms = InputWeightNorms::from_matrix(&rows).unwrap();
        let m = ThresholdMethod::Manual { tau: t1 };
        let low = reconstruct_graph(&norms, t1, m);
        let high = reconstruct_graph(&norms, t1 + dt, m);
        for e in high.edges() {
            prop_assert!(low.edges().contains(&e));
        }
        for u in 0..p {
            for v in &high.neighborhoods[u] {
                prop_assert!(low.neighborhoods[u].contains(v));
            }
        }
    }

    #[test]
    fn flip_loss_ignores_constant_shifts(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let p = 5;
        let mut rng = seeded_rng(seed);
        let net = EnergyNet::new(Mlp::init(EnergyNet::spec(p, neurise_core::neurise::NetShape::new(2, 6)).unwrap(), &mut rng).unwrap()).unwrap();
        let data = exact_sample(&model_distribution(&gen_one_d_model(p, 2, &[0.3, -0.5]).unwrap(), cap()).unwrap(), 200, seed).unwrap().weighted();
        let base = flip_loss_with(|c| net.energy(c), &data).unwrap();
        let shifted = flip_loss_with(|c| net.energy(c) + shift, &data).unwrap();
        prop_assert!((base - shifted).abs() < 1e-10 * base);

        // sum over sites of screening losses with H_u = (NN(x) - NN(flip_u x)) / 2
        let a = Alphabet::BINARY;
        let total: f64 = (0..p)
            .map(|u| {
                data.iter()
                    .map(|(row, w)| {
                        let h_u = 0.5 * (net.energy(row) - net.energy(&flip(row, u, a).unwrap()));
                        w * (-h_u).exp()
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            / data.weights().iter().sum::<f64>();
        prop_assert!((base - total).abs() < 1e-10);
    }

    #[test]
    fn zero_gauge_gap_means_equal_distributions(p in 1usize..5, seed in any::<u64>(), c in -5.0f64..5.0) {
        let mut rng = seeded_rng(seed);
        let spec = MlpSpec::new(p, 1, 4, 1).unwrap();
        let net = EnergyNet::new(Mlp::init(spec, &mut rng).unwrap()).unwrap();
        let table = net.energy_table(cap()).unwrap();
        // an explicit model carrying the network's full expansion, plus a shift
        let spectrum = CoefficientSpectrum::from_truth_table(table.clone()).unwrap();
        let terms = (1..1usize << p)
            .map(|mask| BasisTerm::monomial((0..p).filter(|i| mask >> i & 1 == 1).collect(), spectrum.coefficients()[mask]))
            .collect();
        let model = EnergyModel::new(p, Alphabet::BINARY, terms).unwrap();
        let gap = energy_compare(&net, &model, cap()).unwrap();
        prop_assert!(gap.max < 1e-10);
        let d1 = net.distribution(cap()).unwrap();
        let d2 = model_distribution(&model, cap()).unwrap();
        prop_assert!(tvd_exact(&d1, &d2).unwrap() < 1e-12);

        let shifted: Vec<f64> = table.iter().map(|x| x + c).collect();
        prop_assert!(gauge_gap(&shifted, &table).unwrap().max < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn gibbs_matches_exact_distribution(p in 2usize..7, seed in 0u64..1000) {
        let prob = 0.5;
        let model = gen_er_pairwise(p, prob, StrengthDist::SignedUniform { lo: 0.1, hi: 0.6 }, seed).unwrap();
        let dist = model_distribution(&model, cap()).unwrap();
        let s = gibbs_sample_chains(&model, 200_000, &GibbsConfig::new(seed), 4).unwrap();
        let tvd = tvd_sample_vs_exact(&s, &dist).unwrap();
        prop_assert!(tvd < 0.02, "p = {p}: tvd {tvd}");
    }

    #[test]
    fn same_seed_same_draws(p in 2usize..7, seed in any::<u64>()) {
        let model = gen_er_pairwise(p, 0.5, StrengthDist::uniform(0.3, 1.3), seed).unwrap();
        prop_assert_eq!(&model, &gen_er_pairwise(p, 0.5, StrengthDist::uniform(0.3, 1.3), seed).unwrap());
        let dist = model_distribution(&model, cap()).unwrap();
        prop_assert_eq!(exact_sample(&dist, 500, seed).unwrap(), exact_sample(&dist, 500, seed).unwrap());
        let g = GibbsConfig::new(seed);
        prop_assert_eq!(
            gibbs_sample_chains(&model, 300, &g, 3).unwrap(),
            gibbs_sample_chains(&model, 300, &g, 3).unwrap()
        );
    }
}

/// For a table-valued energy `t`, the population flip loss is stationary at
/// the true energy.
#[test]
fn population_energy_loss_is_stationary_at_truth() {
    let p = 4;
    let model = gen_one_d_model(p, 3, &[0.4, -0.7, 0.5]).unwrap();
    let dist = model_distribution(&model, cap()).unwrap();
    let data = dist.to_weighted();
    let truth: Vec<f64> = {
        let mut c = vec![0u8; p];
        (0..1 << p)
            .map(|i| {
                decode_config(i, 2, &mut c);
                model.energy(&c)
            })
            .collect()
    };
    let loss = |t: &[f64]| flip_loss_with(|c| t[encode_config(c, 2)], &data).unwrap();
    let grad = common::fd_gradient(loss, &truth, 1e-5);
    let worst = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    assert!(worst < 1e-8, "gradient {grad:?}");
    // and not stationary elsewhere
    let mut off = truth.clone();
    off[3] += 0.5;
    let grad = common::fd_gradient(loss, &off, 1e-5);
    assert!(grad.iter().any(|g| g.abs() > 1e-3));
}

#[test]
fn empty_graph_null_model() {
    let p = 5;
    let truth = EnergyModel::empty(p, Alphabet::BINARY).unwrap();
    let zeros = vec![vec![0.0; p]; p];
    let norms = InputWeightNorms::from_matrix(&zeros).unwrap();
    let result = reconstruct_graph(&norms, 0.0, ThresholdMethod::Manual { tau: 0.0 });
    assert!(result.edges().is_empty());
    let m = structure_metrics(&result, &truth).unwrap();
    assert_eq!(m.total_accuracy, 1.0);
    assert_eq!(m.edge_accuracy, 1.0);
    assert!(matches!(ranking_auc(&norms, &truth), Err(Error::Degenerate(_))));

    // samples of the empty model are uniform
    let dist = model_distribution(&truth, cap()).unwrap();
    assert!(dist.probs().iter().all(|&x| (x - 1.0 / 32.0).abs() < 1e-15));
    let exact = exact_distribution(|_| 0.0, p, Alphabet::BINARY, cap()).unwrap();
    assert_eq!(tvd_exact(&dist, &exact).unwrap(), 0.0);
}

#[test]
fn spin_convention_matches_fourier_indexing() {
    // coefficient of {0} for H = sigma_0 is 1 under 0 -> +1
    let spectrum = fourier_expand(|c| spin(c[0]), 2, FourierCap::default()).unwrap();
    assert_eq!(spectrum.coefficient(&[0]), 1.0);
    assert_eq!(spectrum.coefficient(&[1]), 0.0);
}
